//! Integer polymatroids given by a value oracle.
//!
//! Everything here works by exhaustive subset enumeration, so ground sets are
//! capped at [`MAX_GROUND_SET`] elements. Oracles are immutable and can be
//! shared read-only between concurrent auction runs.

mod families;
mod subset;

pub use families::{BipartiteOracle, Constraint, Good, MultiUnitOracle, TableOracle};
pub use subset::{Subset, Subsets, MAX_GROUND_SET};

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest ground set on which [`validate_oracle`] runs its exhaustive
/// `(S, T, e)` sweep (about `n * 3^n` oracle calls).
pub const EXHAUSTIVE_VALIDATION_LIMIT: usize = 12;

/// Value oracle of an integer-valued set function on `{0, .., n-1}`.
///
/// Implementations are expected to be monotone, submodular and zero on the
/// empty set; [`validate_oracle`] checks this.
pub trait SubmodularOracle: fmt::Debug + Send + Sync {
    fn ground_set_size(&self) -> usize;

    fn eval(&self, set: Subset) -> i64;

    fn ground_set(&self) -> Subset {
        Subset::full(self.ground_set_size())
    }
}

impl<T: SubmodularOracle + ?Sized> SubmodularOracle for &T {
    fn ground_set_size(&self) -> usize {
        (**self).ground_set_size()
    }

    fn eval(&self, set: Subset) -> i64 {
        (**self).eval(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonotoneViolation {
    pub smaller: Subset,
    pub larger: Subset,
}

/// `f(S+e) - f(S) < f(T+e) - f(T)` with `S ⊆ T`, `e ∉ T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubmodularViolation {
    pub s: Subset,
    pub t: Subset,
    pub e: usize,
}

/// Outcome of [`validate_oracle`]: `None` means the axiom holds, otherwise the
/// first counterexample found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub n: usize,
    pub zero_at_empty: Option<i64>,
    pub monotone: Option<MonotoneViolation>,
    pub submodular: Option<SubmodularViolation>,
    /// A buyer `i` with `f(N) != f(N \ i)`.
    pub competition: Option<usize>,
}

impl ValidationReport {
    /// Zero at empty, monotone and submodular.
    pub fn is_polymatroid(&self) -> bool {
        self.zero_at_empty.is_none() && self.monotone.is_none() && self.submodular.is_none()
    }

    pub fn passes_all(&self) -> bool {
        self.is_polymatroid() && self.competition.is_none()
    }

    /// The first failing axiom with a readable witness.
    pub fn first_failure(&self) -> Option<(&'static str, String)> {
        if let Some(v) = self.zero_at_empty {
            return Some(("zero-at-empty", format!("f(∅) = {v}")));
        }
        if let Some(m) = self.monotone {
            return Some(("monotone", format!("f({}) > f({})", m.smaller, m.larger)));
        }
        if let Some(s) = self.submodular {
            return Some((
                "submodular",
                format!("S = {}, T = {}, e = {}", s.s, s.t, s.e + 1),
            ));
        }
        if let Some(i) = self.competition {
            return Some(("competition", format!("f(N) != f(N \\ {})", i + 1)));
        }
        None
    }

    pub fn into_result(self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some((axiom, detail)) => Err(Error::Validation { axiom, detail }),
        }
    }
}

/// Exhaustively checks zero-at-empty, monotonicity, submodularity over every
/// `(S, T, e)` triple, and the competition condition `f(N) = f(N \ i)`.
pub fn validate_oracle(f: &dyn SubmodularOracle) -> Result<ValidationReport> {
    let n = f.ground_set_size();
    if n > EXHAUSTIVE_VALIDATION_LIMIT {
        return Err(Error::GroundSetTooLarge { n, limit: EXHAUSTIVE_VALIDATION_LIMIT });
    }
    let full = Subset::full(n);
    let table: Vec<i64> = full.subsets().map(|s| f.eval(s)).collect();
    let at = |s: Subset| table[s.bits() as usize];

    let zero_at_empty = Some(at(Subset::EMPTY)).filter(|&v| v != 0);

    let mut monotone = None;
    'mono: for s in full.subsets() {
        for e in full.difference(s).iter() {
            if at(s) > at(s.with(e)) {
                monotone = Some(MonotoneViolation { smaller: s, larger: s.with(e) });
                break 'mono;
            }
        }
    }

    let mut submodular = None;
    'sub: for e in 0..n {
        for t in full.without(e).subsets() {
            let gain_t = at(t.with(e)) - at(t);
            for s in t.subsets() {
                if at(s.with(e)) - at(s) < gain_t {
                    submodular = Some(SubmodularViolation { s, t, e });
                    break 'sub;
                }
            }
        }
    }

    Ok(ValidationReport {
        n,
        zero_at_empty,
        monotone,
        submodular,
        competition: competition_violation(f),
    })
}

/// First buyer whose removal changes `f(N)`, if any. Needs only `n + 1` calls.
pub fn competition_violation(f: &dyn SubmodularOracle) -> Option<usize> {
    let full = f.ground_set();
    let total = f.eval(full);
    (0..f.ground_set_size()).find(|&i| f.eval(full.without(i)) != total)
}

/// Clinched vector `x` and demand vector `d` against an oracle: the data that
/// defines the remnant supply polymatroid `{u ≥ 0 : x + u ∈ P, u ≤ d}`.
#[derive(Debug, Clone, Copy)]
pub struct RemnantContext<'a> {
    oracle: &'a dyn SubmodularOracle,
    x: &'a [i64],
    d: &'a [i64],
}

impl<'a> RemnantContext<'a> {
    /// Checks dimensions and nonnegativity. Membership of `x` in `P(f)` is a
    /// precondition; see [`RemnantContext::validated`].
    pub fn new(oracle: &'a dyn SubmodularOracle, x: &'a [i64], d: &'a [i64]) -> Result<Self> {
        let n = oracle.ground_set_size();
        if n > MAX_GROUND_SET {
            return Err(Error::SubsetLimit { size: n, limit: MAX_GROUND_SET });
        }
        if x.len() != n || d.len() != n {
            return Err(Error::InvalidInstance(format!(
                "context vectors must have length {n} (x: {}, d: {})",
                x.len(),
                d.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| x[i] < 0 || d[i] < 0) {
            return Err(Error::InvalidInstance(format!("negative entry for buyer {}", i + 1)));
        }
        Ok(RemnantContext { oracle, x, d })
    }

    /// Like [`RemnantContext::new`] but also requires `x ∈ P(f)`.
    pub fn validated(oracle: &'a dyn SubmodularOracle, x: &'a [i64], d: &'a [i64]) -> Result<Self> {
        let ctx = Self::new(oracle, x, d)?;
        if !membership(oracle, x)? {
            return Err(Error::NotInPolymatroid(format!("{x:?}")));
        }
        Ok(ctx)
    }

    pub fn oracle(&self) -> &'a dyn SubmodularOracle {
        self.oracle
    }

    pub fn x(&self) -> &'a [i64] {
        self.x
    }

    pub fn d(&self) -> &'a [i64] {
        self.d
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Remnant supply `f_{x,d}(S) = min_{S' ⊆ S} { f(S') - x(S') + d(S \ S') }`.
    pub fn f_xd(&self, s: Subset) -> Result<i64> {
        self.f_xd_with_minimizer(s).map(|(v, _)| v)
    }

    /// The value together with the smallest-bitmask minimizing `S'`.
    pub fn f_xd_with_minimizer(&self, s: Subset) -> Result<(i64, Subset)> {
        if s.len() > MAX_GROUND_SET {
            return Err(Error::SubsetLimit { size: s.len(), limit: MAX_GROUND_SET });
        }
        let d_total = s.sum(self.d);
        let mut best = (i64::MAX, Subset::EMPTY);
        for inner in s.subsets() {
            let value = self.oracle.eval(inner) + d_total
                - inner.iter().map(|i| self.x[i] + self.d[i]).sum::<i64>();
            if value < best.0 {
                best = (value, inner);
            }
        }
        Ok(best)
    }
}

/// `x ≥ 0` and `x(S) ≤ f(S)` for every `S`.
pub fn membership(f: &dyn SubmodularOracle, x: &[i64]) -> Result<bool> {
    membership_scaled(f, x, 1)
}

/// Membership of the rational vector `x / denom` (`denom > 0`), tested as
/// `x(S) ≤ denom * f(S)`.
pub fn membership_scaled(f: &dyn SubmodularOracle, x: &[i64], denom: i64) -> Result<bool> {
    assert!(denom > 0, "denominator must be positive");
    let n = f.ground_set_size();
    assert_eq!(x.len(), n, "vector length must match the ground set");
    if n > MAX_GROUND_SET {
        return Err(Error::SubsetLimit { size: n, limit: MAX_GROUND_SET });
    }
    if x.iter().any(|&v| v < 0) {
        return Ok(false);
    }
    Ok(f.ground_set().subsets().all(|s| s.sum(x) <= denom * f.eval(s)))
}

/// Whether `j ∈ dep(x, i)`: some `α > 0` keeps `x + α(χ_i − χ_j)` inside
/// `P(f)`. For an integer point of an integer polymatroid it suffices to test
/// `α = 1`. Returns `true` for `i == j` (the zero move).
pub fn dep(f: &dyn SubmodularOracle, x: &[i64], i: usize, j: usize) -> Result<bool> {
    if !membership(f, x)? {
        return Err(Error::NotInPolymatroid(format!("{x:?}")));
    }
    if i == j {
        return Ok(true);
    }
    let mut moved = x.to_vec();
    moved[i] += 1;
    moved[j] -= 1;
    membership(f, &moved)
}

/// `sat(x)`: buyers whose coordinate cannot grow at all inside `P(f)`.
pub fn saturated(f: &dyn SubmodularOracle, x: &[i64]) -> Result<Subset> {
    if !membership(f, x)? {
        return Err(Error::NotInPolymatroid(format!("{x:?}")));
    }
    let mut sat = Subset::EMPTY;
    for i in 0..x.len() {
        let mut grown = x.to_vec();
        grown[i] += 1;
        if !membership(f, &grown)? {
            sat = sat.with(i);
        }
    }
    Ok(sat)
}

/// Exact rank function of the remnant supply polymatroid for an arbitrary
/// `x ∈ P(f)`: `min_{S' ⊆ S} { min_{S'' ⊇ S'} (f(S'') − x(S'')) + d(S \ S') }`.
///
/// [`RemnantContext::f_xd`] drops the inner minimization, which is exact on
/// every state the auction reaches but not for arbitrary `x`.
#[derive(Debug, Clone)]
pub struct RemnantRank {
    d: Vec<i64>,
    /// `min_{S'' ⊇ S'} (f(S'') − x(S''))`, indexed by `S'`.
    superset_min: Vec<i64>,
}

impl RemnantRank {
    pub fn new(ctx: &RemnantContext<'_>) -> Self {
        let n = ctx.n();
        let full = Subset::full(n);
        let mut superset_min: Vec<i64> =
            full.subsets().map(|s| ctx.oracle().eval(s) - s.sum(ctx.x())).collect();
        for i in 0..n {
            for s in full.without(i).subsets() {
                let up = superset_min[s.with(i).bits() as usize];
                let here = &mut superset_min[s.bits() as usize];
                *here = (*here).min(up);
            }
        }
        RemnantRank { d: ctx.d().to_vec(), superset_min }
    }

    pub fn eval(&self, s: Subset) -> i64 {
        let d_total = s.sum(&self.d);
        s.subsets()
            .map(|inner| self.superset_min[inner.bits() as usize] + d_total - inner.sum(&self.d))
            .min()
            .expect("at least the empty subset")
    }
}

/// Clinch amount of buyer `i` straight from the definition: the largest
/// integer `w ≤ d_i` such that fixing `u_i = w` leaves the other buyers'
/// feasible transactions unchanged, i.e. `min(r(S+i) − w, r(S))` equals
/// `min(r(S+i), r(S))` for all `S ⊆ N \ i`, where `r` is the exact remnant
/// rank ([`RemnantRank`]).
///
/// Test oracle only; the engine uses `f_xd(N) − f_xd(N \ i)`.
pub fn clinch_brute_oracle(ctx: &RemnantContext<'_>, i: usize) -> Result<i64> {
    let n = ctx.n();
    if n > MAX_GROUND_SET {
        return Err(Error::SubsetLimit { size: n, limit: MAX_GROUND_SET });
    }
    let rank = RemnantRank::new(ctx);
    let others = Subset::full(n).without(i);
    let pairs: Vec<(i64, i64)> = others.subsets().map(|s| (rank.eval(s.with(i)), rank.eval(s))).collect();
    let unchanged = |w: i64| pairs.iter().all(|&(with_i, without)| (with_i - w).min(without) == with_i.min(without));
    let mut best = 0;
    for w in 1..=ctx.d()[i] {
        if unchanged(w) {
            best = w;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Calls `visit` on every point of `P(f) ∩ Z^N`, in lexicographic order.
///
/// The search box is `[0, f({i})]^n`; its size must not exceed `box_limit`.
pub fn for_each_integer_point(
    f: &dyn SubmodularOracle,
    box_limit: u128,
    mut visit: impl FnMut(&[i64]),
) -> Result<()> {
    let n = f.ground_set_size();
    if n > MAX_GROUND_SET {
        return Err(Error::SubsetLimit { size: n, limit: MAX_GROUND_SET });
    }
    let caps: Vec<i64> = (0..n).map(|i| f.eval(Subset::singleton(i))).collect();
    let box_size = caps
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c.max(0) as u128 + 1))
        .unwrap_or(u128::MAX);
    if box_size > box_limit {
        return Err(Error::GuardExceeded { what: "integer box size", value: box_size, limit: box_limit });
    }
    let mut x = vec![0i64; n];
    descend(f, &caps, 0, &mut x, &mut visit);
    Ok(())
}

fn descend(f: &dyn SubmodularOracle, caps: &[i64], k: usize, x: &mut [i64], visit: &mut impl FnMut(&[i64])) {
    if k == caps.len() {
        visit(x);
        return;
    }
    // constraints whose largest member is k
    let prefix = Subset::full(k);
    for value in 0..=caps[k] {
        x[k] = value;
        let ok = prefix.subsets().all(|s| {
            let s = s.with(k);
            s.sum(x) <= f.eval(s)
        });
        if !ok {
            // larger values only violate more
            break;
        }
        descend(f, caps, k + 1, x, visit);
    }
    x[k] = 0;
}
