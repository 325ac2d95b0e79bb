//! Social and liquid welfare, and the liquid-welfare optimal allocation.
//!
//! The optimum of `max Σ min(v_i x_i, B_i)` over `P(f) ∩ Z^N` is found by
//! splitting each buyer into two virtual buyers with linear utility and
//! integer caps, then running the polymatroid greedy algorithm over them in
//! descending valuation order.

use std::cmp::Ordering;

use num_traits::Zero;
use serde::Serialize;

use crate::auction::AuctionInstance;
use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::polymatroid::{self, Subset, SubmodularOracle, MAX_GROUND_SET};
use crate::rational::{self, Rational};

fn check_member(instance: &AuctionInstance, x: &[i64]) -> Result<()> {
    if x.len() != instance.n() {
        return Err(Error::InvalidInstance(format!(
            "allocation has {} entries for {} buyers",
            x.len(),
            instance.n()
        )));
    }
    if !polymatroid::membership(instance.oracle(), x)? {
        return Err(Error::NotInPolymatroid(format!("{x:?}")));
    }
    Ok(())
}

fn units(x: i64) -> Rational {
    Rational::from_integer(x.into())
}

/// `Σ v_i x_i`.
pub fn social_welfare(instance: &AuctionInstance, x: &[i64]) -> Result<Rational> {
    check_member(instance, x)?;
    Ok(instance
        .buyers()
        .iter()
        .zip(x)
        .fold(rational::zero(), |acc, (b, &xi)| acc + &b.valuation * units(xi)))
}

/// `Σ min(v_i x_i, B_i)`.
pub fn liquid_welfare(instance: &AuctionInstance, x: &[i64]) -> Result<Rational> {
    check_member(instance, x)?;
    Ok(liquid_welfare_unchecked(instance, x))
}

fn liquid_welfare_unchecked(instance: &AuctionInstance, x: &[i64]) -> Rational {
    instance.buyers().iter().zip(x).fold(rational::zero(), |acc, (b, &xi)| {
        let value = &b.valuation * units(xi);
        acc + value.min(b.budget.clone())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    A,
    B,
}

/// Half of a buyer: part `a` carries the whole-unit share of the budget at
/// the true valuation, part `b` the leftover remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VirtualBuyer {
    #[serde(serialize_with = "one_based")]
    pub parent: usize,
    pub part: Part,
    #[serde(with = "rational::as_string")]
    pub valuation: Rational,
    #[serde(with = "rational::as_string")]
    pub budget: Rational,
}

fn one_based<S: serde::Serializer>(i: &usize, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(*i as u64 + 1)
}

impl VirtualBuyer {
    /// `B / v`, an integer by construction.
    pub fn cap(&self) -> i64 {
        rational::floor_i64(&(&self.budget / &self.valuation))
    }
}

/// The two virtual buyers of one buyer, part `a` first.
pub fn split_buyer(parent: usize, valuation: &Rational, budget: &Rational) -> [VirtualBuyer; 2] {
    let whole = (budget / valuation).floor();
    let budget_a = &whole * valuation;
    let remainder = budget - &budget_a;
    let (valuation_b, budget_b) = if remainder.is_zero() {
        (valuation / rational::int(2), rational::zero())
    } else {
        (remainder.clone(), remainder)
    };
    [
        VirtualBuyer { parent, part: Part::A, valuation: valuation.clone(), budget: budget_a },
        VirtualBuyer { parent, part: Part::B, valuation: valuation_b, budget: budget_b },
    ]
}

/// All `2n` virtual buyers by descending valuation; ties by parent, then part
/// `a` before part `b`.
pub fn split_virtual(instance: &AuctionInstance) -> Vec<VirtualBuyer> {
    let mut all: Vec<VirtualBuyer> = instance
        .buyers()
        .iter()
        .enumerate()
        .flat_map(|(i, b)| split_buyer(i, &b.valuation, &b.budget))
        .collect();
    all.sort_by(canonical_order);
    all
}

fn canonical_order(a: &VirtualBuyer, b: &VirtualBuyer) -> Ordering {
    b.valuation
        .cmp(&a.valuation)
        .then(a.parent.cmp(&b.parent))
        .then(a.part.cmp(&b.part))
}

/// `min(v x, B)` written through the two parts:
/// `v_a · min(x, cap_a) + v_b · min(max(x − cap_a, 0), cap_b)`.
pub fn split_liquid_value(valuation: &Rational, budget: &Rational, x: i64) -> Rational {
    let [a, b] = split_buyer(0, valuation, budget);
    let cap_a = a.cap();
    let first = x.min(cap_a);
    let second = (x - cap_a).max(0).min(b.cap());
    &a.valuation * units(first) + &b.valuation * units(second)
}

/// `f'(S') = f(Γ(S'))` where `Γ` maps virtual buyers to their parents.
#[derive(Debug)]
pub struct LiftedOracle<'a> {
    base: &'a dyn SubmodularOracle,
    parents: Vec<usize>,
}

impl<'a> LiftedOracle<'a> {
    /// `parents[k]` is the real buyer behind virtual buyer `k`.
    pub fn new(base: &'a dyn SubmodularOracle, parents: Vec<usize>) -> Self {
        assert!(parents.iter().all(|&p| p < base.ground_set_size()), "parent out of range");
        LiftedOracle { base, parents }
    }

    /// `Γ(S')`.
    pub fn parents_of(&self, set: Subset) -> Subset {
        set.iter().map(|k| self.parents[k]).collect()
    }
}

impl SubmodularOracle for LiftedOracle<'_> {
    fn ground_set_size(&self) -> usize {
        self.parents.len()
    }

    fn eval(&self, set: Subset) -> i64 {
        self.base.eval(self.parents_of(set))
    }
}

/// The lifted oracle over [`split_virtual`]'s order.
pub fn lifted_oracle(instance: &AuctionInstance) -> LiftedOracle<'_> {
    LiftedOracle::new(instance.oracle(), split_virtual(instance).iter().map(|v| v.parent).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LwOptResult {
    /// The virtual buyers, in the canonical order `z_star` is indexed by.
    pub virtual_buyers: Vec<VirtualBuyer>,
    pub z_star: Vec<i64>,
    pub x_star: Vec<i64>,
    #[serde(with = "rational::as_string")]
    pub lw_value: Rational,
}

/// Greedy liquid-welfare optimum over the canonical virtual-buyer order.
pub fn lw_optimal(instance: &AuctionInstance) -> Result<LwOptResult> {
    let n = 2 * instance.n();
    lw_optimal_ordered(instance, &(0..n).collect::<Vec<_>>())
}

/// Greedy over a custom processing order of the canonical virtual buyers.
/// The order must be a permutation with non-increasing valuations; it only
/// differs from the default in how equal valuations are broken.
pub fn lw_optimal_ordered(instance: &AuctionInstance, order: &[usize]) -> Result<LwOptResult> {
    let virtuals = split_virtual(instance);
    let m = virtuals.len();
    if m > MAX_GROUND_SET {
        return Err(Error::GuardExceeded { what: "virtual buyers", value: m as u128, limit: MAX_GROUND_SET as u128 });
    }
    let mut seen = vec![false; m];
    if order.len() != m || order.iter().any(|&k| k >= m || std::mem::replace(&mut seen[k], true)) {
        return Err(Error::InvalidInstance(format!("{order:?} is not a permutation of the virtual buyers")));
    }
    if order.windows(2).any(|w| virtuals[w[0]].valuation < virtuals[w[1]].valuation) {
        return Err(Error::InvalidInstance("greedy order must have non-increasing valuations".into()));
    }

    let z_star = greedy(instance.oracle(), &virtuals, order);
    let mut x_star = vec![0i64; instance.n()];
    let mut lw_value = rational::zero();
    for (v, &z) in virtuals.iter().zip(&z_star) {
        x_star[v.parent] += z;
        lw_value += &v.valuation * units(z);
    }
    Ok(LwOptResult { virtual_buyers: virtuals, z_star, x_star, lw_value })
}

/// Greedy increments: `z_k = min(cap_k, min_{H ⊆ processed} f(Γ(H) ∪ parent_k) − z(H))`.
fn greedy(f: &dyn SubmodularOracle, virtuals: &[VirtualBuyer], order: &[usize]) -> Vec<i64> {
    // Position-indexed prefix tables: for every H ⊆ {first k positions},
    // Γ(H) and z*(H), doubled as each position is fixed.
    let mut gamma: Vec<Subset> = vec![Subset::EMPTY];
    let mut z_sum: Vec<i64> = vec![0];
    let mut z_star = vec![0i64; virtuals.len()];
    for &k in order {
        let parent = Subset::singleton(virtuals[k].parent);
        let best_prefix = gamma
            .iter()
            .zip(&z_sum)
            .map(|(g, z)| f.eval(g.union(parent)) - z)
            .min()
            .expect("empty prefix set is always present");
        let z = virtuals[k].cap().min(best_prefix);
        debug_assert!(z >= 0, "greedy increment must be nonnegative");
        z_star[k] = z;
        let len = gamma.len();
        for h in 0..len {
            gamma.push(gamma[h].union(parent));
            z_sum.push(z_sum[h] + z);
        }
    }
    z_star
}

/// Exhaustive maximum of the liquid welfare over `P(f) ∩ Z^N`.
pub fn lw_brute(instance: &AuctionInstance, guards: &Guards) -> Result<Rational> {
    lw_brute_with_witness(instance, guards).map(|(value, _)| value)
}

/// Maximum and the lexicographically first allocation attaining it.
pub fn lw_brute_with_witness(instance: &AuctionInstance, guards: &Guards) -> Result<(Rational, Vec<i64>)> {
    guards.check_lattice(&instance.capacities())?;
    let mut best: Option<(Rational, Vec<i64>)> = None;
    polymatroid::for_each_integer_point(instance.oracle(), guards.max_lattice, |x| {
        let value = liquid_welfare_unchecked(instance, x);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, x.to_vec()));
        }
    })?;
    Ok(best.expect("the zero allocation is always feasible"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::Buyer;
    use crate::polymatroid::{Constraint, MultiUnitOracle};
    use crate::rational::{int, ratio};

    fn multi_unit(v: &[Rational], b: &[Rational], supply: i64) -> AuctionInstance {
        let buyers = v.iter().zip(b).map(|(v, b)| Buyer::truthful(v.clone(), b.clone())).collect();
        AuctionInstance::new(buyers, Constraint::MultiUnit(MultiUnitOracle::new(v.len(), supply))).unwrap()
    }

    fn worst_case(k: i64) -> AuctionInstance {
        multi_unit(&[int(1), int(k)], &[int(k), int(k)], k)
    }

    #[test]
    fn welfare_examples() {
        let inst = worst_case(3);
        assert_eq!(social_welfare(&inst, &[0, 3]).unwrap(), int(9));
        assert_eq!(social_welfare(&inst, &[0, 0]).unwrap(), int(0));
        assert_eq!(liquid_welfare(&inst, &[0, 3]).unwrap(), int(3));
        assert_eq!(liquid_welfare(&inst, &[2, 1]).unwrap(), int(5));
        assert!(matches!(liquid_welfare(&inst, &[2, 2]), Err(Error::NotInPolymatroid(_))));
        let envy = multi_unit(&[int(10), int(2)], &[int(1), int(1)], 1);
        assert_eq!(social_welfare(&envy, &[0, 1]).unwrap(), int(2));
    }

    #[test]
    fn split_examples() {
        let [a, b] = split_buyer(0, &int(3), &int(7));
        assert_eq!((a.valuation, a.budget), (int(3), int(6)));
        assert_eq!((b.valuation, b.budget), (int(1), int(1)));
        let [a, b] = split_buyer(0, &int(2), &int(4));
        assert_eq!((a.valuation, a.budget), (int(2), int(4)));
        assert_eq!((b.valuation, b.budget), (int(1), int(0)));
        let [a, b] = split_buyer(0, &int(5), &int(3));
        assert_eq!((a.valuation, a.budget), (int(5), int(0)));
        assert_eq!(b.cap(), 1);
        assert_eq!((b.valuation, b.budget), (int(3), int(3)));
    }

    #[test]
    fn virtual_order_breaks_ties_by_parent_then_part() {
        // buyer 1: v=2, B=3 -> a(2,2), b(1,1); buyer 2: v=2, B=4 -> a(2,4), b(1,0)
        let inst = multi_unit(&[int(2), int(2)], &[int(3), int(4)], 2);
        let order: Vec<(usize, Part)> = split_virtual(&inst).iter().map(|v| (v.parent, v.part)).collect();
        assert_eq!(order, vec![(0, Part::A), (1, Part::A), (0, Part::B), (1, Part::B)]);
    }

    #[test]
    fn lifted_oracle_collapses_parts() {
        let inst = worst_case(3);
        let lifted = lifted_oracle(&inst);
        let virtuals = split_virtual(&inst);
        let pos = |parent, part| virtuals.iter().position(|v| v.parent == parent && v.part == part).unwrap();
        let both_of_one = Subset::EMPTY.with(pos(0, Part::A)).with(pos(0, Part::B));
        assert_eq!(lifted.eval(both_of_one), 3);
        assert_eq!(lifted.eval(Subset::EMPTY), 0);
        assert_eq!(lifted.eval(Subset::EMPTY.with(pos(0, Part::A)).with(pos(1, Part::B))), 3);
        assert!(polymatroid::validate_oracle(&lifted).unwrap().is_polymatroid());
    }

    #[test]
    fn lw_optimal_examples() {
        let res = lw_optimal(&worst_case(3)).unwrap();
        assert_eq!(res.x_star, vec![2, 1]);
        assert_eq!(res.lw_value, int(5));

        // a lone buyer (no competition, so only the greedy core applies)
        let lone = MultiUnitOracle::new(1, 2);
        let parts = split_buyer(0, &int(2), &int(3));
        assert_eq!(greedy(&lone, &parts, &[0, 1]), vec![1, 1]);

        let envy = multi_unit(&[int(10), int(2)], &[int(1), int(1)], 1);
        let res = lw_optimal(&envy).unwrap();
        assert_eq!(res.lw_value, int(1));
        assert_eq!(res.x_star, vec![1, 0]);
    }

    #[test]
    fn lw_brute_examples() {
        let g = Guards::default();
        assert_eq!(lw_brute(&worst_case(3), &g).unwrap(), int(5));
        let rich = multi_unit(&[int(1), int(1)], &[int(10), int(10)], 4);
        assert_eq!(lw_brute(&rich, &g).unwrap(), int(4));
        let (value, witness) = lw_brute_with_witness(&worst_case(4), &g).unwrap();
        assert_eq!((value, witness), (int(7), vec![3, 1]));
    }

    #[test]
    fn split_identity_on_a_grid() {
        for (v, b) in [(int(3), int(7)), (int(2), int(4)), (int(5), int(3)), (ratio(3, 2), ratio(7, 3))] {
            for x in 0..8 {
                let direct = (&v * units(x)).min(b.clone());
                assert_eq!(split_liquid_value(&v, &b, x), direct, "v={v} B={b} x={x}");
            }
        }
    }

    /// `f'_{d'}(S) = min_{S' ⊆ S} { f'(S \ S') + d'(S') }`.
    fn lifted_remnant(lifted: &LiftedOracle<'_>, caps: &[i64], s: Subset) -> i64 {
        s.subsets().map(|inner| lifted.eval(s.difference(inner)) + inner.sum(caps)).min().unwrap()
    }

    #[test]
    fn greedy_matches_truncated_rank_form() {
        for k in 2..=6 {
            for inst in [worst_case(k), multi_unit(&[int(3), ratio(5, 2), int(1)], &[int(7), int(5), int(2)], k)] {
                let res = lw_optimal(&inst).unwrap();
                let lifted = lifted_oracle(&inst);
                let caps: Vec<i64> = res.virtual_buyers.iter().map(VirtualBuyer::cap).collect();
                let mut prefix_sum = 0;
                for k in 0..caps.len() {
                    let prefix = Subset::full(k + 1);
                    assert_eq!(res.z_star[k], lifted_remnant(&lifted, &caps, prefix) - prefix_sum);
                    prefix_sum += res.z_star[k];
                }
            }
        }
    }
}
