//! The polyhedral clinching auction.
//!
//! A single price clock `c` ascends. Each buyer holds a demand `d_i`, the
//! number of further units it would still take at price `c`. Whenever demands
//! change, every buyer clinches the units the others can no longer absorb:
//! `δ_i = f_{x,d}(N) − f_{x,d}(N \ i)`. A buyer leaves once its demand reaches
//! zero, either because the clock hit its bid (`Line5`), its budget ran short
//! (`Line9`), or it clinched everything it wanted (`Clinch`).

use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::polymatroid::{self, Constraint, Subset, SubmodularOracle, EXHAUSTIVE_VALIDATION_LIMIT};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buyer {
    pub valuation: Rational,
    /// Reported valuation; equal to `valuation` for a truthful buyer.
    pub bid: Rational,
    pub budget: Rational,
}

impl Buyer {
    pub fn truthful(valuation: Rational, budget: Rational) -> Self {
        Buyer { bid: valuation.clone(), valuation, budget }
    }
}

/// Buyers plus the polymatroid constraint on what can be allocated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionInstance {
    buyers: Vec<Buyer>,
    constraint: Constraint,
}

impl AuctionInstance {
    /// Validates positivity, the buyer-count guard and the oracle axioms,
    /// including competition (`f(N) = f(N \ i)` for every `i`).
    pub fn new(buyers: Vec<Buyer>, constraint: Constraint) -> Result<Self> {
        Self::with_guards(buyers, constraint, &Guards::default())
    }

    pub fn with_guards(buyers: Vec<Buyer>, constraint: Constraint, guards: &Guards) -> Result<Self> {
        let n = buyers.len();
        if n == 0 {
            return Err(Error::InvalidInstance("at least one buyer is required".into()));
        }
        guards.check_buyers(n)?;
        if constraint.ground_set_size() != n {
            return Err(Error::InvalidInstance(format!(
                "constraint is over {} buyers but {n} buyers were given",
                constraint.ground_set_size()
            )));
        }
        for (i, b) in buyers.iter().enumerate() {
            for (name, value) in [("valuation", &b.valuation), ("bid", &b.bid), ("budget", &b.budget)] {
                if !value.is_positive() {
                    return Err(Error::InvalidInstance(format!("buyer {}: {name} must be positive", i + 1)));
                }
            }
        }
        if n <= EXHAUSTIVE_VALIDATION_LIMIT {
            polymatroid::validate_oracle(&constraint)?.into_result()?;
        } else if let Some(i) = polymatroid::competition_violation(&constraint) {
            return Err(Error::Validation {
                axiom: "competition",
                detail: format!("f(N) != f(N \\ {})", i + 1),
            });
        }
        guards.check_supply(constraint.eval(constraint.ground_set()))?;
        Ok(AuctionInstance { buyers, constraint })
    }

    pub fn n(&self) -> usize {
        self.buyers.len()
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    pub fn oracle(&self) -> &dyn SubmodularOracle {
        self.constraint.as_oracle()
    }

    /// `f(N)`.
    pub fn supply(&self) -> i64 {
        self.constraint.eval(self.constraint.ground_set())
    }

    /// `f({i})` for every buyer.
    pub fn capacities(&self) -> Vec<i64> {
        (0..self.n()).map(|i| self.constraint.eval(Subset::singleton(i))).collect()
    }

    pub fn valuations(&self) -> Vec<Rational> {
        self.buyers.iter().map(|b| b.valuation.clone()).collect()
    }

    pub fn budgets(&self) -> Vec<Rational> {
        self.buyers.iter().map(|b| b.budget.clone()).collect()
    }

    /// The same market with buyer `i` reporting `bid` instead.
    pub fn with_bid(&self, i: usize, bid: Rational) -> Result<Self> {
        if !bid.is_positive() {
            return Err(Error::InvalidInstance(format!("buyer {}: bid must be positive", i + 1)));
        }
        let mut next = self.clone();
        next.buyers[i].bid = bid;
        Ok(next)
    }

    /// Every bid reset to the true valuation.
    pub fn truthful(&self) -> Self {
        let mut next = self.clone();
        for b in &mut next.buyers {
            b.bid = b.valuation.clone();
        }
        next
    }
}

/// Snapshot of the auction: clinched units, payments, demands and the clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionState {
    pub x: Vec<i64>,
    pub p: Vec<Rational>,
    pub d: Vec<i64>,
    pub c: Rational,
}

impl AuctionState {
    /// `x = 0`, `p = 0`, `d_i = f({i}) + 1`, `c = 0`.
    pub fn initial(instance: &AuctionInstance) -> Self {
        let n = instance.n();
        AuctionState {
            x: vec![0; n],
            p: vec![rational::zero(); n],
            d: instance.capacities().into_iter().map(|cap| cap + 1).collect(),
            c: rational::zero(),
        }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.d[i] > 0
    }

    pub fn active(&self) -> Subset {
        (0..self.d.len()).filter(|&i| self.is_active(i)).collect()
    }

    /// `B_i − p_i`.
    pub fn remaining_budget(&self, instance: &AuctionInstance, i: usize) -> Rational {
        &instance.buyers[i].budget - &self.p[i]
    }

    /// Whether buyer `i` is exactly budget-tight at the current price:
    /// `d_i · c = B_i − p_i`. Never true at `c = 0`.
    fn budget_tight(&self, instance: &AuctionInstance, i: usize) -> bool {
        !self.c.is_zero() && Rational::from_integer(self.d[i].into()) * &self.c == self.remaining_budget(instance, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DropCause {
    /// The clock reached the buyer's bid.
    #[serde(rename = "LINE5")]
    Line5,
    /// A budget-driven demand decrement brought the demand to zero.
    #[serde(rename = "LINE9")]
    Line9,
    /// The buyer clinched its whole remaining demand.
    #[serde(rename = "CLINCH")]
    Clinch,
}

impl fmt::Display for DropCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropCause::Line5 => "LINE5",
            DropCause::Line9 => "LINE9",
            DropCause::Clinch => "CLINCH",
        })
    }
}

fn one_based<S: Serializer>(i: &usize, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(*i as u64 + 1)
}

fn from_one_based<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    match usize::deserialize(d)? {
        0 => Err(serde::de::Error::custom("buyer ids start at 1")),
        id => Ok(id - 1),
    }
}

/// One step of the auction. Buyer indices are zero-based in memory and
/// serialized 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// Start of an outer iteration at a new clock value.
    PriceSet {
        #[serde(with = "rational::as_string")]
        price: Rational,
    },
    /// The clock reached the buyer's bid; its demand was set to zero.
    DemandZeroed {
        #[serde(serialize_with = "one_based", deserialize_with = "from_one_based")]
        buyer: usize,
    },
    /// The buyer's budget became tight; its demand dropped by one.
    DemandDecremented {
        #[serde(serialize_with = "one_based", deserialize_with = "from_one_based")]
        buyer: usize,
        demand: i64,
    },
    Clinch {
        #[serde(serialize_with = "one_based", deserialize_with = "from_one_based")]
        buyer: usize,
        units: i64,
        #[serde(with = "rational::as_string")]
        price: Rational,
    },
    Drop {
        #[serde(serialize_with = "one_based", deserialize_with = "from_one_based")]
        buyer: usize,
        cause: DropCause,
        #[serde(with = "rational::as_string")]
        price: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub x_final: Vec<i64>,
    #[serde(with = "rational::vec_as_string")]
    pub p_final: Vec<Rational>,
    pub trace: Vec<Event>,
    /// Number of outer iterations (price updates).
    pub iterations: usize,
}

impl AuctionOutcome {
    /// `(cause, price)` of each buyer's drop, if the trace has one.
    pub fn drops(&self) -> Vec<Option<(DropCause, Rational)>> {
        let mut drops = vec![None; self.x_final.len()];
        for e in &self.trace {
            if let Event::Drop { buyer, cause, price } = e {
                if let Some(slot) = drops.get_mut(*buyer) {
                    *slot = Some((*cause, price.clone()));
                }
            }
        }
        drops
    }

    /// `v_i x_i − p_i` under the true valuation.
    pub fn utility(&self, instance: &AuctionInstance, i: usize) -> Rational {
        utility(&instance.buyers()[i].valuation, self.x_final[i], &self.p_final[i])
    }

    pub fn total_payment(&self) -> Rational {
        self.p_final.iter().fold(rational::zero(), |acc, p| acc + p)
    }
}

pub fn utility(valuation: &Rational, units: i64, payment: &Rational) -> Rational {
    valuation * Rational::from_integer(units.into()) - payment
}

/// Order in which simultaneously eligible buyers are picked in the two
/// demand-update loops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum PickOrder {
    #[default]
    Ascending,
    /// Earlier entries take priority. Must be a permutation of the buyers.
    Priority(Vec<usize>),
}

/// How a clinching round distributes the clinched units.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ClinchOrder {
    /// Buyers in ascending order, each clinching `f_{x,d}(N) − f_{x,d}(N \ i)`
    /// evaluated on the state left by the previous buyer.
    #[default]
    Ascending,
    /// Same, in the given buyer order.
    Sequence(Vec<usize>),
    /// All amounts computed once from the state on entry, then applied.
    Simultaneous,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub pick_order: PickOrder,
    pub clinch_order: ClinchOrder,
    pub guards: Guards,
}

/// The clock value for the next iteration:
/// `min over active i of min(v'_i, (B_i − p_i) / d_i)`.
pub fn next_price(state: &AuctionState, instance: &AuctionInstance) -> Result<Rational> {
    (0..instance.n())
        .filter(|&i| state.is_active(i))
        .map(|i| {
            let by_budget = state.remaining_budget(instance, i) / Rational::from_integer(state.d[i].into());
            let bid = &instance.buyers[i].bid;
            if &by_budget < bid {
                by_budget
            } else {
                bid.clone()
            }
        })
        .min()
        .ok_or(Error::NoActiveBuyers)
}

/// `f` tabulated over every subset, plus scratch space for the remnant
/// minimizations.
struct Tabulated {
    n: usize,
    values: Vec<i64>,
    scratch: Vec<i64>,
}

impl Tabulated {
    fn new(f: &dyn SubmodularOracle) -> Self {
        let n = f.ground_set_size();
        let values: Vec<i64> = Subset::full(n).subsets().map(|s| f.eval(s)).collect();
        Tabulated { n, scratch: vec![0; values.len()], values }
    }

    /// Fills `scratch[S] = f(S) − (x + d)(S)` and returns its overall minimum.
    fn fill(&mut self, x: &[i64], d: &[i64]) -> i64 {
        self.scratch[0] = 0;
        let mut weight_of = vec![0i64; self.values.len()];
        let mut overall = 0;
        for mask in 1..self.values.len() {
            let low = mask.trailing_zeros() as usize;
            weight_of[mask] = weight_of[mask & (mask - 1)] + x[low] + d[low];
            self.scratch[mask] = self.values[mask] - weight_of[mask];
            overall = overall.min(self.scratch[mask]);
        }
        overall
    }

    /// `f_{x,d}(N) − f_{x,d}(N \ i)` using the single-subset form.
    fn marginal(&mut self, x: &[i64], d: &[i64], i: usize) -> i64 {
        let overall = self.fill(x, d);
        let bit = 1usize << i;
        let without_i = (0..self.values.len())
            .filter(|m| m & bit == 0)
            .map(|m| self.scratch[m])
            .min()
            .expect("the empty set avoids i");
        d[i] + overall - without_i
    }

    /// Every buyer's marginal from one pass.
    fn all_marginals(&mut self, x: &[i64], d: &[i64]) -> Vec<i64> {
        let overall = self.fill(x, d);
        let mut avoiding = vec![i64::MAX; self.n];
        for (mask, &v) in self.scratch.iter().enumerate() {
            for (i, slot) in avoiding.iter_mut().enumerate() {
                if mask >> i & 1 == 0 && v < *slot {
                    *slot = v;
                }
            }
        }
        (0..self.n).map(|i| d[i] + overall - avoiding[i]).collect()
    }
}

/// Clinch amounts `δ_i = f_{x,d}(N) − f_{x,d}(N \ i)` for the state as given.
pub fn clinch_amounts(state: &AuctionState, instance: &AuctionInstance) -> Vec<i64> {
    Tabulated::new(instance.oracle()).all_marginals(&state.x, &state.d)
}

/// Runs the auction on the buyers' bids with default options.
pub fn run_auction(instance: &AuctionInstance) -> Result<AuctionOutcome> {
    run_auction_with(instance, &RunOptions { guards: Guards::from_env(), ..RunOptions::default() })
}

pub fn run_auction_with(instance: &AuctionInstance, options: &RunOptions) -> Result<AuctionOutcome> {
    let n = instance.n();
    options.guards.check_buyers(n)?;
    options.guards.check_supply(instance.supply())?;
    let priority = match &options.pick_order {
        PickOrder::Ascending => (0..n).collect(),
        PickOrder::Priority(order) => checked_permutation(order, n)?,
    };
    let clinch_sequence = match &options.clinch_order {
        ClinchOrder::Ascending | ClinchOrder::Simultaneous => (0..n).collect(),
        ClinchOrder::Sequence(order) => checked_permutation(order, n)?,
    };

    let mut engine = Engine {
        table: Tabulated::new(instance.oracle()),
        state: AuctionState::initial(instance),
        trace: Vec::new(),
        simultaneous: options.clinch_order == ClinchOrder::Simultaneous,
        clinch_sequence,
    };
    let mut iterations = 0;
    while engine.state.d.iter().any(|&d| d > 0) {
        let price = next_price(&engine.state, instance)?;
        if iterations > 0 && price <= engine.state.c {
            return Err(Error::ClockStalled(rational::format(&price)));
        }
        iterations += 1;
        engine.state.c = price.clone();
        engine.trace.push(Event::PriceSet { price });

        // bids reached: demand to zero
        while let Some(j) = priority
            .iter()
            .copied()
            .find(|&j| engine.state.is_active(j) && instance.buyers[j].bid == engine.state.c)
        {
            engine.state.d[j] = 0;
            engine.trace.push(Event::DemandZeroed { buyer: j });
            engine.drop(j, DropCause::Line5);
            engine.clinching();
        }
        // budgets tight: demand down by one
        while let Some(j) = priority
            .iter()
            .copied()
            .find(|&j| engine.state.is_active(j) && engine.state.budget_tight(instance, j))
        {
            engine.state.d[j] -= 1;
            engine.trace.push(Event::DemandDecremented { buyer: j, demand: engine.state.d[j] });
            if engine.state.d[j] == 0 {
                engine.drop(j, DropCause::Line9);
            }
            engine.clinching();
        }
    }

    let AuctionState { x, p, .. } = engine.state;
    Ok(AuctionOutcome { x_final: x, p_final: p, trace: engine.trace, iterations })
}

fn checked_permutation(order: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInstance(format!("{order:?} is not a permutation of the buyers")));
        }
    }
    if order.len() != n {
        return Err(Error::InvalidInstance(format!("{order:?} is not a permutation of the buyers")));
    }
    Ok(order.to_vec())
}

struct Engine {
    table: Tabulated,
    state: AuctionState,
    trace: Vec<Event>,
    simultaneous: bool,
    clinch_sequence: Vec<usize>,
}

impl Engine {
    fn drop(&mut self, buyer: usize, cause: DropCause) {
        self.trace.push(Event::Drop { buyer, cause, price: self.state.c.clone() });
    }

    fn clinching(&mut self) {
        if self.simultaneous {
            let deltas = self.table.all_marginals(&self.state.x, &self.state.d);
            for (i, delta) in deltas.into_iter().enumerate() {
                self.apply_clinch(i, delta);
            }
        } else {
            for k in 0..self.clinch_sequence.len() {
                let i = self.clinch_sequence[k];
                if !self.state.is_active(i) {
                    continue;
                }
                let delta = self.table.marginal(&self.state.x, &self.state.d, i);
                self.apply_clinch(i, delta);
            }
        }
    }

    fn apply_clinch(&mut self, i: usize, delta: i64) {
        debug_assert!(delta >= 0 && delta <= self.state.d[i], "clinch amount out of range");
        if delta == 0 {
            return;
        }
        let c = self.state.c.clone();
        self.state.x[i] += delta;
        self.state.p[i] += &c * Rational::from_integer(delta.into());
        self.state.d[i] -= delta;
        self.trace.push(Event::Clinch { buyer: i, units: delta, price: c });
        if self.state.d[i] == 0 {
            self.drop(i, DropCause::Clinch);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymatroid::MultiUnitOracle;
    use crate::rational::{int, ratio};

    fn multi_unit(v: &[Rational], b: &[Rational], supply: i64) -> AuctionInstance {
        let buyers = v.iter().zip(b).map(|(v, b)| Buyer::truthful(v.clone(), b.clone())).collect();
        AuctionInstance::new(buyers, Constraint::MultiUnit(MultiUnitOracle::new(v.len(), supply))).unwrap()
    }

    fn two_buyers_three_units() -> AuctionInstance {
        multi_unit(&[int(1), int(3)], &[int(3), int(3)], 3)
    }

    fn one_unit_envy_market() -> AuctionInstance {
        multi_unit(&[int(10), int(2)], &[int(1), int(1)], 1)
    }

    #[test]
    fn next_price_examples() {
        let inst = two_buyers_three_units();
        let mut state = AuctionState::initial(&inst);
        assert_eq!(state.d, vec![4, 4]);
        assert_eq!(next_price(&state, &inst).unwrap(), ratio(3, 4));
        state.d = vec![2, 2];
        assert_eq!(next_price(&state, &inst).unwrap(), int(1));

        let single = multi_unit(&[int(5), int(5)], &[int(2), int(2)], 1);
        let state = AuctionState { x: vec![0, 0], p: vec![int(0), int(0)], d: vec![1, 0], c: int(0) };
        assert_eq!(next_price(&state, &single).unwrap(), int(2));
        let idle = AuctionState { d: vec![0, 0], ..state };
        assert_eq!(next_price(&idle, &single), Err(Error::NoActiveBuyers));
    }

    #[test]
    fn clinch_amounts_examples() {
        let inst = two_buyers_three_units();
        assert_eq!(clinch_amounts(&AuctionState::initial(&inst), &inst), vec![0, 0]);
        let after_drop = AuctionState { x: vec![0, 0], p: vec![int(0), int(0)], d: vec![0, 4], c: int(1) };
        assert_eq!(clinch_amounts(&after_drop, &inst), vec![0, 3]);

        let envy = one_unit_envy_market();
        let state = AuctionState { x: vec![0, 0], p: vec![int(0), int(0)], d: vec![0, 1], c: int(1) };
        assert_eq!(clinch_amounts(&state, &envy), vec![0, 1]);
    }

    #[test]
    fn worst_case_ratio_market_outcome() {
        let out = run_auction(&two_buyers_three_units()).unwrap();
        assert_eq!(out.x_final, vec![0, 3]);
        assert_eq!(out.p_final, vec![int(0), int(3)]);
        let drops = out.drops();
        assert_eq!(drops[0], Some((DropCause::Line5, int(1))));
        assert_eq!(drops[1], Some((DropCause::Clinch, int(1))));
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn envy_market_outcome_and_trace() {
        let out = run_auction(&one_unit_envy_market()).unwrap();
        assert_eq!(out.x_final, vec![0, 1]);
        assert_eq!(out.p_final, vec![int(0), int(1)]);
        let expected = vec![
            Event::PriceSet { price: ratio(1, 2) },
            Event::DemandDecremented { buyer: 0, demand: 1 },
            Event::DemandDecremented { buyer: 1, demand: 1 },
            Event::PriceSet { price: int(1) },
            Event::DemandDecremented { buyer: 0, demand: 0 },
            Event::Drop { buyer: 0, cause: DropCause::Line9, price: int(1) },
            Event::Clinch { buyer: 1, units: 1, price: int(1) },
            Event::Drop { buyer: 1, cause: DropCause::Clinch, price: int(1) },
        ];
        assert_eq!(out.trace, expected);
    }

    #[test]
    fn rich_buyers_take_all_supply() {
        let inst = multi_unit(&[int(2), int(3), int(5)], &[int(100), int(100), int(100)], 4);
        let out = run_auction(&inst).unwrap();
        assert_eq!(out.x_final.iter().sum::<i64>(), 4);
        // highest valuation wins everything at the second-highest valuation
        assert_eq!(out.x_final, vec![0, 0, 4]);
        assert_eq!(out.p_final[2], int(12));
    }

    #[test]
    fn clinch_orders_agree() {
        let inst = multi_unit(&[int(3), int(4), int(5)], &[int(5), int(7), int(6)], 5);
        let base = run_auction(&inst).unwrap();
        for clinch_order in [
            ClinchOrder::Simultaneous,
            ClinchOrder::Sequence(vec![2, 0, 1]),
            ClinchOrder::Sequence(vec![1, 2, 0]),
        ] {
            let out = run_auction_with(&inst, &RunOptions { clinch_order, ..RunOptions::default() }).unwrap();
            assert_eq!((&out.x_final, &out.p_final), (&base.x_final, &base.p_final));
        }
    }

    #[test]
    fn instance_validation() {
        let neg = AuctionInstance::new(
            vec![Buyer::truthful(int(-1), int(1)), Buyer::truthful(int(1), int(1))],
            Constraint::MultiUnit(MultiUnitOracle::new(2, 1)),
        );
        assert!(matches!(neg, Err(Error::InvalidInstance(_))));
        let lonely = AuctionInstance::new(
            vec![Buyer::truthful(int(1), int(1))],
            Constraint::MultiUnit(MultiUnitOracle::new(1, 2)),
        );
        assert!(matches!(lonely, Err(Error::Validation { axiom: "competition", .. })));
        let wrong_size = AuctionInstance::new(
            vec![Buyer::truthful(int(1), int(1))],
            Constraint::MultiUnit(MultiUnitOracle::new(2, 2)),
        );
        assert!(matches!(wrong_size, Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn bad_permutations_are_rejected() {
        let inst = two_buyers_three_units();
        let opts = RunOptions { pick_order: PickOrder::Priority(vec![0, 0]), ..RunOptions::default() };
        assert!(run_auction_with(&inst, &opts).is_err());
    }

    #[test]
    fn outcome_json_round_trip_uses_one_based_ids() {
        let out = run_auction(&two_buyers_three_units()).unwrap();
        let text = serde_json::to_string(&out).unwrap();
        assert!(text.contains(r#""buyer":1"#));
        let back: AuctionOutcome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out);
        let zero = r#"{"x_final":[0],"p_final":["0"],"trace":[{"event":"demand_zeroed","buyer":0}],"iterations":1}"#;
        assert!(serde_json::from_str::<AuctionOutcome>(zero).is_err());
    }
}
