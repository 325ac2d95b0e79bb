//! Verification of a finished auction against the mechanism's guarantees.
//!
//! Every check returns [`Verdict`]s. An asserted verdict that fails always
//! carries a concrete witness (a set, a buyer pair, an allocation, a bid).
//! The envy and pick-order checks are informational: they report what they
//! see but are not expected to pass.

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::auction::{
    self, run_auction_with, AuctionInstance, AuctionOutcome, AuctionState, ClinchOrder, DropCause, Event, PickOrder,
    RunOptions,
};
use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::polymatroid::{self, RemnantContext, RemnantRank, Subset};
use crate::rational::{self, Rational};
use crate::welfare;

/// Largest market on which the definition-level clinch oracle is evaluated.
pub const CLINCH_ORACLE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: &'static str,
    pub clause: String,
    /// Whether a failure counts against the outcome.
    pub asserted: bool,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

impl Verdict {
    fn pass(check: &'static str, clause: impl Into<String>, detail: impl Into<String>) -> Self {
        Verdict { check, clause: clause.into(), asserted: true, passed: true, detail: detail.into(), witness: None }
    }

    fn fail(check: &'static str, clause: impl Into<String>, detail: impl Into<String>, witness: Value) -> Self {
        Verdict {
            check,
            clause: clause.into(),
            asserted: true,
            passed: false,
            detail: detail.into(),
            witness: Some(witness),
        }
    }

    fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }
}

fn from_first_failure(
    check: &'static str,
    clause: &str,
    ok_detail: impl Into<String>,
    failure: Option<(String, Value)>,
) -> Verdict {
    match failure {
        None => Verdict::pass(check, clause, ok_detail),
        Some((detail, witness)) => Verdict::fail(check, clause, detail, witness),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub verdicts: Vec<Verdict>,
}

impl AuditReport {
    /// Every asserted verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || !v.asserted)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.asserted && !v.passed)
    }

    pub fn check_passed(&self, check: &str) -> bool {
        self.verdicts.iter().filter(|v| v.check == check).all(|v| v.passed || !v.asserted)
    }

    pub fn extend(&mut self, verdicts: impl IntoIterator<Item = Verdict>) {
        self.verdicts.extend(verdicts);
    }
}

fn ids(set: Subset) -> Value {
    json!(set.to_ids())
}

fn r(value: &Rational) -> Value {
    json!(rational::format(value))
}

fn units(x: i64) -> Rational {
    Rational::from_integer(x.into())
}

// ---------------------------------------------------------------------------
// Replay

/// State after one trace event, with the per-buyer budget-decrement history
/// needed to classify demands.
#[derive(Debug, Clone)]
pub struct Observation {
    pub event_index: usize,
    pub state: AuctionState,
    pub iteration: usize,
    /// Demand was ever lowered by a budget decrement.
    pub ever_decremented: Vec<bool>,
    /// Demand was lowered by a budget decrement at the current price.
    pub decremented_this_price: Vec<bool>,
}

/// One clinching round: the state it started from and what each buyer took.
#[derive(Debug, Clone)]
pub struct ClinchRound {
    /// Index of the demand event that triggered the round.
    pub trigger: usize,
    pub entry: AuctionState,
    pub amounts: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub initial: AuctionState,
    pub observations: Vec<Observation>,
    pub rounds: Vec<ClinchRound>,
}

impl Replay {
    pub fn final_state(&self) -> &AuctionState {
        self.observations.last().map_or(&self.initial, |o| &o.state)
    }
}

/// Re-executes the trace from the initial state, checking that every event is
/// internally consistent and that it ends at the reported outcome.
pub fn replay(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Result<Replay> {
    let n = instance.n();
    let bad = |k: usize, what: String| Error::MalformedTrace(format!("event {}: {what}", k + 1));
    let initial = AuctionState::initial(instance);
    let mut state = initial.clone();
    let mut ever = vec![false; n];
    let mut this_price = vec![false; n];
    let mut iteration = 0;
    let mut observations = Vec::with_capacity(outcome.trace.len());
    let mut rounds: Vec<ClinchRound> = Vec::new();
    let mut round_open = false;

    for (k, event) in outcome.trace.iter().enumerate() {
        let buyer = match event {
            Event::PriceSet { .. } => None,
            Event::DemandZeroed { buyer }
            | Event::DemandDecremented { buyer, .. }
            | Event::Clinch { buyer, .. }
            | Event::Drop { buyer, .. } => Some(*buyer),
        };
        if let Some(b) = buyer {
            if b >= n {
                return Err(bad(k, format!("unknown buyer {}", b + 1)));
            }
        }
        match event {
            Event::PriceSet { price } => {
                if !price.is_positive() {
                    return Err(bad(k, "non-positive price".into()));
                }
                state.c = price.clone();
                this_price.iter_mut().for_each(|f| *f = false);
                iteration += 1;
                round_open = false;
            }
            Event::DemandZeroed { buyer } => {
                if state.d[*buyer] == 0 {
                    return Err(bad(k, format!("buyer {} zeroed while inactive", buyer + 1)));
                }
                state.d[*buyer] = 0;
                rounds.push(ClinchRound { trigger: k, entry: state.clone(), amounts: vec![0; n] });
                round_open = true;
            }
            Event::DemandDecremented { buyer, demand } => {
                if state.d[*buyer] == 0 || state.d[*buyer] - 1 != *demand {
                    return Err(bad(k, format!("buyer {} decrement inconsistent with demand {}", buyer + 1, state.d[*buyer])));
                }
                state.d[*buyer] -= 1;
                ever[*buyer] = true;
                this_price[*buyer] = true;
                rounds.push(ClinchRound { trigger: k, entry: state.clone(), amounts: vec![0; n] });
                round_open = true;
            }
            Event::Clinch { buyer, units: delta, price } => {
                if !round_open {
                    return Err(bad(k, "clinch outside a clinching round".into()));
                }
                if *price != state.c {
                    return Err(bad(k, "clinch price differs from the clock".into()));
                }
                if *delta <= 0 || *delta > state.d[*buyer] {
                    return Err(bad(k, format!("clinch of {delta} units exceeds demand {}", state.d[*buyer])));
                }
                state.x[*buyer] += delta;
                state.p[*buyer] += price * units(*delta);
                state.d[*buyer] -= delta;
                rounds.last_mut().expect("round open").amounts[*buyer] += delta;
            }
            Event::Drop { buyer, price, .. } => {
                if state.d[*buyer] != 0 {
                    return Err(bad(k, format!("buyer {} dropped with demand {}", buyer + 1, state.d[*buyer])));
                }
                if *price != state.c {
                    return Err(bad(k, "drop price differs from the clock".into()));
                }
            }
        }
        observations.push(Observation {
            event_index: k,
            state: state.clone(),
            iteration,
            ever_decremented: ever.clone(),
            decremented_this_price: this_price.clone(),
        });
    }
    if state.x != outcome.x_final || state.p != outcome.p_final {
        return Err(Error::MalformedTrace("replayed allocation differs from the reported outcome".into()));
    }
    if iteration != outcome.iterations {
        return Err(Error::MalformedTrace(format!(
            "trace has {iteration} price updates but the outcome reports {} iterations",
            outcome.iterations
        )));
    }
    Ok(Replay { initial, observations, rounds })
}

// ---------------------------------------------------------------------------
// Trace invariants

/// `Σ_i f({i}) + n`.
pub fn iteration_bound(instance: &AuctionInstance) -> usize {
    instance.capacities().iter().sum::<i64>() as usize + instance.n()
}

/// Which of the three demand shapes a buyer is in, or `None` if its demand
/// matches none of them.
fn demand_case(instance: &AuctionInstance, obs: &Observation, i: usize) -> Option<u8> {
    let s = &obs.state;
    let room = s.remaining_budget(instance, i) / &s.c;
    let d = units(s.d[i]);
    let cap = instance.oracle().eval(Subset::singleton(i));
    if !obs.ever_decremented[i] {
        (s.d[i] == cap + 1 - s.x[i] && d <= room).then_some(1)
    } else if obs.decremented_this_price[i] {
        (d == room - Rational::one()).then_some(2)
    } else {
        (d == room.floor()).then_some(3)
    }
}

/// Replay consistency plus every per-event invariant of the engine.
pub fn check_trace(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "trace";
    let replay = match replay(instance, outcome) {
        Ok(r) => r,
        Err(e) => return vec![Verdict::fail(CHECK, "replay", e.to_string(), json!({ "error": e.to_string() }))],
    };
    let n = instance.n();
    let f = instance.oracle();
    let supply = instance.supply();
    let full = f.ground_set();
    let mut out = vec![Verdict::pass(CHECK, "replay", format!("{} events replayed", outcome.trace.len()))];

    let mut membership = None;
    let mut budget = None;
    let mut conservation = None;
    let mut demand = None;
    for obs in &replay.observations {
        let s = &obs.state;
        let at = json!({ "event": obs.event_index + 1 });
        if membership.is_none() && !polymatroid::membership(f, &s.x).unwrap_or(false) {
            membership = Some((format!("x = {:?} left the polymatroid", s.x), at.clone()));
        }
        if budget.is_none() {
            if let Some(i) = (0..n).find(|&i| s.p[i] > instance.buyers()[i].budget) {
                budget = Some((format!("buyer {} paid over budget", i + 1), json!({ "event": obs.event_index + 1, "buyer": i + 1 })));
            }
        }
        if conservation.is_none() {
            let remnant = RemnantContext::new(f, &s.x, &s.d).and_then(|ctx| ctx.f_xd(full));
            match remnant {
                Ok(v) if s.x.iter().sum::<i64>() + v == supply => {}
                other => {
                    conservation = Some((format!("x(N) + f_xd(N) = {:?} != f(N) = {supply}", other), at.clone()));
                }
            }
        }
        if demand.is_none() && s.c.is_positive() {
            if let Some(i) = (0..n).find(|&i| s.d[i] > 0 && demand_case(instance, obs, i).is_none()) {
                demand = Some((
                    format!("buyer {} demand {} fits none of the three demand shapes", i + 1, s.d[i]),
                    json!({ "event": obs.event_index + 1, "buyer": i + 1, "demand": s.d[i], "payment": r(&s.p[i]), "price": r(&s.c) }),
                ));
            }
        }
    }
    out.push(from_first_failure(CHECK, "membership", "x stays in P(f)", membership));
    out.push(from_first_failure(CHECK, "budget", "p_i <= B_i after every event", budget));
    out.push(from_first_failure(CHECK, "conservation", "x(N) + f_xd(N) = f(N) after every event", conservation));
    out.push(from_first_failure(CHECK, "demand_cases", "every active demand matches one of the three shapes", demand));

    // prices strictly increase; one drop per buyer; drop prices non-decreasing
    let prices: Vec<&Rational> = outcome
        .trace
        .iter()
        .filter_map(|e| if let Event::PriceSet { price } = e { Some(price) } else { None })
        .collect();
    let stall = prices.windows(2).position(|w| w[1] <= w[0]);
    out.push(from_first_failure(
        CHECK,
        "price_monotone",
        "clock strictly increases",
        stall.map(|k| (format!("price {} not above {}", prices[k + 1], prices[k]), json!({ "update": k + 2 }))),
    ));
    let mut drop_count = vec![0usize; n];
    let mut drop_prices = Vec::new();
    for e in &outcome.trace {
        if let Event::Drop { buyer, price, .. } = e {
            drop_count[*buyer] += 1;
            drop_prices.push(price);
        }
    }
    out.push(from_first_failure(
        CHECK,
        "single_drop",
        "every buyer drops exactly once",
        (0..n)
            .find(|&i| drop_count[i] != 1)
            .map(|i| (format!("buyer {} dropped {} times", i + 1, drop_count[i]), json!({ "buyer": i + 1 }))),
    ));
    out.push(from_first_failure(
        CHECK,
        "drop_price_order",
        "drop prices are non-decreasing",
        drop_prices
            .windows(2)
            .position(|w| w[1] < w[0])
            .map(|k| (format!("drop {} at a lower price than drop {}", k + 2, k + 1), json!({ "drop": k + 2 }))),
    ));
    let sold: i64 = outcome.x_final.iter().sum();
    out.push(from_first_failure(
        CHECK,
        "all_goods_sold",
        format!("x(N) = f(N) = {supply}"),
        (sold != supply).then(|| (format!("x(N) = {sold} != f(N) = {supply}"), json!({ "sold": sold, "supply": supply }))),
    ));
    let final_budget = (0..n).find(|&i| outcome.p_final[i] > instance.buyers()[i].budget || outcome.p_final[i].is_negative());
    out.push(from_first_failure(
        CHECK,
        "final_budget",
        "0 <= p_i <= B_i",
        final_budget.map(|i| (format!("buyer {} payment out of range", i + 1), json!({ "buyer": i + 1 }))),
    ));
    let bound = iteration_bound(instance);
    out.push(from_first_failure(
        CHECK,
        "iteration_bound",
        format!("{} iterations <= {bound}", outcome.iterations),
        (outcome.iterations > bound).then(|| {
            (format!("{} iterations exceed {bound}", outcome.iterations), json!({ "iterations": outcome.iterations, "bound": bound }))
        }),
    ));
    out
}

// ---------------------------------------------------------------------------
// Clinch amounts

/// Each clinching round's amounts against the definition-level oracle and the
/// closed-form marginals on the round's entry state; also that the engine's
/// single-subset remnant formula equals the exact remnant rank there.
pub fn check_clinch_oracle(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "clinch";
    let n = instance.n();
    if n > CLINCH_ORACLE_LIMIT {
        return vec![Verdict::pass(CHECK, "oracle", format!("skipped: {n} buyers exceeds {CLINCH_ORACLE_LIMIT}")).informational()];
    }
    let replay = match replay(instance, outcome) {
        Ok(r) => r,
        Err(e) => return vec![Verdict::fail(CHECK, "oracle", e.to_string(), json!({ "error": e.to_string() }))],
    };
    let f = instance.oracle();
    let mut oracle_failure = None;
    let mut marginal_failure = None;
    let mut formula_failure = None;
    for round in &replay.rounds {
        let e = &round.entry;
        let ctx = match RemnantContext::new(f, &e.x, &e.d) {
            Ok(ctx) => ctx,
            Err(err) => {
                oracle_failure.get_or_insert((err.to_string(), json!({ "event": round.trigger + 1 })));
                continue;
            }
        };
        let marginals = auction::clinch_amounts(e, instance);
        if marginal_failure.is_none() && marginals != round.amounts {
            marginal_failure = Some((
                format!("engine took {:?}, entry-state marginals are {:?}", round.amounts, marginals),
                json!({ "event": round.trigger + 1, "engine": round.amounts, "marginals": marginals }),
            ));
        }
        if oracle_failure.is_none() {
            for i in 0..n {
                match polymatroid::clinch_brute_oracle(&ctx, i) {
                    Ok(w) if w == round.amounts[i] => {}
                    other => {
                        oracle_failure = Some((
                            format!("buyer {} clinched {} but the definition gives {:?}", i + 1, round.amounts[i], other),
                            json!({ "event": round.trigger + 1, "buyer": i + 1 }),
                        ));
                        break;
                    }
                }
            }
        }
        if formula_failure.is_none() {
            let rank = RemnantRank::new(&ctx);
            if let Some(s) = f.ground_set().subsets().find(|&s| ctx.f_xd(s).ok() != Some(rank.eval(s))) {
                formula_failure = Some((
                    format!("single-subset remnant formula differs from the exact rank on {s}"),
                    json!({ "event": round.trigger + 1, "set": ids(s) }),
                ));
            }
        }
    }
    let rounds = replay.rounds.len();
    vec![
        from_first_failure(CHECK, "oracle", format!("{rounds} rounds match the definition"), oracle_failure),
        from_first_failure(CHECK, "marginals", format!("{rounds} rounds match entry-state marginals"), marginal_failure),
        from_first_failure(CHECK, "remnant_formula", "single-subset formula exact on every round entry", formula_failure),
    ]
}

/// Reruns with random clinching orders (asserted: the outcome must not change)
/// and random pick orders inside the demand loops (informational).
pub fn check_order_invariance(
    instance: &AuctionInstance,
    outcome: &AuctionOutcome,
    permutations: usize,
    seed: u64,
) -> Vec<Verdict> {
    const CHECK: &str = "order";
    let n = instance.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clinch_failure = None;
    let mut pick_divergence = None;
    let same = |o: &AuctionOutcome| o.x_final == outcome.x_final && o.p_final == outcome.p_final;
    let simultaneous = RunOptions { clinch_order: ClinchOrder::Simultaneous, ..RunOptions::default() };
    match run_auction_with(instance, &simultaneous) {
        Ok(o) if same(&o) => {}
        other => clinch_failure = Some(("simultaneous clinching changed the outcome".to_string(), json!({ "order": "simultaneous", "result": format!("{other:?}") }))),
    }
    for _ in 0..permutations {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let ids: Vec<usize> = order.iter().map(|i| i + 1).collect();
        if clinch_failure.is_none() {
            let opts = RunOptions { clinch_order: ClinchOrder::Sequence(order.clone()), ..RunOptions::default() };
            match run_auction_with(instance, &opts) {
                Ok(o) if same(&o) => {}
                Ok(o) => {
                    clinch_failure = Some((
                        "clinching order changed the outcome".to_string(),
                        json!({ "order": ids, "x": o.x_final, "p": o.p_final.iter().map(rational::format).collect::<Vec<_>>() }),
                    ))
                }
                Err(e) => clinch_failure = Some((e.to_string(), json!({ "order": ids }))),
            }
        }
        if pick_divergence.is_none() {
            let opts = RunOptions { pick_order: PickOrder::Priority(order.clone()), ..RunOptions::default() };
            match run_auction_with(instance, &opts) {
                Ok(o) if same(&o) => {}
                Ok(o) => {
                    pick_divergence = Some((
                        "pick order inside the demand loops changed the outcome".to_string(),
                        json!({ "order": ids, "x": o.x_final, "p": o.p_final.iter().map(rational::format).collect::<Vec<_>>() }),
                    ))
                }
                Err(e) => pick_divergence = Some((e.to_string(), json!({ "order": ids }))),
            }
        }
    }
    vec![
        from_first_failure(CHECK, "clinch_order", format!("{permutations} clinching orders agree"), clinch_failure),
        from_first_failure(CHECK, "pick_order", format!("{permutations} pick orders agree"), pick_divergence).informational(),
    ]
}

// ---------------------------------------------------------------------------
// Drop layers and tight sets

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DropLayers {
    /// `i_1, .., i_t`: buyers that left because of their bid or budget, last
    /// to drop first.
    pub drop_order: Vec<usize>,
    /// `X_k`: the buyers active just before `i_k` dropped.
    pub layers: Vec<Subset>,
    /// Drop price of every buyer.
    #[serde(with = "rational::vec_as_string")]
    pub prices: Vec<Rational>,
    pub causes: Vec<DropCause>,
    /// Index `k` of the layer each buyer belongs to.
    pub layer_of: Vec<usize>,
}

impl DropLayers {
    pub fn t(&self) -> usize {
        self.drop_order.len()
    }

    /// `X_k \ X_{k−1}` (zero-based `k`).
    pub fn layer_members(&self, k: usize) -> Subset {
        let below = if k == 0 { Subset::EMPTY } else { self.layers[k - 1] };
        self.layers[k].difference(below)
    }
}

/// Rebuilds `i_1..i_t` and the nested sets `X_k` from the drop events. A
/// buyer that drops by clinching joins the layer of the bid/budget drop that
/// triggered its clinching round.
pub fn build_layers(outcome: &AuctionOutcome) -> Result<DropLayers> {
    let n = outcome.x_final.len();
    let mut active = Subset::full(n);
    let mut prices: Vec<Option<Rational>> = vec![None; n];
    let mut causes: Vec<Option<DropCause>> = vec![None; n];
    // (trigger buyer, active set before it) in drop order
    let mut triggers: Vec<(usize, Subset)> = Vec::new();
    let mut group: Vec<usize> = vec![usize::MAX; n];
    // whether the current clinching round was started by a bid/budget drop
    let mut round_trigger: Option<usize> = None;
    for (k, e) in outcome.trace.iter().enumerate() {
        match e {
            Event::PriceSet { .. } => round_trigger = None,
            Event::DemandZeroed { .. } | Event::DemandDecremented { .. } => round_trigger = None,
            Event::Clinch { .. } => {}
            Event::Drop { buyer, cause, price } => {
                let b = *buyer;
                if b >= n || !active.contains(b) {
                    return Err(Error::MalformedTrace(format!("event {}: buyer {} dropped twice", k + 1, b + 1)));
                }
                match cause {
                    DropCause::Line5 | DropCause::Line9 => {
                        triggers.push((b, active));
                        round_trigger = Some(triggers.len() - 1);
                        group[b] = triggers.len() - 1;
                    }
                    DropCause::Clinch => {
                        let t = round_trigger.ok_or_else(|| {
                            Error::MalformedTrace(format!(
                                "event {}: buyer {} dropped by clinching in a round not started by a drop",
                                k + 1,
                                b + 1
                            ))
                        })?;
                        group[b] = t;
                    }
                }
                active = active.without(b);
                prices[b] = Some(price.clone());
                causes[b] = Some(*cause);
            }
        }
    }
    if !active.is_empty() {
        return Err(Error::MalformedTrace(format!("buyers {active} never dropped")));
    }
    let t = triggers.len();
    let drop_order: Vec<usize> = triggers.iter().rev().map(|&(b, _)| b).collect();
    let layers: Vec<Subset> = triggers.iter().rev().map(|&(_, x)| x).collect();
    let layer_of = group.iter().map(|&g| t - 1 - g).collect();
    Ok(DropLayers {
        drop_order,
        layers,
        prices: prices.into_iter().map(|p| p.expect("every buyer dropped")).collect(),
        causes: causes.into_iter().map(|c| c.expect("every buyer dropped")).collect(),
        layer_of,
    })
}

/// The four tight-set clauses on every layer `X_k`:
/// (i) `x(X_k) = f(X_k)`; (ii) one drop price per layer; (iii) the other
/// members of a layer end with at most one unit's worth of budget at that
/// price; (iv) a member with exactly one unit's worth forces a budget drop of
/// `i_k`, and a budget drop of `i_k` leaves it exactly one unit's worth with
/// the price below every bid in `X_k`.
pub fn check_tight_sets(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "tight_sets";
    let layers = match build_layers(outcome) {
        Ok(l) => l,
        Err(e) => {
            return ["i", "ii", "iii", "iv"]
                .iter()
                .map(|c| Verdict::fail(CHECK, *c, e.to_string(), json!({ "error": e.to_string() })))
                .collect()
        }
    };
    let f = instance.oracle();
    let buyers = instance.buyers();
    let slack = |i: usize| -> Rational { (&buyers[i].budget - &outcome.p_final[i]) / &layers.prices[i] };
    let one = Rational::one();
    let (mut tight, mut same_price, mut small_slack, mut chain) = (None, None, None, None);
    for k in 0..layers.t() {
        let x_k = layers.layers[k];
        let trigger = layers.drop_order[k];
        let members = layers.layer_members(k);
        let trigger_price = &layers.prices[trigger];
        let allocated = x_k.sum(&outcome.x_final);
        if tight.is_none() && allocated != f.eval(x_k) {
            tight = Some((
                format!("x({x_k}) = {allocated} but f({x_k}) = {}", f.eval(x_k)),
                json!({ "layer": k + 1, "set": ids(x_k), "allocated": allocated, "rank": f.eval(x_k) }),
            ));
        }
        if same_price.is_none() {
            if let Some(i) = members.iter().find(|&i| &layers.prices[i] != trigger_price) {
                same_price = Some((
                    format!("buyer {} dropped at {} but its layer trigger at {trigger_price}", i + 1, layers.prices[i]),
                    json!({ "layer": k + 1, "buyer": i + 1, "price": r(&layers.prices[i]), "trigger_price": r(trigger_price) }),
                ));
            }
        }
        let others = members.without(trigger);
        if small_slack.is_none() {
            if let Some(i) = others.iter().find(|&i| slack(i) > one) {
                small_slack = Some((
                    format!("buyer {} keeps (B - p)/c = {} > 1", i + 1, slack(i)),
                    json!({ "layer": k + 1, "buyer": i + 1, "ratio": r(&slack(i)) }),
                ));
            }
        }
        if chain.is_none() {
            let line9 = layers.causes[trigger] == DropCause::Line9;
            if let Some(l) = others.iter().find(|&l| slack(l) == one) {
                if !line9 {
                    chain = Some((
                        format!("buyer {} has (B - p)/c = 1 but trigger {} dropped via {}", l + 1, trigger + 1, layers.causes[trigger]),
                        json!({ "layer": k + 1, "buyer": l + 1, "trigger": trigger + 1 }),
                    ));
                }
            }
            if chain.is_none() && line9 {
                if slack(trigger) != one {
                    chain = Some((
                        format!("trigger {} dropped via LINE9 with (B - p)/c = {}", trigger + 1, slack(trigger)),
                        json!({ "layer": k + 1, "trigger": trigger + 1, "ratio": r(&slack(trigger)) }),
                    ));
                } else if let Some(i) = x_k.iter().find(|&i| &buyers[i].bid <= trigger_price) {
                    chain = Some((
                        format!("buyer {} in X_{} bids {} <= drop price {trigger_price}", i + 1, k + 1, buyers[i].bid),
                        json!({ "layer": k + 1, "buyer": i + 1 }),
                    ));
                }
            }
        }
    }
    let t = layers.t();
    vec![
        from_first_failure(CHECK, "i", format!("{t} layers tight"), tight),
        from_first_failure(CHECK, "ii", "one drop price per layer", same_price),
        from_first_failure(CHECK, "iii", "non-trigger members end with (B - p)/c <= 1", small_slack),
        from_first_failure(CHECK, "iv", "budget-exhaustion implication chain holds", chain),
    ]
}

// ---------------------------------------------------------------------------
// Pareto optimality

/// Searches `P(f) ∩ Z^N` for an allocation that, with suitable payments,
/// leaves every buyer and the seller at least as well off and one strictly
/// better. With `cap_i = min(B_i, v_i x'_i − u_i)` the best seller revenue
/// is `Σ cap_i`; an improvement exists iff it beats `Σ p_i`, or ties while
/// some buyer's cap is set by its budget rather than its utility.
pub fn check_pareto(instance: &AuctionInstance, outcome: &AuctionOutcome, guards: &Guards) -> Vec<Verdict> {
    const CHECK: &str = "pareto";
    let caps = instance.capacities();
    if let Err(e) = guards.check_lattice(&caps) {
        return vec![Verdict::fail(CHECK, "revenue", e.to_string(), json!({ "error": e.to_string() }))];
    }
    let improving = pareto_improvements(instance, &outcome.x_final, &outcome.p_final, guards);
    let improving = match improving {
        Ok(found) => found,
        Err(e) => return vec![Verdict::fail(CHECK, "revenue", e.to_string(), json!({ "error": e.to_string() }))],
    };
    let alternative = pareto_improvements_by_agent(instance, &outcome.x_final, &outcome.p_final, guards);
    let mut out = vec![from_first_failure(
        CHECK,
        "revenue",
        "no Pareto improvement in P(f) ∩ Z^N",
        improving.as_ref().map(|x| (format!("allocation {x:?} improves on the outcome"), json!({ "allocation": x }))),
    )];
    let agree = match &alternative {
        Ok(alt) => alt.is_some() == improving.is_some(),
        Err(_) => false,
    };
    out.push(from_first_failure(
        CHECK,
        "per_agent",
        "per-agent payment feasibility agrees",
        (!agree).then(|| {
            ("the two Pareto formulations disagree".to_string(), json!({ "revenue": improving, "per_agent": format!("{alternative:?}") }))
        }),
    ));
    out
}

/// The improving allocation with the largest social welfare (first in
/// lexicographic order among ties), if any.
pub fn pareto_improvements(
    instance: &AuctionInstance,
    x: &[i64],
    p: &[Rational],
    guards: &Guards,
) -> Result<Option<Vec<i64>>> {
    let buyers = instance.buyers();
    let utility: Vec<Rational> = (0..instance.n()).map(|i| auction::utility(&buyers[i].valuation, x[i], &p[i])).collect();
    let paid: Rational = p.iter().fold(rational::zero(), |a, b| a + b);
    let mut best: Option<(Rational, Vec<i64>)> = None;
    polymatroid::for_each_integer_point(instance.oracle(), guards.max_lattice, |alt| {
        let mut revenue = rational::zero();
        let mut budget_bound = false;
        for (i, b) in buyers.iter().enumerate() {
            let willing = &b.valuation * units(alt[i]) - &utility[i];
            if b.budget < willing {
                budget_bound = true;
                revenue += &b.budget;
            } else {
                revenue += willing;
            }
        }
        if revenue > paid || (revenue == paid && budget_bound) {
            let sw = buyers.iter().zip(alt).fold(rational::zero(), |a, (b, &xi)| a + &b.valuation * units(xi));
            if best.as_ref().is_none_or(|(w, _)| sw > *w) {
                best = Some((sw, alt.to_vec()));
            }
        }
    })?;
    Ok(best.map(|(_, x)| x))
}

/// Same question, posed separately for each agent that might gain strictly:
/// the seller (revenue strictly above `Σ p_i` with every buyer weakly better)
/// or buyer `k` (utility strictly above with everyone else weakly better).
pub fn pareto_improvements_by_agent(
    instance: &AuctionInstance,
    x: &[i64],
    p: &[Rational],
    guards: &Guards,
) -> Result<Option<Vec<i64>>> {
    let buyers = instance.buyers();
    let n = instance.n();
    let utility: Vec<Rational> = (0..n).map(|i| auction::utility(&buyers[i].valuation, x[i], &p[i])).collect();
    let paid: Rational = p.iter().fold(rational::zero(), |a, b| a + b);
    let mut found: Option<Vec<i64>> = None;
    polymatroid::for_each_integer_point(instance.oracle(), guards.max_lattice, |alt| {
        if found.is_some() {
            return;
        }
        // highest acceptable payment for each buyer, and whether it is
        // attained (budget) or must be undercut (indifference point)
        let upper: Vec<Rational> = (0..n).map(|i| &buyers[i].valuation * units(alt[i]) - &utility[i]).collect();
        let weak_cap: Vec<Rational> = (0..n).map(|i| upper[i].clone().min(buyers[i].budget.clone())).collect();
        let weak_total: Rational = weak_cap.iter().fold(rational::zero(), |a, b| a + b);
        let seller_gains = weak_total > paid;
        let some_buyer_gains = (0..n).any(|k| {
            let rest = &weak_total - &weak_cap[k];
            if buyers[k].budget < upper[k] {
                // pay the full budget: strictly better off
                &rest + &buyers[k].budget >= paid
            } else {
                // any payment below the indifference point
                &rest + &upper[k] > paid
            }
        });
        if seller_gains || some_buyer_gains {
            found = Some(alt.to_vec());
        }
    })?;
    Ok(found)
}

// ---------------------------------------------------------------------------
// Welfare bounds

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WelfareReport {
    #[serde(with = "rational::as_string")]
    pub lw_mechanism: Rational,
    #[serde(with = "rational::as_string")]
    pub sw_mechanism: Rational,
    #[serde(with = "rational::as_string")]
    pub lw_optimum: Rational,
    #[serde(with = "rational::as_string")]
    pub total_payment: Rational,
    /// `LW^M / LW^OPT`, absent when the optimum is zero.
    #[serde(with = "rational::opt_as_string")]
    pub ratio: Option<Rational>,
}

pub fn welfare_report(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Result<WelfareReport> {
    let lw_mechanism = welfare::liquid_welfare(instance, &outcome.x_final)?;
    let sw_mechanism = welfare::social_welfare(instance, &outcome.x_final)?;
    let lw_optimum = welfare::lw_optimal(instance)?.lw_value;
    let ratio = (!lw_optimum.is_zero()).then(|| &lw_mechanism / &lw_optimum);
    Ok(WelfareReport { lw_mechanism, sw_mechanism, lw_optimum, total_payment: outcome.total_payment(), ratio })
}

/// `LW^M ≥ p(N) ≥ LW^OPT − LW^M`, `2·LW^M ≥ LW^OPT` and `SW^M ≥ LW^OPT`.
pub fn check_welfare_bounds(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "welfare";
    let w = match welfare_report(instance, outcome) {
        Ok(w) => w,
        Err(e) => return vec![Verdict::fail(CHECK, "lw_opt", e.to_string(), json!({ "error": e.to_string() }))],
    };
    let witness = json!({
        "lw_mechanism": r(&w.lw_mechanism),
        "sw_mechanism": r(&w.sw_mechanism),
        "lw_optimum": r(&w.lw_optimum),
        "total_payment": r(&w.total_payment),
    });
    let verdict = |clause: &str, holds: bool, statement: String| {
        if holds {
            Verdict::pass(CHECK, clause, statement)
        } else {
            Verdict::fail(CHECK, clause, format!("violated: {statement}"), witness.clone())
        }
    };
    let gap = &w.lw_optimum - &w.lw_mechanism;
    vec![
        verdict("lw_ge_payment", w.lw_mechanism >= w.total_payment, format!("LW^M = {} >= p(N) = {}", w.lw_mechanism, w.total_payment)),
        verdict("payment_ge_gap", w.total_payment >= gap, format!("p(N) = {} >= LW^OPT - LW^M = {gap}", w.total_payment)),
        verdict(
            "half_approximation",
            &w.lw_mechanism * rational::int(2) >= w.lw_optimum,
            format!("2 LW^M = {} >= LW^OPT = {}", &w.lw_mechanism * rational::int(2), w.lw_optimum),
        ),
        verdict("sw_ge_lw_opt", w.sw_mechanism >= w.lw_optimum, format!("SW^M = {} >= LW^OPT = {}", w.sw_mechanism, w.lw_optimum)),
    ]
}

// ---------------------------------------------------------------------------
// Trading pairs

/// No pair `(i, j)` where `i` could take one of `j`'s units inside `P(f)`,
/// values it more, and can still afford `v_j`.
pub fn check_trading_pairs(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "trading_pairs";
    match trading_pairs(instance, &outcome.x_final, &outcome.p_final) {
        Ok(pairs) => vec![from_first_failure(
            CHECK,
            "none",
            "no trading pair",
            pairs.first().map(|&(i, j)| {
                (format!("buyers ({}, {}) form a trading pair", i + 1, j + 1), json!({ "pair": [i + 1, j + 1], "all": pairs.iter().map(|&(a, b)| [a + 1, b + 1]).collect::<Vec<_>>() }))
            }),
        )],
        Err(e) => vec![Verdict::fail(CHECK, "none", e.to_string(), json!({ "error": e.to_string() }))],
    }
}

pub fn trading_pairs(instance: &AuctionInstance, x: &[i64], p: &[Rational]) -> Result<Vec<(usize, usize)>> {
    let buyers = instance.buyers();
    let n = instance.n();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || buyers[i].valuation <= buyers[j].valuation {
                continue;
            }
            if &buyers[i].budget - &p[i] < buyers[j].valuation {
                continue;
            }
            if polymatroid::dep(instance.oracle(), x, i, j)? {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Envy (informational)

/// Pairs `(i, j)` where `i` would rather have `j`'s units and payment. A swap
/// that exceeds `i`'s budget is worth nothing to `i`.
pub fn envious_pairs(instance: &AuctionInstance, x: &[i64], p: &[Rational]) -> Vec<(usize, usize)> {
    let buyers = instance.buyers();
    let n = instance.n();
    let mut pairs = Vec::new();
    for i in 0..n {
        let own = auction::utility(&buyers[i].valuation, x[i], &p[i]);
        for j in 0..n {
            if i == j || p[j] > buyers[i].budget {
                continue;
            }
            if auction::utility(&buyers[i].valuation, x[j], &p[j]) > own {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

pub fn check_envy_free(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<Verdict> {
    const CHECK: &str = "envy";
    let pairs = envious_pairs(instance, &outcome.x_final, &outcome.p_final);
    vec![from_first_failure(
        CHECK,
        "pairs",
        "no buyer envies another",
        (!pairs.is_empty()).then(|| {
            let (i, j) = pairs[0];
            (format!("buyer {} envies buyer {}", i + 1, j + 1), json!({ "pairs": pairs.iter().map(|&(a, b)| [a + 1, b + 1]).collect::<Vec<_>>() }))
        }),
    )
    .informational()]
}

// ---------------------------------------------------------------------------
// Incentive compatibility

/// Which misreports to try for each buyer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationGrid {
    /// Bids `m · v_i`.
    pub multipliers: Vec<Rational>,
    /// Every other buyer's valuation.
    pub other_valuations: bool,
    /// Every `B_j / m` for `m = 1..=f(N)`.
    pub budget_fractions: bool,
    /// Every clock value of the truthful run, and values just around it.
    pub critical_prices: bool,
    /// Random bids are added until each buyer has at least this many.
    pub min_per_buyer: usize,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        DeviationGrid {
            multipliers: [(1, 4), (1, 2), (3, 4), (5, 4), (3, 2), (2, 1)]
                .iter()
                .map(|&(a, b)| rational::ratio(a, b))
                .collect(),
            other_valuations: true,
            budget_fractions: true,
            critical_prices: true,
            min_per_buyer: 24,
        }
    }
}

impl DeviationGrid {
    /// Distinct positive bids for buyer `i`, excluding its true valuation,
    /// in a deterministic order.
    pub fn bids_for(
        &self,
        instance: &AuctionInstance,
        truthful: &AuctionOutcome,
        i: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Rational> {
        let buyers = instance.buyers();
        let v = &buyers[i].valuation;
        let mut bids: Vec<Rational> = self.multipliers.iter().map(|m| m * v).collect();
        if self.other_valuations {
            bids.extend(buyers.iter().map(|b| b.valuation.clone()));
        }
        if self.budget_fractions {
            for b in buyers {
                for m in 1..=instance.supply().max(1) {
                    bids.push(&b.budget / rational::int(m));
                }
            }
        }
        if self.critical_prices {
            let nudge = rational::ratio(1, 64);
            for e in &truthful.trace {
                if let Event::PriceSet { price } = e {
                    bids.push(price.clone());
                    bids.push(price + &nudge);
                    bids.push(price - &nudge);
                }
            }
        }
        let mut out: Vec<Rational> = Vec::new();
        for b in bids {
            if b.is_positive() && &b != v && !out.contains(&b) {
                out.push(b);
            }
        }
        let top = buyers.iter().map(|b| b.valuation.clone()).max().expect("nonempty") * rational::int(2);
        let mut guard = 0;
        while out.len() < self.min_per_buyer && guard < 10_000 {
            guard += 1;
            let den = rng.gen_range(1..=12i64);
            let max_num = rational::floor_i64(&(&top * rational::int(den))).max(1);
            let b = rational::ratio(rng.gen_range(1..=max_num), den);
            if &b != v && !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }
}

/// Runs the auction with each buyer misreporting along the grid; no
/// misreport may beat truthful utility, and truthful utility must be
/// nonnegative. A finite search: it can refute but not prove truthfulness.
pub fn check_ic(instance: &AuctionInstance, grid: &DeviationGrid, seed: u64) -> Vec<Verdict> {
    const CHECK: &str = "ic";
    let truthful_instance = instance.truthful();
    let options = RunOptions::default();
    let truthful = match run_auction_with(&truthful_instance, &options) {
        Ok(o) => o,
        Err(e) => return vec![Verdict::fail(CHECK, "ic", e.to_string(), json!({ "error": e.to_string() }))],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ir_failure = None;
    let mut ic_failure = None;
    let mut tried = 0usize;
    let mut fewest = usize::MAX;
    for i in 0..instance.n() {
        let honest = truthful.utility(&truthful_instance, i);
        if ir_failure.is_none() && honest.is_negative() {
            ir_failure = Some((format!("buyer {} has truthful utility {honest}", i + 1), json!({ "buyer": i + 1, "utility": r(&honest) })));
        }
        let bids = grid.bids_for(&truthful_instance, &truthful, i, &mut rng);
        fewest = fewest.min(bids.len());
        for bid in bids {
            tried += 1;
            let deviated = truthful_instance.with_bid(i, bid.clone()).and_then(|inst| run_auction_with(&inst, &options));
            match deviated {
                Ok(out) => {
                    let gained = out.utility(&truthful_instance, i);
                    if gained > honest && ic_failure.is_none() {
                        ic_failure = Some((
                            format!("buyer {} gains {gained} > {honest} by bidding {bid}", i + 1),
                            json!({ "buyer": i + 1, "bid": r(&bid), "deviation_utility": r(&gained), "truthful_utility": r(&honest) }),
                        ));
                    }
                }
                Err(e) => {
                    ic_failure.get_or_insert((e.to_string(), json!({ "buyer": i + 1, "bid": r(&bid) })));
                }
            }
        }
    }
    vec![
        from_first_failure(CHECK, "ir", "truthful utilities are nonnegative", ir_failure),
        from_first_failure(
            CHECK,
            "ic",
            format!("{tried} deviations (at least {fewest} per buyer) never beat truthful bidding"),
            ic_failure,
        ),
    ]
}

// ---------------------------------------------------------------------------
// Everything

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub guards: Guards,
    /// Deviation grid for the incentive check; `None` skips it.
    pub ic: Option<DeviationGrid>,
    /// Random orders tried by the order-invariance check.
    pub permutations: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { guards: Guards::default(), ic: Some(DeviationGrid::default()), permutations: 10, seed: 0 }
    }
}

/// Runs every check. The Pareto search is skipped (informationally) when the
/// integer box exceeds the lattice guard.
pub fn audit_all(instance: &AuctionInstance, outcome: &AuctionOutcome, options: &AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    report.extend(check_trace(instance, outcome));
    report.extend(check_clinch_oracle(instance, outcome));
    report.extend(check_order_invariance(instance, outcome, options.permutations, options.seed));
    report.extend(check_tight_sets(instance, outcome));
    if options.guards.check_lattice(&instance.capacities()).is_ok() {
        report.extend(check_pareto(instance, outcome, &options.guards));
    } else {
        report.verdicts.push(Verdict::pass("pareto", "revenue", "skipped: integer box exceeds the guard").informational());
    }
    report.extend(check_welfare_bounds(instance, outcome));
    report.extend(check_trading_pairs(instance, outcome));
    if let Some(grid) = &options.ic {
        report.extend(check_ic(instance, grid, options.seed));
    }
    report.extend(check_envy_free(instance, outcome));
    report
}
