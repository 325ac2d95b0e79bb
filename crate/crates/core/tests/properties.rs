//! Randomized invariants over generated markets.

use clinch_core::audit::{
    self, check_clinch_oracle, check_tight_sets, check_trace, check_trading_pairs, check_welfare_bounds,
    pareto_improvements, pareto_improvements_by_agent, Verdict,
};
use clinch_core::auction::{run_auction, AuctionInstance, AuctionOutcome};
use clinch_core::instances::{self, generate, Family, GenParams};
use clinch_core::polymatroid;
use clinch_core::rational::{int, ratio};
use clinch_core::welfare::{liquid_welfare, lw_brute, lw_optimal, lw_optimal_ordered, social_welfare, split_liquid_value, split_virtual};
use clinch_core::{Guards, Rational};
use proptest::prelude::*;
use proptest::sample::Index;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

/// A valid generated market with `n ≤ max_n` and `f(N) ≤ max_supply`.
fn market(max_n: usize, max_supply: i64) -> impl Strategy<Value = AuctionInstance> {
    (family(), 2..=max_n, 1..=max_supply, any::<u64>())
        .prop_map(|(fam, n, m, seed)| generate(fam, GenParams::new(n, m), seed).expect("generator succeeds"))
}

fn assert_clean(verdicts: &[Verdict]) -> Result<(), TestCaseError> {
    for v in verdicts {
        prop_assert!(v.passed || !v.asserted, "{}/{}: {} {:?}", v.check, v.clause, v.detail, v.witness);
    }
    Ok(())
}

fn run(inst: &AuctionInstance) -> AuctionOutcome {
    run_auction(inst).expect("auction runs")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn auction_outcomes_satisfy_every_structural_check(inst in market(6, 8)) {
        let out = run(&inst);
        assert_clean(&check_trace(&inst, &out))?;
        assert_clean(&check_clinch_oracle(&inst, &out))?;
        assert_clean(&check_tight_sets(&inst, &out))?;
        assert_clean(&check_welfare_bounds(&inst, &out))?;
        assert_clean(&check_trading_pairs(&inst, &out))?;
    }

    #[test]
    fn budgets_respected_and_supply_exhausted(inst in market(6, 8)) {
        let out = run(&inst);
        for (b, p) in inst.buyers().iter().zip(&out.p_final) {
            prop_assert!(*p >= int(0) && *p <= b.budget);
        }
        prop_assert_eq!(out.x_final.iter().sum::<i64>(), inst.supply());
        prop_assert!(out.iterations <= audit::iteration_bound(&inst));
    }

    #[test]
    fn auction_is_deterministic(inst in market(5, 6)) {
        prop_assert_eq!(run(&inst), run(&inst));
    }

    #[test]
    fn welfare_ordering(inst in market(6, 8)) {
        let out = run(&inst);
        let lw = liquid_welfare(&inst, &out.x_final).unwrap();
        let sw = social_welfare(&inst, &out.x_final).unwrap();
        let opt = lw_optimal(&inst).unwrap().lw_value;
        prop_assert!(lw <= sw);
        prop_assert!(lw <= opt);
        prop_assert!(int(2) * &lw >= opt);
    }

    #[test]
    fn greedy_matches_exhaustive_optimum(inst in market(5, 6)) {
        let res = lw_optimal(&inst).unwrap();
        prop_assert_eq!(&res.lw_value, &lw_brute(&inst, &Guards::default()).unwrap());
        prop_assert!(polymatroid::membership(inst.oracle(), &res.x_star).unwrap());
        prop_assert_eq!(liquid_welfare(&inst, &res.x_star).unwrap(), res.lw_value);
    }

    #[test]
    fn greedy_value_ignores_tie_breaking(inst in market(5, 6), picks in prop::collection::vec(any::<Index>(), 10)) {
        // shuffle within each block of equal virtual valuations
        let virtuals = split_virtual(&inst);
        let mut order: Vec<usize> = (0..virtuals.len()).collect();
        let mut start = 0;
        let mut pick = picks.iter().cycle();
        while start < order.len() {
            let end = (start..order.len()).find(|&k| virtuals[k].valuation != virtuals[start].valuation).unwrap_or(order.len());
            for k in (start + 1..end).rev() {
                let j = start + pick.next().unwrap().index(k - start + 1);
                order.swap(k, j);
            }
            start = end;
        }
        let shuffled = lw_optimal_ordered(&inst, &order).unwrap();
        prop_assert_eq!(shuffled.lw_value, lw_optimal(&inst).unwrap().lw_value);
    }

    #[test]
    fn split_value_equals_capped_value(v_num in 1i64..40, v_den in 1i64..6, b_num in 1i64..60, b_den in 1i64..6, x in 0i64..12) {
        let (v, b) = (ratio(v_num, v_den), ratio(b_num, b_den));
        let direct = (&v * int(x)).min(b.clone());
        prop_assert_eq!(split_liquid_value(&v, &b, x), direct);
    }

    #[test]
    fn pareto_formulations_agree(inst in market(4, 5), seed in any::<u64>()) {
        // random feasible allocation with payments in [0, v x_i]
        let mut points = Vec::new();
        polymatroid::for_each_integer_point(inst.oracle(), 1 << 20, |x| points.push(x.to_vec())).unwrap();
        let x = &points[(seed as usize) % points.len()];
        let p: Vec<Rational> = inst
            .buyers()
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (b, &xi))| {
                let cap = (&b.valuation * int(xi)).min(b.budget.clone());
                cap * ratio(((seed >> (4 * i)) % 5) as i64, 4)
            })
            .map(|p| p.min(int(1_000)))
            .collect();
        let guards = Guards::default();
        let by_revenue = pareto_improvements(&inst, x, &p, &guards).unwrap();
        let by_agent = pareto_improvements_by_agent(&inst, x, &p, &guards).unwrap();
        prop_assert_eq!(by_revenue.is_some(), by_agent.is_some());
    }

    #[test]
    fn auction_outcome_is_pareto_optimal(inst in market(4, 5)) {
        let out = run(&inst);
        let guards = Guards::default();
        prop_assert_eq!(pareto_improvements(&inst, &out.x_final, &out.p_final, &guards).unwrap(), None);
    }

    #[test]
    fn overcharging_is_caught(inst in market(5, 6), who in any::<Index>()) {
        let mut out = run(&inst);
        let i = who.index(inst.n());
        out.p_final[i] = &inst.buyers()[i].budget + ratio(1, 7);
        let verdicts = check_trace(&inst, &out);
        prop_assert!(verdicts.iter().any(|v| v.asserted && !v.passed));
    }

    #[test]
    fn documents_round_trip(inst in market(6, 8)) {
        let text = instances::save(&inst);
        let back = instances::load(&text).unwrap();
        prop_assert_eq!(instances::save(&back), text);
        prop_assert_eq!(back, inst);
    }
}
