mod common;

use frpsim::fixtures;
use frpsim::network::compute_isf;
use frpsim::scenario::{sample_scenarios, Purpose};
use frpsim::suc::{run_suc, SucOptions, SucSolution};
use frpsim::SystemInstance;
use proptest::prelude::*;

fn solve(inst: &SystemInstance, count: usize, seed: u64, opts: SucOptions) -> SucSolution {
    let isf = compute_isf(inst).unwrap();
    let scenarios = sample_scenarios(inst, count, seed, Purpose::InSample);
    run_suc(inst, &isf, &scenarios, &opts, &common::exact()).unwrap()
}

fn total_curtailment(sol: &SucSolution) -> f64 {
    sol.curtailment.iter().flatten().flatten().sum()
}

fn close(a: f64, b: f64) -> f64 {
    1e-6 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn hour_blocking_never_lowers_the_objective() {
    let inst = fixtures::oracle_two_dg();
    for seed in 0..6 {
        let free = solve(&inst, 4, seed, SucOptions { hour_blocking: false, ..SucOptions::default() });
        let blocked = solve(&inst, 4, seed, SucOptions::default());
        assert!(
            blocked.expected_total_cost >= free.expected_total_cost - close(blocked.expected_total_cost, free.expected_total_cost),
            "seed {seed}: {} < {}",
            blocked.expected_total_cost,
            free.expected_total_cost
        );
        // blocked commitment is constant within every hour
        let k = inst.time_grid.subperiods_per_hour;
        for row in &blocked.commitment {
            for hour in row.chunks(k) {
                assert!(hour.iter().all(|&u| u == hour[0]));
            }
        }
    }
}

proptest! {
    #![proptest_config(common::seeded(12))]

    #[test]
    fn higher_curtailment_penalty_costs_more_and_curtails_less(
        seed in 0u64..1000,
        scale in 0.8f64..1.4,
        low in 50.0f64..400.0,
        raise in 1.0f64..10.0,
    ) {
        let mut inst = fixtures::oracle_two_dg().scaled_load(scale);
        inst.curtailment_penalty = low;
        let cheap = solve(&inst, 3, seed, SucOptions::default());
        inst.curtailment_penalty = low * raise;
        let dear = solve(&inst, 3, seed, SucOptions::default());
        let (a, b) = (cheap.expected_total_cost, dear.expected_total_cost);
        prop_assert!(b >= a - close(a, b));
        prop_assert!(total_curtailment(&dear) <= total_curtailment(&cheap) + 1e-6);
    }

    #[test]
    fn dispatch_respects_capacity_and_ramps(seed in 0u64..1000, scale in 0.6f64..1.5, hours in 2usize..4) {
        let inst = fixtures::ramping_ring(hours).scaled_load(scale);
        let sol = solve(&inst, 2, seed, SucOptions::default());
        let k = inst.time_grid.subperiods_per_hour as f64;
        for (g, dg) in inst.dgs.iter().enumerate() {
            let u = &sol.commitment[g];
            for p in sol.dispatch.iter().map(|d| &d[g]) {
                let mut prev_p = if dg.initial.committed { dg.initial.power_above_min } else { 0.0 };
                let mut prev_u = dg.initial.committed;
                for t in 0..u.len() {
                    let on = if u[t] { 1.0 } else { 0.0 };
                    prop_assert!(p[t] >= -1e-7 && p[t] <= on * (dg.p_max - dg.p_min) + 1e-6);
                    let prev_on = if prev_u { 1.0 } else { 0.0 };
                    let v = if sol.startup[g][t] { 1.0 } else { 0.0 };
                    let w = if sol.shutdown[g][t] { 1.0 } else { 0.0 };
                    if v + w > 1.0 {
                        // a restart is only open before the first full minimum-down window
                        prop_assert!(t + 1 < dg.min_down * inst.time_grid.subperiods_per_hour);
                    }
                    let stop_coef = dg.shutdown_rate - dg.ramp_down / k - dg.p_min;
                    prop_assert!(p[t] - prev_p <= dg.ramp_up / k * prev_on + (dg.startup_rate - dg.p_min) * v + 1e-6);
                    prop_assert!(p[t] - prev_p + dg.ramp_down / k * prev_on + stop_coef * w >= -1e-6);
                    if prev_u && !u[t] {
                        prop_assert!(prev_p <= dg.shutdown_rate - dg.p_min + 1e-6);
                    }
                    prev_p = p[t];
                    prev_u = u[t];
                }
            }
        }
    }
}
