mod common;

use frpsim::damc::{DamResult, DamVariant};
use frpsim::fixtures;
use frpsim::fmm::{run_fmm_sequence, FmmOptions, FmmTrace, BINDING, SUBPERIODS_PER_HOUR};
use frpsim::scenario::{sample_scenarios, Purpose};
use frpsim::SystemInstance;
use proptest::prelude::*;

fn simulate(inst: &SystemInstance, variant: DamVariant, seed: u64) -> (DamResult, FmmTrace) {
    let up = common::upstream(inst, 2, seed);
    let dam = common::clear(inst, &up, variant);
    let realization = sample_scenarios(inst, 1, seed, Purpose::OutOfSample).trajectory(0);
    let trace = run_fmm_sequence(inst, &up.isf, &dam, &realization, 0, &FmmOptions::default(), &common::solver()).unwrap();
    (dam, trace)
}

fn check_continuity(inst: &SystemInstance, trace: &FmmTrace) {
    let first = &trace.initial_conditions[0];
    for (g, dg) in inst.dgs.iter().enumerate() {
        assert_eq!(first[g].committed, dg.initial.committed);
        let p0 = if dg.initial.committed { dg.initial.power_above_min } else { 0.0 };
        assert_eq!(first[g].above_min, p0);
    }
    for (r, run) in trace.runs.iter().enumerate().skip(1) {
        let prev = &trace.runs[r - 1];
        for g in 0..inst.dgs.len() {
            let carried = trace.initial_conditions[r][g];
            assert_eq!(carried.committed, prev.commitment[g][BINDING - 1], "run {r} dg {g}");
            assert_eq!(carried.above_min, prev.dispatch[g][BINDING - 1], "run {r} dg {g}");
        }
        assert_eq!(run.start_hour, prev.start_hour + 1);
    }
}

#[test]
fn each_window_starts_where_the_last_binding_hour_ended() {
    let inst = fixtures::ramping_ring(4).with_sigma_fraction(0.1);
    for variant in DamVariant::ALL {
        let (_, trace) = simulate(&inst, variant, 11);
        assert_eq!(trace.runs.len(), 4);
        check_continuity(&inst, &trace);
    }
}

proptest! {
    #![proptest_config(common::seeded(10))]

    #[test]
    fn real_time_follows_day_ahead_commitment_and_bounds(
        hours in 2usize..4,
        // lower loads fall below what the initially online unit can ramp down to
        scale in 0.85f64..1.3,
        sigma in 0.0f64..0.1,
        pick in 0usize..4,
        seed in any::<u64>(),
    ) {
        let inst = fixtures::ramping_ring(hours).scaled_load(scale).with_sigma_fraction(sigma);
        let (dam, trace) = simulate(&inst, DamVariant::ALL[pick], seed);
        check_continuity(&inst, &trace);
        let alpha_c = inst.curtailment_penalty;
        for (r, run) in trace.runs.iter().enumerate() {
            for g in 0..inst.dgs.len() {
                for (t, &on) in run.commitment[g].iter().enumerate() {
                    // the advisory hour after the last one repeats it
                    let h = (r + t / SUBPERIODS_PER_HOUR).min(hours - 1);
                    prop_assert_eq!(on, dam.commitment[g][h]);
                }
            }
            for row in &run.lmp {
                for &price in row {
                    prop_assert!(price >= -alpha_c - 1e-6 && price <= alpha_c + 1e-6);
                }
            }
            for t in 0..run.horizon_subperiods {
                let load: f64 = run.net_load.iter().map(|n| n[t]).sum();
                let gen: f64 = inst
                    .dgs
                    .iter()
                    .enumerate()
                    .map(|(g, dg)| if run.commitment[g][t] { dg.p_min + run.dispatch[g][t] } else { 0.0 })
                    .sum();
                let curtail: f64 = run.curtailment.iter().map(|n| n[t]).sum();
                let spill: f64 = run.spill.iter().map(|n| n[t]).sum();
                prop_assert!((gen + curtail - spill - load).abs() < 1e-5 * load.abs().max(1.0));
            }
        }
    }
}
