#![allow(dead_code)]

use frpsim::damc::{run_damc, DamResult, DamVariant, DamcOptions};
use frpsim::frp::{compute_frp_requirements, FrpRequirements};
use frpsim::milp::SolverOptions;
use frpsim::network::{compute_isf, IsfMatrix};
use frpsim::scenario::{sample_scenarios, Purpose, ScenarioSet};
use frpsim::suc::{run_suc, SucOptions, SucSolution};
use frpsim::SystemInstance;

pub fn solver() -> SolverOptions {
    SolverOptions {
        threads: Some(1),
        ..SolverOptions::default()
    }
}

/// Commitment stage, requirements and ISF for `count` in-sample scenarios.
pub struct Upstream {
    pub isf: IsfMatrix,
    pub scenarios: ScenarioSet,
    pub suc: SucSolution,
    pub req: FrpRequirements,
}

pub fn upstream(inst: &SystemInstance, count: usize, seed: u64) -> Upstream {
    let isf = compute_isf(inst).unwrap();
    let scenarios = sample_scenarios(inst, count, seed, Purpose::InSample);
    let suc = run_suc(inst, &isf, &scenarios, &SucOptions::default(), &solver()).unwrap();
    let req = compute_frp_requirements(&scenarios, &suc, inst.time_grid.subperiods_per_hour).unwrap();
    Upstream {
        isf,
        scenarios,
        suc,
        req,
    }
}

pub fn clear(inst: &SystemInstance, up: &Upstream, variant: DamVariant) -> DamResult {
    let d_hat = inst.compute_hourly_bid_demand();
    let ci;
    let req = match variant {
        DamVariant::Without => None,
        DamVariant::Ci95 => {
            ci = frpsim::frp::compute_ci95_requirements(inst, &d_hat);
            Some(&ci)
        }
        _ => Some(&up.req),
    };
    run_damc(
        inst,
        &up.isf,
        &d_hat,
        req,
        Some(&up.suc),
        variant,
        &DamcOptions::default(),
        &solver(),
    )
    .unwrap()
}

/// Solver options that close the MIP gap, for comparisons between solves.
pub fn exact() -> SolverOptions {
    SolverOptions {
        gap: 0.0,
        ..solver()
    }
}

/// Property-test config with a fixed seed, for properties that call the solver.
pub fn seeded(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        ..Default::default()
    }
}
