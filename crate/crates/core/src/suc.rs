//! Two-stage stochastic unit commitment solved as one extensive-form MILP.
//!
//! Commitment, startup and shutdown decisions are shared by all scenarios;
//! every scenario owns a full intra-hourly dispatch with curtailment, system
//! balance and line-flow limits. The objective charges no-load, dispatch and
//! curtailment costs per subperiod weighted by the subperiod duration, plus
//! startup costs once per startup.
use crate::instance::{SystemInstance, TimeGrid};
use crate::milp::{self, LinExpr, ModelBuilder, SolveStatus, SolverError, SolverOptions};
use crate::network::IsfMatrix;
use crate::scenario::{Purpose, ScenarioSet};
use crate::unit::{self, CommitmentVars, Demand, DispatchVars, UnitState};
use crate::milp::VarId;
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Which startup/shutdown coefficient the ramp-down rows use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampMode {
    /// Shutdown rate and ramp-down rate in the shutdown term.
    #[default]
    Corrected,
    /// Startup rate and ramp-up rate in the shutdown term.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SucOptions {
    pub ramp_mode: RampMode,
    /// Commitment held constant within each hour.
    pub hour_blocking: bool,
    /// Start without flow rows and add the violated ones until none remain.
    /// The final solution is optimal for the full model.
    pub screen_flows: bool,
    /// With more scenarios than this, a model over the first ones is solved
    /// first and its commitment seeds the full solve. 0 disables it.
    pub warm_start_scenarios: usize,
}

impl Default for SucOptions {
    fn default() -> Self {
        Self {
            ramp_mode: RampMode::Corrected,
            hour_blocking: true,
            screen_flows: true,
            warm_start_scenarios: 10,
        }
    }
}

#[derive(Debug, Error)]
pub enum SucError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("commitment model is infeasible")]
    Infeasible,
    #[error("commitment solve ended with status {0:?}")]
    NotOptimal(SolveStatus),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// The extensive-form model plus the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct SucModel {
    pub model: ModelBuilder,
    pub options: SucOptions,
    grid: TimeGrid,
    dg_ids: Vec<String>,
    scenario_count: usize,
    commitment: CommitmentVars,
    dispatch: Vec<DispatchVars>,
    /// `[scenario][subperiod][node]`
    curtail: Vec<Vec<Vec<VarId>>>,
    /// `[scenario][subperiod][node]`, kept for flow screening.
    injection: Vec<Vec<Vec<LinExpr>>>,
    first_stage: LinExpr,
    stage2: Vec<LinExpr>,
    limited: Vec<usize>,
    flow_rows: BTreeSet<(usize, usize)>,
    line_limits: Vec<(f64, f64)>,
    isf: IsfMatrix,
    instance: SystemInstance,
}

impl SucModel {
    pub fn num_vars(&self) -> usize {
        self.model.num_vars()
    }

    pub fn num_constraints(&self) -> usize {
        self.model.num_constraints()
    }

    /// (line, subperiod) pairs whose flow rows are in the model.
    pub fn flow_rows(&self) -> &BTreeSet<(usize, usize)> {
        &self.flow_rows
    }

    fn add_flow_rows(&mut self, line: usize, k: usize) {
        if !self.flow_rows.insert((line, k)) {
            return;
        }
        for i in 0..self.scenario_count {
            unit::add_flow_limit(&mut self.model, &self.instance, &self.isf, line, &self.injection[i][k]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SucSolution {
    pub grid: TimeGrid,
    pub dg_ids: Vec<String>,
    /// `[dg][subperiod]`
    pub commitment: Vec<Vec<bool>>,
    pub startup: Vec<Vec<bool>>,
    pub shutdown: Vec<Vec<bool>>,
    /// Output above minimum, `[scenario][dg][subperiod]` MW.
    pub dispatch: Vec<Vec<Vec<f64>>>,
    /// `[scenario][dg][segment][subperiod]` MW.
    pub segment_dispatch: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[scenario][node][subperiod]` MW.
    pub curtailment: Vec<Vec<Vec<f64>>>,
    pub expected_total_cost: f64,
    pub first_stage_cost: f64,
    pub stage2_costs: Vec<f64>,
    pub mip_gap: f64,
}

impl SucSolution {
    pub fn scenario_count(&self) -> usize {
        self.dispatch.len()
    }

    /// Commitment of `dg` in hour `h`, read at the hour's last subperiod.
    pub fn hourly_commitment(&self, dg: usize, h: usize) -> bool {
        self.commitment[dg][(h + 1) * self.grid.subperiods_per_hour - 1]
    }

    /// `[dg][hour]` commitment matrix.
    pub fn hourly_commitments(&self) -> Vec<Vec<bool>> {
        (0..self.dg_ids.len())
            .map(|g| (0..self.grid.hours).map(|h| self.hourly_commitment(g, h)).collect())
            .collect()
    }

    /// System net load actually served in scenario `i`, subperiod `k`.
    pub fn served_load(&self, scenarios: &ScenarioSet, i: usize, k: usize) -> f64 {
        (0..scenarios.nodes)
            .map(|n| scenarios.get(i, n, k) - self.curtailment[i][n][k])
            .sum()
    }
}

/// Builds the extensive-form commitment model over the in-sample scenarios.
pub fn build_suc(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    scenarios: &ScenarioSet,
    options: &SucOptions,
) -> Result<SucModel, SucError> {
    if scenarios.purpose != Purpose::InSample {
        return Err(SucError::DimensionMismatch(
            "commitment requires in-sample scenarios".into(),
        ));
    }
    if !scenarios.matches(instance) || scenarios.count == 0 {
        return Err(SucError::DimensionMismatch(format!(
            "scenarios are {} nodes x {} subperiods, instance is {} x {}",
            scenarios.nodes,
            scenarios.subperiods,
            instance.num_nodes(),
            instance.time_grid.subperiods()
        )));
    }
    if isf.num_nodes() != instance.num_nodes() || isf.num_lines() != instance.lines.len() {
        return Err(SucError::DimensionMismatch("ISF matrix does not match the instance".into()));
    }
    let grid = instance.time_grid;
    let kph = grid.subperiods_per_hour;
    let steps = grid.subperiods();
    let count = scenarios.count;
    let step_hours = grid.subperiod_hours();
    let weight = step_hours / count as f64;

    let mut model = ModelBuilder::new();
    let commitment = unit::add_commitment_vars(&mut model, instance, kph, grid.hours, options.hour_blocking);
    let first_stage = {
        let mut e = LinExpr::new();
        for (g, dg) in instance.dgs.iter().enumerate() {
            for t in 0..steps {
                e.add_term(commitment.u[g][t], dg.no_load_cost * step_hours);
                e.add_term(commitment.v[g][t], dg.startup_cost);
            }
        }
        e
    };
    let exprs = commitment.exprs();
    let initial: Vec<UnitState> = instance.dgs.iter().map(UnitState::initial).collect();
    let limited = unit::limited_lines(instance);

    let mut dispatch = Vec::with_capacity(count);
    let mut curtail = Vec::with_capacity(count);
    let mut injection = Vec::with_capacity(count);
    let mut stage2 = Vec::with_capacity(count);
    for i in 0..count {
        let d = unit::add_dispatch(&mut model, instance, &exprs, kph, &initial, options.ramp_mode, weight);
        let mut cost = LinExpr::new();
        for (g, dg) in instance.dgs.iter().enumerate() {
            for (s, seg) in d.seg[g].iter().enumerate() {
                for &x in seg {
                    cost.add_term(x, dg.segments[s].marginal_cost * step_hours);
                }
            }
        }
        let mut curt_i = Vec::with_capacity(steps);
        let mut inj_i = Vec::with_capacity(steps);
        for k in 0..steps {
            let load: Vec<f64> = (0..instance.num_nodes()).map(|n| scenarios.get(i, n, k)).collect();
            let gen = unit::nodal_generation(instance, &exprs, &d, k);
            let bal = unit::add_nodal_balance(
                &mut model,
                gen,
                Demand::Constant(&load),
                weight * instance.curtailment_penalty,
                None,
            );
            for &c in &bal.curtail {
                cost.add_term(c, instance.curtailment_penalty * step_hours);
            }
            if !options.screen_flows {
                for &l in &limited {
                    unit::add_flow_limit(&mut model, instance, isf, l, &bal.injection);
                }
            }
            curt_i.push(bal.curtail);
            inj_i.push(bal.injection);
        }
        dispatch.push(d);
        curtail.push(curt_i);
        injection.push(inj_i);
        stage2.push(cost);
    }
    let flow_rows = if options.screen_flows {
        BTreeSet::new()
    } else {
        limited.iter().flat_map(|&l| (0..steps).map(move |k| (l, k))).collect()
    };
    debug!(
        "commitment model: {} columns, {} rows, {} binaries",
        model.num_vars(),
        model.num_constraints(),
        model.num_binaries()
    );
    Ok(SucModel {
        model,
        options: *options,
        grid,
        dg_ids: instance.dgs.iter().map(|d| d.id.clone()).collect(),
        scenario_count: count,
        commitment,
        dispatch,
        curtail,
        injection,
        first_stage,
        stage2,
        line_limits: instance.lines.iter().map(|l| (l.flow_min, l.flow_max)).collect(),
        limited,
        flow_rows,
        isf: isf.clone(),
        instance: instance.clone(),
    })
}

/// Flow violations above this many MW trigger new rows during screening.
const SCREEN_TOL: f64 = 1e-6;

/// Solves the commitment model; with flow screening enabled the violated flow
/// rows are added and the model re-solved until the solution is feasible for
/// every line.
pub fn solve_suc(sm: &mut SucModel, solver: &SolverOptions) -> Result<SucSolution, SucError> {
    let mut round = 0;
    loop {
        let sol = milp::solve(&sm.model, solver)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::TimeLimit if !sol.values.is_empty() => {
                warn!("commitment solve hit the time limit, keeping the incumbent at gap {:.3e}", sol.mip_gap);
            }
            SolveStatus::Infeasible => return Err(SucError::Infeasible),
            other => return Err(SucError::NotOptimal(other)),
        }
        let violated = violated_flows(sm, &sol);
        if violated.is_empty() {
            return Ok(extract(sm, &sol));
        }
        round += 1;
        info!("flow screening round {round}: adding {} line-subperiod pairs", violated.len());
        for (l, k) in violated {
            sm.add_flow_rows(l, k);
        }
        let plan = extract(sm, &sol);
        seed_start(sm, &plan, solver)?;
    }
}

/// Fixes the commitment of `plan` in a copy of the model and, when the
/// remaining dispatch problem is feasible, keeps its optimum as the MIP start.
/// Flow rows violated by the point are screened in along the way.
fn seed_start(sm: &mut SucModel, plan: &SucSolution, solver: &SolverOptions) -> Result<(), SucError> {
    sm.model.clear_start();
    loop {
        let mut fixed = sm.model.clone();
        let sets = [
            (&sm.commitment.u, &plan.commitment),
            (&sm.commitment.v, &plan.startup),
            (&sm.commitment.w, &plan.shutdown),
        ];
        for (vars, values) in sets {
            for (row, bits) in vars.iter().zip(values) {
                for (&v, &b) in row.iter().zip(bits) {
                    let x = if b { 1.0 } else { 0.0 };
                    fixed.set_bounds(v, x, x);
                }
            }
        }
        let sol = milp::solve(&fixed, solver)?;
        if sol.status != SolveStatus::Optimal {
            debug!("seed commitment is not feasible for the full model ({:?})", sol.status);
            return Ok(());
        }
        let violated = violated_flows(sm, &sol);
        if violated.is_empty() {
            sm.model.set_start(sol.values);
            return Ok(());
        }
        for (l, k) in violated {
            sm.add_flow_rows(l, k);
        }
    }
}

/// Limited (line, subperiod) pairs without rows whose flow is out of bounds
/// in some scenario.
fn violated_flows(sm: &SucModel, sol: &milp::Solution) -> BTreeSet<(usize, usize)> {
    let mut violated = BTreeSet::new();
    for &l in &sm.limited {
        let (lo, hi) = sm.line_limits[l];
        for k in 0..sm.grid.subperiods() {
            if sm.flow_rows.contains(&(l, k)) {
                continue;
            }
            let bad = (0..sm.scenario_count).any(|i| {
                let f = unit::flow_expr(&sm.isf, l, &sm.injection[i][k]).eval(&sol.values);
                f > hi + SCREEN_TOL || f < lo - SCREEN_TOL
            });
            if bad {
                violated.insert((l, k));
            }
        }
    }
    violated
}

fn extract(sm: &SucModel, sol: &milp::Solution) -> SucSolution {
    let bin = |x: &Vec<Vec<VarId>>| -> Vec<Vec<bool>> {
        x.iter()
            .map(|row| row.iter().map(|&v| sol.value(v) > 0.5).collect())
            .collect()
    };
    let val = |v: VarId| sol.value(v).max(0.0);
    let dispatch = sm
        .dispatch
        .iter()
        .map(|d| d.p.iter().map(|row| row.iter().map(|&v| val(v)).collect()).collect())
        .collect();
    let segment_dispatch = sm
        .dispatch
        .iter()
        .map(|d| {
            d.seg
                .iter()
                .map(|segs| segs.iter().map(|row| row.iter().map(|&v| val(v)).collect()).collect())
                .collect()
        })
        .collect();
    let nodes = sm.instance.num_nodes();
    let curtailment = sm
        .curtail
        .iter()
        .map(|ck| {
            (0..nodes)
                .map(|n| ck.iter().map(|row| val(row[n])).collect())
                .collect()
        })
        .collect();
    let first_stage_cost = sol.eval(&sm.first_stage);
    let stage2_costs: Vec<f64> = sm.stage2.iter().map(|e| sol.eval(e)).collect();
    SucSolution {
        grid: sm.grid,
        dg_ids: sm.dg_ids.clone(),
        commitment: bin(&sm.commitment.u),
        startup: bin(&sm.commitment.v),
        shutdown: bin(&sm.commitment.w),
        dispatch,
        segment_dispatch,
        curtailment,
        expected_total_cost: sol.objective,
        first_stage_cost,
        stage2_costs,
        mip_gap: sol.mip_gap,
    }
}

/// Builds and solves in one call.
pub fn run_suc(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    scenarios: &ScenarioSet,
    options: &SucOptions,
    solver: &SolverOptions,
) -> Result<SucSolution, SucError> {
    let mut m = build_suc(instance, isf, scenarios, options)?;
    let head = options.warm_start_scenarios;
    if head > 0 && scenarios.count > head {
        let first: Vec<_> = (0..head).map(|i| scenarios.trajectory(i)).collect();
        let subset = ScenarioSet::from_trajectories(scenarios.seed, scenarios.purpose, &first);
        let mut small = build_suc(instance, isf, &subset, &SucOptions { warm_start_scenarios: 0, ..*options })?;
        let plan = solve_suc(&mut small, solver)?;
        info!("warm start from {head} scenarios, cost {:.2}", plan.expected_total_cost);
        for &(l, k) in small.flow_rows() {
            m.add_flow_rows(l, k);
        }
        seed_start(&mut m, &plan, solver)?;
    }
    solve_suc(&mut m, solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::compute_isf;
    use crate::scenario::sample_scenarios;
    use approx::assert_relative_eq;

    fn solve(inst: &SystemInstance, count: usize, opts: &SucOptions) -> (ScenarioSet, SucSolution) {
        let isf = compute_isf(inst).unwrap();
        let sc = sample_scenarios(inst, count, 3, Purpose::InSample);
        let sol = run_suc(inst, &isf, &sc, opts, &SolverOptions::default()).unwrap();
        (sc, sol)
    }

    #[test]
    fn counts_for_one_dg_one_node() {
        // 1 DG with 2 segments, 1 node, K = 1, H hours, one scenario:
        // columns 3H binaries + H (p) + 2H (segments) + H (curtailment)
        // rows    H logic + (H - min_up + 1) up + (H - min_down + 1) down
        //         + 4H dispatch rows (cap, ramp up, ramp down, link) + H balance
        let hours = 5;
        let inst = fixtures::single_node(1, hours);
        let isf = compute_isf(&inst).unwrap();
        let sc = sample_scenarios(&inst, 1, 1, Purpose::InSample);
        let m = build_suc(&inst, &isf, &sc, &SucOptions::default()).unwrap();
        let dg = &inst.dgs[0];
        assert_eq!(m.num_vars(), 3 * hours + hours + 2 * hours + hours);
        let rows = hours + (hours - dg.min_up + 1) + (hours - dg.min_down + 1) + 4 * hours + hours;
        assert_eq!(m.num_constraints(), rows);
        assert_eq!(m.model.num_binaries(), 3 * hours);
    }

    #[test]
    fn duplicate_scenarios_keep_the_objective() {
        let inst = fixtures::oracle_two_dg();
        let isf = compute_isf(&inst).unwrap();
        let one = sample_scenarios(&inst, 1, 9, Purpose::InSample);
        let twice = ScenarioSet::from_trajectories(9, Purpose::InSample, &[one.trajectory(0), one.trajectory(0)]);
        let o = SolverOptions::default();
        let a = run_suc(&inst, &isf, &one, &SucOptions::default(), &o).unwrap();
        let b = run_suc(&inst, &isf, &twice, &SucOptions::default(), &o).unwrap();
        assert_relative_eq!(a.expected_total_cost, b.expected_total_cost, max_relative = 1e-7);
    }

    #[test]
    fn curtailment_only_when_no_generators() {
        let mut inst = fixtures::three_node_ring(2, 2);
        inst.dgs.clear();
        let (sc, sol) = solve(&inst, 2, &SucOptions::default());
        let mut expected = 0.0;
        for i in 0..2 {
            let total: f64 = sc.trajectory(i).iter().flatten().map(|x| x.max(0.0)).sum();
            expected += inst.curtailment_penalty * total / 2.0 / 2.0;
            for k in 0..4 {
                assert!(sol.served_load(&sc, i, k).abs() < 1e-6);
            }
        }
        assert_relative_eq!(sol.expected_total_cost, expected, max_relative = 1e-7);
    }

    #[test]
    fn cheap_unit_follows_load() {
        let inst = fixtures::single_node(4, 3);
        let (sc, sol) = solve(&inst, 3, &SucOptions::default());
        for i in 0..3 {
            for k in 0..12 {
                assert!(sol.curtailment[i][0][k] < 1e-7);
                let gen = inst.dgs[0].p_min + sol.dispatch[i][0][k];
                assert!((gen - sc.get(i, 0, k)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cost_decomposition() {
        let inst = fixtures::oracle_two_dg();
        let (_, sol) = solve(&inst, 4, &SucOptions::default());
        let avg: f64 = sol.stage2_costs.iter().sum::<f64>() / 4.0;
        assert_relative_eq!(sol.expected_total_cost, sol.first_stage_cost + avg, max_relative = 1e-6);
    }

    #[test]
    fn screening_matches_full_flow_model() {
        let inst = fixtures::congested_ring(3);
        let isf = compute_isf(&inst).unwrap();
        let sc = sample_scenarios(&inst, 3, 5, Purpose::InSample);
        let o = SolverOptions { gap: 0.0, ..Default::default() };
        let full = SucOptions { screen_flows: false, ..Default::default() };
        let a = run_suc(&inst, &isf, &sc, &SucOptions::default(), &o).unwrap();
        let b = run_suc(&inst, &isf, &sc, &full, &o).unwrap();
        assert_relative_eq!(a.expected_total_cost, b.expected_total_cost, max_relative = 1e-7);
    }

    #[test]
    fn warm_start_keeps_the_optimum() {
        let inst = fixtures::congested_ring(2);
        let isf = compute_isf(&inst).unwrap();
        let sc = sample_scenarios(&inst, 6, 4, Purpose::InSample);
        let o = SolverOptions { gap: 0.0, ..Default::default() };
        let cold = SucOptions { warm_start_scenarios: 0, ..Default::default() };
        let warm = SucOptions { warm_start_scenarios: 2, ..Default::default() };
        let a = run_suc(&inst, &isf, &sc, &cold, &o).unwrap();
        let b = run_suc(&inst, &isf, &sc, &warm, &o).unwrap();
        assert_relative_eq!(a.expected_total_cost, b.expected_total_cost, max_relative = 1e-7);
    }

    #[test]
    fn out_of_sample_scenarios_rejected() {
        let inst = fixtures::single_node(1, 2);
        let isf = compute_isf(&inst).unwrap();
        let sc = sample_scenarios(&inst, 1, 1, Purpose::OutOfSample);
        assert!(matches!(
            build_suc(&inst, &isf, &sc, &SucOptions::default()),
            Err(SucError::DimensionMismatch(_))
        ));
    }
}
