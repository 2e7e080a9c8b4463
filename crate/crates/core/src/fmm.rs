//! Rolling fifteen-minute real-time market.
//!
//! One dispatch LP per hour over a two-hour window of fifteen-minute
//! subperiods. Commitments come from the day-ahead result and cannot change;
//! only the first hour of each window is binding, and its final dispatch is
//! the starting point of the next window. Each window sees the realized net
//! load of both of its hours.
use crate::damc::{DamResult, DamVariant};
use crate::instance::SystemInstance;
use crate::milp::{self, ModelBuilder, SolveStatus, SolverError, SolverOptions, VarId};
use crate::network::IsfMatrix;
use crate::suc::RampMode;
use crate::unit::{self, Demand, UnitState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUBPERIODS_PER_HOUR: usize = 4;
pub const HORIZON: usize = 2 * SUBPERIODS_PER_HOUR;
pub const BINDING: usize = SUBPERIODS_PER_HOUR;
const STEP_HOURS: f64 = 1.0 / SUBPERIODS_PER_HOUR as f64;

#[derive(Debug, Error)]
pub enum FmmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("real-time dispatch for hour {hour} is infeasible")]
    Infeasible { hour: usize },
    #[error("real-time dispatch for hour {hour} ended with status {status:?}")]
    NotOptimal { hour: usize, status: SolveStatus },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FmmOptions {
    pub ramp_mode: RampMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmRun {
    pub start_hour: usize,
    pub horizon_subperiods: usize,
    pub binding_subperiods: usize,
    /// `[dg][subperiod]`
    pub commitment: Vec<Vec<bool>>,
    /// Output above minimum, `[dg][subperiod]` MW.
    pub dispatch: Vec<Vec<f64>>,
    /// `[node][subperiod]` MW.
    pub curtailment: Vec<Vec<f64>>,
    /// Generation dumped to keep the balance, `[node][subperiod]` MW.
    pub spill: Vec<Vec<f64>>,
    /// `[node][subperiod]` $/MWh.
    pub lmp: Vec<Vec<f64>>,
    /// Net load the window was dispatched against, `[node][subperiod]` MW.
    pub net_load: Vec<Vec<f64>>,
    pub objective: f64,
}

/// State of one DG at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarriedState {
    pub committed: bool,
    pub above_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmTrace {
    pub variant: DamVariant,
    pub realization_id: usize,
    pub runs: Vec<FmmRun>,
    /// `[run][dg]` state each run started from.
    pub initial_conditions: Vec<Vec<CarriedState>>,
}

impl FmmTrace {
    fn binding<'a>(&'a self, pick: impl Fn(&'a FmmRun) -> &'a Vec<Vec<f64>> + 'a, row: usize) -> impl Iterator<Item = f64> + 'a {
        self.runs
            .iter()
            .flat_map(move |r| pick(r)[row][..r.binding_subperiods].iter().copied())
    }

    /// Binding output above minimum of `g` over the day.
    pub fn binding_dispatch(&self, g: usize) -> Vec<f64> {
        self.binding(|r| &r.dispatch, g).collect()
    }

    pub fn binding_commitment(&self, g: usize) -> Vec<bool> {
        self.runs
            .iter()
            .flat_map(|r| r.commitment[g][..r.binding_subperiods].iter().copied())
            .collect()
    }

    pub fn binding_lmp(&self, n: usize) -> Vec<f64> {
        self.binding(|r| &r.lmp, n).collect()
    }

    pub fn binding_curtailment(&self, n: usize) -> Vec<f64> {
        self.binding(|r| &r.curtailment, n).collect()
    }

    pub fn binding_net_load(&self, n: usize) -> Vec<f64> {
        self.binding(|r| &r.net_load, n).collect()
    }

    pub fn total_curtailment(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| {
                r.curtailment
                    .iter()
                    .map(|row| row[..r.binding_subperiods].iter().sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Runs the day's sequence of real-time windows against one realization
/// (`[node][subperiod]`, four subperiods per hour).
pub fn run_fmm_sequence(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    dam: &DamResult,
    realization: &[Vec<f64>],
    realization_id: usize,
    options: &FmmOptions,
    solver: &SolverOptions,
) -> Result<FmmTrace, FmmError> {
    let hours = dam.hours();
    let nodes = instance.num_nodes();
    let dgs = instance.dgs.len();
    if hours != instance.time_grid.hours || dam.commitment.len() != dgs {
        return Err(FmmError::DimensionMismatch("day-ahead result does not match the instance".into()));
    }
    if realization.len() != nodes || realization.iter().any(|r| r.len() != hours * SUBPERIODS_PER_HOUR) {
        return Err(FmmError::DimensionMismatch(format!(
            "realization must be {nodes} nodes x {} subperiods",
            hours * SUBPERIODS_PER_HOUR
        )));
    }

    let mut state: Vec<UnitState> = instance.dgs.iter().map(UnitState::initial).collect();
    let mut runs = Vec::with_capacity(hours);
    let mut initial_conditions = Vec::with_capacity(hours);
    for h in 0..hours {
        initial_conditions.push(
            state
                .iter()
                .map(|s| CarriedState {
                    committed: s.committed,
                    above_min: s.above_min,
                })
                .collect(),
        );
        let run = solve_window(instance, isf, dam, realization, h, &state, options, solver)?;
        for (g, s) in state.iter_mut().enumerate() {
            s.committed = run.commitment[g][BINDING - 1];
            s.above_min = run.dispatch[g][BINDING - 1];
        }
        runs.push(run);
    }
    Ok(FmmTrace {
        variant: dam.variant,
        realization_id,
        runs,
        initial_conditions,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_window(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    dam: &DamResult,
    realization: &[Vec<f64>],
    h: usize,
    state: &[UnitState],
    options: &FmmOptions,
    solver: &SolverOptions,
) -> Result<FmmRun, FmmError> {
    let hours = dam.hours();
    let nodes = instance.num_nodes();
    let last = hours - 1;
    // the advisory hour after the last one repeats the last hour
    let window_hour = |t: usize| (h + t / SUBPERIODS_PER_HOUR).min(last);
    let window_sub = |t: usize| window_hour(t) * SUBPERIODS_PER_HOUR + t % SUBPERIODS_PER_HOUR;

    let status: Vec<Vec<bool>> = dam
        .commitment
        .iter()
        .map(|row| (0..HORIZON).map(|t| row[window_hour(t)]).collect())
        .collect();
    let init_on: Vec<bool> = state.iter().map(|s| s.committed).collect();
    let commitment = unit::fixed_commitment(&status, &init_on);

    let mut model = ModelBuilder::new();
    let dispatch = unit::add_dispatch(
        &mut model,
        instance,
        &commitment,
        SUBPERIODS_PER_HOUR,
        state,
        options.ramp_mode,
        STEP_HOURS,
    );
    let net_load: Vec<Vec<f64>> = (0..nodes)
        .map(|n| (0..HORIZON).map(|t| realization[n][window_sub(t)]).collect())
        .collect();
    let penalty = instance.curtailment_penalty * STEP_HOURS;
    let mut curtail: Vec<Vec<VarId>> = Vec::with_capacity(HORIZON);
    let mut spill: Vec<Vec<VarId>> = Vec::with_capacity(HORIZON);
    let mut demand_rows = Vec::with_capacity(HORIZON);
    for t in 0..HORIZON {
        let load: Vec<f64> = net_load.iter().map(|r| r[t]).collect();
        let gen = unit::nodal_generation(instance, &commitment, &dispatch, t);
        let bal = unit::add_nodal_balance(&mut model, gen, Demand::Priced(&load), penalty, Some(penalty));
        for l in unit::limited_lines(instance) {
            unit::add_flow_limit(&mut model, instance, isf, l, &bal.injection);
        }
        curtail.push(bal.curtail);
        spill.push(bal.spill.expect("spill requested"));
        demand_rows.push(bal.demand_rows.expect("priced demand"));
    }

    let sol = milp::solve(&model, solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(FmmError::Infeasible { hour: h }),
        other => return Err(FmmError::NotOptimal { hour: h, status: other }),
    }
    let duals = sol.duals.as_ref().ok_or_else(|| SolverError::Backend("LP solve returned no duals".into()))?;
    let by_node = |x: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        (0..nodes)
            .map(|n| (0..HORIZON).map(|t| sol.value(x[t][n]).max(0.0)).collect())
            .collect()
    };
    Ok(FmmRun {
        start_hour: h,
        horizon_subperiods: HORIZON,
        binding_subperiods: BINDING,
        dispatch: dispatch
            .p
            .iter()
            .map(|r| r.iter().map(|&v| sol.value(v).max(0.0)).collect())
            .collect(),
        commitment: status,
        curtailment: by_node(&curtail),
        spill: by_node(&spill),
        lmp: (0..nodes)
            .map(|n| {
                (0..HORIZON)
                    .map(|t| duals[demand_rows[t][n].0] / STEP_HOURS)
                    .collect()
            })
            .collect(),
        net_load,
        objective: sol.objective,
    })
}

/// Expands an hourly series to fifteen-minute subperiods.
pub fn repeat_hourly(hourly: &[f64]) -> Vec<f64> {
    hourly
        .iter()
        .flat_map(|&x| std::iter::repeat(x).take(SUBPERIODS_PER_HOUR))
        .collect()
}
