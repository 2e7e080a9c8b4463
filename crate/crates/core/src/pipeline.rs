//! End-to-end experiment: sample, commit, derive requirements, clear the
//! day-ahead market per variant, run the real-time sequence per
//! out-of-sample realization and settle.
pub mod report;

use crate::damc::{run_damc, DamResult, DamVariant, DamcError, DamcOptions};
use crate::fmm::{run_fmm_sequence, FmmError, FmmOptions, FmmTrace};
use crate::frp::{compute_ci95_requirements, compute_frp_requirements, FrpError, FrpRequirements};
use crate::instance::{instance_to_json, load_instance, InstanceError, SystemInstance};
use crate::milp::SolverOptions;
use crate::network::{compute_isf, IsfMatrix, NetworkError};
use crate::scenario::{sample_scenarios, Purpose, ScenarioSet};
use crate::settlement::{aggregate, settle, SettlementError, SettlementReport, Totals};
use crate::suc::{run_suc, RampMode, SucError, SucOptions, SucSolution};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use report::{emit_report, ReportFormat};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("instance: {0}")]
    Instance(#[from] InstanceError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("commitment stage: {0}")]
    Suc(#[from] SucError),
    #[error("requirement stage: {0}")]
    Frp(#[from] FrpError),
    #[error("day-ahead stage ({variant}): {source}")]
    Damc { variant: DamVariant, source: DamcError },
    #[error("real-time stage ({variant}, realization {realization}): {source}")]
    Fmm {
        variant: DamVariant,
        realization: usize,
        source: FmmError,
    },
    #[error("settlement stage: {0}")]
    Settlement(#[from] SettlementError),
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl PipelineError {
    /// Whether the failure comes from an optimization rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            PipelineError::Suc(e) => !matches!(e, SucError::DimensionMismatch(_)),
            PipelineError::Damc { source, .. } => {
                matches!(source, DamcError::NotOptimal(_) | DamcError::Solver(_))
            }
            PipelineError::Fmm { source, .. } => !matches!(source, FmmError::DimensionMismatch(_)),
            _ => false,
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: PathBuf,
    pub seed: u64,
    /// In-sample scenario count.
    pub scenarios: usize,
    /// Out-of-sample realization count.
    pub eval_scenarios: usize,
    pub variants: Vec<DamVariant>,
    pub solver: SolverOptions,
    pub verbatim_ramps: bool,
    pub out: Option<PathBuf>,
    /// Directory for cached commitment solutions.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(instance: impl Into<PathBuf>) -> Self {
        Self {
            instance: instance.into(),
            seed: 1,
            scenarios: 100,
            eval_scenarios: 50,
            variants: DamVariant::ALL.to_vec(),
            solver: SolverOptions::default(),
            verbatim_ramps: false,
            out: None,
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.scenarios == 0 || self.eval_scenarios == 0 {
            return Err(PipelineError::Config("scenario counts must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(PipelineError::Config("at least one variant is required".into()));
        }
        if !(self.solver.gap >= 0.0) {
            return Err(PipelineError::Config("solver gap must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn ramp_mode(&self) -> RampMode {
        if self.verbatim_ramps {
            RampMode::Verbatim
        } else {
            RampMode::Corrected
        }
    }

    pub fn suc_options(&self) -> SucOptions {
        SucOptions {
            ramp_mode: self.ramp_mode(),
            ..SucOptions::default()
        }
    }
}

/// One comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: DamVariant,
    pub totals: Totals,
    pub dam_objective: f64,
    /// `[dg][hour]`
    pub commitment: Vec<Vec<bool>>,
    /// Binding-subperiod LMP averaged over nodes and realizations.
    pub average_lmp: Vec<f64>,
    pub requirements: FrpRequirements,
    /// Day-ahead leg of the consumer payment, summed over realizations.
    pub da_payment_total: f64,
    /// Real-time leg of the consumer payment, summed over realizations.
    pub rt_payment_total: f64,
    pub uplift_total: f64,
    pub frp_cost_total: f64,
    pub residual_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: RunConfig,
    pub instance_name: String,
    pub dg_ids: Vec<String>,
    pub suc: Option<SucSummary>,
    pub outcomes: Vec<VariantOutcome>,
    /// `(R, PROPOSED total payment)` pairs when a sweep was run.
    #[serde(default)]
    pub sweep: Vec<(usize, f64)>,
}

impl ComparisonReport {
    pub fn outcome(&self, v: DamVariant) -> Option<&VariantOutcome> {
        self.outcomes.iter().find(|o| o.variant == v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SucSummary {
    pub expected_total_cost: f64,
    pub first_stage_cost: f64,
    pub commitment: Vec<Vec<bool>>,
}

/// Everything one variant produced.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub dam: DamResult,
    pub traces: Vec<FmmTrace>,
    pub reports: Vec<SettlementReport>,
}

/// Cache key for a commitment solution.
pub fn suc_cache_key(instance: &SystemInstance, scenarios: usize, seed: u64, options: &SucOptions, solver: &SolverOptions) -> String {
    let mut h = Sha256::new();
    h.update(instance_to_json(instance).as_bytes());
    h.update(serde_json::to_vec(&(scenarios, seed, options, solver.gap, solver.time_limit_s)).expect("serializable key"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Solves the commitment stage, reusing a cached solution when the inputs
/// are unchanged.
pub fn cached_suc(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    scenarios: &ScenarioSet,
    options: &SucOptions,
    solver: &SolverOptions,
    cache_dir: Option<&Path>,
) -> Result<SucSolution, PipelineError> {
    let path = cache_dir.map(|d| {
        d.join(format!(
            "suc-{}.json",
            suc_cache_key(instance, scenarios.count, scenarios.seed, options, solver)
        ))
    });
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            if let Ok(sol) = serde_json::from_str::<SucSolution>(&text) {
                info!("reusing cached commitment {}", p.display());
                return Ok(sol);
            }
        }
    }
    let sol = run_suc(instance, isf, scenarios, options, solver)?;
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let text = serde_json::to_string(&sol).expect("serializable solution");
        std::fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(sol)
}

/// Realized trajectories for evaluation, resampled to four subperiods per
/// hour when the instance uses another resolution.
pub fn evaluation_realizations(instance: &SystemInstance, count: usize, seed: u64) -> Result<ScenarioSet, PipelineError> {
    if instance.time_grid.subperiods_per_hour != crate::fmm::SUBPERIODS_PER_HOUR {
        return Err(PipelineError::Config(format!(
            "evaluation needs {} subperiods per hour, instance has {}",
            crate::fmm::SUBPERIODS_PER_HOUR,
            instance.time_grid.subperiods_per_hour
        )));
    }
    Ok(sample_scenarios(instance, count, seed, Purpose::OutOfSample))
}

/// Runs one variant through day-ahead clearing, every real-time trace and
/// settlement.
#[allow(clippy::too_many_arguments)]
pub fn run_variant(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    variant: DamVariant,
    suc_req: Option<&FrpRequirements>,
    suc: Option<&SucSolution>,
    realizations: &ScenarioSet,
    ramp_mode: RampMode,
    solver: &SolverOptions,
) -> Result<VariantRun, PipelineError> {
    let d_hat = instance.compute_hourly_bid_demand();
    let ci;
    let req = match variant {
        DamVariant::Ci95 => {
            ci = compute_ci95_requirements(instance, &d_hat);
            Some(&ci)
        }
        DamVariant::Without => None,
        _ => suc_req,
    };
    let dam = run_damc(
        instance,
        isf,
        &d_hat,
        req,
        suc,
        variant,
        &DamcOptions { ramp_mode },
        solver,
    )
    .map_err(|source| PipelineError::Damc { variant, source })?;
    let fmm_opts = FmmOptions { ramp_mode };
    let traces: Vec<FmmTrace> = (0..realizations.count)
        .into_par_iter()
        .map(|i| {
            run_fmm_sequence(instance, isf, &dam, &realizations.trajectory(i), i, &fmm_opts, solver).map_err(|source| {
                PipelineError::Fmm {
                    variant,
                    realization: i,
                    source,
                }
            })
        })
        .collect::<Result<_, _>>()?;
    let reports = traces
        .iter()
        .map(|t| settle(instance, &dam, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VariantRun { dam, traces, reports })
}

fn outcome(run: &VariantRun, instance: &SystemInstance) -> VariantOutcome {
    let steps = run.traces.first().map_or(0, |t| t.runs.len() * crate::fmm::BINDING);
    let nodes = instance.num_nodes();
    let mut avg = vec![0.0; steps];
    for t in &run.traces {
        for n in 0..nodes {
            for (k, x) in t.binding_lmp(n).iter().enumerate() {
                avg[k] += x;
            }
        }
    }
    let denom = (run.traces.len() * nodes).max(1) as f64;
    avg.iter_mut().for_each(|x| *x /= denom);
    VariantOutcome {
        variant: run.dam.variant,
        totals: aggregate(&run.reports),
        dam_objective: run.dam.objective,
        commitment: run.dam.commitment.clone(),
        average_lmp: avg,
        requirements: run.dam.requirements.clone(),
        da_payment_total: run.reports.iter().map(|r| r.consumer_da_payment).sum(),
        rt_payment_total: run.reports.iter().map(|r| r.consumer_rt_payment).sum(),
        uplift_total: run.reports.iter().map(|r| r.uplift_total).sum(),
        frp_cost_total: run.reports.iter().map(|r| r.frp_procurement_cost).sum(),
        residual_total: run.reports.iter().map(|r| r.residual).sum(),
    }
}

/// Full pipeline on an already loaded instance.
pub fn run_with_instance(instance: &SystemInstance, config: &RunConfig) -> Result<(ComparisonReport, Vec<VariantRun>), PipelineError> {
    config.validate()?;
    instance.validate()?;
    for dg in &instance.dgs {
        // real-time windows look one hour ahead; slower units can miss a scheduled shutdown
        if dg.shutdown_rate + dg.ramp_down < dg.p_max {
            warn!("{}: shutdown rate plus ramp-down is below capacity; real-time dispatch may be infeasible", dg.id);
        }
    }
    let isf = compute_isf(instance)?;
    let ramp_mode = config.ramp_mode();

    let needs_suc = config.variants.iter().any(|v| v.needs_suc());
    let (suc, suc_req) = if needs_suc {
        info!("sampling {} in-sample scenarios", config.scenarios);
        let scenarios = sample_scenarios(instance, config.scenarios, config.seed, Purpose::InSample);
        let suc = cached_suc(
            instance,
            &isf,
            &scenarios,
            &config.suc_options(),
            &config.solver,
            config.cache_dir.as_deref(),
        )?;
        let req = compute_frp_requirements(&scenarios, &suc, instance.time_grid.subperiods_per_hour)?;
        (Some(suc), Some(req))
    } else {
        (None, None)
    };

    let realizations = evaluation_realizations(instance, config.eval_scenarios, config.seed)?;
    let mut runs = Vec::with_capacity(config.variants.len());
    for &v in &config.variants {
        info!("clearing and evaluating {v}");
        runs.push(run_variant(
            instance,
            &isf,
            v,
            suc_req.as_ref(),
            suc.as_ref(),
            &realizations,
            ramp_mode,
            &config.solver,
        )?);
    }
    let report = ComparisonReport {
        config: config.clone(),
        instance_name: instance.name.clone(),
        dg_ids: instance.dgs.iter().map(|d| d.id.clone()).collect(),
        suc: suc.as_ref().map(|s| SucSummary {
            expected_total_cost: s.expected_total_cost,
            first_stage_cost: s.first_stage_cost,
            commitment: s.hourly_commitments(),
        }),
        outcomes: runs.iter().map(|r| outcome(r, instance)).collect(),
        sweep: Vec::new(),
    };
    Ok((report, runs))
}

/// Loads the configured instance and runs the full pipeline.
pub fn run_experiment(config: &RunConfig) -> Result<ComparisonReport, PipelineError> {
    let instance = load_instance(&config.instance)?;
    Ok(run_with_instance(&instance, config)?.0)
}

/// PROPOSED total payment for each in-sample count.
pub fn sweep_r(instance: &SystemInstance, config: &RunConfig, counts: &[usize]) -> Result<Vec<(usize, f64)>, PipelineError> {
    counts
        .iter()
        .map(|&r| {
            let cfg = RunConfig {
                scenarios: r,
                variants: vec![DamVariant::Proposed],
                ..config.clone()
            };
            let (rep, _) = run_with_instance(instance, &cfg)?;
            Ok((r, rep.outcomes[0].totals.total_payment))
        })
        .collect()
}
