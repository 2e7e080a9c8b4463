//! `frpsim`: run the procurement and market simulation stage by stage or end
//! to end.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 solver failure.
use clap::{Args, Parser, Subcommand, ValueEnum};
use frpsim::damc::{run_damc, DamResult, DamVariant, DamcOptions};
use frpsim::fmm::{run_fmm_sequence, FmmOptions, FmmTrace};
use frpsim::frp::{compute_ci95_requirements, compute_frp_requirements, FrpRequirements};
use frpsim::instance::{load_instance, SystemInstance};
use frpsim::milp::SolverOptions;
use frpsim::network::compute_isf;
use frpsim::pipeline::{
    self, emit_report, evaluation_realizations, run_with_instance, sweep_r, PipelineError,
    ReportFormat, RunConfig,
};
use frpsim::scenario::{sample_scenarios, Purpose, ScenarioSet};
use frpsim::settlement::{aggregate, settle};
use frpsim::suc::{RampMode, SucOptions, SucSolution};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "frpsim", version, about = "Flexible ramping product procurement and market simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 1e-6)]
    solver_gap: f64,
    /// Per-solve time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Solver threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Use startup and ramp-up rates in the shutdown term of ramp-down rows.
    #[arg(long)]
    verbatim_ramps: bool,
}

impl Common {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            gap: self.solver_gap,
            time_limit_s: self.time_limit,
            threads: self.threads,
            ..SolverOptions::default()
        }
    }

    fn ramp_mode(&self) -> RampMode {
        if self.verbatim_ramps {
            RampMode::Verbatim
        } else {
            RampMode::Corrected
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PurposeArg {
    InSample,
    OutOfSample,
}

#[derive(Subcommand)]
enum Command {
    /// Draw net-load scenarios.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, value_enum, default_value = "in-sample")]
        purpose: PurposeArg,
        #[arg(long, default_value = "scenarios.json")]
        out: PathBuf,
    },
    /// Solve the stochastic unit commitment.
    Suc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        /// Previously sampled scenarios; otherwise drawn from the seed.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long, default_value = "suc.json")]
        out: PathBuf,
    },
    /// Derive hourly ramping requirements.
    Frp {
        #[command(flatten)]
        common: Common,
        /// Commitment solution; required unless --ci95.
        #[arg(long)]
        suc: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// Requirements from the 95% interval of the net load instead.
        #[arg(long)]
        ci95: bool,
        #[arg(long, default_value = "frp.json")]
        out: PathBuf,
    },
    /// Clear the day-ahead market for one variant.
    Damc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: DamVariant,
        #[arg(long)]
        frp: Option<PathBuf>,
        #[arg(long)]
        suc: Option<PathBuf>,
        #[arg(long, default_value = "dam.json")]
        out: PathBuf,
    },
    /// Run the real-time sequence for every out-of-sample realization.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dam: PathBuf,
        #[arg(long, default_value_t = 50)]
        eval_scenarios: usize,
        #[arg(long, default_value = "traces.json")]
        out: PathBuf,
    },
    /// Settle a day-ahead result against its real-time traces.
    Settle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dam: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value = "settlement.json")]
        out: PathBuf,
    },
    /// Full pipeline for the selected variants.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 50)]
        eval_scenarios: usize,
        #[arg(long, value_delimiter = ',', default_value = "proposed,nf,ci95,without")]
        variants: Vec<DamVariant>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// PROPOSED total payment as a function of the in-sample count.
    SweepR {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,50")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        eval_scenarios: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn solver_fail(e: impl std::fmt::Display) -> Failure {
    Failure::Solver(e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn instance(common: &Common) -> Result<SystemInstance, Failure> {
    load_instance(&common.instance).map_err(invalid)
}

fn in_sample(inst: &SystemInstance, common: &Common, count: usize, file: &Option<PathBuf>) -> Result<ScenarioSet, Failure> {
    match file {
        Some(p) => {
            let s = ScenarioSet::load(p).map_err(invalid)?;
            if !s.matches(inst) {
                return Err(invalid("scenario file does not match the instance"));
            }
            Ok(s)
        }
        None => Ok(sample_scenarios(inst, count, common.seed, Purpose::InSample)),
    }
}

fn config(common: &Common, scenarios: usize, eval: usize, variants: Vec<DamVariant>, out: &Path) -> RunConfig {
    RunConfig {
        instance: common.instance.clone(),
        seed: common.seed,
        scenarios,
        eval_scenarios: eval,
        variants,
        solver: common.solver(),
        verbatim_ramps: common.verbatim_ramps,
        out: Some(out.to_path_buf()),
        cache_dir: Some(out.join("cache")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sample { common, scenarios, purpose, out } => {
            let inst = instance(&common)?;
            if scenarios == 0 {
                return Err(invalid("--scenarios must be at least 1"));
            }
            let p = match purpose {
                PurposeArg::InSample => Purpose::InSample,
                PurposeArg::OutOfSample => Purpose::OutOfSample,
            };
            write_json(&out, &sample_scenarios(&inst, scenarios, common.seed, p))
        }
        Command::Suc { common, scenarios, scenario_file, out } => {
            let inst = instance(&common)?;
            let isf = compute_isf(&inst).map_err(invalid)?;
            let sc = in_sample(&inst, &common, scenarios, &scenario_file)?;
            let opts = SucOptions {
                ramp_mode: common.ramp_mode(),
                ..SucOptions::default()
            };
            let sol = frpsim::suc::run_suc(&inst, &isf, &sc, &opts, &common.solver()).map_err(|e| match e {
                frpsim::suc::SucError::DimensionMismatch(_) => invalid(e),
                _ => solver_fail(e),
            })?;
            eprintln!(
                "expected cost {:.2}, first stage {:.2}",
                sol.expected_total_cost, sol.first_stage_cost
            );
            write_json(&out, &sol)
        }
        Command::Frp { common, suc, scenarios, scenario_file, ci95, out } => {
            let inst = instance(&common)?;
            let req = if ci95 {
                compute_ci95_requirements(&inst, &inst.compute_hourly_bid_demand())
            } else {
                let path = suc.ok_or_else(|| invalid("--suc is required unless --ci95"))?;
                let sol: SucSolution = read_json(&path)?;
                let sc = in_sample(&inst, &common, scenarios, &scenario_file)?;
                compute_frp_requirements(&sc, &sol, inst.time_grid.subperiods_per_hour).map_err(invalid)?
            };
            for h in 0..req.hours() {
                println!("{:>4} {:>12.4} {:>12.4}", h + 1, req.rho_up[h], req.rho_down[h]);
            }
            write_json(&out, &req)
        }
        Command::Damc { common, variant, frp, suc, out } => {
            let inst = instance(&common)?;
            let isf = compute_isf(&inst).map_err(invalid)?;
            let d_hat = inst.compute_hourly_bid_demand();
            let req: Option<FrpRequirements> = match (variant, frp) {
                (DamVariant::Ci95, None) => Some(compute_ci95_requirements(&inst, &d_hat)),
                (_, Some(p)) => Some(read_json(&p)?),
                (_, None) => None,
            };
            let sol: Option<SucSolution> = suc.map(|p| read_json(&p)).transpose()?;
            let dam = run_damc(
                &inst,
                &isf,
                &d_hat,
                req.as_ref(),
                sol.as_ref(),
                variant,
                &DamcOptions { ramp_mode: common.ramp_mode() },
                &common.solver(),
            )
            .map_err(|e| match e {
                frpsim::damc::DamcError::MissingInput { .. } | frpsim::damc::DamcError::DimensionMismatch(_) => invalid(e),
                _ => solver_fail(e),
            })?;
            eprintln!("{variant} objective {:.2}", dam.objective);
            write_json(&out, &dam)
        }
        Command::Evaluate { common, dam, eval_scenarios, out } => {
            let inst = instance(&common)?;
            let isf = compute_isf(&inst).map_err(invalid)?;
            let dam: DamResult = read_json(&dam)?;
            if eval_scenarios == 0 {
                return Err(invalid("--eval-scenarios must be at least 1"));
            }
            let real = evaluation_realizations(&inst, eval_scenarios, common.seed).map_err(Failure::from)?;
            let opts = FmmOptions { ramp_mode: common.ramp_mode() };
            let solver = common.solver();
            let traces: Vec<FmmTrace> = (0..real.count)
                .into_par_iter()
                .map(|i| run_fmm_sequence(&inst, &isf, &dam, &real.trajectory(i), i, &opts, &solver))
                .collect::<Result<_, _>>()
                .map_err(|e| match e {
                    frpsim::fmm::FmmError::DimensionMismatch(_) => invalid(e),
                    _ => solver_fail(e),
                })?;
            write_json(&out, &traces)
        }
        Command::Settle { common, dam, traces, out } => {
            let inst = instance(&common)?;
            let dam: DamResult = read_json(&dam)?;
            let traces: Vec<FmmTrace> = read_json(&traces)?;
            let reports = traces
                .iter()
                .map(|t| settle(&inst, &dam, t))
                .collect::<Result<Vec<_>, _>>()
                .map_err(invalid)?;
            let totals = aggregate(&reports);
            println!(
                "{}: total payment {:.2} $, total curtailment {:.4} MW",
                dam.variant, totals.total_payment, totals.total_curtailment
            );
            write_json(&out, &(totals, reports))
        }
        Command::Run { common, scenarios, eval_scenarios, variants, out } => {
            let inst = instance(&common)?;
            let cfg = config(&common, scenarios, eval_scenarios, variants, &out);
            let (report, _) = run_with_instance(&inst, &cfg)?;
            for f in [ReportFormat::Table, ReportFormat::Csv, ReportFormat::Structured] {
                emit_report(&report, f, &out)?;
            }
            print!("{}", pipeline::report::format_table(&report));
            Ok(())
        }
        Command::SweepR { common, counts, eval_scenarios, out } => {
            let inst = instance(&common)?;
            if counts.is_empty() {
                return Err(invalid("--counts must list at least one value"));
            }
            let cfg = config(&common, counts[0], eval_scenarios, vec![DamVariant::Proposed], &out);
            let sweep = sweep_r(&inst, &cfg, &counts)?;
            for (r, p) in &sweep {
                println!("{r:>6} {p:>18.2}");
            }
            let (mut report, _) = run_with_instance(&inst, &cfg)?;
            report.sweep = sweep;
            emit_report(&report, ReportFormat::Csv, &out)?;
            emit_report(&report, ReportFormat::Structured, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(3)
        }
    }
}
