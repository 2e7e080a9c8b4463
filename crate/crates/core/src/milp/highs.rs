//! HiGHS backend running in a pool of long-lived Python worker processes.
//!
//! The worker uses the `highspy` bindings when installed and otherwise the
//! copy of HiGHS bundled with SciPy. Models travel as row-wise sparse arrays
//! over the worker's stdin and solutions come back on its stdout.
use super::{Backend, ModelBuilder, Solution, SolveStatus, SolverError, SolverOptions, VarKind};
use serde::Deserialize;
use serde_json::json;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Mutex, OnceLock};

const WORKER_SCRIPT: &str = include_str!("highs_worker.py");
/// Interpreter used to run the worker; overridable with this variable.
pub const PYTHON_ENV: &str = "FRPSIM_PYTHON";
const INF: f64 = 1e30;

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn() -> Result<Self, SolverError> {
        let python = std::env::var(PYTHON_ENV).unwrap_or_else(|_| "python3".into());
        let mut child = Command::new(&python)
            .arg("-u")
            .arg("-c")
            .arg(WORKER_SCRIPT)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SolverError::Backend(format!("cannot start {python}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }

    fn exchange(&mut self, model: &ModelBuilder, opts: &SolverOptions) -> std::io::Result<Reply> {
        let cols = model.columns();
        let rows = model.rows();
        let integer = model.is_mip();
        let hint = model.start();
        let nnz: usize = rows.iter().map(|r| r.terms.len()).sum();

        let mut options = serde_json::Map::new();
        options.insert("mip_rel_gap".into(), json!(opts.gap));
        options.insert("mip_abs_gap".into(), json!(1e-9_f64.max(opts.gap * 1e-3)));
        // a restart re-solves the root LP from scratch, slow on scenario-sized models
        options.insert("mip_allow_restart".into(), json!(false));
        if let Some(t) = opts.time_limit_s {
            options.insert("time_limit".into(), json!(t));
        }
        if let Some(n) = opts.threads {
            options.insert("threads".into(), json!(n));
        }
        let header = json!({
            "ncol": cols.len(),
            "nrow": rows.len(),
            "nnz": nnz,
            "integer": integer,
            "has_start": integer && hint.is_some(),
            "options": options,
        });

        let mut buf: Vec<u8> = Vec::with_capacity(8 * (3 * cols.len() + 2 * rows.len() + nnz) + 4 * (rows.len() + nnz));
        buf.extend_from_slice(header.to_string().as_bytes());
        buf.push(b'\n');
        let clip = |x: f64| x.clamp(-INF, INF);
        for c in cols {
            buf.extend_from_slice(&c.cost.to_le_bytes());
        }
        for c in cols {
            buf.extend_from_slice(&clip(c.lower).to_le_bytes());
        }
        for c in cols {
            buf.extend_from_slice(&clip(c.upper).to_le_bytes());
        }
        for r in rows {
            buf.extend_from_slice(&clip(r.bounds().0).to_le_bytes());
        }
        for r in rows {
            buf.extend_from_slice(&clip(r.bounds().1).to_le_bytes());
        }
        let mut start = 0i32;
        buf.extend_from_slice(&start.to_le_bytes());
        for r in rows {
            start += r.terms.len() as i32;
            buf.extend_from_slice(&start.to_le_bytes());
        }
        for r in rows {
            for (v, _) in &r.terms {
                buf.extend_from_slice(&(v.0 as i32).to_le_bytes());
            }
        }
        for r in rows {
            for (_, a) in &r.terms {
                buf.extend_from_slice(&a.to_le_bytes());
            }
        }
        if integer {
            buf.extend(cols.iter().map(|c| u8::from(c.kind == VarKind::Binary)));
            if let Some(values) = hint {
                for x in values {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        self.stdin.write_all(&buf)?;
        self.stdin.flush()?;

        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "solver worker exited",
            ));
        }
        let mut reply: Reply = serde_json::from_str(&line).map_err(std::io::Error::other)?;
        if reply.has_primal {
            reply.values = read_f64s(&mut self.stdout, cols.len())?;
        }
        if reply.has_duals {
            reply.duals = Some(read_f64s(&mut self.stdout, rows.len())?);
        }
        Ok(reply)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[derive(Debug, Deserialize)]
struct Reply {
    status: String,
    #[serde(default)]
    objective: Option<f64>,
    /// Null when the gap is unbounded.
    #[serde(default)]
    mip_gap: Option<f64>,
    #[serde(default)]
    has_primal: bool,
    #[serde(default)]
    has_duals: bool,
    #[serde(default)]
    run_time: f64,
    #[serde(skip)]
    values: Vec<f64>,
    #[serde(skip)]
    duals: Option<Vec<f64>>,
}

/// Pool of idle workers shared by every thread in the process.
pub struct HighsProcess {
    idle: Mutex<Vec<Worker>>,
}

impl HighsProcess {
    pub fn shared() -> &'static HighsProcess {
        static POOL: OnceLock<HighsProcess> = OnceLock::new();
        POOL.get_or_init(|| HighsProcess {
            idle: Mutex::new(Vec::new()),
        })
    }

    fn checkout(&self) -> Result<Worker, SolverError> {
        let idle = self.idle.lock().expect("pool lock").pop();
        match idle {
            Some(w) => Ok(w),
            None => Worker::spawn(),
        }
    }

    fn checkin(&self, w: Worker) {
        self.idle.lock().expect("pool lock").push(w);
    }
}

impl Backend for HighsProcess {
    fn solve(&self, model: &ModelBuilder, opts: &SolverOptions) -> Result<Solution, SolverError> {
        let mut worker = self.checkout()?;
        // a worker that died between solves is replaced once
        let reply = match worker.exchange(model, opts) {
            Ok(r) => r,
            Err(_) => {
                worker = Worker::spawn()?;
                worker
                    .exchange(model, opts)
                    .map_err(|e| SolverError::Backend(e.to_string()))?
            }
        };
        self.checkin(worker);

        log::debug!(
            "highs: {} cols, {} rows, status {}, {:.2}s",
            model.num_vars(),
            model.num_constraints(),
            reply.status,
            reply.run_time
        );
        let status = match reply.status.as_str() {
            "optimal" => SolveStatus::Optimal,
            "infeasible" => SolveStatus::Infeasible,
            "unbounded" => SolveStatus::Unbounded,
            "time_limit" => SolveStatus::TimeLimit,
            other => return Err(SolverError::Backend(other.to_string())),
        };
        let objective = reply.objective.unwrap_or(f64::NAN) + model.objective_constant();
        Ok(Solution {
            status,
            objective,
            values: reply.values,
            duals: reply.duals,
            mip_gap: reply.mip_gap.unwrap_or(f64::INFINITY),
        })
    }
}
