//! System instances: time grid, network, dispatchable generators and the
//! mean net-load profile, plus the on-disk instance format.
//!
//! Internally every node, line and generator is referred to by its position
//! in the instance. Subperiods and hours are 0-based: subperiod `k` belongs to
//! hour `k / K`.
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::ops::Range;
use std::path::Path;
use thiserror::Error;

/// Version tag written to and required from instance files.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance used when comparing megawatt quantities during validation.
const MW_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid instance: {0}")]
    Validation(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, InstanceError> {
    Err(InstanceError::Validation(msg.into()))
}

/// Hourly periods split into `K` equal intra-hourly subperiods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub hours: usize,
    pub subperiods_per_hour: usize,
}

impl TimeGrid {
    pub fn new(hours: usize, subperiods_per_hour: usize) -> Result<Self, InstanceError> {
        if hours == 0 {
            return invalid("time grid needs at least one hour");
        }
        if subperiods_per_hour == 0 || 60 % subperiods_per_hour != 0 {
            return invalid(format!(
                "subperiods per hour must divide 60, got {subperiods_per_hour}"
            ));
        }
        Ok(Self {
            hours,
            subperiods_per_hour,
        })
    }

    /// A day at the given granularity.
    pub fn day(subperiods_per_hour: usize) -> Result<Self, InstanceError> {
        Self::new(24, subperiods_per_hour)
    }

    pub fn subperiods(&self) -> usize {
        self.hours * self.subperiods_per_hour
    }

    pub fn zeta_minutes(&self) -> f64 {
        60.0 / self.subperiods_per_hour as f64
    }

    /// Duration of one subperiod in hours.
    pub fn subperiod_hours(&self) -> f64 {
        1.0 / self.subperiods_per_hour as f64
    }

    pub fn hour_of(&self, k: usize) -> usize {
        k / self.subperiods_per_hour
    }

    /// Subperiods of hour `h`.
    pub fn subperiods_in(&self, h: usize) -> Range<usize> {
        h * self.subperiods_per_hour..(h + 1) * self.subperiods_per_hour
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSegment {
    /// Cumulative output at the top of the segment (MW).
    pub upper_mw: f64,
    /// $/MWh
    pub marginal_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub committed: bool,
    /// Output above minimum at the start of the horizon (MW).
    pub power_above_min: f64,
    pub hours_on: usize,
    pub hours_off: usize,
}

/// A dispatchable generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dg {
    pub id: String,
    pub node: usize,
    pub p_max: f64,
    pub p_min: f64,
    pub segments: Vec<CostSegment>,
    /// Cost of running at minimum output ($/h).
    pub no_load_cost: f64,
    /// $ per startup
    pub startup_cost: f64,
    /// MW/h
    pub ramp_up: f64,
    /// MW/h
    pub ramp_down: f64,
    /// MW
    pub startup_rate: f64,
    /// MW
    pub shutdown_rate: f64,
    /// hours
    pub min_up: usize,
    /// hours
    pub min_down: usize,
    pub initial: InitialState,
}

impl Dg {
    /// Width of each cost segment (MW above minimum).
    pub fn segment_widths(&self) -> Vec<f64> {
        let mut lower = self.p_min;
        self.segments
            .iter()
            .map(|s| {
                let w = s.upper_mw - lower;
                lower = s.upper_mw;
                w
            })
            .collect()
    }

    /// Cost of producing `above_min` MW above minimum for one hour, ignoring
    /// the no-load cost.
    pub fn dispatch_cost_rate(&self, above_min: f64) -> f64 {
        let mut left = above_min.max(0.0);
        let mut cost = 0.0;
        for (w, s) in self.segment_widths().into_iter().zip(&self.segments) {
            let take = left.min(w);
            cost += take * s.marginal_cost;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        cost
    }

    pub fn headroom(&self) -> f64 {
        self.p_max - self.p_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: usize,
    pub to: usize,
    /// p.u.
    pub reactance: f64,
    /// MW, `-inf` when unlimited
    pub flow_min: f64,
    /// MW, `+inf` when unlimited
    pub flow_max: f64,
}

impl Line {
    pub fn is_limited(&self) -> bool {
        self.flow_min.is_finite() || self.flow_max.is_finite()
    }
}

/// A validated system instance. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance {
    pub name: String,
    pub time_grid: TimeGrid,
    pub nodes: Vec<String>,
    pub lines: Vec<Line>,
    pub dgs: Vec<Dg>,
    /// Mean net load per node per subperiod (MW).
    pub mean_net_load: Vec<Vec<f64>>,
    pub sigma_fraction: f64,
    /// $/MWh
    pub curtailment_penalty: f64,
    /// $/MWh
    pub frp_shortfall_penalty: f64,
    pub reference_node: usize,
}

/// Bid-in hourly net demand per node (MW), `d_hat[node][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyBidDemand {
    pub d_hat: Vec<Vec<f64>>,
}

impl HourlyBidDemand {
    pub fn system_total(&self, h: usize) -> f64 {
        self.d_hat.iter().map(|row| row[h]).sum()
    }
}

impl SystemInstance {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// Generators located at each node.
    pub fn dgs_by_node(&self) -> Vec<Vec<usize>> {
        let mut by_node = vec![Vec::new(); self.nodes.len()];
        for (g, dg) in self.dgs.iter().enumerate() {
            by_node[dg.node].push(g);
        }
        by_node
    }

    /// Average of the subperiod means in each hour.
    pub fn compute_hourly_bid_demand(&self) -> HourlyBidDemand {
        let grid = self.time_grid;
        let k = grid.subperiods_per_hour as f64;
        let d_hat = self
            .mean_net_load
            .iter()
            .map(|row| {
                (0..grid.hours)
                    .map(|h| row[grid.subperiods_in(h)].iter().sum::<f64>() / k)
                    .collect()
            })
            .collect();
        HourlyBidDemand { d_hat }
    }

    /// Same instance with every mean net load multiplied by `factor`.
    pub fn scaled_load(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.mean_net_load {
            for x in row.iter_mut() {
                *x *= factor;
            }
        }
        out
    }

    pub fn with_sigma_fraction(&self, sigma_fraction: f64) -> Self {
        Self {
            sigma_fraction,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let grid = TimeGrid::new(self.time_grid.hours, self.time_grid.subperiods_per_hour)?;
        let n_nodes = self.nodes.len();
        if n_nodes == 0 {
            return invalid("instance has no nodes");
        }
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.as_str()) {
                return invalid(format!("duplicate node id {n}"));
            }
        }
        if self.reference_node >= n_nodes {
            return invalid("reference node does not exist");
        }

        let mut line_ids = HashSet::new();
        for line in &self.lines {
            if !line_ids.insert(line.id.as_str()) {
                return invalid(format!("duplicate line id {}", line.id));
            }
            if line.from >= n_nodes || line.to >= n_nodes {
                return invalid(format!("line {} references an unknown node", line.id));
            }
            if line.from == line.to {
                return invalid(format!("line {} is a self-loop", line.id));
            }
            if !line.reactance.is_finite() || line.reactance <= 0.0 {
                return invalid(format!("line {} needs a positive reactance", line.id));
            }
            if line.flow_min.is_nan()
                || line.flow_max.is_nan()
                || line.flow_min > 0.0
                || line.flow_max < 0.0
            {
                return invalid(format!(
                    "line {} flow limits must satisfy fmin <= 0 <= fmax",
                    line.id
                ));
            }
        }
        if !is_connected(n_nodes, &self.lines) {
            return invalid("network is not connected");
        }

        let mut dg_ids = HashSet::new();
        for dg in &self.dgs {
            if !dg_ids.insert(dg.id.as_str()) {
                return invalid(format!("duplicate generator id {}", dg.id));
            }
            validate_dg(dg, n_nodes)?;
            for s in &dg.segments {
                if s.marginal_cost >= self.curtailment_penalty {
                    return invalid(format!(
                        "curtailment penalty must exceed every marginal cost (generator {})",
                        dg.id
                    ));
                }
            }
        }

        if self.mean_net_load.len() != n_nodes {
            return invalid(format!(
                "mean net load has {} rows for {} nodes",
                self.mean_net_load.len(),
                n_nodes
            ));
        }
        for (n, row) in self.mean_net_load.iter().enumerate() {
            if row.len() != grid.subperiods() {
                return invalid(format!(
                    "mean net load at node {} has {} entries, expected {}",
                    self.nodes[n],
                    row.len(),
                    grid.subperiods()
                ));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return invalid(format!("non-finite mean net load at node {}", self.nodes[n]));
            }
        }
        if !(self.sigma_fraction.is_finite() && self.sigma_fraction >= 0.0) {
            return invalid("sigma_fraction must be a nonnegative number");
        }
        if !(self.frp_shortfall_penalty > 0.0) {
            return invalid("FRP shortfall penalty must be positive");
        }
        if !self.curtailment_penalty.is_finite() {
            return invalid("curtailment penalty must be finite");
        }
        Ok(())
    }
}

fn validate_dg(dg: &Dg, n_nodes: usize) -> Result<(), InstanceError> {
    let id = &dg.id;
    if dg.node >= n_nodes {
        return invalid(format!("generator {id} sits at an unknown node"));
    }
    let nonneg = [
        ("p_min", dg.p_min),
        ("no_load_cost", dg.no_load_cost),
        ("startup_cost", dg.startup_cost),
        ("ramp_up", dg.ramp_up),
        ("ramp_down", dg.ramp_down),
        ("startup_rate", dg.startup_rate),
        ("shutdown_rate", dg.shutdown_rate),
        ("initial power_above_min", dg.initial.power_above_min),
    ];
    for (name, v) in nonneg {
        if !(v.is_finite() && v >= 0.0) {
            return invalid(format!("generator {id}: {name} must be nonnegative"));
        }
    }
    if !(dg.p_max.is_finite() && dg.p_min <= dg.p_max) {
        return invalid(format!("generator {id}: p_min exceeds p_max"));
    }
    if dg.segments.is_empty() {
        return invalid(format!("generator {id} has no cost segments"));
    }
    let mut lower = dg.p_min;
    let mut last_cost = f64::NEG_INFINITY;
    for s in &dg.segments {
        if !(s.upper_mw > lower) {
            return invalid(format!(
                "generator {id}: segment caps must be strictly increasing above p_min"
            ));
        }
        if !s.marginal_cost.is_finite() {
            return invalid(format!("generator {id}: non-finite marginal cost"));
        }
        if s.marginal_cost < last_cost {
            return invalid(format!("generator {id}: non-convex cost curve"));
        }
        lower = s.upper_mw;
        last_cost = s.marginal_cost;
    }
    if (lower - dg.p_max).abs() > MW_TOL {
        return invalid(format!("generator {id}: last segment cap must equal p_max"));
    }
    if dg.startup_rate < dg.p_min - MW_TOL {
        return invalid(format!("generator {id}: startup rate below p_min"));
    }
    if dg.shutdown_rate < dg.p_min - MW_TOL {
        return invalid(format!("generator {id}: shutdown rate below p_min"));
    }
    let init = &dg.initial;
    if init.committed {
        if init.hours_on == 0 {
            return invalid(format!("generator {id}: committed initially but hours_on is 0"));
        }
        if init.power_above_min > dg.headroom() + MW_TOL {
            return invalid(format!("generator {id}: initial output above p_max"));
        }
    } else {
        if init.hours_off == 0 {
            return invalid(format!("generator {id}: offline initially but hours_off is 0"));
        }
        if init.power_above_min != 0.0 {
            return invalid(format!("generator {id}: offline initially with nonzero output"));
        }
    }
    Ok(())
}

fn is_connected(n_nodes: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); n_nodes];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n_nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub grid: GridSection,
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_node: Option<String>,
    #[serde(default)]
    pub lines: Vec<LineRecord>,
    #[serde(default)]
    pub dgs: Vec<DgRecord>,
    /// One row per node (same order as `nodes`), one column per subperiod.
    pub mean_net_load: Vec<Vec<f64>>,
    #[serde(default = "default_sigma_fraction")]
    pub sigma_fraction: f64,
    pub penalties: Penalties,
}

fn default_sigma_fraction() -> f64 {
    0.01
}

fn default_hours() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_hours")]
    pub hours: usize,
    #[serde(rename = "K")]
    pub subperiods_per_hour: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub reactance: f64,
    /// Omitted means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgRecord {
    pub id: String,
    pub node: String,
    pub p_max: f64,
    pub p_min: f64,
    pub segments: Vec<CostSegment>,
    pub no_load_cost: f64,
    pub startup_cost: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub startup_rate: f64,
    pub shutdown_rate: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub initial: InitialState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Penalties {
    pub alpha_c: f64,
    pub alpha_r: f64,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<SystemInstance, InstanceError> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let lookup = |id: &str, what: &str| -> Result<usize, InstanceError> {
            index
                .get(id)
                .copied()
                .ok_or_else(|| InstanceError::Validation(format!("{what} references unknown node {id}")))
        };
        let reference_node = match &self.reference_node {
            Some(r) => lookup(r, "reference_node")?,
            None => 0,
        };
        let lines = self
            .lines
            .iter()
            .map(|l| {
                Ok(Line {
                    id: l.id.clone(),
                    from: lookup(&l.from, &format!("line {}", l.id))?,
                    to: lookup(&l.to, &format!("line {}", l.id))?,
                    reactance: l.reactance,
                    flow_min: l.fmin.unwrap_or(f64::NEG_INFINITY),
                    flow_max: l.fmax.unwrap_or(f64::INFINITY),
                })
            })
            .collect::<Result<Vec<_>, InstanceError>>()?;
        let dgs = self
            .dgs
            .iter()
            .map(|d| {
                Ok(Dg {
                    id: d.id.clone(),
                    node: lookup(&d.node, &format!("generator {}", d.id))?,
                    p_max: d.p_max,
                    p_min: d.p_min,
                    segments: d.segments.clone(),
                    no_load_cost: d.no_load_cost,
                    startup_cost: d.startup_cost,
                    ramp_up: d.ramp_up,
                    ramp_down: d.ramp_down,
                    startup_rate: d.startup_rate,
                    shutdown_rate: d.shutdown_rate,
                    min_up: d.min_up,
                    min_down: d.min_down,
                    initial: d.initial,
                })
            })
            .collect::<Result<Vec<_>, InstanceError>>()?;
        let instance = SystemInstance {
            name: self.name,
            time_grid: TimeGrid {
                hours: self.grid.hours,
                subperiods_per_hour: self.grid.subperiods_per_hour,
            },
            nodes: self.nodes,
            lines,
            dgs,
            mean_net_load: self.mean_net_load,
            sigma_fraction: self.sigma_fraction,
            curtailment_penalty: self.penalties.alpha_c,
            frp_shortfall_penalty: self.penalties.alpha_r,
            reference_node,
        };
        instance.validate()?;
        Ok(instance)
    }
}

impl From<&SystemInstance> for InstanceFile {
    fn from(inst: &SystemInstance) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            name: inst.name.clone(),
            grid: GridSection {
                hours: inst.time_grid.hours,
                subperiods_per_hour: inst.time_grid.subperiods_per_hour,
            },
            nodes: inst.nodes.clone(),
            reference_node: Some(inst.nodes[inst.reference_node].clone()),
            lines: inst
                .lines
                .iter()
                .map(|l| LineRecord {
                    id: l.id.clone(),
                    from: inst.nodes[l.from].clone(),
                    to: inst.nodes[l.to].clone(),
                    reactance: l.reactance,
                    fmin: finite(l.flow_min),
                    fmax: finite(l.flow_max),
                })
                .collect(),
            dgs: inst
                .dgs
                .iter()
                .map(|d| DgRecord {
                    id: d.id.clone(),
                    node: inst.nodes[d.node].clone(),
                    p_max: d.p_max,
                    p_min: d.p_min,
                    segments: d.segments.clone(),
                    no_load_cost: d.no_load_cost,
                    startup_cost: d.startup_cost,
                    ramp_up: d.ramp_up,
                    ramp_down: d.ramp_down,
                    startup_rate: d.startup_rate,
                    shutdown_rate: d.shutdown_rate,
                    min_up: d.min_up,
                    min_down: d.min_down,
                    initial: d.initial,
                })
                .collect(),
            mean_net_load: inst.mean_net_load.clone(),
            sigma_fraction: inst.sigma_fraction,
            penalties: Penalties {
                alpha_c: inst.curtailment_penalty,
                alpha_r: inst.frp_shortfall_penalty,
            },
        }
    }
}

pub fn parse_instance(text: &str) -> Result<SystemInstance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_instance()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<SystemInstance, InstanceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

pub fn instance_to_json(inst: &SystemInstance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(inst)).expect("instance serializes")
}

pub fn save_instance(inst: &SystemInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    fs::write(path, instance_to_json(inst)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}
