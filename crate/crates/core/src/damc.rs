//! Hourly day-ahead market clearing with flexible ramping products.
//!
//! Four variants share one model:
//! * `Proposed` imposes the scenario-based requirements and keeps every unit
//!   that the stochastic commitment turned on.
//! * `Nf` imposes the same requirements without that commitment floor.
//! * `Ci95` imposes requirements from the 95% interval of the net load.
//! * `Without` procures no ramping product.
//!
//! Prices come from the LP obtained by fixing all binaries at the MILP optimum.
use crate::frp::{FrpRequirements, RequirementSource};
use crate::instance::{HourlyBidDemand, SystemInstance};
use crate::milp::{
    self, fix_and_relax_duals, LinExpr, ModelBuilder, RowId, Sense, SolveStatus, SolverError,
    SolverOptions, VarId,
};
use crate::network::IsfMatrix;
use crate::suc::{RampMode, SucSolution};
use crate::unit::{self, CommitmentVars, Demand, DispatchVars, UnitState};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamVariant {
    Proposed,
    Nf,
    Ci95,
    Without,
}

impl DamVariant {
    pub const ALL: [DamVariant; 4] = [
        DamVariant::Proposed,
        DamVariant::Nf,
        DamVariant::Ci95,
        DamVariant::Without,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DamVariant::Proposed => "PROPOSED",
            DamVariant::Nf => "NF",
            DamVariant::Ci95 => "CI95",
            DamVariant::Without => "WITHOUT",
        }
    }

    /// Whether the variant consumes the stochastic commitment.
    pub fn needs_suc(self) -> bool {
        matches!(self, DamVariant::Proposed | DamVariant::Nf)
    }

    fn required_source(self) -> Option<RequirementSource> {
        match self {
            DamVariant::Proposed | DamVariant::Nf => Some(RequirementSource::SucBased),
            DamVariant::Ci95 => Some(RequirementSource::Ci95),
            DamVariant::Without => None,
        }
    }
}

impl fmt::Display for DamVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DamVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(DamVariant::Proposed),
            "nf" => Ok(DamVariant::Nf),
            "ci95" => Ok(DamVariant::Ci95),
            "without" | "w/o" => Ok(DamVariant::Without),
            other => Err(format!("unknown variant {other:?} (proposed, nf, ci95, without)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DamcError {
    #[error("{variant} needs {what}")]
    MissingInput { variant: DamVariant, what: &'static str },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("market clearing ended with status {0:?}")]
    NotOptimal(SolveStatus),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DamcOptions {
    pub ramp_mode: RampMode,
}

#[derive(Debug, Clone)]
struct FrpHandles {
    r_up: Vec<Vec<VarId>>,
    r_down: Vec<Vec<VarId>>,
    short_up: Vec<VarId>,
    short_down: Vec<VarId>,
    req_up: Vec<RowId>,
    req_down: Vec<RowId>,
}

#[derive(Debug, Clone)]
pub struct DamcModel {
    pub model: ModelBuilder,
    pub variant: DamVariant,
    d_hat: Vec<Vec<f64>>,
    requirements: FrpRequirements,
    commitment: CommitmentVars,
    dispatch: DispatchVars,
    /// `[hour][node]`
    curtail: Vec<Vec<VarId>>,
    /// `[hour][node]`
    demand_rows: Vec<Vec<RowId>>,
    frp: Option<FrpHandles>,
    dg_ids: Vec<String>,
}

impl DamcModel {
    /// Rows whose duals are prices: every nodal demand row (hour-major), then
    /// the up and down requirement rows.
    pub fn marked_rows(&self) -> Vec<RowId> {
        let mut rows: Vec<RowId> = self.demand_rows.iter().flatten().copied().collect();
        if let Some(f) = &self.frp {
            rows.extend(&f.req_up);
            rows.extend(&f.req_down);
        }
        rows
    }

    /// Demand-fixing row of node `n` in hour `h`.
    pub fn demand_row(&self, n: usize, h: usize) -> RowId {
        self.demand_rows[h][n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamResult {
    pub variant: DamVariant,
    pub dg_ids: Vec<String>,
    /// `[dg][hour]`
    pub commitment: Vec<Vec<bool>>,
    pub startup: Vec<Vec<bool>>,
    pub shutdown: Vec<Vec<bool>>,
    /// Output above minimum, `[dg][hour]` MW.
    pub dispatch: Vec<Vec<f64>>,
    /// `[dg][segment][hour]` MW.
    pub segment_dispatch: Vec<Vec<Vec<f64>>>,
    /// `[node][hour]` MW.
    pub curtailment: Vec<Vec<f64>>,
    /// `[dg][hour]` MW.
    pub r_up: Vec<Vec<f64>>,
    pub r_down: Vec<Vec<f64>>,
    pub shortfall_up: Vec<f64>,
    pub shortfall_down: Vec<f64>,
    /// `[node][hour]` $/MWh.
    pub lmp: Vec<Vec<f64>>,
    pub price_up: Vec<f64>,
    pub price_down: Vec<f64>,
    pub objective: f64,
    /// Bid-in demand the market cleared against, `[node][hour]` MW.
    pub d_hat: Vec<Vec<f64>>,
    pub requirements: FrpRequirements,
}

impl DamResult {
    pub fn hours(&self) -> usize {
        self.d_hat.first().map_or(0, |r| r.len())
    }

    /// Total output (minimum plus above-minimum) of `g` in hour `h`.
    pub fn generation(&self, instance: &SystemInstance, g: usize, h: usize) -> f64 {
        let on = if self.commitment[g][h] { 1.0 } else { 0.0 };
        instance.dgs[g].p_min * on + self.dispatch[g][h]
    }
}

/// FRP capability bounds of one DG in hour `h`; `next` terms refer to hour
/// `h + 1`, or repeat hour `h` with no transitions at the horizon end.
struct FrpBounds {
    up_lo: LinExpr,
    up_hi: LinExpr,
    down_lo: LinExpr,
    down_hi: LinExpr,
    joint_lo: LinExpr,
    joint_hi: LinExpr,
}

fn frp_bounds(dg: &crate::instance::Dg, u: &LinExpr, u_next: &LinExpr, v_next: &LinExpr, w_next: &LinExpr) -> FrpBounds {
    let (ru, rd) = (dg.ramp_up, dg.ramp_down);
    let (su, sd) = (dg.startup_rate, dg.shutdown_rate);
    let (pmin, pmax) = (dg.p_min, dg.p_max);
    FrpBounds {
        up_lo: u * -rd + w_next * (rd - sd) + v_next * pmin,
        up_hi: u_next * ru + v_next * (su - ru),
        down_lo: u_next * -ru + v_next * (ru - su),
        down_hi: u * rd + w_next * (sd - rd) - v_next * pmin,
        joint_lo: u_next * pmin - pmin,
        joint_hi: u * -pmin + v_next * (su - pmax) + pmax,
    }
}

/// Builds the clearing model for `variant`.
pub fn build_damc(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    d_hat: &HourlyBidDemand,
    req: Option<&FrpRequirements>,
    suc: Option<&SucSolution>,
    variant: DamVariant,
    options: &DamcOptions,
) -> Result<DamcModel, DamcError> {
    let hours = instance.time_grid.hours;
    let nodes = instance.num_nodes();
    if d_hat.d_hat.len() != nodes || d_hat.d_hat.iter().any(|r| r.len() != hours) {
        return Err(DamcError::DimensionMismatch("bid-in demand must be nodes x hours".into()));
    }
    let requirements = match variant.required_source() {
        None => FrpRequirements::zeros(hours, RequirementSource::None),
        Some(source) => {
            let r = req.ok_or(DamcError::MissingInput {
                variant,
                what: "ramping requirements",
            })?;
            if r.source != source {
                return Err(DamcError::MissingInput {
                    variant,
                    what: match source {
                        RequirementSource::Ci95 => "interval-based requirements",
                        _ => "scenario-based requirements",
                    },
                });
            }
            if r.hours() != hours || r.rho_down.len() != hours {
                return Err(DamcError::DimensionMismatch("requirements must cover every hour".into()));
            }
            r.clone()
        }
    };
    let anchor = if variant == DamVariant::Proposed {
        let s = suc.ok_or(DamcError::MissingInput {
            variant,
            what: "the stochastic commitment",
        })?;
        if s.commitment.len() != instance.dgs.len() || s.grid.hours != hours {
            return Err(DamcError::DimensionMismatch("commitment solution does not match".into()));
        }
        Some(s.hourly_commitments())
    } else {
        None
    };

    let mut model = ModelBuilder::new();
    let commitment = unit::add_commitment_vars(&mut model, instance, 1, hours, false);
    let exprs = commitment.exprs();
    let initial: Vec<UnitState> = instance.dgs.iter().map(UnitState::initial).collect();
    let dispatch = unit::add_dispatch(&mut model, instance, &exprs, 1, &initial, options.ramp_mode, 1.0);

    let mut curtail = Vec::with_capacity(hours);
    let mut demand_rows = Vec::with_capacity(hours);
    for h in 0..hours {
        let load: Vec<f64> = (0..nodes).map(|n| d_hat.d_hat[n][h]).collect();
        let gen = unit::nodal_generation(instance, &exprs, &dispatch, h);
        let bal = unit::add_nodal_balance(&mut model, gen, Demand::Priced(&load), instance.curtailment_penalty, None);
        for l in unit::limited_lines(instance) {
            unit::add_flow_limit(&mut model, instance, isf, l, &bal.injection);
        }
        curtail.push(bal.curtail);
        demand_rows.push(bal.demand_rows.expect("priced demand"));
    }

    let frp = (variant != DamVariant::Without).then(|| {
        let alpha_r = instance.frp_shortfall_penalty;
        let mut h_ = FrpHandles {
            r_up: Vec::new(),
            r_down: Vec::new(),
            short_up: Vec::new(),
            short_down: Vec::new(),
            req_up: Vec::new(),
            req_down: Vec::new(),
        };
        for (g, dg) in instance.dgs.iter().enumerate() {
            let mut ups = Vec::with_capacity(hours);
            let mut downs = Vec::with_capacity(hours);
            for h in 0..hours {
                let up = model.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
                let down = model.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
                let u = &exprs.u[g][h];
                let (u_next, v_next, w_next) = if h + 1 < hours {
                    (exprs.u[g][h + 1].clone(), exprs.v[g][h + 1].clone(), exprs.w[g][h + 1].clone())
                } else {
                    (u.clone(), LinExpr::new(), LinExpr::new())
                };
                let b = frp_bounds(dg, u, &u_next, &v_next, &w_next);
                let p = dispatch.p[g][h];
                model.add_constraint(LinExpr::from(up) - b.up_lo, Sense::Ge, 0.0);
                model.add_constraint(LinExpr::from(up) - b.up_hi, Sense::Le, 0.0);
                model.add_constraint(LinExpr::from(down) - b.down_lo, Sense::Ge, 0.0);
                model.add_constraint(LinExpr::from(down) - b.down_hi, Sense::Le, 0.0);
                let up_joint = LinExpr::from(up) + p;
                model.add_constraint(up_joint.clone() - b.joint_lo.clone(), Sense::Ge, 0.0);
                model.add_constraint(up_joint - b.joint_hi.clone(), Sense::Le, 0.0);
                let down_joint = LinExpr::from(p) - down;
                model.add_constraint(down_joint.clone() - b.joint_lo, Sense::Ge, 0.0);
                model.add_constraint(down_joint - b.joint_hi, Sense::Le, 0.0);
                ups.push(up);
                downs.push(down);
            }
            h_.r_up.push(ups);
            h_.r_down.push(downs);
        }
        for h in 0..hours {
            let su = model.add_var(0.0, f64::INFINITY, alpha_r);
            let sd = model.add_var(0.0, f64::INFINITY, alpha_r);
            let mut up = LinExpr::from(su);
            let mut down = LinExpr::from(sd);
            for g in 0..instance.dgs.len() {
                up += h_.r_up[g][h];
                down += h_.r_down[g][h];
            }
            h_.req_up.push(model.add_constraint(up, Sense::Ge, requirements.rho_up[h]));
            h_.req_down.push(model.add_constraint(down, Sense::Ge, requirements.rho_down[h]));
            h_.short_up.push(su);
            h_.short_down.push(sd);
        }
        h_
    });

    if let Some(anchor) = anchor {
        for (g, row) in anchor.iter().enumerate() {
            for (h, &on) in row.iter().enumerate() {
                if on {
                    model.add_constraint(commitment.u[g][h], Sense::Ge, 1.0);
                }
            }
        }
    }

    Ok(DamcModel {
        model,
        variant,
        d_hat: d_hat.d_hat.clone(),
        requirements,
        commitment,
        dispatch,
        curtail,
        demand_rows,
        frp,
        dg_ids: instance.dgs.iter().map(|d| d.id.clone()).collect(),
    })
}

/// Solves the MILP, fixes the binaries, and reads energy and ramping prices
/// from the duals of the demand-fixing and requirement rows.
pub fn solve_and_price(dm: &DamcModel, solver: &SolverOptions) -> Result<DamResult, DamcError> {
    let sol = milp::solve(&dm.model, solver)?;
    if sol.status != SolveStatus::Optimal {
        return Err(DamcError::NotOptimal(sol.status));
    }
    let marked = dm.marked_rows();
    let priced = fix_and_relax_duals(&dm.model, &sol, &marked, solver)?;
    let lp = &priced.lp;
    let hours = dm.demand_rows.len();
    let nodes = dm.d_hat.len();

    let bin = |x: &Vec<Vec<VarId>>| -> Vec<Vec<bool>> {
        x.iter()
            .map(|row| row.iter().map(|&v| sol.value(v) > 0.5).collect())
            .collect()
    };
    let val = |v: VarId| lp.value(v);
    let nonneg = |v: VarId| lp.value(v).max(0.0);
    let duals = &priced.marked_duals;
    let lmp = (0..nodes)
        .map(|n| (0..hours).map(|h| duals[h * nodes + n]).collect())
        .collect();
    let base = hours * nodes;
    let (r_up, r_down, short_up, short_down, price_up, price_down) = match &dm.frp {
        Some(f) => (
            f.r_up.iter().map(|r| r.iter().map(|&v| val(v)).collect()).collect(),
            f.r_down.iter().map(|r| r.iter().map(|&v| val(v)).collect()).collect(),
            f.short_up.iter().map(|&v| nonneg(v)).collect(),
            f.short_down.iter().map(|&v| nonneg(v)).collect(),
            duals[base..base + hours].to_vec(),
            duals[base + hours..base + 2 * hours].to_vec(),
        ),
        None => {
            let g = dm.dg_ids.len();
            (
                vec![vec![0.0; hours]; g],
                vec![vec![0.0; hours]; g],
                vec![0.0; hours],
                vec![0.0; hours],
                vec![0.0; hours],
                vec![0.0; hours],
            )
        }
    };
    Ok(DamResult {
        variant: dm.variant,
        dg_ids: dm.dg_ids.clone(),
        commitment: bin(&dm.commitment.u),
        startup: bin(&dm.commitment.v),
        shutdown: bin(&dm.commitment.w),
        dispatch: dm.dispatch.p.iter().map(|r| r.iter().map(|&v| nonneg(v)).collect()).collect(),
        segment_dispatch: dm
            .dispatch
            .seg
            .iter()
            .map(|segs| segs.iter().map(|r| r.iter().map(|&v| nonneg(v)).collect()).collect())
            .collect(),
        curtailment: (0..nodes)
            .map(|n| (0..hours).map(|h| nonneg(dm.curtail[h][n])).collect())
            .collect(),
        r_up,
        r_down,
        shortfall_up: short_up,
        shortfall_down: short_down,
        lmp,
        price_up,
        price_down,
        objective: sol.objective,
        d_hat: dm.d_hat.clone(),
        requirements: dm.requirements.clone(),
    })
}

/// Builds, solves and prices in one call.
pub fn run_damc(
    instance: &SystemInstance,
    isf: &IsfMatrix,
    d_hat: &HourlyBidDemand,
    req: Option<&FrpRequirements>,
    suc: Option<&SucSolution>,
    variant: DamVariant,
    options: &DamcOptions,
    solver: &SolverOptions,
) -> Result<DamResult, DamcError> {
    let m = build_damc(instance, isf, d_hat, req, suc, variant, options)?;
    solve_and_price(&m, solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::compute_isf;
    use approx::assert_abs_diff_eq;

    fn clear(inst: &SystemInstance, req: Option<&FrpRequirements>, variant: DamVariant) -> DamResult {
        let isf = compute_isf(inst).unwrap();
        let d_hat = inst.compute_hourly_bid_demand();
        run_damc(inst, &isf, &d_hat, req, None, variant, &DamcOptions::default(), &SolverOptions::default()).unwrap()
    }

    fn flat_req(hours: usize, up: f64, down: f64) -> FrpRequirements {
        FrpRequirements {
            rho_up: vec![up; hours],
            rho_down: vec![down; hours],
            source: RequirementSource::SucBased,
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in DamVariant::ALL {
            assert_eq!(v.label().parse::<DamVariant>().unwrap(), v);
        }
        assert!("spot".parse::<DamVariant>().is_err());
    }

    #[test]
    fn marginal_segment_sets_price() {
        // 150 MW load on a 10 MW minimum unit puts 140 MW above minimum, inside
        // the second segment (90..190 above minimum) priced at 30
        let mut inst = fixtures::single_node(1, 3);
        inst.mean_net_load[0] = vec![150.0; 3];
        let r = clear(&inst, None, DamVariant::Without);
        for h in 0..3 {
            assert_abs_diff_eq!(r.lmp[0][h], 30.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn slack_requirement_has_zero_price() {
        let inst = fixtures::single_node(1, 3);
        let r = clear(&inst, Some(&flat_req(3, 1.0, 1.0)), DamVariant::Nf);
        for h in 0..3 {
            assert_abs_diff_eq!(r.price_up[h], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.shortfall_up[h], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn unreachable_requirement_is_short_at_penalty_price() {
        let mut inst = fixtures::single_node(1, 3);
        inst.dgs[0].ramp_up = 40.0;
        inst.dgs[0].ramp_down = 40.0;
        let rho = 70.0;
        let r = clear(&inst, Some(&flat_req(3, rho, 0.0)), DamVariant::Nf);
        for h in 0..3 {
            let attainable: f64 = r.r_up.iter().map(|x| x[h]).sum();
            assert_abs_diff_eq!(attainable, 40.0, epsilon = 1e-7);
            assert_abs_diff_eq!(r.shortfall_up[h], rho - 40.0, epsilon = 1e-7);
            assert_abs_diff_eq!(r.price_up[h], inst.frp_shortfall_penalty, epsilon = 1e-7);
        }
    }

    #[test]
    fn horizon_end_uses_steady_commitment() {
        let mut inst = fixtures::single_node(1, 2);
        inst.dgs[0].ramp_up = 50.0;
        inst.dgs[0].ramp_down = 60.0;
        let r = clear(&inst, Some(&flat_req(2, 500.0, 500.0)), DamVariant::Nf);
        assert!(r.commitment[0][1]);
        assert_abs_diff_eq!(r.r_up[0][1], 50.0, epsilon = 1e-7);
        // down is also capped by output above minimum (90 MW)
        assert_abs_diff_eq!(r.r_down[0][1], 60.0, epsilon = 1e-7);
    }

    #[test]
    fn offline_unit_offers_nothing_at_horizon_end() {
        let mut inst = fixtures::single_node(1, 2);
        let mut idle = inst.dgs[0].clone();
        idle.id = "idle".into();
        idle.initial.committed = false;
        idle.initial.power_above_min = 0.0;
        idle.initial.hours_on = 0;
        idle.initial.hours_off = 5;
        // still locked off for the whole horizon
        idle.min_down = 10;
        inst.dgs.push(idle);
        let r = clear(&inst, Some(&flat_req(2, 500.0, 500.0)), DamVariant::Nf);
        assert!(!r.commitment[1][1]);
        assert_abs_diff_eq!(r.r_up[1][1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.r_down[1][1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn startup_in_last_hour_bounded_like_steady_state() {
        let mut inst = fixtures::single_node(1, 2);
        inst.dgs[0].initial.committed = false;
        inst.dgs[0].initial.power_above_min = 0.0;
        inst.dgs[0].initial.hours_on = 0;
        inst.dgs[0].initial.hours_off = 3;
        inst.dgs[0].ramp_up = 50.0;
        inst.mean_net_load[0] = vec![0.0, 100.0];
        let r = clear(&inst, Some(&flat_req(2, 500.0, 0.0)), DamVariant::Nf);
        assert!(r.startup[0][1]);
        assert_abs_diff_eq!(r.r_up[0][1], 50.0, epsilon = 1e-7);
    }

    #[test]
    fn missing_inputs_rejected() {
        let inst = fixtures::single_node(1, 2);
        let isf = compute_isf(&inst).unwrap();
        let d = inst.compute_hourly_bid_demand();
        let o = DamcOptions::default();
        let build = |req, suc, v| build_damc(&inst, &isf, &d, req, suc, v, &o);
        assert!(matches!(build(None, None, DamVariant::Nf), Err(DamcError::MissingInput { .. })));
        let req = flat_req(2, 0.0, 0.0);
        assert!(matches!(build(Some(&req), None, DamVariant::Proposed), Err(DamcError::MissingInput { .. })));
        assert!(matches!(build(Some(&req), None, DamVariant::Ci95), Err(DamcError::MissingInput { .. })));
        assert!(build(None, None, DamVariant::Without).is_ok());
    }
}
