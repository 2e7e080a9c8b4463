//! Two-settlement accounting with make-whole uplifts.
//!
//! Day-ahead awards settle at day-ahead prices for the full hour. Real-time
//! deviations from those awards settle at fifteen-minute prices over the
//! binding subperiods. A DG whose revenue falls short of its incurred cost
//! receives an uplift that lets it break even.
//!
//! Consumers pay for bid-in demand at day-ahead prices, for the difference
//! between served net load and bid-in demand at real-time prices, and for all
//! uplifts. Ramping-product payments to DGs are reported as a procurement
//! cost but are not charged to consumers, so they appear in the residual.
//! Curtailment penalties are not a payment; curtailment is reported on its own.
use crate::damc::{DamResult, DamVariant};
use crate::fmm::{FmmTrace, SUBPERIODS_PER_HOUR};
use crate::instance::SystemInstance;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const STEP_HOURS: f64 = 1.0 / SUBPERIODS_PER_HOUR as f64;

#[derive(Debug, Error, PartialEq)]
pub enum SettlementError {
    #[error("day-ahead result is {dam} but the real-time trace is {trace}")]
    VariantMismatch { dam: DamVariant, trace: DamVariant },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgLedger {
    pub id: String,
    pub da_energy_revenue: f64,
    pub frp_revenue: f64,
    /// Signed.
    pub rt_deviation_revenue: f64,
    pub startup_cost: f64,
    pub no_load_cost: f64,
    pub dispatch_cost: f64,
    pub incurred_cost: f64,
    pub uplift: f64,
}

impl DgLedger {
    pub fn market_revenue(&self) -> f64 {
        self.da_energy_revenue + self.frp_revenue + self.rt_deviation_revenue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub variant: DamVariant,
    pub realization_id: usize,
    pub dgs: Vec<DgLedger>,
    /// Bid-in demand at day-ahead prices.
    pub consumer_da_payment: f64,
    /// Served minus bid-in demand at real-time prices.
    pub consumer_rt_payment: f64,
    /// Sum of ramping-product revenue over DGs.
    pub frp_procurement_cost: f64,
    pub uplift_total: f64,
    pub consumer_payment: f64,
    /// Consumer payment minus everything paid to DGs.
    pub residual: f64,
    /// Sum of binding-subperiod curtailment, MW.
    pub curtailment: f64,
}

/// Settles one realization of one variant.
pub fn settle(instance: &SystemInstance, dam: &DamResult, trace: &FmmTrace) -> Result<SettlementReport, SettlementError> {
    if dam.variant != trace.variant {
        return Err(SettlementError::VariantMismatch {
            dam: dam.variant,
            trace: trace.variant,
        });
    }
    let hours = dam.hours();
    if trace.runs.len() != hours || dam.commitment.len() != instance.dgs.len() || dam.lmp.len() != instance.num_nodes() {
        return Err(SettlementError::DimensionMismatch(
            "day-ahead result, trace and instance disagree".into(),
        ));
    }

    let mut dgs = Vec::with_capacity(instance.dgs.len());
    for (g, dg) in instance.dgs.iter().enumerate() {
        let n = dg.node;
        let mut da = 0.0;
        let mut frp = 0.0;
        let mut startup = 0.0;
        let mut no_load = 0.0;
        for h in 0..hours {
            da += dam.lmp[n][h] * dam.generation(instance, g, h);
            frp += dam.price_up[h] * dam.r_up[g][h] + dam.price_down[h] * dam.r_down[g][h];
            if dam.startup[g][h] {
                startup += dg.startup_cost;
            }
            if dam.commitment[g][h] {
                no_load += dg.no_load_cost;
            }
        }
        let p_rt = trace.binding_dispatch(g);
        let on_rt = trace.binding_commitment(g);
        let lmp_rt = trace.binding_lmp(n);
        let mut rt = 0.0;
        let mut dispatch_cost = 0.0;
        for (k, (&p, &on)) in p_rt.iter().zip(&on_rt).enumerate() {
            let h = k / SUBPERIODS_PER_HOUR;
            let gen_rt = if on { dg.p_min } else { 0.0 } + p;
            rt += lmp_rt[k] * (gen_rt - dam.generation(instance, g, h)) * STEP_HOURS;
            dispatch_cost += dg.dispatch_cost_rate(p) * STEP_HOURS;
        }
        let incurred = startup + no_load + dispatch_cost;
        let revenue = da + frp + rt;
        dgs.push(DgLedger {
            id: dg.id.clone(),
            da_energy_revenue: da,
            frp_revenue: frp,
            rt_deviation_revenue: rt,
            startup_cost: startup,
            no_load_cost: no_load,
            dispatch_cost,
            incurred_cost: incurred,
            uplift: (incurred - revenue).max(0.0),
        });
    }

    let mut consumer_da = 0.0;
    let mut consumer_rt = 0.0;
    for n in 0..instance.num_nodes() {
        for h in 0..hours {
            consumer_da += dam.lmp[n][h] * dam.d_hat[n][h];
        }
        let lmp = trace.binding_lmp(n);
        let load = trace.binding_net_load(n);
        let curtail = trace.binding_curtailment(n);
        for k in 0..lmp.len() {
            let served = load[k] - curtail[k];
            consumer_rt += lmp[k] * (served - dam.d_hat[n][k / SUBPERIODS_PER_HOUR]) * STEP_HOURS;
        }
    }
    let frp_cost: f64 = dgs.iter().map(|d| d.frp_revenue).sum();
    let uplift_total: f64 = dgs.iter().map(|d| d.uplift).sum();
    let consumer_payment = consumer_da + consumer_rt + uplift_total;
    let paid_to_dgs: f64 = dgs.iter().map(|d| d.market_revenue() + d.uplift).sum();
    Ok(SettlementReport {
        variant: dam.variant,
        realization_id: trace.realization_id,
        dgs,
        consumer_da_payment: consumer_da,
        consumer_rt_payment: consumer_rt,
        frp_procurement_cost: frp_cost,
        uplift_total,
        consumer_payment,
        residual: consumer_payment - paid_to_dgs,
        curtailment: trace.total_curtailment(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub total_payment: f64,
    pub total_curtailment: f64,
}

/// Sums payments and curtailment over realizations.
pub fn aggregate(reports: &[SettlementReport]) -> Totals {
    reports.iter().fold(Totals::default(), |acc, r| Totals {
        total_payment: acc.total_payment + r.consumer_payment,
        total_curtailment: acc.total_curtailment + r.curtailment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::fmm::tests::day_ahead;
    use crate::fmm::{run_fmm_sequence, FmmOptions};
    use crate::milp::SolverOptions;
    use approx::assert_abs_diff_eq;

    fn day(inst: &SystemInstance, realization: &[Vec<f64>]) -> (DamResult, FmmTrace) {
        let (isf, dam) = day_ahead(inst);
        let trace =
            run_fmm_sequence(inst, &isf, &dam, realization, 3, &FmmOptions::default(), &SolverOptions::default()).unwrap();
        (dam, trace)
    }

    #[test]
    fn matching_realization_has_no_real_time_legs() {
        let inst = fixtures::single_node(SUBPERIODS_PER_HOUR, 2);
        let (dam, trace) = day(&inst, &inst.mean_net_load);
        let r = settle(&inst, &dam, &trace).unwrap();
        assert_eq!(r.realization_id, 3);
        assert_abs_diff_eq!(r.consumer_rt_payment, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.dgs[0].rt_deviation_revenue, 0.0, epsilon = 1e-6);
        // 100 MW for two hours at 20 $/MWh
        assert_abs_diff_eq!(r.consumer_da_payment, 4000.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.consumer_payment, r.consumer_da_payment + r.uplift_total, epsilon = 1e-9);
        assert_eq!(r.curtailment, 0.0);
    }

    #[test]
    fn uplift_covers_the_gap_to_cost() {
        // one segment at 40 $/MWh, no fixed costs, prices forced to 25
        let mut inst = fixtures::single_node(SUBPERIODS_PER_HOUR, 1);
        let dg = &mut inst.dgs[0];
        dg.segments = vec![crate::instance::CostSegment { upper_mw: 200.0, marginal_cost: 40.0 }];
        dg.p_min = 0.0;
        dg.no_load_cost = 0.0;
        dg.startup_cost = 0.0;
        let (mut dam, mut trace) = day(&inst, &inst.mean_net_load);
        dam.lmp[0][0] = 25.0;
        for r in &mut trace.runs {
            r.lmp.iter_mut().flatten().for_each(|x| *x = 25.0);
        }
        let r = settle(&inst, &dam, &trace).unwrap();
        let energy = dam.generation(&inst, 0, 0);
        assert_abs_diff_eq!(energy, 100.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.dgs[0].dispatch_cost, 40.0 * energy, epsilon = 1e-6);
        assert_abs_diff_eq!(r.dgs[0].uplift, (40.0 - 25.0) * energy, epsilon = 1e-6);
    }

    #[test]
    fn real_time_excess_settles_at_real_time_prices() {
        let inst = fixtures::single_node(SUBPERIODS_PER_HOUR, 1);
        let (dam, trace) = day(&inst, &[vec![110.0; 4]]);
        let r = settle(&inst, &dam, &trace).unwrap();
        // 100 MW above minimum is on the 30 $/MWh segment; 10 MW extra for one hour
        assert_abs_diff_eq!(r.consumer_rt_payment, 300.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.dgs[0].rt_deviation_revenue, 300.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.residual, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let inst = fixtures::single_node(SUBPERIODS_PER_HOUR, 1);
        let (dam, mut trace) = day(&inst, &inst.mean_net_load);
        trace.variant = DamVariant::Proposed;
        assert_eq!(
            settle(&inst, &dam, &trace).unwrap_err(),
            SettlementError::VariantMismatch {
                dam: DamVariant::Without,
                trace: DamVariant::Proposed
            }
        );
    }

    #[test]
    fn aggregate_sums_without_averaging() {
        let inst = fixtures::single_node(SUBPERIODS_PER_HOUR, 1);
        let (dam, trace) = day(&inst, &[vec![250.0; 4]]);
        let one = settle(&inst, &dam, &trace).unwrap();
        let totals = aggregate(&vec![one.clone(); 5]);
        assert_abs_diff_eq!(totals.total_payment, 5.0 * one.consumer_payment, epsilon = 1e-6);
        assert_abs_diff_eq!(totals.total_curtailment, 5.0 * 200.0, epsilon = 1e-6);
        assert_eq!(aggregate(&[]), Totals::default());
    }
}
