//! Hourly system-wide flexible ramping requirements.
use crate::instance::{HourlyBidDemand, SystemInstance};
use crate::scenario::{hourly_system_ci, ScenarioSet};
use crate::suc::SucSolution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementSource {
    SucBased,
    Ci95,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrpRequirements {
    /// MW per hour; may be negative.
    pub rho_up: Vec<f64>,
    pub rho_down: Vec<f64>,
    pub source: RequirementSource,
}

impl FrpRequirements {
    pub fn zeros(hours: usize, source: RequirementSource) -> Self {
        Self {
            rho_up: vec![0.0; hours],
            rho_down: vec![0.0; hours],
            source,
        }
    }

    pub fn hours(&self) -> usize {
        self.rho_up.len()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FrpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Requirements from the largest (smallest) change in served net load between
/// consecutive subperiods over all scenarios, scaled to MW per hour. The last
/// subperiod of the horizon has no successor and is skipped.
pub fn compute_frp_requirements(
    scenarios: &ScenarioSet,
    suc: &SucSolution,
    subperiods_per_hour: usize,
) -> Result<FrpRequirements, FrpError> {
    let steps = scenarios.subperiods;
    let k = subperiods_per_hour;
    if k == 0 || steps % k != 0 {
        return Err(FrpError::DimensionMismatch(format!(
            "{steps} subperiods do not divide into hours of {k}"
        )));
    }
    if suc.scenario_count() != scenarios.count
        || suc.curtailment.first().map_or(0, |c| c.len()) != scenarios.nodes
        || suc.grid.subperiods() != steps
        || suc.grid.subperiods_per_hour != k
    {
        return Err(FrpError::DimensionMismatch(
            "commitment solution and scenarios disagree".into(),
        ));
    }
    let hours = steps / k;
    let served: Vec<Vec<f64>> = (0..scenarios.count)
        .map(|i| (0..steps).map(|t| suc.served_load(scenarios, i, t)).collect())
        .collect();
    let mut up = vec![f64::NEG_INFINITY; hours];
    let mut down = vec![f64::INFINITY; hours];
    for s in &served {
        for t in 0..steps - 1 {
            let h = t / k;
            let delta = s[t + 1] - s[t];
            up[h] = up[h].max(delta);
            down[h] = down[h].min(delta);
        }
    }
    let kf = k as f64;
    let finite = |x: f64| if x.is_finite() { x } else { 0.0 };
    Ok(FrpRequirements {
        rho_up: up.into_iter().map(|x| finite(kf * x)).collect(),
        rho_down: down.into_iter().map(|x| finite(-kf * x)).collect(),
        source: RequirementSource::SucBased,
    })
}

/// Requirements from the 95% interval of the hourly system net load around
/// the bid-in demand.
pub fn compute_ci95_requirements(instance: &SystemInstance, d_hat: &HourlyBidDemand) -> FrpRequirements {
    let ci = hourly_system_ci(instance, 0.95);
    let total: Vec<f64> = (0..ci.len()).map(|h| d_hat.system_total(h)).collect();
    FrpRequirements {
        rho_up: ci.iter().zip(&total).map(|((_, hi), d)| hi - d).collect(),
        rho_down: ci.iter().zip(&total).map(|((lo, _), d)| d - lo).collect(),
        source: RequirementSource::Ci95,
    }
}
