//! Sampling of nodal net-load realizations.
//!
//! Every draw is addressed by `(seed, purpose, scenario, node, subperiod)`.
//! The address is hashed with the SplitMix64 finalizer into a 53-bit uniform on
//! the open unit interval, and the uniform is mapped through the standard
//! normal inverse CDF. A draw therefore never depends on how many scenarios
//! are requested or in which order they are generated.
use crate::instance::{InstanceError, SystemInstance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    InSample,
    OutOfSample,
}

impl Purpose {
    fn stream_tag(self) -> u64 {
        match self {
            Purpose::InSample => 0x5eed_0000_0000_0001,
            Purpose::OutOfSample => 0x5eed_0000_0000_0002,
        }
    }
}

/// `realizations[(i * nodes + n) * subperiods + k]` is the net load (MW) of
/// scenario `i` at node `n` in subperiod `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub purpose: Purpose,
    pub count: usize,
    pub nodes: usize,
    pub subperiods: usize,
    pub realizations: Vec<f64>,
}

impl ScenarioSet {
    pub fn get(&self, i: usize, n: usize, k: usize) -> f64 {
        self.realizations[(i * self.nodes + n) * self.subperiods + k]
    }

    /// Net load of scenario `i` at node `n` across all subperiods.
    pub fn node_series(&self, i: usize, n: usize) -> &[f64] {
        let start = (i * self.nodes + n) * self.subperiods;
        &self.realizations[start..start + self.subperiods]
    }

    /// One realization as a `node x subperiod` matrix.
    pub fn trajectory(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.nodes).map(|n| self.node_series(i, n).to_vec()).collect()
    }

    /// A set holding exactly the given trajectories (`[scenario][node][k]`).
    pub fn from_trajectories(
        seed: u64,
        purpose: Purpose,
        trajectories: &[Vec<Vec<f64>>],
    ) -> Self {
        let nodes = trajectories.first().map_or(0, |t| t.len());
        let subperiods = trajectories
            .first()
            .and_then(|t| t.first())
            .map_or(0, |r| r.len());
        let realizations = trajectories.iter().flatten().flatten().copied().collect();
        Self {
            seed,
            purpose,
            count: trajectories.len(),
            nodes,
            subperiods,
            realizations,
        }
    }

    /// First `count` scenarios of this set.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.count);
        Self {
            count,
            realizations: self.realizations[..count * self.nodes * self.subperiods].to_vec(),
            ..self.clone()
        }
    }

    pub fn matches(&self, instance: &SystemInstance) -> bool {
        self.nodes == instance.num_nodes() && self.subperiods == instance.time_grid.subperiods()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform on (0, 1) for one draw address.
pub fn counter_uniform(seed: u64, purpose: Purpose, i: usize, n: usize, k: usize) -> f64 {
    let mut h = splitmix64(seed ^ purpose.stream_tag());
    h = splitmix64(h ^ i as u64);
    h = splitmix64(h ^ n as u64);
    h = splitmix64(h ^ k as u64);
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard normal draw for one address.
pub fn counter_normal(seed: u64, purpose: Purpose, i: usize, n: usize, k: usize) -> f64 {
    standard_normal().inverse_cdf(counter_uniform(seed, purpose, i, n, k))
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Draws `count` i.i.d. realizations of the nodal net load around the
/// instance means with standard deviation `|mean| * sigma_fraction`.
pub fn sample_scenarios(
    instance: &SystemInstance,
    count: usize,
    seed: u64,
    purpose: Purpose,
) -> ScenarioSet {
    assert!(count >= 1, "at least one scenario is required");
    let nodes = instance.num_nodes();
    let subperiods = instance.time_grid.subperiods();
    let sigma = instance.sigma_fraction;
    let realizations: Vec<f64> = (0..count * nodes * subperiods)
        .into_par_iter()
        .map(|idx| {
            let k = idx % subperiods;
            let n = (idx / subperiods) % nodes;
            let i = idx / (subperiods * nodes);
            let mean = instance.mean_net_load[n][k];
            let sd = mean.abs() * sigma;
            if sd == 0.0 {
                mean
            } else {
                mean + sd * counter_normal(seed, purpose, i, n, k)
            }
        })
        .collect();
    ScenarioSet {
        seed,
        purpose,
        count,
        nodes,
        subperiods,
        realizations,
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Two-sided interval on the hourly system net load
/// `D(h) = (1/K) * sum_{k in h} sum_n xi_n[k]` under the independent
/// Gaussian model.
pub fn hourly_system_ci(instance: &SystemInstance, confidence: f64) -> Vec<(f64, f64)> {
    assert!(
        confidence > 0.0 && confidence < 1.0,
        "confidence must lie in (0, 1)"
    );
    let grid = instance.time_grid;
    let k = grid.subperiods_per_hour as f64;
    let z = normal_quantile((1.0 + confidence) / 2.0);
    let d_hat = instance.compute_hourly_bid_demand();
    (0..grid.hours)
        .map(|h| {
            let mean = d_hat.system_total(h);
            let var: f64 = instance
                .mean_net_load
                .iter()
                .flat_map(|row| row[grid.subperiods_in(h)].iter())
                .map(|m| (m.abs() * instance.sigma_fraction).powi(2))
                .sum::<f64>()
                / (k * k);
            let half = z * var.sqrt();
            (mean - half, mean + half)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_sigma_reproduces_means() {
        let inst = fixtures::three_node_ring(4, 3).with_sigma_fraction(0.0);
        let s = sample_scenarios(&inst, 3, 11, Purpose::InSample);
        for i in 0..3 {
            assert_eq!(s.trajectory(i), inst.mean_net_load);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let inst = fixtures::three_node_ring(4, 3);
        let a = sample_scenarios(&inst, 5, 99, Purpose::InSample);
        let b = sample_scenarios(&inst, 5, 99, Purpose::InSample);
        assert_eq!(a, b);
        let c = sample_scenarios(&inst, 5, 100, Purpose::InSample);
        assert_ne!(a.realizations, c.realizations);
    }

    #[test]
    fn draws_do_not_depend_on_count() {
        let inst = fixtures::three_node_ring(2, 2);
        let small = sample_scenarios(&inst, 2, 7, Purpose::OutOfSample);
        let big = sample_scenarios(&inst, 6, 7, Purpose::OutOfSample);
        assert_eq!(small, big.truncated(2));
    }

    #[test]
    fn purposes_use_disjoint_streams() {
        let inst = fixtures::three_node_ring(2, 2);
        let a = sample_scenarios(&inst, 4, 7, Purpose::InSample);
        let b = sample_scenarios(&inst, 4, 7, Purpose::OutOfSample);
        // node 1 has zero mean and therefore no noise
        for n in 1..3 {
            for (x, y) in a.node_series(0, n).iter().zip(b.node_series(0, n)) {
                assert_ne!(x, y);
            }
        }
    }

    #[test]
    fn moments_match_the_target_distribution() {
        // mean 100, sd 1, 1e5 draws: standard errors are 0.003 (mean) and
        // ~0.0022 (sd), so +-0.02 is a > 6 sigma band.
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| 100.0 + counter_normal(2024, Purpose::InSample, i, 0, 0))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 100.0).abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "sd {}", var.sqrt());
    }

    #[test]
    fn lag_one_autocorrelation_vanishes() {
        let n = 50_000;
        let xs: Vec<f64> = (0..n)
            .map(|k| counter_normal(5, Purpose::InSample, 0, 0, k))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let rho = cov / var;
        assert!(rho.abs() < 3.0 / (n as f64).sqrt(), "rho {rho}");
    }

    #[test]
    fn ci_one_node_one_subperiod() {
        let mut inst = fixtures::single_node(1, 1);
        inst.mean_net_load[0] = vec![100.0];
        inst.sigma_fraction = 0.01;
        let ci = hourly_system_ci(&inst, 0.95);
        // z_{0.975} from standard normal tables
        let z = 1.959_963_984_540_054;
        assert_abs_diff_eq!(ci[0].0, 100.0 - z, epsilon = 1e-9);
        assert_abs_diff_eq!(ci[0].1, 100.0 + z, epsilon = 1e-9);
        assert_abs_diff_eq!(ci[0].0, 98.04, epsilon = 5e-3);
        assert_abs_diff_eq!(ci[0].1, 101.96, epsilon = 5e-3);
    }

    #[test]
    fn ci_collapses_and_scales_with_sigma() {
        let inst = fixtures::three_node_ring(4, 3);
        let zero = hourly_system_ci(&inst.with_sigma_fraction(0.0), 0.95);
        for (lo, hi) in &zero {
            assert_eq!(lo, hi);
        }
        let w1 = hourly_system_ci(&inst.with_sigma_fraction(0.01), 0.95);
        let w3 = hourly_system_ci(&inst.with_sigma_fraction(0.03), 0.95);
        for (a, b) in w1.iter().zip(&w3) {
            assert_abs_diff_eq!((b.1 - b.0), 3.0 * (a.1 - a.0), epsilon = 1e-9);
        }
    }
}
