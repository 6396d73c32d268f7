//! Grouped high-dimensional survival data.
//!
//! Covariates are Gaussian with a block Toeplitz covariance: `rho_w^|i-j|`
//! inside a group and `rho_b^|i-j|` across groups, where `i, j` are global
//! column indices. Event times follow a Cox model with a constant baseline
//! hazard chosen to hit the requested baseline median; censoring is an
//! independent exponential.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::penalty::GroupStructure;
use crate::survival::SurvivalDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    Random,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub n: usize,
    pub group_sizes: Vec<usize>,
    pub signals_per_group: Vec<usize>,
    pub within_rho: f64,
    pub between_rho: f64,
    pub coef_low: f64,
    pub coef_high: f64,
    pub sign_mode: SignMode,
    /// Exponential censoring rate per time unit.
    pub censor_rate: f64,
    pub baseline_median: f64,
    pub seed: u64,
}

impl Default for SimulationScenario {
    fn default() -> Self {
        Self {
            n: 500,
            group_sizes: vec![100; 5],
            signals_per_group: vec![1; 5],
            within_rho: 0.6,
            between_rho: 0.3,
            coef_low: 0.5,
            coef_high: 1.5,
            sign_mode: SignMode::Random,
            censor_rate: 0.02,
            baseline_median: 8.0,
            seed: 1,
        }
    }
}

impl SimulationScenario {
    pub fn p(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// Constant baseline hazard with median `baseline_median`.
    pub fn baseline_hazard(&self) -> f64 {
        std::f64::consts::LN_2 / self.baseline_median
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoxError::InvalidScenario(m));
        if self.n == 0 {
            return bad("n = 0".into());
        }
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return bad("group sizes must be non-empty and positive".into());
        }
        if self.signals_per_group.len() != self.group_sizes.len() {
            return bad(format!(
                "{} signal counts for {} groups",
                self.signals_per_group.len(),
                self.group_sizes.len()
            ));
        }
        if let Some(g) = (0..self.group_sizes.len())
            .find(|&g| self.signals_per_group[g] > self.group_sizes[g])
        {
            return bad(format!("group {g} has more signals than variables"));
        }
        if !(0.0 <= self.between_rho && self.between_rho <= self.within_rho && self.within_rho < 1.0)
        {
            return bad(format!(
                "need 0 <= between_rho <= within_rho < 1, got {} and {}",
                self.between_rho, self.within_rho
            ));
        }
        if !(self.coef_low <= self.coef_high && self.coef_low.is_finite() && self.coef_high.is_finite()) {
            return bad("coefficient range".into());
        }
        if !(self.censor_rate > 0.0 && self.censor_rate.is_finite()) {
            return bad(format!("censor_rate = {}", self.censor_rate));
        }
        if !(self.baseline_median > 0.0 && self.baseline_median.is_finite()) {
            return bad(format!("baseline_median = {}", self.baseline_median));
        }
        Ok(())
    }

    pub fn groups(&self) -> Result<GroupStructure> {
        GroupStructure::from_sizes(&self.group_sizes)
    }
}

/// The three grouping designs with 5, 10 or 20 signal variables.
pub fn scenario_presets(scenario_id: u8, n_signals: usize) -> Result<SimulationScenario> {
    let unknown = CoxError::UnknownScenario {
        scenario: scenario_id,
        signals: n_signals,
    };
    let column = match n_signals {
        5 => 0,
        10 => 1,
        20 => 2,
        _ => return Err(unknown),
    };
    let (sizes, signals): (Vec<usize>, [[usize; 5]; 3]) = match scenario_id {
        1 => (vec![100; 5], [[1; 5], [2; 5], [4; 5]]),
        2 => (
            vec![15, 20, 85, 180, 200],
            [[1, 1, 1, 1, 1], [1, 2, 1, 4, 2], [2, 2, 1, 10, 5]],
        ),
        3 => (
            vec![5, 295, 10, 90, 100],
            [[1, 1, 1, 1, 1], [1, 2, 1, 2, 4], [2, 6, 4, 6, 2]],
        ),
        _ => return Err(unknown),
    };
    Ok(SimulationScenario {
        group_sizes: sizes,
        signals_per_group: signals[column].to_vec(),
        ..SimulationScenario::default()
    })
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: SurvivalDataset,
    pub true_beta: Vec<f64>,
    pub true_support: Vec<usize>,
    pub groups: GroupStructure,
}

/// Block Toeplitz covariance over global column indices.
pub fn covariance_matrix(scenario: &SimulationScenario) -> Result<DMatrix<f64>> {
    let groups = scenario.groups()?;
    let p = scenario.p();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        let rho = if groups.group_of(i) == groups.group_of(j) {
            scenario.within_rho
        } else {
            scenario.between_rho
        };
        rho.powi((i as i32 - j as i32).abs())
    }))
}

/// Independent generator for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Scenario with a precomputed Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: SimulationScenario,
    groups: GroupStructure,
    chol: DMatrix<f64>,
}

impl Simulator {
    pub fn new(scenario: &SimulationScenario) -> Result<Self> {
        scenario.validate()?;
        let cov = covariance_matrix(scenario)?;
        let chol = cov.cholesky().ok_or(CoxError::CovarianceNotPD)?.unpack();
        Ok(Self {
            scenario: scenario.clone(),
            groups: scenario.groups()?,
            chol,
        })
    }

    pub fn scenario(&self) -> &SimulationScenario {
        &self.scenario
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    /// Signal positions drawn uniformly within each group, magnitudes
    /// uniform on `[coef_low, coef_high]`.
    pub fn draw_coefficients<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let sc = &self.scenario;
        let mut beta = vec![0.0; sc.p()];
        for (g, members) in self.groups.iter().enumerate() {
            let picks = sample(rng, members.len(), sc.signals_per_group[g]);
            for idx in picks.iter() {
                let magnitude = if sc.coef_high > sc.coef_low {
                    rng.random_range(sc.coef_low..sc.coef_high)
                } else {
                    sc.coef_low
                };
                let sign = match sc.sign_mode {
                    SignMode::Positive => 1.0,
                    SignMode::Random => {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                beta[members[idx]] = sign * magnitude;
            }
        }
        beta
    }

    /// `n x p` Gaussian design, rows `L z` with `z ~ N(0, I)`.
    pub fn draw_covariates<R: Rng>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let p = self.scenario.p();
        let z: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let z = DMatrix::from_row_slice(n, p, &z);
        let x = z * self.chol.transpose();
        Array2::from_shape_fn((n, p), |(i, j)| x[(i, j)])
    }

    /// Latent event and censoring times for the given linear predictors.
    pub fn draw_latent_times<R: Rng>(&self, linear_predictor: &[f64], rng: &mut R) -> Vec<(f64, f64)> {
        let h0 = self.scenario.baseline_hazard();
        let rate = self.scenario.censor_rate;
        linear_predictor
            .iter()
            .map(|&lp| {
                let u = open_unit(rng);
                let event = -u.ln() / (h0 * lp.exp());
                let censor = -open_unit(rng).ln() / rate;
                (event, censor)
            })
            .collect()
    }

    /// Full dataset of `n` subjects under coefficients `beta`.
    pub fn draw_dataset<R: Rng>(&self, n: usize, beta: &[f64], rng: &mut R) -> Result<SurvivalDataset> {
        let x = self.draw_covariates(n, rng);
        let lp: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect();
        let latent = self.draw_latent_times(&lp, rng);
        let times = latent.iter().map(|&(t, c)| t.min(c)).collect();
        let events = latent.iter().map(|&(t, c)| t <= c).collect();
        SurvivalDataset::new(times, events, x)
    }

    pub fn generate_with<R: Rng>(&self, rng: &mut R) -> Result<SimulatedDataset> {
        let beta = self.draw_coefficients(rng);
        let dataset = self.draw_dataset(self.scenario.n, &beta, rng)?;
        Ok(self.wrap(dataset, beta))
    }

    pub fn wrap(&self, dataset: SurvivalDataset, beta: Vec<f64>) -> SimulatedDataset {
        let true_support = beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect();
        SimulatedDataset {
            dataset,
            true_beta: beta,
            true_support,
            groups: self.groups.clone(),
        }
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws one dataset from `scenario`, deterministic in `scenario.seed`.
pub fn generate(scenario: &SimulationScenario) -> Result<SimulatedDataset> {
    let sim = Simulator::new(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    sim.generate_with(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimulationScenario {
        SimulationScenario {
            n: 200,
            group_sizes: vec![4, 3, 3],
            signals_per_group: vec![1, 2, 0],
            seed,
            ..SimulationScenario::default()
        }
    }

    #[test]
    fn presets_match_design_table() {
        let s = scenario_presets(1, 5).unwrap();
        assert_eq!(s.group_sizes, vec![100; 5]);
        assert_eq!(s.signals_per_group, vec![1; 5]);
        assert_eq!((s.n, s.p()), (500, 500));
        let s = scenario_presets(3, 20).unwrap();
        assert_eq!(s.group_sizes, vec![5, 295, 10, 90, 100]);
        assert_eq!(s.signals_per_group, vec![2, 6, 4, 6, 2]);
        let s = scenario_presets(2, 10).unwrap();
        assert_eq!(s.group_sizes, vec![15, 20, 85, 180, 200]);
        assert_eq!(s.signals_per_group, vec![1, 2, 1, 4, 2]);
        assert_eq!(scenario_presets(1, 20).unwrap().signals_per_group, vec![4; 5]);
        assert_eq!(scenario_presets(2, 20).unwrap().signals_per_group, vec![2, 2, 1, 10, 5]);
        assert_eq!(scenario_presets(3, 10).unwrap().signals_per_group, vec![1, 2, 1, 2, 4]);
        assert!(matches!(scenario_presets(4, 5), Err(CoxError::UnknownScenario { .. })));
        assert!(matches!(scenario_presets(1, 7), Err(CoxError::UnknownScenario { .. })));
        for id in 1..=3 {
            for k in [5, 10, 20] {
                let s = scenario_presets(id, k).unwrap();
                assert_eq!(s.p(), 500);
                assert_eq!(s.signals_per_group.iter().sum::<usize>(), k);
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn preset_covariances_are_positive_definite() {
        for id in 1..=3 {
            Simulator::new(&scenario_presets(id, 5).unwrap()).unwrap();
        }
    }

    #[test]
    fn covariance_uses_global_indices() {
        let sc = SimulationScenario {
            group_sizes: vec![2, 2],
            signals_per_group: vec![0, 0],
            ..SimulationScenario::default()
        };
        let c = covariance_matrix(&sc).unwrap();
        assert!((c[(0, 1)] - 0.6).abs() < 1e-15);
        assert!((c[(1, 2)] - 0.3).abs() < 1e-15);
        assert!((c[(0, 3)] - 0.027).abs() < 1e-15);
        assert!((c[(2, 3)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = small(1);
        s.signals_per_group = vec![5, 0, 0];
        assert!(generate(&s).is_err());
        let mut s = small(1);
        s.between_rho = 0.7;
        assert!(matches!(generate(&s), Err(CoxError::InvalidScenario(_))));
        let mut s = small(1);
        s.censor_rate = 0.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn signal_counts_and_support() {
        let d = generate(&small(4)).unwrap();
        let counts: Vec<usize> = d
            .groups
            .iter()
            .map(|m| m.iter().filter(|&&j| d.true_beta[j] != 0.0).count())
            .collect();
        assert_eq!(counts, vec![1, 2, 0]);
        assert_eq!(d.true_support.len(), 3);
        for &j in &d.true_support {
            let b = d.true_beta[j].abs();
            assert!((0.5..=1.5).contains(&b));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&small(7)).unwrap();
        let b = generate(&small(7)).unwrap();
        assert_eq!(a.true_beta, b.true_beta);
        assert_eq!(a.dataset.times(), b.dataset.times());
        assert_eq!(a.dataset.events(), b.dataset.events());
        assert_eq!(a.dataset.covariates(), b.dataset.covariates());
        let c = generate(&small(8)).unwrap();
        assert_ne!(a.dataset.times(), c.dataset.times());
    }

    #[test]
    fn times_positive_and_events_consistent() {
        let sim = Simulator::new(&small(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lp = vec![0.0; 1000];
        for (t, c) in sim.draw_latent_times(&lp, &mut rng) {
            assert!(t > 0.0 && c > 0.0);
        }
        let d = generate(&small(3)).unwrap();
        assert!(d.dataset.times().iter().all(|&t| t > 0.0));
    }

    #[test]
    fn baseline_median_matches() {
        let sim = Simulator::new(&small(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t: Vec<f64> = sim
            .draw_latent_times(&vec![0.0; 100_000], &mut rng)
            .into_iter()
            .map(|(t, _)| t)
            .collect();
        t.sort_by(f64::total_cmp);
        let median = 0.5 * (t[49_999] + t[50_000]);
        assert!(median > 7.8 && median < 8.2, "median {median}");
    }

    #[test]
    fn replicate_streams_differ() {
        let a: f64 = replicate_rng(5, 0).random();
        let b: f64 = replicate_rng(5, 1).random();
        let c: f64 = replicate_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
