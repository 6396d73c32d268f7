//! K-fold selection of `lambda` by cross-validated partial likelihood, and
//! two-step derivation of IPF penalty factors.
//!
//! The held-out contribution of fold `f` is `l(beta_-f) - l_-f(beta_-f)`:
//! the full-data partial likelihood minus the training-fold one, both
//! evaluated at the coefficients fitted without fold `f`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::penalty::{GroupStructure, PenaltyFamily, PenaltySpec};
use crate::simulate::replicate_rng;
use crate::solver::{check_descending, fit_from, lambda_grid, lambda_max, FittedModel, SolverConfig};
use crate::survival::{partial_log_likelihood, SurvivalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repeats: usize,
    /// `fold_assignments[r][i]` is the fold of observation `i` in repeat `r`.
    pub fold_assignments: Vec<Vec<usize>>,
    pub seed: u64,
}

impl CvPlan {
    /// Original indices outside fold `f` of repeat `r`.
    pub fn training_indices(&self, r: usize, f: usize) -> Vec<usize> {
        self.fold_assignments[r]
            .iter()
            .enumerate()
            .filter(|(_, &fold)| fold != f)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_indices(&self, r: usize, f: usize) -> Vec<usize> {
        self.fold_assignments[r]
            .iter()
            .enumerate()
            .filter(|(_, &fold)| fold == f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Event-stratified fold assignment: events are dealt round-robin first,
/// then censored observations continue the rotation.
pub fn make_folds(data: &SurvivalDataset, k: usize, repeats: usize, seed: u64) -> Result<CvPlan> {
    let n = data.n();
    if k < 2 || k > n {
        return Err(CoxError::InvalidConfig(format!("fold count {k} for {n} observations")));
    }
    if repeats == 0 {
        return Err(CoxError::InvalidConfig("repeats = 0".into()));
    }
    let events = data.n_events();
    if events < k {
        return Err(CoxError::TooFewEvents { events, folds: k });
    }
    let fold_assignments = (0..repeats)
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut ev: Vec<usize> = (0..n).filter(|&i| data.events()[i]).collect();
            let mut cens: Vec<usize> = (0..n).filter(|&i| !data.events()[i]).collect();
            ev.shuffle(&mut rng);
            cens.shuffle(&mut rng);
            let mut fold = vec![0; n];
            for (pos, &i) in ev.iter().chain(&cens).enumerate() {
                fold[i] = pos % k;
            }
            fold
        })
        .collect();
    Ok(CvPlan {
        k,
        repeats,
        fold_assignments,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean over repeats of the fold-summed cross-validated log-likelihood.
    /// NaN marks a `lambda` with a non-finite fold score.
    pub mean_cv_loglik: Vec<f64>,
    pub se_cv_loglik: Vec<f64>,
    pub best_lambda: f64,
    pub best_index: usize,
}

/// Training data and warm start of one (repeat, fold) pair.
struct FoldState {
    train: SurvivalDataset,
    beta: Vec<f64>,
}

impl FoldState {
    /// Fits at `lambda` from the current warm start and returns the held-out
    /// contribution; NaN when the fit diverges or the score is non-finite.
    fn advance(
        &mut self,
        full: &SurvivalDataset,
        groups: &GroupStructure,
        spec: &PenaltySpec,
        config: &SolverConfig,
    ) -> Result<f64> {
        match fit_from(&self.train, groups, spec, config, &self.beta) {
            Ok(model) => {
                let score = match (
                    partial_log_likelihood(full, &model.beta),
                    partial_log_likelihood(&self.train, &model.beta),
                ) {
                    (Ok(a), Ok(b)) => a - b,
                    _ => f64::NAN,
                };
                self.beta = model.beta;
                Ok(score)
            }
            Err(CoxError::NonFiniteObjective { .. }) => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    }
}

/// Cross-validated partial log-likelihood at every `lambda` of a strictly
/// descending grid, each fold warm-started along the grid.
pub fn cv_predictive_loglik(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    config: &SolverConfig,
    plan: &CvPlan,
    lambdas: &[f64],
) -> Result<CvResult> {
    cv_predictive_loglik_until(data, groups, spec_template, config, plan, lambdas, None)
}

/// As [`cv_predictive_loglik`], but with `patience = Some(m)` the grid is
/// abandoned once the mean score has stayed below its running best for `m`
/// consecutive values. The result then covers only the evaluated prefix.
pub fn cv_predictive_loglik_until(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    config: &SolverConfig,
    plan: &CvPlan,
    lambdas: &[f64],
    patience: Option<usize>,
) -> Result<CvResult> {
    if lambdas.is_empty() {
        return Err(CoxError::InvalidGrid("empty lambda grid".into()));
    }
    check_descending(lambdas)?;
    if patience == Some(0) {
        return Err(CoxError::InvalidConfig("patience must be positive".into()));
    }
    if plan.fold_assignments.iter().any(|a| a.len() != data.n()) {
        return Err(CoxError::LengthMismatch {
            left: plan.fold_assignments[0].len(),
            right: data.n(),
        });
    }
    let mut folds: Vec<FoldState> = (0..plan.repeats)
        .flat_map(|r| (0..plan.k).map(move |f| (r, f)))
        .map(|(r, f)| {
            Ok(FoldState {
                train: data.subset(&plan.training_indices(r, f))?,
                beta: vec![0.0; data.p()],
            })
        })
        .collect::<Result<_>>()?;

    let reps = plan.repeats as f64;
    let count = folds.len() as f64;
    let mut mean = Vec::with_capacity(lambdas.len());
    let mut se = Vec::with_capacity(lambdas.len());
    let mut best: Option<usize> = None;
    let mut since_best = 0;
    for (l, &lambda) in lambdas.iter().enumerate() {
        let spec = spec_template.with_lambda(lambda);
        // Collected in (repeat, fold) order regardless of completion order.
        let column: Vec<f64> = folds
            .par_iter_mut()
            .map(|state| state.advance(data, groups, &spec, config))
            .collect::<Result<_>>()?;
        if column.iter().any(|v| !v.is_finite()) {
            mean.push(f64::NAN);
            se.push(f64::NAN);
        } else {
            let total: f64 = column.iter().sum();
            mean.push(total / reps);
            let avg = total / count;
            let var = if count > 1.0 {
                column.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / (count - 1.0)
            } else {
                0.0
            };
            // Standard error of k times the mean fold contribution.
            se.push(plan.k as f64 * (var / count).sqrt());
        }
        if mean[l].is_finite() && best.is_none_or(|b| mean[l] > mean[b]) {
            best = Some(l);
            since_best = 0;
        } else if best.is_some() {
            since_best += 1;
            if patience.is_some_and(|m| since_best >= m) {
                break;
            }
        }
    }

    let best_index =
        best.ok_or_else(|| CoxError::InvalidGrid("no lambda produced a finite CV score".into()))?;
    Ok(CvResult {
        lambdas: lambdas[..mean.len()].to_vec(),
        mean_cv_loglik: mean,
        se_cv_loglik: se,
        best_lambda: lambdas[best_index],
        best_index,
    })
}

/// Refits on all of `data` along the grid down to the selected `lambda`, so
/// the final model follows the same warm-start chain as the folds.
pub fn refit_at_best(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    config: &SolverConfig,
    cv: &CvResult,
) -> Result<FittedModel> {
    let mut beta = vec![0.0; data.p()];
    let mut last = None;
    for &lambda in &cv.lambdas[..=cv.best_index] {
        let model = fit_from(data, groups, &spec_template.with_lambda(lambda), config, &beta)?;
        beta.clone_from(&model.beta);
        last = Some(model);
    }
    Ok(last.expect("grid is non-empty"))
}

/// Grid and fold settings for a cross-validated fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub grid_min_ratio: f64,
    /// Early-stopping patience along the grid; `None` evaluates every value.
    pub patience: Option<usize>,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            k: 5,
            repeats: 1,
            seed: 1,
            grid_size: 50,
            grid_min_ratio: 1e-3,
            patience: None,
        }
    }
}

/// Default grid for `spec_template` on `data`.
pub fn default_lambdas(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    settings: &CvSettings,
) -> Result<Vec<f64>> {
    let max = lambda_max(data, groups, spec_template)?;
    lambda_grid(max, settings.grid_size, settings.grid_min_ratio)
}

/// Cross-validates over the default grid (with the configured early stop)
/// and refits at the best `lambda`.
pub fn cv_fit(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    config: &SolverConfig,
    settings: &CvSettings,
) -> Result<(CvResult, FittedModel)> {
    let lambdas = default_lambdas(data, groups, spec_template, settings)?;
    let plan = make_folds(data, settings.k, settings.repeats, settings.seed)?;
    let cv = cv_predictive_loglik_until(data, groups, spec_template, config, &plan, &lambdas, settings.patience)?;
    let model = refit_at_best(data, groups, spec_template, config, &cv)?;
    Ok((cv, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfConfig {
    /// Ridge (default) or Lasso for the first step.
    pub step_one: PenaltyFamily,
    pub solver: SolverConfig,
    pub cv: CvSettings,
    /// Factor given to groups whose first-step mean coefficient is zero.
    pub zero_mean_cap: f64,
}

impl Default for IpfConfig {
    fn default() -> Self {
        Self {
            step_one: PenaltyFamily::Ridge,
            solver: SolverConfig::default(),
            cv: CvSettings::default(),
            zero_mean_cap: 1e4,
        }
    }
}

/// Penalty factors inversely proportional to the group means, normalized to
/// 1 at the first group with a nonzero mean and capped at `cap`.
pub fn factors_from_means(means: &[f64], cap: f64) -> Result<Vec<f64>> {
    let reference = means
        .iter()
        .copied()
        .find(|&m| m > 0.0)
        .ok_or(CoxError::AllZeroStepOne)?;
    Ok(means
        .iter()
        .map(|&m| if m > 0.0 { (reference / m).min(cap) } else { cap })
        .collect())
}

/// Two-step IPF: a cross-validated Ridge (or Lasso) fit, then factors from
/// the per-group mean absolute coefficients.
pub fn two_step_ipf_factors(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    config: &IpfConfig,
) -> Result<Vec<f64>> {
    if groups.n_groups() < 2 {
        return Err(CoxError::InvalidGroups("IPF factors need at least two groups".into()));
    }
    let spec = match config.step_one {
        PenaltyFamily::Ridge => PenaltySpec::ridge(0.0),
        PenaltyFamily::Lasso => PenaltySpec::lasso(0.0),
        other => {
            return Err(CoxError::InvalidPenalty(format!(
                "IPF first step must be ridge or lasso, got {other}"
            )))
        }
    };
    let (_, model) = cv_fit(data, groups, &spec, &config.solver, &config.cv)?;
    let means: Vec<f64> = groups
        .iter()
        .map(|m| m.iter().map(|&j| model.beta[j].abs()).sum::<f64>() / m.len() as f64)
        .collect();
    factors_from_means(&means, config.zero_mean_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{build_dataset, Observation};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_events(n: usize) -> SurvivalDataset {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        SurvivalDataset::new((1..=n).map(|i| i as f64).collect(), vec![true; n], x).unwrap()
    }

    fn random(seed: u64, n: usize, p: usize) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Observation> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = -rng.random_range(1e-6f64..1.0).ln() / (1.5 * x[0]).exp();
                let c = rng.random_range(0.0..2.0);
                Observation::new(t.min(c), t <= c, x)
            })
            .collect();
        build_dataset(&rows).unwrap()
    }

    #[test]
    fn folds_balanced_with_events() {
        let d = all_events(10);
        let plan = make_folds(&d, 5, 1, 3).unwrap();
        for f in 0..5 {
            assert_eq!(plan.fold_indices(0, f).len(), 2);
        }
        let d = random(2, 53, 2);
        let plan = make_folds(&d, 5, 3, 9).unwrap();
        for r in 0..3 {
            let sizes: Vec<usize> = (0..5).map(|f| plan.fold_indices(r, f).len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in 0..5 {
                assert!(plan.fold_indices(r, f).iter().any(|&i| d.events()[i]));
            }
        }
        assert_eq!(plan, make_folds(&d, 5, 3, 9).unwrap());
    }

    #[test]
    fn too_few_events() {
        let x = Array2::zeros((5, 1));
        let d = SurvivalDataset::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![true, false, false, false, false], x)
            .unwrap();
        assert_eq!(
            make_folds(&d, 5, 1, 0).unwrap_err(),
            CoxError::TooFewEvents { events: 1, folds: 5 }
        );
    }

    #[test]
    fn zero_coefficients_give_closed_form() {
        let d = random(4, 30, 2);
        let g = GroupStructure::singletons(2).unwrap();
        let plan = make_folds(&d, 3, 1, 1).unwrap();
        let cv = cv_predictive_loglik(&d, &g, &PenaltySpec::lasso(0.0), &SolverConfig::default(), &plan, &[1e6])
            .unwrap();
        let full0 = partial_log_likelihood(&d, &[0.0, 0.0]).unwrap();
        let expected: f64 = (0..3)
            .map(|f| {
                let train = d.subset(&plan.training_indices(0, f)).unwrap();
                let sizes = train.risk_set_sizes();
                let train0: f64 = (0..train.n())
                    .filter(|&k| train.sorted_events()[k])
                    .map(|k| -(sizes[k] as f64).ln())
                    .sum();
                full0 - train0
            })
            .sum();
        assert!((cv.mean_cv_loglik[0] - expected).abs() < 1e-10);
        assert_eq!(cv.best_lambda, 1e6);
    }

    #[test]
    fn best_lambda_in_grid_and_ties_prefer_larger() {
        let d = random(5, 40, 3);
        let g = GroupStructure::singletons(3).unwrap();
        let plan = make_folds(&d, 4, 1, 2).unwrap();
        let grid = [1e7, 1e6, 50.0, 5.0, 0.5];
        let cv = cv_predictive_loglik(&d, &g, &PenaltySpec::lasso(0.0), &SolverConfig::default(), &plan, &grid)
            .unwrap();
        assert!(grid.contains(&cv.best_lambda));
        // Both huge lambdas give beta = 0 and identical scores.
        assert_eq!(cv.mean_cv_loglik[0], cv.mean_cv_loglik[1]);
        assert_ne!(cv.best_index, 1);
    }

    #[test]
    fn factors_examples() {
        assert_eq!(factors_from_means(&[0.2, 0.1], 1e4).unwrap(), vec![1.0, 2.0]);
        assert_eq!(factors_from_means(&[0.3, 0.3, 0.3], 1e4).unwrap(), vec![1.0; 3]);
        assert_eq!(factors_from_means(&[0.3, 0.0], 1e4).unwrap(), vec![1.0, 1e4]);
        assert_eq!(factors_from_means(&[0.0, 0.0], 1e4).unwrap_err(), CoxError::AllZeroStepOne);
    }

    #[test]
    fn patience_keeps_prefix_of_full_grid() {
        let d = random(8, 60, 4);
        let g = GroupStructure::singletons(4).unwrap();
        let plan = make_folds(&d, 3, 2, 4).unwrap();
        let spec = PenaltySpec::lasso(0.0);
        let cfg = SolverConfig::default();
        let max = lambda_max(&d, &g, &spec).unwrap();
        let grid = lambda_grid(max, 25, 1e-4).unwrap();
        let full = cv_predictive_loglik(&d, &g, &spec, &cfg, &plan, &grid).unwrap();
        let short = cv_predictive_loglik_until(&d, &g, &spec, &cfg, &plan, &grid, Some(2)).unwrap();
        let m = short.lambdas.len();
        assert!(m <= grid.len());
        assert_eq!(short.mean_cv_loglik[..], full.mean_cv_loglik[..m]);
        assert!(short.best_index < m);
        if m < grid.len() {
            assert_eq!(m, short.best_index + 3);
        }
    }

    #[test]
    fn scores_invariant_to_row_order() {
        let d = random(9, 40, 3);
        let g = GroupStructure::singletons(3).unwrap();
        let plan = make_folds(&d, 4, 1, 6).unwrap();
        let perm: Vec<usize> = (0..d.n()).rev().collect();
        let shuffled = d.subset(&perm).unwrap();
        let shuffled_plan = CvPlan {
            fold_assignments: vec![perm.iter().map(|&i| plan.fold_assignments[0][i]).collect()],
            ..plan.clone()
        };
        let grid = [20.0, 5.0, 1.0];
        let spec = PenaltySpec::lasso(0.0);
        let cfg = SolverConfig::default();
        let a = cv_predictive_loglik(&d, &g, &spec, &cfg, &plan, &grid).unwrap();
        let b = cv_predictive_loglik(&shuffled, &g, &spec, &cfg, &shuffled_plan, &grid).unwrap();
        for (x, y) in a.mean_cv_loglik.iter().zip(&b.mean_cv_loglik) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert_eq!(a.best_index, b.best_index);
    }

    #[test]
    fn ipf_needs_two_groups() {
        let d = random(6, 30, 2);
        let g = GroupStructure::single(2).unwrap();
        assert!(two_step_ipf_factors(&d, &g, &IpfConfig::default()).is_err());
    }
}
