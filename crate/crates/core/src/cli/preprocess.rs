//! Variance filtering, stratified train/test splits and selection-frequency
//! tables.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::model_selection::{cv_fit, CvSettings, IpfConfig};
use crate::penalty::{GroupStructure, PenaltyFamily};
use crate::simulate::replicate_rng;
use crate::solver::SolverConfig;
use crate::survival::SurvivalDataset;

/// Unbiased sample variance of each covariate column.
pub fn column_variances(data: &SurvivalDataset) -> Vec<f64> {
    let n = data.n() as f64;
    data.covariates()
        .columns()
        .into_iter()
        .map(|c| {
            if data.n() < 2 {
                return 0.0;
            }
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Columns kept by the variance filter, in original order: every protected
/// column, plus the `top_k` highest-variance others among those with
/// variance at least `min_var`. Ties go to the earlier column.
pub fn variance_filter(
    variances: &[f64],
    protected: &[bool],
    top_k: Option<usize>,
    min_var: Option<f64>,
) -> Result<Vec<usize>> {
    if variances.len() != protected.len() {
        return Err(CoxError::LengthMismatch {
            left: variances.len(),
            right: protected.len(),
        });
    }
    let mut candidates: Vec<usize> = (0..variances.len())
        .filter(|&j| !protected[j] && min_var.is_none_or(|m| variances[j] >= m))
        .collect();
    if let Some(k) = top_k {
        let unprotected = protected.iter().filter(|p| !**p).count();
        if k > unprotected {
            return Err(CoxError::InvalidConfig(format!(
                "top_k = {k} exceeds the {unprotected} unprotected covariates"
            )));
        }
        candidates.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
        candidates.truncate(k);
    }
    let mut keep: Vec<usize> = (0..variances.len()).filter(|&j| protected[j]).collect();
    keep.extend(candidates);
    keep.sort_unstable();
    Ok(keep)
}

/// Event-stratified split: `round(fraction * count)` of the events and of
/// the censored observations go to the training side. Both index lists are
/// ascending.
pub fn stratified_split(
    data: &SurvivalDataset,
    fraction: f64,
    seed: u64,
    index: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CoxError::InvalidConfig(format!("train fraction = {fraction}")));
    }
    let mut rng = replicate_rng(seed, index);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for flag in [true, false] {
        let mut idx: Vec<usize> = (0..data.n()).filter(|&i| data.events()[i] == flag).collect();
        idx.shuffle(&mut rng);
        let cut = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub variable: String,
    pub group: String,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConfig {
    pub family: PenaltyFamily,
    pub alpha: Option<f64>,
    pub ipf_factors: Option<Vec<f64>>,
    pub fraction: f64,
    pub repeats: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub cv: CvSettings,
    pub ipf: IpfConfig,
}

/// How often each variable is selected over `repeats` CV fits on random
/// training splits, sorted by count (descending) then column order.
pub fn selection_frequency(
    data: &SurvivalDataset,
    names: &[String],
    groups: &GroupStructure,
    config: &FrequencyConfig,
) -> Result<Vec<FrequencyRow>> {
    if config.repeats == 0 {
        return Err(CoxError::InvalidConfig("repeats = 0".into()));
    }
    if names.len() != data.p() {
        return Err(CoxError::LengthMismatch {
            left: names.len(),
            right: data.p(),
        });
    }
    let supports: Vec<Vec<usize>> = (0..config.repeats)
        .into_par_iter()
        .map(|r| {
            let (train_idx, _) = stratified_split(data, config.fraction, config.seed, r as u64)?;
            let train = data.subset(&train_idx)?;
            let cv = CvSettings {
                seed: config.cv.seed.wrapping_add(r as u64),
                ..config.cv.clone()
            };
            let template = super::family_template(
                config.family,
                config.alpha,
                config.ipf_factors.clone(),
                &train,
                groups,
                &config.ipf,
            )?;
            let (_, model) = cv_fit(&train, groups, &template, &config.solver, &cv)?;
            Ok(model.support())
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; data.p()];
    for s in &supports {
        for &j in s {
            counts[j] += 1;
        }
    }
    let mut order: Vec<usize> = (0..data.p()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .map(|j| FrequencyRow {
            variable: names[j].clone(),
            group: groups.names()[groups.group_of(j)].clone(),
            count: counts[j],
            frequency: counts[j] as f64 / config.repeats as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn toy_variances_keep_top_two() {
        let x = array![[1.0, 0.0, 5.0], [2.0, 0.0, -5.0], [3.0, 0.0, 5.0], [4.0, 0.0, -5.0]];
        let d = SurvivalDataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], x).unwrap();
        let v = column_variances(&d);
        // Column 0: var(1..4) = 5/3; column 2: 4 * 25 / 3.
        assert!((v[0] - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        assert!((v[2] - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(variance_filter(&v, &[false; 3], Some(2), None).unwrap(), vec![0, 2]);
    }

    #[test]
    fn top_k_all_is_identity() {
        let v = [1.0, 3.0, 3.0, 0.5];
        assert_eq!(variance_filter(&v, &[false; 4], Some(4), None).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_prefer_earlier_column_and_protected_survive() {
        let v = [1.0, 3.0, 3.0, 0.5];
        assert_eq!(variance_filter(&v, &[false; 4], Some(1), None).unwrap(), vec![1]);
        assert_eq!(
            variance_filter(&v, &[false, false, false, true], Some(1), None).unwrap(),
            vec![1, 3]
        );
        assert!(variance_filter(&v, &[false; 4], Some(5), None).is_err());
    }

    #[test]
    fn constant_column_dropped_by_min_var() {
        let v = [0.0, 2.0, 0.1];
        assert_eq!(variance_filter(&v, &[false; 3], None, Some(1e-9)).unwrap(), vec![1, 2]);
        assert_eq!(variance_filter(&v, &[false; 3], None, Some(0.5)).unwrap(), vec![1]);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let events: Vec<bool> = (0..20).map(|i| i % 4 != 0).collect();
        let d = SurvivalDataset::new(
            (1..=20).map(|i| i as f64).collect(),
            events,
            ndarray::Array2::zeros((20, 1)),
        )
        .unwrap();
        let (train, test) = stratified_split(&d, 0.7, 5, 0).unwrap();
        assert_eq!(train.len() + test.len(), 20);
        assert_eq!(train.iter().filter(|&&i| d.events()[i]).count(), 11);
        assert_eq!(train.iter().filter(|&&i| !d.events()[i]).count(), 4);
        assert_eq!((train, test), stratified_split(&d, 0.7, 5, 0).unwrap());
    }
}
