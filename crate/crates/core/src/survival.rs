//! Right-censored survival data, Cox partial likelihood, and the
//! nonparametric estimators used for prediction and scoring.
//!
//! Internally every quantity is computed over the time-sorted view of the
//! data. Tied times follow the Breslow convention: all subjects sharing a
//! time have the same risk set `{l : t_l >= t_i}`.

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, CoxError, Result};

/// A single subject: observed time, event flag and covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            time,
            event,
            covariates,
        }
    }
}

/// Immutable survival dataset with a precomputed time-sorted view.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    /// Original row order, `n x p`.
    x: Array2<f64>,
    /// `sort_order[k]` is the original index of the k-th smallest time.
    sort_order: Vec<usize>,
    sorted_times: Vec<f64>,
    sorted_events: Vec<bool>,
    /// Sorted rows, column-major so each covariate column is contiguous.
    sorted_x: Array2<f64>,
    /// For sorted position k, the risk set is `risk_start[k]..n`.
    risk_start: Vec<usize>,
}

impl SurvivalDataset {
    /// Builds a dataset from `(time, event, covariates)` rows.
    pub fn from_observations(rows: &[Observation]) -> Result<Self> {
        let first = rows.first().ok_or(CoxError::EmptyData)?;
        let p = first.covariates.len();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.covariates.len() != p {
                return Err(CoxError::RaggedCovariates {
                    row: i,
                    expected: p,
                    found: row.covariates.len(),
                });
            }
            flat.extend_from_slice(&row.covariates);
        }
        let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
        let x = Array2::from_shape_vec((rows.len(), p), flat)
            .expect("shape checked above");
        Self::new(times, events, x)
    }

    pub fn new(times: Vec<f64>, events: Vec<bool>, x: Array2<f64>) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(CoxError::EmptyData);
        }
        if events.len() != n {
            return Err(CoxError::LengthMismatch {
                left: n,
                right: events.len(),
            });
        }
        if x.nrows() != n {
            return Err(CoxError::LengthMismatch {
                left: n,
                right: x.nrows(),
            });
        }
        check_finite(&times, "times")?;
        if times.iter().any(|&t| t < 0.0) {
            return Err(CoxError::NonFiniteValue("times (negative)".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoxError::NonFiniteValue("covariates".into()));
        }
        if !events.iter().any(|&e| e) {
            return Err(CoxError::AllCensored);
        }

        let mut sort_order: Vec<usize> = (0..n).collect();
        sort_order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let sorted_times: Vec<f64> = sort_order.iter().map(|&i| times[i]).collect();
        let sorted_events: Vec<bool> = sort_order.iter().map(|&i| events[i]).collect();

        let p = x.ncols();
        let mut sorted_x = Array2::<f64>::zeros((n, p).f());
        for (k, &i) in sort_order.iter().enumerate() {
            sorted_x.row_mut(k).assign(&x.row(i));
        }

        let mut risk_start = vec![0usize; n];
        for k in 1..n {
            risk_start[k] = if sorted_times[k] == sorted_times[k - 1] {
                risk_start[k - 1]
            } else {
                k
            };
        }

        Ok(Self {
            times,
            events,
            x,
            sort_order,
            sorted_times,
            sorted_events,
            sorted_x,
            risk_start,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    /// Covariates in original row order.
    pub fn covariates(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn sort_order(&self) -> &[usize] {
        &self.sort_order
    }

    pub fn sorted_times(&self) -> &[f64] {
        &self.sorted_times
    }

    pub fn sorted_events(&self) -> &[bool] {
        &self.sorted_events
    }

    /// First sorted position of the risk set of each sorted position.
    pub fn risk_starts(&self) -> &[usize] {
        &self.risk_start
    }

    /// Risk-set size of each observation, in sorted order.
    pub fn risk_set_sizes(&self) -> Vec<usize> {
        let n = self.n();
        self.risk_start.iter().map(|&s| n - s).collect()
    }

    /// Contiguous view of covariate `j` in sorted order.
    pub(crate) fn sorted_column(&self, j: usize) -> &[f64] {
        self.sorted_x
            .column(j)
            .to_slice()
            .expect("sorted covariates are column-major")
    }

    /// Subset of observations given by original indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let events = indices.iter().map(|&i| self.events[i]).collect();
        let x = self.x.select(ndarray::Axis(0), indices);
        Self::new(times, events, x)
    }

    /// Linear predictors `x_k . beta` in sorted order.
    pub(crate) fn sorted_linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, &xv) in eta.iter_mut().zip(self.sorted_column(j)) {
                    *e += b * xv;
                }
            }
        }
        eta
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(CoxError::DimensionMismatch {
                expected: self.p(),
                found: beta.len(),
            });
        }
        check_finite(beta, "coefficients")
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.p() {
            Err(CoxError::IndexOutOfRange {
                index: j,
                len: self.p(),
            })
        } else {
            Ok(())
        }
    }
}

/// Convenience wrapper around [`SurvivalDataset::from_observations`].
pub fn build_dataset(rows: &[Observation]) -> Result<SurvivalDataset> {
    SurvivalDataset::from_observations(rows)
}

/// Suffix log-sum-exp of `eta` over each sorted position, stabilised by the
/// running maximum of the suffix (the maximum over the risk set).
fn suffix_log_sum_exp(eta: &[f64]) -> Vec<f64> {
    let n = eta.len();
    let mut out = vec![0.0; n];
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0;
    for k in (0..n).rev() {
        if eta[k] > m {
            s = s * (m - eta[k]).exp() + 1.0;
            m = eta[k];
        } else {
            s += (eta[k] - m).exp();
        }
        out[k] = m + s.ln();
    }
    out
}

/// Cox partial log-likelihood with Breslow handling of ties.
pub fn partial_log_likelihood(data: &SurvivalDataset, beta: &[f64]) -> Result<f64> {
    data.check_beta(beta)?;
    let eta = data.sorted_linear_predictor(beta);
    let lse = suffix_log_sum_exp(&eta);
    let ll: f64 = (0..data.n())
        .filter(|&k| data.sorted_events[k])
        .map(|k| eta[k] - lse[data.risk_start[k]])
        .sum();
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(CoxError::NonFiniteValue("partial log-likelihood".into()))
    }
}

/// Score component `d l / d beta_j`.
pub fn gradient_component(data: &SurvivalDataset, beta: &[f64], j: usize) -> Result<f64> {
    data.check_index(j)?;
    data.check_beta(beta)?;
    let eta = data.sorted_linear_predictor(beta);
    Ok(score_from_eta(data, &eta, j))
}

/// Full score vector.
pub fn gradient(data: &SurvivalDataset, beta: &[f64]) -> Result<Vec<f64>> {
    data.check_beta(beta)?;
    let eta = data.sorted_linear_predictor(beta);
    Ok((0..data.p()).map(|j| score_from_eta(data, &eta, j)).collect())
}

fn score_from_eta(data: &SurvivalDataset, eta: &[f64], j: usize) -> f64 {
    let xj = data.sorted_column(j);
    let n = data.n();
    // Weighted risk-set means of x_j, stabilised by the suffix maximum.
    let mut mean = vec![0.0; n];
    let mut m = f64::NEG_INFINITY;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for k in (0..n).rev() {
        if eta[k] > m {
            let scale = (m - eta[k]).exp();
            s0 = s0 * scale + 1.0;
            s1 = s1 * scale + xj[k];
            m = eta[k];
        } else {
            let w = (eta[k] - m).exp();
            s0 += w;
            s1 += w * xj[k];
        }
        mean[k] = s1 / s0;
    }
    (0..n)
        .filter(|&k| data.sorted_events[k])
        .map(|k| xj[k] - mean[data.risk_start[k]])
        .sum()
}

/// Diagonal curvature approximation `sum_i delta_i x_ij^2`.
pub fn hessian_diag_approx(data: &SurvivalDataset, j: usize) -> Result<f64> {
    data.check_index(j)?;
    Ok(hessian_diag_unchecked(data, j))
}

pub(crate) fn hessian_diag_unchecked(data: &SurvivalDataset, j: usize) -> f64 {
    data.sorted_column(j)
        .iter()
        .zip(&data.sorted_events)
        .filter(|(_, &e)| e)
        .map(|(&v, _)| v * v)
        .sum()
}

/// Cumulative baseline hazard at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazardTable {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineHazardTable {
    /// Right-continuous step evaluation; zero before the first event time.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative_hazard[idx - 1]
        }
    }
}

/// Breslow estimator of the cumulative baseline hazard, tied events pooled.
pub fn breslow_baseline(data: &SurvivalDataset, beta: &[f64]) -> Result<BaselineHazardTable> {
    data.check_beta(beta)?;
    let eta = data.sorted_linear_predictor(beta);
    let lse = suffix_log_sum_exp(&eta);
    let n = data.n();
    let mut times = Vec::new();
    let mut cumulative = Vec::new();
    let mut total = 0.0;
    let mut k = 0;
    while k < n {
        let start = data.risk_start[k];
        let mut end = k;
        let mut deaths = 0usize;
        while end < n && data.risk_start[end] == start {
            if data.sorted_events[end] {
                deaths += 1;
            }
            end += 1;
        }
        if deaths > 0 {
            total += deaths as f64 * (-lse[start]).exp();
            times.push(data.sorted_times[start]);
            cumulative.push(total);
        }
        k = end;
    }
    Ok(BaselineHazardTable {
        times,
        cumulative_hazard: cumulative,
    })
}

/// Product-limit survival curve at its distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

impl KaplanMeierCurve {
    /// `S(t)`, right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// Left limit `S(t-)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

/// Kaplan-Meier estimator. Pass inverted event flags to estimate the
/// censoring distribution.
pub fn kaplan_meier(times: &[f64], event_flags: &[bool]) -> Result<KaplanMeierCurve> {
    if times.len() != event_flags.len() {
        return Err(CoxError::LengthMismatch {
            left: times.len(),
            right: event_flags.len(),
        });
    }
    check_finite(times, "times")?;
    if times.iter().any(|&t| t < 0.0) {
        return Err(CoxError::NonFiniteValue("times (negative)".into()));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut out_t = Vec::new();
    let mut out_s = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut events = 0usize;
        let mut count = 0usize;
        while k < order.len() && times[order[k]] == t {
            if event_flags[order[k]] {
                events += 1;
            }
            count += 1;
            k += 1;
        }
        if events > 0 {
            surv *= 1.0 - events as f64 / at_risk as f64;
            out_t.push(t);
            out_s.push(surv.clamp(0.0, 1.0));
        }
        at_risk -= count;
    }
    Ok(KaplanMeierCurve {
        times: out_t,
        survival: out_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(time: f64, event: bool, x: &[f64]) -> Observation {
        Observation::new(time, event, x.to_vec())
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> SurvivalDataset {
        loop {
            let rows: Vec<Observation> = (0..n)
                .map(|_| {
                    let x = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
                    Observation::new(rng.random_range(0.1..5.0), rng.random_bool(0.7), x)
                })
                .collect();
            if let Ok(d) = build_dataset(&rows) {
                return d;
            }
        }
    }

    /// Direct O(n^2) evaluation of the partial likelihood.
    fn naive_loglik(rows: &[Observation], beta: &[f64]) -> f64 {
        let lp = |r: &Observation| -> f64 { r.covariates.iter().zip(beta).map(|(a, b)| a * b).sum() };
        rows.iter()
            .filter(|r| r.event)
            .map(|ri| {
                let denom: f64 = rows
                    .iter()
                    .filter(|rl| rl.time >= ri.time)
                    .map(|rl| lp(rl).exp())
                    .sum();
                lp(ri) - denom.ln()
            })
            .sum()
    }

    #[test]
    fn sort_order_and_risk_sets() {
        let rows = vec![obs(2.0, true, &[0.0]), obs(1.0, true, &[0.0]), obs(3.0, true, &[0.0])];
        let d = build_dataset(&rows).unwrap();
        assert_eq!(d.sort_order(), &[1, 0, 2]);
        assert_eq!(d.risk_set_sizes(), vec![3, 2, 1]);
    }

    #[test]
    fn single_row_cases() {
        assert_eq!(
            build_dataset(&[obs(1.0, false, &[1.0])]).unwrap_err(),
            CoxError::AllCensored
        );
        let d = build_dataset(&[obs(1.0, true, &[1.0])]).unwrap();
        assert_eq!(partial_log_likelihood(&d, &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(build_dataset(&[]).unwrap_err(), CoxError::EmptyData);
        let ragged = vec![obs(1.0, true, &[1.0, 2.0]), obs(2.0, true, &[1.0])];
        assert!(matches!(
            build_dataset(&ragged),
            Err(CoxError::RaggedCovariates { row: 1, .. })
        ));
        let nan = vec![obs(1.0, true, &[f64::NAN])];
        assert!(matches!(build_dataset(&nan), Err(CoxError::NonFiniteValue(_))));
        let inf_time = vec![obs(f64::INFINITY, true, &[0.0])];
        assert!(matches!(build_dataset(&inf_time), Err(CoxError::NonFiniteValue(_))));
    }

    #[test]
    fn loglik_at_zero() {
        let rows = vec![obs(1.0, true, &[1.0]), obs(2.0, true, &[-1.0]), obs(3.0, true, &[0.5])];
        let d = build_dataset(&rows).unwrap();
        let ll = partial_log_likelihood(&d, &[0.0]).unwrap();
        assert_relative_eq!(ll, -(3f64.ln() + 2f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(ll, -1.791759, epsilon = 1e-6);

        let rows: Vec<_> = (0..10)
            .map(|i| obs(1.0 + i as f64, i == 0, &[i as f64]))
            .collect();
        let d = build_dataset(&rows).unwrap();
        assert_relative_eq!(partial_log_likelihood(&d, &[0.0]).unwrap(), -(10f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn loglik_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rows: Vec<Observation> = (0..20)
                .map(|_| {
                    let x = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                    // integer-ish times to exercise ties
                    Observation::new(rng.random_range(1..8) as f64, rng.random_bool(0.7), x)
                })
                .collect();
            let Ok(d) = build_dataset(&rows) else { continue };
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = partial_log_likelihood(&d, &beta).unwrap();
            let slow = naive_loglik(&rows, &beta);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    #[test]
    fn loglik_survives_large_linear_predictors() {
        let rows = vec![obs(1.0, true, &[800.0]), obs(2.0, true, &[-800.0]), obs(3.0, true, &[0.0])];
        let d = build_dataset(&rows).unwrap();
        let ll = partial_log_likelihood(&d, &[1.0]).unwrap();
        assert!(ll.is_finite());
        // Second risk set {-800, 0}: the -800 event contributes ~ -800.
        assert_relative_eq!(ll, -800.0, max_relative = 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let d = build_dataset(&[obs(1.0, true, &[1.0, 2.0]), obs(2.0, false, &[0.0, 1.0])]).unwrap();
        assert!(matches!(
            partial_log_likelihood(&d, &[0.0]),
            Err(CoxError::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(
            gradient_component(&d, &[0.0, 0.0], 2),
            Err(CoxError::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(hessian_diag_approx(&d, 5).is_err());
        assert!(breslow_baseline(&d, &[0.0]).is_err());
        assert!(matches!(
            partial_log_likelihood(&d, &[f64::NAN, 0.0]),
            Err(CoxError::NonFiniteValue(_))
        ));
    }

    #[test]
    fn gradient_constant_column_is_zero() {
        let rows: Vec<_> = (0..6).map(|i| obs(i as f64 + 0.5, i % 2 == 0, &[2.5, 2.5])).collect();
        let d = build_dataset(&rows).unwrap();
        for j in 0..2 {
            assert_relative_eq!(gradient_component(&d, &[0.0, 0.0], j).unwrap(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn gradient_single_event() {
        let xs = [3.0, -1.0, 4.0, 2.0];
        let rows: Vec<_> = xs.iter().enumerate().map(|(i, &v)| obs(i as f64 + 1.0, i == 1, &[v])).collect();
        let d = build_dataset(&rows).unwrap();
        // event at time 2, risk set {-1, 4, 2}
        let expected = -1.0 - (-1.0 + 4.0 + 2.0) / 3.0;
        assert_relative_eq!(gradient_component(&d, &[0.0], 0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..10 {
            let d = random_dataset(&mut rng, 15, 4);
            let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            for j in 0..4 {
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd = (partial_log_likelihood(&d, &up).unwrap()
                    - partial_log_likelihood(&d, &dn).unwrap())
                    / (2.0 * h);
                let g = gradient_component(&d, &beta, j).unwrap();
                assert!((g - fd).abs() <= 1e-6, "j={j} analytic {g} fd {fd}");
            }
        }
    }

    #[test]
    fn hessian_excludes_censored() {
        let rows = vec![obs(1.0, true, &[1.0]), obs(2.0, true, &[-2.0]), obs(3.0, false, &[100.0])];
        let d = build_dataset(&rows).unwrap();
        assert_eq!(hessian_diag_approx(&d, 0).unwrap(), 5.0);
        let zero = build_dataset(&[obs(1.0, true, &[0.0]), obs(2.0, true, &[0.0])]).unwrap();
        assert_eq!(hessian_diag_approx(&zero, 0).unwrap(), 0.0);
    }

    #[test]
    fn hessian_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dataset(&mut rng, 50, 3);
        for j in 0..3 {
            let mut direct = 0.0;
            for i in 0..d.n() {
                if d.events()[i] {
                    direct += d.covariates()[[i, j]] * d.covariates()[[i, j]];
                }
            }
            assert_relative_eq!(hessian_diag_approx(&d, j).unwrap(), direct, max_relative = 1e-13);
        }
    }

    #[test]
    fn breslow_increments() {
        let rows: Vec<_> = (0..4).map(|i| obs(i as f64 + 1.0, true, &[i as f64])).collect();
        let d = build_dataset(&rows).unwrap();
        let b = breslow_baseline(&d, &[0.0]).unwrap();
        let expected = [0.25, 0.25 + 1.0 / 3.0, 0.25 + 1.0 / 3.0 + 0.5, 0.25 + 1.0 / 3.0 + 0.5 + 1.0];
        for (got, want) in b.cumulative_hazard.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }

        let tied = vec![obs(1.0, true, &[0.0]), obs(1.0, true, &[1.0]), obs(2.0, true, &[2.0])];
        let b = breslow_baseline(&build_dataset(&tied).unwrap(), &[0.0]).unwrap();
        assert_eq!(b.times, vec![1.0, 2.0]);
        assert_relative_eq!(b.cumulative_hazard[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.at(0.5), 0.0);
        assert_relative_eq!(b.at(1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.at(1.5), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn breslow_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Observation> = (0..12)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                Observation::new(rng.random_range(1..6) as f64, rng.random_bool(0.6), x)
            })
            .collect();
        let d = build_dataset(&rows).unwrap();
        let beta = [0.4, -0.7];
        let b = breslow_baseline(&d, &beta).unwrap();
        let mut event_times: Vec<f64> = rows.iter().filter(|r| r.event).map(|r| r.time).collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let mut acc = 0.0;
        for (k, &t) in event_times.iter().enumerate() {
            let deaths = rows.iter().filter(|r| r.event && r.time == t).count() as f64;
            let denom: f64 = rows
                .iter()
                .filter(|r| r.time >= t)
                .map(|r| (r.covariates[0] * beta[0] + r.covariates[1] * beta[1]).exp())
                .sum();
            acc += deaths / denom;
            assert_relative_eq!(b.cumulative_hazard[k], acc, max_relative = 1e-12);
        }
    }

    #[test]
    fn kaplan_meier_cases() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(km.times, vec![1.0, 2.0, 3.0]);
        assert_relative_eq!(km.survival[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(km.survival[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(km.survival[2], 0.0);

        let none = kaplan_meier(&[1.0, 2.0], &[false, false]).unwrap();
        assert_eq!(none.at(0.0), 1.0);
        assert_eq!(none.at(10.0), 1.0);

        let mixed = kaplan_meier(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]).unwrap();
        assert_relative_eq!(mixed.at(1.0), 0.75, epsilon = 1e-15);
        assert_relative_eq!(mixed.at(3.0), 0.375, epsilon = 1e-15);
        assert_relative_eq!(mixed.left_limit(3.0), 0.75, epsilon = 1e-15);

        assert!(matches!(
            kaplan_meier(&[1.0], &[true, false]),
            Err(CoxError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn subset_keeps_requested_rows() {
        let rows: Vec<_> = (0..5).map(|i| obs(5.0 - i as f64, true, &[i as f64])).collect();
        let d = build_dataset(&rows).unwrap();
        let s = d.subset(&[4, 1]).unwrap();
        assert_eq!(s.times(), &[1.0, 4.0]);
        assert_eq!(s.covariates()[[0, 0]], 4.0);
    }
}
