//! Penalized Cox fitting by cyclic coordinate descent.
//!
//! Every family shares one quadratic model of the negative partial
//! log-likelihood along a coordinate: the score `r_j` and the diagonal
//! curvature `H_j = sum_i delta_i x_ij^2`. Exclusive Lasso, Lasso, Ridge,
//! Elastic Net and IPF update one coefficient at a time through
//! soft-thresholding; Group Lasso updates whole blocks through the vector
//! soft-threshold.
//!
//! `H_j` is not a guaranteed majorizer of the true curvature, so when
//! `newton_correction` is on each proposed step is checked against the
//! exact penalized objective and retried with doubled curvature if it would
//! increase it. With the flag off the printed update
//! `S(r_j / (H_j + lambda), P_j / (H_j + lambda))` runs unguarded.

use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::penalty::{penalty_value, GroupStructure, PenaltyFamily, PenaltySpec};
use crate::survival::{breslow_baseline, hessian_diag_unchecked, BaselineHazardTable, SurvivalDataset};

/// Curvature doublings tried before a coordinate is left unchanged.
const MAX_STEP_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when the Euclidean norm of the per-sweep coefficient change is
    /// at most this value.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub lambda: f64,
    pub newton_correction: bool,
    pub hessian_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 1000,
            lambda: 0.0,
            newton_correction: true,
            hessian_floor: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(CoxError::InvalidConfig(format!("tolerance = {}", self.tolerance)));
        }
        if self.max_sweeps == 0 {
            return Err(CoxError::InvalidConfig("max_sweeps = 0".into()));
        }
        if !(self.hessian_floor > 0.0) {
            return Err(CoxError::InvalidConfig(format!(
                "hessian_floor = {}",
                self.hessian_floor
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CoxError::InvalidConfig(format!("lambda = {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub sweeps_used: usize,
    pub final_change: f64,
    /// Penalized objective `-l(beta) + lambda P(beta)` after each sweep.
    pub objective_trace: Vec<f64>,
    pub baseline: BaselineHazardTable,
    pub spec: PenaltySpec,
    pub groups: GroupStructure,
}

impl FittedModel {
    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    /// Indices with exactly nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn linear_predictor(&self, covariates: &[f64]) -> Result<f64> {
        if covariates.len() != self.beta.len() {
            return Err(CoxError::DimensionMismatch {
                expected: self.beta.len(),
                found: covariates.len(),
            });
        }
        Ok(covariates.iter().zip(&self.beta).map(|(x, b)| x * b).sum())
    }
}

/// `S(t | x) = exp(-H0(t) exp(x . beta))`.
pub fn predict_survival(model: &FittedModel, covariates: &[f64], t: f64) -> Result<f64> {
    let lp = model.linear_predictor(covariates)?;
    if !(t >= 0.0) {
        return Err(CoxError::NonFiniteValue(format!("prediction time {t}")));
    }
    let h0 = model.baseline.at(t);
    if h0 == 0.0 {
        return Ok(1.0);
    }
    Ok((-h0 * lp.exp()).exp())
}

/// `sign(z) max(|z| - threshold, 0)`.
pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

/// Risk-set sums for one linear predictor, each suffix scaled by its own
/// maximum `M_k = max_{l >= k} eta_l`.
#[derive(Debug, Clone)]
struct RiskState {
    eta: Vec<f64>,
    /// `exp(eta_k - M_k)`
    own: Vec<f64>,
    /// `exp(M_{k+1} - M_k)`, zero at the last position.
    carry: Vec<f64>,
    max: Vec<f64>,
    s0: Vec<f64>,
    loglik: f64,
}

impl RiskState {
    fn new(n: usize) -> Self {
        Self {
            eta: vec![0.0; n],
            own: vec![0.0; n],
            carry: vec![0.0; n],
            max: vec![0.0; n],
            s0: vec![0.0; n],
            loglik: 0.0,
        }
    }

    fn refresh(&mut self, data: &SurvivalDataset) {
        let n = self.eta.len();
        let mut m = f64::NEG_INFINITY;
        for k in (0..n).rev() {
            m = m.max(self.eta[k]);
            self.max[k] = m;
        }
        let mut s = 0.0;
        for k in (0..n).rev() {
            self.own[k] = (self.eta[k] - self.max[k]).exp();
            self.carry[k] = if k + 1 == n {
                0.0
            } else if self.max[k + 1] == self.max[k] {
                1.0
            } else {
                (self.max[k + 1] - self.max[k]).exp()
            };
            s = self.own[k] + self.carry[k] * s;
            self.s0[k] = s;
        }
        let starts = data.risk_starts();
        let events = data.sorted_events();
        self.loglik = (0..n)
            .filter(|&k| events[k])
            .map(|k| {
                let st = starts[k];
                self.eta[k] - self.max[st] - self.s0[st].ln()
            })
            .sum();
    }
}

struct Workspace<'a> {
    data: &'a SurvivalDataset,
    current: RiskState,
    candidate: RiskState,
    s1: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(data: &'a SurvivalDataset, beta: &[f64]) -> Self {
        let n = data.n();
        let mut ws = Self {
            data,
            current: RiskState::new(n),
            candidate: RiskState::new(n),
            s1: vec![0.0; n],
        };
        ws.reset(beta);
        ws
    }

    /// Recomputes the linear predictor from scratch.
    fn reset(&mut self, beta: &[f64]) {
        self.current.eta = self.data.sorted_linear_predictor(beta);
        self.current.refresh(self.data);
    }

    fn loglik(&self) -> f64 {
        self.current.loglik
    }

    fn score(&mut self, j: usize) -> f64 {
        let xj = self.data.sorted_column(j);
        let st = &self.current;
        let n = xj.len();
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc = xj[k] * st.own[k] + st.carry[k] * acc;
            self.s1[k] = acc;
        }
        let starts = self.data.risk_starts();
        let events = self.data.sorted_events();
        let mut r = 0.0;
        for k in 0..n {
            if events[k] {
                let s = starts[k];
                r += xj[k] - self.s1[s] / st.s0[s];
            }
        }
        r
    }

    /// Loads `current.eta + sum_j delta_j x_j` into the candidate state and
    /// returns its log-likelihood.
    fn propose(&mut self, deltas: &[(usize, f64)]) -> f64 {
        self.candidate.eta.copy_from_slice(&self.current.eta);
        for &(j, d) in deltas {
            for (e, &x) in self.candidate.eta.iter_mut().zip(self.data.sorted_column(j)) {
                *e += d * x;
            }
        }
        self.candidate.refresh(self.data);
        self.candidate.loglik
    }

    fn accept(&mut self) {
        std::mem::swap(&mut self.current, &mut self.candidate);
    }
}

/// Exclusive Lasso coordinate descent at `config.lambda` from `beta0`.
pub fn fit_exclusive_lasso(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    config: &SolverConfig,
    beta0: &[f64],
) -> Result<FittedModel> {
    let spec = PenaltySpec::exclusive_lasso(config.lambda);
    fit_from(data, groups, &spec, config, beta0)
}

/// Fits any penalty family at `spec.lambda` from `beta = 0`. The `lambda`
/// field of `config` is ignored.
pub fn fit_penalized(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    config: &SolverConfig,
) -> Result<FittedModel> {
    fit_from(data, groups, spec, config, &vec![0.0; data.p()])
}

/// Fits `spec` starting from `beta0`.
pub fn fit_from(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    config: &SolverConfig,
    beta0: &[f64],
) -> Result<FittedModel> {
    config.validate()?;
    spec.validate(groups)?;
    let p = data.p();
    if groups.p() != p {
        return Err(CoxError::DimensionMismatch {
            expected: p,
            found: groups.p(),
        });
    }
    if beta0.len() != p {
        return Err(CoxError::DimensionMismatch {
            expected: p,
            found: beta0.len(),
        });
    }
    crate::error::check_finite(beta0, "initial coefficients")?;

    let hess: Vec<f64> = (0..p).map(|j| hessian_diag_unchecked(data, j)).collect();
    let mut beta = beta0.to_vec();
    let mut ws = Workspace::new(data, &beta);
    let lambda = spec.lambda;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut change = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let before = beta.clone();
        match spec.family {
            PenaltyFamily::GroupLasso => {
                group_sweep(&mut ws, groups, spec, config, &hess, &mut beta)
            }
            _ => coordinate_sweep(&mut ws, groups, spec, config, &hess, &mut beta),
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(CoxError::NonFiniteObjective { sweep: sweeps });
        }
        ws.reset(&beta);
        let objective = -ws.loglik() + lambda * penalty_value(spec, groups, &beta)?;
        if !objective.is_finite() {
            return Err(CoxError::NonFiniteObjective { sweep: sweeps });
        }
        trace.push(objective);
        change = beta
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if change <= config.tolerance {
            converged = true;
            break;
        }
    }

    let baseline = breslow_baseline(data, &beta)?;
    Ok(FittedModel {
        beta,
        converged,
        sweeps_used: sweeps,
        final_change: change,
        objective_trace: trace,
        baseline,
        spec: spec.clone(),
        groups: groups.clone(),
    })
}

/// Per-coordinate penalty `lambda * pen(b)` holding the other coefficients
/// fixed (additive constants dropped), and the matching proximal step.
struct CoordinatePenalty {
    lambda: f64,
    /// Weight on `|b|` in the quadratic-plus-l1 prox, already times lambda.
    l1: f64,
    /// Weight on `b^2 / 2`, already times lambda.
    l2: f64,
    /// For Exclusive Lasso: `sum_{l in g, l != j} |beta_l|`.
    group_rest: f64,
    exclusive: bool,
}

impl CoordinatePenalty {
    fn value(&self, b: f64) -> f64 {
        if self.exclusive {
            let s = self.group_rest + b.abs();
            self.lambda * (0.5 * s * s - 0.5 * self.group_rest * self.group_rest)
        } else {
            self.l1 * b.abs() + 0.5 * self.l2 * b * b
        }
    }
}

fn coordinate_penalty(
    spec: &PenaltySpec,
    groups: &GroupStructure,
    beta: &[f64],
    j: usize,
) -> CoordinatePenalty {
    let lambda = spec.lambda;
    match spec.family {
        PenaltyFamily::ExclusiveLasso => {
            let rest: f64 = groups
                .members(groups.group_of(j))
                .iter()
                .filter(|&&l| l != j)
                .map(|&l| beta[l].abs())
                .sum();
            CoordinatePenalty {
                lambda,
                l1: lambda * rest,
                l2: lambda,
                group_rest: rest,
                exclusive: true,
            }
        }
        _ => {
            let factor = spec.factor(groups.group_of(j));
            CoordinatePenalty {
                lambda,
                l1: lambda * spec.alpha * factor,
                l2: lambda * (1.0 - spec.alpha),
                group_rest: 0.0,
                exclusive: false,
            }
        }
    }
}

fn coordinate_sweep(
    ws: &mut Workspace<'_>,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    config: &SolverConfig,
    hess: &[f64],
    beta: &mut [f64],
) {
    for members in groups.iter() {
        for &j in members {
            let r = ws.score(j);
            let pen = coordinate_penalty(spec, groups, beta, j);
            let old = beta[j];
            let mut h = hess[j].max(config.hessian_floor);

            if !config.newton_correction {
                let denom = h + pen.l2;
                let new = soft_threshold(r / denom, pen.l1 / denom);
                if new != old {
                    ws.propose(&[(j, new - old)]);
                    ws.accept();
                    beta[j] = new;
                }
                continue;
            }

            let f_old = -ws.loglik() + pen.value(old);
            let noise = 1e-12 * f_old.abs().max(1.0);
            for _ in 0..MAX_STEP_HALVINGS {
                let denom = h + pen.l2;
                let new = soft_threshold((r + h * old) / denom, pen.l1 / denom);
                if new == old {
                    break;
                }
                let ll = ws.propose(&[(j, new - old)]);
                let f_new = -ll + pen.value(new);
                if f_new <= f_old {
                    ws.accept();
                    beta[j] = new;
                    break;
                }
                if !(f_new.is_finite()) || f_new - f_old > noise {
                    h *= 2.0;
                } else {
                    // Within rounding of the current value.
                    break;
                }
            }
        }
    }
}

fn group_sweep(
    ws: &mut Workspace<'_>,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    config: &SolverConfig,
    hess: &[f64],
    beta: &mut [f64],
) {
    let lambda = spec.lambda;
    for members in groups.iter() {
        let weight = lambda * (members.len() as f64).sqrt();
        let grad: Vec<f64> = members.iter().map(|&j| ws.score(j)).collect();
        let old: Vec<f64> = members.iter().map(|&j| beta[j]).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let f_old = -ws.loglik() + weight * norm(&old);
        let noise = 1e-12 * f_old.abs().max(1.0);
        let mut step = members
            .iter()
            .map(|&j| hess[j].max(config.hessian_floor))
            .fold(0.0, f64::max)
            + lambda;

        for _ in 0..MAX_STEP_HALVINGS {
            let z: Vec<f64> = old.iter().zip(&grad).map(|(b, g)| b + g / step).collect();
            let zn = norm(&z);
            let shrink = if zn > 0.0 {
                (1.0 - weight / (step * zn)).max(0.0)
            } else {
                0.0
            };
            let new: Vec<f64> = z.iter().map(|v| v * shrink).collect();
            if new == old {
                break;
            }
            let deltas: Vec<(usize, f64)> = members
                .iter()
                .zip(new.iter().zip(&old))
                .filter(|(_, (n, o))| n != o)
                .map(|(&j, (n, o))| (j, n - o))
                .collect();
            let ll = ws.propose(&deltas);
            let f_new = -ll + weight * norm(&new);
            if f_new <= f_old {
                ws.accept();
                for (&j, v) in members.iter().zip(&new) {
                    beta[j] = *v;
                }
                break;
            }
            if !(f_new.is_finite()) || f_new - f_old > noise {
                step *= 2.0;
            } else {
                break;
            }
        }
    }
}

/// Smallest coefficient magnitude that still counts as "alive" when sizing
/// the path for families without an l1 threshold.
const RIDGE_TYPE_ONE_STEP: f64 = 1e-3;

/// Largest useful `lambda` for a family, from the score at `beta = 0`.
///
/// For thresholding families this is the smallest `lambda` whose threshold
/// zeroes every coordinate in the first sweep from zero. Exclusive Lasso and
/// Ridge never zero a coefficient from the origin; for them it is the
/// `lambda` at which the first-sweep step `|r_j| / (H_j + lambda)` is at
/// most `1e-3` for every coordinate.
pub fn lambda_max(data: &SurvivalDataset, groups: &GroupStructure, spec: &PenaltySpec) -> Result<f64> {
    let zero = vec![0.0; data.p()];
    let score = crate::survival::gradient(data, &zero)?;
    let ridge_type = || {
        (0..data.p())
            .map(|j| score[j].abs() / RIDGE_TYPE_ONE_STEP - hessian_diag_unchecked(data, j))
            .fold(0.0, f64::max)
    };
    let value = match spec.family {
        PenaltyFamily::ExclusiveLasso | PenaltyFamily::Ridge => ridge_type(),
        PenaltyFamily::GroupLasso => groups
            .iter()
            .map(|m| {
                let norm = m.iter().map(|&j| score[j] * score[j]).sum::<f64>().sqrt();
                norm / (m.len() as f64).sqrt()
            })
            .fold(0.0, f64::max),
        PenaltyFamily::Lasso | PenaltyFamily::ElasticNet | PenaltyFamily::Ipf => {
            if spec.alpha == 0.0 {
                ridge_type()
            } else {
                (0..data.p())
                    .filter_map(|j| {
                        let w = spec.alpha * spec.factor(groups.group_of(j));
                        (w > 0.0).then(|| score[j].abs() / w)
                    })
                    .fold(0.0, f64::max)
            }
        }
    };
    Ok(value)
}

/// `size` log-spaced values from `max` down to `max * min_ratio`.
pub fn lambda_grid(max: f64, size: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if size == 0 {
        return Ok(Vec::new());
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(CoxError::InvalidGrid(format!("lambda max = {max}")));
    }
    if size == 1 {
        return Ok(vec![max]);
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(CoxError::InvalidGrid(format!("min ratio = {min_ratio}")));
    }
    let (hi, lo) = (max.ln(), (max * min_ratio).ln());
    Ok((0..size)
        .map(|i| (hi + (lo - hi) * i as f64 / (size - 1) as f64).exp())
        .collect())
}

pub(crate) fn check_descending(lambdas: &[f64]) -> Result<()> {
    if lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(CoxError::InvalidGrid("negative or non-finite lambda".into()));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CoxError::InvalidGrid("lambdas must be strictly descending".into()));
    }
    Ok(())
}

/// Warm-started fits along a strictly descending `lambdas` grid.
pub fn fit_path(
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec_template: &PenaltySpec,
    config: &SolverConfig,
    lambdas: &[f64],
) -> Result<Vec<FittedModel>> {
    check_descending(lambdas)?;
    let mut beta = vec![0.0; data.p()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let model = fit_from(data, groups, &spec_template.with_lambda(lambda), config, &beta)?;
        beta.clone_from(&model.beta);
        out.push(model);
    }
    Ok(out)
}
