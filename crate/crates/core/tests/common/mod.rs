//! Helpers shared by the integration tests: random instances and a direct
//! Newton-Raphson maximizer of the Breslow partial likelihood.

#![allow(dead_code)]

use excox::survival::{build_dataset, Observation, SurvivalDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exponential event times under `lp = signal * (x_0 - x_1 / 2)` with
/// uniform censoring; covariates uniform on `[-1, 1]`.
pub fn random_instance(seed: u64, n: usize, p: usize, signal: f64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Observation> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lp = signal * (x[0] - if p > 1 { 0.5 * x[1] } else { 0.0 });
            let t = -rng.random_range(1e-12f64..1.0).ln() / lp.exp();
            let c = rng.random_range(0.2..3.0);
            Observation::new(t.min(c), t <= c, x)
        })
        .collect();
    build_dataset(&rows).unwrap()
}

/// Partial log-likelihood, gradient and Hessian by direct summation over
/// risk sets `{j : t_j >= t_i}`.
pub fn naive_derivatives(data: &SurvivalDataset, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = data.n();
    let p = beta.len();
    let x = data.covariates();
    let t = data.times();
    let lp: Vec<f64> = (0..n).map(|i| (0..p).map(|k| x[[i, k]] * beta[k]).sum()).collect();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for i in (0..n).filter(|&i| data.events()[i]) {
        let risk: Vec<usize> = (0..n).filter(|&j| t[j] >= t[i]).collect();
        let w: Vec<f64> = risk.iter().map(|&j| lp[j].exp()).collect();
        let s0: f64 = w.iter().sum();
        let mean: Vec<f64> = (0..p)
            .map(|k| risk.iter().zip(&w).map(|(&j, wj)| wj * x[[j, k]]).sum::<f64>() / s0)
            .collect();
        ll += lp[i] - s0.ln();
        for a in 0..p {
            grad[a] += x[[i, a]] - mean[a];
            for b in 0..p {
                let second = risk
                    .iter()
                    .zip(&w)
                    .map(|(&j, wj)| wj * x[[j, a]] * x[[j, b]])
                    .sum::<f64>()
                    / s0;
                hess[(a, b)] -= second - mean[a] * mean[b];
            }
        }
    }
    (ll, grad, hess)
}

/// Unpenalized maximizer by damped Newton-Raphson.
pub fn newton_cox(data: &SurvivalDataset) -> Vec<f64> {
    let p = data.p();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let (ll, grad, hess) = naive_derivatives(data, &beta);
        let step = (-hess).lu().solve(&grad).expect("non-singular information");
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            if naive_derivatives(data, &trial).0 >= ll - 1e-12 || scale < 1e-8 {
                beta = trial;
                break;
            }
            scale *= 0.5;
        }
        if step.norm() * scale < 1e-13 {
            break;
        }
    }
    beta
}
