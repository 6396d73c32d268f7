//! Simulation benchmark: per replicate, a training set and an independent
//! validation set share one coefficient draw; every family is CV-fitted on
//! training data and scored on selection and validation IBS.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{model_brier_report, selection_metrics, selection_records, MetricRecord};
use crate::model_selection::{cv_fit, CvSettings, IpfConfig};
use crate::penalty::{GroupStructure, PenaltyFamily};
use crate::simulate::{replicate_rng, SimulationScenario, Simulator};
use crate::solver::{FittedModel, SolverConfig};
use crate::survival::SurvivalDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenario: SimulationScenario,
    pub families: Vec<PenaltyFamily>,
    pub replicates: usize,
    pub seed: u64,
    pub n_validation: usize,
    pub solver: SolverConfig,
    pub cv: CvSettings,
    /// CV repeats when choosing the IPF lambda.
    pub ipf_repeats: usize,
    /// Elastic Net mixing weight; the family default when `None`.
    pub alpha: Option<f64>,
    pub ipf_step_one: PenaltyFamily,
    /// Upper end of the IBS grid; all validation event times when `None`.
    pub ibs_horizon: Option<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenario: SimulationScenario::default(),
            families: vec![
                PenaltyFamily::ExclusiveLasso,
                PenaltyFamily::Ipf,
                PenaltyFamily::ElasticNet,
                PenaltyFamily::GroupLasso,
            ],
            replicates: 20,
            seed: 1,
            n_validation: 500,
            solver: SolverConfig::default(),
            cv: CvSettings {
                patience: Some(5),
                ..CvSettings::default()
            },
            ipf_repeats: 10,
            alpha: None,
            ipf_step_one: PenaltyFamily::Ridge,
            ibs_horizon: None,
        }
    }
}

/// Outcome of one replicate: metric rows, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub records: Vec<MetricRecord>,
    pub failures: Vec<(String, String)>,
}

fn fit_family(
    family: PenaltyFamily,
    train: &SurvivalDataset,
    groups: &GroupStructure,
    config: &BenchmarkConfig,
    cv: &CvSettings,
) -> Result<FittedModel> {
    let ipf = IpfConfig {
        step_one: config.ipf_step_one,
        solver: config.solver.clone(),
        cv: cv.clone(),
        ..IpfConfig::default()
    };
    let alpha = config.alpha.filter(|_| family == PenaltyFamily::ElasticNet);
    let template = super::family_template(family, alpha, None, train, groups, &ipf)?;
    let cv = match family {
        PenaltyFamily::Ipf => CvSettings {
            repeats: config.ipf_repeats,
            ..cv.clone()
        },
        _ => cv.clone(),
    };
    Ok(cv_fit(train, groups, &template, &config.solver, &cv)?.1)
}

pub fn run_replicate(sim: &Simulator, config: &BenchmarkConfig, replicate: usize) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(config.seed, replicate as u64);
    let beta = sim.draw_coefficients(&mut rng);
    let train = sim.draw_dataset(config.scenario.n, &beta, &mut rng)?;
    let valid = sim.draw_dataset(config.n_validation, &beta, &mut rng)?;
    let truth = sim.wrap(train, beta);
    let cv = CvSettings {
        seed: rng.random(),
        ..config.cv.clone()
    };
    let p = truth.true_beta.len();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &family in &config.families {
        let name = family.short_name();
        let outcome = fit_family(family, &truth.dataset, &truth.groups, config, &cv).and_then(|model| {
            let mut rows = Vec::new();
            if family != PenaltyFamily::Ridge {
                let sel = selection_metrics(&model.support(), &truth.true_support, p)?;
                rows.extend(selection_records(name, replicate, &sel));
            }
            let brier = model_brier_report(&model, &valid, config.ibs_horizon)?;
            rows.push(MetricRecord::new(name, "ibs", replicate, brier.ibs));
            rows.push(MetricRecord::new(name, "lambda", replicate, model.lambda()));
            Ok(rows)
        });
        match outcome {
            Ok(rows) => records.extend(rows),
            Err(e) => failures.push((name.to_string(), e.to_string())),
        }
    }
    Ok(ReplicateOutcome {
        replicate,
        records,
        failures,
    })
}

/// All replicates, in replicate order. A replicate whose data cannot be
/// generated is reported as a failure for every family.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<ReplicateOutcome>> {
    let sim = Simulator::new(&config.scenario)?;
    Ok((0..config.replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(&sim, config, r).unwrap_or_else(|e| ReplicateOutcome {
                replicate: r,
                records: Vec::new(),
                failures: config
                    .families
                    .iter()
                    .map(|f| (f.short_name().to_string(), e.to_string()))
                    .collect(),
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
}

/// Mean and standard error of each (model, metric) pair, in first-seen order.
pub fn summarize(records: &[MetricRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.model.clone(), r.metric.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, metric)| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.model == model && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let se = if count > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                model,
                metric,
                count,
                mean,
                se,
            }
        })
        .collect()
}

/// Mean of `metric` for `model`, if any rows exist.
pub fn summary_mean(summary: &[SummaryRow], model: &str, metric: &str) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.model == model && s.metric == metric)
        .map(|s| s.mean)
}

/// Table with one row per model and `mean (se)` cells per metric.
pub fn format_summary_table(summary: &[SummaryRow]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    for s in summary {
        if !models.contains(&s.model.as_str()) {
            models.push(&s.model);
        }
        if !metrics.contains(&s.metric.as_str()) {
            metrics.push(&s.metric);
        }
    }
    let mut out = format!("{:<12}", "model");
    for m in &metrics {
        out.push_str(&format!(" {:>18}", m));
    }
    out.push('\n');
    for model in &models {
        out.push_str(&format!("{:<12}", model));
        for metric in &metrics {
            let cell = summary
                .iter()
                .find(|s| s.model == *model && s.metric == *metric)
                .map(|s| format!("{:.3} ({:.3})", s.mean, s.se))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {:>18}", cell));
        }
        out.push('\n');
    }
    out
}
