//! Selection quality against a known support, and the IPCW (Graf) Brier
//! score with its integrated version.

use std::collections::BTreeSet;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::solver::{predict_survival, FittedModel};
use crate::survival::{kaplan_meier, KaplanMeierCurve, SurvivalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub fdr: f64,
    pub precision: f64,
}

pub fn selection_metrics(
    estimated_support: &[usize],
    true_support: &[usize],
    p: usize,
) -> Result<SelectionReport> {
    for &j in estimated_support.iter().chain(true_support) {
        if j >= p {
            return Err(CoxError::IndexOutOfRange { index: j, len: p });
        }
    }
    let est: BTreeSet<usize> = estimated_support.iter().copied().collect();
    let truth: BTreeSet<usize> = true_support.iter().copied().collect();
    let tp = est.intersection(&truth).count();
    let fp = est.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = p - tp - fp - fn_;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(SelectionReport {
        tp,
        fp,
        tn,
        fn_,
        accuracy: ratio(tp + tn, p),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        fdr: ratio(fp, tp + fp),
        precision: ratio(tp, tp + fp),
    })
}

/// Kaplan-Meier estimate of the censoring distribution of `data`.
pub fn censoring_curve(data: &SurvivalDataset) -> Result<KaplanMeierCurve> {
    let flipped: Vec<bool> = data.events().iter().map(|e| !e).collect();
    kaplan_meier(data.times(), &flipped)
}

/// Graf IPCW Brier score at `t`. `predictions[i]` is the predicted survival
/// probability at `t` for subject `i` of `test_data` (original order).
pub fn brier_score(
    predictions: &[f64],
    test_data: &SurvivalDataset,
    t: f64,
    censor_curve: &KaplanMeierCurve,
) -> Result<f64> {
    if predictions.len() != test_data.n() {
        return Err(CoxError::LengthMismatch {
            left: predictions.len(),
            right: test_data.n(),
        });
    }
    let mut total = 0.0;
    for ((&s, &ti), &event) in predictions.iter().zip(test_data.times()).zip(test_data.events()) {
        if ti <= t && event {
            let g = censor_curve.left_limit(ti);
            if g <= 0.0 {
                return Err(CoxError::ZeroCensorWeight { time: ti });
            }
            total += s * s / g;
        } else if ti > t {
            let g = censor_curve.at(t);
            if g <= 0.0 {
                return Err(CoxError::ZeroCensorWeight { time: t });
            }
            total += (1.0 - s) * (1.0 - s) / g;
        }
    }
    Ok(total / test_data.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierReport {
    pub eval_times: Vec<f64>,
    pub brier_at: Vec<f64>,
    pub ibs: f64,
}

/// Trapezoidal integral of `values` over `times`, divided by the span.
pub fn normalized_trapezoid(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(CoxError::LengthMismatch {
            left: times.len(),
            right: values.len(),
        });
    }
    match times.len() {
        0 => Err(CoxError::InvalidGrid("empty evaluation grid".into())),
        1 => Ok(values[0]),
        _ => {
            let span = times[times.len() - 1] - times[0];
            if !(span > 0.0) {
                return Err(CoxError::InvalidGrid("grid must be strictly ascending".into()));
            }
            let area: f64 = times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
                .sum();
            Ok(area / span)
        }
    }
}

/// Distinct event times of `data` up to `horizon` (all when `None`).
pub fn default_grid(data: &SurvivalDataset, horizon: Option<f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = data
        .sorted_times()
        .iter()
        .zip(data.sorted_events())
        .filter(|(&t, &e)| e && horizon.is_none_or(|h| t <= h))
        .map(|(&t, _)| t)
        .collect();
    grid.dedup();
    grid
}

/// Brier score over an ascending `grid`, with `predict(t)` giving the
/// per-subject survival predictions at `t`.
pub fn integrated_brier_score<F>(
    mut predict: F,
    test_data: &SurvivalDataset,
    grid: &[f64],
    censor_curve: &KaplanMeierCurve,
) -> Result<BrierReport>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoxError::InvalidGrid("grid must be strictly ascending".into()));
    }
    let brier_at = grid
        .iter()
        .map(|&t| brier_score(&predict(t)?, test_data, t, censor_curve))
        .collect::<Result<Vec<_>>>()?;
    let ibs = normalized_trapezoid(grid, &brier_at)?;
    Ok(BrierReport {
        eval_times: grid.to_vec(),
        brier_at,
        ibs,
    })
}

/// IBS of a fitted model on held-out data over its event times up to
/// `horizon`.
pub fn model_brier_report(
    model: &FittedModel,
    test_data: &SurvivalDataset,
    horizon: Option<f64>,
) -> Result<BrierReport> {
    let censor = censoring_curve(test_data)?;
    let grid = default_grid(test_data, horizon);
    let x = test_data.covariates();
    let lps: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| model.linear_predictor(row.as_slice().expect("row-major covariates")))
        .collect::<Result<_>>()?;
    let risk: Vec<f64> = lps.iter().map(|lp| lp.exp()).collect();
    integrated_brier_score(
        |t| {
            let h0 = model.baseline.at(t);
            Ok(risk.iter().map(|r| (-h0 * r).exp()).collect())
        },
        test_data,
        &grid,
        &censor,
    )
}

/// Per-subject survival predictions at `t`.
pub fn predict_all(model: &FittedModel, data: &SurvivalDataset, t: f64) -> Result<Vec<f64>> {
    data.covariates()
        .rows()
        .into_iter()
        .map(|row| predict_survival(model, &row.to_vec(), t))
        .collect()
}

/// One row of the long-format result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model: String,
    pub metric: String,
    pub replicate: usize,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(model: &str, metric: &str, replicate: usize, value: f64) -> Self {
        Self {
            model: model.to_string(),
            metric: metric.to_string(),
            replicate,
            value,
        }
    }
}

pub fn selection_records(model: &str, replicate: usize, r: &SelectionReport) -> Vec<MetricRecord> {
    vec![
        MetricRecord::new(model, "accuracy", replicate, r.accuracy),
        MetricRecord::new(model, "f1", replicate, r.f1),
        MetricRecord::new(model, "fdr", replicate, r.fdr),
        MetricRecord::new(model, "n_selected", replicate, (r.tp + r.fp) as f64),
    ]
}

/// Writes `model,metric,replicate,value` rows with a header.
pub fn write_long_csv<W: io::Write>(records: &[MetricRecord], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::Observation;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn data(times: &[f64], events: &[bool]) -> SurvivalDataset {
        let x = Array2::zeros((times.len(), 1));
        SurvivalDataset::new(times.to_vec(), events.to_vec(), x).unwrap()
    }

    #[test]
    fn perfect_selection() {
        let truth = [3, 100, 200, 300, 499];
        let r = selection_metrics(&truth, &truth, 500).unwrap();
        assert_eq!((r.accuracy, r.f1, r.fdr), (1.0, 1.0, 0.0));
    }

    #[test]
    fn select_everything() {
        let all: Vec<usize> = (0..500).collect();
        let r = selection_metrics(&all, &[0, 1, 2, 3, 4], 500).unwrap();
        assert_relative_eq!(r.accuracy, 0.01);
        assert_eq!(r.tp + r.fp + r.tn + r.fn_, 500);
    }

    #[test]
    fn small_counts() {
        let r = selection_metrics(&[0, 1], &[0], 4).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 0, 2));
        assert_eq!(r.fdr, 0.5);
        assert_relative_eq!(r.f1, 2.0 / 3.0);
        assert_relative_eq!(r.fdr + r.precision, 1.0);
        let empty = selection_metrics(&[], &[], 3).unwrap();
        assert_eq!((empty.fdr, empty.f1, empty.accuracy), (0.0, 0.0, 1.0));
        assert!(selection_metrics(&[5], &[], 5).is_err());
    }

    #[test]
    fn brier_without_censoring() {
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true; 4]);
        let g = censoring_curve(&d).unwrap();
        // perfect: dead by 2.5 -> 0, alive -> 1
        let perfect = brier_score(&[0.0, 0.0, 1.0, 1.0], &d, 2.5, &g).unwrap();
        assert_eq!(perfect, 0.0);
        let half = brier_score(&[0.5; 4], &d, 2.5, &g).unwrap();
        assert_relative_eq!(half, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn brier_hand_case_with_censoring() {
        // A(1, event) B(2, censored) C(3, event) D(4, event); G(2) = 2/3.
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true]);
        let g = censoring_curve(&d).unwrap();
        let s = [0.3, 0.6, 0.8, 0.5];
        // t = 2.5: A 0.09, B 0, C 0.04 * 1.5, D 0.25 * 1.5
        assert_relative_eq!(brier_score(&s, &d, 2.5, &g).unwrap(), 0.13125, epsilon = 1e-12);
        // t = 3.5: A 0.09, B 0, C 0.64 / (2/3), D 0.25 * 1.5
        assert_relative_eq!(brier_score(&s, &d, 3.5, &g).unwrap(), 0.35625, epsilon = 1e-12);
    }

    #[test]
    fn brier_zero_weight() {
        let d = data(&[1.0, 2.0, 3.0], &[true, false, false]);
        let g = censoring_curve(&d).unwrap();
        assert!(brier_score(&[0.5; 3], &d, 2.5, &g).is_ok());
        // G drops to 0 at 3 but nobody is beyond t = 3.
        assert!(brier_score(&[0.5; 3], &d, 3.0, &g).is_ok());
        let bogus = KaplanMeierCurve {
            times: vec![0.5],
            survival: vec![0.0],
        };
        assert!(matches!(
            brier_score(&[0.5; 3], &d, 1.5, &bogus),
            Err(CoxError::ZeroCensorWeight { .. })
        ));
    }

    #[test]
    fn trapezoid_cases() {
        assert_relative_eq!(normalized_trapezoid(&[1.0, 2.0, 5.0], &[0.2, 0.2, 0.2]).unwrap(), 0.2);
        assert_eq!(normalized_trapezoid(&[3.0], &[0.17]).unwrap(), 0.17);
        // (0.1+0.3)/2*1 + (0.3+0.2)/2*3 = 0.2 + 0.75 = 0.95 over span 4
        assert_relative_eq!(
            normalized_trapezoid(&[1.0, 2.0, 5.0], &[0.1, 0.3, 0.2]).unwrap(),
            0.2375,
            epsilon = 1e-15
        );
        assert!(normalized_trapezoid(&[], &[]).is_err());
    }

    #[test]
    fn ibs_of_constant_prediction() {
        let d = data(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true; 5]);
        let g = censoring_curve(&d).unwrap();
        let grid = default_grid(&d, Some(4.0));
        assert_eq!(grid, vec![1.0, 2.0, 3.0, 4.0]);
        let rep = integrated_brier_score(|_| Ok(vec![0.5; 5]), &d, &grid, &g).unwrap();
        assert_relative_eq!(rep.ibs, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn brier_order_invariant() {
        let rows = [
            (1.0, true),
            (2.0, false),
            (3.0, true),
            (4.0, true),
            (2.5, false),
        ];
        let preds = [0.2, 0.7, 0.4, 0.9, 0.6];
        let mk = |order: &[usize]| {
            let obs: Vec<Observation> = order
                .iter()
                .map(|&i| Observation::new(rows[i].0, rows[i].1, vec![0.0]))
                .collect();
            let d = crate::survival::build_dataset(&obs).unwrap();
            let p: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
            let g = censoring_curve(&d).unwrap();
            brier_score(&p, &d, 3.2, &g).unwrap()
        };
        assert_relative_eq!(mk(&[0, 1, 2, 3, 4]), mk(&[4, 2, 0, 3, 1]), epsilon = 1e-15);
    }

    #[test]
    fn long_csv_layout() {
        let mut buf = Vec::new();
        write_long_csv(&[MetricRecord::new("exclusive", "ibs", 0, 0.125)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "model,metric,replicate,value\nexclusive,ibs,0,0.125\n");
    }
}
