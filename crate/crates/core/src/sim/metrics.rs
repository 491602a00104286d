use serde::{Deserialize, Serialize};

use crate::error::{CoregError, Result};
use crate::infer::InferenceResult;

use super::generate::GroundTruth;

/// Confusion-matrix metrics against the ground truth. Ratios whose
/// denominator is zero (e.g. sensitivity under an empty truth) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    /// `FP / max(TP + FP, 1)`.
    pub fdr: f64,
    /// `FP / (FP + TN)`.
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`; empty when the AUC is undefined.
    pub roc_points: Vec<(f64, f64)>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores the first tested predictor of `result`.
pub fn evaluate(result: &InferenceResult, truth: &GroundTruth) -> Result<MetricsSummary> {
    let predictor = *result
        .predictors
        .first()
        .ok_or_else(|| CoregError::Input("inference result has no tested predictor".into()))?;
    let p = result.n_outcomes;
    let p_values = result.p_values(predictor);
    let rejected = result.rejected(predictor);
    if p_values.len() != p {
        return Err(CoregError::Input(format!(
            "expected {p} outcomes, found {}",
            p_values.len()
        )));
    }
    if truth.signal_indices.last().is_some_and(|&i| i >= p) {
        return Err(CoregError::Input(format!("truth index outside 0..{p}")));
    }
    let is_signal = truth.mask(p);
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (s, r) in is_signal.iter().zip(&rejected) {
        match (s, r) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let roc_points = roc_curve(&p_values, &is_signal);
    let auc = (!roc_points.is_empty()).then(|| trapezoid(&roc_points));
    Ok(MetricsSummary {
        tp,
        fp,
        tn,
        fn_,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        fdr: fp as f64 / (tp + fp).max(1) as f64,
        fpr: ratio(fp, fp + tn),
        auc,
        roc_points,
    })
}

/// ROC swept over p-value thresholds; tied p-values enter together.
fn roc_curve(p_values: &[f64], is_signal: &[bool]) -> Vec<(f64, f64)> {
    let pos = is_signal.iter().filter(|&&s| s).count();
    let neg = is_signal.len() - pos;
    if pos == 0 || neg == 0 {
        return vec![];
    }
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = p_values[order[i]];
        while i < order.len() && p_values[order[i]] == threshold {
            if is_signal[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    points
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Vertical average of ROC curves on an FPR grid of `resolution + 1`
/// points. Each curve is linearly interpolated; at a vertical segment the
/// upper value is used.
pub fn mean_roc(curves: &[&[(f64, f64)]], resolution: usize) -> Vec<(f64, f64)> {
    let curves: Vec<&[(f64, f64)]> = curves.iter().copied().filter(|c| !c.is_empty()).collect();
    if curves.is_empty() || resolution == 0 {
        return vec![];
    }
    (0..=resolution)
        .map(|g| {
            let f = g as f64 / resolution as f64;
            let tpr = curves.iter().map(|c| interpolate(c, f)).sum::<f64>() / curves.len() as f64;
            (f, tpr)
        })
        .collect()
}

fn interpolate(curve: &[(f64, f64)], f: f64) -> f64 {
    // Last point with fpr <= f carries the highest tpr at that fpr.
    let k = curve.partition_point(|pt| pt.0 <= f);
    if k == 0 {
        return curve[0].1;
    }
    let (x0, y0) = curve[k - 1];
    match curve.get(k) {
        Some(&(x1, y1)) if x1 > x0 => y0 + (y1 - y0) * (f - x0) / (x1 - x0),
        _ => y0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{bh_adjust, CoefficientTest, Method};
    use crate::numerics::RngStream;
    use rand::Rng;

    fn result_from(p_values: &[f64], rejected: Option<&[bool]>) -> InferenceResult {
        let (adj, rej) = bh_adjust(p_values, 0.05).unwrap();
        let rej = rejected.map_or(rej, |r| r.to_vec());
        InferenceResult {
            method: Method::Ols,
            alpha: 0.05,
            dof: 10,
            n_outcomes: p_values.len(),
            predictors: vec![1],
            records: p_values
                .iter()
                .enumerate()
                .map(|(l, &p)| CoefficientTest {
                    outcome: l,
                    outcome_label: format!("y{l}"),
                    predictor: 1,
                    predictor_name: "x".into(),
                    estimate: 0.0,
                    std_error: 1.0,
                    t_stat: 0.0,
                    p_value: p,
                    adjusted_p: adj[l],
                    rejected: rej[l],
                    degenerate: false,
                })
                .collect(),
        }
    }

    #[test]
    fn hand_confusion_counts() {
        // Signals 0..3; rejected {0, 1, 4} → TP 2, FP 1, FN 1, TN 6.
        let p: Vec<f64> = (0..10).map(|i| 0.01 * (i + 1) as f64).collect();
        let mut rej = vec![false; 10];
        rej[0] = true;
        rej[1] = true;
        rej[4] = true;
        let m = evaluate(&result_from(&p, Some(&rej)), &GroundTruth::new(vec![0, 1, 2])).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 6));
        assert!((m.sensitivity.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.specificity.unwrap() - 6.0 / 7.0).abs() < 1e-12);
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.fdr - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_has_unit_auc() {
        let p = [1e-5, 2e-5, 0.3, 0.5, 0.9];
        let m = evaluate(&result_from(&p, None), &GroundTruth::new(vec![0, 1])).unwrap();
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.roc_points.first(), Some(&(0.0, 0.0)));
        assert_eq!(m.roc_points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn ties_give_the_diagonal() {
        let p = [0.5; 6];
        let m = evaluate(&result_from(&p, None), &GroundTruth::new(vec![0, 3])).unwrap();
        assert_eq!(m.roc_points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!((m.auc.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_p_values_have_chance_auc() {
        let mut rng = RngStream::new(4, 0).rng();
        let p: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let truth = GroundTruth::new((0..5000).step_by(5).collect());
        let m = evaluate(&result_from(&p, None), &truth).unwrap();
        let auc = m.auc.unwrap();
        assert!((0.45..=0.55).contains(&auc), "{auc}");
        for w in m.roc_points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn empty_truth_flags_sensitivity() {
        let p = [0.001, 0.2, 0.7];
        let m = evaluate(&result_from(&p, None), &GroundTruth::new(vec![])).unwrap();
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.auc, None);
        assert_eq!(m.fp, 1);
        assert_eq!(m.fdr, 1.0);
        assert!((m.fpr.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_roc_of_identical_curves() {
        let c = vec![(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)];
        let m = mean_roc(&[&c, &c], 4);
        assert_eq!(m.len(), 5);
        assert_eq!(m[0], (0.0, 0.5));
        assert!((m[1].1 - 0.75).abs() < 1e-12);
        assert_eq!(m[4], (1.0, 1.0));
    }
}
