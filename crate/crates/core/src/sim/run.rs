use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ols_univariate, svd_factor_baseline};
use crate::cfa::SelectionConfig;
use crate::error::{CoregError, Result};
use crate::infer::{run_coreg, CoregConfig, InferenceResult, Method};

use super::generate::{GroundTruth, ScenarioFixture, ScenarioSpec, SimDataset};
use super::metrics::{evaluate, mean_roc, MetricsSummary};

const ROC_RESOLUTION: usize = 100;

/// One method applied to one dataset.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<InferenceResult>,
    /// Number of factors used (CoReg and SvdFactor).
    pub k: Option<usize>,
    pub lambda_star: Option<f64>,
    pub seconds: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Runs the scenario's methods on one dataset, in the order listed.
/// SvdFactor without an explicit factor count borrows CoReg's K (running
/// CoReg if it was not requested).
pub fn run_methods(ds: &SimDataset, spec: &ScenarioSpec) -> Vec<MethodOutcome> {
    let config = CoregConfig {
        selection: SelectionConfig {
            grid: spec.lambda_grid.clone(),
            ..SelectionConfig::default()
        },
        alpha: spec.alpha,
    };
    let needs_coreg = spec.methods.contains(&Method::CoReg)
        || (spec.methods.contains(&Method::SvdFactor) && spec.svd_factors.is_none());
    let coreg = needs_coreg.then(|| {
        let (res, secs) = timed(|| run_coreg(&ds.y, &ds.design, &config, None));
        match res {
            Ok(a) => MethodOutcome {
                method: Method::CoReg,
                k: Some(a.k()),
                lambda_star: a.selection.as_ref().map(|s| s.lambda_star),
                result: Ok(a.inference),
                seconds: secs,
            },
            Err(e) => MethodOutcome {
                method: Method::CoReg,
                result: Err(e),
                k: None,
                lambda_star: None,
                seconds: secs,
            },
        }
    });
    spec.methods
        .iter()
        .map(|&m| match m {
            Method::CoReg => coreg.clone().expect("CoReg was run"),
            Method::Ols => {
                let (result, seconds) = timed(|| ols_univariate(&ds.y, &ds.design, spec.alpha));
                MethodOutcome {
                    method: m,
                    result,
                    k: None,
                    lambda_star: None,
                    seconds,
                }
            }
            Method::SvdFactor => {
                let k = spec.svd_factors.or_else(|| coreg.as_ref().and_then(|c| c.k));
                match k {
                    Some(k) => {
                        let (result, seconds) = timed(|| svd_factor_baseline(&ds.y, &ds.design, k, spec.alpha));
                        MethodOutcome {
                            method: m,
                            result,
                            k: Some(k),
                            lambda_star: None,
                            seconds,
                        }
                    }
                    None => MethodOutcome {
                        method: m,
                        result: Err(CoregError::Parameter("factor count unavailable: CoReg failed".into())),
                        k: None,
                        lambda_star: None,
                        seconds: 0.0,
                    },
                }
            }
        })
        .collect()
}

/// Mean and sample standard deviation over the replications where the
/// metric is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl MetricStat {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: None,
                sd: None,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: Some(mean),
            sd: Some(sd),
            n,
        }
    }
}

/// Per-replication, per-method metrics (ROC points omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub method: Method,
    pub metrics: Option<MetricsSummary>,
    pub k: Option<usize>,
    pub lambda_star: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub sensitivity: MetricStat,
    pub specificity: MetricStat,
    pub f1: MetricStat,
    pub fdr: MetricStat,
    pub fpr: MetricStat,
    pub auc: MetricStat,
    pub mean_k: Option<f64>,
    /// Vertically averaged ROC on an FPR grid of step 0.01.
    pub mean_roc: Vec<(f64, f64)>,
}

/// Aggregate over replications. Contains no timings, so it is reproducible
/// bit for bit from the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub p: usize,
    pub sigma_distortion: f64,
    pub truth: GroundTruth,
    pub methods: Vec<MethodReport>,
    pub replications: Vec<ReplicationRow>,
}

impl ScenarioReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub replication: usize,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub timing: Vec<TimingRow>,
}

impl ScenarioRun {
    pub fn mean_seconds(&self, m: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .timing
            .iter()
            .filter(|t| t.method == m)
            .map(|t| t.seconds)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn failed_outcomes(spec: &ScenarioSpec, err: &CoregError) -> Vec<MethodOutcome> {
    spec.methods
        .iter()
        .map(|&method| MethodOutcome {
            method,
            result: Err(err.clone()),
            k: None,
            lambda_star: None,
            seconds: 0.0,
        })
        .collect()
}

/// Runs every replication (in parallel) and aggregates in replication order.
/// Failed replications are recorded and skipped.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun> {
    let fixture = ScenarioFixture::new(spec)?;
    let per_rep: Vec<Vec<(MethodOutcome, Option<MetricsSummary>)>> = (0..spec.n_replications)
        .into_par_iter()
        .map(|r| {
            let outcomes = match fixture.dataset(r) {
                Ok(ds) => run_methods(&ds, spec),
                Err(e) => failed_outcomes(spec, &e),
            };
            outcomes
                .into_iter()
                .map(|mut o| {
                    let metrics = match &o.result {
                        Ok(res) => match evaluate(res, &fixture.truth) {
                            Ok(m) => Some(m),
                            Err(e) => {
                                o.result = Err(e);
                                None
                            }
                        },
                        Err(_) => None,
                    };
                    (o, metrics)
                })
                .collect()
        })
        .collect();

    let mut replications = Vec::new();
    let mut timing = Vec::new();
    for (r, outcomes) in per_rep.iter().enumerate() {
        for (o, metrics) in outcomes {
            timing.push(TimingRow {
                replication: r,
                method: o.method,
                seconds: o.seconds,
            });
            replications.push(ReplicationRow {
                replication: r,
                method: o.method,
                metrics: metrics.clone().map(|mut m| {
                    m.roc_points.clear();
                    m
                }),
                k: o.k,
                lambda_star: o.lambda_star,
                error: o.result.as_ref().err().map(|e| e.to_string()),
            });
        }
    }

    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(slot, &method)| {
            let ok: Vec<(&MethodOutcome, &MetricsSummary)> = per_rep
                .iter()
                .filter_map(|outs| {
                    let (o, m) = &outs[slot];
                    m.as_ref().map(|m| (o, m))
                })
                .collect();
            let stat =
                |f: &dyn Fn(&MetricsSummary) -> Option<f64>| MetricStat::from_values(ok.iter().map(|(_, m)| f(m)));
            let ks: Vec<f64> = ok.iter().filter_map(|(o, _)| o.k.map(|k| k as f64)).collect();
            let curves: Vec<&[(f64, f64)]> = ok.iter().map(|(_, m)| m.roc_points.as_slice()).collect();
            MethodReport {
                method,
                n_succeeded: ok.len(),
                n_failed: spec.n_replications - ok.len(),
                sensitivity: stat(&|m| m.sensitivity),
                specificity: stat(&|m| m.specificity),
                f1: stat(&|m| m.f1),
                fdr: stat(&|m| Some(m.fdr)),
                fpr: stat(&|m| m.fpr),
                auc: stat(&|m| m.auc),
                mean_k: (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64),
                mean_roc: mean_roc(&curves, ROC_RESOLUTION),
            }
        })
        .collect();

    Ok(ScenarioRun {
        report: ScenarioReport {
            spec: spec.clone(),
            p: fixture.p(),
            sigma_distortion: fixture.sigma.distortion,
            truth: fixture.truth.clone(),
            methods,
            replications,
        },
        timing,
    })
}

/// True-positive overlap for one method in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub replication: usize,
    pub method: Method,
    pub tp_arm1: usize,
    pub tp_arm2: usize,
    pub intersection: usize,
    pub union: usize,
    pub error: Option<String>,
}

/// Venn summary: mean counts of true positives found only in arm 1, in
/// both, and only in arm 2, with each as a proportion of the mean union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub method: Method,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub mean_tp_arm1: f64,
    pub mean_tp_arm2: f64,
    pub only_arm1: f64,
    pub intersection: f64,
    pub only_arm2: f64,
    pub union: f64,
    pub only_arm1_proportion: f64,
    pub intersection_proportion: f64,
    pub only_arm2_proportion: f64,
    /// Mean intersection as a fraction of the shared signal count.
    pub intersection_over_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicabilityReport {
    pub arm1: ScenarioSpec,
    pub arm2: ScenarioSpec,
    pub shared_truth_seed: u64,
    pub truth: GroundTruth,
    pub methods: Vec<OverlapSummary>,
    pub replications: Vec<OverlapRow>,
}

impl ReplicabilityReport {
    pub fn method(&self, m: Method) -> Option<&OverlapSummary> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn true_positives(result: &InferenceResult, truth: &GroundTruth) -> Vec<usize> {
    let predictor = result.predictors[0];
    result
        .for_predictor(predictor)
        .filter(|r| r.rejected && truth.contains(r.outcome))
        .map(|r| r.outcome)
        .collect()
}

/// Two independent studies sharing covariance structure and signal
/// locations (both drawn from `shared_truth_seed`), each analysed by every
/// method; replication `r` of each arm uses that arm's own master seed.
pub fn run_replicability(
    spec1: &ScenarioSpec,
    spec2: &ScenarioSpec,
    shared_truth_seed: u64,
    methods: &[Method],
) -> Result<ReplicabilityReport> {
    if spec1.p() != spec2.p() {
        return Err(CoregError::Spec(format!(
            "arms disagree on p: {} vs {}",
            spec1.p(),
            spec2.p()
        )));
    }
    if spec1.n_true_signals != spec2.n_true_signals {
        return Err(CoregError::Spec(format!(
            "arms disagree on the number of true signals: {} vs {}",
            spec1.n_true_signals, spec2.n_true_signals
        )));
    }
    if spec1.n_replications != spec2.n_replications {
        return Err(CoregError::Spec(format!(
            "arms disagree on replications: {} vs {}",
            spec1.n_replications, spec2.n_replications
        )));
    }
    if methods.is_empty() {
        return Err(CoregError::Spec("no methods requested".into()));
    }
    let arm = |s: &ScenarioSpec| ScenarioSpec {
        truth_seed: Some(shared_truth_seed),
        methods: methods.to_vec(),
        ..s.clone()
    };
    let (s1, s2) = (arm(spec1), arm(spec2));
    let f1 = ScenarioFixture::new(&s1)?;
    let truth = if f1.truth.is_empty() {
        ScenarioFixture::new(&ScenarioSpec {
            effect_size: 1.0,
            ..s1.clone()
        })?
        .truth
    } else {
        f1.truth.clone()
    };
    let f2 = ScenarioFixture::with_truth(&s2, truth.clone())?;

    let per_rep: Vec<Vec<OverlapRow>> = (0..s1.n_replications)
        .into_par_iter()
        .map(|r| {
            let run = |f: &ScenarioFixture, s: &ScenarioSpec| match f.dataset(r) {
                Ok(ds) => run_methods(&ds, s),
                Err(e) => failed_outcomes(s, &e),
            };
            let (o1, o2) = (run(&f1, &s1), run(&f2, &s2));
            o1.iter()
                .zip(&o2)
                .map(|(a, b)| match (&a.result, &b.result) {
                    (Ok(ra), Ok(rb)) => {
                        let ta = true_positives(ra, &f1.truth);
                        let tb = true_positives(rb, &f2.truth);
                        let inter = ta.iter().filter(|i| tb.binary_search(i).is_ok()).count();
                        OverlapRow {
                            replication: r,
                            method: a.method,
                            tp_arm1: ta.len(),
                            tp_arm2: tb.len(),
                            intersection: inter,
                            union: ta.len() + tb.len() - inter,
                            error: None,
                        }
                    }
                    (ra, rb) => OverlapRow {
                        replication: r,
                        method: a.method,
                        tp_arm1: 0,
                        tp_arm2: 0,
                        intersection: 0,
                        union: 0,
                        error: Some(
                            ra.as_ref()
                                .err()
                                .or(rb.as_ref().err())
                                .map(|e| e.to_string())
                                .unwrap_or_default(),
                        ),
                    },
                })
                .collect()
        })
        .collect();
    let replications: Vec<OverlapRow> = per_rep.into_iter().flatten().collect();

    let summaries = methods
        .iter()
        .map(|&method| {
            let ok: Vec<&OverlapRow> = replications
                .iter()
                .filter(|r| r.method == method && r.error.is_none())
                .collect();
            let n = ok.len();
            let mean = |f: &dyn Fn(&OverlapRow) -> usize| {
                if n == 0 {
                    0.0
                } else {
                    ok.iter().map(|r| f(r) as f64).sum::<f64>() / n as f64
                }
            };
            let inter = mean(&|r| r.intersection);
            let union = mean(&|r| r.union);
            let only1 = mean(&|r| r.tp_arm1 - r.intersection);
            let only2 = mean(&|r| r.tp_arm2 - r.intersection);
            let prop = |x: f64| if union > 0.0 { x / union } else { 0.0 };
            OverlapSummary {
                method,
                n_succeeded: n,
                n_failed: s1.n_replications - n,
                mean_tp_arm1: mean(&|r| r.tp_arm1),
                mean_tp_arm2: mean(&|r| r.tp_arm2),
                only_arm1: only1,
                intersection: inter,
                only_arm2: only2,
                union,
                only_arm1_proportion: prop(only1),
                intersection_proportion: prop(inter),
                only_arm2_proportion: prop(only2),
                intersection_over_truth: if truth.is_empty() {
                    0.0
                } else {
                    inter / truth.len() as f64
                },
            }
        })
        .collect();

    Ok(ReplicabilityReport {
        arm1: s1,
        arm2: s2,
        shared_truth_seed,
        truth,
        methods: summaries,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::default_lambda_grid;
    use crate::sim::{BlockSigmaSpec, InterBlock};

    fn tiny(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            name: "tiny".into(),
            sigma: BlockSigmaSpec {
                block_sizes: vec![10, 10],
                block_mean_corr: vec![0.8, 0.6],
                within_block_sd: 0.05,
                inter_block: vec![InterBlock { a: 0, b: 1, corr: -0.3 }],
                n_singleton_vars: 10,
                noise_scale: 0.5,
            },
            n: 60,
            q: 2,
            n_true_signals: 6,
            effect_size: 0.5,
            n_replications: 3,
            alpha: 0.05,
            master_seed: seed,
            truth_seed: None,
            methods: Method::ALL.to_vec(),
            svd_factors: None,
            lambda_grid: default_lambda_grid(),
        }
    }

    #[test]
    fn scenario_report_is_deterministic() {
        let a = run_scenario(&tiny(5)).unwrap();
        let b = run_scenario(&tiny(5)).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.methods.len(), 3);
        assert_eq!(a.report.replications.len(), 9);
        assert_eq!(a.timing.len(), 9);
        for m in &a.report.methods {
            assert_eq!(m.n_failed, 0, "{:?}", a.report.replications);
            let auc = m.auc.mean.unwrap();
            assert!((0.0..=1.0).contains(&auc));
        }
    }

    #[test]
    fn svd_factor_uses_coreg_k() {
        let run = run_scenario(&tiny(6)).unwrap();
        for r in 0..3 {
            let k = |m: Method| {
                run.report
                    .replications
                    .iter()
                    .find(|row| row.replication == r && row.method == m)
                    .unwrap()
                    .k
            };
            assert_eq!(k(Method::CoReg), k(Method::SvdFactor));
        }
    }

    #[test]
    fn null_scenario_has_no_sensitivity() {
        let mut s = tiny(7);
        s.effect_size = 0.0;
        s.n_replications = 1;
        let run = run_scenario(&s).unwrap();
        for m in &run.report.methods {
            assert_eq!(m.sensitivity.mean, None);
            assert!(m.fpr.mean.unwrap() <= 0.05 + 0.03 + 0.1);
        }
    }

    #[test]
    fn identical_arms_overlap_completely() {
        let s = tiny(8);
        let rep = run_replicability(&s, &s, 3, &Method::ALL).unwrap();
        for row in &rep.replications {
            assert!(row.error.is_none());
            assert_eq!(row.tp_arm1, row.tp_arm2);
            assert_eq!(row.intersection, row.tp_arm1);
            assert_eq!(row.union, row.tp_arm1);
        }
    }

    #[test]
    fn mismatched_arms_are_rejected() {
        let a = tiny(1);
        let mut b = tiny(2);
        b.sigma.n_singleton_vars = 11;
        assert!(matches!(
            run_replicability(&a, &b, 1, &Method::ALL),
            Err(CoregError::Spec(_))
        ));
    }

    #[test]
    fn venn_proportions_sum_to_one() {
        let a = tiny(1);
        let mut b = tiny(2);
        b.sigma.noise_scale = 1.0;
        let rep = run_replicability(&a, &b, 4, &[Method::Ols, Method::CoReg]).unwrap();
        assert_eq!(rep.methods.len(), 2);
        for m in &rep.methods {
            if m.union > 0.0 {
                let s = m.only_arm1_proportion + m.intersection_proportion + m.only_arm2_proportion;
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
