use std::path::{Path, PathBuf};

use coreg_core::sim::{MetricStat, ScenarioRun};
use coreg_core::{run_scenario, Method};
use serde::Serialize;

use crate::config::{load_scenarios, Overrides};
use crate::csvio::CsvBuf;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, OutDir};
use crate::svg::render_roc;

/// One Table-1 cell: a scenario × method with the five headline metrics.
#[derive(Debug, Serialize)]
struct TableRow {
    scenario: String,
    n: usize,
    noise_scale: f64,
    method: Method,
    n_succeeded: usize,
    n_failed: usize,
    sensitivity: MetricStat,
    specificity: MetricStat,
    f1: MetricStat,
    fdr: MetricStat,
    auc: MetricStat,
    fpr: MetricStat,
    mean_k: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ScenarioEntry {
    spec: coreg_core::ScenarioSpec,
    p: usize,
    sigma_distortion: f64,
    truth: coreg_core::GroundTruth,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    table: Vec<TableRow>,
    scenarios: Vec<ScenarioEntry>,
}

pub fn cmd_simulate(
    config: Option<&Path>,
    preset: Option<&str>,
    timing: bool,
    ov: &Overrides,
    out_dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    let specs = load_scenarios(config, preset, ov)?;
    let runs: Vec<ScenarioRun> = specs
        .iter()
        .map(|s| run_scenario(s).map_err(|e| CliError::core(format!("scenario '{}'", s.name), e)))
        .collect::<CliResult<_>>()?;

    let mut out = OutDir::create(out_dir)?;
    let mut table = Vec::new();
    let mut scenarios = Vec::new();
    let mut reps = CsvBuf::new([
        "scenario",
        "replication",
        "method",
        "tp",
        "fp",
        "tn",
        "fn",
        "sensitivity",
        "specificity",
        "f1",
        "fdr",
        "fpr",
        "auc",
        "K",
        "lambda_star",
        "error",
    ]);
    let mut timing_csv = CsvBuf::new(["scenario", "replication", "method", "seconds"]);

    for run in &runs {
        let r = &run.report;
        let name = &r.spec.name;
        for m in &r.methods {
            table.push(TableRow {
                scenario: name.clone(),
                n: r.spec.n,
                noise_scale: r.spec.sigma.noise_scale,
                method: m.method,
                n_succeeded: m.n_succeeded,
                n_failed: m.n_failed,
                sensitivity: m.sensitivity,
                specificity: m.specificity,
                f1: m.f1,
                fdr: m.fdr,
                auc: m.auc,
                fpr: m.fpr,
                mean_k: m.mean_k,
            });

            let mut roc = CsvBuf::new(["fpr", "tpr"]);
            for &(x, y) in &m.mean_roc {
                roc.row([fmt_f64(x), fmt_f64(y)]);
            }
            out.write(&format!("roc_{name}_{}.csv", m.method), &roc.finish())?;
            out.write(
                &format!("roc_{name}_{}.svg", m.method),
                render_roc(
                    &[(m.method.to_string(), m.mean_roc.clone())],
                    &format!("{name}: {} mean ROC", m.method),
                )
                .as_bytes(),
            )?;
        }
        let curves: Vec<(String, Vec<(f64, f64)>)> = r
            .methods
            .iter()
            .map(|m| (m.method.to_string(), m.mean_roc.clone()))
            .collect();
        out.write(
            &format!("roc_{name}.svg"),
            render_roc(&curves, &format!("{name}: mean ROC")).as_bytes(),
        )?;

        for row in &r.replications {
            let mt = row.metrics.as_ref();
            reps.row([
                name.clone(),
                row.replication.to_string(),
                row.method.to_string(),
                mt.map(|m| m.tp.to_string()).unwrap_or_default(),
                mt.map(|m| m.fp.to_string()).unwrap_or_default(),
                mt.map(|m| m.tn.to_string()).unwrap_or_default(),
                mt.map(|m| m.fn_.to_string()).unwrap_or_default(),
                fmt_opt(mt.and_then(|m| m.sensitivity)),
                fmt_opt(mt.and_then(|m| m.specificity)),
                fmt_opt(mt.and_then(|m| m.f1)),
                fmt_opt(mt.map(|m| m.fdr)),
                fmt_opt(mt.and_then(|m| m.fpr)),
                fmt_opt(mt.and_then(|m| m.auc)),
                row.k.map(|k| k.to_string()).unwrap_or_default(),
                fmt_opt(row.lambda_star),
                row.error.clone().unwrap_or_default(),
            ]);
        }
        for t in &run.timing {
            timing_csv.row([
                name.clone(),
                t.replication.to_string(),
                t.method.to_string(),
                fmt_f64(t.seconds),
            ]);
        }
        scenarios.push(ScenarioEntry {
            spec: r.spec.clone(),
            p: r.p,
            sigma_distortion: r.sigma_distortion,
            truth: r.truth.clone(),
        });
    }

    out.write_json("report.json", &SimulateReport { table, scenarios })?;
    out.write("replications.csv", &reps.finish())?;
    if timing {
        out.write("timing.csv", &timing_csv.finish())?;
    }
    Ok(out.written().to_vec())
}
