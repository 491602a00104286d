use std::path::{Path, PathBuf};

use coreg_core::run_replicability;
use serde::Serialize;

use crate::config::{load_replicability, Overrides};
use crate::csvio::CsvBuf;
use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use crate::svg::{render_venn_panel, VennRow};

#[derive(Serialize)]
struct ReplicabilityJson<'a> {
    name: Option<&'a str>,
    arm1: &'a coreg_core::ScenarioSpec,
    arm2: &'a coreg_core::ScenarioSpec,
    shared_truth_seed: u64,
    n_true_signals: usize,
    truth: &'a coreg_core::GroundTruth,
    methods: &'a [coreg_core::sim::OverlapSummary],
}

pub fn cmd_replicability(
    config: Option<&Path>,
    preset: Option<&str>,
    ov: &Overrides,
    out_dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    let c = load_replicability(config, preset, ov)?;
    let report = run_replicability(&c.arm1, &c.arm2, c.shared_truth_seed, &c.methods)
        .map_err(|e| CliError::core("replicability", e))?;

    let mut out = OutDir::create(out_dir)?;
    out.write_json(
        "replicability.json",
        &ReplicabilityJson {
            name: c.name.as_deref(),
            arm1: &report.arm1,
            arm2: &report.arm2,
            shared_truth_seed: report.shared_truth_seed,
            n_true_signals: report.truth.len(),
            truth: &report.truth,
            methods: &report.methods,
        },
    )?;

    let mut w = CsvBuf::new([
        "replication",
        "method",
        "tp_arm1",
        "tp_arm2",
        "intersection",
        "union",
        "error",
    ]);
    for r in &report.replications {
        w.row([
            r.replication.to_string(),
            r.method.to_string(),
            r.tp_arm1.to_string(),
            r.tp_arm2.to_string(),
            r.intersection.to_string(),
            r.union.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    out.write("overlap.csv", &w.finish())?;

    let rows: Vec<VennRow> = report
        .methods
        .iter()
        .map(|m| VennRow {
            label: m.method.to_string(),
            only_arm1: m.only_arm1,
            intersection: m.intersection,
            only_arm2: m.only_arm2,
            proportions: [
                m.only_arm1_proportion,
                m.intersection_proportion,
                m.only_arm2_proportion,
            ],
        })
        .collect();
    let title = format!(
        "true positives replicated across arms ({} signals, mean over {} replications)",
        report.truth.len(),
        report.arm1.n_replications
    );
    out.write(
        "venn.svg",
        render_venn_panel(&rows, [&report.arm1.name, &report.arm2.name], &title).as_bytes(),
    )?;
    Ok(out.written().to_vec())
}
