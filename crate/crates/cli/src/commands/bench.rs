use std::path::{Path, PathBuf};

use coreg_core::sim::{loglog_slope, timing_grid, TimingAxis, TimingCell};
use coreg_core::Method;
use serde::Serialize;

use crate::config::{BenchConfig, Overrides};
use crate::csvio::CsvBuf;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, OutDir};

#[derive(Serialize)]
struct Slope {
    axis: TimingAxis,
    method: Method,
    /// Log-log slope of mean seconds against the varied dimension; `None`
    /// with fewer than two usable points.
    slope: Option<f64>,
}

#[derive(Serialize)]
struct BenchJson<'a> {
    config: &'a BenchConfig,
    cells: Vec<(TimingAxis, TimingCell)>,
    slopes: Vec<Slope>,
}

/// Timing grids. Wall-clock numbers are machine dependent, so unlike the
/// other commands these artifacts are not byte-reproducible.
pub fn cmd_bench(config: Option<&Path>, ov: &Overrides, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let c = BenchConfig::load(config, ov)?;
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for g in &c.grids {
        let grid = timing_grid(g.axis, &g.values, g.fixed, c.replications, &c.methods, c.seed)
            .map_err(|e| CliError::core("timing grid", e))?;
        for &m in &c.methods {
            let (xs, ys): (Vec<f64>, Vec<f64>) = grid
                .iter()
                .filter(|cell| cell.method == m && cell.mean_seconds > 0.0)
                .map(|cell| {
                    let x = match g.axis {
                        TimingAxis::Samples => cell.n,
                        TimingAxis::Variables => cell.p,
                    };
                    (x as f64, cell.mean_seconds)
                })
                .unzip();
            slopes.push(Slope {
                axis: g.axis,
                method: m,
                slope: loglog_slope(&xs, &ys).ok(),
            });
        }
        cells.extend(grid.into_iter().map(|cell| (g.axis, cell)));
    }

    let mut out = OutDir::create(out_dir)?;
    let mut w = CsvBuf::new([
        "axis",
        "p",
        "n",
        "method",
        "replications",
        "failures",
        "mean_seconds",
        "sd_seconds",
    ]);
    for (axis, cell) in &cells {
        w.row([
            match axis {
                TimingAxis::Samples => "samples".to_string(),
                TimingAxis::Variables => "variables".to_string(),
            },
            cell.p.to_string(),
            cell.n.to_string(),
            cell.method.to_string(),
            cell.replications.to_string(),
            cell.failures.to_string(),
            fmt_f64(cell.mean_seconds),
            fmt_f64(cell.sd_seconds),
        ]);
    }
    out.write("timing.csv", &w.finish())?;
    out.write_json(
        "timing.json",
        &BenchJson {
            config: &c,
            cells,
            slopes,
        },
    )?;
    Ok(out.written().to_vec())
}
