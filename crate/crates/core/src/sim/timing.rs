use serde::{Deserialize, Serialize};

use crate::cfa::default_lambda_grid;
use crate::error::{CoregError, Result};
use crate::infer::{Method, DEFAULT_ALPHA};

use super::generate::{BlockSigmaSpec, InterBlock, ScenarioFixture, ScenarioSpec};
use super::run::run_methods;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingAxis {
    /// Vary n at fixed p.
    Samples,
    /// Vary p at fixed n.
    Variables,
}

/// Block design scaled to `p`: three blocks of `p/5` (0.8, 0.6, 0.4; −0.4
/// between the first two), the rest singletons, no within-block spread.
pub fn timing_sigma_spec(p: usize, noise_scale: f64) -> BlockSigmaSpec {
    let b = p / 5;
    BlockSigmaSpec {
        block_sizes: if b > 0 { vec![b, b, b] } else { vec![] },
        block_mean_corr: if b > 0 { vec![0.8, 0.6, 0.4] } else { vec![] },
        within_block_sd: 0.0,
        inter_block: if b > 0 {
            vec![InterBlock { a: 0, b: 1, corr: -0.4 }]
        } else {
            vec![]
        },
        n_singleton_vars: p - 3 * b,
        noise_scale,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub p: usize,
    pub n: usize,
    pub method: Method,
    pub replications: usize,
    pub failures: usize,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
}

/// Wall-clock seconds per method on a grid along one axis. Replications run
/// sequentially so that each measurement is an undisturbed single run; data
/// generation is excluded.
pub fn timing_grid(
    axis: TimingAxis,
    values: &[usize],
    fixed: usize,
    replications: usize,
    methods: &[Method],
    seed: u64,
) -> Result<Vec<TimingCell>> {
    if replications == 0 || methods.is_empty() {
        return Err(CoregError::Parameter(
            "timing grid needs replications and methods".into(),
        ));
    }
    let mut cells = Vec::new();
    for &v in values {
        let (p, n) = match axis {
            TimingAxis::Samples => (fixed, v),
            TimingAxis::Variables => (v, fixed),
        };
        let spec = ScenarioSpec {
            name: format!("timing_p{p}_n{n}"),
            sigma: timing_sigma_spec(p, 0.5),
            n,
            q: 2,
            n_true_signals: p / 5,
            effect_size: 0.3,
            n_replications: replications,
            alpha: DEFAULT_ALPHA,
            master_seed: seed,
            truth_seed: None,
            methods: methods.to_vec(),
            svd_factors: None,
            lambda_grid: default_lambda_grid(),
        };
        let fixture = ScenarioFixture::new(&spec)?;
        let mut secs: Vec<Vec<f64>> = vec![vec![]; methods.len()];
        let mut failures = vec![0; methods.len()];
        for r in 0..replications {
            let ds = fixture.dataset(r)?;
            for (slot, o) in run_methods(&ds, &spec).into_iter().enumerate() {
                if o.result.is_ok() {
                    secs[slot].push(o.seconds);
                } else {
                    failures[slot] += 1;
                }
            }
        }
        for (slot, &method) in methods.iter().enumerate() {
            let s = &secs[slot];
            let mean = if s.is_empty() {
                f64::NAN
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            };
            let sd = if s.len() > 1 {
                (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            cells.push(TimingCell {
                p,
                n,
                method,
                replications,
                failures: failures[slot],
                mean_seconds: mean,
                sd_seconds: sd,
            });
        }
    }
    Ok(cells)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(CoregError::Parameter("slope needs at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(CoregError::Parameter("log-log slope needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CoregError::Parameter("x values are all equal".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [100.0, 200.0, 400.0, 800.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&xs[..1], &ys[..1]).is_err());
    }

    #[test]
    fn scaled_spec_sizes() {
        let s = timing_sigma_spec(200, 0.5);
        assert_eq!(s.p(), 200);
        assert_eq!(s.block_sizes, vec![40, 40, 40]);
        assert_eq!(timing_sigma_spec(3, 1.0).p(), 3);
    }

    #[test]
    fn small_grid_runs() {
        let cells = timing_grid(
            TimingAxis::Variables,
            &[40, 60],
            50,
            1,
            &[Method::CoReg, Method::Ols],
            1,
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.failures == 0 && c.mean_seconds >= 0.0));
    }
}
