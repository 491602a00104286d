use std::collections::BTreeMap;
use std::path::Path;

use coreg_core::baselines::{ols_univariate_labelled, svd_factor_baseline_labelled};
use coreg_core::cfa::{select_lambda_on_graph, FactorModelReport, Selection};
use coreg_core::coexnet::{reorder_permutation, ExtractionConfig};
use coreg_core::numerics::to_correlation_isolating;
use coreg_core::{
    build_graph, fit_ols, run_coreg, sample_covariance, CoregConfig, DataMatrix, Design, InferenceResult,
    InferenceSummary, Method, SelectionConfig, SymmetricMatrix,
};
use serde::Serialize;

use crate::config::{FitConfig, Overrides};
use crate::csvio::{read_table, CsvBuf, NumericTable};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, OutDir};
use crate::svg::render_heatmap;

/// Response and design assembled from the input table.
#[derive(Debug)]
pub struct FitData {
    pub y: DataMatrix,
    pub design: Design,
    pub outcome_labels: Vec<String>,
    pub row_ids: Option<Vec<String>>,
}

pub fn load_data(c: &FitConfig) -> CliResult<FitData> {
    let table = read_table(&c.input, c.id_column.as_deref())?;
    assemble(&table, c)
}

fn assemble(table: &NumericTable, c: &FitConfig) -> CliResult<FitData> {
    let find = |name: &str| {
        table.column_index(name).ok_or_else(|| {
            CliError::input(
                &c.input,
                format!("column '{name}' not found; header has {:?}", table.columns),
            )
        })
    };
    let pred_idx: Vec<usize> = c.predictors.iter().map(|n| find(n)).collect::<CliResult<_>>()?;
    let outcome_idx: Vec<usize> = match &c.outcomes {
        Some(names) => names.iter().map(|n| find(n)).collect::<CliResult<_>>()?,
        None => (0..table.columns.len()).filter(|i| !pred_idx.contains(i)).collect(),
    };
    if let Some(&clash) = outcome_idx.iter().find(|i| pred_idx.contains(i)) {
        return Err(CliError::usage(format!(
            "column '{}' is listed both as predictor and outcome",
            table.columns[clash]
        )));
    }
    if outcome_idx.is_empty() {
        return Err(CliError::usage("no outcome columns"));
    }
    let core = |e| CliError::core("cannot build the model", e);
    let x = table.select_rows(&pred_idx);
    let design = if c.intercept {
        Design::with_intercept(x, c.predictors.clone()).map_err(core)?
    } else {
        Design::new(
            DataMatrix::variables_by_samples(x).map_err(core)?,
            c.predictors.clone(),
            false,
        )
        .map_err(core)?
    };
    let y = DataMatrix::variables_by_samples(table.select_rows(&outcome_idx)).map_err(core)?;
    Ok(FitData {
        y,
        design,
        outcome_labels: outcome_idx.iter().map(|&i| table.columns[i].clone()).collect(),
        row_ids: table.row_ids.clone(),
    })
}

fn coreg_config(c: &FitConfig) -> CoregConfig {
    let mut selection = SelectionConfig {
        grid: c.lambda_grid.clone(),
        extraction: ExtractionConfig {
            acceptance_threshold: c.acceptance_threshold,
        },
        ..SelectionConfig::default()
    };
    if let Some(l) = c.loadings {
        selection.loadings = l;
    }
    CoregConfig {
        selection,
        alpha: c.alpha,
    }
}

#[derive(Serialize)]
struct ModuleEntry {
    id: usize,
    size: usize,
    outcomes: Vec<String>,
}

#[derive(Serialize)]
struct ModulesJson {
    lambda_star: Option<f64>,
    #[serde(rename = "K")]
    k: usize,
    modules: Vec<ModuleEntry>,
    singletons: Vec<String>,
    /// True when no λ in the grid produced a module.
    no_structure: bool,
}

fn modules_json(sel: Option<&Selection>, labels: &[String]) -> ModulesJson {
    match sel {
        Some(s) => {
            let part = s.model.partition();
            ModulesJson {
                lambda_star: Some(s.lambda_star),
                k: part.k(),
                modules: part
                    .modules
                    .iter()
                    .enumerate()
                    .map(|(i, m)| ModuleEntry {
                        id: i + 1,
                        size: m.len(),
                        outcomes: m.iter().map(|&j| labels[j].clone()).collect(),
                    })
                    .collect(),
                singletons: part.singletons.iter().map(|&j| labels[j].clone()).collect(),
                no_structure: false,
            }
        }
        None => ModulesJson {
            lambda_star: None,
            k: 0,
            modules: vec![],
            singletons: labels.to_vec(),
            no_structure: true,
        },
    }
}

fn write_network(
    out: &mut OutDir,
    corr: &SymmetricMatrix,
    sel: Option<&Selection>,
    labels: &[String],
    row_ids: Option<&[String]>,
) -> CliResult<()> {
    out.write_json("modules.json", &modules_json(sel, labels))?;
    out.write_json(
        "factor_model.json",
        &sel.map(Selection::report) as &Option<FactorModelReport>,
    )?;
    if let Some(s) = sel {
        let f = s.model.scores.to_samples_by_variables().into_values();
        let mut header: Vec<String> = vec!["sample".into()];
        header.extend((1..=f.ncols()).map(|k| format!("F{k}")));
        let mut w = CsvBuf::new(&header);
        for r in 0..f.nrows() {
            let id = row_ids.map_or_else(|| (r + 1).to_string(), |ids| ids[r].clone());
            w.row(std::iter::once(id).chain(f.row(r).iter().map(|&v| fmt_f64(v))));
        }
        out.write("factors.csv", &w.finish())?;
    }
    out.write(
        "heatmap_residual_corr.svg",
        render_heatmap(corr, None, "residual correlation").as_bytes(),
    )?;
    let perm = sel.map(|s| reorder_permutation(s.model.partition()));
    out.write(
        "heatmap_reordered.svg",
        render_heatmap(corr, perm.as_deref(), "residual correlation, module order").as_bytes(),
    )?;
    Ok(())
}

pub fn inference_csv(res: &InferenceResult) -> Vec<u8> {
    let mut w = CsvBuf::new([
        "outcome",
        "predictor",
        "estimate",
        "std_error",
        "t_stat",
        "p_value",
        "adjusted_p",
        "rejected",
        "degenerate",
    ]);
    for r in &res.records {
        w.row([
            r.outcome_label.clone(),
            r.predictor_name.clone(),
            fmt_f64(r.estimate),
            fmt_f64(r.std_error),
            fmt_f64(r.t_stat),
            fmt_f64(r.p_value),
            fmt_f64(r.adjusted_p),
            r.rejected.to_string(),
            r.degenerate.to_string(),
        ]);
    }
    w.finish()
}

#[derive(Serialize)]
struct MethodSummary {
    #[serde(flatten)]
    inference: InferenceSummary,
    #[serde(rename = "K")]
    k: Option<usize>,
}

#[derive(Serialize)]
struct FitSummary {
    input: String,
    n_samples: usize,
    n_outcomes: usize,
    predictors: Vec<String>,
    intercept: bool,
    alpha: f64,
    lambda_grid: Vec<f64>,
    lambda_star: Option<f64>,
    #[serde(rename = "K")]
    k: usize,
    fell_back_to_ols: bool,
    methods: BTreeMap<String, MethodSummary>,
}

pub fn cmd_fit(config_path: &Path, ov: &Overrides, out_dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let c = FitConfig::load(config_path, ov)?;
    let data = load_data(&c)?;
    let labels = Some(data.outcome_labels.as_slice());
    let model_err = |what: &str| {
        let what = what.to_string();
        move |e| CliError::core(what, e)
    };

    let analysis = run_coreg(&data.y, &data.design, &coreg_config(&c), labels).map_err(model_err("CoReg"))?;
    let k = analysis.k();
    let mut results: Vec<(InferenceResult, Option<usize>)> = Vec::new();
    for &m in &c.methods {
        match m {
            Method::CoReg => results.push((analysis.inference.clone(), Some(k))),
            Method::Ols => results.push((
                ols_univariate_labelled(&data.y, &data.design, c.alpha, labels).map_err(model_err("OLS"))?,
                None,
            )),
            Method::SvdFactor => {
                let kf = c.svd_factors.unwrap_or(k);
                results.push((
                    svd_factor_baseline_labelled(&data.y, &data.design, kf, c.alpha, labels)
                        .map_err(model_err("SvdFactor"))?,
                    Some(kf),
                ));
            }
        }
    }

    let mut out = OutDir::create(out_dir)?;
    let mut methods = BTreeMap::new();
    for (res, kk) in &results {
        out.write(&format!("inference_{}.csv", res.method), &inference_csv(res))?;
        methods.insert(
            res.method.to_string(),
            MethodSummary {
                inference: res.summary(),
                k: *kk,
            },
        );
    }
    let sel = analysis.selection.as_ref();
    out.write_json(
        "summary.json",
        &FitSummary {
            input: c.input.display().to_string(),
            n_samples: data.design.n(),
            n_outcomes: data.outcome_labels.len(),
            predictors: data.design.predictor_names().to_vec(),
            intercept: c.intercept,
            alpha: c.alpha,
            lambda_grid: c.lambda_grid.clone(),
            lambda_star: sel.map(|s| s.lambda_star),
            k,
            fell_back_to_ols: analysis.fell_back_to_ols(),
            methods,
        },
    )?;
    write_network(
        &mut out,
        &analysis.residual_corr,
        sel,
        &data.outcome_labels,
        data.row_ids.as_deref(),
    )?;
    Ok(out.written().to_vec())
}

/// Step 1 and module extraction only; no inference.
pub fn cmd_network(config_path: &Path, ov: &Overrides, out_dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let c = FitConfig::load(config_path, ov)?;
    let data = load_data(&c)?;
    let err = |e| CliError::core("network", e);
    let step1 = fit_ols(&data.y, &data.design).map_err(err)?;
    let cov = sample_covariance(&step1.residuals).map_err(err)?;
    let (corr, _) = to_correlation_isolating(&cov);
    let graph = build_graph(&corr).map_err(err)?;
    let mut selection = coreg_config(&c).selection;
    selection.max_factors = Some(data.design.n().saturating_sub(data.design.q() + 1));
    let sel = match select_lambda_on_graph(&graph, &selection, &cov, &step1.residuals) {
        Ok(s) => Some(s),
        Err(coreg_core::CoregError::NoStructure) => None,
        Err(e) => return Err(err(e)),
    };
    let mut out = OutDir::create(out_dir)?;
    write_network(
        &mut out,
        &corr,
        sel.as_ref(),
        &data.outcome_labels,
        data.row_ids.as_deref(),
    )?;
    Ok(out.written().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvio::parse_table;

    fn config(outcomes: Option<Vec<String>>) -> FitConfig {
        crate::config::parse_json(r#"{"input": "in.csv", "predictors": ["x"], "id_column": "id"}"#, "t")
            .map(|mut c: FitConfig| {
                c.outcomes = outcomes;
                c
            })
            .unwrap()
    }

    #[test]
    fn outcomes_default_to_remaining_columns() {
        let t = parse_table(
            "id,x,a,b\ns1,1,2,3\ns2,2,1,0\ns3,0,5,1\ns4,3,3,3\n",
            Path::new("in.csv"),
            Some("id"),
        )
        .unwrap();
        let d = assemble(&t, &config(None)).unwrap();
        assert_eq!(d.outcome_labels, ["a", "b"]);
        assert_eq!(d.design.q(), 2);
        assert_eq!(d.y.n_variables(), 2);
    }

    #[test]
    fn overlapping_and_missing_columns() {
        let t = parse_table("x,a\n1,2\n2,1\n0,5\n", Path::new("in.csv"), None).unwrap();
        let mut c = config(Some(vec!["x".into()]));
        c.id_column = None;
        assert_eq!(assemble(&t, &c).unwrap_err().exit_code(), 2);
        c.outcomes = Some(vec!["zz".into()]);
        assert!(assemble(&t, &c).unwrap_err().to_string().contains("zz"));
    }
}
