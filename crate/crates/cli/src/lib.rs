//! Command-line front end for `coda-alpha`.
//!
//! Every subcommand reads one CSV file, assigns columns with a role
//! specification (see [`data`]), writes its artifacts atomically into the
//! output directory and prints a one-line summary. Failures print a single
//! structured line and map to exit code 2 (configuration), 3 (data) or
//! 4 (numerical failure).

pub mod data;
pub mod error;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use coda_alpha::alpha_reg::{
    default_alpha_grid, fit_alpha_regression, fit_alr_regression, predict as predict_composition,
    select_alpha_by_kl, select_alpha_by_profile, AlphaRegModel, AlphaSelection, DesignMatrix,
};
use coda_alpha::pcr::{
    adjusted_r2, cross_validate, pcr_fit, pcr_predict, standardized_residuals, CvReport, Factor,
    PcrModel,
};
use coda_alpha::simplex::transform_batch;
use coda_alpha::zero_impute::{em_impute, ImputeConfig, ImputeResult};
use coda_alpha::{AlphaParam, CompositionBatch};
use serde::{Deserialize, Serialize};

pub use data::{load_csv, Dataset, RoleSpec};
pub use error::{CliError, ErrorClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Alpha-transform (ilr at alpha 0) the composition.
    Transform,
    /// Replace zeros by EM imputation.
    Impute,
    /// Additive log-ratio regression of the composition on covariates.
    Alrreg,
    /// Alpha-regression of the composition on covariates.
    Alphareg,
    /// Choose alpha over a grid by Kullback-Leibler or profile likelihood.
    SelectAlpha,
    /// Principal component regression of a response on the composition.
    Pcr,
    /// Cross-validate principal component regression over (alpha, k).
    PcrCv,
    /// Apply a saved model to new data.
    Predict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    /// Twice the Kullback-Leibler divergence of fitted from observed (minimised).
    Kl,
    /// Profile log-likelihood including the Jacobian (maximised; zero-free data only).
    Profile,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "coda",
    version,
    about = "Compositional data analysis with the alpha-transformation"
)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Input CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column roles, e.g. `RI=response,Na:Fe=part,type=factor`.
    #[arg(long)]
    pub roles: String,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Alpha grid `lo:hi:step`.
    #[arg(long = "alpha-grid", allow_hyphen_values = true)]
    pub alpha_grid: Option<String>,
    /// Number of principal components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Inclusive range of component counts `lo:hi`.
    #[arg(long = "k-grid")]
    pub k_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Part used as the divisor of the additive log-ratio (default: the last).
    #[arg(long)]
    pub divisor: Option<String>,
    /// Reference level of the factor (default: the last in sorted order).
    #[arg(long)]
    pub reference: Option<String>,
    /// Replace zeros by EM imputation before analysis.
    #[arg(long)]
    pub impute: bool,
    #[arg(long, value_enum, default_value = "kl")]
    pub criterion: Criterion,
    /// Model JSON written by a previous run (for `predict`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long)]
    pub out: PathBuf,
}

/// A fitted model as stored in `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum SavedModel {
    Pcr(PcrModel),
    Regression(AlphaRegModel),
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("cannot serialise model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid model file: {e}")))
    }
}

/// Outcome of a successful run, printed as one line.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub command: Command,
    pub fields: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self
            .command
            .to_possible_value()
            .expect("no skipped variants");
        write!(f, "ok command={}", name.get_name())?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        let files: Vec<String> = self
            .artifacts
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        write!(f, " artifacts={}", files.join(","))
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Output goes to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::Config(first.to_string()).structured_line());
            return ErrorClass::Config.exit_code();
        }
    };
    match run(&config) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.structured_line());
            e.class().exit_code()
        }
    }
}

/// Executes one subcommand.
pub fn run(config: &RunConfig) -> Result<Summary, CliError> {
    let roles = RoleSpec::parse(&config.roles)?;
    // validate flags before touching the data
    let alpha = config.alpha.map(AlphaParam::new).transpose()?;
    let alpha_grid = config
        .alpha_grid
        .as_deref()
        .map(parse_alpha_grid)
        .transpose()?;
    let k_grid = config.k_grid.as_deref().map(parse_k_grid).transpose()?;

    let mut dataset = load_csv(&config.input, &roles)?;
    let mut imputation = None;
    if config.impute && config.command != Command::Impute {
        let result = em_impute(&dataset.composition, &ImputeConfig::default())?;
        dataset.composition = result.batch.clone();
        imputation = Some(result);
    }
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(config.out.display(), e))?;
    let mut out = Output::new(&config.out, config.command);
    out.field("n", dataset.n());
    out.field("D", dataset.composition.dim());
    if let Some(imp) = &imputation {
        out.field("imputed_cells", imp.changed_cells.len());
        out.field("em_iterations", imp.iterations);
    }

    match config.command {
        Command::Transform => {
            let alpha = require(alpha, "--alpha")?;
            let t = transform_batch(&dataset.composition, alpha)?;
            let header: Vec<String> = (1..=t.coords.ncols()).map(|j| format!("z{j}")).collect();
            let rows = t
                .coords
                .row_iter()
                .map(|r| r.iter().map(|v| num(*v)).collect())
                .collect();
            out.csv("transformed.csv", &header, rows)?;
            out.field("alpha", alpha.value());
        }
        Command::Impute => {
            let result = em_impute(&dataset.composition, &ImputeConfig::default())?;
            write_batch(&mut out, "imputed.csv", &result.batch)?;
            out.json("impute_report.json", &ImputeReport::from(&result))?;
            out.field("imputed_cells", result.changed_cells.len());
            out.field("em_iterations", result.iterations);
            out.field("converged", result.converged);
        }
        Command::Alrreg => {
            let design = design_of(&dataset)?;
            let labels = dataset.composition.labels();
            let divisor = match &config.divisor {
                None => labels.len() - 1,
                Some(name) => labels.iter().position(|l| l == name).ok_or_else(|| {
                    CliError::Config(format!("divisor {name:?} is not a part column"))
                })?,
            };
            let model = fit_alr_regression(&dataset.composition, &design, divisor)?;
            regression_outputs(&mut out, &dataset.composition, &design, model)?;
        }
        Command::Alphareg => {
            let alpha = require(alpha, "--alpha")?;
            let design = design_of(&dataset)?;
            let model = fit_alpha_regression(&dataset.composition, &design, alpha)?;
            regression_outputs(&mut out, &dataset.composition, &design, model)?;
        }
        Command::SelectAlpha => {
            let design = design_of(&dataset)?;
            let grid =
                alpha_grid.unwrap_or_else(|| default_alpha_grid(dataset.composition.has_zero()));
            let selection = match config.criterion {
                Criterion::Kl => {
                    select_alpha_by_kl(&dataset.composition, &dataset.composition, &design, &grid)?
                }
                Criterion::Profile => {
                    select_alpha_by_profile(&dataset.composition, &design, &grid)?
                }
            };
            write_selection(&mut out, &selection)?;
            let model =
                fit_alpha_regression(&dataset.composition, &design, selection.chosen_alpha)?;
            regression_outputs(&mut out, &dataset.composition, &design, model)?;
        }
        Command::Pcr => {
            let alpha = require(alpha, "--alpha")?;
            let k = require(config.k, "--k")?;
            let (y, factor) = pcr_inputs(&dataset, config)?;
            let model = pcr_fit(y, &dataset.composition, alpha, k, factor.as_ref())?;
            pcr_outputs(&mut out, &dataset, y, model)?;
        }
        Command::PcrCv => {
            let alphas = match (alpha_grid, alpha) {
                (Some(g), _) => g,
                (None, Some(a)) => vec![a],
                (None, None) => {
                    return Err(CliError::Config(
                        "--alpha-grid or --alpha is required".into(),
                    ))
                }
            };
            let ks = match (k_grid, config.k) {
                (Some(g), _) => g,
                (None, Some(k)) => vec![k],
                (None, None) => return Err(CliError::Config("--k-grid or --k is required".into())),
            };
            let (y, factor) = pcr_inputs(&dataset, config)?;
            let strata = dataset.strata.as_ref().map(|(_, s)| s.as_slice());
            let report = cross_validate(
                y,
                &dataset.composition,
                &alphas,
                &ks,
                factor.as_ref(),
                strata,
                config.folds,
                config.seed,
            )?;
            write_cv(&mut out, &report)?;
            let best = report.chosen_cell();
            out.field("chosen_alpha", best.alpha);
            out.field("chosen_k", best.k);
            out.field("mspe", best.mean_mspe);
            let model = pcr_fit(
                y,
                &dataset.composition,
                AlphaParam::new(best.alpha)?,
                best.k,
                factor.as_ref(),
            )?;
            pcr_outputs(&mut out, &dataset, y, model)?;
        }
        Command::Predict => {
            let path = config
                .model
                .as_ref()
                .ok_or_else(|| CliError::Config("--model is required".into()))?;
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            match SavedModel::from_json(&text)? {
                SavedModel::Pcr(model) => {
                    let factor = dataset.factor.as_ref().map(|(_, f)| f.as_slice());
                    let pred = pcr_predict(&model, &dataset.composition, factor)?;
                    let rows = pred
                        .iter()
                        .enumerate()
                        .map(|(i, v)| vec![(i + 1).to_string(), num(*v)])
                        .collect();
                    out.csv("predictions.csv", &["row".into(), "predicted".into()], rows)?;
                }
                SavedModel::Regression(model) => {
                    let design = design_of(&dataset)?;
                    if design.covariate_names() != model.covariate_names.as_slice() {
                        return Err(CliError::Data(format!(
                            "covariates {:?} do not match the model's {:?}",
                            design.covariate_names(),
                            model.covariate_names
                        )));
                    }
                    let fitted = predict_composition(&model, &design)?;
                    let mut header = vec!["row".to_string()];
                    header.extend(model.component_labels.iter().cloned());
                    let rows = (0..fitted.n())
                        .map(|i| {
                            let mut r = vec![(i + 1).to_string()];
                            r.extend(fitted.row_vec(i).iter().map(|v| num(*v)));
                            r
                        })
                        .collect();
                    out.csv("predictions.csv", &header, rows)?;
                }
            }
        }
    }
    Ok(out.finish())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{flag} is required for this subcommand")))
}

/// Formats a float with the shortest representation that parses back exactly.
fn num(v: f64) -> String {
    format!("{v}")
}

/// Parses `lo:hi:step` into an inclusive grid of alpha values.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<AlphaParam>, CliError> {
    let bad = || CliError::Config(format!("alpha grid {spec:?} is not lo:hi:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|i| {
            // round away accumulated binary noise such as 0.30000000000000004
            let v = ((lo + i as f64 * step) * 1e10).round() / 1e10;
            AlphaParam::new(v).map_err(CliError::from)
        })
        .collect()
}

/// Parses `lo:hi` into an inclusive range of component counts.
pub fn parse_k_grid(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("k grid {spec:?} is not lo:hi"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let lo: usize = a.trim().parse().map_err(|_| bad())?;
    let hi: usize = b.trim().parse().map_err(|_| bad())?;
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn design_of(dataset: &Dataset) -> Result<DesignMatrix, CliError> {
    Ok(match &dataset.covariates {
        Some((names, values)) => DesignMatrix::new(values, names.clone())?,
        None => DesignMatrix::intercept_only(dataset.n()),
    })
}

fn pcr_inputs<'a>(
    dataset: &'a Dataset,
    config: &RunConfig,
) -> Result<(&'a [f64], Option<Factor>), CliError> {
    let (_, y) = dataset
        .response
        .as_ref()
        .ok_or_else(|| CliError::Config("a response column is required".into()))?;
    let factor = dataset
        .factor
        .as_ref()
        .map(|(_, labels)| Factor::new(labels.clone(), config.reference.clone()));
    if config.reference.is_some() && factor.is_none() {
        return Err(CliError::Config("--reference needs a factor column".into()));
    }
    Ok((y, factor))
}

#[derive(Serialize)]
struct ImputeReport {
    iterations: usize,
    converged: bool,
    ridge_applied: bool,
    changed_cells: Vec<coda_alpha::zero_impute::ChangedCell>,
}

impl From<&ImputeResult> for ImputeReport {
    fn from(r: &ImputeResult) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            ridge_applied: r.ridge_applied,
            changed_cells: r.changed_cells.clone(),
        }
    }
}

fn write_batch(out: &mut Output, name: &str, batch: &CompositionBatch) -> Result<(), CliError> {
    let rows = (0..batch.n())
        .map(|i| batch.row_vec(i).iter().map(|v| num(*v)).collect())
        .collect();
    out.csv(name, batch.labels(), rows)
}

fn regression_outputs(
    out: &mut Output,
    observed: &CompositionBatch,
    design: &DesignMatrix,
    model: AlphaRegModel,
) -> Result<(), CliError> {
    let fitted = predict_composition(&model, design)?;
    let labels = observed.labels();
    let mut header = vec!["row".to_string()];
    header.extend(labels.iter().map(|l| format!("observed_{l}")));
    header.extend(labels.iter().map(|l| format!("fitted_{l}")));
    let rows = (0..observed.n())
        .map(|i| {
            let mut r = vec![(i + 1).to_string()];
            r.extend(observed.row_vec(i).iter().map(|v| num(*v)));
            r.extend(fitted.row_vec(i).iter().map(|v| num(*v)));
            r
        })
        .collect();
    out.csv("observed_vs_fitted.csv", &header, rows)?;
    out.field("alpha", model.alpha());
    out.field("objective", model.objective_value);
    out.field("converged", model.converged);
    out.json("model.json", &SavedModel::Regression(model))
}

fn write_selection(out: &mut Output, selection: &AlphaSelection) -> Result<(), CliError> {
    let rows = selection
        .points
        .iter()
        .map(|p| {
            vec![
                num(p.alpha),
                p.value.map(num).unwrap_or_default(),
                p.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.csv(
        "criterion_curve.csv",
        &["alpha".into(), "criterion".into(), "error".into()],
        rows,
    )?;
    out.json("selection.json", selection)?;
    out.field("chosen_alpha", selection.chosen_alpha.value());
    out.field("criterion", selection.chosen_value);
    Ok(())
}

fn write_cv(out: &mut Output, report: &CvReport) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for cell in &report.cells {
        for (fold, mspe) in cell.fold_mspe.iter().enumerate() {
            rows.push(vec![
                num(cell.alpha),
                cell.k.to_string(),
                (fold + 1).to_string(),
                num(*mspe),
            ]);
        }
    }
    out.csv(
        "cv_report.csv",
        &["alpha".into(), "k".into(), "fold".into(), "mspe".into()],
        rows,
    )?;
    let summary = report
        .cells
        .iter()
        .map(|c| vec![num(c.alpha), c.k.to_string(), num(c.mean_mspe)])
        .collect();
    out.csv(
        "cv_summary.csv",
        &["alpha".into(), "k".into(), "mean_mspe".into()],
        summary,
    )
}

fn pcr_outputs(
    out: &mut Output,
    dataset: &Dataset,
    y: &[f64],
    model: PcrModel,
) -> Result<(), CliError> {
    let factor = dataset.factor.as_ref().map(|(_, f)| f.as_slice());
    let res = standardized_residuals(&model, y, &dataset.composition, factor)?;
    let r2 = adjusted_r2(y, &res.fitted, model.n_predictors())?;
    let rows = (0..y.len())
        .map(|i| vec![(i + 1).to_string(), num(y[i]), num(res.fitted[i])])
        .collect();
    out.csv(
        "observed_vs_fitted.csv",
        &["row".into(), "observed".into(), "fitted".into()],
        rows,
    )?;
    let rows = (0..y.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                num(res.fitted[i]),
                num(res.values[i]),
                num(res.leverages[i]),
                res.outliers[i].to_string(),
            ]
        })
        .collect();
    out.csv(
        "residuals.csv",
        &[
            "row".into(),
            "fitted".into(),
            "standardized_residual".into(),
            "leverage".into(),
            "outlier".into(),
        ],
        rows,
    )?;
    out.field("alpha", model.alpha());
    out.field("k", model.k);
    out.field("adj_r2", r2);
    out.field("outliers", res.outliers.iter().filter(|o| **o).count());
    out.json("model.json", &SavedModel::Pcr(model))
}

/// Collects summary fields and writes artifacts into the output directory.
struct Output {
    dir: PathBuf,
    summary: Summary,
}

impl Output {
    fn new(dir: &Path, command: Command) -> Self {
        Self {
            dir: dir.to_path_buf(),
            summary: Summary {
                command,
                fields: Vec::new(),
                artifacts: Vec::new(),
            },
        }
    }

    fn field(&mut self, key: &str, value: impl fmt::Display) {
        self.summary
            .fields
            .push((key.to_string(), value.to_string()));
    }

    fn csv(
        &mut self,
        name: &str,
        header: &[String],
        rows: Vec<Vec<String>>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Data(format!("cannot format {name}: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Data(format!("cannot format {name}: {e}")))?;
        self.write(name, &bytes)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Data(format!("cannot serialise {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place, so readers never observe a partial artifact.
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let io = |e: std::io::Error| CliError::io(target.display(), e);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        self.summary.artifacts.push(target);
        Ok(())
    }

    fn finish(self) -> Summary {
        self.summary
    }
}
