use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use conceptkit::attribution::{attribute_batch, CatConfig, CatMethod};
use conceptkit::extraction::{extract as fit, ExtractionConfig};
use conceptkit::faithfulness::{
    evaluate_faithfulness, verify_last_layer_optimality, FaithfulnessMetric, FaithfulnessReport, FidelityCurve,
    MuFidelityConfig, VerificationReport,
};
use conceptkit::io::{load_head, read_json, read_matrix, to_canonical_json, write_json, write_matrix};
use conceptkit::metrics::{evaluate_extraction, ExtractionReport, MetricsConfig, DEFAULT_FOLDS, DEFAULT_KNN};
use conceptkit::strategy::{
    build_cluster_graph, cluster_graph_svg, curves_svg, predict_classes, strategy_report, ClusterGraph, EmbedConfig,
    StrategyReport, DEFAULT_NEIGHBORS,
};
use conceptkit::{ActivationMatrix, ConceptDictionary, ExtractionMethod, Head, Loadings, Matrix};

use crate::config::Layered;
use crate::error::{CliError, CliResult};
use crate::labels::read_class_labels;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| conceptkit::Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| conceptkit::Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = conceptkit::Error>>(text: &str) -> CliResult<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>())
        .collect::<Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(CliError::usage(format!("empty list '{text}'")));
    }
    Ok(items)
}

/// Written next to `U.npy` and `V.npy` by `extract`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractMeta {
    pub method: ExtractionMethod,
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub version: String,
    pub samples: usize,
    pub dim: usize,
    pub center: bool,
    pub final_objective: Option<f64>,
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Activations, samples × features.
    #[arg(long)]
    activations: PathBuf,
    #[arg(long)]
    method: Option<ExtractionMethod>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Center the data before PCA.
    #[arg(long)]
    center: bool,
    /// JSON settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

pub fn extract(args: ExtractArgs) -> CliResult<()> {
    let mut layered = Layered::from_file(args.config.as_deref())?;
    layered
        .set("method", args.method.map(|m| m.as_str()))
        .set("k", args.k)
        .set("seed", args.seed)
        .set("center", args.center.then_some(true))
        .or_default("seed", 0);
    layered.require(&["method", "k"])?;
    let config: ExtractionConfig = layered.build()?;
    let a = ActivationMatrix::new(read_matrix::<f64>(&args.activations)?)?;
    info!("fitting {} with k = {} on {}×{}", config.method, config.k, a.samples(), a.dim());
    let fitted = fit(&a, &config)?;
    create_dir(&args.out)?;
    write_matrix(args.out.join("U.npy"), fitted.loadings.values())?;
    write_matrix(args.out.join("V.npy"), fitted.dictionary.vectors())?;
    let meta = ExtractMeta {
        method: config.method,
        k: config.k,
        seed: config.seed,
        iterations: fitted.iterations,
        version: VERSION.to_string(),
        samples: a.samples(),
        dim: a.dim(),
        center: config.center,
        final_objective: fitted.objective_trace.last().copied(),
    };
    write_json(args.out.join("meta.json"), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct EvalExtractionArgs {
    /// One activation file per class; repeat the flag for several classes.
    #[arg(long, required = true, num_args = 1..)]
    activations: Vec<PathBuf>,
    /// Comma-separated extraction methods.
    #[arg(long, default_value = "kmeans,pca,nmf")]
    method: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Neighbour rank for the OOD score.
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    center: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClassReport {
    pub class: String,
    #[serde(flatten)]
    pub report: ExtractionReport,
}

/// Per-method means over classes.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MethodSummary {
    pub method: ExtractionMethod,
    pub classes: usize,
    pub relative_l2: f64,
    pub sparsity: f64,
    pub stability: f64,
    pub fid: f64,
    pub ood: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractionSummary {
    pub version: String,
    pub summary: Vec<MethodSummary>,
    pub reports: Vec<ClassReport>,
}

fn summarize_method(method: ExtractionMethod, reports: &[&ExtractionReport]) -> MethodSummary {
    let n = reports.len() as f64;
    let mean = |f: fn(&ExtractionReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    MethodSummary {
        method,
        classes: reports.len(),
        relative_l2: mean(|r| r.relative_l2),
        sparsity: mean(|r| r.sparsity),
        stability: mean(|r| r.stability),
        fid: mean(|r| r.fid),
        ood: mean(|r| r.ood),
    }
}

fn class_name(path: &Path, index: usize) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("class-{index}"))
}

pub fn eval_extraction(args: EvalExtractionArgs) -> CliResult<()> {
    let methods: Vec<ExtractionMethod> = parse_list(&args.method)?;
    let mut base = Layered::from_file(args.config.as_deref())?;
    base.set("k", args.k)
        .set("seed", args.seed)
        .set("folds", args.folds)
        .set("knn", args.knn)
        .set("center", args.center.then_some(true))
        .or_default("seed", 0)
        .or_default("folds", DEFAULT_FOLDS)
        .or_default("knn", DEFAULT_KNN);
    base.require(&["k"])?;
    let mut reports = Vec::new();
    for (index, path) in args.activations.iter().enumerate() {
        let a = ActivationMatrix::new(read_matrix::<f64>(path)?)?;
        for &method in &methods {
            let mut layered = base.clone();
            layered.set("method", Some(method.as_str()));
            let config: MetricsConfig = layered.build()?;
            info!("evaluating {method} on {}", path.display());
            reports.push(ClassReport {
                class: class_name(path, index),
                report: evaluate_extraction(&a, &config)?,
            });
        }
    }
    let summary = methods
        .iter()
        .map(|&m| {
            let of_method: Vec<&ExtractionReport> = reports
                .iter()
                .map(|r| &r.report)
                .filter(|r| r.config.extraction.method == m)
                .collect();
            summarize_method(m, &of_method)
        })
        .collect();
    write_json(
        &args.out,
        &ExtractionSummary {
            version: VERSION.to_string(),
            summary,
            reports,
        },
    )?;
    Ok(())
}

/// Inputs shared by the commands that evaluate a head on reconstructions.
#[derive(Args)]
pub struct ModelArgs {
    /// Loadings, samples × concepts.
    #[arg(long)]
    u: PathBuf,
    /// Dictionary, features × concepts.
    #[arg(long)]
    v: PathBuf,
    /// Head description (affine, stack or external).
    #[arg(long)]
    head: PathBuf,
    /// Family the dictionary was fitted with; read from meta.json beside the
    /// dictionary when omitted.
    #[arg(long)]
    dictionary_method: Option<ExtractionMethod>,
}

struct Model {
    loadings: Loadings<f64>,
    dictionary: ConceptDictionary<f64>,
    head: Head<f64>,
}

impl ModelArgs {
    fn dictionary_method(&self) -> CliResult<ExtractionMethod> {
        if let Some(m) = self.dictionary_method {
            return Ok(m);
        }
        let meta = self.v.parent().unwrap_or(Path::new(".")).join("meta.json");
        if meta.is_file() {
            return Ok(read_json::<ExtractMeta>(&meta)?.method);
        }
        // K-Means places no constraint on the dictionary
        info!("no meta.json beside {}; treating the dictionary as unconstrained", self.v.display());
        Ok(ExtractionMethod::KMeans)
    }

    fn load(&self) -> CliResult<Model> {
        let loadings = Loadings::new(read_matrix::<f64>(&self.u)?);
        let dictionary = ConceptDictionary::new(read_matrix::<f64>(&self.v)?, self.dictionary_method()?)?;
        if loadings.k() != dictionary.k() {
            return Err(conceptkit::Error::Shape(format!(
                "{} has {} concepts, {} has {}",
                self.u.display(),
                loadings.k(),
                self.v.display(),
                dictionary.k()
            ))
            .into());
        }
        let head = load_head(&self.head, Some(dictionary.dim()))?;
        Ok(Model {
            loadings,
            dictionary,
            head,
        })
    }
}

#[derive(Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    method: Option<CatMethod>,
    #[arg(long)]
    seed: Option<u64>,
    /// Path points for integrated gradients, draws for SmoothGrad and VarGrad.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Sobol base designs.
    #[arg(long)]
    designs: Option<usize>,
    /// Masks for HSIC and RISE.
    #[arg(long)]
    mask_samples: Option<usize>,
    /// JSON estimator settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Importance matrix, samples × concepts. The settings used and the
    /// degenerate-row flags go to the same path with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

/// Sidecar of an importance matrix.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AttributeMeta {
    pub config: CatConfig,
    pub degenerate: Vec<bool>,
    pub version: String,
}

pub fn attribute(args: AttributeArgs) -> CliResult<()> {
    let mut layered = Layered::from_file(args.config.as_deref())?;
    layered
        .set("method", args.method.map(|m| m.as_str()))
        .set("seed", args.seed)
        .set("steps", args.steps)
        .set("noise", args.noise)
        .set("designs", args.designs)
        .set("mask-samples", args.mask_samples);
    layered.require(&["method"])?;
    let config: CatConfig = layered.build()?;
    let model = args.model.load()?;
    info!("attributing {} samples with {}", model.loadings.samples(), config.method);
    let phi = attribute_batch(&model.loadings, &model.dictionary, &model.head, &config)?;
    write_matrix(&args.out, phi.values())?;
    write_json(
        args.out.with_extension("json"),
        &AttributeMeta {
            config,
            degenerate: phi.degenerate().to_vec(),
            version: VERSION.to_string(),
        },
    )?;
    Ok(())
}

#[derive(Args)]
pub struct EvalCatsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory of importance matrices; each `<name>.npy` is evaluated
    /// under the method name `<name>`.
    #[arg(long)]
    phi_dir: PathBuf,
    /// Comma-separated subset of deletion, insertion, mufidelity.
    #[arg(long, default_value = "deletion,insertion,mufidelity")]
    metrics: String,
    /// Seed for the μFidelity subsets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    subsets: Option<usize>,
    /// Concepts removed per μFidelity subset; half of k when omitted.
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Mean deletion and insertion curves per method.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CurvesFile {
    pub version: String,
    pub samples: usize,
    pub k: usize,
    pub metrics: Vec<FaithfulnessMetric>,
    pub reports: Vec<FaithfulnessReport>,
}

fn importance_files(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| conceptkit::Error::File {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "npy"))
        .filter_map(|p| Some((p.file_stem()?.to_string_lossy().into_owned(), p)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("{}: no .npy importance files", dir.display())));
    }
    Ok(files)
}

fn mean_curves(reports: &[FaithfulnessReport]) -> Vec<FidelityCurve<f64>> {
    reports
        .iter()
        .flat_map(|r| {
            [&r.deletion, &r.insertion].into_iter().flatten().map(|s| FidelityCurve {
                metric: s.metric,
                method: Some(r.method.clone()),
                grid: s.grid.clone(),
                scores: s.mean_scores.clone(),
                auc: s.mean_auc,
            })
        })
        .collect()
}

pub fn eval_cats(args: EvalCatsArgs) -> CliResult<()> {
    let mut metrics: Vec<FaithfulnessMetric> = parse_list(&args.metrics)?;
    metrics.dedup();
    let model = args.model.load()?;
    let mu = MuFidelityConfig {
        subset_size: args.subset_size,
        subsets: args.subsets.unwrap_or(MuFidelityConfig::default().subsets),
        seed: args.seed,
    };
    let mut reports = Vec::new();
    for (method, path) in importance_files(&args.phi_dir)? {
        info!("evaluating {method}");
        let phi: Matrix<f64> = read_matrix(&path)?;
        reports.push(evaluate_faithfulness(
            &model.loadings,
            &model.dictionary,
            &model.head,
            &phi,
            &method,
            &metrics,
            &mu,
        )?);
    }
    if let Some(svg) = &args.svg {
        write_text(svg, &curves_svg(&mean_curves(&reports)))?;
    }
    write_json(
        &args.out,
        &CurvesFile {
            version: VERSION.to_string(),
            samples: model.loadings.samples(),
            k: model.dictionary.k(),
            metrics,
            reports,
        },
    )?;
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EmbedMethod {
    Pca2,
    SpectralKnn,
    External,
}

#[derive(Args)]
pub struct StrategyArgs {
    /// Importance matrix, samples × concepts.
    #[arg(long)]
    phi: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// True classes, NPY integer vector or CSV.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value = "pca2")]
    embed: EmbedMethod,
    /// Neighbours per sample for spectral-knn.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Seed for spectral-knn.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples × 2 coordinates for `--embed external`.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Comma-separated concept names, one per concept.
    #[arg(long)]
    concept_names: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StrategyFile {
    pub version: String,
    /// Fraction of samples predicted correctly.
    pub accuracy: f64,
    pub strategy: StrategyReport,
    pub graph: ClusterGraph,
}

fn embed_config(args: &StrategyArgs) -> CliResult<EmbedConfig> {
    Ok(match args.embed {
        EmbedMethod::Pca2 => EmbedConfig::Pca2,
        EmbedMethod::SpectralKnn => EmbedConfig::SpectralKnn {
            neighbors: args.neighbors,
            seed: args.seed,
        },
        EmbedMethod::External => {
            let path = args
                .coords
                .as_ref()
                .ok_or_else(|| CliError::usage("--embed external needs --coords"))?;
            let m: Matrix<f64> = read_matrix(path)?;
            if m.cols() != 2 {
                return Err(conceptkit::Error::Shape(format!("{}: coordinates must have 2 columns", path.display())).into());
            }
            EmbedConfig::External {
                coords: m.row_iter().map(|r| [r[0], r[1]]).collect(),
            }
        }
    })
}

pub fn strategy(args: StrategyArgs) -> CliResult<()> {
    let phi: Matrix<f64> = read_matrix(&args.phi)?;
    let model = args.model.load()?;
    let labels = read_class_labels(&args.labels)?;
    let embed = embed_config(&args)?;
    if phi.rows() != model.loadings.samples() || labels.len() != phi.rows() {
        return Err(conceptkit::Error::Shape(format!(
            "{} importance rows, {} loading rows, {} labels",
            phi.rows(),
            model.loadings.samples(),
            labels.len()
        ))
        .into());
    }
    let names = args
        .concept_names
        .as_deref()
        .map(|s| s.split(',').map(|n| n.trim().to_string()).collect());
    let predictions = predict_classes(&model.loadings, &model.dictionary, &model.head)?;
    let report = strategy_report(&phi, &predictions, &labels)?;
    let graph = build_cluster_graph(&phi, &report, &embed, names)?;
    if let Some(svg) = &args.svg {
        write_text(svg, &cluster_graph_svg(&graph))?;
    }
    let accuracy = report.correct.iter().filter(|&&c| c).count() as f64 / report.correct.len() as f64;
    write_json(
        &args.out,
        &StrategyFile {
            version: VERSION.to_string(),
            accuracy,
            strategy: report,
            graph,
        },
    )?;
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Concepts per instance, at most 7.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here; it always goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn failure(report: &VerificationReport) -> CliError {
    let detail = match &report.counterexample {
        Some(c) => format!(
            "trial {} {} ({}): expected {:e}, observed {:e}",
            c.trial, c.check, c.method, c.expected, c.observed
        ),
        None => "no counterexample recorded".into(),
    };
    CliError::Verification {
        failed: report.failed,
        trials: report.trials,
        detail,
    }
}

pub fn verify(args: VerifyArgs) -> CliResult<()> {
    let report = verify_last_layer_optimality(args.trials, args.k, args.seed)?;
    print!("{}", to_canonical_json(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(failure(&report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use conceptkit::faithfulness::FidelityMetric;

    #[test]
    fn lists_parse_and_reject() {
        let m: Vec<FaithfulnessMetric> = parse_list("deletion, mufidelity").unwrap();
        assert_eq!(m, vec![FaithfulnessMetric::Deletion, FaithfulnessMetric::MuFidelity]);
        assert!(parse_list::<FaithfulnessMetric>("deletion,area").is_err());
        assert!(parse_list::<ExtractionMethod>(" , ").is_err());
    }

    #[test]
    fn method_summary_is_the_mean() {
        let config = MetricsConfig::new(ExtractionConfig::new(ExtractionMethod::Pca, 2, 0));
        let report = |x: f64| ExtractionReport {
            relative_l2: x,
            sparsity: 0.0,
            stability: 2.0 * x,
            fid: 0.0,
            ood: 1.0,
            config: config.clone(),
        };
        let (a, b) = (report(0.25), report(0.75));
        let s = summarize_method(ExtractionMethod::Pca, &[&a, &b]);
        assert_eq!((s.classes, s.relative_l2, s.stability, s.ood), (2, 0.5, 1.0, 1.0));
    }

    #[test]
    fn mean_curves_carry_method_names() {
        let reports = vec![FaithfulnessReport {
            method: "rise".into(),
            samples: 1,
            k: 1,
            deletion: Some(conceptkit::faithfulness::CurveSummary {
                metric: FidelityMetric::Deletion,
                grid: vec![0, 1],
                mean_scores: vec![1.0, 0.0],
                mean_auc: 0.5,
                auc: vec![0.5],
            }),
            insertion: None,
            mu_fidelity: None,
        }];
        let curves = mean_curves(&reports);
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].method.as_deref(), Some("rise"));
    }
}
