//! End-to-end orchestration: resolve a configuration, run
//! load -> PCA -> two views -> per-view graphs and self-expression ->
//! attention fusion -> spectral clustering -> metrics, and write the
//! artifacts (`labels.pgm`, `affinity.pgm`, `metrics.txt`, `run.txt`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::clustering::{spectral_cluster, ClusterAssignment};
use crate::error::{Error, Result};
use crate::fusion::{attention_forward, fuse, train_attention, AttentionWeights};
use crate::graph::{knn_adjacency, normalize_adjacency, NormalizedAdjacency};
use crate::hsi_io::{
    load_cube, load_labels, select_samples, write_affinity_heatmap, write_cube,
    write_label_image, write_labels_raw, write_metrics_report, LabelMap,
};
use crate::metrics::{best_map, kappa, nmi, overall_accuracy};
use crate::preprocess::{
    emp_features, extract_patches, minmax_scale_columns, pca_fit_transform, FeatureMatrix,
};
use crate::subspace::{build_affinity, reconstruction_residual, solve_self_expression};
use crate::synth::gen_synthetic_hsi;

/// How per-view affinities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Trained per-sample attention weights.
    Attention,
    /// Fixed 1/sqrt(p) weights, no training.
    Uniform,
}

impl FusionMode {
    fn as_str(self) -> &'static str {
        match self {
            FusionMode::Attention => "attention",
            FusionMode::Uniform => "uniform",
        }
    }
}

/// Rows `[row_start, row_end)`, cols `[col_start, col_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

/// Fully resolved pipeline parameters. Defaults follow the Indian Pines
/// preset except for `clusters`, which has no sensible default.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cube_path: PathBuf,
    pub labels_path: PathBuf,
    pub crop: Option<CropRect>,
    /// PCA target dimension d.
    pub pca_dims: usize,
    /// Sliding-window size s (odd).
    pub patch_size: usize,
    /// Disk radii of the morphological profile.
    pub emp_radii: Vec<usize>,
    /// KNN neighbor count.
    pub knn: usize,
    /// Self-expression regularization.
    pub lambda: f64,
    /// Propagation hops m.
    pub hops: usize,
    pub zero_diag: bool,
    pub fusion: FusionMode,
    pub fusion_epochs: usize,
    pub fusion_step: f64,
    pub clusters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// When set, the run fails if PCA explains less variance than this.
    pub min_explained_variance: Option<f64>,
    /// Ablation: spatial-spectral view only, uniform fusion.
    pub single_view: bool,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cube_path: PathBuf::new(),
            labels_path: PathBuf::new(),
            crop: None,
            pca_dims: 4,
            patch_size: 13,
            emp_radii: vec![1, 2, 3, 4],
            knn: 30,
            lambda: 100.0,
            hops: 1,
            zero_diag: true,
            fusion: FusionMode::Attention,
            fusion_epochs: 50,
            fusion_step: 1e-3,
            clusters: 0,
            restarts: 10,
            seed: 0,
            min_explained_variance: None,
            single_view: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Apply one of the named hyperparameter presets.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let (s, k, lambda, clusters) = match name {
            "indian" => (13, 30, 100.0, 4),
            "pavia" => (11, 30, 1000.0, 8),
            "houston" => (11, 25, 1000.0, 12),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown preset {other:?} (expected indian, pavia or houston)"
                )))
            }
        };
        self.patch_size = s;
        self.knn = k;
        self.lambda = lambda;
        self.clusters = clusters;
        self.pca_dims = 4;
        self.min_explained_variance = Some(0.96);
        Ok(())
    }

    /// Apply a single `key = value` setting.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::InvalidArgument(format!("config key {key}: invalid {what} {value:?}"))
        };
        match key {
            "cube" => self.cube_path = PathBuf::from(value),
            "labels" => self.labels_path = PathBuf::from(value),
            "out" => self.output_dir = PathBuf::from(value),
            "preset" => self.apply_preset(value)?,
            "crop" => {
                if value == "none" {
                    self.crop = None;
                } else {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| p.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("crop rectangle"))?;
                    if parts.len() != 4 {
                        return Err(bad("crop rectangle"));
                    }
                    self.crop = Some(CropRect {
                        row_start: parts[0],
                        row_end: parts[1],
                        col_start: parts[2],
                        col_end: parts[3],
                    });
                }
            }
            "d" => self.pca_dims = value.parse().map_err(|_| bad("integer"))?,
            "s" => self.patch_size = value.parse().map_err(|_| bad("integer"))?,
            "emp_radii" => {
                self.emp_radii = value
                    .split(',')
                    .map(|p| p.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("radii list"))?;
            }
            "k" => self.knn = value.parse().map_err(|_| bad("integer"))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad("number"))?,
            "hops" => self.hops = value.parse().map_err(|_| bad("integer"))?,
            "zero_diag" => self.zero_diag = value.parse().map_err(|_| bad("boolean"))?,
            "fusion" => {
                self.fusion = match value {
                    "attention" => FusionMode::Attention,
                    "uniform" => FusionMode::Uniform,
                    _ => return Err(bad("fusion mode")),
                }
            }
            "fusion_epochs" => self.fusion_epochs = value.parse().map_err(|_| bad("integer"))?,
            "fusion_step" => self.fusion_step = value.parse().map_err(|_| bad("number"))?,
            "clusters" => self.clusters = value.parse().map_err(|_| bad("integer"))?,
            "restarts" => self.restarts = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "min_explained_variance" => {
                self.min_explained_variance = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("number"))?)
                }
            }
            "single_view" => self.single_view = value.parse().map_err(|_| bad("boolean"))?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file body.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidArgument(format!(
                    "config line is not `key = value`: {line:?}"
                )));
            };
            config.apply_key(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Render the resolved configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cube = {}", self.cube_path.display());
        let _ = writeln!(out, "labels = {}", self.labels_path.display());
        match self.crop {
            None => {
                let _ = writeln!(out, "crop = none");
            }
            Some(c) => {
                let _ = writeln!(
                    out,
                    "crop = {},{},{},{}",
                    c.row_start, c.row_end, c.col_start, c.col_end
                );
            }
        }
        let _ = writeln!(out, "d = {}", self.pca_dims);
        let _ = writeln!(out, "s = {}", self.patch_size);
        let radii: Vec<String> = self.emp_radii.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "emp_radii = {}", radii.join(","));
        let _ = writeln!(out, "k = {}", self.knn);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "hops = {}", self.hops);
        let _ = writeln!(out, "zero_diag = {}", self.zero_diag);
        let _ = writeln!(out, "fusion = {}", self.fusion.as_str());
        let _ = writeln!(out, "fusion_epochs = {}", self.fusion_epochs);
        let _ = writeln!(out, "fusion_step = {}", self.fusion_step);
        let _ = writeln!(out, "clusters = {}", self.clusters);
        let _ = writeln!(out, "restarts = {}", self.restarts);
        let _ = writeln!(out, "seed = {}", self.seed);
        match self.min_explained_variance {
            None => {
                let _ = writeln!(out, "min_explained_variance = none");
            }
            Some(v) => {
                let _ = writeln!(out, "min_explained_variance = {v}");
            }
        }
        let _ = writeln!(out, "single_view = {}", self.single_view);
        let _ = writeln!(out, "out = {}", self.output_dir.display());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.cube_path.as_os_str().is_empty() || self.labels_path.as_os_str().is_empty() {
            return Err(Error::InvalidArgument(
                "cube and labels paths are required".into(),
            ));
        }
        if self.patch_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "patch size must be odd, got {}",
                self.patch_size
            )));
        }
        if self.knn == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.lambda <= 0.0 || self.lambda.is_nan() {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        if self.clusters < 2 {
            return Err(Error::InvalidArgument("clusters must be >= 2".into()));
        }
        if self.hops == 0 {
            return Err(Error::InvalidArgument("hops must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// What a finished run produced, for callers and tests.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub oa: f64,
    pub nmi: f64,
    pub kappa: f64,
    pub n_samples: usize,
    pub n_classes: usize,
    pub patch_dim: usize,
    pub emp_dim: usize,
    pub explained_variance: f64,
    pub view_residuals: Vec<f64>,
    pub attention_view_means: Vec<f64>,
    pub elapsed_seconds: f64,
    pub metrics_path: PathBuf,
    pub labels_path: PathBuf,
    pub affinity_path: PathBuf,
    pub run_report_path: PathBuf,
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| e.in_stage(name))
}

/// Propagation matrix raised to the configured hop count.
fn effective_propagation(normalized: &NormalizedAdjacency, hops: usize) -> NormalizedAdjacency {
    let mut matrix = normalized.matrix.clone();
    for _ in 1..hops {
        matrix = &matrix * &normalized.matrix;
    }
    NormalizedAdjacency { matrix }
}

struct ViewArtifacts {
    name: &'static str,
    features: FeatureMatrix,
    propagation: NormalizedAdjacency,
    affinity: crate::subspace::AffinityMatrix,
    residual: f64,
}

fn build_view(
    name: &'static str,
    features: FeatureMatrix,
    config: &PipelineConfig,
) -> Result<ViewArtifacts> {
    let features = minmax_scale_columns(&features);
    let adjacency = stage("knn", knn_adjacency(&features, config.knn))?;
    let propagation = effective_propagation(&normalize_adjacency(&adjacency), config.hops);
    let coefficients = stage(
        "solve",
        solve_self_expression(&features, &propagation, config.lambda, config.zero_diag),
    )?;
    let residual = reconstruction_residual(&features, &propagation, &coefficients);
    let affinity = build_affinity(&coefficients);
    Ok(ViewArtifacts {
        name,
        features,
        propagation,
        affinity,
        residual,
    })
}

/// Run the full pipeline and write artifacts into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    let started = Instant::now();
    config.validate()?;

    let cube = stage("load_cube", load_cube(&config.cube_path))?;
    let labels = stage(
        "load_labels",
        load_labels(&config.labels_path, cube.rows, cube.cols),
    )?;
    let (cube, labels) = match config.crop {
        None => (cube, labels),
        Some(c) => (
            stage(
                "crop",
                cube.crop(c.row_start, c.row_end, c.col_start, c.col_end),
            )?,
            stage(
                "crop",
                labels.crop(c.row_start, c.row_end, c.col_start, c.col_end),
            )?,
        ),
    };
    let index = stage("select_samples", select_samples(&labels))?;
    if config.clusters > index.len() {
        return Err(Error::InvalidArgument(format!(
            "clusters = {} exceeds the {} labeled samples",
            config.clusters,
            index.len()
        ))
        .in_stage("select_samples"));
    }

    let (reduced, pca) = stage("pca", pca_fit_transform(&cube, config.pca_dims))?;
    let explained = pca.explained_variance_ratio();
    if let Some(min) = config.min_explained_variance {
        if explained < min {
            return Err(Error::InvalidArgument(format!(
                "PCA with d = {} explains {explained:.4} of the variance, below the required {min}",
                config.pca_dims
            ))
            .in_stage("pca"));
        }
    }

    let patch_features = stage(
        "patch_view",
        extract_patches(&reduced, config.patch_size, &index),
    )?;
    let patch_dim = patch_features.dim();
    let spatial = build_view("spatial_spectral", patch_features, config)?;

    let mut views: Vec<ViewArtifacts> = Vec::new();
    let mut emp_dim = 0;
    if !config.single_view {
        let emp = stage("emp_view", emp_features(&reduced, &config.emp_radii, &index))?;
        emp_dim = emp.dim();
        views.push(build_view("emp", emp, config)?);
    }
    views.push(spatial);

    let affinities: Vec<_> = views.iter().map(|v| v.affinity.clone()).collect();
    let attention = match (config.fusion, config.single_view) {
        (FusionMode::Uniform, _) | (_, true) => {
            AttentionWeights::uniform(index.len(), affinities.len())
        }
        (FusionMode::Attention, false) => {
            let features: Vec<FeatureMatrix> = views.iter().map(|v| v.features.clone()).collect();
            let propagations: Vec<NormalizedAdjacency> =
                views.iter().map(|v| v.propagation.clone()).collect();
            let trained = stage(
                "attention",
                train_attention(
                    &affinities,
                    &features,
                    &propagations,
                    config.lambda,
                    config.fusion_epochs,
                    config.fusion_step,
                    config.seed,
                ),
            )?;
            stage("attention", attention_forward(&affinities, &trained.params))?
        }
    };
    let fused = stage("fuse", fuse(&affinities, &attention))?;

    let assignment = stage(
        "spectral_cluster",
        spectral_cluster(&fused, config.clusters, config.restarts, config.seed),
    )?;

    let (mapped, _) = stage("metrics", best_map(&assignment.labels, &index.truth))?;
    let oa = stage("metrics", overall_accuracy(&mapped, &index.truth))?;
    let nmi_value = stage("metrics", nmi(&assignment.labels, &index.truth))?;
    let kappa_value = stage("metrics", kappa(&mapped, &index.truth))?;

    std::fs::create_dir_all(&config.output_dir).map_err(|source| Error::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let labels_out = config.output_dir.join("labels.pgm");
    let affinity_out = config.output_dir.join("affinity.pgm");
    let metrics_out = config.output_dir.join("metrics.txt");
    let run_out = config.output_dir.join("run.txt");

    let mapped_k = mapped.iter().max().unwrap() + 1;
    let mapped_assignment = ClusterAssignment::new(mapped, mapped_k.max(index.n_classes))?;
    stage(
        "write_outputs",
        write_label_image(&mapped_assignment, &index, labels.rows, labels.cols, &labels_out),
    )?;

    // Heatmap samples ordered by true class, ties by pixel order.
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by_key(|&i| (index.truth[i], i));
    stage(
        "write_outputs",
        write_affinity_heatmap(&fused, &order, &affinity_out),
    )?;
    stage(
        "write_outputs",
        write_metrics_report(oa, nmi_value, kappa_value, &metrics_out),
    )?;

    let elapsed = started.elapsed().as_secs_f64();
    let summary = RunSummary {
        oa,
        nmi: nmi_value,
        kappa: kappa_value,
        n_samples: index.len(),
        n_classes: index.n_classes,
        patch_dim,
        emp_dim,
        explained_variance: explained,
        view_residuals: views.iter().map(|v| v.residual).collect(),
        attention_view_means: attention.view_means(),
        elapsed_seconds: elapsed,
        metrics_path: metrics_out,
        labels_path: labels_out,
        affinity_path: affinity_out,
        run_report_path: run_out.clone(),
    };

    let mut report = config.to_text();
    let _ = writeln!(report, "rows = {}", labels.rows);
    let _ = writeln!(report, "cols = {}", labels.cols);
    let _ = writeln!(report, "bands = {}", cube.bands);
    let _ = writeln!(report, "samples = {}", summary.n_samples);
    let _ = writeln!(report, "classes = {}", summary.n_classes);
    let _ = writeln!(report, "explained_variance = {:.6}", explained);
    let _ = writeln!(report, "patch_dim = {patch_dim}");
    if !config.single_view {
        let _ = writeln!(report, "emp_dim = {emp_dim}");
    }
    for (v, view) in views.iter().enumerate() {
        let _ = writeln!(report, "view{v} = {}", view.name);
        let _ = writeln!(report, "view{v}_residual = {:.6}", view.residual);
    }
    for (v, mean) in summary.attention_view_means.iter().enumerate() {
        let _ = writeln!(report, "attention_mean_view{v} = {mean:.6}");
    }
    let _ = writeln!(report, "oa = {oa:.4}");
    let _ = writeln!(report, "nmi = {nmi_value:.4}");
    let _ = writeln!(report, "kappa = {kappa_value:.4}");
    let _ = writeln!(report, "elapsed_seconds = {elapsed:.3}");
    std::fs::write(&run_out, report).map_err(|source| Error::Io {
        path: run_out,
        source,
    })?;

    Ok(summary)
}

/// Files produced by [`generate_dataset`].
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub cube_header: PathBuf,
    pub labels: PathBuf,
}

/// Generate a stripes cube and persist it in the on-disk formats, so a
/// `run` can consume it.
pub fn generate_dataset(
    rows: usize,
    cols: usize,
    k: usize,
    bands: usize,
    sigma: f64,
    seed: u64,
    out_prefix: &Path,
) -> Result<GeneratedDataset> {
    let (cube, labels) = gen_synthetic_hsi(rows, cols, k, bands, sigma, seed)?;
    if let Some(parent) = out_prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let cube_header = out_prefix.with_extension("hdr");
    let labels_path = PathBuf::from(format!("{}_labels.i32", out_prefix.display()));
    write_cube(&cube, &cube_header)?;
    write_labels_raw(&labels, &labels_path)?;
    Ok(GeneratedDataset {
        cube_header,
        labels: labels_path,
    })
}

/// Score a predicted label map against ground truth over the truth's
/// labeled pixels. Predicted values are re-coded densely, so gray-level
/// cluster maps written by [`write_label_image`] evaluate directly.
pub fn evaluate_label_maps(pred: &LabelMap, truth: &LabelMap) -> Result<(f64, f64, f64)> {
    if pred.rows != truth.rows || pred.cols != truth.cols {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.rows, pred.cols, truth.rows, truth.cols
        )));
    }
    let index = select_samples(truth)?;
    let mut distinct: Vec<u32> = index.pixel_ids.iter().map(|&p| pred.labels[p]).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let pred_labels: Vec<usize> = index
        .pixel_ids
        .iter()
        .map(|&p| distinct.binary_search(&pred.labels[p]).expect("value present"))
        .collect();
    let (mapped, _) = best_map(&pred_labels, &index.truth)?;
    Ok((
        overall_accuracy(&mapped, &index.truth)?,
        nmi(&pred_labels, &index.truth)?,
        kappa(&mapped, &index.truth)?,
    ))
}

/// Convenience wrapper used by tests and the ablation comparison: run both
/// the full pipeline and the single-view ablation on the same inputs.
pub fn run_with_ablation(config: &PipelineConfig) -> Result<(RunSummary, RunSummary)> {
    let full = run_pipeline(config)?;
    let mut ablation = config.clone();
    ablation.single_view = true;
    ablation.fusion = FusionMode::Uniform;
    ablation.output_dir = config.output_dir.join("single_view");
    let single = run_pipeline(&ablation)?;
    Ok((full, single))
}
