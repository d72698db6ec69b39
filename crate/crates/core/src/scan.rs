//! Declarative parameter scans.
//!
//! A [`ScanConfig`] (one JSON document) fixes a grid over disorder strength,
//! system size and one mean parameter. [`run_scan`] runs an ensemble at every
//! grid point, derives the requested [`Products`] and writes them as CSV
//! next to `products.json` and `manifest.json`.
//!
//! CSV schemas (header row, columns in this order):
//!
//! | file | columns |
//! |------|---------|
//! | `chi_summary.csv` | `axis_value,sigma,L,chi_ave,chi_typ,R` |
//! | `gap_histogram.csv` | `sigma,L,axis_value,bin_center,bin_width,density` |
//! | `chi_histogram.csv` | `sigma,L,axis_value,bin_center,bin_width,density` (of `ln χ`) |
//! | `scaling_fit.csv` | `sigma,axis_value,statistic,exponent,exponent_stderr,intercept,r_squared` |
//! | `self_averaging.csv` | `sigma,axis_value,b,b_stderr,class` |
//! | `griffiths_extent.csv` | `sigma,L,found,lower,upper,width` |
//! | `collapse.csv` | `sigma,axis_value,form,alpha,beta,quality` |
//! | `collapse_ecdf.csv` | `sigma,axis_value,form,L,rescaled,ecdf` |
//!
//! Reals are written in scientific notation with 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    histogram, run_ensemble, summarize, ChiEstimator, EnsembleConfig, EnsembleSummary, Histogram, Normalization,
    DEFAULT_HISTOGRAM_BINS,
};
use crate::error::{Error, Result};
use crate::fidelity::ChiSteps;
use crate::model::{ChainSpec, Direction};
use crate::scaling::{
    fit_collapse, griffiths_extent, scaling_dimension, self_averaging_classify, shared_gap_histograms, CollapseKind,
    PowerLawFit, SelfAveragingClass, Statistic, MIN_COLLAPSE_SAMPLES,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PRODUCTS_FILE: &str = "products.json";
/// Present in the output directory until a run has finished writing.
pub const PARTIAL_MARKER: &str = "PARTIAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    MeanField,
    MeanAnisotropy,
}

impl ScanAxis {
    pub fn direction(self) -> Direction {
        match self {
            ScanAxis::MeanField => Direction::Field,
            ScanAxis::MeanAnisotropy => Direction::Anisotropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    ChiSummary,
    GapHistogram,
    ChiHistogram,
    ScalingFit,
    SelfAveraging,
    Collapse,
    GriffithsExtent,
}

impl ProductKind {
    pub fn needs_chi(self) -> bool {
        !matches!(self, ProductKind::GapHistogram | ProductKind::GriffithsExtent)
    }

    pub fn needs_gap(self) -> bool {
        !self.needs_chi()
    }

    pub fn needs_sizes(self) -> bool {
        matches!(self, ProductKind::ScalingFit | ProductKind::SelfAveraging | ProductKind::Collapse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    pub n_realizations: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Susceptibility direction; defaults to the scan axis.
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub estimator: ChiEstimator,
    #[serde(default)]
    pub chi_steps: Option<ChiSteps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSettings {
    /// Axis value to collapse at; the typical-χ peak of the largest size
    /// when absent.
    #[serde(default)]
    pub at: Option<f64>,
    #[serde(default = "all_collapse_kinds")]
    pub kinds: Vec<CollapseKind>,
}

impl Default for CollapseSettings {
    fn default() -> Self {
        Self { at: None, kinds: all_collapse_kinds() }
    }
}

fn all_collapse_kinds() -> Vec<CollapseKind> {
    vec![
        CollapseKind::PowerLaw,
        CollapseKind::StretchedExp,
        CollapseKind::Mixed,
        CollapseKind::Extensive,
    ]
}

fn default_sigmas() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4]
}

fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub scan_axis: ScanAxis,
    pub axis_values: Vec<f64>,
    /// Value of the mean parameter that is not scanned.
    pub fixed: f64,
    #[serde(default = "default_sigmas")]
    pub sigma_list: Vec<f64>,
    pub size_list: Vec<usize>,
    pub ensemble: EnsembleSettings,
    pub outputs: Vec<ProductKind>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub collapse: CollapseSettings,
}

impl ScanConfig {
    pub fn wants(&self, kind: ProductKind) -> bool {
        self.outputs.contains(&kind)
    }

    pub fn spec(&self, length: usize, axis_value: f64, sigma: f64) -> Result<ChainSpec> {
        match self.scan_axis {
            ScanAxis::MeanField => ChainSpec::new(length, axis_value, self.fixed, sigma),
            ScanAxis::MeanAnisotropy => ChainSpec::new(length, self.fixed, axis_value, sigma),
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        let direction = self.ensemble.direction.unwrap_or(self.scan_axis.direction());
        let mut cfg = EnsembleConfig::new(self.ensemble.n_realizations, self.ensemble.master_seed, direction);
        cfg.record_chi = self.outputs.iter().any(|k| k.needs_chi());
        cfg.record_gap = self.outputs.iter().any(|k| k.needs_gap());
        cfg.estimator = self.ensemble.estimator;
        cfg.chi_steps = self.ensemble.chi_steps;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis_values.is_empty() {
            return Err(Error::config("axis_values", "must not be empty"));
        }
        if let Some(i) = self.axis_values.iter().position(|x| !x.is_finite()) {
            return Err(Error::config(format!("axis_values[{i}]"), "must be finite"));
        }
        if let Some(i) = self.axis_values.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::config(format!("axis_values[{}]", i + 1), "must be strictly increasing"));
        }
        if !self.fixed.is_finite() {
            return Err(Error::config("fixed", "must be finite"));
        }
        if self.sigma_list.is_empty() {
            return Err(Error::config("sigma_list", "must not be empty"));
        }
        if let Some(i) = self.sigma_list.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config(format!("sigma_list[{i}]"), "must be finite and non-negative"));
        }
        let min_sizes = if self.outputs.iter().any(|k| k.needs_sizes()) { 3 } else { 1 };
        if self.size_list.len() < min_sizes {
            return Err(Error::config(
                "size_list",
                format!("{} entries given, the requested outputs need at least {min_sizes}", self.size_list.len()),
            ));
        }
        if let Some(i) = self.size_list.iter().position(|&l| l < 3) {
            return Err(Error::config(format!("size_list[{i}]"), "chains need at least 3 sites"));
        }
        if let Some(i) = self.size_list.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("size_list[{}]", i + 1), "must be strictly increasing"));
        }
        if self.outputs.is_empty() {
            return Err(Error::config("outputs", "must request at least one product"));
        }
        let n = self.ensemble.n_realizations;
        if n == 0 {
            return Err(Error::config("ensemble.n_realizations", "must be at least 1"));
        }
        if self.outputs.iter().any(|k| k.needs_chi()) && n < 2 {
            return Err(Error::config("ensemble.n_realizations", "susceptibility statistics need at least 2"));
        }
        if self.wants(ProductKind::Collapse) && n < MIN_COLLAPSE_SAMPLES {
            return Err(Error::config(
                "ensemble.n_realizations",
                format!("collapse needs at least {MIN_COLLAPSE_SAMPLES}"),
            ));
        }
        if let Some(steps) = &self.ensemble.chi_steps {
            if !(steps.log_fidelity_dx > 0.0) || !(steps.frobenius_h > 0.0) {
                return Err(Error::config("ensemble.chi_steps", "steps must be positive"));
            }
        }
        if self.histogram_bins < 2 {
            return Err(Error::config("histogram_bins", "must be at least 2"));
        }
        if let Some(at) = self.collapse.at {
            if !self.axis_values.iter().any(|&x| (x - at).abs() <= 1e-12 * x.abs().max(1.0)) {
                return Err(Error::config("collapse.at", "must be one of axis_values"));
            }
        }
        if self.wants(ProductKind::Collapse) && self.collapse.kinds.is_empty() {
            return Err(Error::config("collapse.kinds", "must not be empty"));
        }
        Ok(())
    }
}

fn json_field(message: &str) -> String {
    // serde reports "unknown field `x`" and "missing field `x`".
    message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .unwrap_or("<document>")
        .to_string()
}

/// Parse and validate a JSON config, filling defaults.
pub fn validate_config(raw: &str) -> Result<ScanConfig> {
    let cfg: ScanConfig = serde_json::from_str(raw).map_err(|e| {
        let message = e.to_string();
        Error::config(json_field(&message), message)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScanConfig> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
    validate_config(&raw)
}

/// Ensemble outcome at one `(σ, L, axis value)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub sigma: f64,
    pub length: usize,
    pub axis_value: f64,
    pub n_realizations: usize,
    pub n_chi: usize,
    pub n_flagged: usize,
    pub n_failed: usize,
    pub summary: Option<EnsembleSummary>,
    /// Density-normalized histogram of the gap, binned over `[0, max gap]`
    /// shared by all axis values at this `(σ, L)`.
    pub gap_histogram: Option<Histogram>,
    /// Density-normalized histogram of `ln χ`.
    pub chi_histogram: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFitRow {
    pub sigma: f64,
    pub axis_value: f64,
    pub statistic: Statistic,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAveragingRow {
    pub sigma: f64,
    pub axis_value: f64,
    pub class: SelfAveragingClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriffithsRow {
    pub sigma: f64,
    pub length: usize,
    pub extent: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub sigma: f64,
    pub axis_value: f64,
    pub kind: CollapseKind,
    pub alpha: f64,
    pub beta: f64,
    pub quality: f64,
    /// Sorted rescaled samples per size.
    pub rescaled: Vec<(usize, Vec<f64>)>,
}

/// Everything a scan derives, in grid order (σ, then L, then axis value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Products {
    pub config: ScanConfig,
    pub points: Vec<PointResult>,
    pub scaling_fits: Vec<ScalingFitRow>,
    pub self_averaging: Vec<SelfAveragingRow>,
    pub griffiths: Vec<GriffithsRow>,
    pub collapses: Vec<CollapseRow>,
}

impl Products {
    pub fn point(&self, sigma: f64, length: usize, axis_value: f64) -> Option<&PointResult> {
        self.points
            .iter()
            .find(|p| p.sigma == sigma && p.length == length && p.axis_value == axis_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCount {
    pub sigma: f64,
    pub length: usize,
    pub axis_value: f64,
    pub n_realizations: usize,
    pub n_flagged: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// The config as run, with the effective master seed.
    pub config: ScanConfig,
    pub master_seed: u64,
    pub tool_version: String,
    pub points: Vec<PointCount>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Typical-χ peak of the largest size, first maximum on ties.
fn typical_peak(cfg: &ScanConfig, points: &[PointResult], sigma: f64) -> Option<f64> {
    let largest = *cfg.size_list.last()?;
    let mut best: Option<(f64, f64)> = None;
    for p in points.iter().filter(|p| p.sigma == sigma && p.length == largest) {
        if let Some(s) = p.summary {
            if best.is_none_or(|(_, m)| s.mean_ln > m) {
                best = Some((p.axis_value, s.mean_ln));
            }
        }
    }
    best.map(|b| b.0)
}

/// Compute every requested product without touching the file system.
pub fn compute_products(cfg: &ScanConfig) -> Result<Products> {
    cfg.validate()?;
    let ens = cfg.ensemble_config();
    let mut points = Vec::new();
    // ln χ samples kept only where a collapse will need them.
    let mut ln_chi: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for (si, &sigma) in cfg.sigma_list.iter().enumerate() {
        for (li, &length) in cfg.size_list.iter().enumerate() {
            let mut row = Vec::with_capacity(cfg.axis_values.len());
            let mut gaps = Vec::new();
            for (xi, &x) in cfg.axis_values.iter().enumerate() {
                let set = run_ensemble(&cfg.spec(length, x, sigma)?, &ens)?;
                let summary = if ens.record_chi { Some(summarize(&set)?) } else { None };
                let chi_histogram = if cfg.wants(ProductKind::ChiHistogram) {
                    Some(histogram(&set.ln_chi(), cfg.histogram_bins, None)?.with_normalization(Normalization::Density))
                } else {
                    None
                };
                if cfg.wants(ProductKind::Collapse) {
                    ln_chi.insert((si, li, xi), set.ln_chi());
                }
                if ens.record_gap {
                    gaps.push((x, set.gap_samples));
                }
                row.push(PointResult {
                    sigma,
                    length,
                    axis_value: x,
                    n_realizations: set.n_realizations,
                    n_chi: set.chi_samples.len(),
                    n_flagged: set.n_flagged,
                    n_failed: set.n_failed,
                    summary,
                    gap_histogram: None,
                    chi_histogram,
                });
            }
            if ens.record_gap {
                for (p, (_, h)) in row.iter_mut().zip(shared_gap_histograms(&gaps, cfg.histogram_bins)?) {
                    p.gap_histogram = Some(h.with_normalization(Normalization::Density));
                }
            }
            points.extend(row);
        }
    }

    let mut products = Products {
        config: cfg.clone(),
        points,
        scaling_fits: Vec::new(),
        self_averaging: Vec::new(),
        griffiths: Vec::new(),
        collapses: Vec::new(),
    };

    for &sigma in &cfg.sigma_list {
        for &x in &cfg.axis_values {
            let per_size: Vec<(usize, EnsembleSummary)> = cfg
                .size_list
                .iter()
                .filter_map(|&l| Some((l, products.point(sigma, l, x)?.summary?)))
                .collect();
            if cfg.wants(ProductKind::ScalingFit) {
                for statistic in [Statistic::Average, Statistic::Typical] {
                    let fit = scaling_dimension(&per_size, statistic)?;
                    products.scaling_fits.push(ScalingFitRow { sigma, axis_value: x, statistic, fit });
                }
            }
            if cfg.wants(ProductKind::SelfAveraging) {
                let r: Vec<(f64, f64)> = per_size.iter().map(|(l, s)| (*l as f64, s.r)).collect();
                let class = self_averaging_classify(&r)?;
                products.self_averaging.push(SelfAveragingRow { sigma, axis_value: x, class });
            }
        }
    }

    if cfg.wants(ProductKind::GriffithsExtent) {
        for &sigma in &cfg.sigma_list {
            for &length in &cfg.size_list {
                let scan: Vec<(f64, Histogram)> = cfg
                    .axis_values
                    .iter()
                    .filter_map(|&x| Some((x, products.point(sigma, length, x)?.gap_histogram.clone()?)))
                    .collect();
                let extent = griffiths_extent(&scan)?;
                products.griffiths.push(GriffithsRow { sigma, length, extent });
            }
        }
    }

    if cfg.wants(ProductKind::Collapse) {
        for (si, &sigma) in cfg.sigma_list.iter().enumerate() {
            let at = match cfg.collapse.at {
                Some(at) => at,
                None => typical_peak(cfg, &products.points, sigma)
                    .ok_or_else(|| Error::Analysis("no susceptibility peak to collapse at".into()))?,
            };
            let xi = cfg
                .axis_values
                .iter()
                .position(|&x| (x - at).abs() <= 1e-12 * x.abs().max(1.0))
                .expect("collapse point is on the axis");
            let samples: Vec<(usize, Vec<f64>)> = cfg
                .size_list
                .iter()
                .enumerate()
                .map(|(li, &l)| (l, ln_chi.remove(&(si, li, xi)).unwrap_or_default()))
                .collect();
            for &kind in &cfg.collapse.kinds {
                let fit = fit_collapse(&samples, kind)?;
                let rescaled = samples
                    .iter()
                    .map(|(l, s)| {
                        let mut r: Vec<f64> = s.iter().map(|&v| fit.form.apply(v, *l as f64)).collect();
                        r.sort_by(f64::total_cmp);
                        (*l, r)
                    })
                    .collect();
                products.collapses.push(CollapseRow {
                    sigma,
                    axis_value: cfg.axis_values[xi],
                    kind,
                    alpha: fit.form.alpha,
                    beta: fit.form.beta,
                    quality: fit.quality,
                    rescaled,
                });
            }
        }
    }
    Ok(products)
}

/// Fixed-width scientific notation, 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn snake<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

fn histogram_rows(sigma: f64, length: usize, axis_value: f64, h: &Histogram) -> Vec<Vec<String>> {
    let density = h.density();
    h.centers()
        .into_iter()
        .zip(h.widths())
        .zip(density)
        .map(|((c, w), d)| {
            vec![
                fmt_real(sigma),
                length.to_string(),
                fmt_real(axis_value),
                fmt_real(c),
                fmt_real(w),
                fmt_real(d),
            ]
        })
        .collect()
}

fn missing(kind: ProductKind) -> Error {
    Error::MissingProduct(snake(&kind))
}

/// Write one CSV per requested product kind; returns the files written.
pub fn emit_plot_data(products: &Products, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let cfg = &products.config;
    let mut kinds = cfg.outputs.clone();
    kinds.sort();
    kinds.dedup();
    let mut files = Vec::new();
    for kind in kinds {
        let file = match kind {
            ProductKind::ChiSummary => {
                let mut rows = Vec::new();
                for p in &products.points {
                    let s = p.summary.ok_or_else(|| missing(kind))?;
                    rows.push(vec![
                        fmt_real(p.axis_value),
                        fmt_real(p.sigma),
                        p.length.to_string(),
                        fmt_real(s.ave),
                        fmt_real(s.typ),
                        fmt_real(s.r),
                    ]);
                }
                write_csv(out_dir, "chi_summary.csv", &["axis_value", "sigma", "L", "chi_ave", "chi_typ", "R"], &rows)?
            }
            ProductKind::GapHistogram | ProductKind::ChiHistogram => {
                let mut rows = Vec::new();
                for p in &products.points {
                    let h = if kind == ProductKind::GapHistogram { &p.gap_histogram } else { &p.chi_histogram };
                    let h = h.as_ref().ok_or_else(|| missing(kind))?;
                    rows.extend(histogram_rows(p.sigma, p.length, p.axis_value, h));
                }
                let name = if kind == ProductKind::GapHistogram { "gap_histogram.csv" } else { "chi_histogram.csv" };
                write_csv(
                    out_dir,
                    name,
                    &["sigma", "L", "axis_value", "bin_center", "bin_width", "density"],
                    &rows,
                )?
            }
            ProductKind::ScalingFit => {
                if products.scaling_fits.is_empty() {
                    return Err(missing(kind));
                }
                let rows: Vec<Vec<String>> = products
                    .scaling_fits
                    .iter()
                    .map(|r| {
                        vec![
                            fmt_real(r.sigma),
                            fmt_real(r.axis_value),
                            snake(&r.statistic),
                            fmt_real(r.fit.exponent),
                            fmt_real(r.fit.exponent_stderr),
                            fmt_real(r.fit.intercept),
                            fmt_real(r.fit.r_squared),
                        ]
                    })
                    .collect();
                write_csv(
                    out_dir,
                    "scaling_fit.csv",
                    &["sigma", "axis_value", "statistic", "exponent", "exponent_stderr", "intercept", "r_squared"],
                    &rows,
                )?
            }
            ProductKind::SelfAveraging => {
                if products.self_averaging.is_empty() {
                    return Err(missing(kind));
                }
                let rows: Vec<Vec<String>> = products
                    .self_averaging
                    .iter()
                    .map(|r| {
                        vec![
                            fmt_real(r.sigma),
                            fmt_real(r.axis_value),
                            fmt_real(r.class.b),
                            fmt_real(r.class.b_stderr),
                            snake(&r.class.class),
                        ]
                    })
                    .collect();
                write_csv(out_dir, "self_averaging.csv", &["sigma", "axis_value", "b", "b_stderr", "class"], &rows)?
            }
            ProductKind::GriffithsExtent => {
                if products.griffiths.is_empty() {
                    return Err(missing(kind));
                }
                let rows: Vec<Vec<String>> = products
                    .griffiths
                    .iter()
                    .map(|r| {
                        let (found, lo, hi, width) = match r.extent {
                            Some((lo, hi)) => ("true", fmt_real(lo), fmt_real(hi), fmt_real(hi - lo)),
                            None => ("false", String::new(), String::new(), String::new()),
                        };
                        vec![fmt_real(r.sigma), r.length.to_string(), found.into(), lo, hi, width]
                    })
                    .collect();
                write_csv(out_dir, "griffiths_extent.csv", &["sigma", "L", "found", "lower", "upper", "width"], &rows)?
            }
            ProductKind::Collapse => {
                if products.collapses.is_empty() {
                    return Err(missing(kind));
                }
                let mut summary = Vec::new();
                let mut ecdf = Vec::new();
                for r in &products.collapses {
                    let form = snake(&r.kind);
                    summary.push(vec![
                        fmt_real(r.sigma),
                        fmt_real(r.axis_value),
                        form.clone(),
                        fmt_real(r.alpha),
                        fmt_real(r.beta),
                        fmt_real(r.quality),
                    ]);
                    for (l, values) in &r.rescaled {
                        let n = values.len() as f64;
                        for (k, v) in values.iter().enumerate() {
                            ecdf.push(vec![
                                fmt_real(r.sigma),
                                fmt_real(r.axis_value),
                                form.clone(),
                                l.to_string(),
                                fmt_real(*v),
                                fmt_real((k + 1) as f64 / n),
                            ]);
                        }
                    }
                }
                files.push(write_csv(
                    out_dir,
                    "collapse_ecdf.csv",
                    &["sigma", "axis_value", "form", "L", "rescaled", "ecdf"],
                    &ecdf,
                )?);
                write_csv(
                    out_dir,
                    "collapse.csv",
                    &["sigma", "axis_value", "form", "alpha", "beta", "quality"],
                    &summary,
                )?
            }
        };
        files.push(file);
    }
    Ok(files)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_products(path: &Path) -> Result<Products> {
    let raw = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("--workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(_workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

/// Run the scan and write products, CSVs and the manifest into `out_dir`.
///
/// `workers` sizes the thread pool (all cores when `None`) and never changes
/// any output. A `PARTIAL` marker stays behind if writing fails midway.
pub fn run_scan(cfg: &ScanConfig, out_dir: &Path, workers: Option<usize>) -> Result<RunManifest> {
    cfg.validate()?;
    if workers == Some(0) {
        return Err(Error::config("--workers", "must be at least 1"));
    }
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let marker = out_dir.join(PARTIAL_MARKER);
    fs::write(&marker, "scan in progress or aborted\n")?;
    let products = with_workers(workers, || compute_products(cfg))??;
    let mut files: Vec<String> = Vec::new();
    write_json(&out_dir.join(PRODUCTS_FILE), &products)?;
    files.push(PRODUCTS_FILE.into());
    for f in emit_plot_data(&products, out_dir)? {
        files.push(f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    files.push(MANIFEST_FILE.into());
    let manifest = RunManifest {
        config: cfg.clone(),
        master_seed: cfg.ensemble.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        points: products
            .points
            .iter()
            .map(|p| PointCount {
                sigma: p.sigma,
                length: p.length,
                axis_value: p.axis_value,
                n_realizations: p.n_realizations,
                n_flagged: p.n_flagged,
                n_failed: p.n_failed,
            })
            .collect(),
        files,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    fs::remove_file(&marker)?;
    Ok(manifest)
}
