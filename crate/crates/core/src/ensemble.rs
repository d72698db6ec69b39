//! Disorder ensembles: per-realization susceptibilities and gaps, and the
//! statistics built on them.
//!
//! Realization `i` of an ensemble is always `sample_realization(spec, seed, i)`
//! and results are gathered by index, so the output is identical for any
//! number of workers.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{chi_from_factors, chi_with_steps, ChiEstimate, ChiSteps};
use crate::model::{build_z, sample_realization, ChainSpec, Direction};
use crate::spectral::{energy_gap, gap_of, polar_decompose};

/// Share of decomposition failures above which an ensemble is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

pub const DEFAULT_HISTOGRAM_BINS: usize = 100;

/// How each realization's susceptibility is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiEstimator {
    /// Exact derivative of the polar factor from one SVD.
    #[default]
    ClosedForm,
    /// Central differences with step halving ([`crate::fidelity::chi`]).
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    pub direction: Direction,
    pub record_gap: bool,
    /// When false only gaps are computed (no susceptibility).
    pub record_chi: bool,
    pub chi_steps: Option<ChiSteps>,
    pub estimator: ChiEstimator,
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, master_seed: u64, direction: Direction) -> Self {
        Self {
            n_realizations,
            master_seed,
            direction,
            record_gap: true,
            record_chi: true,
            chi_steps: None,
            estimator: ChiEstimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::config("n_realizations", "must be at least 1"));
        }
        if !self.record_chi && !self.record_gap {
            return Err(Error::config("record_gap", "nothing to record"));
        }
        Ok(())
    }
}

/// Samples of one ensemble, in realization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub spec: ChainSpec,
    pub n_realizations: usize,
    /// Susceptibilities of accepted realizations (converged, not near-singular).
    pub chi_samples: Vec<f64>,
    /// Gaps of every realization that decomposed.
    pub gap_samples: Vec<f64>,
    /// Realizations without an accepted susceptibility (includes failures).
    pub n_flagged: usize,
    /// Realizations whose decomposition failed outright.
    pub n_failed: usize,
}

impl SampleSet {
    /// Concatenate two ensembles of the same spec, `self` first.
    pub fn merge(mut self, other: SampleSet) -> Result<SampleSet> {
        if self.spec != other.spec {
            return Err(Error::Argument("cannot merge ensembles of different chains".into()));
        }
        self.n_realizations += other.n_realizations;
        self.chi_samples.extend(other.chi_samples);
        self.gap_samples.extend(other.gap_samples);
        self.n_flagged += other.n_flagged;
        self.n_failed += other.n_failed;
        Ok(self)
    }

    pub fn ln_chi(&self) -> Vec<f64> {
        self.chi_samples.iter().map(|x| x.ln()).collect()
    }
}

enum Outcome {
    Sample { chi: Option<ChiEstimate>, gap: Option<f64> },
    Failed,
}

fn evaluate(spec: &ChainSpec, cfg: &EnsembleConfig, index: u64) -> Result<Outcome> {
    let r = sample_realization(spec, cfg.master_seed, index)?;
    let z = build_z(&r);
    if !cfg.record_chi {
        return Ok(match gap_of(&z) {
            Ok(g) => Outcome::Sample { chi: None, gap: Some(g) },
            Err(Error::Decomposition { .. }) => Outcome::Failed,
            Err(e) => return Err(e),
        });
    }
    let p = match polar_decompose(&z) {
        Ok(p) => p,
        Err(Error::Decomposition { .. }) => return Ok(Outcome::Failed),
        Err(e) => return Err(e),
    };
    let gap = cfg.record_gap.then(|| energy_gap(&p));
    let chi = match cfg.estimator {
        ChiEstimator::ClosedForm => chi_from_factors(&p, cfg.direction),
        ChiEstimator::CentralDifference => {
            match chi_with_steps(&r, cfg.direction, &cfg.chi_steps.unwrap_or_default()) {
                Ok(c) => c,
                Err(Error::Decomposition { .. }) => return Ok(Outcome::Failed),
                Err(e) => return Err(e),
            }
        }
    };
    Ok(Outcome::Sample { chi: Some(chi), gap })
}

#[cfg(feature = "parallel")]
fn evaluate_range(spec: &ChainSpec, cfg: &EnsembleConfig, range: Range<u64>) -> Result<Vec<Outcome>> {
    use rayon::prelude::*;
    range.into_par_iter().map(|i| evaluate(spec, cfg, i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_range(spec: &ChainSpec, cfg: &EnsembleConfig, range: Range<u64>) -> Result<Vec<Outcome>> {
    range.map(|i| evaluate(spec, cfg, i)).collect()
}

/// Realizations `range` of the ensemble described by `(spec, cfg)`.
pub fn run_ensemble_range(spec: &ChainSpec, cfg: &EnsembleConfig, range: Range<u64>) -> Result<SampleSet> {
    spec.validate()?;
    cfg.validate()?;
    let outcomes = evaluate_range(spec, cfg, range.clone())?;
    let mut set = SampleSet {
        spec: *spec,
        n_realizations: outcomes.len(),
        chi_samples: Vec::with_capacity(outcomes.len()),
        gap_samples: Vec::with_capacity(if cfg.record_gap { outcomes.len() } else { 0 }),
        n_flagged: 0,
        n_failed: 0,
    };
    for outcome in outcomes {
        match outcome {
            Outcome::Failed => {
                set.n_failed += 1;
                set.n_flagged += 1;
            }
            Outcome::Sample { chi, gap } => {
                if let Some(g) = gap {
                    set.gap_samples.push(g);
                }
                match chi {
                    Some(c) if c.converged && !c.near_singular && c.chi > 0.0 => set.chi_samples.push(c.chi),
                    Some(_) => set.n_flagged += 1,
                    None => {}
                }
            }
        }
    }
    if set.n_failed as f64 > MAX_FAILURE_FRACTION * set.n_realizations as f64 {
        return Err(Error::FailureThreshold {
            failed: set.n_failed,
            total: set.n_realizations,
        });
    }
    Ok(set)
}

pub fn run_ensemble(spec: &ChainSpec, cfg: &EnsembleConfig) -> Result<SampleSet> {
    run_ensemble_range(spec, cfg, 0..cfg.n_realizations as u64)
}

/// Average and typical values over the disorder ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    /// Arithmetic mean.
    pub ave: f64,
    /// Geometric mean, `exp(mean_ln)`.
    pub typ: f64,
    pub mean_ln: f64,
    /// Population variance.
    pub var: f64,
    /// Relative variance `var / ave²`.
    pub r: f64,
    pub n: usize,
}

pub fn summarize_values(values: &[f64]) -> Result<EnsembleSummary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Statistics(format!("need at least 2 samples, got {n}")));
    }
    if let Some(bad) = values.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Statistics(format!("samples must be positive and finite, got {bad}")));
    }
    let nf = n as f64;
    let ave = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|x| (x - ave).powi(2)).sum::<f64>() / nf;
    let mean_ln = values.iter().map(|x| x.ln()).sum::<f64>() / nf;
    let constant = values.iter().all(|&x| x == values[0]);
    // exp(mean ln) can exceed the mean by an ulp; AM-GM is exact otherwise.
    let typ = if constant { values[0] } else { mean_ln.exp().min(ave) };
    Ok(EnsembleSummary {
        ave,
        typ,
        mean_ln,
        var,
        r: var / (ave * ave),
        n,
    })
}

pub fn summarize(s: &SampleSet) -> Result<EnsembleSummary> {
    summarize_values(&s.chi_samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Counts,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalization: Normalization,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `count / (total * width)` per bin.
    pub fn density(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts
            .iter()
            .zip(self.widths())
            .map(|(&c, w)| c as f64 / (total * w))
            .collect()
    }

    /// Bin heights in this histogram's normalization.
    pub fn values(&self) -> Vec<f64> {
        match self.normalization {
            Normalization::Counts => self.counts.iter().map(|&c| c as f64).collect(),
            Normalization::Density => self.density(),
        }
    }

    /// Index of the tallest bin; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// Uniform-bin histogram over `range`, or over `[min, max]` of the samples.
///
/// Samples outside an explicit range are counted in the nearest edge bin so
/// the counts always add up to the number of samples.
pub fn histogram(samples: &[f64], n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Statistics("cannot histogram an empty sample".into()));
    }
    if n_bins < 2 {
        return Err(Error::Statistics(format!("need at least 2 bins, got {n_bins}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Statistics("samples must be finite".into()));
    }
    let (mut lo, mut hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Statistics(format!("invalid histogram range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
    };
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
    bin_edges.push(hi);
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        let k = ((x - lo) / width).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(n_bins - 1) };
        counts[k] += 1;
    }
    Ok(Histogram {
        bin_edges,
        counts,
        normalization: Normalization::Counts,
    })
}
