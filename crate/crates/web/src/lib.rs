//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export has a plain-Rust twin (`*_data`) that the native tests call;
//! the exported wrappers only convert errors for JavaScript.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;
use xychain::ensemble::{histogram, run_ensemble, summarize, EnsembleConfig};
use xychain::model::{build_z, sample_realization, ChainSpec, Direction};
use xychain::spectral::singular_values;
use xychain::Result;

/// Largest chain the page accepts; dense SVDs beyond this stall the tab.
pub const MAX_LENGTH: usize = 256;
pub const MAX_REALIZATIONS: usize = 2000;

fn check_size(length: usize, n: usize) -> Result<()> {
    if length > MAX_LENGTH {
        return Err(xychain::Error::Argument(format!("L = {length} exceeds {MAX_LENGTH}")));
    }
    if n > MAX_REALIZATIONS {
        return Err(xychain::Error::Argument(format!("{n} realizations exceed {MAX_REALIZATIONS}")));
    }
    Ok(())
}

fn axis_spec(scan_field: bool, x: f64, fixed: f64, length: usize, sigma: f64) -> Result<ChainSpec> {
    if scan_field {
        ChainSpec::new(length, x, fixed, sigma)
    } else {
        ChainSpec::new(length, fixed, x, sigma)
    }
}

/// `[x, ave, typ]` triples for `points` evenly spaced axis values.
#[allow(clippy::too_many_arguments)]
pub fn chi_curve_data(
    scan_field: bool,
    fixed: f64,
    sigma: f64,
    length: usize,
    n: usize,
    seed: u64,
    x_min: f64,
    x_max: f64,
    points: usize,
) -> Result<Vec<f64>> {
    check_size(length, n * points)?;
    if points < 2 || !(x_min < x_max) {
        return Err(xychain::Error::Argument("need at least 2 points on a non-empty interval".into()));
    }
    let dir = if scan_field { Direction::Field } else { Direction::Anisotropy };
    let mut cfg = EnsembleConfig::new(n.max(2), seed, dir);
    cfg.record_gap = false;
    let mut out = Vec::with_capacity(3 * points);
    for k in 0..points {
        let x = x_min + (x_max - x_min) * k as f64 / (points - 1) as f64;
        let set = run_ensemble(&axis_spec(scan_field, x, fixed, length, sigma)?, &cfg)?;
        let (ave, typ) = match summarize(&set) {
            Ok(s) => (s.ave, s.typ),
            Err(_) => (f64::NAN, f64::NAN),
        };
        out.extend([x, ave, typ]);
    }
    Ok(out)
}

/// `[bin_center, density]` pairs of the gap distribution on `[0, max gap]`.
pub fn gap_histogram_data(
    lambda: f64,
    gamma: f64,
    sigma: f64,
    length: usize,
    n: usize,
    seed: u64,
    bins: usize,
) -> Result<Vec<f64>> {
    check_size(length, n)?;
    let mut cfg = EnsembleConfig::new(n, seed, Direction::Field);
    cfg.record_chi = false;
    let set = run_ensemble(&ChainSpec::new(length, lambda, gamma, sigma)?, &cfg)?;
    let top = set.gap_samples.iter().copied().fold(0.0, f64::max);
    let h = histogram(&set.gap_samples, bins, Some((0.0, if top > 0.0 { top } else { 1.0 })))?;
    Ok(h.centers().into_iter().zip(h.density()).flat_map(|(c, d)| [c, d]).collect())
}

/// Single-particle energies (singular values of `Z`) of one realization,
/// ascending.
pub fn spectrum_data(lambda: f64, gamma: f64, sigma: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    check_size(length, 1)?;
    let r = sample_realization(&ChainSpec::new(length, lambda, gamma, sigma)?, seed, 0)?;
    let mut s: Vec<f64> = singular_values(&build_z(&r))?.iter().copied().collect();
    s.reverse();
    Ok(s)
}

fn js(e: xychain::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn chi_curve(
    scan_field: bool,
    fixed: f64,
    sigma: f64,
    length: usize,
    n: usize,
    seed: u64,
    x_min: f64,
    x_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    chi_curve_data(scan_field, fixed, sigma, length, n, seed, x_min, x_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn gap_histogram(
    lambda: f64,
    gamma: f64,
    sigma: f64,
    length: usize,
    n: usize,
    seed: u64,
    bins: usize,
) -> Result<Vec<f64>, JsError> {
    gap_histogram_data(lambda, gamma, sigma, length, n, seed, bins).map_err(js)
}

#[wasm_bindgen]
pub fn spectrum(lambda: f64, gamma: f64, sigma: f64, length: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    spectrum_data(lambda, gamma, sigma, length, seed).map_err(js)
}
