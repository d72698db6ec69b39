//! Ground-state fidelity from polar factors and the fidelity susceptibility.
//!
//! Three estimators of `χ = (1/8) ||∂T||²_F` are provided:
//!
//! * [`chi_log_fidelity`]: `-2 ln F(x, x + dx) / dx²` at two steps,
//! * [`chi_frobenius`]: central difference of `T`, at two steps,
//! * [`chi_closed_form`]: `∂T` from a single SVD. With `X = Uᵀ (∂Z) V`,
//!   `∂T = U K Vᵀ` where `K_ij = (X_ij - X_ji) / (s_i + s_j)`.
//!
//! The finite-difference pair are the reference estimators; the closed form
//! is what large ensembles use.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_z, shift_realization, Direction, DisorderRealization};
use crate::spectral::{polar_decompose, PolarFactors, NEAR_SINGULAR_RTOL};

/// Relative agreement required between the two step sizes of a
/// finite-difference estimate.
pub const CONVERGENCE_RTOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiMethod {
    LogFidelity,
    FrobeniusDerivative,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiEstimate {
    pub chi: f64,
    pub method: ChiMethod,
    /// Step of the reported value; zero for the closed form.
    pub step: f64,
    pub converged: bool,
    pub near_singular: bool,
}

/// Finite-difference step policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiSteps {
    pub log_fidelity_dx: f64,
    pub frobenius_h: f64,
    pub max_halvings: u32,
}

impl Default for ChiSteps {
    fn default() -> Self {
        Self {
            log_fidelity_dx: 1e-4,
            frobenius_h: 1e-5,
            max_halvings: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    pub value: f64,
    /// `ln |det((Ta + Tb)/2)|`, i.e. `2 ln F`; `-inf` when the factors are
    /// in opposite parity sectors.
    pub log_det: f64,
    pub near_singular: bool,
}

/// Pivots below this are an exact zero of `det((Ta + Tb)/2)` up to round-off;
/// the matrix entries are O(1), so genuine small fidelities never produce one.
const ZERO_PIVOT: f64 = 1e-12;

/// `ln |det M|` from a partially pivoted LU factorization; `-inf` when a
/// pivot vanishes.
pub fn log_abs_det(m: DMatrix<f64>) -> f64 {
    let lu = m.lu();
    let u = lu.u();
    let mut acc = 0.0;
    for d in u.diagonal().iter() {
        if d.abs() < ZERO_PIVOT {
            return f64::NEG_INFINITY;
        }
        acc += d.abs().ln();
    }
    acc
}

pub fn fidelity_of_factors(ta: &DMatrix<f64>, tb: &DMatrix<f64>) -> (f64, f64) {
    let log_det = log_abs_det((ta + tb) * 0.5);
    ((0.5 * log_det).exp(), log_det)
}

/// `F(Za, Zb) = sqrt |det((Ta + Tb)/2)|`.
pub fn fidelity(za: &DMatrix<f64>, zb: &DMatrix<f64>) -> Result<Fidelity> {
    if za.shape() != zb.shape() {
        return Err(Error::Argument(format!(
            "shapes differ: {:?} vs {:?}",
            za.shape(),
            zb.shape()
        )));
    }
    let pa = polar_decompose(za)?;
    let pb = polar_decompose(zb)?;
    let (value, log_det) = fidelity_of_factors(&pa.t, &pb.t);
    Ok(Fidelity {
        value: value.min(1.0),
        log_det,
        near_singular: pa.is_near_singular() || pb.is_near_singular(),
    })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn polar_at(r: &DisorderRealization, dir: Direction, dx: f64) -> Result<PolarFactors> {
    polar_decompose(&build_z(&shift_realization(r, dir, dx)))
        .map_err(|e| e.with_provenance(r.master_seed, r.realization_index))
}

fn log_fidelity_value(base: &PolarFactors, r: &DisorderRealization, dir: Direction, dx: f64) -> Result<(f64, bool)> {
    let shifted = polar_at(r, dir, dx)?;
    let (_, log_det) = fidelity_of_factors(&base.t, &shifted.t);
    if !log_det.is_finite() {
        return Err(Error::StepTooLarge { step: dx });
    }
    // -2 ln F = -ln|det|
    Ok((-log_det / (dx * dx), shifted.is_near_singular()))
}

pub fn chi_log_fidelity(r: &DisorderRealization, dir: Direction, dx: f64) -> Result<ChiEstimate> {
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::Argument(format!("step must be positive, got {dx}")));
    }
    let base = polar_at(r, dir, 0.0)?;
    let (coarse, ns_coarse) = log_fidelity_value(&base, r, dir, dx)?;
    let (fine, ns_fine) = log_fidelity_value(&base, r, dir, dx / 2.0)?;
    let chi = fine.max(0.0);
    Ok(ChiEstimate {
        chi,
        method: ChiMethod::LogFidelity,
        step: dx / 2.0,
        converged: relative_gap(coarse, fine) <= CONVERGENCE_RTOL,
        near_singular: base.is_near_singular() || ns_coarse || ns_fine,
    })
}

/// Central-difference estimate of `T` and `∂T` at the unshifted point.
pub fn polar_derivative_central(r: &DisorderRealization, dir: Direction, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, bool)> {
    let plus = polar_at(r, dir, h)?;
    let minus = polar_at(r, dir, -h)?;
    let center = polar_at(r, dir, 0.0)?;
    let dt = (&plus.t - &minus.t) / (2.0 * h);
    let flag = plus.is_near_singular() || minus.is_near_singular() || center.is_near_singular();
    Ok((center.t, dt, flag))
}

fn frobenius_value(r: &DisorderRealization, dir: Direction, h: f64) -> Result<(f64, bool)> {
    let plus = polar_at(r, dir, h)?;
    let minus = polar_at(r, dir, -h)?;
    let dt = (&plus.t - &minus.t) / (2.0 * h);
    Ok((dt.norm_squared() / 8.0, plus.is_near_singular() || minus.is_near_singular()))
}

pub fn chi_frobenius(r: &DisorderRealization, dir: Direction, h: f64) -> Result<ChiEstimate> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let center = polar_at(r, dir, 0.0)?;
    let (coarse, ns_coarse) = frobenius_value(r, dir, h)?;
    let (fine, ns_fine) = frobenius_value(r, dir, h / 2.0)?;
    Ok(ChiEstimate {
        chi: fine,
        method: ChiMethod::FrobeniusDerivative,
        step: h / 2.0,
        converged: relative_gap(coarse, fine) <= CONVERGENCE_RTOL,
        near_singular: center.is_near_singular() || ns_coarse || ns_fine,
    })
}

/// Central-difference estimator with automatic step halving.
pub fn chi_with_steps(r: &DisorderRealization, dir: Direction, steps: &ChiSteps) -> Result<ChiEstimate> {
    let mut h = steps.frobenius_h;
    let mut best = chi_frobenius(r, dir, h)?;
    for _ in 0..steps.max_halvings {
        if best.converged {
            break;
        }
        h /= 2.0;
        best = chi_frobenius(r, dir, h)?;
    }
    Ok(best)
}

pub fn chi(r: &DisorderRealization, dir: Direction) -> Result<ChiEstimate> {
    chi_with_steps(r, dir, &ChiSteps::default())
}

/// Exact derivative of the orthogonal polar factor along `dz`.
pub fn polar_derivative(p: &PolarFactors, dz: &DMatrix<f64>) -> DMatrix<f64> {
    let k = polar_derivative_kernel(p, dz);
    &p.u * k * p.v.transpose()
}

/// `K = Uᵀ (∂T) V`, antisymmetric, with `||K||_F = ||∂T||_F`.
pub fn polar_derivative_kernel(p: &PolarFactors, dz: &DMatrix<f64>) -> DMatrix<f64> {
    let x = p.u.transpose() * dz * &p.v;
    let s = &p.singular_values;
    let n = p.dim();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (x[(i, j)] - x[(j, i)]) / (s[i] + s[j])
        }
    })
}

/// `χ` from the polar factors of `Z` at the point of interest.
pub fn chi_from_factors(p: &PolarFactors, dir: Direction) -> ChiEstimate {
    let n = p.dim();
    let k = polar_derivative_kernel(p, &dir.generator(n));
    let chi = k.norm_squared() / 8.0;
    // Only pair sums s_i + s_j (i != j) enter; the two smallest bound them.
    let smax = p.max_singular_value();
    let pair_floor = if n >= 2 {
        p.singular_values[n - 1] + p.singular_values[n - 2]
    } else {
        smax
    };
    ChiEstimate {
        chi,
        method: ChiMethod::ClosedForm,
        step: 0.0,
        converged: chi.is_finite() && pair_floor > NEAR_SINGULAR_RTOL * smax,
        near_singular: p.is_near_singular(),
    }
}

pub fn chi_closed_form(r: &DisorderRealization, dir: Direction) -> Result<ChiEstimate> {
    let p = polar_at(r, dir, 0.0)?;
    Ok(chi_from_factors(&p, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_realization, ChainSpec};

    fn clean(length: usize, lambda: f64, gamma: f64) -> DisorderRealization {
        DisorderRealization::from_sites(vec![lambda; length], vec![gamma; length]).unwrap()
    }

    fn random(length: usize, lambda: f64, gamma: f64, sigma: f64, index: u64) -> DisorderRealization {
        sample_realization(&ChainSpec::new(length, lambda, gamma, sigma).unwrap(), 77, index).unwrap()
    }

    #[test]
    fn self_fidelity_is_one() {
        let z = build_z(&random(20, 0.6, 0.5, 0.3, 1));
        let f = fidelity(&z, &z).unwrap();
        assert!((f.value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn opposite_factors_have_zero_fidelity() {
        let z = build_z(&random(10, 0.6, 0.5, 0.3, 2));
        let f = fidelity(&z, &(-&z)).unwrap();
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded() {
        for i in 0..10 {
            let r = random(16, 0.9, 0.8, 0.3, i);
            let za = build_z(&r);
            let zb = build_z(&shift_realization(&r, Direction::Field, 0.2));
            let ab = fidelity(&za, &zb).unwrap().value;
            let ba = fidelity(&zb, &za).unwrap().value;
            assert!((ab - ba).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn rejects_non_positive_steps() {
        let r = clean(6, 0.5, 1.0);
        assert!(matches!(chi_log_fidelity(&r, Direction::Field, 0.0), Err(Error::Argument(_))));
        assert!(matches!(chi_frobenius(&r, Direction::Field, -1e-3), Err(Error::Argument(_))));
    }

    #[test]
    fn parity_crossing_step_is_reported() {
        // Even clean ring: the k = pi mode changes sign at lambda = 1.
        let r = clean(8, 0.99, 1.0);
        assert!(matches!(chi_log_fidelity(&r, Direction::Field, 0.04), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn clean_chain_estimators_agree() {
        for &(lambda, gamma) in &[(0.5, 1.0), (1.5, 1.0), (0.5, 0.3), (2.0, 0.5)] {
            for dir in [Direction::Field, Direction::Anisotropy] {
                let r = clean(40, lambda, gamma);
                let lf = chi_log_fidelity(&r, dir, 1e-4).unwrap();
                let fr = chi(&r, dir).unwrap();
                let cf = chi_closed_form(&r, dir).unwrap();
                assert!(fr.converged && cf.converged);
                assert!(relative_gap(lf.chi, fr.chi) <= 1e-3, "{lambda} {gamma} {dir:?}: {lf:?} {fr:?}");
                assert!(relative_gap(cf.chi, fr.chi) <= 1e-6, "{cf:?} {fr:?}");
            }
        }
    }

    #[test]
    fn central_difference_shrinks_with_step() {
        let r = random(30, 0.7, 0.6, 0.2, 3);
        let mut last = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let plus = build_z(&shift_realization(&r, Direction::Anisotropy, h));
            let minus = build_z(&shift_realization(&r, Direction::Anisotropy, -h));
            let diff = (polar_decompose(&plus).unwrap().t - polar_decompose(&minus).unwrap().t).norm();
            assert!(diff < last);
            last = diff;
        }
        assert!(chi_frobenius(&r, Direction::Anisotropy, 1e-5).unwrap().chi.is_finite());
    }

    #[test]
    fn tangent_is_antisymmetric() {
        let r = random(30, 0.8, 0.7, 0.3, 5);
        let (t, dt, _) = polar_derivative_central(&r, Direction::Field, 1e-5).unwrap();
        let m = t.transpose() * dt;
        assert!((&m + m.transpose()).amax() <= 1e-5 * m.amax());
        let p = polar_decompose(&build_z(&r)).unwrap();
        let exact = polar_derivative(&p, &Direction::Field.generator(30));
        let m = p.t.transpose() * exact;
        assert!((&m + m.transpose()).amax() <= 1e-10 * m.amax());
    }

    #[test]
    fn second_order_expansion_matches() {
        let r = random(24, 0.9, 0.9, 0.2, 6);
        let cf = chi_closed_form(&r, Direction::Field).unwrap().chi;
        let ratio = |dx: f64| {
            let base = polar_decompose(&build_z(&r)).unwrap();
            let (value, _) = log_fidelity_value(&base, &r, Direction::Field, dx).unwrap();
            value / cf
        };
        let (coarse, fine) = (ratio(2e-4), ratio(1e-4));
        assert!((fine - 1.0).abs() < (coarse - 1.0).abs() + 1e-9);
        assert!((fine - 1.0).abs() < 1e-3);
    }

    #[test]
    fn even_ring_at_clean_ising_point_is_flagged() {
        let r = clean(32, 1.0, 1.0);
        let cf = chi_closed_form(&r, Direction::Field).unwrap();
        assert!(cf.near_singular);
        // The zero mode decouples by momentum conservation, so the smooth
        // part of χ is still defined and matches the neighbouring odd ring's
        // order of magnitude.
        assert!(cf.converged && cf.chi.is_finite() && cf.chi > 0.0);
    }
}
