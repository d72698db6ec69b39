//! Polar decomposition `Z = ΛT` through the SVD `Z = U S Vᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which the smallest singular value marks `Z` as
/// near-singular. The orthogonal factor is not unique for singular `Z`.
pub const NEAR_SINGULAR_RTOL: f64 = 1e-12;

/// Many-body gap per smallest singular value, `E1 - E0 = g * s_min`.
///
/// Fixed against the Fock-space oracle (see `oracle` tests): the quadratic
/// Hamiltonian's spectrum is the vacuum energy plus every subset sum of the
/// singular values of `Z`, so the first excitation costs exactly `s_min`.
pub const GAP_CALIBRATION: f64 = 1.0;

const SVD_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct PolarFactors {
    /// Orthogonal polar factor `T = U Vᵀ`.
    pub t: DMatrix<f64>,
    /// Singular values, non-increasing.
    pub singular_values: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl PolarFactors {
    pub fn dim(&self) -> usize {
        self.singular_values.len()
    }

    /// Positive semi-definite factor `Λ = U diag(s) Uᵀ`.
    pub fn positive_factor(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (mut col, &s) in us.column_iter_mut().zip(self.singular_values.iter()) {
            col *= s;
        }
        us * self.u.transpose()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_near_singular(&self) -> bool {
        let smax = self.max_singular_value();
        smax == 0.0 || min_singular_value(self) < NEAR_SINGULAR_RTOL * smax
    }
}

fn check_input(z: &DMatrix<f64>) -> Result<()> {
    if !z.is_square() {
        return Err(Error::Argument(format!("matrix is {}x{}, expected square", z.nrows(), z.ncols())));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

pub fn polar_decompose(z: &DMatrix<f64>) -> Result<PolarFactors> {
    check_input(z)?;
    let (u, singular_values, v) = backend::svd(z)?;
    let t = &u * v.transpose();
    Ok(PolarFactors { t, singular_values, u, v })
}

/// Singular values only (non-increasing); cheaper than a full decomposition.
pub fn singular_values(z: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_input(z)?;
    backend::singular_values(z)
}

/// Pure-Rust SVD, also the fallback when LAPACK reports a failure.
pub mod portable {
    use super::*;

    pub fn svd(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        let svd = z
            .clone()
            .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
            .ok_or(Error::Decomposition { seed: None, index: None })?;
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested Vᵀ").transpose();
        Ok((u, svd.singular_values, v))
    }

    pub fn singular_values(z: &DMatrix<f64>) -> Result<DVector<f64>> {
        let svd = z
            .clone()
            .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERATIONS)
            .ok_or(Error::Decomposition { seed: None, index: None })?;
        Ok(svd.singular_values)
    }
}

#[cfg(not(feature = "lapack"))]
use portable as backend;

#[cfg(feature = "lapack")]
mod backend {
    //! Divide-and-conquer SVD (`dgesdd`) from the system LAPACK.

    use std::os::raw::c_char;
    use std::sync::Once;

    use super::*;

    extern "C" {
        fn openblas_set_num_threads(n: i32);
    }

    static SINGLE_THREADED: Once = Once::new();

    // Parallelism lives at the realization level; nested BLAS threads only
    // oversubscribe the cores.
    fn init() {
        SINGLE_THREADED.call_once(|| unsafe { openblas_set_num_threads(1) });
    }

    fn gesdd(z: &DMatrix<f64>, job: u8) -> Option<(Vec<f64>, DVector<f64>, Vec<f64>)> {
        init();
        let n = z.nrows();
        let ni = n as i32;
        let mut a = z.as_slice().to_vec();
        let mut s = vec![0.0; n];
        let (mut u, mut vt) = if job == b'A' {
            (vec![0.0; n * n], vec![0.0; n * n])
        } else {
            (vec![0.0; 1], vec![0.0; 1])
        };
        let ld = if job == b'A' { ni } else { 1 };
        let mut iwork = vec![0i32; 8 * n];
        let mut info = 0;
        let mut query = [0.0f64];
        let jobz = job as c_char;
        // Safety: all buffers are sized per the LAPACK contract for an
        // n x n column-major input; lwork = -1 only writes the workspace size.
        unsafe {
            lapack_sys::dgesdd_(
                &jobz, &ni, &ni, a.as_mut_ptr(), &ni, s.as_mut_ptr(), u.as_mut_ptr(), &ld,
                vt.as_mut_ptr(), &ld, query.as_mut_ptr(), &-1, iwork.as_mut_ptr(), &mut info,
            );
        }
        if info != 0 {
            return None;
        }
        let lwork = query[0] as i32;
        let mut work = vec![0.0; lwork.max(1) as usize];
        unsafe {
            lapack_sys::dgesdd_(
                &jobz, &ni, &ni, a.as_mut_ptr(), &ni, s.as_mut_ptr(), u.as_mut_ptr(), &ld,
                vt.as_mut_ptr(), &ld, work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &mut info,
            );
        }
        (info == 0).then(|| (u, DVector::from_vec(s), vt))
    }

    pub fn svd(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        let n = z.nrows();
        match gesdd(z, b'A') {
            Some((u, s, vt)) => Ok((
                DMatrix::from_vec(n, n, u),
                s,
                DMatrix::from_vec(n, n, vt).transpose(),
            )),
            None => portable::svd(z),
        }
    }

    pub fn singular_values(z: &DMatrix<f64>) -> Result<DVector<f64>> {
        match gesdd(z, b'N') {
            Some((_, s, _)) => Ok(s),
            None => portable::singular_values(z),
        }
    }
}

pub fn min_singular_value(p: &PolarFactors) -> f64 {
    p.singular_values[p.dim() - 1]
}

pub fn energy_gap(p: &PolarFactors) -> f64 {
    GAP_CALIBRATION * min_singular_value(p)
}

/// Gap straight from `Z` without forming singular vectors.
pub fn gap_of(z: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(z)?;
    Ok(GAP_CALIBRATION * s[s.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_z, sample_realization, ChainSpec, DisorderRealization};

    fn clean_z(length: usize, lambda: f64, gamma: f64) -> DMatrix<f64> {
        build_z(&DisorderRealization::from_sites(vec![lambda; length], vec![gamma; length]).unwrap())
    }

    fn random_z(length: usize, sigma: f64, index: u64) -> DMatrix<f64> {
        let spec = ChainSpec::new(length, 0.7, 0.6, sigma).unwrap();
        build_z(&sample_realization(&spec, 31337, index).unwrap())
    }

    #[test]
    fn identity_and_positive_diagonal() {
        let p = polar_decompose(&DMatrix::identity(4, 4)).unwrap();
        assert!((&p.t - DMatrix::<f64>::identity(4, 4)).amax() < 1e-14);
        assert!(p.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-14));

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0]));
        let p = polar_decompose(&d).unwrap();
        assert!((&p.t - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
        assert_eq!(p.singular_values.as_slice(), &[3.0, 2.0]);
        assert_eq!(energy_gap(&p), 2.0);
        assert_eq!(min_singular_value(&p), 2.0);
    }

    #[test]
    fn orthogonal_input_has_unit_singular_values() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0]);
        let p = polar_decompose(&q).unwrap();
        assert!((min_singular_value(&p) - 1.0).abs() < 1e-14);
        assert!((&p.t - &q).amax() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let mut z = DMatrix::identity(3, 3);
        z[(1, 2)] = f64::NAN;
        assert!(matches!(polar_decompose(&z), Err(Error::NonFinite)));
        assert!(matches!(polar_decompose(&DMatrix::zeros(2, 3)), Err(Error::Argument(_))));
    }

    #[test]
    fn factor_invariants_on_random_chains() {
        for (length, sigma) in [(8, 0.1), (50, 0.3), (50, 0.0), (120, 0.4)] {
            for index in 0..3 {
                let z = random_z(length, sigma, index);
                let p = polar_decompose(&z).unwrap();
                let eye = DMatrix::<f64>::identity(length, length);
                assert!((p.t.transpose() * &p.t - eye).amax() <= 1e-10);
                let recon = p.positive_factor() * &p.t;
                assert!((recon - &z).amax() <= 1e-8 * z.amax().max(1.0));
                let s = p.singular_values.as_slice();
                assert!(s.windows(2).all(|w| w[0] >= w[1]) && s[length - 1] >= 0.0);
                assert_eq!(min_singular_value(&p), s[length - 1]);
            }
        }
    }

    #[test]
    fn transpose_has_the_same_singular_values() {
        let z = random_z(40, 0.3, 4);
        let a = singular_values(&z).unwrap();
        let b = singular_values(&z.transpose()).unwrap();
        assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn clean_spectrum_is_invariant_under_cyclic_relabeling() {
        let z = clean_z(30, 0.8, 0.6);
        let n = z.nrows();
        let perm = DMatrix::from_fn(n, n, |i, j| if j == (i + 7) % n { 1.0 } else { 0.0 });
        let relabeled = &perm * &z * perm.transpose();
        let a = singular_values(&z).unwrap();
        let b = singular_values(&relabeled).unwrap();
        assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn backends_agree() {
        for index in 0..3 {
            let z = random_z(60, 0.3, index);
            let fast = polar_decompose(&z).unwrap();
            let (u, s, v) = portable::svd(&z).unwrap();
            assert!((&fast.singular_values - &s).amax() <= 1e-12);
            assert!((&fast.t - u * v.transpose()).amax() <= 1e-9);
            assert!((singular_values(&z).unwrap() - s).amax() <= 1e-12);
        }
    }

    #[test]
    fn gapped_paramagnet_keeps_its_gap() {
        // Clean chain at lambda = 2: single-particle energies are
        // 2 sqrt((lambda + cos k)^2 + sin^2 k) >= 2 (lambda - 1) = 2.
        let gaps: Vec<f64> = [16, 32, 64].iter().map(|&l| gap_of(&clean_z(l, 2.0, 1.0)).unwrap()).collect();
        for g in &gaps {
            assert!(*g > 1.9, "{gaps:?}");
        }
    }

    #[test]
    fn critical_ising_gap_closes_with_size() {
        // Odd lengths keep the k = pi zero mode off the momentum grid.
        let gaps: Vec<f64> = [33, 65, 129].iter().map(|&l| gap_of(&clean_z(l, 1.0, 1.0)).unwrap()).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.1);
        // Even lengths carry an exact zero mode at the clean Ising point.
        let p = polar_decompose(&clean_z(64, 1.0, 1.0)).unwrap();
        assert!(p.is_near_singular());
    }
}
