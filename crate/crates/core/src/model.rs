//! The disordered XY chain in its quasi-free fermion form.
//!
//! Sites are 0-based here. The ring is closed in the fermion index: site
//! `L-1` couples back to site `0` through the corner entries of `A` and `B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Ensemble-level parameters of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub length: usize,
    pub mean_field: f64,
    pub mean_anisotropy: f64,
    /// Standard deviation shared by the field and anisotropy distributions.
    pub disorder_sigma: f64,
}

impl ChainSpec {
    pub fn new(length: usize, mean_field: f64, mean_anisotropy: f64, disorder_sigma: f64) -> Result<Self> {
        let spec = Self {
            length,
            mean_field,
            mean_anisotropy,
            disorder_sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn clean(length: usize, mean_field: f64, mean_anisotropy: f64) -> Result<Self> {
        Self::new(length, mean_field, mean_anisotropy, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        // With L < 3 the periodic corner entries land on bulk entries.
        if self.length < 3 {
            return Err(Error::config("length", format!("must be at least 3, got {}", self.length)));
        }
        if !self.mean_field.is_finite() {
            return Err(Error::config("mean_field", "must be finite"));
        }
        if !self.mean_anisotropy.is_finite() {
            return Err(Error::config("mean_anisotropy", "must be finite"));
        }
        if !(self.disorder_sigma >= 0.0) || !self.disorder_sigma.is_finite() {
            return Err(Error::config(
                "disorder_sigma",
                format!("must be finite and non-negative, got {}", self.disorder_sigma),
            ));
        }
        Ok(())
    }
}

/// Direction in parameter space along which the susceptibility is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Field,
    Anisotropy,
}

impl Direction {
    /// `dZ/dx` for a uniform shift of every site along this direction.
    ///
    /// `Z` is affine in the per-site parameters, so this does not depend on
    /// the realization.
    pub fn generator(self, length: usize) -> DMatrix<f64> {
        match self {
            Direction::Field => DMatrix::from_diagonal_element(length, length, -2.0),
            Direction::Anisotropy => -anisotropy_matrix(&vec![1.0; length]),
        }
    }
}

/// One sampled chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub fields: Vec<f64>,
    pub anisotropies: Vec<f64>,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl DisorderRealization {
    /// A realization with explicit site parameters; provenance is zeroed.
    pub fn from_sites(fields: Vec<f64>, anisotropies: Vec<f64>) -> Result<Self> {
        if fields.len() != anisotropies.len() {
            return Err(Error::Argument(format!(
                "fields ({}) and anisotropies ({}) differ in length",
                fields.len(),
                anisotropies.len()
            )));
        }
        if fields.len() < 3 {
            return Err(Error::config("length", format!("must be at least 3, got {}", fields.len())));
        }
        Ok(Self {
            fields,
            anisotropies,
            master_seed: 0,
            realization_index: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Real `L x L` coupling matrices with `Z = A - B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Draw one realization. Fields come first (sites `0..L`), then anisotropies.
pub fn sample_realization(spec: &ChainSpec, master_seed: u64, index: u64) -> Result<DisorderRealization> {
    spec.validate()?;
    let mut gauss = GaussianStream::for_realization(master_seed, index);
    let sigma = spec.disorder_sigma;
    let fields = (0..spec.length).map(|_| gauss.next_normal(spec.mean_field, sigma)).collect();
    let anisotropies = (0..spec.length)
        .map(|_| gauss.next_normal(spec.mean_anisotropy, sigma))
        .collect();
    Ok(DisorderRealization {
        fields,
        anisotropies,
        master_seed,
        realization_index: index,
    })
}

fn field_matrix(fields: &[f64]) -> DMatrix<f64> {
    let n = fields.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, &lambda) in fields.iter().enumerate() {
        a[(i, i)] = -2.0 * lambda;
        let j = (i + 1) % n;
        a[(i, j)] = -1.0;
        a[(j, i)] = -1.0;
    }
    a
}

fn anisotropy_matrix(anisotropies: &[f64]) -> DMatrix<f64> {
    let n = anisotropies.len();
    let mut b = DMatrix::zeros(n, n);
    for (i, &gamma) in anisotropies.iter().enumerate() {
        let j = (i + 1) % n;
        // B[i+1, i] = gamma_i, B[i, i+1] = -gamma_i; the wrap-around i = L-1
        // gives B[0, L-1] = gamma_{L-1} and B[L-1, 0] = -gamma_{L-1}.
        b[(j, i)] = gamma;
        b[(i, j)] = -gamma;
    }
    b
}

pub fn build_matrices(r: &DisorderRealization) -> CouplingMatrices {
    let a = field_matrix(&r.fields);
    let b = anisotropy_matrix(&r.anisotropies);
    let z = &a - &b;
    CouplingMatrices { a, b, z }
}

/// `Z` alone, for callers that do not need `A` and `B`.
pub fn build_z(r: &DisorderRealization) -> DMatrix<f64> {
    build_matrices(r).z
}

/// Shift every site's parameter along `dir` by `dx`, keeping the disorder pattern.
pub fn shift_realization(r: &DisorderRealization, dir: Direction, dx: f64) -> DisorderRealization {
    let mut out = r.clone();
    if dx == 0.0 {
        return out;
    }
    let target = match dir {
        Direction::Field => &mut out.fields,
        Direction::Anisotropy => &mut out.anisotropies,
    };
    for v in target.iter_mut() {
        *v += dx;
    }
    out
}
