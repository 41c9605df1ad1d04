//! Homogeneous piezoelectric material tensors in column notation.

use crate::error::Error;
use crate::voigt::{electric_flip_strain, Mat9};
use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat6x3 = SMatrix<f64, 6, 3>;

/// Elastic, piezoelectric and permeability blocks of a material.
///
/// The full matrix acting on strain columns is
/// `[[elastic, -coupling], [couplingᵀ, permeability]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTensor {
    pub elastic: Mat6,
    pub coupling: Mat6x3,
    pub permeability: Matrix3<f64>,
}

/// The named materials shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    IsoDecoupled,
    IsoWeakCoupled,
    SyntheticCoupled,
}

impl Preset {
    pub fn tensor(self) -> MaterialTensor {
        match self {
            Preset::IsoDecoupled => MaterialTensor::isotropic_decoupled(1.0, 0.3, 1.0),
            Preset::IsoWeakCoupled => MaterialTensor::isotropic_decoupled(1.0, 0.3, 1.0)
                .with_axial_coupling(0.05),
            Preset::SyntheticCoupled => MaterialTensor::isotropic_decoupled(1.0, 0.3, 1.0)
                .with_axial_coupling(0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::IsoDecoupled => "iso_decoupled",
            Preset::IsoWeakCoupled => "iso_weak_coupled",
            Preset::SyntheticCoupled => "synthetic_coupled",
        }
    }
}

/// Isotropic stiffness in column notation.
pub fn isotropic_stiffness(young: f64, poisson: f64) -> Mat6 {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    let mut c = Mat6::identity() * (2.0 * mu);
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] += lambda;
        }
    }
    c
}

fn spectral_norm<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> f64 {
    let dm = nalgebra::DMatrix::from_column_slice(R, C, m.as_slice());
    dm.singular_values().max()
}

fn is_positive_definite<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    let dm = nalgebra::DMatrix::from_column_slice(N, N, m.as_slice());
    dm.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

fn is_symmetric<const N: usize>(m: &SMatrix<f64, N, N>, rel: f64) -> bool {
    (m - m.transpose()).amax() <= rel * m.amax().max(f64::MIN_POSITIVE)
}

impl MaterialTensor {
    /// Validated constructor.
    pub fn new(elastic: Mat6, coupling: Mat6x3, permeability: Matrix3<f64>) -> Result<Self, Error> {
        let m = Self { elastic, coupling, permeability };
        m.validate()?;
        Ok(m)
    }

    /// Isotropic elasticity, isotropic permeability, no coupling.
    pub fn isotropic_decoupled(young: f64, poisson: f64, permeability: f64) -> Self {
        Self {
            elastic: isotropic_stiffness(young, poisson),
            coupling: Mat6x3::zeros(),
            permeability: Matrix3::identity() * permeability,
        }
    }

    /// Add a rank-one coupling between the normal strains and the axial
    /// potential gradient, with spectral norm
    /// `ratio · sqrt(|elastic| |permeability|)`. The pattern is invariant
    /// under rotations about the third axis.
    pub fn with_axial_coupling(mut self, ratio: f64) -> Self {
        let dir = SVector::<f64, 6>::from([-0.4, -0.4, 1.0, 0.0, 0.0, 0.0]).normalize();
        let scale = ratio * (spectral_norm(&self.elastic) * spectral_norm(&self.permeability)).sqrt();
        self.coupling = Mat6x3::zeros();
        self.coupling.set_column(2, &(dir * scale));
        self
    }

    /// Build from a full 9x9 matrix in the sign convention of [`Self::full`].
    pub fn from_full(a: &Mat9) -> Result<Self, Error> {
        let elastic: Mat6 = a.fixed_view::<6, 6>(0, 0).into_owned();
        let coupling: Mat6x3 = -a.fixed_view::<6, 3>(0, 6).into_owned();
        let lower: SMatrix<f64, 3, 6> = a.fixed_view::<3, 6>(6, 0).into_owned();
        let permeability: Matrix3<f64> = a.fixed_view::<3, 3>(6, 6).into_owned();
        let scale = a.amax().max(f64::MIN_POSITIVE);
        if (lower - coupling.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config(
                "coupling blocks are not transposes of each other".into(),
            ));
        }
        Self::new(elastic, coupling, permeability)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !is_symmetric(&self.elastic, 1e-12) || !is_positive_definite(&self.elastic) {
            return Err(Error::Config("elastic block must be symmetric positive definite".into()));
        }
        if !is_symmetric(&self.permeability, 1e-12) || !is_positive_definite(&self.permeability) {
            return Err(Error::Config(
                "permeability block must be symmetric positive definite".into(),
            ));
        }
        if self.coupling.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("coupling block has non-finite entries".into()));
        }
        Ok(())
    }

    /// Matrix of the energy form.
    pub fn full(&self) -> Mat9 {
        let mut a = Mat9::zeros();
        a.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.elastic);
        a.fixed_view_mut::<6, 3>(0, 6).copy_from(&(-self.coupling));
        a.fixed_view_mut::<3, 6>(6, 0).copy_from(&self.coupling.transpose());
        a.fixed_view_mut::<3, 3>(6, 6).copy_from(&self.permeability);
        a
    }

    /// Matrix of the enthalpy form: the energy matrix with its electric rows
    /// negated. It is symmetric and indefinite.
    pub fn enthalpy(&self) -> Mat9 {
        electric_flip_strain() * self.full()
    }

    /// Same material with the coupling multiplied by `t`.
    pub fn with_coupling_scale(&self, t: f64) -> Self {
        Self {
            elastic: self.elastic,
            coupling: self.coupling * t,
            permeability: self.permeability,
        }
    }

    /// Decoupled part and coupling part of the energy matrix.
    pub fn weak_split(&self) -> (Mat9, Mat9) {
        let decoupled = self.with_coupling_scale(0.0).full();
        let coupling = self.full() - decoupled;
        (decoupled, coupling)
    }

    /// Relative strength `|coupling| / sqrt(|elastic| |permeability|)`.
    pub fn coupling_ratio(&self) -> f64 {
        spectral_norm(&self.coupling)
            / (spectral_norm(&self.elastic) * spectral_norm(&self.permeability)).sqrt()
    }

    pub fn is_decoupled(&self) -> bool {
        self.coupling.amax() == 0.0
    }

    /// Apply a uniform scaling to all blocks.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            elastic: self.elastic * s,
            coupling: self.coupling * s,
            permeability: self.permeability * s,
        }
    }
}
