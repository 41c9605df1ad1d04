//! Column notation for piezoelectric states, strains and stresses.
//!
//! A state has four components: three displacements followed by the
//! electric potential. Its strain column has nine entries
//! `(e11, e22, e33, √2 e23, √2 e31, √2 e12, ∂1φ, ∂2φ, ∂3φ)`, so that the
//! Euclidean inner product of two strain columns equals the tensor
//! contraction of the underlying strains plus the dot product of the
//! potential gradients.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use std::ops::{Add, Index, Mul, Neg, Sub};

/// Number of state components.
pub const STATE_DIM: usize = 4;
/// Number of strain (and stress) column entries.
pub const STRAIN_DIM: usize = 9;
/// Dimension of the kernel of the strain operator: translations,
/// infinitesimal rotations and the constant potential.
pub const RIGID_DIM: usize = 7;

pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Mat9x4 = SMatrix<f64, 9, 4>;
pub type Mat4x9 = SMatrix<f64, 4, 9>;
pub type Mat4x7 = SMatrix<f64, 4, 7>;

const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

macro_rules! column_newtype {
    ($(#[$m:meta])* $name:ident, $n:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Default)]
        pub struct $name(pub SVector<f64, $n>);

        impl $name {
            pub fn zeros() -> Self {
                Self(SVector::zeros())
            }

            pub fn from_slice(v: &[f64]) -> Self {
                Self(SVector::from_column_slice(v))
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn dot(&self, other: &Self) -> f64 {
                self.0.dot(&other.0)
            }
        }

        impl From<[f64; $n]> for $name {
            fn from(a: [f64; $n]) -> Self {
                Self(SVector::from(a))
            }
        }

        impl Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                Self(self.0 + o.0)
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                Self(self.0 - o.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            fn mul(self, s: f64) -> Self {
                Self(self.0 * s)
            }
        }
    };
}

column_newtype!(
    /// Displacements and electric potential at a point.
    StateColumn,
    4
);
column_newtype!(
    /// Strain column: six weighted mechanical strains and the potential gradient.
    StrainColumn,
    9
);
column_newtype!(
    /// Stress column, dual to [`StrainColumn`].
    StressColumn,
    9
);
column_newtype!(
    /// Coefficients of a rigid motion plus constant potential.
    RigidCoeffs,
    7
);

impl StrainColumn {
    /// Mechanical part (first six entries).
    pub fn mechanical(&self) -> SVector<f64, 6> {
        self.0.fixed_rows::<6>(0).into_owned()
    }

    /// Electric part (potential gradient).
    pub fn electric(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(6).into_owned()
    }

    pub fn from_parts(mech: &SVector<f64, 6>, elec: &Vector3<f64>) -> Self {
        let mut v = SVector::<f64, 9>::zeros();
        v.fixed_rows_mut::<6>(0).copy_from(mech);
        v.fixed_rows_mut::<3>(6).copy_from(elec);
        Self(v)
    }

    /// Keep only the mechanical part.
    pub fn mechanical_only(&self) -> Self {
        Self::from_parts(&self.mechanical(), &Vector3::zeros())
    }

    /// Keep only the electric part.
    pub fn electric_only(&self) -> Self {
        Self::from_parts(&SVector::zeros(), &self.electric())
    }

    /// Negate the electric entries.
    pub fn flip_electric(&self) -> Self {
        Self(electric_flip_strain() * self.0)
    }
}

impl StateColumn {
    /// Negate the potential.
    pub fn flip_electric(&self) -> Self {
        let mut v = self.0;
        v[3] = -v[3];
        Self(v)
    }
}

/// The strain operator with every derivative replaced by the
/// corresponding entry of `g`. With `g = ∇φ` this maps the nodal state of a
/// scalar shape function to its strain; with `g = n` it gives the
/// traction operator on a surface with normal `n`.
pub fn strain_operator(g: &Vector3<f64>) -> Mat9x4 {
    let mut d = Mat9x4::zeros();
    d[(0, 0)] = g[0];
    d[(1, 1)] = g[1];
    d[(2, 2)] = g[2];
    d[(3, 1)] = S2 * g[2];
    d[(3, 2)] = S2 * g[1];
    d[(4, 0)] = S2 * g[2];
    d[(4, 2)] = S2 * g[0];
    d[(5, 0)] = S2 * g[1];
    d[(5, 1)] = S2 * g[0];
    d[(6, 3)] = g[0];
    d[(7, 3)] = g[1];
    d[(8, 3)] = g[2];
    d
}

/// Strain column of a field whose gradient is `grad`; row `k` of `grad` is
/// the gradient of state component `k`.
pub fn strain_from_gradient(grad: &SMatrix<f64, 4, 3>) -> StrainColumn {
    let mut v = SVector::<f64, 9>::zeros();
    for c in 0..4 {
        let g = Vector3::new(grad[(c, 0)], grad[(c, 1)], grad[(c, 2)]);
        let col = strain_operator(&g).column(c).into_owned();
        v += col;
    }
    StrainColumn(v)
}

/// Linear state field with constant strain: `x ↦ linear_field(x) · e`
/// has strain column `e` everywhere.
pub fn linear_field(x: &Vector3<f64>) -> Mat4x9 {
    strain_operator(x).transpose()
}

/// Rigid motions and constant potential: columns span the kernel of the
/// strain operator. Coefficients are three translations, three
/// rotations and one potential level.
pub fn rigid_matrix(x: &Vector3<f64>) -> Mat4x7 {
    let mut d = Mat4x7::zeros();
    d[(0, 0)] = 1.0;
    d[(1, 1)] = 1.0;
    d[(2, 2)] = 1.0;
    d[(0, 4)] = -S2 * x[2];
    d[(0, 5)] = S2 * x[1];
    d[(1, 3)] = S2 * x[2];
    d[(1, 5)] = -S2 * x[0];
    d[(2, 3)] = -S2 * x[1];
    d[(2, 4)] = S2 * x[0];
    d[(3, 6)] = 1.0;
    d
}

/// Strain operator applied to `rigid_matrix`: column `r` of the result is the
/// strain of rigid mode `r`, for a field with constant gradient. Since the
/// rigid field is affine, its gradient is the same everywhere.
pub fn rigid_mode_strain(r: usize) -> StrainColumn {
    let e = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    let mut grad = SMatrix::<f64, 4, 3>::zeros();
    for (k, ek) in e.iter().enumerate() {
        let col = rigid_matrix(ek).column(r).into_owned() - rigid_matrix(&Vector3::zeros()).column(r);
        for c in 0..4 {
            grad[(c, k)] = col[c];
        }
    }
    strain_from_gradient(&grad)
}

/// Gradient of an affine state field, exact up to rounding: row `k` is
/// the gradient of component `k`.
pub fn affine_gradient(f: impl Fn(&Vector3<f64>) -> SVector<f64, 4>) -> SMatrix<f64, 4, 3> {
    let f0 = f(&Vector3::zeros());
    let mut grad = SMatrix::<f64, 4, 3>::zeros();
    for k in 0..3 {
        let mut ek = Vector3::zeros();
        ek[k] = 1.0;
        grad.set_column(k, &(f(&ek) - f0));
    }
    grad
}

/// The adjoint rigid operator: translations and potential level from the
/// value, rotations from the antisymmetric part of the gradient. It
/// recovers `a` from the field `x ↦ rigid_matrix(x) a` at the origin.
pub fn rigid_coefficients(value: &SVector<f64, 4>, grad: &SMatrix<f64, 4, 3>) -> RigidCoeffs {
    RigidCoeffs(SVector::<f64, 7>::from([
        value[0],
        value[1],
        value[2],
        S2 * (grad[(1, 2)] - grad[(2, 1)]),
        S2 * (grad[(2, 0)] - grad[(0, 2)]),
        S2 * (grad[(0, 1)] - grad[(1, 0)]),
        value[3],
    ]))
}

/// `diag(I6, -I3)`.
pub fn electric_flip_strain() -> Mat9 {
    let mut s = Mat9::identity();
    for i in 6..9 {
        s[(i, i)] = -1.0;
    }
    s
}

/// `diag(1, 1, 1, -1)`.
pub fn electric_flip_state() -> SMatrix<f64, 4, 4> {
    let mut s = SMatrix::<f64, 4, 4>::identity();
    s[(3, 3)] = -1.0;
    s
}

/// Mechanical block `(6x6)`, coupling blocks and electric block `(3x3)` of a
/// 9x9 matrix.
pub struct Blocks {
    pub mm: SMatrix<f64, 6, 6>,
    pub me: SMatrix<f64, 6, 3>,
    pub em: SMatrix<f64, 3, 6>,
    pub ee: Matrix3<f64>,
}

pub fn split_blocks(m: &Mat9) -> Blocks {
    Blocks {
        mm: m.fixed_view::<6, 6>(0, 0).into_owned(),
        me: m.fixed_view::<6, 3>(0, 6).into_owned(),
        em: m.fixed_view::<3, 6>(6, 0).into_owned(),
        ee: m.fixed_view::<3, 3>(6, 6).into_owned(),
    }
}

pub fn join_blocks(b: &Blocks) -> Mat9 {
    let mut m = Mat9::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&b.mm);
    m.fixed_view_mut::<6, 3>(0, 6).copy_from(&b.me);
    m.fixed_view_mut::<3, 6>(6, 0).copy_from(&b.em);
    m.fixed_view_mut::<3, 3>(6, 6).copy_from(&b.ee);
    m
}

/// Modified polarization matrix `M · diag(I6, -I3)`: the matrix of the
/// enthalpy quadratic form in the strain at the void.
pub fn modified_polarization(m: &Mat9) -> Mat9 {
    m * electric_flip_strain()
}

/// Inverse of [`modified_polarization`].
pub fn unmodified_polarization(m_mod: &Mat9) -> Mat9 {
    m_mod * electric_flip_strain()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_field_reproduces_strain() {
        // gradient of x ↦ D(x)ᵀ e is D(e_k)ᵀ e in direction k
        let e = SVector::<f64, 9>::from_fn(|i, _| 0.3 * i as f64 - 1.1);
        let mut grad = SMatrix::<f64, 4, 3>::zeros();
        for k in 0..3 {
            let mut ek = Vector3::zeros();
            ek[k] = 1.0;
            let col = linear_field(&ek) * e;
            for c in 0..4 {
                grad[(c, k)] = col[c];
            }
        }
        let s = strain_from_gradient(&grad);
        assert_relative_eq!(s.0, e, epsilon = 1e-14);
    }

    #[test]
    fn rigid_modes_are_strain_free() {
        for r in 0..RIGID_DIM {
            assert!(rigid_mode_strain(r).norm() < 1e-15, "mode {r}");
        }
    }

    #[test]
    fn rigid_coefficients_recovered_at_origin() {
        let mut op = SMatrix::<f64, 7, 7>::zeros();
        for r in 0..7 {
            let field = |x: &Vector3<f64>| rigid_matrix(x).column(r).into_owned();
            let a = rigid_coefficients(&field(&Vector3::zeros()), &affine_gradient(field));
            op.set_column(r, &a.0);
        }
        assert_relative_eq!(op, SMatrix::<f64, 7, 7>::identity(), epsilon = 1e-14);
    }

    #[test]
    fn traction_operator_matches_contraction() {
        // D(n)ᵀ σ equals (σ n, q·n) for a symmetric stress and flux q
        let n = Vector3::new(0.2, -0.7, 0.4);
        let sig = Matrix3::new(1.0, 0.3, -0.2, 0.3, 2.0, 0.5, -0.2, 0.5, -1.0);
        let q = Vector3::new(0.1, 0.4, -0.6);
        let col = SVector::<f64, 9>::from([
            sig[(0, 0)],
            sig[(1, 1)],
            sig[(2, 2)],
            2f64.sqrt() * sig[(1, 2)],
            2f64.sqrt() * sig[(2, 0)],
            2f64.sqrt() * sig[(0, 1)],
            q[0],
            q[1],
            q[2],
        ]);
        let t = strain_operator(&n).transpose() * col;
        let sn = sig * n;
        assert_relative_eq!(t[0], sn[0], epsilon = 1e-14);
        assert_relative_eq!(t[1], sn[1], epsilon = 1e-14);
        assert_relative_eq!(t[2], sn[2], epsilon = 1e-14);
        assert_relative_eq!(t[3], q.dot(&n), epsilon = 1e-14);
    }

    #[test]
    fn modified_polarization_roundtrip() {
        let m = Mat9::from_fn(|i, j| (i * 9 + j) as f64 * 0.1 - 3.0);
        assert_relative_eq!(unmodified_polarization(&modified_polarization(&m)), m);
        let b = split_blocks(&m);
        assert_relative_eq!(join_blocks(&b), m);
    }
}
