//! Finite-dimensional models of Hilbert spaces.
//!
//! A space is a dimension plus an SPD mass matrix `M` defining
//! `(u, v) = uᵀ M v`. Primal elements ([`PrimalVec`]) carry coordinates;
//! dual elements ([`Functional`]) carry duality-pairing coefficients, so that
//! `⟨l, v⟩ = lᵀ v` and the adjoint of a coordinate matrix is its transpose.
//! The Riesz map is `v = M⁻¹ l`, and `‖l‖²_* = lᵀ M⁻¹ l`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Element of a primal space, stored as coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalVec(pub DVector<f64>);

/// Element of a dual space, stored as pairing coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional(pub DVector<f64>);

macro_rules! coord_newtype {
    ($t:ident) => {
        impl $t {
            pub fn zeros(dim: usize) -> Self {
                Self(DVector::zeros(dim))
            }

            pub fn from_vec(v: Vec<f64>) -> Self {
                Self(DVector::from_vec(v))
            }

            pub fn from_slice(v: &[f64]) -> Self {
                Self(DVector::from_column_slice(v))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }
        }

        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                self.as_slice().serialize(s)
            }
        }

        impl std::ops::Deref for $t {
            type Target = DVector<f64>;
            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl std::ops::Add<&$t> for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                $t(&self.0 + &rhs.0)
            }
        }

        impl std::ops::Sub<&$t> for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                $t(&self.0 - &rhs.0)
            }
        }
    };
}

coord_newtype!(PrimalVec);
coord_newtype!(Functional);

/// Textual description of a mass matrix, as accepted in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassSpec {
    Identity(usize),
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

/// An inner-product space `(ℝⁿ, (u, v) = uᵀ M v)`.
///
/// The mass matrix is Cholesky-factorized once on construction; the factor
/// serves Riesz maps, dual norms and metric whitening.
#[derive(Debug, Clone)]
pub struct InnerProductSpace {
    mass: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    mass_inv: DMatrix<f64>,
}

impl InnerProductSpace {
    pub fn new(mass: DMatrix<f64>) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 || mass.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "mass matrix must be square and nonempty, got {}x{}",
                mass.nrows(),
                mass.ncols()
            )));
        }
        if mass.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = mass.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            for i in (j + 1)..n {
                if (mass[(i, j)] - mass[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!("mass matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let chol = Cholesky::new(mass.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let mass_inv = chol.inverse();
        Ok(Self { mass, chol, mass_inv })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(weights)))
    }

    pub fn from_spec(spec: &MassSpec) -> Result<Self> {
        match spec {
            MassSpec::Identity(n) => {
                if *n == 0 {
                    return Err(Error::InvalidArgument("identity space of dimension 0".into()));
                }
                Ok(Self::identity(*n))
            }
            MassSpec::Diagonal(w) => Self::diagonal(w),
            MassSpec::Dense(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument("dense mass matrix is not square".into()));
                }
                Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.mass_inv
    }

    /// Lower Cholesky factor `L` with `M = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inner(&self, u: &PrimalVec, v: &PrimalVec) -> Result<f64> {
        check_dim(self.dim(), u.dim())?;
        check_dim(self.dim(), v.dim())?;
        Ok(u.0.dot(&(&self.mass * &v.0)))
    }

    pub fn norm(&self, u: &PrimalVec) -> Result<f64> {
        Ok(self.inner(u, u)?.max(0.0).sqrt())
    }

    /// Duality pairing `⟨l, v⟩ = lᵀ v`.
    pub fn pair(&self, l: &Functional, v: &PrimalVec) -> Result<f64> {
        check_dim(self.dim(), l.dim())?;
        check_dim(self.dim(), v.dim())?;
        Ok(l.0.dot(&v.0))
    }

    /// Riesz representative: `v` with `M v = l`.
    pub fn riesz(&self, l: &Functional) -> Result<PrimalVec> {
        check_dim(self.dim(), l.dim())?;
        Ok(PrimalVec(self.chol.solve(&l.0)))
    }

    /// Inverse Riesz map: `l = M v`.
    pub fn riesz_inverse(&self, v: &PrimalVec) -> Result<Functional> {
        check_dim(self.dim(), v.dim())?;
        Ok(Functional(&self.mass * &v.0))
    }

    /// Inner product of two functionals, `l₁ᵀ M⁻¹ l₂`.
    pub fn dual_inner(&self, l1: &Functional, l2: &Functional) -> Result<f64> {
        check_dim(self.dim(), l1.dim())?;
        check_dim(self.dim(), l2.dim())?;
        Ok(l1.0.dot(&self.chol.solve(&l2.0)))
    }

    pub fn dual_norm(&self, l: &Functional) -> Result<f64> {
        Ok(self.dual_inner(l, l)?.max(0.0).sqrt())
    }

    /// Raw-coordinate variants used on hot paths where dimensions are already checked.
    pub(crate) fn norm_coords(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.mass * u)).max(0.0).sqrt()
    }

    pub(crate) fn dual_norm_coeffs(&self, l: &DVector<f64>) -> f64 {
        l.dot(&self.chol.solve(l)).max(0.0).sqrt()
    }
}

/// Block-diagonal product of inner-product spaces.
#[derive(Debug, Clone)]
pub struct ProductSpace {
    space: InnerProductSpace,
    offsets: Vec<usize>,
}

impl ProductSpace {
    pub fn new(parts: &[InnerProductSpace]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("product of zero spaces".into()));
        }
        let total: usize = parts.iter().map(|p| p.dim()).sum();
        let mut mass = DMatrix::zeros(total, total);
        let mut offsets = Vec::with_capacity(parts.len() + 1);
        let mut off = 0;
        for p in parts {
            offsets.push(off);
            mass.view_mut((off, off), (p.dim(), p.dim())).copy_from(p.mass());
            off += p.dim();
        }
        offsets.push(off);
        Ok(Self { space: InnerProductSpace::new(mass)?, offsets })
    }

    pub fn space(&self) -> &InnerProductSpace {
        &self.space
    }

    pub fn into_space(self) -> InnerProductSpace {
        self.space
    }

    pub fn num_parts(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn join(&self, parts: &[PrimalVec]) -> Result<PrimalVec> {
        check_dim(self.num_parts(), parts.len())?;
        let mut out = DVector::zeros(self.space.dim());
        for (i, p) in parts.iter().enumerate() {
            let (a, b) = (self.offsets[i], self.offsets[i + 1]);
            check_dim(b - a, p.dim())?;
            out.rows_mut(a, b - a).copy_from(&p.0);
        }
        Ok(PrimalVec(out))
    }

    pub fn split(&self, v: &PrimalVec) -> Result<Vec<PrimalVec>> {
        check_dim(self.space.dim(), v.dim())?;
        Ok(self.offsets.windows(2).map(|w| PrimalVec(v.0.rows(w[0], w[1] - w[0]).into_owned())).collect())
    }
}

/// Convenience wrapper for [`ProductSpace::new`] returning only the assembled space.
pub fn product_space(parts: &[InnerProductSpace]) -> Result<InnerProductSpace> {
    ProductSpace::new(parts).map(ProductSpace::into_space)
}
