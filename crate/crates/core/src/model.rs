//! Problem definitions, the Lagrangian and the KKT residual.
//!
//! Problems have the form `min f(z)  s.t.  G(z) ∈ K ⊂ Y` with `K` a finitely
//! generated cone `{Σ μᵢ yᵢ : μᵢ ≥ 0}` (no generators means `K = {0}`).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::asymmetry;
use crate::spaces::{Functional, InnerProductSpace, PrimalVec};

/// Largest number of generators for which exact cone projections are enumerated.
pub const MAX_ENUMERATED_GENERATORS: usize = 12;

pub type ObjectiveFn = Arc<dyn Fn(&PrimalVec) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&PrimalVec) -> Functional + Send + Sync>;
pub type ConstraintFn = Arc<dyn Fn(&PrimalVec) -> PrimalVec + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&PrimalVec) -> DMatrix<f64> + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&PrimalVec, &Functional) -> DMatrix<f64> + Send + Sync>;

/// Generators `y₁..y_m` of the cone `K`, with their Gram matrix in `Y`.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    /// Generators as columns (Y coordinates), `ny × m`.
    generators: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl ConeSpec {
    /// The trivial cone `K = {0}`.
    pub fn zero(y: &InnerProductSpace) -> Self {
        Self { generators: DMatrix::zeros(y.dim(), 0), gram: DMatrix::zeros(0, 0) }
    }

    pub fn new(y: &InnerProductSpace, generators: &[PrimalVec]) -> Result<Self> {
        let m = generators.len();
        let mut cols = DMatrix::zeros(y.dim(), m);
        for (i, g) in generators.iter().enumerate() {
            check_dim(y.dim(), g.dim())?;
            cols.set_column(i, &g.0);
        }
        let gram = cols.transpose() * y.mass() * &cols;
        if m > 0 {
            let eig = gram.clone().symmetric_eigen().eigenvalues;
            let lo = eig.min();
            let hi = eig.max();
            if !(hi > 0.0) || lo <= 1e-10 * hi {
                return Err(Error::InvalidArgument(format!(
                    "cone generators are not linearly independent (gram eigenvalues in [{lo:e}, {hi:e}])"
                )));
            }
        }
        Ok(Self { generators: cols, gram })
    }

    pub fn len(&self) -> usize {
        self.generators.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Generator matrix, one generator per column.
    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn generator(&self, i: usize) -> PrimalVec {
        PrimalVec(self.generators.column(i).into_owned())
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Pairings `⟨λ, yᵢ⟩` for all generators.
    pub fn pairings(&self, lambda: &Functional) -> DVector<f64> {
        self.generators.transpose() * &lambda.0
    }

    /// Coordinates of the orthogonal projection of `r` onto `span{yᵢ}` and the
    /// norm of the orthogonal remainder.
    pub fn coords(&self, y: &InnerProductSpace, r: &PrimalVec) -> Result<(DVector<f64>, f64)> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("cone_coords needs at least one generator".into()));
        }
        check_dim(y.dim(), r.dim())?;
        let rhs = self.generators.transpose() * (y.mass() * &r.0);
        let c = self
            .gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Internal("gram matrix lost definiteness".into()))?
            .solve(&rhs);
        let rem = &r.0 - &self.generators * &c;
        Ok((c, y.norm_coords(&rem)))
    }

    /// Distance from `v` to the face `{Σ cᵢ yᵢ : cᵢ ≥ 0, cᵢ = 0 unless allowed[i]}`.
    pub(crate) fn face_distance(&self, y: &InnerProductSpace, v: &DVector<f64>, allowed: &[bool]) -> Result<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| allowed[i]).collect();
        if idx.len() > MAX_ENUMERATED_GENERATORS {
            return Err(Error::Unsupported(format!(
                "exact cone projection is limited to {MAX_ENUMERATED_GENERATORS} generators"
            )));
        }
        let b = self.generators.transpose() * (y.mass() * v);
        let mut best = y.norm_coords(v);
        for mask in 1u32..(1u32 << idx.len()) {
            let sub: Vec<usize> = idx.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &i)| i).collect();
            let g = DMatrix::from_fn(sub.len(), sub.len(), |a, c| self.gram[(sub[a], sub[c])]);
            let rhs = DVector::from_fn(sub.len(), |a, _| b[sub[a]]);
            let Some(ch) = g.cholesky() else { continue };
            let c = ch.solve(&rhs);
            if c.iter().any(|&ci| ci < 0.0) {
                continue;
            }
            let mut proj = DVector::zeros(v.len());
            for (a, &i) in sub.iter().enumerate() {
                proj.axpy(c[a], &self.generators.column(i), 1.0);
            }
            best = best.min(y.norm_coords(&(v - proj)));
        }
        Ok(best)
    }
}

/// An optimization problem `min f(z) s.t. G(z) ∈ K`, with user-supplied derivatives.
///
/// `jacobian(z)` maps Z coordinates to Y coordinates (`ny × nz`); `hessian(z, λ)`
/// is the full Hessian of the Lagrangian `f(z) + ⟨λ, G(z)⟩`.
#[derive(Clone)]
pub struct ProblemDef {
    pub name: String,
    pub z_space: InnerProductSpace,
    pub y_space: InnerProductSpace,
    pub cone: ConeSpec,
    pub objective: ObjectiveFn,
    pub gradient: GradientFn,
    pub constraint: ConstraintFn,
    pub jacobian: JacobianFn,
    pub hessian: HessianFn,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("name", &self.name)
            .field("nz", &self.z_space.dim())
            .field("ny", &self.y_space.dim())
            .field("m", &self.cone.len())
            .finish()
    }
}

/// KKT residual of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResidual {
    /// `‖L'_z(z, λ)‖_{Z*}`.
    pub stationarity: f64,
    /// Distance of `G(z)` to the face of `K` orthogonal to `λ`.
    pub feasibility: f64,
    /// `max_i max(0, ⟨λ, yᵢ⟩)`.
    pub polar_violation: f64,
    pub total: f64,
}

impl ProblemDef {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        z_space: InnerProductSpace,
        y_space: InnerProductSpace,
        cone: ConeSpec,
        objective: ObjectiveFn,
        gradient: GradientFn,
        constraint: ConstraintFn,
        jacobian: JacobianFn,
        hessian: HessianFn,
    ) -> Result<Self> {
        check_dim(y_space.dim(), cone.generators().nrows())?;
        Ok(Self { name: name.into(), z_space, y_space, cone, objective, gradient, constraint, jacobian, hessian })
    }

    pub fn nz(&self) -> usize {
        self.z_space.dim()
    }

    pub fn ny(&self) -> usize {
        self.y_space.dim()
    }

    pub fn f(&self, z: &PrimalVec) -> Result<f64> {
        check_dim(self.nz(), z.dim())?;
        Ok((self.objective)(z))
    }

    pub fn grad_f(&self, z: &PrimalVec) -> Result<Functional> {
        check_dim(self.nz(), z.dim())?;
        let g = (self.gradient)(z);
        check_dim(self.nz(), g.dim())?;
        Ok(g)
    }

    pub fn g(&self, z: &PrimalVec) -> Result<PrimalVec> {
        check_dim(self.nz(), z.dim())?;
        let v = (self.constraint)(z);
        check_dim(self.ny(), v.dim())?;
        Ok(v)
    }

    pub fn jac_g(&self, z: &PrimalVec) -> Result<DMatrix<f64>> {
        check_dim(self.nz(), z.dim())?;
        let j = (self.jacobian)(z);
        if j.nrows() != self.ny() || j.ncols() != self.nz() {
            return Err(Error::InvalidArgument(format!(
                "jacobian has shape {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                self.ny(),
                self.nz()
            )));
        }
        Ok(j)
    }

    pub fn hess_l(&self, z: &PrimalVec, lambda: &Functional) -> Result<DMatrix<f64>> {
        check_dim(self.nz(), z.dim())?;
        check_dim(self.ny(), lambda.dim())?;
        let h = (self.hessian)(z, lambda);
        if h.nrows() != self.nz() || h.ncols() != self.nz() {
            return Err(Error::InvalidArgument("hessian has wrong shape".into()));
        }
        Ok(h)
    }

    /// `L'_z(z, λ) = f'(z) + G'(z)ᵀ λ`.
    pub fn lagrangian_grad(&self, z: &PrimalVec, lambda: &Functional) -> Result<Functional> {
        check_dim(self.ny(), lambda.dim())?;
        let g = self.grad_f(z)?;
        let j = self.jac_g(z)?;
        Ok(Functional(g.0 + j.transpose() * &lambda.0))
    }

    pub fn cone_coords(&self, r: &PrimalVec) -> Result<(DVector<f64>, f64)> {
        self.cone.coords(&self.y_space, r)
    }

    pub fn kkt_residual(&self, z: &PrimalVec, lambda: &Functional) -> Result<KktResidual> {
        let grad = self.lagrangian_grad(z, lambda)?;
        let stationarity = self.z_space.dual_norm_coeffs(&grad.0);
        let gz = self.g(z)?;
        let (feasibility, polar_violation) = if self.cone.is_empty() {
            (self.y_space.norm_coords(&gz.0), 0.0)
        } else {
            if self.cone.len() > MAX_ENUMERATED_GENERATORS {
                return Err(Error::Unsupported(format!(
                    "kkt_residual supports at most {MAX_ENUMERATED_GENERATORS} generators"
                )));
            }
            let pairs = self.cone.pairings(lambda);
            let lnorm = self.y_space.dual_norm_coeffs(&lambda.0);
            let allowed: Vec<bool> = (0..self.cone.len())
                .map(|i| {
                    let ynorm = self.y_space.norm_coords(&self.cone.generators().column(i).into_owned());
                    pairs[i] >= -1e-12 * (1.0f64).max(lnorm * ynorm)
                })
                .collect();
            let feas = self.cone.face_distance(&self.y_space, &gz.0, &allowed)?;
            let polar = pairs.iter().fold(0.0_f64, |m, &p| m.max(p));
            (feas, polar)
        };
        Ok(KktResidual {
            stationarity,
            feasibility,
            polar_violation,
            total: stationarity + feasibility + polar_violation,
        })
    }

    /// Least-squares multiplier at `z`: minimizes `‖f'(z) + G'(z)ᵀλ‖_{Z*}`, taking
    /// the minimum-`‖·‖_{Y*}` solution when the minimizer is not unique.
    pub fn least_squares_multiplier(&self, z: &PrimalVec) -> Result<Functional> {
        let g = self.grad_f(z)?;
        let j = self.jac_g(z)?;
        let lz = self.z_space.cholesky_factor();
        let ly = self.y_space.cholesky_factor();
        // μ = L_Y⁻¹ λ, residual whitened by L_Z⁻¹.
        let a = lz
            .solve_lower_triangular(&(j.transpose() * &ly))
            .ok_or_else(|| Error::Internal("singular Z factor".into()))?;
        let rhs = -lz.solve_lower_triangular(&g.0).ok_or_else(|| Error::Internal("singular Z factor".into()))?;
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let mu = svd.solve(&rhs, 1e-12 * smax.max(f64::MIN_POSITIVE)).map_err(|e| Error::Internal(e.to_string()))?;
        Ok(Functional(ly * mu))
    }

    /// Projects `λ` into the polar cone by clipping positive pairings to zero
    /// (correction along the Riesz duals of the generators).
    pub fn project_polar(&self, lambda: &Functional) -> Result<(Functional, bool)> {
        check_dim(self.ny(), lambda.dim())?;
        if self.cone.is_empty() {
            return Ok((lambda.clone(), false));
        }
        let p = self.cone.pairings(lambda);
        let excess = p.map(|v| v.max(0.0));
        if excess.iter().all(|&v| v == 0.0) {
            return Ok((lambda.clone(), false));
        }
        let a = self
            .cone
            .gram()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Internal("gram matrix lost definiteness".into()))?
            .solve(&excess);
        let corr = self.y_space.mass() * (self.cone.generators() * a);
        Ok((Functional(&lambda.0 - corr), true))
    }

    /// Finite-difference checks of the user-supplied derivatives around `center`.
    pub fn validate_derivatives(
        &self,
        center: &PrimalVec,
        radius: f64,
        points: usize,
        seed: u64,
    ) -> Result<DerivativeCheck> {
        check_dim(self.nz(), center.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = self.nz();
        let ny = self.ny();
        let mut report = DerivativeCheck::default();
        for _ in 0..points {
            let z = PrimalVec(DVector::from_fn(nz, |i, _| center[i] + radius * rng.gen_range(-1.0..1.0)));
            let lambda = Functional(DVector::from_fn(ny, |_, _| rng.gen_range(-1.0..1.0)));

            let j = self.jac_g(&z)?;
            let g = self.grad_f(&z)?;
            let h = self.hess_l(&z, &lambda)?;
            let mut j_fd = DMatrix::zeros(ny, nz);
            let mut g_fd = DVector::zeros(nz);
            let mut h_fd = DMatrix::zeros(nz, nz);
            for k in 0..nz {
                let step = 1e-6 * (1.0 + z[k].abs());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp.0[k] += step;
                zm.0[k] -= step;
                let dg = (self.g(&zp)?.0 - self.g(&zm)?.0) / (2.0 * step);
                j_fd.set_column(k, &dg);
                g_fd[k] = (self.f(&zp)? - self.f(&zm)?) / (2.0 * step);
                let dl = (self.lagrangian_grad(&zp, &lambda)?.0 - self.lagrangian_grad(&zm, &lambda)?.0) / (2.0 * step);
                h_fd.set_column(k, &dl);
            }
            report.jacobian = report.jacobian.max(rel_max_err(&j, &j_fd));
            report.gradient = report.gradient.max(rel_max_err_v(&g.0, &g_fd));
            report.hessian = report.hessian.max(rel_max_err(&h, &h_fd));
            report.hessian_asymmetry = report.hessian_asymmetry.max(asymmetry(&h));

            // Affinity of the Hessian in λ.
            let l2 = Functional(DVector::from_fn(ny, |_, _| rng.gen_range(-1.0..1.0)));
            let h0 = self.hess_l(&z, &Functional::zeros(ny))?;
            let h1 = &h - &h0;
            let h2 = self.hess_l(&z, &l2)? - &h0;
            let h12 = self.hess_l(&z, &(&lambda + &l2))? - &h0;
            report.hessian_affinity = report.hessian_affinity.max(rel_max_err(&h12, &(h1 + h2)));
        }
        Ok(report)
    }
}

/// Worst relative discrepancies found by [`ProblemDef::validate_derivatives`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub jacobian: f64,
    pub gradient: f64,
    pub hessian: f64,
    pub hessian_asymmetry: f64,
    pub hessian_affinity: f64,
}

impl DerivativeCheck {
    /// Jacobian and gradient within `1e-5`, Hessian within `1e-4`, symmetry and
    /// affinity within `1e-10`.
    pub fn passed(&self) -> bool {
        self.jacobian <= 1e-5
            && self.gradient <= 1e-5
            && self.hessian <= 1e-4
            && self.hessian_asymmetry <= 1e-10
            && self.hessian_affinity <= 1e-10
    }
}

fn rel_max_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / scale
}

fn rel_max_err_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / scale
}


#[cfg(test)]
mod tests {
    use super::tests_support::{cone_problem, linear_degenerate};
    use super::*;

    #[test]
    fn lagrangian_grad_examples() {
        let p = linear_degenerate();
        let z = PrimalVec::zeros(2);
        let g = p.lagrangian_grad(&z, &Functional::from_slice(&[-0.5, -0.5])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);

        let z = PrimalVec::from_slice(&[0.3, -0.7]);
        let g0 = p.lagrangian_grad(&z, &Functional::zeros(2)).unwrap();
        assert_eq!(g0, p.grad_f(&z).unwrap());

        let lam = Functional::from_slice(&[0.2, -1.3]);
        let z2 = PrimalVec::from_slice(&[-1.0, 4.0]);
        let d1 = &p.lagrangian_grad(&z, &lam).unwrap() - &g0;
        let d2 = &p.lagrangian_grad(&z2, &lam).unwrap() - &p.lagrangian_grad(&z2, &Functional::zeros(2)).unwrap();
        assert!((d1.0 - d2.0).norm() < 1e-15);
    }

    #[test]
    fn cone_coords_examples() {
        let y = InnerProductSpace::identity(3);
        let gens = [PrimalVec::from_slice(&[1.0, 1.0, 0.0]), PrimalVec::from_slice(&[0.0, 1.0, 2.0])];
        let cone = ConeSpec::new(&y, &gens).unwrap();

        let (c, res) = cone.coords(&y, &gens[0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14 && c[1].abs() < 1e-14 && res < 1e-14);

        // Orthogonal to both generators: cross product.
        let r = PrimalVec::from_slice(&[2.0, -2.0, 1.0]);
        let (c, res) = cone.coords(&y, &r).unwrap();
        assert!(c.norm() < 1e-14);
        assert!((res - 3.0).abs() < 1e-14);

        // Least-squares oracle via normal equations on the generator matrix.
        let r = PrimalVec::from_slice(&[0.3, -1.2, 0.7]);
        let a = cone.generators().clone();
        let oracle = (a.transpose() * &a).try_inverse().unwrap() * a.transpose() * &r.0;
        let (c, _) = cone.coords(&y, &r).unwrap();
        assert!((c - oracle).norm() < 1e-10);

        assert!(ConeSpec::zero(&y).coords(&y, &r).is_err());
    }

    #[test]
    fn dependent_generators_rejected() {
        let y = InnerProductSpace::identity(2);
        let gens = [PrimalVec::from_slice(&[1.0, 0.0]), PrimalVec::from_slice(&[2.0, 0.0])];
        assert!(ConeSpec::new(&y, &gens).is_err());
    }

    #[test]
    fn kkt_residual_examples() {
        let p = linear_degenerate();
        let r = p.kkt_residual(&PrimalVec::zeros(2), &Functional::from_slice(&[-0.5, -0.5])).unwrap();
        assert!(r.total <= 1e-14);

        // Feasible z, zero multiplier: residual is the dual norm of f'(z).
        let z = PrimalVec::from_slice(&[0.0, 0.4]);
        let r = p.kkt_residual(&z, &Functional::zeros(2)).unwrap();
        assert!((r.total - (1.0f64 + 0.16).sqrt()).abs() < 1e-14);
        assert_eq!(r.polar_violation, 0.0);

        // f'(1, 0) = (1, 1), so λ = (-1, -1) is stationary, but ⟨λ, y₁⟩ = -1 < 0 forbids
        // G(z) = y₁ from counting as feasible.
        let p = cone_problem();
        let z = PrimalVec::from_slice(&[1.0, 0.0]);
        let lam = Functional::from_slice(&[-1.0, -1.0]);
        let r = p.kkt_residual(&z, &lam).unwrap();
        assert!(r.stationarity < 1e-15);
        assert!((r.feasibility - 1.0).abs() < 1e-14);

        // G(z) = y₁ ∈ K, ⟨λ, y₁⟩ = 0 and stationary: total residual vanishes.
        let lam = Functional::from_slice(&[0.0, 0.0]);
        let p2 = ProblemDef { gradient: Arc::new(|_: &PrimalVec| Functional::zeros(2)), ..p.clone() };
        let r = p2.kkt_residual(&z, &lam).unwrap();
        assert_eq!(r.total, 0.0);

        let r = p.kkt_residual(&PrimalVec::zeros(2), &Functional::from_slice(&[0.25, -1.0])).unwrap();
        assert_eq!(r.polar_violation, 0.25);
    }

    #[test]
    fn kkt_residual_invariant_across_multiplier_set() {
        let p = linear_degenerate();
        let z = PrimalVec::zeros(2);
        for t in [-3.0, -0.5, 0.0, 0.7, 10.0] {
            let lam = Functional::from_slice(&[-0.5 + t, -0.5 - t]);
            assert!(p.kkt_residual(&z, &lam).unwrap().total <= 1e-14);
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = DMatrix::<f64>::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        for _ in 0..20 {
            let lam = DVector::<f64>::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let d = DVector::<f64>::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = (j.transpose() * &lam).dot(&d);
            let rhs = lam.dot(&(&j * &d));
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn least_squares_multiplier_is_minimum_norm() {
        let p = linear_degenerate();
        let lam = p.least_squares_multiplier(&PrimalVec::zeros(2)).unwrap();
        assert!((lam[0] + 0.5).abs() < 1e-14 && (lam[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn polar_projection_clips_pairings() {
        let p = cone_problem();
        let (lam, changed) = p.project_polar(&Functional::from_slice(&[0.3, -1.0])).unwrap();
        assert!(changed);
        assert!(lam[0].abs() < 1e-15 && lam[1] == -1.0);
        let (lam, changed) = p.project_polar(&Functional::from_slice(&[-0.3, 2.0])).unwrap();
        assert!(!changed);
        assert_eq!(lam.as_slice(), &[-0.3, 2.0]);
    }

    #[test]
    fn finite_difference_validation_passes() {
        let p = linear_degenerate();
        let rep = p.validate_derivatives(&PrimalVec::zeros(2), 0.5, 10, 1).unwrap();
        assert!(rep.passed(), "{rep:?}");

        let bad = ProblemDef { jacobian: Arc::new(|_: &PrimalVec| DMatrix::identity(2, 2)), ..p };
        let rep = bad.validate_derivatives(&PrimalVec::zeros(2), 0.5, 10, 1).unwrap();
        assert!(!rep.passed());
    }
}
