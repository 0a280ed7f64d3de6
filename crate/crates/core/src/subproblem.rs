//! One stabilized SQP step.
//!
//! Given `(z_k, λ_k, ρ)`, the step solves the first-order system of
//!
//! ```text
//! min_z max_{λ ∈ K°}  ⟨f'(z_k), z - z_k⟩ + ½⟨L''(z_k, λ_k)(z - z_k), z - z_k⟩
//!                     + ⟨λ, G(z_k) + G'(z_k)(z - z_k)⟩ - (ρ/2)‖λ - λ_k‖²_{Y*}
//! ```
//!
//! In coordinates `d = z - z_k`, `l = λ` this is the symmetric saddle system
//!
//! ```text
//! [ H   Jᵀ      ] [d]   [ -g                  ]
//! [ J  -ρ M_Y⁻¹ ] [l] = [ -G(z_k) - ρ M_Y⁻¹ λ_k ]
//! ```
//!
//! plus, for a nontrivial cone, the complementarity conditions
//! `r := G + J d - ρ M_Y⁻¹ (l - λ_k) = Σ cᵢ yᵢ`, `cᵢ ≥ 0`, `⟨l, yᵢ⟩ ≤ 0`,
//! `cᵢ ⟨l, yᵢ⟩ = 0`, handled by a primal-dual active-set iteration.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{asymmetry, Ldlt};
use crate::model::{ConeSpec, ProblemDef, MAX_ENUMERATED_GENERATORS};
use crate::spaces::{Functional, InnerProductSpace, PrimalVec};

/// Sign tolerance for accepting a cone complementarity pattern.
pub const SIGN_TOL: f64 = 1e-10;

/// The linear-quadratic data of one step.
#[derive(Debug, Clone)]
pub struct SaddleSystem<'a> {
    pub z_k: PrimalVec,
    pub lambda_k: Functional,
    /// `L''_zz(z_k, λ_k)`.
    pub hessian: DMatrix<f64>,
    /// `G'(z_k)`, `ny × nz`.
    pub jacobian: DMatrix<f64>,
    /// `f'(z_k)` as pairing coefficients.
    pub gradient: DVector<f64>,
    /// `G(z_k)` in Y coordinates.
    pub constraint: DVector<f64>,
    pub rho: f64,
    pub z_space: &'a InnerProductSpace,
    pub y_space: &'a InnerProductSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub z_next: PrimalVec,
    pub lambda_next: Functional,
    /// Generators whose complementarity pattern was fixed as "λ-pairing zero".
    pub active_set: Vec<usize>,
    /// Cone coordinates of `r` for all generators (zero outside the active set).
    pub cone_coords: DVector<f64>,
    pub inner_iterations: usize,
    /// `‖g + Jᵀ l + H d‖_{Z*}`.
    pub stationarity_residual: f64,
    /// True when the active-set iteration fell back to subset enumeration.
    pub enumerated: bool,
}

/// Residuals of the step's optimality conditions, see [`SaddleSystem::check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepResiduals {
    pub stationarity: f64,
    /// For `K = {0}`: `‖r‖_Y`. Otherwise the part of `r` orthogonal to `span{yᵢ}`.
    pub cone_residual: f64,
    pub min_coord: f64,
    pub max_pairing: f64,
    pub max_complementarity: f64,
}

impl<'a> SaddleSystem<'a> {
    pub fn new(problem: &'a ProblemDef, z_k: &PrimalVec, lambda_k: &Functional, rho: f64) -> Result<Self> {
        let sys = Self {
            z_k: z_k.clone(),
            lambda_k: lambda_k.clone(),
            hessian: problem.hess_l(z_k, lambda_k)?,
            jacobian: problem.jac_g(z_k)?,
            gradient: problem.grad_f(z_k)?.0,
            constraint: problem.g(z_k)?.0,
            rho,
            z_space: &problem.z_space,
            y_space: &problem.y_space,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let nz = self.z_space.dim();
        let ny = self.y_space.dim();
        check_dim(nz, self.z_k.dim())?;
        check_dim(ny, self.lambda_k.dim())?;
        check_dim(nz, self.gradient.len())?;
        check_dim(ny, self.constraint.len())?;
        if self.hessian.shape() != (nz, nz) || self.jacobian.shape() != (ny, nz) {
            return Err(Error::InvalidArgument("saddle system blocks have inconsistent shapes".into()));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("rho must be finite and nonnegative, got {}", self.rho)));
        }
        if asymmetry(&self.hessian) > 1e-10 {
            return Err(Error::InvalidArgument("hessian is not symmetric".into()));
        }
        Ok(())
    }

    fn nz(&self) -> usize {
        self.z_space.dim()
    }

    fn ny(&self) -> usize {
        self.y_space.dim()
    }

    /// Saddle matrix extended by the columns of the generators in `active`.
    pub fn assemble(&self, cone: Option<&ConeSpec>, active: &[usize]) -> DMatrix<f64> {
        let (nz, ny, na) = (self.nz(), self.ny(), active.len());
        let mut k = DMatrix::zeros(nz + ny + na, nz + ny + na);
        k.view_mut((0, 0), (nz, nz)).copy_from(&self.hessian);
        k.view_mut((0, nz), (nz, ny)).copy_from(&self.jacobian.transpose());
        k.view_mut((nz, 0), (ny, nz)).copy_from(&self.jacobian);
        k.view_mut((nz, nz), (ny, ny)).copy_from(&(self.y_space.mass_inverse() * (-self.rho)));
        if let Some(cone) = cone {
            for (a, &i) in active.iter().enumerate() {
                let y = cone.generators().column(i);
                k.view_mut((nz, nz + ny + a), (ny, 1)).copy_from(&(-y));
                k.view_mut((nz + ny + a, nz), (1, ny)).copy_from(&(-y.transpose()));
            }
        }
        k
    }

    fn rhs(&self, na: usize) -> DVector<f64> {
        let (nz, ny) = (self.nz(), self.ny());
        let mut b = DVector::zeros(nz + ny + na);
        b.rows_mut(0, nz).copy_from(&(-&self.gradient));
        let shift = self.y_space.mass_inverse() * &self.lambda_k.0 * self.rho;
        b.rows_mut(nz, ny).copy_from(&(-&self.constraint - shift));
        b
    }

    fn solve_pattern(
        &self,
        cone: Option<&ConeSpec>,
        active: &[usize],
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let k = self.assemble(cone, active);
        let f = Ldlt::factor(&k).map_err(|_| Error::SingularSubproblem { condition: f64::INFINITY })?;
        let x = f.solve(&self.rhs(active.len()));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSubproblem { condition: f.condition_estimate() });
        }
        let (nz, ny) = (self.nz(), self.ny());
        let m = cone.map_or(0, ConeSpec::len);
        let mut c = DVector::zeros(m);
        for (a, &i) in active.iter().enumerate() {
            c[i] = x[nz + ny + a];
        }
        Ok((x.rows(0, nz).into_owned(), x.rows(nz, ny).into_owned(), c))
    }

    fn finish(
        &self,
        d: DVector<f64>,
        l: DVector<f64>,
        c: DVector<f64>,
        active: Vec<usize>,
        iters: usize,
        enumerated: bool,
    ) -> SubproblemSolution {
        let res = &self.gradient + self.jacobian.transpose() * &l + &self.hessian * &d;
        SubproblemSolution {
            z_next: PrimalVec(&self.z_k.0 + d),
            lambda_next: Functional(l),
            active_set: active,
            cone_coords: c,
            inner_iterations: iters,
            stationarity_residual: self.z_space.dual_norm_coeffs(&res),
            enumerated,
        }
    }

    /// Solves the step for `K = {0}`.
    pub fn solve_equality(&self) -> Result<SubproblemSolution> {
        let (d, l, c) = self.solve_pattern(None, &[])?;
        Ok(self.finish(d, l, c, Vec::new(), 1, false))
    }

    /// Solves the step for a finitely generated cone by primal-dual active sets,
    /// falling back to subset enumeration if the pattern cycles.
    pub fn solve_cone(&self, cone: &ConeSpec) -> Result<SubproblemSolution> {
        if cone.is_empty() {
            return Err(Error::InvalidArgument("solve_cone needs at least one generator".into()));
        }
        check_dim(self.ny(), cone.generators().nrows())?;
        let m = cone.len();
        let max_iter = if m < 20 { (1usize << m) + 5 } else { 100 };
        let mut active: Vec<usize> = Vec::new();
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        for iter in 1..=max_iter {
            let (d, l, c) = self.solve_pattern(Some(cone), &active)?;
            let pairs = cone.pairings(&Functional(l.clone()));
            let next: Vec<usize> = (0..m).filter(|&i| c[i] + pairs[i] > 0.0).collect();
            if next == active {
                return Ok(self.finish(d, l, c, active, iter, false));
            }
            seen.insert(active.clone());
            if seen.contains(&next) {
                if sign_feasible(&c, &pairs) {
                    return Ok(self.finish(d, l, c, active, iter, false));
                }
                break;
            }
            active = next;
        }
        log::debug!("active-set iteration cycled; enumerating complementarity patterns");
        self.solve_cone_enumerate(cone)
    }

    /// Exhaustive search over complementarity patterns (at most
    /// [`MAX_ENUMERATED_GENERATORS`] generators).
    pub fn solve_cone_enumerate(&self, cone: &ConeSpec) -> Result<SubproblemSolution> {
        let m = cone.len();
        if m > MAX_ENUMERATED_GENERATORS {
            return Err(Error::NoConvergence { iterations: (1usize << m.min(20)) + 5 });
        }
        let mut best: Option<(f64, SubproblemSolution)> = None;
        for mask in 0u32..(1u32 << m) {
            let active: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
            let Ok((d, l, c)) = self.solve_pattern(Some(cone), &active) else { continue };
            let pairs = cone.pairings(&Functional(l.clone()));
            let viol = sign_violation(&c, &pairs);
            if viol <= SIGN_TOL && best.as_ref().is_none_or(|(v, _)| viol < *v) {
                best = Some((viol, self.finish(d, l, c, active, (mask + 1) as usize, true)));
            }
        }
        best.map(|(_, s)| s).ok_or(Error::NoConvergence { iterations: 1usize << m })
    }

    /// Dispatches to [`Self::solve_equality`] or [`Self::solve_cone`].
    pub fn solve(&self, cone: &ConeSpec) -> Result<SubproblemSolution> {
        if cone.is_empty() {
            self.solve_equality()
        } else {
            self.solve_cone(cone)
        }
    }

    /// Estimated 1-norm condition number of the saddle matrix; infinite if singular.
    pub fn condition_estimate(&self) -> f64 {
        Ldlt::factor(&self.assemble(None, &[])).map_or(f64::INFINITY, |f| f.condition_estimate())
    }

    /// `r = G + J d - ρ M_Y⁻¹ (l - λ_k)`.
    pub fn cone_residual_vector(&self, sol: &SubproblemSolution) -> DVector<f64> {
        let d = &sol.z_next.0 - &self.z_k.0;
        &self.constraint + &self.jacobian * d
            - self.y_space.mass_inverse() * (&sol.lambda_next.0 - &self.lambda_k.0) * self.rho
    }

    /// Evaluates every optimality condition of the step at `sol`.
    pub fn check(&self, cone: &ConeSpec, sol: &SubproblemSolution) -> Result<StepResiduals> {
        let d = &sol.z_next.0 - &self.z_k.0;
        let res = &self.gradient + self.jacobian.transpose() * &sol.lambda_next.0 + &self.hessian * d;
        let stationarity = self.z_space.dual_norm_coeffs(&res);
        let r = self.cone_residual_vector(sol);
        if cone.is_empty() {
            return Ok(StepResiduals {
                stationarity,
                cone_residual: self.y_space.norm_coords(&r),
                min_coord: 0.0,
                max_pairing: 0.0,
                max_complementarity: 0.0,
            });
        }
        let (c, rem) = cone.coords(self.y_space, &PrimalVec(r))?;
        let pairs = cone.pairings(&sol.lambda_next);
        Ok(StepResiduals {
            stationarity,
            cone_residual: rem,
            min_coord: c.min(),
            max_pairing: pairs.max(),
            max_complementarity: c.iter().zip(pairs.iter()).map(|(a, b)| (a * b).abs()).fold(0.0, f64::max),
        })
    }
}

fn sign_violation(c: &DVector<f64>, pairs: &DVector<f64>) -> f64 {
    c.iter().zip(pairs.iter()).map(|(&ci, &pi)| (-ci).max(pi).max(0.0)).fold(0.0, f64::max)
}

fn sign_feasible(c: &DVector<f64>, pairs: &DVector<f64>) -> bool {
    sign_violation(c, pairs) <= SIGN_TOL
}

/// Condition estimate of the step matrix at `(z_k, λ_k, ρ)`.
pub fn saddle_condition_estimate(sys: &SaddleSystem<'_>) -> f64 {
    sys.condition_estimate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::too_many_arguments)]
    fn system<'a>(
        z: &'a InnerProductSpace,
        y: &'a InnerProductSpace,
        h: DMatrix<f64>,
        j: DMatrix<f64>,
        g: DVector<f64>,
        gval: DVector<f64>,
        lambda_k: DVector<f64>,
        rho: f64,
    ) -> SaddleSystem<'a> {
        SaddleSystem {
            z_k: PrimalVec::zeros(z.dim()),
            lambda_k: Functional(lambda_k),
            hessian: h,
            jacobian: j,
            gradient: g,
            constraint: gval,
            rho,
            z_space: z,
            y_space: y,
        }
    }

    #[test]
    fn stationary_point_with_zero_jacobian() {
        let z = InnerProductSpace::identity(3);
        let y = InnerProductSpace::identity(1);
        let sys = system(
            &z,
            &y,
            DMatrix::identity(3, 3),
            DMatrix::zeros(1, 3),
            DVector::zeros(3),
            DVector::zeros(1),
            DVector::zeros(1),
            1.0,
        );
        let sol = sys.solve_equality().unwrap();
        assert_eq!(sol.z_next.norm(), 0.0);
        assert_eq!(sol.lambda_next.norm(), 0.0);
    }

    #[test]
    fn unstabilized_rank_deficient_system_is_singular() {
        let z = InnerProductSpace::identity(2);
        let y = InnerProductSpace::identity(2);
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let sys = system(
            &z,
            &y,
            DMatrix::identity(2, 2),
            j,
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::zeros(2),
            DVector::zeros(2),
            0.0,
        );
        assert!(matches!(sys.solve_equality(), Err(Error::SingularSubproblem { .. })));
        assert_eq!(sys.condition_estimate(), f64::INFINITY);
    }

    #[test]
    fn square_nonsingular_jacobian_without_stabilization() {
        let z = InnerProductSpace::identity(2);
        let y = InnerProductSpace::identity(2);
        let sys = system(
            &z,
            &y,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.5, 0.0]),
            DVector::zeros(2),
            0.0,
        );
        let c = sys.condition_estimate();
        assert!(c.is_finite() && c < 10.0);
        let sol = sys.solve_equality().unwrap();
        // J d = -G, H d + l = -g.
        assert!((sol.z_next[0] + 0.5).abs() < 1e-15 && sol.z_next[1].abs() < 1e-15);
    }

    #[test]
    fn identity_blocks_are_well_conditioned() {
        let z = InnerProductSpace::identity(3);
        let y = InnerProductSpace::identity(3);
        let sys = system(
            &z,
            &y,
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            DVector::zeros(3),
            DVector::zeros(3),
            1.0,
        );
        assert!(sys.condition_estimate() < 10.0);
    }

    #[test]
    fn rejects_negative_rho_and_asymmetric_hessian() {
        let z = InnerProductSpace::identity(2);
        let y = InnerProductSpace::identity(1);
        let sys = system(
            &z,
            &y,
            DMatrix::identity(2, 2),
            DMatrix::zeros(1, 2),
            DVector::zeros(2),
            DVector::zeros(1),
            DVector::zeros(1),
            -1.0,
        );
        assert!(sys.validate().is_err());
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let sys = system(&z, &y, h, DMatrix::zeros(1, 2), DVector::zeros(2), DVector::zeros(1), DVector::zeros(1), 1.0);
        assert!(sys.validate().is_err());
    }

    #[test]
    fn inactive_generator_matches_unconstrained_solve() {
        let z = InnerProductSpace::identity(2);
        let y = InnerProductSpace::identity(2);
        let cone = ConeSpec::new(&y, &[PrimalVec::from_slice(&[1.0, 0.0])]).unwrap();
        // Large negative λ_k pairing keeps ⟨λ, y₁⟩ < 0 and the generator unused.
        let sys = system(
            &z,
            &y,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.3, 0.1]),
            DVector::zeros(2),
            DVector::from_vec(vec![-5.0, 0.0]),
            0.5,
        );
        let sol = sys.solve_cone(&cone).unwrap();
        let eq = sys.solve_equality().unwrap();
        assert!(sol.active_set.is_empty());
        assert_eq!(sol.z_next, eq.z_next);
        assert_eq!(sol.lambda_next, eq.lambda_next);
    }
}
