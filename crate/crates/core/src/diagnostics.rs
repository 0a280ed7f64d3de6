//! Structural checks around a solution: multiplier-set projections, coercivity
//! of the stabilized Hessian, rank of the constraint Jacobian and the ratio of
//! true to estimated error.
//!
//! All metric computations are carried out in whitened coordinates: with
//! `M = L Lᵀ`, a primal vector `z` becomes `Lᵀz` and a functional `l` becomes
//! `L⁻¹l`, so that norms and dual norms turn Euclidean.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::model::{ConeSpec, ProblemDef, MAX_ENUMERATED_GENERATORS};
use crate::spaces::{Functional, InnerProductSpace, PrimalVec};

/// Relative singular-value cutoff used when describing the multiplier set.
const MULTIPLIER_RANK_TOL: f64 = 1e-9;
/// Residual bound certifying that the multiplier set is nonempty.
const CERTIFY_TOL: f64 = 1e-9;
/// Errors and residuals below this are treated as zero by [`error_estimate_ratio`].
const VANISHING: f64 = 1e-14;

/// A known primal solution with a description of its multiplier set
/// `Λ = {λ : f'(z*) + G'(z*)ᵀλ = 0, ⟨λ, yᵢ⟩ ≤ 0}`.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub z_star: PrimalVec,
    /// Minimum-norm element of `Λ`.
    pub lambda_star: Functional,
    pub jacobian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    cone: ConeSpec,
    y_space: InnerProductSpace,
    z_space: InnerProductSpace,
    /// Whitened particular solution and orthonormal null-space basis of `Jᵀ L_Y`.
    particular: DVector<f64>,
    null_basis: DMatrix<f64>,
}

impl ReferenceSolution {
    /// Builds the multiplier-set description at `z_star` and certifies it:
    /// `Λ` must be nonempty and the KKT residual at `(z*, λ*)` at most `1e-9`.
    pub fn certify(problem: &ProblemDef, z_star: &PrimalVec) -> Result<Self> {
        let jacobian = problem.jac_g(z_star)?;
        let gradient = problem.grad_f(z_star)?.0;
        let ly = problem.y_space.cholesky_factor();
        let b = jacobian.transpose() * &ly;
        let (particular, null_basis) = affine_solution(&b, &(-&gradient), MULTIPLIER_RANK_TOL);
        let residual = &b * &particular + &gradient;
        let res = problem.z_space.dual_norm_coeffs(&residual);
        if !(res <= CERTIFY_TOL * (1.0 + problem.z_space.dual_norm_coeffs(&gradient))) {
            return Err(Error::InvalidReference(format!(
                "no multiplier satisfies stationarity at the reference point (residual {res:e})"
            )));
        }
        let mut reference = Self {
            z_star: z_star.clone(),
            lambda_star: Functional::zeros(problem.ny()),
            jacobian,
            gradient,
            cone: problem.cone.clone(),
            y_space: problem.y_space.clone(),
            z_space: problem.z_space.clone(),
            particular,
            null_basis,
        };
        let (_, lambda_star) = reference.multiplier_distance(&Functional::zeros(problem.ny()))?;
        reference.lambda_star = lambda_star;
        let kkt = problem.kkt_residual(z_star, &reference.lambda_star)?;
        if !(kkt.total <= CERTIFY_TOL) {
            return Err(Error::InvalidReference(format!("KKT residual {:e} at the reference point", kkt.total)));
        }
        Ok(reference)
    }

    /// Dimension of the affine hull of `Λ`.
    pub fn multiplier_set_dim(&self) -> usize {
        self.null_basis.ncols()
    }

    pub fn err_z(&self, z: &PrimalVec) -> Result<f64> {
        check_dim(self.z_star.dim(), z.dim())?;
        Ok(self.z_space.norm_coords(&(&z.0 - &self.z_star.0)))
    }

    /// `‖z − z*‖_Z + dist(λ, Λ)`.
    pub fn total_error(&self, z: &PrimalVec, lambda: &Functional) -> Result<f64> {
        Ok(self.err_z(z)? + self.multiplier_distance(lambda)?.0)
    }

    /// Distance in `Y*` from `λ` to the multiplier set, and the closest multiplier.
    pub fn multiplier_distance(&self, lambda: &Functional) -> Result<(f64, Functional)> {
        check_dim(self.y_space.dim(), lambda.dim())?;
        let ly = self.y_space.cholesky_factor();
        let nu0 = ly.solve_lower_triangular(&lambda.0).ok_or_else(|| Error::Internal("singular Y factor".into()))?;
        let n = &self.null_basis;
        let t0 = n.transpose() * (&nu0 - &self.particular);
        // Inequalities ⟨μ, yᵢ⟩ ≤ 0 become C t ≤ b.
        let a = ly.transpose() * self.cone.generators();
        let c = a.transpose() * n;
        let b = -(a.transpose() * &self.particular);
        let m = self.cone.len();
        if m > MAX_ENUMERATED_GENERATORS {
            return Err(Error::Unsupported(format!(
                "multiplier projection supports at most {MAX_ENUMERATED_GENERATORS} generators"
            )));
        }
        let scale = 1.0 + nu0.norm() + self.particular.norm();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1u32 << m) {
            let rows: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
            let Some(t) = project_affine(&t0, &c, &b, &rows, 1e-10 * scale) else { continue };
            if (0..m).any(|i| c.row(i).dot(&t.transpose()) - b[i] > 1e-10 * scale) {
                continue;
            }
            let nu = &self.particular + n * &t;
            let dist = (&nu - &nu0).norm();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, nu));
            }
        }
        let (dist, nu) = best.ok_or_else(|| Error::InvalidReference("multiplier set is empty".into()))?;
        Ok((dist, Functional(ly * nu)))
    }
}

/// Least-norm solution of `B x = r` and an orthonormal basis of `ker B`.
fn affine_solution(b: &DMatrix<f64>, r: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = b.shape();
    // Pad with zero rows so the thin SVD exposes the full right singular basis.
    let mut padded = DMatrix::zeros(rows.max(cols), cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(b);
    let mut rp = DVector::zeros(rows.max(cols));
    rp.rows_mut(0, rows).copy_from(r);
    let svd = padded.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let tol = rel_tol * smax;
    let mut x = DVector::zeros(cols);
    let mut null = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let v = vt.row(i).transpose();
        if s > tol && s > 0.0 {
            x += v * (u.column(i).dot(&rp) / s);
        } else {
            null.push(v);
        }
    }
    let basis = if null.is_empty() { DMatrix::zeros(cols, 0) } else { DMatrix::from_columns(&null) };
    (x, basis)
}

/// Euclidean projection of `t0` onto `{t : C_S t = b_S}`; `None` if inconsistent.
fn project_affine(
    t0: &DVector<f64>,
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    rows: &[usize],
    tol: f64,
) -> Option<DVector<f64>> {
    if rows.is_empty() {
        return Some(t0.clone());
    }
    let k = t0.len();
    if k == 0 {
        return rows.iter().all(|&i| b[i].abs() <= tol).then(|| DVector::zeros(0));
    }
    let cs = DMatrix::from_fn(rows.len(), k, |a, j| c[(rows[a], j)]);
    let bs = DVector::from_fn(rows.len(), |a, _| b[rows[a]]);
    let rhs = &bs - &cs * t0;
    let gram = &cs * cs.transpose();
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let w = svd.solve(&rhs, 1e-12 * smax.max(f64::MIN_POSITIVE)).ok()?;
    let t = t0 + cs.transpose() * w;
    ((&cs * &t - bs).amax() <= tol).then_some(t)
}

/// Smallest eigenvalue of the pencil `(H + ρ⁻¹ Jᵀ M_Y J, M_Z)`.
pub fn coercivity_margin(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    mass_z: &DMatrix<f64>,
    mass_y: &DMatrix<f64>,
    rho: f64,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let nz = mass_z.nrows();
    if h.shape() != (nz, nz) || j.ncols() != nz || mass_y.shape() != (j.nrows(), j.nrows()) {
        return Err(Error::InvalidArgument("inconsistent block shapes".into()));
    }
    let lz = InnerProductSpace::new(mass_z.clone())
        .map_err(|e| Error::InvalidArgument(format!("Z mass: {e}")))?
        .cholesky_factor();
    let k = h + j.transpose() * mass_y * j / rho;
    let k = (&k + k.transpose()) * 0.5;
    let w = whiten(&k, &lz)?;
    Ok(w.symmetric_eigen().eigenvalues.min())
}

/// `L⁻¹ K L⁻ᵀ`, symmetrized.
fn whiten(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = l.solve_lower_triangular(k).ok_or_else(|| Error::Internal("singular factor".into()))?;
    let w = l.solve_lower_triangular(&a.transpose()).ok_or_else(|| Error::Internal("singular factor".into()))?;
    Ok((&w + w.transpose()) * 0.5)
}

/// Largest `ρ` in `[rho_lo, rho_hi]` with `coercivity_margin ≥ target`, located by
/// bisection in `log ρ`. Returns `None` if even `rho_lo` misses the target, and
/// `rho_hi` if it already attains it.
pub fn coercivity_threshold(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    mass_z: &DMatrix<f64>,
    mass_y: &DMatrix<f64>,
    target: f64,
    rho_lo: f64,
    rho_hi: f64,
) -> Result<Option<f64>> {
    if !(0.0 < rho_lo && rho_lo < rho_hi) {
        return Err(Error::InvalidArgument("need 0 < rho_lo < rho_hi".into()));
    }
    let ok = |rho: f64| coercivity_margin(h, j, mass_z, mass_y, rho).map(|m| m >= target);
    if ok(rho_hi)? {
        return Ok(Some(rho_hi));
    }
    if !ok(rho_lo)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (rho_lo.ln(), rho_hi.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(Some(lo.exp()))
}

/// Singular values of the constraint Jacobian measured in the space metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank_tol: f64,
    pub numerical_rank: usize,
    /// `nz − rank`.
    pub null_space_dim: usize,
    /// Surjectivity of `G'(z)` (the regularity condition for `K = {0}`).
    pub rcq_satisfied: bool,
}

fn whitened_jacobian(
    j: &DMatrix<f64>,
    z_space: &InnerProductSpace,
    y_space: &InnerProductSpace,
) -> Result<DMatrix<f64>> {
    let lz = z_space.cholesky_factor();
    let ly = y_space.cholesky_factor();
    // L_Yᵀ J L_Z⁻ᵀ = (L_Z⁻¹ Jᵀ L_Y)ᵀ.
    let a =
        lz.solve_lower_triangular(&(j.transpose() * ly)).ok_or_else(|| Error::Internal("singular Z factor".into()))?;
    Ok(a.transpose())
}

pub fn degeneracy_report(problem: &ProblemDef, z: &PrimalVec) -> Result<DegeneracyReport> {
    let j = problem.jac_g(z)?;
    jacobian_degeneracy(&j, &problem.z_space, &problem.y_space)
}

pub fn jacobian_degeneracy(
    j: &DMatrix<f64>,
    z_space: &InnerProductSpace,
    y_space: &InnerProductSpace,
) -> Result<DegeneracyReport> {
    let w = whitened_jacobian(j, z_space, y_space)?;
    let (ny, nz) = w.shape();
    let mut sv: Vec<f64> = w.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let rank_tol = 1e-8 * sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > rank_tol).count();
    Ok(DegeneracyReport {
        rcq_satisfied: ny <= nz && rank == ny && sv.last().is_some_and(|&s| s > rank_tol),
        singular_values: sv,
        rank_tol,
        numerical_rank: rank,
        null_space_dim: nz - rank,
    })
}

/// Smallest eigenvalue of `H` restricted to the numerical null space of `J`,
/// relative to the Z metric. `None` when the null space is trivial.
pub fn nullspace_curvature(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    z_space: &InnerProductSpace,
    y_space: &InnerProductSpace,
) -> Result<Option<f64>> {
    let w = whitened_jacobian(j, z_space, y_space)?;
    let report = jacobian_degeneracy(j, z_space, y_space)?;
    let (_, basis) = affine_solution(
        &w,
        &DVector::zeros(w.nrows()),
        report.rank_tol / report.singular_values[0].max(f64::MIN_POSITIVE),
    );
    if basis.ncols() == 0 {
        return Ok(None);
    }
    let hw = whiten(h, &z_space.cholesky_factor())?;
    let r = basis.transpose() * hw * &basis;
    Ok(Some(((&r + r.transpose()) * 0.5).symmetric_eigen().eigenvalues.min()))
}

/// Result of [`error_estimate_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimate {
    /// `max (‖z − z*‖ + dist(λ, Λ)) / (‖L'_z‖ + ‖G‖)` over the samples.
    pub ratio: f64,
    /// Index of the sample attaining the maximum.
    pub worst_sample: Option<usize>,
    /// Samples with numerator and denominator both below `1e-14`.
    pub skipped: usize,
}

pub fn error_estimate_ratio(
    reference: &ReferenceSolution,
    problem: &ProblemDef,
    samples: &[(PrimalVec, Functional)],
) -> Result<ErrorEstimate> {
    let mut out = ErrorEstimate { ratio: 0.0, worst_sample: None, skipped: 0 };
    for (i, (z, lambda)) in samples.iter().enumerate() {
        let num = reference.total_error(z, lambda)?;
        let kkt = problem.kkt_residual(z, lambda)?;
        let den = kkt.stationarity + kkt.feasibility + kkt.polar_violation;
        let ratio = if num <= VANISHING && den <= VANISHING {
            out.skipped += 1;
            continue;
        } else if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        };
        if out.worst_sample.is_none() || ratio > out.ratio {
            out.ratio = ratio;
            out.worst_sample = Some(i);
        }
    }
    Ok(out)
}

/// Seeded samples `(z, λ)` with `‖z − z*‖²_Z + ‖λ − λ*‖²_{Y*} ≤ radius²`, uniform in
/// the joint ball. Multipliers are projected into the polar cone.
pub fn sample_ball(
    problem: &ProblemDef,
    reference: &ReferenceSolution,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(PrimalVec, Functional)>> {
    let (nz, ny) = (problem.nz(), problem.ny());
    let lz = problem.z_space.cholesky_factor();
    let ly = problem.y_space.cholesky_factor();
    let lzt = lz.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0_f64, 1.0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = DVector::<f64>::from_fn(nz + ny, |_, _| StandardNormal.sample(&mut rng));
        let r = radius * unit.sample(&mut rng).powf(1.0 / (nz + ny) as f64) / x.norm();
        let dz = lzt
            .solve_upper_triangular(&(x.rows(0, nz) * r))
            .ok_or_else(|| Error::Internal("singular Z factor".into()))?;
        let dl = &ly * (x.rows(nz, ny) * r);
        let z = PrimalVec(&reference.z_star.0 + dz);
        let (lambda, _) = problem.project_polar(&Functional(&reference.lambda_star.0 + dl))?;
        out.push((z, lambda));
    }
    Ok(out)
}
