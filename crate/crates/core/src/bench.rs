//! Shipped test problems with certified reference solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::diagnostics::{degeneracy_report, ReferenceSolution};
use crate::error::{check_dim, Error, Result};
use crate::model::{ConeSpec, ProblemDef};
use crate::spaces::{product_space, Functional, InnerProductSpace, PrimalVec};

/// Largest grid accepted by [`make_eigencontrol`].
pub const MAX_EIGENCONTROL_N: usize = 2000;

/// A named reference point of a benchmark.
#[derive(Debug, Clone)]
pub struct NamedReference {
    pub label: String,
    pub solution: ReferenceSolution,
}

#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub problem: ProblemDef,
    /// Certified references; the first one is the default target.
    pub references: Vec<NamedReference>,
    /// Starts with `‖z₀ − z*‖_Z ≤ r` and `‖λ₀ − λ*‖_{Y*} ≤ r` are expected to converge
    /// with a contracting error.
    pub certified_radius: f64,
    /// Smallest error that is resolved above roundoff in the Z metric.
    pub error_floor: f64,
    pub notes: String,
    /// Default start, as an offset from the default reference.
    pub default_offset: PrimalVec,
    pub default_lambda0: Functional,
}

impl BenchmarkProblem {
    pub fn reference(&self) -> Option<&ReferenceSolution> {
        self.references.first().map(|r| &r.solution)
    }

    pub fn reference_named(&self, label: &str) -> Option<&ReferenceSolution> {
        self.references.iter().find(|r| r.label == label).map(|r| &r.solution)
    }

    /// `z* + offset` for the default reference (or `offset` alone without one).
    pub fn start_from_offset(&self, offset: &PrimalVec) -> Result<PrimalVec> {
        check_dim(self.problem.nz(), offset.dim())?;
        Ok(match self.reference() {
            Some(r) => &r.z_star + offset,
            None => offset.clone(),
        })
    }

    /// A seeded start with `‖z₀ − z*‖_Z = z_radius` and `‖λ₀ − λ*‖_{Y*} ≤ lambda_radius`
    /// around the given reference, with `λ₀` projected into the polar cone.
    pub fn seeded_start(
        &self,
        reference: &ReferenceSolution,
        z_radius: f64,
        lambda_radius: f64,
        seed: u64,
    ) -> Result<(PrimalVec, Functional)> {
        let p = &self.problem;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dz = unit_direction(p.nz(), &mut rng);
        let dl = unit_direction(p.ny(), &mut rng);
        let s = Uniform::new(0.0_f64, 1.0).sample(&mut rng);
        let dz = p
            .z_space
            .cholesky_factor()
            .transpose()
            .solve_upper_triangular(&(dz * z_radius))
            .ok_or_else(|| Error::Internal("singular Z factor".into()))?;
        let dl = p.y_space.cholesky_factor() * dl * (lambda_radius * s);
        let (lambda0, _) = p.project_polar(&Functional(&reference.lambda_star.0 + dl))?;
        Ok((PrimalVec(&reference.z_star.0 + dz), lambda0))
    }
}

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    v / norm
}

/// `1e-15 · max(1, ‖M_Z‖₂^{1/2})`: coordinate roundoff as seen through the Z norm.
pub fn metric_error_floor(z_space: &InnerProductSpace) -> f64 {
    let top = z_space.mass().clone().symmetric_eigen().eigenvalues.max();
    1e-15 * top.sqrt().max(1.0)
}

fn certify_all(problem: &ProblemDef, points: Vec<(&str, PrimalVec)>) -> (Vec<NamedReference>, String) {
    let mut refs = Vec::new();
    let mut notes = String::new();
    for (label, z) in points {
        match ReferenceSolution::certify(problem, &z) {
            Ok(solution) => {
                if let Ok(d) = degeneracy_report(problem, &z) {
                    let smin = d.singular_values.last().copied().unwrap_or(0.0);
                    notes.push_str(&format!(
                        "{label}: smallest singular value {smin:.3e}, null space dim {}, rcq {}; ",
                        d.null_space_dim, d.rcq_satisfied
                    ));
                }
                refs.push(NamedReference { label: label.to_string(), solution });
            }
            Err(e) => {
                log::info!("{}: reference '{label}' not registered: {e}", problem.name);
                notes.push_str(&format!("{label}: not certified ({e}); "));
            }
        }
    }
    (refs, notes.trim_end().to_string())
}

/// `min x₁ + ½‖x‖²  s.t.  (x₁, x₁ + x₁²) = 0` on `ℝ²`.
///
/// The Jacobian `[[1, 0], [1 + 2x₁, 0]]` is rank one everywhere, the solution is
/// `x* = 0` and the multiplier set is the line `λ₁ + λ₂ = −1`.
pub fn make_degenerate_line() -> BenchmarkProblem {
    let z = InnerProductSpace::identity(2);
    let y = InnerProductSpace::identity(2);
    let cone = ConeSpec::zero(&y);
    let problem = ProblemDef::new(
        "degenerate-line",
        z,
        y,
        cone,
        Arc::new(|x: &PrimalVec| x[0] + 0.5 * x.norm_squared()),
        Arc::new(|x: &PrimalVec| Functional::from_slice(&[1.0 + x[0], x[1]])),
        Arc::new(|x: &PrimalVec| PrimalVec::from_slice(&[x[0], x[0] + x[0] * x[0]])),
        Arc::new(|x: &PrimalVec| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0 + 2.0 * x[0], 0.0])),
        Arc::new(|_: &PrimalVec, l: &Functional| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + 2.0 * l[1], 1.0]))
        }),
    )
    .expect("consistent dimensions");
    let (references, notes) = certify_all(&problem, vec![("solution", PrimalVec::zeros(2))]);
    let error_floor = metric_error_floor(&problem.z_space);
    BenchmarkProblem {
        name: "degenerate-line".into(),
        problem,
        references,
        certified_radius: 0.1,
        error_floor,
        notes,
        default_offset: PrimalVec::from_slice(&[0.1, 0.1]),
        default_lambda0: Functional::from_slice(&[-0.6, -0.45]),
    }
}

/// Projection-type problem `min ½‖x − x_d‖²  s.t.  x ∈ K` with identity metrics:
/// the primal solution for every complementarity pattern is found by projecting
/// `x_d` onto the span of the selected generators.
fn enumerate_projection(generators: &DMatrix<f64>, target: &DVector<f64>) -> Option<DVector<f64>> {
    let m = generators.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let idx: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let x = if idx.is_empty() {
            DVector::zeros(target.len())
        } else {
            let ys = DMatrix::from_fn(target.len(), idx.len(), |r, c| generators[(r, idx[c])]);
            let c = (ys.transpose() * &ys).lu().solve(&(ys.transpose() * target))?;
            if c.iter().any(|&v| v < -1e-14) {
                continue;
            }
            ys * c
        };
        let lambda = target - &x;
        if (generators.transpose() * &lambda).iter().any(|&p| p > 1e-14) {
            continue;
        }
        let val = 0.5 * (&x - target).norm_squared();
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, x));
        }
    }
    best.map(|(_, x)| x)
}

/// `min ½‖x − (0, −1)‖²  s.t.  x ∈ K = {μ (1, 0) : μ ≥ 0}` on `ℝ²`.
///
/// The solution `x* = 0` has a unique multiplier `(0, −1)` whose pairing with the
/// generator vanishes, so strict complementarity fails.
pub fn make_cone_instance() -> BenchmarkProblem {
    let z = InnerProductSpace::identity(2);
    let y = InnerProductSpace::identity(2);
    let gen = PrimalVec::from_slice(&[1.0, 0.0]);
    let cone = ConeSpec::new(&y, std::slice::from_ref(&gen)).expect("single nonzero generator");
    let target = DVector::from_vec(vec![0.0, -1.0]);
    let x_star = enumerate_projection(cone.generators(), &target).expect("projection exists");
    let t = target.clone();
    let t2 = target.clone();
    let problem = ProblemDef::new(
        "cone-instance",
        z,
        y,
        cone,
        Arc::new(move |x: &PrimalVec| 0.5 * (&x.0 - &t).norm_squared()),
        Arc::new(move |x: &PrimalVec| Functional(&x.0 - &t2)),
        Arc::new(|x: &PrimalVec| x.clone()),
        Arc::new(|_: &PrimalVec| DMatrix::identity(2, 2)),
        Arc::new(|_: &PrimalVec, _: &Functional| DMatrix::identity(2, 2)),
    )
    .expect("consistent dimensions");
    let (references, notes) = certify_all(&problem, vec![("solution", PrimalVec(x_star))]);
    let error_floor = metric_error_floor(&problem.z_space);
    BenchmarkProblem {
        name: "cone-instance".into(),
        problem,
        references,
        certified_radius: 0.1,
        error_floor,
        notes,
        default_offset: PrimalVec::from_slice(&[0.05, -0.85]),
        default_lambda0: Functional::from_slice(&[-0.05, -0.95]),
    }
}

/// Parameters of the eigenvalue control problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigencontrolParams {
    pub n: usize,
    pub alpha: f64,
    pub q_d: f64,
    pub u_d_mode: usize,
    pub u_d_amp: f64,
    /// Eigenmode whose branch `(c φ, −λ_h)` is registered as a reference.
    pub branch_mode: usize,
}

impl EigencontrolParams {
    /// The registered `eigencontrol-n49` instance.
    pub fn registered() -> Self {
        let n = 49;
        Self { n, alpha: 1.0, q_d: -discrete_eigenvalue(n, 1), u_d_mode: 2, u_d_amp: 0.1, branch_mode: 1 }
    }
}

/// `(2/h²)(1 − cos(kπh))`, the `k`-th eigenvalue of the 1-D finite-difference Laplacian.
pub fn discrete_eigenvalue(n: usize, k: usize) -> f64 {
    let h = 1.0 / (n + 1) as f64;
    2.0 / (h * h) * (1.0 - (k as f64 * PI * h).cos())
}

/// Interior grid points `x_i = i h`.
pub fn grid(n: usize) -> DVector<f64> {
    let h = 1.0 / (n + 1) as f64;
    DVector::from_fn(n, |i, _| (i + 1) as f64 * h)
}

/// `(1/h²) tridiag(−1, 2, −1)`.
pub fn fd_laplacian(n: usize) -> DMatrix<f64> {
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * s,
        1 => -s,
        _ => 0.0,
    })
}

/// Bilinear control of an eigenvalue problem on `(0, 1)`:
///
/// ```text
/// min ½‖u − u_d‖²_{L²} + (α/2)(q − q_d)²   s.t.   −u″ + q u = 0,  u(0) = u(1) = 0
/// ```
///
/// discretized by central differences on `n` interior points. The state space
/// carries the discrete `H²` metric `h I + h AᵀA`, the control space `ℝ` and the
/// constraint space the discrete `L²` metric `h I`.
pub fn make_eigencontrol(params: EigencontrolParams) -> Result<BenchmarkProblem> {
    let EigencontrolParams { n, alpha, q_d, u_d_mode, u_d_amp, branch_mode } = params;
    if n > MAX_EIGENCONTROL_N {
        return Err(Error::Unsupported(format!("n = {n} exceeds the dense limit {MAX_EIGENCONTROL_N}")));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 grid points, got {n}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if branch_mode == 0 || branch_mode > n {
        return Err(Error::InvalidArgument(format!("branch mode must be in 1..={n}, got {branch_mode}")));
    }
    let h = 1.0 / (n + 1) as f64;
    let a = fd_laplacian(n);
    let x = grid(n);
    let u_d = x.map(|xi| u_d_amp * (u_d_mode as f64 * PI * xi).sin());

    let h2 = InnerProductSpace::new(DMatrix::identity(n, n) * h + a.transpose() * &a * h)?;
    let z_space = product_space(&[h2, InnerProductSpace::identity(1)])?;
    let y_space = InnerProductSpace::new(DMatrix::identity(n, n) * h)?;
    let cone = ConeSpec::zero(&y_space);

    let split = move |z: &PrimalVec| (z.0.rows(0, n).into_owned(), z.0[n]);
    let (ud1, ud2) = (u_d.clone(), u_d.clone());
    let (a1, a2) = (a.clone(), a.clone());
    let problem = ProblemDef::new(
        format!("eigencontrol-n{n}"),
        z_space,
        y_space,
        cone,
        Arc::new(move |z: &PrimalVec| {
            let (u, q) = split(z);
            0.5 * h * (u - &ud1).norm_squared() + 0.5 * alpha * (q - q_d).powi(2)
        }),
        Arc::new(move |z: &PrimalVec| {
            let (u, q) = split(z);
            let mut g = DVector::zeros(n + 1);
            g.rows_mut(0, n).copy_from(&((u - &ud2) * h));
            g[n] = alpha * (q - q_d);
            Functional(g)
        }),
        Arc::new(move |z: &PrimalVec| {
            let (u, q) = split(z);
            PrimalVec(&a1 * &u + u * q)
        }),
        Arc::new(move |z: &PrimalVec| {
            let (u, q) = split(z);
            let mut j = DMatrix::zeros(n, n + 1);
            j.view_mut((0, 0), (n, n)).copy_from(&(&a2 + DMatrix::identity(n, n) * q));
            j.set_column(n, &u);
            j
        }),
        Arc::new(move |_: &PrimalVec, l: &Functional| {
            let mut hs = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                hs[(i, i)] = h;
                hs[(i, n)] = l[i];
                hs[(n, i)] = l[i];
            }
            hs[(n, n)] = alpha;
            hs
        }),
    )?;

    // Eigen-branch: u = c φ, q = −λ_h(k); the best c is the L² projection of u_d on φ.
    let phi = x.map(|xi| (branch_mode as f64 * PI * xi).sin());
    let c = u_d.dot(&phi) / phi.norm_squared();
    let mut eigen = DVector::zeros(n + 1);
    eigen.rows_mut(0, n).copy_from(&(&phi * c));
    eigen[n] = -discrete_eigenvalue(n, branch_mode);
    let mut trivial = DVector::zeros(n + 1);
    trivial[n] = q_d;

    let (references, notes) =
        certify_all(&problem, vec![("eigen-branch", PrimalVec(eigen)), ("trivial", PrimalVec(trivial))]);
    let mut offset = DVector::zeros(n + 1);
    offset.rows_mut(0, n).copy_from(&(&phi * 1e-3));
    offset[n] = 1e-2;
    let default_lambda0 = references.first().map_or_else(|| Functional::zeros(n), |r| r.solution.lambda_star.clone());
    let error_floor = metric_error_floor(&problem.z_space);
    Ok(BenchmarkProblem {
        name: format!("eigencontrol-n{n}"),
        problem,
        references,
        certified_radius: 0.3,
        error_floor,
        notes,
        default_offset: PrimalVec(offset),
        default_lambda0,
    })
}

/// Registered benchmark names, in a fixed order.
pub fn list_benchmarks() -> Vec<&'static str> {
    vec!["degenerate-line", "cone-instance", "eigencontrol-n49"]
}

pub fn load_benchmark(name: &str) -> Result<BenchmarkProblem> {
    match name {
        "degenerate-line" => Ok(make_degenerate_line()),
        "cone-instance" => Ok(make_cone_instance()),
        "eigencontrol-n49" => make_eigencontrol(EigencontrolParams::registered()),
        other => Err(Error::InvalidArgument(format!(
            "unknown benchmark '{other}' (available: {})",
            list_benchmarks().join(", ")
        ))),
    }
}
