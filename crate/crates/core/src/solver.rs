//! The outer stabilized SQP loop.

use serde::{Deserialize, Serialize};

use crate::diagnostics::ReferenceSolution;
use crate::error::{check_dim, Error, Result};
use crate::model::{KktResidual, ProblemDef};
use crate::spaces::{Functional, PrimalVec};
use crate::subproblem::SaddleSystem;

/// Errors below this are excluded from order estimates.
pub const ORDER_FLOOR: f64 = 1e-15;

/// How the stabilization parameter `ρ_k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RhoRule {
    /// `θ` times the computable KKT residual.
    ErrorProportional {
        theta: f64,
    },
    Fixed {
        rho: f64,
    },
    /// `σ₀` times the true error; needs a reference solution.
    TrueErrorOracle {
        sigma0: f64,
    },
}

impl Default for RhoRule {
    fn default() -> Self {
        RhoRule::ErrorProportional { theta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho_rule: RhoRule,
    pub sigma1: f64,
    pub rho_min: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, rho_rule: RhoRule::default(), sigma1: 1.0, rho_min: 1e-14 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.sigma1) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < rho_min <= sigma1, got rho_min = {}, sigma1 = {}",
                self.rho_min, self.sigma1
            )));
        }
        match self.rho_rule {
            RhoRule::ErrorProportional { theta } if !(theta > 0.0) => {
                Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")))
            }
            RhoRule::Fixed { rho } if !(rho >= 0.0 && rho.is_finite()) => {
                Err(Error::InvalidArgument(format!("fixed rho must be finite and nonnegative, got {rho}")))
            }
            RhoRule::TrueErrorOracle { sigma0 } if !(sigma0 > 0.0) => {
                Err(Error::InvalidArgument(format!("sigma0 must be positive, got {sigma0}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    pub z: PrimalVec,
    pub lambda: Functional,
    /// Parameter chosen at this iterate (also evaluated at the final iterate).
    pub rho: f64,
    pub kkt: KktResidual,
    pub err_z: Option<f64>,
    pub dist_lambda: Option<f64>,
    pub total_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    SubproblemFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub history: Vec<IterateRecord>,
    pub status: SolveStatus,
    /// Iteration whose subproblem failed.
    pub failed_iteration: Option<usize>,
    pub failure: Option<String>,
    pub observed_orders: Vec<f64>,
    /// `max total_err / kkt_total` over the run (needs a reference).
    pub gamma_hat: Option<f64>,
}

impl SolveReport {
    pub fn last(&self) -> &IterateRecord {
        self.history.last().expect("history is nonempty")
    }

    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }

    /// The error sequence used for order estimates: `total_err` if known, else `kkt.total`.
    pub fn error_sequence(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.total_err.unwrap_or(r.kkt.total)).collect()
    }

    pub fn final_order(&self) -> Option<f64> {
        self.observed_orders.last().copied()
    }
}

/// `ρ` for the iterate `(z, λ)`.
pub fn rho_rule(
    problem: &ProblemDef,
    z: &PrimalVec,
    lambda: &Functional,
    opts: &SolverOptions,
    reference: Option<&ReferenceSolution>,
) -> Result<f64> {
    let clamp = |v: f64| v.clamp(opts.rho_min, opts.sigma1);
    match opts.rho_rule {
        RhoRule::ErrorProportional { theta } => {
            let kkt = problem.kkt_residual(z, lambda)?;
            Ok(clamp(theta * kkt.total))
        }
        RhoRule::Fixed { rho } => Ok(rho),
        RhoRule::TrueErrorOracle { sigma0 } => {
            let reference = reference
                .ok_or_else(|| Error::InvalidArgument("the true-error rule needs a reference solution".into()))?;
            Ok(clamp(sigma0 * reference.total_error(z, lambda)?))
        }
    }
}

/// `p_k = log(e_{k+1}/e_k) / log(e_k/e_{k-1})` over consecutive triples of
/// errors at or above [`ORDER_FLOOR`].
pub fn observed_order(errs: &[f64]) -> Vec<f64> {
    observed_order_above(errs, ORDER_FLOOR)
}

/// Like [`observed_order`], stopping at the first error below `floor`.
pub fn observed_order_above(errs: &[f64], floor: f64) -> Vec<f64> {
    order_column(errs, floor).into_iter().flatten().collect()
}

/// Per-iterate order estimates: entry `k` uses `e_{k-2}, e_{k-1}, e_k` and is
/// `None` when fewer than three errors at or above `floor` lead up to it.
pub fn order_column(errs: &[f64], floor: f64) -> Vec<Option<f64>> {
    let resolved = errs.iter().take_while(|&&e| e >= floor && e.is_finite()).count();
    (0..errs.len())
        .map(|k| {
            if k < 2 || k >= resolved {
                return None;
            }
            let num = (errs[k] / errs[k - 1]).ln();
            let den = (errs[k - 1] / errs[k - 2]).ln();
            (den != 0.0).then(|| num / den)
        })
        .collect()
}

fn record(
    problem: &ProblemDef,
    k: usize,
    z: &PrimalVec,
    lambda: &Functional,
    opts: &SolverOptions,
    reference: Option<&ReferenceSolution>,
) -> Result<IterateRecord> {
    let kkt = problem.kkt_residual(z, lambda)?;
    let (err_z, dist_lambda) = match reference {
        Some(r) => (Some(r.err_z(z)?), Some(r.multiplier_distance(lambda)?.0)),
        None => (None, None),
    };
    Ok(IterateRecord {
        k,
        z: z.clone(),
        lambda: lambda.clone(),
        rho: rho_rule(problem, z, lambda, opts, reference)?,
        kkt,
        err_z,
        dist_lambda,
        total_err: err_z.zip(dist_lambda).map(|(a, b)| a + b),
    })
}

/// Runs the stabilized SQP iteration from `(z0, λ0)`.
///
/// A multiplier outside the polar cone is projected onto it first. With a
/// reference solution the history carries true errors and the observed orders
/// are computed from them; otherwise from the KKT residuals.
pub fn run(
    problem: &ProblemDef,
    z0: &PrimalVec,
    lambda0: &Functional,
    opts: &SolverOptions,
    reference: Option<&ReferenceSolution>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_dim(problem.nz(), z0.dim())?;
    check_dim(problem.ny(), lambda0.dim())?;
    if matches!(opts.rho_rule, RhoRule::TrueErrorOracle { .. }) && reference.is_none() {
        return Err(Error::InvalidArgument("the true-error rule needs a reference solution".into()));
    }
    let (mut lambda, projected) = problem.project_polar(lambda0)?;
    if projected {
        log::warn!("initial multiplier is outside the polar cone; projected");
    }
    let mut z = z0.clone();
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut failed_iteration = None;
    let mut failure = None;
    for k in 0..=opts.max_iter {
        let rec = record(problem, k, &z, &lambda, opts, reference)?;
        log::debug!("k = {k}: kkt = {:e}", rec.kkt.total);
        if rec.kkt.total <= opts.tol {
            history.push(rec);
            status = SolveStatus::Converged;
            break;
        }
        if k == opts.max_iter {
            history.push(rec);
            break;
        }
        let rho = rec.rho;
        history.push(rec);
        let step = SaddleSystem::new(problem, &z, &lambda, rho).and_then(|s| s.solve(&problem.cone));
        match step {
            Ok(sol) => {
                z = sol.z_next;
                lambda = sol.lambda_next;
            }
            Err(e @ (Error::SingularSubproblem { .. } | Error::NoConvergence { .. })) => {
                log::info!("subproblem failed at iteration {k}: {e}");
                status = SolveStatus::SubproblemFailure;
                failed_iteration = Some(k);
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut report =
        SolveReport { history, status, failed_iteration, failure, observed_orders: Vec::new(), gamma_hat: None };
    report.observed_orders = observed_order(&report.error_sequence());
    if reference.is_some() {
        report.gamma_hat = report
            .history
            .iter()
            .filter(|r| r.kkt.total > 0.0)
            .filter_map(|r| r.total_err.map(|e| e / r.kkt.total))
            .reduce(f64::max);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests_support::{cone_problem, linear_degenerate};

    #[test]
    fn order_examples() {
        let p = observed_order(&[1e-1, 1e-2, 1e-4, 1e-8]);
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let p = observed_order(&[1e-1, 1e-2, 1e-3]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let geo: Vec<f64> = (0..10).map(|i| 0.5f64.powi(i)).collect();
        assert!(observed_order(&geo).iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(observed_order(&[1.0, 0.1]).is_empty());
        assert_eq!(observed_order(&[1e-2, 1e-4, 1e-8, 1e-16, 0.0]).len(), 1);
    }

    #[test]
    fn rho_rule_examples() {
        let p = linear_degenerate();
        let opts = SolverOptions::default();
        let z = PrimalVec::zeros(2);
        let l = Functional::from_slice(&[-0.5, -0.5]);
        assert_eq!(rho_rule(&p, &z, &l, &opts, None).unwrap(), opts.rho_min);
        let fixed = SolverOptions { rho_rule: RhoRule::Fixed { rho: 0.3 }, ..opts };
        assert_eq!(rho_rule(&p, &z, &l, &fixed, None).unwrap(), 0.3);
        let oracle = SolverOptions { rho_rule: RhoRule::TrueErrorOracle { sigma0: 1.0 }, ..opts };
        assert!(matches!(rho_rule(&p, &z, &l, &oracle, None), Err(Error::InvalidArgument(_))));
        // Stationarity (1 + x₁ + λ₁ + λ₂, x₂) and ‖G‖ = √2 |x₁|.
        let z = PrimalVec::from_slice(&[0.1, 0.1]);
        let l = Functional::from_slice(&[-0.4, -0.4]);
        let expect = (0.3f64 * 0.3 + 0.01).sqrt() + 2f64.sqrt() * 0.1;
        assert!((rho_rule(&p, &z, &l, &opts, None).unwrap() - expect).abs() < 1e-15);
        let capped = SolverOptions { sigma1: 0.2, ..opts };
        assert_eq!(rho_rule(&p, &z, &l, &capped, None).unwrap(), 0.2);
    }

    #[test]
    fn invalid_options() {
        let bad = [
            SolverOptions { tol: 0.0, ..Default::default() },
            SolverOptions { rho_min: 2.0, ..Default::default() },
            SolverOptions { rho_rule: RhoRule::ErrorProportional { theta: -1.0 }, ..Default::default() },
            SolverOptions { rho_rule: RhoRule::Fixed { rho: -1.0 }, ..Default::default() },
        ];
        for o in bad {
            assert!(o.validate().is_err());
        }
    }

    #[test]
    fn start_at_solution() {
        let p = linear_degenerate();
        let r = run(&p, &PrimalVec::zeros(2), &Functional::from_slice(&[-0.5, -0.5]), &SolverOptions::default(), None)
            .unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn unstabilized_run_fails_on_rank_deficiency() {
        let p = linear_degenerate();
        let opts = SolverOptions { rho_rule: RhoRule::Fixed { rho: 0.0 }, ..Default::default() };
        let r =
            run(&p, &PrimalVec::from_slice(&[0.1, 0.1]), &Functional::from_slice(&[-0.6, -0.45]), &opts, None).unwrap();
        assert_eq!(r.status, SolveStatus::SubproblemFailure);
        assert_eq!(r.failed_iteration, Some(0));
    }

    #[test]
    fn projects_initial_multiplier() {
        let p = cone_problem();
        let r = run(
            &p,
            &PrimalVec::from_slice(&[0.05, -0.05]),
            &Functional::from_slice(&[0.5, -1.0]),
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        assert!(r.history[0].lambda[0] <= 0.0);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn deterministic() {
        let p = linear_degenerate();
        let go = || {
            run(
                &p,
                &PrimalVec::from_slice(&[0.03, -0.02]),
                &Functional::from_slice(&[-0.6, -0.45]),
                &SolverOptions::default(),
                None,
            )
            .unwrap()
        };
        assert_eq!(go(), go());
    }
}
