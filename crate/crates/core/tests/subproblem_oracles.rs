use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssqp::bench::make_degenerate_line;
use ssqp::model::ConeSpec;
use ssqp::spaces::{Functional, InnerProductSpace, PrimalVec};
use ssqp::subproblem::SaddleSystem;
use ssqp::Error;

fn spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// `[H Jᵀ; J −ρM⁻¹] (d, l) = (−g, −G − ρM⁻¹λ_k)` by LU.
fn dense_oracle(sys: &SaddleSystem<'_>) -> (DVector<f64>, DVector<f64>) {
    let nz = sys.hessian.nrows();
    let ny = sys.jacobian.nrows();
    let minv = sys.y_space.mass().clone().try_inverse().unwrap();
    let mut k = DMatrix::<f64>::zeros(nz + ny, nz + ny);
    k.view_mut((0, 0), (nz, nz)).copy_from(&sys.hessian);
    k.view_mut((0, nz), (nz, ny)).copy_from(&sys.jacobian.transpose());
    k.view_mut((nz, 0), (ny, nz)).copy_from(&sys.jacobian);
    k.view_mut((nz, nz), (ny, ny)).copy_from(&(-&minv * sys.rho));
    let mut rhs = DVector::<f64>::zeros(nz + ny);
    rhs.rows_mut(0, nz).copy_from(&(-&sys.gradient));
    rhs.rows_mut(nz, ny).copy_from(&(-&sys.constraint - &minv * &sys.lambda_k.0 * sys.rho));
    let x = k.lu().solve(&rhs).unwrap();
    (&sys.z_k.0 + x.rows(0, nz), x.rows(nz, ny).into_owned())
}

#[test]
fn degenerate_step_matches_dense_solve() {
    let b = make_degenerate_line();
    let z = PrimalVec::from_slice(&[0.1, 0.1]);
    let l = Functional::from_slice(&[-0.5, -0.5]);
    let sys = SaddleSystem::new(&b.problem, &z, &l, 0.05).unwrap();
    assert_eq!(sys.jacobian, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.2, 0.0]));
    let sol = sys.solve_equality().unwrap();
    let (zo, lo) = dense_oracle(&sys);
    assert!((&sol.z_next.0 - zo).amax() <= 1e-12);
    assert!((&sol.lambda_next.0 - lo).amax() <= 1e-12);
}

#[test]
fn rescaled_constraint_metric_gives_same_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = 4.0;
    let zs = InnerProductSpace::new(spd(3, &mut rng)).unwrap();
    let my = spd(2, &mut rng);
    let ys = InnerProductSpace::new(my.clone()).unwrap();
    let ys_scaled = InnerProductSpace::new(my * s).unwrap();
    let lambda = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let base = SaddleSystem {
        z_k: PrimalVec::from_slice(&[0.3, -0.2, 0.1]),
        lambda_k: Functional(lambda),
        hessian: spd(3, &mut rng),
        jacobian: DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0)),
        gradient: DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
        constraint: DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        rho: 0.3,
        z_space: &zs,
        y_space: &ys,
    };
    // Pairing coefficients do not depend on the metric, so s M_Y with s ρ is the same step.
    let scaled = SaddleSystem { rho: base.rho * s, y_space: &ys_scaled, ..base.clone() };
    let a = base.solve_equality().unwrap();
    let b = scaled.solve_equality().unwrap();
    assert!((&a.z_next.0 - &b.z_next.0).amax() <= 1e-12);
    assert!((&a.lambda_next.0 - &b.lambda_next.0).amax() <= 1e-12);
    // s M_Y at fixed ρ acts like M_Y at ρ / s.
    let heavier = SaddleSystem { y_space: &ys_scaled, ..base.clone() };
    let smaller_rho = SaddleSystem { rho: base.rho / s, ..base.clone() };
    let c = heavier.solve_equality().unwrap();
    let d = smaller_rho.solve_equality().unwrap();
    assert!((&c.z_next.0 - &d.z_next.0).amax() <= 1e-12);
}

#[test]
fn equality_solve_matches_lu_on_seeded_systems() {
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = rng.gen_range(2..7);
        let ny = rng.gen_range(1..nz + 2);
        let zs = InnerProductSpace::new(spd(nz, &mut rng)).unwrap();
        let ys = InnerProductSpace::new(spd(ny, &mut rng)).unwrap();
        let h = DMatrix::<f64>::from_fn(nz, nz, |_, _| rng.gen_range(-1.0..1.0));
        let sys = SaddleSystem {
            z_k: PrimalVec(DVector::from_fn(nz, |_, _| rng.gen_range(-1.0..1.0))),
            lambda_k: Functional(DVector::from_fn(ny, |_, _| rng.gen_range(-1.0..1.0))),
            hessian: (&h + h.transpose()) * 0.5 + DMatrix::identity(nz, nz) * 2.0,
            jacobian: DMatrix::from_fn(ny, nz, |_, _| rng.gen_range(-1.0..1.0)),
            gradient: DVector::from_fn(nz, |_, _| rng.gen_range(-1.0..1.0)),
            constraint: DVector::from_fn(ny, |_, _| rng.gen_range(-1.0..1.0)),
            rho: rng.gen_range(0.01..1.0),
            z_space: &zs,
            y_space: &ys,
        };
        let sol = sys.solve(&ConeSpec::zero(&ys)).unwrap();
        let (zo, lo) = dense_oracle(&sys);
        assert!((&sol.z_next.0 - zo).amax() <= 1e-11, "seed {seed}");
        assert!((&sol.lambda_next.0 - lo).amax() <= 1e-11, "seed {seed}");
        assert!(sol.active_set.is_empty());
    }
}

#[test]
fn condition_estimate_grows_like_inverse_rho() {
    let b = make_degenerate_line();
    let z = PrimalVec::from_slice(&[0.1, 0.1]);
    let l = Functional::from_slice(&[-0.5, -0.5]);
    let rhos: Vec<f64> = (2..=8).map(|e| 10f64.powi(-e)).collect();
    let conds: Vec<f64> =
        rhos.iter().map(|&r| SaddleSystem::new(&b.problem, &z, &l, r).unwrap().condition_estimate()).collect();
    // Least-squares slope of log κ against log(1/ρ).
    let xs: Vec<f64> = rhos.iter().map(|r| -r.ln()).collect();
    let ys: Vec<f64> = conds.iter().map(|c| c.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope >= 0.95, "slope {slope}");
    for (r, c) in rhos.iter().zip(&conds) {
        assert!(*c >= 0.5 / r);
    }
    assert_eq!(SaddleSystem::new(&b.problem, &z, &l, 0.0).unwrap().condition_estimate(), f64::INFINITY);
}

#[test]
fn unstabilized_degenerate_step_is_reported_singular() {
    let b = make_degenerate_line();
    let sys =
        SaddleSystem::new(&b.problem, &PrimalVec::from_slice(&[0.1, 0.1]), &Functional::from_slice(&[-0.5, -0.5]), 0.0)
            .unwrap();
    assert!(matches!(sys.solve_equality(), Err(Error::SingularSubproblem { .. })));
}

/// The cone step by enumeration over `A ∈ {∅, {1}}` for one generator.
fn single_generator_oracle(sys: &SaddleSystem<'_>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let nz = sys.hessian.nrows();
    let ny = y.len();
    let minv = sys.y_space.mass().clone().try_inverse().unwrap();
    let (z0, l0) = dense_oracle(sys);
    if y.dot(&l0) <= 1e-12 {
        return (z0, l0);
    }
    let n = nz + ny + 1;
    let mut k = DMatrix::<f64>::zeros(n, n);
    k.view_mut((0, 0), (nz, nz)).copy_from(&sys.hessian);
    k.view_mut((0, nz), (nz, ny)).copy_from(&sys.jacobian.transpose());
    k.view_mut((nz, 0), (ny, nz)).copy_from(&sys.jacobian);
    k.view_mut((nz, nz), (ny, ny)).copy_from(&(-&minv * sys.rho));
    k.view_mut((nz, nz + ny), (ny, 1)).copy_from(&(-y));
    k.view_mut((nz + ny, nz), (1, ny)).copy_from(&y.transpose());
    let mut rhs = DVector::<f64>::zeros(n);
    rhs.rows_mut(0, nz).copy_from(&(-&sys.gradient));
    rhs.rows_mut(nz, ny).copy_from(&(-&sys.constraint - &minv * &sys.lambda_k.0 * sys.rho));
    let x = k.lu().solve(&rhs).unwrap();
    assert!(x[nz + ny] >= -1e-12);
    (&sys.z_k.0 + x.rows(0, nz), x.rows(nz, ny).into_owned())
}

#[test]
fn violated_pairing_activates_generator() {
    let ys = InnerProductSpace::diagonal(&[2.0, 1.0]).unwrap();
    let zs = InnerProductSpace::identity(2);
    let y = DVector::from_vec(vec![1.0, 0.0]);
    let cone = ConeSpec::new(&ys, &[PrimalVec(y.clone())]).unwrap();
    let sys = SaddleSystem {
        z_k: PrimalVec::from_slice(&[0.0, 0.0]),
        lambda_k: Functional::from_slice(&[0.0, 0.0]),
        hessian: DMatrix::identity(2, 2),
        jacobian: DMatrix::identity(2, 2),
        gradient: DVector::from_vec(vec![-1.0, 0.5]),
        constraint: DVector::from_vec(vec![0.0, 0.0]),
        rho: 0.1,
        z_space: &zs,
        y_space: &ys,
    };
    let (_, free_l) = dense_oracle(&sys);
    assert!(y.dot(&free_l) > 0.0, "instance must violate the polar condition");
    let sol = sys.solve_cone(&cone).unwrap();
    assert_eq!(sol.active_set, vec![0]);
    let (zo, lo) = single_generator_oracle(&sys, &y);
    assert!((&sol.z_next.0 - zo).amax() <= 1e-10);
    assert!((&sol.lambda_next.0 - lo).amax() <= 1e-10);
}

#[test]
fn pdas_and_enumeration_agree() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys = InnerProductSpace::new(spd(3, &mut rng)).unwrap();
        let zs = InnerProductSpace::new(spd(3, &mut rng)).unwrap();
        let gens: Vec<PrimalVec> =
            (0..2).map(|_| PrimalVec(DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))).collect();
        let cone = ConeSpec::new(&ys, &gens).unwrap();
        let sys = SaddleSystem {
            z_k: PrimalVec(DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0))),
            lambda_k: Functional(DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0))),
            hessian: spd(3, &mut rng),
            jacobian: DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            gradient: DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
            constraint: DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
            rho: rng.gen_range(0.05..1.0),
            z_space: &zs,
            y_space: &ys,
        };
        let a = sys.solve_cone(&cone).unwrap();
        let b = sys.solve_cone_enumerate(&cone).unwrap();
        assert!(b.enumerated);
        assert!((&a.z_next.0 - &b.z_next.0).amax() <= 1e-9, "seed {seed}");
        assert!((&a.lambda_next.0 - &b.lambda_next.0).amax() <= 1e-9, "seed {seed}");
        let res = sys.check(&cone, &a).unwrap();
        assert!(res.max_pairing <= 1e-10 && res.min_coord >= -1e-10 && res.max_complementarity <= 1e-9);
        assert!(res.cone_residual <= 1e-9 && res.stationarity <= 1e-9);
    }
}

#[test]
fn multiplier_is_unique_for_returned_primal() {
    // With z_next fixed, the multiplier solves (ρ M⁻¹) l = G + J d + ρ M⁻¹ λ_k, a
    // strongly concave maximization; recomputing it from the primal step must agree.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let zs = InnerProductSpace::new(spd(3, &mut rng)).unwrap();
    let ys = InnerProductSpace::new(spd(2, &mut rng)).unwrap();
    let sys = SaddleSystem {
        z_k: PrimalVec::from_slice(&[0.2, 0.1, -0.3]),
        lambda_k: Functional::from_slice(&[0.4, -0.1]),
        hessian: spd(3, &mut rng),
        jacobian: DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0)),
        gradient: DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
        constraint: DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        rho: 0.2,
        z_space: &zs,
        y_space: &ys,
    };
    let sol = sys.solve_equality().unwrap();
    let d = &sol.z_next.0 - &sys.z_k.0;
    let r = &sys.constraint + &sys.jacobian * d;
    let l = &sys.lambda_k.0 + ys.mass() * r / sys.rho;
    assert!((&sol.lambda_next.0 - l).amax() <= 1e-9);
}

#[test]
fn step_stays_in_neighbourhood() {
    let b = make_degenerate_line();
    let r = b.reference().unwrap();
    for rho in [0.1, 0.05, 0.01, 1e-3] {
        for seed in 0..50 {
            let (z, l) = b.seeded_start(r, 0.5 * rho, 0.2, seed).unwrap();
            let sol = SaddleSystem::new(&b.problem, &z, &l, rho).unwrap().solve_equality().unwrap();
            let ez = r.err_z(&sol.z_next).unwrap();
            let el = b.problem.y_space.dual_norm(&Functional(&sol.lambda_next.0 - &r.lambda_star.0)).unwrap();
            assert!(ez + rho * el <= rho, "rho {rho}, seed {seed}: {}", ez + rho * el);
        }
    }
}
