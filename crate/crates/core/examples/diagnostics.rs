//! Structural diagnostics at the solution of the line problem.

use ssqp::bench::make_degenerate_line;
use ssqp::diagnostics::{coercivity_margin, degeneracy_report, error_estimate_ratio, nullspace_curvature, sample_ball};
use ssqp::spaces::Functional;

fn main() -> ssqp::Result<()> {
    let b = make_degenerate_line();
    let p = &b.problem;
    let r = b.reference().expect("registered reference");

    println!("{:#?}", degeneracy_report(p, &r.z_star)?);
    println!("multiplier set dimension {}", r.multiplier_set_dim());

    let (dist, hat) = r.multiplier_distance(&Functional::from_slice(&[0.0, 0.0]))?;
    println!("distance from 0 to the multiplier set {dist:.6}, nearest {:?}", hat.as_slice());

    let h = p.hess_l(&r.z_star, &r.lambda_star)?;
    let j = p.jac_g(&r.z_star)?;
    println!("curvature on ker J {:?}", nullspace_curvature(&h, &j, &p.z_space, &p.y_space)?);
    for e in 1..=6 {
        let rho = 10f64.powi(-e);
        println!(
            "rho {rho:.0e}: coercivity margin {:.6}",
            coercivity_margin(&h, &j, p.z_space.mass(), p.y_space.mass(), rho)?
        );
    }

    for radius in [0.05, 0.025, 0.0125] {
        let samples = sample_ball(p, r, radius, 100, 1)?;
        let est = error_estimate_ratio(r, p, &samples)?;
        println!("radius {radius}: error / residual <= {:.4}", est.ratio);
    }
    Ok(())
}
