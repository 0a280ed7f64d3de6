//! Bilinear eigenvalue control: the constraint Jacobian loses rank on the
//! eigen-branch, yet the stabilized iteration still converges fast.
//!
//! Usage: `cargo run --example eigencontrol -- [n]`

use ssqp::bench::{discrete_eigenvalue, make_eigencontrol, EigencontrolParams};
use ssqp::diagnostics::degeneracy_report;
use ssqp::solver::{observed_order_above, run, SolverOptions};

fn main() -> ssqp::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(49, |s| s.parse().expect("grid size"));
    let params = EigencontrolParams { n, q_d: -discrete_eigenvalue(n, 1), ..EigencontrolParams::registered() };
    let b = make_eigencontrol(params)?;
    println!("{}: {}", b.name, b.notes);

    let r = b.reference_named("eigen-branch").expect("eigen-branch certifies");
    let d = degeneracy_report(&b.problem, &r.z_star)?;
    println!(
        "smallest singular values {:?}, null space dim {}, rcq {}",
        &d.singular_values[d.singular_values.len() - 3..],
        d.null_space_dim,
        d.rcq_satisfied
    );

    for seed in 0..5 {
        let (z0, l0) = b.seeded_start(r, b.certified_radius, b.certified_radius, seed)?;
        let rep = run(&b.problem, &z0, &l0, &SolverOptions::default(), Some(r))?;
        let orders = observed_order_above(&rep.error_sequence(), b.error_floor);
        println!(
            "seed {seed}: {:?} in {} iterations, kkt {:.2e}, orders {:?}",
            rep.status,
            rep.iterations(),
            rep.last().kkt.total,
            orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
