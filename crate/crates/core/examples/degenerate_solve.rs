//! Solve the rank-deficient line problem and print the error history.

use ssqp::bench::make_degenerate_line;
use ssqp::solver::{run, SolverOptions};

fn main() -> ssqp::Result<()> {
    let b = make_degenerate_line();
    let r = b.reference().expect("registered reference");
    let z0 = b.start_from_offset(&b.default_offset)?;
    let report = run(&b.problem, &z0, &b.default_lambda0, &SolverOptions::default(), Some(r))?;

    println!("{:>2}  {:>10}  {:>10}  {:>10}", "k", "rho", "kkt", "error");
    for rec in &report.history {
        println!("{:>2}  {:>10.3e}  {:>10.3e}  {:>10.3e}", rec.k, rec.rho, rec.kkt.total, rec.total_err.unwrap());
    }
    println!("status {:?}, observed orders {:?}", report.status, report.observed_orders);
    println!("final multiplier {:?} (the multiplier set is the line l1 + l2 = -1)", report.last().lambda.as_slice());
    Ok(())
}
