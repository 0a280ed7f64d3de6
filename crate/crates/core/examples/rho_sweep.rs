//! Compare the proportional parameter rule with fixed parameters.

use ssqp::bench::make_degenerate_line;
use ssqp::solver::{observed_order_above, run, RhoRule, SolverOptions};

fn main() -> ssqp::Result<()> {
    let b = make_degenerate_line();
    let r = b.reference().expect("registered reference");
    let (z0, l0) = b.seeded_start(r, 0.05, 0.1, 3)?;

    let mut rules = vec![("proportional".to_string(), RhoRule::ErrorProportional { theta: 1.0 })];
    for rho in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
        rules.push((format!("fixed {rho:.0e}"), RhoRule::Fixed { rho }));
    }
    for (label, rule) in rules {
        let opts = SolverOptions { rho_rule: rule, ..Default::default() };
        let rep = run(&b.problem, &z0, &l0, &opts, Some(r))?;
        let orders = observed_order_above(&rep.error_sequence(), b.error_floor);
        println!(
            "{label:>14}: {:?} after {:>2} iterations, error {:.2e}, orders {:?}",
            rep.status,
            rep.iterations(),
            rep.last().total_err.unwrap(),
            orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
