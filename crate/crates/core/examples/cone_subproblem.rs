//! One stabilized step on a cone-constrained problem, solved by the active-set
//! iteration and by enumeration of complementarity patterns.

use ssqp::bench::make_cone_instance;
use ssqp::spaces::{Functional, PrimalVec};
use ssqp::subproblem::SaddleSystem;

fn main() -> ssqp::Result<()> {
    let b = make_cone_instance();
    let p = &b.problem;
    let z = PrimalVec::from_slice(&[0.3, -0.4]);
    let lambda = Functional::from_slice(&[0.2, -0.8]);
    let sys = SaddleSystem::new(p, &z, &lambda, 0.1)?;

    let pdas = sys.solve_cone(&p.cone)?;
    let exhaustive = sys.solve_cone_enumerate(&p.cone)?;
    println!("active set {:?} after {} inner iterations", pdas.active_set, pdas.inner_iterations);
    println!("z_next  {:?}  vs  {:?}", pdas.z_next.as_slice(), exhaustive.z_next.as_slice());
    println!("l_next  {:?}  vs  {:?}", pdas.lambda_next.as_slice(), exhaustive.lambda_next.as_slice());

    let res = sys.check(&p.cone, &pdas)?;
    println!("{res:#?}");
    Ok(())
}
