//! Norms, dual norms and Riesz maps under a discrete L2 metric and a product metric.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ssqp::spaces::{Functional, InnerProductSpace, PrimalVec, ProductSpace};

fn main() -> ssqp::Result<()> {
    let n = 9;
    let h = 1.0 / (n + 1) as f64;
    let l2 = InnerProductSpace::new(DMatrix::identity(n, n) * h)?;
    let u = PrimalVec::from_vec((1..=n).map(|i| (PI * i as f64 * h).sin()).collect());
    println!("discrete ||sin(pi x)||^2 = {:.6} (integral 0.5)", l2.inner(&u, &u)?);

    // The functional v -> (u, v) has pairing coefficients M u; its Riesz
    // representative is u again and its dual norm is ||u||.
    let l = l2.riesz_inverse(&u)?;
    println!("dual norm {:.6}, norm {:.6}", l2.dual_norm(&l)?, l2.norm(&u)?);
    println!("|R l - u| = {:.1e}", (&l2.riesz(&l)?.0 - &u.0).amax());

    let weighted = InnerProductSpace::diagonal(&[4.0, 1.0])?;
    let l = Functional::from_slice(&[2.0, 0.0]);
    println!("dual norm of (2, 0) under diag(4, 1): {}", weighted.dual_norm(&l)?);

    let z = ProductSpace::new(&[l2, InnerProductSpace::identity(1)])?;
    let joined = z.join(&[u, PrimalVec::from_slice(&[3.0])])?;
    println!("product norm {:.6} = sqrt(0.5 + 9)", z.space().norm(&joined)?);
    Ok(())
}
