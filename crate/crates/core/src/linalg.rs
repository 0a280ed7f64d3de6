//! Dense symmetric indefinite factorization.
//!
//! [`Ldlt`] implements the Bunch–Kaufman partial-pivoting scheme
//! `P A Pᵀ = L D Lᵀ`, where `D` is block diagonal with 1×1 and 2×2 blocks.
//! It is used for every saddle-point solve in the crate, together with a
//! Hager–Higham estimate of the 1-norm condition number.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Bunch–Kaufman growth constant `(1 + √17) / 8`.
const ALPHA: f64 = 0.640_388_203_202_208;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    One(f64),
    /// Symmetric 2×2 block stored as (d11, d21, d22).
    Two(f64, f64, f64),
}

/// Factorization of a symmetric (possibly indefinite) matrix.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    /// Unit lower-triangular factor (strict lower part is meaningful).
    l: DMatrix<f64>,
    /// Diagonal blocks; a 2×2 block at position k occupies k and k+1.
    blocks: Vec<(usize, Block)>,
    /// `perm[i]` is the original index placed at position `i`.
    perm: Vec<usize>,
    norm1: f64,
}

/// Reason a factorization attempt failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub step: usize,
    pub pivot: f64,
}

impl Ldlt {
    /// Factorizes the symmetric matrix `a` (only symmetry of the input is assumed,
    /// both triangles are read).
    pub fn factor(a: &DMatrix<f64>) -> std::result::Result<Self, SingularPivot> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Ldlt::factor requires a square matrix");
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let norm1 = one_norm(a);
        let tol = (n.max(1) as f64) * f64::EPSILON * scale;

        // The trailing block is kept fully symmetric so symmetric swaps stay valid.
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = Vec::with_capacity(n);

        let swap = |w: &mut DMatrix<f64>, perm: &mut Vec<usize>, p: usize, q: usize| {
            if p != q {
                w.swap_rows(p, q);
                w.swap_columns(p, q);
                perm.swap(p, q);
            }
        };

        let mut k = 0;
        while k < n {
            let akk = w[(k, k)].abs();
            let (r, colmax) =
                ((k + 1)..n)
                    .map(|i| (i, w[(i, k)].abs()))
                    .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

            if !(akk.max(colmax) > tol) {
                return Err(SingularPivot { step: k, pivot: akk.max(colmax) });
            }

            let mut two = false;
            if akk < ALPHA * colmax {
                let rowmax = (k..n).filter(|&j| j != r).map(|j| w[(r, j)].abs()).fold(0.0, f64::max);
                if akk * rowmax >= ALPHA * colmax * colmax {
                    // keep k as a 1×1 pivot
                } else if w[(r, r)].abs() >= ALPHA * rowmax {
                    swap(&mut w, &mut perm, k, r);
                } else {
                    swap(&mut w, &mut perm, k + 1, r);
                    two = true;
                }
            }

            if !two {
                let d = w[(k, k)];
                if !(d.abs() > tol) {
                    return Err(SingularPivot { step: k, pivot: d });
                }
                for i in (k + 1)..n {
                    w[(i, k)] /= d;
                }
                for j in (k + 1)..n {
                    let ljd = w[(j, k)] * d;
                    if ljd == 0.0 {
                        continue;
                    }
                    for i in (k + 1)..n {
                        let v = w[(i, k)] * ljd;
                        w[(i, j)] -= v;
                    }
                }
                blocks.push((k, Block::One(d)));
                k += 1;
            } else {
                let (d11, d21, d22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                if !(det.abs() > tol * d21.abs()) || !det.is_finite() {
                    return Err(SingularPivot { step: k, pivot: det });
                }
                let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                for i in (k + 2)..n {
                    let (a0, a1) = (w[(i, k)], w[(i, k + 1)]);
                    w[(i, k)] = a0 * i11 + a1 * i21;
                    w[(i, k + 1)] = a0 * i21 + a1 * i22;
                }
                // Trailing update uses the unscaled columns, recomputed from L·D.
                for j in (k + 2)..n {
                    let (l0, l1) = (w[(j, k)], w[(j, k + 1)]);
                    let c0 = l0 * d11 + l1 * d21;
                    let c1 = l0 * d21 + l1 * d22;
                    for i in (k + 2)..n {
                        let v = w[(i, k)] * c0 + w[(i, k + 1)] * c1;
                        w[(i, j)] -= v;
                    }
                }
                w[(k + 1, k)] = 0.0;
                blocks.push((k, Block::Two(d11, d21, d22)));
                k += 2;
            }
        }

        let mut l = DMatrix::identity(n, n);
        for j in 0..n {
            for i in (j + 1)..n {
                l[(i, j)] = w[(i, j)];
            }
        }
        Ok(Self { n, l, blocks, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for i in (j + 1)..n {
                    y[i] -= self.l[(i, j)] * yj;
                }
            }
        }
        for &(k, block) in &self.blocks {
            match block {
                Block::One(d) => y[k] /= d,
                Block::Two(d11, d21, d22) => {
                    let det = d11 * d22 - d21 * d21;
                    let (a, b) = (y[k], y[k + 1]);
                    y[k] = (d22 * a - d21 * b) / det;
                    y[k + 1] = (d11 * b - d21 * a) / det;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in (j + 1)..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }

    /// Number of (positive, negative) eigenvalues, by Sylvester's law of inertia.
    pub fn inertia(&self) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for &(_, block) in &self.blocks {
            match block {
                Block::One(d) if d > 0.0 => pos += 1,
                Block::One(_) => neg += 1,
                Block::Two(d11, d21, d22) => {
                    let det = d11 * d22 - d21 * d21;
                    if det < 0.0 {
                        pos += 1;
                        neg += 1;
                    } else if d11 + d22 > 0.0 {
                        pos += 2;
                    } else {
                        neg += 2;
                    }
                }
            }
        }
        (pos, neg)
    }

    /// Hager–Higham estimate of `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            // A is symmetric, so A⁻ᵀ = A⁻¹.
            let z = self.solve(&xi);
            let (j, zmax) =
                z.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
            if zmax <= z.dot(&x) || j == last_j {
                break;
            }
            x.fill(0.0);
            x[j] = 1.0;
            last_j = j;
        }
        let alt = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        });
        let alt_est = 2.0 * self.solve(&alt).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        self.norm1 * est.max(alt_est)
    }
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Largest entry of `|a - aᵀ|` relative to the largest entry of `|a|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for j in 0..a.ncols() {
        for i in (j + 1)..a.nrows() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Factorizes `a`, mapping a breakdown to [`Error::SingularSubproblem`].
pub fn factor_or_singular(a: &DMatrix<f64>) -> Result<Ldlt> {
    Ldlt::factor(a).map_err(|_| Error::SingularSubproblem { condition: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&b + b.transpose()) * 0.5
    }

    #[test]
    fn solves_random_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 5, 8, 17, 40] {
            let a = random_symmetric(n, &mut rng);
            let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let f = Ldlt::factor(&a).unwrap();
            let x = f.solve(&b);
            let oracle = a.clone().lu().solve(&b).unwrap();
            assert!((&x - &oracle).norm() <= 1e-9 * (1.0 + oracle.norm()), "n = {n}");
        }
    }

    #[test]
    fn zero_diagonal_forces_two_by_two_pivots() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = Ldlt::factor(&a).unwrap();
        assert_eq!(f.inertia(), (1, 1));
        let x = f.solve(&DVector::from_vec(vec![2.0, 3.0]));
        assert_eq!(x.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn inertia_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_symmetric(9, &mut rng);
            let eig = a.clone().symmetric_eigen().eigenvalues;
            let pos = eig.iter().filter(|&&v| v > 0.0).count();
            let f = Ldlt::factor(&a).unwrap();
            assert_eq!(f.inertia(), (pos, 9 - pos));
        }
    }

    #[test]
    fn detects_exact_singularity() {
        // Rank-deficient saddle matrix: two identical constraint rows, no stabilization.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        );
        assert!(Ldlt::factor(&a).is_err());
    }

    #[test]
    fn condition_estimate_is_exact_for_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-3, 10.0]));
        let f = Ldlt::factor(&a).unwrap();
        let c = f.condition_estimate();
        assert!((c - 1e4).abs() < 1e-6 * 1e4, "{c}");
    }

    #[test]
    fn condition_estimate_within_factor_of_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_symmetric(12, &mut rng);
            let inv = a.clone().try_inverse().unwrap();
            let exact = one_norm(&a) * one_norm(&inv);
            let est = Ldlt::factor(&a).unwrap().condition_estimate();
            assert!(est <= exact * (1.0 + 1e-9) && est >= exact / 10.0, "{est} vs {exact}");
        }
    }
}
