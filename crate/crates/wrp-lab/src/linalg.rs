//! Small dense linear algebra for rank decisions and least squares.
//!
//! Rank comparisons are the decision procedure of this crate, so the
//! factorization is done in-house with a one-sided Jacobi iteration: it
//! computes singular values of small dense matrices to high relative
//! accuracy, including the exactly rank-deficient matrices the engines
//! produce (unit-integrand columns are often exact negatives of each other,
//! plus fully compensated zero columns).

/// Relative singular-value cutoff for rank decisions. Models are tiny (at
/// most a few dozen outcomes), so conditioning is benign.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Absolute singular-value floor. Vectors produced by the engines are either
/// genuinely of order one or pure rounding dust (a fully compensated
/// deterministic jump leaves entries of a few ulps); the floor keeps the
/// relative cutoff from promoting an all-dust matrix to rank one.
pub const RANK_ABS_FLOOR: f64 = 1e-12;

/// One-sided Jacobi factorization of the column set `a` (each entry one
/// column of length m): returns (u, sigma, v) with `a = u * diag(sigma) * v^T`,
/// the columns of `u` orthonormal where sigma > 0 and zero otherwise, and
/// `v` orthogonal (n x n, stored as columns).
struct JacobiSvd {
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    v: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn jacobi_svd(mut a: Vec<Vec<f64>>) -> JacobiSvd {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    const CONVERGENCE: f64 = 1e-15;
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= CONVERGENCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (ap, aq) = split_pair(&mut a, p, q);
                rotate(ap, aq, c, s);
                let (vp, vq) = split_pair(&mut v, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for col in a {
        let norm = dot(&col, &col).sqrt();
        sigma.push(norm);
        if norm > 0.0 {
            u.push(col.iter().map(|x| x / norm).collect());
        } else {
            u.push(vec![0.0; col.len()]);
        }
    }
    JacobiSvd { u, sigma, v }
}

fn split_pair(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let new_x = c * *xi - s * *yi;
        let new_y = s * *xi + c * *yi;
        *xi = new_x;
        *yi = new_y;
    }
}

/// Rank of the span of the given vectors, decided by singular values above
/// `rel_tol` times the largest one and above the absolute floor.
pub fn rank(vectors: &[Vec<f64>], rel_tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let svd = jacobi_svd(vectors.to_vec());
    let top = svd.sigma.iter().cloned().fold(0.0_f64, f64::max);
    if top <= RANK_ABS_FLOOR {
        return 0;
    }
    svd.sigma
        .iter()
        .filter(|&&s| s > (top * rel_tol).max(RANK_ABS_FLOOR))
        .count()
}

/// Least-squares solve of `target ~ sum_j coeff_j * vectors_j` in the inner
/// product weighted by `weights`. Returns the coefficients and the weighted
/// L2 norm of the residual. Coefficients come from the pseudo-inverse, so
/// exactly dependent columns share their weight minimally.
pub fn weighted_least_squares(
    vectors: &[Vec<f64>],
    target: &[f64],
    weights: &[f64],
) -> (Vec<f64>, f64) {
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let b: Vec<f64> = target
        .iter()
        .zip(&sqrt_w)
        .map(|(t, sw)| t * sw)
        .collect();
    if vectors.is_empty() {
        return (Vec::new(), dot(&b, &b).sqrt());
    }

    let n = vectors.len();
    let scaled: Vec<Vec<f64>> = vectors
        .iter()
        .map(|col| col.iter().zip(&sqrt_w).map(|(x, sw)| x * sw).collect())
        .collect();
    let svd = jacobi_svd(scaled.clone());
    let top = svd.sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cut = (top * RANK_REL_TOL).max(RANK_ABS_FLOOR);

    // pinv(A) b = V S^+ U^T b.
    let scores: Vec<f64> = svd
        .u
        .iter()
        .zip(&svd.sigma)
        .map(|(u_col, &s)| if s > cut { dot(u_col, &b) / s } else { 0.0 })
        .collect();
    let coeffs: Vec<f64> = (0..n)
        .map(|row| {
            svd.v
                .iter()
                .zip(&scores)
                .map(|(v_col, &score)| v_col[row] * score)
                .sum()
        })
        .collect();

    let mut fitted = vec![0.0; b.len()];
    for (col, &c) in scaled.iter().zip(&coeffs) {
        for (f, x) in fitted.iter_mut().zip(col) {
            *f += c * x;
        }
    }
    let residual = fitted
        .iter()
        .zip(&b)
        .map(|(f, y)| (f - y) * (f - y))
        .sum::<f64>()
        .sqrt();
    (coeffs, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent rank oracle: Gaussian elimination with partial pivoting.
    pub fn rank_by_elimination(vectors: &[Vec<f64>], tol: f64) -> usize {
        if vectors.is_empty() {
            return 0;
        }
        let mut rows: Vec<Vec<f64>> = vectors.to_vec();
        let n = rows[0].len();
        let mut rank = 0;
        for col in 0..n {
            let pivot = (rank..rows.len())
                .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()));
            let Some(p) = pivot else { break };
            if rows[p][col].abs() <= tol {
                continue;
            }
            rows.swap(rank, p);
            for r in rank + 1..rows.len() {
                let f = rows[r][col] / rows[rank][col];
                for c in col..n {
                    rows[r][c] -= f * rows[rank][c];
                }
            }
            rank += 1;
        }
        rank
    }

    fn random_rank_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, usize) {
        let n = 2 + rng.random_range(0..6usize);
        let true_rank = 1 + rng.random_range(0..n);
        let basis: Vec<Vec<f64>> = (0..true_rank)
            .map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let mut vectors = basis.clone();
        // Mixtures, exact negatives and zero columns: the degenerate shapes
        // the engines produce.
        for _ in 0..4 {
            let mut mix = vec![0.0; n];
            for b in &basis {
                let c = rng.random::<f64>() * 2.0 - 1.0;
                for (m, v) in mix.iter_mut().zip(b) {
                    *m += c * v;
                }
            }
            vectors.push(mix);
        }
        vectors.push(basis[0].iter().map(|x| -x).collect());
        vectors.push(vec![0.0; n]);
        (vectors, true_rank)
    }

    #[test]
    fn rank_agrees_with_elimination_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (vectors, true_rank) = random_rank_instance(&mut rng);
            let jacobi = rank(&vectors, RANK_REL_TOL);
            let oracle = rank_by_elimination(&vectors, 1e-9);
            assert_eq!(jacobi, oracle);
            assert_eq!(jacobi, true_rank);
        }
    }

    #[test]
    fn factorization_reconstructs_the_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let (vectors, _) = random_rank_instance(&mut rng);
            let svd = jacobi_svd(vectors.clone());
            // a_j = sum_k u_k sigma_k v[k][j]
            for (j, col) in vectors.iter().enumerate() {
                for i in 0..col.len() {
                    let recon: f64 = (0..vectors.len())
                        .map(|k| svd.u[k][i] * svd.sigma[k] * svd.v[k][j])
                        .sum();
                    assert!(
                        (recon - col[i]).abs() <= 1e-12,
                        "reconstruction off by {:e}",
                        (recon - col[i]).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn least_squares_recovers_exact_combination() {
        let v1 = vec![1.0, 0.0, -1.0];
        let v2 = vec![0.0, 2.0, -2.0];
        let target = vec![3.0, 4.0, -7.0]; // 3*v1 + 2*v2
        let weights = vec![0.25, 0.25, 0.5];
        let (coeffs, residual) = weighted_least_squares(&[v1, v2], &target, &weights);
        assert!((coeffs[0] - 3.0).abs() < 1e-10);
        assert!((coeffs[1] - 2.0).abs() < 1e-10);
        assert!(residual < 1e-12);
    }

    #[test]
    fn least_squares_is_exact_on_degenerate_column_sets() {
        // In-span targets must resolve with zero residual even when the
        // columns repeat, cancel or vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (vectors, _) = random_rank_instance(&mut rng);
            let n = vectors[0].len();
            let weights: Vec<f64> = {
                let mut w: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                w
            };
            let mut target = vec![0.0; n];
            for col in &vectors {
                let c = rng.random::<f64>() * 2.0 - 1.0;
                for (t, x) in target.iter_mut().zip(col) {
                    *t += c * x;
                }
            }
            let (_, residual) = weighted_least_squares(&vectors, &target, &weights);
            assert!(residual <= 1e-10, "in-span target left residual {residual:e}");
        }
    }

    #[test]
    fn least_squares_reports_orthogonal_residual() {
        let v1 = vec![1.0, -1.0, 0.0];
        let target = vec![0.0, 0.0, 1.0];
        let weights = vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let (_, residual) = weighted_least_squares(&[v1], &target, &weights);
        assert!((residual - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
