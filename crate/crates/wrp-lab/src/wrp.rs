//! Weak and predictable representation properties decided by exact linear
//! algebra.
//!
//! On a finite model the square-integrable martingales null at zero are (via
//! terminal values) isomorphic to the P_T-measurable random variables with
//! zero conditional mean given P_0. A process Z has the weak representation
//! property (WRP) when the terminal values of the compensated jump integrals
//! W * (mu^Z - nu^Z), W ranging over the predictable functions, span that
//! whole space; in discrete time there is no continuous martingale part, so
//! the jump integrals are the entire representation. The predictable
//! representation property (PRP) asks the same of the plain integrals K . X
//! against a martingale X.
//!
//! Both spaces are spanned by finitely many unit integrands, one per
//! (time, atom, mark) cell, so each property reduces to a rank comparison.
//! The representable space is closed (a subspace of a finite-dimensional
//! space), so once the ranks match every limit argument is automatic.

use crate::error::{Error, Result};
use crate::jump::{
    compensated_integral_with, compensator_nu, CompensatorTable, Mark, PredictableFunction,
};
use crate::linalg::{rank, weighted_least_squares, RANK_REL_TOL};
use crate::model::{AdaptedProcess, FiniteModel};

/// Generating label of one basis vector: the unit predictable function of a
/// (time, atom of P_{t-1}, mark) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisLabel {
    pub t: usize,
    pub atom: usize,
    pub mark: Mark,
}

/// Terminal values of the compensated unit-jump integrals of Z, one outcome
/// vector per (t, atom, mark) cell of the compensator. Every vector is the
/// terminal value of an exact martingale null at zero; with trivial P_0 each
/// vector has zero mean under the model weights.
#[derive(Debug, Clone)]
pub struct RepresentationBasis {
    pub labels: Vec<BasisLabel>,
    pub vectors: Vec<Vec<f64>>,
    nu: CompensatorTable,
}

impl RepresentationBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn nu(&self) -> &CompensatorTable {
        &self.nu
    }
}

/// Dimension of the space of terminal martingale values: random variables
/// measurable at the horizon with zero conditional mean given P_0, which is
/// the atom count of P_T minus the atom count of P_0. With P_T discrete this
/// is the outcome count minus the atom count of P_0.
pub fn martingale_space_dim(model: &FiniteModel) -> usize {
    model.n_atoms(model.horizon()) - model.n_atoms(0)
}

/// Enumerates the representable basis of Z by running the compensated
/// integral on every unit predictable function. Enumeration is exhaustive,
/// the exact finite analog of quantifying over all predictable integrands.
pub fn representable_basis(model: &FiniteModel, z: &AdaptedProcess) -> RepresentationBasis {
    let nu = compensator_nu(model, z);
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let cells: Vec<(usize, usize, Mark)> = nu
        .cells()
        .flat_map(|(&(t, a), measure)| {
            measure
                .keys()
                .map(move |mark| (t, a, mark.clone()))
                .collect::<Vec<_>>()
        })
        .collect();
    for (t, a, mark) in cells {
        let unit = PredictableFunction::unit(&nu, t, a, &mark);
        let integral =
            compensated_integral_with(model, &unit, z, &nu).expect("unit covers the support");
        debug_assert!(model.is_martingale(&integral).ok);
        vectors.push(integral.terminal(0));
        labels.push(BasisLabel { t, atom: a, mark });
    }
    RepresentationBasis {
        labels,
        vectors,
        nu,
    }
}

/// Outcome of a representation-rank comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrpReport {
    pub holds: bool,
    pub mart_dim: usize,
    pub repr_dim: usize,
}

/// Decides whether Z has the WRP on this model: the compensated jump
/// integrals of Z span the martingale space exactly when the ranks agree.
pub fn has_wrp(model: &FiniteModel, z: &AdaptedProcess) -> WrpReport {
    let mart_dim = martingale_space_dim(model);
    let basis = representable_basis(model, z);
    let repr_dim = rank(&basis.vectors, RANK_REL_TOL);
    WrpReport {
        holds: repr_dim == mart_dim,
        mart_dim,
        repr_dim,
    }
}

/// Decides the PRP of a (possibly multidimensional) martingale X: the
/// terminal values of K . X = sum_s K_s . Delta X_s, K predictable, span one
/// vector per (time, atom, coordinate).
pub fn has_prp(model: &FiniteModel, x: &AdaptedProcess) -> Result<WrpReport> {
    let mart = model.is_martingale(x);
    if !mart.ok {
        return Err(Error::NotAMartingale {
            max_violation: mart.max_violation,
        });
    }
    let mart_dim = martingale_space_dim(model);
    let mut vectors = Vec::new();
    for t in 1..=model.horizon() {
        for (a, atom) in model.atoms(t - 1).iter().enumerate() {
            let _ = a;
            for k in 0..x.dim() {
                let mut v = vec![0.0; model.n_outcomes()];
                let mut nonzero = false;
                for &omega in atom {
                    let inc = x.increment(omega, t, k);
                    v[omega] = inc;
                    nonzero |= inc != 0.0;
                }
                if nonzero {
                    vectors.push(v);
                }
            }
        }
    }
    let repr_dim = rank(&vectors, RANK_REL_TOL);
    Ok(WrpReport {
        holds: repr_dim == mart_dim,
        mart_dim,
        repr_dim,
    })
}

/// A solved representation: integrand and weighted L2 residual at the
/// horizon.
#[derive(Debug, Clone)]
pub struct Representation {
    pub w: PredictableFunction,
    pub residual: f64,
    /// Largest pathwise deviation of the re-integrated representation from
    /// N - N_0 over all outcomes and times.
    pub reconstruction_error: f64,
}

/// Least-squares solve of the martingale N against the representable basis
/// of Z. When the WRP holds the residual vanishes and the returned integrand
/// reconstructs N - N_0 pathwise at every time, not only at the horizon; the
/// reconstruction error is reported so aliasing between times cannot hide.
pub fn solve_representation(
    model: &FiniteModel,
    n: &AdaptedProcess,
    z: &AdaptedProcess,
) -> Result<Representation> {
    let mart = model.is_martingale(n);
    if !mart.ok {
        return Err(Error::NotAMartingale {
            max_violation: mart.max_violation,
        });
    }
    if n.dim() != 1 {
        return Err(Error::DimMismatch("martingales to represent are scalar".into()));
    }
    let basis = representable_basis(model, z);
    let target: Vec<f64> = (0..model.n_outcomes())
        .map(|omega| n.scalar(omega, model.horizon()) - n.scalar(omega, 0))
        .collect();
    let (coeffs, residual) = weighted_least_squares(&basis.vectors, &target, model.weights());

    // Assemble the integrand from the unit coefficients; cells outside the
    // labels keep value zero, so the full support stays covered.
    let w = PredictableFunction::from_fn(basis.nu(), |t, a, mark| {
        basis
            .labels
            .iter()
            .position(|l| l.t == t && l.atom == a && &l.mark == mark)
            .map(|i| coeffs[i])
            .unwrap_or(0.0)
    });

    let integral = compensated_integral_with(model, &w, z, basis.nu())?;
    let mut reconstruction_error: f64 = 0.0;
    for omega in 0..model.n_outcomes() {
        for t in 0..=model.horizon() {
            let lhs = n.scalar(omega, t) - n.scalar(omega, 0);
            reconstruction_error =
                reconstruction_error.max((lhs - integral.scalar(omega, t)).abs());
        }
    }
    Ok(Representation {
        w,
        residual,
        reconstruction_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PathArray;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coin_with_x() -> (FiniteModel, AdaptedProcess) {
        let m = FiniteModel::coin();
        let x = AdaptedProcess::scalar_from_fn(&m, |omega, t| {
            if t == 0 {
                0.0
            } else if omega == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap();
        (m, x)
    }

    /// Mark collision: outcomes a and b share the jump +1.
    fn collision() -> (FiniteModel, AdaptedProcess) {
        let m = FiniteModel::with_default_labels(
            vec![0.25, 0.25, 0.5],
            vec![vec![vec![0, 1, 2]], vec![vec![0], vec![1], vec![2]]],
        )
        .unwrap();
        let x = AdaptedProcess::scalar_from_fn(&m, |omega, t| {
            if t == 0 {
                0.0
            } else if omega < 2 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap();
        (m, x)
    }

    #[test]
    fn martingale_space_dims() {
        let m = FiniteModel::coin();
        assert_eq!(martingale_space_dim(&m), 1);

        let m4 = FiniteModel::with_default_labels(
            vec![0.25; 4],
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0], vec![1], vec![2], vec![3]],
            ],
        )
        .unwrap();
        assert_eq!(martingale_space_dim(&m4), 3);

        // Discrete P_0: no randomness left to represent.
        let m0 = FiniteModel::with_default_labels(
            vec![0.5, 0.5],
            vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]],
        )
        .unwrap();
        assert_eq!(martingale_space_dim(&m0), 0);
    }

    #[test]
    fn basis_of_coin_spans_one_dimension() {
        let (m, x) = coin_with_x();
        let basis = representable_basis(&m, &x);
        assert_eq!(basis.len(), 2); // marks +1 and -1
        assert_eq!(rank(&basis.vectors, RANK_REL_TOL), 1);
        // Basis vectors have zero mean under the weights (trivial P_0).
        for v in &basis.vectors {
            assert!(m.expectation(v).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_process_has_empty_span() {
        let m = FiniteModel::coin();
        let z = AdaptedProcess::constant(&m, &[5.0]);
        let basis = representable_basis(&m, &z);
        assert!(basis.is_empty());
        let report = has_wrp(&m, &z);
        assert!(!report.holds);
        assert_eq!(report.repr_dim, 0);
    }

    #[test]
    fn wrp_holds_trivially_without_information_flow() {
        // No refinement at all: the martingale space is zero-dimensional and
        // even a constant process represents it.
        let m = FiniteModel::with_default_labels(
            vec![0.5, 0.5],
            vec![vec![vec![0, 1]], vec![vec![0, 1]]],
        )
        .unwrap();
        let z = AdaptedProcess::constant(&m, &[1.0]);
        let report = has_wrp(&m, &z);
        assert!(report.holds);
        assert_eq!((report.mart_dim, report.repr_dim), (0, 0));
    }

    #[test]
    fn wrp_examples() {
        let (m, x) = coin_with_x();
        let report = has_wrp(&m, &x);
        assert!(report.holds);
        assert_eq!((report.mart_dim, report.repr_dim), (1, 1));

        let (mc, xc) = collision();
        let report = has_wrp(&mc, &xc);
        assert!(!report.holds);
        assert_eq!((report.mart_dim, report.repr_dim), (2, 1));

        // Product of two independent coins, pair process.
        let m4 = FiniteModel::with_default_labels(
            vec![0.25; 4],
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0], vec![1], vec![2], vec![3]],
            ],
        )
        .unwrap();
        let pair = AdaptedProcess::from_fn(&m4, 2, |omega, t, k| {
            if t == 0 {
                0.0
            } else if k == 0 {
                if omega & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else if omega & 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap();
        let report = has_wrp(&m4, &pair);
        assert!(report.holds);
        assert_eq!((report.mart_dim, report.repr_dim), (3, 3));
    }

    #[test]
    fn prp_examples() {
        let (m, x) = coin_with_x();
        let report = has_prp(&m, &x).unwrap();
        assert!(report.holds);

        // Marks (1, -1, 0) with weights making X a martingale: one
        // predictable degree of freedom per atom cannot span two dimensions.
        let m3 = FiniteModel::with_default_labels(
            vec![0.25, 0.25, 0.5],
            vec![vec![vec![0, 1, 2]], vec![vec![0], vec![1], vec![2]]],
        )
        .unwrap();
        let x3 = AdaptedProcess::scalar_from_fn(&m3, |omega, t| {
            if t == 0 {
                0.0
            } else {
                [1.0, -1.0, 0.0][omega]
            }
        })
        .unwrap();
        let report = has_prp(&m3, &x3).unwrap();
        assert!(!report.holds);
        assert_eq!((report.mart_dim, report.repr_dim), (2, 1));
        // ... while the WRP holds: the two marks separate all three atoms.
        assert!(has_wrp(&m3, &x3).holds);

        // Non-martingales are rejected.
        let drift = AdaptedProcess::scalar_from_fn(&m, |_, t| t as f64).unwrap();
        assert!(matches!(
            has_prp(&m, &drift),
            Err(Error::NotAMartingale { .. })
        ));
    }

    #[test]
    fn solve_representation_examples() {
        let (m, x) = coin_with_x();
        let rep = solve_representation(&m, &x, &x).unwrap();
        assert!(rep.residual < 1e-12);
        assert!(rep.reconstruction_error < 1e-12);
        // The solved integrand acts as W(x) = x on the two marks.
        let nu = compensator_nu(&m, &x);
        let _ = &nu;
        assert!((rep.w.eval(1, 0, &Mark::new(&[1.0])).unwrap() - 1.0).abs() < 1e-10);
        assert!((rep.w.eval(1, 0, &Mark::new(&[-1.0])).unwrap() + 1.0).abs() < 1e-10);

        // Collision model: a martingale separating the two +1 outcomes has a
        // strictly positive residual.
        let (mc, xc) = collision();
        let sep = AdaptedProcess::martingale_from_terminal(&mc, &[1.0, -1.0, 0.0]);
        let rep = solve_representation(&mc, &sep, &xc).unwrap();
        assert!(rep.residual > 0.1);

        // Constants need nothing.
        let c = AdaptedProcess::constant(&m, &[2.0]);
        let rep = solve_representation(&m, &c, &x).unwrap();
        assert!(rep.residual < 1e-14);
        assert!(rep.reconstruction_error < 1e-14);
    }

    #[test]
    fn representation_reconstructs_every_martingale_when_wrp_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, x) = coin_with_x();
        for _ in 0..50 {
            let xi: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let n = AdaptedProcess::martingale_from_terminal(&m, &xi);
            let rep = solve_representation(&m, &n, &x).unwrap();
            assert!(rep.residual <= 1e-9);
            assert!(rep.reconstruction_error <= 1e-9);
        }
    }

    #[test]
    fn mark_refinement_never_drops_rank() {
        // Adding a coordinate to Z refines the marks; the representable
        // dimension cannot decrease.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let m = FiniteModel::with_default_labels(
                vec![0.2, 0.3, 0.1, 0.4],
                vec![
                    vec![vec![0, 1, 2, 3]],
                    vec![vec![0, 1], vec![2, 3]],
                    vec![vec![0], vec![1], vec![2], vec![3]],
                ],
            )
            .unwrap();
            // Random jump layouts, possibly with colliding marks: z1 jumps
            // at t=1 (constant per P_1 atom) and the extra coordinate jumps
            // at t=2 (free per outcome).
            let palette = [-1.0, 0.0, 1.0, 2.0];
            let jump1: [f64; 2] = std::array::from_fn(|_| palette[rng.random_range(0..4)]);
            let z1 = AdaptedProcess::new(
                &m,
                PathArray::from_fn(4, 2, 1, |omega, t, _| {
                    if t >= 1 {
                        jump1[omega / 2]
                    } else {
                        0.0
                    }
                }),
            )
            .unwrap();
            let jump2: [f64; 4] = std::array::from_fn(|_| palette[rng.random_range(0..4)]);
            let extra = AdaptedProcess::new(
                &m,
                PathArray::from_fn(4, 2, 1, |omega, t, _| {
                    if t == 2 {
                        jump2[omega]
                    } else {
                        0.0
                    }
                }),
            )
            .unwrap();
            let z2 = AdaptedProcess::stack(&z1, &extra);
            let d1 = has_wrp(&m, &z1).repr_dim;
            let d2 = has_wrp(&m, &z2).repr_dim;
            assert!(d2 >= d1, "refinement dropped rank: {d1} -> {d2}");
        }
    }
}
