//! Randomized model and scenario generation for the verification suites.
//!
//! The generator deliberately covers the regimes that make independent
//! enlargement hard: shared jump times across factors, deterministic jumps
//! at predictable times (atoms of full conditional mass), marks colliding
//! across atoms, and children that do not jump at all. Within one
//! (time, atom) cell the marks assigned to different children stay distinct,
//! which is exactly what makes [`random_wrp_process`] carry the weak
//! representation property by construction; [`random_prp_martingale`]
//! strengthens this to the predictable representation property by spending
//! one coordinate per child split.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jump::{CompensatorTable, PredictableFunction};
use crate::model::{AdaptedProcess, FiniteModel, PathArray};

/// Bounds and frequencies for random model generation.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOptions {
    pub max_outcomes: usize,
    pub max_horizon: usize,
    /// Probability that an atom splits at a given step.
    pub split_prob: f64,
    /// Probability that a non-splitting atom carries a deterministic jump.
    pub deterministic_jump_prob: f64,
    /// Probability that one child of a split keeps the zero mark (no jump).
    pub zero_mark_prob: f64,
    /// Probability that P_0 starts non-trivial (already partly revealed).
    pub nontrivial_start_prob: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            max_outcomes: 6,
            max_horizon: 4,
            split_prob: 0.6,
            deterministic_jump_prob: 0.35,
            zero_mark_prob: 0.4,
            nontrivial_start_prob: 0.15,
        }
    }
}

/// Deterministic RNG for a suite shard.
pub fn suite_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random weighted model with a random refining filtration. Weights stay
/// bounded away from zero so every rank computation is well conditioned.
pub fn random_model(rng: &mut ChaCha8Rng, opts: &GeneratorOptions) -> FiniteModel {
    let n = 2 + rng.random_range(0..opts.max_outcomes - 1);
    let horizon = 1 + rng.random_range(0..opts.max_horizon);

    let mut weights: Vec<f64> = (0..n).map(|_| 0.08 + rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let p0: Vec<Vec<usize>> = if n > 2 && rng.random::<f64>() < opts.nontrivial_start_prob {
        let cut = 1 + rng.random_range(0..n - 1);
        vec![(0..cut).collect(), (cut..n).collect()]
    } else {
        vec![(0..n).collect()]
    };

    let mut partitions = vec![p0];
    for _ in 1..=horizon {
        let prev = partitions.last().unwrap().clone();
        let mut next = Vec::new();
        for atom in prev {
            if atom.len() > 1 && rng.random::<f64>() < opts.split_prob {
                let parts = 2 + rng.random_range(0..atom.len() - 1);
                let mut children: Vec<Vec<usize>> = vec![Vec::new(); parts];
                // Every child gets one member, the rest scatter.
                for (i, &omega) in atom.iter().enumerate() {
                    if i < parts {
                        children[i].push(omega);
                    } else {
                        children[rng.random_range(0..parts)].push(omega);
                    }
                }
                next.extend(children);
            } else {
                next.push(atom);
            }
        }
        partitions.push(next);
    }

    FiniteModel::with_default_labels(weights, partitions).expect("generated chain refines")
}

fn children_of(model: &FiniteModel, t: usize, atom: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &omega in atom {
        let child = model.atom_of(t, omega);
        if !seen.contains(&child) {
            seen.push(child);
        }
    }
    seen
}

/// Scalar process carrying the WRP on this model by construction: wherever
/// the filtration splits an atom, the children receive distinct marks (one
/// may stay at zero); non-splitting atoms sometimes jump deterministically.
/// Marks are drawn from a small palette so they collide across atoms.
pub fn random_wrp_process(rng: &mut ChaCha8Rng, model: &FiniteModel) -> AdaptedProcess {
    let opts = GeneratorOptions::default();
    let n = model.n_outcomes();
    let horizon = model.horizon();
    let mut data = PathArray::zeros(n, horizon, 1);
    let palette = [-2.0, -1.0, 1.0, 2.0, 3.0, 0.5];

    for t in 1..=horizon {
        for atom in model.atoms(t - 1) {
            let children = children_of(model, t, atom);
            if children.len() == 1 {
                let jump = if rng.random::<f64>() < opts.deterministic_jump_prob {
                    palette[rng.random_range(0..palette.len())]
                } else {
                    0.0
                };
                for &omega in atom {
                    let prev = data.get(omega, t - 1, 0);
                    data.set(omega, t, 0, prev + jump);
                }
            } else {
                // Distinct marks per child within this atom; possibly one zero.
                let mut marks: Vec<f64> = Vec::with_capacity(children.len());
                let zero_slot = if rng.random::<f64>() < opts.zero_mark_prob {
                    Some(rng.random_range(0..children.len()))
                } else {
                    None
                };
                let mut pool: Vec<f64> = palette.to_vec();
                for i in 0..children.len() {
                    if Some(i) == zero_slot {
                        marks.push(0.0);
                        continue;
                    }
                    let mark = if pool.is_empty() {
                        // Palette exhausted: distinct ad-hoc values.
                        4.0 + i as f64 + rng.random::<f64>()
                    } else {
                        pool.swap_remove(rng.random_range(0..pool.len()))
                    };
                    marks.push(mark);
                }
                for &omega in atom {
                    let child_pos = children
                        .iter()
                        .position(|&c| c == model.atom_of(t, omega))
                        .expect("child found");
                    let prev = data.get(omega, t - 1, 0);
                    data.set(omega, t, 0, prev + marks[child_pos]);
                }
            }
        }
    }

    AdaptedProcess::new(model, data).expect("construction is adapted")
}

/// Adds a deterministic jump of size `c` to a process at time `t_star`,
/// shifting every path uniformly from then on. With `c` far outside the mark
/// palette the shifted marks stay distinct within every atom, so this
/// preserves the WRP while creating a predictable jump time shared by
/// whoever else receives the same treatment.
pub fn with_deterministic_jump(
    model: &FiniteModel,
    x: &AdaptedProcess,
    t_star: usize,
    c: f64,
) -> AdaptedProcess {
    AdaptedProcess::scalar_from_fn(model, |omega, t| {
        x.scalar(omega, t) + if t >= t_star { c } else { 0.0 }
    })
    .expect("uniform shift stays adapted")
}

/// Multidimensional martingale with the PRP: one coordinate per potential
/// child split, each split's increment block centered to conditional mean
/// zero and of full rank across the children.
pub fn random_prp_martingale(rng: &mut ChaCha8Rng, model: &FiniteModel) -> AdaptedProcess {
    let n = model.n_outcomes();
    let horizon = model.horizon();
    let max_children = (1..=horizon)
        .flat_map(|t| {
            model
                .atoms(t - 1)
                .iter()
                .map(move |atom| children_of(model, t, atom).len())
        })
        .max()
        .unwrap_or(1);
    let dim = (max_children - 1).max(1);

    let mut data = PathArray::zeros(n, horizon, dim);
    for t in 1..=horizon {
        for atom in model.atoms(t - 1) {
            let children = children_of(model, t, atom);
            let k = children.len();
            let mut increments = vec![vec![0.0; dim]; k];
            if k > 1 {
                loop {
                    for row in increments.iter_mut() {
                        for v in row.iter_mut() {
                            *v = rng.random::<f64>() * 4.0 - 2.0;
                        }
                    }
                    // Center to conditional mean zero under the child weights.
                    let child_weights: Vec<f64> = children
                        .iter()
                        .map(|&c| {
                            model.atoms(t)[c]
                                .iter()
                                .map(|&omega| model.weights()[omega])
                                .sum::<f64>()
                        })
                        .collect();
                    let total: f64 = child_weights.iter().sum();
                    for j in 0..dim {
                        let mean: f64 = increments
                            .iter()
                            .zip(&child_weights)
                            .map(|(row, w)| row[j] * w)
                            .sum::<f64>()
                            / total;
                        for row in increments.iter_mut() {
                            row[j] -= mean;
                        }
                    }
                    let columns: Vec<Vec<f64>> = (0..dim)
                        .map(|j| increments.iter().map(|row| row[j]).collect())
                        .collect();
                    if crate::linalg::rank(&columns, 1e-9) == k - 1 {
                        break;
                    }
                }
            }
            for &omega in atom {
                let pos = children
                    .iter()
                    .position(|&c| c == model.atom_of(t, omega))
                    .expect("child found");
                for j in 0..dim {
                    let prev = data.get(omega, t - 1, j);
                    data.set(omega, t, j, prev + increments[pos][j]);
                }
            }
        }
    }
    AdaptedProcess::new(model, data).expect("construction is adapted")
}

/// Random predictable integrand, uniform on [-2, 2] over the support.
pub fn random_integrand(rng: &mut ChaCha8Rng, nu: &CompensatorTable) -> PredictableFunction {
    PredictableFunction::from_fn(nu, |_, _, _| rng.random::<f64>() * 4.0 - 2.0)
}

/// Random bounded martingale, built as a conditional-expectation process.
pub fn random_martingale(rng: &mut ChaCha8Rng, model: &FiniteModel) -> AdaptedProcess {
    let xi: Vec<f64> = (0..model.n_outcomes())
        .map(|_| rng.random::<f64>() * 4.0 - 2.0)
        .collect();
    AdaptedProcess::martingale_from_terminal(model, &xi)
}

/// A matched pair of independent factors over a common horizon, both
/// carrying the WRP, with an optional shared deterministic jump time.
pub struct FactorPair {
    pub model_f: FiniteModel,
    pub x: AdaptedProcess,
    pub model_h: FiniteModel,
    pub y: AdaptedProcess,
    /// Time at which both factors jump deterministically, when present.
    pub shared_jump_time: Option<usize>,
}

pub fn random_factor_pair(rng: &mut ChaCha8Rng, opts: &GeneratorOptions) -> FactorPair {
    let horizon = 1 + rng.random_range(0..opts.max_horizon);
    let model_f = random_model_with_horizon(rng, opts, horizon);
    let model_h = random_model_with_horizon(rng, opts, horizon);
    let mut x = random_wrp_process(rng, &model_f);
    let mut y = random_wrp_process(rng, &model_h);
    // Shared deterministic jump time: the regime quasi-left-continuity
    // assumptions used to exclude.
    let shared_jump_time = if rng.random::<f64>() < 0.5 {
        let t_star = 1 + rng.random_range(0..horizon);
        x = with_deterministic_jump(&model_f, &x, t_star, 10.0);
        y = with_deterministic_jump(&model_h, &y, t_star, -10.0);
        Some(t_star)
    } else {
        None
    };
    FactorPair {
        model_f,
        x,
        model_h,
        y,
        shared_jump_time,
    }
}

fn random_model_with_horizon(
    rng: &mut ChaCha8Rng,
    opts: &GeneratorOptions,
    horizon: usize,
) -> FiniteModel {
    loop {
        let m = random_model(rng, opts);
        if m.horizon() == horizon {
            return m;
        }
    }
}
