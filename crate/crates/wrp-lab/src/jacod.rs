//! Progressive enlargement by a random default time under the equivalence
//! hypothesis, on finite models.
//!
//! A base model for F (trivial P_0 required) is paired with a finite set of
//! default times tau, given by a joint law table over (outcome, tau-value).
//! The enlarged filtration G makes tau a stopping time: its atoms at time t
//! are the F-atoms intersected with {tau = u} for u <= t and with the lump
//! {tau > t}. The equivalence hypothesis asks the conditional density
//!
//! ```text
//! p_t(u) = P[tau = u | F_t] / P[tau = u]
//! ```
//!
//! to be strictly positive everywhere; for fixed u it is an F-martingale
//! with p_0(u) = 1. The density change dQ = L_T dP with L = p_0(tau)/p_.(tau)
//! produces a measure under which F_T and sigma(tau) are independent while
//! both marginals are untouched, so the independent-enlargement machinery
//! applies under Q, and equivalence carries the weak representation property
//! of Z = (X, H) back to the original measure. Both routes are run and must
//! agree. The law of tau need not avoid the jump times of X: a default
//! hitting an F-jump time with positive probability is a first-class
//! scenario here. Q is only constructed up to the fixed horizon; past it the
//! density loses uniform integrability and no operation is defined there.

use serde::{Deserialize, Serialize};

use crate::enlargement::{models_isomorphic, product_model};
use crate::error::{Error, Result};
use crate::model::{AdaptedProcess, FiniteModel, PathArray, MASS_TOL};
use crate::wrp::{has_wrp, WrpReport};

/// A possible value of the default time: a grid time or the beyond-horizon
/// sentinel (tau = +infinity with positive mass is allowed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauValue {
    At(usize),
    Beyond,
}

impl TauValue {
    fn occurred_by(&self, t: usize) -> bool {
        match self {
            TauValue::At(u) => *u <= t,
            TauValue::Beyond => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TauValue::At(u) => u.to_string(),
            TauValue::Beyond => "inf".into(),
        }
    }
}

/// Finite model of a progressive enlargement by a random time.
#[derive(Debug, Clone)]
pub struct TauModel {
    pub base: FiniteModel,
    pub tau_values: Vec<TauValue>,
    /// `joint[omega][j] = P[omega, tau = tau_values[j]]`.
    pub joint: Vec<Vec<f64>>,
    /// Progressive enlargement G = F v H on outcomes (omega, u).
    pub enlarged: FiniteModel,
    /// Initial enlargement: tau revealed already at time zero; carrier of
    /// the density-quotient martingale L.
    pub initial: FiniteModel,
}

impl TauModel {
    /// Flat index of the enlarged outcome `(omega, tau_values[j])`.
    pub fn outcome(&self, omega: usize, j: usize) -> usize {
        omega * self.tau_values.len() + j
    }

    pub fn base_outcome(&self, enlarged_outcome: usize) -> usize {
        enlarged_outcome / self.tau_values.len()
    }

    pub fn tau_index(&self, enlarged_outcome: usize) -> usize {
        enlarged_outcome % self.tau_values.len()
    }

    /// Law of tau, summed from the joint table.
    pub fn tau_law(&self) -> Vec<f64> {
        let m = self.tau_values.len();
        (0..m)
            .map(|j| self.joint.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// The default indicator H_t = 1_{tau <= t} on the enlarged model.
    pub fn default_indicator(&self) -> AdaptedProcess {
        let values = PathArray::from_fn(
            self.enlarged.n_outcomes(),
            self.enlarged.horizon(),
            1,
            |omega, t, _| {
                if self.tau_values[self.tau_index(omega)].occurred_by(t) {
                    1.0
                } else {
                    0.0
                }
            },
        );
        AdaptedProcess::new(&self.enlarged, values).expect("H is adapted to G")
    }

    /// Lifts a base F-process to the enlarged model.
    pub fn lift_base(&self, x: &AdaptedProcess) -> AdaptedProcess {
        let values = PathArray::from_fn(
            self.enlarged.n_outcomes(),
            self.enlarged.horizon(),
            x.dim(),
            |omega, t, k| x.value(self.base_outcome(omega), t, k),
        );
        AdaptedProcess::new(&self.enlarged, values).expect("F-processes are G-adapted")
    }

    /// Checks that {tau <= t} is a union of G_t atoms for every t: tau is a
    /// stopping time of the enlarged filtration.
    pub fn tau_is_stopping_time(&self) -> bool {
        (0..=self.enlarged.horizon()).all(|t| {
            self.enlarged.atoms(t).iter().all(|atom| {
                let first = self.tau_values[self.tau_index(atom[0])].occurred_by(t);
                atom.iter()
                    .all(|&o| self.tau_values[self.tau_index(o)].occurred_by(t) == first)
            })
        })
    }
}

/// Builds the enlarged model from a base model, the candidate tau values and
/// the joint law. Fails if P_0 of the base is not trivial, if the joint law
/// does not reproduce the base weights as its marginal, or if some
/// conditional density vanishes (the equivalence hypothesis then fails).
pub fn build_tau_model(
    base: &FiniteModel,
    tau_values: Vec<TauValue>,
    joint: Vec<Vec<f64>>,
) -> Result<TauModel> {
    if !base.f0_is_trivial() {
        return Err(Error::NontrivialF0(format!(
            "P_0 has {} atoms",
            base.n_atoms(0)
        )));
    }
    let n = base.n_outcomes();
    let m = tau_values.len();
    if joint.len() != n || joint.iter().any(|row| row.len() != m) {
        return Err(Error::MarginalMismatch(format!(
            "joint table must be {n} x {m}"
        )));
    }
    if m == 0 {
        return Err(Error::MarginalMismatch("no tau values".into()));
    }
    for (j, tv) in tau_values.iter().enumerate() {
        if let TauValue::At(u) = tv {
            if *u > base.horizon() {
                return Err(Error::BadGrid(format!(
                    "tau value {u} is beyond the horizon {}; use the sentinel",
                    base.horizon()
                )));
            }
        }
        if tau_values[..j].contains(tv) {
            return Err(Error::MarginalMismatch(format!(
                "duplicate tau value {}",
                tv.label()
            )));
        }
    }
    for (omega, row) in joint.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if (total - base.weights()[omega]).abs() > MASS_TOL {
            return Err(Error::MarginalMismatch(format!(
                "row {omega} sums to {total}, weight is {}",
                base.weights()[omega]
            )));
        }
        if row.iter().any(|&q| q < 0.0) {
            return Err(Error::MarginalMismatch(format!(
                "negative joint mass in row {omega}"
            )));
        }
    }

    // Equivalence: every conditional density strictly positive. With all
    // base weights positive this reduces to positivity of the conditional
    // masses P[tau = u | A] over every atom of every level.
    let tau_law: Vec<f64> = (0..m)
        .map(|j| joint.iter().map(|row| row[j]).sum())
        .collect();
    if let Some(j) = tau_law.iter().position(|&f| f <= 0.0) {
        return Err(Error::EquivalenceFails(format!(
            "tau value {} has zero law mass",
            tau_values[j].label()
        )));
    }
    for t in 0..=base.horizon() {
        for atom in base.atoms(t) {
            for j in 0..m {
                let mass: f64 = atom.iter().map(|&omega| joint[omega][j]).sum();
                if mass <= 0.0 {
                    return Err(Error::EquivalenceFails(format!(
                        "p_{t}({}) vanishes on an atom of P_{t}",
                        tau_values[j].label()
                    )));
                }
            }
        }
    }

    let outcomes: Vec<String> = (0..n * m)
        .map(|o| {
            format!(
                "{}|tau={}",
                base.outcomes()[o / m],
                tau_values[o % m].label()
            )
        })
        .collect();
    let weights: Vec<f64> = (0..n * m).map(|o| joint[o / m][o % m]).collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();

    // Progressive enlargement: per F-atom, singletons for revealed tau
    // values, then the not-yet lump.
    let mut partitions = Vec::with_capacity(base.horizon() + 1);
    for t in 0..=base.horizon() {
        let mut atoms = Vec::new();
        for f_atom in base.atoms(t) {
            for (j, tv) in tau_values.iter().enumerate() {
                if tv.occurred_by(t) {
                    atoms.push(f_atom.iter().map(|&omega| omega * m + j).collect());
                }
            }
            let lump: Vec<usize> = f_atom
                .iter()
                .flat_map(|&omega| {
                    tau_values
                        .iter()
                        .enumerate()
                        .filter(|(_, tv)| !tv.occurred_by(t))
                        .map(move |(j, _)| omega * m + j)
                })
                .collect();
            if !lump.is_empty() {
                atoms.push(lump);
            }
        }
        partitions.push(atoms);
    }
    let enlarged = FiniteModel::new(outcomes.clone(), weights.clone(), partitions)?;

    // Initial enlargement: tau revealed from time zero.
    let mut initial_partitions = Vec::with_capacity(base.horizon() + 1);
    for t in 0..=base.horizon() {
        let mut atoms = Vec::new();
        for f_atom in base.atoms(t) {
            for j in 0..m {
                atoms.push(f_atom.iter().map(|&omega| omega * m + j).collect());
            }
        }
        initial_partitions.push(atoms);
    }
    let initial = FiniteModel::new(outcomes, weights, initial_partitions)?;

    let tm = TauModel {
        base: base.clone(),
        tau_values,
        joint,
        enlarged,
        initial,
    };
    debug_assert!(tm.tau_is_stopping_time());
    Ok(tm)
}

/// The conditional densities p_t(u), one F-adapted process per tau value.
#[derive(Debug, Clone)]
pub struct DensityProcess {
    pub tau_values: Vec<TauValue>,
    processes: Vec<AdaptedProcess>,
}

impl DensityProcess {
    pub fn process(&self, j: usize) -> &AdaptedProcess {
        &self.processes[j]
    }

    pub fn value(&self, j: usize, omega: usize, t: usize) -> f64 {
        self.processes[j].scalar(omega, t)
    }
}

/// Computes p_t(u) = P[tau = u | F_t] / P[tau = u] on the base model. Each
/// process is an exact F-martingale starting at one.
pub fn density_process(tm: &TauModel) -> DensityProcess {
    let base = &tm.base;
    let tau_law = tm.tau_law();
    let processes = (0..tm.tau_values.len())
        .map(|j| {
            let xi: Vec<f64> = (0..base.n_outcomes())
                .map(|omega| tm.joint[omega][j] / base.weights()[omega] / tau_law[j])
                .collect();
            AdaptedProcess::martingale_from_terminal(base, &xi)
        })
        .collect();
    DensityProcess {
        tau_values: tm.tau_values.clone(),
        processes,
    }
}

/// The density-quotient martingale L_t = p_0(tau) / p_t(tau) on the
/// initially enlarged model.
pub fn l_process(tm: &TauModel) -> AdaptedProcess {
    let density = density_process(tm);
    let values = PathArray::from_fn(
        tm.initial.n_outcomes(),
        tm.initial.horizon(),
        1,
        |omega, t, _| {
            let j = tm.tau_index(omega);
            let base_omega = tm.base_outcome(omega);
            density.value(j, base_omega, 0) / density.value(j, base_omega, t)
        },
    );
    AdaptedProcess::new(&tm.initial, values).expect("L is adapted to the initial enlargement")
}

/// The decoupling measure at a horizon, with its verification residuals.
#[derive(Debug, Clone)]
pub struct QReport {
    /// Q-weight per enlarged outcome (unnormalized table Q = P * L).
    pub q: Vec<f64>,
    /// All Q-masses strictly positive (equivalence of Q and P).
    pub p1_equivalent: bool,
    /// Largest deviation of Q from P on horizon F-atoms and on sigma(tau).
    pub p2_marginal_dev: f64,
    /// Largest deviation of `Q[A x {u}]` from `Q[A] Q[tau = u]` over horizon
    /// F-atoms A; with a discrete terminal partition this is the
    /// outcome-level factorization residual.
    pub p3_factorization_dev: f64,
}

impl QReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.p1_equivalent && self.p2_marginal_dev <= tol && self.p3_factorization_dev <= tol
    }
}

/// Builds Q = L_{t_star} dP on the enlarged space and verifies the three
/// decoupling properties exactly: equivalence, unchanged marginals, and
/// independence of F_{t_star} and sigma(tau) under Q (factorization, P_0
/// being trivial).
pub fn measure_q(tm: &TauModel, t_star: usize) -> QReport {
    assert!(t_star <= tm.base.horizon());
    let density = density_process(tm);
    let n = tm.base.n_outcomes();
    let m = tm.tau_values.len();

    let mut q = vec![0.0; n * m];
    for omega in 0..n {
        for j in 0..m {
            let l = density.value(j, omega, 0) / density.value(j, omega, t_star);
            q[omega * m + j] = tm.joint[omega][j] * l;
        }
    }

    let p1_equivalent = q.iter().all(|&w| w > 0.0);

    let atom_q_mass = |atom: &[usize]| -> f64 {
        atom.iter()
            .map(|&omega| q[omega * m..(omega + 1) * m].iter().sum::<f64>())
            .sum()
    };

    // P2: Q agrees with P on F_{t_star} and on sigma(tau).
    let mut p2_marginal_dev: f64 = 0.0;
    for atom in tm.base.atoms(t_star) {
        let p_mass: f64 = atom.iter().map(|&omega| tm.base.weights()[omega]).sum();
        p2_marginal_dev = p2_marginal_dev.max((atom_q_mass(atom) - p_mass).abs());
    }
    let tau_law = tm.tau_law();
    for j in 0..m {
        let q_mass: f64 = (0..n).map(|omega| q[omega * m + j]).sum();
        p2_marginal_dev = p2_marginal_dev.max((q_mass - tau_law[j]).abs());
    }

    // P3: factorization over (horizon F-atom, tau value) cells.
    let q_total: f64 = q.iter().sum();
    let mut p3_factorization_dev: f64 = 0.0;
    for atom in tm.base.atoms(t_star) {
        let q_atom = atom_q_mass(atom);
        for j in 0..m {
            let q_cell: f64 = atom.iter().map(|&omega| q[omega * m + j]).sum();
            let q_tau: f64 = (0..n).map(|omega| q[omega * m + j]).sum();
            p3_factorization_dev =
                p3_factorization_dev.max((q_cell - q_atom * q_tau / q_total).abs());
        }
    }

    QReport {
        q,
        p1_equivalent,
        p2_marginal_dev,
        p3_factorization_dev,
    }
}

/// Outcome of the enlargement theorem verification: the direct rank check
/// under P and the constructive route through Q must both hold and agree.
#[derive(Debug, Clone)]
pub struct JacodWrpReport {
    pub base: WrpReport,
    pub direct: WrpReport,
    pub constructive: WrpReport,
    pub q: QReport,
    /// Under Q the enlarged model is isomorphic to the independent product
    /// of the base model and the tau-law model.
    pub product_structure_ok: bool,
    pub agree: bool,
}

impl JacodWrpReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.direct.holds
            && self.constructive.holds
            && self.agree
            && self.q.ok(tol)
            && self.product_structure_ok
    }
}

/// The filtration generated by the default indicator alone, on the tau-value
/// space with the law of tau as weights.
fn tau_factor_model(tm: &TauModel) -> Result<FiniteModel> {
    let m = tm.tau_values.len();
    let law = tm.tau_law();
    let mut partitions = Vec::with_capacity(tm.base.horizon() + 1);
    for t in 0..=tm.base.horizon() {
        let mut atoms: Vec<Vec<usize>> = Vec::new();
        for (j, tv) in tm.tau_values.iter().enumerate() {
            if tv.occurred_by(t) {
                atoms.push(vec![j]);
            }
        }
        let lump: Vec<usize> = (0..m)
            .filter(|&j| !tm.tau_values[j].occurred_by(t))
            .collect();
        if !lump.is_empty() {
            atoms.push(lump);
        }
        partitions.push(atoms);
    }
    let labels = tm
        .tau_values
        .iter()
        .map(|tv| format!("tau={}", tv.label()))
        .collect();
    FiniteModel::new(labels, law, partitions)
}

/// Verifies the representation theorem for the progressive enlargement: X
/// must have the WRP in the base model, and then Z = (X, H) has the WRP with
/// respect to G, checked both directly under P and constructively under the
/// decoupling measure Q (where the independent-product machinery applies and
/// equivalence transfers the conclusion back).
pub fn verify_wrp_theorem(tm: &TauModel, x: &AdaptedProcess) -> Result<JacodWrpReport> {
    let base = has_wrp(&tm.base, x);
    if !base.holds {
        return Err(Error::BaseLacksWrp {
            mart_dim: base.mart_dim,
            repr_dim: base.repr_dim,
        });
    }

    let z = AdaptedProcess::stack(&tm.lift_base(x), &tm.default_indicator());
    let direct = has_wrp(&tm.enlarged, &z);

    let horizon = tm.base.horizon();
    let q_report = measure_q(tm, horizon);
    let q_total: f64 = q_report.q.iter().sum();
    let q_weights: Vec<f64> = q_report.q.iter().map(|w| w / q_total).collect();
    let q_model = FiniteModel::new(
        tm.enlarged.outcomes().to_vec(),
        q_weights,
        (0..=horizon)
            .map(|t| tm.enlarged.atoms(t).to_vec())
            .collect(),
    )?;
    let constructive = has_wrp(&q_model, &z);

    // Under Q the enlarged filtration is the independent product of the base
    // and the tau-law filtration, atom for atom.
    let tau_model = tau_factor_model(tm)?;
    let product = product_model(&tm.base, &tau_model)?;
    let product_structure_ok = models_isomorphic(product.model(), &q_model, 1e-9);

    let agree = direct.holds == constructive.holds;
    Ok(JacodWrpReport {
        base,
        direct,
        constructive,
        q: q_report,
        product_structure_ok,
        agree,
    })
}
