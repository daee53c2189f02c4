//! Finite probability models with partition filtrations.
//!
//! Everything in this crate runs on a weighted finite outcome space with a
//! discrete time grid 0..=T. Information flow is a refining sequence of
//! partitions P_0, ..., P_T; the sigma-field at time t is generated by the
//! atoms of P_t, so conditional expectations are weighted atom averages and
//! every martingale statement reduces to finitely many linear identities.
//! Right-continuity of the filtration, a standing assumption in continuous
//! time, holds automatically on a discrete grid and is not checked.

use crate::error::{Error, Result};

/// Default absolute tolerance for exact-engine equality checks. Covers float
/// accumulation over at most a few thousand terms of order one.
pub const EXACT_TOL: f64 = 1e-10;

/// Tolerance for probability-mass bookkeeping (weight sums, factorizations).
pub const MASS_TOL: f64 = 1e-12;

/// Weighted finite outcome space with a refining partition filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    outcomes: Vec<String>,
    weights: Vec<f64>,
    /// `partitions[t]` lists the atoms of P_t as sorted outcome-index sets.
    partitions: Vec<Vec<Vec<usize>>>,
    /// `atom_index[t][omega]` is the position of omega's atom within P_t.
    atom_index: Vec<Vec<usize>>,
    /// `atom_weights[t][a]` is the total weight of atom a of P_t.
    atom_weights: Vec<Vec<f64>>,
}

impl FiniteModel {
    /// Validates weights (positive, summing to one) and the refinement chain
    /// P_0, ..., P_T, then builds the lookup tables.
    pub fn new(
        outcomes: Vec<String>,
        weights: Vec<f64>,
        partitions: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::BadWeights("empty outcome set".into()));
        }
        if outcomes.len() != n {
            return Err(Error::BadWeights(format!(
                "{} labels for {} weights",
                outcomes.len(),
                n
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::BadWeights(format!("weight {w} is not strictly positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
        }
        if partitions.len() < 2 {
            return Err(Error::BadPartition(
                "need partitions P_0..P_T with horizon T >= 1".into(),
            ));
        }

        let mut norm_partitions = Vec::with_capacity(partitions.len());
        let mut atom_index = Vec::with_capacity(partitions.len());
        for (t, raw) in partitions.into_iter().enumerate() {
            let mut seen = vec![usize::MAX; n];
            let mut atoms = Vec::with_capacity(raw.len());
            for (a, atom) in raw.into_iter().enumerate() {
                if atom.is_empty() {
                    return Err(Error::BadPartition(format!("empty atom at t={t}")));
                }
                let mut atom = atom;
                atom.sort_unstable();
                atom.dedup();
                for &omega in &atom {
                    if omega >= n {
                        return Err(Error::BadPartition(format!(
                            "outcome index {omega} out of range at t={t}"
                        )));
                    }
                    if seen[omega] != usize::MAX {
                        return Err(Error::BadPartition(format!(
                            "outcome {omega} appears in two atoms at t={t}"
                        )));
                    }
                    seen[omega] = a;
                }
                atoms.push(atom);
            }
            if seen.contains(&usize::MAX) {
                return Err(Error::BadPartition(format!(
                    "partition at t={t} does not cover the outcome set"
                )));
            }
            norm_partitions.push(atoms);
            atom_index.push(seen);
        }

        // P_{t+1} must refine P_t: each finer atom lies inside one coarser atom.
        for t in 0..norm_partitions.len() - 1 {
            for atom in &norm_partitions[t + 1] {
                let coarse = atom_index[t][atom[0]];
                if atom.iter().any(|&omega| atom_index[t][omega] != coarse) {
                    return Err(Error::NonRefiningFiltration(format!(
                        "an atom of P_{} straddles two atoms of P_{}",
                        t + 1,
                        t
                    )));
                }
            }
        }

        let atom_weights = norm_partitions
            .iter()
            .map(|atoms| {
                atoms
                    .iter()
                    .map(|atom| atom.iter().map(|&omega| weights[omega]).sum())
                    .collect()
            })
            .collect();

        Ok(Self {
            outcomes,
            weights,
            partitions: norm_partitions,
            atom_index,
            atom_weights,
        })
    }

    /// Builds a model with generated outcome labels `w0, w1, ...`.
    pub fn with_default_labels(
        weights: Vec<f64>,
        partitions: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let outcomes = (0..weights.len()).map(|i| format!("w{i}")).collect();
        Self::new(outcomes, weights, partitions)
    }

    /// The canonical two-point model: one fair coin revealed at t = 1.
    pub fn coin() -> Self {
        Self::new(
            vec!["u".into(), "d".into()],
            vec![0.5, 0.5],
            vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
        )
        .expect("coin model is valid")
    }

    pub fn n_outcomes(&self) -> usize {
        self.weights.len()
    }

    /// Time horizon T; partitions run over t = 0..=T.
    pub fn horizon(&self) -> usize {
        self.partitions.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn atoms(&self, t: usize) -> &[Vec<usize>] {
        &self.partitions[t]
    }

    pub fn n_atoms(&self, t: usize) -> usize {
        self.partitions[t].len()
    }

    /// Index within P_t of the atom containing `omega`.
    pub fn atom_of(&self, t: usize, omega: usize) -> usize {
        self.atom_index[t][omega]
    }

    pub fn atom_weight(&self, t: usize, atom: usize) -> f64 {
        self.atom_weights[t][atom]
    }

    /// Whether P_0 is the trivial partition {Omega}.
    pub fn f0_is_trivial(&self) -> bool {
        self.partitions[0].len() == 1
    }

    /// `E[xi]` under the model weights.
    pub fn expectation(&self, xi: &[f64]) -> f64 {
        xi.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// E[xi | P_t] as a full outcome vector, constant on each atom of P_t.
    ///
    /// On atom A the value is sum_{omega in A} w_omega xi(omega) / w(A); the
    /// tower property holds exactly up to float rounding because every level
    /// is a plain weighted average.
    pub fn conditional_expectation(&self, xi: &[f64], t: usize) -> Vec<f64> {
        assert!(t <= self.horizon(), "time beyond horizon");
        assert_eq!(xi.len(), self.n_outcomes());
        let mut out = vec![0.0; xi.len()];
        for (a, atom) in self.partitions[t].iter().enumerate() {
            let w = self.atom_weights[t][a];
            debug_assert!(w > 0.0, "atoms of positive-weight outcomes are never empty");
            let mean = atom.iter().map(|&omega| self.weights[omega] * xi[omega]).sum::<f64>() / w;
            for &omega in atom {
                out[omega] = mean;
            }
        }
        out
    }

    /// Truncates the filtration at `t_star`, dropping later refinements.
    pub fn truncated(&self, t_star: usize) -> Result<Self> {
        if t_star < 1 || t_star > self.horizon() {
            return Err(Error::BadPartition(format!(
                "cannot truncate horizon {} at {t_star}",
                self.horizon()
            )));
        }
        Self::new(
            self.outcomes.clone(),
            self.weights.clone(),
            self.partitions[..=t_star].to_vec(),
        )
    }
}

/// Raw (outcome, time, coordinate) value table backing the process types.
#[derive(Debug, Clone, PartialEq)]
pub struct PathArray {
    n_outcomes: usize,
    horizon: usize,
    dim: usize,
    values: Vec<f64>,
}

impl PathArray {
    pub fn zeros(n_outcomes: usize, horizon: usize, dim: usize) -> Self {
        Self {
            n_outcomes,
            horizon,
            dim,
            values: vec![0.0; n_outcomes * (horizon + 1) * dim],
        }
    }

    pub fn from_fn(
        n_outcomes: usize,
        horizon: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Self::zeros(n_outcomes, horizon, dim);
        for omega in 0..n_outcomes {
            for t in 0..=horizon {
                for k in 0..dim {
                    let v = f(omega, t, k);
                    data.set(omega, t, k, v);
                }
            }
        }
        data
    }

    #[inline]
    fn idx(&self, omega: usize, t: usize, k: usize) -> usize {
        debug_assert!(omega < self.n_outcomes && t <= self.horizon && k < self.dim);
        (omega * (self.horizon + 1) + t) * self.dim + k
    }

    #[inline]
    pub fn get(&self, omega: usize, t: usize, k: usize) -> f64 {
        self.values[self.idx(omega, t, k)]
    }

    #[inline]
    pub fn set(&mut self, omega: usize, t: usize, k: usize, v: f64) {
        let i = self.idx(omega, t, k);
        self.values[i] = v;
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn matches(&self, model: &FiniteModel) -> bool {
        self.n_outcomes == model.n_outcomes() && self.horizon == model.horizon()
    }

    /// Checks that the time-t slice is constant on each atom of the given
    /// partition level. Constancy is exact: values produced atom-wise by the
    /// engine agree bit-for-bit, and authored models carry exact decimals.
    fn constant_on(&self, model: &FiniteModel, t: usize, level: usize) -> bool {
        model.atoms(level).iter().all(|atom| {
            let first = atom[0];
            (0..self.dim).all(|k| {
                let v = self.get(first, t, k);
                atom.iter().all(|&omega| self.get(omega, t, k) == v)
            })
        })
    }
}

/// Vector-valued process adapted to the filtration: the time-t slice is
/// constant on every atom of P_t.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    data: PathArray,
}

impl AdaptedProcess {
    pub fn new(model: &FiniteModel, data: PathArray) -> Result<Self> {
        if !data.matches(model) {
            return Err(Error::DimMismatch(
                "process shape does not match the model".into(),
            ));
        }
        for t in 0..=model.horizon() {
            if !data.constant_on(model, t, t) {
                return Err(Error::NotAdapted(format!(
                    "value at t={t} is not constant on the atoms of P_{t}"
                )));
            }
        }
        Ok(Self { data })
    }

    /// Builds and validates a process from a value function.
    pub fn from_fn(
        model: &FiniteModel,
        dim: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(
            model,
            PathArray::from_fn(model.n_outcomes(), model.horizon(), dim, f),
        )
    }

    /// Scalar variant of [`AdaptedProcess::from_fn`].
    pub fn scalar_from_fn(
        model: &FiniteModel,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        Self::from_fn(model, 1, |omega, t, _| f(omega, t))
    }

    /// Constant deterministic process.
    pub fn constant(model: &FiniteModel, x0: &[f64]) -> Self {
        Self {
            data: PathArray::from_fn(model.n_outcomes(), model.horizon(), x0.len(), |_, _, k| {
                x0[k]
            }),
        }
    }

    /// The martingale M_t = E[xi | P_t]; closes to xi when P_T separates the
    /// support of xi.
    pub fn martingale_from_terminal(model: &FiniteModel, xi: &[f64]) -> Self {
        let mut data = PathArray::zeros(model.n_outcomes(), model.horizon(), 1);
        for t in 0..=model.horizon() {
            let slice = model.conditional_expectation(xi, t);
            for (omega, v) in slice.into_iter().enumerate() {
                data.set(omega, t, 0, v);
            }
        }
        Self { data }
    }

    pub(crate) fn from_raw_unchecked(data: PathArray) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &PathArray {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn horizon(&self) -> usize {
        self.data.horizon
    }

    #[inline]
    pub fn value(&self, omega: usize, t: usize, k: usize) -> f64 {
        self.data.get(omega, t, k)
    }

    /// Scalar accessor; panics unless `dim == 1`.
    #[inline]
    pub fn scalar(&self, omega: usize, t: usize) -> f64 {
        assert_eq!(self.data.dim, 1);
        self.data.get(omega, t, 0)
    }

    /// Jump Delta X_t = X_t - X_{t-1} with the convention Delta X_0 = 0.
    #[inline]
    pub fn increment(&self, omega: usize, t: usize, k: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.data.get(omega, t, k) - self.data.get(omega, t - 1, k)
        }
    }

    /// Left value X_{t-1} (X_0 at t = 0), the predictable evaluation used for
    /// integrands like N_-.
    #[inline]
    pub fn left_value(&self, omega: usize, t: usize, k: usize) -> f64 {
        self.data.get(omega, t.saturating_sub(1), k)
    }

    /// Extracts one coordinate as a scalar process.
    pub fn component(&self, k: usize) -> AdaptedProcess {
        assert!(k < self.data.dim);
        Self {
            data: PathArray::from_fn(
                self.data.n_outcomes,
                self.data.horizon,
                1,
                |omega, t, _| self.data.get(omega, t, k),
            ),
        }
    }

    /// Stacks two processes over the same model into one vector process.
    pub fn stack(a: &AdaptedProcess, b: &AdaptedProcess) -> AdaptedProcess {
        assert_eq!(a.data.n_outcomes, b.data.n_outcomes);
        assert_eq!(a.data.horizon, b.data.horizon);
        let (da, db) = (a.data.dim, b.data.dim);
        Self {
            data: PathArray::from_fn(
                a.data.n_outcomes,
                a.data.horizon,
                da + db,
                |omega, t, k| {
                    if k < da {
                        a.data.get(omega, t, k)
                    } else {
                        b.data.get(omega, t, k - da)
                    }
                },
            ),
        }
    }

    /// Terminal slice of one coordinate as an outcome vector.
    pub fn terminal(&self, k: usize) -> Vec<f64> {
        (0..self.data.n_outcomes)
            .map(|omega| self.data.get(omega, self.data.horizon, k))
            .collect()
    }
}

/// Process whose time-t slice is constant on the atoms of P_{t-1} (of P_0 at
/// t = 0): known one step in advance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictableProcess {
    data: PathArray,
}

impl PredictableProcess {
    pub fn new(model: &FiniteModel, data: PathArray) -> Result<Self> {
        if !data.matches(model) {
            return Err(Error::DimMismatch(
                "process shape does not match the model".into(),
            ));
        }
        for t in 0..=model.horizon() {
            let level = t.saturating_sub(1);
            if !data.constant_on(model, t, level) {
                return Err(Error::NotPredictable(format!(
                    "value at t={t} is not constant on the atoms of P_{level}"
                )));
            }
        }
        Ok(Self { data })
    }

    pub(crate) fn from_raw_unchecked(data: PathArray) -> Self {
        Self { data }
    }

    /// Builds a predictable process from per-(t, atom) values; `f(t, a)` is
    /// evaluated on the atoms of P_{t-1} for t >= 1 and of P_0 at t = 0.
    pub fn from_atom_fn(model: &FiniteModel, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = PathArray::zeros(model.n_outcomes(), model.horizon(), 1);
        for t in 0..=model.horizon() {
            let level = t.saturating_sub(1);
            for (a, atom) in model.atoms(level).iter().enumerate() {
                let v = f(t, a);
                for &omega in atom {
                    data.set(omega, t, 0, v);
                }
            }
        }
        Self { data }
    }

    pub fn data(&self) -> &PathArray {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    #[inline]
    pub fn value(&self, omega: usize, t: usize, k: usize) -> f64 {
        self.data.get(omega, t, k)
    }

    #[inline]
    pub fn scalar(&self, omega: usize, t: usize) -> f64 {
        assert_eq!(self.data.dim, 1);
        self.data.get(omega, t, 0)
    }

    /// Every predictable process is in particular adapted.
    pub fn into_adapted(self) -> AdaptedProcess {
        AdaptedProcess { data: self.data }
    }
}

/// Outcome of a martingale test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    pub ok: bool,
    pub max_violation: f64,
}

impl FiniteModel {
    /// Tests E[X_t | P_{t-1}] = X_{t-1} on every atom, every coordinate.
    pub fn is_martingale(&self, x: &AdaptedProcess) -> MartingaleReport {
        self.is_martingale_with_tol(x, EXACT_TOL)
    }

    pub fn is_martingale_with_tol(&self, x: &AdaptedProcess, tol: f64) -> MartingaleReport {
        let mut max_violation: f64 = 0.0;
        for t in 1..=self.horizon() {
            for (a, atom) in self.atoms(t - 1).iter().enumerate() {
                let w = self.atom_weights[t - 1][a];
                for k in 0..x.dim() {
                    let mean = atom
                        .iter()
                        .map(|&omega| self.weights[omega] * x.value(omega, t, k))
                        .sum::<f64>()
                        / w;
                    let prev = x.value(atom[0], t - 1, k);
                    max_violation = max_violation.max((mean - prev).abs());
                }
            }
        }
        MartingaleReport {
            ok: max_violation <= tol,
            max_violation,
        }
    }

    /// Predictable projection of a raw (outcome, time) table: at each t >= 1
    /// the value on an atom A of P_{t-1} is E[raw_t | A]; at t = 0 it is
    /// E[raw_0 | P_0]. Applied to the jump process of a martingale the result
    /// is identically zero.
    pub fn predictable_projection(&self, raw: &PathArray) -> PredictableProcess {
        assert!(raw.matches(self));
        let mut data = PathArray::zeros(self.n_outcomes(), self.horizon(), raw.dim);
        for t in 0..=self.horizon() {
            let level = t.saturating_sub(1);
            for (a, atom) in self.atoms(level).iter().enumerate() {
                let w = self.atom_weights[level][a];
                for k in 0..raw.dim {
                    let mean = atom
                        .iter()
                        .map(|&omega| self.weights[omega] * raw.get(omega, t, k))
                        .sum::<f64>()
                        / w;
                    for &omega in atom {
                        data.set(omega, t, k, mean);
                    }
                }
            }
        }
        PredictableProcess { data }
    }

    /// Dual predictable projection (compensator) of a scalar process with
    /// increments: A_0 = 0 and Delta A_t = E[Delta X_t | P_{t-1}]. The input
    /// need not be increasing; `X - X_0 - (A - A_0)` is always a martingale.
    pub fn predictable_compensator(&self, x: &AdaptedProcess) -> PredictableProcess {
        let mut data = PathArray::zeros(self.n_outcomes(), self.horizon(), x.dim());
        for t in 1..=self.horizon() {
            for (a, atom) in self.atoms(t - 1).iter().enumerate() {
                let w = self.atom_weights[t - 1][a];
                for k in 0..x.dim() {
                    let mean_inc = atom
                        .iter()
                        .map(|&omega| self.weights[omega] * x.increment(omega, t, k))
                        .sum::<f64>()
                        / w;
                    for &omega in atom {
                        let prev = data.get(omega, t - 1, k);
                        data.set(omega, t, k, prev + mean_inc);
                    }
                }
            }
        }
        PredictableProcess { data }
    }

    /// Compensator of an increasing scalar process null at zero; rejects
    /// inputs that decrease along some path or do not start at zero.
    pub fn compensator_increasing(&self, inc: &AdaptedProcess) -> Result<PredictableProcess> {
        if inc.dim() != 1 {
            return Err(Error::DimMismatch("compensator expects a scalar process".into()));
        }
        for omega in 0..self.n_outcomes() {
            if inc.scalar(omega, 0) != 0.0 {
                return Err(Error::NotIncreasing(format!(
                    "path of outcome {omega} does not start at 0"
                )));
            }
            for t in 1..=self.horizon() {
                if inc.increment(omega, t, 0) < 0.0 {
                    return Err(Error::NotIncreasing(format!(
                        "path of outcome {omega} decreases at t={t}"
                    )));
                }
            }
        }
        Ok(self.predictable_compensator(inc))
    }
}
