//! Monte Carlo engine for continuous-time two-factor scenarios.
//!
//! Each factor is a sum of three independent components: a Brownian part
//! with volatility sigma, a compound Poisson part with finite mark law, and
//! a step part jumping at deterministic times that must lie on the grid.
//! Compensators are analytic, taken from the scenario descriptor and never
//! estimated from paths: the Poisson part drains lambda dt times the mean
//! integrand value per cell, and each deterministic jump time carries an
//! exact atom compensation.
//!
//! The product check builds M = K . X^c + W * (mu^X - nu^X) and N likewise,
//! then measures
//!
//! ```text
//! R(dt) = max over paths of sup_t | M_t N_t - H . Z^c_t - G * (mu^Z - nu^Z)_t |
//! ```
//!
//! with H and G the explicit product integrands. Evaluation is event-driven:
//! within a cell, Poisson jumps are processed one by one in arrival order
//! with the running pre-event values of M and N (the left limits at the jump
//! times), then the Brownian increments enter with cell-left integrand
//! values (the Ito convention), then the density drains, then the shared
//! atom with its exact product compensation. Off the Brownian part every
//! term on both sides is a finite sum that cancels exactly, so pure-jump
//! scenarios have residuals at rounding level at every grid size; with
//! Brownian components the uncaptured cross terms K dB_X . J dB_Y decay at
//! strong order one half under grid refinement.
//!
//! Reproducibility: path p draws from a ChaCha8 stream whose 32-byte seed is
//! produced by SplitMix64 iterated from `master_seed XOR (p+1) * 2^64/phi`.
//! Paths are mutually independent streams, so serial and path-parallel runs
//! agree bit for bit.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_SNAP_TOL: f64 = 1e-9;

/// One deterministic jump time with its finite mark law; the law may give
/// positive mass to the zero mark (no jump materializes).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepAtom {
    pub time: f64,
    pub law: Vec<(f64, f64)>,
}

/// One factor process: Brownian volatility, compound Poisson jumps and
/// deterministic-time step jumps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct FactorSpec {
    pub sigma: f64,
    pub jump_rate: f64,
    #[serde(default)]
    pub jump_law: Vec<(f64, f64)>,
    #[serde(default)]
    pub steps: Vec<StepAtom>,
}

/// A two-factor simulation scenario on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McScenario {
    pub x: FactorSpec,
    pub y: FactorSpec,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Integrand against the jump marks of one factor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkIntegrand {
    /// W(x) = x.
    Identity,
    /// W(x) = x^2.
    Square,
    /// W(x) = c.
    Const { value: f64 },
}

impl MarkIntegrand {
    #[inline]
    pub fn eval(&self, mark: f64) -> f64 {
        match self {
            MarkIntegrand::Identity => mark,
            MarkIntegrand::Square => mark * mark,
            MarkIntegrand::Const { value } => *value,
        }
    }
}

/// Integrand against the Brownian part, sampled at the left endpoint of each
/// cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContinuousIntegrand {
    Const { value: f64 },
    /// K_t = X_{t-}: the factor's own left value.
    LeftValue,
}

impl ContinuousIntegrand {
    #[inline]
    fn eval(&self, left_value: f64) -> f64 {
        match self {
            ContinuousIntegrand::Const { value } => *value,
            ContinuousIntegrand::LeftValue => left_value,
        }
    }
}

/// Analytic compensator of one factor on the grid: the density part drains
/// `rate * dt * mean(W)` per cell, the atoms compensate exactly at their
/// cells.
#[derive(Debug, Clone)]
pub struct AnalyticCompensator {
    pub rate: f64,
    pub jump_law: Vec<(f64, f64)>,
    /// (cell index in 1..=n_steps, mark law), sorted by cell.
    pub atoms: Vec<(usize, Vec<(f64, f64)>)>,
}

impl AnalyticCompensator {
    /// Mean integrand value under the Poisson mark law.
    fn density_mean(&self, w: &MarkIntegrand) -> f64 {
        self.jump_law.iter().map(|&(m, p)| w.eval(m) * p).sum()
    }

    /// Atom compensation: the mean of W over the nonzero marks of the law.
    fn atom_hat(law: &[(f64, f64)], w: &MarkIntegrand) -> f64 {
        law.iter()
            .filter(|&&(m, _)| m != 0.0)
            .map(|&(m, p)| w.eval(m) * p)
            .sum()
    }
}

/// Validated per-factor simulation data.
#[derive(Debug, Clone)]
pub struct CompiledFactor {
    pub sigma: f64,
    pub compensator: AnalyticCompensator,
}

/// Validated grid.
#[derive(Debug, Clone, Copy)]
pub struct GridInfo {
    pub n_steps: usize,
    pub dt: f64,
}

fn snap_to_grid(time: f64, dt: f64, n_steps: usize) -> Result<usize> {
    let idx = (time / dt).round() as usize;
    if idx == 0 || idx > n_steps || (idx as f64 * dt - time).abs() > GRID_SNAP_TOL {
        return Err(Error::BadGrid(format!(
            "time {time} does not lie on the grid with dt={dt}"
        )));
    }
    Ok(idx)
}

fn validate_law(law: &[(f64, f64)], allow_zero_mark: bool, what: &str) -> Result<()> {
    if law.is_empty() {
        return Err(Error::BadGrid(format!("{what}: empty mark law")));
    }
    let total: f64 = law.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::BadGrid(format!(
            "{what}: mark law sums to {total}, not 1"
        )));
    }
    for &(m, p) in law {
        if p < 0.0 || !p.is_finite() || !m.is_finite() {
            return Err(Error::BadGrid(format!(
                "{what}: invalid law entry ({m}, {p})"
            )));
        }
        if m == 0.0 && !allow_zero_mark {
            return Err(Error::BadGrid(format!("{what}: zero marks are not jumps")));
        }
    }
    Ok(())
}

fn compile_factor(spec: &FactorSpec, grid: GridInfo, what: &str) -> Result<CompiledFactor> {
    if spec.sigma < 0.0 || spec.jump_rate < 0.0 {
        return Err(Error::BadGrid(format!("{what}: negative sigma or rate")));
    }
    if spec.jump_rate > 0.0 {
        validate_law(&spec.jump_law, false, what)?;
    }
    let mut atoms = Vec::with_capacity(spec.steps.len());
    for step in &spec.steps {
        validate_law(&step.law, true, what)?;
        let cell = snap_to_grid(step.time, grid.dt, grid.n_steps)?;
        atoms.push((cell, step.law.clone()));
    }
    atoms.sort_by_key(|&(cell, _)| cell);
    if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::BadGrid(format!("{what}: duplicate step times")));
    }
    Ok(CompiledFactor {
        sigma: spec.sigma,
        compensator: AnalyticCompensator {
            rate: spec.jump_rate,
            jump_law: spec.jump_law.clone(),
            atoms,
        },
    })
}

/// Validates a scenario and computes the grid.
pub fn compile(scenario: &McScenario) -> Result<(GridInfo, CompiledFactor, CompiledFactor)> {
    if scenario.dt <= 0.0 || scenario.horizon <= 0.0 {
        return Err(Error::BadGrid("dt and horizon must be positive".into()));
    }
    let n_steps = (scenario.horizon / scenario.dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * scenario.dt - scenario.horizon).abs() > GRID_SNAP_TOL {
        return Err(Error::BadGrid(format!(
            "dt={} does not divide the horizon {}",
            scenario.dt, scenario.horizon
        )));
    }
    if scenario.n_paths == 0 {
        return Err(Error::BadGrid("need at least one path".into()));
    }
    let grid = GridInfo {
        n_steps,
        dt: scenario.dt,
    };
    let x = compile_factor(&scenario.x, grid, "factor x")?;
    let y = compile_factor(&scenario.y, grid, "factor y")?;
    Ok((grid, x, y))
}

/// One compound-Poisson jump: cell, intra-cell arrival position, mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonJump {
    pub cell: usize,
    pub position: f64,
    pub mark: f64,
}

/// One simulated factor path.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPath {
    /// sigma * Delta B per cell, indexed 1..=n_steps (zeros when sigma = 0).
    pub brownian: Vec<f64>,
    /// Jumps sorted by (cell, position); multiple jumps per cell keep their
    /// arrival order.
    pub jumps: Vec<PoissonJump>,
    /// Realized step marks aligned with the compiled atom list (may be 0).
    pub atom_marks: Vec<f64>,
    /// Path values on the grid 0..=n_steps.
    pub values: Vec<f64>,
}

/// One simulated path of the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub x: FactorPath,
    pub y: FactorPath,
}

/// Materialized bundle of paths; for long grids and many paths prefer the
/// streaming entry points, which hold one path at a time.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: GridInfo,
    pub x_factor: CompiledFactor,
    pub y_factor: CompiledFactor,
    pub paths: Vec<PathPair>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG stream for one path: SplitMix64 over master_seed and path index
/// fills the ChaCha8 key. Documented so parallel shards can reproduce it.
pub fn path_rng(master_seed: u64, path: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ path.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn draw_mark(rng: &mut ChaCha8Rng, law: &[(f64, f64)]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(mark, p) in law {
        acc += p;
        if u < acc {
            return mark;
        }
    }
    law.last().expect("law is nonempty").0
}

fn simulate_factor(rng: &mut ChaCha8Rng, factor: &CompiledFactor, grid: GridInfo) -> FactorPath {
    let n = grid.n_steps;
    let sqrt_dt = grid.dt.sqrt();
    let mut brownian = vec![0.0; n + 1];
    let mut jumps = Vec::new();
    let mut atom_marks = vec![0.0; factor.compensator.atoms.len()];
    let mut atom_cursor = 0usize;

    let poisson = if factor.compensator.rate > 0.0 {
        Some(Poisson::new(factor.compensator.rate * grid.dt).expect("positive mean"))
    } else {
        None
    };

    for cell in 1..=n {
        if factor.sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            brownian[cell] = factor.sigma * sqrt_dt * z;
        }
        if let Some(ref pois) = poisson {
            let count = pois.sample(rng) as usize;
            let mut cell_jumps: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    let position: f64 = rng.random();
                    let mark = draw_mark(rng, &factor.compensator.jump_law);
                    (position, mark)
                })
                .collect();
            cell_jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (position, mark) in cell_jumps {
                jumps.push(PoissonJump {
                    cell,
                    position,
                    mark,
                });
            }
        }
        if atom_cursor < factor.compensator.atoms.len()
            && factor.compensator.atoms[atom_cursor].0 == cell
        {
            atom_marks[atom_cursor] = draw_mark(rng, &factor.compensator.atoms[atom_cursor].1);
            atom_cursor += 1;
        }
    }

    // Grid values: cumulative Brownian plus jumps plus realized atoms.
    let mut values = vec![0.0; n + 1];
    let mut jump_cursor = 0usize;
    let mut atom_cursor = 0usize;
    let mut acc = 0.0;
    for cell in 1..=n {
        acc += brownian[cell];
        while jump_cursor < jumps.len() && jumps[jump_cursor].cell == cell {
            acc += jumps[jump_cursor].mark;
            jump_cursor += 1;
        }
        if atom_cursor < factor.compensator.atoms.len()
            && factor.compensator.atoms[atom_cursor].0 == cell
        {
            acc += atom_marks[atom_cursor];
            atom_cursor += 1;
        }
        values[cell] = acc;
    }

    FactorPath {
        brownian,
        jumps,
        atom_marks,
        values,
    }
}

/// Simulates one path of the pair; X draws first, then Y.
pub fn simulate_path(
    grid: GridInfo,
    x_factor: &CompiledFactor,
    y_factor: &CompiledFactor,
    master_seed: u64,
    path: usize,
) -> PathPair {
    let mut rng = path_rng(master_seed, path as u64);
    let x = simulate_factor(&mut rng, x_factor, grid);
    let y = simulate_factor(&mut rng, y_factor, grid);
    PathPair { x, y }
}

/// Materializes all paths of a scenario.
pub fn simulate(scenario: &McScenario) -> Result<PathBundle> {
    let (grid, x_factor, y_factor) = compile(scenario)?;
    let paths = (0..scenario.n_paths)
        .map(|p| simulate_path(grid, &x_factor, &y_factor, scenario.seed, p))
        .collect();
    Ok(PathBundle {
        grid,
        x_factor,
        y_factor,
        paths,
    })
}

/// Compensated jump integral of one factor path on the grid: realized jump
/// values minus the density drain per cell, with deterministic jump times
/// compensated exactly at their atoms.
pub fn mc_compensated_integral(
    grid: GridInfo,
    factor: &CompiledFactor,
    path: &FactorPath,
    w: &MarkIntegrand,
) -> Vec<f64> {
    let n = grid.n_steps;
    let drain = factor.compensator.rate * grid.dt * factor.compensator.density_mean(w);
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    let mut jump_cursor = 0usize;
    let mut atom_cursor = 0usize;
    for cell in 1..=n {
        while jump_cursor < path.jumps.len() && path.jumps[jump_cursor].cell == cell {
            acc += w.eval(path.jumps[jump_cursor].mark);
            jump_cursor += 1;
        }
        acc -= drain;
        if atom_cursor < factor.compensator.atoms.len()
            && factor.compensator.atoms[atom_cursor].0 == cell
        {
            let realized = path.atom_marks[atom_cursor];
            if realized != 0.0 {
                acc += w.eval(realized);
            }
            acc -= AnalyticCompensator::atom_hat(&factor.compensator.atoms[atom_cursor].1, w);
            atom_cursor += 1;
        }
        out[cell] = acc;
    }
    out
}

/// Ito-style left-point integral of K against the Brownian part of a factor
/// path.
pub fn mc_continuous_integral(
    grid: GridInfo,
    path: &FactorPath,
    k: &ContinuousIntegrand,
) -> Vec<f64> {
    let n = grid.n_steps;
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    for cell in 1..=n {
        acc += k.eval(path.values[cell - 1]) * path.brownian[cell];
        out[cell] = acc;
    }
    out
}

/// Sample drift statistic of a terminal quantity that should have mean zero.
#[derive(Debug, Clone)]
pub struct DriftStat {
    pub name: &'static str,
    pub mean: f64,
    pub std_error: f64,
    /// Set when |mean| exceeds three standard errors; a flag, not a failure.
    pub flagged: bool,
}

fn drift_stat(name: &'static str, sum: f64, sum_sq: f64, n: usize) -> DriftStat {
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let std_error = (var / n as f64).sqrt();
    DriftStat {
        name,
        mean,
        std_error,
        flagged: mean.abs() > 3.0 * std_error,
    }
}

/// Result of the product-representation residual run.
#[derive(Debug, Clone)]
pub struct McProductReport {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    /// max over paths of sup over grid times of the identity defect.
    pub residual: f64,
    pub drift: Vec<DriftStat>,
}

/// The four integrands of a product run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McIntegrands {
    pub w: MarkIntegrand,
    pub v: MarkIntegrand,
    pub k: ContinuousIntegrand,
    pub j: ContinuousIntegrand,
}

struct AtomData {
    what: f64,
    vhat: f64,
    x_index: Option<usize>,
    y_index: Option<usize>,
}

/// Runs the event-driven product check over all paths of the scenario,
/// streaming one path at a time.
pub fn mc_verify_product(
    scenario: &McScenario,
    integrands: &McIntegrands,
) -> Result<McProductReport> {
    let (grid, x_factor, y_factor) = compile(scenario)?;
    let n = grid.n_steps;
    let w = &integrands.w;
    let v = &integrands.v;

    let x_drain = x_factor.compensator.rate * grid.dt * x_factor.compensator.density_mean(w);
    let y_drain = y_factor.compensator.rate * grid.dt * y_factor.compensator.density_mean(v);

    // Per cell: the shared atom data if either factor steps there.
    let mut atom_at_cell: Vec<Option<AtomData>> = (0..=n).map(|_| None).collect();
    for (i, (cell, law)) in x_factor.compensator.atoms.iter().enumerate() {
        atom_at_cell[*cell] = Some(AtomData {
            what: AnalyticCompensator::atom_hat(law, w),
            vhat: 0.0,
            x_index: Some(i),
            y_index: None,
        });
    }
    for (i, (cell, law)) in y_factor.compensator.atoms.iter().enumerate() {
        let vhat = AnalyticCompensator::atom_hat(law, v);
        match &mut atom_at_cell[*cell] {
            Some(data) => {
                data.vhat = vhat;
                data.y_index = Some(i);
            }
            slot => {
                *slot = Some(AtomData {
                    what: 0.0,
                    vhat,
                    x_index: None,
                    y_index: Some(i),
                });
            }
        }
    }

    let mut residual: f64 = 0.0;
    let mut sums = [0.0f64; 4];
    let mut sums_sq = [0.0f64; 4];

    for p in 0..scenario.n_paths {
        let pair = simulate_path(grid, &x_factor, &y_factor, scenario.seed, p);
        let (xp, yp) = (&pair.x, &pair.y);
        let mut m = 0.0;
        let mut n_val = 0.0;
        let mut x_jump_int = 0.0;
        let mut y_jump_int = 0.0;
        let mut x_cont_int = 0.0;
        let mut y_cont_int = 0.0;
        let mut rhs = 0.0;
        let mut xj = 0usize;
        let mut yj = 0usize;

        for cell in 1..=n {
            let k_left = integrands.k.eval(xp.values[cell - 1]);
            let j_left = integrands.j.eval(yp.values[cell - 1]);
            let m_cell_left = m;
            let n_cell_left = n_val;

            // Poisson jumps in arrival order across both factors, with the
            // running pre-event values as the predictable left limits.
            loop {
                let next_x = xp.jumps.get(xj).filter(|e| e.cell == cell);
                let next_y = yp.jumps.get(yj).filter(|e| e.cell == cell);
                let take_x = match (next_x, next_y) {
                    (None, None) => break,
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    (Some(ex), Some(ey)) => ex.position <= ey.position,
                };
                if take_x {
                    let dm = w.eval(xp.jumps[xj].mark);
                    rhs += n_val * dm;
                    m += dm;
                    x_jump_int += dm;
                    xj += 1;
                } else {
                    let dn = v.eval(yp.jumps[yj].mark);
                    rhs += m * dn;
                    n_val += dn;
                    y_jump_int += dn;
                    yj += 1;
                }
            }

            // Brownian increments, cell-left sampling for all integrands.
            let dmc = k_left * xp.brownian[cell];
            let dnc = j_left * yp.brownian[cell];
            rhs += n_cell_left * dmc + m_cell_left * dnc;
            m += dmc;
            n_val += dnc;
            x_cont_int += dmc;
            y_cont_int += dnc;

            // Density drains, one factor at a time with pre-event values.
            rhs += n_val * (-x_drain);
            m -= x_drain;
            x_jump_int -= x_drain;
            rhs += m * (-y_drain);
            n_val -= y_drain;
            y_jump_int -= y_drain;

            // Deterministic jump time: realized pair against the exact
            // product compensation.
            if let Some(data) = &atom_at_cell[cell] {
                let xm = data.x_index.map(|i| xp.atom_marks[i]).unwrap_or(0.0);
                let ym = data.y_index.map(|i| yp.atom_marks[i]).unwrap_or(0.0);
                let wx = if xm != 0.0 { w.eval(xm) } else { 0.0 };
                let vy = if ym != 0.0 { v.eval(ym) } else { 0.0 };
                let cross = if xm != 0.0 && ym != 0.0 { wx * vy } else { 0.0 };
                let u_real = cross - data.what * vy - data.vhat * wx;
                let u_hat = -data.what * data.vhat;
                let g_real = n_val * wx + m * vy + u_real;
                let g_hat = n_val * data.what + m * data.vhat + u_hat;
                rhs += g_real - g_hat;
                let w_tilde = wx - data.what;
                let v_tilde = vy - data.vhat;
                m += w_tilde;
                n_val += v_tilde;
                x_jump_int += w_tilde;
                y_jump_int += v_tilde;
            }

            residual = residual.max((m * n_val - rhs).abs());
        }

        for (slot, value) in [x_jump_int, y_jump_int, x_cont_int, y_cont_int]
            .into_iter()
            .enumerate()
        {
            sums[slot] += value;
            sums_sq[slot] += value * value;
        }
    }

    let names = [
        "x-jump-integral",
        "y-jump-integral",
        "x-continuous-integral",
        "y-continuous-integral",
    ];
    let drift = names
        .into_iter()
        .zip(sums.into_iter().zip(sums_sq))
        .map(|(name, (sum, sum_sq))| drift_stat(name, sum, sum_sq, scenario.n_paths))
        .collect();

    Ok(McProductReport {
        dt: grid.dt,
        n_steps: n,
        n_paths: scenario.n_paths,
        residual,
        drift,
    })
}

/// One rung of a grid-refinement ladder.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub residual: f64,
    /// residual(this) / residual(previous rung); absent on the first rung.
    pub ratio: Option<f64>,
    /// Set when the residual grew against the expected decay.
    pub monotonicity_flag: bool,
    pub drift_flags: usize,
}

/// Residual ladder over a set of grid sizes.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Runs the product check over a ladder of grid sizes with the same master
/// seed per rung.
pub fn convergence_study(
    base: &McScenario,
    dts: &[f64],
    integrands: &McIntegrands,
) -> Result<ConvergenceTable> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(dts.len());
    for &dt in dts {
        let scenario = McScenario { dt, ..base.clone() };
        let report = mc_verify_product(&scenario, integrands)?;
        let ratio = rows.last().map(|prev| report.residual / prev.residual);
        // Growth below the rounding floor is noise, not a violation.
        let beyond_noise = report.residual > 1e-12;
        rows.push(ConvergenceRow {
            dt,
            residual: report.residual,
            ratio,
            monotonicity_flag: ratio.map(|r| r > 1.0 && beyond_noise).unwrap_or(false),
            drift_flags: report.drift.iter().filter(|d| d.flagged).count(),
        });
    }
    Ok(ConvergenceTable { rows })
}

/// Ito isometry spot check: per path, (K . X^c_T)^2 minus the quadratic
/// integral of K^2 sigma^2 dt has mean zero; reports the studentized gap.
#[derive(Debug, Clone)]
pub struct IsometryReport {
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub gap_std_errors: f64,
    pub ok: bool,
}

pub fn ito_isometry_check(
    scenario: &McScenario,
    k: &ContinuousIntegrand,
) -> Result<IsometryReport> {
    let (grid, x_factor, y_factor) = compile(scenario)?;
    let n_paths = scenario.n_paths;
    let mut sum_gap = 0.0;
    let mut sum_gap_sq = 0.0;
    let mut sum_lhs = 0.0;
    let mut sum_rhs = 0.0;
    for p in 0..n_paths {
        let pair = simulate_path(grid, &x_factor, &y_factor, scenario.seed, p);
        let integral = mc_continuous_integral(grid, &pair.x, k);
        let terminal = *integral.last().expect("grid has entries");
        let quad: f64 = (1..=grid.n_steps)
            .map(|cell| {
                let kv = k.eval(pair.x.values[cell - 1]);
                kv * kv * x_factor.sigma * x_factor.sigma * grid.dt
            })
            .sum();
        let gap = terminal * terminal - quad;
        sum_gap += gap;
        sum_gap_sq += gap * gap;
        sum_lhs += terminal * terminal;
        sum_rhs += quad;
    }
    let mean_gap = sum_gap / n_paths as f64;
    let var = (sum_gap_sq / n_paths as f64 - mean_gap * mean_gap).max(0.0);
    let se = (var / n_paths as f64).sqrt();
    let gap_std_errors = if se > 0.0 { mean_gap.abs() / se } else { 0.0 };
    Ok(IsometryReport {
        lhs_mean: sum_lhs / n_paths as f64,
        rhs_mean: sum_rhs / n_paths as f64,
        gap_std_errors,
        ok: gap_std_errors <= 5.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_brownian(n_paths: usize, dt: f64, seed: u64) -> McScenario {
        McScenario {
            x: FactorSpec {
                sigma: 1.0,
                ..Default::default()
            },
            y: FactorSpec {
                sigma: 1.0,
                ..Default::default()
            },
            dt,
            horizon: 1.0,
            n_paths,
            seed,
        }
    }

    fn pure_jump(n_paths: usize, dt: f64, seed: u64) -> McScenario {
        McScenario {
            x: FactorSpec {
                sigma: 0.0,
                jump_rate: 1.0,
                jump_law: vec![(1.0, 0.4), (-1.0, 0.35), (2.0, 0.25)],
                steps: vec![StepAtom {
                    time: 0.5,
                    law: vec![(1.5, 0.5), (0.0, 0.5)],
                }],
            },
            y: FactorSpec {
                sigma: 0.0,
                jump_rate: 0.7,
                jump_law: vec![(0.5, 0.6), (-1.5, 0.4)],
                steps: vec![
                    StepAtom {
                        time: 0.5,
                        law: vec![(-2.0, 0.3), (1.0, 0.7)],
                    },
                    StepAtom {
                        time: 0.75,
                        law: vec![(1.0, 1.0)],
                    },
                ],
            },
            dt,
            horizon: 1.0,
            n_paths,
            seed,
        }
    }

    fn identity_integrands() -> McIntegrands {
        McIntegrands {
            w: MarkIntegrand::Identity,
            v: MarkIntegrand::Identity,
            k: ContinuousIntegrand::Const { value: 1.0 },
            j: ContinuousIntegrand::Const { value: 1.0 },
        }
    }

    #[test]
    fn bad_grids_rejected() {
        let mut s = pure_brownian(10, 0.3, 1);
        assert!(matches!(compile(&s), Err(Error::BadGrid(_))));
        s.dt = 0.25;
        assert!(compile(&s).is_ok());
        // Atom off the grid.
        s.x.steps = vec![StepAtom {
            time: 0.37,
            law: vec![(1.0, 1.0)],
        }];
        assert!(matches!(compile(&s), Err(Error::BadGrid(_))));
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let s = pure_jump(20, 0.125, 77);
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        for (pa, pb) in a.paths.iter().zip(&b.paths) {
            assert_eq!(pa, pb);
        }
        // Per-path streams are independent of enumeration order.
        let (grid, xf, yf) = compile(&s).unwrap();
        let direct = simulate_path(grid, &xf, &yf, s.seed, 7);
        assert_eq!(direct, a.paths[7]);
    }

    #[test]
    fn brownian_terminal_matches_clt_bound() {
        let s = McScenario {
            x: FactorSpec {
                sigma: 1.0,
                ..Default::default()
            },
            y: FactorSpec::default(),
            dt: 1e-2,
            horizon: 1.0,
            n_paths: 10_000,
            seed: 2024,
        };
        let bundle = simulate(&s).unwrap();
        let mean: f64 = bundle
            .paths
            .iter()
            .map(|p| p.x.values.last().unwrap())
            .sum::<f64>()
            / s.n_paths as f64;
        assert!(mean.abs() <= 3.0 / (s.n_paths as f64).sqrt());
    }

    #[test]
    fn poisson_jump_counts_match_moments() {
        let s = McScenario {
            x: FactorSpec {
                sigma: 0.0,
                jump_rate: 1.0,
                jump_law: vec![(1.0, 0.5), (-1.0, 0.5)],
                steps: vec![],
            },
            y: FactorSpec::default(),
            dt: 1e-2,
            horizon: 1.0,
            n_paths: 10_000,
            seed: 5,
        };
        let bundle = simulate(&s).unwrap();
        let mean_count: f64 = bundle
            .paths
            .iter()
            .map(|p| p.x.jumps.len() as f64)
            .sum::<f64>()
            / s.n_paths as f64;
        let t = s.horizon;
        assert!((mean_count - t).abs() <= 3.0 * (t / s.n_paths as f64).sqrt());
    }

    #[test]
    fn deterministic_step_jumps_exactly_once() {
        let s = McScenario {
            x: FactorSpec {
                sigma: 0.0,
                jump_rate: 0.0,
                jump_law: vec![],
                steps: vec![StepAtom {
                    time: 0.5,
                    law: vec![(1.0, 1.0)],
                }],
            },
            y: FactorSpec::default(),
            dt: 0.25,
            horizon: 1.0,
            n_paths: 50,
            seed: 9,
        };
        let bundle = simulate(&s).unwrap();
        for p in &bundle.paths {
            assert_eq!(p.x.values[1], 0.0);
            assert_eq!(p.x.values[2], 1.0); // jump at t = 0.5 (cell 2)
            assert_eq!(p.x.values[4], 1.0);
            assert!(p.x.jumps.is_empty());
        }
        // A certain deterministic jump is fully compensated: the integral
        // vanishes pathwise.
        let (grid, xf, _) = compile(&s).unwrap();
        for p in &bundle.paths {
            let int = mc_compensated_integral(grid, &xf, &p.x, &MarkIntegrand::Identity);
            for v in int {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn compensated_poisson_has_zero_drift() {
        // W = 1 turns the integral into N_T - lambda T.
        let s = McScenario {
            x: FactorSpec {
                sigma: 0.0,
                jump_rate: 1.0,
                jump_law: vec![(1.0, 0.5), (-1.0, 0.5)],
                steps: vec![],
            },
            y: FactorSpec::default(),
            dt: 1e-2,
            horizon: 1.0,
            n_paths: 10_000,
            seed: 11,
        };
        let bundle = simulate(&s).unwrap();
        let (grid, xf, _) = compile(&s).unwrap();
        for w in [MarkIntegrand::Const { value: 1.0 }, MarkIntegrand::Identity] {
            let terminals: Vec<f64> = bundle
                .paths
                .iter()
                .map(|p| *mc_compensated_integral(grid, &xf, &p.x, &w).last().unwrap())
                .collect();
            let mean: f64 = terminals.iter().sum::<f64>() / terminals.len() as f64;
            let var: f64 = terminals
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / terminals.len() as f64;
            let se = (var / terminals.len() as f64).sqrt();
            assert!(mean.abs() <= 3.0 * se, "drift {mean} vs se {se}");
        }
    }

    #[test]
    fn unit_integrand_recovers_brownian_path() {
        let s = pure_brownian(10, 0.125, 3);
        let bundle = simulate(&s).unwrap();
        let (grid, _, _) = compile(&s).unwrap();
        for p in &bundle.paths {
            let int =
                mc_continuous_integral(grid, &p.x, &ContinuousIntegrand::Const { value: 1.0 });
            for (cell, v) in int.iter().enumerate() {
                let direct: f64 = p.x.brownian[..=cell].iter().sum();
                assert!((v - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sigma_zero_continuous_integral_vanishes() {
        let s = pure_jump(10, 0.25, 4);
        let bundle = simulate(&s).unwrap();
        let (grid, _, _) = compile(&s).unwrap();
        for p in &bundle.paths {
            let int = mc_continuous_integral(grid, &p.x, &ContinuousIntegrand::LeftValue);
            assert!(int.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pure_jump_product_identity_is_exact() {
        for dt in [0.25, 0.125, 0.0625] {
            let s = pure_jump(200, dt, 21);
            let report = mc_verify_product(&s, &identity_integrands()).unwrap();
            assert!(
                report.residual <= 1e-10,
                "dt={dt}: residual {}",
                report.residual
            );
        }
    }

    #[test]
    fn shared_deterministic_jump_time_is_exact() {
        // Both factors step at t = 0.5: simultaneous predictable jumps.
        let s = McScenario {
            x: FactorSpec {
                sigma: 0.0,
                jump_rate: 0.0,
                jump_law: vec![],
                steps: vec![StepAtom {
                    time: 0.5,
                    law: vec![(1.0, 0.6), (-1.0, 0.4)],
                }],
            },
            y: FactorSpec {
                sigma: 0.0,
                jump_rate: 0.0,
                jump_law: vec![],
                steps: vec![StepAtom {
                    time: 0.5,
                    law: vec![(2.0, 0.5), (0.0, 0.5)],
                }],
            },
            dt: 0.25,
            horizon: 1.0,
            n_paths: 500,
            seed: 31,
        };
        let report = mc_verify_product(&s, &identity_integrands()).unwrap();
        assert!(report.residual <= 1e-12, "residual {}", report.residual);
    }

    #[test]
    fn mixed_scenario_residual_decays() {
        let s = pure_brownian(2_000, 0.0, 55);
        let table = convergence_study(
            &s,
            &[1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            &identity_integrands(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows[1..] {
            let ratio = row.ratio.unwrap();
            assert!(ratio < 1.0, "expected decay, got ratio {ratio}");
        }
    }

    #[test]
    fn single_grid_size_gives_one_row_without_ratio() {
        let s = pure_brownian(50, 0.25, 12);
        let table = convergence_study(&s, &[0.25], &identity_integrands()).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].ratio.is_none());
        assert!(!table.rows[0].monotonicity_flag);
    }

    #[test]
    fn isometry_check_passes() {
        let s = McScenario {
            x: FactorSpec {
                sigma: 1.0,
                ..Default::default()
            },
            y: FactorSpec::default(),
            dt: 1e-2,
            horizon: 1.0,
            n_paths: 4_000,
            seed: 77,
        };
        let report = ito_isometry_check(&s, &ContinuousIntegrand::LeftValue).unwrap();
        assert!(report.ok, "{report:?}");
        // E[int_0^1 X_s^2 ds] = 1/2 for a standard Brownian path.
        assert!((report.rhs_mean - 0.5).abs() < 0.1);
    }
}
