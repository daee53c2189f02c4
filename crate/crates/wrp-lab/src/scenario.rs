//! Scenario configurations, builtin catalog, check runner and reports.
//!
//! A scenario file is a JSON document with a `kind` tag selecting one of the
//! engines (`finite-wrp`, `product`, `iterated`, `mc`, `jacod`), the inputs
//! (inline or by path) and the list of named checks to run. Reports are
//! plain text, machine-readable line per check first and a summary last, and
//! contain no timestamps: re-running the same scenario with the same seed
//! reproduces the report byte for byte.

use serde::{Deserialize, Serialize};

use crate::enlargement::{
    characteristics_invariance_check, iterated_product, product_model, verify_product_representation,
    Factor, FactorData,
};
use crate::error::{Error, Result};
use crate::io::{IntegrandFile, ModelFile};
use crate::jacod::{build_tau_model, density_process, l_process, verify_wrp_theorem, TauValue};
use crate::jump::{compensator_nu, PredictableFunction};
use crate::mc::{
    convergence_study, ito_isometry_check, ContinuousIntegrand, MarkIntegrand, McIntegrands,
    McScenario,
};
use crate::model::{AdaptedProcess, FiniteModel, EXACT_TOL, MASS_TOL};
use crate::wrp::{has_prp, has_wrp, solve_representation};

pub const DEFAULT_SEED: u64 = 42;

/// A model argument: a file path or an inline document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path { path: String },
    Inline { inline: ModelFile },
}

impl ModelSource {
    fn load(&self) -> Result<ModelFile> {
        match self {
            ModelSource::Path { path } => ModelFile::load(std::path::Path::new(path)),
            ModelSource::Inline { inline } => Ok(inline.clone()),
        }
    }
}

/// An integrand argument: a quadruple-table file or inline table; when
/// absent, W(x) = first mark coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntegrandSource {
    Path { path: String },
    Inline { inline: IntegrandFile },
}

impl IntegrandSource {
    fn load(&self) -> Result<IntegrandFile> {
        match self {
            IntegrandSource::Path { path } => IntegrandFile::load(std::path::Path::new(path)),
            IntegrandSource::Inline { inline } => Ok(inline.clone()),
        }
    }
}

/// One factor of a product scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorSection {
    pub model: ModelSource,
    pub process: String,
    #[serde(default)]
    pub integrand: Option<IntegrandSource>,
    #[serde(default)]
    pub initial: f64,
}

/// One factor of an iterated scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorRef {
    pub model: ModelSource,
    pub process: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteWrpConfig {
    pub model: ModelSource,
    pub process: String,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductConfig {
    pub factor_f: FactorSection,
    pub factor_h: FactorSection,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IteratedConfig {
    pub factors: Vec<FactorRef>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub scenario: McScenario,
    #[serde(default)]
    pub integrands: Option<McIntegrands>,
    /// Grid ladder; defaults to the single scenario grid.
    #[serde(default)]
    pub dts: Option<Vec<f64>>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacodConfig {
    pub base: ModelSource,
    pub process: String,
    pub tau_values: Vec<TauValue>,
    pub joint: Vec<Vec<f64>>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

/// A scenario configuration, tagged by engine kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    FiniteWrp(FiniteWrpConfig),
    Product(ProductConfig),
    Iterated(IteratedConfig),
    Mc(McConfig),
    Jacod(JacodConfig),
}

impl ScenarioConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioConfig::FiniteWrp(_) => "finite-wrp",
            ScenarioConfig::Product(_) => "product",
            ScenarioConfig::Iterated(_) => "iterated",
            ScenarioConfig::Mc(_) => "mc",
            ScenarioConfig::Jacod(_) => "jacod",
        }
    }

    pub fn output(&self) -> Option<&str> {
        match self {
            ScenarioConfig::FiniteWrp(c) => c.output.as_deref(),
            ScenarioConfig::Product(c) => c.output.as_deref(),
            ScenarioConfig::Iterated(c) => c.output.as_deref(),
            ScenarioConfig::Mc(c) => c.output.as_deref(),
            ScenarioConfig::Jacod(c) => c.output.as_deref(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
}

/// One executed check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// Result of a scenario run: exit code, report text, optional CSV side file.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: String,
    pub csv: Option<String>,
}

fn fe(x: f64) -> String {
    format!("{x:e}")
}

fn known_checks(kind: &str) -> &'static [&'static str] {
    match kind {
        "finite-wrp" => &["wrp", "prp", "prp-gap", "solve"],
        "product" => &[
            "par-int",
            "rep-sq-br",
            "embed",
            "terminal",
            "util",
            "proj",
            "invariance",
            "pair-wrp",
            "sum-vs-pair",
        ],
        "iterated" => &["wrp", "invariance"],
        "mc" => &["pure-jump-exact", "band", "monotone", "drift", "isometry"],
        "jacod" => &[
            "equivalence",
            "density-martingale",
            "l-martingale",
            "q-measure",
            "wrp-direct",
            "wrp-transfer",
            "agree",
        ],
        _ => &[],
    }
}

fn default_checks(kind: &str) -> Vec<String> {
    let all: &[&str] = match kind {
        "finite-wrp" => &["wrp"],
        "product" => &[
            "par-int", "rep-sq-br", "embed", "terminal", "util", "proj", "invariance", "pair-wrp",
        ],
        "iterated" => &["wrp", "invariance"],
        "mc" => &["drift"],
        "jacod" => &[
            "equivalence",
            "density-martingale",
            "l-martingale",
            "q-measure",
            "wrp-direct",
            "wrp-transfer",
            "agree",
        ],
        _ => &[],
    };
    all.iter().map(|s| s.to_string()).collect()
}

fn validate_checks(kind: &str, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(default_checks(kind));
    }
    let known = known_checks(kind);
    for name in requested {
        if !known.contains(&name.as_str()) {
            return Err(Error::Config(format!(
                "unknown check '{name}' for kind '{kind}' (known: {})",
                known.join(", ")
            )));
        }
    }
    Ok(requested.to_vec())
}

fn identity_integrand(model: &FiniteModel, x: &AdaptedProcess) -> PredictableFunction {
    let nu = compensator_nu(model, x);
    PredictableFunction::from_fn(&nu, |_, _, mark| mark.components()[0])
}

fn load_factor(
    section: &FactorSection,
) -> Result<(FiniteModel, AdaptedProcess, PredictableFunction)> {
    let file = section.model.load()?;
    let model = file.to_model()?;
    let process = file.process(&model, &section.process)?;
    let integrand = match &section.integrand {
        Some(source) => source.load()?.to_function(),
        None => identity_integrand(&model, &process),
    };
    Ok((model, process, integrand))
}

fn run_finite_wrp(cfg: &FiniteWrpConfig, _tol: f64) -> Result<Vec<CheckResult>> {
    let checks = validate_checks("finite-wrp", &cfg.checks)?;
    let file = cfg.model.load()?;
    let model = file.to_model()?;
    let x = file.process(&model, &cfg.process)?;

    let wrp = has_wrp(&model, &x);
    let mut results = Vec::new();
    for name in &checks {
        let result = match name.as_str() {
            "wrp" => CheckResult::new(
                name,
                wrp.holds,
                format!("mart_dim={} repr_dim={}", wrp.mart_dim, wrp.repr_dim),
            ),
            "prp" => match has_prp(&model, &x) {
                Ok(r) => CheckResult::new(
                    name,
                    r.holds,
                    format!("mart_dim={} repr_dim={}", r.mart_dim, r.repr_dim),
                ),
                Err(e) => CheckResult::new(name, false, format!("error={e}")),
            },
            "prp-gap" => match has_prp(&model, &x) {
                Ok(r) => CheckResult::new(
                    name,
                    !r.holds && wrp.holds,
                    format!(
                        "prp_repr_dim={} wrp_repr_dim={} mart_dim={}",
                        r.repr_dim, wrp.repr_dim, wrp.mart_dim
                    ),
                ),
                Err(e) => CheckResult::new(name, false, format!("error={e}")),
            },
            "solve" => {
                // Represent the closing martingale of each outcome indicator.
                let mut max_residual: f64 = 0.0;
                let mut max_reconstruction: f64 = 0.0;
                for i in 0..model.n_outcomes() {
                    let mut xi = vec![0.0; model.n_outcomes()];
                    xi[i] = 1.0;
                    let n = AdaptedProcess::martingale_from_terminal(&model, &xi);
                    let rep = solve_representation(&model, &n, &x)?;
                    max_residual = max_residual.max(rep.residual);
                    max_reconstruction = max_reconstruction.max(rep.reconstruction_error);
                }
                let solve_tol = 1e-9;
                CheckResult::new(
                    name,
                    wrp.holds && max_residual <= solve_tol && max_reconstruction <= solve_tol,
                    format!(
                        "max_residual={} max_reconstruction={}",
                        fe(max_residual),
                        fe(max_reconstruction)
                    ),
                )
            }
            _ => unreachable!("validated"),
        };
        results.push(result);
    }
    Ok(results)
}

fn run_product(cfg: &ProductConfig, seed: u64, tol: f64) -> Result<Vec<CheckResult>> {
    let checks = validate_checks("product", &cfg.checks)?;
    let (model_f, x, w) = load_factor(&cfg.factor_f)?;
    let (model_h, y, v) = load_factor(&cfg.factor_h)?;
    let p = product_model(&model_f, &model_h)?;
    let fx = FactorData {
        process: &x,
        integrand: &w,
        initial: cfg.factor_f.initial,
    };
    let fy = FactorData {
        process: &y,
        integrand: &v,
        initial: cfg.factor_h.initial,
    };

    let identity_names = ["par-int", "rep-sq-br", "embed", "terminal", "util", "proj"];
    let needs_identities = checks.iter().any(|c| identity_names.contains(&c.as_str()));
    let identity_report = if needs_identities {
        Some(verify_product_representation(&p, &fx, &fy, tol)?)
    } else {
        None
    };

    let mut results = Vec::new();
    for name in &checks {
        let result = if identity_names.contains(&name.as_str()) {
            let report = identity_report.as_ref().expect("computed above");
            let check = report.check(name).expect("check names align");
            let mut detail = format!("max_violation={}", fe(check.max_violation));
            if let Some((omega, t)) = check.first_failure {
                detail.push_str(&format!(" first_failure=({omega},{t})"));
            }
            CheckResult::new(name, check.max_violation <= tol, detail)
        } else {
            match name.as_str() {
                "invariance" => {
                    let rf = characteristics_invariance_check(&p, &x, Factor::F, 20, seed, tol);
                    let rh =
                        characteristics_invariance_check(&p, &y, Factor::H, 20, seed ^ 1, tol);
                    let max_dev = rf
                        .nu_max_dev
                        .max(rf.what_max_dev)
                        .max(rf.wtilde_max_dev)
                        .max(rh.nu_max_dev)
                        .max(rh.what_max_dev)
                        .max(rh.wtilde_max_dev);
                    CheckResult::new(
                        name,
                        rf.ok && rh.ok,
                        format!("max_deviation={}", fe(max_dev)),
                    )
                }
                "pair-wrp" => {
                    let rf = has_wrp(&model_f, &x);
                    let rh = has_wrp(&model_h, &y);
                    let pair = has_wrp(p.model(), &p.pair(&x, &y));
                    CheckResult::new(
                        name,
                        rf.holds && rh.holds && pair.holds,
                        format!(
                            "factor_f={}/{} factor_h={}/{} pair={}/{}",
                            rf.repr_dim,
                            rf.mart_dim,
                            rh.repr_dim,
                            rh.mart_dim,
                            pair.repr_dim,
                            pair.mart_dim
                        ),
                    )
                }
                "sum-vs-pair" => {
                    if x.dim() != 1 || y.dim() != 1 {
                        return Err(Error::Config(
                            "sum-vs-pair needs scalar factor processes".into(),
                        ));
                    }
                    let xl = p.lift_f(&x);
                    let yl = p.lift_h(&y);
                    let sum = AdaptedProcess::scalar_from_fn(p.model(), |omega, t| {
                        xl.scalar(omega, t) + yl.scalar(omega, t)
                    })
                    .expect("sum of adapted is adapted");
                    let sum_report = has_wrp(p.model(), &sum);
                    let pair_report = has_wrp(p.model(), &p.pair(&x, &y));
                    CheckResult::new(
                        name,
                        !sum_report.holds && pair_report.holds,
                        format!(
                            "sum={}/{} pair={}/{}",
                            sum_report.repr_dim,
                            sum_report.mart_dim,
                            pair_report.repr_dim,
                            pair_report.mart_dim
                        ),
                    )
                }
                _ => unreachable!("validated"),
            }
        };
        results.push(result);
    }
    Ok(results)
}

fn run_iterated(cfg: &IteratedConfig, tol: f64) -> Result<Vec<CheckResult>> {
    let checks = validate_checks("iterated", &cfg.checks)?;
    let mut factors = Vec::new();
    for f in &cfg.factors {
        let file = f.model.load()?;
        let model = file.to_model()?;
        let process = file.process(&model, &f.process)?;
        factors.push((model, process));
    }
    let outcome = iterated_product(&factors);
    let mut results = Vec::new();
    for name in &checks {
        let result = match (&outcome, name.as_str()) {
            (Ok(report), "wrp") => CheckResult::new(
                name,
                report.joint.holds,
                format!(
                    "factors={} joint={}/{}",
                    report.factor_reports.len(),
                    report.joint.repr_dim,
                    report.joint.mart_dim
                ),
            ),
            (Ok(report), "invariance") => CheckResult::new(
                name,
                report.invariance_max_dev <= tol,
                format!("max_deviation={}", fe(report.invariance_max_dev)),
            ),
            (Err(e), _) => CheckResult::new(name, false, format!("error={e}")),
            _ => unreachable!("validated"),
        };
        results.push(result);
    }
    Ok(results)
}

fn run_mc(cfg: &McConfig, overrides: &Overrides, tol: f64) -> Result<(Vec<CheckResult>, Vec<String>, String)> {
    let checks = validate_checks("mc", &cfg.checks)?;
    let mut scenario = cfg.scenario.clone();
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    let integrands = cfg.integrands.clone().unwrap_or(McIntegrands {
        w: MarkIntegrand::Identity,
        v: MarkIntegrand::Identity,
        k: ContinuousIntegrand::Const { value: 1.0 },
        j: ContinuousIntegrand::Const { value: 1.0 },
    });
    let dts = cfg.dts.clone().unwrap_or_else(|| vec![scenario.dt]);
    let table = convergence_study(&scenario, &dts, &integrands)?;

    let mut ladder_lines = Vec::new();
    let mut csv = String::from("dt,residual,ratio\n");
    for row in &table.rows {
        let ratio = row
            .ratio
            .map(fe)
            .unwrap_or_else(|| "-".to_string());
        ladder_lines.push(format!(
            "dt={} residual={} ratio={} drift_flags={}",
            fe(row.dt),
            fe(row.residual),
            ratio,
            row.drift_flags
        ));
        csv.push_str(&format!(
            "{},{},{}\n",
            fe(row.dt),
            fe(row.residual),
            row.ratio.map(fe).unwrap_or_default()
        ));
    }

    let mut results = Vec::new();
    for name in &checks {
        let result = match name.as_str() {
            "pure-jump-exact" => {
                let pure = scenario.x.sigma == 0.0 && scenario.y.sigma == 0.0;
                let worst = table.rows.iter().map(|r| r.residual).fold(0.0, f64::max);
                CheckResult::new(
                    name,
                    pure && worst <= tol,
                    format!("pure_jump={pure} max_residual={}", fe(worst)),
                )
            }
            "band" => {
                let ratios: Vec<f64> = table.rows.iter().filter_map(|r| r.ratio).collect();
                let ok = !ratios.is_empty() && ratios.iter().all(|&r| (0.5..=0.95).contains(&r));
                let detail = ratios
                    .iter()
                    .map(|&r| fe(r))
                    .collect::<Vec<_>>()
                    .join(",");
                CheckResult::new(name, ok, format!("ratios=[{detail}] band=[5e-1,9.5e-1]"))
            }
            "monotone" => {
                let violations = table.rows.iter().filter(|r| r.monotonicity_flag).count();
                CheckResult::new(name, violations == 0, format!("violations={violations}"))
            }
            "drift" => {
                let flags: usize = table.rows.iter().map(|r| r.drift_flags).sum();
                CheckResult::new(name, flags == 0, format!("flags={flags}"))
            }
            "isometry" => {
                let report = ito_isometry_check(&scenario, &integrands.k)?;
                CheckResult::new(
                    name,
                    report.ok,
                    format!(
                        "lhs={} rhs={} gap_std_errors={}",
                        fe(report.lhs_mean),
                        fe(report.rhs_mean),
                        fe(report.gap_std_errors)
                    ),
                )
            }
            _ => unreachable!("validated"),
        };
        results.push(result);
    }
    Ok((results, ladder_lines, csv))
}

fn run_jacod(cfg: &JacodConfig, tol: f64) -> Result<Vec<CheckResult>> {
    let checks = validate_checks("jacod", &cfg.checks)?;
    let file = cfg.base.load()?;
    let base = file.to_model()?;
    let x = file.process(&base, &cfg.process)?;

    let built = build_tau_model(&base, cfg.tau_values.clone(), cfg.joint.clone());
    let mut results = Vec::new();
    match built {
        Err(e) => {
            for name in &checks {
                results.push(CheckResult::new(name, false, format!("error={e}")));
            }
        }
        Ok(tm) => {
            let theorem = verify_wrp_theorem(&tm, &x);
            for name in &checks {
                let result = match name.as_str() {
                    "equivalence" => match &theorem {
                        Ok(r) => CheckResult::new(
                            name,
                            r.q.p1_equivalent,
                            format!("q_positive={}", r.q.p1_equivalent),
                        ),
                        Err(e) => CheckResult::new(name, false, format!("error={e}")),
                    },
                    "density-martingale" => {
                        let density = density_process(&tm);
                        let mut worst: f64 = 0.0;
                        for j in 0..tm.tau_values.len() {
                            let report = tm.base.is_martingale_with_tol(density.process(j), tol);
                            worst = worst.max(report.max_violation);
                        }
                        CheckResult::new(name, worst <= tol, format!("max_violation={}", fe(worst)))
                    }
                    "l-martingale" => {
                        let l = l_process(&tm);
                        let report = tm.initial.is_martingale_with_tol(&l, tol);
                        let start_dev = (0..tm.initial.n_outcomes())
                            .map(|omega| (l.scalar(omega, 0) - 1.0).abs())
                            .fold(0.0, f64::max);
                        CheckResult::new(
                            name,
                            report.ok && start_dev <= tol,
                            format!(
                                "max_violation={} start_deviation={}",
                                fe(report.max_violation),
                                fe(start_dev)
                            ),
                        )
                    }
                    "q-measure" => match &theorem {
                        Ok(r) => CheckResult::new(
                            name,
                            r.q.p2_marginal_dev <= MASS_TOL && r.q.p3_factorization_dev <= MASS_TOL,
                            format!(
                                "marginal_dev={} factorization_dev={}",
                                fe(r.q.p2_marginal_dev),
                                fe(r.q.p3_factorization_dev)
                            ),
                        ),
                        Err(e) => CheckResult::new(name, false, format!("error={e}")),
                    },
                    "wrp-direct" => match &theorem {
                        Ok(r) => CheckResult::new(
                            name,
                            r.direct.holds,
                            format!("dims={}/{}", r.direct.repr_dim, r.direct.mart_dim),
                        ),
                        Err(e) => CheckResult::new(name, false, format!("error={e}")),
                    },
                    "wrp-transfer" => match &theorem {
                        Ok(r) => CheckResult::new(
                            name,
                            r.constructive.holds && r.product_structure_ok,
                            format!(
                                "dims={}/{} product_structure={}",
                                r.constructive.repr_dim,
                                r.constructive.mart_dim,
                                r.product_structure_ok
                            ),
                        ),
                        Err(e) => CheckResult::new(name, false, format!("error={e}")),
                    },
                    "agree" => match &theorem {
                        Ok(r) => CheckResult::new(
                            name,
                            r.agree,
                            format!(
                                "direct={} constructive={}",
                                r.direct.holds, r.constructive.holds
                            ),
                        ),
                        Err(e) => CheckResult::new(name, false, format!("error={e}")),
                    },
                    _ => unreachable!("validated"),
                };
                results.push(result);
            }
        }
    }
    Ok(results)
}

fn render_report(
    label: &str,
    kind: &str,
    seed: u64,
    tol: f64,
    sections: &[(&str, &[String])],
    checks: &[CheckResult],
) -> String {
    let mut out = String::new();
    out.push_str("# wrp-lab report\n");
    out.push_str(&format!("scenario: {label}\n"));
    out.push_str(&format!("kind: {kind}\n"));
    out.push_str(&format!("seed: {seed}\n"));
    out.push_str(&format!("tolerance: {}\n", fe(tol)));
    for (header, lines) in sections {
        out.push_str(&format!("\n[{header}]\n"));
        for line in *lines {
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str("\n[checks]\n");
    for check in checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        out.push_str(&format!("{} {} {}\n", check.name, status, check.detail));
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    out.push_str(&format!("\n[summary]\npassed {passed}/{}\n", checks.len()));
    out
}

/// Runs a scenario and renders its report. The exit code is 0 when every
/// requested check passed and 1 otherwise; configuration problems surface as
/// errors (exit 2 at the command line).
pub fn run(label: &str, config: &ScenarioConfig, overrides: &Overrides) -> Result<RunOutcome> {
    let seed = overrides.seed.unwrap_or(match config {
        ScenarioConfig::FiniteWrp(c) => c.seed.unwrap_or(DEFAULT_SEED),
        ScenarioConfig::Product(c) => c.seed.unwrap_or(DEFAULT_SEED),
        ScenarioConfig::Iterated(c) => c.seed.unwrap_or(DEFAULT_SEED),
        ScenarioConfig::Mc(c) => c.scenario.seed,
        ScenarioConfig::Jacod(c) => c.seed.unwrap_or(DEFAULT_SEED),
    });
    let tol = overrides.tolerance.unwrap_or(match config {
        ScenarioConfig::FiniteWrp(c) => c.tolerance.unwrap_or(EXACT_TOL),
        ScenarioConfig::Product(c) => c.tolerance.unwrap_or(EXACT_TOL),
        ScenarioConfig::Iterated(c) => c.tolerance.unwrap_or(EXACT_TOL),
        ScenarioConfig::Mc(c) => c.tolerance.unwrap_or(EXACT_TOL),
        ScenarioConfig::Jacod(c) => c.tolerance.unwrap_or(EXACT_TOL),
    });

    let (checks, sections, csv): (Vec<CheckResult>, Vec<(&str, Vec<String>)>, Option<String>) =
        match config {
            ScenarioConfig::FiniteWrp(c) => (run_finite_wrp(c, tol)?, vec![], None),
            ScenarioConfig::Product(c) => (run_product(c, seed, tol)?, vec![], None),
            ScenarioConfig::Iterated(c) => (run_iterated(c, tol)?, vec![], None),
            ScenarioConfig::Mc(c) => {
                let (results, ladder, csv) = run_mc(c, overrides, tol)?;
                (results, vec![("ladder", ladder)], Some(csv))
            }
            ScenarioConfig::Jacod(c) => (run_jacod(c, tol)?, vec![], None),
        };

    let section_refs: Vec<(&str, &[String])> = sections
        .iter()
        .map(|(h, lines)| (*h, lines.as_slice()))
        .collect();
    let report = render_report(label, config.kind(), seed, tol, &section_refs, &checks);
    let exit_code = if checks.iter().all(|c| c.pass) { 0 } else { 1 };
    Ok(RunOutcome {
        exit_code,
        report,
        csv,
    })
}

// ---------------------------------------------------------------------------
// Builtin scenario catalog
// ---------------------------------------------------------------------------

/// A named builtin scenario.
pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
}

/// Catalog of builtin scenarios, stable order.
pub fn catalog() -> Vec<Builtin> {
    vec![
        Builtin { name: "coin-wrp", description: "two-point coin model: representation ranks, predictable representation, explicit solve" },
        Builtin { name: "collision-wrp", description: "two outcomes share a jump mark: the representation rank drops and the wrp check reports the gap (exits 1)" },
        Builtin { name: "prp-gap", description: "marks (1,-1,0): predictable representation fails while the weak one holds" },
        Builtin { name: "product-coin-bernoulli", description: "coin times Bernoulli-jump factor: full product identity suite with hand-checkable integrands" },
        Builtin { name: "example-1-step-pair", description: "two independent step processes sharing a deterministic jump time: exact product identity at every grid size" },
        Builtin { name: "example-2-brownian-plus-jumps", description: "Brownian-plus-compound-Poisson factors: residual ladder with order-1/2 decay band" },
        Builtin { name: "example-3-levy-times-step", description: "Brownian-plus-jumps factor against a pure step factor: ladder and drift checks" },
        Builtin { name: "example-4-levy-pair", description: "two pure-jump compound-Poisson factors: identity exact at every grid size" },
        Builtin { name: "example-5-disjoint-sum", description: "sum of two jump sources with disjoint predictable jump times keeps the weak representation property" },
        Builtin { name: "example-6-sum-vs-pair", description: "two independent coins: the sum X+Y loses the weak representation property, the pair (X,Y) keeps it" },
        Builtin { name: "iterated-three-coins", description: "threefold independent product of coins: joint representation and per-factor compensator invariance" },
        Builtin { name: "iterated-four-mixed", description: "fourfold independent product of varied factors" },
        Builtin { name: "jacod-coin-tau", description: "coin with a correlated default time that can hit the jump time: density, decoupling measure, both representation routes" },
        Builtin { name: "jacod-independent-tau", description: "independent default time: densities collapse to one and Q equals P" },
        Builtin { name: "jacod-beyond-horizon", description: "default time with positive mass beyond the horizon sentinel" },
        Builtin { name: "mc-mixed-ladder", description: "Brownian times Brownian with unit integrands: canonical order-1/2 residual ladder" },
        Builtin { name: "mc-isometry", description: "left-point integral of X against its own Brownian driver: isometry spot check" },
    ]
}

/// Renders the catalog for `list`.
pub fn catalog_text() -> String {
    let mut out = String::new();
    for b in catalog() {
        out.push_str(&format!("{:<32} {}\n", b.name, b.description));
    }
    out
}

fn coin_model_file() -> ModelFile {
    let model = FiniteModel::coin();
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t == 0 {
            0.0
        } else if omega == 0 {
            1.0
        } else {
            -1.0
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("X", &x)
}

fn bernoulli_model_file() -> ModelFile {
    let model = FiniteModel::new(
        vec!["j".into(), "n".into()],
        vec![0.5, 0.5],
        vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
    )
    .unwrap();
    let y = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t >= 1 && omega == 0 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("Y", &y)
}

fn collision_model_file() -> ModelFile {
    let model = FiniteModel::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0.25, 0.25, 0.5],
        vec![vec![vec![0, 1, 2]], vec![vec![0], vec![1], vec![2]]],
    )
    .unwrap();
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t == 0 {
            0.0
        } else if omega < 2 {
            1.0
        } else {
            -1.0
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("X", &x)
}

fn prp_gap_model_file() -> ModelFile {
    let model = FiniteModel::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0.25, 0.25, 0.5],
        vec![vec![vec![0, 1, 2]], vec![vec![0], vec![1], vec![2]]],
    )
    .unwrap();
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t == 0 {
            0.0
        } else {
            [1.0, -1.0, 0.0][omega]
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("X", &x)
}

/// Four outcomes over two periods: jumps at t=1 with marks +-1 and at t=2
/// with marks +-2, a sum of two sources with disjoint (predictable) jump
/// supports.
fn disjoint_sum_model_file() -> ModelFile {
    let model = FiniteModel::new(
        vec!["uu".into(), "ud".into(), "du".into(), "dd".into()],
        vec![0.25, 0.25, 0.25, 0.25],
        vec![
            vec![vec![0, 1, 2, 3]],
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![0], vec![1], vec![2], vec![3]],
        ],
    )
    .unwrap();
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        let first = if omega < 2 { 1.0 } else { -1.0 };
        let second = if omega % 2 == 0 { 2.0 } else { -2.0 };
        match t {
            0 => 0.0,
            1 => first,
            _ => first + second,
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("X", &x)
}

fn inline(model: ModelFile) -> ModelSource {
    ModelSource::Inline { inline: model }
}

/// Resolves a builtin scenario by name.
pub fn builtin_config(name: &str) -> Option<ScenarioConfig> {
    use crate::mc::{FactorSpec, StepAtom};
    let config = match name {
        "coin-wrp" => ScenarioConfig::FiniteWrp(FiniteWrpConfig {
            model: inline(coin_model_file()),
            process: "X".into(),
            checks: vec!["wrp".into(), "prp".into(), "solve".into()],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "collision-wrp" => ScenarioConfig::FiniteWrp(FiniteWrpConfig {
            model: inline(collision_model_file()),
            process: "X".into(),
            checks: vec!["wrp".into()],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "prp-gap" => ScenarioConfig::FiniteWrp(FiniteWrpConfig {
            model: inline(prp_gap_model_file()),
            process: "X".into(),
            checks: vec!["wrp".into(), "prp-gap".into()],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "product-coin-bernoulli" => ScenarioConfig::Product(ProductConfig {
            factor_f: FactorSection {
                model: inline(coin_model_file()),
                process: "X".into(),
                integrand: None,
                initial: 0.0,
            },
            factor_h: FactorSection {
                model: inline(bernoulli_model_file()),
                process: "Y".into(),
                integrand: None,
                initial: 0.0,
            },
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "example-5-disjoint-sum" => ScenarioConfig::FiniteWrp(FiniteWrpConfig {
            model: inline(disjoint_sum_model_file()),
            process: "X".into(),
            checks: vec!["wrp".into(), "solve".into()],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "example-6-sum-vs-pair" => ScenarioConfig::Product(ProductConfig {
            factor_f: FactorSection {
                model: inline(coin_model_file()),
                process: "X".into(),
                integrand: None,
                initial: 0.0,
            },
            factor_h: FactorSection {
                model: inline(coin_model_file()),
                process: "X".into(),
                integrand: None,
                initial: 0.0,
            },
            checks: vec!["sum-vs-pair".into(), "pair-wrp".into()],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "iterated-three-coins" => ScenarioConfig::Iterated(IteratedConfig {
            factors: vec![
                FactorRef {
                    model: inline(coin_model_file()),
                    process: "X".into(),
                },
                FactorRef {
                    model: inline(coin_model_file()),
                    process: "X".into(),
                },
                FactorRef {
                    model: inline(coin_model_file()),
                    process: "X".into(),
                },
            ],
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "iterated-four-mixed" => ScenarioConfig::Iterated(IteratedConfig {
            factors: vec![
                FactorRef {
                    model: inline(coin_model_file()),
                    process: "X".into(),
                },
                FactorRef {
                    model: inline(bernoulli_model_file()),
                    process: "Y".into(),
                },
                FactorRef {
                    model: inline(prp_gap_model_file()),
                    process: "X".into(),
                },
                FactorRef {
                    model: inline(coin_model_file()),
                    process: "X".into(),
                },
            ],
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "jacod-coin-tau" => ScenarioConfig::Jacod(JacodConfig {
            base: inline(coin_tau_base_file()),
            process: "X".into(),
            tau_values: vec![TauValue::At(1), TauValue::At(2)],
            joint: vec![vec![0.3, 0.2], vec![0.2, 0.3]],
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "jacod-independent-tau" => ScenarioConfig::Jacod(JacodConfig {
            base: inline(coin_tau_base_file()),
            process: "X".into(),
            tau_values: vec![TauValue::At(1), TauValue::At(2)],
            joint: vec![vec![0.25, 0.25], vec![0.25, 0.25]],
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "jacod-beyond-horizon" => ScenarioConfig::Jacod(JacodConfig {
            base: inline(coin_tau_base_file()),
            process: "X".into(),
            tau_values: vec![TauValue::At(1), TauValue::At(2), TauValue::Beyond],
            joint: vec![vec![0.15, 0.2, 0.15], vec![0.2, 0.1, 0.2]],
            checks: vec![],
            seed: None,
            tolerance: None,
            output: None,
        }),
        "example-1-step-pair" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 0.0,
                    jump_rate: 0.0,
                    jump_law: vec![],
                    steps: vec![
                        StepAtom {
                            time: 0.25,
                            law: vec![(1.0, 0.5), (-1.0, 0.5)],
                        },
                        StepAtom {
                            time: 0.5,
                            law: vec![(2.0, 0.4), (0.0, 0.6)],
                        },
                    ],
                },
                y: FactorSpec {
                    sigma: 0.0,
                    jump_rate: 0.0,
                    jump_law: vec![],
                    steps: vec![
                        StepAtom {
                            time: 0.5,
                            law: vec![(1.5, 0.7), (-0.5, 0.3)],
                        },
                        StepAtom {
                            time: 0.75,
                            law: vec![(1.0, 1.0)],
                        },
                    ],
                },
                dt: 0.125,
                horizon: 1.0,
                n_paths: 2_000,
                seed: 1001,
            },
            integrands: None,
            dts: Some(vec![0.125, 0.0625, 0.03125]),
            checks: vec!["pure-jump-exact".into(), "drift".into(), "monotone".into()],
            tolerance: None,
            output: None,
        }),
        "example-2-brownian-plus-jumps" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 1.0,
                    jump_rate: 0.5,
                    jump_law: vec![(1.0, 0.5), (-1.0, 0.5)],
                    steps: vec![],
                },
                y: FactorSpec {
                    sigma: 1.0,
                    jump_rate: 0.5,
                    jump_law: vec![(0.5, 0.5), (-0.5, 0.5)],
                    steps: vec![],
                },
                dt: 1.0 / 64.0,
                horizon: 1.0,
                n_paths: 10_000,
                seed: 3021,
            },
            integrands: None,
            dts: Some(vec![
                1.0 / 64.0,
                1.0 / 128.0,
                1.0 / 256.0,
                1.0 / 512.0,
                1.0 / 1024.0,
            ]),
            checks: vec!["band".into(), "drift".into()],
            tolerance: None,
            output: None,
        }),
        "example-3-levy-times-step" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 1.0,
                    jump_rate: 1.0,
                    jump_law: vec![(1.0, 0.6), (-1.0, 0.4)],
                    steps: vec![],
                },
                y: FactorSpec {
                    sigma: 0.0,
                    jump_rate: 0.0,
                    jump_law: vec![],
                    steps: vec![
                        StepAtom {
                            time: 0.25,
                            law: vec![(1.0, 0.5), (0.0, 0.5)],
                        },
                        StepAtom {
                            time: 0.75,
                            law: vec![(-1.0, 0.8), (1.0, 0.2)],
                        },
                    ],
                },
                dt: 1.0 / 64.0,
                horizon: 1.0,
                n_paths: 10_000,
                seed: 907,
            },
            integrands: None,
            dts: Some(vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]),
            checks: vec!["drift".into(), "monotone".into()],
            tolerance: None,
            output: None,
        }),
        "example-4-levy-pair" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 0.0,
                    jump_rate: 1.0,
                    jump_law: vec![(1.0, 0.4), (-1.0, 0.35), (2.0, 0.25)],
                    steps: vec![],
                },
                y: FactorSpec {
                    sigma: 0.0,
                    jump_rate: 0.7,
                    jump_law: vec![(0.5, 0.6), (-1.5, 0.4)],
                    steps: vec![],
                },
                dt: 1.0 / 64.0,
                horizon: 1.0,
                n_paths: 5_000,
                seed: 404,
            },
            integrands: None,
            dts: Some(vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]),
            checks: vec!["pure-jump-exact".into(), "drift".into()],
            tolerance: None,
            output: None,
        }),
        "mc-mixed-ladder" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 1.0,
                    ..Default::default()
                },
                y: FactorSpec {
                    sigma: 1.0,
                    ..Default::default()
                },
                dt: 1.0 / 64.0,
                horizon: 1.0,
                n_paths: 10_000,
                seed: 2718,
            },
            integrands: None,
            dts: Some(vec![
                1.0 / 64.0,
                1.0 / 128.0,
                1.0 / 256.0,
                1.0 / 512.0,
                1.0 / 1024.0,
            ]),
            checks: vec!["band".into(), "drift".into()],
            tolerance: None,
            output: None,
        }),
        "mc-isometry" => ScenarioConfig::Mc(McConfig {
            scenario: McScenario {
                x: FactorSpec {
                    sigma: 1.0,
                    ..Default::default()
                },
                y: FactorSpec::default(),
                dt: 1e-3,
                horizon: 1.0,
                n_paths: 20_000,
                seed: 1414,
            },
            integrands: Some(McIntegrands {
                w: MarkIntegrand::Identity,
                v: MarkIntegrand::Identity,
                k: ContinuousIntegrand::LeftValue,
                j: ContinuousIntegrand::Const { value: 1.0 },
            }),
            dts: None,
            checks: vec!["isometry".into(), "drift".into()],
            tolerance: None,
            output: None,
        }),
        _ => return None,
    };
    Some(config)
}

/// Base model for the default-time builtins: a coin revealed at t = 1 over a
/// two-step horizon.
fn coin_tau_base_file() -> ModelFile {
    let model = FiniteModel::new(
        vec!["u".into(), "d".into()],
        vec![0.5, 0.5],
        vec![
            vec![vec![0, 1]],
            vec![vec![0], vec![1]],
            vec![vec![0], vec![1]],
        ],
    )
    .unwrap();
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t == 0 {
            0.0
        } else if omega == 0 {
            1.0
        } else {
            -1.0
        }
    })
    .unwrap();
    ModelFile::from_model(&model).with_process("X", &x)
}
