//! Browser bindings for the representation laboratory: three interactive
//! operations behind a single static page. Every function returns a JSON
//! string; invalid parameters come back as `{"error": "..."}` so the page
//! can render them inline.

use serde_json::json;
use wasm_bindgen::prelude::*;

use wrp_lab::enlargement::product_model;
use wrp_lab::jacod::{build_tau_model, density_process, measure_q, verify_wrp_theorem, TauValue};
use wrp_lab::mc::{
    convergence_study, ContinuousIntegrand, FactorSpec, MarkIntegrand, McIntegrands, McScenario,
};
use wrp_lab::model::{AdaptedProcess, FiniteModel};
use wrp_lab::wrp::{has_wrp, WrpReport};

fn wrp_json(report: &WrpReport) -> serde_json::Value {
    json!({
        "holds": report.holds,
        "mart_dim": report.mart_dim,
        "repr_dim": report.repr_dim,
    })
}

fn err_json(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn one_jump_factor(p_up: f64, mark_up: f64, mark_down: f64) -> Result<(FiniteModel, AdaptedProcess), String> {
    if !(0.001..=0.999).contains(&p_up) {
        return Err("probabilities must lie strictly between 0 and 1".into());
    }
    let model = FiniteModel::new(
        vec!["u".into(), "d".into()],
        vec![p_up, 1.0 - p_up],
        vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
    )
    .map_err(|e| e.to_string())?;
    let x = AdaptedProcess::scalar_from_fn(&model, |omega, t| {
        if t == 0 {
            0.0
        } else if omega == 0 {
            mark_up
        } else {
            mark_down
        }
    })
    .map_err(|e| e.to_string())?;
    Ok((model, x))
}

/// Two independent one-jump factors with adjustable marks and up
/// probabilities: reports the representation ranks of each factor, of the
/// sum X + Y and of the pair (X, Y) on the product model. Colliding sum
/// marks make the sum's rank drop while the pair keeps full rank.
#[wasm_bindgen]
pub fn sum_vs_pair(
    p_x: f64,
    x_up: f64,
    x_down: f64,
    p_y: f64,
    y_up: f64,
    y_down: f64,
) -> String {
    let build = || -> Result<String, String> {
        let (model_f, x) = one_jump_factor(p_x, x_up, x_down)?;
        let (model_h, y) = one_jump_factor(p_y, y_up, y_down)?;
        let p = product_model(&model_f, &model_h).map_err(|e| e.to_string())?;
        let sum = {
            let xl = p.lift_f(&x);
            let yl = p.lift_h(&y);
            AdaptedProcess::scalar_from_fn(p.model(), |omega, t| {
                xl.scalar(omega, t) + yl.scalar(omega, t)
            })
            .map_err(|e| e.to_string())?
        };
        let report = json!({
            "factor_f": wrp_json(&has_wrp(&model_f, &x)),
            "factor_h": wrp_json(&has_wrp(&model_h, &y)),
            "sum": wrp_json(&has_wrp(p.model(), &sum)),
            "pair": wrp_json(&has_wrp(p.model(), &p.pair(&x, &y))),
            "sum_marks": [x_up + y_up, x_up + y_down, x_down + y_up, x_down + y_down],
        });
        Ok(report.to_string())
    };
    build().unwrap_or_else(err_json)
}

/// Coin with a correlated default time tau in {1, 2}: adjustable conditional
/// probabilities P[tau=1 | up] and P[tau=1 | down]. Reports the density
/// table p_1(u), the decoupling measure Q with its factorization residual,
/// and the representation check through both routes.
#[wasm_bindgen]
pub fn default_time_report(p_tau1_up: f64, p_tau1_down: f64) -> String {
    let build = || -> Result<String, String> {
        if !(0.001..=0.999).contains(&p_tau1_up) || !(0.001..=0.999).contains(&p_tau1_down) {
            return Err("conditional probabilities must lie strictly between 0 and 1".into());
        }
        let base = FiniteModel::new(
            vec!["u".into(), "d".into()],
            vec![0.5, 0.5],
            vec![
                vec![vec![0, 1]],
                vec![vec![0], vec![1]],
                vec![vec![0], vec![1]],
            ],
        )
        .map_err(|e| e.to_string())?;
        let x = AdaptedProcess::scalar_from_fn(&base, |omega, t| {
            if t == 0 {
                0.0
            } else if omega == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .map_err(|e| e.to_string())?;
        let joint = vec![
            vec![0.5 * p_tau1_up, 0.5 * (1.0 - p_tau1_up)],
            vec![0.5 * p_tau1_down, 0.5 * (1.0 - p_tau1_down)],
        ];
        let tm = build_tau_model(&base, vec![TauValue::At(1), TauValue::At(2)], joint)
            .map_err(|e| e.to_string())?;
        let density = density_process(&tm);
        let q = measure_q(&tm, 2);
        let theorem = verify_wrp_theorem(&tm, &x).map_err(|e| e.to_string())?;
        let report = json!({
            "density_p1": {
                "tau1_up": density.value(0, 0, 1),
                "tau1_down": density.value(0, 1, 1),
                "tau2_up": density.value(1, 0, 1),
                "tau2_down": density.value(1, 1, 1),
            },
            "q_table": q.q,
            "q_factorization_residual": q.p3_factorization_dev,
            "q_marginal_residual": q.p2_marginal_dev,
            "wrp_direct": wrp_json(&theorem.direct),
            "wrp_transfer": wrp_json(&theorem.constructive),
            "routes_agree": theorem.agree,
        });
        Ok(report.to_string())
    };
    build().unwrap_or_else(err_json)
}

/// Residual ladder of the product identity for two Brownian-plus-jump
/// factors over halving grids. Returns (dt, residual, ratio) rows for
/// plotting; pure-jump settings land at rounding level.
#[wasm_bindgen]
pub fn residual_ladder(
    sigma_x: f64,
    sigma_y: f64,
    lambda_x: f64,
    lambda_y: f64,
    n_paths: u32,
    seed: u32,
) -> String {
    let build = || -> Result<String, String> {
        if !(0.0..=5.0).contains(&sigma_x)
            || !(0.0..=5.0).contains(&sigma_y)
            || !(0.0..=5.0).contains(&lambda_x)
            || !(0.0..=5.0).contains(&lambda_y)
        {
            return Err("volatilities and jump rates must lie in [0, 5]".into());
        }
        let n_paths = n_paths.clamp(100, 20_000) as usize;
        let factor = |sigma: f64, rate: f64| FactorSpec {
            sigma,
            jump_rate: rate,
            jump_law: if rate > 0.0 {
                vec![(1.0, 0.5), (-1.0, 0.5)]
            } else {
                vec![]
            },
            steps: vec![],
        };
        let scenario = McScenario {
            x: factor(sigma_x, lambda_x),
            y: factor(sigma_y, lambda_y),
            dt: 1.0 / 64.0,
            horizon: 1.0,
            n_paths,
            seed: seed as u64,
        };
        let dts: Vec<f64> = (6..=10).map(|k| 1.0 / f64::from(1u32 << k)).collect();
        let integrands = McIntegrands {
            w: MarkIntegrand::Identity,
            v: MarkIntegrand::Identity,
            k: ContinuousIntegrand::Const { value: 1.0 },
            j: ContinuousIntegrand::Const { value: 1.0 },
        };
        let table = convergence_study(&scenario, &dts, &integrands).map_err(|e| e.to_string())?;
        let rows: Vec<serde_json::Value> = table
            .rows
            .iter()
            .map(|row| {
                json!({
                    "dt": row.dt,
                    "residual": row.residual,
                    "ratio": row.ratio,
                })
            })
            .collect();
        Ok(json!({ "rows": rows }).to_string())
    };
    build().unwrap_or_else(err_json)
}
