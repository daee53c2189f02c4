//! Independent product of two finite models and the explicit product
//! representation identities.
//!
//! Independence of two filtrations is modeled literally: the product model
//! carries outcome pairs with factorizing weights and atom-pair partitions
//! P^G_t = P^F_t x P^H_t. Lifted factor martingales stay martingales in the
//! product, and a lifted F-martingale times a lifted H-martingale is again a
//! martingale. Factor jump compensators and the What / Wtilde operators are
//! invariant under the lift.
//!
//! For factor martingales M = M_0 + W * (mu^X - nu^X) and
//! N = N_0 + V * (mu^Y - nu^Y), the product MN is represented against the
//! pair Z = (X, Y) by explicit integrands
//!
//! ```text
//! F(t,x,y) = W(t,x) V(t,y) 1_{x!=0, y!=0}
//! U        = F - What V 1_{y!=0} - Vhat W 1_{x!=0}
//! G        = N_- W 1_{x!=0} + M_- V 1_{y!=0} + U
//! ```
//!
//! which satisfy, pathwise and exactly on the model: the integration-by-parts
//! identity, [M, N] = U * (mu^Z - nu^Z), the one-factor embedding
//! W 1_{x!=0} * (mu^Z - nu^Z) = W * (mu^X - nu^X), and
//! MN - M_0 N_0 = G * (mu^Z - nu^Z). Simultaneous jumps of the factors and
//! jumps at deterministic (predictable) times are all allowed; they are the
//! cases the U-term exists for.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jump::{
    compensated_integral, compensated_integral_with, compensator_nu, w_hat, w_tilde_with,
    CompensatorTable, PredictableFunction,
};
use crate::model::{AdaptedProcess, FiniteModel, PathArray, EXACT_TOL};
use crate::wrp::{has_wrp, WrpReport};

/// Product of two finite models with factorizing weights; outcome (i, j) of
/// the factors sits at flat index `i * |Omega_H| + j`.
#[derive(Debug, Clone)]
pub struct ProductModel {
    model: FiniteModel,
    f: FiniteModel,
    h: FiniteModel,
    /// Per time, per product atom: the (F-atom, H-atom) pair it projects to.
    atom_pairs: Vec<Vec<(usize, usize)>>,
}

/// Builds the independent product of two models over the same horizon.
pub fn product_model(f: &FiniteModel, h: &FiniteModel) -> Result<ProductModel> {
    if f.horizon() != h.horizon() {
        return Err(Error::HorizonMismatch(format!(
            "{} vs {}",
            f.horizon(),
            h.horizon()
        )));
    }
    let (nf, nh) = (f.n_outcomes(), h.n_outcomes());
    let mut outcomes = Vec::with_capacity(nf * nh);
    let mut weights = Vec::with_capacity(nf * nh);
    for i in 0..nf {
        for j in 0..nh {
            outcomes.push(format!("{}|{}", f.outcomes()[i], h.outcomes()[j]));
            weights.push(f.weights()[i] * h.weights()[j]);
        }
    }
    // Renormalize away the rounding of the weight products; the adjustment
    // is at most a few ulps.
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let mut partitions = Vec::with_capacity(f.horizon() + 1);
    let mut atom_pairs = Vec::with_capacity(f.horizon() + 1);
    for t in 0..=f.horizon() {
        let mut atoms = Vec::new();
        let mut pairs = Vec::new();
        for (af, atom_f) in f.atoms(t).iter().enumerate() {
            for (ah, atom_h) in h.atoms(t).iter().enumerate() {
                let mut atom = Vec::with_capacity(atom_f.len() * atom_h.len());
                for &i in atom_f {
                    for &j in atom_h {
                        atom.push(i * nh + j);
                    }
                }
                atoms.push(atom);
                pairs.push((af, ah));
            }
        }
        partitions.push(atoms);
        atom_pairs.push(pairs);
    }

    let model = FiniteModel::new(outcomes, weights, partitions)?;
    Ok(ProductModel {
        model,
        f: f.clone(),
        h: h.clone(),
        atom_pairs,
    })
}

impl ProductModel {
    pub fn model(&self) -> &FiniteModel {
        &self.model
    }

    pub fn factor_f(&self) -> &FiniteModel {
        &self.f
    }

    pub fn factor_h(&self) -> &FiniteModel {
        &self.h
    }

    /// F-coordinate of a product outcome.
    pub fn f_outcome(&self, omega: usize) -> usize {
        omega / self.h.n_outcomes()
    }

    /// H-coordinate of a product outcome.
    pub fn h_outcome(&self, omega: usize) -> usize {
        omega % self.h.n_outcomes()
    }

    /// Factor atoms a product atom projects to, at filtration level `t`.
    pub fn atom_pair(&self, t: usize, atom: usize) -> (usize, usize) {
        self.atom_pairs[t][atom]
    }

    /// Lifts an F-process to the product; the lift copies values, so every
    /// factor identity survives bit-for-bit.
    pub fn lift_f(&self, x: &AdaptedProcess) -> AdaptedProcess {
        let data = PathArray::from_fn(
            self.model.n_outcomes(),
            self.model.horizon(),
            x.dim(),
            |omega, t, k| x.value(self.f_outcome(omega), t, k),
        );
        AdaptedProcess::from_raw_unchecked(data)
    }

    /// Lifts an H-process to the product.
    pub fn lift_h(&self, y: &AdaptedProcess) -> AdaptedProcess {
        let data = PathArray::from_fn(
            self.model.n_outcomes(),
            self.model.horizon(),
            y.dim(),
            |omega, t, k| y.value(self.h_outcome(omega), t, k),
        );
        AdaptedProcess::from_raw_unchecked(data)
    }

    /// The pair process Z = (X, Y) lifted to the product.
    pub fn pair(&self, x: &AdaptedProcess, y: &AdaptedProcess) -> AdaptedProcess {
        AdaptedProcess::stack(&self.lift_f(x), &self.lift_h(y))
    }

    /// Lifts a predictable function for mu^X onto the support of the product
    /// compensator of the lifted X: same marks, atoms mapped through the
    /// projection.
    pub fn lift_function_f(
        &self,
        w: &PredictableFunction,
        nu_lifted: &CompensatorTable,
        side: Factor,
    ) -> Result<PredictableFunction> {
        let mut entries = Vec::new();
        for (&(t, pa), measure) in nu_lifted.cells() {
            let (af, ah) = self.atom_pair(t - 1, pa);
            let fa = match side {
                Factor::F => af,
                Factor::H => ah,
            };
            for mark in measure.keys() {
                entries.push((t, pa, mark.clone(), w.eval(t, fa, mark)?));
            }
        }
        Ok(PredictableFunction::from_entries(w.dim_mark, entries))
    }
}

/// Which factor of the product a lift refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    F,
    H,
}

/// Result of the characteristics-invariance check: lifted factor
/// compensators and the What / Wtilde operators agree with the product-level
/// ones computed from scratch.
#[derive(Debug, Clone, Copy)]
pub struct InvarianceReport {
    pub ok: bool,
    pub nu_max_dev: f64,
    pub what_max_dev: f64,
    pub wtilde_max_dev: f64,
}

/// Compares the product-level compensator of the lifted process against the
/// lift of the factor-level compensator, then checks What and Wtilde on
/// `n_random` random integrands.
pub fn characteristics_invariance_check(
    p: &ProductModel,
    x: &AdaptedProcess,
    side: Factor,
    n_random: usize,
    seed: u64,
    tol: f64,
) -> InvarianceReport {
    let factor_model = match side {
        Factor::F => &p.f,
        Factor::H => &p.h,
    };
    let lifted = match side {
        Factor::F => p.lift_f(x),
        Factor::H => p.lift_h(x),
    };
    let nu_factor = compensator_nu(factor_model, x);
    let nu_lifted = compensator_nu(p.model(), &lifted);

    // Mark sets agree exactly (lifting copies increments); masses agree up
    // to the rounding of weight products.
    let mut nu_max_dev: f64 = 0.0;
    for t in 1..=p.model().horizon() {
        for pa in 0..p.model().n_atoms(t - 1) {
            let (af, ah) = p.atom_pair(t - 1, pa);
            let fa = match side {
                Factor::F => af,
                Factor::H => ah,
            };
            let empty = std::collections::BTreeMap::new();
            let lifted_measure = nu_lifted.measure(t, pa).unwrap_or(&empty);
            let factor_measure = nu_factor.measure(t, fa).unwrap_or(&empty);
            if lifted_measure.len() != factor_measure.len()
                || lifted_measure.keys().ne(factor_measure.keys())
            {
                return InvarianceReport {
                    ok: false,
                    nu_max_dev: f64::INFINITY,
                    what_max_dev: 0.0,
                    wtilde_max_dev: 0.0,
                };
            }
            for (mark, &mass) in lifted_measure {
                nu_max_dev = nu_max_dev.max((mass - factor_measure[mark]).abs());
            }
        }
    }

    let mut what_max_dev: f64 = 0.0;
    let mut wtilde_max_dev: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        let w = PredictableFunction::from_fn(&nu_factor, |_, _, _| rng.random::<f64>() * 4.0 - 2.0);
        let w_lifted = p
            .lift_function_f(&w, &nu_lifted, side)
            .expect("lift stays on the support");

        let hat_factor = w_hat(factor_model, &w, &nu_factor).expect("support covered");
        let hat_product = w_hat(p.model(), &w_lifted, &nu_lifted).expect("support covered");
        let tilde_factor = w_tilde_with(factor_model, &w, x, &nu_factor).expect("support covered");
        let tilde_product =
            w_tilde_with(p.model(), &w_lifted, &lifted, &nu_lifted).expect("support covered");

        for omega in 0..p.model().n_outcomes() {
            let factor_omega = match side {
                Factor::F => p.f_outcome(omega),
                Factor::H => p.h_outcome(omega),
            };
            for t in 1..=p.model().horizon() {
                what_max_dev = what_max_dev
                    .max((hat_product.scalar(omega, t) - hat_factor.scalar(factor_omega, t)).abs());
                wtilde_max_dev = wtilde_max_dev.max(
                    (tilde_product.get(omega, t, 0) - tilde_factor.get(factor_omega, t, 0)).abs(),
                );
            }
        }
    }

    InvarianceReport {
        ok: nu_max_dev <= tol && what_max_dev <= tol && wtilde_max_dev <= tol,
        nu_max_dev,
        what_max_dev,
        wtilde_max_dev,
    }
}

/// Embeds a one-factor integrand into the pair: (x, y) -> W(x) 1_{x != 0}
/// for the F side, and symmetrically for H. The compensated integrals of the
/// embedded and original integrands agree pathwise.
pub fn embed_integrand(
    p: &ProductModel,
    w: &PredictableFunction,
    side: Factor,
    nu_z: &CompensatorTable,
    dim_x: usize,
) -> Result<PredictableFunction> {
    let mut entries = Vec::new();
    for (&(t, pa), measure) in nu_z.cells() {
        let (af, ah) = p.atom_pair(t - 1, pa);
        for mark in measure.keys() {
            let (part, atom) = match side {
                Factor::F => (mark.head(dim_x), af),
                Factor::H => (mark.tail(dim_x), ah),
            };
            let value = if part.is_zero() {
                0.0
            } else {
                w.eval(t, atom, &part)?
            };
            entries.push((t, pa, mark.clone(), value));
        }
    }
    Ok(PredictableFunction::from_entries(nu_z.dim_mark, entries))
}

/// The explicit product integrands for M N against Z = (X, Y).
#[derive(Debug, Clone)]
pub struct ProductIntegrands {
    pub u: PredictableFunction,
    pub g: PredictableFunction,
    pub nu_z: CompensatorTable,
    pub z: AdaptedProcess,
    pub m_lifted: AdaptedProcess,
    pub n_lifted: AdaptedProcess,
    /// What of the lifted F-integrand per (t, atom of P^G_{t-1}).
    pub what_g: Vec<Vec<f64>>,
    /// Vhat of the lifted H-integrand per (t, atom of P^G_{t-1}).
    pub vhat_g: Vec<Vec<f64>>,
}

/// One factor of a product scenario: the driving process, the integrand and
/// the initial value of the represented martingale M = m0 + W * (mu - nu).
pub struct FactorData<'a> {
    pub process: &'a AdaptedProcess,
    pub integrand: &'a PredictableFunction,
    pub initial: f64,
}

fn factor_martingale(model: &FiniteModel, data: &FactorData<'_>) -> Result<AdaptedProcess> {
    let nu = compensator_nu(model, data.process);
    let integral = compensated_integral_with(model, data.integrand, data.process, &nu)?;
    Ok(
        AdaptedProcess::scalar_from_fn(model, |omega, t| {
            data.initial + integral.scalar(omega, t)
        })
        .expect("shifted integral stays adapted"),
    )
}

/// Builds U and G for the product of two represented factor martingales.
/// Rejects inputs whose represented martingale is not an exact martingale on
/// its factor model.
pub fn build_product_integrands(
    p: &ProductModel,
    fx: &FactorData<'_>,
    fy: &FactorData<'_>,
) -> Result<ProductIntegrands> {
    let m = factor_martingale(&p.f, fx)?;
    let mart = p.f.is_martingale(&m);
    if !mart.ok {
        return Err(Error::RepresentationMismatch(format!(
            "F-factor martingale fails its martingale test by {:e}",
            mart.max_violation
        )));
    }
    let n = factor_martingale(&p.h, fy)?;
    let mart = p.h.is_martingale(&n);
    if !mart.ok {
        return Err(Error::RepresentationMismatch(format!(
            "H-factor martingale fails its martingale test by {:e}",
            mart.max_violation
        )));
    }

    let dim_x = fx.process.dim();
    let z = p.pair(fx.process, fy.process);
    let nu_z = compensator_nu(p.model(), &z);

    // Product-level What and Vhat per (t, product atom), computed on the
    // product model as the formulas demand; by invariance they coincide with
    // the lifted factor-level ones.
    let x_lifted = p.lift_f(fx.process);
    let y_lifted = p.lift_h(fy.process);
    let nu_x_g = compensator_nu(p.model(), &x_lifted);
    let nu_y_g = compensator_nu(p.model(), &y_lifted);
    let w_lifted = p.lift_function_f(fx.integrand, &nu_x_g, Factor::F)?;
    let v_lifted = p.lift_function_f(fy.integrand, &nu_y_g, Factor::H)?;
    let what = w_hat(p.model(), &w_lifted, &nu_x_g)?;
    let vhat = w_hat(p.model(), &v_lifted, &nu_y_g)?;

    // Tabulated per (t, atom of P^G_{t-1}) for the integrand closures.
    let horizon = p.model().horizon();
    let mut what_g = vec![Vec::new(); horizon + 1];
    let mut vhat_g = vec![Vec::new(); horizon + 1];
    for t in 1..=horizon {
        let n_atoms = p.model().n_atoms(t - 1);
        let mut wrow = vec![0.0; n_atoms];
        let mut vrow = vec![0.0; n_atoms];
        for a in 0..n_atoms {
            let omega = p.model().atoms(t - 1)[a][0];
            wrow[a] = what.scalar(omega, t);
            vrow[a] = vhat.scalar(omega, t);
        }
        what_g[t] = wrow;
        vhat_g[t] = vrow;
    }

    let m_lifted = p.lift_f(&m);
    let n_lifted = p.lift_h(&n);

    let w = fx.integrand;
    let v = fy.integrand;
    let mut u_entries = Vec::new();
    let mut g_entries = Vec::new();
    for (&(t, pa), measure) in nu_z.cells() {
        let omega0 = p.model().atoms(t - 1)[pa][0];
        let n_left = n_lifted.left_value(omega0, t, 0);
        let m_left = m_lifted.left_value(omega0, t, 0);
        let (af, ah) = p.atom_pair(t - 1, pa);
        for mark in measure.keys() {
            let xm = mark.head(dim_x);
            let ym = mark.tail(dim_x);
            let wx = if xm.is_zero() { 0.0 } else { w.eval(t, af, &xm)? };
            let vy = if ym.is_zero() { 0.0 } else { v.eval(t, ah, &ym)? };
            let cross = if !xm.is_zero() && !ym.is_zero() {
                wx * vy
            } else {
                0.0
            };
            let u_val = cross - what_g[t][pa] * vy - vhat_g[t][pa] * wx;
            u_entries.push((t, pa, mark.clone(), u_val));
            g_entries.push((t, pa, mark.clone(), n_left * wx + m_left * vy + u_val));
        }
    }

    Ok(ProductIntegrands {
        u: PredictableFunction::from_entries(nu_z.dim_mark, u_entries),
        g: PredictableFunction::from_entries(nu_z.dim_mark, g_entries),
        nu_z,
        z,
        m_lifted,
        n_lifted,
        what_g,
        vhat_g,
    })
}

/// One verified identity with its largest pathwise violation and, when it
/// fails the tolerance, the first (outcome, time) where it does.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_violation: f64,
    pub first_failure: Option<(usize, usize)>,
}

/// Report of the full product-representation identity suite.
#[derive(Debug, Clone)]
pub struct ProductIdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub ok: bool,
}

impl ProductIdentityReport {
    pub fn max_violation(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn pathwise_check(
    name: &'static str,
    model: &FiniteModel,
    tol: f64,
    f: impl Fn(usize, usize) -> f64,
) -> IdentityCheck {
    let mut max_violation: f64 = 0.0;
    let mut first_failure = None;
    for omega in 0..model.n_outcomes() {
        for t in 0..=model.horizon() {
            let dev = f(omega, t).abs();
            if dev > tol && first_failure.is_none() {
                first_failure = Some((omega, t));
            }
            max_violation = max_violation.max(dev);
        }
    }
    IdentityCheck {
        name,
        max_violation,
        first_failure,
    }
}

/// Verifies, pathwise and exactly, the four product identities plus the two
/// structural properties of U: integration by parts, the bracket as a
/// U-integral,
/// the one-factor embeddings, the G-representation of MN, Util = Wtil Vtil,
/// and Uhat = -What Vhat.
pub fn verify_product_representation(
    p: &ProductModel,
    fx: &FactorData<'_>,
    fy: &FactorData<'_>,
    tol: f64,
) -> Result<ProductIdentityReport> {
    let parts = build_product_integrands(p, fx, fy)?;
    let g_model = p.model();
    let m = &parts.m_lifted;
    let n = &parts.n_lifted;

    // (a) Integration by parts: MN = M0 N0 + N_- . M + M_- . N + [M, N].
    let par_int = pathwise_check("par-int", g_model, tol, |omega, t| {
        let mut rhs = m.scalar(omega, 0) * n.scalar(omega, 0);
        for s in 1..=t {
            let dm = m.increment(omega, s, 0);
            let dn = n.increment(omega, s, 0);
            rhs += n.scalar(omega, s - 1) * dm + m.scalar(omega, s - 1) * dn + dm * dn;
        }
        m.scalar(omega, t) * n.scalar(omega, t) - rhs
    });

    // (b) [M, N] = U * (mu^Z - nu^Z).
    let u_integral = compensated_integral_with(g_model, &parts.u, &parts.z, &parts.nu_z)?;
    let rep_sq_br = pathwise_check("rep-sq-br", g_model, tol, |omega, t| {
        let bracket: f64 = (1..=t)
            .map(|s| m.increment(omega, s, 0) * n.increment(omega, s, 0))
            .sum();
        bracket - u_integral.scalar(omega, t)
    });

    // (c) Embedding, both factors: W 1_{x!=0} * (mu^Z - nu^Z) equals the
    // lifted one-factor integral.
    let w_embedded = embed_integrand(p, fx.integrand, Factor::F, &parts.nu_z, fx.process.dim())?;
    let v_embedded = embed_integrand(p, fy.integrand, Factor::H, &parts.nu_z, fx.process.dim())?;
    let w_embedded_int = compensated_integral_with(g_model, &w_embedded, &parts.z, &parts.nu_z)?;
    let v_embedded_int = compensated_integral_with(g_model, &v_embedded, &parts.z, &parts.nu_z)?;
    let x_int = compensated_integral(&p.f, fx.integrand, fx.process)?;
    let y_int = compensated_integral(&p.h, fy.integrand, fy.process)?;
    let x_int_lifted = p.lift_f(&x_int);
    let y_int_lifted = p.lift_h(&y_int);
    let embed = pathwise_check("embed", g_model, tol, |omega, t| {
        let dev_x = w_embedded_int.scalar(omega, t) - x_int_lifted.scalar(omega, t);
        let dev_y = v_embedded_int.scalar(omega, t) - y_int_lifted.scalar(omega, t);
        dev_x.abs().max(dev_y.abs())
    });

    // (d) Terminal representation, checked pathwise at all times:
    // MN - M0 N0 = G * (mu^Z - nu^Z); the continuous-part term is absent in
    // discrete time.
    let g_integral = compensated_integral_with(g_model, &parts.g, &parts.z, &parts.nu_z)?;
    let terminal = pathwise_check("terminal", g_model, tol, |omega, t| {
        m.scalar(omega, t) * n.scalar(omega, t)
            - m.scalar(omega, 0) * n.scalar(omega, 0)
            - g_integral.scalar(omega, t)
    });

    // Util = Wtil Vtil pathwise.
    let u_tilde = w_tilde_with(g_model, &parts.u, &parts.z, &parts.nu_z)?;
    let util = pathwise_check("util", g_model, tol, |omega, t| {
        if t == 0 {
            return 0.0;
        }
        u_tilde.get(omega, t, 0) - m.increment(omega, t, 0) * n.increment(omega, t, 0)
    });

    // Uhat = -What Vhat per (t, atom).
    let u_hat = w_hat(g_model, &parts.u, &parts.nu_z)?;
    let what_g = &parts.what_g;
    let vhat_g = &parts.vhat_g;
    let proj = pathwise_check("proj", g_model, tol, |omega, t| {
        if t == 0 {
            return 0.0;
        }
        let atom = g_model.atom_of(t - 1, omega);
        u_hat.scalar(omega, t) + what_g[t][atom] * vhat_g[t][atom]
    });

    let checks = vec![par_int, rep_sq_br, embed, terminal, util, proj];
    let ok = checks.iter().all(|c| c.max_violation <= tol);
    Ok(ProductIdentityReport { checks, ok })
}

/// Result of an iterated independent enlargement.
#[derive(Debug, Clone)]
pub struct IteratedReport {
    pub factor_reports: Vec<WrpReport>,
    pub joint: WrpReport,
    pub invariance_max_dev: f64,
    pub ok: bool,
}

/// Left-associated product of several independent factors; checks that each
/// factor keeps its compensator inside the joint model and that the stacked
/// process has the WRP there.
pub fn iterated_product(factors: &[(FiniteModel, AdaptedProcess)]) -> Result<IteratedReport> {
    assert!(!factors.is_empty(), "need at least one factor");
    let mut factor_reports = Vec::with_capacity(factors.len());
    for (i, (model, z)) in factors.iter().enumerate() {
        let report = has_wrp(model, z);
        if !report.holds {
            return Err(Error::FactorLacksWrp {
                index: i,
                mart_dim: report.mart_dim,
                repr_dim: report.repr_dim,
            });
        }
        factor_reports.push(report);
    }

    let mut joint_model = factors[0].0.clone();
    let mut lifted: Vec<AdaptedProcess> = vec![factors[0].1.clone()];
    // projections[i] maps a joint outcome to the outcome of factor i.
    let mut projections: Vec<Box<dyn Fn(usize) -> usize>> = vec![Box::new(|omega| omega)];

    for (model, z) in &factors[1..] {
        let p = product_model(&joint_model, model)?;
        let nh = model.n_outcomes();
        lifted = lifted.iter().map(|x| p.lift_f(x)).collect();
        lifted.push(p.lift_h(z));
        projections = projections
            .into_iter()
            .map(|proj| {
                let f: Box<dyn Fn(usize) -> usize> = Box::new(move |omega| proj(omega / nh));
                f
            })
            .collect();
        projections.push(Box::new(move |omega| omega % nh));
        joint_model = p.model().clone();
    }

    let mut joint_z = lifted[0].clone();
    for extra in &lifted[1..] {
        joint_z = AdaptedProcess::stack(&joint_z, extra);
    }
    let joint = has_wrp(&joint_model, &joint_z);

    // Per-factor characteristics inside the joint model.
    let mut invariance_max_dev: f64 = 0.0;
    for (i, (model, z)) in factors.iter().enumerate() {
        let nu_factor = compensator_nu(model, z);
        let nu_joint = compensator_nu(&joint_model, &lifted[i]);
        for t in 1..=joint_model.horizon() {
            for (a, atom) in joint_model.atoms(t - 1).iter().enumerate() {
                let fa = model.atom_of(t - 1, projections[i](atom[0]));
                let empty = std::collections::BTreeMap::new();
                let joint_measure = nu_joint.measure(t, a).unwrap_or(&empty);
                let factor_measure = nu_factor.measure(t, fa).unwrap_or(&empty);
                if joint_measure.keys().ne(factor_measure.keys()) {
                    invariance_max_dev = f64::INFINITY;
                    continue;
                }
                for (mark, &mass) in joint_measure {
                    invariance_max_dev =
                        invariance_max_dev.max((mass - factor_measure[mark]).abs());
                }
            }
        }
    }

    let ok = joint.holds && invariance_max_dev <= EXACT_TOL;
    Ok(IteratedReport {
        factor_reports,
        joint,
        invariance_max_dev,
        ok,
    })
}

/// Structural isomorphism of two models: same partition shapes over the same
/// outcome indices, weights within `tol`. Used to check that re-bracketing
/// an iterated product changes nothing.
pub fn models_isomorphic(a: &FiniteModel, b: &FiniteModel, tol: f64) -> bool {
    if a.n_outcomes() != b.n_outcomes() || a.horizon() != b.horizon() {
        return false;
    }
    if a.weights()
        .iter()
        .zip(b.weights())
        .any(|(wa, wb)| (wa - wb).abs() > tol)
    {
        return false;
    }
    (0..=a.horizon()).all(|t| a.atoms(t) == b.atoms(t))
}
