//! The experiment suites behind each subcommand.

use serde::Serialize;

use donsker_core::distance::{donsker_rate_experiment, local_time_experiment, projection_error, rate_fit, Check, ExperimentReport};
use donsker_core::functional::PathFunctional;
use donsker_core::gram::{cond_coeffs_with, cond_variance_with, gamma_inverse_inf_norm, gamma_matrix};
use donsker_core::ou::{lipschitz_modulus_probe, stein_dirichlet_check, OuTime};
use donsker_core::paths::{BasisIndex, GridPath};
use donsker_core::sobolev::{kernel_integral_check, step_primitive_norm_check, QuadratureSpec};
use donsker_core::{LabError, SeededStream};

use crate::config::{Command, RunConfig};

/// Rows of one command with a fixed header, plus the invariants that decide
/// the exit status.
#[derive(Debug, Serialize)]
pub struct Outcome {
    #[serde(skip)]
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new(), checks: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Fixed-width scientific notation, 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, thiserror::Error)]
#[error("experiment `{tag}` failed: {source}")]
pub struct NumericalError {
    pub tag: &'static str,
    #[source]
    pub source: LabError,
}

fn tagged(tag: &'static str) -> impl FnOnce(LabError) -> NumericalError {
    move |source| NumericalError { tag, source }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, NumericalError> {
    match cfg.command {
        Command::Gram => gram(cfg).map_err(tagged("gram")),
        Command::Norms => norms(cfg).map_err(tagged("norms")),
        Command::Stein => stein(cfg).map_err(tagged("stein")),
        Command::Rate => rate(cfg).map_err(tagged("rate")),
        Command::Localtime => localtime(cfg).map_err(tagged("localtime")),
    }
}

fn gram(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let (m, n, seed) = (cfg.m, cfg.n, cfg.seed.to_string());
    let mut out = Outcome::new(&["seed", "m", "N", "quantity", "i", "j", "value", "check"]);
    let mut row = |q: &str, i: usize, j: usize, v: f64, ok: bool| {
        out.rows.push(vec![seed.clone(), m.to_string(), n.to_string(), q.into(), i.to_string(), j.to_string(), num(v), ok.to_string()])
    };
    let g = gamma_matrix(m, n)?;
    for b in 0..n {
        for c in b.saturating_sub(1)..(b + 2).min(n) {
            row("gamma", b, c, g.get(b, c), true);
        }
    }
    let exact = g.exact();
    let inv_ok = exact.inverse_norm_at_most(2, 1);
    row("inverse_inf_norm", 0, 0, gamma_inverse_inf_norm(&g)?, inv_ok);
    let coeff_bound = 4.0 * (n as f64 / m as f64).sqrt();
    let var_bound = 8.0 * n as f64 / m as f64;
    let (mut coeff_ok, mut var_ok) = (true, true);
    for cell in 0..m {
        let a = BasisIndex::new(1, cell, m, 1)?;
        let c = cond_coeffs_with(&g, a)?;
        let cmax = c.row.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let ok_c = exact.coeff_bound_holds(cell);
        let ok_v = exact.variance_bound_holds(cell);
        coeff_ok &= ok_c;
        var_ok &= ok_v;
        row("max_cond_coeff", cell, 0, cmax, ok_c);
        row("cond_variance", cell, 0, cond_variance_with(&g, a)?, ok_v);
    }
    out.check("gamma diagonal >= 3/4", g.diagonal_at_least_three_quarters(), "exact");
    out.check("gamma off-diagonal <= N/m", g.off_diagonal_at_most_n_over_m(), "exact");
    out.check("inverse inf-norm <= 2", inv_ok, "exact");
    out.check("|C_ab| <= 4 sqrt(N/m)", coeff_ok, format!("bound {}", num(coeff_bound)));
    out.check("conditional variance <= 8N/m", var_ok, format!("bound {}", num(var_bound)));
    if m % n == 0 {
        out.check("gamma is the identity when N | m", g.is_identity(), "exact");
    }
    Ok(out)
}

fn norms(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let idx = cfg.index();
    let quad = QuadratureSpec::new(6, 2, cfg.norm_tol)?;
    let seed = cfg.seed.to_string();
    let mut out = Outcome::new(&["seed", "quantity", "eta", "p", "m", "N", "value", "ratio", "check"]);
    let push = |out: &mut Outcome, q: &str, m: usize, n: usize, v: f64, r: f64, ok: bool| {
        out.rows.push(vec![seed.clone(), q.into(), num(cfg.eta), num(cfg.p), m.to_string(), n.to_string(), num(v), num(r), ok.to_string()])
    };
    if cfg.eta < 0.5 {
        let (p, eta) = (cfg.p, cfg.eta);
        let limit = 2.0 * (1.0 / (p / 2.0 - p * eta) + 1.0 / (p * eta));
        let mut all = true;
        for &n in &cfg.ladder {
            let (v, r) = kernel_integral_check(n, idx)?;
            let ok = r.is_finite() && r > 0.0 && r <= limit * (1.0 + 1e-12);
            all &= ok;
            push(&mut out, "kernel_ratio", 0, n, v, r, ok);
        }
        out.check("kernel ratio bounded by its limit", all, format!("limit {}", num(limit)));
    }
    let mut hi = 0.0f64;
    for k in [1, 2, 4, 6, 8] {
        let w = 0.5f64.powi(k);
        let (v, r) = step_primitive_norm_check(0.25, 0.25 + w, idx, quad)?;
        hi = hi.max(r);
        push(&mut out, "step_primitive_ratio", 0, 1 << k, v, r, r.is_finite());
    }
    out.check("step primitive ratio bounded", hi.is_finite() && hi < 10.0, format!("max {}", num(hi)));
    let law = cfg.increment_law();
    let stream = SeededStream::new(cfg.seed).named("norms");
    let mut pts = Vec::new();
    for n in (1..=cfg.n).filter(|d| cfg.m.is_multiple_of(*d) && d.is_power_of_two()) {
        let e = projection_error(cfg.m, n, &law, idx, quad, cfg.reps, &stream.child(n as u64))?;
        pts.push((n as f64, e.value));
        push(&mut out, "projection_error", cfg.m, n, e.value, e.std_error, true);
    }
    if pts.len() >= 3 {
        let fit = rate_fit(&pts)?;
        push(&mut out, "projection_error_slope", cfg.m, cfg.n, fit.slope, fit.slope_se, true);
    }
    Ok(out)
}

/// Constant the probe bound ratio must stay under across the sweep.
pub const PROBE_RATIO_MAX: f64 = 1.0;

fn stein(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let law = cfg.increment_law();
    let stream = SeededStream::new(cfg.seed).named("stein");
    let seed = cfg.seed.to_string();
    let mut out = Outcome::new(&[
        "seed",
        "suite",
        "functional",
        "m",
        "N",
        "tau",
        "eps",
        "value",
        "std_error",
        "reference",
        "reference_se",
        "budget",
        "bound_ratio",
        "check",
    ]);
    let fs = [PathFunctional::endpoint(), PathFunctional::abs_endpoint(), PathFunctional::sup_norm()];
    for (i, f) in fs.iter().enumerate() {
        let c = stein_dirichlet_check(f, cfg.m, cfg.n, &law, cfg.tau0, cfg.tau_max, cfg.reps, &stream.child(i as u64))?;
        let ok = c.holds(3.0);
        out.rows.push(vec![
            seed.clone(),
            "stein_dirichlet".into(),
            f.name(),
            cfg.m.to_string(),
            cfg.n.to_string(),
            num(cfg.tau0),
            num(0.0),
            num(c.lhs.value),
            num(c.lhs.std_error),
            num(c.rhs.value),
            num(c.rhs.std_error),
            num(c.budget(3.0)),
            String::new(),
            ok.to_string(),
        ]);
        out.check(format!("stein identity: {}", f.name()), ok, format!("|lhs - rhs| = {}", num(c.discrepancy())));
    }

    // probe suite: |x(1)| through pi^N, moving one fine basis direction
    let idx = cfg.index();
    let f = PathFunctional::abs_endpoint();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (pi, (pn, pm)) in [(4usize, 64usize), (8, 512)].into_iter().enumerate() {
        let a = BasisIndex::new(1, pm / 3, pm, 1)?;
        let v = GridPath::from_fn(1, pm, |t, o| o[0] = 0.8 * t);
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            let t = OuTime::new(tau)?;
            let s = stream.named("probe").child(pi as u64).child(ti as u64);
            let mut pts = Vec::new();
            for eps in [0.0, 0.1, 0.2, 0.4] {
                let p = lipschitz_modulus_probe(&f, pm, pn, a, eps, t, &v, idx, cfg.reps, &s)?;
                let ok = if eps == 0.0 {
                    p.delta.value == 0.0
                } else {
                    lo = lo.min(p.bound_ratio);
                    hi = hi.max(p.bound_ratio);
                    pts.push((eps, p.delta.value.abs()));
                    p.bound_ratio.is_finite()
                };
                out.rows.push(vec![
                    seed.clone(),
                    "probe".into(),
                    f.name(),
                    pm.to_string(),
                    pn.to_string(),
                    num(tau),
                    num(eps),
                    num(p.delta.value),
                    num(p.delta.std_error),
                    String::new(),
                    String::new(),
                    String::new(),
                    num(p.bound_ratio),
                    ok.to_string(),
                ]);
                if eps == 0.0 {
                    out.check(format!("probe ({pn}, {pm}) tau {tau}: eps = 0 gives 0"), ok, num(p.delta.value));
                }
            }
            let name = format!("probe ({pn}, {pm}) tau {tau}: eps-exponent 1 +- 0.2");
            if pts.iter().all(|p| p.1 > 0.0) {
                let fit = rate_fit(&pts)?;
                out.check(name, (fit.slope - 1.0).abs() <= 0.2, format!("slope {}", num(fit.slope)));
            } else {
                out.check(name, false, "zero difference at eps > 0");
            }
        }
    }
    out.check("probe bound ratio bounded across the sweep", lo > 0.0 && hi <= PROBE_RATIO_MAX, format!("range [{}, {}]", num(lo), num(hi)));
    Ok(out)
}

fn report_outcome(rep: ExperimentReport) -> Outcome {
    let seed = rep.params.seed.to_string();
    let mut out = Outcome::new(&["seed", "quantity", "m", "N", "value", "std_error", "envelope"]);
    for r in &rep.rows {
        out.rows.push(vec![
            seed.clone(),
            r.quantity.clone(),
            r.m.to_string(),
            r.n.to_string(),
            num(r.estimate.value),
            num(r.estimate.std_error),
            num(r.envelope),
        ]);
    }
    out.checks = rep.checks;
    out
}

fn rate(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let quad = QuadratureSpec::new(6, 2, cfg.norm_tol)?;
    let rep =
        donsker_rate_experiment(&cfg.ladder, &cfg.increment_law(), cfg.index(), quad, cfg.reps, cfg.kr_reps, &SeededStream::new(cfg.seed))?;
    Ok(report_outcome(rep))
}

fn localtime(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let rep = local_time_experiment(&cfg.ladder, &cfg.increment_law(), cfg.reps, &SeededStream::new(cfg.seed))?;
    Ok(report_outcome(rep))
}
