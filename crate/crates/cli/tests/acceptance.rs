//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! Runs for about an hour on one core; set ACCEPTANCE_ONLY=1,7 (a comma list)
//! to run a subset.

use std::process::Command;
use std::time::Instant;

use donsker_core::distance::{
    donsker_rate_experiment, increment_gap_at, increment_modulus_check, interpolation_error, local_time_experiment, projection_error,
    rate_fit, Check,
};
use donsker_core::estimate::replicate;
use donsker_core::functional::PathFunctional;
use donsker_core::gram::{gamma_matrix, inner_ip, project_cm};
use donsker_core::ou::{lipschitz_modulus_probe, ou_derivative, stein_dirichlet_check, OuTime};
use donsker_core::paths::{basis_h, BasisIndex, GridPath, IncrementLaw};
use donsker_core::sobolev::{validate_index, QuadratureSpec};
use donsker_core::{sample_brownian, sample_walk, McEstimate, SeededStream};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn checks_pass(checks: &[Check], wanted: impl Fn(&str) -> bool) -> Result<usize, String> {
    let mut n = 0;
    for c in checks.iter().filter(|c| wanted(&c.name)) {
        ensure(c.passed, || format!("{}: {}", c.name, c.detail))?;
        n += 1;
    }
    Ok(n)
}

fn slope(pts: &[(f64, f64)]) -> Result<f64, String> {
    rate_fit(pts).map(|f| f.slope).map_err(|e| e.to_string())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Exact Gamma suite over N in {2,...,32}, m in {8N+1, 16N, 32N, 64N}.
fn gamma_suite() -> Outcome {
    let mut cases = 0;
    for n in [2usize, 4, 8, 16, 32] {
        for m in [8 * n + 1, 16 * n, 32 * n, 64 * n] {
            let g = gamma_matrix(m, n).map_err(err)?;
            // independent dense assembly from basis inner products
            let ips: Vec<Vec<f64>> = (0..m)
                .map(|a| {
                    let ia = BasisIndex::new(1, a, m, 1).unwrap();
                    (0..n).map(|b| inner_ip(m, ia, n, BasisIndex::new(1, b, n, 1).unwrap())).collect()
                })
                .collect();
            for b in 0..n {
                for c in 0..n {
                    let dense: f64 = ips.iter().map(|r| r[b] * r[c]).sum();
                    if b.abs_diff(c) > 1 {
                        ensure(dense == 0.0, || format!("m={m} N={n}: Gamma[{b}][{c}] = {dense}"))?;
                    } else {
                        let rel = (dense - g.get(b, c)).abs() / g.get(b, c).abs().max(1e-300);
                        ensure(rel < 1e-12, || format!("m={m} N={n}: Gamma[{b}][{c}] {dense} vs {}", g.get(b, c)))?;
                    }
                }
            }
            ensure(g.diagonal_at_least_three_quarters(), || format!("m={m} N={n}: diagonal < 3/4"))?;
            let ex = g.exact();
            ensure(ex.inverse_norm_at_most(2, 1), || format!("m={m} N={n}: inverse inf-norm > 2"))?;
            for a in 0..m {
                ensure(ex.coeff_bound_holds(a), || format!("m={m} N={n} a={a}: |C| > 4 sqrt(N/m)"))?;
                ensure(ex.variance_bound_holds(a), || format!("m={m} N={n} a={a}: variance > 8N/m"))?;
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (N, m) pairs, exact arithmetic"))
}

/// N | m: Gamma is the identity and the CM projection is the coarsening.
fn identity_case() -> Outcome {
    let root = SeededStream::new(2);
    let mut worst = 0.0f64;
    for n in [2usize, 4, 8, 16, 32] {
        for m in [16 * n, 32 * n, 64 * n] {
            ensure(gamma_matrix(m, n).map_err(err)?.is_identity(), || format!("m={m} N={n}: Gamma != I"))?;
        }
    }
    for r in 0..100u64 {
        let n = [2usize, 4, 8, 16][r as usize % 4];
        let m = n * [3, 5, 16][r as usize % 3];
        let law = if r % 2 == 0 { IncrementLaw::rademacher(1) } else { IncrementLaw::gaussian(1) };
        let path = sample_walk(m, &law, &root.child(r));
        let (p, c) = (project_cm(&path, n).map_err(err)?, path.coarsen(n).map_err(err)?);
        let scale = c.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (u, v) in p.values().iter().zip(c.values()) {
            worst = worst.max((u - v).abs() / scale);
        }
    }
    ensure(worst <= 1e-12, || format!("max relative gap {worst:e}"))?;
    Ok(format!("15 identity cases, 100 paths, max relative gap {worst:.1e}"))
}

fn stein_identity() -> Outcome {
    let root = SeededStream::new(3);
    let rad = IncrementLaw::rademacher(1);
    let reps = 100_000;
    let mut worst = 0.0f64;
    for n in [1usize, 2] {
        for (i, f) in [PathFunctional::endpoint(), PathFunctional::abs_endpoint(), PathFunctional::sup_norm()].iter().enumerate() {
            let c = stein_dirichlet_check(f, 2, n, &rad, 0.05, 8.0, reps, &root.child(n as u64).child(i as u64)).map_err(err)?;
            ensure(c.holds(3.0), || format!("N={n} {}: |lhs - rhs| = {:.3e} > {:.3e}", f.name(), c.discrepancy(), c.budget(3.0)))?;
            worst = worst.max(c.discrepancy() / c.budget(3.0));
        }
    }
    let g = stein_dirichlet_check(&PathFunctional::abs_endpoint(), 2, 2, &IncrementLaw::gaussian(1), 0.05, 8.0, reps, &root.named("gauss"))
        .map_err(err)?;
    ensure(g.lhs.agrees_with(0.0, 3.0, 0.0), || format!("gaussian control lhs {:?}", g.lhs))?;
    Ok(format!("6 instances, worst discrepancy/budget {worst:.2}; gaussian lhs {:.2e} +- {:.1e}", g.lhs.value, g.lhs.std_error))
}

/// Central differences of `P_tau F` along `dir` with common random numbers,
/// Richardson-combined per replicate.
fn richardson(f: &PathFunctional, x: &GridPath, dir: &GridPath, t: OuTime, k: u32, step: f64, reps: usize, s: &SeededStream) -> McEstimate {
    let samples = replicate(reps, s, |r| {
        let y = sample_brownian(x.m(), 1, r);
        let at = |c: f64| f.eval(&x.lin_comb(1.0, dir, c).unwrap().lin_comb(t.decay(), &y, t.beta()).unwrap());
        let d = |h: f64| match k {
            1 => (at(h) - at(-h)) / (2.0 * h),
            _ => (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h),
        };
        (4.0 * d(step / 2.0) - d(step)) / 3.0
    });
    McEstimate::from_samples(&samples, s.root())
}

fn derivative_estimators() -> Outcome {
    let root = SeededStream::new(4);
    let fs = [
        PathFunctional::sin_at(0.75).unwrap(),
        PathFunctional::soft_max(vec![0.25, 0.5, 0.75, 1.0], 0.4).unwrap(),
        PathFunctional::product(0.5, 1.0).unwrap(),
        PathFunctional::endpoint_power(3),
        PathFunctional::endpoint_power(2),
    ];
    let m = 4;
    let x = GridPath::from_fn(1, m, |s, o| o[0] = 0.3 * s + 0.2 * (3.0 * s).sin());
    let dir =
        basis_h(BasisIndex::new(1, 3, m, 1).unwrap(), 1).lin_comb(1.0, &basis_h(BasisIndex::new(1, 1, m, 1).unwrap(), 1), 0.5).unwrap();
    let t = OuTime::new(0.4).unwrap();
    let reps = 100_000;
    let mut worst = 0.0f64;
    for (i, f) in fs.iter().enumerate() {
        let s = root.child(i as u64);
        for k in [1u32, 2] {
            let h = ou_derivative(f, &x, t, k, &dir, reps, &s.named("hermite").child(k as u64)).map_err(err)?;
            let fd = richardson(f, &x, &dir, t, k, 0.2, reps, &s.named("fd").child(k as u64));
            let z = (h.value - fd.value).abs() / h.combined_se(&fd).max(1e-300);
            ensure(z <= 3.0, || format!("{} k={k}: hermite {h:?} vs differences {fd:?}", f.name()))?;
            worst = worst.max(z);
        }
        // <grad P_tau F, h> = e^{-tau} E <grad F(e^{-tau} x + beta Y), h>
        let h = ou_derivative(f, &x, t, 1, &dir, reps, &s.named("hermite").child(1)).map_err(err)?;
        let pushed = replicate(reps, &s.named("pushed"), |r| {
            let z = x.lin_comb(t.decay(), &sample_brownian(m, 1, r), t.beta()).unwrap();
            t.decay() * f.directional(&z, &dir).unwrap()
        });
        let pushed = McEstimate::from_samples(&pushed, 0);
        let z = (h.value - pushed.value).abs() / h.combined_se(&pushed).max(1e-300);
        ensure(z <= 3.0, || format!("{} commutation: {h:?} vs {pushed:?}", f.name()))?;
        worst = worst.max(z);
    }
    Ok(format!("5 functionals, k in {{1, 2}} and commutation; worst |z| = {worst:.2}"))
}

fn scaling_exponents() -> Outcome {
    let idx = validate_index(0.1, 20.0).map_err(err)?;
    let quad = QuadratureSpec::new(6, 2, 1e-3).map_err(err)?;
    let rad = IncrementLaw::rademacher(1);
    let root = SeededStream::new(5);
    let reps = 10_000;
    let target = -(0.5 - 0.1);
    let ns = [4usize, 8, 16, 32];

    let mut a1 = Vec::new();
    let mut a3 = Vec::new();
    for &n in &ns {
        a1.push((n as f64, projection_error(64 * n, n, &rad, idx, quad, reps, &root.named("A1").child(n as u64)).map_err(err)?.value));
        a3.push((n as f64, interpolation_error(n, 64 * n, idx, quad, reps, &root.named("A3").child(n as u64)).map_err(err)?.value));
    }
    let (s1, s3) = (slope(&a1)?, slope(&a3)?);
    ensure((s1 - target).abs() <= 0.1, || format!("projection_error slope {s1:.3}"))?;
    ensure((s3 - target).abs() <= 0.1, || format!("interpolation_error slope {s3:.3}"))?;

    let p = 20.0;
    let (n, m) = (4, 65_536);
    let lags: Vec<f64> = (4..=8).rev().map(|k| 1.0 / (n as f64 * 2f64.powi(k))).collect();
    let pts = increment_modulus_check(m, n, &rad, p, &lags, reps, &root.named("lag")).map_err(err)?;
    let st = slope(&pts.iter().map(|q| (q.lag, q.moment.value)).collect::<Vec<_>>())?;
    ensure((st - 0.5).abs() <= 0.05, || format!("increment modulus time exponent {st:.3}"))?;

    let mut plateau = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let s = 0.5 / n as f64;
        let e = increment_gap_at(16_384, n, &rad, p, s, s + 4.0 / n as f64, reps, &root.named("plateau").child(n as u64)).map_err(err)?;
        plateau.push((n as f64, e.value));
    }
    let sp = slope(&plateau)?;
    ensure((sp + 0.5).abs() <= 0.1, || format!("plateau exponent {sp:.3}"))?;

    let mut mart = Vec::new();
    for q in [2i32, 4] {
        let mut pts = Vec::new();
        for k in [16usize, 64, 256, 1024] {
            let s = root.named("martingale").child(q as u64).child(k as u64);
            let xs = replicate(reps, &s, |r| {
                let mut buf = vec![0.0; k];
                rad.fill(&mut r.rng(), &mut buf);
                (0.7 * buf.iter().sum::<f64>()).abs().powi(q)
            });
            pts.push((k as f64, McEstimate::from_samples(&xs, 0).value));
        }
        let sk = slope(&pts)?;
        ensure((sk - q as f64 / 2.0).abs() <= 0.1, || format!("martingale k-slope {sk:.3} for p = {q}"))?;
        mart.push(sk);
    }
    Ok(format!(
        "A1 {s1:.3}, A3 {s3:.3} (target {target}); modulus time {st:.3}, plateau {sp:.3}; martingale {:.3}, {:.3}",
        mart[0], mart[1]
    ))
}

fn probe_sweep() -> Outcome {
    let idx = validate_index(0.1, 20.0).map_err(err)?;
    let f = PathFunctional::abs_endpoint();
    let root = SeededStream::new(6);
    let reps = 10_000;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut slopes = Vec::new();
    for (n, m) in [(4usize, 64usize), (8, 512)] {
        let a = BasisIndex::new(1, m / 3, m, 1).map_err(err)?;
        let v = GridPath::from_fn(1, m, |t, o| o[0] = 0.8 * t);
        for tau in [0.1, 0.4, 1.6] {
            let t = OuTime::new(tau).map_err(err)?;
            let s = root.child(m as u64).named(&format!("{tau}"));
            let zero = lipschitz_modulus_probe(&f, m, n, a, 0.0, t, &v, idx, reps, &s).map_err(err)?;
            ensure(zero.delta.value == 0.0, || format!("({n}, {m}) tau {tau}: eps = 0 gives {}", zero.delta.value))?;
            let mut pts = Vec::new();
            for eps in [0.1, 0.2, 0.4] {
                let p = lipschitz_modulus_probe(&f, m, n, a, eps, t, &v, idx, reps, &s).map_err(err)?;
                pts.push((eps, p.delta.value.abs()));
                lo = lo.min(p.bound_ratio);
                hi = hi.max(p.bound_ratio);
            }
            let se = slope(&pts)?;
            ensure((se - 1.0).abs() <= 0.2, || format!("({n}, {m}) tau {tau}: eps-exponent {se:.3}"))?;
            slopes.push(se);
        }
    }
    ensure(lo > 0.0 && hi <= 1.0, || format!("bound ratio range [{lo:.3e}, {hi:.3e}]"))?;
    let (smin, smax) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(format!("eps-exponents in [{smin:.3}, {smax:.3}], bound ratio in [{lo:.2e}, {hi:.2e}]"))
}

fn main_envelope() -> Outcome {
    let idx = validate_index(0.1, 20.0).map_err(err)?;
    let quad = QuadratureSpec::new(6, 2, 1e-3).map_err(err)?;
    let rep = donsker_rate_experiment(&[64, 512, 4096], &IncrementLaw::rademacher(1), idx, quad, 10_000, 10_000, &SeededStream::new(7))
        .map_err(err)?;
    let n = checks_pass(&rep.checks, |name| name.ends_with(": envelope") || name.contains("nonincreasing"))?;
    let slopes: Vec<String> = rep.fits.iter().map(|(q, f)| format!("{q} {:.3}", f.slope)).collect();
    Ok(format!("{n} envelope/monotonicity checks; slopes in m: {}", slopes.join(", ")))
}

fn local_time() -> Outcome {
    // fine-simulation oracle for the limit E|B(1)| = sqrt(2/pi)
    let limit = (2.0 / std::f64::consts::PI).sqrt();
    let fine = replicate(20_000, &SeededStream::new(80), |s| sample_brownian(1024, 1, s).at(1024, 0).abs());
    let fine = McEstimate::from_samples(&fine, 80);
    ensure(fine.agrees_with(limit, 3.0, 0.0), || format!("fine oracle {fine:?} vs {limit}"))?;

    let rep =
        local_time_experiment(&[16, 64, 256, 1024, 4096], &IncrementLaw::rademacher(1), 20_000, &SeededStream::new(8)).map_err(err)?;
    let n = checks_pass(&rep.checks, |_| true)?;
    let last = rep.rows.iter().rfind(|r| r.quantity == "mean").unwrap().estimate;
    Ok(format!("{n} checks; E L(1) at m = 4096: {:.4} +- {:.4} vs {limit:.4}", last.value, last.std_error))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let runs: [&[&str]; 5] = [
        &["gram", "--m", "24", "--N", "2"],
        &["norms", "--reps", "200"],
        &["stein", "--reps", "400", "--taus", "0.4"],
        &[
            "rate",
            "--law",
            "rademacher",
            "--eta",
            "0.1",
            "--p",
            "20",
            "--ladder",
            "16,32,64",
            "--reps",
            "40",
            "--kr-reps",
            "40",
            "--seed",
            "7",
        ],
        &["localtime", "--reps", "400", "--ladder", "16,64,256"],
    ];
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        for format in ["csv", "json"] {
            let mut outputs = Vec::new();
            for threads in ["1", "3", "8"] {
                let out = dir.path().join(format!("{i}-{threads}.{format}"));
                let status = Command::new(env!("CARGO_BIN_EXE_donsker"))
                    .args(*args)
                    .args(["--threads", threads, "--format", format, "--out"])
                    .arg(&out)
                    .output()
                    .map_err(err)?
                    .status;
                ensure(status.code().is_some_and(|c| c <= 1), || format!("{args:?} exited with {status}"))?;
                outputs.push(std::fs::read(&out).map_err(err)?);
            }
            ensure(outputs.windows(2).all(|w| w[0] == w[1]), || format!("{args:?} --format {format} differs across thread counts"))?;
            files += outputs.len();
        }
    }
    Ok(format!("{files} output files, identical per command across 1, 3 and 8 threads"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact gamma suite", gamma_suite),
        ("identity case", identity_case),
        ("stein-dirichlet identity", stein_identity),
        ("derivative estimators", derivative_estimators),
        ("scaling exponents", scaling_exponents),
        ("lipschitz-modulus probe", probe_sweep),
        ("main envelope", main_envelope),
        ("local time", local_time),
        ("determinism", determinism),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let start = Instant::now();
        let res = run();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {k} ({name}): PASS [{secs:.0}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k} ({name}): FAIL [{secs:.0}s] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
