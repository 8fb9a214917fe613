//! Distance estimation between the walk and Brownian motion: coupled pathwise
//! errors, one-dimensional Wasserstein-1 lower bounds, rate fits, and the
//! ladder experiments built from them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{domain, LabError, Result};
use crate::estimate::{replicate, McEstimate};
use crate::functional::{FunctionalKind, PathFunctional};
use crate::paths::{
    brownian_from_rng, local_time_at_one, reflection_sup_distance, sample_brownian, sample_walk, walk_from_rng, GridPath, IncrementLaw,
};
use crate::rng::SeededStream;
use crate::sobolev::{norm_sup, norm_value, QuadratureSpec, SobolevIndex};

/// Order of the moment taken of a norm: `p` for finite indices, 2 for the sup norm.
fn moment_order(idx: SobolevIndex) -> f64 {
    if idx.is_sup() {
        2.0
    } else {
        idx.p()
    }
}

fn path_norm(path: &GridPath, idx: SobolevIndex, quad: QuadratureSpec) -> f64 {
    if idx.is_sup() {
        norm_sup(path)
    } else {
        norm_value(path, idx, quad)
    }
}

/// `(E Z)^{1/p}` from samples of `Z = |.|^p`, with a delta-method standard error.
pub fn root_moment(powers: &[f64], p: f64, seed: u64) -> McEstimate {
    let e = McEstimate::from_samples(powers, seed);
    if e.value <= 0.0 {
        return McEstimate { value: 0.0, std_error: 0.0, reps: e.reps, seed };
    }
    let value = e.value.powf(1.0 / p);
    McEstimate { value, std_error: value * e.std_error / (p * e.value), reps: e.reps, seed }
}

/// `||x - pi^N x||` in the norm of `idx`.
pub fn coupled_gap(path: &GridPath, n: usize, idx: SobolevIndex, quad: QuadratureSpec) -> Result<f64> {
    if n == 0 || n > path.m() {
        return domain("coupled_gap needs 1 <= N <= m");
    }
    if n == path.m() {
        return Ok(0.0);
    }
    let e = path.sub(&path.coarsen(n)?)?;
    Ok(path_norm(&e, idx, quad))
}

/// `E[||S^m - pi^N S^m||^p]^{1/p}` in the norm of `idx` (`p = 2` moment for
/// the sup norm), walk and coarsening coupled.
pub fn projection_error(
    m: usize,
    n: usize,
    law: &IncrementLaw,
    idx: SobolevIndex,
    quad: QuadratureSpec,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    if reps == 0 || n == 0 || n > m {
        return domain("projection_error needs reps >= 1 and 1 <= N <= m");
    }
    let p = moment_order(idx);
    if n == m {
        return Ok(McEstimate::exact(0.0, reps, stream.root()));
    }
    let powers = replicate(reps, stream, |s| coupled_gap(&sample_walk(m, law, s), n, idx, quad).expect("1 <= N < m").powf(p));
    Ok(root_moment(&powers, p, stream.root()))
}

/// `E[||B^N - B^{m_fine}||^p]^{1/p}` with `B^N` the coarsening of the same
/// fine Brownian path; the fine path stands in for `B`.
pub fn interpolation_error(
    n: usize,
    m_fine: usize,
    idx: SobolevIndex,
    quad: QuadratureSpec,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    if reps == 0 || n == 0 {
        return domain("interpolation_error needs reps >= 1 and N >= 1");
    }
    if n == m_fine {
        return Ok(McEstimate::exact(0.0, reps, stream.root()));
    }
    if !m_fine.is_multiple_of(n) || m_fine < 64 * n {
        return domain(format!("need N | m_fine and m_fine >= 64 N, got N = {n}, m_fine = {m_fine}"));
    }
    let p = moment_order(idx);
    let powers = replicate(reps, stream, |s| coupled_gap(&sample_brownian(m_fine, 1, s), n, idx, quad).expect("1 <= N < m_fine").powf(p));
    Ok(root_moment(&powers, p, stream.root()))
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Wasserstein-1 distance between two empirical laws, `int |F_a - F_b|`.
pub fn scalar_w1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::EmptyInput("scalar_w1 needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return domain("scalar_w1 samples must be finite");
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
    }
    Ok(acc)
}

/// Continuous reference laws with closed-form CDF primitives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReferenceLaw {
    /// `N(0, sd^2)`
    Normal { sd: f64 },
    /// law of `sd * |Z|`
    HalfNormal { sd: f64 },
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `int_x^inf (1 - Phi)`.
fn normal_upper(x: f64) -> f64 {
    phi(x) - x * big_phi(-x)
}

/// `int_{-inf}^x Phi`.
fn normal_lower(x: f64) -> f64 {
    x * big_phi(x) + phi(x)
}

impl ReferenceLaw {
    fn sd(&self) -> f64 {
        match *self {
            ReferenceLaw::Normal { sd } | ReferenceLaw::HalfNormal { sd } => sd,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ReferenceLaw::Normal { .. } => 0.0,
            ReferenceLaw::HalfNormal { sd } => sd * (2.0 / std::f64::consts::PI).sqrt(),
        }
    }

    /// CDF of the law at unit scale.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::Normal { .. } => big_phi(x),
            ReferenceLaw::HalfNormal { .. } => (2.0 * big_phi(x) - 1.0).max(0.0),
        }
    }

    fn quantile(&self, c: f64) -> f64 {
        let z = Normal::standard();
        match self {
            ReferenceLaw::Normal { .. } => z.inverse_cdf(c),
            ReferenceLaw::HalfNormal { .. } => z.inverse_cdf(0.5 + 0.5 * c),
        }
    }

    /// `int_{-inf}^x G` for the unit-scale CDF `G`.
    fn lower(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::Normal { .. } => normal_lower(x),
            ReferenceLaw::HalfNormal { .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    2.0 * (normal_lower(x) - phi(0.0)) - x
                }
            }
        }
    }

    /// `int_x^inf (1 - G)` for the unit-scale CDF `G`.
    fn upper(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::Normal { .. } => normal_upper(x),
            ReferenceLaw::HalfNormal { .. } => {
                if x <= 0.0 {
                    -x + 2.0 * normal_upper(0.0)
                } else {
                    2.0 * normal_upper(x)
                }
            }
        }
    }

    /// `int_a^b |G - c|` on a bounded interval.
    fn abs_gap(&self, a: f64, b: f64, c: f64) -> f64 {
        let signed = |lo: f64, hi: f64| self.lower(hi) - self.lower(lo) - c * (hi - lo);
        let q = self.quantile(c).clamp(a, b);
        // G - c is nonpositive on [a, q] and nonnegative on [q, b]
        (-signed(a, q)).max(0.0) + signed(q, b).max(0.0)
    }

    /// Exact `W1(empirical law of samples, self)`.
    pub fn w1_to(&self, samples: &[f64]) -> Result<f64> {
        if samples.is_empty() {
            return Err(LabError::EmptyInput("w1_to needs a nonempty sample"));
        }
        let sd = self.sd();
        if !(sd > 0.0) {
            return domain("reference scale must be > 0");
        }
        let xs: Vec<f64> = sorted(samples).into_iter().map(|x| x / sd).collect();
        if xs.iter().any(|x| !x.is_finite()) {
            return domain("samples must be finite");
        }
        let n = xs.len() as f64;
        let mut acc = self.lower(xs[0]) + self.upper(xs[xs.len() - 1]);
        let mut k = 0;
        while k < xs.len() {
            let mut j = k;
            while j < xs.len() && xs[j] == xs[k] {
                j += 1;
            }
            if j < xs.len() {
                acc += self.abs_gap(xs[k], xs[j], j as f64 / n);
            }
            k = j;
        }
        Ok(acc * sd)
    }

    /// Exact `W1` between the unit-scale `self` and an atomic law.
    pub fn w1_to_atoms(&self, atoms: &[f64], weights: &[f64]) -> Result<f64> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(LabError::EmptyInput("w1_to_atoms needs matching atoms and weights"));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.iter().cloned().zip(weights.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = weights.iter().sum();
        let sd = self.sd();
        let mut acc = self.lower(pairs[0].0 / sd) + self.upper(pairs[pairs.len() - 1].0 / sd);
        let mut cum = 0.0;
        for w in pairs.windows(2) {
            cum += w[0].1 / total;
            acc += self.abs_gap(w[0].0 / sd, w[1].0 / sd, cum.min(1.0));
        }
        Ok(acc * sd)
    }

    /// Draw from the unit-scale reference (used to size the Monte Carlo floor).
    fn sample(&self, z: f64) -> f64 {
        match self {
            ReferenceLaw::Normal { sd } => sd * z,
            ReferenceLaw::HalfNormal { sd } => sd * z.abs(),
        }
    }
}

/// How the Brownian side of a lower bound is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KrReference {
    /// exact law when one is known for the functional, otherwise simulation on `m_fine`
    ExactOrFine { m_fine: usize },
    /// always simulate on `m_fine`
    Fine { m_fine: usize },
}

/// The known law of `phi(B)` for scalar Brownian motion.
pub fn exact_reference(f: &PathFunctional) -> Option<ReferenceLaw> {
    match &f.kind {
        FunctionalKind::Endpoint { .. } => Some(ReferenceLaw::Normal { sd: 1.0 }),
        FunctionalKind::AbsEndpoint { .. } | FunctionalKind::RunningMax { .. } | FunctionalKind::LocalTimeAtOne => {
            Some(ReferenceLaw::HalfNormal { sd: 1.0 })
        }
        FunctionalKind::Integral { .. } => Some(ReferenceLaw::Normal { sd: (1.0 / 3.0f64).sqrt() }),
        _ => None,
    }
}

/// A lower bound on the path-space KR distance from one functional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrBound {
    pub functional: String,
    /// W1 between the laws of `phi(S^m)` and `phi(B)`, divided by the Lipschitz constant
    pub estimate: McEstimate,
    /// the same statistic for a sample drawn from the reference itself
    pub noise_floor: f64,
    pub exact_reference: bool,
}

const BATCHES: usize = 10;

/// Standard error of a statistic from its spread over `BATCHES` disjoint
/// batches: a batch value has about `BATCHES` times the variance of the
/// full-sample value, so `sd(batch) / sqrt(BATCHES)` estimates the latter.
fn batch_se(samples: &[f64], stat: impl Fn(&[f64]) -> f64) -> f64 {
    let size = samples.len() / BATCHES;
    if size < 2 {
        return 0.0;
    }
    let vals: Vec<f64> = samples.chunks_exact(size).take(BATCHES).map(&stat).collect();
    McEstimate::from_samples(&vals, 0).std_error
}

/// Scalar-functional lower bounds `W1(phi(S^m), phi(B)) / Lip(phi)`.
pub fn kr_lower_bound(
    m: usize,
    law: &IncrementLaw,
    functionals: &[PathFunctional],
    reps: usize,
    stream: &SeededStream,
    reference: KrReference,
) -> Result<Vec<KrBound>> {
    if reps < 2 * BATCHES {
        return domain(format!("kr_lower_bound needs reps >= {}", 2 * BATCHES));
    }
    if law.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: law.dim(), what: "kr_lower_bound" });
    }
    let paths = replicate(reps, &stream.named("walk"), |s| sample_walk(m, law, s));
    let m_fine = match reference {
        KrReference::ExactOrFine { m_fine } | KrReference::Fine { m_fine } => m_fine,
    };
    let mut out = Vec::with_capacity(functionals.len());
    let mut fine: Option<Vec<GridPath>> = None;
    for f in functionals {
        let lip = match f.lipschitz {
            Some(l) if l > 0.0 => l,
            _ => return domain(format!("{} has no positive Lipschitz constant", f.name())),
        };
        let vals: Vec<f64> = paths.iter().map(|p| f.eval(p) / lip).collect();
        let exact = match reference {
            KrReference::ExactOrFine { .. } => exact_reference(f),
            KrReference::Fine { .. } => None,
        };
        let bound = if let Some(r) = exact {
            let r = scale_reference(r, lip);
            let floor_draws = replicate(reps, &stream.named("floor"), |s| {
                use rand::Rng;
                r.sample(s.rng().sample(rand_distr::StandardNormal))
            });
            KrBound {
                functional: f.name(),
                estimate: McEstimate {
                    value: r.w1_to(&vals)?,
                    std_error: batch_se(&vals, |b| r.w1_to(b).unwrap_or(f64::NAN)),
                    reps,
                    seed: stream.root(),
                },
                noise_floor: r.w1_to(&floor_draws)?,
                exact_reference: true,
            }
        } else {
            if m_fine < m {
                return domain("fine reference grid must be at least m");
            }
            let fp = fine.get_or_insert_with(|| replicate(reps, &stream.named("fine"), |s| brownian_from_rng(m_fine, 1, &mut s.rng())));
            let refs: Vec<f64> = fp.iter().map(|p| f.eval(p) / lip).collect();
            let half = reps / 2;
            KrBound {
                functional: f.name(),
                estimate: McEstimate {
                    value: scalar_w1(&vals, &refs)?,
                    std_error: {
                        let size = reps / BATCHES;
                        let v: Vec<f64> = (0..BATCHES)
                            .map(|b| {
                                let r = b * size..(b + 1) * size;
                                scalar_w1(&vals[r.clone()], &refs[r]).unwrap_or(f64::NAN)
                            })
                            .collect();
                        McEstimate::from_samples(&v, 0).std_error
                    },
                    reps,
                    seed: stream.root(),
                },
                noise_floor: scalar_w1(&refs[..half], &refs[half..])?,
                exact_reference: false,
            }
        };
        out.push(bound);
    }
    Ok(out)
}

/// Reference law of `phi(B) / lip` given the law of `phi(B)`.
fn scale_reference(r: ReferenceLaw, lip: f64) -> ReferenceLaw {
    match r {
        ReferenceLaw::Normal { sd } => ReferenceLaw::Normal { sd: sd / lip },
        ReferenceLaw::HalfNormal { sd } => ReferenceLaw::HalfNormal { sd: sd / lip },
    }
}

/// Least-squares fit of `ln y = intercept + slope ln x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    pub slope_se: f64,
}

impl RateFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return domain("rate_fit needs at least 3 points");
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return domain("rate_fit sizes must be strictly increasing");
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0) || !y.is_finite() || !x.is_finite()) {
        return domain("rate_fit needs positive finite sizes and values");
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit {
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        residual_norm: rss.sqrt(),
        slope_se: (rss / (n - 2.0) / sxx).sqrt(),
    })
}

/// Envelope `value <= c * rate` with `c` calibrated at the first point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    /// `value_i / (c * rate_i)`
    pub ratios: Vec<f64>,
    pub holds: bool,
}

/// Calibrates `c` on the first point and checks `v_i <= c r_i + k se_i` on the rest.
pub fn envelope_check(values: &[McEstimate], rates: &[f64], k: f64) -> Result<Envelope> {
    if values.is_empty() || values.len() != rates.len() {
        return Err(LabError::EmptyInput("envelope_check needs matching values and rates"));
    }
    if rates.iter().any(|r| !(*r > 0.0)) {
        return domain("envelope rates must be positive");
    }
    let c = values[0].value / rates[0];
    let ratios = values.iter().zip(rates).map(|(v, r)| if c > 0.0 { v.value / (c * r) } else { 0.0 }).collect();
    let holds = values.iter().zip(rates).all(|(v, r)| v.value <= c * r + k * v.std_error);
    Ok(Envelope { c, ratios, holds })
}

/// `v_{i+1} <= v_i + k * combined s.e.` along a ladder.
pub fn monotone_within(values: &[McEstimate], k: f64) -> bool {
    values.windows(2).all(|w| w[1].value <= w[0].value + k * w[0].combined_se(&w[1]))
}

/// `max(ln m, 1)`.
pub fn log_factor(m: usize) -> f64 {
    (m as f64).ln().max(1.0)
}

/// Smallest `N` with `N^3 >= m`.
pub fn cube_root_rule(m: usize) -> usize {
    let mut n = (m as f64).cbrt().round() as usize;
    while n.pow(3) < m {
        n += 1;
    }
    while n > 1 && (n - 1).pow(3) >= m {
        n -= 1;
    }
    n.max(1)
}

/// Parameters echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub ladder: Vec<usize>,
    pub n_values: Vec<usize>,
    pub eta: Option<f64>,
    pub p: Option<f64>,
    pub law: String,
    pub reps: usize,
    pub seed: u64,
}

/// One measured quantity at one ladder point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    pub m: usize,
    pub n: usize,
    pub estimate: McEstimate,
    /// `c * rate(m)` for the curve's calibrated envelope
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tag: String,
    pub params: ExperimentParams,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<(String, RateFit)>,
    pub checks: Vec<Check>,
    /// seconds; not serialized so that outputs are reproducible
    #[serde(skip)]
    pub wall_time: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn curve(&self, quantity: &str) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.quantity == quantity).collect()
    }
}

fn check_ladder(ladder: &[usize], min_len: usize) -> Result<()> {
    if ladder.len() < min_len {
        return domain(format!("ladder needs at least {min_len} sizes"));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] == 0 {
        return domain("ladder must be positive and strictly increasing");
    }
    Ok(())
}

/// Adds envelope, monotonicity and (optionally) slope checks for each curve.
fn finish_curves(
    report: &mut ExperimentReport,
    quantities: &[String],
    rate: impl Fn(usize) -> f64,
    slope: Option<(&str, f64, f64)>,
) -> Result<()> {
    for q in quantities {
        let rows = report.curve(q);
        let values: Vec<McEstimate> = rows.iter().map(|r| r.estimate).collect();
        let rates: Vec<f64> = rows.iter().map(|r| rate(r.m)).collect();
        let env = envelope_check(&values, &rates, 2.0)?;
        let mono = monotone_within(&values, 2.0);
        let fit = if values.len() >= 3 && values.iter().all(|v| v.value > 0.0) {
            Some(rate_fit(&rows.iter().map(|r| (r.m as f64, r.estimate.value)).collect::<Vec<_>>())?)
        } else {
            None
        };
        report.checks.push(Check {
            name: format!("{q}: envelope"),
            passed: env.holds,
            detail: format!("c = {:.6e}, ratios {:?}", env.c, env.ratios),
        });
        report.checks.push(Check {
            name: format!("{q}: nonincreasing within 2 s.e."),
            passed: mono,
            detail: format!("{:?}", values.iter().map(|v| v.value).collect::<Vec<_>>()),
        });
        let c = env.c;
        for row in report.rows.iter_mut().filter(|r| &r.quantity == q) {
            row.envelope = c * rate(row.m);
        }
        if let Some(fit) = fit {
            if let Some((prefix, target, tol)) = slope {
                if q.starts_with(prefix) {
                    report.checks.push(Check {
                        name: format!("{q}: slope in m"),
                        passed: (fit.slope - target).abs() <= tol,
                        detail: format!("slope {:.4} target {target:.4} +- {tol}", fit.slope),
                    });
                }
            }
            report.fits.push((q.clone(), fit));
        }
    }
    Ok(())
}

/// Rate ladder: for each `m`, with `N = ceil(m^{1/3})`, the projection
/// error of the walk (A1), the interpolation error of Brownian motion on grid
/// `N` against grid `64 N` (A3), and scalar-functional KR lower bounds, each
/// against the envelope `c m^{-1/6 + eta/3} max(ln m, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn donsker_rate_experiment(
    ladder: &[usize],
    law: &IncrementLaw,
    idx: SobolevIndex,
    quad: QuadratureSpec,
    reps: usize,
    kr_reps: usize,
    stream: &SeededStream,
) -> Result<ExperimentReport> {
    check_ladder(ladder, 3)?;
    if law.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: law.dim(), what: "donsker_rate_experiment" });
    }
    let n_values: Vec<usize> = ladder.iter().map(|&m| cube_root_rule(m)).collect();
    let mut report = ExperimentReport {
        tag: "rate".into(),
        params: ExperimentParams {
            ladder: ladder.to_vec(),
            n_values: n_values.clone(),
            eta: Some(idx.eta()),
            p: Some(idx.p()),
            law: law.name().into(),
            reps,
            seed: stream.root(),
        },
        rows: Vec::new(),
        fits: Vec::new(),
        checks: Vec::new(),
        wall_time: 0.0,
    };
    let functionals = [PathFunctional::endpoint(), PathFunctional::running_max(), PathFunctional::integral(), PathFunctional::sup_norm()];
    let m_top = *ladder.last().expect("nonempty");
    for (&m, &n) in ladder.iter().zip(&n_values) {
        let s = stream.named("rate").child(m as u64);
        let a1 = projection_error(m, n, law, idx, quad, reps, &s.named("A1"))?;
        let a3 = interpolation_error(n, 64 * n, idx, quad, reps, &s.named("A3"))?;
        report.rows.push(ReportRow { quantity: "A1".into(), m, n, estimate: a1, envelope: 0.0 });
        report.rows.push(ReportRow { quantity: "A3".into(), m, n, estimate: a3, envelope: 0.0 });
        let kr = kr_lower_bound(m, law, &functionals, kr_reps, &s.named("kr"), KrReference::ExactOrFine { m_fine: 4 * m_top })?;
        for b in kr {
            report.rows.push(ReportRow { quantity: format!("kr:{}", b.functional), m, n, estimate: b.estimate, envelope: 0.0 });
        }
    }
    let mut quantities: Vec<String> = vec!["A1".into(), "A3".into()];
    quantities.extend(functionals.iter().map(|f| format!("kr:{}", f.name())));
    let expo = -1.0 / 6.0 + idx.eta() / 3.0;
    let target = -(0.5 - idx.eta()) / 3.0;
    finish_curves(&mut report, &quantities, |m| (m as f64).powf(expo) * log_factor(m), Some(("A", target, 0.1)))?;
    Ok(report)
}

/// Local time at zero of the reflected walk against the half-normal law of
/// `L_0(1)`: mean, exact W1 for each ladder size, an envelope
/// `c m^{-1/6} max(ln m, 1)`, and a spot check of `|R(x) - R(y)|_inf <= 2 |x - y|_inf`.
pub fn local_time_experiment(ladder: &[usize], law: &IncrementLaw, reps: usize, stream: &SeededStream) -> Result<ExperimentReport> {
    if law.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: law.dim(), what: "local_time_experiment" });
    }
    check_ladder(ladder, 3)?;
    if reps < 2 * BATCHES {
        return domain(format!("local_time_experiment needs reps >= {}", 2 * BATCHES));
    }
    let half_normal = ReferenceLaw::HalfNormal { sd: 1.0 };
    let mut report = ExperimentReport {
        tag: "localtime".into(),
        params: ExperimentParams {
            ladder: ladder.to_vec(),
            n_values: Vec::new(),
            eta: None,
            p: None,
            law: law.name().into(),
            reps,
            seed: stream.root(),
        },
        rows: Vec::new(),
        fits: Vec::new(),
        checks: Vec::new(),
        wall_time: 0.0,
    };
    let limit = half_normal.mean();
    for &m in ladder {
        let s = stream.named("localtime").child(m as u64);
        let lt = replicate(reps, &s, |r| local_time_at_one(&sample_walk(m, law, r)));
        let mean = McEstimate::from_samples(&lt, stream.root());
        let w1 = McEstimate {
            value: half_normal.w1_to(&lt)?,
            std_error: batch_se(&lt, |b| half_normal.w1_to(b).unwrap_or(f64::NAN)),
            reps,
            seed: stream.root(),
        };
        report.rows.push(ReportRow { quantity: "mean".into(), m, n: m, estimate: mean, envelope: limit });
        report.rows.push(ReportRow { quantity: "W1".into(), m, n: m, estimate: w1, envelope: 0.0 });
    }
    finish_curves(&mut report, &["W1".to_string()], |m| (m as f64).powf(-1.0 / 6.0) * log_factor(m), None)?;
    let last = report.curve("mean").last().map(|r| r.estimate).expect("nonempty ladder");
    report.checks.push(Check {
        name: "mean at largest m matches sqrt(2/pi)".into(),
        passed: last.agrees_with(limit, 3.0, 0.0),
        detail: format!("{:.6} +- {:.6} vs {limit:.6}", last.value, last.std_error),
    });
    let lip_ok = replicate(200, &stream.named("reflection"), |s| {
        let mut rng = s.rng();
        let m = ladder[0];
        let x = walk_from_rng(m, law, &mut rng);
        let y = brownian_from_rng(m, 1, &mut rng);
        let lhs = reflection_sup_distance(&x, &y).expect("scalar paths");
        let rhs = x.values().iter().zip(y.values()).fold(0.0, |a: f64, (u, v)| a.max((u - v).abs()));
        lhs <= 2.0 * rhs + 1e-12
    });
    report.checks.push(Check {
        name: "reflection is 2-Lipschitz in sup norm".into(),
        passed: lip_ok.iter().all(|&b| b),
        detail: format!("{} random pairs", lip_ok.len()),
    });
    Ok(report)
}

/// One lag of [`increment_modulus_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusPoint {
    pub lag: f64,
    /// `(E |(pi^N S)_{s,t} - S_{s,t}|^p)^{1/p}`, averaged over windows `[s, s + lag]`
    pub moment: McEstimate,
}

/// Increment error of the coarsened walk. For each lag (a multiple of `1/m`)
/// the `p`-th power of `|e(s + lag) - e(s)|`, `e = pi^N S - S`, is averaged
/// over all grid windows of the replicate, then over replicates.
pub fn increment_modulus_check(
    m: usize,
    n: usize,
    law: &IncrementLaw,
    p: f64,
    lags: &[f64],
    reps: usize,
    stream: &SeededStream,
) -> Result<Vec<ModulusPoint>> {
    if n == 0 || n >= m || !m.is_multiple_of(n) {
        return domain("increment_modulus_check needs N < m and N | m");
    }
    if law.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: law.dim(), what: "increment_modulus_check" });
    }
    if !(p >= 1.0) || reps == 0 {
        return domain("need p >= 1 and reps >= 1");
    }
    let mut ks = Vec::with_capacity(lags.len());
    for &lag in lags {
        let k = (lag * m as f64).round() as usize;
        if k == 0 || k > m || (k as f64 - lag * m as f64).abs() > 1e-9 {
            return domain(format!("lag {lag} must be a positive multiple of 1/m within [0, 1]"));
        }
        ks.push(k);
    }
    let per_rep = replicate(reps, stream, |s| {
        let w = sample_walk(m, law, s);
        let e = w.coarsen(n).expect("n >= 1").refine(m / n).sub(&w).expect("same grid");
        let ev = e.values();
        ks.iter().map(|&k| (0..=m - k).map(|j| (ev[j + k] - ev[j]).abs().powf(p)).sum::<f64>() / (m - k + 1) as f64).collect::<Vec<f64>>()
    });
    Ok(lags
        .iter()
        .enumerate()
        .map(|(i, &lag)| {
            let col: Vec<f64> = per_rep.iter().map(|r| r[i]).collect();
            ModulusPoint { lag, moment: root_moment(&col, p, stream.root()) }
        })
        .collect())
}

/// `(E |(pi^N S)_{s,t} - S_{s,t}|^p)^{1/p}` for a single pair `s <= t`.
pub fn increment_gap_at(
    m: usize,
    n: usize,
    law: &IncrementLaw,
    p: f64,
    s: f64,
    t: f64,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return domain("need 0 <= s <= t <= 1");
    }
    if n == 0 || n > m || law.dim() != 1 || !(p >= 1.0) || reps == 0 {
        return domain("need 1 <= N <= m, d = 1, p >= 1 and reps >= 1");
    }
    let powers = replicate(reps, stream, |r| {
        let w = sample_walk(m, law, r);
        let c = w.coarsen(n).expect("n >= 1");
        let at = |g: &GridPath, x: f64| g.eval(x).expect("in [0,1]")[0];
        ((at(&c, t) - at(&c, s)) - (at(&w, t) - at(&w, s))).abs().powf(p)
    });
    Ok(root_moment(&powers, p, stream.root()))
}
