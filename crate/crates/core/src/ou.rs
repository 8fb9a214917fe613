//! Ornstein–Uhlenbeck semigroup on the grid spaces `V^m` and the Stein
//! machinery built on it.
//!
//! `P_tau F(x) = E F(e^{-tau} x + beta_tau Y)` with `Y` the Brownian path
//! sampled on the grid of `x`. Derivatives of `P_tau F` are estimated by
//! Gaussian integration by parts (Hermite weights), never by differentiating
//! `F`, so non-smooth functionals are allowed everywhere.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::estimate::{replicate, McEstimate};
use crate::functional::PathFunctional;
use crate::gram::{cond_coeffs_with, gamma_matrix};
use crate::paths::{basis_h, BasisIndex, GridPath, IncrementLaw};
use crate::quadrature::{adaptive_gk_replicated, GaussLegendre};
use crate::rng::{SeededStream, StreamRng};
use crate::sobolev::SobolevIndex;

/// An OU time `tau >= 0` with `beta_tau = sqrt(1 - e^{-2 tau})` and `beta_{tau/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuTime {
    tau: f64,
    beta: f64,
    beta_half: f64,
}

fn beta_of(tau: f64) -> f64 {
    (-(-2.0 * tau).exp_m1()).sqrt()
}

impl OuTime {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || tau.is_infinite() {
            return domain(format!("OU time must be finite and >= 0, got {tau}"));
        }
        Ok(Self { tau, beta: beta_of(tau), beta_half: beta_of(0.5 * tau) })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn beta_half(&self) -> f64 {
        self.beta_half
    }
    pub fn decay(&self) -> f64 {
        (-self.tau).exp()
    }

    fn positive(&self, what: &'static str) -> Result<()> {
        if self.tau > 0.0 {
            Ok(())
        } else {
            Err(LabError::SingularTime(what))
        }
    }
}

/// Probabilists' Hermite polynomial `He_k(y)`.
pub fn hermite(k: i32, y: f64) -> Result<f64> {
    if k < 0 {
        return domain(format!("Hermite degree must be >= 0, got {k}"));
    }
    let (mut prev, mut cur) = (1.0, y);
    if k == 0 {
        return Ok(prev);
    }
    for j in 1..k {
        let next = y * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// i.i.d. standard normal basis coordinates and the Brownian path they define.
fn gaussian_coords(dim: usize, m: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..dim * m).map(|_| rng.sample(StandardNormal)).collect()
}

fn path_from(dim: usize, m: usize, coords: &[f64]) -> GridPath {
    GridPath::from_basis_coords(dim, m, coords, &vec![0.0; dim])
}

/// `sum_i c_i p_i` for paths on one grid.
fn combine(terms: &[(f64, &GridPath)]) -> GridPath {
    let (c0, p0) = terms[0];
    let mut out = p0.scaled(c0);
    for &(c, p) in &terms[1..] {
        debug_assert_eq!(p.m(), out.m());
        out.values_mut().iter_mut().zip(p.values()).for_each(|(o, v)| *o += c * v);
    }
    out
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return domain("reps must be >= 1");
    }
    Ok(())
}

/// `P_tau F(x)` with antithetic pairs `Y, -Y`.
pub fn ou_apply(f: &PathFunctional, x: &GridPath, t: OuTime, reps: usize, stream: &SeededStream) -> Result<McEstimate> {
    check_reps(reps)?;
    let base = x.scaled(t.decay());
    let samples = replicate(reps, stream, |s| {
        let y = path_from(x.dim(), x.m(), &gaussian_coords(x.dim(), x.m(), &mut s.rng()));
        0.5 * (f.eval(&combine(&[(1.0, &base), (t.beta, &y)])) + f.eval(&combine(&[(1.0, &base), (-t.beta, &y)])))
    });
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

/// `<grad^k P_tau F(x), h^{(x)k}>` for `k` in {1, 2} by the Hermite weight of
/// the coordinate of `Y` along `h`. The odd/even part of `F` under `Y -> -Y`
/// is used, and `F(e^{-tau} x)` is subtracted as a control variate for `k = 2`.
pub fn ou_derivative(
    f: &PathFunctional,
    x: &GridPath,
    t: OuTime,
    k: u32,
    h: &GridPath,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    check_reps(reps)?;
    t.positive("Hermite derivative estimator needs tau > 0")?;
    if !(k == 1 || k == 2) {
        return domain(format!("derivative order must be 1 or 2, got {k}"));
    }
    if h.dim() != x.dim() {
        return domain("direction dimension does not match the path");
    }
    let hn = h.cm_norm();
    if !(hn > 0.0) {
        return domain("direction must be nonzero in the Cameron-Martin norm");
    }
    if !x.m().is_multiple_of(h.m()) {
        return domain("direction must lie in V^m of the base path");
    }
    let unit = h.scaled(1.0 / hn);
    let base = x.scaled(t.decay());
    let f0 = f.eval(&base);
    let scale = (hn * t.decay() / t.beta).powi(k as i32);
    let samples = replicate(reps, stream, |s| {
        let y = path_from(x.dim(), x.m(), &gaussian_coords(x.dim(), x.m(), &mut s.rng()));
        let z = y.cm_inner(&unit).expect("same dimension");
        let fp = f.eval(&combine(&[(1.0, &base), (t.beta, &y)]));
        let fm = f.eval(&combine(&[(1.0, &base), (-t.beta, &y)]));
        scale * if k == 1 { 0.5 * (fp - fm) * z } else { (0.5 * (fp + fm) - f0) * (z * z - 1.0) }
    });
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

/// Two-copy representation of the second derivative:
/// `<grad^2 P_tau F(v), h (x) h> = e^{-3tau/2}/beta_{tau/2}^2 E[F(w) zeta_h(Y) zeta_h(Y')]`
/// with `w = e^{-tau} v + e^{-tau/2} beta_{tau/2} Y + beta_{tau/2} Y'`,
/// symmetrized over the four sign flips of `(Y, Y')`.
pub fn second_deriv_two_copy(
    f: &PathFunctional,
    v: &GridPath,
    t: OuTime,
    h: &GridPath,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    check_reps(reps)?;
    t.positive("two-copy estimator needs tau > 0")?;
    if h.dim() != v.dim() {
        return domain("direction dimension does not match the path");
    }
    let hn = h.cm_norm();
    if !(hn > 0.0) {
        return domain("direction must be nonzero in the Cameron-Martin norm");
    }
    if !v.m().is_multiple_of(h.m()) {
        return domain("direction must lie in V^m of the base path");
    }
    let unit = h.scaled(1.0 / hn);
    let base = v.scaled(t.decay());
    let (c1, c2) = ((-0.5 * t.tau).exp() * t.beta_half, t.beta_half);
    let scale = hn * hn * (-1.5 * t.tau).exp() / (t.beta_half * t.beta_half);
    let (d, m) = (v.dim(), v.m());
    let samples = replicate(reps, stream, |s| {
        let mut rng = s.rng();
        let y = path_from(d, m, &gaussian_coords(d, m, &mut rng));
        let yh = path_from(d, m, &gaussian_coords(d, m, &mut rng));
        let z = y.cm_inner(&unit).expect("same dimension") * yh.cm_inner(&unit).expect("same dimension");
        scale * z * mixed_difference(f, &base, c1, &y, c2, &yh)
    });
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

/// `(1/4) sum_{s, s'} s s' F(base + s c1 y + s' c2 yh)`.
fn mixed_difference(f: &PathFunctional, base: &GridPath, c1: f64, y: &GridPath, c2: f64, yh: &GridPath) -> f64 {
    let mut acc = 0.0;
    for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        acc += s1 * s2 * f.eval(&combine(&[(1.0, base), (s1 * c1, y), (s2 * c2, yh)]));
    }
    0.25 * acc
}

/// Single-draw estimator of `L P_tau F(x)`, with `L = -<x, grad> + Delta`:
/// `F(e^{-tau}x + beta Y)` weighted by `-(e^{-tau}/beta) <x, Y> + (e^{-tau}/beta)^2 (|Y|^2 - dim)`.
/// `xy = <x, Y>` and `yy = |Y|^2` are Cameron–Martin products.
struct GeneratorDraw {
    x: GridPath,
    y: GridPath,
    xy: f64,
    yy_centered: f64,
}

impl GeneratorDraw {
    fn new(x: GridPath, y_coords: &[f64]) -> Self {
        let y = path_from(x.dim(), x.m(), y_coords);
        let xy = x.cm_inner(&y).expect("same dimension");
        let yy_centered = y_coords.iter().map(|c| c * c).sum::<f64>() - y_coords.len() as f64;
        Self { x, y, xy, yy_centered }
    }

    fn eval(&self, f: &PathFunctional, t: OuTime) -> f64 {
        let r = t.decay() / t.beta;
        let base = self.x.scaled(t.decay());
        let fp = f.eval(&combine(&[(1.0, &base), (t.beta, &self.y)]));
        let fm = f.eval(&combine(&[(1.0, &base), (-t.beta, &self.y)]));
        let f0 = f.eval(&base);
        -r * self.xy * 0.5 * (fp - fm) + r * r * self.yy_centered * (0.5 * (fp + fm) - f0)
    }
}

fn check_grid(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return domain("grid sizes must be >= 1");
    }
    Ok(())
}

/// `f o pi^N`, or `f` itself when `N >= m`.
fn compose(f: &PathFunctional, m: usize, n: usize) -> Result<PathFunctional> {
    if n >= m {
        Ok(f.clone())
    } else {
        f.clone().projected(n)
    }
}

/// `E[L P_tau f_N(S^m)]` where `f_N = f o pi^N` and `S^m` is the walk with
/// increments from `law`. Both generator terms share the Gaussian draw.
pub fn generator_at(
    f: &PathFunctional,
    m: usize,
    n: usize,
    law: &IncrementLaw,
    t: OuTime,
    reps: usize,
    stream: &SeededStream,
) -> Result<McEstimate> {
    check_reps(reps)?;
    check_grid(m, n)?;
    t.positive("generator estimator needs tau > 0")?;
    let fnn = compose(f, m, n)?;
    let d = law.dim();
    let samples = replicate(reps, stream, |s| {
        let mut rng = s.rng();
        let x = crate::paths::walk_from_rng(m, law, &mut rng);
        let y = gaussian_coords(d, m, &mut rng);
        GeneratorDraw::new(x, &y).eval(&fnn, t)
    });
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

/// The two sums of the leave-one-out Taylor expansion of `E[L P_tau f_N(S^m)]`:
///
/// `term1 = -E sum_a sigma^2 (D_a(S^{-a}) - D_a(S))`,
/// `term2 = -E sum_a X_a^2 int_0^1 (D_a(S^{-a} + r X_a h_a) - D_a(S^{-a})) dr`,
///
/// with `D_a(u) = <grad^2 P_tau f_N(u), h_a (x) h_a>` and `S^{-a} = S - X_a h_a`.
/// Their sum equals the generator expectation when the increments have
/// identity covariance. All `D_a` evaluations of one replicate share one
/// Gaussian draw; the `r`-integral uses 8-point Gauss–Legendre.
pub fn taylor_decomposition_terms(
    f: &PathFunctional,
    m: usize,
    n: usize,
    law: &IncrementLaw,
    t: OuTime,
    reps: usize,
    stream: &SeededStream,
) -> Result<(McEstimate, McEstimate)> {
    check_reps(reps)?;
    check_grid(m, n)?;
    t.positive("Taylor terms need tau > 0")?;
    let fnn = compose(f, m, n)?;
    let d = law.dim();
    let sigma2 = law.coordinate_variance();
    let gl = GaussLegendre::new(8);
    let r2 = (t.decay() / t.beta).powi(2);
    let pairs = replicate(reps, stream, |s| {
        let mut rng = s.rng();
        let mut xs = vec![0.0; d * m];
        law.fill(&mut rng, &mut xs);
        let sx = path_from(d, m, &xs);
        let ys = gaussian_coords(d, m, &mut rng);
        let y = path_from(d, m, &ys);
        let d2 = |u: &GridPath, a: usize| -> f64 {
            let base = u.scaled(t.decay());
            let fp = fnn.eval(&combine(&[(1.0, &base), (t.beta, &y)]));
            let fm = fnn.eval(&combine(&[(1.0, &base), (-t.beta, &y)]));
            r2 * (0.5 * (fp + fm) - fnn.eval(&base)) * (ys[a] * ys[a] - 1.0)
        };
        let (mut t1, mut t2) = (0.0, 0.0);
        for a in 0..d * m {
            let ha = basis_h(BasisIndex::new(a % d + 1, a / d, m, d).expect("in range"), d);
            let loo = combine(&[(1.0, &sx), (-xs[a], &ha)]);
            let d_loo = d2(&loo, a);
            t1 -= sigma2 * (d_loo - d2(&sx, a));
            let integral: f64 = gl.on(0.0, 1.0).map(|(r, w)| w * (d2(&combine(&[(1.0, &loo), (r * xs[a], &ha)]), a) - d_loo)).sum();
            t2 -= xs[a] * xs[a] * integral;
        }
        (t1, t2)
    });
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((McEstimate::from_samples(&a, stream.root()), McEstimate::from_samples(&b, stream.root())))
}

/// Outcome of [`stein_dirichlet_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteinCheck {
    /// `E f_N(B^m) - E f_N(S^m)`
    pub lhs: McEstimate,
    /// smoothing term plus the truncated time integral
    pub rhs: McEstimate,
    /// `E[P_{tau0} f_N(S^m) - f_N(S^m)]`
    pub smoothing: McEstimate,
    /// `int_{tau0}^{tau_max} E[L P_tau f_N(S^m)] d tau`
    pub integral: McEstimate,
    /// certified bound on the integral beyond `tau_max`
    pub tail_bound: f64,
    /// Gauss–Kronrod error estimate of the time integral
    pub quad_error: f64,
    pub quad_panels: usize,
}

impl SteinCheck {
    /// `|lhs - rhs| <= k * combined s.e. + tail + quadrature error`.
    pub fn holds(&self, k: f64) -> bool {
        self.discrepancy() <= self.budget(k)
    }

    pub fn discrepancy(&self) -> f64 {
        (self.lhs.value - self.rhs.value).abs()
    }

    pub fn budget(&self, k: f64) -> f64 {
        k * self.lhs.combined_se(&self.rhs) + self.tail_bound + self.quad_error
    }
}

/// Stein–Dirichlet identity
/// `E f_N(B^m) - E f_N(S^m) = E[P_{tau0} f_N(S^m) - f_N(S^m)] + int_{tau0}^inf E[L P_tau f_N(S^m)] d tau`.
///
/// The left side is sampled directly. On the right, every replicate keeps one
/// walk and one Gaussian draw for all `tau` (common random numbers), the time
/// integral is adaptive Gauss–Kronrod on the replicate mean, and the standard
/// error comes from the per-replicate totals. The integral beyond `tau_max`
/// equals `E f_N(e^{-T} S + beta_T Y) - E f_N(Y)`; coupling the two `Y` bounds
/// it by `L (e^{-T} E|S|_inf + (1 - beta_T) E|Y|_inf)`, which needs a
/// Lipschitz constant.
pub fn stein_dirichlet_check(
    f: &PathFunctional,
    m: usize,
    n: usize,
    law: &IncrementLaw,
    tau0: f64,
    tau_max: f64,
    reps: usize,
    stream: &SeededStream,
) -> Result<SteinCheck> {
    if !(tau0 > 0.0) {
        return domain(format!("tau0 must be > 0, got {tau0}"));
    }
    if !(tau_max > tau0) || tau_max.is_infinite() {
        return domain("need tau0 < tau_max < inf");
    }
    if reps < 2 {
        return domain("reps must be >= 2");
    }
    check_grid(m, n)?;
    let fnn = compose(f, m, n)?;
    let lip = fnn.lipschitz.ok_or_else(|| LabError::Domain(format!("tail bound needs a Lipschitz functional, {} is not", fnn.name())))?;
    let d = law.dim();
    let seed = stream.root();

    let lhs_stream = stream.named("lhs");
    let lhs_samples = replicate(reps, &lhs_stream, |s| {
        let mut rng = s.rng();
        let b = crate::paths::brownian_from_rng(m, d, &mut rng);
        let w = crate::paths::walk_from_rng(m, law, &mut rng);
        fnn.eval(&b) - fnn.eval(&w)
    });
    let lhs = McEstimate::from_samples(&lhs_samples, seed);

    let rhs_stream = stream.named("rhs");
    let draws = replicate(reps, &rhs_stream, |s| {
        let mut rng = s.rng();
        let x = crate::paths::walk_from_rng(m, law, &mut rng);
        let y = gaussian_coords(d, m, &mut rng);
        GeneratorDraw::new(x, &y)
    });
    let t0 = OuTime::new(tau0)?;
    let smooth: Vec<f64> = draws
        .par_iter()
        .map(|g| {
            let base = g.x.scaled(t0.decay());
            0.5 * (fnn.eval(&combine(&[(1.0, &base), (t0.beta, &g.y)])) + fnn.eval(&combine(&[(1.0, &base), (-t0.beta, &g.y)])))
                - fnn.eval(&g.x)
        })
        .collect();
    let quad = adaptive_gk_replicated(tau0, tau_max, reps, 1e-5, 96, |tau, out| {
        let t = OuTime::new(tau).expect("tau in range");
        out.par_iter_mut().zip(&draws).for_each(|(o, g)| *o = g.eval(&fnn, t));
    });
    let totals: Vec<f64> = smooth.iter().zip(&quad.per_replicate).map(|(a, b)| a + b).collect();

    let tm = OuTime::new(tau_max)?;
    let sigma = law.coordinate_variance().sqrt();
    let scale = ((m * d) as f64).sqrt();
    let tail_bound = lip * (tm.decay() * scale * sigma + (1.0 - tm.beta) * scale);

    Ok(SteinCheck {
        lhs,
        rhs: McEstimate::from_samples(&totals, seed),
        smoothing: McEstimate::from_samples(&smooth, seed),
        integral: McEstimate::from_samples(&quad.per_replicate, seed),
        tail_bound,
        quad_error: quad.error,
        quad_panels: quad.intervals,
    })
}

/// Outcome of [`smoothing_error_check`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothingGap {
    /// `E[f(S^m) - P_{tau0} f(S^m)]`
    pub gap: McEstimate,
    /// `E|f(S^m) - f(e^{-tau0} S^m + beta_{tau0} Y)|`, which dominates `|gap|`
    pub pathwise: McEstimate,
    /// `||X||_p sqrt(1 - e^{-tau0})`, with `||X||_p = sqrt(d) (E|X_1|^p)^{1/p}`
    pub bound: f64,
}

/// Error made by replacing `f` with `P_{tau0} f` under the walk law.
pub fn smoothing_error_check(
    f: &PathFunctional,
    m: usize,
    law: &IncrementLaw,
    tau0: f64,
    p: f64,
    reps: usize,
    stream: &SeededStream,
) -> Result<SmoothingGap> {
    if !(tau0 > 0.0) {
        return domain(format!("tau0 must be > 0, got {tau0}"));
    }
    if !(p >= 1.0) {
        return domain("moment order p must be >= 1");
    }
    check_reps(reps)?;
    check_grid(m, 1)?;
    let t = OuTime::new(tau0)?;
    let d = law.dim();
    let pairs = replicate(reps, stream, |s| {
        let mut rng = s.rng();
        let x = crate::paths::walk_from_rng(m, law, &mut rng);
        let y = path_from(d, m, &gaussian_coords(d, m, &mut rng));
        let base = x.scaled(t.decay());
        let f0 = f.eval(&x);
        let dp = f0 - f.eval(&combine(&[(1.0, &base), (t.beta, &y)]));
        let dm = f0 - f.eval(&combine(&[(1.0, &base), (-t.beta, &y)]));
        (0.5 * (dp + dm), 0.5 * (dp.abs() + dm.abs()))
    });
    let (gap, pathwise): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let moment = law.coordinate_abs_moment(p).powf(1.0 / p) * law.coordinate_variance().sqrt();
    let bound = (d as f64).sqrt() * moment * (-(-tau0).exp_m1()).sqrt();
    Ok(SmoothingGap {
        gap: McEstimate::from_samples(&gap, stream.root()),
        pathwise: McEstimate::from_samples(&pathwise, stream.root()),
        bound,
    })
}

/// Outcome of [`lipschitz_modulus_probe`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeResult {
    /// signed difference of the two second derivatives
    pub delta: McEstimate,
    /// `|delta| / (e^{-5tau/2}/beta_{tau/2}^2 * eps * N^{eta-1/2} * (N/m)^{3/2})`
    pub bound_ratio: f64,
}

/// `<grad^2 P_tau (f o pi^N)(v + eps h_a) - grad^2 P_tau (f o pi^N)(v), h_a (x) h_a>`
/// for a scalar path, where `f` acts on the coarse grid `N`.
///
/// The two-copy representation is used with its Gaussian inputs reduced to
/// the coarse coordinates: `f o pi^N` only sees `G = coords of pi^N Y`, which is
/// `N(0, Gamma)`, so the weight `zeta_{h_a}(Y)` is replaced by its conditional
/// mean `C_a . G`. Both base points share every draw.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_modulus_probe(
    f: &PathFunctional,
    m: usize,
    n: usize,
    a: BasisIndex,
    eps: f64,
    t: OuTime,
    v: &GridPath,
    idx: SobolevIndex,
    reps: usize,
    stream: &SeededStream,
) -> Result<ProbeResult> {
    check_reps(reps)?;
    t.positive("probe needs tau > 0")?;
    if v.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: v.dim(), what: "lipschitz_modulus_probe" });
    }
    if v.m() != m || a.m() != m {
        return domain("v and the basis index must live on the grid m");
    }
    if !(eps.is_finite()) {
        return domain("eps must be finite");
    }
    let gamma = gamma_matrix(m, n)?;
    let (ld, ls) = gamma.cholesky()?;
    let coeffs = cond_coeffs_with(&gamma, a)?.row;
    let base = v.coarsen(n)?.scaled(t.decay());
    let shift = basis_h(a, 1).coarsen(n)?.scaled(t.decay() * eps);
    let moved = combine(&[(1.0, &base), (1.0, &shift)]);
    let (c1, c2) = ((-0.5 * t.tau).exp() * t.beta_half, t.beta_half);
    let scale = (-1.5 * t.tau).exp() / (t.beta_half * t.beta_half);
    let correlated = |rng: &mut StreamRng| -> Vec<f64> {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n).map(|i| ld[i] * z[i] + if i > 0 { ls[i - 1] * z[i - 1] } else { 0.0 }).collect()
    };
    let samples = replicate(reps, stream, |s| {
        let mut rng = s.rng();
        let g = correlated(&mut rng);
        let gh = correlated(&mut rng);
        let w: f64 = coeffs.iter().zip(&g).map(|(c, x)| c * x).sum();
        let wh: f64 = coeffs.iter().zip(&gh).map(|(c, x)| c * x).sum();
        let y = path_from(1, n, &g);
        let yh = path_from(1, n, &gh);
        scale * w * wh * (mixed_difference(f, &moved, c1, &y, c2, &yh) - mixed_difference(f, &base, c1, &y, c2, &yh))
    });
    let delta = McEstimate::from_samples(&samples, stream.root());
    let (nf, mf) = (n as f64, m as f64);
    let reference = (-2.5 * t.tau).exp() / (t.beta_half * t.beta_half) * eps.abs() * nf.powf(idx.eta() - 0.5) * (nf / mf).powf(1.5);
    let bound_ratio = if reference > 0.0 { delta.value.abs() / reference } else { 0.0 };
    Ok(ProbeResult { delta, bound_ratio })
}

/// `E f(S^m)` by direct sampling.
pub fn walk_expectation(f: &PathFunctional, m: usize, law: &IncrementLaw, reps: usize, stream: &SeededStream) -> Result<McEstimate> {
    check_reps(reps)?;
    let samples = replicate(reps, stream, |s| f.eval(&crate::paths::sample_walk(m, law, s)));
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 3.0).unwrap(), 1.0);
        assert_eq!(hermite(1, 0.0).unwrap(), 0.0);
        assert_eq!(hermite(2, 2.0).unwrap(), 3.0);
        assert_eq!(hermite(3, 2.0).unwrap(), 2.0);
        assert!(hermite(-1, 1.0).is_err());
    }

    #[test]
    fn ou_time() {
        let t = OuTime::new(0.0).unwrap();
        assert_eq!(t.beta(), 0.0);
        assert!(OuTime::new(50.0).unwrap().beta() <= 1.0);
        assert!(OuTime::new(-1.0).is_err());
        let t = OuTime::new(0.7).unwrap();
        assert!((t.beta().powi(2) + (-1.4f64).exp() - 1.0).abs() < 1e-15);
        assert!((t.beta_half().powi(2) + (-0.7f64).exp() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_time_is_rejected() {
        let x = GridPath::zeros(1, 2);
        let h = basis_h(BasisIndex::new(1, 0, 2, 1).unwrap(), 1);
        let t = OuTime::new(0.0).unwrap();
        let s = SeededStream::new(1);
        let f = PathFunctional::endpoint();
        assert!(matches!(ou_derivative(&f, &x, t, 1, &h, 10, &s), Err(LabError::SingularTime(_))));
        assert!(matches!(second_deriv_two_copy(&f, &x, t, &h, 10, &s), Err(LabError::SingularTime(_))));
    }
}
