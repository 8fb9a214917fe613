//! Fractional Sobolev norms `W_{eta,p}`, `W_{1,p}` and the uniform norm of
//! piecewise-linear paths.
//!
//! The Gagliardo double integral is split along the path's cells: same-cell
//! blocks and adjacent blocks are reduced to closed forms or one-dimensional
//! integrals, and everything else is bracketed by branch-and-bound over a
//! segment tree of bounding boxes, refined until the bracket is within the
//! requested relative tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::paths::{GridPath, Polyline};
use crate::quadrature::GaussLegendre;

/// A pair `(eta, p)`: either in the admissible set `0 < eta - 1/p < 1/2`, the
/// uniform-norm sentinel `(0, inf)`, or (through [`SobolevIndex::general`]) any
/// finite pair for which the norm is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    eta: f64,
    p: f64,
}

/// Checks membership in the admissible set or the uniform sentinel.
pub fn validate_index(eta: f64, p: f64) -> Result<SobolevIndex> {
    let fail = |violated: &str| Err(LabError::Admissibility { eta, p, violated: violated.to_string() });
    if p == f64::INFINITY {
        if eta == 0.0 {
            return Ok(SobolevIndex { eta, p });
        }
        return fail("p = inf requires eta = 0");
    }
    if !(p >= 1.0) || !p.is_finite() {
        return fail("p >= 1");
    }
    if !eta.is_finite() {
        return fail("eta finite");
    }
    let gap = eta - 1.0 / p;
    if !(gap > 0.0) {
        return fail("0 < eta - 1/p");
    }
    if !(gap < 0.5) {
        return fail("eta - 1/p < 1/2");
    }
    Ok(SobolevIndex { eta, p })
}

impl SobolevIndex {
    /// Any `0 < eta < 1`, `1 <= p < inf`; the double integral is finite for
    /// piecewise-linear paths in this whole range.
    pub fn general(eta: f64, p: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(LabError::Admissibility { eta, p, violated: "0 < eta < 1".into() });
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(LabError::Admissibility { eta, p, violated: "1 <= p < inf".into() });
        }
        Ok(Self { eta, p })
    }

    pub fn sup() -> Self {
        Self { eta: 0.0, p: f64::INFINITY }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn is_sup(&self) -> bool {
        self.p.is_infinite()
    }

    /// `eta - 1/p`.
    pub fn gap(&self) -> f64 {
        self.eta - 1.0 / self.p
    }

    /// Kernel exponent `1 + p*eta`.
    fn gamma(&self) -> f64 {
        1.0 + self.p * self.eta
    }
}

/// Quadrature controls for [`norm_eta_p`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss points per direction on cell blocks.
    pub points_per_cell: usize,
    /// Adjacent-cell blocks integrate on `2^depth` panels per smooth piece.
    pub diagonal_depth: usize,
    /// Target relative error of the norm.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { points_per_cell: 6, diagonal_depth: 2, rel_tol: 1e-4 }
    }
}

impl QuadratureSpec {
    pub fn new(points_per_cell: usize, diagonal_depth: usize, rel_tol: f64) -> Result<Self> {
        if points_per_cell < 2 {
            return domain("points per cell must be >= 2");
        }
        if !(rel_tol > 0.0) {
            return domain("tolerance must be > 0");
        }
        Ok(Self { points_per_cell, diagonal_depth, rel_tol })
    }
}

/// Norm value with its a-posteriori error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub error: f64,
}

/// `d`-dimensional piecewise-linear function on increasing knots.
#[derive(Debug, Clone)]
pub struct Piecewise {
    dim: usize,
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Piecewise {
    pub fn new(dim: usize, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || knots.len() < 2 || values.len() != knots.len() * dim {
            return domain("piecewise path needs d >= 1, >= 2 knots and d values per knot");
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("knots must be strictly increasing");
        }
        Ok(Self { dim, knots, values })
    }

    pub fn from_grid(path: &GridPath) -> Self {
        let m = path.m() as f64;
        Self { dim: path.dim(), knots: (0..=path.m()).map(|i| i as f64 / m).collect(), values: path.values().to_vec() }
    }

    pub fn from_polyline(p: &Polyline) -> Self {
        Self { dim: 1, knots: p.knots.clone(), values: p.values.clone() }
    }

    fn cells(&self) -> usize {
        self.knots.len() - 1
    }

    fn vertex(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    fn width(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    /// Slope of cell `i` written into `out`.
    fn slope(&self, i: usize, out: &mut [f64]) {
        let h = self.width(i);
        let (a, b) = (self.vertex(i), self.vertex(i + 1));
        for k in 0..self.dim {
            out[k] = (b[k] - a[k]) / h;
        }
    }
}

/// `x^p` with an integer fast path.
#[derive(Clone, Copy)]
struct Power {
    p: f64,
    int: Option<i32>,
}

impl Power {
    fn new(p: f64) -> Self {
        let int = (p.fract() == 0.0 && p.abs() <= 64.0).then_some(p as i32);
        Self { p, int }
    }

    #[inline]
    fn of(&self, x: f64) -> f64 {
        match self.int {
            Some(k) => x.powi(k),
            None => x.powf(self.p),
        }
    }
}

fn euclid(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `max_t |f(t)|` over vertices (attained there for piecewise-affine paths).
pub fn norm_sup(path: &GridPath) -> f64 {
    (0..=path.m()).map(|i| euclid(path.vertex(i))).fold(0.0, f64::max)
}

/// `(int |f|^p + int |f'|^p)^{1/p}`.
pub fn norm_w1p(path: &GridPath, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return domain("W_{1,p} needs 1 <= p < inf");
    }
    let f = Piecewise::from_grid(path);
    let pw = Power::new(p);
    let gl = GaussLegendre::new(gauss_points_for(p, 8));
    let mut slope = vec![0.0; f.dim];
    let mut total = 0.0;
    for i in 0..f.cells() {
        total += cell_abs_power(&f, i, pw, &gl);
        f.slope(i, &mut slope);
        total += f.width(i) * pw.of(euclid(&slope));
    }
    Ok(total.powf(1.0 / p))
}

fn gauss_points_for(p: f64, min: usize) -> usize {
    // exact for integer p on pieces where |f| is affine
    (((p + 1.0) / 2.0).ceil() as usize + 1).max(min)
}

/// `int_cell |f|^p`, split where `|f|` is smallest inside the cell.
fn cell_abs_power(f: &Piecewise, i: usize, pw: Power, gl: &GaussLegendre) -> f64 {
    let (a, b) = (f.vertex(i), f.vertex(i + 1));
    let h = f.width(i);
    if f.dim == 1 {
        let (u, v) = (a[0], b[0]);
        if u * v < 0.0 {
            let z = u / (u - v);
            return h * (z * scalar_piece(u.abs(), 0.0, pw) + (1.0 - z) * scalar_piece(0.0, v.abs(), pw));
        }
        return h * scalar_piece(u.abs(), v.abs(), pw);
    }
    // |a + (b-a)x|^2 is a quadratic in x; split at its minimiser
    let (mut ab, mut bb) = (0.0, 0.0);
    for k in 0..f.dim {
        let dk = b[k] - a[k];
        ab += a[k] * dk;
        bb += dk * dk;
    }
    let xmin = if bb > 0.0 { (-ab / bb).clamp(0.0, 1.0) } else { 0.0 };
    let eval = |x: f64| {
        let s: f64 = (0..f.dim).map(|k| (a[k] + (b[k] - a[k]) * x).powi(2)).sum();
        pw.of(s.sqrt())
    };
    let mut acc = 0.0;
    for (lo, hi) in [(0.0, xmin), (xmin, 1.0)] {
        if hi > lo {
            acc += gl.integrate(lo, hi, eval);
        }
    }
    h * acc
}

/// `int_0^1 (A + (B - A) x)^p dx` for `A, B >= 0`.
fn scalar_piece(a: f64, b: f64, pw: Power) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        return 0.0;
    }
    if hi - lo > 1e-3 * hi {
        (pw.of(hi) * hi - pw.of(lo) * lo) / ((pw.p + 1.0) * (hi - lo))
    } else {
        // nearly constant: expand around the midpoint
        let c = 0.5 * (lo + hi);
        let e = 0.5 * (hi - lo) / c;
        let p = pw.p;
        pw.of(c) * (1.0 + p * (p - 1.0) / 6.0 * e * e + p * (p - 1.0) * (p - 2.0) * (p - 3.0) / 120.0 * e.powi(4))
    }
}

/// `int_a^b u^e du` for `0 <= a <= b`.
fn int_pow(e: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if e == -1.0 {
        (b / a).ln()
    } else {
        (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0)
    }
}

/// Kernel integral over a separated rectangle `[a,b] x [c,d]` with `b <= c`.
struct Kernel {
    gamma: f64,
    int_exp: Option<i32>,
}

impl Kernel {
    fn new(gamma: f64) -> Self {
        let e = 2.0 - gamma;
        let int_exp = (e.fract() == 0.0 && e.abs() <= 64.0).then_some(e as i32);
        Self { gamma, int_exp }
    }

    /// `H'' = u^{-gamma}`.
    fn h(&self, u: f64) -> f64 {
        let g = self.gamma;
        if g == 1.0 {
            u * u.ln() - u
        } else if g == 2.0 {
            -u.ln()
        } else {
            let up = match self.int_exp {
                Some(k) => u.powi(k),
                None => u.powf(2.0 - g),
            };
            up / ((1.0 - g) * (2.0 - g))
        }
    }

    #[inline]
    fn point(&self, u: f64) -> f64 {
        match self.int_exp {
            Some(k) => u.powi(k - 2),
            None => u.powf(-self.gamma),
        }
    }

    fn rect(&self, a: f64, b: f64, c: f64, d: f64) -> f64 {
        let closed = self.h(d - a) - self.h(c - a) - self.h(d - b) + self.h(c - b);
        // guard cancellation with the monotone bracket
        let area = (b - a) * (d - c);
        let lo = area * self.point(d - a);
        let hi = area * self.point(c - b);
        closed.clamp(lo, hi)
    }
}

/// `||f||_{eta,p}` with an a-posteriori error estimate.
pub fn norm_eta_p(path: &GridPath, idx: SobolevIndex, quad: QuadratureSpec) -> Result<NormValue> {
    norm_eta_p_piecewise(&Piecewise::from_grid(path), idx, quad)
}

pub fn norm_eta_p_piecewise(f: &Piecewise, idx: SobolevIndex, quad: QuadratureSpec) -> Result<NormValue> {
    if idx.is_sup() {
        return domain("p = inf: use norm_sup");
    }
    let (total, err) = GagliardoPass::new(f, idx, quad).run();
    let p = idx.p;
    if total <= 0.0 {
        return Ok(NormValue { value: 0.0, error: 0.0 });
    }
    let value = total.powf(1.0 / p);
    Ok(NormValue { value, error: value * err / (p * total) })
}

/// Convenience: the norm value alone, panicking on an invalid index.
pub fn norm_value(path: &GridPath, idx: SobolevIndex, quad: QuadratureSpec) -> f64 {
    norm_eta_p(path, idx, quad).expect("finite index").value
}

struct Node {
    lo: usize,
    hi: usize,
    children: Option<(usize, usize)>,
    /// per coordinate `[min, max]`
    bbox: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Pending {
    gap: f64,
    lower: f64,
    upper: f64,
    a: usize,
    b: usize,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> Ordering {
        self.gap.total_cmp(&o.gap).then(o.a.cmp(&self.a)).then(o.b.cmp(&self.b))
    }
}

struct GagliardoPass<'a> {
    f: &'a Piecewise,
    idx: SobolevIndex,
    quad: QuadratureSpec,
    pw: Power,
    kernel: Kernel,
    nodes: Vec<Node>,
    gl: GaussLegendre,
    gl_lo: GaussLegendre,
    gl_line: GaussLegendre,
    /// exactly (or quadrature-) resolved mass and its error
    settled: f64,
    settled_err: f64,
    heap: BinaryHeap<Pending>,
    open_lower: f64,
    open_gap: f64,
}

impl<'a> GagliardoPass<'a> {
    fn new(f: &'a Piecewise, idx: SobolevIndex, quad: QuadratureSpec) -> Self {
        let q = quad.points_per_cell.max(2);
        Self {
            f,
            idx,
            quad,
            pw: Power::new(idx.p),
            kernel: Kernel::new(idx.gamma()),
            nodes: Vec::new(),
            gl: GaussLegendre::new(q),
            gl_lo: GaussLegendre::new(q - 1),
            gl_line: GaussLegendre::new(gauss_points_for(idx.p, q + 4)),
            settled: 0.0,
            settled_err: 0.0,
            heap: BinaryHeap::new(),
            open_lower: 0.0,
            open_gap: 0.0,
        }
    }

    fn run(mut self) -> (f64, f64) {
        let gl = GaussLegendre::new(gauss_points_for(self.idx.p, 8));
        for i in 0..self.f.cells() {
            self.settled += cell_abs_power(self.f, i, self.pw, &gl);
        }
        let root = self.build(0, self.f.cells());
        self.self_pairs(root);
        let tol = self.quad.rel_tol * self.idx.p;
        while let Some(top) = self.heap.pop() {
            let lower = self.settled + self.open_lower;
            if self.open_gap <= tol * lower || top.gap <= 0.0 {
                self.heap.push(top);
                break;
            }
            self.open_lower -= top.lower;
            self.open_gap -= top.gap;
            self.refine(top);
            // drift guard on the running sums
            if self.open_gap < 0.0 {
                self.open_gap = self.heap.iter().map(|x| x.gap).sum();
            }
        }
        let (mut mid, mut half) = (0.0, 0.0);
        let mut rest: Vec<Pending> = self.heap.into_vec();
        rest.sort_by_key(|x| (x.a, x.b));
        for x in rest {
            mid += 0.5 * (x.lower + x.upper);
            half += 0.5 * (x.upper - x.lower);
        }
        (self.settled + mid, self.settled_err + half)
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, children: None, bbox: Vec::new() });
        if hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let l = self.build(lo, mid);
            let r = self.build(mid, hi);
            let bbox = self.nodes[l].bbox.iter().zip(&self.nodes[r].bbox).map(|(x, y)| (x.0.min(y.0), x.1.max(y.1))).collect();
            self.nodes[id].children = Some((l, r));
            self.nodes[id].bbox = bbox;
        } else {
            let (a, b) = (self.f.vertex(lo), self.f.vertex(lo + 1));
            self.nodes[id].bbox = a.iter().zip(b).map(|(x, y)| (x.min(*y), x.max(*y))).collect();
        }
        id
    }

    fn span(&self, n: usize) -> (f64, f64) {
        let nd = &self.nodes[n];
        (self.f.knots[nd.lo], self.f.knots[nd.hi])
    }

    /// Pairs with both points in node `n`.
    fn self_pairs(&mut self, n: usize) {
        match self.nodes[n].children {
            None => {
                let i = self.nodes[n].lo;
                self.settled += self.same_cell(i);
            }
            Some((l, r)) => {
                self.self_pairs(l);
                self.self_pairs(r);
                self.touching(l, r);
            }
        }
    }

    /// `a` ends where `b` starts. Counted twice (both orders).
    fn touching(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.nodes[a].children, self.nodes[b].children);
        match (ca, cb) {
            (None, None) => {
                let i = self.nodes[a].lo;
                let (v, e) = self.adjacent(i);
                self.settled += 2.0 * v;
                self.settled_err += 2.0 * e;
            }
            (Some((al, ar)), Some((bl, br))) => {
                self.push_separated(al, bl);
                self.push_separated(al, br);
                self.push_separated(ar, br);
                self.touching(ar, bl);
            }
            (Some((al, ar)), None) => {
                self.push_separated(al, b);
                self.touching(ar, b);
            }
            (None, Some((bl, br))) => {
                self.push_separated(a, br);
                self.touching(a, bl);
            }
        }
    }

    fn push_separated(&mut self, a: usize, b: usize) {
        let (sa, sb) = (self.span(a), self.span(b));
        let k = self.kernel.rect(sa.0, sa.1, sb.0, sb.1);
        let (mut lo2, mut hi2) = (0.0, 0.0);
        for (x, y) in self.nodes[a].bbox.iter().zip(&self.nodes[b].bbox) {
            let far = (y.1 - x.0).abs().max((x.1 - y.0).abs());
            let near = (y.0 - x.1).max(x.0 - y.1).max(0.0);
            hi2 += far * far;
            lo2 += near * near;
        }
        let lower = 2.0 * k * self.pw.of(lo2.sqrt());
        let upper = 2.0 * k * self.pw.of(hi2.sqrt());
        let gap = upper - lower;
        self.open_lower += lower;
        self.open_gap += gap;
        self.heap.push(Pending { gap, lower, upper, a, b });
    }

    fn refine(&mut self, x: Pending) {
        let (ca, cb) = (self.nodes[x.a].children, self.nodes[x.b].children);
        let wa = self.span(x.a);
        let wb = self.span(x.b);
        let split_a = match (ca, cb) {
            (None, None) => {
                let (v, e) = self.separated_cells(self.nodes[x.a].lo, self.nodes[x.b].lo);
                let v = v.clamp(x.lower, x.upper);
                self.settled += v;
                self.settled_err += e.min(x.gap);
                return;
            }
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(_), Some(_)) => wa.1 - wa.0 >= wb.1 - wb.0,
        };
        if split_a {
            let (l, r) = ca.unwrap();
            self.push_separated(l, x.b);
            self.push_separated(r, x.b);
        } else {
            let (l, r) = cb.unwrap();
            self.push_separated(x.a, l);
            self.push_separated(x.a, r);
        }
    }

    /// Ordered pairs inside one cell: `|slope|^p * 2h^{al+2}/((al+1)(al+2))`.
    fn same_cell(&self, i: usize) -> f64 {
        let mut s = vec![0.0; self.f.dim];
        self.f.slope(i, &mut s);
        let al = self.idx.p - 1.0 - self.idx.p * self.idx.eta;
        let h = self.f.width(i);
        self.pw.of(euclid(&s)) * 2.0 * h.powf(al + 2.0) / ((al + 1.0) * (al + 2.0))
    }

    /// `s` in cell `i`, `t` in cell `i+1`, reduced along rays from the shared
    /// knot to `int_0^1 |g1 w + g2 (1-w)|^p R(w)^{al+2}/(al+2) dw`.
    fn adjacent(&self, i: usize) -> (f64, f64) {
        let d = self.f.dim;
        let mut g1 = vec![0.0; d];
        let mut g2 = vec![0.0; d];
        self.f.slope(i, &mut g1);
        self.f.slope(i + 1, &mut g2);
        let (h1, h2) = (self.f.width(i), self.f.width(i + 1));
        let al = self.idx.p - 1.0 - self.idx.p * self.idx.eta;
        let e = al + 2.0;
        let ws = h1 / (h1 + h2);
        // minimiser of |g2 + (g1 - g2) w|
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..d {
            let dk = g1[k] - g2[k];
            num -= g2[k] * dk;
            den += dk * dk;
        }
        let wz = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
        let mut cuts = vec![0.0, ws, wz, 1.0];
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pw = self.pw;
        let integrand = |w: f64| {
            let s: f64 = (0..d).map(|k| (g1[k] * w + g2[k] * (1.0 - w)).powi(2)).sum();
            let r = if w <= ws { h2 / (1.0 - w) } else { h1 / w };
            pw.of(s.sqrt()) * r.powf(e) / e
        };
        let panels = 1usize << self.quad.diagonal_depth;
        let (mut fine, mut coarse) = (0.0, 0.0);
        for c in cuts.windows(2) {
            if c[1] > c[0] {
                fine += self.gl_line.composite(c[0], c[1], 2 * panels, integrand);
                coarse += self.gl_line.composite(c[0], c[1], panels, integrand);
            }
        }
        (fine, (fine - coarse).abs())
    }

    /// Tensor Gauss on two separated cells (both orders), with the
    /// difference to a lower-order rule as error estimate.
    fn separated_cells(&self, i: usize, j: usize) -> (f64, f64) {
        let hi = self.tensor(&self.gl, i, j);
        let lo = self.tensor(&self.gl_lo, i, j);
        (hi, (hi - lo).abs())
    }

    fn tensor(&self, gl: &GaussLegendre, i: usize, j: usize) -> f64 {
        let f = self.f;
        let d = f.dim;
        let (a, b) = (f.knots[i], f.knots[i + 1]);
        let (c, e) = (f.knots[j], f.knots[j + 1]);
        let (fa, fb) = (f.vertex(i), f.vertex(i + 1));
        let (fc, fe) = (f.vertex(j), f.vertex(j + 1));
        let mut acc = 0.0;
        for (s, ws) in gl.on(a, b) {
            let xs = (s - a) / (b - a);
            for (t, wt) in gl.on(c, e) {
                let xt = (t - c) / (e - c);
                let mut n2 = 0.0;
                for k in 0..d {
                    let v = (fc[k] + (fe[k] - fc[k]) * xt) - (fa[k] + (fb[k] - fa[k]) * xs);
                    n2 += v * v;
                }
                acc += ws * wt * self.pw.of(n2.sqrt()) * self.kernel.point(t - s);
            }
        }
        2.0 * acc
    }
}

/// `h_{s1,s2}(t) = int_0^t 1_{[s1,s2]}`, its norm and the ratio to
/// `(s2 - s1)^{1/2 - eta}`.
pub fn step_primitive_norm_check(s1: f64, s2: f64, idx: SobolevIndex, quad: QuadratureSpec) -> Result<(f64, f64)> {
    if !(0.0 <= s1 && s1 < s2 && s2 <= 1.0) {
        return domain(format!("step primitive needs 0 <= s1 < s2 <= 1, got ({s1}, {s2})"));
    }
    let f = step_primitive(s1, s2);
    let nv = norm_eta_p_piecewise(&f, idx, quad)?;
    Ok((nv.value, nv.value / (s2 - s1).powf(0.5 - idx.eta)))
}

pub fn step_primitive(s1: f64, s2: f64) -> Piecewise {
    let mut knots = vec![0.0];
    let mut values = vec![0.0];
    for (t, v) in [(s1, 0.0), (s2, s2 - s1), (1.0, s2 - s1)] {
        if t > *knots.last().unwrap() {
            knots.push(t);
            values.push(v);
        }
    }
    Piecewise::new(1, knots, values).expect("increasing knots")
}

/// `int int [|t-s| ^ 1/N]^{p/2} / |t-s|^{1+eta p} ds dt` by reduction to
/// `2 int_0^1 (1-u) g(u) du`, and its ratio to `N^{-p(1/2-eta)}`.
pub fn kernel_integral_check(n: usize, idx: SobolevIndex) -> Result<(f64, f64)> {
    if n == 0 {
        return domain("kernel integral needs N >= 1");
    }
    if idx.is_sup() {
        return domain("kernel integral needs finite p");
    }
    let (p, eta) = (idx.p, idx.eta);
    let g = 1.0 + p * eta;
    let be = p / 2.0 - g;
    if !(be > -1.0) {
        return Err(LabError::Admissibility { eta, p, violated: "p/2 - 1 - eta p > -1".into() });
    }
    let c = 1.0 / n as f64;
    let near = int_pow(be, 0.0, c) - int_pow(be + 1.0, 0.0, c);
    let far = if n > 1 { c.powf(p / 2.0) * (int_pow(-g, c, 1.0) - int_pow(1.0 - g, c, 1.0)) } else { 0.0 };
    let value = 2.0 * (near + far);
    Ok((value, value / (n as f64).powf(-p * (0.5 - eta))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{basis_h, BasisIndex};

    fn q() -> QuadratureSpec {
        QuadratureSpec::new(8, 3, 1e-8).unwrap()
    }

    #[test]
    fn admissibility() {
        assert!(validate_index(0.0, f64::INFINITY).is_ok());
        assert!(validate_index(0.1, 20.0).is_ok());
        match validate_index(0.6, 10.0) {
            Err(LabError::Admissibility { violated, .. }) => assert_eq!(violated, "eta - 1/p < 1/2"),
            other => panic!("{other:?}"),
        }
        match validate_index(0.25, 4.0) {
            Err(LabError::Admissibility { violated, .. }) => assert_eq!(violated, "0 < eta - 1/p"),
            other => panic!("{other:?}"),
        }
        assert!(validate_index(0.1, f64::INFINITY).is_err());
        assert!(validate_index(0.9, 0.5).is_err());
    }

    #[test]
    fn identity_path_closed_form() {
        // int t^4 + int int (t-s)^2 = 1/5 + 1/6
        let f = GridPath::scalar(vec![0.0, 1.0]).unwrap();
        let idx = SobolevIndex::general(0.25, 4.0).unwrap();
        let nv = norm_eta_p(&f, idx, q()).unwrap();
        assert!((nv.value - (11.0f64 / 30.0).powf(0.25)).abs() < 1e-12, "{nv:?}");
        let f = f.refine(7);
        let nv = norm_eta_p(&f, idx, q()).unwrap();
        assert!((nv.value - (11.0f64 / 30.0).powf(0.25)).abs() < 1e-7, "{nv:?}");
    }

    #[test]
    fn zero_and_constant() {
        let idx = validate_index(0.1, 20.0).unwrap();
        assert_eq!(norm_eta_p(&GridPath::zeros(1, 9), idx, q()).unwrap().value, 0.0);
        let c = GridPath::scalar(vec![-1.5; 6]).unwrap();
        assert!((norm_eta_p(&c, idx, q()).unwrap().value - 1.5).abs() < 1e-12);
        assert!(norm_eta_p(&c, SobolevIndex::sup(), q()).is_err());
    }

    #[test]
    fn sup_and_w1p() {
        let h = basis_h(BasisIndex::new(1, 3, 9, 1).unwrap(), 1);
        assert!((norm_sup(&h) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(norm_sup(&GridPath::scalar(vec![0.0, -3.0, 1.0]).unwrap()), 3.0);
        let id = GridPath::scalar(vec![0.0, 1.0]).unwrap();
        assert!((norm_w1p(&id, 2.0).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((norm_w1p(&id.refine(5), 2.0).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(norm_w1p(&GridPath::zeros(2, 3), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn kernel_integral_at_one() {
        let idx = validate_index(0.1, 20.0).unwrap();
        let (v, r) = kernel_integral_check(1, idx).unwrap();
        // 2 int_0^1 (1-u) u^{be}, be = 10 - 3 = 7
        assert!((v - 2.0 * (1.0 / 8.0 - 1.0 / 9.0)).abs() < 1e-15);
        assert_eq!(v, r);
    }

    #[test]
    fn kernel_integral_matches_quadrature() {
        let idx = validate_index(0.3, 4.0).unwrap();
        for n in [1, 3, 10] {
            let (v, _) = kernel_integral_check(n, idx).unwrap();
            let c = 1.0 / n as f64;
            let g = |u: f64| 2.0 * (1.0 - u) * u.min(c).powf(2.0) * u.powf(-2.2);
            let gl = GaussLegendre::new(30);
            // u^{-0.2} singularity at 0: substitute u = c x^5
            let near = gl.integrate(0.0, 1.0, |x| g(c * x.powi(5)) * 5.0 * c * x.powi(4));
            let num = near + if n > 1 { gl.composite(c, 1.0, 8, g) } else { 0.0 };
            assert!((v - num).abs() < 1e-10 * v, "{n}: {v} vs {num}");
        }
    }
}
