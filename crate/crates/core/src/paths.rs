//! Piecewise-linear paths on uniform partitions of [0, 1], the hat-primitive
//! basis, random-walk and Brownian samplers, coarsening and reflection.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::rng::{SeededStream, StreamRng};

/// A `d`-dimensional continuous path, affine between the points `i/m`.
///
/// `values` is row-major: row `i` holds the path at `t = i/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    dim: usize,
    m: usize,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(dim: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || m == 0 {
            return domain("grid paths need d >= 1 and m >= 1");
        }
        if values.len() != (m + 1) * dim {
            return domain(format!("expected {} values for d={dim}, m={m}, got {}", (m + 1) * dim, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("path values must be finite");
        }
        Ok(Self { dim, m, values })
    }

    /// One-dimensional path through `values` (so `m = values.len() - 1`).
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return domain("a scalar path needs at least two vertices");
        }
        let m = values.len() - 1;
        Self::new(1, m, values)
    }

    pub fn zeros(dim: usize, m: usize) -> Self {
        assert!(dim > 0 && m > 0);
        Self { dim, m, values: vec![0.0; (m + 1) * dim] }
    }

    /// Path sampled from a function at the grid points.
    pub fn from_fn(dim: usize, m: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut p = Self::zeros(dim, m);
        for i in 0..=m {
            f(i as f64 / m as f64, &mut p.values[i * dim..(i + 1) * dim]);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinate `k` (0-based) of vertex `i`.
    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dim + k]
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return domain(format!("t = {t} outside [0, 1]"));
        }
        let x = t * self.m as f64;
        let i = (x.floor() as usize).min(self.m);
        if i == self.m || x == i as f64 {
            out.copy_from_slice(self.vertex(i));
            return Ok(());
        }
        let w = x - i as f64;
        let (a, b) = (self.vertex(i), self.vertex(i + 1));
        for k in 0..self.dim {
            out[k] = a[k] + w * (b[k] - a[k]);
        }
        Ok(())
    }

    /// `f(t) - f(s)`.
    pub fn increment(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        if s > t {
            return domain(format!("increment needs s <= t, got s={s}, t={t}"));
        }
        let a = self.eval(s)?;
        let mut b = self.eval(t)?;
        b.iter_mut().zip(&a).for_each(|(y, x)| *y -= x);
        Ok(b)
    }

    /// Slope of coordinate `k` on cell `i`.
    #[inline]
    pub fn slope(&self, i: usize, k: usize) -> f64 {
        (self.at(i + 1, k) - self.at(i, k)) * self.m as f64
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self { dim: self.dim, m: self.m, values: self.values.iter().map(|v| v * lambda).collect() }
    }

    /// `alpha * self + beta * other` on a common grid.
    pub fn lin_comb(&self, alpha: f64, other: &GridPath, beta: f64) -> Result<Self> {
        self.check_dim(other)?;
        if self.m == other.m {
            let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
            return Ok(Self { dim: self.dim, m: self.m, values });
        }
        let l = lcm(self.m, other.m);
        self.refine(l / self.m).lin_comb(alpha, &other.refine(l / other.m), beta)
    }

    pub fn sub(&self, other: &GridPath) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &GridPath) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    /// The same path written on the grid of size `m * factor`.
    pub fn refine(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let fine = self.m * factor;
        let mut values = Vec::with_capacity((fine + 1) * self.dim);
        for i in 0..self.m {
            let (a, b) = (self.vertex(i), self.vertex(i + 1));
            for j in 0..factor {
                let w = j as f64 / factor as f64;
                values.extend(a.iter().zip(b).map(|(x, y)| x + w * (y - x)));
            }
        }
        values.extend_from_slice(self.vertex(self.m));
        Self { dim: self.dim, m: fine, values }
    }

    /// Affine interpolation along the points `j/n`, i.e. the projection onto
    /// the span of the grid-`n` basis (plus the starting constant).
    pub fn coarsen(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return domain("coarsen needs N >= 1");
        }
        if n == self.m {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(self.dim, n);
        for j in 0..=n {
            // exact vertex hits when j*m is divisible by n
            let num = j * self.m;
            let dst = &mut out.values[j * self.dim..(j + 1) * self.dim];
            if num.is_multiple_of(n) {
                dst.copy_from_slice(self.vertex(num / n));
            } else {
                let i = num / n;
                let w = (num - i * n) as f64 / n as f64;
                let (a, b) = (self.vertex(i), self.vertex(i + 1));
                for k in 0..self.dim {
                    dst[k] = a[k] + w * (b[k] - a[k]);
                }
            }
        }
        Ok(out)
    }

    /// Cameron–Martin inner product `sum_k int f_k' g_k'` (starting values ignored).
    pub fn cm_inner(&self, other: &GridPath) -> Result<f64> {
        self.check_dim(other)?;
        if self.m != other.m {
            let l = lcm(self.m, other.m);
            return self.refine(l / self.m).cm_inner(&other.refine(l / other.m));
        }
        let mut acc = 0.0;
        for i in 0..self.m {
            for k in 0..self.dim {
                acc += (self.at(i + 1, k) - self.at(i, k)) * (other.at(i + 1, k) - other.at(i, k));
            }
        }
        Ok(acc * self.m as f64)
    }

    pub fn cm_norm(&self) -> f64 {
        self.cm_inner(self).expect("same path").sqrt()
    }

    /// Coordinates on the orthonormal grid basis: `sqrt(m) * (increment on cell)`,
    /// laid out cell-major (`cell * d + coord`).
    pub fn basis_coords(&self) -> Vec<f64> {
        let sm = (self.m as f64).sqrt();
        (0..self.m).flat_map(|i| (0..self.dim).map(move |k| (i, k))).map(|(i, k)| sm * (self.at(i + 1, k) - self.at(i, k))).collect()
    }

    /// Inverse of [`GridPath::basis_coords`], starting at `start`.
    pub fn from_basis_coords(dim: usize, m: usize, coords: &[f64], start: &[f64]) -> Self {
        assert_eq!(coords.len(), dim * m);
        let inv = 1.0 / (m as f64).sqrt();
        let mut values = Vec::with_capacity((m + 1) * dim);
        values.extend_from_slice(start);
        for i in 0..m {
            for k in 0..dim {
                let prev = values[i * dim + k];
                values.push(prev + coords[i * dim + k] * inv);
            }
        }
        Self { dim, m, values }
    }

    fn check_dim(&self, other: &GridPath) -> Result<()> {
        if self.dim != other.dim {
            return domain(format!("dimension mismatch: {} vs {}", self.dim, other.dim));
        }
        Ok(())
    }
}

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Index `a = (coord, cell)` of the grid-`m` basis; `coord` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    coord: usize,
    cell: usize,
    m: usize,
}

impl BasisIndex {
    pub fn new(coord: usize, cell: usize, m: usize, dim: usize) -> Result<Self> {
        if coord == 0 || coord > dim {
            return domain(format!("coordinate {coord} outside 1..={dim}"));
        }
        if cell >= m {
            return domain(format!("cell {cell} outside 0..{m}"));
        }
        Ok(Self { coord, cell, m })
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Every index of the grid-`m` basis in dimension `dim`, cell-major.
    pub fn all(m: usize, dim: usize) -> impl Iterator<Item = BasisIndex> {
        (0..m).flat_map(move |cell| (1..=dim).map(move |coord| BasisIndex { coord, cell, m }))
    }
}

/// `h_a^m`: zero before `a2/m`, slope `sqrt(m)` in coordinate `a1` across the
/// cell, then constant `m^{-1/2}`.
pub fn basis_h(idx: BasisIndex, dim: usize) -> GridPath {
    assert!(idx.coord <= dim);
    let mut p = GridPath::zeros(dim, idx.m);
    let top = 1.0 / (idx.m as f64).sqrt();
    for i in idx.cell + 1..=idx.m {
        p.values[i * dim + idx.coord - 1] = top;
    }
    p
}

/// Scalar law of one increment coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LawKind {
    Rademacher,
    Gaussian,
    /// Centered uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
    Discrete {
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// How a `d`-dimensional increment is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// i.i.d. unit-variance coordinates: covariance is the identity.
    #[default]
    IdentityCovariance,
    /// Coordinates scaled by `d^{-1/2}` so that `E|X|^2 = 1`.
    UnitTotalVariance,
}

/// Law of the i.i.d. increments `X_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementLaw {
    kind: LawKind,
    dim: usize,
    normalization: Normalization,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl IncrementLaw {
    pub fn new(kind: LawKind, dim: usize) -> Result<Self> {
        Self::with_normalization(kind, dim, Normalization::default())
    }

    pub fn with_normalization(kind: LawKind, dim: usize, normalization: Normalization) -> Result<Self> {
        if dim == 0 {
            return domain("increment law needs d >= 1");
        }
        let mut cumulative = Vec::new();
        if let LawKind::Discrete { atoms, weights } = &kind {
            if atoms.is_empty() || atoms.len() != weights.len() {
                return domain("discrete law needs matching, nonempty atoms and weights");
            }
            if weights.iter().any(|w| !(*w >= 0.0)) {
                return domain("discrete weights must be nonnegative");
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return domain(format!("discrete weights sum to {total}, not 1"));
            }
            let mean: f64 = atoms.iter().zip(weights).map(|(a, w)| a * w).sum();
            let var: f64 = atoms.iter().zip(weights).map(|(a, w)| a * a * w).sum::<f64>() - mean * mean;
            if mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
                return domain(format!("discrete law must be centered with unit variance (mean {mean}, var {var})"));
            }
            let mut acc = 0.0;
            cumulative = weights
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect();
        }
        Ok(Self { kind, dim, normalization, cumulative })
    }

    pub fn rademacher(dim: usize) -> Self {
        Self::new(LawKind::Rademacher, dim).expect("valid")
    }

    pub fn gaussian(dim: usize) -> Self {
        Self::new(LawKind::Gaussian, dim).expect("valid")
    }

    pub fn uniform(dim: usize) -> Self {
        Self::new(LawKind::Uniform, dim).expect("valid")
    }

    pub fn parse(name: &str, dim: usize) -> Result<Self> {
        match name {
            "rademacher" => Ok(Self::rademacher(dim)),
            "gaussian" => Ok(Self::gaussian(dim)),
            "uniform" => Ok(Self::uniform(dim)),
            other => domain(format!("unknown law '{other}' (rademacher|gaussian|uniform)")),
        }
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LawKind::Rademacher => "rademacher",
            LawKind::Gaussian => "gaussian",
            LawKind::Uniform => "uniform",
            LawKind::Discrete { .. } => "discrete",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, LawKind::Gaussian)
    }

    /// Variance of each coordinate of `X`.
    pub fn coordinate_variance(&self) -> f64 {
        match self.normalization {
            Normalization::IdentityCovariance => 1.0,
            Normalization::UnitTotalVariance => 1.0 / self.dim as f64,
        }
    }

    fn coordinate_scale(&self) -> f64 {
        self.coordinate_variance().sqrt()
    }

    /// `E|X_coord|^p` of one (unit-variance, before normalization) coordinate.
    pub fn coordinate_abs_moment(&self, p: f64) -> f64 {
        match &self.kind {
            LawKind::Rademacher => 1.0,
            LawKind::Gaussian => 2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt(),
            LawKind::Uniform => 3f64.powf(p / 2.0) / (p + 1.0),
            LawKind::Discrete { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| a.abs().powf(p) * w).sum(),
        }
    }

    /// Almost-sure bound on `|X_coord|` when the law is bounded.
    pub fn coordinate_bound(&self) -> Option<f64> {
        let b = match &self.kind {
            LawKind::Rademacher => 1.0,
            LawKind::Gaussian => return None,
            LawKind::Uniform => 3f64.sqrt(),
            LawKind::Discrete { atoms, .. } => atoms.iter().fold(0.0, |m: f64, a| m.max(a.abs())),
        };
        Some(b * self.coordinate_scale())
    }

    /// Draws one scalar coordinate (unit variance, before normalization).
    #[inline]
    fn draw_unit<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            LawKind::Rademacher => {
                if rng.next_u32() & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LawKind::Gaussian => rng.sample(StandardNormal),
            LawKind::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            LawKind::Discrete { atoms, .. } => {
                let u: f64 = rng.random();
                let k = self.cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
                atoms[k]
            }
        }
    }

    /// Fills `out` with i.i.d. coordinates (length must be a multiple of d).
    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let scale = self.coordinate_scale();
        if let LawKind::Rademacher = self.kind {
            // 64 signs per word
            for chunk in out.chunks_mut(64) {
                let bits = rng.next_u64();
                for (j, x) in chunk.iter_mut().enumerate() {
                    *x = if (bits >> j) & 1 == 0 { scale } else { -scale };
                }
            }
            return;
        }
        for x in out.iter_mut() {
            *x = self.draw_unit(rng) * scale;
        }
    }
}

/// `S^m = sum_a X_a h_a^m`: the affine interpolation of the rescaled walk.
pub fn sample_walk(m: usize, law: &IncrementLaw, stream: &SeededStream) -> GridPath {
    walk_from_rng(m, law, &mut stream.rng())
}

pub fn walk_from_rng(m: usize, law: &IncrementLaw, rng: &mut StreamRng) -> GridPath {
    let d = law.dim();
    let mut coords = vec![0.0; m * d];
    law.fill(rng, &mut coords);
    GridPath::from_basis_coords(d, m, &coords, &vec![0.0; d])
}

/// `B^m`: Brownian motion sampled on the grid `i/m`, affinely interpolated.
pub fn sample_brownian(m: usize, dim: usize, stream: &SeededStream) -> GridPath {
    brownian_from_rng(m, dim, &mut stream.rng())
}

pub fn brownian_from_rng(m: usize, dim: usize, rng: &mut StreamRng) -> GridPath {
    let mut coords = vec![0.0; m * dim];
    for c in coords.iter_mut() {
        *c = rng.sample(StandardNormal);
    }
    GridPath::from_basis_coords(dim, m, &coords, &vec![0.0; dim])
}

pub fn coarsen(path: &GridPath, n: usize) -> Result<GridPath> {
    path.coarsen(n)
}

/// Scalar piecewise-linear function on arbitrary increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl Polyline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return domain("polyline needs >= 2 knots and one value per knot");
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("polyline knots must be strictly increasing");
        }
        Ok(Self { knots, values })
    }

    pub fn from_grid(path: &GridPath) -> Result<Self> {
        if path.dim() != 1 {
            return Err(LabError::UnsupportedDimension { dim: path.dim(), what: "polyline" });
        }
        let m = path.m() as f64;
        Ok(Self { knots: (0..=path.m()).map(|i| i as f64 / m).collect(), values: path.values().to_vec() })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.knots.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.knots[k - 1], self.knots[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }

    /// `sup_t |self(t) - other(t)|`, exact: the difference is affine between
    /// the merged knots.
    pub fn sup_distance(&self, other: &Polyline) -> f64 {
        let mut ts: Vec<f64> = self.knots.iter().chain(&other.knots).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.iter().map(|&t| (self.eval(t) - other.eval(t)).abs()).fold(0.0, f64::max)
    }
}

/// Exact running local time at 0 of a scalar path,
/// `L(t) = sup_{s<=t} max(0, -f(s))`, as a polyline. Breakpoints are the
/// input knots plus the interior points where `-f` crosses the running level.
pub fn local_time_polyline(f: &Polyline) -> Polyline {
    let mut knots = vec![f.knots[0]];
    let mut level = (-f.values[0]).max(0.0);
    let mut values = vec![level];
    for k in 0..f.knots.len() - 1 {
        let (t0, t1) = (f.knots[k], f.knots[k + 1]);
        let (g0, g1) = (-f.values[k], -f.values[k + 1]);
        if g1 > level {
            if g0 < level {
                let tc = t0 + (level - g0) / (g1 - g0) * (t1 - t0);
                if tc > t0 && tc < t1 {
                    knots.push(tc);
                    values.push(level);
                }
            }
            level = g1;
        }
        knots.push(t1);
        values.push(level);
    }
    Polyline { knots, values }
}

/// `(R, L_0)` with `L_0(t) = sup_{s<=t} max(0, -f(s))` and `R = f + L_0`,
/// both sampled on the input grid.
pub fn reflect_and_local_time(path: &GridPath) -> Result<(GridPath, GridPath)> {
    if path.dim() != 1 {
        return Err(LabError::UnsupportedDimension { dim: path.dim(), what: "reflection" });
    }
    let exact = local_time_polyline(&Polyline::from_grid(path)?);
    let m = path.m();
    let lt: Vec<f64> = (0..=m).map(|i| exact.eval(i as f64 / m as f64)).collect();
    let refl: Vec<f64> = path.values().iter().zip(&lt).map(|(f, l)| f + l).collect();
    Ok((GridPath::new(1, m, refl)?, GridPath::new(1, m, lt)?))
}

/// `L_0(1)` for a scalar grid path: the largest value of `max(0, -f)`.
pub fn local_time_at_one(path: &GridPath) -> f64 {
    path.values().iter().fold(0.0, |acc: f64, v| acc.max(-v))
}

/// Exact sup-distance between the reflections of two scalar paths.
pub fn reflection_sup_distance(x: &GridPath, y: &GridPath) -> Result<f64> {
    let rx = reflected_polyline(x)?;
    let ry = reflected_polyline(y)?;
    Ok(rx.sup_distance(&ry))
}

fn reflected_polyline(x: &GridPath) -> Result<Polyline> {
    let f = Polyline::from_grid(x)?;
    let lt = local_time_polyline(&f);
    let values = lt.knots.iter().zip(&lt.values).map(|(&t, l)| f.eval(t) + l).collect();
    Polyline::new(lt.knots, values)
}
