//! Cameron–Martin inner products between grid bases, the projection onto a
//! coarse grid, the covariance `Gamma` of the projected Gaussian coordinates,
//! and conditional-expectation coefficients.
//!
//! Overlaps are integers in units of `1/(mN)`: with `L_ab` the overlap of
//! cell `a` of grid `m` and cell `b` of grid `N`, `<h_a^m, h_b^N> = L_ab/sqrt(mN)`
//! and `mN * Gamma = T` with `T_bc = sum_a L_ab L_ac`.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::estimate::McEstimate;
use crate::paths::{BasisIndex, GridPath};
use crate::rng::SeededStream;

/// Overlap of `[a/m, (a+1)/m)` and `[b/n, (b+1)/n)` in units of `1/(mn)`.
#[inline]
pub fn overlap_units(m: usize, a: usize, n: usize, b: usize) -> u64 {
    let lo = (a * n).max(b * m);
    let hi = ((a + 1) * n).min((b + 1) * m);
    hi.saturating_sub(lo) as u64
}

/// Coarse cells met by fine cell `a` (at most two), with their overlaps.
pub fn overlaps_of(m: usize, a: usize, n: usize) -> impl Iterator<Item = (usize, u64)> {
    let first = a * n / m;
    let last = (((a + 1) * n).div_ceil(m)).min(n);
    (first..last).map(move |b| (b, overlap_units(m, a, n, b))).filter(|&(_, l)| l > 0)
}

/// `<h_a^m, h_b^N>` in the Cameron–Martin space.
pub fn inner_ip(m: usize, a: BasisIndex, n: usize, b: BasisIndex) -> f64 {
    debug_assert_eq!(a.m(), m);
    debug_assert_eq!(b.m(), n);
    if a.coord() != b.coord() {
        return 0.0;
    }
    overlap_units(m, a.cell(), n, b.cell()) as f64 / ((m * n) as f64).sqrt()
}

/// Sparse table of `<h_a^m, h_b^N>` for one coordinate (all coordinates share it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProductTable {
    pub m: usize,
    pub n: usize,
    /// `(a, b, overlap units, value)`, sorted by `a` then `b`
    pub entries: Vec<(usize, usize, u64, f64)>,
}

impl InnerProductTable {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return domain("grid sizes must be >= 1");
        }
        let scale = ((m * n) as f64).sqrt();
        let entries = (0..m).flat_map(|a| overlaps_of(m, a, n).map(move |(b, l)| (a, b, l, l as f64 / scale))).collect();
        Ok(Self { m, n, entries })
    }

    pub fn row(&self, a: usize) -> impl Iterator<Item = &(usize, usize, u64, f64)> {
        let start = self.entries.partition_point(|e| e.0 < a);
        self.entries[start..].iter().take_while(move |e| e.0 == a)
    }

    pub fn max_row_nonzeros(&self) -> usize {
        (0..self.m).map(|a| self.row(a).count()).max().unwrap_or(0)
    }

    /// Every value lies in `[0, sqrt(N/m)]`, checked in integers as `L <= N`.
    pub fn bounds_hold_exactly(&self) -> bool {
        // L/sqrt(mN) <= sqrt(N/m)  <=>  L <= N
        self.entries.iter().all(|e| e.2 <= self.n as u64)
    }
}

/// `Sum_b <f, h_b^N> h_b^N` assembled from fine-grid inner products, plus the
/// starting value of `f`.
pub fn project_cm(path: &GridPath, n: usize) -> Result<GridPath> {
    if n == 0 {
        return domain("projection needs N >= 1");
    }
    let (m, d) = (path.m(), path.dim());
    let table = InnerProductTable::new(m, n)?;
    let sm = (m as f64).sqrt();
    let mut coeff = vec![0.0; n * d];
    for &(a, b, _, v) in &table.entries {
        for k in 0..d {
            let fa = sm * (path.at(a + 1, k) - path.at(a, k));
            coeff[b * d + k] += fa * v;
        }
    }
    Ok(GridPath::from_basis_coords(d, n, &coeff, path.vertex(0)))
}

/// Symmetric tridiagonal `Gamma`, with its exact integer form `T = mN * Gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub m: usize,
    pub n: usize,
    pub diag: Vec<f64>,
    /// `off[b] = Gamma_{b, b+1}`
    pub off: Vec<f64>,
    pub diag_units: Vec<u64>,
    pub off_units: Vec<u64>,
}

/// `Gamma_{b,c} = sum_a <h_a^m,h_b^N><h_a^m,h_c^N>`.
pub fn gamma_matrix(m: usize, n: usize) -> Result<GramMatrix> {
    if n == 0 || n >= m {
        return domain(format!("gamma matrix needs 1 <= N < m (got m={m}, N={n})"));
    }
    let mut diag_units = vec![0u64; n];
    let mut off_units = vec![0u64; n - 1];
    for a in 0..m {
        let row: Vec<(usize, u64)> = overlaps_of(m, a, n).collect();
        for &(b, l) in &row {
            diag_units[b] += l * l;
        }
        if let [(b, l), (c, k)] = row[..] {
            debug_assert_eq!(c, b + 1);
            off_units[b] += l * k;
        }
    }
    let s = (m * n) as f64;
    Ok(GramMatrix {
        m,
        n,
        diag: diag_units.iter().map(|&t| t as f64 / s).collect(),
        off: off_units.iter().map(|&t| t as f64 / s).collect(),
        diag_units,
        off_units,
    })
}

impl GramMatrix {
    pub fn get(&self, b: usize, c: usize) -> f64 {
        match b.abs_diff(c) {
            0 => self.diag[b],
            1 => self.off[b.min(c)],
            _ => 0.0,
        }
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|b| (0..self.n).map(|c| self.get(b, c)).collect()).collect()
    }

    /// `Gamma = I` in exact arithmetic.
    pub fn is_identity(&self) -> bool {
        let s = (self.m * self.n) as u64;
        self.diag_units.iter().all(|&t| t == s) && self.off_units.iter().all(|&t| t == 0)
    }

    /// `Gamma_{bb} >= 3/4`, exactly: `4 T_bb >= 3 mN`.
    pub fn diagonal_at_least_three_quarters(&self) -> bool {
        let s = (self.m * self.n) as u64;
        self.diag_units.iter().all(|&t| 4 * t >= 3 * s)
    }

    /// `Gamma_{b,b+1} <= N/m`, exactly: `T_{b,b+1} <= N^2`.
    pub fn off_diagonal_at_most_n_over_m(&self) -> bool {
        let n2 = (self.n * self.n) as u64;
        self.off_units.iter().all(|&t| t <= n2)
    }

    /// Solves `Gamma x = rhs` (Thomas algorithm).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.diag, &self.off, rhs)
    }

    /// `Gamma = L L^T` with `L` lower bidiagonal: `(diag of L, subdiag of L)`.
    pub fn cholesky(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut ld = vec![0.0; n];
        let mut ls = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut v = self.diag[i];
            if i > 0 {
                ls[i - 1] = self.off[i - 1] / ld[i - 1];
                v -= ls[i - 1] * ls[i - 1];
            }
            if !(v > 0.0) {
                return Err(LabError::LinearAlgebra(format!("gamma not positive definite at row {i}")));
            }
            ld[i] = v.sqrt();
        }
        Ok((ld, ls))
    }

    /// Neumann-series bound `||D^{-1}||_inf / (1 - ||D^{-1}S||_inf)` when the series converges.
    pub fn neumann_bound(&self) -> Option<f64> {
        let dmin = self.diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let q = (0..self.n)
            .map(|b| {
                let s = if b > 0 { self.off[b - 1] } else { 0.0 } + if b + 1 < self.n { self.off[b] } else { 0.0 };
                s / self.diag[b]
            })
            .fold(0.0, f64::max);
        (q < 1.0 && dmin > 0.0).then(|| 1.0 / (dmin * (1.0 - q)))
    }

    pub fn exact(&self) -> ExactInverse {
        ExactInverse::new(self)
    }
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || off.len() + 1 != n.max(1) {
        return domain("tridiagonal solve: inconsistent sizes");
    }
    let mut c = vec![0.0; n];
    let mut x = rhs.to_vec();
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(LabError::LinearAlgebra("zero pivot".into()));
    }
    x[0] /= piv;
    for i in 1..n {
        c[i - 1] = off[i - 1] / piv;
        piv = diag[i] - off[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(LabError::LinearAlgebra(format!("zero pivot at row {i}")));
        }
        x[i] = (x[i] - off[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// `||Gamma^{-1}||_inf` from `N` tridiagonal solves (columns of the inverse;
/// the inverse is symmetric so column sums are row sums).
pub fn gamma_inverse_inf_norm(g: &GramMatrix) -> Result<f64> {
    let mut best = 0.0f64;
    let mut e = vec![0.0; g.n];
    for j in 0..g.n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = g.solve(&e)?;
        best = best.max(col.iter().map(|x| x.abs()).sum());
    }
    Ok(best)
}

/// Exact inverse of `T = mN * Gamma` as `adj / det`, from the usual
/// leading/trailing principal-minor recurrences.
#[derive(Debug, Clone)]
pub struct ExactInverse {
    pub m: usize,
    pub n: usize,
    /// `det T`
    pub det: BigInt,
    /// `adj[i][j]` with `T^{-1} = adj / det`
    pub adj: Vec<Vec<BigInt>>,
}

impl ExactInverse {
    pub fn new(g: &GramMatrix) -> Self {
        let n = g.n;
        let a: Vec<BigInt> = g.diag_units.iter().map(|&x| BigInt::from(x)).collect();
        let b: Vec<BigInt> = g.off_units.iter().map(|&x| BigInt::from(x)).collect();
        // theta[i] = det of leading i x i block
        let mut theta = vec![BigInt::from(1); n + 1];
        for i in 1..=n {
            let mut t = &a[i - 1] * &theta[i - 1];
            if i >= 2 {
                t -= &b[i - 2] * &b[i - 2] * &theta[i - 2];
            }
            theta[i] = t;
        }
        // phi[i] = det of trailing block starting at row i (0-based); phi[n] = 1
        let mut phi = vec![BigInt::from(1); n + 2];
        for i in (0..n).rev() {
            let mut t = &a[i] * &phi[i + 1];
            if i + 2 <= n {
                t -= &b[i] * &b[i] * &phi[i + 2];
            }
            phi[i] = t;
        }
        let mut adj = vec![vec![BigInt::zero(); n]; n];
        for i in 0..n {
            let mut prod = BigInt::from(1);
            for j in i..n {
                if j > i {
                    prod *= &b[j - 1];
                }
                let mut v = &prod * &theta[i] * &phi[j + 1];
                if (j - i) % 2 == 1 {
                    v = -v;
                }
                adj[i][j] = v.clone();
                adj[j][i] = v;
            }
        }
        Self { m: g.m, n, det: theta[n].clone(), adj }
    }

    /// `||Gamma^{-1}||_inf <= num/den`, decided exactly.
    /// `Gamma^{-1} = mN * T^{-1}`.
    pub fn inverse_norm_at_most(&self, num: u64, den: u64) -> bool {
        let mn = BigInt::from((self.m * self.n) as u64);
        let rhs = BigInt::from(num) * &self.det;
        self.adj.iter().all(|row| {
            let s: BigInt = row.iter().map(|x| x.abs()).sum();
            &mn * s * BigInt::from(den) <= rhs
        })
    }

    /// `L_a T^{-1}` numerators over `det`, for fine cell `a`.
    fn row_times_inverse(&self, a: usize) -> Vec<BigInt> {
        let l: Vec<(usize, u64)> = overlaps_of(self.m, a, self.n).collect();
        (0..self.n).map(|b| l.iter().map(|&(c, lc)| BigInt::from(lc) * &self.adj[c][b]).sum()).collect()
    }

    /// `max_b |C_{a,b}| <= 4 sqrt(N/m)`, i.e. `m |(L_a T^{-1})_b| <= 4`.
    pub fn coeff_bound_holds(&self, a: usize) -> bool {
        let m = BigInt::from(self.m as u64);
        let four = BigInt::from(4u8) * &self.det;
        self.row_times_inverse(a).iter().all(|x| &m * x.abs() <= four)
    }

    /// `Var E[xi_a | G] <= 8N/m`, i.e. `m L_a T^{-1} L_a^T <= 8N`.
    pub fn variance_bound_holds(&self, a: usize) -> bool {
        let r = self.row_times_inverse(a);
        let q: BigInt = overlaps_of(self.m, a, self.n).map(|(c, lc)| BigInt::from(lc) * &r[c]).sum();
        BigInt::from(self.m as u64) * q <= BigInt::from(8 * self.n as u64) * &self.det
    }
}

/// Row `C_{a,.}` of the conditional-expectation coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondCoeffs {
    pub a: BasisIndex,
    /// coefficients on the coarse basis of coordinate `a.coord()`
    pub row: Vec<f64>,
}

fn overlap_vector(m: usize, n: usize, cell: usize) -> Vec<f64> {
    let s = ((m * n) as f64).sqrt();
    let mut v = vec![0.0; n];
    for (b, l) in overlaps_of(m, cell, n) {
        v[b] = l as f64 / s;
    }
    v
}

/// Solves `C Gamma = v`, `v_c = <h_a^m, h_c^N>`.
pub fn cond_coeffs(m: usize, n: usize, a: BasisIndex) -> Result<CondCoeffs> {
    let g = gamma_matrix(m, n)?;
    cond_coeffs_with(&g, a)
}

pub fn cond_coeffs_with(g: &GramMatrix, a: BasisIndex) -> Result<CondCoeffs> {
    if a.m() != g.m {
        return domain("basis index grid does not match gamma");
    }
    let v = overlap_vector(g.m, g.n, a.cell());
    Ok(CondCoeffs { a, row: g.solve(&v)? })
}

/// `Var E[delta(h_a^m) | pi^N(B^m)] = v Gamma^{-1} v^T`.
pub fn cond_variance(m: usize, n: usize, a: BasisIndex) -> Result<f64> {
    let g = gamma_matrix(m, n)?;
    cond_variance_with(&g, a)
}

pub fn cond_variance_with(g: &GramMatrix, a: BasisIndex) -> Result<f64> {
    let c = cond_coeffs_with(g, a)?;
    let v = overlap_vector(g.m, g.n, a.cell());
    Ok(c.row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>().max(0.0))
}

/// Regression oracle for [`cond_variance`]: sample the fine Gaussian
/// coordinates, regress `xi_a` on the coarse coordinates `G_b` with two-fold
/// cross-fitting, and average `(beta_other . G) * xi_a`, which is unbiased
/// for the conditional variance.
pub fn cond_variance_mc_oracle(m: usize, n: usize, a: BasisIndex, reps: usize, stream: &SeededStream) -> Result<McEstimate> {
    if reps < 2 {
        return domain("oracle needs reps >= 2");
    }
    if n == 0 || n > m {
        return domain("oracle needs 1 <= N <= m");
    }
    let table = InnerProductTable::new(m, n)?;
    let mut gs = vec![0.0; reps * n];
    let mut ys = vec![0.0; reps];
    let mut xi = vec![0.0; m];
    for r in 0..reps {
        let mut rng = stream.child(r as u64).rng();
        xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let g = &mut gs[r * n..(r + 1) * n];
        for &(fa, b, _, v) in &table.entries {
            g[b] += v * xi[fa];
        }
        ys[r] = xi[a.cell()];
    }
    let half = reps / 2;
    let fit = |lo: usize, hi: usize| -> Result<Vec<f64>> {
        let mut xtx = vec![0.0; n * n];
        let mut xty = vec![0.0; n];
        for r in lo..hi {
            let g = &gs[r * n..(r + 1) * n];
            for i in 0..n {
                xty[i] += g[i] * ys[r];
                for j in 0..n {
                    xtx[i * n + j] += g[i] * g[j];
                }
            }
        }
        solve_dense(&mut xtx, &mut xty, n)
    };
    let beta = [fit(half, reps)?, fit(0, half)?];
    let samples: Vec<f64> = (0..reps)
        .map(|r| {
            let bt = &beta[(r >= half) as usize];
            let g = &gs[r * n..(r + 1) * n];
            bt.iter().zip(g).map(|(x, y)| x * y).sum::<f64>() * ys[r]
        })
        .collect();
    Ok(McEstimate::from_samples(&samples, stream.root()))
}

/// Gaussian elimination with partial pivoting (small dense systems).
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if a[p * n + k].abs() < 1e-300 {
            return Err(LabError::LinearAlgebra("singular normal equations".into()));
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            for j in k..n {
                a[i * n + j] -= f * a[k * n + j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(c: usize, cell: usize, m: usize) -> BasisIndex {
        BasisIndex::new(c, cell, m, 2).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        assert!((inner_ip(4, idx(1, 0, 4), 2, idx(1, 0, 2)) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(inner_ip(4, idx(1, 0, 4), 2, idx(2, 0, 2)), 0.0);
        assert!((inner_ip(3, idx(1, 1, 3), 2, idx(1, 0, 2)) - 6f64.sqrt() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_matrix(4, 2).unwrap();
        assert!(g.is_identity());
        let g = gamma_matrix(3, 2).unwrap();
        assert_eq!(g.diag_units, vec![5, 5]);
        assert_eq!(g.off_units, vec![1]);
        assert!((g.get(0, 1) - 1.0 / 6.0).abs() < 1e-16);
        assert!((gamma_inverse_inf_norm(&g).unwrap() - 1.5).abs() < 1e-14);
        let ex = g.exact();
        assert!(ex.inverse_norm_at_most(3, 2));
        assert!(!ex.inverse_norm_at_most(149, 100));
        assert!(gamma_matrix(4, 4).is_err());
        assert!(gamma_matrix(3, 5).is_err());
    }

    #[test]
    fn exact_inverse_matches_float() {
        for (m, n) in [(7, 3), (29, 5), (100, 9)] {
            let g = gamma_matrix(m, n).unwrap();
            let ex = g.exact();
            let det = ex.det.to_string().parse::<f64>().unwrap();
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = g.solve(&e).unwrap();
                for i in 0..n {
                    let want = ex.adj[i][j].to_string().parse::<f64>().unwrap() / det * (m * n) as f64;
                    assert!((col[i] - want).abs() < 1e-10 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn conditional_examples() {
        let a = BasisIndex::new(1, 0, 4, 1).unwrap();
        let c = cond_coeffs(4, 2, a).unwrap();
        assert!((c.row[0] - 0.5f64.sqrt()).abs() < 1e-15 && c.row[1] == 0.0);
        assert!((cond_variance(4, 2, a).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cholesky_reproduces_gamma() {
        let g = gamma_matrix(37, 6).unwrap();
        let (ld, ls) = g.cholesky().unwrap();
        for i in 0..6 {
            let d = ld[i] * ld[i] + if i > 0 { ls[i - 1] * ls[i - 1] } else { 0.0 };
            assert!((d - g.diag[i]).abs() < 1e-14);
            if i > 0 {
                assert!((ls[i - 1] * ld[i - 1] - g.off[i - 1]).abs() < 1e-14);
            }
        }
    }
}
