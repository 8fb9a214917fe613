//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule on `panels` equal sub-intervals of [a, b].
    pub fn composite(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels).map(|k| self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &f)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// 7-point Gauss weights at `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of [`adaptive_gk_replicated`].
#[derive(Debug, Clone)]
pub struct ReplicatedIntegral {
    /// per-replicate integrals on the final partition
    pub per_replicate: Vec<f64>,
    /// Kronrod-minus-Gauss error estimate for the replicate mean
    pub error: f64,
    pub intervals: usize,
}

struct Panel {
    a: f64,
    b: f64,
    err: f64,
    per_rep: Vec<f64>,
}

fn gk_panel(a: f64, b: f64, reps: usize, f: &mut impl FnMut(f64, &mut [f64]), buf: &mut [f64]) -> Panel {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = vec![0.0; reps];
    let mut gauss = vec![0.0; reps];
    for j in 0..8 {
        let xs: &[f64] = if j == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &sgn in xs {
            f(mid + sgn * half * XGK[j], buf);
            for r in 0..reps {
                kron[r] += WGK[j] * buf[r];
                if j % 2 == 1 {
                    gauss[r] += WG[j / 2] * buf[r];
                }
            }
        }
    }
    let (mut km, mut gm) = (0.0, 0.0);
    for r in 0..reps {
        kron[r] *= half;
        km += kron[r];
        gm += gauss[r] * half;
    }
    let err = (km - gm).abs() / reps as f64;
    Panel { a, b, err, per_rep: kron }
}

/// Adaptive Gauss–Kronrod (7/15) for a family of integrands sharing the
/// abscissae: `f(t, out)` writes all replicate values at `t`. Panels are
/// bisected by largest error of the replicate mean until the summed error
/// is below `tol` or `max_panels` is reached.
pub fn adaptive_gk_replicated(
    a: f64,
    b: f64,
    reps: usize,
    tol: f64,
    max_panels: usize,
    mut f: impl FnMut(f64, &mut [f64]),
) -> ReplicatedIntegral {
    let mut buf = vec![0.0; reps];
    let mut panels = vec![gk_panel(a, b, reps, &mut f, &mut buf)];
    loop {
        let total: f64 = panels.iter().map(|p| p.err).sum();
        if total <= tol || panels.len() >= max_panels {
            break;
        }
        let worst = (0..panels.len()).max_by(|&i, &j| panels[i].err.total_cmp(&panels[j].err)).unwrap();
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(gk_panel(p.a, mid, reps, &mut f, &mut buf));
        panels.push(gk_panel(mid, p.b, reps, &mut f, &mut buf));
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut per_replicate = vec![0.0; reps];
    for p in &panels {
        per_replicate.iter_mut().zip(&p.per_rep).for_each(|(acc, v)| *acc += v);
    }
    ReplicatedIntegral { per_replicate, error: panels.iter().map(|p| p.err).sum(), intervals: panels.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..20 {
            let g = GaussLegendre::new(n);
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let exact = 1.0 / (deg as f64 + 1.0);
            let got = g.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-13, "n={n} got {got} exact {exact}");
        }
    }

    #[test]
    fn adaptive_kronrod_handles_kinks_and_replicates() {
        // replicate r integrates |t - c_r| over [0, 2]
        let cs = [0.3, 1.0, 1.7];
        let res = adaptive_gk_replicated(0.0, 2.0, 3, 1e-10, 200, |t, out| {
            for (o, c) in out.iter_mut().zip(&cs) {
                *o = (t - c).abs();
            }
        });
        for (got, c) in res.per_replicate.iter().zip(&cs) {
            let exact = 0.5 * (c * c + (2.0 - c) * (2.0 - c));
            assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
        }
        let res = adaptive_gk_replicated(0.0, 1.0, 1, 1e-13, 50, |t, out| out[0] = (3.0 * t).exp());
        assert!(res.intervals <= 4);
        assert!((res.per_replicate[0] - (3f64.exp() - 1.0) / 3.0).abs() < 1e-13);
    }

    #[test]
    fn smooth_integrand() {
        let g = GaussLegendre::new(12);
        let got = g.composite(0.0, 2.0, 3, f64::exp);
        assert!((got - (2f64.exp() - 1.0)).abs() < 1e-13);
    }
}
