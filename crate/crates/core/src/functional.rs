//! Named path functionals with explicit Lipschitz constants (sup norm), and
//! analytic directional derivatives where they are smooth.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::paths::GridPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionalKind {
    Constant(f64),
    /// `x_k(1)`
    Endpoint {
        coord: usize,
    },
    /// `|x_k(1)|`
    AbsEndpoint {
        coord: usize,
    },
    /// `sup_t |x(t)|`
    SupNorm,
    /// `sup_t x_k(t)`
    RunningMax {
        coord: usize,
    },
    /// `int_0^1 x_k(t) dt`
    Integral {
        coord: usize,
    },
    /// `temp * ln( mean_j exp(x_k(t_j) / temp) )`
    SoftMax {
        coord: usize,
        times: Vec<f64>,
        temp: f64,
    },
    /// `sup_t max(0, -x(t))`, scalar paths only
    LocalTimeAtOne,
    /// `x_k(1)^power`
    EndpointPower {
        coord: usize,
        power: i32,
    },
    /// `sin(x_k(t))`
    SinAt {
        coord: usize,
        t: f64,
    },
    /// `x_k(t) * x_k(s)`
    Product {
        coord: usize,
        t: f64,
        s: f64,
    },
    /// `F(pi^N x)`
    Projected {
        inner: Box<PathFunctional>,
        n: usize,
    },
}

/// A functional together with its Lipschitz constant for the uniform norm
/// (`None` when it is not globally Lipschitz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFunctional {
    pub kind: FunctionalKind,
    pub lipschitz: Option<f64>,
}

impl PathFunctional {
    pub fn new(kind: FunctionalKind) -> Result<Self> {
        use FunctionalKind::*;
        let lipschitz = match &kind {
            Constant(_) => Some(0.0),
            Endpoint { .. } | AbsEndpoint { .. } | SupNorm | RunningMax { .. } | Integral { .. } | LocalTimeAtOne => Some(1.0),
            SoftMax { times, temp, .. } => {
                if times.is_empty() || !(*temp > 0.0) {
                    return domain("soft-max needs times and temp > 0");
                }
                check_times(times)?;
                Some(1.0)
            }
            SinAt { t, .. } => {
                check_times(&[*t])?;
                Some(1.0)
            }
            EndpointPower { power, .. } => {
                if *power < 0 {
                    return domain("endpoint power must be >= 0");
                }
                if *power <= 1 {
                    Some(*power as f64)
                } else {
                    None
                }
            }
            Product { t, s, .. } => {
                check_times(&[*t, *s])?;
                None
            }
            Projected { inner, n } => {
                if *n == 0 {
                    return domain("projection needs N >= 1");
                }
                // interpolation on a coarser grid is a sup-norm contraction
                inner.lipschitz
            }
        };
        Ok(Self { kind, lipschitz })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(FunctionalKind::Constant(c)).expect("valid")
    }
    pub fn endpoint() -> Self {
        Self::new(FunctionalKind::Endpoint { coord: 0 }).expect("valid")
    }
    pub fn abs_endpoint() -> Self {
        Self::new(FunctionalKind::AbsEndpoint { coord: 0 }).expect("valid")
    }
    pub fn sup_norm() -> Self {
        Self::new(FunctionalKind::SupNorm).expect("valid")
    }
    pub fn running_max() -> Self {
        Self::new(FunctionalKind::RunningMax { coord: 0 }).expect("valid")
    }
    pub fn integral() -> Self {
        Self::new(FunctionalKind::Integral { coord: 0 }).expect("valid")
    }
    pub fn local_time() -> Self {
        Self::new(FunctionalKind::LocalTimeAtOne).expect("valid")
    }
    pub fn endpoint_power(power: i32) -> Self {
        Self::new(FunctionalKind::EndpointPower { coord: 0, power }).expect("valid")
    }
    pub fn sin_at(t: f64) -> Result<Self> {
        Self::new(FunctionalKind::SinAt { coord: 0, t })
    }
    pub fn soft_max(times: Vec<f64>, temp: f64) -> Result<Self> {
        Self::new(FunctionalKind::SoftMax { coord: 0, times, temp })
    }
    pub fn product(t: f64, s: f64) -> Result<Self> {
        Self::new(FunctionalKind::Product { coord: 0, t, s })
    }

    /// `self o pi^N`.
    pub fn projected(self, n: usize) -> Result<Self> {
        Self::new(FunctionalKind::Projected { inner: Box::new(self), n })
    }

    pub fn name(&self) -> String {
        use FunctionalKind::*;
        match &self.kind {
            Constant(c) => format!("constant({c})"),
            Endpoint { .. } => "endpoint".into(),
            AbsEndpoint { .. } => "abs_endpoint".into(),
            SupNorm => "sup_norm".into(),
            RunningMax { .. } => "running_max".into(),
            Integral { .. } => "integral".into(),
            SoftMax { temp, .. } => format!("soft_max({temp})"),
            LocalTimeAtOne => "local_time".into(),
            EndpointPower { power, .. } => format!("endpoint^{power}"),
            SinAt { t, .. } => format!("sin_at({t})"),
            Product { t, s, .. } => format!("product({t},{s})"),
            Projected { inner, n } => format!("{}@N={n}", inner.name()),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "endpoint" => Self::endpoint(),
            "abs_endpoint" => Self::abs_endpoint(),
            "sup_norm" => Self::sup_norm(),
            "running_max" => Self::running_max(),
            "integral" => Self::integral(),
            "local_time" => Self::local_time(),
            other => return domain(format!("unknown functional '{other}'")),
        })
    }

    pub fn eval(&self, x: &GridPath) -> f64 {
        use FunctionalKind::*;
        match &self.kind {
            Constant(c) => *c,
            Endpoint { coord } => x.at(x.m(), *coord),
            AbsEndpoint { coord } => x.at(x.m(), *coord).abs(),
            SupNorm => (0..=x.m()).map(|i| x.vertex(i).iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max).sqrt(),
            RunningMax { coord } => (0..=x.m()).map(|i| x.at(i, *coord)).fold(f64::NEG_INFINITY, f64::max),
            Integral { coord } => {
                let h = 1.0 / x.m() as f64;
                (0..x.m()).map(|i| 0.5 * h * (x.at(i, *coord) + x.at(i + 1, *coord))).sum()
            }
            SoftMax { coord, times, temp } => {
                let vals: Vec<f64> = times.iter().map(|&t| at(x, t, *coord)).collect();
                let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = vals.iter().map(|v| ((v - top) / temp).exp()).sum::<f64>() / vals.len() as f64;
                top + temp * s.ln()
            }
            LocalTimeAtOne => x.values().iter().fold(0.0, |a: f64, v| a.max(-v)),
            EndpointPower { coord, power } => x.at(x.m(), *coord).powi(*power),
            SinAt { coord, t } => at(x, *t, *coord).sin(),
            Product { coord, t, s } => at(x, *t, *coord) * at(x, *s, *coord),
            Projected { inner, n } => inner.eval(&x.coarsen(*n).expect("n >= 1")),
        }
    }

    /// `<DF(x), h>` for the smooth members of the family.
    pub fn directional(&self, x: &GridPath, h: &GridPath) -> Option<f64> {
        use FunctionalKind::*;
        Some(match &self.kind {
            Constant(_) => 0.0,
            Endpoint { coord } => h.at(h.m(), *coord),
            Integral { coord } => Self::new(Integral { coord: *coord }).ok()?.eval(h),
            SoftMax { coord, times, temp } => {
                let vals: Vec<f64> = times.iter().map(|&t| at(x, t, *coord)).collect();
                let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = vals.iter().map(|v| ((v - top) / temp).exp()).collect();
                let z: f64 = w.iter().sum();
                times.iter().zip(&w).map(|(&t, wi)| wi / z * at(h, t, *coord)).sum()
            }
            EndpointPower { coord, power } => {
                if *power == 0 {
                    0.0
                } else {
                    *power as f64 * x.at(x.m(), *coord).powi(power - 1) * h.at(h.m(), *coord)
                }
            }
            SinAt { coord, t } => at(x, *t, *coord).cos() * at(h, *t, *coord),
            Product { coord, t, s } => at(h, *t, *coord) * at(x, *s, *coord) + at(x, *t, *coord) * at(h, *s, *coord),
            Projected { inner, n } => inner.directional(&x.coarsen(*n).ok()?, &h.coarsen(*n).ok()?)?,
            AbsEndpoint { .. } | SupNorm | RunningMax { .. } | LocalTimeAtOne => return None,
        })
    }

    pub fn is_smooth(&self) -> bool {
        use FunctionalKind::*;
        match &self.kind {
            Projected { inner, .. } => inner.is_smooth(),
            AbsEndpoint { .. } | SupNorm | RunningMax { .. } | LocalTimeAtOne => false,
            _ => true,
        }
    }
}

fn check_times(ts: &[f64]) -> Result<()> {
    if ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return domain("evaluation times must lie in [0, 1]");
    }
    Ok(())
}

#[inline]
fn at(x: &GridPath, t: f64, coord: usize) -> f64 {
    let s = t * x.m() as f64;
    let i = (s.floor() as usize).min(x.m() - 1);
    let w = s - i as f64;
    x.at(i, coord) + w * (x.at(i + 1, coord) - x.at(i, coord))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::IncrementLaw;
    use crate::rng::SeededStream;
    use crate::sample_walk;

    fn family() -> Vec<PathFunctional> {
        vec![
            PathFunctional::endpoint(),
            PathFunctional::abs_endpoint(),
            PathFunctional::sup_norm(),
            PathFunctional::running_max(),
            PathFunctional::integral(),
            PathFunctional::local_time(),
            PathFunctional::soft_max(vec![0.2, 0.5, 0.9], 0.3).unwrap(),
            PathFunctional::sin_at(0.4).unwrap(),
            PathFunctional::sup_norm().projected(3).unwrap(),
        ]
    }

    #[test]
    fn lipschitz_spot_check() {
        let law = IncrementLaw::gaussian(1);
        let root = SeededStream::new(12);
        for f in family() {
            let l = f.lipschitz.unwrap();
            for r in 0..200 {
                let x = sample_walk(12, &law, &root.child(2 * r));
                let y = sample_walk(12, &law, &root.child(2 * r + 1));
                let d = x.sub(&y).unwrap().values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                assert!((f.eval(&x) - f.eval(&y)).abs() <= l * d + 1e-12, "{}", f.name());
            }
        }
    }

    #[test]
    fn directional_matches_difference_quotient() {
        let law = IncrementLaw::gaussian(1);
        let root = SeededStream::new(13);
        let smooth = [
            PathFunctional::endpoint_power(3),
            PathFunctional::soft_max(vec![0.1, 0.55, 1.0], 0.5).unwrap(),
            PathFunctional::sin_at(0.3).unwrap(),
            PathFunctional::product(0.25, 0.8).unwrap(),
            PathFunctional::integral().projected(4).unwrap(),
        ];
        for f in smooth {
            let x = sample_walk(8, &law, &root.child(0));
            let h = sample_walk(8, &law, &root.child(1));
            let d = 1e-5;
            let fd = (f.eval(&x.lin_comb(1.0, &h, d).unwrap()) - f.eval(&x.lin_comb(1.0, &h, -d).unwrap())) / (2.0 * d);
            let an = f.directional(&x, &h).unwrap();
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{}: {fd} vs {an}", f.name());
        }
    }

    #[test]
    fn values() {
        let x = GridPath::scalar(vec![0.0, -1.0, 0.5, -2.0]).unwrap();
        assert_eq!(PathFunctional::endpoint().eval(&x), -2.0);
        assert_eq!(PathFunctional::sup_norm().eval(&x), 2.0);
        assert_eq!(PathFunctional::running_max().eval(&x), 0.5);
        assert_eq!(PathFunctional::local_time().eval(&x), 2.0);
        assert!((PathFunctional::integral().eval(&x) - (-0.5 - 0.25 - 0.75) / 3.0).abs() < 1e-15);
    }
}
