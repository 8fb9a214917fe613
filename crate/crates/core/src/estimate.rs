use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::SeededStream;

/// Monte Carlo scalar estimate together with what it takes to reproduce it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Sample mean and its standard error (sample sd over sqrt(n)).
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let stats = Moments::from_slice(samples);
        Self { value: stats.mean, std_error: stats.std_error(), reps: samples.len(), seed }
    }

    pub fn exact(value: f64, reps: usize, seed: u64) -> Self {
        Self { value, std_error: 0.0, reps, seed }
    }

    /// True when `|self - target| <= k * s.e.` (plus an absolute slack).
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + slack
    }

    /// Combined standard error of the difference of two independent estimates.
    pub fn combined_se(&self, other: &McEstimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// Running mean/variance (Welford), merged in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Runs `f` on the child stream of every replicate in parallel and returns
/// the outputs in replicate order, so results do not depend on scheduling.
pub fn replicate<T: Send>(reps: usize, stream: &SeededStream, f: impl Fn(&SeededStream) -> T + Sync) -> Vec<T> {
    (0..reps).into_par_iter().map(|r| f(&stream.child(r as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 0.25];
        let m = Moments::from_slice(&xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean - mean).abs() < 1e-14);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let e = McEstimate::from_samples(&[2.0; 10], 1);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.reps, 10);
    }
}
