use donsker_core::paths::{basis_h, BasisIndex, GridPath, IncrementLaw};
use donsker_core::sobolev::*;
use donsker_core::{sample_walk, SeededStream};
use proptest::prelude::*;

fn quad() -> QuadratureSpec {
    QuadratureSpec::new(6, 2, 1e-6).unwrap()
}

/// Midpoint double sum on a fine uniform grid, with the same-cell blocks of
/// the fine grid added in closed form.
fn dense_oracle(f: &GridPath, eta: f64, p: f64, fine: usize) -> f64 {
    let g = f.refine(fine);
    let m = g.m();
    let h = 1.0 / m as f64;
    let gamma = 1.0 + p * eta;
    let mids: Vec<f64> = (0..m).map(|i| 0.5 * (g.at(i, 0) + g.at(i + 1, 0))).collect();
    let mut total = 0.0;
    for i in 0..m {
        // int |f|^p on the fine cell, Simpson is enough at this resolution
        let (a, b, c) = (g.at(i, 0).abs(), mids[i].abs(), g.at(i + 1, 0).abs());
        total += h * (a.powf(p) + 4.0 * b.powf(p) + c.powf(p)) / 6.0;
        let al = p - 1.0 - p * eta;
        let slope = (g.at(i + 1, 0) - g.at(i, 0)) / h;
        total += slope.abs().powf(p) * 2.0 * h.powf(al + 2.0) / ((al + 1.0) * (al + 2.0));
        for j in 0..m {
            if j != i {
                let u = (i as f64 - j as f64).abs() * h;
                total += h * h * (mids[i] - mids[j]).abs().powf(p) / u.powf(gamma);
            }
        }
    }
    total.powf(1.0 / p)
}

#[test]
fn identity_path_at_quarter_four() {
    let f = GridPath::scalar(vec![0.0, 1.0]).unwrap();
    let idx = SobolevIndex::general(0.25, 4.0).unwrap();
    let exact = (11.0f64 / 30.0).powf(0.25);
    let got = norm_eta_p(&f, idx, quad()).unwrap();
    let oracle = dense_oracle(&f, 0.25, 4.0, 400);
    assert!((got.value - exact).abs() <= got.error + 1e-12);
    assert!((oracle - exact).abs() < 2e-3 * exact, "oracle {oracle} vs {exact}");
}

#[test]
fn matches_dense_oracle_on_random_paths() {
    let root = SeededStream::new(404);
    for (eta, p) in [(0.3, 4.0), (0.25, 4.0), (0.1, 20.0)] {
        let idx = SobolevIndex::general(eta, p).unwrap();
        for r in 0..20 {
            let m = 3 + (r as usize % 6);
            let f = sample_walk(m, &IncrementLaw::gaussian(1), &root.child(r));
            let got = norm_eta_p(&f, idx, quad()).unwrap();
            let oracle = dense_oracle(&f, eta, p, 600 / m);
            let rel = (got.value - oracle).abs() / oracle;
            assert!(rel < 2e-3, "(eta,p)=({eta},{p}) r={r}: {} vs oracle {oracle}", got.value);
        }
    }
}

#[test]
fn error_estimate_respects_tolerance_and_refinement() {
    let idx = validate_index(0.1, 20.0).unwrap();
    let root = SeededStream::new(9);
    for r in 0..10 {
        let f = sample_walk(64, &IncrementLaw::rademacher(1), &root.child(r));
        let coarse = norm_eta_p(&f, idx, QuadratureSpec::new(4, 1, 1e-3).unwrap()).unwrap();
        let fine = norm_eta_p(&f, idx, QuadratureSpec::new(8, 3, 1e-7).unwrap()).unwrap();
        assert!(coarse.error <= 1e-3 * coarse.value);
        assert!((coarse.value - fine.value).abs() <= coarse.error + fine.error, "{coarse:?} {fine:?}");
    }
}

#[test]
fn step_primitive_examples() {
    let idx = SobolevIndex::general(0.25, 4.0).unwrap();
    let (n, ratio) = step_primitive_norm_check(0.0, 1.0, idx, quad()).unwrap();
    let oracle = dense_oracle(&GridPath::scalar(vec![0.0, 1.0]).unwrap(), 0.25, 4.0, 400);
    assert!((n - oracle).abs() < 2e-3 * n);
    assert_eq!(n, ratio);
    assert!(step_primitive_norm_check(0.5, 0.5, idx, quad()).is_err());
    assert!(step_primitive_norm_check(0.6, 0.2, idx, quad()).is_err());

    let idx = validate_index(0.1, 20.0).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..12 {
        let w = 0.5f64.powi(k);
        let (n, _) = step_primitive_norm_check(0.3, 0.3 + w, idx, quad()).unwrap();
        assert!(n < last);
        last = n;
    }
    assert!(last < 1e-3);
}

#[test]
fn step_primitive_ratio_sweep_is_stable() {
    let idx = validate_index(0.1, 20.0).unwrap();
    let coarse = QuadratureSpec::new(4, 1, 1e-3).unwrap();
    let fine = QuadratureSpec::new(8, 3, 1e-6).unwrap();
    let mut rng = SeededStream::new(100).rng();
    let (mut max_c, mut max_f) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        use rand::Rng;
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let (s1, s2) = if a < b { (a, b) } else { (b, a) };
        max_c = max_c.max(step_primitive_norm_check(s1, s2, idx, coarse).unwrap().1);
        max_f = max_f.max(step_primitive_norm_check(s1, s2, idx, fine).unwrap().1);
    }
    assert!(max_f.is_finite() && max_f < 10.0, "{max_f}");
    assert!((max_c - max_f).abs() < 2e-3 * max_f, "{max_c} vs {max_f}");
}

#[test]
fn kernel_ratio_is_bounded() {
    let idx = validate_index(0.1, 20.0).unwrap();
    let ratios: Vec<f64> = [4, 16, 64, 256].iter().map(|&n| kernel_integral_check(n, idx).unwrap().1).collect();
    // exact ratios increase to 2 (1/(be+1) + 1/(gamma-1)), be = p/2 - gamma
    let limit = 2.0 * (1.0 / 8.0 + 1.0 / 2.0);
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");
    assert!(ratios.iter().all(|&r| r > 0.0 && r < limit), "{ratios:?}");
    assert!((kernel_integral_check(1 << 20, idx).unwrap().1 - limit).abs() < 1e-5);
    // from N = 16 on the ratio sits within 20% of its limit
    assert!(ratios[1..].iter().all(|&r| r > 0.8 * limit), "{ratios:?}");
    // integrable exactly when eta < 1/2
    for (eta, p) in [(0.06, 20.0), (0.3, 4.0), (0.49, 3.0)] {
        let idx = validate_index(eta, p).unwrap();
        assert!(p / 2.0 - 1.0 - eta * p > -1.0);
        assert!(kernel_integral_check(8, idx).unwrap().0.is_finite());
    }
    // admissible, but eta >= 1/2 makes the kernel integral diverge
    for (eta, p) in [(0.74, 4.0), (0.55, 2.1)] {
        let idx = validate_index(eta, p).unwrap();
        assert!(kernel_integral_check(8, idx).is_err());
    }
}

#[test]
fn projected_basis_norm_ratio_is_bounded() {
    let idx = validate_index(0.1, 20.0).unwrap();
    let mut ratios = Vec::new();
    for n in [2usize, 4, 8] {
        for m in [9 * n, 16 * n, 33 * n] {
            for cell in [0, m / 3, m - 1] {
                let h = basis_h(BasisIndex::new(1, cell, m, 1).unwrap(), 1);
                let proj = h.coarsen(n).unwrap();
                let v = norm_eta_p(&proj, idx, quad()).unwrap().value;
                let scale = (n as f64 / m as f64).sqrt() * (n as f64).powf(0.1 - 0.5);
                ratios.push(v / scale);
            }
        }
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi < 10.0 && hi / lo < 10.0, "{ratios:?}");
}

fn small_path() -> impl Strategy<Value = GridPath> {
    (2usize..12).prop_flat_map(|m| prop::collection::vec(-2.0f64..2.0, m + 1).prop_map(|v| GridPath::scalar(v).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogeneity(f in small_path(), lambda in -3.0f64..3.0) {
        let idx = validate_index(0.3, 4.0).unwrap();
        let a = norm_eta_p(&f, idx, quad()).unwrap();
        let b = norm_eta_p(&f.scaled(lambda), idx, quad()).unwrap();
        let want = lambda.abs() * a.value;
        prop_assert!((b.value - want).abs() <= b.error + lambda.abs() * a.error + 1e-12);
    }

    #[test]
    fn triangle_inequality(f in small_path(), g in small_path()) {
        let idx = validate_index(0.1, 20.0).unwrap();
        let s = f.add(&g).unwrap();
        let (a, b, c) = (
            norm_eta_p(&f, idx, quad()).unwrap(),
            norm_eta_p(&g, idx, quad()).unwrap(),
            norm_eta_p(&s, idx, quad()).unwrap(),
        );
        prop_assert!(c.value <= a.value + b.value + 2.0 * (a.error + b.error + c.error));
    }

    #[test]
    fn sup_norm_is_dominated(f in small_path()) {
        // (0.3, 4) embeds into the uniform norm; check the direction with a generous constant
        let idx = validate_index(0.3, 4.0).unwrap();
        let v = norm_eta_p(&f, idx, quad()).unwrap().value;
        prop_assert!(norm_sup(&f) <= 4.0 * v);
    }
}

#[test]
fn embedding_direction_on_walks() {
    // eta - 1/p = 0.05 for both; p >= q
    let strong = validate_index(0.1, 20.0).unwrap();
    let weak = validate_index(0.3, 4.0).unwrap();
    let root = SeededStream::new(55);
    let mut c = 0.0f64;
    for r in 0..30 {
        let f = sample_walk(32, &IncrementLaw::gaussian(1), &root.child(r));
        let a = norm_eta_p(&f, weak, quad()).unwrap().value;
        let b = norm_eta_p(&f, strong, quad()).unwrap().value;
        c = c.max(a / b);
    }
    assert!(c.is_finite() && c < 5.0, "fitted constant {c}");
}
