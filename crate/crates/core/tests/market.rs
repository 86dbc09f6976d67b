use std::io::Write as _;

use num_complex::Complex64;
use ounts::market::*;
use ounts::process::*;
use ounts::sampling::RngStream;

fn ou(alpha: f64, sigma: f64, nu: f64, b: f64) -> OuNtsParams {
    OuNtsParams::new(NtsParams::new(alpha, sigma, 0.0, nu).unwrap(), b, 0.0).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn horizon_grid() -> PathGrid {
    PathGrid::new(vec![0.0, 1.0 / 12.0, 0.5, 1.0]).unwrap()
}

fn check_martingale(model: &SpotModel, seed: u64) {
    let grid = horizon_grid();
    let sim = SpotSimulator::new(model.clone(), grid.clone(), Scheme::Exact).unwrap();
    let n = 100_000;
    let mut ratios = (0..3)
        .map(|_| Vec::with_capacity(n))
        .collect::<Vec<Vec<f64>>>();
    let mut rng = RngStream::new(seed, 0);
    for _ in 0..n {
        let s = sim.simulate(&mut rng).unwrap();
        for j in 0..3 {
            let t = grid.times()[j + 1];
            ratios[j].push(s[j + 1] / model.curve.value(t));
        }
    }
    for (j, r) in ratios.iter().enumerate() {
        let (m, se) = mean_se(r);
        assert!((m - 1.0).abs() <= 3.0 * se, "horizon {j}: mean {m} se {se}");
    }
}

#[test]
fn one_factor_martingale() {
    let model =
        SpotModel::one_factor(ForwardCurve::flat(20.0).unwrap(), ou(0.5, 0.2, 0.7, 10.0)).unwrap();
    check_martingale(&model, 11);
    let model =
        SpotModel::one_factor(ForwardCurve::flat(20.0).unwrap(), ou(0.3, 0.2, 0.7, 10.0)).unwrap();
    check_martingale(&model, 12);
}

#[test]
fn two_factor_martingale() {
    let levy = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let model = SpotModel::two_factor(
        ForwardCurve::flat(12.0).unwrap(),
        ou(0.5, 0.8, 0.5, 20.0),
        levy,
    )
    .unwrap();
    check_martingale(&model, 13);
}

#[test]
fn drift_is_nonpositive_and_vanishes_without_noise() {
    for &alpha in &[0.3, 0.5, 0.7] {
        let p = ou(alpha, 0.2, 0.7, 10.0);
        for &t in &[1.0 / 365.0, 1.0 / 12.0, 0.5, 1.0, 5.0] {
            assert!(rn_drift_one_factor(t, &p).unwrap() <= 0.0);
        }
    }
    let p = ou(0.5, 1e-9, 0.7, 10.0);
    assert!(rn_drift_one_factor(1.0, &p).unwrap().abs() < 1e-15);
    let p = ou(0.5, 0.0, 0.7, 10.0);
    assert_eq!(rn_drift_one_factor(1.0, &p).unwrap(), 0.0);
}

#[test]
fn drift_elementary_matches_general() {
    let p = ou(0.5, 0.2, 0.7, 10.0);
    for &t in &[1.0 / 12.0, 1.0] {
        let e = transition_cgf_elementary(1.0, t, &p).unwrap();
        let g = transition_cgf(1.0, t, &p).unwrap();
        assert!(
            (e - g).abs() < 1e-10 * g.abs().max(1.0),
            "t={t}: {e} vs {g}"
        );
        assert_eq!(rn_drift_one_factor(t, &p).unwrap(), -e);
    }
}

#[test]
fn drift_includes_initial_value() {
    let nts = NtsParams::new(0.5, 0.2, 0.0, 0.7).unwrap();
    let p0 = OuNtsParams::new(nts, 10.0, 0.0).unwrap();
    let p1 = OuNtsParams::new(nts, 10.0, 0.3).unwrap();
    let t = 0.1;
    let d = rn_drift_one_factor(t, &p1).unwrap() - rn_drift_one_factor(t, &p0).unwrap();
    assert!((d + 0.3 * (-1.0_f64).exp()).abs() < 1e-15);
}

#[test]
fn levy_drift_properties() {
    let zero = NtsParams::new(0.5, 0.0, 0.0, 0.3).unwrap();
    assert_eq!(rn_drift_levy(1.0, &zero).unwrap(), 0.0);
    let p = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let h1 = rn_drift_levy(0.25, &p).unwrap();
    let h2 = rn_drift_levy(0.5, &p).unwrap();
    assert!((h2 - 2.0 * h1).abs() < 1e-16);
    // e^{−h₂(1)} = E e^{L(1)} = exp(ψ(−i))
    let psi = che_nts_complex(Complex64::new(0.0, -1.0), &p);
    assert!((rn_drift_levy(1.0, &p).unwrap() + psi.re).abs() < 1e-14);
    assert!(psi.im.abs() < 1e-14);
    let bad = NtsParams::new(0.5, 2.0, 0.5, 0.3).unwrap();
    assert!(matches!(
        rn_drift_levy(1.0, &bad),
        Err(ounts::error::Error::Domain(_))
    ));
}

#[test]
fn levy_factor_martingale_by_direct_sampling() {
    let p = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let t = 1.0;
    let law = p.subordinator(t).unwrap();
    let h = rn_drift_levy(t, &p).unwrap();
    let mut rng = RngStream::new(21, 0);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let dl = ounts::sampling::sample_ts(&mut rng, &law);
            let l = p.theta * dl + p.sigma * dl.sqrt() * ounts::sampling::sample_normal(&mut rng);
            (h + l).exp()
        })
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn chf_basic_properties() {
    let levy = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let curve = ForwardCurve::flat(20.0).unwrap();
    for model in [
        SpotModel::one_factor(curve.clone(), ou(0.5, 0.2, 0.7, 10.0)).unwrap(),
        SpotModel::two_factor(curve.clone(), ou(0.7, 0.2, 0.7, 10.0), levy).unwrap(),
    ] {
        for &t in &[1.0 / 12.0, 1.0] {
            let z = log_spot_chf(0.0, t, &model).unwrap();
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            for k in -40..=40 {
                let u = k as f64 * 0.5;
                assert!(log_spot_chf(u, t, &model).unwrap().norm() <= 1.0 + 1e-14);
            }
            // E[S(t)] = F via the lch at u = −i
            let m1 = model
                .log_spot_lch(Complex64::new(0.0, -1.0), t)
                .unwrap()
                .exp();
            assert!((m1.re - 20.0).abs() < 1e-9 && m1.im.abs() < 1e-9, "{m1}");
        }
    }
}

#[test]
fn chf_matches_empirical() {
    let levy = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let model = SpotModel::two_factor(
        ForwardCurve::flat(20.0).unwrap(),
        ou(0.5, 0.2, 0.7, 10.0),
        levy,
    )
    .unwrap();
    let t = 0.5;
    let sim = SpotSimulator::new(
        model.clone(),
        PathGrid::new(vec![0.0, t]).unwrap(),
        Scheme::Exact,
    )
    .unwrap();
    let mut rng = RngStream::new(31, 0);
    let logs: Vec<f64> = (0..100_000)
        .map(|_| sim.simulate(&mut rng).unwrap()[1].ln())
        .collect();
    for &u in &[1.0, 5.0] {
        let exact = log_spot_chf(u, t, &model).unwrap();
        let re: Vec<f64> = logs.iter().map(|x| (u * x).cos()).collect();
        let im: Vec<f64> = logs.iter().map(|x| (u * x).sin()).collect();
        let (mr, sr) = mean_se(&re);
        let (mi, si) = mean_se(&im);
        assert!(
            (mr - exact.re).abs() <= 3.0 * sr,
            "u={u} re {mr} vs {}",
            exact.re
        );
        assert!(
            (mi - exact.im).abs() <= 3.0 * si,
            "u={u} im {mi} vs {}",
            exact.im
        );
    }
}

#[test]
fn degenerate_model_is_the_forward() {
    let levy = NtsParams::new(0.5, 0.0, 0.0, 0.2).unwrap();
    let model = SpotModel::two_factor(
        ForwardCurve::flat(20.0).unwrap(),
        ou(0.5, 0.0, 0.7, 10.0),
        levy,
    )
    .unwrap();
    let grid = PathGrid::uniform(1.0 / 365.0, 30).unwrap();
    let mut rng = RngStream::new(1, 0);
    for path in spot_paths(&mut rng, &grid, &model, Scheme::Exact, 5).unwrap() {
        assert!(path.iter().all(|&s| s == 20.0));
    }
}

#[test]
fn zeroed_levy_factor_reproduces_one_factor_paths() {
    let p = ou(0.5, 0.2, 0.7, 10.0);
    let curve = ForwardCurve::flat(20.0).unwrap();
    let one = SpotModel::one_factor(curve.clone(), p).unwrap();
    let two = SpotModel::two_factor(curve, p, NtsParams::new(0.5, 0.0, 0.0, 0.2).unwrap()).unwrap();
    let grid = PathGrid::uniform(1.0 / 365.0, 60).unwrap();
    let a = spot_paths(&mut RngStream::new(5, 3), &grid, &one, Scheme::Exact, 20).unwrap();
    let b = spot_paths(&mut RngStream::new(5, 3), &grid, &two, Scheme::Exact, 20).unwrap();
    assert_eq!(a, b);
}

#[test]
fn two_factor_log_variance_adds() {
    let p = ou(0.5, 0.2, 0.7, 10.0);
    let levy = NtsParams::new(0.5, 0.2, -0.05, 0.3).unwrap();
    let model = SpotModel::two_factor(ForwardCurve::flat(20.0).unwrap(), p, levy).unwrap();
    let t = 0.5;
    let sim =
        SpotSimulator::new(model, PathGrid::new(vec![0.0, t]).unwrap(), Scheme::Exact).unwrap();
    let mut rng = RngStream::new(41, 0);
    let logs: Vec<f64> = (0..100_000)
        .map(|_| sim.simulate(&mut rng).unwrap()[1].ln())
        .collect();
    let n = logs.len() as f64;
    let (m, _) = mean_se(&logs);
    let sq: Vec<f64> = logs.iter().map(|x| (x - m) * (x - m)).collect();
    let (var, se) = mean_se(&sq);
    let var = var * n / (n - 1.0);
    // Var L(t) = t(σ² + θ²ν) for a unit-mean subordinator with variance ν
    let exact = ou_cumulant(2, t, &p).unwrap()
        + t * (levy.sigma * levy.sigma + levy.theta * levy.theta * levy.nu);
    assert!(
        (var - exact).abs() <= 3.0 * se,
        "{var} vs {exact} (se {se})"
    );
}

#[test]
fn forward_curve_csv_and_lookup() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        f,
        "date,price\n2024-01-01,20.5\n2024-01-02,21.0\n2024-01-03,19.75"
    )
    .unwrap();
    let curve = ForwardCurve::from_csv(f.path()).unwrap();
    assert_eq!(curve.value(0.0), 20.5);
    assert_eq!(curve.value(0.5 / 365.0), 20.5);
    assert_eq!(curve.value(1.0 / 365.0), 21.0);
    assert_eq!(curve.value(2.0 / 365.0), 19.75);
    assert_eq!(curve.value(10.0), 19.75);

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "date,price\n2024-01-01,20.5\n2024-01-02,-1").unwrap();
    assert!(matches!(
        ForwardCurve::from_csv(bad.path()),
        Err(ounts::error::Error::Data(_))
    ));
    let mut garbled = tempfile::NamedTempFile::new().unwrap();
    writeln!(garbled, "date,price\n2024-01-01,20.5\n2024-01-02,abc").unwrap();
    match ForwardCurve::from_csv(garbled.path()) {
        Err(ounts::error::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert!(ForwardCurve::flat(0.0).is_err());
}

#[test]
fn invalid_models_are_rejected() {
    // √(2β)/σ ≤ 1
    let p = ou(0.5, 2.0, 2.0, 5.0);
    assert!(SpotModel::one_factor(ForwardCurve::flat(10.0).unwrap(), p).is_err());
    let ok = ou(0.5, 0.2, 0.7, 10.0);
    let levy = NtsParams::new(0.5, 1.0, 0.4, 0.9).unwrap();
    assert!(SpotModel::two_factor(ForwardCurve::flat(10.0).unwrap(), ok, levy).is_err());
}
