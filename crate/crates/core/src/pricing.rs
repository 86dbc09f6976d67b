//! Contract valuation: Fourier call strips, Monte Carlo strips and Asian
//! options, and least-squares Monte Carlo swing options.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{SpotModel, SpotSimulator};
use crate::process::{PathGrid, Scheme};
use crate::sampling::RngStream;

/// Value with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub method: String,
    pub seed: u64,
}

impl PriceEstimate {
    /// Sample mean and `sd/√n` of per-path values, summed in path order.
    pub fn from_samples(samples: &[f64], method: &str, seed: u64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        PriceEstimate {
            value: mean,
            stderr: (var / n).sqrt(),
            n_paths: samples.len(),
            method: method.into(),
            seed,
        }
    }
}

/// Monte Carlo run settings. Path `i` always uses stream `(seed, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub seed: u64,
    pub n_paths: usize,
    pub scheme: Scheme,
}

impl McSettings {
    pub fn new(seed: u64, n_paths: usize) -> Self {
        McSettings {
            seed,
            n_paths,
            scheme: Scheme::Exact,
        }
    }
}

/// Evaluate `f` on every path in parallel; results are in path order.
pub fn map_paths<T, F>(seed: u64, n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T> + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| f(&mut RngStream::new(seed, i)))
        .collect()
}

fn check_dates(times: &[f64], what: &str) -> Result<()> {
    if times.is_empty() {
        return Err(Error::params(format!("{what} needs at least one date")));
    }
    if !(times[0] > 0.0) {
        return Err(Error::params(format!(
            "{what} dates must be positive, got {}",
            times[0]
        )));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::params(format!(
                "{what} dates must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn check_strike(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::params(format!("strike must be positive, got {k}")));
    }
    Ok(())
}

/// Simulation grid `0, t₁, …, t_M`.
fn grid_for(times: &[f64]) -> Result<PathGrid> {
    let mut g = Vec::with_capacity(times.len() + 1);
    g.push(0.0);
    g.extend_from_slice(times);
    PathGrid::new(g)
}

/// Daily strip of calls `Σ_m (S(t_m) − K)⁺`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallStripSpec {
    pub fixing_times: Vec<f64>,
    pub strike: f64,
}

impl CallStripSpec {
    pub fn new(fixing_times: Vec<f64>, strike: f64) -> Result<Self> {
        check_dates(&fixing_times, "call strip")?;
        check_strike(strike)?;
        Ok(CallStripSpec {
            fixing_times,
            strike,
        })
    }
}

/// Discounted exercise values `e^{−r t_m}(S(t_m) − K)⁺` along a path;
/// `spot[0]` is the value at time 0 and is skipped.
pub fn discounted_call_payoffs(
    spot: &[f64],
    times: &[f64],
    strike: f64,
    rate: f64,
    out: &mut [f64],
) {
    for (m, (s, t)) in spot[1..].iter().zip(times).enumerate() {
        out[m] = (-rate * t).exp() * (s - strike).max(0.0);
    }
}

/// Carr–Madan grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftSettings {
    pub damping: f64,
    pub log2_n: u32,
    pub eta: f64,
}

impl Default for FftSettings {
    fn default() -> Self {
        FftSettings {
            damping: 0.75,
            log2_n: 14,
            eta: 0.1,
        }
    }
}

/// Damped-call Fourier inversion on a log-strike grid centred at
/// `log_strike`. Returns `(log strikes, undiscounted call prices)`.
pub fn carr_madan<F>(lch: F, log_strike: f64, fft: &FftSettings) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let n = 1usize << fft.log2_n;
    let a = fft.damping;
    let eta = fft.eta;
    let lambda = 2.0 * std::f64::consts::PI / (n as f64 * eta);
    let k0 = log_strike - lambda * (n / 2) as f64;
    let i = Complex64::i();
    let mut buf = Vec::with_capacity(n);
    for j in 0..n {
        let v = eta * j as f64;
        let phi = lch(Complex64::new(v, -(a + 1.0)))?.exp();
        let denom = Complex64::new(a * a + a - v * v, (2.0 * a + 1.0) * v);
        let psi = phi / denom;
        let simpson = if j == 0 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        buf.push((-i * v * k0).exp() * psi * (eta * simpson / 3.0));
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let ks: Vec<f64> = (0..n).map(|m| k0 + lambda * m as f64).collect();
    let prices = ks
        .iter()
        .zip(&buf)
        .map(|(k, z)| (-a * k).exp() / std::f64::consts::PI * z.re)
        .collect();
    Ok((ks, prices))
}

/// FFT strip value with the per-fixing call prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripValuation {
    pub estimate: PriceEstimate,
    pub per_fixing: Vec<f64>,
}

/// Call price at a single fixing by Carr–Madan. Strikes below the
/// forward are priced through the put, damped by `e^{(1 + d)k}`, and
/// put-call parity.
pub fn call_price_fft(
    model: &SpotModel,
    t: f64,
    strike: f64,
    rate: f64,
    fft: &FftSettings,
) -> Result<f64> {
    check_strike(strike)?;
    let d = fft.damping;
    let forward = model.curve.value(t);
    let in_the_money = strike < forward;
    let (bound, side) = if in_the_money {
        (model.negative_moment_bound(), "put-side")
    } else {
        (model.moment_bound(), "call-side")
    };
    if !(d > 0.0 && d + 1.0 < bound) {
        return Err(Error::domain(format!(
            "Carr-Madan damping {d} infeasible ({side}): the feasible interval is (0, {})",
            bound - 1.0
        )));
    }
    let damping = if in_the_money { -1.0 - d } else { d };
    let settings = FftSettings { damping, ..*fft };
    let (_, prices) = carr_madan(|u| model.log_spot_lch(u, t), strike.ln(), &settings)?;
    let mut c = prices[prices.len() / 2];
    if in_the_money {
        c += forward - strike;
    }
    if !c.is_finite() {
        return Err(Error::numerical(format!(
            "Fourier inversion produced {c} at t = {t}"
        )));
    }
    Ok((-rate * t).exp() * c.max(0.0))
}

pub fn price_call_strip_fft(
    model: &SpotModel,
    spec: &CallStripSpec,
    rate: f64,
    fft: &FftSettings,
) -> Result<StripValuation> {
    check_dates(&spec.fixing_times, "call strip")?;
    let per_fixing = spec
        .fixing_times
        .iter()
        .map(|&t| call_price_fft(model, t, spec.strike, rate, fft))
        .collect::<Result<Vec<_>>>()?;
    let value = per_fixing.iter().sum();
    Ok(StripValuation {
        estimate: PriceEstimate {
            value,
            stderr: 0.0,
            n_paths: 0,
            method: "fft".into(),
            seed: 0,
        },
        per_fixing,
    })
}

/// Monte Carlo strip with per-fixing estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripMc {
    pub estimate: PriceEstimate,
    pub per_fixing: Vec<PriceEstimate>,
}

pub fn price_call_strip_mc(
    model: &SpotModel,
    spec: &CallStripSpec,
    rate: f64,
    mc: &McSettings,
) -> Result<StripMc> {
    check_dates(&spec.fixing_times, "call strip")?;
    if mc.n_paths < 2 {
        return Err(Error::params("Monte Carlo needs at least 2 paths"));
    }
    let sim = SpotSimulator::new(model.clone(), grid_for(&spec.fixing_times)?, mc.scheme)?;
    let m = spec.fixing_times.len();
    let per_path = map_paths(mc.seed, mc.n_paths, |rng| {
        let spot = sim.simulate(rng)?;
        let mut pay = vec![0.0; m];
        discounted_call_payoffs(&spot, &spec.fixing_times, spec.strike, rate, &mut pay);
        Ok(pay)
    })?;
    let totals: Vec<f64> = per_path.iter().map(|p| p.iter().sum()).collect();
    let method = format!("mc-{}", mc.scheme);
    let per_fixing = (0..m)
        .map(|j| {
            let col: Vec<f64> = per_path.iter().map(|p| p[j]).collect();
            PriceEstimate::from_samples(&col, &method, mc.seed)
        })
        .collect();
    Ok(StripMc {
        estimate: PriceEstimate::from_samples(&totals, &method, mc.seed),
        per_fixing,
    })
}

/// Asian option on the arithmetic average of `S(t_1), …, S(t_I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsianSpec {
    pub fixing_times: Vec<f64>,
    pub strike: f64,
}

impl AsianSpec {
    pub fn new(fixing_times: Vec<f64>, strike: f64) -> Result<Self> {
        check_dates(&fixing_times, "Asian option")?;
        check_strike(strike)?;
        Ok(AsianSpec {
            fixing_times,
            strike,
        })
    }

    /// `I` equally spaced fixings from `first` to `maturity`.
    pub fn forward_start(first: f64, maturity: f64, fixings: usize, strike: f64) -> Result<Self> {
        if fixings == 0 || !(maturity >= first) {
            return Err(Error::params(
                "forward-start Asian needs I >= 1 and maturity >= first fixing",
            ));
        }
        let times = if fixings == 1 {
            vec![maturity]
        } else {
            (0..fixings)
                .map(|i| first + i as f64 * (maturity - first) / (fixings - 1) as f64)
                .collect()
        };
        AsianSpec::new(times, strike)
    }

    pub fn maturity(&self) -> f64 {
        *self.fixing_times.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsianValuation {
    pub call: PriceEstimate,
    pub put: PriceEstimate,
    /// Discounted sample mean of the average price.
    pub discounted_average: f64,
}

/// Forward-start Asian call and put on shared paths. The grid has no
/// points before the first fixing, so the first step is one exact jump.
pub fn price_asian_mc(
    model: &SpotModel,
    spec: &AsianSpec,
    rate: f64,
    mc: &McSettings,
) -> Result<AsianValuation> {
    check_dates(&spec.fixing_times, "Asian option")?;
    if mc.n_paths < 2 {
        return Err(Error::params("Monte Carlo needs at least 2 paths"));
    }
    let sim = SpotSimulator::new(model.clone(), grid_for(&spec.fixing_times)?, mc.scheme)?;
    let disc = (-rate * spec.maturity()).exp();
    let count = spec.fixing_times.len() as f64;
    let averages = map_paths(mc.seed, mc.n_paths, |rng| {
        let spot = sim.simulate(rng)?;
        Ok(spot[1..].iter().sum::<f64>() / count)
    })?;
    let k = spec.strike;
    let calls: Vec<f64> = averages.iter().map(|a| disc * (a - k).max(0.0)).collect();
    let puts: Vec<f64> = averages.iter().map(|a| disc * (k - a).max(0.0)).collect();
    let method = format!("mc-{}", mc.scheme);
    Ok(AsianValuation {
        call: PriceEstimate::from_samples(&calls, &method, mc.seed),
        put: PriceEstimate::from_samples(&puts, &method, mc.seed),
        discounted_average: disc * averages.iter().sum::<f64>() / averages.len() as f64,
    })
}

/// Swing option with `rights` unit exercises of `(S − K)⁺` over the
/// exercise dates, at most one per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingSpec {
    pub exercise_times: Vec<f64>,
    pub rights: usize,
    pub strike: f64,
    /// Degree `B` of the polynomial regression basis.
    pub degree: usize,
}

impl SwingSpec {
    pub fn new(exercise_times: Vec<f64>, rights: usize, strike: f64) -> Result<Self> {
        check_dates(&exercise_times, "swing option")?;
        check_strike(strike)?;
        if rights == 0 || rights > exercise_times.len() {
            return Err(Error::params(format!(
                "swing rights must lie in 1..={} (number of exercise dates), got {rights}",
                exercise_times.len()
            )));
        }
        Ok(SwingSpec {
            exercise_times,
            rights,
            strike,
            degree: 3,
        })
    }

    /// Daily exercise over the final year `[T − 1, T]`: `t_k = T − 1 + k/365`.
    pub fn final_year_daily(maturity: f64, rights: usize, strike: f64) -> Result<Self> {
        let times = (1..=365)
            .map(|k| maturity - 1.0 + k as f64 / 365.0)
            .collect();
        SwingSpec::new(times, rights, strike)
    }
}

/// Least-squares regression of a response on `{1, x, …, x^B}` with a
/// precomputed factorisation of the normal equations.
struct Regressor {
    basis: Vec<Vec<f64>>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Regressor {
    fn new(spot: &[f64], degree: usize) -> Self {
        let n = spot.len() as f64;
        let mean = spot.iter().sum::<f64>() / n;
        let sd = (spot.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        let mut deg = if sd > 1e-12 * mean.abs().max(1.0) {
            degree
        } else {
            0
        };
        loop {
            let basis: Vec<Vec<f64>> = (0..=deg)
                .map(|p| {
                    spot.iter()
                        .map(|s| ((s - mean) / if deg == 0 { 1.0 } else { sd }).powi(p as i32))
                        .collect()
                })
                .collect();
            let dim = deg + 1;
            let gram = DMatrix::from_fn(dim, dim, |i, j| {
                basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum()
            });
            let scale = gram.diagonal().max();
            let chol = gram.clone().cholesky().filter(|c| {
                let d = c.l().diagonal();
                d.iter().all(|v| *v * *v > 1e-12 * scale)
            });
            if chol.is_some() || deg == 0 {
                if deg < degree {
                    log::warn!("swing regression basis reduced from degree {degree} to {deg}");
                }
                return Regressor { basis, chol };
            }
            deg -= 1;
        }
    }

    fn fit(&self, response: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_iterator(
            self.basis.len(),
            self.basis
                .iter()
                .map(|b| b.iter().zip(response).map(|(x, y)| x * y).sum::<f64>()),
        );
        match &self.chol {
            Some(c) => c.solve(&rhs).iter().copied().collect(),
            None => vec![rhs[0] / response.len() as f64],
        }
    }

    fn predict(&self, coef: &[f64], path: usize) -> f64 {
        coef.iter().zip(&self.basis).map(|(c, b)| c * b[path]).sum()
    }
}

/// Swing value by least-squares Monte Carlo. The backward pass fits the
/// exercise boundary; the forward pass re-values that policy on the same
/// paths.
pub fn price_swing_lsmc(
    model: &SpotModel,
    spec: &SwingSpec,
    rate: f64,
    mc: &McSettings,
) -> Result<PriceEstimate> {
    check_dates(&spec.exercise_times, "swing option")?;
    let n_rights = spec.rights;
    let m_dates = spec.exercise_times.len();
    if n_rights == 0 || n_rights > m_dates {
        return Err(Error::params(format!(
            "swing rights must lie in 1..={m_dates}, got {n_rights}"
        )));
    }
    if mc.n_paths < 10 * (spec.degree + 1) {
        return Err(Error::params(format!(
            "LSMC needs at least {} paths",
            10 * (spec.degree + 1)
        )));
    }
    let sim = SpotSimulator::new(model.clone(), grid_for(&spec.exercise_times)?, mc.scheme)?;
    let payoffs = map_paths(mc.seed, mc.n_paths, |rng| {
        let spot = sim.simulate(rng)?;
        let mut pay = vec![0.0; m_dates];
        discounted_call_payoffs(&spot, &spec.exercise_times, spec.strike, rate, &mut pay);
        Ok((spot, pay))
    })?;
    let n_paths = payoffs.len();

    // backward pass: value[p][r] is the pathwise value with r rights left
    let mut value = vec![vec![0.0; n_rights + 1]; n_paths];
    let mut coefficients: Vec<Vec<Vec<f64>>> = vec![Vec::new(); m_dates];
    let mut regressors: Vec<Option<Regressor>> = (0..m_dates).map(|_| None).collect();
    for m in (0..m_dates).rev() {
        let remaining = m_dates - m;
        let free_max = n_rights.min(remaining - 1);
        if free_max >= 1 {
            let spot_m: Vec<f64> = payoffs.iter().map(|(s, _)| s[m + 1]).collect();
            let reg = Regressor::new(&spot_m, spec.degree);
            let mut coefs = vec![Vec::new(); free_max + 1];
            for r in 1..=free_max {
                let gain: Vec<f64> = value.iter().map(|v| v[r] - v[r - 1]).collect();
                coefs[r] = reg.fit(&gain);
            }
            coefficients[m] = coefs;
            regressors[m] = Some(reg);
        }
        for (p, v) in value.iter_mut().enumerate() {
            let pay = payoffs[p].1[m];
            for r in (1..=n_rights).rev() {
                let exercise = if r >= remaining {
                    true
                } else {
                    let reg = regressors[m].as_ref().expect("regressor for free decision");
                    pay >= reg.predict(&coefficients[m][r], p)
                };
                if exercise {
                    v[r] = pay + v[r - 1];
                }
            }
        }
    }

    // forward pass over the fitted policy, summing payoffs in date order
    let per_path: Vec<f64> = (0..n_paths)
        .map(|p| {
            let mut r = n_rights;
            let mut total = 0.0;
            for m in 0..m_dates {
                if r == 0 {
                    break;
                }
                let remaining = m_dates - m;
                let pay = payoffs[p].1[m];
                let exercise = r >= remaining || {
                    let reg = regressors[m].as_ref().expect("regressor for free decision");
                    pay >= reg.predict(&coefficients[m][r], p)
                };
                if exercise {
                    total += pay;
                    r -= 1;
                }
            }
            total
        })
        .collect();
    Ok(PriceEstimate::from_samples(
        &per_path,
        &format!("lsmc-{}", mc.scheme),
        mc.seed,
    ))
}
