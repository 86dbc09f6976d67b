//! Two-factor calibration from day-ahead and month-ahead price series:
//! seasonality removal, NIG fit of the month-ahead factor, and OU-NIG fit
//! of the short-term factor under Approximation 1.

use std::f64::consts::PI;
use std::path::Path;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{ForwardCurve, SpotModel, SpotSimulator, DAYS_PER_YEAR};
use crate::process::{step_decomposition, NtsParams, OuNtsParams, PathGrid, Scheme};
use crate::sampling::{sample_normal, sample_ts, RngStream};
use crate::special::bessel_k_scaled;

/// Daily price series with trading-day flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
    pub trading_day: Vec<bool>,
}

impl MarketSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>, trading_day: Vec<bool>) -> Result<Self> {
        if dates.len() != prices.len() || dates.len() != trading_day.len() {
            return Err(Error::data(
                "dates, prices and trading-day flags differ in length",
            ));
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(Error::data(format!("duplicated date {}", w[0])));
            }
            if w[1] < w[0] {
                return Err(Error::data(format!(
                    "dates must increase: {} follows {}",
                    w[1], w[0]
                )));
            }
        }
        for (d, p) in dates.iter().zip(&prices) {
            if !(*p > 0.0) || !p.is_finite() {
                return Err(Error::data(format!(
                    "price on {d} must be positive, got {p}"
                )));
            }
        }
        Ok(MarketSeries {
            dates,
            prices,
            trading_day,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Year fractions ACT/365 from the first date.
    pub fn year_fractions(&self) -> Vec<f64> {
        let start = self.dates.first().copied().unwrap_or_default();
        self.dates
            .iter()
            .map(|d| (*d - start).num_days() as f64 / DAYS_PER_YEAR)
            .collect()
    }

    pub fn log_prices(&self) -> Vec<f64> {
        self.prices.iter().map(|p| p.ln()).collect()
    }
}

#[derive(Debug, Deserialize)]
struct MarketRow {
    date: String,
    price: String,
    trading_day: Option<String>,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

/// Read `date,price[,trading_day]`; a missing flag means a trading day.
pub fn load_market_csv(path: impl AsRef<Path>) -> Result<MarketSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let (mut dates, mut prices, mut flags) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in reader.deserialize::<MarketRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            msg: format!("bad date '{}': {e}", row.date),
        })?;
        let price: f64 = row.price.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad price '{}'", row.price),
        })?;
        let flag = match row.trading_day.as_deref() {
            None | Some("") => true,
            Some(s) => parse_flag(s).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad trading_day '{s}'"),
            })?,
        };
        dates.push(date);
        prices.push(price);
        flags.push(flag);
    }
    MarketSeries::new(dates, prices, flags)
}

pub fn write_market_csv(path: impl AsRef<Path>, series: &MarketSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "price", "trading_day"])?;
    for ((d, p), t) in series
        .dates
        .iter()
        .zip(&series.prices)
        .zip(&series.trading_day)
    {
        w.write_record([
            d.format("%Y-%m-%d").to_string(),
            format!("{p:.17e}"),
            (*t as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Linear trend plus annual and semiannual cycles of the log price:
/// `a + b t + c₁cos 2πt + s₁sin 2πt + c₂cos 4πt + s₂sin 4πt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityFit {
    pub intercept: f64,
    pub slope: f64,
    pub annual_cos: f64,
    pub annual_sin: f64,
    pub semiannual_cos: f64,
    pub semiannual_sin: f64,
}

fn seasonal_basis(t: f64) -> [f64; 6] {
    let w = 2.0 * PI * t;
    [1.0, t, w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin()]
}

impl SeasonalityFit {
    fn coefficients(&self) -> [f64; 6] {
        [
            self.intercept,
            self.slope,
            self.annual_cos,
            self.annual_sin,
            self.semiannual_cos,
            self.semiannual_sin,
        ]
    }

    pub fn value(&self, t: f64) -> f64 {
        seasonal_basis(t)
            .iter()
            .zip(self.coefficients())
            .map(|(x, c)| x * c)
            .sum()
    }

    pub fn annual_amplitude(&self) -> f64 {
        self.annual_cos.hypot(self.annual_sin)
    }

    /// Phase `φ₁` of `A₁ cos(2πt + φ₁)`.
    pub fn annual_phase(&self) -> f64 {
        (-self.annual_sin).atan2(self.annual_cos)
    }

    pub fn semiannual_amplitude(&self) -> f64 {
        self.semiannual_cos.hypot(self.semiannual_sin)
    }

    pub fn semiannual_phase(&self) -> f64 {
        (-self.semiannual_sin).atan2(self.semiannual_cos)
    }
}

/// Least-squares seasonality of the log prices and the residual series.
pub fn fit_seasonality(series: &MarketSeries) -> Result<(SeasonalityFit, Vec<f64>)> {
    let t = series.year_fractions();
    if t.last().copied().unwrap_or(0.0) < 2.0 {
        return Err(Error::data(
            "seasonality fit needs at least two years of daily data",
        ));
    }
    let y = series.log_prices();
    let x = DMatrix::from_fn(t.len(), 6, |i, j| seasonal_basis(t[i])[j]);
    let svd = x.clone().svd(true, true);
    let s = &svd.singular_values;
    if s.min() <= 1e-10 * s.max() {
        return Err(Error::numerical(
            "seasonality design matrix is rank deficient",
        ));
    }
    let beta = svd
        .solve(&DVector::from_vec(y.clone()), 0.0)
        .map_err(|e| Error::numerical(e.to_string()))?;
    let fit = SeasonalityFit {
        intercept: beta[0],
        slope: beta[1],
        annual_cos: beta[2],
        annual_sin: beta[3],
        semiannual_cos: beta[4],
        semiannual_sin: beta[5],
    };
    let fitted = &x * &beta;
    let resid = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    Ok((fit, resid))
}

/// Options for the simplex searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: u64,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 4000,
            tolerance: 1e-10,
        }
    }
}

struct Objective<'a>(&'a dyn Fn(&[f64]) -> f64);

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    }
}

struct Minimum {
    x: Vec<f64>,
    value: f64,
    iterations: u64,
}

fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    opts: &FitOptions,
) -> Result<Minimum> {
    let mut simplex = vec![start.to_vec()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = start.to_vec();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.tolerance)
        .map_err(|e| Error::numerical(format!("simplex setup failed: {e}")))?;
    let res = Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::numerical(format!("simplex search failed: {e}")))?;
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::numerical("simplex search returned no point"))?;
    Ok(Minimum {
        x,
        value: state.get_best_cost(),
        iterations: state.get_iter(),
    })
}

/// Central-difference gradient and Hessian with relative steps.
fn gradient_and_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let f0 = f(x);
    let at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in d {
            y[i] += s;
        }
        f(&y)
    };
    let mut g = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        g[i] = (fp - fm) / (2.0 * h[i]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let v = (at(&[(i, h[i]), (j, h[j])])
                - at(&[(i, h[i]), (j, -h[j])])
                - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

fn standard_errors(hess: &DMatrix<f64>) -> Vec<f64> {
    match hess.clone().try_inverse() {
        Some(inv) => (0..hess.nrows())
            .map(|i| {
                if inv[(i, i)] > 0.0 {
                    inv[(i, i)].sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; hess.nrows()],
    }
}

/// Log density of the NIG law `θV + σ√V X` with `V` inverse Gaussian of
/// mean `μ` and shape `λ`.
pub fn nig_mixture_log_density(x: f64, theta: f64, sigma: f64, mu: f64, lambda: f64) -> f64 {
    let s2 = sigma * sigma;
    let delta = sigma * lambda.sqrt();
    let gamma = lambda.sqrt() / (sigma * mu);
    let beta = theta / s2;
    let alpha = gamma.hypot(beta);
    let r = delta.hypot(x);
    let z = alpha * r;
    match bessel_k_scaled(1.0, z) {
        Ok(k) => (alpha * delta / PI).ln() + delta * gamma + beta * x + k.ln() - z - r.ln(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Log density of an NIG Lévy increment over `dt` (`α = ½`).
pub fn nig_log_density(x: f64, dt: f64, p: &NtsParams) -> f64 {
    // the unit-mean subordinator over dt is IG with mean dt and variance ν dt
    nig_mixture_log_density(x, p.theta, p.sigma, dt, dt * dt / p.nu)
}

/// Log increments between consecutive trading days and their spans.
pub fn trading_increments(series: &MarketSeries) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut dts = Vec::new();
    let mut last: Option<(NaiveDate, f64)> = None;
    for ((d, p), t) in series
        .dates
        .iter()
        .zip(&series.prices)
        .zip(&series.trading_day)
    {
        if !t {
            continue;
        }
        if let Some((d0, p0)) = last {
            xs.push((p / p0).ln());
            dts.push((*d - d0).num_days() as f64 / DAYS_PER_YEAR);
        }
        last = Some((*d, *p));
    }
    (xs, dts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyFit {
    pub params: NtsParams,
    /// Standard errors of `(σ, ν, θ)`; zero for moment matching.
    pub stderr: [f64; 3],
    pub log_likelihood: Option<f64>,
    pub method: String,
    pub n_increments: usize,
    pub iterations: u64,
    pub gradient_norm: f64,
}

/// Cumulants 1–4 of the unit-mean subordinator per unit time.
fn subordinator_cumulants(alpha: f64, nu: f64) -> [f64; 4] {
    let k3 = nu * nu * (2.0 - alpha) / (1.0 - alpha);
    [1.0, nu, k3, k3 * nu * (3.0 - alpha) / (1.0 - alpha)]
}

/// Cumulants 1–4 of `L(t)`, `L = θV + σ√V X`.
pub fn nts_cumulants(t: f64, p: &NtsParams) -> [f64; 4] {
    let [k1, k2, k3, k4] = subordinator_cumulants(p.alpha, p.nu);
    let (th, s2) = (p.theta, p.sigma * p.sigma);
    [
        t * k1 * th,
        t * (k1 * s2 + k2 * th * th),
        t * (3.0 * k2 * th * s2 + k3 * th.powi(3)),
        t * (3.0 * k2 * s2 * s2 + 6.0 * k3 * th * th * s2 + k4 * th.powi(4)),
    ]
}

fn sample_cumulants(xs: &[f64]) -> [f64; 4] {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let c = |k: i32| xs.iter().map(|x| (x - m).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (c(2), c(3), c(4));
    [m, m2, m3, m4 - 3.0 * m2 * m2]
}

/// Match mean, variance and fourth cumulant of increments over `dt`.
pub fn nts_moment_match(alpha: f64, dt: f64, target: [f64; 4]) -> Result<NtsParams> {
    let [mean, var, _, k4] = target;
    if !(var > 0.0) {
        return Err(Error::numerical(
            "degenerate variance: increments are constant",
        ));
    }
    if !(k4 > 0.0) {
        return Err(Error::numerical(format!(
            "moment matching needs positive excess kurtosis, got {k4}"
        )));
    }
    let theta = mean / dt;
    let sigma2 = |nu: f64| var / dt - nu * theta * theta;
    let excess = |nu: f64| {
        let s2 = sigma2(nu);
        let [_, k2, k3, k4v] = subordinator_cumulants(alpha, nu);
        dt * (3.0 * k2 * s2 * s2 + 6.0 * k3 * theta * theta * s2 + k4v * theta.powi(4)) - k4
    };
    let mut hi = if theta != 0.0 {
        var / (dt * theta * theta)
    } else {
        f64::INFINITY
    };
    let mut lo = 0.0;
    if !hi.is_finite() {
        hi = 1.0;
        while excess(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::numerical("moment matching: no root for nu"));
            }
        }
    } else if excess(hi) < 0.0 {
        return Err(Error::numerical(
            "moment matching: sample kurtosis exceeds what the drift permits",
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    NtsParams::new(alpha, sigma2(nu).max(0.0).sqrt(), theta, nu)
}

/// Fit `(σ, ν, θ)` of the month-ahead factor from trading-day increments.
/// `α = ½` maximizes the NIG likelihood; other indices match moments.
pub fn fit_levy_factor(series: &MarketSeries, alpha: f64, opts: &FitOptions) -> Result<LevyFit> {
    let (xs, dts) = trading_increments(series);
    if xs.len() < 10 {
        return Err(Error::data(format!(
            "Levy fit needs at least 10 increments, got {}",
            xs.len()
        )));
    }
    let dt_mean = dts.iter().sum::<f64>() / dts.len() as f64;
    let cum = sample_cumulants(&xs);
    if alpha != 0.5 {
        let params = nts_moment_match(alpha, dt_mean, cum)?;
        return Ok(LevyFit {
            params,
            stderr: [0.0; 3],
            log_likelihood: None,
            method: "moments".into(),
            n_increments: xs.len(),
            iterations: 0,
            gradient_norm: 0.0,
        });
    }
    let start = nts_moment_match(0.5, dt_mean, cum).unwrap_or_else(|_| {
        let s = (cum[1] / dt_mean).sqrt();
        NtsParams {
            alpha: 0.5,
            sigma: s,
            theta: cum[0] / dt_mean,
            nu: 0.1,
        }
    });
    let nu0 = start.nu.clamp(1e-3, 1e3);
    let nll = |sigma: f64, nu: f64, theta: f64| -> f64 {
        if !(sigma > 0.0 && nu > 0.0) {
            return f64::INFINITY;
        }
        let p = NtsParams {
            alpha: 0.5,
            sigma,
            theta,
            nu,
        };
        -xs.iter()
            .zip(&dts)
            .map(|(x, dt)| nig_log_density(*x, *dt, &p))
            .sum::<f64>()
    };
    let f = |v: &[f64]| nll(v[0].exp(), v[1].exp(), v[2]);
    let theta_step = 0.5 * start.sigma / (dt_mean * xs.len() as f64).sqrt();
    let mut best = nelder_mead(
        &f,
        &[start.sigma.ln(), nu0.ln(), start.theta],
        &[0.1, 0.3, theta_step],
        opts,
    )?;
    // restart once from the optimum to shake off a collapsed simplex
    let again = nelder_mead(&f, &best.x, &[0.02, 0.05, 0.2 * theta_step], opts)?;
    best = Minimum {
        iterations: best.iterations + again.iterations,
        ..again
    };
    let (sigma, nu, theta) = (best.x[0].exp(), best.x[1].exp(), best.x[2]);
    let natural = |v: &[f64]| nll(v[0], v[1], v[2]);
    let (g, h) = gradient_and_hessian(&natural, &[sigma, nu, theta]);
    let gradient_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let se = standard_errors(&h);
    if best.iterations >= 2 * opts.max_iters || se.iter().any(|v| v.is_nan()) {
        return Err(Error::numerical(format!(
            "NIG likelihood search did not converge (gradient norm {gradient_norm:.3e})"
        )));
    }
    Ok(LevyFit {
        params: NtsParams::new(0.5, sigma, theta, nu)?,
        stderr: [se[0], se[1], se[2]],
        log_likelihood: Some(-best.value),
        method: "mle".into(),
        n_increments: xs.len(),
        iterations: best.iterations,
        gradient_norm,
    })
}

/// Impute non-trading days by sampling NTS increments from the last
/// value, trading or imputed.
pub fn fill_non_trading_days<R: Rng + ?Sized>(
    rng: &mut R,
    series: &MarketSeries,
    levy: &NtsParams,
) -> Result<MarketSeries> {
    let mut out = series.clone();
    let first = series
        .trading_day
        .iter()
        .position(|t| *t)
        .ok_or_else(|| Error::data("series has no trading day"))?;
    for k in (0..first).rev() {
        let dt = (series.dates[k + 1] - series.dates[k]).num_days() as f64 / DAYS_PER_YEAR;
        out.prices[k] = out.prices[k + 1] * (-levy_increment(rng, dt, levy)?).exp();
    }
    for k in first + 1..series.len() {
        if series.trading_day[k] {
            continue;
        }
        let dt = (series.dates[k] - series.dates[k - 1]).num_days() as f64 / DAYS_PER_YEAR;
        out.prices[k] = out.prices[k - 1] * levy_increment(rng, dt, levy)?.exp();
    }
    Ok(out)
}

fn levy_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64, p: &NtsParams) -> Result<f64> {
    if p.sigma == 0.0 && p.theta == 0.0 {
        return Ok(0.0);
    }
    let dl = sample_ts(rng, &p.subordinator(dt)?);
    Ok(p.theta * dl + p.sigma * dl.sqrt() * sample_normal(rng))
}

/// `ε_{k+1} = (s_{k+1} − f_{k+1}) − (s_k − f_k) e^{−bΔt}`.
pub fn build_ou_residuals(spot_log: &[f64], ma_log: &[f64], b: f64, dt: f64) -> Result<Vec<f64>> {
    if spot_log.len() != ma_log.len() {
        return Err(Error::data(format!(
            "misaligned series: {} day-ahead against {} month-ahead values",
            spot_log.len(),
            ma_log.len()
        )));
    }
    let decay = (-b * dt).exp();
    let d: Vec<f64> = spot_log.iter().zip(ma_log).map(|(s, f)| s - f).collect();
    Ok(d.windows(2).map(|w| w[1] - w[0] * decay).collect())
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / var
}

/// Sample skewness.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Delta-method standard error of the sample skewness of a symmetric
/// law, `√((μ₆ − 6μ₄μ₂ + 9μ₂³) / (n μ₂³))` from sample moments.
pub fn skewness_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let c = |k: i32| xs.iter().map(|x| (x - m).powi(k)).sum::<f64>() / n;
    let (m2, m4, m6) = (c(2), c(4), c(6));
    ((m6 - 6.0 * m4 * m2 + 9.0 * m2.powi(3)) / (n * m2.powi(3))).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuFit {
    pub params: OuNtsParams,
    /// Least-squares autoregression estimate used as the starting point.
    pub b_autoregression: f64,
    /// Standard errors of `(b, σ, ν)`.
    pub stderr: [f64; 3],
    pub log_likelihood: f64,
    /// Residual seasonal offset of the spread, in time since the first
    /// observation, when it was estimated.
    pub spread_offset: Option<SeasonalityFit>,
    pub residual_lag1_autocorrelation: f64,
    pub residual_skewness: f64,
    pub residual_skewness_stderr: f64,
    pub iterations: u64,
    pub gradient_norm: f64,
}

/// Log density of the Approximation-1 OU-NIG residual over `dt`.
pub fn ou_residual_log_density(x: f64, dt: f64, p: &OuNtsParams) -> Result<f64> {
    let dec = step_decomposition(dt, p)?;
    let (mu, lambda) = dec.m1_law.inverse_gaussian_params();
    Ok(nig_mixture_log_density(x, 0.0, p.nts.sigma, mu, lambda))
}

/// Posterior mean of `1/V` for a residual `x` whose mixing variable `V`
/// is inverse Gaussian with mean `mu` and shape `lambda`.
fn nig_precision_weight(x: f64, sigma: f64, mu: f64, lambda: f64) -> f64 {
    let a = lambda / (mu * mu);
    let b = lambda + x * x / (sigma * sigma);
    let z = (a * b).sqrt();
    match (bessel_k_scaled(0.0, z), bessel_k_scaled(1.0, z)) {
        (Ok(k0), Ok(k1)) => (a / b).sqrt() * (k0 / k1 + 2.0 / z),
        _ => 1.0 / mu,
    }
}

/// EM steps for the offset coefficients of `y_k = g(t_k) + N(t_k)` with
/// `(b, σ, ν)` held fixed: weighted least squares on the quasi-differenced
/// equation with weights `E[1/V | ε]`.
fn offset_em(
    d: &[f64],
    basis: &DMatrix<f64>,
    coef: &mut DVector<f64>,
    dt: f64,
    p: &OuNtsParams,
) -> Result<()> {
    let (mu, lambda) = step_decomposition(dt, p)?.m1_law.inverse_gaussian_params();
    let decay = (-p.b * dt).exp();
    let n = d.len() - 1;
    let k = basis.ncols();
    let z = DVector::from_fn(n, |i, _| d[i + 1] - decay * d[i]);
    let x = DMatrix::from_fn(n, k, |i, j| basis[(i + 1, j)] - decay * basis[(i, j)]);
    for _ in 0..OFFSET_EM_STEPS {
        let eps = &z - &x * &*coef;
        let w: Vec<f64> = eps
            .iter()
            .map(|e| nig_precision_weight(*e, p.nts.sigma, mu, lambda))
            .collect();
        let xtw = DMatrix::from_fn(k, n, |j, i| x[(i, j)] * w[i]);
        let next = (&xtw * &x)
            .cholesky()
            .ok_or_else(|| Error::numerical("offset normal equations are not positive definite"))?
            .solve(&(&xtw * &z));
        let change = (&next - &*coef).amax();
        *coef = next;
        if change < 1e-12 {
            break;
        }
    }
    Ok(())
}

const OFFSET_EM_STEPS: usize = 50;
const OFFSET_ROUNDS: usize = 4;

/// Symmetric OU-NIG fit of the spread `s − f`: `b` from the least-squares
/// autoregression, then `(b, σ, ν)` by maximum likelihood under the
/// Approximation-1 residual density.
pub fn fit_ou_factor(
    spot_log: &[f64],
    ma_log: &[f64],
    dt: f64,
    opts: &FitOptions,
) -> Result<OuFit> {
    fit_ou(spot_log, ma_log, dt, opts, 0)
}

/// As [`fit_ou_factor`] for deseasonalized inputs: a residual seasonal
/// offset of the spread, in the span of the seasonality basis at
/// `t_k = k Δt`, is estimated jointly by alternating the likelihood search
/// with EM steps.
pub fn fit_ou_factor_with_offset(
    spot_log: &[f64],
    ma_log: &[f64],
    dt: f64,
    opts: &FitOptions,
) -> Result<OuFit> {
    fit_ou(spot_log, ma_log, dt, opts, OFFSET_ROUNDS)
}

fn fit_ou(
    spot_log: &[f64],
    ma_log: &[f64],
    dt: f64,
    opts: &FitOptions,
    rounds: usize,
) -> Result<OuFit> {
    if spot_log.len() != ma_log.len() {
        return Err(Error::data("misaligned day-ahead and month-ahead series"));
    }
    if spot_log.len() < 10 {
        return Err(Error::data("OU fit needs at least 10 observations"));
    }
    let d: Vec<f64> = spot_log.iter().zip(ma_log).map(|(s, f)| s - f).collect();
    let d_mean = d.iter().sum::<f64>() / d.len() as f64;
    let d_var = d.iter().map(|x| (x - d_mean).powi(2)).sum::<f64>() / d.len() as f64;
    if !(d_var > 1e-24 * d_mean.powi(2).max(1e-300)) {
        return Err(Error::numerical(
            "degenerate variance: the spread is constant",
        ));
    }
    let sxx: f64 = d[..d.len() - 1].iter().map(|x| x * x).sum();
    let sxy: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
    if !(sxx > 1e-300) {
        return Err(Error::numerical(
            "degenerate variance: the spread is constant",
        ));
    }
    let phi = sxy / sxx;
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::numerical(format!(
            "autoregression gives phi = {phi}; b would not be positive"
        )));
    }
    let b0 = -phi.ln() / dt;
    let eps = build_ou_residuals(spot_log, ma_log, b0, dt)?;
    let cum = sample_cumulants(&eps);
    if !(cum[1] > 1e-300) {
        return Err(Error::numerical(
            "degenerate variance: residuals are constant",
        ));
    }
    let omega = (-2.0 * b0 * dt).exp();
    let sigma0 = (cum[1] * 2.0 * b0 / (1.0 - omega)).sqrt();
    let nu0 = (cum[3] * 4.0 * b0 / ((1.0 - (-4.0 * b0 * dt).exp()) * 3.0 * sigma0.powi(4)))
        .clamp(1e-2, 1e2);

    let nll = |y: &[f64], b: f64, sigma: f64, nu: f64| -> f64 {
        let Ok(nts) = NtsParams::new(0.5, sigma, 0.0, nu) else {
            return f64::INFINITY;
        };
        let Ok(p) = OuNtsParams::new(nts, b, 0.0) else {
            return f64::INFINITY;
        };
        let Ok(dec) = step_decomposition(dt, &p) else {
            return f64::INFINITY;
        };
        let (mu, lambda) = dec.m1_law.inverse_gaussian_params();
        let decay = (-b * dt).exp();
        -y.windows(2)
            .map(|w| nig_mixture_log_density(w[1] - w[0] * decay, 0.0, sigma, mu, lambda))
            .sum::<f64>()
    };

    let basis = DMatrix::from_fn(d.len(), 6, |i, j| seasonal_basis(i as f64 * dt)[j]);
    let mut coef = DVector::zeros(6);
    let mut x = vec![b0.ln(), sigma0.ln(), nu0.ln()];
    let mut iterations = 0;
    let mut value = f64::INFINITY;
    let mut y = d.clone();
    for round in 0..=rounds {
        let fitted = &basis * &coef;
        y = d.iter().zip(fitted.iter()).map(|(a, g)| a - g).collect();
        let f = |v: &[f64]| nll(&y, v[0].exp(), v[1].exp(), v[2].exp());
        let steps: [f64; 3] = if round == 0 {
            [0.2, 0.1, 0.3]
        } else {
            [0.05, 0.02, 0.05]
        };
        let first = nelder_mead(&f, &x, &steps, opts)?;
        let best = nelder_mead(&f, &first.x, &[0.05, 0.02, 0.05], opts)?;
        iterations += first.iterations + best.iterations;
        x = best.x;
        value = best.value;
        if round < rounds {
            let p = OuNtsParams::new(
                NtsParams::new(0.5, x[1].exp(), 0.0, x[2].exp())?,
                x[0].exp(),
                0.0,
            )?;
            offset_em(&d, &basis, &mut coef, dt, &p)?;
        }
    }
    let (b, sigma, nu) = (x[0].exp(), x[1].exp(), x[2].exp());
    let natural = |v: &[f64]| nll(&y, v[0], v[1], v[2]);
    let (g, h) = gradient_and_hessian(&natural, &[b, sigma, nu]);
    let gradient_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let se = standard_errors(&h);
    if iterations >= 2 * (rounds as u64 + 1) * opts.max_iters {
        return Err(Error::numerical(format!(
            "OU likelihood search did not converge (gradient norm {gradient_norm:.3e})"
        )));
    }
    let params = OuNtsParams::new(NtsParams::new(0.5, sigma, 0.0, nu)?, b, 0.0)?;
    let resid = build_ou_residuals(&y, &vec![0.0; y.len()], b, dt)?;
    Ok(OuFit {
        params,
        b_autoregression: b0,
        stderr: [se[0], se[1], se[2]],
        log_likelihood: -value,
        spread_offset: (rounds > 0).then(|| SeasonalityFit {
            intercept: coef[0],
            slope: coef[1],
            annual_cos: coef[2],
            annual_sin: coef[3],
            semiannual_cos: coef[4],
            semiannual_sin: coef[5],
        }),
        residual_lag1_autocorrelation: lag1_autocorrelation(&resid),
        residual_skewness: skewness(&resid),
        residual_skewness_stderr: skewness_stderr(&resid),
        iterations,
        gradient_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub levy: LevyFit,
    pub ou: OuFit,
    pub month_ahead_seasonality: SeasonalityFit,
    pub imputed_days: usize,
    pub whiteness_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub ou: OuNtsParams,
    pub levy: NtsParams,
    pub seasonality: SeasonalityFit,
    pub diagnostics: CalibrationDiagnostics,
    pub warnings: Vec<String>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Full pipeline. `seed` drives the imputation of non-trading days.
pub fn calibrate(
    day_ahead: &MarketSeries,
    month_ahead: &MarketSeries,
    seed: u64,
    opts: &FitOptions,
) -> Result<CalibrationResult> {
    if day_ahead.dates != month_ahead.dates {
        return Err(
            Error::data("day-ahead and month-ahead series must share the same dates")
                .in_stage("alignment"),
        );
    }
    let levy = stage("month-ahead fit", fit_levy_factor(month_ahead, 0.5, opts))?;
    let mut rng = RngStream::new(seed, 0);
    let filled = stage(
        "imputation",
        fill_non_trading_days(&mut rng, month_ahead, &levy.params),
    )?;
    let (seasonality, s) = stage("day-ahead seasonality", fit_seasonality(day_ahead))?;
    let (ma_seasonality, f) = stage("month-ahead seasonality", fit_seasonality(&filled))?;
    let ou = stage(
        "short-term fit",
        fit_ou_factor_with_offset(&s, &f, 1.0 / DAYS_PER_YEAR, opts),
    )?;
    let mut warnings = Vec::new();
    if !ou.params.has_exponential_moment() {
        let msg = format!(
            "fitted OU factor has sqrt(2 beta)/sigma = {:.4} <= 1; the risk-neutral drift is unavailable",
            ou.params.cgf_bound()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let n = (s.len() - 1) as f64;
    Ok(CalibrationResult {
        ou: ou.params,
        levy: levy.params,
        seasonality,
        diagnostics: CalibrationDiagnostics {
            levy,
            ou,
            month_ahead_seasonality: ma_seasonality,
            imputed_days: month_ahead.trading_day.iter().filter(|t| !**t).count(),
            whiteness_bound: 2.0 / n.sqrt(),
        },
        warnings,
    })
}

/// Specification of a synthetic two-factor market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarket {
    pub start: NaiveDate,
    pub days: usize,
    pub forward_level: f64,
    pub seasonality: SeasonalityFit,
    pub ou: OuNtsParams,
    pub levy: NtsParams,
    /// Mark Saturdays and Sundays as non-trading in the month-ahead series.
    pub weekend_gaps: bool,
}

impl SyntheticMarket {
    /// Four years of daily data from 2016-01-01 with the reference
    /// parameters of [`reference_two_factor`].
    pub fn reference() -> Self {
        let (ou, levy) = reference_factors();
        SyntheticMarket {
            start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            days: 1461,
            forward_level: 12.0,
            seasonality: SeasonalityFit {
                intercept: 0.0,
                slope: 0.02,
                annual_cos: 0.15,
                annual_sin: 0.05,
                semiannual_cos: 0.03,
                semiannual_sin: 0.0,
            },
            ou,
            levy,
            weekend_gaps: false,
        }
    }

    /// Day-ahead and month-ahead series from one factor path.
    pub fn generate(&self, seed: u64) -> Result<(MarketSeries, MarketSeries)> {
        use chrono::Datelike;
        let dates: Vec<NaiveDate> = (0..self.days as i64)
            .map(|k| self.start + chrono::Duration::days(k))
            .collect();
        let times: Vec<f64> = (0..self.days).map(|k| k as f64 / DAYS_PER_YEAR).collect();
        let curve: Vec<f64> = times
            .iter()
            .map(|t| self.forward_level * self.seasonality.value(*t).exp())
            .collect();
        let model = SpotModel::two_factor(
            ForwardCurve::daily(dates.clone(), curve.clone())?,
            self.ou,
            self.levy,
        )?;
        let sim = SpotSimulator::new(model.clone(), PathGrid::new(times.clone())?, Scheme::Exact)?;
        let mut n1 = vec![0.0; self.days];
        let mut n2 = vec![0.0; self.days];
        sim.simulate_factors(&mut RngStream::new(seed, 0), &mut n1, &mut n2)?;
        let mut spot = Vec::with_capacity(self.days);
        let mut ma = Vec::with_capacity(self.days);
        for k in 0..self.days {
            spot.push(curve[k] * (model.drift(times[k])? + n1[k] + n2[k]).exp());
            let h2 = crate::market::rn_drift_levy(times[k], &self.levy)?;
            ma.push(self.forward_level * (h2 + n2[k]).exp());
        }
        let trading: Vec<bool> = dates
            .iter()
            .map(|d| !self.weekend_gaps || d.weekday().number_from_monday() <= 5)
            .collect();
        // non-trading quotes repeat the last trading value
        for k in 1..self.days {
            if !trading[k] {
                ma[k] = ma[k - 1];
            }
        }
        Ok((
            MarketSeries::new(dates.clone(), spot, vec![true; self.days])?,
            MarketSeries::new(dates, ma, trading)?,
        ))
    }
}

/// Reference two-factor parameters: short-term OU-NIG `(b, σ₁, ν₁) =
/// (5, 0.3, 2.5)` and month-ahead NIG `(σ₂, ν₂, θ₂) = (0.25, 0.4, −0.03)`.
pub fn reference_factors() -> (OuNtsParams, NtsParams) {
    let ou = OuNtsParams::new(NtsParams::new(0.5, 0.3, 0.0, 2.5).expect("valid"), 5.0, 0.0)
        .expect("valid");
    let levy = NtsParams::new(0.5, 0.25, -0.03, 0.4).expect("valid");
    (ou, levy)
}

/// Reference two-factor model on a flat forward curve.
pub fn reference_two_factor(forward: f64) -> Result<SpotModel> {
    let (ou, levy) = reference_factors();
    SpotModel::two_factor(ForwardCurve::flat(forward)?, ou, levy)
}

/// One recovered parameter of a calibration round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripItem {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Relative tolerance, or absolute when `absolute` is set.
    pub tolerance: f64,
    pub absolute: bool,
    pub pass: bool,
}

/// Compare fitted parameters with the truth: b within 10%, σ₁ within 5%,
/// ν₁ within 15%, σ₂ within 5%, ν₂ within 15%, θ₂ within ±0.02.
pub fn round_trip_report(
    ou: &OuNtsParams,
    levy: &NtsParams,
    fit: &CalibrationResult,
) -> Vec<RoundTripItem> {
    let o = &fit.diagnostics.ou.stderr;
    let l = &fit.diagnostics.levy.stderr;
    let rows = [
        ("b", ou.b, fit.ou.b, o[0], 0.10, false),
        ("sigma1", ou.nts.sigma, fit.ou.nts.sigma, o[1], 0.05, false),
        ("nu1", ou.nts.nu, fit.ou.nts.nu, o[2], 0.15, false),
        ("sigma2", levy.sigma, fit.levy.sigma, l[0], 0.05, false),
        ("nu2", levy.nu, fit.levy.nu, l[1], 0.15, false),
        ("theta2", levy.theta, fit.levy.theta, l[2], 0.02, true),
    ];
    rows.iter()
        .map(|&(name, truth, estimate, stderr, tolerance, absolute)| {
            let err = if absolute {
                (estimate - truth).abs()
            } else {
                ((estimate - truth) / truth).abs()
            };
            RoundTripItem {
                name: name.into(),
                truth,
                estimate,
                stderr,
                tolerance,
                absolute,
                pass: err <= tolerance,
            }
        })
        .collect()
}
