//! Symmetric OU-NTS process: parameters, characteristic exponents, the
//! closed-form transition law, its exact step decomposition and the
//! simulation schemes.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, unit_legendre48, QuadOptions};
use crate::sampling::{
    mixture_rate_density, one_minus_w_plus_w_log_w, sample_gamma, sample_normal, sample_poisson,
    sample_ts, sample_v, TsLaw,
};
use crate::special::{digamma, gamma, gauss_2f1, gauss_2f1_unit_cut, log_gamma};

/// Normal tempered stable parameters. The subordinator has unit mean at
/// unit time and variance `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtsParams {
    pub alpha: f64,
    pub sigma: f64,
    pub theta: f64,
    pub nu: f64,
}

impl NtsParams {
    pub fn new(alpha: f64, sigma: f64, theta: f64, nu: f64) -> Result<Self> {
        let p = NtsParams {
            alpha,
            sigma,
            theta,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::params(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::params(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::params(format!(
                "theta must be finite, got {}",
                self.theta
            )));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::params(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    /// Tempering rate `(1−α)/ν`.
    pub fn beta(&self) -> f64 {
        (1.0 - self.alpha) / self.nu
    }

    /// Lévy mass `β^{1−α}/Γ(1−α)`.
    pub fn c(&self) -> f64 {
        self.beta().powf(1.0 - self.alpha) / gamma(1.0 - self.alpha)
    }

    /// Subordinator law of the increment over `dt`.
    pub fn subordinator(&self, dt: f64) -> Result<TsLaw> {
        TsLaw::new(self.alpha, self.beta(), self.c() * dt)
    }
}

/// Characteristic exponent `ψ_Y(u)` of the NTS law at unit time.
pub fn che_nts(u: f64, p: &NtsParams) -> Complex64 {
    che_nts_complex(Complex64::new(u, 0.0), p)
}

/// `ψ_Y` continued to complex arguments, principal branch.
pub fn che_nts_complex(u: Complex64, p: &NtsParams) -> Complex64 {
    let i = Complex64::i();
    let inner = u * u * (p.sigma * p.sigma / 2.0) - i * p.theta * u;
    let base = Complex64::new(1.0, 0.0) + inner * (p.nu / (1.0 - p.alpha));
    let scale = (1.0 - p.alpha) / (p.alpha * p.nu);
    (Complex64::new(1.0, 0.0) - base.powf(p.alpha)) * scale
}

/// OU process driven by a symmetric NTS Lévy process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuNtsParams {
    pub nts: NtsParams,
    pub b: f64,
    pub n0: f64,
}

impl OuNtsParams {
    pub fn new(nts: NtsParams, b: f64, n0: f64) -> Result<Self> {
        let p = OuNtsParams { nts, b, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.nts.validate()?;
        if self.nts.theta != 0.0 {
            return Err(Error::params(format!(
                "the OU driving process must be symmetric (theta = 0), got theta = {}",
                self.nts.theta
            )));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::params(format!(
                "mean-reversion speed b must be positive, got {}",
                self.b
            )));
        }
        if !self.n0.is_finite() {
            return Err(Error::params(format!(
                "initial state must be finite, got {}",
                self.n0
            )));
        }
        Ok(())
    }

    /// Upper bound of the moment generating function domain, `√(2β)/σ`.
    pub fn cgf_bound(&self) -> f64 {
        (2.0 * self.nts.beta()).sqrt() / self.nts.sigma
    }

    /// True when `E e^{N(t)}` exists, which the risk-neutral drift needs.
    pub fn has_exponential_moment(&self) -> bool {
        self.cgf_bound() > 1.0
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "time must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// `F(Y) = ∫₀^Y ((1+y)^α − 1)/y dy` for real `Y > −1`.
///
/// Near zero the power series is used; for `Y ≥ ½` the hypergeometric
/// form `(1/α) Y^α ₂F₁(−α,−α;1−α;−1/Y) − log Y + ψ(1) − ψ(−α)`; below
/// `−½` the `(1,1;1−α)` family on its cut.
fn f_real(y: f64, alpha: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    if y.abs() <= 0.5 {
        return Ok(f_series(y, alpha));
    }
    if y > 0.0 {
        let h = gauss_2f1(-alpha, -alpha, 1.0 - alpha, -1.0 / y)?;
        return Ok(y.powf(alpha) * h / alpha - y.ln() + digamma_gap(alpha));
    }
    f_negative(y, alpha)
}

/// `F(Y)` for `−1 < Y < −½` from `₂F₁(1,1;1−α;x)` on its branch cut,
/// `x = −1/Y ∈ (1, 2)`:
/// `F(Y) = −(1/α) x^{−α}(x−1)^{α+1} Re ₂F₁(1,1;1−α;x) + log x + C`,
/// with `C` fixed by the power series at `Y = −½`.
fn f_negative(y: f64, alpha: f64) -> Result<f64> {
    if !(y > -1.0) {
        return Err(Error::domain(format!("F is defined for Y > -1, got {y}")));
    }
    let cut = |x: f64| -> Result<f64> {
        Ok(
            -x.powf(-alpha) * (x - 1.0).powf(alpha + 1.0) * gauss_2f1_unit_cut(alpha, x)? / alpha
                + x.ln(),
        )
    };
    let offset = f_series(-0.5, alpha) - cut(2.0)?;
    Ok(cut(-1.0 / y)? + offset)
}

/// `ψ(1) − ψ(−α)`.
fn digamma_gap(alpha: f64) -> f64 {
    digamma(1.0) - digamma(1.0 - alpha) - 1.0 / alpha
}

fn f_series(y: f64, alpha: f64) -> f64 {
    let mut coef = alpha;
    let mut pow = y;
    let mut sum = 0.0;
    for n in 1..400 {
        let term = coef * pow / n as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        coef *= (alpha - n as f64) / (n as f64 + 1.0);
        pow *= y;
    }
    sum
}

/// `F(Y)` for complex `Y` with `Re(1+Y) > 0`.
fn f_complex(y: Complex64, alpha: f64) -> Complex64 {
    let r = y.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if r <= 0.5 {
        let mut coef = alpha;
        let mut pow = y;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 1..400 {
            let term = pow * (coef / n as f64);
            sum += term;
            if term.norm() <= 1e-17 * sum.norm() {
                break;
            }
            coef *= (alpha - n as f64) / (n as f64 + 1.0);
            pow *= y;
        }
        return sum;
    }
    if r < 2.0 {
        let (nodes, weights) = unit_legendre48();
        let one = Complex64::new(1.0, 0.0);
        return nodes
            .iter()
            .zip(weights)
            .map(|(&s, &w)| ((one + y * s).powf(alpha) - one) * (w / s))
            .sum();
    }
    let z = -y.inv();
    let (a, c) = (-alpha, 1.0 - alpha);
    let mut term = Complex64::new(1.0, 0.0);
    let mut h = term;
    for k in 0..400 {
        let kf = k as f64;
        term *= z * ((a + kf) * (a + kf) / ((c + kf) * (kf + 1.0)));
        h += term;
        if term.norm() <= 1e-17 * h.norm() {
            break;
        }
    }
    y.powf(alpha) * h / alpha - y.ln() + digamma_gap(alpha)
}

/// Transition log characteristic function `ψ_{Z_Y}(u, t)` of the
/// OU noise term. Real and non-positive; the `i u n0 e^{−bt}` shift of
/// `N(t)` is added by callers.
pub fn transition_lch(u: f64, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    if u == 0.0 || p.nts.sigma == 0.0 {
        return Ok(0.0);
    }
    let (alpha, beta) = (p.nts.alpha, p.nts.beta());
    let omega = (-2.0 * p.b * t).exp();
    let y1 = p.nts.sigma * p.nts.sigma * u * u / (2.0 * beta);
    let bracket = f_real(y1, alpha)? - f_real(omega * y1, alpha)?;
    Ok(-beta / (2.0 * alpha * p.b) * bracket)
}

/// `ψ_{Z_Y}(u, t)` for complex `u`, as needed by Fourier pricing along a
/// shifted contour.
pub fn transition_lch_complex(u: Complex64, t: f64, p: &OuNtsParams) -> Result<Complex64> {
    check_time(t)?;
    if u.norm() == 0.0 || p.nts.sigma == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (alpha, beta) = (p.nts.alpha, p.nts.beta());
    let omega = (-2.0 * p.b * t).exp();
    let y1 = u * u * (p.nts.sigma * p.nts.sigma / (2.0 * beta));
    if 1.0 + y1.re <= 0.0 {
        return Err(Error::domain(format!(
            "transition lch diverges at u = {u}: |Im u| must stay below sqrt(2 beta)/sigma = {}",
            p.cgf_bound()
        )));
    }
    let bracket = f_complex(y1, alpha) - f_complex(y1 * omega, alpha);
    Ok(bracket * (-beta / (2.0 * alpha * p.b)))
}

/// `ψ_{Z_Y}(u, t)` for `α = ½` through the elementary form
/// `₂F₁(−½,−½;½;−x) = √(x+1) − √x sinh⁻¹√x`.
pub fn transition_lch_elementary(u: f64, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    if p.nts.alpha != 0.5 {
        return Err(Error::domain(format!(
            "elementary form requires alpha = 1/2, got {}",
            p.nts.alpha
        )));
    }
    if u == 0.0 || p.nts.sigma == 0.0 {
        return Ok(0.0);
    }
    let beta = p.nts.beta();
    let omega = (-2.0 * p.b * t).exp();
    let k = p.nts.sigma * p.nts.sigma * u * u / 2.0;
    // J(β₁, β₂) = −2[(k/β₂)^½ F(−β₂/k) − (k/β₁)^½ F(−β₁/k)]
    let elementary = |x: f64| (x + 1.0).sqrt() - x.sqrt() * x.sqrt().asinh();
    let term = |z: f64| (k / z).sqrt() * elementary(z / k);
    let j = -2.0 * (term(beta / omega) - term(beta));
    Ok(-beta / p.b * (j + omega.ln()))
}

/// Ground-truth `∫₀ᵗ ψ_Y(u e^{−bs}) ds` by adaptive quadrature.
pub fn transition_lch_oracle(u: f64, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    if u == 0.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-13,
        max_evals: 1_000_000,
    };
    let r = integrate(|s| che_nts(u * (-p.b * s).exp(), &p.nts).re, 0.0, t, opts)?;
    Ok(r.value)
}

/// Cumulant generating function `log E e^{s Z_Y(t)}`, finite for
/// `|s| < √(2β)/σ`.
pub fn transition_cgf(s: f64, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    if s == 0.0 || p.nts.sigma == 0.0 {
        return Ok(0.0);
    }
    let bound = p.cgf_bound();
    if !(s.abs() < bound) {
        return Err(Error::domain(format!(
            "cgf does not exist at s = {s}: need |s| < sqrt(2 beta)/sigma = {bound}"
        )));
    }
    let (alpha, beta) = (p.nts.alpha, p.nts.beta());
    let omega = (-2.0 * p.b * t).exp();
    let kp = p.nts.sigma * p.nts.sigma * s * s / 2.0;
    let y1 = -kp / beta;
    let f = |y: f64| {
        if y >= -0.5 {
            Ok(f_series(y, alpha))
        } else {
            f_negative(y, alpha)
        }
    };
    let bracket = f(y1)? - f(omega * y1)?;
    Ok(-beta / (2.0 * alpha * p.b) * bracket)
}

/// Cumulant generating function for `α = ½` in logarithmic form.
pub fn transition_cgf_elementary(s: f64, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    if p.nts.alpha != 0.5 {
        return Err(Error::domain(format!(
            "elementary form requires alpha = 1/2, got {}",
            p.nts.alpha
        )));
    }
    if s == 0.0 || p.nts.sigma == 0.0 {
        return Ok(0.0);
    }
    let bound = p.cgf_bound();
    if !(s.abs() < bound) {
        return Err(Error::domain(format!(
            "cgf does not exist at s = {s}: need |s| < sqrt(2 beta)/sigma = {bound}"
        )));
    }
    let beta = p.nts.beta();
    let omega = (-2.0 * p.b * t).exp();
    let kp = p.nts.sigma * p.nts.sigma * s * s / 2.0;
    let g = |y: f64| 2.0 * ((y.sqrt() + (y - 1.0).sqrt()).ln() - ((y - 1.0) / y).sqrt());
    let jt = g(beta / (omega * kp)) - g(beta / kp);
    Ok(-beta / p.b * (jt + omega.ln()))
}

/// Exact law of the OU noise over one step: `Z = X σ √(M₁ + M₂)` with
/// `M₁` tempered stable and `M₂` compound Poisson with gamma-mixture jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecomposition {
    pub dt: f64,
    pub a: f64,
    pub omega: f64,
    pub m1_law: TsLaw,
    pub lambda_omega: f64,
    /// Gamma shape `1−α` of the jumps.
    pub jump_alpha: f64,
    /// Gamma rate per unit mixing variable, `β`.
    pub jump_beta: f64,
    pub alpha: f64,
}

pub fn step_decomposition(dt: f64, p: &OuNtsParams) -> Result<StepDecomposition> {
    check_time(dt)?;
    let (alpha, beta, c, b) = (p.nts.alpha, p.nts.beta(), p.nts.c(), p.b);
    let a = (-b * dt).exp();
    let omega = a * a;
    // ω^α = e^{−x}
    let x = 2.0 * alpha * b * dt;
    let m1_mass = c * -(-x).exp_m1() / (2.0 * alpha * b);
    let m1_law = TsLaw::new(alpha, beta / omega, m1_mass)?;
    let lambda_omega = beta / (2.0 * b * alpha * alpha) * x.exp() * one_minus_w_plus_w_log_w(x);
    if !lambda_omega.is_finite() {
        return Err(Error::numerical(format!(
            "Poisson intensity overflows for dt = {dt}, b = {b}"
        )));
    }
    Ok(StepDecomposition {
        dt,
        a,
        omega,
        m1_law,
        lambda_omega,
        jump_alpha: 1.0 - alpha,
        jump_beta: beta,
        alpha,
    })
}

/// Density of a single jump of `M₂`, a gamma law mixed over the rate
/// variable `V`. Evaluated by quadrature.
pub fn jump_density(x: f64, dec: &StepDecomposition) -> Result<f64> {
    if !(x > 0.0) {
        return Ok(0.0);
    }
    let shape = dec.jump_alpha;
    let lg = log_gamma(shape)?;
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_evals: 200_000,
    };
    let r = integrate(
        |v| {
            let rate = dec.jump_beta * v;
            let log_pdf = shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - lg;
            mixture_rate_density(v, dec.omega, dec.alpha) * log_pdf.exp()
        },
        1.0,
        1.0 / dec.omega,
        opts,
    )?;
    Ok(r.value)
}

/// Mixing variance `M₁ + M₂` of one exact step.
pub fn sample_mixing_variance<R: Rng + ?Sized>(
    rng: &mut R,
    dec: &StepDecomposition,
) -> Result<f64> {
    let mut m = sample_ts(rng, &dec.m1_law);
    let jumps = sample_poisson(rng, dec.lambda_omega)?;
    for _ in 0..jumps {
        let v = sample_v(rng, dec.omega, dec.alpha)?;
        m += sample_gamma(rng, dec.jump_alpha, dec.jump_beta * v)?;
    }
    Ok(m)
}

/// One exact draw of `Z_Y(dt)`.
pub fn sample_increment_exact<R: Rng + ?Sized>(
    rng: &mut R,
    dec: &StepDecomposition,
    p: &OuNtsParams,
) -> Result<f64> {
    let m = sample_mixing_variance(rng, dec)?;
    Ok(sample_normal(rng) * p.nts.sigma * m.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Exact,
    Approx1,
    Approx2,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Scheme::Exact),
            "approx1" => Ok(Scheme::Approx1),
            "approx2" => Ok(Scheme::Approx2),
            other => Err(Error::params(format!(
                "unknown scheme '{other}' (expected exact, approx1 or approx2)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Exact => "exact",
            Scheme::Approx1 => "approx1",
            Scheme::Approx2 => "approx2",
        })
    }
}

/// Largest compound-Poisson intensity handled in a single exact step.
const MAX_STEP_INTENSITY: f64 = 16.0;
/// Noise older than `e^{−40}` decay is dropped from long steps.
const MAX_DECAY_EXPONENT: f64 = 40.0;

/// Precomputed transition of one time step under a given scheme.
#[derive(Debug, Clone)]
pub struct StepLaw {
    pub dt: f64,
    pub decay: f64,
    kind: StepKind,
}

#[derive(Debug, Clone)]
enum StepKind {
    /// `n` exact sub-steps of equal length, each followed by decay `sub_decay`.
    Exact {
        sub: StepDecomposition,
        n_sub: usize,
        sub_decay: f64,
    },
    Approx(TsLaw),
}

impl StepLaw {
    pub fn new(dt: f64, p: &OuNtsParams, scheme: Scheme) -> Result<Self> {
        check_time(dt)?;
        let decay = (-p.b * dt).exp();
        let kind = match scheme {
            Scheme::Exact => {
                let horizon = dt.min(MAX_DECAY_EXPONENT / p.b);
                let mut n_sub = 1usize;
                let mut sub = step_decomposition(horizon, p);
                loop {
                    match &sub {
                        Ok(d) if d.lambda_omega <= MAX_STEP_INTENSITY => break,
                        _ => {}
                    }
                    n_sub *= 2;
                    if n_sub > 1 << 30 {
                        return Err(Error::numerical(format!(
                            "cannot split step dt = {dt} into tractable pieces"
                        )));
                    }
                    sub = step_decomposition(horizon / n_sub as f64, p);
                }
                let sub = sub?;
                StepKind::Exact {
                    sub,
                    n_sub,
                    sub_decay: sub.a,
                }
            }
            Scheme::Approx1 => StepKind::Approx(step_decomposition(dt, p)?.m1_law),
            Scheme::Approx2 => StepKind::Approx(p.nts.subordinator(dt)?),
        };
        Ok(StepLaw { dt, decay, kind })
    }

    /// Number of exact sub-steps used for this step (1 for approximations).
    pub fn substeps(&self) -> usize {
        match &self.kind {
            StepKind::Exact { n_sub, .. } => *n_sub,
            StepKind::Approx(_) => 1,
        }
    }

    /// Draw the noise added over this step.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, p: &OuNtsParams) -> Result<f64> {
        match &self.kind {
            StepKind::Exact {
                sub,
                n_sub,
                sub_decay,
            } => {
                let mut z = 0.0;
                for _ in 0..*n_sub {
                    z = sub_decay * z + sample_increment_exact(rng, sub, p)?;
                }
                Ok(z)
            }
            StepKind::Approx(law) => {
                let m = sample_ts(rng, law);
                Ok(sample_normal(rng) * p.nts.sigma * m.sqrt())
            }
        }
    }
}

/// One draw of the step noise under an approximate scheme.
pub fn sample_increment_approx<R: Rng + ?Sized>(
    rng: &mut R,
    dt: f64,
    p: &OuNtsParams,
    scheme: Scheme,
) -> Result<f64> {
    if scheme == Scheme::Exact {
        return Err(Error::domain(
            "sample_increment_approx expects approx1 or approx2",
        ));
    }
    StepLaw::new(dt, p, scheme)?.sample(rng, p)
}

/// Strictly increasing simulation times starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    times: Vec<f64>,
}

impl PathGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::domain("path grid must start at t = 0"));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::domain(format!(
                    "path grid must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(PathGrid { times })
    }

    /// `0, dt, 2dt, …, n·dt`.
    pub fn uniform(dt: f64, n: usize) -> Result<Self> {
        PathGrid::new((0..=n).map(|k| k as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Simulator for `N` on a grid with one [`StepLaw`] per distinct step size.
#[derive(Debug, Clone)]
pub struct OuSimulator {
    params: OuNtsParams,
    grid: PathGrid,
    laws: Vec<StepLaw>,
    step_index: Vec<usize>,
}

impl OuSimulator {
    pub fn new(grid: PathGrid, params: OuNtsParams, scheme: Scheme) -> Result<Self> {
        params.validate()?;
        let mut laws: Vec<StepLaw> = Vec::new();
        let mut step_index = Vec::with_capacity(grid.len().saturating_sub(1));
        for w in grid.times.windows(2) {
            let dt = w[1] - w[0];
            let found = laws.iter().position(|l| (l.dt - dt).abs() <= 1e-12 * dt);
            let idx = match found {
                Some(i) => i,
                None => {
                    laws.push(StepLaw::new(dt, &params, scheme)?);
                    laws.len() - 1
                }
            };
            step_index.push(idx);
        }
        Ok(OuSimulator {
            params,
            grid,
            laws,
            step_index,
        })
    }

    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn params(&self) -> &OuNtsParams {
        &self.params
    }

    /// Law of the step from `t_m` to `t_{m+1}`.
    pub fn step_law(&self, m: usize) -> &StepLaw {
        &self.laws[self.step_index[m]]
    }

    /// Number of distinct cached step laws.
    pub fn distinct_steps(&self) -> usize {
        self.laws.len()
    }

    /// Fill `out` with `N(t_0), …, N(t_m)`.
    pub fn simulate_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if out.len() != self.grid.len() {
            return Err(Error::domain(format!(
                "output buffer has {} slots for {} grid points",
                out.len(),
                self.grid.len()
            )));
        }
        let mut n = self.params.n0;
        out[0] = n;
        for (m, &idx) in self.step_index.iter().enumerate() {
            let law = &self.laws[idx];
            n = law.decay * n + law.sample(rng, &self.params)?;
            out[m + 1] = n;
        }
        Ok(())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.len()];
        self.simulate_into(rng, &mut out)?;
        Ok(out)
    }
}

/// One path of `N` on `grid`.
pub fn simulate_path<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &PathGrid,
    p: &OuNtsParams,
    scheme: Scheme,
) -> Result<Vec<f64>> {
    OuSimulator::new(grid.clone(), *p, scheme)?.simulate(rng)
}

/// Cumulant `c_{L_Y,2n}` of the driving Lévy process at unit time,
/// from the moments of its Bessel-K Lévy density.
pub fn levy_even_cumulant(n: u32, p: &NtsParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("cumulant order must be positive"));
    }
    if p.sigma == 0.0 {
        return Ok(0.0);
    }
    let (alpha, sigma, beta) = (p.alpha, p.sigma, p.beta());
    let nf = n as f64;
    let log_c = (alpha / 2.0 + 1.25) * std::f64::consts::LN_2
        - 0.5 * (2.0 * std::f64::consts::PI).ln()
        - log_gamma(1.0 - alpha)?
        + (alpha - 0.5) * sigma.ln()
        + (1.25 - alpha / 2.0) * beta.ln();
    let log_a = (2.0 * beta).sqrt().ln() - sigma.ln();
    let log_value = log_c
        + (2.0 * nf - alpha - 0.5) * std::f64::consts::LN_2
        + (-2.0 * nf + alpha - 0.5) * log_a
        + log_gamma(nf + 0.5)?
        + log_gamma(nf - alpha)?;
    Ok(log_value.exp())
}

/// Cumulant of order `k` of `N(t)` given `N(0) = n0`.
pub fn ou_cumulant(k: u32, t: f64, p: &OuNtsParams) -> Result<f64> {
    check_time(t)?;
    match k {
        0 => Err(Error::domain("cumulant order must be positive")),
        1 => Ok(p.n0 * (-p.b * t).exp()),
        k if k % 2 == 1 => Ok(0.0),
        k => {
            let kf = k as f64;
            let cl = levy_even_cumulant(k / 2, &p.nts)?;
            Ok(cl * -(-kf * p.b * t).exp_m1() / (kf * p.b))
        }
    }
}

/// Relative error `(true − estimate)/true`.
pub fn err_pct(true_value: f64, estimate: f64) -> Result<f64> {
    if true_value == 0.0 {
        return Err(Error::domain(
            "relative error undefined for a zero reference value",
        ));
    }
    Ok((true_value - estimate) / true_value)
}

/// A Monte Carlo cumulant estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub order: u32,
    pub value: f64,
    pub stderr: f64,
}

/// Second and fourth sample cumulants of `xs`.
pub fn estimate_cumulants(xs: &[f64]) -> Result<[CumulantEstimate; 2]> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::data("at least two samples are needed"));
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let k4 = m4 - 3.0 * m2 * m2;
    let (mut v2, mut v4) = (0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        let if2 = d2 - m2;
        let if4 = d2 * d2 - m4 - 4.0 * m3 * d - 6.0 * m2 * if2;
        v2 += if2 * if2;
        v4 += if4 * if4;
    }
    Ok([
        CumulantEstimate {
            order: 2,
            value: m2,
            stderr: (v2 / nf / nf).sqrt(),
        },
        CumulantEstimate {
            order: 4,
            value: k4,
            stderr: (v4 / nf / nf).sqrt(),
        },
    ])
}
