//! Seeded random streams and the exact variate generators used by the
//! simulation schemes.
//!
//! Every Monte Carlo path owns an [`RngStream`] built from the run seed and
//! the path index, so results do not depend on how paths are scheduled
//! across threads.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::special::gamma;

/// A ChaCha8 stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!(
            "Poisson intensity must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(lambda).map_err(|e| Error::domain(format!("Poisson({lambda}): {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Gamma variate with the given shape and rate (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::domain(format!(
            "gamma law needs shape, rate > 0, got ({shape}, {rate})"
        )));
    }
    let d = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::domain(format!("gamma law: {e}")))?;
    Ok(d.sample(rng))
}

/// Classical tempered stable law `TS(α, β, c)` with Lévy density
/// `c e^{−βx} / x^{1+α}` on `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsLaw {
    pub alpha: f64,
    pub beta: f64,
    pub c_mass: f64,
}

impl TsLaw {
    pub fn new(alpha: f64, beta: f64, c_mass: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::params(format!(
                "TS stability index must lie in (0,1), got {alpha}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::params(format!(
                "TS tempering rate must be positive, got {beta}"
            )));
        }
        if !(c_mass > 0.0) || !c_mass.is_finite() {
            return Err(Error::params(format!(
                "TS mass must be positive, got {c_mass}"
            )));
        }
        Ok(TsLaw {
            alpha,
            beta,
            c_mass,
        })
    }

    /// `n`-th cumulant, `c Γ(n−α) β^{α−n}`.
    pub fn cumulant(&self, n: u32) -> f64 {
        let nf = n as f64;
        self.c_mass * gamma(nf - self.alpha) * self.beta.powf(self.alpha - nf)
    }

    pub fn mean(&self) -> f64 {
        self.cumulant(1)
    }

    pub fn variance(&self) -> f64 {
        self.cumulant(2)
    }

    /// Laplace exponent scale `κ = c Γ(1−α) / α`, so that
    /// `E e^{−sX} = exp(−κ((β+s)^α − β^α))`.
    pub fn kappa(&self) -> f64 {
        self.c_mass * gamma(1.0 - self.alpha) / self.alpha
    }

    /// The tilting strength `κ β^α` of the equivalent unit stable law.
    pub fn tilt(&self) -> f64 {
        self.kappa() * self.beta.powf(self.alpha)
    }

    /// Mean and shape `(μ, λ)` of the inverse Gaussian law for `α = ½`.
    pub fn inverse_gaussian_params(&self) -> (f64, f64) {
        let lambda = 2.0 * PI * self.c_mass * self.c_mass;
        let mu = (lambda / (2.0 * self.beta)).sqrt();
        (mu, lambda)
    }
}

/// One exact draw from `TS(α, β, c)`.
///
/// `α = ½` is the inverse Gaussian law and uses the transformation with
/// multiple roots; any other index goes through the double-rejection
/// sampler for exponentially tilted stable laws.
pub fn sample_ts<R: Rng + ?Sized>(rng: &mut R, law: &TsLaw) -> f64 {
    if law.alpha == 0.5 {
        let (mu, lambda) = law.inverse_gaussian_params();
        return sample_inverse_gaussian(rng, mu, lambda);
    }
    let kappa = law.kappa();
    let s = sample_tilted_stable(rng, law.alpha, law.tilt());
    kappa.powf(1.0 / law.alpha) * s
}

/// Inverse Gaussian `IG(μ, λ)` by the transformation with multiple roots.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mu: f64, lambda: f64) -> f64 {
    let n = sample_normal(rng);
    let y = n * n;
    // smaller root of the quadratic, in a cancellation-free form
    let r = 4.0 * lambda / (mu * y);
    let sq = (1.0 + r).sqrt();
    let x = mu * r / ((sq + 1.0) * (sq + 1.0));
    let x = if y == 0.0 { mu } else { x };
    if sample_uniform(rng) <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `sin(αu)^α sin((1−α)u)^{1−α} / sin(u)`.
fn zolotarev_base(u: f64, alpha: f64) -> f64 {
    let ia = 1.0 - alpha;
    (ia * sinc(ia * u)).powf(ia) * (alpha * sinc(alpha * u)).powf(alpha) / sinc(u)
}

/// `B(u)/B(0)`, the reciprocal of the normalised Zolotarev base.
fn zolotarev_ratio(u: f64, alpha: f64) -> f64 {
    let ia = 1.0 - alpha;
    sinc(u) / (sinc(alpha * u).powf(alpha) * sinc(ia * u).powf(ia))
}

/// Positive stable variate with Laplace transform `exp(−s^α)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let u = PI * sample_uniform(rng);
    let e = sample_exp(rng);
    let a = zolotarev_base(u, alpha).powf(1.0 / (1.0 - alpha));
    (a / e).powf((1.0 - alpha) / alpha)
}

/// Exponentially tilted unit stable variate with Laplace transform
/// `exp(λ^α − (λ + s)^α)`, given `tilt = λ^α`.
///
/// Double rejection: the angle of Zolotarev's representation is accepted
/// against a dominating mixture first; the exponential of that first stage
/// is then reused for the rejection step on the radial variable.
pub fn sample_tilted_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64, tilt: f64) -> f64 {
    let c1 = (PI / 2.0).sqrt();
    let c2 = 2.0 + c1;
    let b = (1.0 - alpha) / alpha;
    let gam = tilt * alpha * (1.0 - alpha);
    let sgam = gam.sqrt();
    let c3 = c2 * sgam;
    let xi = (1.0 + SQRT_2 * c3) / PI;
    let psi = c3 * (-gam * PI * PI / 8.0).exp() / PI.sqrt();
    let w1 = c1 * xi / sgam;
    let w2 = 2.0 * PI.sqrt() * psi;
    let w3 = xi * PI;
    let log_tilt = tilt.ln();
    loop {
        let (u, z, zr) = loop {
            let v = sample_uniform(rng);
            let u = if gam >= 1.0 {
                if v < w1 / (w1 + w2) {
                    sample_normal(rng).abs() / sgam
                } else {
                    let w = sample_uniform(rng);
                    PI * (1.0 - w * w)
                }
            } else {
                let w = sample_uniform(rng);
                if v < w3 / (w3 + w2) {
                    PI * w
                } else {
                    PI * (1.0 - w * w)
                }
            };
            let w = sample_uniform(rng);
            let zeta = zolotarev_ratio(u, alpha).sqrt();
            let z = 1.0 / (1.0 - (1.0 + alpha * zeta / sgam).powf(-1.0 / alpha));
            let mut rho =
                PI * (-tilt * (1.0 - 1.0 / (zeta * zeta))).exp() / ((1.0 + c1) * sgam / zeta + z);
            let mut d = 0.0;
            if u >= 0.0 && gam >= 1.0 {
                d += xi * (-gam * u * u / 2.0).exp();
            }
            if u > 0.0 && u < PI {
                d += psi / (PI - u).sqrt();
            }
            if (0.0..=PI).contains(&u) && gam < 1.0 {
                d += xi;
            }
            rho *= d;
            let zr = w * rho;
            if u < PI && zr <= 1.0 {
                break (u, z, zr);
            }
        };
        let a = zolotarev_base(u, alpha).powf(1.0 / (1.0 - alpha));
        let m = (b / a).powf(alpha) * tilt;
        let delta = (m * alpha / a).sqrt();
        let a1 = delta * c1;
        let a3 = z / a;
        let s = a1 + delta + a3;
        let v = sample_uniform(rng);
        let mut n = 0.0;
        let mut e2 = 0.0;
        let x = if v < a1 / s {
            n = sample_normal(rng);
            m - delta * n.abs()
        } else if v < (a1 + delta) / s {
            m + delta * sample_uniform(rng)
        } else {
            e2 = sample_exp(rng);
            m + delta + e2 * a3
        };
        if !(x > 0.0) {
            continue;
        }
        let e = -zr.ln();
        let mut c = a * (x - m) + (log_tilt / alpha - b * m.ln()).exp() * ((m / x).powf(b) - 1.0);
        if x < m {
            c -= n * n / 2.0;
        } else if x > m + delta {
            c -= e2;
        }
        if c <= e {
            return x.powf(-b);
        }
    }
}

/// `1 − w + w log w` for `w = e^{−x}`, accurate for small `x`.
pub(crate) fn one_minus_w_plus_w_log_w(x: f64) -> f64 {
    if x < 0.1 {
        // Σ_{n≥2} (−1)^n (n−1) x^n / n!
        let mut term = x * x / 2.0;
        let mut sum: f64 = 0.0;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            sum += term * (n - 1.0);
            term *= -x / (n + 1.0);
            n += 1.0;
        }
        sum
    } else {
        let w = (-x).exp();
        -(-x).exp_m1() - x * w
    }
}

/// Density of the mixing rate `V` on `[1, 1/ω]`,
/// proportional to `(v^α − 1) / v`.
pub fn mixture_rate_density(v: f64, omega: f64, alpha: f64) -> f64 {
    if !(v >= 1.0 && v <= 1.0 / omega) {
        return 0.0;
    }
    let x = -alpha * omega.ln();
    let wa = (-x).exp();
    alpha * wa / one_minus_w_plus_w_log_w(x) * (v.powf(alpha) - 1.0) / v
}

/// Exact draw of the mixing rate `V`.
///
/// With `Y = log V` the density on `[0, L]`, `L = −log ω`, is proportional
/// to `e^{αy} − 1 = Σ_k (αy)^k / k!`, a mixture of power laws. Small `αL`
/// picks the power-law component directly; large `αL` rejects from the
/// dominating `e^{αy}` component.
pub fn sample_v<R: Rng + ?Sized>(rng: &mut R, omega: f64, alpha: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::domain(format!(
            "omega must lie in (0,1), got {omega}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let len = -omega.ln();
    let x = alpha * len;
    let y = if x > 5.0 {
        loop {
            let u = sample_uniform(rng);
            let y = (u * x.exp_m1()).ln_1p() / alpha;
            if sample_uniform(rng) <= -(-alpha * y).exp_m1() {
                break y;
            }
        }
    } else {
        // P(K = k) ∝ x^k / (k+1)!, k ≥ 1
        let mut weights = Vec::with_capacity(32);
        let mut p = x / 2.0;
        let mut total = 0.0;
        let mut k = 1;
        loop {
            weights.push(p);
            total += p;
            k += 1;
            p *= x / (k as f64 + 1.0);
            if p < 1e-17 * total {
                break;
            }
        }
        let mut target = sample_uniform(rng) * total;
        let mut pick = weights.len();
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                pick = i + 1;
                break;
            }
            target -= w;
        }
        let power = pick as f64 + 1.0;
        len * sample_uniform(rng).powf(1.0 / power)
    };
    Ok(y.exp().clamp(1.0, 1.0 / omega))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let va: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn degenerate_poisson() {
        let mut r = RngStream::new(1, 0);
        assert_eq!(sample_poisson(&mut r, 0.0).unwrap(), 0);
        assert!(sample_poisson(&mut r, -1.0).is_err());
    }

    #[test]
    fn invalid_gamma_parameters() {
        let mut r = RngStream::new(1, 0);
        assert!(sample_gamma(&mut r, 0.0, 1.0).is_err());
        assert!(sample_gamma(&mut r, 1.0, -1.0).is_err());
    }

    #[test]
    fn ts_law_validation() {
        assert!(TsLaw::new(1.0, 1.0, 1.0).is_err());
        assert!(TsLaw::new(0.5, 0.0, 1.0).is_err());
        assert!(TsLaw::new(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn unit_mean_parameterisation() {
        // c = β^{1−α}/Γ(1−α) gives E[L(1)] = 1 for any α.
        for &alpha in &[0.2_f64, 0.5, 0.8] {
            let beta = (1.0 - alpha) / 2.5;
            let c = beta.powf(1.0 - alpha) / gamma(1.0 - alpha);
            let law = TsLaw::new(alpha, beta, c).unwrap();
            assert!((law.mean() - 1.0).abs() < 1e-13);
            assert!((law.variance() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_gaussian_mapping_matches_cumulants() {
        let law = TsLaw::new(0.5, 0.7, 0.03).unwrap();
        let (mu, lambda) = law.inverse_gaussian_params();
        assert!((mu - law.mean()).abs() < 1e-14);
        assert!((mu.powi(3) / lambda - law.variance()).abs() < 1e-14);
    }

    #[test]
    fn v_support_and_shrinking_limit() {
        let mut r = RngStream::new(11, 0);
        for _ in 0..20_000 {
            let v = sample_v(&mut r, 0.4346, 0.5).unwrap();
            assert!((1.0..=1.0 / 0.4346).contains(&v));
        }
        let n = 20_000;
        let m: f64 = (0..n)
            .map(|_| sample_v(&mut r, 0.999, 0.5).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((m - 1.0).abs() < 1e-3);
        assert!(sample_v(&mut r, 1.0, 0.5).is_err());
        assert!(sample_v(&mut r, 0.0, 0.5).is_err());
    }

    #[test]
    fn series_branch_of_intensity_factor() {
        for &x in &[1e-6_f64, 1e-3, 0.05, 0.0999, 0.1001, 1.0] {
            let w = (-x).exp();
            let direct = 1.0 - w + w * w.ln();
            let got = one_minus_w_plus_w_log_w(x);
            assert!(
                ((got - direct) / got).abs() < 1e-6_f64.max(1e-15 / (x * x)),
                "x={x}"
            );
        }
    }
}
