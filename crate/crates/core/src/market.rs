//! Risk-neutral spot models built on a forward curve: the one-factor
//! OU-NTS model and the two-factor model with an additional NTS Lévy
//! factor.

use std::path::Path;

use chrono::NaiveDate;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{
    che_nts_complex, transition_cgf, transition_cgf_elementary, transition_lch_complex, NtsParams,
    OuNtsParams, OuSimulator, PathGrid, Scheme,
};
use crate::sampling::{sample_normal, sample_ts, TsLaw};

/// Days per year of the ACT/365 convention.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Forward curve `F(0, t)`, piecewise constant per calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForwardCurve {
    Flat(f64),
    Daily {
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
    },
}

impl ForwardCurve {
    pub fn flat(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::params(format!(
                "forward level must be positive, got {value}"
            )));
        }
        Ok(ForwardCurve::Flat(value))
    }

    pub fn daily(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.is_empty() || dates.len() != values.len() {
            return Err(Error::data(
                "forward curve needs matching, non-empty date and value lists",
            ));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::data(format!(
                    "forward curve dates must increase strictly: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some((d, v)) = dates
            .iter()
            .zip(&values)
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::data(format!(
                "forward price on {d} must be positive, got {v}"
            )));
        }
        Ok(ForwardCurve::Daily { dates, values })
    }

    /// Load a `date,price` CSV with ISO-8601 dates.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let date_col = headers.iter().position(|h| h == "date");
        let price_col = headers.iter().position(|h| h == "price");
        let (Some(date_col), Some(price_col)) = (date_col, price_col) else {
            return Err(Error::Parse {
                line: 1,
                msg: "header must contain 'date' and 'price'".into(),
            });
        };
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let d = rec.get(date_col).unwrap_or("");
            let p = rec.get(price_col).unwrap_or("");
            let d = NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                msg: format!("bad date '{d}': {e}"),
            })?;
            let p: f64 = p.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad price '{p}': {e}"),
            })?;
            dates.push(d);
            values.push(p);
        }
        ForwardCurve::daily(dates, values)
    }

    /// `F(0, t)` with `t` in years from the first curve date.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ForwardCurve::Flat(v) => *v,
            ForwardCurve::Daily { dates, values } => {
                let day = (t * DAYS_PER_YEAR + 1e-9).floor().max(0.0) as i64;
                let target = dates[0] + chrono::Duration::days(day);
                match dates.binary_search(&target) {
                    Ok(i) => values[i],
                    Err(0) => values[0],
                    Err(i) => values[i - 1],
                }
            }
        }
    }
}

/// Spot model `S(t) = F(0,t) exp(h₁(t) + N₁(t) [+ h₂(t) + N₂(t)])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotModel {
    pub curve: ForwardCurve,
    pub ou: OuNtsParams,
    pub levy: Option<NtsParams>,
}

impl SpotModel {
    pub fn one_factor(curve: ForwardCurve, ou: OuNtsParams) -> Result<Self> {
        let m = SpotModel {
            curve,
            ou,
            levy: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn two_factor(curve: ForwardCurve, ou: OuNtsParams, levy: NtsParams) -> Result<Self> {
        let m = SpotModel {
            curve,
            ou,
            levy: Some(levy),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.ou.validate()?;
        if self.ou.nts.sigma > 0.0 && !self.ou.has_exponential_moment() {
            return Err(Error::params(format!(
                "risk-neutral drift needs sqrt(2 beta)/sigma > 1 for the OU factor, got {}",
                self.ou.cgf_bound()
            )));
        }
        if let Some(levy) = &self.levy {
            levy.validate()?;
            levy_exponent_at_one(levy)?;
        }
        Ok(())
    }

    /// Total risk-neutral drift `h₁(t) + h₂(t)`.
    pub fn drift(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(-self.ou.n0);
        }
        let mut h = rn_drift_one_factor(t, &self.ou)?;
        if let Some(levy) = &self.levy {
            h += rn_drift_levy(t, levy)?;
        }
        Ok(h)
    }

    /// Largest `s` for which `E[S(t)^s]` is finite at every horizon.
    pub fn moment_bound(&self) -> f64 {
        let mut bound = if self.ou.nts.sigma > 0.0 {
            self.ou.cgf_bound()
        } else {
            f64::INFINITY
        };
        if let Some(levy) = &self.levy {
            bound = bound.min(levy_moment_bound(levy));
        }
        bound
    }

    /// Largest `s` for which `E[S(t)^{−s}]` is finite at every horizon.
    pub fn negative_moment_bound(&self) -> f64 {
        let mut bound = if self.ou.nts.sigma > 0.0 {
            self.ou.cgf_bound()
        } else {
            f64::INFINITY
        };
        if let Some(levy) = &self.levy {
            bound = bound.min(levy_moment_bound(&NtsParams {
                theta: -levy.theta,
                ..*levy
            }));
        }
        bound
    }

    /// Log characteristic function of `log S(t)` at complex `u`.
    pub fn log_spot_lch(&self, u: Complex64, t: f64) -> Result<Complex64> {
        let i = Complex64::i();
        let shift = self.curve.value(t).ln() + self.drift(t)? + self.ou.n0 * (-self.ou.b * t).exp();
        let mut l = i * u * shift + transition_lch_complex(u, t, &self.ou)?;
        if let Some(levy) = &self.levy {
            l += che_nts_complex(u, levy) * t;
        }
        Ok(l)
    }
}

/// `κ(1) = ψ(−i)`, the exponential moment exponent of an NTS law at unit
/// time.
fn levy_exponent_at_one(p: &NtsParams) -> Result<f64> {
    let x = p.nu * (p.sigma * p.sigma / 2.0 + p.theta) / (1.0 - p.alpha);
    if !(x < 1.0) {
        return Err(Error::domain(format!(
            "exponential moment of the Levy factor does not exist: nu(sigma^2/2 + theta) = {} must stay below 1 - alpha = {}",
            x * (1.0 - p.alpha),
            1.0 - p.alpha
        )));
    }
    Ok((1.0 - p.alpha) / (p.alpha * p.nu) * (1.0 - (1.0 - x).powf(p.alpha)))
}

/// Largest `s > 0` with `ν(σ²s²/2 + θs) < 1 − α`.
fn levy_moment_bound(p: &NtsParams) -> f64 {
    let (a, b, c) = (
        p.nu * p.sigma * p.sigma / 2.0,
        p.nu * p.theta,
        -(1.0 - p.alpha),
    );
    if a == 0.0 {
        return if b > 0.0 { -c / b } else { f64::INFINITY };
    }
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

/// `h(t) = −m_N(1, t)` for the OU factor; the `α = ½` case uses the
/// logarithmic closed form.
pub fn rn_drift_one_factor(t: f64, ou: &OuNtsParams) -> Result<f64> {
    let cgf = if ou.nts.alpha == 0.5 {
        transition_cgf_elementary(1.0, t, ou)?
    } else {
        transition_cgf(1.0, t, ou)?
    };
    Ok(-cgf - ou.n0 * (-ou.b * t).exp())
}

/// `h₂(t) = −t κ₂(1)` for the Lévy factor.
pub fn rn_drift_levy(t: f64, p: &NtsParams) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    Ok(-t * levy_exponent_at_one(p)?)
}

/// Characteristic function of `log S(t)`.
pub fn log_spot_chf(u: f64, t: f64, m: &SpotModel) -> Result<Complex64> {
    Ok(m.log_spot_lch(Complex64::new(u, 0.0), t)?.exp())
}

/// Path generator for `S` on a fixed grid.
#[derive(Debug, Clone)]
pub struct SpotSimulator {
    model: SpotModel,
    ou_sim: OuSimulator,
    forward: Vec<f64>,
    drift: Vec<f64>,
    levy_steps: Vec<Option<TsLaw>>,
}

impl SpotSimulator {
    pub fn new(model: SpotModel, grid: PathGrid, scheme: Scheme) -> Result<Self> {
        model.validate()?;
        let times = grid.times().to_vec();
        let forward = times.iter().map(|&t| model.curve.value(t)).collect();
        let drift = times
            .iter()
            .map(|&t| model.drift(t))
            .collect::<Result<Vec<_>>>()?;
        let levy_steps = match &model.levy {
            Some(l) if l.sigma != 0.0 || l.theta != 0.0 => times
                .windows(2)
                .map(|w| l.subordinator(w[1] - w[0]).map(Some))
                .collect::<Result<Vec<_>>>()?,
            _ => vec![None; times.len().saturating_sub(1)],
        };
        let ou_sim = OuSimulator::new(grid, model.ou, scheme)?;
        Ok(SpotSimulator {
            model,
            ou_sim,
            forward,
            drift,
            levy_steps,
        })
    }

    pub fn grid(&self) -> &PathGrid {
        self.ou_sim.grid()
    }

    pub fn model(&self) -> &SpotModel {
        &self.model
    }

    /// Fill the factor values `N₁(t_m)` and `N₂(t_m)` along one path.
    pub fn simulate_factors<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n1: &mut [f64],
        n2: &mut [f64],
    ) -> Result<()> {
        let len = self.forward.len();
        if n1.len() != len || n2.len() != len {
            return Err(Error::domain("factor buffers do not match the grid length"));
        }
        let levy = self.model.levy;
        let p = self.model.ou;
        n1[0] = p.n0;
        n2[0] = 0.0;
        for m in 0..len - 1 {
            let law = self.ou_sim.step_law(m);
            n1[m + 1] = law.decay * n1[m] + law.sample(rng, &p)?;
            n2[m + 1] = n2[m]
                + match (&self.levy_steps[m], &levy) {
                    (Some(law), Some(l)) => {
                        let dl = sample_ts(rng, law);
                        l.theta * dl + l.sigma * dl.sqrt() * sample_normal(rng)
                    }
                    _ => 0.0,
                };
        }
        Ok(())
    }

    /// One spot path.
    pub fn simulate_into<R: Rng + ?Sized>(&self, rng: &mut R, spot: &mut [f64]) -> Result<()> {
        let len = self.forward.len();
        if spot.len() != len {
            return Err(Error::domain("spot buffer does not match the grid length"));
        }
        let mut n1 = vec![0.0; len];
        let mut n2 = vec![0.0; len];
        self.simulate_factors(rng, &mut n1, &mut n2)?;
        for m in 0..len {
            spot[m] = self.forward[m] * (self.drift[m] + n1[m] + n2[m]).exp();
        }
        Ok(())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.forward.len()];
        self.simulate_into(rng, &mut out)?;
        Ok(out)
    }
}

/// Spot paths on `grid`, one row per path.
pub fn spot_paths<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &PathGrid,
    model: &SpotModel,
    scheme: Scheme,
    n_paths: usize,
) -> Result<Vec<Vec<f64>>> {
    let sim = SpotSimulator::new(model.clone(), grid.clone(), scheme)?;
    (0..n_paths).map(|_| sim.simulate(rng)).collect()
}
