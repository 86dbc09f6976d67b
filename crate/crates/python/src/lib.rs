//! Python bindings for `ounts`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use ounts::calibration::{self, FitOptions, SyntheticMarket};
use ounts::error::Error;
use ounts::market::{self, ForwardCurve, SpotSimulator};
use ounts::pricing::{self, AsianSpec, CallStripSpec, FftSettings, McSettings, SwingSpec};
use ounts::process::{self, OuSimulator, PathGrid, Scheme};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn scheme(s: &str) -> PyResult<Scheme> {
    s.parse().map_err(to_py)
}

fn result_to_dict<'py>(
    py: Python<'py>,
    value: &calibration::CalibrationResult,
) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Normal tempered stable law `NTS(α, σ, θ, ν)` with unit-mean subordinator.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct NtsParams(process::NtsParams);

#[pymethods]
impl NtsParams {
    #[new]
    #[pyo3(signature = (alpha, sigma, nu, theta=0.0))]
    fn new(alpha: f64, sigma: f64, nu: f64, theta: f64) -> PyResult<Self> {
        process::NtsParams::new(alpha, sigma, theta, nu)
            .map(NtsParams)
            .map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "NtsParams(alpha={}, sigma={}, nu={}, theta={})",
            p.alpha, p.sigma, p.nu, p.theta
        )
    }
}

/// Ornstein-Uhlenbeck process driven by a symmetric NTS Lévy process.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct OuNtsParams(process::OuNtsParams);

#[pymethods]
impl OuNtsParams {
    #[new]
    #[pyo3(signature = (alpha, sigma, nu, b, n0=0.0))]
    fn new(alpha: f64, sigma: f64, nu: f64, b: f64, n0: f64) -> PyResult<Self> {
        let nts = process::NtsParams::new(alpha, sigma, 0.0, nu).map_err(to_py)?;
        process::OuNtsParams::new(nts, b, n0)
            .map(OuNtsParams)
            .map_err(to_py)
    }

    #[getter]
    fn nts(&self) -> NtsParams {
        NtsParams(self.0.nts)
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn n0(&self) -> f64 {
        self.0.n0
    }

    /// Log characteristic function of the transition noise over `t`.
    fn lch(&self, u: f64, t: f64) -> PyResult<f64> {
        process::transition_lch(u, t, &self.0).map_err(to_py)
    }

    /// The same quantity by direct quadrature of the Lévy measure.
    fn lch_oracle(&self, u: f64, t: f64) -> PyResult<f64> {
        process::transition_lch_oracle(u, t, &self.0).map_err(to_py)
    }

    /// Log moment generating function of the transition noise over `t`.
    fn cgf(&self, s: f64, t: f64) -> PyResult<f64> {
        process::transition_cgf(s, t, &self.0).map_err(to_py)
    }

    /// Cumulant of order `k` of `N(t)` given `N(0) = n0`.
    fn cumulant(&self, k: u32, t: f64) -> PyResult<f64> {
        process::ou_cumulant(k, t, &self.0).map_err(to_py)
    }

    /// `n_paths` paths on `times` (starting at 0); path `i` uses stream `(seed, i)`.
    #[pyo3(signature = (times, n_paths, seed, scheme="exact"))]
    fn simulate(
        &self,
        py: Python<'_>,
        times: Vec<f64>,
        n_paths: usize,
        seed: u64,
        scheme: &str,
    ) -> PyResult<Vec<Vec<f64>>> {
        let scheme = self::scheme(scheme)?;
        let p = self.0;
        py.detach(move || {
            let sim = OuSimulator::new(PathGrid::new(times)?, p, scheme)?;
            pricing::map_paths(seed, n_paths, |rng| sim.simulate(rng))
        })
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "OuNtsParams(alpha={}, sigma={}, nu={}, b={}, n0={})",
            p.nts.alpha, p.nts.sigma, p.nts.nu, p.b, p.n0
        )
    }
}

/// Spot model `S(t) = F(0,t) exp(h(t) + N₁(t) [+ N₂(t)])` on a flat forward curve.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct SpotModel(market::SpotModel);

#[pymethods]
impl SpotModel {
    #[new]
    #[pyo3(signature = (forward, ou, levy=None))]
    fn new(forward: f64, ou: &OuNtsParams, levy: Option<&NtsParams>) -> PyResult<Self> {
        let curve = ForwardCurve::flat(forward).map_err(to_py)?;
        let model = match levy {
            Some(l) => market::SpotModel::two_factor(curve, ou.0, l.0),
            None => market::SpotModel::one_factor(curve, ou.0),
        };
        model.map(SpotModel).map_err(to_py)
    }

    /// Risk-neutral drift `h(t)`.
    fn drift(&self, t: f64) -> PyResult<f64> {
        self.0.drift(t).map_err(to_py)
    }

    #[pyo3(signature = (times, n_paths, seed, scheme="exact"))]
    fn simulate(
        &self,
        py: Python<'_>,
        times: Vec<f64>,
        n_paths: usize,
        seed: u64,
        scheme: &str,
    ) -> PyResult<Vec<Vec<f64>>> {
        let scheme = self::scheme(scheme)?;
        let model = self.0.clone();
        py.detach(move || {
            let sim = SpotSimulator::new(model, PathGrid::new(times)?, scheme)?;
            pricing::map_paths(seed, n_paths, |rng| sim.simulate(rng))
        })
        .map_err(to_py)
    }

    /// European call by Carr-Madan FFT.
    #[pyo3(signature = (t, strike, rate=0.0))]
    fn call_fft(&self, t: f64, strike: f64, rate: f64) -> PyResult<f64> {
        pricing::call_price_fft(&self.0, t, strike, rate, &FftSettings::default()).map_err(to_py)
    }

    /// Strip of calls: FFT value and a Monte Carlo estimate on the same fixings.
    #[pyo3(signature = (fixing_times, strike, n_paths, seed, rate=0.0))]
    fn call_strip<'py>(
        &self,
        py: Python<'py>,
        fixing_times: Vec<f64>,
        strike: f64,
        n_paths: usize,
        seed: u64,
        rate: f64,
    ) -> PyResult<(f64, PriceEstimate)> {
        let model = self.0.clone();
        py.detach(move || {
            let spec = CallStripSpec::new(fixing_times, strike)?;
            let fft = pricing::price_call_strip_fft(&model, &spec, rate, &FftSettings::default())?;
            let mc =
                pricing::price_call_strip_mc(&model, &spec, rate, &McSettings::new(seed, n_paths))?;
            Ok((fft.estimate.value, PriceEstimate(mc.estimate)))
        })
        .map_err(to_py)
    }

    /// Forward-start arithmetic Asian call and put on shared paths.
    #[pyo3(signature = (first_fixing, maturity, fixings, strike, n_paths, seed, rate=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn asian(
        &self,
        py: Python<'_>,
        first_fixing: f64,
        maturity: f64,
        fixings: usize,
        strike: f64,
        n_paths: usize,
        seed: u64,
        rate: f64,
    ) -> PyResult<(PriceEstimate, PriceEstimate)> {
        let model = self.0.clone();
        py.detach(move || {
            let spec = AsianSpec::forward_start(first_fixing, maturity, fixings, strike)?;
            let v = pricing::price_asian_mc(&model, &spec, rate, &McSettings::new(seed, n_paths))?;
            Ok((PriceEstimate(v.call), PriceEstimate(v.put)))
        })
        .map_err(to_py)
    }

    /// Swing option with `rights` exercises over daily dates in the final
    /// year before `maturity`, valued by least-squares Monte Carlo.
    #[pyo3(signature = (maturity, rights, strike, n_paths, seed, rate=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn swing(
        &self,
        py: Python<'_>,
        maturity: f64,
        rights: usize,
        strike: f64,
        n_paths: usize,
        seed: u64,
        rate: f64,
    ) -> PyResult<PriceEstimate> {
        let model = self.0.clone();
        py.detach(move || {
            let spec = SwingSpec::final_year_daily(maturity, rights, strike)?;
            pricing::price_swing_lsmc(&model, &spec, rate, &McSettings::new(seed, n_paths))
        })
        .map(PriceEstimate)
        .map_err(to_py)
    }
}

/// Monte Carlo value with its standard error.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct PriceEstimate(pricing::PriceEstimate);

#[pymethods]
impl PriceEstimate {
    #[getter]
    fn value(&self) -> f64 {
        self.0.value
    }

    #[getter]
    fn stderr(&self) -> f64 {
        self.0.stderr
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.0.n_paths
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "PriceEstimate(value={}, stderr={}, n_paths={})",
            self.0.value, self.0.stderr, self.0.n_paths
        )
    }
}

/// Two-factor calibration from day-ahead and month-ahead CSV files.
#[pyfunction]
#[pyo3(signature = (day_ahead, month_ahead, seed=1))]
fn calibrate<'py>(
    py: Python<'py>,
    day_ahead: &str,
    month_ahead: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (da, ma) = (day_ahead.to_owned(), month_ahead.to_owned());
    let result = py
        .detach(move || {
            let da = calibration::load_market_csv(&da)?;
            let ma = calibration::load_market_csv(&ma)?;
            calibration::calibrate(&da, &ma, seed, &FitOptions::default())
        })
        .map_err(to_py)?;
    result_to_dict(py, &result)
}

/// Write the reference synthetic market (four years of daily prices) to CSV.
#[pyfunction]
fn write_synthetic_market(day_ahead: &str, month_ahead: &str, seed: u64) -> PyResult<()> {
    let (da, ma) = SyntheticMarket::reference().generate(seed).map_err(to_py)?;
    calibration::write_market_csv(day_ahead, &da).map_err(to_py)?;
    calibration::write_market_csv(month_ahead, &ma).map_err(to_py)
}

#[pymodule]
fn pyounts(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<NtsParams>()?;
    m.add_class::<OuNtsParams>()?;
    m.add_class::<SpotModel>()?;
    m.add_class::<PriceEstimate>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_market, m)?)?;
    Ok(())
}
