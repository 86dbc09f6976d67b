//! Run configuration: one TOML (or JSON) file per run plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ounts::calibration::{load_market_csv, FitOptions, MarketSeries};
use ounts::market::{ForwardCurve, SpotModel, DAYS_PER_YEAR};
use ounts::pricing::{AsianSpec, CallStripSpec, FftSettings, SwingSpec};
use ounts::process::{NtsParams, OuNtsParams, PathGrid, Scheme};

use crate::CliError;

pub const CONFIG_HELP: &str = "\
CONFIGURATION
  One TOML file per run (a JSON file with the same layout is also accepted,
  e.g. the output of `calibrate`). Times are year fractions (ACT/365), dates
  ISO-8601, relative paths are resolved against the config file directory.

  [model]                    short-term OU-NTS factor N(t)
  model.alpha = 0.5          stability index in (0, 1)
  model.sigma = 0.3          NTS scale
  model.nu = 2.5             subordinator variance rate
  model.b = 5.0              mean-reversion speed
  model.n0 = 0.0             initial value N(0)
  model.forward = 20.0       flat forward curve, or
  model.forward_curve = \"curve.csv\"   daily curve with columns date,forward
  model.rate = 0.0           discount rate
  [model.levy]               optional long-term NTS Levy factor
  model.levy.alpha/sigma/nu/theta

  [run]
  run.seed = 1               master seed; path i uses stream (seed, i)
  run.n_paths = 10000
  run.scheme = \"exact\"       exact | approx1 | approx2
  run.threads = 4            default: available parallelism

  [grid]                     simulate only
  grid.dt = 0.00274 with grid.steps = 365, or grid.times = [0.1, 0.2]
  grid.variable = \"S\"        S (spot) or N (OU factor)

  [contract]                 price only
  contract.type = \"call_strip\" | \"asian\" | \"swing\"
  call_strip: strike, fixing_times or first_fixing + maturity (daily), mc_check
  asian:      strike, first_fixing, maturity, fixings, or fixing_times
  swing:      strike, rights, maturity (daily dates over its final year)
              or exercise_times, degree

  [fft]                      fft.damping, fft.log2_n, fft.eta
  [validate]                 validate.dts, validate.paths, validate.schemes,
                             validate.times, validate.u_max, validate.u_points,
                             validate.se_multiple, validate.biased_threshold
  [calibrate]                calibrate.day_ahead, calibrate.month_ahead (CSV
                             date,price[,trading]), calibrate.synthetic_runs,
                             calibrate.max_iters
  [output]                   output.path, output.format = \"json\" | \"csv\"

  Command-line flags override the file: --seed, --paths, --scheme, --out,
  --format.

EXIT CODES
  0 success, 2 configuration or input error, 3 numerical failure.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub run: RunSection,
    pub grid: Option<GridSection>,
    pub contract: Option<ContractSection>,
    #[serde(default)]
    pub fft: FftSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "half")]
    pub alpha: f64,
    pub sigma: f64,
    pub nu: f64,
    pub b: f64,
    #[serde(default)]
    pub n0: f64,
    pub forward: Option<f64>,
    pub forward_curve: Option<PathBuf>,
    #[serde(default)]
    pub rate: f64,
    pub levy: Option<LevySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    #[serde(default = "half")]
    pub alpha: f64,
    pub sigma: f64,
    pub nu: f64,
    #[serde(default)]
    pub theta: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub threads: Option<usize>,
}

fn default_seed() -> u64 {
    1
}

fn default_paths() -> usize {
    10_000
}

fn default_scheme() -> Scheme {
    Scheme::Exact
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            n_paths: default_paths(),
            scheme: default_scheme(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_variable")]
    pub variable: String,
}

fn default_variable() -> String {
    "S".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractSection {
    CallStrip {
        strike: f64,
        fixing_times: Option<Vec<f64>>,
        first_fixing: Option<f64>,
        maturity: Option<f64>,
        #[serde(default = "yes")]
        mc_check: bool,
    },
    Asian {
        strike: f64,
        fixing_times: Option<Vec<f64>>,
        first_fixing: Option<f64>,
        maturity: Option<f64>,
        fixings: Option<usize>,
    },
    Swing {
        strike: f64,
        rights: usize,
        maturity: Option<f64>,
        exercise_times: Option<Vec<f64>>,
        #[serde(default = "default_degree")]
        degree: usize,
    },
}

fn yes() -> bool {
    true
}

fn default_degree() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FftSection {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_log2_n")]
    pub log2_n: u32,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_damping() -> f64 {
    FftSettings::default().damping
}

fn default_log2_n() -> u32 {
    FftSettings::default().log2_n
}

fn default_eta() -> f64 {
    FftSettings::default().eta
}

impl Default for FftSection {
    fn default() -> Self {
        FftSection {
            damping: default_damping(),
            log2_n: default_log2_n(),
            eta: default_eta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_path_counts")]
    pub paths: Vec<usize>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_chf_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_u_points")]
    pub u_points: usize,
    #[serde(default = "default_se_multiple")]
    pub se_multiple: f64,
    #[serde(default = "default_biased")]
    pub biased_threshold: f64,
    #[serde(default = "default_chf_tolerance")]
    pub chf_tolerance: f64,
}

fn default_dts() -> Vec<f64> {
    vec![1.0 / DAYS_PER_YEAR, 1.0 / 12.0]
}

fn default_path_counts() -> Vec<usize> {
    vec![1_000, 10_000, 100_000, 1_000_000]
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Exact, Scheme::Approx1, Scheme::Approx2]
}

fn default_chf_times() -> Vec<f64> {
    vec![1.0 / DAYS_PER_YEAR, 1.0 / 12.0, 1.0]
}

fn default_u_max() -> f64 {
    50.0
}

fn default_u_points() -> usize {
    33
}

fn default_se_multiple() -> f64 {
    3.0
}

fn default_biased() -> f64 {
    10.0
}

fn default_chf_tolerance() -> f64 {
    1e-8
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            dts: default_dts(),
            paths: default_path_counts(),
            schemes: default_schemes(),
            times: default_chf_times(),
            u_max: default_u_max(),
            u_points: default_u_points(),
            se_multiple: default_se_multiple(),
            biased_threshold: default_biased(),
            chf_tolerance: default_chf_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub day_ahead: Option<PathBuf>,
    pub month_ahead: Option<PathBuf>,
    #[serde(default = "default_runs")]
    pub synthetic_runs: usize,
    #[serde(default = "default_iters")]
    pub max_iters: u64,
}

fn default_runs() -> usize {
    3
}

fn default_iters() -> u64 {
    FitOptions::default().max_iters
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            day_ahead: None,
            month_ahead: None,
            synthetic_runs: default_runs(),
            max_iters: default_iters(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub scheme: Option<Scheme>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Read a config file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<(Self, PathBuf), CliError> {
        let Some(path) = path else {
            return Ok((RunConfig::default(), PathBuf::from(".")));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: RunConfig = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| config_error(format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| config_error(format!("config {}: {e}", path.display())))?
        };
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, dir))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(n) = o.paths {
            self.run.n_paths = n;
            self.validate.paths = vec![n];
        }
        if let Some(s) = o.scheme {
            self.run.scheme = s;
            self.validate.schemes = vec![s];
        }
        if let Some(p) = &o.out {
            self.output.path = Some(p.clone());
        }
        if let Some(f) = o.format {
            self.output.format = Some(f);
        }
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.output.format.unwrap_or(default)
    }

    pub fn check_threads(&self) -> Result<(), CliError> {
        if self.run.threads == Some(0) {
            return Err(config_error("run.threads: must be at least 1"));
        }
        Ok(())
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn require_file(dir: &Path, p: &Path, field: &str) -> Result<PathBuf, CliError> {
    let full = resolve(dir, p);
    if !full.is_file() {
        return Err(config_error(format!(
            "{field}: file not found: {}",
            full.display()
        )));
    }
    Ok(full)
}

fn field<T>(r: ounts::error::Result<T>, name: &str) -> Result<T, CliError> {
    r.map_err(|e| config_error(format!("{name}: {e}")))
}

/// A fully validated model.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub ou: OuNtsParams,
    pub levy: Option<NtsParams>,
    pub curve: Option<ForwardCurve>,
    pub rate: f64,
    pub digest: String,
}

impl ResolvedModel {
    pub fn spot(&self) -> Result<SpotModel, CliError> {
        let Some(curve) = self.curve.clone() else {
            return Err(config_error(
                "model: forward or forward_curve is required for spot quantities",
            ));
        };
        let model = SpotModel {
            curve,
            ou: self.ou,
            levy: self.levy,
        };
        field(model.validate(), "model")?;
        Ok(model)
    }
}

impl ModelSection {
    pub fn resolve(&self, dir: &Path) -> Result<ResolvedModel, CliError> {
        let nts = field(
            NtsParams::new(self.alpha, self.sigma, 0.0, self.nu),
            "model",
        )?;
        let ou = field(OuNtsParams::new(nts, self.b, self.n0), "model")?;
        let levy = match &self.levy {
            Some(l) => Some(field(
                NtsParams::new(l.alpha, l.sigma, l.theta, l.nu),
                "model.levy",
            )?),
            None => None,
        };
        if !self.rate.is_finite() {
            return Err(config_error("model.rate: must be finite"));
        }
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("model section serializes"));
        let curve = match (self.forward, &self.forward_curve) {
            (Some(_), Some(_)) => {
                return Err(config_error(
                    "model: give either forward or forward_curve, not both",
                ));
            }
            (Some(f), None) => Some(field(ForwardCurve::flat(f), "model.forward")?),
            (None, Some(p)) => {
                let full = require_file(dir, p, "model.forward_curve")?;
                hasher.update(
                    std::fs::read(&full)
                        .map_err(|e| config_error(format!("model.forward_curve: {e}")))?,
                );
                Some(field(ForwardCurve::from_csv(&full), "model.forward_curve")?)
            }
            (None, None) => None,
        };
        let digest = hex::encode(hasher.finalize());
        let resolved = ResolvedModel {
            ou,
            levy,
            curve,
            rate: self.rate,
            digest,
        };
        if resolved.curve.is_some() {
            resolved.spot()?;
        }
        Ok(resolved)
    }

    /// The section describing a fitted two-factor model on a flat curve.
    pub fn from_fit(ou: &OuNtsParams, levy: &NtsParams, forward: f64) -> Self {
        ModelSection {
            alpha: ou.nts.alpha,
            sigma: ou.nts.sigma,
            nu: ou.nts.nu,
            b: ou.b,
            n0: ou.n0,
            forward: Some(forward),
            forward_curve: None,
            rate: 0.0,
            levy: Some(LevySection {
                alpha: levy.alpha,
                sigma: levy.sigma,
                nu: levy.nu,
                theta: levy.theta,
            }),
        }
    }
}

pub fn require_model(cfg: &RunConfig, dir: &Path) -> Result<ResolvedModel, CliError> {
    match &cfg.model {
        Some(m) => m.resolve(dir),
        None => Err(config_error("model: section missing")),
    }
}

pub fn check_paths(n: usize, min: usize) -> Result<(), CliError> {
    if n < min {
        return Err(config_error(format!(
            "run.n_paths: need at least {min}, got {n}"
        )));
    }
    Ok(())
}

pub fn grid(section: Option<&GridSection>) -> Result<(PathGrid, bool), CliError> {
    let Some(g) = section else {
        return Err(config_error("grid: section missing"));
    };
    let spot = match g.variable.as_str() {
        "S" => true,
        "N" => false,
        other => {
            return Err(config_error(format!(
                "grid.variable: expected S or N, got '{other}'"
            )))
        }
    };
    let grid = match (&g.times, g.dt, g.steps) {
        (Some(times), None, None) => {
            let mut t = Vec::with_capacity(times.len() + 1);
            if times.first() != Some(&0.0) {
                t.push(0.0);
            }
            t.extend_from_slice(times);
            field(PathGrid::new(t), "grid.times")?
        }
        (None, Some(dt), Some(steps)) => {
            if steps == 0 {
                return Err(config_error("grid.steps: must be at least 1"));
            }
            field(PathGrid::uniform(dt, steps), "grid.dt")?
        }
        _ => {
            return Err(config_error(
                "grid: give either times, or dt together with steps",
            ))
        }
    };
    Ok((grid, spot))
}

fn daily_from(first: f64, maturity: f64, what: &str) -> Result<Vec<f64>, CliError> {
    if !(first > 0.0) || !(maturity >= first) {
        return Err(config_error(format!(
            "{what}: need 0 < first_fixing <= maturity"
        )));
    }
    let n = ((maturity - first) * DAYS_PER_YEAR + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| first + k as f64 / DAYS_PER_YEAR).collect())
}

/// A validated contract ready to price.
#[derive(Debug, Clone)]
pub enum Contract {
    CallStrip { spec: CallStripSpec, mc_check: bool },
    Asian(AsianSpec),
    Swing(SwingSpec),
}

pub fn contract(cfg: &RunConfig) -> Result<Contract, CliError> {
    let Some(c) = &cfg.contract else {
        return Err(config_error("contract: section missing"));
    };
    Ok(match c {
        ContractSection::CallStrip {
            strike,
            fixing_times,
            first_fixing,
            maturity,
            mc_check,
        } => {
            let times = match (fixing_times, first_fixing, maturity) {
                (Some(t), None, None) => t.clone(),
                (None, first, Some(m)) => {
                    daily_from(first.unwrap_or(1.0 / DAYS_PER_YEAR), *m, "contract")?
                }
                _ => {
                    return Err(config_error(
                        "contract: give fixing_times, or maturity with optional first_fixing",
                    ))
                }
            };
            Contract::CallStrip {
                spec: field(CallStripSpec::new(times, *strike), "contract")?,
                mc_check: *mc_check,
            }
        }
        ContractSection::Asian {
            strike,
            fixing_times,
            first_fixing,
            maturity,
            fixings,
        } => {
            let spec = match (fixing_times, first_fixing, maturity, fixings) {
                (Some(t), None, None, None) => AsianSpec::new(t.clone(), *strike),
                (None, Some(f), Some(m), Some(n)) => AsianSpec::forward_start(*f, *m, *n, *strike),
                _ => {
                    return Err(config_error(
                        "contract: give fixing_times, or first_fixing, maturity and fixings",
                    ))
                }
            };
            Contract::Asian(field(spec, "contract")?)
        }
        ContractSection::Swing {
            strike,
            rights,
            maturity,
            exercise_times,
            degree,
        } => {
            let mut spec = match (exercise_times, maturity) {
                (Some(t), None) => field(SwingSpec::new(t.clone(), *rights, *strike), "contract")?,
                (None, Some(m)) => field(
                    SwingSpec::final_year_daily(*m, *rights, *strike),
                    "contract",
                )?,
                _ => {
                    return Err(config_error(
                        "contract: give either exercise_times or maturity",
                    ))
                }
            };
            if *degree == 0 {
                return Err(config_error("contract.degree: must be at least 1"));
            }
            spec.degree = *degree;
            Contract::Swing(spec)
        }
    })
}

pub fn fft(cfg: &RunConfig) -> Result<FftSettings, CliError> {
    let f = &cfg.fft;
    if !(f.eta > 0.0) || !(8..=22).contains(&f.log2_n) || !f.damping.is_finite() {
        return Err(config_error(
            "fft: need eta > 0, log2_n in 8..=22 and a finite damping",
        ));
    }
    Ok(FftSettings {
        damping: f.damping,
        log2_n: f.log2_n,
        eta: f.eta,
    })
}

pub fn market_files(cfg: &RunConfig, dir: &Path) -> Result<(MarketSeries, MarketSeries), CliError> {
    let c = &cfg.calibrate;
    let (Some(da), Some(ma)) = (&c.day_ahead, &c.month_ahead) else {
        return Err(config_error(
            "calibrate: day_ahead and month_ahead are required (or pass --synthetic)",
        ));
    };
    let da = require_file(dir, da, "calibrate.day_ahead")?;
    let ma = require_file(dir, ma, "calibrate.month_ahead")?;
    let day =
        load_market_csv(&da).map_err(|e| config_error(format!("calibrate.day_ahead: {e}")))?;
    let month =
        load_market_csv(&ma).map_err(|e| config_error(format!("calibrate.month_ahead: {e}")))?;
    Ok((day, month))
}

pub fn validate_section(cfg: &RunConfig) -> Result<(), CliError> {
    let v = &cfg.validate;
    if v.dts.is_empty() || v.dts.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(config_error("validate.dts: need positive step sizes"));
    }
    if v.paths.is_empty() || v.paths.iter().any(|&n| n < 2) {
        return Err(config_error(
            "validate.paths: need path counts of at least 2",
        ));
    }
    if v.schemes.is_empty() {
        return Err(config_error("validate.schemes: need at least one scheme"));
    }
    if v.times.iter().any(|t| !(*t > 0.0)) || v.u_points < 2 || !(v.u_max > 0.0) {
        return Err(config_error(
            "validate: need positive times, u_max > 0 and u_points >= 2",
        ));
    }
    Ok(())
}
