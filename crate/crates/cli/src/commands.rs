use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ounts::calibration::{
    calibrate, round_trip_report, CalibrationResult, FitOptions, RoundTripItem, SyntheticMarket,
};
use ounts::market::SpotSimulator;
use ounts::pricing::{
    map_paths, price_asian_mc, price_call_strip_fft, price_call_strip_mc, price_swing_lsmc,
    McSettings, PriceEstimate,
};
use ounts::process::{
    estimate_cumulants, ou_cumulant, transition_lch, transition_lch_oracle, OuSimulator, PathGrid,
    Scheme,
};

use crate::config::{self, Contract, Format, ModelSection, RunConfig};
use crate::CliError;

fn writer(cfg: &RunConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &cfg.output.path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(
            |e| CliError::Config(format!("output.path {}: {e}", p.display())),
        )?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(cfg: &RunConfig, value: &T) -> Result<(), CliError> {
    let mut w = writer(cfg)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn write_csv<T: Serialize>(cfg: &RunConfig, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer(cfg)?);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn mc_settings(cfg: &RunConfig) -> McSettings {
    McSettings {
        seed: cfg.run.seed,
        n_paths: cfg.run.n_paths,
        scheme: cfg.run.scheme,
    }
}

#[derive(Serialize)]
struct PathRow {
    path_id: usize,
    t: f64,
    #[serde(rename = "S")]
    value: f64,
}

#[derive(Serialize)]
struct FactorRow {
    path_id: usize,
    t: f64,
    #[serde(rename = "N")]
    value: f64,
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    seed: u64,
    scheme: Scheme,
    variable: &'a str,
    params_digest: &'a str,
    times: &'a [f64],
    paths: &'a [Vec<f64>],
}

pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = config::require_model(cfg, dir)?;
    let (grid, spot) = config::grid(cfg.grid.as_ref())?;
    config::check_paths(cfg.run.n_paths, 1)?;
    let (seed, n, scheme) = (cfg.run.seed, cfg.run.n_paths, cfg.run.scheme);
    let times = grid.times().to_vec();
    let paths = if spot {
        let sim = SpotSimulator::new(model.spot()?, grid, scheme)?;
        map_paths(seed, n, |rng| sim.simulate(rng))?
    } else {
        let sim = OuSimulator::new(grid, model.ou, scheme)?;
        map_paths(seed, n, |rng| sim.simulate(rng))?
    };
    let variable = if spot { "S" } else { "N" };
    eprintln!(
        "seed={seed} scheme={scheme} paths={n} points={} variable={variable}",
        times.len()
    );
    match cfg.format_or(Format::Csv) {
        Format::Json => write_json(
            cfg,
            &SimulationOutput {
                seed,
                scheme,
                variable,
                params_digest: &model.digest,
                times: &times,
                paths: &paths,
            },
        ),
        Format::Csv if spot => {
            let rows: Vec<PathRow> = paths
                .iter()
                .enumerate()
                .flat_map(|(i, p)| {
                    times.iter().zip(p).map(move |(&t, &value)| PathRow {
                        path_id: i,
                        t,
                        value,
                    })
                })
                .collect();
            write_csv(cfg, &rows)
        }
        Format::Csv => {
            let rows: Vec<FactorRow> = paths
                .iter()
                .enumerate()
                .flat_map(|(i, p)| {
                    times.iter().zip(p).map(move |(&t, &value)| FactorRow {
                        path_id: i,
                        t,
                        value,
                    })
                })
                .collect();
            write_csv(cfg, &rows)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Biased,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulantRow {
    pub kind: String,
    pub scheme: String,
    pub dt: f64,
    pub n_paths: usize,
    pub order: u32,
    pub exact: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub err_pct: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub params_digest: String,
    pub cumulants: Vec<CumulantRow>,
    pub chf: CumulantRow,
}

fn default_validation_model() -> ModelSection {
    ModelSection {
        alpha: 0.5,
        sigma: 0.3,
        nu: 2.5,
        b: 5.0,
        n0: 0.0,
        forward: None,
        forward_curve: None,
        rate: 0.0,
        levy: None,
    }
}

pub fn validate(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    config::validate_section(cfg)?;
    let model = match &cfg.model {
        Some(m) => m.resolve(dir)?,
        None => default_validation_model().resolve(dir)?,
    };
    let v = &cfg.validate;
    let ou = model.ou;
    let seed = cfg.run.seed;
    let mut counts = v.paths.clone();
    counts.sort_unstable();
    counts.dedup();
    let n_max = *counts.last().expect("non-empty");

    let mut rows = Vec::new();
    for &dt in &v.dts {
        let exact = [ou_cumulant(2, dt, &ou)?, ou_cumulant(4, dt, &ou)?];
        for &scheme in &v.schemes {
            let sim = OuSimulator::new(PathGrid::new(vec![0.0, dt])?, ou, scheme)?;
            let xs = map_paths(seed, n_max, |rng| Ok(sim.simulate(rng)?[1]))?;
            for &n in &counts {
                let est = estimate_cumulants(&xs[..n])?;
                for (e, &truth) in est.iter().zip(&exact) {
                    let err_pct = 100.0 * (e.value - truth) / truth;
                    let status = if (e.value - truth).abs() <= v.se_multiple * e.stderr {
                        Status::Pass
                    } else if err_pct.abs() > v.biased_threshold {
                        Status::Biased
                    } else {
                        Status::Fail
                    };
                    rows.push(CumulantRow {
                        kind: "cumulant".into(),
                        scheme: scheme.to_string(),
                        dt,
                        n_paths: n,
                        order: e.order,
                        exact: truth,
                        estimate: e.value,
                        stderr: e.stderr,
                        err_pct,
                        status,
                    });
                }
            }
        }
    }

    let mut max_dev: f64 = 0.0;
    let mut points = 0;
    for &t in &v.times {
        for k in 0..v.u_points {
            let u = -v.u_max + 2.0 * v.u_max * k as f64 / (v.u_points - 1) as f64;
            let a = transition_lch(u, t, &ou)?;
            let b = transition_lch_oracle(u, t, &ou)?;
            let dev = if b == 0.0 {
                a.abs()
            } else {
                ((a - b) / b).abs()
            };
            max_dev = max_dev.max(dev);
            points += 1;
        }
    }
    let chf = CumulantRow {
        kind: "chf".into(),
        scheme: "closed-form".into(),
        dt: 0.0,
        n_paths: points,
        order: 0,
        exact: v.chf_tolerance,
        estimate: max_dev,
        stderr: 0.0,
        err_pct: 0.0,
        status: if max_dev <= v.chf_tolerance {
            Status::Pass
        } else {
            Status::Fail
        },
    };

    for r in &rows {
        eprintln!(
            "{:<8} dt={:<10.6} n={:<8} c{} exact={:<12.6e} est={:<12.6e} se={:<10.3e} err%={:>8.3} {:?}",
            r.scheme, r.dt, r.n_paths, r.order, r.exact, r.estimate, r.stderr, r.err_pct, r.status
        );
    }
    eprintln!(
        "chf grid: {points} points, max rel deviation {max_dev:.3e} {:?}",
        chf.status
    );

    match cfg.format_or(Format::Json) {
        Format::Json => write_json(
            cfg,
            &ValidationReport {
                seed,
                params_digest: model.digest.clone(),
                cumulants: rows,
                chf,
            },
        ),
        Format::Csv => {
            rows.push(chf);
            write_csv(cfg, &rows)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub contract: String,
    pub method: String,
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub params_digest: String,
}

impl PriceRecord {
    fn new(contract: &str, e: &PriceEstimate, digest: &str) -> Self {
        PriceRecord {
            contract: contract.into(),
            method: e.method.clone(),
            value: e.value,
            stderr: e.stderr,
            n_paths: e.n_paths,
            seed: e.seed,
            params_digest: digest.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixingRow {
    pub t: f64,
    pub fft: f64,
    pub mc: Option<f64>,
    pub mc_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub difference: f64,
    pub stderr: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub results: Vec<PriceRecord>,
    pub fixings: Option<Vec<FixingRow>>,
    pub cross_check: Option<CrossCheck>,
}

pub fn price(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = config::require_model(cfg, dir)?;
    let spot = model.spot()?;
    let contract = config::contract(cfg)?;
    let fft = config::fft(cfg)?;
    match &contract {
        Contract::CallStrip { mc_check: true, .. } | Contract::Asian(_) => {
            config::check_paths(cfg.run.n_paths, 2)?
        }
        Contract::Swing(s) => config::check_paths(cfg.run.n_paths, 10 * (s.degree + 1))?,
        Contract::CallStrip { .. } => {}
    }
    let mc = mc_settings(cfg);
    let digest = model.digest.as_str();
    let report = match &contract {
        Contract::CallStrip { spec, mc_check } => {
            let f = price_call_strip_fft(&spot, spec, model.rate, &fft)?;
            let mut results = vec![PriceRecord::new("call_strip", &f.estimate, digest)];
            let mut fixings: Vec<FixingRow> = spec
                .fixing_times
                .iter()
                .zip(&f.per_fixing)
                .map(|(&t, &fft)| FixingRow {
                    t,
                    fft,
                    mc: None,
                    mc_stderr: None,
                })
                .collect();
            let mut cross_check = None;
            if *mc_check {
                let m = price_call_strip_mc(&spot, spec, model.rate, &mc)?;
                for (row, e) in fixings.iter_mut().zip(&m.per_fixing) {
                    row.mc = Some(e.value);
                    row.mc_stderr = Some(e.stderr);
                }
                let difference = f.estimate.value - m.estimate.value;
                cross_check = Some(CrossCheck {
                    difference,
                    stderr: m.estimate.stderr,
                    within_3se: difference.abs() <= 3.0 * m.estimate.stderr,
                });
                results.push(PriceRecord::new("call_strip", &m.estimate, digest));
            }
            PriceReport {
                results,
                fixings: Some(fixings),
                cross_check,
            }
        }
        Contract::Asian(spec) => {
            let v = price_asian_mc(&spot, spec, model.rate, &mc)?;
            PriceReport {
                results: vec![
                    PriceRecord::new("asian_call", &v.call, digest),
                    PriceRecord::new("asian_put", &v.put, digest),
                ],
                fixings: None,
                cross_check: None,
            }
        }
        Contract::Swing(spec) => {
            let v = price_swing_lsmc(&spot, spec, model.rate, &mc)?;
            PriceReport {
                results: vec![PriceRecord::new("swing", &v, digest)],
                fixings: None,
                cross_check: None,
            }
        }
    };
    for r in &report.results {
        eprintln!(
            "{} {}: {:.6} (se {:.6}, {} paths, seed {})",
            r.contract, r.method, r.value, r.stderr, r.n_paths, r.seed
        );
    }
    match cfg.format_or(Format::Json) {
        Format::Json => write_json(cfg, &report),
        Format::Csv => write_csv(cfg, &report.results),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub model: ModelSection,
    pub seed: u64,
    pub params_digest: String,
    pub calibration: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    pub seed: u64,
    pub passed: bool,
    pub items: Vec<RoundTripItem>,
    pub model: ModelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub passed: bool,
    pub runs: Vec<SyntheticRun>,
}

#[derive(Serialize)]
struct ParamRow<'a> {
    factor: &'a str,
    name: &'a str,
    value: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct RoundTripRow<'a> {
    seed: u64,
    name: &'a str,
    truth: f64,
    estimate: f64,
    stderr: f64,
    tolerance: f64,
    absolute: bool,
    pass: bool,
}

fn digest_of(m: &ModelSection) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(
        serde_json::to_vec(m).expect("model section serializes"),
    ))
}

pub fn calibrate_cmd(cfg: &RunConfig, dir: &Path, synthetic: bool) -> Result<(), CliError> {
    let opts = FitOptions {
        max_iters: cfg.calibrate.max_iters,
        ..FitOptions::default()
    };
    if synthetic {
        return synthetic_round_trip(cfg, dir, &opts);
    }
    let (day, month) = config::market_files(cfg, dir)?;
    let seed = cfg.run.seed;
    let fit = calibrate(&day, &month, seed, &opts)?;
    let forward = *month.prices.last().expect("validated series is non-empty");
    let model = ModelSection::from_fit(&fit.ou, &fit.levy, forward);
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let out = CalibrationOutput {
        params_digest: digest_of(&model),
        model,
        seed,
        calibration: fit,
    };
    match cfg.format_or(Format::Json) {
        Format::Json => write_json(cfg, &out),
        Format::Csv => {
            let c = &out.calibration.diagnostics;
            let rows = [
                ParamRow {
                    factor: "ou",
                    name: "b",
                    value: c.ou.params.b,
                    stderr: c.ou.stderr[0],
                },
                ParamRow {
                    factor: "ou",
                    name: "sigma",
                    value: c.ou.params.nts.sigma,
                    stderr: c.ou.stderr[1],
                },
                ParamRow {
                    factor: "ou",
                    name: "nu",
                    value: c.ou.params.nts.nu,
                    stderr: c.ou.stderr[2],
                },
                ParamRow {
                    factor: "levy",
                    name: "sigma",
                    value: c.levy.params.sigma,
                    stderr: c.levy.stderr[0],
                },
                ParamRow {
                    factor: "levy",
                    name: "nu",
                    value: c.levy.params.nu,
                    stderr: c.levy.stderr[1],
                },
                ParamRow {
                    factor: "levy",
                    name: "theta",
                    value: c.levy.params.theta,
                    stderr: c.levy.stderr[2],
                },
            ];
            write_csv(cfg, &rows)
        }
    }
}

fn synthetic_round_trip(cfg: &RunConfig, dir: &Path, opts: &FitOptions) -> Result<(), CliError> {
    let mut market = SyntheticMarket::reference();
    if let Some(m) = &cfg.model {
        let resolved = m.resolve(dir)?;
        let Some(levy) = resolved.levy else {
            return Err(CliError::Config(
                "model.levy: the synthetic market needs both factors".into(),
            ));
        };
        market.ou = resolved.ou;
        market.levy = levy;
        if let Some(f) = m.forward {
            market.forward_level = f;
        }
    }
    if cfg.calibrate.synthetic_runs == 0 {
        return Err(CliError::Config(
            "calibrate.synthetic_runs: must be at least 1".into(),
        ));
    }
    let mut runs = Vec::new();
    for k in 0..cfg.calibrate.synthetic_runs as u64 {
        let seed = cfg.run.seed.wrapping_add(k);
        let (day, month) = market
            .generate(seed)
            .map_err(|e| CliError::from(e.in_stage("synthetic data")))?;
        let fit = calibrate(&day, &month, seed, opts)?;
        let items = round_trip_report(&market.ou, &market.levy, &fit);
        for it in &items {
            eprintln!(
                "seed {seed} {:<7} truth {:>9.4} estimate {:>9.4} (se {:.4}) {}",
                it.name,
                it.truth,
                it.estimate,
                it.stderr,
                if it.pass { "PASS" } else { "FAIL" }
            );
        }
        let passed = items.iter().all(|i| i.pass);
        let model = ModelSection::from_fit(&fit.ou, &fit.levy, market.forward_level);
        runs.push(SyntheticRun {
            seed,
            passed,
            items,
            model,
        });
    }
    let report = SyntheticReport {
        passed: runs.iter().all(|r| r.passed),
        runs,
    };
    eprintln!("round trip {}", if report.passed { "PASS" } else { "FAIL" });
    match cfg.format_or(Format::Json) {
        Format::Json => write_json(cfg, &report),
        Format::Csv => {
            let rows: Vec<RoundTripRow> = report
                .runs
                .iter()
                .flat_map(|r| {
                    r.items.iter().map(move |i| RoundTripRow {
                        seed: r.seed,
                        name: &i.name,
                        truth: i.truth,
                        estimate: i.estimate,
                        stderr: i.stderr,
                        tolerance: i.tolerance,
                        absolute: i.absolute,
                        pass: i.pass,
                    })
                })
                .collect();
            write_csv(cfg, &rows)
        }
    }
}
