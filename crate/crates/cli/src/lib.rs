//! Sweep runner: expands a base scenario over one parameter, seeds and
//! schemes, runs every point on a worker pool and writes CSV results.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use star_isac::driver::{self, optimize, RunResult, Scheme};
use star_isac::scenario::{gen_channels, Scenario};

pub mod selftest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid sweep: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] star_isac::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} of the sweep runs failed")]
    RunsFailed(usize),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    PMax,
    Elements,
    RateThreshold,
    Scheme,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::PMax => "p_max",
            SweepParam::Elements => "m",
            SweepParam::RateThreshold => "r_th",
            SweepParam::Scheme => "scheme",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "p_max" | "pmax" | "power" => Ok(SweepParam::PMax),
            "m" | "elements" => Ok(SweepParam::Elements),
            "r_th" | "rth" | "rate" => Ok(SweepParam::RateThreshold),
            "scheme" | "schemes" => Ok(SweepParam::Scheme),
            other => Err(CliError::Validation(format!("unknown sweep parameter '{other}' (p_max, m, r_th, scheme)"))),
        }
    }
}

/// One value of the swept parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepValue {
    Real(f64),
    Count(usize),
    Scheme(Scheme),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Real(v) => write!(f, "{v}"),
            SweepValue::Count(v) => write!(f, "{v}"),
            SweepValue::Scheme(s) => f.write_str(s.name()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: Scenario,
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
    pub seeds: Vec<u64>,
    /// Schemes to run at every value; ignored for scheme sweeps.
    pub schemes: Vec<Scheme>,
    pub out: PathBuf,
}

/// Parses a comma-separated list, ignoring blanks.
pub fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Validation(format!("bad {what} '{s}': {e}"))))
        .collect()
}

pub fn parse_values(param: SweepParam, text: &str) -> Result<Vec<SweepValue>> {
    Ok(match param {
        SweepParam::PMax | SweepParam::RateThreshold => {
            parse_list::<f64>(text, "value")?.into_iter().map(SweepValue::Real).collect()
        }
        SweepParam::Elements => parse_list::<usize>(text, "value")?.into_iter().map(SweepValue::Count).collect(),
        SweepParam::Scheme => parse_list::<Scheme>(text, "scheme")?.into_iter().map(SweepValue::Scheme).collect(),
    })
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(CliError::Validation("the value list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("the seed list is empty".into()));
        }
        if self.param != SweepParam::Scheme && self.schemes.is_empty() {
            return Err(CliError::Validation("the scheme list is empty".into()));
        }
        for v in &self.values {
            let ok = matches!(
                (self.param, v),
                (SweepParam::PMax | SweepParam::RateThreshold, SweepValue::Real(_))
                    | (SweepParam::Elements, SweepValue::Count(_))
                    | (SweepParam::Scheme, SweepValue::Scheme(_))
            );
            if !ok {
                return Err(CliError::Validation(format!("value {v} does not fit a {} sweep", self.param)));
            }
        }
        self.base.validate()?;
        Ok(())
    }

    /// Every run of the sweep, ordered by (scheme, value, seed).
    pub fn points(&self) -> Result<Vec<Point>> {
        self.validate()?;
        let mut pts = Vec::new();
        let schemes: Vec<Scheme> = match self.param {
            SweepParam::Scheme => Vec::new(),
            _ => self.schemes.clone(),
        };
        let mut push = |scheme: Scheme, value: &SweepValue, seed: u64| -> Result<()> {
            let mut sc = Scenario { seed, ..self.base.clone() };
            match value {
                SweepValue::Real(v) if self.param == SweepParam::PMax => sc.p_max_watts = *v,
                SweepValue::Real(v) => sc.set_rate_threshold(*v),
                SweepValue::Count(m) => sc.num_elements = *m,
                SweepValue::Scheme(_) => {}
            }
            sc.validate()?;
            pts.push(Point { scheme, value: value.clone(), scenario: sc });
            Ok(())
        };
        if self.param == SweepParam::Scheme {
            for v in &self.values {
                let SweepValue::Scheme(s) = v else { unreachable!("validated") };
                for &seed in &self.seeds {
                    push(*s, v, seed)?;
                }
            }
        } else {
            for &s in &schemes {
                for v in &self.values {
                    for &seed in &self.seeds {
                        push(s, v, seed)?;
                    }
                }
            }
        }
        Ok(pts)
    }
}

#[derive(Clone, Debug)]
pub struct Point {
    pub scheme: Scheme,
    pub value: SweepValue,
    pub scenario: Scenario,
}

#[derive(Debug)]
pub struct Outcome {
    pub point: Point,
    pub result: std::result::Result<RunResult, String>,
    /// The independent re-audit of the returned design passed.
    pub audited: bool,
}

impl Outcome {
    pub fn feasible(&self) -> bool {
        self.audited && self.result.as_ref().is_ok_and(|r| r.feasible())
    }
}

/// Recomputes the constraint audit from the scenario and the returned design.
pub fn reaudit(sc: &Scenario, r: &RunResult) -> star_isac::Result<bool> {
    let ch = gen_channels(sc)?;
    let cfg = driver::apply_scheme(r.scheme, sc, &ch)?;
    let (a, _) = driver::audit(sc, &ch, &cfg, &r.beamforming, &r.surface)?;
    Ok(a.passed() && a == r.audit)
}

pub fn run_point(p: Point) -> Outcome {
    match optimize(&p.scenario, p.scheme) {
        Ok(r) => {
            let audited = match reaudit(&p.scenario, &r) {
                Ok(ok) => ok,
                Err(e) => {
                    log::warn!("{} seed {}: re-audit failed: {e}", p.scheme, p.scenario.seed);
                    false
                }
            };
            Outcome { point: p, result: Ok(r), audited }
        }
        Err(e) => {
            log::warn!("{} seed {} at {}: {e}", p.scheme, p.scenario.seed, p.value);
            Outcome { point: p, result: Err(e.to_string()), audited: false }
        }
    }
}

/// Runs the points on the current rayon pool; output order matches input.
pub fn run_points(points: Vec<Point>) -> Vec<Outcome> {
    points.into_par_iter().map(run_point).collect()
}

const FIXED_COLUMNS: [&str; 10] =
    ["scheme", "seed", "P_max", "M", "K", "R_th", "outer_iters", "gamma_bs", "gamma_bs_db", "sum_c"];

/// Results table, one row per outcome.
pub fn write_results<W: std::io::Write>(out: W, outcomes: &[Outcome]) -> Result<()> {
    let k_max = outcomes.iter().map(|o| o.point.scenario.num_gts).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k_max).map(|k| format!("rate_{k}")));
    header.extend(["trace_W0", "feasible", "wall_ms"].map(String::from));
    w.write_record(&header)?;
    for o in outcomes {
        let sc = &o.point.scenario;
        let r_th: Vec<String> = sc.rate_thresholds.iter().map(|r| r.to_string()).collect();
        let mut row = vec![
            o.point.scheme.name().to_string(),
            sc.seed.to_string(),
            sc.p_max_watts.to_string(),
            sc.num_elements.to_string(),
            sc.num_gts.to_string(),
            r_th.join(";"),
        ];
        match &o.result {
            Ok(r) => {
                row.push(r.outer_iters.to_string());
                row.push(r.gamma.to_string());
                row.push(r.gamma_db().to_string());
                row.push(r.sum_c().to_string());
                let rates = r.achieved_rates();
                row.extend((0..k_max).map(|k| rates.get(k).map(|v| v.to_string()).unwrap_or_default()));
                row.push(r.trace_w0.to_string());
                row.push(o.feasible().to_string());
                row.push(format!("{:.3}", r.wall_ms));
            }
            Err(_) => {
                row.extend(std::iter::repeat_n(String::new(), 4 + k_max + 1));
                row.push("false".into());
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::Io { path: PathBuf::from("results"), source: e })?;
    Ok(())
}

/// Final surface coefficients of every successful run, one row per element.
pub fn write_surfaces<W: std::io::Write>(out: W, param: SweepParam, outcomes: &[Outcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", param.name(), "seed", "element", "beta_t", "beta_r", "theta_t", "theta_r"])?;
    for o in outcomes {
        let Ok(r) = &o.result else { continue };
        for m in 0..r.beta_t.len() {
            w.write_record([
                o.point.scheme.name().to_string(),
                o.point.value.to_string(),
                o.point.scenario.seed.to_string(),
                m.to_string(),
                r.beta_t[m].to_string(),
                r.beta_r[m].to_string(),
                r.theta_t[m].to_string(),
                r.theta_r[m].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::Io { path: PathBuf::from("surfaces"), source: e })?;
    Ok(())
}

/// `ω` after every outer iteration, preceded by the starting value.
pub fn write_trace<W: std::io::Write>(out: W, r: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outer_iter", "gamma_bs"])?;
    w.write_record(["0".to_string(), r.initial_gamma.to_string()])?;
    for (i, g) in r.omega_trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), g.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Io { path: PathBuf::from("trace"), source: e })?;
    Ok(())
}

pub fn trace_name(param: SweepParam, o: &Outcome) -> String {
    let value = o.point.value.to_string().replace(['/', '\\'], "_");
    format!("{}_{}-{}_seed{}.csv", o.point.scheme.name(), param.name(), value, o.point.scenario.seed)
}

/// Runs the sweep and writes `results.csv`, `surfaces.csv` and one trace
/// per run under `traces/`. Returns the outcomes in row order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<Outcome>> {
    let points = spec.points()?;
    log::info!("running {} points", points.len());
    let outcomes = run_points(points);
    let traces = spec.out.join("traces");
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    let results = spec.out.join("results.csv");
    write_results(fs::File::create(&results).map_err(io_err(&results))?, &outcomes)?;
    let surfaces = spec.out.join("surfaces.csv");
    write_surfaces(fs::File::create(&surfaces).map_err(io_err(&surfaces))?, spec.param, &outcomes)?;
    for o in &outcomes {
        if let Ok(r) = &o.result {
            let path = traces.join(trace_name(spec.param, o));
            write_trace(fs::File::create(&path).map_err(io_err(&path))?, r)?;
        }
    }
    Ok(outcomes)
}

/// Number of runs that ended in an error rather than a result.
pub fn failures(outcomes: &[Outcome]) -> usize {
    outcomes.iter().filter(|o| o.result.is_err()).count()
}
