//! Front end for `powersum`: parameter resolution, dispatch and report output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use powersum_ldp::experiments::{
    concentration_check, moment_check, monte_carlo_risk, negative_association_check, perturbation_family,
    predicted_slope, rate_scan, separation_check, two_point_instance, Axis, CheckReport, Distribution,
    ExperimentConfig, RiskReport, SimulationMode, MAX_C_TILDE,
};
use powersum_ldp::rng::{derive_seed, tag};
use powersum_ldp::{
    estimate_from_sample, power_sum, sample_categorical, verify_ldp_interactive, verify_ldp_ni, Error, EstimateResult,
    EstimatorKind, LdpReport, Power, PrivacyBudget, ProbabilityVector,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "POWERSUM_THREADS";
pub const CSV_HEADER: &str = "gamma,K,n,alpha,estimator,trials,seed,true_value,bias,variance,mse,mse_stderr";
pub const SCAN_COLUMNS: &str = "fitted_slope,predicted_slope,r_squared";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "powersum", version, about = "Locally private estimation of power sums")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Privatize one sample and print the estimate as JSON.
    Estimate(Params),
    /// Monte Carlo risk of one configuration, as CSV.
    Risk(Params),
    /// Risk over a grid of n, K or alpha with a log-log slope fit, as CSV.
    RateScan(Params),
    /// Run a named suite of privacy and property checks.
    Verify(Params),
    /// Print a lower-bound hard instance as JSON.
    HardInstance(Params),
}

impl Command {
    fn params(&self) -> &Params {
        match self {
            Command::Estimate(p)
            | Command::Risk(p)
            | Command::RateScan(p)
            | Command::Verify(p)
            | Command::HardInstance(p) => p,
        }
    }
}

/// Every setting a subcommand may read. Flags override `--config`.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Params {
    /// Config file: `key = value` lines, or a run manifest (JSON).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long = "k", short = 'k')]
    #[serde(skip_serializing_if = "Option::is_none", alias = "K")]
    pub k: Option<usize>,
    #[arg(long, short = 'n')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Laplace scale multiplier (noise scale sigma/alpha), default 2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// uniform, point-mass, two-point, perturbation-family or custom.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<String>,
    /// Comma-separated probabilities for `--dist custom`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<String>,
    /// File of categories 1..K separated by whitespace or commas.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// plug-in, thresholded, interactive or combined.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Constant of the gamma < 1 threshold c / sqrt(alpha^2 n), default 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_tilde: Option<f64>,
    /// Use the second vector q of the two-point instance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// aggregated (default) or individual.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// n, K or alpha.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_slope: Option<f64>,
    /// ldp, concentration, negative-association, separation, moment or all.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    /// Samples of nu for the separation suite.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// two-point or perturbation-family.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Params {
    /// `self` on top of `base`.
    fn over(&self, mut base: Params) -> Params {
        let s = self;
        overlay!(base, s; gamma, k, n, alpha, sigma, dist, probs, data, estimator, seed, c, c_tilde, second,
            nu_seed, trials, mode, axis, values, predicted_slope, suite, samples, kind, output);
        base.config = None;
        base
    }

    /// Applies the config file, if any, underneath the flags.
    pub fn resolve(&self) -> CliResult<Params> {
        match &self.config {
            None => Ok(self.clone()),
            Some(path) => Ok(self.over(load_config(path)?)),
        }
    }

    fn need<T: Copy>(v: Option<T>, name: &str) -> CliResult<T> {
        v.ok_or_else(|| CliError::Usage(format!("missing required field '{name}'")))
    }

    fn gamma(&self) -> CliResult<Power> {
        Power::new(Self::need(self.gamma, "gamma")?).map_err(usage)
    }

    fn budget(&self) -> CliResult<PrivacyBudget> {
        let alpha = Self::need(self.alpha, "alpha")?;
        PrivacyBudget::with_sigma(alpha, self.sigma.unwrap_or(powersum_ldp::model::DEFAULT_SIGMA)).map_err(usage)
    }

    fn estimator(&self) -> CliResult<EstimatorKind> {
        let s = self
            .estimator
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing required field 'estimator'".into()))?;
        s.parse().map_err(usage)
    }

    fn mode(&self) -> CliResult<SimulationMode> {
        self.mode.as_deref().map_or(Ok(SimulationMode::default()), |m| m.parse().map_err(usage))
    }

    fn distribution(&self) -> CliResult<Distribution> {
        match self.dist.as_deref().unwrap_or("uniform") {
            "uniform" => Ok(Distribution::Uniform),
            "point-mass" => Ok(Distribution::PointMass),
            "two-point" => Ok(Distribution::TwoPoint {
                c_tilde: self.c_tilde.unwrap_or(MAX_C_TILDE),
                second: self.second.unwrap_or(false),
            }),
            "perturbation-family" => Ok(Distribution::PerturbationFamily {
                nu_seed: self.nu_seed.unwrap_or(0),
            }),
            "custom" => {
                let s = self
                    .probs
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("missing required field 'probs' for --dist custom".into()))?;
                Ok(Distribution::Custom(parse_list(s, "probs")?))
            }
            other => Err(CliError::Usage(format!("invalid dist: unknown distribution '{other}'"))),
        }
    }

    fn experiment(&self) -> CliResult<ExperimentConfig> {
        let seed = Self::need(self.seed, "seed")?;
        let mut cfg = ExperimentConfig::new(
            self.gamma()?,
            Self::need(self.k, "k")?,
            Self::need(self.n, "n")?,
            self.budget()?,
            self.estimator()?,
            Self::need(self.trials, "trials")?,
            seed,
        )
        .with_distribution(self.distribution()?)
        .with_mode(self.mode()?);
        if let Some(c) = self.c {
            cfg.threshold_c = c;
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn parse_list(s: &str, name: &str) -> CliResult<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid {name}: '{t}' is not a number")))
        })
        .collect()
}

/// Reads `key = value` lines (`#` comments) or a JSON manifest whose
/// `config` object holds the same keys.
pub fn load_config(path: &Path) -> CliResult<Params> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value = if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        match v {
            Value::Object(mut m) if m.contains_key("config") => m.remove("config").unwrap_or(Value::Null),
            other => other,
        }
    } else {
        let mut map = serde_json::Map::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected 'key = value'", path.display(), lineno + 1)))?;
            let key = key.trim().replace('_', "-");
            let val = val.trim().trim_matches('"');
            let parsed = match serde_json::from_str::<Value>(val) {
                Ok(v @ (Value::Number(_) | Value::Bool(_))) => v,
                _ => Value::String(val.to_string()),
            };
            map.insert(key, parsed);
        }
        Value::Object(map)
    };
    serde_json::from_value(value).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

/// Reproducibility record written next to each output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Params,
    pub outputs: Vec<PathBuf>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the same directory and renames, so a
/// failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| usage(format!("invalid output path {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(runtime(format!("cannot write {}: {e}", path.display())));
    }
    Ok(())
}

fn emit(subcommand: &str, params: &Params, body: &str) -> CliResult<()> {
    match &params.output {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(path) => {
            let manifest = RunManifest {
                schema_version: SCHEMA_VERSION,
                subcommand: subcommand.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: params.seed,
                config: params.clone(),
                outputs: vec![path.clone()],
            };
            let mut json = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
            json.push('\n');
            write_atomic(path, body.as_bytes())?;
            write_atomic(&manifest_path(path), json.as_bytes())
        }
    }
}

/// Measured quantities use 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(r: &RiskReport) -> String {
    let c = &r.config;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        c.gamma.value(),
        c.k,
        c.n,
        c.budget.alpha(),
        c.estimator,
        c.trials,
        c.seed,
        num(r.true_value),
        num(r.bias),
        num(r.variance),
        num(r.mse),
        num(r.mse_stderr)
    )
}

fn load_data(path: &Path, k: Option<usize>) -> CliResult<(Vec<usize>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read data {}: {e}", path.display())))?;
    let mut x = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let v: usize = tok
            .parse()
            .map_err(|_| usage(format!("invalid data: '{tok}' is not a category")))?;
        if v == 0 {
            return Err(usage("invalid data: categories are numbered from 1"));
        }
        x.push(v - 1);
    }
    if x.is_empty() {
        return Err(usage("invalid data: file holds no categories"));
    }
    let max = x.iter().max().copied().unwrap_or(0) + 1;
    let k = k.unwrap_or(max);
    if max > k {
        return Err(usage(format!("invalid data: category {max} exceeds K = {k}")));
    }
    Ok((x, k))
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    #[serde(flatten)]
    result: &'a EstimateResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_value: Option<f64>,
    warnings: Vec<String>,
}

fn cmd_estimate(p: &Params) -> CliResult<()> {
    let gamma = p.gamma()?;
    let budget = p.budget()?;
    let kind = p.estimator()?;
    let seed = Params::need(p.seed, "seed")?;
    let c = p.c.unwrap_or(1.0);
    let (x, k, truth) = match &p.data {
        Some(path) => {
            let (x, k) = load_data(path, p.k)?;
            (x, k, None)
        }
        None => {
            let k = Params::need(p.k, "k")?;
            let n = Params::need(p.n, "n")?;
            let law = p.distribution()?.resolve(k, n, &budget, gamma).map_err(usage)?;
            let x = sample_categorical(&law, n, derive_seed(seed, tag::SAMPLE)).map_err(usage)?;
            (x, k, Some(power_sum(&law, gamma)))
        }
    };
    let result = estimate_from_sample(kind, &x, k, gamma, &budget, c, seed).map_err(|e| match e {
        Error::InvalidParameter { .. } | Error::GammaOneUnsupported | Error::ZeroSampleSize => usage(e),
        other => runtime(other),
    })?;
    let out = EstimateOutput {
        result: &result,
        true_value: truth,
        warnings: budget.regime_warnings(x.len()),
    };
    let mut body = serde_json::to_string(&out).map_err(runtime)?;
    body.push('\n');
    emit("estimate", p, &body)
}

fn cmd_risk(p: &Params) -> CliResult<()> {
    let cfg = p.experiment()?;
    let report = monte_carlo_risk(&cfg).map_err(runtime)?;
    let body = format!("{CSV_HEADER}\n{}\n", csv_row(&report));
    emit("risk", p, &body)
}

fn cmd_rate_scan(p: &Params) -> CliResult<()> {
    let axis: Axis = p
        .axis
        .as_deref()
        .ok_or_else(|| usage("missing required field 'axis'"))?
        .parse()
        .map_err(usage)?;
    let values = parse_list(p.values.as_deref().unwrap_or(""), "values")?;
    if values.is_empty() {
        return Err(usage("invalid values: axis list is empty"));
    }
    // the scanned field may be absent from the base config
    let mut base_params = p.clone();
    match axis {
        Axis::N => base_params.n = base_params.n.or(Some(values[0] as usize)),
        Axis::K => base_params.k = base_params.k.or(Some(values[0] as usize)),
        Axis::Alpha => base_params.alpha = base_params.alpha.or(Some(values[0])),
    }
    let base = base_params.experiment()?;
    for &v in &values {
        axis.apply(&base, v).and_then(|c| c.validate()).map_err(usage)?;
    }
    let predicted = match p.predicted_slope {
        Some(s) => s,
        None => predicted_slope(&base, axis, &values).unwrap_or(f64::NAN),
    };
    let scan = rate_scan(&base, axis, &values, predicted).map_err(|e| match e {
        Error::InsufficientPoints(_) => usage(e),
        other => runtime(other),
    })?;
    let mut body = format!("{CSV_HEADER},{SCAN_COLUMNS}\n");
    for r in &scan.reports {
        let _ = writeln!(body, "{},,,", csv_row(r));
    }
    let c = &base;
    let cell = |a: Axis, v: String| if a == axis { "*".to_string() } else { v };
    let _ = writeln!(
        body,
        "{},{},{},{},{},{},{},,,,,,{},{},{}",
        c.gamma.value(),
        cell(Axis::K, c.k.to_string()),
        cell(Axis::N, c.n.to_string()),
        cell(Axis::Alpha, c.budget.alpha().to_string()),
        c.estimator,
        c.trials,
        c.seed,
        num(scan.fitted_slope),
        num(scan.predicted_slope),
        num(scan.r_squared)
    );
    emit("rate-scan", p, &body)
}

fn ldp_line(r: &LdpReport) -> String {
    format!(
        "{} {} alpha={} worst_log_ratio={} worst_ratio={} grid_max_log_ratio={} grid_points={}",
        if r.satisfied { "PASS" } else { "FAIL" },
        r.mechanism,
        r.alpha,
        num(r.worst_case_log_ratio),
        num(r.worst_case_ratio),
        num(r.grid_max_log_ratio),
        r.grid_points
    )
}

fn check_line(r: &CheckReport) -> String {
    let mut s = format!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
    for (k, v) in &r.metrics {
        let _ = write!(s, " {k}={v}");
    }
    for f in &r.failures {
        let _ = write!(s, "\n  violated: {f}");
    }
    for w in &r.warnings {
        let _ = write!(s, "\n  warning: {w}");
    }
    s
}

fn cmd_verify(p: &Params) -> CliResult<()> {
    let suite = p.suite.as_deref().unwrap_or("all");
    let suites: &[&str] = match suite {
        "all" => &["ldp", "concentration", "negative-association", "separation", "moment"],
        "ldp" => &["ldp"],
        "concentration" => &["concentration"],
        "negative-association" => &["negative-association"],
        "separation" => &["separation"],
        "moment" => &["moment"],
        other => return Err(usage(format!("invalid suite: unknown suite '{other}'"))),
    };
    let alpha = p.alpha.unwrap_or(1.0);
    let budget =
        PrivacyBudget::with_sigma(alpha, p.sigma.unwrap_or(powersum_ldp::model::DEFAULT_SIGMA)).map_err(usage)?;
    let seed = p.seed.unwrap_or(0);
    let mode = p.mode()?;
    let mut lines = Vec::new();
    let mut failed = 0;
    let mut record = |ok: bool, line: String| {
        if !ok {
            failed += 1;
        }
        lines.push(line);
    };
    for &s in suites {
        match s {
            "ldp" => {
                let gamma = Power::new(p.gamma.unwrap_or(2.0)).map_err(usage)?;
                let ni = verify_ldp_ni(&budget);
                record(ni.satisfied, ldp_line(&ni));
                if gamma.value() > 1.0 {
                    let it = verify_ldp_interactive(&budget, gamma).map_err(runtime)?;
                    record(it.satisfied, ldp_line(&it));
                }
            }
            "concentration" => {
                let law = verification_law(p, 4, 10_000, &budget)?;
                let n = p.n.unwrap_or(10_000);
                let r = concentration_check(&law, n, &budget, p.trials.unwrap_or(2000), seed, mode).map_err(runtime)?;
                record(r.passed, check_line(&r));
            }
            "negative-association" => {
                let law = verification_law(p, 4, 256, &budget)?;
                let gamma = Power::new(p.gamma.unwrap_or(2.0)).map_err(usage)?;
                let r = negative_association_check(
                    &law,
                    p.n.unwrap_or(256),
                    &budget,
                    gamma,
                    p.trials.unwrap_or(2000),
                    seed,
                    mode,
                )
                .map_err(runtime)?;
                record(r.passed, check_line(&r));
            }
            "separation" => {
                let g = p.gamma.unwrap_or(1.5);
                let gamma = Power::new(g).map_err(usage)?;
                let inst = perturbation_family(p.k.unwrap_or(8), p.n.unwrap_or(100), &budget, gamma).map_err(usage)?;
                let r = separation_check(&inst, gamma, p.samples.unwrap_or(1000), seed).map_err(runtime)?;
                record(r.passed, check_line(&r));
            }
            "moment" => {
                let law = verification_law(p, 4, 1 << 10, &budget)?;
                let r = moment_check(&law, &budget, 1 << 10, 1 << 14, p.trials.unwrap_or(2000), seed, mode)
                    .map_err(runtime)?;
                record(r.passed, check_line(&r));
            }
            _ => unreachable!(),
        }
    }
    let mut body = lines.join("\n");
    body.push('\n');
    emit("verify", p, &body)?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn verification_law(p: &Params, k: usize, n: usize, budget: &PrivacyBudget) -> CliResult<ProbabilityVector> {
    let gamma = Power::new(p.gamma.unwrap_or(2.0)).map_err(usage)?;
    p.distribution()?
        .resolve(p.k.unwrap_or(k), p.n.unwrap_or(n), budget, gamma)
        .map_err(usage)
}

fn cmd_hard_instance(p: &Params) -> CliResult<()> {
    let gamma = p.gamma()?;
    let budget = p.budget()?;
    let k = Params::need(p.k, "k")?;
    let n = Params::need(p.n, "n")?;
    let inst = match p.kind.as_deref().unwrap_or("perturbation-family") {
        "two-point" => two_point_instance(k, n, &budget, gamma, p.c_tilde.unwrap_or(MAX_C_TILDE)),
        "perturbation-family" => perturbation_family(k, n, &budget, gamma),
        other => return Err(usage(format!("invalid kind: unknown instance '{other}'"))),
    }
    .map_err(usage)?;
    let mut body = serde_json::to_string(&inst).map_err(runtime)?;
    body.push('\n');
    emit("hard-instance", p, &body)
}

/// Sizes the global thread pool from the environment. The seed is never
/// read from the environment.
fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("invalid {THREADS_ENV}: '{v}' is not a thread count")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Argument
/// errors come back as [`CliError::Usage`].
pub fn run_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(usage)?;
    run(&cli)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    let params = cli.command.params().resolve()?;
    match &cli.command {
        Command::Estimate(_) => cmd_estimate(&params),
        Command::Risk(_) => {
            Params::need(params.seed, "seed")?;
            cmd_risk(&params)
        }
        Command::RateScan(_) => {
            Params::need(params.seed, "seed")?;
            cmd_rate_scan(&params)
        }
        Command::Verify(_) => cmd_verify(&params),
        Command::HardInstance(_) => cmd_hard_instance(&params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = Params {
            gamma: Some(2.0),
            k: Some(8),
            seed: Some(1),
            ..Default::default()
        };
        let flags = Params {
            k: Some(16),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.k, Some(16));
        assert_eq!(merged.gamma, Some(2.0));
        assert_eq!(merged.seed, Some(1));
    }

    #[test]
    fn key_value_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# scan\ngamma = 0.5\nk = 8\nestimator = plug-in\nvalues = 1024, 2048\nc_tilde = 0.1\n").unwrap();
        let p = load_config(&path).unwrap();
        assert_eq!(p.gamma, Some(0.5));
        assert_eq!(p.k, Some(8));
        assert_eq!(p.estimator.as_deref(), Some("plug-in"));
        assert_eq!(p.values.as_deref(), Some("1024, 2048"));
        assert_eq!(p.c_tilde, Some(0.1));
        fs::write(&path, "gama = 2\n").unwrap();
        assert!(matches!(load_config(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn csv_number_format() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn manifest_path_suffix() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
