//! Command-line front end.
//!
//! Every subcommand produces one artifact (JSON or CSV) and one summary line
//! of `key=value` pairs. With `--output PATH` the artifact is written
//! atomically and the summary goes to stdout; otherwise the artifact goes to
//! stdout and the summary to stderr. Exit status is 0 on success, 2 when the
//! run completed with a negative verdict and 1 on error.

use crate::bci::{self, ChainedSetting, ProtocolConfig, SearchStatus};
use crate::corrfn::{self, Correlator, Spin, TrigSeries};
use crate::error::{Error, Result};
use crate::format::{json12, sig12};
use crate::jointbox::JointBox;
use crate::lhv::{self, LocalMixture};
use crate::quantum::{self, OscillatorSpec, PolarizerBox, QubitSodBox, TwoQubitState};
use crate::rng;
use crate::sodbox::{self, SampleRow, SoDBox};
use crate::tol;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;

/// Names accepted in `tolerances` / `--tol`.
pub const TOLERANCE_NAMES: [&str; 4] = ["affine_residual", "positivity", "sigma_margin", "unbiased"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Reproducibility settings, loadable from `--config FILE`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    fn validate(&self) -> Result<()> {
        for (k, v) in &self.tolerances {
            if !TOLERANCE_NAMES.contains(&k.as_str()) {
                return Err(Error::format(format!("tolerances.{k}"), format!("unknown tolerance; expected one of {TOLERANCE_NAMES:?}")));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::format(format!("tolerances.{k}"), "must be a nonnegative number"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "so2bell",
    version,
    about = "Correlation series, local models and Bell witnesses for boxes with rotational inputs"
)]
pub struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// Seed for every stochastic step (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the artifact here (atomically) instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Artifact format
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// RunConfig JSON; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Tolerance override NAME=VALUE (repeatable)
    #[arg(long = "tol", global = true, value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.to_string(), v))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a correlation series C(α,β) at a point, or tabulate it (or a
    /// joint probability box) on an angle grid
    Eval(EvalArgs),
    /// CHSH combination C(a₁,b₂) + C(a₃,b₂) + C(a₃,b₄) − C(a₁,b₄) at given
    /// angles or optimized over all angles
    Chsh(ChshArgs),
    /// Chained Braunstein–Caves inequality with N settings built from two
    /// relational angles Θ₊, Θ₋
    Bci(BciArgs),
    /// Bell witness: search for a violated chained inequality from the
    /// purity of C at Θ₊ and Θ₋ under the spin bound J
    Witness(WitnessArgs),
    /// Simulate the two-angle witness protocol on a box and decide
    /// nonlocality from shot statistics
    Protocol(ProtocolArgs),
    /// Local hidden variable constructions: γ noise thresholds, locality
    /// certificates, explicit window models and square-wave models
    Lhv(LhvArgs),
    /// Two-qubit polarizer correlations (Werner or arbitrary states) and the
    /// finite-level oscillator time series
    Quantum(QuantumArgs),
    /// SO(d) boxes with unit-vector inputs: affine form, local unbiasedness
    /// and the unital positive bilinear form Ω
    Sodbox(SodboxArgs),
    /// Least-squares fit of a spin-J correlation series to sampled values
    Fit(FitArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Correlation series JSON
    #[arg(long)]
    corr: Option<PathBuf>,
    /// The (2/7)cos 3θ − cos θ example series
    #[arg(long)]
    scifi: bool,
    /// Werner state with singlet weight P, measured with polarizers
    #[arg(long, value_name = "P")]
    werner: Option<f64>,
    /// Two-qubit state JSON, measured with polarizers
    #[arg(long)]
    state: Option<PathBuf>,
    /// Joint probability box JSON
    #[arg(long = "box")]
    box_file: Option<PathBuf>,
}

enum Loaded {
    Series(TrigSeries),
    Quantum(PolarizerBox),
    Box(JointBox),
}

impl Source {
    fn load(&self) -> Result<Loaded> {
        if let Some(p) = &self.corr {
            return Ok(Loaded::Series(read_json(p)?));
        }
        if self.scifi {
            return Ok(Loaded::Series(corrfn::scifi()));
        }
        if let Some(p) = self.werner {
            return Ok(Loaded::Quantum(quantum::quantum_box(&quantum::werner_state(p)?)));
        }
        if let Some(p) = &self.state {
            let s: TwoQubitState = read_json(p)?;
            return Ok(Loaded::Quantum(quantum::quantum_box(&s)));
        }
        if let Some(p) = &self.box_file {
            return Ok(Loaded::Box(read_json(p)?));
        }
        Err(Error::arg("source", "no input selected"))
    }
}

impl Loaded {
    fn series(&self) -> TrigSeries {
        match self {
            Loaded::Series(f) => f.clone(),
            Loaded::Quantum(q) => q.joint_box().correlation_of(),
            Loaded::Box(b) => b.correlation_of(),
        }
    }

    fn spin(&self) -> Spin {
        match self {
            Loaded::Series(f) => f.spin(),
            Loaded::Quantum(_) => Spin::ONE,
            Loaded::Box(b) => b.spin(),
        }
    }

    fn correlation(&self, a: f64, b: f64) -> f64 {
        match self {
            Loaded::Series(f) => f.evaluate(a, b),
            Loaded::Quantum(q) => q.correlation(a, b),
            Loaded::Box(bx) => bx.correlation(a, b),
        }
    }

    fn joint_box(&self) -> Result<JointBox> {
        match self {
            Loaded::Series(f) => JointBox::from_correlation(f),
            Loaded::Quantum(q) => Ok(q.joint_box()),
            Loaded::Box(b) => Ok(b.clone()),
        }
    }
}

struct Corr<'a>(&'a Loaded);

impl Correlator for Corr<'_> {
    fn correlation(&self, a: f64, b: f64) -> f64 {
        self.0.correlation(a, b)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, allow_hyphen_values = true, requires = "beta")]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "alpha")]
    beta: Option<f64>,
    /// Tabulate on an N × N grid over [0, 2π)² (CSV)
    #[arg(long, value_name = "N", conflicts_with = "alpha")]
    grid: Option<usize>,
}

#[derive(Debug, Args)]
struct ChshArgs {
    #[command(flatten)]
    source: Source,
    /// a₁ b₂ a₃ b₄
    #[arg(long, num_args = 4, allow_hyphen_values = true, value_names = ["A1", "B2", "A3", "B4"])]
    angles: Option<Vec<f64>>,
    /// Maximize |CHSH| over all four angles
    #[arg(long, conflicts_with = "angles")]
    optimize: bool,
}

#[derive(Debug, Args)]
struct BciArgs {
    #[command(flatten)]
    source: Source,
    /// Number of settings N (even, ≥ 4)
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    theta_plus: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta_minus: f64,
    /// Shared offset added to every input
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
}

#[derive(Debug, Args)]
struct WitnessArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, allow_hyphen_values = true)]
    theta_plus: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta_minus: f64,
    /// Largest N tried
    #[arg(long, default_value_t = bci::DEFAULT_CAP)]
    cap: usize,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, allow_hyphen_values = true)]
    theta_plus: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta_minus: f64,
    /// Assumed spin bound 2J (default: the source's own)
    #[arg(long)]
    two_j: Option<u32>,
    #[arg(long, default_value_t = 100_000)]
    shots: usize,
    /// Relabel Bob's outcome b → −b
    #[arg(long)]
    flip_bob: bool,
    #[arg(long, default_value_t = bci::DEFAULT_CAP)]
    cap: usize,
}

#[derive(Debug, Args)]
struct LhvArgs {
    #[command(subcommand)]
    command: LhvCommand,
}

#[derive(Debug, Subcommand)]
enum LhvCommand {
    /// Noise threshold γ_N of the window model with N terms, or the
    /// worst-case γ_J for spin J
    Gamma(GammaArgs),
    /// Locality certificate: is max|C − C₀₀| ≤ γ(1 − |C₀₀|)?
    Check(SourceOnly),
    /// Build the explicit local model reproducing C (requires a passing certificate)
    Build(SourceOnly),
    /// Monte-Carlo estimates of the local model's correlation (CSV)
    Sample(LhvSampleArgs),
    /// Square-wave model with C(0) = 1 and C(mπ/n) = −1
    Squarewave(SquareArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct GammaArgs {
    /// Number of terms N
    #[arg(long)]
    n: Option<usize>,
    /// Spin bound 2J
    #[arg(long)]
    two_j: Option<u32>,
}

#[derive(Debug, Args)]
struct SourceOnly {
    #[command(flatten)]
    source: Source,
}

#[derive(Debug, Args)]
struct LhvSampleArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 100_000)]
    shots: usize,
    /// Number of random angle pairs
    #[arg(long, default_value_t = 10)]
    pairs: usize,
}

#[derive(Debug, Args)]
struct SquareArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    /// Tabulate C(θ) at N points (CSV)
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
}

#[derive(Debug, Args)]
struct QuantumArgs {
    #[command(flatten)]
    source: QuantumSource,
    /// CSV of C(θ) = C(θ, 0) at N points over [0, 2π)
    #[arg(long, value_name = "N")]
    sweep: Option<usize>,
    /// Optimized CHSH value and angles
    #[arg(long)]
    chsh_max: bool,
    /// Exact spin-1 joint probability box
    #[arg(long)]
    joint_box: bool,
    /// Oscillator: number of time samples for the fit
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Oscillator: sampling interval length
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    /// Oscillator: highest harmonic fitted
    #[arg(long, default_value_t = 6)]
    max_harmonic: u32,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct QuantumSource {
    #[arg(long, value_name = "P")]
    werner: Option<f64>,
    #[arg(long)]
    state: Option<PathBuf>,
    /// Oscillator spec JSON
    #[arg(long)]
    oscillator: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SodboxArgs {
    /// Sampled box CSV `x1..xd,y1..yd,p_pp,p_pm,p_mp,p_mm`
    #[arg(long, conflicts_with = "emit")]
    csv: Option<PathBuf>,
    /// Emit samples of a built-in box instead
    #[arg(long, value_enum)]
    emit: Option<Builtin>,
    /// Input dimension d
    #[arg(long)]
    d: usize,
    /// Rows emitted
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    /// Embedded PR box
    Pr,
    /// Singlet measured with Bloch effects
    Singlet,
    /// Uniformly random outcomes
    Uniform,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV `alpha,beta,value`
    #[arg(long)]
    csv: PathBuf,
    /// Spin bound 2J of the fitted series
    #[arg(long)]
    two_j: u32,
}

enum Artifact {
    Json(Value),
    Csv(String),
}

struct Report {
    artifact: Artifact,
    summary: String,
    positive: bool,
}

impl Report {
    fn json<T: Serialize>(value: &T, summary: String, positive: bool) -> Result<Self> {
        let v = serde_json::to_value(value).map_err(|e| Error::format("output", e.to_string()))?;
        Ok(Report {
            artifact: Artifact::Json(round_json(v)),
            summary,
            positive,
        })
    }

    fn csv(text: String, summary: String) -> Self {
        Report {
            artifact: Artifact::Csv(text),
            summary,
            positive: true,
        }
    }
}

/// Rounds every non-integer number to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json12(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        Error::format(format!("{} at {field}", path.display()), e.into_inner().to_string())
    })
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn kv(name: &str, pairs: &[(&str, String)]) -> String {
    let mut s = name.to_string();
    for (k, v) in pairs {
        let _ = write!(s, " {k}={v}");
    }
    s
}

fn want(fmt: Option<OutputFormat>, default: OutputFormat, allowed: &[OutputFormat]) -> Result<OutputFormat> {
    let f = fmt.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::arg("format", format!("{f:?} is not available for this command").to_lowercase()))
    }
}

/// Parses `args` (including the program name), runs the command and writes
/// to `out` / `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &cli.global.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.global.output {
        cfg.output = Some(o.clone());
    }
    if let Some(f) = cli.global.format {
        cfg.format = Some(f);
    }
    for (k, v) in &cli.global.tol {
        cfg.tolerances.insert(k.clone(), *v);
    }
    cfg.validate()?;

    let report = match cli.global.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::arg("workers", e.to_string()))?;
            pool.install(|| dispatch(&cli.command, &cfg))?
        }
        None => dispatch(&cli.command, &cfg)?,
    };

    let body = match report.artifact {
        Artifact::Json(v) => {
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::format("output", e.to_string()))?;
            s.push('\n');
            s
        }
        Artifact::Csv(s) => s,
    };
    match &cfg.output {
        Some(path) => {
            write_atomic(path, body.as_bytes())?;
            writeln!(out, "{}", report.summary)?;
        }
        None => {
            out.write_all(body.as_bytes())?;
            writeln!(err, "{}", report.summary)?;
        }
    }
    Ok(if report.positive { EXIT_OK } else { EXIT_NEGATIVE })
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Report> {
    match cmd {
        Command::Eval(a) => eval(a, cfg),
        Command::Chsh(a) => chsh(a, cfg),
        Command::Bci(a) => bci_cmd(a, cfg),
        Command::Witness(a) => witness(a, cfg),
        Command::Protocol(a) => protocol(a, cfg),
        Command::Lhv(a) => lhv_cmd(&a.command, cfg),
        Command::Quantum(a) => quantum_cmd(a, cfg),
        Command::Sodbox(a) => sodbox_cmd(a, cfg),
        Command::Fit(a) => fit(a, cfg),
    }
}

fn grid_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<Report> {
    let src = a.source.load()?;
    if let Some(n) = a.grid {
        want(cfg.format, OutputFormat::Csv, &[OutputFormat::Csv])?;
        if n == 0 {
            return Err(Error::arg("grid", "must be at least 1"));
        }
        let text = match &src {
            Loaded::Series(_) => {
                let mut s = String::from("alpha,beta,C\n");
                for &al in &grid_angles(n) {
                    for &be in &grid_angles(n) {
                        let _ = writeln!(s, "{},{},{}", sig12(al), sig12(be), sig12(src.correlation(al, be)));
                    }
                }
                s
            }
            _ => src.joint_box()?.to_csv(n),
        };
        return Ok(Report::csv(text, kv("eval", &[("rows", (n * n).to_string())])));
    }
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let (Some(al), Some(be)) = (a.alpha, a.beta) else {
        return Err(Error::arg("alpha", "give --alpha and --beta, or --grid"));
    };
    let f = src.series();
    let value = src.correlation(al, be);
    let bounded = f.is_bounded();
    let v = json!({
        "alpha": al,
        "beta": be,
        "correlation": value,
        "two_j": f.spin().two_j(),
        "sup_abs": f.sup_abs(),
        "bounded": bounded,
    });
    Report::json(&v, kv("eval", &[("correlation", sig12(value)), ("bounded", bounded.to_string())]), true)
}

fn chsh(a: &ChshArgs, cfg: &RunConfig) -> Result<Report> {
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let src = a.source.load()?;
    let c = Corr(&src);
    let (value, angles) = if let Some(x) = &a.angles {
        (bci::chsh_value(&c, x[0], x[1], x[2], x[3]), [x[0], x[1], x[2], x[3]])
    } else if a.optimize {
        let opt = match &src {
            Loaded::Series(f) => bci::optimize_chsh(f),
            Loaded::Quantum(q) => bci::optimize_chsh(q),
            Loaded::Box(b) => bci::optimize_chsh(b),
        };
        (opt.value, opt.angles())
    } else {
        return Err(Error::arg("angles", "give --angles A1 B2 A3 B4 or --optimize"));
    };
    let violated = value.abs() > 2.0 + tol::BELL_SLACK;
    let v = json!({
        "value": value,
        "angles": {"a1": angles[0], "b2": angles[1], "a3": angles[2], "b4": angles[3]},
        "bound": 2.0,
        "violated": violated,
    });
    Report::json(&v, kv("chsh", &[("value", sig12(value)), ("violated", violated.to_string())]), violated)
}

fn bci_cmd(a: &BciArgs, cfg: &RunConfig) -> Result<Report> {
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let src = a.source.load()?;
    let setting = ChainedSetting::new(a.n, a.theta_plus, a.theta_minus)?;
    let r = bci::bci_value_at(&Corr(&src), &setting, a.offset);
    let summary = kv(
        "bci",
        &[("n", r.n_settings.to_string()), ("lhs", sig12(r.lhs)), ("bound", sig12(r.classical_bound)), ("violated", r.violated.to_string())],
    );
    let ok = r.violated;
    Report::json(&r, summary, ok)
}

fn witness(a: &WitnessArgs, cfg: &RunConfig) -> Result<Report> {
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let f = a.source.load()?.series();
    let s = bci::theorem_2b_witness(&f, a.theta_plus, a.theta_minus, a.cap)?;
    let mut v = serde_json::to_value(&s.report).map_err(|e| Error::format("output", e.to_string()))?;
    if let Value::Object(o) = &mut v {
        o.insert("two_j".into(), json!(s.spin.two_j()));
        o.insert("epsilon".into(), json!(s.epsilon));
        o.insert("delta".into(), json!(s.delta));
        o.insert("epsilon_bound".into(), json!(s.epsilon_bound));
        o.insert("premise_holds".into(), json!(s.premise_holds));
        o.insert("window".into(), json!(s.window));
        o.insert("cap".into(), json!(s.cap));
        o.insert("status".into(), json!(s.status));
        o.insert("raw_report".into(), json!(s.raw_report));
    }
    let found = s.status == SearchStatus::Violated;
    let summary = kv(
        "witness",
        &[("status", format!("{:?}", s.status).to_lowercase()), ("n", s.report.n_settings.to_string()), ("lhs", sig12(s.report.lhs)), ("epsilon", sig12(s.epsilon)), ("epsilon_bound", sig12(s.epsilon_bound))],
    );
    Report::json(&v, summary, found)
}

fn protocol(a: &ProtocolArgs, cfg: &RunConfig) -> Result<Report> {
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let src = a.source.load()?;
    let spin = a.two_j.map_or(src.spin(), Spin::from_two_j);
    let pc = ProtocolConfig {
        shots: a.shots,
        seed: cfg.seed,
        flip_bob: a.flip_bob,
        sigmas: cfg.tolerance("sigma_margin", tol::SIGMA_MARGIN),
        cap: a.cap,
    };
    let r = match &src {
        Loaded::Quantum(q) => bci::simulate_witness_protocol(q, spin, a.theta_plus, a.theta_minus, &pc)?,
        other => bci::simulate_witness_protocol(&other.joint_box()?, spin, a.theta_plus, a.theta_minus, &pc)?,
    };
    let summary = kv(
        "protocol",
        &[("n", r.report.n_settings.to_string()), ("lhs", sig12(r.report.lhs)), ("margin", sig12(r.report.margin)), ("violated", r.report.violated.to_string())],
    );
    let ok = r.report.violated;
    Report::json(&r, summary, ok)
}

fn local_mixture(src: &Loaded) -> Result<(lhv::LocalityCertificate, Option<LocalMixture>)> {
    let f = src.series();
    let cert = lhv::theorem_2a_check(&f);
    if !cert.verdict.is_pass() {
        return Ok((cert, None));
    }
    let (cert, mix) = lhv::certify_local(&f)?;
    Ok((cert, Some(mix)))
}

fn lhv_cmd(cmd: &LhvCommand, cfg: &RunConfig) -> Result<Report> {
    match cmd {
        LhvCommand::Gamma(g) => {
            want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
            if let Some(n) = g.n {
                let xi = lhv::optimal_xi(n)?;
                let gamma = lhv::gamma_n(n)?;
                let v = json!({"n": n, "xi": xi, "gamma": gamma, "lower_bound": lhv::gamma_n_lower_bound(n)});
                Report::json(&v, kv("gamma", &[("n", n.to_string()), ("gamma", sig12(gamma))]), true)
            } else {
                let spin = Spin::from_two_j(g.two_j.unwrap_or(0));
                let gamma = lhv::gamma_j(spin)?;
                let v = json!({"two_j": spin.two_j(), "max_terms": spin.max_terms(), "gamma": gamma});
                Report::json(&v, kv("gamma", &[("two_j", spin.two_j().to_string()), ("gamma", sig12(gamma))]), true)
            }
        }
        LhvCommand::Check(s) => {
            want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
            let cert = lhv::theorem_2a_check(&s.source.load()?.series());
            let summary = kv("lhv-check", &[("verdict", json!(cert.verdict).as_str().unwrap_or("").to_string()), ("deviation", sig12(cert.deviation))]);
            let ok = cert.verdict.is_pass();
            Report::json(&cert, summary, ok)
        }
        LhvCommand::Build(s) => {
            want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
            let (cert, mix) = local_mixture(&s.source.load()?)?;
            let ok = mix.is_some();
            let v = json!({"certificate": cert, "model": mix});
            Report::json(&v, kv("lhv-build", &[("built", ok.to_string()), ("n_terms", cert.n_terms.to_string())]), ok)
        }
        LhvCommand::Sample(s) => {
            want(cfg.format, OutputFormat::Csv, &[OutputFormat::Csv])?;
            let (cert, mix) = local_mixture(&s.source.load()?)?;
            let Some(mix) = mix else {
                return Err(Error::PremiseFailed(format!("no local model: deviation {} exceeds the bound", sig12(cert.deviation))));
            };
            let mut r = rng::stream(cfg.seed, u64::MAX);
            let rows: Vec<lhv::Estimate> = (0..s.pairs)
                .map(|k| {
                    let (al, be) = (r.random_range(0.0..TAU), r.random_range(0.0..TAU));
                    lhv::estimate(&mix, al, be, s.shots, cfg.seed.wrapping_add(k as u64))
                })
                .collect();
            Ok(Report::csv(lhv::estimates_csv(&rows), kv("lhv-sample", &[("pairs", s.pairs.to_string()), ("shots", s.shots.to_string())])))
        }
        LhvCommand::Squarewave(s) => {
            let m = lhv::build_squarewave_lhv(s.m, s.n)?;
            let c0 = m.correlation_at(0.0);
            let cm = m.correlation_at(m.theta_minus());
            let summary = kv("squarewave", &[("c_zero", sig12(c0)), ("c_theta_minus", sig12(cm))]);
            let fmt = want(cfg.format, if s.grid.is_some() { OutputFormat::Csv } else { OutputFormat::Json }, &[OutputFormat::Json, OutputFormat::Csv])?;
            if fmt == OutputFormat::Csv {
                let n = s.grid.unwrap_or(360).max(1);
                let mut text = String::from("theta,C\n");
                for t in grid_angles(n) {
                    let _ = writeln!(text, "{},{}", sig12(t), sig12(m.correlation_at(t)));
                }
                return Ok(Report::csv(text, summary));
            }
            let v = json!({"m": s.m, "n": s.n, "theta_minus": m.theta_minus(), "c_zero": c0, "c_theta_minus": cm});
            Report::json(&v, summary, true)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatorJson {
    omega: f64,
    levels: Vec<u32>,
    /// `[re, im]` per level.
    amplitudes: Vec<[f64; 2]>,
}

fn quantum_cmd(a: &QuantumArgs, cfg: &RunConfig) -> Result<Report> {
    if let Some(p) = &a.source.oscillator {
        want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
        let j: OscillatorJson = read_json(p)?;
        if j.amplitudes.len() != j.levels.len() {
            return Err(Error::format("amplitudes", "needs one amplitude per level"));
        }
        let amps: Vec<Complex64> = j.amplitudes.iter().map(|z| Complex64::new(z[0], z[1])).collect();
        let spec = OscillatorSpec::pure(j.omega, j.levels.clone(), &amps, quantum::superposition_effects(j.levels.len()))?;
        let n = a.samples.max(2);
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = a.t_max * i as f64 / (n - 1) as f64;
                (t, quantum::oscillator_box(&spec, t)[0])
            })
            .collect();
        let fit = quantum::fit_time_series(&samples, j.omega, a.max_harmonic)?;
        let active = fit.series.active_harmonics(1e-8);
        let expected = quantum::energy_differences(&j.levels);
        let matches = active == expected && fit.residual_rms < tol::AFFINE_RESIDUAL;
        let v = json!({
            "omega": j.omega,
            "levels": j.levels,
            "energy_differences": expected,
            "active_harmonics": active,
            "residual_rms": fit.residual_rms,
            "series": fit.series,
            "matches": matches,
        });
        let summary = kv("oscillator", &[("harmonics", format!("{active:?}").replace(' ', "")), ("residual", sig12(fit.residual_rms))]);
        return Report::json(&v, summary, matches);
    }
    let state = match (&a.source.werner, &a.source.state) {
        (Some(p), _) => quantum::werner_state(*p)?,
        (_, Some(path)) => read_json(path)?,
        _ => return Err(Error::arg("state", "no state selected")),
    };
    let qb = quantum::quantum_box(&state);
    if let Some(n) = a.sweep {
        want(cfg.format, OutputFormat::Csv, &[OutputFormat::Csv])?;
        let mut text = String::from("theta,C\n");
        for t in grid_angles(n.max(1)) {
            let _ = writeln!(text, "{},{}", sig12(t), sig12(qb.correlation(t, 0.0)));
        }
        return Ok(Report::csv(text, kv("quantum-sweep", &[("rows", n.to_string())])));
    }
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    if a.chsh_max {
        let opt = bci::optimize_chsh(&qb);
        let v = json!({
            "value": opt.value,
            "angles": {"a1": opt.a1, "b2": opt.b2, "a3": opt.a3, "b4": opt.b4},
            "bound": 2.0,
            "violated": opt.value.abs() > 2.0 + tol::BELL_SLACK,
        });
        return Report::json(&v, kv("quantum-chsh", &[("value", sig12(opt.value))]), true);
    }
    if a.joint_box {
        let jb = qb.joint_box();
        return Report::json(&jb, kv("quantum-box", &[("min_probability", sig12(jb.min_probability()))]), true);
    }
    let (ra, rb, t) = state.bloch();
    let v = json!({"eigenvalues": state.eigenvalues(), "bloch_a": ra, "bloch_b": rb, "correlation_tensor": t});
    Report::json(&v, kv("quantum", &[("state", "ok".into())]), true)
}

fn sodbox_cmd(a: &SodboxArgs, cfg: &RunConfig) -> Result<Report> {
    sodbox::check_dim(a.d)?;
    if let Some(b) = a.emit {
        want(cfg.format, OutputFormat::Csv, &[OutputFormat::Csv])?;
        let bx: Box<dyn SoDBox> = match b {
            Builtin::Pr => Box::new(sodbox::pr_box_embedding(sodbox::Behaviour222::pr_box(), a.d)?),
            Builtin::Singlet => Box::new(QubitSodBox::new(quantum::werner_state(1.0)?, a.d)?),
            Builtin::Uniform => Box::new(sodbox::ProductBox::new(sodbox::AffineBox::uniform(a.d, 2)?, sodbox::AffineBox::uniform(a.d, 2)?)?),
        };
        let rows = sodbox::sample_rows(&bx, a.count, cfg.seed);
        return Ok(Report::csv(sample_csv(&rows, a.d), kv("sodbox-emit", &[("rows", rows.len().to_string())])));
    }
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let Some(path) = &a.csv else {
        return Err(Error::arg("csv", "give --csv FILE or --emit BOX"));
    };
    let rows = read_sample_csv(path, a.d)?;
    let cert = sodbox::certify_samples(&rows, a.d, cfg.tolerance("unbiased", tol::AFFINE_RESIDUAL), cfg.seed)?;
    let pass = cert.affine_residual < cfg.tolerance("affine_residual", tol::AFFINE_RESIDUAL)
        && cert.unbiased
        && cert.unital
        && cert.positivity_min >= -cfg.tolerance("positivity", tol::POSITIVITY);
    let mut v = serde_json::to_value(&cert).map_err(|e| Error::format("output", e.to_string()))?;
    if let Value::Object(o) = &mut v {
        o.insert("passed".into(), json!(pass));
    }
    let summary = kv(
        "sodbox",
        &[("affine_residual", sig12(cert.affine_residual)), ("unbiased", cert.unbiased.to_string()), ("unital", cert.unital.to_string()), ("positivity_min", sig12(cert.positivity_min))],
    );
    Report::json(&v, summary, pass)
}

fn sample_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    h.extend((1..=d).map(|i| format!("y{i}")));
    h.extend(["p_pp", "p_pm", "p_mp", "p_mm"].map(String::from));
    h
}

pub fn sample_csv(rows: &[SampleRow], d: usize) -> String {
    let mut s = sample_header(d).join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.x.iter().chain(&r.y).chain(&r.p).map(|v| sig12(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn open_csv(path: &Path, expected: &[String]) -> Result<csv::Reader<std::fs::File>> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| Error::format("header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected {
        let bad = expected
            .iter()
            .zip(header.iter().map(Some).chain(std::iter::repeat(None)))
            .find(|(e, h)| h.is_none_or(|h| h != *e))
            .map_or_else(|| "header".to_string(), |(e, _)| e.clone());
        return Err(Error::format(bad, format!("expected header {}, found {}", expected.join(","), header.join(","))));
    }
    Ok(rd)
}

fn parse_row(rec: &csv::StringRecord, names: &[String], line: usize) -> Result<Vec<f64>> {
    if rec.len() != names.len() {
        return Err(Error::format(format!("row {line}"), format!("expected {} fields, found {}", names.len(), rec.len())));
    }
    rec.iter()
        .zip(names)
        .map(|(cell, name)| {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(format!("row {line}, column {name}"), format!("'{cell}' is not a finite number")))
        })
        .collect()
}

pub fn read_sample_csv(path: &Path, d: usize) -> Result<Vec<SampleRow>> {
    let names = sample_header(d);
    let mut rd = open_csv(path, &names)?;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("row {}", i + 1), e.to_string()))?;
        let v = parse_row(&rec, &names, i + 1)?;
        rows.push(SampleRow {
            x: v[..d].to_vec(),
            y: v[d..2 * d].to_vec(),
            p: [v[2 * d], v[2 * d + 1], v[2 * d + 2], v[2 * d + 3]],
        });
    }
    Ok(rows)
}

fn fit(a: &FitArgs, cfg: &RunConfig) -> Result<Report> {
    want(cfg.format, OutputFormat::Json, &[OutputFormat::Json])?;
    let names: Vec<String> = ["alpha", "beta", "value"].map(String::from).to_vec();
    let mut rd = open_csv(&a.csv, &names)?;
    let mut samples = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("row {}", i + 1), e.to_string()))?;
        let v = parse_row(&rec, &names, i + 1)?;
        samples.push((v[0], v[1], v[2]));
    }
    let fit = corrfn::fit_trig_series(&samples, Spin::from_two_j(a.two_j))?;
    let v = json!({"function": fit.function, "residual_rms": fit.residual_rms});
    Report::json(&v, kv("fit", &[("terms", fit.function.term_count().to_string()), ("residual", sig12(fit.residual_rms))]), true)
}
