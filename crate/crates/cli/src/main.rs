use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mbcoherence::experiments::{format_float, write_fig1_csv, write_fig2_csv};
use mbcoherence::{
    haar_avg_connected, haar_avg_raw, haar_monte_carlo, mean_coherence, mean_coherence_gram, run_entangled_demo,
    run_fig1, run_fig2, sample_haar, sweep_transition, CMatrix, CorrelatorTable, Error, ExternalUnitary, RunConfig,
    State, StateDescription, Statistics, WireComplex,
};

#[derive(Parser)]
#[command(name = "mbcoherence", version, about = "Many-body coherence and randomized correlators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// W^(k) against W^(2) over sampled separable states.
    Fig1(PipelineArgs),
    /// Mode-averaged connected correlators against W^(k).
    Fig2(PipelineArgs),
    /// Coherences of the entangled two- and three-particle states.
    DemoEntangled,
    /// W^(k) of a state file, one JSON line per order.
    Coherence(CoherenceArgs),
    /// Raw and connected correlators after one unitary, as CSV.
    Correlate(CorrelateArgs),
    /// Haar average of the k-point correlator.
    HaarAverage(HaarArgs),
    /// Sampled separable states as JSON lines.
    SampleStates(SampleArgs),
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    n_states: Option<usize>,
    /// Particle number; external dimension follows.
    #[arg(long = "particles", short = 'N')]
    n_particles: Option<usize>,
    #[arg(long)]
    d_int: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    n_unitaries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes CSV and summary JSON here instead of CSV to stdout.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// JSON object whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoherenceArgs {
    #[arg(long)]
    state: Option<PathBuf>,
    /// Orders to report; defaults to 1..=N.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    k: Vec<usize>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrelateArgs {
    #[arg(long)]
    state: Option<PathBuf>,
    /// JSON matrix of `[re, im]` entries, one array per row.
    #[arg(long, conflicts_with = "haar_seed")]
    unitary: Option<PathBuf>,
    #[arg(long)]
    haar_seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "all_subsets")]
    modes: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default)]
    all_subsets: bool,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Analytic,
    Mc,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Quantity {
    Connected,
    Raw,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HaarArgs {
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "analytic")]
    method: Method,
    #[arg(long, value_enum, default_value = "connected")]
    quantity: Quantity,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleArgs {
    #[arg(long, default_value_t = 100)]
    n_states: usize,
    #[arg(long = "particles", short = 'N', default_value_t = 7)]
    n_particles: usize,
    #[arg(long)]
    d_int: Option<usize>,
    #[arg(long, value_enum, default_value = "boson")]
    statistics: StatisticsArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated epsilon values; defaults to the log grid.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StatisticsArg {
    Boson,
    Fermion,
}

impl From<StatisticsArg> for Statistics {
    fn from(s: StatisticsArg) -> Self {
        match s {
            StatisticsArg::Boson => Statistics::Boson,
            StatisticsArg::Fermion => Statistics::Fermion,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return report(e);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::InvariantViolation(_) => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("MBC_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        value.parse().ok().filter(|&t| t > 0).ok_or_else(|| Error::Config(format!("bad MBC_THREADS '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Fig1(args) => fig1(args),
        Command::Fig2(args) => fig2(args),
        Command::DemoEntangled => print_json(&run_entangled_demo()?),
        Command::Coherence(args) => coherence(with_config(args, |a| a.config.clone())?),
        Command::Correlate(args) => correlate(with_config(args, |a| a.config.clone())?),
        Command::HaarAverage(args) => haar_average(with_config(args, |a| a.config.clone())?),
        Command::SampleStates(args) => {
            let output = args.output.clone();
            sample_states(with_config(args, |a| a.config.clone())?, output)
        }
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Applies the keys of the `--config` file, if any, on top of the flags.
fn with_config<T: Serialize + DeserializeOwned>(args: T, config: impl Fn(&T) -> Option<PathBuf>) -> Result<T, Error> {
    let Some(path) = config(&args) else {
        return Ok(args);
    };
    let serde_json::Value::Object(patch) = read_json(&path)? else {
        return Err(Error::Config("configuration must be a JSON object".into()));
    };
    let mut base = serde_json::to_value(&args)?;
    let obj = base.as_object_mut().expect("arguments serialize to an object");
    obj.extend(patch);
    Ok(serde_json::from_value(base)?)
}

fn pipeline_config(mut base: RunConfig, args: &PipelineArgs) -> Result<RunConfig, Error> {
    if let Some(n) = args.n_particles {
        base.n_particles = n;
        base.d_ext = n;
        base.d_int = base.d_int.max(n);
    }
    if let Some(v) = args.n_states {
        base.n_states = v;
    }
    if let Some(v) = args.d_int {
        base.d_int = v;
    }
    if let Some(v) = &args.k {
        base.k_list = v.clone();
    }
    if let Some(v) = args.n_unitaries {
        base.n_unitaries = v;
    }
    if let Some(v) = args.seed {
        base.seed = v;
    }
    if args.output_dir.is_some() {
        base.output_dir = args.output_dir.clone();
    }
    match &args.config {
        Some(path) => base.merged_with(&read_json(path)?),
        None => Ok(base),
    }
}

fn fig1(args: PipelineArgs) -> Result<(), Error> {
    let config = pipeline_config(RunConfig::fig1(), &args)?;
    let out = run_fig1(&config)?;
    match &config.output_dir {
        Some(dir) => {
            out.write_to(dir)?;
            print_json(&out.summary)
        }
        None => write_fig1_csv(&out.rows, config.n_particles, io::stdout().lock()),
    }
}

fn fig2(args: PipelineArgs) -> Result<(), Error> {
    let config = pipeline_config(RunConfig::fig2(), &args)?;
    let out = run_fig2(&config)?;
    match &config.output_dir {
        Some(dir) => {
            out.write_to(dir)?;
            print_json(&out.summary)
        }
        None => write_fig2_csv(&out.rows, io::stdout().lock()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_state(path: Option<&PathBuf>) -> Result<State, Error> {
    let path = path.ok_or_else(|| Error::Config("--state is required".into()))?;
    let description: StateDescription = serde_json::from_value(read_json(path)?)?;
    description.into_state()
}

fn load_unitary(path: &Path) -> Result<ExternalUnitary, Error> {
    let rows: Vec<Vec<WireComplex>> = serde_json::from_value(read_json(path)?)?;
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("unitary must be square".into()));
    }
    ExternalUnitary::new(CMatrix::from_fn(d, d, |i, j| rows[i][j].into()))
}

#[derive(Serialize)]
struct CoherenceLine {
    k: usize,
    #[serde(rename = "W")]
    w: f64,
}

fn coherence(args: CoherenceArgs) -> Result<(), Error> {
    let state = load_state(args.state.as_ref())?;
    let n = state.n_particles();
    let orders = if args.k.is_empty() { (1..=n).collect() } else { args.k };
    let mut out = io::stdout().lock();
    for k in orders {
        let w = match state.as_separable() {
            Some(s) => mean_coherence_gram(s, k)?,
            None => mean_coherence(&state, k)?,
        };
        writeln!(out, "{}", serde_json::to_string(&CoherenceLine { k, w })?)?;
    }
    Ok(())
}

fn correlate(args: CorrelateArgs) -> Result<(), Error> {
    let state = load_state(args.state.as_ref())?;
    let d = state.spaces().d_ext;
    let (unitary, unitary_id) = match (&args.unitary, args.haar_seed) {
        (Some(path), None) => (load_unitary(path)?, "file".to_string()),
        (None, Some(seed)) => (sample_haar(d, seed), seed.to_string()),
        _ => return Err(Error::Config("give exactly one of --unitary or --haar-seed".into())),
    };
    let subsets: Vec<Vec<usize>> = match (&args.modes, args.all_subsets) {
        (Some(modes), false) => {
            if args.k.is_some_and(|k| k != modes.len()) {
                return Err(Error::Config("--k disagrees with the number of --modes".into()));
            }
            vec![modes.clone()]
        }
        (None, true) => {
            let k = args.k.ok_or_else(|| Error::Config("--all-subsets needs --k".into()))?;
            itertools::Itertools::combinations(0..d, k).collect()
        }
        _ => return Err(Error::Config("give exactly one of --modes or --all-subsets".into())),
    };
    let k = subsets.first().map_or(0, Vec::len);
    if k == 0 || k > state.n_particles() {
        return Err(Error::Config(format!("k must lie in 1..={}", state.n_particles())));
    }
    let ground: Vec<usize> = if args.all_subsets { (0..d).collect() } else { subsets[0].clone() };
    let mut table = CorrelatorTable::new(&state, &unitary, &ground, k)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(io::stdout().lock()));
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["unitary_id", "modes", "raw", "connected"]).map_err(csv_err)?;
    for s in &subsets {
        let raw = table.raw(s).expect("tabulated");
        let connected = table.connected(s).expect("tabulated");
        let modes = s.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([unitary_id.clone(), modes, format_float(raw), format_float(connected)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HaarOutput {
    k: usize,
    value: f64,
    stderr: Option<f64>,
}

fn haar_average(args: HaarArgs) -> Result<(), Error> {
    let state = load_state(args.state.as_ref())?;
    let k = args.k.ok_or_else(|| Error::Config("--k is required".into()))?;
    let (value, stderr) = match (args.method, args.quantity) {
        (Method::Analytic, Quantity::Connected) => (haar_avg_connected(&state, k)?, None),
        (Method::Analytic, Quantity::Raw) => (haar_avg_raw(&state, k)?, None),
        (Method::Mc, quantity) => {
            let mc = haar_monte_carlo(&state, k, args.samples, args.seed)?;
            let est = match quantity {
                Quantity::Connected => mc.connected(k),
                Quantity::Raw => mc.raw(k),
            };
            (est.mean, Some(est.stderr))
        }
    };
    println!("{}", serde_json::to_string(&HaarOutput { k, value, stderr })?);
    Ok(())
}

#[derive(Serialize)]
struct SampleLine {
    #[serde(flatten)]
    state: StateDescription,
    regime: mbcoherence::Regime,
    epsilon: f64,
    seed: u64,
}

fn sample_states(args: SampleArgs, output: Option<PathBuf>) -> Result<(), Error> {
    let grid = args.epsilon.clone().unwrap_or_else(mbcoherence::default_epsilon_grid);
    let d_int = args.d_int.unwrap_or(args.n_particles);
    let sampled = sweep_transition(args.n_states, args.n_particles, d_int, &grid, args.statistics.into(), args.seed)?;
    let mut out: Box<dyn Write> = match output {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for s in sampled {
        let line = SampleLine {
            state: StateDescription::from_state(&State::from(s.state)),
            regime: s.config.regime,
            epsilon: s.config.epsilon,
            seed: s.config.seed,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;
    Ok(())
}
