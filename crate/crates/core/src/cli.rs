//! Command-line front end of the `deffuant` binary.
//!
//! Every flag can also come from a `key=value` file given with `--config`
//! (keys are long flag names without dashes, `#` starts a comment); flags on
//! the command line win. Output files go to `--out PREFIX`, by default
//! `$DEFFUANT_OUT_DIR/<subcommand>` or `./<subcommand>`.
//!
//! Sweep cells are numbered `θ-index · replicates + replicate` in the order the
//! θ values were given; cell `k` runs with seed `seed + k`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::opinions::{intensity, intensity_plf, RngState};
use crate::plf::PiecewiseLinearFn;
use crate::sad::{sad_max_weight_with_budget, DEFAULT_NODE_BUDGET};
use crate::sim::{run_with_series, write_series_csv, Boundary, Diagnostics, LatticeState, Metric, SimConfig};
use crate::threshold::theta_c;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DEFFUANT_OUT_DIR";

/// Subdivisions of the tabulated intensity used for `mean_tv_to_intensity`.
pub const INTENSITY_GRID: usize = 1024;

/// Header of the per-cell sweep table.
pub const SWEEP_HEADER: &str = "theta,replicate,blocked_fraction,max_neighbor_tv,mean_tv_to_intensity,persistent_blocked";

#[derive(Parser, Debug)]
#[command(name = "deffuant", version, about = "Deffuant dynamics with density-valued opinions")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Consensus threshold θ_c(γ) as JSON.
    ThetaC(ThetaCArgs),
    /// Intensity of the initial opinions on a uniform grid, as CSV `x,phi`.
    Intensity(IntensityArgs),
    /// One simulation with a diagnostics time series.
    Simulate(SimulateArgs),
    /// Replicated simulations over a grid of θ values.
    Sweep(SweepArgs),
    /// Exhaustive Sharing-a-Drink search.
    Sad(SadArgs),
}

#[derive(Args, Debug)]
struct ThetaCArgs {
    #[arg(long, value_parser = parse_gamma)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8, value_parser = parse_positive)]
    tol: f64,
}

#[derive(Args, Debug)]
struct IntensityArgs {
    #[arg(long, value_parser = parse_gamma)]
    gamma: f64,
    /// Grid subdivisions; the CSV has `points + 1` rows.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    points: u64,
    /// Output file; standard output without it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimFlags {
    #[arg(long, default_value_t = 0.0, value_parser = parse_gamma)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5, value_parser = parse_mu)]
    mu: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    n_sites: u64,
    #[arg(long, default_value_t = 1000.0, value_parser = parse_positive)]
    horizon: f64,
    #[arg(long, default_value = "ring", value_parser = parse_boundary)]
    boundary: Boundary,
    #[arg(long, default_value = "total_variation", value_parser = parse_metric)]
    metric: Metric,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-12, value_parser = parse_nonnegative)]
    simplify_tol: f64,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_unit)]
    theta: f64,
    #[command(flatten)]
    sim: SimFlags,
    /// Time between diagnostics rows; defaults to horizon / 100.
    #[arg(long, value_parser = parse_positive)]
    interval: Option<f64>,
    /// Also write the final opinion of every site.
    #[arg(long)]
    dump_sites: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated θ values.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_unit)]
    thetas: Vec<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    /// Simulations run at once; defaults to the available cores.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: Option<u64>,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args, Debug)]
struct SadArgs {
    /// Distance of the target site from the full glass.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    d: u32,
    #[arg(long, default_value_t = 0.5, value_parser = parse_mu)]
    mu: f64,
    #[arg(long, default_value_t = 12)]
    max_updates: usize,
    /// Search nodes before giving up.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    budget: usize,
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_unit(s: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(s)?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0,1]"))
    }
}

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(s)?;
    if (0.0..1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0,1)"))
    }
}

fn parse_mu(s: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 && x <= 0.5 {
        Ok(x)
    } else {
        Err(format!("{x} is outside (0, 1/2]"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} is not positive"))
    }
}

fn parse_nonnegative(s: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} is negative"))
    }
}

fn parse_boundary(s: &str) -> std::result::Result<Boundary, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A fully validated invocation.
#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentSpec {
    ThetaC {
        gamma: f64,
        tol: f64,
    },
    Intensity {
        gamma: f64,
        points: usize,
        out: Option<PathBuf>,
    },
    Simulate {
        config: SimConfig<f64>,
        interval: f64,
        dump_sites: bool,
        out: PathBuf,
    },
    Sweep {
        sweep: SweepSpec,
        out: PathBuf,
    },
    Sad {
        d: u32,
        mu: f64,
        max_updates: usize,
        budget: usize,
    },
}

/// θ-grid times replicates, all other parameters taken from `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig<f64>,
    pub thetas: Vec<f64>,
    pub replicates: usize,
    pub parallelism: usize,
}

impl SweepSpec {
    /// `(θ, replicate, seed)` of every cell, in output order.
    pub fn cells(&self) -> Vec<(f64, usize, u64)> {
        let mut out = Vec::with_capacity(self.thetas.len() * self.replicates);
        for (i, &theta) in self.thetas.iter().enumerate() {
            for r in 0..self.replicates {
                let k = (i * self.replicates + r) as u64;
                out.push((theta, r, self.base.seed.wrapping_add(k)));
            }
        }
        out
    }
}

/// Final state of one sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub replicate: usize,
    pub seed: u64,
    pub blocked_fraction: f64,
    pub max_neighbor_tv: f64,
    pub mean_tv_to_intensity: f64,
    /// Fraction of edges blocked throughout the second half of the horizon.
    pub persistent_blocked: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaSummary {
    pub theta: f64,
    pub median_blocked_fraction: f64,
    pub median_persistent_blocked: f64,
    pub median_max_neighbor_tv: f64,
    pub median_mean_tv_to_intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub gamma: f64,
    pub mu: f64,
    pub n_sites: usize,
    pub horizon: f64,
    pub boundary: Boundary,
    pub metric: Metric,
    pub seed: u64,
    pub replicates: usize,
    pub per_theta: Vec<ThetaSummary>,
    #[serde(skip)]
    pub rows: Vec<SweepRow>,
}

impl SimFlags {
    fn config(&self, theta: f64) -> SimConfig<f64> {
        SimConfig {
            theta,
            mu: self.mu,
            gamma: self.gamma,
            n_sites: self.n_sites as usize,
            horizon: self.horizon,
            boundary: self.boundary,
            metric: self.metric,
            seed: self.seed,
            simplify_tol: self.simplify_tol,
            record_events: false,
        }
    }
}

fn default_out(name: &str, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(name)
    })
}

/// Splices `key=value` lines of the `--config` file in right after the
/// subcommand, so that flags given on the command line override them.
fn expand_config(argv: &[String]) -> std::result::Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut file = None;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            file = Some(it.next().ok_or("--config needs a file")?.clone());
        } else if let Some(path) = a.strip_prefix("--config=") {
            file = Some(path.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let text = std::fs::read_to_string(&file).map_err(|e| format!("--config {file}: {e}"))?;
    let mut extra = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("--config {file}:{}: expected key=value", no + 1))?;
        let flag = format!("--{}", k.trim().replace('_', "-"));
        match v.trim() {
            "true" if flag == "--dump-sites" => extra.push(flag),
            "false" if flag == "--dump-sites" => {}
            v => {
                extra.push(flag);
                extra.push(v.to_string());
            }
        }
    }
    // subcommand = first token after the program name that is not a flag
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    rest.splice(at..at, extra);
    Ok(rest)
}

fn parse_cli(argv: &[String]) -> std::result::Result<ExperimentSpec, clap::Error> {
    let argv = expand_config(argv).map_err(|m| Cli::command_error(ErrorKind::Io, m))?;
    let cli = Cli::try_parse_from(argv)?;
    Ok(match cli.command {
        Command::ThetaC(a) => ExperimentSpec::ThetaC {
            gamma: a.gamma,
            tol: a.tol,
        },
        Command::Intensity(a) => ExperimentSpec::Intensity {
            gamma: a.gamma,
            points: a.points as usize,
            out: a.out,
        },
        Command::Simulate(a) => {
            let config = a.sim.config(a.theta);
            ExperimentSpec::Simulate {
                interval: a.interval.unwrap_or(config.horizon / 100.0),
                dump_sites: a.dump_sites,
                out: default_out("simulate", a.sim.out.clone()),
                config,
            }
        }
        Command::Sweep(a) => {
            if a.thetas.is_empty() {
                return Err(Cli::command_error(ErrorKind::ValueValidation, "--thetas: empty θ grid"));
            }
            let parallelism = a
                .parallelism
                .map(|p| p as usize)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            ExperimentSpec::Sweep {
                out: default_out("sweep", a.sim.out.clone()),
                sweep: SweepSpec {
                    base: a.sim.config(0.0),
                    thetas: a.thetas,
                    replicates: a.replicates as usize,
                    parallelism,
                },
            }
        }
        Command::Sad(a) => ExperimentSpec::Sad {
            d: a.d,
            mu: a.mu,
            max_updates: a.max_updates,
            budget: a.budget,
        },
    })
}

impl Cli {
    fn command_error(kind: ErrorKind, msg: impl std::fmt::Display) -> clap::Error {
        use clap::CommandFactory;
        Cli::command().error(kind, msg)
    }
}

/// Parses `argv` (program name first) into a validated spec.
pub fn parse_args(argv: &[String]) -> Result<ExperimentSpec> {
    parse_cli(argv).map_err(|e| Error::Usage(e.to_string().trim_end().to_string()))
}

/// Runs every cell of the sweep, at most `parallelism` at a time. Rows come
/// back ordered by (θ, replicate) whatever the completion order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepSummary> {
    if spec.thetas.is_empty() {
        return Err(Error::Usage("--thetas: empty θ grid".into()));
    }
    if spec.replicates == 0 {
        return Err(Error::Usage("--replicates must be at least 1".into()));
    }
    let phi = intensity_plf(spec.base.gamma, INTENSITY_GRID)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        spec.cells()
            .into_par_iter()
            .map(|(theta, replicate, seed)| {
                let config = SimConfig {
                    theta,
                    seed,
                    ..spec.base.clone()
                };
                run_cell(&config, &phi).map(|(d, persistent)| SweepRow {
                    theta,
                    replicate,
                    seed,
                    blocked_fraction: d.blocked_fraction,
                    max_neighbor_tv: d.max_neighbor_tv,
                    mean_tv_to_intensity: d.mean_tv_to_intensity,
                    persistent_blocked: persistent,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let per_theta = spec
        .thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let cell = &rows[i * spec.replicates..(i + 1) * spec.replicates];
            let med = |f: fn(&SweepRow) -> f64| median(cell.iter().map(f).collect());
            ThetaSummary {
                theta,
                median_blocked_fraction: med(|r| r.blocked_fraction),
                median_persistent_blocked: med(|r| r.persistent_blocked),
                median_max_neighbor_tv: med(|r| r.max_neighbor_tv),
                median_mean_tv_to_intensity: med(|r| r.mean_tv_to_intensity),
            }
        })
        .collect();
    let b = &spec.base;
    Ok(SweepSummary {
        gamma: b.gamma,
        mu: b.mu,
        n_sites: b.n_sites,
        horizon: b.horizon,
        boundary: b.boundary,
        metric: b.metric,
        seed: b.seed,
        replicates: spec.replicates,
        per_theta,
        rows,
    })
}

/// One simulation to the horizon: final diagnostics and the fraction of edges
/// blocked throughout the second half.
pub fn run_cell(config: &SimConfig<f64>, phi: &PiecewiseLinearFn<f64>) -> Result<(Diagnostics<f64>, f64)> {
    let mut state = LatticeState::init(config, RngState::new(config.seed))?;
    state.run(config.horizon)?;
    let persistent = state.persistent_blocked_fraction(0.5 * config.horizon);
    Ok((state.diagnostics(phi), persistent))
}

/// Median; the mean of the middle pair for an even count.
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// The sweep table with header [`SWEEP_HEADER`], 17 significant digits.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.theta, r.replicate, r.blocked_fraction, r.max_neighbor_tv, r.mean_tv_to_intensity, r.persistent_blocked
        )?;
    }
    Ok(())
}

/// CSV `x,phi` of the closed-form intensity at `i/points`, 17 significant digits.
pub fn write_intensity_csv<W: Write>(mut w: W, gamma: f64, points: usize) -> Result<()> {
    writeln!(w, "x,phi")?;
    for i in 0..=points {
        let x = i as f64 / points as f64;
        writeln!(w, "{:.16e},{:.16e}", x, intensity(gamma, x)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThetaCOutput {
    gamma: f64,
    theta_c: f64,
    error_estimate: f64,
    evaluations: usize,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn to_json<S: Serialize>(v: &S) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

/// Executes a spec, writing results to files and a report to `stdout`.
pub fn execute<W: Write>(spec: &ExperimentSpec, mut stdout: W) -> Result<()> {
    match spec {
        ExperimentSpec::ThetaC { gamma, tol } => {
            let r = theta_c(*gamma, *tol)?;
            let out = ThetaCOutput {
                gamma: *gamma,
                theta_c: r.value,
                error_estimate: r.error_estimate,
                evaluations: r.evaluations,
            };
            writeln!(stdout, "{}", to_json(&out))?;
        }
        ExperimentSpec::Intensity { gamma, points, out } => match out {
            Some(path) => {
                let mut w = create(path)?;
                write_intensity_csv(&mut w, *gamma, *points)?;
                w.flush()?;
            }
            None => write_intensity_csv(&mut stdout, *gamma, *points)?,
        },
        ExperimentSpec::Simulate {
            config,
            interval,
            dump_sites,
            out,
        } => {
            let phi = intensity_plf(config.gamma, INTENSITY_GRID)?;
            let mut state = LatticeState::init(config, RngState::new(config.seed))?;
            let series = run_with_series(&mut state, &phi, *interval)?;
            let path = with_suffix(out, "_series.csv");
            let mut w = create(&path)?;
            write_series_csv(&mut w, &series)?;
            w.flush()?;
            if *dump_sites {
                state.dump_opinions(&with_suffix(out, "_sites"))?;
            }
            let last = &series.last().expect("at least the initial row").1;
            #[derive(Serialize)]
            struct Report<'a> {
                series: String,
                persistent_blocked: f64,
                #[serde(flatten)]
                last: &'a Diagnostics<f64>,
            }
            let report = Report {
                series: path.display().to_string(),
                persistent_blocked: state.persistent_blocked_fraction(0.5 * config.horizon),
                last,
            };
            writeln!(stdout, "{}", to_json(&report))?;
        }
        ExperimentSpec::Sweep { sweep, out } => {
            let summary = run_sweep(sweep)?;
            let mut w = create(&with_suffix(out, "_runs.csv"))?;
            write_sweep_csv(&mut w, &summary.rows)?;
            w.flush()?;
            let json = to_json(&summary);
            let mut w = create(&with_suffix(out, "_summary.json"))?;
            writeln!(w, "{json}")?;
            w.flush()?;
            writeln!(stdout, "{json}")?;
        }
        ExperimentSpec::Sad {
            d,
            mu,
            max_updates,
            budget,
        } => {
            let r = sad_max_weight_with_budget(*d, *mu, *max_updates, *budget)?;
            let seq: Vec<String> = r.sequence.iter().map(|u| u.to_string()).collect();
            writeln!(stdout, "best value: {:.17}", r.value)?;
            writeln!(stdout, "sequence: [{}]", seq.join(", "))?;
            writeln!(stdout, "nodes: {}", r.nodes)?;
        }
    }
    Ok(())
}

/// Entry point of the binary: parse, execute, report. Returns the exit code:
/// 0 on success, 2 on usage errors, 1 on any other failure.
pub fn main_with_args(argv: &[String]) -> i32 {
    let spec = match parse_cli(argv) {
        Ok(spec) => spec,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&spec, std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}
