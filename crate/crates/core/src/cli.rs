//! The `pointrep` command line.
//!
//! Every artifact is written to a temporary file next to its destination and
//! renamed into place. Re-running a command with the same flags and seed
//! produces byte-identical files, whatever `--threads` is.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{invalid, Error, Result};
use crate::estimator::{
    apply_threshold, coefficient_stats, reconstruct, thresholds, EstimatorConfig, ProcessSample,
    ThresholdMode, VarianceMode,
};
use crate::haar::{HaarIndex, MotherLevels};
use crate::ingest;
use crate::risk;
use crate::simulate::{self, ParentMode, SampleMetadata, SignalSpec, SimConfig};
use crate::stepfn::StepFunction;

#[derive(Debug, Parser)]
#[command(name = "pointrep", version, about = "Wavelet thresholding estimates of parent/child reproduction functions")]
pub struct Cli {
    /// Worker threads for replications and per-coefficient work.
    #[arg(long, global = true, env = "POINTREP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one sample and write it as `role,position` CSV.
    Simulate(SimulateArgs),
    /// Estimate the reproduction function from a sample or position files.
    Estimate(EstimateArgs),
    /// Monte Carlo risk surface over a (gamma, delta) grid.
    Calibrate(CalibrateArgs),
    /// Monte Carlo mean and variance of selected coefficient estimates.
    Validate(ValidateArgs),
    /// Exact motif occurrences on both strands of a FASTA file.
    ScanMotif(ScanMotifArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Built-in signal: signal1, signal2 or signal3.
    #[arg(long, default_value = "signal1")]
    pub signal: String,
    /// Read the reproduction function from a `left,right,value` CSV instead.
    #[arg(long, conflicts_with = "signal")]
    pub signal_file: Option<PathBuf>,
    /// Amplitude of the built-in signal.
    #[arg(long, default_value_t = 4.0)]
    pub nu: f64,
    /// Horizon T.
    #[arg(long = "T", default_value_t = 10_000.0)]
    pub horizon: f64,
    /// Parent intensity (Poisson parents). Defaults to 0.1 unless --n is given.
    #[arg(long, conflicts_with = "n")]
    pub mu: Option<f64>,
    /// Fixed number of uniform parents.
    #[arg(long)]
    pub n: Option<usize>,
    /// Orphan intensity on [0, T + 1].
    #[arg(long, default_value_t = 0.0)]
    pub orphans: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let signal = match &self.signal_file {
            Some(path) => SignalSpec::Custom(StepFunction::read_csv(open(path)?)?),
            None => SignalSpec::Builtin {
                signal: self.signal.parse()?,
                amplitude: self.nu,
            },
        };
        let parents = match (self.n, self.mu) {
            (Some(n), _) => ParentMode::Fixed(n),
            (None, mu) => ParentMode::Poisson(mu.unwrap_or(0.1)),
        };
        let mut config = SimConfig::new(self.horizon, parents, signal, self.seed);
        config.orphan_intensity = self.orphans;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdKind {
    Practical,
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceKind {
    /// Empirical quadratic statistic.
    Hat,
    /// Inflated upper estimate.
    Tilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotherKind {
    /// Mothers up to level j0 - 1.
    BelowMax,
    /// Mothers up to level j0.
    ThroughMax,
}

#[derive(Debug, Args)]
pub struct EstArgs {
    /// Maximum resolution level j0.
    #[arg(long, default_value_t = 5)]
    pub j0: u32,
    /// Half-width A of the estimation window [-A, A].
    #[arg(long = "A", default_value_t = 10)]
    pub half_width: u32,
    #[arg(long, default_value_t = 0.18)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2.4, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "practical")]
    pub threshold_mode: ThresholdKind,
    /// Constant d of the theoretical threshold.
    #[arg(long, default_value_t = 1.0)]
    pub d_const: f64,
    /// Defaults to `hat` for practical and `tilde` for theoretical thresholds.
    #[arg(long, value_enum)]
    pub variance_mode: Option<VarianceKind>,
    /// Defaults to `below-max` for practical and `through-max` for theoretical thresholds.
    #[arg(long, value_enum)]
    pub mother_levels: Option<MotherKind>,
}

impl EstArgs {
    fn config(&self) -> EstimatorConfig {
        let theoretical = self.threshold_mode == ThresholdKind::Theoretical;
        let threshold = if theoretical {
            ThresholdMode::Theoretical {
                d_const: self.d_const,
            }
        } else {
            ThresholdMode::Practical { delta: self.delta }
        };
        let variance = match self.variance_mode {
            Some(VarianceKind::Hat) => VarianceMode::Empirical,
            Some(VarianceKind::Tilde) => VarianceMode::Inflated,
            None if theoretical => VarianceMode::Inflated,
            None => VarianceMode::Empirical,
        };
        let mothers = match self.mother_levels {
            Some(MotherKind::BelowMax) => MotherLevels::BelowMax,
            Some(MotherKind::ThroughMax) => MotherLevels::ThroughMax,
            None if theoretical => MotherLevels::ThroughMax,
            None => MotherLevels::BelowMax,
        };
        EstimatorConfig {
            max_level: self.j0,
            half_width: self.half_width,
            mothers,
            gamma: self.gamma,
            threshold,
            variance,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Sample CSV; metadata goes to `<output>.json`.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sample CSV written by `simulate` (or in the same format).
    #[arg(long, required_unless_present = "parents", conflicts_with_all = ["parents", "children"])]
    pub sample: Option<PathBuf>,
    /// Parent positions, one per line.
    #[arg(long, requires = "children")]
    pub parents: Option<PathBuf>,
    /// Child positions, one per line.
    #[arg(long, requires = "parents")]
    pub children: Option<PathBuf>,
    /// Divide position-file coordinates by this factor (1000 for kilobases).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Horizon T; read from the sample's `.json` sidecar when omitted.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub est: EstArgs,
    /// Keep every coefficient (no thresholding).
    #[arg(long)]
    pub keep_all: bool,
    /// Built-in signal to include as the truth column of the plot data.
    #[arg(long)]
    pub truth: Option<String>,
    /// Amplitude of the truth signal.
    #[arg(long, default_value_t = 4.0)]
    pub truth_nu: f64,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub est: EstArgs,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0.02:1:0.02")]
    pub gamma_grid: String,
    /// `start:stop:step` or a comma-separated list (values of d in theoretical mode).
    #[arg(long, default_value = "0:4:0.2")]
    pub delta_grid: String,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Surface CSV.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Index `j,k` to check (repeatable); j = -1 for fathers.
    #[arg(long = "lambda", value_parser = parse_index, allow_hyphen_values = true)]
    pub lambdas: Vec<HaarIndex>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Also estimate the oracle risk on the (j0, A) grid.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 5)]
    pub j0: u32,
    #[arg(long = "A", default_value_t = 10)]
    pub half_width: u32,
    /// Report CSV.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanMotifArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    #[arg(long)]
    pub motif: String,
    /// Sentinel bases between the forward strand and its reverse complement.
    #[arg(long, default_value_t = 10_000)]
    pub spacer: usize,
    /// Divide positions by this factor (1000 for kilobases).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Position file, one per line.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_index(s: &str) -> std::result::Result<HaarIndex, String> {
    let (j, k) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `j,k`, got `{s}`"))?;
    let j: i32 = j.trim().parse().map_err(|e| format!("level `{j}`: {e}"))?;
    let k: i64 = k.trim().parse().map_err(|e| format!("shift `{k}`: {e}"))?;
    if j < -1 {
        return Err(format!("level {j} is below -1"));
    }
    Ok(HaarIndex { level: j, shift: k })
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let number = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| invalid("grid", format!("`{s}`: {e}")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => risk::linear_grid(number(start)?, number(stop)?, number(step)?),
        [_] => spec.split(',').map(number).collect(),
        _ => Err(invalid("grid", format!("expected start:stop:step or a list, got `{spec}`"))),
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file in the destination directory, then
/// renames it over `path`.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn sidecar_path(sample: &Path) -> PathBuf {
    let mut s = sample.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Plot-ready rows `x,estimate[,truth]`: at every breakpoint of either
/// function, one row with the left limits followed by one with the values.
pub fn emit_reconstruction_plotdata<W: Write>(
    h_tilde: &StepFunction,
    truth: Option<&StepFunction>,
    out: W,
) -> Result<()> {
    let mut xs: Vec<f64> = h_tilde
        .breakpoints()
        .iter()
        .chain(truth.map(|t| t.breakpoints()).unwrap_or(&[]))
        .copied()
        .collect();
    xs.sort_unstable_by(f64::total_cmp);
    xs.dedup();
    if xs.is_empty() {
        xs.push(0.0);
    }
    let mut wtr = csv::Writer::from_writer(out);
    match truth {
        Some(_) => wtr.write_record(["x", "estimate", "truth"])?,
        None => wtr.write_record(["x", "estimate"])?,
    }
    for &x in &xs {
        for (est, tru) in [
            (h_tilde.left_limit(x), truth.map(|t| t.left_limit(x))),
            (h_tilde.eval(x), truth.map(|t| t.eval(x))),
        ] {
            let mut rec = vec![x.to_string(), est.to_string()];
            if let Some(t) = tru {
                rec.push(t.to_string());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand.
///
/// Returns 0 on success, 2 on flag errors and 1 on data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(invalid("threads", "need at least one thread")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(invalid("threads", e.to_string())),
        },
        None => dispatch(&cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::ScanMotif(a) => cmd_scan_motif(a),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = args.sim.config()?;
    let sample = simulate::simulate(&config)?;
    write_atomic(&args.output, |w| simulate::write_sample_csv(&sample, w))?;
    let meta = SampleMetadata {
        horizon: config.horizon,
        n: sample.n_parents(),
        seed: Some(config.seed),
        signal: Some(config.signal.label()),
    };
    write_atomic(&sidecar_path(&args.output), |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        writeln!(w).map_err(|source| Error::Io {
            path: args.output.clone(),
            source,
        })
    })?;
    println!(
        "simulated {} parents and {} children on [0, {}]",
        sample.n_parents(),
        sample.n_children(),
        config.horizon
    );
    Ok(())
}

fn load_sample(args: &EstimateArgs) -> Result<ProcessSample> {
    if let Some(path) = &args.sample {
        let (parents, children) = simulate::read_sample_csv(open(path)?)?;
        let horizon = match args.horizon {
            Some(t) => t,
            None => {
                let side = sidecar_path(path);
                if !side.exists() {
                    return Err(invalid(
                        "T",
                        format!("no --T given and no metadata at {}", side.display()),
                    ));
                }
                let meta: SampleMetadata = serde_json::from_str(&read_to_string(&side)?)?;
                meta.horizon
            }
        };
        return ProcessSample::new(parents, children, horizon);
    }
    let (Some(pp), Some(cp)) = (&args.parents, &args.children) else {
        return Err(invalid("sample", "give --sample or both --parents and --children"));
    };
    let horizon = args
        .horizon
        .ok_or_else(|| invalid("T", "--T is required with position files"))?;
    let parents = ingest::read_positions(&read_to_string(pp)?, &pp.display().to_string())?;
    let children = ingest::read_positions(&read_to_string(cp)?, &cp.display().to_string())?;
    let parents = ingest::rescale(&parents, args.scale)?;
    let children = ingest::rescale(&children, args.scale)?;
    ingest::to_sample(&parents, &children, horizon)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let sample = load_sample(args)?;
    let config = args.est.config();
    config.validate()?;
    let grid = config.grid()?;
    let stats = coefficient_stats(&sample, &grid, config.gamma)?;
    let eta = if args.keep_all {
        vec![0.0; stats.rows.len()]
    } else {
        thresholds(&stats, &config)?
    };
    let table = apply_threshold(stats, &eta);
    let h_tilde = reconstruct(&table);
    let truth = args
        .truth
        .as_deref()
        .map(|name| simulate::builtin_signal(name, args.truth_nu))
        .transpose()?;

    fs::create_dir_all(&args.output).map_err(|source| Error::Io {
        path: args.output.clone(),
        source,
    })?;
    write_atomic(&args.output.join("coefficients.csv"), |w| table.write_csv(w))?;
    write_atomic(&args.output.join("reconstruction.csv"), |w| h_tilde.write_csv(w))?;
    write_atomic(&args.output.join("plot.csv"), |w| {
        emit_reconstruction_plotdata(&h_tilde, truth.as_ref(), w)
    })?;
    println!(
        "n = {}, N = {}, T = {}: kept {} of {} coefficients",
        sample.n_parents(),
        sample.n_children(),
        sample.horizon(),
        table.kept_count(),
        table.rows.len()
    );
    if let Some(t) = &truth {
        println!("squared L2 error vs truth: {}", risk::l2_risk(&h_tilde, t));
    }
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let sim = args.sim.config()?;
    let est = args.est.config();
    let gammas = parse_grid(&args.gamma_grid)?;
    let deltas = parse_grid(&args.delta_grid)?;
    let surface = risk::risk_surface(&sim, &est, &gammas, &deltas, args.reps)?;
    write_atomic(&args.output, |w| surface.write_csv(w))?;
    let best = surface.best();
    println!(
        "{} cells x {} reps; lowest mean risk {} (stderr {}) at gamma = {}, delta = {}",
        surface.cells.len(),
        surface.reps,
        best.mean_risk,
        best.stderr,
        best.gamma,
        best.delta
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let sim = args.sim.config()?;
    let lambdas = if args.lambdas.is_empty() {
        vec![
            HaarIndex::father(0),
            HaarIndex::mother(0, 0),
            HaarIndex::mother(2, 3),
        ]
    } else {
        args.lambdas.clone()
    };
    let rows = risk::mc_validate(&sim, &lambdas, args.reps)?;
    write_atomic(&args.output, |w| risk::write_validation_csv(&rows, w))?;
    for r in &rows {
        let z = if r.stderr > 0.0 {
            (r.mean - r.true_beta) / r.stderr
        } else {
            0.0
        };
        println!(
            "{}: true {} mean {} stderr {} (z = {:.2}) var {}",
            r.index, r.true_beta, r.mean, r.stderr, z, r.variance
        );
    }
    if args.oracle {
        let grid = crate::haar::IndexGrid::new(args.j0, args.half_width, MotherLevels::BelowMax)?;
        println!("oracle risk: {}", risk::oracle_risk(&sim, &grid, args.reps)?);
    }
    Ok(())
}

fn cmd_scan_motif(args: &ScanMotifArgs) -> Result<()> {
    let text = read_to_string(&args.fasta)?;
    let seq = ingest::parse_fasta(&text);
    let occ = ingest::scan_sequence(&seq, &args.motif, args.spacer)?;
    let occ = ingest::rescale(&occ, args.scale)?;
    write_atomic(&args.output, |w| {
        occ.write(w).map_err(|source| Error::Io {
            path: args.output.clone(),
            source,
        })
    })?;
    println!(
        "{} occurrences of {} over a virtual sequence of {} bases",
        occ.len(),
        args.motif,
        2 * seq.len() + args.spacer
    );
    Ok(())
}
