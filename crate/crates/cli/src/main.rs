use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsradar::dictionaries::{build_sampling, mu_profile, welch_bound, FourierRange, SamplingSpec};
use dsradar::ds_codes::{catalog, equivalent_shift, verify_difference_set};
use dsradar::harness::{
    dry_run_summary, emit_plot_data, histogram, power_db, random_coherences, run_experiment, run_index, single_trial,
    ExperimentConfig, Model, PlotKind, RunSpec,
};
use dsradar::waveforms::Waveform;
use dsradar::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dsradar",
    version,
    about = "Difference-set sub-Nyquist pulse-Doppler radar toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Validate inputs and print problem sizes without computing.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Difference-set codes.
    #[command(subcommand)]
    Ds(DsCommand),
    /// Dictionary analysis.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Waveform analysis.
    #[command(subcommand)]
    Waveform(WaveformCommand),
    /// Scene synthesis.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Recover one trial with a single model.
    Recover {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Residual norm per pick (iteration 0 is the data norm); defaults to `<out stem>_diagnostics.csv`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment.
    Exper {
        /// Also write per-figure CSVs into this directory.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DsCommand {
    /// Check that residues form a difference set.
    Verify {
        #[arg(long)]
        modulus: u64,
        #[arg(long, value_delimiter = ',')]
        elements: Vec<u64>,
    },
    /// Print a catalog set and its centred sampling indices.
    Catalog { name: String },
}

#[derive(Subcommand)]
enum DictCommand {
    /// Cross-correlation profile of a partial-Fourier delay dictionary.
    Coherence {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long, default_value = "91-10-1")]
        ds: String,
        /// Delay grid order.
        #[arg(short = 'N', long = "grid")]
        grid: Option<usize>,
        /// Random draws for a coherence histogram (random scheme only).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
}

#[derive(Subcommand)]
enum WaveformCommand {
    /// Power spectrum `10 log10(|H(f)|²/T_p)`.
    Spectrum {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value = "91-10-1")]
        ds: String,
        /// PRI in seconds.
        #[arg(long, default_value_t = 10e-6)]
        pri: f64,
        /// Pulse width in seconds; defaults to the PRI.
        #[arg(long)]
        pw: Option<f64>,
        /// Bandwidth in Hz for rect and LFM; defaults to the DS-FCM bandwidth.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        /// Half-width of the frequency axis; defaults to the bandwidth.
        #[arg(long)]
        span: Option<f64>,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Draw the first trial's scene and write it as CSV.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Consecutive,
    Random,
    Ds,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rect,
    Lfm,
    Dsfcm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Standard,
    Structured,
    Df,
    ModifiedDf,
    NyquistReference,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Standard => Model::Standard,
            ModelArg::Structured => Model::Structured,
            ModelArg::Df => Model::Df,
            ModelArg::ModifiedDf => Model::ModifiedDf,
            ModelArg::NyquistReference => Model::NyquistReference,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.global.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Ds(DsCommand::Verify { modulus, elements }) => match verify_difference_set(elements, *modulus) {
            Ok(ds) => {
                emit(g, &format!("valid {}\n", ds.label()))?;
                Ok(ExitCode::SUCCESS)
            }
            Err(e) if e.is_validation() => {
                emit(g, &format!("invalid: {e}\n"))?;
                Ok(ExitCode::from(1))
            }
            Err(e) => Err(e),
        },
        Command::Ds(DsCommand::Catalog { name }) => {
            let ds = catalog(name)?;
            let join = |v: Vec<String>| v.join(",");
            let body = format!(
                "label,{}\nelements,{}\nindices,{}\n",
                ds.label(),
                join(ds.elements().iter().map(u64::to_string).collect()),
                join(equivalent_shift(&ds).iter().map(i64::to_string).collect())
            );
            emit(g, &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Dict(DictCommand::Coherence {
            scheme,
            ds,
            grid,
            trials,
            bins,
        }) => {
            coherence(g, *scheme, ds, *grid, *trials, *bins)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Waveform(WaveformCommand::Spectrum {
            kind,
            ds,
            pri,
            pw,
            bandwidth,
            points,
            span,
        }) => {
            let ds = catalog(ds)?;
            let pw = pw.unwrap_or(*pri);
            let bw = match bandwidth {
                Some(b) => *b,
                None => Waveform::ds_fcm(&ds, *pri, *pri)?.bandwidth_estimate()?,
            };
            let w = match kind {
                KindArg::Rect => Waveform::rect(pw, *pri, bw)?,
                KindArg::Lfm => Waveform::lfm(pw, *pri, bw)?,
                KindArg::Dsfcm => Waveform::ds_fcm(&ds, pw, *pri)?,
            };
            if *points < 2 {
                return Err(Error::InvalidParameter("--points must be at least 2".into()));
            }
            let span = span.unwrap_or(bw);
            let freqs: Vec<f64> = (0..*points)
                .map(|i| -span + 2.0 * span * i as f64 / (*points - 1) as f64)
                .collect();
            if g.dry_run {
                emit(g, &format!("points={points} span_hz={span}\n"))?;
                return Ok(ExitCode::SUCCESS);
            }
            let mut body = String::from("freq_hz,power_db\n");
            for (f, p) in freqs.iter().zip(power_db(&w, &freqs)?) {
                let _ = writeln!(body, "{f},{p}");
            }
            emit(g, &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sim(SimCommand::Run) => {
            let cfg = load_config(g)?;
            if g.dry_run {
                emit(g, &dry_run_summary(&cfg)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            let out = single_trial(&cfg, 0)?;
            emit(g, &out.scene.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Recover { model, diagnostics } => {
            let mut cfg = load_config(g)?;
            let model = Model::from(*model);
            let run = match run_index(&cfg, model) {
                Some(i) => i,
                None => {
                    cfg.runs.push(RunSpec {
                        model,
                        sampling: None,
                        waveform: None,
                    });
                    cfg.runs.len() - 1
                }
            };
            if g.dry_run {
                emit(g, &dry_run_summary(&cfg)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            let out = single_trial(&cfg, run)?;
            let mut map = String::from("m,n,re_amp,im_amp\n");
            for e in &out.map.entries {
                let _ = writeln!(map, "{},{},{},{}", e.m, e.n, e.amplitude.re, e.amplitude.im);
            }
            emit(g, &map)?;
            let mut diag = String::from("iter,residual_norm\n");
            for (i, r) in out.residual_history.iter().enumerate() {
                let _ = writeln!(diag, "{i},{r}");
            }
            match diagnostics.clone().or_else(|| g.out.as_deref().map(diagnostics_path)) {
                Some(path) => std::fs::write(path, diag)?,
                None => eprint!("{diag}"),
            }
            eprintln!("detected {} of {} targets", out.score.detections(), out.score.targets);
            Ok(ExitCode::SUCCESS)
        }
        Command::Exper { plot_dir } => {
            let cfg = load_config(g)?;
            if g.dry_run {
                emit(g, &dry_run_summary(&cfg)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            let table = run_experiment(&cfg)?;
            emit(g, &table.to_csv())?;
            if let Some(out) = &g.out {
                if !table.timings.is_empty() {
                    std::fs::write(sibling(out, "timing"), table.timing_csv())?;
                }
            }
            if let Some(dir) = plot_dir {
                emit_plot_data(&table, PlotKind::of(table.kind), dir)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn coherence(
    g: &Global,
    scheme: SchemeArg,
    ds: &str,
    grid: Option<usize>,
    trials: Option<usize>,
    bins: usize,
) -> Result<()> {
    let ds = catalog(ds)?;
    let n = grid.unwrap_or(ds.modulus() as usize);
    let k = ds.size();
    let seed = g.seed.unwrap_or(0);
    if g.dry_run {
        return emit(g, &format!("K={k} N={n}\n"));
    }
    if let Some(trials) = trials {
        if !matches!(scheme, SchemeArg::Random) {
            return Err(Error::InvalidParameter(
                "--trials applies to the random scheme only".into(),
            ));
        }
        let draws = random_coherences(n, k, trials, seed)?;
        let h = histogram(&draws, bins, welch_bound(n, k));
        let mut body = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(body, "{},{},{}", h.edges[i], h.edges[i + 1], c);
        }
        return emit(g, &body);
    }
    let half = (n / 2) as i64;
    let range = FourierRange::new(-half, n as i64 - 1 - half)?;
    let spec = match scheme {
        SchemeArg::Consecutive => SamplingSpec::Consecutive { count: k },
        SchemeArg::Random => SamplingSpec::Random { count: k, seed },
        SchemeArg::Ds => SamplingSpec::DifferenceSet(&ds),
    };
    let s = build_sampling(spec, n, range)?;
    let profile = mu_profile(&s.indices, n);
    let mut body = String::from("u,mu_of_u\n");
    for (u, mu) in profile.iter().enumerate() {
        let _ = writeln!(body, "{},{}", u + 1, mu);
    }
    let mu = profile.iter().copied().fold(0.0, f64::max);
    let _ = writeln!(body, "mu,welch\n{},{}", mu, welch_bound(n, k));
    emit(g, &body)
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(g: &Global, body: &str) -> Result<()> {
    match &g.out {
        Some(path) => Ok(std::fs::write(path, body)?),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// `dir/stem_<tag>.csv` next to `path`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{tag}.csv"))
}

fn diagnostics_path(path: &Path) -> PathBuf {
    sibling(path, "diagnostics")
}
