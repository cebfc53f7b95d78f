//! The `bdisc` command line: discover, control, suite, deploy, synth, plot.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 3 when a
//! run fails.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::data::{load_csv, write_csv, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::protocols::report::{regenerate_plots, write_deployment, write_suite, write_trial, TABLE_HEADER};
use crate::protocols::{run_deployment, run_suite, run_trial, TableRow, TrialKind};
use crate::seed::derive_seed;

pub use config::{config_keys, RunConfig, StreamConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bdisc", version, about = "Behavior discovery on motion snippets with novelty scoring")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Withhold one class from the labels and test whether it is found as novel.
    Discover(RunArgs),
    /// Negative control: drop the withheld class (if any) from the unlabeled pool too.
    Control(RunArgs),
    /// Discovery and control trials for every class, with both tables.
    Suite(RunArgs),
    /// Score a stream of unlabeled windows against an encoder trained once.
    Deploy(DeployArgs),
    /// Write a synthetic dataset CSV and its metadata sidecar.
    Synth(SynthArgs),
    /// Redraw the SVGs of stored trial directories.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Snippet CSV with a `.meta.json` sidecar.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic preset (2class, 5class, 9class) or definition JSON.
    #[arg(long)]
    synth: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set trial.tsne.n_iter=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Class id withheld from the labeled pool.
    #[arg(long)]
    withhold: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// HDR mass.
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo samples per density.
    #[arg(long)]
    mc: Option<usize>,
    /// O_c below this is novel.
    #[arg(long)]
    novelty_threshold: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Worker threads for `suite`.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct DeployArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Segments per window.
    #[arg(long)]
    window: Option<usize>,
    /// Offset between window starts.
    #[arg(long)]
    stride: Option<usize>,
    /// Total clusters; those beyond the known classes are free.
    #[arg(long)]
    k: Option<usize>,
    /// Snippet CSV holding the stream (labels ignored).
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Windows in a synthetic stream.
    #[arg(long)]
    windows: Option<usize>,
    /// Synthetic window filled with an unseen class.
    #[arg(long)]
    novel_window: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Preset name (2class, 5class, 9class) or definition JSON.
    #[arg(long, default_value = "5class")]
    spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; the sidecar goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Trial directory, or a suite directory whose trial subdirectories are redrawn.
    #[arg(long)]
    trial: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
            cfg.synth = None;
        }
        if let Some(s) = &self.synth {
            cfg.synth = Some(s.clone());
            cfg.data = None;
        }
        let t = &mut cfg.trial;
        if let Some(w) = self.withhold {
            t.withheld_class = Some(w);
        }
        if let Some(s) = self.seed {
            t.seed = s;
        }
        if let Some(a) = self.alpha {
            t.density.alpha = a;
        }
        if let Some(m) = self.mc {
            t.density.mc_samples = m;
        }
        if let Some(n) = self.novelty_threshold {
            t.density.novelty_threshold = n;
        }
        if let Some(e) = self.epochs {
            t.encoder.epochs = e;
        }
        if let Some(p) = self.perplexity {
            t.tsne.perplexity = p;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        for s in &self.set {
            cfg.set(s)?;
        }
        Ok(cfg)
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.data, &cfg.synth) {
        (Some(path), None) => load_csv(path),
        (None, Some(spec)) => SynthSpec::resolve(spec)?.generate(cfg.trial.seed),
        _ => Err(Error::Config("give exactly one of --data and --synth".into())),
    }
}

fn check_class(d: &Dataset, class: Option<u32>) -> Result<()> {
    match class {
        Some(c) if !d.populated_classes().contains(&c) => Err(Error::Config(format!(
            "class {c} has no rows (classes: {:?})",
            d.populated_classes()
        ))),
        _ => Ok(()),
    }
}

fn fmt_row(row: &TableRow, kind: TrialKind) -> String {
    let f = |v: Option<f64>| v.map_or("NA".into(), |v| format!("{v:.3}"));
    format!(
        "{}\t{}\t{}\t{}\t{}",
        row.ind_name,
        row.rem_class.map_or("-".into(), |c| c.to_string()),
        row.disc_class.map_or("NA".into(), |c| c.to_string()),
        if kind == TrialKind::Control { "-".into() } else { f(row.acc) },
        f(row.cnt_score)
    )
}

fn cmd_trial(args: &RunArgs, kind: TrialKind, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    if kind == TrialKind::Discovery && cfg.trial.withheld_class.is_none() {
        return Err(Error::Config("existing-novel requires withheld class (--withhold <CLASS>)".into()));
    }
    let d = load_dataset(&cfg)?;
    check_class(&d, cfg.trial.withheld_class)?;
    let r = run_trial(&d, &cfg.trial, kind)?;
    let files = write_trial(&cfg.out, &r)?;
    let _ = writeln!(out, "{}", TABLE_HEADER.join("\t"));
    let _ = writeln!(out, "{}", fmt_row(&r.row, kind));
    let _ = writeln!(
        out,
        "novel: {}\nreport: {}",
        r.summary.novel,
        files.report.display()
    );
    Ok(())
}

fn cmd_suite(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    let d = load_dataset(&cfg)?;
    let suite = run_suite(&d, &cfg.trial, cfg.jobs)?;
    write_suite(&cfg.out, &suite, &cfg.trial, &d.classes)?;
    for kind in [TrialKind::Discovery, TrialKind::Control] {
        let _ = writeln!(out, "{}\n{}", kind.as_str(), TABLE_HEADER.join("\t"));
        for e in suite.of_kind(kind) {
            match &e.result {
                Ok(r) => {
                    let _ = writeln!(out, "{}", fmt_row(&r.row, kind));
                }
                Err(msg) => {
                    let _ = writeln!(out, "{}:{}\tfailed: {msg}", e.class, d.class_name(e.class));
                }
            }
        }
    }
    let _ = writeln!(out, "tables: {}", cfg.out.join("suite.csv").display());
    Ok(())
}

fn cmd_deploy(args: &DeployArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    // deploy-specific flags win over the config file but not over --set
    if let Some(w) = args.window {
        cfg.deploy.window = w;
    }
    if let Some(s) = args.stride {
        cfg.deploy.stride = s;
    }
    if let Some(k) = args.k {
        cfg.deploy.k = k;
    }
    if let Some(s) = &args.stream {
        cfg.stream.csv = Some(s.clone());
    }
    if let Some(n) = args.windows {
        cfg.stream.windows = n;
    }
    if let Some(n) = args.novel_window {
        cfg.stream.novel_window = Some(n);
    }
    for s in &args.run.set {
        cfg.set(s)?;
    }
    cfg.validate()?;
    let d = load_dataset(&cfg)?;
    let stream = match (&cfg.stream.csv, &cfg.synth) {
        (Some(path), _) => load_csv(path)?.snippets,
        (None, Some(spec)) => SynthSpec::resolve(spec)?.stream(
            cfg.stream.windows,
            cfg.deploy.window,
            cfg.stream.novel_window,
            derive_seed(cfg.trial.seed, "stream"),
        )?,
        (None, None) => return Err(Error::Config("deploy with --data needs --stream <csv>".into())),
    };
    let r = run_deployment(&d, &stream, &cfg.trial, &cfg.deploy)?;
    write_deployment(&cfg.out, &r, &cfg.trial, &d.classes)?;
    let _ = writeln!(
        out,
        "window={} stride={} k={} known={} free={}",
        cfg.deploy.window,
        cfg.deploy.stride,
        cfg.deploy.k,
        r.known_classes.len(),
        r.n_free
    );
    for w in &r.windows {
        let score = w.analysis.containment.rows.iter().map(|x| x.score).min_by(f64::total_cmp);
        let _ = writeln!(
            out,
            "window {:3}  start {:5}  min O_c {}{}",
            w.index,
            w.start,
            score.map_or("NA".into(), |s| format!("{s:.3}")),
            if w.novel { "  NOVEL" } else { "" }
        );
    }
    let _ = writeln!(out, "novel windows: {:?}", r.novel_windows());
    Ok(())
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let d = SynthSpec::resolve(&args.spec)?.generate(args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_csv(&d, &args.out)?;
    let _ = writeln!(out, "{} snippets written to {}", d.len(), args.out.display());
    Ok(())
}

fn trial_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("report.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.json").is_file() && p.join("confusion.csv").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("{} holds no trial report", dir.display())));
    }
    Ok(dirs)
}

fn cmd_plot(args: &PlotArgs, out: &mut dyn Write) -> Result<()> {
    for dir in trial_dirs(&args.trial)? {
        for path in regenerate_plots(&dir)? {
            let _ = writeln!(out, "{}", path.display());
        }
    }
    Ok(())
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let style = if no_color() {
        env_logger::WriteStyle::Never
    } else {
        env_logger::WriteStyle::Auto
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .write_style(style)
        .format_timestamp(None)
        .try_init();
}

fn no_color() -> bool {
    std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty())
}

fn command() -> clap::Command {
    let keys = config_keys();
    let mut cmd = Cli::command();
    for name in ["discover", "control", "suite", "deploy"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_long_help(keys.clone()));
    }
    if no_color() {
        cmd = cmd.color(clap::ColorChoice::Never);
    }
    cmd
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut cmd = command();
    cmd.build();
    let matches = match cmd.clone().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let (name, result) = match &cli.command {
        Command::Discover(a) => ("discover", cmd_trial(a, TrialKind::Discovery, &mut out)),
        Command::Control(a) => ("control", cmd_trial(a, TrialKind::Control, &mut out)),
        Command::Suite(a) => ("suite", cmd_suite(a, &mut out)),
        Command::Deploy(a) => ("deploy", cmd_deploy(a, &mut out)),
        Command::Synth(a) => ("synth", cmd_synth(a, &mut out)),
        Command::Plot(a) => ("plot", cmd_plot(a, &mut out)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.is_config_error() => {
            eprintln!("error: {e}");
            if let Some(sub) = cmd.find_subcommand_mut(name) {
                eprintln!("\n{}", sub.render_usage());
            }
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
