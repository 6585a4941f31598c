//! `tripsense` command-line tool.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use config::{
    parse_quantizer, parse_slot, parse_weights, EnsembleArg, EvalMode, PreviousArg, RunConfig, StrategyArg,
};
use tripsense::domain::SlotWidth;
use tripsense::quantize::QuantizerSpec;

/// Bad flags, bad configuration or missing inputs; exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "tripsense", version, about = "Activity recognition for travel-survey stop points")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    #[arg(long, value_name = "CSV")]
    stops: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    profiles: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pois: Option<PathBuf>,
    /// POI category mapping (JSON).
    #[arg(long, value_name = "JSON")]
    mapping: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// grid:<m>, grid:<w>x<h>, voronoi:<k> or circular:<m>.
    #[arg(long, value_parser = parse_quantizer)]
    quantizer: Option<QuantizerSpec>,
    /// Time slot width in minutes.
    #[arg(long, value_parser = parse_slot, value_name = "MINUTES")]
    slot: Option<SlotWidth>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleArg>,
    #[arg(long, value_name = "N")]
    trees: Option<usize>,
    #[arg(long, value_name = "N")]
    min_leaf: Option<usize>,
    /// Seed of the tree ensembles.
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-user, gender, age and user weights, comma separated.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<[f64; 4]>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city with planted activity patterns.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Apply the cleaning rules to a stops file.
    Clean {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train a fusion model bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Train on the first K days of each user only.
        #[arg(long)]
        k: Option<usize>,
        /// Bundle path.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Predict activities of stops with a trained bundle.
    Predict {
        #[arg(long, value_name = "JSON")]
        bundle: PathBuf,
        #[arg(long, value_name = "CSV")]
        stops: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        profiles: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Chronological, streaming or grid evaluation.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        mode: Option<EvalMode>,
        #[arg(long)]
        k: Option<usize>,
        /// Previous-label source for the transition feature.
        #[arg(long, value_enum)]
        previous: Option<PreviousArg>,
        /// Evaluate every quantizer and slot-width combination.
        #[arg(long)]
        grid: bool,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        for (slot, flag) in [
            (&mut d.stops, &self.stops),
            (&mut d.profiles, &self.profiles),
            (&mut d.pois, &self.pois),
            (&mut d.mapping, &self.mapping),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        if let Some(q) = self.quantizer {
            m.quantizer = q;
        }
        if let Some(s) = self.slot {
            m.slot_width = s;
        }
        if let Some(s) = self.strategy {
            m.strategy = s.into();
        }
        if let Some(e) = self.ensemble {
            m.forest.mode = e.into();
        }
        if let Some(n) = self.trees {
            m.forest.n_trees = n;
        }
        if let Some(n) = self.min_leaf {
            m.forest.min_leaf = n;
        }
        if let Some(s) = self.seed {
            m.forest.seed = s;
        }
        if let Some(w) = self.weights {
            m.weights = w;
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, UsageError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    match &cli.command {
        Command::Synth { seed, users, days, .. } => {
            if let Some(s) = seed {
                cfg.synth.seed = *s;
            }
            if let Some(u) = users {
                cfg.synth.users = *u;
            }
            if let Some(d) = days {
                cfg.synth.days_per_user = *d;
            }
        }
        Command::Clean { data, .. } => data.apply(&mut cfg),
        Command::Train { data, model, k, .. } => {
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            if let Some(k) = k {
                cfg.eval.k = *k;
            }
        }
        Command::Predict { stops, profiles, .. } => {
            if stops.is_some() {
                cfg.data.stops.clone_from(stops);
            }
            if profiles.is_some() {
                cfg.data.profiles.clone_from(profiles);
            }
        }
        Command::Eval {
            data,
            model,
            mode,
            k,
            previous,
            ..
        } => {
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            if let Some(m) = mode {
                cfg.eval.mode = *m;
            }
            if let Some(k) = k {
                cfg.eval.k = *k;
            }
            if let Some(p) = previous {
                cfg.eval.previous = (*p).into();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot start thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Synth { out, .. } => commands::synth(&cfg, out),
        Command::Clean { out, .. } => commands::clean(&cfg, out),
        Command::Train { out, k, .. } => commands::train(&cfg, out, k.is_some()),
        Command::Predict { bundle, out, .. } => commands::predict(&cfg, bundle, out),
        Command::Eval { out, grid, .. } => commands::eval(&cfg, out, *grid),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<tripsense::Error>() {
            return match e {
                tripsense::Error::InvalidParameter(_) => 1,
                tripsense::Error::Invariant(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let default_level = if cli.quiet { "warn" } else { "info" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
