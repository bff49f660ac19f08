use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stacp::config::{ExperimentConfig, Overrides};
use stacp::dataset::{write_checkins, DatasetFormat};
use stacp::experiment::{run_experiment, run_sweep_to_disk, Stage, SweepSpec};
use stacp::pipeline::Method;
use stacp::synth::{generate, SynthSpec};
use stacp::{Error, Result};

/// Spatio-temporal activity-center POI recommendation.
///
/// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "stacp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse the dataset, report rejected rows and write a normalized copy.
    Ingest(RunArgs),
    /// Split chronologically and write the three parts plus the catalog.
    Split(RunArgs),
    /// Fit factor models and activity centers and write checkpoints.
    Train(RunArgs),
    /// Write top-N recommendations for every configured method.
    Recommend(RunArgs),
    /// Run every stage and write the evaluation report.
    Evaluate(RunArgs),
    /// Evaluate over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Axis and grid, e.g. `lambda=0,0.5,1` (axes: train-fraction, d, alpha, lambda).
        #[arg(long)]
        sweep: SweepSpec,
    },
    /// Generate a synthetic dataset with planted activity centers.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Check-in file; overrides `dataset.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Activity-region radius in km.
    #[arg(long)]
    d: Option<f64>,
    /// Minimum check-in share for a region to become a center.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the working state in the context score.
    #[arg(long)]
    lambda: Option<f64>,
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated methods: stacp, no-ctx, no-tc, toppopular, pfm, pfmpd.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            data: self.data.clone(),
            d: self.d,
            alpha: self.alpha,
            lambda: self.lambda,
            k: self.k,
            methods: self.methods.clone(),
        });
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output check-in file; planted centers go to `<out>.planted.tsv`.
    #[arg(long)]
    out: PathBuf,
    /// Output layout: gowalla, foursquare or custom.
    #[arg(long, default_value = "custom")]
    format: String,
    #[arg(long, default_value_t = SynthSpec::default().users)]
    users: usize,
    #[arg(long, default_value_t = SynthSpec::default().pois)]
    pois: usize,
    #[arg(long, default_value_t = SynthSpec::default().centers_per_state)]
    centers_per_state: usize,
    #[arg(long, default_value_t = SynthSpec::default().radius_km)]
    radius: f64,
    #[arg(long, default_value_t = SynthSpec::default().visits_per_user)]
    visits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().extent_km)]
    extent: f64,
    #[arg(long, default_value_t = SynthSpec::default().working_share)]
    working_share: f64,
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        users: a.users,
        pois: a.pois,
        centers_per_state: a.centers_per_state,
        radius_km: a.radius,
        visits_per_user: a.visits,
        seed: a.seed,
        extent_km: a.extent,
        working_share: a.working_share,
        ..SynthSpec::default()
    };
    let format = DatasetFormat::profile(&a.format).ok_or_else(|| Error::Config(format!("unknown format {:?}", a.format)))?;
    let data = generate(&spec)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_checkins(&a.out, &data.checkins, &format)?;
    let mut planted = String::from("user_id\tstate\tanchor_poi\tlat\tlon\n");
    for p in &data.planted {
        for state in stacp_core::TemporalState::ALL {
            for &l in p.for_state(state) {
                let c = data.coords[l];
                let _ = writeln!(planted, "{}\t{}\t{}\t{}\t{}", p.user_id, state.name(), data.poi_ids[l], c.lat, c.lon);
            }
        }
    }
    let mut planted_path = a.out.clone().into_os_string();
    planted_path.push(".planted.tsv");
    let planted_path = PathBuf::from(planted_path);
    std::fs::write(&planted_path, planted).map_err(|e| Error::io(&planted_path, e))?;
    println!("wrote {} check-ins to {}", data.checkins.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let stage = match &cli.command {
        Command::Ingest(_) => Stage::Ingest,
        Command::Split(_) => Stage::Split,
        Command::Train(_) => Stage::Train,
        Command::Recommend(_) => Stage::Recommend,
        Command::Evaluate(_) => Stage::Evaluate,
        Command::Sweep { run, sweep } => {
            let cfg = run.config()?;
            let (csv, points) = run_sweep_to_disk(&cfg, sweep)?;
            println!("{} grid points written to {}", points.len(), csv.display());
            return Ok(());
        }
        Command::Synth(a) => return synth(a),
    };
    let (Command::Ingest(args) | Command::Split(args) | Command::Train(args) | Command::Recommend(args) | Command::Evaluate(args)) =
        &cli.command
    else {
        unreachable!("handled above")
    };
    let cfg = args.config()?;
    let out = run_experiment(&cfg, stage)?;
    println!("{} check-ins; stages completed: {}", out.checkins.len(), out.completed.iter().map(|s| s.name()).collect::<Vec<_>>().join(", "));
    if let Some(report) = &out.report {
        print!("{}", stacp::eval::render_text(report));
    }
    println!("artifacts in {}", cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
