use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gfmatch::harness::{
    self, bounds, emit_fixtures, lazier, matching_sim, pose_opt, Check, ErrorRatioDefinition, ExperimentSpec, Report,
};
use gfmatch::simworld::fixture::verify_fixture;
use gfmatch::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

/// Lazier-greedy error ratio allowed by `--check`.
const ERROR_RATIO_THRESHOLD: f64 = 0.02;
/// Allowed excess of active-matching pose RMS over matching everything.
const MATCHING_RMS_TOLERANCE: f64 = 0.30;
const FULL_SCALE_WORLDS: usize = 100;

#[derive(Parser, Debug)]
#[command(name = "gfmatch", version, about = "Good-feature selection and active matching experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; unset keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed for every derived trial seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per grid point (worlds for lazier-bench).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Full-size runs: 300 trials per grid point, 100 lazier worlds.
    #[arg(long, global = true)]
    full_scale: bool,
    /// Evaluate acceptance thresholds and exit with 3 on a violation.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pose error of each selection metric versus random and all features.
    PoseOpt,
    /// Lazier greedy versus lazy greedy: evaluations, time and error ratio.
    LazierBench {
        /// Discrepancy measure used for `mean_error_ratio` and `--check`.
        #[arg(long, value_parser = parse_definition)]
        error_ratio: Option<ErrorRatioDefinition>,
    },
    /// Active matching followed by pose optimization.
    Matching,
    /// Lazier-greedy guarantee curves over the epsilon grid.
    Bounds,
    /// Write or verify scenario fixtures.
    #[command(subcommand)]
    Fixtures(FixtureCommand),
}

#[derive(Subcommand, Debug)]
enum FixtureCommand {
    /// Write scenario fixtures into a directory.
    Emit {
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Check that fixtures regenerate bit for bit from their configs.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn parse_definition(s: &str) -> Result<ErrorRatioDefinition, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_spec(common: &Common) -> Result<ExperimentSpec, Error> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentSpec::from_json(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if common.full_scale {
        spec.trials = harness::FULL_SCALE_TRIALS;
        spec.lazier.worlds = FULL_SCALE_WORLDS;
    }
    if let Some(t) = common.trials {
        spec.trials = t;
        spec.lazier.worlds = t;
    }
    if let Some(seed) = common.seed {
        spec.base_seed = seed;
    }
    if let Some(w) = common.workers {
        spec.workers = w;
    }
    Ok(spec)
}

fn write_report(report: &Report, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            report.write_csv(io::BufWriter::new(file))
        }
        None => report.write_csv(io::stdout().lock()),
    }
}

fn report_checks(checks: &[Check]) -> bool {
    let mut err = io::stderr().lock();
    for c in checks {
        let _ = writeln!(err, "{c}");
    }
    checks.iter().all(|c| c.passed)
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut spec = load_spec(&cli.common)?;
    let out = cli.common.out.as_deref();
    let (report, checks): (Report, fn(&Report) -> Vec<Check>) = match cli.command {
        Command::PoseOpt => (harness::run_pose_opt_metrics(&spec)?, pose_opt::check),
        Command::LazierBench { error_ratio } => {
            if let Some(d) = error_ratio {
                spec.lazier.error_ratio = d;
            }
            (harness::run_lazier_benchmark(&spec)?, |r| lazier::check(r, ERROR_RATIO_THRESHOLD))
        }
        Command::Matching => (harness::run_matching_sim(&spec)?, |r| matching_sim::check(r, MATCHING_RMS_TOLERANCE)),
        Command::Bounds => (harness::run_bounds_curve(&spec)?, bounds::check),
        Command::Fixtures(cmd) => return run_fixtures(&mut spec, cmd),
    };
    write_report(&report, out)?;
    Ok(!cli.common.check || report_checks(&checks(&report)))
}

fn run_fixtures(spec: &mut ExperimentSpec, cmd: FixtureCommand) -> Result<bool, Error> {
    match cmd {
        FixtureCommand::Emit { dir, count } => {
            if let Some(c) = count {
                spec.fixtures.count = c;
            }
            fs::create_dir_all(&dir)?;
            for (name, text) in emit_fixtures(spec)? {
                let path = dir.join(name);
                fs::write(&path, text)?;
                println!("{}", path.display());
            }
            Ok(true)
        }
        FixtureCommand::Verify { files } => {
            let mut ok = true;
            for path in files {
                let text = fs::read_to_string(&path)?;
                match verify_fixture(&text) {
                    Ok(_) => println!("ok {}", path.display()),
                    Err(e @ Error::Parse { .. }) => return Err(Error::Config(format!("{}: {e}", path.display()))),
                    Err(e) => {
                        println!("mismatch {}: {e}", path.display());
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_THRESHOLD),
        Err(e @ (Error::Config(_) | Error::InvalidInput(_))) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
