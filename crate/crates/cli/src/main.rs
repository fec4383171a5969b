use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghz_purify::montecarlo::PipelineKind;
use ghz_purify::scalar::{parse_rational, Rational};
use ghz_purify_cli::config::parse_engines;
use ghz_purify_cli::{
    cmd_curves, cmd_explain, cmd_mc, cmd_run, CliError, Engine, Overrides, ScenarioConfig, Verdict,
};

#[derive(Parser)]
#[command(
    name = "ghz-purify",
    version,
    about = "Exact and sampled GHZ purification scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Yield and fidelity curves of the three-photon scheme as CSV.
    Curves(Common),
    /// Run every selected engine on a scenario and cross-check them.
    Run(Common),
    /// Dump every enumerated branch with its probability and fate.
    Explain(Common),
    /// Monte Carlo estimates with standard errors as CSV.
    Mc(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Symmetric-noise target fidelity, e.g. 0.7 or 7/10.
    #[arg(long, value_parser = rational)]
    f0: Option<Rational>,
    /// Photons per state.
    #[arg(long)]
    n: Option<usize>,
    /// conventional, recycling, link, phaseflip or full-mepp.
    #[arg(long)]
    protocol: Option<PipelineKind>,
    /// Comma-separated engines: analytic, enumerate, montecarlo.
    #[arg(long, value_parser = engine_list)]
    engines: Option<EngineList>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct EngineList(Vec<Engine>);

fn engine_list(text: &str) -> Result<EngineList, String> {
    parse_engines(text).map(EngineList)
}

fn rational(text: &str) -> Result<Rational, String> {
    parse_rational(text).ok_or_else(|| format!("{text:?} is not a decimal or p/q number"))
}

fn scenario(common: Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    cfg.apply(Overrides {
        f0: common.f0,
        n: common.n,
        protocol: common.protocol,
        engines: common.engines.map(|e| e.0),
        trials: common.trials,
        seed: common.seed,
        out: common.out,
    });
    if cfg.protocol == PipelineKind::FullMepp && cfg.input.is_none() && cfg.sweep.is_none() {
        cfg.sweep = Some(Default::default());
    }
    Ok(cfg)
}

type Handler = fn(&ScenarioConfig, &mut dyn Write) -> Result<Verdict, CliError>;

fn execute(command: Command) -> Result<Verdict, CliError> {
    let (common, handler): (Common, Handler) = match command {
        Command::Curves(c) => (c, cmd_curves),
        Command::Run(c) => (c, cmd_run),
        Command::Explain(c) => (c, cmd_explain),
        Command::Mc(c) => (c, cmd_mc),
    };
    let cfg = scenario(common)?;
    let verdict = match &cfg.out {
        Some(path) => {
            let file = File::create(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            let v = handler(&cfg, &mut w)?;
            w.flush()?;
            v
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            handler(&cfg, &mut w)?
        }
    };
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("GHZ_PURIFY_THREADS")
        .ok()
        .and_then(|t| t.parse().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match execute(cli.command) {
        Ok(Verdict::Agree) => ExitCode::SUCCESS,
        Ok(Verdict::Disagree(problems)) => {
            for p in &problems {
                eprintln!("disagreement: {p}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
