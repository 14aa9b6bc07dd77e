use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tipi_core::config::ExperimentConfig;
use tipi_core::experiment::{
    self, behavior_metrics, calibrate_ada_rate, escape_success_rate, preadapt, rng_stream, run_condition, Condition,
    ConditionSpec, RunOptions, ScriptedInteractor, SessionEventKind, SessionLog, Stream,
};
use tipi_core::pi;
use tipi_core::sim::ArenaSpec;
use tipi_core::stats::{self, FactorMap};

use crate::assets;
use crate::blind::BlindTable;
use crate::server::{self, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "tipi", version, about = "Predictive-information robot experiments: simulate, run, replay, analyze")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pre-adaptation trials and write one snapshot per trial.
    Preadapt {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = tipi_core::config::DEFAULT_PREADAPT_SEED)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune the ADA learning rate on pit-start runs and write the config.
    Calibrate {
        #[command(flatten)]
        env: EnvArgs,
        /// Number of pit-start seeds (at least 20).
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Config file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one condition headlessly with the scripted participant.
    Run {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_parser = parse_condition)]
        mode: Condition,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the configured session length.
        #[arg(long)]
        duration_s: Option<f64>,
        /// Session log (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Also export the ticks as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-execute a session log and check every record matches.
    Replay {
        /// Session log (JSONL).
        log: PathBuf,
    },
    /// Score questionnaires and run the paired and interaction tests.
    Stats {
        /// Responses CSV: participant_id, condition, order, one column per item.
        #[arg(long = "in")]
        input: PathBuf,
        /// Item-to-factor map; the built-in GodSpeed/RoSAS map when omitted.
        #[arg(long)]
        factors: Option<PathBuf>,
        /// Write the report table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the live session service.
    Serve {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Sessions start only from opaque tokens.
        #[arg(long)]
        blind: bool,
        /// Token table (TOML); generated and printed when omitted.
        #[arg(long, requires = "blind")]
        tokens: Option<PathBuf>,
        /// Directory of the built browser client.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Where finished session logs are written.
        #[arg(long, default_value = "logs")]
        log_dir: PathBuf,
        /// Send every n-th state update.
        #[arg(long, default_value_t = 1)]
        decimate: u32,
    },
}

/// Inputs shared by the simulation subcommands; built-in defaults apply
/// when a path is omitted.
#[derive(Debug, Args)]
pub struct EnvArgs {
    #[arg(long)]
    pub arena: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start snapshot (`.pinw`).
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

impl EnvArgs {
    fn arena(&self) -> Result<ArenaSpec> {
        Ok(match &self.arena {
            Some(p) => ArenaSpec::load(p)?,
            None => ArenaSpec::from_toml(assets::ARENA_TOML)?,
        })
    }

    fn config(&self) -> Result<ExperimentConfig> {
        Ok(match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::from_toml(assets::CONFIG_TOML)?,
        })
    }

    fn snapshot(&self) -> Result<Vec<u8>> {
        let bytes = match &self.snapshot {
            Some(p) => fs::read(p).with_context(|| format!("reading {}", p.display()))?,
            None => assets::SNAPSHOT.to_vec(),
        };
        pi::restore(&bytes).context("start snapshot")?;
        Ok(bytes)
    }
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preadapt { env, seed, out } => cmd_preadapt(&env, seed, &out),
        Command::Calibrate { env, seeds, first_seed, out } => cmd_calibrate(&env, first_seed, seeds, &out),
        Command::Run { env, mode, seed, duration_s, out, csv } => cmd_run(&env, mode, seed, duration_s, &out, csv.as_deref()),
        Command::Replay { log } => cmd_replay(&log),
        Command::Stats { input, factors, out } => cmd_stats(&input, factors.as_deref(), out.as_deref()),
        Command::Serve { env, port, host, blind, tokens, assets, log_dir, decimate } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            let mut cfg = ServerConfig::with_defaults(env.arena()?, env.config()?, env.snapshot()?);
            cfg.assets = assets;
            cfg.decimate = decimate.max(1);
            fs::create_dir_all(&log_dir).with_context(|| format!("creating {}", log_dir.display()))?;
            cfg.log_dir = Some(log_dir);
            if blind {
                let table = match tokens {
                    Some(p) => BlindTable::load(&p)?,
                    None => {
                        let t = BlindTable::generate(&mut rand::rng(), 4);
                        println!("blind start tokens (keep away from participants):\n{}", t.to_toml());
                        t
                    }
                };
                cfg.blind = Some(table);
            }
            serve(cfg, addr)
        }
    }
}

fn serve(cfg: ServerConfig, addr: SocketAddr) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let (local, handle) = server::spawn(cfg, addr).await?;
        println!("listening on http://{local} (WebSocket at /ws)");
        tokio::select! {
            _ = handle => {}
            _ = tokio::signal::ctrl_c() => println!("shutting down"),
        }
        Ok(())
    })
}

fn cmd_preadapt(env: &EnvArgs, seed: u64, out: &Path) -> Result<()> {
    let arena = env.arena()?;
    let cfg = env.config()?;
    let pairs = preadapt(&arena, &cfg, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, pair) in pairs.iter().enumerate() {
        let path = out.join(format!("snapshot_{i}.pinw"));
        fs::write(&path, pi::snapshot(pair)).with_context(|| format!("writing {}", path.display()))?;
        println!(
            "{}  step_count {}  {}",
            path.display(),
            pair.step_count,
            experiment::network_hash(pair)
        );
    }
    Ok(())
}

fn cmd_calibrate(env: &EnvArgs, first: u64, count: u64, out: &Path) -> Result<()> {
    let arena = env.arena()?;
    let mut cfg = env.config()?;
    let start = pi::restore(&env.snapshot()?)?;
    let seeds: Vec<u64> = (first..first + count).collect();
    let report = calibrate_ada_rate(&arena, &cfg, &start, &seeds)?;
    for (rate, success) in &report.grid {
        println!("rate {rate:.5}: {:.0}% escaped within {} s", success * 100.0, cfg.calibration.escape_limit_s);
    }
    let frozen = escape_success_rate(&arena, &cfg, &start, 0.0, &seeds)?;
    println!("frozen networks: {:.0}% escaped", frozen * 100.0);
    cfg.learning.eps_controller = report.rate;
    fs::write(out, cfg.to_toml()).with_context(|| format!("writing {}", out.display()))?;
    println!("calibrated rate {} written to {}", report.rate, out.display());
    Ok(())
}

fn cmd_run(env: &EnvArgs, mode: Condition, seed: u64, duration_s: Option<f64>, out: &Path, csv: Option<&Path>) -> Result<()> {
    let arena = env.arena()?;
    let cfg = env.config()?;
    let duration = duration_s.unwrap_or(cfg.session_duration_s);
    let spec = ConditionSpec::new(mode, duration, env.snapshot()?, cfg.learning);
    let mut interactor = ScriptedInteractor::new(cfg.interactor, rng_stream(seed, Stream::Interactor));
    let opts = RunOptions {
        config_hash: cfg.hash(),
        ..RunOptions::default()
    };
    let log = run_condition(&spec, &arena, &cfg.sim, &mut interactor, seed, &opts)?;
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    log.write_jsonl(std::io::BufWriter::new(file))?;
    if let Some(path) = csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        log.write_csv(file)?;
    }
    let m = behavior_metrics(&log);
    let falls = log.events.iter().filter(|e| matches!(e.kind, SessionEventKind::Fall { .. })).count();
    println!(
        "{} rows, mean speed {:.3} m/s, coverage {:.2}, falls {falls}",
        log.rows.len(),
        m.mean_speed,
        m.coverage,
    );
    Ok(())
}

fn cmd_replay(path: &Path) -> Result<()> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let log = SessionLog::read_jsonl(BufReader::new(file))?;
    experiment::replay(&log)?;
    println!("replay ok: {} rows identical", log.rows.len());
    Ok(())
}

fn cmd_stats(input: &Path, factors: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let map = match factors {
        Some(p) => FactorMap::load(p)?,
        None => FactorMap::from_toml(assets::FACTORS_TOML)?,
    };
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let responses = stats::read_responses(file, &map)?;
    if responses.is_empty() {
        bail!("{} has no responses", input.display());
    }
    let scores = stats::score_factors(&responses, &map)?;
    let report = stats::analyze(&scores, &map)?;
    print!("{}", report.to_text());
    if let Some(path) = out {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    Ok(())
}
