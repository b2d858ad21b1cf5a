use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iscc_cli::commands::format_table;
use iscc_cli::{config::RunConfig, parse_seeds, CliError};
use iscc_core::ScheduleMode;

#[derive(Parser)]
#[command(
    name = "iscc",
    version,
    about = "Round-overlapped sensing/communication/computing orchestration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over every seed; writes trace.csv and summary.json.
    Simulate(Overrides),
    /// Run several policies on shared seeds; writes compare.csv and summary.json.
    Compare(Overrides),
    /// Same policy on the long pool and on a shortened pool.
    Robustness(Overrides),
    /// Train the SAC matching policy; writes params.bin and learning_curve.csv.
    Train(Overrides),
    /// Frozen SAC policy episodes from a parameter file.
    Eval(Overrides),
    /// Exhaustive optimum next to every heuristic on a tiny instance.
    Oracle(Overrides),
    /// Dump the first round's gain graph.
    Inspect(Overrides),
}

#[derive(Args, Clone, Debug, Default)]
struct Overrides {
    /// TOML config, or a JSON config / summary echo.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated policies for `compare`.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// e.g. `0-9` or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    mode: Option<ScheduleMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pool horizon; for `robustness` the shortened horizon.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// SAC environment steps for `train`.
    #[arg(long)]
    steps: Option<usize>,
}

fn resolve(o: &Overrides, robustness: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.policy {
        cfg.policy = v.clone();
    }
    if let Some(v) = &o.policies {
        cfg.policies = v.clone();
    }
    if let Some(v) = &o.seeds {
        cfg.seeds = parse_seeds(v).map_err(CliError::Usage)?;
    }
    if let Some(v) = o.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = o.mode {
        cfg.mode = v;
    }
    if let Some(v) = &o.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = o.clients {
        cfg.scenario.n_clients = v;
    }
    if let Some(v) = o.targets {
        cfg.scenario.n_targets = v;
    }
    if let Some(v) = &o.params {
        cfg.params = Some(v.clone());
    }
    if let Some(v) = o.steps {
        cfg.train.total_steps = v;
    }
    if let Some(v) = o.slots {
        if robustness {
            let mut short = cfg
                .robustness
                .short_pool
                .clone()
                .unwrap_or_else(|| cfg.scenario.pool.clone());
            short.num_slots = v;
            cfg.robustness.short_pool = Some(short);
        } else {
            cfg.scenario.pool.num_slots = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(o) => {
            let cfg = resolve(&o, false)?;
            let s = iscc_cli::cmd_simulate(&cfg)?;
            print!("{}", format_table(&s.policies));
            println!("audit ok: {}", s.audit.ok);
        }
        Command::Compare(o) => {
            let cfg = resolve(&o, false)?;
            let s = iscc_cli::cmd_compare(&cfg)?;
            print!("{}", format_table(&s.policies));
        }
        Command::Robustness(o) => {
            let cfg = resolve(&o, true)?;
            let r = iscc_cli::cmd_robustness(&cfg)?;
            println!(
                "{} slots: gain {:.6}\n{} slots: gain {:.6}\nrelative gap {:.6} (tolerance {}), allocations differ: {}",
                r.long.slots,
                r.long.gain,
                r.short.slots,
                r.short.gain,
                r.relative_gap,
                r.tolerance,
                r.allocations_differ
            );
        }
        Command::Train(o) => {
            let mut cfg = resolve(&o, false)?;
            cfg.policy = "sac".into();
            let s = iscc_cli::cmd_train(&cfg)?;
            println!(
                "trained {} steps over {} episodes; final eval gain {:.6}; parameters in {}",
                s.steps,
                s.episodes,
                s.final_eval_gain,
                s.params.display()
            );
        }
        Command::Eval(o) => {
            let cfg = resolve(&o, false)?;
            let s = iscc_cli::cmd_eval(&cfg)?;
            print!("{}", format_table(&s.policies));
        }
        Command::Oracle(o) => {
            let cfg = resolve(&o, false)?;
            let r = iscc_cli::cmd_oracle(&cfg)?;
            println!("{:<6} {:<12} {:>12} {:>8}", "seed", "policy", "gain", "ratio");
            for row in &r.rows {
                println!(
                    "{:<6} {:<12} {:>12.6} {:>8.4}",
                    row.seed, row.policy, row.gain, row.ratio
                );
            }
        }
        Command::Inspect(o) => {
            let cfg = resolve(&o, false)?;
            let r = iscc_cli::cmd_inspect(&cfg)?;
            let text = serde_json::to_string_pretty(&r).map_err(|e| CliError::Output(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ISCC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
