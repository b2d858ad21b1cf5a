use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use iscc_core::policies::{
    audit_trace, exhaustive_optimal, run_episode, ConservationAudit, EpisodeTrace, GreedyGain, LatencyObjective,
    MaxSensing, MinLatency, Policy, RandomPolicy, ScriptedPolicy,
};
use iscc_core::sacrl::{read_params, train, write_params, CurvePoint, SacPolicy, TrainOptions};
use iscc_core::urp::Process;
use iscc_core::{
    build_gain_graph, generate_scenario, plan_pipeline, ClientResidual, GaiRoundSchedule, GainGraph, PoolSpec,
    RoundWindows, ScenarioConfig, ScheduleMode,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp_unix: u64,
    pub wall_clock_secs: f64,
    pub version: String,
}

impl Metadata {
    fn since(start: Instant) -> Self {
        Self {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_secs: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedGain {
    pub seed: u64,
    pub gain: f64,
    pub freq_utilization: f64,
    pub comp_utilization: f64,
    pub cstc_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: String,
    pub runs: Vec<SeedGain>,
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: f64,
    pub mean_freq_utilization: f64,
    pub mean_comp_utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTable {
    pub mode: ScheduleMode,
    pub rounds: usize,
    pub cr_length: usize,
    pub total_crs: usize,
    pub makespan_slots: usize,
    pub serial_makespan_slots: usize,
    pub zeros_makespan_slots: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub episodes: usize,
    pub cstc_violations: usize,
    pub conservation: ConservationAudit,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub config: RunConfig,
    pub schedule: ScheduleTable,
    pub policies: Vec<PolicyStats>,
    pub audit: AuditSummary,
    /// Run-dependent values; everything outside this field is reproducible.
    pub metadata: Metadata,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn out_file(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let (path, mut w) = out_file(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Output(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    log::debug!("wrote {}", path.display());
    Ok(path)
}

fn csv_writer(dir: &Path, name: &str) -> Result<(PathBuf, csv::Writer<BufWriter<File>>), CliError> {
    let (path, w) = out_file(dir, name)?;
    Ok((path, csv::Writer::from_writer(w)))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Output(e.to_string())
}

pub fn schedule_for(cfg: &RunConfig, pool: &PoolSpec<f64>) -> Result<GaiRoundSchedule, CliError> {
    Ok(plan_pipeline(cfg.rounds, pool.num_slots, cfg.mode)?)
}

fn schedule_table(cfg: &RunConfig) -> Result<ScheduleTable, CliError> {
    let l = cfg.scenario.pool.num_slots;
    let s = schedule_for(cfg, &cfg.scenario.pool)?;
    Ok(ScheduleTable {
        mode: cfg.mode,
        rounds: cfg.rounds,
        cr_length: l,
        total_crs: s.total_crs(),
        makespan_slots: s.makespan(),
        serial_makespan_slots: plan_pipeline(cfg.rounds, l, ScheduleMode::Serial)?.makespan(),
        zeros_makespan_slots: plan_pipeline(cfg.rounds, l, ScheduleMode::Zeros)?.makespan(),
    })
}

pub fn load_sac(cfg: &RunConfig) -> Result<SacPolicy, CliError> {
    let path = cfg
        .params
        .as_ref()
        .ok_or_else(|| CliError::Usage("the sac policy needs a parameter file (--params)".into()))?;
    let f = File::open(path)
        .map_err(|e| CliError::Usage(format!("missing or unreadable parameter file {}: {e}", path.display())))?;
    let (policy, _) = read_params(BufReader::new(f))?;
    if policy.norm.n_clients != cfg.scenario.n_clients || policy.norm.n_models != cfg.scenario.n_edges {
        return Err(CliError::Usage(format!(
            "parameters were trained for {} clients and {} models, scenario has {} and {}",
            policy.norm.n_clients, policy.norm.n_models, cfg.scenario.n_clients, cfg.scenario.n_edges
        )));
    }
    Ok(policy)
}

/// `None` for the exhaustive oracle, which is not a per-round policy.
pub fn build_policy(cfg: &RunConfig, name: &str) -> Result<Option<Box<dyn Policy<f64>>>, CliError> {
    let p: Box<dyn Policy<f64>> = match name {
        "greedy" => Box::new(GreedyGain),
        "ml-c" => Box::new(MinLatency(LatencyObjective::Comm)),
        "ml-cc" => Box::new(MinLatency(LatencyObjective::CommComp)),
        "ml-scc" => Box::new(MinLatency(LatencyObjective::SensCommComp)),
        "mp-tsc" => Box::new(MaxSensing),
        "random" => Box::new(RandomPolicy { seed: cfg.random_seed }),
        "sac" => Box::new(load_sac(cfg)?),
        "exhaustive" => return Ok(None),
        other => {
            return Err(CliError::Usage(format!(
                "unknown policy `{other}`; valid names: {}",
                crate::POLICY_NAMES.join(", ")
            )))
        }
    };
    Ok(Some(p))
}

fn run_one(
    scenario_cfg: &ScenarioConfig<f64>,
    schedule: &GaiRoundSchedule,
    policy: Option<&dyn Policy<f64>>,
    seed: u64,
) -> Result<EpisodeTrace<f64>, CliError> {
    let scenario = generate_scenario(scenario_cfg, seed)?;
    Ok(match policy {
        Some(p) => run_episode(&scenario, p, schedule)?,
        None => {
            let best = exhaustive_optimal(&scenario, schedule)?;
            run_episode(
                &scenario,
                &ScriptedPolicy {
                    decisions: best.decisions,
                },
                schedule,
            )?
        }
    })
}

/// One episode per seed, in parallel; results in seed-list order.
pub fn run_policy(
    cfg: &RunConfig,
    scenario_cfg: &ScenarioConfig<f64>,
    name: &str,
) -> Result<Vec<(u64, EpisodeTrace<f64>)>, CliError> {
    let policy = build_policy(cfg, name)?;
    let schedule = schedule_for(cfg, &scenario_cfg.pool)?;
    log::info!(
        "{name}: {} seeds, {} rounds, {:?}",
        cfg.seeds.len(),
        cfg.rounds,
        cfg.mode
    );
    cfg.seeds
        .par_iter()
        .map(|&seed| Ok((seed, run_one(scenario_cfg, &schedule, policy.as_deref(), seed)?)))
        .collect()
}

fn stats(name: &str, runs: &[(u64, EpisodeTrace<f64>)]) -> PolicyStats {
    let rows: Vec<SeedGain> = runs
        .iter()
        .map(|(seed, t)| {
            let (f, c) = t.mean_utilization();
            SeedGain {
                seed: *seed,
                gain: t.cumulative_gain,
                freq_utilization: f,
                comp_utilization: c,
                cstc_violations: t.cstc_violations.len(),
            }
        })
        .collect();
    let gains: Vec<f64> = rows.iter().map(|r| r.gain).collect();
    let (mean, std) = mean_std(&gains);
    let k = rows.len().max(1) as f64;
    PolicyStats {
        policy: name.into(),
        mean,
        std,
        mean_freq_utilization: rows.iter().map(|r| r.freq_utilization).sum::<f64>() / k,
        mean_comp_utilization: rows.iter().map(|r| r.comp_utilization).sum::<f64>() / k,
        runs: rows,
    }
}

fn audit<'a>(traces: impl IntoIterator<Item = &'a EpisodeTrace<f64>>) -> AuditSummary {
    let mut out = AuditSummary::default();
    for t in traces {
        out.episodes += 1;
        out.cstc_violations += t.cstc_violations.len();
        out.conservation.merge(&audit_trace(t));
    }
    out.ok = out.cstc_violations == 0 && out.conservation.ok();
    out
}

fn write_trace_csv(dir: &Path, name: &str, runs: &[(u64, EpisodeTrace<f64>)]) -> Result<PathBuf, CliError> {
    let (path, mut w) = csv_writer(dir, name)?;
    w.write_record(["seed", "gr", "client", "model", "workload", "gain", "feasible"])
        .map_err(csv_err)?;
    for (seed, t) in runs {
        for p in t.rounds.iter().flat_map(|r| &r.pairs) {
            w.write_record([
                seed.to_string(),
                p.gr.to_string(),
                p.client.to_string(),
                p.model.to_string(),
                p.workload.to_string(),
                p.gain.to_string(),
                p.feasible.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let runs = run_policy(cfg, &cfg.scenario, &cfg.policy)?;
    write_trace_csv(&cfg.out_dir, "trace.csv", &runs)?;
    let summary = RunSummary {
        command: "simulate".into(),
        config: cfg.clone(),
        schedule: schedule_table(cfg)?,
        policies: vec![stats(&cfg.policy, &runs)],
        audit: audit(runs.iter().map(|(_, t)| t)),
        metadata: Metadata::since(start),
    };
    write_json(&cfg.out_dir, "summary.json", &summary)?;
    Ok(summary)
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.policies.len() < 2 {
        return Err(CliError::Usage("compare needs at least two policies".into()));
    }
    let (path, mut w) = csv_writer(&cfg.out_dir, "compare.csv")?;
    w.write_record(["policy", "seed", "gain"]).map_err(csv_err)?;
    let mut table = Vec::new();
    let mut audits = AuditSummary {
        ok: true,
        ..Default::default()
    };
    for name in &cfg.policies {
        let runs = run_policy(cfg, &cfg.scenario, name)?;
        for (seed, t) in &runs {
            w.write_record([name.clone(), seed.to_string(), t.cumulative_gain.to_string()])
                .map_err(csv_err)?;
        }
        let a = audit(runs.iter().map(|(_, t)| t));
        audits.episodes += a.episodes;
        audits.cstc_violations += a.cstc_violations;
        audits.conservation.merge(&a.conservation);
        audits.ok &= a.ok;
        table.push(stats(name, &runs));
    }
    w.flush().map_err(io_err(&path))?;
    let summary = RunSummary {
        command: "compare".into(),
        config: cfg.clone(),
        schedule: schedule_table(cfg)?,
        policies: table,
        audit: audits,
        metadata: Metadata::since(start),
    };
    write_json(&cfg.out_dir, "summary.json", &summary)?;
    Ok(summary)
}

pub fn format_table(stats: &[PolicyStats]) -> String {
    let mut s = format!(
        "{:<12} {:>12} {:>10} {:>8} {:>8}\n",
        "policy", "mean gain", "std", "freq", "comp"
    );
    for p in stats {
        s += &format!(
            "{:<12} {:>12.4} {:>10.4} {:>8.3} {:>8.3}\n",
            p.policy, p.mean, p.std, p.mean_freq_utilization, p.mean_comp_utilization
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessUsage {
    pub process: Process,
    pub claims: usize,
    /// Distinct (slot, lane) cells touched.
    pub cells: usize,
    pub last_slot: usize,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonRun {
    pub slots: usize,
    pub pool: PoolSpec<f64>,
    pub gain: f64,
    pub workloads: Vec<u64>,
    pub usage: Vec<ProcessUsage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub policy: String,
    pub long: HorizonRun,
    pub short: HorizonRun,
    pub relative_gap: f64,
    pub tolerance: f64,
    /// The two runs placed different claim sets.
    pub allocations_differ: bool,
    pub passed: bool,
}

fn usage(traces: &[(u64, EpisodeTrace<f64>)]) -> Vec<ProcessUsage> {
    Process::ALL
        .iter()
        .map(|&process| {
            let claims: Vec<_> = traces
                .iter()
                .flat_map(|(_, t)| &t.claims)
                .filter(|c| c.process == process)
                .collect();
            let mut cells: Vec<(usize, usize, usize, usize)> = claims
                .iter()
                .flat_map(|c| {
                    let lanes = if c.lanes.is_empty() {
                        vec![usize::MAX]
                    } else {
                        c.lanes.clone()
                    };
                    c.slots()
                        .flat_map(move |s| lanes.clone().into_iter().map(move |l| (c.client_id, c.cr_index, s, l)))
                })
                .collect();
            cells.sort_unstable();
            cells.dedup();
            ProcessUsage {
                process,
                claims: claims.len(),
                cells: cells.len(),
                last_slot: claims.iter().map(|c| c.slot_end).max().unwrap_or(0),
                amount: claims.iter().map(|c| c.total_amount()).sum(),
            }
        })
        .collect()
}

type SeededTraces = Vec<(u64, EpisodeTrace<f64>)>;

fn horizon_run(cfg: &RunConfig, pool: &PoolSpec<f64>) -> Result<(HorizonRun, SeededTraces), CliError> {
    let scenario = ScenarioConfig {
        pool: pool.clone(),
        ..cfg.scenario.clone()
    };
    let runs = run_policy(cfg, &scenario, &cfg.policy)?;
    let run = HorizonRun {
        slots: pool.num_slots,
        pool: pool.clone(),
        gain: runs.iter().map(|(_, t)| t.cumulative_gain).sum(),
        workloads: runs
            .iter()
            .flat_map(|(_, t)| t.rounds.iter().flat_map(|r| r.pairs.iter().map(|p| p.workload)))
            .collect(),
        usage: usage(&runs),
    };
    Ok((run, runs))
}

/// Same policy on the configured pool and on the shortened pool.
pub fn cmd_robustness(cfg: &RunConfig) -> Result<RobustnessReport, CliError> {
    cfg.validate()?;
    let long_pool = cfg.scenario.pool.clone();
    let short_pool = cfg
        .robustness
        .short_pool
        .clone()
        .ok_or_else(|| CliError::Usage("robustness needs [robustness.short_pool] in the config".into()))?;
    let (long, long_runs) = horizon_run(cfg, &long_pool)?;
    let (short, short_runs) = horizon_run(cfg, &short_pool)?;
    let relative_gap = if long.gain == 0.0 {
        if short.gain == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (long.gain - short.gain).abs() / long.gain
    };
    let allocations_differ = long_runs
        .iter()
        .zip(&short_runs)
        .any(|((_, a), (_, b))| a.claims != b.claims);
    let report = RobustnessReport {
        policy: cfg.policy.clone(),
        passed: relative_gap <= cfg.robustness.tolerance,
        long,
        short,
        relative_gap,
        tolerance: cfg.robustness.tolerance,
        allocations_differ,
    };
    write_json(&cfg.out_dir, "robustness.json", &report)?;
    if !report.passed {
        let dump = serde_json::json!({
            "long": long_runs.iter().map(|(s, t)| (s, &t.claims)).collect::<Vec<_>>(),
            "short": short_runs.iter().map(|(s, t)| (s, &t.claims)).collect::<Vec<_>>(),
        });
        let path = write_json(&cfg.out_dir, "robustness_allocations.json", &dump)?;
        return Err(CliError::Assertion(format!(
            "gain changed by {:.4}% between {} and {} slots ({} vs {}), above the {:.2}% tolerance; allocations in {}",
            100.0 * report.relative_gap,
            report.long.slots,
            report.short.slots,
            report.long.gain,
            report.short.gain,
            100.0 * report.tolerance,
            path.display()
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub command: String,
    pub config: RunConfig,
    pub scenario_seed: u64,
    pub steps: usize,
    pub episodes: usize,
    pub final_eval_gain: f64,
    pub params: PathBuf,
    pub metadata: Metadata,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let schedule = schedule_for(cfg, &cfg.scenario.pool)?;
    let opts = TrainOptions {
        scenario_seed: cfg.seeds[0],
        ..cfg.train.clone()
    };
    log::info!(
        "training for {} steps on scenario seed {}",
        opts.total_steps,
        opts.scenario_seed
    );
    let out = train(&cfg.scenario, &schedule, &cfg.sac, &opts)?;

    let (params_path, mut w) = out_file(&cfg.out_dir, "params.bin")?;
    let echo = serde_json::to_value(cfg).map_err(|e| CliError::Output(e.to_string()))?;
    write_params(&mut w, &out.policy, &cfg.sac, echo)?;
    w.flush().map_err(io_err(&params_path))?;

    let (path, mut w) = csv_writer(&cfg.out_dir, "learning_curve.csv")?;
    w.write_record([
        "episode",
        "steps",
        "cumulative_gain",
        "actor_loss",
        "critic_loss",
        "alpha",
        "eval_gain",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for CurvePoint {
        episode,
        steps,
        cumulative_gain,
        actor_loss,
        critic_loss,
        alpha,
        eval_gain,
    } in &out.curve
    {
        w.write_record([
            episode.to_string(),
            steps.to_string(),
            cumulative_gain.to_string(),
            opt(*actor_loss),
            opt(*critic_loss),
            alpha.to_string(),
            opt(*eval_gain),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;

    let summary = TrainSummary {
        command: "train".into(),
        config: cfg.clone(),
        scenario_seed: opts.scenario_seed,
        steps: out.steps,
        episodes: out.curve.iter().map(|p| p.episode).max().unwrap_or(0),
        final_eval_gain: out.final_eval_gain,
        params: params_path,
        metadata: Metadata::since(start),
    };
    write_json(&cfg.out_dir, "summary.json", &summary)?;
    Ok(summary)
}

/// Frozen-policy episodes of the `sac` policy on every configured seed.
pub fn cmd_eval(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let cfg = RunConfig {
        policy: "sac".into(),
        ..cfg.clone()
    };
    let mut summary = cmd_simulate(&cfg)?;
    summary.command = "eval".into();
    write_json(&cfg.out_dir, "summary.json", &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub seed: u64,
    pub policy: String,
    pub gain: f64,
    /// Gain over the exhaustive optimum (1 when the optimum is 0).
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub sequences_per_seed: u64,
    pub rows: Vec<OracleRow>,
    /// No policy beat the exhaustive optimum on any seed.
    pub dominated: bool,
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<OracleReport, CliError> {
    cfg.validate()?;
    let schedule = schedule_for(cfg, &cfg.scenario.pool)?;
    let mut names: Vec<&str> = vec!["greedy", "ml-c", "ml-cc", "ml-scc", "mp-tsc", "random"];
    if cfg.params.is_some() {
        names.push("sac");
    }
    let policies: Vec<(&str, Box<dyn Policy<f64>>)> = names
        .iter()
        .map(|n| Ok((*n, build_policy(cfg, n)?.expect("heuristic"))))
        .collect::<Result<_, CliError>>()?;
    let per_seed: Vec<(u64, Vec<OracleRow>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let scenario = generate_scenario(&cfg.scenario, seed)?;
            let best = exhaustive_optimal(&scenario, &schedule)?;
            let ratio = |g: f64| if best.gain > 0.0 { g / best.gain } else { 1.0 };
            let mut rows = vec![OracleRow {
                seed,
                policy: "exhaustive".into(),
                gain: best.gain,
                ratio: 1.0,
            }];
            for (name, p) in &policies {
                let g = run_episode(&scenario, p.as_ref(), &schedule)?.cumulative_gain;
                rows.push(OracleRow {
                    seed,
                    policy: name.to_string(),
                    gain: g,
                    ratio: ratio(g),
                });
            }
            Ok((best.sequences, rows))
        })
        .collect::<Result<_, CliError>>()?;
    let rows: Vec<OracleRow> = per_seed.iter().flat_map(|(_, r)| r.clone()).collect();
    let best_of = |seed: u64| {
        rows.iter()
            .find(|r| r.seed == seed && r.policy == "exhaustive")
            .map(|r| r.gain)
    };
    let dominated = rows
        .iter()
        .all(|r| r.gain <= best_of(r.seed).unwrap_or(f64::INFINITY) + 1e-9 * (1.0 + r.gain.abs()));
    let report = OracleReport {
        sequences_per_seed: per_seed.first().map_or(0, |(s, _)| *s),
        rows,
        dominated,
    };
    write_json(&cfg.out_dir, "oracle.json", &report)?;
    let (path, mut w) = csv_writer(&cfg.out_dir, "oracle.csv")?;
    w.write_record(["seed", "policy", "gain", "ratio"]).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.seed.to_string(),
            r.policy.clone(),
            r.gain.to_string(),
            r.ratio.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    if !report.dominated {
        return Err(CliError::Assertion("a heuristic beat the exhaustive optimum".into()));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub seed: u64,
    pub n_clients: usize,
    pub n_models: usize,
    pub pool: PoolSpec<f64>,
    pub schedule: ScheduleTable,
    pub sensed_targets: Vec<usize>,
    pub graph: GainGraph<f64>,
}

/// The first round's gain graph for the first seed.
pub fn cmd_inspect(cfg: &RunConfig) -> Result<InspectReport, CliError> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let scenario = generate_scenario(&cfg.scenario, seed)?;
    let windows = RoundWindows {
        t_gen: cfg.scenario.pool.window(),
        t_cons: cfg.scenario.pool.window(),
        coupled: cfg.mode == ScheduleMode::Zeros,
    };
    let residuals: Vec<_> = scenario
        .clients
        .iter()
        .map(|c| ClientResidual::from_pool(&c.pool))
        .collect();
    let report = InspectReport {
        seed,
        n_clients: scenario.n_clients(),
        n_models: scenario.n_models(),
        pool: cfg.scenario.pool.clone(),
        schedule: schedule_table(cfg)?,
        sensed_targets: (0..scenario.n_clients())
            .map(|n| scenario.sense_targets(n).iter().sum())
            .collect(),
        graph: build_gain_graph(&scenario, &windows, &residuals)?,
    };
    write_json(&cfg.out_dir, "inspect.json", &report)?;
    Ok(report)
}
