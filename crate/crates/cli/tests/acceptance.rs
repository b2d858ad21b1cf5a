//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use iscc_cli::commands::{cmd_robustness, cmd_simulate, run_policy};
use iscc_cli::{CliError, RunConfig};
use iscc_core::policies::{audit_trace, exhaustive_optimal, run_episode, EpisodeTrace};
use iscc_core::sacrl::gradcheck::{check_actor, check_critic, check_temperature};
use iscc_core::sacrl::{train, Batch, MatchingEnv, Normalization, SacAgent, SacConfig, Transition};
use iscc_core::{
    generate_scenario, oracle_workload, plan_pipeline, solve_workload, validate_cstc, ScenarioConfig, ScheduleMode,
    SensingSpec, WorkloadProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Traces = Vec<EpisodeTrace<f64>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn load(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).expect("bundled config")
}

fn random_problem(rng: &mut ChaCha8Rng, ws: bool) -> WorkloadProblem<f64> {
    WorkloadProblem {
        t_gen: rng.gen_range(0.3..1.0),
        t_cons: rng.gen_range(0.3..1.0),
        bandwidth: rng.gen_range(1e5..2e6),
        compute: rng.gen_range(1e8..3e9),
        eta: rng.gen_range(1.0..10.0),
        size_dl: rng.gen_range(1e4..5e5),
        size_ul: rng.gen_range(1e4..5e5),
        cycles_per_sample: rng.gen_range(1e6..2e7),
        sensing: if ws {
            SensingSpec::Ws {
                bits_per_sample: rng.gen_range(5e3..5e4),
                efficiency: rng.gen_range(0.5..2.0),
            }
        } else {
            SensingSpec::Vs {
                secs_per_sample: rng.gen_range(2e-3..2e-2),
            }
        },
        w_cap: rng.gen_range(10.0..200.0),
        coupled: ws || rng.gen_bool(0.5),
    }
}

fn solver_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0i64;
    let mut positive = 0;
    for i in 0..200 {
        let p = random_problem(&mut rng, i % 2 == 1);
        let s = solve_workload(&p).expect("valid problem").w_star as i64;
        let o = oracle_workload(&p, 400).expect("valid problem") as i64;
        worst = worst.max((s - o).abs());
        positive += (s > 0) as usize;
    }
    outcome(
        worst <= 1,
        format!("200 problems (100 VS, 100 WS coupled), {positive} with W*>0, max |solver - oracle| = {worst}"),
    )
}

fn zeros_makespan(traces: &mut Traces) -> Outcome {
    let zeros = plan_pipeline(5, 9, ScheduleMode::Zeros).unwrap().makespan();
    let serial = plan_pipeline(5, 9, ScheduleMode::Serial).unwrap().makespan();
    let cfg = RunConfig {
        mode: ScheduleMode::Zeros,
        seeds: (0..10).collect(),
        ..load("traffic.toml")
    };
    let sched = plan_pipeline(cfg.rounds, cfg.scenario.pool.num_slots, cfg.mode).unwrap();
    let runs = run_policy(&cfg, &cfg.scenario, "greedy").expect("episodes run");
    let violations: usize = runs.iter().map(|(_, t)| validate_cstc(&sched, &t.claims).len()).sum();
    traces.extend(runs.into_iter().map(|(_, t)| t));
    outcome(
        zeros == 54 && serial == 90 && violations == 0,
        format!("makespan zeros {zeros} vs serial {serial} slots, CSTC violations over 10 seeds: {violations}"),
    )
}

fn baseline_ordering(traces: &mut Traces) -> Outcome {
    let cfg = load("traffic.toml");
    let mut means = Vec::new();
    for name in ["greedy", "ml-c", "ml-cc", "ml-scc", "mp-tsc", "random"] {
        let runs = run_policy(&cfg, &cfg.scenario, name).expect("episodes run");
        let mean = runs.iter().map(|(_, t)| t.cumulative_gain).sum::<f64>() / runs.len() as f64;
        means.push((name, mean));
        traces.extend(runs.into_iter().map(|(_, t)| t));
    }
    let greedy = means[0].1;
    let table: Vec<String> = means.iter().map(|(n, m)| format!("{n}={m:.2}")).collect();
    outcome(
        means.iter().all(|(_, m)| greedy >= *m),
        format!("mean gain over 10 seeds, 5 rounds: {}", table.join(" ")),
    )
}

fn sac_near_optimal(traces: &mut Traces) -> Outcome {
    let cfg = load("tiny.toml");
    let seed = cfg.seeds[0];
    let sched = plan_pipeline(cfg.rounds, cfg.scenario.pool.num_slots, cfg.mode).unwrap();
    let scenario = generate_scenario(&cfg.scenario, seed).unwrap();
    let best = exhaustive_optimal(&scenario, &sched).unwrap();
    let opts = iscc_core::sacrl::TrainOptions {
        scenario_seed: seed,
        ..cfg.train.clone()
    };
    let mut ratios = Vec::new();
    let mut steps_ok = true;
    for train_seed in 0..3 {
        let sac = SacConfig {
            seed: train_seed,
            ..cfg.sac.clone()
        };
        let t0 = Instant::now();
        let out = train(&cfg.scenario, &sched, &sac, &opts).expect("training runs");
        steps_ok &= out.steps <= 20_000;
        let t = run_episode(&scenario, &out.policy, &sched).unwrap();
        ratios.push((t.cumulative_gain / best.gain, out.steps, t0.elapsed().as_secs_f64()));
        traces.push(t);
    }
    let detail: Vec<String> = ratios
        .iter()
        .map(|(r, s, secs)| format!("{r:.4} ({s} steps, {secs:.0}s)"))
        .collect();
    outcome(
        steps_ok && ratios.iter().all(|(r, _, _)| *r >= 0.95),
        format!(
            "optimum {:.4} over {} sequences, SAC/optimum for training seeds 0-2: {}",
            best.gain,
            best.sequences,
            detail.join(", ")
        ),
    )
}

fn robustness(traces: &mut Traces) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let with_out = |name: &str| RunConfig {
        out_dir: dir.path().join(name),
        ..load(&format!("robustness_{name}.toml"))
    };
    let slack = with_out("slack");
    let binding = with_out("binding");
    let report = cmd_robustness(&slack);
    let negative = cmd_robustness(&binding);
    for cfg in [&slack, &binding] {
        for pool in [&cfg.scenario.pool, cfg.robustness.short_pool.as_ref().unwrap()] {
            let sc = ScenarioConfig {
                pool: pool.clone(),
                ..cfg.scenario.clone()
            };
            traces.extend(run_policy(cfg, &sc, &cfg.policy).unwrap().into_iter().map(|(_, t)| t));
        }
    }
    let neg_gap = read_gap(&binding.out_dir);
    match report {
        Ok(r) => outcome(
            r.passed && r.allocations_differ && matches!(negative, Err(CliError::Assertion(_))),
            format!(
                "slack: {} slots gain {:.4}, {} slots gain {:.4}, gap {:.2e}, claims differ {}; binding control gap {:.3} ({})",
                r.long.slots,
                r.long.gain,
                r.short.slots,
                r.short.gain,
                r.relative_gap,
                r.allocations_differ,
                neg_gap,
                if negative.is_err() { "rejected" } else { "accepted" }
            ),
        ),
        Err(e) => outcome(false, format!("slack instance failed: {e}")),
    }
}

fn read_gap(dir: &Path) -> f64 {
    std::fs::read_to_string(dir.join("robustness.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v["relative_gap"].as_f64())
        .unwrap_or(f64::NAN)
}

fn gradients() -> Outcome {
    let cfg = load("tiny.toml");
    let sched = plan_pipeline(cfg.rounds, cfg.scenario.pool.num_slots, cfg.mode).unwrap();
    let mut worst = [0.0f64; 3];
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ts: Vec<Transition> = Vec::new();
        let mut ep = 0;
        while ts.len() < 8 {
            let scenario = generate_scenario(&cfg.scenario, seed * 10 + ep).unwrap();
            let norm = Normalization::for_scenario(&scenario);
            let mut env = MatchingEnv::new(scenario, sched.clone(), norm).unwrap();
            while !env.is_done() && ts.len() < 8 {
                let action = (0..cfg.scenario.n_clients)
                    .map(|_| rng.gen_range(0..cfg.scenario.n_edges))
                    .collect();
                ts.push(env.step(action).unwrap());
            }
            ep += 1;
        }
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        let mut agent = SacAgent::new(
            SacConfig {
                seed,
                ..cfg.sac.clone()
            },
            cfg.scenario.n_clients,
            cfg.scenario.n_edges,
            ts[0].state.len(),
        )
        .unwrap();
        // move every network away from its initial point first
        for _ in 0..25 {
            agent.update(&batch).unwrap();
        }
        worst[0] = worst[0].max(check_actor(&agent, &batch.states, 0.01, &mut rng));
        worst[1] = worst[1].max(check_critic(&agent, &batch, 0.01, &mut rng));
        worst[2] = worst[2].max(check_temperature(&agent, &batch.states));
    }
    outcome(
        worst.iter().all(|e| *e <= 1e-4),
        format!(
            "max relative error over 3 probes (8 states, 1% of parameters): actor {:.2e}, critic {:.2e}, temperature {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn conservation(traces: &Traces) -> Outcome {
    let mut pools = 0;
    let mut bad = 0;
    let mut over = 0;
    for t in traces {
        let a = audit_trace(t);
        pools += a.pools_checked;
        bad += a.rejected_claims + a.release_mismatches;
        over += t.snapshots.iter().filter(|s| !s.within_capacity).count();
    }
    outcome(
        bad == 0 && over == 0 && !traces.is_empty(),
        format!(
            "{} episodes, {pools} pool replays, {bad} rejected claims or release mismatches, {over} over-capacity snapshots",
            traces.len()
        ),
    )
}

fn determinism() -> Outcome {
    let run = |dir: PathBuf| {
        let cfg = RunConfig {
            out_dir: dir.clone(),
            ..load("traffic.toml")
        };
        cmd_simulate(&cfg).expect("simulate runs");
        let trace = std::fs::read(dir.join("trace.csv")).unwrap();
        let mut summary: Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
        let obj = summary.as_object_mut().unwrap();
        obj.remove("metadata");
        // the output directory is the one field that legitimately differs
        obj["config"].as_object_mut().unwrap().remove("out_dir");
        (trace, serde_json::to_vec_pretty(&summary).unwrap())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ta, sa) = run(a.path().to_path_buf());
    let (tb, sb) = run(b.path().to_path_buf());
    outcome(
        ta == tb && sa == sb,
        format!(
            "trace.csv {} bytes identical: {}, summary.json identical outside metadata: {}",
            ta.len(),
            ta == tb,
            sa == sb
        ),
    )
}

fn main() {
    let mut traces = Traces::new();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, o: Outcome| {
        println!(
            "criterion {n} [{name}]: {} : {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    record(1, "solver-oracle agreement", solver_matches_oracle());
    record(2, "zeros makespan", zeros_makespan(&mut traces));
    record(3, "baseline ordering", baseline_ordering(&mut traces));
    record(4, "learned policy near optimum", sac_near_optimal(&mut traces));
    record(5, "robustness 9 to 5 slots", robustness(&mut traces));
    record(6, "gradient correctness", gradients());
    record(7, "conservation audit", conservation(&traces));
    record(8, "determinism", determinism());
    let failed: Vec<usize> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
