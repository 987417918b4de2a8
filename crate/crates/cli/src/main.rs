//! `maps2`: plan scenarios, monitor trajectories, plot results.
//!
//! Exit codes: 0 ok, 1 unsatisfied (or budget exhausted), 2 invalid input,
//! 3 runtime failure. Log verbosity comes from `MAPS2_LOG` (e.g. `info`).

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use maps2::monitor::{self, saturate, DEFAULT_DELTA};
use maps2::planner::{plan_problem, PlanOutcome};
use maps2::swarm::RunOptions;
use maps2::{parse, satisfies, PlanError, Runtime, Scenario, TrajectoryFile};

#[derive(Parser)]
#[command(name = "maps2", version, about = "Distributed multi-robot STL planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuntimeArg {
    Threaded,
    Sequential,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario and write trajectory.txt, report.json and metrics.json.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "threaded")]
        runtime: RuntimeArg,
        /// Also write every delivered state message to messages.csv.
        #[arg(long)]
        log_messages: bool,
    },
    /// Check a trajectory against a formula file.
    Monitor {
        trajectory: PathBuf,
        formula: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Render a trajectory as an SVG.
    Plot {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Unsatisfied(String),
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Unsatisfied(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAPS2_LOG", "warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Plan {
            scenario,
            out,
            runtime,
            log_messages,
        } => cmd_plan(&scenario, &out, runtime, log_messages),
        Command::Monitor {
            trajectory,
            formula,
            delta,
            json,
        } => cmd_monitor(&trajectory, &formula, delta, json),
        Command::Plot { trajectory, out } => cmd_plot(&trajectory, &out),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Unsatisfied(m) => eprintln!("unsatisfied: {m}"),
                Failure::Input(e) => eprintln!("invalid input: {e:#}"),
                Failure::Runtime(e) => eprintln!("runtime failure: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Input)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

fn cmd_plan(scenario_path: &Path, out: &Path, rt: RuntimeArg, log_messages: bool) -> Result<(), Failure> {
    let scenario = Scenario::from_toml(&read(scenario_path)?).map_err(input)?;
    let problem = scenario.to_problem().map_err(input)?;
    let options = RunOptions {
        runtime: match rt {
            RuntimeArg::Threaded => Runtime::Threaded,
            RuntimeArg::Sequential => Runtime::Sequential,
        },
        log_messages,
        ..RunOptions::default()
    };
    info!("planning {} with {} robots", scenario.name, problem.robots.len());
    let start = Instant::now();
    let outcome = plan_problem(&problem, &options);
    let wall = start.elapsed();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ PlanError::Budget { .. }) => return Err(Failure::Unsatisfied(e.to_string())),
        Err(e @ (PlanError::Invalid(_) | PlanError::Unsupported(_) | PlanError::Pnf(_))) => return Err(input(e)),
        Err(e) => return Err(runtime(e)),
    };
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Runtime)?;
    let traj = TrajectoryFile::from_trees(&scenario.hash, problem.params.seed, &scenario.formula, &outcome.trees);
    write(&out.join("trajectory.txt"), &traj.render())?;

    let trace = traj.to_trace().map_err(runtime)?;
    let check = satisfies(&problem.formula, &trace, problem.params.resolution).map_err(runtime)?;
    let report = report_json(&scenario, &outcome, check.rho, check.verdict, problem.params.resolution);
    write(&out.join("report.json"), &pretty(&report))?;
    let metrics = json!({
        "scenario": scenario.name,
        "scenario_hash": scenario.hash,
        "robots": problem.robots.len(),
        "predicates": problem.formula.predicates().len(),
        "branch": outcome.branch,
        "iterations": outcome.iterations,
        "total_iterations": outcome.total_iterations,
        "resets": outcome.resets,
        "wall_time_s": wall.as_secs_f64(),
        "max_agent_time_s": outcome.max_agent_time.as_secs_f64(),
        "messages": outcome.messages.len(),
    });
    write(&out.join("metrics.json"), &pretty(&metrics))?;
    if log_messages {
        let mut csv = String::from("branch,j,k,sender,receiver\n");
        for m in &outcome.messages {
            csv.push_str(&format!("{},{},{},{},{}\n", m.branch, m.j, m.k, m.sender.0, m.receiver.0));
        }
        write(&out.join("messages.csv"), &csv)?;
    }
    println!("{}", outcome.report);
    println!(
        "monitor rho = {} ({})",
        check.rho,
        if check.verdict { "satisfied" } else { "violated" }
    );
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn report_json(scenario: &Scenario, o: &PlanOutcome, rho: f64, verdict: bool, delta: f64) -> Value {
    let paths: Vec<Value> = o
        .report
        .paths
        .iter()
        .map(|p| {
            json!({
                "path": p.id.to_string(),
                "text": p.text,
                "tau": p.tau.value(),
                "kind": format!("{:?}", p.kind),
                "lo": p.lo,
                "hi": p.hi,
            })
        })
        .collect();
    let eventually: Vec<Value> = o
        .report
        .eventually
        .iter()
        .map(|e| json!({ "text": e.text, "t_star": e.instant, "tau": e.tau.value() }))
        .collect();
    json!({
        "scenario": scenario.name,
        "scenario_hash": scenario.hash,
        "seed": scenario.params.seed,
        "formula": scenario.formula,
        "branch": o.branch,
        "branch_formula": o.branch_formula.to_string(),
        "root_tau": o.report.root.value(),
        "paths": paths,
        "eventually": eventually,
        "monitor": { "rho": saturate(rho), "verdict": verdict, "delta": delta },
    })
}

fn cmd_monitor(traj_path: &Path, formula_path: &Path, delta: f64, as_json: bool) -> Result<(), Failure> {
    let traj = TrajectoryFile::parse(&read(traj_path)?).map_err(input)?;
    let formula = parse(read(formula_path)?.trim()).map_err(input)?;
    let trace = traj.to_trace().map_err(input)?;
    let report = monitor::satisfies(&formula, &trace, delta).map_err(input)?;
    if as_json {
        print!("{}", pretty(&serde_json::to_value(&report).map_err(runtime)?));
    } else {
        print!("{report}");
    }
    if report.verdict {
        Ok(())
    } else {
        let worst = report
            .nodes
            .iter()
            .filter_map(|n| {
                n.h.as_ref()
                    .filter(|h| h.max > 0.0)
                    .map(|h| format!("{} at t = {}", n.formula, h.worst_time))
            })
            .collect::<Vec<_>>()
            .join("; ");
        Err(Failure::Unsatisfied(format!("rho = {}; worst: {worst}", report.rho)))
    }
}

fn cmd_plot(traj_path: &Path, out: &Path) -> Result<(), Failure> {
    let traj = TrajectoryFile::parse(&read(traj_path)?).map_err(input)?;
    let formula = parse(&traj.formula).ok();
    let svg = plot::render(&traj, formula.as_ref());
    write(out, &svg)
}
