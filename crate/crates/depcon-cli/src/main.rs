//! depcon: validate application models, synthesize deployment plans, and
//! run failure-injected cluster simulations.
//!
//! Exit codes: 0 success/converged, 1 validation or planning failure,
//! 2 unreadable or malformed input, 3 unrecoverable failure, 4 horizon
//! exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use depcon_cli::{
    load_application, load_cluster, load_scenario, render_plan_text, render_report_text,
    PlanOutput,
};
use depcon_core::model::{validate_application, AppIndex, Application, Cluster};
use depcon_core::planner::{check_label_flows, check_resources, map_nodes, synth_plan, NodeMapping};
use depcon_core::simnet::{run, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser)]
#[command(name = "depcon", version, about = "Deployment and configuration engine")]
struct Cli {
    /// Output format for reports and plans.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an application model's structural invariants.
    Validate { app: PathBuf },
    /// Map an application onto a cluster and print the deployment plan.
    Plan { app: PathBuf, cluster: PathBuf },
    /// Simulate deployment under a failure scenario and write the event log.
    Run {
        app: PathBuf,
        cluster: PathBuf,
        scenario: PathBuf,
        /// Overrides the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Event log destination; written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { app } => cmd_validate(&app, cli.format),
        Command::Plan { app, cluster } => cmd_plan(&app, &cluster, cli.format),
        Command::Run { app, cluster, scenario, seed, out } => {
            cmd_run(&app, &cluster, &scenario, seed, out.as_deref(), cli.format)
        }
    };
    ExitCode::from(code)
}

fn parse_fail(err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    2
}

fn cmd_validate(app_path: &Path, format: Format) -> u8 {
    let app = match load_application(app_path) {
        Ok(app) => app,
        Err(err) => return parse_fail(err),
    };
    let violations = validate_application(&app);
    match format {
        Format::Json => {
            let body = serde_json::json!({ "ok": violations.is_empty(), "violations": violations });
            println!("{body}");
        }
        Format::Text => {
            if violations.is_empty() {
                println!("ok");
            } else {
                for violation in &violations {
                    println!("{violation}");
                }
            }
        }
    }
    u8::from(!violations.is_empty())
}

/// Validation, label audit and node mapping shared by `plan` and `run`.
fn prepare(app: &Application, cluster: &Cluster) -> Result<(AppIndex, NodeMapping), u8> {
    let violations = validate_application(app);
    if !violations.is_empty() {
        for violation in &violations {
            println!("{violation}");
        }
        return Err(1);
    }
    let flows = check_label_flows(app);
    if !flows.is_empty() {
        for flow in &flows {
            println!("{flow}");
        }
        return Err(1);
    }
    let index = AppIndex::new(app).expect("validated");
    match map_nodes(&index, cluster, &NodeMapping::default()) {
        Ok(mapping) => Ok((index, mapping)),
        Err(err) => {
            println!("{err}");
            Err(1)
        }
    }
}

fn cmd_plan(app_path: &Path, cluster_path: &Path, format: Format) -> u8 {
    let app = match load_application(app_path) {
        Ok(app) => app,
        Err(err) => return parse_fail(err),
    };
    let cluster = match load_cluster(cluster_path) {
        Ok(cluster) => cluster,
        Err(err) => return parse_fail(err),
    };
    let (index, mapping) = match prepare(&app, &cluster) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let report = check_resources(&index, &mapping, &cluster);
    let plan = synth_plan(&index, &mapping);
    let output = PlanOutput {
        mapping,
        utilization: report.nodes,
        link_flows: report.link_flows,
        plan,
    };
    match format {
        Format::Json => println!("{}", serde_json::to_string(&output).expect("serializes")),
        Format::Text => print!("{}", render_plan_text(&output)),
    }
    0
}

fn cmd_run(
    app_path: &Path,
    cluster_path: &Path,
    scenario_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Format,
) -> u8 {
    let app = match load_application(app_path) {
        Ok(app) => app,
        Err(err) => return parse_fail(err),
    };
    let cluster = match load_cluster(cluster_path) {
        Ok(cluster) => cluster,
        Err(err) => return parse_fail(err),
    };
    let mut scenario: Scenario = match load_scenario(scenario_path) {
        Ok(scenario) => scenario,
        Err(err) => return parse_fail(err),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }

    if let Err(code) = prepare(&app, &cluster) {
        return code;
    }
    for (node, _) in &scenario.crashes {
        if !cluster.nodes.contains_key(node) {
            println!("scenario references unknown node {node}");
            return 1;
        }
    }
    let (dmin, dmax) = scenario.delay.bounds();
    let safe = scenario.heartbeat_period * scenario.miss_threshold.saturating_sub(1);
    if dmin > dmax || dmax > safe {
        println!(
            "scenario delay bounds [{dmin}, {dmax}] exceed the detector's tolerance (max {safe})"
        );
        return 1;
    }

    let output = run(&app, &cluster, &scenario);
    let jsonl = output.log.to_jsonl();
    match out {
        Some(path) => {
            if let Err(err) = std::fs::write(path, jsonl) {
                eprintln!("error: cannot write event log: {err}");
                return 2;
            }
        }
        None => print!("{jsonl}"),
    }
    match format {
        Format::Json => {
            println!("{}", serde_json::to_string(&output.report).expect("serializes"))
        }
        Format::Text => print!("{}", render_report_text(&output.report)),
    }
    output.report.outcome.exit_code()
}
