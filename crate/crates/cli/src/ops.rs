//! Implementations of the CLI verbs, mapped to stable exit codes:
//! 2 parse error, 3 invalid weights or sizes, 4 planning failure,
//! 5 oracle guard violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use brickplan_core::coordinate::run_coordination;
use brickplan_core::mission::{validate_spec, Criteria, MissionSpec};
use brickplan_core::oracle::{self, GapReport, Planner};
use brickplan_core::schedule::{task_counts, Schedule};
use brickplan_core::taems::validate_tree;

use crate::gantt;

#[derive(Debug)]
pub enum CliError {
    /// A file could not be read or did not parse. Exit 2.
    Parse(String),
    /// Weights or sizes outside their allowed ranges. Exit 3.
    Invalid(String),
    /// The planner failed on a parsable, well-formed request. Exit 4.
    Planning(String),
    /// The corpus violates the exhaustive-search guard. Exit 5.
    Guard(String),
    /// Validation found violations. Exit 1.
    Violations(String),
    /// Output could not be written. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Planning(_) => 4,
            CliError::Guard(_) => 5,
            CliError::Violations(_) | CliError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::Invalid(m)
            | CliError::Planning(m)
            | CliError::Guard(m)
            | CliError::Violations(m)
            | CliError::Io(m) => m,
        }
    }
}

fn read_mission(path: &Path) -> Result<MissionSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("cannot parse {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn schedule_json(schedule: &Schedule) -> String {
    let mut text = serde_json::to_string_pretty(schedule).expect("serializable schedule");
    text.push('\n');
    text
}

fn summary(schedule: &Schedule, spec: &MissionSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "makespan: {}", schedule.makespan);
    let _ = writeln!(out, "total_cost: {}", schedule.total_cost);
    let _ = writeln!(out, "total_quality: {}", schedule.total_quality);
    let _ = writeln!(out, "tasks per agent:");
    for (agent, count) in task_counts(schedule, spec) {
        let _ = writeln!(out, "  {agent}: {count}");
    }
    out
}

fn apply_overrides(
    spec: &mut MissionSpec,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
) -> Result<(), CliError> {
    let c = &mut spec.criteria;
    if let Some(a) = alpha {
        c.alpha = a;
    }
    if let Some(b) = beta {
        c.beta = b;
    }
    if let Some(g) = gamma {
        c.gamma = g;
    }
    if let Some(d) = delta {
        c.delta = d;
    }
    if !c.is_valid() {
        return Err(CliError::Invalid(format!(
            "invalid criteria: alpha={} beta={} gamma={} delta={} \
             (alpha+beta+gamma must be 1 with all non-negative, delta in [0.5, 1))",
            c.alpha, c.beta, c.gamma, c.delta
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn plan(
    mission: &Path,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
    seed: u64,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut spec = read_mission(mission)?;
    apply_overrides(&mut spec, alpha, beta, gamma, delta)?;
    let (schedule, _) =
        run_coordination(&spec, seed).map_err(|e| CliError::Planning(e.to_string()))?;
    if let Some(path) = out {
        write_output(path, &schedule_json(&schedule))?;
    }
    print!("{}", summary(&schedule, &spec));
    Ok(())
}

pub fn coordinate(
    mission: &Path,
    seed: u64,
    out: Option<&PathBuf>,
    trace_out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let spec = read_mission(mission)?;
    if !spec.criteria.is_valid() {
        return Err(CliError::Invalid("mission criteria are invalid".into()));
    }
    let (schedule, trace) =
        run_coordination(&spec, seed).map_err(|e| CliError::Planning(e.to_string()))?;
    if let Some(path) = out {
        write_output(path, &schedule_json(&schedule))?;
    }
    if let Some(path) = trace_out {
        let mut lines = String::new();
        for message in &trace {
            lines.push_str(&serde_json::to_string(message).expect("serializable message"));
            lines.push('\n');
        }
        write_output(path, &lines)?;
    }
    println!("messages: {}", trace.len());
    print!("{}", summary(&schedule, &spec));
    Ok(())
}

/// The five criteria rows of the comparison table.
pub const TABLE_ROWS: [(f64, f64, f64); 5] = [
    (0.5, 0.35, 0.15),
    (0.35, 0.15, 0.5),
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
];

fn corpus_from_dir(dir: &Path) -> Result<Vec<MissionSpec>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    paths.sort();
    let mut corpus = Vec::new();
    for path in paths {
        corpus.push(read_mission(&path)?);
    }
    Ok(corpus)
}

fn gap_table(rows: &[(Criteria, GapReport, GapReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<34} | {:<4} | {:>9} | {:>9}",
        "criteria", "", "proposed", "auction"
    );
    let _ = writeln!(out, "{}", "-".repeat(34 + 3 + 4 + 3 + 9 + 3 + 9));
    for (criteria, method, auction) in rows {
        let label = format!(
            "alpha={:.2} beta={:.2} gamma={:.2}",
            criteria.alpha, criteria.beta, criteria.gamma
        );
        let _ = writeln!(
            out,
            "{:<34} | {:<4} | {:>8.2}% | {:>8.2}%",
            label, "mean", method.mean_gap, auction.mean_gap
        );
        let _ = writeln!(
            out,
            "{:<34} | {:<4} | {:>8.2}% | {:>8.2}%",
            "", "std", method.std_gap, auction.std_gap
        );
    }
    out
}

pub fn compare(
    corpus_dir: &Path,
    criteria_set: &str,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    if criteria_set != "table1" {
        return Err(CliError::Invalid(format!(
            "unknown criteria set {criteria_set:?} (available: table1)"
        )));
    }
    let corpus = corpus_from_dir(corpus_dir)?;
    if corpus.is_empty() {
        return Err(CliError::Guard(format!(
            "no mission files in {}",
            corpus_dir.display()
        )));
    }
    let mut rows = Vec::new();
    for (alpha, beta, gamma) in TABLE_ROWS {
        let criteria = Criteria::new(alpha, beta, gamma, 0.7);
        let method = oracle::gap_report(&corpus, &criteria, Planner::Coordination)
            .map_err(|e| match e {
                oracle::OracleError::TooLarge { .. } => CliError::Guard(e.to_string()),
                other => CliError::Planning(other.to_string()),
            })?;
        let auction =
            oracle::gap_report(&corpus, &criteria, Planner::Auction).map_err(|e| match e {
                oracle::OracleError::TooLarge { .. } => CliError::Guard(e.to_string()),
                other => CliError::Planning(other.to_string()),
            })?;
        rows.push((criteria, method, auction));
    }
    print!("{}", gap_table(&rows));
    if let Some(path) = out {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|(c, method, auction)| {
                serde_json::json!({
                    "alpha": c.alpha,
                    "beta": c.beta,
                    "gamma": c.gamma,
                    "proposed": method,
                    "auction": auction,
                })
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&serde_json::json!({ "rows": json_rows }))
            .expect("serializable report");
        text.push('\n');
        write_output(path, &text)?;
    }
    Ok(())
}

pub fn gen(
    seed: u64,
    bricks: usize,
    agents: usize,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    if bricks == 0 {
        return Err(CliError::Invalid("missions need at least one brick".into()));
    }
    if agents == 0 {
        return Err(CliError::Invalid("missions need at least one agent".into()));
    }
    let spec = oracle::random_mission(seed, bricks, agents);
    let mut text = serde_json::to_string_pretty(&spec).expect("serializable mission");
    text.push('\n');
    match out {
        Some(path) => write_output(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RenderFormat {
    Svg,
    Text,
}

pub fn render(
    schedule_path: &Path,
    format: RenderFormat,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(schedule_path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", schedule_path.display())))?;
    let schedule: Schedule = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("cannot parse {}: {e}", schedule_path.display())))?;
    let rendered = match format {
        RenderFormat::Svg => gantt::render_svg(&schedule),
        RenderFormat::Text => gantt::render_text(&schedule),
    };
    match out {
        Some(path) => write_output(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

pub fn validate(mission: &Path) -> Result<(), CliError> {
    let spec = read_mission(mission)?;
    validate_spec(&spec).map_err(|e| CliError::Violations(e.to_string()))?;
    let tree = brickplan_core::mission::generate_tree(&spec)
        .map_err(|e| CliError::Violations(e.to_string()))?;
    let violations = validate_tree(&tree);
    if violations.is_empty() {
        println!(
            "ok: {} bricks, {} agents, {} nodes",
            spec.bricks.len(),
            spec.agents.len(),
            tree.nodes.len()
        );
        Ok(())
    } else {
        let mut msg = String::new();
        for violation in &violations {
            let _ = writeln!(msg, "{violation}");
        }
        Err(CliError::Violations(msg))
    }
}
