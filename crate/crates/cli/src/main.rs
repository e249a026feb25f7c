//! Command-line front end for the mission planner: plan, coordinate,
//! compare, gen, render and validate.

mod gantt;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ops::RenderFormat;

#[derive(Parser)]
#[command(
    name = "brickplan",
    about = "Mission planning and coordination for heterogeneous robot teams building brick walls",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a mission through the coordination pipeline and print a summary
    Plan {
        /// Mission file (JSON)
        mission: PathBuf,
        /// Quality weight override
        #[arg(long)]
        alpha: Option<f64>,
        /// Duration weight override
        #[arg(long)]
        beta: Option<f64>,
        /// Cost weight override
        #[arg(long)]
        gamma: Option<f64>,
        /// Market-preference weight override
        #[arg(long)]
        delta: Option<f64>,
        /// Seed for the coordination runtime
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the schedule JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coordination pipeline and record the full message trace
    Coordinate {
        /// Mission file (JSON)
        mission: PathBuf,
        /// Seed for the coordination runtime
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the schedule JSON here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the newline-delimited JSON message trace here
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare the planner and the auction baseline against the exhaustive
    /// optimum over a corpus of mission files
    Compare {
        /// Directory of mission JSON files
        corpus_dir: PathBuf,
        /// Which set of criteria rows to evaluate
        #[arg(long, default_value = "table1")]
        criteria_set: String,
        /// Write the JSON gap report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded random mission
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of bricks in the wall
        #[arg(long)]
        bricks: usize,
        /// Number of robots (one ground robot when more than one)
        #[arg(long)]
        agents: usize,
        /// Write the mission JSON here (stdout otherwise)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a schedule file as a Gantt chart
    Render {
        /// Schedule file written by plan/coordinate
        schedule: PathBuf,
        #[arg(long, value_enum, default_value_t = RenderFormat::Text)]
        format: RenderFormat,
        /// Write the artifact here (stdout otherwise)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a mission file and the task tree generated from it
    Validate {
        /// Mission file (JSON)
        mission: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan {
            mission,
            alpha,
            beta,
            gamma,
            delta,
            seed,
            out,
        } => ops::plan(mission, *alpha, *beta, *gamma, *delta, *seed, out.as_ref()),
        Command::Coordinate {
            mission,
            seed,
            out,
            trace,
        } => ops::coordinate(mission, *seed, out.as_ref(), trace.as_ref()),
        Command::Compare {
            corpus_dir,
            criteria_set,
            out,
        } => ops::compare(corpus_dir, criteria_set, out.as_ref()),
        Command::Gen {
            seed,
            bricks,
            agents,
            out,
        } => ops::gen(*seed, *bricks, *agents, out.as_ref()),
        Command::Render {
            schedule,
            format,
            out,
        } => ops::render(schedule, *format, out.as_ref()),
        Command::Validate { mission } => ops::validate(mission),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
