//! Planning and coordination engine for heterogeneous robot teams building
//! brick walls.
//!
//! The pipeline: a declarative [`mission::MissionSpec`] is translated into a
//! hierarchical [`taems::TaemsTree`]; agents assess every task; redundancy
//! between capable agents is resolved through the market-based machinery in
//! [`allocate`]; the resulting assignments are simulated into a timed
//! [`schedule::Schedule`]; and [`coordinate`] runs the same pipeline as
//! message-passing agent processes. [`oracle`] supplies exhaustive optima,
//! an auction baseline and optimality-gap reports.

pub mod allocate;
pub mod coordinate;
pub mod mission;
pub mod oracle;
pub mod schedule;
pub mod taems;

pub use allocate::{AllocationScheme, AssignmentMatrix, RatingWeights};
pub use mission::{AgentKind, AgentSpec, Assessment, Brick, Color, Criteria, MissionSpec};
pub use schedule::{Schedule, ScheduledAction};
pub use taems::{AgentId, NodeId, Qaf, TaemsNode, TaemsTree};
