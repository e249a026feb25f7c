//! Ground truth for benchmarking: an exhaustive optimal planner over
//! assignments and per-agent orderings, a centralized iterated-auction
//! baseline, a seeded random mission generator, and optimality-gap
//! statistics.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocate::{AssignmentMatrix, Release};
use crate::coordinate::{self, CoordError};
use crate::mission::{
    self, AgentKind, AgentSpec, Brick, Color, Criteria, MissionSpec, ScoreTable, WallPose,
};
use crate::schedule::{self, Assignments, ExecState, Schedule, ScheduleError};
use crate::taems::{AgentId, NodeId, TaemsTree};

/// Enumeration guard: beyond this the exhaustive search is not attempted.
pub const MAX_ORACLE_BRICKS: usize = 6;
pub const MAX_ORACLE_AGENTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search ({bricks} bricks, {agents} agents)")]
    TooLarge { bricks: usize, agents: usize },
    #[error("the auction baseline does not handle joint transports")]
    UnsupportedJointTask,
    #[error("no feasible plan exists for this mission")]
    NoFeasiblePlan,
    #[error(transparent)]
    Mission(#[from] mission::MissionError),
    #[error(transparent)]
    Coordination(#[from] CoordError),
    #[error(transparent)]
    Scheduling(#[from] ScheduleError),
}

/// The optimum found by exhaustive search.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub schedule: Schedule,
    pub objective: f64,
}

/// Independent reference for the assignment solver: enumerate every
/// injective subtask-to-agent mapping and return the best summed rating.
pub fn enumerate_gap_optimum(matrix: &AssignmentMatrix) -> f64 {
    let n = matrix.subtasks.len();
    (0..matrix.agents.len())
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(j, &i)| matrix.ratings[i][j])
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn guard(spec: &MissionSpec) -> Result<(), OracleError> {
    let bricks = spec.bricks.len();
    let agents = spec.physical_agents().count();
    if bricks > MAX_ORACLE_BRICKS || agents > MAX_ORACLE_AGENTS {
        return Err(OracleError::TooLarge { bricks, agents });
    }
    Ok(())
}

/// Every executor choice for one brick: the task units to assign and the
/// agents that take them. Plain bricks offer one unit per feasible agent;
/// joint bricks offer every ordered pair of distinct eligible members.
fn brick_choices(spec: &MissionSpec, brick: &Brick) -> Vec<Vec<(NodeId, AgentId)>> {
    if brick.color == Color::Orange {
        let members: Vec<&AgentSpec> = spec
            .agents
            .iter()
            .filter(|a| a.kind == AgentKind::Uav)
            .filter(|a| {
                mission::assess_task(spec, a, &mission::task_id(&brick.id, Some(1))).is_feasible()
            })
            .collect();
        let mut choices = Vec::new();
        for first in &members {
            for second in &members {
                if first.id == second.id {
                    continue;
                }
                choices.push(vec![
                    (mission::task_id(&brick.id, Some(1)), first.id.clone()),
                    (mission::task_id(&brick.id, Some(2)), second.id.clone()),
                ]);
            }
        }
        choices
    } else {
        let tb = mission::task_id(&brick.id, None);
        spec.agents
            .iter()
            .filter(|a| a.kind != AgentKind::Uavx2)
            .filter(|a| mission::assess_task(spec, a, &tb).is_feasible())
            .map(|a| vec![(tb.clone(), a.id.clone())])
            .collect()
    }
}

/// Simulates a plan in which each agent works through its task list in the
/// prescribed order, never reordering. Joint slots still synchronize on
/// both members being ready.
fn simulate_prescribed(
    spec: &MissionSpec,
    tree: &TaemsTree,
    assignments: &Assignments,
    order: &BTreeMap<AgentId, Vec<NodeId>>,
) -> Result<Schedule, ScheduleError> {
    let mut state = ExecState::new(spec, tree, assignments)?;
    let agents: Vec<AgentId> = order.keys().cloned().collect();

    // The next action an agent must run: the first unfinished action of the
    // earliest unfinished task in its list.
    fn next_action(
        state: &ExecState,
        tree: &TaemsTree,
        order: &BTreeMap<AgentId, Vec<NodeId>>,
        agent: &AgentId,
    ) -> Option<NodeId> {
        for task in order.get(agent).into_iter().flatten() {
            let node = tree.node(task)?;
            for child in &node.children {
                if state.is_done(child) {
                    continue;
                }
                if state.is_in_progress(child) {
                    return None;
                }
                return Some(child.clone());
            }
        }
        None
    }

    loop {
        loop {
            let mut started = false;
            for agent in &agents {
                if !state.agent_idle(agent) {
                    continue;
                }
                let Some(action) = next_action(&state, tree, order, agent) else {
                    continue;
                };
                if !state.is_startable(agent, &action) {
                    continue;
                }
                match state.joint_partner(&action) {
                    None => {
                        state.start(agent, &action)?;
                        started = true;
                    }
                    Some((partner_action, partner_agent)) => {
                        if state.agent_idle(&partner_agent)
                            && next_action(&state, tree, order, &partner_agent).as_ref()
                                == Some(&partner_action)
                            && state.is_startable(&partner_agent, &partner_action)
                        {
                            state.start(agent, &action)?;
                            state.start(&partner_agent, &partner_action)?;
                            started = true;
                        }
                    }
                }
            }
            if !started {
                break;
            }
        }
        if state.is_quiescent() {
            if state.is_finished() {
                break;
            }
            return Err(ScheduleError::Deadlock {
                blocked: state.blocked(),
            });
        }
        state.advance();
    }
    Ok(state.into_schedule(tree, spec))
}

/// Exhausts all feasible executor assignments and all per-agent task
/// orderings, simulates each plan, and keeps the one maximizing the
/// objective. Orderings that deadlock against the relations are skipped.
/// Ties keep the first plan found in the deterministic enumeration order.
pub fn exhaustive_optimal(
    spec: &MissionSpec,
    criteria: &Criteria,
) -> Result<OracleResult, OracleError> {
    guard(spec)?;
    let tree = mission::generate_tree(spec)?;
    let bounds = schedule::reference_bounds(spec);
    let bricks = spec.brick_order();
    let per_brick: Vec<Vec<Vec<(NodeId, AgentId)>>> =
        bricks.iter().map(|b| brick_choices(spec, b)).collect();
    if per_brick.iter().any(|c| c.is_empty()) {
        return Err(OracleError::NoFeasiblePlan);
    }

    let mut best: Option<(f64, Schedule)> = None;
    for combo in per_brick.iter().multi_cartesian_product() {
        let mut assignments = Assignments::default();
        let mut loads: BTreeMap<AgentId, Vec<NodeId>> = spec
            .physical_agents()
            .map(|a| (a.id.clone(), Vec::new()))
            .collect();
        for unit_choice in &combo {
            for (unit, agent) in unit_choice.iter() {
                assignments.assign(unit.clone(), agent.clone());
                loads.entry(agent.clone()).or_default().push(unit.clone());
            }
        }

        let agent_names: Vec<AgentId> = loads.keys().cloned().collect();
        let per_agent_orders: Vec<Vec<Vec<NodeId>>> = agent_names
            .iter()
            .map(|a| {
                let units = &loads[a];
                units.iter().cloned().permutations(units.len()).collect()
            })
            .collect();
        for ordering in per_agent_orders.iter().multi_cartesian_product() {
            let order: BTreeMap<AgentId, Vec<NodeId>> = agent_names
                .iter()
                .cloned()
                .zip(ordering.iter().map(|o| (*o).clone()))
                .collect();
            let Ok(schedule) = simulate_prescribed(spec, &tree, &assignments, &order) else {
                continue;
            };
            let j = schedule::objective_from_parts(
                schedule.total_quality,
                schedule.makespan,
                schedule.total_cost,
                &bounds,
                criteria,
            );
            let better = match &best {
                None => true,
                Some((jb, _)) => j > *jb,
            };
            if better {
                best = Some((j, schedule));
            }
        }
    }
    best.map(|(objective, schedule)| OracleResult {
        schedule,
        objective,
    })
    .ok_or(OracleError::NoFeasiblePlan)
}

/// Centralized iterated auction: an auctioneer repeatedly offers the
/// precedence-ready tasks and every agent bids the objective value the
/// partial plan would reach with the task appended to its timeline; the
/// best bid wins, ties preferring the lower task id then the lower agent
/// id. Joint transports are out of this baseline's scope.
pub fn auction_baseline(spec: &MissionSpec, criteria: &Criteria) -> Result<Schedule, OracleError> {
    if spec.bricks.iter().any(|b| b.color == Color::Orange) {
        return Err(OracleError::UnsupportedJointTask);
    }
    let tree = mission::generate_tree(spec)?;
    let bounds = schedule::reference_bounds(spec);
    let precedence = coordinate::task_precedences(&tree);

    struct AgentState {
        avail: f64,
        position: [f64; 2],
    }
    let mut agents: BTreeMap<AgentId, AgentState> = spec
        .physical_agents()
        .map(|a| {
            (
                a.id.clone(),
                AgentState {
                    avail: 0.0,
                    position: a.start_position,
                },
            )
        })
        .collect();

    let mut unassigned: BTreeSet<NodeId> = spec
        .bricks
        .iter()
        .map(|b| mission::task_id(&b.id, None))
        .collect();
    let mut start_of: BTreeMap<NodeId, f64> = BTreeMap::new();
    // Release instants per assigned task: (after pick-up, after completion).
    let mut release_of: BTreeMap<NodeId, (f64, f64)> = BTreeMap::new();
    let mut assignments = Assignments::default();
    let mut order: BTreeMap<AgentId, Vec<NodeId>> =
        agents.keys().map(|a| (a.clone(), Vec::new())).collect();
    let mut quality_sum = 0.0;
    let mut cost_sum = 0.0;

    struct Bid {
        value: f64,
        task: NodeId,
        agent: AgentId,
        start: f64,
        chain: [f64; 4],
        quality: f64,
        cost: f64,
    }

    while !unassigned.is_empty() {
        let mut best: Option<Bid> = None;
        for task in &unassigned {
            let preds: Vec<_> = precedence.iter().filter(|p| &p.succ == task).collect();
            if preds.iter().any(|p| !start_of.contains_key(&p.pred)) {
                continue;
            }
            let mut ready = 0.0f64;
            for p in &preds {
                let (after_pickup, after_completion) = release_of[&p.pred];
                ready = ready.max(match p.release {
                    Release::AfterPickup => after_pickup,
                    Release::AfterCompletion => after_completion,
                });
            }
            let (brick_id, _) = mission::parse_task_id(task).expect("transport id");
            let brick = spec.brick(&brick_id).expect("known brick");
            for (agent_id, state) in &agents {
                let agent = spec.agent(agent_id).expect("known agent");
                let mut chain = [0.0f64; 4];
                let mut cost = 0.0;
                let mut quality = 0.0;
                let mut pos = state.position;
                let mut feasible = true;
                for (i, verb) in mission::Verb::CHAIN.into_iter().enumerate() {
                    let parsed = mission::ActionRef {
                        verb,
                        brick_id: brick_id.clone(),
                        slot: None,
                    };
                    match mission::assess_action_from(spec, agent, &parsed, pos) {
                        Ok(a) if a.is_feasible() => {
                            chain[i] = a.duration;
                            cost += a.cost;
                            quality += a.quality;
                        }
                        _ => {
                            feasible = false;
                            break;
                        }
                    }
                    match verb {
                        mission::Verb::GoToPile => pos = brick.pile_position,
                        mission::Verb::GoToWall => pos = brick.wall_pose.xy(),
                        _ => {}
                    }
                }
                if !feasible {
                    continue;
                }
                let start = state.avail.max(ready);
                let completion = start + chain.iter().sum::<f64>();
                let makespan = agents.values().map(|s| s.avail).fold(completion, f64::max);
                let value = schedule::objective_from_parts(
                    quality_sum + quality,
                    makespan,
                    cost_sum + cost,
                    &bounds,
                    criteria,
                );
                let better = match &best {
                    None => true,
                    Some(b) => {
                        value > b.value
                            || (value == b.value && (task, agent_id) < (&b.task, &b.agent))
                    }
                };
                if better {
                    best = Some(Bid {
                        value,
                        task: task.clone(),
                        agent: agent_id.clone(),
                        start,
                        chain,
                        quality,
                        cost,
                    });
                }
            }
        }
        let Some(bid) = best else {
            return Err(OracleError::NoFeasiblePlan);
        };
        let completion = bid.start + bid.chain.iter().sum::<f64>();
        start_of.insert(bid.task.clone(), bid.start);
        release_of.insert(
            bid.task.clone(),
            (bid.start + bid.chain[0] + bid.chain[1], completion),
        );
        let (brick_id, _) = mission::parse_task_id(&bid.task).expect("transport id");
        let brick = spec.brick(&brick_id).expect("known brick");
        {
            let state = agents.get_mut(&bid.agent).expect("known agent");
            state.avail = completion;
            state.position = brick.wall_pose.xy();
        }
        quality_sum += bid.quality;
        cost_sum += bid.cost;
        unassigned.remove(&bid.task);
        assignments.assign(bid.task.clone(), bid.agent.clone());
        order
            .get_mut(&bid.agent)
            .expect("known agent")
            .push(bid.task);
    }

    Ok(simulate_prescribed(spec, &tree, &assignments, &order)?)
}

/// Deterministic random mission: a layered wall of red/green/blue bricks
/// with per-color piles, one ground robot when the roster size allows and
/// the rest aerial, with paper-plausible speed and cost ranges (the ground
/// robot is slower and a fifth of the aerial cost per second).
pub fn random_mission(seed: u64, n_bricks: usize, n_agents: usize) -> MissionSpec {
    assert!(n_bricks >= 1, "missions need at least one brick");
    assert!(n_agents >= 1, "missions need at least one agent");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut agents = Vec::new();
    let n_uav = if n_agents == 1 { 1 } else { n_agents - 1 };
    for i in 1..=n_uav {
        agents.push(AgentSpec {
            id: AgentId::new(format!("uav{i}")),
            kind: AgentKind::Uav,
            speed: rng.gen_range(1.0..3.0),
            cost_rate: 1.0,
            start_position: [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)],
            reach_height: None,
            member_ids: None,
        });
    }
    if n_agents > 1 {
        agents.push(AgentSpec {
            id: AgentId::new("ugv1"),
            kind: AgentKind::Ugv,
            speed: rng.gen_range(0.3..0.95),
            cost_rate: 0.2,
            start_position: [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)],
            reach_height: Some(1.5),
            member_ids: None,
        });
    }

    let piles: BTreeMap<Color, [f64; 2]> = [Color::Red, Color::Green, Color::Blue]
        .into_iter()
        .map(|c| (c, [rng.gen_range(4.0..15.0), rng.gen_range(6.0..15.0)]))
        .collect();

    let per_layer = n_bricks.div_ceil(2).max(1);
    let mut bricks: Vec<Brick> = Vec::new();
    let mut layer_extents: BTreeMap<u32, Vec<(f64, f64, String)>> = BTreeMap::new();
    let mut cursor = 0.0f64;
    for i in 0..n_bricks {
        let layer = (i / per_layer) as u32;
        if i % per_layer == 0 {
            cursor = 0.0;
        }
        let color = match rng.gen_range(0..3) {
            0 => Color::Red,
            1 => Color::Green,
            _ => Color::Blue,
        };
        // Challenge sizes per color.
        let length = match color {
            Color::Red => 0.3,
            Color::Green => 0.6,
            _ => 1.2,
        };
        let (x0, x1) = (cursor, cursor + length);
        cursor = x1;
        let supports: Vec<String> = if layer == 0 {
            Vec::new()
        } else {
            layer_extents
                .get(&(layer - 1))
                .into_iter()
                .flatten()
                .filter(|(s0, s1, _)| *s0 < x1 - 1e-9 && x0 < *s1 - 1e-9)
                .map(|(_, _, id)| id.clone())
                .collect()
        };
        let id = format!("b{}", i + 1);
        layer_extents
            .entry(layer)
            .or_default()
            .push((x0, x1, id.clone()));
        bricks.push(Brick {
            id,
            color,
            length,
            width: 0.2,
            height: 0.2,
            pile_position: piles[&color],
            wall_pose: WallPose {
                position: [(x0 + x1) / 2.0, 20.0, layer as f64 * 0.2],
                yaw: 0.0,
            },
            layer,
            supports,
        });
    }

    MissionSpec {
        bricks,
        agents,
        score_table: ScoreTable::default(),
        criteria: Criteria::default(),
        fixed_grab_s: 5.0,
        fixed_release_s: 5.0,
    }
}

/// Which planner a gap report measures against the exhaustive optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Planner {
    /// The decentralized coordination pipeline.
    Coordination,
    /// The centralized iterated-auction baseline.
    Auction,
}

/// Optimality gaps of one planner over a mission corpus for one criteria
/// setting. Gaps are percentages relative to the exhaustive optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub gaps: Vec<f64>,
}

impl GapReport {
    fn from_gaps(criteria: &Criteria, gaps: Vec<f64>) -> Self {
        let n = gaps.len();
        let mean = if n == 0 {
            0.0
        } else {
            gaps.iter().sum::<f64>() / n as f64
        };
        let std = if n > 1 {
            (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        GapReport {
            alpha: criteria.alpha,
            beta: criteria.beta,
            gamma: criteria.gamma,
            mean_gap: mean,
            std_gap: std,
            gaps,
        }
    }
}

/// Runs one planner over the corpus and reports its optimality gaps:
/// `100 * (J_opt - J_planner) / J_opt` per mission, with the mean and the
/// sample standard deviation.
pub fn gap_report(
    corpus: &[MissionSpec],
    criteria: &Criteria,
    planner: Planner,
) -> Result<GapReport, OracleError> {
    let mut gaps = Vec::with_capacity(corpus.len());
    for spec in corpus {
        guard(spec)?;
        let mut spec = spec.clone();
        spec.criteria = Criteria { delta: spec.criteria.delta, ..*criteria };
        let optimum = exhaustive_optimal(&spec, criteria)?;
        let planned = match planner {
            Planner::Coordination => coordinate::run_coordination(&spec, 0)?.0,
            Planner::Auction => auction_baseline(&spec, criteria)?,
        };
        let j = schedule::objective(&planned, &spec, criteria);
        let gap = if optimum.objective.abs() <= f64::EPSILON {
            0.0
        } else {
            100.0 * (optimum.objective - j) / optimum.objective
        };
        gaps.push(gap);
    }
    Ok(GapReport::from_gaps(criteria, gaps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocate;
    use crate::mission::testkit::{brick, spec_with, uav};
    use crate::schedule::check_schedule;

    #[test]
    fn single_brick_two_agents_enumerates_both_plans() {
        let spec = spec_with(
            vec![brick("R1", Color::Red, 0.3, 0, 0.15)],
            vec![uav("uav1", 2.0), uav("uav2", 1.0)],
        );
        let result = exhaustive_optimal(&spec, &Criteria::new(0.0, 1.0, 0.0, 0.7)).unwrap();
        // The faster agent wins the duration-weighted objective.
        assert!(result
            .schedule
            .entries
            .iter()
            .all(|e| e.agent == AgentId::new("uav1")));
    }

    #[test]
    fn independent_bricks_split_across_identical_agents() {
        let mut b1 = brick("R1", Color::Red, 0.3, 0, 0.15);
        b1.pile_position = [3.0, 9.0];
        let mut b2 = brick("R2", Color::Red, 0.3, 0, 3.0);
        b2.pile_position = [3.0, 9.0];
        let spec = spec_with(vec![b1, b2], vec![uav("uav1", 2.0), uav("uav2", 2.0)]);
        let result = exhaustive_optimal(&spec, &Criteria::new(0.0, 1.0, 0.0, 0.7)).unwrap();
        let owners: BTreeSet<&AgentId> =
            result.schedule.entries.iter().map(|e| &e.agent).collect();
        assert_eq!(
            owners.len(),
            2,
            "a makespan objective favours the parallel split"
        );
    }

    #[test]
    fn oracle_dominates_the_coordination_pipeline() {
        for seed in [1, 2, 3] {
            let spec = random_mission(seed, 3, 2);
            let criteria = spec.criteria;
            let optimum = exhaustive_optimal(&spec, &criteria).unwrap();
            let (planned, _) = coordinate::run_coordination(&spec, 0).unwrap();
            let j = schedule::objective(&planned, &spec, &criteria);
            assert!(
                optimum.objective >= j - 1e-9,
                "seed {seed}: oracle {} < method {}",
                optimum.objective,
                j
            );
            let tree = mission::generate_tree(&spec).unwrap();
            assert_eq!(check_schedule(&optimum.schedule, &tree, &spec), vec![]);
        }
    }

    #[test]
    fn oracle_guard_rejects_large_instances() {
        let spec = random_mission(1, 7, 2);
        assert!(matches!(
            exhaustive_optimal(&spec, &Criteria::default()),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn auction_matches_oracle_for_a_single_bidder() {
        let mut b1 = brick("R1", Color::Red, 0.3, 0, 0.15);
        b1.pile_position = [3.0, 9.0];
        let mut b2 = brick("G1", Color::Green, 0.6, 0, 0.6);
        b2.pile_position = [5.0, 9.0];
        let spec = spec_with(vec![b1, b2], vec![uav("uav1", 2.0)]);
        let criteria = Criteria::new(0.35, 0.15, 0.5, 0.7);
        let auction = auction_baseline(&spec, &criteria).unwrap();
        let optimum = exhaustive_optimal(&spec, &criteria).unwrap();
        assert_eq!(auction, optimum.schedule);
    }

    #[test]
    fn auction_schedules_are_valid() {
        for seed in [4, 5] {
            let spec = random_mission(seed, 4, 3);
            let auction = auction_baseline(&spec, &spec.criteria.clone()).unwrap();
            let tree = mission::generate_tree(&spec).unwrap();
            assert_eq!(check_schedule(&auction, &tree, &spec), vec![]);
        }
    }

    #[test]
    fn auction_rejects_joint_transports() {
        use crate::mission::testkit::pair;
        let spec = spec_with(
            vec![brick("O1", Color::Orange, 1.8, 0, 0.9)],
            vec![
                uav("uav1", 2.0),
                uav("uav2", 2.0),
                pair("pair1", "uav1", "uav2"),
            ],
        );
        assert_eq!(
            auction_baseline(&spec, &Criteria::default()).unwrap_err(),
            OracleError::UnsupportedJointTask
        );
    }

    #[test]
    fn cost_only_auction_stays_near_the_optimum() {
        let criteria = Criteria::new(0.0, 0.0, 1.0, 0.7);
        let corpus: Vec<MissionSpec> = (1..=4).map(|s| random_mission(s, 3, 2)).collect();
        let report = gap_report(&corpus, &criteria, Planner::Auction).unwrap();
        assert!(
            report.mean_gap <= 5.0,
            "cost-greedy bids should be nearly optimal, got {}%",
            report.mean_gap
        );
        assert!(report.gaps.iter().all(|g| *g >= -1e-9));
    }

    #[test]
    fn seeded_missions_are_reproducible_and_valid() {
        let a = random_mission(42, 6, 3);
        let b = random_mission(42, 6, 3);
        assert_eq!(a, b);
        let c = random_mission(43, 6, 3);
        assert_ne!(a, c);
        for seed in 1..=10 {
            let spec = random_mission(seed, 4, 2);
            mission::validate_spec(&spec).unwrap();
            mission::generate_tree(&spec).unwrap();
        }
    }

    #[test]
    fn equal_schedules_have_zero_gap() {
        let criteria = Criteria::new(1.0, 0.0, 0.0, 0.7);
        let corpus = vec![random_mission(9, 3, 2)];
        let report = gap_report(&corpus, &criteria, Planner::Coordination).unwrap();
        assert_eq!(report.gaps.len(), 1);
        assert!(report.std_gap == 0.0);
    }

    #[test]
    fn gap_enumeration_agrees_with_the_solver_on_a_known_case() {
        let matrix = AssignmentMatrix::new(
            vec![AgentId::new("a1"), AgentId::new("a2")],
            vec![NodeId::new("t1"), NodeId::new("t2")],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap();
        assert!((enumerate_gap_optimum(&matrix) - 1.7).abs() < 1e-12);
        let solved = allocate::solve_gap(&matrix).unwrap();
        let value: f64 = solved
            .iter()
            .map(|(t, a)| {
                let j = matrix.subtasks.iter().position(|x| x == t).unwrap();
                let i = matrix.agents.iter().position(|x| x == a).unwrap();
                matrix.ratings[i][j]
            })
            .sum();
        assert!((value - 1.7).abs() < 1e-12);
    }
}
