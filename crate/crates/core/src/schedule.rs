//! Timed schedules: an event-driven simulation that turns a task tree plus
//! task-to-agent assignments into per-agent action timelines, a validity
//! checker for the scheduling invariants, and the global objective used to
//! compare plans.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mission::{
    self, assess_action_from, parse_action_id, ActionRef, AgentKind, Color,
    Criteria, MissionSpec, Point2, Verb,
};
use crate::taems::{
    self, executable_actions, AgentId, NodeId, Qaf, RelationKind, Resource, TaemsTree,
};

const TIME_EPS: f64 = 1e-9;

/// One executed action: who ran it and when.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledAction {
    pub agent: AgentId,
    pub action: NodeId,
    pub start: f64,
    pub end: f64,
}

/// A complete mission schedule with its summary figures. `binding_enables`
/// lists the precedence edges that were tight (the source's completion is
/// exactly the target's start), which is what renderers draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduledAction>,
    pub makespan: f64,
    pub total_cost: f64,
    pub total_quality: f64,
    #[serde(default)]
    pub binding_enables: Vec<(NodeId, NodeId)>,
}

/// Which agent executes each transport task (or member subtask).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignments {
    pub by_task: BTreeMap<NodeId, AgentId>,
}

impl Assignments {
    pub fn assign(&mut self, task: NodeId, agent: AgentId) {
        self.by_task.insert(task, agent);
    }

    /// The agent that executes a given action, via its owning task unit.
    pub fn executor_of(&self, action: &NodeId) -> Option<&AgentId> {
        let unit = mission::owning_unit(action)?;
        self.by_task.get(&unit)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ScheduleError {
    #[error("no agent assigned for task {0}")]
    MissingAssignment(NodeId),
    #[error("task {task} is infeasible for its assigned agent {agent}")]
    InfeasibleAssignment { task: NodeId, agent: AgentId },
    #[error("scheduling deadlocked with {} actions blocked: {blocked:?}", blocked.len())]
    Deadlock { blocked: Vec<NodeId> },
}

/// A broken scheduling invariant found by [`check_schedule`].
#[derive(Clone, Debug, PartialEq, Error)]
pub enum ScheduleViolation {
    #[error("agent {agent} runs {a} and {b} at the same time")]
    AgentOverlap { agent: AgentId, a: NodeId, b: NodeId },
    #[error("enables {source_id}->{target_id} violated: target starts before source completes")]
    EnablesViolation { source_id: NodeId, target_id: NodeId },
    #[error("disables {source_id}->{target_id} violated: source completes before target")]
    DisablesViolation { source_id: NodeId, target_id: NodeId },
    #[error("sequential task {task}: {later} does not wait for {earlier}")]
    SeqOrderViolation {
        task: NodeId,
        earlier: NodeId,
        later: NodeId,
    },
    #[error("agent {agent} overlaps the transports of {brick_a} and {brick_b}")]
    ResourceViolation {
        agent: AgentId,
        brick_a: String,
        brick_b: String,
    },
    #[error("joint actions {a} and {b} start at different instants")]
    JointSyncViolation { a: NodeId, b: NodeId },
    #[error("action {action} runs {actual} s, expected {expected} s")]
    DurationMismatch {
        action: NodeId,
        expected: f64,
        actual: f64,
    },
    #[error("entry for {action} spans negative time")]
    NegativeSpan { action: NodeId },
    #[error("unknown action {action} in schedule")]
    UnknownAction { action: NodeId },
    #[error("declared makespan {declared} does not match entries ({actual})")]
    MakespanMismatch { declared: f64, actual: f64 },
}

/// Live execution state shared by every scheduler flavour: agent positions,
/// carry resources, completed actions and the accumulated entries. The
/// flavours differ only in how an idle agent picks its next action.
pub(crate) struct ExecState<'a> {
    pub spec: &'a MissionSpec,
    pub tree: &'a TaemsTree,
    pub assignments: &'a Assignments,
    pub time: f64,
    pub done: BTreeSet<NodeId>,
    pub in_progress: BTreeMap<NodeId, (AgentId, f64)>,
    pub busy_until: BTreeMap<AgentId, f64>,
    pub position: BTreeMap<AgentId, Point2>,
    pub resources: BTreeMap<AgentId, BTreeMap<String, Resource>>,
    pub remaining: BTreeSet<NodeId>,
    pub entries: Vec<ScheduledAction>,
}

impl<'a> ExecState<'a> {
    pub fn new(
        spec: &'a MissionSpec,
        tree: &'a TaemsTree,
        assignments: &'a Assignments,
    ) -> Result<Self, ScheduleError> {
        let mut remaining = BTreeSet::new();
        for action in tree.action_ids() {
            match assignments.executor_of(action) {
                Some(_) => {
                    remaining.insert(action.clone());
                }
                None => {
                    let unit = mission::owning_unit(action)
                        .unwrap_or_else(|| action.clone());
                    return Err(ScheduleError::MissingAssignment(unit));
                }
            }
        }
        let mut position = BTreeMap::new();
        let mut busy_until = BTreeMap::new();
        let mut resources: BTreeMap<AgentId, BTreeMap<String, Resource>> = BTreeMap::new();
        for agent in spec.physical_agents() {
            position.insert(agent.id.clone(), agent.start_position);
            busy_until.insert(agent.id.clone(), 0.0);
            resources.insert(agent.id.clone(), BTreeMap::new());
        }
        for res in tree.resources.values() {
            resources
                .entry(res.owner_agent.clone())
                .or_default()
                .insert(res.id.clone(), res.clone());
        }
        Ok(ExecState {
            spec,
            tree,
            assignments,
            time: 0.0,
            done: BTreeSet::new(),
            in_progress: BTreeMap::new(),
            busy_until,
            position,
            resources,
            remaining,
            entries: Vec::new(),
        })
    }

    pub fn agent_idle(&self, agent: &AgentId) -> bool {
        self.busy_until
            .get(agent)
            .map(|t| *t <= self.time + TIME_EPS)
            .unwrap_or(false)
            && !self.in_progress.values().any(|(a, _)| a == agent)
    }

    /// Actions the agent could begin right now, in scheduling priority
    /// order.
    pub fn candidates(&self, agent: &AgentId, priority: &BTreeMap<NodeId, usize>) -> Vec<NodeId> {
        let in_progress: BTreeSet<NodeId> = self.in_progress.keys().cloned().collect();
        let own_resources = self.resources.get(agent).cloned().unwrap_or_default();
        let open = executable_actions(self.tree, &self.done, &in_progress, &own_resources);
        let mut mine: Vec<NodeId> = open
            .into_iter()
            .filter(|a| self.remaining.contains(a))
            .filter(|a| self.assignments.executor_of(a) == Some(agent))
            .collect();
        mine.sort_by_key(|a| (priority.get(a).copied().unwrap_or(usize::MAX), a.clone()));
        mine
    }

    /// Duration of an action for its executor from the executor's current
    /// position.
    pub fn duration_of(&self, agent: &AgentId, action: &ActionRef) -> Option<f64> {
        let spec_agent = self.spec.agent(agent)?;
        let pos = self.position.get(agent).copied()?;
        assess_action_from(self.spec, spec_agent, action, pos)
            .ok()
            .filter(|a| a.is_feasible())
            .map(|a| a.duration)
    }

    /// Begins an action now: consumes the agent's resources and records the
    /// completion time.
    pub fn start(&mut self, agent: &AgentId, action: &NodeId) -> Result<(), ScheduleError> {
        let parsed = parse_action_id(action).expect("well-formed action id");
        let duration = self.duration_of(agent, &parsed).ok_or_else(|| {
            ScheduleError::InfeasibleAssignment {
                task: mission::owning_unit(action).unwrap_or_else(|| action.clone()),
                agent: agent.clone(),
            }
        })?;
        for edge in self.tree.edges_of_kind(RelationKind::Consumes) {
            if edge.source == action.0 {
                if let Some(own) = self.resources.get_mut(agent) {
                    if let Some(res) = own.get(&edge.target) {
                        let updated =
                            taems::apply_resource_effect(res, -edge.amount.unwrap_or(1.0))
                                .expect("executability checked before start");
                        own.insert(edge.target.clone(), updated);
                    }
                }
            }
        }
        let end = self.time + duration;
        self.in_progress
            .insert(action.clone(), (agent.clone(), end));
        self.busy_until.insert(agent.clone(), end);
        self.remaining.remove(action);
        self.entries.push(ScheduledAction {
            agent: agent.clone(),
            action: action.clone(),
            start: self.time,
            end,
        });
        Ok(())
    }

    /// Advances to the next completion instant and finishes everything due:
    /// restores produced resources, moves the agent, marks actions done.
    /// Returns the completed actions, or `None` when nothing is running.
    pub fn advance(&mut self) -> Option<Vec<(NodeId, AgentId)>> {
        let next = self
            .in_progress
            .values()
            .map(|(_, end)| *end)
            .fold(f64::INFINITY, f64::min);
        if !next.is_finite() {
            return None;
        }
        self.time = next;
        let due: Vec<NodeId> = self
            .in_progress
            .iter()
            .filter(|(_, (_, end))| *end <= next + TIME_EPS)
            .map(|(id, _)| id.clone())
            .collect();
        let mut completed = Vec::new();
        for action in due {
            let (agent, _) = self.in_progress.remove(&action).expect("present");
            for edge in self.tree.edges_of_kind(RelationKind::Produces) {
                if edge.source == action.0 {
                    if let Some(own) = self.resources.get_mut(&agent) {
                        if let Some(res) = own.get(&edge.target) {
                            let updated =
                                taems::apply_resource_effect(res, edge.amount.unwrap_or(1.0))
                                    .expect("produce never drops below lower");
                            own.insert(edge.target.clone(), updated);
                        }
                    }
                }
            }
            if let Some(parsed) = parse_action_id(&action) {
                if let Some(brick) = self.spec.brick(&parsed.brick_id) {
                    let new_pos = match parsed.verb {
                        Verb::GoToPile => Some(brick.pile_position),
                        Verb::GoToWall => Some(brick.wall_pose.xy()),
                        _ => None,
                    };
                    if let Some(p) = new_pos {
                        self.position.insert(agent.clone(), p);
                    }
                }
            }
            self.done.insert(action.clone());
            completed.push((action, agent));
        }
        Some(completed)
    }

    /// The other member slot of a joint action, with its executor.
    pub fn joint_partner(&self, action: &NodeId) -> Option<(NodeId, AgentId)> {
        let parsed = parse_action_id(action)?;
        let slot = parsed.slot?;
        let other = if slot == 1 { 2 } else { 1 };
        let partner_action = mission::action_id(parsed.verb, &parsed.brick_id, Some(other));
        let partner_agent = self.assignments.executor_of(&partner_action)?.clone();
        Some((partner_action, partner_agent))
    }

    /// Whether the agent could begin this action right now.
    pub fn is_startable(&self, agent: &AgentId, action: &NodeId) -> bool {
        let in_progress: BTreeSet<NodeId> = self.in_progress.keys().cloned().collect();
        let own = self.resources.get(agent).cloned().unwrap_or_default();
        executable_actions(self.tree, &self.done, &in_progress, &own).contains(action)
    }

    pub fn is_done(&self, action: &NodeId) -> bool {
        self.done.contains(action)
    }

    pub fn is_in_progress(&self, action: &NodeId) -> bool {
        self.in_progress.contains_key(action)
    }

    /// Nothing is running.
    pub fn is_quiescent(&self) -> bool {
        self.in_progress.is_empty()
    }

    /// Every assigned action has been executed.
    pub fn is_finished(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn blocked(&self) -> Vec<NodeId> {
        self.remaining.iter().cloned().collect()
    }

    pub fn into_schedule(self, tree: &TaemsTree, spec: &MissionSpec) -> Schedule {
        finalize(self.entries, tree, spec)
    }
}

/// Builds the schedule for the given assignments with the default policy:
/// at every instant each idle agent starts its highest-priority executable
/// action, where priority is the deterministic topological order of the
/// action graph. Actions of a joint transport begin simultaneously on both
/// member agents once both are idle and executable; a member whose best
/// candidate is a joint action waits for its partner rather than starting
/// lower-priority work.
pub fn build_schedule(
    tree: &TaemsTree,
    assignments: &Assignments,
    spec: &MissionSpec,
) -> Result<Schedule, ScheduleError> {
    let priority = taems::topological_action_order(tree);
    let mut state = ExecState::new(spec, tree, assignments)?;

    loop {
        // Keep offering work until no idle agent can start anything.
        loop {
            let mut started = false;
            let agents: Vec<AgentId> = state.busy_until.keys().cloned().collect();
            for agent in &agents {
                if !state.agent_idle(agent) {
                    continue;
                }
                let candidates = state.candidates(agent, &priority);
                let Some(top) = candidates.first().cloned() else {
                    continue;
                };
                match state.joint_partner(&top) {
                    None => {
                        state.start(agent, &top)?;
                        started = true;
                    }
                    Some((partner_action, partner_agent)) => {
                        if !state.agent_idle(&partner_agent) {
                            continue; // committed: wait for the partner
                        }
                        let partner_top = state
                            .candidates(&partner_agent, &priority)
                            .first()
                            .cloned();
                        if partner_top.as_ref() == Some(&partner_action) {
                            state.start(agent, &top)?;
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

        if state.in_progress.is_empty() {
            if state.remaining.is_empty() {
                break;
            }
            return Err(ScheduleError::Deadlock {
                blocked: state.remaining.iter().cloned().collect(),
            });
        }
        state.advance();
    }

    Ok(finalize(state.entries, tree, spec))
}

/// Assembles a [`Schedule`] from raw entries: sorts them, computes the
/// summary figures in canonical brick order (so totals are bitwise
/// reproducible), and extracts the tight precedence edges.
pub fn finalize(mut entries: Vec<ScheduledAction>, tree: &TaemsTree, spec: &MissionSpec) -> Schedule {
    entries.sort_by(|a, b| {
        a.start
            .partial_cmp(&b.start)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.agent.cmp(&b.agent))
            .then_with(|| a.action.cmp(&b.action))
    });
    let makespan = entries.iter().map(|e| e.end).fold(0.0, f64::max);

    let by_action: BTreeMap<&NodeId, &ScheduledAction> =
        entries.iter().map(|e| (&e.action, e)).collect();

    let mut total_quality = 0.0;
    let mut total_cost = 0.0;
    for brick in spec.brick_order() {
        let slots: Vec<Option<usize>> = if brick.color == Color::Orange {
            (1..=mission::JOINT_SLOTS).map(Some).collect()
        } else {
            vec![None]
        };
        for slot in slots {
            for verb in Verb::CHAIN {
                let id = mission::action_id(verb, &brick.id, slot);
                let Some(entry) = by_action.get(&id) else {
                    continue;
                };
                let Some(agent) = spec.agent(&entry.agent) else {
                    continue;
                };
                // Quality does not depend on where the agent started from;
                // the realized duration prices the cost at the executor's
                // own rate.
                let parsed = ActionRef {
                    verb,
                    brick_id: brick.id.clone(),
                    slot,
                };
                if let Ok(a) =
                    assess_action_from(spec, agent, &parsed, agent.start_position)
                {
                    if a.is_feasible() {
                        total_quality += a.quality;
                        total_cost += (entry.end - entry.start)
                            * agent.cost_rate
                            * mission::brick_size_factor(brick);
                    }
                }
            }
        }
    }

    let mut binding = Vec::new();
    for edge in tree.edges_of_kind(RelationKind::Enables) {
        let (s, t) = (NodeId::new(edge.source.clone()), NodeId::new(edge.target.clone()));
        if let (Some(se), Some(te)) = (by_action.get(&s), by_action.get(&t)) {
            if (se.end - te.start).abs() <= TIME_EPS {
                binding.push((s, t));
            }
        }
    }
    binding.sort();
    binding.dedup();

    Schedule {
        entries,
        makespan,
        total_cost,
        total_quality,
        binding_enables: binding,
    }
}

/// Verifies every scheduling invariant; an empty list means the schedule is
/// valid for this tree and mission.
pub fn check_schedule(
    schedule: &Schedule,
    tree: &TaemsTree,
    spec: &MissionSpec,
) -> Vec<ScheduleViolation> {
    let mut out = Vec::new();
    let by_action: BTreeMap<&NodeId, &ScheduledAction> =
        schedule.entries.iter().map(|e| (&e.action, e)).collect();

    for entry in &schedule.entries {
        if entry.end < entry.start - TIME_EPS {
            out.push(ScheduleViolation::NegativeSpan {
                action: entry.action.clone(),
            });
        }
        if !tree.nodes.contains_key(&entry.action) {
            out.push(ScheduleViolation::UnknownAction {
                action: entry.action.clone(),
            });
        }
    }

    // Per-agent timelines: ordered and non-overlapping.
    let mut per_agent: BTreeMap<&AgentId, Vec<&ScheduledAction>> = BTreeMap::new();
    for entry in &schedule.entries {
        per_agent.entry(&entry.agent).or_default().push(entry);
    }
    for (agent, mut entries) in per_agent.clone() {
        entries.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(std::cmp::Ordering::Equal));
        for pair in entries.windows(2) {
            if pair[1].start < pair[0].end - TIME_EPS {
                out.push(ScheduleViolation::AgentOverlap {
                    agent: agent.clone(),
                    a: pair[0].action.clone(),
                    b: pair[1].action.clone(),
                });
            }
        }
    }

    let completion_of = |id: &NodeId| -> Option<f64> {
        let node = tree.node(id)?;
        if node.is_action() {
            return by_action.get(id).map(|e| e.end);
        }
        // A task completes when its relevant leaves do.
        let mut end: f64 = 0.0;
        let mut stack = vec![id.clone()];
        let mut any = false;
        while let Some(next) = stack.pop() {
            if let Some(n) = tree.node(&next) {
                if n.is_action() {
                    match by_action.get(&next) {
                        Some(e) => {
                            end = end.max(e.end);
                            any = true;
                        }
                        None => return None,
                    }
                } else {
                    stack.extend(n.children.iter().cloned());
                }
            }
        }
        any.then_some(end)
    };

    for edge in &tree.interrelationships {
        match edge.kind {
            RelationKind::Enables => {
                let target = NodeId::new(edge.target.clone());
                if let Some(te) = by_action.get(&target) {
                    match completion_of(&NodeId::new(edge.source.clone())) {
                        Some(source_end) if source_end <= te.start + TIME_EPS => {}
                        _ => out.push(ScheduleViolation::EnablesViolation {
                            source_id: NodeId::new(edge.source.clone()),
                            target_id: target.clone(),
                        }),
                    }
                }
            }
            RelationKind::Disables => {
                // Hard ordering: the target completes no later than the
                // source.
                let source = NodeId::new(edge.source.clone());
                if let Some(se) = by_action.get(&source) {
                    match completion_of(&NodeId::new(edge.target.clone())) {
                        Some(target_end) if target_end <= se.end + TIME_EPS => {}
                        _ => out.push(ScheduleViolation::DisablesViolation {
                            source_id: source.clone(),
                            target_id: NodeId::new(edge.target.clone()),
                        }),
                    }
                }
            }
            _ => {}
        }
    }

    // Sequential order inside SeqSumAll tasks.
    for node in tree.nodes.values() {
        if node.qaf != Some(Qaf::SeqSumAll) {
            continue;
        }
        let scheduled: Vec<(&NodeId, &ScheduledAction)> = node
            .children
            .iter()
            .filter_map(|c| by_action.get(c).map(|e| (c, *e)))
            .collect();
        for pair in scheduled.windows(2) {
            let (earlier, e1) = pair[0];
            let (later, e2) = pair[1];
            if e2.start < e1.end - TIME_EPS {
                out.push(ScheduleViolation::SeqOrderViolation {
                    task: node.id.clone(),
                    earlier: earlier.clone(),
                    later: later.clone(),
                });
            }
        }
    }

    // Carry exclusivity: per agent, the open interval from a brick's pile
    // run to its placement never overlaps another brick's. Only meaningful
    // for agents that actually own a carry slot in this tree.
    for (agent, entries) in &per_agent {
        if !tree.resources.values().any(|r| &&r.owner_agent == agent) {
            continue;
        }
        let mut intervals: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for entry in entries {
            if let Some(parsed) = parse_action_id(&entry.action) {
                let slot = intervals
                    .entry(parsed.brick_id.clone())
                    .or_insert((f64::INFINITY, f64::NEG_INFINITY));
                if parsed.verb == Verb::GoToPile {
                    slot.0 = slot.0.min(entry.start);
                }
                if parsed.verb == Verb::PutDown {
                    slot.1 = slot.1.max(entry.end);
                }
            }
        }
        let carries: Vec<(&String, &(f64, f64))> = intervals
            .iter()
            .filter(|(_, (s, e))| s.is_finite() && e.is_finite())
            .collect();
        for i in 0..carries.len() {
            for j in i + 1..carries.len() {
                let (ba, (sa, ea)) = carries[i];
                let (bb, (sb, eb)) = carries[j];
                if sa < &(eb - TIME_EPS) && sb < &(ea - TIME_EPS) {
                    out.push(ScheduleViolation::ResourceViolation {
                        agent: (*agent).clone(),
                        brick_a: ba.clone(),
                        brick_b: bb.clone(),
                    });
                }
            }
        }
    }

    // Joint transports: member slots start in lockstep.
    for entry in &schedule.entries {
        if let Some(parsed) = parse_action_id(&entry.action) {
            if parsed.slot == Some(1) {
                let other = mission::action_id(parsed.verb, &parsed.brick_id, Some(2));
                if let Some(partner) = by_action.get(&other) {
                    if (partner.start - entry.start).abs() > TIME_EPS {
                        out.push(ScheduleViolation::JointSyncViolation {
                            a: entry.action.clone(),
                            b: other,
                        });
                    }
                }
            }
        }
    }

    // Replay durations along each agent's timeline.
    for (agent_id, entries) in &per_agent {
        let Some(agent) = spec.agent(agent_id) else {
            continue;
        };
        let mut entries = entries.clone();
        entries.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(std::cmp::Ordering::Equal));
        let mut pos = agent.start_position;
        for entry in entries {
            let Some(parsed) = parse_action_id(&entry.action) else {
                continue;
            };
            if let Ok(a) = assess_action_from(spec, agent, &parsed, pos) {
                let actual = entry.end - entry.start;
                if a.is_feasible() && (actual - a.duration).abs() > 1e-6 {
                    out.push(ScheduleViolation::DurationMismatch {
                        action: entry.action.clone(),
                        expected: a.duration,
                        actual,
                    });
                }
            }
            if let Some(brick) = spec.brick(&parsed.brick_id) {
                match parsed.verb {
                    Verb::GoToPile => pos = brick.pile_position,
                    Verb::GoToWall => pos = brick.wall_pose.xy(),
                    _ => {}
                }
            }
        }
    }

    let actual_makespan = schedule.entries.iter().map(|e| e.end).fold(0.0, f64::max);
    if (schedule.makespan - actual_makespan).abs() > TIME_EPS {
        out.push(ScheduleViolation::MakespanMismatch {
            declared: schedule.makespan,
            actual: actual_makespan,
        });
    }

    out
}

/// Reference figures that normalize the objective: the best achievable
/// quality per brick, and the makespan/cost of the serial plan in which each
/// brick is transported by its fastest agent, one brick at a time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceBounds {
    pub q_best: f64,
    pub t_ref: f64,
    pub c_ref: f64,
}

pub fn reference_bounds(spec: &MissionSpec) -> ReferenceBounds {
    let mut q_best = 0.0;
    let mut t_ref = 0.0;
    let mut c_ref = 0.0;
    let mut positions: BTreeMap<AgentId, Point2> = spec
        .agents
        .iter()
        .map(|a| (a.id.clone(), a.start_position))
        .collect();

    for brick in spec.brick_order() {
        let tb = mission::task_id(&brick.id, None);
        let mut best_quality: f64 = 0.0;
        let mut fastest: Option<(&crate::mission::AgentSpec, f64)> = None;
        for agent in &spec.agents {
            let a = mission::assess_task(spec, agent, &tb);
            if !a.is_feasible() {
                continue;
            }
            best_quality = best_quality.max(a.quality);
            let better = match fastest {
                None => true,
                Some((_, d)) => a.duration < d,
            };
            if better {
                fastest = Some((agent, a.duration));
            }
        }
        q_best += best_quality;
        let Some((agent, _)) = fastest else {
            continue;
        };
        // Walk the serial chain with position chaining for this agent.
        let slots: Vec<Option<usize>> = if brick.color == Color::Orange {
            vec![Some(1)]
        } else {
            vec![None]
        };
        let mut pos = positions
            .get(&agent.id)
            .copied()
            .unwrap_or(agent.start_position);
        for slot in slots {
            for verb in Verb::CHAIN {
                let parsed = ActionRef {
                    verb,
                    brick_id: brick.id.clone(),
                    slot,
                };
                if let Ok(a) = assess_action_from(spec, agent, &parsed, pos) {
                    t_ref += a.duration;
                    c_ref += a.cost;
                }
                match verb {
                    Verb::GoToPile => pos = brick.pile_position,
                    Verb::GoToWall => pos = brick.wall_pose.xy(),
                    _ => {}
                }
            }
        }
        positions.insert(agent.id.clone(), pos);
    }
    ReferenceBounds {
        q_best,
        t_ref,
        c_ref,
    }
}

/// Global objective of a schedule:
/// `alpha * Q/Q_best + beta * (1 - makespan/T_ref) + gamma * (1 - cost/C_ref)`,
/// normalized so an ideal plan approaches 1 in each weighted dimension.
pub fn objective(schedule: &Schedule, spec: &MissionSpec, criteria: &Criteria) -> f64 {
    let bounds = reference_bounds(spec);
    objective_from_parts(
        schedule.total_quality,
        schedule.makespan,
        schedule.total_cost,
        &bounds,
        criteria,
    )
}

/// The objective from raw figures, reusable on partial plans.
pub fn objective_from_parts(
    quality: f64,
    makespan: f64,
    cost: f64,
    bounds: &ReferenceBounds,
    criteria: &Criteria,
) -> f64 {
    let q_term = if bounds.q_best > 0.0 {
        quality / bounds.q_best
    } else {
        1.0
    };
    let t_term = if bounds.t_ref > 0.0 {
        1.0 - makespan / bounds.t_ref
    } else {
        1.0
    };
    let c_term = if bounds.c_ref > 0.0 {
        1.0 - cost / bounds.c_ref
    } else {
        1.0
    };
    criteria.alpha * q_term + criteria.beta * t_term + criteria.gamma * c_term
}

/// Extracts the assignment of every transport unit realized by a schedule.
pub fn assignments_of(schedule: &Schedule) -> Assignments {
    let mut assignments = Assignments::default();
    for entry in &schedule.entries {
        if let Some(unit) = mission::owning_unit(&entry.action) {
            assignments.by_task.insert(unit, entry.agent.clone());
        }
    }
    assignments
}

/// Transport tasks an agent won, counted at brick granularity (a member
/// subtask counts for its member).
pub fn task_counts(schedule: &Schedule, spec: &MissionSpec) -> BTreeMap<AgentId, usize> {
    let mut counts: BTreeMap<AgentId, usize> = spec
        .agents
        .iter()
        .filter(|a| a.kind != AgentKind::Uavx2)
        .map(|a| (a.id.clone(), 0))
        .collect();
    let assignments = assignments_of(schedule);
    for (_, agent) in assignments.by_task {
        *counts.entry(agent).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::testkit::{brick, spec_with, uav};
    use crate::mission::{generate_tree, Color};

    fn stacked_pair_spec() -> MissionSpec {
        let bottom = brick("B1.1", Color::Blue, 1.2, 0, 0.6);
        let mut top = brick("B2.1", Color::Blue, 1.2, 1, 0.6);
        top.supports = vec!["B1.1".to_owned()];
        spec_with(vec![bottom, top], vec![uav("uav1", 2.0)])
    }

    fn assign_all(tree: &TaemsTree, agent: &str) -> Assignments {
        let mut assignments = Assignments::default();
        for action in tree.action_ids() {
            if let Some(unit) = mission::owning_unit(action) {
                assignments.assign(unit, AgentId::new(agent));
            }
        }
        assignments
    }

    fn action_order(schedule: &Schedule) -> Vec<String> {
        let mut entries = schedule.entries.clone();
        entries.sort_by(|a, b| {
            a.start
                .partial_cmp(&b.start)
                .unwrap()
                .then_with(|| a.action.cmp(&b.action))
        });
        entries.iter().map(|e| e.action.0.clone()).collect()
    }

    #[test]
    fn carry_slot_forces_brick_by_brick_execution() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap();
        let assignments = assign_all(&tree, "uav1");
        let schedule = build_schedule(&tree, &assignments, &spec).unwrap();
        assert_eq!(
            action_order(&schedule),
            vec![
                "GP(B1.1)", "PU(B1.1)", "GW(B1.1)", "PD(B1.1)", "GP(B2.1)", "PU(B2.1)",
                "GW(B2.1)", "PD(B2.1)",
            ]
        );
        assert_eq!(check_schedule(&schedule, &tree, &spec), vec![]);
    }

    #[test]
    fn without_carry_slot_transports_interleave() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap().without_resources();
        let assignments = assign_all(&tree, "uav1");
        let schedule = build_schedule(&tree, &assignments, &spec).unwrap();
        assert_eq!(
            action_order(&schedule),
            vec![
                "GP(B1.1)", "PU(B1.1)", "GP(B2.1)", "PU(B2.1)", "GW(B1.1)", "GW(B2.1)",
                "PD(B1.1)", "PD(B2.1)",
            ]
        );
        assert_eq!(check_schedule(&schedule, &tree, &spec), vec![]);
    }

    #[test]
    fn joint_transport_slots_start_in_lockstep() {
        use crate::mission::testkit::pair;
        let spec = spec_with(
            vec![brick("O1", Color::Orange, 1.8, 0, 0.9)],
            vec![
                uav("uav1", 2.0),
                uav("uav2", 1.5),
                pair("pair1", "uav1", "uav2"),
            ],
        );
        let tree = generate_tree(&spec).unwrap();
        let mut assignments = Assignments::default();
        assignments.assign(NodeId::new("TB(O1)#1"), AgentId::new("uav1"));
        assignments.assign(NodeId::new("TB(O1)#2"), AgentId::new("uav2"));
        let schedule = build_schedule(&tree, &assignments, &spec).unwrap();
        for verb in ["GP", "PU", "GW", "PD"] {
            let s1 = schedule
                .entries
                .iter()
                .find(|e| e.action.0 == format!("{verb}(O1)#1"))
                .unwrap();
            let s2 = schedule
                .entries
                .iter()
                .find(|e| e.action.0 == format!("{verb}(O1)#2"))
                .unwrap();
            assert!(
                (s1.start - s2.start).abs() < 1e-9,
                "{verb} starts diverge: {} vs {}",
                s1.start,
                s2.start
            );
        }
        assert_eq!(check_schedule(&schedule, &tree, &spec), vec![]);
    }

    #[test]
    fn seeded_faults_are_reported() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap();
        let assignments = assign_all(&tree, "uav1");
        let mut schedule = build_schedule(&tree, &assignments, &spec).unwrap();

        // Shift the second pile run before the enabling pick-up completes.
        let pu_end = schedule
            .entries
            .iter()
            .find(|e| e.action.0 == "PU(B1.1)")
            .unwrap()
            .end;
        for entry in &mut schedule.entries {
            if entry.action.0 == "GP(B2.1)" {
                let span = entry.end - entry.start;
                entry.start = pu_end - 1.0;
                entry.end = pu_end - 1.0 + span;
            }
        }
        let violations = check_schedule(&schedule, &tree, &spec);
        assert!(violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::EnablesViolation { .. })));
        // The shift also makes the agent hold two bricks at once.
        assert!(violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::ResourceViolation { .. })));
    }

    #[test]
    fn missing_assignment_is_rejected() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap();
        let mut assignments = Assignments::default();
        assignments.assign(NodeId::new("TB(B1.1)"), AgentId::new("uav1"));
        assert!(matches!(
            build_schedule(&tree, &assignments, &spec),
            Err(ScheduleError::MissingAssignment(_))
        ));
    }

    #[test]
    fn objective_rewards_the_ideal_plan() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap();
        let assignments = assign_all(&tree, "uav1");
        let schedule = build_schedule(&tree, &assignments, &spec).unwrap();
        // One agent, serial plan: quality is maximal, duration and cost sit
        // at the reference, so the quality share dominates.
        let j = objective(&schedule, &spec, &Criteria::new(1.0, 0.0, 0.0, 0.7));
        assert!((j - 1.0).abs() < 1e-9);
        let j_serial = objective(&schedule, &spec, &Criteria::new(0.0, 0.5, 0.5, 0.7));
        assert!(j_serial.abs() < 1e-6, "serial reference terms vanish: {j_serial}");
    }

    #[test]
    fn schedule_json_round_trips() {
        let spec = stacked_pair_spec();
        let tree = generate_tree(&spec).unwrap();
        let schedule = build_schedule(&tree, &assign_all(&tree, "uav1"), &spec).unwrap();
        let json = serde_json::to_string(&schedule).unwrap();
        let parsed: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, schedule);
    }
}
