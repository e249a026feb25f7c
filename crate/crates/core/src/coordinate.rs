//! Decentralized coordination: agents as logical processes that share
//! assessments, elect referees, resolve redundancy and execute their local
//! schedules over a simulated message bus, including the synchronization
//! handshake for joint transports.
//!
//! Agents never touch each other's state; everything they learn arrives as
//! a message. The bus delivers instantly in a deterministic order (a
//! round-robin poll rotation keyed by the seed), so a run's trace is a pure
//! function of the mission and the seed. Fault policies model jitter and
//! loss on top of that.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocate::{
    self, AllocError, MarketTask, RatingWeights, Release, TaskPrecedence,
};
use crate::mission::{
    self, assess_action_from, parse_action_id, Assessment, Color, MissionSpec, Point2,
    Verb,
};
use crate::schedule::{self, Assignments, Schedule, ScheduleError, ScheduledAction};
use crate::taems::{
    self, apply_resource_effect, executable_actions, AgentId, NodeId, RelationKind, Resource,
    TaemsTree,
};

/// Simulated seconds before an unanswered sync request is repeated.
/// Generous enough that an undisturbed partner always answers first.
pub const SYNC_RETRY_TIMEOUT: f64 = 300.0;

/// Sync attempts before the requester gives up.
pub const MAX_SYNC_ATTEMPTS: u32 = 4;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CoordError {
    #[error(transparent)]
    Mission(#[from] mission::MissionError),
    #[error(transparent)]
    Allocation(#[from] AllocError),
    #[error(transparent)]
    Scheduling(#[from] ScheduleError),
    #[error("agent {agent} gave up synchronizing {action} after {attempts} attempts")]
    CoordinationTimeout {
        agent: AgentId,
        action: NodeId,
        attempts: u32,
    },
}

/// Message destination: one agent or everyone.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Recipient {
    Broadcast,
    Agent(AgentId),
}

impl Serialize for Recipient {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Recipient::Broadcast => serializer.serialize_str("*"),
            Recipient::Agent(id) => serializer.serialize_str(id.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(if raw == "*" {
            Recipient::Broadcast
        } else {
            Recipient::Agent(AgentId(raw))
        })
    }
}

/// Payload of each protocol message, tagged by its kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum MessagePayload {
    /// An agent's assessments of every transport task and member subtask,
    /// plus the per-action chain durations the market function needs.
    AssessmentShare {
        assessments: BTreeMap<NodeId, Assessment>,
        chains: BTreeMap<NodeId, [f64; 4]>,
    },
    /// The elected referee announcing itself for a scope of decisions.
    RefereeClaim { scope: String },
    /// The market allocation scheme computed by the referee.
    AllocationScheme { pairs: Vec<(NodeId, AgentId)> },
    /// A task (or member subtask) goes to this agent.
    Award { task: NodeId, agent: AgentId },
    /// The addressee lost this task and drops it from its local plan.
    Drop { task: NodeId, agent: AgentId },
    /// A joint-transport member is ready to start and asks its partner to
    /// agree on a common instant.
    SyncRequest {
        action: NodeId,
        ready: f64,
        attempt: u32,
    },
    /// The partner agrees; both slots begin at `start`.
    SyncAck { action: NodeId, start: f64 },
    /// An action finished; everyone updates their local execution view.
    StatusUpdate { action: NodeId, completed_at: f64 },
}

impl MessagePayload {
    fn is_sync_ack(&self) -> bool {
        matches!(self, MessagePayload::SyncAck { .. })
    }
}

/// One delivered message. `seq` increases monotonically per sender; `time`
/// is the delivery instant on the simulated clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub from: AgentId,
    pub to: Recipient,
    pub time: f64,
    #[serde(flatten)]
    pub body: MessagePayload,
}

pub type MessageTrace = Vec<Message>;

/// Deterministic fault model layered over the bus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultPolicy {
    /// Reliable instant delivery.
    None,
    /// Swallow the first `count` sync acknowledgements.
    DropSyncAcks { count: u32 },
    /// Deliver everything late by a constant; the content of decisions is
    /// unaffected, only the recorded timestamps shift.
    DelayAll { seconds: f64 },
}

/// The simulated bus: stamps, applies the fault policy and records every
/// delivered message.
pub struct Bus {
    policy: FaultPolicy,
    next_seq: BTreeMap<AgentId, u64>,
    dropped_acks: u32,
    pub trace: MessageTrace,
}

impl Bus {
    pub fn new() -> Self {
        Bus {
            policy: FaultPolicy::None,
            next_seq: BTreeMap::new(),
            dropped_acks: 0,
            trace: Vec::new(),
        }
    }

    /// Sends a message at `now`. Returns whether it was delivered.
    fn send(&mut self, from: &AgentId, to: Recipient, now: f64, body: MessagePayload) -> bool {
        let seq = self.next_seq.entry(from.clone()).or_insert(0);
        *seq += 1;
        let seq = *seq;
        if let FaultPolicy::DropSyncAcks { count } = self.policy {
            if body.is_sync_ack() && self.dropped_acks < count {
                self.dropped_acks += 1;
                return false;
            }
        }
        let delay = match self.policy {
            FaultPolicy::DelayAll { seconds } => seconds,
            _ => 0.0,
        };
        self.trace.push(Message {
            seq,
            from: from.clone(),
            to,
            time: now + delay,
            body,
        });
        true
    }
}

impl Default for Bus {
    fn default() -> Self {
        Bus::new()
    }
}

/// Wraps a bus with a fault policy.
pub fn inject_fault(mut bus: Bus, policy: FaultPolicy) -> Bus {
    bus.policy = policy;
    bus
}

/// Deterministic referee election: the lexicographically smallest agent id.
/// Every agent computing this locally from the same set reaches the same
/// answer, so no ballot messages are needed.
pub fn elect_referee(candidates: &BTreeSet<AgentId>) -> Result<AgentId, AllocError> {
    candidates
        .iter()
        .next()
        .cloned()
        .ok_or(AllocError::EmptyAgentSet)
}

/// A coordination run: the merged schedule, the full message trace, the
/// final assignments and each agent's local view of the awards (which must
/// all agree).
#[derive(Debug)]
pub struct CoordinationRun {
    pub schedule: Schedule,
    pub trace: MessageTrace,
    pub assignments: Assignments,
    pub award_views: BTreeMap<AgentId, BTreeMap<NodeId, AgentId>>,
}

/// Runs the full pipeline and returns the merged schedule with the trace.
pub fn run_coordination(
    spec: &MissionSpec,
    seed: u64,
) -> Result<(Schedule, MessageTrace), CoordError> {
    let run = run_coordination_full(spec, seed, FaultPolicy::None)?;
    Ok((run.schedule, run.trace))
}

/// As [`run_coordination`], under a fault policy.
pub fn run_coordination_with_faults(
    spec: &MissionSpec,
    seed: u64,
    policy: FaultPolicy,
) -> Result<CoordinationRun, CoordError> {
    run_coordination_full(spec, seed, policy)
}

/// State of one agent process. Everything here is local: it changes only in
/// response to this agent's own actions or to delivered messages.
struct Proc {
    id: AgentId,
    /// Assessment tables received from every agent (including itself).
    shared_assessments: BTreeMap<AgentId, BTreeMap<NodeId, Assessment>>,
    shared_chains: BTreeMap<AgentId, BTreeMap<NodeId, [f64; 4]>>,
    /// Local view of who won what.
    awards: BTreeMap<NodeId, AgentId>,
    /// Units this agent must execute.
    own_units: BTreeSet<NodeId>,
    /// Execution view: completed actions across the whole team.
    done: BTreeSet<NodeId>,
    position: Point2,
    resources: BTreeMap<String, Resource>,
    /// The action currently running, if any.
    running: Option<NodeId>,
    /// Joint slots this agent asked to synchronize: action -> attempts.
    sync_requested: BTreeMap<NodeId, u32>,
    /// Request from the partner waiting for this agent's acknowledgement.
    pending_partner_request: BTreeMap<NodeId, f64>,
    /// Agreed start signalled by a received acknowledgement.
    agreed_start: BTreeMap<NodeId, f64>,
}

impl Proc {
    fn new(spec: &MissionSpec, id: &AgentId) -> Self {
        let agent = spec.agent(id).expect("known agent");
        Proc {
            id: id.clone(),
            shared_assessments: BTreeMap::new(),
            shared_chains: BTreeMap::new(),
            awards: BTreeMap::new(),
            own_units: BTreeSet::new(),
            done: BTreeSet::new(),
            position: agent.start_position,
            resources: BTreeMap::new(),
            running: None,
            sync_requested: BTreeMap::new(),
            pending_partner_request: BTreeMap::new(),
            agreed_start: BTreeMap::new(),
        }
    }
}

/// Timed events of the execution phase.
#[derive(Clone, Debug, PartialEq)]
enum Event {
    Completion { agent: AgentId, action: NodeId },
    SyncRetry { agent: AgentId, action: NodeId },
}

fn run_coordination_full(
    spec: &MissionSpec,
    seed: u64,
    policy: FaultPolicy,
) -> Result<CoordinationRun, CoordError> {
    mission::validate_spec(spec)?;
    let tree = mission::generate_tree(spec)?;
    let weights = RatingWeights::new(spec.criteria.alpha, spec.criteria.beta, spec.criteria.gamma);
    let delta = spec.criteria.delta;

    let mut bus = inject_fault(Bus::new(), policy);
    let agent_ids: Vec<AgentId> = {
        let mut ids: Vec<AgentId> = spec.agents.iter().map(|a| a.id.clone()).collect();
        ids.sort();
        ids
    };
    let mut procs: BTreeMap<AgentId, Proc> = agent_ids
        .iter()
        .map(|id| (id.clone(), Proc::new(spec, id)))
        .collect();
    for res in tree.resources.values() {
        if let Some(proc) = procs.get_mut(&res.owner_agent) {
            proc.resources.insert(res.id.clone(), res.clone());
        }
    }

    // Allocation units: whole transports plus joint member subtasks.
    let mut units: Vec<NodeId> = Vec::new();
    let mut tb_tasks: Vec<(NodeId, Color)> = Vec::new();
    for brick in spec.brick_order() {
        let tb = mission::task_id(&brick.id, None);
        tb_tasks.push((tb.clone(), brick.color));
        units.push(tb);
        if brick.color == Color::Orange {
            for slot in 1..=mission::JOINT_SLOTS {
                units.push(mission::task_id(&brick.id, Some(slot)));
            }
        }
    }

    // Phase 1: every agent assesses every unit and broadcasts the table.
    for id in &agent_ids {
        let agent = spec.agent(id).expect("known agent");
        let mut assessments = BTreeMap::new();
        let mut chains = BTreeMap::new();
        for unit in &units {
            let a = mission::assess_task(spec, agent, unit);
            assessments.insert(unit.clone(), a);
            if let Some(chain) = mission::task_chain_durations(spec, agent, unit) {
                chains.insert(unit.clone(), chain);
            }
        }
        bus.send(
            id,
            Recipient::Broadcast,
            0.0,
            MessagePayload::AssessmentShare {
                assessments: assessments.clone(),
                chains: chains.clone(),
            },
        );
        for proc in procs.values_mut() {
            proc.shared_assessments.insert(id.clone(), assessments.clone());
            proc.shared_chains.insert(id.clone(), chains.clone());
        }
    }

    // Phase 2: the globally smallest id claims the market refereeship and
    // broadcasts the allocation scheme.
    let market_referee = elect_referee(&agent_ids.iter().cloned().collect())?;
    bus.send(
        &market_referee,
        Recipient::Broadcast,
        0.0,
        MessagePayload::RefereeClaim {
            scope: "market".to_owned(),
        },
    );
    let scheme = {
        let referee = &procs[&market_referee];
        let mut market_tasks = Vec::new();
        for (tb, _) in &tb_tasks {
            let mut chain_durations = BTreeMap::new();
            for (agent, chains) in &referee.shared_chains {
                if let Some(chain) = chains.get(tb) {
                    chain_durations.insert(agent.clone(), *chain);
                }
            }
            market_tasks.push(MarketTask {
                id: tb.clone(),
                chain_durations,
            });
        }
        let precedence = task_precedences(&tree);
        allocate::market_allocation(&market_tasks, &precedence)?
    };
    bus.send(
        &market_referee,
        Recipient::Broadcast,
        0.0,
        MessagePayload::AllocationScheme {
            pairs: scheme.pairs.clone(),
        },
    );

    // Phases 3 and 4: per-task referees resolve redundancy and announce the
    // awards; members of joint transports are mapped one-to-one by the
    // assignment solver.
    let mut assignments = Assignments::default();
    for (tb, color) in &tb_tasks {
        let candidates: BTreeMap<AgentId, Assessment> = procs[&market_referee]
            .shared_assessments
            .iter()
            .filter_map(|(agent, table)| {
                table
                    .get(tb)
                    .filter(|a| a.is_feasible())
                    .map(|a| (agent.clone(), *a))
            })
            .collect();
        if candidates.is_empty() {
            return Err(AllocError::InfeasibleTask(tb.clone()).into());
        }
        let a_sr: BTreeSet<AgentId> = candidates.keys().cloned().collect();
        let task_referee = elect_referee(&a_sr)?;
        let winner = {
            let referee = &procs[&task_referee];
            let shared: BTreeMap<AgentId, Assessment> = referee
                .shared_assessments
                .iter()
                .filter_map(|(agent, table)| table.get(tb).map(|a| (agent.clone(), *a)))
                .collect();
            allocate::resolve_simple(tb, &shared, &scheme, &weights, delta)?
        };
        deliver_award(&mut bus, &mut procs, &task_referee, tb, &winner, &a_sr);
        if *color != Color::Orange {
            assignments.assign(tb.clone(), winner.clone());
            continue;
        }

        // Joint transport: one member per slot, referee elected among the
        // eligible single UAVs.
        let (brick_id, _) = mission::parse_task_id(tb).expect("transport id");
        let subtasks: Vec<NodeId> = (1..=mission::JOINT_SLOTS)
            .map(|k| mission::task_id(&brick_id, Some(k)))
            .collect();
        let mut per_subtask = BTreeMap::new();
        let mut eligible: BTreeSet<AgentId> = BTreeSet::new();
        for subtask in &subtasks {
            let table: BTreeMap<AgentId, Assessment> = procs[&market_referee]
                .shared_assessments
                .iter()
                .filter_map(|(agent, t)| {
                    t.get(subtask)
                        .filter(|a| a.is_feasible())
                        .map(|a| (agent.clone(), *a))
                })
                .filter(|(agent, _)| {
                    spec.agent(agent)
                        .map(|a| a.kind == mission::AgentKind::Uav)
                        .unwrap_or(false)
                })
                .collect();
            eligible.extend(table.keys().cloned());
            per_subtask.insert(subtask.clone(), table);
        }
        let joint_referee = elect_referee(&eligible)?;
        let slot_assignment = allocate::resolve_complex(&tree, tb, &per_subtask, &weights)?;
        for (subtask, member) in &slot_assignment {
            deliver_award(&mut bus, &mut procs, &joint_referee, subtask, member, &eligible);
            assignments.assign(subtask.clone(), member.clone());
        }
    }

    // Phase 5/6: message-driven execution by the physical agents.
    let entries = execute(spec, &tree, &assignments, &mut procs, &mut bus, seed)?;
    let schedule = schedule::finalize(entries, &tree, spec);

    let award_views = procs
        .iter()
        .map(|(id, p)| (id.clone(), p.awards.clone()))
        .collect();
    Ok(CoordinationRun {
        schedule,
        trace: bus.trace,
        assignments,
        award_views,
    })
}

/// Precedence between transports implied by the tree's enables edges,
/// lifted to task granularity with the release point that matches the edge
/// (pick-up for the usual stagger, completion where a joint carry isolates
/// its neighbourhood).
pub fn task_precedences(tree: &TaemsTree) -> Vec<TaskPrecedence> {
    let mut strongest: BTreeMap<(NodeId, NodeId), Release> = BTreeMap::new();
    for edge in tree.edges_of_kind(RelationKind::Enables) {
        let (Some(src), Some(dst)) = (
            parse_action_id(&NodeId::new(edge.source.clone())),
            parse_action_id(&NodeId::new(edge.target.clone())),
        ) else {
            continue;
        };
        if src.brick_id == dst.brick_id {
            continue;
        }
        let pred = mission::task_id(&src.brick_id, None);
        let succ = mission::task_id(&dst.brick_id, None);
        let release = match src.verb {
            Verb::PickUp => Release::AfterPickup,
            _ => Release::AfterCompletion,
        };
        strongest
            .entry((pred, succ))
            .and_modify(|r| {
                if release == Release::AfterCompletion {
                    *r = Release::AfterCompletion;
                }
            })
            .or_insert(release);
    }
    strongest
        .into_iter()
        .map(|((pred, succ), release)| TaskPrecedence { pred, succ, release })
        .collect()
}

fn deliver_award(
    bus: &mut Bus,
    procs: &mut BTreeMap<AgentId, Proc>,
    referee: &AgentId,
    task: &NodeId,
    winner: &AgentId,
    contenders: &BTreeSet<AgentId>,
) {
    bus.send(
        referee,
        Recipient::Broadcast,
        0.0,
        MessagePayload::Award {
            task: task.clone(),
            agent: winner.clone(),
        },
    );
    for proc in procs.values_mut() {
        proc.awards.insert(task.clone(), winner.clone());
    }
    if let Some(proc) = procs.get_mut(winner) {
        proc.own_units.insert(task.clone());
    }
    for loser in contenders {
        if loser == winner {
            continue;
        }
        bus.send(
            referee,
            Recipient::Agent(loser.clone()),
            0.0,
            MessagePayload::Drop {
                task: task.clone(),
                agent: loser.clone(),
            },
        );
    }
}

/// The timed execution phase: every idle agent starts its highest-priority
/// executable action; completions are broadcast so other agents' enables
/// views advance; joint slots go through the request/acknowledge handshake.
fn execute(
    spec: &MissionSpec,
    tree: &TaemsTree,
    assignments: &Assignments,
    procs: &mut BTreeMap<AgentId, Proc>,
    bus: &mut Bus,
    seed: u64,
) -> Result<Vec<ScheduledAction>, CoordError> {
    let priority = taems::topological_action_order(tree);
    let physical: Vec<AgentId> = spec.physical_agents().map(|a| a.id.clone()).collect();
    let executors: BTreeMap<NodeId, AgentId> = tree
        .action_ids()
        .filter_map(|a| assignments.executor_of(a).map(|ag| (a.clone(), ag.clone())))
        .collect();
    for action in tree.action_ids() {
        if !executors.contains_key(action) {
            let unit = mission::owning_unit(action).unwrap_or_else(|| action.clone());
            return Err(ScheduleError::MissingAssignment(unit).into());
        }
    }
    let mut remaining: BTreeSet<NodeId> = executors.keys().cloned().collect();

    let mut entries: Vec<ScheduledAction> = Vec::new();
    let mut events: Vec<(f64, Event)> = Vec::new();
    let mut time = 0.0f64;
    let mut round = 0usize;

    // Start an action on an agent: consume resources, record the entry and
    // the completion event.
    fn begin(
        spec: &MissionSpec,
        tree: &TaemsTree,
        proc: &mut Proc,
        action: &NodeId,
        now: f64,
        entries: &mut Vec<ScheduledAction>,
        events: &mut Vec<(f64, Event)>,
    ) -> Result<(), CoordError> {
        let agent_spec = spec.agent(&proc.id).expect("known agent");
        let parsed = parse_action_id(action).expect("well-formed action id");
        let assessment = assess_action_from(spec, agent_spec, &parsed, proc.position)
            .map_err(CoordError::from)?;
        if !assessment.is_feasible() {
            return Err(ScheduleError::InfeasibleAssignment {
                task: mission::owning_unit(action).unwrap_or_else(|| action.clone()),
                agent: proc.id.clone(),
            }
            .into());
        }
        for edge in tree.edges_of_kind(RelationKind::Consumes) {
            if edge.source == action.0 {
                if let Some(res) = proc.resources.get(&edge.target) {
                    let updated = apply_resource_effect(res, -edge.amount.unwrap_or(1.0))
                        .expect("executability checked before start");
                    proc.resources.insert(edge.target.clone(), updated);
                }
            }
        }
        proc.running = Some(action.clone());
        entries.push(ScheduledAction {
            agent: proc.id.clone(),
            action: action.clone(),
            start: now,
            end: now + assessment.duration,
        });
        events.push((
            now + assessment.duration,
            Event::Completion {
                agent: proc.id.clone(),
                action: action.clone(),
            },
        ));
        Ok(())
    }

    loop {
        // Poll agents at the current instant until nobody makes progress.
        loop {
            let mut progressed = false;
            let n = physical.len().max(1);
            let offset = (seed as usize + round) % n;
            round += 1;
            for i in 0..physical.len() {
                let id = &physical[(i + offset) % physical.len()];
                if procs[id].running.is_some() {
                    continue;
                }
                let in_progress: BTreeSet<NodeId> = procs
                    .values()
                    .filter_map(|p| p.running.clone())
                    .collect();
                let proc = &procs[id];
                let open = executable_actions(tree, &proc.done, &in_progress, &proc.resources);
                let mut mine: Vec<NodeId> = open
                    .into_iter()
                    .filter(|a| remaining.contains(a))
                    .filter(|a| executors.get(a) == Some(id))
                    .collect();
                mine.sort_by_key(|a| (priority.get(a).copied().unwrap_or(usize::MAX), a.clone()));
                let Some(top) = mine.first().cloned() else {
                    continue;
                };

                let parsed = parse_action_id(&top).expect("well-formed action id");
                match parsed.slot {
                    None => {
                        remaining.remove(&top);
                        begin(
                            spec,
                            tree,
                            procs.get_mut(id).unwrap(),
                            &top,
                            time,
                            &mut entries,
                            &mut events,
                        )?;
                        progressed = true;
                    }
                    Some(slot) => {
                        if let Some(start) = procs[id].agreed_start.get(&top).copied() {
                            debug_assert!((start - time).abs() < 1e-9);
                            procs.get_mut(id).unwrap().agreed_start.remove(&top);
                            remaining.remove(&top);
                            begin(
                                spec,
                                tree,
                                procs.get_mut(id).unwrap(),
                                &top,
                                time,
                                &mut entries,
                                &mut events,
                            )?;
                            progressed = true;
                            continue;
                        }
                        if slot == 1 {
                            // Requester side: ask once, then wait. Starting
                            // lower-priority work here would let the partner
                            // arrive to a busy requester.
                            if !procs[id].sync_requested.contains_key(&top) {
                                procs
                                    .get_mut(id)
                                    .unwrap()
                                    .sync_requested
                                    .insert(top.clone(), 1);
                                let partner =
                                    partner_agent(&executors, &top).expect("paired slot");
                                bus.send(
                                    id,
                                    Recipient::Agent(partner.clone()),
                                    time,
                                    MessagePayload::SyncRequest {
                                        action: top.clone(),
                                        ready: time,
                                        attempt: 1,
                                    },
                                );
                                let partner_action = paired_action(&top);
                                procs
                                    .get_mut(&partner)
                                    .unwrap()
                                    .pending_partner_request
                                    .insert(partner_action, time);
                                events.push((
                                    time + SYNC_RETRY_TIMEOUT,
                                    Event::SyncRetry {
                                        agent: id.clone(),
                                        action: top.clone(),
                                    },
                                ));
                                progressed = true;
                            }
                        } else {
                            // Responder side: acknowledge a pending request
                            // and start together. A lost acknowledgement
                            // consumes the request; the partner retries.
                            if procs.get_mut(id).unwrap().pending_partner_request.remove(&top).is_some() {
                                let partner =
                                    partner_agent(&executors, &top).expect("paired slot");
                                let partner_action = paired_action(&top);
                                let delivered = bus.send(
                                    id,
                                    Recipient::Agent(partner.clone()),
                                    time,
                                    MessagePayload::SyncAck {
                                        action: partner_action.clone(),
                                        start: time,
                                    },
                                );
                                if delivered {
                                    procs
                                        .get_mut(&partner)
                                        .unwrap()
                                        .agreed_start
                                        .insert(partner_action, time);
                                    remaining.remove(&top);
                                    begin(
                                        spec,
                                        tree,
                                        procs.get_mut(id).unwrap(),
                                        &top,
                                        time,
                                        &mut entries,
                                        &mut events,
                                    )?;
                                }
                                progressed = true;
                            }
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }

        if events.is_empty() {
            if remaining.is_empty() {
                break;
            }
            return Err(ScheduleError::Deadlock {
                blocked: remaining.into_iter().collect(),
            }
            .into());
        }

        // Advance to the earliest event, deterministically ordered.
        events.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| format!("{:?}", a.1).cmp(&format!("{:?}", b.1)))
        });
        let (event_time, event) = events.remove(0);
        time = event_time;
        match event {
            Event::Completion { agent, action } => {
                for edge in tree.edges_of_kind(RelationKind::Produces) {
                    if edge.source == action.0 {
                        let proc = procs.get_mut(&agent).unwrap();
                        if let Some(res) = proc.resources.get(&edge.target) {
                            let updated =
                                apply_resource_effect(res, edge.amount.unwrap_or(1.0))
                                    .expect("produce never drops below lower");
                            proc.resources.insert(edge.target.clone(), updated);
                        }
                    }
                }
                {
                    let proc = procs.get_mut(&agent).unwrap();
                    proc.running = None;
                    if let Some(parsed) = parse_action_id(&action) {
                        if let Some(brick) = spec.brick(&parsed.brick_id) {
                            match parsed.verb {
                                Verb::GoToPile => proc.position = brick.pile_position,
                                Verb::GoToWall => proc.position = brick.wall_pose.xy(),
                                _ => {}
                            }
                        }
                    }
                }
                bus.send(
                    &agent,
                    Recipient::Broadcast,
                    time,
                    MessagePayload::StatusUpdate {
                        action: action.clone(),
                        completed_at: time,
                    },
                );
                for proc in procs.values_mut() {
                    proc.done.insert(action.clone());
                }
            }
            Event::SyncRetry { agent, action } => {
                let attempts = procs[&agent]
                    .sync_requested
                    .get(&action)
                    .copied()
                    .unwrap_or(0);
                let still_waiting = remaining.contains(&action)
                    && !procs[&agent].agreed_start.contains_key(&action);
                if !still_waiting {
                    continue;
                }
                if attempts >= MAX_SYNC_ATTEMPTS {
            return Err(CoordError::CoordinationTimeout {
                        agent,
                        action,
                        attempts,
                    });
                }
                let next = attempts + 1;
                procs
                    .get_mut(&agent)
                    .unwrap()
                    .sync_requested
                    .insert(action.clone(), next);
                let partner = partner_agent(&executors, &action).expect("paired slot");
                bus.send(
                    &agent,
                    Recipient::Agent(partner.clone()),
                    time,
                    MessagePayload::SyncRequest {
                        action: action.clone(),
                        ready: time,
                        attempt: next,
                    },
                );
                let partner_action = paired_action(&action);
                procs
                    .get_mut(&partner)
                    .unwrap()
                    .pending_partner_request
                    .insert(partner_action, time);
                events.push((
                    time + SYNC_RETRY_TIMEOUT,
                    Event::SyncRetry {
                        agent: agent.clone(),
                        action: action.clone(),
                    },
                ));
            }
        }
    }

    Ok(entries)
}

/// The opposite member slot of a joint action.
fn paired_action(action: &NodeId) -> NodeId {
    let parsed = parse_action_id(action).expect("well-formed action id");
    let slot = parsed.slot.expect("joint action");
    let other = if slot == 1 { 2 } else { 1 };
    mission::action_id(parsed.verb, &parsed.brick_id, Some(other))
}

fn partner_agent(executors: &BTreeMap<NodeId, AgentId>, action: &NodeId) -> Option<AgentId> {
    executors.get(&paired_action(action)).cloned()
}
