//! Declarative mission specifications: the wall layout, the agent roster
//! and the scoring rules, plus their translation into a task tree and into
//! per-agent quality/duration/cost assessments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taems::{
    AgentId, Interrelationship, NodeId, Qaf, RelationKind, Resource, TaemsNode, TaemsTree,
};

/// Sentinel duration/cost for actions an agent cannot perform. Large enough
/// to dominate any desk-scale mission without overflowing sums.
pub const BIG_M: f64 = 1e6;

/// Number of agents jointly carrying a large brick.
pub const JOINT_SLOTS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    Red,
    Green,
    Blue,
    Orange,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Orange];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "UGV")]
    Ugv,
    #[serde(rename = "UAV")]
    Uav,
    #[serde(rename = "UAVx2")]
    Uavx2,
}

impl AgentKind {
    pub fn token(self) -> &'static str {
        match self {
            AgentKind::Ugv => "UGV",
            AgentKind::Uav => "UAV",
            AgentKind::Uavx2 => "UAVx2",
        }
    }
}

pub type Point2 = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallPose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl WallPose {
    pub fn xy(&self) -> Point2 {
        [self.position[0], self.position[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Brick {
    pub id: String,
    pub color: Color,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub pile_position: Point2,
    pub wall_pose: WallPose,
    pub layer: u32,
    /// Ids of the bricks directly beneath this one.
    #[serde(default)]
    pub supports: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub kind: AgentKind,
    pub speed: f64,
    pub cost_rate: f64,
    pub start_position: Point2,
    /// Arm limit for ground robots; `None` means unbounded reach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach_height: Option<f64>,
    /// The two member UAVs of a joint-carry pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_ids: Option<[AgentId; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub base_points: BTreeMap<Color, f64>,
    pub uav_bonus: BTreeMap<Color, f64>,
}

impl Default for ScoreTable {
    fn default() -> Self {
        ScoreTable {
            base_points: [
                (Color::Red, 1.0),
                (Color::Green, 2.0),
                (Color::Blue, 3.0),
                (Color::Orange, 4.0),
            ]
            .into(),
            uav_bonus: [
                (Color::Red, 2.0),
                (Color::Green, 1.4),
                (Color::Blue, 1.0),
                (Color::Orange, 1.0),
            ]
            .into(),
        }
    }
}

/// Criteria weights: alpha/beta/gamma trade quality, duration and cost off
/// against each other (they must sum to one); delta balances individual
/// ratings against the market allocation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Criteria {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Criteria {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha >= 0.0
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && (self.alpha + self.beta + self.gamma - 1.0).abs() <= 1e-9
            && (0.5..1.0).contains(&self.delta)
    }
}

impl Default for Criteria {
    fn default() -> Self {
        Criteria::new(0.5, 0.35, 0.15, 0.7)
    }
}

/// Quality, duration and cost of one action as estimated by one agent.
/// Infeasible work carries zero quality and `BIG_M` duration and cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub quality: f64,
    pub duration: f64,
    pub cost: f64,
}

impl Assessment {
    pub const INFEASIBLE: Assessment = Assessment {
        quality: 0.0,
        duration: BIG_M,
        cost: BIG_M,
    };

    pub fn is_feasible(&self) -> bool {
        self.duration < BIG_M
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub bricks: Vec<Brick>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub score_table: ScoreTable,
    #[serde(default)]
    pub criteria: Criteria,
    pub fixed_grab_s: f64,
    pub fixed_release_s: f64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum MissionError {
    #[error("mission has no bricks")]
    EmptyWall,
    #[error("no agent can handle brick {0}")]
    NoEligibleAgent(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("invalid mission spec: {0}")]
    InvalidSpec(String),
}

/// The four behaviours that transport one brick, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verb {
    GoToPile,
    PickUp,
    GoToWall,
    PutDown,
}

impl Verb {
    pub const CHAIN: [Verb; 4] = [Verb::GoToPile, Verb::PickUp, Verb::GoToWall, Verb::PutDown];

    pub fn token(self) -> &'static str {
        match self {
            Verb::GoToPile => "GP",
            Verb::PickUp => "PU",
            Verb::GoToWall => "GW",
            Verb::PutDown => "PD",
        }
    }

    fn parse(token: &str) -> Option<Verb> {
        match token {
            "GP" => Some(Verb::GoToPile),
            "PU" => Some(Verb::PickUp),
            "GW" => Some(Verb::GoToWall),
            "PD" => Some(Verb::PutDown),
            _ => None,
        }
    }
}

/// A parsed action id: the behaviour, the brick and, for joint transports,
/// the member slot (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct ActionRef {
    pub verb: Verb,
    pub brick_id: String,
    pub slot: Option<usize>,
}

/// Parses ids of the form `GP(B1.1)` or `GW(O1)#2`.
pub fn parse_action_id(id: &NodeId) -> Option<ActionRef> {
    let raw = id.as_str();
    let (body, slot) = match raw.split_once('#') {
        Some((body, slot)) => (body, Some(slot.parse::<usize>().ok()?)),
        None => (raw, None),
    };
    let open = body.find('(')?;
    if !body.ends_with(')') {
        return None;
    }
    let verb = Verb::parse(&body[..open])?;
    let brick = &body[open + 1..body.len() - 1];
    if brick.is_empty() {
        return None;
    }
    Some(ActionRef {
        verb,
        brick_id: brick.to_owned(),
        slot,
    })
}

pub fn action_id(verb: Verb, brick_id: &str, slot: Option<usize>) -> NodeId {
    match slot {
        Some(k) => NodeId::new(format!("{}({})#{}", verb.token(), brick_id, k)),
        None => NodeId::new(format!("{}({})", verb.token(), brick_id)),
    }
}

pub fn task_id(brick_id: &str, slot: Option<usize>) -> NodeId {
    match slot {
        Some(k) => NodeId::new(format!("TB({brick_id})#{k}")),
        None => NodeId::new(format!("TB({brick_id})")),
    }
}

/// The task or subtask an action belongs to, which is also the granularity
/// at which work is awarded to agents.
pub fn owning_unit(action: &NodeId) -> Option<NodeId> {
    let r = parse_action_id(action)?;
    Some(task_id(&r.brick_id, r.slot))
}

/// Agent kinds allowed to transport a brick of the given color on their own.
pub fn eligible_kinds(color: Color) -> &'static [AgentKind] {
    match color {
        Color::Red | Color::Green => &[AgentKind::Ugv, AgentKind::Uav],
        Color::Blue => &[AgentKind::Uav],
        Color::Orange => &[AgentKind::Uavx2],
    }
}

pub fn euclid(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl MissionSpec {
    pub fn brick(&self, id: &str) -> Option<&Brick> {
        self.bricks.iter().find(|b| b.id == id)
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| &a.id == id)
    }

    /// Physical robots, i.e. everything except joint-carry pairs.
    pub fn physical_agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.iter().filter(|a| a.kind != AgentKind::Uavx2)
    }

    pub fn has_kind(&self, kind: AgentKind) -> bool {
        self.agents.iter().any(|a| a.kind == kind)
    }

    /// Bricks in canonical wall order: by layer, then by x position, then id.
    pub fn brick_order(&self) -> Vec<&Brick> {
        let mut order: Vec<&Brick> = self.bricks.iter().collect();
        order.sort_by(|a, b| {
            a.layer
                .cmp(&b.layer)
                .then(
                    a.wall_pose.position[0]
                        .partial_cmp(&b.wall_pose.position[0])
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then_with(|| a.id.cmp(&b.id))
        });
        order
    }
}

/// Checks the declarative invariants of a mission spec.
pub fn validate_spec(spec: &MissionSpec) -> Result<(), MissionError> {
    let bad = |msg: String| Err(MissionError::InvalidSpec(msg));
    if !spec.criteria.is_valid() {
        return bad("criteria weights must be non-negative, sum to 1, with delta in [0.5, 1)".into());
    }
    if spec.fixed_grab_s < 0.0 || spec.fixed_release_s < 0.0 {
        return bad("fixed grab/release durations must be non-negative".into());
    }
    let mut brick_ids = BTreeSet::new();
    for brick in &spec.bricks {
        if !brick_ids.insert(brick.id.clone()) {
            return bad(format!("duplicate brick id {}", brick.id));
        }
        if !(0.3..=1.8).contains(&brick.length) {
            return bad(format!("brick {} length outside [0.3, 1.8] m", brick.id));
        }
        if brick.layer == 0 && !brick.supports.is_empty() {
            return bad(format!("layer-0 brick {} lists supports", brick.id));
        }
    }
    for brick in &spec.bricks {
        for support in &brick.supports {
            let Some(under) = spec.brick(support) else {
                return bad(format!("brick {} supports unknown brick {}", brick.id, support));
            };
            if under.layer >= brick.layer {
                return bad(format!(
                    "brick {} cannot rest on {} in the same or higher layer",
                    brick.id, support
                ));
            }
        }
    }
    let mut agent_ids = BTreeSet::new();
    for agent in &spec.agents {
        if !agent_ids.insert(agent.id.clone()) {
            return bad(format!("duplicate agent id {}", agent.id));
        }
        if agent.speed <= 0.0 {
            return bad(format!("agent {} must have positive speed", agent.id));
        }
        if agent.cost_rate < 0.0 {
            return bad(format!("agent {} has negative cost rate", agent.id));
        }
        match agent.kind {
            AgentKind::Uavx2 => {
                let Some([a, b]) = &agent.member_ids else {
                    return bad(format!("pair {} must list its two members", agent.id));
                };
                if a == b {
                    return bad(format!("pair {} members must be distinct", agent.id));
                }
                for member in [a, b] {
                    match spec.agent(member) {
                        Some(m) if m.kind == AgentKind::Uav => {}
                        _ => {
                            return bad(format!(
                                "pair {} member {} is not an existing UAV",
                                agent.id, member
                            ))
                        }
                    }
                }
            }
            _ => {
                if agent.member_ids.is_some() {
                    return bad(format!("agent {} is not a pair but lists members", agent.id));
                }
            }
        }
    }
    for (color, points) in &spec.score_table.base_points {
        if *points < 0.0 {
            return bad(format!("negative base points for {color:?}"));
        }
    }
    Ok(())
}

fn carry_resource_id(agent: &AgentId) -> String {
    format!("carry({agent})")
}

/// Action node ids of one behaviour for a brick: one id for plain bricks,
/// one per member slot for jointly carried ones.
fn verb_actions(brick: &Brick, verb: Verb) -> Vec<NodeId> {
    if brick.color == Color::Orange {
        (1..=JOINT_SLOTS)
            .map(|k| action_id(verb, &brick.id, Some(k)))
            .collect()
    } else {
        vec![action_id(verb, &brick.id, None)]
    }
}

/// Builds the task tree for a mission: one transport task per brick under a
/// sum-all root, the pick-up/put-down precedence edges between stacked and
/// adjacent bricks, per-agent carry slots, and the joint-transport structure
/// for orange bricks.
pub fn generate_tree(spec: &MissionSpec) -> Result<TaemsTree, MissionError> {
    validate_spec(spec)?;
    if spec.bricks.is_empty() {
        return Err(MissionError::EmptyWall);
    }
    for brick in &spec.bricks {
        let feasible = spec
            .agents
            .iter()
            .any(|agent| assess_task(spec, agent, &task_id(&brick.id, None)).is_feasible());
        if !feasible {
            return Err(MissionError::NoEligibleAgent(brick.id.clone()));
        }
    }

    let root_id = NodeId::new("BuildWall");
    let mut tree = TaemsTree::new(root_id.clone());
    let order = spec.brick_order();

    let kinds_of = |color: Color, joint_member: bool| -> BTreeSet<String> {
        if joint_member {
            BTreeSet::from([AgentKind::Uav.token().to_owned()])
        } else {
            eligible_kinds(color)
                .iter()
                .map(|k| k.token().to_owned())
                .collect()
        }
    };

    let mut tb_ids = Vec::new();
    for brick in &order {
        if brick.color == Color::Orange {
            let mut slot_tasks = Vec::new();
            for slot in 1..=JOINT_SLOTS {
                let actions: Vec<NodeId> = Verb::CHAIN
                    .iter()
                    .map(|v| action_id(*v, &brick.id, Some(slot)))
                    .collect();
                for action in &actions {
                    let mut node = TaemsNode::action(action.as_str());
                    node.eligible_agent_kinds = kinds_of(brick.color, true);
                    tree.insert_node(node);
                }
                let mut task =
                    TaemsNode::task(task_id(&brick.id, Some(slot)).0, Qaf::SeqSumAll, actions);
                task.eligible_agent_kinds = kinds_of(brick.color, true);
                slot_tasks.push(task.id.clone());
                tree.insert_node(task);
            }
            let mut tb = TaemsNode::task(task_id(&brick.id, None).0, Qaf::Sum, slot_tasks);
            tb.local_qaf = Some(Qaf::Max);
            tb.eligible_agent_kinds = kinds_of(brick.color, false);
            tb_ids.push(tb.id.clone());
            tree.insert_node(tb);
        } else {
            let actions: Vec<NodeId> = Verb::CHAIN
                .iter()
                .map(|v| action_id(*v, &brick.id, None))
                .collect();
            for action in &actions {
                let mut node = TaemsNode::action(action.as_str());
                node.eligible_agent_kinds = kinds_of(brick.color, false);
                tree.insert_node(node);
            }
            let mut tb = TaemsNode::task(task_id(&brick.id, None).0, Qaf::SeqSumAll, actions);
            tb.eligible_agent_kinds = kinds_of(brick.color, false);
            tb_ids.push(tb.id.clone());
            tree.insert_node(tb);
        }
    }
    tree.insert_node(TaemsNode::task(root_id.0.clone(), Qaf::SumAll, tb_ids));

    // Precedence between bricks. A plain pair staggers transports from the
    // pick-up of the earlier brick; pairs touching an orange brick wait for
    // its full placement so that nothing else moves near a joint carry.
    let mut precedence_pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for brick in &order {
        for support in &brick.supports {
            precedence_pairs.insert((support.clone(), brick.id.clone()));
        }
    }
    let mut by_layer: BTreeMap<u32, Vec<&&Brick>> = BTreeMap::new();
    for brick in &order {
        by_layer.entry(brick.layer).or_default().push(brick);
    }
    for row in by_layer.values() {
        for pair in row.windows(2) {
            precedence_pairs.insert((pair[0].id.clone(), pair[1].id.clone()));
        }
    }
    for (earlier, later) in &precedence_pairs {
        let earlier = spec.brick(earlier).expect("validated brick id");
        let later = spec.brick(later).expect("validated brick id");
        let joint = earlier.color == Color::Orange || later.color == Color::Orange;
        let sources = if joint {
            verb_actions(earlier, Verb::PutDown)
        } else {
            verb_actions(earlier, Verb::PickUp)
        };
        for source in &sources {
            for target in verb_actions(later, Verb::GoToPile) {
                tree.interrelationships
                    .push(Interrelationship::enables(source, &target));
            }
        }
    }

    // One carry slot per physical robot, consumed by every pile run and
    // restored by every placement. The slot limits pile runs; whether it
    // applies depends on which agent executes, so schedulers pass only the
    // executing agent's resources when they query executability.
    for agent in spec.physical_agents() {
        let res = Resource::carry_slot(carry_resource_id(&agent.id), agent.id.clone());
        for brick in &order {
            for gp in verb_actions(brick, Verb::GoToPile) {
                tree.interrelationships.push(Interrelationship {
                    kind: RelationKind::Consumes,
                    source: gp.0.clone(),
                    target: res.id.clone(),
                    amount: Some(1.0),
                });
                tree.interrelationships.push(Interrelationship {
                    kind: RelationKind::Limits,
                    source: res.id.clone(),
                    target: gp.0.clone(),
                    amount: Some(1.0),
                });
            }
            for pd in verb_actions(brick, Verb::PutDown) {
                tree.interrelationships.push(Interrelationship {
                    kind: RelationKind::Produces,
                    source: pd.0.clone(),
                    target: res.id.clone(),
                    amount: Some(1.0),
                });
            }
        }
        tree.resources.insert(res.id.clone(), res);
    }

    Ok(tree)
}

/// Effective motion parameters: pairs move at their slower member's speed
/// and pay both members' cost rates.
fn motion_params(spec: &MissionSpec, agent: &AgentSpec) -> (f64, f64, Point2) {
    match (&agent.kind, &agent.member_ids) {
        (AgentKind::Uavx2, Some(members)) => {
            let resolved: Vec<&AgentSpec> = members
                .iter()
                .filter_map(|m| spec.agent(m))
                .collect();
            let slower = resolved
                .iter()
                .min_by(|a, b| {
                    a.speed
                        .partial_cmp(&b.speed)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then_with(|| a.id.cmp(&b.id))
                })
                .copied()
                .unwrap_or(agent);
            let rate_sum: f64 = resolved.iter().map(|m| m.cost_rate).sum();
            (slower.speed, rate_sum, slower.start_position)
        }
        _ => (agent.speed, agent.cost_rate, agent.start_position),
    }
}

/// Cost scales with brick size, normalized to the smallest brick length.
pub fn brick_size_factor(brick: &Brick) -> f64 {
    brick.length / 0.3
}

fn kind_feasible_for_action(agent: &AgentSpec, brick: &Brick, slot: Option<usize>) -> bool {
    match slot {
        // Member slots of a joint transport are flown by individual UAVs;
        // the pair itself assesses them when estimating the joint chain.
        Some(_) => {
            brick.color == Color::Orange
                && matches!(agent.kind, AgentKind::Uav | AgentKind::Uavx2)
        }
        None => eligible_kinds(brick.color).contains(&agent.kind),
    }
}

/// Quality awarded at put-down. Joint transports split the brick's score
/// across member slots so the brick counts once overall.
fn put_down_quality(spec: &MissionSpec, agent: &AgentSpec, brick: &Brick, slot: Option<usize>) -> f64 {
    let base = spec
        .score_table
        .base_points
        .get(&brick.color)
        .copied()
        .unwrap_or(0.0);
    let bonus = match agent.kind {
        AgentKind::Uav | AgentKind::Uavx2 => spec
            .score_table
            .uav_bonus
            .get(&brick.color)
            .copied()
            .unwrap_or(1.0),
        AgentKind::Ugv => 1.0,
    };
    let quality = base * bonus;
    if slot.is_some() {
        quality / JOINT_SLOTS as f64
    } else {
        quality
    }
}

/// Assessment of one action by one agent from an explicit position; the
/// position matters only for pile runs.
pub fn assess_action_from(
    spec: &MissionSpec,
    agent: &AgentSpec,
    action: &ActionRef,
    position: Point2,
) -> Result<Assessment, MissionError> {
    let brick = spec
        .brick(&action.brick_id)
        .ok_or_else(|| MissionError::UnknownAction(action.brick_id.clone()))?;
    if let Some(slot) = action.slot {
        if brick.color != Color::Orange || !(1..=JOINT_SLOTS).contains(&slot) {
            return Err(MissionError::UnknownAction(format!(
                "{}({})#{}",
                action.verb.token(),
                brick.id,
                slot
            )));
        }
    } else if brick.color == Color::Orange {
        return Err(MissionError::UnknownAction(format!(
            "{}({}) has member slots",
            action.verb.token(),
            brick.id
        )));
    }

    if !kind_feasible_for_action(agent, brick, action.slot) {
        return Ok(Assessment::INFEASIBLE);
    }
    if let Some(reach) = agent.reach_height {
        if brick.wall_pose.position[2] > reach {
            return Ok(Assessment::INFEASIBLE);
        }
    }

    let (speed, rate, _) = motion_params(spec, agent);
    let duration = match action.verb {
        Verb::GoToPile => euclid(position, brick.pile_position) / speed,
        Verb::GoToWall => euclid(brick.pile_position, brick.wall_pose.xy()) / speed,
        Verb::PickUp => spec.fixed_grab_s,
        Verb::PutDown => spec.fixed_release_s,
    };
    let quality = match action.verb {
        Verb::PutDown => put_down_quality(spec, agent, brick, action.slot),
        _ => 0.0,
    };
    Ok(Assessment {
        quality,
        duration,
        cost: duration * rate * brick_size_factor(brick),
    })
}

/// Planning-time assessment of an action: pile runs start from the agent's
/// start position. Schedulers re-derive pile-run durations from the agent's
/// position after its previous placement.
pub fn assess(
    spec: &MissionSpec,
    agent: &AgentSpec,
    action: &NodeId,
) -> Result<Assessment, MissionError> {
    let parsed =
        parse_action_id(action).ok_or_else(|| MissionError::UnknownAction(action.0.clone()))?;
    let (_, _, position) = motion_params(spec, agent);
    assess_action_from(spec, agent, &parsed, position)
}

/// Parsed form of a transport task id: the brick plus an optional member
/// slot.
pub fn parse_task_id(id: &NodeId) -> Option<(String, Option<usize>)> {
    let raw = id.as_str();
    let (body, slot) = match raw.split_once('#') {
        Some((body, slot)) => (body, Some(slot.parse::<usize>().ok()?)),
        None => (raw, None),
    };
    let brick = body.strip_prefix("TB(")?.strip_suffix(')')?;
    if brick.is_empty() {
        return None;
    }
    Some((brick.to_owned(), slot))
}

/// Planning-time assessment of a whole transport task (or member subtask):
/// its action chain summed, saturating to infeasible when any step is.
///
/// A plain transport is the four-action chain for the assessing agent. A
/// joint transport as a whole is only feasible for a pair agent; a member
/// subtask is only feasible for a single UAV.
pub fn assess_task(spec: &MissionSpec, agent: &AgentSpec, task: &NodeId) -> Assessment {
    let Some((brick_id, slot)) = parse_task_id(task) else {
        return Assessment::INFEASIBLE;
    };
    let Some(brick) = spec.brick(&brick_id) else {
        return Assessment::INFEASIBLE;
    };

    let slots: Vec<Option<usize>> = if brick.color == Color::Orange {
        match (slot, agent.kind) {
            // The pair assesses the joint transport as one synchronized
            // chain; quality counts the whole brick.
            (None, AgentKind::Uavx2) => vec![Some(1)],
            (Some(k), AgentKind::Uav) => vec![Some(k)],
            _ => return Assessment::INFEASIBLE,
        }
    } else {
        match slot {
            None => vec![None],
            Some(_) => return Assessment::INFEASIBLE,
        }
    };

    let (_, _, mut position) = motion_params(spec, agent);
    let mut total = Assessment {
        quality: 0.0,
        duration: 0.0,
        cost: 0.0,
    };
    for slot in slots {
        for verb in Verb::CHAIN {
            let action = ActionRef {
                verb,
                brick_id: brick_id.clone(),
                slot,
            };
            let a = match assess_action_from(spec, agent, &action, position) {
                Ok(a) => a,
                Err(_) => return Assessment::INFEASIBLE,
            };
            if !a.is_feasible() {
                return Assessment::INFEASIBLE;
            }
            total.quality += a.quality;
            total.duration += a.duration;
            total.cost += a.cost;
            if verb == Verb::GoToPile {
                position = brick.pile_position;
            } else if verb == Verb::GoToWall {
                position = brick.wall_pose.xy();
            }
        }
    }
    if agent.kind == AgentKind::Uavx2 && brick.color == Color::Orange && slot.is_none() {
        // Whole-brick quality for the pair, not the single-slot share.
        total.quality = put_down_quality(spec, agent, brick, None);
    }
    total
}

/// Per-action durations of a task chain for one agent, used by the market
/// function to stagger successor transports from the pick-up instant.
pub fn task_chain_durations(spec: &MissionSpec, agent: &AgentSpec, task: &NodeId) -> Option<[f64; 4]> {
    let assessment = assess_task(spec, agent, task);
    if !assessment.is_feasible() {
        return None;
    }
    let (brick_id, slot) = parse_task_id(task)?;
    let brick = spec.brick(&brick_id)?;
    let slot = if brick.color == Color::Orange && slot.is_none() {
        Some(1)
    } else {
        slot
    };
    let (_, _, mut position) = motion_params(spec, agent);
    let mut durations = [0.0; 4];
    for (i, verb) in Verb::CHAIN.into_iter().enumerate() {
        let action = ActionRef {
            verb,
            brick_id: brick_id.clone(),
            slot,
        };
        let a = assess_action_from(spec, agent, &action, position).ok()?;
        durations[i] = a.duration;
        if verb == Verb::GoToPile {
            position = brick.pile_position;
        } else if verb == Verb::GoToWall {
            position = brick.wall_pose.xy();
        }
    }
    Some(durations)
}

/// Fixture builders shared by tests across the crate.
#[cfg(test)]
pub(crate) mod testkit {
    use super::*;

    pub(crate) fn uav(id: &str, speed: f64) -> AgentSpec {
        AgentSpec {
            id: AgentId::new(id),
            kind: AgentKind::Uav,
            speed,
            cost_rate: 1.0,
            start_position: [0.0, 0.0],
            reach_height: None,
            member_ids: None,
        }
    }

    pub(crate) fn ugv(id: &str, speed: f64) -> AgentSpec {
        AgentSpec {
            id: AgentId::new(id),
            kind: AgentKind::Ugv,
            speed,
            cost_rate: 0.2,
            start_position: [0.0, 0.0],
            reach_height: Some(1.5),
            member_ids: None,
        }
    }

    pub(crate) fn pair(id: &str, a: &str, b: &str) -> AgentSpec {
        AgentSpec {
            id: AgentId::new(id),
            kind: AgentKind::Uavx2,
            speed: 1.0,
            cost_rate: 0.0,
            start_position: [0.0, 0.0],
            reach_height: None,
            member_ids: Some([AgentId::new(a), AgentId::new(b)]),
        }
    }

    pub(crate) fn brick(id: &str, color: Color, length: f64, layer: u32, x: f64) -> Brick {
        Brick {
            id: id.to_owned(),
            color,
            length,
            width: 0.2,
            height: 0.2,
            pile_position: [4.0, 8.0],
            wall_pose: WallPose {
                position: [x, 20.0, layer as f64 * 0.2],
                yaw: 0.0,
            },
            layer,
            supports: Vec::new(),
        }
    }

    pub(crate) fn spec_with(bricks: Vec<Brick>, agents: Vec<AgentSpec>) -> MissionSpec {
        MissionSpec {
            bricks,
            agents,
            score_table: ScoreTable::default(),
            criteria: Criteria::default(),
            fixed_grab_s: 5.0,
            fixed_release_s: 5.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testkit::*;
    use super::*;
    use crate::taems::{validate_tree, RelationKind};

    fn stacked_blue_pair() -> MissionSpec {
        let mut bottom = brick("B1.1", Color::Blue, 1.2, 0, 0.6);
        bottom.pile_position = [4.0, 8.0];
        let mut top = brick("B2.1", Color::Blue, 1.2, 1, 0.6);
        top.pile_position = [4.0, 8.0];
        top.supports = vec!["B1.1".to_owned()];
        spec_with(vec![bottom, top], vec![uav("uav1", 2.0)])
    }

    #[test]
    fn stacked_pair_generates_the_expected_tree() {
        let spec = stacked_blue_pair();
        let tree = generate_tree(&spec).unwrap();
        assert_eq!(validate_tree(&tree), vec![]);
        assert_eq!(tree.action_ids().count(), 8);
        assert_eq!(tree.resources.len(), 1);
        let enables: Vec<_> = tree.edges_of_kind(RelationKind::Enables).collect();
        assert_eq!(enables.len(), 1);
        assert_eq!(enables[0].source, "PU(B1.1)");
        assert_eq!(enables[0].target, "GP(B2.1)");
        assert_eq!(tree.edges_of_kind(RelationKind::Consumes).count(), 2);
        assert_eq!(tree.edges_of_kind(RelationKind::Produces).count(), 2);
        assert_eq!(tree.edges_of_kind(RelationKind::Limits).count(), 2);
    }

    #[test]
    fn single_red_brick_keeps_the_tree_minimal() {
        let spec = spec_with(
            vec![brick("R1", Color::Red, 0.3, 0, 0.15)],
            vec![ugv("ugv1", 0.5)],
        );
        let tree = generate_tree(&spec).unwrap();
        assert_eq!(validate_tree(&tree), vec![]);
        assert_eq!(tree.action_ids().count(), 4);
        assert!(tree
            .nodes
            .values()
            .all(|n| n.local_qaf.is_none()));
    }

    #[test]
    fn orange_brick_builds_joint_subtrees() {
        let spec = spec_with(
            vec![brick("O1", Color::Orange, 1.8, 0, 0.9)],
            vec![
                uav("uav1", 2.0),
                uav("uav2", 2.0),
                pair("pair1", "uav1", "uav2"),
            ],
        );
        let tree = generate_tree(&spec).unwrap();
        assert_eq!(validate_tree(&tree), vec![]);
        let tb = tree.node(&NodeId::new("TB(O1)")).unwrap();
        assert_eq!(tb.local_qaf, Some(Qaf::Max));
        assert_eq!(tb.children.len(), 2);
        assert_eq!(tree.action_ids().count(), 8);
    }

    #[test]
    fn missing_capability_is_rejected() {
        let spec = spec_with(
            vec![brick("B1", Color::Blue, 1.2, 0, 0.6)],
            vec![ugv("ugv1", 0.5)],
        );
        assert_eq!(
            generate_tree(&spec),
            Err(MissionError::NoEligibleAgent("B1".to_owned()))
        );
        let empty = spec_with(vec![], vec![ugv("ugv1", 0.5)]);
        assert_eq!(generate_tree(&empty), Err(MissionError::EmptyWall));
    }

    #[test]
    fn ground_robot_cannot_assess_blue_placement() {
        let spec = spec_with(
            vec![brick("B1", Color::Blue, 1.2, 0, 0.6)],
            vec![ugv("ugv1", 0.5), uav("uav1", 2.0)],
        );
        let a = assess(&spec, &spec.agents[0], &NodeId::new("PD(B1)")).unwrap();
        assert_eq!(a, Assessment::INFEASIBLE);
        assert_eq!(a.quality, 0.0);
        assert_eq!(a.duration, BIG_M);
        assert_eq!(a.cost, BIG_M);
    }

    #[test]
    fn wall_run_duration_is_distance_over_speed() {
        let mut b = brick("G1", Color::Green, 0.6, 0, 0.3);
        b.pile_position = [0.0, 10.0];
        b.wall_pose.position = [0.0, 20.0, 0.0];
        let spec = spec_with(vec![b], vec![uav("uav1", 2.0)]);
        let a = assess(&spec, &spec.agents[0], &NodeId::new("GW(G1)")).unwrap();
        assert!((a.duration - 5.0).abs() < 1e-12);
    }

    #[test]
    fn aerial_bonus_doubles_red_placement_quality() {
        let mut spec = spec_with(
            vec![brick("R1", Color::Red, 0.3, 0, 0.15)],
            vec![uav("uav1", 2.0)],
        );
        spec.score_table.base_points.insert(Color::Red, 1.0);
        let a = assess(&spec, &spec.agents[0], &NodeId::new("PD(R1)")).unwrap();
        assert!((a.quality - 2.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_reach_placement_is_infeasible_for_the_arm() {
        let mut b = brick("R1", Color::Red, 0.3, 0, 0.15);
        b.wall_pose.position[2] = 2.0;
        let spec = spec_with(vec![b], vec![ugv("ugv1", 0.5), uav("uav1", 2.0)]);
        let a = assess(&spec, &spec.agents[0], &NodeId::new("PD(R1)")).unwrap();
        assert!(!a.is_feasible());
        let task = assess_task(&spec, &spec.agents[0], &NodeId::new("TB(R1)"));
        assert!(!task.is_feasible());
    }

    #[test]
    fn pair_uses_slower_member_and_summed_rates() {
        let mut fast = uav("uav1", 3.0);
        fast.cost_rate = 1.0;
        let mut slow = uav("uav2", 1.0);
        slow.cost_rate = 1.5;
        let mut b = brick("O1", Color::Orange, 1.8, 0, 0.9);
        b.pile_position = [0.0, 10.0];
        b.wall_pose.position = [0.0, 20.0, 0.0];
        let spec = spec_with(vec![b], vec![fast, slow, pair("pair1", "uav1", "uav2")]);
        let pair_spec = spec.agent(&AgentId::new("pair1")).unwrap();
        let a = assess(&spec, pair_spec, &NodeId::new("GW(O1)#1")).unwrap();
        assert!((a.duration - 10.0).abs() < 1e-12); // 10 m at the slower 1 m/s
        assert!((a.cost - 10.0 * 2.5 * 6.0).abs() < 1e-9);
    }

    #[test]
    fn whole_joint_transport_is_infeasible_for_one_uav() {
        let spec = spec_with(
            vec![brick("O1", Color::Orange, 1.8, 0, 0.9)],
            vec![
                uav("uav1", 2.0),
                uav("uav2", 2.0),
                pair("pair1", "uav1", "uav2"),
            ],
        );
        let single = assess_task(&spec, &spec.agents[0], &NodeId::new("TB(O1)"));
        assert!(!single.is_feasible());
        let joint = assess_task(&spec, spec.agent(&AgentId::new("pair1")).unwrap(), &NodeId::new("TB(O1)"));
        assert!(joint.is_feasible());
        let slot = assess_task(&spec, &spec.agents[0], &NodeId::new("TB(O1)#1"));
        assert!(slot.is_feasible());
    }

    #[test]
    fn unknown_action_is_rejected() {
        let spec = stacked_blue_pair();
        assert!(matches!(
            assess(&spec, &spec.agents[0], &NodeId::new("FLY(B1.1)")),
            Err(MissionError::UnknownAction(_))
        ));
        assert!(matches!(
            assess(&spec, &spec.agents[0], &NodeId::new("GP(NOPE)")),
            Err(MissionError::UnknownAction(_))
        ));
    }

    #[test]
    fn mission_spec_round_trips_through_json() {
        let spec = stacked_blue_pair();
        let json = serde_json::to_string_pretty(&spec).unwrap();
        let parsed: MissionSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, spec);
    }
}
