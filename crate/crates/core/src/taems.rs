//! Hierarchical task trees with quality accumulation functions,
//! interrelationships and virtual resources.
//!
//! Trees and resources are immutable snapshots: every state-changing
//! operation returns a new value, so they can be shared read-only across
//! concurrent agent processes without locking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Comparison slack for resource arithmetic on `f64` state values.
pub const EPS: f64 = 1e-9;

/// Identifier of a task or action node, unique within a tree.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Identifier of an agent (robot or robot pair).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

/// Quality accumulation function of a task node.
///
/// `SumAll` is a logical AND (zero if any child is zero), `Max` an exclusive
/// choice, `SeqSumAll` an AND with strictly sequential execution of the
/// children in listed order, and `Sum` gives partial credit for whichever
/// children complete.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Qaf {
    SumAll,
    Max,
    SeqSumAll,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Task,
    Action,
}

/// A node of the task tree. Action nodes are leaves that map to real agent
/// behaviours; task nodes combine children under a QAF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaemsNode {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qaf: Option<Qaf>,
    /// Present only on complexly redundant tasks whose subtasks must run
    /// simultaneously on distinct agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_qaf: Option<Qaf>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub eligible_agent_kinds: BTreeSet<String>,
}

impl TaemsNode {
    pub fn task(id: impl Into<String>, qaf: Qaf, children: Vec<NodeId>) -> Self {
        TaemsNode {
            id: NodeId::new(id),
            kind: NodeKind::Task,
            children,
            qaf: Some(qaf),
            local_qaf: None,
            eligible_agent_kinds: BTreeSet::new(),
        }
    }

    pub fn action(id: impl Into<String>) -> Self {
        TaemsNode {
            id: NodeId::new(id),
            kind: NodeKind::Action,
            children: Vec::new(),
            qaf: None,
            local_qaf: None,
            eligible_agent_kinds: BTreeSet::new(),
        }
    }

    pub fn is_action(&self) -> bool {
        self.kind == NodeKind::Action
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    /// Source node must complete before the target node may start.
    Enables,
    /// Hard ordering: the target must complete before the source completes.
    Disables,
    /// Executing the source node removes `amount` from the target resource.
    Consumes,
    /// Completing the source node restores `amount` of the target resource.
    Produces,
    /// The source resource must hold at least `amount` for the target node
    /// to be executable.
    Limits,
}

/// A relation between two nodes, or between a node and a resource.
/// `source`/`target` are raw id tokens because resource kinds mix node and
/// resource identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interrelationship {
    pub kind: RelationKind,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<f64>,
}

impl Interrelationship {
    pub fn enables(source: &NodeId, target: &NodeId) -> Self {
        Interrelationship {
            kind: RelationKind::Enables,
            source: source.0.clone(),
            target: target.0.clone(),
            amount: None,
        }
    }

    pub fn disables(source: &NodeId, target: &NodeId) -> Self {
        Interrelationship {
            kind: RelationKind::Disables,
            source: source.0.clone(),
            target: target.0.clone(),
            amount: None,
        }
    }
}

/// A bounded virtual counter owned by one agent, e.g. its single slot for
/// carrying a brick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub state: f64,
    pub lower: f64,
    pub upper: f64,
    pub owner_agent: AgentId,
}

impl Resource {
    /// The default per-agent carry slot: one unit available, bounded by
    /// [0, 1.1].
    pub fn carry_slot(id: impl Into<String>, owner: AgentId) -> Self {
        Resource {
            id: id.into(),
            state: 1.0,
            lower: 0.0,
            upper: 1.1,
            owner_agent: owner,
        }
    }
}

/// A complete task tree: a single root, a node table, the interrelationships
/// and the virtual resources.
#[derive(Clone, Debug, PartialEq)]
pub struct TaemsTree {
    pub root: NodeId,
    pub nodes: BTreeMap<NodeId, TaemsNode>,
    pub interrelationships: Vec<Interrelationship>,
    pub resources: BTreeMap<String, Resource>,
}

/// Wire form of [`TaemsTree`]: node and resource tables flatten to arrays
/// sorted by id so that emitted JSON is deterministic.
#[derive(Serialize, Deserialize)]
struct TreeWire {
    root: NodeId,
    nodes: Vec<TaemsNode>,
    edges: Vec<Interrelationship>,
    resources: Vec<Resource>,
}

impl Serialize for TaemsTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TreeWire {
            root: self.root.clone(),
            nodes: self.nodes.values().cloned().collect(),
            edges: self.interrelationships.clone(),
            resources: self.resources.values().cloned().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TaemsTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = TreeWire::deserialize(deserializer)?;
        let mut nodes = BTreeMap::new();
        for node in wire.nodes {
            if nodes.insert(node.id.clone(), node).is_some() {
                return Err(serde::de::Error::custom("duplicate node id"));
            }
        }
        let mut resources = BTreeMap::new();
        for res in wire.resources {
            if resources.insert(res.id.clone(), res).is_some() {
                return Err(serde::de::Error::custom("duplicate resource id"));
            }
        }
        Ok(TaemsTree {
            root: wire.root,
            nodes,
            interrelationships: wire.edges,
            resources,
        })
    }
}

impl TaemsTree {
    pub fn new(root: NodeId) -> Self {
        TaemsTree {
            root,
            nodes: BTreeMap::new(),
            interrelationships: Vec::new(),
            resources: BTreeMap::new(),
        }
    }

    pub fn insert_node(&mut self, node: TaemsNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn node(&self, id: &NodeId) -> Option<&TaemsNode> {
        self.nodes.get(id)
    }

    /// All action leaves, in id order.
    pub fn action_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .values()
            .filter(|n| n.is_action())
            .map(|n| &n.id)
    }

    /// Map from child id to parent id, derived from the children lists.
    pub fn parent_map(&self) -> BTreeMap<NodeId, NodeId> {
        let mut parents = BTreeMap::new();
        for node in self.nodes.values() {
            for child in &node.children {
                parents.insert(child.clone(), node.id.clone());
            }
        }
        parents
    }

    pub fn edges_of_kind(&self, kind: RelationKind) -> impl Iterator<Item = &Interrelationship> {
        self.interrelationships
            .iter()
            .filter(move |e| e.kind == kind)
    }

    /// Copy of the tree with all resources and resource-typed edges removed.
    pub fn without_resources(&self) -> TaemsTree {
        let mut tree = self.clone();
        tree.resources.clear();
        tree.interrelationships.retain(|e| {
            matches!(e.kind, RelationKind::Enables | RelationKind::Disables)
        });
        tree
    }
}

/// A broken tree invariant. Violations are data, not errors: validation
/// collects all of them so that mission authoring stays diagnosable.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("{node} references missing id {reference}")]
    UnresolvedReference { node: NodeId, reference: String },
    #[error("enables relation is cyclic through {}", display_cycle(.cycle))]
    CyclicEnables { cycle: Vec<NodeId> },
    #[error("parent/child structure is cyclic at {node}")]
    CyclicStructure { node: NodeId },
    #[error("action {node} has children")]
    ActionWithChildren { node: NodeId },
    #[error("action {node} carries a QAF")]
    ActionWithQaf { node: NodeId },
    #[error("task {node} has no children")]
    TaskWithoutChildren { node: NodeId },
    #[error("task {node} has no QAF")]
    TaskWithoutQaf { node: NodeId },
    #[error("node {node} has multiple parents")]
    MultipleParents { node: NodeId },
    #[error("node {node} is not reachable from the root")]
    Unreachable { node: NodeId },
    #[error("empty node id")]
    EmptyNodeId,
    #[error("duplicate child {child} under {parent}")]
    DuplicateChild { parent: NodeId, child: NodeId },
    #[error("{kind:?} edge {source_id}->{target_id} loops on itself")]
    SelfLoop {
        kind: RelationKind,
        source_id: String,
        target_id: String,
    },
    #[error("{kind:?} edge {source_id}->{target_id} connects the wrong id kinds")]
    EdgeEndpoints {
        kind: RelationKind,
        source_id: String,
        target_id: String,
    },
    #[error("resource {id} state outside its [lower, upper] bounds")]
    ResourceBounds { id: String },
}

fn display_cycle(cycle: &[NodeId]) -> String {
    cycle
        .iter()
        .map(NodeId::as_str)
        .collect::<Vec<_>>()
        .join(" -> ")
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TaemsError {
    #[error("no quality recorded for action leaf {0}")]
    MissingLeafQuality(NodeId),
}

/// Marker returned when a consume would push a resource below its lower
/// bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("insufficient resource")]
pub struct Insufficient;

/// Checks every structural invariant of the tree and returns all violations
/// found (empty means the tree is well formed).
pub fn validate_tree(tree: &TaemsTree) -> Vec<Violation> {
    let mut out = Vec::new();

    if tree.nodes.is_empty() {
        return out; // the empty tree is trivially valid
    }

    for node in tree.nodes.values() {
        if node.id.0.is_empty() {
            out.push(Violation::EmptyNodeId);
        }
        match node.kind {
            NodeKind::Action => {
                if !node.children.is_empty() {
                    out.push(Violation::ActionWithChildren {
                        node: node.id.clone(),
                    });
                }
                if node.qaf.is_some() || node.local_qaf.is_some() {
                    out.push(Violation::ActionWithQaf {
                        node: node.id.clone(),
                    });
                }
            }
            NodeKind::Task => {
                if node.children.is_empty() {
                    out.push(Violation::TaskWithoutChildren {
                        node: node.id.clone(),
                    });
                }
                if node.qaf.is_none() {
                    out.push(Violation::TaskWithoutQaf {
                        node: node.id.clone(),
                    });
                }
            }
        }
        let mut seen = BTreeSet::new();
        for child in &node.children {
            if !tree.nodes.contains_key(child) {
                out.push(Violation::UnresolvedReference {
                    node: node.id.clone(),
                    reference: child.0.clone(),
                });
            }
            if !seen.insert(child.clone()) {
                out.push(Violation::DuplicateChild {
                    parent: node.id.clone(),
                    child: child.clone(),
                });
            }
        }
    }

    if !tree.nodes.contains_key(&tree.root) {
        out.push(Violation::UnresolvedReference {
            node: tree.root.clone(),
            reference: tree.root.0.clone(),
        });
    }

    // Parent multiplicity.
    let mut parent_count: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for node in tree.nodes.values() {
        for child in &node.children {
            *parent_count.entry(child).or_default() += 1;
        }
    }
    for (node, count) in parent_count {
        if count > 1 {
            out.push(Violation::MultipleParents { node: node.clone() });
        }
    }

    // Reachability and parent/child cycles, walked from the root.
    let mut visited = BTreeSet::new();
    let mut stack = vec![(tree.root.clone(), false)];
    let mut on_path = BTreeSet::new();
    while let Some((id, leaving)) = stack.pop() {
        if leaving {
            on_path.remove(&id);
            continue;
        }
        if on_path.contains(&id) {
            out.push(Violation::CyclicStructure { node: id });
            continue;
        }
        if !visited.insert(id.clone()) {
            continue;
        }
        on_path.insert(id.clone());
        stack.push((id.clone(), true));
        if let Some(node) = tree.nodes.get(&id) {
            for child in &node.children {
                if tree.nodes.contains_key(child) {
                    stack.push((child.clone(), false));
                }
            }
        }
    }
    for id in tree.nodes.keys() {
        if !visited.contains(id) {
            out.push(Violation::Unreachable { node: id.clone() });
        }
    }

    // Edge endpoint discipline.
    for edge in &tree.interrelationships {
        if edge.source == edge.target {
            out.push(Violation::SelfLoop {
                kind: edge.kind,
                source_id: edge.source.clone(),
                target_id: edge.target.clone(),
            });
            continue;
        }
        let src_node = tree.nodes.contains_key(&NodeId::new(edge.source.clone()));
        let dst_node = tree.nodes.contains_key(&NodeId::new(edge.target.clone()));
        let src_res = tree.resources.contains_key(&edge.source);
        let dst_res = tree.resources.contains_key(&edge.target);
        let ok = match edge.kind {
            RelationKind::Enables | RelationKind::Disables => src_node && dst_node,
            RelationKind::Consumes | RelationKind::Produces => src_node && dst_res,
            RelationKind::Limits => src_res && dst_node,
        };
        if !ok {
            if (src_node || src_res) && (dst_node || dst_res) {
                out.push(Violation::EdgeEndpoints {
                    kind: edge.kind,
                    source_id: edge.source.clone(),
                    target_id: edge.target.clone(),
                });
            } else {
                let reference = if src_node || src_res {
                    edge.target.clone()
                } else {
                    edge.source.clone()
                };
                out.push(Violation::UnresolvedReference {
                    node: NodeId::new(edge.source.clone()),
                    reference,
                });
            }
        }
    }

    // Enables acyclicity.
    if let Some(cycle) = find_enables_cycle(tree) {
        out.push(Violation::CyclicEnables { cycle });
    }

    for res in tree.resources.values() {
        if res.state < res.lower - EPS || res.state > res.upper + EPS || res.lower > res.upper {
            out.push(Violation::ResourceBounds { id: res.id.clone() });
        }
    }

    out
}

fn find_enables_cycle(tree: &TaemsTree) -> Option<Vec<NodeId>> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for edge in tree.edges_of_kind(RelationKind::Enables) {
        succ.entry(&edge.source).or_default().push(&edge.target);
    }
    let mut colors: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'a>(
        node: &'a str,
        succ: &BTreeMap<&'a str, Vec<&'a str>>,
        colors: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<NodeId>> {
        colors.insert(node, 1);
        path.push(node);
        for next in succ.get(node).into_iter().flatten() {
            match colors.get(next).copied().unwrap_or(0) {
                0 => {
                    if let Some(c) = dfs(next, succ, colors, path) {
                        return Some(c);
                    }
                }
                1 => {
                    let start = path.iter().position(|n| n == next).unwrap_or(0);
                    let mut cycle: Vec<NodeId> =
                        path[start..].iter().map(|s| NodeId::new(*s)).collect();
                    cycle.push(NodeId::new(*next));
                    return Some(cycle);
                }
                _ => {}
            }
        }
        path.pop();
        colors.insert(node, 2);
        None
    }
    let sources: Vec<&str> = succ.keys().copied().collect();
    for source in sources {
        if colors.get(source).copied().unwrap_or(0) == 0 {
            let mut path = Vec::new();
            if let Some(cycle) = dfs(source, &succ, &mut colors, &mut path) {
                return Some(cycle);
            }
        }
    }
    None
}

/// Bottom-up quality of the root given a quality value per action leaf.
///
/// `SumAll`/`SeqSumAll` sum their children but collapse to zero when any
/// child is zero; `Max` takes the best child; `Sum` credits whatever
/// completed. Tasks missing a QAF (flagged by validation) aggregate as
/// `SumAll`.
pub fn aggregate_quality(
    tree: &TaemsTree,
    leaf_qualities: &BTreeMap<NodeId, f64>,
) -> Result<f64, TaemsError> {
    fn eval(
        tree: &TaemsTree,
        id: &NodeId,
        leaf_qualities: &BTreeMap<NodeId, f64>,
    ) -> Result<f64, TaemsError> {
        let node = match tree.nodes.get(id) {
            Some(n) => n,
            None => return Ok(0.0),
        };
        if node.is_action() {
            return leaf_qualities
                .get(id)
                .copied()
                .ok_or_else(|| TaemsError::MissingLeafQuality(id.clone()));
        }
        let mut values = Vec::with_capacity(node.children.len());
        for child in &node.children {
            values.push(eval(tree, child, leaf_qualities)?);
        }
        let q = match node.qaf.unwrap_or(Qaf::SumAll) {
            Qaf::SumAll | Qaf::SeqSumAll => {
                if values.iter().any(|v| *v == 0.0) {
                    0.0
                } else {
                    values.iter().sum()
                }
            }
            Qaf::Max => values.iter().copied().fold(0.0, f64::max),
            Qaf::Sum => values.iter().sum(),
        };
        Ok(q)
    }
    eval(tree, &tree.root, leaf_qualities)
}

/// Applies a signed delta to a resource. The new state clamps to
/// `[lower, upper]`; a consume that would drop below `lower` is refused.
pub fn apply_resource_effect(res: &Resource, delta: f64) -> Result<Resource, Insufficient> {
    let next = res.state + delta;
    if next < res.lower - EPS {
        return Err(Insufficient);
    }
    Ok(Resource {
        state: next.clamp(res.lower, res.upper),
        ..res.clone()
    })
}

/// Whether a node counts as complete given the set of finished actions.
pub fn node_complete(tree: &TaemsTree, done: &BTreeSet<NodeId>, id: &NodeId) -> bool {
    let node = match tree.nodes.get(id) {
        Some(n) => n,
        None => return false,
    };
    if node.is_action() {
        return done.contains(id);
    }
    if node.children.is_empty() {
        return false;
    }
    match node.qaf.unwrap_or(Qaf::SumAll) {
        Qaf::SumAll | Qaf::SeqSumAll => node
            .children
            .iter()
            .all(|c| node_complete(tree, done, c)),
        Qaf::Max | Qaf::Sum => node
            .children
            .iter()
            .any(|c| node_complete(tree, done, c)),
    }
}

/// Actions that may start now for an agent holding the given resources.
///
/// An action qualifies when all of its enables sources are complete, every
/// earlier sibling under a `SeqSumAll` parent is done, every limiting
/// resource *present in `resources`* holds enough for the action's consume,
/// and no hard-ordering (disables) edge keeps it waiting. Resources owned by
/// other agents are simply absent from `resources` and do not constrain the
/// caller.
pub fn executable_actions(
    tree: &TaemsTree,
    done: &BTreeSet<NodeId>,
    in_progress: &BTreeSet<NodeId>,
    resources: &BTreeMap<String, Resource>,
) -> BTreeSet<NodeId> {
    debug_assert!(done.is_disjoint(in_progress));
    let parents = tree.parent_map();
    let mut out = BTreeSet::new();

    'actions: for node in tree.nodes.values() {
        if !node.is_action() || done.contains(&node.id) || in_progress.contains(&node.id) {
            continue;
        }

        // Enables sources must be complete; disables targets must be
        // complete before this node may run at all.
        for edge in &tree.interrelationships {
            match edge.kind {
                RelationKind::Enables if edge.target == node.id.0 => {
                    if !node_complete(tree, done, &NodeId::new(edge.source.clone())) {
                        continue 'actions;
                    }
                }
                RelationKind::Disables if edge.source == node.id.0 => {
                    if !node_complete(tree, done, &NodeId::new(edge.target.clone())) {
                        continue 'actions;
                    }
                }
                _ => {}
            }
        }

        // Strict sibling order under SeqSumAll parents.
        if let Some(parent_id) = parents.get(&node.id) {
            if let Some(parent) = tree.nodes.get(parent_id) {
                if parent.qaf == Some(Qaf::SeqSumAll) {
                    for sibling in &parent.children {
                        if sibling == &node.id {
                            break;
                        }
                        if !node_complete(tree, done, sibling) {
                            continue 'actions;
                        }
                    }
                }
            }
        }

        // Limiting resources held by the caller must cover the consume.
        for edge in tree.edges_of_kind(RelationKind::Limits) {
            if edge.target != node.id.0 {
                continue;
            }
            if let Some(res) = resources.get(&edge.source) {
                let need = edge
                    .amount
                    .or_else(|| consume_amount(tree, &node.id, &edge.source))
                    .unwrap_or(0.0);
                if res.state - need < res.lower - EPS {
                    continue 'actions;
                }
            }
        }

        out.insert(node.id.clone());
    }
    out
}

fn consume_amount(tree: &TaemsTree, action: &NodeId, resource: &str) -> Option<f64> {
    tree.edges_of_kind(RelationKind::Consumes)
        .find(|e| e.source == action.0 && e.target == resource)
        .and_then(|e| e.amount)
}

/// Deterministic topological rank of every action, used as the scheduling
/// priority.
///
/// The graph joins consecutive action children of `SeqSumAll` tasks with the
/// enables edges. Ranks come from a Kahn walk whose ready set is keyed by
/// (position within the owning chain, owning task id, node id), which makes
/// agents open later transports before finishing earlier ones whenever the
/// relations allow it.
pub fn topological_action_order(tree: &TaemsTree) -> BTreeMap<NodeId, usize> {
    let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut key: BTreeMap<NodeId, (usize, NodeId)> = BTreeMap::new();

    for node in tree.nodes.values() {
        if node.is_action() {
            indegree.entry(node.id.clone()).or_insert(0);
            key.entry(node.id.clone())
                .or_insert((0, tree.root.clone()));
        }
    }
    for node in tree.nodes.values() {
        if node.kind != NodeKind::Task {
            continue;
        }
        let seq = node.qaf == Some(Qaf::SeqSumAll);
        let mut prev: Option<&NodeId> = None;
        for (pos, child) in node.children.iter().enumerate() {
            if let Some(c) = tree.nodes.get(child) {
                if c.is_action() {
                    key.insert(child.clone(), (pos, node.id.clone()));
                    if seq {
                        if let Some(p) = prev {
                            succ.entry(p.clone()).or_default().push(child.clone());
                            *indegree.entry(child.clone()).or_insert(0) += 1;
                        }
                    }
                    prev = Some(child);
                }
            }
        }
    }
    for edge in tree.edges_of_kind(RelationKind::Enables) {
        let (s, t) = (NodeId::new(edge.source.clone()), NodeId::new(edge.target.clone()));
        let s_is_action = tree.nodes.get(&s).map(|n| n.is_action()).unwrap_or(false);
        let t_is_action = tree.nodes.get(&t).map(|n| n.is_action()).unwrap_or(false);
        if s_is_action && t_is_action {
            succ.entry(s).or_default().push(t.clone());
            *indegree.entry(t).or_insert(0) += 1;
        }
    }

    let mut ready: BTreeSet<(usize, NodeId, NodeId)> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| {
            let (pos, task) = key.get(id).cloned().unwrap_or((0, tree.root.clone()));
            (pos, task, id.clone())
        })
        .collect();

    let mut order = BTreeMap::new();
    let mut rank = 0usize;
    while let Some(entry) = ready.iter().next().cloned() {
        ready.remove(&entry);
        let (_, _, id) = entry;
        order.insert(id.clone(), rank);
        rank += 1;
        for next in succ.get(&id).cloned().unwrap_or_default() {
            let d = indegree.get_mut(&next).expect("known node");
            *d -= 1;
            if *d == 0 {
                let (pos, task) = key.get(&next).cloned().unwrap_or((0, tree.root.clone()));
                ready.insert((pos, task, next));
            }
        }
    }
    // Nodes on an enables cycle never become ready; give them a stable rank
    // after everything else so callers can still sort.
    for id in indegree.keys() {
        if !order.contains_key(id) {
            order.insert(id.clone(), rank);
            rank += 1;
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two bricks stacked on top of each other, transported by one agent:
    /// root(SumAll) over TB(B1.1) and TB(B2.1), each SeqSumAll over the
    /// go-pile / pick-up / go-wall / put-down chain, with picking up the
    /// bottom brick enabling the pile run for the top one.
    fn two_brick_tree() -> TaemsTree {
        let mut tree = TaemsTree::new(NodeId::new("Mission"));
        let bricks = ["B1.1", "B2.1"];
        let mut tb_ids = Vec::new();
        for b in bricks {
            let acts: Vec<NodeId> = ["GP", "PU", "GW", "PD"]
                .iter()
                .map(|v| NodeId::new(format!("{v}({b})")))
                .collect();
            for a in &acts {
                tree.insert_node(TaemsNode::action(a.as_str()));
            }
            let tb = TaemsNode::task(format!("TB({b})"), Qaf::SeqSumAll, acts);
            tb_ids.push(tb.id.clone());
            tree.insert_node(tb);
        }
        tree.insert_node(TaemsNode::task("Mission", Qaf::SumAll, tb_ids));
        tree.interrelationships.push(Interrelationship::enables(
            &NodeId::new("PU(B1.1)"),
            &NodeId::new("GP(B2.1)"),
        ));
        tree
    }

    /// Same mission extended with the agent's carry slot wired to both
    /// transports.
    fn two_brick_tree_with_resource() -> TaemsTree {
        let mut tree = two_brick_tree();
        let res = Resource::carry_slot("carry(uav1)", AgentId::new("uav1"));
        for b in ["B1.1", "B2.1"] {
            tree.interrelationships.push(Interrelationship {
                kind: RelationKind::Consumes,
                source: format!("GP({b})"),
                target: res.id.clone(),
                amount: Some(1.0),
            });
            tree.interrelationships.push(Interrelationship {
                kind: RelationKind::Limits,
                source: res.id.clone(),
                target: format!("GP({b})"),
                amount: Some(1.0),
            });
            tree.interrelationships.push(Interrelationship {
                kind: RelationKind::Produces,
                source: format!("PD({b})"),
                target: res.id.clone(),
                amount: Some(1.0),
            });
        }
        tree.resources.insert(res.id.clone(), res);
        tree
    }

    #[test]
    fn well_formed_tree_has_no_violations() {
        assert_eq!(validate_tree(&two_brick_tree()), vec![]);
        assert_eq!(validate_tree(&two_brick_tree_with_resource()), vec![]);
    }

    #[test]
    fn missing_child_reports_unresolved_reference() {
        let mut tree = two_brick_tree();
        tree.nodes
            .get_mut(&NodeId::new("Mission"))
            .unwrap()
            .children
            .push(NodeId::new("TB(B9.9)"));
        let violations = validate_tree(&tree);
        assert!(violations.iter().any(|v| matches!(
            v,
            Violation::UnresolvedReference { reference, .. } if reference == "TB(B9.9)"
        )));
    }

    #[test]
    fn enables_cycle_is_detected() {
        let mut tree = two_brick_tree();
        tree.interrelationships.push(Interrelationship::enables(
            &NodeId::new("GP(B2.1)"),
            &NodeId::new("PU(B1.1)"),
        ));
        let violations = validate_tree(&tree);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::CyclicEnables { .. })));
    }

    #[test]
    fn structural_faults_are_collected_exhaustively() {
        let mut tree = two_brick_tree();
        // Action with a child and a task sharing a child with the root.
        tree.nodes
            .get_mut(&NodeId::new("GP(B1.1)"))
            .unwrap()
            .children
            .push(NodeId::new("PU(B1.1)"));
        let violations = validate_tree(&tree);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::ActionWithChildren { .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::MultipleParents { .. })));
    }

    #[test]
    fn aggregate_sums_both_transports() {
        let tree = two_brick_tree();
        let mut leaves = BTreeMap::new();
        for b in ["B1.1", "B2.1"] {
            for v in ["GP", "PU", "GW"] {
                leaves.insert(NodeId::new(format!("{v}({b})")), 1e-12);
            }
            leaves.insert(NodeId::new(format!("PD({b})")), 1.0);
        }
        // Only the put-down carries the score; the tiny placeholder keeps
        // the AND semantics satisfied for the other actions.
        let quality = aggregate_quality(&tree, &leaves).unwrap();
        assert!((quality - 2.0).abs() < 1e-9);
    }

    #[test]
    fn max_takes_best_child_and_sum_all_zeroes() {
        let mut tree = TaemsTree::new(NodeId::new("T"));
        tree.insert_node(TaemsNode::action("a"));
        tree.insert_node(TaemsNode::action("b"));
        tree.insert_node(TaemsNode::task(
            "T",
            Qaf::Max,
            vec![NodeId::new("a"), NodeId::new("b")],
        ));
        let leaves: BTreeMap<NodeId, f64> =
            [(NodeId::new("a"), 0.3), (NodeId::new("b"), 0.9)].into();
        assert_eq!(aggregate_quality(&tree, &leaves).unwrap(), 0.9);

        tree.nodes.get_mut(&NodeId::new("T")).unwrap().qaf = Some(Qaf::SumAll);
        let leaves: BTreeMap<NodeId, f64> =
            [(NodeId::new("a"), 1.0), (NodeId::new("b"), 0.0)].into();
        assert_eq!(aggregate_quality(&tree, &leaves).unwrap(), 0.0);

        tree.nodes.get_mut(&NodeId::new("T")).unwrap().qaf = Some(Qaf::Sum);
        assert_eq!(aggregate_quality(&tree, &leaves).unwrap(), 1.0);
    }

    #[test]
    fn missing_leaf_quality_is_an_error() {
        let tree = two_brick_tree();
        let err = aggregate_quality(&tree, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TaemsError::MissingLeafQuality(_)));
    }

    #[test]
    fn resource_effects_clamp_and_refuse() {
        let res = Resource::carry_slot("carry", AgentId::new("uav1"));
        let consumed = apply_resource_effect(&res, -1.0).unwrap();
        assert_eq!(consumed.state, 0.0);
        assert_eq!(apply_resource_effect(&consumed, -1.0), Err(Insufficient));
        let produced = apply_resource_effect(&res, 1.0).unwrap();
        assert_eq!(produced.state, 1.1);
    }

    #[test]
    fn start_state_offers_only_first_pile_run() {
        let tree = two_brick_tree();
        let open = executable_actions(&tree, &BTreeSet::new(), &BTreeSet::new(), &BTreeMap::new());
        assert_eq!(open, BTreeSet::from([NodeId::new("GP(B1.1)")]));
    }

    #[test]
    fn consumed_carry_slot_blocks_second_pile_run() {
        let tree = two_brick_tree_with_resource();
        let done = BTreeSet::from([NodeId::new("GP(B1.1)"), NodeId::new("PU(B1.1)")]);
        let res = tree.resources.get("carry(uav1)").unwrap();
        let drained = apply_resource_effect(res, -1.0).unwrap();
        let held: BTreeMap<String, Resource> = [(drained.id.clone(), drained)].into();
        let open = executable_actions(&tree, &done, &BTreeSet::new(), &held);
        assert!(!open.contains(&NodeId::new("GP(B2.1)")));
        assert!(open.contains(&NodeId::new("GW(B1.1)")));
    }

    #[test]
    fn empty_tree_has_no_executable_actions() {
        let tree = TaemsTree::new(NodeId::new("root"));
        let open = executable_actions(&tree, &BTreeSet::new(), &BTreeSet::new(), &BTreeMap::new());
        assert!(open.is_empty());
    }

    /// Drives executable_actions greedily with a single agent, applying
    /// resource effects as transports begin and end.
    fn greedy_replay(tree: &TaemsTree) -> Vec<String> {
        let order = topological_action_order(tree);
        let mut done = BTreeSet::new();
        let mut held: BTreeMap<String, Resource> = tree.resources.clone();
        let mut sequence = Vec::new();
        loop {
            let open = executable_actions(tree, &done, &BTreeSet::new(), &held);
            let next = open.iter().min_by_key(|id| order.get(*id)).cloned();
            let Some(action) = next else { break };
            for edge in tree.edges_of_kind(RelationKind::Consumes) {
                if edge.source == action.0 {
                    if let Some(res) = held.get(&edge.target) {
                        let updated =
                            apply_resource_effect(res, -edge.amount.unwrap_or(1.0)).unwrap();
                        held.insert(edge.target.clone(), updated);
                    }
                }
            }
            for edge in tree.edges_of_kind(RelationKind::Produces) {
                if edge.source == action.0 {
                    if let Some(res) = held.get(&edge.target) {
                        let updated =
                            apply_resource_effect(res, edge.amount.unwrap_or(1.0)).unwrap();
                        held.insert(edge.target.clone(), updated);
                    }
                }
            }
            sequence.push(action.0.clone());
            done.insert(action);
        }
        sequence
    }

    #[test]
    fn without_carry_limit_the_transports_interleave() {
        let seq = greedy_replay(&two_brick_tree());
        assert_eq!(
            seq,
            vec![
                "GP(B1.1)", "PU(B1.1)", "GP(B2.1)", "PU(B2.1)", "GW(B1.1)", "GW(B2.1)",
                "PD(B1.1)", "PD(B2.1)",
            ]
        );
    }

    #[test]
    fn with_carry_limit_each_brick_completes_before_the_next() {
        let seq = greedy_replay(&two_brick_tree_with_resource());
        assert_eq!(
            seq,
            vec![
                "GP(B1.1)", "PU(B1.1)", "GW(B1.1)", "PD(B1.1)", "GP(B2.1)", "PU(B2.1)",
                "GW(B2.1)", "PD(B2.1)",
            ]
        );
    }

    #[test]
    fn tree_json_round_trips() {
        let tree = two_brick_tree_with_resource();
        let json = serde_json::to_string(&tree).unwrap();
        let parsed: TaemsTree = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, tree);
    }
}
