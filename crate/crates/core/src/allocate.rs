//! Redundancy resolution: normalized multi-criteria ratings, the
//! market-based allocation scheme, referee selection of a single winner,
//! and the branch-and-bound assignment of joint-transport subtasks.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::mission::Assessment;
use crate::taems::{AgentId, NodeId, Qaf, TaemsTree};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AllocError {
    #[error("no feasible agent for rating")]
    EmptyAgentSet,
    #[error("criteria weights must be non-negative and sum to 1")]
    BadWeights,
    #[error("delta must lie in [0.5, 1)")]
    BadDelta,
    #[error("task {0} has no feasible agent")]
    InfeasibleTask(NodeId),
    #[error("assignment needs at least as many agents ({m}) as subtasks ({n})")]
    InfeasibleDimensions { m: usize, n: usize },
    #[error("task {0} is not complexly redundant")]
    NotComplexlyRedundant(NodeId),
    #[error("joint task needs {needed} agents but only {available} are eligible")]
    TooFewAgents { needed: usize, available: usize },
}

/// Quality/duration/cost trade-off weights for ratings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RatingWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        RatingWeights { alpha, beta, gamma }
    }

    fn validate(&self) -> Result<(), AllocError> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && (self.alpha + self.beta + self.gamma - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(AllocError::BadWeights)
        }
    }
}

/// Normalized ratio for a "higher is better" criterion. When all agents tie,
/// everyone gets the full ratio: a shared constant keeps ratings in [0, 1]
/// and cannot move any argmax.
fn ratio_up(value: f64, min: f64, max: f64) -> f64 {
    if (max - min).abs() <= f64::EPSILON * max.abs().max(1.0) {
        1.0
    } else {
        (value - min) / (max - min)
    }
}

/// Normalized ratio for a "lower is better" criterion.
fn ratio_down(value: f64, min: f64, max: f64) -> f64 {
    if (max - min).abs() <= f64::EPSILON * max.abs().max(1.0) {
        1.0
    } else {
        (max - value) / (max - min)
    }
}

/// Weighted rating of each agent for one task from its quality, duration and
/// cost assessment. Quality counts up; duration and cost count down. Agents
/// with an infeasible assessment are dropped before the min/max spans are
/// taken so they cannot distort the normalization.
pub fn rate(
    assessments: &BTreeMap<AgentId, Assessment>,
    weights: &RatingWeights,
) -> Result<BTreeMap<AgentId, f64>, AllocError> {
    weights.validate()?;
    let feasible: BTreeMap<&AgentId, &Assessment> = assessments
        .iter()
        .filter(|(_, a)| a.is_feasible())
        .collect();
    if feasible.is_empty() {
        return Err(AllocError::EmptyAgentSet);
    }
    let fold = |f: fn(f64, f64) -> f64, pick: fn(&Assessment) -> f64, init: f64| {
        feasible.values().map(|a| pick(a)).fold(init, f)
    };
    let q_min = fold(f64::min, |a| a.quality, f64::INFINITY);
    let q_max = fold(f64::max, |a| a.quality, f64::NEG_INFINITY);
    let d_min = fold(f64::min, |a| a.duration, f64::INFINITY);
    let d_max = fold(f64::max, |a| a.duration, f64::NEG_INFINITY);
    let c_min = fold(f64::min, |a| a.cost, f64::INFINITY);
    let c_max = fold(f64::max, |a| a.cost, f64::NEG_INFINITY);

    Ok(feasible
        .into_iter()
        .map(|(agent, a)| {
            let r = weights.alpha * ratio_up(a.quality, q_min, q_max)
                + weights.beta * ratio_down(a.duration, d_min, d_max)
                + weights.gamma * ratio_down(a.cost, c_min, c_max);
            (agent.clone(), r)
        })
        .collect())
}

/// The market allocation: which agent each task went to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AllocationScheme {
    pub pairs: Vec<(NodeId, AgentId)>,
}

impl AllocationScheme {
    pub fn agent_for(&self, task: &NodeId) -> Option<&AgentId> {
        self.pairs.iter().find(|(t, _)| t == task).map(|(_, a)| a)
    }

    pub fn contains(&self, task: &NodeId, agent: &AgentId) -> bool {
        self.pairs.iter().any(|(t, a)| t == task && a == agent)
    }
}

/// When a successor transport may begin relative to its predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Release {
    /// Once the predecessor's brick leaves the pile (pick-up complete).
    AfterPickup,
    /// Once the predecessor's brick is placed (whole task complete).
    AfterCompletion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskPrecedence {
    pub pred: NodeId,
    pub succ: NodeId,
    pub release: Release,
}

/// A task offered on the market: its id and, per feasible agent, the
/// durations of its four-action chain.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketTask {
    pub id: NodeId,
    pub chain_durations: BTreeMap<AgentId, [f64; 4]>,
}

impl MarketTask {
    fn total(&self, agent: &AgentId) -> Option<f64> {
        self.chain_durations
            .get(agent)
            .map(|d| d.iter().sum())
    }

    fn release_offset(&self, agent: &AgentId, release: Release) -> Option<f64> {
        self.chain_durations.get(agent).map(|d| match release {
            Release::AfterPickup => d[0] + d[1],
            Release::AfterCompletion => d.iter().sum(),
        })
    }
}

/// Greedy sequential auction that minimizes tentative completion times.
///
/// A tentative timeline is kept per agent. Among the precedence-ready
/// unallocated tasks, the (task, agent) pair with the earliest tentative
/// completion wins, where a task may not start before its predecessors'
/// release instants. Ties break on lower task id, then lower agent id.
pub fn market_allocation(
    tasks: &[MarketTask],
    precedence: &[TaskPrecedence],
) -> Result<AllocationScheme, AllocError> {
    for task in tasks {
        if task.chain_durations.is_empty() {
            return Err(AllocError::InfeasibleTask(task.id.clone()));
        }
    }

    let mut avail: BTreeMap<AgentId, f64> = BTreeMap::new();
    for task in tasks {
        for agent in task.chain_durations.keys() {
            avail.entry(agent.clone()).or_insert(0.0);
        }
    }

    let by_id: BTreeMap<&NodeId, &MarketTask> = tasks.iter().map(|t| (&t.id, t)).collect();
    let mut unallocated: BTreeSet<&NodeId> = tasks.iter().map(|t| &t.id).collect();
    // Start instant and releases recorded as tasks are placed.
    let mut start_of: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut agent_of: BTreeMap<NodeId, AgentId> = BTreeMap::new();
    let mut scheme = AllocationScheme::default();

    while !unallocated.is_empty() {
        let mut best: Option<(f64, NodeId, AgentId, f64)> = None;
        for task_id in &unallocated {
            let preds: Vec<&TaskPrecedence> = precedence
                .iter()
                .filter(|p| &&p.succ == task_id)
                .collect();
            if preds.iter().any(|p| !start_of.contains_key(&p.pred)) {
                continue; // not precedence-ready yet
            }
            let mut ready = 0.0f64;
            let mut ok = true;
            for p in &preds {
                let pred_agent = agent_of.get(&p.pred).expect("allocated pred");
                let offset = by_id
                    .get(&p.pred)
                    .and_then(|t| t.release_offset(pred_agent, p.release));
                match offset {
                    Some(off) => ready = ready.max(start_of[&p.pred] + off),
                    None => ok = false,
                }
            }
            if !ok {
                continue;
            }
            let task = by_id[*task_id];
            for (agent, _) in &task.chain_durations {
                let duration = task.total(agent).expect("agent present");
                let start = avail[agent].max(ready);
                let completion = start + duration;
                let candidate = (completion, (*task_id).clone(), agent.clone(), start);
                let better = match &best {
                    None => true,
                    Some((c, t, a, _)) => {
                        (completion, &candidate.1, &candidate.2) < (*c, t, a)
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        let Some((completion, task_id, agent, start)) = best else {
            // Remaining tasks are blocked behind unallocatable predecessors.
            let blocked = unallocated.iter().next().expect("non-empty");
            return Err(AllocError::InfeasibleTask((*blocked).clone()));
        };
        avail.insert(agent.clone(), completion);
        start_of.insert(task_id.clone(), start);
        agent_of.insert(task_id.clone(), agent.clone());
        unallocated.remove(&task_id);
        scheme.pairs.push((task_id, agent));
    }
    Ok(scheme)
}

/// Combines the normalized rating with the market preference:
/// `delta * r1 + (1 - delta) * r2`, where `r2` marks the scheme's pick.
pub fn total_rating(
    ratings: &BTreeMap<AgentId, f64>,
    scheme: &AllocationScheme,
    task: &NodeId,
    delta: f64,
) -> Result<BTreeMap<AgentId, f64>, AllocError> {
    if !(0.5..1.0).contains(&delta) {
        return Err(AllocError::BadDelta);
    }
    Ok(total_rating_unchecked(ratings, scheme, task, delta))
}

/// The total-rating formula without the delta range check, for boundary
/// analysis.
pub fn total_rating_unchecked(
    ratings: &BTreeMap<AgentId, f64>,
    scheme: &AllocationScheme,
    task: &NodeId,
    delta: f64,
) -> BTreeMap<AgentId, f64> {
    let r_min = ratings.values().copied().fold(f64::INFINITY, f64::min);
    let r_max = ratings.values().copied().fold(f64::NEG_INFINITY, f64::max);
    ratings
        .iter()
        .map(|(agent, r)| {
            let r1 = ratio_up(*r, r_min, r_max);
            let r2 = if scheme.contains(task, agent) { 1.0 } else { 0.0 };
            (agent.clone(), delta * r1 + (1.0 - delta) * r2)
        })
        .collect()
}

/// Picks the winner of a simply redundant task: the argmax of the total
/// rating over the feasible agents, ties broken by lower agent id. Everyone
/// else drops the task.
pub fn resolve_simple(
    task: &NodeId,
    assessments: &BTreeMap<AgentId, Assessment>,
    scheme: &AllocationScheme,
    weights: &RatingWeights,
    delta: f64,
) -> Result<AgentId, AllocError> {
    let ratings = rate(assessments, weights)?;
    let totals = total_rating(&ratings, scheme, task, delta)?;
    argmax(&totals).ok_or(AllocError::EmptyAgentSet)
}

/// Highest value wins; ties go to the lexicographically lowest agent id.
fn argmax(totals: &BTreeMap<AgentId, f64>) -> Option<AgentId> {
    let mut best: Option<(&AgentId, f64)> = None;
    for (agent, value) in totals {
        let better = match best {
            None => true,
            Some((_, b)) => *value > b,
        };
        if better {
            best = Some((agent, *value));
        }
    }
    best.map(|(a, _)| a.clone())
}

/// Ratings of `m` agents competing for `n` subtasks, `m >= n`, entries
/// finite.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    pub agents: Vec<AgentId>,
    pub subtasks: Vec<NodeId>,
    /// `ratings[i][j]` is agent `i`'s rating for subtask `j`.
    pub ratings: Vec<Vec<f64>>,
}

impl AssignmentMatrix {
    pub fn new(
        agents: Vec<AgentId>,
        subtasks: Vec<NodeId>,
        ratings: Vec<Vec<f64>>,
    ) -> Result<Self, AllocError> {
        let (m, n) = (agents.len(), subtasks.len());
        if m < n {
            return Err(AllocError::InfeasibleDimensions { m, n });
        }
        debug_assert!(ratings.len() == m && ratings.iter().all(|row| row.len() == n));
        Ok(AssignmentMatrix {
            agents,
            subtasks,
            ratings,
        })
    }
}

/// Exact solver for the one-subtask-per-agent assignment: maximizes the
/// summed ratings subject to every subtask taking exactly one agent and
/// every agent taking at most one subtask.
///
/// Depth-first branch and bound. Subtasks are branched in order of
/// decreasing rating spread and agents tried in order of decreasing rating;
/// the bound adds each remaining subtask's best rating over the still-free
/// agents. Exploration order is deterministic and the incumbent is replaced
/// only on strict improvement, so the result is reproducible.
pub fn solve_gap(matrix: &AssignmentMatrix) -> Result<BTreeMap<NodeId, AgentId>, AllocError> {
    let m = matrix.agents.len();
    let n = matrix.subtasks.len();
    if m < n {
        return Err(AllocError::InfeasibleDimensions { m, n });
    }
    if n == 0 {
        return Ok(BTreeMap::new());
    }

    // Branch order: widest rating spread first, ties by subtask id.
    let mut columns: Vec<usize> = (0..n).collect();
    let spread = |j: usize| {
        let col: Vec<f64> = (0..m).map(|i| matrix.ratings[i][j]).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    };
    columns.sort_by(|&a, &b| {
        spread(b)
            .partial_cmp(&spread(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| matrix.subtasks[a].cmp(&matrix.subtasks[b]))
    });

    // Candidate agents per column, best rating first.
    let candidates: Vec<Vec<usize>> = columns
        .iter()
        .map(|&j| {
            let mut agents: Vec<usize> = (0..m).collect();
            agents.sort_by(|&a, &b| {
                matrix.ratings[b][j]
                    .partial_cmp(&matrix.ratings[a][j])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| matrix.agents[a].cmp(&matrix.agents[b]))
            });
            agents
        })
        .collect();

    struct Search<'a> {
        matrix: &'a AssignmentMatrix,
        columns: &'a [usize],
        candidates: &'a [Vec<usize>],
        used: Vec<bool>,
        current: Vec<usize>,
        best_value: f64,
        best: Vec<usize>,
    }

    impl Search<'_> {
        fn bound_rest(&self, depth: usize, acc: f64) -> f64 {
            let mut bound = acc;
            for d in depth..self.columns.len() {
                let j = self.columns[d];
                let mut col_max = f64::NEG_INFINITY;
                for i in 0..self.matrix.agents.len() {
                    if !self.used[i] {
                        col_max = col_max.max(self.matrix.ratings[i][j]);
                    }
                }
                bound += col_max;
            }
            bound
        }

        fn dfs(&mut self, depth: usize, acc: f64) {
            if depth == self.columns.len() {
                if acc > self.best_value {
                    self.best_value = acc;
                    self.best = self.current.clone();
                }
                return;
            }
            if self.bound_rest(depth, acc) <= self.best_value {
                return;
            }
            let j = self.columns[depth];
            for &i in &self.candidates[depth] {
                if self.used[i] {
                    continue;
                }
                self.used[i] = true;
                self.current.push(i);
                self.dfs(depth + 1, acc + self.matrix.ratings[i][j]);
                self.current.pop();
                self.used[i] = false;
            }
        }
    }

    let mut search = Search {
        matrix,
        columns: &columns,
        candidates: &candidates,
        used: vec![false; m],
        current: Vec::with_capacity(n),
        best_value: f64::NEG_INFINITY,
        best: Vec::new(),
    };
    search.dfs(0, 0.0);

    Ok(columns
        .iter()
        .zip(&search.best)
        .map(|(&j, &i)| (matrix.subtasks[j].clone(), matrix.agents[i].clone()))
        .collect())
}

/// Resolves a complexly redundant task: builds the rating matrix of the
/// eligible agents over the member subtasks and assigns one agent per
/// subtask via [`solve_gap`]. Each assigned agent schedules only its own
/// subtask.
pub fn resolve_complex(
    tree: &TaemsTree,
    task: &NodeId,
    assessments: &BTreeMap<NodeId, BTreeMap<AgentId, Assessment>>,
    weights: &RatingWeights,
) -> Result<BTreeMap<NodeId, AgentId>, AllocError> {
    let node = tree
        .node(task)
        .ok_or_else(|| AllocError::NotComplexlyRedundant(task.clone()))?;
    if node.local_qaf != Some(Qaf::Max) {
        return Err(AllocError::NotComplexlyRedundant(task.clone()));
    }
    let subtasks = node.children.clone();

    let mut ratings_per_subtask: Vec<BTreeMap<AgentId, f64>> = Vec::new();
    let mut agents: BTreeSet<AgentId> = BTreeSet::new();
    for subtask in &subtasks {
        let per_agent = assessments
            .get(subtask)
            .ok_or_else(|| AllocError::InfeasibleTask(subtask.clone()))?;
        let rating = rate(per_agent, weights)?;
        for agent in rating.keys() {
            agents.insert(agent.clone());
        }
        ratings_per_subtask.push(rating);
    }
    let agents: Vec<AgentId> = agents.into_iter().collect();
    if agents.len() < subtasks.len() {
        return Err(AllocError::TooFewAgents {
            needed: subtasks.len(),
            available: agents.len(),
        });
    }

    // Agents infeasible on some subtask take a strongly negative rating so
    // the maximization never picks them for that column.
    let ratings: Vec<Vec<f64>> = agents
        .iter()
        .map(|agent| {
            ratings_per_subtask
                .iter()
                .map(|r| r.get(agent).copied().unwrap_or(-1e3))
                .collect()
        })
        .collect();
    let matrix = AssignmentMatrix::new(agents, subtasks, ratings)?;
    solve_gap(&matrix)
}
