//! Semantic scene graphs: incremental construction from observations, goal
//! specifications, the goal-matching score, anchor alignment and target
//! verification with label correction.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rigid_align_2d, Transform2D};
use crate::world::{Observation, RobotPose};

pub const DEFAULT_D_NEAR: f64 = 1.5;
pub const DEFAULT_D_MERGE: f64 = 0.5;
pub const DEFAULT_R_VERIFY: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed goal spec: {0}")]
    MalformedGoalSpec(String),
    #[error("goal graph has no nodes")]
    EmptyGoalGraph,
    #[error("no correspondences available for alignment")]
    NoCorrespondences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: u32,
    pub category: String,
    pub attributes: BTreeSet<String>,
    /// Always present for scene nodes; optional prior for goal nodes.
    pub position: Option<[f64; 2]>,
    pub last_seen: u64,
    pub negative_labels: BTreeSet<String>,
    #[serde(default)]
    pub observations: u32,
    #[serde(skip)]
    last_measurement: Option<[f64; 2]>,
}

impl GraphNode {
    pub fn new(id: u32, category: &str, attributes: &[&str], position: Option<[f64; 2]>) -> Self {
        Self {
            id,
            category: category.to_string(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
            position,
            last_seen: 0,
            negative_labels: BTreeSet::new(),
            observations: u32::from(position.is_some()),
            last_measurement: None,
        }
    }

    fn pos(&self) -> Option<Vector2<f64>> {
        self.position.map(|p| Vector2::new(p[0], p[1]))
    }
}

/// Does goal node `g` accept scene node `s`?
pub fn node_matches(g: &GraphNode, s: &GraphNode) -> bool {
    g.category == s.category
        && !s.negative_labels.contains(&g.category)
        && g.attributes.is_subset(&s.attributes)
        && g.attributes.is_disjoint(&s.negative_labels)
}

/// A labeled graph with "near" relations.
///
/// Scene graphs (`d_near = Some(..)`) derive their edges from node distances
/// and keep them consistent on every mutation. Goal graphs (`d_near = None`)
/// carry the edges they were declared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph {
    nodes: Vec<GraphNode>,
    edges: BTreeSet<(u32, u32)>,
    d_near: Option<f64>,
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SemanticGraph {
    pub fn new_scene(d_near: f64) -> Self {
        Self {
            nodes: Vec::new(),
            edges: BTreeSet::new(),
            d_near: Some(d_near),
        }
    }

    /// Scene graph from explicit nodes; edges follow from positions.
    pub fn scene_from_nodes(nodes: Vec<GraphNode>, d_near: f64) -> Self {
        let mut g = Self::new_scene(d_near);
        for n in nodes {
            g.nodes.push(n);
        }
        g.nodes.sort_by_key(|n| n.id);
        g.rebuild_edges();
        g
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Option<&GraphNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn edges(&self) -> &BTreeSet<(u32, u32)> {
        &self.edges
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&edge_key(a, b))
    }

    pub fn d_near(&self) -> Option<f64> {
        self.d_near
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index_of(&self, id: u32) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    fn next_id(&self) -> u32 {
        self.nodes.last().map_or(0, |n| n.id + 1)
    }

    fn rebuild_edges(&mut self) {
        self.edges.clear();
        let touched: Vec<u32> = self.nodes.iter().map(|n| n.id).collect();
        self.refresh_edges(&touched);
    }

    fn refresh_edges(&mut self, touched: &[u32]) {
        let Some(d_near) = self.d_near else {
            return;
        };
        for &id in touched {
            self.edges.retain(|&(a, b)| a != id && b != id);
            let Some(p) = self.node(id).and_then(GraphNode::pos) else {
                continue;
            };
            for other in &self.nodes {
                if other.id == id {
                    continue;
                }
                if let Some(q) = other.pos() {
                    if (p - q).norm() < d_near {
                        self.edges.insert(edge_key(id, other.id));
                    }
                }
            }
        }
    }

    /// Adds the contradicted label to a node's negative labels.
    pub fn add_negative_label(&mut self, id: u32, label: &str) -> bool {
        match self.index_of(id) {
            Some(i) => self.nodes[i].negative_labels.insert(label.to_string()),
            None => false,
        }
    }

    /// Merges an observation into a copy of the graph.
    ///
    /// Each visible object updates the nearest node of the same category
    /// within `d_merge` (running-mean position) or creates a new node.
    /// Repeating an identical observation at the same step is a no-op.
    pub fn integrate_observation(&self, obs: &Observation, step: u64, d_merge: f64) -> Self {
        let mut g = self.clone();
        let mut touched = Vec::new();
        for o in &obs.visible_objects {
            let p = Vector2::new(o.position[0], o.position[1]);
            let nearest = g
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.category == o.category)
                .filter_map(|(i, n)| n.pos().map(|q| (i, (q - p).norm())))
                .filter(|(_, d)| *d <= d_merge)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match nearest {
                Some((i, _)) => {
                    let n = &mut g.nodes[i];
                    if n.last_seen == step && n.last_measurement == Some(o.position) {
                        continue;
                    }
                    let q = n.pos().expect("scene nodes carry positions");
                    n.observations += 1;
                    let mean = q + (p - q) / n.observations as f64;
                    n.position = Some([mean.x, mean.y]);
                    n.attributes.extend(o.attributes.iter().cloned());
                    n.last_seen = step;
                    n.last_measurement = Some(o.position);
                    touched.push(n.id);
                }
                None => {
                    let id = g.next_id();
                    g.nodes.push(GraphNode {
                        id,
                        category: o.category.clone(),
                        attributes: o.attributes.clone(),
                        position: Some(o.position),
                        last_seen: step,
                        negative_labels: BTreeSet::new(),
                        observations: 1,
                        last_measurement: Some(o.position),
                    });
                    touched.push(id);
                }
            }
        }
        g.refresh_edges(&touched);
        g
    }
}

/// Goal specification file: `{nodes:[{id,category,attributes[],position?,target?}], edges:[[id,id]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub nodes: Vec<GoalNodeSpec>,
    #[serde(default)]
    pub edges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalNodeSpec {
    pub id: u32,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub target: bool,
}

/// A parsed goal graph with its designated target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub graph: SemanticGraph,
    pub target: u32,
}

impl Goal {
    pub fn target_node(&self) -> &GraphNode {
        self.graph
            .node(self.target)
            .expect("target validated at parse time")
    }
}

fn normalize_token(s: &str) -> String {
    s.trim().to_lowercase()
}

impl GoalSpec {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::MalformedGoalSpec(e.to_string()))
    }

    pub fn to_goal(&self) -> Result<Goal, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::MalformedGoalSpec("goal has no nodes".into()));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut ids = BTreeSet::new();
        let mut targets = Vec::new();
        for n in &self.nodes {
            let category = n
                .category
                .as_deref()
                .map(normalize_token)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| {
                    GraphError::MalformedGoalSpec(format!("node {} has no category", n.id))
                })?;
            if !ids.insert(n.id) {
                return Err(GraphError::MalformedGoalSpec(format!(
                    "duplicate node id {}",
                    n.id
                )));
            }
            if let Some(p) = n.position {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(GraphError::MalformedGoalSpec(format!(
                        "node {} has a non-finite position",
                        n.id
                    )));
                }
            }
            if n.target {
                targets.push(n.id);
            }
            nodes.push(GraphNode {
                id: n.id,
                category,
                attributes: n
                    .attributes
                    .iter()
                    .map(|a| normalize_token(a))
                    .filter(|a| !a.is_empty())
                    .collect(),
                position: n.position,
                last_seen: 0,
                negative_labels: BTreeSet::new(),
                observations: 0,
                last_measurement: None,
            });
        }
        let target = match targets.as_slice() {
            [t] => *t,
            [] => {
                return Err(GraphError::MalformedGoalSpec(
                    "no node flagged target".into(),
                ))
            }
            _ => {
                return Err(GraphError::MalformedGoalSpec(
                    "more than one node flagged target".into(),
                ))
            }
        };
        let mut edges = BTreeSet::new();
        for [a, b] in &self.edges {
            if a == b || !ids.contains(a) || !ids.contains(b) {
                return Err(GraphError::MalformedGoalSpec(format!(
                    "edge [{a}, {b}] does not join two distinct known nodes"
                )));
            }
            edges.insert(edge_key(*a, *b));
        }
        nodes.sort_by_key(|n| n.id);
        Ok(Goal {
            graph: SemanticGraph {
                nodes,
                edges,
                d_near: None,
            },
            target,
        })
    }
}

pub fn parse_goal(text: &str) -> Result<Goal, GraphError> {
    GoalSpec::from_json(text)?.to_goal()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub score: f64,
    /// `(goal node id, scene node id)` pairs, ordered by goal id.
    pub node_assignment: Vec<(u32, u32)>,
    pub matched_edges: usize,
}

impl MatchResult {
    pub fn scene_node_for(&self, goal_id: u32) -> Option<u32> {
        self.node_assignment
            .iter()
            .find(|(g, _)| *g == goal_id)
            .map(|(_, s)| *s)
    }
}

/// Blend of node and edge coverage: `0.5 n/|V| + 0.5 e/|E|`, or `n/|V|`
/// for edgeless goals.
pub fn blended_score(
    matched_nodes: usize,
    matched_edges: usize,
    n_nodes: usize,
    n_edges: usize,
) -> f64 {
    let nq = matched_nodes as f64 / n_nodes as f64;
    if n_edges == 0 {
        nq
    } else {
        0.5 * nq + 0.5 * matched_edges as f64 / n_edges as f64
    }
}

struct MatchProblem<'a> {
    scene: &'a SemanticGraph,
    candidates: Vec<Vec<usize>>,
    /// goal edges as goal-node index pairs with `a < b`
    edges: Vec<(usize, usize)>,
    n_goal: usize,
}

impl MatchProblem<'_> {
    /// Integer objective proportional to the blended score.
    fn key(&self, nodes: usize, edges: usize) -> usize {
        if self.edges.is_empty() {
            nodes
        } else {
            nodes * self.edges.len() + edges * self.n_goal
        }
    }

    /// Maximum matching of goal nodes `from..` into unused scene nodes.
    fn max_matching(&self, from: usize, used: &[bool]) -> (usize, Vec<Option<usize>>) {
        let mut owner: Vec<Option<usize>> = vec![None; used.len()];
        let mut assign = vec![None; self.n_goal];
        let mut count = 0;
        for g in from..self.n_goal {
            let mut seen = vec![false; used.len()];
            if self.augment(g, used, &mut seen, &mut owner, &mut assign) {
                count += 1;
            }
        }
        (count, assign)
    }

    fn augment(
        &self,
        g: usize,
        used: &[bool],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
        assign: &mut [Option<usize>],
    ) -> bool {
        for &s in &self.candidates[g] {
            if used[s] || seen[s] {
                continue;
            }
            seen[s] = true;
            let free = match owner[s] {
                None => true,
                Some(other) => self.augment(other, used, seen, owner, assign),
            };
            if free {
                owner[s] = Some(g);
                assign[g] = Some(s);
                return true;
            }
        }
        false
    }

    fn satisfied_edges(&self, assign: &[Option<usize>]) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| match (assign[*a], assign[*b]) {
                (Some(x), Some(y)) => self
                    .scene
                    .has_edge(self.scene.nodes[x].id, self.scene.nodes[y].id),
                _ => false,
            })
            .count()
    }
}

struct Search<'a> {
    problem: MatchProblem<'a>,
    assign: Vec<Option<usize>>,
    used: Vec<bool>,
    best_key: Option<usize>,
    best: Vec<Option<usize>>,
}

impl Search<'_> {
    fn run(&mut self, i: usize, nodes: usize, edges: usize) {
        let p = &self.problem;
        if i == p.n_goal {
            let key = p.key(nodes, edges);
            if self.best_key.is_none_or(|b| key > b) {
                self.best_key = Some(key);
                self.best = self.assign.clone();
            }
            return;
        }
        if let Some(best) = self.best_key {
            let (node_ub, _) = p.max_matching(i, &self.used);
            let edge_ub = edges
                + p.edges
                    .iter()
                    .filter(|(a, b)| *b >= i && (*a >= i || self.assign[*a].is_some()))
                    .count();
            if p.key(nodes + node_ub, edge_ub) <= best {
                return;
            }
        }
        for k in 0..self.problem.candidates[i].len() {
            let s = self.problem.candidates[i][k];
            if self.used[s] {
                continue;
            }
            let scene_id = self.problem.scene.nodes[s].id;
            let gained = self
                .problem
                .edges
                .iter()
                .filter(|(a, b)| *b == i && self.assign[*a].is_some())
                .filter(|(a, _)| {
                    let other = self.assign[*a].expect("checked above");
                    self.problem
                        .scene
                        .has_edge(self.problem.scene.nodes[other].id, scene_id)
                })
                .count();
            self.used[s] = true;
            self.assign[i] = Some(s);
            self.run(i + 1, nodes + 1, edges + gained);
            self.assign[i] = None;
            self.used[s] = false;
        }
        self.run(i + 1, nodes, edges);
    }
}

/// Matching score between a scene graph and a goal graph.
///
/// The assignment is the injective, label-respecting map of goal nodes onto
/// scene nodes that maximizes the blended node/edge score. Edgeless goals
/// reduce to maximum bipartite matching via augmenting paths; goals with
/// relations use branch-and-bound with the augmenting-path matching as the
/// node bound.
pub fn match_score(scene: &SemanticGraph, goal: &SemanticGraph) -> Result<MatchResult, GraphError> {
    let n_goal = goal.nodes.len();
    if n_goal == 0 {
        return Err(GraphError::EmptyGoalGraph);
    }
    let candidates: Vec<Vec<usize>> = goal
        .nodes
        .iter()
        .map(|g| {
            scene
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, s)| node_matches(g, s))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let gidx: BTreeMap<u32, usize> = goal
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    let edges: Vec<(usize, usize)> = goal
        .edges
        .iter()
        .map(|(a, b)| {
            let (x, y) = (gidx[a], gidx[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    let problem = MatchProblem {
        scene,
        candidates,
        edges,
        n_goal,
    };

    let assign = if problem.edges.is_empty() {
        problem.max_matching(0, &vec![false; scene.nodes.len()]).1
    } else {
        let mut search = Search {
            assign: vec![None; n_goal],
            used: vec![false; scene.nodes.len()],
            best_key: None,
            best: vec![None; n_goal],
            problem,
        };
        search.run(0, 0, 0);
        let best = search.best;
        return Ok(finish(scene, goal, &search.problem, best));
    };
    Ok(finish(scene, goal, &problem, assign))
}

fn finish(
    scene: &SemanticGraph,
    goal: &SemanticGraph,
    problem: &MatchProblem<'_>,
    assign: Vec<Option<usize>>,
) -> MatchResult {
    let matched_edges = problem.satisfied_edges(&assign);
    let node_assignment: Vec<(u32, u32)> = assign
        .iter()
        .enumerate()
        .filter_map(|(g, s)| s.map(|s| (goal.nodes[g].id, scene.nodes[s].id)))
        .collect();
    MatchResult {
        score: blended_score(
            node_assignment.len(),
            matched_edges,
            goal.nodes.len(),
            goal.edges.len(),
        ),
        node_assignment,
        matched_edges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoal {
    pub goal_node: u32,
    pub category: String,
    pub attributes: BTreeSet<String>,
    /// Ids of goal nodes joined to this one by a "near" relation.
    pub relations: Vec<u32>,
}

/// One sub-goal per goal node; the target first, then ascending node id.
pub fn decompose_goal(goal: &Goal) -> Vec<SubGoal> {
    let sub = |n: &GraphNode| SubGoal {
        goal_node: n.id,
        category: n.category.clone(),
        attributes: n.attributes.clone(),
        relations: goal
            .graph
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == n.id {
                    Some(b)
                } else if b == n.id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect(),
    };
    let mut out = vec![sub(goal.target_node())];
    out.extend(
        goal.graph
            .nodes
            .iter()
            .filter(|n| n.id != goal.target)
            .map(sub),
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub transform: Transform2D,
    pub projected_target: [f64; 2],
    pub rmse: f64,
}

/// Aligns the goal graph's prior layout onto the matched scene anchors and
/// projects the target into the scene frame. A directly matched target is
/// used as-is.
pub fn align(scene: &SemanticGraph, goal: &Goal, m: &MatchResult) -> Result<Alignment, GraphError> {
    if m.node_assignment.is_empty() {
        return Err(GraphError::NoCorrespondences);
    }
    let pairs: Vec<(Vector2<f64>, Vector2<f64>)> = m
        .node_assignment
        .iter()
        .filter_map(|(g, s)| {
            let gp = goal.graph.node(*g)?.pos()?;
            let sp = scene.node(*s)?.pos()?;
            Some((gp, sp))
        })
        .collect();
    let fit = if pairs.is_empty() {
        None
    } else {
        Some(rigid_align_2d(&pairs).expect("non-empty pairs"))
    };
    let (transform, rmse) = fit.unwrap_or((Transform2D::identity(), 0.0));

    if let Some(anchor) = m
        .scene_node_for(goal.target)
        .and_then(|s| scene.node(s))
        .and_then(|n| n.position)
    {
        return Ok(Alignment {
            transform,
            projected_target: anchor,
            rmse,
        });
    }
    match (fit, goal.target_node().pos()) {
        (Some(_), Some(tp)) => {
            let p = transform.apply(&tp);
            Ok(Alignment {
                transform,
                projected_target: [p.x, p.y],
                rmse,
            })
        }
        _ => Err(GraphError::NoCorrespondences),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub r_verify: f64,
    /// A target seen at most this many steps ago and within `r_verify`
    /// still counts as verified. Zero requires a sighting in the current
    /// observation.
    pub staleness: u64,
    pub d_merge: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            r_verify: DEFAULT_R_VERIFY,
            staleness: 0,
            d_merge: DEFAULT_D_MERGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyOutcome {
    Verified,
    Corrected(SemanticGraph),
    Unverifiable,
}

/// Checks the matched target against the current observation.
///
/// The observed object nearest to the target node (within `d_merge`) is
/// compared with the goal's target labels. A contradicting category or a
/// missing required attribute is recorded in the node's negative labels so
/// that it no longer matches.
pub fn verify_and_correct(
    scene: &SemanticGraph,
    goal: &Goal,
    m: &MatchResult,
    obs: &Observation,
    pose: &RobotPose,
    step: u64,
    params: &VerifyParams,
) -> VerifyOutcome {
    let Some(node) = m.scene_node_for(goal.target).and_then(|s| scene.node(s)) else {
        return VerifyOutcome::Unverifiable;
    };
    let Some(np) = node.pos() else {
        return VerifyOutcome::Unverifiable;
    };
    let nearby: Vec<_> = obs
        .visible_objects
        .iter()
        .map(|o| (o, (Vector2::new(o.position[0], o.position[1]) - np).norm()))
        .filter(|(_, d)| *d <= params.d_merge)
        .collect();
    let same_category = nearby
        .iter()
        .filter(|(o, _)| o.category == node.category)
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let target = goal.target_node();

    match same_category {
        Some((o, _)) => {
            let missing: Vec<&String> = target.attributes.difference(&o.attributes).collect();
            if missing.is_empty() {
                VerifyOutcome::Verified
            } else {
                let mut g = scene.clone();
                for a in missing {
                    g.add_negative_label(node.id, a);
                }
                VerifyOutcome::Corrected(g)
            }
        }
        None if !nearby.is_empty() => {
            let mut g = scene.clone();
            g.add_negative_label(node.id, &node.category);
            VerifyOutcome::Corrected(g)
        }
        None => {
            let recent =
                params.staleness > 0 && step.saturating_sub(node.last_seen) <= params.staleness;
            if recent && (np - pose.position()).norm() <= params.r_verify {
                VerifyOutcome::Verified
            } else {
                VerifyOutcome::Unverifiable
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObservedObject;

    fn obj(id: u32, cat: &str, attrs: &[&str], p: [f64; 2]) -> ObservedObject {
        ObservedObject {
            id,
            category: cat.into(),
            attributes: attrs.iter().map(|a| a.to_string()).collect(),
            position: p,
        }
    }

    fn obs(objs: Vec<ObservedObject>) -> Observation {
        Observation {
            visible_objects: objs,
            ..Default::default()
        }
    }

    const CHAIR_GOAL: &str =
        r#"{"nodes":[{"id":0,"category":"chair","attributes":["black"],"target":true}]}"#;
    const CHAIR_TABLE_GOAL: &str = r#"{"nodes":[{"id":0,"category":"chair","target":true},{"id":1,"category":"table"}],"edges":[[0,1]]}"#;

    #[test]
    fn integrate_creates_and_merges() {
        let g = SemanticGraph::new_scene(DEFAULT_D_NEAR);
        let o = obs(vec![obj(1, "chair", &["black"], [1.0, 1.0])]);
        let g1 = g.integrate_observation(&o, 0, DEFAULT_D_MERGE);
        assert_eq!(g1.nodes().len(), 1);
        assert!(g1.edges().is_empty());
        let g2 = g1.integrate_observation(&o, 1, DEFAULT_D_MERGE);
        assert_eq!(g2.nodes().len(), 1);
        assert_eq!(g2.nodes()[0].last_seen, 1);
        assert_eq!(g2.nodes()[0].position, Some([1.0, 1.0]));
    }

    #[test]
    fn integrate_running_mean() {
        let g = SemanticGraph::new_scene(DEFAULT_D_NEAR)
            .integrate_observation(&obs(vec![obj(1, "chair", &[], [1.0, 1.0])]), 0, 0.5)
            .integrate_observation(&obs(vec![obj(1, "chair", &[], [1.2, 1.0])]), 1, 0.5)
            .integrate_observation(&obs(vec![obj(1, "chair", &[], [1.4, 1.0])]), 2, 0.5);
        let p = g.nodes()[0].position.unwrap();
        assert!((p[0] - 1.2).abs() < 1e-12 && p[1] == 1.0);
    }

    #[test]
    fn near_edge_follows_distance() {
        let o = obs(vec![
            obj(1, "chair", &[], [1.0, 1.0]),
            obj(2, "table", &[], [2.0, 1.0]),
            obj(3, "plant", &[], [4.0, 1.0]),
        ]);
        let g = SemanticGraph::new_scene(1.5).integrate_observation(&o, 0, 0.5);
        assert_eq!(g.nodes().len(), 3);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(1, 2));
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn integrate_is_idempotent_within_a_step() {
        let o = obs(vec![
            obj(1, "chair", &[], [1.0, 1.0]),
            obj(2, "table", &[], [2.0, 1.0]),
        ]);
        let g1 = SemanticGraph::new_scene(1.5)
            .integrate_observation(&obs(vec![obj(1, "chair", &[], [1.1, 1.0])]), 0, 0.5)
            .integrate_observation(&o, 3, 0.5);
        let g2 = g1.integrate_observation(&o, 3, 0.5);
        assert_eq!(g1, g2);
    }

    #[test]
    fn parse_goal_cases() {
        let goal = parse_goal(CHAIR_GOAL).unwrap();
        assert_eq!(goal.graph.nodes().len(), 1);
        assert_eq!(goal.target, 0);
        assert!(goal.target_node().attributes.contains("black"));

        let goal = parse_goal(CHAIR_TABLE_GOAL).unwrap();
        assert_eq!(goal.graph.nodes().len(), 2);
        assert_eq!(goal.graph.edges().len(), 1);

        let upper = parse_goal(
            r#"{"nodes":[{"id":0,"category":" Chair ","attributes":["BLACK"],"target":true}]}"#,
        )
        .unwrap();
        assert_eq!(upper.target_node().category, "chair");
        assert!(upper.target_node().attributes.contains("black"));
    }

    #[test]
    fn parse_goal_errors() {
        for bad in [
            r#"{"nodes":[{"id":0,"target":true}]}"#,
            r#"{"nodes":[{"id":0,"category":"chair"}]}"#,
            r#"{"nodes":[{"id":0,"category":"chair","target":true},{"id":1,"category":"bin","target":true}]}"#,
            r#"{"nodes":[{"id":0,"category":"chair","target":true}],"edges":[[0,5]]}"#,
            r#"{"nodes":[{"id":0,"category":"chair","target":true}],"extra":1}"#,
            r#"{"nodes":[]}"#,
            "not json",
        ] {
            assert!(
                matches!(parse_goal(bad), Err(GraphError::MalformedGoalSpec(_))),
                "accepted {bad}"
            );
        }
    }

    #[test]
    fn match_score_cases() {
        let goal = parse_goal(CHAIR_TABLE_GOAL).unwrap();
        let empty = SemanticGraph::new_scene(1.5);
        assert_eq!(match_score(&empty, &goal.graph).unwrap().score, 0.0);

        let one = empty.integrate_observation(&obs(vec![obj(1, "chair", &[], [1.0, 1.0])]), 0, 0.5);
        let m = match_score(&one, &goal.graph).unwrap();
        assert_eq!(m.score, 0.25);

        let both = one.integrate_observation(&obs(vec![obj(2, "table", &[], [1.5, 1.0])]), 1, 0.5);
        let m = match_score(&both, &goal.graph).unwrap();
        assert_eq!(m.score, 1.0);
        assert_eq!(m.matched_edges, 1);
        assert_eq!(m.node_assignment, vec![(0, 0), (1, 1)]);

        let far = one.integrate_observation(&obs(vec![obj(2, "table", &[], [4.0, 1.0])]), 1, 0.5);
        assert_eq!(match_score(&far, &goal.graph).unwrap().score, 0.5);
    }

    #[test]
    fn match_prefers_edges_over_extra_nodes() {
        // A(chair)-B(table) plus C(black chair). Matching all three nodes
        // forces the black chair onto C and loses the edge.
        let goal = parse_goal(
            r#"{"nodes":[{"id":0,"category":"chair","target":true},{"id":1,"category":"table"},
               {"id":2,"category":"chair","attributes":["black"]}],"edges":[[0,1]]}"#,
        )
        .unwrap();
        let scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![
                obj(1, "chair", &["black"], [1.0, 1.0]),
                obj(2, "table", &[], [1.5, 1.0]),
                obj(3, "chair", &[], [5.0, 5.0]),
            ]),
            0,
            0.5,
        );
        let m = match_score(&scene, &goal.graph).unwrap();
        let all_nodes = blended_score(3, 0, 3, 1);
        assert!(m.score > all_nodes);
        assert_eq!(m.matched_edges, 1);
    }

    #[test]
    fn match_respects_negative_labels() {
        let goal = parse_goal(CHAIR_GOAL).unwrap();
        let mut scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![obj(1, "chair", &["black"], [1.0, 1.0])]),
            0,
            0.5,
        );
        assert_eq!(match_score(&scene, &goal.graph).unwrap().score, 1.0);
        scene.add_negative_label(0, "black");
        assert_eq!(match_score(&scene, &goal.graph).unwrap().score, 0.0);
    }

    #[test]
    fn empty_goal_is_an_error() {
        let g = SemanticGraph::new_scene(1.5);
        assert_eq!(match_score(&g, &g), Err(GraphError::EmptyGoalGraph));
    }

    #[test]
    fn decompose_orders_target_first() {
        let goal = parse_goal(
            r#"{"nodes":[{"id":0,"category":"table"},{"id":1,"category":"chair","target":true},
               {"id":2,"category":"plant"}],"edges":[[0,1],[1,2]]}"#,
        )
        .unwrap();
        let subs = decompose_goal(&goal);
        assert_eq!(
            subs.iter().map(|s| s.goal_node).collect::<Vec<_>>(),
            vec![1, 0, 2]
        );
        assert_eq!(subs[0].relations, vec![0, 2]);
        assert_eq!(subs[1].relations, vec![1]);
        assert_eq!(decompose_goal(&parse_goal(CHAIR_GOAL).unwrap()).len(), 1);
    }

    #[test]
    fn align_anchor_and_translation() {
        let goal = parse_goal(CHAIR_GOAL).unwrap();
        let scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![obj(1, "chair", &["black"], [3.0, 2.0])]),
            0,
            0.5,
        );
        let m = match_score(&scene, &goal.graph).unwrap();
        assert_eq!(
            align(&scene, &goal, &m).unwrap().projected_target,
            [3.0, 2.0]
        );

        let unmatched = MatchResult {
            score: 0.0,
            node_assignment: vec![],
            matched_edges: 0,
        };
        assert_eq!(
            align(&scene, &goal, &unmatched),
            Err(GraphError::NoCorrespondences)
        );
    }

    #[test]
    fn align_projects_unmatched_target() {
        let goal = parse_goal(
            r#"{"nodes":[{"id":0,"category":"chair","position":[0,0],"target":true},
                {"id":1,"category":"table","position":[1,0]},
                {"id":2,"category":"plant","position":[0,1]},
                {"id":3,"category":"bin","position":[1,1]}]}"#,
        )
        .unwrap();
        let scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![
                obj(1, "table", &[], [3.0, 1.0]),
                obj(2, "plant", &[], [2.0, 2.0]),
                obj(3, "bin", &[], [3.0, 2.0]),
            ]),
            0,
            0.5,
        );
        let m = match_score(&scene, &goal.graph).unwrap();
        let a = align(&scene, &goal, &m).unwrap();
        assert!((a.projected_target[0] - 2.0).abs() < 1e-9);
        assert!((a.projected_target[1] - 1.0).abs() < 1e-9);
        assert!(a.rmse < 1e-9);
    }

    #[test]
    fn verify_outcomes() {
        let goal = parse_goal(CHAIR_GOAL).unwrap();
        let scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![obj(1, "chair", &["black"], [1.0, 0.0])]),
            0,
            0.5,
        );
        let m = match_score(&scene, &goal.graph).unwrap();
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let p = VerifyParams::default();

        let seen = obs(vec![obj(1, "chair", &["black"], [1.0, 0.0])]);
        assert_eq!(
            verify_and_correct(&scene, &goal, &m, &seen, &pose, 1, &p),
            VerifyOutcome::Verified
        );
        assert_eq!(
            verify_and_correct(&scene, &goal, &m, &obs(vec![]), &pose, 1, &p),
            VerifyOutcome::Unverifiable
        );

        let relabeled = obs(vec![obj(1, "table", &["black"], [1.0, 0.0])]);
        let VerifyOutcome::Corrected(fixed) =
            verify_and_correct(&scene, &goal, &m, &relabeled, &pose, 1, &p)
        else {
            panic!("expected a correction");
        };
        assert!(fixed.node(0).unwrap().negative_labels.contains("chair"));
        assert!(match_score(&fixed, &goal.graph).unwrap().score < m.score);

        let faded = obs(vec![obj(1, "chair", &["white"], [1.0, 0.0])]);
        let VerifyOutcome::Corrected(fixed) =
            verify_and_correct(&scene, &goal, &m, &faded, &pose, 1, &p)
        else {
            panic!("expected a correction");
        };
        assert!(fixed.node(0).unwrap().negative_labels.contains("black"));
        assert!(match_score(&fixed, &goal.graph).unwrap().score < m.score);
    }

    #[test]
    fn verify_with_staleness_window() {
        let goal = parse_goal(CHAIR_GOAL).unwrap();
        let scene = SemanticGraph::new_scene(1.5).integrate_observation(
            &obs(vec![obj(1, "chair", &["black"], [1.0, 0.0])]),
            4,
            0.5,
        );
        let m = match_score(&scene, &goal.graph).unwrap();
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let p = VerifyParams {
            staleness: 2,
            ..Default::default()
        };
        assert_eq!(
            verify_and_correct(&scene, &goal, &m, &obs(vec![]), &pose, 5, &p),
            VerifyOutcome::Verified
        );
        assert_eq!(
            verify_and_correct(&scene, &goal, &m, &obs(vec![]), &pose, 9, &p),
            VerifyOutcome::Unverifiable
        );
    }
}
