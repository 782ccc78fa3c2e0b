//! Pluggable frontier ranking and action scoring.
//!
//! The navigator never talks to a vision-language model directly; it asks a
//! [`Reasoner`] to score candidates. [`MockReasoner`] answers from ground
//! truth, [`WireReasoner`] forwards the query to an HTTP service.

mod mock;
mod wire;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navigator::DiscreteAction;
use crate::scenegraph::{Goal, GraphNode, SemanticGraph, SubGoal};
use crate::world::{Cell, RobotPose};

pub use mock::MockReasoner;
pub use wire::WireReasoner;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonerError {
    #[error("reasoner unavailable: {0}")]
    Unavailable(String),
    #[error("invalid reasoner query: {0}")]
    InvalidQuery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    RankFrontiers,
    EstimateImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidates {
    Frontiers(Vec<Cell>),
    Actions(Vec<DiscreteAction>),
}

impl Candidates {
    pub fn len(&self) -> usize {
        match self {
            Candidates::Frontiers(f) => f.len(),
            Candidates::Actions(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything a reasoner may use: the current scene graph, the goal
/// decomposed into sub-goals (target first), the candidates and the pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerQuery {
    pub kind: QueryKind,
    pub step: u64,
    pub scene: Vec<GraphNode>,
    pub subgoals: Vec<SubGoal>,
    pub candidates: Candidates,
    pub pose: RobotPose,
    pub decision_dt: f64,
}

impl ReasonerQuery {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        if self.candidates.is_empty() {
            return Err(ReasonerError::InvalidQuery("empty candidate list".into()));
        }
        match (self.kind, &self.candidates) {
            (QueryKind::RankFrontiers, Candidates::Frontiers(_))
            | (QueryKind::EstimateImprovement, Candidates::Actions(_)) => Ok(()),
            _ => Err(ReasonerError::InvalidQuery(
                "candidate type does not fit the query kind".into(),
            )),
        }
    }

    /// Rebuilds the scene graph carried in the query.
    pub fn scene_graph(&self, d_near: f64) -> SemanticGraph {
        SemanticGraph::scene_from_nodes(self.scene.clone(), d_near)
    }

    /// Rebuilds the goal graph from the sub-goals; the first is the target.
    pub fn goal(&self) -> Result<Goal, ReasonerError> {
        let first = self
            .subgoals
            .first()
            .ok_or_else(|| ReasonerError::InvalidQuery("no sub-goals".into()))?;
        let mut edges = BTreeSet::new();
        for s in &self.subgoals {
            for r in &s.relations {
                edges.insert([s.goal_node.min(*r), s.goal_node.max(*r)]);
            }
        }
        let spec = crate::scenegraph::GoalSpec {
            nodes: self
                .subgoals
                .iter()
                .map(|s| crate::scenegraph::GoalNodeSpec {
                    id: s.goal_node,
                    category: Some(s.category.clone()),
                    attributes: s.attributes.iter().cloned().collect(),
                    position: None,
                    target: s.goal_node == first.goal_node,
                })
                .collect(),
            edges: edges.into_iter().collect(),
        };
        spec.to_goal()
            .map_err(|e| ReasonerError::InvalidQuery(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerReply {
    pub scores: Vec<f64>,
}

impl ReasonerReply {
    pub fn check_against(&self, q: &ReasonerQuery) -> Result<(), ReasonerError> {
        if self.scores.len() != q.candidates.len() {
            return Err(ReasonerError::Unavailable(format!(
                "reply has {} scores for {} candidates",
                self.scores.len(),
                q.candidates.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(ReasonerError::Unavailable(
                "non-finite score in reply".into(),
            ));
        }
        Ok(())
    }
}

pub trait Reasoner {
    fn rank_frontiers(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError>;
    fn estimate_improvement(
        &mut self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError>;

    fn answer(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        match query.kind {
            QueryKind::RankFrontiers => self.rank_frontiers(query),
            QueryKind::EstimateImprovement => self.estimate_improvement(query),
        }
    }
}

impl<R: Reasoner + ?Sized> Reasoner for Box<R> {
    fn rank_frontiers(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        (**self).rank_frontiers(query)
    }

    fn estimate_improvement(
        &mut self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        (**self).estimate_improvement(query)
    }
}

/// Uses `primary`, answering from `fallback` whenever it is unavailable.
pub struct FallbackReasoner<P, F> {
    pub primary: P,
    pub fallback: F,
    pub fallbacks_used: usize,
}

impl<P: Reasoner, F: Reasoner> FallbackReasoner<P, F> {
    pub fn new(primary: P, fallback: F) -> Self {
        Self {
            primary,
            fallback,
            fallbacks_used: 0,
        }
    }

    fn route(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        match self.primary.answer(query) {
            Err(ReasonerError::Unavailable(_)) => {
                self.fallbacks_used += 1;
                self.fallback.answer(query)
            }
            other => other,
        }
    }
}

impl<P: Reasoner, F: Reasoner> Reasoner for FallbackReasoner<P, F> {
    fn rank_frontiers(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        self.route(query)
    }

    fn estimate_improvement(
        &mut self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        self.route(query)
    }
}
