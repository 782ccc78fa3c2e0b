use std::sync::Arc;

use nalgebra::Vector2;

use super::{Candidates, Reasoner, ReasonerError, ReasonerQuery, ReasonerReply};
use crate::navigator::{action_to_velocity, hold_command, DiscreteAction, CONTROL_DT};
use crate::scenegraph::{match_score, DEFAULT_D_MERGE, DEFAULT_D_NEAR};
use crate::world::{SensorConfig, WorldModel};

/// Ground-truth-assisted stand-in for the vision-language reasoner.
///
/// Frontiers are ranked by closeness to scene nodes whose category appears
/// among the sub-goals (falling back to closeness to the robot). Action
/// improvements come from a one-tick lookahead in the true world.
#[derive(Debug, Clone)]
pub struct MockReasoner {
    world: Arc<WorldModel>,
    sensor: SensorConfig,
    d_near: f64,
    d_merge: f64,
}

impl MockReasoner {
    pub fn new(world: Arc<WorldModel>, sensor: SensorConfig) -> Self {
        Self {
            world,
            sensor,
            d_near: DEFAULT_D_NEAR,
            d_merge: DEFAULT_D_MERGE,
        }
    }

    pub fn with_graph_params(mut self, d_near: f64, d_merge: f64) -> Self {
        self.d_near = d_near;
        self.d_merge = d_merge;
        self
    }

    pub fn mock_rank_frontiers(
        &self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        query.validate()?;
        let Candidates::Frontiers(cells) = &query.candidates else {
            unreachable!("validated");
        };
        let anchors: Vec<Vector2<f64>> = query
            .scene
            .iter()
            .filter(|n| query.subgoals.iter().any(|s| s.category == n.category))
            .filter_map(|n| n.position.map(|p| Vector2::new(p[0], p[1])))
            .collect();
        let robot = query.pose.position();
        let scores = cells
            .iter()
            .map(|c| {
                let p = self.world.cell_center(*c);
                if anchors.is_empty() {
                    -(p - robot).norm()
                } else {
                    -anchors
                        .iter()
                        .map(|a| (p - a).norm())
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        Ok(ReasonerReply { scores })
    }

    pub fn mock_estimate_improvement(
        &self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        query.validate()?;
        let Candidates::Actions(actions) = &query.candidates else {
            unreachable!("validated");
        };
        let goal = query.goal()?;
        let scene = query.scene_graph(self.d_near);
        let current = match_score(&scene, &goal.graph)
            .map_err(|e| ReasonerError::InvalidQuery(e.to_string()))?
            .score;
        let next_step = query.step + 1;
        let t_next = next_step as f64 * query.decision_dt;
        let scores = actions
            .iter()
            .map(|a| {
                if *a == DiscreteAction::Stop {
                    return 0.0;
                }
                let tick = hold_command(
                    &self.world,
                    &query.pose,
                    action_to_velocity(*a),
                    query.decision_dt,
                    CONTROL_DT,
                );
                let obs = self.world.observe(&tick.pose, &self.sensor, t_next);
                let lookahead = scene.integrate_observation(&obs, next_step, self.d_merge);
                match_score(&lookahead, &goal.graph).map_or(0.0, |m| m.score - current)
            })
            .collect();
        Ok(ReasonerReply { scores })
    }
}

impl Reasoner for MockReasoner {
    fn rank_frontiers(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        self.mock_rank_frontiers(query)
    }

    fn estimate_improvement(
        &mut self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        self.mock_estimate_improvement(query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoner::QueryKind;
    use crate::scenegraph::{decompose_goal, parse_goal, GraphNode};
    use crate::world::{Cell, RobotPose, SemanticObject};
    use std::collections::BTreeSet;
    use std::f64::consts::PI;

    fn world_with(objects: Vec<SemanticObject>) -> Arc<WorldModel> {
        Arc::new(WorldModel::new(20, 20, 0.25, BTreeSet::new(), objects, 0).unwrap())
    }

    fn chair(id: u32, x: f64, y: f64) -> SemanticObject {
        SemanticObject {
            id,
            category: "chair".into(),
            attributes: BTreeSet::from(["black".to_string()]),
            position: [x, y],
        }
    }

    fn query(
        kind: QueryKind,
        scene: Vec<GraphNode>,
        candidates: Candidates,
        pose: RobotPose,
    ) -> ReasonerQuery {
        let goal = parse_goal(
            r#"{"nodes":[{"id":0,"category":"chair","attributes":["black"],"target":true}]}"#,
        )
        .unwrap();
        ReasonerQuery {
            kind,
            step: 0,
            scene,
            subgoals: decompose_goal(&goal),
            candidates,
            pose,
            decision_dt: 1.0,
        }
    }

    #[test]
    fn single_frontier_wins() {
        let r = MockReasoner::new(world_with(vec![]), SensorConfig::default());
        let q = query(
            QueryKind::RankFrontiers,
            vec![],
            Candidates::Frontiers(vec![Cell::new(3, 3)]),
            RobotPose::new(0.1, 0.1, 0.0),
        );
        assert_eq!(r.mock_rank_frontiers(&q).unwrap().scores.len(), 1);
    }

    #[test]
    fn frontier_near_matching_category_ranks_higher() {
        let r = MockReasoner::new(world_with(vec![]), SensorConfig::default());
        let node = GraphNode::new(0, "chair", &[], Some([4.0, 4.0]));
        let q = query(
            QueryKind::RankFrontiers,
            vec![node],
            Candidates::Frontiers(vec![Cell::new(1, 1), Cell::new(15, 15)]),
            RobotPose::new(0.1, 0.1, 0.0),
        );
        let s = r.mock_rank_frontiers(&q).unwrap().scores;
        assert!(s[1] > s[0]);

        // without a category match, closeness to the robot decides
        let plant = GraphNode::new(0, "plant", &[], Some([4.0, 4.0]));
        let q = query(
            QueryKind::RankFrontiers,
            vec![plant],
            Candidates::Frontiers(vec![Cell::new(1, 1), Cell::new(15, 15)]),
            RobotPose::new(0.1, 0.1, 0.0),
        );
        let s = r.mock_rank_frontiers(&q).unwrap().scores;
        assert!(s[0] > s[1]);
    }

    #[test]
    fn improvement_lookahead() {
        // chair straight ahead but outside the current FOV after a left turn
        let r = MockReasoner::new(
            world_with(vec![chair(1, 3.125, 1.125)]),
            SensorConfig::default(),
        );
        let actions = Candidates::Actions(DiscreteAction::ALL.to_vec());

        // chair not yet in the scene, robot faces it: any motion that keeps it
        // in view reveals it
        let q = query(
            QueryKind::EstimateImprovement,
            vec![],
            actions.clone(),
            RobotPose::new(1.125, 1.125, -PI / 4.0 - 0.2),
        );
        let s = r.mock_estimate_improvement(&q).unwrap().scores;
        assert_eq!(s[3], 0.0);
        assert_eq!(s[1], 1.0, "turning left brings the chair into view");
        assert!(s[1] > s[2]);

        // chair already matched: nothing to gain
        let node = GraphNode::new(0, "chair", &["black"], Some([3.125, 1.125]));
        let q = query(
            QueryKind::EstimateImprovement,
            vec![node],
            actions,
            RobotPose::new(1.125, 1.125, 0.0),
        );
        assert!(r
            .mock_estimate_improvement(&q)
            .unwrap()
            .scores
            .iter()
            .all(|s| *s == 0.0));
    }

    #[test]
    fn rejects_mismatched_candidates() {
        let r = MockReasoner::new(world_with(vec![]), SensorConfig::default());
        let q = query(
            QueryKind::RankFrontiers,
            vec![],
            Candidates::Actions(vec![DiscreteAction::Stop]),
            RobotPose::new(0.1, 0.1, 0.0),
        );
        assert!(matches!(
            r.mock_rank_frontiers(&q),
            Err(ReasonerError::InvalidQuery(_))
        ));
        let q = query(
            QueryKind::RankFrontiers,
            vec![],
            Candidates::Frontiers(vec![]),
            RobotPose::new(0.1, 0.1, 0.0),
        );
        assert!(r.mock_rank_frontiers(&q).is_err());
    }
}
