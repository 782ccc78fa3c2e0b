use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::world::VelocityCommand;

pub const FORWARD_SPEED: f64 = 0.1;
pub const TURN_RATE: f64 = PI / 12.0;

/// Discrete navigation actions, declared in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteAction {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl DiscreteAction {
    pub const ALL: [DiscreteAction; 4] = [
        DiscreteAction::MoveForward,
        DiscreteAction::TurnLeft,
        DiscreteAction::TurnRight,
        DiscreteAction::Stop,
    ];
}

/// Velocity command held by the low-level controller for an action.
pub fn action_to_velocity(a: DiscreteAction) -> VelocityCommand {
    match a {
        DiscreteAction::MoveForward => VelocityCommand::new(FORWARD_SPEED, 0.0),
        DiscreteAction::TurnLeft => VelocityCommand::new(0.0, TURN_RATE),
        DiscreteAction::TurnRight => VelocityCommand::new(0.0, -TURN_RATE),
        DiscreteAction::Stop => VelocityCommand::new(0.0, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_table() {
        let v = |a| {
            let c = action_to_velocity(a);
            (c.v, c.omega)
        };
        assert_eq!(v(DiscreteAction::MoveForward), (0.1, 0.0));
        assert_eq!(v(DiscreteAction::TurnLeft), (0.0, PI / 12.0));
        assert_eq!(v(DiscreteAction::TurnRight), (0.0, -PI / 12.0));
        assert_eq!(v(DiscreteAction::Stop), (0.0, 0.0));
    }

    #[test]
    fn priority_order() {
        let mut all = DiscreteAction::ALL;
        all.reverse();
        all.sort();
        assert_eq!(all, DiscreteAction::ALL);
    }
}
