//! Deterministic desk-scale simulator and math library for a legged mobile
//! manipulator: three-stage semantic navigation without a prior map, and
//! hand-guided end-effector trajectory generation, observation packing and
//! reward evaluation for a whole-body policy.

pub mod geometry;
pub mod handtrack;
pub mod navigator;
pub mod reasoner;
pub mod scenegraph;
pub mod wholebody;
pub mod world;
