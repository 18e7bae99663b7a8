//! Imagination-to-value navigation planning in a deterministic 2D simulator.

pub mod geometry;
pub mod harness;
pub mod mapping;
pub mod planner;
pub mod scene;
pub mod value;
pub mod world_model;
