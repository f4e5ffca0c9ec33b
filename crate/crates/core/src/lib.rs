//! Grid-world simulator and exact two-layer planner for mixed robot and
//! human pickup-and-delivery fleets under a receding-horizon loop.

pub mod allocation;
pub mod domain;
pub mod engine;
pub mod oracle;
pub mod pathfinding;
pub mod scenario;
pub mod world;
