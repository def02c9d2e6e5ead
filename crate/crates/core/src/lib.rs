//! Receding-horizon trajectory planning for a camera UAV and its lighting
//! followers, plus a deterministic simulator that drives the whole pipeline.

pub mod corridor;
pub mod dynamics;
pub mod error;
pub mod formation;
pub mod qpsolve;
pub mod shots;
pub mod sim;
pub mod world;

pub use dynamics::{HorizonConfig, OriInput, OriPlan, OriState, PosInput, PosState, Trajectory, Vec2, Vec3};
pub use error::{Error, Result};
