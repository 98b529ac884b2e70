//! Signal Temporal Logic synthesis with time-varying control barrier functions
//! and an adaptive, observer-based controller.

pub mod smooth;
pub mod stl;
pub mod transform;
pub mod tree;
pub mod cbf;
pub mod monitor;
pub mod controller;
pub mod plant;
pub mod scenario;
pub mod sim;
