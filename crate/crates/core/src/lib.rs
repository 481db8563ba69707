//! Worst-case stealthy-attack disruption and cognitive-hierarchy security
//! policies for networked control systems.

pub mod adversary;
pub mod conic;
pub mod defender;
pub mod disruption;
pub mod game;
pub mod io;
pub mod network;
pub mod simulation;
