//! Reactive answer-set task planning for a simulated delivery robot.

pub mod bus;
pub mod incremental;
pub mod interfaces;
pub mod lp;
pub mod reactive;
pub mod runner;
pub mod taskctl;
pub mod world;
