//! In-process message bus: typed topics and the action protocol.

pub mod action;
pub mod topic;

pub use action::{
    Action, ActionClient, ActionError, ActionServer, GoalHandle, GoalState, Outcome, ServerGoal,
};
pub use topic::{Bus, BusError, InterfaceMsg, Message, Publisher, Subscription, DEFAULT_QUEUE};
