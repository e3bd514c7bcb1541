//! Online progression of a reactive program.

pub mod online;
pub mod server;
pub mod wire;

pub use online::{parse_online, Lifetime, OnlineError, OnlineItem, OnlineUpdate};
pub use server::{render_answer, Answer, ReactiveServer, ServerError};
pub use wire::{serve, serve_stream, WireError};
