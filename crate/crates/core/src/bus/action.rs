//! Goal/cancel/feedback/result protocol between action clients and servers.

use std::collections::VecDeque;
use std::fmt;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::topic::{Bus, BusError};

/// Payload types of one kind of action.
pub trait Action: 'static {
    type Goal: Clone + Send + Sync + 'static;
    type Feedback: Clone + Send + 'static;
    type Result: Clone + Send + 'static;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoalState {
    Pending,
    Active,
    Preempting,
    Succeeded,
    Aborted,
    Preempted,
}

impl GoalState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            GoalState::Succeeded | GoalState::Aborted | GoalState::Preempted
        )
    }

    pub fn allows(self, to: GoalState) -> bool {
        use GoalState::*;
        matches!(
            (self, to),
            (Pending, Active)
                | (Pending, Preempted)
                | (Active, Succeeded)
                | (Active, Aborted)
                | (Active, Preempting)
                | (Preempting, Preempted)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GoalState::Pending => "pending",
            GoalState::Active => "active",
            GoalState::Preempting => "preempting",
            GoalState::Succeeded => "succeeded",
            GoalState::Aborted => "aborted",
            GoalState::Preempted => "preempted",
        }
    }
}

impl fmt::Display for GoalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("illegal goal transition {from} -> {to}")]
    Illegal { from: GoalState, to: GoalState },
}

/// Terminal state plus the server's result, if it sent one. A goal
/// preempted before it started has no result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome<R> {
    pub state: GoalState,
    pub result: Option<R>,
}

struct Inner<A: Action> {
    state: GoalState,
    history: Vec<GoalState>,
    feedback: VecDeque<A::Feedback>,
    result: Option<A::Result>,
    taken: bool,
}

struct Shared<A: Action> {
    id: u64,
    goal: A::Goal,
    inner: Mutex<Inner<A>>,
    done: Condvar,
}

impl<A: Action> Shared<A> {
    fn transition(&self, to: GoalState, result: Option<A::Result>) -> Result<(), ActionError> {
        let mut inner = self.inner.lock().unwrap();
        let from = inner.state;
        if !from.allows(to) {
            return Err(ActionError::Illegal { from, to });
        }
        inner.state = to;
        inner.history.push(to);
        if to.is_terminal() {
            inner.result = result;
            self.done.notify_all();
        }
        Ok(())
    }

    fn state(&self) -> GoalState {
        self.inner.lock().unwrap().state
    }

    /// Pending goals end at once; active ones are asked to stop.
    fn request_cancel(&self) {
        let state = self.state();
        let to = match state {
            GoalState::Pending => GoalState::Preempted,
            GoalState::Active => GoalState::Preempting,
            _ => return,
        };
        // Only fails if the server moved the goal meanwhile, in which case
        // there is nothing left to cancel from here.
        let _ = self.transition(to, None);
    }
}

/// Client-side view of one goal.
pub struct GoalHandle<A: Action> {
    shared: Arc<Shared<A>>,
}

impl<A: Action> Clone for GoalHandle<A> {
    fn clone(&self) -> Self {
        GoalHandle {
            shared: self.shared.clone(),
        }
    }
}

impl<A: Action> GoalHandle<A> {
    pub fn id(&self) -> u64 {
        self.shared.id
    }

    pub fn state(&self) -> GoalState {
        self.shared.state()
    }

    /// Every state the goal has been in, starting with `Pending`.
    pub fn history(&self) -> Vec<GoalState> {
        self.shared.inner.lock().unwrap().history.clone()
    }

    /// Cancelling a finished goal does nothing.
    pub fn cancel(&self) {
        self.shared.request_cancel();
    }

    pub fn feedback(&self) -> Vec<A::Feedback> {
        self.shared
            .inner
            .lock()
            .unwrap()
            .feedback
            .drain(..)
            .collect()
    }

    /// The outcome, handed out once after the goal finished.
    pub fn take_result(&self) -> Option<Outcome<A::Result>> {
        let mut inner = self.shared.inner.lock().unwrap();
        if !inner.state.is_terminal() || inner.taken {
            return None;
        }
        inner.taken = true;
        Some(Outcome {
            state: inner.state,
            result: inner.result.clone(),
        })
    }

    /// Blocks until the goal finishes or `timeout` passes, then behaves
    /// like [`take_result`](Self::take_result).
    pub fn wait_result(&self, timeout: Duration) -> Option<Outcome<A::Result>> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.shared.inner.lock().unwrap();
        while !inner.state.is_terminal() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return None;
            }
            inner = self.shared.done.wait_timeout(inner, left).unwrap().0;
        }
        drop(inner);
        self.take_result()
    }
}

/// Server-side view of one goal.
pub struct ServerGoal<A: Action> {
    shared: Arc<Shared<A>>,
}

impl<A: Action> ServerGoal<A> {
    pub fn id(&self) -> u64 {
        self.shared.id
    }

    pub fn goal(&self) -> &A::Goal {
        &self.shared.goal
    }

    pub fn state(&self) -> GoalState {
        self.shared.state()
    }

    /// The client cancelled, or a newer goal replaced this one.
    pub fn cancel_requested(&self) -> bool {
        matches!(self.state(), GoalState::Preempting | GoalState::Preempted)
    }

    pub fn accept(&self) -> Result<(), ActionError> {
        self.shared.transition(GoalState::Active, None)
    }

    pub fn publish_feedback(&self, feedback: A::Feedback) {
        let mut inner = self.shared.inner.lock().unwrap();
        if !inner.state.is_terminal() {
            inner.feedback.push_back(feedback);
        }
    }

    pub fn succeed(&self, result: A::Result) -> Result<(), ActionError> {
        self.shared.transition(GoalState::Succeeded, Some(result))
    }

    pub fn abort(&self, result: A::Result) -> Result<(), ActionError> {
        self.shared.transition(GoalState::Aborted, Some(result))
    }

    /// Confirms a cancellation.
    pub fn preempted(&self, result: A::Result) -> Result<(), ActionError> {
        self.shared.transition(GoalState::Preempted, Some(result))
    }
}

struct Endpoint<A: Action> {
    tx: Sender<ServerGoal<A>>,
    live: Vec<Arc<Shared<A>>>,
    next_id: u64,
}

/// Receives goals sent to one named server.
pub struct ActionServer<A: Action> {
    name: String,
    rx: Receiver<ServerGoal<A>>,
}

impl<A: Action> ActionServer<A> {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The newest goal that is still waiting, if any. Older waiting goals
    /// were already preempted when it was sent.
    pub fn take_goal(&self) -> Option<ServerGoal<A>> {
        let mut newest = None;
        for g in self.rx.try_iter() {
            if g.state() == GoalState::Pending {
                newest = Some(g);
            }
        }
        newest
    }
}

/// Sends goals to one named server.
pub struct ActionClient<A: Action> {
    name: String,
    endpoint: Arc<Mutex<Endpoint<A>>>,
}

impl<A: Action> Clone for ActionClient<A> {
    fn clone(&self) -> Self {
        ActionClient {
            name: self.name.clone(),
            endpoint: self.endpoint.clone(),
        }
    }
}

impl<A: Action> ActionClient<A> {
    pub fn server_name(&self) -> &str {
        &self.name
    }

    /// Sends a goal. Unfinished earlier goals on the same server are
    /// preempted.
    pub fn send_goal(&self, goal: A::Goal) -> GoalHandle<A> {
        let mut ep = self.endpoint.lock().unwrap();
        for old in &ep.live {
            old.request_cancel();
        }
        ep.live.retain(|g| !g.state().is_terminal());
        ep.next_id += 1;
        let shared = Arc::new(Shared {
            id: ep.next_id,
            goal,
            inner: Mutex::new(Inner {
                state: GoalState::Pending,
                history: vec![GoalState::Pending],
                feedback: VecDeque::new(),
                result: None,
                taken: false,
            }),
            done: Condvar::new(),
        });
        ep.live.push(shared.clone());
        // A dropped server leaves the goal pending; the client sees no result.
        let _ = ep.tx.send(ServerGoal {
            shared: shared.clone(),
        });
        GoalHandle { shared }
    }
}

impl Bus {
    /// Registers an action server under `name`.
    pub fn register_action<A: Action + Send>(
        &self,
        name: &str,
    ) -> Result<ActionServer<A>, BusError> {
        let mut actions = self.actions.lock().unwrap();
        if actions.contains_key(name) {
            return Err(BusError::DuplicateServer(name.to_string()));
        }
        let (tx, rx) = mpsc::channel();
        let endpoint = Arc::new(Mutex::new(Endpoint::<A> {
            tx,
            live: Vec::new(),
            next_id: 0,
        }));
        actions.insert(name.to_string(), Box::new(endpoint));
        Ok(ActionServer {
            name: name.to_string(),
            rx,
        })
    }

    /// A client for the server registered under `name`.
    pub fn action_client<A: Action + Send>(&self, name: &str) -> Result<ActionClient<A>, BusError> {
        let actions = self.actions.lock().unwrap();
        let endpoint = actions
            .get(name)
            .and_then(|b| b.downcast_ref::<Arc<Mutex<Endpoint<A>>>>())
            .ok_or_else(|| BusError::UnknownServer(name.to_string()))?;
        Ok(ActionClient {
            name: name.to_string(),
            endpoint: endpoint.clone(),
        })
    }

    pub fn send_goal<A: Action + Send>(
        &self,
        name: &str,
        goal: A::Goal,
    ) -> Result<GoalHandle<A>, BusError> {
        Ok(self.action_client::<A>(name)?.send_goal(goal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl Action for Echo {
        type Goal = u32;
        type Feedback = u32;
        type Result = u32;
    }

    #[test]
    fn trivial_success() {
        let bus = Bus::new();
        let server = bus.register_action::<Echo>("echo").unwrap();
        let h = bus.send_goal::<Echo>("echo", 5).unwrap();
        let g = server.take_goal().unwrap();
        g.accept().unwrap();
        g.publish_feedback(1);
        g.succeed(*g.goal() * 2).unwrap();
        assert_eq!(h.feedback(), vec![1]);
        assert_eq!(
            h.take_result(),
            Some(Outcome {
                state: GoalState::Succeeded,
                result: Some(10)
            })
        );
        assert_eq!(h.take_result(), None);
        assert_eq!(
            h.history(),
            [GoalState::Pending, GoalState::Active, GoalState::Succeeded]
        );
    }

    #[test]
    fn new_goal_preempts_active_one() {
        let bus = Bus::new();
        let server = bus.register_action::<Echo>("nav").unwrap();
        let first = bus.send_goal::<Echo>("nav", 1).unwrap();
        let g1 = server.take_goal().unwrap();
        g1.accept().unwrap();
        let second = bus.send_goal::<Echo>("nav", 2).unwrap();
        assert!(g1.cancel_requested());
        g1.preempted(0).unwrap();
        assert_eq!(first.take_result().unwrap().state, GoalState::Preempted);
        let g2 = server.take_goal().unwrap();
        assert_eq!(*g2.goal(), 2);
        assert_eq!(second.state(), GoalState::Pending);
    }

    #[test]
    fn cancel_pending_and_terminal() {
        let bus = Bus::new();
        let server = bus.register_action::<Echo>("x").unwrap();
        let h = bus.send_goal::<Echo>("x", 1).unwrap();
        h.cancel();
        assert_eq!(h.state(), GoalState::Preempted);
        assert!(server.take_goal().is_none());
        h.cancel();
        assert_eq!(h.history(), [GoalState::Pending, GoalState::Preempted]);
        assert_eq!(h.take_result().unwrap().result, None);
    }

    #[test]
    fn illegal_transitions_are_refused() {
        let bus = Bus::new();
        let server = bus.register_action::<Echo>("x").unwrap();
        let _h = bus.send_goal::<Echo>("x", 1).unwrap();
        let g = server.take_goal().unwrap();
        assert!(g.succeed(1).is_err());
        g.accept().unwrap();
        g.abort(0).unwrap();
        assert!(matches!(g.accept(), Err(ActionError::Illegal { .. })));
    }

    #[test]
    fn unknown_server() {
        let bus = Bus::new();
        assert!(matches!(
            bus.send_goal::<Echo>("nope", 1),
            Err(BusError::UnknownServer(_))
        ));
        bus.register_action::<Echo>("x").unwrap();
        assert!(bus.register_action::<Echo>("x").is_err());
    }

    #[test]
    fn wait_result_across_threads() {
        let bus = Bus::new();
        let server = bus.register_action::<Echo>("x").unwrap();
        let h = bus.send_goal::<Echo>("x", 3).unwrap();
        let t = std::thread::spawn(move || {
            let g = server.take_goal().unwrap();
            g.accept().unwrap();
            g.succeed(9).unwrap();
        });
        let out = h.wait_result(Duration::from_secs(5)).unwrap();
        t.join().unwrap();
        assert_eq!(out.result, Some(9));
    }
}
