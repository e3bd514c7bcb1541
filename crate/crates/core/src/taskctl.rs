//! The planning controller: client goals in, one action per cycle out.
//!
//! Each cycle builds an online update from queued client events and the
//! last action result, feeds it to the reactive solver, takes the action
//! planned for the current cycle, publishes it on the outbound topic and
//! waits for its result on the inbound topic.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::bus::{Bus, BusError, InterfaceMsg, Publisher, Subscription};
use crate::incremental::{IncrementalConfig, IncrementalError};
use crate::interfaces::{ActionCall, ACTION_PREDS, RETURN_PRED};
use crate::lp::{parse_atom, AnswerSet, Atom, Literal, ReactiveProgram, Rule, Term};
use crate::reactive::{Answer, OnlineItem, OnlineUpdate, ReactiveServer, ServerError};

pub const OUT_TOPIC: &str = "out_rosoclingo";
pub const IN_TOPIC: &str = "in_rosoclingo";
pub const REQUEST_PRED: &str = "_request";
pub const DEFAULT_MAX_POLLS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("goal term {0} is not of the form goal(From,To,Package)")]
    BadGoal(String),
    #[error("package {0} already has an open goal")]
    DuplicatePackage(String),
    #[error("unknown goal id {0}")]
    UnknownGoal(GoalId),
    #[error("goal {0} has already finished")]
    Finished(GoalId),
    #[error("answer set plans {count} actions for cycle {cycle}")]
    MultipleActions { cycle: i64, count: usize },
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalId(pub u64);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoalStatus {
    Pending,
    Active,
    Succeeded,
    Preempted,
    Aborted,
}

impl GoalStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            GoalStatus::Succeeded | GoalStatus::Preempted | GoalStatus::Aborted
        )
    }

    pub fn allows(self, to: GoalStatus) -> bool {
        matches!(
            (self, to),
            (GoalStatus::Pending, GoalStatus::Active)
                | (GoalStatus::Active, GoalStatus::Succeeded)
                | (GoalStatus::Active, GoalStatus::Preempted)
                | (GoalStatus::Active, GoalStatus::Aborted)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GoalStatus::Pending => "pending",
            GoalStatus::Active => "active",
            GoalStatus::Succeeded => "succeeded",
            GoalStatus::Preempted => "preempted",
            GoalStatus::Aborted => "aborted",
        }
    }
}

impl fmt::Display for GoalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalRecord {
    pub id: GoalId,
    /// `goal(From,To,Package)`.
    pub goal: Term,
    pub package: Term,
    pub submit_cycle: i64,
    pub status: GoalStatus,
    pub history: Vec<GoalStatus>,
    /// Cycle at which the cancellation was fed.
    pub cancelled_at: Option<i64>,
}

impl GoalRecord {
    fn set(&mut self, to: GoalStatus) {
        // Transitions are driven by the controller alone; a refused one is
        // a controller bug.
        assert!(
            self.status.allows(to),
            "goal {} cannot go from {} to {}",
            self.id,
            self.status,
            to
        );
        self.status = to;
        self.history.push(to);
    }

    pub fn origin(&self) -> Option<&Term> {
        goal_parts(&self.goal).map(|(f, _, _)| f)
    }

    pub fn destination(&self) -> Option<&Term> {
        goal_parts(&self.goal).map(|(_, d, _)| d)
    }
}

fn goal_parts(goal: &Term) -> Option<(&Term, &Term, &Term)> {
    match goal {
        Term::Func(name, args) if name == "goal" && args.len() == 3 => {
            Some((&args[0], &args[1], &args[2]))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientEvent {
    Goal(GoalId),
    Cancel(GoalId),
    /// Withdraws a goal from the solver after it was aborted.
    Withdraw(Term),
}

/// What the controller carries from one cycle to the next.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleState {
    pub cycle: i64,
    pub queued: Vec<ClientEvent>,
    /// `_return` facts received since the last update.
    pub results: Vec<Atom>,
    /// Actions whose result has come back, in dispatch order.
    pub committed: Vec<Atom>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleReport {
    pub cycle: i64,
    pub update: OnlineUpdate,
    pub lower_bound: i64,
    /// `None` if no answer set exists up to the horizon cap.
    pub horizon: Option<i64>,
    /// `_action` atoms of the answer set, by step.
    pub plan: Vec<Atom>,
    pub action: Option<ActionCall>,
    pub result: Option<Atom>,
    /// Goals whose status changed during the cycle.
    pub status_changes: Vec<(GoalId, GoalStatus)>,
}

/// Advances whatever executes the dispatched actions.
pub trait Pump {
    /// One unit of progress, e.g. a simulation tick.
    fn pump(&mut self);
}

impl<F: FnMut()> Pump for F {
    fn pump(&mut self) {
        self()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerConfig {
    pub out_topic: String,
    pub in_topic: String,
    /// Pump calls to wait for an action result before giving up on it.
    pub max_polls: usize,
    /// Pump calls on a cycle without an action.
    pub idle_polls: usize,
    pub incremental: IncrementalConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            out_topic: OUT_TOPIC.to_string(),
            in_topic: IN_TOPIC.to_string(),
            max_polls: DEFAULT_MAX_POLLS,
            idle_polls: 1,
            incremental: IncrementalConfig::default(),
        }
    }
}

/// `_action` atoms of `answer` ordered by step, then by text.
pub fn plan_of(answer: &AnswerSet) -> Vec<Atom> {
    let mut plan: Vec<Atom> = answer
        .atoms
        .iter()
        .filter(|a| ActionCall::from_atom(a).is_some())
        .cloned()
        .collect();
    plan.sort_by_key(|a| (a.args[2].clone(), a.to_string()));
    plan
}

/// The action planned for `cycle`, if any.
pub fn extract_action(answer: &AnswerSet, cycle: i64) -> Result<Option<ActionCall>, ControlError> {
    let calls: Vec<ActionCall> = answer
        .atoms
        .iter()
        .filter(|a| ACTION_PREDS.contains(&a.pred.as_str()))
        .filter_map(ActionCall::from_atom)
        .filter(|c| c.cycle == cycle)
        .collect();
    match calls.len() {
        0 => Ok(None),
        1 => Ok(calls.into_iter().next()),
        count => Err(ControlError::MultipleActions { cycle, count }),
    }
}

fn request(term: Term, cycle: i64) -> Rule {
    Rule::fact(Atom::new(REQUEST_PRED, vec![term, Term::Int(cycle)]))
}

fn commit(action: &Atom) -> Rule {
    Rule::constraint(vec![Literal::Neg(action.clone())])
}

pub struct Controller {
    server: ReactiveServer,
    state: CycleState,
    goals: Vec<GoalRecord>,
    picked: BTreeSet<Term>,
    outbox: Publisher<InterfaceMsg>,
    inbox: Subscription<InterfaceMsg>,
    config: ControllerConfig,
    last_answer: Option<Answer>,
}

impl Controller {
    pub fn new(
        program: ReactiveProgram,
        bus: &Bus,
        config: ControllerConfig,
    ) -> Result<Self, ControlError> {
        Ok(Controller {
            server: ReactiveServer::with_config(program, config.incremental),
            state: CycleState {
                cycle: 1,
                ..CycleState::default()
            },
            goals: Vec::new(),
            picked: BTreeSet::new(),
            outbox: bus.advertise(&config.out_topic)?,
            inbox: bus.subscribe(&config.in_topic)?,
            config,
            last_answer: None,
        })
    }

    pub fn cycle(&self) -> i64 {
        self.state.cycle
    }

    pub fn state(&self) -> &CycleState {
        &self.state
    }

    pub fn goals(&self) -> &[GoalRecord] {
        &self.goals
    }

    pub fn server(&self) -> &ReactiveServer {
        &self.server
    }

    pub fn server_mut(&mut self) -> &mut ReactiveServer {
        &mut self.server
    }

    pub fn last_answer(&self) -> Option<&Answer> {
        self.last_answer.as_ref()
    }

    pub fn has_open_goals(&self) -> bool {
        self.goals.iter().any(|g| !g.status.is_terminal())
    }

    pub fn has_queued_events(&self) -> bool {
        !self.state.queued.is_empty()
    }

    fn record(&self, id: GoalId) -> Result<&GoalRecord, ControlError> {
        self.goals
            .iter()
            .find(|g| g.id == id)
            .ok_or(ControlError::UnknownGoal(id))
    }

    fn record_mut(&mut self, id: GoalId) -> &mut GoalRecord {
        self.goals
            .iter_mut()
            .find(|g| g.id == id)
            .expect("known goal")
    }

    /// Queues a `goal(From,To,Package)` request for the next cycle.
    pub fn submit_goal(&mut self, goal: Term) -> Result<GoalId, ControlError> {
        let package = match goal_parts(&goal) {
            Some((_, _, p)) if goal.is_ground() => p.clone(),
            _ => return Err(ControlError::BadGoal(goal.to_string())),
        };
        if self
            .goals
            .iter()
            .any(|g| g.package == package && !g.status.is_terminal())
        {
            return Err(ControlError::DuplicatePackage(package.to_string()));
        }
        let id = GoalId(self.goals.len() as u64 + 1);
        self.goals.push(GoalRecord {
            id,
            goal,
            package,
            submit_cycle: self.state.cycle,
            status: GoalStatus::Pending,
            history: vec![GoalStatus::Pending],
            cancelled_at: None,
        });
        self.state.queued.push(ClientEvent::Goal(id));
        Ok(id)
    }

    /// Queues a cancellation for the next cycle.
    pub fn cancel_goal(&mut self, id: GoalId) -> Result<(), ControlError> {
        let rec = self.record(id)?;
        if rec.status.is_terminal() {
            return Err(ControlError::Finished(id));
        }
        if !self.state.queued.contains(&ClientEvent::Cancel(id)) && rec.cancelled_at.is_none() {
            self.state.queued.push(ClientEvent::Cancel(id));
        }
        Ok(())
    }

    pub fn goal_status(&self, id: GoalId) -> Result<GoalStatus, ControlError> {
        Ok(self.record(id)?.status)
    }

    /// The update for the current cycle: commit constraints for actions
    /// whose result arrived, queued requests, then the results themselves.
    pub fn build_update(&self) -> OnlineUpdate {
        let c = self.state.cycle;
        let mut update = OnlineUpdate::new(c);
        for ret in &self.state.results {
            let action = Atom::new(
                "_action",
                vec![
                    ret.args[0].clone(),
                    self.dispatched_param(ret),
                    ret.args[2].clone(),
                ],
            );
            update.items.push(OnlineItem::persistent(commit(&action)));
        }
        for ev in &self.state.queued {
            let term = match ev {
                ClientEvent::Goal(id) => self.record(*id).expect("queued goal").goal.clone(),
                ClientEvent::Cancel(id) => Term::func(
                    "cancel",
                    vec![self.record(*id).expect("queued goal").package.clone()],
                ),
                ClientEvent::Withdraw(p) => Term::func("cancel", vec![p.clone()]),
            };
            update.items.push(OnlineItem::persistent(request(term, c)));
        }
        for ret in &self.state.results {
            update
                .items
                .push(OnlineItem::persistent(Rule::fact(ret.clone())));
        }
        update
    }

    /// The parameter of the committed action a `_return` answers.
    fn dispatched_param(&self, ret: &Atom) -> Term {
        self.state
            .committed
            .iter()
            .rev()
            .find(|a| a.args[0] == ret.args[0] && a.args[2] == ret.args[2])
            .map(|a| a.args[1].clone())
            .unwrap_or_else(|| ret.args[1].clone())
    }

    fn set_status(&mut self, id: GoalId, to: GoalStatus, changes: &mut Vec<(GoalId, GoalStatus)>) {
        self.record_mut(id).set(to);
        changes.push((id, to));
    }

    /// Runs one full cycle, calling `pump` until the dispatched action's
    /// result is back.
    pub fn run_cycle(&mut self, pump: &mut dyn Pump) -> Result<CycleReport, ControlError> {
        let cycle = self.state.cycle;
        let update = self.build_update();
        let mut changes = Vec::new();

        self.server.feed(&update)?;
        let queued = std::mem::take(&mut self.state.queued);
        self.state.results.clear();
        for ev in &queued {
            match ev {
                ClientEvent::Goal(id) => self.set_status(*id, GoalStatus::Active, &mut changes),
                ClientEvent::Cancel(id) => {
                    let picked = self.picked.contains(&self.record(*id)?.package);
                    self.record_mut(*id).cancelled_at = Some(cycle);
                    if !picked {
                        self.set_status(*id, GoalStatus::Preempted, &mut changes);
                    }
                }
                ClientEvent::Withdraw(_) => {}
            }
        }

        let answer = match self.server.get_answer() {
            Ok(a) => a,
            Err(ServerError::Incremental(IncrementalError::Unsatisfiable { .. })) => {
                let open: Vec<GoalId> = self
                    .goals
                    .iter()
                    .filter(|g| !g.status.is_terminal())
                    .map(|g| g.id)
                    .collect();
                for id in open {
                    self.set_status(id, GoalStatus::Aborted, &mut changes);
                    let p = self.record(id)?.package.clone();
                    self.state.queued.push(ClientEvent::Withdraw(p));
                }
                self.last_answer = None;
                for _ in 0..self.config.idle_polls {
                    pump.pump();
                }
                self.state.cycle += 1;
                return Ok(CycleReport {
                    cycle,
                    update,
                    lower_bound: cycle,
                    horizon: None,
                    plan: Vec::new(),
                    action: None,
                    result: None,
                    status_changes: changes,
                });
            }
            Err(e) => return Err(e.into()),
        };
        let plan = plan_of(&answer.model);
        let action = extract_action(&answer.model, cycle)?;
        self.last_answer = Some(answer.clone());

        let mut result = None;
        match &action {
            Some(call) => {
                let ret = self.dispatch(call, pump);
                self.absorb_result(call, &ret, &mut changes);
                self.state.committed.push(call.to_atom());
                self.state.results.push(ret.clone());
                result = Some(ret);
            }
            None => {
                for _ in 0..self.config.idle_polls {
                    pump.pump();
                }
            }
        }
        self.state.cycle += 1;
        Ok(CycleReport {
            cycle,
            update,
            lower_bound: cycle,
            horizon: Some(answer.horizon),
            plan,
            action,
            result,
            status_changes: changes,
        })
    }

    /// Publishes the action and waits for the matching `_return`.
    fn dispatch(&mut self, call: &ActionCall, pump: &mut dyn Pump) -> Atom {
        self.outbox.publish(call.message());
        for _ in 0..self.config.max_polls {
            pump.pump();
            for msg in self.inbox.drain() {
                for fact in &msg.facts {
                    if let Some(ret) = parse_return(fact) {
                        if ret.args[0] == Term::sym(call.interface.clone())
                            && ret.args[2] == Term::Int(call.cycle)
                        {
                            return ret;
                        }
                    }
                }
            }
        }
        Atom::new(
            RETURN_PRED,
            vec![
                Term::sym(call.interface.clone()),
                Term::func("failure", vec![Term::sym("timeout")]),
                Term::Int(call.cycle),
            ],
        )
    }

    fn absorb_result(
        &mut self,
        call: &ActionCall,
        ret: &Atom,
        changes: &mut Vec<(GoalId, GoalStatus)>,
    ) {
        let failed = matches!(&ret.args[1], Term::Func(f, _) if f == "failure");
        if failed {
            return;
        }
        let package = &call.param;
        match call.interface.as_str() {
            "pickup" => {
                self.picked.insert(package.clone());
            }
            "deliver" => {
                self.picked.remove(package);
                let open = self
                    .goals
                    .iter()
                    .find(|g| &g.package == package && g.status == GoalStatus::Active)
                    .map(|g| (g.id, g.cancelled_at.is_some()));
                if let Some((id, cancelled)) = open {
                    let to = if cancelled {
                        GoalStatus::Preempted
                    } else {
                        GoalStatus::Succeeded
                    };
                    self.set_status(id, to, changes);
                }
            }
            _ => {}
        }
    }
}

fn parse_return(fact: &str) -> Option<Atom> {
    let atom = parse_atom(fact).ok()?;
    if atom.pred != RETURN_PRED || atom.arity() != 3 || !atom.is_ground() {
        return None;
    }
    matches!(atom.args[0], Term::Sym(_)).then_some(())?;
    matches!(atom.args[2], Term::Int(_)).then_some(atom)
}
