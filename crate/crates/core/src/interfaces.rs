//! Adapters between planner facts and the robot's action servers.
//!
//! Every adapter reads every message on the outbound topic, keeps those
//! addressed to its own interface name, turns the `_action` fact into an
//! action goal and reports the outcome as a `_return` fact on the inbound
//! topic.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{
    Action, ActionClient, Bus, BusError, GoalHandle, GoalState, InterfaceMsg, Publisher,
    Subscription,
};
use crate::lp::{Atom, Term};
use crate::world::{Deliver, Failure, HandleResult, NavResult, Navigate, Pickup};

/// Predicates accepted as action commands.
pub const ACTION_PREDS: [&str; 2] = ["_action", "_action_lib"];
pub const RETURN_PRED: &str = "_return";

/// Largest distance in meters at which a pose still counts as a tag.
pub const TAG_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("tag file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unknown adapter kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Location labels and their poses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagTable {
    tags: BTreeMap<String, Pose>,
}

impl TagTable {
    pub fn load(path: &Path) -> Result<Self, InterfaceError> {
        std::fs::read_to_string(path)
            .map_err(|source| InterfaceError::Io {
                path: path.display().to_string(),
                source,
            })?
            .parse()
    }

    pub fn insert(&mut self, label: impl Into<String>, pose: Pose) {
        self.tags.insert(label.into(), pose);
    }

    pub fn pose(&self, label: &str) -> Option<Pose> {
        self.tags.get(label).copied()
    }

    /// The tag closest to `pose`, if within [`TAG_TOLERANCE`].
    pub fn label_near(&self, pose: &Pose) -> Option<String> {
        let mut best: Option<(&String, f64)> = None;
        for (label, p) in &self.tags {
            let d = p.distance(pose);
            if d <= TAG_TOLERANCE && best.is_none_or(|(_, b)| d < b) {
                best = Some((label, d));
            }
        }
        best.map(|(l, _)| l.clone())
    }

    /// Labels from `labels` that have no tag.
    pub fn missing<'a>(&self, labels: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        labels
            .into_iter()
            .filter(|l| !self.tags.contains_key(*l))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

impl FromStr for TagTable {
    type Err = InterfaceError;

    /// One `label x y theta` per line; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, InterfaceError> {
        let mut table = TagTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| InterfaceError::Parse {
                line: i + 1,
                message,
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != 4 {
                return Err(err("expected `label x y theta`".into()));
            }
            let num = |w: &str| {
                w.parse::<f64>()
                    .map_err(|_| err(format!("`{w}` is not a number")))
            };
            let pose = Pose {
                x: num(words[1])?,
                y: num(words[2])?,
                theta: num(words[3])?,
            };
            if table.tags.insert(words[0].to_string(), pose).is_some() {
                return Err(err(format!("duplicate label `{}`", words[0])));
            }
        }
        Ok(table)
    }
}

/// An `_action(Interface, Param, Cycle)` fact split into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCall {
    pub interface: String,
    pub param: Term,
    pub cycle: i64,
}

impl ActionCall {
    pub fn from_atom(atom: &Atom) -> Option<ActionCall> {
        if !ACTION_PREDS.contains(&atom.pred.as_str()) || atom.arity() != 3 {
            return None;
        }
        match (&atom.args[0], &atom.args[2]) {
            (Term::Sym(name), Term::Int(cycle)) => Some(ActionCall {
                interface: name.clone(),
                param: atom.args[1].clone(),
                cycle: *cycle,
            }),
            _ => None,
        }
    }

    pub fn to_atom(&self) -> Atom {
        Atom::new(
            "_action",
            vec![
                Term::sym(self.interface.clone()),
                self.param.clone(),
                Term::Int(self.cycle),
            ],
        )
    }

    /// The outbound message carrying this call.
    pub fn message(&self) -> InterfaceMsg {
        InterfaceMsg::new(self.interface.clone(), vec![self.to_atom().to_string()])
    }

    /// `_return(A, V, C)`: `V` is the parameter on success and
    /// `failure(Reason)` otherwise.
    pub fn report(&self, failure: Option<&Failure>) -> InterfaceMsg {
        let value = match failure {
            None => self.param.clone(),
            Some(f) => Term::func("failure", vec![f.to_term()]),
        };
        let ret = Atom::new(
            RETURN_PRED,
            vec![
                Term::sym(self.interface.clone()),
                value,
                Term::Int(self.cycle),
            ],
        );
        InterfaceMsg::new(self.interface.clone(), vec![ret.to_string()])
    }
}

/// Text form of a term as used for labels and package ids.
fn plain(term: &Term) -> String {
    term.to_string()
}

/// One interface node.
pub trait Adapter: Send {
    fn name(&self) -> &str;

    /// Handles one outbound message. Messages for other interfaces are
    /// ignored. Returns reports that are known immediately.
    fn dispatch(&mut self, msg: &InterfaceMsg) -> Vec<InterfaceMsg>;

    /// Reports for actions that have finished since the last poll.
    fn poll(&mut self) -> Vec<InterfaceMsg>;

    /// Whether an action is still outstanding.
    fn busy(&self) -> bool;
}

fn calls_for(name: &str, msg: &InterfaceMsg) -> Vec<ActionCall> {
    if msg.interface != name {
        return Vec::new();
    }
    msg.facts
        .iter()
        .filter_map(|f| crate::lp::parse_atom(f).ok())
        .filter_map(|a| ActionCall::from_atom(&a))
        .filter(|c| c.interface == name)
        .collect()
}

fn outcome_failure(state: GoalState, failure: Option<Failure>) -> Option<Failure> {
    match state {
        GoalState::Succeeded => None,
        GoalState::Preempted => Some(failure.unwrap_or(Failure::Preempted)),
        _ => Some(failure.unwrap_or(Failure::Unreachable)),
    }
}

/// Translates location labels to poses for the navigation server.
pub struct MoveBaseAdapter {
    name: String,
    client: ActionClient<Navigate>,
    tags: TagTable,
    pending: Vec<(ActionCall, GoalHandle<Navigate>)>,
}

impl MoveBaseAdapter {
    pub fn new(name: &str, server: &str, bus: &Bus, tags: TagTable) -> Result<Self, BusError> {
        Ok(MoveBaseAdapter {
            name: name.to_string(),
            client: bus.action_client(server)?,
            tags,
            pending: Vec::new(),
        })
    }
}

impl Adapter for MoveBaseAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn dispatch(&mut self, msg: &InterfaceMsg) -> Vec<InterfaceMsg> {
        let mut reports = Vec::new();
        for call in calls_for(&self.name, msg) {
            match self.tags.pose(&plain(&call.param)) {
                Some(pose) => {
                    let handle = self.client.send_goal(pose);
                    self.pending.push((call, handle));
                }
                None => reports.push(call.report(Some(&Failure::UnknownLabel))),
            }
        }
        reports
    }

    fn poll(&mut self) -> Vec<InterfaceMsg> {
        let mut reports = Vec::new();
        self.pending
            .retain(|(call, handle)| match handle.take_result() {
                Some(out) => {
                    let failure = out.result.and_then(|r: NavResult| r.failure);
                    reports.push(call.report(outcome_failure(out.state, failure).as_ref()));
                    false
                }
                None => true,
            });
        reports
    }

    fn busy(&self) -> bool {
        !self.pending.is_empty()
    }
}

/// Passes the package id straight through to a pickup or deliver server.
pub struct PackageAdapter<A: Action<Goal = String, Result = HandleResult> + Send> {
    name: String,
    client: ActionClient<A>,
    pending: Vec<(ActionCall, GoalHandle<A>)>,
}

impl<A: Action<Goal = String, Result = HandleResult> + Send> PackageAdapter<A> {
    pub fn new(name: &str, server: &str, bus: &Bus) -> Result<Self, BusError> {
        Ok(PackageAdapter {
            name: name.to_string(),
            client: bus.action_client(server)?,
            pending: Vec::new(),
        })
    }
}

impl<A: Action<Goal = String, Result = HandleResult> + Send> Adapter for PackageAdapter<A> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dispatch(&mut self, msg: &InterfaceMsg) -> Vec<InterfaceMsg> {
        for call in calls_for(&self.name, msg) {
            let handle = self.client.send_goal(plain(&call.param));
            self.pending.push((call, handle));
        }
        Vec::new()
    }

    fn poll(&mut self) -> Vec<InterfaceMsg> {
        let mut reports = Vec::new();
        self.pending
            .retain(|(call, handle)| match handle.take_result() {
                Some(out) => {
                    let failure = out.result.and_then(|r| r.failure);
                    reports.push(call.report(outcome_failure(out.state, failure).as_ref()));
                    false
                }
                None => true,
            });
        reports
    }

    fn busy(&self) -> bool {
        !self.pending.is_empty()
    }
}

/// Registry entry from the run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct AdapterSpec {
    /// Interface name used in `_action` facts.
    pub name: String,
    /// `move_base`, `pickup` or `deliver`.
    pub kind: String,
    /// Action server to talk to; defaults to the kind's standard server.
    #[serde(default)]
    pub server: Option<String>,
}

impl AdapterSpec {
    pub fn new(name: &str, kind: &str) -> Self {
        AdapterSpec {
            name: name.to_string(),
            kind: kind.to_string(),
            server: None,
        }
    }

    /// The three adapters of the delivery robot.
    pub fn defaults() -> Vec<AdapterSpec> {
        vec![
            AdapterSpec::new("move_base", "move_base"),
            AdapterSpec::new("pickup", "pickup"),
            AdapterSpec::new("deliver", "deliver"),
        ]
    }

    pub fn build(&self, bus: &Bus, tags: &TagTable) -> Result<Box<dyn Adapter>, InterfaceError> {
        use crate::world::{DELIVER_SERVER, NAV_SERVER, PICKUP_SERVER};
        let server = |default: &str| self.server.clone().unwrap_or_else(|| default.to_string());
        Ok(match self.kind.as_str() {
            "move_base" => Box::new(MoveBaseAdapter::new(
                &self.name,
                &server(NAV_SERVER),
                bus,
                tags.clone(),
            )?),
            "pickup" => Box::new(PackageAdapter::<Pickup>::new(
                &self.name,
                &server(PICKUP_SERVER),
                bus,
            )?),
            "deliver" => Box::new(PackageAdapter::<Deliver>::new(
                &self.name,
                &server(DELIVER_SERVER),
                bus,
            )?),
            other => return Err(InterfaceError::UnknownKind(other.to_string())),
        })
    }
}

/// An adapter wired to its own subscription of the outbound topic and a
/// publisher on the inbound topic.
pub struct AdapterNode {
    adapter: Box<dyn Adapter>,
    inbox: Subscription<InterfaceMsg>,
    outbox: Publisher<InterfaceMsg>,
}

impl AdapterNode {
    pub fn new(
        adapter: Box<dyn Adapter>,
        bus: &Bus,
        out_topic: &str,
        in_topic: &str,
    ) -> Result<Self, BusError> {
        Ok(AdapterNode {
            adapter,
            inbox: bus.subscribe(out_topic)?,
            outbox: bus.advertise(in_topic)?,
        })
    }

    pub fn name(&self) -> &str {
        self.adapter.name()
    }

    pub fn busy(&self) -> bool {
        self.adapter.busy()
    }

    /// Handles queued commands and publishes finished results. Returns the
    /// number of reports published.
    pub fn spin_once(&mut self) -> usize {
        let mut reports = Vec::new();
        for msg in self.inbox.drain() {
            reports.extend(self.adapter.dispatch(&msg));
        }
        reports.extend(self.adapter.poll());
        let n = reports.len();
        for r in reports {
            self.outbox.publish(r);
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::parse_atom;
    use crate::world::{World, WorldConfig};

    fn tags() -> TagTable {
        "# label x y theta\noffice1 0 0 0\noffice2 5 0 1.57\noffice3 10 0 0\n"
            .parse()
            .unwrap()
    }

    fn setup() -> (
        Bus,
        World,
        Vec<AdapterNode>,
        Subscription<InterfaceMsg>,
        Publisher<InterfaceMsg>,
    ) {
        let bus = Bus::new();
        let cfg: WorldConfig = "locations: office1 office2 office3\nedges:\n office1 office2\n office2 office3\nrobot: office1\npackages:\n 2 office1"
            .parse()
            .unwrap();
        let world = World::new(cfg, tags(), &bus).unwrap();
        let out = bus.advertise::<InterfaceMsg>("out").unwrap();
        let nodes = AdapterSpec::defaults()
            .iter()
            .map(|s| AdapterNode::new(s.build(&bus, &tags()).unwrap(), &bus, "out", "in").unwrap())
            .collect();
        let inbound = bus.subscribe::<InterfaceMsg>("in").unwrap();
        (bus, world, nodes, inbound, out)
    }

    fn pump(
        world: &mut World,
        nodes: &mut [AdapterNode],
        inbound: &Subscription<InterfaceMsg>,
    ) -> Vec<String> {
        for _ in 0..50 {
            for n in nodes.iter_mut() {
                n.spin_once();
            }
            let got = inbound.drain();
            if !got.is_empty() {
                return got.into_iter().flat_map(|m| m.facts).collect();
            }
            world.step();
        }
        panic!("no report");
    }

    #[test]
    fn tag_lookup() {
        let t = tags();
        assert_eq!(
            t.label_near(&Pose {
                x: 5.3,
                y: 0.2,
                theta: 0.0
            })
            .as_deref(),
            Some("office2")
        );
        assert_eq!(
            t.label_near(&Pose {
                x: 7.5,
                y: 0.0,
                theta: 0.0
            }),
            None
        );
        assert!("a 1 2".parse::<TagTable>().is_err());
        assert!("a 1 2 3\na 1 2 3".parse::<TagTable>().is_err());
        assert_eq!(
            t.missing(&["office4".to_string(), "office1".to_string()]),
            ["office4"]
        );
    }

    #[test]
    fn move_reports_reached_label() {
        let (_bus, mut world, mut nodes, inbound, out) = setup();
        let call =
            ActionCall::from_atom(&parse_atom("_action(move_base,office2,1)").unwrap()).unwrap();
        out.publish(call.message());
        assert_eq!(
            pump(&mut world, &mut nodes, &inbound),
            ["_return(move_base,office2,1)"]
        );
        assert_eq!(world.state().robot, "office2");
    }

    #[test]
    fn unknown_label_fails_immediately() {
        let (_bus, mut world, mut nodes, inbound, out) = setup();
        out.publish(InterfaceMsg::new(
            "move_base",
            vec!["_action(move_base,attic,7)".into()],
        ));
        assert_eq!(
            pump(&mut world, &mut nodes, &inbound),
            ["_return(move_base,failure(unknown_label),7)"]
        );
    }

    #[test]
    fn other_interfaces_are_ignored() {
        let (_bus, mut world, mut nodes, inbound, out) = setup();
        out.publish(InterfaceMsg::new(
            "pickup",
            vec!["_action(pickup,2,4)".into()],
        ));
        let got = pump(&mut world, &mut nodes, &inbound);
        assert_eq!(got, ["_return(pickup,2,4)"]);
        assert!(nodes.iter().all(|n| !n.busy()));
    }

    #[test]
    fn synonym_predicate_is_accepted() {
        let a = parse_atom("_action_lib(deliver,1,5)").unwrap();
        let c = ActionCall::from_atom(&a).unwrap();
        assert_eq!(c.to_atom().to_string(), "_action(deliver,1,5)");
        assert!(ActionCall::from_atom(&parse_atom("_action(deliver,1)").unwrap()).is_none());
    }

    #[test]
    fn registry_rejects_unknown_kind() {
        let bus = Bus::new();
        assert!(matches!(
            AdapterSpec::new("x", "teleport").build(&bus, &tags()),
            Err(InterfaceError::UnknownKind(_))
        ));
    }
}
