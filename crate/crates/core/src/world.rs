//! Topological office world with navigation, pickup and delivery servers.
//!
//! Time advances in ticks, driven by whoever owns the [`World`]. Each tick
//! every server first looks for a new goal and then makes progress on its
//! current one.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::bus::{Action, ActionServer, Bus, BusError, ServerGoal};
use crate::interfaces::{Pose, TagTable};
use crate::lp::Term;

pub const DEFAULT_CAPACITY: usize = 3;
pub const DEFAULT_RECOVERY: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("location graph is not connected: {0} cannot be reached")]
    Disconnected(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Why an action did not succeed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Failure {
    Blocked(String, String),
    UnknownLabel,
    Preempted,
    Unreachable,
    WrongLocation,
    CapacityFull,
    NotCarried,
    Timeout,
}

impl Failure {
    pub fn to_term(&self) -> Term {
        match self {
            Failure::Blocked(a, b) => {
                Term::func("blocked", vec![Term::sym(a.clone()), Term::sym(b.clone())])
            }
            Failure::UnknownLabel => Term::sym("unknown_label"),
            Failure::Preempted => Term::sym("preempted"),
            Failure::Unreachable => Term::sym("unreachable"),
            Failure::WrongLocation => Term::sym("wrong_location"),
            Failure::CapacityFull => Term::sym("capacity_full"),
            Failure::NotCarried => Term::sym("not_carried"),
            Failure::Timeout => Term::sym("timeout"),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub duration: u32,
}

impl Edge {
    fn joins(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// An edge that is impassable during `[from, to)`; `None` bounds are open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blockage {
    pub a: String,
    pub b: String,
    pub from: Option<u64>,
    pub to: Option<u64>,
}

impl Blockage {
    fn active(&self, tick: u64) -> bool {
        self.from.is_none_or(|f| tick >= f) && self.to.is_none_or(|t| tick < t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldConfig {
    pub locations: Vec<String>,
    pub edges: Vec<Edge>,
    pub blocked: Vec<Blockage>,
    pub robot: String,
    pub capacity: usize,
    /// Initial package positions.
    pub packages: Vec<(String, String)>,
    /// Ticks the navigation server waits before retrying a blocked edge.
    pub recovery: u32,
}

impl WorldConfig {
    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    /// Map facts for the planner: `location/1`, `edge/2`, `robot_start/1`.
    pub fn facts(&self) -> String {
        let mut out = String::new();
        for l in &self.locations {
            out.push_str(&format!("location({l}).\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("edge({},{}).\n", e.a, e.b));
        }
        out.push_str(&format!("robot_start({}).\n", self.robot));
        out
    }

    pub fn has_location(&self, label: &str) -> bool {
        self.locations.iter().any(|l| l == label)
    }

    fn neighbours(&self, at: &str) -> Vec<(&str, u32)> {
        let mut v: Vec<(&str, u32)> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == at {
                    Some((e.b.as_str(), e.duration))
                } else if e.b == at {
                    Some((e.a.as_str(), e.duration))
                } else {
                    None
                }
            })
            .collect();
        v.sort();
        v
    }

    /// Cheapest path by total duration, as the list of locations after
    /// `from`. Ties go to the lexicographically smaller predecessor.
    pub fn shortest_path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let mut dist: BTreeMap<&str, u64> = BTreeMap::new();
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(from, 0);
        heap.push(Reverse((0u64, from)));
        while let Some(Reverse((d, node))) = heap.pop() {
            if dist.get(node).is_some_and(|&best| d > best) {
                continue;
            }
            if node == to {
                break;
            }
            for (next, w) in self.neighbours(node) {
                let nd = d + u64::from(w);
                if dist.get(next).is_none_or(|&best| nd < best) {
                    dist.insert(next, nd);
                    prev.insert(next, node);
                    heap.push(Reverse((nd, next)));
                }
            }
        }
        if !dist.contains_key(to) {
            return None;
        }
        let mut path = Vec::new();
        let mut cur = to;
        while cur != from {
            path.push(cur.to_string());
            cur = prev[cur];
        }
        path.reverse();
        Some(path)
    }

    fn validate(&self) -> Result<(), WorldError> {
        let known = |l: &str| {
            if self.has_location(l) {
                Ok(())
            } else {
                Err(WorldError::UnknownLocation(l.to_string()))
            }
        };
        for e in &self.edges {
            known(&e.a)?;
            known(&e.b)?;
        }
        for b in &self.blocked {
            known(&b.a)?;
            known(&b.b)?;
        }
        known(&self.robot)?;
        for (_, l) in &self.packages {
            known(l)?;
        }
        for l in &self.locations {
            if l != &self.robot && self.shortest_path(&self.robot, l).is_none() {
                return Err(WorldError::Disconnected(l.clone()));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for WorldConfig {
    type Err = WorldError;

    /// Sections `locations:`, `edges:`, `blocked:`, `robot:`, `capacity:`,
    /// `packages:` and `recovery:`; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, WorldError> {
        let mut cfg = WorldConfig {
            locations: Vec::new(),
            edges: Vec::new(),
            blocked: Vec::new(),
            robot: String::new(),
            capacity: DEFAULT_CAPACITY,
            packages: Vec::new(),
            recovery: DEFAULT_RECOVERY,
        };
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| WorldError::Parse {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let content = match line.split_once(':') {
                Some((head, rest)) if !head.contains(char::is_whitespace) => {
                    section = head.to_string();
                    rest.trim()
                }
                _ => line,
            };
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let number = |w: &str| {
                w.parse::<u64>()
                    .map_err(|_| err(format!("expected a number, found `{w}`")))
            };
            match section.as_str() {
                "locations" => cfg.locations.extend(words.iter().map(|w| w.to_string())),
                "edges" => {
                    let duration = match words.len() {
                        2 => 1,
                        3 => number(words[2])? as u32,
                        _ => return Err(err("edge needs `from to [duration]`".into())),
                    };
                    cfg.edges.push(Edge {
                        a: words[0].into(),
                        b: words[1].into(),
                        duration: duration.max(1),
                    });
                }
                "blocked" => {
                    let (from, to) = match words.len() {
                        2 => (None, None),
                        3 => (Some(number(words[2])?), None),
                        4 => (Some(number(words[2])?), Some(number(words[3])?)),
                        _ => return Err(err("blockage needs `a b [from [to]]`".into())),
                    };
                    cfg.blocked.push(Blockage {
                        a: words[0].into(),
                        b: words[1].into(),
                        from,
                        to,
                    });
                }
                "robot" => cfg.robot = words[0].to_string(),
                "capacity" => cfg.capacity = number(words[0])? as usize,
                "recovery" => cfg.recovery = number(words[0])? as u32,
                "packages" => {
                    if words.len() != 2 {
                        return Err(err("package needs `id location`".into()));
                    }
                    cfg.packages.push((words[0].into(), words[1].into()));
                }
                "" => return Err(err("content before the first section".into())),
                other => return Err(err(format!("unknown section `{other}`"))),
            }
        }
        if cfg.robot.is_empty() {
            return Err(WorldError::Parse {
                line: 0,
                message: "missing `robot:`".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Place {
    At(String),
    Carried,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    pub robot: String,
    pub packages: BTreeMap<String, Place>,
    pub tick: u64,
}

impl WorldState {
    pub fn carried(&self) -> usize {
        self.packages
            .values()
            .filter(|p| **p == Place::Carried)
            .count()
    }
}

/// Navigation goal: a pose that should coincide with a tagged location.
pub struct Navigate;

#[derive(Debug, Clone, PartialEq)]
pub struct NavResult {
    /// Where the robot ended up.
    pub location: String,
    pub failure: Option<Failure>,
}

impl Action for Navigate {
    type Goal = Pose;
    /// The location just reached.
    type Feedback = String;
    type Result = NavResult;
}

/// Package handling outcome; `None` is success.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleResult {
    pub failure: Option<Failure>,
}

pub struct Pickup;

impl Action for Pickup {
    type Goal = String;
    type Feedback = ();
    type Result = HandleResult;
}

pub struct Deliver;

impl Action for Deliver {
    type Goal = String;
    type Feedback = ();
    type Result = HandleResult;
}

pub const NAV_SERVER: &str = "move_base";
pub const PICKUP_SERVER: &str = "pickup";
pub const DELIVER_SERVER: &str = "deliver";

struct NavJob {
    goal: ServerGoal<Navigate>,
    path: Vec<String>,
    progress: u32,
    /// Ticks left to wait before retrying a blocked edge.
    recovering: Option<u32>,
    retried: bool,
}

/// The simulated robot and its three action servers.
pub struct World {
    config: WorldConfig,
    tags: TagTable,
    state: WorldState,
    dynamic_blocks: BTreeSet<(String, String)>,
    nav: ActionServer<Navigate>,
    pickup: ActionServer<Pickup>,
    deliver: ActionServer<Deliver>,
    nav_job: Option<NavJob>,
    pickup_job: Option<ServerGoal<Pickup>>,
    deliver_job: Option<ServerGoal<Deliver>>,
    max_carried: usize,
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl World {
    /// Registers the three servers on `bus`.
    pub fn new(config: WorldConfig, tags: TagTable, bus: &Bus) -> Result<Self, WorldError> {
        let packages = config
            .packages
            .iter()
            .map(|(id, l)| (id.clone(), Place::At(l.clone())))
            .collect();
        let state = WorldState {
            robot: config.robot.clone(),
            packages,
            tick: 0,
        };
        Ok(World {
            nav: bus.register_action(NAV_SERVER)?,
            pickup: bus.register_action(PICKUP_SERVER)?,
            deliver: bus.register_action(DELIVER_SERVER)?,
            config,
            tags,
            state,
            dynamic_blocks: BTreeSet::new(),
            nav_job: None,
            pickup_job: None,
            deliver_job: None,
            max_carried: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Most packages carried at once so far.
    pub fn max_carried(&self) -> usize {
        self.max_carried
    }

    /// Places a package at `location` unless it already exists.
    pub fn ensure_package(&mut self, id: &str, location: &str) -> Result<(), WorldError> {
        if !self.config.has_location(location) {
            return Err(WorldError::UnknownLocation(location.to_string()));
        }
        self.state
            .packages
            .entry(id.to_string())
            .or_insert_with(|| Place::At(location.to_string()));
        Ok(())
    }

    pub fn block(&mut self, a: &str, b: &str) {
        self.dynamic_blocks.insert(edge_key(a, b));
    }

    pub fn unblock(&mut self, a: &str, b: &str) {
        self.dynamic_blocks.remove(&edge_key(a, b));
    }

    pub fn is_blocked(&self, a: &str, b: &str) -> bool {
        self.dynamic_blocks.contains(&edge_key(a, b))
            || self.config.blocked.iter().any(|bl| {
                ((bl.a == a && bl.b == b) || (bl.a == b && bl.b == a)) && bl.active(self.state.tick)
            })
    }

    /// Whether any server still has work in hand.
    pub fn busy(&self) -> bool {
        self.nav_job.is_some() || self.pickup_job.is_some() || self.deliver_job.is_some()
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) {
        self.step_nav();
        self.step_pickup();
        self.step_deliver();
        self.state.tick += 1;
        self.max_carried = self.max_carried.max(self.state.carried());
        debug_assert!(self.state.carried() <= self.config.capacity);
    }

    fn nav_result(&self, failure: Option<Failure>) -> NavResult {
        NavResult {
            location: self.state.robot.clone(),
            failure,
        }
    }

    fn step_nav(&mut self) {
        if let Some(goal) = self.nav.take_goal() {
            if let Some(old) = self.nav_job.take() {
                let _ = old
                    .goal
                    .preempted(self.nav_result(Some(Failure::Preempted)));
            }
            let _ = goal.accept();
            let target = self
                .tags
                .label_near(goal.goal())
                .filter(|l| self.config.has_location(l));
            match target {
                None => {
                    let _ = goal.abort(self.nav_result(Some(Failure::UnknownLabel)));
                }
                Some(label) => match self.config.shortest_path(&self.state.robot, &label) {
                    None => {
                        let _ = goal.abort(self.nav_result(Some(Failure::Unreachable)));
                    }
                    Some(path) => {
                        self.nav_job = Some(NavJob {
                            goal,
                            path,
                            progress: 0,
                            recovering: None,
                            retried: false,
                        })
                    }
                },
            }
        }
        let Some(mut job) = self.nav_job.take() else {
            return;
        };
        if job.goal.cancel_requested() {
            let _ = job
                .goal
                .preempted(self.nav_result(Some(Failure::Preempted)));
            return;
        }
        let Some(next) = job.path.first().cloned() else {
            let _ = job.goal.succeed(self.nav_result(None));
            return;
        };
        let here = self.state.robot.clone();
        if let Some(left) = job.recovering {
            if left > 0 {
                job.recovering = Some(left - 1);
                self.nav_job = Some(job);
                return;
            }
            job.recovering = None;
        }
        if self.is_blocked(&here, &next) {
            if job.retried {
                let _ = job
                    .goal
                    .abort(self.nav_result(Some(Failure::Blocked(here, next))));
            } else {
                job.retried = true;
                job.recovering = Some(self.config.recovery.saturating_sub(1));
                self.nav_job = Some(job);
            }
            return;
        }
        let duration = self
            .config
            .edges
            .iter()
            .find(|e| e.joins(&here, &next))
            .map_or(1, |e| e.duration);
        job.progress += 1;
        if job.progress >= duration {
            self.state.robot = next.clone();
            job.path.remove(0);
            job.progress = 0;
            job.goal.publish_feedback(next);
            if job.path.is_empty() {
                let _ = job.goal.succeed(self.nav_result(None));
                return;
            }
        }
        self.nav_job = Some(job);
    }

    fn step_pickup(&mut self) {
        if let Some(goal) = self.pickup.take_goal() {
            if let Some(old) = self.pickup_job.take() {
                let _ = old.preempted(HandleResult {
                    failure: Some(Failure::Preempted),
                });
            }
            let _ = goal.accept();
            self.pickup_job = Some(goal);
            // Takes effect on the next tick.
            return;
        }
        let Some(job) = self.pickup_job.take() else {
            return;
        };
        if job.cancel_requested() {
            let _ = job.preempted(HandleResult {
                failure: Some(Failure::Preempted),
            });
            return;
        }
        let id = job.goal().clone();
        let failure = match self.state.packages.get(&id) {
            Some(Place::At(l)) if *l == self.state.robot => {
                if self.state.carried() >= self.config.capacity {
                    Some(Failure::CapacityFull)
                } else {
                    self.state.packages.insert(id, Place::Carried);
                    None
                }
            }
            _ => Some(Failure::WrongLocation),
        };
        let result = HandleResult { failure };
        let _ = if result.failure.is_none() {
            job.succeed(result)
        } else {
            job.abort(result)
        };
    }

    fn step_deliver(&mut self) {
        if let Some(goal) = self.deliver.take_goal() {
            if let Some(old) = self.deliver_job.take() {
                let _ = old.preempted(HandleResult {
                    failure: Some(Failure::Preempted),
                });
            }
            let _ = goal.accept();
            self.deliver_job = Some(goal);
            return;
        }
        let Some(job) = self.deliver_job.take() else {
            return;
        };
        if job.cancel_requested() {
            let _ = job.preempted(HandleResult {
                failure: Some(Failure::Preempted),
            });
            return;
        }
        let id = job.goal().clone();
        let failure = match self.state.packages.get(&id) {
            Some(Place::Carried) => {
                self.state
                    .packages
                    .insert(id, Place::At(self.state.robot.clone()));
                None
            }
            _ => Some(Failure::NotCarried),
        };
        let result = HandleResult { failure };
        let _ = if result.failure.is_none() {
            job.succeed(result)
        } else {
            job.abort(result)
        };
    }
}
