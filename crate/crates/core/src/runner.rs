//! Whole-stack runs: planner, adapters and simulated world on one bus,
//! driven by a timed scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{Bus, BusError};
use crate::incremental::{IncrementalConfig, DEFAULT_HORIZON_CAP};
use crate::interfaces::{AdapterNode, AdapterSpec, InterfaceError, Pose, TagTable};
use crate::lp::{parse_program, ParseError, Term};
use crate::taskctl::{
    ControlError, Controller, ControllerConfig, CycleReport, GoalId, GoalStatus, Pump,
    DEFAULT_MAX_POLLS, IN_TOPIC, OUT_TOPIC,
};
use crate::world::{Place, World, WorldConfig, WorldError};

pub const DEFAULT_MAX_CYCLES: usize = 50;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Program { path: String, source: ParseError },
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
    #[error("expect line {line}: {message}")]
    Expect { line: usize, message: String },
    #[error("tag table has no pose for {0}")]
    MissingTags(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

pub fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Request {
        from: String,
        to: String,
        id: String,
    },
    Cancel(String),
    Block(String, String),
    Unblock(String, String),
}

impl FromStr for Event {
    type Err = String;

    /// `request F D ID`, `cancel ID`, `block A B` or `unblock A B`.
    fn from_str(s: &str) -> Result<Self, String> {
        let w: Vec<&str> = s.split_whitespace().collect();
        let owned = |i: usize| w[i].to_string();
        match (w.first().copied(), w.len()) {
            (Some("request"), 4) => Ok(Event::Request {
                from: owned(1),
                to: owned(2),
                id: owned(3),
            }),
            (Some("cancel"), 2) => Ok(Event::Cancel(owned(1))),
            (Some("block"), 3) => Ok(Event::Block(owned(1), owned(2))),
            (Some("unblock"), 3) => Ok(Event::Unblock(owned(1), owned(2))),
            _ => Err(format!(
                "expected `request <from> <to> <id>`, `cancel <id>`, `block <a> <b>` or `unblock <a> <b>`, got `{}`",
                s.trim()
            )),
        }
    }
}

/// Events keyed by the cycle at whose start they happen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub events: Vec<(i64, Event)>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        read(path)?.parse()
    }

    pub fn last_cycle(&self) -> Option<i64> {
        self.events.last().map(|(c, _)| *c)
    }
}

impl FromStr for Scenario {
    type Err = RunError;

    /// One `at <cycle> <event>` per line, cycles non-decreasing.
    fn from_str(text: &str) -> Result<Self, RunError> {
        let mut events = Vec::new();
        let mut last = 1;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| RunError::Scenario {
                line: i + 1,
                message,
            };
            let rest = line
                .strip_prefix("at ")
                .ok_or_else(|| err("expected `at <cycle> <event>`".into()))?
                .trim_start();
            let (num, ev) = rest.split_once(' ').unwrap_or((rest, ""));
            let cycle: i64 = num
                .parse()
                .map_err(|_| err(format!("`{num}` is not a cycle number")))?;
            if cycle < last {
                return Err(err(format!("cycle {cycle} comes after cycle {last}")));
            }
            last = cycle;
            events.push((cycle, ev.parse().map_err(err)?));
        }
        Ok(Scenario { events })
    }
}

/// Expected `_action` projection of the plan per cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expectation {
    pub plans: BTreeMap<i64, Vec<String>>,
}

impl Expectation {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        read(path)?.parse()
    }

    /// First cycle whose plan differs, with a description.
    pub fn check(&self, reports: &[CycleReport]) -> Option<Mismatch> {
        for (&cycle, want) in &self.plans {
            let got = match reports.iter().find(|r| r.cycle == cycle) {
                Some(r) => plan_strings(r),
                None => {
                    return Some(Mismatch {
                        cycle,
                        expected: want.clone(),
                        found: None,
                    })
                }
            };
            let mut want_sorted = want.clone();
            want_sorted.sort_by_key(|a| (step_of(a), a.clone()));
            if got != want_sorted {
                return Some(Mismatch {
                    cycle,
                    expected: want_sorted,
                    found: Some(got),
                });
            }
        }
        None
    }
}

fn step_of(atom: &str) -> i64 {
    atom.trim_end_matches(')')
        .rsplit(',')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(i64::MAX)
}

impl FromStr for Expectation {
    type Err = RunError;

    /// One `<cycle>: <atom> <atom> ...` per line; nothing after the colon
    /// means an empty plan.
    fn from_str(text: &str) -> Result<Self, RunError> {
        let mut plans = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| RunError::Expect {
                line: i + 1,
                message,
            };
            let (num, atoms) = line
                .split_once(':')
                .ok_or_else(|| err("expected `<cycle>: <atoms>`".into()))?;
            let cycle: i64 = num
                .trim()
                .parse()
                .map_err(|_| err(format!("`{}` is not a cycle number", num.trim())))?;
            let atoms: Vec<String> = atoms.split_whitespace().map(str::to_string).collect();
            for a in &atoms {
                crate::lp::parse_atom(a).map_err(|e| err(e.to_string()))?;
            }
            if plans.insert(cycle, atoms).is_some() {
                return Err(err(format!("cycle {cycle} listed twice")));
            }
        }
        Ok(Expectation { plans })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub cycle: i64,
    pub expected: Vec<String>,
    /// `None` if the run never reached the cycle.
    pub found: Option<Vec<String>>,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.found {
            None => write!(f, "cycle {}: never reached", self.cycle),
            Some(found) => write!(
                f,
                "cycle {}: expected plan [{}], got [{}]",
                self.cycle,
                self.expected.join(" "),
                found.join(" ")
            ),
        }
    }
}

/// The world and the adapters, advanced together one tick at a time.
pub struct Simulation {
    pub world: World,
    pub nodes: Vec<AdapterNode>,
    /// Largest number of packages carried after any tick.
    pub carried_per_tick: Vec<usize>,
}

impl Simulation {
    pub fn busy(&self) -> bool {
        self.world.busy() || self.nodes.iter().any(AdapterNode::busy)
    }
}

impl Pump for Simulation {
    fn pump(&mut self) {
        for n in &mut self.nodes {
            n.spin_once();
        }
        self.world.step();
        self.carried_per_tick.push(self.world.state().carried());
        for n in &mut self.nodes {
            n.spin_once();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Human,
    Kv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(ReportFormat::Human),
            "kv" => Ok(ReportFormat::Kv),
            other => Err(format!("unknown report format `{other}`; use human or kv")),
        }
    }
}

/// Run configuration, usually read from TOML. Relative paths are taken
/// from the directory of the config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub program: PathBuf,
    pub world: PathBuf,
    #[serde(default)]
    pub tags: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub expect: Option<PathBuf>,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: i64,
    #[serde(default = "default_max_polls")]
    pub max_polls: usize,
    #[serde(default = "default_out")]
    pub out_topic: String,
    #[serde(default = "default_in")]
    pub in_topic: String,
    #[serde(default)]
    pub report_format: ReportFormat,
    #[serde(default = "AdapterSpec::defaults", rename = "adapter")]
    pub adapters: Vec<AdapterSpec>,
}

fn default_max_cycles() -> usize {
    DEFAULT_MAX_CYCLES
}
fn default_horizon_cap() -> i64 {
    DEFAULT_HORIZON_CAP
}
fn default_max_polls() -> usize {
    DEFAULT_MAX_POLLS
}
fn default_out() -> String {
    OUT_TOPIC.to_string()
}
fn default_in() -> String {
    IN_TOPIC.to_string()
}

impl RunConfig {
    pub fn new(program: impl Into<PathBuf>, world: impl Into<PathBuf>) -> Self {
        RunConfig {
            program: program.into(),
            world: world.into(),
            tags: None,
            scenario: None,
            expect: None,
            max_cycles: DEFAULT_MAX_CYCLES,
            horizon_cap: DEFAULT_HORIZON_CAP,
            max_polls: DEFAULT_MAX_POLLS,
            out_topic: OUT_TOPIC.to_string(),
            in_topic: IN_TOPIC.to_string(),
            report_format: ReportFormat::Human,
            adapters: AdapterSpec::defaults(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let mut cfg: RunConfig = toml::from_str(&read(path)?).map_err(|e| RunError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut cfg.program);
        fix(&mut cfg.world);
        for p in [&mut cfg.tags, &mut cfg.scenario, &mut cfg.expect]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }
}

/// Tags on a line ten meters apart, in location order.
pub fn line_tags(world: &WorldConfig) -> TagTable {
    let mut t = TagTable::default();
    for (i, l) in world.locations.iter().enumerate() {
        t.insert(
            l.clone(),
            Pose {
                x: 10.0 * i as f64,
                y: 0.0,
                theta: 0.0,
            },
        );
    }
    t
}

/// Everything a run needs, already loaded.
pub struct Runner {
    pub controller: Controller,
    pub sim: Simulation,
    scenario: Scenario,
    next_event: usize,
    reports: Vec<CycleReport>,
    notes: Vec<String>,
    _bus: Bus,
}

impl Runner {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, RunError> {
        let program_text = read(&cfg.program)?;
        let world = WorldConfig::load(&cfg.world)?;
        let tags = match &cfg.tags {
            Some(p) => TagTable::load(p)?,
            None => line_tags(&world),
        };
        let scenario = match &cfg.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        let controller_cfg = ControllerConfig {
            out_topic: cfg.out_topic.clone(),
            in_topic: cfg.in_topic.clone(),
            max_polls: cfg.max_polls,
            idle_polls: 1,
            incremental: IncrementalConfig {
                horizon_cap: cfg.horizon_cap,
                ..IncrementalConfig::default()
            },
        };
        Runner::new(
            &program_text,
            world,
            tags,
            scenario,
            &cfg.adapters,
            controller_cfg,
        )
        .map_err(|e| match e {
            RunError::Program { source, .. } => RunError::Program {
                path: cfg.program.display().to_string(),
                source,
            },
            e => e,
        })
    }

    /// Builds the stack. The world's map facts are appended to the
    /// program's base part.
    pub fn new(
        program_text: &str,
        world: WorldConfig,
        tags: TagTable,
        scenario: Scenario,
        adapters: &[AdapterSpec],
        config: ControllerConfig,
    ) -> Result<Self, RunError> {
        let missing = tags.missing(&world.locations);
        if !missing.is_empty() {
            return Err(RunError::MissingTags(missing.join(", ")));
        }
        let text = format!("{program_text}\n#base.\n{}", world.facts());
        let program = parse_program(&text).map_err(|source| RunError::Program {
            path: "program".into(),
            source,
        })?;
        let bus = Bus::new();
        let world = World::new(world, tags.clone(), &bus)?;
        let mut nodes = Vec::new();
        for spec in adapters {
            let adapter = spec.build(&bus, &tags)?;
            nodes.push(AdapterNode::new(
                adapter,
                &bus,
                &config.out_topic,
                &config.in_topic,
            )?);
        }
        let controller = Controller::new(program, &bus, config)?;
        Ok(Runner {
            controller,
            sim: Simulation {
                world,
                nodes,
                carried_per_tick: Vec::new(),
            },
            scenario,
            next_event: 0,
            reports: Vec::new(),
            notes: Vec::new(),
            _bus: bus,
        })
    }

    pub fn reports(&self) -> &[CycleReport] {
        &self.reports
    }

    /// Events that could not be applied, e.g. a cancel for a finished goal.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    fn goal_for(&self, package: &str) -> Option<GoalId> {
        let p = crate::lp::parse_term(package).ok()?;
        self.controller
            .goals()
            .iter()
            .rev()
            .find(|g| g.package == p)
            .map(|g| g.id)
    }

    /// Applies one event now; goals and cancels reach the planner with the
    /// next cycle.
    pub fn apply(&mut self, event: &Event) -> Result<(), RunError> {
        let cycle = self.controller.cycle();
        match event {
            Event::Request { from, to, id } => {
                let term =
                    crate::lp::parse_term(&format!("goal({from},{to},{id})")).map_err(|e| {
                        RunError::Scenario {
                            line: 0,
                            message: e.to_string(),
                        }
                    })?;
                self.sim.world.ensure_package(id, from)?;
                match self.controller.submit_goal(term) {
                    Ok(_) => {}
                    Err(e @ ControlError::DuplicatePackage(_)) => {
                        self.notes.push(format!("cycle {cycle}: {e}"))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Event::Cancel(id) => match self.goal_for(id) {
                Some(g) => {
                    if let Err(e) = self.controller.cancel_goal(g) {
                        self.notes.push(format!("cycle {cycle}: {e}"));
                    }
                }
                None => self
                    .notes
                    .push(format!("cycle {cycle}: no goal for package {id}")),
            },
            Event::Block(a, b) => self.sim.world.block(a, b),
            Event::Unblock(a, b) => self.sim.world.unblock(a, b),
        }
        Ok(())
    }

    fn apply_due(&mut self) -> Result<(), RunError> {
        let cycle = self.controller.cycle();
        while let Some((at, ev)) = self.scenario.events.get(self.next_event).cloned() {
            if at > cycle {
                break;
            }
            self.apply(&ev)?;
            self.next_event += 1;
        }
        Ok(())
    }

    pub fn events_left(&self) -> bool {
        self.next_event < self.scenario.events.len()
    }

    /// Whether another cycle has anything to do.
    pub fn has_work(&self) -> bool {
        self.controller.has_open_goals() || self.controller.has_queued_events()
    }

    /// Applies due events and runs one cycle.
    pub fn step(&mut self) -> Result<&CycleReport, RunError> {
        self.apply_due()?;
        let report = self.controller.run_cycle(&mut self.sim)?;
        self.reports.push(report);
        Ok(self.reports.last().expect("just pushed"))
    }

    /// Runs until no goal is open and no event is left, or `max_cycles`
    /// cycles have run. At least one cycle always runs.
    pub fn run(&mut self, max_cycles: usize) -> Result<(), RunError> {
        for _ in 0..max_cycles {
            self.step()?;
            if !self.has_work() && !self.events_left() {
                break;
            }
        }
        Ok(())
    }

    pub fn goal_summary(&self) -> Vec<(String, GoalStatus)> {
        self.controller
            .goals()
            .iter()
            .map(|g| (g.package.to_string(), g.status))
            .collect()
    }

    pub fn package_place(&self, id: &str) -> Option<&Place> {
        self.sim.world.state().packages.get(id)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&render_cycle(r, format));
        }
        out.push_str(&self.render_summary(format));
        out
    }

    pub fn render_summary(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        for n in &self.notes {
            match format {
                ReportFormat::Human => writeln!(out, "note: {n}").unwrap(),
                ReportFormat::Kv => writeln!(out, "note={}", quote(n)).unwrap(),
            }
        }
        let goals: Vec<String> = self
            .goal_summary()
            .iter()
            .map(|(p, s)| format!("{p}:{s}"))
            .collect();
        let packages: Vec<String> = self
            .sim
            .world
            .state()
            .packages
            .iter()
            .map(|(id, place)| match place {
                Place::At(l) => format!("{id}@{l}"),
                Place::Carried => format!("{id}@robot"),
            })
            .collect();
        let state = self.sim.world.state();
        match format {
            ReportFormat::Human => writeln!(
                out,
                "summary: cycles {} | goals {} | robot {} | packages {} | ticks {} | max carried {}",
                self.reports.len(),
                none_if_empty(&goals.join(" ")),
                state.robot,
                none_if_empty(&packages.join(" ")),
                state.tick,
                self.sim.world.max_carried()
            )
            .unwrap(),
            ReportFormat::Kv => writeln!(
                out,
                "summary cycles={} goals={} robot={} packages={} ticks={} max_carried={}",
                self.reports.len(),
                quote(&goals.join(" ")),
                state.robot,
                quote(&packages.join(" ")),
                state.tick,
                self.sim.world.max_carried()
            )
            .unwrap(),
        }
        out
    }
}

fn none_if_empty(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// The `_action` projection of a report's plan, by step.
pub fn plan_strings(report: &CycleReport) -> Vec<String> {
    report.plan.iter().map(|a| a.to_string()).collect()
}

/// One cycle in the given format. Field order is fixed.
pub fn render_cycle(r: &CycleReport, format: ReportFormat) -> String {
    let update: Vec<String> = r.update.items.iter().map(|i| i.to_string()).collect();
    let plan = plan_strings(r);
    let horizon = r.horizon.map_or("unsat".to_string(), |h| h.to_string());
    let action = r
        .action
        .as_ref()
        .map_or("idle".to_string(), |a| a.to_atom().to_string());
    let result = r.result.as_ref().map_or("-".to_string(), |a| a.to_string());
    let changes: Vec<String> = r
        .status_changes
        .iter()
        .map(|(id, s)| format!("{}:{s}", goal_label(id)))
        .collect();
    match format {
        ReportFormat::Human => format!(
            "cycle {} | update {} | horizon {} | plan {} | action {} | result {} | goals {}\n",
            r.cycle,
            none_if_empty(&update.join(" ")),
            horizon,
            none_if_empty(&plan.join(" ")),
            action,
            result,
            none_if_empty(&changes.join(" ")),
        ),
        ReportFormat::Kv => format!(
            "cycle={} update={} horizon={} plan={} action={} result={} goals={}\n",
            r.cycle,
            quote(&update.join(" ")),
            horizon,
            quote(&plan.join(" ")),
            action,
            result,
            quote(&changes.join(" ")),
        ),
    }
}

fn goal_label(id: &GoalId) -> String {
    format!("#{id}")
}

/// Package id of a goal term, for display.
pub fn package_of(goal: &Term) -> Option<String> {
    match goal {
        Term::Func(n, args) if n == "goal" && args.len() == 3 => Some(args[2].to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parses_and_orders() {
        let s: Scenario = "# demo\nat 1 request office3 office2 1\nat 3 cancel 1\nat 3 block a b\n"
            .parse()
            .unwrap();
        assert_eq!(s.events.len(), 3);
        assert_eq!(s.events[1], (3, Event::Cancel("1".into())));
        assert!("at 3 cancel 1\nat 2 cancel 2".parse::<Scenario>().is_err());
        assert!("at x cancel 1".parse::<Scenario>().is_err());
        assert!("at 1 fly away".parse::<Scenario>().is_err());
    }

    #[test]
    fn expectation_sorts_by_step() {
        let e: Expectation = "2: _action(b,x,2) _action(a,y,1)\n3:\n".parse().unwrap();
        assert_eq!(e.plans[&3], Vec::<String>::new());
        assert_eq!(step_of("_action(move_base,office2,12)"), 12);
        assert!("2 _action(a,b,1)".parse::<Expectation>().is_err());
        assert!("1:\n1:".parse::<Expectation>().is_err());
    }

    #[test]
    fn config_defaults() {
        let cfg: RunConfig = toml::from_str("program = \"p.lp\"\nworld = \"w.world\"\n").unwrap();
        assert_eq!(cfg.max_cycles, 50);
        assert_eq!(cfg.adapters.len(), 3);
        assert_eq!(cfg.out_topic, OUT_TOPIC);
        let cfg: RunConfig = toml::from_str(
            "program = \"p.lp\"\nworld = \"w\"\nreport_format = \"kv\"\n[[adapter]]\nname = \"go\"\nkind = \"move_base\"\n",
        )
        .unwrap();
        assert_eq!(cfg.adapters, [AdapterSpec::new("go", "move_base")]);
        assert_eq!(cfg.report_format, ReportFormat::Kv);
        assert!(
            toml::from_str::<RunConfig>("program = \"p\"\nworld = \"w\"\nbogus = 1\n").is_err()
        );
    }
}
