//! Horizon-indexed grounding and solving.
//!
//! The base part is grounded once, the cumulative part once per step, and
//! the volatile part once per horizon it is queried at. All layers share one
//! universe of possible atoms; a query at horizon `k` takes the base layer,
//! cumulative layers `1..=k`, the volatile layer for `k` and the online
//! items. Rules instantiated from atoms that a query leaves out simply have
//! bodies that cannot hold, so sharing the universe is sound.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::lp::{
    saturate, solve, AnswerSet, GroundError, GroundProgram, Layer, ReactiveProgram, Rule, Universe,
    DEFAULT_DEPTH_CAP,
};

pub const DEFAULT_HORIZON_CAP: i64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncrementalError {
    #[error("horizon {requested} exceeds the cap of {cap}")]
    HorizonCap { requested: i64, cap: i64 },
    #[error("no answer set at any horizon from {from} up to the cap of {cap}")]
    Unsatisfiable { from: i64, cap: i64 },
    #[error(transparent)]
    Ground(#[from] GroundError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncrementalConfig {
    pub horizon_cap: i64,
    pub depth_cap: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            horizon_cap: DEFAULT_HORIZON_CAP,
            depth_cap: DEFAULT_DEPTH_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IncrementalState {
    program: ReactiveProgram,
    config: IncrementalConfig,
    universe: Universe,
    base: Layer,
    cumulative: Vec<Layer>,
    volatile: BTreeMap<i64, Layer>,
    online: BTreeMap<i64, Layer>,
    online_volatile: BTreeMap<i64, Layer>,
    grounded_horizon: i64,
}

impl IncrementalState {
    pub fn new(program: ReactiveProgram) -> Self {
        IncrementalState::with_config(program, IncrementalConfig::default())
    }

    pub fn with_config(program: ReactiveProgram, config: IncrementalConfig) -> Self {
        let base = Layer::new(&program.base, 0);
        IncrementalState {
            program,
            config,
            universe: Universe::new(config.depth_cap),
            base,
            cumulative: Vec::new(),
            volatile: BTreeMap::new(),
            online: BTreeMap::new(),
            online_volatile: BTreeMap::new(),
            grounded_horizon: 0,
        }
    }

    pub fn program(&self) -> &ReactiveProgram {
        &self.program
    }

    pub fn config(&self) -> IncrementalConfig {
        self.config
    }

    pub fn grounded_horizon(&self) -> i64 {
        self.grounded_horizon
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// Grounds cumulative layers up to step `k`. Lower values are a no-op.
    pub fn advance_to(&mut self, k: i64) -> Result<(), IncrementalError> {
        if k > self.config.horizon_cap {
            return Err(IncrementalError::HorizonCap {
                requested: k,
                cap: self.config.horizon_cap,
            });
        }
        while self.grounded_horizon < k {
            self.grounded_horizon += 1;
            self.cumulative
                .push(Layer::new(&self.program.cumulative, self.grounded_horizon));
        }
        self.saturate()
    }

    /// Adds ground facts or constraints that hold from `step` on.
    pub fn add_persistent(&mut self, step: i64, rules: Vec<Rule>) {
        let layer = self
            .online
            .entry(step)
            .or_insert_with(|| Layer::from_rules(Vec::new(), step));
        rules.into_iter().for_each(|r| layer.push_rule(r));
    }

    /// Adds ground facts or constraints that only take part in queries at
    /// horizon `step`.
    pub fn add_volatile(&mut self, step: i64, rules: Vec<Rule>) {
        let layer = self
            .online_volatile
            .entry(step)
            .or_insert_with(|| Layer::from_rules(Vec::new(), step));
        rules.into_iter().for_each(|r| layer.push_rule(r));
    }

    fn saturate(&mut self) -> Result<(), IncrementalError> {
        let mut layers: Vec<&mut Layer> = Vec::new();
        layers.push(&mut self.base);
        layers.extend(self.online.values_mut());
        layers.extend(self.online_volatile.values_mut());
        layers.extend(self.cumulative.iter_mut());
        layers.extend(self.volatile.values_mut());
        saturate(&mut layers, &mut self.universe)?;
        Ok(())
    }

    /// The ground program queried at horizon `k`, grounding as needed.
    pub fn program_at(&mut self, k: i64) -> Result<GroundProgram, IncrementalError> {
        self.advance_to(k)?;
        if !self.volatile.contains_key(&k) {
            self.volatile
                .insert(k, Layer::new(&self.program.volatile, k));
        }
        self.saturate()?;
        let mut rules = Vec::new();
        rules.extend(self.base.ground());
        for layer in self.online.values() {
            rules.extend(layer.ground());
        }
        if let Some(layer) = self.online_volatile.get(&k) {
            rules.extend(layer.ground());
        }
        for layer in &self.cumulative[..k.max(0) as usize] {
            rules.extend(layer.ground());
        }
        rules.extend(self.volatile[&k].ground());
        Ok(self.universe.program(rules))
    }

    /// First answer set at horizon `k`, if any.
    pub fn solve_at_horizon(&mut self, k: i64) -> Result<Option<AnswerSet>, IncrementalError> {
        let program = self.program_at(k)?;
        Ok(solve(&program, &[]).next())
    }

    /// Smallest horizon `h >= lower` with an answer set, and that answer set.
    pub fn solve_min_horizon(&mut self, lower: i64) -> Result<(i64, AnswerSet), IncrementalError> {
        let lower = lower.max(1);
        for h in lower..=self.config.horizon_cap {
            if let Some(model) = self.solve_at_horizon(h)? {
                return Ok((h, model));
            }
        }
        Err(IncrementalError::Unsatisfiable {
            from: lower,
            cap: self.config.horizon_cap,
        })
    }
}
