//! Feeds online updates into the incremental state and answers queries.

use thiserror::Error;

use super::online::{Lifetime, OnlineError, OnlineUpdate};
use crate::incremental::{IncrementalConfig, IncrementalError, IncrementalState};
use crate::lp::{AnswerSet, ReactiveProgram};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error("update for step {step} arrived after step {last}")]
    OutOfOrder { step: i64, last: i64 },
    #[error("update step {0} is below 1")]
    BadStep(i64),
    #[error("no update has been fed yet")]
    NoInput,
    #[error(transparent)]
    Online(#[from] OnlineError),
    #[error(transparent)]
    Incremental(#[from] IncrementalError),
}

/// An answer set together with the horizon it was found at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub horizon: i64,
    pub model: AnswerSet,
}

/// `Answer: <atoms>` with atoms in byte-lexicographic order.
pub fn render_answer(model: &AnswerSet) -> String {
    let atoms = model.sorted_strings();
    if atoms.is_empty() {
        "Answer:".to_string()
    } else {
        format!("Answer: {}", atoms.join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct ReactiveServer {
    state: IncrementalState,
    last_step: Option<i64>,
}

impl ReactiveServer {
    pub fn new(program: ReactiveProgram) -> Self {
        ReactiveServer::with_config(program, IncrementalConfig::default())
    }

    pub fn with_config(program: ReactiveProgram, config: IncrementalConfig) -> Self {
        ReactiveServer {
            state: IncrementalState::with_config(program, config),
            last_step: None,
        }
    }

    pub fn last_step(&self) -> Option<i64> {
        self.last_step
    }

    pub fn state(&self) -> &IncrementalState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut IncrementalState {
        &mut self.state
    }

    pub fn feed(&mut self, update: &OnlineUpdate) -> Result<(), ServerError> {
        if update.step < 1 {
            return Err(ServerError::BadStep(update.step));
        }
        if let Some(last) = self.last_step {
            if update.step <= last {
                return Err(ServerError::OutOfOrder {
                    step: update.step,
                    last,
                });
            }
        }
        update.check_externals(self.state.program())?;
        let (mut persistent, mut volatile) = (Vec::new(), Vec::new());
        for item in &update.items {
            match item.lifetime {
                Lifetime::Persistent => persistent.push(item.rule.clone()),
                Lifetime::Volatile => volatile.push(item.rule.clone()),
            }
        }
        self.state.advance_to(update.step)?;
        self.state.add_persistent(update.step, persistent);
        self.state.add_volatile(update.step, volatile);
        self.last_step = Some(update.step);
        Ok(())
    }

    /// The answer at the smallest horizon not below the last fed step.
    pub fn get_answer(&mut self) -> Result<Answer, ServerError> {
        let lower = self.last_step.ok_or(ServerError::NoInput)?;
        let (horizon, model) = self.state.solve_min_horizon(lower)?;
        Ok(Answer { horizon, model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::parse_program;
    use crate::reactive::parse_online;

    fn server() -> ReactiveServer {
        ReactiveServer::new(
            parse_program("#external go/1. #cumulative t. done(t) :- go(t).").unwrap(),
        )
    }

    #[test]
    fn steps_must_increase() {
        let mut s = server();
        s.feed(&parse_online("#step 1. #endstep.").unwrap())
            .unwrap();
        s.feed(&parse_online("#step 2. #endstep.").unwrap())
            .unwrap();
        let err = s
            .feed(&parse_online("#step 1. #endstep.").unwrap())
            .unwrap_err();
        assert_eq!(err, ServerError::OutOfOrder { step: 1, last: 2 });
    }

    #[test]
    fn answer_needs_input() {
        assert_eq!(server().get_answer().unwrap_err(), ServerError::NoInput);
    }

    #[test]
    fn answer_reflects_fed_facts() {
        let mut s = server();
        s.feed(&parse_online("#step 2. go(2). #endstep.").unwrap())
            .unwrap();
        let a = s.get_answer().unwrap();
        assert_eq!(a.horizon, 2);
        assert_eq!(render_answer(&a.model), "Answer: done(2) go(2)");
    }

    #[test]
    fn undeclared_external_is_rejected() {
        let mut s = server();
        let err = s
            .feed(&parse_online("#step 1. stop(1). #endstep.").unwrap())
            .unwrap_err();
        assert!(matches!(
            err,
            ServerError::Online(OnlineError::Undeclared { .. })
        ));
        assert_eq!(s.last_step(), None);
    }
}
