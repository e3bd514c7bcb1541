//! `#step N. ... #endstep.` blocks.

use std::fmt;

use thiserror::Error;

use crate::lp::parse::{Parser, Tok};
use crate::lp::{Head, Literal, ParseError, ReactiveProgram, Rule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnlineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("online item is not ground: {0}")]
    NotGround(String),
    #[error("online items must be facts or integrity constraints: {0}")]
    NotFactOrConstraint(String),
    #[error("predicate {pred}/{arity} is not declared external")]
    Undeclared { pred: String, arity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Lifetime {
    #[default]
    Persistent,
    /// Only part of the query at the update's own step.
    Volatile,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnlineItem {
    pub rule: Rule,
    pub lifetime: Lifetime,
}

impl OnlineItem {
    pub fn persistent(rule: Rule) -> Self {
        OnlineItem {
            rule,
            lifetime: Lifetime::Persistent,
        }
    }

    pub fn volatile(rule: Rule) -> Self {
        OnlineItem {
            rule,
            lifetime: Lifetime::Volatile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnlineUpdate {
    pub step: i64,
    pub items: Vec<OnlineItem>,
}

impl OnlineUpdate {
    pub fn new(step: i64) -> Self {
        OnlineUpdate {
            step,
            items: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Rule> {
        self.items
            .iter()
            .map(|i| &i.rule)
            .filter(|r| matches!(r.head, Head::Atom(_)))
    }

    /// Every fact must use a predicate declared `#external`. Constraints
    /// may mention any predicate; commit constraints refer to planned
    /// actions, which the program derives itself.
    pub fn check_externals(&self, program: &ReactiveProgram) -> Result<(), OnlineError> {
        for rule in self.facts() {
            if let Head::Atom(a) = &rule.head {
                if !program.is_external(&a.pred, a.arity()) {
                    return Err(OnlineError::Undeclared {
                        pred: a.pred.clone(),
                        arity: a.arity(),
                    });
                }
            }
        }
        Ok(())
    }

    /// One item per line between the step directives.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for OnlineItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lifetime == Lifetime::Volatile {
            f.write_str("#volatile ")?;
        }
        write!(f, "{}", self.rule)
    }
}

impl fmt::Display for OnlineUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#step {}.", self.step)?;
        for item in &self.items {
            writeln!(f, "{item}")?;
        }
        f.write_str("#endstep.")
    }
}

/// Parses exactly one update block.
pub fn parse_online(text: &str) -> Result<OnlineUpdate, OnlineError> {
    let mut p = Parser::new(text)?;
    if *p.peek() != Tok::Directive("step".into()) {
        return Err(p
            .fail(format!("expected `#step`, found {}", p.peek()))
            .into());
    }
    p.bump();
    let step = p.int()?;
    p.expect(Tok::Dot)?;
    let mut update = OnlineUpdate::new(step);
    loop {
        let lifetime = match p.peek().clone() {
            Tok::Directive(d) if d == "endstep" => {
                p.bump();
                p.expect(Tok::Dot)?;
                break;
            }
            Tok::Directive(d) if d == "volatile" => {
                p.bump();
                Lifetime::Volatile
            }
            Tok::Eof => return Err(p.fail("missing `#endstep.`").into()),
            _ => Lifetime::Persistent,
        };
        let (rule, _) = p.rule()?;
        if !rule.is_ground() {
            return Err(OnlineError::NotGround(rule.to_string()));
        }
        let simple = match &rule.head {
            Head::Atom(_) => rule.body.is_empty(),
            Head::Falsum => !rule.body.iter().any(|l| matches!(l, Literal::Cmp(..))),
            Head::Choice(_) => false,
        };
        if !simple {
            return Err(OnlineError::NotFactOrConstraint(rule.to_string()));
        }
        update.items.push(OnlineItem { rule, lifetime });
    }
    if *p.peek() != Tok::Eof {
        return Err(p
            .fail(format!("unexpected {} after `#endstep.`", p.peek()))
            .into());
    }
    Ok(update)
}
