//! Non-ground rules and the three-part reactive program.

use std::collections::BTreeSet;
use std::fmt;

use super::term::{Atom, Binding, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// Compares two ground terms under the structural term order.
    pub fn eval(self, lhs: &Term, rhs: &Term) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Cmp(Term, CmpOp, Term),
}

impl Literal {
    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Literal::Pos(a) | Literal::Neg(a) => a.collect_vars(out),
            Literal::Cmp(l, _, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Literal::Pos(a) | Literal::Neg(a) => a.is_ground(),
            Literal::Cmp(l, _, r) => l.is_ground() && r.is_ground(),
        }
    }

    pub fn replace_sym(&self, name: &str, value: &Term) -> Literal {
        match self {
            Literal::Pos(a) => Literal::Pos(a.replace_sym(name, value)),
            Literal::Neg(a) => Literal::Neg(a.replace_sym(name, value)),
            Literal::Cmp(l, op, r) => {
                Literal::Cmp(l.replace_sym(name, value), *op, r.replace_sym(name, value))
            }
        }
    }

    /// Evaluates a comparison under `binding`; `None` if it cannot be
    /// evaluated yet (or is not a comparison).
    pub fn eval_cmp(&self, binding: &Binding) -> Option<bool> {
        match self {
            Literal::Cmp(l, op, r) => {
                let l = l.apply(binding)?;
                let r = r.apply(binding)?;
                Some(op.eval(&l, &r))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => write!(f, "{a}"),
            Literal::Neg(a) => write!(f, "not {a}"),
            Literal::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChoiceElement {
    pub atom: Atom,
    pub condition: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Choice {
    pub lower: Option<i64>,
    pub upper: Option<i64>,
    pub elements: Vec<ChoiceElement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Atom(Atom),
    Choice(Choice),
    /// Integrity constraint.
    Falsum,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn fact(atom: Atom) -> Self {
        Rule {
            head: Head::Atom(atom),
            body: Vec::new(),
        }
    }

    pub fn constraint(body: Vec<Literal>) -> Self {
        Rule {
            head: Head::Falsum,
            body,
        }
    }

    pub fn is_constraint(&self) -> bool {
        matches!(self.head, Head::Falsum)
    }

    pub fn is_ground(&self) -> bool {
        let head = match &self.head {
            Head::Atom(a) => a.is_ground(),
            Head::Falsum => true,
            Head::Choice(c) => c
                .elements
                .iter()
                .all(|e| e.atom.is_ground() && e.condition.iter().all(Literal::is_ground)),
        };
        head && self.body.iter().all(Literal::is_ground)
    }

    /// Returns the first variable that is not bound by a positive body atom,
    /// if any.
    pub fn unsafe_variable(&self) -> Option<String> {
        let mut bound = BTreeSet::new();
        for lit in &self.body {
            if let Literal::Pos(a) = lit {
                a.collect_vars(&mut bound);
            }
        }
        let mut needed = BTreeSet::new();
        for lit in &self.body {
            if !matches!(lit, Literal::Pos(_)) {
                lit.collect_vars(&mut needed);
            }
        }
        match &self.head {
            Head::Atom(a) => a.collect_vars(&mut needed),
            Head::Falsum => {}
            Head::Choice(c) => {
                for elem in &c.elements {
                    let mut local = bound.clone();
                    for lit in &elem.condition {
                        if let Literal::Pos(a) = lit {
                            a.collect_vars(&mut local);
                        }
                    }
                    let mut elem_needed = BTreeSet::new();
                    elem.atom.collect_vars(&mut elem_needed);
                    for lit in &elem.condition {
                        if !matches!(lit, Literal::Pos(_)) {
                            lit.collect_vars(&mut elem_needed);
                        }
                    }
                    if let Some(v) = elem_needed.difference(&local).next() {
                        return Some(v.clone());
                    }
                }
            }
        }
        needed.difference(&bound).next().cloned()
    }

    pub fn replace_sym(&self, name: &str, value: &Term) -> Rule {
        let head = match &self.head {
            Head::Atom(a) => Head::Atom(a.replace_sym(name, value)),
            Head::Falsum => Head::Falsum,
            Head::Choice(c) => Head::Choice(Choice {
                lower: c.lower,
                upper: c.upper,
                elements: c
                    .elements
                    .iter()
                    .map(|e| ChoiceElement {
                        atom: e.atom.replace_sym(name, value),
                        condition: e
                            .condition
                            .iter()
                            .map(|l| l.replace_sym(name, value))
                            .collect(),
                    })
                    .collect(),
            }),
        };
        Rule {
            head,
            body: self
                .body
                .iter()
                .map(|l| l.replace_sym(name, value))
                .collect(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.head {
            Head::Atom(a) => write!(f, "{a}")?,
            Head::Falsum => {}
            Head::Choice(c) => {
                if let Some(l) = c.lower {
                    write!(f, "{l} ")?;
                }
                f.write_str("{ ")?;
                for (i, e) in c.elements.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{}", e.atom)?;
                    if !e.condition.is_empty() {
                        f.write_str(" : ")?;
                        write_body(f, &e.condition)?;
                    }
                }
                f.write_str(" }")?;
                if let Some(u) = c.upper {
                    write!(f, " {u}")?;
                }
            }
        }
        if !self.body.is_empty() {
            if self.is_constraint() {
                f.write_str(":- ")?;
            } else {
                f.write_str(" :- ")?;
            }
            write_body(f, &self.body)?;
        } else if self.is_constraint() {
            f.write_str(":-")?;
        }
        f.write_str(".")
    }
}

fn write_body(f: &mut fmt::Formatter<'_>, lits: &[Literal]) -> fmt::Result {
    for (i, l) in lits.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{l}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartKind {
    Base,
    Cumulative,
    Volatile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramPart {
    pub kind: PartKind,
    /// Name of the time parameter; `None` for the base part.
    pub parameter: Option<String>,
    pub rules: Vec<Rule>,
}

impl ProgramPart {
    pub fn new(kind: PartKind) -> Self {
        ProgramPart {
            kind,
            parameter: None,
            rules: Vec::new(),
        }
    }

    /// Rules with the time parameter replaced by `step`.
    pub fn at_step(&self, step: i64) -> Vec<Rule> {
        match &self.parameter {
            Some(p) => self
                .rules
                .iter()
                .map(|r| r.replace_sym(p, &Term::Int(step)))
                .collect(),
            None => self.rules.clone(),
        }
    }
}

/// A logic program split into its static, accumulating and
/// current-step-only parts, plus the predicates clients may assert online.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactiveProgram {
    pub base: ProgramPart,
    pub cumulative: ProgramPart,
    pub volatile: ProgramPart,
    pub externals: BTreeSet<(String, usize)>,
}

impl Default for ReactiveProgram {
    fn default() -> Self {
        ReactiveProgram {
            base: ProgramPart::new(PartKind::Base),
            cumulative: ProgramPart::new(PartKind::Cumulative),
            volatile: ProgramPart::new(PartKind::Volatile),
            externals: BTreeSet::new(),
        }
    }
}

impl ReactiveProgram {
    pub fn is_external(&self, pred: &str, arity: usize) -> bool {
        self.externals.iter().any(|(p, a)| p == pred && *a == arity)
    }

    /// Appends the rules of `other` part by part.
    pub fn extend(&mut self, other: ReactiveProgram) {
        self.base.rules.extend(other.base.rules);
        for (mine, theirs) in [
            (&mut self.cumulative, other.cumulative),
            (&mut self.volatile, other.volatile),
        ] {
            if mine.parameter.is_none() {
                mine.parameter = theirs.parameter.clone();
            }
            match (&mine.parameter, &theirs.parameter) {
                (Some(a), Some(b)) if a != b => {
                    let value = Term::sym(a.clone());
                    mine.rules
                        .extend(theirs.rules.iter().map(|r| r.replace_sym(b, &value)));
                }
                _ => mine.rules.extend(theirs.rules),
            }
        }
        self.externals.extend(other.externals);
    }
}

impl fmt::Display for ReactiveProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pred, arity) in &self.externals {
            writeln!(f, "#external {pred}/{arity}.")?;
        }
        writeln!(f, "#base.")?;
        for r in &self.base.rules {
            writeln!(f, "{r}")?;
        }
        for part in [&self.cumulative, &self.volatile] {
            if part.rules.is_empty() {
                continue;
            }
            let name = match part.kind {
                PartKind::Cumulative => "cumulative",
                _ => "volatile",
            };
            writeln!(f, "#{name} {}.", part.parameter.as_deref().unwrap_or("t"))?;
            for r in &part.rules {
                writeln!(f, "{r}")?;
            }
        }
        Ok(())
    }
}
