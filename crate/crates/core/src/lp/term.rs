//! Terms and atoms of the logic-program fragment.

use std::collections::BTreeSet;
use std::fmt;

/// A term. Variant order fixes the structural ordering used everywhere a
/// deterministic order over atoms is needed: integers sort before symbols,
/// symbols before compound terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Int(i64),
    Sym(String),
    Func(String, Vec<Term>),
    Var(String),
    /// `base + offset`, folded to an integer once `base` is bound to one.
    Offset(Box<Term>, i64),
}

impl Term {
    pub fn sym(name: impl Into<String>) -> Self {
        Term::Sym(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn func(name: impl Into<String>, args: Vec<Term>) -> Self {
        if args.is_empty() {
            Term::Sym(name.into())
        } else {
            Term::Func(name.into(), args)
        }
    }

    /// Builds `self + offset`, folding integers eagerly.
    pub fn offset(self, offset: i64) -> Self {
        match self {
            Term::Int(n) => Term::Int(n + offset),
            Term::Offset(base, k) => Term::Offset(base, k + offset),
            other if offset == 0 => other,
            other => Term::Offset(Box::new(other), offset),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Int(_) | Term::Sym(_) => true,
            Term::Var(_) | Term::Offset(..) => false,
            Term::Func(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Nesting depth; constants and variables have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Term::Func(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            Term::Offset(base, _) => base.depth(),
            _ => 1,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Func(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Offset(base, _) => base.collect_vars(out),
            Term::Int(_) | Term::Sym(_) => {}
        }
    }

    /// Replaces every occurrence of the constant `name` by `value` and folds
    /// the offsets that become evaluable.
    pub fn replace_sym(&self, name: &str, value: &Term) -> Term {
        match self {
            Term::Sym(s) if s == name => value.clone(),
            Term::Func(f, args) => Term::Func(
                f.clone(),
                args.iter().map(|a| a.replace_sym(name, value)).collect(),
            ),
            Term::Offset(base, k) => base.replace_sym(name, value).offset(*k),
            other => other.clone(),
        }
    }

    /// Applies a binding. Returns `None` when arithmetic is applied to a
    /// non-integer or a variable is left unbound.
    pub fn apply(&self, binding: &Binding) -> Option<Term> {
        match self {
            Term::Int(_) | Term::Sym(_) => Some(self.clone()),
            Term::Var(v) => binding.get(v).cloned(),
            Term::Func(f, args) => {
                let args = args
                    .iter()
                    .map(|a| a.apply(binding))
                    .collect::<Option<Vec<_>>>()?;
                Some(Term::Func(f.clone(), args))
            }
            Term::Offset(base, k) => match base.apply(binding)? {
                Term::Int(n) => Some(Term::Int(n + k)),
                _ => None,
            },
        }
    }

    /// Matches a pattern against a ground term, extending `binding`.
    /// On failure the binding may hold partial assignments; callers restore
    /// it with [`Binding::truncate`].
    pub fn matches(&self, value: &Term, binding: &mut Binding) -> bool {
        match (self, value) {
            (Term::Var(v), _) => match binding.get(v) {
                Some(bound) => bound == value,
                None => {
                    binding.push(v.clone(), value.clone());
                    true
                }
            },
            (Term::Int(a), Term::Int(b)) => a == b,
            (Term::Sym(a), Term::Sym(b)) => a == b,
            (Term::Func(f, xs), Term::Func(g, ys)) => {
                f == g
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys).all(|(x, y)| x.matches(y, binding))
            }
            (Term::Offset(base, k), Term::Int(n)) => match base.apply(binding) {
                Some(Term::Int(b)) => b + k == *n,
                Some(_) => false,
                None => match base.as_ref() {
                    Term::Var(v) => {
                        binding.push(v.clone(), Term::Int(n - k));
                        true
                    }
                    _ => false,
                },
            },
            _ => false,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => write!(f, "{n}"),
            Term::Sym(s) | Term::Var(s) => f.write_str(s),
            Term::Func(name, args) => {
                write!(f, "{name}(")?;
                write_list(f, args)?;
                f.write_str(")")
            }
            Term::Offset(base, k) if *k < 0 => write!(f, "{base}-{}", -k),
            Term::Offset(base, k) => write!(f, "{base}+{k}"),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

/// A predicate applied to arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            pred: pred.into(),
            args,
        }
    }

    pub fn prop(pred: impl Into<String>) -> Self {
        Atom::new(pred, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    /// Depth of the deepest argument; a propositional atom has depth 0.
    pub fn depth(&self) -> usize {
        self.args.iter().map(Term::depth).max().unwrap_or(0)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        self.args.iter().for_each(|a| a.collect_vars(out));
    }

    pub fn replace_sym(&self, name: &str, value: &Term) -> Atom {
        Atom::new(
            self.pred.clone(),
            self.args
                .iter()
                .map(|a| a.replace_sym(name, value))
                .collect(),
        )
    }

    pub fn apply(&self, binding: &Binding) -> Option<Atom> {
        let args = self
            .args
            .iter()
            .map(|a| a.apply(binding))
            .collect::<Option<Vec<_>>>()?;
        Some(Atom::new(self.pred.clone(), args))
    }

    pub fn matches(&self, ground: &Atom, binding: &mut Binding) -> bool {
        self.pred == ground.pred
            && self.args.len() == ground.args.len()
            && self
                .args
                .iter()
                .zip(&ground.args)
                .all(|(p, v)| p.matches(v, binding))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Variable assignment built up during a join. Bindings are small, so a
/// vector with linear lookup beats a map here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Binding(Vec<(String, Term)>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.iter().rev().find(|(v, _)| v == var).map(|(_, t)| t)
    }

    pub fn push(&mut self, var: String, value: Term) {
        self.0.push((var, value));
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.0.truncate(len);
    }
}
