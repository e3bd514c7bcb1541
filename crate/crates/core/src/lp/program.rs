//! Ground programs over interned atoms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::term::Atom;

pub type AtomId = u32;

/// Interning table for ground atoms.
#[derive(Debug, Clone, Default)]
pub struct AtomTable {
    atoms: Vec<Atom>,
    ids: HashMap<Atom, AtomId>,
}

impl AtomTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, atom: Atom) -> AtomId {
        if let Some(&id) = self.ids.get(&atom) {
            return id;
        }
        let id = self.atoms.len() as AtomId;
        self.atoms.push(atom.clone());
        self.ids.insert(atom, id);
        id
    }

    pub fn get(&self, atom: &Atom) -> Option<AtomId> {
        self.ids.get(atom).copied()
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.atoms[id as usize]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AtomId, &Atom)> {
        self.atoms.iter().enumerate().map(|(i, a)| (i as AtomId, a))
    }
}

/// A choice-head element `atom : condition`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundElement {
    pub atom: AtomId,
    pub condition: Vec<AtomId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundHead {
    Atom(AtomId),
    Choice {
        elements: Vec<GroundElement>,
        lower: Option<u32>,
        upper: Option<u32>,
    },
    Falsum,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundRule {
    pub head: GroundHead,
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
}

impl GroundRule {
    pub fn normal(head: AtomId, pos: Vec<AtomId>, neg: Vec<AtomId>) -> Self {
        GroundRule {
            head: GroundHead::Atom(head),
            pos,
            neg,
        }
    }

    pub fn fact(head: AtomId) -> Self {
        Self::normal(head, Vec::new(), Vec::new())
    }

    pub fn constraint(pos: Vec<AtomId>, neg: Vec<AtomId>) -> Self {
        GroundRule {
            head: GroundHead::Falsum,
            pos,
            neg,
        }
    }

    pub fn choice(
        elements: Vec<AtomId>,
        lower: Option<u32>,
        upper: Option<u32>,
        pos: Vec<AtomId>,
        neg: Vec<AtomId>,
    ) -> Self {
        GroundRule {
            head: GroundHead::Choice {
                elements: elements
                    .into_iter()
                    .map(|atom| GroundElement {
                        atom,
                        condition: Vec::new(),
                    })
                    .collect(),
                lower,
                upper,
            },
            pos,
            neg,
        }
    }

    /// Whether the body holds in the two-valued interpretation `model`.
    pub fn body_holds(&self, model: &BTreeSet<AtomId>) -> bool {
        self.pos.iter().all(|a| model.contains(a)) && !self.neg.iter().any(|a| model.contains(a))
    }

    fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        let head: Vec<AtomId> = match &self.head {
            GroundHead::Atom(a) => vec![*a],
            GroundHead::Falsum => Vec::new(),
            GroundHead::Choice { elements, .. } => elements
                .iter()
                .flat_map(|e| std::iter::once(e.atom).chain(e.condition.iter().copied()))
                .collect(),
        };
        head.into_iter()
            .chain(self.pos.iter().copied())
            .chain(self.neg.iter().copied())
    }
}

/// A variable-free program. `priority` orders atoms for the search: lower
/// priority is decided first, ties are broken by the atom order.
#[derive(Debug, Clone, Default)]
pub struct GroundProgram {
    pub atoms: AtomTable,
    pub rules: Vec<GroundRule>,
    pub priority: Vec<i64>,
}

impl GroundProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, atom: Atom) -> AtomId {
        let id = self.atoms.intern(atom);
        if self.priority.len() < self.atoms.len() {
            self.priority.resize(self.atoms.len(), 0);
        }
        id
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        self.atoms.atom(id)
    }

    pub fn priority(&self, id: AtomId) -> i64 {
        self.priority.get(id as usize).copied().unwrap_or(0)
    }

    pub fn add(&mut self, rule: GroundRule) {
        debug_assert!(rule.atoms().all(|a| (a as usize) < self.atoms.len()));
        self.rules.push(rule);
    }

    /// Every atom in every rule is interned in the table.
    pub fn is_closed(&self) -> bool {
        self.rules
            .iter()
            .all(|r| r.atoms().all(|a| (a as usize) < self.atoms.len()))
    }

    pub fn render_rule(&self, rule: &GroundRule) -> String {
        let name = |a: &AtomId| self.atom(*a).to_string();
        let mut out = match &rule.head {
            GroundHead::Atom(a) => name(a),
            GroundHead::Falsum => String::new(),
            GroundHead::Choice {
                elements,
                lower,
                upper,
            } => {
                let elems: Vec<String> = elements
                    .iter()
                    .map(|e| {
                        if e.condition.is_empty() {
                            name(&e.atom)
                        } else {
                            let c: Vec<String> = e.condition.iter().map(name).collect();
                            format!("{} : {}", name(&e.atom), c.join(", "))
                        }
                    })
                    .collect();
                let lo = lower.map(|l| format!("{l} ")).unwrap_or_default();
                let hi = upper.map(|u| format!(" {u}")).unwrap_or_default();
                format!("{lo}{{ {} }}{hi}", elems.join("; "))
            }
        };
        let body: Vec<String> = rule
            .pos
            .iter()
            .map(name)
            .chain(rule.neg.iter().map(|a| format!("not {}", name(a))))
            .collect();
        if !body.is_empty() {
            out.push_str(if out.is_empty() { ":- " } else { " :- " });
            out.push_str(&body.join(", "));
        } else if out.is_empty() {
            out.push_str(":-");
        }
        out.push('.');
        out
    }
}

impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{}", self.render_rule(r))?;
        }
        Ok(())
    }
}
