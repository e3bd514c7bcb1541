//! Reduct, least model and the stability check.

use std::collections::BTreeSet;

use super::program::{AtomId, GroundHead, GroundProgram};

/// Rule of a negation-free program. A `None` head is a constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DefiniteRule {
    pub head: Option<AtomId>,
    pub body: Vec<AtomId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefiniteProgram {
    pub rules: Vec<DefiniteRule>,
}

/// Gelfond–Lifschitz reduct of `program` with respect to `candidate`.
///
/// Rules whose negative body meets the candidate are deleted, the others
/// lose their negative body. A choice rule contributes `a :- body, cond`
/// for each of its elements `a` that is in the candidate.
pub fn reduct(program: &GroundProgram, candidate: &BTreeSet<AtomId>) -> DefiniteProgram {
    let mut rules = Vec::new();
    for rule in &program.rules {
        if rule.neg.iter().any(|a| candidate.contains(a)) {
            continue;
        }
        match &rule.head {
            GroundHead::Atom(h) => rules.push(DefiniteRule {
                head: Some(*h),
                body: rule.pos.clone(),
            }),
            GroundHead::Falsum => rules.push(DefiniteRule {
                head: None,
                body: rule.pos.clone(),
            }),
            GroundHead::Choice { elements, .. } => {
                for e in elements.iter().filter(|e| candidate.contains(&e.atom)) {
                    let mut body = rule.pos.clone();
                    body.extend(&e.condition);
                    rules.push(DefiniteRule {
                        head: Some(e.atom),
                        body,
                    });
                }
            }
        }
    }
    DefiniteProgram { rules }
}

/// Least model of the rules with heads; constraints are ignored.
pub fn least_model(program: &DefiniteProgram) -> BTreeSet<AtomId> {
    let mut model = BTreeSet::new();
    let mut watchers: std::collections::HashMap<AtomId, Vec<usize>> = Default::default();
    let mut missing: Vec<usize> = Vec::with_capacity(program.rules.len());
    let mut queue = Vec::new();
    for (i, r) in program.rules.iter().enumerate() {
        let body: BTreeSet<AtomId> = r.body.iter().copied().collect();
        missing.push(body.len());
        for a in body {
            watchers.entry(a).or_default().push(i);
        }
        if r.body.is_empty() {
            if let Some(h) = r.head {
                queue.push(h);
            }
        }
    }
    while let Some(a) = queue.pop() {
        if !model.insert(a) {
            continue;
        }
        for &i in watchers.get(&a).map(Vec::as_slice).unwrap_or(&[]) {
            missing[i] -= 1;
            if missing[i] == 0 {
                if let Some(h) = program.rules[i].head {
                    if !model.contains(&h) {
                        queue.push(h);
                    }
                }
            }
        }
    }
    model
}

/// Whether every choice rule whose body holds in `model` has a count of
/// chosen elements within its bounds.
pub fn bounds_hold(program: &GroundProgram, model: &BTreeSet<AtomId>) -> bool {
    program.rules.iter().all(|rule| match &rule.head {
        GroundHead::Choice {
            elements,
            lower,
            upper,
        } if rule.body_holds(model) => {
            // Each atom counts once, however many elements name it.
            let count = elements
                .iter()
                .filter(|e| {
                    model.contains(&e.atom) && e.condition.iter().all(|c| model.contains(c))
                })
                .map(|e| e.atom)
                .collect::<BTreeSet<_>>()
                .len() as u32;
            lower.is_none_or(|l| count >= l) && upper.is_none_or(|u| count <= u)
        }
        _ => true,
    })
}

/// `model` is a stable model: it is the least model of its own reduct,
/// violates no constraint, and respects all cardinality bounds.
pub fn is_stable(program: &GroundProgram, model: &BTreeSet<AtomId>) -> bool {
    let red = reduct(program, model);
    if least_model(&red) != *model {
        return false;
    }
    let violated = red
        .rules
        .iter()
        .any(|r| r.head.is_none() && r.body.iter().all(|a| model.contains(a)));
    !violated && bounds_hold(program, model)
}
