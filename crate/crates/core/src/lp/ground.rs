//! Bottom-up instantiation over an accumulated universe of possible atoms.
//!
//! A rule is instantiated by matching its positive body against atoms that
//! may become true (heads of rules instantiated so far, facts and choice
//! elements). Negative literals are kept verbatim: an atom that is not
//! derivable today may become derivable when later input arrives, so
//! dropping `not a` early would be unsound for the incremental setting.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::program::{AtomId, AtomTable, GroundElement, GroundHead, GroundProgram, GroundRule};
use super::syntax::{Head, Literal, ProgramPart, Rule};
use super::term::{Atom, Binding, Term};

pub const DEFAULT_DEPTH_CAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("term depth cap {cap} exceeded by {atom}")]
    DepthExceeded { atom: String, cap: usize },
    #[error("negative literal in a choice element condition is not supported: {rule}")]
    NegativeCondition { rule: String },
}

#[derive(Debug, Clone, Default)]
struct PredIndex {
    all: Vec<AtomId>,
    by_last: HashMap<Term, Vec<AtomId>>,
}

/// Interned atoms plus the subset that may become true.
#[derive(Debug, Clone)]
pub struct Universe {
    atoms: AtomTable,
    possible: Vec<bool>,
    priority: Vec<i64>,
    index: HashMap<String, BTreeMap<usize, PredIndex>>,
    possible_count: usize,
    depth_cap: usize,
}

impl Default for Universe {
    fn default() -> Self {
        Universe::new(DEFAULT_DEPTH_CAP)
    }
}

impl Universe {
    pub fn new(depth_cap: usize) -> Self {
        Universe {
            atoms: AtomTable::new(),
            possible: Vec::new(),
            priority: Vec::new(),
            index: HashMap::new(),
            possible_count: 0,
            depth_cap,
        }
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    pub fn atoms(&self) -> &AtomTable {
        &self.atoms
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        self.atoms.atom(id)
    }

    /// Number of possible atoms.
    pub fn len(&self) -> usize {
        self.possible_count
    }

    pub fn is_empty(&self) -> bool {
        self.possible_count == 0
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms
            .get(atom)
            .is_some_and(|id| self.possible[id as usize])
    }

    pub fn is_possible(&self, id: AtomId) -> bool {
        self.possible[id as usize]
    }

    /// Possible atoms in structural order.
    pub fn possible_atoms(&self) -> Vec<&Atom> {
        let mut v: Vec<&Atom> = self
            .atoms
            .iter()
            .filter(|(id, _)| self.possible[*id as usize])
            .map(|(_, a)| a)
            .collect();
        v.sort();
        v
    }

    /// Number of possible atoms of `pred/arity`.
    pub fn count(&self, pred: &str, arity: usize) -> usize {
        self.index
            .get(pred)
            .and_then(|m| m.get(&arity))
            .map_or(0, |p| p.all.len())
    }

    /// Interns an atom without making it possible.
    pub fn intern(&mut self, atom: Atom) -> AtomId {
        let id = self.atoms.intern(atom);
        if self.possible.len() < self.atoms.len() {
            self.possible.push(false);
            self.priority.push(i64::MAX);
        }
        id
    }

    /// Makes `atom` possible. Returns its id and whether it was new.
    pub fn add(&mut self, atom: Atom, priority: i64) -> Result<(AtomId, bool), GroundError> {
        if atom.depth() > self.depth_cap {
            return Err(GroundError::DepthExceeded {
                atom: atom.to_string(),
                cap: self.depth_cap,
            });
        }
        let id = self.intern(atom);
        let slot = id as usize;
        if self.possible[slot] {
            return Ok((id, false));
        }
        self.possible[slot] = true;
        self.priority[slot] = self.priority[slot].min(priority);
        self.possible_count += 1;
        let atom = self.atoms.atom(id);
        let entry = self
            .index
            .entry(atom.pred.clone())
            .or_default()
            .entry(atom.arity())
            .or_default();
        entry.all.push(id);
        if let Some(last) = atom.args.last() {
            entry.by_last.entry(last.clone()).or_default().push(id);
        }
        Ok((id, true))
    }

    pub fn priority(&self, id: AtomId) -> i64 {
        self.priority[id as usize]
    }

    fn candidates(&self, pattern: &Atom, binding: &Binding) -> &[AtomId] {
        let Some(p) = self
            .index
            .get(&pattern.pred)
            .and_then(|m| m.get(&pattern.arity()))
        else {
            return &[];
        };
        match pattern.args.last().and_then(|t| t.apply(binding)) {
            Some(last) => p.by_last.get(&last).map_or(&[], Vec::as_slice),
            None => &p.all,
        }
    }

    /// Assembles a ground program over this universe from `rules`.
    pub fn program<'a>(&self, rules: impl IntoIterator<Item = &'a GroundRule>) -> GroundProgram {
        GroundProgram {
            atoms: self.atoms.clone(),
            rules: rules.into_iter().cloned().collect(),
            priority: self.priority.clone(),
        }
    }
}

/// Enumerates all bindings that make the positive atoms of `lits` possible
/// and every comparison true. Negative literals are ignored.
fn bindings(lits: &[Literal], u: &Universe, start: &Binding) -> Vec<Binding> {
    let positives: Vec<&Atom> = lits
        .iter()
        .filter_map(|l| match l {
            Literal::Pos(a) => Some(a),
            _ => None,
        })
        .collect();
    let cmps: Vec<&Literal> = lits
        .iter()
        .filter(|l| matches!(l, Literal::Cmp(..)))
        .collect();
    let mut out = Vec::new();
    let mut used = vec![false; positives.len()];
    let mut binding = start.clone();
    search(&positives, &cmps, u, &mut used, &mut binding, &mut out);
    out
}

fn cmps_ok(cmps: &[&Literal], binding: &Binding, complete: bool) -> bool {
    cmps.iter().all(|c| match c.eval_cmp(binding) {
        Some(v) => v,
        None => !complete,
    })
}

fn search(
    positives: &[&Atom],
    cmps: &[&Literal],
    u: &Universe,
    used: &mut [bool],
    binding: &mut Binding,
    out: &mut Vec<Binding>,
) {
    // Pick the open literal with the fewest candidates.
    let mut best: Option<(usize, &[AtomId])> = None;
    for (i, pat) in positives.iter().enumerate() {
        if used[i] {
            continue;
        }
        let c = u.candidates(pat, binding);
        if best.is_none_or(|(_, b)| c.len() < b.len()) {
            best = Some((i, c));
        }
    }
    let Some((i, cands)) = best else {
        if cmps_ok(cmps, binding, true) {
            out.push(binding.clone());
        }
        return;
    };
    used[i] = true;
    for &id in cands {
        let mark = binding.len();
        if positives[i].matches(u.atom(id), binding) && cmps_ok(cmps, binding, false) {
            search(positives, cmps, u, used, binding, out);
        }
        binding.truncate(mark);
    }
    used[i] = false;
}

fn positive_preds(rule: &Rule) -> Vec<(String, usize)> {
    let mut preds = Vec::new();
    let mut push = |lits: &[Literal]| {
        for l in lits {
            if let Literal::Pos(a) = l {
                let key = (a.pred.clone(), a.arity());
                if !preds.contains(&key) {
                    preds.push(key);
                }
            }
        }
    };
    push(&rule.body);
    if let Head::Choice(c) = &rule.head {
        for e in &c.elements {
            push(&e.condition);
        }
    }
    preds
}

fn bound(b: Option<i64>) -> Option<u32> {
    b.map(|v| v.max(0) as u32)
}

/// The ground rules contributed by one program part at one step.
#[derive(Debug, Clone)]
pub struct Layer {
    pub step: i64,
    rules: Vec<Rule>,
    preds: Vec<Vec<(String, usize)>>,
    /// Per rule: possible-atom counts of its positive predicates at the
    /// last instantiation, `None` before the first.
    seen: Vec<Option<Vec<usize>>>,
    ground: Vec<GroundRule>,
    dedup: HashSet<GroundRule>,
    choices: HashMap<(usize, Vec<AtomId>, Vec<AtomId>), usize>,
    elements: HashSet<(usize, AtomId, Vec<AtomId>)>,
}

impl Layer {
    /// A layer for `part` with its parameter substituted by `step`.
    pub fn new(part: &ProgramPart, step: i64) -> Self {
        Layer::from_rules(part.at_step(step), step)
    }

    pub fn from_rules(rules: Vec<Rule>, step: i64) -> Self {
        let preds = rules.iter().map(positive_preds).collect();
        let n = rules.len();
        Layer {
            step,
            rules,
            preds,
            seen: vec![None; n],
            ground: Vec::new(),
            dedup: HashSet::new(),
            choices: HashMap::new(),
            elements: HashSet::new(),
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn ground(&self) -> &[GroundRule] {
        &self.ground
    }

    /// Adds one more rule; it is instantiated on the next pass.
    pub fn push_rule(&mut self, rule: Rule) {
        self.preds.push(positive_preds(&rule));
        self.rules.push(rule);
        self.seen.push(None);
    }

    /// One instantiation pass over every rule whose positive predicates
    /// gained atoms since its last pass. Returns whether the universe grew.
    pub fn instantiate(&mut self, u: &mut Universe) -> Result<bool, GroundError> {
        let before = u.len();
        for r in 0..self.rules.len() {
            let counts: Vec<usize> = self.preds[r].iter().map(|(p, a)| u.count(p, *a)).collect();
            if self.seen[r].as_ref() == Some(&counts) {
                continue;
            }
            // Counts from before the pass, so atoms this rule derives
            // itself trigger another pass.
            self.instantiate_rule(r, u)?;
            self.seen[r] = Some(counts);
        }
        Ok(u.len() > before)
    }

    fn instantiate_rule(&mut self, r: usize, u: &mut Universe) -> Result<(), GroundError> {
        let rule = self.rules[r].clone();
        for binding in bindings(&rule.body, u, &Binding::new()) {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            let mut ok = true;
            for lit in &rule.body {
                match lit {
                    Literal::Pos(a) | Literal::Neg(a) => {
                        let Some(g) = a.apply(&binding) else {
                            ok = false;
                            break;
                        };
                        if matches!(lit, Literal::Pos(_)) {
                            pos.push(u.intern(g));
                        } else {
                            neg.push(u.intern(g));
                        }
                    }
                    Literal::Cmp(..) => {}
                }
            }
            if !ok {
                continue;
            }
            match &rule.head {
                Head::Atom(h) => {
                    let Some(g) = h.apply(&binding) else { continue };
                    let (id, _) = u.add(g, self.step)?;
                    self.emit(GroundRule::normal(id, pos, neg));
                }
                Head::Falsum => self.emit(GroundRule::constraint(pos, neg)),
                Head::Choice(c) => {
                    let key = (r, pos.clone(), neg.clone());
                    let slot = match self.choices.get(&key) {
                        Some(&s) => s,
                        None => {
                            self.ground.push(GroundRule {
                                head: GroundHead::Choice {
                                    elements: Vec::new(),
                                    lower: bound(c.lower),
                                    upper: bound(c.upper),
                                },
                                pos,
                                neg,
                            });
                            self.choices.insert(key, self.ground.len() - 1);
                            self.ground.len() - 1
                        }
                    };
                    for elem in &c.elements {
                        if elem.condition.iter().any(|l| matches!(l, Literal::Neg(_))) {
                            return Err(GroundError::NegativeCondition {
                                rule: rule.to_string(),
                            });
                        }
                        for eb in bindings(&elem.condition, u, &binding) {
                            let Some(atom) = elem.atom.apply(&eb) else {
                                continue;
                            };
                            let cond: Option<Vec<Atom>> = elem
                                .condition
                                .iter()
                                .filter_map(|l| match l {
                                    Literal::Pos(a) => Some(a.apply(&eb)),
                                    _ => None,
                                })
                                .collect();
                            let Some(cond) = cond else { continue };
                            let (id, _) = u.add(atom, self.step)?;
                            let cond: Vec<AtomId> = cond.into_iter().map(|a| u.intern(a)).collect();
                            if self.elements.insert((slot, id, cond.clone())) {
                                if let GroundHead::Choice { elements, .. } =
                                    &mut self.ground[slot].head
                                {
                                    elements.push(GroundElement {
                                        atom: id,
                                        condition: cond,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, rule: GroundRule) {
        if self.dedup.insert(rule.clone()) {
            self.ground.push(rule);
        }
    }
}

/// Instantiates `layers` until no layer adds a possible atom.
pub fn saturate(layers: &mut [&mut Layer], u: &mut Universe) -> Result<(), GroundError> {
    loop {
        let mut grew = false;
        for layer in layers.iter_mut() {
            grew |= layer.instantiate(u)?;
        }
        if !grew {
            return Ok(());
        }
    }
}

/// Grounds a single part at `step` against `universe`, extending it with
/// the derived atoms. The base part ignores `step`.
pub fn ground_part(
    part: &ProgramPart,
    step: i64,
    universe: &mut Universe,
) -> Result<Vec<GroundRule>, GroundError> {
    let mut layer = Layer::new(part, step);
    saturate(&mut [&mut layer], universe)?;
    Ok(layer.ground)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::parse::parse_program;

    fn heads(u: &Universe, rules: &[GroundRule]) -> Vec<String> {
        let mut v: Vec<String> = rules
            .iter()
            .filter_map(|r| match r.head {
                GroundHead::Atom(a) => Some(u.atom(a).to_string()),
                _ => None,
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn direct_instantiation() {
        let p = parse_program("office(office1). office(office2). room(X) :- office(X).").unwrap();
        let mut u = Universe::default();
        let rules = ground_part(&p.base, 0, &mut u).unwrap();
        assert_eq!(
            heads(&u, &rules),
            [
                "office(office1)",
                "office(office2)",
                "room(office1)",
                "room(office2)"
            ]
        );
    }

    #[test]
    fn cumulative_atoms_carry_the_step() {
        let p = parse_program("loc(a). loc(b). #cumulative t. at(L,t) :- loc(L).").unwrap();
        let mut u = Universe::default();
        ground_part(&p.base, 0, &mut u).unwrap();
        let rules = ground_part(&p.cumulative, 3, &mut u).unwrap();
        for h in heads(&u, &rules) {
            assert!(h.ends_with(",3)"), "{h}");
        }
    }

    #[test]
    fn underivable_bodies_are_dropped_negation_kept() {
        let p = parse_program("a. b :- c. d :- a, not e.").unwrap();
        let mut u = Universe::default();
        let rules = ground_part(&p.base, 0, &mut u).unwrap();
        assert_eq!(heads(&u, &rules), ["a", "d"]);
        let d = rules.iter().find(|r| r.neg.len() == 1).unwrap();
        assert_eq!(u.atom(d.neg[0]).to_string(), "e");
        assert!(!u.contains(&Atom::prop("e")));
    }

    #[test]
    fn recursion_reaches_fixpoint() {
        let p =
            parse_program("e(1,2). e(2,3). e(3,4). r(X,Y) :- e(X,Y). r(X,Z) :- r(X,Y), e(Y,Z).")
                .unwrap();
        let mut u = Universe::default();
        let rules = ground_part(&p.base, 0, &mut u).unwrap();
        assert!(heads(&u, &rules).contains(&"r(1,4)".to_string()));
    }

    #[test]
    fn comparisons_filter_bindings() {
        let p = parse_program("n(1). n(2). n(3). lt(X,Y) :- n(X), n(Y), X < Y.").unwrap();
        let mut u = Universe::default();
        let rules = ground_part(&p.base, 0, &mut u).unwrap();
        let lt: Vec<_> = heads(&u, &rules)
            .into_iter()
            .filter(|h| h.starts_with("lt"))
            .collect();
        assert_eq!(lt, ["lt(1,2)", "lt(1,3)", "lt(2,3)"]);
    }

    #[test]
    fn depth_cap_stops_runaway_terms() {
        let p = parse_program("n(z). n(s(X)) :- n(X).").unwrap();
        let mut u = Universe::new(4);
        let err = ground_part(&p.base, 0, &mut u).unwrap_err();
        assert!(matches!(err, GroundError::DepthExceeded { cap: 4, .. }));
    }

    #[test]
    fn choice_elements_grow_with_the_universe() {
        let p = parse_program("{ pick(X) : item(X) } 1 :- go. go. item(a).").unwrap();
        let mut u = Universe::default();
        let mut layer = Layer::new(&p.base, 0);
        saturate(&mut [&mut layer], &mut u).unwrap();
        let extra = parse_program("item(b).").unwrap();
        let mut more = Layer::new(&extra.base, 0);
        saturate(&mut [&mut layer, &mut more], &mut u).unwrap();
        let choices: Vec<_> = layer
            .ground()
            .iter()
            .filter_map(|r| match &r.head {
                GroundHead::Choice { elements, .. } => Some(elements.len()),
                _ => None,
            })
            .collect();
        assert_eq!(choices, [2]);
    }

    #[test]
    fn offsets_bind_through_matching() {
        let p = parse_program("#cumulative t. next(t) :- prev(t-1). prev(t).").unwrap();
        let mut u = Universe::default();
        let mut l1 = Layer::new(&p.cumulative, 1);
        let mut l2 = Layer::new(&p.cumulative, 2);
        saturate(&mut [&mut l1, &mut l2], &mut u).unwrap();
        assert!(u.contains(&Atom::new("next", vec![Term::Int(2)])));
        assert!(!u.contains(&Atom::new("next", vec![Term::Int(1)])));
    }
}
