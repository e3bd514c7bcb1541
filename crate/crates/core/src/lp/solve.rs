//! Stable-model search.
//!
//! Choice rules are compiled to pairs of normal rules over fresh complement
//! atoms (`a :- B, not a'` and `a' :- B, not a`); their cardinality bounds
//! are propagated once the rule body is true and re-checked at every leaf.
//! The search is chronological backtracking over atoms in a fixed order,
//! trying `false` before `true`. Propagation works on the program completion
//! (forward, backward and support reasoning); every full assignment is
//! verified against the reduct before it is reported.

use std::collections::BTreeSet;
use std::fmt;

use super::program::{AtomId, GroundHead, GroundProgram};
use super::stable::is_stable;
use super::term::Atom;

/// A stable model, restricted to the atoms of the input program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AnswerSet {
    pub atoms: BTreeSet<Atom>,
}

impl AnswerSet {
    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms of predicate `pred` with the given arity.
    pub fn with_pred<'a>(&'a self, pred: &'a str, arity: usize) -> impl Iterator<Item = &'a Atom> {
        self.atoms
            .iter()
            .filter(move |a| a.pred == pred && a.arity() == arity)
    }

    /// Rendered atoms in byte-lexicographic order.
    pub fn sorted_strings(&self) -> Vec<String> {
        let mut v: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        v.sort();
        v
    }
}

impl fmt::Display for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sorted_strings().join(" "))
    }
}

const UNASSIGNED: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

#[derive(Debug, Clone)]
struct NormalRule {
    head: Option<u32>,
    pos: Vec<u32>,
    neg: Vec<u32>,
}

#[derive(Debug, Clone)]
struct Card {
    pos: Vec<u32>,
    neg: Vec<u32>,
    elements: Vec<(u32, Vec<u32>)>,
    lower: Option<u32>,
    upper: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BodyState {
    True,
    False,
    Open,
}

#[derive(Debug)]
struct Frame {
    atom: u32,
    order_pos: usize,
    trail_len: usize,
    tried_true: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Start,
    Descend,
    Backtrack,
    Done,
}

/// Enumerates the stable models of a ground program in a deterministic
/// order. Construct with [`solve`].
pub struct Models<'a> {
    program: &'a GroundProgram,
    visible: usize,
    rules: Vec<NormalRule>,
    cards: Vec<Card>,
    supports: Vec<Vec<u32>>,
    occurs: Vec<Vec<u32>>,
    card_occurs: Vec<Vec<u32>>,
    order: Vec<u32>,
    value: Vec<i8>,
    trail: Vec<u32>,
    queue: Vec<u32>,
    stack: Vec<Frame>,
    phase: Phase,
    assumptions: Vec<(AtomId, bool)>,
}

/// Stable models of `program` consistent with `assumptions`
/// (atom, truth value), in deterministic order. Atoms are decided by
/// ascending `(priority, atom)`; `false` is tried first.
pub fn solve<'a>(program: &'a GroundProgram, assumptions: &[(AtomId, bool)]) -> Models<'a> {
    Models::new(program, assumptions)
}

impl<'a> Models<'a> {
    fn new(program: &'a GroundProgram, assumptions: &[(AtomId, bool)]) -> Self {
        let visible = program.atoms.len();
        let mut n = visible;
        let mut rules = Vec::new();
        let mut cards = Vec::new();
        for r in &program.rules {
            match &r.head {
                GroundHead::Atom(h) => rules.push(NormalRule {
                    head: Some(*h),
                    pos: r.pos.clone(),
                    neg: r.neg.clone(),
                }),
                GroundHead::Falsum => rules.push(NormalRule {
                    head: None,
                    pos: r.pos.clone(),
                    neg: r.neg.clone(),
                }),
                GroundHead::Choice {
                    elements,
                    lower,
                    upper,
                } => {
                    for e in elements {
                        let complement = n as u32;
                        n += 1;
                        let mut pos = r.pos.clone();
                        pos.extend(&e.condition);
                        let mut neg_a = r.neg.clone();
                        neg_a.push(complement);
                        let mut neg_c = r.neg.clone();
                        neg_c.push(e.atom);
                        rules.push(NormalRule {
                            head: Some(e.atom),
                            pos: pos.clone(),
                            neg: neg_a,
                        });
                        rules.push(NormalRule {
                            head: Some(complement),
                            pos,
                            neg: neg_c,
                        });
                    }
                    if lower.is_some() || upper.is_some() {
                        cards.push(Card {
                            pos: r.pos.clone(),
                            neg: r.neg.clone(),
                            elements: elements
                                .iter()
                                .map(|e| (e.atom, e.condition.clone()))
                                .collect(),
                            lower: *lower,
                            upper: *upper,
                        });
                    }
                }
            }
        }
        let mut supports = vec![Vec::new(); n];
        let mut occurs = vec![Vec::new(); n];
        for (i, r) in rules.iter().enumerate() {
            if let Some(h) = r.head {
                supports[h as usize].push(i as u32);
            }
            for &a in r.pos.iter().chain(&r.neg) {
                let list = &mut occurs[a as usize];
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        let mut card_occurs = vec![Vec::new(); n];
        for (i, c) in cards.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &a in c.pos.iter().chain(&c.neg) {
                seen.insert(a);
            }
            for (a, cond) in &c.elements {
                seen.insert(*a);
                seen.extend(cond.iter().copied());
            }
            for a in seen {
                card_occurs[a as usize].push(i as u32);
            }
        }
        let mut order: Vec<u32> = (0..visible as u32).collect();
        order.sort_by(|&a, &b| {
            program
                .priority(a)
                .cmp(&program.priority(b))
                .then_with(|| program.atom(a).cmp(program.atom(b)))
        });
        order.extend(visible as u32..n as u32);
        Models {
            program,
            visible,
            rules,
            cards,
            supports,
            occurs,
            card_occurs,
            order,
            value: vec![UNASSIGNED; n],
            trail: Vec::new(),
            queue: Vec::new(),
            stack: Vec::new(),
            phase: Phase::Start,
            assumptions: assumptions.to_vec(),
        }
    }

    fn assign(&mut self, atom: u32, truth: bool) -> bool {
        let v = if truth { TRUE } else { FALSE };
        match self.value[atom as usize] {
            UNASSIGNED => {
                self.value[atom as usize] = v;
                self.trail.push(atom);
                self.queue.push(atom);
                true
            }
            cur => cur == v,
        }
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let a = self.trail.pop().unwrap();
            self.value[a as usize] = UNASSIGNED;
        }
        self.queue.clear();
    }

    fn body_state(&self, pos: &[u32], neg: &[u32]) -> BodyState {
        let mut open = false;
        for &a in pos {
            match self.value[a as usize] {
                FALSE => return BodyState::False,
                UNASSIGNED => open = true,
                _ => {}
            }
        }
        for &a in neg {
            match self.value[a as usize] {
                TRUE => return BodyState::False,
                UNASSIGNED => open = true,
                _ => {}
            }
        }
        if open {
            BodyState::Open
        } else {
            BodyState::True
        }
    }

    fn make_body_true(&mut self, rule: usize) -> bool {
        let (pos, neg) = {
            let r = &self.rules[rule];
            (r.pos.clone(), r.neg.clone())
        };
        pos.iter().all(|&a| self.assign(a, true)) && neg.iter().all(|&a| self.assign(a, false))
    }

    /// Forces an open body to be false if exactly one literal is open.
    fn falsify_body(&mut self, pos: &[u32], neg: &[u32]) -> bool {
        let mut open: Option<(u32, bool)> = None;
        for &a in pos {
            match self.value[a as usize] {
                FALSE => return true,
                UNASSIGNED => {
                    if open.is_some() {
                        return true;
                    }
                    open = Some((a, false));
                }
                _ => {}
            }
        }
        for &a in neg {
            match self.value[a as usize] {
                TRUE => return true,
                UNASSIGNED => {
                    if open.is_some() {
                        return true;
                    }
                    open = Some((a, true));
                }
                _ => {}
            }
        }
        match open {
            Some((a, truth)) => self.assign(a, truth),
            // Body fully true.
            None => false,
        }
    }

    fn check_rule(&mut self, i: usize) -> bool {
        let head = self.rules[i].head;
        let state = {
            let r = &self.rules[i];
            self.body_state(&r.pos, &r.neg)
        };
        match state {
            BodyState::True => match head {
                Some(h) => self.assign(h, true),
                None => false,
            },
            BodyState::False => match head {
                Some(h) => self.check_support(h),
                None => true,
            },
            BodyState::Open => {
                let head_false = head.is_none_or(|h| self.value[h as usize] == FALSE);
                if head_false {
                    let (pos, neg) = {
                        let r = &self.rules[i];
                        (r.pos.clone(), r.neg.clone())
                    };
                    self.falsify_body(&pos, &neg)
                } else if let Some(h) = head {
                    if self.value[h as usize] == TRUE {
                        self.check_support(h)
                    } else {
                        true
                    }
                } else {
                    true
                }
            }
        }
    }

    /// Support reasoning for one atom: unsupported atoms are false, a true
    /// atom with a single remaining support forces that support's body.
    fn check_support(&mut self, atom: u32) -> bool {
        let v = self.value[atom as usize];
        if v == FALSE {
            return true;
        }
        let mut alive = None;
        let mut count = 0;
        for &r in &self.supports[atom as usize] {
            let rule = &self.rules[r as usize];
            if self.body_state(&rule.pos, &rule.neg) != BodyState::False {
                count += 1;
                alive = Some(r);
                if count > 1 {
                    break;
                }
            }
        }
        match (v, count) {
            (_, 0) => self.assign(atom, false),
            (TRUE, 1) => self.make_body_true(alive.unwrap() as usize),
            _ => true,
        }
    }

    fn check_card(&mut self, i: usize) -> bool {
        let card = self.cards[i].clone();
        if self.body_state(&card.pos, &card.neg) != BodyState::True {
            return true;
        }
        // Per distinct atom: whether some element's condition is true, and
        // whether some element's condition is not yet false.
        let mut atoms: Vec<(u32, bool, bool)> = Vec::new();
        for (a, cond) in &card.elements {
            let cond_true = cond.iter().all(|c| self.value[*c as usize] == TRUE);
            let cond_alive = !cond.iter().any(|c| self.value[*c as usize] == FALSE);
            match atoms.iter_mut().find(|(x, _, _)| x == a) {
                Some(entry) => {
                    entry.1 |= cond_true;
                    entry.2 |= cond_alive;
                }
                None => atoms.push((*a, cond_true, cond_alive)),
            }
        }
        let mut chosen = 0u32;
        let mut open = Vec::new();
        let mut open_uncertain = 0u32;
        for (a, cond_true, cond_alive) in atoms {
            let va = self.value[a as usize];
            if va == FALSE || !cond_alive {
                continue;
            }
            if va == TRUE && cond_true {
                chosen += 1;
            } else if cond_true {
                open.push(a);
            } else {
                open_uncertain += 1;
            }
        }
        let possible = chosen + open.len() as u32 + open_uncertain;
        if card.upper.is_some_and(|u| chosen > u) || card.lower.is_some_and(|l| possible < l) {
            return false;
        }
        if card.upper == Some(chosen) {
            for &a in &open {
                if !self.assign(a, false) {
                    return false;
                }
            }
        } else if card.lower == Some(possible) && open_uncertain == 0 {
            for &a in &open {
                if !self.assign(a, true) {
                    return false;
                }
            }
        }
        true
    }

    fn propagate(&mut self) -> bool {
        while let Some(a) = self.queue.pop() {
            for k in 0..self.occurs[a as usize].len() {
                let r = self.occurs[a as usize][k] as usize;
                if !self.check_rule(r) {
                    self.queue.clear();
                    return false;
                }
            }
            if !self.check_support(a) {
                self.queue.clear();
                return false;
            }
            if self.value[a as usize] == FALSE {
                for k in 0..self.supports[a as usize].len() {
                    let r = self.supports[a as usize][k] as usize;
                    if !self.check_rule(r) {
                        self.queue.clear();
                        return false;
                    }
                }
            }
            for k in 0..self.card_occurs[a as usize].len() {
                let c = self.card_occurs[a as usize][k] as usize;
                if !self.check_card(c) {
                    self.queue.clear();
                    return false;
                }
            }
        }
        true
    }

    fn initial(&mut self) -> bool {
        for (a, truth) in self.assumptions.clone() {
            if (a as usize) >= self.visible || !self.assign(a, truth) {
                return false;
            }
        }
        for i in 0..self.rules.len() {
            if !self.check_rule(i) {
                return false;
            }
        }
        for a in 0..self.value.len() as u32 {
            if !self.check_support(a) {
                return false;
            }
        }
        for i in 0..self.cards.len() {
            if !self.check_card(i) {
                return false;
            }
        }
        self.propagate()
    }

    fn next_open(&self, from: usize) -> Option<usize> {
        (from..self.order.len()).find(|&p| self.value[self.order[p] as usize] == UNASSIGNED)
    }

    fn leaf_model(&self) -> Option<AnswerSet> {
        let model: BTreeSet<AtomId> = (0..self.visible as u32)
            .filter(|&a| self.value[a as usize] == TRUE)
            .collect();
        if !is_stable(self.program, &model) {
            return None;
        }
        Some(AnswerSet {
            atoms: model
                .into_iter()
                .map(|a| self.program.atom(a).clone())
                .collect(),
        })
    }

    /// Pops exhausted frames and flips the deepest untried one.
    fn backtrack(&mut self) {
        while let Some(frame) = self.stack.last_mut() {
            if frame.tried_true {
                let len = frame.trail_len;
                self.stack.pop();
                self.undo_to(len);
                continue;
            }
            frame.tried_true = true;
            let (atom, len) = (frame.atom, frame.trail_len);
            self.undo_to(len);
            if self.assign(atom, true) && self.propagate() {
                self.phase = Phase::Descend;
                return;
            }
        }
        self.phase = Phase::Done;
    }
}

impl Iterator for Models<'_> {
    type Item = AnswerSet;

    fn next(&mut self) -> Option<AnswerSet> {
        loop {
            match self.phase {
                Phase::Done => return None,
                Phase::Start => {
                    self.phase = if self.initial() {
                        Phase::Descend
                    } else {
                        Phase::Done
                    };
                }
                Phase::Backtrack => self.backtrack(),
                Phase::Descend => {
                    let from = self.stack.last().map_or(0, |f| f.order_pos + 1);
                    match self.next_open(from) {
                        None => {
                            self.phase = Phase::Backtrack;
                            if let Some(m) = self.leaf_model() {
                                return Some(m);
                            }
                        }
                        Some(p) => {
                            let atom = self.order[p];
                            self.stack.push(Frame {
                                atom,
                                order_pos: p,
                                trail_len: self.trail.len(),
                                tried_true: false,
                            });
                            if !(self.assign(atom, false) && self.propagate()) {
                                self.phase = Phase::Backtrack;
                            }
                        }
                    }
                }
            }
        }
    }
}
