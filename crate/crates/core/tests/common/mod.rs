#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use actasp::bus::{Action, Bus, GoalHandle, GoalState, ServerGoal};
use actasp::lp::{solve, Atom, GroundElement, GroundHead, GroundProgram, GroundRule};
use actasp::runner::{RunConfig, Runner};

pub fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../assets")
        .join(rel)
}

pub fn run_config(name: &str) -> RunConfig {
    RunConfig::load(&asset(&format!("runs/{name}.toml"))).expect("shipped config loads")
}

/// Loads a shipped run and runs it to the end.
pub fn run_shipped(name: &str) -> Runner {
    let cfg = run_config(name);
    let mut runner = Runner::from_config(&cfg).expect("shipped run builds");
    runner.run(cfg.max_cycles).expect("shipped run completes");
    runner
}

/// Runs `name` cycle by cycle and, after each cycle, checks that the
/// horizon one below the one answered at has no answer set. Returns the
/// runner and the number of cycles checked.
pub fn run_checking_minimality(name: &str) -> Result<(Runner, usize), String> {
    let cfg = run_config(name);
    let mut runner = Runner::from_config(&cfg).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for _ in 0..cfg.max_cycles {
        let (cycle, horizon) = {
            let r = runner.step().map_err(|e| e.to_string())?;
            (r.cycle, r.horizon)
        };
        if let Some(h) = horizon {
            if h > cycle {
                let below = runner
                    .controller
                    .server_mut()
                    .state_mut()
                    .solve_at_horizon(h - 1)
                    .map_err(|e| e.to_string())?;
                if below.is_some() {
                    return Err(format!(
                        "{name}: cycle {cycle} answered at {h} but {} is satisfiable",
                        h - 1
                    ));
                }
                checked += 1;
            }
        }
        if !runner.has_work() && !runner.events_left() {
            break;
        }
    }
    Ok((runner, checked))
}

// ---------------------------------------------------------------------------
// Random ground programs and a brute-force stable model oracle.

pub fn random_program(rng: &mut ChaCha8Rng) -> GroundProgram {
    let n = rng.random_range(1..=12usize);
    let mut p = GroundProgram::new();
    let ids: Vec<u32> = (0..n)
        .map(|i| p.intern(Atom::prop(format!("a{i}"))))
        .collect();
    let pick = |rng: &mut ChaCha8Rng, max: usize| -> Vec<u32> {
        let k = rng.random_range(0..=max);
        (0..k).map(|_| ids[rng.random_range(0..n)]).collect()
    };
    let rules = rng.random_range(1..=20usize);
    for _ in 0..rules {
        let pos = pick(rng, 2);
        let neg = pick(rng, 2);
        let kind = rng.random_range(0..100);
        let rule = if kind < 10 {
            GroundRule::fact(ids[rng.random_range(0..n)])
        } else if kind < 55 {
            GroundRule::normal(ids[rng.random_range(0..n)], pos, neg)
        } else if kind < 70 {
            GroundRule::constraint(pos, neg)
        } else {
            let k = rng.random_range(1..=3usize);
            let elements = (0..k)
                .map(|_| GroundElement {
                    atom: ids[rng.random_range(0..n)],
                    condition: if rng.random_bool(0.2) {
                        vec![ids[rng.random_range(0..n)]]
                    } else {
                        Vec::new()
                    },
                })
                .collect();
            let lower = rng.random_bool(0.3).then(|| rng.random_range(0..=2u32));
            let upper = rng.random_bool(0.3).then(|| rng.random_range(0..=2u32));
            GroundRule {
                head: GroundHead::Choice {
                    elements,
                    lower,
                    upper,
                },
                pos,
                neg,
            }
        };
        p.add(rule);
    }
    p
}

fn holds(set: &BTreeSet<u32>, pos: &[u32], neg: &[u32]) -> bool {
    pos.iter().all(|a| set.contains(a)) && !neg.iter().any(|a| set.contains(a))
}

/// Whether `m` is a stable model: it satisfies every rule, and it is the
/// least model of the reduct, where a choice rule contributes `e :- body+,
/// cond` for each chosen element `e` in `m`.
pub fn is_stable_oracle(p: &GroundProgram, m: &BTreeSet<u32>) -> bool {
    for r in &p.rules {
        if !holds(m, &r.pos, &r.neg) {
            continue;
        }
        match &r.head {
            GroundHead::Atom(h) if !m.contains(h) => return false,
            GroundHead::Falsum => return false,
            GroundHead::Choice {
                elements,
                lower,
                upper,
            } => {
                let chosen: BTreeSet<u32> = elements
                    .iter()
                    .filter(|e| holds(m, &e.condition, &[]) && m.contains(&e.atom))
                    .map(|e| e.atom)
                    .collect();
                let c = chosen.len() as u32;
                if lower.is_some_and(|l| c < l) || upper.is_some_and(|u| c > u) {
                    return false;
                }
            }
            _ => {}
        }
    }
    let mut definite: Vec<(u32, Vec<u32>)> = Vec::new();
    for r in &p.rules {
        if r.neg.iter().any(|a| m.contains(a)) {
            continue;
        }
        match &r.head {
            GroundHead::Atom(h) => definite.push((*h, r.pos.clone())),
            GroundHead::Choice { elements, .. } => {
                for e in elements.iter().filter(|e| m.contains(&e.atom)) {
                    let mut body = r.pos.clone();
                    body.extend(&e.condition);
                    definite.push((e.atom, body));
                }
            }
            GroundHead::Falsum => {}
        }
    }
    let mut least = BTreeSet::new();
    loop {
        let before = least.len();
        for (h, body) in &definite {
            if body.iter().all(|a| least.contains(a)) {
                least.insert(*h);
            }
        }
        if least.len() == before {
            break;
        }
    }
    &least == m
}

pub fn brute_force_models(p: &GroundProgram) -> BTreeSet<BTreeSet<u32>> {
    let n = p.atoms.len() as u32;
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let m: BTreeSet<u32> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if is_stable_oracle(p, &m) {
            out.insert(m);
        }
    }
    out
}

pub fn solver_models(p: &GroundProgram) -> Vec<BTreeSet<u32>> {
    solve(p, &[])
        .map(|m| {
            m.atoms
                .iter()
                .map(|a| p.atoms.get(a).expect("model atom is interned"))
                .collect()
        })
        .collect()
}

/// Compares the solver with the oracle on `trials` programs from `seed`.
/// Returns the first disagreement.
pub fn oracle_mismatch(seed: u64, trials: usize) -> Option<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let p = random_program(&mut rng);
        let got = solver_models(&p);
        let got_set: BTreeSet<BTreeSet<u32>> = got.iter().cloned().collect();
        let want = brute_force_models(&p);
        if got_set.len() != got.len() || got_set != want {
            return Some(format!(
                "trial {t}: {} rules over {} atoms, solver {:?}, oracle {:?}",
                p.rules.len(),
                p.atoms.len(),
                got,
                want
            ));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Action protocol fuzzing.

pub struct Probe;

impl Action for Probe {
    type Goal = u32;
    type Feedback = u32;
    type Result = u32;
}

fn legal_history(h: &[GoalState]) -> bool {
    h.first() == Some(&GoalState::Pending) && h.windows(2).all(|w| w[0].allows(w[1]))
}

/// One random interleaving of client and server operations. Checks that
/// every recorded history is legal and that each finished goal hands out
/// exactly one result.
pub fn fuzz_trial(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bus = Bus::new();
    let server = bus
        .register_action::<Probe>("probe")
        .map_err(|e| e.to_string())?;
    let client = bus
        .action_client::<Probe>("probe")
        .map_err(|e| e.to_string())?;
    let mut handles: Vec<(GoalHandle<Probe>, usize)> = Vec::new();
    let mut held: Vec<ServerGoal<Probe>> = Vec::new();
    let steps = rng.random_range(5..60);
    for _ in 0..steps {
        match rng.random_range(0..9) {
            0 | 1 => handles.push((client.send_goal(rng.random()), 0)),
            2 if !handles.is_empty() => {
                let i = rng.random_range(0..handles.len());
                handles[i].0.cancel();
            }
            3 => held.extend(server.take_goal()),
            4..=7 if !held.is_empty() => {
                let i = rng.random_range(0..held.len());
                let g = &held[i];
                let before = g.state();
                let value = rng.random();
                let attempt = match rng.random_range(0..5) {
                    0 => Some((g.accept(), GoalState::Active)),
                    1 => Some((g.succeed(value), GoalState::Succeeded)),
                    2 => Some((g.abort(value), GoalState::Aborted)),
                    3 => Some((g.preempted(value), GoalState::Preempted)),
                    _ => {
                        g.publish_feedback(value);
                        None
                    }
                };
                // Only this thread moves goals, so `before` is exact.
                if let Some((res, target)) = attempt {
                    if res.is_ok() != before.allows(target) {
                        return Err(format!("seed {seed}: {before} -> {target} gave {res:?}"));
                    }
                    if res.is_err() && g.state() != before {
                        return Err(format!("seed {seed}: refused transition changed state"));
                    }
                }
            }
            _ => {
                for (h, taken) in &mut handles {
                    if h.take_result().is_some() {
                        *taken += 1;
                    }
                }
            }
        }
    }
    // Wind everything down.
    for (h, _) in &handles {
        h.cancel();
    }
    held.extend(server.take_goal());
    for g in &held {
        match g.state() {
            GoalState::Pending => {
                let _ = g.accept();
                let _ = g.succeed(0);
            }
            GoalState::Active => {
                let _ = g.succeed(0);
            }
            GoalState::Preempting => {
                let _ = g.preempted(0);
            }
            _ => {}
        }
    }
    for (h, taken) in &mut handles {
        // Goals never taken by the server were preempted by the cancel.
        if h.take_result().is_some() {
            *taken += 1;
        }
        if h.take_result().is_some() {
            return Err(format!(
                "seed {seed}: goal {} handed out a second result",
                h.id()
            ));
        }
        if !legal_history(&h.history()) {
            return Err(format!(
                "seed {seed}: goal {} history {:?}",
                h.id(),
                h.history()
            ));
        }
        if !h.state().is_terminal() {
            return Err(format!(
                "seed {seed}: goal {} stuck in {}",
                h.id(),
                h.state()
            ));
        }
        if *taken != 1 {
            return Err(format!(
                "seed {seed}: goal {} gave {} results",
                h.id(),
                taken
            ));
        }
    }
    Ok(())
}
