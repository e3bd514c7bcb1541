mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use actasp::lp::{
    is_stable, least_model, parse_program, reduct, saturate, solve, AtomId, Layer, Universe,
};

use common::*;

#[test]
fn solver_agrees_with_brute_force() {
    assert_eq!(oracle_mismatch(7, 300), None);
}

#[test]
fn stability_check_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let p = random_program(&mut rng);
        let n = p.atoms.len() as u32;
        for _ in 0..8 {
            let m: BTreeSet<AtomId> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            assert_eq!(
                is_stable(&p, &m),
                is_stable_oracle(&p, &m),
                "candidate {m:?}"
            );
        }
    }
}

#[test]
fn every_model_is_reported_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let p = random_program(&mut rng);
        let models = solver_models(&p);
        let distinct: BTreeSet<_> = models.iter().collect();
        assert_eq!(distinct.len(), models.len());
    }
}

fn ground(text: &str) -> actasp::lp::GroundProgram {
    let prog = parse_program(text).unwrap();
    let mut u = Universe::default();
    let mut base = Layer::new(&prog.base, 0);
    saturate(&mut [&mut base], &mut u).unwrap();
    u.program(base.ground())
}

fn models(text: &str) -> BTreeSet<Vec<String>> {
    solve(&ground(text), &[])
        .map(|m| m.sorted_strings())
        .collect()
}

fn set(models: &[&[&str]]) -> BTreeSet<Vec<String>> {
    models
        .iter()
        .map(|m| m.iter().map(|s| s.to_string()).collect())
        .collect()
}

#[test]
fn textbook_programs() {
    assert_eq!(models("p :- not q. q :- not p."), set(&[&["p"], &["q"]]));
    assert_eq!(models("p :- not p."), set(&[]));
    assert_eq!(models("p :- q. q :- p."), set(&[&[]]));
    assert_eq!(
        models("node(1). node(2). node(3). edge(1,2). edge(2,3). reach(1). reach(Y) :- reach(X), edge(X,Y)."),
        set(&[&["edge(1,2)", "edge(2,3)", "node(1)", "node(2)", "node(3)", "reach(1)", "reach(2)", "reach(3)"]])
    );
    assert_eq!(models("1 { a; b; c } 1. :- a."), set(&[&["b"], &["c"]]));
    assert_eq!(models("{ a; a }. :- not a."), set(&[&["a"]]));
}

#[test]
fn reduct_of_even_loop() {
    let p = ground("p :- not q. q :- not p.");
    let p_id = (0..p.atoms.len() as u32)
        .find(|&i| p.atom(i).to_string() == "p")
        .unwrap();
    let m: BTreeSet<AtomId> = [p_id].into();
    let red = reduct(&p, &m);
    assert_eq!(least_model(&red), m);
    assert!(is_stable(&p, &m));
    assert!(!is_stable(&p, &BTreeSet::new()));
}
