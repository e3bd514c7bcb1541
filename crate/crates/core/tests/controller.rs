mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use actasp::lp::{Head, Term};
use actasp::runner::{Event, Runner, Scenario};
use actasp::taskctl::{ControllerConfig, CycleReport, GoalStatus};
use actasp::world::WorldConfig;

use common::*;

fn check_commit_soundness(reports: &[CycleReport]) {
    let mut committed = Vec::new();
    for r in reports {
        for a in &committed {
            assert!(
                r.plan.contains(a),
                "cycle {}: plan lost committed {a}",
                r.cycle
            );
        }
        if let Some(call) = &r.action {
            assert_eq!(call.cycle, r.cycle);
            let atom = call.to_atom();
            assert!(
                r.plan.contains(&atom),
                "cycle {}: dispatched {atom} not in plan",
                r.cycle
            );
            committed.push(atom);
        }
    }
}

fn check_keywords(reports: &[CycleReport]) {
    for r in reports {
        for item in &r.update.items {
            if let Head::Atom(h) = &item.rule.head {
                match h.pred.as_str() {
                    "_request" => assert_eq!(h.arity(), 2),
                    "_return" => assert_eq!(h.arity(), 3),
                    other => panic!("unexpected fact {other}"),
                }
            }
        }
        for a in &r.plan {
            assert_eq!(a.arity(), 3);
        }
    }
}

#[test]
fn shipped_runs_keep_commitments() {
    for name in [
        "two_requests",
        "cancel_after_pickup",
        "blockage",
        "capacity",
    ] {
        let runner = run_shipped(name);
        check_commit_soundness(runner.reports());
        check_keywords(runner.reports());
    }
}

#[test]
fn no_goals_means_idle_cycles() {
    let cfg = run_config("empty");
    let mut runner = Runner::from_config(&cfg).unwrap();
    for _ in 0..3 {
        let r = runner.step().unwrap();
        assert!(r.plan.is_empty() && r.action.is_none() && r.update.is_empty());
    }
    assert_eq!(runner.controller.cycle(), 4);
}

fn offices4() -> (String, WorldConfig) {
    let program = std::fs::read_to_string(asset("mailbot.lp")).unwrap();
    let world = WorldConfig::load(&asset("worlds/offices4.world")).unwrap();
    (program, world)
}

fn runner_with(world: WorldConfig, scenario: Scenario) -> Runner {
    let (program, _) = offices4();
    let tags = actasp::runner::line_tags(&world);
    Runner::new(
        &program,
        world,
        tags,
        scenario,
        &actasp::interfaces::AdapterSpec::defaults(),
        ControllerConfig::default(),
    )
    .unwrap()
}

#[test]
fn impossible_goal_is_aborted_and_later_goals_still_run() {
    let (_, mut world) = offices4();
    world.blocked.push(actasp::world::Blockage {
        a: "office2".into(),
        b: "office3".into(),
        from: None,
        to: None,
    });
    let scenario: Scenario = "at 1 request office3 office4 1\nat 6 request office1 office2 2\n"
        .parse()
        .unwrap();
    let mut runner = runner_with(world, scenario);
    runner.run(30).unwrap();
    let goals = runner.goal_summary();
    assert_eq!(
        goals,
        [
            ("1".to_string(), GoalStatus::Aborted),
            ("2".to_string(), GoalStatus::Succeeded)
        ]
    );
    assert!(runner.reports().iter().any(|r| r.horizon.is_none()));
}

#[test]
fn randomized_scenarios_follow_the_goal_lifecycle() {
    let (_, world) = offices4();
    let offices = ["office1", "office2", "office3", "office4"];
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events = Vec::new();
        let mut cycle = 1;
        let requests = rng.random_range(1..=2);
        for id in 1..=requests {
            cycle += rng.random_range(0..3);
            let from = offices[rng.random_range(0..4)];
            let mut to = offices[rng.random_range(0..4)];
            while to == from {
                to = offices[rng.random_range(0..4)];
            }
            events.push((
                cycle,
                Event::Request {
                    from: from.into(),
                    to: to.into(),
                    id: id.to_string(),
                },
            ));
            if rng.random_bool(0.4) {
                events.push((
                    cycle + rng.random_range(0..4),
                    Event::Cancel(id.to_string()),
                ));
            }
        }
        events.sort_by_key(|(c, _)| *c);
        let mut runner = runner_with(world.clone(), Scenario { events });
        runner.run(40).unwrap();
        for g in runner.controller.goals() {
            assert!(
                g.status.is_terminal(),
                "seed {seed}: goal {} is {}",
                g.id,
                g.status
            );
            assert!(
                g.history.windows(2).all(|w| w[0].allows(w[1])),
                "seed {seed}: history {:?}",
                g.history
            );
            if g.status == GoalStatus::Succeeded {
                let to = g.destination().unwrap().to_string();
                let place = runner.package_place(&g.package.to_string()).cloned();
                assert_eq!(place, Some(actasp::world::Place::At(to)), "seed {seed}");
            }
        }
        check_commit_soundness(runner.reports());
        check_keywords(runner.reports());
        let goals: Vec<&Term> = runner
            .controller
            .goals()
            .iter()
            .map(|g| &g.package)
            .collect();
        assert_eq!(goals.len(), requests as usize);
    }
}
