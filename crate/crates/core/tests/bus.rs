mod common;

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use actasp::bus::{Bus, GoalState, InterfaceMsg};

use common::{fuzz_trial, Probe};

#[test]
fn subscribers_see_one_global_order() {
    let bus = Bus::with_capacity(4);
    let subs: Vec<_> = (0..3)
        .map(|_| bus.subscribe::<InterfaceMsg>("chatter").unwrap())
        .collect();
    let readers: Vec<_> = subs
        .into_iter()
        .map(|s| {
            thread::spawn(move || {
                let mut seen = Vec::new();
                while seen.len() < 200 {
                    seen.push(s.recv().unwrap().facts[0].clone());
                }
                seen
            })
        })
        .collect();
    let writers: Vec<_> = (0..4)
        .map(|w| {
            let p = bus.advertise::<InterfaceMsg>("chatter").unwrap();
            thread::spawn(move || {
                for i in 0..50 {
                    p.publish(InterfaceMsg::new("x", vec![format!("m({w},{i})")]));
                }
            })
        })
        .collect();
    for w in writers {
        w.join().unwrap();
    }
    let orders: Vec<Vec<String>> = readers.into_iter().map(|r| r.join().unwrap()).collect();
    assert_eq!(orders[0].len(), 200);
    assert!(orders.iter().all(|o| o == &orders[0]));
    // Each writer's own messages stay in the order it sent them.
    for w in 0..4 {
        let mine: Vec<&String> = orders[0]
            .iter()
            .filter(|m| m.starts_with(&format!("m({w},")))
            .collect();
        let want: Vec<String> = (0..50).map(|i| format!("m({w},{i})")).collect();
        assert_eq!(mine, want.iter().collect::<Vec<_>>());
    }
}

#[test]
fn handler_threads_receive_everything() {
    let bus = Bus::new();
    let got = Arc::new(Mutex::new(Vec::new()));
    let sink = got.clone();
    let handle = bus
        .subscribe_with::<InterfaceMsg, _>("in", move |m| sink.lock().unwrap().push(m.interface))
        .unwrap();
    let p = bus.advertise::<InterfaceMsg>("in").unwrap();
    for i in 0..10 {
        p.publish(InterfaceMsg::new(format!("n{i}"), vec![]));
    }
    drop(p);
    drop(bus);
    handle.join().unwrap();
    assert_eq!(got.lock().unwrap().len(), 10);
}

#[test]
fn cancel_from_another_thread_preempts() {
    let bus = Bus::new();
    let server = bus.register_action::<Probe>("probe").unwrap();
    let client = bus.action_client::<Probe>("probe").unwrap();
    let goal = client.send_goal(5);
    let worker = thread::spawn(move || {
        let g = loop {
            if let Some(g) = server.take_goal() {
                break g;
            }
            thread::yield_now();
        };
        g.accept().unwrap();
        while !g.cancel_requested() {
            g.publish_feedback(1);
            thread::sleep(Duration::from_millis(1));
        }
        g.preempted(0).unwrap();
    });
    while goal.state() != GoalState::Active {
        thread::yield_now();
    }
    goal.cancel();
    let out = goal
        .wait_result(Duration::from_secs(5))
        .expect("result arrives");
    worker.join().unwrap();
    assert_eq!(out.state, GoalState::Preempted);
    assert_eq!(
        goal.history(),
        [
            GoalState::Pending,
            GoalState::Active,
            GoalState::Preempting,
            GoalState::Preempted
        ]
    );
    assert!(goal.take_result().is_none());
}

#[test]
fn protocol_fuzz_smoke() {
    for seed in 5000..5100 {
        fuzz_trial(seed).unwrap();
    }
}
