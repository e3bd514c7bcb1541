mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use actasp::bus::{Bus, GoalHandle, GoalState};
use actasp::interfaces::TagTable;
use actasp::world::{
    Deliver, Navigate, Pickup, Place, World, WorldConfig, DELIVER_SERVER, NAV_SERVER, PICKUP_SERVER,
};

use common::asset;

fn loop_world() -> (WorldConfig, TagTable) {
    let mut cfg = WorldConfig::load(&asset("worlds/offices_loop.world")).unwrap();
    cfg.blocked.clear();
    let tags = TagTable::load(&asset("tags/offices_loop.tags")).unwrap();
    (cfg, tags)
}

#[test]
fn random_operations_keep_world_invariants() {
    let (cfg, tags) = loop_world();
    let labels = cfg.locations.clone();
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bus = Bus::new();
        let mut world = World::new(cfg.clone(), tags.clone(), &bus).unwrap();
        for p in 0..5 {
            let at = &labels[rng.random_range(0..labels.len())];
            world.ensure_package(&p.to_string(), at).unwrap();
        }
        let nav = bus.action_client::<Navigate>(NAV_SERVER).unwrap();
        let pick = bus.action_client::<Pickup>(PICKUP_SERVER).unwrap();
        let drop = bus.action_client::<Deliver>(DELIVER_SERVER).unwrap();
        let mut navs: Vec<(String, GoalHandle<Navigate>)> = Vec::new();
        for _ in 0..150 {
            match rng.random_range(0..10) {
                0 => {
                    let l = labels[rng.random_range(0..labels.len())].clone();
                    navs.push((l.clone(), nav.send_goal(tags.pose(&l).unwrap())));
                }
                1 => {
                    pick.send_goal(rng.random_range(0..5).to_string());
                }
                2 => {
                    drop.send_goal(rng.random_range(0..5).to_string());
                }
                3 => {
                    let (a, b) = (
                        &labels[rng.random_range(0..labels.len())],
                        &labels[rng.random_range(0..labels.len())],
                    );
                    if rng.random_bool(0.5) {
                        world.block(a, b);
                    } else {
                        world.unblock(a, b);
                    }
                }
                _ => {}
            }
            world.step();
            let state = world.state();
            assert!(
                state.carried() <= cfg.capacity,
                "seed {seed}: over capacity"
            );
            assert_eq!(state.packages.len(), 5, "seed {seed}: package lost");
            for place in state.packages.values() {
                if let Place::At(l) = place {
                    assert!(cfg.has_location(l));
                }
            }
            for (label, h) in &navs {
                if h.state() == GoalState::Succeeded {
                    if let Some(out) = h.take_result() {
                        assert_eq!(out.result.unwrap().location, *label, "seed {seed}");
                        assert_eq!(&world.state().robot, label, "seed {seed}");
                    }
                }
            }
            navs.retain(|(_, h)| !h.state().is_terminal());
        }
    }
}

#[test]
fn shortest_path_prefers_cheap_edges() {
    let (cfg, _) = loop_world();
    assert_eq!(
        cfg.shortest_path("office1", "office4").unwrap(),
        ["office2", "office3", "office4"]
    );
    assert_eq!(
        cfg.shortest_path("office1", "corridor").unwrap(),
        ["corridor"]
    );
}

#[test]
fn shipped_world_files_parse() {
    let w = WorldConfig::load(&asset("worlds/offices4.world")).unwrap();
    assert_eq!(w.locations.len(), 4);
    assert_eq!(w.capacity, 3);
    assert!(w.facts().contains("edge(office3,office4)."));
    let l = WorldConfig::load(&asset("worlds/offices_loop.world")).unwrap();
    assert_eq!(l.blocked.len(), 1);
    let tags = TagTable::load(&asset("tags/offices_loop.tags")).unwrap();
    assert!(tags.missing(&l.locations).is_empty());
}
