mod common;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fastpoints::geometry::Aabb;
use fastpoints::octree::{BuildConfig, NodeName, OctreeHierarchy};
use fastpoints::synthetic::Distribution;
use fastpoints::traverse::{
    aabb_visible, extract_frustum, node_priority, plan_traversal, select_nodes, Action, CacheEvent, CameraState,
    Dispatcher, LoadTicket, NodeCache, ResidencyKind, TraversalAgent, TraversalConfig, TraversalPlan,
};
use fastpoints::Error;

use common::*;

fn cube() -> Aabb {
    Aabb::new([0.0; 3], [100.0; 3])
}

fn cfg(budget: u64, min_px: f64) -> TraversalConfig {
    TraversalConfig {
        point_budget: budget,
        min_projected_pixels: min_px,
        ..TraversalConfig::default()
    }
}

#[test]
fn frustum_matches_projection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..20 {
        let cam = random_camera(&mut rng, &cube());
        let f = extract_frustum(&cam).unwrap();
        let vp = view_projection(&cam);
        for _ in 0..1000 {
            let p = DVec3::new(rng.gen_range(-200.0..300.0), rng.gen_range(-200.0..300.0), rng.gen_range(-200.0..300.0));
            if let Some(inside) = clip_inside(&vp, p, 1e-6) {
                assert_eq!(f.contains(p), inside, "{p:?} {cam:?}");
                checked += 1;
            }
        }
    }
    assert!(checked > 19_000);
}

#[test]
fn projection_agrees_with_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let cam = random_camera(&mut rng, &cube());
        let basis = cam.basis().unwrap();
        let vp = view_projection(&cam);
        for _ in 0..100 {
            let p = DVec3::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let c = vp * p.extend(1.0);
            match cam.project(&basis, p) {
                Some((nx, ny, depth)) => {
                    assert!((nx - c.x / c.w).abs() < 1e-9 && (ny - c.y / c.w).abs() < 1e-9);
                    assert!((depth - c.w).abs() < 1e-9 * c.w.max(1.0));
                }
                None => assert!(clip_inside(&vp, p, 1e-9) != Some(true)),
            }
        }
    }
}

#[test]
fn culling_is_conservative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut with_inside = 0;
    for _ in 0..2000 {
        let cam = random_camera(&mut rng, &cube());
        let f = extract_frustum(&cam).unwrap();
        let vp = view_projection(&cam);
        let c = DVec3::from_array(cam.position) + random_unit(&mut rng) * rng.gen_range(0.0..250.0);
        let half = DVec3::new(rng.gen_range(0.01..40.0), rng.gen_range(0.01..40.0), rng.gen_range(0.01..40.0));
        let b = Aabb::new((c - half).to_array(), (c + half).to_array());
        let inside = (0..40).any(|i| {
            let t = if i < 27 {
                DVec3::new((i % 3) as f64, ((i / 3) % 3) as f64, (i / 9) as f64) / 2.0
            } else {
                DVec3::new(rng.gen(), rng.gen(), rng.gen())
            };
            clip_inside(&vp, b.min_v() + t * (b.max_v() - b.min_v()), 1e-9) == Some(true)
        });
        if inside {
            with_inside += 1;
            assert!(aabb_visible(&b, &f), "{b:?} {cam:?}");
        }
    }
    assert!(with_inside > 200, "{with_inside}");
}

#[test]
fn priority_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = full_tree(2, |_| 1);
    for _ in 0..50 {
        let cam = random_camera(&mut rng, &cube());
        for e in h.iter() {
            let (a, b) = (node_priority(&e.bounds, &cam), oracle_priority(&e.bounds, &cam));
            assert!(a == b || (a - b).abs() <= 1e-9 * b.abs(), "{a} {b}");
        }
    }
}

#[test]
fn planner_matches_rank_prefix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let h = full_tree(2, |_| rng.gen_range(0..5_000));
        let cam = random_camera(&mut rng, &cube());
        let budget = rng.gen_range(0..h.total_points + 1);
        let min_px = [0.0, 2.0, 50.0, 400.0][trial % 4];
        let plan = plan_traversal(&h, &NodeCache::new(u64::MAX), &cam, &cfg(budget, min_px)).unwrap();
        assert!(plan.render_set.is_empty() && plan.unload_list.is_empty());
        assert_eq!(plan.load_list, rank_prefix_oracle(&h, &cam, budget, min_px), "trial {trial}");
    }
}

#[test]
fn equal_sized_nodes_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = full_tree(2, |_| 100);
    let mut sets = 0;
    for trial in 0..60 {
        let cam = random_camera(&mut rng, &cube());
        let budget = rng.gen_range(0..7) * 100 + rng.gen_range(0..100);
        let min_px = [0.0, 5.0][trial % 2];
        let sel = select_nodes(&h, &cam, &cfg(budget, min_px)).unwrap();
        let mut prios: Vec<f64> = sel.iter().map(|s| oracle_priority(&h.get(&s.name).unwrap().bounds, &cam)).collect();
        let got = selection_value(&mut prios);
        let (best, n) = exhaustive_best(&h, &cam, budget, min_px);
        sets += n;
        assert_eq!(got.0, best.0, "trial {trial}");
        assert!((got.1 - best.1).abs() <= 1e-9 * best.1.abs().max(1.0), "trial {trial}: {got:?} {best:?}");
    }
    assert!(sets > 1000);
}

#[test]
fn budget_admitting_root_and_two_children() {
    let h = full_tree(2, |n| if n.is_root() { 1000 } else { 400 });
    // far enough that every node is finite and distinct, looking at the cube
    let cam = CameraState::look_at([130.0, 115.0, 160.0], [50.0, 50.0, 50.0], [0.0, 0.0, 1.0], 1.0, 1.0, 0.5, 600.0, 800).unwrap();
    let plan = plan_traversal(&h, &NodeCache::new(u64::MAX), &cam, &cfg(1000 + 2 * 400 + 399, 0.0)).unwrap();
    assert_eq!(plan.load_list.len(), 3);
    assert!(plan.load_list[0].is_root());
    let (best, _) = exhaustive_best(&h, &cam, 1000 + 2 * 400 + 399, 0.0);
    let mut prios: Vec<f64> = plan.load_list.iter().map(|n| oracle_priority(&h.get(n).unwrap().bounds, &cam)).collect();
    assert_eq!(selection_value(&mut prios), best);
}

#[test]
fn plans_are_parent_closed_and_within_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let h = full_tree(2, |_| rng.gen_range(1..3_000));
        let cam = random_camera(&mut rng, &cube());
        let c = cfg(rng.gen_range(0..60_000), rng.gen_range(0.0..10.0));
        let plan = plan_traversal(&h, &NodeCache::new(u64::MAX), &cam, &c).unwrap();
        let chosen: std::collections::HashSet<_> = plan.selected().collect();
        let mut total = 0;
        for n in &chosen {
            if let Some(p) = n.parent() {
                assert!(chosen.contains(&p));
            }
            total += h.get(n).unwrap().num_points;
        }
        assert!(total <= c.point_budget);
    }
}

#[test]
fn budget_below_root_yields_empty_plan() {
    let h = full_tree(1, |_| 10);
    let cam = CameraState::look_at([50.0, -200.0, 50.0], [50.0, 50.0, 50.0], [0.0, 0.0, 1.0], 1.0, 1.0, 0.1, 1000.0, 600).unwrap();
    let plan = plan_traversal(&h, &NodeCache::new(u64::MAX), &cam, &cfg(9, 0.0)).unwrap();
    assert!(plan.load_list.is_empty() && plan.render_set.is_empty());
    let plan = plan_traversal(&h, &NodeCache::new(u64::MAX), &cam, &cfg(u64::MAX, 0.0)).unwrap();
    assert_eq!(plan.load_list.len(), 9);
}

#[test]
fn repeated_camera_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let h = full_tree(2, |_| rng.gen_range(1..2_000));
        let cam = random_camera(&mut rng, &cube());
        let c = cfg(rng.gen_range(0..60_000), 1.0);
        let cache = NodeCache::new(u64::MAX);
        let first = plan_traversal(&h, &cache, &cam, &c).unwrap();
        cache.apply_sync(&first, &h, &FakeReader);
        let second = plan_traversal(&h, &cache, &cam, &c).unwrap();
        assert!(second.load_list.is_empty() && second.unload_list.is_empty());
        assert_eq!(second.render_set, first.load_list);
        cache.apply_sync(&second, &h, &FakeReader);
        let third = plan_traversal(&h, &cache, &cam, &c).unwrap();
        assert_eq!((&third.render_set, &third.load_list, &third.unload_list), (&second.render_set, &second.load_list, &second.unload_list));
        assert!(third.tick_id > second.tick_id);
    }
}

#[test]
fn degenerate_camera_is_rejected() {
    let h = full_tree(0, |_| 1);
    let mut cam = CameraState::look_at([0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0], 1.0, 1.0, 0.1, 10.0, 100).unwrap();
    cam.up = cam.forward;
    assert!(matches!(plan_traversal(&h, &NodeCache::new(1), &cam, &cfg(10, 0.0)), Err(Error::DegenerateCamera(_))));
}

/// A 20-node tree: root, its eight children and eleven grandchildren.
fn twenty_nodes() -> OctreeHierarchy {
    let mut h = full_tree(2, |n| 10 + n.as_str().len() as u64);
    let keep: Vec<NodeName> = h.iter().map(|e| e.name.clone()).filter(|n| n.level() < 2 || n.as_str() < "r13").collect();
    h.nodes.retain(|n, _| keep.contains(n));
    for e in h.nodes.values_mut() {
        e.child_mask = (0..8).filter(|&k| keep.contains(&e.name.child(k))).fold(0, |m, k| m | 1 << k);
    }
    h.total_points = h.iter().map(|e| e.num_points).sum();
    h.assign_offsets();
    assert_eq!(h.len(), 20);
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Model {
    Loading(u64),
    Loaded,
}

/// Sequential model of the cache's residency rules.
struct CacheModel {
    states: HashMap<NodeName, Model>,
    resident: u64,
    reserved: u64,
    generation: u64,
    max: u64,
}

impl CacheModel {
    fn apply(&mut self, plan: &TraversalPlan, h: &OctreeHierarchy) -> Vec<CacheEvent> {
        let mut ev = Vec::new();
        for n in &plan.unload_list {
            if let Some(s) = self.states.remove(n) {
                let size = h.get(n).unwrap().byte_size;
                match s {
                    Model::Loaded => self.resident -= size,
                    Model::Loading(_) => self.reserved -= size,
                }
                ev.push(CacheEvent::Unloaded(n.clone()));
            }
        }
        for n in &plan.load_list {
            if self.states.contains_key(n) {
                continue;
            }
            let size = h.get(n).unwrap().byte_size;
            if self.resident + self.reserved + size > self.max {
                ev.push(CacheEvent::Deferred(n.clone()));
                continue;
            }
            self.generation += 1;
            self.reserved += size;
            self.states.insert(n.clone(), Model::Loading(self.generation));
            ev.push(CacheEvent::LoadIssued(n.clone()));
        }
        ev
    }

    fn complete(&mut self, n: &NodeName, generation: u64, ok: bool, size: u64) -> CacheEvent {
        if self.states.get(n) != Some(&Model::Loading(generation)) {
            return CacheEvent::LoadDiscarded(n.clone());
        }
        self.reserved -= size;
        if ok {
            self.resident += size;
            self.states.insert(n.clone(), Model::Loaded);
            CacheEvent::Loaded(n.clone())
        } else {
            self.states.remove(n);
            CacheEvent::LoadFailed(n.clone(), String::new())
        }
    }
}

fn strip(e: CacheEvent) -> CacheEvent {
    match e {
        CacheEvent::LoadFailed(n, _) => CacheEvent::LoadFailed(n, String::new()),
        e => e,
    }
}

#[test]
fn cache_replays_like_sequential_model() {
    let h = twenty_nodes();
    let names: Vec<NodeName> = h.iter().map(|e| e.name.clone()).collect();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let max = rng.gen_range(200..2_000);
        let cache = NodeCache::new(max);
        let mut model = CacheModel {
            states: HashMap::new(),
            resident: 0,
            reserved: 0,
            generation: 0,
            max,
        };
        let mut pending: Vec<LoadTicket> = Vec::new();
        for tick in 0..100u64 {
            let pick = |rng: &mut ChaCha8Rng| names.iter().filter(|_| rng.gen_bool(0.2)).cloned().collect::<Vec<_>>();
            let plan = TraversalPlan {
                render_set: Vec::new(),
                load_list: pick(&mut rng),
                unload_list: pick(&mut rng),
                tick_id: tick,
            };
            let (tickets, events) = cache.begin_apply(&plan, &h);
            assert_eq!(events, model.apply(&plan, &h), "seed {seed} tick {tick}");
            for t in &tickets {
                assert_eq!(model.states.get(&t.entry.name), Some(&Model::Loading(t.generation)));
            }
            pending.extend(tickets);
            while !pending.is_empty() && rng.gen_bool(0.6) {
                let t = pending.swap_remove(rng.gen_range(0..pending.len()));
                let ok = rng.gen_bool(0.9);
                let result = if ok {
                    Ok(vec![Default::default(); t.entry.num_points as usize])
                } else {
                    Err(Error::MalformedData("injected".into()))
                };
                let got = cache.complete(&t, result);
                assert_eq!(strip(got), model.complete(&t.entry.name, t.generation, ok, t.entry.byte_size));
            }
            assert!(cache.committed_bytes() <= max);
            assert_eq!(cache.resident_bytes(), model.resident);
            for n in &names {
                let kind = cache.state(n).kind();
                let want = match model.states.get(n) {
                    None => ResidencyKind::Unloaded,
                    Some(Model::Loading(_)) => ResidencyKind::Loading,
                    Some(Model::Loaded) => ResidencyKind::Loaded,
                };
                assert_eq!(kind, want);
                assert_eq!(cache.payload(n).is_some(), kind == ResidencyKind::Loaded);
            }
        }
    }
}

#[test]
fn load_then_unload_in_one_tick_ends_unloaded() {
    let h = full_tree(1, |_| 5);
    let cache = NodeCache::new(u64::MAX);
    let r = NodeName::root();
    let plan = TraversalPlan {
        render_set: vec![],
        load_list: vec![r.clone()],
        unload_list: vec![],
        tick_id: 1,
    };
    let (tickets, _) = cache.begin_apply(&plan, &h);
    let unload = TraversalPlan {
        load_list: vec![],
        unload_list: vec![r.clone()],
        ..plan
    };
    cache.begin_apply(&unload, &h);
    assert_eq!(cache.complete(&tickets[0], Ok(vec![])), CacheEvent::LoadDiscarded(r.clone()));
    assert_eq!(cache.state(&r).kind(), ResidencyKind::Unloaded);
    assert_eq!(cache.committed_bytes(), 0);
}

#[test]
fn dispatcher_keeps_per_producer_order() {
    let q: Arc<Dispatcher<Action>> = Arc::new(Dispatcher::new());
    let log = Arc::new(Mutex::new(Vec::new()));
    let producers: Vec<_> = ["A", "B"]
        .into_iter()
        .map(|tag| {
            let q = q.clone();
            let log = log.clone();
            std::thread::spawn(move || {
                for i in 0..1000 {
                    let log = log.clone();
                    q.enqueue(Box::new(move || log.lock().unwrap().push((tag, i)))).unwrap();
                    if i % 100 == 0 {
                        std::thread::yield_now();
                    }
                }
            })
        })
        .collect();
    let mut executed = 0;
    let start = Instant::now();
    while executed < 2000 {
        let n = q.drain(16);
        assert!(n <= 16);
        executed += n;
        assert!(start.elapsed() < Duration::from_secs(20));
    }
    for p in producers {
        p.join().unwrap();
    }
    let log = log.lock().unwrap();
    for tag in ["A", "B"] {
        let seq: Vec<i32> = log.iter().filter(|(t, _)| *t == tag).map(|&(_, i)| i).collect();
        assert_eq!(seq, (0..1000).collect::<Vec<_>>());
    }
    q.close();
    assert!(matches!(q.enqueue(Box::new(|| {})), Err(Error::QueueClosed)));
}

#[test]
fn agent_converges_to_a_stable_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_build = BuildConfig {
        max_node_points: 3_000,
        max_chunk_points: 20_000,
        ..BuildConfig::default()
    };
    let (_, o) = build_fixture(dir.path(), Distribution::Uniform, 60_000, &cfg_build);
    let h = Arc::new(o.hierarchy.clone());
    let cam = CameraState::look_at([50.0, -120.0, 60.0], [50.0, 50.0, 50.0], [0.0, 0.0, 1.0], 1.0, 1.5, 0.1, 500.0, 720).unwrap();
    let tc = TraversalConfig {
        point_budget: 25_000,
        ..TraversalConfig::default()
    };
    let want: Vec<NodeName> = select_nodes(&h, &cam, &tc).unwrap().into_iter().map(|s| s.name).collect();
    let agent = TraversalAgent::spawn(h.clone(), Arc::new(o), tc, 2, Duration::from_millis(2)).unwrap();
    agent.set_camera(cam);
    let start = Instant::now();
    loop {
        assert!(start.elapsed() < Duration::from_secs(20), "no stable plan");
        let Some(plan) = agent.wait_plan(Duration::from_millis(200)) else { continue };
        if plan.load_list.is_empty() && plan.unload_list.is_empty() && plan.render_set == want {
            for n in &want {
                assert_eq!(agent.cache().payload(n).unwrap().points.len() as u64, h.get(n).unwrap().num_points);
            }
            break;
        }
    }
    let mut loaded = 0;
    agent.events().drain_with(usize::MAX, |e| {
        if matches!(e, CacheEvent::Loaded(_)) {
            loaded += 1;
        }
    });
    assert!(loaded >= want.len());
    agent.shutdown();
}
