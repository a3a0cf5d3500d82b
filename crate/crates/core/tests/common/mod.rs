//! Reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scentnav::agent::{LossWeights, Policy, Sample};
use scentnav::layout::{build_layout, LayoutFile, NodeRecord, TargetField};
use scentnav::memory::{EventKind, MemoryParams, MemoryStore};
use scentnav::{Focus, Layout, NodeId};

/// Random forest of `n` nodes whose layers hold at most `width` options.
pub fn random_layout(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Layout {
    assert!(n >= 1);
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut root: Vec<NodeId> = vec![0];
    for id in 1..n as NodeId {
        loop {
            // Parent `None` is the root layer.
            let parent = if rng.random_bool(0.3) {
                None
            } else {
                Some(rng.random_range(0..id))
            };
            let layer = match parent {
                None => &mut root,
                Some(p) => &mut children[p as usize],
            };
            if layer.len() < width {
                layer.push(id);
                break;
            }
        }
    }
    let leaves: Vec<NodeId> = (0..n as NodeId).filter(|&i| children[i as usize].is_empty()).collect();
    let target = *leaves.choose(rng).unwrap();
    let mut col_of = vec![0u32; n];
    for layer in children.iter().chain(std::iter::once(&root)) {
        for (c, &id) in layer.iter().enumerate() {
            col_of[id as usize] = c as u32;
        }
    }
    let nodes = (0..n)
        .map(|i| NodeRecord {
            id: i as NodeId,
            label: None,
            scent: rng.random::<f64>(),
            children: children[i].clone(),
            row: 0,
            col: col_of[i],
        })
        .collect();
    let file = LayoutFile {
        nodes,
        root,
        target: TargetField::One(target),
    };
    build_layout(&file, width).expect("random layout is valid")
}

/// A reachable navigation state chosen uniformly along a random descent.
pub fn random_focus(rng: &mut ChaCha8Rng, layout: &Layout) -> Focus {
    let mut path = Vec::new();
    loop {
        let layer = layout.layer(path.last().copied());
        let internal: Vec<NodeId> = layer.iter().copied().filter(|&id| !layout.is_leaf(id)).collect();
        if internal.is_empty() || rng.random_bool(0.4) {
            let focused = if rng.random_bool(0.3) {
                None
            } else {
                Some(*layer.choose(rng).unwrap())
            };
            return Focus { path, focused };
        }
        path.push(*internal.choose(rng).unwrap());
    }
}

/// Breadth-first search over navigation states for the fewest actions
/// that leave `to` focused.
pub fn bfs_cost(layout: &Layout, from: &Focus, to: NodeId) -> u32 {
    let start = (from.path.clone(), from.focused);
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0u32)]);
    while let Some(((path, focused), d)) = queue.pop_front() {
        if focused == Some(to) {
            return d;
        }
        let mut next = Vec::new();
        for &id in layout.layer(path.last().copied()) {
            next.push((path.clone(), Some(id)));
        }
        if let Some(f) = focused {
            if !layout.is_leaf(f) {
                let mut p = path.clone();
                p.push(f);
                next.push((p, None));
            }
        }
        if !path.is_empty() {
            let mut p = path.clone();
            p.pop();
            next.push((p, None));
        }
        for s in next {
            if seen.insert(s.clone()) {
                queue.push_back((s, d + 1));
            }
        }
    }
    panic!("node {to} unreachable");
}

/// Random memory store over the nodes of `layout`; returns it with the
/// current step.
pub fn random_store(rng: &mut ChaCha8Rng, layout: &Layout) -> (MemoryStore, u32) {
    let mut store = MemoryStore::new();
    let ids: Vec<NodeId> = layout.nodes().iter().map(|n| n.id).collect();
    let mut step = 0;
    for _ in 0..rng.random_range(1..40) {
        step += rng.random_range(0..3);
        let id = *ids.choose(rng).unwrap();
        let kind = if rng.random_bool(0.25) { EventKind::Click } else { EventKind::View };
        store.record_event(id, kind, step);
        // Coarse scent values make priority ties common.
        let scent = f64::from(rng.random_range(0..5u8)) / 4.0;
        store.reveal(id, scent).unwrap();
    }
    let now = step + rng.random_range(0..10);
    store.advance_to(now);
    (store, now)
}

pub fn random_params(rng: &mut ChaCha8Rng) -> MemoryParams {
    MemoryParams {
        lambda: rng.random_range(0.01..1.0),
        b: rng.random(),
        a_s: rng.random_range(0.0..2.0),
        a_v: rng.random(),
        a_c: rng.random(),
        theta: rng.random_range(0.0..3.0),
        k_glob: rng.random_range(3..=5),
        sigma: rng.random_range(0.01..0.1),
    }
}

/// Top-K by repeated linear scans: highest priority, then highest
/// strength, then lowest id.
pub fn brute_top_k(store: &MemoryStore, now: u32, p: &MemoryParams, layout: &Layout) -> Vec<NodeId> {
    let mut pool: Vec<(f64, f64, NodeId)> = Vec::new();
    for t in store.traces() {
        let dk = f64::from(now - t.last_seen);
        let m = (-p.lambda * dk).exp()
            * (p.b
                + p.a_s * layout.true_scent(t.node)
                + p.a_v * f64::from(t.views).sqrt()
                + p.a_c * f64::from(t.clicks).sqrt());
        if m >= p.theta {
            pool.push((t.revealed_scent.unwrap_or(0.0) * m, m, t.node));
        }
    }
    let mut out = Vec::new();
    while out.len() < p.k_glob && !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (a, b) = (pool[i], pool[best]);
            let better = a.0 > b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 < b.2)));
            if better {
                best = i;
            }
        }
        out.push(pool.swap_remove(best).2);
    }
    out
}

/// U statistic of `a` by counting every pair.
pub fn exhaustive_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Mean and sample standard deviation in two passes.
pub fn two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let std = if v.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

/// `G_t = sum_k gamma^(k-t) r_k`, summed term by term.
pub fn direct_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            rewards[t..]
                .iter()
                .enumerate()
                .map(|(k, r)| gamma.powi(k as i32) * r)
                .sum()
        })
        .collect()
}

/// Central finite differences of the loss at the given parameter indices.
pub fn fd_gradient(policy: &Policy, batch: &[Sample], w: LossWeights, idx: &[usize], h: f64) -> Vec<f64> {
    let mut p = policy.clone();
    idx.iter()
        .map(|&i| {
            let x = p.params()[i];
            p.params_mut()[i] = x + h;
            let up = p.loss(batch, w);
            p.params_mut()[i] = x - h;
            let down = p.loss(batch, w);
            p.params_mut()[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a| + |b|, tiny)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-300)
}
