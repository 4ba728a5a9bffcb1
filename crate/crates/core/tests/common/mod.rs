//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use motionseg::energy::{PottsGraph, WeightedEdge};
use motionseg::loss::{softmax, weighted_nll, ClassWeights};
use motionseg::maxflow::{FlowNetwork, Side};
use motionseg::model::GridAdjacency;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Energy of a slot assignment computed from scratch.
pub fn energy(g: &PottsGraph, slots: &[usize]) -> f64 {
    let unary: f64 = slots.iter().enumerate().map(|(i, &s)| g.unary(i, s)).sum();
    let pair: f64 = g.edges().iter().filter(|e| slots[e.a] != slots[e.b]).map(|e| e.weight).sum();
    unary + pair
}

/// Minimum energy over every labeling (`labels^nodes` assignments).
pub fn brute_force_min(g: &PottsGraph) -> f64 {
    let k = g.labels().len();
    let n = g.node_count();
    let total = k.pow(n as u32);
    let mut slots = vec![0usize; n];
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut c = code;
        for s in slots.iter_mut() {
            *s = c % k;
            c /= k;
        }
        best = best.min(energy(g, &slots));
    }
    best
}

/// Random grid Potts instance with nonnegative weights.
pub fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, labels: &[u8]) -> PottsGraph {
    let n = w * h;
    let unary = (0..n * labels.len()).map(|_| rng.random_range(0.0..10.0)).collect();
    let edges = GridAdjacency::new(w, h)
        .edges()
        .map(|(a, b)| WeightedEdge { a, b, weight: rng.random_range(0.0..6.0) })
        .collect();
    PottsGraph::new(labels.to_vec(), n, unary, edges).unwrap()
}

/// Minimum s-t cut capacity by enumerating all `2^n` node partitions.
pub fn brute_force_cut(net: &FlowNetwork) -> f64 {
    let n = net.node_count();
    let mut best = f64::INFINITY;
    for code in 0u32..(1 << n) {
        let sides: Vec<Side> = (0..n).map(|i| if code >> i & 1 == 1 { Side::Source } else { Side::Sink }).collect();
        let mut cap = 0.0;
        for (i, &(src, sink)) in net.terminals().iter().enumerate() {
            match sides[i] {
                Side::Source => cap += sink,
                Side::Sink => cap += src,
            }
        }
        for e in net.edges() {
            if sides[e.from] == Side::Source && sides[e.to] == Side::Sink {
                cap += e.capacity;
            }
            if sides[e.to] == Side::Source && sides[e.from] == Side::Sink {
                cap += e.reverse_capacity;
            }
        }
        best = best.min(cap);
    }
    best
}

/// Weighted NLL as a function of logits (row-major, `channels` per pixel).
pub fn loss_of_logits(logits: &[f64], channels: usize, labels: &[u8], weights: &ClassWeights) -> f64 {
    let probs: Vec<f64> = logits.chunks(channels).flat_map(softmax).collect();
    weighted_nll(&probs, channels, labels, weights).unwrap().loss
}

/// Central finite differences of [`loss_of_logits`].
pub fn numeric_gradient(logits: &[f64], channels: usize, labels: &[u8], weights: &ClassWeights, h: f64) -> Vec<f64> {
    (0..logits.len())
        .map(|k| {
            let mut up = logits.to_vec();
            let mut down = logits.to_vec();
            up[k] += h;
            down[k] -= h;
            (loss_of_logits(&up, channels, labels, weights) - loss_of_logits(&down, channels, labels, weights)) / (2.0 * h)
        })
        .collect()
}

/// Longest run of frames with fraction in `[lo, hi]`, earliest on ties,
/// found by checking every window.
pub fn longest_valid_window(fractions: &[f64], lo: f64, hi: f64) -> Option<(usize, usize)> {
    let n = fractions.len();
    for len in (1..=n).rev() {
        for start in 0..=n - len {
            if fractions[start..start + len].iter().all(|&f| lo <= f && f <= hi) {
                return Some((start, start + len));
            }
        }
    }
    None
}
