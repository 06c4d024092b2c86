#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stemvine::graph::VineKey;
use stemvine::{
    Matrix, Nonlinearity, NormProfile, SlotId, StemElement, StemVineNetwork, Vine, WeightSet,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let d = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, d).unwrap()
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let d = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, d).unwrap()
}

fn random_act(rng: &mut ChaCha8Rng) -> Nonlinearity {
    match rng.random_range(0..4) {
        0 => Nonlinearity::Relu,
        1 => Nonlinearity::LeakyRelu {
            slope: rng.random_range(0.05..0.95),
        },
        2 => Nonlinearity::Tanh,
        _ => Nonlinearity::Identity,
    }
}

pub fn profile() -> NormProfile {
    NormProfile::new(1.0, 1.0)
}

/// Vertices where a vine may start: the input and every vertex after a
/// stem nonlinearity.
pub fn vine_sources(net: &StemVineNetwork) -> Vec<usize> {
    let mut out = vec![1];
    for (j, el) in net.stem.iter().enumerate() {
        if !el.is_weight() {
            out.push(j + 2);
        }
    }
    out
}

/// Vertices where a vine may end: every vertex after a stem nonlinearity.
pub fn vine_targets(net: &StemVineNetwork) -> Vec<usize> {
    vine_sources(net).into_iter().skip(1).collect()
}

/// A random valid network of alternating weights and nonlinearities with
/// random identity and weighted vines. Widths are drawn from `widths`.
pub fn random_network(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
    max_layers: usize,
) -> StemVineNetwork {
    let layers = rng.random_range(1..=max_layers);
    let mut dims = vec![widths[rng.random_range(0..widths.len())]];
    for _ in 0..layers {
        dims.push(widths[rng.random_range(0..widths.len())]);
    }
    let mut stem = Vec::new();
    for l in 0..layers {
        stem.push(StemElement::weight(dims[l], dims[l + 1], profile()));
        stem.push(StemElement::nonlin(dims[l + 1], random_act(rng)));
    }
    let mut net = StemVineNetwork::new(stem, Vec::new());
    let dims_at = net.vertex_dims();
    let sources = vine_sources(&net);
    let targets = vine_targets(&net);
    for &u in &sources {
        for &v in &targets {
            if v <= u || !rng.random_bool(0.35) {
                continue;
            }
            let (du, dv) = (dims_at[u - 1], dims_at[v - 1]);
            let copy = net.vines.iter().filter(|x| x.u == u && x.v == v).count() + 1;
            let vine = if du == dv && rng.random_bool(0.5) {
                Vine::identity(u, v)
            } else if rng.random_bool(0.5) {
                Vine::chain(u, v, vec![StemElement::weight(du, dv, profile())])
            } else {
                let mid = widths[rng.random_range(0..widths.len())];
                Vine::chain(
                    u,
                    v,
                    vec![
                        StemElement::weight(du, mid, profile()),
                        StemElement::nonlin(mid, random_act(rng)),
                        StemElement::weight(mid, dv, profile()),
                    ],
                )
            };
            net.vines.push(vine.with_copy(copy));
        }
    }
    net.ensure_valid().unwrap();
    net
}

pub fn random_weights(net: &StemVineNetwork, rng: &mut ChaCha8Rng, scale: f64) -> WeightSet {
    net.weight_slots()
        .into_iter()
        .map(|s| (s.id, gaussian(s.out_dim, s.in_dim, rng).scale(scale)))
        .collect()
}

/// The network with every profile set to its weight's measured norms.
pub fn measured(net: &StemVineNetwork, weights: &WeightSet) -> StemVineNetwork {
    net.map_profiles(|id, _| {
        let w = &weights[id];
        NormProfile::new(
            w.spectral_norm().unwrap().max(1e-12),
            w.norm_2_1_of_transpose(),
        )
    })
}

pub fn next_copy(net: &StemVineNetwork, u: usize, v: usize) -> usize {
    net.vines
        .iter()
        .filter(|x| x.u == u && x.v == v)
        .map(|x| x.copy)
        .max()
        .unwrap_or(0)
        + 1
}

pub fn vine_slot(u: usize, v: usize, copy: usize, index: usize) -> SlotId {
    SlotId::Vine {
        vine: VineKey { u, v, copy },
        index,
    }
}
