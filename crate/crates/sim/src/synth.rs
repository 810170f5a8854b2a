//! Synthetic client updates standing in for local training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use nov_core::fixed_point::{quantize, QuantConfig};

/// Real-valued model or update, one vector per layer.
pub type Model = Vec<Vec<f64>>;

/// One entry of an updates file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub layers: Model,
}

pub fn l2_norm(m: &Model) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(m: &Model, k: f64) -> Model {
    m.iter()
        .map(|l| l.iter().map(|v| v * k).collect())
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The previous global model; every layer has at least one nonzero entry.
pub fn reference_model(seed: u64, shape: &[usize]) -> Model {
    let mut rng = rng_for(seed, 0);
    shape
        .iter()
        .map(|&len| {
            let mut layer: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if layer.iter().all(|v| v.abs() < 1e-3) {
                layer[0] = 0.5;
            }
            layer
        })
        .collect()
}

/// `count` benign updates: each layer is the reference direction plus per-client noise,
/// and the whole update is rescaled to a norm in `[0.3, 0.9] · max_norm`.
///
/// Quantized layer inner products with the reference are strictly positive and quantized
/// norms stay below `max_norm`.
pub fn synth_updates(
    seed: u64,
    shape: &[usize],
    count: usize,
    reference: &Model,
    max_norm: f64,
    quant: &QuantConfig,
) -> Vec<Model> {
    let mut rng = rng_for(seed, 1);
    let p: usize = shape.iter().sum();
    let q_ref = quantize(reference, quant).update;
    (0..count)
        .map(|_| loop {
            let sigma: f64 = rng.gen_range(0.2..1.0);
            let target = rng.gen_range(0.3..0.9) * max_norm;
            let raw: Model = reference
                .iter()
                .map(|r| {
                    let len = r.len();
                    let norm = dot(r, r).sqrt();
                    let dir: Vec<f64> = r.iter().map(|v| v / norm).collect();
                    let mut v: Vec<f64> = dir
                        .iter()
                        .map(|d| {
                            let z: f64 = rng.sample(StandardNormal);
                            d + z * sigma / (len as f64).sqrt()
                        })
                        .collect();
                    let along = dot(&v, &dir);
                    if along < 0.5 {
                        v.iter_mut().zip(&dir).for_each(|(x, d)| *x += (0.5 - along) * d);
                    }
                    let w = ((len as f64) / p as f64).sqrt() / dot(&v, &v).sqrt();
                    v.iter().map(|x| x * w).collect()
                })
                .collect();
            let update = scaled(&raw, target / l2_norm(&raw));
            let q = quantize(&update, quant).update;
            let aligned = q.layer_dots(&q_ref).iter().all(|&d| d > 0);
            let small = (q.sum_squares() as f64).sqrt() / quant.scale() < max_norm;
            if aligned && small {
                break update;
            }
        })
        .collect()
}

pub fn flip_sign(update: &Model) -> Model {
    scaled(update, -1.0)
}

/// The update rescaled to three times the norm bound.
pub fn oversize(update: &Model, t_m: f64) -> Model {
    scaled(update, 3.0 * t_m / l2_norm(update))
}

/// Moves the update against the reference in every layer, then projects the result into
/// the ball of radius `0.95 · t_m` so the norm check alone cannot reject it.
pub fn projected_poison(update: &Model, reference: &Model, t_m: f64) -> Model {
    let push = 2.0 * l2_norm(update).max(t_m);
    let poisoned: Model = update
        .iter()
        .zip(reference)
        .map(|(u, r)| {
            let norm = dot(r, r).sqrt();
            u.iter().zip(r).map(|(x, y)| x - push * y / norm).collect()
        })
        .collect();
    let norm = l2_norm(&poisoned);
    let radius = 0.95 * t_m;
    if norm > radius {
        scaled(&poisoned, radius / norm)
    } else {
        poisoned
    }
}
