//! InfoNCE with in-batch negatives, its analytic gradient, and a toy
//! linear-projection fine-tuning loop.
//!
//! For a batch of `B` triplets `(q_i, d_i+, d_i-)` with cosine similarity
//! `sim` and temperature `tau`:
//!
//! ```text
//! L = -1/B sum_i log( exp(sim(q_i, d_i+)/tau)
//!                     / ( exp(sim(q_i, d_i+)/tau) + sum_{j=1..B} exp(sim(q_i, d_j-)/tau) ) )
//! ```
//!
//! The negative sum runs over all `B` negatives, including `j = i`. Other
//! triplets' positives are not negatives for `q_i`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    #[serde(default)]
    pub id: String,
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Seeds the projection initialisation.
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            batch_size: 6,
            temperature: 0.07,
            learning_rate: 3e-5,
            epochs: 5,
            seed: 0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Gradients with respect to every vector of the batch, indexed like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub gradients: Option<Gradients>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Cosine {
    value: f64,
    inv_norms: f64,
    nx2: f64,
    ny2: f64,
}

fn cosine(x: &[f64], y: &[f64]) -> Cosine {
    let (nx, ny) = (norm(x), norm(y));
    Cosine {
        value: dot(x, y) / (nx * ny),
        inv_norms: 1.0 / (nx * ny),
        nx2: nx * nx,
        ny2: ny * ny,
    }
}

/// `acc += scale * d cos(x, y) / dx`, where `d cos / dx = y/(|x||y|) - cos x/|x|^2`.
fn add_cos_grad(acc: &mut [f64], x: &[f64], y: &[f64], c: &Cosine, x_is_first: bool, scale: f64) {
    let nx2 = if x_is_first { c.nx2 } else { c.ny2 };
    for ((a, xi), yi) in acc.iter_mut().zip(x).zip(y) {
        *a += scale * (yi * c.inv_norms - c.value * xi / nx2);
    }
}

fn check_batch(batch: &[TrainingTriplet], tau: f64) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let dim = batch[0].query.len();
    for (i, t) in batch.iter().enumerate() {
        for (role, v) in [("query", &t.query), ("positive", &t.positive), ("negative", &t.negative)] {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if norm(v) == 0.0 {
                return Err(Error::ZeroVector(format!("triplet {i} {role}")));
            }
        }
    }
    Ok(dim)
}

fn evaluate(batch: &[TrainingTriplet], tau: f64, with_grad: bool) -> Result<LossValue> {
    let dim = check_batch(batch, tau)?;
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let mut grads = with_grad.then(|| Gradients {
        queries: vec![vec![0.0; dim]; b],
        positives: vec![vec![0.0; dim]; b],
        negatives: vec![vec![0.0; dim]; b],
    });
    let mut total = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let pos = cosine(&t.query, &t.positive);
        let negs: Vec<Cosine> = batch.iter().map(|n| cosine(&t.query, &n.negative)).collect();
        let logits: Vec<f64> = std::iter::once(pos.value / tau)
            .chain(negs.iter().map(|c| c.value / tau))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
        total += lse - logits[0];

        if let Some(g) = grads.as_mut() {
            let weight = |a: f64| (a - lse).exp();
            let d_pos = (weight(logits[0]) - 1.0) * inv_b / tau;
            add_cos_grad(&mut g.queries[i], &t.query, &t.positive, &pos, true, d_pos);
            add_cos_grad(&mut g.positives[i], &t.positive, &t.query, &pos, false, d_pos);
            for (j, c) in negs.iter().enumerate() {
                let d_neg = weight(logits[j + 1]) * inv_b / tau;
                let neg = &batch[j].negative;
                add_cos_grad(&mut g.queries[i], &t.query, neg, c, true, d_neg);
                add_cos_grad(&mut g.negatives[j], neg, &t.query, c, false, d_neg);
            }
        }
    }
    Ok(LossValue {
        loss: total * inv_b,
        gradients: grads,
    })
}

pub fn infonce_loss(batch: &[TrainingTriplet], tau: f64) -> Result<f64> {
    evaluate(batch, tau, false).map(|l| l.loss)
}

pub fn infonce_grad(batch: &[TrainingTriplet], tau: f64) -> Result<LossValue> {
    evaluate(batch, tau, true)
}

/// Learned projection (row-major, `out_dim x in_dim`) and the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneResult {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    /// Per step: the batch loss before that step's update.
    pub step_losses: Vec<(usize, f64)>,
    /// Mean per-triplet loss over the whole training set; entry 0 is before
    /// training, entry `e` after epoch `e`.
    pub epoch_losses: Vec<f64>,
}

fn project(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64]) -> Vec<f64> {
    (0..out_dim).map(|r| dot(&w[r * in_dim..(r + 1) * in_dim], x)).collect()
}

fn project_batch(w: &[f64], out_dim: usize, in_dim: usize, batch: &[TrainingTriplet]) -> Vec<TrainingTriplet> {
    batch
        .iter()
        .map(|t| TrainingTriplet {
            id: t.id.clone(),
            query: project(w, out_dim, in_dim, &t.query),
            positive: project(w, out_dim, in_dim, &t.positive),
            negative: project(w, out_dim, in_dim, &t.negative),
        })
        .collect()
}

fn dataset_loss(w: &[f64], out_dim: usize, in_dim: usize, data: &[TrainingTriplet], cfg: &ContrastiveConfig) -> Result<f64> {
    let mut sum = 0.0;
    for batch in data.chunks(cfg.batch_size) {
        sum += infonce_loss(&project_batch(w, out_dim, in_dim, batch), cfg.temperature)? * batch.len() as f64;
    }
    Ok(sum / data.len() as f64)
}

/// Plain mini-batch gradient descent on a shared linear projection applied
/// to queries and documents alike. Batches are consecutive slices of
/// `triplets`; a short final batch is kept.
pub fn toy_finetune(triplets: &[TrainingTriplet], cfg: &ContrastiveConfig, out_dim: usize) -> Result<FinetuneResult> {
    cfg.validate()?;
    if triplets.len() < cfg.batch_size {
        return Err(Error::Invalid(format!(
            "{} triplets is fewer than one batch of {}",
            triplets.len(),
            cfg.batch_size
        )));
    }
    if out_dim == 0 {
        return Err(Error::Config("projection dimension must be positive".into()));
    }
    let in_dim = check_batch(triplets, cfg.temperature)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / (in_dim as f64).sqrt();
    let mut w: Vec<f64> = (0..out_dim * in_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();

    let mut epoch_losses = vec![dataset_loss(&w, out_dim, in_dim, triplets, cfg)?];
    let mut step_losses = Vec::new();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        for batch in triplets.chunks(cfg.batch_size) {
            let projected = project_batch(&w, out_dim, in_dim, batch);
            let lv = infonce_grad(&projected, cfg.temperature)?;
            if !lv.loss.is_finite() {
                return Err(Error::NonFiniteLoss(step));
            }
            step_losses.push((step, lv.loss));
            let g = lv.gradients.expect("requested");
            // dL/dW = sum over projected vectors of (dL/dy) x^T
            let mut dw = vec![0.0; out_dim * in_dim];
            let pairs = batch.iter().enumerate().flat_map(|(i, t)| {
                [
                    (&g.queries[i], &t.query),
                    (&g.positives[i], &t.positive),
                    (&g.negatives[i], &t.negative),
                ]
            });
            for (gy, x) in pairs {
                for r in 0..out_dim {
                    let row = &mut dw[r * in_dim..(r + 1) * in_dim];
                    for (d, xi) in row.iter_mut().zip(x) {
                        *d += gy[r] * xi;
                    }
                }
            }
            for (wi, di) in w.iter_mut().zip(&dw) {
                *wi -= cfg.learning_rate * di;
            }
            step += 1;
        }
        let l = dataset_loss(&w, out_dim, in_dim, triplets, cfg)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss(step));
        }
        epoch_losses.push(l);
    }
    Ok(FinetuneResult {
        out_dim,
        in_dim,
        weights: w,
        step_losses,
        epoch_losses,
    })
}

impl FinetuneResult {
    /// `step,loss` CSV of the per-step batch losses.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (s, l) in &self.step_losses {
            writeln!(out, "{s},{l}").unwrap();
        }
        out
    }
}

/// Seeded triplets whose positives are a fixed random rotation of their
/// query (plus small noise) and whose negatives are rotations of unrelated
/// vectors.
pub fn rotation_triplets(n: usize, dim: usize, seed: u64) -> Vec<TrainingTriplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };
    // Gram-Schmidt on a Gaussian matrix gives a random orthogonal basis.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = gauss(dim);
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let rotate = |x: &[f64]| -> Vec<f64> { basis.iter().map(|row| dot(row, x)).collect() };
    (0..n)
        .map(|i| {
            let q = gauss(dim);
            let noise = gauss(dim);
            let other = gauss(dim);
            let pos: Vec<f64> = rotate(&q).iter().zip(&noise).map(|(a, e)| a + 0.1 * e).collect();
            TrainingTriplet {
                id: format!("t{i}"),
                query: q,
                positive: pos,
                negative: rotate(&other),
            }
        })
        .collect()
}

pub fn read_triplets(path: impl AsRef<Path>) -> Result<Vec<TrainingTriplet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_triplets(path: impl AsRef<Path>, triplets: &[TrainingTriplet]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in triplets {
        out.push_str(&serde_json::to_string(t).expect("triplet serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(angle: f64) -> Vec<f64> {
        vec![angle.cos(), angle.sin()]
    }

    fn trip(q: Vec<f64>, p: Vec<f64>, n: Vec<f64>) -> TrainingTriplet {
        TrainingTriplet { id: String::new(), query: q, positive: p, negative: n }
    }

    #[test]
    fn closed_forms() {
        let b = [trip(unit(0.0), unit(std::f64::consts::FRAC_PI_2), unit(-std::f64::consts::FRAC_PI_2))];
        assert!((infonce_loss(&b, 1.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let b = [trip(unit(0.0), unit(0.0), unit(std::f64::consts::FRAC_PI_2))];
        assert!((infonce_loss(&b, 1.0).unwrap() - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturates_at_low_temperature() {
        let b = [trip(unit(0.0), unit(0.0), unit(3.0))];
        assert!(infonce_loss(&b, 0.01).unwrap() < 1e-20);
    }

    #[test]
    fn zero_vector_and_dims() {
        assert!(matches!(
            infonce_loss(&[trip(vec![0.0, 0.0], unit(0.0), unit(1.0))], 0.07),
            Err(Error::ZeroVector(_))
        ));
        assert!(infonce_loss(&[trip(vec![1.0], unit(0.0), unit(1.0))], 0.07).is_err());
        assert!(infonce_loss(&[trip(unit(0.0), unit(0.0), unit(1.0))], 0.0).is_err());
    }

    #[test]
    fn learning_rate_zero_changes_nothing() {
        let data = rotation_triplets(12, 5, 3);
        let cfg = ContrastiveConfig { learning_rate: 0.0, ..Default::default() };
        let r = toy_finetune(&data, &cfg, 4).unwrap();
        assert!(r.epoch_losses.windows(2).all(|w| w[0] == w[1]));
        let init = toy_finetune(&data, &ContrastiveConfig { epochs: 0, ..cfg }, 4).unwrap();
        assert_eq!(init.weights, r.weights);
    }

    #[test]
    fn one_batch_per_epoch() {
        let data = rotation_triplets(6, 4, 1);
        let r = toy_finetune(&data, &ContrastiveConfig::default(), 4).unwrap();
        assert_eq!(r.step_losses.len(), 5);
        assert_eq!(r.epoch_losses.len(), 6);
        assert!(r.loss_csv().starts_with("step,loss\n0,"));
    }

    #[test]
    fn too_few_triplets() {
        let data = rotation_triplets(5, 4, 1);
        assert!(toy_finetune(&data, &ContrastiveConfig::default(), 4).is_err());
    }

    #[test]
    fn triplet_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let data = rotation_triplets(3, 2, 9);
        write_triplets(&p, &data).unwrap();
        assert_eq!(read_triplets(&p).unwrap(), data);
    }
}
