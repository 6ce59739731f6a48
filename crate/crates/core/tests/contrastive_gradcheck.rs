use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use slideret_core::contrastive::{
    infonce_grad, infonce_loss, rotation_triplets, toy_finetune, ContrastiveConfig, TrainingTriplet,
};
use slideret_core::synth::rng;

fn random_batch(seed: u64, b: usize, d: usize) -> Vec<TrainingTriplet> {
    let mut r = rng(seed);
    let v = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(r)).collect() };
    (0..b)
        .map(|_| TrainingTriplet {
            id: String::new(),
            query: v(&mut r),
            positive: v(&mut r),
            negative: v(&mut r),
        })
        .collect()
}

fn coord(t: &mut TrainingTriplet, role: usize, c: usize) -> &mut f64 {
    match role {
        0 => &mut t.query[c],
        1 => &mut t.positive[c],
        _ => &mut t.negative[c],
    }
}

/// Central differences over every coordinate of every vector.
fn max_relative_error(batch: &[TrainingTriplet], tau: f64) -> f64 {
    let h = 1e-5;
    let g = infonce_grad(batch, tau).unwrap().gradients.unwrap();
    let mut worst = 0.0f64;
    for i in 0..batch.len() {
        for role in 0..3 {
            for c in 0..batch[i].query.len() {
                let mut plus = batch.to_vec();
                let mut minus = batch.to_vec();
                *coord(&mut plus[i], role, c) += h;
                *coord(&mut minus[i], role, c) -= h;
                let numeric = (infonce_loss(&plus, tau).unwrap() - infonce_loss(&minus, tau).unwrap()) / (2.0 * h);
                let analytic = match role {
                    0 => g.queries[i][c],
                    1 => g.positives[i][c],
                    _ => g.negatives[i][c],
                };
                let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20 {
        let batch = random_batch(seed, 6, 8);
        let err = max_relative_error(&batch, 0.07);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn saturated_gradient_vanishes() {
    let d = 8;
    let mut x = vec![0.0; d];
    x[0] = 1.0;
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let batch: Vec<_> = (0..6)
        .map(|_| TrainingTriplet { id: String::new(), query: x.clone(), positive: x.clone(), negative: neg.clone() })
        .collect();
    let g = infonce_grad(&batch, 0.07).unwrap().gradients.unwrap();
    let norm: f64 = g
        .queries
        .iter()
        .chain(&g.positives)
        .chain(&g.negatives)
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn gradient_orthogonal_to_each_vector() {
    let batch = random_batch(42, 6, 8);
    let g = infonce_grad(&batch, 0.07).unwrap().gradients.unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for (i, t) in batch.iter().enumerate() {
        assert!(dot(&g.queries[i], &t.query).abs() < 1e-10);
        assert!(dot(&g.positives[i], &t.positive).abs() < 1e-10);
        assert!(dot(&g.negatives[i], &t.negative).abs() < 1e-10);
    }
}

#[test]
fn loss_positive_scale_and_permutation_invariant() {
    let mut r = rng(3);
    for seed in 0..50 {
        let batch = random_batch(100 + seed, 6, 8);
        let base = infonce_loss(&batch, 0.07).unwrap();
        assert!(base > 0.0);
        let mut scaled = batch.clone();
        let i = r.random_range(0..6);
        let c: f64 = r.random_range(0.01..100.0);
        scaled[i].negative.iter_mut().for_each(|v| *v *= c);
        scaled[(i + 1) % 6].query.iter_mut().for_each(|v| *v *= c);
        assert!((infonce_loss(&scaled, 0.07).unwrap() - base).abs() < 1e-9);
        let mut shuffled = batch.clone();
        shuffled.shuffle(&mut r);
        assert!((infonce_loss(&shuffled, 0.07).unwrap() - base).abs() < 1e-12);
    }
}

#[test]
fn finetune_decreases_loss_on_rotation_data() {
    let data = rotation_triplets(60, 16, 2024);
    let r = toy_finetune(&data, &ContrastiveConfig::default(), 16).unwrap();
    assert_eq!(r.step_losses.len(), 50);
    assert!(r.epoch_losses.windows(2).all(|w| w[1] < w[0]), "{:?}", r.epoch_losses);
}
