mod common;

use common::random_rows;
use eventransact::losses::{
    cosine_sim_exp, cross_entropy, event_contrastive, event_contrastive_terms, event_contrastive_with_grad, total_loss,
    LossConfig,
};
use eventransact::vtn_model::Rows;
use proptest::prelude::*;

/// Direct evaluation of the contrastive sum without any stabilization.
fn naive_ec(z: &[Vec<f64>], zt: &[Vec<f64>], tau: f64) -> f64 {
    let h = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (d / (na * nb) / tau).exp()
    };
    let n = z.len();
    (0..n)
        .map(|t| {
            let den: f64 = (0..n)
                .filter(|&s| s != t)
                .map(|s| h(&z[t], &z[s]) + h(&z[t], &zt[s]))
                .sum();
            -(h(&z[t], &zt[t]) / den).ln()
        })
        .sum()
}

fn to_vecs(r: &Rows<f64>) -> Vec<Vec<f64>> {
    (0..r.rows).map(|i| r.row(i).to_vec()).collect()
}

#[test]
fn uniform_logits() {
    for nc in [2usize, 10, 11] {
        let l = cross_entropy(&vec![0.7f64; nc], nc - 1).unwrap();
        assert!((l - (nc as f64).ln()).abs() <= 1e-6);
    }
    assert!((cross_entropy(&[0.0f64; 11], 0).unwrap() - 2.397895).abs() <= 1e-6);
}

#[test]
fn confident_logits() {
    let mut logits = vec![0.0f64; 11];
    logits[0] = 10.0;
    let l = cross_entropy(&logits, 0).unwrap();
    assert!((l - (1.0 + 10.0 * (-10.0f64).exp()).ln()).abs() <= 1e-12);
    assert!((l - 4.5399e-4).abs() <= 1e-7);
}

#[test]
fn ce_shift_invariance() {
    let a = [0.3f64, -2.0, 5.0, 1.25];
    let b: Vec<f64> = a.iter().map(|v| v + 123.0).collect();
    assert!((cross_entropy(&a, 2).unwrap() - cross_entropy(&b, 2).unwrap()).abs() <= 1e-9);
}

#[test]
fn similarity_values() {
    let u = [0.3f64, -1.2, 2.0];
    assert!((cosine_sim_exp(&u, &u, 0.1).unwrap() - 22026.4658).abs() <= 1e-2);
    let v = [1.0f64, 0.5, -0.1];
    let a = cosine_sim_exp(&u, &v, 0.1).unwrap();
    let b = cosine_sim_exp(&u.map(|x| 2.0 * x), &v, 0.1).unwrap();
    assert!(((a - b) / a).abs() <= 1e-9);
    assert_eq!(cosine_sim_exp(&[1.0f64, 0.0], &[0.0, 3.0], 0.1).unwrap(), 1.0);
}

#[test]
fn identical_projections() {
    for n in [2usize, 8, 16] {
        let z = Rows::new(n, 3, [0.2f64, -0.7, 1.1].repeat(n));
        let l = event_contrastive(&z, &z, 0.1).unwrap();
        let expected = n as f64 * (2.0 * (n as f64 - 1.0)).ln();
        assert!((l - expected).abs() <= 1e-4, "n={n}: {l}");
    }
    let z = Rows::new(16, 2, [1.0f64, 1.0].repeat(16));
    assert!((event_contrastive(&z, &z, 0.1).unwrap() - 54.4192).abs() <= 1e-4);
    let z = Rows::new(2, 2, [1.0f64, 1.0].repeat(2));
    assert!((event_contrastive(&z, &z, 0.1).unwrap() - 1.386294).abs() <= 1e-6);
}

#[test]
fn orthogonal_negatives() {
    let z = Rows::new(2, 2, vec![1.0f64, 0.0, 0.0, 1.0]);
    let l = event_contrastive(&z, &z, 0.1).unwrap();
    let oracle = naive_ec(&to_vecs(&z), &to_vecs(&z), 0.1);
    assert!((l - oracle).abs() <= 1e-9);
    assert!((l - -18.613706).abs() <= 1e-4);
}

#[test]
fn terms_sum_to_loss() {
    let a = random_rows(5, 6, 3);
    let b = random_rows(5, 6, 4);
    let terms = event_contrastive_terms(&a, &b, 0.1).unwrap();
    assert!((terms.iter().sum::<f64>() - event_contrastive(&a, &b, 0.1).unwrap()).abs() <= 1e-10);
}

#[test]
fn full_sum_is_not_monotone_in_the_positive() {
    // Counterexample to monotonicity of the whole sum (see the anchor-term property).
    let a = random_rows(4, 5, 449733);
    let b = random_rows(4, 5, 449733 ^ 0x77);
    let t = 1;
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let (za, zb) = (unit(a.row(t)), unit(b.row(t)));
    let losses: Vec<f64> = (0..=4)
        .map(|k| {
            let lam = k as f64 / 4.0;
            let mut m = b.clone();
            for j in 0..5 {
                m.data[t * 5 + j] = (1.0 - lam) * zb[j] + lam * za[j];
            }
            event_contrastive(&a, &m, 0.1).unwrap()
        })
        .collect();
    assert!(losses.windows(2).any(|w| w[1] > w[0]), "{losses:?}");
}

#[test]
fn matches_naive_sum() {
    for seed in 0..20 {
        let a = random_rows(5, 6, seed);
        let b = random_rows(5, 6, seed + 100);
        let l = event_contrastive(&a, &b, 0.5).unwrap();
        assert!((l - naive_ec(&to_vecs(&a), &to_vecs(&b), 0.5)).abs() <= 1e-9);
    }
}

#[test]
fn total_loss_composition() {
    let z = Rows::new(16, 3, [0.5f64, 0.5, 0.5].repeat(16));
    let logits = [0.0f64; 11];
    let p = total_loss(&logits, 3, &z, &z, &LossConfig::default()).unwrap();
    assert!((p.total - 56.8171).abs() <= 1e-3);
    assert_eq!(p.total, p.ce + p.ec);

    let a = random_rows(4, 5, 1);
    let b = random_rows(4, 5, 2);
    let zero = total_loss(
        &logits,
        3,
        &a,
        &b,
        &LossConfig {
            alpha: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(zero.total, zero.ce);
    let one = total_loss(&logits, 3, &a, &b, &LossConfig::default()).unwrap();
    let two = total_loss(
        &logits,
        3,
        &a,
        &b,
        &LossConfig {
            alpha: 2.0,
            ..Default::default()
        },
    )
    .unwrap();
    let (d2, d1) = (two.total - two.ce, one.total - one.ce);
    assert!((d2 - 2.0 * d1).abs() <= 1e-12 * d1.abs());
}

fn fd_check(symmetric: bool) {
    let h = 1e-5;
    for seed in 0..5 {
        let a = random_rows(4, 8, seed);
        let b = random_rows(4, 8, seed + 50);
        let (_, ga, gb) = event_contrastive_with_grad(&a, &b, 0.1, symmetric).unwrap();
        let f = |a: &Rows<f64>, b: &Rows<f64>| event_contrastive_with_grad(a, b, 0.1, symmetric).unwrap().0;
        let mut num_a = vec![0.0; a.data.len()];
        let mut num_b = vec![0.0; b.data.len()];
        for i in 0..a.data.len() {
            let (mut p, mut m) = (a.clone(), a.clone());
            p.data[i] += h;
            m.data[i] -= h;
            num_a[i] = (f(&p, &b) - f(&m, &b)) / (2.0 * h);
            let (mut p, mut m) = (b.clone(), b.clone());
            p.data[i] += h;
            m.data[i] -= h;
            num_b[i] = (f(&a, &p) - f(&a, &m)) / (2.0 * h);
        }
        for (ana, num) in [(&ga, &num_a), (&gb, &num_b)] {
            let diff = ana
                .iter()
                .zip(num.iter())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = ana.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            assert!(diff / scale <= 1e-5, "seed {seed}: rel err {}", diff / scale);
        }
    }
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    fd_check(false);
}

#[test]
fn symmetric_gradient_matches_finite_differences() {
    fd_check(true);
}

#[test]
fn symmetric_variant_averages_directions() {
    let a = random_rows(4, 3, 7);
    let b = random_rows(4, 3, 8);
    let (s, _, _) = event_contrastive_with_grad(&a, &b, 0.2, true).unwrap();
    let fwd = naive_ec(&to_vecs(&a), &to_vecs(&b), 0.2);
    let bwd = naive_ec(&to_vecs(&b), &to_vecs(&a), 0.2);
    assert!((s - 0.5 * (fwd + bwd)).abs() <= 1e-9);
}

#[test]
fn stable_at_extreme_similarity() {
    let mut data = Vec::new();
    for i in 0..8 {
        let mut v = vec![0.0f64; 8];
        v[i] = 1.0;
        data.extend(v);
    }
    let z = Rows::new(8, 8, data);
    let l = event_contrastive(&z, &z, 0.01).unwrap();
    assert!(l.is_finite());
    let l32 = event_contrastive(
        &Rows::new(8, 8, z.data.iter().map(|&v| v as f32).collect()),
        &Rows::new(8, 8, z.data.iter().map(|&v| v as f32).collect()),
        0.01,
    )
    .unwrap();
    assert!(l32.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cross_entropy_is_non_negative(logits in prop::collection::vec(-50.0f64..50.0, 2..12), pick in 0usize..100) {
        let label = pick % logits.len();
        prop_assert!(cross_entropy(&logits, label).unwrap() >= 0.0);
    }

    #[test]
    fn positive_scale_invariance(seed in 0u64..1_000_000, scales in prop::collection::vec(0.1f64..10.0, 16)) {
        let a = random_rows(8, 6, seed);
        let b = random_rows(8, 6, seed ^ 0x5555);
        let base = event_contrastive(&a, &b, 0.1).unwrap();
        let scale = |r: &Rows<f64>, s: &[f64]| {
            Rows::new(r.rows, r.dim, (0..r.rows).flat_map(|i| r.row(i).iter().map(move |v| v * s[i])).collect())
        };
        let l = event_contrastive(&scale(&a, &scales[..8]), &scale(&b, &scales[8..]), 0.1).unwrap();
        prop_assert!(((l - base) / base.abs().max(1e-12)).abs() <= 1e-6);
    }

    // z~_t is also a negative for every other anchor, so only the anchor-t
    // summand is monotone; the full sum can rise.
    #[test]
    fn pulling_the_positive_closer_never_hurts(seed in 0u64..1_000_000, t in 0usize..4, steps in 2usize..10) {
        let a = random_rows(4, 5, seed);
        let b = random_rows(4, 5, seed ^ 0x77);
        let za: Vec<f64> = a.row(t).to_vec();
        let na = za.iter().map(|v| v * v).sum::<f64>().sqrt();
        let zb: Vec<f64> = b.row(t).to_vec();
        let nb = zb.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut prev = f64::INFINITY;
        for k in 0..=steps {
            // Slerp-free blend of directions, from z~_t towards z_t.
            let lam = k as f64 / steps as f64;
            let mut m = b.clone();
            for j in 0..5 {
                m.data[t * 5 + j] = (1.0 - lam) * zb[j] / nb + lam * za[j] / na;
            }
            if m.row(t).iter().all(|v| v.abs() < 1e-9) {
                continue;
            }
            let l = event_contrastive_terms(&a, &m, 0.1).unwrap()[t];
            prop_assert!(l <= prev + 1e-9);
            prev = l;
        }
    }
}
