//! The reduced distance solver against a brute-force active-set oracle.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stasel_core::rules::inflated_argmax;
use stasel_core::simplex::{dist_to_target_region, project_to_simplex};
use stasel_core::{normalize, ModelId, Universe, WeightVector};

mod common;

use common::{oracle, polyhedron_distance, Constraint};

fn v(i: usize) -> ModelId {
    ModelId::variables([i])
}

fn random_weights(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..s)
        .map(|_| match rng.random_range(0..4) {
            // coarse values make exact ties common
            0 => rng.random_range(1..=4) as f64,
            _ => rng.random::<f64>() + 1e-3,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

#[test]
fn reduced_solver_matches_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1500 {
        let weights = random_weights(&mut rng);
        let s = weights.len();
        let eps = match rng.random_range(0..5) {
            0 => SQRT_2,
            1 => rng.random_range(1e-4..0.05),
            _ => rng.random_range(1e-3..SQRT_2),
        };
        for extra in [Some(0), Some(1), Some(2), None] {
            let universe = match extra {
                Some(e) => Universe::Finite((s + e) as u64),
                None => Universe::Infinite,
            };
            let w = normalize(weights.iter().enumerate().map(|(i, &x)| (v(i), x)), universe).unwrap();
            let mut dense = weights.clone();
            if let Some(e) = extra {
                dense.resize(s + e, 0.0);
            }
            let candidates = match extra {
                Some(e) => s + e,
                None => s + 1,
            };
            for m in 0..candidates {
                let got = dist_to_target_region(&w, &v(m), eps).unwrap();
                let want = if extra.is_none() && m == s {
                    let mut with_m = dense.clone();
                    with_m.push(0.0);
                    oracle(&with_m, m, eps, true)
                } else {
                    oracle(&dense, m, eps, extra.is_none())
                };
                assert!(
                    (got - want).abs() < 1e-6,
                    "w {weights:?} universe {universe} m {m} eps {eps}: {got} vs {want}"
                );
                worst = worst.max((got - want).abs());
                checked += 1;
            }
        }
    }
    eprintln!("{checked} distances, worst error {worst:.2e}");
}

#[test]
fn large_finite_universes_approach_the_sink() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let weights = random_weights(&mut rng);
        let eps = rng.random_range(1e-3..SQRT_2);
        let ids = || weights.iter().enumerate().map(|(i, &x)| (v(i), x));
        let inf = normalize(ids(), Universe::Infinite).unwrap();
        let mut previous = f64::INFINITY;
        for u in [weights.len() as u64 + 1, 10, 100, 10_000, 1_000_000] {
            if u < weights.len() as u64 {
                continue;
            }
            let w = normalize(ids(), Universe::Finite(u)).unwrap();
            let d = dist_to_target_region(&w, &v(0), eps).unwrap();
            assert!(d <= previous + 1e-12, "more models cannot push the region away");
            previous = d;
        }
        let d_inf = dist_to_target_region(&inf, &v(0), eps).unwrap();
        assert!(d_inf <= previous + 1e-12);
        assert!(previous - d_inf < 1e-3, "{previous} vs {d_inf}");
    }
}

#[test]
fn inflated_argmax_agrees_with_oracle_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut compared = 0;
    while compared < 1000 {
        let weights = random_weights(&mut rng);
        let s = weights.len();
        let eps = rng.random_range(1e-3..SQRT_2);
        let universe = match rng.random_range(0..3) {
            0 => Universe::Infinite,
            k => Universe::Finite((s + k) as u64),
        };
        let sink = universe == Universe::Infinite;
        let mut dense = weights.clone();
        if let Universe::Finite(u) = universe {
            dense.resize(u as usize, 0.0);
        }
        let dists: Vec<f64> = (0..s).map(|m| oracle(&dense, m, eps, sink)).collect();
        if dists.iter().any(|d| (d - eps).abs() < 1e-7) {
            continue;
        }
        let w = normalize(weights.iter().enumerate().map(|(i, &x)| (v(i), x)), universe).unwrap();
        let got = inflated_argmax(&w, eps).unwrap().set;
        for (m, d) in dists.iter().enumerate() {
            assert_eq!(got.contains(&v(m)), *d < eps, "w {weights:?} eps {eps} m {m}");
        }
        compared += 1;
    }
}

#[test]
fn projection_matches_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let dim = rng.random_range(1..=5);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..2.0)).collect();
        let mut cs: Vec<Constraint> = (0..dim)
            .map(|j| {
                let mut a = vec![0.0; dim];
                a[j] = 1.0;
                Constraint {
                    a,
                    b: 0.0,
                    equality: false,
                }
            })
            .collect();
        cs.push(Constraint {
            a: vec![1.0; dim],
            b: 1.0,
            equality: true,
        });
        let p = project_to_simplex(&x);
        let d: f64 = p.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((d - polyhedron_distance(&x, &cs)).abs() < 1e-9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_hot_distance_is_zero_for_every_epsilon() {
    let w = WeightVector::one_hot(v(3), Universe::Finite(8));
    for k in 1..=20 {
        let eps = SQRT_2 * k as f64 / 20.0;
        assert_eq!(dist_to_target_region(&w, &v(3), eps).unwrap(), 0.0);
    }
}
