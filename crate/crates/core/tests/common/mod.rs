//! Brute-force geometry oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};

/// Linear constraint `a.q >= b`, or `a.q = b` when `equality`.
pub struct Constraint {
    pub a: Vec<f64>,
    pub b: f64,
    pub equality: bool,
}

/// Closest point to `w` in the polyhedron, by enumerating every subset of
/// inequalities taken as active and keeping the feasible projections.
pub fn polyhedron_distance(w: &[f64], constraints: &[Constraint]) -> f64 {
    let dim = w.len();
    let eq: Vec<&Constraint> = constraints.iter().filter(|c| c.equality).collect();
    let ineq: Vec<&Constraint> = constraints.iter().filter(|c| !c.equality).collect();
    let x = DVector::from_column_slice(w);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << ineq.len()) {
        let active: Vec<&Constraint> = eq
            .iter()
            .copied()
            .chain(
                ineq.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, c)| *c),
            )
            .collect();
        let q = if active.is_empty() {
            x.clone()
        } else {
            let a = DMatrix::from_fn(active.len(), dim, |i, j| active[i].a[j]);
            let b = DVector::from_iterator(active.len(), active.iter().map(|c| c.b));
            let gram = &a * a.transpose();
            let Ok(pinv) = gram.clone().pseudo_inverse(1e-12) else {
                continue;
            };
            let lambda = pinv * (&a * &x - &b);
            let q = &x - a.transpose() * lambda;
            if (&a * &q - &b).amax() > 1e-9 {
                continue;
            }
            q
        };
        let feasible = constraints.iter().all(|c| {
            let v: f64 = c.a.iter().zip(q.iter()).map(|(a, q)| a * q).sum::<f64>() - c.b;
            if c.equality {
                v.abs() < 1e-9
            } else {
                v > -1e-9
            }
        });
        if feasible {
            best = best.min((&q - &x).norm());
        }
    }
    best
}

/// Oracle distance from dense weights `w` to the target region of coordinate
/// `m`. With `sink` the coordinates are the only named ones of an infinite
/// class, so mass may leave through unnamed models at no cost.
pub fn oracle(w: &[f64], m: usize, eps: f64, sink: bool) -> f64 {
    let dim = w.len();
    let gap = eps / SQRT_2;
    let unit = |i: usize| {
        let mut a = vec![0.0; dim];
        a[i] = 1.0;
        a
    };
    let mut cs = Vec::new();
    for j in (0..dim).filter(|&j| j != m) {
        cs.push(Constraint {
            a: unit(j),
            b: 0.0,
            equality: false,
        });
        let mut a = unit(m);
        a[j] = -1.0;
        cs.push(Constraint {
            a,
            b: gap,
            equality: false,
        });
    }
    if sink {
        cs.push(Constraint {
            a: vec![-1.0; dim],
            b: -1.0,
            equality: false,
        });
        cs.push(Constraint {
            a: unit(m),
            b: gap,
            equality: false,
        });
    } else {
        cs.push(Constraint {
            a: vec![1.0; dim],
            b: 1.0,
            equality: true,
        });
    }
    polyhedron_distance(w, &cs)
}
