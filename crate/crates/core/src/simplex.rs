//! Projection geometry on the probability simplex.
//!
//! The target region of model `m` at inflation `eps` is
//! `{q in simplex : q_m >= q_j + eps/sqrt(2) for every j != m}`.
//! Its distance to a sparse weight vector is computed exactly on the reduced
//! coordinates `support(w) ∪ {m}` plus one pooled block standing for every
//! zero-weight model. The pooled coordinates are exchangeable, so the optimum
//! gives them a common value and the block is carried with its multiplicity.
//! For an infinite universe the block becomes a free sink: mass spread over
//! `N` fresh models costs `O(1/N)` in squared distance, so the infimum is taken
//! over `sum(q) <= 1`.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::model::ModelId;
use crate::weights::WeightVector;

/// Euclidean projection of `v` onto the standard simplex (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= SQRT_2 {
        Ok(())
    } else {
        Err(Error::BadEpsilon(epsilon))
    }
}

/// Distance from `w` to the target region of `m`. `m` need not carry weight.
pub fn dist_to_target_region(w: &WeightVector, m: &ModelId, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let target = w.weight(m);
    let mut others: Vec<f64> = w
        .iter()
        .filter(|(id, _)| *id != m)
        .map(|(_, x)| x)
        .collect();
    others.sort_by(|a, b| b.total_cmp(a));
    let mut pool = w.off_support_count();
    if target == 0.0 {
        if pool < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "model {m} lies outside a universe already covered by the support"
            )));
        }
        pool -= 1.0;
    }
    Ok(reduced_distance(target, &others, pool, epsilon / SQRT_2))
}

/// Distance computed on reduced coordinates: `target` is the weight of the
/// model under test, `others` the remaining support weights sorted in
/// decreasing order, `pool` the number of further zero-weight coordinates
/// (`inf` for a sink) and `gap` the required lead `eps/sqrt(2)`.
pub(crate) fn reduced_distance(target: f64, others: &[f64], pool: f64, gap: f64) -> f64 {
    let problem = Reduced {
        target,
        others,
        pool,
        gap,
    };
    problem.distance()
}

struct Reduced<'a> {
    target: f64,
    others: &'a [f64],
    pool: f64,
    gap: f64,
}

impl Reduced<'_> {
    fn sink(&self) -> bool {
        self.pool.is_infinite()
    }

    fn distance(&self) -> f64 {
        let count = self.others.len() as f64 + self.pool;
        if count == 0.0 {
            // only one model exists; its region is the single vertex
            return (1.0 - self.target).abs();
        }
        let t_lo = if self.sink() {
            self.gap
        } else {
            ((1.0 + count * self.gap) / (1.0 + count)).max(self.gap)
        };
        let t = if self.slope(t_lo) >= 0.0 {
            t_lo
        } else {
            let (mut lo, mut hi) = (t_lo, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        self.cost_at(t).sqrt()
    }

    /// Multiplier of the sum constraint for a fixed target coordinate `t`.
    fn nu(&self, t: f64) -> f64 {
        let cap = (t - self.gap).max(0.0);
        let level = 1.0 - t;
        if self.sink() {
            let at_zero: f64 = self.others.iter().map(|&o| o.min(cap)).sum();
            if at_zero <= level {
                return 0.0;
            }
            solve_level(self.others, 0.0, cap, level)
        } else {
            solve_level(self.others, self.pool, cap, level)
        }
    }

    /// An element of the subdifferential of the reduced objective in `t`.
    fn slope(&self, t: f64) -> f64 {
        let cap = (t - self.gap).max(0.0);
        let nu = self.nu(t);
        let mut push: f64 = self
            .others
            .iter()
            .map(|&o| (o + nu - cap).max(0.0))
            .sum();
        if !self.sink() && self.pool > 0.0 {
            push += self.pool * (nu - cap).max(0.0);
        }
        t - self.target - nu - push
    }

    fn cost_at(&self, t: f64) -> f64 {
        let cap = (t - self.gap).max(0.0);
        let nu = self.nu(t);
        let mut cost = (t - self.target).powi(2);
        for &o in self.others {
            let q = (o + nu).clamp(0.0, cap);
            cost += (q - o).powi(2);
        }
        if !self.sink() && self.pool > 0.0 {
            let r = nu.clamp(0.0, cap);
            cost += self.pool * r * r;
        }
        cost
    }
}

/// Solves `sum_j clip(o_j + nu, 0, cap) + pool * clip(nu, 0, cap) = level`
/// for `nu` by walking the breakpoints of the piecewise-linear left side.
/// `others` must be sorted in decreasing order. Where the left side is flat at
/// `level` any point of the flat piece is returned.
fn solve_level(others: &[f64], pool: f64, cap: f64, level: f64) -> f64 {
    let n = others.len();
    let pool_events = [(0.0, pool), (cap, -pool)];
    let n_pool = if pool > 0.0 { 2 } else { 0 };
    let lowest = match (n, n_pool) {
        (0, _) => 0.0,
        (_, 0) => -others[0],
        _ => (-others[0]).min(0.0),
    };
    if level <= 0.0 {
        return lowest;
    }
    let (mut ia, mut ib, mut ip) = (0, 0, 0);
    let mut x = lowest;
    let mut value = 0.0;
    let mut slope = 0.0;
    loop {
        let a = if ia < n { -others[ia] } else { f64::INFINITY };
        let b = if ib < n { cap - others[ib] } else { f64::INFINITY };
        let p = if ip < n_pool {
            pool_events[ip].0
        } else {
            f64::INFINITY
        };
        let (pos, delta) = if ia < n && a <= b && a <= p {
            ia += 1;
            (a, 1.0)
        } else if ib < n && b <= p {
            ib += 1;
            (b, -1.0)
        } else if ip < n_pool {
            ip += 1;
            pool_events[ip - 1]
        } else {
            break;
        };
        if pos > x && slope > 0.0 {
            let next = value + slope * (pos - x);
            if next >= level {
                return x + (level - value) / slope;
            }
            value = next;
        }
        if pos > x {
            x = pos;
        }
        slope += delta;
    }
    x
}
