//! Selection rules turning a weight vector into a set of models.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelId, ModelShape, SelectionSet};
use crate::simplex::{check_epsilon, reduced_distance};
use crate::theory::{solve_epsilon, TheoremParams};
use crate::weights::WeightVector;

/// Weights closer than this count as tied for the maximum.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Distances within this margin of `eps` are treated as not below it.
pub const DISTANCE_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionFlags {
    /// top-k had to break a tie at the cut to return exactly k models
    pub tie_broken: bool,
    /// top-k returned fewer than k models because the support is smaller
    pub short: bool,
    /// a zero-weight model also passed the inflated-argmax test
    pub phantom: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub set: SelectionSet,
    pub flags: SelectionFlags,
}

impl Selection {
    fn plain(set: SelectionSet) -> Self {
        Selection {
            set,
            flags: SelectionFlags::default(),
        }
    }
}

pub fn argmax_select(w: &WeightVector) -> SelectionSet {
    let max = w.max_weight();
    let set = SelectionSet::new(
        w.iter()
            .filter(|(_, x)| max - x <= TIE_TOLERANCE)
            .map(|(m, _)| m.clone()),
    );
    set.expect("a normalized weight vector has a nonempty support")
}

pub fn top_k_select(w: &WeightVector, k: usize) -> Result<Selection> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
    }
    let ranked = w.ranked();
    let take = k.min(ranked.len());
    let mut flags = SelectionFlags {
        short: ranked.len() < k,
        ..Default::default()
    };
    if take < ranked.len() && (ranked[take - 1].1 - ranked[take].1).abs() <= TIE_TOLERANCE {
        flags.tie_broken = true;
    }
    let set = SelectionSet::new(ranked[..take].iter().map(|(m, _)| (*m).clone()))?;
    Ok(Selection { set, flags })
}

/// Marginal inclusion probability of every feature of `shape`, in the order
/// of [`ModelShape::all_features`].
pub fn feature_inclusion(w: &WeightVector, shape: ModelShape) -> Result<Vec<f64>> {
    if let Some(kind) = w.kind()? {
        if kind != shape.kind() {
            return Err(Error::KindMismatch {
                expected: shape.kind().name(),
                found: kind.name().to_string(),
            });
        }
    }
    let features = shape.all_features();
    let mut probs = vec![0.0; features.len()];
    for (m, x) in w.iter() {
        for f in m.features() {
            let idx = features.binary_search(&f).map_err(|_| {
                Error::InvalidArgument(format!("model {m} does not fit shape {shape:?}"))
            })?;
            probs[idx] += x;
        }
    }
    Ok(probs)
}

/// Inclusion probabilities of covariates `0..d`.
pub fn inclusion_probabilities(w: &WeightVector, d: usize) -> Result<Vec<f64>> {
    feature_inclusion(w, ModelShape::Variables { d })
}

/// The single model made of every feature with inclusion probability `>= tau`.
pub fn ip_tau_select(w: &WeightVector, tau: f64, shape: ModelShape) -> Result<SelectionSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} outside (0, 1]")));
    }
    let probs = feature_inclusion(w, shape)?;
    let chosen: Vec<(u32, u32)> = shape
        .all_features()
        .into_iter()
        .zip(probs)
        .filter(|(_, p)| *p >= tau - TIE_TOLERANCE)
        .map(|(f, _)| f)
        .collect();
    Ok(SelectionSet::single(shape.model_from_features(&chosen)))
}

/// Every support model whose target region lies within `epsilon` of `w`.
/// Zero-weight models are never returned; if one would pass, the phantom flag
/// is raised instead.
pub fn inflated_argmax(w: &WeightVector, epsilon: f64) -> Result<Selection> {
    check_epsilon(epsilon)?;
    let gap = epsilon / SQRT_2;
    let ranked = w.ranked();
    let weights: Vec<f64> = ranked.iter().map(|(_, x)| *x).collect();
    let top = weights[0];
    let pool = w.off_support_count();
    let mut chosen: Vec<ModelId> = Vec::new();
    let mut others = Vec::with_capacity(weights.len());
    for (r, (m, x)) in ranked.iter().enumerate() {
        // trailing the leader by the full gap already puts the region out of reach
        if r > 0 && top - x >= gap {
            break;
        }
        others.clear();
        others.extend_from_slice(&weights[..r]);
        others.extend_from_slice(&weights[r + 1..]);
        if reduced_distance(*x, &others, pool, gap) + DISTANCE_GUARD < epsilon {
            chosen.push((*m).clone());
        }
    }
    let mut flags = SelectionFlags::default();
    if pool >= 1.0 && top < gap {
        let d = reduced_distance(0.0, &weights, pool - 1.0, gap);
        flags.phantom = d + DISTANCE_GUARD < epsilon;
    }
    chosen.extend(argmax_select(w).iter().cloned());
    Ok(Selection {
        set: SelectionSet::new(chosen)?,
        flags,
    })
}

/// Textual rule descriptor, e.g. `topk:k=2` or `infargmax:delta=0.05`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Rule {
    Argmax,
    TopK(usize),
    InclusionThreshold(f64),
    Inflated(f64),
    /// Inflated argmax with `eps` solved from the stability guarantee.
    InflatedForDelta { delta: f64, monte_carlo: bool },
}

impl Rule {
    /// Replaces a delta-specified inflated argmax by its concrete epsilon.
    pub fn resolve(self, params: Option<&TheoremParams>) -> Result<Rule> {
        match self {
            Rule::InflatedForDelta { delta, monte_carlo } => {
                let mut p = *params.ok_or_else(|| {
                    Error::Config(format!("rule `{self}` needs bagging parameters"))
                })?;
                p.include_monte_carlo_term = monte_carlo;
                let eps = solve_epsilon(delta, &p)?;
                check_epsilon(eps)?;
                Ok(Rule::Inflated(eps))
            }
            r => Ok(r),
        }
    }

    pub fn apply(&self, w: &WeightVector, shape: ModelShape) -> Result<Selection> {
        match *self {
            Rule::Argmax => Ok(Selection::plain(argmax_select(w))),
            Rule::TopK(k) => top_k_select(w, k),
            Rule::InclusionThreshold(tau) => Ok(Selection::plain(ip_tau_select(w, tau, shape)?)),
            Rule::Inflated(eps) => inflated_argmax(w, eps),
            Rule::InflatedForDelta { .. } => Err(Error::Config(format!(
                "rule `{self}` must be resolved before use"
            ))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Argmax => f.write_str("argmax"),
            Rule::TopK(k) => write!(f, "topk:k={k}"),
            Rule::InclusionThreshold(t) => write!(f, "ip:tau={t}"),
            Rule::Inflated(e) => write!(f, "infargmax:eps={e}"),
            Rule::InflatedForDelta { delta, monte_carlo } => {
                write!(f, "infargmax:delta={delta}")?;
                if !monte_carlo {
                    f.write_str(",mc=off")?;
                }
                Ok(())
            }
        }
    }
}

impl TryFrom<String> for Rule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Rule> for String {
    fn from(r: Rule) -> Self {
        r.to_string()
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown rule descriptor `{s}`"));
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for part in args.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            kv.push((k.trim(), v.trim()));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let num = |key: &str| -> Result<f64> {
            get(key)
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())
        };
        match name {
            "argmax" if kv.is_empty() => Ok(Rule::Argmax),
            "topk" => {
                let k = get("k").ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(Rule::TopK(k))
            }
            "ip" => Ok(Rule::InclusionThreshold(num("tau")?)),
            "infargmax" => {
                if get("eps").is_some() {
                    Ok(Rule::Inflated(num("eps")?))
                } else {
                    let monte_carlo = match get("mc") {
                        None | Some("on") => true,
                        Some("off") => false,
                        Some(_) => return Err(bad()),
                    };
                    Ok(Rule::InflatedForDelta {
                        delta: num("delta")?,
                        monte_carlo,
                    })
                }
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{normalize, Universe};

    fn v(i: usize) -> ModelId {
        ModelId::variables([i])
    }

    fn wv(pairs: &[(usize, f64)], u: Universe) -> WeightVector {
        normalize(pairs.iter().map(|&(i, x)| (v(i), x)), u).unwrap()
    }

    fn set(ids: &[usize]) -> SelectionSet {
        SelectionSet::new(ids.iter().map(|&i| v(i))).unwrap()
    }

    #[test]
    fn argmax_examples() {
        let u = Universe::Infinite;
        assert_eq!(argmax_select(&wv(&[(1, 0.7), (2, 0.3)], u)), set(&[1]));
        assert_eq!(argmax_select(&wv(&[(1, 0.5), (2, 0.5)], u)), set(&[1, 2]));
        let fig = wv(&[(1, 1.0), (2, 4.0), (3, 4.0)], Universe::Finite(3));
        assert_eq!(argmax_select(&fig), set(&[2, 3]));
    }

    #[test]
    fn top_k_examples() {
        let u = Universe::Infinite;
        let s = top_k_select(&wv(&[(1, 0.6), (2, 0.3), (3, 0.1)], u), 2).unwrap();
        assert_eq!(s.set, set(&[1, 2]));
        assert_eq!(s.flags, SelectionFlags::default());
        let w = wv(&[(1, 0.7), (2, 0.3)], u);
        assert_eq!(top_k_select(&w, 1).unwrap().set, argmax_select(&w));
        let s = top_k_select(&wv(&[(1, 0.4), (2, 0.4), (3, 0.2)], u), 1).unwrap();
        assert_eq!(s.set, set(&[1]));
        assert!(s.flags.tie_broken);
        let s = top_k_select(&w, 5).unwrap();
        assert_eq!(s.set.len(), 2);
        assert!(s.flags.short);
        assert!(top_k_select(&w, 0).is_err());
    }

    #[test]
    fn inclusion_examples() {
        let u = Universe::Finite(32);
        // {1,3} and {1,4} in one-based covariate names
        let w = normalize(
            [(ModelId::variables([0, 2]), 0.5), (ModelId::variables([0, 3]), 0.5)],
            u,
        )
        .unwrap();
        assert_eq!(inclusion_probabilities(&w, 5).unwrap(), vec![1.0, 0.0, 0.5, 0.5, 0.0]);
        let one_hot = WeightVector::one_hot(v(1), u);
        assert_eq!(inclusion_probabilities(&one_hot, 5).unwrap(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let edges = WeightVector::one_hot(ModelId::edges([(0, 1)]), u);
        assert!(matches!(
            inclusion_probabilities(&edges, 5),
            Err(Error::KindMismatch { .. })
        ));
    }

    fn six_models() -> WeightVector {
        let models = [[0, 2], [0, 3], [0, 4], [1, 2], [1, 3], [1, 4]];
        normalize(
            models.iter().map(|m| (ModelId::variables(m.iter().copied()), 1.0)),
            Universe::power_set(20),
        )
        .unwrap()
    }

    #[test]
    fn six_model_inclusion() {
        let p = inclusion_probabilities(&six_models(), 20).unwrap();
        let expected = [0.5, 0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p[5..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ip_examples() {
        let shape = ModelShape::Variables { d: 20 };
        let s = ip_tau_select(&six_models(), 0.3, shape).unwrap();
        assert_eq!(s, SelectionSet::single(ModelId::variables([0, 1, 2, 3, 4])));
        let s = ip_tau_select(&six_models(), 0.9, shape).unwrap();
        assert_eq!(s, SelectionSet::single(ModelId::variables([])));
        let one_hot = WeightVector::one_hot(v(1), Universe::power_set(20));
        assert_eq!(ip_tau_select(&one_hot, 0.5, shape).unwrap(), set(&[1]));
    }

    #[test]
    fn ip_on_equation_supports() {
        let shape = ModelShape::Equations { dims: 2, terms: 6 };
        let a = ModelId::equations([vec![1, 4], vec![2, 4]]);
        let b = ModelId::equations([vec![1, 4, 5], vec![2, 4]]);
        let w = normalize([(a.clone(), 0.7), (b, 0.3)], Universe::power_set(12)).unwrap();
        assert_eq!(ip_tau_select(&w, 0.63, shape).unwrap(), SelectionSet::single(a));
    }

    #[test]
    fn inflated_figure_one() {
        let u = Universe::Finite(3);
        let w = wv(&[(1, 1.0), (2, 4.0), (3, 4.0)], u);
        assert_eq!(inflated_argmax(&w, 0.1).unwrap().set, set(&[2, 3]));
        let w = wv(&[(1, 1.0), (2, 1.0), (3, 7.0)], u);
        assert_eq!(inflated_argmax(&w, 0.1).unwrap().set, set(&[3]));
    }

    #[test]
    fn inflated_one_hot() {
        let w = WeightVector::one_hot(v(4), Universe::Infinite);
        for eps in [1e-6, 0.3, 1.0, SQRT_2] {
            let s = inflated_argmax(&w, eps).unwrap();
            assert_eq!(s.set, set(&[4]));
        }
    }

    #[test]
    fn phantom_flag_on_diffuse_weights() {
        let s = inflated_argmax(&six_models(), 0.8).unwrap();
        assert_eq!(s.set.len(), 6);
        assert!(s.flags.phantom);
        let s = inflated_argmax(&six_models(), 0.05).unwrap();
        assert!(!s.flags.phantom);
    }

    #[test]
    fn descriptors_round_trip() {
        for d in ["argmax", "topk:k=2", "ip:tau=0.63", "infargmax:eps=0.09", "infargmax:delta=0.05", "infargmax:delta=0.05,mc=off"] {
            let r: Rule = d.parse().unwrap();
            assert_eq!(r.to_string(), d);
        }
        for bad in ["max", "topk:k=0", "topk", "ip:t=1", "infargmax:mc=maybe,delta=1", "argmax:x=1"] {
            assert!(bad.parse::<Rule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn delta_rule_resolves_through_the_theorem() {
        let params = TheoremParams {
            n: 300,
            bag_size: 25,
            bags: 10_000,
            universe: Universe::Infinite,
            sampling: crate::theory::Sampling::WithoutReplacement,
            include_monte_carlo_term: true,
        };
        let r: Rule = "infargmax:delta=0.05,mc=off".parse().unwrap();
        match r.resolve(Some(&params)).unwrap() {
            Rule::Inflated(e) => assert!((e - 0.078).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert!(r.resolve(None).is_err());
        assert!(r.apply(&six_models(), ModelShape::Variables { d: 20 }).is_err());
    }
}
