//! Canonical identities of candidate models and sets of them.
//!
//! Indices are zero-based everywhere, including the string form used in
//! reports: `v:{0,2}` is the subset of the first and third covariates.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    VariableSubset,
    EquationSupport,
    EdgeSet,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::VariableSubset => "VariableSubset",
            ModelKind::EquationSupport => "EquationSupport",
            ModelKind::EdgeSet => "EdgeSet",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Variables(Vec<u32>),
    Equations(Vec<Vec<u32>>),
    Edges(Vec<(u32, u32)>),
}

/// Identity of one candidate model. Always held in canonical form: index
/// lists strictly increasing and edges stored as `(j, k)` with `j < k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId(Repr);

fn canonical(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v.dedup();
    v
}

impl ModelId {
    pub fn variables<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        ModelId(Repr::Variables(canonical(
            indices.into_iter().map(|i| i as u32).collect(),
        )))
    }

    /// One support per state dimension.
    pub fn equations<I, J>(per_dim: I) -> Self
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = usize>,
    {
        ModelId(Repr::Equations(
            per_dim
                .into_iter()
                .map(|d| canonical(d.into_iter().map(|i| i as u32).collect()))
                .collect(),
        ))
    }

    /// Undirected edges; `(k, j)` is stored as `(j, k)`. Self-loops are dropped.
    pub fn edges<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let mut e: Vec<(u32, u32)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| {
                let (a, b) = (a as u32, b as u32);
                (a.min(b), a.max(b))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        ModelId(Repr::Edges(e))
    }

    pub fn kind(&self) -> ModelKind {
        match &self.0 {
            Repr::Variables(_) => ModelKind::VariableSubset,
            Repr::Equations(_) => ModelKind::EquationSupport,
            Repr::Edges(_) => ModelKind::EdgeSet,
        }
    }

    pub fn as_variables(&self) -> Option<&[u32]> {
        match &self.0 {
            Repr::Variables(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_equations(&self) -> Option<&[Vec<u32>]> {
        match &self.0 {
            Repr::Equations(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_edges(&self) -> Option<&[(u32, u32)]> {
        match &self.0 {
            Repr::Edges(v) => Some(v),
            _ => None,
        }
    }

    /// The elementary features the model includes, flattened to a common form:
    /// a covariate `j` becomes `(0, j)`, equation term `t` of dimension `d`
    /// becomes `(d, t)`, and an edge stays `(j, k)`.
    pub fn features(&self) -> Vec<(u32, u32)> {
        match &self.0 {
            Repr::Variables(v) => v.iter().map(|&j| (0, j)).collect(),
            Repr::Equations(dims) => dims
                .iter()
                .enumerate()
                .flat_map(|(d, terms)| terms.iter().map(move |&t| (d as u32, t)))
                .collect(),
            Repr::Edges(e) => e.clone(),
        }
    }

    /// True when the model includes nothing at all.
    pub fn is_empty(&self) -> bool {
        match &self.0 {
            Repr::Variables(v) => v.is_empty(),
            Repr::Equations(d) => d.iter().all(Vec::is_empty),
            Repr::Edges(e) => e.is_empty(),
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_str("{")?;
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str("}")
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Variables(v) => {
                f.write_str("v:")?;
                write_list(f, v)
            }
            Repr::Equations(dims) => {
                f.write_str("s:{")?;
                for (d, terms) in dims.iter().enumerate() {
                    if d > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "dim{d}:")?;
                    write_list(f, terms)?;
                }
                f.write_str("}")
            }
            Repr::Edges(e) => {
                f.write_str("e:{")?;
                for (i, (a, b)) in e.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "({a},{b})")?;
                }
                f.write_str("}")
            }
        }
    }
}

fn parse_err(s: &str) -> Error {
    Error::InvalidArgument(format!("malformed model id `{s}`"))
}

fn strip_braces(s: &str) -> Option<&str> {
    s.strip_prefix('{')?.strip_suffix('}')
}

fn parse_index_list(body: &str, whole: &str) -> Result<Vec<usize>> {
    let body = body.trim();
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| parse_err(whole)))
        .collect()
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("v:") {
            let body = strip_braces(rest).ok_or_else(|| parse_err(s))?;
            return Ok(ModelId::variables(parse_index_list(body, s)?));
        }
        if let Some(rest) = s.strip_prefix("s:") {
            let body = strip_braces(rest).ok_or_else(|| parse_err(s))?;
            let mut dims = Vec::new();
            for (d, part) in body.split(';').enumerate() {
                let part = part.trim();
                let terms = part
                    .strip_prefix(&format!("dim{d}:"))
                    .and_then(strip_braces)
                    .ok_or_else(|| parse_err(s))?;
                dims.push(parse_index_list(terms, s)?);
            }
            return Ok(ModelId::equations(dims));
        }
        if let Some(rest) = s.strip_prefix("e:") {
            let body = strip_braces(rest).ok_or_else(|| parse_err(s))?.trim();
            let mut pairs = Vec::new();
            let mut rest = body;
            while !rest.is_empty() {
                let open = rest.strip_prefix('(').ok_or_else(|| parse_err(s))?;
                let close = open.find(')').ok_or_else(|| parse_err(s))?;
                let ids = parse_index_list(&open[..close], s)?;
                if ids.len() != 2 {
                    return Err(parse_err(s));
                }
                pairs.push((ids[0], ids[1]));
                rest = open[close + 1..].trim_start();
                if let Some(r) = rest.strip_prefix(',') {
                    rest = r.trim_start();
                }
            }
            return Ok(ModelId::edges(pairs));
        }
        Err(parse_err(s))
    }
}

impl Serialize for ModelId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Structural description of a model family, needed by rules that build a
/// model from per-feature statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelShape {
    Variables { d: usize },
    Equations { dims: usize, terms: usize },
    Graph { nodes: usize },
}

impl ModelShape {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelShape::Variables { .. } => ModelKind::VariableSubset,
            ModelShape::Equations { .. } => ModelKind::EquationSupport,
            ModelShape::Graph { .. } => ModelKind::EdgeSet,
        }
    }

    /// Number of binary features a model of this shape switches on or off.
    pub fn feature_count(self) -> usize {
        match self {
            ModelShape::Variables { d } => d,
            ModelShape::Equations { dims, terms } => dims * terms,
            ModelShape::Graph { nodes } => nodes * nodes.saturating_sub(1) / 2,
        }
    }

    /// Every feature of the shape in the flattened form of [`ModelId::features`].
    pub fn all_features(self) -> Vec<(u32, u32)> {
        match self {
            ModelShape::Variables { d } => (0..d as u32).map(|j| (0, j)).collect(),
            ModelShape::Equations { dims, terms } => (0..dims as u32)
                .flat_map(|d| (0..terms as u32).map(move |t| (d, t)))
                .collect(),
            ModelShape::Graph { nodes } => (0..nodes as u32)
                .flat_map(|j| (j + 1..nodes as u32).map(move |k| (j, k)))
                .collect(),
        }
    }

    /// Builds the model of this shape containing exactly `features`.
    pub fn model_from_features(self, features: &[(u32, u32)]) -> ModelId {
        match self {
            ModelShape::Variables { .. } => {
                ModelId::variables(features.iter().map(|&(_, j)| j as usize))
            }
            ModelShape::Equations { dims, .. } => {
                let mut per_dim = vec![Vec::new(); dims];
                for &(d, t) in features {
                    per_dim[d as usize].push(t as usize);
                }
                ModelId::equations(per_dim)
            }
            ModelShape::Graph { .. } => {
                ModelId::edges(features.iter().map(|&(j, k)| (j as usize, k as usize)))
            }
        }
    }

    /// `2^features`, or `None` when that does not fit in 64 bits.
    pub fn universe_size(self) -> Option<u64> {
        let f = self.feature_count();
        if f < 64 {
            Some(1u64 << f)
        } else {
            None
        }
    }
}

/// A nonempty set of selected models.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModelId>", into = "Vec<ModelId>")]
pub struct SelectionSet(BTreeSet<ModelId>);

impl SelectionSet {
    pub fn new<I: IntoIterator<Item = ModelId>>(models: I) -> Result<Self> {
        let set: BTreeSet<ModelId> = models.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyInput("selection set"));
        }
        Ok(SelectionSet(set))
    }

    pub fn single(model: ModelId) -> Self {
        SelectionSet(BTreeSet::from([model]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, model: &ModelId) -> bool {
        self.0.contains(model)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelId> {
        self.0.iter()
    }

    pub fn overlaps(&self, other: &SelectionSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.0.iter().any(|m| large.0.contains(m))
    }

    pub fn is_subset(&self, other: &SelectionSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl TryFrom<Vec<ModelId>> for SelectionSet {
    type Error = Error;

    fn try_from(v: Vec<ModelId>) -> Result<Self> {
        SelectionSet::new(v)
    }
}

impl From<SelectionSet> for Vec<ModelId> {
    fn from(s: SelectionSet) -> Self {
        s.0.into_iter().collect()
    }
}

impl fmt::Display for SelectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for ModelShape {
    type Err = Error;

    /// `variables:20`, `equations:2x6` or `graph:11`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed shape `{s}`"));
        let (kind, size) = s.trim().split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match kind {
            "variables" => Ok(ModelShape::Variables { d: num(size)? }),
            "graph" => Ok(ModelShape::Graph { nodes: num(size)? }),
            "equations" => {
                let (dims, terms) = size.split_once('x').ok_or_else(bad)?;
                Ok(ModelShape::Equations {
                    dims: num(dims)?,
                    terms: num(terms)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl ModelShape {
    /// Smallest shape holding every given model, or `None` for mixed kinds.
    pub fn infer<'a, I: IntoIterator<Item = &'a ModelId>>(models: I) -> Option<Self> {
        let mut shape: Option<ModelShape> = None;
        for m in models {
            let feats = m.features();
            let next = match m.kind() {
                ModelKind::VariableSubset => ModelShape::Variables {
                    d: feats.iter().map(|f| f.1 as usize + 1).max().unwrap_or(0),
                },
                ModelKind::EquationSupport => ModelShape::Equations {
                    dims: m.as_equations().map_or(0, |e| e.len()),
                    terms: feats.iter().map(|f| f.1 as usize + 1).max().unwrap_or(0),
                },
                ModelKind::EdgeSet => ModelShape::Graph {
                    nodes: feats.iter().map(|f| f.1 as usize + 1).max().unwrap_or(0),
                },
            };
            shape = Some(match (shape, next) {
                (None, n) => n,
                (Some(ModelShape::Variables { d: a }), ModelShape::Variables { d: b }) => {
                    ModelShape::Variables { d: a.max(b) }
                }
                (Some(ModelShape::Equations { dims: a, terms: t }), ModelShape::Equations { dims: b, terms: u }) => {
                    ModelShape::Equations {
                        dims: a.max(b),
                        terms: t.max(u),
                    }
                }
                (Some(ModelShape::Graph { nodes: a }), ModelShape::Graph { nodes: b }) => {
                    ModelShape::Graph { nodes: a.max(b) }
                }
                _ => return None,
            });
        }
        shape
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        assert_eq!(ModelId::variables([3, 1, 3]), ModelId::variables([1, 3]));
        assert_eq!(ModelId::edges([(2, 0), (0, 2)]).as_edges().unwrap(), &[(0, 2)]);
        assert_eq!(
            ModelId::equations([vec![4, 1], vec![]]).to_string(),
            "s:{dim0:{1,4};dim1:{}}"
        );
    }

    #[test]
    fn string_forms_parse_back() {
        for s in ["v:{}", "v:{0,2,17}", "e:{(0,1),(3,7)}", "e:{}", "s:{dim0:{1,4};dim1:{2,4}}"] {
            let m: ModelId = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("x:{1}".parse::<ModelId>().is_err());
        assert!("v:{1,a}".parse::<ModelId>().is_err());
        assert!("e:{(1,2,3)}".parse::<ModelId>().is_err());
    }

    #[test]
    fn kinds_never_compare_equal() {
        assert_ne!(ModelId::variables([]), ModelId::edges([]));
        assert_eq!(ModelId::variables([]).kind(), ModelKind::VariableSubset);
    }

    #[test]
    fn selection_set_rules() {
        assert!(SelectionSet::new(Vec::new()).is_err());
        let a = SelectionSet::new([ModelId::variables([0]), ModelId::variables([1])]).unwrap();
        let b = SelectionSet::single(ModelId::variables([1]));
        let c = SelectionSet::single(ModelId::variables([2]));
        assert!(a.overlaps(&b) && b.overlaps(&a));
        assert!(!a.overlaps(&c));
        assert!(b.is_subset(&a));
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"["v:{0}","v:{1}"]"#);
        assert_eq!(serde_json::from_str::<SelectionSet>(&json).unwrap(), a);
        assert!(serde_json::from_str::<SelectionSet>("[]").is_err());
    }

    #[test]
    fn shapes_round_trip_features() {
        let shape = ModelShape::Equations { dims: 2, terms: 6 };
        let m = ModelId::equations([vec![1, 4], vec![2, 4]]);
        assert_eq!(shape.model_from_features(&m.features()), m);
        assert_eq!(shape.universe_size(), Some(4096));
        assert_eq!(ModelShape::Graph { nodes: 11 }.feature_count(), 55);
        assert_eq!(ModelShape::Variables { d: 200 }.universe_size(), None);
    }
}
