//! Sparse weight vectors on the probability simplex over candidate models.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelId, ModelKind};

pub const SUM_TOLERANCE: f64 = 1e-9;

/// Size of the candidate model class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Universe {
    Finite(u64),
    Infinite,
}

impl Universe {
    /// `2^features` when representable, otherwise infinite.
    pub fn power_set(features: usize) -> Self {
        if features < 64 {
            Universe::Finite(1u64 << features)
        } else {
            Universe::Infinite
        }
    }

    /// `1 - 1/|M+|`.
    pub fn complement_factor(self) -> f64 {
        match self {
            Universe::Finite(u) => 1.0 - 1.0 / u as f64,
            Universe::Infinite => 1.0,
        }
    }
}

impl fmt::Display for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Universe::Finite(u) => write!(f, "{u}"),
            Universe::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Universe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" | "Infinite" => Ok(Universe::Infinite),
            t => match t.parse::<u64>() {
                Ok(u) if u >= 1 => Ok(Universe::Finite(u)),
                _ => Err(Error::InvalidArgument(format!("bad universe size `{s}`"))),
            },
        }
    }
}

/// Nonnegative weights summing to one, stored only on their support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct WeightVector {
    entries: BTreeMap<ModelId, f64>,
    universe: Universe,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    universe: Universe,
    weights: BTreeMap<ModelId, f64>,
}

impl TryFrom<RawWeights> for WeightVector {
    type Error = Error;

    fn try_from(raw: RawWeights) -> Result<Self> {
        WeightVector::from_normalized(raw.weights, raw.universe)
    }
}

impl From<WeightVector> for RawWeights {
    fn from(w: WeightVector) -> Self {
        RawWeights {
            universe: w.universe,
            weights: w.entries,
        }
    }
}

fn check_entries(entries: &BTreeMap<ModelId, f64>, universe: Universe) -> Result<()> {
    for (m, &w) in entries {
        if !w.is_finite() {
            return Err(Error::NonFinite("weight vector"));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight {
                model: m.to_string(),
                weight: w,
            });
        }
    }
    if let Universe::Finite(u) = universe {
        if entries.len() as u64 > u {
            return Err(Error::UniverseTooSmall {
                support: entries.len(),
                universe: u,
            });
        }
    }
    Ok(())
}

/// Scales nonnegative raw weights onto the simplex. Zero entries are dropped.
pub fn normalize<I>(raw: I, universe: Universe) -> Result<WeightVector>
where
    I: IntoIterator<Item = (ModelId, f64)>,
{
    let mut entries: BTreeMap<ModelId, f64> = BTreeMap::new();
    for (m, w) in raw {
        *entries.entry(m).or_insert(0.0) += w;
    }
    check_entries(&entries, universe)?;
    entries.retain(|_, w| *w > 0.0);
    let total: f64 = entries.values().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    for w in entries.values_mut() {
        *w /= total;
    }
    Ok(WeightVector { entries, universe })
}

impl WeightVector {
    /// Wraps weights that should already sum to one (within 1e-9).
    pub fn from_normalized(entries: BTreeMap<ModelId, f64>, universe: Universe) -> Result<Self> {
        check_entries(&entries, universe)?;
        let total: f64 = entries.values().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        let entries = entries.into_iter().filter(|(_, w)| *w > 0.0).collect();
        Ok(WeightVector { entries, universe })
    }

    pub fn one_hot(model: ModelId, universe: Universe) -> Self {
        WeightVector {
            entries: BTreeMap::from([(model, 1.0)]),
            universe,
        }
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn weight(&self, m: &ModelId) -> f64 {
        self.entries.get(m).copied().unwrap_or(0.0)
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModelId, f64)> {
        self.entries.iter().map(|(m, &w)| (m, w))
    }

    pub fn max_weight(&self) -> f64 {
        self.entries.values().copied().fold(0.0, f64::max)
    }

    /// The single kind shared by every support model.
    pub fn kind(&self) -> Result<Option<ModelKind>> {
        let mut kind = None;
        for m in self.entries.keys() {
            match kind {
                None => kind = Some(m.kind()),
                Some(k) if k != m.kind() => {
                    return Err(Error::KindMismatch {
                        expected: k.name(),
                        found: m.to_string(),
                    })
                }
                _ => {}
            }
        }
        Ok(kind)
    }

    /// Support sorted by decreasing weight, ties by model string.
    pub fn ranked(&self) -> Vec<(&ModelId, f64)> {
        let mut v: Vec<(&ModelId, f64, String)> = self
            .entries
            .iter()
            .map(|(m, &w)| (m, w, m.to_string()))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
        v.into_iter().map(|(m, w, _)| (m, w)).collect()
    }

    /// Number of off-support coordinates of the universe, as a real number
    /// (`inf` for an infinite universe).
    pub fn off_support_count(&self) -> f64 {
        match self.universe {
            Universe::Finite(u) => (u - self.entries.len() as u64) as f64,
            Universe::Infinite => f64::INFINITY,
        }
    }
}

/// Reads `model,weight` rows (raw, nonnegative) and normalizes them.
pub fn read_weights_csv(path: &std::path::Path, universe: Universe) -> Result<WeightVector> {
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().collect::<Vec<_>>() != ["model", "weight"] {
        return Err(Error::SchemaMismatch(format!(
            "{}: expected header `model,weight`",
            path.display()
        )));
    }
    let mut raw = Vec::new();
    for row in reader.records() {
        let row = row?;
        let model: ModelId = row[0].parse()?;
        let weight: f64 = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::SchemaMismatch(format!("bad weight `{}`", &row[1])))?;
        raw.push((model, weight));
    }
    normalize(raw, universe)
}
