//! The solid to reconstruct: either an oracle expression over the primitive
//! set or a precomputed membership table on a sampling lattice.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expr::CsgExpr;
use crate::geometry::{MembershipLabel, PrimitiveSet};
use crate::sampling::SampledScene;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSolid {
    Oracle(CsgExpr),
    Table(MembershipTable),
}

/// Labels for every point of the lattice produced by `(plan, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipTable {
    pub resolution: usize,
    pub dimension: usize,
    pub seed: u64,
    #[serde(serialize_with = "labels_to_string", deserialize_with = "labels_from_string")]
    pub labels: Vec<MembershipLabel>,
}

fn labels_to_string<S: Serializer>(labels: &[MembershipLabel], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&labels.iter().map(|l| l.as_char()).collect::<String>())
}

fn labels_from_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<MembershipLabel>, D::Error> {
    let text = String::deserialize(d)?;
    text.chars()
        .map(|c| {
            MembershipLabel::from_char(c)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid label character `{c}`")))
        })
        .collect()
}

impl MembershipTable {
    pub fn for_scene(sampled: &SampledScene, labels: Vec<MembershipLabel>) -> Result<Self> {
        if labels.len() != sampled.len() {
            return Err(Error::TableMismatch {
                expected: sampled.len(),
                found: labels.len(),
            });
        }
        Ok(MembershipTable {
            resolution: sampled.plan.resolution,
            dimension: sampled.plan.dimension,
            seed: sampled.seed,
            labels,
        })
    }
}

impl TargetSolid {
    /// Target labels at every point of `sampled`.
    pub fn sample(&self, ps: &PrimitiveSet, sampled: &SampledScene) -> Result<TargetSamples> {
        let labels = match self {
            TargetSolid::Oracle(expr) => sampled.evaluate_expr(expr, ps)?,
            TargetSolid::Table(table) => {
                if table.labels.len() != sampled.len()
                    || table.resolution != sampled.plan.resolution
                    || table.dimension != sampled.plan.dimension
                    || table.seed != sampled.seed
                {
                    return Err(Error::TableMismatch {
                        expected: sampled.len(),
                        found: table.labels.len(),
                    });
                }
                table.labels.clone()
            }
        };
        Ok(TargetSamples::new(labels))
    }
}

/// Target labels on a lattice, with set views for fast comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSamples {
    labels: Vec<MembershipLabel>,
    inside: FixedBitSet,
    definite: FixedBitSet,
}

impl TargetSamples {
    pub fn new(labels: Vec<MembershipLabel>) -> Self {
        let mut inside = FixedBitSet::with_capacity(labels.len());
        let mut definite = FixedBitSet::with_capacity(labels.len());
        for (k, l) in labels.iter().enumerate() {
            match l {
                MembershipLabel::Inside => {
                    inside.insert(k);
                    definite.insert(k);
                }
                MembershipLabel::Outside => definite.insert(k),
                MembershipLabel::Surface => {}
            }
        }
        TargetSamples {
            labels,
            inside,
            definite,
        }
    }

    pub fn labels(&self) -> &[MembershipLabel] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> MembershipLabel {
        self.labels[k]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inside_set(&self) -> &FixedBitSet {
        &self.inside
    }

    /// Points with an Inside or Outside label.
    pub fn definite_set(&self) -> &FixedBitSet {
        &self.definite
    }

    pub fn inside_count(&self) -> usize {
        self.inside.count_ones(..)
    }
}
