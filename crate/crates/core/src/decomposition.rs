//! Dominant-primitive decomposition.
//!
//! A primitive whose interior lies wholly inside the target can be factored
//! out with a union, and one whose interior lies wholly outside with a
//! difference. Removing dominants shrinks the region the rest of the
//! expression has to explain, which may expose further dominants. What is
//! left is split into connected components and, failing further progress,
//! handed to the two-level extractor.

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::dnf::{extract_dnf, DnfOptions};
use crate::error::{Error, Result};
use crate::expr::{BinaryOp, CsgExpr, Solid};
use crate::geometry::{MembershipLabel, PrimitiveSet};
use crate::graph::build_graph_on;
use crate::sampling::SampledScene;
use crate::target::TargetSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DominanceKind {
    /// Every judged interior point is inside the target.
    #[serde(rename = "dominates_S")]
    DominatesS,
    /// Every judged interior point is outside the target.
    #[serde(rename = "dominates_complement")]
    DominatesComplement,
    #[serde(rename = "non_dominant")]
    NonDominant,
    /// The interior has no judged point left in the active region: all of it
    /// was explained by earlier dominants.
    #[serde(rename = "covered")]
    Covered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DominanceVerdict {
    pub id: String,
    #[serde(skip)]
    pub index: usize,
    pub kind: DominanceKind,
    /// Interior points in the active region, by target label.
    pub inside: usize,
    pub outside: usize,
    pub surface: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepOp {
    Union,
    Difference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub id: String,
    #[serde(skip)]
    pub index: usize,
    pub op: StepOp,
    /// Zero-based scan in which the primitive was found dominant.
    pub iteration: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    /// Dominant primitives in detection order.
    pub steps: Vec<Step>,
    /// Verdicts of every scan.
    pub iterations: Vec<Vec<DominanceVerdict>>,
    #[serde(skip)]
    pub remaining: Vec<usize>,
    pub remaining_ids: Vec<String>,
    /// Sum over scans of the number of primitives visited.
    pub visit_count: usize,
    /// Lattice points the remainder still has to explain.
    #[serde(skip)]
    pub region: FixedBitSet,
    /// Target-inside points left in `region`.
    pub remainder_inside: usize,
}

impl Decomposition {
    pub fn remainder_is_empty(&self) -> bool {
        self.remainder_inside == 0
    }

    /// Target labels of the remainder: unchanged inside `region`, Outside
    /// where a dominant already settled the point.
    pub fn remainder_labels(&self, target: &TargetSamples) -> Vec<MembershipLabel> {
        (0..target.len())
            .map(|k| {
                if self.region.contains(k) {
                    target.label(k)
                } else {
                    MembershipLabel::Outside
                }
            })
            .collect()
    }

    /// Wraps `remainder` in the recorded steps. The first dominant found is
    /// the outermost operation; within one scan unions go inside differences.
    pub fn fold(&self, remainder: Solid) -> Solid {
        let mut order: Vec<&Step> = self.steps.iter().collect();
        order.sort_by_key(|s| (std::cmp::Reverse(s.iteration), s.op == StepOp::Difference));
        order.into_iter().fold(remainder, |acc, step| {
            let leaf = CsgExpr::leaf(step.id.clone());
            match (acc, step.op) {
                (Solid::Empty, StepOp::Union) => Solid::Expr(leaf),
                (Solid::Empty, StepOp::Difference) => Solid::Empty,
                (Solid::Expr(e), StepOp::Union) => Solid::Expr(CsgExpr::union(e, leaf)),
                (Solid::Expr(e), StepOp::Difference) => Solid::Expr(CsgExpr::diff(e, leaf)),
            }
        })
    }
}

/// Every lattice point.
pub fn full_region(sampled: &SampledScene) -> FixedBitSet {
    let mut r = FixedBitSet::with_capacity(sampled.len());
    r.insert_range(..);
    r
}

/// One verdict per primitive of `subset`, judged on the interior points that
/// lie in `region`.
pub fn find_dominant(
    ps: &PrimitiveSet,
    subset: &[usize],
    sampled: &SampledScene,
    target: &TargetSamples,
    region: &FixedBitSet,
) -> Result<Vec<DominanceVerdict>> {
    subset
        .iter()
        .map(|&i| {
            let (mut interior, mut inside, mut outside, mut surface) = (0, 0, 0, 0);
            for k in 0..sampled.len() {
                if sampled.inside_mask(k) >> i & 1 == 0 {
                    continue;
                }
                interior += 1;
                if !region.contains(k) {
                    continue;
                }
                match target.label(k) {
                    MembershipLabel::Inside => inside += 1,
                    MembershipLabel::Outside => outside += 1,
                    MembershipLabel::Surface => surface += 1,
                }
            }
            let id = ps.get(i).id.clone();
            if interior == 0 {
                return Err(Error::NoInteriorSamples(id));
            }
            let kind = match (inside, outside) {
                (0, 0) => DominanceKind::Covered,
                (_, 0) => DominanceKind::DominatesS,
                (0, _) => DominanceKind::DominatesComplement,
                _ => DominanceKind::NonDominant,
            };
            Ok(DominanceVerdict {
                id,
                index: i,
                kind,
                inside,
                outside,
                surface,
            })
        })
        .collect()
}

/// Removes dominant primitives in batches until a scan finds none. Both kinds
/// of dominant have their interior masked out of the region: the point is
/// settled by the step that factors the primitive out.
pub fn decompose(
    ps: &PrimitiveSet,
    subset: &[usize],
    sampled: &SampledScene,
    target: &TargetSamples,
    region: &FixedBitSet,
) -> Result<Decomposition> {
    let mut remaining = subset.to_vec();
    let mut region = region.clone();
    let mut steps = Vec::new();
    let mut iterations = Vec::new();
    let mut visit_count = 0;
    while !remaining.is_empty() {
        visit_count += remaining.len();
        let verdicts = find_dominant(ps, &remaining, sampled, target, &region)?;
        let mut settled = 0u64;
        for v in &verdicts {
            let op = match v.kind {
                DominanceKind::DominatesS => StepOp::Union,
                DominanceKind::DominatesComplement => StepOp::Difference,
                _ => continue,
            };
            settled |= 1 << v.index;
            steps.push(Step {
                id: v.id.clone(),
                index: v.index,
                op,
                iteration: iterations.len(),
            });
        }
        for k in region.clone().ones() {
            if sampled.inside_mask(k) & settled != 0 {
                region.remove(k);
            }
        }
        let before = remaining.len();
        remaining.retain(|i| {
            verdicts
                .iter()
                .any(|v| v.index == *i && v.kind == DominanceKind::NonDominant)
        });
        iterations.push(verdicts);
        if remaining.len() == before {
            break;
        }
    }
    let mut left = region.clone();
    left.intersect_with(target.inside_set());
    Ok(Decomposition {
        steps,
        iterations,
        remaining_ids: remaining.iter().map(|&i| ps.get(i).id.clone()).collect(),
        remaining,
        visit_count,
        remainder_inside: left.count_ones(..),
        region,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelTrace {
    pub depth: usize,
    pub primitives: Vec<String>,
    pub decomposition: Decomposition,
    /// Components of the remainder's intersection graph.
    pub components: Vec<Vec<String>>,
    /// Two-level expression used for the remainder, when it was needed.
    pub fallback: Option<String>,
    pub expression: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Reconstruction {
    #[serde(serialize_with = "solid_text")]
    pub solid: Solid,
    /// Top-level decomposition.
    pub decomposition: Decomposition,
    /// Every level visited, in completion order.
    pub levels: Vec<LevelTrace>,
}

fn solid_text<S: serde::Serializer>(solid: &Solid, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&solid.to_string())
}

/// Full pipeline over every primitive: decompose, split the remainder into
/// components, recurse, fall back to a minimized two-level form, merge by
/// union, fold the steps back around.
pub fn reconstruct(
    ps: &PrimitiveSet,
    sampled: &SampledScene,
    target: &TargetSamples,
    options: &DnfOptions,
) -> Result<Reconstruction> {
    let all: Vec<usize> = (0..ps.len()).collect();
    let mut levels = Vec::new();
    let solid = reconstruct_on(ps, &all, sampled, target, &full_region(sampled), options, 0, &mut levels)?;
    let decomposition = levels
        .iter()
        .find(|l| l.depth == 0)
        .map(|l| l.decomposition.clone())
        .expect("top level is always traced");
    Ok(Reconstruction {
        solid,
        decomposition,
        levels,
    })
}

#[allow(clippy::too_many_arguments)]
fn reconstruct_on(
    ps: &PrimitiveSet,
    subset: &[usize],
    sampled: &SampledScene,
    target: &TargetSamples,
    region: &FixedBitSet,
    options: &DnfOptions,
    depth: usize,
    levels: &mut Vec<LevelTrace>,
) -> Result<Solid> {
    if depth > ps.len() {
        return Err(Error::RecursionDepth(ps.len()));
    }
    let dec = decompose(ps, subset, sampled, target, region)?;
    let mut components = Vec::new();
    let mut fallback = None;
    let remainder = if dec.remainder_is_empty() {
        Solid::Empty
    } else if dec.remaining.is_empty() {
        return Err(Error::Unrepresentable(format!(
            "{} target points are not explained by any primitive",
            dec.remainder_inside
        )));
    } else {
        let graph = build_graph_on(ps, &dec.remaining, sampled, Some(&dec.region), None);
        let parts: Vec<Vec<usize>> = graph
            .connected_components()
            .parts
            .iter()
            .map(|p| p.iter().map(|&v| graph.primitive_indices[v]).collect())
            .collect();
        components = parts
            .iter()
            .map(|p| p.iter().map(|&i| ps.get(i).id.clone()).collect())
            .collect();
        if parts.len() > 1 {
            let mut merged = Solid::Empty;
            for part in &parts {
                let others: u64 = parts
                    .iter()
                    .filter(|q| *q != part)
                    .flatten()
                    .fold(0, |m, &i| m | 1 << i);
                let mut sub = dec.region.clone();
                for k in dec.region.ones() {
                    if sampled.inside_mask(k) & others != 0 {
                        sub.remove(k);
                    }
                }
                let piece = reconstruct_on(ps, part, sampled, target, &sub, options, depth + 1, levels)?;
                merged = match (merged, piece) {
                    (Solid::Empty, p) => p,
                    (m, Solid::Empty) => m,
                    (Solid::Expr(a), Solid::Expr(b)) => Solid::Expr(CsgExpr::binary(BinaryOp::Union, a, b)),
                };
            }
            merged
        } else {
            // A single component has already been scanned on this region.
            let extraction = extract_dnf(ps, &dec.remaining, sampled, target, Some(&dec.region), options)?;
            fallback = Some(extraction.minimized.to_string());
            extraction.minimized
        }
    };
    let solid = dec.fold(remainder);
    levels.push(LevelTrace {
        depth,
        primitives: subset.iter().map(|&i| ps.get(i).id.clone()).collect(),
        decomposition: dec,
        components,
        fallback,
        expression: solid.to_string(),
    });
    Ok(solid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Point, Primitive, SamplePlan};
    use crate::sampling::Agreement;
    use crate::target::TargetSolid;

    fn disc(id: &str, x: f64, y: f64, r: f64) -> Primitive {
        Primitive::sphere(id, [x, y, 0.0], r).unwrap()
    }

    fn setup(prims: Vec<Primitive>, target: &str) -> (PrimitiveSet, SampledScene, TargetSamples) {
        let ps = PrimitiveSet::new(prims).unwrap();
        let plan = SamplePlan::new(
            Aabb::new(Point::new(-3.0, -3.0, -1.0), Point::new(5.0, 3.0, 1.0)),
            96,
            0.25,
            2,
        )
        .unwrap();
        let s = SampledScene::new(&ps, &plan, 5, 1e-4).unwrap();
        let t = TargetSolid::Oracle(CsgExpr::parse(target).unwrap())
            .sample(&ps, &s)
            .unwrap();
        (ps, s, t)
    }

    fn kinds(v: &[DominanceVerdict]) -> Vec<DominanceKind> {
        v.iter().map(|d| d.kind).collect()
    }

    fn ops(d: &Decomposition) -> Vec<(&str, StepOp)> {
        d.steps.iter().map(|s| (s.id.as_str(), s.op)).collect()
    }

    fn equivalent(ps: &PrimitiveSet, s: &SampledScene, t: &TargetSamples, solid: &Solid) -> bool {
        let labels = solid.evaluate_on(ps, s).unwrap();
        Agreement::compare(&labels, t.labels()).is_equivalent()
    }

    #[test]
    fn disjoint_union_members_dominate() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0), disc("B", 3.0, 0.0, 1.0)], "(union A B)");
        let v = find_dominant(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(kinds(&v), vec![DominanceKind::DominatesS; 2]);
        let d = decompose(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(ops(&d), vec![("A", StepOp::Union), ("B", StepOp::Union)]);
        assert!(d.remainder_is_empty());
        assert_eq!(d.visit_count, 2);
    }

    #[test]
    fn subtracted_disjoint_primitive_dominates_complement() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0), disc("B", 3.0, 0.0, 1.0)], "(diff A B)");
        let v = find_dominant(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(v[1].kind, DominanceKind::DominatesComplement);
        assert_eq!(v[1].inside, 0);
        assert!(v[1].outside > 0);
    }

    #[test]
    fn intersection_operand_is_not_dominant() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0), disc("B", 1.0, 0.0, 1.0)], "(inter A B)");
        let v = find_dominant(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(v[0].kind, DominanceKind::NonDominant);
        // Oracle: A has interior points on both sides of A ∩ B.
        let a = &ps.get(0);
        let b = &ps.get(1);
        let probe_in = Point::new(0.5, 0.0, 0.0);
        let probe_out = Point::new(-0.5, 0.0, 0.0);
        assert!(a.signed_value(&probe_in) < 0.0 && b.signed_value(&probe_in) < 0.0);
        assert!(a.signed_value(&probe_out) < 0.0 && b.signed_value(&probe_out) > 0.0);
    }

    #[test]
    fn symmetric_difference_has_no_dominant() {
        let (ps, s, t) = setup(
            vec![disc("A", 0.0, 0.0, 1.0), disc("B", 1.0, 0.0, 1.0)],
            "(union (diff A B) (diff B A))",
        );
        let d = decompose(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert!(d.steps.is_empty());
        assert_eq!(d.remaining_ids, vec!["A", "B"]);
        assert_eq!(d.remainder_inside, t.inside_count());
        assert_eq!(kinds(&d.iterations[0]), vec![DominanceKind::NonDominant; 2]);
    }

    #[test]
    fn hole_is_peeled_before_its_host() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 2.0), disc("B", 0.3, 0.0, 0.8)], "(diff A B)");
        let d = decompose(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(ops(&d), vec![("B", StepOp::Difference), ("A", StepOp::Union)]);
        assert_eq!(d.visit_count, 3);
        let solid = d.fold(Solid::Empty);
        assert_eq!(solid.to_string(), "(diff A B)");
        assert!(equivalent(&ps, &s, &t, &solid));
    }

    #[test]
    fn single_leaf_reconstructs_to_itself() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0)], "A");
        let r = reconstruct(&ps, &s, &t, &DnfOptions::default()).unwrap();
        assert_eq!(r.solid, Solid::Expr(CsgExpr::leaf("A")));
    }

    #[test]
    fn disjoint_union_reconstructs_with_two_leaves() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0), disc("B", 3.0, 0.0, 1.0)], "(union A B)");
        let r = reconstruct(&ps, &s, &t, &DnfOptions::default()).unwrap();
        assert_eq!(r.solid.leaf_count(), 2);
        assert!(equivalent(&ps, &s, &t, &r.solid));
    }

    #[test]
    fn remainder_components_are_solved_separately() {
        // Two symmetric differences far apart plus a dominant disc.
        let (ps, s, t) = setup(
            vec![
                disc("A", -2.0, 0.0, 0.7),
                disc("B", -1.4, 0.0, 0.7),
                disc("C", 2.0, 0.0, 0.7),
                disc("D", 2.6, 0.0, 0.7),
                disc("E", 0.3, 2.0, 0.5),
            ],
            "(union (union (union (diff A B) (diff B A)) (union (diff C D) (diff D C))) E)",
        );
        let r = reconstruct(&ps, &s, &t, &DnfOptions::default()).unwrap();
        assert!(equivalent(&ps, &s, &t, &r.solid));
        assert_eq!(r.solid.occurrences("E"), 1);
        let top = r.levels.last().unwrap();
        assert_eq!(top.depth, 0);
        assert_eq!(top.components, vec![vec!["A", "B"], vec!["C", "D"]]);
        assert_eq!(r.levels.iter().filter(|l| l.fallback.is_some()).count(), 2);
    }

    #[test]
    fn nested_chain_sheds_one_per_scan() {
        // Concentric discs alternately added and removed.
        let prims: Vec<Primitive> = (0..5)
            .map(|i| disc(&format!("D{i}"), 0.0, 0.0, 2.5 - 0.5 * i as f64))
            .collect();
        let (ps, s, t) = setup(prims, "(union (diff (union (diff D0 D1) D2) D3) D4)");
        let all: Vec<usize> = (0..5).collect();
        let d = decompose(&ps, &all, &s, &t, &full_region(&s)).unwrap();
        assert_eq!(d.visit_count, (25 + 5) / 2);
        let r = reconstruct(&ps, &s, &t, &DnfOptions::default()).unwrap();
        assert_eq!(r.solid.to_string(), "(union (diff (union (diff D0 D1) D2) D3) D4)");
    }

    #[test]
    fn unsampled_primitive_is_an_error() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 1.0), disc("B", 3.0, 0.0, 1e-3)], "A");
        assert!(matches!(
            find_dominant(&ps, &[0, 1], &s, &t, &full_region(&s)),
            Err(Error::NoInteriorSamples(id)) if id == "B"
        ));
    }

    #[test]
    fn nested_union_members_both_dominate() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 2.0), disc("B", 0.2, 0.0, 0.5)], "A");
        let d = decompose(&ps, &[0, 1], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(ops(&d), vec![("A", StepOp::Union), ("B", StepOp::Union)]);
        assert!(equivalent(&ps, &s, &t, &d.fold(Solid::Empty)));
    }

    #[test]
    fn primitive_settled_by_others_is_covered() {
        let cube = |id: &str, x0: f64, x1: f64, h: f64| Primitive::cuboid(id, [x0, -h, -0.5], [x1, h, 0.5]).unwrap();
        let (ps, s, t) = setup(
            vec![cube("A", -1.0, 0.0, 1.0), cube("B", 0.0, 1.0, 1.0), cube("X", -0.5, 0.5, 0.5)],
            "(diff A B)",
        );
        let d = decompose(&ps, &[0, 1, 2], &s, &t, &full_region(&s)).unwrap();
        assert_eq!(kinds(&d.iterations[0])[2], DominanceKind::NonDominant);
        assert_eq!(d.iterations[1][0].kind, DominanceKind::Covered);
        assert!(d.remaining.is_empty());
        assert_eq!(d.visit_count, 4);
        let solid = d.fold(Solid::Empty);
        assert_eq!(solid.to_string(), "(diff A B)");
        assert!(equivalent(&ps, &s, &t, &solid));
    }

    #[test]
    fn trace_serializes() {
        let (ps, s, t) = setup(vec![disc("A", 0.0, 0.0, 2.0), disc("B", 0.3, 0.0, 0.8)], "(diff A B)");
        let r = reconstruct(&ps, &s, &t, &DnfOptions::default()).unwrap();
        let doc = serde_json::to_value(&r).unwrap();
        assert_eq!(doc["solid"], "(diff A B)");
        assert_eq!(doc["decomposition"]["steps"][0]["op"], "difference");
        assert_eq!(doc["decomposition"]["iterations"][0][1]["kind"], "dominates_complement");
    }
}
