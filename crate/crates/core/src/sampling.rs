//! Primitive membership of every lattice point, packed as bitmasks.

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{BinaryOp, CsgExpr, ResolvedExpr};
use crate::geometry::{sample_grid, MembershipLabel, Point, PrimitiveSet, SamplePlan};

pub const MAX_PRIMITIVES: usize = 64;

/// Lattice points with per-primitive labels. Bit `i` of `inside[k]` is set
/// when point `k` is strictly inside primitive `i`; bit `i` of `surface[k]`
/// when it lies in that primitive's surface band.
#[derive(Debug, Clone)]
pub struct SampledScene {
    pub plan: SamplePlan,
    pub seed: u64,
    pub epsilon: f64,
    points: Vec<Point>,
    inside: Vec<u64>,
    surface: Vec<u64>,
}

impl SampledScene {
    pub fn new(ps: &PrimitiveSet, plan: &SamplePlan, seed: u64, epsilon: f64) -> Result<Self> {
        if ps.len() > MAX_PRIMITIVES {
            return Err(Error::TooManyPrimitives(ps.len()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidPlan(format!("epsilon must be positive, got {epsilon}")));
        }
        let points = sample_grid(plan, seed)?;
        let mut inside = Vec::with_capacity(points.len());
        let mut surface = Vec::with_capacity(points.len());
        for x in &points {
            let (mut ins, mut surf) = (0u64, 0u64);
            for (i, p) in ps.iter().enumerate() {
                match p.classify(x, epsilon) {
                    MembershipLabel::Inside => ins |= 1 << i,
                    MembershipLabel::Surface => surf |= 1 << i,
                    MembershipLabel::Outside => {}
                }
            }
            inside.push(ins);
            surface.push(surf);
        }
        Ok(SampledScene {
            plan: *plan,
            seed,
            epsilon,
            points,
            inside,
            surface,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &Point {
        &self.points[k]
    }

    pub fn inside_mask(&self, k: usize) -> u64 {
        self.inside[k]
    }

    pub fn surface_mask(&self, k: usize) -> u64 {
        self.surface[k]
    }

    /// A point is clean when no primitive has it in its surface band.
    pub fn is_clean(&self, k: usize) -> bool {
        self.surface[k] == 0
    }

    /// The fundamental-product signature of a clean point.
    pub fn signature(&self, k: usize) -> Option<u64> {
        self.is_clean(k).then(|| self.inside[k])
    }

    pub fn clean_count(&self) -> usize {
        self.surface.iter().filter(|&&s| s == 0).count()
    }

    pub fn label(&self, k: usize, primitive: usize) -> MembershipLabel {
        if self.surface[k] >> primitive & 1 == 1 {
            MembershipLabel::Surface
        } else if self.inside[k] >> primitive & 1 == 1 {
            MembershipLabel::Inside
        } else {
            MembershipLabel::Outside
        }
    }

    /// Labels of `expr` at every lattice point.
    pub fn evaluate(&self, expr: &ResolvedExpr) -> Vec<MembershipLabel> {
        (0..self.len())
            .map(|k| expr.evaluate_masks(self.inside[k], self.surface[k]))
            .collect()
    }

    pub fn evaluate_expr(&self, expr: &CsgExpr, ps: &PrimitiveSet) -> Result<Vec<MembershipLabel>> {
        Ok(self.evaluate(&expr.resolve(ps)?))
    }

    /// Per-primitive sets of points strictly inside.
    pub fn leaf_sets(&self, primitive_count: usize) -> Vec<FixedBitSet> {
        (0..primitive_count)
            .map(|i| {
                let mut set = FixedBitSet::with_capacity(self.len());
                for (k, m) in self.inside.iter().enumerate() {
                    if m >> i & 1 == 1 {
                        set.insert(k);
                    }
                }
                set
            })
            .collect()
    }

    pub fn clean_set(&self) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.len());
        for (k, s) in self.surface.iter().enumerate() {
            if *s == 0 {
                set.insert(k);
            }
        }
        set
    }
}

/// Inside-set of `expr` from per-leaf inside-sets. Exact on clean points.
pub fn evaluate_sets(expr: &ResolvedExpr, leaves: &[FixedBitSet]) -> FixedBitSet {
    match expr {
        ResolvedExpr::Leaf(i) => leaves[*i].clone(),
        ResolvedExpr::Binary(op, l, r) => {
            let mut a = evaluate_sets(l, leaves);
            let b = evaluate_sets(r, leaves);
            match op {
                BinaryOp::Union => a.union_with(&b),
                BinaryOp::Intersection => a.intersect_with(&b),
                BinaryOp::Difference => a.difference_with(&b),
            }
            a
        }
        ResolvedExpr::Complement(c) => {
            let mut a = evaluate_sets(c, leaves);
            a.toggle_range(..);
            a
        }
    }
}

/// Point-by-point comparison of two label vectors. Points where either side
/// is Surface are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Agreement {
    pub total: usize,
    pub matched: usize,
    pub mismatched: usize,
    pub surface_excluded: usize,
}

impl Agreement {
    pub fn compare(candidate: &[MembershipLabel], target: &[MembershipLabel]) -> Agreement {
        assert_eq!(candidate.len(), target.len());
        let mut a = Agreement {
            total: candidate.len(),
            matched: 0,
            mismatched: 0,
            surface_excluded: 0,
        };
        for (c, t) in candidate.iter().zip(target) {
            if *c == MembershipLabel::Surface || *t == MembershipLabel::Surface {
                a.surface_excluded += 1;
            } else if c == t {
                a.matched += 1;
            } else {
                a.mismatched += 1;
            }
        }
        a
    }

    pub fn match_fraction(&self) -> f64 {
        let judged = self.matched + self.mismatched;
        if judged == 0 {
            0.0
        } else {
            self.matched as f64 / judged as f64
        }
    }

    pub fn is_equivalent(&self) -> bool {
        self.mismatched == 0 && self.matched > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Primitive};

    fn scene() -> (PrimitiveSet, SampledScene) {
        let ps = PrimitiveSet::new(vec![
            Primitive::sphere("A", [0.0, 0.0, 0.0], 1.0).unwrap(),
            Primitive::sphere("B", [1.5, 0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let plan = SamplePlan::new(
            Aabb::new(Point::new(-2.0, -2.0, -1.0), Point::new(3.5, 2.0, 1.0)),
            40,
            0.3,
            2,
        )
        .unwrap();
        let s = SampledScene::new(&ps, &plan, 3, 1e-4).unwrap();
        (ps, s)
    }

    #[test]
    fn masks_match_direct_classification() {
        let (ps, s) = scene();
        for k in 0..s.len() {
            for i in 0..ps.len() {
                assert_eq!(s.label(k, i), ps.get(i).classify(s.point(k), 1e-4));
            }
        }
    }

    #[test]
    fn set_evaluation_agrees_with_labels_on_clean_points() {
        let (ps, s) = scene();
        let leaves = s.leaf_sets(ps.len());
        for text in ["(union A B)", "(inter A B)", "(diff A B)", "(compl (diff B A))"] {
            let e = CsgExpr::parse(text).unwrap().resolve(&ps).unwrap();
            let set = evaluate_sets(&e, &leaves);
            let labels = s.evaluate(&e);
            for k in 0..s.len() {
                if s.is_clean(k) {
                    assert_eq!(set.contains(k), labels[k] == MembershipLabel::Inside, "{text}");
                }
            }
        }
    }

    #[test]
    fn agreement_accounts_for_every_point() {
        use MembershipLabel::*;
        let a = Agreement::compare(&[Inside, Outside, Surface, Inside], &[Inside, Inside, Outside, Surface]);
        assert_eq!(a.matched + a.mismatched + a.surface_excluded, a.total);
        assert_eq!((a.matched, a.mismatched, a.surface_excluded), (1, 1, 2));
        assert_eq!(a.match_fraction(), 0.5);
    }
}
