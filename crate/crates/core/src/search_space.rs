//! Size of the CSG tree search space and an exhaustive enumerator over it.
//!
//! A labeled tree with `n` inner nodes has `n + 1` leaves drawn from the
//! primitive set `P` (with repetition) and `n` operations drawn from `O`, over
//! one of `C(n)` binary shapes, so there are `|P|^(n+1) * |O|^n * C(n)` trees.

use std::rc::Rc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{BinaryOp, CsgExpr, OperatorSet};
use crate::geometry::PrimitiveSet;
use crate::sampling::{evaluate_sets, SampledScene};
use crate::target::TargetSamples;

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// `C(n) = binom(2n, n) / (n + 1)`, exactly.
pub fn catalan(n: u64) -> BigUint {
    // binom(2n, n) = prod_{k=1..n} (n + k) / k; every prefix is an integer.
    let mut binom = BigUint::one();
    for k in 1..=n {
        binom = binom * BigUint::from(n + k) / BigUint::from(k);
    }
    binom / BigUint::from(n + 1)
}

/// Number of labeled trees with `n` inner nodes.
pub fn count_trees(primitive_count: u64, operator_count: u64, n: u64) -> BigUint {
    let p = BigUint::from(primitive_count);
    let o = BigUint::from(operator_count);
    p.pow(n as u32 + 1) * o.pow(n as u32) * catalan(n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicTrace {
    pub n_min: u64,
    pub h_max: f64,
    pub n_max: u64,
    /// True when `n_max` came from the caller rather than the height heuristic.
    pub n_max_overridden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpaceReport {
    pub primitive_count: u64,
    pub operator_count: u64,
    pub n_min: u64,
    pub n_max: u64,
    #[serde(serialize_with = "serialize_counts")]
    pub per_n: Vec<(u64, BigUint)>,
    #[serde(serialize_with = "serialize_big")]
    pub total: BigUint,
    pub heuristic: Option<HeuristicTrace>,
}

fn serialize_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

fn serialize_counts<S: serde::Serializer>(
    v: &[(u64, BigUint)],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    #[derive(Serialize)]
    struct Entry<'a> {
        n: u64,
        #[serde(serialize_with = "serialize_big")]
        count: &'a BigUint,
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for (n, count) in v {
        seq.serialize_element(&Entry { n: *n, count })?;
    }
    seq.end()
}

/// Sum of [`count_trees`] for every `n` in `n_min..=n_max`.
pub fn count_trees_range(
    primitive_count: u64,
    operator_count: u64,
    n_min: u64,
    n_max: u64,
) -> Result<SearchSpaceReport> {
    if primitive_count == 0 || operator_count == 0 {
        return Err(Error::InvalidScene(
            "primitive and operator counts must be at least 1".into(),
        ));
    }
    if n_min > n_max {
        return Err(Error::InvalidScene(format!(
            "n_min ({n_min}) exceeds n_max ({n_max})"
        )));
    }
    let per_n: Vec<(u64, BigUint)> = (n_min..=n_max)
        .map(|n| (n, count_trees(primitive_count, operator_count, n)))
        .collect();
    let total = per_n.iter().fold(BigUint::zero(), |acc, (_, c)| acc + c);
    Ok(SearchSpaceReport {
        primitive_count,
        operator_count,
        n_min,
        n_max,
        per_n,
        total,
        heuristic: None,
    })
}

/// Bounds on the inner-node count for `primitive_count` primitives.
///
/// `n_min = |P| - 1` (every primitive used at least once). The height estimate
/// `h_max = sqrt(pi/2 * |P| * (|P| - 1))` is turned into an inner-node bound
/// by taking the full binary tree of height `ceil(h_max)`.
pub fn n_bounds(primitive_count: u64) -> HeuristicTrace {
    assert!(primitive_count >= 1, "primitive count must be at least 1");
    let p = primitive_count as f64;
    let n_min = primitive_count - 1;
    let h_max = (std::f64::consts::FRAC_PI_2 * p * (p - 1.0)).sqrt();
    let height = h_max.ceil() as u32;
    let full = if height >= 64 { u64::MAX } else { (1u64 << height) - 1 };
    HeuristicTrace {
        n_min,
        h_max,
        n_max: full.max(n_min),
        n_max_overridden: false,
    }
}

/// [`count_trees_range`] over the heuristic bounds, with an optional `n_max`
/// override.
pub fn count_with_heuristics(
    primitive_count: u64,
    operator_count: u64,
    n_max_override: Option<u64>,
) -> Result<SearchSpaceReport> {
    let mut trace = n_bounds(primitive_count);
    if let Some(n_max) = n_max_override {
        trace.n_max = n_max;
        trace.n_max_overridden = true;
    }
    let mut report = count_trees_range(primitive_count, operator_count, trace.n_min, trace.n_max)?;
    report.heuristic = Some(trace);
    Ok(report)
}

/// Unlabeled binary tree shape.
#[derive(Debug, PartialEq, Eq)]
pub enum TreeShape {
    Leaf,
    Node(Rc<TreeShape>, Rc<TreeShape>),
}

impl TreeShape {
    pub fn inner_count(&self) -> usize {
        match self {
            TreeShape::Leaf => 0,
            TreeShape::Node(l, r) => 1 + l.inner_count() + r.inner_count(),
        }
    }
}

/// All shapes with `n` inner nodes: left subtree size ascending, then left
/// shape order, then right shape order.
pub fn tree_shapes(n: usize) -> Vec<Rc<TreeShape>> {
    let mut table: Vec<Vec<Rc<TreeShape>>> = vec![vec![Rc::new(TreeShape::Leaf)]];
    for size in 1..=n {
        let mut shapes = Vec::new();
        for left in 0..size {
            let right = size - 1 - left;
            for l in &table[left] {
                for r in &table[right] {
                    shapes.push(Rc::new(TreeShape::Node(l.clone(), r.clone())));
                }
            }
        }
        table.push(shapes);
    }
    table.swap_remove(n)
}

/// Streams every labeled tree with `n` inner nodes exactly once, in canonical
/// order: shape, then operator labels (preorder, first position most
/// significant), then leaf labels (left to right, first most significant).
pub struct TreeEnumerator {
    ids: Vec<String>,
    ops: Vec<BinaryOp>,
    shapes: Vec<Rc<TreeShape>>,
    shape: usize,
    op_digits: Vec<usize>,
    leaf_digits: Vec<usize>,
    done: bool,
}

impl TreeEnumerator {
    pub fn new(ps: &PrimitiveSet, ops: &OperatorSet, n: usize, cap: u64) -> Result<Self> {
        let requested = count_trees(ps.len() as u64, ops.len() as u64, n as u64);
        if requested > BigUint::from(cap) {
            return Err(Error::EnumerationCap { requested, cap });
        }
        Ok(TreeEnumerator {
            ids: ps.ids().into_iter().map(String::from).collect(),
            ops: ops.ops().to_vec(),
            shapes: tree_shapes(n),
            shape: 0,
            op_digits: vec![0; n],
            leaf_digits: vec![0; n + 1],
            done: false,
        })
    }

    fn build(&self, shape: &TreeShape, op_at: &mut usize, leaf_at: &mut usize) -> CsgExpr {
        match shape {
            TreeShape::Leaf => {
                let id = &self.ids[self.leaf_digits[*leaf_at]];
                *leaf_at += 1;
                CsgExpr::leaf(id.clone())
            }
            TreeShape::Node(l, r) => {
                let op = self.ops[self.op_digits[*op_at]];
                *op_at += 1;
                let left = self.build(l, op_at, leaf_at);
                let right = self.build(r, op_at, leaf_at);
                CsgExpr::binary(op, left, right)
            }
        }
    }

    /// Increments an odometer whose first digit is most significant.
    fn bump(digits: &mut [usize], base: usize) -> bool {
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < base {
                return true;
            }
            *d = 0;
        }
        false
    }
}

impl Iterator for TreeEnumerator {
    type Item = CsgExpr;

    fn next(&mut self) -> Option<CsgExpr> {
        if self.done {
            return None;
        }
        let shape = self.shapes[self.shape].clone();
        let tree = self.build(&shape, &mut 0, &mut 0);
        if !Self::bump(&mut self.leaf_digits, self.ids.len())
            && !Self::bump(&mut self.op_digits, self.ops.len())
        {
            self.shape += 1;
            self.done = self.shape == self.shapes.len();
        }
        Some(tree)
    }
}

pub fn enumerate_trees(ps: &PrimitiveSet, ops: &OperatorSet, n: usize) -> Result<TreeEnumerator> {
    TreeEnumerator::new(ps, ops, n, DEFAULT_ENUMERATION_CAP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// First matching tree in canonical order at the smallest matching `n`.
    pub best: Option<CsgExpr>,
    pub found_at: Option<usize>,
    /// Candidates inspected per `n`; each `n` is inspected in full.
    pub inspected: Vec<(usize, u64)>,
}

impl SearchOutcome {
    pub fn total_inspected(&self) -> u64 {
        self.inspected.iter().map(|(_, c)| c).sum()
    }
}

/// Tries every tree for `n` in `n_range`, smallest `n` first, and returns the
/// first one (in canonical order) whose labels match the target on every
/// point that is clean and has a definite target label.
pub fn exhaustive_search(
    ps: &PrimitiveSet,
    ops: &OperatorSet,
    sampled: &SampledScene,
    target: &TargetSamples,
    n_range: std::ops::RangeInclusive<usize>,
    cap: u64,
) -> Result<SearchOutcome> {
    let leaves = sampled.leaf_sets(ps.len());
    let mut judged = sampled.clean_set();
    judged.intersect_with(target.definite_set());
    let mut want = target.inside_set().clone();
    want.intersect_with(&judged);

    let mut outcome = SearchOutcome {
        best: None,
        found_at: None,
        inspected: Vec::new(),
    };
    for n in n_range {
        let mut count = 0u64;
        let mut first = None;
        for tree in TreeEnumerator::new(ps, ops, n, cap)? {
            count += 1;
            if first.is_some() {
                continue;
            }
            let mut got = evaluate_sets(&tree.resolve(ps)?, &leaves);
            got.intersect_with(&judged);
            if got == want {
                first = Some(tree);
            }
        }
        outcome.inspected.push((n, count));
        if let Some(tree) = first {
            outcome.best = Some(tree);
            outcome.found_at = Some(n);
            break;
        }
    }
    Ok(outcome)
}
