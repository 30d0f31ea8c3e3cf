//! CSG expression trees: evaluation on sample points, size metrics, and the
//! prefix text format `(union A (diff B C))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MembershipLabel, Point, PrimitiveSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Union,
    Intersection,
    Difference,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 3] = [BinaryOp::Union, BinaryOp::Intersection, BinaryOp::Difference];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Union => "union",
            BinaryOp::Intersection => "inter",
            BinaryOp::Difference => "diff",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "union" => Some(BinaryOp::Union),
            "inter" => Some(BinaryOp::Intersection),
            "diff" => Some(BinaryOp::Difference),
            _ => None,
        }
    }

    /// Three-valued combination. Surface only survives when the other side
    /// does not settle the result on its own.
    pub fn combine(self, a: MembershipLabel, b: MembershipLabel) -> MembershipLabel {
        use MembershipLabel::*;
        match self {
            BinaryOp::Union => match (a, b) {
                (Inside, _) | (_, Inside) => Inside,
                (Outside, Outside) => Outside,
                _ => Surface,
            },
            BinaryOp::Intersection => match (a, b) {
                (Outside, _) | (_, Outside) => Outside,
                (Inside, Inside) => Inside,
                _ => Surface,
            },
            BinaryOp::Difference => BinaryOp::Intersection.combine(a, b.complement()),
        }
    }
}

/// Binary operations admitted during enumeration and search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSet {
    ops: Vec<BinaryOp>,
}

impl OperatorSet {
    pub fn new(ops: Vec<BinaryOp>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidScene("operator set is empty".into()));
        }
        let mut seen = Vec::new();
        for op in ops {
            if !seen.contains(&op) {
                seen.push(op);
            }
        }
        Ok(OperatorSet { ops: seen })
    }

    /// The first `count` of union, intersection, difference.
    pub fn first(count: usize) -> Result<Self> {
        if count == 0 || count > 3 {
            return Err(Error::InvalidScene(format!(
                "operator count must be 1..=3, got {count}"
            )));
        }
        OperatorSet::new(BinaryOp::ALL[..count].to_vec())
    }

    pub fn ops(&self) -> &[BinaryOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

impl Default for OperatorSet {
    fn default() -> Self {
        OperatorSet {
            ops: BinaryOp::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CsgExpr {
    Leaf(String),
    Binary(BinaryOp, Box<CsgExpr>, Box<CsgExpr>),
    Complement(Box<CsgExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeMetrics {
    pub inner_count: usize,
    pub leaf_count: usize,
    pub height: usize,
}

impl CsgExpr {
    pub fn leaf(id: impl Into<String>) -> Self {
        CsgExpr::Leaf(id.into())
    }

    pub fn binary(op: BinaryOp, left: CsgExpr, right: CsgExpr) -> Self {
        CsgExpr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn union(left: CsgExpr, right: CsgExpr) -> Self {
        CsgExpr::binary(BinaryOp::Union, left, right)
    }

    pub fn inter(left: CsgExpr, right: CsgExpr) -> Self {
        CsgExpr::binary(BinaryOp::Intersection, left, right)
    }

    pub fn diff(left: CsgExpr, right: CsgExpr) -> Self {
        CsgExpr::binary(BinaryOp::Difference, left, right)
    }

    pub fn complement(child: CsgExpr) -> Self {
        CsgExpr::Complement(Box::new(child))
    }

    /// Left-deep fold of `op` over `items`; `None` for an empty list.
    pub fn fold_left(op: BinaryOp, items: impl IntoIterator<Item = CsgExpr>) -> Option<CsgExpr> {
        items
            .into_iter()
            .reduce(|acc, next| CsgExpr::binary(op, acc, next))
    }

    pub fn size_metrics(&self) -> SizeMetrics {
        match self {
            CsgExpr::Leaf(_) => SizeMetrics {
                inner_count: 0,
                leaf_count: 1,
                height: 0,
            },
            CsgExpr::Binary(_, l, r) => {
                let (l, r) = (l.size_metrics(), r.size_metrics());
                SizeMetrics {
                    inner_count: l.inner_count + r.inner_count + 1,
                    leaf_count: l.leaf_count + r.leaf_count,
                    height: l.height.max(r.height) + 1,
                }
            }
            CsgExpr::Complement(c) => {
                let c = c.size_metrics();
                SizeMetrics {
                    inner_count: c.inner_count + 1,
                    leaf_count: c.leaf_count,
                    height: c.height + 1,
                }
            }
        }
    }

    /// Leaf ids in left-to-right order, repeats included.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            CsgExpr::Leaf(id) => out.push(id),
            CsgExpr::Binary(_, l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
            CsgExpr::Complement(c) => c.collect_leaves(out),
        }
    }

    pub fn occurrences(&self, id: &str) -> usize {
        self.leaves().into_iter().filter(|l| *l == id).count()
    }

    /// Replaces leaf ids by their positions in `ps`.
    pub fn resolve(&self, ps: &PrimitiveSet) -> Result<ResolvedExpr> {
        Ok(match self {
            CsgExpr::Leaf(id) => ResolvedExpr::Leaf(
                ps.index_of(id)
                    .ok_or_else(|| Error::UnresolvedLeaf(id.clone()))?,
            ),
            CsgExpr::Binary(op, l, r) => {
                ResolvedExpr::Binary(*op, Box::new(l.resolve(ps)?), Box::new(r.resolve(ps)?))
            }
            CsgExpr::Complement(c) => ResolvedExpr::Complement(Box::new(c.resolve(ps)?)),
        })
    }

    pub fn evaluate(&self, ps: &PrimitiveSet, x: &Point, epsilon: f64) -> Result<MembershipLabel> {
        let resolved = self.resolve(ps)?;
        Ok(resolved.evaluate_with(&mut |i| ps.get(i).classify(x, epsilon)))
    }

    /// Min/max composition of the primitives' signed distances: zero on the
    /// boundary of the solid, negative inside, and 1-Lipschitz.
    pub fn signed_value(&self, ps: &PrimitiveSet, x: &Point) -> Result<f64> {
        Ok(self.resolve(ps)?.signed_value(ps, x))
    }

    pub fn to_document(&self) -> ExprDoc {
        match self {
            CsgExpr::Leaf(id) => ExprDoc::Leaf { id: id.clone() },
            CsgExpr::Binary(op, l, r) => {
                let (left, right) = (Box::new(l.to_document()), Box::new(r.to_document()));
                match op {
                    BinaryOp::Union => ExprDoc::Union { left, right },
                    BinaryOp::Intersection => ExprDoc::Inter { left, right },
                    BinaryOp::Difference => ExprDoc::Diff { left, right },
                }
            }
            CsgExpr::Complement(c) => ExprDoc::Compl {
                child: Box::new(c.to_document()),
            },
        }
    }

    pub fn from_document(doc: &ExprDoc) -> CsgExpr {
        match doc {
            ExprDoc::Leaf { id } => CsgExpr::leaf(id.clone()),
            ExprDoc::Union { left, right } => {
                CsgExpr::union(CsgExpr::from_document(left), CsgExpr::from_document(right))
            }
            ExprDoc::Inter { left, right } => {
                CsgExpr::inter(CsgExpr::from_document(left), CsgExpr::from_document(right))
            }
            ExprDoc::Diff { left, right } => {
                CsgExpr::diff(CsgExpr::from_document(left), CsgExpr::from_document(right))
            }
            ExprDoc::Compl { child } => CsgExpr::complement(CsgExpr::from_document(child)),
        }
    }

    pub fn parse(text: &str) -> Result<CsgExpr> {
        let mut parser = Parser::new(text);
        let expr = parser.expr()?;
        match parser.next_token()? {
            None => Ok(expr),
            Some((pos, _)) => Err(parse_error(pos, "unexpected trailing input")),
        }
    }
}

impl fmt::Display for CsgExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsgExpr::Leaf(id) => write!(f, "{id}"),
            CsgExpr::Binary(op, l, r) => write!(f, "({} {l} {r})", op.name()),
            CsgExpr::Complement(c) => write!(f, "(compl {c})"),
        }
    }
}

impl std::str::FromStr for CsgExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CsgExpr::parse(s)
    }
}

/// An extracted solid: an expression, or the explicit empty solid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solid {
    Empty,
    Expr(CsgExpr),
}

impl Solid {
    pub const EMPTY_MARKER: &'static str = "(empty)";

    pub fn expr(&self) -> Option<&CsgExpr> {
        match self {
            Solid::Empty => None,
            Solid::Expr(e) => Some(e),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.expr().map_or(0, |e| e.size_metrics().leaf_count)
    }

    pub fn size_metrics(&self) -> SizeMetrics {
        self.expr().map_or(
            SizeMetrics {
                inner_count: 0,
                leaf_count: 0,
                height: 0,
            },
            CsgExpr::size_metrics,
        )
    }

    pub fn occurrences(&self, id: &str) -> usize {
        self.expr().map_or(0, |e| e.occurrences(id))
    }

    /// Accepts the expression syntax or the `(empty)` marker.
    pub fn parse(text: &str) -> Result<Solid> {
        if text.trim() == Solid::EMPTY_MARKER {
            Ok(Solid::Empty)
        } else {
            CsgExpr::parse(text).map(Solid::Expr)
        }
    }

    /// Labels on every point of `sampled`; the empty solid is Outside
    /// everywhere.
    pub fn evaluate_on(
        &self,
        ps: &PrimitiveSet,
        sampled: &crate::sampling::SampledScene,
    ) -> Result<Vec<MembershipLabel>> {
        match self {
            Solid::Empty => Ok(vec![MembershipLabel::Outside; sampled.len()]),
            Solid::Expr(e) => sampled.evaluate_expr(e, ps),
        }
    }
}

impl fmt::Display for Solid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Solid::Empty => f.write_str(Solid::EMPTY_MARKER),
            Solid::Expr(e) => e.fmt(f),
        }
    }
}

/// Structured-document form of an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExprDoc {
    Leaf { id: String },
    Union { left: Box<ExprDoc>, right: Box<ExprDoc> },
    Inter { left: Box<ExprDoc>, right: Box<ExprDoc> },
    Diff { left: Box<ExprDoc>, right: Box<ExprDoc> },
    Compl { child: Box<ExprDoc> },
}

impl Serialize for CsgExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CsgExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ExprDoc::deserialize(d).map(|doc| CsgExpr::from_document(&doc))
    }
}

/// An expression whose leaves are primitive indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedExpr {
    Leaf(usize),
    Binary(BinaryOp, Box<ResolvedExpr>, Box<ResolvedExpr>),
    Complement(Box<ResolvedExpr>),
}

impl ResolvedExpr {
    pub fn evaluate_with(&self, leaf: &mut impl FnMut(usize) -> MembershipLabel) -> MembershipLabel {
        match self {
            ResolvedExpr::Leaf(i) => leaf(*i),
            ResolvedExpr::Binary(op, l, r) => {
                let a = l.evaluate_with(leaf);
                let b = r.evaluate_with(leaf);
                op.combine(a, b)
            }
            ResolvedExpr::Complement(c) => c.evaluate_with(leaf).complement(),
        }
    }

    /// Evaluation on a point whose per-primitive labels are encoded as
    /// bitmasks (bit `i` of `inside` / `surface` for primitive `i`).
    pub fn evaluate_masks(&self, inside: u64, surface: u64) -> MembershipLabel {
        self.evaluate_with(&mut |i| {
            if surface >> i & 1 == 1 {
                MembershipLabel::Surface
            } else if inside >> i & 1 == 1 {
                MembershipLabel::Inside
            } else {
                MembershipLabel::Outside
            }
        })
    }

    pub fn signed_value(&self, ps: &PrimitiveSet, x: &Point) -> f64 {
        match self {
            ResolvedExpr::Leaf(i) => ps.get(*i).signed_value(x),
            ResolvedExpr::Binary(op, l, r) => {
                let (a, b) = (l.signed_value(ps, x), r.signed_value(ps, x));
                match op {
                    BinaryOp::Union => a.min(b),
                    BinaryOp::Intersection => a.max(b),
                    BinaryOp::Difference => a.max(-b),
                }
            }
            ResolvedExpr::Complement(c) => -c.signed_value(ps, x),
        }
    }
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token<'a>)>> {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let Some(c) = trimmed.chars().next() else {
            return Ok(None);
        };
        let token = match c {
            '(' => {
                self.pos += 1;
                Token::Open
            }
            ')' => {
                self.pos += 1;
                Token::Close
            }
            _ => {
                let len = trimmed
                    .find(|ch: char| ch.is_whitespace() || ch == '(' || ch == ')')
                    .unwrap_or(trimmed.len());
                self.pos += len;
                Token::Atom(&trimmed[..len])
            }
        };
        Ok(Some((start, token)))
    }

    fn expr(&mut self) -> Result<CsgExpr> {
        match self.next_token()? {
            None => Err(parse_error(self.pos, "unexpected end of input")),
            Some((_, Token::Atom(id))) => Ok(CsgExpr::leaf(id)),
            Some((pos, Token::Close)) => Err(parse_error(pos, "unexpected `)`")),
            Some((_, Token::Open)) => {
                let (pos, name) = match self.next_token()? {
                    Some((pos, Token::Atom(name))) => (pos, name),
                    Some((pos, _)) => return Err(parse_error(pos, "expected an operator name")),
                    None => return Err(parse_error(self.pos, "unexpected end of input")),
                };
                let expr = if name == "compl" {
                    CsgExpr::complement(self.expr()?)
                } else if let Some(op) = BinaryOp::from_name(name) {
                    let left = self.expr()?;
                    let right = self.expr()?;
                    CsgExpr::binary(op, left, right)
                } else {
                    return Err(parse_error(pos, format!("unknown operator `{name}`")));
                };
                match self.next_token()? {
                    Some((_, Token::Close)) => Ok(expr),
                    Some((pos, _)) => Err(parse_error(pos, "expected `)`")),
                    None => Err(parse_error(self.pos, "unexpected end of input, expected `)`")),
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{MembershipLabel::*, Primitive};
    use proptest::prelude::*;

    pub fn arb_expr(ids: &'static [&'static str], with_complement: bool) -> impl Strategy<Value = CsgExpr> {
        let leaf = prop::sample::select(ids).prop_map(CsgExpr::leaf);
        leaf.prop_recursive(5, 32, 2, move |inner| {
            let binary = (
                prop::sample::select(BinaryOp::ALL.to_vec()),
                inner.clone(),
                inner.clone(),
            )
                .prop_map(|(op, l, r)| CsgExpr::binary(op, l, r));
            if with_complement {
                prop_oneof![3 => binary, 1 => inner.prop_map(CsgExpr::complement)].boxed()
            } else {
                binary.boxed()
            }
        })
    }

    fn two_spheres(gap: f64) -> PrimitiveSet {
        PrimitiveSet::new(vec![
            Primitive::sphere("A", [0.0, 0.0, 0.0], 1.0).unwrap(),
            Primitive::sphere("B", [gap, 0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn union_inside_one_child() {
        let ps = two_spheres(5.0);
        let e = CsgExpr::parse("(union A B)").unwrap();
        assert_eq!(e.evaluate(&ps, &Point::new(0.1, 0.0, 0.0), 1e-6).unwrap(), Inside);
    }

    #[test]
    fn self_difference_is_empty_off_boundary() {
        let ps = two_spheres(5.0);
        let e = CsgExpr::parse("(diff A A)").unwrap();
        for x in [0.0, 0.3, -0.7, 0.95] {
            assert_eq!(e.evaluate(&ps, &Point::new(x, 0.0, 0.0), 1e-6).unwrap(), Outside);
        }
    }

    #[test]
    fn disjoint_intersection_has_no_inside_samples() {
        let ps = two_spheres(5.0);
        let e = CsgExpr::parse("(inter A B)").unwrap();
        let plan = crate::geometry::SamplePlan::new(
            crate::geometry::Aabb::new(Point::new(-2.0, -2.0, -2.0), Point::new(7.0, 2.0, 2.0)),
            10,
            0.0,
            3,
        )
        .unwrap();
        let points = crate::geometry::sample_grid(&plan, 1).unwrap();
        assert_eq!(points.len(), 1000);
        let mut inside = 0;
        for x in &points {
            let a = ps.get(0).classify(x, 1e-6);
            let b = ps.get(1).classify(x, 1e-6);
            let label = e.evaluate(&ps, x, 1e-6).unwrap();
            assert!(!(a == Inside && b == Inside));
            if label == Inside {
                inside += 1;
            }
        }
        assert_eq!(inside, 0);
    }

    #[test]
    fn surface_propagates_unless_decided() {
        use BinaryOp::*;
        assert_eq!(Union.combine(Surface, Inside), Inside);
        assert_eq!(Union.combine(Surface, Outside), Surface);
        assert_eq!(Intersection.combine(Surface, Outside), Outside);
        assert_eq!(Intersection.combine(Surface, Inside), Surface);
        assert_eq!(Difference.combine(Inside, Surface), Surface);
        assert_eq!(Difference.combine(Surface, Inside), Outside);
        assert_eq!(Difference.combine(Outside, Surface), Outside);
    }

    #[test]
    fn unresolved_leaf_is_an_error() {
        let ps = two_spheres(5.0);
        let e = CsgExpr::parse("(union A Z)").unwrap();
        assert!(matches!(
            e.evaluate(&ps, &Point::zeros(), 1e-6),
            Err(Error::UnresolvedLeaf(id)) if id == "Z"
        ));
    }

    #[test]
    fn size_metrics_examples() {
        let leaf = CsgExpr::leaf("A");
        assert_eq!(
            leaf.size_metrics(),
            SizeMetrics { inner_count: 0, leaf_count: 1, height: 0 }
        );
        let u = CsgExpr::union(CsgExpr::leaf("A"), CsgExpr::leaf("B"));
        assert_eq!(
            u.size_metrics(),
            SizeMetrics { inner_count: 1, leaf_count: 2, height: 1 }
        );
        let comb = CsgExpr::parse("(union (union (union A B) C) D)").unwrap();
        assert_eq!(
            comb.size_metrics(),
            SizeMetrics { inner_count: 3, leaf_count: 4, height: 3 }
        );
    }

    #[test]
    fn text_form() {
        assert_eq!(CsgExpr::leaf("A").to_string(), "A");
        assert_eq!(CsgExpr::diff(CsgExpr::leaf("A"), CsgExpr::leaf("B")).to_string(), "(diff A B)");
        let e = CsgExpr::parse("  (union A\n (diff B (compl C)))").unwrap();
        assert_eq!(e.to_string(), "(union A (diff B (compl C)))");
    }

    #[test]
    fn parse_errors_report_position() {
        let err = |s: &str| match CsgExpr::parse(s) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err("(xor A B)"), 1);
        assert_eq!(err("(union A B"), 10);
        assert_eq!(err("(union A B C)"), 11);
        assert_eq!(err(")"), 0);
        assert_eq!(err("A B"), 2);
        assert_eq!(err("(compl A B)"), 9);
        assert_eq!(err(""), 0);
        assert_eq!(err("(() A B)"), 1);
    }

    #[test]
    fn document_form() {
        let e = CsgExpr::parse("(diff (union A B) (compl C))").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"op\":\"diff\""));
        let back: CsgExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }

    proptest! {
        #[test]
        fn text_round_trip(e in arb_expr(&["A", "B", "C", "D1"], true)) {
            prop_assert_eq!(CsgExpr::parse(&e.to_string()).unwrap(), e);
        }

        #[test]
        fn binary_trees_have_one_more_leaf(e in arb_expr(&["A", "B"], false)) {
            let m = e.size_metrics();
            prop_assert_eq!(m.leaf_count, m.inner_count + 1);
        }

        #[test]
        fn set_identities_on_leaf_labels(
            x in -1.5f64..4.0, y in -1.5f64..1.5,
        ) {
            let ps = two_spheres(1.5);
            let p = Point::new(x, y, 0.0);
            let eps = 1e-6;
            let a = ps.get(0).classify(&p, eps);
            let b = ps.get(1).classify(&p, eps);
            prop_assume!(a != Surface && b != Surface);
            let eval = |s: &str| CsgExpr::parse(s).unwrap().evaluate(&ps, &p, eps).unwrap();
            let (ia, ib) = (a == Inside, b == Inside);
            let truth = |v: bool| if v { Inside } else { Outside };
            prop_assert_eq!(eval("(union A B)"), truth(ia || ib));
            prop_assert_eq!(eval("(inter A B)"), truth(ia && ib));
            prop_assert_eq!(eval("(diff A B)"), truth(ia && !ib));
        }

        #[test]
        fn difference_equals_intersection_with_complement(
            x in -1.5f64..3.0, y in -1.2f64..1.2,
        ) {
            let ps = two_spheres(1.5);
            let p = Point::new(x, y, 0.0);
            let d = CsgExpr::parse("(diff A B)").unwrap();
            let ic = CsgExpr::parse("(inter A (compl B))").unwrap();
            prop_assert_eq!(d.evaluate(&ps, &p, 1e-3).unwrap(), ic.evaluate(&ps, &p, 1e-3).unwrap());
        }
    }
}
