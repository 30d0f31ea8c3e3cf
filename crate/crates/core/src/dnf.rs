//! Fundamental products and two-level (union of intersections) extraction.
//!
//! A fundamental product picks, for every primitive, either the primitive or
//! its complement. Signature bit `j` set means the `j`-th primitive of the
//! working subset appears positively. Products are sampled on the lattice:
//! the non-empty ones partition the clean points, and each is judged inside
//! or outside the target from the points it owns.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::error::{Error, MixedProduct, Result};
use crate::expr::{BinaryOp, CsgExpr, Solid};
use crate::geometry::{MembershipLabel, Point, PrimitiveSet};
use crate::graph::{build_graph_on, IntersectionGraph};
use crate::implicants::{minimize, Cube, Minimization};
use crate::sampling::SampledScene;
use crate::target::TargetSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductStatus {
    /// Non-empty, not yet compared with a target.
    Unclassified,
    Empty,
    InsideTarget,
    OutsideTarget,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalProduct {
    pub signature: u64,
    pub status: ProductStatus,
    pub witness: Option<Point>,
    /// Clean lattice points owned by the product.
    pub samples: usize,
    /// Owned points labelled Inside / Outside by the target.
    pub inside: usize,
    pub outside: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnfOptions {
    /// Fraction of a product's points that must agree before it is called
    /// inside or outside the target.
    pub tau: f64,
    /// Resolve mixed products by majority instead of failing.
    pub allow_mixed: bool,
    /// Let empty products act as don't-cares during minimization.
    pub use_dont_cares: bool,
}

impl Default for DnfOptions {
    fn default() -> Self {
        DnfOptions {
            tau: 1.0,
            allow_mixed: false,
            use_dont_cares: true,
        }
    }
}

/// Non-empty fundamental products over a subset of primitives, restricted to
/// an optional lattice region.
#[derive(Debug, Clone)]
pub struct ProductAnalysis {
    /// Primitive-set indices of the working subset; bit `j` ↔ `subset[j]`.
    pub subset: Vec<usize>,
    pub ids: Vec<String>,
    /// Non-empty products, ascending signature, all-zero signature excluded.
    pub products: Vec<FundamentalProduct>,
    /// Points outside every primitive of the subset.
    pub exterior: FundamentalProduct,
    /// Signatures that survived graph pruning and were sample-tested.
    pub candidates: usize,
    region: Option<FixedBitSet>,
}

impl ProductAnalysis {
    /// Measured number of non-empty products.
    pub fn nf(&self) -> usize {
        self.products.len()
    }

    pub fn vars(&self) -> usize {
        self.subset.len()
    }

    pub fn signature_string(&self, signature: u64) -> String {
        signature_string(signature, self.vars())
    }

    pub fn product(&self, signature: u64) -> Option<&FundamentalProduct> {
        self.products.iter().find(|p| p.signature == signature)
    }

    pub fn inside_signatures(&self) -> Vec<u64> {
        self.products
            .iter()
            .filter(|p| p.status == ProductStatus::InsideTarget)
            .map(|p| p.signature)
            .collect()
    }

    /// Signatures with no sample (pruned by the graph or sampled empty).
    pub fn empty_signatures(&self) -> Vec<u64> {
        let present: std::collections::HashSet<u64> =
            self.products.iter().map(|p| p.signature).collect();
        (1..1u64 << self.vars()).filter(|s| !present.contains(s)).collect()
    }

    fn in_region(&self, k: usize) -> bool {
        self.region.as_ref().is_none_or(|r| r.contains(k))
    }
}

pub fn signature_string(signature: u64, vars: usize) -> String {
    (0..vars)
        .map(|i| if signature >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_signature(text: &str) -> Option<u64> {
    text.chars().enumerate().try_fold(0u64, |acc, (i, c)| match c {
        '1' => Some(acc | 1 << i),
        '0' => Some(acc),
        _ => None,
    })
}

/// Projects a global inside-mask onto the subset's local bit positions.
fn local_signature(mask: u64, subset: &[usize]) -> u64 {
    subset
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &i)| acc | ((mask >> i & 1) << j))
}

/// All non-empty cliques of `g` as local bitmasks, ascending.
fn cliques(g: &IntersectionGraph) -> Vec<u64> {
    fn extend(g: &IntersectionGraph, clique: u64, next: usize, out: &mut Vec<u64>) {
        for v in next..g.len() {
            if (0..g.len()).all(|u| clique >> u & 1 == 0 || g.has_edge(u, v)) {
                let grown = clique | 1 << v;
                out.push(grown);
                extend(g, grown, v + 1, out);
            }
        }
    }
    let mut out = Vec::new();
    extend(g, 0, 0, &mut out);
    out.sort_unstable();
    out
}

/// Enumerates non-empty fundamental products over every primitive.
pub fn enumerate_products(
    ps: &PrimitiveSet,
    graph: &IntersectionGraph,
    sampled: &SampledScene,
) -> ProductAnalysis {
    let all: Vec<usize> = (0..ps.len()).collect();
    enumerate_products_on(ps, &all, graph, sampled, None)
}

/// Candidate signatures are the cliques of `graph` (a signature whose positive
/// literals include a non-adjacent pair is empty). Each candidate is then
/// kept only if some clean point in `region` carries it.
pub fn enumerate_products_on(
    ps: &PrimitiveSet,
    subset: &[usize],
    graph: &IntersectionGraph,
    sampled: &SampledScene,
    region: Option<&FixedBitSet>,
) -> ProductAnalysis {
    debug_assert_eq!(graph.primitive_indices, subset);
    let mut seen: HashMap<u64, (usize, usize)> = HashMap::new();
    for k in 0..sampled.len() {
        if region.is_some_and(|r| !r.contains(k)) {
            continue;
        }
        if let Some(mask) = sampled.signature(k) {
            let entry = seen.entry(local_signature(mask, subset)).or_insert((0, k));
            entry.0 += 1;
        }
    }
    let candidates = cliques(graph);
    let products = candidates
        .iter()
        .filter_map(|&sig| {
            seen.get(&sig).map(|&(samples, first)| FundamentalProduct {
                signature: sig,
                status: ProductStatus::Unclassified,
                witness: Some(*sampled.point(first)),
                samples,
                inside: 0,
                outside: 0,
            })
        })
        .collect();
    let exterior = match seen.get(&0) {
        Some(&(samples, first)) => FundamentalProduct {
            signature: 0,
            status: ProductStatus::Unclassified,
            witness: Some(*sampled.point(first)),
            samples,
            inside: 0,
            outside: 0,
        },
        None => FundamentalProduct {
            signature: 0,
            status: ProductStatus::Empty,
            witness: None,
            samples: 0,
            inside: 0,
            outside: 0,
        },
    };
    ProductAnalysis {
        subset: subset.to_vec(),
        ids: subset.iter().map(|&i| ps.get(i).id.clone()).collect(),
        products,
        exterior,
        candidates: candidates.len(),
        region: region.cloned(),
    }
}

fn judge(inside: usize, outside: usize, tau: f64) -> ProductStatus {
    let total = inside + outside;
    if total == 0 {
        // Every owned point sits on the target's surface band.
        ProductStatus::OutsideTarget
    } else if inside as f64 >= tau * total as f64 {
        ProductStatus::InsideTarget
    } else if outside as f64 >= tau * total as f64 {
        ProductStatus::OutsideTarget
    } else {
        ProductStatus::Mixed
    }
}

/// Labels every product inside, outside, or mixed with respect to `target`.
/// Mixed products are an error unless `options.allow_mixed`, in which case
/// the majority decides.
pub fn classify_products(
    analysis: &mut ProductAnalysis,
    sampled: &SampledScene,
    target: &TargetSamples,
    options: &DnfOptions,
) -> Result<()> {
    let mut counts: HashMap<u64, (usize, usize)> = HashMap::new();
    for k in 0..sampled.len() {
        if !analysis.in_region(k) {
            continue;
        }
        let Some(mask) = sampled.signature(k) else {
            continue;
        };
        let entry = counts
            .entry(local_signature(mask, &analysis.subset))
            .or_default();
        match target.label(k) {
            MembershipLabel::Inside => entry.0 += 1,
            MembershipLabel::Outside => entry.1 += 1,
            MembershipLabel::Surface => {}
        }
    }
    let mut mixed = Vec::new();
    let vars = analysis.vars();
    for product in analysis
        .products
        .iter_mut()
        .chain(std::iter::once(&mut analysis.exterior))
    {
        if product.status == ProductStatus::Empty {
            continue;
        }
        let (inside, outside) = counts.get(&product.signature).copied().unwrap_or_default();
        product.inside = inside;
        product.outside = outside;
        product.status = judge(inside, outside, options.tau);
        if product.status == ProductStatus::Mixed {
            mixed.push(MixedProduct {
                signature: signature_string(product.signature, vars),
                inside,
                outside,
            });
            if options.allow_mixed {
                product.status = if inside >= outside {
                    ProductStatus::InsideTarget
                } else {
                    ProductStatus::OutsideTarget
                };
            }
        }
    }
    if !mixed.is_empty() && !options.allow_mixed {
        return Err(Error::MixedProducts(mixed));
    }
    if analysis.exterior.status == ProductStatus::InsideTarget {
        return Err(Error::Unrepresentable(format!(
            "{} target points lie outside every primitive of {{{}}}",
            analysis.exterior.inside,
            analysis.ids.join(", ")
        )));
    }
    Ok(())
}

/// Intersection of the cube's positive literals, minus each negative literal
/// in primitive order. `None` when the cube has no positive literal.
pub fn clause(cube: &Cube, ids: &[String]) -> Option<CsgExpr> {
    let bound = |i: usize| cube.free >> i & 1 == 0;
    let positive = (0..ids.len())
        .filter(|&i| bound(i) && cube.value >> i & 1 == 1)
        .map(|i| CsgExpr::leaf(ids[i].clone()));
    let base = CsgExpr::fold_left(BinaryOp::Intersection, positive)?;
    Some(
        (0..ids.len())
            .filter(|&i| bound(i) && cube.value >> i & 1 == 0)
            .fold(base, |acc, i| CsgExpr::diff(acc, CsgExpr::leaf(ids[i].clone()))),
    )
}

fn union_of_clauses(cubes: &[Cube], ids: &[String]) -> Result<Solid> {
    let clauses = cubes
        .iter()
        .map(|c| {
            clause(c, ids).ok_or_else(|| {
                Error::Unrepresentable("a clause without positive literals needs a universe primitive".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(match CsgExpr::fold_left(BinaryOp::Union, clauses) {
        Some(e) => Solid::Expr(e),
        None => Solid::Empty,
    })
}

/// Two-level representation: left-deep union, in ascending signature order,
/// of one full clause per product inside the target.
pub fn build_dnf(analysis: &ProductAnalysis) -> Result<Solid> {
    let cubes: Vec<Cube> = analysis
        .inside_signatures()
        .into_iter()
        .map(Cube::minterm)
        .collect();
    union_of_clauses(&cubes, &analysis.ids)
}

/// Prime-implicant cover of the inside products. Empty products are
/// don't-cares when `use_dont_cares`; outside products and the all-zero
/// signature are off.
pub fn minimize_products(analysis: &ProductAnalysis, use_dont_cares: bool) -> Minimization {
    let on = analysis.inside_signatures();
    let dc = if use_dont_cares {
        analysis.empty_signatures()
    } else {
        Vec::new()
    };
    minimize(analysis.vars(), &on, &dc)
}

pub fn minimized_expression(analysis: &ProductAnalysis, minimization: &Minimization) -> Result<Solid> {
    union_of_clauses(&minimization.cover, &analysis.ids)
}

/// Outcome of the two-level pipeline on one subset of primitives.
#[derive(Debug, Clone)]
pub struct DnfExtraction {
    pub analysis: ProductAnalysis,
    pub graph: IntersectionGraph,
    pub full: Solid,
    pub minimization: Minimization,
    pub minimized: Solid,
}

/// Graph, products, classification, full DNF, and prime-implicant cover for
/// `subset` restricted to `region`.
pub fn extract_dnf(
    ps: &PrimitiveSet,
    subset: &[usize],
    sampled: &SampledScene,
    target: &TargetSamples,
    region: Option<&FixedBitSet>,
    options: &DnfOptions,
) -> Result<DnfExtraction> {
    let graph = build_graph_on(ps, subset, sampled, region, None);
    let mut analysis = enumerate_products_on(ps, subset, &graph, sampled, region);
    classify_products(&mut analysis, sampled, target, options)?;
    let full = build_dnf(&analysis)?;
    let minimization = minimize_products(&analysis, options.use_dont_cares);
    let minimized = minimized_expression(&analysis, &minimization)?;
    Ok(DnfExtraction {
        analysis,
        graph,
        full,
        minimization,
        minimized,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductDoc {
    pub signature: String,
    pub status: ProductStatus,
    pub witness: Option<[f64; 3]>,
    pub samples: usize,
    pub inside: usize,
    pub outside: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductsDoc {
    pub primitives: Vec<String>,
    pub candidates: usize,
    pub n_f: usize,
    pub products: Vec<ProductDoc>,
    pub primes: Vec<String>,
    pub cover: Vec<String>,
    pub exact_cover: bool,
}

impl ProductsDoc {
    pub fn new(analysis: &ProductAnalysis, minimization: Option<&Minimization>) -> Self {
        let vars = analysis.vars();
        ProductsDoc {
            primitives: analysis.ids.clone(),
            candidates: analysis.candidates,
            n_f: analysis.nf(),
            products: analysis
                .products
                .iter()
                .map(|p| ProductDoc {
                    signature: signature_string(p.signature, vars),
                    status: p.status,
                    witness: p.witness.map(|w| [w.x, w.y, w.z]),
                    samples: p.samples,
                    inside: p.inside,
                    outside: p.outside,
                })
                .collect(),
            primes: minimization
                .map(|m| m.primes.iter().map(|c| c.pattern(vars)).collect())
                .unwrap_or_default(),
            cover: minimization
                .map(|m| m.cover.iter().map(|c| c.pattern(vars)).collect())
                .unwrap_or_default(),
            exact_cover: minimization.is_none_or(|m| m.exact),
        }
    }
}
