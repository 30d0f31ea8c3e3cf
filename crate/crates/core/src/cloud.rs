//! Point clouds: ASCII XYZ and PLY input, XYZ output, and the inference of a
//! membership table for a scene from points on the target's surface.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{MembershipLabel, Point, PrimitiveSet};
use crate::sampling::SampledScene;
use crate::target::MembershipTable;

/// Reads `x y z` per line. Blank lines and `#` comments are skipped; extra
/// columns such as normals are ignored.
pub fn parse_xyz(text: &str) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        points.push(parse_coords(line.split_whitespace(), n + 1)?);
    }
    Ok(points)
}

fn parse_coords<'a>(mut fields: impl Iterator<Item = &'a str>, line: usize) -> Result<Point> {
    let mut c = [0.0f64; 3];
    for v in &mut c {
        let field = fields
            .next()
            .ok_or_else(|| Error::PointCloud(format!("line {line}: expected three coordinates")))?;
        *v = field
            .parse()
            .map_err(|_| Error::PointCloud(format!("line {line}: invalid number `{field}`")))?;
        if !v.is_finite() {
            return Err(Error::PointCloud(format!("line {line}: non-finite coordinate")));
        }
    }
    Ok(c.into())
}

/// Reads the vertex element of an ASCII PLY file. Only the `x`, `y` and `z`
/// properties are used.
pub fn parse_ply(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(Error::PointCloud("missing `ply` magic".into()));
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut properties = Vec::new();
    let mut elements_before = 0usize;
    for (n, line) in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", other, ..] => {
                return Err(Error::PointCloud(format!("unsupported PLY format `{other}`")))
            }
            ["element", "vertex", count] => {
                vertex_count = Some(count.parse::<usize>().map_err(|_| {
                    Error::PointCloud(format!("line {}: bad vertex count", n + 1))
                })?);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    elements_before += 1;
                }
                in_vertex = false;
            }
            ["property", .., name] if in_vertex => properties.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    if elements_before > 0 {
        return Err(Error::PointCloud("the vertex element must come first".into()));
    }
    let count = vertex_count.ok_or_else(|| Error::PointCloud("no vertex element".into()))?;
    let column = |axis: &str| {
        properties
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| Error::PointCloud(format!("vertex has no `{axis}` property")))
    };
    let cols = [column("x")?, column("y")?, column("z")?];
    let mut points = Vec::with_capacity(count);
    for (n, line) in lines {
        if points.len() == count {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(Error::PointCloud(format!("line {}: too few vertex fields", n + 1)));
        }
        points.push(parse_coords(cols.iter().map(|&c| fields[c]), n + 1)?);
    }
    if points.len() != count {
        return Err(Error::PointCloud(format!(
            "expected {count} vertices, found {}",
            points.len()
        )));
    }
    Ok(points)
}

/// Picks the parser from the extension: `.ply` or anything else as XYZ.
pub fn load(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => parse_ply(&text),
        _ => parse_xyz(&text),
    }
}

pub fn to_xyz(points: &[Point]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

/// Uniform-grid bucket lookup for "is any cloud point near here".
struct SpatialHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<Point>>,
}

impl SpatialHash {
    fn new(points: &[Point], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<Point>> = HashMap::new();
        for p in points {
            buckets.entry(Self::key(p, cell)).or_default().push(*p);
        }
        SpatialHash { cell, buckets }
    }

    fn key(p: &Point, cell: f64) -> [i64; 3] {
        [0, 1, 2].map(|i| (p[i] / cell).floor() as i64)
    }

    /// Any point within `self.cell` of `x`.
    fn near(&self, x: &Point) -> bool {
        let k = Self::key(x, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if b.iter().any(|p| (p - x).norm() <= self.cell) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Evidence that the target boundary separates two neighbouring products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Votes {
    boundary: usize,
    open: usize,
}

/// Outcome of inferring labels from a cloud.
#[derive(Debug, Clone)]
pub struct CloudInference {
    pub table: MembershipTable,
    /// Inside/outside decision for every observed signature.
    pub inside: BTreeMap<u64, bool>,
    /// Product adjacencies whose vote disagreed with an earlier decision.
    pub conflicts: usize,
    /// Signatures not connected to the exterior; labelled Outside.
    pub unresolved: usize,
}

/// Labels each lattice point of `sampled` by deciding, for every pair of
/// neighbouring products that differ in one primitive, whether the target
/// boundary runs along their shared face. The shared face of lattice
/// neighbours is found by bisecting on the primitive that changes; it counts
/// as boundary when a cloud point lies within `tolerance`. Decisions are
/// propagated from the all-outside product by a parity union-find, strongest
/// evidence first.
pub fn infer_table(
    ps: &PrimitiveSet,
    sampled: &SampledScene,
    cloud: &[Point],
    tolerance: f64,
) -> Result<CloudInference> {
    if cloud.is_empty() {
        return Err(Error::PointCloud("the cloud is empty".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::PointCloud(format!("tolerance must be positive, got {tolerance}")));
    }
    let plan = &sampled.plan;
    let hash = SpatialHash::new(cloud, tolerance);
    let mut votes: BTreeMap<(u64, u64), Votes> = BTreeMap::new();
    for k in 0..sampled.len() {
        let Some(s1) = sampled.signature(k) else {
            continue;
        };
        let cell = plan.cell_of(k);
        for axis in 0..plan.dimension {
            if cell[axis] + 1 >= plan.resolution {
                continue;
            }
            let mut next = cell;
            next[axis] += 1;
            let n = plan.linear_index(next);
            let Some(s2) = sampled.signature(n) else {
                continue;
            };
            let changed = s1 ^ s2;
            if changed.count_ones() != 1 {
                continue;
            }
            let p = ps.get(changed.trailing_zeros() as usize);
            let (mut lo, mut hi) = (*sampled.point(k), *sampled.point(n));
            let lo_inside = p.signed_value(&lo) < 0.0;
            for _ in 0..40 {
                let mid = (lo + hi) * 0.5;
                if (p.signed_value(&mid) < 0.0) == lo_inside {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let face = (lo + hi) * 0.5;
            let entry = votes.entry((s1.min(s2), s1.max(s2))).or_default();
            if hash.near(&face) {
                entry.boundary += 1;
            } else {
                entry.open += 1;
            }
        }
    }

    // Strongest margin first; ties by signature pair for determinism.
    let mut edges: Vec<((u64, u64), Votes)> = votes.into_iter().collect();
    edges.sort_by_key(|&(pair, v)| (std::cmp::Reverse(v.boundary.abs_diff(v.open)), pair));
    let mut uf = ParityUnionFind::default();
    let mut conflicts = 0;
    for ((a, b), v) in &edges {
        let parity = v.boundary > v.open;
        if !uf.union(*a, *b, parity) {
            conflicts += 1;
        }
    }

    let mut inside = BTreeMap::new();
    let mut unresolved = 0;
    let mut signatures: Vec<u64> = (0..sampled.len()).filter_map(|k| sampled.signature(k)).collect();
    signatures.sort_unstable();
    signatures.dedup();
    for s in signatures {
        let decided = uf.relative(s, 0);
        if decided.is_none() {
            unresolved += 1;
        }
        inside.insert(s, decided.unwrap_or(false));
    }
    let labels = (0..sampled.len())
        .map(|k| match sampled.signature(k) {
            None => MembershipLabel::Surface,
            Some(s) if inside[&s] => MembershipLabel::Inside,
            Some(_) => MembershipLabel::Outside,
        })
        .collect();
    Ok(CloudInference {
        table: MembershipTable::for_scene(sampled, labels)?,
        inside,
        conflicts,
        unresolved,
    })
}

/// Union-find whose edges carry "same side" or "opposite side".
#[derive(Debug, Default)]
struct ParityUnionFind {
    parent: HashMap<u64, u64>,
    /// Parity of each node relative to its parent.
    parity: HashMap<u64, bool>,
}

impl ParityUnionFind {
    fn find(&mut self, x: u64) -> (u64, bool) {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return (x, false);
        }
        let (root, up) = self.find(p);
        let own = self.parity[&x] ^ up;
        self.parent.insert(x, root);
        self.parity.insert(x, own);
        (root, own)
    }

    /// Records that `a` and `b` differ by `parity`. False when this
    /// contradicts what is already known.
    fn union(&mut self, a: u64, b: u64, parity: bool) -> bool {
        let (ra, pa) = self.find(a);
        let (rb, pb) = self.find(b);
        if ra == rb {
            return pa ^ pb == parity;
        }
        self.parent.insert(rb, ra);
        self.parity.insert(rb, pa ^ pb ^ parity);
        true
    }

    /// Parity between `a` and `b`, if they are connected.
    fn relative(&mut self, a: u64, b: u64) -> Option<bool> {
        let (ra, pa) = self.find(a);
        let (rb, pb) = self.find(b);
        (ra == rb).then_some(pa ^ pb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{abc, fig2, surface_cloud};
    use crate::target::TargetSolid;

    #[test]
    fn xyz_round_trip_and_extra_columns() {
        let pts = vec![Point::new(0.1, -2.0, 3.5), Point::new(1e-9, 0.0, -0.25)];
        assert_eq!(parse_xyz(&to_xyz(&pts)).unwrap(), pts);
        let with_normals = "# comment\n1 2 3 0 0 1\n\n4 5 6 1 0 0\n";
        assert_eq!(
            parse_xyz(with_normals).unwrap(),
            vec![Point::new(1.0, 2.0, 3.0), Point::new(4.0, 5.0, 6.0)]
        );
        assert!(parse_xyz("1 2\n").is_err());
        assert!(parse_xyz("1 2 nope\n").is_err());
    }

    #[test]
    fn ply_vertices_in_any_property_order() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n0 1 2 3\n1 4 5 6\n";
        assert_eq!(
            parse_ply(text).unwrap(),
            vec![Point::new(1.0, 2.0, 3.0), Point::new(4.0, 5.0, 6.0)]
        );
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").is_err());
    }

    #[test]
    fn parity_union_find_detects_contradictions() {
        let mut uf = ParityUnionFind::default();
        assert!(uf.union(0, 1, true));
        assert!(uf.union(1, 2, true));
        assert_eq!(uf.relative(0, 2), Some(false));
        assert!(!uf.union(0, 2, true));
        assert_eq!(uf.relative(0, 9), None);
    }

    fn check_inference(g: crate::generate::GeneratedScene) {
        let ps = &g.scene.primitives;
        let eps = g.scene.default_epsilon();
        let plan = g.scene.plan(64, 0.25).unwrap();
        let s = SampledScene::new(ps, &plan, 9, eps).unwrap();
        let cloud = surface_cloud(&g.scene, &g.truth, 64, 21, eps).unwrap();
        let inferred = infer_table(ps, &s, &cloud, 1.5 * plan.max_cell_edge()).unwrap();
        let truth = TargetSolid::Oracle(g.truth.clone()).sample(ps, &s).unwrap();
        for k in 0..s.len() {
            if s.is_clean(k) {
                assert_eq!(inferred.table.labels[k], truth.label(k), "point {k}");
            }
        }
        assert_eq!(inferred.unresolved, 0);
    }

    #[test]
    fn inferred_labels_match_the_generating_expression() {
        check_inference(abc().unwrap());
        check_inference(fig2().unwrap());
    }
}
