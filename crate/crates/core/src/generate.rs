//! Synthetic scenes with known ground truth, and surface point clouds sampled
//! from them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{BinaryOp, CsgExpr, ResolvedExpr};
use crate::geometry::{Aabb, Point, Primitive, PrimitiveSet};
use crate::scene::Scene;

/// Named layouts shipped with the crate.
pub const LAYOUTS: [&str; 5] = ["fig2", "disjoint6", "overlap3", "chain", "abc"];

/// Largest primitive count accepted by [`random_scene`].
pub const MAX_RANDOM_PRIMITIVES: usize = 26;

/// A scene with the expression it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub truth: CsgExpr,
}

fn leaf(id: &str) -> CsgExpr {
    CsgExpr::leaf(id)
}

fn disc(id: &str, x: f64, y: f64, r: f64) -> Result<Primitive> {
    Primitive::sphere(id, [x, y, 0.0], r)
}

fn planar_box(id: &str, x: [f64; 2], y: [f64; 2]) -> Result<Primitive> {
    Primitive::cuboid(id, [x[0], y[0], -1.0], [x[1], y[1], 1.0])
}

fn build(dimension: usize, min: [f64; 3], max: [f64; 3], prims: Vec<Primitive>, truth: CsgExpr) -> Result<GeneratedScene> {
    let scene = Scene::new(dimension, Aabb::new(min.into(), max.into()), PrimitiveSet::new(prims)?)?;
    truth.resolve(&scene.primitives)?;
    Ok(GeneratedScene { scene, truth })
}

/// Planar six-primitive scene: a box and a trimmed disc are wholly inside the
/// solid, a box is wholly outside, and three overlapping discs form the part
/// that needs a two-level expression.
pub fn fig2() -> Result<GeneratedScene> {
    let prims = vec![
        planar_box("A", [-0.4, 1.6], [0.6, 2.0])?,
        disc("B", 0.0, 0.0, 1.2)?,
        disc("C", 1.2, 0.0, 1.2)?,
        disc("D", 0.6, -1.0, 1.2)?,
        disc("E", 0.6, -2.6, 0.8)?,
        planar_box("F", [0.2, 1.0], [-4.0, -3.0])?,
    ];
    let truth = CsgExpr::diff(
        CsgExpr::union(
            CsgExpr::union(
                CsgExpr::union(leaf("A"), CsgExpr::diff(leaf("B"), leaf("C"))),
                CsgExpr::inter(leaf("C"), leaf("D")),
            ),
            leaf("E"),
        ),
        leaf("F"),
    );
    build(2, [-2.0, -4.5, -1.5], [3.0, 2.5, 1.5], prims, truth)
}

/// Six pairwise separated spheres.
pub fn disjoint6() -> Result<GeneratedScene> {
    let prims = (0..6)
        .map(|i| {
            let (col, row) = ((i % 3) as f64, (i / 3) as f64);
            let id = ((b'A' + i as u8) as char).to_string();
            Primitive::sphere(&id, [col * 2.5, row * 2.5, 0.0], 0.8)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = CsgExpr::fold_left(BinaryOp::Union, ["A", "B", "C", "D", "E", "F"].map(leaf))
        .expect("six leaves");
    build(3, [-1.5, -1.5, -1.5], [6.5, 4.0, 1.5], prims, truth)
}

/// Three spheres arranged so that every one of the seven non-trivial cells is
/// occupied.
pub fn overlap3() -> Result<GeneratedScene> {
    let prims = vec![
        Primitive::sphere("A", [0.0, 0.0, 0.0], 1.0)?,
        Primitive::sphere("B", [1.0, 0.0, 0.0], 1.0)?,
        Primitive::sphere("C", [0.5, 0.85, 0.0], 1.0)?,
    ];
    let truth = CsgExpr::union(CsgExpr::union(leaf("A"), leaf("B")), leaf("C"));
    build(3, [-1.5, -1.5, -1.5], [2.5, 2.35, 1.5], prims, truth)
}

/// Concentric discs, alternately added and carved away. Each decomposition
/// scan can only remove the innermost remaining disc.
pub fn chain(count: usize) -> Result<GeneratedScene> {
    if count == 0 {
        return Err(Error::InvalidScene("chain needs at least one primitive".into()));
    }
    let step = 2.0 / count as f64;
    let prims = (0..count)
        .map(|i| disc(&format!("D{i}"), 0.0, 0.0, 2.5 - step * i as f64))
        .collect::<Result<Vec<_>>>()?;
    let truth = (1..count).fold(leaf("D0"), |acc, i| {
        let next = leaf(&format!("D{i}"));
        if i % 2 == 1 {
            CsgExpr::diff(acc, next)
        } else {
            CsgExpr::union(acc, next)
        }
    });
    build(2, [-3.0, -3.0, -1.0], [3.0, 3.0, 1.0], prims, truth)
}

/// `(A ∪ B) − C` with `C` cutting into `A` only.
pub fn abc() -> Result<GeneratedScene> {
    let prims = vec![
        disc("A", 0.0, 0.0, 1.0)?,
        disc("B", 3.0, 0.0, 1.0)?,
        disc("C", 0.9, 0.5, 0.6)?,
    ];
    let truth = CsgExpr::diff(CsgExpr::union(leaf("A"), leaf("B")), leaf("C"));
    build(2, [-1.5, -1.5, -1.0], [4.5, 1.5, 1.0], prims, truth)
}

pub fn layout(name: &str) -> Result<GeneratedScene> {
    match name {
        "fig2" => fig2(),
        "disjoint6" => disjoint6(),
        "overlap3" => overlap3(),
        "chain" => chain(5),
        "abc" => abc(),
        _ => Err(Error::InvalidScene(format!(
            "unknown layout `{name}` (expected one of {})",
            LAYOUTS.join(", ")
        ))),
    }
}

/// `count` random discs and boxes (spheres and boxes in 3D) and a random
/// expression using every primitive exactly once.
pub fn random_scene(count: usize, dimension: usize, seed: u64) -> Result<GeneratedScene> {
    if count == 0 || count > MAX_RANDOM_PRIMITIVES {
        return Err(Error::InvalidScene(format!(
            "primitive count must lie in 1..={MAX_RANDOM_PRIMITIVES}, got {count}"
        )));
    }
    if dimension != 2 && dimension != 3 {
        return Err(Error::InvalidScene(format!("dimension must be 2 or 3, got {dimension}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = (0..count).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    let prims = ids
        .iter()
        .map(|id| {
            let mut c = [0.0; 3];
            for v in c.iter_mut().take(dimension) {
                *v = rng.random_range(-2.0..2.0);
            }
            if rng.random_bool(0.5) {
                Primitive::sphere(id, c, rng.random_range(0.7..1.6))
            } else {
                let mut h = [0.5; 3];
                for v in h.iter_mut().take(dimension) {
                    *v = rng.random_range(0.5..1.4);
                }
                Primitive::cuboid(id, [c[0] - h[0], c[1] - h[1], c[2] - h[2]], [c[0] + h[0], c[1] + h[1], c[2] + h[2]])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ids.shuffle(&mut rng);
    let truth = random_tree(&ids, &mut rng);
    build(dimension, [-4.0; 3], [4.0; 3], prims, truth)
}

fn random_tree(ids: &[String], rng: &mut ChaCha8Rng) -> CsgExpr {
    if ids.len() == 1 {
        return CsgExpr::leaf(ids[0].clone());
    }
    let split = rng.random_range(1..ids.len());
    let op = BinaryOp::ALL[rng.random_range(0..3)];
    let left = random_tree(&ids[..split], rng);
    let right = random_tree(&ids[split..], rng);
    CsgExpr::binary(op, left, right)
}

/// Points on the boundary of `truth`: for every pair of lattice neighbours on
/// opposite sides, the segment between them is bisected on the sign of the
/// expression's signed value until it is shorter than `epsilon / 8`, and its
/// midpoint is emitted.
pub fn surface_cloud(
    scene: &Scene,
    truth: &CsgExpr,
    resolution: usize,
    seed: u64,
    epsilon: f64,
) -> Result<Vec<Point>> {
    let plan = scene.plan(resolution, 0.25)?;
    let points = crate::geometry::sample_grid(&plan, seed)?;
    let expr = truth.resolve(&scene.primitives)?;
    let ps = &scene.primitives;
    let values: Vec<f64> = points.iter().map(|x| expr.signed_value(ps, x)).collect();
    let mut cloud = Vec::new();
    for (k, x) in points.iter().enumerate() {
        let cell = plan.cell_of(k);
        for axis in 0..plan.dimension {
            if cell[axis] + 1 >= plan.resolution {
                continue;
            }
            let mut next = cell;
            next[axis] += 1;
            let n = plan.linear_index(next);
            if (values[k] < 0.0) != (values[n] < 0.0) {
                cloud.push(bisect(&expr, ps, *x, points[n], epsilon / 8.0));
            }
        }
    }
    Ok(cloud)
}

fn bisect(expr: &ResolvedExpr, ps: &PrimitiveSet, a: Point, b: Point, length: f64) -> Point {
    let (mut lo, mut hi) = (a, b);
    let lo_inside = expr.signed_value(ps, &lo) < 0.0;
    while (hi - lo).norm() > length {
        let mid = (lo + hi) * 0.5;
        if (expr.signed_value(ps, &mid) < 0.0) == lo_inside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MembershipLabel;

    #[test]
    fn layouts_are_valid() {
        for name in LAYOUTS {
            let g = layout(name).unwrap();
            assert!(g.truth.resolve(&g.scene.primitives).is_ok(), "{name}");
        }
        assert!(layout("nope").is_err());
    }

    #[test]
    fn chain_alternates_operators() {
        let g = chain(4).unwrap();
        assert_eq!(g.truth.to_string(), "(diff (union (diff D0 D1) D2) D3)");
        assert!(chain(0).is_err());
    }

    #[test]
    fn random_scene_is_deterministic_and_uses_each_leaf_once() {
        let a = random_scene(5, 2, 11).unwrap();
        let b = random_scene(5, 2, 11).unwrap();
        assert_eq!(a, b);
        for id in a.scene.primitives.ids() {
            assert_eq!(a.truth.occurrences(id), 1);
        }
        assert_ne!(a, random_scene(5, 2, 12).unwrap());
        assert!(random_scene(0, 2, 1).is_err());
    }

    #[test]
    fn cloud_points_lie_on_the_surface() {
        let g = abc().unwrap();
        let eps = g.scene.default_epsilon();
        let cloud = surface_cloud(&g.scene, &g.truth, 48, 3, eps).unwrap();
        assert!(cloud.len() > 100);
        for x in &cloud {
            assert_eq!(g.truth.evaluate(&g.scene.primitives, x, eps).unwrap(), MembershipLabel::Surface);
        }
        assert_eq!(cloud, surface_cloud(&g.scene, &g.truth, 48, 3, eps).unwrap());
    }
}
