//! Implicit primitives, point membership, and the sampling lattice.
//!
//! Every emptiness, dominance and equivalence judgment in the crate is made by
//! classifying lattice points against primitives. A point whose signed value
//! lies within `epsilon` of zero is labelled [`MembershipLabel::Surface`] and
//! is left out of those judgments.

use std::collections::HashSet;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MembershipLabel {
    Inside,
    Outside,
    Surface,
}

impl MembershipLabel {
    pub fn from_value(value: f64, epsilon: f64) -> Self {
        if value < -epsilon {
            MembershipLabel::Inside
        } else if value > epsilon {
            MembershipLabel::Outside
        } else {
            MembershipLabel::Surface
        }
    }

    pub fn complement(self) -> Self {
        match self {
            MembershipLabel::Inside => MembershipLabel::Outside,
            MembershipLabel::Outside => MembershipLabel::Inside,
            MembershipLabel::Surface => MembershipLabel::Surface,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            MembershipLabel::Inside => 'I',
            MembershipLabel::Outside => 'O',
            MembershipLabel::Surface => 'S',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(MembershipLabel::Inside),
            'O' => Some(MembershipLabel::Outside),
            'S' => Some(MembershipLabel::Surface),
            _ => None,
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        let d = Vector3::repeat(by);
        Aabb::new(self.min - d, self.max + d)
    }

    /// Overlap test restricted to the first `dims` axes.
    pub fn overlaps(&self, other: &Aabb, dims: usize) -> bool {
        (0..dims).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// True when `other` lies strictly inside `self` on the first `dims` axes.
    pub fn strictly_contains(&self, other: &Aabb, dims: usize) -> bool {
        (0..dims).all(|i| self.min[i] < other.min[i] && other.max[i] < self.max[i])
    }

    pub fn diagonal(&self, dims: usize) -> f64 {
        (0..dims)
            .map(|i| (self.max[i] - self.min[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere {
        center: Point,
        radius: f64,
    },
    Box {
        min: Point,
        max: Point,
    },
    Cylinder {
        base: Point,
        axis: Point,
        radius: f64,
        height: f64,
    },
    Halfspace {
        point: Point,
        normal: Point,
    },
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Halfspace { .. } => "halfspace",
        }
    }
}

/// A CSG leaf: an implicit solid with a short unique name.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub id: String,
    pub shape: Shape,
}

impl Primitive {
    pub fn new(id: impl Into<String>, shape: Shape) -> Result<Self> {
        let p = Primitive {
            id: id.into(),
            shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sphere(id: &str, center: [f64; 3], radius: f64) -> Result<Self> {
        Primitive::new(
            id,
            Shape::Sphere {
                center: center.into(),
                radius,
            },
        )
    }

    pub fn cuboid(id: &str, min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        Primitive::new(
            id,
            Shape::Box {
                min: min.into(),
                max: max.into(),
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidPrimitive {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() || self.id.chars().any(|c| c.is_whitespace() || c == '(' || c == ')')
        {
            return fail("id must be non-empty and contain no whitespace or parentheses");
        }
        let finite = |v: &Point| v.iter().all(|c| c.is_finite());
        match &self.shape {
            Shape::Sphere { center, radius } => {
                if !finite(center) || !radius.is_finite() || *radius <= 0.0 {
                    return fail("sphere needs a finite center and radius > 0");
                }
            }
            Shape::Box { min, max } => {
                if !finite(min) || !finite(max) || (0..3).any(|i| min[i] >= max[i]) {
                    return fail("box needs min < max componentwise");
                }
            }
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                if !finite(base) || !finite(axis) {
                    return fail("cylinder parameters must be finite");
                }
                if !radius.is_finite() || *radius <= 0.0 || !height.is_finite() || *height <= 0.0 {
                    return fail("cylinder needs radius > 0 and height > 0");
                }
                if (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return fail("cylinder axis must be unit length");
                }
            }
            Shape::Halfspace { point, normal } => {
                if !finite(point) || !finite(normal) {
                    return fail("halfspace parameters must be finite");
                }
                if (normal.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return fail("halfspace normal must be unit length");
                }
            }
        }
        Ok(())
    }

    /// Signed distance: negative inside, positive outside, zero on the boundary.
    pub fn signed_value(&self, x: &Point) -> f64 {
        match &self.shape {
            Shape::Sphere { center, radius } => (x - center).norm() - radius,
            Shape::Box { min, max } => {
                let center = (min + max) * 0.5;
                let half = (max - min) * 0.5;
                let d = (x - center).abs() - half;
                let outside = d.map(|c| c.max(0.0)).norm();
                let inside = d.x.max(d.y).max(d.z).min(0.0);
                outside + inside
            }
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let rel = x - base;
                let along = rel.dot(axis);
                let radial = (rel - axis * along).norm();
                let d_radial = radial - radius;
                let d_axial = (along - height * 0.5).abs() - height * 0.5;
                let inside = d_radial.max(d_axial).min(0.0);
                let outside = d_radial.max(0.0).hypot(d_axial.max(0.0));
                inside + outside
            }
            Shape::Halfspace { point, normal } => (x - point).dot(normal),
        }
    }

    pub fn classify(&self, x: &Point, epsilon: f64) -> MembershipLabel {
        MembershipLabel::from_value(self.signed_value(x), epsilon)
    }

    /// `None` for unbounded shapes.
    pub fn bounding_box(&self) -> Option<Aabb> {
        match &self.shape {
            Shape::Sphere { center, radius } => {
                let r = Vector3::repeat(*radius);
                Some(Aabb::new(center - r, center + r))
            }
            Shape::Box { min, max } => Some(Aabb::new(*min, *max)),
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let top = base + axis * *height;
                let extent = axis.map(|a| radius * (1.0 - a * a).max(0.0).sqrt());
                Some(Aabb::new(
                    base.inf(&top) - extent,
                    base.sup(&top) + extent,
                ))
            }
            Shape::Halfspace { .. } => None,
        }
    }
}

/// Ordered primitive list. The order fixes bit positions of product signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSet {
    primitives: Vec<Primitive>,
}

impl PrimitiveSet {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::InvalidScene("primitive set is empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &primitives {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::InvalidScene(format!("duplicate primitive id `{}`", p.id)));
            }
        }
        Ok(PrimitiveSet { primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn get(&self, index: usize) -> &Primitive {
        &self.primitives[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.primitives.iter().map(|p| p.id.as_str()).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Primitive> {
        self.primitives.iter()
    }
}

/// A jittered regular lattice over the scene bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePlan {
    pub bounds: Aabb,
    pub resolution: usize,
    /// Fraction of the cell size, in `[0, 0.5]`.
    pub jitter: f64,
    /// 2 for planar scenes (fixed z at the bounds midplane), 3 otherwise.
    pub dimension: usize,
}

impl SamplePlan {
    pub fn new(bounds: Aabb, resolution: usize, jitter: f64, dimension: usize) -> Result<Self> {
        let plan = SamplePlan {
            bounds,
            resolution,
            jitter,
            dimension,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidPlan(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::InvalidPlan(format!(
                "jitter must lie in [0, 0.5], got {}",
                self.jitter
            )));
        }
        if self.dimension != 2 && self.dimension != 3 {
            return Err(Error::InvalidPlan(format!(
                "dimension must be 2 or 3, got {}",
                self.dimension
            )));
        }
        if (0..3).any(|i| !(self.bounds.min[i] < self.bounds.max[i])) {
            return Err(Error::InvalidPlan("bounds need min < max".into()));
        }
        Ok(())
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn point_count(&self) -> usize {
        self.resolution.pow(self.dimension as u32)
    }

    pub fn cell_size(&self) -> Point {
        (self.bounds.max - self.bounds.min) / self.resolution as f64
    }

    /// Largest cell edge over the sampled axes.
    pub fn max_cell_edge(&self) -> f64 {
        let c = self.cell_size();
        (0..self.dimension).map(|i| c[i]).fold(0.0, f64::max)
    }

    /// The default surface band: 1e-4 of the scene diagonal.
    pub fn default_epsilon(&self) -> f64 {
        1e-4 * self.bounds.diagonal(self.dimension)
    }

    /// Checks that the bounds strictly contain every bounded primitive,
    /// inflated by `epsilon`. Halfspaces are unbounded and exempt.
    pub fn covers(&self, ps: &PrimitiveSet, epsilon: f64) -> Result<()> {
        for p in ps.iter() {
            if let Some(bb) = p.bounding_box() {
                if !self
                    .bounds
                    .strictly_contains(&bb.inflate(epsilon), self.dimension)
                {
                    return Err(Error::InvalidPlan(format!(
                        "bounds do not strictly contain primitive `{}`",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Linear index of lattice cell `(i, j, k)`; x varies fastest.
    pub fn linear_index(&self, cell: [usize; 3]) -> usize {
        let r = self.resolution;
        cell[0] + r * (cell[1] + r * cell[2])
    }

    pub fn cell_of(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }
}

/// Emits `resolution^dimension` points, one per lattice cell, each offset from
/// its cell center by at most `jitter` cell sizes per axis. Deterministic for
/// a fixed `(plan, seed)`.
pub fn sample_grid(plan: &SamplePlan, seed: u64) -> Result<Vec<Point>> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = plan.cell_size();
    let r = plan.resolution;
    let layers = if plan.dimension == 3 { r } else { 1 };
    let mid_z = 0.5 * (plan.bounds.min.z + plan.bounds.max.z);
    let mut points = Vec::with_capacity(plan.point_count());
    for k in 0..layers {
        for j in 0..r {
            for i in 0..r {
                let mut p = Point::zeros();
                for (axis, idx) in [i, j, k].into_iter().enumerate().take(plan.dimension) {
                    let offset = (rng.random::<f64>() * 2.0 - 1.0) * plan.jitter;
                    p[axis] = plan.bounds.min[axis] + (idx as f64 + 0.5 + offset) * cell[axis];
                }
                if plan.dimension == 2 {
                    p.z = mid_z;
                }
                points.push(p);
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert_eq, proptest};

    fn unit_sphere() -> Primitive {
        Primitive::sphere("A", [0.0, 0.0, 0.0], 1.0).unwrap()
    }

    fn unit_cube_plan(resolution: usize, jitter: f64, dimension: usize) -> SamplePlan {
        SamplePlan::new(
            Aabb::new(Point::zeros(), Point::repeat(1.0)),
            resolution,
            jitter,
            dimension,
        )
        .unwrap()
    }

    #[test]
    fn sphere_signed_values() {
        let s = unit_sphere();
        assert_eq!(s.signed_value(&Point::zeros()), -1.0);
        assert_eq!(s.signed_value(&Point::new(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn box_distance_matches_nearest_surface_search() {
        let b = Primitive::cuboid("B", [0.0; 3], [2.0; 3]).unwrap();
        let x = Point::new(3.0, 1.0, 1.0);
        assert!((b.signed_value(&x) - 1.0).abs() < 1e-12);

        // Nearest point on the box surface by dense sampling of the six faces.
        let n = 60;
        let mut best = f64::INFINITY;
        for face in 0..6 {
            let (axis, value) = (face / 2, if face % 2 == 0 { 0.0 } else { 2.0 });
            for u in 0..=n {
                for v in 0..=n {
                    let mut q = [0.0; 3];
                    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
                    q[axis] = value;
                    q[others[0]] = 2.0 * u as f64 / n as f64;
                    q[others[1]] = 2.0 * v as f64 / n as f64;
                    best = best.min((Point::from(q) - x).norm());
                }
            }
        }
        assert!((best - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cylinder_and_halfspace_values() {
        let c = Primitive::new(
            "C",
            Shape::Cylinder {
                base: Point::zeros(),
                axis: Point::z(),
                radius: 1.0,
                height: 2.0,
            },
        )
        .unwrap();
        assert!((c.signed_value(&Point::new(0.0, 0.0, 1.0)) + 1.0).abs() < 1e-12);
        assert!((c.signed_value(&Point::new(3.0, 0.0, 1.0)) - 2.0).abs() < 1e-12);
        assert!((c.signed_value(&Point::new(0.0, 0.0, 5.0)) - 3.0).abs() < 1e-12);
        assert!((c.signed_value(&Point::new(4.0, 0.0, 6.0)) - 5.0).abs() < 1e-12);

        let h = Primitive::new(
            "H",
            Shape::Halfspace {
                point: Point::zeros(),
                normal: Point::x(),
            },
        )
        .unwrap();
        assert_eq!(h.signed_value(&Point::new(-2.0, 5.0, 1.0)), -2.0);
        assert!(h.bounding_box().is_none());
    }

    #[test]
    fn classify_three_bands() {
        let s = unit_sphere();
        assert_eq!(s.classify(&Point::zeros(), 1e-6), MembershipLabel::Inside);
        assert_eq!(
            s.classify(&Point::new(1.0, 0.0, 0.0), 1e-6),
            MembershipLabel::Surface
        );
        assert_eq!(
            s.classify(&Point::new(2.0, 0.0, 0.0), 1e-6),
            MembershipLabel::Outside
        );
    }

    #[test]
    fn invalid_primitives_rejected() {
        assert!(Primitive::sphere("A", [0.0; 3], 0.0).is_err());
        assert!(Primitive::cuboid("A", [0.0; 3], [1.0, 0.0, 1.0]).is_err());
        assert!(Primitive::new(
            "H",
            Shape::Halfspace {
                point: Point::zeros(),
                normal: Point::new(1.0, 1.0, 0.0),
            }
        )
        .is_err());
        assert!(Primitive::sphere("has space", [0.0; 3], 1.0).is_err());
        let a = unit_sphere();
        assert!(PrimitiveSet::new(vec![a.clone(), a]).is_err());
        assert!(PrimitiveSet::new(vec![]).is_err());
    }

    #[test]
    fn zero_jitter_is_regular_grid() {
        let pts = sample_grid(&unit_cube_plan(2, 0.0, 3), 0).unwrap();
        assert_eq!(pts.len(), 8);
        let mut expected = Vec::new();
        for z in [0.25, 0.75] {
            for y in [0.25, 0.75] {
                for x in [0.25, 0.75] {
                    expected.push(Point::new(x, y, z));
                }
            }
        }
        assert_eq!(pts, expected);
    }

    #[test]
    fn grid_is_deterministic() {
        let plan = unit_cube_plan(7, 0.4, 3);
        let a = sample_grid(&plan, 42).unwrap();
        let b = sample_grid(&plan, 42).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p
            .iter()
            .zip(q.iter())
            .all(|(u, v)| u.to_bits() == v.to_bits())));
        assert_ne!(a, sample_grid(&plan, 43).unwrap());
    }

    #[test]
    fn planar_jittered_grid_stays_in_bounds() {
        let plan = unit_cube_plan(10, 0.3, 2);
        let pts = sample_grid(&plan, 9).unwrap();
        assert_eq!(pts.len(), 100);
        for p in &pts {
            assert!((0..2).all(|i| p[i] >= 0.0 && p[i] <= 1.0));
            assert_eq!(p.z, 0.5);
        }
    }

    #[test]
    fn plan_rejects_low_resolution() {
        let plan = SamplePlan {
            bounds: Aabb::new(Point::zeros(), Point::repeat(1.0)),
            resolution: 1,
            jitter: 0.0,
            dimension: 3,
        };
        assert!(sample_grid(&plan, 0).is_err());
        assert!(SamplePlan { jitter: 0.7, resolution: 4, ..plan }.validate().is_err());
    }

    #[test]
    fn covers_checks_inflated_boxes() {
        let plan = unit_cube_plan(4, 0.0, 3);
        let inside = PrimitiveSet::new(vec![Primitive::sphere("A", [0.5; 3], 0.4).unwrap()]).unwrap();
        assert!(plan.covers(&inside, 1e-3).is_ok());
        assert!(plan.covers(&inside, 0.2).is_err());
    }

    fn inside_by_construction(shape: &Shape, x: &Point) -> bool {
        match shape {
            Shape::Sphere { center, radius } => (x - center).norm_squared() < radius * radius,
            Shape::Box { min, max } => (0..3).all(|i| min[i] < x[i] && x[i] < max[i]),
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let rel = x - base;
                let t = rel.dot(axis);
                let radial = rel - axis * t;
                t > 0.0 && t < *height && radial.norm_squared() < radius * radius
            }
            Shape::Halfspace { point, normal } => (x - point).dot(normal) < 0.0,
        }
    }

    #[test]
    fn sign_agrees_with_direct_containment() {
        let shapes = [
            Shape::Sphere {
                center: Point::new(0.2, -0.1, 0.3),
                radius: 0.9,
            },
            Shape::Box {
                min: Point::new(-0.5, -1.0, -0.2),
                max: Point::new(1.0, 0.4, 0.8),
            },
            Shape::Cylinder {
                base: Point::new(0.1, -0.8, 0.0),
                axis: Point::new(1.0, 2.0, 2.0) / 3.0,
                radius: 0.6,
                height: 1.5,
            },
            Shape::Halfspace {
                point: Point::new(0.1, 0.2, 0.3),
                normal: Point::new(2.0, -1.0, 2.0) / 3.0,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in &shapes {
            let p = Primitive::new("P", shape.clone()).unwrap();
            for _ in 0..10_000 {
                let x = Point::from_fn(|_, _| rng.random_range(-2.0..2.0));
                let v = p.signed_value(&x);
                if v.abs() <= 1e-9 {
                    continue;
                }
                assert_eq!(v < 0.0, inside_by_construction(shape, &x), "{shape:?} at {x:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn labels_partition_and_band_grows_with_epsilon(
            x in -3.0f64..3.0, y in -3.0f64..3.0, e1 in 1e-6f64..0.5, e2 in 1e-6f64..0.5,
        ) {
            let s = unit_sphere();
            let pt = Point::new(x, y, 0.0);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let small = s.classify(&pt, lo);
            let large = s.classify(&pt, hi);
            // Widening the band can only turn a definite label into Surface.
            if small == MembershipLabel::Surface {
                prop_assert_eq!(large, MembershipLabel::Surface);
            }
            if large != MembershipLabel::Surface {
                prop_assert_eq!(small, large);
            }
        }
    }
}
