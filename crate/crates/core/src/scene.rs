//! Scene files: dimension, bounds, and an ordered primitive list, stored as JSON.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "bounds": { "min": [-2, -2, -1], "max": [2, 2, 1] },
//!   "primitives": [
//!     { "id": "A", "kind": "sphere", "center": [0, 0, 0], "radius": 1 },
//!     { "id": "B", "kind": "box", "min": [0, 0, -1], "max": [1, 1, 1] },
//!     { "id": "C", "kind": "cylinder", "base": [0, 0, 0], "axis": [0, 0, 1], "radius": 0.5, "height": 1 },
//!     { "id": "H", "kind": "halfspace", "point": [0, 0, 0], "normal": [1, 0, 0] }
//!   ]
//! }
//! ```
//!
//! Unknown shape kinds and unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Primitive, PrimitiveSet, SamplePlan, Shape};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveDoc {
    Sphere {
        id: String,
        center: [f64; 3],
        radius: f64,
    },
    Box {
        id: String,
        min: [f64; 3],
        max: [f64; 3],
    },
    Cylinder {
        id: String,
        base: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        height: f64,
    },
    Halfspace {
        id: String,
        point: [f64; 3],
        normal: [f64; 3],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub dimension: usize,
    pub bounds: BoundsDoc,
    pub primitives: Vec<PrimitiveDoc>,
}

impl From<&Primitive> for PrimitiveDoc {
    fn from(p: &Primitive) -> Self {
        let a = |v: &Point| [v.x, v.y, v.z];
        let id = p.id.clone();
        match &p.shape {
            Shape::Sphere { center, radius } => PrimitiveDoc::Sphere {
                id,
                center: a(center),
                radius: *radius,
            },
            Shape::Box { min, max } => PrimitiveDoc::Box {
                id,
                min: a(min),
                max: a(max),
            },
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => PrimitiveDoc::Cylinder {
                id,
                base: a(base),
                axis: a(axis),
                radius: *radius,
                height: *height,
            },
            Shape::Halfspace { point, normal } => PrimitiveDoc::Halfspace {
                id,
                point: a(point),
                normal: a(normal),
            },
        }
    }
}

impl TryFrom<&PrimitiveDoc> for Primitive {
    type Error = Error;

    fn try_from(doc: &PrimitiveDoc) -> Result<Self> {
        match doc {
            PrimitiveDoc::Sphere { id, center, radius } => Primitive::new(
                id.clone(),
                Shape::Sphere {
                    center: (*center).into(),
                    radius: *radius,
                },
            ),
            PrimitiveDoc::Box { id, min, max } => Primitive::new(
                id.clone(),
                Shape::Box {
                    min: (*min).into(),
                    max: (*max).into(),
                },
            ),
            PrimitiveDoc::Cylinder {
                id,
                base,
                axis,
                radius,
                height,
            } => Primitive::new(
                id.clone(),
                Shape::Cylinder {
                    base: (*base).into(),
                    axis: (*axis).into(),
                    radius: *radius,
                    height: *height,
                },
            ),
            PrimitiveDoc::Halfspace { id, point, normal } => Primitive::new(
                id.clone(),
                Shape::Halfspace {
                    point: (*point).into(),
                    normal: (*normal).into(),
                },
            ),
        }
    }
}

/// A validated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dimension: usize,
    pub bounds: Aabb,
    pub primitives: PrimitiveSet,
}

impl Scene {
    pub fn new(dimension: usize, bounds: Aabb, primitives: PrimitiveSet) -> Result<Self> {
        if dimension != 2 && dimension != 3 {
            return Err(Error::InvalidScene(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }
        if (0..3).any(|i| !(bounds.min[i] < bounds.max[i])) {
            return Err(Error::InvalidScene("bounds need min < max".into()));
        }
        let scene = Scene {
            dimension,
            bounds,
            primitives,
        };
        scene.plan(2, 0.0)?.covers(&scene.primitives, scene.default_epsilon())?;
        Ok(scene)
    }

    pub fn from_doc(doc: &SceneDoc) -> Result<Self> {
        let prims = doc
            .primitives
            .iter()
            .map(Primitive::try_from)
            .collect::<Result<Vec<_>>>()?;
        Scene::new(
            doc.dimension,
            Aabb::new(doc.bounds.min.into(), doc.bounds.max.into()),
            PrimitiveSet::new(prims)?,
        )
    }

    pub fn to_doc(&self) -> SceneDoc {
        let a = |v: &Point| [v.x, v.y, v.z];
        SceneDoc {
            dimension: self.dimension,
            bounds: BoundsDoc {
                min: a(&self.bounds.min),
                max: a(&self.bounds.max),
            },
            primitives: self.primitives.iter().map(PrimitiveDoc::from).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Scene::from_doc(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("scene serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scene::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn plan(&self, resolution: usize, jitter: f64) -> Result<SamplePlan> {
        SamplePlan::new(self.bounds, resolution, jitter, self.dimension)
    }

    pub fn default_epsilon(&self) -> f64 {
        1e-4 * self.bounds.diagonal(self.dimension)
    }
}
