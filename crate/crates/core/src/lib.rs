//! Search-space analysis and CSG expression extraction for solids built from
//! a fixed set of implicit primitives.
//!
//! Two extraction routes are provided: fundamental-product (two-level)
//! extraction with prime-implicant minimization in [`dnf`], and recursive
//! dominant-primitive decomposition with connected-component splitting in
//! [`decomposition`]. [`search_space`] counts and enumerates candidate trees.

pub mod cli;
pub mod cloud;
pub mod decomposition;
pub mod dnf;
pub mod error;
pub mod expr;
pub mod generate;
pub mod geometry;
pub mod graph;
pub mod implicants;
pub mod sampling;
pub mod scene;
pub mod search_space;
pub mod target;

pub use error::{Error, Result};
pub use expr::{BinaryOp, CsgExpr, OperatorSet, SizeMetrics, Solid};
pub use geometry::{Aabb, MembershipLabel, Point, Primitive, PrimitiveSet, SamplePlan, Shape};
pub use sampling::SampledScene;
pub use scene::Scene;
pub use target::{MembershipTable, TargetSamples, TargetSolid};
