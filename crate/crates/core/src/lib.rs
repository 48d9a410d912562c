//! Pre-grasp generation for three-finger grippers from raw point clouds.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`decomposition`] fits oriented boxes and recursively splits the cloud into a
//!    binary tree of box primitives.
//! 2. [`classifier`] runs PCA on every part and assigns a shape category and grasp type.
//! 3. [`facemask`] marks box faces occluded by neighbouring parts and derives the usable
//!    sub-faces for each grasp type.
//! 4. [`sampler`] walks the tree, gates parts by gripper size, and samples approach poses
//!    on an enclosing sphere, cylinder or circle.
//! 5. [`graspeval`] casts finger rays against the cloud and ranks the pool by the
//!    epsilon wrench-space quality.
//!
//! [`pipeline`] strings the stages together and [`document`] holds the JSON run record.

pub mod classifier;
pub mod cloud;
pub mod decomposition;
pub mod document;
mod error;
pub mod facemask;
pub mod geometry;
pub mod graspeval;
pub mod pipeline;
pub mod sampler;
pub mod scene;

pub use nalgebra::{Point3, Rotation3, Vector3};

pub use classifier::{ClassifierThresholds, GraspType, PcaResult, ShapeCategory};
pub use cloud::{CloudFormat, PointCloud, Shape};
pub use decomposition::{DecompNode, DecompParams, DecompTree, SplitAxis, SplitPlane};
pub use document::RunDocument;
pub use error::{Error, Result};
pub use facemask::{FaceId, FaceMask, SubFace};
pub use geometry::OrientedBox;
pub use graspeval::{ContactPoint, GraspCandidate, GraspEvalParams, Wrench};
pub use pipeline::{RunConfig, Stage};
pub use sampler::{GripperConfig, PreGrasp, Preshape, SamplingParams};
