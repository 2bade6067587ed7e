//! Scenes, antipodal contacts, gripper collisions and ground-truth labels.

mod antipodal;
pub mod collision;
mod labels;
mod mesh;
pub mod placement;
pub mod scene;
mod shape;

pub use antipodal::{antipodal_quality, find_opposing_contact, surface_sample, surface_samples, SurfaceSample};
pub use collision::{collision_check, gripper_boxes, CollisionParams, GripperBoxes, OrientedBox};
pub use labels::{
    generate_labels, label_from_sample, read_labels, write_labels, GraspLabel, GraspLabelSet, LabelParams,
    LabelStats, Rejection,
};
pub use mesh::{closest_point_on_triangle, TriMesh};
pub use placement::{make_scene, preset_count, PlacementParams, PlacementReport, Preset, ShapeKind, ShapePool};
pub use scene::{read_scene, write_scene, Bin, Scene, SceneHit, SceneObject};
pub use shape::{box_sdf, Crossing, Shape};
