//! Synthetic scenes with analytic ground truth, and their on-disk datasets.

mod dataset;
mod spec;
mod synth;

pub use dataset::{Dataset, Trajectory, DATASET_VERSION};
pub use spec::{Motion, Mover, OrbitRig, SceneSpec};
pub use synth::synth_scene;
