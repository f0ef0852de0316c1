//! Datasets of named state and forcing blocks, normalization, chronological
//! splits, synthetic generators and the on-disk bundle format.

mod bundle;
mod burgers;
mod dataset;
mod linear;
mod normalize;

pub use bundle::{load_dataset, load_manifest, save_dataset, BlockEntry, DatasetManifest, DATASET_FORMAT_VERSION};
pub use burgers::{burgers_step, gen_burgers_forced, simulate_burgers, BoundarySignal, BoundarySpec, BurgersSpec};
pub use dataset::{snapshot_pair, snapshot_split, Dataset, Snapshots, Split, VariableBlock, VariableKind};
pub use linear::{gen_linear_forced, LinearSpec, LinearTruth};
pub use normalize::{denormalize, normalize, BlockStats, NormStats};
