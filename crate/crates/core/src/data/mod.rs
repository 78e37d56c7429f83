//! Channel schema, trajectories, manifests, speaker-disjoint splits and
//! the closed-form synthetic plant used as a stand-in corpus.

mod manifest;
mod oracle;
mod synthetic;
mod trajectory;

pub use manifest::{
    fixed_crops, in_split, load_manifest, split_by_speaker, split_speakers, write_dataset, write_manifest, Crop, Item,
    ManifestEntry, Split, DURATION_TOLERANCE_S,
};
pub use oracle::{oracle_synth, Oracle, OracleParams};
pub use synthetic::{frames_for_duration, gen_synthetic, gen_synthetic_with, random_trajectory, MAX_STEP_FRACTION};
pub use trajectory::{
    channel_range, ArticTrajectory, ChannelStats, CHANNEL_NAMES, PERIODICITY_CHANNEL, PITCH_CHANNEL, STD_FLOOR, TRAJ_HEADER, TRAJ_RATE,
    TV_CHANNELS,
};
