//! Sound event detection and retrieval metrics.

mod events;
mod psds;
mod retrieval;

pub use events::{
    binarize_scores, match_events, read_events_tsv, write_events_tsv, ClassTally, LabeledEvent, MatchResult,
};
pub use psds::{psds, staircase_area, OperatingPoint, PsdsConfig, PsdsReport};
pub use retrieval::{recall_at_k, zero_shot_accuracy};
