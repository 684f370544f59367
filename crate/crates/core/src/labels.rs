//! Frame-wise binary presence labels over a fixed timeline.

use serde::{Deserialize, Serialize};

/// Presence of one phrase at each of `L` frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameLabels(Vec<u8>);

impl FrameLabels {
    pub fn zeros(frames: usize) -> Self {
        FrameLabels(vec![0; frames])
    }

    /// Builds labels from 0/1 values; any other value is rejected.
    pub fn from_bits(bits: Vec<u8>) -> Option<Self> {
        bits.iter().all(|&b| b <= 1).then_some(FrameLabels(bits))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        FrameLabels(bits.iter().map(|&b| b as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, frame: usize) -> bool {
        self.0[frame] == 1
    }

    pub fn set(&mut self, frame: usize) {
        self.0[frame] = 1;
    }

    pub fn as_bits(&self) -> &[u8] {
        &self.0
    }

    pub fn positive_count(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Marks every frame that overlaps `[onset_s, offset_s)` with positive length.
    pub fn mark_interval(&mut self, onset_s: f64, offset_s: f64, timeline_s: f64) {
        let frames = self.0.len();
        if frames == 0 || !(offset_s > onset_s) {
            return;
        }
        let edge = |l: usize| l as f64 * timeline_s / frames as f64;
        // candidate range from the frame width, then exact overlap test at the edges
        let width = timeline_s / frames as f64;
        let lo = ((onset_s / width).floor().max(0.0) as usize).saturating_sub(1);
        let hi = (((offset_s / width).ceil().max(0.0) as usize) + 1).min(frames);
        for l in lo..hi {
            let overlap = offset_s.min(edge(l + 1)) - onset_s.max(edge(l));
            if overlap > 0.0 {
                self.0[l] = 1;
            }
        }
    }
}

/// Labels for one phrase from all of its `[onset, offset)` intervals.
pub fn labels_for_intervals(intervals: &[(f64, f64)], frames: usize, timeline_s: f64) -> FrameLabels {
    let mut y = FrameLabels::zeros(frames);
    for &(on, off) in intervals {
        y.mark_interval(on, off, timeline_s);
    }
    y
}
