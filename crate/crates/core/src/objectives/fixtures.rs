//! Small named batches with hand-derivable loss values.

use ndarray::{array, Array2, Array3};

use super::EmbeddingBatch;

pub const FIXTURE_NAMES: [&str; 6] = ["b1_s1", "b1_s0", "b2_orthonormal", "b2_uniform", "frame_l2", "frame_all_pos"];

/// `b1_s1`: one pair with cosine 1. `b1_s0`: one orthogonal pair.
/// `b2_orthonormal`: two pairs, identity similarity. `b2_uniform`: every
/// similarity equal. `frame_l2`: one phrase over two frames, both cosine 1,
/// labels (1, 0). `frame_all_pos`: the same with labels (1, 1).
pub fn fixture(name: &str) -> Option<EmbeddingBatch> {
    let e1 = || array![[1.0, 0.0]];
    let frame = |labels: [u8; 2]| {
        let frames = Array3::from_shape_vec((1, 2, 2), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let phrases = Array3::from_shape_vec((1, 1, 2), vec![1.0, 0.0]).unwrap();
        let labels = Array3::from_shape_vec((1, 1, 2), labels.to_vec()).unwrap();
        EmbeddingBatch::new(e1(), e1(), frames, phrases, labels)
    };
    let batch = match name {
        "b1_s1" => EmbeddingBatch::clip_only(e1(), e1()),
        "b1_s0" => EmbeddingBatch::clip_only(e1(), array![[0.0, 1.0]]),
        "b2_orthonormal" => EmbeddingBatch::clip_only(Array2::eye(2), Array2::eye(2)),
        "b2_uniform" => EmbeddingBatch::clip_only(Array2::ones((2, 2)), Array2::ones((2, 2))),
        "frame_l2" => frame([1, 0]),
        "frame_all_pos" => frame([1, 1]),
        _ => return None,
    };
    Some(batch.expect("fixture shapes are consistent"))
}
