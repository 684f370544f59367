use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::objectives::cosine_matrix;

/// Percentage of rows whose diagonal entry ranks within the top `k` of the row.
///
/// The rank of the diagonal counts the entries strictly greater than it plus
/// equal entries at a lower column index.
pub fn recall_at_k(sim: ArrayView2<f64>, k: usize) -> Result<f64> {
    let (m, cols) = sim.dim();
    if m != cols {
        return Err(Error::DimensionMismatch(format!("similarity matrix is {m}×{cols}, expected square")));
    }
    if m == 0 {
        return Err(Error::EmptyInput("similarity matrix"));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidParam(format!("k = {k} must lie in 1..={m}")));
    }
    if sim.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    let hits = (0..m)
        .filter(|&i| {
            let row = sim.row(i);
            let own = row[i];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > own || (v == own && j < i))
                .count();
            ahead < k
        })
        .count();
    Ok(100.0 * hits as f64 / m as f64)
}

/// Percentage of clips whose most similar class embedding (by cosine) is the
/// labeled class. Ties go to the lowest class index.
pub fn zero_shot_accuracy(audio: ArrayView2<f64>, classes: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let m = audio.nrows();
    if m == 0 {
        return Err(Error::EmptyInput("audio embeddings"));
    }
    if labels.len() != m {
        return Err(Error::DimensionMismatch(format!("{} labels for {m} clips", labels.len())));
    }
    let c = classes.nrows();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::OutOfRange {
            index: bad,
            value: c as f64,
        });
    }
    let sim = cosine_matrix(audio, classes)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = sim.row(i);
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == y
        })
        .count();
    Ok(100.0 * correct as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn recall_identity_and_ties() {
        let eye = Array2::<f64>::eye(4);
        assert_eq!(recall_at_k(eye.view(), 1).unwrap(), 100.0);
        let flat = Array2::<f64>::from_elem((10, 10), 0.3);
        assert_eq!(recall_at_k(flat.view(), 1).unwrap(), 10.0);
        assert_eq!(recall_at_k(flat.view(), 5).unwrap(), 50.0);
        assert_eq!(recall_at_k(flat.view(), 10).unwrap(), 100.0);
        let reversed = Array2::from_shape_fn((4, 4), |(i, j)| (i + j == 3) as u8 as f64);
        assert_eq!(recall_at_k(reversed.view(), 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(reversed.view(), 4).unwrap(), 100.0);
    }

    #[test]
    fn recall_errors() {
        let eye = Array2::<f64>::eye(3);
        assert!(recall_at_k(eye.view(), 4).is_err());
        assert!(recall_at_k(eye.view(), 0).is_err());
        assert!(recall_at_k(Array2::<f64>::zeros((2, 3)).view(), 1).is_err());
    }

    #[test]
    fn recall_partial() {
        let s = array![[0.9, 0.1, 0.0], [0.8, 0.5, 0.1], [0.7, 0.6, 0.2]];
        assert!((recall_at_k(s.view(), 1).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!((recall_at_k(s.view(), 2).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_shot() {
        let audio = array![[1.0, 0.1], [0.2, 1.0], [1.0, 0.0]];
        let classes = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(zero_shot_accuracy(audio.view(), classes.view(), &[0, 1, 0]).unwrap(), 100.0);
        assert_eq!(zero_shot_accuracy(audio.view(), classes.view(), &[1, 0, 1]).unwrap(), 0.0);
        assert!((zero_shot_accuracy(audio.view(), classes.view(), &[0, 1, 1]).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert!(zero_shot_accuracy(audio.view(), classes.view(), &[0, 1, 2]).is_err());
    }
}
