use serde::{Deserialize, Serialize};

/// An input window and the window that immediately follows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPair<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
}

/// Cuts `seq` into `(seq[i..i+in_len], seq[i+in_len..i+in_len+out_len])`
/// pairs for `i = 0, stride, 2*stride, ...`. Sequences shorter than
/// `in_len + out_len` yield nothing.
pub fn window_dataset<T: Clone>(
    seq: &[T],
    in_len: usize,
    out_len: usize,
    stride: usize,
) -> Vec<WindowPair<T>> {
    assert!(stride >= 1, "stride must be at least 1");
    let span = in_len + out_len;
    if seq.len() < span {
        return Vec::new();
    }
    (0..=seq.len() - span)
        .step_by(stride)
        .map(|i| WindowPair {
            input: seq[i..i + in_len].to_vec(),
            target: seq[i + in_len..i + span].to_vec(),
        })
        .collect()
}
