//! Synthetic one-hot input sequences.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence {
    /// T × D one-hot rows.
    pub frames: Matrix,
    /// Symbol name per frame.
    pub frame_symbol: Vec<String>,
    /// Hot index per frame.
    pub hot: Vec<usize>,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Recover the run-length block spec from the frame symbols.
    pub fn blocks(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for sym in &self.frame_symbol {
            match out.last_mut() {
                Some((s, n)) if s == sym => *n += 1,
                _ => out.push((sym.clone(), 1)),
            }
        }
        out
    }

    /// CSV with header `t,symbol,x_0,...,x_{D-1}`; frames are 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,symbol");
        for d in 0..self.dim() {
            out.push_str(&format!(",x_{d}"));
        }
        out.push('\n');
        for (t, row) in self.frames.iter_rows().enumerate() {
            out.push_str(&format!("{},{}", t + 1, self.frame_symbol[t]));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Concatenate one-hot blocks, `(symbol, repeat)` each.
pub fn block_input(
    blocks: &[(String, usize)],
    dim: usize,
    hot_index: &BTreeMap<String, usize>,
) -> Result<InputSequence> {
    let total: usize = blocks.iter().map(|(_, r)| r).sum();
    let mut frames = Matrix::zeros(total, dim);
    let mut frame_symbol = Vec::with_capacity(total);
    let mut hot = Vec::with_capacity(total);
    for (symbol, repeat) in blocks {
        if *repeat == 0 {
            return Err(Error::InvalidInput(format!("block `{symbol}` has zero length")));
        }
        let idx = *hot_index
            .get(symbol)
            .ok_or_else(|| Error::InvalidInput(format!("no hot index for symbol `{symbol}`")))?;
        if idx >= dim {
            return Err(Error::InvalidInput(format!(
                "hot index {idx} of `{symbol}` out of range for dim {dim}"
            )));
        }
        for _ in 0..*repeat {
            frames[(hot.len(), idx)] = 1.0;
            hot.push(idx);
            frame_symbol.push(symbol.clone());
        }
    }
    Ok(InputSequence {
        frames,
        frame_symbol,
        hot,
    })
}

fn hot_map(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|&(s, i)| (s.to_string(), i)).collect()
}

/// `B^n a^2n B^n` with `x_a = (1,0)` and `x_B = (0,1)`.
pub fn single_label_input(n: usize) -> Result<InputSequence> {
    if n == 0 {
        return Err(Error::InvalidInput("block size must be at least 1".into()));
    }
    let blocks = vec![("B".to_string(), n), ("a".to_string(), 2 * n), ("B".to_string(), n)];
    block_input(&blocks, 2, &hot_map(&[("a", 0), ("B", 1)]))
}

const PING_SYMBOLS: [&str; 5] = ["B", "p", "ih", "ng", "B"];
const PING_WEIGHTS: [f64; 5] = [0.2, 0.1, 0.3, 0.2, 0.2];

/// Segment lengths of the ping input scaled to `frames` frames.
///
/// The first four segments get `max(1, round(T·w))`; the last absorbs the
/// residue. If that leaves the last segment empty, frames are taken back from
/// the longest earlier segment (earliest on ties).
pub fn scaled_ping_lengths(frames: usize) -> Result<[usize; 5]> {
    if frames < 5 {
        return Err(Error::InvalidInput(format!(
            "T={frames} is too short for five nonempty segments"
        )));
    }
    let mut lengths = [0usize; 5];
    for i in 0..4 {
        lengths[i] = ((frames as f64 * PING_WEIGHTS[i]).round() as usize).max(1);
    }
    loop {
        let used: usize = lengths[..4].iter().sum();
        if used < frames {
            lengths[4] = frames - used;
            break;
        }
        let longest = (0..4)
            .max_by(|&a, &b| lengths[a].cmp(&lengths[b]).then(b.cmp(&a)))
            .expect("four segments");
        lengths[longest] -= 1;
    }
    Ok(lengths)
}

/// The `B p ih ng B` input downscaled to `frames` frames, `dim` 4 with
/// `p, ih, ng, B` at hot indices 0..4.
pub fn scaled_ping_input(frames: usize) -> Result<InputSequence> {
    let lengths = scaled_ping_lengths(frames)?;
    let blocks: Vec<(String, usize)> = PING_SYMBOLS
        .iter()
        .zip(lengths)
        .map(|(s, n)| (s.to_string(), n))
        .collect();
    block_input(&blocks, 4, &ping_hot_index())
}

pub fn ping_hot_index() -> BTreeMap<String, usize> {
    hot_map(&[("p", 0), ("ih", 1), ("ng", 2), ("B", 3)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_block_input() {
        let x = block_input(
            &[("B".into(), 1), ("a".into(), 2), ("B".into(), 1)],
            2,
            &hot_map(&[("a", 0), ("B", 1)]),
        )
        .unwrap();
        assert_eq!(x.len(), 4);
        let rows: Vec<Vec<f64>> = x.frames.iter_rows().map(<[f64]>::to_vec).collect();
        assert_eq!(rows, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn block_input_errors() {
        let map = hot_map(&[("a", 0), ("B", 5)]);
        assert!(block_input(&[("a".into(), 0)], 2, &map).is_err());
        assert!(block_input(&[("B".into(), 1)], 2, &map).is_err());
        assert!(block_input(&[("z".into(), 1)], 2, &map).is_err());
    }

    #[test]
    fn single_label_input_shape() {
        let x = single_label_input(4).unwrap();
        assert_eq!(x.len(), 16);
        assert_eq!(x.hot.iter().filter(|&&h| h == 0).count(), 8);
        assert_eq!(x.hot[3], 1);
        assert_eq!(x.hot[4], 0);
    }

    #[test]
    fn ping_lengths() {
        assert_eq!(scaled_ping_lengths(100).unwrap(), [20, 10, 30, 20, 20]);
        assert_eq!(scaled_ping_lengths(10).unwrap(), [2, 1, 3, 2, 2]);
        assert_eq!(scaled_ping_lengths(7).unwrap(), [1, 1, 2, 1, 2]);
        assert_eq!(scaled_ping_lengths(5).unwrap(), [1, 1, 1, 1, 1]);
        assert!(scaled_ping_lengths(4).is_err());
        let x = scaled_ping_input(100).unwrap();
        assert_eq!(x.dim(), 4);
        assert_eq!(x.blocks()[2], ("ih".to_string(), 30));
    }

    #[test]
    fn csv_header() {
        let x = single_label_input(1).unwrap();
        assert!(x.to_csv().starts_with("t,symbol,x_0,x_1\n1,B,0,1\n"));
    }

    proptest! {
        #[test]
        fn ping_lengths_sum_to_t(t in 5usize..2000) {
            let l = scaled_ping_lengths(t).unwrap();
            prop_assert_eq!(l.iter().sum::<usize>(), t);
            prop_assert!(l.iter().all(|&n| n >= 1));
        }

        #[test]
        fn blocks_round_trip(spec in prop::collection::vec((0usize..3, 1usize..6), 1..8)) {
            let names = ["a", "b", "c"];
            let map = hot_map(&[("a", 0), ("b", 1), ("c", 2)]);
            // merge adjacent equal symbols, the recovered form is run-length
            let mut blocks: Vec<(String, usize)> = Vec::new();
            for (s, n) in spec {
                match blocks.last_mut() {
                    Some((last, m)) if last == names[s] => *m += n,
                    _ => blocks.push((names[s].to_string(), n)),
                }
            }
            let x = block_input(&blocks, 3, &map).unwrap();
            prop_assert_eq!(x.blocks(), blocks);
        }
    }
}
