//! Conditional alignment counts for the two-parameter trapping argument on
//! the single-label example (`B* a+ B*` with the `B^n a^2n B^n` input).

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;

use super::LabelTopology;
use crate::error::{Error, Result};

/// Which frame class conditions the count `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaCase {
    /// `c` counts B-labelled frames among the `x_a` frames; per-frame
    /// indicators are summed over the `x_B` frames.
    A,
    /// `c` counts B-labelled frames among the `x_B` frames; per-frame
    /// indicators are summed over the `x_a` frames.
    B,
}

/// `out[c][s] = Σ_{t: summed[t]} |{alignments : s_t = s, C = c}|` where
/// `C` is the number of frames with `condition[t]` labelled `condition_label`.
pub fn conditioned_frame_counts(
    topology: &LabelTopology,
    condition: &[bool],
    condition_label: usize,
    summed: &[bool],
) -> Result<Vec<Vec<BigUint>>> {
    let frames = condition.len();
    if summed.len() != frames {
        return Err(Error::DimensionMismatch(format!(
            "condition mask has {frames} frames, summed mask has {}",
            summed.len()
        )));
    }
    if frames == 0 || frames < topology.min_length() {
        return Err(Error::NoAlignment(frames));
    }
    let k = topology.num_states();
    let width = condition.iter().filter(|&&b| b).count() + 1;
    let hit = |t: usize, j: usize| usize::from(condition[t] && topology.state_label(j) == condition_label);
    let zeros = || vec![vec![BigUint::zero(); width]; k];

    // fwd[t][j][c]: prefixes through frame t ending in j, c hits in 0..=t
    let mut fwd = vec![zeros(); frames];
    for j in (0..k).filter(|&j| topology.is_start(j)) {
        fwd[0][j][hit(0, j)] = BigUint::from(1u8);
    }
    for t in 1..frames {
        for j in 0..k {
            let h = hit(t, j);
            for &i in topology.predecessors(j) {
                for c in 0..width - h {
                    if !fwd[t - 1][i][c].is_zero() {
                        let v = fwd[t - 1][i][c].clone();
                        fwd[t][j][c + h] += v;
                    }
                }
            }
        }
    }
    // bwd[t][j][c]: suffixes over frames t+1.. given state j at t, c hits there
    let mut bwd = vec![zeros(); frames];
    for j in (0..k).filter(|&j| topology.is_accept(j)) {
        bwd[frames - 1][j][0] = BigUint::from(1u8);
    }
    for t in (0..frames - 1).rev() {
        for i in 0..k {
            for &j in topology.successors(i) {
                let h = hit(t + 1, j);
                for c in 0..width - h {
                    if !bwd[t + 1][j][c].is_zero() {
                        let v = bwd[t + 1][j][c].clone();
                        bwd[t][i][c + h] += v;
                    }
                }
            }
        }
    }

    let mut out = vec![vec![BigUint::zero(); topology.num_labels()]; width];
    for t in (0..frames).filter(|&t| summed[t]) {
        for j in 0..k {
            let s = topology.state_label(j);
            for c1 in 0..width {
                if fwd[t][j][c1].is_zero() {
                    continue;
                }
                for c2 in 0..width - c1 {
                    if !bwd[t][j][c2].is_zero() {
                        out[c1 + c2][s] += &fwd[t][j][c1] * &bwd[t][j][c2];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `ΔC(c) = C(s=B, c) − C(s=a, c)` for `c = 0..=2n` on the single-label
/// example with block size `n` (T = 4n).
pub fn delta_counts(n: usize, case: DeltaCase) -> Result<Vec<BigInt>> {
    if n == 0 {
        return Err(Error::InvalidInput("block size must be at least 1".into()));
    }
    let topology = LabelTopology::parse("B* a+ B*")?;
    let (a, b) = (0, 1);
    let label_frames: Vec<bool> = (0..4 * n).map(|t| (n..3 * n).contains(&t)).collect();
    let blank_frames: Vec<bool> = label_frames.iter().map(|&x| !x).collect();
    let (condition, summed) = match case {
        DeltaCase::A => (&label_frames, &blank_frames),
        DeltaCase::B => (&blank_frames, &label_frames),
    };
    let table = conditioned_frame_counts(&topology, condition, b, summed)?;
    Ok(table
        .into_iter()
        .map(|row| BigInt::from(row[b].clone()) - BigInt::from(row[a].clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    // Frozen from an exhaustive pass over the 136 alignments at n = 4.
    #[test]
    fn n4_tables() {
        assert_eq!(
            delta_counts(4, DeltaCase::A).unwrap(),
            ints(&[0, 40, 48, 56, 64, 72, 80, 88, 80])
        );
        assert_eq!(
            delta_counts(4, DeltaCase::B).unwrap(),
            ints(&[-8, -16, -24, -32, -24, 0, 24, 48, 48])
        );
        let total: BigInt = delta_counts(4, DeltaCase::B).unwrap().iter().sum();
        assert_eq!(total, BigInt::from(16));
    }

    #[test]
    fn rejects_zero_block() {
        assert!(delta_counts(0, DeltaCase::A).is_err());
    }
}
