use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{Alignment, LabelTopology};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 14;

/// Exact alignment counts for one topology and length T.
///
/// `per_frame` is indexed `[t][label]` with 0-based frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    pub total: BigUint,
    pub per_frame: Vec<Vec<BigUint>>,
    pub per_label: Vec<BigUint>,
}

impl CountTable {
    pub fn frames(&self) -> usize {
        self.per_frame.len()
    }

    /// CSV with header `t,label,count`; frames are 1-based.
    pub fn to_csv(&self, topology: &LabelTopology) -> String {
        let mut out = String::from("t,label,count\n");
        for (t, row) in self.per_frame.iter().enumerate() {
            for (s, count) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", t + 1, topology.label_name(s), count));
            }
        }
        out
    }
}

fn check_length(topology: &LabelTopology, frames: usize) -> Result<()> {
    if frames == 0 || frames < topology.min_length() {
        return Err(Error::NoAlignment(frames));
    }
    Ok(())
}

/// Brute-force listing of every accepted alignment of length `frames`,
/// sorted by alphabet index, capped at [`DEFAULT_ENUMERATION_CAP`] frames.
pub fn enumerate_alignments(topology: &LabelTopology, frames: usize) -> Result<Vec<Alignment>> {
    enumerate_alignments_capped(topology, frames, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_alignments_capped(
    topology: &LabelTopology,
    frames: usize,
    cap: usize,
) -> Result<Vec<Alignment>> {
    if frames > cap {
        return Err(Error::EnumerationCap {
            requested: frames,
            cap,
        });
    }
    let mut out = Vec::new();
    if frames == 0 {
        return Ok(out);
    }
    let mut prefix = Vec::with_capacity(frames);
    for state in (0..topology.num_states()).filter(|&j| topology.is_start(j)) {
        extend(topology, frames, state, &mut prefix, &mut out);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn extend(
    topology: &LabelTopology,
    frames: usize,
    state: usize,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Alignment>,
) {
    prefix.push(topology.state_label(state));
    if prefix.len() == frames {
        if topology.is_accept(state) {
            out.push(Alignment(prefix.clone()));
        }
    } else {
        for &next in topology.successors(state) {
            extend(topology, frames, next, prefix, out);
        }
    }
    prefix.pop();
}

/// Forward and backward path counts, `[t][state]`.
fn path_counts(topology: &LabelTopology, frames: usize) -> (Vec<Vec<BigUint>>, Vec<Vec<BigUint>>) {
    let k = topology.num_states();
    let mut fwd = vec![vec![BigUint::zero(); k]; frames];
    for j in 0..k {
        if topology.is_start(j) {
            fwd[0][j] = BigUint::one();
        }
    }
    for t in 1..frames {
        for j in 0..k {
            let mut acc = BigUint::zero();
            for &i in topology.predecessors(j) {
                acc += &fwd[t - 1][i];
            }
            fwd[t][j] = acc;
        }
    }
    let mut bwd = vec![vec![BigUint::zero(); k]; frames];
    for j in 0..k {
        if topology.is_accept(j) {
            bwd[frames - 1][j] = BigUint::one();
        }
    }
    for t in (0..frames - 1).rev() {
        for i in 0..k {
            let mut acc = BigUint::zero();
            for &j in topology.successors(i) {
                acc += &bwd[t + 1][j];
            }
            bwd[t][i] = acc;
        }
    }
    (fwd, bwd)
}

/// Exact alignment counts by the counting form of forward-backward.
pub fn count_alignments(topology: &LabelTopology, frames: usize) -> Result<CountTable> {
    check_length(topology, frames)?;
    let (fwd, bwd) = path_counts(topology, frames);
    let labels = topology.num_labels();
    let mut per_frame = vec![vec![BigUint::zero(); labels]; frames];
    for t in 0..frames {
        for j in 0..topology.num_states() {
            per_frame[t][topology.state_label(j)] += &fwd[t][j] * &bwd[t][j];
        }
    }
    let total: BigUint = (0..topology.num_states())
        .filter(|&j| topology.is_accept(j))
        .map(|j| &fwd[frames - 1][j])
        .sum();
    if total.is_zero() {
        return Err(Error::NoAlignment(frames));
    }
    let per_label = (0..labels)
        .map(|s| per_frame.iter().map(|row| &row[s]).sum())
        .collect();
    Ok(CountTable {
        total,
        per_frame,
        per_label,
    })
}

/// The label with strictly the largest total count, or `None` on a tie.
pub fn dominant_label(topology: &LabelTopology, frames: usize) -> Result<Option<usize>> {
    let table = count_alignments(topology, frames)?;
    Ok(strict_argmax(&table.per_label))
}

fn strict_argmax(values: &[BigUint]) -> Option<usize> {
    let (best, max) = values.iter().enumerate().max_by(|a, b| a.1.cmp(b.1))?;
    let unique = values.iter().filter(|v| *v == max).count() == 1;
    unique.then_some(best)
}

/// Number of frames where `label` has strictly the largest per-frame count.
pub fn dominant_frame_count(topology: &LabelTopology, label: usize, frames: usize) -> Result<usize> {
    let table = count_alignments(topology, frames)?;
    Ok(table
        .per_frame
        .iter()
        .filter(|row| strict_argmax(row) == Some(label))
        .count())
}

/// Largest number of frames `label` can occupy in any alignment.
pub fn max_label_count(topology: &LabelTopology, label: usize, frames: usize) -> Result<usize> {
    check_length(topology, frames)?;
    let k = topology.num_states();
    let gain = |j: usize| usize::from(topology.state_label(j) == label);
    let mut best: Vec<Option<usize>> = (0..k)
        .map(|j| topology.is_start(j).then(|| gain(j)))
        .collect();
    for _ in 1..frames {
        best = (0..k)
            .map(|j| {
                topology
                    .predecessors(j)
                    .iter()
                    .filter_map(|&i| best[i])
                    .max()
                    .map(|c| c + gain(j))
            })
            .collect();
    }
    (0..k)
        .filter(|&j| topology.is_accept(j))
        .filter_map(|j| best[j])
        .max()
        .ok_or(Error::NoAlignment(frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> LabelTopology {
        LabelTopology::parse("B* a+ B*").unwrap()
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn enumerates_small_cases() {
        let t = ex1();
        let names: Vec<String> = enumerate_alignments(&t, 2)
            .unwrap()
            .iter()
            .map(|a| a.labels().iter().map(|&s| t.label_name(s)).collect())
            .collect();
        assert_eq!(names, ["aa", "aB", "Ba"]);
        assert_eq!(enumerate_alignments(&t, 5).unwrap().len(), 15);

        let forced = LabelTopology::parse("a+").unwrap();
        assert_eq!(enumerate_alignments(&forced, 3).unwrap(), vec![Alignment(vec![0, 0, 0])]);
    }

    #[test]
    fn enumeration_cap() {
        assert_eq!(
            enumerate_alignments(&ex1(), 15),
            Err(Error::EnumerationCap { requested: 15, cap: 14 })
        );
        assert_eq!(enumerate_alignments_capped(&ex1(), 15, 20).unwrap().len(), 120);
    }

    #[test]
    fn counts_match_closed_forms_at_t5() {
        let t = ex1();
        let table = count_alignments(&t, 5).unwrap();
        assert_eq!(table.total, big(15));
        assert_eq!(table.per_label, vec![big(35), big(40)]);
        assert_eq!(table.per_frame[2][0], big(9));
    }

    #[test]
    fn counts_match_enumeration_on_ctc_abc() {
        let t = LabelTopology::ctc(&["a", "b", "c"], "B").unwrap();
        let table = count_alignments(&t, 10).unwrap();
        let all = enumerate_alignments(&t, 10).unwrap();
        assert_eq!(table.total, big(all.len() as u64));
        for frame in 0..10 {
            for s in 0..t.num_labels() {
                let brute = all.iter().filter(|a| a.0[frame] == s).count() as u64;
                assert_eq!(table.per_frame[frame][s], big(brute));
            }
        }
    }

    #[test]
    fn no_alignment_errors() {
        let t = LabelTopology::ctc(&["a", "b", "c"], "B").unwrap();
        assert_eq!(count_alignments(&t, 2), Err(Error::NoAlignment(2)));
        assert_eq!(count_alignments(&ex1(), 0), Err(Error::NoAlignment(0)));
    }

    #[test]
    fn dominant_labels() {
        let t = ex1();
        let (a, b) = (0, 1);
        assert_eq!(dominant_label(&t, 5).unwrap(), Some(b));
        assert_eq!(dominant_label(&t, 4).unwrap(), None);
        assert_eq!(dominant_label(&t, 3).unwrap(), Some(a));
    }

    #[test]
    fn dominant_frames() {
        let t = ex1();
        assert_eq!(dominant_frame_count(&t, 1, 24).unwrap(), 18);
        assert_eq!(dominant_frame_count(&t, 1, 8).unwrap(), 4);
        // T=3: C(a,t)=3,4,3 vs C(B,t)=3,2,3, so `a` wins only the middle frame
        assert_eq!(dominant_frame_count(&t, 0, 3).unwrap(), 1);
    }

    #[test]
    fn max_counts() {
        let b = 1;
        assert_eq!(max_label_count(&ex1(), b, 100).unwrap(), 99);
        let ctc = LabelTopology::parse("B* a+ B* b+ B* c+ B*").unwrap();
        assert_eq!(max_label_count(&ctc, ctc.label_index("B").unwrap(), 100).unwrap(), 97);
        let hmm = LabelTopology::parse("B* a+ b+ c+ B*").unwrap();
        assert_eq!(max_label_count(&hmm, hmm.label_index("B").unwrap(), 100).unwrap(), 97);
        assert_eq!(max_label_count(&ex1(), 0, 7).unwrap(), 7);
    }

    #[test]
    fn csv_export() {
        let t = ex1();
        let csv = count_alignments(&t, 2).unwrap().to_csv(&t);
        assert_eq!(csv, "t,label,count\n1,a,2\n1,B,1\n2,a,2\n2,B,1\n");
    }
}
