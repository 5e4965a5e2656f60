//! Viterbi alignments, peakiness verdicts, greedy collapse decoding and
//! error metrics.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::PosteriorTable;
use crate::topology::{dominant_label, max_label_count, Alignment, LabelTopology};

/// Log-scores closer than this are treated as tied.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

fn check(topology: &LabelTopology, scores: &Matrix) -> Result<()> {
    if scores.cols() != topology.num_labels() {
        return Err(Error::DimensionMismatch(format!(
            "scores have {} label columns, topology has {}",
            scores.cols(),
            topology.num_labels()
        )));
    }
    if scores.rows() == 0 || scores.rows() < topology.min_length() {
        return Err(Error::NoAlignment(scores.rows()));
    }
    Ok(())
}

/// Best alignment under per-frame log-scores.
///
/// Among tied alignments the one whose state sequence is lexicographically
/// smallest wins: stay in the current item as long as possible, otherwise
/// move to the earliest admissible item.
pub fn viterbi_scores(topology: &LabelTopology, scores: &Matrix) -> Result<(Alignment, f64)> {
    check(topology, scores)?;
    let (frames, k) = (scores.rows(), topology.num_states());
    let emit = |t: usize, j: usize| scores[(t, topology.state_label(j))];

    // best[t][j]: best score of frames t+1.. given state j at frame t
    let mut best = vec![vec![f64::NEG_INFINITY; k]; frames];
    for j in (0..k).filter(|&j| topology.is_accept(j)) {
        best[frames - 1][j] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for i in 0..k {
            best[t][i] = topology
                .successors(i)
                .iter()
                .map(|&j| emit(t + 1, j) + best[t + 1][j])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let total = (0..k)
        .filter(|&j| topology.is_start(j))
        .map(|j| emit(0, j) + best[0][j])
        .fold(f64::NEG_INFINITY, f64::max);
    if total == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }

    let pick = |acc: f64, t: usize, candidates: &[usize]| {
        candidates
            .iter()
            .copied()
            .find(|&j| acc + emit(t, j) + best[t][j] >= total - SCORE_TIE_TOLERANCE)
            .expect("an optimal continuation exists")
    };
    let starts: Vec<usize> = (0..k).filter(|&j| topology.is_start(j)).collect();
    let mut state = pick(0.0, 0, &starts);
    let mut acc = emit(0, state);
    let mut labels = vec![topology.state_label(state)];
    for t in 1..frames {
        state = pick(acc, t, topology.successors(state));
        acc += emit(t, state);
        labels.push(topology.state_label(state));
    }
    Ok((Alignment(labels), acc))
}

/// Viterbi alignment under `log p_t(s)`.
pub fn viterbi(topology: &LabelTopology, posteriors: &PosteriorTable) -> Result<(Alignment, f64)> {
    viterbi_scores(topology, &posteriors.log_probs())
}

/// Log-score of one alignment.
pub fn alignment_score(scores: &Matrix, alignment: &Alignment) -> f64 {
    alignment
        .labels()
        .iter()
        .enumerate()
        .map(|(t, &s)| scores[(t, s)])
        .sum()
}

/// Smallest count of `label` among all score-maximal alignments, with the
/// maximal score. Ties within [`SCORE_TIE_TOLERANCE`].
pub fn min_label_count_among_best(
    topology: &LabelTopology,
    scores: &Matrix,
    label: usize,
) -> Result<(usize, f64)> {
    check(topology, scores)?;
    let (frames, k) = (scores.rows(), topology.num_states());
    let gain = |j: usize| usize::from(topology.state_label(j) == label);
    let better = |a: (f64, usize), b: (f64, usize)| {
        if a.0 > b.0 + SCORE_TIE_TOLERANCE {
            true
        } else if b.0 > a.0 + SCORE_TIE_TOLERANCE {
            false
        } else {
            a.1 < b.1 || (a.1 == b.1 && a.0 > b.0)
        }
    };
    let mut cell: Vec<Option<(f64, usize)>> = (0..k)
        .map(|j| {
            let s = scores[(0, topology.state_label(j))];
            (topology.is_start(j) && s > f64::NEG_INFINITY).then(|| (s, gain(j)))
        })
        .collect();
    for t in 1..frames {
        cell = (0..k)
            .map(|j| {
                let s = scores[(t, topology.state_label(j))];
                if s == f64::NEG_INFINITY {
                    return None;
                }
                let mut chosen: Option<(f64, usize)> = None;
                for &i in topology.predecessors(j) {
                    if let Some((score, count)) = cell[i] {
                        let cand = (score + s, count + gain(j));
                        if chosen.is_none_or(|c| better(cand, c)) {
                            chosen = Some(cand);
                        }
                    }
                }
                chosen
            })
            .collect();
    }
    let mut chosen: Option<(f64, usize)> = None;
    for j in (0..k).filter(|&j| topology.is_accept(j)) {
        if let Some(c) = cell[j] {
            if chosen.is_none_or(|b| better(c, b)) {
                chosen = Some(c);
            }
        }
    }
    chosen.map(|(s, c)| (c, s)).ok_or(Error::ZeroMass)
}

/// Whether `alignment` reaches the largest possible count of `dominant`.
///
/// Several alignments usually share the maximum (`B^49 a B^50` and
/// `B^50 a B^49`), so attaining it is the criterion.
pub fn is_peaky_alignment(topology: &LabelTopology, alignment: &Alignment, dominant: usize) -> Result<bool> {
    if !topology.accepts(alignment.labels()) {
        return Err(Error::InvalidInput("alignment is not accepted by the topology".into()));
    }
    let max = max_label_count(topology, dominant, alignment.len())?;
    Ok(alignment.count_of(dominant) == max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakinessReport {
    pub dominant: Option<usize>,
    pub viterbi_score: f64,
    pub viterbi_alignment: Alignment,
    /// Zero when there is no dominant label.
    pub min_dominant_count_among_viterbi: usize,
    /// Zero when there is no dominant label.
    pub max_dominant_count: usize,
    pub is_peaky_behavior: bool,
}

impl PeakinessReport {
    pub fn to_kv(&self, topology: &LabelTopology) -> String {
        format!(
            "dominant={}\nviterbi_score={}\nviterbi_alignment={}\nmin_dominant_count_among_viterbi={}\nmax_dominant_count={}\nis_peaky_behavior={}\n",
            self.dominant.map_or("none", |s| topology.label_name(s)),
            self.viterbi_score,
            self.viterbi_alignment.display(topology),
            self.min_dominant_count_among_viterbi,
            self.max_dominant_count,
            self.is_peaky_behavior,
        )
    }
}

/// Peakiness verdict under per-frame log-scores.
pub fn peakiness_report_scores(topology: &LabelTopology, scores: &Matrix) -> Result<PeakinessReport> {
    let frames = scores.rows();
    let (viterbi_alignment, viterbi_score) = viterbi_scores(topology, scores)?;
    let dominant = dominant_label(topology, frames)?;
    let (min_count, max_count) = match dominant {
        Some(d) => (
            min_label_count_among_best(topology, scores, d)?.0,
            max_label_count(topology, d, frames)?,
        ),
        None => (0, 0),
    };
    Ok(PeakinessReport {
        dominant,
        viterbi_score,
        viterbi_alignment,
        min_dominant_count_among_viterbi: min_count,
        max_dominant_count: max_count,
        is_peaky_behavior: dominant.is_some() && min_count == max_count,
    })
}

pub fn peakiness_report(topology: &LabelTopology, posteriors: &PosteriorTable) -> Result<PeakinessReport> {
    peakiness_report_scores(topology, &posteriors.log_probs())
}

/// Per-frame argmax (lowest index on ties), merge repeats, drop `blank`.
pub fn greedy_decode(posteriors: &PosteriorTable, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in posteriors.probs().iter_rows() {
        let best = row
            .iter()
            .enumerate()
            .fold(0, |b, (s, &p)| if p > row[b] { s } else { b });
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

/// 0 on an exact match, 1 otherwise.
pub fn sequence_error(decoded: &[usize], target: &[usize]) -> u8 {
    u8::from(decoded != target)
}

/// Fraction of frames where the two alignments differ.
pub fn frame_error(alignment: &Alignment, reference: &Alignment) -> Result<f64> {
    if alignment.len() != reference.len() || alignment.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "alignments of length {} and {}",
            alignment.len(),
            reference.len()
        )));
    }
    let diff = alignment.0.iter().zip(&reference.0).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / alignment.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::scaled_ping_input;

    fn ex1() -> LabelTopology {
        LabelTopology::parse("B* a+ B*").unwrap()
    }

    fn runs(parts: &[(usize, usize)]) -> Alignment {
        Alignment(parts.iter().flat_map(|&(s, n)| std::iter::repeat_n(s, n)).collect())
    }

    const A: usize = 0;
    const B: usize = 1;

    #[test]
    fn sharp_posteriors_recover_alignment() {
        let al = runs(&[(B, 2), (A, 3), (B, 1)]);
        let (v, score) = viterbi(&ex1(), &PosteriorTable::sharp(&al.0, 2)).unwrap();
        assert_eq!(v, al);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn uniform_tie_break() {
        let (v, score) = viterbi(&ex1(), &PosteriorTable::uniform(3, 2)).unwrap();
        assert_eq!(v, runs(&[(B, 2), (A, 1)]));
        assert!((score - 3.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ping_optimal_posteriors() {
        let hmm = LabelTopology::hmm(&["a", "b", "c"], "B").unwrap();
        let x = scaled_ping_input(100).unwrap();
        // hot index order p, ih, ng, B matches alphabet order a, b, c, B
        let p = PosteriorTable::sharp(&x.hot, 4);
        let (v, _) = viterbi(&hmm, &p).unwrap();
        assert_eq!(v.display(&hmm), "B^20 a^10 b^30 c^20 B^20");
        let report = peakiness_report(&hmm, &p).unwrap();
        assert_eq!(report.dominant, Some(3));
        assert_eq!(report.min_dominant_count_among_viterbi, 40);
        assert_eq!(report.max_dominant_count, 97);
        assert!(!report.is_peaky_behavior);
    }

    #[test]
    fn peaky_alignments() {
        let t = ex1();
        assert!(is_peaky_alignment(&t, &runs(&[(B, 49), (A, 1), (B, 50)]), B).unwrap());
        assert!(!is_peaky_alignment(&t, &runs(&[(B, 50), (A, 50)]), B).unwrap());
        assert!(is_peaky_alignment(&t, &runs(&[(A, 1), (B, 99)]), B).unwrap());
        assert!(is_peaky_alignment(&t, &runs(&[(A, 1), (B, 1), (A, 1)]), B).is_err());
    }

    #[test]
    fn uniform_posteriors_are_not_peaky() {
        let report = peakiness_report(&ex1(), &PosteriorTable::uniform(5, 2)).unwrap();
        assert_eq!(report.dominant, Some(B));
        assert_eq!(report.min_dominant_count_among_viterbi, 0);
        assert_eq!(report.max_dominant_count, 4);
        assert!(!report.is_peaky_behavior);
    }

    #[test]
    fn no_dominant_label_is_not_peaky() {
        let report = peakiness_report(&ex1(), &PosteriorTable::uniform(4, 2)).unwrap();
        assert_eq!(report.dominant, None);
        assert!(!report.is_peaky_behavior);
        assert!(report.to_kv(&ex1()).starts_with("dominant=none\n"));
    }

    #[test]
    fn greedy_decoding() {
        let rows = |labels: &[usize]| PosteriorTable::new(
            Matrix::from_rows(&labels.iter().map(|&s| if s == A { vec![0.7, 0.3] } else { vec![0.2, 0.8] }).collect::<Vec<_>>()),
        )
        .unwrap();
        assert_eq!(greedy_decode(&rows(&[B, B, A, B]), B), vec![A]);
        assert!(greedy_decode(&rows(&[B, B, B]), B).is_empty());
        assert_eq!(greedy_decode(&rows(&[A, A, B, A]), B), vec![A, A]);
        // exact tie goes to the lower index
        assert_eq!(greedy_decode(&PosteriorTable::uniform(2, 2), B), vec![A]);
    }

    #[test]
    fn error_metrics() {
        assert_eq!(sequence_error(&[], &[A]), 1);
        assert_eq!(sequence_error(&[A], &[A]), 0);
        let v = runs(&[(B, 15), (A, 1), (B, 16)]);
        let r = runs(&[(B, 8), (A, 16), (B, 8)]);
        // the single `a` of v falls inside r's `a` block: 15 of 32 frames differ
        assert_eq!(frame_error(&v, &r).unwrap(), 15.0 / 32.0);
        assert!(frame_error(&v, &runs(&[(B, 3)])).is_err());
    }
}
