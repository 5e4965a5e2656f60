//! Log-space forward-backward over a label topology, the full-sum losses
//! built on it, label priors, and analytic parameter gradients.
//!
//! Every path sum runs on a T × |S| matrix of per-frame log-scores: log
//! posteriors for CTC, log posterior/prior ratios for the hybrid loss, and
//! log emissions for the generative loss. The soft alignment `q` from the
//! same pass gives all gradients.

use crate::error::{Error, Result};
use crate::matrix::{log_add, log_sum_exp, softmax, Matrix};
use crate::models::{EmissionTable, ModelSpec, PosteriorTable};
use crate::signals::InputSequence;
use crate::topology::LabelTopology;

/// Per-frame label occupancy `q_t(s)`, T × |S|.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAlignment {
    pub q: Matrix,
}

impl SoftAlignment {
    pub fn frames(&self) -> usize {
        self.q.rows()
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.q[(t, s)]
    }

    /// `Σ_t q_t(s)` per label.
    pub fn label_mass(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.q.cols()];
        for row in self.q.iter_rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// `(1/T) Σ_t q_t(label)`.
    pub fn mean(&self, label: usize) -> f64 {
        self.label_mass()[label] / self.frames() as f64
    }

    /// CSV with header `t,label,q`; frames are 1-based.
    pub fn to_csv(&self, topology: &LabelTopology) -> String {
        let mut out = String::from("t,label,q\n");
        for t in 0..self.frames() {
            for s in 0..self.q.cols() {
                out.push_str(&format!("{},{},{}\n", t + 1, topology.label_name(s), self.q[(t, s)]));
            }
        }
        out
    }
}

/// Result of one forward-backward pass.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub log_total: f64,
    pub soft_alignment: SoftAlignment,
}

fn check_scores(topology: &LabelTopology, scores: &Matrix) -> Result<()> {
    if scores.cols() != topology.num_labels() {
        return Err(Error::DimensionMismatch(format!(
            "scores have {} label columns, topology has {}",
            scores.cols(),
            topology.num_labels()
        )));
    }
    let frames = scores.rows();
    if frames == 0 || frames < topology.min_length() {
        return Err(Error::NoAlignment(frames));
    }
    if scores.as_slice().iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidInput("scores must be finite or -inf".into()));
    }
    Ok(())
}

/// Forward recursion only: `log Σ_{alignments} Π_t exp(scores[t][s_t])`.
pub fn log_path_sum(topology: &LabelTopology, scores: &Matrix) -> Result<f64> {
    check_scores(topology, scores)?;
    let alpha = forward(topology, scores);
    let last = alpha.last().expect("at least one frame");
    let log_total = log_sum_exp((0..topology.num_states()).filter(|&j| topology.is_accept(j)).map(|j| last[j]));
    if log_total == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    Ok(log_total)
}

fn forward(topology: &LabelTopology, scores: &Matrix) -> Vec<Vec<f64>> {
    let (frames, k) = (scores.rows(), topology.num_states());
    let mut alpha = vec![vec![f64::NEG_INFINITY; k]; frames];
    for j in (0..k).filter(|&j| topology.is_start(j)) {
        alpha[0][j] = scores[(0, topology.state_label(j))];
    }
    for t in 1..frames {
        for j in 0..k {
            let incoming = topology
                .predecessors(j)
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &i| log_add(acc, alpha[t - 1][i]));
            alpha[t][j] = incoming + scores[(t, topology.state_label(j))];
        }
    }
    alpha
}

/// Full forward-backward with occupancies.
pub fn forward_backward(topology: &LabelTopology, scores: &Matrix) -> Result<Lattice> {
    check_scores(topology, scores)?;
    let (frames, k) = (scores.rows(), topology.num_states());
    let alpha = forward(topology, scores);
    let mut beta = vec![vec![f64::NEG_INFINITY; k]; frames];
    for j in (0..k).filter(|&j| topology.is_accept(j)) {
        beta[frames - 1][j] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for i in 0..k {
            beta[t][i] = topology.successors(i).iter().fold(f64::NEG_INFINITY, |acc, &j| {
                log_add(acc, scores[(t + 1, topology.state_label(j))] + beta[t + 1][j])
            });
        }
    }
    let log_total = log_sum_exp(
        (0..k)
            .filter(|&j| topology.is_accept(j))
            .map(|j| alpha[frames - 1][j]),
    );
    if log_total == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    let mut q = Matrix::zeros(frames, topology.num_labels());
    for t in 0..frames {
        for j in 0..k {
            let g = alpha[t][j] + beta[t][j] - log_total;
            if g > f64::NEG_INFINITY {
                q[(t, topology.state_label(j))] += g.exp();
            }
        }
    }
    Ok(Lattice {
        log_total,
        soft_alignment: SoftAlignment { q },
    })
}

/// `log Σ_{alignments} Π_t p_t(s_t)`.
pub fn full_sum_log_prob(topology: &LabelTopology, posteriors: &PosteriorTable) -> Result<f64> {
    log_path_sum(topology, &posteriors.log_probs())
}

/// `L = −log Σ_{alignments} Π_t p_t(s_t)`.
pub fn ctc_loss(topology: &LabelTopology, posteriors: &PosteriorTable) -> Result<f64> {
    Ok(-full_sum_log_prob(topology, posteriors)?)
}

pub fn soft_alignment(topology: &LabelTopology, posteriors: &PosteriorTable) -> Result<SoftAlignment> {
    Ok(forward_backward(topology, &posteriors.log_probs())?.soft_alignment)
}

/// Time-average of the posterior rows.
pub fn softmax_prior(posteriors: &PosteriorTable) -> Vec<f64> {
    let frames = posteriors.frames() as f64;
    let mut prior = vec![0.0; posteriors.labels()];
    for row in posteriors.probs().iter_rows() {
        for (p, v) in prior.iter_mut().zip(row) {
            *p += v;
        }
    }
    prior.iter_mut().for_each(|p| *p /= frames);
    prior
}

fn hybrid_scores(topology: &LabelTopology, posteriors: &PosteriorTable, prior: &[f64]) -> Result<Matrix> {
    if prior.len() != posteriors.labels() {
        return Err(Error::DimensionMismatch(format!(
            "prior over {} labels, posteriors over {}",
            prior.len(),
            posteriors.labels()
        )));
    }
    for (s, reachable) in topology.reachable_labels().into_iter().enumerate() {
        if reachable && !(prior[s] > 0.0) {
            return Err(Error::ZeroPrior(topology.label_name(s).to_string()));
        }
    }
    let mut scores = posteriors.log_probs();
    for t in 0..scores.rows() {
        for (s, p) in prior.iter().enumerate() {
            scores[(t, s)] -= p.ln();
        }
    }
    Ok(scores)
}

/// `−log Σ_{alignments} Π_t p_t(s_t) / prior(s_t)`; may be negative.
pub fn hybrid_loss(topology: &LabelTopology, posteriors: &PosteriorTable, prior: &[f64]) -> Result<f64> {
    Ok(-log_path_sum(topology, &hybrid_scores(topology, posteriors, prior)?)?)
}

/// `−log Σ_{alignments} Π_t p(x_t | s_t)`.
pub fn generative_loss(topology: &LabelTopology, emissions: &EmissionTable, x: &InputSequence) -> Result<f64> {
    Ok(-log_path_sum(topology, &emissions.frame_log_scores(x)?)?)
}

/// How the label prior of the hybrid loss is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorMode {
    /// Time-average of the current posteriors, differentiated through.
    Softmax,
    /// Same value, treated as a constant.
    StopGrad,
    /// `softmax(logits)`, a separate jointly trained model.
    Learned { logits: Vec<f64> },
    /// Running average of the softmax prior, held by the caller.
    Ema { decay: f64 },
}

impl PriorMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorMode::Ema { decay } if !(*decay > 0.0 && *decay < 1.0) => {
                Err(Error::InvalidInput(format!("EMA decay {decay} not in (0,1)")))
            }
            PriorMode::Learned { logits } if logits.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("learned prior logits must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    Ctc,
    Hybrid(PriorMode),
    Generative,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ctc => "ctc",
            LossKind::Hybrid(PriorMode::Softmax) => "hybrid_softmax_prior",
            LossKind::Hybrid(PriorMode::StopGrad) => "hybrid_stop_grad_prior",
            LossKind::Hybrid(PriorMode::Learned { .. }) => "hybrid_learned_prior",
            LossKind::Hybrid(PriorMode::Ema { .. }) => "hybrid_ema_prior",
            LossKind::Generative => "generative",
        }
    }
}

/// Loss value, gradients and the quantities they were assembled from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    /// Same layout as [`ModelSpec::params`].
    pub gradient: Vec<f64>,
    /// Gradient w.r.t. the learned prior logits, when that mode is active.
    pub prior_gradient: Option<Vec<f64>>,
    pub soft_alignment: SoftAlignment,
    /// The prior used by a hybrid loss.
    pub prior: Option<Vec<f64>>,
}

/// Loss and analytic gradient for one model/loss pairing.
///
/// `running_prior` supplies the current EMA prior; when absent the softmax
/// prior of the current posteriors is used in its place.
pub fn evaluate(
    model: &ModelSpec,
    loss: &LossKind,
    topology: &LabelTopology,
    x: &InputSequence,
    running_prior: Option<&[f64]>,
) -> Result<Evaluation> {
    match (loss, model.is_generative()) {
        (LossKind::Generative, true) => evaluate_generative(model, topology, x),
        (LossKind::Generative, false) => Err(Error::Incompatible(
            "the generative loss needs the generative model".into(),
        )),
        (_, true) => Err(Error::Incompatible(
            "the generative model only pairs with the generative loss".into(),
        )),
        (LossKind::Ctc, false) => {
            let posteriors = model.posteriors(x)?;
            let lattice = forward_backward(topology, &posteriors.log_probs())?;
            let grad = posterior_minus_occupancy(&posteriors, &lattice.soft_alignment);
            Ok(Evaluation {
                loss: -lattice.log_total,
                gradient: model.logit_gradient_to_params(&grad, x)?,
                prior_gradient: None,
                soft_alignment: lattice.soft_alignment,
                prior: None,
            })
        }
        (LossKind::Hybrid(mode), false) => evaluate_hybrid(model, mode, topology, x, running_prior),
    }
}

/// Parameter gradient only.
pub fn model_gradient(
    model: &ModelSpec,
    loss: &LossKind,
    topology: &LabelTopology,
    x: &InputSequence,
    running_prior: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Ok(evaluate(model, loss, topology, x, running_prior)?.gradient)
}

/// Loss value only, with the prior resolved as in [`evaluate`].
pub fn loss_value(
    model: &ModelSpec,
    loss: &LossKind,
    topology: &LabelTopology,
    x: &InputSequence,
    running_prior: Option<&[f64]>,
) -> Result<f64> {
    match loss {
        LossKind::Ctc => ctc_loss(topology, &model.posteriors(x)?),
        LossKind::Generative => {
            if !model.is_generative() {
                return Err(Error::Incompatible("the generative loss needs the generative model".into()));
            }
            generative_loss(topology, &model.emissions()?, x)
        }
        LossKind::Hybrid(mode) => {
            let posteriors = model.posteriors(x)?;
            let prior = resolve_prior(mode, &posteriors, running_prior)?;
            hybrid_loss(topology, &posteriors, &prior)
        }
    }
}

fn resolve_prior(mode: &PriorMode, posteriors: &PosteriorTable, running_prior: Option<&[f64]>) -> Result<Vec<f64>> {
    mode.validate()?;
    Ok(match mode {
        PriorMode::Softmax | PriorMode::StopGrad => softmax_prior(posteriors),
        PriorMode::Learned { logits } => softmax(logits),
        PriorMode::Ema { .. } => running_prior.map_or_else(|| softmax_prior(posteriors), <[f64]>::to_vec),
    })
}

// Per-frame softmax-logit gradient `p_t − q_t`.
fn posterior_minus_occupancy(posteriors: &PosteriorTable, q: &SoftAlignment) -> Matrix {
    let mut grad = posteriors.probs().clone();
    for (g, qv) in grad.as_mut_slice().iter_mut().zip(q.q.as_slice()) {
        *g -= qv;
    }
    grad
}

fn evaluate_hybrid(
    model: &ModelSpec,
    mode: &PriorMode,
    topology: &LabelTopology,
    x: &InputSequence,
    running_prior: Option<&[f64]>,
) -> Result<Evaluation> {
    let posteriors = model.posteriors(x)?;
    let prior = resolve_prior(mode, &posteriors, running_prior)?;
    let lattice = forward_backward(topology, &hybrid_scores(topology, &posteriors, &prior)?)?;
    let q = &lattice.soft_alignment;
    let mut grad = posterior_minus_occupancy(&posteriors, q);
    let mass = q.label_mass();
    let frames = posteriors.frames() as f64;

    let prior_gradient = match mode {
        PriorMode::Softmax => {
            // dL/dprior(s) = Q(s)/prior(s), and prior(s) = mean_t p_t(s)
            let r: Vec<f64> = mass
                .iter()
                .zip(&prior)
                .map(|(&m, &p)| if m == 0.0 { 0.0 } else { m / (frames * p) })
                .collect();
            for t in 0..grad.rows() {
                let p = posteriors.probs().row(t);
                let mean_r: f64 = p.iter().zip(&r).map(|(pv, rv)| pv * rv).sum();
                for s in 0..grad.cols() {
                    grad[(t, s)] += p[s] * (r[s] - mean_r);
                }
            }
            None
        }
        PriorMode::Learned { .. } => {
            let total: f64 = mass.iter().sum();
            Some(mass.iter().zip(&prior).map(|(m, p)| m - total * p).collect())
        }
        PriorMode::StopGrad | PriorMode::Ema { .. } => None,
    };

    Ok(Evaluation {
        loss: -lattice.log_total,
        gradient: model.logit_gradient_to_params(&grad, x)?,
        prior_gradient,
        soft_alignment: lattice.soft_alignment,
        prior: Some(prior),
    })
}

fn evaluate_generative(model: &ModelSpec, topology: &LabelTopology, x: &InputSequence) -> Result<Evaluation> {
    let emissions = model.emissions()?;
    let lattice = forward_backward(topology, &emissions.frame_log_scores(x)?)?;
    let q = &lattice.soft_alignment;
    let (labels, symbols) = (emissions.probs().rows(), emissions.probs().cols());
    // dL/dz_s[k] = N_s p(k|s) − Σ_{t: x_t = k} q_t(s)
    let mut grad = Matrix::zeros(labels, symbols);
    let mass = q.label_mass();
    for s in 0..labels {
        for k in 0..symbols {
            grad[(s, k)] = mass[s] * emissions.get(s, k);
        }
    }
    for (t, &h) in x.hot.iter().enumerate() {
        for s in 0..labels {
            grad[(s, h)] -= q.get(t, s);
        }
    }
    Ok(Evaluation {
        loss: -lattice.log_total,
        gradient: model.emission_gradient_to_params(&grad)?,
        prior_gradient: None,
        soft_alignment: lattice.soft_alignment,
        prior: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelDims, ModelKind};
    use crate::signals::single_label_input;

    fn ex1() -> LabelTopology {
        LabelTopology::parse("B* a+ B*").unwrap()
    }

    #[test]
    fn uniform_t5_log_prob() {
        let lp = full_sum_log_prob(&ex1(), &PosteriorTable::uniform(5, 2)).unwrap();
        assert!((lp - (15.0f64 / 32.0).ln()).abs() < 1e-14);
        assert!((ctc_loss(&ex1(), &PosteriorTable::uniform(5, 2)).unwrap() - 0.7576857016975165).abs() < 1e-12);
    }

    #[test]
    fn single_forced_frame() {
        let p = PosteriorTable::sharp(&[0], 2);
        assert_eq!(full_sum_log_prob(&ex1(), &p).unwrap(), 0.0);
    }

    #[test]
    fn sharp_valid_alignment_has_zero_loss() {
        let p = PosteriorTable::sharp(&[1, 1, 0, 0, 1], 2);
        assert_eq!(ctc_loss(&ex1(), &p).unwrap(), 0.0);
        let q = soft_alignment(&ex1(), &p).unwrap();
        assert_eq!(q.q, p.probs().clone());
    }

    #[test]
    fn zero_mass_is_distinct() {
        // all-blank posteriors admit no alignment containing `a`
        let p = PosteriorTable::sharp(&[1, 1, 1], 2);
        assert_eq!(full_sum_log_prob(&ex1(), &p), Err(Error::ZeroMass));
        assert_eq!(soft_alignment(&ex1(), &p), Err(Error::ZeroMass));
        let abc = LabelTopology::ctc(&["a", "b", "c"], "B").unwrap();
        assert_eq!(
            full_sum_log_prob(&abc, &PosteriorTable::uniform(2, 4)),
            Err(Error::NoAlignment(2))
        );
    }

    #[test]
    fn q_by_counting_at_uniform() {
        let q = soft_alignment(&ex1(), &PosteriorTable::uniform(5, 2)).unwrap();
        assert!((q.get(2, 0) - 0.6).abs() < 1e-14);
    }

    #[test]
    fn blank_frame_average_at_uniform_n4() {
        let x = single_label_input(4).unwrap();
        let q = soft_alignment(&ex1(), &PosteriorTable::uniform(16, 2)).unwrap();
        let blank_frames: Vec<usize> = (0..16).filter(|&t| x.hot[t] == 1).collect();
        let mean = blank_frames.iter().map(|&t| q.get(t, 1)).sum::<f64>() / blank_frames.len() as f64;
        assert!((mean - 303.0 / 408.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_priors() {
        assert_eq!(softmax_prior(&PosteriorTable::uniform(3, 4)), vec![0.25; 4]);
        assert_eq!(softmax_prior(&PosteriorTable::sharp(&[0, 1], 2)), vec![0.5, 0.5]);
        let opt = PosteriorTable::sharp(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1], 2);
        assert_eq!(softmax_prior(&opt), vec![0.5, 0.5]);
    }

    #[test]
    fn hybrid_with_uniform_prior_shifts_ctc() {
        let x = single_label_input(2).unwrap();
        let p = ModelSpec::TwoParam { theta_a: 0.7, theta_b: -0.2 }.posteriors(&x).unwrap();
        let ctc = ctc_loss(&ex1(), &p).unwrap();
        let hybrid = hybrid_loss(&ex1(), &p, &[0.5, 0.5]).unwrap();
        assert!((hybrid - (ctc - 8.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn hybrid_uniform_self_prior_counts_paths() {
        let p = PosteriorTable::uniform(6, 2);
        let l = hybrid_loss(&ex1(), &p, &softmax_prior(&p)).unwrap();
        assert!((l + 21f64.ln()).abs() < 1e-12);
        assert!(l < 0.0);
    }

    #[test]
    fn hybrid_zero_prior_rejected() {
        let p = PosteriorTable::uniform(4, 2);
        assert_eq!(hybrid_loss(&ex1(), &p, &[0.0, 1.0]), Err(Error::ZeroPrior("a".into())));
    }

    #[test]
    fn generative_losses() {
        let x = single_label_input(4).unwrap();
        let uniform = ModelSpec::Generative { theta_a: 0.0, theta_b: 0.0 }.emissions().unwrap();
        let l = generative_loss(&ex1(), &uniform, &x).unwrap();
        assert!((l + (136f64.ln() + 16.0 * 0.5f64.ln())).abs() < 1e-12);
        let sharp = EmissionTable::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(generative_loss(&ex1(), &sharp, &x).unwrap(), 0.0);
    }

    #[test]
    fn incompatible_pairings() {
        let x = single_label_input(1).unwrap();
        let gen = ModelSpec::Generative { theta_a: 0.0, theta_b: 0.0 };
        let bias = ModelSpec::Bias { b: vec![0.0, 0.0] };
        assert!(matches!(evaluate(&gen, &LossKind::Ctc, &ex1(), &x, None), Err(Error::Incompatible(_))));
        assert!(matches!(evaluate(&bias, &LossKind::Generative, &ex1(), &x, None), Err(Error::Incompatible(_))));
        assert!(matches!(
            evaluate(&bias, &LossKind::Hybrid(PriorMode::Ema { decay: 1.5 }), &ex1(), &x, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn bias_gradient_favours_dominant_label() {
        let x5 = crate::signals::block_input(
            &[("B".into(), 5)],
            2,
            &[("a".to_string(), 0), ("B".to_string(), 1)].into_iter().collect(),
        )
        .unwrap();
        let bias = ModelSpec::init_uniform(ModelKind::Bias, ModelDims { labels: 2, input_dim: 2, frames: 5, with_bias: false });
        let g = model_gradient(&bias, &LossKind::Ctc, &ex1(), &x5, None).unwrap();
        // Σ_t (p_t − q_t): a gets 2.5 − 35/15, B gets 2.5 − 40/15
        assert!(g[1] < 0.0 && g[1] < g[0]);
        assert!((g[0] - (2.5 - 35.0 / 15.0)).abs() < 1e-12);
    }

    #[test]
    fn stationary_when_posteriors_equal_occupancy() {
        let x = single_label_input(2).unwrap();
        // a saturated valid alignment gives q = p exactly
        let mut m = Matrix::zeros(8, 2);
        for t in 0..8 {
            m[(t, if (2..6).contains(&t) { 0 } else { 1 })] = 800.0;
        }
        let model = ModelSpec::Memory { m };
        let g = model_gradient(&model, &LossKind::Ctc, &ex1(), &x, None).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn scale_invariance_of_occupancy() {
        let t = ex1();
        let rows = vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![0.5, 0.5], vec![0.1, 0.9]];
        let base = Matrix::from_rows(&rows).map(f64::ln);
        let mut scaled = base.clone();
        for (i, c) in [3.0f64, 0.25, 7.0, 1.5].iter().enumerate() {
            for s in 0..2 {
                scaled[(i, s)] += c.ln();
            }
        }
        let q1 = forward_backward(&t, &base).unwrap().soft_alignment.q;
        let q2 = forward_backward(&t, &scaled).unwrap().soft_alignment.q;
        assert!(q1.max_abs_diff(&q2) < 1e-14);
    }

    #[test]
    fn csv_header() {
        let t = ex1();
        let q = soft_alignment(&t, &PosteriorTable::uniform(1, 2)).unwrap();
        assert_eq!(q.to_csv(&t), "t,label,q\n1,a,1\n1,B,0\n");
    }
}
