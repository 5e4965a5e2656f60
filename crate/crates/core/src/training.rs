//! Full-batch gradient descent on a single training sequence, and the
//! frames-per-label ratio sweep.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::analysis::{greedy_decode, peakiness_report, sequence_error, PeakinessReport};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::losses::{evaluate, loss_value, softmax_prior, Evaluation, LossKind, PriorMode, SoftAlignment};
use crate::matrix::{softmax, Matrix};
use crate::models::{ModelDims, ModelKind, ModelSpec, PosteriorTable};
use crate::signals::{scaled_ping_input, InputSequence};
use crate::topology::{count_alignments, dominant_label, LabelTopology};

pub const DIVERGENCE_PARAM_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop once `|L_i − L_{i−1}|` falls below this.
    pub stop_delta: f64,
    /// `convergence_step` is the first step with `L` below this.
    pub convergence_loss_threshold: f64,
    /// Unused by the deterministic runs; kept for config compatibility.
    pub seed: u64,
    /// Experimental: recompute the soft alignment (and prior) only every
    /// this many steps and train frame-wise against it in between.
    pub realign_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_steps: 50_000,
            stop_delta: 1e-10,
            convergence_loss_threshold: 1.0,
            seed: 0,
            realign_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be at least 1".into()));
        }
        if self.realign_every == Some(0) {
            return Err(Error::InvalidInput("realign_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Loss change fell below `stop_delta`.
    Converged,
    MaxSteps,
    /// Non-finite loss or a parameter beyond [`DIVERGENCE_PARAM_LIMIT`].
    Diverged,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxSteps => "max_steps",
            Termination::Diverged => "diverged",
        }
    }
}

/// Everything a training run needs besides the model and config.
#[derive(Debug, Clone)]
pub struct Task {
    pub topology: LabelTopology,
    pub input: InputSequence,
    pub target: Vec<usize>,
    pub blank: usize,
}

impl Task {
    /// `B* a+ B*` with the `B^n a^2n B^n` input.
    pub fn single_label(n: usize) -> Result<Self> {
        let topology = LabelTopology::ctc(&["a"], "B")?;
        Ok(Self {
            target: vec![0],
            blank: 1,
            input: crate::signals::single_label_input(n)?,
            topology,
        })
    }

    pub fn frames(&self) -> usize {
        self.input.len()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
    pub final_model: ModelSpec,
    /// Final loss kind; carries the trained logits of a learned prior.
    pub final_loss_kind: LossKind,
    pub final_prior: Option<Vec<f64>>,
    pub final_posteriors: PosteriorTable,
    pub final_soft_alignment: SoftAlignment,
    pub peakiness: PeakinessReport,
    pub decoded: Vec<usize>,
    pub sequence_error: u8,
    pub convergence_step: Option<usize>,
    pub mean_q_dominant: f64,
    pub termination: Termination,
}

/// Posteriors of a trained model; for the generative model, emissions
/// normalized per frame (uniform label prior).
pub fn model_posteriors(model: &ModelSpec, x: &InputSequence) -> Result<PosteriorTable> {
    if !model.is_generative() {
        return model.posteriors(x);
    }
    let scores = model.emissions()?.frame_log_scores(x)?;
    let mut probs = Matrix::zeros(scores.rows(), scores.cols());
    for t in 0..scores.rows() {
        probs.row_mut(t).copy_from_slice(&softmax(scores.row(t)));
    }
    PosteriorTable::new(probs)
}

// Gradient against a frozen soft alignment.
fn frozen_gradient(model: &ModelSpec, x: &InputSequence, q: &SoftAlignment) -> Result<Vec<f64>> {
    if model.is_generative() {
        let emissions = model.emissions()?;
        let (labels, symbols) = (emissions.probs().rows(), emissions.probs().cols());
        let mass = q.label_mass();
        let mut grad = Matrix::zeros(labels, symbols);
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
        return model.emission_gradient_to_params(&grad);
    }
    let mut grad = model.posteriors(x)?.probs().clone();
    for (g, qv) in grad.as_mut_slice().iter_mut().zip(q.q.as_slice()) {
        *g -= qv;
    }
    model.logit_gradient_to_params(&grad, x)
}

/// Gradient descent from `model` until `max_steps` or a loss change below
/// `stop_delta`.
pub fn train(model: ModelSpec, loss: LossKind, task: &Task, config: &TrainConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if let LossKind::Hybrid(mode) = &loss {
        mode.validate()?;
    }
    let x = &task.input;
    let mut model = model;
    let mut loss = loss;
    let mut running_prior: Option<Vec<f64>> = match &loss {
        LossKind::Hybrid(PriorMode::Ema { .. }) => Some(softmax_prior(&model.posteriors(x)?)),
        _ => None,
    };
    let mut frozen: Option<(SoftAlignment, Option<Vec<f64>>)> = None;
    let mut curve = Vec::new();
    let mut convergence_step = None;
    let mut termination = Termination::MaxSteps;
    let mut last_good = None;

    for step in 0..config.max_steps {
        if let (LossKind::Hybrid(PriorMode::Ema { decay }), Some(prior)) = (&loss, running_prior.as_mut()) {
            let current = softmax_prior(&model.posteriors(x)?);
            for (p, c) in prior.iter_mut().zip(current) {
                *p = decay * *p + (1.0 - decay) * c;
            }
        }
        let refresh = config.realign_every.is_none_or(|k| step % k == 0);
        let (value, gradient, prior_gradient) = if refresh {
            let eval = match evaluate(&model, &loss, &task.topology, x, running_prior.as_deref()) {
                Ok(e) => e,
                Err(Error::ZeroMass | Error::ZeroPrior(_)) => {
                    termination = Termination::Diverged;
                    break;
                }
                Err(e) => return Err(e),
            };
            if config.realign_every.is_some() {
                frozen = Some((eval.soft_alignment.clone(), running_prior.clone()));
            }
            (eval.loss, eval.gradient, eval.prior_gradient)
        } else {
            let (q, prior) = frozen.as_ref().expect("frozen alignment set on first step");
            let value = loss_value(&model, &loss, &task.topology, x, prior.as_deref()).unwrap_or(f64::NAN);
            (value, frozen_gradient(&model, x, q)?, None)
        };
        if !value.is_finite() {
            termination = Termination::Diverged;
            break;
        }
        curve.push(value);
        last_good = Some((model.clone(), loss.clone(), running_prior.clone()));
        if convergence_step.is_none() && value < config.convergence_loss_threshold {
            convergence_step = Some(step);
        }
        if step > 0 && (value - curve[step - 1]).abs() < config.stop_delta {
            termination = Termination::Converged;
            break;
        }
        model = model.apply_gradient_step(&gradient, config.learning_rate)?;
        if let (LossKind::Hybrid(PriorMode::Learned { logits }), Some(g)) = (&mut loss, prior_gradient) {
            for (l, gv) in logits.iter_mut().zip(g) {
                *l -= config.learning_rate * gv;
            }
        }
        let prior_params = match &loss {
            LossKind::Hybrid(PriorMode::Learned { logits }) => logits.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            _ => 0.0,
        };
        if model.max_abs_param() > DIVERGENCE_PARAM_LIMIT || prior_params > DIVERGENCE_PARAM_LIMIT {
            termination = Termination::Diverged;
            break;
        }
    }

    if termination == Termination::Diverged {
        // Report the last state whose loss could be evaluated.
        if let Some((m, l, p)) = last_good {
            (model, loss, running_prior) = (m, l, p);
        }
    }
    finish(model, loss, task, running_prior, curve, convergence_step, termination)
}

fn finish(
    model: ModelSpec,
    loss: LossKind,
    task: &Task,
    running_prior: Option<Vec<f64>>,
    loss_curve: Vec<f64>,
    convergence_step: Option<usize>,
    termination: Termination,
) -> Result<ExperimentResult> {
    let x = &task.input;
    let final_posteriors = model_posteriors(&model, x)?;
    let eval: Evaluation = evaluate(&model, &loss, &task.topology, x, running_prior.as_deref())?;
    let peakiness = peakiness_report(&task.topology, &final_posteriors)?;
    let decoded = greedy_decode(&final_posteriors, task.blank);
    let dominant = dominant_label(&task.topology, task.frames())?.unwrap_or(task.blank);
    Ok(ExperimentResult {
        final_loss: eval.loss,
        mean_q_dominant: eval.soft_alignment.mean(dominant),
        final_soft_alignment: eval.soft_alignment,
        final_prior: eval.prior,
        sequence_error: sequence_error(&decoded, &task.target),
        decoded,
        peakiness,
        final_posteriors,
        final_model: model,
        final_loss_kind: loss,
        loss_curve,
        convergence_step,
        termination,
    })
}

/// CSV with header `step,loss`.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in curve.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioMode {
    /// Occupancy of blank under uniform posteriors, from exact counts.
    UniformExact,
    /// A memory model trained with CTC on the downscaled ping input.
    MemoryProxy,
}

impl RatioMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform_exact" => Ok(RatioMode::UniformExact),
            "memory_proxy" => Ok(RatioMode::MemoryProxy),
            other => Err(Error::Parse(format!("unknown ratio mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub frames: usize,
    pub mean_q_blank: f64,
    /// Only for trained runs.
    pub convergence_step: Option<usize>,
    /// Only for trained runs.
    pub peaky: Option<bool>,
}

/// `C(blank, T) / (T · C(T))`, the frame-averaged blank occupancy under
/// uniform posteriors.
pub fn uniform_mean_occupancy(topology: &LabelTopology, label: usize, frames: usize) -> Result<BigRational> {
    let table = count_alignments(topology, frames)?;
    Ok(BigRational::new(
        BigInt::from(table.per_label[label].clone()),
        BigInt::from(table.total.clone()) * BigInt::from(frames),
    ))
}

/// Blank occupancy per T for a CTC topology over `targets`.
pub fn ratio_sweep<S: AsRef<str> + Sync>(
    targets: &[S],
    blank: &str,
    frames: &[usize],
    mode: RatioMode,
    config: &TrainConfig,
    exec: Exec,
) -> Result<Vec<RatioRow>> {
    let topology = LabelTopology::ctc(targets, blank)?;
    let blank_index = topology.label_index(blank).expect("blank is in the alphabet");
    let target: Vec<usize> = targets
        .iter()
        .map(|t| topology.label_index(t.as_ref()).expect("targets are in the alphabet"))
        .collect();
    exec.map(frames, |&t| -> Result<RatioRow> {
        match mode {
            RatioMode::UniformExact => Ok(RatioRow {
                frames: t,
                mean_q_blank: uniform_mean_occupancy(&topology, blank_index, t)?
                    .to_f64()
                    .expect("finite ratio"),
                convergence_step: None,
                peaky: None,
            }),
            RatioMode::MemoryProxy => {
                if t < topology.min_length() {
                    return Err(Error::NoAlignment(t));
                }
                let task = Task {
                    topology: topology.clone(),
                    input: scaled_ping_input(t)?,
                    target: target.clone(),
                    blank: blank_index,
                };
                let model = ModelSpec::init_uniform(
                    ModelKind::Memory,
                    ModelDims {
                        labels: topology.num_labels(),
                        input_dim: task.input.dim(),
                        frames: t,
                        with_bias: false,
                    },
                );
                let result = train(model, LossKind::Ctc, &task, config)?;
                Ok(RatioRow {
                    frames: t,
                    mean_q_blank: result.final_soft_alignment.mean(blank_index),
                    convergence_step: result.convergence_step,
                    peaky: Some(result.peakiness.is_peaky_behavior),
                })
            }
        }
    })
    .into_iter()
    .collect()
}

/// CSV with header `T,mean_q_blank,convergence_step`.
pub fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut out = String::from("T,mean_q_blank,convergence_step\n");
    for r in rows {
        let step = r.convergence_step.map_or(String::new(), |s| s.to_string());
        out.push_str(&format!("{},{},{}\n", r.frames, r.mean_q_blank, step));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bias_task(frames: usize) -> Task {
        let topology = LabelTopology::ctc(&["a"], "B").unwrap();
        let map = [("a".to_string(), 0), ("B".to_string(), 1)].into_iter().collect();
        Task {
            topology,
            input: crate::signals::block_input(&[("B".to_string(), frames)], 2, &map).unwrap(),
            target: vec![0],
            blank: 1,
        }
    }

    fn dims(labels: usize, frames: usize) -> ModelDims {
        ModelDims { labels, input_dim: 2, frames, with_bias: false }
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { max_steps: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn one_bias_step_favours_dominant() {
        let task = bias_task(5);
        let config = TrainConfig { max_steps: 2, stop_delta: 0.0, ..TrainConfig::default() };
        let r = train(ModelSpec::init_uniform(ModelKind::Bias, dims(2, 5)), LossKind::Ctc, &task, &config).unwrap();
        let ModelSpec::Bias { b } = r.final_model else { panic!() };
        assert!(b[1] > b[0]);
        assert_eq!(r.loss_curve.len(), 2);
    }

    #[test]
    fn deterministic_curves() {
        let task = Task::single_label(2).unwrap();
        let config = TrainConfig { max_steps: 200, ..TrainConfig::default() };
        let model = ModelSpec::init_uniform(ModelKind::Ffnn, dims(2, 8));
        let a = train(model.clone(), LossKind::Ctc, &task, &config).unwrap();
        let b = train(model, LossKind::Ctc, &task, &config).unwrap();
        assert_eq!(
            a.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn divergence_is_reported() {
        let task = Task::single_label(1).unwrap();
        let config = TrainConfig { learning_rate: 1e9, max_steps: 50, ..TrainConfig::default() };
        let r = train(ModelSpec::init_uniform(ModelKind::Ffnn, dims(2, 4)), LossKind::Ctc, &task, &config).unwrap();
        assert_eq!(r.termination, Termination::Diverged);
    }

    #[test]
    fn convergence_step_consistent_with_curve() {
        let task = Task::single_label(1).unwrap();
        let config = TrainConfig { max_steps: 3000, ..TrainConfig::default() };
        let model = ModelSpec::init_uniform(ModelKind::Generative, dims(2, 4));
        let r = train(model, LossKind::Generative, &task, &config).unwrap();
        let step = r.convergence_step.unwrap();
        assert!(r.loss_curve[step] < 1.0);
        assert!(r.loss_curve[..step].iter().all(|&l| l >= 1.0));
    }

    #[test]
    fn uniform_exact_example() {
        let t = LabelTopology::ctc(&["a"], "B").unwrap();
        let r = uniform_mean_occupancy(&t, 1, 5).unwrap();
        assert_eq!(r, BigRational::new(BigInt::from(40), BigInt::from(75)));
        let rows = ratio_sweep(&["a"], "B", &[5], RatioMode::UniformExact, &TrainConfig::default(), Exec::Sequential).unwrap();
        assert!((rows[0].mean_q_blank - 40.0 / 75.0).abs() < 1e-15);
        assert!(ratio_sweep(&["a", "b", "c"], "B", &[2], RatioMode::UniformExact, &TrainConfig::default(), Exec::Sequential).is_err());
    }

    #[test]
    fn ema_and_learned_priors_train() {
        let task = Task::single_label(2).unwrap();
        let config = TrainConfig { max_steps: 100, ..TrainConfig::default() };
        let model = ModelSpec::init_uniform(ModelKind::Ffnn, dims(2, 8));
        let ema = train(model.clone(), LossKind::Hybrid(PriorMode::Ema { decay: 0.9 }), &task, &config).unwrap();
        assert_eq!(ema.loss_curve.len(), 100);
        let learned = train(model, LossKind::Hybrid(PriorMode::Learned { logits: vec![0.0, 0.0] }), &task, &config).unwrap();
        let LossKind::Hybrid(PriorMode::Learned { logits }) = learned.final_loss_kind else { panic!() };
        assert_ne!(logits, vec![0.0, 0.0]);
    }

    #[test]
    fn learned_prior_collapse_is_divergence() {
        let task = Task::single_label(4).unwrap();
        let model = ModelSpec::init_uniform(ModelKind::Ffnn, dims(2, 16));
        let loss = LossKind::Hybrid(PriorMode::Learned { logits: vec![0.0, 0.0] });
        let r = train(model, loss, &task, &TrainConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Diverged);
        let LossKind::Hybrid(PriorMode::Learned { logits }) = r.final_loss_kind else { panic!() };
        // the prior moves away from the dominant label
        assert!(logits[1] < logits[0]);
    }

    #[test]
    fn realign_mode_runs() {
        let task = Task::single_label(2).unwrap();
        let config = TrainConfig { max_steps: 300, realign_every: Some(10), ..TrainConfig::default() };
        let model = ModelSpec::init_uniform(ModelKind::Ffnn, dims(2, 8));
        let r = train(model, LossKind::Hybrid(PriorMode::StopGrad), &task, &config).unwrap();
        assert!(r.loss_curve.last().unwrap() < &r.loss_curve[0]);
    }
}
