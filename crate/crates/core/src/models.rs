//! Toy parametric models: bias-only, single-layer FFNN, per-frame memory,
//! the two-parameter reparameterization of the FFNN on one-hot input, and a
//! two-parameter generative emission model.
//!
//! Label columns follow the topology alphabet. The two-parameter models
//! assume two labels ordered `(a, B)` and two input symbols with `x_a` at hot
//! index 0 and `x_B` at hot index 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::{sigmoid, softmax, Matrix};
use crate::signals::InputSequence;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Per-frame label distribution, T × |S|.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    probs: Matrix,
}

impl PosteriorTable {
    pub fn new(probs: Matrix) -> Result<Self> {
        validate_rows(&probs, "posterior")?;
        Ok(Self { probs })
    }

    pub fn uniform(frames: usize, labels: usize) -> Self {
        Self {
            probs: Matrix::filled(frames, labels, 1.0 / labels as f64),
        }
    }

    /// One-hot rows following `alignment`.
    pub fn sharp(alignment: &[usize], labels: usize) -> Self {
        let mut probs = Matrix::zeros(alignment.len(), labels);
        for (t, &s) in alignment.iter().enumerate() {
            probs[(t, s)] = 1.0;
        }
        Self { probs }
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }

    pub fn labels(&self) -> usize {
        self.probs.cols()
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.probs[(t, s)]
    }

    pub fn log_probs(&self) -> Matrix {
        self.probs.map(f64::ln)
    }

    /// Smallest probability of `label` over all frames.
    pub fn min_prob(&self, label: usize) -> f64 {
        (0..self.frames())
            .map(|t| self.get(t, label))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Emission distributions p(x|s), |S| × |X|.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    probs: Matrix,
}

impl EmissionTable {
    pub fn new(probs: Matrix) -> Result<Self> {
        validate_rows(&probs, "emission")?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn get(&self, label: usize, symbol: usize) -> f64 {
        self.probs[(label, symbol)]
    }

    /// Per-frame `log p(x_t | s)`, T × |S|.
    pub fn frame_log_scores(&self, x: &InputSequence) -> Result<Matrix> {
        let labels = self.probs.rows();
        let mut out = Matrix::zeros(x.len(), labels);
        for (t, &h) in x.hot.iter().enumerate() {
            if h >= self.probs.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "input symbol {h} outside emission alphabet of size {}",
                    self.probs.cols()
                )));
            }
            for s in 0..labels {
                out[(t, s)] = self.probs[(s, h)].ln();
            }
        }
        Ok(out)
    }
}

fn validate_rows(probs: &Matrix, what: &str) -> Result<()> {
    for (r, row) in probs.iter_rows().enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInput(format!("{what} row {r} has an entry outside [0,1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("{what} row {r} sums to {sum}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Bias,
    Ffnn,
    Memory,
    TwoParam,
    Generative,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bias => "bias",
            ModelKind::Ffnn => "ffnn",
            ModelKind::Memory => "memory",
            ModelKind::TwoParam => "two_param",
            ModelKind::Generative => "generative",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "bias" => ModelKind::Bias,
            "ffnn" => ModelKind::Ffnn,
            "memory" => ModelKind::Memory,
            "two_param" => ModelKind::TwoParam,
            "generative" => ModelKind::Generative,
            other => return Err(Error::Parse(format!("unknown model kind `{other}`"))),
        })
    }
}

/// Shape information needed to build a uniform model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub labels: usize,
    pub input_dim: usize,
    pub frames: usize,
    pub with_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Bias { b: Vec<f64> },
    /// `softmax(x_t W + b)`, `W` is D_x × |S|; `b` is only used with `with_bias`.
    Ffnn { w: Matrix, with_bias: bool, b: Vec<f64> },
    /// One logit row per frame.
    Memory { m: Matrix },
    /// `softmax((θ_a, −θ_a))` on `x_a` frames, `softmax((−θ_B, θ_B))` on `x_B` frames.
    TwoParam { theta_a: f64, theta_b: f64 },
    /// `p(·|a) = softmax((θ_a, −θ_a))`, `p(·|B) = softmax((−θ_B, θ_B))` over `(x_a, x_B)`.
    Generative { theta_a: f64, theta_b: f64 },
}

impl ModelSpec {
    /// All parameters zero, i.e. uniform output distributions.
    pub fn init_uniform(kind: ModelKind, dims: ModelDims) -> Self {
        match kind {
            ModelKind::Bias => ModelSpec::Bias {
                b: vec![0.0; dims.labels],
            },
            ModelKind::Ffnn => ModelSpec::Ffnn {
                w: Matrix::zeros(dims.input_dim, dims.labels),
                with_bias: dims.with_bias,
                b: vec![0.0; dims.labels],
            },
            ModelKind::Memory => ModelSpec::Memory {
                m: Matrix::zeros(dims.frames, dims.labels),
            },
            ModelKind::TwoParam => ModelSpec::TwoParam {
                theta_a: 0.0,
                theta_b: 0.0,
            },
            ModelKind::Generative => ModelSpec::Generative {
                theta_a: 0.0,
                theta_b: 0.0,
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Bias { .. } => ModelKind::Bias,
            ModelSpec::Ffnn { .. } => ModelKind::Ffnn,
            ModelSpec::Memory { .. } => ModelKind::Memory,
            ModelSpec::TwoParam { .. } => ModelKind::TwoParam,
            ModelSpec::Generative { .. } => ModelKind::Generative,
        }
    }

    pub fn is_generative(&self) -> bool {
        matches!(self, ModelSpec::Generative { .. })
    }

    /// Flat parameter vector; gradients use the same layout.
    pub fn params(&self) -> Vec<f64> {
        match self {
            ModelSpec::Bias { b } => b.clone(),
            ModelSpec::Ffnn { w, with_bias, b } => {
                let mut p = w.as_slice().to_vec();
                if *with_bias {
                    p.extend_from_slice(b);
                }
                p
            }
            ModelSpec::Memory { m } => m.as_slice().to_vec(),
            ModelSpec::TwoParam { theta_a, theta_b } | ModelSpec::Generative { theta_a, theta_b } => {
                vec![*theta_a, *theta_b]
            }
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            ModelSpec::Bias { b } => b.len(),
            ModelSpec::Ffnn { w, with_bias, b } => w.as_slice().len() + if *with_bias { b.len() } else { 0 },
            ModelSpec::Memory { m } => m.as_slice().len(),
            ModelSpec::TwoParam { .. } | ModelSpec::Generative { .. } => 2,
        }
    }

    /// Same variant and shape with `params` substituted.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        Ok(match self {
            ModelSpec::Bias { .. } => ModelSpec::Bias { b: params.to_vec() },
            ModelSpec::Ffnn { w, with_bias, b } => {
                let n = w.as_slice().len();
                ModelSpec::Ffnn {
                    w: Matrix::from_vec(w.rows(), w.cols(), params[..n].to_vec()),
                    with_bias: *with_bias,
                    b: if *with_bias { params[n..].to_vec() } else { b.clone() },
                }
            }
            ModelSpec::Memory { m } => ModelSpec::Memory {
                m: Matrix::from_vec(m.rows(), m.cols(), params.to_vec()),
            },
            ModelSpec::TwoParam { .. } => ModelSpec::TwoParam {
                theta_a: params[0],
                theta_b: params[1],
            },
            ModelSpec::Generative { .. } => ModelSpec::Generative {
                theta_a: params[0],
                theta_b: params[1],
            },
        })
    }

    /// Plain gradient descent: `θ ← θ − lr·∇`.
    pub fn apply_gradient_step(&self, gradient: &[f64], learning_rate: f64) -> Result<Self> {
        let params: Vec<f64> = self
            .params()
            .iter()
            .zip(gradient)
            .map(|(p, g)| p - learning_rate * g)
            .collect();
        if gradient.len() != params.len() || params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries, model has {} parameters",
                gradient.len(),
                self.num_params()
            )));
        }
        self.with_params(&params)
    }

    /// Largest absolute parameter value.
    pub fn max_abs_param(&self) -> f64 {
        self.params().iter().fold(0.0, |m, p| m.max(p.abs()))
    }

    /// `(θ_a, θ_B)` of the two-parameter model producing the same
    /// posteriors on the one-hot `(x_a, x_B)` input, for models over two
    /// labels `(a, B)` with two input symbols.
    pub fn effective_thetas(&self) -> Option<(f64, f64)> {
        match self {
            ModelSpec::TwoParam { theta_a, theta_b } | ModelSpec::Generative { theta_a, theta_b } => {
                Some((*theta_a, *theta_b))
            }
            ModelSpec::Ffnn { w, with_bias, b } if w.rows() == 2 && w.cols() == 2 => {
                let (b0, b1) = if *with_bias { (b[0], b[1]) } else { (0.0, 0.0) };
                let za = (w[(0, 0)] + b0) - (w[(0, 1)] + b1);
                let zb = (w[(1, 1)] + b1) - (w[(1, 0)] + b0);
                Some((za / 2.0, zb / 2.0))
            }
            _ => None,
        }
    }

    /// Output-layer logits, T × |S|.
    pub fn logits(&self, x: &InputSequence) -> Result<Matrix> {
        let frames = x.len();
        match self {
            ModelSpec::Bias { b } => {
                let mut out = Matrix::zeros(frames, b.len());
                for t in 0..frames {
                    out.row_mut(t).copy_from_slice(b);
                }
                Ok(out)
            }
            ModelSpec::Ffnn { w, with_bias, b } => {
                if x.dim() != w.rows() {
                    return Err(Error::DimensionMismatch(format!(
                        "input dim {} but W has {} rows",
                        x.dim(),
                        w.rows()
                    )));
                }
                let mut out = Matrix::zeros(frames, w.cols());
                for t in 0..frames {
                    let xt = x.frames.row(t);
                    for s in 0..w.cols() {
                        let mut z = if *with_bias { b[s] } else { 0.0 };
                        for (d, &xv) in xt.iter().enumerate() {
                            z += xv * w[(d, s)];
                        }
                        out[(t, s)] = z;
                    }
                }
                Ok(out)
            }
            ModelSpec::Memory { m } => {
                if m.rows() != frames {
                    return Err(Error::DimensionMismatch(format!(
                        "memory model has {} frames, input has {frames}",
                        m.rows()
                    )));
                }
                Ok(m.clone())
            }
            ModelSpec::TwoParam { theta_a, theta_b } => {
                check_two_symbol_input(x)?;
                let mut out = Matrix::zeros(frames, 2);
                for (t, &h) in x.hot.iter().enumerate() {
                    let z = if h == 0 { [*theta_a, -theta_a] } else { [-theta_b, *theta_b] };
                    out.row_mut(t).copy_from_slice(&z);
                }
                Ok(out)
            }
            ModelSpec::Generative { .. } => Err(Error::Incompatible(
                "the generative model has no posterior logits".into(),
            )),
        }
    }

    pub fn posteriors(&self, x: &InputSequence) -> Result<PosteriorTable> {
        let logits = self.logits(x)?;
        let mut probs = Matrix::zeros(logits.rows(), logits.cols());
        for t in 0..logits.rows() {
            probs.row_mut(t).copy_from_slice(&softmax(logits.row(t)));
        }
        Ok(PosteriorTable { probs })
    }

    /// Chain a gradient w.r.t. the logits (T × |S|) into parameter space.
    pub fn logit_gradient_to_params(&self, grad: &Matrix, x: &InputSequence) -> Result<Vec<f64>> {
        match self {
            ModelSpec::Bias { b } => {
                let mut g = vec![0.0; b.len()];
                for row in grad.iter_rows() {
                    for (gs, r) in g.iter_mut().zip(row) {
                        *gs += r;
                    }
                }
                Ok(g)
            }
            ModelSpec::Ffnn { w, with_bias, .. } => {
                let mut gw = Matrix::zeros(w.rows(), w.cols());
                let mut gb = vec![0.0; w.cols()];
                for t in 0..grad.rows() {
                    let xt = x.frames.row(t);
                    for s in 0..w.cols() {
                        let gts = grad[(t, s)];
                        gb[s] += gts;
                        for (d, &xv) in xt.iter().enumerate() {
                            gw[(d, s)] += xv * gts;
                        }
                    }
                }
                let mut g = gw.into_vec();
                if *with_bias {
                    g.extend(gb);
                }
                Ok(g)
            }
            ModelSpec::Memory { .. } => Ok(grad.as_slice().to_vec()),
            ModelSpec::TwoParam { .. } => {
                check_two_symbol_input(x)?;
                let (mut ga, mut gb) = (0.0, 0.0);
                for (t, &h) in x.hot.iter().enumerate() {
                    let d = grad[(t, 0)] - grad[(t, 1)];
                    if h == 0 {
                        ga += d;
                    } else {
                        gb -= d;
                    }
                }
                Ok(vec![ga, gb])
            }
            ModelSpec::Generative { .. } => Err(Error::Incompatible(
                "the generative model has no posterior logits".into(),
            )),
        }
    }

    pub fn emissions(&self) -> Result<EmissionTable> {
        match self {
            ModelSpec::Generative { theta_a, theta_b } => {
                let pa = sigmoid(2.0 * theta_a);
                let pb = sigmoid(2.0 * theta_b);
                Ok(EmissionTable {
                    probs: Matrix::from_rows(&[vec![pa, 1.0 - pa], vec![1.0 - pb, pb]]),
                })
            }
            _ => Err(Error::Incompatible("only the generative model has emissions".into())),
        }
    }

    /// Chain a gradient w.r.t. emission logits (|S| × |X|) into `(θ_a, θ_B)`.
    pub fn emission_gradient_to_params(&self, grad: &Matrix) -> Result<Vec<f64>> {
        match self {
            ModelSpec::Generative { .. } => Ok(vec![
                grad[(0, 0)] - grad[(0, 1)],
                grad[(1, 1)] - grad[(1, 0)],
            ]),
            _ => Err(Error::Incompatible("only the generative model has emissions".into())),
        }
    }

    /// Flat `key=value` lines for checkpoints.
    pub fn to_kv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = format!("kind={}\n", self.kind().name());
        match self {
            ModelSpec::Bias { b } => writeln!(out, "b={}", join(b)),
            ModelSpec::Ffnn { w, with_bias, b } => writeln!(
                out,
                "rows={}\ncols={}\nwith_bias={}\nw={}\nb={}",
                w.rows(),
                w.cols(),
                with_bias,
                join(w.as_slice()),
                join(b)
            ),
            ModelSpec::Memory { m } => {
                writeln!(out, "rows={}\ncols={}\nm={}", m.rows(), m.cols(), join(m.as_slice()))
            }
            ModelSpec::TwoParam { theta_a, theta_b } | ModelSpec::Generative { theta_a, theta_b } => {
                writeln!(out, "theta_a={theta_a:?}\ntheta_b={theta_b:?}")
            }
        }
        .expect("writing to a String");
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Parse(format!("missing key `{k}`")));
        let floats = |k: &str| -> Result<Vec<f64>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}"))))
                .collect()
        };
        let float = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let usize_of = |k: &str| -> Result<usize> {
            get(k)?.parse::<usize>().map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let shaped = |k: &str| -> Result<Matrix> {
            let (rows, cols) = (usize_of("rows")?, usize_of("cols")?);
            let data = floats(k)?;
            if data.len() != rows * cols {
                return Err(Error::Parse(format!("{k} has {} values, expected {}", data.len(), rows * cols)));
            }
            Ok(Matrix::from_vec(rows, cols, data))
        };
        let model = match ModelKind::from_name(get("kind")?)? {
            ModelKind::Bias => ModelSpec::Bias { b: floats("b")? },
            ModelKind::Ffnn => {
                let w = shaped("w")?;
                let b = floats("b")?;
                if b.len() != w.cols() {
                    return Err(Error::Parse("bias length must equal cols".into()));
                }
                let with_bias = get("with_bias")?
                    .parse::<bool>()
                    .map_err(|e| Error::Parse(format!("with_bias: {e}")))?;
                ModelSpec::Ffnn { w, with_bias, b }
            }
            ModelKind::Memory => ModelSpec::Memory { m: shaped("m")? },
            ModelKind::TwoParam => ModelSpec::TwoParam {
                theta_a: float("theta_a")?,
                theta_b: float("theta_b")?,
            },
            ModelKind::Generative => ModelSpec::Generative {
                theta_a: float("theta_a")?,
                theta_b: float("theta_b")?,
            },
        };
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Parse("parameters must be finite".into()));
        }
        Ok(model)
    }
}

fn check_two_symbol_input(x: &InputSequence) -> Result<()> {
    if x.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "two-parameter model needs a 2-dim one-hot input, got dim {}",
            x.dim()
        )));
    }
    Ok(())
}
