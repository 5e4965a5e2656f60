//! Loss and gradient maps over the two-parameter models, and gradient-flow
//! trajectories on them.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::losses::{evaluate, LossKind, PriorMode};
use crate::models::ModelSpec;
use crate::signals::{single_label_input, InputSequence};
use crate::topology::LabelTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandscapeLoss {
    Ctc,
    HybridSoftmaxPrior,
    HybridStopGradPrior,
    Generative,
}

impl LandscapeLoss {
    pub const ALL: [LandscapeLoss; 4] = [
        LandscapeLoss::Ctc,
        LandscapeLoss::HybridSoftmaxPrior,
        LandscapeLoss::HybridStopGradPrior,
        LandscapeLoss::Generative,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == name)
            .ok_or_else(|| Error::Parse(format!("unknown landscape loss `{name}`")))
    }

    pub fn name(self) -> &'static str {
        self.loss_kind().name()
    }

    pub fn loss_kind(self) -> LossKind {
        match self {
            LandscapeLoss::Ctc => LossKind::Ctc,
            LandscapeLoss::HybridSoftmaxPrior => LossKind::Hybrid(PriorMode::Softmax),
            LandscapeLoss::HybridStopGradPrior => LossKind::Hybrid(PriorMode::StopGrad),
            LandscapeLoss::Generative => LossKind::Generative,
        }
    }

    pub fn model(self, theta_a: f64, theta_b: f64) -> ModelSpec {
        match self {
            LandscapeLoss::Generative => ModelSpec::Generative { theta_a, theta_b },
            _ => ModelSpec::TwoParam { theta_a, theta_b },
        }
    }
}

/// Loss, gradient and the input they are evaluated on.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub loss: LandscapeLoss,
    pub topology: LabelTopology,
    pub input: InputSequence,
}

impl Landscape {
    /// `B* a+ B*` with the `B^n a^2n B^n` input.
    pub fn single_label(loss: LandscapeLoss, n: usize) -> Result<Self> {
        Ok(Self {
            loss,
            topology: LabelTopology::ctc(&["a"], "B")?,
            input: single_label_input(n)?,
        })
    }

    /// Loss and `(∂/∂θ_a, ∂/∂θ_B)`.
    pub fn evaluate(&self, theta_a: f64, theta_b: f64) -> Result<(f64, [f64; 2])> {
        let e = evaluate(
            &self.loss.model(theta_a, theta_b),
            &self.loss.loss_kind(),
            &self.topology,
            &self.input,
            None,
        )?;
        Ok((e.loss, [e.gradient[0], e.gradient[1]]))
    }
}

/// The same axis for `θ_a` and `θ_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { min: -6.0, max: 6.0, step: 0.1 }
    }
}

impl Grid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) || !(step > 0.0) || max < min {
            return Err(Error::InvalidInput(format!("bad grid {min}:{max}:{step}")));
        }
        Ok(Self { min, max, step })
    }

    /// `MIN:MAX:STEP`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let [min, max, step] = parts.as_slice() else {
            return Err(Error::Parse(format!("grid `{text}` is not MIN:MAX:STEP")));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}` in grid")));
        Self::new(num(min)?, num(max)?, num(step)?)
    }

    /// Sample points; values within rounding of zero are snapped to 0.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| {
                let v = self.min + i as f64 * self.step;
                if v.abs() < self.step * 1e-9 {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub theta_a: f64,
    pub theta_b: f64,
    pub loss: f64,
    pub grad_a: f64,
    pub grad_b: f64,
}

impl Cell {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.grad_a.is_finite() && self.grad_b.is_finite()
    }
}

/// Cells are row-major: `θ_a` outer, `θ_B` inner.
#[derive(Debug, Clone)]
pub struct GridSweep {
    pub loss: LandscapeLoss,
    pub grid: Grid,
    pub axis: Vec<f64>,
    pub cells: Vec<Cell>,
}

pub fn sweep(landscape: &Landscape, grid: Grid, exec: Exec) -> GridSweep {
    let axis = grid.values();
    let n = axis.len();
    let cells = exec.map_range(n * n, |k| {
        let (theta_a, theta_b) = (axis[k / n], axis[k % n]);
        let (loss, [grad_a, grad_b]) = landscape
            .evaluate(theta_a, theta_b)
            .unwrap_or((f64::NAN, [f64::NAN, f64::NAN]));
        Cell { theta_a, theta_b, loss, grad_a, grad_b }
    });
    GridSweep { loss: landscape.loss, grid, axis, cells }
}

/// `v` rounded to `digits` significant digits, printed in shortest form.
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v).parse().expect("valid float");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

impl GridSweep {
    pub fn side(&self) -> usize {
        self.axis.len()
    }

    pub fn cell(&self, ia: usize, ib: usize) -> &Cell {
        &self.cells[ia * self.side() + ib]
    }

    pub fn non_finite(&self) -> Vec<&Cell> {
        self.cells.iter().filter(|c| !c.is_finite()).collect()
    }

    /// Header `theta_a,theta_B,loss,grad_a,grad_B`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_a,theta_B,loss,grad_a,grad_B\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                format_sig(c.theta_a, 6),
                format_sig(c.theta_b, 6),
                format_sig(c.loss, 6),
                format_sig(c.grad_a, 6),
                format_sig(c.grad_b, 6)
            );
        }
        out
    }

    /// Largest disagreement between recorded gradients and central
    /// differences of neighbouring recorded losses, over interior cells.
    /// The error is relative to `max(|g|, |fd|, 1)`.
    pub fn max_fd_error(&self) -> f64 {
        let n = self.side();
        let mut worst = 0.0f64;
        for ia in 1..n.saturating_sub(1) {
            for ib in 1..n - 1 {
                let c = self.cell(ia, ib);
                let fa = (self.cell(ia + 1, ib).loss - self.cell(ia - 1, ib).loss)
                    / (self.axis[ia + 1] - self.axis[ia - 1]);
                let fb = (self.cell(ia, ib + 1).loss - self.cell(ia, ib - 1).loss)
                    / (self.axis[ib + 1] - self.axis[ib - 1]);
                for (g, fd) in [(c.grad_a, fa), (c.grad_b, fb)] {
                    let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1.0);
                    worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
                }
            }
        }
        worst
    }

    /// Cells on `θ_a = 0, θ_B > 0` and `θ_a < 0, θ_B = 0` whose negative
    /// gradient leaves the closed quadrant `θ_a ≤ 0, θ_B ≥ 0`.
    pub fn half_line_violations(&self) -> Vec<Cell> {
        self.half_line_cells()
            .into_iter()
            .filter(|c| !(c.grad_a >= 0.0 && c.grad_b <= 0.0))
            .collect()
    }

    pub fn half_line_cells(&self) -> Vec<Cell> {
        self.cells
            .iter()
            .filter(|c| (c.theta_a == 0.0 && c.theta_b > 0.0) || (c.theta_a < 0.0 && c.theta_b == 0.0))
            .copied()
            .collect()
    }

    /// Grayscale loss heatmap (darker is lower) with arrows along the
    /// negative gradient on a subsampled lattice.
    pub fn to_svg(&self) -> String {
        const CELL: f64 = 4.0;
        const MARGIN: f64 = 40.0;
        let n = self.side();
        let size = n as f64 * CELL;
        let finite: Vec<f64> = self.cells.iter().filter(|c| c.is_finite()).map(|c| c.loss).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).ln_1p().max(1e-12);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#,
            w = size + 2.0 * MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="red"/></marker></defs>"#
        );
        let _ = writeln!(svg, r#"<g transform="translate({MARGIN},{MARGIN})">"#);
        // θ_B increases upwards.
        let y_of = |ib: usize| (n - 1 - ib) as f64 * CELL;
        for ia in 0..n {
            for ib in 0..n {
                let c = self.cell(ia, ib);
                let fill = if c.is_finite() {
                    let g = (255.0 * (c.loss - lo).ln_1p() / span).round() as u8;
                    format!("rgb({g},{g},{g})")
                } else {
                    "magenta".to_string()
                };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                    ia as f64 * CELL,
                    y_of(ib)
                );
            }
        }
        let stride = (n / 15).max(1);
        let len = stride as f64 * CELL * 0.8;
        for ia in (stride / 2..n).step_by(stride) {
            for ib in (stride / 2..n).step_by(stride) {
                let c = self.cell(ia, ib);
                let norm = c.grad_a.hypot(c.grad_b);
                if !c.is_finite() || norm < 1e-12 {
                    continue;
                }
                let (x0, y0) = (ia as f64 * CELL + CELL / 2.0, y_of(ib) + CELL / 2.0);
                let (dx, dy) = (-c.grad_a / norm * len, c.grad_b / norm * len);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{:.2}" stroke="red" stroke-width="1" marker-end="url(#head)"/>"#,
                    x0 + dx,
                    y0 + dy
                );
            }
        }
        let (a0, a1) = (self.axis[0], self.axis[n - 1]);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">theta_a [{a0}, {a1}]</text>"#,
            size / 2.0,
            size + 25.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="-25" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 -25 {})">theta_B [{a0}, {a1}]</text>"#,
            size / 2.0,
            size / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="-15" font-size="14" text-anchor="middle">{}</text>"#,
            size / 2.0,
            self.loss.name()
        );
        svg.push_str("</g>\n</svg>\n");
        svg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `θ_a < 0, θ_B > 0`.
    Peaky,
    /// `θ_a > 0, θ_B > 0`.
    Optimal,
    Other,
}

impl Region {
    pub fn classify(theta_a: f64, theta_b: f64) -> Self {
        match (theta_a, theta_b) {
            (a, b) if a < 0.0 && b > 0.0 => Region::Peaky,
            (a, b) if a > 0.0 && b > 0.0 => Region::Optimal,
            _ => Region::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Peaky => "peaky",
            Region::Optimal => "optimal",
            Region::Other => "other",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<(f64, f64)>,
    pub terminal_region: Region,
}

impl Trajectory {
    pub fn end(&self) -> (f64, f64) {
        *self.points.last().expect("trajectory holds its start")
    }
}

/// Explicit Euler descent from `start`.
pub fn follow_gradient(landscape: &Landscape, start: (f64, f64), learning_rate: f64, steps: usize) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(steps + 1);
    let (mut a, mut b) = start;
    points.push((a, b));
    for _ in 0..steps {
        let (_, [ga, gb]) = landscape.evaluate(a, b)?;
        a -= learning_rate * ga;
        b -= learning_rate * gb;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput("gradient descent left the finite range".into()));
        }
        points.push((a, b));
    }
    Ok(Trajectory { points, terminal_region: Region::classify(a, b) })
}
