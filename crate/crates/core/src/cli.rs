//! Command-line surface shared by the `fullsum` binary and the tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::load_config;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::{follow_gradient, sweep, Grid, Landscape, LandscapeLoss};
use crate::topology::{count_alignments, dominant_frame_count, dominant_label, LabelTopology};
use crate::training::{loss_curve_csv, ratio_csv, ratio_sweep, train, ExperimentResult, RatioMode, TrainConfig};
use crate::verify::{run_suite, Suite, SuiteReport, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fullsum", version, about = "Full-sum training criteria, alignment counting and peakiness analysis")]
pub struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact alignment counts of a topology.
    Count {
        #[arg(long)]
        topology: String,
        #[arg(long = "T")]
        frames: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run an invariant suite.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "Tmax")]
        t_max: Option<usize>,
        /// Random draws per pairing (gradcheck).
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
    },
    /// Train the experiments of a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep a two-parameter loss over a grid.
    Landscape {
        #[arg(long)]
        loss: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "-6:6:0.1", allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Learning rate of the trajectory from the origin.
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
    /// Mean blank occupancy against sequence length for targets (a, b, c).
    Ratio {
        /// Comma-separated lengths and `LO..HI` ranges.
        #[arg(long = "T-list")]
        t_list: String,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        csv: PathBuf,
        /// Steps per trained run (memory_proxy).
        #[arg(long, default_value_t = TrainConfig::default().max_steps)]
        max_steps: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutcome {
    pub code: i32,
    pub artifacts: Vec<PathBuf>,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutcome {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, stderr: message.into(), ..Self::default() }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, S>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                CommandOutcome { stdout: text, ..CommandOutcome::default() }
            } else {
                CommandOutcome::usage(text)
            }
        }
    }
}

pub fn run(cli: Cli) -> CommandOutcome {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let mut out = CommandOutcome::default();
    let result = match cli.command {
        Command::Count { topology, frames, csv } => cmd_count(&topology, frames, csv.as_deref(), &mut out),
        Command::Verify { suite, n, t_max, draws, seed } => {
            let options = VerifyOptions { n, t_max, draws, seed, exec };
            cmd_verify(&suite, &options, &mut out)
        }
        Command::Train { config, out: dir } => cmd_train(&config, &dir, &mut out),
        Command::Landscape { loss, n, grid, csv, svg, lr, steps } => {
            cmd_landscape(&loss, n, &grid, &csv, svg.as_deref(), lr, steps, exec, &mut out)
        }
        Command::Ratio { t_list, mode, csv, max_steps } => cmd_ratio(&t_list, &mode, &csv, max_steps, exec, &mut out),
    };
    if let Err(e) = result {
        out.code = EXIT_USAGE;
        let _ = writeln!(out.stderr, "error: {e}");
    }
    out
}

fn write_artifact(path: &Path, contents: &str, out: &mut CommandOutcome) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
    out.artifacts.push(path.to_path_buf());
    Ok(())
}

fn cmd_count(spec: &str, frames: usize, csv: Option<&Path>, out: &mut CommandOutcome) -> Result<()> {
    let top = LabelTopology::parse(spec)?;
    let table = count_alignments(&top, frames)?;
    let s = &mut out.stdout;
    let _ = writeln!(s, "topology: {top}");
    let _ = writeln!(s, "T: {frames}");
    let _ = writeln!(s, "total: {}", table.total);
    for (label, count) in table.per_label.iter().enumerate() {
        let _ = writeln!(s, "count[{}]: {count}", top.label_name(label));
    }
    match dominant_label(&top, frames)? {
        Some(d) => {
            let _ = writeln!(s, "dominant: {}", top.label_name(d));
            let _ = writeln!(s, "dominant_frames: {}", dominant_frame_count(&top, d, frames)?);
        }
        None => {
            let _ = writeln!(s, "dominant: none");
        }
    }
    if let Some(path) = csv {
        write_artifact(path, &table.to_csv(&top), out)?;
    }
    Ok(())
}

fn cmd_verify(suite: &str, options: &VerifyOptions, out: &mut CommandOutcome) -> Result<()> {
    let report = run_suite(Suite::from_name(suite)?, options)?;
    let _ = writeln!(out.stdout, "{report}");
    out.code = report_exit_code(&report);
    Ok(())
}

pub fn report_exit_code(report: &SuiteReport) -> i32 {
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Header of the per-experiment summary CSV.
pub const SUMMARY_HEADER: &str = "name,model,loss,steps,termination,final_loss,convergence_step,sequence_error,peaky,\
dominant,p_dominant_min,p_dominant_mean,mean_q_dominant,theta_a,theta_B,decoded";

fn summary_row(name: &str, r: &ExperimentResult, task: &crate::training::Task) -> Result<String> {
    let top = &task.topology;
    let dominant = dominant_label(top, task.frames())?.unwrap_or(task.blank);
    let p = &r.final_posteriors;
    let mean_p = (0..p.frames()).map(|t| p.get(t, dominant)).sum::<f64>() / p.frames() as f64;
    let (ta, tb) = r
        .final_model
        .effective_thetas()
        .map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
    let decoded: Vec<&str> = r.decoded.iter().map(|&l| top.label_name(l)).collect();
    Ok(format!(
        "{name},{},{},{},{},{},{},{},{},{},{},{},{},{ta},{tb},{}",
        r.final_model.kind().name(),
        r.final_loss_kind.name(),
        r.loss_curve.len(),
        r.termination.name(),
        r.final_loss,
        r.convergence_step.map_or(String::new(), |s| s.to_string()),
        r.sequence_error,
        r.peakiness.is_peaky_behavior,
        top.label_name(dominant),
        p.min_prob(dominant),
        mean_p,
        r.mean_q_dominant,
        decoded.join(" "),
    ))
}

fn cmd_train(config: &Path, dir: &Path, out: &mut CommandOutcome) -> Result<()> {
    let experiments = load_config(config)?
        .iter()
        .map(|c| c.build())
        .collect::<Result<Vec<_>>>()?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for e in &experiments {
        let r = train(e.model.clone(), e.loss.clone(), &e.task, &e.config)?;
        let top = &e.task.topology;
        write_artifact(&dir.join(format!("{}_loss.csv", e.name)), &loss_curve_csv(&r.loss_curve), out)?;
        write_artifact(&dir.join(format!("{}_model.txt", e.name)), &r.final_model.to_kv(), out)?;
        write_artifact(&dir.join(format!("{}_peakiness.txt", e.name)), &r.peakiness.to_kv(top), out)?;
        write_artifact(
            &dir.join(format!("{}_soft_alignment.csv", e.name)),
            &r.final_soft_alignment.to_csv(top),
            out,
        )?;
        let row = summary_row(&e.name, &r, &e.task)?;
        summary.push_str(&row);
        summary.push('\n');
        let s = &mut out.stdout;
        let _ = writeln!(s, "experiment {}", e.name);
        let _ = writeln!(s, "  steps: {} ({})", r.loss_curve.len(), r.termination.name());
        let _ = writeln!(s, "  final loss: {}", r.final_loss);
        let dominant = dominant_label(top, e.task.frames())?.unwrap_or(e.task.blank);
        let _ = writeln!(
            s,
            "  min p({}): {}",
            top.label_name(dominant),
            r.final_posteriors.min_prob(dominant)
        );
        let _ = writeln!(s, "  viterbi: {}", r.peakiness.viterbi_alignment.display(top));
        let _ = writeln!(s, "  peaky: {}", r.peakiness.is_peaky_behavior);
        let _ = writeln!(s, "  sequence error: {}", r.sequence_error);
        if let Some((a, b)) = r.final_model.effective_thetas() {
            let _ = writeln!(s, "  theta_a: {a}, theta_B: {b}");
        }
    }
    write_artifact(&dir.join("summary.csv"), &summary, out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_landscape(
    loss: &str,
    n: usize,
    grid: &str,
    csv: &Path,
    svg: Option<&Path>,
    lr: f64,
    steps: usize,
    exec: Exec,
    out: &mut CommandOutcome,
) -> Result<()> {
    let loss = LandscapeLoss::from_name(loss)?;
    let grid = Grid::parse(grid)?;
    let landscape = Landscape::single_label(loss, n)?;
    let result = sweep(&landscape, grid, exec);
    write_artifact(csv, &result.to_csv(), out)?;
    if let Some(path) = svg {
        write_artifact(path, &result.to_svg(), out)?;
    }
    let trajectory = follow_gradient(&landscape, (0.0, 0.0), lr, steps)?;
    let (a, b) = trajectory.end();
    let s = &mut out.stdout;
    let _ = writeln!(s, "loss: {}", loss.name());
    let _ = writeln!(s, "cells: {} ({} non-finite)", result.cells.len(), result.non_finite().len());
    let _ = writeln!(s, "origin trajectory end: theta_a={a}, theta_B={b}");
    let _ = writeln!(s, "terminal region: {}", trajectory.terminal_region.name());
    if loss == LandscapeLoss::Ctc {
        let _ = writeln!(
            s,
            "half-line violations: {} of {}",
            result.half_line_violations().len(),
            result.half_line_cells().len()
        );
    }
    Ok(())
}

/// `5,10,20` and `6..120` forms, mixed freely.
pub fn parse_t_list(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad T list `{text}`"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if hi < lo {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn cmd_ratio(t_list: &str, mode: &str, csv: &Path, max_steps: usize, exec: Exec, out: &mut CommandOutcome) -> Result<()> {
    let frames = parse_t_list(t_list)?;
    let mode = RatioMode::from_name(mode)?;
    let config = TrainConfig { max_steps, ..TrainConfig::default() };
    let rows = ratio_sweep(&["a", "b", "c"], "B", &frames, mode, &config, exec)?;
    write_artifact(csv, &ratio_csv(&rows), out)?;
    let s = &mut out.stdout;
    let _ = writeln!(s, "T mean_q_blank convergence_step peaky");
    for r in &rows {
        let _ = writeln!(
            s,
            "{} {:.6} {} {}",
            r.frames,
            r.mean_q_blank,
            r.convergence_step.map_or("-".to_string(), |v| v.to_string()),
            r.peaky.map_or("-".to_string(), |v| v.to_string())
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_lists() {
        assert_eq!(parse_t_list("5,10").unwrap(), vec![5, 10]);
        assert_eq!(parse_t_list("6..8, 20").unwrap(), vec![6, 7, 8, 20]);
        assert!(parse_t_list("").is_err());
        assert!(parse_t_list("9..3").is_err());
        assert!(parse_t_list("x").is_err());
    }

    #[test]
    fn count_output() {
        let out = run_from_args(["fullsum", "count", "--topology", "B* a+ B*", "--T", "5"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        assert!(out.stdout.contains("total: 15"));
        assert!(out.stdout.contains("dominant: B"));
        let out = run_from_args(["fullsum", "count", "--topology", "B* a+ B*", "--T", "4"]);
        assert!(out.stdout.contains("dominant: none"));
    }

    #[test]
    fn failed_check_exits_one() {
        use crate::verify::Check;
        let pass = Check { name: "a".into(), passed: true, detail: String::new() };
        let fail = Check { name: "b".into(), passed: false, detail: String::new() };
        let report = SuiteReport { suite: Suite::Lemma, checks: vec![pass.clone()] };
        assert_eq!(report_exit_code(&report), EXIT_OK);
        let report = SuiteReport { suite: Suite::Lemma, checks: vec![pass, fail] };
        assert_eq!(report_exit_code(&report), EXIT_CHECK_FAILED);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_from_args(["fullsum", "count", "--topology", "", "--T", "5"]).code, EXIT_USAGE);
        assert_eq!(run_from_args(["fullsum", "count"]).code, EXIT_USAGE);
        assert_eq!(run_from_args(["fullsum", "verify", "--suite", "nope"]).code, EXIT_USAGE);
        assert_eq!(run_from_args(["fullsum", "--help"]).code, EXIT_OK);
    }
}
