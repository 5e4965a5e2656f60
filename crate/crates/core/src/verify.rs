//! Named invariant suites: exact counting identities, enumeration oracles,
//! finite-difference gradient checks and closed-form soft-alignment ratios.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::analysis::{min_label_count_among_best, viterbi_scores};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::losses::{
    evaluate, forward_backward, generative_loss, hybrid_loss, loss_value, softmax_prior, LossKind, PriorMode,
};
use crate::matrix::{log_sum_exp, softmax, Matrix};
use crate::models::{EmissionTable, ModelDims, ModelKind, ModelSpec, PosteriorTable};
use crate::signals::{single_label_input, InputSequence};
use crate::topology::{
    count_alignments, delta_counts, dominant_frame_count, dominant_label, enumerate_alignments, Alignment,
    DeltaCase, LabelTopology, DEFAULT_ENUMERATION_CAP,
};
use crate::training::uniform_mean_occupancy;

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;
pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma,
    Theorem2,
    Oracle,
    Gradcheck,
    GenerativeRatios,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Lemma,
        Suite::Theorem2,
        Suite::Oracle,
        Suite::Gradcheck,
        Suite::GenerativeRatios,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma => "lemma",
            Suite::Theorem2 => "theorem2",
            Suite::Oracle => "oracle",
            Suite::Gradcheck => "gradcheck",
            Suite::GenerativeRatios => "generative-ratios",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().len();
        write!(f, "suite {}: {} checks, {failed} failed", self.suite.name(), self.checks.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Single `n` for the theorem2 and generative-ratios suites; `None`
    /// checks the default range.
    pub n: Option<usize>,
    /// Largest T (or frame count for gradcheck draws).
    pub t_max: Option<usize>,
    pub draws: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { n: None, t_max: None, draws: 100, seed: 0x5eed, exec: Exec::Parallel }
    }
}

pub fn run_suite(suite: Suite, options: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Lemma => lemma_checks(options.t_max.unwrap_or(200), options.exec)?,
        Suite::Theorem2 => theorem2_checks(&n_range(options.n, 4..=8)?)?,
        Suite::Oracle => oracle_checks(options.t_max.unwrap_or(12), options.seed, options.exec)?,
        Suite::Gradcheck => gradcheck_checks(options.draws, options.t_max.unwrap_or(10), options.seed, options.exec)?,
        Suite::GenerativeRatios => generative_ratio_checks(&n_range(options.n, 4..=4)?)?,
    };
    Ok(SuiteReport { suite, checks })
}

fn n_range(n: Option<usize>, default: std::ops::RangeInclusive<usize>) -> Result<Vec<usize>> {
    match n {
        Some(0) => Err(Error::InvalidInput("n must be at least 1".into())),
        Some(n) => Ok(vec![n]),
        None => Ok(default.collect()),
    }
}

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Collects the frames (or other indices) at which a property fails.
fn aggregate(name: &str, range: &str, failures: Vec<String>) -> Check {
    if failures.is_empty() {
        Check::new(name, true, format!("holds for {range}"))
    } else {
        let shown: Vec<&str> = failures.iter().take(5).map(String::as_str).collect();
        Check::new(name, false, format!("{} failures, first: {}", failures.len(), shown.join("; ")))
    }
}

/// `2·ceil((T − 1 − √(T+1)) / 2)` evaluated exactly.
pub fn dominant_frame_count_closed_form(frames: usize) -> usize {
    let m = frames as i64 - 1;
    let root_sq = frames as i64 + 1;
    // Smallest k with m − 2k ≤ √(T+1).
    let mut k = (m - (root_sq as f64).sqrt() as i64 - 2) / 2 - 1;
    while !(m - 2 * k <= 0 || (m - 2 * k) * (m - 2 * k) <= root_sq) {
        k += 1;
    }
    (2 * k).max(0) as usize
}

fn lemma_checks(t_max: usize, exec: Exec) -> Result<Vec<Check>> {
    if t_max == 0 {
        return Err(Error::InvalidInput("Tmax must be at least 1".into()));
    }
    let top = LabelTopology::parse("B* a+ B*")?;
    let (a, b) = (top.label_index("a").expect("a"), top.label_index("B").expect("B"));
    let rows = exec.map_range(t_max, |i| -> Result<[Vec<String>; 8]> {
        let t = i + 1;
        let tb = big(t as u64);
        let table = count_alignments(&top, t)?;
        let mut fails: [Vec<String>; 8] = Default::default();
        let tag = |what: String| format!("T={t}: {what}");
        if table.total != &tb * (&tb + 1u32) / 2u32 {
            fails[0].push(tag(format!("total {}", table.total)));
        }
        if table.per_label[a] != &tb * (&tb * &tb + 3u32 * &tb + 2u32) / 6u32 {
            fails[1].push(tag(format!("C(a) {}", table.per_label[a])));
        }
        if table.per_label[b] != &tb * (&tb * &tb - 1u32) / 3u32 {
            fails[2].push(tag(format!("C(B) {}", table.per_label[b])));
        }
        let t_i = t as i64;
        for f in 1..=t {
            let f_i = f as i64;
            if table.per_frame[f - 1][a] != big((f_i * (t_i - f_i + 1)) as u64) {
                fails[3].push(tag(format!("C(a, t={f})")));
            }
            // T²/2 − Tt + T/2 + t² − t, doubled to stay integral.
            let twice = t_i * t_i - 2 * t_i * f_i + t_i + 2 * f_i * f_i - 2 * f_i;
            if &table.per_frame[f - 1][b] * 2u32 != big(twice as u64) {
                fails[4].push(tag(format!("C(B, t={f})")));
            }
        }
        let avg = ratio(table.per_label[b].clone(), BigInt::from(table.total.clone()) * t);
        if avg != ratio(2 * (t as i64 - 1), 3 * t as i64) {
            fails[5].push(tag(format!("average {avg}")));
        }
        if t >= 5 {
            let got = dominant_frame_count(&top, b, t)?;
            let want = dominant_frame_count_closed_form(t);
            if got != want {
                fails[6].push(tag(format!("dominant frames {got} vs {want}")));
            }
            if dominant_label(&top, t)? != Some(b) {
                fails[7].push(tag("dominant label is not B".into()));
            }
        }
        Ok(fails)
    });
    let mut merged: [Vec<String>; 8] = Default::default();
    for row in rows {
        for (m, f) in merged.iter_mut().zip(row?) {
            m.extend(f);
        }
    }
    let all = format!("T in 1..={t_max}");
    let from5 = format!("T in 5..={t_max}");
    let names = [
        ("total = T(T+1)/2", &all),
        ("C(a) = T(T^2+3T+2)/6", &all),
        ("C(B) = T(T^2-1)/3", &all),
        ("C(a,t) = t(T-t+1)", &all),
        ("C(B,t) = T^2/2 - Tt + T/2 + t^2 - t", &all),
        ("dominant average = 2(T-1)/(3T)", &all),
        ("dominant frames = 2 ceil(T/2 - sqrt(T+1)/2 - 1/2)", &from5),
        ("dominant label is B", &from5),
    ];
    let mut checks: Vec<Check> = names
        .iter()
        .zip(merged)
        .map(|((name, range), fails)| aggregate(name, range, fails))
        .collect();
    for (t, percent) in [(8usize, 50usize), (24, 75)] {
        if t > t_max {
            continue;
        }
        let count = dominant_frame_count(&top, b, t)?;
        checks.push(Check::new(
            format!("dominant frames at T={t} = {percent}%"),
            count * 100 == percent * t,
            format!("{count}/{t}"),
        ));
    }
    Ok(checks)
}

/// The paper's piecewise forms for the two conditioned difference tables.
pub fn delta_closed_form(n: usize, case: DeltaCase) -> Vec<BigInt> {
    let n = n as i64;
    (0..=2 * n)
        .map(|c| {
            
            match case {
                DeltaCase::A if c == 0 => BigInt::zero(),
                DeltaCase::A if c == 2 * n => BigInt::from(4 * n * (n * n - 1)) / 3,
                DeltaCase::A => BigInt::from(2 * n * (c + n)),
                DeltaCase::B if c == 2 * n => BigInt::from(2 * n * (2 * n * n - 3 * n - 2)) / 3,
                DeltaCase::B if c == 2 * n - 1 => BigInt::from(4 * n * (n - 1)),
                DeltaCase::B if c >= n => BigInt::from(2 * n * (3 * c - 4 * n + 1)),
                DeltaCase::B if c == n - 1 => BigInt::from(-2 * n * n),
                DeltaCase::B => BigInt::from(-2 * n * (c + 1)),
            }
        })
        .collect()
}

/// Mean soft alignment of B over the `x_B` and `x_a` frames at uniform init.
pub fn uniform_expectations(n: usize) -> Result<(f64, f64)> {
    let top = LabelTopology::ctc(&["a"], "B")?;
    let x = single_label_input(n)?;
    let q = forward_backward(&top, &PosteriorTable::uniform(x.len(), 2).log_probs())?.soft_alignment;
    let b = top.label_index("B").expect("B");
    let (mut on_b, mut on_a) = (0.0, 0.0);
    for (t, sym) in x.frame_symbol.iter().enumerate() {
        if sym == "B" {
            on_b += q.get(t, b);
        } else {
            on_a += q.get(t, b);
        }
    }
    Ok((on_b / (2 * n) as f64, on_a / (2 * n) as f64))
}

fn theorem2_checks(ns: &[usize]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &n in ns {
        for (case, label) in [(DeltaCase::A, "a"), (DeltaCase::B, "B")] {
            let got = delta_counts(n, case)?;
            let want = delta_closed_form(n, case);
            let detail = got.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
            checks.push(Check::new(format!("n={n} delta C_{label}(c) closed form"), got == want, format!("[{detail}]")));
            if case == DeltaCase::B {
                let sum: BigInt = got.iter().sum();
                let n = n as i64;
                let three_sum = BigInt::from(4 * n * (n * n - 3 * n - 1));
                checks.push(Check::new(
                    format!("n={n} sum delta C_B = 4n(n^2-3n-1)/3"),
                    sum.clone() * 3 == three_sum,
                    format!("sum {sum}"),
                ));
            }
        }
        let (on_b, on_a) = uniform_expectations(n)?;
        let nf = n as f64;
        let den = 6.0 * nf * (4.0 * nf + 1.0);
        let (want_b, want_a) = ((19.0 * nf * nf - 1.0) / den, (13.0 * nf * nf - 1.0) / den);
        checks.push(Check::new(
            format!("n={n} mean q(B) on x_B frames = (19n^2-1)/(6n(4n+1))"),
            (on_b - want_b).abs() <= RATIO_TOLERANCE,
            format!("{on_b} vs {want_b}"),
        ));
        checks.push(Check::new(
            format!("n={n} mean q(B) on x_a frames = (13n^2-1)/(6n(4n+1))"),
            (on_a - want_a).abs() <= RATIO_TOLERANCE,
            format!("{on_a} vs {want_a}"),
        ));
    }
    Ok(checks)
}

/// `(Σ_{x_B} q(B) / Σ q(B), Σ_{x_a} q(a) / Σ q(a))` for the generative model.
pub fn generative_ratios(n: usize, theta_a: f64, theta_b: f64) -> Result<(f64, f64)> {
    let top = LabelTopology::ctc(&["a"], "B")?;
    let x = single_label_input(n)?;
    let model = ModelSpec::Generative { theta_a, theta_b };
    let q = evaluate(&model, &LossKind::Generative, &top, &x, None)?.soft_alignment;
    let (a, b) = (top.label_index("a").expect("a"), top.label_index("B").expect("B"));
    let (mut b_on_b, mut a_on_a) = (0.0, 0.0);
    for (t, sym) in x.frame_symbol.iter().enumerate() {
        if sym == "B" {
            b_on_b += q.get(t, b);
        } else {
            a_on_a += q.get(t, a);
        }
    }
    let mass = q.label_mass();
    Ok((b_on_b / mass[b], a_on_a / mass[a]))
}

fn generative_ratio_checks(ns: &[usize]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &n in ns {
        let (rb, ra) = generative_ratios(n, 0.0, 0.0)?;
        let nf = n as f64;
        let want_b = (19.0 * nf * nf - 1.0) / (32.0 * nf * nf - 2.0);
        let want_a = (11.0 * nf * nf + 6.0 * nf + 1.0) / (16.0 * nf * nf + 12.0 * nf + 2.0);
        checks.push(Check::new(
            format!("n={n} B ratio = (19n^2-1)/(32n^2-2)"),
            (rb - want_b).abs() <= RATIO_TOLERANCE,
            format!("{rb} vs {want_b}"),
        ));
        checks.push(Check::new(
            format!("n={n} a ratio = (11n^2+6n+1)/(16n^2+12n+2)"),
            (ra - want_a).abs() <= RATIO_TOLERANCE,
            format!("{ra} vs {want_a}"),
        ));
    }
    Ok(checks)
}

fn oracle_topologies() -> Result<Vec<(&'static str, LabelTopology)>> {
    Ok(vec![
        ("B* a+ B*", LabelTopology::parse("B* a+ B*")?),
        ("ctc abc", LabelTopology::ctc(&["a", "b", "c"], "B")?),
        ("hmm abc", LabelTopology::hmm(&["a", "b", "c"], "S")?),
        ("ctc aa", LabelTopology::ctc(&["a", "a"], "B")?),
    ])
}

fn random_posteriors(rng: &mut StdRng, frames: usize, labels: usize) -> PosteriorTable {
    let mut m = Matrix::zeros(frames, labels);
    for t in 0..frames {
        let logits: Vec<f64> = (0..labels).map(|_| rng.gen_range(-3.0..3.0)).collect();
        m.row_mut(t).copy_from_slice(&softmax(&logits));
    }
    PosteriorTable::new(m).expect("softmax rows are distributions")
}

fn random_distribution(rng: &mut StdRng, size: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..size).map(|_| rng.gen_range(-2.0..2.0)).collect();
    softmax(&logits)
}

fn brute_score(scores: &Matrix, al: &Alignment) -> f64 {
    al.labels().iter().enumerate().map(|(t, &s)| scores[(t, s)]).sum()
}

/// Log path sum and occupancies by summing over every listed alignment.
pub fn brute_force_lattice(alignments: &[Alignment], scores: &Matrix) -> (f64, Matrix) {
    let path: Vec<f64> = alignments.iter().map(|al| brute_score(scores, al)).collect();
    let total = log_sum_exp(path.iter().copied());
    let mut q = Matrix::zeros(scores.rows(), scores.cols());
    for (al, lp) in alignments.iter().zip(&path) {
        let w = (lp - total).exp();
        for (t, &s) in al.labels().iter().enumerate() {
            q[(t, s)] += w;
        }
    }
    (total, q)
}

fn oracle_case(top: &LabelTopology, frames: usize, seed: u64) -> Result<Vec<(usize, String)>> {
    let mut fails = Vec::new();
    let mut fail = |slot: usize, what: String| fails.push((slot, format!("T={frames}: {what}")));
    let labels = top.num_labels();
    let all = enumerate_alignments(top, frames)?;
    let table = count_alignments(top, frames)?;

    let mut per_frame = vec![vec![BigUint::zero(); labels]; frames];
    let mut per_label = vec![BigUint::zero(); labels];
    for al in &all {
        for (t, &s) in al.labels().iter().enumerate() {
            per_frame[t][s] += 1u32;
            per_label[s] += 1u32;
        }
    }
    if table.total != BigUint::from(all.len()) || table.per_frame != per_frame || table.per_label != per_label {
        fail(0, "DP counts differ from enumeration".into());
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let post = random_posteriors(&mut rng, frames, labels);
    let scores = post.log_probs();
    let (brute_total, brute_q) = brute_force_lattice(&all, &scores);
    let lattice = forward_backward(top, &scores)?;
    if (lattice.log_total - brute_total).abs() > ORACLE_TOLERANCE
        || lattice.soft_alignment.q.max_abs_diff(&brute_q) > ORACLE_TOLERANCE
    {
        fail(1, format!("ctc lattice off by {}", (lattice.log_total - brute_total).abs()));
    }

    let prior = random_distribution(&mut rng, labels);
    let mut hybrid = scores.clone();
    for t in 0..frames {
        for s in 0..labels {
            hybrid[(t, s)] -= prior[s].ln();
        }
    }
    let (brute_total, brute_q) = brute_force_lattice(&all, &hybrid);
    let loss = hybrid_loss(top, &post, &prior)?;
    let q = forward_backward(top, &hybrid)?.soft_alignment;
    if (loss + brute_total).abs() > ORACLE_TOLERANCE || q.q.max_abs_diff(&brute_q) > ORACLE_TOLERANCE {
        fail(1, "hybrid lattice differs".into());
    }

    let symbols = 3;
    let mut em = Matrix::zeros(labels, symbols);
    for s in 0..labels {
        em.row_mut(s).copy_from_slice(&random_distribution(&mut rng, symbols));
    }
    let emissions = EmissionTable::new(em)?;
    let hot: Vec<usize> = (0..frames).map(|_| rng.gen_range(0..symbols)).collect();
    let x = one_hot_input(&hot, symbols);
    let gen_scores = emissions.frame_log_scores(&x)?;
    let (brute_total, brute_q) = brute_force_lattice(&all, &gen_scores);
    let loss = generative_loss(top, &emissions, &x)?;
    let q = forward_backward(top, &gen_scores)?.soft_alignment;
    if (loss + brute_total).abs() > ORACLE_TOLERANCE || q.q.max_abs_diff(&brute_q) > ORACLE_TOLERANCE {
        fail(1, "generative lattice differs".into());
    }

    for (kind, post) in [("random", post), ("uniform", PosteriorTable::uniform(frames, labels))] {
        let scores = post.log_probs();
        let (best, score) = viterbi_scores(top, &scores)?;
        let path: Vec<f64> = all.iter().map(|al| brute_score(&scores, al)).collect();
        let brute_best = path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.accepts(best.labels()) || (score - brute_best).abs() > 1e-12 || path.iter().any(|&p| p > score + 1e-12) {
            fail(2, format!("{kind} viterbi score {score} vs {brute_best}"));
        }
        let ties: Vec<&Alignment> = all
            .iter()
            .zip(&path)
            .filter(|(_, &p)| (p - brute_best).abs() <= 1e-12)
            .map(|(al, _)| al)
            .collect();
        if !ties.iter().any(|al| al.labels() == best.labels()) {
            fail(2, format!("{kind} viterbi alignment is not among the best"));
        }
        for label in 0..labels {
            let (min_count, _) = min_label_count_among_best(top, &scores, label)?;
            let brute_min = ties.iter().map(|al| al.count_of(label)).min().unwrap_or(0);
            if min_count != brute_min {
                fail(3, format!("{kind} min count of label {label}: {min_count} vs {brute_min}"));
            }
        }
    }
    Ok(fails)
}

fn one_hot_input(hot: &[usize], dim: usize) -> InputSequence {
    let mut frames = Matrix::zeros(hot.len(), dim);
    for (t, &h) in hot.iter().enumerate() {
        frames[(t, h)] = 1.0;
    }
    InputSequence {
        frames,
        frame_symbol: hot.iter().map(|h| format!("x{h}")).collect(),
        hot: hot.to_vec(),
    }
}

fn oracle_checks(t_max: usize, seed: u64, exec: Exec) -> Result<Vec<Check>> {
    if t_max > DEFAULT_ENUMERATION_CAP {
        return Err(Error::EnumerationCap { requested: t_max, cap: DEFAULT_ENUMERATION_CAP });
    }
    let mut checks = Vec::new();
    for (name, top) in oracle_topologies()? {
        let frames: Vec<usize> = (top.min_length().max(1)..=t_max).collect();
        let results = exec.map(&frames, |&t| oracle_case(&top, t, seed ^ (t as u64) << 8));
        let mut slots: [Vec<String>; 4] = Default::default();
        for r in results {
            for (slot, msg) in r? {
                slots[slot].push(msg);
            }
        }
        let range = match (frames.first(), frames.last()) {
            (Some(lo), Some(hi)) => format!("T in {lo}..={hi}"),
            _ => "no lengths".into(),
        };
        let [counts, lattice, viterbi, min_count] = slots;
        checks.push(aggregate(&format!("{name}: counts = enumeration"), &range, counts));
        checks.push(aggregate(&format!("{name}: loss and q = brute force within 1e-10"), &range, lattice));
        checks.push(aggregate(&format!("{name}: viterbi = best enumerated"), &range, viterbi));
        checks.push(aggregate(&format!("{name}: min dominant count = brute force"), &range, min_count));
    }

    let top = LabelTopology::ctc(&["a", "b", "c"], "B")?;
    let blank = top.label_index("B").expect("B");
    let mut fails = Vec::new();
    for t in top.min_length()..=t_max {
        let all = enumerate_alignments(&top, t)?;
        let blanks: usize = all.iter().map(|al| al.count_of(blank)).sum();
        let brute = ratio(blanks as u64, (all.len() * t) as u64);
        if uniform_mean_occupancy(&top, blank, t)? != brute {
            fails.push(format!("T={t}"));
        }
    }
    checks.push(aggregate(
        "ctc abc: uniform mean q(B) = brute force (exact)",
        &format!("T in {}..={t_max}", top.min_length()),
        fails,
    ));
    Ok(checks)
}

/// Every model/loss pairing with an analytic gradient.
pub fn gradcheck_pairings() -> Vec<(ModelKind, &'static str)> {
    let discriminative = [ModelKind::Bias, ModelKind::Ffnn, ModelKind::Memory, ModelKind::TwoParam];
    let losses = [
        "ctc",
        "hybrid_softmax_prior",
        "hybrid_stop_grad_prior",
        "hybrid_learned_prior",
        "hybrid_ema_prior",
    ];
    let mut out: Vec<(ModelKind, &'static str)> = discriminative
        .iter()
        .flat_map(|&m| losses.iter().map(move |&l| (m, l)))
        .collect();
    out.push((ModelKind::Generative, "generative"));
    out
}

/// Worst relative error of one random draw: `max_i |g_i − fd_i|` over
/// `max(‖g‖∞, ‖fd‖∞)`, for the model gradient and, if present, the learned
/// prior gradient.
pub fn gradcheck_draw(kind: ModelKind, loss_name: &str, max_frames: usize, seed: u64) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let two_param = matches!(kind, ModelKind::TwoParam | ModelKind::Generative);
    let (top, dim) = if two_param {
        (LabelTopology::ctc(&["a"], "B")?, 2)
    } else {
        let tops = [
            LabelTopology::ctc(&["a"], "B")?,
            LabelTopology::ctc(&["a", "b"], "B")?,
            LabelTopology::hmm(&["a", "b"], "S")?,
        ];
        (tops[rng.gen_range(0..tops.len())].clone(), 3)
    };
    let lo = top.min_length().max(2);
    let frames = rng.gen_range(lo..=max_frames.max(lo));
    let hot: Vec<usize> = (0..frames).map(|_| rng.gen_range(0..dim)).collect();
    let x = one_hot_input(&hot, dim);
    let labels = top.num_labels();
    let dims = ModelDims { labels, input_dim: dim, frames, with_bias: rng.gen_bool(0.5) };
    let template = ModelSpec::init_uniform(kind, dims);
    let params: Vec<f64> = (0..template.num_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let model = template.with_params(&params)?;

    let mut running = None;
    let loss = match loss_name {
        "ctc" => LossKind::Ctc,
        "generative" => LossKind::Generative,
        "hybrid_softmax_prior" => LossKind::Hybrid(PriorMode::Softmax),
        "hybrid_stop_grad_prior" => LossKind::Hybrid(PriorMode::StopGrad),
        "hybrid_learned_prior" => LossKind::Hybrid(PriorMode::Learned {
            logits: (0..labels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }),
        "hybrid_ema_prior" => {
            running = Some(random_distribution(&mut rng, labels));
            LossKind::Hybrid(PriorMode::Ema { decay: 0.99 })
        }
        other => return Err(Error::Parse(format!("unknown loss `{other}`"))),
    };
    let eval = evaluate(&model, &loss, &top, &x, running.as_deref())?;

    // The stop-gradient prior is the gradient of the loss with the prior
    // frozen at its current value.
    let (ref_loss, ref_prior) = match &loss {
        LossKind::Hybrid(PriorMode::StopGrad) => (
            LossKind::Hybrid(PriorMode::Ema { decay: 0.5 }),
            Some(softmax_prior(&model.posteriors(&x)?)),
        ),
        _ => (loss.clone(), running.clone()),
    };
    let f = |p: &[f64]| -> Result<f64> { loss_value(&model.with_params(p)?, &ref_loss, &top, &x, ref_prior.as_deref()) };
    let mut worst = relative_error(&eval.gradient, &central_differences(&params, f)?);

    if let (LossKind::Hybrid(PriorMode::Learned { logits }), Some(g)) = (&loss, &eval.prior_gradient) {
        let f = |l: &[f64]| -> Result<f64> {
            loss_value(&model, &LossKind::Hybrid(PriorMode::Learned { logits: l.to_vec() }), &top, &x, None)
        };
        worst = worst.max(relative_error(g, &central_differences(logits, f)?));
    }
    Ok(worst)
}

pub fn central_differences(at: &[f64], f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            p[i] = at[i] + FD_STEP;
            let up = f(&p)?;
            p[i] = at[i] - FD_STEP;
            let down = f(&p)?;
            p[i] = at[i];
            Ok((up - down) / (2.0 * FD_STEP))
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / inf(analytic).max(inf(numeric)).max(1.0)
}

fn gradcheck_checks(draws: usize, max_frames: usize, seed: u64, exec: Exec) -> Result<Vec<Check>> {
    if draws == 0 {
        return Err(Error::InvalidInput("at least one draw is needed".into()));
    }
    let pairings = gradcheck_pairings();
    let jobs: Vec<(usize, usize)> = (0..pairings.len()).flat_map(|p| (0..draws).map(move |d| (p, d))).collect();
    let errors = exec.map(&jobs, |&(p, d)| {
        let (kind, loss) = pairings[p];
        gradcheck_draw(kind, loss, max_frames, seed.wrapping_add((p * 1_000_003 + d) as u64))
    });
    let mut checks = Vec::new();
    for (p, (kind, loss)) in pairings.iter().enumerate() {
        let mut worst = 0.0f64;
        for e in &errors[p * draws..(p + 1) * draws] {
            let e = e.clone()?;
            worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
        }
        checks.push(Check::new(
            format!("{} / {loss}", kind.name()),
            worst <= GRADCHECK_TOLERANCE,
            format!("{draws} draws, worst relative error {worst:.3e}"),
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_dominant_frames() {
        assert_eq!(dominant_frame_count_closed_form(8), 4);
        assert_eq!(dominant_frame_count_closed_form(24), 18);
        assert_eq!(dominant_frame_count_closed_form(5), 2);
    }

    #[test]
    fn delta_closed_forms_at_four() {
        let a: Vec<i64> = delta_closed_form(4, DeltaCase::A).iter().map(|v| v.try_into().unwrap()).collect();
        assert_eq!(a, [0, 40, 48, 56, 64, 72, 80, 88, 80]);
        let b: Vec<i64> = delta_closed_form(4, DeltaCase::B).iter().map(|v| v.try_into().unwrap()).collect();
        assert_eq!(b, [-8, -16, -24, -32, -24, 0, 24, 48, 48]);
    }

    #[test]
    fn suites_pass_small() {
        let opts = VerifyOptions { t_max: Some(30), draws: 3, ..VerifyOptions::default() };
        for suite in [Suite::Lemma, Suite::Theorem2, Suite::GenerativeRatios, Suite::Gradcheck] {
            let r = run_suite(suite, &opts).unwrap();
            assert!(r.passed(), "{r}");
        }
        let opts = VerifyOptions { t_max: Some(8), ..VerifyOptions::default() };
        let r = run_suite(Suite::Oracle, &opts).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()).unwrap(), s);
        }
        assert!(Suite::from_name("nope").is_err());
    }

    #[test]
    fn oracle_rejects_large_tmax() {
        let opts = VerifyOptions { t_max: Some(20), ..VerifyOptions::default() };
        assert!(run_suite(Suite::Oracle, &opts).is_err());
    }

    #[test]
    fn generative_ratios_at_four() {
        let (b, a) = generative_ratios(4, 0.0, 0.0).unwrap();
        assert!((b - 303.0 / 510.0).abs() < 1e-9);
        assert!((a - 201.0 / 306.0).abs() < 1e-9);
    }
}
