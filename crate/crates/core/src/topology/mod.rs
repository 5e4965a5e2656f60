//! Label topologies written as quantified-label regular expressions
//! (`B* a+ B*`), compiled into a small epsilon-free automaton.

mod count;
mod delta;

pub use count::{
    count_alignments, dominant_frame_count, dominant_label, enumerate_alignments,
    enumerate_alignments_capped, max_label_count, CountTable, DEFAULT_ENUMERATION_CAP,
};
pub use delta::{conditioned_frame_counts, delta_counts, DeltaCase};

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    One,
    Plus,
    Star,
}

impl Quantifier {
    fn suffix(self) -> &'static str {
        match self {
            Quantifier::One => "",
            Quantifier::Plus => "+",
            Quantifier::Star => "*",
        }
    }

    fn loops(self) -> bool {
        !matches!(self, Quantifier::One)
    }

    fn skippable(self) -> bool {
        matches!(self, Quantifier::Star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Item {
    pub label: usize,
    pub quantifier: Quantifier,
}

/// A label sequence of length T; entries index the topology alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alignment(pub Vec<usize>);

impl Alignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn count_of(&self, label: usize) -> usize {
        self.0.iter().filter(|&&s| s == label).count()
    }

    /// Run-length form such as `B^4 a^8 B^4`.
    pub fn display(&self, topology: &LabelTopology) -> String {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &s in &self.0 {
            match runs.last_mut() {
                Some((label, n)) if *label == s => *n += 1,
                _ => runs.push((s, 1)),
            }
        }
        runs.iter()
            .map(|&(s, n)| format!("{}^{}", topology.label_name(s), n))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// CSV with header `t,label`; frames are 1-based.
    pub fn to_csv(&self, topology: &LabelTopology) -> String {
        let mut out = String::from("t,label\n");
        for (t, &s) in self.0.iter().enumerate() {
            out.push_str(&format!("{},{}\n", t + 1, topology.label_name(s)));
        }
        out
    }
}

/// Quantified-label topology. Each item is one automaton state; STAR items
/// can be skipped, PLUS items loop, ONE items occupy exactly one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTopology {
    alphabet: Vec<String>,
    items: Vec<Item>,
    start: Vec<bool>,
    accept: Vec<bool>,
    // predecessors[j] includes j itself when item j loops
    predecessors: Vec<Vec<usize>>,
    successors: Vec<Vec<usize>>,
}

impl LabelTopology {
    /// Parse whitespace-separated `label`, `label+`, `label*` tokens.
    ///
    /// The alphabet lists labels of mandatory items first, then labels that
    /// only occur on STAR items, each in order of first appearance. So both
    /// `B* a+ B*` and `B* a+ B* b+ B* c+ B*` put the blank last.
    pub fn parse(spec: &str) -> Result<Self> {
        let tokens = tokenize(spec)?;
        let mut alphabet: Vec<String> = Vec::new();
        for (name, q) in &tokens {
            if *q != Quantifier::Star && !alphabet.contains(name) {
                alphabet.push(name.clone());
            }
        }
        for (name, _) in &tokens {
            if !alphabet.contains(name) {
                alphabet.push(name.clone());
            }
        }
        Self::from_tokens(alphabet, tokens)
    }

    /// Parse with an explicit alphabet order.
    pub fn parse_with_alphabet<S: AsRef<str>>(spec: &str, alphabet: &[S]) -> Result<Self> {
        let tokens = tokenize(spec)?;
        let alphabet: Vec<String> = alphabet.iter().map(|s| s.as_ref().to_string()).collect();
        Self::from_tokens(alphabet, tokens)
    }

    fn from_tokens(alphabet: Vec<String>, tokens: Vec<(String, Quantifier)>) -> Result<Self> {
        let mut items = Vec::with_capacity(tokens.len());
        for (name, quantifier) in tokens {
            let label = alphabet
                .iter()
                .position(|a| *a == name)
                .ok_or_else(|| Error::UnknownLabel(name.clone()))?;
            items.push(Item { label, quantifier });
        }
        Self::new(alphabet, items)
    }

    pub fn new(alphabet: Vec<String>, items: Vec<Item>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyTopology);
        }
        for (i, a) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate alphabet entry `{a}`")));
            }
        }
        for item in &items {
            if item.label >= alphabet.len() {
                return Err(Error::UnknownLabel(format!("#{}", item.label)));
            }
        }
        for pair in items.windows(2) {
            if pair[0].label == pair[1].label {
                return Err(Error::AdjacentDuplicate(alphabet[pair[0].label].clone()));
            }
        }

        let k = items.len();
        let all_skippable = |range: std::ops::Range<usize>| {
            items[range].iter().all(|it| it.quantifier.skippable())
        };
        let start: Vec<bool> = (0..k).map(|j| all_skippable(0..j)).collect();
        let accept: Vec<bool> = (0..k).map(|j| all_skippable(j + 1..k)).collect();
        let mut successors = vec![Vec::new(); k];
        let mut predecessors = vec![Vec::new(); k];
        for i in 0..k {
            if items[i].quantifier.loops() {
                successors[i].push(i);
                predecessors[i].push(i);
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if all_skippable(i + 1..j) {
                    successors[i].push(j);
                    predecessors[j].push(i);
                }
            }
        }
        let topology = Self {
            alphabet,
            items,
            start,
            accept,
            predecessors,
            successors,
        };
        if !topology.is_unambiguous() {
            return Err(Error::AmbiguousTopology);
        }
        Ok(topology)
    }

    /// CTC topology: optional blanks around and between targets, mandatory
    /// blank between two equal adjacent targets.
    pub fn ctc<S: AsRef<str>>(targets: &[S], blank: &str) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        if targets.iter().any(|t| t.as_ref() == blank) {
            return Err(Error::BlankInTargets(blank.to_string()));
        }
        let mut tokens = vec![format!("{blank}*")];
        for (i, target) in targets.iter().enumerate() {
            if i > 0 {
                let sep = if targets[i - 1].as_ref() == target.as_ref() { "+" } else { "*" };
                tokens.push(format!("{blank}{sep}"));
            }
            tokens.push(format!("{}+", target.as_ref()));
        }
        tokens.push(format!("{blank}*"));
        Self::parse(&tokens.join(" "))
    }

    /// HMM topology: optional silence only at both ends.
    pub fn hmm<S: AsRef<str>>(targets: &[S], silence: &str) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        if targets.iter().any(|t| t.as_ref() == silence) {
            return Err(Error::BlankInTargets(silence.to_string()));
        }
        let mut tokens = vec![format!("{silence}*")];
        tokens.extend(targets.iter().map(|t| format!("{}+", t.as_ref())));
        tokens.push(format!("{silence}*"));
        Self::parse(&tokens.join(" "))
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn num_labels(&self) -> usize {
        self.alphabet.len()
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.alphabet[label]
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|a| a == name)
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn num_states(&self) -> usize {
        self.items.len()
    }

    pub fn state_label(&self, state: usize) -> usize {
        self.items[state].label
    }

    pub fn is_start(&self, state: usize) -> bool {
        self.start[state]
    }

    pub fn is_accept(&self, state: usize) -> bool {
        self.accept[state]
    }

    /// States that may precede `state` in the next frame, self-loop first.
    pub fn predecessors(&self, state: usize) -> &[usize] {
        &self.predecessors[state]
    }

    /// States that may follow `state` in the next frame, in index order.
    pub fn successors(&self, state: usize) -> &[usize] {
        &self.successors[state]
    }

    /// Shortest accepted alignment length.
    pub fn min_length(&self) -> usize {
        self.items
            .iter()
            .filter(|it| !it.quantifier.skippable())
            .count()
    }

    /// Whether some label can occupy some frame of some alignment, for any T.
    pub fn reachable_labels(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_labels()];
        for it in &self.items {
            seen[it.label] = true;
        }
        seen
    }

    /// Whether `alignment` is accepted.
    pub fn accepts(&self, alignment: &[usize]) -> bool {
        let k = self.num_states();
        let Some(&first) = alignment.first() else {
            return false;
        };
        let mut active: Vec<bool> = (0..k)
            .map(|j| self.start[j] && self.state_label(j) == first)
            .collect();
        for &s in &alignment[1..] {
            let mut next = vec![false; k];
            for i in (0..k).filter(|&i| active[i]) {
                for &j in &self.successors[i] {
                    if self.state_label(j) == s {
                        next[j] = true;
                    }
                }
            }
            active = next;
        }
        (0..k).any(|j| active[j] && self.accept[j])
    }

    // Self-product reachability: ambiguous iff two distinct state paths read
    // the same label string and both accept.
    fn is_unambiguous(&self) -> bool {
        let k = self.num_states();
        let idx = |i: usize, j: usize| i * k + j;
        let mut reach = vec![false; k * k];
        let mut stack = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if self.start[i] && self.start[j] && self.state_label(i) == self.state_label(j) {
                    reach[idx(i, j)] = true;
                    stack.push((i, j));
                }
            }
        }
        while let Some((i, j)) = stack.pop() {
            for &a in &self.successors[i] {
                for &b in &self.successors[j] {
                    if self.state_label(a) == self.state_label(b) && !reach[idx(a, b)] {
                        reach[idx(a, b)] = true;
                        stack.push((a, b));
                    }
                }
            }
        }
        // co-reachability of accepting pairs, backwards
        let mut coreach = vec![false; k * k];
        let mut stack = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if self.accept[i] && self.accept[j] && reach[idx(i, j)] {
                    coreach[idx(i, j)] = true;
                    stack.push((i, j));
                }
            }
        }
        while let Some((a, b)) = stack.pop() {
            for &i in &self.predecessors[a] {
                for &j in &self.predecessors[b] {
                    if reach[idx(i, j)] && !coreach[idx(i, j)] {
                        coreach[idx(i, j)] = true;
                        stack.push((i, j));
                    }
                }
            }
        }
        (0..k).all(|i| (0..k).all(|j| i == j || !coreach[idx(i, j)]))
    }
}

impl fmt::Display for LabelTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<String> = self
            .items
            .iter()
            .map(|it| format!("{}{}", self.alphabet[it.label], it.quantifier.suffix()))
            .collect();
        f.write_str(&tokens.join(" "))
    }
}

impl std::str::FromStr for LabelTopology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn tokenize(spec: &str) -> Result<Vec<(String, Quantifier)>> {
    let mut tokens = Vec::new();
    for raw in spec.split_whitespace() {
        let (name, quantifier) = match raw.as_bytes()[raw.len() - 1] {
            b'+' => (&raw[..raw.len() - 1], Quantifier::Plus),
            b'*' => (&raw[..raw.len() - 1], Quantifier::Star),
            _ => (raw, Quantifier::One),
        };
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '<' || c == '>');
        if !valid {
            return Err(Error::MalformedToken(raw.to_string()));
        }
        tokens.push((name.to_string(), quantifier));
    }
    if tokens.is_empty() {
        return Err(Error::EmptyTopology);
    }
    Ok(tokens)
}
