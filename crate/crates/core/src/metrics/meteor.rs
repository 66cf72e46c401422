//! Sentence-level METEOR with exact and Porter-stem matching stages.
//!
//! Both strings are lowercased and split on whitespace. The exact stage aligns
//! as many identical unigrams as possible; the stem stage then aligns as many of
//! the leftovers as possible by Porter stem. Among all alignments that are
//! maximal at each stage, the one with the fewest chunks (runs of matches that
//! are contiguous and in the same order on both sides) is scored:
//!
//! ```text
//! P = m/|cand|   R = m/|ref|   F = P·R / (α·P + (1-α)·R)
//! penalty = γ·(chunks/m)^β     score = F·(1 - penalty)
//! ```
//!
//! With the default α = 9/10 this is the classic `F = 10PR / (R + 9P)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::porter;
use super::MetricsError;

/// Alignments with at most this many matches are searched exhaustively.
pub const EXHAUSTIVE_MATCH_LIMIT: usize = 12;
/// Beam width used above [`EXHAUSTIVE_MATCH_LIMIT`].
pub const BEAM_WIDTH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherStage {
    Exact,
    Stemmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeteorConfig {
    /// Weight of recall relative to precision; 9 gives `10PR / (R + 9P)`.
    pub fmean_recall_weight: f64,
    pub penalty_gamma: f64,
    pub penalty_beta: f64,
    pub matcher_stages: Vec<MatcherStage>,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        Self {
            fmean_recall_weight: 9.0,
            penalty_gamma: 0.5,
            penalty_beta: 3.0,
            matcher_stages: vec![MatcherStage::Exact, MatcherStage::Stemmed],
        }
    }
}

impl MeteorConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.fmean_recall_weight.is_finite() && self.fmean_recall_weight > 0.0) {
            out.push("score.meteor.fmean_recall_weight: must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.penalty_gamma) {
            out.push("score.meteor.penalty_gamma: must be within [0, 1]".to_string());
        }
        if !(self.penalty_beta.is_finite() && self.penalty_beta > 0.0) {
            out.push("score.meteor.penalty_beta: must be positive".to_string());
        }
        if !self.matcher_stages.contains(&MatcherStage::Exact) {
            out.push("score.meteor.matcher_stages: must include exact".to_string());
        }
        out
    }

    fn stems(&self) -> bool {
        self.matcher_stages.contains(&MatcherStage::Stemmed)
    }
}

/// The chosen alignment's summary and the resulting score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorScore {
    pub score: f64,
    pub matches: usize,
    pub chunks: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Score only; see [`meteor_detail`].
pub fn meteor(
    candidate: &str,
    reference: &str,
    config: &MeteorConfig,
) -> Result<f64, MetricsError> {
    meteor_detail(candidate, reference, config).map(|d| d.score)
}

pub fn meteor_detail(
    candidate: &str,
    reference: &str,
    config: &MeteorConfig,
) -> Result<MeteorScore, MetricsError> {
    let problems = config.violations();
    if !problems.is_empty() {
        return Err(MetricsError::InvalidConfig(problems.join("; ")));
    }
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if refs.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let problem = Problem::new(&cand, &refs, config.stems());
    let (matches, chunks) = problem.solve();
    Ok(MeteorScore {
        score: score_from(matches, chunks, cand.len(), refs.len(), config),
        matches,
        chunks,
        candidate_len: cand.len(),
        reference_len: refs.len(),
    })
}

fn score_from(
    matches: usize,
    chunks: usize,
    cand_len: usize,
    ref_len: usize,
    config: &MeteorConfig,
) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / cand_len as f64;
    let r = m / ref_len as f64;
    let alpha = config.fmean_recall_weight / (config.fmean_recall_weight + 1.0);
    let fmean = p * r / (alpha * p + (1.0 - alpha) * r);
    let penalty = config.penalty_gamma * (chunks as f64 / m).powf(config.penalty_beta);
    fmean * (1.0 - penalty)
}

/// Mean sentence score over `(candidate, reference)` pairs.
pub fn corpus_meteor<C: AsRef<str>, R: AsRef<str>>(
    pairs: &[(C, R)],
    config: &MeteorConfig,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut total = 0.0;
    for (c, r) in pairs {
        total += meteor(c.as_ref(), r.as_ref(), config)?;
    }
    Ok(total / pairs.len() as f64)
}

/// The alignment search space, with words and stems interned to small ids.
///
/// A valid alignment links stem-equal tokens one-to-one, uses exactly
/// `min(c_w, r_w)` identical links for every word `w`, and exactly
/// `min(c_s, r_s)` links in total for every stem class `s` (`c`, `r` are
/// occurrence counts in candidate and reference). That is precisely the set of
/// alignments that are maximal at the exact stage and then at the stem stage.
struct Problem {
    cand_word: Vec<usize>,
    cand_class: Vec<usize>,
    ref_word: Vec<usize>,
    word_class: Vec<usize>,
    /// Required identical links per word.
    word_target: Vec<usize>,
    /// Required total links per class.
    class_target: Vec<usize>,
    /// Reference positions each candidate position may link to.
    options: Vec<Vec<usize>>,
    total_matches: usize,
}

#[derive(Clone)]
struct Node {
    next: usize,
    used: Vec<bool>,
    word_done: Vec<usize>,
    class_done: Vec<usize>,
    chunks: usize,
    /// Reference position linked to candidate `next - 1`, if any.
    prev: Option<usize>,
}

impl Problem {
    fn new(cand: &[String], refs: &[String], stems: bool) -> Self {
        let mut word_ids: HashMap<String, usize> = HashMap::new();
        let mut class_ids: HashMap<String, usize> = HashMap::new();
        let mut word_class = Vec::new();
        let mut intern = |w: &str| -> (usize, usize) {
            if let Some(&id) = word_ids.get(w) {
                return (id, word_class[id]);
            }
            let key = if stems {
                porter::stem(w)
            } else {
                w.to_string()
            };
            let next_class = class_ids.len();
            let class = *class_ids.entry(key).or_insert(next_class);
            let id = word_class.len();
            word_class.push(class);
            word_ids.insert(w.to_string(), id);
            (id, class)
        };
        let mut cand_word = Vec::new();
        let mut cand_class = Vec::new();
        for w in cand {
            let (id, class) = intern(w);
            cand_word.push(id);
            cand_class.push(class);
        }
        let mut ref_word = Vec::new();
        let mut ref_class = Vec::new();
        for w in refs {
            let (id, class) = intern(w);
            ref_word.push(id);
            ref_class.push(class);
        }

        let n_words = word_class.len();
        let n_classes = class_ids.len();
        let count = |ids: &[usize], n: usize| {
            let mut c = vec![0usize; n];
            ids.iter().for_each(|&i| c[i] += 1);
            c
        };
        let (cw, rw) = (count(&cand_word, n_words), count(&ref_word, n_words));
        let (cc, rc) = (count(&cand_class, n_classes), count(&ref_class, n_classes));
        let word_target: Vec<usize> = (0..n_words).map(|w| cw[w].min(rw[w])).collect();
        let class_target: Vec<usize> = (0..n_classes).map(|s| cc[s].min(rc[s])).collect();
        let options = cand_class
            .iter()
            .map(|&s| {
                (0..ref_class.len())
                    .filter(|&j| ref_class[j] == s)
                    .collect()
            })
            .collect();
        let total_matches = class_target.iter().sum();
        Self {
            cand_word,
            cand_class,
            ref_word,
            word_class,
            word_target,
            class_target,
            options,
            total_matches,
        }
    }

    fn root(&self) -> Node {
        Node {
            next: 0,
            used: vec![false; self.ref_word.len()],
            word_done: vec![0; self.word_target.len()],
            class_done: vec![0; self.class_target.len()],
            chunks: 0,
            prev: None,
        }
    }

    /// Whether the undecided candidate positions can still complete every
    /// per-word and per-class target.
    fn feasible(&self, node: &Node) -> bool {
        let n_words = self.word_target.len();
        let mut a = vec![0usize; n_words];
        let mut b = vec![0usize; n_words];
        for &w in &self.cand_word[node.next..] {
            a[w] += 1;
        }
        for (j, &w) in self.ref_word.iter().enumerate() {
            if !node.used[j] {
                b[w] += 1;
            }
        }
        let n_classes = self.class_target.len();
        let mut ident_need = vec![0usize; n_classes];
        let mut left = vec![0usize; n_classes];
        let mut right = vec![0usize; n_classes];
        let mut widest = vec![0usize; n_classes];
        for w in 0..n_words {
            let need = self.word_target[w] - node.word_done[w];
            if need > a[w].min(b[w]) {
                return false;
            }
            let s = self.word_class[w];
            ident_need[s] += need;
            let (ra, rb) = (a[w] - need, b[w] - need);
            left[s] += ra;
            right[s] += rb;
            widest[s] = widest[s].max(ra + rb);
        }
        (0..n_classes).all(|s| {
            let Some(remaining) = self.class_target[s].checked_sub(node.class_done[s]) else {
                return false;
            };
            let Some(cross_need) = remaining.checked_sub(ident_need[s]) else {
                return false;
            };
            // Largest matching between different words of one class.
            let cross_max = left[s].min(right[s]).min(left[s] + right[s] - widest[s]);
            cross_need <= cross_max
        })
    }

    /// Children of `node` in preference order: extend the current chunk, link
    /// elsewhere, leave unlinked. Infeasible children are dropped.
    fn expand(&self, node: &Node) -> Vec<Node> {
        let i = node.next;
        let mut targets: Vec<usize> = self.options[i]
            .iter()
            .copied()
            .filter(|&j| !node.used[j])
            .collect();
        if let Some(p) = node.prev {
            if let Some(pos) = targets.iter().position(|&j| j == p + 1) {
                targets[..=pos].rotate_right(1);
            }
        }
        let mut children = Vec::with_capacity(targets.len() + 1);
        for j in targets {
            let w = self.cand_word[i];
            let identical = self.ref_word[j] == w;
            if identical && node.word_done[w] == self.word_target[w] {
                continue;
            }
            let mut child = node.clone();
            child.next = i + 1;
            child.used[j] = true;
            if identical {
                child.word_done[w] += 1;
            }
            child.class_done[self.cand_class[i]] += 1;
            if j == 0 || node.prev != Some(j - 1) {
                child.chunks += 1;
            }
            child.prev = Some(j);
            if self.feasible(&child) {
                children.push(child);
            }
        }
        let mut skip = node.clone();
        skip.next = i + 1;
        skip.prev = None;
        if self.feasible(&skip) {
            children.push(skip);
        }
        children
    }

    /// `(matches, chunks)` of a fewest-chunk valid alignment.
    fn solve(&self) -> (usize, usize) {
        if self.total_matches == 0 {
            return (0, 0);
        }
        let incumbent = self.beam();
        if self.total_matches > EXHAUSTIVE_MATCH_LIMIT {
            return (self.total_matches, incumbent);
        }
        let mut best = incumbent;
        self.branch_and_bound(self.root(), &mut best);
        (self.total_matches, best)
    }

    fn beam(&self) -> usize {
        let mut beam = vec![self.root()];
        for _ in 0..self.cand_word.len() {
            let mut next: Vec<Node> = beam.iter().flat_map(|n| self.expand(n)).collect();
            // Stable sort keeps preference order among equal chunk counts.
            next.sort_by_key(|n| n.chunks);
            next.truncate(BEAM_WIDTH);
            beam = next;
        }
        beam.iter()
            .map(|n| n.chunks)
            .min()
            .expect("a feasible alignment always exists")
    }

    fn branch_and_bound(&self, node: Node, best: &mut usize) {
        if node.chunks >= *best {
            return;
        }
        if node.next == self.cand_word.len() {
            *best = node.chunks;
            return;
        }
        for child in self.expand(&node) {
            self.branch_and_bound(child, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(c: &str, r: &str) -> f64 {
        meteor(c, r, &MeteorConfig::default()).unwrap()
    }

    #[test]
    fn hand_computed_cases() {
        assert_eq!(score("x", "y"), 0.0);
        assert!((score("the cat", "the cat") - 0.9375).abs() < 1e-12);
        assert_eq!(score("", "the cat"), 0.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert_eq!(
            meteor("a", "  ", &MeteorConfig::default()),
            Err(MetricsError::EmptyReference)
        );
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let d = meteor_detail(
            "models improved",
            "model improves",
            &MeteorConfig::default(),
        )
        .unwrap();
        assert_eq!((d.matches, d.chunks), (2, 1));
        let exact_only = MeteorConfig {
            matcher_stages: vec![MatcherStage::Exact],
            ..MeteorConfig::default()
        };
        assert_eq!(
            meteor_detail("models improved", "model improves", &exact_only)
                .unwrap()
                .matches,
            0
        );
    }

    #[test]
    fn repeated_tokens_pick_fewest_chunks() {
        let d = meteor_detail("a b a b a", "b a b a b", &MeteorConfig::default()).unwrap();
        assert_eq!((d.matches, d.chunks), (4, 1));
    }

    #[test]
    fn identical_links_are_mandatory_before_stem_links() {
        // "runs" must pair with "runs"; "running" then links to "run" by stem.
        let d = meteor_detail("running runs", "runs run", &MeteorConfig::default()).unwrap();
        assert_eq!(d.matches, 2);
        assert_eq!(d.chunks, 2);
    }

    #[test]
    fn corpus_mean() {
        let cfg = MeteorConfig::default();
        let m = corpus_meteor(&[("x", "y"), ("the cat", "the cat")], &cfg).unwrap();
        assert!((m - 0.46875).abs() < 1e-12);
        let empty: [(&str, &str); 0] = [];
        assert_eq!(corpus_meteor(&empty, &cfg), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn long_inputs_use_beam_and_stay_in_range() {
        let c = "a b c d e f g h i j k l m n o p a b c d";
        let r = "a b c d e f g h i j k l m n o p q a b c";
        let d = meteor_detail(c, r, &MeteorConfig::default()).unwrap();
        assert_eq!(d.matches, 19);
        assert!(d.chunks >= 1 && d.score > 0.0 && d.score <= 1.0);
    }
}
