//! Cognate alignment and sound-change outcome rates.
//!
//! Forms arrive pre-segmented (one token per phonological segment). Each
//! reflex is globally aligned against its etymon; the reflex material that
//! lines up with a target cluster of the etymon is classified against a set
//! of outcome classes, and the share of reflexes falling into the queried
//! class is the language's outcome rate. Rates pool reflexes across cognate
//! sets, and doublets count as separate reflexes.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::overlay::{FeatureOverlay, OverlayKind};

/// Flat alignment scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for Scoring {
    fn default() -> Self {
        Scoring {
            match_score: 1.0,
            mismatch: -1.0,
            gap: -1.0,
        }
    }
}

impl Scoring {
    /// Score of one aligned pair; `None` is a gap. Gap against gap scores 0.
    pub fn pair(&self, a: Option<&str>, b: Option<&str>) -> f64 {
        match (a, b) {
            (Some(x), Some(y)) if x == y => self.match_score,
            (Some(_), Some(_)) => self.mismatch,
            (None, None) => 0.0,
            _ => self.gap,
        }
    }
}

/// Rows of equal length over segments and gaps (`None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub rows: Vec<Vec<Option<String>>>,
    pub score: f64,
}

impl Alignment {
    pub fn n_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Row `i` with gaps removed.
    pub fn ungapped(&self, i: usize) -> Vec<&str> {
        self.rows[i].iter().flatten().map(String::as_str).collect()
    }

    /// Sum-of-pairs score of the rows under `scoring`.
    pub fn sum_of_pairs(&self, scoring: &Scoring) -> f64 {
        sum_of_pairs(&self.rows, scoring)
    }

    /// Row rendering with `-` for gaps, tokens separated by spaces.
    pub fn render(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| t.as_deref().unwrap_or("-"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }
}

fn sum_of_pairs(rows: &[Vec<Option<String>>], scoring: &Scoring) -> f64 {
    let mut total = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            total += rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| scoring.pair(a.as_deref(), b.as_deref()))
                .sum::<f64>();
        }
    }
    total
}

type Profile = Vec<Vec<Option<String>>>;

#[derive(Clone, Copy, PartialEq)]
enum Step {
    Diag,
    Up,
    Left,
}

/// Needleman-Wunsch over two profiles (row sets). Column pairs score by
/// summing `scoring.pair` over every cross-profile row pair. Traceback
/// prefers diagonal, then up (gap in `b`), then left (gap in `a`).
fn align_profiles(a: &Profile, b: &Profile, scoring: &Scoring) -> (Profile, f64) {
    let len_a = a.first().map_or(0, Vec::len);
    let len_b = b.first().map_or(0, Vec::len);
    fn col(p: &Profile, i: usize) -> Vec<Option<&str>> {
        p.iter().map(|r| r[i].as_deref()).collect()
    }
    let cols_a: Vec<Vec<Option<&str>>> = (0..len_a).map(|i| col(a, i)).collect();
    let cols_b: Vec<Vec<Option<&str>>> = (0..len_b).map(|j| col(b, j)).collect();

    let vs = |x: &[Option<&str>], y: &[Option<&str>]| -> f64 {
        x.iter()
            .map(|&p| y.iter().map(|&q| scoring.pair(p, q)).sum::<f64>())
            .sum()
    };
    // Column against an inserted all-gap column on the other side.
    let gap_a: Vec<f64> = cols_a
        .iter()
        .map(|c| c.iter().filter(|t| t.is_some()).count() as f64 * b.len() as f64 * scoring.gap)
        .collect();
    let gap_b: Vec<f64> = cols_b
        .iter()
        .map(|c| c.iter().filter(|t| t.is_some()).count() as f64 * a.len() as f64 * scoring.gap)
        .collect();

    let w = len_b + 1;
    let mut dp = vec![0.0f64; (len_a + 1) * w];
    for i in 1..=len_a {
        dp[i * w] = dp[(i - 1) * w] + gap_a[i - 1];
    }
    for j in 1..=len_b {
        dp[j] = dp[j - 1] + gap_b[j - 1];
    }
    for i in 1..=len_a {
        for j in 1..=len_b {
            let diag = dp[(i - 1) * w + j - 1] + vs(&cols_a[i - 1], &cols_b[j - 1]);
            let up = dp[(i - 1) * w + j] + gap_a[i - 1];
            let left = dp[i * w + j - 1] + gap_b[j - 1];
            dp[i * w + j] = diag.max(up).max(left);
        }
    }

    let tol = 1e-9;
    let (mut i, mut j) = (len_a, len_b);
    let mut steps = Vec::with_capacity(len_a + len_b);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        let step = if i > 0 && j > 0 && (here - (dp[(i - 1) * w + j - 1] + vs(&cols_a[i - 1], &cols_b[j - 1]))).abs() <= tol {
            Step::Diag
        } else if i > 0 && (here - (dp[(i - 1) * w + j] + gap_a[i - 1])).abs() <= tol {
            Step::Up
        } else {
            Step::Left
        };
        match step {
            Step::Diag => {
                i -= 1;
                j -= 1;
            }
            Step::Up => i -= 1,
            Step::Left => j -= 1,
        }
        steps.push(step);
    }
    steps.reverse();

    let mut rows: Profile = vec![Vec::with_capacity(steps.len()); a.len() + b.len()];
    let (mut i, mut j) = (0, 0);
    for step in steps {
        let take_a = matches!(step, Step::Diag | Step::Up);
        let take_b = matches!(step, Step::Diag | Step::Left);
        for (r, row) in a.iter().enumerate() {
            rows[r].push(if take_a { row[i].clone() } else { None });
        }
        for (r, row) in b.iter().enumerate() {
            rows[a.len() + r].push(if take_b { row[j].clone() } else { None });
        }
        i += usize::from(take_a);
        j += usize::from(take_b);
    }
    (rows, dp[len_a * w + len_b])
}

fn as_profile<T: AsRef<str>>(seq: &[T]) -> Profile {
    vec![seq.iter().map(|t| Some(t.as_ref().to_string())).collect()]
}

/// Optimal global alignment of two segment sequences.
pub fn align_pair<T: AsRef<str>>(a: &[T], b: &[T], scoring: &Scoring) -> Alignment {
    let (rows, score) = align_profiles(&as_profile(a), &as_profile(b), scoring);
    Alignment { rows, score }
}

/// Progressive multiple alignment.
///
/// The two sequences with the best pairwise score are aligned first; each
/// remaining sequence then joins in order of its best score against any
/// sequence already placed (ties to the lower index) and is aligned to the
/// growing profile. Gaps already in the profile are never removed. Rows come
/// back in input order and the score is the sum-of-pairs score.
pub fn align_multi<T: AsRef<str> + Sync>(seqs: &[Vec<T>], scoring: &Scoring) -> Alignment {
    match seqs.len() {
        0 => return Alignment { rows: vec![], score: 0.0 },
        1 => {
            return Alignment {
                rows: as_profile(&seqs[0]),
                score: 0.0,
            }
        }
        _ => {}
    }
    let n = seqs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| align_pair(&seqs[i], &seqs[j], scoring).score)
        .collect();
    let mut sim = vec![vec![f64::NEG_INFINITY; n]; n];
    for (&(i, j), &s) in pairs.iter().zip(&scores) {
        sim[i][j] = s;
        sim[j][i] = s;
    }

    let mut best = (0, 1);
    for &(i, j) in &pairs {
        if sim[i][j] > sim[best.0][best.1] {
            best = (i, j);
        }
    }
    let mut order = vec![best.0, best.1];
    let (mut profile, _) = align_profiles(&as_profile(&seqs[best.0]), &as_profile(&seqs[best.1]), scoring);
    while order.len() < n {
        let next = (0..n)
            .filter(|k| !order.contains(k))
            .map(|k| (k, order.iter().map(|&a| sim[a][k]).fold(f64::NEG_INFINITY, f64::max)))
            .fold(None, |acc: Option<(usize, f64)>, (k, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((k, s)),
            })
            .map(|(k, _)| k)
            .expect("an unplaced sequence remains");
        let (merged, _) = align_profiles(&profile, &as_profile(&seqs[next]), scoring);
        profile = merged;
        order.push(next);
    }

    let mut rows = vec![Vec::new(); n];
    for (pos, &seq_index) in order.iter().enumerate() {
        rows[seq_index] = std::mem::take(&mut profile[pos]);
    }
    let score = sum_of_pairs(&rows, scoring);
    Alignment { rows, score }
}

/// An etymon and its descendant forms, by language. A language may list
/// several reflexes (doublets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CognateSet {
    pub etymon_id: String,
    pub etymon: Vec<String>,
    pub reflexes: BTreeMap<String, Vec<Vec<String>>>,
}

/// Where the target cluster sits in an etymon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpan {
    /// Fixed half-open index range; sets whose etymon is too short are skipped.
    Range { start: usize, end: usize },
    /// First occurrence of this token sequence; sets without it are skipped.
    Cluster(Vec<String>),
}

impl TargetSpan {
    fn locate(&self, etymon: &[String]) -> Option<(usize, usize)> {
        match self {
            TargetSpan::Range { start, end } => (*end <= etymon.len()).then_some((*start, *end)),
            TargetSpan::Cluster(tokens) => etymon
                .windows(tokens.len())
                .position(|w| w == tokens.as_slice())
                .map(|i| (i, i + tokens.len())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhilologyError {
    #[error("malformed query: {0}")]
    Query(String),
    #[error("malformed cognate data: {0}")]
    Cognates(String),
}

/// Which reflex outcomes to count, and which of them the rate measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundChangeQuery {
    span: TargetSpan,
    classes: BTreeMap<String, BTreeSet<String>>,
    target_class: String,
}

impl SoundChangeQuery {
    pub fn new(
        span: TargetSpan,
        classes: BTreeMap<String, BTreeSet<String>>,
        target_class: impl Into<String>,
    ) -> Result<Self, PhilologyError> {
        let target_class = target_class.into();
        match &span {
            TargetSpan::Range { start, end } if start >= end => {
                return Err(PhilologyError::Query(format!("empty span [{start}, {end})")))
            }
            TargetSpan::Cluster(t) if t.is_empty() => {
                return Err(PhilologyError::Query("empty cluster".into()))
            }
            _ => {}
        }
        if classes.is_empty() {
            return Err(PhilologyError::Query("no outcome classes".into()));
        }
        let names: Vec<&String> = classes.keys().collect();
        for (i, a) in names.iter().enumerate() {
            if classes[*a].is_empty() {
                return Err(PhilologyError::Query(format!("class `{a}` has no tokens")));
            }
            for b in &names[i + 1..] {
                if let Some(t) = classes[*a].intersection(&classes[*b]).next() {
                    return Err(PhilologyError::Query(format!(
                        "classes `{a}` and `{b}` overlap on `{t}`"
                    )));
                }
            }
        }
        if !classes.contains_key(&target_class) {
            return Err(PhilologyError::Query(format!("target class `{target_class}` is not defined")));
        }
        Ok(SoundChangeQuery {
            span,
            classes,
            target_class,
        })
    }

    pub fn span(&self) -> &TargetSpan {
        &self.span
    }

    pub fn classes(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.classes
    }

    pub fn target_class(&self) -> &str {
        &self.target_class
    }

    /// Class of the reflex material aligned to the target. Material matches a
    /// class when it is non-empty and every segment belongs to the class.
    pub fn classify(&self, segments: &[&str]) -> Option<&str> {
        if segments.is_empty() {
            return None;
        }
        self.classes
            .iter()
            .find(|(_, toks)| segments.iter().all(|s| toks.contains(*s)))
            .map(|(name, _)| name.as_str())
    }
}

/// Reflex tallies for one language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    /// Every reflex examined, including full deletions.
    pub total: usize,
    pub per_class: BTreeMap<String, usize>,
    pub deleted: usize,
}

impl OutcomeCounts {
    fn merge(mut self, other: OutcomeCounts) -> Self {
        self.total += other.total;
        self.deleted += other.deleted;
        for (k, v) in other.per_class {
            *self.per_class.entry(k).or_insert(0) += v;
        }
        self
    }

    pub fn rate(&self, class: &str) -> Option<f64> {
        (self.total > 0).then(|| self.per_class.get(class).copied().unwrap_or(0) as f64 / self.total as f64)
    }
}

/// Reflex segments aligned to the etymon's `[start, end)` span, including
/// insertions between the first and last target segment.
pub fn aligned_material(alignment: &Alignment, start: usize, end: usize) -> Vec<&str> {
    let etymon_row = &alignment.rows[0];
    let mut seen = 0usize;
    let (mut first, mut last) = (None, None);
    for (col, cell) in etymon_row.iter().enumerate() {
        if cell.is_some() {
            if seen == start {
                first = Some(col);
            }
            if seen + 1 == end {
                last = Some(col);
            }
            seen += 1;
        }
    }
    let (Some(first), Some(last)) = (first, last) else {
        return Vec::new();
    };
    alignment.rows[1][first..=last]
        .iter()
        .flatten()
        .map(String::as_str)
        .collect()
}

fn counts_for_set(set: &CognateSet, query: &SoundChangeQuery, language_id: &str, scoring: &Scoring) -> OutcomeCounts {
    let mut counts = OutcomeCounts::default();
    let Some((start, end)) = query.span.locate(&set.etymon) else {
        return counts;
    };
    for reflex in set.reflexes.get(language_id).into_iter().flatten() {
        counts.total += 1;
        let alignment = align_pair(&set.etymon, reflex, scoring);
        let material = aligned_material(&alignment, start, end);
        if material.is_empty() {
            counts.deleted += 1;
        }
        if let Some(class) = query.classify(&material) {
            *counts.per_class.entry(class.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Pooled outcome tallies for one language across all cognate sets.
pub fn outcome_counts(sets: &[CognateSet], query: &SoundChangeQuery, language_id: &str) -> OutcomeCounts {
    let scoring = Scoring::default();
    sets.par_iter()
        .map(|s| counts_for_set(s, query, language_id, &scoring))
        .reduce(OutcomeCounts::default, OutcomeCounts::merge)
}

/// Share of the language's reflexes whose aligned material falls in the
/// query's target class. `None` when the language has no usable reflex.
pub fn outcome_rate(sets: &[CognateSet], query: &SoundChangeQuery, language_id: &str) -> Option<f64> {
    outcome_counts(sets, query, language_id).rate(query.target_class())
}

/// Languages with at least one reflex, sorted.
pub fn attested_languages(sets: &[CognateSet]) -> Vec<String> {
    let langs: BTreeSet<&String> = sets.iter().flat_map(|s| s.reflexes.keys()).collect();
    langs.into_iter().cloned().collect()
}

/// Continuous overlay of outcome rates; languages without data are omitted.
pub fn overlay_from_rates<S: AsRef<str>>(
    feature_id: &str,
    sets: &[CognateSet],
    query: &SoundChangeQuery,
    languages: &[S],
) -> FeatureOverlay {
    let values = languages.iter().filter_map(|l| {
        let l = l.as_ref();
        outcome_rate(sets, query, l).map(|r| (l.to_string(), r))
    });
    FeatureOverlay::new(feature_id, OverlayKind::Continuous, values)
}

/// Parses a cognate file: a JSON array of
/// `{etymon_id, etymon: [tokens], reflexes: {lang: [[tokens], ...]}}`.
pub fn parse_cognates(text: &str) -> Result<Vec<CognateSet>, PhilologyError> {
    let sets: Vec<CognateSet> =
        serde_json::from_str(text).map_err(|e| PhilologyError::Cognates(e.to_string()))?;
    for s in &sets {
        if s.etymon.is_empty() {
            return Err(PhilologyError::Cognates(format!("`{}`: empty etymon", s.etymon_id)));
        }
    }
    Ok(sets)
}

/// Parses a query file:
/// `{"span": [start, end], "classes": {name: [tokens]}, "target": name}`.
/// `"cluster": [tokens]` may replace `span`; `target` may be omitted when
/// only one class is defined.
pub fn parse_query(text: &str) -> Result<SoundChangeQuery, PhilologyError> {
    let bad = |m: &str| PhilologyError::Query(m.to_string());
    let doc: Value = serde_json::from_str(text).map_err(|e| PhilologyError::Query(e.to_string()))?;
    let span = match (doc.get("span"), doc.get("cluster")) {
        (Some(s), None) => {
            let [start, end]: [usize; 2] =
                serde_json::from_value(s.clone()).map_err(|_| bad("`span` must be [start, end]"))?;
            TargetSpan::Range { start, end }
        }
        (None, Some(c)) => TargetSpan::Cluster(
            serde_json::from_value(c.clone()).map_err(|_| bad("`cluster` must be a token list"))?,
        ),
        (Some(_), Some(_)) => return Err(bad("give either `span` or `cluster`, not both")),
        (None, None) => return Err(bad("missing `span`")),
    };
    let classes: BTreeMap<String, BTreeSet<String>> = serde_json::from_value(
        doc.get("classes").cloned().ok_or_else(|| bad("missing `classes`"))?,
    )
    .map_err(|_| bad("`classes` must map names to token lists"))?;
    let target = match doc.get("target") {
        Some(Value::String(t)) => t.clone(),
        Some(_) => return Err(bad("`target` must be a class name")),
        None if classes.len() == 1 => classes.keys().next().cloned().unwrap_or_default(),
        None => return Err(bad("`target` is required when several classes are defined")),
    };
    SoundChangeQuery::new(span, classes, target)
}
