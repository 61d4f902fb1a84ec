//! Bibliography ingestion and queries.
//!
//! A corpus is built from up to three JSON documents:
//!
//! * references: an array of BibTeX-like records, each annotated with the
//!   languages it covers, the places its data was collected and its topics;
//! * languages: an object mapping language id to name, genetic
//!   classification and an optional fallback coordinate;
//! * features (optional): typological overlays in the overlay file format.
//!
//! Loading validates everything up front. Either the whole corpus loads, or
//! a [`ValidationReport`] listing every error comes back; a partially built
//! corpus is never returned. Warnings (unknown topics, odd years, unknown
//! entry types) are kept on the loaded corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geocode::{normalize_query, GeoCoord, GeocodeCache};
use crate::overlay::{overlays_to_json, parse_overlays, FeatureOverlay};

pub const MIN_YEAR: i64 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryType {
    Article,
    Book,
    Thesis,
    #[serde(rename = "incollection")]
    InCollection,
    Misc,
}

impl EntryType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntryType::Article => "article",
            EntryType::Book => "book",
            EntryType::Thesis => "thesis",
            EntryType::InCollection => "incollection",
            EntryType::Misc => "misc",
        }
    }

    /// Maps a BibTeX entry type onto the supported set. `None` for types
    /// outside the vocabulary.
    fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_lowercase().as_str() {
            "article" => EntryType::Article,
            "book" => EntryType::Book,
            "thesis" | "phdthesis" | "mastersthesis" => EntryType::Thesis,
            "incollection" | "inproceedings" | "inbook" => EntryType::InCollection,
            "misc" => EntryType::Misc,
            _ => return None,
        })
    }
}

/// Topic annotation. The ten seeded labels are recognized; anything else is
/// kept as [`TopicLabel::Other`] and flagged as a warning on load.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicLabel {
    Overview,
    Syntax,
    PhoneticsPhonology,
    Historical,
    Morphology,
    Sociolinguistics,
    Lexicography,
    Corpora,
    Dialectology,
    Comparative,
    Other(String),
}

impl TopicLabel {
    pub const SEEDED: [TopicLabel; 10] = [
        TopicLabel::Overview,
        TopicLabel::Syntax,
        TopicLabel::PhoneticsPhonology,
        TopicLabel::Historical,
        TopicLabel::Morphology,
        TopicLabel::Sociolinguistics,
        TopicLabel::Lexicography,
        TopicLabel::Corpora,
        TopicLabel::Dialectology,
        TopicLabel::Comparative,
    ];

    /// Case- and whitespace-normalizing constructor.
    pub fn parse(raw: &str) -> Self {
        let norm = normalize_query(raw);
        match norm.as_str() {
            "overview" | "overview (descriptive grammars)" => TopicLabel::Overview,
            "syntax" => TopicLabel::Syntax,
            "phonetics/phonology" | "phonetics" | "phonology" | "phonetics and phonology" => {
                TopicLabel::PhoneticsPhonology
            }
            "historical" => TopicLabel::Historical,
            "morphology" => TopicLabel::Morphology,
            "sociolinguistics" => TopicLabel::Sociolinguistics,
            "lexicography" => TopicLabel::Lexicography,
            "corpora" => TopicLabel::Corpora,
            "dialectology" => TopicLabel::Dialectology,
            "comparative" => TopicLabel::Comparative,
            _ => TopicLabel::Other(norm),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            TopicLabel::Overview => "overview",
            TopicLabel::Syntax => "syntax",
            TopicLabel::PhoneticsPhonology => "phonetics/phonology",
            TopicLabel::Historical => "historical",
            TopicLabel::Morphology => "morphology",
            TopicLabel::Sociolinguistics => "sociolinguistics",
            TopicLabel::Lexicography => "lexicography",
            TopicLabel::Corpora => "corpora",
            TopicLabel::Dialectology => "dialectology",
            TopicLabel::Comparative => "comparative",
            TopicLabel::Other(s) => s,
        }
    }

    pub fn is_seeded(&self) -> bool {
        !matches!(self, TopicLabel::Other(_))
    }
}

impl fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Publication venue fields. Numeric values in the input are stored as text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Venue {
    pub journal: Option<String>,
    pub booktitle: Option<String>,
    pub publisher: Option<String>,
    pub school: Option<String>,
    pub volume: Option<String>,
    pub number: Option<String>,
    pub pages: Option<String>,
}

const VENUE_FIELDS: [&str; 7] = [
    "journal", "booktitle", "publisher", "school", "volume", "number", "pages",
];

impl Venue {
    fn field_mut(&mut self, name: &str) -> &mut Option<String> {
        match name {
            "journal" => &mut self.journal,
            "booktitle" => &mut self.booktitle,
            "publisher" => &mut self.publisher,
            "school" => &mut self.school,
            "volume" => &mut self.volume,
            "number" => &mut self.number,
            "pages" => &mut self.pages,
            _ => unreachable!("not a venue field: {name}"),
        }
    }

    fn field(&self, name: &str) -> Option<&String> {
        match name {
            "journal" => self.journal.as_ref(),
            "booktitle" => self.booktitle.as_ref(),
            "publisher" => self.publisher.as_ref(),
            "school" => self.school.as_ref(),
            "volume" => self.volume.as_ref(),
            "number" => self.number.as_ref(),
            "pages" => self.pages.as_ref(),
            _ => None,
        }
    }

    /// Human-readable venue, e.g. `Journal 43(3): 482--510`.
    pub fn render(&self) -> Option<String> {
        let mut parts = Vec::new();
        if let Some(j) = &self.journal {
            let mut s = j.clone();
            if let Some(v) = &self.volume {
                s.push(' ');
                s.push_str(v);
            }
            if let Some(n) = &self.number {
                s.push_str(&format!("({n})"));
            }
            if let Some(p) = &self.pages {
                s.push_str(&format!(": {p}"));
            }
            parts.push(s);
        } else {
            if let Some(b) = &self.booktitle {
                let mut s = format!("In {b}");
                if let Some(p) = &self.pages {
                    s.push_str(&format!(", pp. {p}"));
                }
                parts.push(s);
            }
            if let Some(s) = &self.school {
                parts.push(s.clone());
            }
        }
        if let Some(p) = &self.publisher {
            parts.push(p.clone());
        }
        (!parts.is_empty()).then(|| parts.join(". "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEntry {
    pub id: String,
    pub entry_type: EntryType,
    pub title: String,
    pub authors: Vec<String>,
    pub year: i64,
    pub venue: Venue,
    pub url: Option<String>,
    /// Language id to annotated location names, in input order, deduplicated.
    pub languages: BTreeMap<String, Vec<String>>,
    pub topics: Vec<TopicLabel>,
    /// Fields outside the known schema, carried through untouched.
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRecord {
    pub id: String,
    pub name: String,
    /// Genetic classification, outermost family first.
    pub family_path: Vec<String>,
    pub reference_point: Option<GeoCoord>,
}

impl LanguageRecord {
    pub fn family(&self) -> &str {
        &self.family_path[0]
    }
}

/// A geocoded data-collection location for one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitePoint {
    pub location_name: String,
    pub coord: GeoCoord,
    /// Number of sources annotating this location for the language.
    pub weight: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sources: usize,
    pub n_lects: usize,
    pub n_locations: usize,
    pub topic_counts: BTreeMap<String, usize>,
}

/// A bibliography line with its location and topic annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormattedEntry {
    pub id: String,
    pub year: i64,
    pub text: String,
    pub locations: Vec<String>,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    #[serde(rename = "ERROR")]
    Error,
    #[serde(rename = "WARN")]
    Warn,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warn => "WARN",
        })
    }
}

/// One validation finding. Renders as
/// `ERROR [subject] field: message` on a single line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub subject: String,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.severity, self.subject)?;
        if let Some(field) = &self.field {
            write!(f, " {field}:")?;
        }
        let msg = self.message.replace('\n', " ");
        write!(f, " {msg}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, subject: &str, field: Option<&str>, message: String) {
        self.findings.push(Finding {
            severity,
            subject: subject.to_string(),
            field: field.map(str::to_string),
            message,
        });
    }

    fn error(&mut self, subject: &str, field: Option<&str>, message: impl Into<String>) {
        self.push(Severity::Error, subject, field, message.into());
    }

    fn warn(&mut self, subject: &str, field: Option<&str>, message: impl Into<String>) {
        self.push(Severity::Warn, subject, field, message.into());
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warn)
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("corpus failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown language id `{0}`")]
    UnknownLanguage(String),
}

/// The serialized form of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDocuments {
    pub references: String,
    pub languages: String,
    pub features: Option<String>,
}

/// A validated, cross-referenced bibliography. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sources: Vec<SourceEntry>,
    languages: BTreeMap<String, LanguageRecord>,
    overlays: BTreeMap<String, FeatureOverlay>,
    has_features_doc: bool,
    by_language: BTreeMap<String, Vec<usize>>,
    gazetteer: BTreeMap<String, GeoCoord>,
    warnings: ValidationReport,
}

/// Parses and validates the corpus documents.
pub fn load_corpus(
    references_doc: &str,
    languages_doc: &str,
    features_doc: Option<&str>,
) -> Result<Corpus, CorpusError> {
    let mut report = ValidationReport::default();

    let languages = parse_languages(languages_doc, &mut report);
    let sources = parse_references(references_doc, &mut report);

    if let (Some(languages), Some(sources)) = (&languages, &sources) {
        check_references(sources, languages, &mut report);
    }

    let overlays = match features_doc {
        None => BTreeMap::new(),
        Some(text) => match parse_overlays(text) {
            Ok(o) => {
                if let Some(languages) = &languages {
                    for overlay in o.values() {
                        let unknown: Vec<&str> = overlay
                            .values
                            .keys()
                            .filter(|k| !languages.contains_key(*k))
                            .map(String::as_str)
                            .collect();
                        if !unknown.is_empty() {
                            report.warn(
                                &format!("features:{}", overlay.feature_id),
                                Some("values"),
                                format!("values for unknown languages: {}", unknown.join(", ")),
                            );
                        }
                    }
                }
                o
            }
            Err(e) => {
                report.error("features", None, e.to_string());
                BTreeMap::new()
            }
        },
    };

    if report.has_errors() {
        return Err(CorpusError::Invalid(report));
    }
    let (Some(languages), Some(sources)) = (languages, sources) else {
        unreachable!("parse failures always record an error");
    };

    let mut by_language: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        for lang in s.languages.keys() {
            by_language.entry(lang.clone()).or_default().push(i);
        }
    }

    Ok(Corpus {
        sources,
        languages,
        overlays,
        has_features_doc: features_doc.is_some(),
        by_language,
        gazetteer: BTreeMap::new(),
        warnings: report,
    })
}

fn current_year() -> i64 {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    1970 + (secs / 31_556_952) as i64
}

fn parse_languages(text: &str, report: &mut ValidationReport) -> Option<BTreeMap<String, LanguageRecord>> {
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            report.error("languages", None, format!("invalid JSON: {e}"));
            return None;
        }
    };
    let Value::Object(map) = doc else {
        report.error("languages", None, "expected an object keyed by language id");
        return None;
    };
    let before = report.findings.len();
    let mut out = BTreeMap::new();
    for (id, body) in map {
        let subject = format!("language:{id}");
        if id.trim().is_empty() {
            report.error(&subject, None, "empty language id");
            continue;
        }
        let Value::Object(body) = body else {
            report.error(&subject, None, "expected an object");
            continue;
        };
        let name = match body.get("name") {
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
            Some(_) => {
                report.error(&subject, Some("name"), "expected a non-empty string");
                None
            }
            None => {
                report.error(&subject, Some("name"), "missing");
                None
            }
        };
        let family_path = match body.get("family") {
            Some(Value::Array(items)) => {
                let path: Option<Vec<String>> = items
                    .iter()
                    .map(|v| v.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string))
                    .collect();
                match path {
                    Some(p) if !p.is_empty() => Some(p),
                    Some(_) => {
                        report.error(&subject, Some("family"), "empty classification (isolates use a one-element path)");
                        None
                    }
                    None => {
                        report.error(&subject, Some("family"), "expected non-empty strings");
                        None
                    }
                }
            }
            Some(_) => {
                report.error(&subject, Some("family"), "expected an array of strings");
                None
            }
            None => {
                report.error(&subject, Some("family"), "missing");
                None
            }
        };
        let reference_point = match body.get("coord") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => match serde_json::from_value::<[f64; 2]>(v.clone()) {
                Ok([lon, lat]) => GeoCoord::new(lon, lat).map(Some).map_err(|e| e.to_string()),
                Err(_) => Err("expected [lon, lat]".to_string()),
            },
        };
        let reference_point = match reference_point {
            Ok(p) => p,
            Err(msg) => {
                report.error(&subject, Some("coord"), msg);
                continue;
            }
        };
        if let (Some(name), Some(family_path)) = (name, family_path) {
            out.insert(
                id.clone(),
                LanguageRecord {
                    id,
                    name,
                    family_path,
                    reference_point,
                },
            );
        }
    }
    let failed = report.findings[before..]
        .iter()
        .any(|f| f.severity == Severity::Error);
    (!failed).then_some(out)
}

/// Text of a scalar field; numbers are accepted and rendered as text.
fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Citation-key style id: first author's surname followed by the year.
fn derived_key(authors: &[String], year: i64) -> String {
    let first = authors.first().map(String::as_str).unwrap_or("anon");
    let surname = match first.split_once(',') {
        Some((last, _)) => last,
        None => first.split_whitespace().last().unwrap_or(first),
    };
    let mut key: String = surname
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    if key.is_empty() {
        key.push_str("anon");
    }
    format!("{key}{year}")
}

fn parse_references(text: &str, report: &mut ValidationReport) -> Option<Vec<SourceEntry>> {
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            report.error("references", None, format!("invalid JSON: {e}"));
            return None;
        }
    };
    let Value::Array(items) = doc else {
        report.error("references", None, "expected an array of source records");
        return None;
    };

    // Explicit ids first, so derived keys never shadow them.
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut explicit: Vec<Option<String>> = Vec::with_capacity(items.len());
    let before = report.findings.len();
    for (i, item) in items.iter().enumerate() {
        let id = match item.get("id") {
            None => None,
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
            Some(_) => {
                report.error(&format!("#{i}"), Some("id"), "expected a non-empty string");
                None
            }
        };
        if let Some(id) = &id {
            if !used.insert(id.clone()) {
                report.error(id, Some("id"), "duplicate source id");
            }
        }
        explicit.push(id);
    }

    let this_year = current_year();
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let label = explicit[i].clone().unwrap_or_else(|| format!("#{i}"));
        let start = report.findings.len();
        if let Some(entry) = parse_entry(item, &label, explicit[i].clone(), &mut used, this_year, report) {
            if entry.id != label {
                for f in &mut report.findings[start..] {
                    if f.subject == label {
                        f.subject = entry.id.clone();
                    }
                }
            }
            out.push(entry);
        }
    }
    let failed = report.findings[before..]
        .iter()
        .any(|f| f.severity == Severity::Error);
    (!failed).then_some(out)
}

fn parse_entry(
    item: &Value,
    label: &str,
    explicit_id: Option<String>,
    used: &mut BTreeSet<String>,
    this_year: i64,
    report: &mut ValidationReport,
) -> Option<SourceEntry> {
    let Value::Object(obj) = item else {
        report.error(label, None, "source record must be an object");
        return None;
    };
    let mut ok = true;
    let mut fail = |report: &mut ValidationReport, field: &str, msg: &str| {
        report.error(label, Some(field), msg);
        ok = false;
    };

    let entry_type = match obj.get("type") {
        Some(Value::String(s)) => EntryType::parse(s).unwrap_or_else(|| {
            report.warn(label, Some("type"), format!("unknown entry type `{s}`, treated as misc"));
            EntryType::Misc
        }),
        Some(_) => {
            fail(report, "type", "expected a string");
            EntryType::Misc
        }
        None => {
            fail(report, "type", "missing");
            EntryType::Misc
        }
    };

    let title = match obj.get("title") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(_) => {
            fail(report, "title", "expected a non-empty string");
            String::new()
        }
        None => {
            fail(report, "title", "missing");
            String::new()
        }
    };

    let authors: Vec<String> = match obj.get("author") {
        Some(Value::Array(a)) => {
            let names: Option<Vec<String>> = a
                .iter()
                .map(|v| v.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string))
                .collect();
            match names {
                Some(n) if !n.is_empty() => n,
                Some(_) => {
                    fail(report, "author", "author list is empty");
                    vec![]
                }
                None => {
                    fail(report, "author", "authors must be non-empty strings");
                    vec![]
                }
            }
        }
        Some(Value::String(s)) if !s.trim().is_empty() => {
            s.split(" and ").map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect()
        }
        Some(_) => {
            fail(report, "author", "expected an array of names");
            vec![]
        }
        None => {
            fail(report, "author", "missing");
            vec![]
        }
    };

    let year = match obj.get("year") {
        Some(Value::Number(n)) if n.as_i64().is_some() => n.as_i64(),
        Some(Value::String(s)) if s.trim().parse::<i64>().is_ok() => s.trim().parse().ok(),
        Some(_) => {
            fail(report, "year", "expected an integer");
            None
        }
        None => {
            fail(report, "year", "missing");
            None
        }
    };
    if let Some(y) = year {
        if !(MIN_YEAR..=this_year).contains(&y) {
            report.warn(label, Some("year"), format!("year {y} outside [{MIN_YEAR}, {this_year}]"));
        }
    }

    let mut venue = Venue::default();
    for field in VENUE_FIELDS {
        match obj.get(field) {
            None | Some(Value::Null) => {}
            Some(v) => match scalar_text(v) {
                Some(t) => *venue.field_mut(field) = Some(t),
                None => fail(report, field, "expected a string or number"),
            },
        }
    }

    let url = match obj.get("url") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            fail(report, "url", "expected a string");
            None
        }
    };

    let mut languages = BTreeMap::new();
    match obj.get("languages") {
        Some(Value::Object(m)) => {
            if m.is_empty() {
                report.warn(label, Some("languages"), "no languages annotated");
            }
            for (lang, locs) in m {
                let Value::Array(locs) = locs else {
                    fail(report, "languages", &format!("`{lang}`: expected an array of location names"));
                    continue;
                };
                let mut seen = BTreeSet::new();
                let mut names = Vec::new();
                for loc in locs {
                    match loc.as_str().map(str::trim).filter(|s| !s.is_empty()) {
                        Some(name) => {
                            if seen.insert(normalize_query(name)) {
                                names.push(name.to_string());
                            } else {
                                report.warn(
                                    label,
                                    Some("languages"),
                                    format!("`{lang}`: duplicate location `{name}` collapsed"),
                                );
                            }
                        }
                        None => fail(report, "languages", &format!("`{lang}`: location names must be non-empty strings")),
                    }
                }
                languages.insert(lang.clone(), names);
            }
        }
        Some(_) => fail(report, "languages", "expected an object of language id to locations"),
        None => fail(report, "languages", "missing"),
    }

    let mut topics = Vec::new();
    match obj.get("topics") {
        Some(Value::Array(a)) if !a.is_empty() => {
            for t in a {
                match t.as_str().filter(|s| !s.trim().is_empty()) {
                    Some(s) => {
                        let topic = TopicLabel::parse(s);
                        if !topic.is_seeded() {
                            report.warn(label, Some("topics"), format!("unknown topic `{topic}`"));
                        }
                        if !topics.contains(&topic) {
                            topics.push(topic);
                        }
                    }
                    None => fail(report, "topics", "topics must be non-empty strings"),
                }
            }
        }
        Some(Value::Array(_)) => fail(report, "topics", "at least one topic is required"),
        Some(_) => fail(report, "topics", "expected an array of strings"),
        None => fail(report, "topics", "missing"),
    }

    const KNOWN: [&str; 15] = [
        "id", "type", "title", "author", "year", "journal", "booktitle", "publisher", "school",
        "volume", "number", "pages", "url", "languages", "topics",
    ];
    let extra: BTreeMap<String, Value> = obj
        .iter()
        .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    if !ok {
        return None;
    }
    let year = year.expect("year validated");
    let id = explicit_id.unwrap_or_else(|| {
        let base = derived_key(&authors, year);
        let mut candidate = base.clone();
        let mut suffix = b'b';
        while used.contains(&candidate) {
            candidate = if suffix <= b'z' {
                format!("{base}{}", suffix as char)
            } else {
                format!("{base}_{}", suffix - b'a')
            };
            suffix += 1;
        }
        used.insert(candidate.clone());
        candidate
    });

    Some(SourceEntry {
        id,
        entry_type,
        title,
        authors,
        year,
        venue,
        url,
        languages,
        topics,
        extra,
    })
}

fn check_references(
    sources: &[SourceEntry],
    languages: &BTreeMap<String, LanguageRecord>,
    report: &mut ValidationReport,
) {
    let mut dangling: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in sources {
        for lang in s.languages.keys() {
            if !languages.contains_key(lang) {
                dangling.entry(lang).or_default().push(&s.id);
            }
        }
    }
    if !dangling.is_empty() {
        let listing: Vec<String> = dangling
            .iter()
            .map(|(lang, ids)| format!("{lang} (cited by {})", ids.join(", ")))
            .collect();
        report.error(
            "references",
            Some("languages"),
            format!("unresolved language ids: {}", listing.join("; ")),
        );
    }
}

impl Corpus {
    pub fn empty() -> Self {
        load_corpus("[]", "{}", None).expect("empty corpus is valid")
    }

    /// Attaches coordinates for annotated locations. A language-scoped cache
    /// key (`language/location`) takes precedence over the bare name.
    pub fn with_gazetteer(mut self, cache: &GeocodeCache) -> Self {
        let mut gazetteer = BTreeMap::new();
        for s in &self.sources {
            for (lang, locs) in &s.languages {
                for loc in locs {
                    let scoped = scoped_key(lang, loc);
                    let hit = cache.get(&scoped).map(|e| (scoped, e.coord)).or_else(|| {
                        cache.get(loc).map(|e| (normalize_query(loc), e.coord))
                    });
                    if let Some((key, coord)) = hit {
                        gazetteer.insert(key, coord);
                    }
                }
            }
        }
        self.gazetteer = gazetteer;
        self
    }

    pub fn sources(&self) -> &[SourceEntry] {
        &self.sources
    }

    pub fn source(&self, id: &str) -> Option<&SourceEntry> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageRecord> {
        self.languages.values()
    }

    pub fn language(&self, id: &str) -> Option<&LanguageRecord> {
        self.languages.get(id)
    }

    pub fn overlays(&self) -> &BTreeMap<String, FeatureOverlay> {
        &self.overlays
    }

    pub fn overlay(&self, feature_id: &str) -> Option<&FeatureOverlay> {
        self.overlays.get(feature_id)
    }

    /// Warnings raised while loading.
    pub fn warnings(&self) -> &ValidationReport {
        &self.warnings
    }

    fn require(&self, language_id: &str) -> Result<&LanguageRecord, CorpusError> {
        self.languages
            .get(language_id)
            .ok_or_else(|| CorpusError::UnknownLanguage(language_id.to_string()))
    }

    pub fn sources_for_language(&self, language_id: &str) -> Result<Vec<&SourceEntry>, CorpusError> {
        self.require(language_id)?;
        Ok(self
            .by_language
            .get(language_id)
            .map(|idx| idx.iter().map(|&i| &self.sources[i]).collect())
            .unwrap_or_default())
    }

    pub fn n_sources(&self, language_id: &str) -> usize {
        self.by_language.get(language_id).map_or(0, Vec::len)
    }

    fn coord_for(&self, language_id: &str, location: &str) -> Option<GeoCoord> {
        self.gazetteer
            .get(&scoped_key(language_id, location))
            .or_else(|| self.gazetteer.get(&normalize_query(location)))
            .copied()
    }

    /// Annotation counts per location for a language, geocoded or not.
    /// Keys are display names; spellings differing only in case or spacing
    /// are merged under the lexicographically smallest spelling.
    pub fn annotation_counts(&self, language_id: &str) -> Result<BTreeMap<String, u32>, CorpusError> {
        let mut grouped: BTreeMap<String, (String, u32)> = BTreeMap::new();
        for s in self.sources_for_language(language_id)? {
            for loc in &s.languages[language_id] {
                let slot = grouped
                    .entry(normalize_query(loc))
                    .or_insert_with(|| (loc.clone(), 0));
                if loc < &slot.0 {
                    slot.0 = loc.clone();
                }
                slot.1 += 1;
            }
        }
        Ok(grouped.into_values().collect())
    }

    /// Geocoded sites for a language, ordered by location name. Locations
    /// without a gazetteer entry are left out; see
    /// [`Corpus::unresolved_locations`].
    pub fn sites_for_language(&self, language_id: &str) -> Result<Vec<SitePoint>, CorpusError> {
        Ok(self
            .annotation_counts(language_id)?
            .into_iter()
            .filter_map(|(name, weight)| {
                self.coord_for(language_id, &name).map(|coord| SitePoint {
                    location_name: name,
                    coord,
                    weight,
                })
            })
            .collect())
    }

    /// `(language id, location name)` pairs with no coordinate, sorted.
    pub fn unresolved_locations(&self) -> Vec<(String, String)> {
        let mut out = BTreeSet::new();
        for s in &self.sources {
            for (lang, locs) in &s.languages {
                for loc in locs {
                    if self.coord_for(lang, loc).is_none() {
                        out.insert((lang.clone(), loc.clone()));
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Bibliography for one language, sorted by year, then first author.
    pub fn bibliography(&self, language_id: &str) -> Result<Vec<FormattedEntry>, CorpusError> {
        let mut entries = self.sources_for_language(language_id)?;
        entries.sort_by(|a, b| {
            (a.year, &a.authors[0], &a.title, &a.id).cmp(&(b.year, &b.authors[0], &b.title, &b.id))
        });
        Ok(entries
            .into_iter()
            .map(|s| format_entry(s, language_id))
            .collect())
    }

    pub fn stats(&self) -> CorpusStats {
        let mut topic_counts = BTreeMap::new();
        for s in &self.sources {
            for t in &s.topics {
                *topic_counts.entry(t.as_str().to_string()).or_insert(0) += 1;
            }
        }
        let mut points = BTreeSet::new();
        for s in &self.sources {
            for (lang, locs) in &s.languages {
                points.extend(locs.iter().filter_map(|l| self.coord_for(lang, l)));
            }
        }
        CorpusStats {
            n_sources: self.sources.len(),
            n_lects: self.by_language.len(),
            n_locations: points.len(),
            topic_counts,
        }
    }

    /// Serializes back to the input document formats.
    pub fn to_documents(&self) -> CorpusDocuments {
        let refs: Vec<Value> = self.sources.iter().map(source_to_json).collect();
        let langs: Map<String, Value> = self
            .languages
            .values()
            .map(|l| {
                let mut o = Map::new();
                o.insert("name".into(), Value::String(l.name.clone()));
                o.insert("family".into(), serde_json::json!(l.family_path));
                if let Some(c) = l.reference_point {
                    o.insert("coord".into(), serde_json::json!([c.lon, c.lat]));
                }
                (l.id.clone(), Value::Object(o))
            })
            .collect();
        let pretty = |v: &Value| {
            let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
            s.push('\n');
            s
        };
        CorpusDocuments {
            references: pretty(&Value::Array(refs)),
            languages: pretty(&Value::Object(langs)),
            features: self
                .has_features_doc
                .then(|| overlays_to_json(self.overlays.values())),
        }
    }
}

fn scoped_key(language_id: &str, location: &str) -> String {
    normalize_query(&format!("{language_id}/{location}"))
}

fn source_to_json(s: &SourceEntry) -> Value {
    let mut o = Map::new();
    o.insert("id".into(), Value::String(s.id.clone()));
    o.insert("type".into(), Value::String(s.entry_type.as_str().into()));
    o.insert("title".into(), Value::String(s.title.clone()));
    o.insert("author".into(), serde_json::json!(s.authors));
    o.insert("year".into(), serde_json::json!(s.year));
    for field in VENUE_FIELDS {
        if let Some(v) = s.venue.field(field) {
            o.insert(field.into(), Value::String(v.clone()));
        }
    }
    if let Some(u) = &s.url {
        o.insert("url".into(), Value::String(u.clone()));
    }
    o.insert("languages".into(), serde_json::json!(s.languages));
    let topics: Vec<&str> = s.topics.iter().map(TopicLabel::as_str).collect();
    o.insert("topics".into(), serde_json::json!(topics));
    for (k, v) in &s.extra {
        o.insert(k.clone(), v.clone());
    }
    Value::Object(o)
}

fn format_authors(authors: &[String]) -> String {
    match authors {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn format_entry(s: &SourceEntry, language_id: &str) -> FormattedEntry {
    let locations = s.languages.get(language_id).cloned().unwrap_or_default();
    let topics: Vec<String> = s.topics.iter().map(|t| t.as_str().to_string()).collect();
    let mut text = format!("{} ({}). {}.", format_authors(&s.authors), s.year, s.title);
    if let Some(v) = s.venue.render() {
        text.push_str(&format!(" {v}."));
    }
    if let Some(u) = &s.url {
        text.push_str(&format!(" {u}"));
    }
    if !locations.is_empty() {
        text.push_str(&format!(" Locations: {}.", locations.join(", ")));
    }
    for t in &topics {
        text.push_str(&format!(" [{t}]"));
    }
    FormattedEntry {
        id: s.id.clone(),
        year: s.year,
        text,
        locations,
        topics,
    }
}
