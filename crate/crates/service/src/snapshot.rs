//! Immutable bundle of a loaded corpus and every response body derived
//! from it.

use std::collections::BTreeMap;
use std::path::Path;

use atlas_core::corpus::{Finding, Severity};
use atlas_core::dataset::{self, DatasetError};
use atlas_core::{
    apply_overlay, base_map, export_geojson, highlight_geojson, CartographyError, Corpus, CorpusStats, GeoCoord,
    MapDocument, StudyRegion, ValidationReport,
};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct LanguageSummary<'a> {
    id: &'a str,
    name: &'a str,
    family_path: &'a [String],
    n_sources: usize,
    centroid: Option<GeoCoord>,
}

pub struct Snapshot {
    corpus: Corpus,
    map: MapDocument,
    languages: String,
    base: String,
    stats: String,
    sources: BTreeMap<String, String>,
    highlights: BTreeMap<String, String>,
    overlays: BTreeMap<String, String>,
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("response types serialize")
}

impl Snapshot {
    /// Loads a data directory and precomputes all response bodies.
    pub fn load(dir: &Path, region: &StudyRegion) -> Result<Snapshot, ValidationReport> {
        let corpus = dataset::load_dir(dir).map_err(|e: DatasetError| e.report())?;
        Snapshot::build(corpus, region)
    }

    pub fn build(corpus: Corpus, region: &StudyRegion) -> Result<Snapshot, ValidationReport> {
        let map = match base_map(&corpus, region) {
            Ok(m) => m,
            Err(CartographyError::EmptyMap) => MapDocument {
                region: *region,
                zones: Vec::new(),
                circles: Vec::new(),
                legend: None,
            },
            Err(e) => {
                return Err(ValidationReport {
                    findings: vec![Finding {
                        severity: Severity::Error,
                        subject: "map".into(),
                        field: None,
                        message: e.to_string(),
                    }],
                })
            }
        };

        let centroids: BTreeMap<&str, GeoCoord> =
            map.circles.iter().map(|c| (c.language_id.as_str(), c.center)).collect();
        let summaries: Vec<LanguageSummary> = corpus
            .languages()
            .map(|l| LanguageSummary {
                id: &l.id,
                name: &l.name,
                family_path: &l.family_path,
                n_sources: corpus.n_sources(&l.id),
                centroid: centroids.get(l.id.as_str()).copied(),
            })
            .collect();
        let languages = to_json(&summaries);

        let mut sources = BTreeMap::new();
        let mut highlights = BTreeMap::new();
        for l in corpus.languages() {
            let bib = corpus.bibliography(&l.id).expect("language is known");
            sources.insert(l.id.clone(), to_json(&bib));
            highlights.insert(l.id.clone(), highlight_geojson(&map, &l.id));
        }
        let overlays = corpus
            .overlays()
            .iter()
            .map(|(id, o)| (id.clone(), export_geojson(&apply_overlay(&map, o))))
            .collect();

        Ok(Snapshot {
            base: export_geojson(&map),
            stats: to_json(&corpus.stats()),
            languages,
            sources,
            highlights,
            overlays,
            corpus,
            map,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn map(&self) -> &MapDocument {
        &self.map
    }

    pub fn stats(&self) -> CorpusStats {
        self.corpus.stats()
    }

    pub fn languages_body(&self) -> &str {
        &self.languages
    }

    pub fn base_body(&self) -> &str {
        &self.base
    }

    pub fn stats_body(&self) -> &str {
        &self.stats
    }

    pub fn sources_body(&self, language_id: &str) -> Option<&str> {
        self.sources.get(language_id).map(String::as_str)
    }

    pub fn highlight_body(&self, language_id: &str) -> Option<&str> {
        self.highlights.get(language_id).map(String::as_str)
    }

    pub fn overlay_body(&self, feature_id: &str) -> Option<&str> {
        self.overlays.get(feature_id).map(String::as_str)
    }
}
