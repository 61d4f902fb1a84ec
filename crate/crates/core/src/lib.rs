//! Dialect-atlas engine: bibliography ingestion, Voronoi dialect zones,
//! typological overlays and sound-change outcome rates.

pub mod cartography;
pub mod color;
pub mod corpus;
pub mod dataset;
pub mod geocode;
pub mod geometry;
pub mod overlay;
pub mod philology;

pub use cartography::{
    apply_overlay, base_map, blend, export_geojson, export_svg, family_palette, highlight_geojson,
    import_geojson, overlay_color, CartographyError, LanguageCircle, MapDocument, Zone,
};
pub use color::Rgb;
pub use corpus::{
    load_corpus, Corpus, CorpusError, CorpusStats, FormattedEntry, LanguageRecord, SitePoint,
    SourceEntry, TopicLabel, ValidationReport,
};
pub use geocode::{GeoCoord, GeocodeCache, GeocodeProvider};
pub use geometry::{voronoi, weighted_centroid, BBox, PlanePoint, SiteSet, StudyRegion, VoronoiCell};
pub use overlay::{FeatureOverlay, OverlayKind};
pub use philology::{
    align_multi, align_pair, outcome_rate, overlay_from_rates, Alignment, CognateSet, Scoring,
    SoundChangeQuery,
};
