//! Map assembly and export.
//!
//! The base map colors each Voronoi zone by the genetic family of the
//! languages that own its site, averaging RGB channels when a zone is shared,
//! and draws one circle per language at the weighted centroid of its sites.
//! Feature overlays recolor the same zones on a two-color scale.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{round_channel, Rgb};
use crate::corpus::{Corpus, CorpusError, LanguageRecord};
use crate::geocode::GeoCoord;
use crate::geometry::{self, GeometryError, SiteOwner, SiteSet, StudyRegion};
use crate::overlay::{FeatureOverlay, OverlayKind, NO_DATA_COLOR};

/// Radius of a circle for one source; radii grow with the square root of
/// the source count so circle area tracks the count.
pub const BASE_RADIUS_PX: f64 = 4.0;
/// Radius for languages drawn from a reference point with no sources.
pub const MIN_RADIUS_PX: f64 = 2.0;

/// ColorBrewer Set3, twelve qualitative colors.
pub const FAMILY_PALETTE: [Rgb; 12] = [
    Rgb::from_u32(0x8dd3c7),
    Rgb::from_u32(0xffffb3),
    Rgb::from_u32(0xbebada),
    Rgb::from_u32(0xfb8072),
    Rgb::from_u32(0x80b1d3),
    Rgb::from_u32(0xfdb462),
    Rgb::from_u32(0xb3de69),
    Rgb::from_u32(0xfccde5),
    Rgb::from_u32(0xd9d9d9),
    Rgb::from_u32(0xbc80bd),
    Rgb::from_u32(0xccebc5),
    Rgb::from_u32(0xffed6f),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartographyError {
    #[error("nothing to draw: no geocoded sites and no reference points")]
    EmptyMap,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("SVG width must be at least 64 px, got {0}")]
    InvalidWidth(u32),
    #[error("malformed map GeoJSON: {0}")]
    Parse(String),
}

/// Radius for a language or site with `n` sources.
pub fn circle_radius(n: usize) -> f64 {
    if n == 0 {
        MIN_RADIUS_PX
    } else {
        BASE_RADIUS_PX * (n as f64).sqrt()
    }
}

/// Assigns each top-level family a color. Families are sorted; the first
/// twelve take the palette in order and later ones reuse it darkened by a
/// further 25% per pass.
pub fn family_palette<'a>(languages: impl IntoIterator<Item = &'a LanguageRecord>) -> BTreeMap<String, Rgb> {
    let families: BTreeSet<&str> = languages.into_iter().map(LanguageRecord::family).collect();
    families
        .into_iter()
        .enumerate()
        .map(|(i, fam)| {
            let base = FAMILY_PALETTE[i % FAMILY_PALETTE.len()];
            let pass = (i / FAMILY_PALETTE.len()) as i32;
            let k = 0.75f64.powi(pass);
            let shade = |c: u8| round_channel(f64::from(c) * k);
            (fam.to_string(), Rgb::new(shade(base.r), shade(base.g), shade(base.b)))
        })
        .collect()
}

/// Channel-wise mean, rounded half-up. `None` for an empty list.
pub fn blend(colors: &[Rgb]) -> Option<Rgb> {
    if colors.is_empty() {
        return None;
    }
    let n = colors.len() as u32;
    let mean = |ch: fn(&Rgb) -> u8| -> u8 {
        let sum: u32 = colors.iter().map(|c| u32::from(ch(c))).sum();
        // floor(sum / n + 1/2) in integers
        ((2 * sum + n) / (2 * n)) as u8
    };
    Some(Rgb::new(mean(|c| c.r), mean(|c| c.g), mean(|c| c.b)))
}

/// Color for a language on an overlay, or `None` when the overlay has no
/// value for it. Interpolates linearly between the scale endpoints.
pub fn overlay_color(overlay: &FeatureOverlay, language_id: &str) -> Option<Rgb> {
    let v = overlay.value(language_id)?.clamp(0.0, 1.0);
    let v = match overlay.kind {
        OverlayKind::Binary => v.round(),
        OverlayKind::Continuous => v,
    };
    let (zero, one) = (overlay.scale.color_zero, overlay.scale.color_one);
    if v == 0.0 {
        return Some(zero);
    }
    if v == 1.0 {
        return Some(one);
    }
    let lerp = |a: u8, b: u8| round_channel(f64::from(a) + v * (f64::from(b) - f64::from(a)));
    Some(Rgb::new(lerp(zero.r, one.r), lerp(zero.g, one.g), lerp(zero.b, one.b)))
}

/// [`overlay_color`] with the neutral no-data fill.
pub fn overlay_fill(overlay: &FeatureOverlay, language_id: &str) -> Rgb {
    overlay_color(overlay, language_id).unwrap_or(NO_DATA_COLOR)
}

/// A styled Voronoi zone in geographic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub site_index: usize,
    pub site: GeoCoord,
    /// Counter-clockwise ring, first vertex not repeated.
    pub polygon: Vec<GeoCoord>,
    pub owners: Vec<SiteOwner>,
    pub neighbors: Vec<usize>,
    pub fill: Rgb,
}

impl Zone {
    /// Distinct owner language ids, sorted.
    pub fn owner_languages(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.owners.iter().map(|o| o.language_id.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn source_count(&self) -> u32 {
        self.owners.iter().map(|o| o.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageCircle {
    pub language_id: String,
    pub name: String,
    pub family: String,
    pub center: GeoCoord,
    pub radius_px: f64,
    pub n_sources: usize,
    /// False when the center is the language's reference point.
    pub located: bool,
    pub fill: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Legend {
    pub feature_id: String,
    pub kind: OverlayKind,
    pub color_zero: Rgb,
    pub color_one: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapDocument {
    pub region: StudyRegion,
    pub zones: Vec<Zone>,
    pub circles: Vec<LanguageCircle>,
    pub legend: Option<Legend>,
}

/// Builds the family-colored base map for a corpus.
pub fn base_map(corpus: &Corpus, region: &StudyRegion) -> Result<MapDocument, CartographyError> {
    let languages: Vec<&LanguageRecord> = corpus.languages().collect();
    let palette = family_palette(languages.iter().copied());
    let family_color = |id: &str| -> Rgb {
        corpus
            .language(id)
            .map(|l| palette[l.family()])
            .unwrap_or(NO_DATA_COLOR)
    };

    let mut pairs = Vec::new();
    let mut circles = Vec::new();
    for lang in &languages {
        let sites = corpus.sites_for_language(&lang.id)?;
        let n_sources = corpus.n_sources(&lang.id);
        let (center, located) = if sites.is_empty() {
            match lang.reference_point.filter(|c| region.bbox.contains(c)) {
                Some(c) => (c, false),
                None => continue,
            }
        } else {
            (geometry::weighted_centroid(&sites, region)?, true)
        };
        circles.push(LanguageCircle {
            language_id: lang.id.clone(),
            name: lang.name.clone(),
            family: lang.family().to_string(),
            center,
            radius_px: if located { circle_radius(n_sources) } else { MIN_RADIUS_PX },
            n_sources,
            located,
            fill: palette[lang.family()],
        });
        pairs.extend(sites.into_iter().map(|s| (lang.id.clone(), s)));
    }

    let set = SiteSet::build(pairs, region)?;
    let zones = if set.is_empty() {
        Vec::new()
    } else {
        geometry::voronoi(&set, region)?
            .into_iter()
            .filter(|c| c.polygon.len() >= 3)
            .map(|cell| {
                let i = cell.site_index;
                let owners = set.owners[i].clone();
                let langs: BTreeSet<&str> = owners.iter().map(|o| o.language_id.as_str()).collect();
                let colors: Vec<Rgb> = langs.into_iter().map(family_color).collect();
                Zone {
                    site_index: i,
                    site: set.coords[i],
                    polygon: cell.polygon.iter().map(|p| region.unproject_coord(p)).collect(),
                    owners,
                    neighbors: cell.neighbors,
                    fill: blend(&colors).unwrap_or(NO_DATA_COLOR),
                }
            })
            .collect()
    };

    if zones.is_empty() && circles.is_empty() {
        return Err(CartographyError::EmptyMap);
    }
    Ok(MapDocument {
        region: *region,
        zones,
        circles,
        legend: None,
    })
}

/// Recolors zones and circles by an overlay. A shared zone blends the
/// colors of those owners that have a value; zones with no valued owner
/// and circles without a value get the no-data fill.
pub fn apply_overlay(doc: &MapDocument, overlay: &FeatureOverlay) -> MapDocument {
    let mut out = doc.clone();
    for zone in &mut out.zones {
        let colors: Vec<Rgb> = zone
            .owner_languages()
            .into_iter()
            .filter_map(|l| overlay_color(overlay, l))
            .collect();
        zone.fill = blend(&colors).unwrap_or(NO_DATA_COLOR);
    }
    for circle in &mut out.circles {
        circle.fill = overlay_fill(overlay, &circle.language_id);
    }
    out.legend = Some(Legend {
        feature_id: overlay.feature_id.clone(),
        kind: overlay.kind,
        color_zero: overlay.scale.color_zero,
        color_one: overlay.scale.color_one,
    });
    out
}

// --- GeoJSON -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    bbox: [f64; 4],
    region: StudyRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    legend: Option<Legend>,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Geometry,
    properties: Properties,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum Geometry {
    Polygon { coordinates: Vec<Vec<GeoCoord>> },
    Point { coordinates: GeoCoord },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Properties {
    Zone {
        site_index: usize,
        site: GeoCoord,
        owners: Vec<String>,
        sites: Vec<SiteOwner>,
        neighbors: Vec<usize>,
        source_count: u32,
        fill: Rgb,
    },
    Circle {
        language_id: String,
        name: String,
        family: String,
        radius_px: f64,
        n_sources: usize,
        located: bool,
        fill: Rgb,
    },
    Site {
        language_id: String,
        location_name: String,
        weight: u32,
        radius_px: f64,
    },
}

fn feature(geometry: Geometry, properties: Properties) -> Feature {
    Feature {
        kind: "Feature".into(),
        geometry,
        properties,
    }
}

fn zone_feature(z: &Zone) -> Feature {
    let mut ring = z.polygon.clone();
    if let Some(&first) = ring.first() {
        ring.push(first);
    }
    feature(
        Geometry::Polygon { coordinates: vec![ring] },
        Properties::Zone {
            site_index: z.site_index,
            site: z.site,
            owners: z.owner_languages().into_iter().map(str::to_string).collect(),
            sites: z.owners.clone(),
            neighbors: z.neighbors.clone(),
            source_count: z.source_count(),
            fill: z.fill,
        },
    )
}

fn circle_feature(c: &LanguageCircle) -> Feature {
    feature(
        Geometry::Point { coordinates: c.center },
        Properties::Circle {
            language_id: c.language_id.clone(),
            name: c.name.clone(),
            family: c.family.clone(),
            radius_px: c.radius_px,
            n_sources: c.n_sources,
            located: c.located,
            fill: c.fill,
        },
    )
}

fn collection(doc: &MapDocument, features: Vec<Feature>) -> String {
    let b = doc.region.bbox;
    let fc = FeatureCollection {
        kind: "FeatureCollection".into(),
        bbox: [b.lon_min, b.lat_min, b.lon_max, b.lat_max],
        region: doc.region,
        legend: doc.legend.clone(),
        features,
    };
    serde_json::to_string(&fc).expect("map document serializes")
}

/// GeoJSON FeatureCollection: one Polygon per zone followed by one Point per
/// language circle. The study region and legend ride along as foreign
/// members so the document can be read back with [`import_geojson`].
pub fn export_geojson(doc: &MapDocument) -> String {
    let features = doc
        .zones
        .iter()
        .map(zone_feature)
        .chain(doc.circles.iter().map(circle_feature))
        .collect();
    collection(doc, features)
}

/// The zones owned by a language plus one Point per site of that language.
pub fn highlight_geojson(doc: &MapDocument, language_id: &str) -> String {
    let zones: Vec<&Zone> = doc
        .zones
        .iter()
        .filter(|z| z.owners.iter().any(|o| o.language_id == language_id))
        .collect();
    let mut features: Vec<Feature> = zones.iter().map(|z| zone_feature(z)).collect();
    for z in &zones {
        for o in z.owners.iter().filter(|o| o.language_id == language_id) {
            features.push(feature(
                Geometry::Point { coordinates: z.site },
                Properties::Site {
                    language_id: o.language_id.clone(),
                    location_name: o.location_name.clone(),
                    weight: o.weight,
                    radius_px: circle_radius(o.weight as usize),
                },
            ));
        }
    }
    collection(doc, features)
}

/// Reads back a document written by [`export_geojson`].
pub fn import_geojson(text: &str) -> Result<MapDocument, CartographyError> {
    let fc: FeatureCollection =
        serde_json::from_str(text).map_err(|e| CartographyError::Parse(e.to_string()))?;
    if fc.kind != "FeatureCollection" {
        return Err(CartographyError::Parse(format!("unexpected type `{}`", fc.kind)));
    }
    let mut doc = MapDocument {
        region: fc.region,
        zones: Vec::new(),
        circles: Vec::new(),
        legend: fc.legend,
    };
    for f in fc.features {
        match (f.geometry, f.properties) {
            (Geometry::Polygon { mut coordinates }, Properties::Zone { site_index, site, sites, neighbors, fill, .. }) => {
                let mut ring = coordinates.pop().unwrap_or_default();
                if ring.len() > 1 && ring.first() == ring.last() {
                    ring.pop();
                }
                doc.zones.push(Zone {
                    site_index,
                    site,
                    polygon: ring,
                    owners: sites,
                    neighbors,
                    fill,
                });
            }
            (Geometry::Point { coordinates }, Properties::Circle { language_id, name, family, radius_px, n_sources, located, fill }) => {
                doc.circles.push(LanguageCircle {
                    language_id,
                    name,
                    family,
                    center: coordinates,
                    radius_px,
                    n_sources,
                    located,
                    fill,
                });
            }
            _ => return Err(CartographyError::Parse("unexpected feature kind".into())),
        }
    }
    Ok(doc)
}

// --- SVG -----------------------------------------------------------------

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Pixel height for a given width, preserving the projected aspect ratio.
pub fn svg_height(region: &StudyRegion, width_px: u32) -> u32 {
    let b = region.plane_bounds();
    (f64::from(width_px) * b.height() / b.width()).round().max(1.0) as u32
}

/// Static SVG rendering: zones as paths, circles on top, and a two-swatch
/// legend plus a no-data swatch when an overlay is active. Output depends
/// only on the document and width.
pub fn export_svg(doc: &MapDocument, width_px: u32) -> Result<String, CartographyError> {
    if width_px < 64 {
        return Err(CartographyError::InvalidWidth(width_px));
    }
    let height = svg_height(&doc.region, width_px);
    let bounds = doc.region.plane_bounds();
    let sx = f64::from(width_px) / bounds.width();
    let sy = f64::from(height) / bounds.height();
    let to_px = |c: &GeoCoord| -> (f64, f64) {
        let p = doc.region.project_unchecked(c.lon, c.lat);
        (p.x * sx, f64::from(height) - p.y * sy)
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width_px}" height="{height}" viewBox="0 0 {width_px} {height}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width_px}" height="{height}" fill="#ffffff"/>"##);

    let _ = writeln!(s, r##"<g class="zones" stroke="#ffffff" stroke-width="0.5">"##);
    for z in &doc.zones {
        let mut d = String::new();
        for (i, v) in z.polygon.iter().enumerate() {
            let (x, y) = to_px(v);
            let _ = write!(d, "{}{x:.2} {y:.2} ", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let owners = xml_escape(&z.owner_languages().join(" "));
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="{}" data-site="{}" data-owners="{owners}"/>"#,
            z.fill, z.site_index
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g class="circles" stroke="#333333" stroke-width="0.75">"##);
    for c in &doc.circles {
        let (x, y) = to_px(&c.center);
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{}" data-language="{}"><title>{} ({})</title></circle>"#,
            c.radius_px,
            c.fill,
            xml_escape(&c.language_id),
            xml_escape(&c.name),
            c.n_sources
        );
    }
    let _ = writeln!(s, "</g>");

    if let Some(legend) = &doc.legend {
        let (one_label, zero_label) = match legend.kind {
            OverlayKind::Binary => ("Yes", "No"),
            OverlayKind::Continuous => ("100%", "0%"),
        };
        let entries = [
            (legend.color_one, one_label),
            (legend.color_zero, zero_label),
            (NO_DATA_COLOR, "No data"),
        ];
        let _ = writeln!(
            s,
            r#"<g class="legend" font-family="sans-serif" font-size="10" data-feature="{}">"#,
            xml_escape(&legend.feature_id)
        );
        for (i, (color, label)) in entries.iter().enumerate() {
            let y = 8 + 14 * i;
            let _ = writeln!(
                s,
                r##"<rect x="8" y="{y}" width="10" height="10" fill="{color}" stroke="#000000" stroke-width="0.5"/><text x="22" y="{}">{label}</text>"##,
                y + 9
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
