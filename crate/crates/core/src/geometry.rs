//! Planar geometry for dialect zones.
//!
//! Coordinates are mapped into a scaled equirectangular plane
//! (`x = (lon - lon_min) * cos(phi0)`, `y = lat - lat_min`) where distances
//! are Euclidean. Each site's zone is the intersection of the study
//! rectangle with the half-planes on its side of every perpendicular
//! bisector, which gives exactly the set of points nearer that site than to
//! any other.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SitePoint;
use crate::geocode::GeoCoord;

/// Default study region covering South Asia: lon 60..98, lat 5..38.
pub const DEFAULT_BBOX: BBox = BBox {
    lon_min: 60.0,
    lat_min: 5.0,
    lon_max: 98.0,
    lat_max: 38.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl BBox {
    pub fn contains(&self, c: &GeoCoord) -> bool {
        (self.lon_min..=self.lon_max).contains(&c.lon) && (self.lat_min..=self.lat_max).contains(&c.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Projection {
    /// Equirectangular with longitude scaled by `cos(reference_lat)`.
    EquirectangularScaled { reference_lat: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid study region: {0}")]
    InvalidRegion(String),
    #[error("coordinate {0} lies outside the study region")]
    OutOfRegion(GeoCoord),
    #[error("no sites given")]
    NoSites,
}

/// The rectangle within which zones are computed and drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRegion {
    pub bbox: BBox,
    pub projection: Projection,
}

impl Default for StudyRegion {
    fn default() -> Self {
        StudyRegion::new(DEFAULT_BBOX).expect("default bbox is valid")
    }
}

impl StudyRegion {
    /// Region with the reference latitude at the box's mid-latitude.
    pub fn new(bbox: BBox) -> Result<Self, GeometryError> {
        let mid = (bbox.lat_min + bbox.lat_max) / 2.0;
        StudyRegion::with_reference_lat(bbox, mid)
    }

    pub fn with_reference_lat(bbox: BBox, reference_lat: f64) -> Result<Self, GeometryError> {
        let BBox { lon_min, lat_min, lon_max, lat_max } = bbox;
        let finite = [lon_min, lat_min, lon_max, lat_max, reference_lat]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidRegion("non-finite bound".into()));
        }
        if lon_min >= lon_max || lat_min >= lat_max {
            return Err(GeometryError::InvalidRegion(format!(
                "need lon_min < lon_max and lat_min < lat_max, got ({lon_min}, {lat_min}, {lon_max}, {lat_max})"
            )));
        }
        if lon_min < -180.0 || lon_max > 180.0 || lat_min < -90.0 || lat_max > 90.0 {
            return Err(GeometryError::InvalidRegion("bounds exceed WGS84 ranges".into()));
        }
        if reference_lat.abs() >= 90.0 {
            return Err(GeometryError::InvalidRegion("reference latitude must be within (-90, 90)".into()));
        }
        Ok(StudyRegion {
            bbox,
            projection: Projection::EquirectangularScaled { reference_lat },
        })
    }

    pub fn reference_lat(&self) -> f64 {
        match self.projection {
            Projection::EquirectangularScaled { reference_lat } => reference_lat,
        }
    }

    fn lon_scale(&self) -> f64 {
        self.reference_lat().to_radians().cos()
    }

    /// The study rectangle in plane units.
    pub fn plane_bounds(&self) -> Rect {
        Rect {
            min: PlanePoint::new(0.0, 0.0),
            max: PlanePoint::new(
                (self.bbox.lon_max - self.bbox.lon_min) * self.lon_scale(),
                self.bbox.lat_max - self.bbox.lat_min,
            ),
        }
    }

    pub fn project(&self, coord: &GeoCoord) -> Result<PlanePoint, GeometryError> {
        if !self.bbox.contains(coord) {
            return Err(GeometryError::OutOfRegion(*coord));
        }
        Ok(self.project_unchecked(coord.lon, coord.lat))
    }

    pub(crate) fn project_unchecked(&self, lon: f64, lat: f64) -> PlanePoint {
        PlanePoint::new((lon - self.bbox.lon_min) * self.lon_scale(), lat - self.bbox.lat_min)
    }

    /// Inverse projection. Returns raw degrees (no range check), so points
    /// on the region's edge map back exactly.
    pub fn unproject(&self, p: &PlanePoint) -> (f64, f64) {
        (p.x / self.lon_scale() + self.bbox.lon_min, p.y + self.bbox.lat_min)
    }

    /// Inverse projection into a [`GeoCoord`], clamped to the bbox.
    pub fn unproject_coord(&self, p: &PlanePoint) -> GeoCoord {
        let (lon, lat) = self.unproject(p);
        GeoCoord {
            lon: lon.clamp(self.bbox.lon_min, self.bbox.lon_max),
            lat: lat.clamp(self.bbox.lat_min, self.bbox.lat_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanePoint { x, y }
    }

    pub fn dist2(&self, other: &PlanePoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: PlanePoint,
    pub max: PlanePoint,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &PlanePoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Counter-clockwise corners starting at the minimum corner.
    fn ring(&self) -> Vec<PlanePoint> {
        vec![
            self.min,
            PlanePoint::new(self.max.x, self.min.y),
            self.max,
            PlanePoint::new(self.min.x, self.max.y),
        ]
    }
}

/// Who a site belongs to. Coincident sites of several languages merge into
/// one site with several owners.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteOwner {
    pub language_id: String,
    pub location_name: String,
    pub weight: u32,
}

/// Deduplicated, projected sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    pub points: Vec<PlanePoint>,
    pub coords: Vec<GeoCoord>,
    pub owners: Vec<Vec<SiteOwner>>,
}

impl SiteSet {
    /// Projects and merges sites. Sites at the same coordinate (at storage
    /// precision) collapse into the first occurrence, keeping all owners.
    pub fn build<I>(sites: I, region: &StudyRegion) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (String, SitePoint)>,
    {
        let mut set = SiteSet {
            points: Vec::new(),
            coords: Vec::new(),
            owners: Vec::new(),
        };
        let mut index: std::collections::HashMap<GeoCoord, usize> = Default::default();
        for (language_id, site) in sites {
            let owner = SiteOwner {
                language_id,
                location_name: site.location_name,
                weight: site.weight,
            };
            if let Some(&i) = index.get(&site.coord) {
                set.owners[i].push(owner);
                continue;
            }
            let p = region.project(&site.coord)?;
            index.insert(site.coord, set.points.len());
            set.points.push(p);
            set.coords.push(site.coord);
            set.owners.push(vec![owner]);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One Voronoi zone: a convex, counter-clockwise polygon (first vertex not
/// repeated) and the sites whose bisectors bound it.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiCell {
    pub site_index: usize,
    pub polygon: Vec<PlanePoint>,
    pub neighbors: Vec<usize>,
}

impl VoronoiCell {
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }

    /// Closed ring: the first vertex repeated at the end.
    pub fn closed_ring(&self) -> Vec<PlanePoint> {
        let mut ring = self.polygon.clone();
        if let Some(&first) = ring.first() {
            ring.push(first);
        }
        ring
    }

    /// Inclusive point-in-polygon test with tolerance `eps`.
    pub fn contains(&self, p: &PlanePoint, eps: f64) -> bool {
        let n = self.polygon.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            cross(&a, &b, p) >= -eps * len
        })
    }

    pub fn bounds(&self) -> Rect {
        let mut r = Rect {
            min: PlanePoint::new(f64::INFINITY, f64::INFINITY),
            max: PlanePoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for p in &self.polygon {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        r
    }
}

/// Signed area (positive for counter-clockwise rings) via the shoelace formula.
pub fn polygon_area(poly: &[PlanePoint]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice / 2.0
}

fn cross(a: &PlanePoint, b: &PlanePoint, p: &PlanePoint) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Edge label: the site whose bisector produced the edge, or `None` for the
/// study rectangle's boundary.
type EdgeSource = Option<usize>;

/// Clips a convex polygon to `{p : n.p <= c}`. Edge `i` runs from vertex `i`
/// to vertex `i + 1`; the new edge along the clip line gets `label`.
fn clip(
    poly: &[PlanePoint],
    edges: &[EdgeSource],
    normal: PlanePoint,
    c: f64,
    label: usize,
) -> Option<(Vec<PlanePoint>, Vec<EdgeSource>)> {
    let n = poly.len();
    let side: Vec<f64> = poly.iter().map(|p| normal.x * p.x + normal.y * p.y - c).collect();
    let scale = c.abs().max(1.0) * 1e-14;
    if side.iter().all(|&s| s <= scale) {
        return None;
    }
    let mut out_pts = Vec::with_capacity(n + 1);
    let mut out_edges = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (si, sj) = (side[i], side[j]);
        let (a, b) = (poly[i], poly[j]);
        let inside_i = si <= scale;
        let inside_j = sj <= scale;
        if inside_i {
            out_pts.push(a);
            if inside_j {
                out_edges.push(edges[i]);
            } else {
                // Leaving: the edge is cut; the clip line follows.
                let t = si / (si - sj);
                out_edges.push(edges[i]);
                out_pts.push(PlanePoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
                out_edges.push(Some(label));
            }
        } else if inside_j {
            // Entering: the remainder of edge i starts at the crossing.
            let t = si / (si - sj);
            out_pts.push(PlanePoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            out_edges.push(edges[i]);
        }
    }
    dedup_ring(&mut out_pts, &mut out_edges);
    Some((out_pts, out_edges))
}

/// Drops consecutive vertices that coincide; the surviving edge keeps the
/// label of the edge that follows it.
fn dedup_ring(pts: &mut Vec<PlanePoint>, edges: &mut Vec<EdgeSource>) {
    let tol2 = 1e-24;
    let mut i = 0;
    while pts.len() > 1 && i < pts.len() {
        let j = (i + 1) % pts.len();
        if pts[i].dist2(&pts[j]) <= tol2 * pts[i].x.abs().max(pts[i].y.abs()).max(1.0).powi(2) {
            // Vertex j duplicates i: edge i is degenerate.
            pts.remove(i);
            edges.remove(i);
            i = i.saturating_sub(1);
        } else {
            i += 1;
        }
    }
}

/// Voronoi partition of `bounds` over `points`, in input order.
///
/// Duplicate points are not merged here; the later of two identical points
/// gets an empty cell. Use [`SiteSet::build`] to merge them first.
pub fn voronoi_cells(points: &[PlanePoint], bounds: &Rect) -> Vec<VoronoiCell> {
    (0..points.len())
        .into_par_iter()
        .map(|i| build_cell(i, points, bounds))
        .collect()
}

fn build_cell(i: usize, points: &[PlanePoint], bounds: &Rect) -> VoronoiCell {
    let site = points[i];
    let mut poly = bounds.ring();
    let mut edges: Vec<EdgeSource> = vec![None; 4];

    // Nearest competitors first, so the cell shrinks quickly and distant
    // sites can be skipped once they cannot reach it.
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (site.dist2(p), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    for (d2, j) in order {
        if poly.is_empty() {
            break;
        }
        if d2 == 0.0 {
            // Identical site: ties go to the lower index.
            if j < i {
                poly.clear();
                edges.clear();
            }
            continue;
        }
        // A competitor farther than twice the cell's radius cannot cut it.
        let radius2 = poly.iter().map(|v| v.dist2(&site)).fold(0.0, f64::max);
        if d2 > 4.0 * radius2 * (1.0 + 1e-9) {
            break;
        }
        let other = points[j];
        let normal = PlanePoint::new(other.x - site.x, other.y - site.y);
        let c = (other.x * other.x + other.y * other.y - site.x * site.x - site.y * site.y) / 2.0;
        if let Some((p, e)) = clip(&poly, &edges, normal, c, j) {
            poly = p;
            edges = e;
            if poly.len() < 3 {
                poly.clear();
                edges.clear();
            }
        }
    }

    let mut neighbors: Vec<usize> = edges.iter().filter_map(|e| *e).collect();
    neighbors.sort_unstable();
    neighbors.dedup();
    VoronoiCell {
        site_index: i,
        polygon: poly,
        neighbors,
    }
}

/// Voronoi zones of a site set clipped to the study region.
pub fn voronoi(sites: &SiteSet, region: &StudyRegion) -> Result<Vec<VoronoiCell>, GeometryError> {
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    Ok(voronoi_cells(&sites.points, &region.plane_bounds()))
}

/// Index of the cell containing `p`, preferring the lowest index when `p`
/// lies on a shared edge.
pub fn locate(cells: &[VoronoiCell], p: &PlanePoint, eps: f64) -> Option<usize> {
    cells.iter().position(|c| {
        let b = c.bounds();
        p.x >= b.min.x - eps && p.x <= b.max.x + eps && p.y >= b.min.y - eps && p.y <= b.max.y + eps && c.contains(p, eps)
    })
}

/// Source-count-weighted mean of site positions, taken in the plane and
/// mapped back to degrees.
pub fn weighted_centroid(sites: &[SitePoint], region: &StudyRegion) -> Result<GeoCoord, GeometryError> {
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for s in sites {
        let p = region.project(&s.coord)?;
        let w = f64::from(s.weight);
        sx += w * p.x;
        sy += w * p.y;
        sw += w;
    }
    Ok(region.unproject_coord(&PlanePoint::new(sx / sw, sy / sw)))
}
