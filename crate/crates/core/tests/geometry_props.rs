use atlas_core::geometry::{locate, voronoi_cells, Rect, DEFAULT_BBOX};
use atlas_core::{weighted_centroid, BBox, GeoCoord, PlanePoint, SitePoint, SiteSet, StudyRegion};
use proptest::prelude::*;

fn nearest(points: &[PlanePoint], p: &PlanePoint) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in points.iter().enumerate() {
        let d = (s.x - p.x).powi(2) + (s.y - p.y).powi(2);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Distance from `p` to the bisector of sites `a` and `b`.
fn bisector_distance(a: &PlanePoint, b: &PlanePoint, p: &PlanePoint) -> f64 {
    let da = (a.x - p.x).powi(2) + (a.y - p.y).powi(2);
    let db = (b.x - p.x).powi(2) + (b.y - p.y).powi(2);
    let sep = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    (da - db).abs() / (2.0 * sep)
}

fn rect() -> Rect {
    StudyRegion::default().plane_bounds()
}

fn points_in(r: Rect, max: usize) -> impl Strategy<Value = Vec<PlanePoint>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..max).prop_map(move |v| {
        v.into_iter()
            .map(|(u, w)| PlanePoint::new(r.min.x + u * r.width(), r.min.y + w * r.height()))
            .collect()
    })
}

fn coord_in(b: BBox) -> impl Strategy<Value = (f64, f64)> {
    (b.lon_min..=b.lon_max, b.lat_min..=b.lat_max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_round_trips((lon, lat) in coord_in(DEFAULT_BBOX)) {
        let region = StudyRegion::default();
        let p = region.project(&GeoCoord::new(lon, lat).unwrap()).unwrap();
        let (lon2, lat2) = region.unproject(&p);
        prop_assert!((lon - lon2).abs() <= 1e-9, "{lon} vs {lon2}");
        prop_assert!((lat - lat2).abs() <= 1e-9, "{lat} vs {lat2}");
    }

    #[test]
    fn projection_round_trips_off_center(
        (lon, lat) in coord_in(BBox { lon_min: -170.0, lat_min: -60.0, lon_max: 170.0, lat_max: 70.0 }),
        ref_lat in -80.0..80.0f64,
    ) {
        let bbox = BBox { lon_min: -170.0, lat_min: -60.0, lon_max: 170.0, lat_max: 70.0 };
        let region = StudyRegion::with_reference_lat(bbox, ref_lat).unwrap();
        let p = region.project(&GeoCoord::new(lon, lat).unwrap()).unwrap();
        let (lon2, lat2) = region.unproject(&p);
        prop_assert!((lon - lon2).abs() <= 1e-9);
        prop_assert!((lat - lat2).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cells_agree_with_nearest_site(
        points in points_in(rect(), 40),
        samples in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 200),
    ) {
        let r = rect();
        let cells = voronoi_cells(&points, &r);
        for (u, w) in samples {
            let p = PlanePoint::new(r.min.x + u * r.width(), r.min.y + w * r.height());
            let owner = nearest(&points, &p);
            let got = locate(&cells, &p, 1e-9).expect("every point lies in some cell");
            if got != owner {
                prop_assert!(
                    points[got] == points[owner] || bisector_distance(&points[got], &points[owner], &p) <= 1e-9,
                    "point {p:?} assigned to {got}, nearest is {owner}"
                );
            }
        }
    }

    #[test]
    fn cells_tile_the_rectangle(points in points_in(rect(), 80)) {
        let r = rect();
        let total: f64 = voronoi_cells(&points, &r).iter().map(|c| c.area()).sum();
        prop_assert!((total - r.area()).abs() <= 1e-6 * r.area(), "{total} vs {}", r.area());
    }

    #[test]
    fn neighbor_relation_is_symmetric(points in points_in(rect(), 30)) {
        let cells = voronoi_cells(&points, &rect());
        for c in &cells {
            for &n in &c.neighbors {
                prop_assert!(cells[n].neighbors.contains(&c.site_index) || cells[n].polygon.is_empty());
            }
        }
    }

    #[test]
    fn cells_are_counter_clockwise_and_contain_their_site(points in points_in(rect(), 30)) {
        let cells = voronoi_cells(&points, &rect());
        for c in cells.iter().filter(|c| !c.polygon.is_empty()) {
            prop_assert!(c.area() > 0.0);
            prop_assert!(c.contains(&points[c.site_index], 1e-9));
        }
    }
}

#[test]
fn duplicate_points_leave_one_cell() {
    let r = rect();
    let p = PlanePoint::new(3.0, 4.0);
    let cells = voronoi_cells(&[p, PlanePoint::new(10.0, 10.0), p], &r);
    assert!(cells[0].area() > 0.0);
    assert!(cells[2].polygon.is_empty());
    let total: f64 = cells.iter().map(|c| c.area()).sum();
    assert!((total - r.area()).abs() <= 1e-6 * r.area());
}

#[test]
fn single_site_owns_everything() {
    let r = rect();
    let cells = voronoi_cells(&[PlanePoint::new(1.0, 1.0)], &r);
    assert!((cells[0].area() - r.area()).abs() < 1e-9);
    assert!(cells[0].neighbors.is_empty());
}

#[test]
fn coincident_sites_merge_owners() {
    let region = StudyRegion::default();
    let delhi = GeoCoord::new(77.209, 28.6139).unwrap();
    let site = |name: &str| SitePoint { location_name: name.into(), coord: delhi, weight: 1 };
    let set = SiteSet::build(
        vec![("hindi".to_string(), site("Delhi")), ("urdu".to_string(), site("Dilli"))],
        &region,
    )
    .unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.owners[0].len(), 2);
}

#[test]
fn centroid_weights_sites_by_source_count() {
    let region = StudyRegion::default();
    let a = GeoCoord::new(70.0, 30.0).unwrap();
    let b = GeoCoord::new(80.0, 30.0).unwrap();
    let c = weighted_centroid(
        &[
            SitePoint { location_name: "a".into(), coord: a, weight: 3 },
            SitePoint { location_name: "b".into(), coord: b, weight: 1 },
        ],
        &region,
    )
    .unwrap();
    assert!((c.lon - 72.5).abs() < 1e-9);
    assert!((c.lat - 30.0).abs() < 1e-9);
}
