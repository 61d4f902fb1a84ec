//! Seeded inputs shared by the criterion benchmarks in `benches/`.

use atlas_core::geometry::DEFAULT_BBOX;
use atlas_core::{GeoCoord, SitePoint, SiteSet, StudyRegion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `n` uniformly placed sites in the default study region.
pub fn random_sites(n: usize, seed: u64) -> SiteSet {
    let mut rng = StdRng::seed_from_u64(seed);
    let b = DEFAULT_BBOX;
    let region = StudyRegion::default();
    let sites: Vec<(String, SitePoint)> = (0..n)
        .map(|i| {
            let coord = GeoCoord::new(rng.gen_range(b.lon_min..b.lon_max), rng.gen_range(b.lat_min..b.lat_max))
                .expect("inside the default box");
            (format!("l{i}"), SitePoint { location_name: format!("s{i}"), coord, weight: 1 })
        })
        .collect();
    SiteSet::build(sites, &region).expect("sites lie in the region")
}

/// `count` words of length `len` over a small segment inventory.
pub fn random_words(count: usize, len: usize, seed: u64) -> Vec<Vec<String>> {
    const SEGMENTS: [&str; 8] = ["k", "kʰ", "ʂ", "a", "aː", "r", "t", "i"];
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..len).map(|_| SEGMENTS[rng.gen_range(0..SEGMENTS.len())].to_string()).collect())
        .collect()
}
