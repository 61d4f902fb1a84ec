//! Place-name geocoding with a persistent, human-reviewable cache.
//!
//! Location names found in the bibliography are resolved to coordinates
//! through a [`GeocodeProvider`]. Every answer lands in a [`GeocodeCache`];
//! entries a curator has confirmed are flagged `verified` and are never
//! replaced by a later provider refresh.
//!
//! The cache is stored as a flat, sorted, tab-separated table:
//!
//! ```text
//! kohat	71.440000	33.590000	stub	true
//! peshawar	71.578000	34.008000	stub	false
//! ```

#![allow(clippy::tabs_in_doc_comments)]

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Storage precision of a coordinate, in degrees.
pub const COORD_PRECISION: f64 = 1e-6;

/// A WGS84 coordinate in decimal degrees.
///
/// Equality and hashing compare the coordinate rounded to micro-degrees, so
/// two values that print identically in the cache file are the same point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct GeoCoord {
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("coordinate out of range: lon {lon}, lat {lat}")]
pub struct CoordRangeError {
    pub lon: f64,
    pub lat: f64,
}

impl GeoCoord {
    pub fn new(lon: f64, lat: f64) -> Result<Self, CoordRangeError> {
        let ok = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        if ok {
            Ok(GeoCoord { lon, lat })
        } else {
            Err(CoordRangeError { lon, lat })
        }
    }

    /// Coordinate rounded to the storage grid, as integer micro-degrees.
    pub fn micro_degrees(&self) -> (i64, i64) {
        (
            (self.lon / COORD_PRECISION).round() as i64,
            (self.lat / COORD_PRECISION).round() as i64,
        )
    }
}

impl PartialEq for GeoCoord {
    fn eq(&self, other: &Self) -> bool {
        self.micro_degrees() == other.micro_degrees()
    }
}

impl Eq for GeoCoord {}

impl Hash for GeoCoord {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.micro_degrees().hash(state);
    }
}

impl PartialOrd for GeoCoord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GeoCoord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.micro_degrees().cmp(&other.micro_degrees())
    }
}

impl From<GeoCoord> for [f64; 2] {
    fn from(c: GeoCoord) -> Self {
        [c.lon, c.lat]
    }
}

impl TryFrom<[f64; 2]> for GeoCoord {
    type Error = CoordRangeError;

    fn try_from([lon, lat]: [f64; 2]) -> Result<Self, Self::Error> {
        GeoCoord::new(lon, lat)
    }
}

impl fmt::Display for GeoCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lon, self.lat)
    }
}

/// Normalizes a place name into a cache key: trimmed, internal whitespace
/// collapsed to single spaces, lower-cased.
pub fn normalize_query(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeCacheEntry {
    pub query: String,
    pub coord: GeoCoord,
    pub provider: String,
    pub verified: bool,
}

#[derive(Debug, Error)]
pub enum GeocodeError {
    #[error("empty location name")]
    EmptyQuery,
    #[error("unresolved location `{query}`: {reason}")]
    Unresolved { query: String, reason: String },
    #[error("cache line {line}: {message}")]
    CacheFormat { line: usize, message: String },
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Something that can turn a normalized place name into a coordinate.
pub trait GeocodeProvider {
    /// Short identifier recorded in the cache's provider column.
    fn name(&self) -> &str;

    /// `Ok(None)` means the provider answered but found nothing.
    fn lookup(&self, query: &str) -> Result<Option<GeoCoord>, ProviderError>;
}

/// In-memory geocoding cache keyed by normalized query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeocodeCache {
    entries: BTreeMap<String, GeocodeCacheEntry>,
}

impl GeocodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up a raw (un-normalized) name.
    pub fn get(&self, name: &str) -> Option<&GeocodeCacheEntry> {
        self.entries.get(&normalize_query(name))
    }

    pub fn entries(&self) -> impl Iterator<Item = &GeocodeCacheEntry> {
        self.entries.values()
    }

    /// Inserts a provider answer. A verified entry for the same query is kept.
    pub fn insert_unverified(&mut self, query: &str, coord: GeoCoord, provider: &str) -> bool {
        let key = normalize_query(query);
        if self.entries.get(&key).is_some_and(|e| e.verified) {
            return false;
        }
        self.entries.insert(
            key.clone(),
            GeocodeCacheEntry {
                query: key,
                coord,
                provider: provider.to_string(),
                verified: false,
            },
        );
        true
    }

    /// Marks `query` as human-verified at `coord`, creating the entry if absent.
    pub fn verify(&mut self, query: &str, coord: GeoCoord) {
        let key = normalize_query(query);
        let provider = self
            .entries
            .get(&key)
            .map(|e| e.provider.clone())
            .unwrap_or_else(|| "manual".to_string());
        self.entries.insert(
            key.clone(),
            GeocodeCacheEntry {
                query: key,
                coord,
                provider,
                verified: true,
            },
        );
    }

    /// Serializes to the tab-separated cache format, sorted by query.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{}\t{}\n",
                e.query, e.coord.lon, e.coord.lat, e.provider, e.verified
            ));
        }
        out
    }

    /// Parses the tab-separated cache format. Blank lines and `#` comments
    /// are skipped; queries are re-normalized on load.
    pub fn from_tsv(text: &str) -> Result<Self, GeocodeError> {
        let mut cache = GeocodeCache::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let bad = |message: String| GeocodeError::CacheFormat { line, message };
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad(format!("expected 5 tab-separated columns, got {}", cols.len())));
            }
            let lon = f64::from_str(cols[1].trim()).map_err(|e| bad(format!("lon: {e}")))?;
            let lat = f64::from_str(cols[2].trim()).map_err(|e| bad(format!("lat: {e}")))?;
            let coord = GeoCoord::new(lon, lat).map_err(|e| bad(e.to_string()))?;
            let verified = match cols[4].trim() {
                "true" => true,
                "false" => false,
                other => return Err(bad(format!("verified must be true/false, got `{other}`"))),
            };
            let query = normalize_query(cols[0]);
            if query.is_empty() {
                return Err(bad("empty query".to_string()));
            }
            cache.entries.insert(
                query.clone(),
                GeocodeCacheEntry {
                    query,
                    coord,
                    provider: cols[3].trim().to_string(),
                    verified,
                },
            );
        }
        Ok(cache)
    }
}

/// Resolves a place name, consulting the cache before the provider.
///
/// A cache hit never touches the provider. A miss stores the provider's
/// answer as unverified.
pub fn resolve(
    name: &str,
    cache: &mut GeocodeCache,
    provider: &dyn GeocodeProvider,
) -> Result<GeoCoord, GeocodeError> {
    let query = normalize_query(name);
    if query.is_empty() {
        return Err(GeocodeError::EmptyQuery);
    }
    if let Some(hit) = cache.entries.get(&query) {
        return Ok(hit.coord);
    }
    let coord = lookup(&query, provider)?;
    cache.insert_unverified(&query, coord, provider.name());
    Ok(coord)
}

/// Re-queries the provider for a cached name. Verified entries are returned
/// unchanged without a provider call.
pub fn refresh(
    name: &str,
    cache: &mut GeocodeCache,
    provider: &dyn GeocodeProvider,
) -> Result<GeoCoord, GeocodeError> {
    let query = normalize_query(name);
    if query.is_empty() {
        return Err(GeocodeError::EmptyQuery);
    }
    if let Some(hit) = cache.entries.get(&query).filter(|e| e.verified) {
        return Ok(hit.coord);
    }
    let coord = lookup(&query, provider)?;
    cache.insert_unverified(&query, coord, provider.name());
    Ok(coord)
}

fn lookup(query: &str, provider: &dyn GeocodeProvider) -> Result<GeoCoord, GeocodeError> {
    match provider.lookup(query) {
        Ok(Some(c)) => Ok(c),
        Ok(None) => Err(GeocodeError::Unresolved {
            query: query.to_string(),
            reason: "no results".to_string(),
        }),
        Err(e) => Err(GeocodeError::Unresolved {
            query: query.to_string(),
            reason: e.0,
        }),
    }
}

/// Deterministic provider backed by a fixed table; counts every lookup.
#[derive(Debug, Default)]
pub struct StubProvider {
    table: BTreeMap<String, GeoCoord>,
    calls: AtomicUsize,
}

impl StubProvider {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, GeoCoord)>,
        S: AsRef<str>,
    {
        StubProvider {
            table: entries
                .into_iter()
                .map(|(k, v)| (normalize_query(k.as_ref()), v))
                .collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GeocodeProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn lookup(&self, query: &str) -> Result<Option<GeoCoord>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.table.get(&normalize_query(query)).copied())
    }
}

/// Generic HTTP geocoder.
///
/// Issues `GET {url}?q={query}[&key={key}]` and accepts a JSON array of
/// results (or an object with a `results` array) whose first element carries
/// `lon`/`lat` (or `lng`) as numbers or numeric strings. Calls are serialized
/// and spaced at least `min_interval` apart.
pub struct HttpProvider {
    url: String,
    key: Option<String>,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, key: Option<String>, min_interval: Duration) -> Self {
        HttpProvider {
            url: url.into(),
            key,
            min_interval,
            last_call: Mutex::new(None),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    /// Builds a provider from `GEOCODER_URL` / `GEOCODER_KEY`, spacing calls
    /// by `GEOCODER_MIN_INTERVAL_MS` (default 1000).
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("GEOCODER_URL").ok().filter(|u| !u.is_empty())?;
        let key = std::env::var("GEOCODER_KEY").ok().filter(|k| !k.is_empty());
        let interval = std::env::var("GEOCODER_MIN_INTERVAL_MS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1000);
        Some(HttpProvider::new(url, key, Duration::from_millis(interval)))
    }
}

impl GeocodeProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn lookup(&self, query: &str) -> Result<Option<GeoCoord>, ProviderError> {
        // Held across the request so calls are serialized.
        let mut last = self.last_call.lock().expect("rate limiter poisoned");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        let mut req = self.agent.get(&self.url).query("q", query);
        if let Some(key) = &self.key {
            req = req.query("key", key);
        }
        let result = req.call();
        *last = Some(Instant::now());
        let mut resp = result.map_err(|e| ProviderError(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError(e.to_string()))?;
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError(e.to_string()))?;
        parse_provider_response(&body)
    }
}

/// Extracts the first result from a provider JSON response.
pub fn parse_provider_response(
    body: &serde_json::Value,
) -> Result<Option<GeoCoord>, ProviderError> {
    let results = match body {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => match o.get("results") {
            Some(serde_json::Value::Array(a)) => a,
            _ => return Err(ProviderError("response has no `results` array".into())),
        },
        _ => return Err(ProviderError("unexpected response shape".into())),
    };
    let Some(first) = results.first() else {
        return Ok(None);
    };
    let num = |keys: &[&str]| -> Option<f64> {
        keys.iter().find_map(|k| match first.get(*k)? {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) => s.trim().parse().ok(),
            _ => None,
        })
    };
    let (Some(lon), Some(lat)) = (num(&["lon", "lng"]), num(&["lat"])) else {
        return Err(ProviderError("result lacks lon/lat".into()));
    };
    GeoCoord::new(lon, lat)
        .map(Some)
        .map_err(|e| ProviderError(e.to_string()))
}
