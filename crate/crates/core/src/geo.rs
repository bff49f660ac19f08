//! Great-circle distance and the power-law distance model.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::ingest::InteractionMatrix;
use crate::{Error, Result, DIST_EPS_KM};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Width of the distance buckets used by the log-log fit.
pub const POWER_LAW_BUCKET_KM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidParameter {
                name: "latitude",
                reason: alloc::format!("{lat} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidParameter {
                name: "longitude",
                reason: alloc::format!("{lon} outside [-180, 180]"),
            });
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// Haversine distance in kilometers on a sphere of radius 6371 km.
pub fn haversine_km(p: GeoPoint, q: GeoPoint) -> f64 {
    let (lat1, lat2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlat = (q.lat - p.lat).to_radians();
    let dlon = (q.lon - p.lon).to_radians();
    let s1 = libm::sin(dlat / 2.0);
    let s2 = libm::sin(dlon / 2.0);
    let h = s1 * s1 + libm::cos(lat1) * libm::cos(lat2) * s2 * s2;
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(h.min(1.0)))
}

/// `a * dist^b` visit-distance model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawModel {
    pub a: f64,
    pub b: f64,
}

/// Fits a power law to the pairwise distances between the POIs each user
/// visited in `train`.
pub fn fit_power_law(train: &InteractionMatrix, coords: &[GeoPoint]) -> Result<PowerLawModel> {
    let mut distances = Vec::new();
    for u in 0..train.n_users() {
        let visited: Vec<usize> = train.row(u).map(|(l, _)| l).collect();
        for (i, &p) in visited.iter().enumerate() {
            for &q in &visited[i + 1..] {
                distances.push(haversine_km(coords[p], coords[q]));
            }
        }
    }
    fit_power_law_distances(&distances)
}

/// Least-squares line through (ln mean distance, ln count) over 0.5 km
/// buckets. Distances below [`DIST_EPS_KM`] are clamped.
pub fn fit_power_law_distances(distances: &[f64]) -> Result<PowerLawModel> {
    // bucket -> (count, distance sum)
    let mut buckets: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
    for &d in distances {
        let d = d.max(DIST_EPS_KM);
        let key = libm::floor(d / POWER_LAW_BUCKET_KM) as u64;
        let e = buckets.entry(key).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    if buckets.len() < 2 {
        return Err(Error::DegenerateFit { buckets: buckets.len() });
    }
    let pts: Vec<(f64, f64)> = buckets
        .values()
        .map(|&(n, sum)| (libm::log(sum / n as f64), libm::log(n as f64)))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit { buckets: buckets.len() });
    }
    let b = sxy / sxx;
    Ok(PowerLawModel { a: libm::exp(my - b * mx), b })
}

/// Geographic affinity of `candidate` to a user's visited POIs.
///
/// The product of `a * dist^b` over visited POIs is accumulated in log space
/// and normalized by the number of visited POIs (a geometric mean) before
/// exponentiating, so long histories do not underflow.
pub fn powerlaw_score(model: &PowerLawModel, candidate: GeoPoint, visited: &[GeoPoint]) -> Result<f64> {
    if visited.is_empty() {
        return Err(Error::Empty("visited POI list"));
    }
    let ln_a = libm::log(model.a);
    let log_sum: f64 = visited
        .iter()
        .map(|&v| ln_a + model.b * libm::log(haversine_km(candidate, v).max(DIST_EPS_KM)))
        .sum();
    Ok(libm::exp(log_sum / visited.len() as f64))
}

/// Shifts `p` by the given east/north offsets in kilometers (local flat approximation).
pub fn offset_km(p: GeoPoint, east_km: f64, north_km: f64) -> GeoPoint {
    let km_per_deg = EARTH_RADIUS_KM * core::f64::consts::PI / 180.0;
    let lat = p.lat + north_km / km_per_deg;
    let lon = p.lon + east_km / (km_per_deg * libm::cos(p.lat.to_radians()));
    GeoPoint { lat, lon }
}
