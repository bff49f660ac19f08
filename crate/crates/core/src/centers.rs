//! Per-user, per-temporal-state activity centers.
//!
//! A user's POIs in one temporal state are ranked by visit frequency. The
//! most visited POI not yet covered becomes the anchor of a region that
//! absorbs every other uncovered POI within `d` km. The region is kept as a
//! center when its share of the user's check-ins exceeds `alpha`; either way
//! its POIs are consumed. The loop runs until every POI is covered.
//!
//! The center score of a location is the frequency-weighted sum of inverse
//! distances to the centers; the context score interpolates the working and
//! leisure center scores with weight `lambda`.

use alloc::vec::Vec;

use crate::geo::{haversine_km, GeoPoint};
use crate::ingest::TemporalState;
use crate::{Error, Result, DIST_EPS_KM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterConfig {
    /// Region radius in kilometers.
    pub d: f64,
    /// Minimum share of the user's check-ins a region needs to become a center.
    pub alpha: f64,
}

impl Default for CenterConfig {
    fn default() -> Self {
        CenterConfig { d: 15.0, alpha: 0.02 }
    }
}

impl CenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: alloc::format!("region radius must be > 0, got {}", self.d),
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: alloc::format!("threshold must lie in (0, 1), got {}", self.alpha),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextConfig {
    /// Weight of the working-state score; leisure gets `1 - lambda`.
    pub lambda: f64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig { lambda: 0.5 }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: alloc::format!("interpolation weight must lie in [0, 1], got {}", self.lambda),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCenter {
    /// Coordinates of the anchor POI.
    pub location: GeoPoint,
    pub anchor: usize,
    /// Total check-ins of the member POIs.
    pub freq: u64,
    /// Member POI indices in ascending order, anchor included.
    pub member_pois: Vec<usize>,
    pub state: TemporalState,
}

/// One region of the greedy sweep, kept or discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub center: ActivityCenter,
    pub is_center: bool,
}

/// Runs the greedy sweep and returns every region, including those below
/// the `alpha` threshold.
///
/// `profile` holds `(poi, frequency)` pairs for one user in one state; POIs
/// with zero frequency are ignored. Ties in frequency go to the lower POI index.
pub fn allocate_regions(
    profile: &[(usize, u64)],
    coords: &[GeoPoint],
    cfg: &CenterConfig,
    state: TemporalState,
) -> Vec<Region> {
    let mut ranked: Vec<(usize, u64)> = profile.iter().copied().filter(|&(_, f)| f > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: u64 = ranked.iter().map(|&(_, f)| f).sum();
    let mut consumed = alloc::vec![false; ranked.len()];
    let mut regions = Vec::new();
    for i in 0..ranked.len() {
        if consumed[i] {
            continue;
        }
        let (anchor, _) = ranked[i];
        let anchor_loc = coords[anchor];
        let mut members = Vec::new();
        let mut freq = 0u64;
        for j in i..ranked.len() {
            if consumed[j] {
                continue;
            }
            let (poi, f) = ranked[j];
            if j == i || haversine_km(anchor_loc, coords[poi]) <= cfg.d {
                consumed[j] = true;
                members.push(poi);
                freq += f;
            }
        }
        members.sort_unstable();
        let is_center = freq as f64 / total as f64 > cfg.alpha;
        regions.push(Region {
            center: ActivityCenter { location: anchor_loc, anchor, freq, member_pois: members, state },
            is_center,
        });
    }
    regions
}

/// Activity centers of one user in one state. An empty profile yields no centers.
pub fn allocate_centers(
    profile: &[(usize, u64)],
    coords: &[GeoPoint],
    cfg: &CenterConfig,
    state: TemporalState,
) -> Vec<ActivityCenter> {
    allocate_regions(profile, coords, cfg, state)
        .into_iter()
        .filter(|r| r.is_center)
        .map(|r| r.center)
        .collect()
}

/// Frequency-weighted inverse distance from `l` to a center set; zero when
/// there are no centers.
pub fn state_center_score(l: GeoPoint, centers: &[ActivityCenter]) -> f64 {
    let total: u64 = centers.iter().map(|c| c.freq).sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    centers
        .iter()
        .map(|c| (c.freq as f64 / total) / haversine_km(l, c.location).max(DIST_EPS_KM))
        .sum()
}

/// Working and leisure centers of one user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserCenters {
    pub working: Vec<ActivityCenter>,
    pub leisure: Vec<ActivityCenter>,
}

impl UserCenters {
    pub fn for_state(&self, state: TemporalState) -> &[ActivityCenter] {
        match state {
            TemporalState::Working => &self.working,
            TemporalState::Leisure => &self.leisure,
        }
    }
}

/// `lambda * P_working + (1 - lambda) * P_leisure`.
///
/// When only one state has centers its score is used alone; with no centers
/// at all the result is 1 so a fused product falls back to its other factors.
pub fn context_score(l: GeoPoint, working: &[ActivityCenter], leisure: &[ActivityCenter], cfg: &ContextConfig) -> f64 {
    match (working.is_empty(), leisure.is_empty()) {
        (true, true) => 1.0,
        (false, true) => state_center_score(l, working),
        (true, false) => state_center_score(l, leisure),
        (false, false) => {
            cfg.lambda * state_center_score(l, working)
                + (1.0 - cfg.lambda) * state_center_score(l, leisure)
        }
    }
}
