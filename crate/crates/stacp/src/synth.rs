//! Synthetic check-in data with planted per-state activity centers.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};
use stacp_core::geo::offset_km;
use stacp_core::rng::substream;
use stacp_core::{haversine_km, CheckIn, GeoPoint, TemporalState};

use crate::error::{Error, Result};

/// Monday 2012-04-02 00:00:00 UTC.
pub const SYNTH_START: i64 = 1_333_324_800;
const WEEKS: i64 = 52;
const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub users: usize,
    pub pois: usize,
    pub centers_per_state: usize,
    /// Visits land on POIs within this distance of a planted center.
    pub radius_km: f64,
    pub visits_per_user: usize,
    pub seed: u64,
    /// Side of the square the POIs are scattered over.
    pub extent_km: f64,
    /// Probability that a visit happens in working time.
    pub working_share: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 50,
            pois: 200,
            centers_per_state: 2,
            radius_km: 5.0,
            visits_per_user: 100,
            seed: 0,
            extent_km: 40.0,
            working_share: 0.5,
            origin_lat: 40.0,
            origin_lon: -74.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.users == 0 || self.pois == 0 || self.centers_per_state == 0 || self.visits_per_user == 0 {
            return bad("users, pois, centers_per_state and visits_per_user must be positive");
        }
        if 2 * self.centers_per_state > self.pois {
            return bad("need at least 2 * centers_per_state POIs");
        }
        if !(self.radius_km >= 0.0 && self.radius_km.is_finite()) {
            return bad("radius_km must be a finite non-negative number");
        }
        if !(self.extent_km > 0.0 && self.extent_km < 2000.0) {
            return bad("extent_km must be in (0, 2000)");
        }
        if !(0.0..=1.0).contains(&self.working_share) {
            return bad("working_share must be in [0, 1]");
        }
        if GeoPoint::new(self.origin_lat, self.origin_lon).is_err() {
            return bad("origin is not a valid coordinate");
        }
        Ok(())
    }
}

/// Anchor POIs planted for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedUser {
    pub user_id: String,
    pub working: Vec<usize>,
    pub leisure: Vec<usize>,
}

impl PlantedUser {
    pub fn for_state(&self, state: TemporalState) -> &[usize] {
        match state {
            TemporalState::Working => &self.working,
            TemporalState::Leisure => &self.leisure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub poi_ids: Vec<String>,
    pub coords: Vec<GeoPoint>,
    pub checkins: Vec<CheckIn>,
    pub planted: Vec<PlantedUser>,
}

/// Draws POIs uniformly over the square, gives every user distinct anchor
/// POIs per state, and samples each visit by picking a state, one of that
/// state's anchors, and a POI within `radius_km` of it with weight
/// `1 / (1 + distance)`. Working visits fall on weekdays 08:00-17:59, leisure
/// visits on weekends.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let origin = GeoPoint { lat: spec.origin_lat, lon: spec.origin_lon };
    let mut rng = substream(spec.seed, "synth");
    let half = spec.extent_km / 2.0;
    let coords: Vec<GeoPoint> = (0..spec.pois)
        .map(|_| offset_km(origin, rng.random_range(-half..=half), rng.random_range(-half..=half)))
        .collect();
    let poi_ids: Vec<String> = (0..spec.pois).map(|i| format!("p{i:04}")).collect();

    // candidate POIs and weights around every possible anchor, built lazily
    let mut neighbourhoods: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>> = vec![None; spec.pois];
    let mut neighbourhood = |anchor: usize| -> (Vec<usize>, WeightedIndex<f64>) {
        if let Some(n) = &neighbourhoods[anchor] {
            return n.clone();
        }
        let (members, weights): (Vec<usize>, Vec<f64>) = (0..spec.pois)
            .filter_map(|l| {
                let d = haversine_km(coords[anchor], coords[l]);
                (l == anchor || d <= spec.radius_km).then(|| (l, 1.0 / (1.0 + d)))
            })
            .unzip();
        let n = (members, WeightedIndex::new(weights).expect("anchor weight is positive"));
        neighbourhoods[anchor] = Some(n.clone());
        n
    };

    let mut checkins = Vec::with_capacity(spec.users * spec.visits_per_user);
    let mut planted = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let user_id = format!("u{u:04}");
        let anchors: Vec<usize> = (0..spec.pois).collect::<Vec<_>>().choose_multiple(&mut rng, 2 * spec.centers_per_state).copied().collect();
        let (working, leisure) = anchors.split_at(spec.centers_per_state);
        let user = PlantedUser { user_id: user_id.clone(), working: working.to_vec(), leisure: leisure.to_vec() };
        for _ in 0..spec.visits_per_user {
            let state = if rng.random::<f64>() < spec.working_share { TemporalState::Working } else { TemporalState::Leisure };
            let anchor = *user.for_state(state).choose(&mut rng).expect("non-empty anchor list");
            let (members, dist) = neighbourhood(anchor);
            let poi = members[dist.sample(&mut rng)];
            let week = rng.random_range(0..WEEKS);
            let (day, hour) = match state {
                TemporalState::Working => (rng.random_range(0..5), rng.random_range(8..18)),
                TemporalState::Leisure => (rng.random_range(5..7), rng.random_range(0..24)),
            };
            let ts = SYNTH_START + (week * 7 + day) * DAY + hour * 3600 + rng.random_range(0..3600);
            let p = coords[poi];
            checkins.push(CheckIn::new(&user_id, &poi_ids[poi], ts, p.lat, p.lon)?);
        }
        planted.push(user);
    }
    Ok(SynthData { poi_ids, coords, checkins, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stacp_core::StatePolicy;

    fn small() -> SynthSpec {
        SynthSpec { users: 4, pois: 60, visits_per_user: 40, seed: 5, ..SynthSpec::default() }
    }

    #[test]
    fn zero_radius_visits_sit_on_anchors() {
        let spec = SynthSpec { radius_km: 0.0, ..small() };
        let data = generate(&spec).unwrap();
        let policy = StatePolicy::default();
        for c in &data.checkins {
            let user = data.planted.iter().find(|p| p.user_id == c.user_id).unwrap();
            let anchors = user.for_state(policy.assign(c));
            assert!(anchors.iter().any(|&a| data.coords[a] == c.location()), "{c:?}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SynthSpec { users: 2, ..small() };
        assert_eq!(generate(&spec).unwrap().checkins, generate(&spec).unwrap().checkins);
        let other = SynthSpec { seed: 6, ..spec };
        assert_ne!(generate(&spec).unwrap().checkins, generate(&other).unwrap().checkins);
    }

    #[test]
    fn visits_follow_state_schedule() {
        let data = generate(&small()).unwrap();
        let policy = StatePolicy::default();
        for c in &data.checkins {
            let user = data.planted.iter().find(|p| p.user_id == c.user_id).unwrap();
            let state = policy.assign(c);
            let near = user.for_state(state).iter().any(|&a| haversine_km(data.coords[a], c.location()) <= small().radius_km + 1e-9);
            assert!(near);
        }
        assert_eq!(data.checkins.len(), 4 * 40);
    }

    #[test]
    fn anchors_are_distinct() {
        let data = generate(&SynthSpec { centers_per_state: 3, ..small() }).unwrap();
        for p in &data.planted {
            let mut all: Vec<usize> = p.working.iter().chain(&p.leisure).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), 6);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { users: 0, ..small() }).is_err());
        assert!(generate(&SynthSpec { radius_km: -1.0, ..small() }).is_err());
        assert!(generate(&SynthSpec { pois: 3, ..small() }).is_err());
    }
}
