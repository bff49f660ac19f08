//! Check-in records, temporal states, chronological splits and the sparse
//! user x POI visit-frequency matrix.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::geo::GeoPoint;
use crate::{Error, Result};

/// One user-POI visit.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    /// Seconds since the Unix epoch, read as wall-clock time of the record.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl CheckIn {
    /// Builds a check-in, rejecting coordinates outside [-90, 90] x [-180, 180].
    pub fn new(
        user_id: impl Into<String>,
        poi_id: impl Into<String>,
        timestamp: i64,
        lat: f64,
        lon: f64,
    ) -> Result<Self> {
        GeoPoint::new(lat, lon)?;
        Ok(CheckIn { user_id: user_id.into(), poi_id: poi_id.into(), timestamp, lat, lon })
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemporalState {
    Working,
    Leisure,
}

impl TemporalState {
    pub const ALL: [TemporalState; 2] = [TemporalState::Working, TemporalState::Leisure];

    pub fn name(self) -> &'static str {
        match self {
            TemporalState::Working => "working",
            TemporalState::Leisure => "leisure",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Maps an instant to a temporal state.
///
/// An instant is `Working` when its weekday is flagged in `work_days`
/// (Monday first) and its hour lies in `[work_start_hour, work_end_hour)`.
/// Everything else is `Leisure`, so the mapping is total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatePolicy {
    pub work_days: [bool; 7],
    pub work_start_hour: u8,
    pub work_end_hour: u8,
}

impl Default for StatePolicy {
    fn default() -> Self {
        StatePolicy {
            work_days: [true, true, true, true, true, false, false],
            work_start_hour: 8,
            work_end_hour: 18,
        }
    }
}

impl StatePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.work_start_hour >= self.work_end_hour || self.work_end_hour > 24 {
            return Err(Error::InvalidParameter {
                name: "state policy hours",
                reason: alloc::format!(
                    "need 0 <= start < end <= 24, got [{}, {})",
                    self.work_start_hour, self.work_end_hour
                ),
            });
        }
        Ok(())
    }

    pub fn state_of(&self, timestamp: i64) -> TemporalState {
        let (weekday, hour) = weekday_hour(timestamp);
        let in_hours = hour >= u32::from(self.work_start_hour) && hour < u32::from(self.work_end_hour);
        if self.work_days[weekday as usize] && in_hours {
            TemporalState::Working
        } else {
            TemporalState::Leisure
        }
    }

    pub fn assign(&self, c: &CheckIn) -> TemporalState {
        self.state_of(c.timestamp)
    }
}

/// Weekday (0 = Monday) and hour of day for an epoch timestamp.
pub fn weekday_hour(timestamp: i64) -> (u32, u32) {
    let days = timestamp.div_euclid(86_400);
    let secs = timestamp.rem_euclid(86_400);
    // 1970-01-01 was a Thursday.
    let weekday = (days + 3).rem_euclid(7) as u32;
    (weekday, (secs / 3600) as u32)
}

/// Bidirectional id <-> dense index map. Indices follow first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut c = Catalog::new();
        for id in ids {
            c.insert(id);
        }
        c
    }

    /// Returns the index of `id`, adding it if absent.
    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidParameter {
                name: "split ratios",
                reason: "ratios must be finite and non-negative".to_string(),
            });
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "split ratios",
                reason: alloc::format!("ratios sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }

    /// (train, validation, test) sizes for a user with `n` events.
    ///
    /// Train and test take the floor of their share and validation takes the
    /// remainder. Users with fewer than three events put everything but the
    /// last event in train and the last one in test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return match n {
                0 => (0, 0, 0),
                1 => (1, 0, 0),
                _ => (n - 1, 0, 1),
            };
        }
        // The small bias keeps e.g. 0.7 * 10 from flooring to 6.
        let floor = |r: f64| libm::floor(r * n as f64 + 1e-9) as usize;
        let train = floor(self.train).min(n);
        let test = floor(self.test).min(n - train);
        (train, n - train - test, test)
    }
}

/// Chronological per-user partition of a check-in dataset plus the catalogs
/// built from the full dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub users: Catalog,
    pub pois: Catalog,
    /// POI coordinates by POI index (first occurrence in the dataset).
    pub coords: Vec<GeoPoint>,
    pub train: Vec<CheckIn>,
    pub validation: Vec<CheckIn>,
    pub test: Vec<CheckIn>,
    /// User indices with fewer than three check-ins.
    pub flagged_users: Vec<usize>,
}

impl DatasetSplit {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_pois(&self) -> usize {
        self.pois.len()
    }

    pub fn is_flagged(&self, user: usize) -> bool {
        self.flagged_users.binary_search(&user).is_ok()
    }
}

/// Splits every user's check-ins by time: the earliest share goes to train,
/// the most recent share to test, the rest to validation.
///
/// Events with equal timestamps keep their input order.
pub fn chronological_split(checkins: &[CheckIn], ratios: SplitRatios) -> Result<DatasetSplit> {
    ratios.validate()?;
    if checkins.is_empty() {
        return Err(Error::Empty("check-in list"));
    }
    let mut users = Catalog::new();
    let mut pois = Catalog::new();
    let mut coords = Vec::new();
    let mut per_user: Vec<Vec<&CheckIn>> = Vec::new();
    for c in checkins {
        let u = users.insert(&c.user_id);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        per_user[u].push(c);
        let l = pois.insert(&c.poi_id);
        if l == coords.len() {
            coords.push(c.location());
        }
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut flagged_users = Vec::new();
    for (u, events) in per_user.iter_mut().enumerate() {
        events.sort_by_key(|c| c.timestamp);
        let n = events.len();
        if n < 3 {
            flagged_users.push(u);
        }
        let (n_train, n_val, _) = ratios.sizes(n);
        for (i, c) in events.iter().enumerate() {
            let dst = if i < n_train {
                &mut train
            } else if i < n_train + n_val {
                &mut validation
            } else {
                &mut test
            };
            dst.push((*c).clone());
        }
    }
    Ok(DatasetSplit { users, pois, coords, train, validation, test, flagged_users })
}

/// Sparse user x POI matrix of visit counts in compressed-row form.
///
/// Stored counts are always >= 1; absent cells are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_pois: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    counts: Vec<u32>,
}

impl InteractionMatrix {
    pub fn zeros(n_users: usize, n_pois: usize) -> Self {
        InteractionMatrix {
            n_users,
            n_pois,
            row_ptr: alloc::vec![0; n_users + 1],
            cols: Vec::new(),
            counts: Vec::new(),
        }
    }

    /// Accumulates `(user, poi, count)` triplets; repeated cells add up and
    /// zero counts are dropped.
    pub fn from_triplets(
        n_users: usize,
        n_pois: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (u, l, c) in triplets {
            if u >= n_users {
                return Err(Error::IndexOutOfRange { kind: "user", index: u, len: n_users });
            }
            if l >= n_pois {
                return Err(Error::IndexOutOfRange { kind: "poi", index: l, len: n_pois });
            }
            if c > 0 {
                *cells.entry((u, l)).or_insert(0) += c;
            }
        }
        let mut m = InteractionMatrix::zeros(n_users, n_pois);
        m.cols.reserve(cells.len());
        m.counts.reserve(cells.len());
        for ((u, l), c) in cells {
            m.row_ptr[u + 1] += 1;
            m.cols.push(l);
            m.counts.push(c);
        }
        for u in 0..n_users {
            m.row_ptr[u + 1] += m.row_ptr[u];
        }
        Ok(m)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_pois(&self) -> usize {
        self.n_pois
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_users, self.n_pois)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Non-zero `(poi, count)` entries of one user, ascending by POI.
    pub fn row(&self, user: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let span = self.row_ptr[user]..self.row_ptr[user + 1];
        self.cols[span.clone()].iter().copied().zip(self.counts[span].iter().copied())
    }

    pub fn row_len(&self, user: usize) -> usize {
        self.row_ptr[user + 1] - self.row_ptr[user]
    }

    /// All non-zero `(user, poi, count)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n_users).flat_map(move |u| self.row(u).map(move |(l, c)| (u, l, c)))
    }

    pub fn get(&self, user: usize, poi: usize) -> u32 {
        let span = self.row_ptr[user]..self.row_ptr[user + 1];
        match self.cols[span.clone()].binary_search(&poi) {
            Ok(i) => self.counts[span.start + i],
            Err(_) => 0,
        }
    }

    pub fn row_sum(&self, user: usize) -> u64 {
        self.row(user).map(|(_, c)| u64::from(c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Per-POI column sums.
    pub fn poi_totals(&self) -> Vec<u64> {
        let mut t = alloc::vec![0u64; self.n_pois];
        for (&l, &c) in self.cols.iter().zip(&self.counts) {
            t[l] += u64::from(c);
        }
        t
    }

    /// Elementwise sum of two matrices of the same shape.
    pub fn add(&self, other: &InteractionMatrix) -> Result<InteractionMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: other.shape() });
        }
        InteractionMatrix::from_triplets(self.n_users, self.n_pois, self.iter().chain(other.iter()))
    }

    /// Dense row-major copy, for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = alloc::vec![0.0; self.n_users * self.n_pois];
        for (u, l, c) in self.iter() {
            d[u * self.n_pois + l] = f64::from(c);
        }
        d
    }
}

/// Counts check-ins per (user, POI), optionally keeping only those that fall
/// in one temporal state.
pub fn build_matrix(
    checkins: &[CheckIn],
    users: &Catalog,
    pois: &Catalog,
    state_filter: Option<(TemporalState, &StatePolicy)>,
) -> Result<InteractionMatrix> {
    let mut triplets = Vec::with_capacity(checkins.len());
    for c in checkins {
        if let Some((state, policy)) = state_filter {
            if policy.assign(c) != state {
                continue;
            }
        }
        let u = users
            .index_of(&c.user_id)
            .ok_or_else(|| Error::UnknownId { kind: "user", id: c.user_id.clone() })?;
        let l = pois
            .index_of(&c.poi_id)
            .ok_or_else(|| Error::UnknownId { kind: "poi", id: c.poi_id.clone() })?;
        triplets.push((u, l, 1));
    }
    InteractionMatrix::from_triplets(users.len(), pois.len(), triplets)
}
