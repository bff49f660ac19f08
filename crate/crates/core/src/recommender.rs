//! Score fusion, top-N ranking, ablations and baselines.

use alloc::vec::Vec;

use crate::centers::{context_score, state_center_score, ActivityCenter, ContextConfig, UserCenters};
use crate::factorization::{FactorModel, TemporalModelSet};
use crate::geo::{powerlaw_score, GeoPoint, PowerLawModel};
use crate::ingest::InteractionMatrix;
use crate::{Error, Result};

/// The three factors of the fused score for one (user, POI) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreComponents {
    pub static_score: f64,
    pub context: f64,
    pub temporal: f64,
}

impl ScoreComponents {
    pub fn product(&self) -> f64 {
        self.static_score * self.context * self.temporal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Context factor dropped: static x temporal.
    NoCtx,
    /// Centers allocated without temporal states.
    NoTc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    TopPopular,
    Pfm,
    Pfmpd,
}

/// Everything the fused score needs, built from one training split.
#[derive(Debug, Clone)]
pub struct FusionInputs {
    pub static_model: FactorModel,
    pub temporal: TemporalModelSet,
    /// Per-user working/leisure centers.
    pub centers: Vec<UserCenters>,
    /// Per-user centers allocated on the state-unfiltered profile.
    pub flat_centers: Vec<Vec<ActivityCenter>>,
    pub context: ContextConfig,
    pub coords: Vec<GeoPoint>,
}

impl FusionInputs {
    fn check(&self, u: usize, l: usize) -> Result<()> {
        if u >= self.centers.len() {
            return Err(Error::IndexOutOfRange { kind: "user", index: u, len: self.centers.len() });
        }
        if l >= self.coords.len() {
            return Err(Error::IndexOutOfRange { kind: "poi", index: l, len: self.coords.len() });
        }
        Ok(())
    }

    pub fn context_score(&self, u: usize, l: usize) -> f64 {
        let c = &self.centers[u];
        context_score(self.coords[l], &c.working, &c.leisure, &self.context)
    }

    /// Context from the state-unfiltered centers; 1 when the user has none.
    pub fn flat_context_score(&self, u: usize, l: usize) -> f64 {
        let c = &self.flat_centers[u];
        if c.is_empty() {
            1.0
        } else {
            state_center_score(self.coords[l], c)
        }
    }

    pub fn components(&self, u: usize, l: usize) -> Result<ScoreComponents> {
        self.check(u, l)?;
        Ok(ScoreComponents {
            static_score: self.static_model.score(u, l)?,
            context: self.context_score(u, l),
            temporal: self.temporal.score(u, l)?,
        })
    }

    /// Static preference x spatio-temporal context x temporal preference.
    pub fn stacp_score(&self, u: usize, l: usize) -> Result<f64> {
        Ok(self.components(u, l)?.product())
    }

    pub fn ablation_score(&self, variant: Ablation, u: usize, l: usize) -> Result<f64> {
        self.check(u, l)?;
        let s = self.static_model.score(u, l)? * self.temporal.score(u, l)?;
        Ok(match variant {
            Ablation::NoCtx => s,
            Ablation::NoTc => s * self.flat_context_score(u, l),
        })
    }

    /// Scores of user `u` for every POI; `None` is the full model.
    pub fn user_scores(&self, u: usize, variant: Option<Ablation>) -> Result<Vec<f64>> {
        self.check(u, 0)?;
        let n = self.coords.len();
        let st = self.static_model.user_scores(u);
        let tm = self.temporal.user_scores(u, n);
        Ok((0..n)
            .map(|l| {
                match variant {
                    None => st[l] * self.context_score(u, l) * tm[l],
                    Some(Ablation::NoCtx) => st[l] * tm[l],
                    Some(Ablation::NoTc) => st[l] * tm[l] * self.flat_context_score(u, l),
                }
            })
            .collect())
    }
}

/// Inputs for the baseline scorers.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInputs<'a> {
    pub train: &'a InteractionMatrix,
    pub static_model: Option<&'a FactorModel>,
    pub power_law: Option<&'a PowerLawModel>,
    pub coords: &'a [GeoPoint],
    /// Training check-ins per POI.
    pub popularity: &'a [u64],
}

/// Baseline scores of user `u` for every POI. The flag is set when PFMPD
/// fell back to PFM because the user has no training visits.
pub fn baseline_user_scores(method: Baseline, inputs: &BaselineInputs<'_>, u: usize) -> Result<(Vec<f64>, bool)> {
    let require_model = || inputs.static_model.ok_or(Error::Empty("static factor model"));
    match method {
        Baseline::TopPopular => Ok((inputs.popularity.iter().map(|&c| c as f64).collect(), false)),
        Baseline::Pfm => Ok((require_model()?.user_scores(u), false)),
        Baseline::Pfmpd => {
            let model = require_model()?;
            let pl = inputs.power_law.ok_or(Error::Empty("power-law model"))?;
            let mut scores = model.user_scores(u);
            let visited: Vec<GeoPoint> = inputs.train.row(u).map(|(l, _)| inputs.coords[l]).collect();
            if visited.is_empty() {
                return Ok((scores, true));
            }
            for (l, s) in scores.iter_mut().enumerate() {
                *s *= powerlaw_score(pl, inputs.coords[l], &visited)?;
            }
            Ok((scores, false))
        }
    }
}

/// Single-pair baseline score.
pub fn baseline_score(method: Baseline, inputs: &BaselineInputs<'_>, u: usize, l: usize) -> Result<f64> {
    match method {
        Baseline::TopPopular => inputs
            .popularity
            .get(l)
            .map(|&c| c as f64)
            .ok_or(Error::IndexOutOfRange { kind: "poi", index: l, len: inputs.popularity.len() }),
        Baseline::Pfm => inputs.static_model.ok_or(Error::Empty("static factor model"))?.score(u, l),
        Baseline::Pfmpd => {
            let model = inputs.static_model.ok_or(Error::Empty("static factor model"))?;
            let pl = inputs.power_law.ok_or(Error::Empty("power-law model"))?;
            let base = model.score(u, l)?;
            let visited: Vec<GeoPoint> = inputs.train.row(u).map(|(p, _)| inputs.coords[p]).collect();
            if visited.is_empty() {
                return Ok(base);
            }
            Ok(base * powerlaw_score(pl, inputs.coords[l], &visited)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub user: usize,
    pub pois: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fewer than N candidates were available.
    pub truncated: bool,
}

/// Top `n` POIs by score among those not in `excluded`, ties to the lower index.
pub fn top_n(user: usize, scores: &[f64], excluded: &[bool], n: usize) -> Recommendation {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&l| !excluded.get(l).copied().unwrap_or(false)).collect();
    let truncated = cand.len() < n;
    let by_rank = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if cand.len() > n && n > 0 {
        cand.select_nth_unstable_by(n - 1, by_rank);
        cand.truncate(n);
    }
    cand.truncate(n);
    cand.sort_by(by_rank);
    let s = cand.iter().map(|&l| scores[l]).collect();
    Recommendation { user, pois: cand, scores: s, truncated }
}

/// Mask of the POIs user `u` visited in `train`.
pub fn training_mask(train: &InteractionMatrix, u: usize) -> Vec<bool> {
    let mut mask = alloc::vec![false; train.n_pois()];
    for (l, _) in train.row(u) {
        mask[l] = true;
    }
    mask
}
