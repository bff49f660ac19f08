//! Split preparation, model fitting and recommendation for every method.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stacp_core::rng::substream;
use stacp_core::{
    allocate_centers, baseline_user_scores, build_matrix, fit_power_law, top_n, train, training_mask, Ablation,
    ActivityCenter, Baseline, BaselineInputs, CenterConfig, CheckIn, ContextConfig, DatasetSplit, FactorModel,
    FusionInputs, GeoPoint, InteractionMatrix, PowerLawModel, Recommendation, StatePolicy, TemporalModelSet,
    TemporalState, TrainConfig, TrainReport, UserCenters,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "stacp")]
    Stacp,
    #[serde(rename = "no-ctx")]
    NoCtx,
    #[serde(rename = "no-tc")]
    NoTc,
    #[serde(rename = "toppopular")]
    TopPopular,
    #[serde(rename = "pfm")]
    Pfm,
    #[serde(rename = "pfmpd")]
    Pfmpd,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Stacp, Method::NoCtx, Method::NoTc, Method::TopPopular, Method::Pfm, Method::Pfmpd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stacp => "stacp",
            Method::NoCtx => "no-ctx",
            Method::NoTc => "no-tc",
            Method::TopPopular => "toppopular",
            Method::Pfm => "pfm",
            Method::Pfmpd => "pfmpd",
        }
    }

    fn is_fused(self) -> bool {
        matches!(self, Method::Stacp | Method::NoCtx | Method::NoTc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Which models a method list needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Needs {
    pub static_model: bool,
    pub temporal: bool,
    pub centers: bool,
    pub power_law: bool,
}

impl Needs {
    pub fn of(methods: &[Method]) -> Needs {
        let mut n = Needs::default();
        for &m in methods {
            n.static_model |= m != Method::TopPopular;
            n.temporal |= m.is_fused();
            n.centers |= matches!(m, Method::Stacp | Method::NoTc);
            n.power_law |= m == Method::Pfmpd;
        }
        n
    }
}

/// Why a user does not count towards metric averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exclusion {
    TooFewCheckIns,
    EmptyTraining,
    NoNovelTestPois,
}

impl Exclusion {
    pub fn name(self) -> &'static str {
        match self {
            Exclusion::TooFewCheckIns => "fewer-than-3-checkins",
            Exclusion::EmptyTraining => "empty-training-set",
            Exclusion::NoNovelTestPois => "no-unvisited-test-pois",
        }
    }
}

/// A split with its training matrices and per-user relevance sets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    /// Training check-ins after any training-fraction subsampling.
    pub train_checkins: Vec<CheckIn>,
    pub train: InteractionMatrix,
    pub state_train: Vec<(TemporalState, InteractionMatrix)>,
    /// Distinct test POIs the user did not visit in training.
    pub relevant: Vec<Vec<usize>>,
    pub exclusions: Vec<Option<Exclusion>>,
}

impl Prepared {
    pub fn n_users(&self) -> usize {
        self.split.n_users()
    }

    pub fn n_pois(&self) -> usize {
        self.split.n_pois()
    }

    pub fn coords(&self) -> &[GeoPoint] {
        &self.split.coords
    }

    /// Users that count towards metric averages.
    pub fn evaluated_users(&self) -> Vec<usize> {
        (0..self.n_users()).filter(|&u| self.exclusions[u].is_none()).collect()
    }
}

/// Keeps, per user, a uniformly random `round(fraction * k)` of the `k`
/// distinct training POIs together with all their check-ins. A fraction of
/// 1 returns the input unchanged.
pub fn subsample_training(train: &[CheckIn], fraction: f64, seed: u64) -> Result<Vec<CheckIn>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("train_fraction must be in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok(train.to_vec());
    }
    let mut rng = substream(seed, "subsample");
    // distinct POIs per user in first-appearance order
    let mut order: Vec<&str> = Vec::new();
    let mut per_user: std::collections::BTreeMap<&str, Vec<&str>> = Default::default();
    for c in train {
        let pois = per_user.entry(&c.user_id).or_insert_with(|| {
            order.push(&c.user_id);
            Vec::new()
        });
        if !pois.contains(&c.poi_id.as_str()) {
            pois.push(&c.poi_id);
        }
    }
    let mut keep: std::collections::BTreeSet<(&str, &str)> = Default::default();
    for user in order {
        let pois = per_user.get_mut(user).expect("user recorded");
        pois.shuffle(&mut rng);
        let k = (fraction * pois.len() as f64).round() as usize;
        keep.extend(pois[..k].iter().map(|p| (user, *p)));
    }
    Ok(train.iter().filter(|c| keep.contains(&(c.user_id.as_str(), c.poi_id.as_str()))).cloned().collect())
}

pub fn prepare(split: DatasetSplit, policy: &StatePolicy, train_fraction: f64, seed: u64) -> Result<Prepared> {
    policy.validate()?;
    let train_checkins = subsample_training(&split.train, train_fraction, seed)?;
    let train = build_matrix(&train_checkins, &split.users, &split.pois, None)?;
    let state_train = TemporalState::ALL
        .iter()
        .map(|&s| Ok((s, build_matrix(&train_checkins, &split.users, &split.pois, Some((s, policy)))?)))
        .collect::<Result<Vec<_>>>()?;
    let test = build_matrix(&split.test, &split.users, &split.pois, None)?;
    let mut relevant = Vec::with_capacity(split.n_users());
    let mut exclusions = Vec::with_capacity(split.n_users());
    for u in 0..split.n_users() {
        let rel: Vec<usize> = test.row(u).map(|(l, _)| l).filter(|&l| train.get(u, l) == 0).collect();
        let why = if split.is_flagged(u) {
            Some(Exclusion::TooFewCheckIns)
        } else if train.row_len(u) == 0 {
            Some(Exclusion::EmptyTraining)
        } else if rel.is_empty() {
            Some(Exclusion::NoNovelTestPois)
        } else {
            None
        };
        relevant.push(rel);
        exclusions.push(why);
    }
    Ok(Prepared { split, train_checkins, train, state_train, relevant, exclusions })
}

/// Factor models and the power-law fit for one training split.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub static_model: Option<(FactorModel, TrainReport)>,
    pub temporal: Option<(TemporalModelSet, Vec<TrainReport>)>,
    pub power_law: Option<PowerLawModel>,
    /// Training check-ins per POI.
    pub popularity: Vec<u64>,
}

/// Fits whatever `methods` need. The static model and the per-state models
/// train concurrently on the current rayon pool; the static model draws its
/// seed from the `static` sub-stream and each state from its own name.
pub fn fit_models(prep: &Prepared, methods: &[Method], cfg: &TrainConfig) -> Result<Models> {
    let needs = Needs::of(methods);
    cfg.validate()?;
    let mut jobs: Vec<(Option<TemporalState>, &InteractionMatrix, TrainConfig)> = Vec::new();
    if needs.static_model {
        jobs.push((None, &prep.train, cfg.for_stream("static")));
    }
    if needs.temporal {
        for (s, r) in &prep.state_train {
            jobs.push((Some(*s), r, stacp_core::temporal_config(cfg, *s)));
        }
    }
    let trained: Vec<(Option<TemporalState>, FactorModel, TrainReport)> = jobs
        .into_par_iter()
        .map(|(s, r, c)| {
            let (m, rep) = train(r, &c).map_err(|e| Error::from(e).in_stage("train"))?;
            Ok((s, m, rep))
        })
        .collect::<Result<_>>()?;

    let mut models = Models { popularity: prep.train.poi_totals(), ..Models::default() };
    let mut state_models = Vec::new();
    let mut state_reports = Vec::new();
    for (s, m, rep) in trained {
        match s {
            None => models.static_model = Some((m, rep)),
            Some(s) => {
                state_models.push((s, m));
                state_reports.push(rep);
            }
        }
    }
    if needs.temporal {
        models.temporal = Some((TemporalModelSet::new(state_models)?, state_reports));
    }
    if needs.power_law {
        models.power_law = Some(fit_power_law(&prep.train, prep.coords()).map_err(|e| Error::from(e).in_stage("power-law"))?);
    }
    Ok(models)
}

/// Per-user centers, per state and on the unfiltered profile.
#[derive(Debug, Clone, Default)]
pub struct CenterSet {
    pub by_state: Vec<UserCenters>,
    pub flat: Vec<Vec<ActivityCenter>>,
}

fn profile(r: &InteractionMatrix, u: usize) -> Vec<(usize, u64)> {
    r.row(u).map(|(l, c)| (l, u64::from(c))).collect()
}

/// Allocates centers for every user. The flat allocation is tagged with the
/// state holding most of the user's training check-ins.
pub fn allocate_all(prep: &Prepared, cfg: &CenterConfig) -> Result<CenterSet> {
    cfg.validate()?;
    let coords = prep.coords();
    let per_user: Vec<(UserCenters, Vec<ActivityCenter>)> = (0..prep.n_users())
        .into_par_iter()
        .map(|u| {
            let mut uc = UserCenters::default();
            let mut dominant = (0u64, TemporalState::Working);
            for (s, r) in &prep.state_train {
                let p = profile(r, u);
                let total: u64 = p.iter().map(|x| x.1).sum();
                if total > dominant.0 {
                    dominant = (total, *s);
                }
                let c = allocate_centers(&p, coords, cfg, *s);
                match s {
                    TemporalState::Working => uc.working = c,
                    TemporalState::Leisure => uc.leisure = c,
                }
            }
            let flat = allocate_centers(&profile(&prep.train, u), coords, cfg, dominant.1);
            (uc, flat)
        })
        .collect();
    let (by_state, flat) = per_user.into_iter().unzip();
    Ok(CenterSet { by_state, flat })
}

/// Recommendations of one method for every user.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub recommendations: Vec<Recommendation>,
    /// Users whose PFMPD score fell back to PFM.
    pub fallback_users: Vec<usize>,
}

/// Scores candidates for every user and keeps the top `n`, excluding the
/// user's training POIs.
pub fn recommend_all(
    prep: &Prepared,
    models: &Models,
    centers: &CenterSet,
    context: &ContextConfig,
    method: Method,
    n: usize,
) -> Result<MethodRun> {
    context.validate()?;
    let missing = |what: &str| Error::Config(format!("method {method} needs the {what}, which was not fitted"));
    let fusion = if method.is_fused() {
        let (static_model, _) = models.static_model.as_ref().ok_or_else(|| missing("static model"))?;
        let (temporal, _) = models.temporal.as_ref().ok_or_else(|| missing("temporal models"))?;
        let blank = || vec![UserCenters::default(); prep.n_users()];
        Some(FusionInputs {
            static_model: static_model.clone(),
            temporal: temporal.clone(),
            centers: if centers.by_state.is_empty() { blank() } else { centers.by_state.clone() },
            flat_centers: if centers.flat.is_empty() { vec![Vec::new(); prep.n_users()] } else { centers.flat.clone() },
            context: *context,
            coords: prep.coords().to_vec(),
        })
    } else {
        None
    };
    let baseline = BaselineInputs {
        train: &prep.train,
        static_model: models.static_model.as_ref().map(|m| &m.0),
        power_law: models.power_law.as_ref(),
        coords: prep.coords(),
        popularity: &models.popularity,
    };
    let results: Vec<(Recommendation, bool)> = (0..prep.n_users())
        .into_par_iter()
        .map(|u| {
            let (scores, fallback) = match (method, &fusion) {
                (Method::Stacp, Some(f)) => (f.user_scores(u, None)?, false),
                (Method::NoCtx, Some(f)) => (f.user_scores(u, Some(Ablation::NoCtx))?, false),
                (Method::NoTc, Some(f)) => (f.user_scores(u, Some(Ablation::NoTc))?, false),
                (Method::TopPopular, _) => baseline_user_scores(Baseline::TopPopular, &baseline, u)?,
                (Method::Pfm, _) => baseline_user_scores(Baseline::Pfm, &baseline, u)?,
                (Method::Pfmpd, _) => baseline_user_scores(Baseline::Pfmpd, &baseline, u)?,
                _ => unreachable!("fusion inputs exist for fused methods"),
            };
            Ok((top_n(u, &scores, &training_mask(&prep.train, u), n), fallback))
        })
        .collect::<Result<_>>()?;
    let fallback_users = results.iter().enumerate().filter(|(_, r)| r.1).map(|(u, _)| u).collect();
    Ok(MethodRun { method, recommendations: results.into_iter().map(|r| r.0).collect(), fallback_users })
}
