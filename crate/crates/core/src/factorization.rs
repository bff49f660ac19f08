//! Poisson factor model with Gamma-kernel priors, trained by projected
//! gradient ascent on the log posterior.
//!
//! For latent dimension K, shape `sigma_k` and scale `rho_k` the objective is
//!
//! ```text
//!   sum_ik (sigma_k - 1) ln(U_ik / rho_k) - U_ik / rho_k
//! + sum_jk (sigma_k - 1) ln(L_jk / rho_k) - L_jk / rho_k
//! + sum_ij R_ij ln (U^T L)_ij - (U^T L)_ij
//! ```
//!
//! The log term runs over the non-zeros of R only; the dense rate sum uses
//! `sum_ij (U^T L)_ij = sum_k (sum_i U_ik)(sum_j L_jk)`.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{InteractionMatrix, TemporalState};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub sigma: f64,
    pub rho: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative objective change below which training stops.
    pub tolerance: f64,
    /// Positivity floor applied after every step.
    pub floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 30,
            sigma: 2.0,
            rho: 1.0,
            learning_rate: 1e-4,
            max_epochs: 300,
            tolerance: 1e-6,
            floor: 1e-8,
            seed: 0,
        }
    }
}

/// Step multiplier after an accepted step.
const STEP_GROWTH: f64 = 1.2;
/// Maximum step halvings within one epoch before training is declared stationary.
const MAX_HALVINGS: usize = 60;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if self.k == 0 {
            return bad("k", "latent dimension must be positive");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma", "prior shape must be positive");
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad("rho", "prior scale must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return bad("tolerance", "must be non-negative");
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return bad("floor", "positivity floor must be positive");
        }
        Ok(())
    }

    /// Same hyperparameters, seed replaced by the named sub-stream of this seed.
    pub fn for_stream(&self, name: &str) -> TrainConfig {
        TrainConfig { seed: rng::substream(self.seed, name).next_u64(), ..self.clone() }
    }
}

/// Latent user and POI factors.
///
/// Factors are stored entity-major: `user_factors[i * k + f]` is `U_fi`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub k: usize,
    pub n_users: usize,
    pub n_pois: usize,
    pub user_factors: Vec<f64>,
    pub poi_factors: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub seed: u64,
    pub epochs: usize,
}

impl FactorModel {
    /// Uniform (0, 1) / sqrt(K) initialization, floored at `cfg.floor`.
    pub fn init(n_users: usize, n_pois: usize, cfg: &TrainConfig) -> FactorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scale = 1.0 / libm::sqrt(cfg.k as f64);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| (rng.random::<f64>() * scale).max(cfg.floor)).collect()
        };
        let user_factors = draw(n_users * cfg.k);
        let poi_factors = draw(n_pois * cfg.k);
        FactorModel {
            k: cfg.k,
            n_users,
            n_pois,
            user_factors,
            poi_factors,
            sigma: alloc::vec![cfg.sigma; cfg.k],
            rho: alloc::vec![cfg.rho; cfg.k],
            seed: cfg.seed,
            epochs: 0,
        }
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn poi(&self, l: usize) -> &[f64] {
        &self.poi_factors[l * self.k..(l + 1) * self.k]
    }

    /// `U_u^T L_l`.
    pub fn score(&self, u: usize, l: usize) -> Result<f64> {
        if u >= self.n_users {
            return Err(Error::IndexOutOfRange { kind: "user", index: u, len: self.n_users });
        }
        if l >= self.n_pois {
            return Err(Error::IndexOutOfRange { kind: "poi", index: l, len: self.n_pois });
        }
        Ok(dot(self.user(u), self.poi(l)))
    }

    /// Scores of user `u` for every POI.
    pub fn user_scores(&self, u: usize) -> Vec<f64> {
        let uf = self.user(u);
        self.poi_factors.chunks_exact(self.k).map(|lf| dot(uf, lf)).collect()
    }

    fn check_shape(&self, r: &InteractionMatrix) -> Result<()> {
        if r.shape() != (self.n_users, self.n_pois) {
            return Err(Error::ShapeMismatch { expected: (self.n_users, self.n_pois), found: r.shape() });
        }
        Ok(())
    }

    fn check_positive(&self) -> Result<()> {
        for (matrix, data) in [("user", &self.user_factors), ("poi", &self.poi_factors)] {
            if let Some(pos) = data.iter().position(|&x| !(x > 0.0)) {
                return Err(Error::NonPositiveFactor { matrix, row: pos / self.k, factor: pos % self.k });
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn factor_sums(data: &[f64], k: usize) -> Vec<f64> {
    let mut s = alloc::vec![0.0; k];
    for row in data.chunks_exact(k) {
        for (acc, x) in s.iter_mut().zip(row) {
            *acc += x;
        }
    }
    s
}

fn log_prior(data: &[f64], sigma: &[f64], rho: &[f64]) -> f64 {
    let k = sigma.len();
    data.chunks_exact(k)
        .map(|row| {
            row.iter()
                .zip(sigma.iter().zip(rho))
                .map(|(&x, (&s, &r))| (s - 1.0) * libm::log(x / r) - x / r)
                .sum::<f64>()
        })
        .sum()
}

/// Log-posterior objective (additive constant dropped). Larger is better.
pub fn objective(model: &FactorModel, r: &InteractionMatrix) -> Result<f64> {
    model.check_shape(r)?;
    model.check_positive()?;
    let prior = log_prior(&model.user_factors, &model.sigma, &model.rho)
        + log_prior(&model.poi_factors, &model.sigma, &model.rho);
    let log_lik: f64 = r
        .iter()
        .map(|(u, l, c)| f64::from(c) * libm::log(dot(model.user(u), model.poi(l))))
        .sum();
    let rate_sum = dot(&factor_sums(&model.user_factors, model.k), &factor_sums(&model.poi_factors, model.k));
    Ok(prior + log_lik - rate_sum)
}

/// Partial derivatives of [`objective`], laid out like the model's factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub user: Vec<f64>,
    pub poi: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.user.iter().chain(&self.poi).map(|g| g * g).sum())
    }
}

pub fn gradient(model: &FactorModel, r: &InteractionMatrix) -> Result<Gradient> {
    model.check_shape(r)?;
    model.check_positive()?;
    let k = model.k;
    let user_sums = factor_sums(&model.user_factors, k);
    let poi_sums = factor_sums(&model.poi_factors, k);
    let prior_grad = |data: &[f64], other_sums: &[f64]| -> Vec<f64> {
        let mut g = Vec::with_capacity(data.len());
        for row in data.chunks_exact(k) {
            for f in 0..k {
                g.push((model.sigma[f] - 1.0) / row[f] - 1.0 / model.rho[f] - other_sums[f]);
            }
        }
        g
    };
    let mut gu = prior_grad(&model.user_factors, &poi_sums);
    let mut gl = prior_grad(&model.poi_factors, &user_sums);
    for (u, l, c) in r.iter() {
        let uf = model.user(u);
        let lf = model.poi(l);
        let w = f64::from(c) / dot(uf, lf);
        for f in 0..k {
            gu[u * k + f] += w * lf[f];
            gl[l * k + f] += w * uf[f];
        }
    }
    Ok(Gradient { user: gu, poi: gl })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    /// Objective at initialization followed by each accepted step.
    pub objective_trace: Vec<f64>,
    /// Steps rejected because the objective would have decreased.
    pub rejected_steps: usize,
    /// Stopped on the tolerance (or a stationary point) rather than the epoch cap.
    pub converged: bool,
    pub final_step: f64,
}

impl TrainReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Projected gradient ascent.
///
/// Each epoch takes one full-gradient step, clamps every entry to the floor,
/// and accepts the step only if the objective does not decrease; otherwise
/// the step size is halved and the step retried. Accepted steps grow the
/// step size by a constant factor.
pub fn train(r: &InteractionMatrix, cfg: &TrainConfig) -> Result<(FactorModel, TrainReport)> {
    train_observed(r, cfg, |_, _| {})
}

/// [`train`], calling `observe` with the model and its objective after
/// every accepted step.
pub fn train_observed(
    r: &InteractionMatrix,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&FactorModel, f64),
) -> Result<(FactorModel, TrainReport)> {
    cfg.validate()?;
    if r.n_users() == 0 || r.n_pois() == 0 {
        return Err(Error::Empty("interaction matrix"));
    }
    let mut model = FactorModel::init(r.n_users(), r.n_pois(), cfg);
    let mut current = objective(&model, r)?;
    if !current.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut report = TrainReport {
        epochs: 0,
        objective_trace: alloc::vec![current],
        rejected_steps: 0,
        converged: false,
        final_step: cfg.learning_rate,
    };
    let mut step = cfg.learning_rate;
    let mut candidate = model.clone();
    'epochs: for epoch in 1..=cfg.max_epochs {
        let g = gradient(&model, r)?;
        if g.user.iter().chain(&g.poi).any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let mut halvings = 0;
        let next = loop {
            project_step(&model.user_factors, &g.user, step, cfg.floor, &mut candidate.user_factors);
            project_step(&model.poi_factors, &g.poi, step, cfg.floor, &mut candidate.poi_factors);
            let value = objective(&candidate, r)?;
            if value.is_finite() && value >= current {
                break value;
            }
            report.rejected_steps += 1;
            halvings += 1;
            step *= 0.5;
            if halvings > MAX_HALVINGS {
                report.converged = true;
                break 'epochs;
            }
        };
        core::mem::swap(&mut model, &mut candidate);
        model.epochs = epoch;
        report.epochs = epoch;
        report.objective_trace.push(next);
        observe(&model, next);
        let rel = (next - current) / current.abs().max(1.0);
        current = next;
        step *= STEP_GROWTH;
        if rel < cfg.tolerance {
            report.converged = true;
            break;
        }
    }
    report.final_step = step;
    Ok((model, report))
}

fn project_step(x: &[f64], g: &[f64], step: f64, floor: f64, out: &mut [f64]) {
    for ((o, &xi), &gi) in out.iter_mut().zip(x).zip(g) {
        *o = (xi + step * gi).max(floor);
    }
}

/// One factor model per temporal state, all over the same catalogs.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModelSet {
    pub models: Vec<(TemporalState, FactorModel)>,
}

impl TemporalModelSet {
    pub fn new(models: Vec<(TemporalState, FactorModel)>) -> Result<Self> {
        if let Some((_, first)) = models.first() {
            for (_, m) in &models[1..] {
                if (m.n_users, m.n_pois) != (first.n_users, first.n_pois) {
                    return Err(Error::ShapeMismatch {
                        expected: (first.n_users, first.n_pois),
                        found: (m.n_users, m.n_pois),
                    });
                }
                if m.k != first.k {
                    return Err(Error::InvalidParameter {
                        name: "k",
                        reason: alloc::format!("state models disagree on K: {} vs {}", first.k, m.k),
                    });
                }
            }
        }
        Ok(TemporalModelSet { models })
    }

    /// Sum of the per-state scores.
    pub fn score(&self, u: usize, l: usize) -> Result<f64> {
        self.models.iter().map(|(_, m)| m.score(u, l)).sum()
    }

    pub fn user_scores(&self, u: usize, n_pois: usize) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; n_pois];
        for (_, m) in &self.models {
            for (a, s) in acc.iter_mut().zip(m.user_scores(u)) {
                *a += s;
            }
        }
        acc
    }
}

/// Trains one model per state sub-matrix. Each state draws its seed from
/// the sub-stream named after the state.
pub fn train_temporal(
    matrices: &[(TemporalState, InteractionMatrix)],
    cfg: &TrainConfig,
) -> Result<(TemporalModelSet, Vec<TrainReport>)> {
    let mut models = Vec::with_capacity(matrices.len());
    let mut reports = Vec::with_capacity(matrices.len());
    for (state, r) in matrices {
        let (m, rep) = train(r, &temporal_config(cfg, *state))?;
        models.push((*state, m));
        reports.push(rep);
    }
    Ok((TemporalModelSet::new(models)?, reports))
}

/// Configuration used for the model of one temporal state.
pub fn temporal_config(cfg: &TrainConfig, state: TemporalState) -> TrainConfig {
    cfg.for_stream(state.name())
}
