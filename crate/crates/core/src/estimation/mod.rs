//! Model estimation from interaction logs.
//!
//! The estimator recovers user tastes, item positions, blend weights, and an
//! outside-option score distribution from two observable streams: explicit
//! ratings (squared error against the predicted rating) and per-round choices
//! (a hinge ranking loss demanding the chosen option outscore every
//! competitor, with the unobserved outside option entering at its location
//! parameter `mu`). The two losses combine as `alpha * rating + (1 - alpha) *
//! click` and are minimized by minibatch SGD ([`fit`]).
//!
//! Constraints hold *by construction*, not by projection: user anchors are
//! literal constants, `lambda_f = sigmoid(theta)`, `lambda_c = lambda_f *
//! sigmoid(theta')`, and `sigma` is fitted post-hoc as a standard deviation
//! with a positive floor. A plain rating factorization ([`RatingFactorization`])
//! provides the ratings-only baseline.

mod fit;
mod mf;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Choice, InteractionLog, InteractionRecord, ItemId, LatentVector, OptionKind, OptionProfile,
    OutsideWorld, RatingMap, UserId, UserProfile, World, WorldMeta,
};
use crate::policy::{standard_normal_cdf, OutsideBelief, PolicyInfo};

pub use fit::{fit, fit_with_universe, gradient_check, FitState};
pub use mf::{MfConfig, RatingFactorization};

/// Version stamp for dataset JSON files.
pub const DATASET_FORMAT_VERSION: u32 = 1;
/// Version stamp for model checkpoint JSON files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One observed rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingObs {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub rating: f64,
}

/// Everything the platform observes: round-level choices and the ratings
/// attached to on-platform consumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Dataset {
    pub interactions: InteractionLog,
    pub ratings: Vec<RatingObs>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format_version: u32,
    dataset: Dataset,
}

impl Dataset {
    /// Extracts the observable dataset from a log: the records themselves
    /// plus one rating observation per rated on-platform consumption.
    pub fn from_log(log: &[InteractionRecord]) -> Self {
        let mut ratings = Vec::new();
        for rec in log {
            if let (Choice::Item(item_id), Some(rating)) = (rec.chosen, rec.rating) {
                ratings.push(RatingObs { user_id: rec.user_id, item_id, rating });
            }
        }
        Dataset { interactions: log.to_vec(), ratings }
    }

    /// Checks internal consistency: finite ratings, every chosen item on its
    /// own slate, and every rating pair appearing in the interactions as an
    /// on-platform choice.
    pub fn validate(&self) -> Result<()> {
        for rec in &self.interactions {
            if let Choice::Item(id) = rec.chosen {
                if !rec.slate.contains(&id) {
                    return Err(Error::Input(format!(
                        "round {} of {} chose item {id} absent from its slate",
                        rec.round, rec.user_id
                    )));
                }
            }
        }
        let chosen_pairs: BTreeSet<(UserId, ItemId)> = self
            .interactions
            .iter()
            .filter_map(|r| match r.chosen {
                Choice::Item(id) => Some((r.user_id, id)),
                Choice::Outside => None,
            })
            .collect();
        for obs in &self.ratings {
            if !obs.rating.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite rating for ({}, {})",
                    obs.user_id, obs.item_id
                )));
            }
            if !chosen_pairs.contains(&(obs.user_id, obs.item_id)) {
                return Err(Error::Input(format!(
                    "rating for ({}, {}) has no matching on-platform choice",
                    obs.user_id, obs.item_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let file = DatasetFile { format_version: DATASET_FORMAT_VERSION, dataset: self.clone() };
        let text = serde_json::to_string(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: DatasetFile = serde_json::from_str(&text)?;
        if file.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "dataset file {} has format version {}, expected {DATASET_FORMAT_VERSION}",
                path.display(),
                file.format_version
            )));
        }
        file.dataset.validate()?;
        Ok(file.dataset)
    }

    /// Per-user mean outside enrichment over the log's outside consumptions
    /// that carry an observed value; users without any get the population
    /// mean (0 when the whole log has none). A serviceable stand-in for the
    /// fit's outside-expectation input when no ground truth is available.
    pub fn outside_enrichment_means(&self) -> BTreeMap<UserId, f64> {
        let mut sums: BTreeMap<UserId, (f64, usize)> = BTreeMap::new();
        for record in &self.interactions {
            let entry = sums.entry(record.user_id).or_insert((0.0, 0));
            if record.chosen == Choice::Outside {
                if let Some(enrichment) = record.outside_enrichment {
                    entry.0 += enrichment;
                    entry.1 += 1;
                }
            }
        }
        let total: f64 = sums.values().map(|(s, _)| s).sum();
        let count: usize = sums.values().map(|(_, c)| c).sum();
        let population = if count > 0 { total / count as f64 } else { 0.0 };
        sums.into_iter()
            .map(|(user, (s, c))| (user, if c > 0 { s / c as f64 } else { population }))
            .collect()
    }
}

/// Whether the feedback blend weight is learned or pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaFMode {
    Learn,
    /// Fix `lambda_f` for every user (e.g. 1.0 when ratings are taken to be
    /// enrichment itself).
    Frozen(f64),
}

/// Hinge treatment in the click-loss *gradient*. Reported losses always use
/// the exact hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HingeSmoothing {
    /// Subgradient of `max(0, z)`.
    Exact,
    /// Gradient of `tau * ln(1 + exp(z / tau))`, for finite-difference
    /// verification. `tau` around 5% of the score scale works well.
    Softplus { tau: f64 },
}

/// SGD hyperparameters and loss configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight on the rating loss; the click loss gets `1 - alpha`.
    pub alpha: f64,
    /// Latent dimension of the fitted representations.
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Standard deviation of the free-parameter initialization.
    pub init_scale: f64,
    /// Decoupled weight decay applied to latent coordinates (taste and item
    /// vectors) after every minibatch step; blend angles and `mu` are never
    /// decayed. 0 disables it. Small values (1e-4 .. 1e-2) keep the fit on
    /// solutions that generalize instead of arbitrary interpolators.
    pub weight_decay: f64,
    /// Stop when the epoch loss changes by less than `tol * (1 + |loss|)`.
    pub convergence_tol: f64,
    pub seed: u64,
    pub lambda_f: LambdaFMode,
    pub smoothing: HingeSmoothing,
    pub rating_map: RatingMap,
}

impl TrainConfig {
    /// Defaults that fit warm-up-sized logs comfortably; callers override
    /// fields as needed.
    pub fn new(latent_dim: usize, seed: u64) -> Self {
        TrainConfig {
            alpha: 0.5,
            latent_dim,
            learning_rate: 0.05,
            epochs: 600,
            minibatch_size: 32,
            init_scale: 0.1,
            weight_decay: 0.0,
            convergence_tol: 1e-8,
            seed,
            lambda_f: LambdaFMode::Learn,
            smoothing: HingeSmoothing::Exact,
            rating_map: RatingMap::Identity,
        }
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha={} outside [0, 1]", self.alpha)));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning_rate={} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("epochs and minibatch_size must be >= 1".into()));
        }
        if !self.init_scale.is_finite() || self.init_scale <= 0.0 {
            return Err(Error::Config(format!("init_scale={} must be > 0", self.init_scale)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay={} must be >= 0",
                self.weight_decay
            )));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(Error::Config(format!(
                "convergence_tol={} must be > 0",
                self.convergence_tol
            )));
        }
        if let LambdaFMode::Frozen(v) = self.lambda_f {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("frozen lambda_f={v} outside [0, 1]")));
            }
        }
        if let HingeSmoothing::Softplus { tau } = self.smoothing {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::Config(format!("softplus tau={tau} must be > 0")));
            }
        }
        Ok(())
    }
}

/// A fitted model: the same shape as the ground truth (per-user tastes and
/// blend weights, per-item positions) plus the outside-option belief
/// `Normal(mu, sigma)` and the externally supplied expected outside
/// enrichment per user.
///
/// `users` and `items` are the sorted id universes; all per-user and
/// per-item vectors are indexed to match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedModel {
    pub dim: usize,
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    pub a: Vec<LatentVector>,
    pub b: Vec<LatentVector>,
    pub lambda_c: Vec<f64>,
    pub lambda_f: Vec<f64>,
    pub x: Vec<LatentVector>,
    pub y: Vec<LatentVector>,
    pub mu: f64,
    pub sigma: f64,
    pub outside_enrichment: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelCheckpoint {
    format_version: u32,
    config: TrainConfig,
    model: EstimatedModel,
}

impl EstimatedModel {
    /// Checks the estimation invariants: aligned lengths, anchored user
    /// vectors, `0 <= lambda_c <= lambda_f <= 1`, and `sigma > 0`.
    pub fn validate(&self) -> Result<()> {
        let m = self.users.len();
        let n = self.items.len();
        if self.a.len() != m
            || self.b.len() != m
            || self.lambda_c.len() != m
            || self.lambda_f.len() != m
            || self.outside_enrichment.len() != m
            || self.x.len() != n
            || self.y.len() != n
        {
            return Err(Error::Config("estimated model blocks are misaligned".into()));
        }
        if !self.users.windows(2).all(|w| w[0] < w[1]) || !self.items.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::Config("estimated model universes must be sorted and unique".into()));
        }
        for j in 0..m {
            if self.a[j].dim() != self.dim || self.b[j].dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "estimated user vectors",
                    expected: self.dim,
                    got: self.a[j].dim(),
                });
            }
            if self.a[j].components()[0] != 1.0 || self.b[j].components()[0] != 1.0 {
                return Err(Error::Config(format!(
                    "estimated user {} lost its anchor",
                    self.users[j]
                )));
            }
            let (lc, lf) = (self.lambda_c[j], self.lambda_f[j]);
            if !(0.0..=1.0).contains(&lc) || !(0.0..=1.0).contains(&lf) || lc > lf {
                return Err(Error::Config(format!(
                    "estimated user {} has lambda_c={lc}, lambda_f={lf}",
                    self.users[j]
                )));
            }
        }
        for i in 0..n {
            if self.x[i].dim() != self.dim || self.y[i].dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "estimated item vectors",
                    expected: self.dim,
                    got: self.x[i].dim(),
                });
            }
        }
        if !self.mu.is_finite() || !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Config(format!(
                "estimated outside distribution Normal({}, {}) is invalid",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }

    pub fn user_index(&self, id: UserId) -> Option<usize> {
        self.users.binary_search(&id).ok()
    }

    pub fn item_index(&self, id: ItemId) -> Option<usize> {
        self.items.binary_search(&id).ok()
    }

    fn dot(&self, taste: &LatentVector, position: &LatentVector) -> f64 {
        taste.dot(position).expect("estimated model dimensions are uniform")
    }

    pub fn enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.dot(&self.a[user_idx], &self.x[item_idx])
    }

    pub fn temptation(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.dot(&self.b[user_idx], &self.y[item_idx])
    }

    pub fn choice_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        let lc = self.lambda_c[user_idx];
        lc * self.enrichment(user_idx, item_idx) + (1.0 - lc) * self.temptation(user_idx, item_idx)
    }

    pub fn feedback_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        let lf = self.lambda_f[user_idx];
        lf * self.enrichment(user_idx, item_idx) + (1.0 - lf) * self.temptation(user_idx, item_idx)
    }

    pub fn predicted_rating(&self, user_idx: usize, item_idx: usize, map: &RatingMap) -> f64 {
        map.apply(self.feedback_score(user_idx, item_idx))
    }

    /// Probability the item's choice score beats an outside draw:
    /// `Phi((c_hat - mu) / sigma)`.
    pub fn choice_probability(&self, user_idx: usize, item_idx: usize) -> f64 {
        standard_normal_cdf((self.choice_score(user_idx, item_idx) - self.mu) / self.sigma)
    }

    pub fn belief(&self, user_idx: usize) -> OutsideBelief {
        OutsideBelief {
            mu: self.mu,
            sigma: self.sigma,
            expected_enrichment: self.outside_enrichment[user_idx],
        }
    }

    /// Expected conditional enrichment of recommending the item, under the
    /// fitted normal outside-score belief.
    pub fn expected_conditional_enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        crate::policy::expected_enrichment_estimated(
            self.enrichment(user_idx, item_idx),
            self.choice_score(user_idx, item_idx),
            &self.belief(user_idx),
        )
    }

    /// Reifies the fitted parameters as a simulatable [`World`]: the
    /// estimated taste vectors, blends, and item positions become the
    /// ground truth, with the outside option in score-distribution form.
    /// Requires dense universes (`users` = 0..m, `items` = 0..n) so world
    /// indices and model indices coincide.
    pub fn to_world(&self, seed: u64, meta: WorldMeta) -> Result<World> {
        self.validate()?;
        let dense_users = self.users.iter().enumerate().all(|(j, id)| id.0 == j as u64);
        let dense_items = self.items.iter().enumerate().all(|(i, id)| id.0 == i as u64);
        if !dense_users || !dense_items {
            return Err(Error::Config(
                "world reification needs dense user and item universes".into(),
            ));
        }
        let users = (0..self.users.len())
            .map(|j| {
                UserProfile::new(
                    self.users[j],
                    self.a[j].clone(),
                    self.b[j].clone(),
                    self.lambda_c[j],
                    self.lambda_f[j],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let items = (0..self.items.len())
            .map(|i| {
                OptionProfile::new(
                    self.items[i].0,
                    OptionKind::OnPlatformItem,
                    self.x[i].clone(),
                    self.y[i].clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        World::new(
            seed,
            users,
            items,
            OutsideWorld::ScoreNormal {
                mu: self.mu,
                sigma: self.sigma,
                expected_enrichment: self.outside_enrichment.clone(),
            },
            meta,
        )
    }

    pub fn save(&self, config: &TrainConfig, path: &Path) -> Result<()> {
        let file = ModelCheckpoint {
            format_version: MODEL_FORMAT_VERSION,
            config: config.clone(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<(EstimatedModel, TrainConfig)> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ModelCheckpoint = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "model file {} has format version {}, expected {MODEL_FORMAT_VERSION}",
                path.display(),
                file.format_version
            )));
        }
        file.model.validate()?;
        Ok((file.model, file.config))
    }
}

fn hinge(z: f64) -> f64 {
    z.max(0.0)
}

fn require_user(model: &EstimatedModel, id: UserId) -> usize {
    model.user_index(id).unwrap_or_else(|| panic!("user {id} outside the model universe"))
}

fn require_item(model: &EstimatedModel, id: ItemId) -> usize {
    model.item_index(id).unwrap_or_else(|| panic!("item {id} outside the model universe"))
}

/// Sum of squared rating residuals `(map(feedback) - rating)^2`.
///
/// Panics if an observation references ids outside the model universe.
pub fn rating_loss(model: &EstimatedModel, ratings: &[RatingObs], map: &RatingMap) -> f64 {
    ratings
        .iter()
        .map(|obs| {
            let j = require_user(model, obs.user_id);
            let i = require_item(model, obs.item_id);
            let e = model.predicted_rating(j, i, map) - obs.rating;
            e * e
        })
        .sum()
}

/// Exact-hinge ranking loss: per round, every competitor (slate items plus
/// the outside option, entering at score `mu`) is penalized by how far it
/// outscores the chosen option.
///
/// Panics if a record references ids outside the model universe.
pub fn click_loss(model: &EstimatedModel, interactions: &[InteractionRecord]) -> f64 {
    let mut total = 0.0;
    for rec in interactions {
        let j = require_user(model, rec.user_id);
        let chosen_score = match rec.chosen {
            Choice::Item(id) => model.choice_score(j, require_item(model, id)),
            Choice::Outside => model.mu,
        };
        for &id in &rec.slate {
            if rec.chosen == Choice::Item(id) {
                continue;
            }
            total += hinge(model.choice_score(j, require_item(model, id)) - chosen_score);
        }
        if rec.chosen != Choice::Outside {
            total += hinge(model.mu - chosen_score);
        }
    }
    total
}

/// `alpha * rating_loss + (1 - alpha) * click_loss` with the exact hinge.
pub fn total_loss(model: &EstimatedModel, dataset: &Dataset, alpha: f64, map: &RatingMap) -> f64 {
    alpha * rating_loss(model, &dataset.ratings, map)
        + (1.0 - alpha) * click_loss(model, &dataset.interactions)
}

/// Root-mean-square rating residual; `None` on an empty slice.
pub fn rating_rmse(model: &EstimatedModel, ratings: &[RatingObs], map: &RatingMap) -> Option<f64> {
    if ratings.is_empty() {
        return None;
    }
    Some((rating_loss(model, ratings, map) / ratings.len() as f64).sqrt())
}

/// Fraction of rounds whose choice the model predicts exactly, using the
/// behavioral tie rules (best item by estimated choice score, lowest id on
/// ties, item wins against `mu` at equality). `None` on an empty slice.
pub fn choice_accuracy(model: &EstimatedModel, interactions: &[InteractionRecord]) -> Option<f64> {
    if interactions.is_empty() {
        return None;
    }
    let mut correct = 0usize;
    for rec in interactions {
        let j = require_user(model, rec.user_id);
        let scored: Vec<(ItemId, f64)> = rec
            .slate
            .iter()
            .map(|&id| (id, model.choice_score(j, require_item(model, id))))
            .collect();
        let predicted = crate::model::choose_scored(&scored, Some(model.mu))
            .expect("slate plus outside is never empty");
        if predicted == rec.chosen {
            correct += 1;
        }
    }
    Some(correct as f64 / interactions.len() as f64)
}

/// Partial-information [`PolicyInfo`]: the jointly fitted model drives the
/// greedy policy and the pure-enrichment/temptation rankings, a plain rating
/// factorization drives the ratings baseline, and a click-only fit drives the
/// click baseline. All three must share the universe of the world they serve,
/// with model index `i` equal to world index `i`.
pub struct EstimatedInfo<'a> {
    full: &'a EstimatedModel,
    ratings: &'a RatingFactorization,
    clicks: &'a EstimatedModel,
}

impl<'a> EstimatedInfo<'a> {
    pub fn new(
        full: &'a EstimatedModel,
        ratings: &'a RatingFactorization,
        clicks: &'a EstimatedModel,
    ) -> Result<Self> {
        if full.users != clicks.users
            || full.items != clicks.items
            || full.users != *ratings.users()
            || full.items != *ratings.items()
        {
            return Err(Error::Config(
                "estimated info requires all three models to share one universe".into(),
            ));
        }
        full.validate()?;
        clicks.validate()?;
        Ok(EstimatedInfo { full, ratings, clicks })
    }

    pub fn full(&self) -> &EstimatedModel {
        self.full
    }
}

impl PolicyInfo for EstimatedInfo<'_> {
    fn enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.full.enrichment(user_idx, item_idx)
    }

    fn temptation(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.full.temptation(user_idx, item_idx)
    }

    fn choice_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.full.choice_score(user_idx, item_idx)
    }

    fn predicted_rating(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.ratings.predict(user_idx, item_idx)
    }

    fn click_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.clicks.choice_score(user_idx, item_idx)
    }

    fn expected_conditional_enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.full.expected_conditional_enrichment(user_idx, item_idx)
    }

    fn expected_outside_enrichment(&self, user_idx: usize) -> f64 {
        self.full.outside_enrichment[user_idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Choice, OptionKind, OptionProfile, OutsideWorld, UserProfile, World, WorldMeta};
    use crate::model::step_round;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn vecf(c: &[f64]) -> LatentVector {
        LatentVector::new(c.to_vec()).unwrap()
    }

    /// d=1 model where every score is directly legible: lambda_c = lambda_f
    /// = 1 makes choice and feedback both equal x[0].
    fn score_model(item_scores: &[f64], mu: f64) -> EstimatedModel {
        let n = item_scores.len();
        let model = EstimatedModel {
            dim: 1,
            users: vec![UserId(0)],
            items: (0..n as u64).map(ItemId).collect(),
            a: vec![vecf(&[1.0])],
            b: vec![vecf(&[1.0])],
            lambda_c: vec![1.0],
            lambda_f: vec![1.0],
            x: item_scores.iter().map(|s| vecf(&[*s])).collect(),
            y: item_scores.iter().map(|s| vecf(&[*s])).collect(),
            mu,
            sigma: 1.0,
            outside_enrichment: vec![0.0],
        };
        model.validate().unwrap();
        model
    }

    fn round(chosen: Choice, slate: &[u64]) -> InteractionRecord {
        InteractionRecord {
            user_id: UserId(0),
            round: 0,
            slate: slate.iter().map(|i| ItemId(*i)).collect(),
            chosen,
            rating: None,
            outside_score: None,
            outside_enrichment: None,
        }
    }

    #[test]
    fn click_loss_charges_outscoring_competitors() {
        // Outside chosen at mu = 1 against slate scores {2, 0}:
        // hinge(2 - 1) + hinge(0 - 1) = 1.
        let model = score_model(&[2.0, 0.0], 1.0);
        let recs = vec![round(Choice::Outside, &[0, 1])];
        assert_relative_eq!(click_loss(&model, &recs), 1.0);
        // The top item chosen: nothing outscores it, loss 0.
        let recs = vec![round(Choice::Item(ItemId(0)), &[0, 1])];
        assert_relative_eq!(click_loss(&model, &recs), 0.0);
        // The bottom item chosen: outscored by item 0 (by 2) and mu (by 1).
        let recs = vec![round(Choice::Item(ItemId(1)), &[0, 1])];
        assert_relative_eq!(click_loss(&model, &recs), 3.0);
    }

    #[test]
    fn rating_loss_sums_squared_residuals() {
        // Predictions 3 and -1 against observations 2 and 2: 1 + 9 = 10.
        let model = score_model(&[3.0, -1.0], 0.0);
        let ratings = vec![
            RatingObs { user_id: UserId(0), item_id: ItemId(0), rating: 2.0 },
            RatingObs { user_id: UserId(0), item_id: ItemId(1), rating: 2.0 },
        ];
        assert_relative_eq!(rating_loss(&model, &ratings, &RatingMap::Identity), 10.0);
        assert_relative_eq!(
            rating_rmse(&model, &ratings, &RatingMap::Identity).unwrap(),
            5.0_f64.sqrt()
        );
    }

    #[test]
    fn total_loss_blends_by_alpha() {
        // Rating part 4 (residual 2), click part 2 (mu outscores by 2):
        // alpha 0.5 gives 3.
        let model = score_model(&[1.0], 3.0);
        let dataset = Dataset {
            interactions: vec![round(Choice::Item(ItemId(0)), &[0])],
            ratings: vec![RatingObs { user_id: UserId(0), item_id: ItemId(0), rating: -1.0 }],
        };
        assert_relative_eq!(total_loss(&model, &dataset, 0.5, &RatingMap::Identity), 3.0);
        assert_relative_eq!(total_loss(&model, &dataset, 1.0, &RatingMap::Identity), 4.0);
        assert_relative_eq!(total_loss(&model, &dataset, 0.0, &RatingMap::Identity), 2.0);
    }

    #[test]
    fn choice_probability_reference_value() {
        // Choice score 1.96 sigma above mu.
        let model = score_model(&[1.96], 0.0);
        assert!((model.choice_probability(0, 0) - 0.975).abs() < 1e-4);
        assert_relative_eq!(
            model.choice_probability(0, 0),
            standard_normal_cdf(1.96),
            epsilon = 1e-15
        );
    }

    #[test]
    fn choice_accuracy_uses_the_tie_rules() {
        let model = score_model(&[2.0, 0.0, 1.0], 2.0);
        let recs = vec![
            // Item 0 ties mu = 2: the item wins the prediction.
            round(Choice::Item(ItemId(0)), &[0, 1]),
            // Slate {1, 2}: both below mu, prediction is outside.
            round(Choice::Outside, &[1, 2]),
            // Wrong prediction: model says item 0, log says item 1.
            round(Choice::Item(ItemId(1)), &[0, 1]),
        ];
        assert_relative_eq!(choice_accuracy(&model, &recs).unwrap(), 2.0 / 3.0);
        assert!(choice_accuracy(&model, &[]).is_none());
    }

    #[test]
    fn dataset_validation_catches_phantom_ratings() {
        let mut dataset = Dataset {
            interactions: vec![round(Choice::Item(ItemId(0)), &[0])],
            ratings: vec![RatingObs { user_id: UserId(0), item_id: ItemId(1), rating: 3.0 }],
        };
        assert!(matches!(dataset.validate(), Err(Error::Input(_))));
        dataset.ratings[0].item_id = ItemId(0);
        dataset.validate().unwrap();
        // A chosen item must sit on its own slate.
        dataset.interactions.push(round(Choice::Item(ItemId(9)), &[0]));
        assert!(matches!(dataset.validate(), Err(Error::Input(_))));
    }

    #[test]
    fn dataset_from_log_extracts_rated_consumptions() {
        let mut rec = round(Choice::Item(ItemId(0)), &[0, 1]);
        rec.rating = Some(4.0);
        let log = vec![rec, round(Choice::Outside, &[0])];
        let dataset = Dataset::from_log(&log);
        assert_eq!(dataset.interactions.len(), 2);
        assert_eq!(
            dataset.ratings,
            vec![RatingObs { user_id: UserId(0), item_id: ItemId(0), rating: 4.0 }]
        );
        dataset.validate().unwrap();
    }

    #[test]
    fn dataset_and_checkpoint_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = round(Choice::Item(ItemId(0)), &[0]);
        rec.rating = Some(1.5);
        let dataset = Dataset::from_log(&[rec]);
        let dpath = dir.path().join("dataset.json");
        dataset.to_json_file(&dpath).unwrap();
        assert_eq!(Dataset::from_json_file(&dpath).unwrap(), dataset);

        let model = score_model(&[0.25, -1.75], 0.125);
        let config = TrainConfig::new(1, 7);
        let mpath = dir.path().join("model.json");
        model.save(&config, &mpath).unwrap();
        let (back_model, back_config) = EstimatedModel::load(&mpath).unwrap();
        assert_eq!(back_model, model);
        assert_eq!(back_config, config);
        // Serialization is stable: a second save is byte-identical.
        let mpath2 = dir.path().join("model2.json");
        back_model.save(&back_config, &mpath2).unwrap();
        assert_eq!(std::fs::read(&mpath).unwrap(), std::fs::read(&mpath2).unwrap());
    }

    #[test]
    fn estimated_model_validation_catches_broken_invariants() {
        let mut model = score_model(&[1.0], 0.0);
        model.sigma = 0.0;
        assert!(model.validate().is_err());
        let mut model = score_model(&[1.0], 0.0);
        model.lambda_c[0] = 0.8;
        model.lambda_f[0] = 0.5;
        assert!(model.validate().is_err());
        let mut model = score_model(&[1.0], 0.0);
        model.a[0] = vecf(&[2.0]);
        assert!(model.validate().is_err());
    }

    /// With the model set to the exact ground truth (and mu/sigma to the
    /// pooled outside-score moments), the rating loss vanishes and every
    /// active click hinge involves the outside option: item-vs-item terms are
    /// all zero because users really do argmax the modeled scores.
    #[test]
    fn perfect_model_loss_decomposes_as_expected() {
        let users = vec![
            UserProfile::new(UserId(0), vecf(&[1.0, 0.7]), vecf(&[1.0, -0.4]), 0.3, 0.8).unwrap(),
            UserProfile::new(UserId(1), vecf(&[1.0, -1.1]), vecf(&[1.0, 0.9]), 0.2, 0.6).unwrap(),
        ];
        let items: Vec<OptionProfile> = (0..6)
            .map(|i| {
                let f = i as f64;
                OptionProfile::new(
                    i,
                    OptionKind::OnPlatformItem,
                    vecf(&[f - 2.0, 0.5 * f]),
                    vecf(&[3.0 - f, -0.25 * f]),
                )
                .unwrap()
            })
            .collect();
        let outside_pool: Vec<OptionProfile> = (0..3)
            .map(|k| {
                let f = k as f64;
                OptionProfile::new(
                    k,
                    OptionKind::OutsideOption,
                    vecf(&[1.5 - f, f]),
                    vecf(&[f - 0.5, 1.0 - f]),
                )
                .unwrap()
            })
            .collect();
        let outside = OutsideWorld::Pool {
            options: outside_pool.clone(),
            availability: vec![1.0 / 3.0; 3],
        };
        let mut world =
            World::new(3, users.clone(), items.clone(), outside, WorldMeta::default()).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut log = Vec::new();
        for _ in 0..4 {
            for j in 0..world.users.len() {
                let avail = world.available_items(j);
                let slate: Vec<ItemId> =
                    avail.iter().take(3).map(|i| ItemId(*i as u64)).collect();
                log.push(
                    step_round(
                        &mut world,
                        UserId(j as u64),
                        &slate,
                        Some(&RatingMap::Identity),
                        &mut rng,
                    )
                    .unwrap(),
                );
                world.round += 1;
            }
        }
        let dataset = Dataset::from_log(&log);

        // Pooled true outside choice scores over (user, option) pairs.
        let mut scores = Vec::new();
        for u in &users {
            for o in &outside_pool {
                scores.push(crate::model::choice_score(u, o).unwrap());
            }
        }
        let mu = scores.iter().sum::<f64>() / scores.len() as f64;
        let var = scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>()
            / (scores.len() - 1) as f64;

        let truth = EstimatedModel {
            dim: 2,
            users: vec![UserId(0), UserId(1)],
            items: (0..6u64).map(ItemId).collect(),
            a: users.iter().map(|u| u.a.clone()).collect(),
            b: users.iter().map(|u| u.b.clone()).collect(),
            lambda_c: users.iter().map(|u| u.lambda_c).collect(),
            lambda_f: users.iter().map(|u| u.lambda_f).collect(),
            x: items.iter().map(|i| i.x.clone()).collect(),
            y: items.iter().map(|i| i.y.clone()).collect(),
            mu,
            sigma: var.sqrt(),
            outside_enrichment: vec![0.0, 0.0],
        };
        truth.validate().unwrap();

        assert_relative_eq!(rating_loss(&truth, &dataset.ratings, &RatingMap::Identity), 0.0);

        // Item-vs-item hinges are all inactive under the true scores.
        let mut outside_hinges = 0.0;
        for rec in &dataset.interactions {
            let j = truth.user_index(rec.user_id).unwrap();
            match rec.chosen {
                Choice::Item(cid) => {
                    let cs = truth.choice_score(j, truth.item_index(cid).unwrap());
                    for &id in &rec.slate {
                        if id != cid {
                            let s = truth.choice_score(j, truth.item_index(id).unwrap());
                            assert!(s <= cs + 1e-12, "true scores disagree with the log");
                        }
                    }
                    outside_hinges += hinge(mu - cs);
                }
                Choice::Outside => {
                    for &id in &rec.slate {
                        let s = truth.choice_score(j, truth.item_index(id).unwrap());
                        outside_hinges += hinge(s - mu);
                    }
                }
            }
        }
        assert_relative_eq!(click_loss(&truth, &dataset.interactions), outside_hinges);
    }
}
