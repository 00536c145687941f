//! Ground-truth behavioral model.
//!
//! Users and options live in two parallel d-dimensional latent spaces. A
//! user's taste vector `a` against an option's `x` gives *enrichment* (the
//! value actually delivered); `b` against `y` gives *temptation* (the pull at
//! decision time). What a user picks is governed by the *choice score*, a
//! temptation-heavy blend; the rating they leave afterwards reflects the
//! *feedback score*, an enrichment-heavier blend. The wedge between the two
//! blends is what makes engagement-style signals misleading.
//!
//! Each round the user faces a recommended slate plus one *outside option*
//! drawn from off-platform life, consumes exactly one option (the highest
//! choice score, with deterministic tie-breaking), and an on-platform
//! consumption removes that item from the user's future availability.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamp for world JSON files.
pub const WORLD_FORMAT_VERSION: u32 = 1;

/// Identifier of a user, dense within a world (`users[i].user_id == i`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct UserId(pub u64);

/// Identifier of an on-platform item, dense within a world
/// (`items[i].option_id == i`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ItemId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// A point in one of the two latent spaces. Components are finite and the
/// dimension is at least 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("latent vector must have dimension >= 1".into()));
        }
        if let Some(c) = components.iter().find(|c| !c.is_finite()) {
            return Err(Error::Config(format!("non-finite latent component {c}")));
        }
        Ok(LatentVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Inner product; errors if dimensions disagree.
    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "latent inner product",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

/// Whether an option is part of the platform catalog or off-platform life.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    OnPlatformItem,
    OutsideOption,
}

/// A consumable option: latent position `x` in enrichment space and `y` in
/// temptation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionProfile {
    pub option_id: u64,
    pub kind: OptionKind,
    pub x: LatentVector,
    pub y: LatentVector,
}

impl OptionProfile {
    pub fn new(option_id: u64, kind: OptionKind, x: LatentVector, y: LatentVector) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                context: "option latent spaces",
                expected: x.dim(),
                got: y.dim(),
            });
        }
        Ok(OptionProfile { option_id, kind, x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// A user's taste vectors and blend weights.
///
/// Invariants (enforced by [`UserProfile::new`]): `a` and `b` share a
/// dimension, their first components are exactly 1 (the shared-scale anchor
/// that makes enrichment and temptation comparable across users), and
/// `0 <= lambda_c <= lambda_f <= 1`: feedback always weights enrichment at
/// least as heavily as in-the-moment choice does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub a: LatentVector,
    pub b: LatentVector,
    pub lambda_c: f64,
    pub lambda_f: f64,
}

impl UserProfile {
    pub fn new(
        user_id: UserId,
        a: LatentVector,
        b: LatentVector,
        lambda_c: f64,
        lambda_f: f64,
    ) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                context: "user latent spaces",
                expected: a.dim(),
                got: b.dim(),
            });
        }
        if a.components()[0] != 1.0 || b.components()[0] != 1.0 {
            return Err(Error::Config(format!(
                "user {user_id}: first taste components must equal 1 (got a[0]={}, b[0]={})",
                a.components()[0],
                b.components()[0]
            )));
        }
        for (name, l) in [("lambda_c", lambda_c), ("lambda_f", lambda_f)] {
            if !l.is_finite() || !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("user {user_id}: {name}={l} outside [0, 1]")));
            }
        }
        if lambda_c > lambda_f {
            return Err(Error::Config(format!(
                "user {user_id}: lambda_c={lambda_c} exceeds lambda_f={lambda_f}"
            )));
        }
        Ok(UserProfile { user_id, a, b, lambda_c, lambda_f })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

/// Monotone non-decreasing map from feedback scores to emitted ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingMap {
    /// Ratings are the feedback scores themselves.
    Identity,
    /// `clamp(scale * score + offset, lo, hi)` with `scale > 0`.
    AffineClamped { scale: f64, offset: f64, lo: f64, hi: f64 },
}

impl RatingMap {
    /// Affine map clamped to `[lo, hi]`; `scale` must be strictly positive so
    /// the map stays monotone and invertible on its interior.
    pub fn affine_clamped(scale: f64, offset: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(scale.is_finite() && offset.is_finite() && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("rating map parameters must be finite".into()));
        }
        if scale <= 0.0 {
            return Err(Error::Config(format!("rating map scale {scale} must be > 0")));
        }
        if lo >= hi {
            return Err(Error::Config(format!("rating map range [{lo}, {hi}] is empty")));
        }
        Ok(RatingMap::AffineClamped { scale, offset, lo, hi })
    }

    /// Five-star-style output: feedback scores around [0, 20] land in
    /// [0.5, 5.0].
    pub fn star_scale() -> Self {
        RatingMap::AffineClamped { scale: 0.225, offset: 0.5, lo: 0.5, hi: 5.0 }
    }

    pub fn apply(&self, score: f64) -> f64 {
        match *self {
            RatingMap::Identity => score,
            RatingMap::AffineClamped { scale, offset, lo, hi } => {
                (scale * score + offset).clamp(lo, hi)
            }
        }
    }

    /// Derivative of the map at `score` (0 on clamped segments).
    pub fn derivative(&self, score: f64) -> f64 {
        match *self {
            RatingMap::Identity => 1.0,
            RatingMap::AffineClamped { scale, offset, lo, hi } => {
                let raw = scale * score + offset;
                if raw <= lo || raw >= hi {
                    0.0
                } else {
                    scale
                }
            }
        }
    }
}

/// What a user consumed in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Item(ItemId),
    Outside,
}

/// One round of one user's history.
///
/// `outside_score` / `outside_enrichment` record the ground truth of the
/// outside option actually drawn that round (whether or not it was chosen);
/// they exist for metrics and are `None` where unknown, e.g. in reconstructed
/// histories. Estimators must not read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: UserId,
    pub round: u64,
    pub slate: Vec<ItemId>,
    pub chosen: Choice,
    /// Present iff an on-platform item was chosen and rating emission was on.
    pub rating: Option<f64>,
    pub outside_score: Option<f64>,
    pub outside_enrichment: Option<f64>,
}

/// Chronological interaction records, the unit of logging and estimation.
pub type InteractionLog = Vec<InteractionRecord>;

/// The off-platform side of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutsideWorld {
    /// An explicit pool of outside options; each round one is drawn from
    /// `availability` (a probability vector over the pool).
    Pool {
        options: Vec<OptionProfile>,
        availability: Vec<f64>,
    },
    /// No explicit pool: the outside option's choice score is drawn from
    /// `Normal(mu, sigma)` and its enrichment is a known per-user constant.
    /// This is the form a fitted model induces.
    ScoreNormal {
        mu: f64,
        sigma: f64,
        /// Expected outside enrichment per user, indexed like `World::users`.
        expected_enrichment: Vec<f64>,
    },
}

/// Provenance notes carried by a world; not consumed by any algorithm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_draws: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

/// Complete simulation state: population, catalog, outside world, and each
/// user's consumed set. `round` is a global counter advanced only by the
/// experiment harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub users: Vec<UserProfile>,
    pub items: Vec<OptionProfile>,
    pub outside: OutsideWorld,
    /// Per-user consumed item sets, indexed like `users`.
    pub consumed: Vec<BTreeSet<ItemId>>,
    pub round: u64,
    pub meta: WorldMeta,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    format_version: u32,
    world: World,
}

impl World {
    /// Builds a fresh world (round 0, nothing consumed) and validates it.
    pub fn new(
        seed: u64,
        users: Vec<UserProfile>,
        items: Vec<OptionProfile>,
        outside: OutsideWorld,
        meta: WorldMeta,
    ) -> Result<Self> {
        let consumed = vec![BTreeSet::new(); users.len()];
        let world = World { seed, users, items, outside, consumed, round: 0, meta };
        world.validate()?;
        Ok(world)
    }

    /// Checks every structural invariant; run on construction and after
    /// deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::Config("world has no users".into()));
        }
        let d = self.users[0].dim();
        for (i, u) in self.users.iter().enumerate() {
            if u.user_id != UserId(i as u64) {
                return Err(Error::Config(format!(
                    "user at index {i} has id {}; ids must be dense",
                    u.user_id
                )));
            }
            if u.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "world users",
                    expected: d,
                    got: u.dim(),
                });
            }
            // Re-check value invariants, so hand-built or deserialized
            // profiles get the same scrutiny as constructed ones.
            UserProfile::new(u.user_id, u.a.clone(), u.b.clone(), u.lambda_c, u.lambda_f)?;
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.option_id != i as u64 {
                return Err(Error::Config(format!(
                    "item at index {i} has id {}; ids must be dense",
                    item.option_id
                )));
            }
            if item.kind != OptionKind::OnPlatformItem {
                return Err(Error::Config(format!("item {i} not marked on-platform")));
            }
            if item.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "world items",
                    expected: d,
                    got: item.dim(),
                });
            }
        }
        match &self.outside {
            OutsideWorld::Pool { options, availability } => {
                if options.is_empty() {
                    return Err(Error::Config("outside pool is empty".into()));
                }
                for o in options {
                    if o.kind != OptionKind::OutsideOption {
                        return Err(Error::Config(format!(
                            "outside option {} not marked as such",
                            o.option_id
                        )));
                    }
                    if o.dim() != d {
                        return Err(Error::DimensionMismatch {
                            context: "outside options",
                            expected: d,
                            got: o.dim(),
                        });
                    }
                }
                if availability.len() != options.len() {
                    return Err(Error::Config(format!(
                        "availability has {} entries for {} outside options",
                        availability.len(),
                        options.len()
                    )));
                }
                if availability.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::Config("availability entries must be >= 0".into()));
                }
                let total: f64 = availability.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("availability sums to {total}, not 1")));
                }
            }
            OutsideWorld::ScoreNormal { mu, sigma, expected_enrichment } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(Error::Config(format!(
                        "outside score distribution Normal({mu}, {sigma}) is invalid"
                    )));
                }
                if expected_enrichment.len() != self.users.len() {
                    return Err(Error::Config(format!(
                        "expected outside enrichment has {} entries for {} users",
                        expected_enrichment.len(),
                        self.users.len()
                    )));
                }
                if expected_enrichment.iter().any(|e| !e.is_finite()) {
                    return Err(Error::Config("non-finite expected outside enrichment".into()));
                }
            }
        }
        if self.consumed.len() != self.users.len() {
            return Err(Error::Config(format!(
                "consumed has {} sets for {} users",
                self.consumed.len(),
                self.users.len()
            )));
        }
        for (i, set) in self.consumed.iter().enumerate() {
            if let Some(id) = set.iter().find(|id| id.0 >= self.items.len() as u64) {
                return Err(Error::Config(format!("user {i} consumed unknown item {id}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.users[0].dim()
    }

    pub fn user_index(&self, id: UserId) -> Result<usize> {
        let idx = id.0 as usize;
        if idx >= self.users.len() {
            return Err(Error::Input(format!("unknown user {id}")));
        }
        Ok(idx)
    }

    pub fn item(&self, id: ItemId) -> Result<&OptionProfile> {
        self.items
            .get(id.0 as usize)
            .ok_or_else(|| Error::Input(format!("unknown item {id}")))
    }

    /// Item indices still available to `user_idx`, ascending.
    pub fn available_items(&self, user_idx: usize) -> Vec<usize> {
        (0..self.items.len())
            .filter(|i| !self.consumed[user_idx].contains(&ItemId(*i as u64)))
            .collect()
    }

    /// Expected enrichment of the outside option for one user, under the
    /// world's availability distribution.
    pub fn expected_outside_enrichment(&self, user_idx: usize) -> Result<f64> {
        match &self.outside {
            OutsideWorld::Pool { options, availability } => {
                let user = &self.users[user_idx];
                let mut total = 0.0;
                for (o, p) in options.iter().zip(availability) {
                    total += p * enrichment(user, o)?;
                }
                Ok(total)
            }
            OutsideWorld::ScoreNormal { expected_enrichment, .. } => {
                Ok(expected_enrichment[user_idx])
            }
        }
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let file = WorldFile { format_version: WORLD_FORMAT_VERSION, world: self.clone() };
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: WorldFile = serde_json::from_str(&text)?;
        if file.format_version != WORLD_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "world file {} has format version {}, expected {WORLD_FORMAT_VERSION}",
                path.display(),
                file.format_version
            )));
        }
        file.world.validate()?;
        Ok(file.world)
    }
}

/// Enrichment `a · x`: the value the option actually delivers to the user.
pub fn enrichment(user: &UserProfile, option: &OptionProfile) -> Result<f64> {
    user.a.dot(&option.x)
}

/// Temptation `b · y`: the option's pull at decision time.
pub fn temptation(user: &UserProfile, option: &OptionProfile) -> Result<f64> {
    user.b.dot(&option.y)
}

/// Choice score `lambda_c * u + (1 - lambda_c) * v`, the quantity users
/// maximize when picking what to consume.
pub fn choice_score(user: &UserProfile, option: &OptionProfile) -> Result<f64> {
    let u = enrichment(user, option)?;
    let v = temptation(user, option)?;
    Ok(user.lambda_c * u + (1.0 - user.lambda_c) * v)
}

/// Feedback score `lambda_f * u + (1 - lambda_f) * v`, the quantity ratings
/// reflect.
pub fn feedback_score(user: &UserProfile, option: &OptionProfile) -> Result<f64> {
    let u = enrichment(user, option)?;
    let v = temptation(user, option)?;
    Ok(user.lambda_f * u + (1.0 - user.lambda_f) * v)
}

/// Rating emitted after consuming `item`: the rating map applied to the
/// feedback score. Deterministic.
pub fn emit_rating(user: &UserProfile, item: &OptionProfile, map: &RatingMap) -> Result<f64> {
    Ok(map.apply(feedback_score(user, item)?))
}

/// Enrichment the user realizes when offered `item` against outside option
/// `outside`: the item's enrichment if the item wins the choice (ties go to
/// the item), otherwise the outside option's.
pub fn conditional_enrichment(
    user: &UserProfile,
    item: &OptionProfile,
    outside: &OptionProfile,
) -> Result<f64> {
    if choice_score(user, item)? >= choice_score(user, outside)? {
        enrichment(user, item)
    } else {
        enrichment(user, outside)
    }
}

/// The choice rule on precomputed choice scores: the highest-scoring slate
/// item wins, ties among items go to the lowest item id, and the winning item
/// beats the outside option iff its score is `>=` the outside score. An empty
/// slate with an outside option present yields [`Choice::Outside`]; an empty
/// slate with none is an error.
pub fn choose_scored(slate: &[(ItemId, f64)], outside_score: Option<f64>) -> Result<Choice> {
    let mut best: Option<(ItemId, f64)> = None;
    for &(id, score) in slate {
        let better = match best {
            None => true,
            Some((bid, bs)) => score > bs || (score == bs && id < bid),
        };
        if better {
            best = Some((id, score));
        }
    }
    match (best, outside_score) {
        (Some((id, score)), Some(os)) => {
            Ok(if score >= os { Choice::Item(id) } else { Choice::Outside })
        }
        (Some((id, _)), None) => Ok(Choice::Item(id)),
        (None, Some(_)) => Ok(Choice::Outside),
        (None, None) => {
            Err(Error::InvalidRound("empty slate and no outside option to fall back to".into()))
        }
    }
}

/// Applies the choice rule to option profiles, returning the consumed one.
pub fn select_consumption<'a>(
    user: &UserProfile,
    slate: &[&'a OptionProfile],
    outside: Option<&'a OptionProfile>,
) -> Result<&'a OptionProfile> {
    let mut scored = Vec::with_capacity(slate.len());
    for (pos, option) in slate.iter().enumerate() {
        // Positions stand in for ids here; ties then resolve to the earliest
        // slate entry, consistent with lowest-id ordering of world slates.
        scored.push((ItemId(pos as u64), choice_score(user, option)?));
    }
    let outside_score = match outside {
        Some(o) => Some(choice_score(user, o)?),
        None => None,
    };
    match choose_scored(&scored, outside_score)? {
        Choice::Item(ItemId(pos)) => Ok(slate[pos as usize]),
        Choice::Outside => Ok(outside.expect("outside chosen only when present")),
    }
}

/// Runs one round for one user: draws the outside option, applies the choice
/// rule to `slate` (which may be empty, meaning nothing was recommended),
/// marks a chosen item consumed, and emits a rating if `rating_map` is given.
///
/// Errors if the slate contains duplicates, unknown items, or items the user
/// already consumed. Does not advance `world.round`; the harness owns that.
pub fn step_round<R: Rng>(
    world: &mut World,
    user_id: UserId,
    slate: &[ItemId],
    rating_map: Option<&RatingMap>,
    rng: &mut R,
) -> Result<InteractionRecord> {
    let user_idx = world.user_index(user_id)?;
    let mut seen = BTreeSet::new();
    for id in slate {
        if id.0 >= world.items.len() as u64 {
            return Err(Error::InvalidRound(format!("slate references unknown item {id}")));
        }
        if world.consumed[user_idx].contains(id) {
            return Err(Error::InvalidRound(format!(
                "slate offers item {id} already consumed by {user_id}"
            )));
        }
        if !seen.insert(*id) {
            return Err(Error::InvalidRound(format!("slate lists item {id} twice")));
        }
    }

    let user = &world.users[user_idx];
    let (outside_score, outside_enrichment) = match &world.outside {
        OutsideWorld::Pool { options, availability } => {
            let drawn = &options[sample_index(availability, rng)];
            (choice_score(user, drawn)?, enrichment(user, drawn)?)
        }
        OutsideWorld::ScoreNormal { mu, sigma, expected_enrichment } => {
            let z: f64 = StandardNormal.sample(rng);
            (mu + sigma * z, expected_enrichment[user_idx])
        }
    };

    let mut scored = Vec::with_capacity(slate.len());
    for id in slate {
        scored.push((*id, choice_score(user, &world.items[id.0 as usize])?));
    }
    let chosen = choose_scored(&scored, Some(outside_score))?;

    let rating = match chosen {
        Choice::Item(id) => {
            let r = match rating_map {
                Some(map) => Some(emit_rating(&world.users[user_idx], &world.items[id.0 as usize], map)?),
                None => None,
            };
            world.consumed[user_idx].insert(id);
            r
        }
        Choice::Outside => None,
    };

    Ok(InteractionRecord {
        user_id,
        round: world.round,
        slate: slate.to_vec(),
        chosen,
        rating,
        outside_score: Some(outside_score),
        outside_enrichment: Some(outside_enrichment),
    })
}

/// Draws an index from a probability vector using a single uniform variate.
fn sample_index<R: Rng>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // Float dust can leave the cumulative sum a hair under 1.
    probabilities.len() - 1
}
