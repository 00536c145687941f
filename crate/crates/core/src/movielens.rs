//! A simulation sandbox built from a MovieLens-format ratings file: sample
//! users and movies, replay each user's rated history as consumption rounds
//! (off-catalog ratings become outside-option consumptions), reconstruct the
//! click history a ratings-based recommender would have produced at each
//! point in time, estimate the behavioral model from that history with the
//! feedback blend frozen at 1 (ratings read as pure enrichment), and run the
//! policy comparison on the estimated world as if it were the truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    fit_with_universe, choice_accuracy, Dataset, EstimatedModel, LambdaFMode, MfConfig,
    RatingFactorization, TrainConfig,
};
use crate::harness::{
    consumption_frequency, overall_individual_enrichment, run_policy_rounds, Histogram,
    HistogramSpec, OutsideDraws, PolicyMetrics,
};
use crate::model::{
    Choice, InteractionLog, InteractionRecord, ItemId, RatingMap, UserId, WorldMeta,
};
use crate::policy::{PerfectInfo, PolicyKind};
use crate::rng::{block, derive, mix2, substream};

pub const RATINGS_HEADER: &str = "userId,movieId,rating,timestamp";

/// One row of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub user_id: u64,
    pub movie_id: u64,
    /// A half-star value in 0.5..=5.0.
    pub rating: f64,
    /// Seconds since the epoch; strictly positive.
    pub timestamp: i64,
}

impl RatingRow {
    pub fn validate(&self) -> Result<()> {
        let doubled = self.rating * 2.0;
        if !(1.0..=10.0).contains(&doubled) || (doubled - doubled.round()).abs() > 1e-9 {
            return Err(Error::Input(format!("rating {} is not a half-star value", self.rating)));
        }
        if self.timestamp <= 0 {
            return Err(Error::Input(format!("timestamp {} must be positive", self.timestamp)));
        }
        Ok(())
    }
}

/// How to carve a sandbox out of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    /// Users to sample (from those with at least `ratings_per_user` ratings).
    pub users: usize,
    /// Movies to sample (from those the sampled users rated).
    pub movies: usize,
    /// Consumption rounds replayed per user.
    pub ratings_per_user: usize,
    /// Independent sandbox redraws aggregated by the experiment.
    pub resamples: usize,
    /// Latent dimension of the reconstruction recommender and the fit.
    pub latent_dim: usize,
    /// Slate size used when reconstructing click history.
    pub slate_size: usize,
    pub seed: u64,
}

impl SandboxConfig {
    /// Desk-scale defaults: 300 users, 200 movies, 25 rounds each,
    /// 5 resamples, 15-item slates, dimension 2.
    pub fn new(seed: u64) -> Self {
        SandboxConfig {
            users: 300,
            movies: 200,
            ratings_per_user: 25,
            resamples: 5,
            latent_dim: 2,
            slate_size: 15,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("users", self.users),
            ("movies", self.movies),
            ("ratings_per_user", self.ratings_per_user),
            ("resamples", self.resamples),
            ("slate_size", self.slate_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.latent_dim < 2 {
            return Err(Error::Config(
                "latent_dim must be >= 2 (temptation needs a free component)".into(),
            ));
        }
        Ok(())
    }
}

/// Loads and validates a ratings file (comma-separated, header
/// `userId,movieId,rating,timestamp`), streaming line by line. Errors carry
/// 1-based line numbers counting the header.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRow>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    let mut lines = reader.lines();
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path.display().to_string(), e))?,
        None => return Err(parse_err(1, "empty file, expected a header row".into())),
    };
    if header.trim_end() != RATINGS_HEADER {
        return Err(parse_err(1, format!("expected header '{RATINGS_HEADER}', got '{header}'")));
    }
    for (k, line) in lines.enumerate() {
        let line_no = k as u64 + 2;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| parse_err(line_no, format!("missing field {name}")))
        };
        let user_id: u64 = next_field("userId")?
            .trim()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad userId: {e}")))?;
        let movie_id: u64 = next_field("movieId")?
            .trim()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad movieId: {e}")))?;
        let rating: f64 = next_field("rating")?
            .trim()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad rating: {e}")))?;
        let timestamp: i64 = next_field("timestamp")?
            .trim()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad timestamp: {e}")))?;
        if fields.next().is_some() {
            return Err(parse_err(line_no, "too many fields".into()));
        }
        let row = RatingRow { user_id, movie_id, rating, timestamp };
        row.validate().map_err(|e| parse_err(line_no, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

/// One replayed consumption round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandboxRound {
    /// Dense sandbox user index.
    pub user: UserId,
    /// Dense sandbox movie index if the movie is in the sampled catalog;
    /// `None` marks an outside-option consumption.
    pub movie: Option<ItemId>,
    pub rating: f64,
    pub timestamp: i64,
    /// The original movie id, catalog or not.
    pub raw_movie_id: u64,
}

/// A sampled user/movie universe plus the chronological round sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandbox {
    /// Original ratings-file user ids; the dense [`UserId`] is the index.
    pub user_ids: Vec<u64>,
    /// Original movie ids of the sampled catalog; dense [`ItemId`] = index.
    pub movie_ids: Vec<u64>,
    /// All users' rounds in global (timestamp, movie id, user) order.
    pub rounds: Vec<SandboxRound>,
}

impl Sandbox {
    pub fn outside_round_count(&self) -> usize {
        self.rounds.iter().filter(|r| r.movie.is_none()).count()
    }
}

/// Builds one sandbox (resample index `resample`): samples `config.users`
/// users uniformly among those with enough ratings, samples `config.movies`
/// catalog movies from the sampled users' rated movies weighted by how often
/// they were rated, then replays `ratings_per_user` uniformly sampled
/// ratings per user as chronological consumption rounds. Rounds whose movie
/// is off-catalog become outside consumptions carrying the rating as the
/// observed outside enrichment.
pub fn build_sandbox(rows: &[RatingRow], config: &SandboxConfig, resample: u64) -> Result<Sandbox> {
    config.validate()?;
    let mut rng = substream(config.seed, block::SANDBOX, resample);
    let mut per_user: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, row) in rows.iter().enumerate() {
        per_user.entry(row.user_id).or_default().push(k);
    }
    let eligible: Vec<u64> = per_user
        .iter()
        .filter(|(_, v)| v.len() >= config.ratings_per_user)
        .map(|(&id, _)| id)
        .collect();
    if eligible.len() < config.users {
        return Err(Error::InsufficientData(format!(
            "{} users have >= {} ratings, need {}",
            eligible.len(),
            config.ratings_per_user,
            config.users
        )));
    }
    let mut user_ids: Vec<u64> = rand::seq::index::sample(&mut rng, eligible.len(), config.users)
        .iter()
        .map(|k| eligible[k])
        .collect();
    user_ids.sort_unstable();

    // Per sampled user, draw the replayed rating subset now so the movie
    // sample can't peek at it (movies are sampled from *all* their ratings).
    let mut picked: Vec<Vec<usize>> = Vec::with_capacity(user_ids.len());
    for &uid in &user_ids {
        let theirs = &per_user[&uid];
        let subset: Vec<usize> = rand::seq::index::sample(&mut rng, theirs.len(), config.ratings_per_user)
            .iter()
            .map(|k| theirs[k])
            .collect();
        picked.push(subset);
    }

    // Movie popularity among the sampled users' full histories.
    let mut popularity: BTreeMap<u64, usize> = BTreeMap::new();
    for &uid in &user_ids {
        for &k in &per_user[&uid] {
            *popularity.entry(rows[k].movie_id).or_default() += 1;
        }
    }
    if popularity.len() < config.movies {
        return Err(Error::InsufficientData(format!(
            "sampled users rated {} distinct movies, need {}",
            popularity.len(),
            config.movies
        )));
    }
    let mut movie_ids = sample_weighted_without_replacement(
        &popularity.iter().map(|(&id, &c)| (id, c as f64)).collect::<Vec<_>>(),
        config.movies,
        &mut rng,
    );
    movie_ids.sort_unstable();

    let movie_index: BTreeMap<u64, usize> =
        movie_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut rounds = Vec::with_capacity(user_ids.len() * config.ratings_per_user);
    for (j, subset) in picked.iter().enumerate() {
        for &k in subset {
            let row = &rows[k];
            rounds.push(SandboxRound {
                user: UserId(j as u64),
                movie: movie_index.get(&row.movie_id).map(|&i| ItemId(i as u64)),
                rating: row.rating,
                timestamp: row.timestamp,
                raw_movie_id: row.movie_id,
            });
        }
    }
    rounds.sort_by_key(|r| (r.timestamp, r.raw_movie_id, r.user.0));
    Ok(Sandbox { user_ids, movie_ids, rounds })
}

/// Draws `amount` distinct items, each round with probability proportional
/// to its weight among the not-yet-drawn.
fn sample_weighted_without_replacement(
    weighted: &[(u64, f64)],
    amount: usize,
    rng: &mut impl Rng,
) -> Vec<u64> {
    let mut pool: Vec<(u64, f64)> = weighted.to_vec();
    let mut total: f64 = pool.iter().map(|(_, w)| w).sum();
    let mut out = Vec::with_capacity(amount);
    for _ in 0..amount {
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = pool.len() - 1;
        for (idx, (_, w)) in pool.iter().enumerate() {
            target -= w;
            if target < 0.0 {
                chosen = idx;
                break;
            }
        }
        let (id, w) = pool.swap_remove(chosen);
        total -= w;
        out.push(id);
    }
    out
}

/// Replays the sandbox rounds, generating for each the slate a ratings-based
/// recommender would have shown at that moment — trained only on catalog
/// ratings with strictly earlier timestamps, retrained at geometric
/// checkpoints (each time the training set doubles), with a global
/// mean-rating ranking as the cold-start fallback. The actually consumed
/// movie is injected into its slate when the recommender missed it;
/// off-catalog rounds are logged as outside consumptions with the rating as
/// the observed outside enrichment.
pub fn reconstruct_click_history(sandbox: &Sandbox, config: &SandboxConfig) -> Result<InteractionLog> {
    config.validate()?;
    let m = sandbox.user_ids.len();
    let n = sandbox.movie_ids.len();
    let users: Vec<UserId> = (0..m as u64).map(UserId).collect();
    let items: Vec<ItemId> = (0..n as u64).map(ItemId).collect();
    let mut log = Vec::with_capacity(sandbox.rounds.len());
    let mut consumed: Vec<BTreeSet<ItemId>> = vec![BTreeSet::new(); m];
    // Catalog observations so far, in round order.
    let mut observed: Vec<crate::estimation::RatingObs> = Vec::new();
    let mut model: Option<RatingFactorization> = None;
    let mut trained_at = 0usize;
    let mut checkpoint = 0u64;
    // Running per-movie sums for the fallback ranking.
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];

    for (round_no, round) in sandbox.rounds.iter().enumerate() {
        // Retrain once the training set has doubled (and has any mass).
        if observed.len() >= 8 && observed.len() >= 2 * trained_at {
            let mf_config = MfConfig::new(
                config.latent_dim,
                mix2(derive(config.seed, block::FACTORIZATION), checkpoint),
            );
            model = Some(RatingFactorization::fit(
                &observed,
                users.clone(),
                items.clone(),
                &mf_config,
            )?);
            trained_at = observed.len();
            checkpoint += 1;
        }
        let j = round.user.0 as usize;
        let mut ranked: Vec<(usize, f64)> = (0..n)
            .filter(|i| !consumed[j].contains(&ItemId(*i as u64)))
            .map(|i| {
                let score = match &model {
                    Some(mf) => mf.predict(j, i),
                    None => {
                        if counts[i] > 0 {
                            sums[i] / counts[i] as f64
                        } else if !observed.is_empty() {
                            observed.iter().map(|o| o.rating).sum::<f64>()
                                / observed.len() as f64
                        } else {
                            0.0
                        }
                    }
                };
                (i, score)
            })
            .collect();
        ranked.sort_by(|(i, si), (k, sk)| sk.total_cmp(si).then(i.cmp(k)));
        let mut slate: Vec<ItemId> =
            ranked.iter().take(config.slate_size).map(|(i, _)| ItemId(*i as u64)).collect();

        let record = match round.movie {
            Some(movie) => {
                if !slate.contains(&movie) {
                    if slate.len() == config.slate_size {
                        slate.pop();
                    }
                    slate.push(movie);
                }
                consumed[j].insert(movie);
                observed.push(crate::estimation::RatingObs {
                    user_id: round.user,
                    item_id: movie,
                    rating: round.rating,
                });
                sums[movie.0 as usize] += round.rating;
                counts[movie.0 as usize] += 1;
                InteractionRecord {
                    user_id: round.user,
                    round: round_no as u64,
                    slate,
                    chosen: Choice::Item(movie),
                    rating: Some(round.rating),
                    outside_score: None,
                    outside_enrichment: None,
                }
            }
            None => InteractionRecord {
                user_id: round.user,
                round: round_no as u64,
                slate,
                chosen: Choice::Outside,
                rating: None,
                outside_score: None,
                outside_enrichment: Some(round.rating),
            },
        };
        log.push(record);
    }
    Ok(log)
}

/// The estimated world plus fit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandboxEstimate {
    pub model: EstimatedModel,
    /// Per-user count of outside rounds backing the outside enrichment; a
    /// zero means the population fallback was used for that user.
    pub outside_rounds_per_user: Vec<usize>,
    pub fallback_users: usize,
}

/// Fits the behavioral model to a reconstructed history with the feedback
/// blend frozen at 1 (ratings are pure enrichment), identity rating map, and
/// per-user expected outside enrichment set to the mean rating of that
/// user's outside rounds (population mean when a user has none).
pub fn estimate_world_from_sandbox(
    sandbox: &Sandbox,
    log: &[InteractionRecord],
    config: &SandboxConfig,
    train: &TrainConfig,
    resample: u64,
) -> Result<SandboxEstimate> {
    let m = sandbox.user_ids.len();
    let dataset = Dataset::from_log(log);
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for round in &sandbox.rounds {
        if round.movie.is_none() {
            sums[round.user.0 as usize] += round.rating;
            counts[round.user.0 as usize] += 1;
        }
    }
    let population: f64 = {
        let total: f64 = sums.iter().sum();
        let k: usize = counts.iter().sum();
        if k > 0 {
            total / k as f64
        } else {
            // No outside rounds anywhere: fall back to the overall mean
            // rating so the fit still has a finite anchor.
            let all: f64 = sandbox.rounds.iter().map(|r| r.rating).sum();
            all / sandbox.rounds.len().max(1) as f64
        }
    };
    let mut outside = BTreeMap::new();
    let mut fallback_users = 0;
    for j in 0..m {
        let value = if counts[j] > 0 {
            sums[j] / counts[j] as f64
        } else {
            fallback_users += 1;
            population
        };
        outside.insert(UserId(j as u64), value);
    }
    let mut fit_config = train.clone();
    fit_config.latent_dim = config.latent_dim;
    fit_config.lambda_f = LambdaFMode::Frozen(1.0);
    fit_config.rating_map = RatingMap::Identity;
    fit_config.seed = mix2(derive(config.seed, block::TRAIN), resample);
    let users: Vec<UserId> = (0..m as u64).map(UserId).collect();
    let items: Vec<ItemId> = (0..sandbox.movie_ids.len() as u64).map(ItemId).collect();
    let model = fit_with_universe(&dataset, &fit_config, &outside, users, items)?;
    Ok(SandboxEstimate {
        model,
        outside_rounds_per_user: counts,
        fallback_users,
    })
}

/// Protocol for the ratings-file experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovielensExperimentConfig {
    pub sandbox: SandboxConfig,
    /// Simulated consumption rounds on the estimated world.
    pub rounds: usize,
    /// Slate size during the simulated rounds.
    pub slate_size: usize,
    pub policies: Vec<PolicyKind>,
    /// Template for the sandbox fit (latent dim, blend mode, and seed are
    /// overridden per resample).
    pub train: TrainConfig,
    pub histogram: HistogramSpec,
}

impl MovielensExperimentConfig {
    /// The reference comparison: greedy on the estimated world versus the
    /// ratings-based and click-based recommenders, 50 rounds.
    pub fn new(sandbox: SandboxConfig) -> Self {
        let train = TrainConfig::new(sandbox.latent_dim, 0);
        MovielensExperimentConfig {
            sandbox,
            rounds: 50,
            slate_size: 15,
            policies: vec![
                PolicyKind::GreedyPerfect,
                PolicyKind::RatingsBased,
                PolicyKind::ClickBased,
            ],
            train,
            histogram: HistogramSpec {
                enrichment_range: (0.0, 6.0),
                temptation_range: (-6.0, 12.0),
                bins: (24, 24),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sandbox.validate()?;
        self.train.validate()?;
        self.histogram.validate()?;
        if self.rounds == 0 || self.slate_size == 0 {
            return Err(Error::Config("rounds and slate_size must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("need at least one policy".into()));
        }
        for (k, p) in self.policies.iter().enumerate() {
            if self.policies[..k].contains(p) {
                return Err(Error::Config(format!("policy {p} listed twice")));
            }
            if *p == PolicyKind::GreedyEstimated {
                return Err(Error::Config(
                    "the estimated world is treated as perfect information; use greedy_perfect"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-resample diagnostics of the reconstruction and fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResampleDiagnostics {
    pub resample: u64,
    pub outside_rounds: usize,
    pub fallback_users: usize,
    /// Choice accuracy of the fitted model on the reconstructed history.
    pub history_choice_accuracy: Option<f64>,
}

/// The aggregate result across resamples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovielensReport {
    pub config: MovielensExperimentConfig,
    pub per_policy: Vec<PolicyMetrics>,
    pub diagnostics: Vec<ResampleDiagnostics>,
    pub elapsed_seconds: f64,
}

impl MovielensReport {
    pub fn policy(&self, kind: PolicyKind) -> Option<&PolicyMetrics> {
        self.per_policy.iter().find(|p| p.policy == kind)
    }
}

/// Runs the full pipeline per resample — sandbox, reconstruction, fit,
/// 50 simulated rounds per policy on the estimated world under common
/// outside draws — and aggregates enrichment metrics across resamples.
pub fn run_movielens_experiment(
    rows: &[RatingRow],
    config: &MovielensExperimentConfig,
) -> Result<MovielensReport> {
    config.validate()?;
    let start = Instant::now();
    struct Acc {
        per_rep: Vec<f64>,
        hist: Histogram,
        sum_u: f64,
        sum_v: f64,
        count: u64,
    }
    let mut accs = Vec::with_capacity(config.policies.len());
    for _ in &config.policies {
        accs.push(Acc {
            per_rep: Vec::new(),
            hist: Histogram::new(config.histogram)?,
            sum_u: 0.0,
            sum_v: 0.0,
            count: 0,
        });
    }
    let mut diagnostics = Vec::with_capacity(config.sandbox.resamples);
    for resample in 0..config.sandbox.resamples as u64 {
        let sandbox = build_sandbox(rows, &config.sandbox, resample)?;
        let history = reconstruct_click_history(&sandbox, &config.sandbox)?;
        let estimate =
            estimate_world_from_sandbox(&sandbox, &history, &config.sandbox, &config.train, resample)?;
        let world_seed = mix2(derive(config.sandbox.seed, block::WORLD), resample);
        let meta = WorldMeta {
            source: Some("ratings-file sandbox".into()),
            ..WorldMeta::default()
        };
        let world = estimate.model.to_world(world_seed, meta)?;
        let info = PerfectInfo::new(&world)?;
        let draws = OutsideDraws::new(config.sandbox.seed, resample);
        for (acc, &policy) in accs.iter_mut().zip(&config.policies) {
            let mut fork = world.clone();
            let log = run_policy_rounds(
                &mut fork,
                policy,
                &info,
                config.rounds,
                config.slate_size,
                &RatingMap::Identity,
                &draws,
            )?;
            acc.per_rep.push(overall_individual_enrichment(&log, &fork)?);
            acc.hist.merge(&consumption_frequency(&log, &fork, config.histogram)?)?;
            for rec in &log {
                if let Choice::Item(id) = rec.chosen {
                    let j = fork.user_index(rec.user_id)?;
                    let item = fork.item(id)?;
                    acc.sum_u += crate::model::enrichment(&fork.users[j], item)?;
                    acc.sum_v += crate::model::temptation(&fork.users[j], item)?;
                    acc.count += 1;
                }
            }
        }
        diagnostics.push(ResampleDiagnostics {
            resample,
            outside_rounds: sandbox.outside_round_count(),
            fallback_users: estimate.fallback_users,
            history_choice_accuracy: choice_accuracy(&estimate.model, &history),
        });
    }
    let per_policy = accs
        .into_iter()
        .zip(&config.policies)
        .map(|(acc, &policy)| {
            let n = acc.per_rep.len() as f64;
            let mean = acc.per_rep.iter().sum::<f64>() / n;
            let std = if acc.per_rep.len() < 2 {
                0.0
            } else {
                (acc.per_rep.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
                    .sqrt()
            };
            PolicyMetrics {
                policy,
                enrichment_per_replication: acc.per_rep,
                mean_enrichment: mean,
                std_enrichment: std,
                mean_consumed_enrichment: if acc.count == 0 { 0.0 } else { acc.sum_u / acc.count as f64 },
                mean_consumed_temptation: if acc.count == 0 { 0.0 } else { acc.sum_v / acc.count as f64 },
                on_platform_consumptions: acc.count,
                histogram: acc.hist,
            }
        })
        .collect();
    Ok(MovielensReport {
        config: config.clone(),
        per_policy,
        diagnostics,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Writes a synthetic ratings file in the MovieLens format, drawn from a
/// planted low-rank enrichment model (taste-weighted latent movies, ratings
/// snapped to the half-star grid) with popularity-skewed movie exposure and
/// uniform random timestamps. A deterministic stand-in for offline tests of
/// the ingestion and sandbox pipeline.
pub fn synthesize_ratings_file(
    path: &Path,
    users: usize,
    movies: usize,
    ratings_per_user: (usize, usize),
    seed: u64,
) -> Result<()> {
    if users == 0 || movies == 0 {
        return Err(Error::Config("need at least one user and movie".into()));
    }
    let (lo, hi) = ratings_per_user;
    if lo == 0 || hi < lo || hi > movies {
        return Err(Error::Config(format!(
            "ratings per user range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= movies"
        )));
    }
    let mut rng = substream(seed, block::SANDBOX, u64::MAX);
    let taste = Normal::new(0.0, 0.6).expect("valid");
    let anchor = Normal::new(3.5, 0.7).expect("valid");
    let free = Normal::new(0.0, 0.7).expect("valid");
    let movie_latents: Vec<(f64, f64)> =
        (0..movies).map(|_| (anchor.sample(&mut rng), free.sample(&mut rng))).collect();
    let weights: Vec<(u64, f64)> =
        (0..movies as u64).map(|i| (i, 1.0 / (i as f64 + 10.0))).collect();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "{RATINGS_HEADER}").map_err(io_err)?;
    for j in 0..users {
        let a1 = taste.sample(&mut rng);
        let count = rng.gen_range(lo..=hi);
        let chosen = sample_weighted_without_replacement(&weights, count, &mut rng);
        for movie in chosen {
            let (x0, x1) = movie_latents[movie as usize];
            let enrichment = x0 + a1 * x1 + 0.2 * taste.sample(&mut rng);
            let rating = (enrichment * 2.0).round().clamp(1.0, 10.0) / 2.0;
            let timestamp: i64 = rng.gen_range(1_000_000_000..1_031_536_000);
            // MovieLens ids are 1-based.
            writeln!(out, "{},{},{rating},{timestamp}", j + 1, movie + 1).map_err(io_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn ratings_file_round_trips() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n1,296,5.0,1147880044\n2,33,0.5,99\n",
        );
        let rows = load_ratings(&path).unwrap();
        assert_eq!(
            rows[0],
            RatingRow { user_id: 1, movie_id: 296, rating: 5.0, timestamp: 1147880044 }
        );
        assert_eq!(rows[1].rating, 0.5);
    }

    #[test]
    fn header_only_file_yields_no_rows() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "empty.csv", "userId,movieId,rating,timestamp\n");
        assert!(load_ratings(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_are_rejected_with_line_numbers() {
        let dir = tempdir().unwrap();
        let bad_rating = write_file(
            dir.path(),
            "bad_rating.csv",
            "userId,movieId,rating,timestamp\n1,296,3.7,1147880044\n",
        );
        match load_ratings(&bad_rating) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }

        let bad_header = write_file(dir.path(), "bad_header.csv", "user,movie\n");
        assert!(matches!(load_ratings(&bad_header), Err(Error::Parse { line: 1, .. })));

        let missing_field = write_file(
            dir.path(),
            "missing.csv",
            "userId,movieId,rating,timestamp\n1,296,3.5,111\n7,8\n",
        );
        assert!(matches!(load_ratings(&missing_field), Err(Error::Parse { line: 3, .. })));

        let bad_timestamp = write_file(
            dir.path(),
            "ts.csv",
            "userId,movieId,rating,timestamp\n1,296,3.5,0\n",
        );
        assert!(matches!(load_ratings(&bad_timestamp), Err(Error::Parse { line: 2, .. })));

        assert!(matches!(
            load_ratings(&dir.path().join("nope.csv")),
            Err(Error::Io { .. })
        ));
    }

    /// A deterministic corpus: 8 users, movies 0..12, every user rates
    /// movies (their id + k) % 12 for k in 0..6 at predictable times.
    fn toy_rows() -> Vec<RatingRow> {
        let mut rows = Vec::new();
        for j in 0..8u64 {
            for k in 0..6u64 {
                let movie = (j + k) % 12;
                rows.push(RatingRow {
                    user_id: 100 + j,
                    movie_id: 500 + movie,
                    rating: 0.5 + ((j + movie) % 10) as f64 * 0.5,
                    timestamp: 1_000_000 + (j * 17 + k * 101) as i64,
                });
            }
        }
        rows
    }

    fn toy_config() -> SandboxConfig {
        SandboxConfig {
            users: 5,
            movies: 6,
            ratings_per_user: 4,
            resamples: 2,
            latent_dim: 2,
            slate_size: 3,
            seed: 77,
        }
    }

    #[test]
    fn sandbox_sampling_is_deterministic_and_in_bounds() {
        let rows = toy_rows();
        let config = toy_config();
        let a = build_sandbox(&rows, &config, 0).unwrap();
        let b = build_sandbox(&rows, &config, 0).unwrap();
        assert_eq!(a, b);
        let c = build_sandbox(&rows, &config, 1).unwrap();
        assert!(a != c || a.rounds != c.rounds);
        assert_eq!(a.user_ids.len(), 5);
        assert_eq!(a.movie_ids.len(), 6);
        assert_eq!(a.rounds.len(), 20);
        assert!(a.user_ids.windows(2).all(|w| w[0] < w[1]));
        assert!(a.movie_ids.windows(2).all(|w| w[0] < w[1]));
        assert!(a
            .rounds
            .windows(2)
            .all(|w| (w[0].timestamp, w[0].raw_movie_id) <= (w[1].timestamp, w[1].raw_movie_id)));
    }

    #[test]
    fn sandbox_rejects_undersized_corpora() {
        let rows = toy_rows();
        let mut config = toy_config();
        config.users = 100;
        assert!(matches!(
            build_sandbox(&rows, &config, 0),
            Err(Error::InsufficientData(_))
        ));
        let mut config = toy_config();
        config.movies = 50;
        assert!(matches!(
            build_sandbox(&rows, &config, 0),
            Err(Error::InsufficientData(_))
        ));
        let mut config = toy_config();
        config.ratings_per_user = 7;
        assert!(matches!(
            build_sandbox(&rows, &config, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn reconstruction_respects_chronology_and_injection() {
        let rows = toy_rows();
        let config = toy_config();
        let sandbox = build_sandbox(&rows, &config, 0).unwrap();
        let log = reconstruct_click_history(&sandbox, &config).unwrap();
        assert_eq!(log.len(), sandbox.rounds.len());
        for (rec, round) in log.iter().zip(&sandbox.rounds) {
            assert_eq!(rec.user_id, round.user);
            match round.movie {
                Some(movie) => {
                    assert_eq!(rec.chosen, Choice::Item(movie));
                    assert!(rec.slate.contains(&movie), "consumed movie must be on the slate");
                    assert!(rec.slate.len() <= config.slate_size);
                    assert_eq!(rec.rating, Some(round.rating));
                }
                None => {
                    assert_eq!(rec.chosen, Choice::Outside);
                    assert_eq!(rec.outside_enrichment, Some(round.rating));
                }
            }
            let mut seen = BTreeSet::new();
            assert!(rec.slate.iter().all(|id| seen.insert(*id)), "slates must not repeat items");
        }
        let dataset = Dataset::from_log(&log);
        dataset.validate().unwrap();
    }

    #[test]
    fn reconstruction_never_recommends_consumed_movies() {
        let rows = toy_rows();
        let config = toy_config();
        let sandbox = build_sandbox(&rows, &config, 1).unwrap();
        let log = reconstruct_click_history(&sandbox, &config).unwrap();
        let mut consumed: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
        for rec in &log {
            let seen = consumed.entry(rec.user_id).or_default();
            for id in &rec.slate {
                // The injected consumed movie is by construction unseen too.
                assert!(!seen.contains(id), "user {} re-offered {id}", rec.user_id);
            }
            if let Choice::Item(id) = rec.chosen {
                seen.insert(id);
            }
        }
    }

    #[test]
    fn estimation_freezes_the_blend_and_fills_outside_enrichment() {
        let rows = toy_rows();
        let config = toy_config();
        let sandbox = build_sandbox(&rows, &config, 0).unwrap();
        let log = reconstruct_click_history(&sandbox, &config).unwrap();
        let mut train = TrainConfig::new(config.latent_dim, 0);
        train.epochs = 60;
        train.minibatch_size = 8;
        let estimate = estimate_world_from_sandbox(&sandbox, &log, &config, &train, 0).unwrap();
        let model = &estimate.model;
        assert!(model.lambda_f.iter().all(|&l| l == 1.0));
        assert!(model.sigma > 0.0);
        // Users with outside rounds carry their personal mean; the others
        // the population mean.
        let mut sums = vec![0.0; 5];
        let mut counts = vec![0usize; 5];
        for round in &sandbox.rounds {
            if round.movie.is_none() {
                sums[round.user.0 as usize] += round.rating;
                counts[round.user.0 as usize] += 1;
            }
        }
        for j in 0..5 {
            if counts[j] > 0 {
                assert_relative_eq!(
                    model.outside_enrichment[j],
                    sums[j] / counts[j] as f64,
                    epsilon = 1e-12
                );
            }
        }
        assert_eq!(
            estimate.fallback_users,
            counts.iter().filter(|&&c| c == 0).count()
        );
        // The reified world round-trips into the simulator.
        let world = model.to_world(3, WorldMeta::default()).unwrap();
        assert_eq!(world.users.len(), 5);
        assert_eq!(world.items.len(), 6);
    }

    #[test]
    fn synthetic_corpus_supports_the_full_pipeline() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("synthetic.csv");
        synthesize_ratings_file(&path, 40, 30, (10, 16), 5).unwrap();
        let rows = load_ratings(&path).unwrap();
        assert!(rows.len() >= 400);
        for row in &rows {
            row.validate().unwrap();
        }
        let mut config = SandboxConfig::new(123);
        config.users = 12;
        config.movies = 10;
        config.ratings_per_user = 8;
        config.resamples = 2;
        config.slate_size = 4;
        let mut experiment = MovielensExperimentConfig::new(config);
        experiment.rounds = 6;
        experiment.slate_size = 4;
        experiment.train.epochs = 50;
        experiment.train.minibatch_size = 8;
        let report = run_movielens_experiment(&rows, &experiment).unwrap();
        assert_eq!(report.per_policy.len(), 3);
        assert_eq!(report.diagnostics.len(), 2);
        for metrics in &report.per_policy {
            assert_eq!(metrics.enrichment_per_replication.len(), 2);
            assert!(metrics.mean_enrichment.is_finite());
            assert_eq!(metrics.histogram.total, metrics.on_platform_consumptions);
        }
        let rerun = run_movielens_experiment(&rows, &experiment).unwrap();
        assert_eq!(report.per_policy, rerun.per_policy);
    }

    #[test]
    fn experiment_config_validation_rejects_misuse() {
        let base = MovielensExperimentConfig::new(SandboxConfig::new(1));
        assert!(base.validate().is_ok());
        let mut estimated = base.clone();
        estimated.policies.push(PolicyKind::GreedyEstimated);
        assert!(estimated.validate().is_err());
        let mut no_rounds = base;
        no_rounds.rounds = 0;
        assert!(no_rounds.validate().is_err());
    }
}
