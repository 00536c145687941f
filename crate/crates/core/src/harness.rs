//! The experiment protocol: a warm-up phase of random slates, a policy phase
//! where each competing recommender drives its own fork of the same
//! post-warm-up world, replication with common random numbers, enrichment
//! metrics and consumption histograms, and an exhaustive policy-tree search
//! that certifies the greedy policy's optimality on tiny instances.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    fit_with_universe, Dataset, EstimatedInfo, EstimatedModel, MfConfig, RatingFactorization,
    TrainConfig,
};
use crate::model::{
    enrichment, step_round, temptation, Choice, InteractionLog, InteractionRecord, ItemId,
    OutsideWorld, RatingMap, UserId, World,
};
use crate::policy::{recommend, standard_normal_cdf, PerfectInfo, PolicyInfo, PolicyKind};
use crate::rng::{block, derive, mix2, substream};
use crate::synth::{make_world, ScenarioConfig};

/// What the policies are allowed to know about the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InfoLevel {
    /// Policies read true scores straight from the world.
    Perfect,
    /// Policies see only models fitted to the warm-up interactions
    /// (except [`PolicyKind::GreedyPerfect`], which stays a true-score
    /// skyline reference in this mode).
    Partial,
}

impl InfoLevel {
    pub fn name(self) -> &'static str {
        match self {
            InfoLevel::Perfect => "perfect",
            InfoLevel::Partial => "partial",
        }
    }
}

/// Binning of the consumption histogram over (enrichment, temptation).
/// Out-of-range values are clamped into the edge bins so the histogram mass
/// always equals the consumption count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub enrichment_range: (f64, f64),
    pub temptation_range: (f64, f64),
    /// (enrichment bins, temptation bins).
    pub bins: (usize, usize),
}

impl Default for HistogramSpec {
    fn default() -> Self {
        // Wide enough for first components drawn around 10 with heavy tails.
        HistogramSpec {
            enrichment_range: (-20.0, 40.0),
            temptation_range: (-20.0, 40.0),
            bins: (30, 30),
        }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("enrichment_range", self.enrichment_range),
            ("temptation_range", self.temptation_range),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!("{name} ({lo}, {hi}) is not a valid interval")));
            }
        }
        if self.bins.0 == 0 || self.bins.1 == 0 {
            return Err(Error::Config("histogram needs at least one bin per axis".into()));
        }
        Ok(())
    }

    fn bin(value: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
        let idx = ((value - lo) / (hi - lo) * bins as f64).floor();
        if idx.is_nan() || idx < 0.0 {
            0
        } else if idx >= bins as f64 {
            bins - 1
        } else {
            idx as usize
        }
    }
}

/// A 2-D consumption-frequency histogram; `counts` is row-major with the
/// enrichment axis outer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(spec: HistogramSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Histogram { spec, counts: vec![0; spec.bins.0 * spec.bins.1], total: 0 })
    }

    pub fn record(&mut self, enrichment: f64, temptation: f64) {
        let ui = HistogramSpec::bin(enrichment, self.spec.enrichment_range, self.spec.bins.0);
        let vi = HistogramSpec::bin(temptation, self.spec.temptation_range, self.spec.bins.1);
        self.counts[ui * self.spec.bins.1 + vi] += 1;
        self.total += 1;
    }

    pub fn count(&self, enrichment_bin: usize, temptation_bin: usize) -> u64 {
        self.counts[enrichment_bin * self.spec.bins.1 + temptation_bin]
    }

    /// Adds another histogram recorded under the identical spec.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Config("cannot merge histograms with different specs".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total += other.total;
        Ok(())
    }

    /// Mean (enrichment, temptation) of recorded consumptions, approximated
    /// by bin centers; (0, 0) when empty.
    pub fn bin_center(&self, enrichment_bin: usize, temptation_bin: usize) -> (f64, f64) {
        let (ulo, uhi) = self.spec.enrichment_range;
        let (vlo, vhi) = self.spec.temptation_range;
        let du = (uhi - ulo) / self.spec.bins.0 as f64;
        let dv = (vhi - vlo) / self.spec.bins.1 as f64;
        (ulo + (enrichment_bin as f64 + 0.5) * du, vlo + (temptation_bin as f64 + 0.5) * dv)
    }
}

/// Full description of one experiment: the world recipe, the two-phase round
/// protocol, the competing policies, the information regime, and the
/// fitting/aggregation settings that depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Redraw recipe for the world; its `seed` field is overridden per
    /// replication.
    pub world: ScenarioConfig,
    pub total_rounds: usize,
    pub warmup_rounds: usize,
    pub policy_rounds: usize,
    pub slate_size: usize,
    pub replications: usize,
    pub policies: Vec<PolicyKind>,
    pub info: InfoLevel,
    /// Master seed; warm-up draws, outside draws, world redraws, and fit
    /// seeds all derive from it.
    pub seed: u64,
    /// Template for Partial-mode fits; its `seed` field is overridden per
    /// replication.
    pub train: TrainConfig,
    pub rating_map: RatingMap,
    pub histogram: HistogramSpec,
}

impl ExperimentConfig {
    /// The reference protocol: 25 warm-up + 50 policy rounds, 15-item
    /// slates, 5 replications, and the default policy set for `info`
    /// (the greedy policy the regime supports plus the four baselines).
    pub fn new(world: ScenarioConfig, info: InfoLevel, seed: u64) -> Self {
        let greedy = match info {
            InfoLevel::Perfect => PolicyKind::GreedyPerfect,
            InfoLevel::Partial => PolicyKind::GreedyEstimated,
        };
        ExperimentConfig {
            world,
            total_rounds: 75,
            warmup_rounds: 25,
            policy_rounds: 50,
            slate_size: 15,
            replications: 5,
            policies: vec![
                greedy,
                PolicyKind::PureEnrichment,
                PolicyKind::PureTemptation,
                PolicyKind::RatingsBased,
                PolicyKind::ClickBased,
            ],
            info,
            seed,
            train: TrainConfig::new(world.dim, 0),
            rating_map: RatingMap::Identity,
            histogram: HistogramSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_rounds + self.policy_rounds != self.total_rounds {
            return Err(Error::Config(format!(
                "rounds must add up: {} warm-up + {} policy != {} total",
                self.warmup_rounds, self.policy_rounds, self.total_rounds
            )));
        }
        if self.policy_rounds == 0 {
            return Err(Error::Config("need at least one policy round".into()));
        }
        if self.slate_size == 0 {
            return Err(Error::Config("slate size must be >= 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("need at least one replication".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("need at least one policy".into()));
        }
        for (k, p) in self.policies.iter().enumerate() {
            if self.policies[..k].contains(p) {
                return Err(Error::Config(format!("policy {p} listed twice")));
            }
        }
        if self.info == InfoLevel::Perfect
            && self.policies.contains(&PolicyKind::GreedyEstimated)
        {
            return Err(Error::Config(
                "greedy_estimated needs the partial information regime".into(),
            ));
        }
        self.world.validate()?;
        self.train.validate()?;
        self.histogram.validate()?;
        Ok(())
    }
}

/// Per-policy aggregates across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy: PolicyKind,
    /// Overall individual enrichment, one entry per replication.
    pub enrichment_per_replication: Vec<f64>,
    pub mean_enrichment: f64,
    /// Sample std across replications; 0 for a single replication.
    pub std_enrichment: f64,
    /// Mean true enrichment per on-platform consumption, pooled over
    /// replications (0 when nothing was consumed).
    pub mean_consumed_enrichment: f64,
    /// Mean true temptation per on-platform consumption, pooled likewise.
    pub mean_consumed_temptation: f64,
    pub on_platform_consumptions: u64,
    /// Consumption-frequency histogram summed over replications.
    pub histogram: Histogram,
}

/// The result of [`replicate`]: one metrics block per configured policy,
/// in configuration order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub per_policy: Vec<PolicyMetrics>,
    pub elapsed_seconds: f64,
}

impl MetricsReport {
    pub fn policy(&self, kind: PolicyKind) -> Option<&PolicyMetrics> {
        self.per_policy.iter().find(|p| p.policy == kind)
    }
}

/// Runs `rounds` rounds of uniformly random slates over each user's
/// non-consumed items, advancing `world.round` once per round. Ratings are
/// emitted for every on-platform consumption.
pub fn run_warmup(
    world: &mut World,
    slate_size: usize,
    rounds: usize,
    rating_map: &RatingMap,
    rng: &mut impl Rng,
) -> Result<InteractionLog> {
    if slate_size == 0 {
        return Err(Error::Config("slate size must be >= 1".into()));
    }
    let mut log = Vec::with_capacity(rounds * world.users.len());
    for _ in 0..rounds {
        for j in 0..world.users.len() {
            let available = world.available_items(j);
            let amount = slate_size.min(available.len());
            let slate: Vec<ItemId> = rand::seq::index::sample(rng, available.len(), amount)
                .iter()
                .map(|k| ItemId(available[k] as u64))
                .collect();
            log.push(step_round(world, UserId(j as u64), &slate, Some(rating_map), rng)?);
        }
        world.round += 1;
    }
    Ok(log)
}

/// Deterministic per-(replication, round, user) randomness for the outside
/// option, shared by every policy in a replication so that policies face
/// identical outside draws (common random numbers).
#[derive(Debug, Clone, Copy)]
pub struct OutsideDraws {
    seed: u64,
    replication: u64,
}

impl OutsideDraws {
    pub fn new(seed: u64, replication: u64) -> Self {
        OutsideDraws { seed, replication }
    }

    fn rng(&self, round: u64, user: u64) -> impl Rng {
        substream(mix2(self.seed, self.replication), block::POLICY_OUTSIDE, mix2(round, user))
    }
}

/// Runs `rounds` policy rounds: each round every user receives the policy's
/// slate over their non-consumed items (possibly empty, in which case the
/// sampled outside option is consumed). Outside randomness comes from
/// `draws`, so runs with different policies but the same `draws` face the
/// same outside options round for round.
pub fn run_policy_rounds(
    world: &mut World,
    policy: PolicyKind,
    info: &dyn PolicyInfo,
    rounds: usize,
    slate_size: usize,
    rating_map: &RatingMap,
    draws: &OutsideDraws,
) -> Result<InteractionLog> {
    let mut log = Vec::with_capacity(rounds * world.users.len());
    for _ in 0..rounds {
        for j in 0..world.users.len() {
            let available = world.available_items(j);
            let slate = recommend(policy, info, j, &available, slate_size);
            let mut rng = draws.rng(world.round, j as u64);
            log.push(step_round(world, UserId(j as u64), &slate, Some(rating_map), &mut rng)?);
        }
        world.round += 1;
    }
    Ok(log)
}

/// Mean over users of the summed true enrichment of everything they consumed
/// in `log` — items by their world profiles, outside options by the enrichment
/// recorded at sampling time. Every user of the world counts in the mean,
/// whether or not the log mentions them.
pub fn overall_individual_enrichment(log: &[InteractionRecord], world: &World) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Input("cannot score an empty interaction log".into()));
    }
    let mut per_user = vec![0.0; world.users.len()];
    for rec in log {
        let j = world.user_index(rec.user_id)?;
        per_user[j] += match rec.chosen {
            Choice::Item(id) => enrichment(&world.users[j], world.item(id)?)?,
            Choice::Outside => rec.outside_enrichment.ok_or_else(|| {
                Error::Input(format!(
                    "round {} of {}: outside consumption without recorded enrichment",
                    rec.round, rec.user_id
                ))
            })?,
        };
    }
    Ok(per_user.iter().sum::<f64>() / per_user.len() as f64)
}

/// Histogram of true (enrichment, temptation) of all on-platform
/// consumptions in `log`; outside rounds contribute nothing.
pub fn consumption_frequency(
    log: &[InteractionRecord],
    world: &World,
    spec: HistogramSpec,
) -> Result<Histogram> {
    let mut hist = Histogram::new(spec)?;
    for rec in log {
        if let Choice::Item(id) = rec.chosen {
            let j = world.user_index(rec.user_id)?;
            let item = world.item(id)?;
            hist.record(enrichment(&world.users[j], item)?, temptation(&world.users[j], item)?);
        }
    }
    Ok(hist)
}

/// Hard limits of the exhaustive search; beyond them the tree is no longer
/// worth enumerating.
pub const ORACLE_MAX_ITEMS: usize = 5;
pub const ORACLE_MAX_OUTSIDE: usize = 3;
pub const ORACLE_MAX_HORIZON: usize = 4;

/// One-user tables for the exhaustive search and the greedy value recursion.
struct OracleContext {
    item_u: Vec<f64>,
    item_c: Vec<f64>,
    /// (probability, choice score, enrichment) per outside outcome, or the
    /// score-distribution form.
    outside: OracleOutside,
    expected_outside: f64,
}

enum OracleOutside {
    Pool(Vec<(f64, f64, f64)>),
    Normal { mu: f64, sigma: f64, enrich: f64 },
}

impl OracleContext {
    fn new(world: &World, horizon: usize) -> Result<Self> {
        if world.users.len() != 1 {
            return Err(Error::TooLarge(format!(
                "exhaustive search covers exactly one user, got {}",
                world.users.len()
            )));
        }
        if world.items.len() > ORACLE_MAX_ITEMS {
            return Err(Error::TooLarge(format!(
                "exhaustive search handles <= {ORACLE_MAX_ITEMS} items, got {}",
                world.items.len()
            )));
        }
        if horizon > ORACLE_MAX_HORIZON {
            return Err(Error::TooLarge(format!(
                "exhaustive search handles horizons <= {ORACLE_MAX_HORIZON}, got {horizon}"
            )));
        }
        let user = &world.users[0];
        let item_u = world
            .items
            .iter()
            .map(|i| enrichment(user, i))
            .collect::<Result<Vec<_>>>()?;
        let item_c = world
            .items
            .iter()
            .map(|i| crate::model::choice_score(user, i))
            .collect::<Result<Vec<_>>>()?;
        let outside = match &world.outside {
            OutsideWorld::Pool { options, availability } => {
                if options.len() > ORACLE_MAX_OUTSIDE {
                    return Err(Error::TooLarge(format!(
                        "exhaustive search handles <= {ORACLE_MAX_OUTSIDE} outside options, got {}",
                        options.len()
                    )));
                }
                let mut outcomes = Vec::with_capacity(options.len());
                for (o, &p) in options.iter().zip(availability) {
                    outcomes.push((
                        p,
                        crate::model::choice_score(user, o)?,
                        enrichment(user, o)?,
                    ));
                }
                OracleOutside::Pool(outcomes)
            }
            OutsideWorld::ScoreNormal { mu, sigma, expected_enrichment } => {
                OracleOutside::Normal { mu: *mu, sigma: *sigma, enrich: expected_enrichment[0] }
            }
        };
        let expected_outside = world.expected_outside_enrichment(0)?;
        Ok(OracleContext { item_u, item_c, outside, expected_outside })
    }

    fn start_mask(&self, world: &World) -> u32 {
        let mut mask = 0u32;
        for i in 0..world.items.len() {
            if !world.consumed[0].contains(&ItemId(i as u64)) {
                mask |= 1 << i;
            }
        }
        mask
    }

    /// Expected value of recommending item `i` (or nothing, `None`) at state
    /// `mask`, given continuation values for the chosen/not-chosen branches.
    fn action_value(
        &self,
        action: Option<usize>,
        value_if_consumed: f64,
        value_if_not: f64,
    ) -> f64 {
        match action {
            None => self.expected_outside + value_if_not,
            Some(i) => {
                let (u_i, c_i) = (self.item_u[i], self.item_c[i]);
                match &self.outside {
                    OracleOutside::Pool(outcomes) => {
                        let mut total = 0.0;
                        for &(p, score, enrich) in outcomes {
                            // Ties go to the recommended item, matching the
                            // choice rule of the simulated world.
                            total += p * if c_i >= score {
                                u_i + value_if_consumed
                            } else {
                                enrich + value_if_not
                            };
                        }
                        total
                    }
                    OracleOutside::Normal { mu, sigma, enrich } => {
                        let win = standard_normal_cdf((c_i - mu) / sigma);
                        win * (u_i + value_if_consumed)
                            + (1.0 - win) * (enrich + value_if_not)
                    }
                }
            }
        }
    }
}

/// Memo table over (availability mask, remaining rounds).
struct ValueTable {
    values: Vec<Option<f64>>,
    horizon: usize,
}

impl ValueTable {
    fn new(items: usize, horizon: usize) -> Self {
        ValueTable { values: vec![None; (1 << items) * (horizon + 1)], horizon }
    }

    fn get(&self, mask: u32, t: usize) -> Option<f64> {
        self.values[mask as usize * (self.horizon + 1) + t]
    }

    fn set(&mut self, mask: u32, t: usize, value: f64) {
        self.values[mask as usize * (self.horizon + 1) + t] = Some(value);
    }
}

/// The exact maximum expected total enrichment over all depth-`horizon`
/// recommendation trees for a single-user world: each node recommends one
/// item or nothing and branches on whether the user consumed it, with the
/// expectation taken over the outside-option draw. Only tiny instances are
/// accepted (see the `ORACLE_MAX_*` limits).
pub fn brute_force_optimal(world: &World, horizon: usize) -> Result<f64> {
    let ctx = OracleContext::new(world, horizon)?;
    let mut memo = ValueTable::new(world.items.len(), horizon);
    fn value(ctx: &OracleContext, memo: &mut ValueTable, mask: u32, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        if let Some(v) = memo.get(mask, t) {
            return v;
        }
        let keep = value(ctx, memo, mask, t - 1);
        let mut best = ctx.action_value(None, f64::NAN, keep);
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let consumed = value(ctx, memo, mask & !(1 << i), t - 1);
            best = best.max(ctx.action_value(Some(i), consumed, keep));
        }
        memo.set(mask, t, best);
        best
    }
    Ok(value(&ctx, &mut memo, ctx.start_mask(world), horizon))
}

/// Exact expected total enrichment of running the greedy policy (via
/// [`recommend`], exactly as the harness would) for `horizon` rounds on a
/// single-user world, under the same size limits as [`brute_force_optimal`].
pub fn greedy_expected_value(world: &World, horizon: usize) -> Result<f64> {
    let ctx = OracleContext::new(world, horizon)?;
    let info = PerfectInfo::new(world)?;
    let mut memo = ValueTable::new(world.items.len(), horizon);
    fn value(
        ctx: &OracleContext,
        info: &PerfectInfo,
        memo: &mut ValueTable,
        mask: u32,
        t: usize,
    ) -> f64 {
        if t == 0 {
            return 0.0;
        }
        if let Some(v) = memo.get(mask, t) {
            return v;
        }
        let available: Vec<usize> = (0..u32::BITS)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| i as usize)
            .collect();
        let slate = recommend(PolicyKind::GreedyPerfect, info, 0, &available, 1);
        let action = slate.first().map(|id| id.0 as usize);
        let keep = value(ctx, info, memo, mask, t - 1);
        let v = match action {
            None => ctx.action_value(None, f64::NAN, keep),
            Some(i) => {
                let consumed = value(ctx, info, memo, mask & !(1 << i), t - 1);
                ctx.action_value(Some(i), consumed, keep)
            }
        };
        memo.set(mask, t, v);
        v
    }
    Ok(value(&ctx, &info, &mut memo, ctx.start_mask(world), horizon))
}

/// Partial-information models fitted from one replication's warm-up log.
struct PartialModels {
    full: EstimatedModel,
    clicks: EstimatedModel,
    ratings: RatingFactorization,
}

fn fit_partial_models(
    config: &ExperimentConfig,
    world: &World,
    warmup: &[InteractionRecord],
    replication: u64,
) -> Result<PartialModels> {
    let dataset = Dataset::from_log(warmup);
    let users: Vec<UserId> = (0..world.users.len() as u64).map(UserId).collect();
    let items: Vec<ItemId> = (0..world.items.len() as u64).map(ItemId).collect();
    let mut outside = BTreeMap::new();
    for j in 0..world.users.len() {
        outside.insert(UserId(j as u64), world.expected_outside_enrichment(j)?);
    }
    let mut train = config.train.clone();
    train.seed = mix2(derive(config.seed, block::TRAIN), 2 * replication);
    let full = fit_with_universe(&dataset, &train, &outside, users.clone(), items.clone())?;
    let mut click_train = train.clone();
    click_train.alpha = 0.0;
    click_train.seed = mix2(derive(config.seed, block::TRAIN), 2 * replication + 1);
    let clicks = fit_with_universe(&dataset, &click_train, &outside, users.clone(), items.clone())?;
    let mf_config = MfConfig::new(
        config.train.latent_dim,
        mix2(derive(config.seed, block::FACTORIZATION), replication),
    );
    let ratings = RatingFactorization::fit(&dataset.ratings, users, items, &mf_config)?;
    Ok(PartialModels { full, clicks, ratings })
}

/// Runs the full protocol: per replication, redraw the world, run one shared
/// warm-up, fit models if the regime is partial, then run every policy on
/// its own fork of the post-warm-up world against common outside draws.
/// Aggregates enrichment means/stds and consumption histograms per policy.
pub fn replicate(config: &ExperimentConfig) -> Result<MetricsReport> {
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
            per_rep: Vec::with_capacity(config.replications),
            hist: Histogram::new(config.histogram)?,
            sum_u: 0.0,
            sum_v: 0.0,
            count: 0,
        });
    }
    for rep in 0..config.replications as u64 {
        let world_seed = mix2(derive(config.seed, block::WORLD), rep);
        let mut base = make_world(&config.world.with_seed(world_seed))?;
        let mut warm_rng = substream(config.seed, block::WARMUP, rep);
        let warmup = run_warmup(
            &mut base,
            config.slate_size,
            config.warmup_rounds,
            &config.rating_map,
            &mut warm_rng,
        )?;
        let perfect = PerfectInfo::new(&base)?;
        let models = match config.info {
            InfoLevel::Perfect => None,
            InfoLevel::Partial => Some(fit_partial_models(config, &base, &warmup, rep)?),
        };
        let estimated = match &models {
            Some(m) => Some(EstimatedInfo::new(&m.full, &m.ratings, &m.clicks)?),
            None => None,
        };
        let draws = OutsideDraws::new(config.seed, rep);
        for (acc, &policy) in accs.iter_mut().zip(&config.policies) {
            let mut fork = base.clone();
            let info: &dyn PolicyInfo = match (&estimated, policy) {
                (Some(est), p) if p != PolicyKind::GreedyPerfect => est,
                _ => &perfect,
            };
            let log = run_policy_rounds(
                &mut fork,
                policy,
                info,
                config.policy_rounds,
                config.slate_size,
                &config.rating_map,
                &draws,
            )?;
            acc.per_rep.push(overall_individual_enrichment(&log, &fork)?);
            acc.hist.merge(&consumption_frequency(&log, &fork, config.histogram)?)?;
            for rec in &log {
                if let Choice::Item(id) = rec.chosen {
                    let j = fork.user_index(rec.user_id)?;
                    let item = fork.item(id)?;
                    acc.sum_u += enrichment(&fork.users[j], item)?;
                    acc.sum_v += temptation(&fork.users[j], item)?;
                    acc.count += 1;
                }
            }
        }
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
                mean_consumed_enrichment: if acc.count == 0 {
                    0.0
                } else {
                    acc.sum_u / acc.count as f64
                },
                mean_consumed_temptation: if acc.count == 0 {
                    0.0
                } else {
                    acc.sum_v / acc.count as f64
                },
                on_platform_consumptions: acc.count,
                histogram: acc.hist,
            }
        })
        .collect();
    Ok(MetricsReport {
        config: config.clone(),
        per_policy,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
