//! Recommendation policies.
//!
//! The locally greedy policy recommends, each round, the available item with
//! the highest *expected conditional enrichment* — the enrichment the user
//! will realize given that they still compare the recommendation against a
//! random outside option — and recommends nothing at all when every item's
//! expectation falls below the outside option's. Remaining slate slots are
//! filled only with items that cannot outscore the lead item at choice time,
//! so padding never changes what gets consumed. Four myopic baselines rank by
//! a single quantity instead: true enrichment, true temptation, predicted
//! rating, or predicted click propensity.
//!
//! Policies see the world only through [`PolicyInfo`], which abstracts over
//! perfect knowledge ([`PerfectInfo`]) and fitted models.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::model::{
    choice_score, enrichment, feedback_score, temptation, ItemId, OutsideWorld, World,
};

/// Standard normal CDF.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// The recommendation policies under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Locally greedy on the true model.
    GreedyPerfect,
    /// Locally greedy on a fitted model.
    GreedyEstimated,
    /// Ranks by enrichment alone (perfect or estimated, per the info source).
    PureEnrichment,
    /// Ranks by temptation alone.
    PureTemptation,
    /// Ranks by predicted rating from a plain rating factorization.
    RatingsBased,
    /// Ranks by predicted choice propensity from a click-trained model.
    ClickBased,
}

impl PolicyKind {
    pub fn is_greedy(self) -> bool {
        matches!(self, PolicyKind::GreedyPerfect | PolicyKind::GreedyEstimated)
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::GreedyPerfect => "greedy_perfect",
            PolicyKind::GreedyEstimated => "greedy_estimated",
            PolicyKind::PureEnrichment => "pure_enrichment",
            PolicyKind::PureTemptation => "pure_temptation",
            PolicyKind::RatingsBased => "ratings_based",
            PolicyKind::ClickBased => "click_based",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A policy's belief about the outside option: its choice score is
/// `Normal(mu, sigma)` and its expected enrichment is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutsideBelief {
    pub mu: f64,
    pub sigma: f64,
    pub expected_enrichment: f64,
}

impl OutsideBelief {
    pub fn new(mu: f64, sigma: f64, expected_enrichment: f64) -> Result<Self> {
        if !mu.is_finite() || !expected_enrichment.is_finite() {
            return Err(Error::Config(format!(
                "outside belief parameters must be finite (mu={mu}, expected={expected_enrichment})"
            )));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Config(format!("outside belief sigma={sigma} must be > 0")));
        }
        Ok(OutsideBelief { mu, sigma, expected_enrichment })
    }
}

/// Expected conditional enrichment under a normal outside-score belief:
/// the item wins with probability `Phi((c_hat - mu) / sigma)` and delivers
/// `u_hat`; otherwise the user takes the outside option.
pub fn expected_enrichment_estimated(u_hat: f64, c_hat: f64, belief: &OutsideBelief) -> f64 {
    let win = standard_normal_cdf((c_hat - belief.mu) / belief.sigma);
    win * u_hat + (1.0 - win) * belief.expected_enrichment
}

/// Exact expected conditional enrichment of an item in a world: the average
/// over outside-option draws of what the user ends up consuming when offered
/// the item.
pub fn expected_enrichment_perfect(world: &World, user_idx: usize, item_idx: usize) -> Result<f64> {
    let user = &world.users[user_idx];
    let item = &world.items[item_idx];
    match &world.outside {
        OutsideWorld::Pool { options, availability } => {
            let u_item = enrichment(user, item)?;
            let c_item = choice_score(user, item)?;
            let mut total = 0.0;
            for (o, w) in options.iter().zip(availability) {
                total += w * if c_item >= choice_score(user, o)? {
                    u_item
                } else {
                    enrichment(user, o)?
                };
            }
            Ok(total)
        }
        OutsideWorld::ScoreNormal { mu, sigma, expected_enrichment } => {
            let belief = OutsideBelief::new(*mu, *sigma, expected_enrichment[user_idx])?;
            Ok(expected_enrichment_estimated(enrichment(user, item)?, choice_score(user, item)?, &belief))
        }
    }
}

/// Everything a policy may ask about a (user, item) pair or about the outside
/// option. Implementations are either ground truth or a fitted model; neither
/// the greedy policy nor the baselines know which they are talking to.
pub trait PolicyInfo {
    fn enrichment(&self, user_idx: usize, item_idx: usize) -> f64;
    fn temptation(&self, user_idx: usize, item_idx: usize) -> f64;
    fn choice_score(&self, user_idx: usize, item_idx: usize) -> f64;
    /// Ranking key of the ratings-trained baseline.
    fn predicted_rating(&self, user_idx: usize, item_idx: usize) -> f64;
    /// Ranking key of the click-trained baseline.
    fn click_score(&self, user_idx: usize, item_idx: usize) -> f64;
    /// Expected enrichment realized by recommending the item (the user may
    /// still prefer the outside option).
    fn expected_conditional_enrichment(&self, user_idx: usize, item_idx: usize) -> f64;
    /// Expected enrichment realized by recommending nothing.
    fn expected_outside_enrichment(&self, user_idx: usize) -> f64;
}

enum OutsideTable {
    /// Per-user outside pool scores/enrichments plus draw weights.
    Pool { scores: Vec<Vec<f64>>, enrich: Vec<Vec<f64>>, weights: Vec<f64> },
    Normal { mu: f64, sigma: f64 },
}

/// Ground-truth [`PolicyInfo`]: precomputed score tables over a world.
/// Profiles never change after construction (only consumed sets do), so the
/// tables stay valid for the world's lifetime.
pub struct PerfectInfo {
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    outside: OutsideTable,
    expected_outside: Vec<f64>,
}

impl PerfectInfo {
    pub fn new(world: &World) -> Result<Self> {
        let (m, n) = (world.users.len(), world.items.len());
        let mut u = vec![vec![0.0; n]; m];
        let mut v = vec![vec![0.0; n]; m];
        let mut c = vec![vec![0.0; n]; m];
        let mut f = vec![vec![0.0; n]; m];
        for (j, user) in world.users.iter().enumerate() {
            for (i, item) in world.items.iter().enumerate() {
                u[j][i] = enrichment(user, item)?;
                v[j][i] = temptation(user, item)?;
                c[j][i] = choice_score(user, item)?;
                f[j][i] = feedback_score(user, item)?;
            }
        }
        let outside = match &world.outside {
            OutsideWorld::Pool { options, availability } => {
                let mut scores = vec![vec![0.0; options.len()]; m];
                let mut enrich = vec![vec![0.0; options.len()]; m];
                for (j, user) in world.users.iter().enumerate() {
                    for (l, o) in options.iter().enumerate() {
                        scores[j][l] = choice_score(user, o)?;
                        enrich[j][l] = enrichment(user, o)?;
                    }
                }
                OutsideTable::Pool { scores, enrich, weights: availability.clone() }
            }
            OutsideWorld::ScoreNormal { mu, sigma, .. } => {
                OutsideTable::Normal { mu: *mu, sigma: *sigma }
            }
        };
        let expected_outside = (0..m)
            .map(|j| world.expected_outside_enrichment(j))
            .collect::<Result<Vec<_>>>()?;
        Ok(PerfectInfo { u, v, c, f, outside, expected_outside })
    }
}

impl PolicyInfo for PerfectInfo {
    fn enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.u[user_idx][item_idx]
    }

    fn temptation(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.v[user_idx][item_idx]
    }

    fn choice_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.c[user_idx][item_idx]
    }

    fn predicted_rating(&self, user_idx: usize, item_idx: usize) -> f64 {
        // With perfect information, the best rating predictor is the feedback
        // score itself (ratings are a monotone map of it).
        self.f[user_idx][item_idx]
    }

    fn click_score(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.c[user_idx][item_idx]
    }

    fn expected_conditional_enrichment(&self, user_idx: usize, item_idx: usize) -> f64 {
        let u_item = self.u[user_idx][item_idx];
        let c_item = self.c[user_idx][item_idx];
        match &self.outside {
            OutsideTable::Pool { scores, enrich, weights } => {
                let (os, oe) = (&scores[user_idx], &enrich[user_idx]);
                let mut total = 0.0;
                for l in 0..weights.len() {
                    total += weights[l] * if c_item >= os[l] { u_item } else { oe[l] };
                }
                total
            }
            OutsideTable::Normal { mu, sigma } => {
                let win = standard_normal_cdf((c_item - mu) / sigma);
                win * u_item + (1.0 - win) * self.expected_outside[user_idx]
            }
        }
    }

    fn expected_outside_enrichment(&self, user_idx: usize) -> f64 {
        self.expected_outside[user_idx]
    }
}

/// Picks the best item index under `key`, ties to the lowest index.
fn argmax_by_key(available: &[usize], key: impl Fn(usize) -> f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &i in available {
        let k = key(i);
        if best.map_or(true, |(bi, bk)| k > bk || (k == bk && i < bi)) {
            best = Some((i, k));
        }
    }
    best
}

/// The locally greedy policy for one user and one round.
///
/// Returns the slate: the available item maximizing expected conditional
/// enrichment first (ties to the lowest item id; at exact equality with the
/// outside option the item is still recommended), padded with up to
/// `slate_size - 1` further items whose choice scores are strictly below the
/// lead item's, in decreasing order of their own expected conditional
/// enrichment. Returns an EMPTY slate — recommend nothing — when no available
/// item matches the outside option's expected enrichment, or when nothing is
/// available.
pub fn greedy_recommend(
    info: &dyn PolicyInfo,
    user_idx: usize,
    available: &[usize],
    slate_size: usize,
) -> Vec<ItemId> {
    if slate_size == 0 {
        return Vec::new();
    }
    let Some((lead, lead_value)) =
        argmax_by_key(available, |i| info.expected_conditional_enrichment(user_idx, i))
    else {
        return Vec::new();
    };
    if lead_value < info.expected_outside_enrichment(user_idx) {
        return Vec::new();
    }
    let lead_choice = info.choice_score(user_idx, lead);
    let mut fillers: Vec<(usize, f64)> = available
        .iter()
        .filter(|&&i| i != lead && info.choice_score(user_idx, i) < lead_choice)
        .map(|&i| (i, info.expected_conditional_enrichment(user_idx, i)))
        .collect();
    fillers.sort_by(|(i, ki), (j, kj)| kj.total_cmp(ki).then(i.cmp(j)));
    let mut slate = vec![ItemId(lead as u64)];
    slate.extend(fillers.iter().take(slate_size - 1).map(|(i, _)| ItemId(*i as u64)));
    slate
}

/// A myopic ranking baseline: the top `slate_size` available items by the
/// policy's single ranking key, ties to the lowest item id.
///
/// Panics if `kind` is one of the greedy policies.
pub fn baseline_recommend(
    kind: PolicyKind,
    info: &dyn PolicyInfo,
    user_idx: usize,
    available: &[usize],
    slate_size: usize,
) -> Vec<ItemId> {
    assert!(!kind.is_greedy(), "{kind} is not a ranking baseline");
    let mut ranked: Vec<(usize, f64)> = available
        .iter()
        .map(|&i| {
            let key = match kind {
                PolicyKind::PureEnrichment => info.enrichment(user_idx, i),
                PolicyKind::PureTemptation => info.temptation(user_idx, i),
                PolicyKind::RatingsBased => info.predicted_rating(user_idx, i),
                PolicyKind::ClickBased => info.click_score(user_idx, i),
                PolicyKind::GreedyPerfect | PolicyKind::GreedyEstimated => unreachable!(),
            };
            (i, key)
        })
        .collect();
    ranked.sort_by(|(i, ki), (j, kj)| kj.total_cmp(ki).then(i.cmp(j)));
    ranked.iter().take(slate_size).map(|(i, _)| ItemId(*i as u64)).collect()
}

/// Dispatches to the greedy policy or a ranking baseline.
pub fn recommend(
    kind: PolicyKind,
    info: &dyn PolicyInfo,
    user_idx: usize,
    available: &[usize],
    slate_size: usize,
) -> Vec<ItemId> {
    if kind.is_greedy() {
        greedy_recommend(info, user_idx, available, slate_size)
    } else {
        baseline_recommend(kind, info, user_idx, available, slate_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        LatentVector, OptionKind, OptionProfile, UserId, UserProfile, WorldMeta,
    };
    use approx::assert_relative_eq;

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(standard_normal_cdf(0.0), 0.5);
        assert_relative_eq!(standard_normal_cdf(1.96), 0.975, epsilon = 1e-4);
        assert_relative_eq!(
            standard_normal_cdf(1.3) + standard_normal_cdf(-1.3),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn estimated_expectation_blends_by_win_probability() {
        let belief = OutsideBelief::new(0.0, 1.0, 0.0).unwrap();
        // One sigma above the outside mean, worthless outside: ~0.8413 * 4.
        let got = expected_enrichment_estimated(4.0, 1.0, &belief);
        assert_relative_eq!(got, 4.0 * standard_normal_cdf(1.0), epsilon = 1e-12);
        assert!((got - 3.3654).abs() < 5e-4);
        // Far below the outside mean the item contributes nothing.
        let got = expected_enrichment_estimated(4.0, -60.0, &belief);
        assert_relative_eq!(got, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn outside_belief_requires_positive_sigma() {
        assert!(OutsideBelief::new(0.0, 0.0, 0.0).is_err());
        assert!(OutsideBelief::new(0.0, -1.0, 0.0).is_err());
        assert!(OutsideBelief::new(f64::NAN, 1.0, 0.0).is_err());
    }

    fn vecf(c: &[f64]) -> LatentVector {
        LatentVector::new(c.to_vec()).unwrap()
    }

    /// One user (lambda_c = 1/2, unit tastes), one item with u=4, C=4, and
    /// two equally likely outside options with (score, enrichment) = (3, 3)
    /// and (5, 6).
    fn two_outside_world() -> World {
        let users = vec![
            UserProfile::new(UserId(0), vecf(&[1.0]), vecf(&[1.0]), 0.5, 0.5).unwrap(),
        ];
        let items = vec![OptionProfile::new(
            0,
            OptionKind::OnPlatformItem,
            vecf(&[4.0]),
            vecf(&[4.0]),
        )
        .unwrap()];
        let outside = OutsideWorld::Pool {
            options: vec![
                OptionProfile::new(0, OptionKind::OutsideOption, vecf(&[3.0]), vecf(&[3.0]))
                    .unwrap(),
                OptionProfile::new(1, OptionKind::OutsideOption, vecf(&[6.0]), vecf(&[4.0]))
                    .unwrap(),
            ],
            availability: vec![0.5, 0.5],
        };
        World::new(0, users, items, outside, WorldMeta::default()).unwrap()
    }

    #[test]
    fn perfect_expectation_averages_over_the_pool() {
        let world = two_outside_world();
        // Beats the (3,3) option (keeps u=4), loses to the (5,6) one: 0.5*4 + 0.5*6.
        assert_relative_eq!(expected_enrichment_perfect(&world, 0, 0).unwrap(), 5.0);
        let info = PerfectInfo::new(&world).unwrap();
        assert_relative_eq!(info.expected_conditional_enrichment(0, 0), 5.0);
        assert_relative_eq!(info.expected_outside_enrichment(0), 4.5);
    }

    /// Table-backed info for exercising the policies directly.
    struct TableInfo {
        u: Vec<f64>,
        v: Vec<f64>,
        c: Vec<f64>,
        expected: Vec<f64>,
        outside: f64,
    }

    impl PolicyInfo for TableInfo {
        fn enrichment(&self, _: usize, i: usize) -> f64 {
            self.u[i]
        }
        fn temptation(&self, _: usize, i: usize) -> f64 {
            self.v[i]
        }
        fn choice_score(&self, _: usize, i: usize) -> f64 {
            self.c[i]
        }
        fn predicted_rating(&self, _: usize, i: usize) -> f64 {
            self.u[i]
        }
        fn click_score(&self, _: usize, i: usize) -> f64 {
            self.c[i]
        }
        fn expected_conditional_enrichment(&self, _: usize, i: usize) -> f64 {
            self.expected[i]
        }
        fn expected_outside_enrichment(&self, _: usize) -> f64 {
            self.outside
        }
    }

    #[test]
    fn greedy_leads_with_the_best_expectation() {
        let info = TableInfo {
            u: vec![0.0; 4],
            v: vec![0.0; 4],
            c: vec![5.0, 9.0, 4.0, 6.0],
            expected: vec![2.0, 7.0, 3.0, 7.0],
            outside: 1.0,
        };
        // Items 1 and 3 tie on expectation; lowest id leads. Item 3 has a
        // lower choice score than the lead, so it may pad the slate; item 0
        // and 2 rank below it by expectation.
        let slate = greedy_recommend(&info, 0, &[0, 1, 2, 3], 3);
        assert_eq!(slate, vec![ItemId(1), ItemId(3), ItemId(2)]);
    }

    #[test]
    fn greedy_padding_never_outscores_the_lead() {
        let info = TableInfo {
            u: vec![0.0; 3],
            v: vec![0.0; 3],
            c: vec![5.0, 5.0, 8.0],
            expected: vec![9.0, 4.0, 4.0],
            outside: 1.0,
        };
        // Item 1 ties the lead's choice score and item 2 exceeds it; neither
        // may pad, so the slate stays short of its 3 slots.
        let slate = greedy_recommend(&info, 0, &[0, 1, 2], 3);
        assert_eq!(slate, vec![ItemId(0)]);
    }

    #[test]
    fn greedy_recommends_nothing_when_outside_wins() {
        let info = TableInfo {
            u: vec![0.0; 2],
            v: vec![0.0; 2],
            c: vec![5.0, 6.0],
            expected: vec![3.0, 2.5],
            outside: 3.5,
        };
        assert!(greedy_recommend(&info, 0, &[0, 1], 2).is_empty());
        // At exact equality the item is still recommended.
        let tie = TableInfo { outside: 3.0, ..info };
        assert_eq!(greedy_recommend(&tie, 0, &[0, 1], 2), vec![ItemId(0)]);
    }

    #[test]
    fn greedy_ignores_unavailable_items() {
        let info = TableInfo {
            u: vec![0.0; 2],
            v: vec![0.0; 2],
            c: vec![9.0, 5.0],
            expected: vec![9.0, 5.0],
            outside: 1.0,
        };
        assert_eq!(greedy_recommend(&info, 0, &[1], 2), vec![ItemId(1)]);
        assert!(greedy_recommend(&info, 0, &[], 2).is_empty());
    }

    #[test]
    fn baselines_rank_by_their_key() {
        let info = TableInfo {
            u: vec![1.0, 2.0, 3.0],
            v: vec![-1.0, -2.0, -3.0],
            c: vec![0.0, 0.0, 0.0],
            expected: vec![0.0; 3],
            outside: 0.0,
        };
        // Temptation is the mirror image of enrichment: rankings reverse.
        let by_u = baseline_recommend(PolicyKind::PureEnrichment, &info, 0, &[0, 1, 2], 2);
        let by_v = baseline_recommend(PolicyKind::PureTemptation, &info, 0, &[0, 1, 2], 2);
        assert_eq!(by_u, vec![ItemId(2), ItemId(1)]);
        assert_eq!(by_v, vec![ItemId(0), ItemId(1)]);
        // All click scores tie: lowest ids win.
        let by_c = baseline_recommend(PolicyKind::ClickBased, &info, 0, &[0, 1, 2], 2);
        assert_eq!(by_c, vec![ItemId(0), ItemId(1)]);
    }

    #[test]
    #[should_panic(expected = "not a ranking baseline")]
    fn baseline_rejects_greedy_kinds() {
        let info = TableInfo {
            u: vec![],
            v: vec![],
            c: vec![],
            expected: vec![],
            outside: 0.0,
        };
        baseline_recommend(PolicyKind::GreedyPerfect, &info, 0, &[], 1);
    }
}
