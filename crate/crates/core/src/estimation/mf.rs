//! Plain ratings-only matrix factorization.
//!
//! This is the classic recommender baseline: predicted rating = global mean
//! plus an inner product of learned user and item factors, trained by
//! per-sample SGD on squared error with L2 shrinkage. It sees nothing but
//! ratings — no slates, no choices — which is exactly the blind spot the
//! richer model is designed to expose.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::RatingObs;
use crate::model::{ItemId, UserId};
use crate::rng::{block, substream};

/// Hyperparameters for [`RatingFactorization::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 shrinkage applied to both factors on every update.
    pub l2: f64,
    /// Standard deviation of the factor initialization.
    pub init_scale: f64,
    /// Stop when the epoch squared-error sum changes by less than
    /// `tol * (1 + |loss|)`.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl MfConfig {
    pub fn new(latent_dim: usize, seed: u64) -> Self {
        MfConfig {
            latent_dim,
            learning_rate: 0.01,
            epochs: 200,
            l2: 0.02,
            init_scale: 0.1,
            convergence_tol: 1e-9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("factorization rank must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be >= 1".into()));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::Config(format!(
                "init scale must be non-negative, got {}",
                self.init_scale
            )));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Config(format!(
                "convergence tolerance must be non-negative, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// A fitted factorization over a fixed, sorted id universe. Users or items
/// without any training ratings keep their (near-zero) initial factors, so
/// their predictions sit at the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingFactorization {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    global_mean: f64,
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

impl RatingFactorization {
    /// Fits factors on the given observations. The universes must be sorted,
    /// unique, and cover every id the observations mention; ids the data
    /// never mentions are fine and stay at their initialization.
    pub fn fit(
        observations: &[RatingObs],
        users: Vec<UserId>,
        items: Vec<ItemId>,
        config: &MfConfig,
    ) -> Result<Self> {
        config.validate()?;
        if observations.is_empty() {
            return Err(Error::InsufficientData("no ratings to factorize".into()));
        }
        if !users.windows(2).all(|w| w[0] < w[1]) || !items.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input(
                "factorization universes must be sorted and unique".into(),
            ));
        }
        let mut triples = Vec::with_capacity(observations.len());
        for obs in observations {
            let j = users.binary_search(&obs.user_id).map_err(|_| {
                Error::Input(format!("rating references user {} outside the universe", obs.user_id))
            })?;
            let i = items.binary_search(&obs.item_id).map_err(|_| {
                Error::Input(format!("rating references item {} outside the universe", obs.item_id))
            })?;
            if !obs.rating.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite rating {} for user {} item {}",
                    obs.rating, obs.user_id, obs.item_id
                )));
            }
            triples.push((j, i, obs.rating));
        }
        let global_mean =
            triples.iter().map(|(_, _, r)| r).sum::<f64>() / triples.len() as f64;

        let d = config.latent_dim;
        let mut rng = substream(config.seed, block::FACTORIZATION, 0);
        let mut draw = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            config.init_scale * z
                        })
                        .collect()
                })
                .collect()
        };
        let mut p = draw(users.len());
        let mut q = draw(items.len());

        let mut order: Vec<usize> = (0..triples.len()).collect();
        let mut prev = f64::INFINITY;
        for epoch in 0..config.epochs {
            let mut rng = substream(config.seed, block::FACTORIZATION, 1 + epoch as u64);
            order.shuffle(&mut rng);
            let mut sse = 0.0;
            for &t in &order {
                let (j, i, r) = triples[t];
                let pred = global_mean
                    + p[j].iter().zip(&q[i]).map(|(pj, qi)| pj * qi).sum::<f64>();
                let e = pred - r;
                sse += e * e;
                for k in 0..d {
                    let pj = p[j][k];
                    let qi = q[i][k];
                    p[j][k] -= config.learning_rate * (e * qi + config.l2 * pj);
                    q[i][k] -= config.learning_rate * (e * pj + config.l2 * qi);
                }
            }
            if !sse.is_finite() {
                return Err(Error::Diverged { epoch, loss: sse });
            }
            if (prev - sse).abs() <= config.convergence_tol * (1.0 + sse) {
                break;
            }
            prev = sse;
        }

        Ok(RatingFactorization { users, items, global_mean, p, q })
    }

    pub fn users(&self) -> &Vec<UserId> {
        &self.users
    }

    pub fn items(&self) -> &Vec<ItemId> {
        &self.items
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Predicted rating by position in the fitted universes.
    pub fn predict(&self, user_idx: usize, item_idx: usize) -> f64 {
        self.global_mean
            + self.p[user_idx]
                .iter()
                .zip(&self.q[item_idx])
                .map(|(pj, qi)| pj * qi)
                .sum::<f64>()
    }

    /// Root mean squared error of the predictions against observations that
    /// fall inside the fitted universes; `None` if none do.
    pub fn rmse(&self, observations: &[RatingObs]) -> Option<f64> {
        let mut sse = 0.0;
        let mut count = 0usize;
        for obs in observations {
            let (Ok(j), Ok(i)) = (
                self.users.binary_search(&obs.user_id),
                self.items.binary_search(&obs.item_id),
            ) else {
                continue;
            };
            let e = self.predict(j, i) - obs.rating;
            sse += e * e;
            count += 1;
        }
        (count > 0).then(|| (sse / count as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted_ratings(seed: u64) -> (Vec<RatingObs>, Vec<UserId>, Vec<ItemId>) {
        // A rank-2 planted structure plus an offset, fully observed.
        let mut rng = substream(seed, block::FACTORIZATION, 77);
        let m = 8;
        let n = 6;
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let pf: Vec<[f64; 2]> = (0..m).map(|_| [z(), z()]).collect();
        let qf: Vec<[f64; 2]> = (0..n).map(|_| [z(), z()]).collect();
        let mut obs = Vec::new();
        for j in 0..m {
            for i in 0..n {
                obs.push(RatingObs {
                    user_id: UserId(j as u64),
                    item_id: ItemId(i as u64),
                    rating: 3.0 + pf[j][0] * qf[i][0] + pf[j][1] * qf[i][1],
                });
            }
        }
        let users = (0..m as u64).map(UserId).collect();
        let items = (0..n as u64).map(ItemId).collect();
        (obs, users, items)
    }

    #[test]
    fn recovers_planted_low_rank_structure() {
        let (obs, users, items) = planted_ratings(1);
        // Rank 3, not 2: subtracting the global mean from a rank-2 matrix
        // generically leaves a rank-3 residual for the factors to absorb.
        let mut config = MfConfig::new(3, 9);
        config.epochs = 5000;
        config.learning_rate = 0.05;
        config.l2 = 1e-5;
        let model = RatingFactorization::fit(&obs, users, items, &config).unwrap();
        let rmse = model.rmse(&obs).unwrap();
        assert!(rmse < 0.05, "train rmse {rmse}");
    }

    #[test]
    fn unrated_items_predict_near_the_global_mean() {
        let (mut obs, users, items) = planted_ratings(2);
        // Strip every rating of the last item; its factors stay initial.
        let cold = ItemId(5);
        obs.retain(|o| o.item_id != cold);
        let mean = obs.iter().map(|o| o.rating).sum::<f64>() / obs.len() as f64;
        let config = MfConfig::new(2, 9);
        let model = RatingFactorization::fit(&obs, users, items, &config).unwrap();
        let cold_idx = model.items().binary_search(&cold).unwrap();
        for j in 0..model.users().len() {
            assert!((model.predict(j, cold_idx) - mean).abs() < 0.1);
        }
        assert!((model.global_mean() - mean).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic_in_the_seed() {
        let (obs, users, items) = planted_ratings(3);
        let config = MfConfig::new(2, 4);
        let m1 = RatingFactorization::fit(&obs, users.clone(), items.clone(), &config).unwrap();
        let m2 = RatingFactorization::fit(&obs, users.clone(), items.clone(), &config).unwrap();
        assert_eq!(m1, m2);
        let mut other = config.clone();
        other.seed = 5;
        let m3 = RatingFactorization::fit(&obs, users, items, &other).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn empty_observations_are_rejected() {
        let config = MfConfig::new(2, 4);
        let err = RatingFactorization::fit(&[], vec![UserId(0)], vec![ItemId(0)], &config);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn observations_outside_the_universe_are_rejected() {
        let config = MfConfig::new(2, 4);
        let obs = vec![RatingObs { user_id: UserId(7), item_id: ItemId(0), rating: 3.0 }];
        let err = RatingFactorization::fit(&obs, vec![UserId(0)], vec![ItemId(0)], &config);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = MfConfig::new(0, 1);
        assert!(config.validate().is_err());
        config = MfConfig::new(2, 1);
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
        config = MfConfig::new(2, 1);
        config.l2 = -1.0;
        assert!(config.validate().is_err());
    }
}
