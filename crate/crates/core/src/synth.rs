//! Synthetic world generation.
//!
//! Populations follow a fixed recipe: latent first components carry the
//! "universal" enrichment/temptation of an option and are anti-correlated
//! draws, remaining components are standard normal, and users' blend weights
//! come from Beta distributions concentrated near lambda_c ~ 0.25 and
//! lambda_f ~ 0.75. Three scenarios differ only in the outside options' first
//! component means: *enriching* worlds have on-platform items that are better
//! and less tempting than the outside on average, *tempting* worlds the
//! reverse, and *similar* worlds match them. A heavy-tailed variant replaces
//! the Gaussian item first components with skewed Johnson S_U draws.
//!
//! Every entity is sampled on its own RNG substream keyed by entity index, so
//! generation order (or parallelism) cannot change the population.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    LatentVector, OptionKind, OptionProfile, OutsideWorld, UserId, UserProfile, World, WorldMeta,
};
use crate::rng::{block, substream};

/// Variance of free user taste components.
pub const USER_COMPONENT_VARIANCE: f64 = 2.5;
/// Covariance between matching enrichment/temptation user components.
pub const USER_COMPONENT_COVARIANCE: f64 = -1.0;
/// Item first-component means `(x1, y1)` under Gaussian item draws.
pub const ITEM_FIRST_MEANS: (f64, f64) = (10.0, 0.0);
/// Variance of option first components.
pub const FIRST_COMPONENT_VARIANCE: f64 = 10.0;
/// Covariance between option first components.
pub const FIRST_COMPONENT_COVARIANCE: f64 = -1.0;
/// Beta(alpha, beta) for the choice blend weight.
pub const LAMBDA_C_BETA: (f64, f64) = (12.5, 37.5);
/// Beta(alpha, beta) for the feedback blend weight.
pub const LAMBDA_F_BETA: (f64, f64) = (37.5, 12.5);

/// Outside-option flavor of a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// On-platform items are more enriching, less tempting than outside life.
    Enriching,
    /// On-platform items are more tempting, less enriching than outside life.
    Tempting,
    /// Outside options are distributed like on-platform items.
    Similar,
}

impl Scenario {
    /// Outside-option first-component means `(x1, y1)`.
    pub fn outside_first_means(self) -> (f64, f64) {
        match self {
            Scenario::Enriching => (-5.0, 35.0 / 3.0),
            Scenario::Tempting => (15.0, -10.0),
            Scenario::Similar => (10.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Enriching => "enriching",
            Scenario::Tempting => "tempting",
            Scenario::Similar => "similar",
        }
    }
}

/// Marginal distribution of on-platform item first components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ItemDraws {
    /// Anti-correlated bivariate normal first components.
    Gaussian,
    /// Independent skewed, fat-tailed Johnson S_U first components.
    JohnsonSu,
}

impl ItemDraws {
    pub fn name(self) -> &'static str {
        match self {
            ItemDraws::Gaussian => "gaussian",
            ItemDraws::JohnsonSu => "johnson_su",
        }
    }
}

/// A Johnson S_U distribution: `xi + lambda * sinh((Z - gamma) / delta)` for
/// standard normal `Z`. Parameters are conventionally written in the order
/// `(gamma, delta, xi, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JohnsonSu {
    pub gamma: f64,
    pub delta: f64,
    pub xi: f64,
    pub lambda: f64,
}

impl JohnsonSu {
    pub fn new(gamma: f64, delta: f64, xi: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("delta", delta), ("xi", xi), ("lambda", lambda)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("Johnson S_U {name}={v} must be finite")));
            }
        }
        if delta <= 0.0 || lambda <= 0.0 {
            return Err(Error::Config(format!(
                "Johnson S_U requires delta > 0 and lambda > 0 (got {delta}, {lambda})"
            )));
        }
        Ok(JohnsonSu { gamma, delta, xi, lambda })
    }

    /// Maps a standard normal variate to a Johnson S_U variate.
    pub fn transform(&self, z: f64) -> f64 {
        self.xi + self.lambda * ((z - self.gamma) / self.delta).sinh()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.transform(StandardNormal.sample(rng))
    }

    /// CDF via the defining transform: `Phi(gamma + delta * asinh((x - xi) / lambda))`.
    pub fn cdf(&self, x: f64) -> f64 {
        crate::policy::standard_normal_cdf(self.gamma + self.delta * ((x - self.xi) / self.lambda).asinh())
    }

    /// Closed-form mean `xi - lambda * sqrt(omega) * sinh(gamma / delta)`,
    /// with `omega = exp(delta^-2)`.
    pub fn mean(&self) -> f64 {
        let omega = (self.delta.powi(-2)).exp();
        self.xi - self.lambda * omega.sqrt() * (self.gamma / self.delta).sinh()
    }

    /// Closed-form variance
    /// `lambda^2 / 2 * (omega - 1) * (omega * cosh(2 gamma / delta) + 1)`.
    pub fn variance(&self) -> f64 {
        let omega = (self.delta.powi(-2)).exp();
        self.lambda * self.lambda / 2.0
            * (omega - 1.0)
            * (omega * (2.0 * self.gamma / self.delta).cosh() + 1.0)
    }
}

/// The pinned heavy-tail item distributions for `(x1, y1)`: identical shape,
/// shifted location, sampled independently of each other.
pub fn johnson_item_first_components() -> (JohnsonSu, JohnsonSu) {
    (
        JohnsonSu::new(3.25, 1.0, 12.3520, 0.3933).expect("valid pinned parameters"),
        JohnsonSu::new(3.25, 1.0, 2.3520, 0.3933).expect("valid pinned parameters"),
    )
}

/// A bivariate normal over `(x, y)`, sampled via its Cholesky factor.
#[derive(Debug, Clone, Copy)]
pub struct BivariateNormal {
    mean_x: f64,
    mean_y: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl BivariateNormal {
    pub fn new(mean_x: f64, mean_y: f64, var_x: f64, var_y: f64, cov: f64) -> Result<Self> {
        if var_x <= 0.0 || var_y <= 0.0 {
            return Err(Error::Config(format!(
                "bivariate normal variances must be > 0 (got {var_x}, {var_y})"
            )));
        }
        let l11 = var_x.sqrt();
        let l21 = cov / l11;
        let rest = var_y - l21 * l21;
        if rest < 0.0 {
            return Err(Error::Config(format!(
                "covariance {cov} is infeasible for variances ({var_x}, {var_y})"
            )));
        }
        Ok(BivariateNormal { mean_x, mean_y, l11, l21, l22: rest.sqrt() })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (self.mean_x + self.l11 * z1, self.mean_y + self.l21 * z1 + self.l22 * z2)
    }
}

/// Size, scenario, and seed of a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of users (m).
    pub users: usize,
    /// Number of on-platform items (n).
    pub items: usize,
    /// Number of outside options (K).
    pub outside_options: usize,
    /// Latent dimension (d).
    pub dim: usize,
    pub scenario: Scenario,
    pub item_draws: ItemDraws,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The reference population size: 1000 users, 250 items, 100 outside
    /// options, dimension 3.
    pub fn reference(scenario: Scenario, seed: u64) -> Self {
        ScenarioConfig {
            users: 1000,
            items: 250,
            outside_options: 100,
            dim: 3,
            scenario,
            item_draws: ItemDraws::Gaussian,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("users", self.users),
            ("items", self.items),
            ("outside_options", self.outside_options),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn user_component_distribution() -> BivariateNormal {
    BivariateNormal::new(0.0, 0.0, USER_COMPONENT_VARIANCE, USER_COMPONENT_VARIANCE, USER_COMPONENT_COVARIANCE)
        .expect("valid pinned parameters")
}

fn first_component_distribution(means: (f64, f64)) -> BivariateNormal {
    BivariateNormal::new(means.0, means.1, FIRST_COMPONENT_VARIANCE, FIRST_COMPONENT_VARIANCE, FIRST_COMPONENT_COVARIANCE)
        .expect("valid pinned parameters")
}

/// Draws the user population: anchored first components, anti-correlated
/// normal free components, and Beta-distributed blend weights redrawn
/// *jointly* until `lambda_c <= lambda_f`.
pub fn sample_users(config: &ScenarioConfig) -> Result<Vec<UserProfile>> {
    config.validate()?;
    let component = user_component_distribution();
    let beta_c = Beta::new(LAMBDA_C_BETA.0, LAMBDA_C_BETA.1)
        .map_err(|e| Error::Config(format!("lambda_c Beta: {e}")))?;
    let beta_f = Beta::new(LAMBDA_F_BETA.0, LAMBDA_F_BETA.1)
        .map_err(|e| Error::Config(format!("lambda_f Beta: {e}")))?;

    let mut users = Vec::with_capacity(config.users);
    for j in 0..config.users {
        let mut rng = substream(config.seed, block::USERS, j as u64);
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        for _ in 1..config.dim {
            let (al, bl) = component.sample(&mut rng);
            a.push(al);
            b.push(bl);
        }
        let (lambda_c, lambda_f) = loop {
            let c = beta_c.sample(&mut rng);
            let f = beta_f.sample(&mut rng);
            if c <= f {
                break (c, f);
            }
        };
        users.push(UserProfile::new(
            UserId(j as u64),
            LatentVector::new(a)?,
            LatentVector::new(b)?,
            lambda_c,
            lambda_f,
        )?);
    }
    Ok(users)
}

fn sample_option<R: Rng>(
    option_id: u64,
    kind: OptionKind,
    dim: usize,
    first: (f64, f64),
    rng: &mut R,
) -> Result<OptionProfile> {
    let mut x = vec![first.0];
    let mut y = vec![first.1];
    for _ in 1..dim {
        let xl: f64 = StandardNormal.sample(rng);
        let yl: f64 = StandardNormal.sample(rng);
        x.push(xl);
        y.push(yl);
    }
    OptionProfile::new(option_id, kind, LatentVector::new(x)?, LatentVector::new(y)?)
}

/// Draws the on-platform catalog, honoring the configured first-component
/// marginal (Gaussian or Johnson S_U).
pub fn sample_items(config: &ScenarioConfig) -> Result<Vec<OptionProfile>> {
    config.validate()?;
    let gaussian = first_component_distribution(ITEM_FIRST_MEANS);
    let (jx, jy) = johnson_item_first_components();
    let mut items = Vec::with_capacity(config.items);
    for i in 0..config.items {
        let mut rng = substream(config.seed, block::ITEMS, i as u64);
        let first = match config.item_draws {
            ItemDraws::Gaussian => gaussian.sample(&mut rng),
            ItemDraws::JohnsonSu => (jx.sample(&mut rng), jy.sample(&mut rng)),
        };
        items.push(sample_option(i as u64, OptionKind::OnPlatformItem, config.dim, first, &mut rng)?);
    }
    Ok(items)
}

/// Draws the outside-option pool; first-component means come from the
/// scenario, and the marginal stays Gaussian even under Johnson item draws.
pub fn sample_outside_options(config: &ScenarioConfig) -> Result<Vec<OptionProfile>> {
    config.validate()?;
    let dist = first_component_distribution(config.scenario.outside_first_means());
    let mut options = Vec::with_capacity(config.outside_options);
    for k in 0..config.outside_options {
        let mut rng = substream(config.seed, block::OUTSIDE, k as u64);
        let first = dist.sample(&mut rng);
        options.push(sample_option(k as u64, OptionKind::OutsideOption, config.dim, first, &mut rng)?);
    }
    Ok(options)
}

/// Builds a complete fresh world: sampled users, items, outside pool with
/// uniform availability, nothing consumed, round 0. The configuration is
/// echoed into the world's metadata.
pub fn make_world(config: &ScenarioConfig) -> Result<World> {
    config.validate()?;
    let users = sample_users(config)?;
    let items = sample_items(config)?;
    let options = sample_outside_options(config)?;
    let availability = vec![1.0 / config.outside_options as f64; config.outside_options];
    let meta = WorldMeta {
        scenario: Some(config.scenario.name().to_string()),
        item_draws: Some(config.item_draws.name().to_string()),
        source: None,
        generator: Some(serde_json::to_value(config)?),
    };
    World::new(config.seed, users, items, OutsideWorld::Pool { options, availability }, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::standard_normal_cdf;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn config(scenario: Scenario, users: usize, items: usize) -> ScenarioConfig {
        ScenarioConfig {
            users,
            items,
            outside_options: 50,
            dim: 3,
            scenario,
            item_draws: ItemDraws::Gaussian,
            seed: 20240817,
        }
    }

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    }

    fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
        let (mx, my) = (mean(xs), mean(ys));
        xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64
    }

    /// Integrates `f(z) * phi(z)` over z in [-12, 12] by composite Simpson.
    /// Dense enough that truncation and discretization are < 1e-10 for the
    /// smooth integrands used here.
    fn gaussian_quadrature(f: impl Fn(f64) -> f64) -> f64 {
        let (a, b, n) = (-12.0_f64, 12.0_f64, 9600usize);
        let h = (b - a) / n as f64;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let g = |z: f64| f(z) * phi(z);
        let mut total = g(a) + g(b);
        for i in 1..n {
            let z = a + i as f64 * h;
            total += if i % 2 == 1 { 4.0 * g(z) } else { 2.0 * g(z) };
        }
        total * h / 3.0
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let cfg = config(Scenario::Enriching, 40, 30);
        let w1 = make_world(&cfg).unwrap();
        let w2 = make_world(&cfg).unwrap();
        assert_eq!(w1, w2);
        // Entity substreams: a smaller run is a prefix of a larger one.
        let few = sample_users(&config(Scenario::Enriching, 10, 30)).unwrap();
        let many = sample_users(&config(Scenario::Enriching, 40, 30)).unwrap();
        assert_eq!(few.as_slice(), &many[..10]);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = config(Scenario::Enriching, 10, 10);
        let w1 = make_world(&cfg).unwrap();
        let w2 = make_world(&cfg.with_seed(1)).unwrap();
        assert_ne!(w1, w2);
    }

    #[test]
    fn user_moments_match_the_recipe() {
        let users = sample_users(&config(Scenario::Similar, 10_000, 1)).unwrap();
        let a2: Vec<f64> = users.iter().map(|u| u.a.components()[1]).collect();
        let b2: Vec<f64> = users.iter().map(|u| u.b.components()[1]).collect();
        let n = users.len() as f64;
        assert!(users.iter().all(|u| u.a.components()[0] == 1.0 && u.b.components()[0] == 1.0));
        // Tolerances are 5 standard errors of each estimator.
        let se_mean = (USER_COMPONENT_VARIANCE / n).sqrt();
        assert!(mean(&a2).abs() < 5.0 * se_mean, "mean(a2) = {}", mean(&a2));
        assert!(mean(&b2).abs() < 5.0 * se_mean, "mean(b2) = {}", mean(&b2));
        let se_var = USER_COMPONENT_VARIANCE * (2.0 / n).sqrt();
        assert!((variance(&a2) - USER_COMPONENT_VARIANCE).abs() < 5.0 * se_var);
        let se_cov = ((USER_COMPONENT_VARIANCE * USER_COMPONENT_VARIANCE
            + USER_COMPONENT_COVARIANCE * USER_COMPONENT_COVARIANCE)
            / n)
            .sqrt();
        assert!((covariance(&a2, &b2) - USER_COMPONENT_COVARIANCE).abs() < 5.0 * se_cov);
    }

    #[test]
    fn lambda_weights_match_the_recipe() {
        let users = sample_users(&config(Scenario::Similar, 10_000, 1)).unwrap();
        assert!(users.iter().all(|u| u.lambda_c <= u.lambda_f));
        let lc: Vec<f64> = users.iter().map(|u| u.lambda_c).collect();
        let lf: Vec<f64> = users.iter().map(|u| u.lambda_f).collect();
        // Beta(12.5, 37.5): mean 0.25, sd ~0.0606; the joint-resample
        // truncation is negligible (P(lambda_c > lambda_f) ~ 3e-9).
        let se = 0.0606 / (users.len() as f64).sqrt();
        assert!((mean(&lc) - 0.25).abs() < 5.0 * se, "mean lambda_c = {}", mean(&lc));
        assert!((mean(&lf) - 0.75).abs() < 5.0 * se, "mean lambda_f = {}", mean(&lf));
        // Empirical mode of lambda_c: Beta(12.5, 37.5) peaks at
        // (a-1)/(a+b-2) = 11.5/48 ~ 0.2396.
        let mut bins = [0usize; 200];
        for &l in &lc {
            bins[((l * 200.0) as usize).min(199)] += 1;
        }
        let peak = bins.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
        let mode = (peak as f64 + 0.5) / 200.0;
        assert!((mode - 11.5 / 48.0).abs() < 0.02, "empirical mode {mode}");
    }

    #[test]
    fn item_moments_match_the_recipe() {
        let items = sample_items(&config(Scenario::Similar, 1, 10_000)).unwrap();
        let x1: Vec<f64> = items.iter().map(|i| i.x.components()[0]).collect();
        let y1: Vec<f64> = items.iter().map(|i| i.y.components()[0]).collect();
        let x2: Vec<f64> = items.iter().map(|i| i.x.components()[1]).collect();
        let n = items.len() as f64;
        let se_mean = (FIRST_COMPONENT_VARIANCE / n).sqrt();
        assert!((mean(&x1) - ITEM_FIRST_MEANS.0).abs() < 5.0 * se_mean);
        assert!((mean(&y1) - ITEM_FIRST_MEANS.1).abs() < 5.0 * se_mean);
        let se_var = FIRST_COMPONENT_VARIANCE * (2.0 / n).sqrt();
        assert!((variance(&x1) - FIRST_COMPONENT_VARIANCE).abs() < 5.0 * se_var);
        let se_cov = ((FIRST_COMPONENT_VARIANCE * FIRST_COMPONENT_VARIANCE + 1.0) / n).sqrt();
        assert!((covariance(&x1, &y1) - FIRST_COMPONENT_COVARIANCE).abs() < 5.0 * se_cov);
        assert!(mean(&x2).abs() < 5.0 * (1.0 / n).sqrt());
        assert!((variance(&x2) - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn outside_means_depend_on_scenario() {
        for (scenario, want) in [
            (Scenario::Enriching, (-5.0, 35.0 / 3.0)),
            (Scenario::Tempting, (15.0, -10.0)),
            (Scenario::Similar, (10.0, 0.0)),
        ] {
            let mut cfg = config(scenario, 1, 1);
            cfg.outside_options = 10_000;
            let options = sample_outside_options(&cfg).unwrap();
            let x1: Vec<f64> = options.iter().map(|o| o.x.components()[0]).collect();
            let y1: Vec<f64> = options.iter().map(|o| o.y.components()[0]).collect();
            let tol = 5.0 * (FIRST_COMPONENT_VARIANCE / 10_000.0).sqrt();
            assert!((mean(&x1) - want.0).abs() < tol, "{scenario:?} x1 mean {}", mean(&x1));
            assert!((mean(&y1) - want.1).abs() < tol, "{scenario:?} y1 mean {}", mean(&y1));
        }
    }

    #[test]
    fn johnson_closed_forms_match_quadrature() {
        let (jx, jy) = johnson_item_first_components();
        for j in [jx, jy] {
            let mean_quad = gaussian_quadrature(|z| j.transform(z));
            let var_quad = gaussian_quadrature(|z| {
                let d = j.transform(z) - mean_quad;
                d * d
            });
            assert_relative_eq!(j.mean(), mean_quad, max_relative = 1e-10);
            assert_relative_eq!(j.variance(), var_quad, max_relative = 1e-10);
        }
        // Location shift is the only difference between the two marginals.
        assert_relative_eq!(jx.mean() - jy.mean(), 10.0, max_relative = 1e-12);
        // The configured distribution is left-skewed and heavy-tailed
        // relative to the Gaussian it replaces (variance 10).
        let mean_x = jx.mean();
        let skew_num = gaussian_quadrature(|z| (jx.transform(z) - mean_x).powi(3));
        assert!(skew_num < 0.0, "third central moment {skew_num} not negative");
        assert!(jx.variance() > 100.0, "variance {} unexpectedly small", jx.variance());
    }

    #[test]
    fn johnson_samples_match_their_distribution() {
        // Kolmogorov-Smirnov test of n draws against the exact CDF, at the
        // 1% level (critical value 1.628 / sqrt(n)); plus moment checks with
        // kurtosis-aware standard errors from quadrature.
        let (jx, _) = johnson_item_first_components();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 2000usize;
        let mut ps: Vec<f64> = (0..n).map(|_| jx.cdf(jx.sample(&mut rng))).collect();
        ps.sort_by(f64::total_cmp);
        let mut d_stat = 0.0_f64;
        for (i, p) in ps.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d_stat = d_stat.max((p - lo).abs()).max((hi - p).abs());
        }
        assert!(d_stat < 1.628 / (n as f64).sqrt(), "KS statistic {d_stat}");

        let samples: Vec<f64> = (0..20_000).map(|_| jx.sample(&mut rng)).collect();
        let m = samples.len() as f64;
        let se_mean = (jx.variance() / m).sqrt();
        assert!((mean(&samples) - jx.mean()).abs() < 5.0 * se_mean);
        let mu = jx.mean();
        let mu4 = gaussian_quadrature(|z| (jx.transform(z) - mu).powi(4));
        let se_var = ((mu4 - jx.variance() * jx.variance()) / m).sqrt();
        assert!((variance(&samples) - jx.variance()).abs() < 5.0 * se_var);
    }

    #[test]
    fn johnson_cdf_is_the_probability_transform() {
        let (_, jy) = johnson_item_first_components();
        // The transform is monotone in z, so cdf(transform(z)) == Phi(z):
        // the median is transform(0), and quantiles track the normal's.
        assert_relative_eq!(jy.cdf(jy.transform(0.0)), 0.5, epsilon = 1e-12);
        assert_relative_eq!(jy.cdf(jy.transform(1.3)), standard_normal_cdf(1.3), epsilon = 1e-12);
        assert_relative_eq!(jy.cdf(jy.transform(-2.1)), standard_normal_cdf(-2.1), epsilon = 1e-12);
    }

    #[test]
    fn johnson_item_worlds_use_the_pinned_marginals() {
        let mut cfg = config(Scenario::Tempting, 1, 20_000);
        cfg.item_draws = ItemDraws::JohnsonSu;
        let items = sample_items(&cfg).unwrap();
        let (jx, jy) = johnson_item_first_components();
        let x1: Vec<f64> = items.iter().map(|i| i.x.components()[0]).collect();
        let y1: Vec<f64> = items.iter().map(|i| i.y.components()[0]).collect();
        let n = items.len() as f64;
        assert!((mean(&x1) - jx.mean()).abs() < 5.0 * (jx.variance() / n).sqrt());
        assert!((mean(&y1) - jy.mean()).abs() < 5.0 * (jy.variance() / n).sqrt());
        // Independent draws: correlation near zero, unlike the Gaussian recipe.
        let corr = covariance(&x1, &y1) / (variance(&x1) * variance(&y1)).sqrt();
        assert!(corr.abs() < 0.05, "johnson first components correlate: {corr}");
    }

    #[test]
    fn make_world_assembles_a_valid_uniform_availability_world() {
        let cfg = config(Scenario::Enriching, 12, 17);
        let world = make_world(&cfg).unwrap();
        assert_eq!(world.users.len(), 12);
        assert_eq!(world.items.len(), 17);
        match &world.outside {
            OutsideWorld::Pool { options, availability } => {
                assert_eq!(options.len(), cfg.outside_options);
                assert!(availability.iter().all(|p| (p - 1.0 / 50.0).abs() < 1e-15));
            }
            other => panic!("expected a pool, got {other:?}"),
        }
        assert_eq!(world.meta.scenario.as_deref(), Some("enriching"));
        let echoed: ScenarioConfig =
            serde_json::from_value(world.meta.generator.clone().unwrap()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn bivariate_normal_rejects_infeasible_covariance() {
        assert!(BivariateNormal::new(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
        assert!(BivariateNormal::new(0.0, 0.0, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn johnson_rejects_nonpositive_shape() {
        assert!(JohnsonSu::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(JohnsonSu::new(0.0, 1.0, 0.0, -1.0).is_err());
    }
}
