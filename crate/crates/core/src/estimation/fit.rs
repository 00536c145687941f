//! The minibatch SGD engine behind [`fit`].
//!
//! Parameters live in one flat vector. Per user: the free (non-anchor) taste
//! components of `a` and `b`, then `theta_f` and `theta_c`; per item: all of
//! `x` then `y`; finally the outside location `mu`. Blend weights are
//! reparameterized as `lambda_f = sigmoid(theta_f)` (unless frozen) and
//! `lambda_c = lambda_f * sigmoid(theta_c)`, so `0 <= lambda_c <= lambda_f
//! <= 1` holds after every step by construction. Minibatches mix two atom
//! kinds — one rating observation, or one round's full ranking term — each
//! weighted by its loss's share (`alpha` / `1 - alpha`).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimation::{
    Dataset, EstimatedModel, HingeSmoothing, LambdaFMode, TrainConfig,
};
use crate::model::{Choice, ItemId, LatentVector, UserId};
use crate::rng::{block, substream};

/// `ln 3`: initializes `lambda_f` at 0.75.
const THETA_F_INIT: f64 = 1.0986122886681098;
/// `-ln 2`: initializes `lambda_c` at `lambda_f / 3`, i.e. 0.25.
const THETA_C_INIT: f64 = -0.6931471805599453;
/// Initial (and fallback) outside-score spread.
const SIGMA_INIT: f64 = 1.0;
/// Positivity floor for the post-hoc sigma fit.
const SIGMA_FLOOR: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `tau * ln(1 + exp(z / tau))`, computed without overflow.
fn softplus(z: f64, tau: f64) -> f64 {
    let t = z / tau;
    if t > 34.0 {
        z
    } else {
        tau * t.exp().ln_1p()
    }
}

/// Derivative of the configured hinge surrogate.
fn hinge_slope(z: f64, smoothing: HingeSmoothing) -> f64 {
    match smoothing {
        HingeSmoothing::Exact => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        HingeSmoothing::Softplus { tau } => sigmoid(z / tau),
    }
}

fn hinge_value(z: f64, smoothing: HingeSmoothing) -> f64 {
    match smoothing {
        HingeSmoothing::Exact => z.max(0.0),
        HingeSmoothing::Softplus { tau } => softplus(z, tau),
    }
}

struct RatingAtom {
    user: usize,
    item: usize,
    rating: f64,
}

struct RoundAtom {
    user: usize,
    slate: Vec<usize>,
    /// Position *within the slate* of the chosen item; `None` means the
    /// outside option was chosen.
    chosen: Option<usize>,
}

#[derive(Clone, Copy)]
enum Atom {
    Rating(usize),
    Round(usize),
}

/// Everything a (user, item) pair contributes to either loss.
struct PairEval {
    u: f64,
    v: f64,
    c: f64,
    lambda_f: f64,
    lambda_c: f64,
    s_c: f64,
    s_f: f64,
}

/// The optimization state: resolved atoms, the flat parameter vector, and the
/// index arithmetic over it. Public so that gradient checks and tests can
/// evaluate losses and gradients at arbitrary points.
pub struct FitState<'a> {
    config: &'a TrainConfig,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    outside_enrichment: Vec<f64>,
    rating_atoms: Vec<RatingAtom>,
    round_atoms: Vec<RoundAtom>,
    params: Vec<f64>,
    dim: usize,
}

impl<'a> FitState<'a> {
    /// Resolves the dataset against an explicit id universe and initializes
    /// parameters: free latents `~ Normal(0, init_scale^2)`, blend angles at
    /// their 0.75/0.25 defaults, and `mu` at the mean top-of-slate estimated
    /// score over outside-chosen rounds.
    pub fn new(
        dataset: &Dataset,
        config: &'a TrainConfig,
        outside_enrichment: &BTreeMap<UserId, f64>,
        users: Vec<UserId>,
        items: Vec<ItemId>,
    ) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        if dataset.interactions.is_empty() {
            return Err(Error::InsufficientData("no interactions to fit".into()));
        }
        if !users.windows(2).all(|w| w[0] < w[1]) || !items.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input("fit universes must be sorted and unique".into()));
        }

        let user_index = |id: UserId| -> Result<usize> {
            users
                .binary_search(&id)
                .map_err(|_| Error::Input(format!("record references user {id} outside the universe")))
        };
        let item_index = |id: ItemId| -> Result<usize> {
            items
                .binary_search(&id)
                .map_err(|_| Error::Input(format!("record references item {id} outside the universe")))
        };

        let mut interacted = vec![false; users.len()];
        let mut round_atoms = Vec::with_capacity(dataset.interactions.len());
        for rec in &dataset.interactions {
            let user = user_index(rec.user_id)?;
            interacted[user] = true;
            let slate = rec.slate.iter().map(|id| item_index(*id)).collect::<Result<Vec<_>>>()?;
            let chosen = match rec.chosen {
                Choice::Item(id) => {
                    Some(rec.slate.iter().position(|s| *s == id).expect("validated above"))
                }
                Choice::Outside => None,
            };
            round_atoms.push(RoundAtom { user, slate, chosen });
        }
        if let Some(j) = interacted.iter().position(|seen| !seen) {
            return Err(Error::InsufficientData(format!(
                "user {} has no interactions",
                users[j]
            )));
        }
        let rating_atoms = dataset
            .ratings
            .iter()
            .map(|obs| {
                Ok(RatingAtom {
                    user: user_index(obs.user_id)?,
                    item: item_index(obs.item_id)?,
                    rating: obs.rating,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let aligned_outside = users
            .iter()
            .map(|id| {
                outside_enrichment.get(id).copied().ok_or_else(|| {
                    Error::Input(format!("no expected outside enrichment supplied for user {id}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let dim = config.latent_dim;
        let mut state = FitState {
            config,
            users,
            items,
            outside_enrichment: aligned_outside,
            rating_atoms,
            round_atoms,
            params: Vec::new(),
            dim,
        };
        state.params = state.initial_params();
        let mu = state.initial_mu();
        let mu_ix = state.mu_index();
        state.params[mu_ix] = mu;
        Ok(state)
    }

    // --- parameter layout -------------------------------------------------

    fn user_base(&self, j: usize) -> usize {
        j * 2 * self.dim
    }

    fn item_base(&self, i: usize) -> usize {
        (self.users.len() + i) * 2 * self.dim
    }

    fn mu_index(&self) -> usize {
        (self.users.len() + self.items.len()) * 2 * self.dim
    }

    pub fn param_count(&self) -> usize {
        self.mu_index() + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len(), "parameter vector length changed");
        self.params.copy_from_slice(params);
    }

    fn initial_params(&self) -> Vec<f64> {
        let mut rng = substream(self.config.seed, block::TRAIN, 0);
        let mut params = vec![0.0; self.param_count()];
        let scale = self.config.init_scale;
        for j in 0..self.users.len() {
            let base = self.user_base(j);
            for k in 0..2 * (self.dim - 1) {
                let z: f64 = StandardNormal.sample(&mut rng);
                params[base + k] = scale * z;
            }
            params[base + 2 * (self.dim - 1)] = THETA_F_INIT;
            params[base + 2 * (self.dim - 1) + 1] = THETA_C_INIT;
        }
        for i in 0..self.items.len() {
            let base = self.item_base(i);
            for k in 0..2 * self.dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                params[base + k] = scale * z;
            }
        }
        params
    }

    /// Mean top-of-slate estimated choice score over outside-chosen rounds
    /// (falling back to all rounds, then to 0 for all-empty slates).
    fn initial_mu(&self) -> f64 {
        let tops = |outside_only: bool| -> Vec<f64> {
            self.round_atoms
                .iter()
                .filter(|atom| !outside_only || atom.chosen.is_none())
                .filter_map(|atom| {
                    atom.slate
                        .iter()
                        .map(|&i| self.eval_pair(atom.user, i).c)
                        .max_by(f64::total_cmp)
                })
                .collect()
        };
        let mut tops_outside = tops(true);
        if tops_outside.is_empty() {
            tops_outside = tops(false);
        }
        if tops_outside.is_empty() {
            return 0.0;
        }
        tops_outside.iter().sum::<f64>() / tops_outside.len() as f64
    }

    // --- evaluation -------------------------------------------------------

    fn lambda_f(&self, j: usize) -> (f64, f64) {
        match self.config.lambda_f {
            LambdaFMode::Learn => {
                let s = sigmoid(self.params[self.user_base(j) + 2 * (self.dim - 1)]);
                (s, s)
            }
            LambdaFMode::Frozen(v) => (v, 0.0),
        }
    }

    fn eval_pair(&self, j: usize, i: usize) -> PairEval {
        let ub = self.user_base(j);
        let ib = self.item_base(i);
        let d = self.dim;
        let x = &self.params[ib..ib + d];
        let y = &self.params[ib + d..ib + 2 * d];
        let mut u = x[0];
        let mut v = y[0];
        for l in 1..d {
            u += self.params[ub + l - 1] * x[l];
            v += self.params[ub + (d - 1) + l - 1] * y[l];
        }
        let (lambda_f, s_f) = self.lambda_f(j);
        let s_c = sigmoid(self.params[ub + 2 * (d - 1) + 1]);
        let lambda_c = lambda_f * s_c;
        let c = lambda_c * u + (1.0 - lambda_c) * v;
        PairEval { u, v, c, lambda_f, lambda_c, s_c, s_f }
    }

    /// Exact-hinge total loss at the current parameters.
    pub fn loss_exact(&self) -> f64 {
        self.loss(HingeSmoothing::Exact)
    }

    /// Total loss with the configured hinge surrogate (what the gradient
    /// differentiates).
    pub fn loss_smooth(&self) -> f64 {
        self.loss(self.config.smoothing)
    }

    fn loss(&self, smoothing: HingeSmoothing) -> f64 {
        let alpha = self.config.alpha;
        let beta = self.config.beta();
        let mu = self.params[self.mu_index()];
        let mut total = 0.0;
        for atom in &self.rating_atoms {
            let e = self.rating_residual(atom);
            total += alpha * e * e;
        }
        for atom in &self.round_atoms {
            let chosen_score = match atom.chosen {
                Some(pos) => self.eval_pair(atom.user, atom.slate[pos]).c,
                None => mu,
            };
            for (pos, &i) in atom.slate.iter().enumerate() {
                if atom.chosen == Some(pos) {
                    continue;
                }
                total += beta * hinge_value(self.eval_pair(atom.user, i).c - chosen_score, smoothing);
            }
            if atom.chosen.is_some() {
                total += beta * hinge_value(mu - chosen_score, smoothing);
            }
        }
        total
    }

    fn rating_residual(&self, atom: &RatingAtom) -> f64 {
        let pair = self.eval_pair(atom.user, atom.item);
        let g = pair.lambda_f * pair.u + (1.0 - pair.lambda_f) * pair.v;
        self.config.rating_map.apply(g) - atom.rating
    }

    // --- gradients --------------------------------------------------------

    /// Adds `weight * d(feedback score)/d(params)` for one pair.
    fn add_feedback_grad(&self, j: usize, i: usize, pair: &PairEval, weight: f64, grad: &mut [f64]) {
        let ub = self.user_base(j);
        let ib = self.item_base(i);
        let d = self.dim;
        let lf = pair.lambda_f;
        grad[ib] += weight * lf;
        grad[ib + d] += weight * (1.0 - lf);
        for l in 1..d {
            let a_l = self.params[ub + l - 1];
            let b_l = self.params[ub + (d - 1) + l - 1];
            grad[ib + l] += weight * lf * a_l;
            grad[ib + d + l] += weight * (1.0 - lf) * b_l;
            grad[ub + l - 1] += weight * lf * self.params[ib + l];
            grad[ub + (d - 1) + l - 1] += weight * (1.0 - lf) * self.params[ib + d + l];
        }
        if matches!(self.config.lambda_f, LambdaFMode::Learn) {
            let theta_f = ub + 2 * (d - 1);
            grad[theta_f] += weight * (pair.u - pair.v) * pair.s_f * (1.0 - pair.s_f);
        }
    }

    /// Adds `weight * d(choice score)/d(params)` for one pair.
    fn add_choice_grad(&self, j: usize, i: usize, pair: &PairEval, weight: f64, grad: &mut [f64]) {
        let ub = self.user_base(j);
        let ib = self.item_base(i);
        let d = self.dim;
        let lc = pair.lambda_c;
        grad[ib] += weight * lc;
        grad[ib + d] += weight * (1.0 - lc);
        for l in 1..d {
            let a_l = self.params[ub + l - 1];
            let b_l = self.params[ub + (d - 1) + l - 1];
            grad[ib + l] += weight * lc * a_l;
            grad[ib + d + l] += weight * (1.0 - lc) * b_l;
            grad[ub + l - 1] += weight * lc * self.params[ib + l];
            grad[ub + (d - 1) + l - 1] += weight * (1.0 - lc) * self.params[ib + d + l];
        }
        let du = pair.u - pair.v;
        if matches!(self.config.lambda_f, LambdaFMode::Learn) {
            let theta_f = ub + 2 * (d - 1);
            grad[theta_f] += weight * du * pair.s_c * pair.s_f * (1.0 - pair.s_f);
        }
        let theta_c = ub + 2 * (d - 1) + 1;
        grad[theta_c] += weight * du * pair.lambda_f * pair.s_c * (1.0 - pair.s_c);
    }

    fn accumulate_atom(&self, atom: Atom, grad: &mut [f64]) {
        match atom {
            Atom::Rating(ix) => {
                let atom = &self.rating_atoms[ix];
                let pair = self.eval_pair(atom.user, atom.item);
                let g = pair.lambda_f * pair.u + (1.0 - pair.lambda_f) * pair.v;
                let e = self.config.rating_map.apply(g) - atom.rating;
                let coef = self.config.alpha * 2.0 * e * self.config.rating_map.derivative(g);
                if coef != 0.0 {
                    self.add_feedback_grad(atom.user, atom.item, &pair, coef, grad);
                }
            }
            Atom::Round(ix) => {
                let atom = &self.round_atoms[ix];
                let beta = self.config.beta();
                let mu_ix = self.mu_index();
                let mu = self.params[mu_ix];
                let evals: Vec<PairEval> =
                    atom.slate.iter().map(|&i| self.eval_pair(atom.user, i)).collect();
                let chosen_score = match atom.chosen {
                    Some(pos) => evals[pos].c,
                    None => mu,
                };
                // Sum of slopes flows back through the chosen option's score.
                let mut chosen_weight = 0.0;
                for (pos, &i) in atom.slate.iter().enumerate() {
                    if atom.chosen == Some(pos) {
                        continue;
                    }
                    let w = beta * hinge_slope(evals[pos].c - chosen_score, self.config.smoothing);
                    if w != 0.0 {
                        self.add_choice_grad(atom.user, i, &evals[pos], w, grad);
                        chosen_weight += w;
                    }
                }
                if atom.chosen.is_some() {
                    let w = beta * hinge_slope(mu - chosen_score, self.config.smoothing);
                    grad[mu_ix] += w;
                    chosen_weight += w;
                }
                if chosen_weight != 0.0 {
                    match atom.chosen {
                        Some(pos) => self.add_choice_grad(
                            atom.user,
                            atom.slate[pos],
                            &evals[pos],
                            -chosen_weight,
                            grad,
                        ),
                        None => grad[mu_ix] -= chosen_weight,
                    }
                }
            }
        }
    }

    /// Gradient of [`FitState::loss_smooth`] over all atoms (a sum, not a
    /// mean).
    pub fn full_gradient(&self) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        for ix in 0..self.rating_atoms.len() {
            self.accumulate_atom(Atom::Rating(ix), &mut grad);
        }
        for ix in 0..self.round_atoms.len() {
            self.accumulate_atom(Atom::Round(ix), &mut grad);
        }
        grad
    }

    // --- optimization -----------------------------------------------------

    /// Runs the SGD schedule. Returns the exact-hinge loss after each epoch;
    /// stops early on convergence, errors on divergence.
    ///
    /// The exact hinge makes minibatch iterates bounce around margin
    /// boundaries at an amplitude set by the learning rate, so the final
    /// parameters are the average of the iterates over the last quarter of
    /// the schedule (plain tail averaging; skipped when convergence stops
    /// the run before the tail begins).
    pub fn run(&mut self) -> Result<Vec<f64>> {
        let mut atoms: Vec<Atom> = (0..self.rating_atoms.len())
            .map(Atom::Rating)
            .chain((0..self.round_atoms.len()).map(Atom::Round))
            .collect();
        let mut grad = vec![0.0; self.param_count()];
        let mut losses = Vec::new();
        let mut prev = self.loss_exact();
        let tail_start = self.config.epochs - self.config.epochs / 4;
        let mut tail_sum = vec![0.0; self.param_count()];
        let mut tail_count = 0usize;
        for epoch in 0..self.config.epochs {
            let mut rng = substream(self.config.seed, block::TRAIN, 1 + epoch as u64);
            atoms.shuffle(&mut rng);
            for batch in atoms.chunks(self.config.minibatch_size) {
                grad.fill(0.0);
                for &atom in batch {
                    self.accumulate_atom(atom, &mut grad);
                }
                let step = self.config.learning_rate / batch.len() as f64;
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p -= step * g;
                }
                if self.config.weight_decay > 0.0 {
                    // Decay only bilinear coordinates; the anchored components
                    // x[0], y[0] act as biases and are left alone, as are the
                    // blend angles and mu.
                    let shrink = 1.0 - self.config.learning_rate * self.config.weight_decay;
                    for j in 0..self.users.len() {
                        let base = self.user_base(j);
                        for k in 0..2 * (self.dim - 1) {
                            self.params[base + k] *= shrink;
                        }
                    }
                    for i in 0..self.items.len() {
                        let base = self.item_base(i);
                        for l in 1..self.dim {
                            self.params[base + l] *= shrink;
                            self.params[base + self.dim + l] *= shrink;
                        }
                    }
                }
            }
            let loss = self.loss_exact();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            losses.push(loss);
            if epoch >= tail_start {
                for (s, p) in tail_sum.iter_mut().zip(&self.params) {
                    *s += p;
                }
                tail_count += 1;
            }
            if (prev - loss).abs() <= self.config.convergence_tol * (1.0 + loss.abs()) {
                break;
            }
            prev = loss;
        }
        if tail_count > 0 {
            for (p, s) in self.params.iter_mut().zip(&tail_sum) {
                *p = s / tail_count as f64;
            }
            losses.push(self.loss_exact());
        }
        Ok(losses)
    }

    /// Post-hoc spread of the outside score: the standard deviation of the
    /// top-of-slate estimated choice score over outside-chosen rounds,
    /// defaulting to the initial 1.0 when fewer than two such rounds exist.
    fn fit_sigma(&self) -> f64 {
        let tops: Vec<f64> = self
            .round_atoms
            .iter()
            .filter(|atom| atom.chosen.is_none())
            .filter_map(|atom| {
                atom.slate
                    .iter()
                    .map(|&i| self.eval_pair(atom.user, i).c)
                    .max_by(f64::total_cmp)
            })
            .collect();
        if tops.len() < 2 {
            return SIGMA_INIT;
        }
        let mean = tops.iter().sum::<f64>() / tops.len() as f64;
        let var =
            tops.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (tops.len() - 1) as f64;
        var.sqrt().max(SIGMA_FLOOR)
    }

    /// Materializes the current parameters as an [`EstimatedModel`].
    pub fn into_model(self) -> Result<EstimatedModel> {
        let d = self.dim;
        let m = self.users.len();
        let n = self.items.len();
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut lambda_c = Vec::with_capacity(m);
        let mut lambda_f = Vec::with_capacity(m);
        for j in 0..m {
            let ub = self.user_base(j);
            let mut aj = vec![1.0];
            let mut bj = vec![1.0];
            aj.extend_from_slice(&self.params[ub..ub + d - 1]);
            bj.extend_from_slice(&self.params[ub + d - 1..ub + 2 * (d - 1)]);
            a.push(LatentVector::new(aj)?);
            b.push(LatentVector::new(bj)?);
            let (lf, _) = self.lambda_f(j);
            let lc = lf * sigmoid(self.params[ub + 2 * (d - 1) + 1]);
            lambda_f.push(lf);
            lambda_c.push(lc);
        }
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let ib = self.item_base(i);
            x.push(LatentVector::new(self.params[ib..ib + d].to_vec())?);
            y.push(LatentVector::new(self.params[ib + d..ib + 2 * d].to_vec())?);
        }
        let sigma = self.fit_sigma();
        let mu = self.params[self.mu_index()];
        let model = EstimatedModel {
            dim: d,
            users: self.users,
            items: self.items,
            a,
            b,
            lambda_c,
            lambda_f,
            x,
            y,
            mu,
            sigma,
            outside_enrichment: self.outside_enrichment,
        };
        model.validate()?;
        Ok(model)
    }
}

/// The id universe actually observed in a dataset: users with interactions,
/// items appearing on any slate or in any rating.
pub(crate) fn discover_universe(dataset: &Dataset) -> (Vec<UserId>, Vec<ItemId>) {
    let mut users = BTreeSet::new();
    let mut items = BTreeSet::new();
    for rec in &dataset.interactions {
        users.insert(rec.user_id);
        items.extend(rec.slate.iter().copied());
        if let Choice::Item(id) = rec.chosen {
            items.insert(id);
        }
    }
    for obs in &dataset.ratings {
        users.insert(obs.user_id);
        items.insert(obs.item_id);
    }
    (users.into_iter().collect(), items.into_iter().collect())
}

/// Fits the model on the universe observed in the dataset. The expected
/// outside enrichment per user is not identified by clicks and ratings and
/// must be supplied externally.
pub fn fit(
    dataset: &Dataset,
    config: &TrainConfig,
    outside_enrichment: &BTreeMap<UserId, f64>,
) -> Result<EstimatedModel> {
    let (users, items) = discover_universe(dataset);
    fit_with_universe(dataset, config, outside_enrichment, users, items)
}

/// Fits the model on an explicit id universe (a superset of what the data
/// mentions; extra items keep their random initialization). Useful when the
/// fitted model must be indexable against a known world.
pub fn fit_with_universe(
    dataset: &Dataset,
    config: &TrainConfig,
    outside_enrichment: &BTreeMap<UserId, f64>,
    users: Vec<UserId>,
    items: Vec<ItemId>,
) -> Result<EstimatedModel> {
    let mut state = FitState::new(dataset, config, outside_enrichment, users, items)?;
    state.run()?;
    state.into_model()
}

/// Compares the analytic gradient of the smooth surrogate loss against
/// central finite differences with the given step, at the initialization
/// point. Returns the worst per-coordinate relative error.
pub fn gradient_check(
    dataset: &Dataset,
    config: &TrainConfig,
    outside_enrichment: &BTreeMap<UserId, f64>,
    step: f64,
) -> Result<f64> {
    let (users, items) = discover_universe(dataset);
    let mut state = FitState::new(dataset, config, outside_enrichment, users, items)?;
    let analytic = state.full_gradient();
    let base = state.params().to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut perturbed = base.clone();
        perturbed[k] = base[k] + step;
        state.set_params(&perturbed);
        let up = state.loss_smooth();
        perturbed[k] = base[k] - step;
        state.set_params(&perturbed);
        let down = state.loss_smooth();
        let fd = (up - down) / (2.0 * step);
        let denom = analytic[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((analytic[k] - fd).abs() / denom);
    }
    state.set_params(&base);
    Ok(worst)
}
