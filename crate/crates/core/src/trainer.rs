//! Gradient descent with per-unit alpha-stable noise injection:
//!
//! `theta_i <- theta_i - eta * n * grad_i R + sigma * eta^(1/alpha) * X_i`
//!
//! with `X_i` drawn from unit `i`'s own random stream.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::net::{self, Activation, NetworkParams, SecondLayer};
use crate::scalar::Scalar;
use crate::stable::{RandomStream, StableSpec, StableVector, StreamRng};

const INIT_DOMAIN: u64 = 0x494e_4954; // "INIT"
const NOISE_DOMAIN: u64 = 0x4e4f_4953; // "NOIS"

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitDistribution {
    Gaussian,
    /// Uniform on `[-scale, scale]`.
    Uniform,
}

/// Initial law of the unit parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub distribution: InitDistribution,
    /// Scale of `w` and `b`; `None` means `1/sqrt(d)`.
    pub scale: Option<f64>,
    /// Scale of the trainable second layer `c`.
    pub second_layer_scale: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            distribution: InitDistribution::Gaussian,
            scale: None,
            second_layer_scale: 1.0,
        }
    }
}

impl InitSpec {
    fn validate(&self) -> Result<()> {
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::domain(format!("init scale {s} must be > 0")));
            }
        }
        if !(self.second_layer_scale > 0.0 && self.second_layer_scale.is_finite()) {
            return Err(Error::domain(format!(
                "second-layer init scale {} must be > 0",
                self.second_layer_scale
            )));
        }
        Ok(())
    }

    fn draw(&self, scale: f64, rng: &mut StreamRng) -> f64 {
        match self.distribution {
            InitDistribution::Gaussian => {
                let g: f64 = StandardNormal.sample(rng);
                scale * g
            }
            InitDistribution::Uniform => Uniform::new_inclusive(-scale, scale)
                .expect("scale validated")
                .sample(rng),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub noise: StableSpec,
    pub seed: u64,
    pub second_layer: SecondLayer,
    pub activation: Activation,
    pub bias: bool,
    pub init: InitSpec,
    /// Inject noise into `c` as well when the second layer is trainable.
    pub noise_on_second_layer: bool,
    /// Stop once training accuracy reaches this value.
    pub target_train_acc: Option<f64>,
    /// Evaluate metrics every this many epochs (the last epoch is always evaluated).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 1e-3,
            batch_size: 1,
            epochs: 1,
            noise: StableSpec::none(),
            seed: 0,
            second_layer: SecondLayer::Trainable,
            activation: Activation::Relu,
            bias: true,
            init: InitSpec::default(),
            noise_on_second_layer: true,
            target_train_acc: None,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::domain(format!("step size eta={} must be > 0", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::domain("eval_every must be at least 1"));
        }
        if let Some(t) = self.target_train_acc {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::domain(format!("target accuracy {t} must lie in [0, 1]")));
            }
        }
        self.init.validate()
    }

    /// Whether noise reaches the second-layer weights.
    pub fn noisy_second_layer(&self) -> bool {
        self.second_layer == SecondLayer::Trainable && self.noise_on_second_layer
    }

    /// Length of the per-unit noise vector.
    pub fn noise_dim(&self, d: usize, l: usize) -> usize {
        d + usize::from(self.bias) + if self.noisy_second_layer() { l } else { 0 }
    }

    /// `sigma * eta^(1/alpha)`.
    pub fn noise_scale(&self) -> f64 {
        self.noise.sigma() * self.eta.powf(1.0 / self.noise.alpha())
    }
}

/// Metrics recorded at the end of an evaluated epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Parameters, iteration counter, one noise stream per unit, and history.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub params: NetworkParams<T>,
    pub k: u64,
    streams: Vec<StreamRng>,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> TrainState<T> {
    /// Draws units i.i.d. from the init law and keys noise stream `i` by `(seed, i)`.
    pub fn init(config: &TrainConfig, n: usize, d: usize, l: usize) -> Result<Self> {
        config.validate()?;
        if n == 0 || d == 0 || l == 0 {
            return Err(Error::domain("n, d and l must all be at least 1"));
        }
        let scale = config.init.scale.unwrap_or(1.0 / (d as f64).sqrt());
        let mut w = Array2::zeros((n, d));
        let mut b = Array1::zeros(n);
        let mut c = Array2::zeros((n, l));
        for i in 0..n {
            let mut rng = RandomStream::new(config.seed, i as u64).with_domain(INIT_DOMAIN).rng();
            for v in w.row_mut(i).iter_mut() {
                *v = T::of(config.init.draw(scale, &mut rng));
            }
            if config.bias {
                b[i] = T::of(config.init.draw(scale, &mut rng));
            }
            for v in c.row_mut(i).iter_mut() {
                *v = T::of(config.init.draw(config.init.second_layer_scale, &mut rng));
            }
        }
        let b = config.bias.then_some(b);
        let params = match config.second_layer {
            SecondLayer::Fixed => NetworkParams::fixed(w, b, l, config.activation)?,
            SecondLayer::Trainable => NetworkParams::new(w, b, Some(c), SecondLayer::Trainable, config.activation)?,
        };
        Ok(Self::from_params(config, params))
    }

    /// Wraps existing parameters with fresh noise streams and `k = 0`.
    pub fn from_params(config: &TrainConfig, params: NetworkParams<T>) -> Self {
        let streams = (0..params.n())
            .map(|i| RandomStream::new(config.seed, i as u64).with_domain(NOISE_DOMAIN).rng())
            .collect();
        TrainState {
            params,
            k: 0,
            streams,
            history: Vec::new(),
        }
    }

    /// One perturbed gradient step on the batch `(x, y)`.
    ///
    /// On divergence the state is left untouched, so `params` stays the last
    /// finite iterate.
    pub fn step(&mut self, x: ndarray::ArrayView2<'_, T>, y: &[usize], config: &TrainConfig) -> Result<()> {
        let grad = net::grad_risk(&self.params, x, y)?;
        self.apply_update(&grad, config)
    }

    /// Applies `theta <- theta - eta n grad + noise` for a precomputed gradient.
    pub fn apply_update(&mut self, grad: &net::Gradient<T>, config: &TrainConfig) -> Result<()> {
        let n = self.params.n();
        let lr = T::of(config.eta * n as f64);
        let bias = self.params.has_bias();
        let trainable = self.params.mode() == SecondLayer::Trainable;
        let mut next = self.params.clone();
        {
            let (w, b, c) = next.parts_mut();
            w.scaled_add(-lr, &grad.w);
            if bias {
                b.scaled_add(-lr, &grad.b);
            }
            if trainable {
                c.scaled_add(-lr, &grad.c);
            }
            if !config.noise.is_noiseless() {
                let sampler = StableVector::from_spec(&config.noise);
                let scale = T::of(config.noise_scale());
                let d = w.ncols();
                let l = c.ncols();
                let dim = d + usize::from(bias) + if config.noisy_second_layer() && trainable { l } else { 0 };
                let mut buf = vec![T::zero(); dim];
                for (i, rng) in self.streams.iter_mut().enumerate() {
                    buf.iter_mut().for_each(|v| *v = T::zero());
                    sampler.add_scaled(&mut buf, scale, rng);
                    let mut it = buf.iter();
                    for v in w.row_mut(i).iter_mut() {
                        *v += *it.next().expect("noise dim covers w");
                    }
                    if bias {
                        b[i] += *it.next().expect("noise dim covers b");
                    }
                    if dim > d + usize::from(bias) {
                        for v in c.row_mut(i).iter_mut() {
                            *v += *it.next().expect("noise dim covers c");
                        }
                    }
                }
            }
        }
        if !next.all_finite() {
            return Err(Error::Diverged { iteration: self.k });
        }
        self.params = next;
        self.k += 1;
        Ok(())
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: NetworkParams<T>,
    pub history: Vec<EpochRecord>,
    pub epochs_run: usize,
}

/// A run that diverged; `state.params` is the last finite iterate.
#[derive(Debug)]
pub struct TrainFailure<T> {
    pub error: Error,
    pub state: Option<TrainState<T>>,
}

impl<T> std::fmt::Display for TrainFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl<T: std::fmt::Debug> std::error::Error for TrainFailure<T> {}

impl<T> From<Error> for TrainFailure<T> {
    fn from(error: Error) -> Self {
        TrainFailure { error, state: None }
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 of (seed, epoch)
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Batch order used in `epoch` of a run seeded with `seed`.
pub fn epoch_batches(m: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    data::batches(m, batch_size.min(m), epoch_seed(seed, epoch))
}

/// Trains with shuffled mini-batches, calling `observe` after every epoch.
pub fn train_with<T, F>(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    n: usize,
    mut observe: F,
) -> Result<TrainOutcome<T>, TrainFailure<T>>
where
    T: Scalar,
    F: FnMut(usize, &TrainState<T>) -> Result<()>,
{
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::domain("training and test sets must be non-empty").into());
    }
    if train_set.dim() != test_set.dim() {
        return Err(Error::domain("training and test feature dimensions differ").into());
    }
    let l = train_set.classes.max(test_set.classes);
    let mut state = TrainState::<T>::init(config, n, train_set.dim(), l)?;

    let alpha = config.noise.alpha();
    if !config.noise.is_noiseless() && config.eta > (n as f64).powf(-alpha / 2.0 - 1.0) {
        log::warn!(
            "eta={} exceeds n^(-alpha/2-1)={:.3e}; the compression guarantee assumes smaller steps",
            config.eta,
            (n as f64).powf(-alpha / 2.0 - 1.0)
        );
    }

    let x_train = train_set.features_as::<T>();
    let x_test = test_set.features_as::<T>();
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        for batch in epoch_batches(train_set.len(), config.batch_size, config.seed, epoch)? {
            let (x, y) = train_set.gather::<T>(&batch);
            if let Err(error) = state.step(x.view(), &y, config) {
                return Err(TrainFailure {
                    error,
                    state: Some(state),
                });
            }
        }
        epochs_run = epoch + 1;
        let last = epochs_run == config.epochs;
        let mut reached = false;
        if last || epochs_run % config.eval_every == 0 || config.target_train_acc.is_some() {
            let (train_loss, train_acc) = net::evaluate(&state.params, x_train.view(), &train_set.labels)?;
            reached = config.target_train_acc.is_some_and(|t| train_acc >= t);
            if last || reached || epochs_run % config.eval_every == 0 {
                let test_acc = net::accuracy(&state.params, x_test.view(), &test_set.labels)?;
                state.history.push(EpochRecord {
                    epoch: epochs_run,
                    train_loss,
                    train_acc,
                    test_acc,
                });
            }
        }
        observe(epochs_run, &state)?;
        if reached {
            break;
        }
    }
    Ok(TrainOutcome {
        params: state.params,
        history: state.history,
        epochs_run,
    })
}

/// Trains and returns the final parameters with the per-epoch history.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    n: usize,
) -> Result<TrainOutcome<T>, TrainFailure<T>> {
    train_with(config, train_set, test_set, n, |_, _| Ok(()))
}
