//! Interacting particle systems driven by stable Lévy noise,
//!
//! `d theta_i = b(theta_i, mu^n) dt + sigma dL_i`,
//!
//! their Euler discretisation on a shared noise path, and the Monte Carlo
//! experiments that measure discretisation error, propagation of chaos,
//! compressibility of i.i.d. stable sequences, growth of stable maxima and
//! tail heaviness of the terminal law.
//!
//! Every comparison between two simulated systems reuses one noise
//! realisation: coarse-grid increments are sums of fine-grid increments, and
//! an `n`-particle system reuses the first `n` paths of a larger one.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::{self, Activation, NetworkParams, SecondLayer};
use crate::prune::kterm_error;
use crate::scalar::Scalar;
use crate::stable::{RandomStream, StableSpec, StableVector, SymmetricStable};
use crate::stats;

const PATH_DOMAIN: u64 = 0x5041_5448; // "PATH"
const START_DOMAIN: u64 = 0x5354_5254; // "STRT"
const IID_DOMAIN: u64 = 0x4949_4400; // "IID"
const MAX_DOMAIN: u64 = 0x4d41_5800; // "MAX"

/// Measure-dependent drift `b(theta, mu^n)`, evaluated for all particles at once.
pub trait Drift<T: Scalar>: Send + Sync {
    /// Writes `b(states[i], mu)` into `out[i]`, where `mu` is the empirical
    /// measure of the rows of `states`.
    fn eval(&self, states: ArrayView2<'_, T>, out: ArrayViewMut2<'_, T>);

    /// Whether the drift depends on the empirical measure.
    fn interacts(&self) -> bool;

    fn name(&self) -> String;
}

/// `b = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl<T: Scalar> Drift<T> for ZeroDrift {
    fn eval(&self, _states: ArrayView2<'_, T>, mut out: ArrayViewMut2<'_, T>) {
        out.fill(T::zero());
    }

    fn interacts(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// `b = v` for a fixed vector `v`.
#[derive(Debug, Clone)]
pub struct ConstantDrift<T>(pub Vec<T>);

impl<T: Scalar> Drift<T> for ConstantDrift<T> {
    fn eval(&self, _states: ArrayView2<'_, T>, mut out: ArrayViewMut2<'_, T>) {
        for mut row in out.outer_iter_mut() {
            for (o, &v) in row.iter_mut().zip(&self.0) {
                *o = v;
            }
        }
    }

    fn interacts(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

/// `b(theta) = -rate * theta`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDrift {
    pub rate: f64,
}

impl<T: Scalar> Drift<T> for LinearDrift {
    fn eval(&self, states: ArrayView2<'_, T>, mut out: ArrayViewMut2<'_, T>) {
        let r = T::of(-self.rate);
        out.zip_mut_with(&states, |o, &x| *o = r * x);
    }

    fn interacts(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("linear(rate={})", self.rate)
    }
}

/// `b(theta, mu) = -confinement * theta + coupling * (E_mu[s(theta')] - 1/2)`
/// coordinate-wise, with `s` the logistic function. The interaction is a
/// bounded Lipschitz functional of the empirical measure.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldLogistic {
    pub confinement: f64,
    pub coupling: f64,
}

impl Default for MeanFieldLogistic {
    fn default() -> Self {
        MeanFieldLogistic {
            confinement: 1.0,
            coupling: 2.0,
        }
    }
}

impl<T: Scalar> Drift<T> for MeanFieldLogistic {
    fn eval(&self, states: ArrayView2<'_, T>, mut out: ArrayViewMut2<'_, T>) {
        let n = states.nrows();
        let half = T::of(0.5);
        let mut field = states.map(|&x| Activation::Sigmoid.apply(x)).sum_axis(Axis(0));
        field.mapv_inplace(|v| T::of(self.coupling) * (v / T::of(n as f64) - half));
        let k = T::of(-self.confinement);
        for (mut o, x) in out.outer_iter_mut().zip(states.outer_iter()) {
            for ((o, &x), &f) in o.iter_mut().zip(x.iter()).zip(field.iter()) {
                *o = k * x + f;
            }
        }
    }

    fn interacts(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!(
            "mean-field-logistic(confinement={}, coupling={})",
            self.confinement, self.coupling
        )
    }
}

/// The mean-field network drift `b(theta_i, mu^n) = -n dR/dtheta_i` on a
/// fixed labelled batch. Each particle is one unit column `(w, b[, c])`.
#[derive(Debug, Clone)]
pub struct NetworkDrift<T> {
    pub x: Array2<T>,
    pub y: Vec<usize>,
    pub classes: usize,
    pub mode: SecondLayer,
    pub activation: Activation,
    pub bias: bool,
}

impl<T: Scalar> NetworkDrift<T> {
    pub fn particle_dim(&self) -> usize {
        self.x.ncols() + usize::from(self.bias) + if self.mode == SecondLayer::Trainable { self.classes } else { 0 }
    }

    fn params_from(&self, states: ArrayView2<'_, T>) -> Result<NetworkParams<T>> {
        let d = self.x.ncols();
        let w = states.slice(s![.., ..d]).to_owned();
        let b = self.bias.then(|| states.column(d).to_owned());
        let off = d + usize::from(self.bias);
        match self.mode {
            SecondLayer::Fixed => NetworkParams::fixed(w, b, self.classes, self.activation),
            SecondLayer::Trainable => NetworkParams::new(
                w,
                b,
                Some(states.slice(s![.., off..off + self.classes]).to_owned()),
                self.mode,
                self.activation,
            ),
        }
    }
}

impl<T: Scalar> Drift<T> for NetworkDrift<T> {
    fn eval(&self, states: ArrayView2<'_, T>, mut out: ArrayViewMut2<'_, T>) {
        // Non-finite states are caught by the simulator after the step.
        let Ok(params) = self.params_from(states) else {
            out.fill(T::nan());
            return;
        };
        let g = net::grad_risk(&params, self.x.view(), &self.y)
            .expect("drift batch is validated on construction")
            .drift();
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            for (o, v) in row.iter_mut().zip(g.column(i, &params)) {
                *o = v;
            }
        }
    }

    fn interacts(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("network({}, {})", self.activation.name(), self.mode.name())
    }
}

/// `n` particles in `R^p` at time `t`.
#[derive(Clone)]
pub struct ParticleSystem<T> {
    pub state: Array2<T>,
    pub t: f64,
    pub drift: Arc<dyn Drift<T>>,
    pub noise: StableSpec,
}

impl<T: Scalar> ParticleSystem<T> {
    pub fn new(state: Array2<T>, drift: Arc<dyn Drift<T>>, noise: StableSpec) -> Result<Self> {
        if state.nrows() == 0 || state.ncols() == 0 {
            return Err(Error::domain("a particle system needs n >= 1 particles of dimension >= 1"));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("particle states must be finite"));
        }
        Ok(ParticleSystem {
            state,
            t: 0.0,
            drift,
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.state.nrows()
    }

    pub fn dim(&self) -> usize {
        self.state.ncols()
    }
}

/// Unit-scale Lévy increments for `n` particles on a uniform grid of step `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<T> {
    /// `[step, particle, coordinate]`.
    pub increments: Array3<T>,
    pub eta: f64,
    pub seed: u64,
}

impl<T: Scalar> NoisePath<T> {
    /// Draws `steps` increments per particle; particle `i` uses stream `(seed, i)`,
    /// so its path does not depend on `n`.
    pub fn sample(spec: &StableSpec, n: usize, dim: usize, eta: f64, steps: usize, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::domain(format!("grid step {eta} must be > 0")));
        }
        if n == 0 || dim == 0 {
            return Err(Error::domain("noise path needs n >= 1 and dim >= 1"));
        }
        let sampler = StableVector::from_spec(spec);
        let scale = T::of(eta.powf(1.0 / spec.alpha()));
        let mut increments = Array3::zeros((steps, n, dim));
        let mut buf = vec![T::zero(); dim];
        for i in 0..n {
            let mut rng = RandomStream::new(seed, i as u64).with_domain(PATH_DOMAIN).rng();
            for k in 0..steps {
                sampler.fill(&mut buf, &mut rng);
                for (dst, &v) in increments.slice_mut(s![k, i, ..]).iter_mut().zip(&buf) {
                    *dst = scale * v;
                }
            }
        }
        Ok(NoisePath { increments, eta, seed })
    }

    pub fn steps(&self) -> usize {
        self.increments.len_of(Axis(0))
    }

    pub fn n(&self) -> usize {
        self.increments.len_of(Axis(1))
    }

    /// Path on the grid `factor * eta`: each increment is the in-order sum of
    /// `factor` consecutive fine increments.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath<T>> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::domain(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps()
            )));
        }
        let (_, n, dim) = self.increments.dim();
        let coarse_steps = self.steps() / factor;
        let mut out = Array3::zeros((coarse_steps, n, dim));
        for k in 0..coarse_steps {
            let mut acc = out.index_axis_mut(Axis(0), k);
            for j in 0..factor {
                acc += &self.increments.index_axis(Axis(0), k * factor + j);
            }
        }
        Ok(NoisePath {
            increments: out,
            eta: self.eta * factor as f64,
            seed: self.seed,
        })
    }

    /// The paths of the first `n` particles.
    pub fn restrict(&self, n: usize) -> Result<NoisePath<T>> {
        if n == 0 || n > self.n() {
            return Err(Error::domain(format!("cannot restrict {} paths to {n}", self.n())));
        }
        Ok(NoisePath {
            increments: self.increments.slice(s![.., ..n, ..]).to_owned(),
            eta: self.eta,
            seed: self.seed,
        })
    }
}

/// States at every grid time of an Euler run.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub states: Vec<Array2<T>>,
}

impl<T> Trajectory<T> {
    pub fn terminal(&self) -> &Array2<T> {
        self.states.last().expect("a trajectory holds at least the initial state")
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::domain(format!("{what}: {num} is not an integer multiple of {den}")));
    }
    Ok(k as usize)
}

/// Euler scheme on `[0, horizon]` with step `eta`, visiting each grid state.
///
/// `visit(k, state)` is called for `k = 0..=horizon/eta`.
pub fn euler_visit<T, F>(
    system: &ParticleSystem<T>,
    eta: f64,
    horizon: f64,
    path: &NoisePath<T>,
    mut visit: F,
) -> Result<Array2<T>>
where
    T: Scalar,
    F: FnMut(usize, &Array2<T>),
{
    if !(eta > 0.0) || !(horizon >= 0.0) {
        return Err(Error::domain("need eta > 0 and horizon >= 0"));
    }
    let factor = integer_ratio(eta, path.eta, "step size vs noise grid")?;
    let steps = if horizon == 0.0 {
        0
    } else {
        integer_ratio(horizon, eta, "horizon vs step size")?
    };
    if steps * factor > path.steps() {
        return Err(Error::domain(format!(
            "noise path covers {} fine steps, {} needed",
            path.steps(),
            steps * factor
        )));
    }
    if path.n() < system.n() || path.increments.len_of(Axis(2)) != system.dim() {
        return Err(Error::domain("noise path does not match the particle system"));
    }
    let sigma = T::of(system.noise.sigma());
    let h = T::of(eta);
    let mut state = system.state.clone();
    let mut drift = Array2::zeros(state.raw_dim());
    let n = system.n();
    visit(0, &state);
    for k in 0..steps {
        system.drift.eval(state.view(), drift.view_mut());
        state.scaled_add(h, &drift);
        for j in 0..factor {
            let inc = path.increments.slice(s![k * factor + j, ..n, ..]);
            state.scaled_add(sigma, &inc);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k as u64 });
        }
        visit(k + 1, &state);
    }
    Ok(state)
}

/// Euler scheme `theta_{k+1} = theta_k + eta b(theta_k, mu_k) + sigma dL_k`,
/// returning every intermediate state.
pub fn euler_simulate<T: Scalar>(
    system: &ParticleSystem<T>,
    eta: f64,
    horizon: f64,
    path: &NoisePath<T>,
) -> Result<Trajectory<T>> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    euler_visit(system, eta, horizon, path, |k, s| {
        times.push(k as f64 * eta);
        states.push(s.clone());
    })?;
    Ok(Trajectory { times, states })
}

/// Gaussian initial states; particle `i` draws from its own stream so coupled
/// systems of different sizes share starting points.
pub fn initial_states<T: Scalar>(n: usize, dim: usize, scale: f64, seed: u64) -> Array2<T> {
    let mut out = Array2::zeros((n, dim));
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let mut rng = RandomStream::new(seed, i as u64).with_domain(START_DOMAIN).rng();
        for v in row.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = T::of(scale * g);
        }
    }
    out
}

/// `max_i ||a_i - b_i||` over the first `a.nrows()` rows.
fn sup_distance<T: Scalar>(a: &Array2<T>, b: ArrayView2<'_, T>) -> f64 {
    a.outer_iter()
        .zip(b.outer_iter())
        .map(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(&p, &q)| (p - q).to_f64_lossy().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of a rate table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub x: f64,
    /// Median (or mean, see [`RateTable::statistic`]) over trials.
    pub center: f64,
    pub iqr: f64,
}

/// Summary of a Monte Carlo sweep over one independent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub experiment: String,
    pub variable: String,
    pub statistic: String,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln center` against `ln x`; `None` if any center is not positive.
    pub slope: Option<f64>,
    pub note: Option<String>,
}

impl RateTable {
    fn build(experiment: &str, variable: &str, statistic: &str, xs: &[f64], samples: Vec<Vec<f64>>, use_mean: bool) -> Self {
        let rows: Vec<RateRow> = xs
            .iter()
            .zip(&samples)
            .map(|(&x, s)| RateRow {
                x,
                center: if use_mean { stats::mean(s) } else { stats::median(s) },
                iqr: stats::iqr(s),
            })
            .collect();
        let slope = (rows.len() >= 2 && rows.iter().all(|r| r.center > 0.0)).then(|| {
            let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.center).collect();
            stats::loglog_slope(&x, &y)
        });
        RateTable {
            experiment: experiment.into(),
            variable: variable.into(),
            statistic: statistic.into(),
            rows,
            slope,
            note: None,
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.center).collect()
    }

    /// CSV with columns `<variable>,<statistic>,iqr,slope`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},iqr,slope\n", self.variable, self.statistic);
        let slope = self.slope.map(|s| s.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.x, r.center, r.iqr, slope));
        }
        out
    }

    /// Tab-separated `ln x`, `ln center` pairs for log-log plots.
    pub fn to_loglog_tsv(&self) -> String {
        let mut out = format!("ln_{}\tln_{}\n", self.variable, self.statistic);
        for r in &self.rows {
            if r.x > 0.0 && r.center > 0.0 {
                out.push_str(&format!("{}\t{}\n", r.x.ln(), r.center.ln()));
            }
        }
        out
    }

    pub fn write(&self, csv: &Path, tsv: &Path) -> Result<()> {
        let mut f = std::fs::File::create(csv).map_err(|e| Error::io(csv, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(csv, e))?;
        std::fs::write(tsv, self.to_loglog_tsv()).map_err(|e| Error::io(tsv, e))
    }
}

/// Parameters of [`euler_error_experiment`].
#[derive(Debug, Clone)]
pub struct EulerErrorSetup {
    pub noise: StableSpec,
    pub n: usize,
    pub dim: usize,
    pub horizon: f64,
    pub etas: Vec<f64>,
    pub eta_ref: f64,
    pub trials: usize,
    pub init_scale: f64,
    pub seed: u64,
}

/// Median over trials of `max_i ||theta_T(eta) - theta_T(eta_ref)||`, all
/// runs sharing one noise path on the `eta_ref` grid.
pub fn euler_error_experiment<T: Scalar>(drift: Arc<dyn Drift<T>>, setup: &EulerErrorSetup) -> Result<RateTable> {
    if setup.trials == 0 || setup.etas.is_empty() {
        return Err(Error::domain("need at least one trial and one step size"));
    }
    let ref_steps = integer_ratio(setup.horizon, setup.eta_ref, "horizon vs reference step")?;
    for &eta in &setup.etas {
        integer_ratio(eta, setup.eta_ref, "step size vs reference step")?;
    }
    let mut samples = vec![Vec::with_capacity(setup.trials); setup.etas.len()];
    for trial in 0..setup.trials {
        let seed = trial_seed(setup.seed, trial);
        let path = NoisePath::<T>::sample(&setup.noise, setup.n, setup.dim, setup.eta_ref, ref_steps, seed)?;
        let system = ParticleSystem::new(
            initial_states(setup.n, setup.dim, setup.init_scale, seed),
            drift.clone(),
            setup.noise,
        )?;
        let reference = euler_visit(&system, setup.eta_ref, setup.horizon, &path, |_, _| {})?;
        for (j, &eta) in setup.etas.iter().enumerate() {
            let coarse = euler_visit(&system, eta, setup.horizon, &path, |_, _| {})?;
            samples[j].push(sup_distance(&coarse, reference.view()));
        }
    }
    let mut table = RateTable::build("euler-error", "eta", "median_error", &setup.etas, samples, false);
    table.note = Some(format!(
        "drift={}, alpha={}, n={}, T={}, eta_ref={}, trials={}",
        drift.name(),
        setup.noise.alpha(),
        setup.n,
        setup.horizon,
        setup.eta_ref,
        setup.trials
    ));
    Ok(table)
}

/// Parameters of [`poc_experiment`].
#[derive(Debug, Clone)]
pub struct PocSetup {
    pub noise: StableSpec,
    pub ns: Vec<usize>,
    pub n_ref: usize,
    pub dim: usize,
    pub horizon: f64,
    pub eta: f64,
    pub trials: usize,
    pub init_scale: f64,
    pub seed: u64,
}

/// Median over trials of `sup_t max_{i<=n} ||theta_i^n(t) - theta_i^ref(t)||`,
/// where the `n_ref`-particle system stands in for the mean-field limit and
/// the `n`-particle system reuses its first `n` noise paths and starting points.
pub fn poc_experiment<T: Scalar>(drift: Arc<dyn Drift<T>>, setup: &PocSetup) -> Result<RateTable> {
    if setup.trials == 0 || setup.ns.is_empty() {
        return Err(Error::domain("need at least one trial and one system size"));
    }
    if let Some(&too_big) = setup.ns.iter().find(|&&n| n == 0 || n > setup.n_ref) {
        return Err(Error::domain(format!("system size {too_big} must lie in 1..={}", setup.n_ref)));
    }
    let steps = integer_ratio(setup.horizon, setup.eta, "horizon vs step size")?;
    let mut samples = vec![Vec::with_capacity(setup.trials); setup.ns.len()];
    for trial in 0..setup.trials {
        let seed = trial_seed(setup.seed, trial);
        let path = NoisePath::<T>::sample(&setup.noise, setup.n_ref, setup.dim, setup.eta, steps, seed)?;
        let start = initial_states::<T>(setup.n_ref, setup.dim, setup.init_scale, seed);
        let reference = ParticleSystem::new(start.clone(), drift.clone(), setup.noise)?;
        let mut ref_states = Vec::with_capacity(steps + 1);
        euler_visit(&reference, setup.eta, setup.horizon, &path, |_, s| ref_states.push(s.clone()))?;
        for (j, &n) in setup.ns.iter().enumerate() {
            let system = ParticleSystem::new(start.slice(s![..n, ..]).to_owned(), drift.clone(), setup.noise)?;
            let mut err: f64 = 0.0;
            euler_visit(&system, setup.eta, setup.horizon, &path, |k, s| {
                err = err.max(sup_distance(s, ref_states[k].slice(s![..n, ..])));
            })?;
            samples[j].push(err);
        }
    }
    let xs: Vec<f64> = setup.ns.iter().map(|&n| n as f64).collect();
    let mut table = RateTable::build("propagation-of-chaos", "n", "median_error", &xs, samples, false);
    table.note = Some(format!(
        "drift={}, alpha={}, n_ref={} (adds an O(n_ref^-1/2) floor), T={}, eta={}, trials={}",
        drift.name(),
        setup.noise.alpha(),
        setup.n_ref,
        setup.horizon,
        setup.eta,
        setup.trials
    ));
    Ok(table)
}

fn stable_draws(alpha: f64, n: usize, seed: u64, domain: u64) -> Result<Vec<f64>> {
    let d = SymmetricStable::new(alpha)?;
    let mut rng = RandomStream::new(seed, 0).with_domain(domain).rng();
    Ok((0..n).map(|_| d.sample(&mut rng)).collect())
}

/// Median over trials of `sigma_{floor(kappa n)}(x) / ||x||` for i.i.d. stable `x` of length `n`.
pub fn iid_compressibility_experiment(alpha: f64, ns: &[usize], kappa: f64, trials: usize, seed: u64) -> Result<RateTable> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!("alpha={alpha} must lie in (0, 2) (heavy-tailed regime)")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::domain(format!("kappa={kappa} must lie in (0, 1]")));
    }
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let mut samples = Vec::with_capacity(ns.len());
    for &n in ns {
        let k = crate::prune::kept_count(kappa, n);
        let mut errs = Vec::with_capacity(trials);
        for trial in 0..trials {
            let x = stable_draws(alpha, n, trial_seed(seed ^ n as u64, trial), IID_DOMAIN)?;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            errs.push(kterm_error(&x, k)? / norm);
        }
        samples.push(errs);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let mut table = RateTable::build("iid-compressibility", "n", "median_rel_error", &xs, samples, false);
    table.note = Some(format!("alpha={alpha}, kappa={kappa}, trials={trials}"));
    Ok(table)
}

/// Mean over trials of `max_i |X_i|` for `n` i.i.d. symmetric stable scalars.
pub fn max_stable_scaling(alpha: f64, ns: &[usize], trials: usize, seed: u64) -> Result<RateTable> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha={alpha} must lie in (0, 2]")));
    }
    if trials == 0 || ns.contains(&0) {
        return Err(Error::domain("need at least one trial and n >= 1"));
    }
    let mut samples = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut maxima = Vec::with_capacity(trials);
        for trial in 0..trials {
            let x = stable_draws(alpha, n, trial_seed(seed ^ n as u64, trial), MAX_DOMAIN)?;
            maxima.push(x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        samples.push(maxima);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let mut table = RateTable::build("max-stable-scaling", "n", "mean_max", &xs, samples, true);
    table.note = Some(format!("alpha={alpha}, trials={trials}, reference slope 1/alpha={}", 1.0 / alpha));
    Ok(table)
}

/// Hill estimator over the `k` largest order statistics of the positive samples:
/// `k / sum_{j<k} ln(x_(j) / x_(k))` with `x_(0) >= x_(1) >= ...`.
pub fn hill_tail_index<T: Scalar>(samples: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("Hill estimator needs k >= 1"));
    }
    let mut x: Vec<f64> = samples
        .iter()
        .map(|v| v.to_f64_lossy())
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    if x.len() < k + 1 {
        return Err(Error::domain(format!(
            "Hill estimator with k={k} needs at least {} positive samples, found {}",
            k + 1,
            x.len()
        )));
    }
    x.sort_by(|a, b| b.total_cmp(a));
    let threshold = x[k];
    let denom: f64 = x[..k].iter().map(|v| (v / threshold).ln()).sum();
    if denom <= 0.0 {
        return Err(Error::domain("Hill estimator is undefined: top order statistics are all equal"));
    }
    Ok(k as f64 / denom)
}

/// Default share of replicas used as upper order statistics by the tail probe.
pub const DEFAULT_HILL_FRACTION: f64 = 0.01;

/// Parameters of [`second_moment_divergence_probe`].
#[derive(Debug, Clone)]
pub struct TailProbeSetup {
    pub noise: StableSpec,
    pub dim: usize,
    pub t: f64,
    pub eta: f64,
    pub replicas: usize,
    pub init_scale: f64,
    /// Fraction of replicas used as upper order statistics by the Hill estimator.
    pub hill_fraction: f64,
    pub seed: u64,
}

/// Tail diagnostics of `||theta_t||` over independent replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct TailProbeReport {
    pub hill_index: f64,
    pub hill_k: usize,
    /// `max ||theta||^2 / sum ||theta||^2`.
    pub dominance_ratio: f64,
    /// `replicas^(-1/2)`.
    pub dominance_threshold: f64,
    /// Running empirical second moment after `count` replicas.
    pub running_second_moment: Vec<(usize, f64)>,
}

impl TailProbeReport {
    /// The assertable heavy-tail claim: Hill index below 2 and a non-vanishing max-term share.
    pub fn heavy_tailed(&self) -> bool {
        self.hill_index < 2.0 && self.dominance_ratio > self.dominance_threshold
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicas,running_second_moment\n");
        for (c, m) in &self.running_second_moment {
            out.push_str(&format!("{c},{m}\n"));
        }
        out
    }
}

/// Simulates independent single particles `d theta = b(theta) dt + sigma dL`
/// with a measure-free drift and summarises the tail of `||theta_t||`.
pub fn second_moment_divergence_probe<T: Scalar>(drift: Arc<dyn Drift<T>>, setup: &TailProbeSetup) -> Result<TailProbeReport> {
    if drift.interacts() {
        return Err(Error::domain(
            "the tail probe simulates independent replicas and needs a measure-free drift",
        ));
    }
    if setup.replicas < 2 {
        return Err(Error::domain("need at least two replicas"));
    }
    let start = initial_states::<T>(setup.replicas, setup.dim, setup.init_scale, setup.seed);
    let system = ParticleSystem::new(start, drift, setup.noise)?;
    let terminal = if setup.t == 0.0 {
        system.state.clone()
    } else {
        let steps = integer_ratio(setup.t, setup.eta, "horizon vs step size")?;
        let path = NoisePath::<T>::sample(&setup.noise, setup.replicas, setup.dim, setup.eta, steps, setup.seed)?;
        euler_visit(&system, setup.eta, setup.t, &path, |_, _| {})?
    };
    let sq: Vec<f64> = terminal
        .outer_iter()
        .map(|r| r.iter().map(|v| v.to_f64_lossy().powi(2)).sum())
        .collect();
    let norms: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
    let hill_k = ((setup.hill_fraction * setup.replicas as f64).round() as usize).clamp(1, setup.replicas - 1);
    let hill_index = hill_tail_index(&norms, hill_k)?;
    let total: f64 = sq.iter().sum();
    let max = sq.iter().copied().fold(0.0, f64::max);
    let mut running = Vec::new();
    let mut acc = 0.0;
    let mut checkpoint = 10;
    for (i, v) in sq.iter().enumerate() {
        acc += v;
        if i + 1 == checkpoint || i + 1 == sq.len() {
            running.push((i + 1, acc / (i + 1) as f64));
            checkpoint *= 10;
        }
    }
    Ok(TailProbeReport {
        hill_index,
        hill_k,
        dominance_ratio: max / total,
        dominance_threshold: (setup.replicas as f64).powf(-0.5),
        running_second_moment: running,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::VectorType;

    fn spec(alpha: f64) -> StableSpec {
        StableSpec::new(alpha, VectorType::TypeIII, 1.0).unwrap()
    }

    #[test]
    fn zero_drift_euler_is_exact_at_every_step() {
        let noise = spec(1.5);
        let path = NoisePath::<f64>::sample(&noise, 3, 2, 1.0 / 64.0, 64, 1).unwrap();
        let start = initial_states::<f64>(3, 2, 1.0, 1);
        let system = ParticleSystem::new(start.clone(), Arc::new(ZeroDrift), noise).unwrap();
        let total = path.increments.sum_axis(Axis(0));
        for eta in [1.0 / 64.0, 1.0 / 8.0, 1.0] {
            let end = euler_simulate(&system, eta, 1.0, &path).unwrap();
            let diff = end.terminal() - &(&start + &total);
            assert!(diff.iter().all(|v| v.abs() < 1e-12), "eta={eta}");
        }
    }

    #[test]
    fn constant_drift_adds_ct() {
        let noise = spec(1.8);
        let path = NoisePath::<f64>::sample(&noise, 2, 1, 0.25, 8, 2).unwrap();
        let start = initial_states::<f64>(2, 1, 1.0, 2);
        let system = ParticleSystem::new(start.clone(), Arc::new(ConstantDrift(vec![3.0])), noise).unwrap();
        let end = euler_simulate(&system, 0.5, 2.0, &path).unwrap();
        let total = path.increments.sum_axis(Axis(0));
        for i in 0..2 {
            let expect = start[[i, 0]] + 6.0 + total[[i, 0]];
            assert!((end.terminal()[[i, 0]] - expect).abs() < 1e-12);
        }
        assert_eq!(end.times.len(), 5);
    }

    #[test]
    fn coarsening_is_an_exact_sum() {
        let path = NoisePath::<f64>::sample(&spec(1.3), 2, 2, 0.125, 8, 3).unwrap();
        let c = path.coarsen(4).unwrap();
        for i in 0..2 {
            for d in 0..2 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += path.increments[[k, i, d]];
                }
                assert_eq!(acc.to_bits(), c.increments[[0, i, d]].to_bits());
            }
        }
        assert!(path.coarsen(3).is_err());
        assert_eq!(c.eta, 0.5);
    }

    #[test]
    fn paths_do_not_depend_on_particle_count() {
        let big = NoisePath::<f64>::sample(&spec(1.7), 6, 1, 0.1, 5, 4).unwrap();
        let small = NoisePath::<f64>::sample(&spec(1.7), 2, 1, 0.1, 5, 4).unwrap();
        assert_eq!(big.restrict(2).unwrap(), small);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let path = NoisePath::<f64>::sample(&spec(1.7), 2, 1, 0.1, 10, 4).unwrap();
        let system = ParticleSystem::new(initial_states(2, 1, 1.0, 0), Arc::new(ZeroDrift), spec(1.7)).unwrap();
        assert!(euler_simulate(&system, 0.15, 1.0, &path).is_err());
        assert!(euler_simulate(&system, 0.1, 2.0, &path).is_err());
    }

    #[test]
    fn euler_error_is_zero_without_drift() {
        let setup = EulerErrorSetup {
            noise: spec(1.75),
            n: 4,
            dim: 1,
            horizon: 1.0,
            etas: vec![1.0 / 4.0, 1.0 / 8.0],
            eta_ref: 1.0 / 64.0,
            trials: 3,
            init_scale: 1.0,
            seed: 5,
        };
        let t = euler_error_experiment::<f64>(Arc::new(ZeroDrift), &setup).unwrap();
        assert!(t.rows.iter().all(|r| r.center < 1e-12));
    }

    #[test]
    fn linear_drift_error_shrinks_with_step() {
        let setup = EulerErrorSetup {
            noise: spec(1.75),
            n: 4,
            dim: 1,
            horizon: 1.0,
            etas: vec![1.0 / 8.0, 1.0 / 32.0],
            eta_ref: 1.0 / 512.0,
            trials: 20,
            init_scale: 1.0,
            seed: 6,
        };
        let t = euler_error_experiment::<f64>(Arc::new(LinearDrift { rate: 1.0 }), &setup).unwrap();
        assert!(t.rows[1].center < t.rows[0].center, "{t:?}");
    }

    #[test]
    fn poc_error_is_zero_without_interaction() {
        let setup = PocSetup {
            noise: spec(1.75),
            ns: vec![4, 16],
            n_ref: 64,
            dim: 1,
            horizon: 1.0,
            eta: 0.125,
            trials: 2,
            init_scale: 1.0,
            seed: 7,
        };
        let t = poc_experiment::<f64>(Arc::new(LinearDrift { rate: 1.0 }), &setup).unwrap();
        assert!(t.rows.iter().all(|r| r.center == 0.0));
        assert_eq!(t.slope, None);
        let t = poc_experiment::<f64>(Arc::new(MeanFieldLogistic::default()), &setup).unwrap();
        assert!(t.rows.iter().all(|r| r.center > 0.0));
    }

    #[test]
    fn iid_compressibility_full_kappa_is_zero() {
        let t = iid_compressibility_experiment(1.5, &[10, 100], 1.0, 3, 1).unwrap();
        assert!(t.rows.iter().all(|r| r.center == 0.0));
        assert!(iid_compressibility_experiment(2.0, &[10], 0.5, 3, 1).is_err());
    }

    #[test]
    fn hill_recovers_pareto_index() {
        // Pareto(a) by inversion: x = u^(-1/a).
        use rand::distr::{Distribution as _, Open01};
        let a = 1.5;
        let mut rng = RandomStream::new(1, 0).rng();
        let x: Vec<f64> = (0..200_000)
            .map(|_| {
                let u: f64 = Open01.sample(&mut rng);
                u.powf(-1.0 / a)
            })
            .collect();
        let h = hill_tail_index(&x, 2_000).unwrap();
        assert!((h - a).abs() < 0.05 * a, "hill {h}");
    }

    #[test]
    fn hill_degenerate_inputs() {
        assert!(hill_tail_index(&[2.0; 10], 3).is_err());
        assert!(hill_tail_index(&[1.0, 2.0], 2).is_err());
        assert!(hill_tail_index(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn network_drift_matches_minus_n_gradient() {
        let data = crate::data::synthetic_mixture(3, 2, 5, 6.0, 0).unwrap();
        let drift = NetworkDrift {
            x: data.features.clone(),
            y: data.labels.clone(),
            classes: 2,
            mode: SecondLayer::Trainable,
            activation: Activation::Tanh,
            bias: true,
        };
        let states = initial_states::<f64>(4, drift.particle_dim(), 0.5, 3);
        let mut out = Array2::zeros(states.raw_dim());
        drift.eval(states.view(), out.view_mut());
        let params = drift.params_from(states.view()).unwrap();
        let g = net::grad_risk(&params, data.features.view(), &data.labels).unwrap();
        for i in 0..4 {
            for (a, b) in out.row(i).iter().zip(g.column(i, &params)) {
                assert!((a + 4.0 * b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tail_probe_rejects_interacting_drift() {
        let setup = TailProbeSetup {
            noise: spec(1.5),
            dim: 1,
            t: 1.0,
            eta: 1.0,
            replicas: 100,
            init_scale: 1.0,
            hill_fraction: 0.05,
            seed: 0,
        };
        assert!(second_moment_divergence_probe::<f64>(Arc::new(MeanFieldLogistic::default()), &setup).is_err());
        let r = second_moment_divergence_probe::<f64>(Arc::new(ZeroDrift), &setup).unwrap();
        assert_eq!(r.running_second_moment.last().unwrap().0, 100);
    }
}
