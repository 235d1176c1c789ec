//! One-hidden-layer mean-field network, cross-entropy loss and analytic
//! gradients of the empirical risk.
//!
//! Unit `i` carries first-layer weights `w_i` (length `d`), an optional bias
//! `b_i` and second-layer weights `c_i` (length `l`). The logits are
//!
//! * trainable second layer: `f(x) = (1/n) sum_i c_i a(<w_i, x> + b_i)`,
//! * fixed second layer: `c_i = 1/n` in every coordinate and
//!   `f(x) = sum_i c_i a(<w_i, x> + b_i)`.
//!
//! The parameter column of a unit is `(w_i, b_i[, c_i])`; `c_i` belongs to the
//! column only when the second layer is trainable.

use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows evaluated per block by the batched forward pass.
const EVAL_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at the pre-activation `z`. The ReLU subgradient at 0 is 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (T::one() - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::domain(format!("unknown activation {other:?}"))),
        }
    }
}

/// Whether the second-layer weights are the constant `1/n` or trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecondLayer {
    Fixed,
    Trainable,
}

impl SecondLayer {
    pub fn name(self) -> &'static str {
        match self {
            SecondLayer::Fixed => "fixed",
            SecondLayer::Trainable => "trainable",
        }
    }
}

impl FromStr for SecondLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(SecondLayer::Fixed),
            "trainable" | "trained" => Ok(SecondLayer::Trainable),
            other => Err(Error::domain(format!("unknown second-layer mode {other:?}"))),
        }
    }
}

/// Parameters of a single unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitParams<T> {
    pub w: Vec<T>,
    pub b: T,
    pub c: Vec<T>,
}

/// Output of one unit: `c * a(<w, x> + b)`.
pub fn unit_output<T: Scalar>(u: &UnitParams<T>, x: &[T], activation: Activation) -> Result<Vec<T>> {
    if u.w.len() != x.len() {
        return Err(Error::domain(format!(
            "feature length {} does not match unit input dimension {}",
            x.len(),
            u.w.len()
        )));
    }
    let z = u.w.iter().zip(x).fold(u.b, |acc, (&w, &x)| acc + w * x);
    let a = activation.apply(z);
    Ok(u.c.iter().map(|&c| c * a).collect())
}

/// The collection of `n` unit parameters, stored as matrices with one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    w: Array2<T>,
    b: Array1<T>,
    c: Array2<T>,
    bias: bool,
    mode: SecondLayer,
    activation: Activation,
}

impl<T: Scalar> NetworkParams<T> {
    /// Builds a network from per-unit rows.
    ///
    /// `b = None` disables the bias. In fixed mode `c` must be `None` and is
    /// set to `1/n`; in trainable mode it is required.
    pub fn new(
        w: Array2<T>,
        b: Option<Array1<T>>,
        c: Option<Array2<T>>,
        mode: SecondLayer,
        activation: Activation,
    ) -> Result<Self> {
        let (n, _d) = w.dim();
        if n == 0 {
            return Err(Error::domain("a network needs at least one unit"));
        }
        let bias = b.is_some();
        let b = b.unwrap_or_else(|| Array1::zeros(n));
        if b.len() != n {
            return Err(Error::domain(format!("bias has {} entries for {n} units", b.len())));
        }
        let c = match (mode, c) {
            (SecondLayer::Trainable, Some(c)) => c,
            (SecondLayer::Trainable, None) => {
                return Err(Error::domain("trainable second layer requires weights"))
            }
            (SecondLayer::Fixed, Some(_)) => {
                return Err(Error::domain("fixed second layer takes no weights (it is 1/n)"))
            }
            (SecondLayer::Fixed, None) => {
                return Err(Error::domain(
                    "fixed second layer needs the class count; use NetworkParams::fixed",
                ))
            }
        };
        if c.nrows() != n || c.ncols() == 0 {
            return Err(Error::domain(format!(
                "second layer has shape {:?}, expected ({n}, l >= 1)",
                c.dim()
            )));
        }
        let net = NetworkParams {
            w,
            b,
            c,
            bias,
            mode,
            activation,
        };
        net.check_finite()?;
        Ok(net)
    }

    /// Fixed-mode network: second layer identically `1/n` over `classes` outputs.
    pub fn fixed(w: Array2<T>, b: Option<Array1<T>>, classes: usize, activation: Activation) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || classes == 0 {
            return Err(Error::domain("a network needs n >= 1 units and l >= 1 classes"));
        }
        let bias = b.is_some();
        let b = b.unwrap_or_else(|| Array1::zeros(n));
        if b.len() != n {
            return Err(Error::domain(format!("bias has {} entries for {n} units", b.len())));
        }
        let inv_n = T::one() / T::of(n as f64);
        let net = NetworkParams {
            w,
            b,
            c: Array2::from_elem((n, classes), inv_n),
            bias,
            mode: SecondLayer::Fixed,
            activation,
        };
        net.check_finite()?;
        Ok(net)
    }

    /// All-zero network (second layer `1/n` in fixed mode).
    pub fn zeros(n: usize, d: usize, l: usize, mode: SecondLayer, activation: Activation, bias: bool) -> Result<Self> {
        let b = bias.then(|| Array1::zeros(n));
        match mode {
            SecondLayer::Fixed => Self::fixed(Array2::zeros((n, d)), b, l, activation),
            SecondLayer::Trainable => Self::new(
                Array2::zeros((n, d)),
                b,
                Some(Array2::zeros((n, l))),
                mode,
                activation,
            ),
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::domain("parameters must be finite"))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).chain(self.c.iter()).all(|v| v.is_finite())
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn l(&self) -> usize {
        self.c.ncols()
    }

    pub fn mode(&self) -> SecondLayer {
        self.mode
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.w.view()
    }

    pub fn biases(&self) -> ArrayView1<'_, T> {
        self.b.view()
    }

    pub fn second_layer(&self) -> ArrayView2<'_, T> {
        self.c.view()
    }

    /// Mutable access to `(w, b, c)` for optimisers. Callers must keep the
    /// fixed-mode second layer and disabled biases untouched.
    pub fn parts_mut(&mut self) -> (&mut Array2<T>, &mut Array1<T>, &mut Array2<T>) {
        (&mut self.w, &mut self.b, &mut self.c)
    }

    /// Multiplier applied to `sum_i c_i a_i`: `1/n` when trainable, 1 when fixed.
    pub fn output_scale(&self) -> T {
        match self.mode {
            SecondLayer::Fixed => T::one(),
            SecondLayer::Trainable => T::one() / T::of(self.n() as f64),
        }
    }

    /// Length of a parameter column `(w, b[, c])`.
    pub fn column_dim(&self) -> usize {
        self.d() + usize::from(self.bias) + if self.mode == SecondLayer::Trainable { self.l() } else { 0 }
    }

    /// Parameter column of unit `i`.
    pub fn column(&self, i: usize) -> Vec<T> {
        let mut col: Vec<T> = self.w.row(i).to_vec();
        if self.bias {
            col.push(self.b[i]);
        }
        if self.mode == SecondLayer::Trainable {
            col.extend(self.c.row(i).iter().copied());
        }
        col
    }

    pub fn unit(&self, i: usize) -> UnitParams<T> {
        UnitParams {
            w: self.w.row(i).to_vec(),
            b: self.b[i],
            c: self.c.row(i).to_vec(),
        }
    }

    /// Zeroes the whole column of unit `i` (its `c_i` too when trainable).
    pub fn zero_unit(&mut self, i: usize) {
        self.w.row_mut(i).fill(T::zero());
        self.b[i] = T::zero();
        if self.mode == SecondLayer::Trainable {
            self.c.row_mut(i).fill(T::zero());
        }
    }

    /// Reorders units: unit `k` of the result is unit `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n());
        NetworkParams {
            w: self.w.select(Axis(0), perm),
            b: self.b.select(Axis(0), perm),
            c: self.c.select(Axis(0), perm),
            ..self.clone()
        }
    }

    /// Returns a copy with the second layer multiplied by `factor` (trainable mode only).
    pub fn with_scaled_second_layer(&self, factor: T) -> Result<Self> {
        if self.mode != SecondLayer::Trainable {
            return Err(Error::domain("the fixed second layer cannot be rescaled"));
        }
        let mut out = self.clone();
        out.c.mapv_inplace(|v| v * factor);
        Ok(out)
    }

    /// Scales every trainable entry by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.w.mapv_inplace(|v| v * factor);
        out.b.mapv_inplace(|v| v * factor);
        if self.mode == SecondLayer::Trainable {
            out.c.mapv_inplace(|v| v * factor);
        }
        out
    }

    fn check_features(&self, d: usize) -> Result<()> {
        if d != self.d() {
            return Err(Error::domain(format!(
                "feature length {d} does not match network input dimension {}",
                self.d()
            )));
        }
        Ok(())
    }

    /// Pre-activations `X W^T + b` for a block of rows.
    fn preactivations(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut z = x.dot(&self.w.t());
        if self.bias {
            z += &self.b;
        }
        z
    }
}

/// Logits for one feature vector.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, x: &[T]) -> Result<Vec<T>> {
    params.check_features(x.len())?;
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
    Ok(forward_batch(params, xv)?.row(0).to_vec())
}

/// Logits for every row of `x` (`m x d` in, `m x l` out).
pub fn forward_batch<T: Scalar>(params: &NetworkParams<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    params.check_features(x.ncols())?;
    let m = x.nrows();
    let mut out = Array2::zeros((m, params.l()));
    let scale = params.output_scale();
    let act = params.activation;
    let mut start = 0;
    while start < m {
        let end = (start + EVAL_BLOCK).min(m);
        let mut a = params.preactivations(x.slice(s![start..end, ..]));
        a.mapv_inplace(|z| act.apply(z));
        let mut f = a.dot(&params.c);
        f.mapv_inplace(|v| v * scale);
        out.slice_mut(s![start..end, ..]).assign(&f);
        start = end;
    }
    Ok(out)
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Cross-entropy of `softmax(logits)` against label `y`.
pub fn loss<T: Scalar>(logits: &[T], y: usize) -> Result<T> {
    if y >= logits.len() {
        return Err(Error::domain(format!(
            "label {y} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    // Rounding can leave a tiny negative value when the true class dominates.
    Ok((lse - logits[y]).max(T::zero()))
}

/// Index of the largest logit; ties go to the smallest index.
pub fn argmax<T: Scalar>(logits: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (k, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = k;
        }
    }
    best
}

fn check_labels(y: &[usize], m: usize, l: usize) -> Result<()> {
    if y.len() != m {
        return Err(Error::domain(format!("{} labels for {m} feature rows", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&v| v >= l) {
        return Err(Error::domain(format!("label {bad} out of range for {l} classes")));
    }
    Ok(())
}

/// Mean cross-entropy and classification accuracy over a labelled set.
pub fn evaluate<T: Scalar>(params: &NetworkParams<T>, x: ArrayView2<'_, T>, y: &[usize]) -> Result<(f64, f64)> {
    check_labels(y, x.nrows(), params.l())?;
    if y.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty set"));
    }
    let logits = forward_batch(params, x)?;
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for (row, &label) in logits.outer_iter().zip(y) {
        total_loss += loss(row.as_slice().expect("standard layout"), label)?.to_f64_lossy();
        if argmax(row) == label {
            correct += 1;
        }
    }
    let m = y.len() as f64;
    Ok((total_loss / m, correct as f64 / m))
}

/// Classification accuracy over a labelled set.
pub fn accuracy<T: Scalar>(params: &NetworkParams<T>, x: ArrayView2<'_, T>, y: &[usize]) -> Result<f64> {
    evaluate(params, x, y).map(|(_, acc)| acc)
}

/// Gradient of the risk with the same block structure as [`NetworkParams`].
///
/// `c` is always filled, including in fixed mode where it is not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub c: Array2<T>,
}

impl<T: Scalar> Gradient<T> {
    /// The per-unit drift `b(theta_i, mu^n) = -n * grad_i`.
    pub fn drift(&self) -> Gradient<T> {
        let neg_n = -T::of(self.w.nrows() as f64);
        Gradient {
            w: self.w.mapv(|v| v * neg_n),
            b: self.b.mapv(|v| v * neg_n),
            c: self.c.mapv(|v| v * neg_n),
        }
    }

    /// Gradient block of unit `i`, laid out like [`NetworkParams::column`].
    pub fn column(&self, i: usize, params: &NetworkParams<T>) -> Vec<T> {
        let mut col = self.w.row(i).to_vec();
        if params.has_bias() {
            col.push(self.b[i]);
        }
        if params.mode() == SecondLayer::Trainable {
            col.extend(self.c.row(i).iter().copied());
        }
        col
    }
}

/// Batch-average cross-entropy risk and its gradient with respect to every unit.
pub fn risk_and_grad<T: Scalar>(
    params: &NetworkParams<T>,
    x: ArrayView2<'_, T>,
    y: &[usize],
) -> Result<(T, Gradient<T>)> {
    params.check_features(x.ncols())?;
    check_labels(y, x.nrows(), params.l())?;
    let m = y.len();
    if m == 0 {
        return Err(Error::domain("gradient of an empty batch"));
    }
    let scale = params.output_scale();
    let act = params.activation;

    let z = params.preactivations(x);
    let a = z.mapv(|v| act.apply(v));
    let logits = a.dot(&params.c).mapv(|v| v * scale);

    // dR/dlogits = (softmax - onehot) / m
    let inv_m = T::one() / T::of(m as f64);
    let mut g = Array2::zeros(logits.raw_dim());
    let mut risk = T::zero();
    for ((row, mut grow), &label) in logits.outer_iter().zip(g.outer_iter_mut()).zip(y) {
        let row = row.as_slice().expect("standard layout");
        risk += loss(row, label)?;
        for (k, p) in softmax(row).into_iter().enumerate() {
            let target = if k == label { T::one() } else { T::zero() };
            grow[k] = (p - target) * inv_m;
        }
    }
    risk *= inv_m;

    let mut gc = a.t().dot(&g);
    gc.mapv_inplace(|v| v * scale);
    let mut dz = g.dot(&params.c.t());
    Zip::from(&mut dz).and(&z).for_each(|d, &zv| *d = *d * scale * act.derivative(zv));
    let gw = dz.t().dot(&x);
    let gb = if params.bias {
        dz.sum_axis(Axis(0))
    } else {
        Array1::zeros(params.n())
    };
    Ok((risk, Gradient { w: gw, b: gb, c: gc }))
}

/// Gradient of the batch-average cross-entropy risk.
pub fn grad_risk<T: Scalar>(params: &NetworkParams<T>, x: ArrayView2<'_, T>, y: &[usize]) -> Result<Gradient<T>> {
    risk_and_grad(params, x, y).map(|(_, g)| g)
}

/// Batch-average cross-entropy risk.
pub fn risk<T: Scalar>(params: &NetworkParams<T>, x: ArrayView2<'_, T>, y: &[usize]) -> Result<T> {
    check_labels(y, x.nrows(), params.l())?;
    if y.is_empty() {
        return Err(Error::domain("risk of an empty batch"));
    }
    let logits = forward_batch(params, x)?;
    let mut total = T::zero();
    for (row, &label) in logits.outer_iter().zip(y) {
        total += loss(row.as_slice().expect("standard layout"), label)?;
    }
    Ok(total / T::of(y.len() as f64))
}
