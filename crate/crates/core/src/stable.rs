//! Symmetric alpha-stable scalars, the three stable vector constructions, and
//! stable Lévy increments.
//!
//! All samplers draw unit-scale variates with characteristic function
//! `exp(-|w|^alpha)` (or `exp(-|<u, 1>|^alpha)`, `exp(-sum |u_i|^alpha)`,
//! `exp(-||u||^alpha)` for the vector types). The noise level `sigma` of a
//! [`StableSpec`] is applied only where noise is injected.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::distr::{Distribution, Open01};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The per-stream generator: ChaCha8 keyed by `(seed, domain)` with the
/// stream id selecting one of 2^64 independent counter sequences.
pub type StreamRng = ChaCha8Rng;

/// Key of one reproducible random sequence.
///
/// `domain` separates unrelated uses of the same seed (initialisation, noise,
/// batch order, ...); `stream_id` is typically a unit or particle index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub domain: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        RandomStream {
            seed,
            domain: 0,
            stream_id,
        }
    }

    pub const fn with_domain(self, domain: u64) -> Self {
        RandomStream { domain, ..self }
    }

    /// A fresh generator positioned at the first draw of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.domain.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Construction used for stable random vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VectorType {
    /// One scalar replicated to every coordinate.
    TypeI,
    /// Independent scalar coordinates.
    TypeII,
    /// Rotationally invariant (isotropic).
    TypeIII,
}

impl std::str::FromStr for VectorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" | "type-i" | "typei" | "type1" => Ok(VectorType::TypeI),
            "ii" | "2" | "type-ii" | "typeii" | "type2" => Ok(VectorType::TypeII),
            "iii" | "3" | "type-iii" | "typeiii" | "type3" => Ok(VectorType::TypeIII),
            other => Err(Error::domain(format!(
                "unknown noise type {other:?} (expected I, II or III)"
            ))),
        }
    }
}

impl std::fmt::Display for VectorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VectorType::TypeI => "I",
            VectorType::TypeII => "II",
            VectorType::TypeIII => "III",
        })
    }
}

/// Stability index, vector construction and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableSpec {
    alpha: f64,
    vtype: VectorType,
    sigma: f64,
}

impl StableSpec {
    pub fn new(alpha: f64, vtype: VectorType, sigma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("noise level sigma={sigma} must be >= 0")));
        }
        Ok(StableSpec {
            alpha,
            vtype,
            sigma,
        })
    }

    /// A spec with `sigma = 0`; callers skip noise generation entirely.
    pub fn none() -> Self {
        StableSpec {
            alpha: 2.0,
            vtype: VectorType::TypeI,
            sigma: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vtype(&self) -> VectorType {
        self.vtype
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma == 0.0
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "stability index alpha={alpha} must lie in (0, 2]"
        )))
    }
}

/// Symmetric alpha-stable law with characteristic function `exp(-|w|^alpha)`,
/// sampled by the Chambers–Mallows–Stuck transform.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricStable {
    alpha: f64,
}

impl SymmetricStable {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(SymmetricStable { alpha })
    }
}

impl Distribution<f64> for SymmetricStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let alpha = self.alpha;
        if alpha == 2.0 {
            // exp(-w^2) is N(0, 2).
            let g: f64 = StandardNormal.sample(rng);
            return SQRT_2 * g;
        }
        let u = PI * (rng.sample::<f64, _>(Open01) - 0.5);
        if alpha == 1.0 {
            return u.tan();
        }
        let w = -f64::ln(rng.sample::<f64, _>(Open01));
        cms_transform(alpha, u, w)
    }
}

/// Positive stable variate with Laplace transform `exp(-s^a)`, `0 < a <= 1`
/// (Kanter's representation of the one-sided CMS transform).
#[derive(Debug, Clone, Copy)]
pub struct PositiveStable {
    a: f64,
}

impl PositiveStable {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a <= 1.0 {
            Ok(PositiveStable { a })
        } else {
            Err(Error::domain(format!(
                "one-sided stable index {a} must lie in (0, 1]"
            )))
        }
    }
}

impl Distribution<f64> for PositiveStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.a;
        if a == 1.0 {
            return 1.0;
        }
        let u = PI * rng.sample::<f64, _>(Open01);
        let w = -f64::ln(rng.sample::<f64, _>(Open01));
        let head = (a * u).sin() / u.sin().powf(1.0 / a);
        let tail = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
        head * tail
    }
}

/// One symmetric alpha-stable scalar draw.
pub fn sample_scalar<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(SymmetricStable::new(alpha)?.sample(rng))
}

/// Vector sampler for a fixed `(alpha, type)`; scale is not applied.
#[derive(Debug, Clone, Copy)]
pub struct StableVector {
    vtype: VectorType,
    scalar: SymmetricStable,
    subordinator: PositiveStable,
}

impl StableVector {
    pub fn new(alpha: f64, vtype: VectorType) -> Result<Self> {
        Ok(StableVector {
            vtype,
            scalar: SymmetricStable::new(alpha)?,
            subordinator: PositiveStable::new(alpha / 2.0)?,
        })
    }

    pub fn from_spec(spec: &StableSpec) -> Self {
        Self::new(spec.alpha, spec.vtype).expect("StableSpec is validated on construction")
    }

    /// Overwrites `out` with one vector draw.
    pub fn fill<T: Scalar, R: Rng + ?Sized>(&self, out: &mut [T], rng: &mut R) {
        match self.vtype {
            VectorType::TypeI => {
                let z = T::of(self.scalar.sample(rng));
                out.iter_mut().for_each(|x| *x = z);
            }
            VectorType::TypeII => {
                for x in out.iter_mut() {
                    *x = T::of(self.scalar.sample(rng));
                }
            }
            VectorType::TypeIII => {
                // X = sqrt(A) G with G ~ N(0, 2 I) and E exp(-sA) = exp(-s^(alpha/2)).
                let a = self.subordinator.sample(rng);
                let scale = (2.0 * a).sqrt();
                for x in out.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *x = T::of(scale * g);
                }
            }
        }
    }

    /// Adds `scale` times one vector draw to `out`.
    pub fn add_scaled<T: Scalar, R: Rng + ?Sized>(&self, out: &mut [T], scale: T, rng: &mut R) {
        match self.vtype {
            VectorType::TypeI => {
                let z = scale * T::of(self.scalar.sample(rng));
                out.iter_mut().for_each(|x| *x += z);
            }
            VectorType::TypeII => {
                for x in out.iter_mut() {
                    *x += scale * T::of(self.scalar.sample(rng));
                }
            }
            VectorType::TypeIII => {
                let a = self.subordinator.sample(rng);
                let s = (2.0 * a).sqrt();
                for x in out.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *x += scale * T::of(s * g);
                }
            }
        }
    }
}

/// One draw of the stable vector described by `spec` (unit scale).
pub fn sample_vector<T: Scalar, R: Rng + ?Sized>(
    spec: &StableSpec,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    if dim == 0 {
        return Err(Error::domain("vector dimension must be at least 1"));
    }
    let mut out = vec![T::zero(); dim];
    StableVector::from_spec(spec).fill(&mut out, rng);
    Ok(out)
}

/// Increment of a unit-scale stable Lévy process over an interval of length `dt`.
pub fn levy_increment<T: Scalar, R: Rng + ?Sized>(
    spec: &StableSpec,
    dim: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<T>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step dt={dt} must be > 0")));
    }
    let mut out = sample_vector::<T, R>(spec, dim, rng)?;
    let scale = T::of(dt.powf(1.0 / spec.alpha));
    out.iter_mut().for_each(|x| *x = *x * scale);
    Ok(out)
}

/// Chambers–Mallows–Stuck map for `u` in `(-pi/2, pi/2)` and `w > 0`.
pub fn cms_transform(alpha: f64, u: f64, w: f64) -> f64 {
    debug_assert!(u.abs() < FRAC_PI_2 && w > 0.0);
    if alpha == 1.0 {
        return u.tan();
    }
    (alpha * u).sin() / u.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
}
