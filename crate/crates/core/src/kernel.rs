//! Evaluable m-linear kernels `K(x, y_1, …, y_m)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point};

/// Outcome of a kernel evaluation. Singular-set hits are reported as such
/// instead of producing NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelValue {
    Finite(f64),
    Singular,
}

impl KernelValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelValue::Finite(v) if v.is_finite() => Some(v),
            _ => None,
        }
    }
}

/// Where a kernel blows up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingularSet {
    /// `y_i = x` for some `i`.
    Diagonal,
    /// `y_i = x - shift` for some `i` (one-dimensional convolution kernels
    /// whose singularity sits at `x - y = shift`).
    ShiftedDiagonal(f64),
    None,
}

impl SingularSet {
    fn hit(&self, n: usize, x: &Point, ys: &[Point]) -> bool {
        match *self {
            SingularSet::Diagonal => ys.iter().any(|y| (0..n).all(|a| y[a] == x[a])),
            SingularSet::ShiftedDiagonal(s) => ys.iter().any(|y| x[0] - y[0] == s),
            SingularSet::None => false,
        }
    }
}

/// Continuity modulus `ω` on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulus {
    /// `c · t^ε`
    Power { c: f64, eps: f64 },
    /// `c · (log(e/t))^{-(1+ε)}`
    Log { c: f64, eps: f64 },
}

impl Modulus {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Modulus::Power { c, eps } => c * t.powf(eps),
            Modulus::Log { c, eps } => c * (1.0 - t.ln()).powf(-(1.0 + eps)),
        }
    }

    /// `ω(e^{-u})`, exact for arguments far below the smallest positive `f64`.
    pub fn eval_log(&self, u: f64) -> f64 {
        match *self {
            Modulus::Power { c, eps } => c * (-eps * u).exp(),
            Modulus::Log { c, eps } => c * (1.0 + u).powf(-(1.0 + eps)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, eps) = match *self {
            Modulus::Power { c, eps } | Modulus::Log { c, eps } => (c, eps),
        };
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::param("modulus.c", "must be finite and nonnegative"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::NotDini(format!(
                "exponent ε = {eps} must be positive"
            )));
        }
        Ok(())
    }
}

pub type KernelFn = dyn Fn(&Point, &[Point]) -> f64 + Send + Sync;

/// A kernel given by a closure. Named instances from [`CustomKernel::named`]
/// are serializable by name.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    /// Required ambient dimension, if any.
    pub dim: Option<usize>,
    pub singular: SingularSet,
    /// Range of `x - y` outside which the kernel vanishes (1-D convolution kernels).
    pub offset_support: Option<(f64, f64)>,
    /// Kernel is identically zero.
    pub vanishes: bool,
    pub f: Arc<KernelFn>,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomKernel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

pub const CUSTOM_NAMES: &[&str] = &["zero", "hilbert", "y_only", "riesz"];

impl CustomKernel {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&Point, &[Point]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomKernel {
            name: name.into(),
            dim: None,
            singular: SingularSet::Diagonal,
            offset_support: None,
            vanishes: false,
            f: Arc::new(f),
        }
    }

    /// Built-in named kernels:
    /// * `zero`: `K ≡ 0`.
    /// * `hilbert`: `1 / (x - y)` (n = 1, m = 1).
    /// * `y_only`: `exp(-Σ|y_i|²)`, independent of `x`.
    /// * `riesz`: `(x - y)_1 / |x - y|^3` (n = 2, m = 1).
    pub fn named(name: &str) -> Result<Self> {
        let k = match name {
            "zero" => CustomKernel {
                vanishes: true,
                singular: SingularSet::None,
                ..CustomKernel::new("zero", |_, _| 0.0)
            },
            "hilbert" => CustomKernel {
                dim: Some(1),
                ..CustomKernel::new("hilbert", |x, ys| 1.0 / (x[0] - ys[0][0]))
            },
            "y_only" => CustomKernel {
                singular: SingularSet::None,
                ..CustomKernel::new("y_only", |_, ys| {
                    let s: f64 = ys.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum();
                    (-s).exp()
                })
            },
            "riesz" => CustomKernel {
                dim: Some(2),
                ..CustomKernel::new("riesz", |x, ys| {
                    let d0 = x[0] - ys[0][0];
                    let d1 = x[1] - ys[0][1];
                    let r2 = d0 * d0 + d1 * d1;
                    d0 / (r2 * r2.sqrt())
                })
            },
            other => {
                return Err(Error::param(
                    "kernel.name",
                    format!("unknown custom kernel `{other}` (known: {CUSTOM_NAMES:?})"),
                ))
            }
        };
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    /// `((x−y_1)+(x−y_2)) / (|x−y_1|² + |x−y_2|²)^{3/2}` on the line.
    BilinearOddHomogeneous,
    /// `K(t) = |t−4|^{−1/r'} (log(e/|t−4|))^{−(1+β)/r'}` on `3 < t < 5`, `t = x − y`.
    MptExample {
        beta: f64,
        r: f64,
    },
    /// [`KernelVariant::MptExample`] restricted to
    /// `∪_{k=0}^{2^{ℓ+1}−1} (3 + k/2^ℓ, 3 + (3k+1)/(3·2^ℓ)]`.
    MptTruncated {
        beta: f64,
        r: f64,
        ell: u32,
    },
    /// `A · S^{−mn} · ω(min(1, |x − p|/S))` with `S = Σ_i |x − y_i|` and anchor `p`.
    DiniSynthetic {
        modulus: Modulus,
        amplitude: f64,
        anchor: Point,
    },
    Custom(CustomKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    m: usize,
    variant: KernelVariant,
}

impl KernelSpec {
    pub fn new(m: usize, variant: KernelVariant) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(Error::param(
                "kernel.m",
                format!("linearity {m} not in 1..=2"),
            ));
        }
        match &variant {
            KernelVariant::BilinearOddHomogeneous if m != 2 => {
                return Err(Error::param(
                    "kernel.m",
                    "BilinearOddHomogeneous is bilinear",
                ));
            }
            KernelVariant::MptExample { beta, r } | KernelVariant::MptTruncated { beta, r, .. } => {
                if m != 1 {
                    return Err(Error::param("kernel.m", "MPT kernels are linear"));
                }
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::param("kernel.beta", "must be positive"));
                }
                if !(*r >= 1.0 && r.is_finite()) {
                    return Err(Error::param("kernel.r", "must be ≥ 1"));
                }
            }
            KernelVariant::DiniSynthetic {
                modulus, amplitude, ..
            } => {
                modulus.validate()?;
                if !amplitude.is_finite() {
                    return Err(Error::param("kernel.amplitude", "must be finite"));
                }
            }
            _ => {}
        }
        Ok(KernelSpec { m, variant })
    }

    pub fn bilinear_odd() -> Self {
        KernelSpec {
            m: 2,
            variant: KernelVariant::BilinearOddHomogeneous,
        }
    }

    pub fn mpt(beta: f64, r: f64) -> Result<Self> {
        KernelSpec::new(1, KernelVariant::MptExample { beta, r })
    }

    pub fn mpt_truncated(beta: f64, r: f64, ell: u32) -> Result<Self> {
        KernelSpec::new(1, KernelVariant::MptTruncated { beta, r, ell })
    }

    pub fn dini(m: usize, modulus: Modulus, amplitude: f64, anchor: Point) -> Result<Self> {
        KernelSpec::new(
            m,
            KernelVariant::DiniSynthetic {
                modulus,
                amplitude,
                anchor,
            },
        )
    }

    pub fn custom(m: usize, kernel: CustomKernel) -> Result<Self> {
        KernelSpec::new(m, KernelVariant::Custom(kernel))
    }

    pub fn named(m: usize, name: &str) -> Result<Self> {
        KernelSpec::custom(m, CustomKernel::named(name)?)
    }

    pub fn zero(m: usize) -> Self {
        KernelSpec {
            m,
            variant: KernelVariant::Custom(CustomKernel::named("zero").expect("built-in")),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn singular_set(&self) -> SingularSet {
        match &self.variant {
            KernelVariant::MptExample { r, .. } | KernelVariant::MptTruncated { r, .. } => {
                if *r > 1.0 {
                    SingularSet::ShiftedDiagonal(4.0)
                } else {
                    SingularSet::None
                }
            }
            KernelVariant::Custom(c) => c.singular,
            _ => SingularSet::Diagonal,
        }
    }

    /// Kernel is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(&self.variant, KernelVariant::Custom(c) if c.vanishes)
    }

    /// `[lo, hi]` such that `K(x, y) = 0` unless `x − y ∈ [lo, hi]` (1-D linear kernels).
    pub fn offset_support(&self) -> Option<(f64, f64)> {
        match &self.variant {
            KernelVariant::MptExample { .. } | KernelVariant::MptTruncated { .. } => {
                Some((3.0, 5.0))
            }
            KernelVariant::Custom(c) => c.offset_support,
            _ => None,
        }
    }

    /// Checks the kernel against the grid dimension.
    pub fn validate_for(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.n();
        let need = match &self.variant {
            KernelVariant::BilinearOddHomogeneous
            | KernelVariant::MptExample { .. }
            | KernelVariant::MptTruncated { .. } => Some(1),
            KernelVariant::Custom(c) => c.dim,
            KernelVariant::DiniSynthetic { .. } => None,
        };
        match need {
            Some(d) if d != n => Err(Error::param(
                "kernel",
                format!("kernel requires dimension {d}, grid has n = {n}"),
            )),
            _ => Ok(()),
        }
    }

    /// Evaluates `K(x, y_1, …, y_m)`; `ys.len()` must equal `m`.
    #[inline]
    pub fn eval(&self, n: usize, x: &Point, ys: &[Point]) -> KernelValue {
        debug_assert_eq!(ys.len(), self.m);
        if self.singular_set().hit(n, x, ys) {
            return KernelValue::Singular;
        }
        let v = match &self.variant {
            KernelVariant::BilinearOddHomogeneous => {
                let a = x[0] - ys[0][0];
                let b = x[0] - ys[1][0];
                let d = a * a + b * b;
                (a + b) / (d * d.sqrt())
            }
            KernelVariant::MptExample { beta, r } => mpt_profile(x[0] - ys[0][0], *beta, *r),
            KernelVariant::MptTruncated { beta, r, ell } => {
                let t = x[0] - ys[0][0];
                if in_truncation(t, *ell) {
                    mpt_profile(t, *beta, *r)
                } else {
                    0.0
                }
            }
            KernelVariant::DiniSynthetic {
                modulus,
                amplitude,
                anchor,
            } => {
                let s: f64 = ys.iter().map(|y| dist(n, x, y)).sum();
                let u = (dist(n, x, anchor) / s).min(1.0);
                amplitude * s.powi(-((self.m * n) as i32)) * modulus.eval(u)
            }
            KernelVariant::Custom(c) => (c.f)(x, ys),
        };
        if v.is_nan() {
            KernelValue::Singular
        } else {
            KernelValue::Finite(v)
        }
    }
}

#[inline]
pub fn dist(n: usize, a: &Point, b: &Point) -> f64 {
    if n == 1 {
        (a[0] - b[0]).abs()
    } else {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

#[inline]
fn mpt_profile(t: f64, beta: f64, r: f64) -> f64 {
    if !(t > 3.0 && t < 5.0) {
        return 0.0;
    }
    let inv_rp = 1.0 - 1.0 / r;
    if inv_rp == 0.0 {
        return 1.0;
    }
    let d = (t - 4.0).abs();
    d.powf(-inv_rp) * (1.0 - d.ln()).powf(-(1.0 + beta) * inv_rp)
}

/// `t ∈ (3 + k/2^ℓ, 3 + (3k+1)/(3·2^ℓ)]` for some `0 ≤ k < 2^{ℓ+1}`.
fn in_truncation(t: f64, ell: u32) -> bool {
    let scale = (1u64 << ell) as f64;
    let u = (t - 3.0) * scale;
    if u <= 0.0 {
        return false;
    }
    let k = u.ceil() - 1.0;
    if k < 0.0 || k >= 2.0 * scale {
        return false;
    }
    // 3·u ≤ 3k + 1 avoids the inexact 1/3.
    3.0 * u <= 3.0 * k + 1.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    variant: String,
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ell: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modulus: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

fn need<T>(v: Option<T>, field: &'static str) -> Result<T> {
    v.ok_or_else(|| Error::param(field, "missing"))
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let variant = match raw.variant.as_str() {
            "BilinearOddHomogeneous" => KernelVariant::BilinearOddHomogeneous,
            "MPTExample" => KernelVariant::MptExample {
                beta: need(raw.beta, "kernel.beta")?,
                r: need(raw.r, "kernel.r")?,
            },
            "MPTTruncated" => KernelVariant::MptTruncated {
                beta: need(raw.beta, "kernel.beta")?,
                r: need(raw.r, "kernel.r")?,
                ell: need(raw.ell, "kernel.ell")?,
            },
            "DiniSynthetic" => {
                let a = raw.anchor.unwrap_or_default();
                if a.len() > 2 {
                    return Err(Error::param("kernel.anchor", "at most 2 coordinates"));
                }
                let mut anchor = [0.0; 2];
                anchor[..a.len()].copy_from_slice(&a);
                KernelVariant::DiniSynthetic {
                    modulus: need(raw.modulus, "kernel.modulus")?,
                    amplitude: raw.amplitude.unwrap_or(1.0),
                    anchor,
                }
            }
            "Custom" => {
                KernelVariant::Custom(CustomKernel::named(&need(raw.name, "kernel.name")?)?)
            }
            other => {
                return Err(Error::param(
                    "kernel.variant",
                    format!("unknown variant `{other}`"),
                ))
            }
        };
        KernelSpec::new(raw.m, variant)
    }
}

impl From<&KernelSpec> for RawKernel {
    fn from(k: &KernelSpec) -> Self {
        let mut raw = RawKernel {
            variant: String::new(),
            m: k.m,
            beta: None,
            r: None,
            ell: None,
            modulus: None,
            amplitude: None,
            anchor: None,
            name: None,
        };
        match &k.variant {
            KernelVariant::BilinearOddHomogeneous => raw.variant = "BilinearOddHomogeneous".into(),
            KernelVariant::MptExample { beta, r } => {
                raw.variant = "MPTExample".into();
                raw.beta = Some(*beta);
                raw.r = Some(*r);
            }
            KernelVariant::MptTruncated { beta, r, ell } => {
                raw.variant = "MPTTruncated".into();
                raw.beta = Some(*beta);
                raw.r = Some(*r);
                raw.ell = Some(*ell);
            }
            KernelVariant::DiniSynthetic {
                modulus,
                amplitude,
                anchor,
            } => {
                raw.variant = "DiniSynthetic".into();
                raw.modulus = Some(*modulus);
                raw.amplitude = Some(*amplitude);
                raw.anchor = Some(anchor.to_vec());
            }
            KernelVariant::Custom(c) => {
                raw.variant = "Custom".into();
                raw.name = Some(c.name.clone());
            }
        }
        raw
    }
}

impl Serialize for KernelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawKernel::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawKernel::deserialize(d)?;
        KernelSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}
