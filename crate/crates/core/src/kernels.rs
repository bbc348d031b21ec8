//! Stationary isotropic covariance functions: squared-exponential (RBF),
//! Matérn ν=3/2 and rational quadratic, each with an additive white-noise
//! term that fires only on bitwise-identical inputs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix, SquareMatrix};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Matern32,
    #[serde(alias = "rq")]
    RationalQuadratic,
}

/// One coordinate of a kernel's parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    /// Output scale `c`.
    Scale,
    /// Length scale `λ`.
    LengthScale,
    /// Noise variance `s²`.
    Noise,
    /// Rational-quadratic shape `α`.
    Shape,
}

impl ParamKind {
    pub fn symbol(self) -> &'static str {
        match self {
            ParamKind::Scale => "c",
            ParamKind::LengthScale => "lambda",
            ParamKind::Noise => "s2",
            ParamKind::Shape => "alpha",
        }
    }
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Rbf,
        KernelFamily::Matern32,
        KernelFamily::RationalQuadratic,
    ];

    /// Parameter layout: `(c, λ, s²)` for RBF and Matérn, `(c, α, λ, s²)` for RQ.
    pub fn layout(self) -> &'static [ParamKind] {
        use ParamKind::*;
        match self {
            KernelFamily::Rbf | KernelFamily::Matern32 => &[Scale, LengthScale, Noise],
            KernelFamily::RationalQuadratic => &[Scale, Shape, LengthScale, Noise],
        }
    }

    pub fn n_params(self) -> usize {
        self.layout().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::RationalQuadratic => "rq",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelFamily::Rbf),
            "matern32" | "matern" | "mat" => Ok(KernelFamily::Matern32),
            "rq" | "rationalquadratic" => Ok(KernelFamily::RationalQuadratic),
            other => Err(Error::Parse(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel parameters in objective/unit-cube units. `alpha` is only read by
/// the rational-quadratic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub c: f64,
    pub lambda: f64,
    pub s2: f64,
    pub alpha: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { c: 1.0, lambda: 0.5, s2: 1e-6, alpha: 1.0 }
    }
}

impl KernelParams {
    pub fn get(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::Scale => self.c,
            ParamKind::LengthScale => self.lambda,
            ParamKind::Noise => self.s2,
            ParamKind::Shape => self.alpha,
        }
    }

    pub fn set(&mut self, kind: ParamKind, value: f64) {
        match kind {
            ParamKind::Scale => self.c = value,
            ParamKind::LengthScale => self.lambda = value,
            ParamKind::Noise => self.s2 = value,
            ParamKind::Shape => self.alpha = value,
        }
    }

    fn validate(&self, family: KernelFamily) -> Result<()> {
        for &kind in family.layout() {
            let v = self.get(kind);
            let ok = v.is_finite()
                && match kind {
                    ParamKind::Noise => v >= 0.0,
                    _ => v > 0.0,
                };
            if !ok {
                return Err(Error::ParameterDomain(format!(
                    "{} = {v} is outside its domain",
                    kind.symbol()
                )));
            }
        }
        Ok(())
    }
}

/// A kernel family, its current parameters, and the optional fixtures that
/// define a restricted likelihood domain. `fixed[t]` pins parameter `t` of
/// the family layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRepr")]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub params: KernelParams,
    pub fixed: Vec<Option<f64>>,
}

/// Input form of [`KernelSpec`]: parameters and fixtures may be omitted.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecRepr {
    family: KernelFamily,
    #[serde(default)]
    params: KernelParams,
    #[serde(default)]
    fixed: Option<Vec<Option<f64>>>,
}

impl TryFrom<KernelSpecRepr> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelSpecRepr) -> Result<Self> {
        let spec = KernelSpec {
            family: r.family,
            params: r.params,
            fixed: r.fixed.unwrap_or_else(|| vec![None; r.family.n_params()]),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl KernelSpec {
    /// Unrestricted spec with default parameters.
    pub fn new(family: KernelFamily) -> Self {
        Self {
            family,
            params: KernelParams::default(),
            fixed: vec![None; family.n_params()],
        }
    }

    pub fn with_params(family: KernelFamily, params: KernelParams) -> Self {
        Self { params, ..Self::new(family) }
    }

    /// Pins layout index `index` to `value`, also writing it into `params`.
    pub fn fix(mut self, index: usize, value: f64) -> Result<Self> {
        let layout = self.family.layout();
        if index >= layout.len() {
            return Err(Error::ParameterDomain(format!(
                "fixture index {index} invalid for {}",
                self.family
            )));
        }
        self.fixed[index] = Some(value);
        self.params.set(layout[index], value);
        self.validate()?;
        Ok(self)
    }

    /// Parameter vector θ in family layout order.
    pub fn theta(&self) -> Vec<f64> {
        self.family.layout().iter().map(|&k| self.params.get(k)).collect()
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        for (&k, &v) in self.family.layout().iter().zip(theta) {
            self.params.set(k, v);
        }
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_some()).count()
    }

    pub fn is_restricted(&self) -> bool {
        self.n_fixed() > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed.len() != self.family.n_params() {
            return Err(Error::ParameterDomain(format!(
                "fixture mask has {} entries, {} expects {}",
                self.fixed.len(),
                self.family,
                self.family.n_params()
            )));
        }
        if self.n_fixed() > 2 {
            return Err(Error::ParameterDomain("at most two parameters may be fixed".into()));
        }
        for (&kind, fixed) in self.family.layout().iter().zip(&self.fixed) {
            if let Some(v) = fixed {
                if *v != self.params.get(kind) {
                    return Err(Error::ParameterDomain(format!(
                        "fixed {} = {v} disagrees with parameter value {}",
                        kind.symbol(),
                        self.params.get(kind)
                    )));
                }
            }
        }
        self.params.validate(self.family)
    }

    /// Short label such as `matern32(lambda=0.316)`.
    pub fn label(&self) -> String {
        let pins: Vec<String> = self
            .family
            .layout()
            .iter()
            .zip(&self.fixed)
            .filter_map(|(k, f)| f.map(|v| format!("{}={v:?}", k.symbol())))
            .collect();
        if pins.is_empty() {
            self.family.name().to_string()
        } else {
            format!("{}({})", self.family.name(), pins.join(","))
        }
    }

    /// Stationary part of the covariance as a function of squared distance.
    #[inline]
    pub(crate) fn stationary(&self, r2: f64) -> f64 {
        let KernelParams { c, lambda, alpha, .. } = self.params;
        match self.family {
            KernelFamily::Rbf => c * (-r2 / (2.0 * lambda * lambda)).exp(),
            KernelFamily::Matern32 => {
                let a = SQRT3 * r2.sqrt() / lambda;
                c * (1.0 + a) * (-a).exp()
            }
            KernelFamily::RationalQuadratic => {
                c * (1.0 + r2 / (2.0 * alpha * lambda * lambda)).powf(-alpha)
            }
        }
    }

    /// Derivatives of the stationary part with respect to the logarithm of
    /// each parameter, in layout order. The noise entry is zero; its
    /// contribution is handled by the caller.
    pub(crate) fn stationary_log_grad(&self, r2: f64, out: &mut [f64]) {
        let KernelParams { c, lambda, alpha, .. } = self.params;
        let l2 = lambda * lambda;
        match self.family {
            KernelFamily::Rbf => {
                let k = c * (-r2 / (2.0 * l2)).exp();
                out[0] = k;
                out[1] = k * r2 / l2;
                out[2] = 0.0;
            }
            KernelFamily::Matern32 => {
                let a = SQRT3 * r2.sqrt() / lambda;
                let e = (-a).exp();
                out[0] = c * (1.0 + a) * e;
                out[1] = c * a * a * e;
                out[2] = 0.0;
            }
            KernelFamily::RationalQuadratic => {
                let b = r2 / (2.0 * alpha * l2);
                let base = 1.0 + b;
                let k = c * base.powf(-alpha);
                out[0] = k;
                out[1] = k * alpha * (b / base - base.ln());
                out[2] = c * (r2 / l2) * base.powf(-alpha - 1.0);
                out[3] = 0.0;
            }
        }
    }

    /// Layout index of the noise parameter.
    pub(crate) fn noise_index(&self) -> usize {
        self.family.n_params() - 1
    }
}

#[inline]
fn bitwise_equal(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits())
}

#[inline]
pub(crate) fn eval_unchecked(spec: &KernelSpec, u: &[f64], v: &[f64]) -> f64 {
    let k = spec.stationary(sq_dist(u, v));
    if bitwise_equal(u, v) {
        k + spec.params.s2
    } else {
        k
    }
}

/// Covariance between `u` and `v`.
pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    spec.params.validate(spec.family)?;
    Ok(eval_unchecked(spec, u, v))
}

/// Gram matrix over the rows of `x`; exactly symmetric. The noise term is
/// attached to each observation, so it lands on the diagonal only, even when
/// two rows hold identical coordinates.
pub fn kernel_matrix(spec: &KernelSpec, x: &Matrix) -> Result<SquareMatrix> {
    spec.params.validate(spec.family)?;
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidInput("empty design matrix".into()));
    }
    let n = x.rows();
    let mut k = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..i {
            let v = spec.stationary(sq_dist(x.row(i), x.row(j)));
            k.set(i, j, v);
            k.set(j, i, v);
        }
        k.set(i, i, spec.params.c + spec.params.s2);
    }
    Ok(k)
}

/// Cross-covariance vector `κ(x, x_j)` over the rows of `design`.
pub fn kernel_vector(spec: &KernelSpec, x: &[f64], design: &Matrix) -> Result<Vec<f64>> {
    if x.len() != design.cols() {
        return Err(Error::DimensionMismatch { expected: design.cols(), found: x.len() });
    }
    spec.params.validate(spec.family)?;
    Ok(design.iter_rows().map(|r| eval_unchecked(spec, x, r)).collect())
}
