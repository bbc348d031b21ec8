//! Gaussian-process regression: posterior prediction and maximum-likelihood
//! fitting over full or restricted parameter domains.
//!
//! Outputs are standardized to zero mean and unit variance before fitting so
//! the zero-mean prior is appropriate; predictions are mapped back to
//! objective units. Kernel parameters therefore live in standardized units.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec, ParamKind};
use crate::linalg::{dot, sq_dist, Cholesky, Matrix, SquareMatrix};

/// Lower/upper bounds of each free parameter during likelihood optimization.
pub fn param_bounds(kind: ParamKind) -> (f64, f64) {
    match kind {
        ParamKind::Scale => (1e-3, 1e3),
        ParamKind::LengthScale => (1e-3, 1e2),
        ParamKind::Noise => (1e-8, 1.0),
        ParamKind::Shape => (1e-2, 1e2),
    }
}

const JITTER_BASE: f64 = 1e-10;
const JITTER_ESCALATIONS: usize = 6;
const MAX_ITERS: usize = 200;
const REL_TOL: f64 = 1e-9;

/// Design of experiments: `N` points in the unit cube with objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct Doe {
    x: Matrix,
    y: Vec<f64>,
}

impl Doe {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidInput("a Doe needs at least one row and one column".into()));
        }
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.rows(), found: y.len() });
        }
        if x.as_slice().iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Doe entries must be finite".into()));
        }
        if x.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("design rows must lie in the unit cube".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Appends one evaluated design.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if !y.is_finite() || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("appended design must be finite and in the unit cube".into()));
        }
        self.x.push_row(x);
        self.y.push(y);
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Doe {
        Doe {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn min_y(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn with_y(&self, y: Vec<f64>) -> Doe {
        Doe { x: self.x.clone(), y }
    }
}

fn mean_std(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 && std.is_finite() {
        (mean, std)
    } else {
        (mean, 1.0)
    }
}

/// Factorizes `K` with escalating diagonal jitter. Returns the factor and the
/// jitter that was needed.
fn factor_with_jitter(k: &SquareMatrix) -> Result<(Cholesky, f64)> {
    if let Some(c) = Cholesky::factor(k, 0.0) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_BASE * k.mean_diag().abs().max(f64::MIN_POSITIVE);
    for _ in 0..=JITTER_ESCALATIONS {
        if let Some(c) = Cholesky::factor(k, jitter) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::IllConditioned { attempts: JITTER_ESCALATIONS + 1 })
}

/// `ln det K + yᵀ K⁻¹ y` for the raw outputs of `doe` (no standardization).
pub fn nll(doe: &Doe, spec: &KernelSpec) -> Result<f64> {
    let k = kernel_matrix(spec, doe.x())?;
    let (chol, _) = factor_with_jitter(&k)?;
    let z = chol.forward(doe.y());
    Ok(chol.log_det() + dot(&z, &z))
}

/// Fitted regressive-predictive distribution.
#[derive(Debug, Clone)]
pub struct Rpd {
    doe: Doe,
    spec: KernelSpec,
    chol: Cholesky,
    alpha: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    jitter: f64,
    nll: f64,
}

impl Rpd {
    /// Conditions the GP on `doe` with the parameters of `spec` held fixed.
    pub fn condition(doe: &Doe, spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        let (y_mean, y_std) = mean_std(doe.y());
        let ys: Vec<f64> = doe.y().iter().map(|v| (v - y_mean) / y_std).collect();
        let sdoe = doe.with_y(ys);
        let k = kernel_matrix(spec, sdoe.x())?;
        let (chol, jitter) = factor_with_jitter(&k)?;
        let z = chol.forward(sdoe.y());
        let nll = chol.log_det() + dot(&z, &z);
        let alpha = chol.backward(&z);
        Ok(Self { doe: sdoe, spec: spec.clone(), chol, alpha, y_mean, y_std, jitter, nll })
    }

    /// Standardized training data.
    pub fn doe(&self) -> &Doe {
        &self.doe
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Objective value reached by the likelihood optimizer (standardized data).
    pub fn nll(&self) -> f64 {
        self.nll
    }

    pub fn dim(&self) -> usize {
        self.doe.dim()
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn alpha_vec(&self) -> &[f64] {
        &self.alpha
    }

    /// Predictive mean and variance in standardized units.
    fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let kx: Vec<f64> = self
            .doe
            .x()
            .iter_rows()
            .map(|r| crate::kernels::eval_unchecked(&self.spec, x, r))
            .collect();
        let mean = dot(&kx, &self.alpha);
        let v = self.chol.forward(&kx);
        let prior = self.spec.params.c + self.spec.params.s2;
        let var = (prior - dot(&v, &v)).max(0.0);
        (mean, var)
    }

    /// Predictive mean and variance at `x`, in objective units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let (m, v) = self.predict_standardized(x);
        Ok((self.y_mean + self.y_std * m, self.y_std * self.y_std * v))
    }
}

/// Same as [`Rpd::predict`], for callers that prefer a free function.
pub fn predict(rpd: &Rpd, x: &[f64]) -> Result<(f64, f64)> {
    rpd.predict(x)
}

/// Likelihood objective over the free log-parameters of a spec.
struct Objective<'a> {
    doe: &'a Doe,
    base: KernelSpec,
    free: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    sq: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(doe: &'a Doe, base: KernelSpec) -> Self {
        let layout = base.family.layout();
        let free: Vec<usize> = (0..layout.len()).filter(|&t| base.fixed[t].is_none()).collect();
        let (lo, hi) = free
            .iter()
            .map(|&t| {
                let (l, h) = param_bounds(layout[t]);
                (l.ln(), h.ln())
            })
            .unzip();
        let n = doe.len();
        let mut sq = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = sq_dist(doe.x().row(i), doe.x().row(j));
                sq[i * n + j] = d;
                sq[j * n + i] = d;
            }
        }
        Self { doe, base, free, lo, hi, sq }
    }

    fn spec_at(&self, z: &[f64]) -> KernelSpec {
        let mut spec = self.base.clone();
        let mut theta = spec.theta();
        for (&t, &v) in self.free.iter().zip(z) {
            theta[t] = v.exp();
        }
        spec.set_theta(&theta);
        spec
    }

    fn gram(&self, spec: &KernelSpec) -> SquareMatrix {
        let n = self.doe.len();
        let mut k = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..i {
                let v = spec.stationary(self.sq[i * n + j]);
                k.set(i, j, v);
                k.set(j, i, v);
            }
            k.set(i, i, spec.params.c + spec.params.s2);
        }
        k
    }

    fn value(&self, z: &[f64]) -> f64 {
        let spec = self.spec_at(z);
        let k = self.gram(&spec);
        match factor_with_jitter(&k) {
            Ok((chol, _)) => {
                let w = chol.forward(self.doe.y());
                chol.log_det() + dot(&w, &w)
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// Value and gradient with respect to the free log-parameters.
    fn value_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let spec = self.spec_at(z);
        let k = self.gram(&spec);
        let Ok((chol, _)) = factor_with_jitter(&k) else {
            return (f64::INFINITY, vec![0.0; z.len()]);
        };
        let w = chol.forward(self.doe.y());
        let f = chol.log_det() + dot(&w, &w);
        let alpha = chol.backward(&w);
        let kinv = chol.inverse();
        let n = self.doe.len();
        let tp = spec.family.n_params();
        let noise = spec.noise_index();
        // d f / d log θ_t = tr(K⁻¹ ∂K) − αᵀ ∂K α, with W = K⁻¹ − α αᵀ
        let mut full = vec![0.0; tp];
        let mut dk = vec![0.0; tp];
        for i in 0..n {
            for j in 0..=i {
                let wij = kinv.get(i, j) - alpha[i] * alpha[j];
                let mult = if i == j { 1.0 } else { 2.0 };
                spec.stationary_log_grad(if i == j { 0.0 } else { self.sq[i * n + j] }, &mut dk);
                for t in 0..tp {
                    if t != noise {
                        full[t] += mult * wij * dk[t];
                    }
                }
                if i == j {
                    full[noise] += wij * spec.params.s2;
                }
            }
        }
        let g = self.free.iter().map(|&t| full[t]).collect();
        (f, g)
    }

    fn project(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Box-constrained quasi-Newton descent (projected BFGS with Armijo
/// backtracking). Every accepted step lowers the objective.
fn minimize(obj: &Objective, mut z: Vec<f64>) -> (Vec<f64>, f64) {
    let m = z.len();
    obj.project(&mut z);
    let (mut f, mut g) = obj.value_grad(&z);
    if !f.is_finite() {
        return (z, f);
    }
    let mut h = identity(m);
    for _ in 0..MAX_ITERS {
        let active: Vec<bool> = (0..m)
            .map(|i| (z[i] <= obj.lo[i] && g[i] > 0.0) || (z[i] >= obj.hi[i] && g[i] < 0.0))
            .collect();
        let mut d = vec![0.0; m];
        for i in 0..m {
            if active[i] {
                continue;
            }
            d[i] = -(0..m).filter(|&j| !active[j]).map(|j| h[i * m + j] * g[j]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            h = identity(m);
            for i in 0..m {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
        }
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if dmax == 0.0 {
            break;
        }
        // cap the trial step at 3 log-units per coordinate
        let mut t = (3.0 / dmax).min(1.0);
        let mut accepted = None;
        for _ in 0..40 {
            let mut zn: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            obj.project(&mut zn);
            let step: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if decrease < 0.0 {
                let fnew = obj.value(&zn);
                if fnew <= f + 1e-4 * decrease {
                    accepted = Some((zn, fnew, step));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((zn, fnew, s)) = accepted else { break };
        let (fcheck, gn) = obj.value_grad(&zn);
        debug_assert!((fcheck - fnew).abs() <= 1e-9 * fnew.abs().max(1.0) || !fcheck.is_finite());
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &yv, sy);
        }
        let rel = (f - fnew).abs() / f.abs().max(1.0);
        z = zn;
        f = fnew;
        g = gn;
        if rel < REL_TOL {
            break;
        }
    }
    (z, f)
}

fn identity(m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        h[i * m + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let m = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..m).map(|i| (0..m).map(|j| h[i * m + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..m {
        for j in 0..m {
            h[i * m + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Maximum-likelihood fit of `spec` to `doe` over its free parameters.
///
/// The first start is the spec's current parameters (clamped into the
/// bounds); the remaining `restarts - 1` starts are drawn log-uniformly
/// within the bounds. Fixed parameters are returned unchanged.
pub fn fit_mle<R: Rng + ?Sized>(doe: &Doe, spec: &KernelSpec, restarts: usize, rng: &mut R) -> Result<Rpd> {
    spec.validate()?;
    let (y_mean, y_std) = mean_std(doe.y());
    let sdoe = doe.with_y(doe.y().iter().map(|v| (v - y_mean) / y_std).collect());
    let obj = Objective::new(&sdoe, spec.clone());
    if obj.free.is_empty() {
        return Rpd::condition(doe, spec);
    }
    let layout = spec.family.layout();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..restarts.max(1) {
        let z0: Vec<f64> = if r == 0 {
            obj.free.iter().map(|&t| spec.params.get(layout[t]).ln()).collect()
        } else {
            (0..obj.free.len()).map(|i| rng.gen_range(obj.lo[i]..obj.hi[i])).collect()
        };
        let (z, f) = minimize(&obj, z0);
        if f.is_finite() && best.as_ref().map_or(true, |(_, bf)| f < *bf) {
            best = Some((z, f));
        }
    }
    let Some((z, _)) = best else {
        return Err(Error::IllConditioned { attempts: JITTER_ESCALATIONS + 1 });
    };
    let fitted = obj.spec_at(&z);
    Rpd::condition(doe, &fitted)
}
