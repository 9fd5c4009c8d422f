//! Dense autoregressive kernel.
//!
//! Values are carried in the log domain: `log k` for the kernel itself and
//! `φ = C + (1-α)·log|XᵀX + Δ⁻¹| + α·log|XᵀX + YᵀY + Δ⁻¹|` for its negative
//! definite counterpart. The two are related by `φ = -(2/d)·log k + 2C`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{add_diagonal, add_identity, cholesky, logdet_from_cholesky, logdet_spd_owned};
use crate::series::{build_lagged, delta_weights, pair_constant, TimeSeries};

/// Which determinant formulation evaluates the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPath {
    /// Pick the cheaper formulation from the operation-count estimates.
    #[default]
    Auto,
    /// `N × N` Gram determinants; cheap for short, high-dimensional series.
    Gram,
    /// `pd × pd` and `d × d` covariance determinants; cheap for long, low-dimensional series.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArParams {
    pub p: usize,
    /// `α = (1+λ)/d`, restricted to `(0, 1]`.
    pub alpha: f64,
    pub path: EvalPath,
}

impl Default for ArParams {
    fn default() -> Self {
        Self { p: 5, alpha: 0.5, path: EvalPath::Auto }
    }
}

impl ArParams {
    pub fn new(p: usize, alpha: f64) -> Result<Self> {
        let params = Self { p, alpha, path: EvalPath::Auto };
        params.validate()?;
        Ok(params)
    }

    pub fn with_path(mut self, path: EvalPath) -> Self {
        self.path = path;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("lag order must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Inverse-Wishart degrees of freedom `λ = αd - 1`.
    pub fn lambda(&self, d: usize) -> f64 {
        self.alpha * d as f64 - 1.0
    }

    fn resolve(&self, d: usize, n_total: usize) -> EvalPath {
        match self.path {
            EvalPath::Auto => {
                let (p, d, n) = (self.p as f64, d as f64, n_total as f64);
                let variance = n * p * p * d * d + (p * p * p + 1.0) * d * d * d;
                let gram = (p + 1.0) * d * n * n + n * n * n;
                if gram <= variance {
                    EvalPath::Gram
                } else {
                    EvalPath::Variance
                }
            }
            fixed => fixed,
        }
    }
}

/// Joint lagged matrices and weights for a pair of series.
#[derive(Debug, Clone)]
pub struct PairContext {
    /// `[X₁ X₂]`, `pd × N`.
    pub x: DMatrix<f64>,
    /// `[Y₁ Y₂]`, `d × N`.
    pub y: DMatrix<f64>,
    /// Diagonal of `Δ`, length `N`.
    pub delta: Vec<f64>,
    /// `C_{n,n'} = -log|Δ|`.
    pub constant: f64,
}

impl PairContext {
    pub fn new(a: &TimeSeries, b: &TimeSeries, p: usize) -> Result<Self> {
        check_pair(a, b)?;
        let la = build_lagged(a, p)?;
        let lb = build_lagged(b, p)?;
        let delta = delta_weights(a.len(), b.len(), p)?;
        let constant = pair_constant(a.len(), b.len(), p)?;
        let n = delta.len();
        let mut x = DMatrix::zeros(la.x.nrows(), n);
        x.columns_mut(0, la.samples()).copy_from(&la.x);
        x.columns_mut(la.samples(), lb.samples()).copy_from(&lb.x);
        let mut y = DMatrix::zeros(la.y.nrows(), n);
        y.columns_mut(0, la.samples()).copy_from(&la.y);
        y.columns_mut(la.samples(), lb.samples()).copy_from(&lb.y);
        Ok(Self { x, y, delta, constant })
    }

    pub fn samples(&self) -> usize {
        self.delta.len()
    }
}

pub(crate) fn check_pair(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// Linear Gram matrices `XᵀX` and `YᵀY` of the joint lagged design, assembled
/// from the observation Gram matrix by summing along lag diagonals.
pub(crate) fn linear_grams(
    a: &TimeSeries,
    b: &TimeSeries,
    p: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_pair(a, b)?;
    let (n, m) = (a.len(), b.len());
    if n <= p || m <= p {
        return Err(Error::SeriesTooShort { len: n.min(m), p });
    }
    let mut z = DMatrix::zeros(a.dim(), n + m);
    z.columns_mut(0, n).copy_from(a.values());
    z.columns_mut(n, m).copy_from(b.values());
    let obs = z.tr_mul(&z);
    let starts: Vec<usize> = (0..n - p).chain(n..n + m - p).collect();
    let size = starts.len();
    let mut kx = DMatrix::zeros(size, size);
    let mut ky = DMatrix::zeros(size, size);
    for (i, &si) in starts.iter().enumerate() {
        for (j, &sj) in starts.iter().enumerate().skip(i) {
            let sx: f64 = (0..p).map(|l| obs[(si + l, sj + l)]).sum();
            let sy = obs[(si + p, sj + p)];
            kx[(i, j)] = sx;
            kx[(j, i)] = sx;
            ky[(i, j)] = sy;
            ky[(j, i)] = sy;
        }
    }
    Ok((kx, ky))
}

/// `f(Q, R) = (1-α)·log|Q + Δ⁻¹| + α·log|R + Δ⁻¹|` for PSD `Q`, `R`.
pub fn f_value(q: &DMatrix<f64>, r: &DMatrix<f64>, delta: &[f64], alpha: f64) -> Result<f64> {
    let g = |m: &DMatrix<f64>| -> Result<f64> {
        let mut m = m.clone();
        add_diagonal(&mut m, delta.iter().map(|w| 1.0 / w));
        logdet_spd_owned(m)
    };
    let mut value = alpha * g(r)?;
    if alpha < 1.0 {
        value += (1.0 - alpha) * g(q)?;
    }
    Ok(value)
}

fn phi_gram(a: &TimeSeries, b: &TimeSeries, params: &ArParams) -> Result<f64> {
    let (kx, ky) = linear_grams(a, b, params.p)?;
    let delta = delta_weights(a.len(), b.len(), params.p)?;
    let c = pair_constant(a.len(), b.len(), params.p)?;
    let kxy = &kx + &ky;
    Ok(c + f_value(&kx, &kxy, &delta, params.alpha)?)
}

/// `φ(x, x')`, the autoregressive dissimilarity (minus the log of the kernel).
pub fn phi_ar(a: &TimeSeries, b: &TimeSeries, params: &ArParams) -> Result<f64> {
    params.validate()?;
    check_pair(a, b)?;
    let n_total = a.len().saturating_sub(params.p) + b.len().saturating_sub(params.p);
    match params.resolve(a.dim(), n_total) {
        EvalPath::Variance => {
            let log_k = k_ar_variance(a, b, params)?;
            let c = pair_constant(a.len(), b.len(), params.p)?;
            Ok(-2.0 / a.dim() as f64 * log_k + 2.0 * c)
        }
        _ => phi_gram(a, b, params),
    }
}

/// `log k(x, x')` through the `pd × pd` and `d × d` covariance determinants.
pub fn k_ar_variance(a: &TimeSeries, b: &TimeSeries, params: &ArParams) -> Result<f64> {
    params.validate()?;
    let ctx = PairContext::new(a, b, params.p)?;
    let d = a.dim() as f64;
    // XΔ, then S = XΔXᵀ + I.
    let mut x_delta = ctx.x.clone();
    for (mut col, w) in x_delta.column_iter_mut().zip(&ctx.delta) {
        col *= *w;
    }
    let mut s = &x_delta * ctx.x.transpose();
    add_identity(&mut s);
    let chol = cholesky(s)?;
    let logdet_s = logdet_from_cholesky(&chol);

    // YΔYᵀ - YΔXᵀ S⁻¹ XΔYᵀ + I = YΔYᵀ - VᵀV + I with V = L⁻¹ XΔYᵀ.
    let mut y_delta = ctx.y.clone();
    for (mut col, w) in y_delta.column_iter_mut().zip(&ctx.delta) {
        col *= *w;
    }
    let cross = &x_delta * ctx.y.transpose();
    let v = chol
        .l_dirty()
        .solve_lower_triangular(&cross)
        .ok_or(Error::NotPositiveDefinite)?;
    let mut residual = &y_delta * ctx.y.transpose() - v.tr_mul(&v);
    add_identity(&mut residual);
    let logdet_r = logdet_spd_owned(residual)?;

    let exponent = (1.0 + params.lambda(a.dim())) / 2.0;
    Ok(-d / 2.0 * logdet_s - exponent * logdet_r)
}

/// `log k(x, x')` through the `N × N` Gram determinants.
pub fn k_ar_gram(a: &TimeSeries, b: &TimeSeries, params: &ArParams) -> Result<f64> {
    params.validate()?;
    let phi = phi_gram(a, b, params)?;
    let c = pair_constant(a.len(), b.len(), params.p)?;
    Ok(-(a.dim() as f64) / 2.0 * (phi - 2.0 * c))
}

/// `exp(-φ/t)`.
pub fn exp_kernel(phi: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    Ok((-phi / bandwidth).exp())
}

/// Squared Hilbertian distance `φ(x,x') - (φ(x,x) + φ(x',x'))/2` induced by
/// `phi` wherever it is negative definite.
///
/// The length constants in `φ` are additively separable, so they cancel here
/// and the result equals the one computed from `-(2/d)·log k`.
pub fn hilbert_dist_sq<F>(a: &TimeSeries, b: &TimeSeries, phi: F) -> Result<f64>
where
    F: Fn(&TimeSeries, &TimeSeries) -> Result<f64>,
{
    Ok(phi(a, b)? - 0.5 * (phi(a, a)? + phi(b, b)?))
}

/// `φ` as a [`PairEvaluator`](crate::gram::PairEvaluator).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ar {
    pub params: ArParams,
}

impl crate::gram::PairEvaluator for Ar {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        phi_ar(a, b, &self.params)
    }

    fn meta(&self) -> crate::gram::KernelMeta {
        crate::gram::KernelMeta {
            kernel: "ar".into(),
            p: self.params.p,
            alpha: self.params.alpha,
            bandwidth: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_series(rng: &mut ChaCha8Rng, d: usize, n: usize) -> TimeSeries {
        TimeSeries::new(DMatrix::from_fn(d, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn gram_direct(ctx: &PairContext) -> (DMatrix<f64>, DMatrix<f64>) {
        (ctx.x.tr_mul(&ctx.x), ctx.y.tr_mul(&ctx.y))
    }

    #[test]
    fn zero_series_phi() {
        let params = ArParams::new(3, 0.5).unwrap();
        let z = TimeSeries::new(DMatrix::zeros(2, 4)).unwrap();
        for path in [EvalPath::Gram, EvalPath::Variance] {
            let phi = phi_ar(&z, &z, &params.with_path(path)).unwrap();
            assert_relative_eq!(phi, 4.0 * 2f64.ln(), max_relative = 1e-14);
        }
        assert_eq!(k_ar_variance(&z, &z, &params).unwrap(), 0.0);
        assert_relative_eq!(k_ar_gram(&z, &z, &params).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_grams_match_lagged_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in 1..4 {
            let a = random_series(&mut rng, 3, p + 4);
            let b = random_series(&mut rng, 3, p + 7);
            let ctx = PairContext::new(&a, &b, p).unwrap();
            let (kx, ky) = linear_grams(&a, &b, p).unwrap();
            let (dx, dy) = gram_direct(&ctx);
            assert!((kx - dx).amax() < 1e-12);
            assert!((ky - dy).amax() < 1e-12);
        }
    }

    #[test]
    fn formulations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ArParams::new(1, 0.5).unwrap();
        let a = random_series(&mut rng, 2, 3);
        let b = random_series(&mut rng, 2, 4);
        let var = k_ar_variance(&a, &b, &params).unwrap();
        let gram = k_ar_gram(&a, &b, &params).unwrap();
        assert_relative_eq!(var, gram, max_relative = 1e-8);
        let c = pair_constant(3, 4, 1).unwrap();
        let phi = phi_ar(&a, &b, &params.with_path(EvalPath::Gram)).unwrap();
        assert_relative_eq!(phi, -2.0 / 2.0 * var + 2.0 * c, max_relative = 1e-8);
        assert!((-(2.0 / 2.0) * gram - (phi - 2.0 * c)).abs() < 1e-10);
    }

    #[test]
    fn symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ArParams::new(2, 0.7).unwrap();
        for _ in 0..10 {
            let a = random_series(&mut rng, 3, 9);
            let b = random_series(&mut rng, 3, 6);
            for path in [EvalPath::Gram, EvalPath::Variance] {
                let p = params.with_path(path);
                let ab = phi_ar(&a, &b, &p).unwrap();
                let ba = phi_ar(&b, &a, &p).unwrap();
                assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ArParams::new(2, 0.5).unwrap().with_path(EvalPath::Variance);
        let q = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let a = random_series(&mut rng, 3, 8);
        let b = random_series(&mut rng, 3, 7);
        let ra = TimeSeries::new(&q * a.values()).unwrap();
        let rb = TimeSeries::new(&q * b.values()).unwrap();
        let base = k_ar_variance(&a, &b, &params).unwrap();
        let rotated = k_ar_variance(&ra, &rb, &params).unwrap();
        assert!((base - rotated).abs() < 1e-10);
    }

    #[test]
    fn hilbert_distance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ArParams::new(1, 0.5).unwrap();
        let phi = |x: &TimeSeries, y: &TimeSeries| phi_ar(x, y, &params);
        let a = random_series(&mut rng, 2, 6);
        let b = random_series(&mut rng, 2, 9);
        assert!(hilbert_dist_sq(&a, &a, phi).unwrap().abs() < 1e-10);
        let ab = hilbert_dist_sq(&a, &b, phi).unwrap();
        let ba = hilbert_dist_sq(&b, &a, phi).unwrap();
        assert!(ab >= -1e-9);
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn hilbert_distance_ignores_constants() {
        // Same combination from -(2/d) log k: the 2C terms cancel.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = ArParams::new(2, 0.5).unwrap();
        let a = random_series(&mut rng, 2, 6);
        let b = random_series(&mut rng, 2, 11);
        let via_phi =
            hilbert_dist_sq(&a, &b, |x, y| phi_ar(x, y, &params)).unwrap();
        let via_logk =
            hilbert_dist_sq(&a, &b, |x, y| Ok(-k_ar_gram(x, y, &params)? * 2.0 / 2.0)).unwrap();
        assert_relative_eq!(via_phi, via_logk, max_relative = 1e-9, epsilon = 1e-10);
    }

    #[test]
    fn exp_kernel_values() {
        assert_eq!(exp_kernel(0.0, 3.0).unwrap(), 1.0);
        assert_relative_eq!(exp_kernel(2.5, 2.5).unwrap(), (-1f64).exp());
        assert!(exp_kernel(1.0, 1.0).unwrap() > exp_kernel(2.0, 1.0).unwrap());
        assert!(matches!(exp_kernel(1.0, 0.0), Err(Error::NonPositiveBandwidth(_))));
    }

    #[test]
    fn errors() {
        let a = TimeSeries::new(DMatrix::zeros(2, 3)).unwrap();
        let b = TimeSeries::new(DMatrix::zeros(3, 8)).unwrap();
        let params = ArParams::new(2, 0.5).unwrap();
        assert!(matches!(phi_ar(&a, &b, &params), Err(Error::DimensionMismatch(2, 3))));
        assert!(matches!(phi_ar(&a, &a, &ArParams::new(3, 0.5).unwrap()), Err(Error::SeriesTooShort { .. })));
        assert!(ArParams::new(1, 0.0).is_err());
        assert!(ArParams::new(1, 1.2).is_err());
        assert!(ArParams::new(0, 0.5).is_err());
    }

    #[test]
    fn auto_path_choice() {
        let params = ArParams::default();
        assert_eq!(params.resolve(1000, 10), EvalPath::Gram);
        assert_eq!(params.resolve(2, 500), EvalPath::Variance);
    }
}
