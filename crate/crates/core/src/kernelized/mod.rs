//! Autoregressive kernel over arbitrary base kernels.
//!
//! `φ_κ(x, x') = C + f(K₁, K₁ + K₂)` where `K₁` is the base-kernel Gram matrix of
//! all lag windows of both series and `K₂` that of all responses. The low-rank
//! path replaces both Gram matrices by incomplete Cholesky factors `G ⪯ K`,
//! which can only underestimate `φ_κ` because `f` is increasing.

mod base;
mod cholesky;

use std::cell::Cell;
use std::collections::HashMap;

use nalgebra::DMatrix;

pub use base::{
    median_sigma_sq, median_sigma_sq_floored, Arity, BaseKernel, BaseKernelSpec, SIGMA_SQ_FLOOR,
};
pub use cholesky::{dense_oracle, incomplete_cholesky, LowRankFactor, PivotedCholesky, StopReason};

use crate::ar::{f_value, PairContext};
use crate::error::{Error, Result};
use crate::gram::{KernelMeta, PairEvaluator};
use crate::linalg::{add_diagonal, add_identity, logdet_spd_owned};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelizedParams {
    pub p: usize,
    pub alpha: f64,
    /// Applied to flattened `pd` windows.
    pub kappa1: BaseKernel,
    /// Applied to single observations.
    pub kappa2: BaseKernel,
}

impl KernelizedParams {
    /// Gaussian bases sharing one `σ²`.
    pub fn gaussian(p: usize, alpha: f64, sigma_sq: f64) -> Self {
        let k = BaseKernel::Gaussian { sigma_sq };
        Self { p, alpha, kappa1: k, kappa2: k }
    }

    pub fn linear(p: usize, alpha: f64) -> Self {
        Self { p, alpha, kappa1: BaseKernel::Linear, kappa2: BaseKernel::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        crate::ar::ArParams::new(self.p, self.alpha)?;
        self.kappa1.validate()?;
        self.kappa2.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxConfig {
    /// Target ratio tolerance on `exp(-φ/t)`.
    pub tau: f64,
    /// Bandwidth `t` of the kernel `exp(-φ/t)` the tolerance refers to.
    pub bandwidth: f64,
    pub max_rank: Option<usize>,
}

impl ApproxConfig {
    pub fn new(tau: f64, bandwidth: f64) -> Result<Self> {
        let cfg = Self { tau, bandwidth, max_rank: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::NonPositiveBandwidth(self.bandwidth));
        }
        Ok(())
    }
}

/// Windows, responses and weights for one pair, with a counted κ₁ oracle.
pub struct PairSample {
    ctx: PairContext,
    params: KernelizedParams,
    kappa1_evals: Cell<usize>,
}

impl PairSample {
    pub fn new(a: &TimeSeries, b: &TimeSeries, params: KernelizedParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { ctx: PairContext::new(a, b, params.p)?, params, kappa1_evals: Cell::new(0) })
    }

    pub fn size(&self) -> usize {
        self.ctx.samples()
    }

    pub fn delta(&self) -> &[f64] {
        &self.ctx.delta
    }

    pub fn constant(&self) -> f64 {
        self.ctx.constant
    }

    /// Number of lagged samples contributed by each series.
    pub fn halves(&self) -> (usize, usize) {
        let first = self.ctx.delta.iter().take_while(|&&w| w == self.ctx.delta[0]).count();
        // Equal-length pairs share one weight value.
        if first == self.size() {
            (first / 2, first / 2)
        } else {
            (first, self.size() - first)
        }
    }

    pub fn kappa1_evals(&self) -> usize {
        self.kappa1_evals.get()
    }

    fn k1(&self, i: usize, j: usize) -> f64 {
        self.kappa1_evals.set(self.kappa1_evals.get() + 1);
        self.params.kappa1.eval_unchecked(self.ctx.x.column(i).iter(), self.ctx.x.column(j).iter())
    }

    fn k2(&self, i: usize, j: usize) -> f64 {
        self.params.kappa2.eval_unchecked(self.ctx.y.column(i).iter(), self.ctx.y.column(j).iter())
    }

    pub fn k1_column(&self, i: usize) -> Vec<f64> {
        (0..self.size()).map(|j| self.k1(i, j)).collect()
    }

    pub fn k2_column(&self, i: usize) -> Vec<f64> {
        (0..self.size()).map(|j| self.k2(i, j)).collect()
    }

    pub fn k1_diag(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.k1(i, i)).collect()
    }

    pub fn k2_diag(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.k2(i, i)).collect()
    }

    /// Full `K₁` and `K₂`, built from individual base-kernel evaluations.
    pub fn dense_grams(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.size();
        let mut k1 = DMatrix::zeros(n, n);
        let mut k2 = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let (a, b) = (self.k1(i, j), self.k2(i, j));
                k1[(i, j)] = a;
                k1[(j, i)] = a;
                k2[(i, j)] = b;
                k2[(j, i)] = b;
            }
        }
        (k1, k2)
    }

    /// `C + f(K₁, K₁ + K₂)` with dense Gram matrices.
    pub fn phi_dense(&self) -> Result<f64> {
        let (k1, k2) = self.dense_grams();
        let k12 = &k1 + &k2;
        Ok(self.constant() + f_value(&k1, &k12, self.delta(), self.params.alpha)?)
    }
}

pub fn phi_kappa_dense(a: &TimeSeries, b: &TimeSeries, params: KernelizedParams) -> Result<f64> {
    PairSample::new(a, b, params)?.phi_dense()
}

/// `log|g·gᵀ + Δ⁻¹| = log|Δ⁻¹| + log|I_m + gᵀΔg|`.
pub fn logdet_lowrank(g: &DMatrix<f64>, delta: &[f64]) -> Result<f64> {
    if g.nrows() != delta.len() {
        return Err(Error::ShapeMismatch { expected: delta.len(), got: g.nrows() });
    }
    let log_det_inv: f64 = -delta.iter().map(|w| w.ln()).sum::<f64>();
    if g.ncols() == 0 {
        return Ok(log_det_inv);
    }
    let mut weighted = g.clone();
    for (mut row, w) in weighted.row_iter_mut().zip(delta) {
        row *= w.sqrt();
    }
    let mut inner = weighted.tr_mul(&weighted);
    add_identity(&mut inner);
    Ok(log_det_inv + logdet_spd_owned(inner)?)
}

/// `C + f(g₁g₁ᵀ, g₂g₂ᵀ)` through the determinant lemma.
pub fn f_lowrank(
    g1: &DMatrix<f64>,
    g2: &DMatrix<f64>,
    delta: &[f64],
    alpha: f64,
) -> Result<f64> {
    let mut value = alpha * logdet_lowrank(g2, delta)?;
    if alpha < 1.0 {
        value += (1.0 - alpha) * logdet_lowrank(g1, delta)?;
    }
    Ok(value)
}

/// Result of factorizing `K₁` and `K₁ + K₂` for one pair.
#[derive(Debug, Clone)]
pub struct TwoFactors {
    pub first: LowRankFactor,
    pub second: LowRankFactor,
    /// Number of κ₁ entries evaluated across both runs, diagonals included.
    pub kappa1_evals: usize,
}

/// Factorizes `K₁` then `K₁ + K₂`. With `share_cache`, κ₁ columns computed for
/// the first run are reused by the second.
pub fn two_factorizations(
    sample: &PairSample,
    thresholds: (f64, f64),
    max_rank: Option<usize>,
    share_cache: bool,
) -> Result<TwoFactors> {
    let start = sample.kappa1_evals();
    let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let k1_diag = sample.k1_diag();

    let first = incomplete_cholesky(
        |i| {
            let col = sample.k1_column(i);
            if share_cache {
                cache.insert(i, col.clone());
            }
            col
        },
        k1_diag.clone(),
        thresholds.0,
        max_rank,
    )?;

    let diag2: Vec<f64> = if share_cache {
        k1_diag.iter().zip(sample.k2_diag()).map(|(a, b)| a + b).collect()
    } else {
        sample.k1_diag().iter().zip(sample.k2_diag()).map(|(a, b)| a + b).collect()
    };
    let second = incomplete_cholesky(
        |i| {
            let k1 = match cache.get(&i) {
                Some(col) => col.clone(),
                None => {
                    let col = sample.k1_column(i);
                    if share_cache {
                        cache.insert(i, col.clone());
                    }
                    col
                }
            };
            k1.into_iter().zip(sample.k2_column(i)).map(|(a, b)| a + b).collect()
        },
        diag2,
        thresholds.1,
        max_rank,
    )?;
    Ok(TwoFactors { first, second, kappa1_evals: sample.kappa1_evals() - start })
}

/// Residual-trace thresholds for the two factorizations such that
/// `exp(-approx/t) ≤ (1+τ)·exp(-φ_κ/t)`.
///
/// Uses `‖(G + Δ⁻¹)⁻¹‖_F ≤ ‖Δ‖_F = ½·sqrt(N/((n-p)(n'-p)))` and splits the
/// budget `2·t·log(1+τ)·sqrt((n-p)(n'-p)/N)` evenly between the two terms.
pub fn stopping_thresholds(halves: (usize, usize), alpha: f64, cfg: &ApproxConfig) -> (f64, f64) {
    let (a, b) = (halves.0 as f64, halves.1 as f64);
    let scale = cfg.bandwidth * cfg.tau.ln_1p() * (a * b / (a + b)).sqrt();
    let first = if alpha < 1.0 { scale / (1.0 - alpha) } else { f64::INFINITY };
    (first, scale / alpha)
}

/// Upper bound on `exp((φ_κ - approx)/t) - 1` from residual traces and `‖Δ‖_F`.
pub fn simplified_ratio_bound(
    halves: (usize, usize),
    alpha: f64,
    residuals: (f64, f64),
    bandwidth: f64,
) -> f64 {
    let (a, b) = (halves.0 as f64, halves.1 as f64);
    let delta_norm = 0.5 * ((a + b) / (a * b)).sqrt();
    (delta_norm * ((1.0 - alpha) * residuals.0 + alpha * residuals.1) / bandwidth).exp_m1()
}

/// Tighter bound using the actual gradients `(G + Δ⁻¹)⁻¹` at the final factors.
pub fn gradient_ratio_bound(
    factors: &TwoFactors,
    delta: &[f64],
    alpha: f64,
    bandwidth: f64,
) -> Result<f64> {
    let grad_norm = |g: &DMatrix<f64>| -> Result<f64> {
        let mut m = g * g.transpose();
        add_diagonal(&mut m, delta.iter().map(|w| 1.0 / w));
        let inv = crate::linalg::cholesky(m)?.inverse();
        Ok(inv.norm())
    };
    let e1 = if alpha < 1.0 {
        (1.0 - alpha) * grad_norm(&factors.first.g)? * factors.first.residual_trace
    } else {
        0.0
    };
    let e2 = alpha * grad_norm(&factors.second.g)? * factors.second.residual_trace;
    Ok(((e1 + e2) / bandwidth).exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankDiagnostics {
    pub ranks: (usize, usize),
    pub residual_traces: (f64, f64),
    pub thresholds: (f64, f64),
    pub kappa1_evals: usize,
    pub rank_cap_reached: bool,
    /// Guaranteed ratio bound implied by the achieved residuals.
    pub ratio_bound: f64,
}

impl LowRankDiagnostics {
    pub fn to_lines(&self) -> String {
        format!(
            "rank1={}\nrank2={}\nresidual_trace1={:e}\nresidual_trace2={:e}\nthreshold1={:e}\nthreshold2={:e}\nkappa1_evals={}\nrank_cap_reached={}\nratio_bound={:e}\n",
            self.ranks.0,
            self.ranks.1,
            self.residual_traces.0,
            self.residual_traces.1,
            self.thresholds.0,
            self.thresholds.1,
            self.kappa1_evals,
            self.rank_cap_reached,
            self.ratio_bound,
        )
    }
}

/// Low-rank approximation of `φ_κ` with early stopping tied to `cfg`.
pub fn phi_kappa_lowrank(
    a: &TimeSeries,
    b: &TimeSeries,
    params: KernelizedParams,
    cfg: &ApproxConfig,
) -> Result<(f64, LowRankDiagnostics)> {
    cfg.validate()?;
    let sample = PairSample::new(a, b, params)?;
    let halves = sample.halves();
    let thresholds = stopping_thresholds(halves, params.alpha, cfg);
    let factors = two_factorizations(&sample, thresholds, cfg.max_rank, true)?;
    let value = sample.constant()
        + f_lowrank(&factors.first.g, &factors.second.g, sample.delta(), params.alpha)?;
    let residual_traces = (factors.first.residual_trace, factors.second.residual_trace);
    let rank_cap_reached =
        factors.first.stop == StopReason::RankCap || factors.second.stop == StopReason::RankCap;
    if rank_cap_reached {
        log::debug!("rank cap reached before the stopping thresholds");
    }
    let diagnostics = LowRankDiagnostics {
        ranks: (factors.first.rank(), factors.second.rank()),
        residual_traces,
        thresholds,
        kappa1_evals: factors.kappa1_evals,
        rank_cap_reached,
        ratio_bound: simplified_ratio_bound(halves, params.alpha, residual_traces, cfg.bandwidth),
    };
    Ok((value, diagnostics))
}

/// How [`KernelizedAr`] evaluates pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelizedMode {
    Dense,
    LowRank(ApproxConfig),
}

/// `φ_κ` as a [`PairEvaluator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelizedAr {
    pub params: KernelizedParams,
    pub mode: KernelizedMode,
}

impl PairEvaluator for KernelizedAr {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        match &self.mode {
            KernelizedMode::Dense => phi_kappa_dense(a, b, self.params),
            KernelizedMode::LowRank(cfg) => Ok(phi_kappa_lowrank(a, b, self.params, cfg)?.0),
        }
    }

    fn meta(&self) -> KernelMeta {
        KernelMeta {
            kernel: "ark".into(),
            p: self.params.p,
            alpha: self.params.alpha,
            bandwidth: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{phi_ar, ArParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_series(rng: &mut ChaCha8Rng, d: usize, n: usize) -> TimeSeries {
        TimeSeries::new(DMatrix::from_fn(d, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn linear_base_matches_dense_ar() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let a = random_series(&mut rng, 3, 9);
            let b = random_series(&mut rng, 3, 12);
            let phi = phi_ar(&a, &b, &ArParams::new(2, 0.4).unwrap()).unwrap();
            let phik = phi_kappa_dense(&a, &b, KernelizedParams::linear(2, 0.4)).unwrap();
            assert_relative_eq!(phi, phik, max_relative = 1e-8);
        }
    }

    #[test]
    fn identical_windows_closed_form() {
        // n = n' = p+1, constant series: K₁ = J (all ones), K₂ = J.
        let (p, alpha) = (2, 0.3);
        let x = TimeSeries::univariate(&[1.5, 1.5, 1.5]).unwrap();
        let params = KernelizedParams::gaussian(p, alpha, 0.7);
        let value = phi_kappa_dense(&x, &x, params).unwrap();
        // |J + 2I| = 8 and |2J + 2I| = 12 for 2 × 2 matrices.
        let c = 2.0 * 2f64.ln();
        let expected = c + (1.0 - alpha) * 8f64.ln() + alpha * 12f64.ln();
        assert_relative_eq!(value, expected, max_relative = 1e-14);
    }

    #[test]
    fn hilbert_combination_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = KernelizedParams::gaussian(2, 0.5, 2.0);
        for _ in 0..10 {
            let a = random_series(&mut rng, 2, 8);
            let b = random_series(&mut rng, 2, 6);
            let ab = phi_kappa_dense(&a, &b, params).unwrap();
            let ba = phi_kappa_dense(&b, &a, params).unwrap();
            assert!((ab - ba).abs() < 1e-10);
            let aa = phi_kappa_dense(&a, &a, params).unwrap();
            let bb = phi_kappa_dense(&b, &b, params).unwrap();
            assert!(ab - 0.5 * (aa + bb) >= -1e-9);
        }
    }

    #[test]
    fn logdet_lowrank_examples() {
        let delta = [0.5, 0.5];
        let zero = DMatrix::zeros(2, 0);
        assert_relative_eq!(logdet_lowrank(&zero, &delta).unwrap(), 2.0 * 2f64.ln());
        let g = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_relative_eq!(logdet_lowrank(&g, &delta).unwrap(), 8f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn logdet_lowrank_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let delta: Vec<f64> = (0..9).map(|i| if i < 4 { 0.125 } else { 0.1 }).collect();
        for m in [1, 3, 9] {
            let g = DMatrix::from_fn(9, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut dense = &g * g.transpose();
            add_diagonal(&mut dense, delta.iter().map(|w| 1.0 / w));
            let oracle = crate::linalg::logdet_spd(&dense).unwrap();
            assert_relative_eq!(logdet_lowrank(&g, &delta).unwrap(), oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn halves_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_series(&mut rng, 2, 7);
        let b = random_series(&mut rng, 2, 11);
        let s = PairSample::new(&a, &b, KernelizedParams::linear(2, 0.5)).unwrap();
        assert_eq!(s.halves(), (5, 9));
        let s = PairSample::new(&a, &a, KernelizedParams::linear(2, 0.5)).unwrap();
        assert_eq!(s.halves(), (5, 5));
    }

    #[test]
    fn cache_is_transparent_and_saves_work() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10 {
            let a = random_series(&mut rng, 2, 14);
            let b = random_series(&mut rng, 2, 11);
            let params = KernelizedParams::gaussian(3, 0.5, 1.5);
            let cached_sample = PairSample::new(&a, &b, params).unwrap();
            let plain_sample = PairSample::new(&a, &b, params).unwrap();
            let cached = two_factorizations(&cached_sample, (1e-3, 1e-3), None, true).unwrap();
            let plain = two_factorizations(&plain_sample, (1e-3, 1e-3), None, false).unwrap();
            assert_eq!(cached.first, plain.first);
            assert_eq!(cached.second, plain.second);
            let overlap = cached.first.pivots.iter().any(|p| cached.second.pivots.contains(p));
            if overlap {
                assert!(cached.kappa1_evals < plain.kappa1_evals);
            }
        }
    }

    #[test]
    fn zero_thresholds_reconstruct_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let a = random_series(&mut rng, 2, 9);
        let b = random_series(&mut rng, 2, 8);
        let s = PairSample::new(&a, &b, KernelizedParams::gaussian(2, 0.5, 3.0)).unwrap();
        let (k1, k2) = s.dense_grams();
        let f = two_factorizations(&s, (0.0, 0.0), None, true).unwrap();
        assert!((&k1 - f.first.reconstruct()).norm() <= 1e-10 * k1.norm());
        let k12 = &k1 + &k2;
        assert!((&k12 - f.second.reconstruct()).norm() <= 1e-10 * k12.norm());
    }

    #[test]
    fn lowrank_underestimates_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let params = KernelizedParams::gaussian(2, 0.5, 2.0);
        for _ in 0..10 {
            let a = random_series(&mut rng, 2, 15);
            let b = random_series(&mut rng, 2, 12);
            let dense = phi_kappa_dense(&a, &b, params).unwrap();
            let (approx, diag) =
                phi_kappa_lowrank(&a, &b, params, &ApproxConfig::new(1e-2, 1.0).unwrap()).unwrap();
            assert!(approx <= dense + 1e-10);
            assert!(diag.residual_traces.0 <= diag.thresholds.0);
            assert!(diag.residual_traces.1 <= diag.thresholds.1);
            assert!(((dense - approx) / 1.0).exp() <= 1.0 + 1e-2 + 1e-9);
            let (tight, _) = phi_kappa_lowrank(
                &a,
                &b,
                params,
                &ApproxConfig::new(1e-300, 1.0).unwrap(),
            )
            .unwrap();
            assert!((tight - dense).abs() <= 1e-8 * dense.abs());
        }
    }

    #[test]
    fn rank_cap_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let a = random_series(&mut rng, 2, 15);
        let b = random_series(&mut rng, 2, 15);
        let cfg = ApproxConfig { tau: 1e-12, bandwidth: 1.0, max_rank: Some(2) };
        let (_, diag) =
            phi_kappa_lowrank(&a, &b, KernelizedParams::gaussian(2, 0.5, 1.0), &cfg).unwrap();
        assert!(diag.rank_cap_reached);
        assert_eq!(diag.ranks, (2, 2));
        assert!(diag.to_lines().contains("rank_cap_reached=true"));
    }

    #[test]
    fn gradient_bound_is_tighter() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let a = random_series(&mut rng, 2, 15);
        let b = random_series(&mut rng, 2, 13);
        let params = KernelizedParams::gaussian(2, 0.5, 2.0);
        let s = PairSample::new(&a, &b, params).unwrap();
        let f = two_factorizations(&s, (0.5, 0.5), None, true).unwrap();
        let traces = (f.first.residual_trace, f.second.residual_trace);
        let simple = simplified_ratio_bound(s.halves(), 0.5, traces, 1.0);
        let grad = gradient_ratio_bound(&f, s.delta(), 0.5, 1.0).unwrap();
        assert!(grad <= simple + 1e-15);
        let approx = s.constant() + f_lowrank(&f.first.g, &f.second.g, s.delta(), 0.5).unwrap();
        let dense = s.phi_dense().unwrap();
        assert!((dense - approx).exp_m1() <= grad + 1e-12);
    }
}
