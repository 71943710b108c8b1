//! Relative entropies between the flash-conditional output densities.
//!
//! Given the past, one output block is Gaussian with diagonal covariance:
//! `on` when the block carries a pulse, `off` when it is silent. The received
//! block density is the mixture `δ·on + (1−δ)·off`. This module computes
//! `D(on‖off)` in closed form and estimates the penalty `D(mix‖off)`, which
//! is `o(δ)` and, at the on-probabilities of interest, has to be resolved
//! for `δ` far below `1e-40`.
//!
//! # The mixture estimator
//!
//! Write `LR = on/off` and `x = δ(LR − 1)`, so that `mix = off·(1 + x)`.
//! Because `∫ off·x = 0`,
//!
//! ```text
//! D(mix‖off) = ∫ off · φ(x),    φ(x) = (1 + x)·log(1 + x) − x ≥ 0.
//! ```
//!
//! The integrand is sampled with half the draws from each component and
//! weighted by `off/(on + off) = 1/(1 + LR)`, so every draw contributes a
//! bounded, non-negative amount and both the silent bulk and the region
//! only the pulse reaches are covered. All likelihood ratios stay in the log
//! domain; nothing is exponentiated that can overflow.

use serde::Serialize;
use thiserror::Error;

use crate::bounds::FlashScheme;
use crate::coeffs::CoeffSeq;
use crate::quad;
use crate::rng::{child_seed, tag, GaussianStream, NoiseSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("variances must be positive and finite, got {0}")]
    BadVariance(f64),
    #[error("mixture weight must lie in [0,1], got {0}")]
    BadDelta(f64),
    #[error("need at least {min} Monte-Carlo samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("quadrature oracle is one-dimensional, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("noise floor σ² must be positive and finite, got {0}")]
    BadNoiseFloor(f64),
}

/// Gaussian with mean vector and diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, DivergenceError> {
        if mean.len() != var.len() {
            return Err(DivergenceError::DimensionMismatch(mean.len(), var.len()));
        }
        if let Some(&v) = var.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DivergenceError::BadVariance(v));
        }
        Ok(Self { mean, var })
    }

    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self, DivergenceError> {
        let n = mean.len();
        Self::new(mean, vec![var; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.837_877_066_409_345_3;
        self.mean
            .iter()
            .zip(&self.var)
            .zip(y)
            .map(|((m, v), y)| -0.5 * ((y - m).powi(2) / v + v.ln() + LN_2PI))
            .sum()
    }

    /// Draw one vector into `out`.
    pub fn sample_into<N: NoiseSource>(&self, noise: &mut N, out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.mean).zip(&self.var) {
            *o = m + v.sqrt() * noise.standard_normal();
        }
    }
}

/// `log(on(y)/off(y))`, accumulated coordinate-wise without forming either density.
pub fn log_likelihood_ratio(on: &DiagGaussian, off: &DiagGaussian, y: &[f64]) -> f64 {
    let mut l = 0.0;
    for (i, y) in y.iter().enumerate() {
        let (m1, v1) = (on.mean[i], on.var[i]);
        let (m0, v0) = (off.mean[i], off.var[i]);
        l += 0.5 * ((y - m0).powi(2) / v0 - (y - m1).powi(2) / v1 + (v0 / v1).ln());
    }
    l
}

/// `log(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// `log(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `D(p‖q)` for diagonal Gaussians, in nats.
pub fn gaussian_kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, DivergenceError> {
    if p.dim() != q.dim() {
        return Err(DivergenceError::DimensionMismatch(p.dim(), q.dim()));
    }
    let mut d = 0.0;
    for i in 0..p.dim() {
        // r − 1 − log r with r = v_p/v_q, written to stay ≥ 0 near r = 1.
        let rel = (p.var[i] - q.var[i]) / q.var[i];
        let shape = rel - rel.ln_1p();
        let shift = (p.mean[i] - q.mean[i]).powi(2) / q.var[i];
        d += 0.5 * (shape.max(0.0) + shift);
    }
    Ok(d)
}

/// On/off output densities of one flash block, given the pulse energies
/// `x_{iL+1}²` of earlier blocks (`past_pulses[0]` is one block back).
///
/// ```text
/// K_on(1,1) = σ² + Σ_i α_{iL} p_i
/// K_on(k,k) = σ² + α_{k−1} ξ² + Σ_i α_{iL+k−1} p_i      k = 2..L
/// K_off(k,k) = σ² + Σ_i α_{iL+k−1} p_i                  k = 1..L
/// ```
pub fn flash_densities(
    scheme: &FlashScheme,
    sigma2: f64,
    coeffs: &CoeffSeq,
    past_pulses: &[f64],
) -> Result<(DiagGaussian, DiagGaussian), DivergenceError> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(DivergenceError::BadNoiseFloor(sigma2));
    }
    let l = scheme.block_len();
    let xi2 = scheme.xi2_over_sigma2() * sigma2;
    let mut on_var = Vec::with_capacity(l);
    let mut off_var = Vec::with_capacity(l);
    for k in 1..=l {
        let past: f64 = past_pulses
            .iter()
            .enumerate()
            .map(|(i, p)| coeffs.coeff_or_one(((i + 1) * l + k - 1) as u64) * p)
            .sum();
        let own = if k >= 2 {
            coeffs.coeff_or_one(k as u64 - 1) * xi2
        } else {
            0.0
        };
        on_var.push(sigma2 + own + past);
        off_var.push(sigma2 + past);
    }
    let mut on_mean = vec![0.0; l];
    on_mean[0] = xi2.sqrt();
    Ok((
        DiagGaussian::new(on_mean, on_var)?,
        DiagGaussian::new(vec![0.0; l], off_var)?,
    ))
}

/// `δ·on + (1−δ)·off`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoComponentMixture {
    delta: f64,
    on: DiagGaussian,
    off: DiagGaussian,
}

impl TwoComponentMixture {
    pub fn new(delta: f64, on: DiagGaussian, off: DiagGaussian) -> Result<Self, DivergenceError> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(DivergenceError::BadDelta(delta));
        }
        if on.dim() != off.dim() {
            return Err(DivergenceError::DimensionMismatch(on.dim(), off.dim()));
        }
        Ok(Self { delta, on, off })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn on(&self) -> &DiagGaussian {
        &self.on
    }

    pub fn off(&self) -> &DiagGaussian {
        &self.off
    }

    pub fn dim(&self) -> usize {
        self.on.dim()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, DivergenceError> {
        Self::new(delta, self.on.clone(), self.off.clone())
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        log_add_exp(
            self.delta.ln() + self.on.log_density(y),
            (-self.delta).ln_1p() + self.off.log_density(y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMethod {
    Exact,
    McTwoComponent,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    /// nats
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub method: KlMethod,
}

impl KlEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
            method: KlMethod::Exact,
        }
    }
}

/// `D(mix‖off)/δ` with its standard error. Kept separate from [`KlEstimate`]
/// because at `δ ~ 1e-300` the unscaled value sits at the edge of the
/// normal double range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub delta: f64,
    pub slope: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl SlopeEstimate {
    pub fn to_kl(self) -> KlEstimate {
        KlEstimate {
            value: self.delta * self.slope,
            std_error: self.delta * self.std_error,
            n_samples: self.n_samples,
            method: KlMethod::McTwoComponent,
        }
    }
}

/// `φ(x)/x²` for small `|x|`: Σ_{n≥2} (−x)^{n−2}·(−1)^n/(n(n−1)).
#[inline]
fn phi_over_x2_series(x: f64) -> f64 {
    let mut s = 0.0;
    let mut p = 1.0;
    for n in 2..=10u32 {
        s += p / f64::from(n * (n - 1));
        p *= -x;
    }
    s
}

const SERIES_CUTOFF: f64 = 1e-2;

/// Per-draw weighted contribution `φ(x)/(δ(1 + LR))` for log-likelihood ratio
/// `l`, with `ln_delta = ln δ`, `δ ∈ (0, 1]`.
#[inline]
fn weighted_phi_per_delta(l: f64, delta: f64, ln_delta: f64) -> f64 {
    let x = delta * l.exp_m1();
    let c = if x.abs() < SERIES_CUTOFF {
        // φ(x)/(δ(1+LR)) = x·(e^l − 1)/(1 + e^l)·φ(x)/x²
        x * (0.5 * l).tanh() * phi_over_x2_series(x)
    } else {
        // [mix·g − δ(on − off)] / [δ(on + off)] with g = log(mix/off)
        let g = log_add_exp(ln_delta + l, (-delta).ln_1p());
        (g - softplus(l) - ln_delta).exp() * g - (0.5 * l).tanh()
    };
    c.max(0.0)
}

/// `off(y)·φ(x(y))/δ` as a function of the two log densities.
#[inline]
fn phi_density_per_delta(l_on: f64, l_off: f64, delta: f64, ln_delta: f64) -> f64 {
    let l = l_on - l_off;
    let x = delta * l.exp_m1();
    let v = if x.abs() < SERIES_CUTOFF {
        l_off.exp() * l.exp_m1() * x * phi_over_x2_series(x)
    } else {
        let g = log_add_exp(ln_delta + l, (-delta).ln_1p());
        let l_mix = l_off + g;
        (l_mix - ln_delta).exp() * g - (l_on.exp() - l_off.exp())
    };
    v.max(0.0)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn stratum(
    mix: &TwoComponentMixture,
    source: &DiagGaussian,
    n: usize,
    seed: u64,
    stream_tag: u32,
) -> Vec<f64> {
    let mut noise = GaussianStream::new(seed, stream_tag, 0);
    let ln_delta = mix.delta.ln();
    let mut y = vec![0.0; mix.dim()];
    (0..n)
        .map(|_| {
            source.sample_into(&mut noise, &mut y);
            let l = log_likelihood_ratio(&mix.on, &mix.off, &y);
            weighted_phi_per_delta(l, mix.delta, ln_delta)
        })
        .collect()
}

/// Two-stratum Monte-Carlo estimate of `D(mix‖off)/δ`.
///
/// `n / 2` draws come from each component (on: stream `MC_ON`, off: stream
/// `MC_OFF` of `seed`); the standard error is the stratified combination
/// `sqrt(var_on/n_on + var_off/n_off)`.
pub fn mixture_slope_mc(
    mix: &TwoComponentMixture,
    n: usize,
    seed: u64,
) -> Result<SlopeEstimate, DivergenceError> {
    if n < 4 {
        return Err(DivergenceError::TooFewSamples { min: 4, got: n });
    }
    let half = n / 2;
    if mix.delta == 0.0 {
        return Ok(SlopeEstimate {
            delta: 0.0,
            slope: 0.0,
            std_error: 0.0,
            n_samples: 2 * half,
        });
    }
    let on = stratum(mix, &mix.on, half, seed, tag::MC_ON);
    let off = stratum(mix, &mix.off, half, seed, tag::MC_OFF);
    let (m_on, v_on) = mean_var(&on);
    let (m_off, v_off) = mean_var(&off);
    Ok(SlopeEstimate {
        delta: mix.delta,
        slope: m_on + m_off,
        std_error: (v_on / half as f64 + v_off / half as f64).sqrt(),
        n_samples: 2 * half,
    })
}

/// Two-stratum Monte-Carlo estimate of `D(mix‖off)` in nats.
pub fn mixture_kl_mc(
    mix: &TwoComponentMixture,
    n: usize,
    seed: u64,
) -> Result<KlEstimate, DivergenceError> {
    if mix.delta == 0.0 {
        if n < 4 {
            return Err(DivergenceError::TooFewSamples { min: 4, got: n });
        }
        return Ok(KlEstimate {
            value: 0.0,
            std_error: 0.0,
            n_samples: n,
            method: KlMethod::McTwoComponent,
        });
    }
    Ok(mixture_slope_mc(mix, n, seed)?.to_kl())
}

fn quadrature_window(mix: &TwoComponentMixture) -> Result<(f64, f64), DivergenceError> {
    if mix.dim() != 1 {
        return Err(DivergenceError::NotOneDimensional(mix.dim()));
    }
    let (m1, s1) = (mix.on.mean[0], mix.on.var[0].sqrt());
    let (m0, s0) = (mix.off.mean[0], mix.off.var[0].sqrt());
    Ok((
        (m1 - 12.0 * s1).min(m0 - 12.0 * s0),
        (m1 + 12.0 * s1).max(m0 + 12.0 * s0),
    ))
}

/// `D(mix‖off)/δ` by adaptive quadrature over the component means ± 12
/// standard deviations, absolute tolerance `tol` on the slope.
pub fn mixture_slope_quadrature_1d(
    mix: &TwoComponentMixture,
    tol: f64,
) -> Result<f64, DivergenceError> {
    let (lo, hi) = quadrature_window(mix)?;
    if mix.delta == 0.0 {
        return Ok(0.0);
    }
    let (on, off) = (&mix.on, &mix.off);
    let (delta, ln_delta) = (mix.delta, mix.delta.ln());
    Ok(quad::integrate(
        |y| phi_density_per_delta(on.log_density(&[y]), off.log_density(&[y]), delta, ln_delta),
        lo,
        hi,
        tol,
    ))
}

/// `D(mix‖off)` for one-dimensional mixtures by adaptive quadrature,
/// absolute tolerance `tol`. Serves as the oracle for the Monte-Carlo path.
pub fn mixture_kl_quadrature_1d(
    mix: &TwoComponentMixture,
    tol: f64,
) -> Result<f64, DivergenceError> {
    quadrature_window(mix)?;
    if mix.delta == 0.0 {
        return Ok(0.0);
    }
    Ok(mix.delta * mixture_slope_quadrature_1d(mix, tol / mix.delta)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeMethod {
    MonteCarlo {
        n: usize,
        seed: u64,
    },
    /// One-dimensional mixtures only; `tol` applies to `D/δ`.
    Quadrature {
        tol: f64,
    },
}

/// `(δ, D(δ·on + (1−δ)·off ‖ off)/δ)` over a grid of `δ ∈ (0, 1)`.
/// Each grid point uses its own sub-stream of the Monte-Carlo seed.
pub fn small_delta_slope(
    on: &DiagGaussian,
    off: &DiagGaussian,
    deltas: &[f64],
    method: SlopeMethod,
) -> Result<Vec<(f64, f64)>, DivergenceError> {
    deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if !(d > 0.0 && d < 1.0) {
                return Err(DivergenceError::BadDelta(d));
            }
            let mix = TwoComponentMixture::new(d, on.clone(), off.clone())?;
            let slope = match method {
                SlopeMethod::MonteCarlo { n, seed } => {
                    mixture_slope_mc(&mix, n, child_seed(seed, tag::SWEEP_CELL, i as u32))?.slope
                }
                SlopeMethod::Quadrature { tol } => mixture_slope_quadrature_1d(&mix, tol)?,
            };
            Ok((d, slope))
        })
        .collect()
}

/// Mixture penalty `D(f_{Ỹ|past} ‖ f_{Ỹ|X₁=0,past})` for one given past.
pub fn flash_mixture_kl(
    scheme: &FlashScheme,
    sigma2: f64,
    coeffs: &CoeffSeq,
    past_pulses: &[f64],
    n: usize,
    seed: u64,
) -> Result<SlopeEstimate, DivergenceError> {
    let (on, off) = flash_densities(scheme, sigma2, coeffs, past_pulses)?;
    let mix = TwoComponentMixture::new(scheme.delta(), on, off)?;
    mixture_slope_mc(&mix, n, seed)
}

/// Mixture penalty averaged over pasts drawn from the block-IID flash law
/// (`history_blocks` earlier blocks, each pulsed with probability δ).
pub fn averaged_flash_mixture_kl(
    scheme: &FlashScheme,
    sigma2: f64,
    coeffs: &CoeffSeq,
    history_blocks: usize,
    n_pasts: usize,
    n: usize,
    seed: u64,
) -> Result<SlopeEstimate, DivergenceError> {
    use rand::Rng;
    if n_pasts < 2 {
        return Err(DivergenceError::TooFewSamples {
            min: 2,
            got: n_pasts,
        });
    }
    let mut past_rng = crate::rng::stream(seed, tag::PAST_SAMPLER, 0);
    let pulse = scheme.xi2_over_sigma2() * sigma2;
    let mut slopes = Vec::with_capacity(n_pasts);
    let mut var_sum = 0.0;
    for j in 0..n_pasts {
        let past: Vec<f64> = (0..history_blocks)
            .map(|_| {
                if past_rng.random::<f64>() < scheme.delta() {
                    pulse
                } else {
                    0.0
                }
            })
            .collect();
        let est = flash_mixture_kl(
            scheme,
            sigma2,
            coeffs,
            &past,
            n,
            child_seed(seed, tag::SWEEP_CELL, j as u32),
        )?;
        slopes.push(est.slope);
        var_sum += est.std_error.powi(2);
    }
    let (mean, between) = mean_var(&slopes);
    let m = n_pasts as f64;
    Ok(SlopeEstimate {
        delta: scheme.delta(),
        slope: mean,
        std_error: (between / m + var_sum / (m * m)).sqrt(),
        n_samples: n_pasts * (n / 2) * 2,
    })
}
