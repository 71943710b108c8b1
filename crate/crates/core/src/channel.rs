//! Sample-path simulation of the data-dependent-noise channel
//!
//! `Y_k = x_k + sqrt(σ² + Σ_{ν=1}^{k−1} α_{k−ν} x_ν²) · U_k`
//!
//! together with its stationarized variant, whose variance also sees a
//! pre-time-1 input tail, and the completion noise that converts one into the
//! other at the receiver.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{CoeffKind, CoeffSeq};
use crate::rng::{tag, GaussianStream, NoiseSource};

/// Relative truncation error allowed on the history sum, in units of σ².
pub const HISTORY_TOL: f64 = 1e-12;
/// Upper limit on retained past powers for slowly decaying sequences.
pub const MAX_HORIZON: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("noise floor σ² must be positive and finite, got {0}")]
    BadNoiseFloor(f64),
    #[error("channel input must be finite, got {0}")]
    NonFiniteInput(f64),
    #[error("past-tail entries must be finite, got {0}")]
    NonFiniteTail(f64),
    #[error("input sequence is empty")]
    EmptyInput,
}

/// How past input powers are retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    /// O(1) recursion for geometric sequences, truncated convolution otherwise.
    #[default]
    Auto,
    /// Always keep past powers and convolve.
    Convolution,
}

#[derive(Debug, Clone)]
enum History {
    /// `T_k` with `T_{k+1} = ρ (T_k + x_k²)`.
    Accumulator { rho: f64, t: f64 },
    /// Most recent power first.
    Buffer {
        powers: VecDeque<f64>,
        /// `weights[j] = α_{j+1}`, filled up to the horizon.
        weights: Vec<f64>,
        horizon: usize,
        max_power: f64,
    },
}

/// Inputs before time 1, `x_0, x_{−1}, ...`, implicitly zero beyond the list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PastTail {
    values: Vec<f64>,
}

impl PastTail {
    pub fn new(values: Vec<f64>) -> Result<Self, ChannelError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ChannelError::NonFiniteTail(bad));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_{ν≤0} α_{k−ν} x_ν²` for time `k ≥ 1`.
    pub fn variance_at(&self, coeffs: &CoeffSeq, k: u64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, x)| coeffs.coeff_or_one(k + j as u64) * x * x)
            .sum()
    }
}

/// `S_k = sqrt(Σ_{ν≤0} α_{k−ν} x_ν²) · u`, where `u` plays the role of the
/// independent draw `U_{−k}`.
pub fn completion_noise(tail: &PastTail, coeffs: &CoeffSeq, k: u64, u: f64) -> f64 {
    tail.variance_at(coeffs, k).sqrt() * u
}

/// Sequentially simulated channel. One step at a time; not shared across threads.
#[derive(Debug, Clone)]
pub struct ChannelInstance<N = GaussianStream> {
    sigma2: f64,
    coeffs: CoeffSeq,
    noise: N,
    history: History,
    k: u64,
}

impl ChannelInstance<GaussianStream> {
    /// Channel driven by the forward-noise stream of `seed`.
    pub fn new(sigma2: f64, coeffs: CoeffSeq, seed: u64) -> Result<Self, ChannelError> {
        Self::with_noise(
            sigma2,
            coeffs,
            GaussianStream::new(seed, tag::FORWARD_NOISE, 0),
        )
    }
}

impl<N: NoiseSource> ChannelInstance<N> {
    pub fn with_noise(sigma2: f64, coeffs: CoeffSeq, noise: N) -> Result<Self, ChannelError> {
        Self::with_mode(sigma2, coeffs, noise, HistoryMode::Auto)
    }

    pub fn with_mode(
        sigma2: f64,
        coeffs: CoeffSeq,
        noise: N,
        mode: HistoryMode,
    ) -> Result<Self, ChannelError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(ChannelError::BadNoiseFloor(sigma2));
        }
        let history = match (coeffs.kind(), mode) {
            (CoeffKind::Geometric { rho }, HistoryMode::Auto) => {
                History::Accumulator { rho: *rho, t: 0.0 }
            }
            _ => History::Buffer {
                powers: VecDeque::new(),
                weights: Vec::new(),
                horizon: 0,
                max_power: 0.0,
            },
        };
        Ok(Self {
            sigma2,
            coeffs,
            noise,
            history,
            k: 1,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn coeffs(&self) -> &CoeffSeq {
        &self.coeffs
    }

    /// Current (next-to-be-sent) time index, starting at 1.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// `v_k = σ² + Σ_{ν=1}^{k−1} α_{k−ν} x_ν²` for the current `k`.
    pub fn noise_variance(&self) -> f64 {
        match &self.history {
            History::Accumulator { t, .. } => self.sigma2 + t,
            History::Buffer {
                powers, weights, ..
            } => {
                let heat: f64 = powers.iter().zip(weights).map(|(p, a)| a * p).sum();
                self.sigma2 + heat
            }
        }
    }

    /// Send `x`, return `Y_k`, advance to `k + 1`.
    pub fn step(&mut self, x: f64) -> Result<f64, ChannelError> {
        self.step_with_extra(x, 0.0)
    }

    /// Send `x` over the stationarized channel whose variance also includes
    /// the contribution of `tail`.
    pub fn step_stationary(&mut self, tail: &PastTail, x: f64) -> Result<f64, ChannelError> {
        let extra = tail.variance_at(&self.coeffs, self.k);
        self.step_with_extra(x, extra)
    }

    fn step_with_extra(&mut self, x: f64, extra: f64) -> Result<f64, ChannelError> {
        if !x.is_finite() {
            return Err(ChannelError::NonFiniteInput(x));
        }
        let v = self.noise_variance() + extra;
        let u = self.noise.standard_normal();
        let y = x + v.sqrt() * u;
        self.record(x * x);
        Ok(y)
    }

    fn record(&mut self, power: f64) {
        match &mut self.history {
            History::Accumulator { rho, t } => *t = *rho * (*t + power),
            History::Buffer {
                powers,
                weights,
                horizon,
                max_power,
            } => {
                if power > *max_power {
                    *max_power = power;
                    *horizon = self
                        .coeffs
                        .horizon_for(*max_power, self.sigma2, HISTORY_TOL, MAX_HORIZON)
                        .unwrap_or(MAX_HORIZON);
                    let coeffs = &self.coeffs;
                    let have = weights.len();
                    weights.extend((have..*horizon).map(|j| coeffs.coeff_or_one(j as u64 + 1)));
                }
                powers.push_front(power);
                powers.truncate(*horizon);
            }
        }
        self.k += 1;
    }
}

/// Receiver-side conversion of original-channel outputs into
/// stationarized-channel outputs by adding `S_k`. Draws its own noise from
/// the completion stream, independent of the forward channel noise.
#[derive(Debug, Clone)]
pub struct StationaryConverter<N = GaussianStream> {
    tail: PastTail,
    coeffs: CoeffSeq,
    noise: N,
    k: u64,
}

impl StationaryConverter<GaussianStream> {
    pub fn new(tail: PastTail, coeffs: CoeffSeq, seed: u64) -> Self {
        Self::with_noise(
            tail,
            coeffs,
            GaussianStream::new(seed, tag::COMPLETION_NOISE, 0),
        )
    }
}

impl<N: NoiseSource> StationaryConverter<N> {
    pub fn with_noise(tail: PastTail, coeffs: CoeffSeq, noise: N) -> Self {
        Self {
            tail,
            coeffs,
            noise,
            k: 1,
        }
    }

    /// `Y_k + S_k` for the next time index.
    pub fn convert(&mut self, y: f64) -> f64 {
        let u = self.noise.standard_normal();
        let s = completion_noise(&self.tail, &self.coeffs, self.k, u);
        self.k += 1;
        y + s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PowerCheck {
    Ok { measured: f64 },
    Violated { measured: f64 },
}

/// Empirical check of the average-power constraint `(1/n) Σ x_k² ≤ P`.
pub fn verify_power(inputs: &[f64], budget: f64) -> Result<PowerCheck, ChannelError> {
    if inputs.is_empty() {
        return Err(ChannelError::EmptyInput);
    }
    let measured = inputs.iter().map(|x| x * x).sum::<f64>() / inputs.len() as f64;
    Ok(if measured <= budget {
        PowerCheck::Ok { measured }
    } else {
        PowerCheck::Violated { measured }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: u64,
    pub x: f64,
    pub v: f64,
    pub y: f64,
}

/// Run `inputs` through the channel (stationarized when `tail` is given)
/// and record `(k, x, v_k, y)` per step.
pub fn simulate<N: NoiseSource>(
    ch: &mut ChannelInstance<N>,
    inputs: &[f64],
    tail: Option<&PastTail>,
) -> Result<Vec<TraceRow>, ChannelError> {
    let mut rows = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let k = ch.k();
        let extra = tail.map_or(0.0, |t| t.variance_at(ch.coeffs(), k));
        let v = ch.noise_variance() + extra;
        let y = match tail {
            Some(t) => ch.step_stationary(t, x)?,
            None => ch.step(x)?,
        };
        rows.push(TraceRow { k, x, v, y });
    }
    Ok(rows)
}
