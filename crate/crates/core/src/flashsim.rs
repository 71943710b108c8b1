//! Flash-signaling sample paths, per-block mutual information, and a
//! pulse-position-modulation demo over the heating channel.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::FlashScheme;
use crate::channel::{ChannelError, ChannelInstance};
use crate::coeffs::CoeffSeq;
use crate::divergence::{
    flash_densities, gaussian_kl, mixture_slope_mc, DivergenceError, KlEstimate, KlMethod,
    TwoComponentMixture,
};
use crate::rng::{child_seed, stream, tag};

pub const MIN_MI_SAMPLES: usize = 1000;
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlashError {
    #[error("block count must be at least 1")]
    NoBlocks,
    #[error("noise floor σ² must be positive and finite, got {0}")]
    BadNoiseFloor(f64),
    #[error("Monte-Carlo budget must be at least {MIN_MI_SAMPLES}, got {0}")]
    BudgetTooSmall(usize),
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(usize),
    #[error("invalid PPM configuration: {0}")]
    BadPpm(String),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// IID flash blocks drawn from the `FLASH_INPUT` stream of a seed.
#[derive(Debug, Clone)]
pub struct FlashBlockStream {
    scheme: FlashScheme,
    amplitude: f64,
    rng: ChaCha20Rng,
    index: u64,
}

impl FlashBlockStream {
    pub fn new(scheme: FlashScheme, sigma2: f64, seed: u64) -> Result<Self, FlashError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(FlashError::BadNoiseFloor(sigma2));
        }
        Ok(Self {
            scheme,
            amplitude: (scheme.xi2_over_sigma2() * sigma2).sqrt(),
            rng: stream(seed, tag::FLASH_INPUT, 0),
            index: 0,
        })
    }

    pub fn scheme(&self) -> &FlashScheme {
        &self.scheme
    }

    /// Index of the next block to be emitted.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn next_block(&mut self) -> Vec<f64> {
        let mut block = vec![0.0; self.scheme.block_len()];
        // δ = 1 must pulse every block; `random::<f64>()` lies in [0, 1).
        if self.rng.random::<f64>() < self.scheme.delta() {
            block[0] = self.amplitude;
        }
        self.index += 1;
        block
    }
}

pub fn sample_blocks(
    stream: &mut FlashBlockStream,
    count: usize,
) -> Result<Vec<Vec<f64>>, FlashError> {
    if count == 0 {
        return Err(FlashError::NoBlocks);
    }
    Ok((0..count).map(|_| stream.next_block()).collect())
}

/// Mutual information between one flash block and its output, given the
/// past pulse energies, in nats per block:
/// `δ·D(on‖off) − D(mix‖off)`. Only the second term is random.
pub fn mi_flash(
    scheme: &FlashScheme,
    coeffs: &CoeffSeq,
    sigma2: f64,
    past_pulses: &[f64],
    mc: usize,
    seed: u64,
) -> Result<KlEstimate, FlashError> {
    if mc < MIN_MI_SAMPLES {
        return Err(FlashError::BudgetTooSmall(mc));
    }
    let delta = scheme.delta();
    if delta == 0.0 {
        return Ok(KlEstimate {
            value: 0.0,
            std_error: 0.0,
            n_samples: 0,
            method: KlMethod::Exact,
        });
    }
    let (on, off) = flash_densities(scheme, sigma2, coeffs, past_pulses)?;
    let kl = gaussian_kl(&on, &off)?;
    let mix = TwoComponentMixture::new(delta, on, off)?;
    let slope = mixture_slope_mc(&mix, mc, seed)?;
    Ok(KlEstimate {
        value: delta * (kl - slope.slope),
        std_error: delta * slope.std_error,
        n_samples: slope.n_samples,
        method: KlMethod::McTwoComponent,
    })
}

/// One-shot PPM over the heating channel: message `m` is a single pulse at
/// the first symbol of block `m·(n_blocks / n_messages)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpmConfig {
    pub n_blocks: usize,
    pub n_messages: usize,
    pub block_len: usize,
    pub xi2_over_sigma2: f64,
    pub sigma2: f64,
    pub coeffs: CoeffSeq,
}

impl PpmConfig {
    pub fn validate(&self) -> Result<(), FlashError> {
        let bad = |m: &str| Err(FlashError::BadPpm(m.to_string()));
        if self.block_len == 0 || self.n_blocks == 0 {
            return bad("block length and block count must be positive");
        }
        if self.n_messages < 2 {
            return bad("need at least 2 messages");
        }
        if self.n_messages > self.n_blocks {
            return bad("n_messages must not exceed n_blocks");
        }
        if !(self.xi2_over_sigma2 > 0.0 && self.xi2_over_sigma2.is_finite()) {
            return bad("ξ²/σ² must be positive and finite");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(FlashError::BadNoiseFloor(self.sigma2));
        }
        Ok(())
    }

    /// `log(n_messages)/(n_blocks·L)` nats per channel use.
    pub fn rate(&self) -> f64 {
        (self.n_messages as f64).ln() / (self.n_blocks * self.block_len) as f64
    }

    fn spacing(&self) -> usize {
        self.n_blocks / self.n_messages
    }

    pub fn encode(&self, message: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_blocks * self.block_len];
        x[message * self.spacing() * self.block_len] = (self.xi2_over_sigma2 * self.sigma2).sqrt();
        x
    }
}

/// Pick the candidate block whose first output, normalized by the noise
/// level of the preceding block's trailing symbols, is largest.
///
/// A pulse heats the rest of its own block, so the variance of a block's
/// first symbol is better predicted by what came before it than by what
/// follows. With `L = 1` there are no trailing symbols and every candidate
/// is normalized by `σ²`.
pub fn ppm_decode(cfg: &PpmConfig, y: &[f64]) -> usize {
    let l = cfg.block_len;
    let spacing = cfg.spacing();
    let mut best = (0, f64::NEG_INFINITY);
    for m in 0..cfg.n_messages {
        let j = m * spacing;
        let var = if j == 0 || l == 1 {
            cfg.sigma2
        } else {
            let prev = &y[(j - 1) * l + 1..j * l];
            let ms = prev.iter().map(|v| v * v).sum::<f64>() / prev.len() as f64;
            ms.max(cfg.sigma2)
        };
        let stat = y[j * l] / var.sqrt();
        if stat > best.1 {
            best = (m, stat);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PpmTrial {
    pub trial: usize,
    pub message: usize,
    pub decoded: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PpmResult {
    pub trials: usize,
    pub errors: usize,
    pub error_rate: f64,
    /// binomial standard error of `error_rate`
    pub std_error: f64,
    pub rate: f64,
}

fn run_trial(cfg: &PpmConfig, trial: usize, seed: u64) -> Result<PpmTrial, FlashError> {
    let trial_seed = child_seed(seed, tag::SWEEP_CELL, trial as u32);
    let message = stream(trial_seed, tag::PPM_MESSAGE, 0).random_range(0..cfg.n_messages);
    let mut ch = ChannelInstance::new(cfg.sigma2, cfg.coeffs.clone(), trial_seed)?;
    let y = cfg
        .encode(message)
        .into_iter()
        .map(|x| ch.step(x))
        .collect::<Result<Vec<_>, _>>()?;
    let decoded = ppm_decode(cfg, &y);
    Ok(PpmTrial {
        trial,
        message,
        decoded,
        correct: decoded == message,
    })
}

/// Every trial's outcome, in trial order. Each trial has its own sub-stream
/// of `seed` for the message draw and the channel noise.
pub fn ppm_trials(cfg: &PpmConfig, trials: usize, seed: u64) -> Result<Vec<PpmTrial>, FlashError> {
    cfg.validate()?;
    if trials < MIN_TRIALS {
        return Err(FlashError::TooFewTrials(trials));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, seed))
        .collect()
}

pub fn ppm_error_rate(cfg: &PpmConfig, trials: usize, seed: u64) -> Result<PpmResult, FlashError> {
    Ok(summarize(cfg, &ppm_trials(cfg, trials, seed)?))
}

pub fn summarize(cfg: &PpmConfig, outcomes: &[PpmTrial]) -> PpmResult {
    let trials = outcomes.len();
    let errors = outcomes.iter().filter(|t| !t.correct).count();
    let p = errors as f64 / trials as f64;
    PpmResult {
        trials,
        errors,
        error_rate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        rate: cfg.rate(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::mixture_kl_quadrature_1d;
    use crate::rng::{GaussianStream, NoiseSource};
    use approx::assert_relative_eq;

    fn geo(r: f64) -> CoeffSeq {
        CoeffSeq::geometric(r).unwrap()
    }

    fn ppm(n_blocks: usize, n_messages: usize, l: usize, x: f64, coeffs: CoeffSeq) -> PpmConfig {
        PpmConfig {
            n_blocks,
            n_messages,
            block_len: l,
            xi2_over_sigma2: x,
            sigma2: 1.0,
            coeffs,
        }
    }

    #[test]
    fn degenerate_block_laws() {
        let off = FlashScheme::new(3, 4.0, 0.0).unwrap();
        let mut s = FlashBlockStream::new(off, 1.0, 1).unwrap();
        assert!(sample_blocks(&mut s, 500)
            .unwrap()
            .iter()
            .all(|b| b.iter().all(|&v| v == 0.0)));
        let on = FlashScheme::new(3, 4.0, 1.0).unwrap();
        let mut s = FlashBlockStream::new(on, 1.0, 1).unwrap();
        assert!(sample_blocks(&mut s, 500)
            .unwrap()
            .iter()
            .all(|b| b == &[2.0, 0.0, 0.0]));
        assert_eq!(s.index(), 500);
        assert_eq!(sample_blocks(&mut s, 0), Err(FlashError::NoBlocks));
    }

    #[test]
    fn per_symbol_power_matches() {
        let sch = FlashScheme::new(2, 4.0, 0.5).unwrap();
        let mut s = FlashBlockStream::new(sch, 1.0, 11).unwrap();
        let n = 100_000;
        let blocks = sample_blocks(&mut s, n).unwrap();
        let power = blocks.iter().flatten().map(|v| v * v).sum::<f64>() / (2 * n) as f64;
        // per-symbol power is 2·Bernoulli(½): se = 2·½/√n
        let se = 1.0 / (n as f64).sqrt();
        assert!((power - 1.0).abs() <= 3.0 * se, "{power}");
    }

    #[test]
    fn mi_degenerate_deltas() {
        let g = geo(0.5);
        let zero = FlashScheme::new(2, 4.0, 0.0).unwrap();
        assert_eq!(mi_flash(&zero, &g, 1.0, &[], 1000, 1).unwrap().value, 0.0);
        let one = FlashScheme::new(2, 4.0, 1.0).unwrap();
        let e = mi_flash(&one, &g, 1.0, &[], 100_000, 1).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error + 1e-12, "{e:?}");
        assert_eq!(
            mi_flash(&one, &g, 1.0, &[], 999, 1),
            Err(FlashError::BudgetTooSmall(999))
        );
    }

    #[test]
    fn mi_binary_input_matches_quadrature() {
        let g = geo(0.5);
        let sch = FlashScheme::new(1, 4.0, 0.5).unwrap();
        let e = mi_flash(&sch, &g, 1.0, &[], 200_000, 8).unwrap();
        let (on, off) = flash_densities(&sch, 1.0, &g, &[]).unwrap();
        let kl = gaussian_kl(&on, &off).unwrap();
        let mix = TwoComponentMixture::new(0.5, on, off).unwrap();
        let oracle = 0.5 * kl - mixture_kl_quadrature_1d(&mix, 1e-12).unwrap();
        assert_relative_eq!(oracle, 0.336_830_820_346_832, max_relative = 1e-9);
        assert!(
            (e.value - oracle).abs() <= 3.0 * e.std_error,
            "{e:?} vs {oracle}"
        );
    }

    #[test]
    fn mi_within_bounds() {
        let g = geo(0.5);
        for (l, x, d, past) in [
            (2, 9.0, 0.1, vec![]),
            (3, 25.0, 0.02, vec![25.0, 0.0]),
            (1, 1.0, 0.7, vec![1.0]),
        ] {
            let sch = FlashScheme::new(l, x, d).unwrap();
            let e = mi_flash(&sch, &g, 1.0, &past, 50_000, 3).unwrap();
            let (on, off) = flash_densities(&sch, 1.0, &g, &past).unwrap();
            assert!(e.value >= -3.0 * e.std_error);
            assert!(e.value <= d * gaussian_kl(&on, &off).unwrap() + 1e-15);
        }
    }

    #[test]
    fn ppm_validation() {
        let g = geo(0.5);
        assert!(ppm(2, 3, 4, 100.0, g.clone()).validate().is_err());
        assert!(ppm(2, 1, 4, 100.0, g.clone()).validate().is_err());
        assert!(ppm(2, 2, 0, 100.0, g.clone()).validate().is_err());
        let cfg = ppm(2, 2, 4, 100.0, g);
        assert_relative_eq!(cfg.rate(), 2f64.ln() / 8.0);
        assert_eq!(
            ppm_error_rate(&cfg, 99, 0),
            Err(FlashError::TooFewTrials(99))
        );
    }

    #[test]
    fn ppm_encoding_spreads_positions() {
        let cfg = ppm(8, 4, 2, 9.0, geo(0.5));
        for m in 0..4 {
            let x = cfg.encode(m);
            let hot: Vec<usize> = x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(hot, vec![m * 2 * 2]);
            assert_eq!(x[m * 4], 3.0);
        }
    }

    #[test]
    fn ppm_noiseless_limit() {
        let mut cfg = ppm(8, 8, 3, 100.0, geo(0.5));
        cfg.sigma2 = 1e-12;
        let r = ppm_error_rate(&cfg, 100, 4).unwrap();
        assert_eq!(r.errors, 0);
    }

    #[test]
    fn ppm_memoryless_matches_awgn() {
        let cfg = ppm(4, 4, 3, 6.0, CoeffSeq::memoryless());
        let outcomes = ppm_trials(&cfg, 300, 21).unwrap();
        for o in &outcomes {
            let ts = child_seed(21, tag::SWEEP_CELL, o.trial as u32);
            assert_eq!(
                stream(ts, tag::PPM_MESSAGE, 0).random_range(0..4usize),
                o.message
            );
            let mut noise = GaussianStream::new(ts, tag::FORWARD_NOISE, 0);
            let y: Vec<f64> = cfg
                .encode(o.message)
                .iter()
                .map(|x| x + noise.standard_normal())
                .collect();
            assert_eq!(ppm_decode(&cfg, &y), o.decoded);
        }
    }

    #[test]
    fn ppm_more_energy_fewer_errors() {
        let g = geo(0.5);
        let weak = ppm_error_rate(&ppm(4, 4, 4, 4.0, g.clone()), 10_000, 5).unwrap();
        let strong = ppm_error_rate(&ppm(4, 4, 4, 8.0, g), 10_000, 5).unwrap();
        assert!(strong.error_rate < weak.error_rate, "{strong:?} {weak:?}");
    }
}
