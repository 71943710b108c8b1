//! Capacity bounds for the data-dependent-noise channel.
//!
//! The upper bound `½·log(1 + (1+α)·SNR)` holds with or without feedback.
//! The lower bound is the flash-signaling rate
//!
//! ```text
//! t1 − t2 − t3,
//! t1 = ½·SNR·Σ_{k=1}^{L} α_{k−1} / (1 + α·L·SNR)
//! t2 = ½·SNR·Σ_{k=2}^{L} log(1 + α_{k−1}·ξ²/σ²) / (ξ²/σ²)
//! t3 = D(f_mix ‖ f_off) / L        (zero past)
//! ```
//!
//! All three terms are computed as ratios to SNR. The on-probabilities that
//! drive the lower bound to its limit are far below the range where SNR
//! itself is comfortably representable, and the ratios are what the
//! per-unit-cost comparison needs anyway.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::CoeffSeq;
use crate::divergence::{flash_densities, mixture_slope_mc, DivergenceError, TwoComponentMixture};
use crate::rng::{child_seed, tag};

/// Smallest on-probability used by the default SNR rule. Normal doubles
/// stop near `2.2e-308`; this leaves headroom for the products formed when
/// converting between δ and SNR.
pub const MIN_DELTA: f64 = 1e-300;

/// Minimum Monte-Carlo budget accepted for the mixture penalty.
pub const MIN_MC: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("SNR must be positive and finite, got {0}")]
    BadSnr(f64),
    #[error("block length must be at least 1")]
    BadBlockLen,
    #[error("pulse energy ξ²/σ² must be positive and finite, got {0}")]
    BadPulse(f64),
    #[error("on-probability must lie in [0,1], got {0}")]
    BadDelta(f64),
    #[error("δ = {delta:e} > 1; raise ξ²/σ² to at least {min_xi2:e} (= L·SNR)")]
    Infeasible { delta: f64, min_xi2: f64 },
    #[error("scheme is inconsistent with SNR: δ·ξ²/σ² = {lhs:e} but L·SNR = {rhs:e}")]
    SchemeMismatch { lhs: f64, rhs: f64 },
    #[error("Monte-Carlo budget must be at least {MIN_MC}, got {0}")]
    BudgetTooSmall(usize),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("bound invariant violated: {0}")]
    InvariantViolated(String),
    #[error("malformed rule {0:?}")]
    MalformedRule(String),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// Block-IID on-off input: each block of `L` symbols is `(ξ, 0, …, 0)` with
/// probability `δ` and all-zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlashScheme {
    block_len: usize,
    xi2_over_sigma2: f64,
    delta: f64,
}

impl FlashScheme {
    pub fn new(block_len: usize, xi2_over_sigma2: f64, delta: f64) -> Result<Self, BoundsError> {
        if block_len == 0 {
            return Err(BoundsError::BadBlockLen);
        }
        if !(xi2_over_sigma2 > 0.0 && xi2_over_sigma2.is_finite()) {
            return Err(BoundsError::BadPulse(xi2_over_sigma2));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(BoundsError::BadDelta(delta));
        }
        Ok(Self {
            block_len,
            xi2_over_sigma2,
            delta,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn xi2_over_sigma2(&self) -> f64 {
        self.xi2_over_sigma2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `δ·(ξ²/σ²)/L`, the per-symbol SNR the scheme spends.
    pub fn snr(&self) -> f64 {
        self.delta * self.xi2_over_sigma2 / self.block_len as f64
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Negative { name, value })
    }
}

/// `½·log(1 + (1+α)·SNR)` nats per channel use.
pub fn feedback_capacity_upper(snr: f64, alpha: f64) -> Result<f64, BoundsError> {
    check_nonneg("snr", snr)?;
    check_nonneg("alpha", alpha)?;
    Ok(0.5 * ((1.0 + alpha) * snr).ln_1p())
}

/// `½·(1+α)` nats per unit SNR.
pub fn cpuc_upper(alpha: f64) -> f64 {
    0.5 * (1.0 + alpha)
}

/// `feedback_capacity_upper(snr, α)/snr`, continuous at `snr = 0`.
pub fn upper_ratio(snr: f64, alpha: f64) -> Result<f64, BoundsError> {
    check_nonneg("snr", snr)?;
    check_nonneg("alpha", alpha)?;
    let x = (1.0 + alpha) * snr;
    let shrink = if x == 0.0 {
        1.0
    } else {
        (x.ln_1p() / x).min(1.0)
    };
    Ok(cpuc_upper(alpha) * shrink)
}

/// Flash scheme spending exactly `snr` per symbol: `δ = L·snr/(ξ²/σ²)`.
pub fn build_scheme(
    snr: f64,
    block_len: usize,
    xi2_over_sigma2: f64,
) -> Result<FlashScheme, BoundsError> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(BoundsError::BadSnr(snr));
    }
    if block_len == 0 {
        return Err(BoundsError::BadBlockLen);
    }
    if !(xi2_over_sigma2 > 0.0 && xi2_over_sigma2.is_finite()) {
        return Err(BoundsError::BadPulse(xi2_over_sigma2));
    }
    let min_xi2 = block_len as f64 * snr;
    let delta = min_xi2 / xi2_over_sigma2;
    if delta > 1.0 {
        return Err(BoundsError::Infeasible { delta, min_xi2 });
    }
    FlashScheme::new(block_len, xi2_over_sigma2, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub snr: f64,
    pub block_len: usize,
    pub xi2_over_sigma2: f64,
    pub delta: f64,
    pub upper: f64,
    pub lower_t1: f64,
    pub lower_t2: f64,
    pub lower_t3: f64,
    pub t3_std_error: f64,
    pub lower: f64,
    pub upper_ratio: f64,
    pub lower_ratio: f64,
    pub t1_ratio: f64,
    pub t2_ratio: f64,
    pub t3_ratio: f64,
    pub t3_ratio_std_error: f64,
    pub n_samples: usize,
}

impl BoundReport {
    /// Check `lower ≤ upper` and both ratios `≤ ½(1+α)`, each with a
    /// three-standard-error allowance for the Monte-Carlo term. Compared in
    /// ratio form so that deep-subnormal SNRs do not hide violations.
    pub fn check(&self, alpha: f64) -> Result<(), BoundsError> {
        let slack = 3.0 * self.t3_ratio_std_error;
        let cap = cpuc_upper(alpha);
        let fail = |what: String| Err(BoundsError::InvariantViolated(what));
        if self.lower_ratio > self.upper_ratio + slack {
            return fail(format!(
                "lower ratio {} exceeds upper ratio {} at snr {:e}",
                self.lower_ratio, self.upper_ratio, self.snr
            ));
        }
        if self.upper_ratio > cap + slack || self.lower_ratio > cap + slack {
            return fail(format!(
                "ratio exceeds ½(1+α) = {cap} at snr {:e}",
                self.snr
            ));
        }
        Ok(())
    }
}

/// `Σ_{k=1}^{L} α_{k−1}` with `α_0 = 1`.
fn alpha_prefix(coeffs: &CoeffSeq, block_len: usize) -> f64 {
    (0..block_len as u64)
        .map(|nu| coeffs.coeff_or_one(nu))
        .sum()
}

/// Flash lower bound at `snr` for a scheme spending exactly that SNR.
///
/// `t3` is estimated from `mc` draws (half per mixture component); with the
/// same `seed` the estimate is bit-reproducible.
pub fn lower_bound_rate(
    scheme: &FlashScheme,
    coeffs: &CoeffSeq,
    snr: f64,
    mc: usize,
    seed: u64,
) -> Result<BoundReport, BoundsError> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(BoundsError::BadSnr(snr));
    }
    if mc < MIN_MC {
        return Err(BoundsError::BudgetTooSmall(mc));
    }
    let l = scheme.block_len();
    let x = scheme.xi2_over_sigma2();
    let lhs = scheme.delta() * x;
    let rhs = l as f64 * snr;
    if (lhs - rhs).abs() > 1e-9 * rhs {
        return Err(BoundsError::SchemeMismatch { lhs, rhs });
    }
    let alpha = coeffs.total_alpha();

    let t1_ratio = 0.5 * alpha_prefix(coeffs, l) / (1.0 + alpha * l as f64 * snr);
    let t2_ratio =
        0.5 * (1..l as u64).fold(0.0, |acc, nu| acc + (coeffs.coeff_or_one(nu) * x).ln_1p()) / x;

    // t3/snr = D/(L·snr) = (D/δ)/(ξ²/σ²); only the ratios are noise-floor
    // invariant, so σ² = 1 here.
    let (on, off) = flash_densities(scheme, 1.0, coeffs, &[])?;
    let mix = TwoComponentMixture::new(scheme.delta(), on, off)?;
    let slope = mixture_slope_mc(&mix, mc, seed)?;
    let t3_ratio = slope.slope / x;
    let t3_ratio_std_error = slope.std_error / x;

    let lower_ratio = (t1_ratio - t2_ratio - t3_ratio).max(0.0);
    Ok(BoundReport {
        snr,
        block_len: l,
        xi2_over_sigma2: x,
        delta: scheme.delta(),
        upper: feedback_capacity_upper(snr, alpha)?,
        lower_t1: t1_ratio * snr,
        lower_t2: t2_ratio * snr,
        lower_t3: t3_ratio * snr,
        t3_std_error: t3_ratio_std_error * snr,
        lower: lower_ratio * snr,
        upper_ratio: upper_ratio(snr, alpha)?,
        lower_ratio,
        t1_ratio,
        t2_ratio,
        t3_ratio,
        t3_ratio_std_error,
        n_samples: slope.n_samples,
    })
}

/// How a sweep cell `(L, ξ²/σ²)` picks its operating point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SnrRule {
    /// `δ = MIN_DELTA`, the deepest on-probability doubles carry comfortably.
    #[default]
    Deepest,
    /// `δ = exp(−(ξ²/σ² + margin))`, floored at `MIN_DELTA`.
    ExpMargin(f64),
    /// Fixed on-probability.
    FixedDelta(f64),
    /// Fixed SNR; `δ` follows from power matching and must not exceed 1.
    FixedSnr(f64),
}

impl SnrRule {
    pub fn scheme(
        &self,
        block_len: usize,
        xi2_over_sigma2: f64,
    ) -> Result<(FlashScheme, f64), BoundsError> {
        let delta = match *self {
            SnrRule::Deepest => MIN_DELTA,
            SnrRule::ExpMargin(m) => (-(xi2_over_sigma2 + m)).exp().max(MIN_DELTA),
            SnrRule::FixedDelta(d) => {
                if !(d > 0.0 && d <= 1.0) {
                    return Err(BoundsError::BadDelta(d));
                }
                d
            }
            SnrRule::FixedSnr(snr) => {
                let s = build_scheme(snr, block_len, xi2_over_sigma2)?;
                return Ok((s, snr));
            }
        };
        let s = FlashScheme::new(block_len, xi2_over_sigma2, delta)?;
        Ok((s, s.snr()))
    }
}

impl fmt::Display for SnrRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrRule::Deepest => f.write_str("deepest"),
            SnrRule::ExpMargin(m) => write!(f, "exp-margin:{m}"),
            SnrRule::FixedDelta(d) => write!(f, "delta:{d:e}"),
            SnrRule::FixedSnr(s) => write!(f, "snr:{s:e}"),
        }
    }
}

impl FromStr for SnrRule {
    type Err = BoundsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BoundsError::MalformedRule(s.to_string());
        let s = s.trim();
        if s == "deepest" {
            return Ok(SnrRule::Deepest);
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = arg.trim().parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        match name {
            "exp-margin" => Ok(SnrRule::ExpMargin(v)),
            "delta" => Ok(SnrRule::FixedDelta(v)),
            "snr" => Ok(SnrRule::FixedSnr(v)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: usize,
    pub block_len: usize,
    pub xi2_over_sigma2: f64,
    pub snr: f64,
    pub delta: f64,
    pub t1_ratio: f64,
    pub t2_ratio: f64,
    pub t3_ratio: f64,
    pub t3_ratio_std_error: f64,
    pub lower_ratio: f64,
    pub running_max: f64,
}

/// Lower per-unit-cost ratio over the grid `L × ξ²/σ²` (row-major in `L`).
///
/// Cells run in parallel; each draws from its own sub-stream of `seed`, so
/// the table does not depend on scheduling.
pub fn cpuc_lower_sweep(
    coeffs: &CoeffSeq,
    l_grid: &[usize],
    xi_grid: &[f64],
    rule: SnrRule,
    mc: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, BoundsError> {
    if l_grid.is_empty() {
        return Err(BoundsError::EmptyGrid("L"));
    }
    if xi_grid.is_empty() {
        return Err(BoundsError::EmptyGrid("ξ²/σ²"));
    }
    let cells: Vec<(usize, f64)> = l_grid
        .iter()
        .flat_map(|&l| xi_grid.iter().map(move |&x| (l, x)))
        .collect();
    let mut rows = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(l, x))| {
            let (scheme, snr) = rule.scheme(l, x)?;
            let r = lower_bound_rate(
                &scheme,
                coeffs,
                snr,
                mc,
                child_seed(seed, tag::SWEEP_CELL, cell as u32),
            )?;
            Ok(SweepRow {
                cell,
                block_len: l,
                xi2_over_sigma2: x,
                snr,
                delta: scheme.delta(),
                t1_ratio: r.t1_ratio,
                t2_ratio: r.t2_ratio,
                t3_ratio: r.t3_ratio,
                t3_ratio_std_error: r.t3_ratio_std_error,
                lower_ratio: r.lower_ratio,
                running_max: 0.0,
            })
        })
        .collect::<Result<Vec<_>, BoundsError>>()?;
    let mut best = 0.0f64;
    for r in &mut rows {
        best = best.max(r.lower_ratio);
        r.running_max = best;
    }
    Ok(rows)
}

/// How a sandwich row turns its SNR into a flash scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeRule {
    /// Fixed `L` and `ξ²/σ²`; an SNR needing `δ > 1` is an error.
    Fixed {
        block_len: usize,
        xi2_over_sigma2: f64,
    },
    /// Fixed `L`; `ξ²/σ²` is raised to `L·SNR` where needed so that `δ ≤ 1`.
    Saturating {
        block_len: usize,
        xi2_over_sigma2: f64,
    },
}

impl SchemeRule {
    pub fn scheme(&self, snr: f64) -> Result<FlashScheme, BoundsError> {
        match *self {
            SchemeRule::Fixed {
                block_len,
                xi2_over_sigma2,
            } => build_scheme(snr, block_len, xi2_over_sigma2),
            SchemeRule::Saturating {
                block_len,
                xi2_over_sigma2,
            } => build_scheme(snr, block_len, xi2_over_sigma2.max(block_len as f64 * snr)),
        }
    }
}

/// Upper and lower bounds at each SNR of the grid, validated row by row.
pub fn sandwich(
    snr_grid: &[f64],
    coeffs: &CoeffSeq,
    rule: SchemeRule,
    mc: usize,
    seed: u64,
) -> Result<Vec<BoundReport>, BoundsError> {
    if snr_grid.is_empty() {
        return Err(BoundsError::EmptyGrid("SNR"));
    }
    let alpha = coeffs.total_alpha();
    snr_grid
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| {
            let scheme = rule.scheme(snr)?;
            let r = lower_bound_rate(
                &scheme,
                coeffs,
                snr,
                mc,
                child_seed(seed, tag::SWEEP_CELL, i as u32),
            )?;
            r.check(alpha)?;
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geo(r: f64) -> CoeffSeq {
        CoeffSeq::geometric(r).unwrap()
    }

    #[test]
    fn upper_examples() {
        assert_relative_eq!(
            feedback_capacity_upper(1.0, 0.0).unwrap(),
            0.5 * 2f64.ln(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            feedback_capacity_upper(1.0, 1.0).unwrap(),
            0.549_306_144_334_054_8,
            max_relative = 1e-15
        );
        assert_eq!(feedback_capacity_upper(0.0, 7.0).unwrap(), 0.0);
        assert!(feedback_capacity_upper(-1.0, 0.0).is_err());
        assert!(feedback_capacity_upper(1.0, -0.5).is_err());
    }

    #[test]
    fn cpuc_examples() {
        assert_eq!(cpuc_upper(1.0), 1.0);
        assert_eq!(cpuc_upper(0.0), 0.5);
        assert_eq!(cpuc_upper(9.0), 5.0);
        assert_eq!(upper_ratio(0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            upper_ratio(10.0, 1.0).unwrap(),
            0.5 * 21f64.ln() / 10.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn build_scheme_examples() {
        let s = build_scheme(1e-4, 64, 1e6).unwrap();
        assert_relative_eq!(s.delta(), 6.4e-9, max_relative = 1e-15);
        match build_scheme(0.1, 1, 0.05) {
            Err(BoundsError::Infeasible { delta, min_xi2 }) => {
                assert_relative_eq!(delta, 2.0);
                assert_relative_eq!(min_xi2, 0.1);
            }
            other => panic!("{other:?}"),
        }
        let msg = build_scheme(0.1, 1, 0.05).unwrap_err().to_string();
        assert!(msg.contains("1e-1"), "{msg}");
        let s = build_scheme(1e-44 * 100.0 / 32.0, 32, 100.0).unwrap();
        assert_relative_eq!(s.delta(), 1e-44, max_relative = 1e-14);
    }

    #[test]
    fn l1_has_no_t2() {
        let g = geo(0.5);
        let s = build_scheme(1e-3, 1, 50.0).unwrap();
        let r = lower_bound_rate(&s, &g, 1e-3, 4000, 2).unwrap();
        assert_eq!(r.lower_t2.to_bits(), 0f64.to_bits());
        assert_relative_eq!(r.t1_ratio, 0.5 / (1.0 + 1e-3), max_relative = 1e-14);
        assert_relative_eq!(
            r.lower_ratio,
            (r.t1_ratio - r.t3_ratio).max(0.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn memoryless_recovers_one_half() {
        let g = CoeffSeq::memoryless();
        for l in [1, 4, 16] {
            let (s, snr) = SnrRule::Deepest.scheme(l, 400.0).unwrap();
            let r = lower_bound_rate(&s, &g, snr, 4000, 1).unwrap();
            assert_eq!(r.t2_ratio, 0.0);
            assert_relative_eq!(r.t1_ratio, 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn lower_rejects_small_budget_and_mismatch() {
        let g = geo(0.5);
        let s = build_scheme(1e-3, 2, 50.0).unwrap();
        assert_eq!(
            lower_bound_rate(&s, &g, 1e-3, 999, 0),
            Err(BoundsError::BudgetTooSmall(999))
        );
        assert!(matches!(
            lower_bound_rate(&s, &g, 2e-3, 1000, 0),
            Err(BoundsError::SchemeMismatch { .. })
        ));
    }

    #[test]
    fn t3_is_seed_reproducible() {
        let g = geo(0.5);
        let s = build_scheme(1e-20, 8, 60.0).unwrap();
        let a = lower_bound_rate(&s, &g, 1e-20, 5000, 77).unwrap();
        let b = lower_bound_rate(&s, &g, 1e-20, 5000, 77).unwrap();
        assert_eq!(a.lower_t3.to_bits(), b.lower_t3.to_bits());
        assert_eq!(
            a.t3_ratio_std_error.to_bits(),
            b.t3_ratio_std_error.to_bits()
        );
    }

    #[test]
    fn table_saturates_with_block_length() {
        let g = CoeffSeq::table(vec![0.3, 0.2]).unwrap();
        let t1 = |l| {
            let (s, snr) = SnrRule::Deepest.scheme(l, 200.0).unwrap();
            lower_bound_rate(&s, &g, snr, 1000, 0).unwrap().t1_ratio
        };
        assert_relative_eq!(t1(3), 0.75, max_relative = 1e-12);
        assert_eq!(t1(3), t1(4));
        assert_eq!(t1(4), t1(9));
    }

    #[test]
    fn snr_rules() {
        let (s, snr) = SnrRule::FixedDelta(1e-44).scheme(32, 100.0).unwrap();
        assert_eq!(s.delta(), 1e-44);
        assert_relative_eq!(snr, 3.125e-44, max_relative = 1e-15);
        let (s, _) = SnrRule::ExpMargin(10.0).scheme(4, 20.0).unwrap();
        assert_relative_eq!(s.delta(), (-30f64).exp());
        let (s, _) = SnrRule::ExpMargin(10.0).scheme(4, 2000.0).unwrap();
        assert_eq!(s.delta(), MIN_DELTA);
        assert!(SnrRule::FixedSnr(1.0).scheme(4, 2.0).is_err());
        for r in ["deepest", "exp-margin:10", "delta:1e-44", "snr:0.001"] {
            let p: SnrRule = r.parse().unwrap();
            assert_eq!(p.to_string().parse::<SnrRule>().unwrap(), p);
        }
        assert!("exp-margin".parse::<SnrRule>().is_err());
        assert!("nope:1".parse::<SnrRule>().is_err());
    }

    #[test]
    fn single_cell_l1() {
        let rows =
            cpuc_lower_sweep(&geo(0.5), &[1], &[4.0], SnrRule::ExpMargin(10.0), 4000, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(
            rows[0].lower_ratio < 0.5 && rows[0].lower_ratio > 0.3,
            "{:?}",
            rows[0]
        );
    }

    #[test]
    fn sweep_is_schedule_independent() {
        let g = geo(0.5);
        let a =
            cpuc_lower_sweep(&g, &[1, 2, 4], &[50.0, 100.0], SnrRule::Deepest, 2000, 5).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| {
                cpuc_lower_sweep(&g, &[1, 2, 4], &[50.0, 100.0], SnrRule::Deepest, 2000, 5).unwrap()
            });
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1].running_max >= w[0].running_max));
    }

    #[test]
    fn sandwich_saturating_large_snr() {
        let g = geo(0.5);
        let rule = SchemeRule::Saturating {
            block_len: 32,
            xi2_over_sigma2: 100.0,
        };
        let rows = sandwich(&[1e-30, 10.0], &g, rule, 2000, 1).unwrap();
        assert_eq!(rows[1].delta, 1.0);
        assert_relative_eq!(
            rows[1].upper_ratio,
            0.5 * 21f64.ln() / 10.0,
            max_relative = 1e-14
        );
        for r in &rows {
            assert!(r.lower_ratio <= r.upper_ratio + 3.0 * r.t3_ratio_std_error);
            assert!(r.upper_ratio <= 1.0);
        }
        let fixed = SchemeRule::Fixed {
            block_len: 32,
            xi2_over_sigma2: 100.0,
        };
        assert!(matches!(
            sandwich(&[10.0], &g, fixed, 2000, 1),
            Err(BoundsError::Infeasible { .. })
        ));
    }

    proptest! {
        #[test]
        fn upper_ratio_is_nonincreasing(a in 0.0f64..20.0, s in -12.0f64..3.0, step in 0.01f64..2.0) {
            let lo = 10f64.powf(s);
            let hi = 10f64.powf(s + step);
            let r_lo = upper_ratio(lo, a).unwrap();
            let r_hi = upper_ratio(hi, a).unwrap();
            prop_assert!(r_hi <= r_lo);
            prop_assert!(r_lo <= cpuc_upper(a));
        }

        #[test]
        fn upper_is_monotone(s in 0.0f64..1e3, a in 0.0f64..20.0, ds in 0.0f64..10.0, da in 0.0f64..5.0) {
            let base = feedback_capacity_upper(s, a).unwrap();
            prop_assert!(feedback_capacity_upper(s + ds, a).unwrap() >= base);
            prop_assert!(feedback_capacity_upper(s, a + da).unwrap() >= base);
        }

        #[test]
        fn scheme_matches_power(s in -40.0f64..-1.0, l in 1usize..64, x in 1.0f64..1e6) {
            let snr = 10f64.powf(s);
            let sch = build_scheme(snr, l, x).unwrap();
            prop_assert!((sch.delta() * x - l as f64 * snr).abs() <= 1e-14 * l as f64 * snr);
        }

        #[test]
        fn ratio_never_exceeds_half_one_plus_alpha(rho in 0.05f64..0.95, l in 1usize..12, x in 5.0f64..300.0, seed in 0u64..1000) {
            let g = geo(rho);
            let (sch, snr) = SnrRule::Deepest.scheme(l, x).unwrap();
            let r = lower_bound_rate(&sch, &g, snr, 1000, seed).unwrap();
            prop_assert!(r.check(g.total_alpha()).is_ok());
            prop_assert!(r.t1_ratio <= cpuc_upper(g.total_alpha()) * (1.0 + 1e-12));
        }
    }
}
