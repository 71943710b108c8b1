//! Noise-memory coefficients `α_ν`, `ν ≥ 1`.
//!
//! The channel's noise variance at time `k` is `σ² + Σ α_{k−ν} x_ν²`, so the
//! sequence describes how long the channel stays "hot" after a transmission.
//! `α_0 = 1` is a separate convention used by the bounds and is never stored
//! here.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default relative tolerance for truncated sums.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// First index handed to the Euler-Maclaurin tail of the power-law family.
const POWER_LAW_EM_START: u64 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("coefficient index must be >= 1 (alpha_0 = 1 is a convention, not sequence data)")]
    ZeroIndex,
    #[error("ρ must lie in (0,1), got {0}")]
    BadRatio(f64),
    #[error("power-law exponent must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("super-exponential base must exceed 1, got {0}")]
    BadBase(f64),
    #[error("coefficients must be finite and non-negative, got {0}")]
    Negative(f64),
    #[error("malformed coefficient spec `{0}` (expected geometric:ρ, powerlaw:c,p, superexp:c,b or table:a1,a2,...)")]
    Malformed(String),
}

/// Closed-form family or explicit table.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffKind {
    /// `α_ν = ρ^ν`.
    Geometric { rho: f64 },
    /// `α_ν = c·ν^(−p)`.
    PowerLaw { c: f64, p: f64 },
    /// `α_ν = c·b^(−ν²)`.
    SuperExponential { c: f64, base: f64 },
    /// `α_ν = values[ν−1]`, zero beyond the end.
    Table(Vec<f64>),
}

/// Outcome of the high-SNR decay-rate test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum HighSnrClass {
    /// `liminf α_{ν+1}/α_ν > 0`: capacity (even with feedback) stays bounded.
    Bounded,
    /// `limsup α_{ν+1}/α_ν = 0`: capacity grows without bound.
    Unbounded,
    /// Neither condition can be established.
    Indeterminate,
}

impl fmt::Display for HighSnrClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HighSnrClass::Bounded => "Bounded",
            HighSnrClass::Unbounded => "Unbounded",
            HighSnrClass::Indeterminate => "Indeterminate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Classification {
    pub class: HighSnrClass,
    /// Liminf of successive ratios (exact for closed forms, windowed estimate for tables).
    pub liminf: f64,
    /// Limsup of successive ratios.
    pub limsup: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeq {
    kind: CoeffKind,
    tail_tol: f64,
}

impl CoeffSeq {
    pub fn geometric(rho: f64) -> Result<Self, CoeffError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(CoeffError::BadRatio(rho));
        }
        Ok(Self::from_kind(CoeffKind::Geometric { rho }))
    }

    pub fn power_law(c: f64, p: f64) -> Result<Self, CoeffError> {
        check_non_negative(c)?;
        if p <= 1.0 || !p.is_finite() {
            return Err(CoeffError::BadExponent(p));
        }
        Ok(Self::from_kind(CoeffKind::PowerLaw { c, p }))
    }

    pub fn super_exponential(c: f64, base: f64) -> Result<Self, CoeffError> {
        check_non_negative(c)?;
        if base <= 1.0 || !base.is_finite() {
            return Err(CoeffError::BadBase(base));
        }
        Ok(Self::from_kind(CoeffKind::SuperExponential { c, base }))
    }

    pub fn table(values: Vec<f64>) -> Result<Self, CoeffError> {
        for &v in &values {
            check_non_negative(v)?;
        }
        Ok(Self::from_kind(CoeffKind::Table(values)))
    }

    /// Memoryless channel (`α = 0`).
    pub fn memoryless() -> Self {
        Self::from_kind(CoeffKind::Table(Vec::new()))
    }

    fn from_kind(kind: CoeffKind) -> Self {
        Self {
            kind,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn kind(&self) -> &CoeffKind {
        &self.kind
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    /// `α_ν` for `ν ≥ 1`.
    pub fn coeff_at(&self, nu: u64) -> Result<f64, CoeffError> {
        if nu == 0 {
            return Err(CoeffError::ZeroIndex);
        }
        Ok(self.raw(nu))
    }

    /// `α_ν` with the `α_0 = 1` convention folded in.
    pub fn coeff_or_one(&self, nu: u64) -> f64 {
        if nu == 0 {
            1.0
        } else {
            self.raw(nu)
        }
    }

    #[inline]
    fn raw(&self, nu: u64) -> f64 {
        match &self.kind {
            CoeffKind::Geometric { rho } => rho.powf(nu as f64),
            CoeffKind::PowerLaw { c, p } => c * (nu as f64).powf(-p),
            CoeffKind::SuperExponential { c, base } => {
                let n = nu as f64;
                c * base.powf(-(n * n))
            }
            CoeffKind::Table(v) => v.get((nu - 1) as usize).copied().unwrap_or(0.0),
        }
    }

    /// `α = Σ_{ν≥1} α_ν`.
    pub fn total_alpha(&self) -> f64 {
        self.tail(1)
    }

    /// `Σ_{ν≥ℓ} α_ν`.
    pub fn tail_sum(&self, ell: u64) -> Result<f64, CoeffError> {
        if ell == 0 {
            return Err(CoeffError::ZeroIndex);
        }
        Ok(self.tail(ell))
    }

    fn tail(&self, ell: u64) -> f64 {
        match &self.kind {
            CoeffKind::Geometric { rho } => rho.powf(ell as f64) / (1.0 - rho),
            CoeffKind::PowerLaw { c, p } => c * hurwitz_tail(*p, ell),
            CoeffKind::SuperExponential { c, base } => {
                if *c == 0.0 {
                    return 0.0;
                }
                // Successive ratios b^{-(2ν+1)} shrink, so the remainder after
                // term ν is dominated by a geometric series with that ratio.
                let mut sum = 0.0;
                let mut nu = ell;
                loop {
                    let term = self.raw(nu);
                    sum += term;
                    let ratio = base.powf(-(2.0 * nu as f64 + 1.0));
                    let remainder = term * ratio / (1.0 - ratio);
                    // Terms vanish this fast, so summing to full precision is cheap.
                    if remainder <= self.tail_tol.min(0.5 * f64::EPSILON) * sum || term == 0.0 {
                        break;
                    }
                    nu += 1;
                }
                sum
            }
            CoeffKind::Table(v) => {
                let start = (ell - 1) as usize;
                v.iter().skip(start).fold(0.0, |a, b| a + b)
            }
        }
    }

    /// Smallest horizon `H` such that `Σ_{ν>H} α_ν · max_power < tol · floor`.
    /// Tables return at most their length. Returns `None` when no horizon up to
    /// `cap` satisfies the criterion.
    pub fn horizon_for(&self, max_power: f64, floor: f64, tol: f64, cap: usize) -> Option<usize> {
        if let CoeffKind::Table(v) = &self.kind {
            return Some(v.len().min(cap));
        }
        if max_power == 0.0 {
            return Some(0);
        }
        let target = tol * floor / max_power;
        // Tail sums are monotone, so bisect on the horizon.
        if self.tail(cap as u64 + 1) >= target {
            return None;
        }
        let (mut lo, mut hi) = (0usize, cap);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.tail(mid as u64 + 1) < target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }

    /// Decide the high-SNR boundedness class from the decay of `α_{ν+1}/α_ν`.
    ///
    /// Closed forms are decided analytically. Tables use the ratios over the
    /// second half of `1..horizon`; a horizon reaching the table's implicit
    /// zero tail always yields `Indeterminate`, because finite data cannot
    /// settle an asymptotic condition.
    pub fn classify_high_snr(&self, horizon: u64) -> Classification {
        let horizon = horizon.max(2);
        match &self.kind {
            CoeffKind::Geometric { rho } => Classification {
                class: HighSnrClass::Bounded,
                liminf: *rho,
                limsup: *rho,
                note: format!("geometric: ratio is constant at ρ = {rho}"),
            },
            CoeffKind::PowerLaw { c, .. } if *c > 0.0 => Classification {
                class: HighSnrClass::Bounded,
                liminf: 1.0,
                limsup: 1.0,
                note: "power law: ratio (ν/(ν+1))^p tends to 1".into(),
            },
            CoeffKind::SuperExponential { c, .. } if *c > 0.0 => Classification {
                class: HighSnrClass::Unbounded,
                liminf: 0.0,
                limsup: 0.0,
                note: "super-exponential: ratio b^-(2ν+1) tends to 0".into(),
            },
            // c = 0: every ratio is 0/0 = 0.
            CoeffKind::PowerLaw { .. } | CoeffKind::SuperExponential { .. } => Classification {
                class: HighSnrClass::Unbounded,
                liminf: 0.0,
                limsup: 0.0,
                note: "all coefficients vanish; every ratio is 0/0 = 0".into(),
            },
            CoeffKind::Table(values) => {
                let last = horizon - 1;
                let first = (horizon / 2).max(1);
                let (mut inf, mut sup) = (f64::INFINITY, 0.0f64);
                for nu in first..=last {
                    let r = decay_ratio(self.raw(nu + 1), self.raw(nu));
                    inf = inf.min(r);
                    sup = sup.max(r);
                }
                let len = values.len() as u64;
                if horizon >= len {
                    return Classification {
                        class: HighSnrClass::Indeterminate,
                        liminf: inf,
                        limsup: sup,
                        note: format!(
                            "table has {len} entries and is zero beyond; horizon {horizon} reaches the zero tail, so the asymptotic ratios are not determined by the data"
                        ),
                    };
                }
                let class = if inf > 0.0 {
                    HighSnrClass::Bounded
                } else if sup == 0.0 {
                    HighSnrClass::Unbounded
                } else {
                    HighSnrClass::Indeterminate
                };
                Classification {
                    class,
                    liminf: inf,
                    limsup: sup,
                    note: format!(
                        "estimated from ratios at ν = {first}..{last} of a {len}-entry table"
                    ),
                }
            }
        }
    }
}

/// `a/b` with `a/0 = ∞` for `a > 0` and `0/0 = 0`.
pub fn decay_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        a / b
    }
}

fn check_non_negative(v: f64) -> Result<(), CoeffError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CoeffError::Negative(v))
    }
}

/// `Σ_{ν≥ℓ} ν^(−p)`: direct terms up to `POWER_LAW_EM_START`, then an
/// Euler-Maclaurin expansion of the remainder.
fn hurwitz_tail(p: f64, ell: u64) -> f64 {
    let start = ell.max(POWER_LAW_EM_START);
    let direct: f64 = (ell..start).map(|nu| (nu as f64).powf(-p)).sum();
    direct + euler_maclaurin_tail(p, start as f64)
}

fn euler_maclaurin_tail(p: f64, a: f64) -> f64 {
    // B_2, B_4, ..., B_12
    const BERNOULLI: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let mut sum = a.powf(1.0 - p) / (p - 1.0) + 0.5 * a.powf(-p);
    // rising factorial (p)_{2j-1} and (2j)!
    let mut rising = p;
    let mut fact = 2.0;
    let mut power = a.powf(-p - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b / fact * rising * power;
        let m = 2.0 * j as f64 + 1.0;
        rising *= (p + m) * (p + m + 1.0);
        fact *= (m + 2.0) * (m + 3.0);
        power /= a * a;
    }
    sum
}

impl fmt::Display for CoeffSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CoeffKind::Geometric { rho } => write!(f, "geometric:{rho}"),
            CoeffKind::PowerLaw { c, p } => write!(f, "powerlaw:{c},{p}"),
            CoeffKind::SuperExponential { c, base } => write!(f, "superexp:{c},{base}"),
            CoeffKind::Table(v) => {
                f.write_str("table:")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl serde::Serialize for CoeffSeq {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for CoeffSeq {
    type Err = CoeffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CoeffError::Malformed(s.to_string());
        let (name, args) = s.trim().split_once(':').ok_or_else(malformed)?;
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| malformed()))
                .collect::<Result<_, _>>()?
        };
        match (name.trim(), nums.as_slice()) {
            ("geometric", [rho]) => Self::geometric(*rho),
            ("powerlaw", [c, p]) => Self::power_law(*c, *p),
            ("superexp", [c, b]) => Self::super_exponential(*c, *b),
            ("table", _) => Self::table(nums),
            _ => Err(malformed()),
        }
    }
}
