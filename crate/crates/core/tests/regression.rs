//! Values frozen from the first seeded runs. A change here means the
//! estimator or the random streams changed, not necessarily that either is wrong.

use ddnoise::bounds::{lower_bound_rate, FlashScheme};
use ddnoise::coeffs::CoeffSeq;
use ddnoise::flashsim::{ppm_error_rate, PpmConfig};

fn geo() -> CoeffSeq {
    CoeffSeq::geometric(0.5).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs()
}

#[test]
fn flash_lower_bound_l32() {
    let s = FlashScheme::new(32, 100.0, 1e-44).unwrap();
    let r = lower_bound_rate(&s, &geo(), s.snr(), 100_000, 20_240_611).unwrap();
    assert!(close(r.t1_ratio, 0.999_999_999_767_169_4), "{}", r.t1_ratio);
    assert!(
        close(r.t2_ratio, 0.077_032_129_286_251_24),
        "{}",
        r.t2_ratio
    );
    assert!(
        close(r.t3_ratio, 0.120_584_648_983_385_65),
        "{}",
        r.t3_ratio
    );
    assert!(
        close(r.lower_ratio, 0.802_383_221_497_532_5),
        "{}",
        r.lower_ratio
    );
}

#[test]
fn ppm_error_counts() {
    let mut cfg = PpmConfig {
        n_blocks: 2,
        n_messages: 2,
        block_len: 4,
        xi2_over_sigma2: 100.0,
        sigma2: 1.0,
        coeffs: geo(),
    };
    assert_eq!(ppm_error_rate(&cfg, 10_000, 20_240_611).unwrap().errors, 0);
    cfg.xi2_over_sigma2 = 16.0;
    assert_eq!(ppm_error_rate(&cfg, 10_000, 20_240_611).unwrap().errors, 35);
}
