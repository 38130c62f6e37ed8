//! Log-domain special functions backing the binomial statistics.
//!
//! The binomial log-pmf follows the saddle-point form used by R's `dbinom`:
//! the Stirling-series remainder `stirlerr` plus the binomial deviance `bd0`.
//! This avoids the catastrophic cancellation of `lgamma(n+1) - lgamma(c+1) -
//! lgamma(n-c+1)` for the trillion-trial sessions this crate handles.

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// stirlerr(n) = ln(n!) - [ (n+1/2) ln n - n + ln(sqrt(2 pi)) ] for n = 1..=15.
const STIRLERR_TABLE: [f64; 16] = [
    0.0, // unused; callers never evaluate at 0
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

const S0: f64 = 1.0 / 12.0;
const S1: f64 = 1.0 / 360.0;
const S2: f64 = 1.0 / 1260.0;
const S3: f64 = 1.0 / 1680.0;
const S4: f64 = 1.0 / 1188.0;

/// Error of the Stirling approximation to `ln(x!)` for integral `x >= 1`.
pub(crate) fn stirlerr(x: f64) -> f64 {
    debug_assert!(x >= 1.0);
    if x <= 15.0 {
        return STIRLERR_TABLE[x as usize];
    }
    let nn = x * x;
    if x > 500.0 {
        (S0 - S1 / nn) / x
    } else if x > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if x > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Binomial deviance term `x ln(x/np) + np - x`, evaluated without
/// cancellation when `x` is close to `np`.
pub(crate) fn bd0(x: f64, np: f64) -> f64 {
    debug_assert!(np > 0.0 && x >= 0.0);
    if x == 0.0 {
        return np;
    }
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1u32;
        loop {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1;
        }
    }
    x * (x / np).ln() + np - x
}

/// Natural log of `n!`, exact summation below 256 and Stirling above.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0.0f64; 256];
        for i in 2..256 {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    if n < 256 {
        table[n as usize]
    } else {
        let x = n as f64;
        (x + 0.5) * x.ln() - x + LN_SQRT_2PI + stirlerr(x)
    }
}

/// Log of the binomial pmf `C(n,c) p^c (1-p)^(n-c)`.
///
/// Stable for all `n` representable in f64 and for `p` anywhere in `[0,1]`,
/// including the far tails where the direct product underflows.
pub(crate) fn ln_binom_pmf(c: u64, n: u64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if c > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if c == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if c == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if n == 0 {
        return 0.0;
    }
    if c == 0 {
        return n as f64 * (-p).ln_1p();
    }
    if c == n {
        return n as f64 * p.ln();
    }
    let nf = n as f64;
    let cf = c as f64;
    let lc = stirlerr(nf) - stirlerr(cf) - stirlerr(nf - cf)
        - bd0(cf, nf * p)
        - bd0(nf - cf, nf * (1.0 - p));
    let lf = LN_2PI + cf.ln() + (-cf / nf).ln_1p();
    lc - 0.5 * lf
}

const CF_MAX_ITER: usize = 1_000_000;
const CF_EPS: f64 = 3e-16;
const CF_TINY: f64 = 1e-300;

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Binomial CDF `P(X <= s)` for `X ~ Binomial(n, p)` via the regularized
/// incomplete beta `I_{1-p}(n-s, s+1)`.
///
/// The beta prefactor is obtained from the binomial log-pmf, so the whole
/// computation stays accurate out to counts of order 1e13.
pub(crate) fn binomial_cdf_impl(s: u64, n: u64, p: f64) -> f64 {
    if s >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let a = (n - s) as f64;
    let b = (s + 1) as f64;
    let x = 1.0 - p;
    // x^a (1-x)^b * Gamma(a+b) / (Gamma(a) Gamma(b)) = pmf(s; n, p) * p * (n-s)
    let ln_bt = ln_binom_pmf(s, n, p) + p.ln() + a.ln();
    let bt = ln_bt.exp();
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    };
    v.clamp(0.0, 1.0)
}
