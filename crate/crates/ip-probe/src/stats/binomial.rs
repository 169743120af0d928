//! Binomial upper-tail probabilities.
//!
//! The sign test only ever needs `p = 0.5`, which has an exact integer
//! path valid for any `n`. General `p` falls back to exact dyadic
//! arithmetic for moderate sizes (every finite f64 is `m / 2^e`, so all
//! terms share one power-of-two denominator and the summation is pure
//! integer work) and to the regularized incomplete beta function beyond.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::StatsError;

/// Inclusive upper tail `P(X >= k)` for `X ~ Bin(n, p)`.
///
/// Absolute error stays below 1e-12 for `n <= 10_000`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::Domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(StatsError::Domain(format!("p = {p} outside [0, 1]")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    if p == 0.5 {
        return Ok(half_tail_exact(k, n));
    }
    // Moderate n and non-extreme p: exact dyadic summation (the only
    // rounding is the final conversion to f64).
    if n <= 1_000 && (1e-6..=1.0 - 1e-6).contains(&p) {
        return Ok(dyadic_tail_exact(k, n, p));
    }
    // Large n or extreme p: P(X >= k) = I_p(k, n - k + 1).
    Ok(statrs::function::beta::beta_reg(k as f64, (n - k + 1) as f64, p))
}

/// Exact `P(X >= k)` for `p = 0.5`: sum of binomial coefficients over 2^n.
fn half_tail_exact(k: u64, n: u64) -> f64 {
    let mut term = binomial_coefficient(n, k);
    let mut sum = term.clone();
    for j in k..n {
        // C(n, j+1) = C(n, j) * (n - j) / (j + 1), exact at every step.
        term = term * BigUint::from(n - j) / BigUint::from(j + 1);
        sum += &term;
    }
    big_ratio_to_f64(&sum, &(BigUint::one() << n as usize))
}

fn binomial_coefficient(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 1..=k {
        c = c * BigUint::from(n - k + i) / BigUint::from(i);
    }
    c
}

/// Decompose a finite f64 in (0, 1) into `(m, e)` with `p = m / 2^e`.
fn dyadic_parts(p: f64) -> (BigUint, u64) {
    let bits = p.to_bits();
    let raw_exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    // p in (0, 1): sign is 0 and the unbiased exponent is negative
    let (mantissa, exponent) = if raw_exponent == 0 {
        (fraction, 1074u64) // subnormal: p = fraction / 2^1074
    } else {
        (fraction | (1u64 << 52), (1075 - raw_exponent) as u64)
    };
    let shift = mantissa.trailing_zeros() as u64;
    (BigUint::from(mantissa >> shift), exponent - shift)
}

/// Exact summation of `sum_{j in S} C(n,j) m^j (2^e - m)^(n-j)` over the
/// smaller of the two tails, complemented against `2^(e*n)` if needed.
fn dyadic_tail_exact(k: u64, n: u64, p: f64) -> f64 {
    let (m, e) = dyadic_parts(p);
    let q = (BigUint::one() << e as usize) - &m; // exact 1 - p numerator
    let denominator = BigUint::one() << (e * n) as usize;

    // Choose the side with fewer terms: the inclusive upper tail has
    // n - k + 1 terms, the strict lower tail has k.
    let (lo, hi, complement) =
        if n - k < k { (k, n, false) } else { (0, k - 1, true) };

    let mut m_pow = m.pow(lo as u32); // m^j for j = lo
    let mut q_pow = q.pow((n - lo) as u32); // q^(n-j) for j = lo
    let mut binom = binomial_coefficient(n, lo);
    let mut sum = &binom * &m_pow * &q_pow;
    for j in lo..hi {
        binom = binom * BigUint::from(n - j) / BigUint::from(j + 1);
        m_pow *= &m;
        q_pow /= &q; // q^i is divisible by q, so this stays exact
        sum += &binom * &m_pow * &q_pow;
    }

    let numerator = if complement { &denominator - sum } else { sum };
    big_ratio_to_f64(&numerator, &denominator)
}

/// Convert `num / den` to f64 without overflowing intermediate conversions.
///
/// Scales the quotient to roughly 120 significant bits first, so the only
/// loss is the final f64 rounding (relative error ~2^-52).
fn big_ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift: i64 = 120 - (num.bits() as i64 - den.bits() as i64);
    let q = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        num / (den << (-shift) as usize)
    };
    let qf = q.to_f64().expect("scaled quotient fits in f64");
    qf * 2f64.powi(-shift as i32)
}
