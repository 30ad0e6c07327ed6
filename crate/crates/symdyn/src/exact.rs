//! Exact rational scalars and the numeric helpers built on them.
//!
//! Every real-valued quantity in this crate (interval endpoints, map
//! coefficients, probabilities) is an arbitrary-precision rational kept in
//! canonical form. No operation ever rounds.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Canonical-form arbitrary-precision rational. `BigRational` maintains
/// gcd-reduced form with a positive denominator on every operation.
pub type Rat = BigRational;

/// Shorthand constructor from machine integers.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

/// Parse a rational from a `"num/den"` or bare integer string.
pub fn rat_from_str(s: &str) -> Result<Rat> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
    let den: BigInt = den
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
    if den.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Rat::new(num, den))
}

/// Render a rational as `"num/den"` (always with the slash, bit-exact).
pub fn rat_to_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// The dyadic rational `k / 2^bits`.
pub fn dyadic(k: BigUint, bits: u64) -> Rat {
    let den = BigInt::one() << bits;
    Rat::new(BigInt::from_biguint(Sign::Plus, k), den)
}

/// `2^exp` as an exact rational, for any sign of `exp`.
pub fn pow2(exp: i64) -> Rat {
    if exp >= 0 {
        Rat::from_integer(BigInt::one() << exp as u64)
    } else {
        Rat::new(BigInt::one(), BigInt::one() << (-exp) as u64)
    }
}

/// Compare a positive rational `r` against `2^(p/q)` exactly (`q > 0`).
///
/// Returns the ordering of `r` versus the threshold, decided in the integer
/// domain: `r > 2^(p/q)  iff  r^q > 2^p`.
pub fn cmp_pow2(r: &Rat, p: i64, q: u64) -> std::cmp::Ordering {
    assert!(q > 0 && r.is_positive());
    let num = r.numer().pow(q as u32);
    let den = r.denom().pow(q as u32);
    // r^q vs 2^p  <=>  num * 2^{-p} vs den (shift onto whichever side keeps
    // exponents nonnegative)
    if p >= 0 {
        num.cmp(&(den << p as u64))
    } else {
        (num << (-p) as u64).cmp(&den)
    }
}

/// `log2` of a positive rational, accurate to roughly f64 precision.
///
/// The value is normalized by bit length so that magnitudes far outside the
/// f64 range (routine here: interval lengths like 2^-3000) are handled.
pub fn log2_rat(r: &Rat) -> f64 {
    assert!(r.is_positive(), "log2 of non-positive rational");
    log2_bigint(r.numer()) - log2_bigint(r.denom())
}

fn log2_bigint(x: &BigInt) -> f64 {
    let mag = x.magnitude();
    let bits = mag.bits();
    if bits <= 52 {
        return (mag.to_u64().unwrap() as f64).log2();
    }
    // keep the top 53 bits, remember the shift
    let shift = bits - 53;
    let top: BigUint = mag >> shift;
    (top.to_u64().unwrap() as f64).log2() + shift as f64
}

/// Convert to f64 (sufficient for reporting; never used in exact decisions).
pub fn rat_to_f64(r: &Rat) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    sign * 2f64.powf(log2_rat(&r.abs()))
}

/// Binary entropy of a list of exact probabilities, in bits.
pub fn entropy(p: &[Rat]) -> f64 {
    let mut h = 0.0;
    for pi in p {
        if pi.is_positive() {
            let v = rat_to_f64(pi);
            h -= v * log2_rat(pi);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let r = rat_from_str("-6/4").unwrap();
        assert_eq!(r, rat(-3, 2));
        assert_eq!(rat_to_string(&r), "-3/2");
        assert_eq!(rat_from_str("7").unwrap(), rat(7, 1));
        assert!(rat_from_str("1/0").is_err());
        assert!(rat_from_str("x/2").is_err());
    }

    #[test]
    fn pow2_signs() {
        assert_eq!(pow2(3), rat(8, 1));
        assert_eq!(pow2(-2), rat(1, 4));
        assert_eq!(pow2(0), rat(1, 1));
    }

    #[test]
    fn cmp_pow2_exact() {
        use std::cmp::Ordering::*;
        // 1/8 vs 2^{-3}
        assert_eq!(cmp_pow2(&rat(1, 8), -3, 1), Equal);
        // 1/7 > 2^{-3}
        assert_eq!(cmp_pow2(&rat(1, 7), -3, 1), Greater);
        // 3/4 vs 2^{-2/5}: (3/4)^5 = 243/1024 vs 2^-2 = 256/1024 -> Less
        assert_eq!(cmp_pow2(&rat(3, 4), -2, 5), Less);
    }

    #[test]
    fn log2_matches_f64_on_small_values() {
        assert!((log2_rat(&rat(1, 8)) + 3.0).abs() < 1e-12);
        assert!((log2_rat(&rat(3, 1)) - 3f64.log2()).abs() < 1e-12);
        // a value far below f64 range
        let tiny = pow2(-3000) * rat(5, 3);
        let expect = -3000.0 + (5f64 / 3f64).log2();
        assert!((log2_rat(&tiny) - expect).abs() < 1e-9);
    }

    #[test]
    fn entropy_of_binary() {
        let h = entropy(&[rat(2, 3), rat(1, 3)]);
        let expect = 3f64.log2() - 2.0 / 3.0;
        assert!((h - expect).abs() < 1e-12);
    }
}
