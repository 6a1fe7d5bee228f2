//! Exact rational arithmetic helpers.
//!
//! All probabilities in this crate are exact rationals end-to-end: decimal
//! literals in input files are parsed as exact decimal fractions, so the
//! oracle and the SMT encoding agree without float drift.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational, the probability type of the whole crate.
pub type Rational = num_rational::BigRational;

/// Build a rational from small integers.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Build a rational from an integer.
pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parse a probability-like literal: an integer (`1`), an exact decimal
/// fraction (`0.25` becomes 25/100) or an explicit ratio (`3/8`).
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty number".to_string());
    }
    if let Some((numer, denom)) = text.split_once('/') {
        let n: BigInt = numer
            .parse()
            .map_err(|_| format!("bad numerator in `{text}`"))?;
        let d: BigInt = denom
            .parse()
            .map_err(|_| format!("bad denominator in `{text}`"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in `{text}`"));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = text.split_once('.') {
        let whole = if whole.is_empty() { "0" } else { whole };
        let w: BigInt = whole.parse().map_err(|_| format!("bad number `{text}`"))?;
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad number `{text}`"));
        }
        let f: BigInt = frac.parse().map_err(|_| format!("bad number `{text}`"))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let numer = &w * &scale + if w.is_negative() { -f } else { f };
        return Ok(Rational::new(numer, scale));
    }
    let n: BigInt = text.parse().map_err(|_| format!("bad number `{text}`"))?;
    Ok(Rational::from_integer(n))
}

/// Render a rational in SMT-LIB real syntax: `0`, `1`, `(/ 1 3)`, `(- (/ 1 3))`.
pub fn smtlib_real(r: &Rational) -> String {
    let (sign, mag) = if r.is_negative() {
        (true, -r.clone())
    } else {
        (false, r.clone())
    };
    let body = if mag.denom().is_one() {
        format!("{}.0", mag.numer())
    } else {
        format!("(/ {}.0 {}.0)", mag.numer(), mag.denom())
    };
    if sign {
        format!("(- {body})")
    } else {
        body
    }
}
