//! Exact rational helpers shared by the structural and stationary modules.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rat) -> f64 {
    match r.to_f64() {
        Some(v) => v,
        None => {
            // Fall back on a scaled quotient when numerator/denominator overflow f64.
            let shift = r.denom().bits().max(r.numer().bits()).saturating_sub(900);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Closest-fraction conversion is not needed here: callers only feed
/// floats that came from simulation output, so the binary value is exact.
pub fn from_f64(v: f64) -> Option<Rat> {
    Rat::from_float(v)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRatError(pub String);

/// Parses `p/q`, integers and decimal literals (`0.01`, `-2.5e-3`) exactly.
pub fn parse_rat(text: &str) -> Result<Rat, ParseRatError> {
    let err = || ParseRatError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rat::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = s[i + 1..].parse().map_err(|_| err())?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let numer: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().map_err(|_| err())? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rat::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rat::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// `num/den`, or just `num` for integers.
pub fn format_exact(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Renders with 12 significant digits, trimming trailing zeros.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Largest rational `d` such that every input is an integer multiple of `d`.
pub fn rational_gcd<'a>(values: impl IntoIterator<Item = &'a Rat>) -> Option<Rat> {
    let mut acc: Option<Rat> = None;
    for v in values {
        let v = v.abs();
        acc = Some(match acc {
            None => v,
            Some(a) => {
                // gcd(a/b, c/d) = gcd(a d, c b) / (b d)
                let num = (a.numer() * v.denom()).gcd(&(v.numer() * a.denom()));
                Rat::new(num, a.denom() * v.denom())
            }
        });
    }
    acc
}

pub fn lcm_of_denominators(values: &[Rat]) -> BigInt {
    values.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Scales a rational vector to coprime integers, keeping its direction.
pub fn to_primitive_integer(values: &[Rat]) -> Vec<BigInt> {
    let l = lcm_of_denominators(values);
    let ints: Vec<BigInt> = values.iter().map(|v| (v * Rat::from_integer(l.clone())).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|v| v / &g).collect()
}

pub struct Exact<'a>(pub &'a Rat);

impl fmt::Display for Exact<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_exact(self.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(parse_rat("0.01").unwrap(), ratio(1, 100));
        assert_eq!(parse_rat("0.2").unwrap(), ratio(1, 5));
        assert_eq!(parse_rat("0.3").unwrap(), ratio(3, 10));
        assert_eq!(parse_rat("-2.5e-3").unwrap(), ratio(-1, 400));
        assert_eq!(parse_rat("701/7").unwrap(), ratio(701, 7));
        assert_eq!(parse_rat("7").unwrap(), rat(7));
        assert_eq!(parse_rat(".5").unwrap(), ratio(1, 2));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("abc").is_err());
        assert!(parse_rat("1.2.3").is_err());
    }

    #[test]
    fn gcd_of_rationals() {
        assert_eq!(rational_gcd(&[rat(1), rat(2)]).unwrap(), rat(1));
        assert_eq!(rational_gcd(&[ratio(2, 3), ratio(1, 2)]).unwrap(), ratio(1, 6));
        let taus: Vec<Rat> = ["0.01", "0.01", "0.01", "4", "3", "3", "1", "0.01", "6", "7"]
            .iter()
            .map(|s| parse_rat(s).unwrap())
            .collect();
        assert_eq!(rational_gcd(&taus).unwrap(), ratio(1, 100));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(format_decimal(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_decimal(25.0 / 3.0), "8.33333333333");
        assert_eq!(format_decimal(0.5), "0.5");
        assert_eq!(format_exact(&ratio(4, 6)), "2/3");
    }

    #[test]
    fn huge_rationals_convert() {
        let big = Rat::new(num_traits::pow(BigInt::from(10), 400) * 3, num_traits::pow(BigInt::from(10), 400));
        assert!((to_f64(&big) - 3.0).abs() < 1e-12);
    }
}
