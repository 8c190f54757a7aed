use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An ℓp exponent in `[1, ∞]`. Rational exponents such as `"4/3"` keep their
/// exact value so the conjugate `q = p/(p−1)` is exact too.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Rational(Ratio<i64>),
    Real(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Exponent::Infinity);
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "norm exponent must lie in [1, ∞], got {p}"
            )));
        }
        if p.fract() == 0.0 && p < 1e9 {
            return Ok(Exponent::Rational(Ratio::from_integer(p as i64)));
        }
        Ok(Exponent::Real(p))
    }

    pub fn ratio(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidConfig("zero denominator in exponent".into()));
        }
        let r = Ratio::new(num, den);
        if r < Ratio::from_integer(1) {
            return Err(Error::InvalidConfig(format!(
                "norm exponent must lie in [1, ∞], got {r}"
            )));
        }
        Ok(Exponent::Rational(r))
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Exponent::Real(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// Hölder conjugate, `1/p + 1/q = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Rational(r) if r == Ratio::from_integer(1) => Exponent::Infinity,
            Exponent::Rational(r) => Exponent::Rational(r / (r - Ratio::from_integer(1))),
            Exponent::Real(p) => Exponent::Real(p / (p - 1.0)),
            Exponent::Infinity => Exponent::Rational(Ratio::from_integer(1)),
        }
    }

    pub fn is_one(self) -> bool {
        self.value() == 1.0
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Rational(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Exponent::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Exponent::Real(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "inf" | "infinity" | "∞") {
            return Ok(Exponent::Infinity);
        }
        if let Some((a, b)) = s.split_once('/') {
            let parse = |t: &str| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad rational exponent `{s}`")))
            };
            return Exponent::ratio(parse(a)?, parse(b)?);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad exponent `{s}`")))?;
        Exponent::new(p)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Real(p) => s.serialize_f64(*p),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::new(p),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_conjugates_are_exact() {
        let p: Exponent = "4/3".parse().unwrap();
        assert_eq!(p.conjugate(), Exponent::Rational(Ratio::from_integer(4)));
        assert_eq!(p.conjugate().conjugate(), p);
        assert_eq!(Exponent::new(1.0).unwrap().conjugate(), Exponent::Infinity);
        assert_eq!(Exponent::Infinity.conjugate().value(), 1.0);
        assert_eq!(Exponent::new(2.0).unwrap().conjugate().value(), 2.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!("1/2".parse::<Exponent>().is_err());
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
    }

    #[test]
    fn serde_round_trip() {
        for text in ["\"4/3\"", "1.5", "\"inf\"", "\"3\""] {
            let p: Exponent = serde_json::from_str(text).unwrap();
            let back: Exponent = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            assert_eq!(p, back);
        }
    }
}
