use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Amount of money in micro-euro. Bills are integers at this scale so that
/// budget-balance identities hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MicroEuro(pub i64);

impl MicroEuro {
    pub const ZERO: MicroEuro = MicroEuro(0);

    /// Nearest micro-euro, halves away from zero.
    pub fn from_euro(euro: f64) -> MicroEuro {
        MicroEuro((euro * 1e6).round() as i64)
    }

    pub fn euro(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Add for MicroEuro {
    type Output = MicroEuro;
    fn add(self, o: MicroEuro) -> MicroEuro {
        MicroEuro(self.0 + o.0)
    }
}

impl Sub for MicroEuro {
    type Output = MicroEuro;
    fn sub(self, o: MicroEuro) -> MicroEuro {
        MicroEuro(self.0 - o.0)
    }
}

impl Sum for MicroEuro {
    fn sum<I: Iterator<Item = MicroEuro>>(iter: I) -> MicroEuro {
        MicroEuro(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for MicroEuro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid amount '{0}': expected a decimal with at most six fraction digits")]
pub struct ParseMoneyError(String);

impl FromStr for MicroEuro {
    type Err = ParseMoneyError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = || ParseMoneyError(text.to_string());
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty()
            || frac.len() > 6
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let whole: i64 = int.parse().map_err(|_| err())?;
        let micro: i64 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<6}").parse().map_err(|_| err())?
        };
        let v = whole
            .checked_mul(1_000_000)
            .and_then(|w| w.checked_add(micro))
            .ok_or_else(err)?;
        Ok(MicroEuro(if neg { -v } else { v }))
    }
}

impl Serialize for MicroEuro {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MicroEuro {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Rounds real-valued shares (euro) of `total` to micro-euro so that they
/// sum to `total` exactly: every share is floored, and the missing units go
/// to the largest fractional remainders (lowest index on ties).
pub fn largest_remainder(total: MicroEuro, shares_euro: &[f64]) -> Vec<MicroEuro> {
    if shares_euro.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = shares_euro.iter().map(|s| s * 1e6).collect();
    let mut out: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let rem: Vec<f64> = scaled.iter().zip(&out).map(|(s, f)| s - *f as f64).collect();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
    // a whole number of rounds first, in case the shares do not add up
    let n = out.len() as i64;
    let missing = total.0 - out.iter().sum::<i64>();
    let (rounds, extra) = (missing.div_euclid(n), missing.rem_euclid(n) as usize);
    for (i, v) in out.iter_mut().enumerate() {
        *v += rounds + i64::from(order[..extra].contains(&i));
    }
    out.into_iter().map(MicroEuro).collect()
}

/// Splits `total` proportionally to `weights`; equal split when the weights
/// sum to zero.
pub fn proportional(total: MicroEuro, weights: &[f64]) -> Vec<MicroEuro> {
    let sum: f64 = weights.iter().sum();
    let n = weights.len() as f64;
    let shares: Vec<f64> = if sum.abs() > 0.0 {
        weights.iter().map(|w| total.euro() * w / sum).collect()
    } else {
        weights.iter().map(|_| total.euro() / n).collect()
    };
    largest_remainder(total, &shares)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_and_parse() {
        for (v, s) in [
            (0, "0.000000"),
            (1, "0.000001"),
            (-1, "-0.000001"),
            (12_345_678, "12.345678"),
            (-5_000_000, "-5.000000"),
        ] {
            assert_eq!(MicroEuro(v).to_string(), s);
            assert_eq!(s.parse::<MicroEuro>().unwrap(), MicroEuro(v));
        }
        assert_eq!("2.5".parse::<MicroEuro>().unwrap(), MicroEuro(2_500_000));
        assert!("1.0000001".parse::<MicroEuro>().is_err());
        assert!("abc".parse::<MicroEuro>().is_err());
        assert!(".5".parse::<MicroEuro>().is_err());
    }

    #[test]
    fn proportional_examples() {
        let t = MicroEuro::from_euro(16.0);
        assert_eq!(proportional(t, &[10.0, 10.0]), vec![MicroEuro::from_euro(8.0); 2]);
        let t = MicroEuro::from_euro(32.0);
        assert_eq!(
            proportional(t, &[30.0, 10.0]),
            vec![MicroEuro::from_euro(24.0), MicroEuro::from_euro(8.0)]
        );
        let t = MicroEuro::from_euro(5.0);
        assert_eq!(proportional(t, &[0.0, 0.0]), vec![MicroEuro::from_euro(2.5); 2]);
        // one micro-euro that cannot be split goes to the first member
        assert_eq!(
            proportional(MicroEuro(1), &[1.0, 1.0]),
            vec![MicroEuro(1), MicroEuro(0)]
        );
    }

    proptest! {
        #[test]
        fn largest_remainder_balances_exactly(
            total in -1_000_000_000i64..1_000_000_000,
            weights in prop::collection::vec(0.0f64..100.0, 1..8),
        ) {
            let t = MicroEuro(total);
            let bills = proportional(t, &weights);
            prop_assert_eq!(bills.iter().copied().sum::<MicroEuro>(), t);
            let sum: f64 = weights.iter().sum();
            for (b, w) in bills.iter().zip(&weights) {
                let ideal = if sum > 0.0 { t.0 as f64 * w / sum } else { t.0 as f64 / weights.len() as f64 };
                prop_assert!((b.0 as f64 - ideal).abs() <= 1.0 + 1e-6 * ideal.abs());
            }
        }

        #[test]
        fn text_round_trip(v in any::<i32>()) {
            let m = MicroEuro(v as i64 * 977);
            prop_assert_eq!(m.to_string().parse::<MicroEuro>().unwrap(), m);
        }
    }
}
