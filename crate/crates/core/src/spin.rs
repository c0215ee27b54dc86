//! Half-integer quantum numbers and the electron-nuclear spin system.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An integer or half-integer, stored as twice its value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }

    /// Converts a float that lies on the half-integer lattice.
    pub fn try_from_f64(x: f64) -> Result<Self> {
        let twice = 2.0 * x;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 || twice.abs() > 1e6 {
            return Err(Error::InvalidSpin(format!("{x} is not a multiple of 1/2")));
        }
        Ok(HalfInt(twice.round() as i32))
    }

    /// Projections `-self, -self + 1, ..., +self`. Empty for negative values.
    pub fn projections(self) -> impl DoubleEndedIterator<Item = HalfInt> + Clone {
        let top = self.0;
        (0..=top).map(move |k| HalfInt(2 * k - top))
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl PartialOrd for HalfInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HalfInt {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl fmt::Debug for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts `7/2`, `-3/2`, `+1/2`, `8` and decimals such as `3.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpin(format!("cannot parse {s:?} as a half-integer"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().trim_start_matches('+').parse().map_err(|_| bad())?;
            match den.trim() {
                "2" => Ok(HalfInt(num)),
                "1" => Ok(HalfInt(2 * num)),
                _ => Err(bad()),
            }
        } else {
            let x: f64 = s.trim_start_matches('+').parse().map_err(|_| bad())?;
            HalfInt::try_from_f64(x)
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(x) => HalfInt::try_from_f64(x).map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Electronic angular momentum `J` coupled to a nuclear spin `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub j: HalfInt,
    pub i: HalfInt,
}

impl SpinSystem {
    pub fn new(j: HalfInt, i: HalfInt) -> Result<Self> {
        check_spin(j)?;
        check_spin(i)?;
        Ok(SpinSystem { j, i })
    }

    /// Ho³⁺ (`J = 8`) with the ¹⁶⁵Ho nucleus (`I = 7/2`).
    pub fn holmium() -> Self {
        SpinSystem {
            j: HalfInt::from_int(8),
            i: HalfInt::from_twice(7),
        }
    }

    pub fn electronic_dim(&self) -> usize {
        (self.j.twice() + 1) as usize
    }

    pub fn nuclear_dim(&self) -> usize {
        (self.i.twice() + 1) as usize
    }

    pub fn product_dim(&self) -> usize {
        self.electronic_dim() * self.nuclear_dim()
    }

    pub fn m_values(&self) -> Vec<HalfInt> {
        self.j.projections().collect()
    }

    pub fn mz_values(&self) -> Vec<HalfInt> {
        self.i.projections().collect()
    }

    /// `J(J+1)`
    pub fn jj1(&self) -> f64 {
        let j = self.j.value();
        j * (j + 1.0)
    }

    /// `I(I+1)`
    pub fn ii1(&self) -> f64 {
        let i = self.i.value();
        i * (i + 1.0)
    }
}

pub(crate) fn check_spin(j: HalfInt) -> Result<()> {
    if j.twice() < 0 {
        return Err(Error::InvalidSpin(format!("negative angular momentum {j}")));
    }
    if j.twice() > 200 {
        return Err(Error::InvalidSpin(format!("angular momentum {j} is unreasonably large")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_forms() {
        assert_eq!("-7/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(-7));
        assert_eq!("+1/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(1));
        assert_eq!("3.5".parse::<HalfInt>().unwrap(), HalfInt::from_twice(7));
        assert_eq!("8".parse::<HalfInt>().unwrap(), HalfInt::from_int(8));
        assert!("2.3".parse::<HalfInt>().is_err());
        assert!("1/3".parse::<HalfInt>().is_err());
        assert!("x".parse::<HalfInt>().is_err());
    }

    #[test]
    fn projections_ascending() {
        let ms: Vec<_> = HalfInt::from_twice(7).projections().map(|m| m.twice()).collect();
        assert_eq!(ms, vec![-7, -5, -3, -1, 1, 3, 5, 7]);
        assert_eq!(HalfInt::ZERO.projections().count(), 1);
    }

    #[test]
    fn holmium_dimensions() {
        let sys = SpinSystem::holmium();
        assert_eq!(sys.electronic_dim(), 17);
        assert_eq!(sys.nuclear_dim(), 8);
        assert_eq!(sys.product_dim(), 136);
    }

    #[test]
    fn rejects_negative() {
        assert!(SpinSystem::new(HalfInt::from_int(-1), HalfInt::ZERO).is_err());
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(twice in -41i32..41) {
            let h = HalfInt::from_twice(twice);
            prop_assert_eq!(h.to_string().parse::<HalfInt>().unwrap(), h);
            prop_assert_eq!(HalfInt::try_from_f64(h.value()).unwrap(), h);
        }
    }
}
