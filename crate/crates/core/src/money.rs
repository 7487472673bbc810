use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Integer amount in minor currency units.
///
/// Arithmetic is checked: an overflow panics rather than wrapping. Instance
/// validation bounds every input so that sums over a market stay far from the
/// 64-bit limit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn new(amount: i64) -> Self {
        Money(amount)
    }

    pub fn amount(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn to_q(self) -> MoneyQ {
        MoneyQ::from(self)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i64> for Money {
    fn from(v: i64) -> Self {
        Money(v)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("money overflow"))
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0.checked_sub(rhs.0).expect("money overflow"))
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(self.0.checked_neg().expect("money overflow"))
    }
}

impl Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(self.0.checked_mul(rhs).expect("money overflow"))
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        *self = *self - rhs;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

/// Exact rational amount, always in lowest terms with a positive denominator.
///
/// Renders as `"num/den"`, or just `"num"` when the denominator is one.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MoneyQ(BigRational);

impl MoneyQ {
    pub fn zero() -> Self {
        MoneyQ(BigRational::zero())
    }

    pub fn from_integer(v: i64) -> Self {
        MoneyQ(BigRational::from_integer(BigInt::from(v)))
    }

    /// Panics if `den` is zero.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        MoneyQ(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn min(self, other: MoneyQ) -> MoneyQ {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn one() -> Self {
        MoneyQ(BigRational::one())
    }
}

impl From<Money> for MoneyQ {
    fn from(m: Money) -> Self {
        MoneyQ::from_integer(m.0)
    }
}

impl From<BigRational> for MoneyQ {
    fn from(r: BigRational) -> Self {
        MoneyQ(r)
    }
}

impl fmt::Display for MoneyQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational {0:?}: expected \"n\" or \"num/den\"")]
pub struct ParseMoneyQError(pub String);

impl FromStr for MoneyQ {
    type Err = ParseMoneyQError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMoneyQError(s.to_string());
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num: BigInt = num.parse().map_err(|_| err())?;
        let den: BigInt = den.parse().map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        Ok(MoneyQ(BigRational::new(num, den)))
    }
}

impl Serialize for MoneyQ {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MoneyQ {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for MoneyQ {
            type Output = MoneyQ;
            fn $method(self, rhs: MoneyQ) -> MoneyQ {
                MoneyQ((self.0).$method(rhs.0))
            }
        }

        impl<'a> $trait<&'a MoneyQ> for &'a MoneyQ {
            type Output = MoneyQ;
            fn $method(self, rhs: &'a MoneyQ) -> MoneyQ {
                MoneyQ((&self.0).$method(&rhs.0))
            }
        }

        impl<'a> $trait<&'a MoneyQ> for MoneyQ {
            type Output = MoneyQ;
            fn $method(self, rhs: &'a MoneyQ) -> MoneyQ {
                MoneyQ((self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for MoneyQ {
    type Output = MoneyQ;
    fn neg(self) -> MoneyQ {
        MoneyQ(-self.0)
    }
}

impl Neg for &MoneyQ {
    type Output = MoneyQ;
    fn neg(self) -> MoneyQ {
        MoneyQ(-&self.0)
    }
}

impl AddAssign for MoneyQ {
    fn add_assign(&mut self, rhs: MoneyQ) {
        self.0 += rhs.0;
    }
}

impl<'a> AddAssign<&'a MoneyQ> for MoneyQ {
    fn add_assign(&mut self, rhs: &'a MoneyQ) {
        self.0 += &rhs.0;
    }
}

impl SubAssign for MoneyQ {
    fn sub_assign(&mut self, rhs: MoneyQ) {
        self.0 -= rhs.0;
    }
}

impl<'a> SubAssign<&'a MoneyQ> for MoneyQ {
    fn sub_assign(&mut self, rhs: &'a MoneyQ) {
        self.0 -= &rhs.0;
    }
}

impl Sum for MoneyQ {
    fn sum<I: Iterator<Item = MoneyQ>>(iter: I) -> MoneyQ {
        iter.fold(MoneyQ::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a MoneyQ> for MoneyQ {
    fn sum<I: Iterator<Item = &'a MoneyQ>>(iter: I) -> MoneyQ {
        iter.fold(MoneyQ::zero(), |acc, x| acc + x)
    }
}
