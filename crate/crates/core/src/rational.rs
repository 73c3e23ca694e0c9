//! Exact nonnegative rationals over unbounded integers.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

/// `num / den` with `den > 0`. Not kept in lowest terms; equality and
/// ordering compare by cross-multiplication.
#[derive(Debug, Clone)]
pub struct Rational {
    num: BigUint,
    den: BigUint,
}

impl Rational {
    pub fn new(num: BigUint, den: BigUint) -> Self {
        assert!(!den.is_zero(), "rational with zero denominator");
        Rational { num, den }
    }

    pub fn from_u64(num: u64, den: u64) -> Self {
        Self::new(BigUint::from(num), BigUint::from(den))
    }

    pub fn zero() -> Self {
        Rational {
            num: BigUint::zero(),
            den: BigUint::one(),
        }
    }

    pub fn one() -> Self {
        Rational {
            num: BigUint::one(),
            den: BigUint::one(),
        }
    }

    pub fn num(&self) -> &BigUint {
        &self.num
    }

    pub fn den(&self) -> &BigUint {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn reduced(&self) -> Rational {
        let g = self.num.gcd(&self.den);
        if g.is_zero() || g.is_one() {
            return self.clone();
        }
        Rational {
            num: &self.num / &g,
            den: &self.den / &g,
        }
    }

    /// Nearest `f64`, accurate even when both parts overflow `f64`.
    pub fn to_f64(&self) -> f64 {
        if self.num.is_zero() {
            return 0.0;
        }
        let (nm, ne) = mantissa_exp(&self.num);
        let (dm, de) = mantissa_exp(&self.den);
        (nm / dm) * 2f64.powi(ne - de)
    }
}

/// `x = m * 2^e` with `m` holding the top 64 bits of `x`.
fn mantissa_exp(x: &BigUint) -> (f64, i32) {
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_u64().expect("shifted to 64 bits");
    (top as f64, shift as i32)
}

/// `log2(x)` for a positive unbounded integer.
pub fn log2_biguint(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "log2 of zero");
    let (m, e) = mantissa_exp(x);
    m.log2() + e as f64
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        &self.num * &other.den == &other.num * &self.den
    }
}

impl Eq for Rational {}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

impl Add for &Rational {
    type Output = Rational;

    fn add(self, rhs: &Rational) -> Rational {
        if self.den == rhs.den {
            return Rational {
                num: &self.num + &rhs.num,
                den: self.den.clone(),
            };
        }
        Rational {
            num: &self.num * &rhs.den + &rhs.num * &self.den,
            den: &self.den * &rhs.den,
        }
    }
}

impl Mul for &Rational {
    type Output = Rational;

    fn mul(self, rhs: &Rational) -> Rational {
        Rational {
            num: &self.num * &rhs.num,
            den: &self.den * &rhs.den,
        }
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| &acc + &x)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_is_cross_multiplicative() {
        assert_eq!(Rational::from_u64(2, 6), Rational::from_u64(1, 3));
        assert_ne!(Rational::from_u64(2, 6), Rational::from_u64(1, 2));
        assert!(Rational::from_u64(1, 3) < Rational::from_u64(1, 2));
    }

    #[test]
    fn sum_of_parts_is_one() {
        let parts = [(2, 6), (1, 6), (1, 6), (2, 6)];
        let total: Rational = parts.iter().map(|&(n, d)| Rational::from_u64(n, d)).sum();
        assert_eq!(total, Rational::one());
    }

    #[test]
    fn to_f64_handles_huge_operands() {
        let big = BigUint::one() << 5000u32;
        let r = Rational::new(&big * 3u32, &big * 4u32);
        assert_eq!(r.to_f64(), 0.75);
        assert_eq!(log2_biguint(&big), 5000.0);
        assert!((log2_biguint(&BigUint::from(6u32)) - 6f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn reduced_keeps_value() {
        let r = Rational::from_u64(12, 18).reduced();
        assert_eq!(r.num(), &BigUint::from(2u32));
        assert_eq!(r.den(), &BigUint::from(3u32));
    }
}
