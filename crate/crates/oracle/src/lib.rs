//! Extended-precision reference arithmetic for tests.
//!
//! Values are binary fixed point with [`FRAC_BITS`] fractional bits carried in a
//! `BigInt`. Every `f64` input converts exactly, so the only error introduced is
//! truncation far below `f64` resolution. Nothing here shares code with the
//! engine's floating-point kernels; that independence is what makes it useful
//! as an oracle.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Fractional bits of the fixed-point representation.
pub const FRAC_BITS: u32 = 320;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Xp(BigInt);

impl Xp {
    pub fn zero() -> Self {
        Xp(BigInt::zero())
    }

    pub fn one() -> Self {
        Xp(BigInt::one() << FRAC_BITS)
    }

    pub fn from_int(v: i64) -> Self {
        Xp(BigInt::from(v) << FRAC_BITS)
    }

    /// Exact conversion of a finite `f64` (values below 2^-320 truncate).
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite input to oracle");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exp_bits = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), exp_bits - 1075)
        };
        let shift = exp + FRAC_BITS as i64;
        let mut v = BigInt::from(mantissa);
        if shift >= 0 {
            v <<= shift as usize;
        } else {
            v >>= (-shift) as usize;
        }
        if negative {
            v = -v;
        }
        Xp(v)
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 80 significant bits before handing to the float conversion.
        let bits = self.0.bits() as i64;
        let drop = (bits - 80).max(0);
        let top = &self.0 >> drop as usize;
        let f = top.to_f64().expect("finite");
        f * 2f64.powi((drop - FRAC_BITS as i64) as i32)
    }

    pub fn is_negative(&self) -> bool {
        self.0.sign() == Sign::Minus
    }

    pub fn abs(&self) -> Self {
        Xp(self.0.abs())
    }

    fn shr(&self, k: u32) -> Self {
        Xp(&self.0 >> k as usize)
    }

    fn shl(&self, k: u32) -> Self {
        Xp(&self.0 << k as usize)
    }

    /// `e^x` by argument halving, Taylor series, then repeated squaring.
    pub fn exp(&self) -> Self {
        if self.is_negative() {
            return Xp::one() / self.neg_ref().exp();
        }
        let mut k = 0u32;
        let threshold = Xp::one().shr(8);
        let mut r = self.clone();
        while r > threshold {
            r = r.shr(1);
            k += 1;
        }
        let mut sum = Xp::one();
        let mut term = Xp::one();
        let mut n = 1i64;
        loop {
            term = &(&term * &r) / &Xp::from_int(n);
            if term.0.is_zero() {
                break;
            }
            sum = &sum + &term;
            n += 1;
        }
        for _ in 0..k {
            sum = &sum * &sum;
        }
        sum
    }

    /// Natural logarithm of a strictly positive value.
    pub fn ln(&self) -> Self {
        assert!(self.0.is_positive(), "ln of non-positive value");
        // Normalise into [1, 2): self = m * 2^j.
        let bits = self.0.bits() as i64;
        let j = bits - 1 - FRAC_BITS as i64;
        let m = if j >= 0 { self.shr(j as u32) } else { self.shl((-j) as u32) };
        let ln2 = Self::ln2();
        let ln_m = Self::atanh_log(&m);
        &Xp(&ln2.0 * BigInt::from(j)) + &ln_m
    }

    fn ln2() -> Self {
        // ln 2 = 2 atanh(1/3)
        let third = &Xp::one() / &Xp::from_int(3);
        let s = Self::atanh_series(&third);
        &s + &s
    }

    fn atanh_log(m: &Xp) -> Xp {
        let one = Xp::one();
        let z = &(m - &one) / &(m + &one);
        let s = Self::atanh_series(&z);
        &s + &s
    }

    fn atanh_series(z: &Xp) -> Xp {
        let z2 = z * z;
        let mut power = z.clone();
        let mut sum = z.clone();
        let mut n = 3i64;
        loop {
            power = &power * &z2;
            let term = &power / &Xp::from_int(n);
            if term.0.is_zero() {
                break;
            }
            sum = &sum + &term;
            n += 2;
        }
        sum
    }

    fn neg_ref(&self) -> Xp {
        Xp(-&self.0)
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&self) -> Xp {
        (&Xp::one() + &self.exp()).ln()
    }

    /// `1 / (1 + e^{-x})`.
    pub fn sigmoid(&self) -> Xp {
        &Xp::one() / &(&Xp::one() + &self.neg_ref().exp())
    }
}

impl Add for &Xp {
    type Output = Xp;
    fn add(self, rhs: &Xp) -> Xp {
        Xp(&self.0 + &rhs.0)
    }
}

impl Sub for &Xp {
    type Output = Xp;
    fn sub(self, rhs: &Xp) -> Xp {
        Xp(&self.0 - &rhs.0)
    }
}

impl Mul for &Xp {
    type Output = Xp;
    fn mul(self, rhs: &Xp) -> Xp {
        Xp((&self.0 * &rhs.0) >> FRAC_BITS as usize)
    }
}

impl Div for &Xp {
    type Output = Xp;
    fn div(self, rhs: &Xp) -> Xp {
        assert!(!rhs.0.is_zero(), "division by zero in oracle");
        Xp((&self.0 << FRAC_BITS as usize).div_floor(&rhs.0))
    }
}

impl Div for Xp {
    type Output = Xp;
    fn div(self, rhs: Xp) -> Xp {
        &self / &rhs
    }
}

impl Neg for Xp {
    type Output = Xp;
    fn neg(self) -> Xp {
        Xp(-self.0)
    }
}

/// Relative error of `got` against an extended-precision reference.
pub fn rel_err(got: f64, reference: &Xp) -> f64 {
    let r = reference.to_f64();
    let diff = (&Xp::from_f64(got) - reference).abs().to_f64();
    if r == 0.0 {
        diff
    } else {
        diff / r.abs()
    }
}
