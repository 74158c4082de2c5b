//! Scalar types the engine kernels are generic over.
//!
//! Kernels are written once against [`Real`] and instantiated three ways:
//! plain `f64` for ordinary forward/backward passes, [`Dual`] for
//! forward-over-reverse Hessian-vector products, and [`Wide`] for
//! overflow-free synflow products.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    /// Primal value as an `f64`. May be infinite for [`Wide`] values
    /// beyond the `f64` range.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Real for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// First-order dual number `re + du·ε` with `ε² = 0`.
///
/// Running the reverse pass over duals whose parameter tangents are `v`
/// yields `∇L` in the real parts and `H·v` in the tangent parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub const fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.du - q * o.du) / o.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.du += o.du;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.re -= o.re;
        self.du -= o.du;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Real for Dual {
    fn zero() -> Self {
        Dual::new(0.0, 0.0)
    }
    fn one() -> Self {
        Dual::new(1.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.du)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.du / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.du / (2.0 * s))
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.du.is_finite()
    }
}

/// Extended-range float: `mant · 2^exp` with `|mant| ∈ [0.5, 1)` or zero.
///
/// Deep synflow products leave the `f64` exponent range; this type keeps
/// an `i64` exponent so the log-magnitude of the score stays exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wide {
    mant: f64,
    exp: i64,
}

impl Wide {
    const ZERO: Wide = Wide { mant: 0.0, exp: 0 };

    fn normalize(mant: f64, exp: i64) -> Self {
        if mant == 0.0 || !mant.is_finite() {
            return Wide {
                mant,
                exp: if mant == 0.0 { 0 } else { exp },
            };
        }
        let (m, e) = frexp(mant);
        Wide {
            mant: m,
            exp: exp + e as i64,
        }
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn ln_abs(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().ln() + self.exp as f64 * std::f64::consts::LN_2
        }
    }

    pub fn is_sign_negative(self) -> bool {
        self.mant < 0.0
    }
}

/// Split `x` into `m · 2^e` with `|m| ∈ [0.5, 1)`. `x` must be finite, nonzero.
fn frexp(x: f64) -> (f64, i32) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    if raw_exp == 0 {
        // subnormal: scale into the normal range first
        let (m, e) = frexp(x * f64::from_bits(0x4350_0000_0000_0000)); // 2^54
        return (m, e - 54);
    }
    let e = raw_exp - 1022;
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022u64 << 52));
    (m, e)
}

fn ldexp(m: f64, e: i64) -> f64 {
    if e > 2000 {
        return m * f64::INFINITY;
    }
    if e < -2200 {
        return m * 0.0;
    }
    let mut x = m;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

impl Add for Wide {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        if self.mant == 0.0 {
            return o;
        }
        if o.mant == 0.0 {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp { (self, o) } else { (o, self) };
        let shift = hi.exp - lo.exp;
        if shift > 60 {
            return hi;
        }
        Wide::normalize(hi.mant + ldexp(lo.mant, -shift), hi.exp)
    }
}

impl Neg for Wide {
    type Output = Self;
    fn neg(self) -> Self {
        Wide {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

impl Sub for Wide {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for Wide {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if self.mant == 0.0 || o.mant == 0.0 {
            return Wide::ZERO;
        }
        Wide::normalize(self.mant * o.mant, self.exp + o.exp)
    }
}

impl Div for Wide {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        if o.mant == 0.0 {
            return Wide::normalize(self.mant / 0.0, 0);
        }
        if self.mant == 0.0 {
            return Wide::ZERO;
        }
        Wide::normalize(self.mant / o.mant, self.exp - o.exp)
    }
}

impl AddAssign for Wide {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Wide {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for Wide {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Real for Wide {
    fn zero() -> Self {
        Wide::ZERO
    }
    fn one() -> Self {
        Wide { mant: 0.5, exp: 1 }
    }
    fn from_f64(v: f64) -> Self {
        Wide::normalize(v, 0)
    }
    fn value(self) -> f64 {
        ldexp(self.mant, self.exp)
    }
    fn exp(self) -> Self {
        // e^x = 2^(x·log2 e); split the exponent into integer and fraction
        let x = self.value();
        if !x.is_finite() {
            return Wide::from_f64(x.exp());
        }
        let t = x * std::f64::consts::LOG2_E;
        let whole = t.floor();
        Wide::normalize((t - whole).exp2(), whole as i64)
    }
    fn ln(self) -> Self {
        if self.mant <= 0.0 {
            return Wide::from_f64(f64::NAN);
        }
        Wide::from_f64(self.ln_abs())
    }
    fn sqrt(self) -> Self {
        if self.mant < 0.0 {
            return Wide::from_f64(f64::NAN);
        }
        if self.exp % 2 == 0 {
            Wide::normalize(self.mant.sqrt(), self.exp / 2)
        } else {
            Wide::normalize((2.0 * self.mant).sqrt(), (self.exp - 1).div_euclid(2))
        }
    }
    fn is_finite(self) -> bool {
        self.mant.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x * x;
        assert_eq!(y.re, 27.0);
        assert_eq!(y.du, 27.0);
        let q = Dual::one() / x;
        assert!((q.du + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn dual_transcendentals() {
        let x = Dual::new(2.0, 1.0);
        assert!((x.exp().du - 2f64.exp()).abs() < 1e-12);
        assert!((x.ln().du - 0.5).abs() < 1e-15);
        assert!((x.sqrt().du - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wide_round_trips_ordinary_values() {
        for v in [1.0, -3.5, 1e-300, 7e300, 0.125, 1e-310] {
            assert_eq!(Wide::from_f64(v).value(), v);
        }
        let a = Wide::from_f64(1.5);
        let b = Wide::from_f64(-0.25);
        assert_eq!((a + b).value(), 1.25);
        assert_eq!((a * b).value(), -0.375);
        assert_eq!((a / b).value(), -6.0);
        assert_eq!(Wide::from_f64(16.0).sqrt().value(), 4.0);
        assert_eq!(Wide::from_f64(8.0).sqrt().value(), 8f64.sqrt());
    }

    #[test]
    fn wide_survives_past_f64_range() {
        let big = Wide::from_f64(1e300);
        let p = big * big * big;
        assert!(p.is_finite());
        assert!(p.value().is_infinite());
        let expected = 900.0 * 10f64.ln();
        assert!((p.ln_abs() - expected).abs() < 1e-9);
        let back = p / big / big;
        assert!((back.value() / 1e300 - 1.0).abs() < 1e-12);
    }
}
