//! Working-precision context and small complex-arithmetic helpers on top of MPFR.

use rug::float::Constant;
use rug::ops::{CompleteRound, Pow};
use rug::{Complex, Float, Rational};

/// Decimal working precision plus the MPFR bit precision derived from it.
///
/// The default oracle precision is 60 digits; comparisons are made at a
/// relative tolerance a few digits below that so that only genuine algebra
/// errors show up, never rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prec {
    pub digits: u32,
    pub bits: u32,
}

impl Prec {
    pub fn new(digits: u32) -> Self {
        let digits = digits.max(10);
        // log2(10) ~ 3.3220; 64 guard bits absorb intermediate rounding.
        let bits = (digits as f64 * 3.3219280948873626).ceil() as u32 + 64;
        Prec { digits, bits }
    }

    /// Doubled precision, used for opaque-scalar equality keys.
    pub fn double(self) -> Self {
        Prec::new(self.digits * 2)
    }

    pub fn zero(self) -> Complex {
        Complex::new(self.bits)
    }

    pub fn one(self) -> Complex {
        Complex::with_val(self.bits, (1, 0))
    }

    pub fn from_i64(self, n: i64) -> Complex {
        Complex::with_val(self.bits, (n, 0))
    }

    pub fn from_rational(self, q: &Rational) -> Complex {
        Complex::with_val(self.bits, (Float::with_val(self.bits, q), 0))
    }

    pub fn float_from_rational(self, q: &Rational) -> Float {
        Float::with_val(self.bits, q)
    }

    pub fn pi(self) -> Float {
        Float::with_val(self.bits, Constant::Pi)
    }

    pub fn euler_gamma(self) -> Float {
        Float::with_val(self.bits, Constant::Euler)
    }

    /// e^{i t} for real t.
    pub fn cis(self, t: &Float) -> Complex {
        let (s, c) = t.clone().sin_cos(Float::new(self.bits));
        Complex::with_val(self.bits, (c, s))
    }

    /// Principal z^w for complex z, w. Positive real bases use the real logarithm.
    pub fn cpow(self, z: &Complex, w: &Complex) -> Complex {
        if z.is_zero() {
            return self.zero();
        }
        z.pow(w).complete((self.bits, self.bits))
    }

    /// n^w for a positive integer n with the real logarithm.
    pub fn int_pow(self, n: i64, w: &Complex) -> Complex {
        debug_assert!(n > 0);
        let ln = Float::with_val(self.bits, n).ln();
        let e = Complex::with_val(self.bits, (&ln, Float::new(self.bits))) * w;
        e.exp()
    }

    /// z^n for integer n by binary powering (exact powering of the rounded base).
    pub fn ipow(self, z: &Complex, n: i64) -> Complex {
        if n == 0 {
            return self.one();
        }
        let mut base = z.clone();
        let mut e = n.unsigned_abs();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= &base;
            }
            base.square_mut();
            e >>= 1;
        }
        if n < 0 {
            acc.recip_mut();
        }
        acc
    }
}

impl Default for Prec {
    fn default() -> Self {
        Prec::new(60)
    }
}

/// Relative error |a-b| / max(|a|, |b|, 1e-20). The floor keeps rounding
/// residue of exactly-cancelling sums from registering as relative error.
pub fn rel_err(a: &Complex, b: &Complex) -> f64 {
    let mut diff = b.clone();
    diff -= a;
    let d = diff.abs().real().to_f64();
    let ma = a.clone().abs().real().to_f64();
    let mb = b.clone().abs().real().to_f64();
    let scale = ma.max(mb).max(1e-20);
    d / scale
}

/// Format a complex value as `re+im*I` with the given number of digits.
pub fn fmt_complex(z: &Complex, digits: u32) -> String {
    let d = digits as usize;
    let re = z.real();
    let im = z.imag();
    if im.is_zero() {
        format!("{:.*e}", d, re)
    } else {
        format!("{:.*e} {:+.*e}*I", d, re, d, im)
    }
}
