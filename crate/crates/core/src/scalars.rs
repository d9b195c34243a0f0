//! Exact-symbolic complex scalars.
//!
//! The supported subring is Gaussian rationals x roots of unity x real
//! radicals of positive rationals, extended by two transcendental-but-exact
//! atom families (`exp(t)`, `cis(t)` for rational `t`) and an opaque
//! principal-power node for everything else. A `Scalar` is always kept in
//! canonical form: a sorted sum of terms, each term a rational coefficient
//! times a sorted, merged product of atoms. Two scalars inside the subring
//! are equal iff their canonical forms are structurally identical.

use crate::error::{Error, Result};
use crate::prec::Prec;
use rug::ops::Pow as RugPow;
use rug::{Complex, Float, Integer, Rational};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

/// One multiplicative atom of a term.
///
/// Variant order is the node-kind rank used by the total order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// e^{2 pi i t} with 0 < t < 1/2 (other angles fold into the sign / unity).
    Root(Rational),
    /// p^e with p prime and 0 < e < 1.
    Surd(u64, Rational),
    /// e^t with rational t != 0.
    Exp(Rational),
    /// e^{i t} with rational t != 0 (radians).
    Cis(Rational),
    /// Opaque principal power base^exp; value leaves the exact subring.
    Pow(Box<Scalar>, Box<Scalar>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    coeff: Rational,
    atoms: Vec<Atom>,
}

/// Canonical exact scalar: a sorted sum of terms. Empty sum is zero.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Scalar {
    terms: Vec<Term>,
}

fn rat(n: i64, d: i64) -> Rational {
    Rational::from((n, d))
}

/// Largest prime factor we will split off by trial division.
const FACTOR_LIMIT: u64 = 1_000_003;

fn factorize(mut n: u64) -> Option<Vec<(u64, u32)>> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if p > FACTOR_LIMIT {
            return None;
        }
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        if n > FACTOR_LIMIT * FACTOR_LIMIT {
            return None;
        }
        out.push((n, 1));
    }
    Some(out)
}

impl Scalar {
    // ----- constructors -----

    pub fn zero() -> Self {
        Scalar { terms: vec![] }
    }

    pub fn one() -> Self {
        Scalar::from_rational(Rational::from(1))
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::from_rational(Rational::from(n))
    }

    pub fn from_rational(q: Rational) -> Self {
        if q == 0 {
            return Scalar::zero();
        }
        Scalar {
            terms: vec![Term { coeff: q, atoms: vec![] }],
        }
    }

    /// The imaginary unit i = w(1/4).
    pub fn i() -> Self {
        Scalar::root_of_unity(rat(1, 4))
    }

    /// e^{2 pi i t} for rational t, canonicalized.
    pub fn root_of_unity(t: Rational) -> Self {
        let mut t = t.clone();
        // reduce mod 1 into [0,1)
        let fl = t.clone().floor();
        t -= fl;
        if t == 0 {
            return Scalar::one();
        }
        let (coeff, tt) = if t == rat(1, 2) {
            return Scalar::from_int(-1);
        } else if t > rat(1, 2) {
            (Rational::from(-1), t - rat(1, 2))
        } else {
            (Rational::from(1), t)
        };
        Scalar {
            terms: vec![Term { coeff, atoms: vec![Atom::Root(tt)] }],
        }
    }

    /// base^{1/index} for a positive rational base (principal, real, positive).
    pub fn radical(base: Rational, index: u32) -> Result<Self> {
        if base <= 0 {
            return Err(Error::NonCanonicalizable(format!(
                "radical of non-positive base {base}"
            )));
        }
        if index < 1 {
            return Err(Error::NonCanonicalizable("radical index < 1".into()));
        }
        Scalar::from_rational(base).pow_rational(&Rational::from((1, index)))
    }

    /// e^t for rational t.
    pub fn exp_rational(t: Rational) -> Self {
        if t == 0 {
            return Scalar::one();
        }
        Scalar {
            terms: vec![Term { coeff: Rational::from(1), atoms: vec![Atom::Exp(t)] }],
        }
    }

    /// e^{i t} for rational t (radians).
    pub fn cis_rational(t: Rational) -> Self {
        if t == 0 {
            return Scalar::one();
        }
        Scalar {
            terms: vec![Term { coeff: Rational::from(1), atoms: vec![Atom::Cis(t)] }],
        }
    }

    fn opaque_pow(base: Scalar, exp: Scalar) -> Self {
        Scalar {
            terms: vec![Term {
                coeff: Rational::from(1),
                atoms: vec![Atom::Pow(Box::new(base), Box::new(exp))],
            }],
        }
    }

    // ----- predicates / accessors -----

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_rational().map_or(false, |q| q == 1)
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::from(0)),
            1 if self.terms[0].atoms.is_empty() => Some(self.terms[0].coeff.clone()),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        let q = self.as_rational()?;
        if q.denom() == &1 {
            q.numer().to_i64()
        } else {
            None
        }
    }

    /// Exact when the scalar has no opaque power nodes.
    pub fn is_exact(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.atoms.iter().all(|a| !matches!(a, Atom::Pow(_, _))))
    }

    /// Structurally real: every atom is a real kind and coefficients are rational.
    pub fn is_real_structural(&self) -> bool {
        self.terms.iter().all(|t| {
            t.atoms
                .iter()
                .all(|a| matches!(a, Atom::Surd(_, _) | Atom::Exp(_)))
        })
    }

    /// Real part of a rational-or-Gaussian scalar, if that is what we have.
    pub fn rational_re(&self) -> Option<Rational> {
        let mut re = Rational::from(0);
        for t in &self.terms {
            match t.atoms.as_slice() {
                [] => re += &t.coeff,
                [Atom::Root(r)] if *r == rat(1, 4) => {}
                _ => return None,
            }
        }
        Some(re)
    }

    // ----- arithmetic -----

    fn normalize(mut terms: Vec<Term>) -> Scalar {
        terms.retain(|t| t.coeff != 0);
        terms.sort_by(|a, b| a.atoms.cmp(&b.atoms));
        let mut out: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.atoms == t.atoms => last.coeff += t.coeff,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0);
        Scalar { terms: out }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Scalar::normalize(terms)
    }

    pub fn neg(&self) -> Scalar {
        Scalar {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coeff: -t.coeff.clone(), atoms: t.atoms.clone() })
                .collect(),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.extend(mul_terms(a, b).terms);
            }
        }
        Scalar::normalize(terms)
    }

    pub fn mul_rational(&self, q: &Rational) -> Scalar {
        if *q == 0 {
            return Scalar::zero();
        }
        Scalar {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coeff: t.coeff.clone() * q, atoms: t.atoms.clone() })
                .collect(),
        }
    }

    pub fn pow_i64(&self, n: i64) -> Result<Scalar> {
        if n == 0 {
            return Ok(Scalar::one());
        }
        if self.is_zero() {
            return if n > 0 { Ok(Scalar::zero()) } else { Err(Error::ZeroToNegativePower) };
        }
        let base = if n < 0 { self.inverse()? } else { self.clone() };
        let mut acc = Scalar::one();
        let mut b = base;
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            e >>= 1;
            if e > 0 {
                b = b.mul(&b.clone());
            }
        }
        Ok(acc)
    }

    /// Principal self^r for rational r.
    pub fn pow_rational(&self, r: &Rational) -> Result<Scalar> {
        if r.denom() == &1 {
            if let Some(n) = r.numer().to_i64() {
                return self.pow_i64(n);
            }
        }
        if self.is_zero() {
            return if *r > 0 { Ok(Scalar::zero()) } else { Err(Error::ZeroToNegativePower) };
        }
        if self.terms.len() == 1 {
            return term_pow_rational(&self.terms[0], r);
        }
        Ok(Scalar::opaque_pow(self.clone(), Scalar::from_rational(r.clone())))
    }

    /// Principal self^e for a general scalar exponent.
    pub fn pow_scalar(&self, e: &Scalar) -> Result<Scalar> {
        if let Some(q) = e.as_rational() {
            return self.pow_rational(&q);
        }
        if self.is_zero() {
            return Err(Error::ZeroToNegativePower);
        }
        if self.is_one() {
            return Ok(Scalar::one());
        }
        Ok(Scalar::opaque_pow(self.clone(), e.clone()))
    }

    pub fn inverse(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::ZeroToNegativePower);
        }
        if self.terms.len() == 1 {
            return term_pow_rational(&self.terms[0], &Rational::from(-1));
        }
        // Gaussian rationals invert by conjugation.
        if let Some((re, im)) = self.as_gaussian() {
            let norm = re.clone() * &re + im.clone() * &im;
            let re2 = re / norm.clone();
            let im2 = -im / norm;
            return Ok(Scalar::from_rational(re2)
                .add(&Scalar::i().mul_rational(&im2)));
        }
        Ok(Scalar::opaque_pow(self.clone(), Scalar::from_int(-1)))
    }

    /// (re, im) if the scalar is a Gaussian rational.
    pub fn as_gaussian(&self) -> Option<(Rational, Rational)> {
        let mut re = Rational::from(0);
        let mut im = Rational::from(0);
        for t in &self.terms {
            match t.atoms.as_slice() {
                [] => re += &t.coeff,
                [Atom::Root(r)] if *r == rat(1, 4) => im += &t.coeff,
                _ => return None,
            }
        }
        Some((re, im))
    }

    pub fn conj(&self) -> Scalar {
        let mut out = Scalar::zero();
        for t in &self.terms {
            let mut s = Scalar::from_rational(t.coeff.clone());
            for a in &t.atoms {
                let c = match a {
                    Atom::Root(t) => Scalar::root_of_unity(-t.clone()),
                    Atom::Surd(p, e) => Scalar {
                        terms: vec![Term {
                            coeff: Rational::from(1),
                            atoms: vec![Atom::Surd(*p, e.clone())],
                        }],
                    },
                    Atom::Exp(t) => Scalar::exp_rational(t.clone()),
                    Atom::Cis(t) => Scalar::cis_rational(-t.clone()),
                    Atom::Pow(b, e) => conj_pow(b, e),
                };
                s = s.mul(&c);
            }
            out = out.add(&s);
        }
        out
    }

    /// |self|^2 as an exact scalar.
    pub fn abs_squared(&self) -> Scalar {
        self.mul(&self.conj())
    }

    // ----- numerics -----

    pub fn numeric(&self, prec: Prec) -> Complex {
        let mut acc = prec.zero();
        for t in &self.terms {
            let mut v = prec.from_rational(&t.coeff);
            for a in &t.atoms {
                v *= atom_numeric(a, prec);
            }
            acc += v;
        }
        acc
    }

    /// Equality at doubled working precision, for scalars with opaque nodes.
    pub fn approx_eq(&self, other: &Scalar, prec: Prec) -> bool {
        if self == other {
            return true;
        }
        let p2 = prec.double();
        let a = self.numeric(p2);
        let b = other.numeric(p2);
        let diff = (a - b).abs();
        let tol = Float::with_val(p2.bits, 10).pow(-(prec.digits as i64 - 10));
        *diff.real() < tol
    }
}

fn atom_numeric(a: &Atom, prec: Prec) -> Complex {
    match a {
        Atom::Root(t) => {
            let ang = prec.pi() * 2 * prec.float_from_rational(t);
            prec.cis(&ang)
        }
        Atom::Surd(p, e) => {
            let b = Float::with_val(prec.bits, *p);
            let ex = prec.float_from_rational(e);
            Complex::with_val(prec.bits, (b.pow(ex), Float::new(prec.bits)))
        }
        Atom::Exp(t) => {
            let v = prec.float_from_rational(t).exp();
            Complex::with_val(prec.bits, (v, Float::new(prec.bits)))
        }
        Atom::Cis(t) => prec.cis(&prec.float_from_rational(t)),
        Atom::Pow(b, e) => {
            let bv = b.numeric(prec);
            let ev = e.numeric(prec);
            prec.cpow(&bv, &ev)
        }
    }
}

/// Multiply two canonical terms; result may need a sign fold but stays a single
/// term except through the public normalize path.
fn mul_terms(a: &Term, b: &Term) -> Scalar {
    let mut coeff = a.coeff.clone() * &b.coeff;
    let mut root = Rational::from(0);
    let mut surds: Vec<(u64, Rational)> = Vec::new();
    let mut exp = Rational::from(0);
    let mut cis = Rational::from(0);
    let mut pows: Vec<(Box<Scalar>, Scalar)> = Vec::new();
    for atom in a.atoms.iter().chain(b.atoms.iter()) {
        match atom {
            Atom::Root(t) => root += t,
            Atom::Surd(p, e) => match surds.iter_mut().find(|(q, _)| q == p) {
                Some((_, acc)) => *acc += e,
                None => surds.push((*p, e.clone())),
            },
            Atom::Exp(t) => exp += t,
            Atom::Cis(t) => cis += t,
            Atom::Pow(base, e) => match pows.iter_mut().find(|(q, _)| q == base) {
                Some((_, acc)) => *acc = acc.add(e),
                None => pows.push((base.clone(), (**e).clone())),
            },
        }
    }
    // fold surd integer parts into the coefficient
    let mut atoms: Vec<Atom> = Vec::new();
    let mut extra = Scalar::one();
    for (p, e) in surds {
        let fl = e.clone().floor();
        let frac = e - &fl;
        if let Some(k) = fl.numer().to_i32() {
            if k != 0 {
                let pk = Rational::from(Integer::from(p)).pow(k);
                coeff *= pk;
            }
        }
        if frac != 0 {
            atoms.push(Atom::Surd(p, frac));
        }
    }
    if exp != 0 {
        atoms.push(Atom::Exp(exp));
    }
    if cis != 0 {
        atoms.push(Atom::Cis(cis));
    }
    for (base, e) in pows {
        if e.is_zero() {
            continue;
        }
        // a merged nonnegative integer exponent becomes an exact power again
        // (negative ones would recurse through inverse() and back here)
        if let Some(n) = e.as_i64() {
            if (0..=16).contains(&n) {
                if let Ok(x) = base.pow_i64(n) {
                    extra = extra.mul(&x);
                    continue;
                }
            }
        }
        atoms.push(Atom::Pow(base, Box::new(e)));
    }
    // fold the accumulated circle phase in manually (root_of_unity is a
    // single term with coefficient +-1 and at most one Root atom)
    let root_s = Scalar::root_of_unity(root);
    if let Some(rt) = root_s.terms.first() {
        coeff *= &rt.coeff;
        atoms.extend(rt.atoms.iter().cloned());
    } else {
        coeff = Rational::from(0);
    }
    atoms.sort();
    let main = Scalar::normalize(vec![Term { coeff, atoms }]);
    if extra.is_one() {
        main
    } else {
        main.mul(&extra)
    }
}

/// conj(base^exp), principal-branch aware.
fn conj_pow(base: &Scalar, exp: &Scalar) -> Scalar {
    let prec = Prec::default();
    let bnum = base.numeric(prec);
    let on_negative_axis = bnum.imag().is_zero() && bnum.real().is_sign_negative();
    if !on_negative_axis {
        return Scalar::opaque_pow(base.conj(), exp.conj());
    }
    // Log(conj b) = Log(b) - 2 pi i here, so conj(b^e) = conj(b)^conj(e) * e^{-2 pi i conj(e)}
    // which we keep opaque as Pow(w(1), -conj e) ~ handled via Pow of -1:
    let correction = Scalar::opaque_pow(Scalar::from_int(-1), exp.conj().mul(&Scalar::from_int(-2)));
    Scalar::opaque_pow(base.conj(), exp.conj()).mul(&correction)
}

/// Principal power of a single canonical term by a rational exponent.
fn term_pow_rational(term: &Term, r: &Rational) -> Result<Scalar> {
    // magnitude part
    let mut out = rational_abs_pow(&term.coeff.clone().abs(), r)?;
    // phase of the term: pi*u + c with u from sign and root, c from cis atoms
    let mut pi_mult = if term.coeff < 0 { Rational::from(1) } else { Rational::from(0) };
    let mut cis_part = Rational::from(0);
    for a in &term.atoms {
        match a {
            Atom::Root(t) => pi_mult += Rational::from(2) * t,
            Atom::Cis(t) => cis_part += t,
            Atom::Surd(p, e) => {
                out = out.mul(&Scalar {
                    terms: vec![Term {
                        coeff: Rational::from(1),
                        atoms: vec![Atom::Surd(*p, e.clone())],
                    }],
                }.pow_surd(r));
            }
            Atom::Exp(t) => out = out.mul(&Scalar::exp_rational(t.clone() * r)),
            Atom::Pow(b, e) => {
                out = out.mul(&pow_of_pow(b, e, r)?);
            }
        }
    }
    // reduce the phase to the principal range before scaling by r
    if pi_mult != 0 || cis_part != 0 {
        let k = principal_turns(&pi_mult, &cis_part);
        let u = pi_mult - Rational::from(2 * k);
        out = out.mul(&Scalar::root_of_unity(u * r / Rational::from(2)));
        if cis_part != 0 {
            out = out.mul(&Scalar::cis_rational(cis_part * r));
        }
    }
    Ok(out)
}

/// Number of whole turns to subtract so that pi*u + c lies in (-pi, pi].
fn principal_turns(pi_mult: &Rational, cis_part: &Rational) -> i64 {
    if *cis_part == 0 {
        // phase = pi * u; need u - 2k in (-1, 1]
        let shifted = (Rational::from(1) - pi_mult.clone()) / Rational::from(2);
        // k = -floor(shifted) gives u - 2k in (-1, 1]
        return -shifted.floor().numer().to_i64().unwrap_or(0);
    }
    let p = Prec::default();
    let phase: Float = p.pi() * p.float_from_rational(pi_mult) + p.float_from_rational(cis_part);
    let turns: Float = phase / (p.pi() * 2u32);
    // k such that phase - 2 pi k in (-pi, pi]: k = ceil(turns - 1/2)
    (turns.to_f64() - 0.5).ceil() as i64
}

/// (b^e)^r with a numeric branch correction for the principal logarithm.
fn pow_of_pow(base: &Scalar, exp: &Scalar, r: &Rational) -> Result<Scalar> {
    let p = Prec::default().double();
    let lb = base.numeric(p).ln();
    let arg = (exp.numeric(p) * lb).imag().clone();
    let two_pi: Float = p.pi() * 2u32;
    let shifted: Float = (arg + p.pi()) / two_pi;
    let m = shifted.floor().to_f64() as i64;
    let new_exp = exp.mul(&Scalar::from_rational(r.clone()));
    let mut out = if let Some(q) = new_exp.as_rational() {
        base.pow_rational(&q)?
    } else {
        Scalar::opaque_pow(base.clone(), new_exp)
    };
    if m != 0 {
        out = out.mul(&Scalar::root_of_unity(Rational::from(-m) * r));
    }
    Ok(out)
}

impl Scalar {
    /// self must be a single Surd atom; raise it to the rational power r.
    fn pow_surd(&self, r: &Rational) -> Scalar {
        let (p, e) = match self.terms[0].atoms.as_slice() {
            [Atom::Surd(p, e)] => (*p, e.clone()),
            _ => unreachable!(),
        };
        let total = e * r;
        let fl = total.clone().floor();
        let frac = total - &fl;
        let mut s = Scalar::one();
        if let Some(k) = fl.numer().to_i32() {
            if k != 0 {
                s = s.mul_rational(&Rational::from(Integer::from(p)).pow(k));
            }
        }
        if frac != 0 {
            s = s.mul(&Scalar {
                terms: vec![Term { coeff: Rational::from(1), atoms: vec![Atom::Surd(p, frac)] }],
            });
        }
        s
    }
}

/// |q|^r for positive rational q and rational r, by prime factorization.
fn rational_abs_pow(q: &Rational, r: &Rational) -> Result<Scalar> {
    debug_assert!(*q > 0);
    let numer = q.numer().to_u64();
    let denom = q.denom().to_u64();
    let (n, d) = match (numer, denom) {
        (Some(n), Some(d)) => (n, d),
        _ => {
            return Ok(Scalar::opaque_pow(
                Scalar::from_rational(q.clone()),
                Scalar::from_rational(r.clone()),
            ))
        }
    };
    let (nf, df) = match (factorize(n), factorize(d)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Ok(Scalar::opaque_pow(
                Scalar::from_rational(q.clone()),
                Scalar::from_rational(r.clone()),
            ))
        }
    };
    let mut out = Scalar::one();
    for (sign, factors) in [(1i32, nf), (-1i32, df)] {
        for (p, e) in factors {
            let texp = if sign < 0 { -Rational::from(e) * r } else { Rational::from(e) * r };
            let fl = texp.clone().floor();
            let frac = texp - &fl;
            if let Some(k) = fl.numer().to_i32() {
                if k != 0 {
                    out = out.mul_rational(&Rational::from(Integer::from(p)).pow(k));
                }
            }
            if frac != 0 {
                out = out.mul(&Scalar {
                    terms: vec![Term {
                        coeff: Rational::from(1),
                        atoms: vec![Atom::Surd(p, frac)],
                    }],
                });
            }
        }
    }
    Ok(out)
}

// ----- ordering key -----

/// Opaque totally ordered key for a scalar. Structural order on canonical
/// forms (node-kind rank, then fields), stable across runs.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderKey(Scalar);

impl Scalar {
    pub fn order_key(&self) -> OrderKey {
        OrderKey(self.clone())
    }
}

// ----- printing -----

fn fmt_rational(q: &Rational) -> String {
    if q.denom() == &1 {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn fmt_atom(a: &Atom) -> String {
    match a {
        Atom::Root(t) if *t == rat(1, 4) => "I".into(),
        Atom::Root(t) => format!("w({})", fmt_rational(t)),
        Atom::Surd(p, e) => {
            let num = e.numer().to_u32().unwrap_or(1);
            let den = e.denom().to_u32().unwrap_or(2);
            let base = Integer::from(*p).pow(num);
            format!("rt({},{})", base, den)
        }
        Atom::Exp(t) => format!("exp({})", fmt_rational(t)),
        Atom::Cis(t) => format!("cis({})", fmt_rational(t)),
        Atom::Pow(b, e) => format!("pow({}, {})", b, e),
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for t in &self.terms {
            let neg = t.coeff < 0;
            let mag = t.coeff.clone().abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut parts: Vec<String> = Vec::new();
            if mag != 1 || t.atoms.is_empty() {
                parts.push(fmt_rational(&mag));
            }
            for a in &t.atoms {
                parts.push(fmt_atom(a));
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

// ----- parsing (canonical textual rendering is round-trippable) -----

struct SParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> SParser<'a> {
    fn new(s: &'a str) -> Self {
        SParser { src: s.as_bytes(), pos: 0 }
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::MalformedInput(format!("scalar parse at byte {}: {}", self.pos, msg)))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(&format!("expected '{}'", c as char))
        }
    }

    fn parse_sum(&mut self) -> Result<Scalar> {
        let mut acc = self.parse_term()?;
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.parse_term()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.parse_term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_term(&mut self) -> Result<Scalar> {
        let mut acc = self.parse_factor()?;
        loop {
            if self.eat(b'*') {
                acc = acc.mul(&self.parse_factor()?);
            } else if self.eat(b'/') {
                acc = acc.mul(&self.parse_factor()?.inverse()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Scalar> {
        let base = self.parse_atom()?;
        if self.eat(b'^') {
            let e = self.parse_exponent()?;
            return base.pow_rational(&e);
        }
        Ok(base)
    }

    fn parse_exponent(&mut self) -> Result<Rational> {
        if self.eat(b'(') {
            let neg = self.eat(b'-');
            let n = self.parse_integer()?;
            let q = if self.eat(b'/') {
                let d = self.parse_integer()?;
                Rational::from((n, d))
            } else {
                Rational::from(n)
            };
            self.expect(b')')?;
            Ok(if neg { -q } else { q })
        } else {
            let neg = self.eat(b'-');
            let n = self.parse_integer()?;
            Ok(if neg { -Rational::from(n) } else { Rational::from(n) })
        }
    }

    fn parse_atom(&mut self) -> Result<Scalar> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.parse_factor()?.neg())
            }
            Some(b'(') => {
                self.pos += 1;
                let s = self.parse_sum()?;
                self.expect(b')')?;
                Ok(s)
            }
            Some(c) if c.is_ascii_digit() => {
                let n = self.parse_integer()?;
                Ok(Scalar::from_rational(Rational::from(n)))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.parse_name();
                match name.as_str() {
                    "I" => Ok(Scalar::i()),
                    "w" => {
                        self.expect(b'(')?;
                        let t = self.parse_rational()?;
                        self.expect(b')')?;
                        Ok(Scalar::root_of_unity(t))
                    }
                    "rt" => {
                        self.expect(b'(')?;
                        let b = self.parse_rational()?;
                        self.expect(b',')?;
                        let m = self.parse_integer()?;
                        self.expect(b')')?;
                        Scalar::radical(b, m as u32)
                    }
                    "exp" => {
                        self.expect(b'(')?;
                        let t = self.parse_rational()?;
                        self.expect(b')')?;
                        Ok(Scalar::exp_rational(t))
                    }
                    "cis" => {
                        self.expect(b'(')?;
                        let t = self.parse_rational()?;
                        self.expect(b')')?;
                        Ok(Scalar::cis_rational(t))
                    }
                    "pow" => {
                        self.expect(b'(')?;
                        let b = self.parse_sum()?;
                        self.expect(b',')?;
                        let e = self.parse_sum()?;
                        self.expect(b')')?;
                        b.pow_scalar(&e)
                    }
                    other => self.err(&format!("unknown scalar function '{other}'")),
                }
            }
            _ => self.err("unexpected end of scalar"),
        }
    }

    fn parse_name(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn parse_integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected integer");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<i64>()
            .map_err(|e| Error::MalformedInput(e.to_string()))
    }

    fn parse_rational(&mut self) -> Result<Rational> {
        let neg = self.eat(b'-');
        let n = self.parse_integer()?;
        let q = if self.eat(b'/') {
            let d = self.parse_integer()?;
            Rational::from((n, d))
        } else {
            Rational::from(n)
        };
        Ok(if neg { -q } else { q })
    }
}

impl Scalar {
    pub fn parse(s: &str) -> Result<Scalar> {
        let mut p = SParser::new(s);
        let v = p.parse_sum()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return p.err("trailing input");
        }
        Ok(v)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Scalar::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

impl From<Rational> for Scalar {
    fn from(q: Rational) -> Self {
        Scalar::from_rational(q)
    }
}

// sorting helper used for deterministic orderings elsewhere
impl Scalar {
    pub fn cmp_structural(&self, other: &Scalar) -> Ordering {
        self.cmp(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prec::rel_err;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn root_of_unity_exponents_add_mod_one() {
        let a = Scalar::root_of_unity(q(1, 3));
        let b = a.mul(&a);
        assert_eq!(b, Scalar::root_of_unity(q(2, 3)));
        let c = b.mul(&a);
        assert_eq!(c, Scalar::one());
    }

    #[test]
    fn sqrt2_squares_to_two() {
        let r = Scalar::radical(q(2, 1), 2).unwrap();
        assert_eq!(r.mul(&r), Scalar::from_int(2));
    }

    #[test]
    fn radical_normalizes_denominators() {
        // (1/2)^{1/2} = rt(2,2)/2
        let r = Scalar::radical(q(1, 2), 2).unwrap();
        let expect = Scalar::radical(q(2, 1), 2).unwrap().mul_rational(&q(1, 2));
        assert_eq!(r, expect);
        // rt(8,2) = 2*rt(2,2)
        let r8 = Scalar::radical(q(8, 1), 2).unwrap();
        let expect8 = Scalar::radical(q(2, 1), 2).unwrap().mul_rational(&q(2, 1));
        assert_eq!(r8, expect8);
    }

    #[test]
    fn cube_root_of_one_third() {
        // frozen oracle: Newton iteration for x^3 = 1/3 at 40 digits
        let r = Scalar::from_rational(q(1, 3)).pow_rational(&q(1, 3)).unwrap();
        let p = Prec::new(40);
        let v = r.numeric(p);
        let mut x = Float::with_val(p.bits, 0.7);
        for _ in 0..80 {
            let x2 = x.clone() * &x;
            x = (Float::with_val(p.bits, 2) * &x + Float::with_val(p.bits, q(1, 3)) / x2)
                / Float::with_val(p.bits, 3);
        }
        let expect = Complex::with_val(p.bits, (x, Float::new(p.bits)));
        assert!(rel_err(&v, &expect) < 1e-35);
        assert!(v.real().to_f64() - 0.693361 < 1e-5);
    }

    #[test]
    fn i_squared_is_minus_one() {
        let i = Scalar::i();
        assert_eq!(i.mul(&i), Scalar::from_int(-1));
    }

    #[test]
    fn gaussian_inverse() {
        // 1/(1+i) = (1-i)/2
        let z = Scalar::one().add(&Scalar::i());
        let inv = z.inverse().unwrap();
        let expect = Scalar::one().sub(&Scalar::i()).mul_rational(&q(1, 2));
        assert_eq!(inv, expect);
    }

    #[test]
    fn principal_square_root_of_minus_one_third() {
        // (-1/3)^{1/2} = i/sqrt(3) = i*rt(3,2)/3
        let r = Scalar::from_rational(q(-1, 3)).pow_rational(&q(1, 2)).unwrap();
        let expect = Scalar::i()
            .mul(&Scalar::radical(q(3, 1), 2).unwrap())
            .mul_rational(&q(1, 3));
        assert_eq!(r, expect);
    }

    #[test]
    fn principal_root_of_root_of_unity() {
        // w(1/3)^{1/2}: arg 2pi/3 is principal, so result is w(1/6)
        let r = Scalar::root_of_unity(q(1, 3)).pow_rational(&q(1, 2)).unwrap();
        assert_eq!(r, Scalar::root_of_unity(q(1, 6)));
        // w(2/3) = -w(1/6): arg is -2pi/3 after principal reduction,
        // so sqrt has arg -pi/3, i.e. w(-1/6)
        let r2 = Scalar::root_of_unity(q(2, 3)).pow_rational(&q(1, 2)).unwrap();
        assert_eq!(r2, Scalar::root_of_unity(q(-1, 6)));
        let p = Prec::new(40);
        let v = r2.numeric(p);
        let ang = p.pi() * p.float_from_rational(&q(-1, 3));
        let expect = p.cis(&ang);
        assert!(rel_err(&v, &expect) < 1e-35);
    }

    #[test]
    fn mul_commutative_associative_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pool: Vec<Scalar> = vec![
            Scalar::from_rational(q(3, 2)),
            Scalar::i(),
            Scalar::root_of_unity(q(1, 3)),
            Scalar::radical(q(2, 1), 2).unwrap(),
            Scalar::from_int(-2).add(&Scalar::i()),
            Scalar::exp_rational(q(1, 2)),
            Scalar::cis_rational(q(2, 1)),
        ];
        for _ in 0..200 {
            let a = &pool[rng.gen_range(0..pool.len())];
            let b = &pool[rng.gen_range(0..pool.len())];
            let c = &pool[rng.gen_range(0..pool.len())];
            assert_eq!(a.mul(b), b.mul(a));
            assert_eq!(a.mul(b).mul(c), a.mul(&b.mul(c)));
        }
    }

    #[test]
    fn numeric_is_multiplicative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = Prec::new(60);
        let pool: Vec<Scalar> = vec![
            Scalar::from_rational(q(3, 2)),
            Scalar::i().add(&Scalar::from_int(1)),
            Scalar::root_of_unity(q(1, 5)),
            Scalar::radical(q(5, 1), 2).unwrap(),
            Scalar::exp_rational(q(-1, 3)),
            Scalar::cis_rational(q(1, 7)),
            Scalar::from_rational(q(2, 1)).pow_scalar(&Scalar::i()).unwrap(),
        ];
        for _ in 0..500 {
            let a = &pool[rng.gen_range(0..pool.len())];
            let b = &pool[rng.gen_range(0..pool.len())];
            let lhs = a.mul(b).numeric(p);
            let rhs = a.numeric(p) * b.numeric(p);
            assert!(rel_err(&lhs, &rhs) < 1e-55, "{a} * {b}");
        }
    }

    #[test]
    fn order_key_deterministic_and_idempotent() {
        let mut v = vec![Scalar::i(), Scalar::from_int(-1), Scalar::from_rational(q(1, 2))];
        v.sort_by_key(|s| s.order_key());
        let once = v.clone();
        v.sort_by_key(|s| s.order_key());
        assert_eq!(v, once);
        assert_eq!(Scalar::from_int(1).order_key(), Scalar::from_int(1).order_key());
        assert_ne!(Scalar::from_int(1).order_key(), Scalar::from_int(2).order_key());
    }

    #[test]
    fn print_parse_round_trip() {
        let samples = vec![
            Scalar::zero(),
            Scalar::from_rational(q(-7, 3)),
            Scalar::i().mul_rational(&q(1, 2)).add(&Scalar::one()),
            Scalar::root_of_unity(q(1, 3)),
            Scalar::radical(q(2, 1), 2).unwrap().mul(&Scalar::root_of_unity(q(1, 5))),
            Scalar::exp_rational(q(3, 4)),
            Scalar::cis_rational(q(-2, 7)),
            Scalar::from_int(2).pow_scalar(&Scalar::i()).unwrap(),
            Scalar::one().add(&Scalar::radical(q(5, 1), 2).unwrap()).inverse().unwrap(),
        ];
        for s in samples {
            let text = s.to_string();
            let back = Scalar::parse(&text).unwrap();
            assert_eq!(s, back, "round trip failed for {text}");
        }
    }

    #[test]
    fn numeric_of_simple_values() {
        let p = Prec::new(30);
        let v = Scalar::root_of_unity(q(1, 4)).numeric(p);
        assert!(rel_err(&v, &Complex::with_val(p.bits, (0, 1))) < 1e-28);
        let s = Scalar::one().add(&Scalar::i().mul_rational(&q(1, 2)));
        let v2 = s.numeric(p);
        assert!(rel_err(&v2, &Complex::with_val(p.bits, (1.0, 0.5))) < 1e-28);
    }

    #[test]
    fn zero_to_negative_power_fails() {
        assert!(Scalar::zero().pow_rational(&q(-1, 1)).is_err());
        assert!(Scalar::zero().inverse().is_err());
    }

    #[test]
    fn conj_is_involutive_and_matches_numeric() {
        let p = Prec::new(40);
        let samples = vec![
            Scalar::root_of_unity(q(1, 3)),
            Scalar::i().add(&Scalar::from_int(2)),
            Scalar::cis_rational(q(1, 2)).mul(&Scalar::radical(q(3, 1), 2).unwrap()),
        ];
        for s in samples {
            assert_eq!(s.conj().conj(), s);
            let a = s.conj().numeric(p);
            let b = s.numeric(p).conj();
            assert!(rel_err(&a, &b) < 1e-35);
        }
    }
}
