//! Formal constant symbols and polynomial coefficients over them.
//!
//! A `ConstCoeff` is a multivariate polynomial over `Scalar` in opaque
//! constant symbols; it is the coefficient ring of `LinComb` and the value
//! space of limit passage. Symbols carry enough data for numeric evaluation
//! (done in `numeval`).

use crate::alphabet::{AffineLetter, PolyLetter};
use crate::scalars::Scalar;
use serde::{Deserialize, Serialize};

/// An opaque constant with enough data to evaluate it numerically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstSym {
    Pi,
    EulerGamma,
    /// Principal log of an exact scalar.
    Log(Scalar),
    /// zeta(r1,...,rd) = Li at all-one colors.
    Zeta(Vec<Scalar>),
    /// Li_{r1,...,rd}(z1,...,zd).
    Li(Vec<Scalar>, Vec<Scalar>),
    /// Limit of an affine word sum.
    LiAff(Vec<AffineLetter>),
    /// Limit of a polynomial word sum.
    LiPb(Vec<PolyLetter>),
    /// H_x^{(r)}(s) at a non-integer upper argument (Lerch continuation).
    HNonInteger { arg: Scalar, power: Scalar, color: Scalar },
}

type Monomial = Vec<(ConstSym, u32)>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct ConstCoeff {
    /// Sorted monomials with nonzero scalar coefficients.
    terms: Vec<(Monomial, Scalar)>,
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut m: Monomial = a.iter().chain(b.iter()).cloned().collect();
    m.sort_by(|x, y| x.0.cmp(&y.0));
    let mut out: Monomial = Vec::with_capacity(m.len());
    for (sym, e) in m {
        match out.last_mut() {
            Some((s, acc)) if *s == sym => *acc += e,
            _ => out.push((sym, e)),
        }
    }
    out
}

impl ConstCoeff {
    pub fn zero() -> Self {
        ConstCoeff { terms: vec![] }
    }

    pub fn one() -> Self {
        ConstCoeff::from_scalar(Scalar::one())
    }

    pub fn from_scalar(s: Scalar) -> Self {
        if s.is_zero() {
            return ConstCoeff::zero();
        }
        ConstCoeff { terms: vec![(vec![], s)] }
    }

    pub fn symbol(sym: ConstSym) -> Self {
        ConstCoeff { terms: vec![(vec![(sym, 1)], Scalar::one())] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The scalar part if the polynomial is a constant (no symbols).
    pub fn as_scalar(&self) -> Option<Scalar> {
        match self.terms.len() {
            0 => Some(Scalar::zero()),
            1 if self.terms[0].0.is_empty() => Some(self.terms[0].1.clone()),
            _ => None,
        }
    }

    fn normalize(mut terms: Vec<(Monomial, Scalar)>) -> Self {
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Monomial, Scalar)> = Vec::with_capacity(terms.len());
        for (m, c) in terms {
            match out.last_mut() {
                Some((lm, lc)) if *lm == m => *lc = lc.add(&c),
                _ => out.push((m, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        ConstCoeff { terms: out }
    }

    pub fn add(&self, other: &ConstCoeff) -> ConstCoeff {
        let mut t = self.terms.clone();
        t.extend(other.terms.iter().cloned());
        ConstCoeff::normalize(t)
    }

    pub fn neg(&self) -> ConstCoeff {
        ConstCoeff {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &ConstCoeff) -> ConstCoeff {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &ConstCoeff) -> ConstCoeff {
        let mut t = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                t.push((mul_monomials(ma, mb), ca.mul(cb)));
            }
        }
        ConstCoeff::normalize(t)
    }

    pub fn mul_scalar(&self, s: &Scalar) -> ConstCoeff {
        if s.is_zero() {
            return ConstCoeff::zero();
        }
        ConstCoeff {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.mul(s))).collect(),
        }
    }

    pub fn monomials(&self) -> impl Iterator<Item = (&[(ConstSym, u32)], &Scalar)> {
        self.terms.iter().map(|(m, c)| (m.as_slice(), c))
    }

    /// Replace one symbol by a polynomial, e.g. zeta(p) by a word sum's value
    /// during divergence peeling. `subst` is substituted for every occurrence.
    pub fn substitute(&self, sym: &ConstSym, subst: &ConstCoeff) -> ConstCoeff {
        let mut acc = ConstCoeff::zero();
        for (m, c) in &self.terms {
            let mut term = ConstCoeff::from_scalar(c.clone());
            for (s, e) in m {
                let factor = if s == sym {
                    let mut p = ConstCoeff::one();
                    for _ in 0..*e {
                        p = p.mul(subst);
                    }
                    p
                } else {
                    let mut p = ConstCoeff::one();
                    let single = ConstCoeff::symbol(s.clone());
                    for _ in 0..*e {
                        p = p.mul(&single);
                    }
                    p
                };
                term = term.mul(&factor);
            }
            acc = acc.add(&term);
        }
        acc
    }

    pub fn contains(&self, sym: &ConstSym) -> bool {
        self.terms
            .iter()
            .any(|(m, _)| m.iter().any(|(s, _)| s == sym))
    }

    pub fn symbols(&self) -> Vec<&ConstSym> {
        let mut out = Vec::new();
        for (m, _) in &self.terms {
            for (s, _) in m {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }
}

impl From<Scalar> for ConstCoeff {
    fn from(s: Scalar) -> Self {
        ConstCoeff::from_scalar(s)
    }
}

impl std::fmt::Display for ConstSym {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstSym::Pi => write!(f, "Pi"),
            ConstSym::EulerGamma => write!(f, "EulerGamma"),
            ConstSym::Log(s) => write!(f, "log({s})"),
            ConstSym::Zeta(rs) => {
                let parts: Vec<String> = rs.iter().map(|r| r.to_string()).collect();
                write!(f, "zeta({})", parts.join(","))
            }
            ConstSym::Li(rs, zs) => {
                let r: Vec<String> = rs.iter().map(|x| x.to_string()).collect();
                let z: Vec<String> = zs.iter().map(|x| x.to_string()).collect();
                write!(f, "Li([{}];[{}])", r.join(","), z.join(","))
            }
            ConstSym::LiAff(w) => write!(f, "LiAff(depth {})", w.len()),
            ConstSym::LiPb(w) => write!(f, "LiPb(depth {})", w.len()),
            ConstSym::HNonInteger { arg, power, color } => {
                write!(f, "Hx({arg};{power};{color})")
            }
        }
    }
}

impl std::fmt::Display for ConstCoeff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let mut parts = vec![format!("({c})")];
            for (s, e) in m {
                if *e == 1 {
                    parts.push(s.to_string());
                } else {
                    parts.push(format!("{s}^{e}"));
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_ring_basics() {
        let z3 = ConstCoeff::symbol(ConstSym::Zeta(vec![Scalar::from_int(3)]));
        let pi = ConstCoeff::symbol(ConstSym::Pi);
        let p = z3.add(&pi).mul(&z3.sub(&pi));
        // (z+p)(z-p) = z^2 - p^2
        let expect = z3.mul(&z3).sub(&pi.mul(&pi));
        assert_eq!(p, expect);
        assert!(p.sub(&expect).is_zero());
    }

    #[test]
    fn substitution_replaces_powers() {
        let z2 = ConstSym::Zeta(vec![Scalar::from_int(2)]);
        let c = ConstCoeff::symbol(z2.clone()).mul(&ConstCoeff::symbol(z2.clone()));
        let two = ConstCoeff::from_scalar(Scalar::from_int(2));
        let out = c.substitute(&z2, &two);
        assert_eq!(out.as_scalar().unwrap(), Scalar::from_int(4));
    }
}
