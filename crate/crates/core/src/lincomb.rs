//! Formal linear combinations of word-sum products.
//!
//! Each term is coeff * z^k * k^q * (extra boundary letters at k) * prod of
//! word sums. Terms with identical boundary and factor keys are combined and
//! zero-coefficient terms dropped, so a `LinComb` is always canonical.

use crate::alphabet::{Letter, UpperLimit, WordSum};
use crate::constants::ConstCoeff;
use crate::error::Result;
use crate::scalars::Scalar;
use serde::{Deserialize, Serialize};

/// Boundary factor evaluated at the bound upper variable k:
/// z^k * k^q * prod extra(k). Colored extras fold into (z, q); only
/// affine/poly letters stay in `extra`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Boundary {
    pub z: Scalar,
    pub q: Scalar,
    pub extra: Vec<Letter>,
}

impl Boundary {
    pub fn trivial() -> Self {
        Boundary { z: Scalar::one(), q: Scalar::zero(), extra: vec![] }
    }

    pub fn power(z: Scalar, q: Scalar) -> Self {
        let mut b = Boundary { z, q, extra: vec![] };
        b.canonicalize();
        b
    }

    pub fn with_letter(mut self, l: Letter) -> Self {
        self.extra.push(l);
        self.canonicalize();
        self
    }

    pub fn is_trivial(&self) -> bool {
        self.z.is_one() && self.q.is_zero() && self.extra.is_empty()
    }

    fn canonicalize(&mut self) {
        // fold colored extras into (z, q), merge the rest by alphabet
        let mut rest: Vec<Letter> = Vec::new();
        for l in self.extra.drain(..) {
            match l {
                Letter::Colored(c) => {
                    self.z = self.z.mul(&c.s);
                    self.q = self.q.sub(&c.r);
                }
                other => rest.push(other),
            }
        }
        rest.sort();
        let mut merged: Vec<Letter> = Vec::new();
        for l in rest {
            match merged.last_mut() {
                Some(last) if last.alphabet() == l.alphabet() => {
                    *last = last.merge(&l).expect("same alphabet");
                }
                _ => merged.push(l),
            }
        }
        self.extra = merged;
    }

    pub fn mul(&self, other: &Boundary) -> Boundary {
        let mut b = Boundary {
            z: self.z.mul(&other.z),
            q: self.q.add(&other.q),
            extra: self.extra.iter().chain(other.extra.iter()).cloned().collect(),
        };
        b.canonicalize();
        b
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LcTerm {
    pub coeff: ConstCoeff,
    pub boundary: Boundary,
    pub factors: Vec<WordSum>,
}

impl LcTerm {
    pub fn constant(coeff: ConstCoeff) -> Self {
        LcTerm { coeff, boundary: Boundary::trivial(), factors: vec![] }
    }

    pub fn word(coeff: ConstCoeff, ws: WordSum) -> Self {
        LcTerm { coeff, boundary: Boundary::trivial(), factors: vec![ws] }
    }

    fn canonicalize(&mut self) {
        // empty words are the constant 1
        self.factors.retain(|w| !w.word.is_empty());
        self.factors.sort();
    }

    fn key(&self) -> (&Boundary, &Vec<WordSum>) {
        (&self.boundary, &self.factors)
    }

    pub fn mul(&self, other: &LcTerm) -> LcTerm {
        let mut t = LcTerm {
            coeff: self.coeff.mul(&other.coeff),
            boundary: self.boundary.mul(&other.boundary),
            factors: self.factors.iter().chain(other.factors.iter()).cloned().collect(),
        };
        t.canonicalize();
        t
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct LinComb {
    terms: Vec<LcTerm>,
}

impl LinComb {
    pub fn zero() -> Self {
        LinComb { terms: vec![] }
    }

    pub fn one() -> Self {
        LinComb::from_term(LcTerm::constant(ConstCoeff::one()))
    }

    pub fn constant(c: ConstCoeff) -> Self {
        LinComb::from_term(LcTerm::constant(c))
    }

    pub fn from_term(mut t: LcTerm) -> Self {
        t.canonicalize();
        LinComb::normalize(vec![t])
    }

    pub fn from_terms(mut ts: Vec<LcTerm>) -> Self {
        for t in &mut ts {
            t.canonicalize();
        }
        LinComb::normalize(ts)
    }

    pub fn single_word(coeff: ConstCoeff, ws: WordSum) -> Self {
        LinComb::from_term(LcTerm::word(coeff, ws))
    }

    fn normalize(mut terms: Vec<LcTerm>) -> LinComb {
        terms.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut out: Vec<LcTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.key() == t.key() => {
                    last.coeff = last.coeff.add(&t.coeff);
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| !t.coeff.is_zero());
        LinComb { terms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[LcTerm] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<LcTerm> {
        self.terms
    }

    pub fn add(&self, other: &LinComb) -> LinComb {
        let mut t = self.terms.clone();
        t.extend(other.terms.iter().cloned());
        LinComb::normalize(t)
    }

    pub fn neg(&self) -> LinComb {
        LinComb {
            terms: self
                .terms
                .iter()
                .map(|t| LcTerm { coeff: t.coeff.neg(), ..t.clone() })
                .collect(),
        }
    }

    pub fn sub(&self, other: &LinComb) -> LinComb {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &ConstCoeff) -> LinComb {
        if c.is_zero() {
            return LinComb::zero();
        }
        LinComb::normalize(
            self.terms
                .iter()
                .map(|t| LcTerm { coeff: t.coeff.mul(c), ..t.clone() })
                .collect(),
        )
    }

    pub fn scale_scalar(&self, s: &Scalar) -> LinComb {
        self.scale(&ConstCoeff::from_scalar(s.clone()))
    }

    /// Formal product: boundaries multiply, factor lists concatenate.
    /// Use `quasishuffle::expand_products` to resolve factor products into
    /// single word sums.
    pub fn mul(&self, other: &LinComb) -> LinComb {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(a.mul(b));
            }
        }
        LinComb::normalize(out)
    }

    /// Apply a fallible term-wise map and re-normalize.
    pub fn try_map_terms<F>(&self, mut f: F) -> Result<LinComb>
    where
        F: FnMut(&LcTerm) -> Result<LinComb>,
    {
        let mut acc = LinComb::zero();
        for t in &self.terms {
            acc = acc.add(&f(t)?);
        }
        Ok(acc)
    }

    /// All word sums appearing in any term.
    pub fn word_sums(&self) -> impl Iterator<Item = &WordSum> {
        self.terms.iter().flat_map(|t| t.factors.iter())
    }

    /// Replace the symbolic upper limit of every word sum (used when a
    /// reduction reports its result at a scaled upper limit).
    pub fn with_upper(&self, upper: &UpperLimit) -> LinComb {
        LinComb::normalize(
            self.terms
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    for w in &mut t.factors {
                        w.upper = upper.clone();
                    }
                    t
                })
                .collect(),
        )
    }
}
