//! Letters, words, and upper-limit bookkeeping for the three monoidal
//! alphabets. A letter is one summand factor per nesting level; each alphabet
//! is closed under the pointwise product `merge`, which is what a stuffle
//! collision needs. The `MonoidalLetter` trait (value-at-n plus merge) is the
//! extension point for further alphabets.

use crate::error::{Error, Result};
use crate::prec::Prec;
use crate::scalars::Scalar;
use rug::Complex;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Colored,
    Affine,
    Poly,
}

/// One summand factor per nesting level: value at n plus pointwise product.
pub trait MonoidalLetter: Clone + Ord {
    fn merge(&self, other: &Self) -> Self;
    fn value(&self, n: i64, prec: Prec) -> Result<Complex>;
}

// ---------- colored ----------

/// s^n n^{-r}.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColoredLetter {
    pub r: Scalar,
    pub s: Scalar,
}

impl ColoredLetter {
    pub fn new(r: Scalar, s: Scalar) -> Result<Self> {
        if s.is_zero() {
            return Err(Error::NonCanonicalizable("colored letter with color 0".into()));
        }
        Ok(ColoredLetter { r, s })
    }
}

impl MonoidalLetter for ColoredLetter {
    fn merge(&self, other: &Self) -> Self {
        ColoredLetter {
            r: self.r.add(&other.r),
            s: self.s.mul(&other.s),
        }
    }

    fn value(&self, n: i64, prec: Prec) -> Result<Complex> {
        let sn = prec.cpow(&self.s.numeric(prec), &prec.from_i64(n));
        let nr = prec.int_pow(n, &self.r.neg().numeric(prec));
        Ok(sn * nr)
    }
}

// ---------- affine ----------

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AffineFactor {
    pub rho: Scalar,
    pub a: Scalar,
    pub b: Scalar,
}

/// sigma^n prod (a_v n + b_v)^{-rho_v}.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AffineLetter {
    pub sigma: Scalar,
    pub factors: Vec<AffineFactor>,
}

impl AffineLetter {
    pub fn new(sigma: Scalar, factors: Vec<(Scalar, Scalar, Scalar)>) -> Result<Self> {
        if sigma.is_zero() {
            return Err(Error::NonCanonicalizable("affine letter with color 0".into()));
        }
        let mut l = AffineLetter {
            sigma,
            factors: factors
                .into_iter()
                .map(|(rho, a, b)| AffineFactor { rho, a, b })
                .collect(),
        };
        l.canonicalize();
        Ok(l)
    }

    /// Single factor (a n + b)^{-rho} with color sigma, the paper's L_{a,b}^rho(sigma).
    pub fn single(rho: Scalar, sigma: Scalar, a: Scalar, b: Scalar) -> Result<Self> {
        AffineLetter::new(sigma, vec![(rho, a, b)])
    }

    fn canonicalize(&mut self) {
        self.factors.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        let mut merged: Vec<AffineFactor> = Vec::with_capacity(self.factors.len());
        for f in self.factors.drain(..) {
            match merged.last_mut() {
                Some(last) if last.a == f.a && last.b == f.b => {
                    last.rho = last.rho.add(&f.rho);
                }
                _ => merged.push(f),
            }
        }
        merged.retain(|f| !f.rho.is_zero());
        self.factors = merged;
    }
}

impl MonoidalLetter for AffineLetter {
    fn merge(&self, other: &Self) -> Self {
        let mut l = AffineLetter {
            sigma: self.sigma.mul(&other.sigma),
            factors: self
                .factors
                .iter()
                .chain(other.factors.iter())
                .cloned()
                .collect(),
        };
        l.canonicalize();
        l
    }

    fn value(&self, n: i64, prec: Prec) -> Result<Complex> {
        let mut v = prec.cpow(&self.sigma.numeric(prec), &prec.from_i64(n));
        for f in &self.factors {
            let base = f.a.mul_rational(&rug::Rational::from(n)).add(&f.b);
            if base.is_zero() {
                return Err(Error::SingularLetter(n));
            }
            let b = base.numeric(prec);
            if b.is_zero() {
                return Err(Error::SingularLetter(n));
            }
            v *= prec.cpow(&b, &f.rho.neg().numeric(prec));
        }
        Ok(v)
    }
}

// ---------- polynomial ----------

/// Coefficient list, constant term first; trailing zeros stripped.
pub type PolyCoeffs = Vec<Scalar>;

pub fn poly_canonical(mut coeffs: PolyCoeffs) -> Result<PolyCoeffs> {
    while coeffs.last().map_or(false, |c| c.is_zero()) {
        coeffs.pop();
    }
    if coeffs.is_empty() {
        return Err(Error::NonCanonicalizable("zero polynomial in a letter".into()));
    }
    Ok(coeffs)
}

pub fn poly_eval(coeffs: &[Scalar], x: &Scalar) -> Scalar {
    let mut acc = Scalar::zero();
    for c in coeffs.iter().rev() {
        acc = acc.mul(x).add(c);
    }
    acc
}

/// P(x/m): coefficient c_j becomes c_j / m^j.
pub fn poly_rescale_arg(coeffs: &[Scalar], m: i64) -> PolyCoeffs {
    let mut out = Vec::with_capacity(coeffs.len());
    let mut scale = rug::Rational::from(1);
    for c in coeffs {
        out.push(c.mul_rational(&scale));
        scale /= m;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolyFactor {
    pub rho: Scalar,
    pub poly: PolyCoeffs,
}

/// sigma^n prod P_v(n)^{-rho_v}.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolyLetter {
    pub sigma: Scalar,
    pub factors: Vec<PolyFactor>,
}

impl PolyLetter {
    pub fn new(sigma: Scalar, factors: Vec<(Scalar, PolyCoeffs)>) -> Result<Self> {
        if sigma.is_zero() {
            return Err(Error::NonCanonicalizable("poly letter with color 0".into()));
        }
        let mut fs = Vec::with_capacity(factors.len());
        for (rho, poly) in factors {
            fs.push(PolyFactor { rho, poly: poly_canonical(poly)? });
        }
        let mut l = PolyLetter { sigma, factors: fs };
        l.canonicalize();
        Ok(l)
    }

    fn canonicalize(&mut self) {
        self.factors.sort_by(|x, y| x.poly.cmp(&y.poly));
        let mut merged: Vec<PolyFactor> = Vec::with_capacity(self.factors.len());
        for f in self.factors.drain(..) {
            match merged.last_mut() {
                Some(last) if last.poly == f.poly => last.rho = last.rho.add(&f.rho),
                _ => merged.push(f),
            }
        }
        merged.retain(|f| !f.rho.is_zero());
        self.factors = merged;
    }
}

impl MonoidalLetter for PolyLetter {
    fn merge(&self, other: &Self) -> Self {
        let mut l = PolyLetter {
            sigma: self.sigma.mul(&other.sigma),
            factors: self
                .factors
                .iter()
                .chain(other.factors.iter())
                .cloned()
                .collect(),
        };
        l.canonicalize();
        l
    }

    fn value(&self, n: i64, prec: Prec) -> Result<Complex> {
        let mut v = prec.cpow(&self.sigma.numeric(prec), &prec.from_i64(n));
        let x = Scalar::from_int(n);
        for f in &self.factors {
            let base = poly_eval(&f.poly, &x);
            if base.is_zero() {
                return Err(Error::PolynomialVanishes(n));
            }
            let b = base.numeric(prec);
            if b.is_zero() {
                return Err(Error::PolynomialVanishes(n));
            }
            v *= prec.cpow(&b, &f.rho.neg().numeric(prec));
        }
        Ok(v)
    }
}

// ---------- dynamic letter / word ----------

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "alphabet", rename_all = "lowercase")]
pub enum Letter {
    Colored(ColoredLetter),
    Affine(AffineLetter),
    Poly(PolyLetter),
}

impl Letter {
    pub fn alphabet(&self) -> Alphabet {
        match self {
            Letter::Colored(_) => Alphabet::Colored,
            Letter::Affine(_) => Alphabet::Affine,
            Letter::Poly(_) => Alphabet::Poly,
        }
    }

    pub fn colored(r: Scalar, s: Scalar) -> Result<Letter> {
        Ok(Letter::Colored(ColoredLetter::new(r, s)?))
    }

    pub fn merge(&self, other: &Letter) -> Result<Letter> {
        match (self, other) {
            (Letter::Colored(a), Letter::Colored(b)) => Ok(Letter::Colored(a.merge(b))),
            (Letter::Affine(a), Letter::Affine(b)) => Ok(Letter::Affine(a.merge(b))),
            (Letter::Poly(a), Letter::Poly(b)) => Ok(Letter::Poly(a.merge(b))),
            _ => Err(Error::AlphabetMismatch),
        }
    }

    pub fn value(&self, n: i64, prec: Prec) -> Result<Complex> {
        match self {
            Letter::Colored(l) => l.value(n, prec),
            Letter::Affine(l) => l.value(n, prec),
            Letter::Poly(l) => l.value(n, prec),
        }
    }

    /// Value-preserving embedding along colored -> affine -> poly.
    pub fn embed(&self, into: Alphabet) -> Result<Letter> {
        let from = self.alphabet();
        if from == into {
            return Ok(self.clone());
        }
        match (self, into) {
            (Letter::Colored(c), Alphabet::Affine) => Ok(Letter::Affine(AffineLetter::new(
                c.s.clone(),
                vec![(c.r.clone(), Scalar::one(), Scalar::zero())],
            )?)),
            (Letter::Colored(c), Alphabet::Poly) => Ok(Letter::Poly(PolyLetter::new(
                c.s.clone(),
                vec![(c.r.clone(), vec![Scalar::zero(), Scalar::one()])],
            )?)),
            (Letter::Affine(a), Alphabet::Poly) => Ok(Letter::Poly(PolyLetter::new(
                a.sigma.clone(),
                a.factors
                    .iter()
                    .map(|f| (f.rho.clone(), vec![f.b.clone(), f.a.clone()]))
                    .collect(),
            )?)),
            _ => Err(Error::IllegalDirection),
        }
    }

    /// Sum of letter powers (depth-one exponent sum for affine/poly letters).
    pub fn weight(&self) -> Scalar {
        match self {
            Letter::Colored(c) => c.r.clone(),
            Letter::Affine(a) => a
                .factors
                .iter()
                .fold(Scalar::zero(), |acc, f| acc.add(&f.rho)),
            Letter::Poly(p) => p
                .factors
                .iter()
                .fold(Scalar::zero(), |acc, f| acc.add(&f.rho)),
        }
    }

    pub fn color(&self) -> &Scalar {
        match self {
            Letter::Colored(c) => &c.s,
            Letter::Affine(a) => &a.sigma,
            Letter::Poly(p) => &p.sigma,
        }
    }
}

/// Symbolic upper limit a*k + b (a >= 1, a+b >= 1), or a concrete integer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpperLimit {
    Sym { a: i64, b: i64 },
    Concrete { n: i64 },
}

impl UpperLimit {
    pub fn k() -> Self {
        UpperLimit::Sym { a: 1, b: 0 }
    }

    pub fn sym(a: i64, b: i64) -> Result<Self> {
        if a < 1 || a + b < 1 {
            return Err(Error::MalformedInput(format!(
                "upper limit {a}k{b:+} not positive for k >= 1"
            )));
        }
        Ok(UpperLimit::Sym { a, b })
    }

    pub fn concrete(n: i64) -> Self {
        UpperLimit::Concrete { n }
    }

    pub fn bind(&self, k: i64) -> i64 {
        match self {
            UpperLimit::Sym { a, b } => a * k + b,
            UpperLimit::Concrete { n } => *n,
        }
    }
}

/// A word of letters with an upper limit: the basic carrier H/G/P.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WordSum {
    pub word: Vec<Letter>,
    pub upper: UpperLimit,
}

impl WordSum {
    pub fn new(word: Vec<Letter>, upper: UpperLimit) -> Result<Self> {
        let mut alpha = None;
        for l in &word {
            match alpha {
                None => alpha = Some(l.alphabet()),
                Some(a) if a == l.alphabet() => {}
                _ => return Err(Error::AlphabetMismatch),
            }
        }
        Ok(WordSum { word, upper })
    }

    pub fn empty(upper: UpperLimit) -> Self {
        WordSum { word: vec![], upper }
    }

    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn alphabet(&self) -> Option<Alphabet> {
        self.word.first().map(|l| l.alphabet())
    }

    pub fn embed(&self, into: Alphabet) -> Result<WordSum> {
        let word = self
            .word
            .iter()
            .map(|l| l.embed(into))
            .collect::<Result<Vec<_>>>()?;
        Ok(WordSum { word, upper: self.upper.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prec::rel_err;
    use rug::Rational;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_rational(Rational::from((n, d)))
    }

    #[test]
    fn colored_merge_adds_powers_multiplies_colors() {
        let a = ColoredLetter::new(q(1, 1), q(1, 1)).unwrap();
        let b = ColoredLetter::new(q(2, 1), q(-1, 1)).unwrap();
        let m = a.merge(&b);
        assert_eq!(m, ColoredLetter::new(q(3, 1), q(-1, 1)).unwrap());
    }

    #[test]
    fn affine_equal_bases_merge() {
        let a = AffineLetter::new(q(2, 1), vec![(q(1, 1), q(1, 1), q(0, 1))]).unwrap();
        let b = AffineLetter::new(q(3, 1), vec![(q(5, 2), q(1, 1), q(0, 1))]).unwrap();
        let m = a.merge(&b);
        let expect =
            AffineLetter::new(q(6, 1), vec![(q(7, 2), q(1, 1), q(0, 1))]).unwrap();
        assert_eq!(m, expect);
    }

    #[test]
    fn poly_merge_sorts_factors_and_preserves_value() {
        // ((2),-1,(x^2+1)) o ((3),i,(x)) = ((3,2),-i,(x, x^2+1)) up to factor order
        let p1 = PolyLetter::new(
            Scalar::from_int(-1),
            vec![(q(2, 1), vec![q(1, 1), q(0, 1), q(1, 1)])],
        )
        .unwrap();
        let p2 = PolyLetter::new(Scalar::i(), vec![(q(3, 1), vec![q(0, 1), q(1, 1)])]).unwrap();
        let m = p1.merge(&p2);
        assert_eq!(m.sigma, Scalar::from_int(-1).mul(&Scalar::i()));
        assert_eq!(m.factors.len(), 2);
        let prec = Prec::new(50);
        let lhs = m.value(2, prec).unwrap();
        let rhs = p1.value(2, prec).unwrap() * p2.value(2, prec).unwrap();
        assert!(rel_err(&lhs, &rhs) < 1e-45);
    }

    #[test]
    fn merge_commutative_associative_and_numeric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let prec = Prec::new(60);
        let colors = [q(1, 1), q(-1, 1), q(1, 2)];
        for _ in 0..40 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                Letter::colored(
                    q(rng.gen_range(-2..4), 1),
                    colors[rng.gen_range(0..colors.len())].clone(),
                )
                .unwrap()
            };
            let x = mk(&mut rng);
            let y = mk(&mut rng);
            let z = mk(&mut rng);
            assert_eq!(x.merge(&y).unwrap(), y.merge(&x).unwrap());
            assert_eq!(
                x.merge(&y).unwrap().merge(&z).unwrap(),
                x.merge(&y.merge(&z).unwrap()).unwrap()
            );
            for n in 1..=20 {
                let lhs = x.merge(&y).unwrap().value(n, prec).unwrap();
                let rhs = x.value(n, prec).unwrap() * y.value(n, prec).unwrap();
                assert!(rel_err(&lhs, &rhs) < 1e-50);
            }
        }
    }

    #[test]
    fn embed_direction_and_idempotence() {
        let c = Letter::colored(q(2, 1), q(1, 2)).unwrap();
        let a = c.embed(Alphabet::Affine).unwrap();
        let p = c.embed(Alphabet::Poly).unwrap();
        assert_eq!(a.embed(Alphabet::Affine).unwrap(), a);
        assert!(a.embed(Alphabet::Colored).is_err());
        let prec = Prec::new(50);
        for n in 1..=20 {
            let cv = c.value(n, prec).unwrap();
            assert!(rel_err(&cv, &a.value(n, prec).unwrap()) < 1e-45);
            assert!(rel_err(&cv, &p.value(n, prec).unwrap()) < 1e-45);
            assert!(
                rel_err(&cv, &a.embed(Alphabet::Poly).unwrap().value(n, prec).unwrap()) < 1e-45
            );
        }
    }

    #[test]
    fn singular_letter_detected_at_evaluation() {
        // (n - 2)^{-1} is singular at n = 2 only
        let l = AffineLetter::new(q(1, 1), vec![(q(1, 1), q(1, 1), q(-2, 1))]).unwrap();
        assert!(l.value(1, Prec::new(30)).is_ok());
        assert!(matches!(l.value(2, Prec::new(30)), Err(Error::SingularLetter(2))));
    }

    #[test]
    fn letter_json_schema() {
        let c = Letter::colored(q(3, 1), q(-1, 1)).unwrap();
        let js = serde_json::to_value(&c).unwrap();
        assert_eq!(js["alphabet"], "colored");
        assert_eq!(js["r"], "3");
        assert_eq!(js["s"], "-1");
        let back: Letter = serde_json::from_value(js).unwrap();
        assert_eq!(back, c);

        let w = WordSum::new(vec![c], UpperLimit::sym(1, 0).unwrap()).unwrap();
        let js = serde_json::to_value(&w).unwrap();
        assert_eq!(js["upper"]["a"], 1);
        assert_eq!(js["upper"]["b"], 0);
        let back: WordSum = serde_json::from_value(js).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn upper_limit_positivity() {
        assert!(UpperLimit::sym(1, 0).is_ok());
        assert!(UpperLimit::sym(2, -1).is_ok());
        assert!(UpperLimit::sym(1, -1).is_err());
        assert!(UpperLimit::sym(0, 3).is_err());
        assert_eq!(UpperLimit::sym(2, 1).unwrap().bind(3), 7);
    }
}
