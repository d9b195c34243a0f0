//! Post-processing normal forms: special-word collapses, the Chen-Fox-Lyndon
//! normal form in the quasi-shuffle algebra, and the structural Li -> G ->
//! HPL conversions.

use crate::alphabet::{Letter, UpperLimit, WordSum};
use crate::constants::ConstCoeff;
use crate::error::{Error, Result};
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::quasishuffle::stuffle;
use crate::scalars::Scalar;
use rug::Rational;
use std::collections::HashMap;

// ---------- special words ----------

/// Polynomial in the bound upper limit U = a k + b as boundary powers of k.
fn upper_polynomial(coeffs: &[Rational], upper: &UpperLimit) -> LinComb {
    // sum_j c_j U^j expanded into powers of k
    let (a, b) = match upper {
        UpperLimit::Sym { a, b } => (*a, *b),
        UpperLimit::Concrete { n } => (0, *n),
    };
    let mut acc = LinComb::zero();
    for (j, c) in coeffs.iter().enumerate() {
        if *c == 0 {
            continue;
        }
        // (a k + b)^j binomially
        let mut binom = Rational::from(1);
        for i in 0..=j {
            if i > 0 {
                binom = binom.clone() * Rational::from(((j - i + 1) as i64, i as i64));
            }
            let coeff = c.clone()
                * &binom
                * Rational::from(a).pow_u(i as u32)
                * Rational::from(b).pow_u((j - i) as u32);
            if coeff == 0 {
                continue;
            }
            acc = acc.add(&LinComb::from_term(LcTerm {
                coeff: ConstCoeff::from_scalar(Scalar::from_rational(coeff)),
                boundary: Boundary::power(Scalar::one(), Scalar::from_int(i as i64)),
                factors: vec![],
            }));
        }
    }
    acc
}

trait RationalPowU {
    fn pow_u(self, e: u32) -> Rational;
}
impl RationalPowU for Rational {
    fn pow_u(self, e: u32) -> Rational {
        use rug::ops::Pow;
        self.pow(e)
    }
}

fn colored_parts(ws: &WordSum) -> Option<Vec<(&Scalar, &Scalar)>> {
    ws.word
        .iter()
        .map(|l| match l {
            Letter::Colored(c) => Some((&c.r, &c.s)),
            _ => None,
        })
        .collect()
}

/// binom(U, d) as a polynomial in U (falling factorial over d!).
fn binomial_poly(d: usize) -> Vec<Rational> {
    // prod_{i=0}^{d-1} (U - i) / d!
    let mut poly = vec![Rational::from(1)];
    for i in 0..d as i64 {
        let mut next = vec![Rational::from(0); poly.len() + 1];
        for (j, c) in poly.iter().enumerate() {
            next[j] -= c.clone() * Rational::from(i);
            next[j + 1] += c.clone();
        }
        poly = next;
    }
    let mut fact = Rational::from(1);
    for i in 2..=d as i64 {
        fact *= Rational::from(i);
    }
    poly.into_iter().map(|c| c / fact.clone()).collect()
}

/// Recognize one special word and return its collapsed form, if any.
fn collapse_word(ws: &WordSum) -> Option<LinComb> {
    let parts = colored_parts(ws)?;
    let d = parts.len();
    if d == 0 {
        return None;
    }
    let all_one_color = parts.iter().all(|(_, s)| s.is_one());
    // all-zero word: H_{(0,1)^d}(U) = binom(U, d)
    if all_one_color && parts.iter().all(|(r, _)| r.is_zero()) {
        return Some(upper_polynomial(&binomial_poly(d), &ws.upper));
    }
    // depth-one geometric word: H_{(0,s)}(U) = s (s^U - 1)/(s - 1), s != 1
    if d == 1 && parts[0].0.is_zero() && !parts[0].1.is_one() {
        let s = parts[0].1.clone();
        let c = s.mul(&s.sub(&Scalar::one()).inverse().ok()?);
        let (a, b) = match &ws.upper {
            UpperLimit::Sym { a, b } => (*a, *b),
            UpperLimit::Concrete { n } => (0, *n),
        };
        // s^U = s^b (s^a)^k
        let sa = s.pow_i64(a).ok()?;
        let sb = s.pow_i64(b).ok()?;
        let grow = LinComb::from_term(LcTerm {
            coeff: ConstCoeff::from_scalar(c.mul(&sb)),
            boundary: Boundary::power(sa, Scalar::zero()),
            factors: vec![],
        });
        return Some(grow.add(&LinComb::constant(ConstCoeff::from_scalar(c.neg()))));
    }
    // all-one word: complete Bell polynomial in depth-one harmonic numbers
    if d >= 2 && all_one_color && parts.iter().all(|(r, _)| r.is_one()) {
        return Some(bell_all_one(d, &ws.upper));
    }
    if d == 2 && all_one_color {
        let (r1, r2) = (parts[0].0.clone(), parts[1].0.clone());
        let h = |r: Scalar| -> Option<LinComb> {
            if r.is_zero() {
                // H_{(0,1)}(U) = U
                return Some(upper_polynomial(
                    &[Rational::from(0), Rational::from(1)],
                    &ws.upper,
                ));
            }
            Some(LinComb::single_word(
                ConstCoeff::one(),
                WordSum::new(
                    vec![Letter::colored(r, Scalar::one()).ok()?],
                    ws.upper.clone(),
                )
                .ok()?,
            ))
        };
        // ((0,1),(r,1)) -> U H^{(r)} - H^{(r-1)}
        if r1.is_zero() && !r2.is_zero() {
            let u = upper_polynomial(&[Rational::from(0), Rational::from(1)], &ws.upper);
            let hr = h(r2.clone())?;
            let hr1 = h(r2.sub(&Scalar::one()))?;
            return Some(u.mul(&hr).sub(&hr1));
        }
        // ((r,1),(0,1)) -> H^{(r-1)} - H^{(r)}
        if r2.is_zero() && !r1.is_zero() {
            let hr = h(r1.clone())?;
            let hr1 = h(r1.sub(&Scalar::one()))?;
            return Some(hr1.sub(&hr));
        }
    }
    None
}

/// H_{(1,1)^d}(U) = Y_d(H, -1! H^{(2)}, 2! H^{(3)}, ...)/d! via the complete
/// Bell recurrence Y_d = sum_i binom(d-1, i-1) x_i Y_{d-i}.
fn bell_all_one(d: usize, upper: &UpperLimit) -> LinComb {
    let x = |i: usize| -> LinComb {
        let mut fact = Rational::from(1);
        for t in 2..i as i64 {
            fact *= Rational::from(t);
        }
        let sign = if (i - 1) % 2 == 0 { fact.clone() } else { -fact };
        LinComb::single_word(
            ConstCoeff::from_scalar(Scalar::from_rational(sign)),
            WordSum::new(
                vec![Letter::colored(Scalar::from_int(i as i64), Scalar::one()).unwrap()],
                upper.clone(),
            )
            .unwrap(),
        )
    };
    let mut y: Vec<LinComb> = vec![LinComb::one()];
    for m in 1..=d {
        let mut acc = LinComb::zero();
        let mut binom = Rational::from(1);
        for i in 1..=m {
            if i > 1 {
                binom = binom.clone() * Rational::from(((m - i + 1) as i64, (i - 1) as i64));
            }
            acc = acc.add(
                &x(i)
                    .mul(&y[m - i])
                    .scale_scalar(&Scalar::from_rational(binom.clone())),
            );
        }
        y.push(acc);
    }
    let mut fact = Rational::from(1);
    for t in 2..=d as i64 {
        fact *= Rational::from(t);
    }
    y[d].scale_scalar(&Scalar::from_rational(Rational::from(1) / fact))
}

/// Replace special multiple harmonic words by boundary-factor / depth-one
/// expressions. Value-preserving at every binding of k.
pub fn simplify_special_words(lc: &LinComb) -> LinComb {
    let mut out = LinComb::zero();
    for t in lc.terms() {
        let mut acc = LinComb::from_term(LcTerm {
            coeff: t.coeff.clone(),
            boundary: t.boundary.clone(),
            factors: vec![],
        });
        for ws in &t.factors {
            let factor = match collapse_word(ws) {
                Some(c) => c,
                None => LinComb::single_word(ConstCoeff::one(), ws.clone()),
            };
            acc = acc.mul(&factor);
        }
        out = out.add(&acc);
    }
    out
}

// ---------- Chen-Fox-Lyndon ----------

/// Duval's algorithm: factor a word into nonincreasing Lyndon factors.
pub fn duval_factorization(word: &[Letter]) -> Vec<Vec<Letter>> {
    let n = word.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let (mut j, mut k) = (i + 1, i);
        while j < n && word[k] <= word[j] {
            if word[k] < word[j] {
                k = i;
            } else {
                k += 1;
            }
            j += 1;
        }
        while i <= k {
            out.push(word[i..i + j - k].to_vec());
            i += j - k;
        }
    }
    out
}

pub fn is_lyndon(word: &[Letter]) -> bool {
    !word.is_empty() && duval_factorization(word).len() == 1
}

/// Rewrite a word as a polynomial in Lyndon words: non-Lyndon words become
/// products of their Lyndon factors minus lower-order stuffle corrections,
/// recursively to a fixed point. Value-preserving at every upper limit.
fn rewrite_word(
    word: &[Letter],
    upper: &UpperLimit,
    memo: &mut HashMap<Vec<Letter>, LinComb>,
) -> Result<LinComb> {
    if word.is_empty() {
        return Ok(LinComb::one());
    }
    if let Some(hit) = memo.get(word) {
        return Ok(hit.clone());
    }
    if is_lyndon(word) {
        let lc = LinComb::single_word(ConstCoeff::one(), WordSum::new(word.to_vec(), upper.clone())?);
        memo.insert(word.to_vec(), lc.clone());
        return Ok(lc);
    }
    let factors = duval_factorization(word);
    debug_assert!(factors.len() >= 2);
    // stuffle product of the factors; the concatenation (this word) appears
    // with a positive integer multiplicity
    let mut expansion: Vec<(Vec<Letter>, Rational)> = vec![(factors[0].clone(), Rational::from(1))];
    for f in &factors[1..] {
        let mut next: Vec<(Vec<Letter>, Rational)> = Vec::new();
        for (w, m) in &expansion {
            for (sw, sm) in stuffle(w, f)? {
                next.push((sw, m.clone() * sm));
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        let mut combined: Vec<(Vec<Letter>, Rational)> = Vec::new();
        for (w, m) in next {
            match combined.last_mut() {
                Some((lw, lm)) if *lw == w => *lm += m,
                _ => combined.push((w, m)),
            }
        }
        expansion = combined;
    }
    let own = expansion
        .iter()
        .find(|(w, _)| w == word)
        .map(|(_, m)| m.clone())
        .ok_or_else(|| Error::ReductionFailed("concatenation missing from stuffle".into()))?;
    // product of the Lyndon factors as a single term
    let mut product = LinComb::one();
    for f in &factors {
        product = product.mul(&LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(f.clone(), upper.clone())?,
        ));
    }
    let mut acc = product;
    for (w, m) in &expansion {
        if w == word {
            continue;
        }
        let sub = rewrite_word(w, upper, memo)?;
        acc = acc.add(&sub.scale_scalar(&Scalar::from_rational(-m.clone())));
    }
    let inv = Scalar::from_rational(Rational::from(1) / own);
    let out = acc.scale_scalar(&inv);
    memo.insert(word.to_vec(), out.clone());
    Ok(out)
}

/// Chen-Fox-Lyndon normal form: every colored non-Lyndon word is rewritten
/// as products of Lyndon word sums; affine and polynomial factors pass
/// through. The output equals the input at every binding of k and is a
/// fixed point of this map.
pub fn lyndon_normal_form(lc: &LinComb) -> Result<LinComb> {
    let mut memo: HashMap<Vec<Letter>, LinComb> = HashMap::new();
    let mut out = LinComb::zero();
    for t in lc.terms() {
        let mut acc = LinComb::from_term(LcTerm {
            coeff: t.coeff.clone(),
            boundary: t.boundary.clone(),
            factors: vec![],
        });
        for ws in &t.factors {
            let is_colored = ws
                .word
                .iter()
                .all(|l| matches!(l, Letter::Colored(_)));
            let factor = if is_colored {
                rewrite_word(&ws.word, &ws.upper, &mut memo)?
            } else {
                LinComb::single_word(ConstCoeff::one(), ws.clone())
            };
            acc = acc.mul(&factor);
        }
        out = out.add(&acc);
    }
    Ok(out)
}

// ---------- Li -> G -> HPL ----------

/// A G-function word: G(a_1, ..., a_m; arg) with a sign from the conversion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GWord {
    pub letters: Vec<Scalar>,
    pub arg: Scalar,
    pub sign: i32,
}

/// The standard structural conversion of Li_{r_1..r_d}(z_1..z_d) to a G-word
/// with letters 0^{r_1 - 1}, 1/z_1, 0^{r_2 - 1}, 1/(z_1 z_2), ..., trailing
/// argument 1, and sign (-1)^d.
pub fn li_to_g(indices: &[i64], args: &[Scalar]) -> Result<GWord> {
    if indices.len() != args.len() {
        return Err(Error::ArityError("weights vs arguments".into()));
    }
    let mut letters = Vec::new();
    let mut prefix = Scalar::one();
    for (pos, (r, z)) in indices.iter().zip(args).enumerate() {
        if *r < 1 {
            return Err(Error::MalformedInput("weights must be positive integers".into()));
        }
        prefix = prefix.mul(z);
        if prefix.is_zero() {
            return Err(Error::SingularPrefix(pos));
        }
        for _ in 0..r - 1 {
            letters.push(Scalar::zero());
        }
        letters.push(prefix.inverse()?);
    }
    let d = indices.len();
    Ok(GWord {
        letters,
        arg: Scalar::one(),
        sign: if d % 2 == 0 { 1 } else { -1 },
    })
}

/// G-words over {-1, 0, 1} reduce to harmonic polylogarithms:
/// G(a_1..a_m; z) = (-1)^{#{a_j = 1}} H_{a_1..a_m}(z).
pub fn g_to_hpl(g: &GWord) -> Result<(Vec<i64>, i32)> {
    let mut indices = Vec::with_capacity(g.letters.len());
    let mut ones = 0;
    for a in &g.letters {
        let v = a
            .as_rational()
            .and_then(|q| if q.denom() == &1 { q.numer().to_i64() } else { None })
            .ok_or_else(|| Error::LetterOutOfAlphabet(a.to_string()))?;
        if !(-1..=1).contains(&v) {
            return Err(Error::LetterOutOfAlphabet(a.to_string()));
        }
        if v == 1 {
            ones += 1;
        }
        indices.push(v);
    }
    Ok((indices, g.sign * if ones % 2 == 0 { 1 } else { -1 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeval::eval_lincomb;
    use crate::prec::{rel_err, Prec};

    fn l(r: i64, s: i64) -> Letter {
        Letter::colored(Scalar::from_int(r), Scalar::from_int(s)).unwrap()
    }

    fn ws(word: &[(i64, i64)]) -> WordSum {
        WordSum::new(word.iter().map(|&(r, s)| l(r, s)).collect(), UpperLimit::k()).unwrap()
    }

    #[test]
    fn duval_reproduces_and_orders() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pool = [l(0, 1), l(1, -1), l(1, 1), l(2, 1)];
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let word: Vec<Letter> =
                (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
            let factors = duval_factorization(&word);
            // concatenation reproduces the word
            let cat: Vec<Letter> = factors.iter().flatten().cloned().collect();
            assert_eq!(cat, word);
            // factors nonincreasing and each Lyndon
            for f in &factors {
                assert!(is_lyndon(f));
            }
            for pair in factors.windows(2) {
                assert!(pair[0] >= pair[1]);
            }
        }
    }

    #[test]
    fn two_letter_non_lyndon_inversion() {
        // H_{ba} = H_b H_a - H_{ab} - H_{a o b} for b > a
        let prec = Prec::new(50);
        let word = vec![l(2, 1), l(1, 1)]; // b = (2,1) > a = (1,1)
        let mut memo = HashMap::new();
        let lc = rewrite_word(&word, &UpperLimit::k(), &mut memo).unwrap();
        for n in [5i64, 15] {
            let direct = crate::numeval::eval_word(&word, n, prec).unwrap();
            let v = eval_lincomb(&lc, n, prec).unwrap();
            assert!(rel_err(&direct, &v) < 1e-45);
        }
        // all output words Lyndon
        for w in lc.word_sums() {
            assert!(is_lyndon(&w.word));
        }
    }

    #[test]
    fn lyndon_word_passes_through() {
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(1, 1), (2, 1)]));
        let out = lyndon_normal_form(&lc).unwrap();
        assert_eq!(out, lc);
    }

    #[test]
    fn normal_form_value_preserving_and_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let prec = Prec::new(50);
        let pool = [l(0, 1), l(1, -1), l(1, 1), l(2, -1), l(2, 1)];
        for _ in 0..30 {
            let n = rng.gen_range(1..=4);
            let word: Vec<Letter> =
                (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
            let lc = LinComb::single_word(
                ConstCoeff::one(),
                WordSum::new(word, UpperLimit::k()).unwrap(),
            );
            let nf = lyndon_normal_form(&lc).unwrap();
            for k in [4i64, 9] {
                let a = eval_lincomb(&lc, k, prec).unwrap();
                let b = eval_lincomb(&nf, k, prec).unwrap();
                assert!(rel_err(&a, &b) < 1e-45);
            }
            let nf2 = lyndon_normal_form(&nf).unwrap();
            assert_eq!(nf, nf2);
        }
    }

    #[test]
    fn special_words_collapse() {
        let prec = Prec::new(50);
        // all-zero depth 3 -> binom(k,3)
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(0, 1), (0, 1), (0, 1)]));
        let out = simplify_special_words(&lc);
        assert!(out.word_sums().next().is_none());
        for k in [3i64, 7] {
            let v = eval_lincomb(&out, k, prec).unwrap();
            let expect = prec.from_i64(k * (k - 1) * (k - 2) / 6);
            assert!(rel_err(&v, &expect) < 1e-45);
        }
        // ((1,1),(1,1)) -> (H^2 - H^{(2)})/2
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(1, 1), (1, 1)]));
        let out = simplify_special_words(&lc);
        assert!(out.word_sums().all(|w| w.depth() == 1));
        for k in [4i64, 9] {
            let a = eval_lincomb(&lc, k, prec).unwrap();
            let b = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&a, &b) < 1e-45);
        }
        // ((r,1),(0,1)) -> H^{(r-1)} - H^{(r)}
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(3, 1), (0, 1)]));
        let out = simplify_special_words(&lc);
        for k in [4i64, 9] {
            let a = eval_lincomb(&lc, k, prec).unwrap();
            let b = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&a, &b) < 1e-45);
        }
        // ((0,1),(r,1)) -> U H^{(r)} - H^{(r-1)}
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(0, 1), (3, 1)]));
        let out = simplify_special_words(&lc);
        for k in [4i64, 9] {
            let a = eval_lincomb(&lc, k, prec).unwrap();
            let b = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&a, &b) < 1e-45);
        }
        // geometric depth-one with color -1 gives the (-1)^k boundary
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(0, -1)]));
        let out = simplify_special_words(&lc);
        assert!(out.word_sums().next().is_none());
        for k in [4i64, 9] {
            let a = eval_lincomb(&lc, k, prec).unwrap();
            let b = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&a, &b) < 1e-45);
        }
    }

    #[test]
    fn bell_identity_matches_all_one_words() {
        let prec = Prec::new(50);
        for d in 2..=4usize {
            let word: Vec<(i64, i64)> = vec![(1, 1); d];
            let lc = LinComb::single_word(ConstCoeff::one(), ws(&word));
            let out = simplify_special_words(&lc);
            assert!(out.word_sums().all(|w| w.depth() == 1));
            for k in [4i64, 9] {
                let a = eval_lincomb(&lc, k, prec).unwrap();
                let b = eval_lincomb(&out, k, prec).unwrap();
                assert!(rel_err(&a, &b) < 1e-45, "d={d} k={k}");
            }
        }
    }

    #[test]
    fn li_to_g_examples() {
        // Li_2(z) -> -G(0, 1/z; 1)
        let z = Scalar::from_rational(Rational::from((1, 3)));
        let g = li_to_g(&[2], &[z.clone()]).unwrap();
        assert_eq!(g.sign, -1);
        assert_eq!(g.letters.len(), 2);
        assert!(g.letters[0].is_zero());
        assert_eq!(g.letters[1], z.inverse().unwrap());
        // Li_{1,1}(z1,z2) -> +G(1/z1, 1/(z1 z2); 1)
        let g = li_to_g(&[1, 1], &[Scalar::from_int(2), Scalar::from_int(3)]).unwrap();
        assert_eq!(g.sign, 1);
        assert_eq!(g.letters.len(), 2);
        // Li_{2,1}(1,1) -> +G(0,1,1;1): d = 2, so the sign (-1)^d is positive
        let g = li_to_g(&[2, 1], &[Scalar::one(), Scalar::one()]).unwrap();
        assert_eq!(g.sign, 1);
        assert_eq!(
            g.letters,
            vec![Scalar::zero(), Scalar::one(), Scalar::one()]
        );
        // singular prefix
        assert!(matches!(
            li_to_g(&[2, 1], &[Scalar::zero(), Scalar::one()]),
            Err(Error::SingularPrefix(0))
        ));
    }

    #[test]
    fn g_to_hpl_examples() {
        let g = GWord { letters: vec![Scalar::zero()], arg: Scalar::from_int(1), sign: 1 };
        assert_eq!(g_to_hpl(&g).unwrap(), (vec![0], 1));
        let g = GWord {
            letters: vec![Scalar::one(), Scalar::zero()],
            arg: Scalar::from_int(1),
            sign: 1,
        };
        assert_eq!(g_to_hpl(&g).unwrap(), (vec![1, 0], -1));
        let g = GWord {
            letters: vec![Scalar::from_int(-1), Scalar::one(), Scalar::from_int(-1)],
            arg: Scalar::from_int(1),
            sign: 1,
        };
        assert_eq!(g_to_hpl(&g).unwrap(), (vec![-1, 1, -1], -1));
        let g = GWord { letters: vec![Scalar::from_int(2)], arg: Scalar::one(), sign: 1 };
        assert!(matches!(g_to_hpl(&g), Err(Error::LetterOutOfAlphabet(_))));
    }
}
