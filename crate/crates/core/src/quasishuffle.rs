//! The stuffle (quasi-shuffle) algebra on words: products of word sums with a
//! common upper limit expand into linear combinations of single word sums,
//! with index collisions resolved by the letter merge.

use crate::alphabet::{Letter, UpperLimit, WordSum};
use crate::constants::ConstCoeff;
use crate::error::{Error, Result};
use crate::lincomb::{LcTerm, LinComb};
use crate::scalars::Scalar;
use rug::Rational;

fn merge(a: &Letter, b: &Letter) -> Letter {
    a.merge(b).expect("stuffle inputs share one alphabet")
}

/// Quasi-shuffle of two words by the three-way recursion: take the head of u,
/// the head of v, or their merge. Returns (word, multiplicity) with canonical
/// word order.
pub fn stuffle(u: &[Letter], v: &[Letter]) -> Result<Vec<(Vec<Letter>, u64)>> {
    if let (Some(a), Some(b)) = (u.first(), v.first()) {
        if a.alphabet() != b.alphabet() {
            return Err(Error::AlphabetMismatch);
        }
    }
    let mut acc: Vec<(Vec<Letter>, u64)> = Vec::new();
    stuffle_rec(u, v, &mut Vec::new(), &mut acc);
    acc.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Vec<Letter>, u64)> = Vec::with_capacity(acc.len());
    for (w, m) in acc {
        match out.last_mut() {
            Some((lw, lm)) if *lw == w => *lm += m,
            _ => out.push((w, m)),
        }
    }
    Ok(out)
}

fn stuffle_rec(
    u: &[Letter],
    v: &[Letter],
    prefix: &mut Vec<Letter>,
    acc: &mut Vec<(Vec<Letter>, u64)>,
) {
    match (u.first(), v.first()) {
        (None, _) => {
            let mut w = prefix.clone();
            w.extend(v.iter().cloned());
            acc.push((w, 1));
        }
        (_, None) => {
            let mut w = prefix.clone();
            w.extend(u.iter().cloned());
            acc.push((w, 1));
        }
        (Some(a), Some(b)) => {
            prefix.push(a.clone());
            stuffle_rec(&u[1..], v, prefix, acc);
            prefix.pop();
            prefix.push(b.clone());
            stuffle_rec(u, &v[1..], prefix, acc);
            prefix.pop();
            prefix.push(merge(a, b));
            stuffle_rec(&u[1..], &v[1..], prefix, acc);
            prefix.pop();
        }
    }
}

/// Convert a star (weakly ordered) word into a linear combination of strict
/// word sums: one term per composition of the index list into adjacent
/// blocks, block letters merged. Depth d gives exactly 2^(d-1) terms.
pub fn star_to_strict(word: &[Letter], upper: UpperLimit) -> Result<LinComb> {
    if word.is_empty() {
        return Err(Error::MalformedInput("empty star word".into()));
    }
    let mut out = LinComb::zero();
    let d = word.len();
    // bit i of mask set = index i+1 is glued to index i
    for mask in 0u64..(1 << (d - 1)) {
        let mut letters: Vec<Letter> = vec![word[0].clone()];
        for (i, l) in word.iter().enumerate().skip(1) {
            if mask >> (i - 1) & 1 == 1 {
                let last = letters.last_mut().unwrap();
                *last = last.merge(l)?;
            } else {
                letters.push(l.clone());
            }
        }
        out = out.add(&LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(letters, upper.clone())?,
        ));
    }
    Ok(out)
}

/// Left-fold of the stuffle over a product of word sums sharing one upper
/// limit and alphabet. Empty input gives the unit.
pub fn product_to_lincomb(factors: &[WordSum]) -> Result<LinComb> {
    if factors.is_empty() {
        return Ok(LinComb::one());
    }
    let upper = factors[0].upper.clone();
    let mut alphabet = None;
    for f in factors {
        if f.upper != upper {
            return Err(Error::UpperMismatch);
        }
        if let Some(a) = f.alphabet() {
            match alphabet {
                None => alphabet = Some(a),
                Some(x) if x == a => {}
                _ => return Err(Error::AlphabetMismatch),
            }
        }
    }
    let mut words: Vec<(Vec<Letter>, Rational)> =
        vec![(factors[0].word.clone(), Rational::from(1))];
    for f in &factors[1..] {
        let mut next: Vec<(Vec<Letter>, Rational)> = Vec::new();
        for (w, m) in &words {
            for (sw, sm) in stuffle(w, &f.word)? {
                next.push((sw, m.clone() * sm));
            }
        }
        words = combine(next);
    }
    let mut out = LinComb::zero();
    for (w, m) in words {
        out = out.add(&LinComb::single_word(
            ConstCoeff::from_scalar(Scalar::from_rational(m)),
            WordSum::new(w, upper.clone())?,
        ));
    }
    Ok(out)
}

fn combine(mut v: Vec<(Vec<Letter>, Rational)>) -> Vec<(Vec<Letter>, Rational)> {
    v.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Vec<Letter>, Rational)> = Vec::with_capacity(v.len());
    for (w, m) in v {
        match out.last_mut() {
            Some((lw, lm)) if *lw == w => *lm += m,
            _ => out.push((w, m)),
        }
    }
    out.retain(|(_, m)| *m != 0);
    out
}

/// Expand every multi-factor term of a LinComb into single word sums via the
/// stuffle. Factors inside one term must share an upper limit; mixed-alphabet
/// factors are first embedded into the largest alphabet present.
pub fn expand_products(lc: &LinComb) -> Result<LinComb> {
    lc.try_map_terms(|t| {
        if t.factors.len() <= 1 {
            return Ok(LinComb::from_term(t.clone()));
        }
        let target = t
            .factors
            .iter()
            .filter_map(|w| w.alphabet())
            .max()
            .unwrap_or(crate::alphabet::Alphabet::Colored);
        let embedded: Vec<WordSum> = t
            .factors
            .iter()
            .map(|w| w.embed(target))
            .collect::<Result<_>>()?;
        let expanded = product_to_lincomb(&embedded)?;
        Ok(expanded.scale(&t.coeff).try_map_terms(|u| {
            Ok(LinComb::from_term(LcTerm {
                coeff: u.coeff.clone(),
                boundary: t.boundary.mul(&u.boundary),
                factors: u.factors.clone(),
            }))
        })?)
    })
}
