//! Scaled-index unification and nested-sum closure.
//!
//! `scale_up` rewrites a word sum at upper limit c*n as a combination at the
//! lifted upper limit p*n (c | p) by root-of-unity filters; `convolve_scaled`
//! and `nested_convolve` then reduce (nested) sums whose factors carry
//! different integer scales to word sums at the common upper limit L*k.
//! All color roots are principal.

use crate::alphabet::{
    poly_rescale_arg, AffineLetter, Letter, PolyCoeffs, PolyLetter, UpperLimit, WordSum,
};
use crate::closure::{convolve_affine, convolve_poly};
use crate::constants::ConstCoeff;
use crate::error::{Error, Result};
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::quasishuffle::expand_products;
use crate::scalars::Scalar;
use rug::Rational;

/// Hard cap on any root-of-unity filter order introduced here.
const MAX_FILTER_ORDER: i64 = 64;

fn check_order(p: i64) -> Result<()> {
    if p < 1 {
        return Err(Error::MalformedInput("scale must be positive".into()));
    }
    if p > MAX_FILTER_ORDER {
        return Err(Error::MalformedInput(format!(
            "root-of-unity filter order {p} exceeds the cap {MAX_FILTER_ORDER}"
        )));
    }
    Ok(())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

pub fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// H_alpha(c n) as a combination of words at upper limit p n, for c | p.
/// Colored words get the prefactor M^{wt - d}; affine and polynomial words
/// get M^{-d} with bases rescaled by a -> a/M resp. P(x) -> P(x/M).
pub fn scale_up(word: &[Letter], c: i64, p: i64) -> Result<LinComb> {
    check_order(p)?;
    if p % c != 0 {
        return Err(Error::MalformedInput(format!("{c} does not divide {p}")));
    }
    let m = p / c;
    let upper = UpperLimit::sym(p, 0)?;
    if m == 1 || word.is_empty() {
        return Ok(LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(word.to_vec(), upper)?,
        ));
    }
    let d = word.len();
    // per-letter root data
    let inv_m = Rational::from((1, m as u32));
    let mut roots = Vec::with_capacity(d);
    for l in word {
        roots.push(l.color().pow_rational(&inv_m)?);
    }
    // prefactor
    let m_scalar = Scalar::from_int(m);
    let prefactor = match word[0] {
        Letter::Colored(_) => {
            let wt = word
                .iter()
                .fold(Scalar::zero(), |acc, l| acc.add(&l.weight()));
            let e = wt.sub(&Scalar::from_int(d as i64));
            m_scalar.pow_scalar(&e)?
        }
        _ => m_scalar.pow_i64(-(d as i64))?,
    };
    let mut out = LinComb::zero();
    let mut idx = vec![0i64; d];
    loop {
        let mut letters = Vec::with_capacity(d);
        for (j, l) in word.iter().enumerate() {
            let tw = roots[j].mul(&Scalar::root_of_unity(Rational::from((idx[j], m))));
            let lifted = match l {
                Letter::Colored(cl) => Letter::colored(cl.r.clone(), tw)?,
                Letter::Affine(al) => Letter::Affine(AffineLetter::new(
                    tw,
                    al.factors
                        .iter()
                        .map(|f| (f.rho.clone(), f.a.mul_rational(&inv_m), f.b.clone()))
                        .collect(),
                )?),
                Letter::Poly(pl) => Letter::Poly(PolyLetter::new(
                    tw,
                    pl.factors
                        .iter()
                        .map(|f| (f.rho.clone(), poly_rescale_arg(&f.poly, m)))
                        .collect(),
                )?),
            };
            letters.push(lifted);
        }
        out = out.add(&LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(letters, upper.clone())?,
        ));
        // advance the multi-index
        let mut j = 0;
        loop {
            if j == d {
                return Ok(out.scale_scalar(&prefactor));
            }
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// One scaled elementary-summation step in the colored alphabet:
/// sum_{n<=k} z^n n^q H_gamma(L n) = L^{-q-1} sum_a (H_{lam_a, gamma} +
/// H_{lam_a o gamma_1, gamma'})(L k), with rho^L = z principal and
/// lam_a = (-q, rho zeta_L^a).
fn scaled_elementary(z: &Scalar, q: &Scalar, gamma: &[Letter], l_scale: i64) -> Result<LinComb> {
    check_order(l_scale)?;
    if z.is_zero() {
        return Ok(LinComb::zero());
    }
    let rho = z.pow_rational(&Rational::from((1, l_scale as u32)))?;
    let upper = UpperLimit::sym(l_scale, 0)?;
    let scale = Scalar::from_int(l_scale)
        .pow_scalar(&q.neg().sub(&Scalar::one()))?;
    let mut acc = LinComb::zero();
    for a in 0..l_scale {
        let eta = rho.mul(&Scalar::root_of_unity(Rational::from((a, l_scale))));
        let lambda = Letter::colored(q.neg(), eta)?;
        if gamma.is_empty() {
            acc = acc.add(&LinComb::single_word(
                ConstCoeff::one(),
                WordSum::new(vec![lambda], upper.clone())?,
            ));
        } else {
            let mut w1 = Vec::with_capacity(gamma.len() + 1);
            w1.push(lambda.clone());
            w1.extend(gamma.iter().cloned());
            let mut w2 = Vec::with_capacity(gamma.len());
            w2.push(lambda.merge(&gamma[0])?);
            w2.extend(gamma[1..].iter().cloned());
            acc = acc
                .add(&LinComb::single_word(
                    ConstCoeff::one(),
                    WordSum::new(w1, upper.clone())?,
                ))
                .add(&LinComb::single_word(
                    ConstCoeff::one(),
                    WordSum::new(w2, upper.clone())?,
                ));
        }
    }
    Ok(acc.scale_scalar(&scale))
}

/// One level factor of a (possibly nested) scaled sum.
#[derive(Clone, Debug, Default)]
pub struct Level {
    /// Color z^n.
    pub z: Scalar,
    /// Power n^q (basic colored mode only).
    pub q: Scalar,
    /// Outer affine powers prod (a n + b)^q (affine mode).
    pub affine_outer: Vec<(Scalar, Scalar, Scalar)>,
    /// Outer polynomial powers prod P(n)^q (polynomial mode).
    pub poly_outer: Vec<(PolyCoeffs, Scalar)>,
    /// Harmonic factors (word, upper-limit scale, exponent).
    pub factors: Vec<(Vec<Letter>, i64, u32)>,
}

impl Level {
    pub fn basic(z: Scalar, q: Scalar, factors: Vec<(Vec<Letter>, i64, u32)>) -> Self {
        Level { z, q, affine_outer: vec![], poly_outer: vec![], factors }
    }
}

fn level_mode(levels: &[Level]) -> Result<u8> {
    // 0 = colored, 1 = affine, 2 = poly
    let mut mode = 0u8;
    for lv in levels {
        if !lv.poly_outer.is_empty() {
            mode = mode.max(2);
        }
        if !lv.affine_outer.is_empty() {
            mode = mode.max(1);
        }
        for (w, p, _) in &lv.factors {
            for l in w {
                match l {
                    Letter::Poly(_) => mode = mode.max(2),
                    Letter::Affine(_) => mode = mode.max(1),
                    Letter::Colored(_) => {}
                }
            }
            if *p != 1 && mode != 0 {
                return Err(Error::ReductionFailed(
                    "scaled upper limits are only lifted in the colored alphabet".into(),
                ));
            }
        }
    }
    Ok(mode)
}

/// Global lcm of the scales of all level factors (1 if none).
pub fn global_scale(levels: &[Level]) -> i64 {
    let mut l = 1;
    for lv in levels {
        for (_, p, _) in &lv.factors {
            l = lcm(l, *p);
        }
    }
    l
}

/// Single scaled convolution:
/// sum_{n<=k} z^n n^q prod_j H_{alpha_j}(p_j n)^{e_j} in span{H_beta(L k)}.
pub fn convolve_scaled(
    z: &Scalar,
    q: &Scalar,
    factors: &[(Vec<Letter>, i64, u32)],
) -> Result<LinComb> {
    nested_convolve(&[Level::basic(z.clone(), q.clone(), factors.to_vec())])
}

/// One nesting level given as a pre-reduced E-form summand: factors may be
/// word sums at mixed integer-scaled upper limits (colored mode), or
/// affine/poly word sums at upper limit n.
#[derive(Clone, Debug)]
pub struct LevelSummand {
    pub z: Scalar,
    pub q: Scalar,
    pub affine_outer: Vec<(Scalar, Scalar, Scalar)>,
    pub poly_outer: Vec<(PolyCoeffs, Scalar)>,
    pub summand: LinComb,
}

impl LevelSummand {
    pub fn colored(z: Scalar, q: Scalar, summand: LinComb) -> Self {
        LevelSummand { z, q, affine_outer: vec![], poly_outer: vec![], summand }
    }
}

fn summand_scales(lc: &LinComb) -> Result<i64> {
    let mut l = 1;
    for w in lc.word_sums() {
        match w.upper {
            UpperLimit::Sym { a, b: 0 } => l = lcm(l, a),
            _ => {
                return Err(Error::ReductionFailed(
                    "scaled factors must have upper limits p*n".into(),
                ))
            }
        }
    }
    Ok(l)
}

/// Nested closure over pre-reduced level summands (innermost first). Colored
/// mode lifts every factor to the global lcm scale L and lands at upper L*k;
/// affine/poly modes apply the one-step rules at upper k.
pub fn nested_convolve_general(levels: &[LevelSummand]) -> Result<LinComb> {
    if levels.is_empty() {
        return Ok(LinComb::one());
    }
    let mut mode = 0u8; // 0 colored, 1 affine, 2 poly
    for lv in levels {
        if !lv.poly_outer.is_empty() {
            mode = mode.max(2);
        }
        if !lv.affine_outer.is_empty() {
            mode = mode.max(1);
        }
        for w in lv.summand.word_sums() {
            match w.alphabet() {
                Some(crate::alphabet::Alphabet::Poly) => mode = mode.max(2),
                Some(crate::alphabet::Alphabet::Affine) => mode = mode.max(1),
                _ => {}
            }
        }
        for t in lv.summand.terms() {
            if !t.boundary.extra.is_empty() {
                mode = mode.max(1);
            }
        }
    }
    if mode == 0 {
        let mut l_scale = 1;
        for lv in levels {
            l_scale = lcm(l_scale, summand_scales(&lv.summand)?);
        }
        check_order(l_scale)?;
        let mut cur = LinComb::one();
        for lv in levels {
            let lifted = lift_summand(&lv.summand, l_scale)?;
            let summand = expand_products(&lifted.mul(&cur))?;
            cur = summand.try_map_terms(|t| {
                if !t.boundary.extra.is_empty() {
                    return Err(Error::ReductionFailed(
                        "affine boundary letter in a colored nested sum".into(),
                    ));
                }
                let zz = lv.z.mul(&t.boundary.z);
                let qq = lv.q.add(&t.boundary.q);
                let gamma: &[Letter] =
                    t.factors.first().map(|w| w.word.as_slice()).unwrap_or(&[]);
                Ok(scaled_elementary(&zz, &qq, gamma, l_scale)?.scale(&t.coeff))
            })?;
        }
        return Ok(cur);
    }
    let mut cur = LinComb::one();
    for lv in levels {
        if summand_scales(&lv.summand)? != 1 {
            return Err(Error::ReductionFailed(
                "scaled upper limits are only lifted in the colored alphabet".into(),
            ));
        }
        let mut summand = lv.summand.mul(&cur);
        if !lv.q.is_zero() {
            summand = summand.try_map_terms(|t| {
                let mut t = t.clone();
                t.boundary = t.boundary.mul(&Boundary::power(Scalar::one(), lv.q.clone()));
                Ok(LinComb::from_term(t))
            })?;
        }
        cur = if mode == 2 {
            let mut outer = lv.poly_outer.clone();
            outer.extend(
                lv.affine_outer
                    .iter()
                    .map(|(a, b, q)| (vec![b.clone(), a.clone()], q.clone())),
            );
            convolve_poly(&lv.z, &outer, &summand)?
        } else {
            convolve_affine(&lv.z, &lv.affine_outer, &summand)?
        };
    }
    Ok(cur)
}

/// Lift every word of an E-form to the common scale L via scale_up.
fn lift_summand(lc: &LinComb, l_scale: i64) -> Result<LinComb> {
    lc.try_map_terms(|t| {
        let mut acc = LinComb::from_term(LcTerm {
            coeff: t.coeff.clone(),
            boundary: t.boundary.clone(),
            factors: vec![],
        });
        for w in &t.factors {
            let c = match w.upper {
                UpperLimit::Sym { a, b: 0 } => a,
                _ => return Err(Error::ReductionFailed("cannot lift this upper limit".into())),
            };
            acc = acc.mul(&scale_up(&w.word, c, l_scale)?);
        }
        Ok(acc)
    })
}

/// Nested closure: levels are given innermost first; the weak simplex
/// 1 <= n_1 <= ... <= n_r <= k is summed by the per-alphabet one-step rules.
/// The result lives at upper limit L*k in the colored mode (L the lcm of all
/// scales) and at k in the affine/polynomial modes.
pub fn nested_convolve(levels: &[Level]) -> Result<LinComb> {
    if levels.is_empty() {
        return Ok(LinComb::one());
    }
    level_mode(levels)?;
    let general: Vec<LevelSummand> = levels
        .iter()
        .map(|lv| -> Result<LevelSummand> {
            let mut summand = LinComb::one();
            for (w, p, e) in &lv.factors {
                let ws = WordSum::new(w.clone(), UpperLimit::sym(*p, 0)?)?;
                let f = LinComb::single_word(ConstCoeff::one(), ws);
                for _ in 0..*e {
                    summand = summand.mul(&f);
                }
            }
            Ok(LevelSummand {
                z: lv.z.clone(),
                q: lv.q.clone(),
                affine_outer: lv.affine_outer.clone(),
                poly_outer: lv.poly_outer.clone(),
                summand,
            })
        })
        .collect::<Result<_>>()?;
    nested_convolve_general(&general)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeval::{eval_lincomb, eval_word};
    use crate::prec::{rel_err, Prec};
    use rug::Complex;

    fn sc(n: i64, d: i64) -> Scalar {
        Scalar::from_rational(Rational::from((n, d)))
    }

    fn l(r: i64, s: i64) -> Letter {
        Letter::colored(Scalar::from_int(r), Scalar::from_int(s)).unwrap()
    }

    fn lq(r: i64, s: (i64, i64)) -> Letter {
        Letter::colored(Scalar::from_int(r), sc(s.0, s.1)).unwrap()
    }

    #[test]
    fn scale_up_identity_when_c_equals_p() {
        let w = vec![l(2, -1)];
        let out = scale_up(&w, 2, 2).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out.terms()[0].factors[0].upper,
            UpperLimit::sym(2, 0).unwrap()
        );
    }

    #[test]
    fn scale_up_halving_example() {
        // H_{(r,s)}(n) = 2^{r-1} [H_{(r,t)}(2n) + H_{(r,-t)}(2n)], t^2 = s = 1/3
        let prec = Prec::new(50);
        let w = vec![lq(2, (1, 3))];
        let out = scale_up(&w, 1, 2).unwrap();
        assert_eq!(out.len(), 2);
        for n in [1i64, 4, 10] {
            let lhs = eval_word(&w, n, prec).unwrap();
            let rhs = eval_lincomb(&out, n, prec).unwrap();
            assert!(rel_err(&lhs, &rhs) < 1e-45, "n={n}");
        }
    }

    #[test]
    fn scale_up_random_words_all_alphabets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let prec = Prec::new(50);
        let colors = [sc(1, 1), sc(-1, 1), sc(1, 2)];
        for case in 0..50 {
            let depth = rng.gen_range(1..=2);
            let c = rng.gen_range(1..=2i64);
            let p = c * rng.gen_range(1..=3i64);
            let word: Vec<Letter> = (0..depth)
                .map(|_| {
                    let r = Scalar::from_int(rng.gen_range(0..3));
                    let s = colors[rng.gen_range(0..colors.len())].clone();
                    match case % 3 {
                        0 => Letter::colored(r, s).unwrap(),
                        1 => Letter::Affine(
                            AffineLetter::new(
                                s,
                                vec![(
                                    r,
                                    Scalar::from_int(rng.gen_range(1..3)),
                                    Scalar::from_int(rng.gen_range(1..3)),
                                )],
                            )
                            .unwrap(),
                        ),
                        _ => Letter::Poly(
                            PolyLetter::new(
                                s,
                                vec![(
                                    r,
                                    vec![Scalar::from_int(rng.gen_range(1..3)), Scalar::one()],
                                )],
                            )
                            .unwrap(),
                        ),
                    }
                })
                .collect();
            let out = scale_up(&word, c, p).unwrap();
            for n in 1..=6i64 {
                let lhs = eval_word(&word, c * n, prec).unwrap();
                let rhs = eval_lincomb(&out, n, prec).unwrap();
                assert!(rel_err(&lhs, &rhs) < 1e-45, "case={case} n={n}");
            }
        }
    }

    /// brute-force oracle for a single scaled sum
    fn oracle_scaled(
        z: &Scalar,
        q: &Scalar,
        factors: &[(Vec<Letter>, i64, u32)],
        k: i64,
        prec: Prec,
    ) -> Complex {
        let mut acc = prec.zero();
        for n in 1..=k {
            let mut v = prec.cpow(&z.numeric(prec), &prec.from_i64(n));
            v *= prec.int_pow(n, &q.numeric(prec));
            for (w, p, e) in factors {
                let h = eval_word(w, p * n, prec).unwrap();
                v *= prec.ipow(&h, *e as i64);
            }
            acc += v;
        }
        acc
    }

    #[test]
    fn scaled_convolution_oracle() {
        let prec = Prec::new(50);
        // sum H_n * H^{(2)}_{3n}(1/3) at k = 5 and more
        let factors = vec![
            (vec![l(1, 1)], 1i64, 1u32),
            (vec![lq(2, (1, 3))], 3, 1),
        ];
        let out = convolve_scaled(&Scalar::one(), &Scalar::zero(), &factors).unwrap();
        for k in [2i64, 5] {
            let direct = oracle_scaled(&Scalar::one(), &Scalar::zero(), &factors, k, prec);
            let v = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&v, &direct) < 1e-45, "k={k}");
        }
        // sum z^n n^q H_{2n}^{(2)}(1) H_{3n}^{(1)}(-1) lands at upper 6k
        let factors = vec![(vec![l(2, 1)], 2i64, 1u32), (vec![l(1, -1)], 3, 1)];
        let z = sc(1, 2);
        let q = Scalar::from_int(1);
        let out = convolve_scaled(&z, &q, &factors).unwrap();
        assert!(out
            .word_sums()
            .all(|w| w.upper == UpperLimit::sym(6, 0).unwrap()));
        for k in [2i64, 4] {
            let direct = oracle_scaled(&z, &q, &factors, k, prec);
            let v = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&v, &direct) < 1e-44, "k={k}");
        }
    }

    #[test]
    fn all_scales_one_matches_convolve_finite() {
        let factors = vec![(vec![l(2, -1)], 1i64, 2u32)];
        let out = convolve_scaled(&sc(1, 2), &Scalar::from_int(-1), &factors).unwrap();
        let summand = LinComb::from_term(LcTerm {
            coeff: ConstCoeff::one(),
            boundary: Boundary::power(sc(1, 2), Scalar::from_int(-1)),
            factors: vec![
                WordSum::new(vec![l(2, -1)], UpperLimit::k()).unwrap(),
                WordSum::new(vec![l(2, -1)], UpperLimit::k()).unwrap(),
            ],
        });
        let fin = crate::closure::convolve_finite(&summand).unwrap();
        assert_eq!(out, fin);
    }

    /// brute-force nested oracle over the weak simplex
    fn oracle_nested(levels: &[Level], k: i64, prec: Prec) -> Complex {
        fn level_value(lv: &Level, n: i64, prec: Prec) -> Complex {
            let mut v = prec.cpow(&lv.z.numeric(prec), &prec.from_i64(n));
            v *= prec.int_pow(n, &lv.q.numeric(prec));
            for (a, b, q) in &lv.affine_outer {
                let base = a.mul_rational(&Rational::from(n)).add(b);
                v *= prec.cpow(&base.numeric(prec), &q.numeric(prec));
            }
            for (p, q) in &lv.poly_outer {
                let base = crate::alphabet::poly_eval(p, &Scalar::from_int(n));
                v *= prec.cpow(&base.numeric(prec), &q.numeric(prec));
            }
            for (w, p, e) in &lv.factors {
                let h = eval_word(w, p * n, prec).unwrap();
                v *= prec.ipow(&h, *e as i64);
            }
            v
        }
        fn rec(levels: &[Level], t: usize, hi: i64, prec: Prec) -> Complex {
            if t == 0 {
                return prec.one();
            }
            let mut acc = prec.zero();
            for n in 1..=hi {
                let v = level_value(&levels[t - 1], n, prec) * rec(levels, t - 1, n, prec);
                acc += v;
            }
            acc
        }
        rec(levels, levels.len(), k, prec)
    }

    #[test]
    fn nested_double_sum_oracle() {
        let prec = Prec::new(50);
        // sum_{1<=n1<=n2<=k} H_{2 n2}: inner level trivial, outer carries the factor
        let levels = vec![
            Level::basic(Scalar::one(), Scalar::zero(), vec![]),
            Level::basic(Scalar::one(), Scalar::zero(), vec![(vec![l(1, 1)], 2, 1)]),
        ];
        let out = nested_convolve(&levels).unwrap();
        for k in [2i64, 5] {
            let direct = oracle_nested(&levels, k, prec);
            let v = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&v, &direct) < 1e-45, "k={k}");
        }
    }

    #[test]
    fn nested_mixed_scales_oracle() {
        let prec = Prec::new(50);
        let levels = vec![
            Level::basic(sc(1, 2), Scalar::from_int(1), vec![(vec![l(1, 1)], 2, 1)]),
            Level::basic(Scalar::one(), Scalar::from_int(-2), vec![(vec![l(2, -1)], 3, 1)]),
        ];
        let out = nested_convolve(&levels).unwrap();
        assert!(out
            .word_sums()
            .all(|w| w.upper == UpperLimit::sym(6, 0).unwrap()));
        for k in [2i64, 3, 5] {
            let direct = oracle_nested(&levels, k, prec);
            let v = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&v, &direct) < 1e-44, "k={k}");
        }
    }

    #[test]
    fn nested_affine_two_level_oracle() {
        let prec = Prec::new(50);
        // inner: (2n+1)^{-3} 2^n, outer: (-1)^n H_n^{(2)}(i)
        let levels = vec![
            Level {
                z: Scalar::from_int(2),
                q: Scalar::zero(),
                affine_outer: vec![(
                    Scalar::from_int(2),
                    Scalar::one(),
                    Scalar::from_int(-3),
                )],
                poly_outer: vec![],
                factors: vec![],
            },
            Level {
                z: Scalar::from_int(-1),
                q: Scalar::zero(),
                affine_outer: vec![],
                poly_outer: vec![],
                factors: vec![(vec![Letter::colored(Scalar::from_int(2), Scalar::i()).unwrap()], 1, 1)],
            },
        ];
        let out = nested_convolve(&levels).unwrap();
        for k in [2i64, 5] {
            let direct = oracle_nested(&levels, k, prec);
            let v = eval_lincomb(&out, k, prec).unwrap();
            assert!(rel_err(&v, &direct) < 1e-44, "k={k}");
        }
    }

    #[test]
    fn repeated_identical_levels_match_exponent_form() {
        // supplying F as one exponent-2 factor vs two copies of the level
        let f = vec![(vec![l(2, 1)], 1i64, 2u32)];
        let a = nested_convolve(&[Level::basic(Scalar::one(), Scalar::zero(), f)]).unwrap();
        let g = vec![
            (vec![l(2, 1)], 1i64, 1u32),
            (vec![l(2, 1)], 1i64, 1u32),
        ];
        let b = nested_convolve(&[Level::basic(Scalar::one(), Scalar::zero(), g)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filter_order_cap() {
        let factors = vec![(vec![l(1, 1)], 65i64, 1u32)];
        assert!(convolve_scaled(&Scalar::one(), &Scalar::zero(), &factors).is_err());
    }
}
