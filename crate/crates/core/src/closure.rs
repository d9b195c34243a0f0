//! Finite convolution: closure of Euler-type summation over the three
//! alphabets. Inputs are summands in E-form: a `LinComb` read as a function
//! of the summation variable n (factor upper limits and boundary powers refer
//! to n); outputs are linear combinations of word sums at a symbolic upper
//! limit in k.
//!
//! Root extractions (xi with xi^a = z, letter-color roots) always take the
//! principal branch; different root choices relabel the root-of-unity filter
//! and evaluate identically.

use crate::alphabet::{
    AffineLetter, Alphabet, Letter, PolyCoeffs, PolyLetter, UpperLimit, WordSum,
};
use crate::constants::ConstCoeff;
use crate::error::{Error, Result};
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::quasishuffle::expand_products;
use crate::scalars::Scalar;
use rug::Rational;

/// Exact symbolic value of a word sum at a small concrete upper limit.
pub fn exact_word_value(word: &[Letter], upper: i64) -> Result<Scalar> {
    if upper < 0 {
        return Ok(Scalar::zero());
    }
    fn letter_value(l: &Letter, n: i64) -> Result<Scalar> {
        let nn = Scalar::from_int(n);
        match l {
            Letter::Colored(c) => {
                let sn = c.s.pow_i64(n)?;
                Ok(sn.mul(&nn.pow_scalar(&c.r.neg())?))
            }
            Letter::Affine(a) => {
                let mut v = a.sigma.pow_i64(n)?;
                for f in &a.factors {
                    let base = f.a.mul(&nn).add(&f.b);
                    if base.is_zero() {
                        return Err(Error::SingularLetter(n));
                    }
                    v = v.mul(&base.pow_scalar(&f.rho.neg())?);
                }
                Ok(v)
            }
            Letter::Poly(p) => {
                let mut v = p.sigma.pow_i64(n)?;
                for f in &p.factors {
                    let base = crate::alphabet::poly_eval(&f.poly, &nn);
                    if base.is_zero() {
                        return Err(Error::PolynomialVanishes(n));
                    }
                    v = v.mul(&base.pow_scalar(&f.rho.neg())?);
                }
                Ok(v)
            }
        }
    }
    // prefix recursion with exact scalars
    let n = upper as usize;
    let mut inner: Vec<Scalar> = vec![Scalar::one(); n + 1];
    for letter in word.iter().rev() {
        let mut cur = Vec::with_capacity(n + 1);
        cur.push(Scalar::zero());
        let mut acc = Scalar::zero();
        for j in 1..=n {
            acc = acc.add(&letter_value(letter, j as i64)?.mul(&inner[j - 1]));
            cur.push(acc.clone());
        }
        inner = cur;
    }
    Ok(inner[n].clone())
}

/// sum_{M=1}^{U} eta^M M^q H_gamma(M + shift) for shift in {0, -1}, by the
/// elementary summation step. shift = 0 splits the boundary index, shift = -1
/// prepends the new letter with no merge.
fn filtered_elementary(
    eta: &Scalar,
    q: &Scalar,
    gamma: &[Letter],
    upper: UpperLimit,
    shift: i64,
) -> Result<LinComb> {
    debug_assert!(shift == 0 || shift == -1);
    if eta.is_zero() {
        return Ok(LinComb::zero());
    }
    let lambda = Letter::colored(q.neg(), eta.clone())?;
    if gamma.is_empty() {
        return Ok(LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(vec![lambda], upper)?,
        ));
    }
    let mut word = Vec::with_capacity(gamma.len() + 1);
    word.push(lambda.clone());
    word.extend(gamma.iter().cloned());
    let mut out = LinComb::single_word(ConstCoeff::one(), WordSum::new(word, upper.clone())?);
    if shift == 0 {
        let mut merged = Vec::with_capacity(gamma.len());
        merged.push(lambda.merge(&gamma[0])?);
        merged.extend(gamma[1..].iter().cloned());
        out = out.add(&LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(merged, upper)?,
        ));
    }
    Ok(out)
}

/// Elementary summation: sum_{n=1}^{k} z^n n^q H_alpha(n) as a LinComb at the
/// given upper limit (normally k itself).
pub fn sum_elementary(
    z: &Scalar,
    q: &Scalar,
    alpha: &[Letter],
    upper: UpperLimit,
) -> Result<LinComb> {
    filtered_elementary(z, q, alpha, upper, 0)
}

fn require_colored(ws: &WordSum) -> Result<()> {
    match ws.alphabet() {
        None | Some(Alphabet::Colored) => Ok(()),
        _ => Err(Error::ReductionFailed("non-colored word in a colored convolution".into())),
    }
}

fn require_upper_n(ws: &WordSum) -> Result<()> {
    if ws.upper == UpperLimit::k() {
        Ok(())
    } else {
        Err(Error::ReductionFailed(format!(
            "factor carries upper limit {}, expected n",
            crate::sumdsl::print_upper(&ws.upper)
        )))
    }
}

/// Closure under finite Euler-type summation: the summand is a colored E-form
/// (factors at upper n), and the result lies in the span of H_beta(k).
pub fn convolve_finite(summand: &LinComb) -> Result<LinComb> {
    let expanded = expand_products(summand)?;
    expanded.try_map_terms(|t| {
        if !t.boundary.extra.is_empty() {
            return Err(Error::ReductionFailed(
                "affine or polynomial boundary letter in a colored convolution".into(),
            ));
        }
        debug_assert!(t.factors.len() <= 1);
        let gamma: &[Letter] = t.factors.first().map(|w| w.word.as_slice()).unwrap_or(&[]);
        if let Some(w) = t.factors.first() {
            require_colored(w)?;
            require_upper_n(w)?;
        }
        Ok(sum_elementary(&t.boundary.z, &t.boundary.q, gamma, UpperLimit::k())?
            .scale(&t.coeff))
    })
}

/// Lower-limit correction: the exact value of
/// sum over M in the residue class {M = b mod a, 1 <= M <= stop} of
/// xi^M M^q H_gamma(M + shift), folded into the coefficient ring.
fn lower_corrections(
    xi: &Scalar,
    q: &Scalar,
    gamma: &[Letter],
    a: i64,
    b: i64,
    stop: i64,
    shift: i64,
) -> Result<Scalar> {
    let mut acc = Scalar::zero();
    if stop < 1 {
        return Ok(acc);
    }
    let mut m = b.rem_euclid(a);
    if m == 0 {
        m = a;
    }
    while m <= stop {
        let h = exact_word_value(gamma, m + shift)?;
        if !h.is_zero() {
            let v = xi
                .pow_i64(m)?
                .mul(&Scalar::from_int(m).pow_scalar(q)?)
                .mul(&h);
            acc = acc.add(&v);
        }
        m += a;
    }
    Ok(acc)
}

/// Closure in the aligned affine case:
/// sum_{n=1}^{k} z^n (a n + b)^q prod_j H_{alpha_j}(a n + b)^{e_j}
/// lands in span{H_beta(a k + b)}. The a-th root of z is principal.
pub fn convolve_aligned_affine(
    a: i64,
    b: i64,
    z: &Scalar,
    q: &Scalar,
    words: &[(Vec<Letter>, u32)],
) -> Result<LinComb> {
    if a < 1 || a + b < 1 {
        return Err(Error::MalformedInput("need a >= 1 and a + b >= 1".into()));
    }
    if z.is_zero() {
        return Ok(LinComb::zero());
    }
    // expand the product of harmonic factors at the common (affine) upper limit
    let mut factors = Vec::new();
    for (w, e) in words {
        for _ in 0..*e {
            factors.push(WordSum::new(w.clone(), UpperLimit::k())?);
        }
    }
    let expanded = crate::quasishuffle::product_to_lincomb(&factors)?;
    let xi = z.pow_rational(&Rational::from((1, a as u32)))?;
    let out_upper = UpperLimit::sym(a, b)?;
    let inv_a = Rational::from((1, a as u32));
    expanded.try_map_terms(|t| {
        let gamma: &[Letter] = t.factors.first().map(|w| w.word.as_slice()).unwrap_or(&[]);
        if let Some(w) = t.factors.first() {
            require_colored(w)?;
        }
        let mut acc = LinComb::zero();
        for l in 0..a {
            // weight (1/a) * omega_a^{-l b}
            let omega_lb = Scalar::root_of_unity(Rational::from((-l * b, a)));
            let eta = xi.mul(&Scalar::root_of_unity(Rational::from((l, a))));
            let piece = filtered_elementary(&eta, q, gamma, out_upper.clone(), 0)?;
            acc = acc.add(&piece.scale_scalar(&omega_lb.mul_rational(&inv_a)));
        }
        // members of the progression below the start n = 1
        let corr = lower_corrections(&xi, q, gamma, a, b, a + b - 1, 0)?;
        acc = acc.add(&LinComb::constant(ConstCoeff::from_scalar(corr)).neg());
        // global prefactor xi^{-b}
        let xib = xi.pow_i64(-b)?;
        Ok(acc.scale_scalar(&xib).scale(&t.coeff))
    })
}

/// Aligned-affine convolution of a pre-reduced summand: terms carry colored
/// words at upper limit a*n+b and boundary colors z'^n (no boundary power).
/// Computes sum_{n=1}^{k} (z z')^n (an+b)^q * prod factors.
pub fn convolve_aligned_summand(
    a: i64,
    b: i64,
    z: &Scalar,
    q: &Scalar,
    summand: &LinComb,
) -> Result<LinComb> {
    if a < 1 || a + b < 1 {
        return Err(Error::MalformedInput("need a >= 1 and a + b >= 1".into()));
    }
    let expanded = expand_products(summand)?;
    let aligned_upper = UpperLimit::sym(a, b)?;
    expanded.try_map_terms(|t| {
        if !t.boundary.q.is_zero() || !t.boundary.extra.is_empty() {
            return Err(Error::ReductionFailed(
                "aligned-affine route cannot absorb this boundary".into(),
            ));
        }
        let zz = z.mul(&t.boundary.z);
        if zz.is_zero() {
            return Ok(LinComb::zero());
        }
        let gamma: Vec<Letter> = match t.factors.first() {
            None => vec![],
            Some(w) => {
                require_colored(w)?;
                if w.upper != aligned_upper {
                    return Err(Error::ReductionFailed(
                        "aligned-affine factors must share the aligned upper limit".into(),
                    ));
                }
                w.word.clone()
            }
        };
        let out = convolve_aligned_affine(a, b, &zz, q, &[(gamma, 1)])?;
        Ok(out.scale(&t.coeff))
    })
}

/// The four arithmetic-progression shift patterns of the outer power versus
/// the harmonic upper limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApShift {
    /// sum z^n (cn+1)^q prod H(cn) -> H_{ck+1}; q complex.
    PowerCnPlus1HarmonicCn,
    /// sum_{n=nu_c} z^n (cn)^q prod H(cn-1) -> H_{ck}; q complex.
    PowerCnHarmonicCnMinus1,
    /// sum z^n (cn)^q prod H(cn+1) -> H_{ck} + H_{ck+1}; q and letter powers integers.
    PowerCnHarmonicCnPlus1,
    /// sum_{n=nu_c} z^n (cn-1)^q prod H(cn) -> H_{ck-1} + H_{ck}; integer case.
    PowerCnMinus1HarmonicCn,
}

fn integer_of(s: &Scalar) -> Option<i64> {
    s.as_rational().and_then(|q| {
        if q.denom() == &1 {
            q.numer().to_i64()
        } else {
            None
        }
    })
}

/// Arithmetic-progression lower and upper shifts.
pub fn convolve_ap_shift(
    c: i64,
    variant: ApShift,
    z: &Scalar,
    q: &Scalar,
    words: &[(Vec<Letter>, u32)],
) -> Result<LinComb> {
    if c < 1 {
        return Err(Error::MalformedInput("need c >= 1".into()));
    }
    if z.is_zero() {
        return Ok(LinComb::zero());
    }
    let nu_c = if c == 1 { 2 } else { 1 };
    let mut factors = Vec::new();
    for (w, e) in words {
        for _ in 0..*e {
            factors.push(WordSum::new(w.clone(), UpperLimit::k())?);
        }
    }
    let expanded = crate::quasishuffle::product_to_lincomb(&factors)?;
    let xi = z.pow_rational(&Rational::from((1, c as u32)))?;

    match variant {
        ApShift::PowerCnPlus1HarmonicCn => {
            // M = cn + 1 = 1 (mod c), M <= ck+1, summand xi^{-1} xi^M M^q H(M-1)
            expanded.try_map_terms(|t| {
                let gamma: &[Letter] =
                    t.factors.first().map(|w| w.word.as_slice()).unwrap_or(&[]);
                residue_filtered_sum(&xi, q, gamma, c, 1, UpperLimit::sym(c, 1)?, -1, c + 1 - 1)
                    .map(|lc| lc.scale_scalar(&xi.pow_i64(-1).unwrap()).scale(&t.coeff))
            })
        }
        ApShift::PowerCnHarmonicCnMinus1 => {
            // M = cn = 0 (mod c), M <= ck, start at n = nu_c
            expanded.try_map_terms(|t| {
                let gamma: &[Letter] =
                    t.factors.first().map(|w| w.word.as_slice()).unwrap_or(&[]);
                residue_filtered_sum(
                    &xi,
                    q,
                    gamma,
                    c,
                    0,
                    UpperLimit::sym(c, 0)?,
                    -1,
                    c * nu_c - 1,
                )
                .map(|lc| lc.scale(&t.coeff))
            })
        }
        ApShift::PowerCnHarmonicCnPlus1 | ApShift::PowerCnMinus1HarmonicCn => {
            let qi = integer_of(q)
                .ok_or_else(|| Error::NonIntegerWeight(format!("outer power {q}")))?;
            expanded.try_map_terms(|t| {
                upper_shift_term(c, variant, &xi, qi, t, nu_c)
            })
        }
    }
}

/// sum over {M = r (mod c), 1 <= M <= U(k)} of xi^M M^q H_gamma(M + shift),
/// minus the members below `low_stop` (exclusive of the progression start).
fn residue_filtered_sum(
    xi: &Scalar,
    q: &Scalar,
    gamma: &[Letter],
    c: i64,
    r: i64,
    upper: UpperLimit,
    shift: i64,
    low_stop: i64,
) -> Result<LinComb> {
    let inv_c = Rational::from((1, c as u32));
    let mut acc = LinComb::zero();
    for l in 0..c {
        let w_lr = Scalar::root_of_unity(Rational::from((-l * r, c)));
        let eta = xi.mul(&Scalar::root_of_unity(Rational::from((l, c))));
        let piece = filtered_elementary(&eta, q, gamma, upper.clone(), shift)?;
        acc = acc.add(&piece.scale_scalar(&w_lr.mul_rational(&inv_c)));
    }
    let corr = lower_corrections(xi, q, gamma, c, r, low_stop, shift)?;
    acc = acc.add(&LinComb::constant(ConstCoeff::from_scalar(corr)).neg());
    Ok(acc)
}

/// One term of an upper-shift sum: apply the one-step-up relation to every
/// factor, expand, partial-fraction the rational part into powers of M and
/// M+1, and push each piece through the residue filter.
fn upper_shift_term(
    c: i64,
    variant: ApShift,
    xi: &Scalar,
    q: i64,
    t: &LcTerm,
    nu_c: i64,
) -> Result<LinComb> {
    // The expanded product gave a single word at upper limit "M+1" (variant 3)
    // or "M+1" with power at M (variant 4). One-step-up on the word:
    // H_{(a1,w')}(M+1) = H_{(a1,w')}(M) + a1(M+1) H_{w'}(M).
    // Pieces: (word-at-M, extra color s1, extra power of (M+1): -r1, rest both empty).
    struct Piece {
        word: Vec<Letter>,
        color: Scalar,   // extra eta multiplier s1^{M+1} contributes s1 * s1^M
        mp1_pow: i64,    // exponent of (M+1)
        scale: Scalar,   // constant scale (s1 from s1^{M+1})
    }
    let word: Vec<Letter> = t.factors.first().map(|w| w.word.clone()).unwrap_or_default();
    for l in &word {
        if let Letter::Colored(cl) = l {
            if integer_of(&cl.r).is_none() {
                return Err(Error::NonIntegerWeight(format!("letter power {}", cl.r)));
            }
        }
    }
    let pieces: Vec<Piece> = if word.is_empty() {
        vec![Piece { word: vec![], color: Scalar::one(), mp1_pow: 0, scale: Scalar::one() }]
    } else {
        let Letter::Colored(first) = &word[0] else {
            return Err(Error::ReductionFailed("upper shift needs colored words".into()));
        };
        let r1 = integer_of(&first.r).unwrap();
        vec![
            Piece { word: word.clone(), color: Scalar::one(), mp1_pow: 0, scale: Scalar::one() },
            Piece {
                word: word[1..].to_vec(),
                color: first.s.clone(),
                mp1_pow: -r1,
                scale: first.s.clone(),
            },
        ]
    };
    let mut acc = LinComb::zero();
    for p in &pieces {
        // rational part M^A (M+1)^B with A от the outer power, B from the step
        let (a_pow, b_pow) = match variant {
            ApShift::PowerCnHarmonicCnPlus1 => (q, p.mp1_pow),
            ApShift::PowerCnMinus1HarmonicCn => (q, p.mp1_pow),
            _ => unreachable!(),
        };
        let eta = xi.mul(&p.color);
        for (on_mp1, e, coeff) in expand_m_mp1(a_pow, b_pow) {
            let qq = Scalar::from_int(e);
            let (res, upper, shift, low_stop) = match (variant, on_mp1) {
                // variant 3: M = cn, word at M; L = M+1 = 1 (mod c) at H(L-1)
                (ApShift::PowerCnHarmonicCnPlus1, false) => {
                    (0, UpperLimit::sym(c, 0)?, 0, c - 1)
                }
                (ApShift::PowerCnHarmonicCnPlus1, true) => {
                    (1, UpperLimit::sym(c, 1)?, -1, c + 1 - 1)
                }
                // variant 4: M = cn - 1, start nu_c; L = M+1 = 0 (mod c)
                (ApShift::PowerCnMinus1HarmonicCn, false) => {
                    (c - 1, UpperLimit::sym(c, -1)?, 0, c * nu_c - 1 - 1)
                }
                (ApShift::PowerCnMinus1HarmonicCn, true) => {
                    (0, UpperLimit::sym(c, 0)?, -1, c * nu_c - 1)
                }
                _ => unreachable!(),
            };
            // on the M+1 lattice the color becomes eta^{L-1} = eta^{-1} eta^L
            let (eta_l, extra_scale) = if on_mp1 {
                (eta.clone(), eta.inverse()?)
            } else {
                (eta.clone(), Scalar::one())
            };
            let piece = residue_filtered_sum(&eta_l, &qq, &p.word, c, res, upper, shift, low_stop)?
                .scale_scalar(&extra_scale.mul_rational(&coeff));
            acc = acc.add(&piece.scale_scalar(&p.scale));
        }
    }
    // for M = cn - 1 the color is z^n = xi^{M+1}, a global extra xi
    if variant == ApShift::PowerCnMinus1HarmonicCn {
        acc = acc.scale_scalar(xi);
    }
    Ok(acc.scale(&t.coeff))
}

/// Expand M^A (M+1)^B (A, B integers) into sum of coeff * M^e or coeff * (M+1)^e.
/// Returns (base is M+1, exponent, rational coefficient).
fn expand_m_mp1(a: i64, b: i64) -> Vec<(bool, i64, Rational)> {
    fn binom(n: i64, k: i64) -> Rational {
        let mut r = Rational::from(1);
        for i in 0..k {
            r *= Rational::from((n - i, i + 1));
        }
        r
    }
    if b == 0 {
        return vec![(false, a, Rational::from(1))];
    }
    if a == 0 {
        return vec![(true, b, Rational::from(1))];
    }
    if a > 0 && b > 0 {
        // expand (M+1)^B into powers of M
        let mut out = Vec::new();
        for i in 0..=b {
            out.push((false, a + i, binom(b, b - i)));
        }
        return out;
    }
    if a > 0 && b < 0 {
        // M^A = ((M+1) - 1)^A in powers of (M+1)
        let mut out = Vec::new();
        for i in 0..=a {
            let sign = if (a - i) % 2 == 0 { 1 } else { -1 };
            out.push((true, b + i, binom(a, i) * Rational::from(sign)));
        }
        return out;
    }
    if a < 0 && b > 0 {
        let mut out = Vec::new();
        for i in 0..=b {
            out.push((false, a + i, binom(b, i)));
        }
        return out;
    }
    // a < 0, b < 0: recursive partial fractions
    // M^{-p}(M+1)^{-q} = M^{-p}(M+1)^{-(q-1)} - M^{-(p-1)}(M+1)^{-q}
    fn rec(p: i64, q: i64, scale: &Rational, out: &mut Vec<(bool, i64, Rational)>) {
        if p == 0 {
            out.push((true, -q, scale.clone()));
            return;
        }
        if q == 0 {
            out.push((false, -p, scale.clone()));
            return;
        }
        rec(p, q - 1, scale, out);
        rec(p - 1, q, &(-scale.clone()), out);
    }
    let mut out = Vec::new();
    rec(-a, -b, &Rational::from(1), &mut out);
    // combine like terms
    out.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut combined: Vec<(bool, i64, Rational)> = Vec::new();
    for (t, e, c) in out {
        match combined.last_mut() {
            Some((lt, le, lc)) if *lt == t && *le == e => *lc += c,
            _ => combined.push((t, e, c)),
        }
    }
    combined.retain(|(_, _, c)| *c != 0);
    combined
}

// ---------- affine and polynomial convolution ----------

/// Closure for affine-harmonic-sum reducible summands:
/// sum_{n=1}^{k} z^n prod (a_v n + b_v)^{q_v} * summand(n) in G_k.
/// `summand` is an affine E-form LinComb (factors at upper n; boundary data
/// is absorbed into the leading affine letter).
pub fn convolve_affine(
    z: &Scalar,
    outer: &[(Scalar, Scalar, Scalar)], // (a, b, q)
    summand: &LinComb,
) -> Result<LinComb> {
    if z.is_zero() {
        return Ok(LinComb::zero());
    }
    let expanded = expand_products(summand)?;
    expanded.try_map_terms(|t| {
        // leading affine letter: outer factors + boundary power + extras
        let mut fs: Vec<(Scalar, Scalar, Scalar)> = outer
            .iter()
            .map(|(a, b, q)| (q.neg(), a.clone(), b.clone()))
            .collect();
        if !t.boundary.q.is_zero() {
            fs.push((t.boundary.q.neg(), Scalar::one(), Scalar::zero()));
        }
        let mut color = z.mul(&t.boundary.z);
        for l in &t.boundary.extra {
            match l {
                Letter::Affine(al) => {
                    color = color.mul(&al.sigma);
                    for f in &al.factors {
                        fs.push((f.rho.clone(), f.a.clone(), f.b.clone()));
                    }
                }
                _ => {
                    return Err(Error::ReductionFailed(
                        "polynomial boundary letter in an affine convolution".into(),
                    ))
                }
            }
        }
        let lead = AffineLetter::new(color, fs)?;
        let word = match t.factors.first() {
            None => vec![],
            Some(w) => {
                require_upper_n(w)?;
                w.embed(Alphabet::Affine)?.word
            }
        };
        one_step(Letter::Affine(lead), &word).map(|lc| lc.scale(&t.coeff))
    })
}

/// Polynomial analogue of `convolve_affine`.
pub fn convolve_poly(
    z: &Scalar,
    outer: &[(PolyCoeffs, Scalar)], // (P, q)
    summand: &LinComb,
) -> Result<LinComb> {
    if z.is_zero() {
        return Ok(LinComb::zero());
    }
    let expanded = expand_products(summand)?;
    expanded.try_map_terms(|t| {
        let mut fs: Vec<(Scalar, PolyCoeffs)> = outer
            .iter()
            .map(|(p, q)| (q.neg(), p.clone()))
            .collect();
        if !t.boundary.q.is_zero() {
            fs.push((t.boundary.q.neg(), vec![Scalar::zero(), Scalar::one()]));
        }
        let mut color = z.mul(&t.boundary.z);
        for l in &t.boundary.extra {
            match l {
                Letter::Affine(al) => {
                    color = color.mul(&al.sigma);
                    for f in &al.factors {
                        fs.push((f.rho.clone(), vec![f.b.clone(), f.a.clone()]));
                    }
                }
                Letter::Poly(pl) => {
                    color = color.mul(&pl.sigma);
                    for f in &pl.factors {
                        fs.push((f.rho.clone(), f.poly.clone()));
                    }
                }
                Letter::Colored(_) => unreachable!("colored extras fold into (z, q)"),
            }
        }
        let lead = PolyLetter::new(color, fs)?;
        let word = match t.factors.first() {
            None => vec![],
            Some(w) => {
                require_upper_n(w)?;
                w.embed(Alphabet::Poly)?.word
            }
        };
        one_step(Letter::Poly(lead), &word).map(|lc| lc.scale(&t.coeff))
    })
}

/// One-step summation rule shared by the affine and polynomial alphabets:
/// sum_{n<=k} A(n) G_{B1,rest}(n) = G_{A,B1,rest}(k) + G_{A o B1,rest}(k).
fn one_step(lead: Letter, word: &[Letter]) -> Result<LinComb> {
    let upper = UpperLimit::k();
    if word.is_empty() {
        return Ok(LinComb::single_word(
            ConstCoeff::one(),
            WordSum::new(vec![lead], upper)?,
        ));
    }
    let mut w1 = Vec::with_capacity(word.len() + 1);
    w1.push(lead.clone());
    w1.extend(word.iter().cloned());
    let mut w2 = Vec::with_capacity(word.len());
    w2.push(lead.merge(&word[0])?);
    w2.extend(word[1..].iter().cloned());
    Ok(LinComb::single_word(ConstCoeff::one(), WordSum::new(w1, upper.clone())?)
        .add(&LinComb::single_word(ConstCoeff::one(), WordSum::new(w2, upper)?)))
}
