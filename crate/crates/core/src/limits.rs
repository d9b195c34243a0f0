//! Infinite-sum passage: convergence classification, termwise limits,
//! divergence peeling, and the depth-zero shifted-denominator cancellation.

use crate::alphabet::{Letter, WordSum};
use crate::constants::{ConstCoeff, ConstSym};
use crate::error::{Error, Result};
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::prec::Prec;
use crate::quasishuffle::{expand_products, stuffle};
use crate::scalars::Scalar;
use rug::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    AbsolutelyConvergent,
    Convergent,
    NotEstablished,
}

/// Verdict plus the per-prefix witness data the criteria are computed from.
/// The criteria are sufficient only, so "not established" never claims
/// divergence.
#[derive(Clone, Debug)]
pub struct ConvergenceVerdict {
    pub status: Convergence,
    /// (|Lambda_k| band, Lambda_k == 1, effective weight Re sum) per prefix.
    pub witness: Vec<(ModBand, bool, f64)>,
    pub leading_modulus: f64,
    pub leading_effective_weight: f64,
    /// Polynomial decay exponent of the outer truncation tail when the
    /// leading color has modulus one: w1 - 1 minus the inner growth degree.
    pub tail_exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModBand {
    Below1,
    Exactly1,
    Above1,
}

fn modulus_band(x: &Scalar, prec: Prec) -> ModBand {
    let a2 = x.abs_squared();
    if let Some(q) = a2.as_rational() {
        return match q.cmp(&Rational::from(1)) {
            std::cmp::Ordering::Less => ModBand::Below1,
            std::cmp::Ordering::Equal => ModBand::Exactly1,
            std::cmp::Ordering::Greater => ModBand::Above1,
        };
    }
    let v = a2.numeric(prec).real().to_f64();
    if (v - 1.0).abs() < 1e-30 {
        ModBand::Exactly1
    } else if v < 1.0 {
        ModBand::Below1
    } else {
        ModBand::Above1
    }
}

fn is_one(x: &Scalar, prec: Prec) -> bool {
    if x.is_exact() {
        x.is_one()
    } else {
        x.approx_eq(&Scalar::one(), prec)
    }
}

/// Effective weight of a letter: Re(r) for colored letters, and the
/// degree-weighted exponent sum for affine and polynomial letters.
fn effective_weight(l: &Letter, prec: Prec) -> f64 {
    let w = match l {
        Letter::Colored(c) => c.r.clone(),
        Letter::Affine(a) => a
            .factors
            .iter()
            .fold(Scalar::zero(), |acc, f| acc.add(&f.rho)),
        Letter::Poly(p) => p.factors.iter().fold(Scalar::zero(), |acc, f| {
            let deg = (f.poly.len() - 1) as i64;
            acc.add(&f.rho.mul_rational(&Rational::from(deg)))
        }),
    };
    if let Some(q) = w.rational_re() {
        q.to_f64()
    } else {
        w.numeric(prec).real().to_f64()
    }
}

pub fn classify_convergence_letters(letters: &[Letter], prec: Prec) -> ConvergenceVerdict {
    let mut lambda = Scalar::one();
    let mut wsum = 0.0f64;
    let mut unit_count = 0usize; // Lambda_l == 1
    let mut mod1_count = 0usize; // |Lambda_l| == 1
    let mut witness = Vec::with_capacity(letters.len());
    let mut conv = true;
    let mut abs_conv = true;
    let mut leading_modulus = 1.0f64;
    let mut leading_w = 0.0f64;
    let mut inner_growth = 0.0f64;
    for (i, l) in letters.iter().enumerate() {
        lambda = lambda.mul(l.color());
        wsum += effective_weight(l, prec);
        let band = modulus_band(&lambda, prec);
        let unit = band == ModBand::Exactly1 && is_one(&lambda, prec);
        if unit {
            unit_count += 1;
        }
        if band == ModBand::Exactly1 {
            mod1_count += 1;
        }
        let w_here = effective_weight(l, prec);
        if i == 0 {
            leading_modulus = lambda.abs_squared().numeric(prec).real().to_f64().sqrt();
            leading_w = w_here;
        } else if w_here < 1.0 {
            inner_growth += 1.0 - w_here;
        }
        match band {
            ModBand::Above1 => {
                conv = false;
                abs_conv = false;
            }
            ModBand::Exactly1 => {
                if wsum <= unit_count as f64 + 1e-30 {
                    conv = false;
                }
                if wsum <= mod1_count as f64 + 1e-30 {
                    abs_conv = false;
                }
            }
            ModBand::Below1 => {}
        }
        witness.push((band, unit, wsum));
    }
    let status = if abs_conv && conv {
        Convergence::AbsolutelyConvergent
    } else if conv {
        Convergence::Convergent
    } else {
        Convergence::NotEstablished
    };
    ConvergenceVerdict {
        status,
        witness,
        leading_modulus,
        leading_effective_weight: leading_w,
        tail_exponent: leading_w - 1.0 - inner_growth,
    }
}

/// Classify a word sum read at upper limit -> infinity.
pub fn classify_convergence(ws: &WordSum, prec: Prec) -> ConvergenceVerdict {
    classify_convergence_letters(&ws.word, prec)
}

// ---------- termwise limits ----------

fn word_limit_symbol(ws: &WordSum, prec: Prec) -> Result<ConstSym> {
    let verdict = classify_convergence(ws, prec);
    if verdict.status == Convergence::NotEstablished {
        return Err(Error::DivergentTerm(describe_word(ws)));
    }
    match ws.alphabet() {
        None => unreachable!("empty words evaluate to 1 and never reach here"),
        Some(crate::alphabet::Alphabet::Colored) => {
            let mut rs = Vec::new();
            let mut zs = Vec::new();
            let mut all_one = true;
            for l in &ws.word {
                if let Letter::Colored(c) = l {
                    rs.push(c.r.clone());
                    zs.push(c.s.clone());
                    all_one &= c.s.is_one();
                }
            }
            Ok(if all_one { ConstSym::Zeta(rs) } else { ConstSym::Li(rs, zs) })
        }
        Some(crate::alphabet::Alphabet::Affine) => {
            let w = ws
                .word
                .iter()
                .map(|l| match l {
                    Letter::Affine(a) => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
            Ok(ConstSym::LiAff(w))
        }
        Some(crate::alphabet::Alphabet::Poly) => {
            let w = ws
                .word
                .iter()
                .map(|l| match l {
                    Letter::Poly(p) => p.clone(),
                    _ => unreachable!(),
                })
                .collect();
            Ok(ConstSym::LiPb(w))
        }
    }
}

fn describe_word(ws: &WordSum) -> String {
    crate::sumdsl::print_word_sum(ws)
}

enum BoundaryLimit {
    Zero,
    One,
}

fn boundary_limit(b: &Boundary, prec: Prec) -> Result<BoundaryLimit> {
    let mut zero = false;
    match modulus_band(&b.z, prec) {
        ModBand::Below1 => zero = true,
        ModBand::Above1 => return Err(Error::BoundaryDiverges(format!("{}^k", b.z))),
        ModBand::Exactly1 => {
            if !is_one(&b.z, prec) {
                return Err(Error::BoundaryDiverges(format!("{}^k oscillates", b.z)));
            }
        }
    }
    let qre = b
        .q
        .rational_re()
        .map(|q| q.to_f64())
        .unwrap_or_else(|| b.q.numeric(prec).real().to_f64());
    if qre < -1e-30 {
        zero = true;
    } else if qre > 1e-30 || (!b.q.is_zero() && qre.abs() <= 1e-30) {
        if !zero {
            return Err(Error::BoundaryDiverges(format!("k^({})", b.q)));
        }
    }
    for l in &b.extra {
        match modulus_band(l.color(), prec) {
            ModBand::Below1 => zero = true,
            ModBand::Above1 => return Err(Error::BoundaryDiverges("boundary letter".into())),
            ModBand::Exactly1 => {
                if !is_one(l.color(), prec) {
                    return Err(Error::BoundaryDiverges("oscillating boundary letter".into()));
                }
                let w = effective_weight(l, prec);
                if w > 1e-30 {
                    zero = true;
                } else if w < -1e-30 && !zero {
                    return Err(Error::BoundaryDiverges("growing boundary letter".into()));
                }
            }
        }
    }
    Ok(if zero { BoundaryLimit::Zero } else { BoundaryLimit::One })
}

/// Termwise limit of a finite reduction: every word sum is replaced by its
/// constant symbol; boundary factors must tend to 0 or 1.
pub fn take_limit(lc: &LinComb, prec: Prec) -> Result<ConstCoeff> {
    let mut acc = ConstCoeff::zero();
    for t in lc.terms() {
        match boundary_limit(&t.boundary, prec)? {
            BoundaryLimit::Zero => continue,
            BoundaryLimit::One => {}
        }
        let mut v = t.coeff.clone();
        for ws in &t.factors {
            v = v.mul(&ConstCoeff::symbol(word_limit_symbol(ws, prec)?));
        }
        acc = acc.add(&v);
    }
    Ok(acc)
}

// ---------- divergence peeling ----------

/// The exact finite identity H_{a beta} = H_a H_beta - sum_{w in a*beta, w != a beta} m_w H_w,
/// peeling the first letter off the word. Depth <= 1 words pass through.
pub fn peel_first_letter(ws: &WordSum) -> Result<LinComb> {
    if ws.depth() <= 1 {
        return Ok(LinComb::single_word(ConstCoeff::one(), ws.clone()));
    }
    let a = &ws.word[0..1];
    let beta = &ws.word[1..];
    let head = WordSum::new(a.to_vec(), ws.upper.clone())?;
    let tail = WordSum::new(beta.to_vec(), ws.upper.clone())?;
    let mut out = LinComb::from_term(LcTerm {
        coeff: ConstCoeff::one(),
        boundary: Boundary::trivial(),
        factors: vec![head, tail],
    });
    for (w, m) in stuffle(a, beta)? {
        if w == ws.word {
            continue;
        }
        out = out.add(
            &LinComb::single_word(
                ConstCoeff::from_scalar(Scalar::from_int(m as i64)),
                WordSum::new(w, ws.upper.clone())?,
            )
            .neg(),
        );
    }
    Ok(out)
}

fn is_divergent_word(ws: &WordSum, prec: Prec) -> bool {
    !ws.word.is_empty()
        && classify_convergence(ws, prec).status == Convergence::NotEstablished
}

/// Polynomial growth degree bound for a colored word whose colors have
/// modulus <= 1 (log factors are not counted). None when a color modulus
/// exceeds 1.
fn growth_degree(ws: &WordSum, prec: Prec) -> Option<f64> {
    let mut deg = 0.0f64;
    for l in &ws.word {
        match modulus_band(l.color(), prec) {
            ModBand::Above1 => return None,
            _ => {
                let w = effective_weight(l, prec);
                if w < 1.0 {
                    deg += 1.0 - w;
                }
            }
        }
    }
    Some(deg)
}

/// Decay exponent of H_w(N) - L(w) for a convergent word: geometric decay is
/// reported as infinity, a unit leading product decays like N^{1-w1}.
fn decay_exponent(ws: &WordSum, prec: Prec) -> f64 {
    let Some(first) = ws.word.first() else { return f64::INFINITY };
    match modulus_band(first.color(), prec) {
        ModBand::Below1 => f64::INFINITY,
        _ => effective_weight(first, prec) - 1.0,
    }
}

/// Map a constant symbol back to the word sum it is the limit of.
fn symbol_word(sym: &ConstSym, upper: &crate::alphabet::UpperLimit) -> Option<WordSum> {
    match sym {
        ConstSym::Zeta(rs) => {
            let letters = rs
                .iter()
                .map(|r| Letter::colored(r.clone(), Scalar::one()).ok())
                .collect::<Option<Vec<_>>>()?;
            WordSum::new(letters, upper.clone()).ok()
        }
        ConstSym::Li(rs, zs) if rs.len() == zs.len() => {
            let letters = rs
                .iter()
                .zip(zs)
                .map(|(r, z)| Letter::colored(r.clone(), z.clone()).ok())
                .collect::<Option<Vec<_>>>()?;
            WordSum::new(letters, upper.clone()).ok()
        }
        _ => None,
    }
}

/// Split E_N = R_N + D_N and return the limit of R_N.
///
/// Strategy: replace constants c = L(w) multiplying divergent terms by the
/// finite word sums H_w(N) (the certified D_N difference tends to 0), expand
/// all products by the stuffle, and cancel in the canonical table. Remaining
/// divergent words are peeled leftmost-letter-first, lexicographically
/// greatest word first, for at most 4x the total depth passes.
pub fn peel_reduce(lc: &LinComb, prec: Prec) -> Result<(ConstCoeff, String)> {
    let mut report = String::new();
    // Step 1: certified constant -> word substitutions in divergent terms.
    let mut cur = LinComb::zero();
    for t in lc.terms() {
        cur = cur.add(&substitute_limits_in_term(t, prec, &mut report)?);
    }
    let mut cur = expand_products(&cur)?;
    let total_depth: usize = cur.word_sums().map(|w| w.depth()).sum();
    let max_passes = 4 * total_depth.max(1);
    for pass in 0..max_passes {
        let divergent: Vec<&LcTerm> = cur
            .terms()
            .iter()
            .filter(|t| t.factors.iter().any(|w| is_divergent_word(w, prec)))
            .collect();
        if divergent.is_empty() {
            break;
        }
        // lexicographically greatest divergent word among single-factor terms
        let target = divergent
            .iter()
            .flat_map(|t| t.factors.iter())
            .filter(|w| is_divergent_word(w, prec))
            .max_by(|a, b| a.word.cmp(&b.word))
            .cloned();
        let Some(target) = target else { break };
        if target.depth() <= 1 {
            // a bare divergent letter cannot be peeled further
            break;
        }
        report.push_str(&format!(
            "pass {pass}: peel first letter of {}\n",
            describe_word(&target)
        ));
        let peeled = peel_first_letter(&target)?;
        let mut next = LinComb::zero();
        for t in cur.terms() {
            if let Some(pos) = t.factors.iter().position(|w| *w == target) {
                let mut rest = t.factors.clone();
                rest.remove(pos);
                let base = LinComb::from_term(LcTerm {
                    coeff: t.coeff.clone(),
                    boundary: t.boundary.clone(),
                    factors: rest,
                });
                next = next.add(&base.mul(&peeled));
            } else {
                next = next.add(&LinComb::from_term(t.clone()));
            }
        }
        cur = expand_products(&next)?;
    }
    if let Some(bad) = cur
        .terms()
        .iter()
        .flat_map(|t| t.factors.iter())
        .find(|w| is_divergent_word(w, prec))
    {
        return Err(Error::PeelingStuck(describe_word(bad)));
    }
    let limit = take_limit(&cur, prec)?;
    Ok((limit, report))
}

/// Reduce E_N, keeping the finite form (no limit). Used by tests that check
/// the exact finite identity, e.g. that the sum collapses to -H_{(p,1),(1,1)}(N).
pub fn peel_reduce_finite(lc: &LinComb, prec: Prec) -> Result<LinComb> {
    let mut cur = LinComb::zero();
    let mut report = String::new();
    for t in lc.terms() {
        cur = cur.add(&substitute_limits_in_term(t, prec, &mut report)?);
    }
    let mut cur = expand_products(&cur)?;
    let total_depth: usize = cur.word_sums().map(|w| w.depth()).sum();
    for _ in 0..4 * total_depth.max(1) {
        let target = cur
            .terms()
            .iter()
            .filter(|t| t.factors.iter().any(|w| is_divergent_word(w, prec)))
            .flat_map(|t| t.factors.iter())
            .filter(|w| is_divergent_word(w, prec) && w.depth() > 1)
            .max_by(|a, b| a.word.cmp(&b.word))
            .cloned();
        let Some(target) = target else { break };
        let peeled = peel_first_letter(&target)?;
        let mut next = LinComb::zero();
        for t in cur.terms() {
            if let Some(pos) = t.factors.iter().position(|w| *w == target) {
                let mut rest = t.factors.clone();
                rest.remove(pos);
                let base = LinComb::from_term(LcTerm {
                    coeff: t.coeff.clone(),
                    boundary: t.boundary.clone(),
                    factors: rest,
                });
                next = next.add(&base.mul(&peeled));
            } else {
                next = next.add(&LinComb::from_term(t.clone()));
            }
        }
        cur = expand_products(&next)?;
    }
    Ok(cur)
}

fn substitute_limits_in_term(
    t: &LcTerm,
    prec: Prec,
    report: &mut String,
) -> Result<LinComb> {
    let has_divergent = t.factors.iter().any(|w| is_divergent_word(w, prec));
    if !has_divergent {
        return Ok(LinComb::from_term(t.clone()));
    }
    // growth bound of the rest of the term (divergent factors + boundary power)
    let mut growth = 0.0f64;
    for w in &t.factors {
        match growth_degree(w, prec) {
            Some(g) => growth += g,
            None => return Ok(LinComb::from_term(t.clone())),
        }
    }
    let q = t
        .boundary
        .q
        .rational_re()
        .map(|x| x.to_f64())
        .unwrap_or_else(|| t.boundary.q.numeric(prec).real().to_f64());
    growth += q.max(0.0);
    let upper = t
        .factors
        .first()
        .map(|w| w.upper.clone())
        .unwrap_or(crate::alphabet::UpperLimit::k());
    let mut out = LinComb::from_term(t.clone());
    for sym in t.coeff.symbols().into_iter().cloned().collect::<Vec<_>>() {
        let Some(w) = symbol_word(&sym, &upper) else { continue };
        if classify_convergence(&w, prec).status == Convergence::NotEstablished {
            continue;
        }
        if decay_exponent(&w, prec) <= growth + 1e-12 {
            continue; // would not certify D_N -> 0
        }
        report.push_str(&format!(
            "substitute {} by {} (certified: decay beats growth {growth})\n",
            ConstCoeff::symbol(sym.clone()),
            describe_word(&w)
        ));
        // replace S^e by H_w(N)^e in every monomial of every term
        let mut next = LinComb::zero();
        for term in out.terms() {
            let parts = decompose_by_symbol(&term.coeff, &sym);
            for (e, c) in parts {
                let mut factors = term.factors.clone();
                for _ in 0..e {
                    factors.push(w.clone());
                }
                next = next.add(&LinComb::from_term(LcTerm {
                    coeff: c,
                    boundary: term.boundary.clone(),
                    factors,
                }));
            }
        }
        out = next;
    }
    Ok(out)
}

/// Write a coefficient polynomial as sum_e c_e * S^e.
fn decompose_by_symbol(c: &ConstCoeff, sym: &ConstSym) -> Vec<(u32, ConstCoeff)> {
    let mut parts: Vec<(u32, ConstCoeff)> = Vec::new();
    for (mono, coeff) in c.monomials() {
        let mut e = 0u32;
        let mut rest: Vec<(ConstSym, u32)> = Vec::new();
        for (s, p) in mono {
            if s == sym {
                e += p;
            } else {
                rest.push((s.clone(), *p));
            }
        }
        let mut cc = ConstCoeff::from_scalar(coeff.clone());
        for (s, p) in rest {
            let single = ConstCoeff::symbol(s);
            for _ in 0..p {
                cc = cc.mul(&single);
            }
        }
        match parts.iter_mut().find(|(pe, _)| *pe == e) {
            Some((_, acc)) => *acc = acc.add(&cc),
            None => parts.push((e, cc)),
        }
    }
    parts
}

// ---------- depth-zero shifted-denominator cancellation ----------

/// sum_n sum_j lambda_j/(a_j n + b_j) with sum lambda_j/a_j = 0 evaluates to
/// -sum_j C_j H_{theta_j}, C_j = lambda_j/a_j, theta_j = b_j/a_j.
pub fn shifted_cancellation_depth0(
    coeffs: &[Scalar],
    shifts: &[(i64, i64)],
) -> Result<ConstCoeff> {
    if coeffs.len() != shifts.len() {
        return Err(Error::ArityError("coefficients vs shifts".into()));
    }
    let mut c_total = Scalar::zero();
    let mut cs = Vec::with_capacity(coeffs.len());
    for (lam, (a, b)) in coeffs.iter().zip(shifts) {
        if *a <= 0 || *b <= 0 {
            return Err(Error::MalformedInput("shifts must be positive integers".into()));
        }
        let c = lam.mul_rational(&Rational::from((1, *a)));
        c_total = c_total.add(&c);
        cs.push((c, Rational::from((*b, *a))));
    }
    if !c_total.is_zero() {
        return Err(Error::CancellationFails(c_total.to_string()));
    }
    let mut out = ConstCoeff::zero();
    for (c, theta) in cs {
        if c.is_zero() {
            continue;
        }
        let h = ConstSym::HNonInteger {
            arg: Scalar::from_rational(theta),
            power: Scalar::one(),
            color: Scalar::one(),
        };
        out = out.add(&ConstCoeff::symbol(h).mul_scalar(&c.neg()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{AffineLetter, PolyLetter, UpperLimit};
    use crate::numeval::{eval_const_coeff, eval_lincomb};
    use crate::prec::rel_err;

    fn l(r: i64, s: i64) -> Letter {
        Letter::colored(Scalar::from_int(r), Scalar::from_int(s)).unwrap()
    }

    fn ws(word: &[(i64, i64)]) -> WordSum {
        WordSum::new(
            word.iter().map(|&(r, s)| l(r, s)).collect(),
            UpperLimit::k(),
        )
        .unwrap()
    }

    #[test]
    fn harmonic_series_not_established() {
        let prec = Prec::new(40);
        let v = classify_convergence(&ws(&[(1, 1)]), prec);
        assert_eq!(v.status, Convergence::NotEstablished);
    }

    #[test]
    fn alternating_harmonic_is_conditionally_convergent() {
        let prec = Prec::new(40);
        let v = classify_convergence(&ws(&[(1, -1)]), prec);
        assert_eq!(v.status, Convergence::Convergent);
    }

    #[test]
    fn zeta_two_is_absolute() {
        let prec = Prec::new(40);
        let v = classify_convergence(&ws(&[(2, 1)]), prec);
        assert_eq!(v.status, Convergence::AbsolutelyConvergent);
    }

    #[test]
    fn poly_effective_weight() {
        // ((1),1,(x^2+1)): effective weight 2 > 1, absolutely convergent
        let prec = Prec::new(40);
        let p = PolyLetter::new(
            Scalar::one(),
            vec![(
                Scalar::from_int(1),
                vec![Scalar::one(), Scalar::zero(), Scalar::one()],
            )],
        )
        .unwrap();
        let w = WordSum::new(vec![Letter::Poly(p)], UpperLimit::k()).unwrap();
        let v = classify_convergence(&w, prec);
        assert_eq!(v.status, Convergence::AbsolutelyConvergent);
    }

    #[test]
    fn affine_shift_matches_colored_counterpart() {
        let prec = Prec::new(40);
        for (r, s, expect) in [
            (1i64, 1i64, Convergence::NotEstablished),
            (1, -1, Convergence::Convergent),
            (2, 1, Convergence::AbsolutelyConvergent),
        ] {
            let a = AffineLetter::new(
                Scalar::from_int(s),
                vec![(Scalar::from_int(r), Scalar::from_int(3), Scalar::from_int(2))],
            )
            .unwrap();
            let w = WordSum::new(vec![Letter::Affine(a)], UpperLimit::k()).unwrap();
            assert_eq!(classify_convergence(&w, prec).status, expect, "r={r}, s={s}");
        }
    }

    #[test]
    fn take_limit_maps_words_to_symbols() {
        let prec = Prec::new(40);
        // H_{(q,z),(r,s)} + H_{(q+r,zs)} -> Li_{q,r}(z,s) + Li_{q+r}(zs)
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(2, -1), (3, 1)]))
            .add(&LinComb::single_word(ConstCoeff::one(), ws(&[(5, -1)])));
        let c = take_limit(&lc, prec).unwrap();
        let syms = c.symbols();
        assert_eq!(syms.len(), 2);
        assert!(c.contains(&ConstSym::Li(
            vec![Scalar::from_int(2), Scalar::from_int(3)],
            vec![Scalar::from_int(-1), Scalar::one()]
        )));
        assert!(c.contains(&ConstSym::Li(
            vec![Scalar::from_int(5)],
            vec![Scalar::from_int(-1)]
        )));
    }

    #[test]
    fn take_limit_boundary_rules() {
        let prec = Prec::new(40);
        // (1/2)^k * H_{(2,1)}(k) -> 0
        let t = LcTerm {
            coeff: ConstCoeff::one(),
            boundary: Boundary::power(
                Scalar::from_rational(Rational::from((1, 2))),
                Scalar::zero(),
            ),
            factors: vec![ws(&[(2, 1)])],
        };
        let c = take_limit(&LinComb::from_term(t), prec).unwrap();
        assert!(c.is_zero());
        // k^2 * (anything) diverges
        let t = LcTerm {
            coeff: ConstCoeff::one(),
            boundary: Boundary::power(Scalar::one(), Scalar::from_int(2)),
            factors: vec![],
        };
        assert!(take_limit(&LinComb::from_term(t), prec).is_err());
    }

    #[test]
    fn peel_identity_is_numerically_exact() {
        let prec = Prec::new(45);
        let w = ws(&[(1, 1), (2, 1), (1, -1)]);
        let peeled = peel_first_letter(&w).unwrap();
        for n in [5i64, 20] {
            let lhs = crate::numeval::eval_word_sum(&w, n, prec).unwrap();
            let rhs = eval_lincomb(&peeled, n, prec).unwrap();
            assert!(rel_err(&lhs, &rhs) < 1e-40);
        }
    }

    #[test]
    fn peeling_example_depth_one() {
        // sum (H_n^{(p)} - zeta(p))/n: finite form is
        // H_{(1,1),(p,1)} + H_{(p+1,1)} - zeta(p) H_{(1,1)};
        // peeling reduces it to -H_{(p,1),(1,1)} with limit -zeta(p,1).
        let prec = Prec::new(40);
        let p = 2i64;
        let zeta_p = ConstCoeff::symbol(ConstSym::Zeta(vec![Scalar::from_int(p)]));
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(1, 1), (p, 1)]))
            .add(&LinComb::single_word(ConstCoeff::one(), ws(&[(p + 1, 1)])))
            .add(&LinComb::single_word(zeta_p.neg(), ws(&[(1, 1)])));
        // structural: the finite reduction collapses to a single term
        let finite = peel_reduce_finite(&lc, prec).unwrap();
        assert_eq!(finite.len(), 1);
        let t = &finite.terms()[0];
        assert_eq!(t.factors.len(), 1);
        assert_eq!(t.factors[0], ws(&[(p, 1), (1, 1)]));
        assert_eq!(t.coeff.as_scalar().unwrap(), Scalar::from_int(-1));
        // limit: -zeta(p,1)
        let (limit, _) = peel_reduce(&lc, prec).unwrap();
        let expect = ConstCoeff::symbol(ConstSym::Zeta(vec![
            Scalar::from_int(p),
            Scalar::from_int(1),
        ]))
        .neg();
        assert_eq!(limit, expect);
    }

    #[test]
    fn peeling_example_depth_two() {
        // sum (H_{p,q}(n) - zeta(p,q))/n -> -zeta(p,1,q) - zeta(p,q,1) - zeta(p,q+1)
        let prec = Prec::new(40);
        let (p, q) = (2i64, 3i64);
        let zeta_pq = ConstCoeff::symbol(ConstSym::Zeta(vec![
            Scalar::from_int(p),
            Scalar::from_int(q),
        ]));
        let lc = LinComb::single_word(ConstCoeff::one(), ws(&[(1, 1), (p, 1), (q, 1)]))
            .add(&LinComb::single_word(ConstCoeff::one(), ws(&[(p + 1, 1), (q, 1)])))
            .add(&LinComb::single_word(zeta_pq.neg(), ws(&[(1, 1)])));
        let (limit, _) = peel_reduce(&lc, prec).unwrap();
        let z = |v: Vec<i64>| {
            ConstCoeff::symbol(ConstSym::Zeta(v.into_iter().map(Scalar::from_int).collect()))
        };
        let expect = z(vec![p, 1, q]).add(&z(vec![p, q, 1])).add(&z(vec![p, q + 1])).neg();
        assert_eq!(limit, expect);
    }

    #[test]
    fn shifted_cancellation_telescoping() {
        let prec = Prec::new(40);
        // sum (1/(2n+1) - 1/(2n+3)) = H_{3/2} - H_{1/2} = 2/3
        let c = shifted_cancellation_depth0(
            &[Scalar::one(), Scalar::from_int(-1)],
            &[(2, 1), (2, 3)],
        )
        .unwrap();
        let v = eval_const_coeff(&c, prec).unwrap();
        // telescoping oracle: the sum collapses to its first surviving term 1/3,
        // and indeed (H_{3/2} - H_{1/2})/2 = (2/3)/2
        let expect = prec.from_rational(&Rational::from((1, 3)));
        assert!(rel_err(&v, &expect) < 1e-35);
        // sum (1/(n+1) - 1/(n+2)) = 1/2
        let c = shifted_cancellation_depth0(
            &[Scalar::one(), Scalar::from_int(-1)],
            &[(1, 1), (1, 2)],
        )
        .unwrap();
        let v = eval_const_coeff(&c, prec).unwrap();
        assert!(rel_err(&v, &prec.from_rational(&Rational::from((1, 2)))) < 1e-35);
    }

    #[test]
    fn shifted_cancellation_requires_zero_sum() {
        assert!(matches!(
            shifted_cancellation_depth0(&[Scalar::one()], &[(2, 1)]),
            Err(Error::CancellationFails(_))
        ));
        // single term with lambda = 0 gives 0
        let c = shifted_cancellation_depth0(&[Scalar::zero()], &[(2, 1)]).unwrap();
        assert!(c.is_zero());
    }
}
