//! Wiring from parsed sums to the convolution engine: factor classification,
//! atom construction, route selection (finite / aligned / shift / scaled /
//! affine / polynomial), and limit passage for infinite sums.

use crate::alphabet::{Alphabet, Letter, PolyCoeffs, UpperLimit, WordSum};
use crate::closure::{
    convolve_aligned_summand, convolve_ap_shift, ApShift,
};
use crate::constants::ConstCoeff;
use crate::error::{Error, Result};
use crate::lifting::{nested_convolve_general, LevelSummand};
use crate::limits::peel_reduce;
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::reducers::{
    reduce_affine_factor, reduce_basic_factor, reduce_poly_factor, SummandAtom, TrigKind,
};
use crate::scalars::Scalar;
use crate::sumdsl::{
    affine_in_var, eval_expr_const, eval_expr_scalar, parse_sum, poly_in_var, variables,
    word_sum_call, Expr, LevelUpper, SumExpr,
};
use rug::Rational;

/// Build a summand atom from a DSL call over the level variable `var`.
pub fn atom_from_call(name: &str, groups: &[Vec<Expr>], var: &str) -> Result<SummandAtom> {
    let scalar = |e: &Expr| eval_expr_scalar(e);
    let upper_form = |e: &Expr| -> Result<(Rational, Rational, bool)> {
        // (slope, offset, floored)
        match e {
            Expr::Call { name, groups } if name == "floor" && groups.len() == 1 => {
                let (a, b) = affine_in_var(&groups[0][0], var)
                    .ok_or_else(|| Error::MalformedInput("floor of a non-affine argument".into()))?;
                Ok((
                    a.as_rational().ok_or_else(|| Error::MalformedInput("irrational slope".into()))?,
                    b.as_rational().ok_or_else(|| Error::MalformedInput("irrational offset".into()))?,
                    true,
                ))
            }
            other => {
                let (a, b) = affine_in_var(other, var)
                    .ok_or_else(|| Error::MalformedInput("upper argument must be affine".into()))?;
                Ok((
                    a.as_rational().ok_or_else(|| Error::MalformedInput("irrational slope".into()))?,
                    b.as_rational().ok_or_else(|| Error::MalformedInput("irrational offset".into()))?,
                    false,
                ))
            }
        }
    };
    let depth_one_upper = |e: &Expr, r: Scalar, s: Scalar, alternating: bool| -> Result<SummandAtom> {
        let (a, b, floored) = upper_form(e)?;
        if floored {
            if b != 0 {
                return Err(Error::UnsupportedAtom(
                    "floored uppers are supported for floor(num*n/den) only".into(),
                ));
            }
            return Ok(SummandAtom::RationalUpper {
                r,
                s,
                num: a.numer().to_i64().unwrap(),
                den: a.denom().to_i64().unwrap(),
                floor: true,
                alternating,
            });
        }
        if a.denom() == &1 && b.denom() == &1 {
            let (ai, bi) = (a.numer().to_i64().unwrap(), b.numer().to_i64().unwrap());
            if bi == 0 {
                // scaled colored upper
                return Ok(SummandAtom::RationalUpper {
                    r,
                    s,
                    num: ai,
                    den: 1,
                    floor: false,
                    alternating,
                });
            }
            return Ok(SummandAtom::AffineUpperHarmonic {
                p1: a,
                p2: b,
                r,
                s,
                alternating,
            });
        }
        if b == 0 {
            return Ok(SummandAtom::RationalUpper {
                r,
                s,
                num: a.numer().to_i64().unwrap(),
                den: a.denom().to_i64().unwrap(),
                floor: false,
                alternating,
            });
        }
        Ok(SummandAtom::AffineUpperHarmonic { p1: a, p2: b, r, s, alternating })
    };
    match (name, groups) {
        ("H", [x]) => depth_one_upper(&x[0], Scalar::one(), Scalar::one(), false),
        ("H", [x, r]) => depth_one_upper(&x[0], scalar(&r[0])?, Scalar::one(), false),
        ("H", [x, r, s]) => depth_one_upper(&x[0], scalar(&r[0])?, scalar(&s[0])?, false),
        ("A", [x]) => depth_one_upper(&x[0], Scalar::one(), Scalar::one(), true),
        ("A", [x, r]) => depth_one_upper(&x[0], scalar(&r[0])?, Scalar::one(), true),
        ("A", [x, r, s]) => depth_one_upper(&x[0], scalar(&r[0])?, scalar(&s[0])?, true),
        ("Hm", [x, ..]) | ("Hstar", [x, ..]) => {
            let star = name == "Hstar";
            let rs = list_group(&groups[1])?;
            let ss = if groups.len() > 2 {
                list_group(&groups[2])?
            } else {
                vec![Scalar::one(); rs.len()]
            };
            if rs.len() != ss.len() {
                return Err(Error::ArityError(name.into()));
            }
            let word: Vec<(Scalar, Scalar)> = rs.into_iter().zip(ss).collect();
            let (a, b, floored) = upper_form(&x[0])?;
            if floored || a.denom() != &1 || b.denom() != &1 {
                return Err(Error::UnsupportedAtom(
                    "multiple harmonic numbers need integer-affine uppers".into(),
                ));
            }
            let (ai, bi) = (a.numer().to_i64().unwrap(), b.numer().to_i64().unwrap());
            if ai == 1 && bi == 0 {
                Ok(SummandAtom::Multiple { word, star })
            } else {
                if star {
                    return Err(Error::UnsupportedAtom(
                        "star words need the plain upper limit n".into(),
                    ));
                }
                Ok(SummandAtom::IntegerAffineUpperMultiple { p: ai, q: bi, word })
            }
        }
        ("Hyp", [x, m, r]) | ("Hyp", [x, m, r, _]) => {
            let mv = scalar(&m[0])?
                .as_i64()
                .ok_or_else(|| Error::ArityError("Hyp".into()))? as u32;
            let rv = scalar(&r[0])?;
            let sv = if groups.len() > 3 {
                scalar(&groups[3][0])?
            } else {
                Scalar::one()
            };
            let (a, b, floored) = upper_form(&x[0])?;
            if b != 0 {
                return Err(Error::UnsupportedAtom(
                    "hyperharmonic uppers must be num*n/den".into(),
                ));
            }
            if a == 1 && !floored {
                Ok(SummandAtom::HyperharmonicIntegral {
                    m: mv,
                    word: vec![(rv, sv)],
                    star: false,
                })
            } else {
                Ok(SummandAtom::HyperharmonicAnalytic {
                    m: mv,
                    r: rv,
                    s: sv,
                    num: a.numer().to_i64().unwrap(),
                    den: a.denom().to_i64().unwrap(),
                    floor: floored,
                })
            }
        }
        ("Hypw", [x, m, ..]) | ("Hypstar", [x, m, ..]) => {
            let star = name == "Hypstar";
            let (a, b, floored) = upper_form(&x[0])?;
            if a != 1 || b != 0 || floored {
                return Err(Error::UnsupportedAtom(
                    "word hyperharmonics need the plain upper limit n".into(),
                ));
            }
            let mv = scalar(&m[0])?
                .as_i64()
                .ok_or_else(|| Error::ArityError(name.into()))? as u32;
            let rs = list_group(&groups[2])?;
            let ss = if groups.len() > 3 {
                list_group(&groups[3])?
            } else {
                vec![Scalar::one(); rs.len()]
            };
            Ok(SummandAtom::HyperharmonicIntegral {
                m: mv,
                word: rs.into_iter().zip(ss).collect(),
                star,
            })
        }
        ("psi", [x]) => {
            expect_var_plus(&x[0], var, 1)?;
            Ok(SummandAtom::Polygamma { m: 0 })
        }
        ("psim", [m, x]) => {
            expect_var_plus(&x[0], var, 1)?;
            let mv = scalar(&m[0])?.as_i64().ok_or_else(|| Error::ArityError("psim".into()))?;
            Ok(SummandAtom::Polygamma { m: mv as u32 })
        }
        ("hzeta", [s, x]) => {
            expect_var_plus(&x[0], var, 1)?;
            Ok(SummandAtom::ZetaTail { s: scalar(&s[0])? })
        }
        ("lerch", [z, s, x]) => {
            expect_var_plus(&x[0], var, 1)?;
            Ok(SummandAtom::LerchTail { z: scalar(&z[0])?, s: scalar(&s[0])? })
        }
        ("zsum", [x, r, a]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::TruncatedHurwitz { r: scalar(&r[0])?, a: scalar(&a[0])? })
        }
        ("lsum", [x, z, r, a]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::TruncatedLerch {
                z: scalar(&z[0])?,
                r: scalar(&r[0])?,
                a: scalar(&a[0])?,
            })
        }
        ("stirling1", [x, kk]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::Stirling1 {
                k: scalar(&kk[0])?.as_i64().unwrap_or(0) as u32,
            })
        }
        ("stirling2", [x, kk]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::Stirling2 {
                k: scalar(&kk[0])?.as_i64().unwrap_or(0) as u32,
            })
        }
        ("periodic", [x, vals]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::Periodic { values: list_group(vals)? })
        }
        ("ind", [x, m, a]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::ResidueIndicator {
                modulus: scalar(&m[0])?.as_i64().unwrap_or(0),
                residue: scalar(&a[0])?.as_i64().unwrap_or(0),
            })
        }
        ("rlevel", [x, m, a, r, s]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::ResidueClassLevelM {
                modulus: scalar(&m[0])?.as_i64().unwrap_or(0),
                residue: scalar(&a[0])?.as_i64().unwrap_or(0),
                r: scalar(&r[0])?,
                s: scalar(&s[0])?,
            })
        }
        ("fib", [x]) | ("lucas", [x]) => {
            expect_var_plus(&x[0], var, 0)?;
            let sqrt5 = Scalar::radical(Rational::from(5), 2)?;
            let phi = Scalar::one().add(&sqrt5).mul_rational(&Rational::from((1, 2)));
            let psi = Scalar::one().sub(&sqrt5).mul_rational(&Rational::from((1, 2)));
            if name == "fib" {
                let c = sqrt5.inverse()?;
                Ok(SummandAtom::ExpPoly {
                    terms: vec![(vec![c.clone()], phi), (vec![c.neg()], psi)],
                })
            } else {
                Ok(SummandAtom::ExpPoly {
                    terms: vec![(vec![Scalar::one()], phi), (vec![Scalar::one()], psi)],
                })
            }
        }
        ("expoly", [x, pairs]) => {
            expect_var_plus(&x[0], var, 0)?;
            let items = match pairs.as_slice() {
                [Expr::List(items)] => items.as_slice(),
                _ => return Err(Error::MalformedInput("expoly needs a list of [coeffs, lambda]".into())),
            };
            let mut terms = Vec::new();
            for it in items {
                let Expr::List(pair) = it else {
                    return Err(Error::MalformedInput("expoly pair".into()));
                };
                if pair.len() != 2 {
                    return Err(Error::ArityError("expoly pair".into()));
                }
                let Expr::List(cs) = &pair[0] else {
                    return Err(Error::MalformedInput("expoly coefficients".into()));
                };
                let coeffs = cs.iter().map(eval_expr_scalar).collect::<Result<Vec<_>>>()?;
                terms.push((coeffs, eval_expr_scalar(&pair[1])?));
            }
            Ok(SummandAtom::ExpPoly { terms })
        }
        ("cos", [x]) | ("sin", [x]) | ("cosh", [x]) | ("sinh", [x]) | ("exp", [x])
        | ("cospi", [x]) | ("sinpi", [x]) => {
            let (a, b) = affine_in_var(&x[0], var)
                .ok_or_else(|| Error::MalformedInput("trig of a non-affine argument".into()))?;
            let aq = a
                .as_rational()
                .ok_or_else(|| Error::UnsupportedAtom("trig slope must be rational".into()))?;
            let bq = b
                .as_rational()
                .ok_or_else(|| Error::UnsupportedAtom("trig offset must be rational".into()))?;
            let (kind, pi_scaled) = match name {
                "cos" => (TrigKind::Cos, false),
                "sin" => (TrigKind::Sin, false),
                "cosh" => (TrigKind::Cosh, false),
                "sinh" => (TrigKind::Sinh, false),
                "exp" => (TrigKind::Exp, false),
                "cospi" => (TrigKind::Cos, true),
                _ => (TrigKind::Sin, true),
            };
            Ok(SummandAtom::Trig { kind, a: aq, b: bq, pi_scaled })
        }
        ("eph", [x, a, b, r, z]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::EpsteinHurwitz {
                a: scalar(&a[0])?,
                b: scalar(&b[0])?,
                r: scalar(&r[0])?,
                z: scalar(&z[0])?,
            })
        }
        ("mathieu", [x, a, r, z]) => {
            expect_var_plus(&x[0], var, 0)?;
            Ok(SummandAtom::Mathieu {
                a: scalar(&a[0])?,
                r: scalar(&r[0])?,
                z: scalar(&z[0])?,
            })
        }
        ("Gstar", [x, ..]) => {
            expect_var_plus(&x[0], var, 0)?;
            let ws = word_sum_call("G", groups, var)?
                .ok_or_else(|| Error::MalformedInput("Gstar word".into()))?;
            let letters = ws
                .word
                .into_iter()
                .map(|l| match l {
                    Letter::Affine(a) => Ok(a),
                    _ => Err(Error::AlphabetMismatch),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SummandAtom::CyclotomicWeak { word: letters })
        }
        ("Pstar", [x, ..]) => {
            expect_var_plus(&x[0], var, 0)?;
            let ws = word_sum_call("P", groups, var)?
                .ok_or_else(|| Error::MalformedInput("Pstar word".into()))?;
            let letters = ws
                .word
                .into_iter()
                .map(|l| match l {
                    Letter::Poly(p) => Ok(p),
                    _ => Err(Error::AlphabetMismatch),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SummandAtom::PolyZeta { word: letters, weak: true })
        }
        _ => Err(Error::UnknownFunction(name.into())),
    }
}

fn list_group(g: &[Expr]) -> Result<Vec<Scalar>> {
    match g {
        [Expr::List(items)] => items.iter().map(eval_expr_scalar).collect(),
        items => items.iter().map(eval_expr_scalar).collect(),
    }
}

fn expect_var_plus(e: &Expr, var: &str, offset: i64) -> Result<()> {
    let (a, b) = affine_in_var(e, var)
        .ok_or_else(|| Error::MalformedInput("argument must be affine in the level variable".into()))?;
    if a.as_i64() == Some(1) && b.as_i64() == Some(offset) {
        Ok(())
    } else {
        Err(Error::UnsupportedAtom(format!(
            "argument must be exactly n{}",
            if offset == 0 { String::new() } else { format!("+{offset}") }
        )))
    }
}

/// Reduce an atom in the smallest alphabet that accepts it. Returns the
/// E-form and the alphabet it lives in.
pub fn reduce_atom_any(atom: &SummandAtom) -> Result<(LinComb, Alphabet)> {
    if let Ok(lc) = reduce_basic_factor(atom) {
        return Ok((lc, Alphabet::Colored));
    }
    if let Ok(lc) = reduce_affine_factor(atom) {
        return Ok((lc, Alphabet::Affine));
    }
    let lc = reduce_poly_factor(atom)?;
    Ok((lc, Alphabet::Poly))
}

// ---------- factor classification ----------

#[derive(Clone, Debug)]
enum Fac {
    /// colored word at upper a*v + b
    Word { word: Vec<Letter>, a: i64, b: i64 },
    /// affine or polynomial word at upper v
    WordPlain { ws: WordSum },
    Atom(SummandAtom),
    /// z^(alpha v + beta): contributes color z^alpha and constant z^beta
    Color { z: Scalar, alpha: Rational, beta: Rational },
    /// v^q
    Power { q: Scalar },
    /// (a v + b)^q, non-integer or negative q
    AffineOuter { a: Scalar, b: Scalar, q: Scalar },
    /// P(v)^q with deg >= 2
    PolyOuter { poly: PolyCoeffs, q: Scalar },
    /// polynomial in v with a nonnegative integer exponent folded in
    PolyExpand { coeffs: PolyCoeffs },
    Coeff(ConstCoeff),
}

/// Distribute sums over products so the summand becomes a list of signed
/// product terms.
fn distribute(e: &Expr) -> Result<Vec<(bool, Vec<Expr>)>> {
    match e {
        Expr::Add(a, b) => {
            let mut out = distribute(a)?;
            out.extend(distribute(b)?);
            Ok(out)
        }
        Expr::Sub(a, b) => {
            let mut out = distribute(a)?;
            out.extend(distribute(b)?.into_iter().map(|(s, f)| (!s, f)));
            Ok(out)
        }
        Expr::Neg(a) => Ok(distribute(a)?.into_iter().map(|(s, f)| (!s, f)).collect()),
        Expr::Mul(a, b) => {
            let left = distribute(a)?;
            let right = distribute(b)?;
            let mut out = Vec::new();
            for (sa, fa) in &left {
                for (sb, fb) in &right {
                    let mut f = fa.clone();
                    f.extend(fb.iter().cloned());
                    out.push((*sa != *sb, f));
                }
            }
            Ok(out)
        }
        Expr::Div(a, b) => {
            let mut out = distribute(a)?;
            let inv = Expr::Pow(b.clone(), Box::new(Expr::Num(-1)));
            for (_, f) in &mut out {
                f.push(inv.clone());
            }
            Ok(out)
        }
        other => Ok(vec![(false, vec![other.clone()])]),
    }
}

fn classify_factor(f: &Expr, var: &str) -> Result<Vec<Fac>> {
    // variable-free factors are coefficients
    let mut vars = Vec::new();
    variables(f, &mut vars);
    if !vars.iter().any(|v| v == var) {
        return Ok(vec![Fac::Coeff(eval_expr_const(f)?)]);
    }
    match f {
        Expr::Var(v) if v == var => Ok(vec![Fac::Power { q: Scalar::one() }]),
        Expr::Pow(base, exp) => {
            let mut evars = Vec::new();
            variables(exp, &mut evars);
            if evars.iter().any(|v| v == var) {
                // z^(affine in v)
                let z = eval_expr_scalar(base)?;
                let (a, b) = affine_in_var(exp, var)
                    .ok_or_else(|| Error::ReductionFailed("exponent not affine in the index".into()))?;
                let alpha = a
                    .as_rational()
                    .ok_or_else(|| Error::ReductionFailed("irrational color exponent".into()))?;
                let beta = b
                    .as_rational()
                    .ok_or_else(|| Error::ReductionFailed("irrational color offset".into()))?;
                return Ok(vec![Fac::Color { z, alpha, beta }]);
            }
            let q = eval_expr_scalar(exp)?;
            // base: v, polynomial in v, or an atom/word call
            if let Some(p) = poly_in_var(base, var) {
                if p.len() == 1 {
                    return Ok(vec![Fac::Coeff(ConstCoeff::from_scalar(p[0].pow_scalar(&q)?))]);
                }
                let is_plain_v = p.len() == 2 && p[0].is_zero() && p[1].is_one();
                if is_plain_v {
                    return Ok(vec![Fac::Power { q }]);
                }
                if p.len() == 2 {
                    return Ok(vec![Fac::AffineOuter {
                        a: p[1].clone(),
                        b: p[0].clone(),
                        q,
                    }]);
                }
                return Ok(vec![Fac::PolyOuter { poly: p, q }]);
            }
            // (X^{q1})^{q2} with integer q2 and polynomial X combines exponents
            if let Expr::Pow(inner_base, q1) = &**base {
                if let (Some(p), Ok(q1s)) = (poly_in_var(inner_base, var), eval_expr_scalar(q1)) {
                    if let Some(e2) = q.as_i64() {
                        let qq = q1s.mul(&Scalar::from_int(e2));
                        if p.len() == 1 {
                            return Ok(vec![Fac::Coeff(ConstCoeff::from_scalar(
                                p[0].pow_scalar(&qq)?,
                            ))]);
                        }
                        if p.len() == 2 && p[0].is_zero() && p[1].is_one() {
                            return Ok(vec![Fac::Power { q: qq }]);
                        }
                        if p.len() == 2 {
                            return Ok(vec![Fac::AffineOuter {
                                a: p[1].clone(),
                                b: p[0].clone(),
                                q: qq,
                            }]);
                        }
                        return Ok(vec![Fac::PolyOuter { poly: p, q: qq }]);
                    }
                }
            }
            // a color raised to a further power: (z^(a v + b))^q
            if let Ok(inner) = classify_factor(base, var) {
                if let [Fac::Color { z, alpha, beta }] = inner.as_slice() {
                    let qr = q.as_rational().ok_or_else(|| {
                        Error::ReductionFailed("irrational power of a color".into())
                    })?;
                    return Ok(vec![Fac::Color {
                        z: z.clone(),
                        alpha: alpha.clone() * &qr,
                        beta: beta.clone() * &qr,
                    }]);
                }
            }
            // atom or word power
            let e = q
                .as_i64()
                .ok_or_else(|| Error::ReductionFailed("non-integer power of a sum factor".into()))?;
            if e < 0 {
                return Err(Error::ReductionFailed(
                    "negative powers of harmonic factors are not reducible".into(),
                ));
            }
            let inner = classify_factor(base, var)?;
            let mut out = Vec::new();
            for _ in 0..e {
                out.extend(inner.iter().cloned());
            }
            Ok(out)
        }
        Expr::Call { name, groups } => {
            if name == "floor" {
                // floor((a v + b)/m) as a factor value
                let (a, b) = affine_in_var(&groups[0][0], var)
                    .ok_or_else(|| Error::MalformedInput("floor argument".into()))?;
                let aq = a.as_rational().ok_or_else(|| Error::MalformedInput("floor slope".into()))?;
                let bq = b.as_rational().ok_or_else(|| Error::MalformedInput("floor offset".into()))?;
                let m = aq.denom().clone().lcm(bq.denom());
                let mi = m.to_i64().unwrap_or(1);
                let ai = (aq * &m).numer().to_i64().unwrap();
                let bi = (bq * &m).numer().to_i64().unwrap();
                return Ok(vec![Fac::Atom(SummandAtom::FloorAffine { a: ai, b: bi, m: mi })]);
            }
            if let Ok(Some(ws)) = word_sum_call(name, groups, var) {
                match ws.alphabet() {
                    None | Some(Alphabet::Colored) => {
                        let (a, b) = match ws.upper {
                            UpperLimit::Sym { a, b } => (a, b),
                            UpperLimit::Concrete { .. } => {
                                return Err(Error::ReductionFailed(
                                    "concrete upper limit inside a summand".into(),
                                ))
                            }
                        };
                        return Ok(vec![Fac::Word { word: ws.word, a, b }]);
                    }
                    _ => {
                        if ws.upper != UpperLimit::k() {
                            return Err(Error::ReductionFailed(
                                "affine/poly word sums need the plain upper limit".into(),
                            ));
                        }
                        return Ok(vec![Fac::WordPlain { ws }]);
                    }
                }
            }
            Ok(vec![Fac::Atom(atom_from_call(name, groups, var)?)])
        }
        other => {
            if let Some(p) = poly_in_var(other, var) {
                if p.len() == 1 {
                    return Ok(vec![Fac::Coeff(ConstCoeff::from_scalar(p[0].clone()))]);
                }
                if p.len() == 2 && p[0].is_zero() && p[1].is_one() {
                    return Ok(vec![Fac::Power { q: Scalar::one() }]);
                }
                if p.len() == 2 {
                    return Ok(vec![Fac::AffineOuter {
                        a: p[1].clone(),
                        b: p[0].clone(),
                        q: Scalar::one(),
                    }]);
                }
                return Ok(vec![Fac::PolyOuter { poly: p, q: Scalar::one() }]);
            }
            Err(Error::ReductionFailed(format!("unclassifiable factor {other:?}")))
        }
    }
}

fn poly_mul(a: &[Scalar], b: &[Scalar]) -> PolyCoeffs {
    let mut out = vec![Scalar::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    out
}

// ---------- per-level plan ----------

#[derive(Clone, Debug)]
struct LevelPlan {
    coeff: ConstCoeff,
    z: Scalar,
    q: Scalar,
    affine_outer: Vec<(Scalar, Scalar, Scalar)>,
    poly_outer: Vec<(PolyCoeffs, Scalar)>,
    poly_expand: Vec<PolyCoeffs>,
    words: Vec<(Vec<Letter>, i64, i64)>, // colored words at upper a*v+b
    plain_words: Vec<WordSum>,
    atoms: Vec<SummandAtom>,
}

impl LevelPlan {
    fn new() -> Self {
        LevelPlan {
            coeff: ConstCoeff::one(),
            z: Scalar::one(),
            q: Scalar::zero(),
            affine_outer: vec![],
            poly_outer: vec![],
            poly_expand: vec![],
            words: vec![],
            plain_words: vec![],
            atoms: vec![],
        }
    }

    fn absorb(&mut self, f: Fac) -> Result<()> {
        match f {
            Fac::Coeff(c) => self.coeff = self.coeff.mul(&c),
            Fac::Color { z, alpha, beta } => {
                let za = z.pow_rational(&alpha)?;
                let zb = z.pow_rational(&beta)?;
                self.z = self.z.mul(&za);
                self.coeff = self.coeff.mul_scalar(&zb);
            }
            Fac::Power { q } => self.q = self.q.add(&q),
            Fac::AffineOuter { a, b, q } => self.affine_outer.push((a, b, q)),
            Fac::PolyOuter { poly, q } => self.poly_outer.push((poly, q)),
            Fac::PolyExpand { coeffs } => self.poly_expand.push(coeffs),
            Fac::Word { word, a, b } => self.words.push((word, a, b)),
            Fac::WordPlain { ws } => self.plain_words.push(ws),
            Fac::Atom(a) => self.atoms.push(a),
        }
        Ok(())
    }

    /// The expanded polynomial factors as an E-form LinComb (powers of v).
    fn poly_expand_lincomb(&self) -> LinComb {
        let mut acc = LinComb::one();
        for p in &self.poly_expand {
            let mut piece = LinComb::zero();
            for (i, c) in p.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                piece = piece.add(&LinComb::from_term(LcTerm {
                    coeff: ConstCoeff::from_scalar(c.clone()),
                    boundary: Boundary::power(Scalar::one(), Scalar::from_int(i as i64)),
                    factors: vec![],
                }));
            }
            acc = acc.mul(&piece);
        }
        acc
    }
}

fn plan_level(factors: &[Expr], var: &str) -> Result<LevelPlan> {
    let mut plan = LevelPlan::new();
    for f in factors {
        for fac in classify_factor(f, var)? {
            plan.absorb(fac)?;
        }
    }
    Ok(plan)
}

// ---------- route selection and reduction ----------

/// Reduce a single-level plan to a LinComb at a symbolic upper limit in k.
fn reduce_single_level(plan: &LevelPlan) -> Result<LinComb> {
    // aligned-affine: every colored word at the same upper (a, b != 0), the
    // only outer powers are (a v + b)^q with that same (a, b), no plain power
    if !plan.words.is_empty() {
        let (a0, b0) = (plan.words[0].1, plan.words[0].2);
        let aligned = b0 != 0
            && plan.words.iter().all(|(_, a, b)| *a == a0 && *b == b0)
            && plan.poly_outer.is_empty()
            && plan.poly_expand.is_empty()
            && plan.plain_words.is_empty()
            && plan.q.is_zero()
            && plan
                .affine_outer
                .iter()
                .all(|(a, b, _)| a.as_i64() == Some(a0) && b.as_i64() == Some(b0));
        if aligned && atoms_alignable(&plan.atoms, a0, b0) {
            let mut q = Scalar::zero();
            for (_, _, qq) in &plan.affine_outer {
                q = q.add(qq);
            }
            let mut summand = LinComb::one();
            for (w, _, _) in &plan.words {
                summand = summand.mul(&LinComb::single_word(
                    ConstCoeff::one(),
                    WordSum::new(w.clone(), UpperLimit::sym(a0, b0)?)?,
                ));
            }
            for atom in &plan.atoms {
                summand = summand.mul(&reduce_aligned_atom(atom, a0, b0)?);
            }
            let out = convolve_aligned_summand(a0, b0, &plan.z, &q, &summand)?;
            return Ok(out.scale(&plan.coeff));
        }
        // arithmetic-progression shifts: one power base (c v + d1)^q, words at
        // c v + d2, (d1, d2) one of the four shift patterns
        if plan.atoms.is_empty()
            && plan.plain_words.is_empty()
            && plan.poly_outer.is_empty()
            && plan.poly_expand.is_empty()
            && plan.q.is_zero()
            && plan.affine_outer.len() >= 1
        {
            let c = plan.words[0].1;
            let d2 = plan.words[0].2;
            let same_words = plan.words.iter().all(|(_, a, b)| *a == c && *b == d2);
            let outer_ab: Option<(i64, i64)> = {
                let (a, b, _) = &plan.affine_outer[0];
                match (a.as_i64(), b.as_i64()) {
                    (Some(x), Some(y)) => Some((x, y)),
                    _ => None,
                }
            };
            if let Some((ca, d1)) = outer_ab {
                let same_outer = plan
                    .affine_outer
                    .iter()
                    .all(|(a, b, _)| a.as_i64() == Some(ca) && b.as_i64() == Some(d1));
                if same_words && same_outer && ca == c && c >= 1 {
                    let variant = match (d1, d2) {
                        (1, 0) => Some(ApShift::PowerCnPlus1HarmonicCn),
                        (0, -1) => Some(ApShift::PowerCnHarmonicCnMinus1),
                        (0, 1) => Some(ApShift::PowerCnHarmonicCnPlus1),
                        (-1, 0) => Some(ApShift::PowerCnMinus1HarmonicCn),
                        _ => None,
                    };
                    if let Some(v) = variant {
                        let mut q = Scalar::zero();
                        for (_, _, qq) in &plan.affine_outer {
                            q = q.add(qq);
                        }
                        let words: Vec<(Vec<Letter>, u32)> =
                            plan.words.iter().map(|(w, _, _)| (w.clone(), 1)).collect();
                        let out = convolve_ap_shift(c, v, &plan.z, &q, &words)?;
                        return Ok(out.scale(&plan.coeff));
                    }
                }
            }
        }
    }
    // general single level through the nested machinery
    let ls = build_level_summand(plan)?;
    Ok(nested_convolve_general(&[ls])?.scale(&plan.coeff))
}

fn atoms_alignable(atoms: &[SummandAtom], _a: i64, _b: i64) -> bool {
    atoms.is_empty()
}

fn reduce_aligned_atom(_atom: &SummandAtom, _a: i64, _b: i64) -> Result<LinComb> {
    Err(Error::ReductionFailed("atom not alignable".into()))
}

/// Build the generalized level summand: reduce every atom, attach words at
/// their scales, expand polynomial factors, and decide the alphabet.
fn build_level_summand(plan: &LevelPlan) -> Result<LevelSummand> {
    // integer nonnegative outer powers can expand into the summand and keep
    // the colored alphabet; others force the affine/poly routes
    let expandable = |q: &Scalar| q.as_i64().map_or(false, |e| e >= 0);
    let mut true_affine: Vec<(Scalar, Scalar, Scalar)> = Vec::new();
    let mut true_poly: Vec<(PolyCoeffs, Scalar)> = Vec::new();
    let mut expand_polys: Vec<PolyCoeffs> = plan.poly_expand.clone();
    let mut deferred_affine: Vec<(Scalar, Scalar, Scalar)> = Vec::new();
    let mut deferred_poly: Vec<(PolyCoeffs, Scalar)> = Vec::new();
    for (a, b, q) in &plan.affine_outer {
        if expandable(q) {
            deferred_affine.push((a.clone(), b.clone(), q.clone()));
        } else {
            true_affine.push((a.clone(), b.clone(), q.clone()));
        }
    }
    for (poly, q) in &plan.poly_outer {
        if expandable(q) {
            deferred_poly.push((poly.clone(), q.clone()));
        } else {
            true_poly.push((poly.clone(), q.clone()));
        }
    }
    let mut affine_needed = !true_affine.is_empty()
        || plan
            .plain_words
            .iter()
            .any(|w| w.alphabet() == Some(Alphabet::Affine));
    let poly_needed = !true_poly.is_empty()
        || plan
            .plain_words
            .iter()
            .any(|w| w.alphabet() == Some(Alphabet::Poly));
    let shifted_words = plan.words.iter().any(|(_, _, b)| *b != 0);
    affine_needed |= shifted_words;
    if affine_needed || poly_needed {
        // keep integer powers as letters in their own alphabet
        true_affine.extend(deferred_affine.drain(..));
        true_poly.extend(deferred_poly.drain(..));
    } else {
        for (a, b, q) in deferred_affine.drain(..) {
            let e = q.as_i64().unwrap();
            let base = vec![b, a];
            let mut acc: PolyCoeffs = vec![Scalar::one()];
            for _ in 0..e {
                acc = poly_mul(&acc, &base);
            }
            expand_polys.push(acc);
        }
        for (poly, q) in deferred_poly.drain(..) {
            let e = q.as_i64().unwrap();
            let mut acc: PolyCoeffs = vec![Scalar::one()];
            for _ in 0..e {
                acc = poly_mul(&acc, &poly);
            }
            expand_polys.push(acc);
        }
    }
    let mut summand = {
        let mut acc = LinComb::one();
        for p in &expand_polys {
            let mut piece = LinComb::zero();
            for (i, c) in p.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                piece = piece.add(&LinComb::from_term(LcTerm {
                    coeff: ConstCoeff::from_scalar(c.clone()),
                    boundary: Boundary::power(Scalar::one(), Scalar::from_int(i as i64)),
                    factors: vec![],
                }));
            }
            acc = acc.mul(&piece);
        }
        acc
    };

    // reduce atoms, preferring the colored alphabet
    let mut reduced_atoms = Vec::new();
    let mut atom_alpha = Alphabet::Colored;
    for atom in &plan.atoms {
        if affine_needed || poly_needed {
            // go straight to the target alphabet so scaled-colored routes are
            // not chosen inconsistently
            let lc = if poly_needed {
                reduce_poly_factor(atom)?
            } else {
                reduce_affine_factor(atom)?
            };
            reduced_atoms.push(lc);
            atom_alpha = atom_alpha.max(if poly_needed { Alphabet::Poly } else { Alphabet::Affine });
        } else {
            match reduce_basic_factor(atom) {
                Ok(lc) => reduced_atoms.push(lc),
                Err(_) => {
                    let (lc, alpha) = reduce_atom_any(atom)?;
                    atom_alpha = atom_alpha.max(alpha);
                    reduced_atoms.push(lc);
                }
            }
        }
    }
    let affine_mode = affine_needed || poly_needed || atom_alpha != Alphabet::Colored;
    if affine_mode {
        // re-reduce colored-route atoms in the affine/poly alphabet if any
        // produced scaled uppers
        let mut redo = false;
        for lc in &reduced_atoms {
            for w in lc.word_sums() {
                if w.upper != UpperLimit::k() {
                    redo = true;
                }
            }
        }
        if redo {
            reduced_atoms.clear();
            for atom in &plan.atoms {
                let lc = if poly_needed {
                    reduce_poly_factor(&affinize_atom(atom)?)?
                } else {
                    reduce_affine_factor(&affinize_atom(atom)?)?
                };
                reduced_atoms.push(lc);
            }
        }
    }
    for lc in reduced_atoms {
        summand = summand.mul(&lc);
    }
    for ws in &plan.plain_words {
        summand = summand.mul(&LinComb::single_word(ConstCoeff::one(), ws.clone()));
    }
    for (w, a, b) in &plan.words {
        if *b == 0 && !affine_mode {
            summand = summand.mul(&LinComb::single_word(
                ConstCoeff::one(),
                WordSum::new(w.clone(), UpperLimit::sym(*a, 0)?)?,
            ));
        } else {
            // shifted or affine-mode colored words go through the affine
            // multiple-upper reduction
            let word: Vec<(Scalar, Scalar)> = w
                .iter()
                .map(|l| match l {
                    Letter::Colored(c) => Ok((c.r.clone(), c.s.clone())),
                    _ => Err(Error::AlphabetMismatch),
                })
                .collect::<Result<_>>()?;
            if *a == 1 && *b == 0 {
                summand = summand.mul(&LinComb::single_word(
                    ConstCoeff::one(),
                    WordSum::new(w.clone(), UpperLimit::k())?,
                ));
            } else if word.len() == 1 && (*b != 0 || affine_mode) {
                let atom = SummandAtom::AffineUpperHarmonic {
                    p1: Rational::from(*a),
                    p2: Rational::from(*b),
                    r: word[0].0.clone(),
                    s: word[0].1.clone(),
                    alternating: false,
                };
                summand = summand.mul(&reduce_affine_factor(&atom)?);
            } else {
                let atom = SummandAtom::IntegerAffineUpperMultiple { p: *a, q: *b, word };
                summand = summand.mul(&reduce_affine_factor(&atom)?);
            }
        }
    }
    Ok(LevelSummand {
        z: plan.z.clone(),
        q: plan.q.clone(),
        affine_outer: true_affine,
        poly_outer: true_poly,
        summand,
    })
}

/// Scaled colored atoms re-expressed with affine uppers for the affine route.
fn affinize_atom(atom: &SummandAtom) -> Result<SummandAtom> {
    match atom {
        SummandAtom::RationalUpper { r, s, num, den: 1, floor: false, alternating } => {
            Ok(SummandAtom::AffineUpperHarmonic {
                p1: Rational::from(*num),
                p2: Rational::from(0),
                r: r.clone(),
                s: s.clone(),
                alternating: *alternating,
            })
        }
        other => Ok(other.clone()),
    }
}

// ---------- public entry points ----------

/// Reduce a parsed (finite) nested sum to a LinComb at a symbolic upper in k.
pub fn reduce_sum(s: &SumExpr) -> Result<LinComb> {
    if s.levels.iter().any(|l| l.upper == LevelUpper::Infinite) {
        return Err(Error::MalformedInput(
            "infinite sums go through the limit pipeline".into(),
        ));
    }
    // validate the weak simplex: innermost written last, each inner level
    // bounded by the previous variable, outermost bounded by k
    let outer = &s.levels[0];
    match outer.upper {
        LevelUpper::Outer(1, 0) => {}
        LevelUpper::Outer(_, _) if s.levels.len() == 1 => {
            return Err(Error::MalformedInput(
                "single sums must run up to k (use the upper-limit form in factors instead)"
                    .into(),
            ))
        }
        _ => return Err(Error::MalformedInput("outermost sum must run up to k".into())),
    }
    for i in 1..s.levels.len() {
        match &s.levels[i].upper {
            LevelUpper::Variable(v) if *v == s.levels[i - 1].var => {}
            _ => {
                return Err(Error::MalformedInput(
                    "inner sums must be bounded by the previous summation variable".into(),
                ))
            }
        }
    }
    // split the summand into signed product terms and process each
    let terms = distribute(&s.summand)?;
    let mut out = LinComb::zero();
    for (neg, factors) in terms {
        let lc = reduce_product(s, &factors)?;
        out = out.add(&if neg { lc.neg() } else { lc });
    }
    Ok(out)
}

fn reduce_product(s: &SumExpr, factors: &[Expr]) -> Result<LinComb> {
    // assign factors to levels
    let level_vars: Vec<&str> = s.levels.iter().map(|l| l.var.as_str()).collect();
    let mut per_level: Vec<Vec<Expr>> = vec![Vec::new(); s.levels.len()];
    let mut global: Vec<Expr> = Vec::new();
    for f in factors {
        let mut vars = Vec::new();
        variables(f, &mut vars);
        let used: Vec<usize> = level_vars
            .iter()
            .enumerate()
            .filter(|(_, v)| vars.iter().any(|x| x == *v))
            .map(|(i, _)| i)
            .collect();
        match used.len() {
            0 => {
                if let Some(v) = vars.first() {
                    return Err(Error::UnboundVariable(v.clone()));
                }
                global.push(f.clone());
            }
            1 => per_level[used[0]].push(f.clone()),
            _ => {
                return Err(Error::ReductionFailed(
                    "factors mixing two summation variables are out of scope".into(),
                ))
            }
        }
    }
    let mut coeff = ConstCoeff::one();
    for g in &global {
        coeff = coeff.mul(&eval_expr_const(g)?);
    }
    if s.levels.len() == 1 {
        let plan = plan_level(&per_level[0], &s.levels[0].var)?;
        return Ok(reduce_single_level(&plan)?.scale(&coeff));
    }
    // multi-level: innermost first
    let mut levels = Vec::new();
    for (i, lv) in s.levels.iter().enumerate().rev() {
        let plan = plan_level(&per_level[i], &lv.var)?;
        if !plan.words.iter().all(|(_, _, b)| *b == 0) {
            return Err(Error::ReductionFailed(
                "shifted upper limits inside nested sums are out of scope".into(),
            ));
        }
        let mut ls = build_level_summand(&plan)?;
        ls.summand = ls.summand.scale(&plan.coeff);
        levels.push(ls);
    }
    Ok(nested_convolve_general(&levels)?.scale(&coeff))
}

/// Limit pipeline for infinite sums: reduce the finite truncation, then
/// peel divergences and pass to the limit.
pub fn reduce_limit(s: &SumExpr) -> Result<(ConstCoeff, String)> {
    let mut finite = s.clone();
    for l in &mut finite.levels {
        if l.upper == LevelUpper::Infinite {
            l.upper = LevelUpper::Outer(1, 0);
        }
    }
    let lc = reduce_sum(&finite)?;
    peel_reduce(&lc, crate::prec::Prec::default())
}

/// Convenience: parse and reduce.
pub fn reduce_text(text: &str) -> Result<LinComb> {
    reduce_sum(&parse_sum(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeval::eval_lincomb;
    use crate::prec::{rel_err, Prec};
    use crate::sumdsl::eval_sum_direct;

    fn check_reduce(text: &str, points: &[i64]) {
        let prec = Prec::new(50);
        let s = parse_sum(text).unwrap();
        let lc = reduce_sum(&s).unwrap_or_else(|e| panic!("{text}: {e}"));
        for &k in points {
            let direct = eval_sum_direct(&s, k, prec).unwrap();
            let red = eval_lincomb(&lc, k, prec).unwrap();
            assert!(
                rel_err(&direct, &red) < 1e-44,
                "{text} at k={k}: {} vs {}",
                crate::prec::fmt_complex(&direct, 25),
                crate::prec::fmt_complex(&red, 25)
            );
        }
    }

    #[test]
    fn basic_finite_routes() {
        check_reduce("sum(n,1,k) H(n)", &[1, 5, 9]);
        check_reduce("sum(n,1,k) 2^n * n^3 * H(n;2;-1)", &[3, 7]);
        check_reduce("sum(n,1,k) H(n) * A(n)^2", &[4, 9]);
        check_reduce("sum(n,1,k) (1/2)^n * Hm(n;[2,1];[1,-1]) / n^2", &[3, 8]);
        check_reduce("sum(n,1,k) Hstar(n;[1,2];[1,-1])", &[3, 8]);
        check_reduce("sum(n,1,k) (H(n;2;1) - zeta(2)) / n", &[3, 8]);
    }

    #[test]
    fn atoms_in_the_pipeline() {
        check_reduce("sum(n,1,k) hzeta(2;n+1) * H(n;1;-1)", &[3, 8]);
        check_reduce("sum(n,1,k) 3^n * n^4 * hzeta(2;n+1) * H(n;1;-1)", &[3, 6]);
        check_reduce("sum(n,1,k) psi(n+1) / n^2", &[3, 8]);
        check_reduce("sum(n,1,k) fib(n) * H(n) / 3^n", &[3, 8]);
        check_reduce("sum(n,1,k) ind(n;3;1) * H(n)", &[3, 8]);
        check_reduce("sum(n,1,k) floor((3*n+2)/5) * H(n) / n^3", &[3, 8]);
        check_reduce("sum(n,1,k) cospi(n/3) * H(n;2;1)", &[3, 8]);
        check_reduce("sum(n,1,k) stirling2(n;3) * n / 5^n", &[3, 8]);
        check_reduce("sum(n,1,k) Hyp(n;1;2;1) / n^2", &[3, 8]);
        check_reduce("sum(n,1,k) lerch(1/3;2;n+1) * H(n)", &[3, 8]);
    }

    #[test]
    fn aligned_and_shift_routes() {
        check_reduce("sum(n,1,k) (1/2)^n * (2*n+3)^(-2) * H(2*n+3) * H(2*n+3;2;-1)", &[3, 6]);
        check_reduce("sum(n,1,k) (1/3)^n * (3*n-2)^2 * Hm(3*n-2;[1,2];[1,-1])", &[2, 5]);
        check_reduce("sum(n,1,k) (1/2)^n * (2*n+1)^I * H(2*n;2;1)", &[3, 6]);
        check_reduce("sum(n,1,k) (2/3)^n * (2*n)^(-2) * H(2*n+1;2;1) * A(2*n+1)", &[3, 6]);
        check_reduce("sum(n,1,k) (1/2)^n * (3*n-1)^(-1) * H(3*n;1;1)", &[3, 6]);
        check_reduce("sum(n,1,k) (1/2)^n * (3*n)^(-2) * Hm(3*n-1;[1,2];[1,1])", &[3, 6]);
    }

    #[test]
    fn scaled_and_nested_routes() {
        check_reduce("sum(n,1,k) H(n) * H(3*n;2;1/3)", &[2, 5]);
        check_reduce("sum(n,1,k) n^1 * H(2*n;2;1) * H(3*n;1;-1) / 2^n", &[2, 4]);
        check_reduce("sum(n2,1,k) sum(n1,1,n2) H(2*n1)", &[2, 5]);
        check_reduce("sum(n2,1,k) sum(n1,1,n2) n1^2 * H(n1) * H(n2) / n2^3", &[2, 5]);
        check_reduce(
            "sum(n3,1,k) sum(n2,1,n3) sum(n1,1,n2) n1^2 / n2^3 * n3^4 * Hyp(n3;1;1;1)",
            &[2, 4],
        );
    }

    #[test]
    fn affine_and_poly_routes() {
        check_reduce("sum(n,1,k) 2^n * (3*n+1)^5", &[3, 8]);
        check_reduce("sum(n,1,k) (-1)^n * (2*n-1)^(-3) * H(n;2;I)", &[3, 8]);
        check_reduce("sum(n,1,k) H(n;2;1/3) / (2*n+10)^(1/2+I)", &[2, 5]);
        check_reduce("sum(n,1,k) zsum(n;2;1/2) * H(n) / (3*n+1)", &[3, 6]);
        check_reduce("sum(n,1,k) 2^n * (n^2+n+1)^3", &[3, 8]);
        check_reduce("sum(n,1,k) (1/3)^n * H(n;2;1/5) / (3*n^2+6*n+1)^(1/2+I)", &[2, 5]);
        check_reduce("sum(n,1,k) mathieu(n;3/2;1;1/2) / (n^2+1)", &[2, 5]);
        check_reduce(
            "sum(n,1,k) G(n;[[2],[3]];[1/2,-1];[[[2,1]],[[3,-1]]]) * (2*n+1)^(-2)",
            &[2, 5],
        );
        check_reduce("sum(n,1,k) H(2*n+1;2;1/2) / (2*n+1)^2", &[2, 5]);
        check_reduce("sum(n,1,k) H(n/2;2;1/3) * H(n)", &[2, 5]);
        check_reduce("sum(n,1,k) A(floor(n/2)) * H(n) / n^2", &[3, 6]);
    }

    #[test]
    fn nested_affine_levels() {
        check_reduce(
            "sum(n2,1,k) sum(n1,1,n2) 2^n1 * (2*n1+1)^(-3) * (-1)^n2 * H(n2;2;I)",
            &[2, 5],
        );
    }

    #[test]
    fn limit_pipeline_peeling_example() {
        let s = parse_sum("sum(n,1,inf) (H(n;2;1) - zeta(2)) / n").unwrap();
        let (limit, _report) = reduce_limit(&s).unwrap();
        let expect = ConstCoeff::symbol(crate::constants::ConstSym::Zeta(vec![
            Scalar::from_int(2),
            Scalar::from_int(1),
        ]))
        .neg();
        assert_eq!(limit, expect);
    }

    #[test]
    fn unknown_variable_rejected() {
        let s = parse_sum("sum(n,1,k) H(n) * m^2").unwrap();
        assert!(matches!(reduce_sum(&s), Err(Error::UnboundVariable(_))));
    }
}
