//! High-precision numeric oracle: direct evaluation of word sums, linear
//! combinations, and constant symbols, plus identity verification.

use crate::alphabet::{Letter, WordSum};
use crate::constants::{ConstCoeff, ConstSym};
use crate::error::{Error, Result};
use crate::lincomb::{Boundary, LcTerm, LinComb};
use crate::prec::{rel_err, Prec};
use crate::scalars::Scalar;
use once_cell::sync::Lazy;
use rug::ops::Pow;
use rug::{Complex, Float};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Mutex;

/// Truncation cap per nesting level for constant evaluation.
const TRUNCATION_CAP: i64 = 1_000_000;

/// Evaluate a word over concrete letters at upper limit N by the depth-wise
/// prefix recursion: f_t(n) = f_t(n-1) + a_t(n) f_{t+1}(n-1), cost O(N*depth).
pub fn eval_word(word: &[Letter], n_upper: i64, prec: Prec) -> Result<Complex> {
    if n_upper < 0 {
        return Ok(prec.zero());
    }
    let n = n_upper as usize;
    // inner[j] = value of the word suffix starting at level t, at upper limit j
    let mut inner: Vec<Complex> = vec![prec.one(); n + 1];
    for letter in word.iter().rev() {
        let mut cur: Vec<Complex> = Vec::with_capacity(n + 1);
        cur.push(prec.zero());
        let mut acc = prec.zero();
        for j in 1..=n {
            let v = letter.value(j as i64, prec)?;
            acc += v * &inner[j - 1];
            cur.push(acc.clone());
        }
        inner = cur;
    }
    Ok(inner[n].clone())
}

/// Evaluate a word sum at binding k.
pub fn eval_word_sum(ws: &WordSum, k: i64, prec: Prec) -> Result<Complex> {
    eval_word(&ws.word, ws.upper.bind(k), prec)
}

fn eval_boundary(b: &Boundary, k: i64, prec: Prec) -> Result<Complex> {
    let mut v = prec.cpow(&b.z.numeric(prec), &prec.from_i64(k));
    if !b.q.is_zero() {
        if k <= 0 {
            return Err(Error::SingularLetter(k));
        }
        v *= prec.int_pow(k, &b.q.numeric(prec));
    }
    for l in &b.extra {
        v *= l.value(k, prec)?;
    }
    Ok(v)
}

pub fn eval_term(t: &LcTerm, k: i64, prec: Prec) -> Result<Complex> {
    let mut v = eval_const_coeff(&t.coeff, prec)?;
    v *= eval_boundary(&t.boundary, k, prec)?;
    for w in &t.factors {
        v *= eval_word_sum(w, k, prec)?;
    }
    Ok(v)
}

/// Term-wise evaluation of a linear combination at binding k.
pub fn eval_lincomb(lc: &LinComb, k: i64, prec: Prec) -> Result<Complex> {
    let mut acc = prec.zero();
    for t in lc.terms() {
        acc += eval_term(t, k, prec)?;
    }
    Ok(acc)
}

// ---------- constants ----------

static CONST_CACHE: Lazy<Mutex<HashMap<(String, u32), Complex>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

pub fn eval_const_coeff(c: &ConstCoeff, prec: Prec) -> Result<Complex> {
    let mut acc = prec.zero();
    for (mono, coeff) in c.monomials() {
        let mut v = coeff.numeric(prec);
        for (sym, e) in mono {
            let s = eval_const_sym(sym, prec)?;
            v *= prec.ipow(&s, *e as i64);
        }
        acc += v;
    }
    Ok(acc)
}

pub fn eval_const_sym(sym: &ConstSym, prec: Prec) -> Result<Complex> {
    let key = (format!("{sym:?}"), prec.bits);
    if let Some(v) = CONST_CACHE.lock().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let v = eval_const_sym_uncached(sym, prec)?;
    CONST_CACHE.lock().unwrap().insert(key, v.clone());
    Ok(v)
}

fn eval_const_sym_uncached(sym: &ConstSym, prec: Prec) -> Result<Complex> {
    match sym {
        ConstSym::Pi => Ok(Complex::with_val(prec.bits, (prec.pi(), 0))),
        ConstSym::EulerGamma => Ok(Complex::with_val(prec.bits, (prec.euler_gamma(), 0))),
        ConstSym::Log(s) => {
            let v = s.numeric(prec);
            if v.is_zero() {
                return Err(Error::NotConvergent("log(0)".into()));
            }
            Ok(v.ln())
        }
        ConstSym::Zeta(rs) => {
            let letters: Vec<Letter> = rs
                .iter()
                .map(|r| Letter::colored(r.clone(), Scalar::one()).unwrap())
                .collect();
            eval_mpl_letters(&letters, prec)
        }
        ConstSym::Li(rs, zs) => {
            if rs.len() != zs.len() {
                return Err(Error::ArityError("Li weight/argument mismatch".into()));
            }
            let letters: Vec<Letter> = rs
                .iter()
                .zip(zs)
                .map(|(r, z)| {
                    Letter::colored(r.clone(), z.clone())
                        .map_err(|_| Error::NotConvergent("Li with zero argument".into()))
                })
                .collect::<Result<_>>()?;
            eval_mpl_letters(&letters, prec)
        }
        ConstSym::LiAff(w) => {
            let letters: Vec<Letter> = w.iter().cloned().map(Letter::Affine).collect();
            eval_mpl_letters(&letters, prec)
        }
        ConstSym::LiPb(w) => {
            let letters: Vec<Letter> = w.iter().cloned().map(Letter::Poly).collect();
            eval_mpl_letters(&letters, prec)
        }
        ConstSym::HNonInteger { arg, power, color } => eval_h_noninteger(arg, power, color, prec),
    }
}

/// Truncated nested summation with a tail bound from the leading effective
/// weight. The reported value is within 10^-digits of the limit, or the
/// evaluation fails with `PrecisionUnreachable`.
fn eval_mpl_letters(letters: &[Letter], prec: Prec) -> Result<Complex> {
    use crate::limits::{classify_convergence_letters, Convergence};
    let verdict = classify_convergence_letters(letters, prec);
    if verdict.status == Convergence::NotEstablished {
        return Err(Error::NotConvergent(format!("{} letters", letters.len())));
    }
    // Fast exact path: zeta at a single real weight uses MPFR directly.
    if letters.len() == 1 {
        if let Letter::Colored(c) = &letters[0] {
            if c.s.is_one() {
                if let Some(q) = c.r.as_rational() {
                    let r = prec.float_from_rational(&q);
                    return Ok(Complex::with_val(prec.bits, (r.zeta(), 0)));
                }
            }
            // Li_1(z) = -log(1 - z)
            if c.r.is_one() {
                let z = c.s.numeric(prec);
                let one = prec.one();
                return Ok(-(one - z).ln());
            }
        }
    }
    let n = truncation_point(letters, &verdict, prec)?;
    eval_word(letters, n, prec)
}

/// Pick N so that the rigorous tail bound drops below 10^-digits.
///
/// For a leading letter with |color product| = lam and effective weight w:
/// |tail| <= C * sum_{n>N} lam^n n^{d-1-w} (inner sums bounded crudely by
/// n^{d-1} times bounded letter values). We search for the smallest power of
/// two below the cap whose bound is small enough.
fn truncation_point(
    letters: &[Letter],
    verdict: &crate::limits::ConvergenceVerdict,
    prec: Prec,
) -> Result<i64> {
    let digits = prec.digits as f64;
    let d = letters.len() as f64;
    // leading decay data from the verdict witness
    let lam = verdict.leading_modulus;
    let w = verdict.leading_effective_weight;
    let p = verdict.tail_exponent;
    let mut n: i64 = 64;
    while n <= TRUNCATION_CAP {
        let nf = n as f64;
        let log10_tail = if lam < 1.0 - 1e-12 {
            // geometric decay: lam^n * poly
            nf * lam.log10() + (d + w.abs()) * nf.log10().max(1.0)
        } else {
            // |Lambda_1| = 1: polynomial decay n^{-p} with log corrections
            if p <= 0.0 {
                return Err(Error::PrecisionUnreachable(format!(
                    "tail exponent {p} at depth {d}"
                )));
            }
            -p * nf.log10() + d * nf.log10().log10().max(0.0) + 2.0
        };
        if log10_tail < -digits {
            return Ok(n);
        }
        n *= 2;
    }
    Err(Error::PrecisionUnreachable(format!(
        "needs more than {TRUNCATION_CAP} terms per level"
    )))
}

/// H_x^{(r)}(s) at non-integer x. For r = 1, s = 1 this is psi(x+1) + gamma;
/// general (r, s) go through the Lerch tail evaluated by direct summation.
fn eval_h_noninteger(arg: &Scalar, power: &Scalar, color: &Scalar, prec: Prec) -> Result<Complex> {
    let x = arg.numeric(prec);
    if !x.imag().is_zero() {
        return Err(Error::NotConvergent(
            "non-real argument for the harmonic continuation".into(),
        ));
    }
    if power.is_one() && color.is_one() {
        let xf = x.real().clone() + 1u32;
        let v = xf.digamma() + prec.euler_gamma();
        return Ok(Complex::with_val(prec.bits, (v, 0)));
    }
    // H_x^{(r)}(s) = Li_r(s) - s^{x+1} Phi(s, r, x+1), |s| < 1 for the series
    let s = color.numeric(prec);
    let smod = s.clone().abs().real().to_f64();
    if smod >= 1.0 - 1e-12 && !(color.is_one() && power_re_gt1(power, prec)) {
        return Err(Error::NotConvergent("Lerch tail needs |s| < 1".into()));
    }
    let li = eval_const_sym(
        &ConstSym::Li(vec![power.clone()], vec![color.clone()]),
        prec,
    )?;
    let r = power.numeric(prec);
    let mut phi = prec.zero();
    let x1 = x.clone() + 1u32;
    let mut m = 0i64;
    let tol = Float::with_val(prec.bits, 10).pow(-(prec.digits as i64 + 5));
    loop {
        let base: Complex = x1.clone() + Float::with_val(prec.bits, m);
        let term = prec.cpow(&s, &prec.from_i64(m)) * prec.cpow(&base, &(-r.clone()));
        let tmag = term.clone().abs().real().clone();
        phi += term;
        m += 1;
        if m > 64 && (tmag < tol || m > TRUNCATION_CAP) {
            break;
        }
    }
    let sx1 = prec.cpow(&s, &x1);
    Ok(li - sx1 * phi)
}

fn power_re_gt1(power: &Scalar, prec: Prec) -> bool {
    power.numeric(prec).real().to_f64() > 1.0
}

// ---------- verification ----------

/// One record of a verification report: machine-readable JSON line.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyRecord {
    pub id: String,
    pub k: i64,
    pub lhs: String,
    pub rhs: String,
    pub relerr: f64,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub records: Vec<VerifyRecord>,
    pub max_relerr: f64,
    pub pass: bool,
}

/// Evaluate both sides at each point; pass iff the relative error stays below
/// tol everywhere. Evaluation errors are recorded per point, not thrown.
pub fn verify_values<L, R>(id: &str, lhs: L, rhs: R, points: &[i64], prec: Prec, tol: f64) -> VerifyReport
where
    L: Fn(i64) -> Result<Complex>,
    R: Fn(i64) -> Result<Complex>,
{
    let mut records = Vec::with_capacity(points.len());
    let mut max_err = 0.0f64;
    let mut pass = true;
    for &k in points {
        match (lhs(k), rhs(k)) {
            (Ok(a), Ok(b)) => {
                let e = rel_err(&a, &b);
                max_err = max_err.max(e);
                let ok = e <= tol;
                pass &= ok;
                records.push(VerifyRecord {
                    id: id.to_string(),
                    k,
                    lhs: crate::prec::fmt_complex(&a, prec.digits.min(30)),
                    rhs: crate::prec::fmt_complex(&b, prec.digits.min(30)),
                    relerr: e,
                    status: if ok { "pass".into() } else { "fail".into() },
                });
            }
            (la, rb) => {
                let msg = match (&la, &rb) {
                    (Err(e), _) => format!("lhs: {e}"),
                    (_, Err(e)) => format!("rhs: {e}"),
                    _ => unreachable!(),
                };
                pass = false;
                records.push(VerifyRecord {
                    id: id.to_string(),
                    k,
                    lhs: String::new(),
                    rhs: String::new(),
                    relerr: f64::INFINITY,
                    status: format!("error: {msg}"),
                });
            }
        }
    }
    VerifyReport { records, max_relerr: max_err, pass }
}
