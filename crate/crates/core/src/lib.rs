//! Symbolic summation of Euler-type sums over monoidal harmonic alphabets.

pub mod alphabet;
pub mod constants;
pub mod error;
pub mod closure;
pub mod lifting;
pub mod limits;
pub mod lincomb;
pub mod normalform;
pub mod numeval;
pub mod pipeline;
pub mod prec;
pub mod quasishuffle;
pub mod reducers;
pub mod scalars;
pub mod sumdsl;

pub use alphabet::{Alphabet, Letter, UpperLimit, WordSum};
pub use constants::{ConstCoeff, ConstSym};
pub use error::{Error, Result};
pub use lincomb::{Boundary, LcTerm, LinComb};
pub use prec::Prec;
pub use scalars::Scalar;
