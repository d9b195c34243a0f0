use thiserror::Error;

/// Errors across the engine. Variant names follow the operation contracts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero cannot be raised to a negative power")]
    ZeroToNegativePower,
    #[error("value leaves the exact scalar subring: {0}")]
    NonCanonicalizable(String),
    #[error("letters come from different alphabets")]
    AlphabetMismatch,
    #[error("embedding only goes colored -> affine -> poly")]
    IllegalDirection,
    #[error("word sums have different upper limits")]
    UpperMismatch,
    #[error("unsupported summand atom: {0}")]
    UnsupportedAtom(String),
    #[error("reduction requires a non-principal branch choice: {0}")]
    BranchAmbiguity(String),
    #[error("polynomial factor vanishes at n = {0}")]
    PolynomialVanishes(i64),
    #[error("summand contains an unreducible factor: {0}")]
    ReductionFailed(String),
    #[error("upper-shift theorem needs integer powers, got {0}")]
    NonIntegerWeight(String),
    #[error("term has no finite limit: {0}")]
    DivergentTerm(String),
    #[error("boundary factor {0} has no finite limit")]
    BoundaryDiverges(String),
    #[error("divergent words survive peeling: {0}")]
    PeelingStuck(String),
    #[error("shifted-denominator coefficients do not cancel: sum = {0}")]
    CancellationFails(String),
    #[error("prefix product of arguments vanishes at position {0}")]
    SingularPrefix(usize),
    #[error("G-word letter outside {{-1,0,1}}: {0}")]
    LetterOutOfAlphabet(String),
    #[error("letter is singular at n = {0}")]
    SingularLetter(i64),
    #[error("constant is not classified convergent: {0}")]
    NotConvergent(String),
    #[error("cannot reach {0} digits within the truncation cap")]
    PrecisionUnreachable(String),
    #[error("unbound variable: {0}")]
    UnboundVariable(String),
    #[error("syntax error at {line}:{col}: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("unknown function: {0}")]
    UnknownFunction(String),
    #[error("wrong arity for {0}")]
    ArityError(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
