use thiserror::Error;

use crate::dtypes::{CaseId, Domain};

/// Everything that can go wrong between building a view and finishing a GEMM.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GemmError {
    #[error("negative or zero stride (rs={rs}, cs={cs})")]
    InvalidStride { rs: isize, cs: isize },

    #[error("view addresses the same element twice (m={m}, n={n}, rs={rs}, cs={cs})")]
    SelfAliasing { m: usize, n: usize, rs: usize, cs: usize },

    #[error("view extends past its buffer: needs {needed} elements, buffer has {len}")]
    OutOfBounds { needed: usize, len: usize },

    #[error("buffer precision does not match the view datatype")]
    BufferMismatch,

    #[error("operation requires a {expected:?}-domain view")]
    Domain { expected: Domain },

    #[error("cannot flatten complex view with rs={rs}, cs={cs} along {axis}")]
    FlattenInfeasible { rs: usize, cs: usize, axis: &'static str },

    #[error("nonconformal dimensions: C is {m}x{n}, A is {am}x{ak}, B is {bk}x{bn}")]
    DimensionMismatch {
        m: usize,
        n: usize,
        am: usize,
        ak: usize,
        bk: usize,
        bn: usize,
    },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),

    #[error("case {case} supports only real alpha; got imaginary part {im}")]
    UnsupportedComplexAlpha { case: CaseId, im: f64 },

    #[error("packing format {format} requires a complex source")]
    FormatRequiresComplex { format: &'static str },

    #[error("complex scale factor is only supported with the 1e/1r packing formats")]
    ComplexScaleWithStandard,

    #[error("packed operand formats do not match the {variant} 1m variant")]
    FormatVariantMismatch { variant: &'static str },

    #[error("index ({i}, {l}) out of range for packed block of {rows}x{cols}")]
    PackedIndex {
        i: usize,
        l: usize,
        rows: usize,
        cols: usize,
    },

    #[error("output matrix overlaps an input operand")]
    Aliasing,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid case label {0:?}")]
    BadLabel(String),
}

pub type Result<T> = std::result::Result<T, GemmError>;
