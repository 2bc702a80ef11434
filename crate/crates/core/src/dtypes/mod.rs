//! Number formats, scalars and strided matrix views.
//!
//! Every buffer is stored as a flat array of real values (`f32` or `f64`);
//! complex elements are interleaved `re, im`. Views carry strides in units of
//! their own element type, so a complex view over an `f64` buffer steps two
//! reals per unit of stride. This is what lets [`real_projection`] and
//! [`real_flatten`] be pure metadata changes.

mod matrix;
mod view;

pub use matrix::{Matrix, StorageKind};
pub use view::{
    induced_transpose, real_flatten, real_projection, Elems, ElemsMut, FlattenAxis, Layout, MatrixView, MatrixViewMut,
    Part, StorageFormat,
};

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{GemmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    /// Unit roundoff.
    pub fn eps(self) -> f64 {
        match self {
            Precision::Single => 2f64.powi(-24),
            Precision::Double => 2f64.powi(-53),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Precision::Single => 's',
            Precision::Double => 'd',
        }
    }

    pub fn from_letter(c: char) -> Option<Precision> {
        match c {
            's' => Some(Precision::Single),
            'd' => Some(Precision::Double),
            _ => None,
        }
    }

    /// Round a double to this precision.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::Single => v as f32 as f64,
            Precision::Double => v,
        }
    }
}

/// A (domain, precision) pair: one of `s`, `d`, `c`, `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Datatype {
    pub domain: Domain,
    pub precision: Precision,
}

impl Datatype {
    pub const S: Datatype = Datatype::new(Domain::Real, Precision::Single);
    pub const D: Datatype = Datatype::new(Domain::Real, Precision::Double);
    pub const C: Datatype = Datatype::new(Domain::Complex, Precision::Single);
    pub const Z: Datatype = Datatype::new(Domain::Complex, Precision::Double);

    pub const ALL: [Datatype; 4] = [Datatype::S, Datatype::D, Datatype::C, Datatype::Z];

    pub const fn new(domain: Domain, precision: Precision) -> Datatype {
        Datatype { domain, precision }
    }

    pub fn is_complex(self) -> bool {
        self.domain == Domain::Complex
    }

    /// Number of reals per element.
    pub fn width(self) -> usize {
        match self.domain {
            Domain::Real => 1,
            Domain::Complex => 2,
        }
    }

    pub fn with_domain(self, domain: Domain) -> Datatype {
        Datatype { domain, ..self }
    }

    pub fn with_precision(self, precision: Precision) -> Datatype {
        Datatype { precision, ..self }
    }

    pub fn letter(self) -> char {
        match (self.domain, self.precision) {
            (Domain::Real, Precision::Single) => 's',
            (Domain::Real, Precision::Double) => 'd',
            (Domain::Complex, Precision::Single) => 'c',
            (Domain::Complex, Precision::Double) => 'z',
        }
    }

    pub fn from_letter(c: char) -> Option<Datatype> {
        Datatype::ALL.into_iter().find(|d| d.letter() == c)
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A GEMM scalar (alpha or beta). The stored components are already rounded
/// to `dtype`'s precision, and `im` is zero for real datatypes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalar {
    pub re: f64,
    pub im: f64,
    pub dtype: Datatype,
}

impl Scalar {
    pub fn new(re: f64, im: f64, dtype: Datatype) -> Scalar {
        let p = dtype.precision;
        let im = if dtype.is_complex() { p.round(im) } else { 0.0 };
        Scalar {
            re: p.round(re),
            im,
            dtype,
        }
    }

    pub fn real(v: f64) -> Scalar {
        Scalar::new(v, 0.0, Datatype::D)
    }

    pub fn complex(re: f64, im: f64) -> Scalar {
        Scalar::new(re, im, Datatype::Z)
    }

    pub fn one() -> Scalar {
        Scalar::real(1.0)
    }

    pub fn zero() -> Scalar {
        Scalar::real(0.0)
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }

    pub fn is_real(&self) -> bool {
        self.im == 0.0
    }
}

/// Round to `to.precision`; drop the imaginary part when `to` is real.
pub fn typecast_scalar(s: Scalar, to: Datatype) -> Scalar {
    Scalar::new(s.re, s.im, to)
}

/// The eight mixed-domain cases, named after which of A, B, C are complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseId {
    Zero,
    OneA,
    OneB,
    OneC,
    TwoAB,
    TwoAC,
    TwoBC,
    Three,
}

impl CaseId {
    pub const ALL: [CaseId; 8] = [
        CaseId::Zero,
        CaseId::OneA,
        CaseId::OneB,
        CaseId::OneC,
        CaseId::TwoAB,
        CaseId::TwoAC,
        CaseId::TwoBC,
        CaseId::Three,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Zero => "0",
            CaseId::OneA => "1a",
            CaseId::OneB => "1b",
            CaseId::OneC => "1c",
            CaseId::TwoAB => "2ab",
            CaseId::TwoAC => "2ac",
            CaseId::TwoBC => "2bc",
            CaseId::Three => "3",
        }
    }

    /// The case obtained by computing `C^T := B^T A^T` instead.
    pub fn transposed(self) -> CaseId {
        match self {
            CaseId::OneA => CaseId::OneB,
            CaseId::OneB => CaseId::OneA,
            CaseId::TwoAC => CaseId::TwoBC,
            CaseId::TwoBC => CaseId::TwoAC,
            other => other,
        }
    }

    /// Cases that only accept a real alpha.
    pub fn restricts_alpha(self) -> bool {
        !matches!(self, CaseId::Zero | CaseId::Three)
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

mod sealed {
    pub trait Sealed {}
    impl Sealed for f32 {}
    impl Sealed for f64 {}
}

/// Real floating-point element type used for storage and computation.
/// Implemented for `f32` and `f64` only.
pub trait Real:
    sealed::Sealed
    + Copy
    + Send
    + Sync
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const PRECISION: Precision;
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

pub(crate) fn require_complex(dtype: Datatype) -> Result<()> {
    if dtype.is_complex() {
        Ok(())
    } else {
        Err(GemmError::Domain {
            expected: Domain::Complex,
        })
    }
}
