use std::marker::PhantomData;

use crate::dtypes::{ElemsMut, Layout, MatrixViewMut, Precision, Real};
use crate::error::{GemmError, Result};

use super::TileMut;

/// How the real product computed by the microkernels lands in C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputKind {
    /// C is real; real coordinate (r, c) is element (r, c).
    Real,
    /// C is complex; real row `2i + p` is part `p` of row `i`.
    InterleavedRows,
    /// C is complex; real column `2j + p` is part `p` of column `j`.
    InterleavedCols,
}

/// Real (rs, cs) of the product space of `layout` under `kind`, when that
/// space is a plain strided view.
pub fn product_strides(layout: &Layout, kind: OutputKind) -> Option<(usize, usize)> {
    let l = layout;
    match kind {
        OutputKind::Real => Some((l.rs, l.cs)),
        OutputKind::InterleavedRows if l.rs == 1 || l.m <= 1 => Some((1, 2 * l.cs)),
        OutputKind::InterleavedCols if l.cs == 1 || l.n <= 1 => Some((2 * l.rs, 1)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy)]
enum RawOut {
    F32(*mut f32),
    F64(*mut f64),
}

/// Shared handle on C used by the macrokernel threads.
///
/// Threads only ever touch disjoint real coordinates, and distinct real
/// coordinates map to distinct buffer slots because view strides are
/// injective.
#[derive(Debug)]
pub(crate) struct OutputTarget<'a> {
    raw: RawOut,
    layout: Layout,
    kind: OutputKind,
    _life: PhantomData<&'a mut ()>,
}

// SAFETY: see the type-level comment; every write goes through an `unsafe`
// method whose contract forbids concurrent access to the same coordinate.
unsafe impl Send for OutputTarget<'_> {}
unsafe impl Sync for OutputTarget<'_> {}

impl<'a> OutputTarget<'a> {
    pub(crate) fn new(c: &'a mut MatrixViewMut<'_>, kind: OutputKind) -> Result<OutputTarget<'a>> {
        let layout = *c.layout();
        let complex = layout.dtype.is_complex();
        if complex == (kind == OutputKind::Real) {
            return Err(GemmError::Domain {
                expected: if complex {
                    crate::dtypes::Domain::Real
                } else {
                    crate::dtypes::Domain::Complex
                },
            });
        }
        let raw = match c.elems_mut() {
            ElemsMut::F32(s) => RawOut::F32(s.as_mut_ptr()),
            ElemsMut::F64(s) => RawOut::F64(s.as_mut_ptr()),
        };
        Ok(OutputTarget {
            raw,
            layout,
            kind,
            _life: PhantomData,
        })
    }

    pub(crate) fn precision(&self) -> Precision {
        self.layout.dtype.precision
    }

    pub(crate) fn kind(&self) -> OutputKind {
        self.kind
    }

    /// Dimensions of the real product space.
    pub(crate) fn real_dims(&self) -> (usize, usize) {
        let (m, n) = (self.layout.m, self.layout.n);
        match self.kind {
            OutputKind::Real => (m, n),
            OutputKind::InterleavedRows => (2 * m, n),
            OutputKind::InterleavedCols => (m, 2 * n),
        }
    }

    #[inline(always)]
    fn offset(&self, r: usize, c: usize) -> usize {
        match self.kind {
            OutputKind::Real => self.layout.real_offset(r, c),
            OutputKind::InterleavedRows => self.layout.real_offset(r / 2, c) + r % 2,
            OutputKind::InterleavedCols => self.layout.real_offset(r, c / 2) + c % 2,
        }
    }

    pub(crate) fn real_strides(&self) -> Option<(usize, usize)> {
        product_strides(&self.layout, self.kind)
    }

    /// # Safety
    /// No other thread may access the same coordinate concurrently.
    #[inline(always)]
    pub(crate) unsafe fn load(&self, r: usize, c: usize) -> f64 {
        let o = self.offset(r, c);
        match self.raw {
            RawOut::F32(p) => *p.add(o) as f64,
            RawOut::F64(p) => *p.add(o),
        }
    }

    /// Stores `v` rounded to C's precision.
    ///
    /// # Safety
    /// As for [`OutputTarget::load`].
    #[inline(always)]
    pub(crate) unsafe fn store(&self, r: usize, c: usize, v: f64) {
        let o = self.offset(r, c);
        match self.raw {
            RawOut::F32(p) => *p.add(o) = v as f32,
            RawOut::F64(p) => *p.add(o) = v,
        }
    }

    /// The `m x n` real window at (r0, c0) as a kernel tile, when C's
    /// precision is `T` and the window is a plain strided view.
    ///
    /// # Safety
    /// As for [`OutputTarget::load`], for every coordinate of the window,
    /// for the lifetime of the returned tile.
    pub(crate) unsafe fn direct_tile<T: Real>(
        &self,
        r0: usize,
        c0: usize,
        m: usize,
        n: usize,
    ) -> Option<TileMut<'_, T>> {
        if T::PRECISION != self.precision() {
            return None;
        }
        let (rs, cs) = self.real_strides()?;
        let o = self.offset(r0, c0);
        // T is f32 or f64 (sealed) and matches the buffer precision.
        let ptr = match self.raw {
            RawOut::F32(p) => p.add(o) as *mut T,
            RawOut::F64(p) => p.add(o) as *mut T,
        };
        Some(TileMut::from_raw(ptr, rs, cs, m, n))
    }
}
