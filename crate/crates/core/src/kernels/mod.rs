//! Portable real-domain microkernels and the virtual-microkernel layer.

mod output;
mod virtual_ukr;

pub(crate) use output::OutputTarget;
pub use output::{product_strides, OutputKind};
pub(crate) use virtual_ukr::ukr_tile;
pub use virtual_ukr::{virtual_ukr_1m, virtual_ukr_temp, OneMVariant};

use std::marker::PhantomData;

use crate::dtypes::{Precision, Real};
use crate::error::{GemmError, Result};

/// Largest supported register block in either dimension.
pub const MAX_REG: usize = 16;

/// Which way the microkernel's accumulators are oriented, and therefore which
/// storage of C it reads and writes efficiently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IoPreference {
    Row,
    Column,
}

impl IoPreference {
    pub fn name(self) -> &'static str {
        match self {
            IoPreference::Row => "row",
            IoPreference::Column => "column",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UkrDescriptor {
    pub precision: Precision,
    pub mr: usize,
    pub nr: usize,
    pub preference: IoPreference,
}

/// Floating-point operation tally; one multiply-add counts as two.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    count: u64,
}

impl FlopCounter {
    pub fn new() -> FlopCounter {
        FlopCounter::default()
    }

    pub fn add(&mut self, flops: u64) {
        self.count += flops;
    }

    pub fn merge(&mut self, other: &FlopCounter) {
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }
}

/// One MR x k slice of a packed left block and one k x NR slice of a packed
/// right block.
#[derive(Debug, Clone, Copy)]
pub struct MicroPanelPair<'a, T> {
    pub a: &'a [T],
    pub b: &'a [T],
    pub k: usize,
}

/// Strided, possibly partial (m <= MR, n <= NR) microtile of C.
#[derive(Debug)]
pub struct TileMut<'a, T> {
    ptr: *mut T,
    rs: usize,
    cs: usize,
    m: usize,
    n: usize,
    _life: PhantomData<&'a mut T>,
}

impl<'a, T: Real> TileMut<'a, T> {
    /// Tile over `buf` starting at `offset`.
    pub fn new(buf: &'a mut [T], offset: usize, m: usize, n: usize, rs: usize, cs: usize) -> Result<Self> {
        if m > 0 && n > 0 {
            let needed = offset + (m - 1) * rs + (n - 1) * cs + 1;
            if needed > buf.len() {
                return Err(GemmError::OutOfBounds { needed, len: buf.len() });
            }
        }
        Ok(TileMut {
            // SAFETY: offset is in bounds (or the tile is empty and never dereferenced)
            ptr: unsafe { buf.as_mut_ptr().add(offset.min(buf.len())) },
            rs,
            cs,
            m,
            n,
            _life: PhantomData,
        })
    }

    /// # Safety
    /// Every `ptr + i*rs + j*cs` for `i < m`, `j < n` must be valid for reads
    /// and writes, and not aliased for the tile's lifetime.
    pub(crate) unsafe fn from_raw(ptr: *mut T, rs: usize, cs: usize, m: usize, n: usize) -> Self {
        TileMut {
            ptr,
            rs,
            cs,
            m,
            n,
            _life: PhantomData,
        }
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> *mut T {
        // SAFETY: callers stay inside m x n, covered by the constructor contract
        unsafe { self.ptr.add(i * self.rs + j * self.cs) }
    }

    #[inline(always)]
    pub(crate) fn load(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.m && j < self.n);
        unsafe { *self.at(i, j) }
    }

    #[inline(always)]
    pub(crate) fn store(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.m && j < self.n);
        unsafe { *self.at(i, j) = v }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

#[inline(always)]
fn ukr_fixed<T: Real, const MR: usize, const NR: usize>(k: usize, a: &[T], b: &[T], beta: T, c: &mut TileMut<'_, T>) {
    let mut acc = [[T::ZERO; MR]; NR];
    if beta != T::ZERO {
        for (j, col) in acc.iter_mut().enumerate().take(c.n) {
            for (i, x) in col.iter_mut().enumerate().take(c.m) {
                let v = c.load(i, j);
                *x = if beta == T::ONE { v } else { beta * v };
            }
        }
    }
    for (al, bl) in a[..k * MR].chunks_exact(MR).zip(b[..k * NR].chunks_exact(NR)) {
        for (col, &bj) in acc.iter_mut().zip(bl) {
            for (x, &ai) in col.iter_mut().zip(al) {
                *x = *x + ai * bj;
            }
        }
    }
    for (j, col) in acc.iter().enumerate().take(c.n) {
        for (i, &x) in col.iter().enumerate().take(c.m) {
            c.store(i, j, x);
        }
    }
}

fn ukr_dyn<T: Real>(mr: usize, nr: usize, k: usize, a: &[T], b: &[T], beta: T, c: &mut TileMut<'_, T>) {
    let mut acc = [T::ZERO; MAX_REG * MAX_REG];
    if beta != T::ZERO {
        for j in 0..c.n {
            for i in 0..c.m {
                let v = c.load(i, j);
                acc[j * mr + i] = if beta == T::ONE { v } else { beta * v };
            }
        }
    }
    for l in 0..k {
        let (al, bl) = (&a[l * mr..(l + 1) * mr], &b[l * nr..(l + 1) * nr]);
        for (j, &bj) in bl.iter().enumerate() {
            for (i, &ai) in al.iter().enumerate() {
                acc[j * mr + i] = acc[j * mr + i] + ai * bj;
            }
        }
    }
    for j in 0..c.n {
        for i in 0..c.m {
            c.store(i, j, acc[j * mr + i]);
        }
    }
}

/// Flops charged for one microkernel call.
pub(crate) fn ukr_flops(d: &UkrDescriptor, k: usize, scales_c: bool) -> u64 {
    let tile = (d.mr * d.nr) as u64;
    2 * tile * k as u64 + if scales_c { tile } else { 0 }
}

/// `c := beta * c + sum_l a(:, l) * b(l, :)`.
///
/// Accumulators start from `beta * c` and take rank-1 updates in ascending
/// `l`, all in `T`. With `beta == 0`, `c` is never read. Only the `m x n`
/// corner of the MR x NR result is written.
pub fn gemm_ukr<T: Real>(
    d: &UkrDescriptor,
    p: MicroPanelPair<'_, T>,
    beta: T,
    c: &mut TileMut<'_, T>,
    fc: &mut FlopCounter,
) {
    debug_assert_eq!(T::PRECISION, d.precision);
    assert!(c.m <= d.mr && c.n <= d.nr, "tile larger than register block");
    assert!(
        p.a.len() >= p.k * d.mr && p.b.len() >= p.k * d.nr,
        "panels shorter than k"
    );
    match (d.mr, d.nr) {
        (4, 4) => ukr_fixed::<T, 4, 4>(p.k, p.a, p.b, beta, c),
        (8, 8) => ukr_fixed::<T, 8, 8>(p.k, p.a, p.b, beta, c),
        (8, 4) => ukr_fixed::<T, 8, 4>(p.k, p.a, p.b, beta, c),
        (4, 8) => ukr_fixed::<T, 4, 8>(p.k, p.a, p.b, beta, c),
        (mr, nr) => ukr_dyn(mr, nr, p.k, p.a, p.b, beta, c),
    }
    fc.add(ukr_flops(d, p.k, beta != T::ZERO && beta != T::ONE));
}
