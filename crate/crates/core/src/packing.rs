//! Packing of operand blocks into micro-panel buffers.
//!
//! Every packed block is a real matrix, whatever the source. A complex source
//! expands according to the format:
//!
//! | side  | format   | source   | packed (real)                                  |
//! |-------|----------|----------|------------------------------------------------|
//! | left  | standard | m x k    | 2m x k, `re`/`im` interleaved down each column |
//! | left  | 1e       | m x k    | 2m x 2k, 2x2 blocks `[[re, -im], [im, re]]`    |
//! | left  | 1r       | m x k    | m x 2k, `re`/`im` interleaved along k          |
//! | right | standard | k x n    | k x 2n, `re`/`im` interleaved along each row   |
//! | right | 1e       | k x n    | 2k x 2n, 2x2 blocks `[[re, im], [-im, re]]`    |
//! | right | 1r       | k x n    | 2k x n, `re` row above `im` row                |
//!
//! Real sources only use the standard format and pack one-to-one.
//!
//! Left blocks are stored as panels of `MR` rows, column-major within a
//! panel; right blocks as panels of `NR` columns, row-major within a panel.
//! Rows/columns past the logical edge are zero.

use num_complex::Complex64;

use crate::dtypes::{Datatype, Domain, Elems, Layout, MatrixView, Precision, Real, Scalar};
use crate::error::{GemmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PackFormat {
    Standard,
    OneE,
    OneR,
}

impl PackFormat {
    pub fn name(self) -> &'static str {
        match self {
            PackFormat::Standard => "standard",
            PackFormat::OneE => "1e",
            PackFormat::OneR => "1r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// How many packed reals one source element turns into, as
/// (along the panel dimension, along k).
pub(crate) fn expansion(side: Side, format: PackFormat, complex: bool) -> (usize, usize) {
    if !complex {
        return (1, 1);
    }
    match (side, format) {
        (_, PackFormat::Standard) => (2, 1),
        (_, PackFormat::OneE) => (2, 2),
        (_, PackFormat::OneR) => (1, 2),
    }
}

/// Shape of a packed block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PackedShape {
    /// logical extent along the panel dimension (rows for left, cols for right)
    pub extent: usize,
    /// logical extent along k
    pub depth: usize,
    pub panels: usize,
}

#[inline(always)]
fn load_src<S: Real>(src: &[S], layout: &Layout, i: usize, j: usize) -> Complex64 {
    let o = layout.real_offset(i, j);
    if layout.dtype.is_complex() {
        Complex64::new(src[o].to_f64(), src[o + 1].to_f64())
    } else {
        Complex64::new(src[o].to_f64(), 0.0)
    }
}

fn pack_impl<S: Real, T: Real>(
    src: &[S],
    layout: &Layout,
    side: Side,
    format: PackFormat,
    conj: bool,
    scale: Complex64,
    reg: usize,
    out: &mut Vec<T>,
) -> PackedShape {
    let complex = layout.dtype.is_complex();
    let (pexp, kexp) = expansion(side, format, complex);
    // (source extent along panel dimension, source k)
    let (ext, k) = match side {
        Side::Left => (layout.m, layout.n),
        Side::Right => (layout.n, layout.m),
    };
    let extent = ext * pexp;
    let depth = k * kexp;
    let panels = extent.div_ceil(reg);
    out.clear();
    out.resize(panels * reg * depth, T::ZERO);

    let unit_scale = scale == Complex64::new(1.0, 0.0);
    let pos = |p: usize, l: usize| (p / reg) * reg * depth + l * reg + p % reg;

    for l in 0..k {
        for p in 0..ext {
            let (i, j) = match side {
                Side::Left => (p, l),
                Side::Right => (l, p),
            };
            let mut v = load_src(src, layout, i, j);
            if conj {
                v.im = -v.im;
            }
            if !unit_scale {
                v = if complex || scale.im != 0.0 {
                    v * scale
                } else {
                    Complex64::new(v.re * scale.re, 0.0)
                };
            }
            let (re, im) = (T::from_f64(v.re), T::from_f64(v.im));
            if !complex {
                out[pos(p, l)] = re;
                continue;
            }
            match (side, format) {
                (_, PackFormat::Standard) => {
                    out[pos(2 * p, l)] = re;
                    out[pos(2 * p + 1, l)] = im;
                }
                (Side::Left, PackFormat::OneE) => {
                    out[pos(2 * p, 2 * l)] = re;
                    out[pos(2 * p, 2 * l + 1)] = -im;
                    out[pos(2 * p + 1, 2 * l)] = im;
                    out[pos(2 * p + 1, 2 * l + 1)] = re;
                }
                (Side::Right, PackFormat::OneE) => {
                    out[pos(2 * p, 2 * l)] = re;
                    out[pos(2 * p + 1, 2 * l)] = im;
                    out[pos(2 * p, 2 * l + 1)] = -im;
                    out[pos(2 * p + 1, 2 * l + 1)] = re;
                }
                (_, PackFormat::OneR) => {
                    out[pos(p, 2 * l)] = re;
                    out[pos(p, 2 * l + 1)] = im;
                }
            }
        }
    }
    PackedShape { extent, depth, panels }
}

/// Pack `layout` over `src` into `out`, typecasting to `T`. All arithmetic
/// (conjugation, scaling) happens in double and is rounded once to `T`.
/// The view's own conjugation flag is ignored in favor of `conj`.
pub(crate) fn pack_into<T: Real>(
    src: Elems<'_>,
    layout: &Layout,
    side: Side,
    format: PackFormat,
    conj: bool,
    scale: Complex64,
    reg: usize,
    out: &mut Vec<T>,
) -> PackedShape {
    match src {
        Elems::F32(s) => pack_impl(s, layout, side, format, conj, scale, reg, out),
        Elems::F64(s) => pack_impl(s, layout, side, format, conj, scale, reg, out),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PackedBuf {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl PackedBuf {
    pub fn len(&self) -> usize {
        match self {
            PackedBuf::F32(v) => v.len(),
            PackedBuf::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, idx: usize) -> f64 {
        match self {
            PackedBuf::F32(v) => v[idx] as f64,
            PackedBuf::F64(v) => v[idx],
        }
    }
}

/// An owned packed operand.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBlock {
    pub buf: PackedBuf,
    pub side: Side,
    /// MR for left blocks, NR for right blocks
    pub panel_dim: usize,
    pub panels: usize,
    /// reals along k in each panel
    pub panel_len: usize,
    /// packed logical rows and columns, before padding
    pub rows: usize,
    pub cols: usize,
    pub format: PackFormat,
    /// real datatype of the buffer
    pub dtype: Datatype,
}

impl PackedBlock {
    pub fn padded_rows(&self) -> usize {
        match self.side {
            Side::Left => self.panels * self.panel_dim,
            Side::Right => self.rows,
        }
    }

    pub fn padded_cols(&self) -> usize {
        match self.side {
            Side::Left => self.cols,
            Side::Right => self.panels * self.panel_dim,
        }
    }

    pub fn f32_panel(&self, p: usize) -> Option<&[f32]> {
        let len = self.panel_dim * self.panel_len;
        match &self.buf {
            PackedBuf::F32(v) => Some(&v[p * len..(p + 1) * len]),
            PackedBuf::F64(_) => None,
        }
    }

    pub fn f64_panel(&self, p: usize) -> Option<&[f64]> {
        let len = self.panel_dim * self.panel_len;
        match &self.buf {
            PackedBuf::F64(v) => Some(&v[p * len..(p + 1) * len]),
            PackedBuf::F32(_) => None,
        }
    }
}

/// Pack a whole operand.
///
/// `src` is m x k for the left side and k x n for the right side. The scale
/// may only be complex for the 1e/1r formats.
pub fn pack_block(
    src: &MatrixView<'_>,
    side: Side,
    format: PackFormat,
    conj: bool,
    scale: Scalar,
    target: Datatype,
    reg_block: usize,
) -> Result<PackedBlock> {
    let complex = src.dtype().is_complex();
    if format != PackFormat::Standard && !complex {
        return Err(GemmError::FormatRequiresComplex { format: format.name() });
    }
    if format == PackFormat::Standard && !scale.is_real() {
        return Err(GemmError::ComplexScaleWithStandard);
    }
    assert!(reg_block > 0, "register block must be positive");
    let scale = scale.value();
    let layout = *src.layout();
    let (buf, shape) = match target.precision {
        Precision::Single => {
            let mut v = Vec::new();
            let s = pack_into::<f32>(src.elems(), &layout, side, format, conj, scale, reg_block, &mut v);
            (PackedBuf::F32(v), s)
        }
        Precision::Double => {
            let mut v = Vec::new();
            let s = pack_into::<f64>(src.elems(), &layout, side, format, conj, scale, reg_block, &mut v);
            (PackedBuf::F64(v), s)
        }
    };
    let (rows, cols) = match side {
        Side::Left => (shape.extent, shape.depth),
        Side::Right => (shape.depth, shape.extent),
    };
    Ok(PackedBlock {
        buf,
        side,
        panel_dim: reg_block,
        panels: shape.panels,
        panel_len: shape.depth,
        rows,
        cols,
        format,
        dtype: Datatype::new(Domain::Real, target.precision),
    })
}

/// The value the microkernel consumes at packed logical position (i, l).
pub fn packed_element(p: &PackedBlock, i: usize, l: usize) -> Result<f64> {
    let (rows, cols) = (p.padded_rows(), p.padded_cols());
    if i >= rows || l >= cols {
        return Err(GemmError::PackedIndex { i, l, rows, cols });
    }
    let (panel_idx, depth) = match p.side {
        Side::Left => (i, l),
        Side::Right => (l, i),
    };
    let r = p.panel_dim;
    Ok(p.buf.get((panel_idx / r) * r * p.panel_len + depth * r + panel_idx % r))
}
