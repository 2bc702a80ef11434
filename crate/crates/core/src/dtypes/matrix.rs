use num_complex::Complex64;
use rand::Rng;

use super::view::{Elems, ElemsMut, Layout, MatrixView, MatrixViewMut};
use super::{Datatype, Precision};

/// How an owned matrix lays out its elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Column,
    Row,
    /// Neither stride is unit: rs = 2, cs = 2m + 1.
    General,
}

impl StorageKind {
    pub fn from_letter(c: char) -> Option<StorageKind> {
        match c {
            'c' => Some(StorageKind::Column),
            'r' => Some(StorageKind::Row),
            'g' => Some(StorageKind::General),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            StorageKind::Column => 'c',
            StorageKind::Row => 'r',
            StorageKind::General => 'g',
        }
    }

    fn layout(self, m: usize, n: usize, dtype: Datatype) -> Layout {
        let (rs, cs) = match self {
            StorageKind::Column => (1, m.max(1)),
            StorageKind::Row => (n.max(1), 1),
            StorageKind::General => (2, 2 * m + 1),
        };
        Layout::new(0, m, n, rs as isize, cs as isize, dtype).expect("storage kinds are injective")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Buffer {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// An owned, dense-buffer matrix. Used by tests, the conformance runner and
/// the benchmark; the GEMM itself only ever sees views.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    buf: Buffer,
    layout: Layout,
}

impl Matrix {
    pub fn zeros(dtype: Datatype, m: usize, n: usize, storage: StorageKind) -> Matrix {
        Matrix::with_layout(storage.layout(m, n, dtype))
    }

    /// A zeroed buffer large enough for `layout`.
    pub fn with_layout(layout: Layout) -> Matrix {
        let len = layout.required_len();
        let buf = match layout.dtype.precision {
            Precision::Single => Buffer::F32(vec![0.0; len]),
            Precision::Double => Buffer::F64(vec![0.0; len]),
        };
        Matrix { buf, layout }
    }

    pub fn from_fn(
        dtype: Datatype,
        m: usize,
        n: usize,
        storage: StorageKind,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Matrix {
        let mut out = Matrix::zeros(dtype, m, n, storage);
        for j in 0..n {
            for i in 0..m {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    /// Entries drawn uniformly from [-1, 1] (both parts for complex).
    pub fn random<R: Rng + ?Sized>(dtype: Datatype, m: usize, n: usize, storage: StorageKind, rng: &mut R) -> Matrix {
        Matrix::from_fn(dtype, m, n, storage, |_, _| {
            let re = rng.gen_range(-1.0..=1.0);
            let im = if dtype.is_complex() {
                rng.gen_range(-1.0..=1.0)
            } else {
                0.0
            };
            Complex64::new(re, im)
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn dtype(&self) -> Datatype {
        self.layout.dtype
    }

    pub fn view(&self) -> MatrixView<'_> {
        let elems = match &self.buf {
            Buffer::F32(v) => Elems::F32(v),
            Buffer::F64(v) => Elems::F64(v),
        };
        MatrixView::new(elems, self.layout).expect("owned layout fits its buffer")
    }

    pub fn view_mut(&mut self) -> MatrixViewMut<'_> {
        let elems = match &mut self.buf {
            Buffer::F32(v) => ElemsMut::F32(v),
            Buffer::F64(v) => ElemsMut::F64(v),
        };
        MatrixViewMut::new(elems, self.layout).expect("owned layout fits its buffer")
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.view().get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.view_mut().set(i, j, v)
    }

    /// Bit patterns of the whole buffer, including padding, widened to u64.
    pub fn raw_bits(&self) -> Vec<u64> {
        match &self.buf {
            Buffer::F32(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
            Buffer::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
        }
    }

    /// Overwrite every real slot of the buffer (padding included).
    pub fn fill_raw(&mut self, v: f64) {
        match &mut self.buf {
            Buffer::F32(b) => b.iter_mut().for_each(|x| *x = v as f32),
            Buffer::F64(b) => b.iter_mut().for_each(|x| *x = v),
        }
    }

    /// Logical contents as a column-major `Vec`.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.m() * self.n());
        for j in 0..self.n() {
            for i in 0..self.m() {
                out.push(self.get(i, j));
            }
        }
        out
    }
}
