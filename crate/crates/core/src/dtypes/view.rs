use num_complex::Complex64;

use super::{require_complex, Datatype, Domain, Precision};
use crate::error::{GemmError, Result};

/// Which half of a complex view to expose as a real view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlattenAxis {
    /// complex m x n becomes real 2m x n (needs unit row stride)
    Rows,
    /// complex m x n becomes real m x 2n (needs unit column stride)
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageFormat {
    Column,
    Row,
    General,
}

/// View metadata without the buffer reference.
///
/// `offset` is measured in reals of the buffer; `rs`/`cs` in elements of
/// `dtype`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub offset: usize,
    pub m: usize,
    pub n: usize,
    pub rs: usize,
    pub cs: usize,
    pub dtype: Datatype,
    pub conj: bool,
    pub comp_prec: Precision,
    pub target_dtype: Datatype,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// True when `i*rs + j*cs` is injective over the `m x n` index space.
fn strides_injective(m: usize, n: usize, rs: usize, cs: usize) -> bool {
    if m <= 1 || n <= 1 {
        return true;
    }
    // A collision needs di*rs == dj*cs with 0 < di < m, 0 < dj < n; the
    // smallest such pair is (cs/g, rs/g).
    let g = gcd(rs, cs);
    !(cs / g < m && rs / g < n)
}

impl Layout {
    pub fn new(offset: usize, m: usize, n: usize, rs: isize, cs: isize, dtype: Datatype) -> Result<Layout> {
        if rs <= 0 || cs <= 0 {
            return Err(GemmError::InvalidStride { rs, cs });
        }
        let (rs, cs) = (rs as usize, cs as usize);
        if !strides_injective(m, n, rs, cs) {
            return Err(GemmError::SelfAliasing { m, n, rs, cs });
        }
        Ok(Layout {
            offset,
            m,
            n,
            rs,
            cs,
            dtype,
            conj: false,
            comp_prec: dtype.precision,
            target_dtype: dtype,
        })
    }

    /// Column-major layout with leading dimension `ld`.
    pub fn col_major(m: usize, n: usize, ld: usize, dtype: Datatype) -> Result<Layout> {
        Layout::new(0, m, n, 1, ld.max(1) as isize, dtype)
    }

    pub fn row_major(m: usize, n: usize, ld: usize, dtype: Datatype) -> Result<Layout> {
        Layout::new(0, m, n, ld.max(1) as isize, 1, dtype)
    }

    pub fn width(&self) -> usize {
        self.dtype.width()
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0 || self.n == 0
    }

    /// Offset in reals of element (i, j); the imaginary part, if any, follows it.
    #[inline(always)]
    pub fn real_offset(&self, i: usize, j: usize) -> usize {
        self.offset + (i * self.rs + j * self.cs) * self.width()
    }

    /// Minimum buffer length (in reals) that holds every addressed element.
    pub fn required_len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.real_offset(self.m - 1, self.n - 1) + self.width()
        }
    }

    pub fn storage_format(&self) -> StorageFormat {
        if self.rs == 1 && self.cs >= self.m {
            StorageFormat::Column
        } else if self.cs == 1 && self.rs >= self.n {
            StorageFormat::Row
        } else {
            StorageFormat::General
        }
    }

    pub fn transposed(self) -> Layout {
        Layout {
            m: self.n,
            n: self.m,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    /// Real view of one half of a complex layout. The conjugation flag is not
    /// carried over.
    pub fn projection(self, part: Part) -> Result<Layout> {
        require_complex(self.dtype)?;
        let dtype = self.dtype.with_domain(Domain::Real);
        Ok(Layout {
            offset: self.offset + if part == Part::Im { 1 } else { 0 },
            rs: self.rs * 2,
            cs: self.cs * 2,
            dtype,
            conj: false,
            target_dtype: self.target_dtype.with_domain(Domain::Real),
            ..self
        })
    }

    /// Reinterpret a complex layout as a real one with re/im interleaved along
    /// `axis`.
    pub fn flatten(self, axis: FlattenAxis) -> Result<Layout> {
        require_complex(self.dtype)?;
        let dtype = self.dtype.with_domain(Domain::Real);
        let base = Layout {
            dtype,
            conj: false,
            target_dtype: self.target_dtype.with_domain(Domain::Real),
            ..self
        };
        match axis {
            FlattenAxis::Rows if self.rs == 1 || self.m <= 1 => Ok(Layout {
                m: self.m * 2,
                rs: 1,
                cs: self.cs * 2,
                ..base
            }),
            FlattenAxis::Cols if self.cs == 1 || self.n <= 1 => Ok(Layout {
                n: self.n * 2,
                rs: self.rs * 2,
                cs: 1,
                ..base
            }),
            _ => Err(GemmError::FlattenInfeasible {
                rs: self.rs,
                cs: self.cs,
                axis: match axis {
                    FlattenAxis::Rows => "rows",
                    FlattenAxis::Cols => "cols",
                },
            }),
        }
    }

    /// The `m x n` window starting at element (i0, j0).
    pub fn submatrix(self, i0: usize, j0: usize, m: usize, n: usize) -> Layout {
        debug_assert!(i0 + m <= self.m && j0 + n <= self.n);
        let offset = if m == 0 || n == 0 {
            self.offset
        } else {
            self.real_offset(i0, j0)
        };
        Layout { offset, m, n, ..self }
    }

    /// Every real offset the layout touches, in (j, i, part) order.
    pub fn addressed_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.m * self.n * self.width());
        for j in 0..self.n {
            for i in 0..self.m {
                let o = self.real_offset(i, j);
                out.extend(o..o + self.width());
            }
        }
        out
    }
}

/// Borrowed element storage, tagged by precision.
#[derive(Debug, Clone, Copy)]
pub enum Elems<'a> {
    F32(&'a [f32]),
    F64(&'a [f64]),
}

#[derive(Debug)]
pub enum ElemsMut<'a> {
    F32(&'a mut [f32]),
    F64(&'a mut [f64]),
}

impl Elems<'_> {
    pub fn precision(&self) -> Precision {
        match self {
            Elems::F32(_) => Precision::Single,
            Elems::F64(_) => Precision::Double,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Elems::F32(s) => s.len(),
            Elems::F64(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline(always)]
    pub fn load(&self, off: usize) -> f64 {
        match self {
            Elems::F32(s) => s[off] as f64,
            Elems::F64(s) => s[off],
        }
    }

    pub(crate) fn addr_range(&self) -> (usize, usize) {
        match self {
            Elems::F32(s) => {
                let p = s.as_ptr() as usize;
                (p, p + std::mem::size_of_val(*s))
            }
            Elems::F64(s) => {
                let p = s.as_ptr() as usize;
                (p, p + std::mem::size_of_val(*s))
            }
        }
    }
}

impl ElemsMut<'_> {
    pub fn as_elems(&self) -> Elems<'_> {
        match self {
            ElemsMut::F32(s) => Elems::F32(s),
            ElemsMut::F64(s) => Elems::F64(s),
        }
    }

    pub fn reborrow(&mut self) -> ElemsMut<'_> {
        match self {
            ElemsMut::F32(s) => ElemsMut::F32(s),
            ElemsMut::F64(s) => ElemsMut::F64(s),
        }
    }

    #[inline(always)]
    pub fn store(&mut self, off: usize, v: f64) {
        match self {
            ElemsMut::F32(s) => s[off] = v as f32,
            ElemsMut::F64(s) => s[off] = v,
        }
    }
}

fn check(elems: Elems<'_>, layout: &Layout) -> Result<()> {
    if elems.precision() != layout.dtype.precision {
        return Err(GemmError::BufferMismatch);
    }
    let needed = layout.required_len();
    if needed > elems.len() {
        return Err(GemmError::OutOfBounds {
            needed,
            len: elems.len(),
        });
    }
    Ok(())
}

#[inline(always)]
fn read(elems: Elems<'_>, layout: &Layout, i: usize, j: usize) -> Complex64 {
    let o = layout.real_offset(i, j);
    if layout.dtype.is_complex() {
        Complex64::new(elems.load(o), elems.load(o + 1))
    } else {
        Complex64::new(elems.load(o), 0.0)
    }
}

/// Read-only strided matrix view.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: Elems<'a>,
    layout: Layout,
}

impl<'a> MatrixView<'a> {
    pub fn new(data: Elems<'a>, layout: Layout) -> Result<MatrixView<'a>> {
        check(data, &layout)?;
        Ok(MatrixView { data, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn elems(&self) -> Elems<'a> {
        self.data
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

    /// Stored value of element (i, j), ignoring the conjugation flag.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        assert!(i < self.layout.m && j < self.layout.n);
        read(self.data, &self.layout, i, j)
    }

    /// Value of element (i, j) with the conjugation flag applied.
    pub fn get_logical(&self, i: usize, j: usize) -> Complex64 {
        let v = self.get(i, j);
        if self.layout.conj {
            v.conj()
        } else {
            v
        }
    }

    pub fn conjugated(mut self, conj: bool) -> MatrixView<'a> {
        self.layout.conj = conj;
        self
    }

    pub fn with_comp_prec(mut self, p: Precision) -> MatrixView<'a> {
        self.layout.comp_prec = p;
        self
    }

    pub fn transposed(self) -> MatrixView<'a> {
        MatrixView {
            layout: self.layout.transposed(),
            ..self
        }
    }

    /// Re-point the view at a different layout over the same buffer.
    pub fn relayout(self, layout: Layout) -> Result<MatrixView<'a>> {
        MatrixView::new(self.data, layout)
    }

    pub fn submatrix(self, i0: usize, j0: usize, m: usize, n: usize) -> MatrixView<'a> {
        MatrixView {
            layout: self.layout.submatrix(i0, j0, m, n),
            ..self
        }
    }
}

/// Swap dimensions and strides; element (i, j) of the result is (j, i) of `v`.
pub fn induced_transpose(v: MatrixView<'_>) -> MatrixView<'_> {
    v.transposed()
}

pub fn real_projection(v: MatrixView<'_>, part: Part) -> Result<MatrixView<'_>> {
    let layout = v.layout.projection(part)?;
    Ok(MatrixView { layout, ..v })
}

pub fn real_flatten(v: MatrixView<'_>, axis: FlattenAxis) -> Result<MatrixView<'_>> {
    let layout = v.layout.flatten(axis)?;
    Ok(MatrixView { layout, ..v })
}

/// Exclusively borrowed strided matrix view; the GEMM output.
#[derive(Debug)]
pub struct MatrixViewMut<'a> {
    data: ElemsMut<'a>,
    layout: Layout,
}

impl<'a> MatrixViewMut<'a> {
    pub fn new(data: ElemsMut<'a>, layout: Layout) -> Result<MatrixViewMut<'a>> {
        check(data.as_elems(), &layout)?;
        Ok(MatrixViewMut { data, layout })
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

    pub fn as_view(&self) -> MatrixView<'_> {
        MatrixView {
            data: self.data.as_elems(),
            layout: self.layout,
        }
    }

    pub fn reborrow(&mut self) -> MatrixViewMut<'_> {
        MatrixViewMut {
            data: self.data.reborrow(),
            layout: self.layout,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        assert!(i < self.layout.m && j < self.layout.n);
        read(self.data.as_elems(), &self.layout, i, j)
    }

    /// Store `v` rounded to the view's precision; the imaginary part is
    /// dropped for real views.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(i < self.layout.m && j < self.layout.n);
        let o = self.layout.real_offset(i, j);
        self.data.store(o, v.re);
        if self.layout.dtype.is_complex() {
            self.data.store(o + 1, v.im);
        }
    }

    pub fn with_comp_prec(mut self, p: Precision) -> MatrixViewMut<'a> {
        self.layout.comp_prec = p;
        self
    }

    pub fn set_comp_prec(&mut self, p: Precision) {
        self.layout.comp_prec = p;
    }

    pub fn transposed(self) -> MatrixViewMut<'a> {
        MatrixViewMut {
            layout: self.layout.transposed(),
            ..self
        }
    }

    pub fn projection(self, part: Part) -> Result<MatrixViewMut<'a>> {
        let layout = self.layout.projection(part)?;
        Ok(MatrixViewMut { layout, ..self })
    }

    pub fn flatten(self, axis: FlattenAxis) -> Result<MatrixViewMut<'a>> {
        let layout = self.layout.flatten(axis)?;
        Ok(MatrixViewMut { layout, ..self })
    }

    pub fn submatrix(self, i0: usize, j0: usize, m: usize, n: usize) -> MatrixViewMut<'a> {
        MatrixViewMut {
            layout: self.layout.submatrix(i0, j0, m, n),
            ..self
        }
    }

    /// A view of a different layout over the same buffer.
    pub fn relayout(&mut self, layout: Layout) -> Result<MatrixViewMut<'_>> {
        MatrixViewMut::new(self.data.reborrow(), layout)
    }

    pub(crate) fn elems_mut(&mut self) -> &mut ElemsMut<'a> {
        &mut self.data
    }

    pub(crate) fn addr_range(&self) -> (usize, usize) {
        self.data.as_elems().addr_range()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cview(buf: &[f64], m: usize, n: usize, rs: isize, cs: isize) -> MatrixView<'_> {
        let l = Layout::new(0, m, n, rs, cs, Datatype::Z).unwrap();
        MatrixView::new(Elems::F64(buf), l).unwrap()
    }

    #[test]
    fn transpose_swaps_dims_and_strides() {
        let buf = [0.0f64; 6];
        let l = Layout::new(0, 2, 3, 1, 2, Datatype::D).unwrap();
        let v = MatrixView::new(Elems::F64(&buf), l).unwrap();
        let t = induced_transpose(v);
        assert_eq!((t.m(), t.n(), t.layout().rs, t.layout().cs), (3, 2, 2, 1));
        assert_eq!(induced_transpose(t).layout(), v.layout());

        let one = MatrixView::new(Elems::F64(&buf), Layout::new(0, 1, 1, 1, 1, Datatype::D).unwrap()).unwrap();
        assert_eq!(induced_transpose(one).layout(), one.layout());
    }

    #[test]
    fn projection_reads_each_half() {
        let buf = [3.0, 4.0];
        let v = cview(&buf, 1, 1, 1, 1);
        let re = real_projection(v, Part::Re).unwrap();
        let im = real_projection(v, Part::Im).unwrap();
        assert_eq!(re.get(0, 0).re, 3.0);
        assert_eq!(im.get(0, 0).re, 4.0);
        assert_eq!(re.dtype(), Datatype::D);

        let buf = [0.0; 8];
        let v = cview(&buf, 2, 2, 1, 2);
        let re = real_projection(v, Part::Re).unwrap();
        assert_eq!((re.layout().rs, re.layout().cs), (2, 4));
    }

    #[test]
    fn projection_of_real_is_domain_error() {
        let buf = [0.0; 4];
        let v = MatrixView::new(Elems::F64(&buf), Layout::col_major(2, 2, 2, Datatype::D).unwrap()).unwrap();
        assert!(matches!(real_projection(v, Part::Re), Err(GemmError::Domain { .. })));
    }

    #[test]
    fn flatten_examples() {
        let buf = [3.0, 4.0];
        let f = real_flatten(cview(&buf, 1, 1, 1, 1), FlattenAxis::Rows).unwrap();
        assert_eq!((f.m(), f.n()), (2, 1));
        assert_eq!((f.get(0, 0).re, f.get(1, 0).re), (3.0, 4.0));

        let buf = [1.0, 2.0, 3.0, 4.0];
        let f = real_flatten(cview(&buf, 2, 1, 1, 2), FlattenAxis::Rows).unwrap();
        let col: Vec<f64> = (0..4).map(|i| f.get(i, 0).re).collect();
        assert_eq!(col, vec![1.0, 2.0, 3.0, 4.0]);

        let buf = [0.0; 8];
        let rowstored = cview(&buf, 2, 2, 2, 1);
        assert!(matches!(
            real_flatten(rowstored, FlattenAxis::Rows),
            Err(GemmError::FlattenInfeasible { .. })
        ));
        let f = real_flatten(rowstored, FlattenAxis::Cols).unwrap();
        assert_eq!((f.m(), f.n(), f.layout().rs, f.layout().cs), (2, 4, 4, 1));
    }

    #[test]
    fn rejects_bad_strides() {
        assert!(matches!(
            Layout::new(0, 2, 2, -1, 2, Datatype::D),
            Err(GemmError::InvalidStride { .. })
        ));
        assert!(matches!(
            Layout::new(0, 2, 2, 0, 2, Datatype::D),
            Err(GemmError::InvalidStride { .. })
        ));
        assert!(matches!(
            Layout::new(0, 3, 2, 1, 2, Datatype::D),
            Err(GemmError::SelfAliasing { .. })
        ));
        // interleaved but injective
        assert!(Layout::new(0, 2, 2, 2, 3, Datatype::D).is_ok());
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let buf = [0.0f32; 3];
        let l = Layout::col_major(2, 2, 2, Datatype::S).unwrap();
        assert!(matches!(
            MatrixView::new(Elems::F32(&buf), l),
            Err(GemmError::OutOfBounds { needed: 4, len: 3 })
        ));
        let buf = [0.0f64; 4];
        assert!(matches!(
            MatrixView::new(Elems::F64(&buf), l),
            Err(GemmError::BufferMismatch)
        ));
    }

    #[test]
    fn storage_classification() {
        let d = Datatype::D;
        assert_eq!(
            Layout::col_major(3, 2, 4, d).unwrap().storage_format(),
            StorageFormat::Column
        );
        assert_eq!(
            Layout::row_major(3, 2, 2, d).unwrap().storage_format(),
            StorageFormat::Row
        );
        assert_eq!(
            Layout::new(0, 3, 2, 2, 7, d).unwrap().storage_format(),
            StorageFormat::General
        );
    }

    fn injective_brute(m: usize, n: usize, rs: usize, cs: usize) -> bool {
        let mut seen = HashSet::new();
        (0..m).all(|i| (0..n).all(|j| seen.insert(i * rs + j * cs)))
    }

    proptest! {
        #[test]
        fn stride_check_matches_enumeration(m in 0usize..6, n in 0usize..6, rs in 1usize..9, cs in 1usize..9) {
            prop_assert_eq!(strides_injective(m, n, rs, cs), injective_brute(m, n, rs, cs));
        }

        #[test]
        fn projections_partition_complex_offsets(m in 1usize..5, n in 1usize..5, extra in 0usize..3, col in any::<bool>()) {
            let l = if col {
                Layout::col_major(m, n, m + extra, Datatype::Z).unwrap()
            } else {
                Layout::row_major(m, n, n + extra, Datatype::Z).unwrap()
            };
            let re: HashSet<usize> = l.projection(Part::Re).unwrap().addressed_offsets().into_iter().collect();
            let im: HashSet<usize> = l.projection(Part::Im).unwrap().addressed_offsets().into_iter().collect();
            let all: HashSet<usize> = l.addressed_offsets().into_iter().collect();
            prop_assert!(re.is_disjoint(&im));
            let union: HashSet<usize> = re.union(&im).copied().collect();
            prop_assert_eq!(union, all);

            let t: HashSet<usize> = l.transposed().addressed_offsets().into_iter().collect();
            let orig: HashSet<usize> = l.addressed_offsets().into_iter().collect();
            prop_assert_eq!(t, orig);
        }

        #[test]
        fn flatten_rows_reconstructs_bitwise(m in 1usize..5, n in 1usize..5, vals in proptest::collection::vec(-1e3f64..1e3, 64)) {
            let l = Layout::col_major(m, n, m, Datatype::Z).unwrap();
            let buf = &vals[..l.required_len()];
            let v = MatrixView::new(Elems::F64(buf), l).unwrap();
            let f = real_flatten(v, FlattenAxis::Rows).unwrap();
            prop_assert_eq!(f.layout().addressed_offsets().len(), 2 * m * n);
            let mut fo = f.layout().addressed_offsets();
            let mut vo = l.addressed_offsets();
            fo.sort_unstable();
            vo.sort_unstable();
            prop_assert_eq!(fo, vo);
            for i in 0..m {
                for j in 0..n {
                    let z = v.get(i, j);
                    prop_assert_eq!(f.get(2 * i, j).re.to_bits(), z.re.to_bits());
                    prop_assert_eq!(f.get(2 * i + 1, j).re.to_bits(), z.im.to_bits());
                }
            }
        }
    }
}
