//! Virtual microkernels: wrappers with the microkernel's shape that add a
//! temporary microtile (typecast, complex beta, awkward C strides) or the 1m
//! reinterpretation of a complex microtile as a real one.

use num_complex::Complex64;

use crate::dtypes::{MatrixViewMut, Real, Scalar};
use crate::error::{GemmError, Result};
use crate::packing::{PackFormat, PackedBlock, PackedBuf};

use super::{
    gemm_ukr, ukr_flops, FlopCounter, IoPreference, MicroPanelPair, OutputKind, OutputTarget, TileMut, UkrDescriptor,
    MAX_REG,
};

/// Which of the two 1m formulations a packed pair follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OneMVariant {
    /// Left operand 1e, right operand 1r; C flattened along rows.
    Column,
    /// Left operand 1r, right operand 1e; C flattened along columns.
    Row,
}

impl OneMVariant {
    pub fn name(self) -> &'static str {
        match self {
            OneMVariant::Column => "column",
            OneMVariant::Row => "row",
        }
    }

    pub fn for_preference(p: IoPreference) -> OneMVariant {
        match p {
            IoPreference::Column => OneMVariant::Column,
            IoPreference::Row => OneMVariant::Row,
        }
    }

    fn formats(self) -> (PackFormat, PackFormat) {
        match self {
            OneMVariant::Column => (PackFormat::OneE, PackFormat::OneR),
            OneMVariant::Row => (PackFormat::OneR, PackFormat::OneE),
        }
    }

    fn kind(self) -> OutputKind {
        match self {
            OneMVariant::Column => OutputKind::InterleavedRows,
            OneMVariant::Row => OutputKind::InterleavedCols,
        }
    }
}

/// `c := beta (.) c + tmp` over the real window at (r0, c0), in double and
/// rounded once to C's precision. Complex beta pairs re/im slots.
///
/// # Safety
/// The caller has exclusive access to the window.
unsafe fn writeback<T: Real>(
    tmp: &[T],
    (trs, tcs): (usize, usize),
    beta: Complex64,
    out: &OutputTarget<'_>,
    (r0, c0, m, n): (usize, usize, usize, usize),
) {
    let t = |i: usize, j: usize| tmp[i * trs + j * tcs].to_f64();
    if beta.im == 0.0 {
        for j in 0..n {
            for i in 0..m {
                let v = if beta.re == 0.0 {
                    t(i, j)
                } else {
                    beta.re * out.load(r0 + i, c0 + j) + t(i, j)
                };
                out.store(r0 + i, c0 + j, v);
            }
        }
        return;
    }
    let pair = |re: f64, im: f64| {
        let z = beta * Complex64::new(re, im);
        (z.re, z.im)
    };
    match out.kind() {
        OutputKind::InterleavedRows => {
            debug_assert!(r0 % 2 == 0 && m % 2 == 0);
            for j in 0..n {
                for i in (0..m).step_by(2) {
                    let (re, im) = pair(out.load(r0 + i, c0 + j), out.load(r0 + i + 1, c0 + j));
                    out.store(r0 + i, c0 + j, re + t(i, j));
                    out.store(r0 + i + 1, c0 + j, im + t(i + 1, j));
                }
            }
        }
        OutputKind::InterleavedCols => {
            debug_assert!(c0 % 2 == 0 && n % 2 == 0);
            for j in (0..n).step_by(2) {
                for i in 0..m {
                    let (re, im) = pair(out.load(r0 + i, c0 + j), out.load(r0 + i, c0 + j + 1));
                    out.store(r0 + i, c0 + j, re + t(i, j));
                    out.store(r0 + i, c0 + j + 1, im + t(i, j + 1));
                }
            }
        }
        OutputKind::Real => unreachable!("complex beta with a real output"),
    }
}

/// Real coordinate (r, c) of `beta * C`, where C's complex elements are
/// interleaved according to the output kind.
///
/// # Safety
/// As for [`OutputTarget::load`], for (r, c) and its interleaved partner.
unsafe fn scaled_load(out: &OutputTarget<'_>, beta: Complex64, r: usize, c: usize) -> f64 {
    let (z, part) = match out.kind() {
        OutputKind::Real => return beta.re * out.load(r, c),
        OutputKind::InterleavedRows => {
            let base = r - r % 2;
            (Complex64::new(out.load(base, c), out.load(base + 1, c)), r % 2)
        }
        OutputKind::InterleavedCols => {
            let base = c - c % 2;
            (Complex64::new(out.load(r, base), out.load(r, base + 1)), c % 2)
        }
    };
    let v = beta * z;
    if part == 0 {
        v.re
    } else {
        v.im
    }
}

/// One microtile update of the real window `(r0, c0, m, n)` of `out`.
///
/// Writes straight into C when `allow_direct` holds, C has precision `T`,
/// the window is a plain strided view and beta is real. Otherwise goes
/// through a stack microtile: with matching precision the kernel runs on a
/// copy of C (bitwise equal to the direct route; complex beta is applied to
/// the copy first, rounded once); otherwise the kernel runs with beta = 0 and
/// the result is folded in by [`writeback`].
///
/// # Safety
/// The caller has exclusive access to the window for the duration.
#[allow(clippy::too_many_arguments)]
pub(crate) unsafe fn ukr_tile<T: Real>(
    d: &UkrDescriptor,
    p: MicroPanelPair<'_, T>,
    beta: Complex64,
    out: &OutputTarget<'_>,
    (r0, c0, m, n): (usize, usize, usize, usize),
    allow_direct: bool,
    fc: &mut FlopCounter,
) {
    if allow_direct && beta.im == 0.0 {
        if let Some(mut tile) = out.direct_tile::<T>(r0, c0, m, n) {
            gemm_ukr(d, p, T::from_f64(beta.re), &mut tile, fc);
            return;
        }
    }

    let mut tmp = [T::ZERO; MAX_REG * MAX_REG];
    let (trs, tcs) = match d.preference {
        IoPreference::Column => (1, d.mr),
        IoPreference::Row => (d.nr, 1),
    };
    let span = (r0, c0, m, n);
    if out.precision() == T::PRECISION {
        // Complex beta is folded into the loaded tile so that later k-blocks
        // continue the same accumulation as a single pass would.
        let kernel_beta = if beta.im == 0.0 { beta.re } else { 1.0 };
        if beta.im != 0.0 {
            for j in 0..n {
                for i in 0..m {
                    tmp[i * trs + j * tcs] = T::from_f64(scaled_load(out, beta, r0 + i, c0 + j));
                }
            }
            fc.add(ukr_flops(d, 0, true));
        } else if beta.re != 0.0 {
            for j in 0..n {
                for i in 0..m {
                    tmp[i * trs + j * tcs] = T::from_f64(out.load(r0 + i, c0 + j));
                }
            }
        }
        let mut tile = TileMut::new(&mut tmp, 0, m, n, trs, tcs).expect("microtile fits the stack buffer");
        gemm_ukr(d, p, T::from_f64(kernel_beta), &mut tile, fc);
        for j in 0..n {
            for i in 0..m {
                out.store(r0 + i, c0 + j, tmp[i * trs + j * tcs].to_f64());
            }
        }
    } else {
        let mut tile = TileMut::new(&mut tmp, 0, m, n, trs, tcs).expect("microtile fits the stack buffer");
        gemm_ukr(d, p, T::ZERO, &mut tile, fc);
        if beta != Complex64::new(0.0, 0.0) && beta != Complex64::new(1.0, 0.0) {
            fc.add(ukr_flops(d, 0, true));
        }
        writeback(&tmp, (trs, tcs), beta, out, span);
    }
}

fn check_tile(d: &UkrDescriptor, out: &OutputTarget<'_>) -> Result<(usize, usize)> {
    let (m, n) = out.real_dims();
    if m > d.mr || n > d.nr {
        return Err(GemmError::ShapeMismatch((m, n), (d.mr, d.nr)));
    }
    Ok((m, n))
}

/// Run the microkernel into a temporary tile and fold it into `c`.
///
/// `c` is a single microtile of C in any datatype and stride; `kind` says
/// how its real coordinates are laid out. Complex beta requires an
/// interleaved kind.
pub fn virtual_ukr_temp<T: Real>(
    d: &UkrDescriptor,
    p: MicroPanelPair<'_, T>,
    beta: Scalar,
    c: &mut MatrixViewMut<'_>,
    kind: OutputKind,
    fc: &mut FlopCounter,
) -> Result<()> {
    if T::PRECISION != d.precision {
        return Err(GemmError::BufferMismatch);
    }
    let out = OutputTarget::new(c, kind)?;
    let (m, n) = check_tile(d, &out)?;
    if !beta.is_real() && kind == OutputKind::Real {
        return Err(GemmError::Domain {
            expected: crate::dtypes::Domain::Complex,
        });
    }
    // SAFETY: `out` borrows `c` exclusively.
    unsafe { ukr_tile(d, p, beta.value(), &out, (0, 0, m, n), false, fc) };
    Ok(())
}

/// One complex microtile via the 1m method.
///
/// `a` and `b` are single-panel packed blocks in the formats of `variant`;
/// `c` is the complex microtile they produce. Goes direct when `c`
/// flattens along the variant's axis and beta is real.
pub fn virtual_ukr_1m(
    d: &UkrDescriptor,
    a: &PackedBlock,
    b: &PackedBlock,
    beta: Scalar,
    c: &mut MatrixViewMut<'_>,
    variant: OneMVariant,
    fc: &mut FlopCounter,
) -> Result<()> {
    if (a.format, b.format) != variant.formats() {
        return Err(GemmError::FormatVariantMismatch {
            variant: variant.name(),
        });
    }
    if a.dtype.precision != d.precision || b.dtype.precision != d.precision {
        return Err(GemmError::BufferMismatch);
    }
    if a.panel_dim != d.mr || b.panel_dim != d.nr || a.panel_len != b.panel_len {
        return Err(GemmError::ShapeMismatch(
            (a.panel_dim, a.panel_len),
            (b.panel_dim, b.panel_len),
        ));
    }
    let out = OutputTarget::new(c, variant.kind())?;
    let (m, n) = check_tile(d, &out)?;
    if (m, n) != (a.rows, b.cols) {
        return Err(GemmError::ShapeMismatch((m, n), (a.rows, b.cols)));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    let k = a.panel_len;
    let span = (0, 0, m, n);
    // SAFETY: `out` borrows `c` exclusively.
    unsafe {
        match (&a.buf, &b.buf) {
            (PackedBuf::F32(x), PackedBuf::F32(y)) => {
                ukr_tile(d, MicroPanelPair { a: x, b: y, k }, beta.value(), &out, span, true, fc)
            }
            (PackedBuf::F64(x), PackedBuf::F64(y)) => {
                ukr_tile(d, MicroPanelPair { a: x, b: y, k }, beta.value(), &out, span, true, fc)
            }
            _ => return Err(GemmError::BufferMismatch),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtypes::{CaseId, Datatype, Matrix, Precision, StorageKind};
    use crate::oracle::score;
    use crate::packing::{pack_block, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desc(p: Precision, r: usize, pref: IoPreference) -> UkrDescriptor {
        UkrDescriptor {
            precision: p,
            mr: r,
            nr: r,
            preference: pref,
        }
    }

    fn pack_pair(
        a: &Matrix,
        b: &Matrix,
        variant: OneMVariant,
        target: Datatype,
        reg: usize,
    ) -> (PackedBlock, PackedBlock) {
        let (fa, fb) = variant.formats();
        (
            pack_block(&a.view(), Side::Left, fa, false, Scalar::one(), target, reg).unwrap(),
            pack_block(&b.view(), Side::Right, fb, false, Scalar::one(), target, reg).unwrap(),
        )
    }

    #[test]
    fn onem_single_element() {
        let a = Matrix::from_fn(Datatype::Z, 1, 1, StorageKind::Column, |_, _| Complex64::new(1.0, 2.0));
        let b = Matrix::from_fn(Datatype::Z, 1, 1, StorageKind::Column, |_, _| Complex64::new(3.0, 4.0));
        for variant in [OneMVariant::Column, OneMVariant::Row] {
            let d = desc(Precision::Double, 4, IoPreference::Column);
            let (pa, pb) = pack_pair(&a, &b, variant, Datatype::D, 4);
            let mut c = Matrix::zeros(Datatype::Z, 1, 1, StorageKind::Column);
            c.fill_raw(f64::NAN);
            let mut fc = FlopCounter::new();
            virtual_ukr_1m(&d, &pa, &pb, Scalar::zero(), &mut c.view_mut(), variant, &mut fc).unwrap();
            assert_eq!(c.get(0, 0), Complex64::new(-5.0, 10.0));
            assert_eq!(fc.count(), 2 * 4 * 4 * 2);
        }
    }

    #[test]
    fn onem_rejects_wrong_formats() {
        let a = Matrix::from_fn(Datatype::Z, 1, 1, StorageKind::Column, |_, _| Complex64::new(1.0, 2.0));
        let d = desc(Precision::Double, 4, IoPreference::Column);
        let (pa, pb) = pack_pair(&a, &a, OneMVariant::Row, Datatype::D, 4);
        let mut c = Matrix::zeros(Datatype::Z, 1, 1, StorageKind::Column);
        let r = virtual_ukr_1m(
            &d,
            &pa,
            &pb,
            Scalar::zero(),
            &mut c.view_mut(),
            OneMVariant::Column,
            &mut FlopCounter::new(),
        );
        assert!(matches!(r, Err(GemmError::FormatVariantMismatch { .. })));
    }

    /// Every path against the complex oracle, for k in {0, 1, 2, 3, KC}.
    #[test]
    fn onem_matches_oracle_for_all_depths() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for variant in [OneMVariant::Column, OneMVariant::Row] {
            for prec in [Precision::Single, Precision::Double] {
                let reg = if prec == Precision::Single { 8 } else { 4 };
                let kc = if prec == Precision::Single { 256 } else { 128 };
                let (m, n) = match variant {
                    OneMVariant::Column => (reg / 2, reg),
                    OneMVariant::Row => (reg, reg / 2),
                };
                let zt = Datatype::Z.with_precision(prec);
                for k in [0, 1, 2, 3, kc] {
                    for (beta, storage) in [
                        (Scalar::one(), StorageKind::Column),
                        (Scalar::one(), StorageKind::Row),
                        (Scalar::complex(0.3, -0.5), StorageKind::Column),
                        (Scalar::real(0.25), StorageKind::General),
                    ] {
                        let a = Matrix::random(zt, m, k, StorageKind::Column, &mut rng);
                        let b = Matrix::random(zt, k, n, StorageKind::Row, &mut rng);
                        let c0 = Matrix::random(zt, m, n, storage, &mut rng);
                        let d = desc(prec, reg, IoPreference::Column);
                        let (pa, pb) = pack_pair(&a, &b, variant, Datatype::D.with_precision(prec), reg);
                        let mut c = c0.clone();
                        let mut fc = FlopCounter::new();
                        let beta = Scalar::new(beta.re, beta.im, zt);
                        virtual_ukr_1m(&d, &pa, &pb, beta, &mut c.view_mut(), variant, &mut fc).unwrap();
                        let v = score(
                            Scalar::one(),
                            &a.view(),
                            &b.view(),
                            beta,
                            &c0.view(),
                            &c.view(),
                            CaseId::Three,
                            prec,
                        )
                        .unwrap();
                        assert!(v <= 1.0, "{variant:?} {prec:?} k={k} beta={beta:?} {storage:?}: {v}");
                        let extra = if beta.re == 1.0 && beta.im == 0.0 { 0 } else { reg * reg };
                        assert_eq!(fc.count() as usize, 2 * reg * reg * 2 * k + extra);
                    }
                }
            }
        }
    }

    #[test]
    fn direct_and_temp_routes_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = desc(Precision::Double, 4, IoPreference::Column);
        let a = Matrix::random(Datatype::Z, 2, 9, StorageKind::Column, &mut rng);
        let b = Matrix::random(Datatype::Z, 9, 4, StorageKind::Column, &mut rng);
        let c0 = Matrix::random(Datatype::Z, 2, 4, StorageKind::Column, &mut rng);
        let (pa, pb) = pack_pair(&a, &b, OneMVariant::Column, Datatype::D, 4);
        for beta in [0.0, 1.0, 0.7] {
            let mut direct = c0.clone();
            virtual_ukr_1m(
                &d,
                &pa,
                &pb,
                Scalar::real(beta),
                &mut direct.view_mut(),
                OneMVariant::Column,
                &mut FlopCounter::new(),
            )
            .unwrap();
            let mut temp = c0.clone();
            let pair = MicroPanelPair {
                a: pa.f64_panel(0).unwrap(),
                b: pb.f64_panel(0).unwrap(),
                k: pa.panel_len,
            };
            virtual_ukr_temp(
                &d,
                pair,
                Scalar::real(beta),
                &mut temp.view_mut(),
                OutputKind::InterleavedRows,
                &mut FlopCounter::new(),
            )
            .unwrap();
            assert_eq!(direct.raw_bits(), temp.raw_bits(), "beta={beta}");
        }
    }

    #[test]
    fn real_embedding_matches_real_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = desc(Precision::Double, 4, IoPreference::Column);
        let ar = Matrix::random(Datatype::D, 4, 6, StorageKind::Column, &mut rng);
        let br = Matrix::random(Datatype::D, 6, 4, StorageKind::Column, &mut rng);
        let up = |x: &Matrix| Matrix::from_fn(Datatype::Z, x.m(), x.n(), StorageKind::Column, |i, j| x.get(i, j));
        let (az, bz) = (up(&ar), up(&br));

        let pa = pack_block(
            &ar.view(),
            Side::Left,
            PackFormat::Standard,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        let pb = pack_block(
            &br.view(),
            Side::Right,
            PackFormat::Standard,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        let mut creal = vec![0.0f64; 16];
        let mut t = TileMut::new(&mut creal, 0, 4, 4, 1, 4).unwrap();
        gemm_ukr(
            &d,
            MicroPanelPair {
                a: pa.f64_panel(0).unwrap(),
                b: pb.f64_panel(0).unwrap(),
                k: 6,
            },
            0.0,
            &mut t,
            &mut FlopCounter::new(),
        );

        let qa = pack_block(
            &az.view(),
            Side::Left,
            PackFormat::OneR,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        let mut cz = Matrix::zeros(Datatype::Z, 4, 2, StorageKind::Row);
        // only two complex columns fit a 4-wide real tile
        let qb2 = pack_block(
            &bz.view().submatrix(0, 0, 6, 2),
            Side::Right,
            PackFormat::OneE,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        virtual_ukr_1m(
            &d,
            &qa,
            &qb2,
            Scalar::zero(),
            &mut cz.view_mut(),
            OneMVariant::Row,
            &mut FlopCounter::new(),
        )
        .unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(cz.get(i, j).re.to_bits(), creal[i + 4 * j].to_bits());
                assert_eq!(cz.get(i, j).im, 0.0);
            }
        }
    }

    #[test]
    fn complex_beta_rotates() {
        let d = desc(Precision::Double, 4, IoPreference::Row);
        let mut c = Matrix::from_fn(Datatype::Z, 1, 1, StorageKind::Column, |_, _| Complex64::new(1.0, 2.0));
        let pair = MicroPanelPair::<f64> { a: &[], b: &[], k: 0 };
        for kind in [OutputKind::InterleavedRows, OutputKind::InterleavedCols] {
            let mut fc = FlopCounter::new();
            virtual_ukr_temp(&d, pair, Scalar::complex(0.0, 1.0), &mut c.view_mut(), kind, &mut fc).unwrap();
            assert_eq!(fc.count(), 16);
        }
        // i * i * (1 + 2i)
        assert_eq!(c.get(0, 0), Complex64::new(-1.0, -2.0));
    }

    #[test]
    fn typecast_rounds_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = desc(Precision::Double, 4, IoPreference::Column);
        let a = Matrix::random(Datatype::D, 4, 7, StorageKind::Column, &mut rng);
        let b = Matrix::random(Datatype::D, 7, 4, StorageKind::Column, &mut rng);
        let pa = pack_block(
            &a.view(),
            Side::Left,
            PackFormat::Standard,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        let pb = pack_block(
            &b.view(),
            Side::Right,
            PackFormat::Standard,
            false,
            Scalar::one(),
            Datatype::D,
            4,
        )
        .unwrap();
        let pair = MicroPanelPair {
            a: pa.f64_panel(0).unwrap(),
            b: pb.f64_panel(0).unwrap(),
            k: 7,
        };

        let mut wide = Matrix::zeros(Datatype::D, 4, 4, StorageKind::Column);
        virtual_ukr_temp(
            &d,
            pair,
            Scalar::zero(),
            &mut wide.view_mut(),
            OutputKind::Real,
            &mut FlopCounter::new(),
        )
        .unwrap();
        let mut narrow = Matrix::zeros(Datatype::S, 4, 4, StorageKind::Row);
        narrow.fill_raw(f64::NAN);
        virtual_ukr_temp(
            &d,
            pair,
            Scalar::zero(),
            &mut narrow.view_mut(),
            OutputKind::Real,
            &mut FlopCounter::new(),
        )
        .unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(narrow.get(i, j).re, wide.get(i, j).re as f32 as f64);
            }
        }
    }

    #[test]
    fn temp_rejects_oversized_tile_and_wrong_kind() {
        let d = desc(Precision::Double, 4, IoPreference::Column);
        let pair = MicroPanelPair::<f64> { a: &[], b: &[], k: 0 };
        let mut c = Matrix::zeros(Datatype::Z, 3, 1, StorageKind::Column);
        let r = virtual_ukr_temp(
            &d,
            pair,
            Scalar::one(),
            &mut c.view_mut(),
            OutputKind::InterleavedRows,
            &mut FlopCounter::new(),
        );
        assert!(matches!(r, Err(GemmError::ShapeMismatch(..))));
        let r = virtual_ukr_temp(
            &d,
            pair,
            Scalar::one(),
            &mut c.view_mut(),
            OutputKind::Real,
            &mut FlopCounter::new(),
        );
        assert!(matches!(r, Err(GemmError::Domain { .. })));
    }
}
