//! The five loops around the microkernel.
//!
//! Loop 5 walks n by NC, loop 4 walks k by KC and packs B̃, loop 3 walks m by
//! MC and packs Ã, and the macrokernel (loops 2 and 1) walks NR and MR. Only
//! loop 3 runs in parallel. Blocks are cut in source elements, so a complex
//! element expanded by a packing format is never split across blocks.

use num_complex::Complex64;

use crate::dtypes::{Elems, Layout, MatrixView, MatrixViewMut, Precision, Real};
use crate::error::Result;
use crate::kernels::{ukr_tile, FlopCounter, MicroPanelPair, OutputTarget, UkrDescriptor};
use crate::packing::{expansion, pack_into, PackFormat, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockingParams {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
    pub threads: usize,
}

/// How microkernel results reach C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacroMode {
    Standard,
    /// Computation precision differs from C's; each microtile goes through a
    /// temporary and is typecast as it is accumulated.
    AccumulateTypecast,
}

/// One packed-side input of the blocked driver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Operand<'a> {
    pub elems: Elems<'a>,
    pub layout: Layout,
    pub format: PackFormat,
    pub conj: bool,
    pub scale: Complex64,
}

/// Everything the loops need besides the operands.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopSetup {
    pub comp: Precision,
    pub ukr: UkrDescriptor,
    pub params: BlockingParams,
    pub beta: Complex64,
    /// allow microkernels to write C in place
    pub direct: bool,
}

/// `out := beta * out + op(a) op(b)` over the real product space of `out`.
pub(crate) fn run_blocked(
    a: &Operand<'_>,
    b: &Operand<'_>,
    out: &OutputTarget<'_>,
    s: &LoopSetup,
    fc: &mut FlopCounter,
) {
    match s.comp {
        Precision::Single => run_typed::<f32>(a, b, out, s, fc),
        Precision::Double => run_typed::<f64>(a, b, out, s, fc),
    }
}

/// Geometry of the blocked loops in source and real (packed) units.
struct Geometry {
    m: usize,
    n: usize,
    k: usize,
    rexp: usize,
    cexp: usize,
    mc: usize,
    nc: usize,
    kc: usize,
}

impl Geometry {
    fn new(a: &Operand<'_>, b: &Operand<'_>, p: &BlockingParams) -> Geometry {
        let (rexp, kexp) = expansion(Side::Left, a.format, a.layout.dtype.is_complex());
        let (cexp, kexp_b) = expansion(Side::Right, b.format, b.layout.dtype.is_complex());
        assert_eq!(kexp, kexp_b, "packed depths disagree");
        Geometry {
            m: a.layout.m,
            n: b.layout.n,
            k: a.layout.n,
            rexp,
            cexp,
            mc: (p.mc / rexp).max(1),
            nc: (p.nc / cexp).max(1),
            kc: (p.kc / kexp).max(1),
        }
    }
}

fn run_typed<T: Real>(a: &Operand<'_>, b: &Operand<'_>, out: &OutputTarget<'_>, s: &LoopSetup, fc: &mut FlopCounter) {
    let g = Geometry::new(a, b, &s.params);
    let (mr, nr) = (s.ukr.mr, s.ukr.nr);
    debug_assert_eq!(out.real_dims(), (g.m * g.rexp, g.n * g.cexp));
    if g.m == 0 || g.n == 0 {
        return;
    }
    let m_blocks = g.m.div_ceil(g.mc);
    let threads = s.params.threads.clamp(1, m_blocks);
    // k = 0 still needs one pass to apply beta
    let k_starts: Vec<usize> = if g.k == 0 {
        vec![0]
    } else {
        (0..g.k).step_by(g.kc).collect()
    };

    let mut b_buf: Vec<T> = Vec::new();
    let mut a_bufs: Vec<Vec<T>> = (0..threads).map(|_| Vec::new()).collect();

    for jc in (0..g.n).step_by(g.nc) {
        let ncur = g.nc.min(g.n - jc);
        for &pc in &k_starts {
            let kcur = g.kc.min(g.k - pc);
            let beta = if pc == 0 { s.beta } else { Complex64::new(1.0, 0.0) };
            let bl = b.layout.submatrix(pc, jc, kcur, ncur);
            let bshape = pack_into(b.elems, &bl, Side::Right, b.format, b.conj, b.scale, nr, &mut b_buf);
            let b_packed = &b_buf[..];

            let block = |ib: usize, a_buf: &mut Vec<T>, fc: &mut FlopCounter| {
                let ic = ib * g.mc;
                let mcur = g.mc.min(g.m - ic);
                let al = a.layout.submatrix(ic, pc, mcur, kcur);
                let ashape = pack_into(a.elems, &al, Side::Left, a.format, a.conj, a.scale, mr, a_buf);
                debug_assert_eq!(ashape.depth, bshape.depth);
                let depth = ashape.depth;
                let (rows, cols) = (ashape.extent, bshape.extent);
                for jr in 0..bshape.panels {
                    let bp = &b_packed[jr * nr * depth..(jr + 1) * nr * depth];
                    let n_t = nr.min(cols - jr * nr);
                    for ir in 0..ashape.panels {
                        let ap = &a_buf[ir * mr * depth..(ir + 1) * mr * depth];
                        let m_t = mr.min(rows - ir * mr);
                        let window = (ic * g.rexp + ir * mr, jc * g.cexp + jr * nr, m_t, n_t);
                        let pair = MicroPanelPair { a: ap, b: bp, k: depth };
                        // SAFETY: m-blocks are disjoint and each is owned by
                        // exactly one thread; tiles within a block are disjoint.
                        unsafe { ukr_tile(&s.ukr, pair, beta, out, window, s.direct, fc) };
                    }
                }
            };

            if threads == 1 {
                for ib in 0..m_blocks {
                    block(ib, &mut a_bufs[0], fc);
                }
            } else {
                let counts: Vec<FlopCounter> = std::thread::scope(|scope| {
                    let handles: Vec<_> = a_bufs
                        .iter_mut()
                        .enumerate()
                        .map(|(tid, buf)| {
                            let block = &block;
                            scope.spawn(move || {
                                let mut local = FlopCounter::new();
                                for ib in (tid..m_blocks).step_by(threads) {
                                    block(ib, buf, &mut local);
                                }
                                local
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("macrokernel thread panicked"))
                        .collect()
                });
                for c in &counts {
                    fc.merge(c);
                }
            }
        }
    }
}

/// Run a resolved plan with no C_temp: the transformed operands of `plan`
/// are read from `a`/`b` and the result is written into `c`.
pub fn gemm_blocked(
    plan: &crate::dispatch::ExecutionPlan,
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    c: &mut MatrixViewMut<'_>,
    params: &BlockingParams,
    fc: &mut FlopCounter,
) -> Result<()> {
    let (left, right) = plan.operands(a, b)?;
    let mut c_eff = c.relayout(plan.c_eff)?;
    let out = OutputTarget::new(&mut c_eff, plan.output_kind)?;
    let setup = LoopSetup {
        comp: plan.comp_prec,
        ukr: plan.ukr,
        params: *params,
        beta: plan.beta_eff.value(),
        direct: plan.orientation_ok,
    };
    run_blocked(&left, &right, &out, &setup, fc);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtypes::{Datatype, Matrix, Scalar, StorageKind};
    use crate::kernels::{IoPreference, OutputKind};
    use crate::oracle::{oracle_gemm, score};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(mc: usize, nc: usize, kc: usize, r: usize, threads: usize) -> BlockingParams {
        BlockingParams {
            mc,
            nc,
            kc,
            mr: r,
            nr: r,
            threads,
        }
    }

    fn operand<'a>(m: &'a Matrix) -> Operand<'a> {
        Operand {
            elems: m.view().elems(),
            layout: *m.layout(),
            format: PackFormat::Standard,
            conj: false,
            scale: Complex64::new(1.0, 0.0),
        }
    }

    fn real_gemm(a: &Matrix, b: &Matrix, c: &mut Matrix, beta: f64, p: BlockingParams) -> u64 {
        let prec = c.dtype().precision;
        let ukr = UkrDescriptor {
            precision: prec,
            mr: p.mr,
            nr: p.nr,
            preference: IoPreference::Column,
        };
        let (oa, ob) = (operand(a), operand(b));
        let mut v = c.view_mut();
        let out = OutputTarget::new(&mut v, OutputKind::Real).unwrap();
        let s = LoopSetup {
            comp: prec,
            ukr,
            params: p,
            beta: Complex64::new(beta, 0.0),
            direct: true,
        };
        let mut fc = FlopCounter::new();
        run_blocked(&oa, &ob, &out, &s, &mut fc);
        fc.count()
    }

    #[test]
    fn one_by_one() {
        let a = Matrix::from_fn(Datatype::D, 1, 1, StorageKind::Column, |_, _| Complex64::new(2.0, 0.0));
        let b = Matrix::from_fn(Datatype::D, 1, 1, StorageKind::Column, |_, _| Complex64::new(3.0, 0.0));
        let mut c = Matrix::from_fn(Datatype::D, 1, 1, StorageKind::Column, |_, _| Complex64::new(4.0, 0.0));
        real_gemm(&a, &b, &mut c, 1.0, params(64, 512, 128, 4, 1));
        assert_eq!(c.get(0, 0).re, 10.0);
    }

    #[test]
    fn two_k_blocks_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 129;
        let a = Matrix::random(Datatype::D, n, n, StorageKind::Column, &mut rng);
        let b = Matrix::random(Datatype::D, n, n, StorageKind::Column, &mut rng);
        let c0 = Matrix::random(Datatype::D, n, n, StorageKind::Column, &mut rng);
        let mut c = c0.clone();
        real_gemm(&a, &b, &mut c, 1.0, params(64, 512, 128, 4, 1));
        let v = score(
            Scalar::one(),
            &a.view(),
            &b.view(),
            Scalar::one(),
            &c0.view(),
            &c.view(),
            crate::dtypes::CaseId::Zero,
            Precision::Double,
        )
        .unwrap();
        assert!(v <= 1.0, "{v}");
    }

    #[test]
    fn masked_writeback_leaves_surroundings() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = Matrix::random(Datatype::D, 5, 7, StorageKind::Column, &mut rng);
        let b = Matrix::random(Datatype::D, 7, 3, StorageKind::Column, &mut rng);
        let mut big = Matrix::random(Datatype::D, 8, 8, StorageKind::Column, &mut rng);
        let before = big.raw_bits();
        let window = Layout::new(8 + 2, 5, 3, 1, 8, Datatype::D).unwrap();
        let c0 = Matrix::from_fn(Datatype::D, 5, 3, StorageKind::Column, |i, j| big.get(i + 2, j + 1));
        {
            let mut v = big.view_mut();
            let mut w = v.relayout(window).unwrap();
            let out = OutputTarget::new(&mut w, OutputKind::Real).unwrap();
            let s = LoopSetup {
                comp: Precision::Double,
                ukr: UkrDescriptor {
                    precision: Precision::Double,
                    mr: 4,
                    nr: 4,
                    preference: IoPreference::Column,
                },
                params: params(4, 4, 2, 4, 1),
                beta: Complex64::new(1.0, 0.0),
                direct: true,
            };
            run_blocked(&operand(&a), &operand(&b), &out, &s, &mut FlopCounter::new());
        }
        let after = big.raw_bits();
        let inside: Vec<usize> = window.addressed_offsets();
        for (o, (x, y)) in before.iter().zip(&after).enumerate() {
            if !inside.contains(&o) {
                assert_eq!(x, y, "offset {o} outside the window changed");
            }
        }
        let r = oracle_gemm(
            Scalar::one(),
            &a.view(),
            &b.view(),
            Scalar::one(),
            &c0.view(),
            crate::dtypes::CaseId::Zero,
        )
        .unwrap();
        for i in 0..5 {
            for j in 0..3 {
                assert!((big.get(i + 2, j + 1) - r.c.get(i, j)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn blocking_and_threads_do_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (m, n, k) = (37, 29, 300);
        let a = Matrix::random(Datatype::S, m, k, StorageKind::Row, &mut rng);
        let b = Matrix::random(Datatype::S, k, n, StorageKind::Column, &mut rng);
        let c0 = Matrix::random(Datatype::S, m, n, StorageKind::Column, &mut rng);
        let mut reference = c0.clone();
        real_gemm(&a, &b, &mut reference, 0.5, params(128, 1024, 256, 8, 1));
        for p in [
            params(8, 8, 1, 8, 1),
            params(16, 24, 77, 8, 2),
            params(8, 16, 300, 8, 4),
            params(128, 1024, 256, 8, 3),
        ] {
            let mut c = c0.clone();
            real_gemm(&a, &b, &mut c, 0.5, p);
            assert_eq!(c.raw_bits(), reference.raw_bits(), "{p:?}");
        }
    }

    #[test]
    fn flops_exact_for_full_tiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = Matrix::random(Datatype::D, 8, 5, StorageKind::Column, &mut rng);
        let b = Matrix::random(Datatype::D, 5, 12, StorageKind::Column, &mut rng);
        let mut c = Matrix::zeros(Datatype::D, 8, 12, StorageKind::Column);
        assert_eq!(real_gemm(&a, &b, &mut c, 1.0, params(4, 4, 2, 4, 2)), 2 * 8 * 12 * 5);
        assert_eq!(
            real_gemm(&a, &b, &mut c, 0.0, params(64, 512, 128, 4, 1)),
            2 * 8 * 12 * 5
        );
    }

    #[test]
    fn beta_zero_overwrites_and_k_zero_scales() {
        let a = Matrix::zeros(Datatype::D, 3, 0, StorageKind::Column);
        let b = Matrix::zeros(Datatype::D, 0, 2, StorageKind::Column);
        let mut c = Matrix::from_fn(Datatype::D, 3, 2, StorageKind::Column, |i, j| {
            Complex64::new((i + j) as f64, 0.0)
        });
        real_gemm(&a, &b, &mut c, 2.0, params(64, 512, 128, 4, 1));
        assert_eq!(c.get(2, 1).re, 6.0);
        c.fill_raw(f64::NAN);
        real_gemm(&a, &b, &mut c, 0.0, params(64, 512, 128, 4, 1));
        assert!(c.to_dense().iter().all(|z| z.re == 0.0));
    }
}
