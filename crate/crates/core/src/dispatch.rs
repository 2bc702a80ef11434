//! Planning and execution of a mixed-domain, mixed-precision GEMM.
//!
//! [`plan`] turns the caller's operands into an [`ExecutionPlan`]: the
//! domain case, the scalar policy, a possible logical transposition of the
//! whole operation, the per-case operand transforms and packing formats,
//! target datatypes, the macrokernel mode and the C_temp decision.
//! [`gemm`] executes it.

use num_complex::Complex64;

use crate::config::{CTempPolicy, Config};
use crate::dtypes::{
    typecast_scalar, CaseId, Datatype, Domain, Layout, Matrix, MatrixView, MatrixViewMut, Part, Precision, Scalar,
    StorageKind,
};
use crate::error::{GemmError, Result};
use crate::gemm_core::{gemm_blocked, run_blocked, BlockingParams, LoopSetup, MacroMode, Operand};
use crate::kernels::{
    product_strides, FlopCounter, IoPreference, OneMVariant, OutputKind, OutputTarget, UkrDescriptor,
};
use crate::packing::{PackFormat, Side};

/// Which microkernel wrapper the tiles use in the standard macrokernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UkrPath {
    Direct,
    Temp,
    OneM(OneMVariant),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CTempMode {
    /// beta = 0: C := C_temp
    CopyBack,
    /// C := beta C + C_temp
    AccumulateBack,
}

/// Shape and format of the temporary that absorbs the product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CTempDescriptor {
    /// effective domain of C, computation precision
    pub dtype: Datatype,
    pub m: usize,
    pub n: usize,
    pub storage: StorageKind,
    pub mode: CTempMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    /// case of the operation as called
    pub case: CaseId,
    /// case actually executed (differs after a logical transposition)
    pub exec_case: CaseId,
    /// `C^T := B^T A^T` is computed; the left operand then lives in B's buffer
    pub logical_transpose: bool,
    pub a_eff: Layout,
    pub b_eff: Layout,
    pub c_eff: Layout,
    pub output_kind: OutputKind,
    pub pack_format_a: PackFormat,
    pub pack_format_b: PackFormat,
    pub conj_a: bool,
    pub conj_b: bool,
    pub target_dtype_a: Datatype,
    pub target_dtype_b: Datatype,
    pub comp_prec: Precision,
    pub macro_mode: MacroMode,
    pub ukr_path: UkrPath,
    /// C's product space is a strided view matching the kernel preference
    pub orientation_ok: bool,
    pub ctemp: Option<CTempDescriptor>,
    pub alpha_eff: Scalar,
    pub beta_eff: Scalar,
    /// which packed operand carries alpha
    pub alpha_side: Side,
    pub ukr: UkrDescriptor,
    pub blocking: BlockingParams,
}

impl ExecutionPlan {
    /// The two packed-side inputs, reading from the caller's A and B.
    pub(crate) fn operands<'a>(&self, a: &MatrixView<'a>, b: &MatrixView<'a>) -> Result<(Operand<'a>, Operand<'a>)> {
        let (left, right) = if self.logical_transpose { (b, a) } else { (a, b) };
        if left.elems().precision() != self.a_eff.dtype.precision
            || right.elems().precision() != self.b_eff.dtype.precision
        {
            return Err(GemmError::BufferMismatch);
        }
        // re-validate the effective layouts against the buffers
        let left = left.relayout(self.a_eff)?;
        let right = right.relayout(self.b_eff)?;
        let alpha = self.alpha_eff.value();
        let one = Complex64::new(1.0, 0.0);
        let op = |v: &MatrixView<'a>, format, conj, side| Operand {
            elems: v.elems(),
            layout: *v.layout(),
            format,
            conj,
            scale: if side == self.alpha_side { alpha } else { one },
        };
        Ok((
            op(&left, self.pack_format_a, self.conj_a, Side::Left),
            op(&right, self.pack_format_b, self.conj_b, Side::Right),
        ))
    }
}

/// Case of `C := A B` from the operand domains.
pub fn classify_case(dc: Domain, da: Domain, db: Domain) -> CaseId {
    use Domain::{Complex as C, Real as R};
    match (dc, da, db) {
        (R, R, R) => CaseId::Zero,
        (R, C, R) => CaseId::OneA,
        (R, R, C) => CaseId::OneB,
        (C, R, R) => CaseId::OneC,
        (R, C, C) => CaseId::TwoAB,
        (C, C, R) => CaseId::TwoAC,
        (C, R, C) => CaseId::TwoBC,
        (C, C, C) => CaseId::Three,
    }
}

/// The computation precision is a property of C.
pub fn resolve_comp_precision(c: &Layout) -> Precision {
    c.comp_prec
}

/// Flops the case performs for an `m x n x k` product.
pub fn flops_of_case(case: CaseId, m: usize, n: usize, k: usize) -> u64 {
    let per = match case {
        CaseId::Zero | CaseId::OneA | CaseId::OneB | CaseId::OneC => 2,
        CaseId::TwoAB | CaseId::TwoAC | CaseId::TwoBC => 4,
        CaseId::Three => 8,
    };
    per * m as u64 * n as u64 * k as u64
}

/// Resolve alpha and beta for `case`.
///
/// Alpha is cast to the computation precision; it may only be complex in
/// case 3 (case 0 drops its imaginary part). Beta is cast to C's storage
/// precision and stays complex only for cases 2ac, 2bc and 3.
pub fn apply_scalar_policy(
    alpha: Scalar,
    beta: Scalar,
    case: CaseId,
    comp: Precision,
    c_dtype: Datatype,
) -> Result<(Scalar, Scalar)> {
    if case.restricts_alpha() && alpha.im != 0.0 {
        return Err(GemmError::UnsupportedComplexAlpha { case, im: alpha.im });
    }
    let alpha_domain = if case == CaseId::Three {
        Domain::Complex
    } else {
        Domain::Real
    };
    let beta_domain = match case {
        CaseId::TwoAC | CaseId::TwoBC | CaseId::Three => Domain::Complex,
        _ => Domain::Real,
    };
    Ok((
        typecast_scalar(alpha, Datatype::new(alpha_domain, comp)),
        typecast_scalar(beta, Datatype::new(beta_domain, c_dtype.precision)),
    ))
}

fn check_dims(a: &Layout, b: &Layout, c: &Layout) -> Result<()> {
    if a.m != c.m || b.n != c.n || a.n != b.m {
        return Err(GemmError::DimensionMismatch {
            m: c.m,
            n: c.n,
            am: a.m,
            ak: a.n,
            bk: b.m,
            bn: b.n,
        });
    }
    Ok(())
}

/// Per-case operand transforms, for an already oriented problem.
struct Transform {
    a: Layout,
    b: Layout,
    c: Layout,
    fa: PackFormat,
    fb: PackFormat,
    conj_a: bool,
    conj_b: bool,
    kind: OutputKind,
    alpha_side: Side,
}

fn transform(case: CaseId, a: Layout, b: Layout, c: Layout, pref: IoPreference) -> Result<Transform> {
    let std = PackFormat::Standard;
    let mut t = Transform {
        a,
        b,
        c,
        fa: std,
        fb: std,
        conj_a: a.conj,
        conj_b: b.conj,
        kind: OutputKind::Real,
        alpha_side: Side::Left,
    };
    match case {
        CaseId::Zero => {}
        CaseId::OneA => {
            t.a = a.projection(Part::Re)?;
            t.conj_a = false;
        }
        CaseId::OneB => {
            t.b = b.projection(Part::Re)?;
            t.conj_b = false;
        }
        CaseId::OneC => t.c = c.projection(Part::Re)?,
        CaseId::TwoAB => {
            // Re(a b) = re(a) re(b) - im(a) im(b): 1r on both, b conjugated
            t.fa = PackFormat::OneR;
            t.fb = PackFormat::OneR;
            t.conj_b = !b.conj;
        }
        CaseId::TwoAC => t.kind = OutputKind::InterleavedRows,
        CaseId::TwoBC => t.kind = OutputKind::InterleavedCols,
        CaseId::Three => match OneMVariant::for_preference(pref) {
            OneMVariant::Column => {
                t.fa = PackFormat::OneE;
                t.fb = PackFormat::OneR;
                t.kind = OutputKind::InterleavedRows;
            }
            OneMVariant::Row => {
                t.fa = PackFormat::OneR;
                t.fb = PackFormat::OneE;
                t.kind = OutputKind::InterleavedCols;
                t.alpha_side = Side::Right;
            }
        },
    }
    Ok(t)
}

fn kind_of(case: CaseId, pref: IoPreference) -> OutputKind {
    match case {
        CaseId::TwoAC => OutputKind::InterleavedRows,
        CaseId::TwoBC => OutputKind::InterleavedCols,
        CaseId::Three => match pref {
            IoPreference::Column => OutputKind::InterleavedRows,
            IoPreference::Row => OutputKind::InterleavedCols,
        },
        _ => OutputKind::Real,
    }
}

fn orientation_ok(c: &Layout, kind: OutputKind, pref: IoPreference) -> bool {
    match product_strides(c, kind) {
        Some((rs, cs)) => match pref {
            IoPreference::Column => rs == 1,
            IoPreference::Row => cs == 1,
        },
        None => false,
    }
}

/// Resolve every decision for `C := alpha op(A) op(B) + beta C`.
pub fn plan(alpha: Scalar, a: &Layout, b: &Layout, beta: Scalar, c: &Layout, config: &Config) -> Result<ExecutionPlan> {
    check_dims(a, b, c)?;
    let comp = resolve_comp_precision(c);
    let case = classify_case(c.dtype.domain, a.dtype.domain, b.dtype.domain);
    let (alpha_eff, beta_eff) = apply_scalar_policy(alpha, beta, case, comp, c.dtype)?;
    let ukr = config.ukr(comp);
    let blocking = config.blocking(comp);
    let pref = ukr.preference;

    let transpose = match case {
        CaseId::OneC => false,
        CaseId::TwoAC => pref == IoPreference::Row,
        CaseId::TwoBC => pref == IoPreference::Column,
        _ => {
            let ct = c.transposed();
            !orientation_ok(c, kind_of(case, pref), pref) && orientation_ok(&ct, kind_of(case.transposed(), pref), pref)
        }
    };
    let (exec_case, ax, bx, cx) = if transpose {
        (case.transposed(), b.transposed(), a.transposed(), c.transposed())
    } else {
        (case, *a, *b, *c)
    };

    let mut t = transform(exec_case, ax, bx, cx, pref)?;
    if alpha_eff.is_zero() {
        // nothing of A or B is read; one empty k-block applies beta
        t.a = t.a.submatrix(0, 0, t.a.m, 0);
        t.b = t.b.submatrix(0, 0, 0, t.b.n);
    }
    let target_dtype_a = Datatype::new(t.a.dtype.domain, comp);
    let target_dtype_b = Datatype::new(t.b.dtype.domain, comp);
    t.a.target_dtype = target_dtype_a;
    t.b.target_dtype = target_dtype_b;

    let ok = orientation_ok(&t.c, t.kind, pref);
    let k = a.n;
    let c_prec = c.dtype.precision;
    let allowed = match config.ctemp {
        CTempPolicy::On => true,
        CTempPolicy::Auto => config.threads == 1,
        CTempPolicy::Off => false,
    };
    // case 1c writes a projection of C, which is never unit-stride; only the
    // depth decides there
    let orientation_trigger = !ok && exec_case != CaseId::OneC;
    let trigger = (exec_case == CaseId::OneC && k > blocking.kc) || comp != c_prec || orientation_trigger;
    let ctemp = (allowed && trigger).then(|| CTempDescriptor {
        dtype: Datatype::new(t.c.dtype.domain, comp),
        m: t.c.m,
        n: t.c.n,
        storage: match pref {
            IoPreference::Column => StorageKind::Column,
            IoPreference::Row => StorageKind::Row,
        },
        mode: if beta_eff.is_zero() {
            CTempMode::CopyBack
        } else {
            CTempMode::AccumulateBack
        },
    });

    let macro_mode = if comp != c_prec && ctemp.is_none() {
        MacroMode::AccumulateTypecast
    } else {
        MacroMode::Standard
    };
    let ukr_path = if exec_case == CaseId::Three {
        UkrPath::OneM(OneMVariant::for_preference(pref))
    } else if ctemp.is_some() || (ok && beta_eff.is_real()) {
        UkrPath::Direct
    } else {
        UkrPath::Temp
    };

    Ok(ExecutionPlan {
        case,
        exec_case,
        logical_transpose: transpose,
        a_eff: t.a,
        b_eff: t.b,
        c_eff: t.c,
        output_kind: t.kind,
        pack_format_a: t.fa,
        pack_format_b: t.fb,
        conj_a: t.conj_a,
        conj_b: t.conj_b,
        target_dtype_a,
        target_dtype_b,
        comp_prec: comp,
        macro_mode,
        ukr_path,
        orientation_ok: ok,
        ctemp,
        alpha_eff,
        beta_eff,
        alpha_side: t.alpha_side,
        ukr,
        blocking,
    })
}

/// Outcome of a [`gemm`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmReport {
    /// flops performed by the microkernels
    pub flops: u64,
    pub plan: ExecutionPlan,
}

fn overlaps((a0, a1): (usize, usize), (b0, b1): (usize, usize)) -> bool {
    a0 < a1 && b0 < b1 && a0 < b1 && b0 < a1
}

/// `C := alpha op(A) op(B) + beta C` with every datatype taken from the
/// views and the computation precision from C.
pub fn gemm(
    alpha: Scalar,
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    beta: Scalar,
    c: &mut MatrixViewMut<'_>,
    config: &Config,
) -> Result<GemmReport> {
    let cr = c.addr_range();
    if overlaps(cr, a.elems().addr_range()) || overlaps(cr, b.elems().addr_range()) {
        return Err(GemmError::Aliasing);
    }
    let plan = plan(alpha, a.layout(), b.layout(), beta, c.layout(), config)?;
    let mut fc = FlopCounter::new();
    if c.m() == 0 || c.n() == 0 {
        return Ok(GemmReport { flops: 0, plan });
    }
    match plan.ctemp {
        None => gemm_blocked(&plan, a, b, c, &plan.blocking, &mut fc)?,
        Some(d) => {
            let mut tmp = Matrix::zeros(d.dtype, d.m, d.n, d.storage);
            {
                let mut tv = tmp.view_mut();
                let out = OutputTarget::new(&mut tv, plan.output_kind)?;
                let (left, right) = plan.operands(a, b)?;
                let setup = LoopSetup {
                    comp: plan.comp_prec,
                    ukr: plan.ukr,
                    params: plan.blocking,
                    beta: Complex64::new(0.0, 0.0),
                    direct: true,
                };
                run_blocked(&left, &right, &out, &setup, &mut fc);
            }
            let mut ce = c.relayout(plan.c_eff)?;
            let beta = plan.beta_eff.value();
            for j in 0..d.n {
                for i in 0..d.m {
                    let t = tmp.get(i, j);
                    let v = match d.mode {
                        CTempMode::CopyBack => t,
                        CTempMode::AccumulateBack => beta * ce.get(i, j) + t,
                    };
                    ce.set(i, j, v);
                }
            }
        }
    }
    Ok(GemmReport {
        flops: fc.count(),
        plan,
    })
}
