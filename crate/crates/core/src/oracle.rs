//! Brute-force reference GEMM and the forward-error bound used to judge the
//! blocked implementation.
//!
//! The reference reads operands element by element through the view
//! accessors, interprets them per mixed-domain case, accumulates in double
//! (complex double where needed) and rounds once to C's storage datatype. It
//! shares no code with packing or the microkernels.

use num_complex::Complex64;

use crate::dtypes::{CaseId, Datatype, MatrixView, Precision, Scalar};
use crate::error::{GemmError, Result};

/// Column-major dense grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub m: usize,
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> T) -> Grid<T> {
        let mut data = Vec::with_capacity(m * n);
        for j in 0..n {
            for i in 0..m {
                data.push(f(i, j));
            }
        }
        Grid { m, n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i + j * self.m]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

impl Grid<Complex64> {
    pub fn from_view(v: &MatrixView<'_>) -> Grid<Complex64> {
        Grid::from_fn(v.m(), v.n(), |i, j| v.get(i, j))
    }
}

/// Reference output together with the per-element magnitude that scales the
/// error bound.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub c: Grid<Complex64>,
    pub magnitude: Grid<f64>,
}

/// Inputs to [`tolerance`].
#[derive(Debug, Clone)]
pub struct ErrorBoundParams {
    pub k: usize,
    pub eps_comp: f64,
    pub eps_out: f64,
    pub magnitude: Grid<f64>,
}

impl ErrorBoundParams {
    pub fn new(k: usize, comp: Precision, out: Datatype, magnitude: Grid<f64>) -> ErrorBoundParams {
        ErrorBoundParams {
            k,
            eps_comp: comp.eps(),
            eps_out: out.precision.eps(),
            magnitude,
        }
    }
}

/// Multiplier on `(k + 2) * eps_comp`; covers complex arithmetic and the
/// 1m expansion.
pub const COMP_FACTOR: f64 = 8.0;
/// Multiplier on `eps_out`; covers the final typecast and beta scaling.
pub const OUT_FACTOR: f64 = 4.0;

fn materialize(v: &MatrixView<'_>) -> Grid<Complex64> {
    Grid::from_fn(v.m(), v.n(), |i, j| v.get_logical(i, j))
}

fn re_only(g: Grid<Complex64>) -> Grid<Complex64> {
    Grid {
        data: g.data.into_iter().map(|z| Complex64::new(z.re, 0.0)).collect(),
        ..g
    }
}

/// Reference `C := alpha * op(A, B) + beta * C` for one mixed-domain case.
///
/// Alpha and beta are used at full double precision; the case decides which
/// parts of each operand participate:
/// * 1a / 1b use only the real part of A / B,
/// * 2ab keeps the real part of the complex product,
/// * 1c updates only the real part of C with `Re(alpha)` and `Re(beta)` and
///   copies the imaginary part through,
/// * 2ac / 2bc / 3 form the full complex product.
pub fn oracle_gemm(
    alpha: Scalar,
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    beta: Scalar,
    c_in: &MatrixView<'_>,
    case: CaseId,
) -> Result<OracleResult> {
    let (m, n, k) = (c_in.m(), c_in.n(), a.n());
    if a.m() != m || b.n() != n || b.m() != k {
        return Err(GemmError::DimensionMismatch {
            m,
            n,
            am: a.m(),
            ak: a.n(),
            bk: b.m(),
            bn: b.n(),
        });
    }

    let mut ga = materialize(a);
    let mut gb = materialize(b);
    match case {
        CaseId::OneA => ga = re_only(ga),
        CaseId::OneB => gb = re_only(gb),
        _ => {}
    }
    let gc = Grid::from_view(c_in);

    let alpha_v = alpha.value();
    let beta_v = beta.value();
    let out = c_in.dtype();
    let p = out.precision;
    let real_out = !out.is_complex();

    let mut c = Vec::with_capacity(m * n);
    let mut mag = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut abs = 0.0;
            for l in 0..k {
                let (x, y) = (ga.get(i, l), gb.get(l, j));
                acc += x * y;
                abs += x.norm() * y.norm();
            }
            let cij = gc.get(i, j);
            let (val, m_ij) = if case == CaseId::OneC {
                let re = alpha_v.re * acc.re + beta_v.re * cij.re;
                (
                    Complex64::new(re, cij.im),
                    alpha_v.re.abs() * abs + (beta_v.re * cij.re).abs(),
                )
            } else if real_out {
                let re = (alpha_v * acc).re + beta_v.re * cij.re;
                (
                    Complex64::new(re, 0.0),
                    alpha_v.norm() * abs + (beta_v.re * cij.re).abs(),
                )
            } else {
                (
                    alpha_v * acc + beta_v * cij,
                    alpha_v.norm() * abs + (beta_v * cij).norm(),
                )
            };
            c.push(Complex64::new(p.round(val.re), p.round(val.im)));
            mag.push(m_ij);
        }
    }
    Ok(OracleResult {
        c: Grid { m, n, data: c },
        magnitude: Grid { m, n, data: mag },
    })
}

/// `tol_ij = 8 (k + 2) eps_comp mag_ij + 4 eps_out mag_ij`.
pub fn tolerance(p: &ErrorBoundParams) -> Grid<f64> {
    let scale = COMP_FACTOR * (p.k as f64 + 2.0) * p.eps_comp + OUT_FACTOR * p.eps_out;
    Grid {
        m: p.magnitude.m,
        n: p.magnitude.n,
        data: p.magnitude.data.iter().map(|&x| scale * x).collect(),
    }
}

/// Largest `|impl - ref| / tol` over all elements. A conformant result has a
/// value at most 1; any NaN yields infinity.
pub fn max_violation(c_impl: &Grid<Complex64>, c_ref: &Grid<Complex64>, tol: &Grid<f64>) -> Result<f64> {
    if c_impl.shape() != c_ref.shape() {
        return Err(GemmError::ShapeMismatch(c_impl.shape(), c_ref.shape()));
    }
    if c_impl.shape() != tol.shape() {
        return Err(GemmError::ShapeMismatch(c_impl.shape(), tol.shape()));
    }
    let mut worst = 0.0f64;
    for ((x, y), &t) in c_impl.data.iter().zip(&c_ref.data).zip(&tol.data) {
        let d = (x - y).norm();
        let r = if d.is_nan() || x.re.is_nan() || x.im.is_nan() {
            f64::INFINITY
        } else if d == 0.0 {
            0.0
        } else if t == 0.0 {
            f64::INFINITY
        } else {
            d / t
        };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Convenience: run the oracle, build the bound and score `c_impl`.
pub fn score(
    alpha: Scalar,
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    beta: Scalar,
    c_in: &MatrixView<'_>,
    c_impl: &MatrixView<'_>,
    case: CaseId,
    comp: Precision,
) -> Result<f64> {
    let r = oracle_gemm(alpha, a, b, beta, c_in, case)?;
    let tol = tolerance(&ErrorBoundParams::new(a.n(), comp, c_in.dtype(), r.magnitude));
    max_violation(&Grid::from_view(c_impl), &r.c, &tol)
}
