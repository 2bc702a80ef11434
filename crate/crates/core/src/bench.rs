//! Case labels, the oracle conformance runner and the benchmark sweep.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CTempPolicy, Config};
use crate::dispatch::{classify_case, flops_of_case, gemm};
use crate::dtypes::{CaseId, Datatype, Matrix, Precision, Scalar, StorageKind};
use crate::error::{GemmError, Result};
use crate::oracle::score;

pub const CSV_HEADER: &str = "case,m,n,k,trials,best_seconds,gflops";

/// `cabx`: storage datatypes of C, A, B and the computation precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaseLabel {
    pub c: Datatype,
    pub a: Datatype,
    pub b: Datatype,
    pub x: Precision,
}

impl CaseLabel {
    pub fn parse(s: &str) -> Result<CaseLabel> {
        let bad = || GemmError::BadLabel(s.to_string());
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 4 {
            return Err(bad());
        }
        let dt = |ch: char| Datatype::from_letter(ch).ok_or_else(bad);
        Ok(CaseLabel {
            c: dt(chars[0])?,
            a: dt(chars[1])?,
            b: dt(chars[2])?,
            x: Precision::from_letter(chars[3]).ok_or_else(bad)?,
        })
    }

    pub fn case(&self) -> CaseId {
        classify_case(self.c.domain, self.a.domain, self.b.domain)
    }

    /// All 128 labels, in letter order `s d c z` per position.
    pub fn all() -> Vec<CaseLabel> {
        let mut out = Vec::with_capacity(128);
        for c in Datatype::ALL {
            for a in Datatype::ALL {
                for b in Datatype::ALL {
                    for x in [Precision::Single, Precision::Double] {
                        out.push(CaseLabel { c, a, b, x });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}{}",
            self.c.letter(),
            self.a.letter(),
            self.b.letter(),
            self.x.letter()
        )
    }
}

impl FromStr for CaseLabel {
    type Err = GemmError;
    fn from_str(s: &str) -> Result<CaseLabel> {
        CaseLabel::parse(s)
    }
}

/// Shell-style match with `*` and `?`; `pattern` may list alternatives
/// separated by commas.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    fn one(p: &[u8], t: &[u8]) -> bool {
        match (p.first(), t.first()) {
            (None, None) => true,
            (Some(b'*'), _) => one(&p[1..], t) || (!t.is_empty() && one(p, &t[1..])),
            (Some(b'?'), Some(_)) => one(&p[1..], &t[1..]),
            (Some(a), Some(b)) if a == b => one(&p[1..], &t[1..]),
            _ => false,
        }
    }
    pattern.split(',').any(|p| one(p.trim().as_bytes(), text.as_bytes()))
}

pub fn select_labels(filter: &str) -> Vec<CaseLabel> {
    CaseLabel::all()
        .into_iter()
        .filter(|l| glob_match(filter, &l.to_string()))
        .collect()
}

/// How an operand is presented to the GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trans {
    N,
    T,
    /// conjugate, no transpose
    C,
    /// conjugate transpose
    H,
}

impl Trans {
    pub fn from_letter(c: char) -> Option<Trans> {
        match c.to_ascii_lowercase() {
            'n' => Some(Trans::N),
            't' => Some(Trans::T),
            'c' => Some(Trans::C),
            'h' => Some(Trans::H),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Trans::N => 'n',
            Trans::T => 't',
            Trans::C => 'c',
            Trans::H => 'h',
        }
    }

    fn transposed(self) -> bool {
        matches!(self, Trans::T | Trans::H)
    }

    fn conj(self) -> bool {
        matches!(self, Trans::C | Trans::H)
    }

    pub const ALL: [Trans; 4] = [Trans::N, Trans::T, Trans::C, Trans::H];
}

/// Parse e.g. `"nt"` into the A and B presentations.
pub fn parse_trans(s: &str) -> Option<[Trans; 2]> {
    let c: Vec<char> = s.chars().collect();
    match c.as_slice() {
        [a, b] => Some([Trans::from_letter(*a)?, Trans::from_letter(*b)?]),
        _ => None,
    }
}

/// Parse e.g. `"crg"` into storage kinds of C, A and B.
pub fn parse_storage(s: &str) -> Option<[StorageKind; 3]> {
    let c: Vec<char> = s.chars().collect();
    match c.as_slice() {
        [x, y, z] => Some([
            StorageKind::from_letter(*x)?,
            StorageKind::from_letter(*y)?,
            StorageKind::from_letter(*z)?,
        ]),
        _ => None,
    }
}

/// One conformance problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub label: CaseLabel,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// storage of C, A, B
    pub storage: [StorageKind; 3],
    pub trans: [Trans; 2],
    pub alpha: Scalar,
    pub beta: Scalar,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let st: String = self.storage.iter().map(|s| s.letter()).collect();
        let tr: String = self.trans.iter().map(|t| t.letter()).collect();
        write!(
            f,
            "{} m={} n={} k={} storage={} trans={} alpha=({},{}) beta=({},{})",
            self.label, self.m, self.n, self.k, st, tr, self.alpha.re, self.alpha.im, self.beta.re, self.beta.im
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// worst |error| / tolerance, at most 1
    Pass(f64),
    Fail(f64),
    /// the scalar policy rejected the call, as it should
    ExpectedError(GemmError),
    UnexpectedError(GemmError),
    /// the call succeeded although the policy should have rejected it
    MissingError,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        matches!(self, Outcome::Pass(_) | Outcome::ExpectedError(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub problem: Problem,
    pub outcome: Outcome,
}

/// The operands of one problem, generated from a seeded stream.
pub struct Operands {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

/// Uniform [-1, 1] operands for `p`; A and B are stored in their
/// pre-transposition shapes.
pub fn make_operands(p: &Problem, rng: &mut ChaCha8Rng) -> Operands {
    let [sc, sa, sb] = p.storage;
    let (am, an) = if p.trans[0].transposed() {
        (p.k, p.m)
    } else {
        (p.m, p.k)
    };
    let (bm, bn) = if p.trans[1].transposed() {
        (p.n, p.k)
    } else {
        (p.k, p.n)
    };
    Operands {
        a: Matrix::random(p.label.a, am, an, sa, rng),
        b: Matrix::random(p.label.b, bm, bn, sb, rng),
        c: Matrix::random(p.label.c, p.m, p.n, sc, rng),
    }
}

/// Run `p` through [`gemm`] and score it against the oracle. Returns the
/// outcome and the computed C (the input C on error).
pub fn run_problem(p: &Problem, ops: &Operands, config: &Config) -> (Outcome, Matrix) {
    fn present(m: &Matrix, t: Trans) -> crate::dtypes::MatrixView<'_> {
        let v = m.view().conjugated(t.conj());
        if t.transposed() {
            v.transposed()
        } else {
            v
        }
    }
    let a = present(&ops.a, p.trans[0]);
    let b = present(&ops.b, p.trans[1]);
    let mut c = ops.c.clone();
    let expect_error = p.label.case().restricts_alpha() && p.alpha.im != 0.0;
    let r = {
        let mut cv = c.view_mut().with_comp_prec(p.label.x);
        gemm(p.alpha, &a, &b, p.beta, &mut cv, config)
    };
    let outcome = match r {
        Err(e @ GemmError::UnsupportedComplexAlpha { .. }) if expect_error => Outcome::ExpectedError(e),
        Err(e) => Outcome::UnexpectedError(e),
        Ok(_) if expect_error => Outcome::MissingError,
        Ok(_) => match score(
            p.alpha,
            &a,
            &b,
            p.beta,
            &ops.c.view(),
            &c.view(),
            p.label.case(),
            p.label.x,
        ) {
            Ok(v) if v <= 1.0 => Outcome::Pass(v),
            Ok(v) => Outcome::Fail(v),
            Err(e) => Outcome::UnexpectedError(e),
        },
    };
    (outcome, c)
}

/// Scalar pairs of the default tier: alpha = beta = 1.
pub fn default_scalars() -> Vec<(Scalar, Scalar)> {
    vec![(Scalar::one(), Scalar::one())]
}

/// Scalar pairs of the sweep tier. Complex alpha is included so the
/// restricted cases produce expected-error entries.
pub fn sweep_scalars() -> Vec<(Scalar, Scalar)> {
    let alphas = [
        Scalar::real(0.0),
        Scalar::real(1.0),
        Scalar::real(-1.0),
        Scalar::real(0.7),
        Scalar::complex(0.5, 0.25),
    ];
    let betas = [
        Scalar::real(0.0),
        Scalar::real(1.0),
        Scalar::real(0.3),
        Scalar::complex(0.3, 0.5),
    ];
    alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ConformanceSweep {
    pub filter: String,
    pub sizes: Vec<(usize, usize, usize)>,
    pub storages: Vec<[StorageKind; 3]>,
    pub trans: Vec<[Trans; 2]>,
    pub scalars: Vec<(Scalar, Scalar)>,
    pub seed: u64,
}

impl Default for ConformanceSweep {
    fn default() -> ConformanceSweep {
        ConformanceSweep {
            filter: "*".into(),
            sizes: [7, 16, 17, 64].into_iter().map(|s| (s, s, s)).collect(),
            storages: vec![[StorageKind::Column; 3]],
            trans: vec![[Trans::N, Trans::N]],
            scalars: default_scalars(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceReport {
    pub entries: Vec<Entry>,
}

impl ConformanceReport {
    pub fn passed(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome.ok()).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| !e.outcome.ok())
    }

    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|e| e.outcome.ok())
    }

    /// Largest violation among scored entries.
    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| match e.outcome {
                Outcome::Pass(v) | Outcome::Fail(v) => Some(v),
                _ => None,
            })
            .fold(0.0, f64::max)
    }
}

/// Every combination of the sweep's labels, sizes, storages, presentations
/// and scalars. Problem `i` draws its operands from stream `i` of the seed,
/// so each entry is reproducible on its own.
pub fn run_conformance(sweep: &ConformanceSweep, config: &Config) -> ConformanceReport {
    let mut entries = Vec::new();
    let mut index = 0u64;
    for label in select_labels(&sweep.filter) {
        for &(m, n, k) in &sweep.sizes {
            for &storage in &sweep.storages {
                for &trans in &sweep.trans {
                    for &(alpha, beta) in &sweep.scalars {
                        let p = Problem {
                            label,
                            m,
                            n,
                            k,
                            storage,
                            trans,
                            alpha,
                            beta,
                        };
                        let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
                        rng.set_stream(index);
                        index += 1;
                        let ops = make_operands(&p, &mut rng);
                        let (outcome, _) = run_problem(&p, &ops, config);
                        entries.push(Entry { problem: p, outcome });
                    }
                }
            }
        }
    }
    ConformanceReport { entries }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSweep {
    pub label: CaseLabel,
    pub min: usize,
    pub max: usize,
    pub step: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub label: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub best_seconds: f64,
    pub gflops: f64,
}

/// The CSV `case` field: the label, tagged when C_temp was forced on or off.
pub fn bench_tag(label: CaseLabel, ctemp: CTempPolicy) -> String {
    match ctemp {
        CTempPolicy::Auto => label.to_string(),
        CTempPolicy::On => format!("{label}+ctemp"),
        CTempPolicy::Off => format!("{label}-ctemp"),
    }
}

/// `m = n = k` from `min` to `max` by `step`; for each size one warm-up call
/// then `trials` timed calls, keeping the fastest. Only the GEMM call is
/// timed. Alpha = beta = 1, column storage.
pub fn run_bench(sweep: &BenchSweep, config: &Config) -> Result<Vec<BenchRecord>> {
    if sweep.step == 0 || sweep.min > sweep.max || sweep.trials == 0 {
        return Err(GemmError::Config(
            "bench needs min <= max, step > 0 and trials > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
    let mut out = Vec::new();
    let mut size = sweep.min;
    while size <= sweep.max {
        let (a, b) = (
            Matrix::random(sweep.label.a, size, size, StorageKind::Column, &mut rng),
            Matrix::random(sweep.label.b, size, size, StorageKind::Column, &mut rng),
        );
        let c0 = Matrix::random(sweep.label.c, size, size, StorageKind::Column, &mut rng);
        let mut c = c0.clone();
        let mut best = f64::INFINITY;
        for trial in 0..=sweep.trials {
            let mut cv = c.view_mut().with_comp_prec(sweep.label.x);
            let t0 = Instant::now();
            gemm(Scalar::one(), &a.view(), &b.view(), Scalar::one(), &mut cv, config)?;
            let dt = t0.elapsed().as_secs_f64();
            if trial > 0 {
                best = best.min(dt);
            }
        }
        // keep the output observable so the calls are not elided
        std::hint::black_box(c.get(0, 0));
        let best = best.max(f64::MIN_POSITIVE);
        let flops = flops_of_case(sweep.label.case(), size, size, size) as f64;
        out.push(BenchRecord {
            label: bench_tag(sweep.label, config.ctemp),
            m: size,
            n: size,
            k: size,
            trials: sweep.trials,
            best_seconds: best,
            gflops: flops / best / 1e9,
        });
        size += sweep.step;
    }
    Ok(out)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:.9e},{:.6}",
            r.label, r.m, r.n, r.k, r.trials, r.best_seconds, r.gflops
        )?;
    }
    Ok(())
}
