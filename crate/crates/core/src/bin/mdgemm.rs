use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mdgemm::bench::{
    default_scalars, parse_storage, parse_trans, run_bench, run_conformance, sweep_scalars, write_csv, BenchSweep,
    CaseLabel, ConformanceSweep, Outcome, Trans,
};
use mdgemm::{CTempPolicy, Config, Precision, StorageKind};

#[derive(Parser)]
#[command(
    name = "mdgemm",
    version,
    about = "Mixed-domain, mixed-precision GEMM: conformance, benchmarks, config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every selected case against the oracle.
    Test(TestArgs),
    /// Time m = n = k sweeps of one case and write CSV.
    Bench(BenchArgs),
    /// Print the resolved configuration.
    Info(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum CTempArg {
    Auto,
    On,
    Off,
}

impl From<CTempArg> for CTempPolicy {
    fn from(a: CTempArg) -> CTempPolicy {
        match a {
            CTempArg::Auto => CTempPolicy::Auto,
            CTempArg::On => CTempPolicy::On,
            CTempArg::Off => CTempPolicy::Off,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalarTier {
    /// alpha = beta = 1
    Default,
    /// alpha and beta over a grid including 0, -1 and complex values
    Sweep,
}

/// Overrides applied on top of `MDGEMM_CONFIG` and `MDGEMM_*`.
#[derive(Args)]
struct Common {
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    ctemp: Option<CTempArg>,
}

impl Common {
    fn config(&self) -> Result<Config, String> {
        let mut c = Config::from_env().map_err(|e| e.to_string())?;
        if let Some(t) = self.threads {
            c.threads = t;
        }
        if let Some(p) = self.ctemp {
            c.ctemp = p.into();
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    /// Label glob, e.g. `z*` or `zcsd,ccsd`.
    #[arg(long, default_value = "*")]
    case: String,
    /// Comma-separated square sizes; ignored when --min is given.
    #[arg(long, value_delimiter = ',', default_values_t = [7usize, 16, 17, 64])]
    sizes: Vec<usize>,
    #[arg(long)]
    min: Option<usize>,
    #[arg(long)]
    max: Option<usize>,
    #[arg(long, default_value_t = 1)]
    step: usize,
    /// Storage of C, A, B as three of r|c|g; comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "ccc", value_parser = storage_arg)]
    storage: Vec<[StorageKind; 3]>,
    /// Presentation of A and B as two of n|t|c|h; comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "nn", value_parser = trans_arg)]
    trans: Vec<[Trans; 2]>,
    #[arg(long, value_enum, default_value = "default")]
    scalars: ScalarTier,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write one CSV line per problem here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = label_arg)]
    case: CaseLabel,
    #[arg(long, default_value_t = 40)]
    min: usize,
    #[arg(long, default_value_t = 400)]
    max: usize,
    #[arg(long, default_value_t = 40)]
    step: usize,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn storage_arg(s: &str) -> Result<[StorageKind; 3], String> {
    parse_storage(s).ok_or_else(|| format!("expected three of r|c|g, got {s:?}"))
}

fn trans_arg(s: &str) -> Result<[Trans; 2], String> {
    parse_trans(s).ok_or_else(|| format!("expected two of n|t|c|h, got {s:?}"))
}

fn label_arg(s: &str) -> Result<CaseLabel, String> {
    CaseLabel::parse(s).map_err(|e| e.to_string())
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn outcome_fields(o: &Outcome) -> (&'static str, String) {
    match o {
        Outcome::Pass(v) => ("pass", format!("{v:.4}")),
        Outcome::Fail(v) => ("FAIL", format!("{v:.4}")),
        Outcome::ExpectedError(e) => ("expected-error", e.to_string()),
        Outcome::UnexpectedError(e) => ("ERROR", e.to_string()),
        Outcome::MissingError => ("MISSING-ERROR", String::new()),
    }
}

fn cmd_test(args: &TestArgs) -> Result<bool, String> {
    let config = args.common.config()?;
    let sizes: Vec<usize> = match args.min {
        Some(min) => {
            let max = args.max.unwrap_or(min);
            if args.step == 0 || min > max {
                return Err("test needs min <= max and step > 0".into());
            }
            (min..=max).step_by(args.step).collect()
        }
        None => args.sizes.clone(),
    };
    let sweep = ConformanceSweep {
        filter: args.case.clone(),
        sizes: sizes.into_iter().map(|s| (s, s, s)).collect(),
        storages: args.storage.clone(),
        trans: args.trans.clone(),
        scalars: match args.scalars {
            ScalarTier::Default => default_scalars(),
            ScalarTier::Sweep => sweep_scalars(),
        },
        seed: args.seed,
    };
    let report = run_conformance(&sweep, &config);
    if report.entries.is_empty() {
        return Err(format!("no label matches {:?}", args.case));
    }
    if let Some(path) = &args.out {
        let mut w = output(&Some(path.clone())).map_err(|e| e.to_string())?;
        let write = |w: &mut dyn Write| -> io::Result<()> {
            writeln!(
                w,
                "case,m,n,k,storage,trans,alpha_re,alpha_im,beta_re,beta_im,outcome,detail"
            )?;
            for e in &report.entries {
                let p = &e.problem;
                let st: String = p.storage.iter().map(|s| s.letter()).collect();
                let tr: String = p.trans.iter().map(|t| t.letter()).collect();
                let (kind, detail) = outcome_fields(&e.outcome);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
                    p.label, p.m, p.n, p.k, st, tr, p.alpha.re, p.alpha.im, p.beta.re, p.beta.im, kind, detail
                )?;
            }
            w.flush()
        };
        write(&mut *w).map_err(|e| e.to_string())?;
    }
    for e in report.failures() {
        let (kind, detail) = outcome_fields(&e.outcome);
        println!("{kind}: {} {detail}", e.problem);
    }
    let expected = report
        .entries
        .iter()
        .filter(|e| matches!(e.outcome, Outcome::ExpectedError(_)))
        .count();
    println!(
        "{} / {} ok ({} expected errors), worst violation {:.4}",
        report.passed(),
        report.entries.len(),
        expected,
        report.worst()
    );
    Ok(report.all_ok())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), String> {
    let config = args.common.config()?;
    let sweep = BenchSweep {
        label: args.case,
        min: args.min,
        max: args.max,
        step: args.step,
        trials: args.trials,
        seed: args.seed,
    };
    let records = run_bench(&sweep, &config).map_err(|e| e.to_string())?;
    let mut w = output(&args.out).map_err(|e| e.to_string())?;
    write_csv(&records, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| e.to_string())
}

fn cmd_info(common: &Common) -> Result<(), String> {
    let config = common.config()?;
    println!("{config}");
    for p in [Precision::Single, Precision::Double] {
        let b = config.blocking(p);
        println!(
            "# {}: MC={} NC={} KC={} MR={} NR={} threads={}",
            p.letter(),
            b.mc,
            b.nc,
            b.kc,
            b.mr,
            b.nr,
            b.threads
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Info(c) => cmd_info(c).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("mdgemm: {e}");
            ExitCode::from(2)
        }
    }
}
