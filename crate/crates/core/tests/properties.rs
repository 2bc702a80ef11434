use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mdgemm::bench::{make_operands, parse_storage, parse_trans, run_problem, CaseLabel, Outcome, Problem};
use mdgemm::{gemm, CTempPolicy, CaseId, Config, Scalar};

fn label() -> impl Strategy<Value = CaseLabel> {
    (0..128usize).prop_map(|i| CaseLabel::all()[i])
}

fn storage() -> impl Strategy<Value = String> {
    "[rcg]{3}"
}

fn trans() -> impl Strategy<Value = String> {
    "[ntch]{2}"
}

fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        Just(Scalar::zero()),
        Just(Scalar::one()),
        (-2.0..2.0f64).prop_map(Scalar::real),
        ((-2.0..2.0f64), (-2.0..2.0f64)).prop_map(|(r, i)| Scalar::complex(r, i)),
    ]
}

fn problem() -> impl Strategy<Value = Problem> {
    (
        label(),
        0..24usize,
        0..24usize,
        0..40usize,
        storage(),
        trans(),
        scalar(),
        scalar(),
    )
        .prop_map(|(label, m, n, k, st, tr, alpha, beta)| Problem {
            label,
            m,
            n,
            k,
            storage: parse_storage(&st).unwrap(),
            trans: parse_trans(&tr).unwrap(),
            alpha,
            beta,
        })
}

/// Element bits in logical order; general storage padding is excluded.
fn bits(m: &mdgemm::Matrix) -> Vec<(u64, u64)> {
    m.to_dense().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
}

fn small_blocking() -> Config {
    let mut c = Config::default();
    for b in [&mut c.single, &mut c.double] {
        (b.mc, b.nc, b.kc) = (2 * b.mr, 2 * b.nr, 5);
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gemm_agrees_with_oracle(p in problem(), seed in any::<u64>(), small in any::<bool>()) {
        let cfg = if small { small_blocking() } else { Config::default() };
        let ops = make_operands(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let (o, _) = run_problem(&p, &ops, &cfg);
        prop_assert!(o.ok(), "{}: {:?}", p, o);
    }

    #[test]
    fn blocking_does_not_change_same_precision_results(
        mut p in problem(),
        seed in any::<u64>(),
        threads in 1..4usize,
        ctemp in prop_oneof![Just(CTempPolicy::On), Just(CTempPolicy::Off)],
    ) {
        p.label.x = p.label.c.precision;
        // 1c engages C_temp by comparing k with KC, so the path itself may change.
        prop_assume!(!(ctemp == CTempPolicy::On && p.label.case() == CaseId::OneC));
        let ops = make_operands(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut small = small_blocking();
        small.threads = threads;
        small.ctemp = ctemp;
        let big = Config { ctemp, ..Config::default() };
        let (o1, c1) = run_problem(&p, &ops, &big);
        let (o2, c2) = run_problem(&p, &ops, &small);
        prop_assert_eq!(&o1.ok(), &o2.ok());
        if matches!(o1, Outcome::Pass(_)) {
            prop_assert_eq!(bits(&c1), bits(&c2), "{}", p);
        }
    }

    #[test]
    fn beta_zero_ignores_c(mut p in problem(), seed in any::<u64>(), junk in -1e30..1e30f64) {
        p.trans = parse_trans("nn").unwrap();
        let ops = make_operands(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let cfg = Config::default();
        let run = |fill: Option<f64>| {
            let mut c = ops.c.clone();
            if let Some(v) = fill {
                c.fill_raw(v);
            }
            let r = gemm(Scalar::one(), &ops.a.view(), &ops.b.view(), Scalar::zero(),
                         &mut c.view_mut().with_comp_prec(p.label.x), &cfg);
            (r.is_ok(), c)
        };
        let (ok1, c1) = run(Some(junk));
        let (ok2, c2) = run(Some(-junk));
        prop_assert!(ok1 && ok2);
        if p.label.case() != CaseId::OneC {
            prop_assert_eq!(bits(&c1), bits(&c2));
        }
    }

    #[test]
    fn label_text_round_trips(l in label()) {
        prop_assert_eq!(CaseLabel::parse(&l.to_string()).unwrap(), l);
    }
}
