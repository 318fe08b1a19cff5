//! Acceptance suite: one PASS/FAIL line per criterion.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pforge_core::automorphism::{Automorphism, SubgroupSystem};
use pforge_core::blowup::{
    build_blowup_ball, classify_loxodromic, collapse_check, exact_attaching_points, golden_config,
    induced_map, loxodromic_by_parts, solve_attaching_points, two_vertex_config,
    AttachingEquations, LineEquations,
};
use pforge_core::graph::{FreeSplitting, TopRep};
use pforge_core::growth::{
    build_hierarchy, classify_growth, growth_report, is_atoroidal, periodic_period,
    AtoroidalVerdict, GrowthClass, GrowthVerdict, LimitLengthOracle,
};
use pforge_core::index::{
    build_associated_pretree, check_action_condition, index_via_orbit_graphs, splitting_index,
    RigidSystem,
};
use pforge_core::parse::parse_automorphism;
use pforge_core::pretree::{check_axioms, FiniteRealPretree, Location, Sampling, TreeEdge, Q};
use pforge_core::quad::Quad;
use pforge_core::train_track::{is_cyclically_legal, train_track_rel};
use pforge_core::word::{enumerate_words, Word};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn aut(text: &str) -> Automorphism {
    parse_automorphism(text).unwrap().verify().unwrap()
}

const GOLDEN: &str = "a -> a b\nb -> a\n";
const TRIBONACCI: &str = "a -> a b\nb -> a c\nc -> a\n";
const LINEAR: &str = "a -> a\nb -> b a\n";
const IDENTITY: &str = "a -> a\nb -> b\n";

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(hi) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c1_perron_frobenius() -> Check {
    let golden = bisect(|x| x * x - x - 1.0, 1.0, 2.0);
    let trib = bisect(|x| x * x * x - x * x - x - 1.0, 1.0, 2.0);
    ensure(
        (golden - 1.6180339887).abs() < 1e-9 && (trib - 1.8392867552).abs() < 1e-9,
        || "oracle constants".into(),
    )?;
    for (text, want) in [(GOLDEN, golden), (TRIBONACCI, trib)] {
        let (tt, _) = train_track_rel(&TopRep::on_rose(&aut(text))).map_err(|e| e.to_string())?;
        ensure((tt.lambda() - want).abs() < 1e-9, || {
            format!("lambda {} vs {want}", tt.lambda())
        })?;
    }
    Ok(())
}

fn c2_growth() -> Check {
    let linear = aut(LINEAR);
    let mut x = Word::gen(2);
    for n in 0..=64 {
        ensure(x.len() == n + 1, || format!("|phi^{n}(b)| = {}", x.len()))?;
        x = linear.apply(0, &x);
    }
    let rel = SubgroupSystem::empty();
    for (text, exponential) in [(LINEAR, false), (GOLDEN, true), (IDENTITY, false)] {
        let phi = aut(text);
        let h = build_hierarchy(&phi, &rel).map_err(|e| e.to_string())?;
        let verdict = classify_growth(&h);
        match (&verdict, text) {
            (GrowthVerdict::Polynomial { degree_bound: 0 }, IDENTITY) => {}
            (GrowthVerdict::Polynomial { .. }, LINEAR) => {}
            (GrowthVerdict::Exponential { .. }, GOLDEN) => {}
            _ => return Err(format!("{text:?}: {verdict:?}")),
        }
        let gens: Vec<(usize, Word)> = (1..=2).map(|g| (0, Word::gen(g))).collect();
        let report = growth_report(&phi, &rel, &gens, 64).map_err(|e| e.to_string())?;
        for e in &report.elements {
            let agrees = match e.classification {
                GrowthClass::Exponential { .. } => exponential,
                GrowthClass::Polynomial { .. } => !exponential,
                GrowthClass::Inconclusive => false,
            };
            ensure(agrees, || {
                format!("{text:?} generator {}: {:?}", e.word, e.classification)
            })?;
        }
    }
    Ok(())
}

fn random_word(rng: &mut ChaCha8Rng, rank: i32, max_len: usize) -> Word {
    loop {
        let len = rng.gen_range(1..=max_len);
        let mut w = Word::empty();
        for _ in 0..len {
            let g = rng.gen_range(1..=rank);
            w = w.mul(&Word::gen(if rng.gen_bool(0.5) { g } else { -g }));
        }
        if !w.is_empty() {
            return w;
        }
    }
}

fn c3_homogeneity() -> Check {
    let phi = aut(GOLDEN);
    let (tt, _) = train_track_rel(&TopRep::on_rose(&phi)).map_err(|e| e.to_string())?;
    let oracle = LimitLengthOracle::new(tt, 1e-10).map_err(|e| e.to_string())?;
    let lambda = oracle.lambda();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_word(&mut rng, 2, 6);
        let l = oracle.limit_length(0, &x).map_err(|e| e.to_string())?;
        let lp = oracle
            .limit_length(0, &phi.apply(0, &x))
            .map_err(|e| e.to_string())?;
        ensure((lp - lambda * l).abs() < 1e-6, || {
            format!("{x}: {lp} vs {}", lambda * l)
        })?;
    }
    Ok(())
}

fn c4_legal_axis() -> Check {
    for text in [GOLDEN, TRIBONACCI] {
        let (tt, _) = train_track_rel(&TopRep::on_rose(&aut(text))).map_err(|e| e.to_string())?;
        let (comp, x, path) = tt.find_legal_axis().map_err(|e| e.to_string())?;
        let g = &tt.rep.splitting;
        let marking = g.marking().map_err(|e| e.to_string())?;
        ensure(g.translation_length(&marking, comp, &x) > 0, || {
            format!("{x} is elliptic")
        })?;
        ensure(is_cyclically_legal(&tt.rep, &path), || {
            format!("{x} has an illegal turn")
        })?;
    }
    Ok(())
}

fn c5_index() -> Check {
    for n in 2..=5usize {
        let system = pforge_core::automorphism::FreeGroupSystem::single(n);
        let r = splitting_index(&FreeSplitting::rose(&system)).map_err(|e| e.to_string())?;
        ensure(
            r.total == 2 * n as i64 - 2 && r.audits_hold() && r.below_bound,
            || format!("rose {n}: {r:?}"),
        )?;
    }
    let r =
        index_via_orbit_graphs(&RigidSystem::segment_example(), 32).map_err(|e| e.to_string())?;
    ensure(r.total == 0 && r.total == r.complexity - 1, || {
        format!("segment total {}", r.total)
    })?;
    ensure(r.audits_hold(), || format!("audits {:?}", r.audits))
}

fn c6_action_condition() -> Check {
    let r = check_action_condition(&RigidSystem::segment_example(), 4);
    ensure(r.checked > 0 && r.violations.is_empty(), || {
        format!(
            "{} violations, first {:?}",
            r.violations.len(),
            r.violations.first()
        )
    })
}

fn random_tree(rng: &mut ChaCha8Rng) -> FiniteRealPretree {
    let n = rng.gen_range(1..=8);
    let edges = (1..n)
        .map(|i| TreeEdge {
            a: rng.gen_range(0..i),
            b: i,
            length: Q::new(rng.gen_range(1..=6), 2),
        })
        .collect();
    FiniteRealPretree::new(n, edges).unwrap()
}

fn c7_axioms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..50 {
        let t = random_tree(&mut rng);
        let pts: Vec<Location> = t.vertices().collect();
        let r = check_axioms(&t, &pts, Sampling::<ChaCha8Rng>::Exhaustive);
        ensure(r.passed(), || format!("tree {k}: {:?}", r.counterexample))?;
        for p in &pts {
            for q in &pts {
                for s in &pts {
                    let m = t.median(p, q, s);
                    let inside = |x: &Location| {
                        t.between(p, q, x) && t.between(q, s, x) && t.between(p, s, x)
                    };
                    ensure(inside(&m), || format!("tree {k}: median outside"))?;
                    ensure(pts.iter().filter(|x| inside(x)).all(|x| *x == m), || {
                        format!("tree {k}: median not a singleton")
                    })?;
                }
            }
        }
    }
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(70));
    for config in [golden_config(), two_vertex_config()] {
        let st = config.stitching().map_err(|e| e.to_string())?;
        let choice = exact_attaching_points(&st).map_err(|e| e.to_string())?;
        let ball = build_blowup_ball(st, choice, config.depth.unwrap_or(2).min(3))
            .map_err(|e| e.to_string())?;
        let r = check_axioms(
            &ball,
            &ball.points,
            Sampling::Random {
                triples: 1000,
                rng: &rng,
            },
        );
        ensure(r.passed(), || {
            format!("blow-up ball: {:?}", r.counterexample)
        })?;
    }
    for (sys, m) in [
        (RigidSystem::segment_example(), 4),
        (RigidSystem::tripod_example(), 4),
        (RigidSystem::interval_pair_example(), 4),
    ] {
        let ball = build_associated_pretree(sys, m).map_err(|e| e.to_string())?;
        let r = check_axioms(
            &ball,
            &ball.points,
            Sampling::Random {
                triples: 1000,
                rng: &rng,
            },
        );
        ensure(r.passed(), || {
            format!("associated ball m={m}: {:?}", r.counterexample)
        })?;
    }
    Ok(())
}

fn c8_solver() -> Check {
    let systems = [
        LineEquations {
            lambda: Quad::int(2),
            shift: vec![Quad::int(3)],
            partner: vec![0],
        },
        LineEquations {
            lambda: Quad::int(2),
            shift: vec![Quad::int(1), Quad::ratio(-5, 2)],
            partner: vec![1, 0],
        },
        LineEquations {
            lambda: Quad::int(2),
            shift: vec![Quad::int(1), Quad::int(2), Quad::int(-7)],
            partner: vec![1, 2, 0],
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for eq in &systems {
        let exact = exact_attaching_points(eq).map_err(|e| e.to_string())?;
        let mut solutions = Vec::new();
        for _ in 0..2 {
            let init: Vec<Quad> = (0..eq.len())
                .map(|_| Quad::ratio(rng.gen_range(-10_000..10_000), rng.gen_range(1..100)))
                .collect();
            let c = solve_attaching_points(eq, init, 1e-9, 200).map_err(|e| e.to_string())?;
            let bound = (c.history[0] / 1e-9).log2().ceil().max(0.0) as usize + 5;
            ensure(c.residual < 1e-9, || format!("residual {}", c.residual))?;
            ensure(c.iterations <= bound, || {
                format!("{} iterations, bound {bound}", c.iterations)
            })?;
            for w in c.history.windows(2) {
                ensure(w[1] <= w[0] / eq.lambda() * (1.0 + 1e-9) + 1e-15, || {
                    format!("rate broken: {} -> {}", w[0], w[1])
                })?;
            }
            let err = c
                .points
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs().to_f64())
                .fold(0.0, f64::max);
            ensure(err < 1e-8, || format!("far from the closed form: {err}"))?;
            solutions.push(c.points);
        }
        let gap = solutions[0]
            .iter()
            .zip(&solutions[1])
            .map(|(a, b)| (a - b).abs().to_f64())
            .fold(0.0, f64::max);
        ensure(gap < 1e-8, || format!("initializations disagree by {gap}"))?;
    }
    Ok(())
}

fn c9_ideal_stitching() -> Check {
    let config = golden_config();
    let st = config.stitching().map_err(|e| e.to_string())?;
    let exact = exact_attaching_points(&st).map_err(|e| e.to_string())?;
    let ball = build_blowup_ball(st.clone(), exact.clone(), 3).map_err(|e| e.to_string())?;
    let r = induced_map(&ball, 500, 1e-9, 9);
    ensure(r.verdict && r.checks == 500 && r.failures == 0, || {
        format!("ideal choice: {r:?}")
    })?;
    for d in 0..exact.len() {
        let mut choice = exact.clone();
        choice[d] = &choice[d] + &Quad::ratio(1, 1000);
        let ball = build_blowup_ball(st.clone(), choice, 3).map_err(|e| e.to_string())?;
        let r = induced_map(&ball, 500, 1e-9, 9);
        let want = &st.directions[d];
        ensure(!r.verdict, || {
            format!("perturbing direction {d} went unnoticed")
        })?;
        ensure(
            r.violations
                .iter()
                .any(|v| v.vertex == want.vertex && v.germ == want.germ),
            || format!("direction {d} not identified: {:?}", r.violations),
        )?;
    }
    Ok(())
}

fn c10_collapse_and_loxodromy() -> Check {
    let config = golden_config();
    let st = config.stitching().map_err(|e| e.to_string())?;
    let exact = exact_attaching_points(&st).map_err(|e| e.to_string())?;
    let ball = build_blowup_ball(st.clone(), exact, 3).map_err(|e| e.to_string())?;
    let r = collapse_check(&ball, 500, 10).map_err(|e| e.to_string())?;
    ensure(r.pairs == 500 && r.mismatches == 0, || {
        format!("collapse: {r:?}")
    })?;
    for x in enumerate_words(3, 4) {
        let lox = classify_loxodromic(&ball, &x, 4)
            .map_err(|e| e.to_string())?
            .is_loxodromic();
        ensure(lox == loxodromic_by_parts(&st, &x), || {
            format!("{x}: classified loxodromic = {lox}")
        })?;
    }
    Ok(())
}

/// Cyclic reduction and rotation comparison, written out independently.
fn conjugate_to(u: &Word, v: &Word) -> bool {
    let core = |w: &Word| {
        let mut l = w.letters().to_vec();
        while l.len() >= 2 && l[0] == -l[l.len() - 1] {
            l.remove(0);
            l.pop();
        }
        l
    };
    let (a, b) = (core(u), core(v));
    a.len() == b.len()
        && (a.is_empty() || (0..a.len()).any(|k| a[k..].iter().chain(&a[..k]).eq(b.iter())))
}

fn c11_atoroidal() -> Check {
    let commutator = Word(vec![1, 2, -1, -2]);
    for text in [
        GOLDEN,
        LINEAR,
        IDENTITY,
        "a -> b\nb -> a b\n",
        "a -> a b\nb -> b\n",
        "a -> b\nb -> a' b'\n",
        "a -> a b a\nb -> b a\n",
    ] {
        let phi = aut(text);
        match is_atoroidal(&phi, 8, 4, None).map_err(|e| e.to_string())? {
            AtoroidalVerdict::NotAtoroidal {
                component,
                witness,
                period,
            } => {
                let mut y = witness.clone();
                for _ in 0..period {
                    y = phi.apply(component, &y);
                }
                ensure(conjugate_to(&y, &witness), || {
                    format!("{text:?}: witness {witness} is not {period}-periodic")
                })?;
            }
            v => return Err(format!("{text:?}: {v:?}")),
        }
        // smallest p with phi^p([a,b]) conjugate to [a,b]^(+-1), and with sign +
        let mut y = commutator.clone();
        let (mut either, mut same) = (None, None);
        for p in 1..=4 {
            y = phi.apply(0, &y);
            if either.is_none()
                && (conjugate_to(&y, &commutator) || conjugate_to(&y, &commutator.inverse()))
            {
                either = Some(p);
            }
            if same.is_none() && conjugate_to(&y, &commutator) {
                same = Some(p);
            }
        }
        ensure(either.is_some(), || {
            format!("{text:?}: [a,b] is not periodic up to 4")
        })?;
        let direct = periodic_period(&phi, 0, &commutator, 4);
        ensure(direct == same, || {
            format!("{text:?}: periodic_period {direct:?} vs oracle {same:?}")
        })?;
    }
    Ok(())
}

fn c12_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_pforge");
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/");
    let jobs: [(&str, &str, &[&str]); 4] = [
        ("tt", "golden.aut", &[]),
        ("growth", "golden.aut", &["--elements", "ab,ba'"]),
        ("blowup", "golden_blowup.json", &["--perturb", "0.001"]),
        ("index", "tripod_rigid.json", &[]),
    ];
    for (cmd, file, extra) in jobs {
        let run = || {
            Command::new(bin)
                .args([
                    cmd,
                    "--in",
                    &format!("{data}{file}"),
                    "--json",
                    "--seed",
                    "42",
                ])
                .args(extra)
                .output()
                .map_err(|e| e.to_string())
        };
        let (a, b) = (run()?, run()?);
        ensure(a.status.success(), || {
            format!("{cmd}: {}", String::from_utf8_lossy(&a.stderr))
        })?;
        ensure(a.stdout == b.stdout && !a.stdout.is_empty(), || {
            format!("{cmd}: outputs differ")
        })?;
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("Perron-Frobenius stretch factors", c1_perron_frobenius),
        ("growth trichotomy", c2_growth),
        ("lambda-homogeneity of the limit length", c3_homogeneity),
        ("legal axis", c4_legal_axis),
        ("index equalities and audits", c5_index),
        ("action condition brute force", c6_action_condition),
        ("pretree axiom suites", c7_axioms),
        ("attaching-point solver", c8_solver),
        ("ideal-stitching criterion", c9_ideal_stitching),
        (
            "collapse and loxodromic classification",
            c10_collapse_and_loxodromy,
        ),
        ("atoroidal corollary", c11_atoroidal),
        ("CLI determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
