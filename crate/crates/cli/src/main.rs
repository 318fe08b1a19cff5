//! `pforge`: train tracks, growth, blow-ups and indices from input files.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use pforge_core::automorphism::{Automorphism, FreeGroupSystem, SubgroupSystem};
use pforge_core::blowup::{
    build_blowup_ball, collapse_check, induced_map, simple_patchwork, AttachingEquations,
    BlowupConfig,
};
use pforge_core::error::Error;
use pforge_core::graph::{FreeSplitting, TopRep};
use pforge_core::growth::{build_hierarchy, growth_report, is_atoroidal};
use pforge_core::index::{
    build_associated_pretree, check_action_condition, index_via_orbit_graphs, orbit_graphs,
    parse_rigid_system, splitting_index,
};
use pforge_core::parse::{parse_automorphism, parse_word};
use pforge_core::pretree::{check_axioms, Sampling};
use pforge_core::quad::Quad;
use pforge_core::train_track::train_track_rel;
use pforge_core::word::Word;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "pforge",
    version,
    about = "Train tracks, growth, blow-ups and index theory for free group automorphisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train track representative of an automorphism on the rose.
    Tt(Opts),
    /// Growth verdict, per-element growth tables and the atoroidal check.
    Growth(Opts),
    /// Blow-up of a splitting along line fibers (JSON config).
    Blowup(Opts),
    /// Index of a splitting (`rose N` or automorphism text) or of a rigid system (JSON).
    Index(Opts),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Opts {
    /// Input file.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON report (default).
    #[arg(long, group = "format")]
    json: bool,
    /// Graphviz output.
    #[arg(long, group = "format")]
    dot: bool,
    /// Plain-text summary.
    #[arg(long, group = "format")]
    text: bool,
    /// Numerical tolerance (PF iteration, limit lengths, attaching-point solver).
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Ball radius for blow-ups and associated pretrees; orbit budget for indices.
    #[arg(long)]
    depth: Option<usize>,
    /// Extra elements for growth tables, comma separated (e.g. "ab,ba'").
    #[arg(long)]
    elements: Option<String>,
    /// Seed for randomized sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterates per growth table.
    #[arg(long, default_value_t = 64)]
    n_max: usize,
    /// Word-length scale for the atoroidal search.
    #[arg(long, default_value_t = 8)]
    length: usize,
    /// Period bound for the atoroidal search.
    #[arg(long, default_value_t = 4)]
    period: usize,
    /// Shift the first attaching point by this amount before checking f*.
    #[arg(long)]
    perturb: Option<f64>,
    /// Write the output here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Format {
    Json,
    Dot,
    Text,
}

impl Opts {
    fn format(&self) -> Format {
        if self.dot {
            Format::Dot
        } else if self.text {
            Format::Text
        } else {
            Format::Json
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Failure::usage("--tol must be positive"));
        }
        if self.depth == Some(0) || self.n_max == 0 || self.length == 0 || self.period == 0 {
            return Err(Failure::usage("budgets must be at least 1"));
        }
        if self
            .perturb
            .is_some_and(|x| !x.is_finite() || x.abs() > 1e6)
        {
            return Err(Failure::usage(
                "--perturb must be finite and at most 1e6 in size",
            ));
        }
        Ok(())
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(msg: &str) -> Self {
        Failure {
            code: 2,
            message: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } => 2,
            Error::NotAnAutomorphism => 3,
            Error::IterationBudgetExceeded { .. } => 4,
            Error::NoConvergence(_) => 5,
            Error::DepthExceeded(_)
            | Error::NotStabilized(_)
            | Error::StabilizerHeuristicExhausted(_) => 6,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// A finished job: the JSON body plus its DOT and text renderings.
struct Output {
    report: Value,
    dot: String,
    text: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts) = match &cli.command {
        Command::Tt(o) => ("tt", o),
        Command::Growth(o) => ("growth", o),
        Command::Blowup(o) => ("blowup", o),
        Command::Index(o) => ("index", o),
    };
    match run(name, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pforge {name}: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(name: &str, opts: &Opts) -> Result<(), Failure> {
    opts.validate()?;
    let input = std::fs::read_to_string(&opts.input).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", opts.input.display()),
    })?;
    let out = match name {
        "tt" => cmd_traintrack(&input)?,
        "growth" => cmd_growth(&input, opts)?,
        "blowup" => cmd_blowup(&input, opts)?,
        _ => cmd_index(&input, opts)?,
    };
    let body = match opts.format() {
        Format::Json => {
            let doc = json!({
                "tool": "pforge",
                "version": env!("CARGO_PKG_VERSION"),
                "schema": SCHEMA_VERSION,
                "command": name,
                "config": opts,
                "report": out.report,
            });
            serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n"
        }
        Format::Dot => out.dot,
        Format::Text => format!("pforge {} {name}\n{}", env!("CARGO_PKG_VERSION"), out.text),
    };
    match &opts.out {
        None => print!("{body}"),
        Some(path) => {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, &body)
                .and_then(|_| std::fs::rename(&tmp, path))
                .map_err(|e| Failure {
                    code: 1,
                    message: format!("{}: {e}", path.display()),
                })?;
        }
    }
    Ok(())
}

fn automorphism(input: &str) -> Result<Automorphism, Failure> {
    let phi = parse_automorphism(input)?;
    Ok(phi.verify()?)
}

fn show(phi: &Automorphism, comp: usize, w: &Word) -> String {
    w.display_with(&phi.system.names[comp])
}

fn cmd_traintrack(input: &str) -> Result<Output, Failure> {
    let phi = automorphism(input)?;
    let (tt, collapses) = train_track_rel(&TopRep::on_rose(&phi))?;
    let mut report = tt.report();
    let simplicial = tt.is_simplicial();
    report["simplicial"] = json!(simplicial);
    report["collapses"] = json!(collapses);
    if !simplicial {
        let (comp, x, _) = tt.find_legal_axis()?;
        let lt = tt.eigen_length(&tt.rep.splitting.loop_path(
            &tt.rep.splitting.marking()?,
            comp,
            &x,
        ));
        report["legal_axis"] =
            json!({ "component": comp, "element": show(&phi, comp, &x), "eigen_length": lt });
    }
    let mut text = String::new();
    let _ = writeln!(text, "lambda {:.10}", tt.lambda());
    let _ = writeln!(text, "simplicial {simplicial}");
    let _ = writeln!(
        text,
        "graph {} vertices, {} edges, {} moves",
        tt.rep.splitting.vertices.len(),
        tt.rep.splitting.edges.len(),
        tt.moves.len()
    );
    if let Some(ax) = report.get("legal_axis") {
        let _ = writeln!(text, "legal axis {}", ax["element"].as_str().unwrap_or(""));
    }
    Ok(Output {
        report,
        dot: tt.rep.splitting.to_dot(),
        text,
    })
}

fn cmd_growth(input: &str, opts: &Opts) -> Result<Output, Failure> {
    let phi = automorphism(input)?;
    let mut samples: Vec<(usize, Word)> = Vec::new();
    for c in 0..phi.system.len() {
        for g in 1..=phi.system.ranks[c] as i32 {
            samples.push((c, Word::gen(g)));
        }
    }
    if let Some(list) = &opts.elements {
        for s in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            samples.push(parse_word(&phi.system, s)?);
        }
    }
    let rel = SubgroupSystem::empty();
    let report = growth_report(&phi, &rel, &samples, opts.n_max)?;
    let h = build_hierarchy(&phi, &rel)?;
    let atoroidal = is_atoroidal(&phi, opts.length, opts.period, Some(&h))?;
    let mut body = serde_json::to_value(&report).expect("reports serialize");
    let names: Vec<String> = report
        .elements
        .iter()
        .map(|e| show(&phi, e.component, &e.word))
        .collect();
    for (row, name) in body["elements"]
        .as_array_mut()
        .expect("element rows")
        .iter_mut()
        .zip(&names)
    {
        row["name"] = json!(name);
    }
    body["atoroidal"] = serde_json::to_value(&atoroidal).expect("verdicts serialize");
    let mut text = String::new();
    let _ = writeln!(
        text,
        "verdict {}",
        serde_json::to_string(&report.verdict).expect("verdicts serialize")
    );
    for (e, name) in report.elements.iter().zip(&names) {
        let _ = writeln!(
            text,
            "{name}: {} (rate {:.6})",
            serde_json::to_string(&e.classification).expect("classes serialize"),
            e.estimate()
        );
    }
    let _ = writeln!(
        text,
        "atoroidal {}",
        serde_json::to_string(&atoroidal).expect("verdicts serialize")
    );
    let dot = h
        .strata
        .first()
        .map(|s| s.train_track.rep.splitting.to_dot())
        .unwrap_or_default();
    Ok(Output {
        report: body,
        dot,
        text,
    })
}

fn perturbation(x: f64) -> Quad {
    // rational with denominator 10^12, exact for the decimal inputs used
    Quad::ratio((x * 1e12).round() as i64, 1_000_000_000_000)
}

fn cmd_blowup(input: &str, opts: &Opts) -> Result<Output, Failure> {
    let config = BlowupConfig::parse(input)?;
    let st = config.stitching()?;
    let depth = opts.depth.or(config.depth).unwrap_or(2);
    let (patch, ideal) = simple_patchwork(&st, depth, opts.tol, 200, opts.seed)?;
    let ball = match opts.perturb {
        Some(x) if st.len() > 0 => {
            let mut choice = ideal.choice.clone();
            choice[0] = &choice[0] + &perturbation(x);
            build_blowup_ball(st.clone(), choice, depth)?
        }
        _ => ideal,
    };
    let induced = induced_map(&ball, 500, opts.tol, opts.seed);
    let collapse = collapse_check(&ball, 500, opts.seed)?;
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(opts.seed));
    let axioms = check_axioms(
        &ball,
        &ball.points,
        Sampling::Random {
            triples: 1000,
            rng: &rng,
        },
    );
    let report = json!({
        "lambda": st.lambda.to_string(),
        "directions": st.directions,
        "attaching_points": ball.choice.iter().map(Quad::to_string).collect::<Vec<_>>(),
        "solver": patch.choice,
        "solver_error": patch.solver_error,
        "ball": { "depth": depth, "vertices": ball.vertices.len(), "points": ball.points.len() },
        "axioms": { "checked": axioms.checked, "passed": axioms.passed(), "counterexample": axioms.counterexample },
        "collapse": { "pairs": collapse.pairs, "mismatches": collapse.mismatches },
        "induced_map": induced,
        "injectivity_witnesses": ball.pl_injectivity_witnesses().len(),
        "homothety": { "pairs": patch.homothety_pairs, "failures": patch.homothety_failures },
    });
    let mut text = String::new();
    let _ = writeln!(text, "lambda {} directions {}", st.lambda, st.len());
    let _ = writeln!(
        text,
        "solver residual {:.3e} after {} iterations",
        patch.choice.residual, patch.choice.iterations
    );
    let _ = writeln!(
        text,
        "ball depth {depth}: {} vertices, {} points",
        ball.vertices.len(),
        ball.points.len()
    );
    let _ = writeln!(
        text,
        "axioms {} ({} checks)",
        if axioms.passed() { "pass" } else { "FAIL" },
        axioms.checked
    );
    let _ = writeln!(
        text,
        "collapse mismatches {}/{}",
        collapse.mismatches, collapse.pairs
    );
    let _ = writeln!(
        text,
        "f* verdict {} ({} interval failures of {})",
        induced.verdict, induced.failures, induced.checks
    );
    for v in &induced.violations {
        let _ = writeln!(
            text,
            "  violated at vertex {} germ {} defect {:.3e}",
            v.vertex, v.germ, v.defect
        );
    }
    Ok(Output {
        report,
        dot: ball.to_dot(),
        text,
    })
}

fn cmd_index(input: &str, opts: &Opts) -> Result<Output, Failure> {
    if input.trim_start().starts_with('{') {
        return index_rigid(input, opts);
    }
    let g = match input.trim().strip_prefix("rose") {
        Some(n) => {
            let n: usize = n.trim().parse().map_err(|_| Failure {
                code: 2,
                message: format!("bad rank {:?}", n.trim()),
            })?;
            if !(1..=64).contains(&n) {
                return Err(Failure {
                    code: 2,
                    message: "rose rank must be in 1..=64".into(),
                });
            }
            FreeSplitting::rose(&FreeGroupSystem::single(n))
        }
        None => FreeSplitting::rose(&automorphism(input)?.system),
    };
    let report = splitting_index(&g)?;
    let mut text = String::new();
    for o in &report.orbits {
        let _ = writeln!(
            text,
            "{}: rank {} directions {} index {}",
            o.name, o.stabilizer_rank, o.directions, o.index
        );
    }
    let _ = writeln!(
        text,
        "total {} < c(F) = {}: {}",
        report.total, report.complexity, report.below_bound
    );
    Ok(Output {
        report: serde_json::to_value(&report).expect("reports serialize"),
        dot: g.to_dot(),
        text,
    })
}

fn index_rigid(input: &str, opts: &Opts) -> Result<Output, Failure> {
    let sys = parse_rigid_system(input)?;
    let max_depth = opts.depth.unwrap_or(32);
    let report = index_via_orbit_graphs(&sys, max_depth)?;
    let action = check_action_condition(&sys, 4.min(max_depth));
    let ball = build_associated_pretree(sys.clone(), 3.min(max_depth))?;
    let rng = RefCell::new(ChaCha8Rng::seed_from_u64(opts.seed));
    let axioms = check_axioms(
        &ball,
        &ball.points,
        Sampling::Random {
            triples: 1000,
            rng: &rng,
        },
    );
    let rigidity = sys.rigidity_violations(4);
    let mut dot = String::new();
    for o in &report.orbits {
        let rep = o.name.trim_start_matches('[').trim_end_matches(']');
        if let Some(s) = sys
            .special_points()
            .into_iter()
            .find(|s| s.to_string() == rep)
        {
            dot.push_str(&orbit_graphs(&sys, &s, max_depth)?.to_dot());
        }
    }
    let body = json!({
        "index": report,
        "action_condition": { "checked": action.checked, "violations": action.violations.len() },
        "rigidity_violations": rigidity.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        "ball": { "depth": ball.depth, "points": ball.points.len() },
        "axioms": { "checked": axioms.checked, "passed": axioms.passed() },
    });
    let mut text = String::new();
    for o in &report.orbits {
        let _ = writeln!(
            text,
            "{}: rank {} directions {} index {}",
            o.name, o.stabilizer_rank, o.directions, o.index
        );
    }
    let _ = writeln!(
        text,
        "total {} = c(F) - 1 = {}: audits {}",
        report.total,
        report.complexity - 1,
        if report.audits_hold() {
            "exact"
        } else {
            "FAIL"
        }
    );
    let _ = writeln!(
        text,
        "action condition violations {}/{}",
        action.violations.len(),
        action.checked
    );
    Ok(Output {
        report: body,
        dot,
        text,
    })
}
