//! Growth of automorphisms: descending train-track hierarchies, element
//! growth, limit translation lengths and atoroidality at a scale.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::automorphism::{Automorphism, SubgroupSystem};
use crate::error::{Error, Result};
use crate::graph::{cyclic_tighten, FreeSplitting, GPath, Marking, TopRep};
use crate::stallings::SubgroupGraph;
use crate::train_track::{train_track_rel, TrainTrack};
use crate::word::{enumerate_words, Word};

/// Stratum stretch factors within this of 1 count as simplicial.
pub const LAMBDA_TOL: f64 = 1e-9;
/// Limit lengths below this count as zero.
pub const ELLIPTIC_TOL: f64 = 1e-6;
/// Default convergence tolerance for limit lengths.
pub const LIMIT_TOL: f64 = 1e-9;
/// Iterated paths longer than this stop a limit-length computation.
pub const LENGTH_CAP: usize = 1 << 21;
/// Iterated words longer than this end an element-growth sequence.
pub const WORD_CAP: usize = 1 << 16;
/// Smallest `n_max` for which element growth is classified.
pub const MIN_SAMPLES: usize = 8;
/// Rate floor when no stratum stretch factor is supplied.
pub const DEFAULT_RATE_FLOOR: f64 = 1.2;

#[derive(Clone, Debug, Serialize)]
pub struct Stratum {
    pub train_track: TrainTrack,
    pub collapses: usize,
    /// Labeled vertices; component `i` of the next stratum is the group of
    /// `vertices[i]`.
    pub vertices: Vec<usize>,
    pub restriction: Option<Automorphism>,
    /// Per labeled vertex: its component here and the stabilizer generators
    /// that the letters of the next stratum's component stand for.
    pub embeddings: Vec<(usize, Vec<Word>)>,
}

impl Stratum {
    pub fn lambda(&self) -> f64 {
        self.train_track.lambda()
    }

    pub fn is_exponential(&self) -> bool {
        self.lambda() > 1.0 + LAMBDA_TOL
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Hierarchy {
    pub strata: Vec<Stratum>,
    pub terminal_system: SubgroupSystem,
}

impl Hierarchy {
    /// Rewrites a word of stratum `level` in the coordinates of stratum 0.
    pub fn lift(&self, level: usize, comp: usize, x: &Word) -> (usize, Word) {
        let (mut comp, mut x) = (comp, x.clone());
        for l in (0..level).rev() {
            let (c, gens) = &self.strata[l].embeddings[comp];
            x = substitute(gens, &x);
            comp = *c;
        }
        (comp, x)
    }
}

fn substitute(gens: &[Word], x: &Word) -> Word {
    let mut out = Word::empty();
    for &l in &x.0 {
        let g = &gens[l.unsigned_abs() as usize - 1];
        out = if l > 0 {
            out.mul(g)
        } else {
            out.mul(&g.inverse())
        };
    }
    out
}

/// Train tracks for `φ`, then for its restrictions to vertex groups, until
/// the vertex groups are the members of `rel`.
pub fn build_hierarchy(phi: &Automorphism, rel: &SubgroupSystem) -> Result<Hierarchy> {
    let bound = phi.system.complexity().max(0) as usize + 1;
    let mut strata = Vec::new();
    let mut cur = phi.clone();
    let mut cur_rel = rel.clone();
    loop {
        let rep = if cur_rel.members.is_empty() {
            TopRep::on_rose(&cur)
        } else {
            TopRep::new(&cur, &FreeSplitting::rose_rel(&cur.system, &cur_rel)?)?
        };
        let (tt, collapses) = train_track_rel(&rep)?;
        let g = &tt.rep.splitting;
        let marking = g.marking()?;
        let r = tt.rep.restriction()?;
        let embeddings = r
            .vertices
            .iter()
            .map(|&v| (g.vertices[v].comp, g.stabilizer(&marking, v)))
            .collect();
        let next_rel = descend_rel(&cur_rel, &tt, &r.vertices)?;
        let no_edges = g.edges.is_empty();
        let next = r.automorphism.clone();
        strata.push(Stratum {
            train_track: tt,
            collapses,
            vertices: r.vertices,
            restriction: r.automorphism,
            embeddings,
        });
        let Some(next) = next else { break };
        let terminal = next_rel.members.len() == next.system.len()
            && next_rel
                .members
                .iter()
                .all(|(c, gens)| gens.len() == next.system.ranks[*c]);
        if terminal {
            break;
        }
        if no_edges || strata.len() > bound {
            return Err(Error::DepthExceeded(format!(
                "hierarchy did not descend after {} strata",
                strata.len()
            )));
        }
        cur = next;
        cur_rel = next_rel;
    }
    Ok(Hierarchy {
        strata,
        terminal_system: rel.clone(),
    })
}

/// Members of `rel` rewritten in the vertex-group coordinates of `tt`.
fn descend_rel(
    rel: &SubgroupSystem,
    tt: &TrainTrack,
    vertices: &[usize],
) -> Result<SubgroupSystem> {
    let g = &tt.rep.splitting;
    let marking = g.marking()?;
    let mut members = Vec::new();
    for (c, gens) in &rel.members {
        let mut found = None;
        for (i, &v) in vertices.iter().enumerate() {
            if g.vertices[v].comp != *c {
                continue;
            }
            let stab = g.stabilizer(&marking, v);
            let sg = SubgroupGraph::new(&stab);
            if let Some(u) = sg.conjugator_into(gens) {
                let coords: Option<Vec<Word>> =
                    gens.iter().map(|x| sg.express(&x.conj(&u))).collect();
                found = coords.map(|w| (i, w));
                break;
            }
        }
        members.push(
            found.ok_or_else(|| {
                Error::NotInvariant("relative member left the vertex groups".into())
            })?,
        );
    }
    Ok(SubgroupSystem { members })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum GrowthVerdict {
    Polynomial { degree_bound: usize },
    Exponential { lambdas: Vec<f64> },
}

/// Polynomial of degree at most `#strata − 1` iff every stratum is simplicial.
pub fn classify_growth(h: &Hierarchy) -> GrowthVerdict {
    let lambdas: Vec<f64> = h
        .strata
        .iter()
        .filter(|s| s.is_exponential())
        .map(|s| s.lambda())
        .collect();
    if lambdas.is_empty() {
        GrowthVerdict::Polynomial {
            degree_bound: h.strata.len().saturating_sub(1),
        }
    } else {
        GrowthVerdict::Exponential { lambdas }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum GrowthClass {
    /// `degree` is set when the lengths fit a polynomial exactly.
    Polynomial {
        degree: Option<usize>,
    },
    Exponential {
        rate: f64,
    },
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct ElementGrowth {
    pub component: usize,
    pub word: Word,
    /// Translation lengths of `ψⁿ(x)` for `n = 0, 1, ...`.
    pub lengths: Vec<usize>,
    /// `ⁿ√L_n` for `n ≥ 1`.
    pub nth_roots: Vec<f64>,
    /// `(L_n / L_m)^(1/(n−m))` with `m = ⌊n/2⌋`, for `n ≥ 1`.
    pub estimates: Vec<f64>,
    pub classification: GrowthClass,
}

impl ElementGrowth {
    pub fn estimate(&self) -> f64 {
        self.estimates.last().copied().unwrap_or(0.0)
    }
}

/// Lengths of `ψⁿ(x)` in `splitting` for `n ≤ n_max` and a heuristic
/// classification. `rate_floor` is the smallest stratum stretch factor above 1
/// when known.
pub fn element_growth(
    phi: &Automorphism,
    comp: usize,
    x: &Word,
    n_max: usize,
    splitting: &FreeSplitting,
    rate_floor: Option<f64>,
) -> Result<ElementGrowth> {
    let marking = splitting.marking()?;
    let mut lengths = Vec::new();
    let (mut c, mut w) = (comp, x.cyclic_reduce().0);
    for n in 0..=n_max {
        lengths.push(splitting.translation_length(&marking, c, &w));
        if n == n_max {
            break;
        }
        w = phi.apply(c, &w).cyclic_reduce().0;
        c = phi.sigma[c];
        if w.len() > WORD_CAP {
            break;
        }
    }
    let nth_roots = (1..lengths.len())
        .map(|n| (lengths[n] as f64).powf(1.0 / n as f64))
        .collect();
    let estimates = (1..lengths.len())
        .map(|n| half_window_rate(&lengths, n))
        .collect();
    let max_degree = phi.system.complexity().max(0) as usize;
    let classification = classify_lengths(
        &lengths,
        max_degree,
        rate_floor.unwrap_or(DEFAULT_RATE_FLOOR),
    );
    Ok(ElementGrowth {
        component: comp,
        word: x.clone(),
        lengths,
        nth_roots,
        estimates,
        classification,
    })
}

fn half_window_rate(lengths: &[usize], n: usize) -> f64 {
    let m = n / 2;
    let (a, b) = (lengths[m] as f64, lengths[n] as f64);
    if a == 0.0 {
        return if b == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (b / a).powf(1.0 / (n - m) as f64)
}

fn classify_lengths(lengths: &[usize], max_degree: usize, floor: f64) -> GrowthClass {
    if lengths.iter().all(|&l| l == 0) {
        return GrowthClass::Polynomial { degree: Some(0) };
    }
    let n = lengths.len() - 1;
    if n < MIN_SAMPLES {
        return GrowthClass::Inconclusive;
    }
    let tail: Vec<(f64, f64)> = (n / 2..=n).map(|k| (k as f64, lengths[k] as f64)).collect();
    if let Some(d) = (0..=max_degree).find(|&d| fits_polynomial(&tail, d)) {
        return GrowthClass::Polynomial { degree: Some(d) };
    }
    if tail.iter().all(|&(_, y)| y > 0.0) {
        let logs: Vec<(f64, f64)> = tail.iter().map(|&(k, y)| (k, y.ln())).collect();
        let slope = least_squares(&logs, 1).map(|c| c[1]).unwrap_or(0.0);
        if slope >= floor.ln() - 0.05 {
            return GrowthClass::Exponential { rate: slope.exp() };
        }
    }
    if half_window_rate(lengths, n) <= 1.05 {
        GrowthClass::Polynomial { degree: None }
    } else {
        GrowthClass::Inconclusive
    }
}

/// Least-squares coefficients of a degree-`d` polynomial in `x / x_max`.
fn least_squares(pts: &[(f64, f64)], d: usize) -> Option<Vec<f64>> {
    if pts.len() <= d {
        return None;
    }
    let scale = pts.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    let a = DMatrix::from_fn(pts.len(), d + 1, |i, j| (pts[i].0 / scale).powi(j as i32));
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    Some(
        sol.iter()
            .enumerate()
            .map(|(j, c)| c / scale.powi(j as i32))
            .collect(),
    )
}

fn fits_polynomial(pts: &[(f64, f64)], d: usize) -> bool {
    // need more points than coefficients for the fit to mean anything
    if pts.len() < d + 3 {
        return false;
    }
    let Some(c) = least_squares(pts, d) else {
        return false;
    };
    let norm = pts.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    let res = pts
        .iter()
        .map(|&(x, y)| {
            let v: f64 = c
                .iter()
                .enumerate()
                .map(|(j, cj)| cj * x.powi(j as i32))
                .sum();
            (v - y).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    res <= 1e-6 * norm.max(1.0)
}

/// Cyclic form of a closed path: a vertex element when the loop is elliptic,
/// otherwise the cyclically reduced `(step, element after it)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub enum CyclicForm {
    Elliptic { vertex: usize, elem: Word },
    Loxodromic(Vec<(i32, Word)>),
}

pub fn cyclic_form(g: &FreeSplitting, p: &GPath) -> CyclicForm {
    let mut p = p.clone();
    p.tighten();
    loop {
        let n = p.steps.len();
        if n == 0 {
            return CyclicForm::Elliptic {
                vertex: p.start,
                elem: p.elems[0].clone(),
            };
        }
        let head = p.elems[n].mul(&p.elems[0]);
        if n >= 2 && p.steps[0] == -p.steps[n - 1] && head.is_empty() {
            p = GPath {
                start: g.step_end(p.steps[0]),
                steps: p.steps[1..n - 1].to_vec(),
                elems: p.elems[1..n].to_vec(),
            };
        } else {
            return CyclicForm::Loxodromic(cyclic_tighten(&p));
        }
    }
}

fn closed_path(g: &FreeSplitting, pairs: &[(i32, Word)]) -> GPath {
    let start = g.step_start(pairs[0].0);
    let mut elems = vec![Word::empty()];
    elems.extend(pairs.iter().map(|(_, h)| h.clone()));
    GPath {
        start,
        steps: pairs.iter().map(|(s, _)| *s).collect(),
        elems,
    }
}

/// Evaluates `x ↦ lim λ⁻ⁿ ‖ψⁿ(x)‖` in the eigenmetric of an exponential train
/// track. Values are cached behind a lock, so shared use is safe.
#[derive(Debug)]
pub struct LimitLengthOracle {
    pub train_track: TrainTrack,
    pub tol: f64,
    pub n_max: usize,
    marking: Marking,
    cache: Mutex<HashMap<(usize, Word), f64>>,
}

impl LimitLengthOracle {
    pub fn new(train_track: TrainTrack, tol: f64) -> Result<Self> {
        if train_track.lambda() <= 1.0 + LAMBDA_TOL {
            return Err(Error::Invalid(
                "limit lengths need a stratum with lambda > 1".into(),
            ));
        }
        let marking = train_track.rep.splitting.marking()?;
        Ok(LimitLengthOracle {
            train_track,
            tol,
            n_max: 64,
            marking,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.train_track.lambda()
    }

    /// Eigenmetric lengths `L_n` of the cyclically tightened `fⁿ(x)`.
    pub fn lengths(&self, comp: usize, x: &Word, n: usize) -> Result<Vec<f64>> {
        let rep = &self.train_track.rep;
        let g = &rep.splitting;
        let mut out = Vec::new();
        let mut cur = match cyclic_form(g, &g.loop_path(&self.marking, comp, x)) {
            CyclicForm::Elliptic { .. } => return Ok(vec![0.0; n + 1]),
            CyclicForm::Loxodromic(pairs) => pairs,
        };
        for k in 0..=n {
            out.push(
                cur.iter()
                    .map(|(s, _)| self.train_track.pf.nu[crate::graph::step_edge(*s)])
                    .sum(),
            );
            if k == n {
                break;
            }
            if cur.len() > LENGTH_CAP {
                return Err(Error::NoConvergence(format!(
                    "iterated path exceeds {LENGTH_CAP} edges at n = {k}"
                )));
            }
            let img = rep.image_path(&closed_path(g, &cur));
            cur = cyclic_tighten(&img);
            if cur.is_empty() {
                return Err(Error::Degenerate("loxodromic loop became elliptic".into()));
            }
        }
        Ok(out)
    }

    /// Stolz–Cesàro form `(L_n − L_{n−1}) / (λⁿ − λⁿ⁻¹)`: bounded cancellation
    /// leaves `L_n = cλⁿ + d` eventually, so this stabilizes at `c` once the
    /// path splits into legal pieces and Nielsen paths.
    pub fn limit_length(&self, comp: usize, x: &Word) -> Result<f64> {
        let x = x.reduce();
        let key = (comp, x.clone());
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let lambda = self.lambda();
        let rep = &self.train_track.rep;
        let g = &rep.splitting;
        let mut cur = match cyclic_form(g, &g.loop_path(&self.marking, comp, &x)) {
            CyclicForm::Elliptic { .. } => Vec::new(),
            CyclicForm::Loxodromic(pairs) => pairs,
        };
        let nu = &self.train_track.pf.nu;
        let len = |c: &[(i32, Word)]| {
            c.iter()
                .map(|(s, _)| nu[crate::graph::step_edge(*s)])
                .sum::<f64>()
        };
        let mut value = if cur.is_empty() { Some(0.0) } else { None };
        if value.is_none() {
            let mut prev_len = len(&cur);
            let mut prev = prev_len;
            let mut calm = 0;
            for n in 1..=self.n_max {
                if cur.len() > LENGTH_CAP {
                    break;
                }
                cur = cyclic_tighten(&rep.image_path(&closed_path(g, &cur)));
                if cur.is_empty() {
                    return Err(Error::Degenerate("loxodromic loop became elliptic".into()));
                }
                let l = len(&cur);
                let v = (l - prev_len) / (lambda.powi(n as i32) - lambda.powi(n as i32 - 1));
                if (v - prev).abs() < self.tol * v.abs().max(1.0) {
                    calm += 1;
                } else {
                    calm = 0;
                }
                prev_len = l;
                prev = v;
                if calm >= 3 {
                    value = Some(v.max(0.0));
                    break;
                }
            }
        }
        let v = value.ok_or_else(|| {
            Error::NoConvergence(format!(
                "limit length did not settle within {} iterations",
                self.n_max
            ))
        })?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

/// Whether `x` grows polynomially rel. the terminal system: zero limit length
/// at every exponential stratum met, descending into vertex groups.
pub fn elliptic_in_limit(h: &Hierarchy, comp: usize, x: &Word) -> Result<bool> {
    elliptic_at(h, 0, comp, &x.reduce())
}

fn elliptic_at(h: &Hierarchy, level: usize, comp: usize, x: &Word) -> Result<bool> {
    if x.is_empty() || level == h.strata.len() {
        return Ok(true);
    }
    let st = &h.strata[level];
    let tt = &st.train_track;
    if st.is_exponential() {
        let oracle = LimitLengthOracle::new(tt.clone(), LIMIT_TOL)?;
        if oracle.limit_length(comp, x)? > ELLIPTIC_TOL {
            return Ok(false);
        }
    }
    let g = &tt.rep.splitting;
    let marking = g.marking()?;
    let pieces = match cyclic_form(g, &g.loop_path(&marking, comp, x)) {
        CyclicForm::Elliptic { vertex, elem } => vec![(vertex, elem)],
        CyclicForm::Loxodromic(pairs) => pairs
            .into_iter()
            .filter(|(_, e)| !e.is_empty())
            .map(|(s, e)| (g.step_end(s), e))
            .collect(),
    };
    for (v, e) in pieces {
        if e.is_empty() {
            continue;
        }
        let i = st
            .vertices
            .iter()
            .position(|&w| w == v)
            .ok_or_else(|| Error::Degenerate(format!("element at unlabeled vertex v{v}")))?;
        let coords = SubgroupGraph::new(&g.vertices[v].group)
            .express(&e)
            .ok_or_else(|| Error::Degenerate(format!("element outside the group of v{v}")))?;
        if !elliptic_at(h, level + 1, i, &coords)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum AtoroidalVerdict {
    NotAtoroidal {
        component: usize,
        witness: Word,
        period: usize,
    },
    /// No periodic class up to the scale; `polynomial_samples` lists sampled
    /// nontrivial elements the hierarchy finds polynomially growing.
    AtoroidalAtScale {
        max_length: usize,
        max_period: usize,
        polynomial_samples: Vec<(usize, Word)>,
    },
}

/// Smallest `p ≤ n` with `φᵖ(x)` conjugate to `x`.
pub fn periodic_period(phi: &Automorphism, comp: usize, x: &Word, n: usize) -> Option<usize> {
    let x = x.cyclic_reduce().0;
    let (mut c, mut y) = (comp, x.clone());
    for p in 1..=n {
        y = phi.apply(c, &y).cyclic_reduce().0;
        c = phi.sigma[c];
        if c == comp && y.len() == x.len() && y.is_conjugate(&x) {
            return Some(p);
        }
    }
    None
}

/// Searches cyclically reduced words of length at most `l` for a class of
/// period at most `n`; without one, samples short elements for polynomial
/// growth when a hierarchy is supplied.
pub fn is_atoroidal(
    phi: &Automorphism,
    l: usize,
    n: usize,
    h: Option<&Hierarchy>,
) -> Result<AtoroidalVerdict> {
    for comp in 0..phi.system.len() {
        for x in enumerate_words(phi.system.ranks[comp], l) {
            if x.is_empty() || !x.is_cyclically_reduced() {
                continue;
            }
            if let Some(p) = periodic_period(phi, comp, &x, n) {
                return Ok(AtoroidalVerdict::NotAtoroidal {
                    component: comp,
                    witness: x,
                    period: p,
                });
            }
        }
    }
    let mut polynomial_samples = Vec::new();
    if let Some(h) = h {
        for comp in 0..phi.system.len() {
            for x in enumerate_words(phi.system.ranks[comp], l.min(4)) {
                if !x.is_empty() && elliptic_in_limit(h, comp, &x)? {
                    polynomial_samples.push((comp, x));
                }
            }
        }
    }
    Ok(AtoroidalVerdict::AtoroidalAtScale {
        max_length: l,
        max_period: n,
        polynomial_samples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumSummary {
    pub lambda: f64,
    pub edges: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub verdict: GrowthVerdict,
    pub strata: Vec<StratumSummary>,
    pub elements: Vec<ElementGrowth>,
}

/// Hierarchy verdict plus element growth on the rose for each sample.
pub fn growth_report(
    phi: &Automorphism,
    rel: &SubgroupSystem,
    samples: &[(usize, Word)],
    n_max: usize,
) -> Result<GrowthReport> {
    let h = build_hierarchy(phi, rel)?;
    let verdict = classify_growth(&h);
    let floor = match &verdict {
        GrowthVerdict::Exponential { lambdas } => {
            Some(lambdas.iter().copied().fold(f64::INFINITY, f64::min))
        }
        GrowthVerdict::Polynomial { .. } => None,
    };
    let rose = FreeSplitting::rose(&phi.system);
    let elements = samples
        .iter()
        .map(|(c, x)| element_growth(phi, *c, x, n_max, &rose, floor))
        .collect::<Result<Vec<_>>>()?;
    let strata = h
        .strata
        .iter()
        .map(|s| StratumSummary {
            lambda: s.lambda(),
            edges: s.train_track.rep.splitting.edges.len(),
        })
        .collect();
    Ok(GrowthReport {
        verdict,
        strata,
        elements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automorphism::FreeGroupSystem;
    use rand::{Rng, SeedableRng};

    fn aut(images: &[&[i32]]) -> Automorphism {
        Automorphism::from_images(images).unwrap().verify().unwrap()
    }

    fn w(v: &[i32]) -> Word {
        Word(v.to_vec())
    }

    const GOLDEN: f64 = 1.618_033_988_749_895;

    #[test]
    fn identity_is_one_polynomial_stratum() {
        let h = build_hierarchy(&aut(&[&[1], &[2]]), &SubgroupSystem::empty()).unwrap();
        assert_eq!(h.strata.len(), 1);
        assert_eq!(
            classify_growth(&h),
            GrowthVerdict::Polynomial { degree_bound: 0 }
        );
    }

    #[test]
    fn golden_is_exponential() {
        let h = build_hierarchy(&aut(&[&[1, 2], &[1]]), &SubgroupSystem::empty()).unwrap();
        assert_eq!(h.strata.len(), 1);
        match classify_growth(&h) {
            GrowthVerdict::Exponential { lambdas } => {
                assert_eq!(lambdas.len(), 1);
                assert!((lambdas[0] - GOLDEN).abs() < 1e-9);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn linear_example_has_two_strata() {
        let phi = aut(&[&[1], &[2, 1]]);
        let h = build_hierarchy(&phi, &SubgroupSystem::empty()).unwrap();
        assert_eq!(
            classify_growth(&h),
            GrowthVerdict::Polynomial { degree_bound: 1 }
        );
        // direct iteration: φⁿ(b) = b aⁿ
        let mut x = w(&[2]);
        for n in 0..=64 {
            assert_eq!(x.len(), n + 1);
            x = phi.on(&x);
        }
    }

    #[test]
    fn three_step_unipotent_descends() {
        let h = build_hierarchy(&aut(&[&[1], &[2, 1], &[3, 2]]), &SubgroupSystem::empty()).unwrap();
        assert!(h.strata.len() >= 2);
        assert!(h.strata.iter().all(|s| !s.is_exponential()));
        assert!(
            matches!(classify_growth(&h), GrowthVerdict::Polynomial { degree_bound } if degree_bound >= 1)
        );
    }

    #[test]
    fn relative_hierarchy_stops_at_the_system() {
        let phi = Automorphism::new(
            FreeGroupSystem::single(3),
            vec![0],
            vec![vec![w(&[1, 2]), w(&[1]), w(&[3])]],
        )
        .unwrap()
        .verify()
        .unwrap();
        let rel = SubgroupSystem::new(vec![(0, vec![w(&[3])])]).unwrap();
        let h = build_hierarchy(&phi, &rel).unwrap();
        assert_eq!(h.strata.len(), 1);
        assert!((h.strata[0].lambda() - GOLDEN).abs() < 1e-9);
        assert_eq!(h.strata[0].vertices.len(), 1);
        // c is elliptic rel the system; a is not
        assert!(elliptic_in_limit(&h, 0, &w(&[3])).unwrap());
        assert!(!elliptic_in_limit(&h, 0, &w(&[1])).unwrap());
    }

    #[test]
    fn fibonacci_lengths() {
        let phi = aut(&[&[1, 2], &[1]]);
        let rose = FreeSplitting::rose(&phi.system);
        let g = element_growth(&phi, 0, &w(&[1]), 20, &rose, Some(GOLDEN)).unwrap();
        // oracle: |φⁿ(a)| = F(n+2) with F(1) = F(2) = 1
        let (mut f0, mut f1) = (1usize, 1usize);
        for &l in &g.lengths {
            assert_eq!(l, f1);
            (f0, f1) = (f1, f0 + f1);
        }
        let r = g.lengths[17] as f64 / g.lengths[16] as f64;
        assert!((r - GOLDEN).abs() < 0.01);
        assert!(
            matches!(g.classification, GrowthClass::Exponential { rate } if (rate - GOLDEN).abs() < 0.01)
        );
    }

    #[test]
    fn linear_lengths_and_subexponential_estimates() {
        let phi = aut(&[&[1], &[2, 1]]);
        let rose = FreeSplitting::rose(&phi.system);
        let g = element_growth(&phi, 0, &w(&[2]), 64, &rose, None).unwrap();
        assert_eq!(g.lengths, (1..=65).collect::<Vec<_>>());
        assert_eq!(
            g.classification,
            GrowthClass::Polynomial { degree: Some(1) }
        );
        assert!(g.estimate() <= 1.05);
        let e = element_growth(&phi, 0, &Word::empty(), 10, &rose, None).unwrap();
        assert!(e.lengths.iter().all(|&l| l == 0));
        assert_eq!(
            e.classification,
            GrowthClass::Polynomial { degree: Some(0) }
        );
    }

    #[test]
    fn quadratic_lengths_fit() {
        let phi = aut(&[&[1], &[2, 1], &[3, 2]]);
        let rose = FreeSplitting::rose(&phi.system);
        let g = element_growth(&phi, 0, &w(&[3]), 40, &rose, None).unwrap();
        // oracle: φⁿ(c) = c b (ba) (ba²) ... has length 1 + n + n(n−1)/2
        for (n, &l) in g.lengths.iter().enumerate() {
            assert_eq!(l, 1 + n + n * (n.max(1) - 1) / 2);
        }
        assert_eq!(
            g.classification,
            GrowthClass::Polynomial { degree: Some(2) }
        );
    }

    #[test]
    fn short_runs_are_inconclusive() {
        let phi = aut(&[&[1, 2], &[1]]);
        let rose = FreeSplitting::rose(&phi.system);
        let g = element_growth(&phi, 0, &w(&[1]), 4, &rose, None).unwrap();
        assert_eq!(g.classification, GrowthClass::Inconclusive);
    }

    /// Limit length on the rose computed from words alone: eigenvector weights
    /// of letter counts of cyclically reduced iterates, in Stolz–Cesàro form.
    fn word_limit_length(phi: &Automorphism, nu: &[f64], lambda: f64, x: &Word, n: usize) -> f64 {
        let len = |y: &Word| {
            y.0.iter()
                .map(|&l| nu[l.unsigned_abs() as usize - 1])
                .sum::<f64>()
        };
        let mut y = x.cyclic_reduce().0;
        let mut prev = len(&y);
        let mut v = prev;
        for k in 1..=n {
            y = phi.on(&y).cyclic_reduce().0;
            let l = len(&y);
            v = (l - prev) / (lambda.powi(k as i32) - lambda.powi(k as i32 - 1));
            prev = l;
        }
        v
    }

    fn golden_oracle() -> (Automorphism, LimitLengthOracle) {
        let phi = aut(&[&[1, 2], &[1]]);
        let (tt, _) = train_track_rel(&TopRep::on_rose(&phi)).unwrap();
        assert!(tt.moves.is_empty(), "golden rose is already a train track");
        (phi, LimitLengthOracle::new(tt, LIMIT_TOL).unwrap())
    }

    #[test]
    fn limit_length_matches_word_oracle() {
        let (phi, o) = golden_oracle();
        let nu = o.train_track.pf.nu.clone();
        for x in [
            w(&[1]),
            w(&[2]),
            w(&[1, -2]),
            w(&[1, 1, -2, 1]),
            w(&[2, -1, -1]),
        ] {
            let v = o.limit_length(0, &x).unwrap();
            let oracle = word_limit_length(&phi, &nu, o.lambda(), &x, 20);
            assert!((v - oracle).abs() < 1e-6, "{x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn legal_axis_is_stable_at_zero() {
        let (_, o) = golden_oracle();
        let (comp, x0, dom) = o.train_track.find_legal_axis().unwrap();
        let v = o.limit_length(comp, &x0).unwrap();
        assert!((v - o.train_track.eigen_length(&dom)).abs() < 1e-9);
        let ls = o.lengths(comp, &x0, 4).unwrap();
        for k in 1..ls.len() {
            assert!((ls[k] - o.lambda() * ls[k - 1]).abs() < 1e-9 * ls[k]);
        }
    }

    #[test]
    fn periodic_commutator_has_zero_limit_length() {
        let (_, o) = golden_oracle();
        assert!(o.limit_length(0, &w(&[1, 2, -1, -2])).unwrap() < ELLIPTIC_TOL);
        assert_eq!(o.limit_length(0, &Word::empty()).unwrap(), 0.0);
    }

    #[test]
    fn oracle_rejects_simplicial_tracks() {
        let (tt, _) = train_track_rel(&TopRep::on_rose(&aut(&[&[1], &[2]]))).unwrap();
        assert!(LimitLengthOracle::new(tt, LIMIT_TOL).is_err());
    }

    #[test]
    fn concurrent_limit_lengths_agree() {
        let (_, o) = golden_oracle();
        let xs: Vec<Word> = enumerate_words(2, 3)
            .into_iter()
            .filter(|x| !x.is_empty())
            .collect();
        let serial: Vec<f64> = xs.iter().map(|x| o.limit_length(0, x).unwrap()).collect();
        let fresh = golden_oracle().1;
        let parallel: Vec<f64> = std::thread::scope(|s| {
            let hs: Vec<_> = xs
                .iter()
                .map(|x| s.spawn(|| fresh.limit_length(0, x).unwrap()))
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(serial, parallel);
    }

    #[test]
    fn elliptic_examples() {
        let golden = build_hierarchy(&aut(&[&[1, 2], &[1]]), &SubgroupSystem::empty()).unwrap();
        assert!(elliptic_in_limit(&golden, 0, &Word::empty()).unwrap());
        assert!(!elliptic_in_limit(&golden, 0, &w(&[1])).unwrap());
        assert!(elliptic_in_limit(&golden, 0, &w(&[1, 2, -1, -2])).unwrap());
        let lin = build_hierarchy(&aut(&[&[1], &[2, 1]]), &SubgroupSystem::empty()).unwrap();
        for x in enumerate_words(2, 3) {
            assert!(elliptic_in_limit(&lin, 0, &x).unwrap());
        }
    }

    #[test]
    fn loxodromic_iff_exponential_on_short_words() {
        for images in [
            &[&[1, 2][..], &[1][..]][..],
            &[&[1][..], &[2, 1][..]][..],
            &[&[1, 2][..], &[1, 3][..], &[1][..]][..],
        ] {
            let phi = aut(images);
            let h = build_hierarchy(&phi, &SubgroupSystem::empty()).unwrap();
            let rose = FreeSplitting::rose(&phi.system);
            let floor = match classify_growth(&h) {
                GrowthVerdict::Exponential { lambdas } => Some(lambdas[0]),
                _ => None,
            };
            for x in enumerate_words(phi.rank(), 4) {
                if x.is_empty() || !x.is_cyclically_reduced() {
                    continue;
                }
                let ell = elliptic_in_limit(&h, 0, &x).unwrap();
                let g = element_growth(&phi, 0, &x, 40, &rose, floor).unwrap();
                let exp = matches!(g.classification, GrowthClass::Exponential { .. });
                assert_eq!(!ell, exp, "{images:?} {x}: {:?}", g.classification);
            }
        }
    }

    #[test]
    fn verdict_matches_generators() {
        for (images, poly) in [
            (&[&[1][..], &[2][..]][..], true),
            (&[&[1][..], &[2, 1][..]][..], true),
            (&[&[1, 2][..], &[1][..]][..], false),
            (&[&[1, 2][..], &[1, 3][..], &[1][..]][..], false),
        ] {
            let phi = aut(images);
            let samples: Vec<(usize, Word)> =
                (1..=phi.rank() as i32).map(|k| (0, Word::gen(k))).collect();
            let r = growth_report(&phi, &SubgroupSystem::empty(), &samples, 40).unwrap();
            assert_eq!(matches!(r.verdict, GrowthVerdict::Polynomial { .. }), poly);
            for e in &r.elements {
                assert_eq!(
                    matches!(e.classification, GrowthClass::Polynomial { .. }),
                    poly,
                    "{images:?} {}",
                    e.word
                );
            }
        }
    }

    #[test]
    fn atoroidal_examples() {
        let id = aut(&[&[1], &[2]]);
        assert_eq!(
            is_atoroidal(&id, 8, 4, None).unwrap(),
            AtoroidalVerdict::NotAtoroidal {
                component: 0,
                witness: w(&[1]),
                period: 1
            }
        );
        let lin = aut(&[&[1], &[2, 1]]);
        assert!(
            matches!(is_atoroidal(&lin, 8, 4, None).unwrap(), AtoroidalVerdict::NotAtoroidal { witness, period: 1, .. } if witness == w(&[1]))
        );
        let golden = aut(&[&[1, 2], &[1]]);
        match is_atoroidal(&golden, 8, 4, None).unwrap() {
            AtoroidalVerdict::NotAtoroidal {
                witness, period, ..
            } => {
                let c = w(&[1, 2, -1, -2]);
                assert!(witness.is_conjugate(&c) || witness.is_conjugate(&c.inverse()));
                assert!(period <= 2);
            }
            v => panic!("{v:?}"),
        }
        assert!(periodic_period(&golden, 0, &w(&[1, 2, -1, -2]), 4).is_some());
        assert_eq!(periodic_period(&golden, 0, &w(&[1]), 4), None);
    }

    #[test]
    fn cyclic_form_peels_conjugators() {
        let phi = aut(&[&[1], &[2, 1]]);
        let h = build_hierarchy(&phi, &SubgroupSystem::empty()).unwrap();
        let g = &h.strata[0].train_track.rep.splitting;
        let m = g.marking().unwrap();
        // a conjugate of a vertex-group element is elliptic
        let x = w(&[2, 1, -2]);
        assert_eq!(g.translation_length(&m, 0, &x), 0);
        assert!(
            matches!(cyclic_form(g, &g.loop_path(&m, 0, &x)), CyclicForm::Elliptic { ref elem, .. } if !elem.is_empty())
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(20))]
        #[test]
        fn golden_limit_length_is_homogeneous(seed in 0u64..10_000) {
            let (phi, o) = golden_oracle();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=6);
            let x = Word::from_letters((0..n).map(|_| if rng.gen() { 1 } else { 2 } * if rng.gen() { 1 } else { -1 }));
            let v = o.limit_length(0, &x).unwrap();
            let v1 = o.limit_length(0, &phi.on(&x)).unwrap();
            proptest::prop_assert!((v1 - o.lambda() * v).abs() < 1e-6);
            let u = Word::from_letters([2, 1]);
            let vc = o.limit_length(0, &x.conj(&u)).unwrap();
            proptest::prop_assert!((vc - v).abs() < 1e-6);
            proptest::prop_assert!(v >= 0.0);
        }
    }
}
