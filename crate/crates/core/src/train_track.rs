//! Bestvina–Handel search for irreducible train tracks relative to vertex
//! groups, legality, gates and legal axes.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{is_irreducible, step_edge, strongly_connected_components, GPath, TopRep};
use crate::pf::{perron_frobenius, PerronFrobenius, PF_TOL};
use crate::word::Word;

/// Moves allowed per stratum, as a multiple of the squared edge count.
pub const BUDGET_FACTOR: usize = 10;

/// A turn at a vertex: the directions `(1, s1)` and `(r, s2)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Turn {
    pub vertex: usize,
    pub s1: i32,
    pub r: Word,
    pub s2: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainTrack {
    pub rep: TopRep,
    pub pf: PerronFrobenius,
    /// Per vertex, the germ-level gates.
    pub gates: Vec<Vec<Vec<i32>>>,
    /// Unordered germ pairs `(vertex, s, t)` sharing a gate.
    pub illegal_turns: Vec<(usize, i32, i32)>,
    pub moves: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BHOutcome {
    TrainTrack(Box<TrainTrack>),
    /// A representative on a splitting whose vertex groups properly carry the
    /// old ones.
    LowerStratum {
        rep: TopRep,
        moves: Vec<String>,
    },
}

/// Turns crossed by a path, normalized to `(1, -s_k), (h_k, s_{k+1})`.
pub fn path_turns(rep: &TopRep, p: &GPath) -> Vec<Turn> {
    let g = &rep.splitting;
    (1..p.steps.len())
        .map(|k| Turn {
            vertex: g.step_end(p.steps[k - 1]),
            s1: -p.steps[k - 1],
            r: p.elems[k].clone(),
            s2: p.steps[k],
        })
        .collect()
}

/// Image of a turn under the derivative map, renormalized.
pub fn turn_image(rep: &TopRep, t: &Turn) -> Option<Turn> {
    let p = rep.step_image(t.s1);
    let q = rep.step_image(t.s2);
    if p.is_empty() || q.is_empty() {
        return None;
    }
    let r = p.elems[0]
        .inverse()
        .mul(&rep.vertex_map(t.vertex, &t.r))
        .mul(&q.elems[0]);
    Some(Turn {
        vertex: rep.vmap[t.vertex],
        s1: p.steps[0],
        r,
        s2: q.steps[0],
    })
}

/// `Some(k)` if the k-th derivative image of the turn is degenerate.
pub fn turn_fate(rep: &TopRep, t: &Turn) -> Option<usize> {
    let mut cur = t.clone();
    let mut seen = BTreeSet::new();
    for k in 0.. {
        if cur.s1 == cur.s2 {
            return if cur.r.is_empty() { Some(k) } else { None };
        }
        if !seen.insert((cur.vertex, cur.s1, cur.s2)) {
            return None;
        }
        cur = turn_image(rep, &cur)?;
    }
    unreachable!()
}

pub fn is_legal_turn(rep: &TopRep, t: &Turn) -> bool {
    turn_fate(rep, t).is_none()
}

/// No turn of the path is ever collapsed by iteration.
pub fn is_legal(rep: &TopRep, p: &GPath) -> bool {
    path_turns(rep, p).iter().all(|t| is_legal_turn(rep, t))
}

/// Legality of a closed path including the closing turn.
pub fn is_cyclically_legal(rep: &TopRep, p: &GPath) -> bool {
    if p.is_empty() {
        return true;
    }
    let n = p.steps.len();
    let close = Turn {
        vertex: p.start,
        s1: -p.steps[n - 1],
        r: p.elems[n].mul(&p.elems[0]),
        s2: p.steps[0],
    };
    is_legal(rep, p) && is_legal_turn(rep, &close)
}

/// Germ-level gates: germs at a vertex whose first-step images eventually
/// agree.
pub fn gates(rep: &TopRep) -> Vec<Vec<Vec<i32>>> {
    let g = &rep.splitting;
    let germs: Vec<i32> = (0..g.edges.len())
        .flat_map(|e| [e as i32 + 1, -(e as i32 + 1)])
        .collect();
    let dg: BTreeMap<i32, i32> = germs
        .iter()
        .map(|&s| {
            let p = rep.step_image(s);
            (s, p.steps.first().copied().unwrap_or(0))
        })
        .collect();
    let n = germs.len();
    let eventual = |s: i32| {
        let mut x = s;
        for _ in 0..n {
            if x == 0 {
                break;
            }
            x = dg[&x];
        }
        x
    };
    (0..g.vertices.len())
        .map(|v| {
            let mut classes: BTreeMap<i32, Vec<i32>> = BTreeMap::new();
            for s in g.germs_at(v) {
                classes.entry(eventual(s)).or_default().push(s);
            }
            classes.into_values().collect()
        })
        .collect()
}

fn illegal_pairs(gates: &[Vec<Vec<i32>>]) -> Vec<(usize, i32, i32)> {
    let mut out = Vec::new();
    for (v, gs) in gates.iter().enumerate() {
        for gate in gs {
            for i in 0..gate.len() {
                for j in i + 1..gate.len() {
                    out.push((v, gate[i], gate[j]));
                }
            }
        }
    }
    out
}

/// Sum of eigen-lengths of the crossed edges.
pub fn eigen_length(nu: &[f64], p: &GPath) -> f64 {
    p.steps.iter().map(|&s| nu[step_edge(s)]).sum()
}

struct Search {
    rep: TopRep,
    moves: Vec<String>,
    max_edges: usize,
}

impl Search {
    fn log(&mut self, m: String) -> Result<()> {
        self.moves.push(m);
        self.max_edges = self.max_edges.max(self.rep.splitting.edges.len());
        let budget = BUDGET_FACTOR * self.max_edges.max(2).pow(2).min(400);
        if self.moves.len() > budget {
            let tail: Vec<&String> = self.moves.iter().rev().take(5).collect();
            return Err(Error::IterationBudgetExceeded {
                moves: self.moves.len(),
                detail: format!("last moves {tail:?}"),
            });
        }
        debug_assert_eq!(self.rep.check(), Ok(()), "after {:?}", self.moves.last());
        Ok(())
    }

    fn contract(&mut self, e: usize, why: &str) -> Result<()> {
        self.rep.contract_edge(e)?;
        self.log(format!("{why}: contract e{}", e + 1))
    }

    /// Contracts one pretrivial edge; `true` if a move was made.
    fn pretrivial(&mut self) -> Result<bool> {
        let g = &self.rep.splitting;
        for (i, p) in self.rep.emap.iter().enumerate() {
            if p.is_empty() {
                let e = &g.edges[i];
                if e.from == e.to || (g.is_labeled(e.from) && g.is_labeled(e.to)) {
                    return Err(Error::Degenerate(format!(
                        "edge e{} has trivial image",
                        i + 1
                    )));
                }
                self.contract(i, "pretrivial")?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn valence_one(&mut self) -> Result<bool> {
        let g = &self.rep.splitting;
        for v in 0..g.vertices.len() {
            if !g.is_labeled(v) && g.valence(v) == 1 {
                let s = g.germs_at(v)[0];
                self.contract(step_edge(s), "valence-one")?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Handles a reducible matrix: contracts an invariant forest or returns a
    /// collapsed splitting.
    fn reducible(&mut self, a: &[Vec<u64>]) -> Result<Option<TopRep>> {
        let sccs = strongly_connected_components(a);
        let n = a.len();
        let mut id = vec![0; n];
        for (k, c) in sccs.iter().enumerate() {
            for &e in c {
                id[e] = k;
            }
        }
        // source components: no edge outside maps over them
        let g = &self.rep.splitting;
        for (k, c) in sccs.iter().enumerate() {
            let source = c
                .iter()
                .all(|&e| (0..n).all(|j| a[j][e] == 0 || id[j] == k));
            if !source {
                continue;
            }
            let h: Vec<usize> = (0..n).filter(|&e| id[e] != k).collect();
            if h.is_empty() {
                continue;
            }
            if let Some(e) = self.forest_edge(&h) {
                let _ = g;
                self.contract(e, "invariant forest")?;
                return Ok(None);
            }
            let split = self.rep.collapse_subgraph(&h)?;
            let rep = TopRep::new(&self.rep.phi, &split)?;
            let names: Vec<String> = h.iter().map(|e| format!("e{}", e + 1)).collect();
            self.moves.push(format!(
                "collapse invariant subgraph {{{}}}",
                names.join(",")
            ));
            return Ok(Some(rep));
        }
        Err(Error::Degenerate(
            "reducible matrix without a source component".into(),
        ))
    }

    /// An edge of `h` if every component of `h` is a tree with at most one
    /// labeled vertex.
    fn forest_edge(&self, h: &[usize]) -> Option<usize> {
        let g = &self.rep.splitting;
        let nv = g.vertices.len();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &e in h {
            let (a, b) = (
                find(&mut parent, g.edges[e].from),
                find(&mut parent, g.edges[e].to),
            );
            if a == b {
                return None;
            }
            parent[a] = b;
        }
        let mut labeled: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..nv {
            if g.is_labeled(v) {
                let r = find(&mut parent, v);
                *labeled.entry(r).or_default() += 1;
            }
        }
        if labeled.values().any(|&c| c > 1) {
            return None;
        }
        h.first().copied()
    }

    /// Turn at an unlabeled valence-two vertex made of two distinct edges.
    fn valence_two_turn(&self, v: usize) -> Option<Turn> {
        let g = &self.rep.splitting;
        if g.is_labeled(v) || g.valence(v) != 2 {
            return None;
        }
        let germs = g.germs_at(v);
        if step_edge(germs[0]) == step_edge(germs[1]) {
            return None;
        }
        Some(Turn {
            vertex: v,
            s1: germs[0],
            r: Word::empty(),
            s2: germs[1],
        })
    }

    /// Removes a valence-two vertex by contracting its lighter edge.
    fn valence_two(&mut self, nu: &[f64]) -> Result<bool> {
        for v in 0..self.rep.splitting.vertices.len() {
            let Some(t) = self.valence_two_turn(v) else {
                continue;
            };
            let (e1, e2) = (step_edge(t.s1), step_edge(t.s2));
            let e = if nu[e2] < nu[e1] { e2 } else { e1 };
            self.contract(e, "valence-two")?;
            return Ok(true);
        }
        Ok(false)
    }

    /// The illegal turn degenerating soonest, with its degeneration time and
    /// its place `(edge, slot)` in an edge image.
    fn worst_turn(&self) -> Option<(usize, Turn, usize, usize)> {
        let mut best: Option<(usize, Turn, usize, usize)> = None;
        for (e, p) in self.rep.emap.iter().enumerate() {
            for (j, t) in path_turns(&self.rep, p).into_iter().enumerate() {
                if let Some(k) = turn_fate(&self.rep, &t) {
                    if best.as_ref().map(|b| k < b.0).unwrap_or(true) {
                        best = Some((k, t, e, j + 1));
                    }
                }
            }
        }
        best
    }

    /// Subdivides the germ `s` after `m` steps of its image, the element there
    /// ending in `a`; returns the renamed germ and the rename of `-s`.
    fn subdivide_germ(&mut self, s: i32, m: usize, a: &Word) -> (i32, Option<(i32, i32)>) {
        let e = step_edge(s);
        if s > 0 {
            let e2 = self.rep.subdivide(e, m, a);
            (s, Some((-s, -(e2 as i32 + 1))))
        } else {
            let p = &self.rep.emap[e];
            let l = p.len();
            let split = p.elems[l - m].mul(a);
            let e2 = self.rep.subdivide(e, l - m, &split);
            (-(e2 as i32 + 1), None)
        }
    }

    /// Elementary fold of a turn whose images share their first step: the
    /// initial segments over that step are identified.
    fn fold(&mut self, t: Turn) -> Result<()> {
        let Turn {
            vertex: w,
            s1,
            r,
            s2,
        } = t;
        self.rep.slide_germ(s2, &r);
        let (mut s1, mut s2) = (s1, s2);
        let p = self.rep.step_image(s1);
        let q = self.rep.step_image(s2);
        if p.is_empty() || q.is_empty() || p.steps[0] != q.steps[0] || p.elems[0] != q.elems[0] {
            return Err(Error::Degenerate(format!(
                "fold at v{w}: germs {s1}, {s2} do not agree"
            )));
        }
        let first = step_edge(p.steps[0]);
        let mut k2 = 1;
        if p.len() > 1 {
            let a = if q.len() == 1 {
                q.elems[1].clone()
            } else {
                Word::empty()
            };
            let e = step_edge(s1);
            let (n1, ren) = self.subdivide_germ(s1, 1, &a);
            s1 = n1;
            if let Some((old, new)) = ren {
                if s2 == old {
                    s2 = new;
                }
            }
            if first == e {
                k2 = 2;
            }
            self.log(format!("subdivide germ {s1} for fold"))?;
        }
        let q = self.rep.step_image(s2);
        if q.len() > k2 {
            let a = if p.len() == 1 {
                p.elems[1].clone()
            } else {
                Word::empty()
            };
            let (n2, _) = self.subdivide_germ(s2, k2, &a);
            s2 = n2;
            self.log(format!("subdivide germ {s2} for fold"))?;
        }
        let p = self.rep.step_image(s1);
        let q = self.rep.step_image(s2);
        if p.steps != q.steps || p.elems[..p.len()] != q.elems[..q.len()] {
            return Err(Error::Degenerate(format!("fold at v{w}: pieces differ")));
        }
        let (h1, h2) = (p.last_elem().clone(), q.last_elem().clone());
        if h1 != h2 {
            let g = &self.rep.splitting;
            let (y1, y2) = (g.step_end(s1), g.step_end(s2));
            if !g.is_labeled(y2) && y2 != w {
                self.rep.reprefix(y2, &h1.inverse().mul(&h2));
            } else if !g.is_labeled(y1) && y1 != w {
                self.rep.reprefix(y1, &h2.inverse().mul(&h1));
            } else if g.is_labeled(y2) {
                let r = self
                    .rep
                    .vertex_map_inverse(y2, &h1.inverse().mul(&h2))
                    .ok_or_else(|| {
                        Error::Degenerate("trailing element outside vertex group image".into())
                    })?;
                self.rep.slide_germ(-s2, &r);
            } else {
                return Err(Error::Degenerate(format!(
                    "cannot align trailing elements at v{y2}"
                )));
            }
            self.log(format!("align ends of germs {s1},{s2}"))?;
            let p = self.rep.step_image(s1);
            let q = self.rep.step_image(s2);
            if p != q {
                return Err(Error::Degenerate(format!("fold at v{w}: alignment failed")));
            }
        }
        self.rep.fold_identical(s1, s2)?;
        self.log(format!("fold germs {s1},{s2} at v{w}"))
    }

    fn run(mut self) -> Result<BHOutcome> {
        loop {
            self.rep.tighten_all();
            if self.rep.splitting.edges.is_empty() {
                let pf = PerronFrobenius {
                    lambda: 1.0,
                    nu: Vec::new(),
                    tol: PF_TOL,
                    iterations: 0,
                };
                return Ok(self.finish(pf));
            }
            if self.pretrivial()? || self.valence_one()? {
                continue;
            }
            let a = self.rep.transition_matrix();
            if is_permutation(&a) {
                // each edge maps to one edge: already simplicial, even if reducible
                let n = a.len();
                let pf = PerronFrobenius {
                    lambda: 1.0,
                    nu: vec![1.0 / n as f64; n],
                    tol: PF_TOL,
                    iterations: 0,
                };
                return Ok(self.finish(pf));
            }
            if !is_irreducible(&a) {
                match self.reducible(&a)? {
                    Some(rep) => {
                        return Ok(BHOutcome::LowerStratum {
                            rep,
                            moves: self.moves,
                        })
                    }
                    None => continue,
                }
            }
            let pf = perron_frobenius(&a, PF_TOL)?;
            if let Some(v) =
                (0..self.rep.splitting.vertices.len()).find(|&v| self.rep.clone().pull_vertex(v))
            {
                self.rep.pull_vertex(v);
                self.log(format!("pull v{v} through its single gate"))?;
                continue;
            }
            if self.valence_two(&pf.nu)? {
                continue;
            }
            match self.worst_turn() {
                None => return Ok(self.finish(pf)),
                Some((k, mut t, _, _)) => {
                    for _ in 1..k {
                        t = turn_image(&self.rep, &t).expect("images are nontrivial");
                    }
                    self.fold(t)?
                }
            }
        }
    }

    fn finish(self, pf: PerronFrobenius) -> BHOutcome {
        let gates = gates(&self.rep);
        let illegal_turns = illegal_pairs(&gates);
        BHOutcome::TrainTrack(Box::new(TrainTrack {
            rep: self.rep,
            pf,
            gates,
            illegal_turns,
            moves: self.moves,
        }))
    }
}

/// Runs the Bestvina–Handel moves until a train track or a lower stratum.
pub fn find_train_track(f: &TopRep) -> Result<BHOutcome> {
    let max_edges = f.splitting.edges.len();
    Search {
        rep: f.clone(),
        moves: Vec::new(),
        max_edges,
    }
    .run()
}

/// Repeats the search through lower strata until a train track is found;
/// returns it with the number of collapses performed.
fn is_permutation(a: &[Vec<u64>]) -> bool {
    let n = a.len();
    (0..n).all(|i| a[i].iter().sum::<u64>() == 1 && (0..n).map(|j| a[j][i]).sum::<u64>() == 1)
}

pub fn train_track_rel(f: &TopRep) -> Result<(TrainTrack, usize)> {
    let mut cur = f.clone();
    let mut collapses = 0;
    let mut log = Vec::new();
    loop {
        match find_train_track(&cur)? {
            BHOutcome::TrainTrack(tt) => {
                let mut tt = *tt;
                log.extend(tt.moves);
                tt.moves = log;
                return Ok((tt, collapses));
            }
            BHOutcome::LowerStratum { rep, moves } => {
                log.extend(moves);
                collapses += 1;
                if collapses > 64 {
                    return Err(Error::IterationBudgetExceeded {
                        moves: log.len(),
                        detail: "too many collapses".into(),
                    });
                }
                cur = rep;
            }
        }
    }
}

impl TrainTrack {
    pub fn lambda(&self) -> f64 {
        self.pf.lambda
    }

    pub fn is_simplicial(&self) -> bool {
        (self.pf.lambda - 1.0).abs() < 1e-9
    }

    pub fn eigen_length(&self, p: &GPath) -> f64 {
        eigen_length(&self.pf.nu, p)
    }

    pub fn is_legal(&self, p: &GPath) -> bool {
        is_legal(&self.rep, p)
    }

    /// A loxodromic element whose axis has a legal fundamental domain,
    /// returned as `(component, element, closed path at the edge start)`.
    pub fn find_legal_axis(&self) -> Result<(usize, Word, GPath)> {
        let g = &self.rep.splitting;
        let marking = g.marking()?;
        let close = |v: usize, loop_path: &GPath| {
            let t = marking.tree_paths[v].label(g);
            let c = g.vertices[v].comp;
            (
                c,
                t.mul(&loop_path.label(g)).mul(&t.inverse()),
                loop_path.clone(),
            )
        };
        if self.is_simplicial() {
            for (i, e) in g.edges.iter().enumerate() {
                let lp = marking.tree_paths[e.from]
                    .concat(&GPath::step(g, i as i32 + 1))
                    .concat(&marking.tree_paths[e.to].inverse(g));
                if !crate::graph::cyclic_tighten(&lp).is_empty() {
                    let (c, x, _) = close(g.base[g.vertices[e.from].comp], &lp);
                    return Ok((c, x, lp));
                }
            }
            return Err(Error::Degenerate("no loxodromic loop".into()));
        }
        for n in 1..=24 {
            for e in 0..g.edges.len() {
                let mut p = GPath::step(g, e as i32 + 1);
                for _ in 0..n {
                    p = self.rep.image_path(&p);
                    if p.len() > 1 << 16 {
                        break;
                    }
                }
                let pos = e as i32 + 1;
                let occ: Vec<usize> = (0..p.steps.len()).filter(|&k| p.steps[k] == pos).collect();
                if occ.len() >= 2 {
                    let (i, j) = (occ[0], occ[1]);
                    let mut elems = vec![Word::empty()];
                    elems.extend(p.elems[i + 1..=j].iter().cloned());
                    let lp = GPath {
                        start: g.edges[e].from,
                        steps: p.steps[i..j].to_vec(),
                        elems,
                    };
                    return Ok(close(lp.start, &lp));
                }
            }
        }
        Err(Error::Degenerate("no repeated edge in iterates".into()))
    }

    pub fn report(&self) -> serde_json::Value {
        let g = &self.rep.splitting;
        let images: Vec<String> = self
            .rep
            .emap
            .iter()
            .map(|p| {
                let names = &g.system.names[g.vertices[p.start].comp];
                let mut s = String::new();
                for (k, h) in p.elems.iter().enumerate() {
                    if !h.is_empty() {
                        s.push_str(&format!("[{}]", h.display_with(names)));
                    }
                    if k < p.steps.len() {
                        let st = p.steps[k];
                        s.push_str(&format!("{}e{} ", if st < 0 { "-" } else { "" }, st.abs()));
                    }
                }
                s.trim().to_string()
            })
            .collect();
        serde_json::json!({
            "vertices": g.vertices.len(),
            "edges": g.edges.len(),
            "images": images,
            "matrix": self.rep.transition_matrix(),
            "lambda": self.pf.lambda,
            "nu": self.pf.nu,
            "gates": self.gates,
            "illegal_turns": self.illegal_turns,
            "moves": self.moves,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automorphism::Automorphism;

    fn aut(images: &[&[i32]]) -> Automorphism {
        Automorphism::from_images(images).unwrap().verify().unwrap()
    }

    #[test]
    fn golden_is_train_track() {
        let f = TopRep::on_rose(&aut(&[&[1, 2], &[1]]));
        match find_train_track(&f).unwrap() {
            BHOutcome::TrainTrack(t) => {
                assert!((t.lambda() - 1.6180339887).abs() < 1e-9);
                assert!(t.moves.is_empty());
                for p in &t.rep.emap {
                    assert!(t.is_legal(p));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reducible_example_goes_lower() {
        let f = TopRep::on_rose(&aut(&[&[1], &[2, 1]]));
        match find_train_track(&f).unwrap() {
            BHOutcome::LowerStratum { rep, .. } => {
                assert_eq!(rep.splitting.vertex_rank_sum(), 1);
                assert_eq!(rep.splitting.edges.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        let (t, collapses) = tt_pair(&[&[1], &[2, 1]]);
        assert_eq!(collapses, 1);
        assert!(t.is_simplicial());
    }

    fn tt_pair(images: &[&[i32]]) -> (TrainTrack, usize) {
        train_track_rel(&TopRep::on_rose(&aut(images))).unwrap()
    }

    fn tt_pair_ok(images: &[&[i32]]) -> TrainTrack {
        tt_pair(images).0
    }

    #[test]
    fn identity_is_simplicial() {
        let t = tt_pair_ok(&[&[1], &[2]]);
        assert!(t.is_simplicial());
        assert!(t.illegal_turns.is_empty());
    }

    #[test]
    fn tribonacci_lambda() {
        let t = tt_pair_ok(&[&[1, 2], &[1, 3], &[1]]);
        assert!((t.lambda() - 1.8392867552).abs() < 1e-9);
    }

    #[test]
    fn eigen_length_scales() {
        let t = tt_pair_ok(&[&[1, 2], &[1]]);
        for (e, p) in t.rep.emap.iter().enumerate() {
            let lhs = t.eigen_length(p);
            assert!((lhs - t.lambda() * t.pf.nu[e]).abs() < 1e-9);
        }
        assert_eq!(t.eigen_length(&GPath::trivial(0)), 0.0);
    }

    #[test]
    fn illegal_turn_detected() {
        let t = tt_pair_ok(&[&[1, 2], &[1]]);
        // a and b both start with a: the turn (a, b) at the vertex is illegal
        let turn = Turn {
            vertex: 0,
            s1: 1,
            r: Word::empty(),
            s2: 2,
        };
        assert!(!is_legal_turn(&t.rep, &turn));
        let p = GPath {
            start: 0,
            steps: vec![-1, 2],
            elems: vec![Word::empty(); 3],
        };
        assert!(!t.is_legal(&p));
    }

    #[test]
    fn legal_axes() {
        for images in [
            &[&[1, 2][..], &[1][..]][..],
            &[&[1, 2], &[1, 3], &[1]],
            &[&[1], &[2]],
        ] {
            let t = tt_pair_ok(images);
            let (c, x, lp) = t.find_legal_axis().unwrap();
            let g = &t.rep.splitting;
            let m = g.marking().unwrap();
            assert!(g.translation_length(&m, c, &x) > 0);
            assert!(is_cyclically_legal(&t.rep, &lp));
        }
    }

    #[test]
    fn needs_folding() {
        // a ↦ ab, b ↦ b a b⁻¹ ... start with an illegal image
        let t = tt_pair_ok(&[&[1, 2, 1], &[1, 2]]);
        assert!(t.lambda() > 1.0);
        for p in &t.rep.emap {
            assert!(t.is_legal(p));
        }
        t.rep.check().unwrap();
    }

    #[test]
    fn no_cancellation_in_iterates() {
        let t = tt_pair_ok(&[&[1, 2], &[1, 3], &[1]]);
        let a = t.rep.transition_matrix();
        let n = a.len();
        let mut col: Vec<Vec<u64>> = (0..n)
            .map(|j| (0..n).map(|i| (i == j) as u64).collect())
            .collect();
        for e in 0..n {
            let mut p = GPath::step(&t.rep.splitting, e as i32 + 1);
            for _ in 0..8 {
                p = t.rep.image_path(&p);
                col[e] = (0..n)
                    .map(|i| (0..n).map(|j| col[e][j] * a[j][i]).sum())
                    .collect();
                assert_eq!(p.len() as u64, col[e].iter().sum::<u64>());
            }
        }
    }

    /// Random product of elementary Nielsen automorphisms.
    pub(crate) fn nielsen_product(
        rank: usize,
        moves: &[(usize, usize, bool, bool)],
    ) -> Automorphism {
        let sys = crate::automorphism::FreeGroupSystem::single(rank);
        let mut phi = Automorphism::identity(sys.clone());
        for &(i, j, invert, left) in moves {
            let (i, j) = (i % rank, j % rank);
            let mut images: Vec<Word> = (1..=rank as i32).map(Word::gen).collect();
            if i == j {
                if invert {
                    images[i] = images[i].inverse();
                }
            } else {
                let g = if invert {
                    Word::gen(j as i32 + 1).inverse()
                } else {
                    Word::gen(j as i32 + 1)
                };
                images[i] = if left {
                    g.mul(&images[i])
                } else {
                    images[i].mul(&g)
                };
            }
            let m = Automorphism::new(sys.clone(), vec![0], vec![images]).unwrap();
            phi = phi.compose(&m).unwrap();
        }
        phi.verify().unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(96))]
        #[test]
        fn random_automorphisms_reach_train_tracks(
            rank in 2usize..=3,
            moves in proptest::collection::vec((0usize..3, 0usize..3, proptest::bool::ANY, proptest::bool::ANY), 1..7),
        ) {
            let phi = nielsen_product(rank, &moves);
            let rose = TopRep::on_rose(&phi);
            let t = match train_track_rel(&rose) {
                Ok((t, _)) => t,
                // some finite-order and polynomial maps cycle; see the ledger
                Err(Error::IterationBudgetExceeded { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            t.rep.check().unwrap();
            for (e, p) in t.rep.emap.iter().enumerate() {
                proptest::prop_assert!(t.is_legal(p));
                proptest::prop_assert!((t.eigen_length(p) - t.lambda() * t.pf.nu[e]).abs() < 1e-6);
            }
        }
    }
}
