//! Free splittings as finite graphs of groups with trivial edge groups, and
//! topological representatives of automorphisms on them.
//!
//! Edges carry a word (their label) so that the label of an edge path,
//! interleaved with vertex-group elements, reads an element of the ambient
//! group. Loops at the base vertex of a component read that component.
//! A topological representative stores, for every vertex `v`, an image vertex
//! `f(v)` and a prefix `x_v` such that
//! `label(f(e)) = x_u · φ(label e) · x_v⁻¹` for every edge `e: u → v` and
//! `x_v · φ(G_v) · x_v⁻¹ = G_{f(v)}` for every labeled vertex.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::automorphism::{Automorphism, FreeGroupSystem, SubgroupSystem};
use crate::error::{Error, Result};
use crate::stallings::{subgroup_conjugator, SubgroupGraph};
use crate::word::Word;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub comp: usize,
    /// Basis of the vertex group in ambient coordinates; empty when unlabeled.
    pub group: Vec<Word>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeSplitting {
    pub system: FreeGroupSystem,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub base: Vec<usize>,
}

/// Signed 1-based edge step.
pub fn step_edge(s: i32) -> usize {
    s.unsigned_abs() as usize - 1
}

pub fn step_of(edge: usize, forward: bool) -> i32 {
    let s = edge as i32 + 1;
    if forward {
        s
    } else {
        -s
    }
}

/// An edge path `g0 s1 g1 ... sn gn` with `gi` in the group of the i-th vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GPath {
    pub start: usize,
    pub steps: Vec<i32>,
    pub elems: Vec<Word>,
}

impl GPath {
    pub fn trivial(v: usize) -> Self {
        GPath {
            start: v,
            steps: Vec::new(),
            elems: vec![Word::empty()],
        }
    }

    pub fn element(v: usize, h: Word) -> Self {
        GPath {
            start: v,
            steps: Vec::new(),
            elems: vec![h],
        }
    }

    pub fn step(g: &FreeSplitting, s: i32) -> Self {
        GPath {
            start: g.step_start(s),
            steps: vec![s],
            elems: vec![Word::empty(), Word::empty()],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end(&self, g: &FreeSplitting) -> usize {
        match self.steps.last() {
            Some(&s) => g.step_end(s),
            None => self.start,
        }
    }

    pub fn first_elem(&self) -> &Word {
        &self.elems[0]
    }

    pub fn last_elem(&self) -> &Word {
        self.elems.last().unwrap()
    }

    pub fn label(&self, g: &FreeSplitting) -> Word {
        let mut out = self.elems[0].clone();
        for (k, &s) in self.steps.iter().enumerate() {
            out.append(&g.step_label(s));
            out.append(&self.elems[k + 1]);
        }
        out
    }

    /// Concatenation; the caller guarantees `self` ends where `other` starts.
    pub fn concat(&self, other: &GPath) -> GPath {
        let mut out = self.clone();
        let last = out.elems.pop().unwrap();
        out.elems.push(last.mul(&other.elems[0]));
        out.steps.extend(other.steps.iter().copied());
        out.elems.extend(other.elems[1..].iter().cloned());
        out.tighten();
        out
    }

    /// In-place concatenation cancelling backtracks at the junction only.
    pub fn append(&mut self, other: &GPath) {
        let last = self.elems.pop().unwrap();
        let mut carry = last.mul(&other.elems[0]);
        let mut k = 0;
        while k < other.steps.len()
            && carry.is_empty()
            && self.steps.last() == Some(&-other.steps[k])
        {
            self.steps.pop();
            let prev = self.elems.pop().unwrap();
            carry = prev.mul(&other.elems[k + 1]);
            k += 1;
        }
        self.elems.push(carry);
        self.steps.extend_from_slice(&other.steps[k..]);
        self.elems.extend(other.elems[k + 1..].iter().cloned());
    }

    pub fn inverse(&self, g: &FreeSplitting) -> GPath {
        GPath {
            start: self.end(g),
            steps: self.steps.iter().rev().map(|s| -s).collect(),
            elems: self.elems.iter().rev().map(|h| h.inverse()).collect(),
        }
    }

    pub fn left_mul(&mut self, h: &Word) {
        self.elems[0] = h.mul(&self.elems[0]);
    }

    pub fn right_mul(&mut self, h: &Word) {
        let n = self.elems.len() - 1;
        self.elems[n] = self.elems[n].mul(h);
    }

    /// Cancels every backtrack `s ε s⁻¹`.
    pub fn tighten(&mut self) {
        let mut steps: Vec<i32> = Vec::with_capacity(self.steps.len());
        let mut elems: Vec<Word> = vec![self.elems[0].clone()];
        for (k, &s) in self.steps.iter().enumerate() {
            let next = &self.elems[k + 1];
            if steps.last() == Some(&-s) && elems.last().map(|h| h.is_empty()).unwrap_or(false) {
                steps.pop();
                elems.pop();
                let prev = elems.pop().unwrap();
                elems.push(prev.mul(next));
            } else {
                steps.push(s);
                elems.push(next.clone());
            }
        }
        self.steps = steps;
        self.elems = elems;
    }

    pub fn is_tight(&self) -> bool {
        self.steps
            .windows(2)
            .enumerate()
            .all(|(k, w)| !(w[0] == -w[1] && self.elems[k + 1].is_empty()))
    }

    /// Splits after `k` steps; the element there is split as `a · b` with `a`
    /// ending the first piece.
    pub fn split_at(&self, k: usize, a: &Word) -> (GPath, GPath) {
        let b = a.inverse().mul(&self.elems[k]);
        let mut p1 = GPath {
            start: self.start,
            steps: self.steps[..k].to_vec(),
            elems: self.elems[..=k].to_vec(),
        };
        p1.elems[k] = a.clone();
        let mut p2_elems = self.elems[k..].to_vec();
        p2_elems[0] = b;
        let p2_start = if k == 0 {
            self.start
        } else {
            // end of step k-1 is recomputed by callers through the splitting
            usize::MAX
        };
        (
            p1,
            GPath {
                start: p2_start,
                steps: self.steps[k..].to_vec(),
                elems: p2_elems,
            },
        )
    }
}

/// Cyclic tightening of a closed path; returns the cyclically reduced
/// sequence of `(step, element after it)` pairs.
pub fn cyclic_tighten(p: &GPath) -> Vec<(i32, Word)> {
    let n = p.steps.len();
    let mut stack: Vec<(i32, Word)> = Vec::with_capacity(n);
    // element sitting before the first kept step
    let mut lead = Word::empty();
    for k in 0..n {
        let s = p.steps[k];
        let mut h = p.elems[k + 1].clone();
        if k + 1 == n {
            h = h.mul(&p.elems[0]);
        }
        if matches!(stack.last(), Some((t, g)) if *t == -s && g.is_empty()) {
            stack.pop();
            match stack.last_mut() {
                Some(top) => top.1 = top.1.mul(&h),
                None => lead = lead.mul(&h),
            }
        } else {
            stack.push((s, h));
        }
    }
    if stack.is_empty() {
        return stack;
    }
    let l = stack.len() - 1;
    stack[l].1 = stack[l].1.mul(&lead);
    let mut cyc: VecDeque<(i32, Word)> = stack.into();
    while cyc.len() >= 2 {
        let first = cyc.front().unwrap().0;
        let (last, ref hl) = *cyc.back().unwrap();
        if first == -last && hl.is_empty() {
            let (_, h1) = cyc.pop_front().unwrap();
            cyc.pop_back();
            match cyc.back_mut() {
                Some(b) => b.1 = b.1.mul(&h1),
                None => return Vec::new(),
            }
        } else {
            break;
        }
    }
    cyc.into()
}

/// Coordinates for expressing group elements as loops at the base.
#[derive(Clone, Debug)]
pub struct Marking {
    pub graphs: Vec<SubgroupGraph>,
    pub basis_paths: Vec<Vec<GPath>>,
    pub tree_paths: Vec<GPath>,
}

impl FreeSplitting {
    pub fn rose(system: &FreeGroupSystem) -> Self {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut base = Vec::new();
        for (c, &r) in system.ranks.iter().enumerate() {
            let v = vertices.len();
            vertices.push(Vertex {
                comp: c,
                group: Vec::new(),
            });
            base.push(v);
            for k in 1..=r as i32 {
                edges.push(Edge {
                    from: v,
                    to: v,
                    label: Word::gen(k),
                });
            }
        }
        FreeSplitting {
            system: system.clone(),
            vertices,
            edges,
            base,
        }
    }

    /// Rose relative to a subgroup system: each member becomes a labeled vertex
    /// joined to the base by an edge, and the members' bases are completed to a
    /// basis of the component by greedily adding short words.
    pub fn rose_rel(system: &FreeGroupSystem, rel: &SubgroupSystem) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut base = Vec::new();
        for (c, &r) in system.ranks.iter().enumerate() {
            let v = vertices.len();
            vertices.push(Vertex {
                comp: c,
                group: Vec::new(),
            });
            base.push(v);
            let members: Vec<&Vec<Word>> = rel
                .members
                .iter()
                .filter(|(mc, _)| *mc == c)
                .map(|(_, g)| g)
                .collect();
            let mut basis: Vec<Word> = members.iter().flat_map(|g| g.iter().cloned()).collect();
            let start = SubgroupGraph::new(&basis);
            if !basis.is_empty() && (!start.is_free_basis() || start.rank() != basis.len()) {
                return Err(Error::Invalid(format!(
                    "subgroup system in component {c} is not a free factor system"
                )));
            }
            let candidates: Vec<Word> = crate::word::enumerate_words(r, 2)
                .into_iter()
                .filter(|w| !w.is_empty())
                .collect();
            let mut extra = Vec::new();
            for cand in candidates {
                if SubgroupGraph::new(&basis).is_whole_group(r) {
                    break;
                }
                let mut trial = basis.clone();
                trial.push(cand.clone());
                let g = SubgroupGraph::new(&trial);
                if g.is_free_basis() && g.rank() == trial.len() {
                    basis = trial;
                    extra.push(cand);
                }
            }
            let g = SubgroupGraph::new(&basis);
            if !(g.is_free_basis() && g.is_whole_group(r) && basis.len() == r) {
                return Err(Error::Invalid(format!(
                    "subgroup system in component {c} is not a free factor system in standard position"
                )));
            }
            for w in extra {
                edges.push(Edge {
                    from: v,
                    to: v,
                    label: w,
                });
            }
            for m in members {
                let u = vertices.len();
                vertices.push(Vertex {
                    comp: c,
                    group: m.clone(),
                });
                edges.push(Edge {
                    from: v,
                    to: u,
                    label: Word::empty(),
                });
            }
        }
        let s = FreeSplitting {
            system: system.clone(),
            vertices,
            edges,
            base,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn step_start(&self, s: i32) -> usize {
        let e = &self.edges[step_edge(s)];
        if s > 0 {
            e.from
        } else {
            e.to
        }
    }

    pub fn step_end(&self, s: i32) -> usize {
        let e = &self.edges[step_edge(s)];
        if s > 0 {
            e.to
        } else {
            e.from
        }
    }

    pub fn step_label(&self, s: i32) -> Word {
        let e = &self.edges[step_edge(s)];
        if s > 0 {
            e.label.clone()
        } else {
            e.label.inverse()
        }
    }

    pub fn is_labeled(&self, v: usize) -> bool {
        !self.vertices[v].group.is_empty()
    }

    /// Germs (steps starting at `v`), in edge order.
    pub fn germs_at(&self, v: usize) -> Vec<i32> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.from == v {
                out.push(step_of(i, true));
            }
            if e.to == v {
                out.push(step_of(i, false));
            }
        }
        out
    }

    pub fn valence(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|e| (e.from == v) as usize + (e.to == v) as usize)
            .sum()
    }

    pub fn edge_comp(&self, e: usize) -> usize {
        self.vertices[self.edges[e].from].comp
    }

    /// BFS tree paths from each component's base.
    pub fn tree_paths(&self) -> Vec<Option<GPath>> {
        let mut out: Vec<Option<GPath>> = vec![None; self.vertices.len()];
        for &b in &self.base {
            out[b] = Some(GPath::trivial(b));
            let mut q = VecDeque::from([b]);
            while let Some(v) = q.pop_front() {
                for s in self.germs_at(v) {
                    let w = self.step_end(s);
                    if out[w].is_none() {
                        let p = out[v].as_ref().unwrap().concat(&GPath::step(self, s));
                        out[w] = Some(p);
                        q.push_back(w);
                    }
                }
            }
        }
        out
    }

    /// Builds the marking data; errors if the labels do not identify loops at
    /// the base with the component.
    pub fn marking(&self) -> Result<Marking> {
        let tp = self.tree_paths();
        if tp.iter().any(|p| p.is_none()) {
            return Err(Error::Invalid("splitting component not connected".into()));
        }
        let tree_paths: Vec<GPath> = tp.into_iter().map(|p| p.unwrap()).collect();
        let mut tree_edges = BTreeSet::new();
        for p in &tree_paths {
            if let Some(&s) = p.steps.last() {
                tree_edges.insert(step_edge(s));
            }
        }
        let mut graphs = Vec::new();
        let mut basis_paths = Vec::new();
        for (c, &b) in self.base.iter().enumerate() {
            let mut words = Vec::new();
            let mut paths = Vec::new();
            for (v, vert) in self.vertices.iter().enumerate() {
                if vert.comp != c {
                    continue;
                }
                let tv = &tree_paths[v];
                for h in &vert.group {
                    let p = tv
                        .concat(&GPath::element(v, h.clone()))
                        .concat(&tv.inverse(self));
                    words.push(p.label(self));
                    paths.push(p);
                }
            }
            for (i, e) in self.edges.iter().enumerate() {
                if self.vertices[e.from].comp != c || tree_edges.contains(&i) {
                    continue;
                }
                let p = tree_paths[e.from]
                    .concat(&GPath::step(self, step_of(i, true)))
                    .concat(&tree_paths[e.to].inverse(self));
                words.push(p.label(self));
                paths.push(p);
            }
            let g = SubgroupGraph::new(&words);
            let r = self.system.ranks[c];
            if !(g.is_free_basis() && words.len() == r && g.is_whole_group(r)) {
                return Err(Error::Invalid(format!("labels do not mark component {c}")));
            }
            debug_assert!(paths.iter().all(|p| p.start == b));
            graphs.push(g);
            basis_paths.push(paths);
        }
        Ok(Marking {
            graphs,
            basis_paths,
            tree_paths,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.len() != self.system.len() {
            return Err(Error::Invalid(
                "one base vertex per component required".into(),
            ));
        }
        for e in &self.edges {
            if e.from >= self.vertices.len() || e.to >= self.vertices.len() {
                return Err(Error::Invalid("edge endpoint out of range".into()));
            }
            if self.vertices[e.from].comp != self.vertices[e.to].comp {
                return Err(Error::Invalid("edge joins two components".into()));
            }
        }
        self.marking().map(|_| ())
    }

    /// Reduced loop at the base of `comp` reading `x`.
    pub fn loop_path(&self, marking: &Marking, comp: usize, x: &Word) -> GPath {
        let coords = marking.graphs[comp]
            .express(x)
            .expect("marking covers the component");
        let mut p = GPath::trivial(self.base[comp]);
        let inverses: Vec<GPath> = marking.basis_paths[comp]
            .iter()
            .map(|bp| bp.inverse(self))
            .collect();
        for &l in &coords.0 {
            let k = l.unsigned_abs() as usize - 1;
            if l > 0 {
                p.append(&marking.basis_paths[comp][k]);
            } else {
                p.append(&inverses[k]);
            }
        }
        p.tighten();
        p
    }

    /// Reduced path from `a` to `b` with the given label.
    pub fn path_with_label(&self, marking: &Marking, a: usize, b: usize, label: &Word) -> GPath {
        let c = self.vertices[a].comp;
        let ta = &marking.tree_paths[a];
        let tb = &marking.tree_paths[b];
        let loop_label = ta.label(self).mul(label).mul(&tb.label(self).inverse());
        let lp = self.loop_path(marking, c, &loop_label);
        ta.inverse(self).concat(&lp).concat(tb)
    }

    /// Number of edges in the cyclically reduced loop of `x`; 0 iff elliptic.
    pub fn translation_length(&self, marking: &Marking, comp: usize, x: &Word) -> usize {
        cyclic_tighten(&self.loop_path(marking, comp, x)).len()
    }

    /// Stabilizer of the standard lift of `v`, as a subgroup of its component.
    pub fn stabilizer(&self, marking: &Marking, v: usize) -> Vec<Word> {
        let t = marking.tree_paths[v].label(self);
        self.vertices[v].group.iter().map(|h| h.conj(&t)).collect()
    }

    pub fn vertex_group_system(&self, marking: &Marking) -> SubgroupSystem {
        let members = (0..self.vertices.len())
            .filter(|&v| self.is_labeled(v))
            .map(|v| (self.vertices[v].comp, self.stabilizer(marking, v)))
            .collect();
        SubgroupSystem { members }
    }

    pub fn labeled_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.is_labeled(v))
            .collect()
    }

    pub fn vertex_rank_sum(&self) -> usize {
        self.vertices.iter().map(|v| v.group.len()).sum()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph splitting {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let names = &self.system.names[v.comp];
            let label = if v.group.is_empty() {
                format!("v{i}")
            } else {
                let gens: Vec<String> = v.group.iter().map(|w| w.display_with(names)).collect();
                format!("v{i} <{}>", gens.join(", "))
            };
            out.push_str(&format!("  v{i} [label=\"{label}\"];\n"));
        }
        for (i, e) in self.edges.iter().enumerate() {
            let names = &self.system.names[self.vertices[e.from].comp];
            out.push_str(&format!(
                "  v{} -> v{} [label=\"e{}: {}\"];\n",
                e.from,
                e.to,
                i + 1,
                e.label.display_with(names)
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopRep {
    pub splitting: FreeSplitting,
    pub phi: Automorphism,
    pub vmap: Vec<usize>,
    pub prefix: Vec<Word>,
    /// Images of positively oriented edges.
    pub emap: Vec<GPath>,
}

impl TopRep {
    /// The literal representative on the rose.
    pub fn on_rose(phi: &Automorphism) -> TopRep {
        let g = FreeSplitting::rose(&phi.system);
        let mut emap = Vec::new();
        for (c, imgs) in phi.images.iter().enumerate() {
            let target = g.base[phi.sigma[c]];
            let offset: usize = phi.system.ranks[..phi.sigma[c]].iter().sum();
            for w in imgs {
                let steps: Vec<i32> =
                    w.0.iter()
                        .map(|&l| l.signum() * (l.abs() + offset as i32))
                        .collect();
                let n = steps.len();
                emap.push(GPath {
                    start: target,
                    steps,
                    elems: vec![Word::empty(); n + 1],
                });
            }
        }
        let vmap = (0..g.vertices.len())
            .map(|v| g.base[phi.sigma[g.vertices[v].comp]])
            .collect();
        let prefix = vec![Word::empty(); g.vertices.len()];
        TopRep {
            splitting: g,
            phi: phi.clone(),
            vmap,
            prefix,
            emap,
        }
    }

    /// A representative on an arbitrary splitting whose vertex groups are
    /// permuted by `φ` up to conjugacy.
    pub fn new(phi: &Automorphism, g: &FreeSplitting) -> Result<TopRep> {
        let marking = g.marking()?;
        let nv = g.vertices.len();
        let mut vmap = vec![0; nv];
        let mut prefix = vec![Word::empty(); nv];
        let mut used = BTreeSet::new();
        for v in 0..nv {
            let c = g.vertices[v].comp;
            let tc = phi.sigma[c];
            if !g.is_labeled(v) {
                vmap[v] = g.base[tc];
                continue;
            }
            // stabilizer of the lift is t G_v t⁻¹; its image must be conjugate to some stabilizer
            let stab = g.stabilizer(&marking, v);
            let img: Vec<Word> = stab.iter().map(|h| phi.apply(c, h)).collect();
            let t = marking.tree_paths[v].label(g);
            let mut found = None;
            for w in 0..nv {
                if g.vertices[w].comp != tc || !g.is_labeled(w) || used.contains(&w) {
                    continue;
                }
                if g.vertices[w].group.len() != g.vertices[v].group.len() {
                    continue;
                }
                // u · φ(t G_v t⁻¹) · u⁻¹ = G_w  (in the frame of w's own labels)
                if let Some(u) = subgroup_conjugator(&img, &g.vertices[w].group) {
                    found = Some((w, u));
                    break;
                }
            }
            let (w, u) =
                found.ok_or_else(|| Error::NotInvariant(format!("no image for vertex {v}")))?;
            used.insert(w);
            vmap[v] = w;
            // x_v φ(G_v) x_v⁻¹ = G_w with x_v = u φ(t)
            prefix[v] = u.mul(&phi.apply(c, &t));
        }
        let mut emap = Vec::new();
        for e in &g.edges {
            let c = g.vertices[e.from].comp;
            let label = prefix[e.from]
                .mul(&phi.apply(c, &e.label))
                .mul(&prefix[e.to].inverse());
            emap.push(g.path_with_label(&marking, vmap[e.from], vmap[e.to], &label));
        }
        let rep = TopRep {
            splitting: g.clone(),
            phi: phi.clone(),
            vmap,
            prefix,
            emap,
        };
        rep.check().map_err(Error::NotInvariant)?;
        Ok(rep)
    }

    pub fn graph(&self) -> &FreeSplitting {
        &self.splitting
    }

    /// `Φ_v(h) = x_v φ(h) x_v⁻¹`, the vertex-group map at `v`.
    pub fn vertex_map(&self, v: usize, h: &Word) -> Word {
        let c = self.splitting.vertices[v].comp;
        self.phi.apply(c, h).conj(&self.prefix[v])
    }

    /// Image of a step (reverse image for negative steps).
    pub fn step_image(&self, s: i32) -> GPath {
        let p = &self.emap[step_edge(s)];
        if s > 0 {
            p.clone()
        } else {
            p.inverse(&self.splitting)
        }
    }

    pub fn image_path(&self, p: &GPath) -> GPath {
        let mut out = GPath::element(self.vmap[p.start], self.vertex_map(p.start, &p.elems[0]));
        let g = &self.splitting;
        let mut v = p.start;
        for (k, &s) in p.steps.iter().enumerate() {
            if s > 0 {
                out.append(&self.emap[step_edge(s)]);
            } else {
                out.append(&self.step_image(s));
            }
            v = g.step_end(s);
            let h = &p.elems[k + 1];
            if !h.is_empty() {
                out.right_mul(&self.vertex_map(v, h));
            }
        }
        let _ = v;
        out.tighten();
        out
    }

    /// Verifies cellular structure, labels and vertex-group equations.
    pub fn check(&self) -> std::result::Result<(), String> {
        let g = &self.splitting;
        let nv = g.vertices.len();
        if self.vmap.len() != nv || self.prefix.len() != nv || self.emap.len() != g.edges.len() {
            return Err("size mismatch".into());
        }
        for (i, e) in g.edges.iter().enumerate() {
            let p = &self.emap[i];
            if p.elems.len() != p.steps.len() + 1 {
                return Err(format!("edge {i}: malformed path"));
            }
            if p.start != self.vmap[e.from] || p.end(g) != self.vmap[e.to] {
                return Err(format!("edge {i}: endpoints"));
            }
            let mut v = p.start;
            for (k, h) in p.elems.iter().enumerate() {
                if k > 0 {
                    if g.step_start(p.steps[k - 1]) != v {
                        return Err(format!("edge {i}: path not connected"));
                    }
                    v = g.step_end(p.steps[k - 1]);
                }
                if !h.is_empty() && !SubgroupGraph::new(&g.vertices[v].group).contains(h) {
                    return Err(format!("edge {i}: element outside vertex group"));
                }
            }
            let c = g.vertices[e.from].comp;
            let want = self.prefix[e.from]
                .mul(&self.phi.apply(c, &e.label))
                .mul(&self.prefix[e.to].inverse());
            if p.label(g) != want {
                return Err(format!("edge {i}: label equation fails"));
            }
        }
        for v in 0..nv {
            if !g.is_labeled(v) {
                continue;
            }
            let w = self.vmap[v];
            if !g.is_labeled(w) {
                return Err(format!("vertex {v}: labeled vertex maps to unlabeled"));
            }
            let img: Vec<Word> = g.vertices[v]
                .group
                .iter()
                .map(|h| self.vertex_map(v, h))
                .collect();
            let gw = SubgroupGraph::new(&g.vertices[w].group);
            let gi = SubgroupGraph::new(&img);
            if !img.iter().all(|h| gw.contains(h))
                || !g.vertices[w].group.iter().all(|h| gi.contains(h))
            {
                return Err(format!("vertex {v}: vertex group equation fails"));
            }
        }
        Ok(())
    }

    /// `a[e][e']` counts crossings of `e'` by `f(e)`, so `A·ν` gives the
    /// lengths of edge images.
    pub fn transition_matrix(&self) -> Vec<Vec<u64>> {
        let n = self.splitting.edges.len();
        let mut a = vec![vec![0u64; n]; n];
        for (j, p) in self.emap.iter().enumerate() {
            for &s in &p.steps {
                a[j][step_edge(s)] += 1;
            }
        }
        a
    }

    /// Restriction to the labeled vertices: the vertex-group system with the
    /// automorphism `h ↦ x_v φ(h) x_v⁻¹` written in vertex-group coordinates.
    pub fn restriction(&self) -> Result<Restriction> {
        let g = &self.splitting;
        let labeled = g.labeled_vertices();
        if labeled.is_empty() {
            return Ok(Restriction {
                vertices: Vec::new(),
                automorphism: None,
            });
        }
        let index: BTreeMap<usize, usize> =
            labeled.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let ranks: Vec<usize> = labeled.iter().map(|&v| g.vertices[v].group.len()).collect();
        let system = FreeGroupSystem::new(ranks)?;
        let mut sigma = Vec::new();
        let mut images = Vec::new();
        for &v in &labeled {
            let w = self.vmap[v];
            let j = *index
                .get(&w)
                .ok_or_else(|| Error::NotInvariant("labeled vertex maps off the system".into()))?;
            sigma.push(j);
            let gw = SubgroupGraph::new(&g.vertices[w].group);
            let mut imgs = Vec::new();
            for h in &g.vertices[v].group {
                let img = self.vertex_map(v, h);
                imgs.push(
                    gw.express(&img)
                        .ok_or_else(|| Error::NotInvariant("image leaves vertex group".into()))?,
                );
            }
            images.push(imgs);
        }
        let aut = Automorphism::new(system, sigma, images)?.verify()?;
        Ok(Restriction {
            vertices: labeled,
            automorphism: Some(aut),
        })
    }

    pub fn to_dot(&self) -> String {
        self.splitting.to_dot()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    /// Labeled vertices of the splitting; component `i` of the restricted
    /// system is the group of `vertices[i]`.
    pub vertices: Vec<usize>,
    pub automorphism: Option<Automorphism>,
}

/// Strong connectivity of the digraph of positive entries.
pub fn is_irreducible(a: &[Vec<u64>]) -> bool {
    let n = a.len();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { a[i][j] } else { a[j][i] };
                if w > 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Strongly connected components of the digraph `e → e'` when `e'` occurs in
/// the image of `e` (Tarjan), in reverse topological order.
pub fn strongly_connected_components(a: &[Vec<u64>]) -> Vec<Vec<usize>> {
    let n = a.len();
    struct St<'a> {
        a: &'a [Vec<u64>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(st: &mut St, v: usize) {
        st.index[v] = Some(st.next);
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on[v] = true;
        for w in 0..st.a.len() {
            if st.a[v][w] == 0 {
                continue;
            }
            match st.index[w] {
                None => {
                    visit(st, w);
                    st.low[v] = st.low[v].min(st.low[w]);
                }
                Some(iw) if st.on[w] => st.low[v] = st.low[v].min(iw),
                _ => {}
            }
        }
        if st.low[v] == st.index[v].unwrap() {
            let mut comp = Vec::new();
            loop {
                let w = st.stack.pop().unwrap();
                st.on[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort();
            st.out.push(comp);
        }
    }
    let mut st = St {
        a,
        index: vec![None; n],
        low: vec![0; n],
        on: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(&mut st, v);
        }
    }
    st.out
}
