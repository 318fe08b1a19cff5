//! Elementary moves on topological representatives. Every move preserves the
//! label and vertex-group equations checked by [`TopRep::check`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{step_edge, step_of, Edge, FreeSplitting, GPath, TopRep, Vertex};
use crate::stallings::SubgroupGraph;
use crate::word::Word;

/// Vertex sitting at each element slot of a path.
pub fn path_vertices(g: &FreeSplitting, p: &GPath) -> Vec<usize> {
    let mut out = Vec::with_capacity(p.elems.len());
    out.push(p.start);
    for &s in &p.steps {
        out.push(g.step_end(s));
    }
    out
}

fn delete_edge_steps(p: &mut GPath, e: usize) {
    let mut steps = Vec::with_capacity(p.steps.len());
    let mut elems = vec![p.elems[0].clone()];
    for (k, &s) in p.steps.iter().enumerate() {
        if step_edge(s) == e {
            let last = elems.pop().unwrap();
            elems.push(last.mul(&p.elems[k + 1]));
        } else {
            steps.push(s);
            elems.push(p.elems[k + 1].clone());
        }
    }
    p.steps = steps;
    p.elems = elems;
}

impl TopRep {
    fn comp_of(&self, v: usize) -> usize {
        self.splitting.vertices[v].comp
    }

    pub fn tighten_all(&mut self) {
        for p in self.emap.iter_mut() {
            p.tighten();
        }
    }

    /// Changes the lift of `w` by `g`: edges into `w` get `ℓ·g`, edges out of
    /// `w` get `g⁻¹·ℓ`, and `G_w` is conjugated to `g⁻¹ G_w g`.
    pub fn gauge(&mut self, w: usize, g: &Word) {
        if g.is_empty() {
            return;
        }
        let gi = g.inverse();
        let verts: Vec<Vec<usize>> = self
            .emap
            .iter()
            .map(|p| path_vertices(&self.splitting, p))
            .collect();
        for (p, vs) in self.emap.iter_mut().zip(&verts) {
            for (k, &v) in vs.iter().enumerate() {
                if v == w && !p.elems[k].is_empty() {
                    p.elems[k] = p.elems[k].conj(&gi);
                }
            }
        }
        for e in self.splitting.edges.iter_mut() {
            if e.from == w {
                e.label = gi.mul(&e.label);
            }
            if e.to == w {
                e.label = e.label.mul(g);
            }
        }
        let group = &mut self.splitting.vertices[w].group;
        for h in group.iter_mut() {
            *h = h.conj(&gi);
        }
        let phig = self.phi.apply(self.comp_of(w), g);
        for u in 0..self.vmap.len() {
            if self.vmap[u] == w {
                self.prefix[u] = gi.mul(&self.prefix[u]);
            }
            if u == w {
                self.prefix[u] = self.prefix[u].mul(&phig);
            }
        }
    }

    /// Slides the start germ of `e` by `r ∈ G_{from(e)}`: the direction
    /// `(r, e)` becomes `(1, e)`.
    pub fn slide_start(&mut self, e: usize, r: &Word) {
        if r.is_empty() {
            return;
        }
        let w = self.splitting.edges[e].from;
        let ri = r.inverse();
        let pos = step_of(e, true);
        for p in self.emap.iter_mut() {
            for k in 0..p.steps.len() {
                if p.steps[k] == pos {
                    p.elems[k] = p.elems[k].mul(&ri);
                } else if p.steps[k] == -pos {
                    p.elems[k + 1] = r.mul(&p.elems[k + 1]);
                }
            }
        }
        let img = self.vertex_map(w, r);
        self.emap[e].left_mul(&img);
        let l = &mut self.splitting.edges[e].label;
        *l = r.mul(l);
    }

    /// Slides the end germ of `e` by `r ∈ G_{to(e)}`: the direction
    /// `(r, ē)` becomes `(1, ē)`.
    pub fn slide_end(&mut self, e: usize, r: &Word) {
        if r.is_empty() {
            return;
        }
        let w = self.splitting.edges[e].to;
        let ri = r.inverse();
        let pos = step_of(e, true);
        for p in self.emap.iter_mut() {
            for k in 0..p.steps.len() {
                if p.steps[k] == pos {
                    p.elems[k + 1] = r.mul(&p.elems[k + 1]);
                } else if p.steps[k] == -pos {
                    p.elems[k] = p.elems[k].mul(&ri);
                }
            }
        }
        let img = self.vertex_map(w, &ri);
        self.emap[e].right_mul(&img);
        let l = &mut self.splitting.edges[e].label;
        *l = l.mul(&ri);
    }

    /// Slides the germ `s` (a step leaving its start vertex) by `r`.
    pub fn slide_germ(&mut self, s: i32, r: &Word) {
        if s > 0 {
            self.slide_start(step_edge(s), r);
        } else {
            self.slide_end(step_edge(s), r);
        }
    }

    /// Replaces `x_y` by `h·x_y` at an unlabeled vertex `y`, with
    /// `h ∈ G_{f(y)}`.
    pub fn reprefix(&mut self, y: usize, h: &Word) {
        debug_assert!(!self.splitting.is_labeled(y));
        if h.is_empty() {
            return;
        }
        let hi = h.inverse();
        for (i, e) in self.splitting.edges.iter().enumerate() {
            if e.from == y {
                self.emap[i].left_mul(h);
            }
            if e.to == y {
                self.emap[i].right_mul(&hi);
            }
        }
        self.prefix[y] = h.mul(&self.prefix[y]);
    }

    /// Inverse of the vertex-group map at a labeled vertex.
    pub fn vertex_map_inverse(&self, v: usize, h: &Word) -> Option<Word> {
        let basis = &self.splitting.vertices[v].group;
        let imgs: Vec<Word> = basis.iter().map(|b| self.vertex_map(v, b)).collect();
        let coords = SubgroupGraph::new(&imgs).express(h)?;
        let mut out = Word::empty();
        for &l in &coords.0 {
            let b = &basis[l.unsigned_abs() as usize - 1];
            out = out.mul(&if l > 0 { b.clone() } else { b.inverse() });
        }
        Some(out)
    }

    /// Subdivides `e` at the vertex reached after `k` steps of `f(e)`; the
    /// element there splits as `a · b` with `a` ending the first piece.
    /// Returns the index of the new second piece; `e` keeps the first piece.
    pub fn subdivide(&mut self, e: usize, k: usize, a: &Word) -> usize {
        let old = self.emap[e].clone();
        debug_assert!(k > 0 && k < old.len());
        let (p1, mut p2) = old.split_at(k, a);
        p2.start = self.splitting.step_end(old.steps[k - 1]);
        let Edge {
            from: u,
            to: v,
            label,
        } = self.splitting.edges[e].clone();
        let c = self.comp_of(u);
        let z = self.splitting.vertices.len();
        self.splitting.vertices.push(Vertex {
            comp: c,
            group: Vec::new(),
        });
        let xz = p1
            .label(&self.splitting)
            .inverse()
            .mul(&self.prefix[u])
            .mul(&self.phi.apply(c, &label));
        self.vmap.push(p2.start);
        self.prefix.push(xz);
        let e2 = self.splitting.edges.len();
        self.splitting.edges[e].to = z;
        self.splitting.edges.push(Edge {
            from: z,
            to: v,
            label: Word::empty(),
        });
        self.emap[e] = p1;
        self.emap.push(p2);
        let (pe, pe2) = (step_of(e, true), step_of(e2, true));
        for p in self.emap.iter_mut() {
            if !p.steps.iter().any(|&s| step_edge(s) == e) {
                continue;
            }
            let mut steps = Vec::new();
            let mut elems = vec![p.elems[0].clone()];
            for (j, &s) in p.steps.iter().enumerate() {
                if s == pe {
                    steps.extend([pe, pe2]);
                    elems.push(Word::empty());
                } else if s == -pe {
                    steps.extend([-pe2, -pe]);
                    elems.push(Word::empty());
                } else {
                    steps.push(s);
                }
                elems.push(p.elems[j + 1].clone());
            }
            p.steps = steps;
            p.elems = elems;
        }
        e2
    }

    fn remove_edge(&mut self, e: usize) {
        debug_assert!(self
            .emap
            .iter()
            .enumerate()
            .all(|(i, p)| i == e || p.steps.iter().all(|&s| step_edge(s) != e)));
        self.splitting.edges.remove(e);
        self.emap.remove(e);
        let cut = e as i32 + 1;
        for p in self.emap.iter_mut() {
            for s in p.steps.iter_mut() {
                if s.abs() > cut {
                    *s -= s.signum();
                }
            }
        }
    }

    fn remove_vertex(&mut self, v: usize) {
        self.splitting.vertices.remove(v);
        self.vmap.remove(v);
        self.prefix.remove(v);
        let fix = |x: &mut usize| {
            if *x > v {
                *x -= 1;
            }
        };
        for e in self.splitting.edges.iter_mut() {
            fix(&mut e.from);
            fix(&mut e.to);
        }
        for x in self.vmap.iter_mut() {
            fix(x);
        }
        for p in self.emap.iter_mut() {
            fix(&mut p.start);
        }
        for b in self.splitting.base.iter_mut() {
            fix(b);
        }
    }

    /// Redirects everything at `gone` to `keep` and deletes `gone`. The two
    /// must have equal images and prefixes; `gone` must be unlabeled.
    fn merge_vertices(&mut self, keep: usize, gone: usize) {
        debug_assert!(!self.splitting.is_labeled(gone));
        for e in self.splitting.edges.iter_mut() {
            if e.from == gone {
                e.from = keep;
            }
            if e.to == gone {
                e.to = keep;
            }
        }
        for x in self.vmap.iter_mut() {
            if *x == gone {
                *x = keep;
            }
        }
        for p in self.emap.iter_mut() {
            if p.start == gone {
                p.start = keep;
            }
        }
        for b in self.splitting.base.iter_mut() {
            if *b == gone {
                *b = keep;
            }
        }
        self.remove_vertex(gone);
    }

    /// Collapses the non-loop edge `e`, keeping a labeled endpoint if any,
    /// else the base, else the start.
    pub fn contract_edge(&mut self, e: usize) -> Result<()> {
        let Edge { from: u, to: v, .. } = self.splitting.edges[e].clone();
        if u == v {
            return Err(Error::Degenerate(format!(
                "cannot contract loop e{}",
                e + 1
            )));
        }
        let (lu, lv) = (self.splitting.is_labeled(u), self.splitting.is_labeled(v));
        if lu && lv {
            return Err(Error::Degenerate(format!(
                "e{} joins two labeled vertices",
                e + 1
            )));
        }
        let c = self.comp_of(u);
        let base = self.splitting.base[c];
        let (keep, gone) = if lv || (!lu && v == base) {
            (v, u)
        } else {
            (u, v)
        };
        let gauged = if gone == base { keep } else { gone };
        let l = self.splitting.edges[e].label.clone();
        if gauged == v {
            self.gauge(v, &l.inverse());
        } else {
            self.gauge(u, &l);
        }
        debug_assert!(self.splitting.edges[e].label.is_empty());
        let d = step_of(e, keep == u);
        let fd = self.step_image(d);
        let fdi = fd.inverse(&self.splitting);
        for i in 0..self.emap.len() {
            if i == e {
                continue;
            }
            let Edge { from, to, .. } = self.splitting.edges[i];
            let mut p = self.emap[i].clone();
            if from == gone {
                p = fd.concat(&p);
            }
            if to == gone {
                p = p.concat(&fdi);
            }
            self.emap[i] = p;
        }
        for p in self.emap.iter_mut() {
            delete_edge_steps(p, e);
        }
        self.remove_edge(e);
        self.merge_vertices(keep, gone);
        self.tighten_all();
        Ok(())
    }

    /// If every germ at the unlabeled vertex `v` has image starting with the
    /// same element and step, moves `f(v)` across that step, shortening all
    /// incident edge images. Returns whether the move applied.
    pub fn pull_vertex(&mut self, v: usize) -> bool {
        let g = &self.splitting;
        if g.is_labeled(v) {
            return false;
        }
        let germs = g.germs_at(v);
        let mut common: Option<(Word, i32)> = None;
        for &s in &germs {
            let p = self.step_image(s);
            if p.is_empty() {
                return false;
            }
            let key = (p.elems[0].clone(), p.steps[0]);
            match &common {
                None => common = Some(key),
                Some(c) if *c == key => {}
                _ => return false,
            }
        }
        let Some((g0, s)) = common else { return false };
        // a loop at v would need both of its ends pulled through the same step
        let g0s = g0.mul(&g.step_label(s));
        let target = g.step_end(s);
        let pull = GPath {
            start: self.vmap[v],
            steps: vec![s],
            elems: vec![g0, Word::empty()],
        };
        let pull_inv = pull.inverse(g);
        for (i, e) in g.edges.iter().enumerate() {
            let mut p = self.emap[i].clone();
            if e.from == v {
                p = pull_inv.concat(&p);
            }
            if e.to == v {
                p = p.concat(&pull);
            }
            self.emap[i] = p;
        }
        self.vmap[v] = target;
        self.prefix[v] = g0s.inverse().mul(&self.prefix[v]);
        true
    }

    /// Folds two germs at the same vertex whose images coincide, merging
    /// their far endpoints and identifying the edges.
    pub fn fold_identical(&mut self, s1: i32, s2: i32) -> Result<()> {
        let g = &self.splitting;
        if step_edge(s1) == step_edge(s2) {
            return Err(Error::Degenerate("fold of an edge with itself".into()));
        }
        let (y1, y2) = (g.step_end(s1), g.step_end(s2));
        if y1 != y2 {
            let (l1, l2) = (g.is_labeled(y1), g.is_labeled(y2));
            if l1 && l2 {
                return Err(Error::Degenerate(
                    "fold would merge two labeled vertices".into(),
                ));
            }
            let c = self.comp_of(y1);
            let base = g.base[c];
            let (keep, gone) = if l2 || (!l1 && y2 == base) {
                (y2, y1)
            } else {
                (y1, y2)
            };
            let (lk, lg) = if keep == y1 { (s1, s2) } else { (s2, s1) };
            // make the traversal labels agree, never gauging the base
            let (wl_keep, wl_gone) = (g.step_label(lk), g.step_label(lg));
            if gone != base {
                self.gauge(gone, &wl_gone.inverse().mul(&wl_keep));
            } else {
                self.gauge(keep, &wl_keep.inverse().mul(&wl_gone));
            }
            debug_assert_eq!(self.prefix[keep], self.prefix[gone]);
            self.merge_vertices(keep, gone);
        } else {
            let (a, b) = (g.step_label(s1), g.step_label(s2));
            if a != b {
                return Err(Error::Degenerate(
                    "parallel germs with distinct labels".into(),
                ));
            }
        }
        // identify s2 with s1
        let (e1, e2) = (step_edge(s1), step_edge(s2));
        let flip = (s1 > 0) != (s2 > 0);
        for p in self.emap.iter_mut() {
            for s in p.steps.iter_mut() {
                if step_edge(*s) == e2 {
                    let fwd = (*s > 0) != flip;
                    *s = step_of(e1, fwd);
                }
            }
        }
        self.remove_edge(e2);
        self.tighten_all();
        Ok(())
    }

    /// Collapses every component of the edge set `h` to a single vertex whose
    /// group is the fundamental group of that component; returns the new
    /// splitting.
    pub fn collapse_subgraph(&self, h: &[usize]) -> Result<FreeSplitting> {
        let g = &self.splitting;
        let nv = g.vertices.len();
        let in_h: Vec<bool> = (0..g.edges.len()).map(|i| h.contains(&i)).collect();
        // tree labels t_v from each component's root, component ids
        let mut comp_id: Vec<Option<usize>> = vec![None; nv];
        let mut t: Vec<Word> = vec![Word::empty(); nv];
        let mut roots = Vec::new();
        let mut tree_edge = vec![false; g.edges.len()];
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by_key(|&v| (!g.base.contains(&v), !g.is_labeled(v), v));
        for &r in &order {
            if comp_id[r].is_some()
                || !g
                    .edges
                    .iter()
                    .enumerate()
                    .any(|(i, e)| in_h[i] && (e.from == r || e.to == r))
            {
                continue;
            }
            let id = roots.len();
            roots.push(r);
            comp_id[r] = Some(id);
            let mut stack = vec![r];
            while let Some(x) = stack.pop() {
                for s in g.germs_at(x) {
                    let i = step_edge(s);
                    let y = g.step_end(s);
                    if in_h[i] && comp_id[y].is_none() {
                        comp_id[y] = Some(id);
                        t[y] = t[x].mul(&g.step_label(s));
                        tree_edge[i] = true;
                        stack.push(y);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<Word>> = vec![Vec::new(); roots.len()];
        for v in 0..nv {
            if let Some(id) = comp_id[v] {
                for x in &g.vertices[v].group {
                    groups[id].push(x.conj(&t[v]));
                }
            }
        }
        for (i, e) in g.edges.iter().enumerate() {
            if in_h[i] && !tree_edge[i] {
                let id = comp_id[e.from].unwrap();
                groups[id].push(t[e.from].mul(&e.label).mul(&t[e.to].inverse()));
            }
        }
        let mut newv: BTreeMap<usize, usize> = BTreeMap::new();
        let mut vertices = Vec::new();
        let mut comp_vertex = vec![usize::MAX; roots.len()];
        for v in 0..nv {
            match comp_id[v] {
                Some(id) => {
                    if comp_vertex[id] == usize::MAX {
                        comp_vertex[id] = vertices.len();
                        vertices.push(Vertex {
                            comp: g.vertices[v].comp,
                            group: std::mem::take(&mut groups[id]),
                        });
                    }
                    newv.insert(v, comp_vertex[id]);
                }
                None => {
                    newv.insert(v, vertices.len());
                    vertices.push(g.vertices[v].clone());
                }
            }
        }
        let mut edges = Vec::new();
        for (i, e) in g.edges.iter().enumerate() {
            if in_h[i] {
                continue;
            }
            let label = t[e.from].mul(&e.label).mul(&t[e.to].inverse());
            edges.push(Edge {
                from: newv[&e.from],
                to: newv[&e.to],
                label,
            });
        }
        let base = g.base.iter().map(|b| newv[b]).collect();
        let out = FreeSplitting {
            system: g.system.clone(),
            vertices,
            edges,
            base,
        };
        out.validate()?;
        Ok(out)
    }
}
