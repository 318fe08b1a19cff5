//! Stallings folding of subgroup graphs.
//!
//! Every edge carries, besides its ambient letter, a label in the free group on
//! the input generators. Folds gauge one endpoint so the labels of the two
//! identified edges agree, which keeps the product of labels along any loop at
//! the base equal to that loop's coordinates in the input generators.

use std::collections::{BTreeMap, VecDeque};

use crate::word::Word;

#[derive(Clone, Debug)]
struct Edge {
    from: usize,
    to: usize,
    letter: i32,
    label: Word,
    alive: bool,
}

#[derive(Clone, Debug)]
pub struct SubgroupGraph {
    edges: Vec<Edge>,
    // per vertex: signed letter -> edge id
    adj: Vec<BTreeMap<i32, usize>>,
    alive: Vec<bool>,
    base: usize,
    ngens: usize,
    free_basis: bool,
}

impl SubgroupGraph {
    /// Folds the subgroup generated by `gens`.
    pub fn new(gens: &[Word]) -> Self {
        let mut g = SubgroupGraph {
            edges: Vec::new(),
            adj: vec![BTreeMap::new()],
            alive: vec![true],
            base: 0,
            ngens: gens.len(),
            free_basis: true,
        };
        let mut pending: Vec<(usize, usize, i32, Word)> = Vec::new();
        for (i, w) in gens.iter().enumerate() {
            let w = w.reduce();
            if w.is_empty() {
                g.free_basis = false;
                continue;
            }
            let mut cur = g.base;
            let n = w.len();
            for (k, &l) in w.0.iter().enumerate() {
                let next = if k + 1 == n {
                    g.base
                } else {
                    g.adj.push(BTreeMap::new());
                    g.alive.push(true);
                    g.adj.len() - 1
                };
                let label = if k == 0 {
                    Word::gen(i as i32 + 1)
                } else {
                    Word::empty()
                };
                pending.push((cur, next, l, label));
                cur = next;
            }
        }
        for (from, to, l, label) in pending {
            g.insert_edge(from, to, l, label);
        }
        for id in 0..g.edges.len() {
            g.attach(id);
        }
        g
    }

    fn insert_edge(&mut self, from: usize, to: usize, l: i32, label: Word) {
        // store with a positive letter
        let (from, to, letter, label) = if l > 0 {
            (from, to, l, label)
        } else {
            (to, from, -l, label.inverse())
        };
        self.edges.push(Edge {
            from,
            to,
            letter,
            label,
            alive: true,
        });
    }

    /// Registers both half-edges of `id`, folding on collisions.
    fn attach(&mut self, id: usize) {
        let mut work = vec![id];
        while let Some(e) = work.pop() {
            if !self.edges[e].alive {
                continue;
            }
            let (from, to, letter) = (self.edges[e].from, self.edges[e].to, self.edges[e].letter);
            let mut clash = None;
            for (v, s) in [(from, letter), (to, -letter)] {
                match self.adj[v].get(&s) {
                    Some(&other) if other != e => {
                        clash = Some((v, s, other));
                        break;
                    }
                    _ => {}
                }
            }
            match clash {
                None => {
                    self.adj[from].insert(letter, e);
                    self.adj[to].insert(-letter, e);
                }
                Some((u, s, other)) => {
                    let requeue = self.fold(u, s, other, e);
                    work.extend(requeue);
                }
            }
        }
    }

    fn traverse(&self, e: usize, u: usize, s: i32) -> (usize, Word) {
        let ed = &self.edges[e];
        if s > 0 {
            debug_assert_eq!(ed.from, u);
            (ed.to, ed.label.clone())
        } else {
            debug_assert_eq!(ed.to, u);
            (ed.from, ed.label.inverse())
        }
    }

    fn gauge(&mut self, w: usize, g: &Word) {
        if g.is_empty() {
            return;
        }
        let gi = g.inverse();
        for ed in self.edges.iter_mut().filter(|e| e.alive) {
            if ed.from == w {
                ed.label = gi.mul(&ed.label);
            }
            if ed.to == w {
                ed.label = ed.label.mul(g);
            }
        }
    }

    /// Folds registered edge `kept` with unregistered edge `e`, both leaving
    /// `u` with signed letter `s`. Returns edges that must be re-registered.
    fn fold(&mut self, u: usize, s: i32, kept: usize, e: usize) -> Vec<usize> {
        let (v1, m1) = self.traverse(kept, u, s);
        let (v2, m2) = self.traverse(e, u, s);
        if v1 == v2 {
            if m1 != m2 {
                self.free_basis = false;
            }
            self.edges[e].alive = false;
            return Vec::new();
        }
        // gauge the non-base endpoint so both traversals read the same label
        let (keep_v, gone_v, g) = if v2 != self.base {
            (v1, v2, m2.inverse().mul(&m1))
        } else {
            (v2, v1, m1.inverse().mul(&m2))
        };
        self.gauge(gone_v, &g);
        self.edges[e].alive = false;
        // move every half-edge of gone_v onto keep_v
        let moved: Vec<usize> = self.adj[gone_v].values().copied().collect();
        self.adj[gone_v].clear();
        self.alive[gone_v] = false;
        let mut requeue = Vec::new();
        for id in moved {
            let ed = &self.edges[id];
            let (f, t, l) = (ed.from, ed.to, ed.letter);
            if self.adj[f].get(&l) == Some(&id) {
                self.adj[f].remove(&l);
            }
            if self.adj[t].get(&-l) == Some(&id) {
                self.adj[t].remove(&-l);
            }
            let ed = &mut self.edges[id];
            if ed.from == gone_v {
                ed.from = keep_v;
            }
            if ed.to == gone_v {
                ed.to = keep_v;
            }
            requeue.push(id);
        }
        // edges not yet registered also follow the merge
        for ed in self.edges.iter_mut() {
            if ed.from == gone_v {
                ed.from = keep_v;
            }
            if ed.to == gone_v {
                ed.to = keep_v;
            }
        }
        requeue
    }

    /// True when no fold identified two parallel edges with different labels
    /// and no generator was trivial, so the input generators form a free basis.
    pub fn is_free_basis(&self) -> bool {
        self.free_basis
    }

    pub fn num_vertices(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.alive).count()
    }

    pub fn rank(&self) -> usize {
        self.num_edges() + 1 - self.num_vertices()
    }

    pub fn num_generators(&self) -> usize {
        self.ngens
    }

    /// True iff the subgroup is all of F of the given rank.
    pub fn is_whole_group(&self, rank: usize) -> bool {
        self.num_vertices() == 1 && self.adj[self.base].len() == 2 * rank
    }

    fn read(&self, start: usize, x: &Word) -> Option<(usize, Word)> {
        let mut v = start;
        let mut acc = Word::empty();
        for &l in &x.0 {
            let &e = self.adj[v].get(&l)?;
            let (nv, m) = self.traverse(e, v, l);
            acc.append(&m);
            v = nv;
        }
        Some((v, acc))
    }

    pub fn contains(&self, x: &Word) -> bool {
        matches!(self.read(self.base, x), Some((v, _)) if v == self.base)
    }

    /// Coordinates of `x` in the input generators (letter `i+1` is `gens[i]`).
    /// Only meaningful when the generators form a free basis.
    pub fn express(&self, x: &Word) -> Option<Word> {
        match self.read(self.base, x) {
            Some((v, m)) if v == self.base => Some(m),
            _ => None,
        }
    }

    /// Some `u` with `u · gens · u⁻¹ ⊆ H`, if one exists.
    pub fn conjugator_into(&self, gens: &[Word]) -> Option<Word> {
        let m = SubgroupGraph::new(gens);
        let core = m.core_vertices();
        let Some(&q) = core.first() else {
            return Some(Word::empty());
        };
        // move the basepoint of the subgroup into its core
        let c = m.hairs()[&q].clone();
        let moved: Vec<Word> = gens.iter().map(|g| g.conj(&c.inverse())).collect();
        for (p, h) in self.hairs() {
            if moved
                .iter()
                .all(|g| matches!(self.read(p, g), Some((v, _)) if v == p))
            {
                return Some(h.mul(&c.inverse()).reduce());
            }
        }
        None
    }

    /// Ambient words reading from the base to each live vertex along a BFS tree.
    fn hairs(&self) -> BTreeMap<usize, Word> {
        let mut out = BTreeMap::new();
        out.insert(self.base, Word::empty());
        let mut q = VecDeque::from([self.base]);
        while let Some(v) = q.pop_front() {
            let pv = out[&v].clone();
            for (&s, &e) in &self.adj[v] {
                let (nv, _) = self.traverse(e, v, s);
                if let std::collections::btree_map::Entry::Vacant(slot) = out.entry(nv) {
                    slot.insert(pv.mul(&Word::gen(s)));
                    q.push_back(nv);
                }
            }
        }
        out
    }

    /// Vertices of the core (the graph with hanging trees pruned).
    fn core_vertices(&self) -> Vec<usize> {
        let mut deg: BTreeMap<usize, usize> = (0..self.alive.len())
            .filter(|&v| self.alive[v])
            .map(|v| (v, self.adj[v].len()))
            .collect();
        let mut removed = vec![false; self.alive.len()];
        let mut stack: Vec<usize> = deg
            .iter()
            .filter(|(_, &d)| d <= 1)
            .map(|(&v, _)| v)
            .collect();
        while let Some(v) = stack.pop() {
            if removed[v] {
                continue;
            }
            removed[v] = true;
            for (&s, &e) in &self.adj[v] {
                let (nv, _) = self.traverse(e, v, s);
                if !removed[nv] {
                    let d = deg.get_mut(&nv).unwrap();
                    *d -= 1;
                    if *d <= 1 {
                        stack.push(nv);
                    }
                }
            }
        }
        deg.keys().copied().filter(|&v| !removed[v]).collect()
    }

    /// Attempts an isomorphism of cores sending `a` to `b` (edges restricted to cores).
    fn core_iso(
        &self,
        ca: &[usize],
        a: usize,
        other: &SubgroupGraph,
        cb: &[usize],
        b: usize,
    ) -> bool {
        let in_a: std::collections::BTreeSet<usize> = ca.iter().copied().collect();
        let in_b: std::collections::BTreeSet<usize> = cb.iter().copied().collect();
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut inv: BTreeMap<usize, usize> = BTreeMap::new();
        map.insert(a, b);
        inv.insert(b, a);
        let mut q = VecDeque::from([a]);
        while let Some(v) = q.pop_front() {
            let w = map[&v];
            let la: Vec<(i32, usize)> = self.adj[v]
                .iter()
                .map(|(&s, &e)| (s, self.traverse(e, v, s).0))
                .filter(|(_, n)| in_a.contains(n))
                .collect();
            let lb: Vec<(i32, usize)> = other.adj[w]
                .iter()
                .map(|(&s, &e)| (s, other.traverse(e, w, s).0))
                .filter(|(_, n)| in_b.contains(n))
                .collect();
            if la.len() != lb.len() {
                return false;
            }
            for ((sa, na), (sb, nb)) in la.into_iter().zip(lb) {
                if sa != sb {
                    return false;
                }
                match (map.get(&na), inv.get(&nb)) {
                    (Some(&x), _) if x != nb => return false,
                    (_, Some(&y)) if y != na => return false,
                    (None, None) => {
                        map.insert(na, nb);
                        inv.insert(nb, na);
                        q.push_back(na);
                    }
                    _ => {}
                }
            }
        }
        map.len() == ca.len() && inv.len() == cb.len()
    }
}

/// Finds `u` with `u · H1 · u⁻¹ = H2`, where `Hi` is generated by `gi`.
pub fn subgroup_conjugator(g1: &[Word], g2: &[Word]) -> Option<Word> {
    let h1 = SubgroupGraph::new(g1);
    let h2 = SubgroupGraph::new(g2);
    let c1 = h1.core_vertices();
    let c2 = h2.core_vertices();
    if c1.is_empty() || c2.is_empty() {
        return if c1.is_empty() && c2.is_empty() {
            Some(Word::empty())
        } else {
            None
        };
    }
    if c1.len() != c2.len() || h1.rank() != h2.rank() {
        return None;
    }
    let p1 = h1.hairs();
    let p2 = h2.hairs();
    let a = c1[0];
    for &b in &c2 {
        if h1.core_iso(&c1, a, &h2, &c2, b) {
            return Some(p2[&b].mul(&p1[&a].inverse()));
        }
    }
    None
}
