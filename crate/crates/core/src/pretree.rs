//! Pretrees: the interval axioms as checkable laws, finite real pretrees as
//! metric trees with exact rational lengths, directions, projections, hulls
//! and rigidity of partial pretree-isomorphisms.
//!
//! Text format:
//!
//! ```text
//! vertices 4
//! edge 0 1 1
//! edge 1 2 3/2
//! edge 1 3 2
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Q = Ratio<i128>;

/// Intervals of a pretree, given by membership: `between(p, q, r)` iff
/// `r ∈ [p, q]`. Implementations must be re-entrant.
pub trait IntervalOracle {
    type Point: Clone + PartialEq + fmt::Debug;

    fn between(&self, p: &Self::Point, q: &Self::Point, r: &Self::Point) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axiom {
    Symmetric,
    Thin,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    /// Number of (triple, witness) instances checked.
    pub checked: usize,
    /// First failing axiom with the points involved, rendered with `Debug`.
    pub counterexample: Option<(Axiom, Vec<String>)>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// How many triples `check_axioms` draws when not exhaustive.
#[derive(Clone, Copy, Debug)]
pub enum Sampling<'a, R: Rng> {
    Exhaustive,
    Random {
        triples: usize,
        rng: &'a std::cell::RefCell<R>,
    },
}

fn check_triple<O: IntervalOracle>(
    o: &O,
    sample: &[O::Point],
    p: &O::Point,
    q: &O::Point,
    r: &O::Point,
) -> (usize, Option<(Axiom, Vec<String>)>) {
    let show = |pts: &[&O::Point]| pts.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>();
    let mut n = 0;
    // symmetric: [p,q] = [q,p] and contains both ends
    n += 1;
    if !o.between(p, q, p) || !o.between(p, q, q) || o.between(p, q, r) != o.between(q, p, r) {
        return (n, Some((Axiom::Symmetric, show(&[p, q, r]))));
    }
    // thin: [p,r] ⊂ [p,q] ∪ [q,r], tested on the sample
    for x in sample {
        n += 1;
        if o.between(p, r, x) && !o.between(p, q, x) && !o.between(q, r, x) {
            return (n, Some((Axiom::Thin, show(&[p, q, r, x]))));
        }
    }
    // linear: r ∈ [p,q] and q ∈ [p,r] force q = r
    n += 1;
    if o.between(p, q, r) && o.between(p, r, q) && q != r {
        return (n, Some((Axiom::Linear, show(&[p, q, r]))));
    }
    (n, None)
}

/// Evaluates the three axioms over all triples from `sample`, or over random
/// triples; the thin axiom quantifies over the sample.
pub fn check_axioms<O: IntervalOracle, R: Rng>(
    o: &O,
    sample: &[O::Point],
    sampling: Sampling<'_, R>,
) -> AxiomReport {
    let mut checked = 0;
    let mut run = |p: &O::Point, q: &O::Point, r: &O::Point| {
        let (n, bad) = check_triple(o, sample, p, q, r);
        checked += n;
        bad
    };
    match sampling {
        Sampling::Exhaustive => {
            for p in sample {
                for q in sample {
                    for r in sample {
                        if let Some(c) = run(p, q, r) {
                            return AxiomReport {
                                checked,
                                counterexample: Some(c),
                            };
                        }
                    }
                }
            }
        }
        Sampling::Random { triples, rng } => {
            for _ in 0..triples {
                let mut rng = rng.borrow_mut();
                let (p, q, r) = (
                    sample.choose(&mut *rng),
                    sample.choose(&mut *rng),
                    sample.choose(&mut *rng),
                );
                drop(rng);
                if let (Some(p), Some(q), Some(r)) = (p, q, r) {
                    if let Some(c) = run(p, q, r) {
                        return AxiomReport {
                            checked,
                            counterexample: Some(c),
                        };
                    }
                }
            }
        }
    }
    AxiomReport {
        checked,
        counterexample: None,
    }
}

/// A point of a finite real pretree: a vertex, or a point inside an edge at
/// `offset ∈ (0, length)` from the edge's first endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    Vertex(usize),
    Edge { edge: usize, offset: Q },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Vertex(v) => write!(f, "v{v}"),
            Location::Edge { edge, offset } => write!(f, "e{edge}:{offset}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub length: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteRealPretree {
    pub num_vertices: usize,
    pub edges: Vec<TreeEdge>,
    #[serde(skip)]
    adj: Vec<Vec<(usize, usize)>>,
    #[serde(skip)]
    dv: Vec<Vec<Q>>,
}

/// A closed geodesic segment: ordered vertices strictly inside and the pieces
/// `(edge, from offset, to offset)` it covers, in order from `p` to `q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub p: Location,
    pub q: Location,
    pub length: Q,
    pub vertices: Vec<usize>,
    pub pieces: Vec<(usize, Q, Q)>,
}

/// A direction at a base point (or at a convex set, via its attaching point),
/// given by a representative point inside it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Direction {
    pub base: Location,
    pub representative: Location,
}

/// The convex hull of finitely many points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subtree {
    pub points: Vec<Location>,
}

/// Bounds on input numbers that keep the `i128` arithmetic of distances,
/// midpoints and projections far from overflow.
pub const MAX_VERTICES: usize = 1024;
pub const MAX_DENOMINATOR: i128 = 1 << 20;
pub const MAX_TOTAL_LENGTH: i128 = 1 << 20;
const MAX_TREE_DENOMINATOR: i128 = 1 << 30;

/// Denominator at most `MAX_DENOMINATOR` and size at most `MAX_TOTAL_LENGTH`.
pub fn is_bounded(q: &Q) -> bool {
    *q.denom() <= MAX_DENOMINATOR
        && q.numer().unsigned_abs() <= (MAX_TOTAL_LENGTH * q.denom()) as u128
}

impl FiniteRealPretree {
    pub fn new(num_vertices: usize, edges: Vec<TreeEdge>) -> Result<Self> {
        if num_vertices == 0 || num_vertices > MAX_VERTICES {
            return Err(Error::Invalid(format!(
                "a tree needs 1..={MAX_VERTICES} vertices"
            )));
        }
        if edges.len() + 1 != num_vertices {
            return Err(Error::Invalid(format!(
                "{} vertices need {} edges",
                num_vertices,
                num_vertices - 1
            )));
        }
        let mut adj = vec![Vec::new(); num_vertices];
        for (i, e) in edges.iter().enumerate() {
            if e.a >= num_vertices || e.b >= num_vertices || e.a == e.b {
                return Err(Error::Invalid(format!("edge {i} has bad endpoints")));
            }
            if !e.length.is_positive() {
                return Err(Error::Invalid(format!("edge {i} has non-positive length")));
            }
            if !is_bounded(&e.length) {
                return Err(Error::Invalid(format!("edge {i} length out of range")));
            }
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        let common = edges.iter().try_fold(1i128, |l, e| {
            Some(l.lcm(e.length.denom())).filter(|l| *l <= MAX_TREE_DENOMINATOR)
        });
        let total = edges.iter().map(|e| e.length).fold(Q::zero(), |a, b| a + b);
        if common.is_none() || total > Q::from_integer(MAX_TOTAL_LENGTH) {
            return Err(Error::Invalid("edge lengths out of range".into()));
        }
        let mut dv = vec![vec![Q::zero(); num_vertices]; num_vertices];
        for s in 0..num_vertices {
            let mut seen = vec![false; num_vertices];
            seen[s] = true;
            let mut stack = vec![s];
            let mut count = 1;
            while let Some(u) = stack.pop() {
                for &(w, e) in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        dv[s][w] = dv[s][u] + edges[e].length;
                        stack.push(w);
                    }
                }
            }
            if count != num_vertices {
                return Err(Error::Invalid("tree is not connected".into()));
            }
        }
        Ok(FiniteRealPretree {
            num_vertices,
            edges,
            adj,
            dv,
        })
    }

    /// Point at `offset` along `edge`, snapped to an endpoint at 0 or the length.
    pub fn at(&self, edge: usize, offset: Q) -> Result<Location> {
        let e = self
            .edges
            .get(edge)
            .ok_or_else(|| Error::Invalid(format!("no edge {edge}")))?;
        if offset.is_negative() || offset > e.length {
            return Err(Error::Invalid(format!(
                "offset {offset} outside edge {edge}"
            )));
        }
        Ok(if offset.is_zero() {
            Location::Vertex(e.a)
        } else if offset == e.length {
            Location::Vertex(e.b)
        } else {
            Location::Edge { edge, offset }
        })
    }

    pub fn is_valid(&self, p: &Location) -> bool {
        match p {
            Location::Vertex(v) => *v < self.num_vertices,
            Location::Edge { edge, offset } => self
                .edges
                .get(*edge)
                .map(|e| offset.is_positive() && *offset < e.length)
                .unwrap_or(false),
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = Location> {
        (0..self.num_vertices).map(Location::Vertex)
    }

    fn dist_vertex(&self, v: usize, p: &Location) -> Q {
        match p {
            Location::Vertex(w) => self.dv[v][*w],
            Location::Edge { edge, offset } => {
                let e = &self.edges[*edge];
                (self.dv[v][e.a] + offset).min(self.dv[v][e.b] + e.length - offset)
            }
        }
    }

    pub fn dist(&self, p: &Location, q: &Location) -> Q {
        match (p, q) {
            (Location::Vertex(v), _) => self.dist_vertex(*v, q),
            (_, Location::Vertex(w)) => self.dist_vertex(*w, p),
            (
                Location::Edge {
                    edge: e1,
                    offset: o1,
                },
                Location::Edge {
                    edge: e2,
                    offset: o2,
                },
            ) => {
                if e1 == e2 {
                    return (o1 - o2).abs();
                }
                let e = &self.edges[*e1];
                (self.dist_vertex(e.a, q) + o1).min(self.dist_vertex(e.b, q) + e.length - o1)
            }
        }
    }

    pub fn between(&self, p: &Location, q: &Location, r: &Location) -> bool {
        self.dist(p, r) + self.dist(r, q) == self.dist(p, q)
    }

    fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u].iter().find(|&&(w, _)| w == v).map(|&(_, e)| e)
    }

    /// Offset of `p` along `edge`, when `p` is on that closed edge.
    fn offset_on(&self, edge: usize, p: &Location) -> Option<Q> {
        let e = &self.edges[edge];
        match p {
            Location::Vertex(v) if *v == e.a => Some(Q::zero()),
            Location::Vertex(v) if *v == e.b => Some(e.length),
            Location::Edge { edge: f, offset } if *f == edge => Some(*offset),
            _ => None,
        }
    }

    fn edge_of(&self, p: &Location, q: &Location) -> usize {
        match (p, q) {
            (Location::Edge { edge, .. }, _) | (_, Location::Edge { edge, .. }) => *edge,
            (Location::Vertex(u), Location::Vertex(v)) => {
                self.edge_between(*u, *v).expect("adjacent vertices")
            }
        }
    }

    /// The geodesic `[p, q]`.
    pub fn interval(&self, p: &Location, q: &Location) -> Segment {
        let length = self.dist(p, q);
        let mut inner: Vec<(Q, usize)> = (0..self.num_vertices)
            .map(Location::Vertex)
            .filter(|v| v != p && v != q && self.between(p, q, v))
            .map(|v| match v {
                Location::Vertex(w) => (self.dist(p, &v), w),
                _ => unreachable!(),
            })
            .collect();
        inner.sort();
        let vertices: Vec<usize> = inner.iter().map(|&(_, w)| w).collect();
        let mut stops = vec![p.clone()];
        stops.extend(vertices.iter().map(|&w| Location::Vertex(w)));
        stops.push(q.clone());
        let mut pieces = Vec::new();
        for w in stops.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            let e = self.edge_of(&w[0], &w[1]);
            let a = self.offset_on(e, &w[0]).expect("stop on edge");
            let b = self.offset_on(e, &w[1]).expect("stop on edge");
            pieces.push((e, a, b));
        }
        Segment {
            p: p.clone(),
            q: q.clone(),
            length,
            vertices,
            pieces,
        }
    }

    /// The point of `[p, q]` at distance `t` from `p`, clamped to the segment.
    pub fn point_at(&self, p: &Location, q: &Location, t: Q) -> Location {
        if !t.is_positive() {
            return p.clone();
        }
        let seg = self.interval(p, q);
        let mut left = t;
        for (e, a, b) in &seg.pieces {
            let len = (b - a).abs();
            if left <= len {
                let off = if b >= a { a + left } else { a - left };
                return self.at(*e, off).expect("offset on edge");
            }
            left -= len;
        }
        q.clone()
    }

    /// The unique point of `[p,q] ∩ [q,r] ∩ [p,r]`.
    pub fn median(&self, p: &Location, q: &Location, r: &Location) -> Location {
        let t = (self.dist(p, q) + self.dist(p, r) - self.dist(q, r)) / Q::from_integer(2);
        self.point_at(p, q, t)
    }

    pub fn valence(&self, p: &Location) -> usize {
        match p {
            Location::Vertex(v) => self.adj[*v].len(),
            Location::Edge { .. } => 2,
        }
    }

    pub fn is_branch_point(&self, p: &Location) -> bool {
        self.valence(p) >= 3
    }

    /// One direction per component of `T ∖ {p}`.
    pub fn directions_at(&self, p: &Location) -> Vec<Direction> {
        let half = |x: Q| x / Q::from_integer(2);
        match p {
            Location::Vertex(v) => self.adj[*v]
                .iter()
                .map(|&(_, e)| Direction {
                    base: p.clone(),
                    representative: Location::Edge {
                        edge: e,
                        offset: half(self.edges[e].length),
                    },
                })
                .collect(),
            Location::Edge { edge, offset } => {
                let len = self.edges[*edge].length;
                vec![
                    Direction {
                        base: p.clone(),
                        representative: Location::Edge {
                            edge: *edge,
                            offset: half(*offset),
                        },
                    },
                    Direction {
                        base: p.clone(),
                        representative: Location::Edge {
                            edge: *edge,
                            offset: half(*offset + len),
                        },
                    },
                ]
            }
        }
    }

    /// `q` lies in the direction `d`: `q ≠ base` and `base ∉ [rep, q]`.
    pub fn in_direction(&self, d: &Direction, q: &Location) -> bool {
        *q != d.base && !self.between(&d.representative, q, &d.base)
    }

    pub fn convex_hull(&self, points: &[Location]) -> Result<Subtree> {
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(Subtree {
            points: points.to_vec(),
        })
    }

    pub fn in_subtree(&self, c: &Subtree, x: &Location) -> bool {
        let s0 = &c.points[0];
        c.points.iter().any(|s| self.between(s0, s, x))
    }

    /// The point of `c` closest to `p`.
    pub fn project(&self, p: &Location, c: &Subtree) -> Result<Location> {
        let s0 = c.points.first().ok_or(Error::EmptyDomain)?;
        let mut best = s0.clone();
        let mut best_d = self.dist(p, s0);
        for s in &c.points[1..] {
            let m = self.median(p, s0, s);
            let d = self.dist(p, &m);
            if d < best_d {
                best_d = d;
                best = m;
            }
        }
        Ok(best)
    }

    /// Edge pieces `(edge, lo, hi)` with `lo ≤ hi` covered by the subtree,
    /// merged per edge, plus the vertices it contains.
    pub fn subtree_pieces(&self, c: &Subtree) -> (Vec<(usize, Q, Q)>, Vec<usize>) {
        let mut per_edge: BTreeMap<usize, Vec<(Q, Q)>> = BTreeMap::new();
        let s0 = &c.points[0];
        for s in &c.points {
            for (e, a, b) in self.interval(s0, s).pieces {
                per_edge.entry(e).or_default().push((a.min(b), a.max(b)));
            }
        }
        let mut pieces = Vec::new();
        for (e, mut iv) in per_edge {
            iv.sort();
            let mut cur = iv[0];
            for &(lo, hi) in &iv[1..] {
                if lo <= cur.1 {
                    cur.1 = cur.1.max(hi);
                } else {
                    pieces.push((e, cur.0, cur.1));
                    cur = (lo, hi);
                }
            }
            pieces.push((e, cur.0, cur.1));
        }
        let vertices = (0..self.num_vertices)
            .filter(|&v| self.in_subtree(c, &Location::Vertex(v)))
            .collect();
        (pieces, vertices)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("vertices {}\n", self.num_vertices);
        for e in &self.edges {
            out.push_str(&format!("edge {} {} {}\n", e.a, e.b, e.length));
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph pretree {\n");
        for v in 0..self.num_vertices {
            out.push_str(&format!("  v{v};\n"));
        }
        for (i, e) in self.edges.iter().enumerate() {
            out.push_str(&format!(
                "  v{} -- v{} [label=\"e{i}: {}\"];\n",
                e.a, e.b, e.length
            ));
        }
        out.push_str("}\n");
        out
    }
}

impl IntervalOracle for FiniteRealPretree {
    type Point = Location;

    fn between(&self, p: &Location, q: &Location, r: &Location) -> bool {
        FiniteRealPretree::between(self, p, q, r)
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

const MAX_PARSED: u128 = 1 << 100;

pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (i128, i128) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (b != 0 && a.unsigned_abs() <= MAX_PARSED && b.unsigned_abs() <= MAX_PARSED)
            .then(|| Q::new(a, b));
    }
    if let Some((i, f)) = s.split_once('.') {
        if f.is_empty() || f.len() > 18 || !f.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let neg = i.starts_with('-');
        let ip: i128 = if i.is_empty() || i == "-" {
            0
        } else {
            i.parse().ok()?
        };
        let den = 10i128.checked_pow(f.len() as u32)?;
        let fp: i128 = f.parse().ok()?;
        let num = ip.checked_abs()?.checked_mul(den)?.checked_add(fp)?;
        return (num.unsigned_abs() <= MAX_PARSED)
            .then(|| Q::new(if neg { -num } else { num }, den));
    }
    s.parse::<i128>()
        .ok()
        .filter(|a| a.unsigned_abs() <= MAX_PARSED)
        .map(Q::from_integer)
}

/// Parses the text format; `#` starts a comment.
pub fn parse_pretree(text: &str) -> Result<FiniteRealPretree> {
    let mut n = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body.split_whitespace().collect();
        match parts[0] {
            "vertices" => {
                if n.is_some() {
                    return Err(perr(line, "duplicate vertices line"));
                }
                let k: usize = parts
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| perr(line, "expected a vertex count"))?;
                if parts.len() != 2 || k == 0 || k > MAX_VERTICES {
                    return Err(perr(
                        line,
                        format!("vertex count must be in 1..={MAX_VERTICES}"),
                    ));
                }
                n = Some(k);
            }
            "edge" => {
                if parts.len() != 4 {
                    return Err(perr(line, "expected: edge A B LENGTH"));
                }
                let a: usize = parts[1].parse().map_err(|_| perr(line, "bad endpoint"))?;
                let b: usize = parts[2].parse().map_err(|_| perr(line, "bad endpoint"))?;
                let length = parse_rational(parts[3]).ok_or_else(|| perr(line, "bad length"))?;
                edges.push(TreeEdge { a, b, length });
            }
            other => return Err(perr(line, format!("unknown keyword {other:?}"))),
        }
    }
    let n = n.ok_or_else(|| perr(0, "missing vertices line"))?;
    FiniteRealPretree::new(n, edges).map_err(|e| perr(0, e.to_string()))
}

/// Parses `v3` or `e2:1/2`.
pub fn parse_location(t: &FiniteRealPretree, s: &str) -> Result<Location> {
    let s = s.trim();
    let bad = || Error::Invalid(format!("bad location {s:?}"));
    if let Some(v) = s.strip_prefix('v') {
        let v: usize = v.parse().map_err(|_| bad())?;
        let p = Location::Vertex(v);
        return if t.is_valid(&p) { Ok(p) } else { Err(bad()) };
    }
    let rest = s.strip_prefix('e').ok_or_else(bad)?;
    let (e, off) = rest.split_once(':').ok_or_else(bad)?;
    let e: usize = e.parse().map_err(|_| bad())?;
    let off = parse_rational(off).filter(is_bounded).ok_or_else(bad)?;
    t.at(e, off)
}

/// A similarity between convex subtrees: the hull of `domain` is mapped onto
/// the hull of `image`, sending `domain[i]` to `image[i]` and multiplying
/// distances by `scale`. Scale 1 gives the length-preserving isomorphisms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialPretreeIso {
    pub domain: Vec<Location>,
    pub image: Vec<Location>,
    pub scale: Q,
}

impl PartialPretreeIso {
    pub fn new(
        t: &FiniteRealPretree,
        domain: Vec<Location>,
        image: Vec<Location>,
        scale: Q,
    ) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if domain.len() != image.len() || !scale.is_positive() {
            return Err(Error::Invalid(
                "domain and image must match and scale must be positive".into(),
            ));
        }
        if domain.iter().chain(&image).any(|p| !t.is_valid(p)) {
            return Err(Error::Invalid("location outside the tree".into()));
        }
        for i in 0..domain.len() {
            for j in 0..i {
                if t.dist(&image[i], &image[j]) != scale * t.dist(&domain[i], &domain[j]) {
                    return Err(Error::Invalid(format!(
                        "points {j} and {i} are not scaled consistently"
                    )));
                }
            }
        }
        Ok(PartialPretreeIso {
            domain,
            image,
            scale,
        })
    }

    pub fn isometry(
        t: &FiniteRealPretree,
        domain: Vec<Location>,
        image: Vec<Location>,
    ) -> Result<Self> {
        Self::new(t, domain, image, Q::one())
    }

    pub fn domain_subtree(&self) -> Subtree {
        Subtree {
            points: self.domain.clone(),
        }
    }

    pub fn image_subtree(&self) -> Subtree {
        Subtree {
            points: self.image.clone(),
        }
    }

    pub fn apply(&self, t: &FiniteRealPretree, x: &Location) -> Option<Location> {
        let s0 = &self.domain[0];
        let j = (0..self.domain.len()).find(|&j| t.between(s0, &self.domain[j], x))?;
        Some(t.point_at(&self.image[0], &self.image[j], self.scale * t.dist(s0, x)))
    }

    /// Fixed points along each segment `[domain[0], domain[j]]`: isolated
    /// solutions and the ends of fixed sub-segments.
    pub fn fixed_points(&self, t: &FiniteRealPretree) -> Vec<Location> {
        let mut out: Vec<Location> = Vec::new();
        let (s0, t0) = (&self.domain[0], &self.image[0]);
        let mu = self.scale;
        for j in 0..self.domain.len() {
            let (sj, tj) = (&self.domain[j], &self.image[j]);
            let len = t.dist(s0, sj);
            let gamma = |x: Q| t.point_at(s0, sj, x);
            let delta = |x: Q| t.point_at(t0, tj, mu * x);
            let mut breaks = vec![Q::zero(), len];
            for v in t.vertices() {
                if t.between(s0, sj, &v) {
                    breaks.push(t.dist(s0, &v));
                }
                if t.between(t0, tj, &v) {
                    let x = t.dist(t0, &v) / mu;
                    if x <= len {
                        breaks.push(x);
                    }
                }
            }
            breaks.sort();
            breaks.dedup();
            let mut push = |p: Location| {
                if !out.contains(&p) {
                    out.push(p);
                }
            };
            for &x in &breaks {
                if gamma(x) == delta(x) {
                    push(gamma(x));
                }
            }
            for w in breaks.windows(2) {
                let (a, b) = (w[0], w[1]);
                let m = (a + b) / Q::from_integer(2);
                let m2 = (m + b) / Q::from_integer(2);
                let (
                    Location::Edge {
                        edge: e1,
                        offset: o1,
                    },
                    Location::Edge {
                        edge: e2,
                        offset: o2,
                    },
                ) = (gamma(m), delta(m))
                else {
                    continue;
                };
                if e1 != e2 {
                    continue;
                }
                let slope = |p: Location, q: Q| match p {
                    Location::Edge { offset, .. } => (offset - q) / (m2 - m),
                    _ => unreachable!("no vertex inside a piece"),
                };
                let (v1, v2) = (slope(gamma(m2), o1), slope(delta(m2), o2));
                if v1 == v2 {
                    if o1 == o2 {
                        push(gamma(a));
                        push(gamma(b));
                    }
                } else {
                    let x = m + (o2 - o1) / (v1 - v2);
                    if x > a && x < b {
                        push(gamma(x));
                    }
                }
            }
        }
        out
    }

    pub fn fixed_set(&self, t: &FiniteRealPretree) -> Option<Subtree> {
        let pts = self.fixed_points(t);
        (!pts.is_empty()).then_some(Subtree { points: pts })
    }

    /// Directions at the fixed set that `f` maps into themselves.
    pub fn fixed_directions(&self, t: &FiniteRealPretree) -> Vec<Direction> {
        let Some(fix) = self.fixed_set(t) else {
            return Vec::new();
        };
        let mut bases: Vec<Location> = fix.points.clone();
        bases.extend(t.vertices().filter(|v| t.in_subtree(&fix, v)));
        bases.sort();
        bases.dedup();
        let mut out = Vec::new();
        for c in &bases {
            for d in t.directions_at(c) {
                if fix.points.iter().any(|p| t.in_direction(&d, p)) {
                    continue;
                }
                // a domain point in d, if the domain reaches into it
                let Some(i) = (0..self.domain.len()).find(|&i| t.in_direction(&d, &self.domain[i]))
                else {
                    continue;
                };
                if t.in_direction(&d, &self.image[i]) {
                    out.push(d);
                }
            }
        }
        out
    }

    /// Rigid: the fixed set is empty or no direction at it is fixed.
    pub fn is_rigid(&self, t: &FiniteRealPretree) -> bool {
        self.fixed_directions(t).is_empty()
    }
}
