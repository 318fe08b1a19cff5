//! Equivariant blow-ups of the Bass–Serre tree of a free splitting along
//! line fibers over its labeled vertices: the attaching-point solver, the
//! stitched interval oracle, collapse, the induced map, loxodromic
//! classification and expansion checks, all exact over Q(φ).
//!
//! A tree vertex is the tight graph-of-groups path from the base vertex that
//! reaches it, with an empty trailing element; the vertex is the coset of that
//! path's label. A fiber point `ι(γ, t)` sits over the labeled tree vertex `γ`
//! at coordinate `t` of the vertex line, and `ι(γh, t) = ι(γ, h·t)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automorphism::Automorphism;
use crate::error::{Error, Result};
use crate::graph::{Edge, FreeSplitting, GPath, Marking, TopRep, Vertex};
use crate::growth::{cyclic_form, CyclicForm};
use crate::parse::{parse_automorphism, parse_word};
use crate::pretree::{FiniteRealPretree, IntervalOracle, Location, TreeEdge};
use crate::quad::Quad;
use crate::stallings::SubgroupGraph;
use crate::word::{enumerate_words, Word};

/// Largest materialized ball radius.
pub const MAX_DEPTH: usize = 6;
/// Coefficient size cap for solver iterates.
const MAX_BITS: u64 = 1 << 14;

/// The tree over one labeled vertex: a point, or the line with `G_v` acting
/// by translations `t ↦ t + ρ(g)` (`ρ` given on the vertex-group basis) and
/// the homothety `t ↦ λt + offset` into the line over the image vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VertexForest {
    Degenerate,
    Line {
        lambda: Quad,
        weights: Vec<Quad>,
        #[serde(default = "Quad::zero")]
        offset: Quad,
    },
}

/// A direction orbit at a labeled vertex: a germ of the quotient graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DirectionRep {
    pub vertex: usize,
    pub germ: i32,
}

/// A splitting with a simplicial representative and vertex forests: the data
/// of the attaching-point equations `p_d = h⁻¹(s_d · p_{∂d})`.
#[derive(Clone, Debug)]
pub struct Stitching {
    pub rep: TopRep,
    pub forests: Vec<VertexForest>,
    pub lambda: Quad,
    pub directions: Vec<DirectionRep>,
    /// `∂` on direction indices.
    pub partner: Vec<usize>,
    /// `s_{∂d}`: the vertex element preceding the image germ.
    pub twist: Vec<Word>,
    marking: Marking,
    groups: Vec<Option<SubgroupGraph>>,
    dir_index: BTreeMap<(usize, i32), usize>,
    /// Path from the base to `f(base)` reading `x_base⁻¹`, so that
    /// `γ ↦ lift · f(γ)` is `φ`-equivariant on the tree.
    lift: GPath,
}

/// Contraction equations on lines: `p_d = apply(d, p_{partner(d)})`, each map
/// a homothety of ratio `1/λ`.
pub trait AttachingEquations {
    fn len(&self) -> usize;
    fn partner(&self, d: usize) -> usize;
    fn apply(&self, d: usize, t: &Quad) -> Quad;
    fn lambda(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stand-alone line equations `p_d = (p_{∂d} + shift_d)/λ`.
#[derive(Clone, Debug)]
pub struct LineEquations {
    pub lambda: Quad,
    pub shift: Vec<Quad>,
    pub partner: Vec<usize>,
}

impl AttachingEquations for LineEquations {
    fn len(&self) -> usize {
        self.shift.len()
    }
    fn partner(&self, d: usize) -> usize {
        self.partner[d]
    }
    fn apply(&self, d: usize, t: &Quad) -> Quad {
        (t + &self.shift[d]) / &self.lambda
    }
    fn lambda(&self) -> f64 {
        self.lambda.to_f64()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AttachingChoice {
    pub points: Vec<Quad>,
    pub residual: f64,
    pub iterations: usize,
    /// Residual before each update; `history[0]` is the initial residual.
    pub history: Vec<f64>,
}

fn residual_of<E: AttachingEquations>(eq: &E, p: &[Quad]) -> (Vec<Quad>, f64) {
    let next: Vec<Quad> = (0..eq.len())
        .map(|d| eq.apply(d, &p[eq.partner(d)]))
        .collect();
    let r = next
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b).abs().to_f64())
        .fold(0.0, f64::max);
    (next, r)
}

/// Iterates `p ↦ (h_d(p_{∂d}))_d` until the residual drops below `tol`.
pub fn solve_attaching_points<E: AttachingEquations>(
    eq: &E,
    init: Vec<Quad>,
    tol: f64,
    max_iter: usize,
) -> Result<AttachingChoice> {
    if init.len() != eq.len() {
        return Err(Error::Invalid(
            "one initial point per direction required".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let mut p = init;
    let mut history = Vec::new();
    loop {
        let (next, r) = residual_of(eq, &p);
        history.push(r);
        if r < tol {
            let iterations = history.len() - 1;
            return Ok(AttachingChoice {
                points: p,
                residual: r,
                iterations,
                history,
            });
        }
        if history.len() > max_iter || next.iter().any(|x| x.bits() > MAX_BITS) {
            return Err(Error::NoConvergence(format!(
                "residual {r:e} after {} iterations",
                history.len() - 1
            )));
        }
        p = next;
    }
}

/// The unique solution, cycle by cycle of `∂`: the composite along a cycle
/// is affine with slope `λ^-k`, so its fixed point is `B/(1 - A)`.
pub fn exact_attaching_points<E: AttachingEquations>(eq: &E) -> Result<Vec<Quad>> {
    let n = eq.len();
    let mut out: Vec<Option<Quad>> = vec![None; n];
    for d0 in 0..n {
        if out[d0].is_some() {
            continue;
        }
        let mut cycle = vec![d0];
        let mut d = eq.partner(d0);
        while d != d0 {
            if cycle.len() > n {
                return Err(Error::Invalid("partner map is not a permutation".into()));
            }
            cycle.push(d);
            d = eq.partner(d);
        }
        // p_{d0} = F_{c0}(F_{c1}(... F_{c(k-1)}(p_{d0})))
        let compose = |t: Quad| cycle.iter().rev().fold(t, |acc, &c| eq.apply(c, &acc));
        let b = compose(Quad::zero());
        let a = compose(Quad::one()) - &b;
        let denom = Quad::one() - a;
        if denom.is_zero() {
            return Err(Error::NoConvergence(
                "cycle map is not a contraction".into(),
            ));
        }
        let mut cur = b / denom;
        out[d0] = Some(cur.clone());
        for &c in cycle.iter().skip(1).rev() {
            cur = eq.apply(c, &cur);
            out[c] = Some(cur.clone());
        }
    }
    Ok(out
        .into_iter()
        .map(|x| x.expect("every direction lies on a cycle"))
        .collect())
}

impl Stitching {
    pub fn new(rep: TopRep, forests: Vec<VertexForest>) -> Result<Self> {
        let g = &rep.splitting;
        if g.system.len() != 1 {
            return Err(Error::Invalid(
                "blow-ups are built for a single component".into(),
            ));
        }
        if forests.len() != g.vertices.len() {
            return Err(Error::Invalid(
                "one vertex forest per splitting vertex required".into(),
            ));
        }
        if rep.emap.iter().any(|p| p.steps.len() != 1) {
            return Err(Error::NotSimplicial);
        }
        let marking = g.marking()?;
        let mut lambda: Option<Quad> = None;
        let mut groups = Vec::new();
        for (v, f) in forests.iter().enumerate() {
            let labeled = g.is_labeled(v);
            groups.push(labeled.then(|| SubgroupGraph::new(&g.vertices[v].group)));
            if let VertexForest::Line {
                lambda: l, weights, ..
            } = f
            {
                if !labeled {
                    return Err(Error::Invalid(format!(
                        "vertex {v} is unlabeled but has a line fiber"
                    )));
                }
                if weights.len() != g.vertices[v].group.len() {
                    return Err(Error::Invalid(format!(
                        "vertex {v}: one weight per vertex-group generator required"
                    )));
                }
                if *l <= Quad::one() {
                    return Err(Error::Invalid(format!(
                        "vertex {v}: the fiber homothety must expand"
                    )));
                }
                match &lambda {
                    Some(prev) if prev != l => {
                        return Err(Error::Invalid(
                            "fibers must share one stretch factor".into(),
                        ))
                    }
                    _ => lambda = Some(l.clone()),
                }
            }
        }
        for v in 0..forests.len() {
            let w = rep.vmap[v];
            let same = matches!(
                (&forests[v], &forests[w]),
                (VertexForest::Degenerate, VertexForest::Degenerate)
                    | (VertexForest::Line { .. }, VertexForest::Line { .. })
            );
            if g.is_labeled(v) && !same {
                return Err(Error::NotInvariant(format!(
                    "vertex {v} and its image carry different fiber kinds"
                )));
            }
        }
        let lambda = lambda.unwrap_or_else(Quad::one);
        let mut directions = Vec::new();
        let mut dir_index = BTreeMap::new();
        for v in g.labeled_vertices() {
            for s in g.germs_at(v) {
                dir_index.insert((v, s), directions.len());
                directions.push(DirectionRep { vertex: v, germ: s });
            }
        }
        let base = g.base[0];
        let lift = g.path_with_label(&marking, base, rep.vmap[base], &rep.prefix[base].inverse());
        let mut out = Stitching {
            rep,
            forests,
            lambda,
            directions,
            partner: Vec::new(),
            twist: Vec::new(),
            marking,
            groups,
            dir_index,
            lift,
        };
        for d in 0..out.directions.len() {
            let img = out.rep.step_image(out.directions[d].germ);
            let w = out.rep.splitting.step_start(img.steps[0]);
            let p = *out.dir_index.get(&(w, img.steps[0])).ok_or_else(|| {
                Error::NotInvariant("direction maps off the labeled vertices".into())
            })?;
            out.partner.push(p);
            out.twist.push(img.elems[0].clone());
        }
        // equivariance of the fiber homotheties: ρ_{f(v)}(Φ_v(b)) = λ ρ_v(b)
        for v in 0..out.forests.len() {
            if let VertexForest::Line { weights, .. } = &out.forests[v] {
                let w = out.rep.vmap[v];
                for (b, wt) in out.rep.splitting.vertices[v].group.iter().zip(weights) {
                    let img = out.rep.vertex_map(v, b);
                    if out.rho(w, &img) != &out.lambda * wt {
                        return Err(Error::NotInvariant(format!(
                            "vertex {v}: fiber homothety is not equivariant"
                        )));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn splitting(&self) -> &FreeSplitting {
        &self.rep.splitting
    }

    pub fn is_labeled(&self, v: usize) -> bool {
        self.rep.splitting.is_labeled(v)
    }

    /// Translation part of `h ∈ G_v` on the line over `v`.
    pub fn rho(&self, v: usize, h: &Word) -> Quad {
        let VertexForest::Line { weights, .. } = &self.forests[v] else {
            return Quad::zero();
        };
        if h.is_empty() {
            return Quad::zero();
        }
        let coords = self.groups[v]
            .as_ref()
            .and_then(|sg| sg.express(h))
            .expect("element of the vertex group");
        let mut out = Quad::zero();
        for &l in coords.letters() {
            let w = &weights[l.unsigned_abs() as usize - 1];
            out = if l > 0 { out + w } else { out - w };
        }
        out
    }

    pub fn act(&self, v: usize, h: &Word, t: &Quad) -> Quad {
        match self.forests[v] {
            VertexForest::Degenerate => Quad::zero(),
            VertexForest::Line { .. } => t + &self.rho(v, h),
        }
    }

    /// The fiber homothety from the line over `v` to the line over `f(v)`.
    pub fn hom(&self, v: usize, t: &Quad) -> Quad {
        match &self.forests[v] {
            VertexForest::Degenerate => Quad::zero(),
            VertexForest::Line { offset, .. } => &self.lambda * t + offset,
        }
    }

    pub fn hom_inv(&self, v: usize, t: &Quad) -> Quad {
        match &self.forests[v] {
            VertexForest::Degenerate => Quad::zero(),
            VertexForest::Line { offset, .. } => (t - offset) / &self.lambda,
        }
    }

    pub fn direction(&self, v: usize, germ: i32) -> usize {
        self.dir_index[&(v, germ)]
    }

    /// Defect `|h_v(p_d) − s_{∂d}·p_{∂d}|` of the ideal-stitching equation at `d`.
    pub fn defect(&self, choice: &[Quad], d: usize) -> Quad {
        let v = self.directions[d].vertex;
        let w = self.rep.vmap[v];
        (self.hom(v, &choice[d]) - self.act(w, &self.twist[d], &choice[self.partner[d]])).abs()
    }

    /// Basis words of the elements of `G_v` of ambient length at most `k`.
    fn group_elements(&self, v: usize, k: usize) -> Vec<Word> {
        let basis = &self.rep.splitting.vertices[v].group;
        if basis.is_empty() {
            return vec![Word::empty()];
        }
        let mut out = BTreeSet::new();
        for w in enumerate_words(basis.len(), k) {
            let mut x = Word::empty();
            for &l in w.letters() {
                let b = &basis[l.unsigned_abs() as usize - 1];
                x.append(&if l > 0 { b.clone() } else { b.inverse() });
            }
            if x.len() <= k {
                out.insert(x);
            }
        }
        let mut v: Vec<Word> = out.into_iter().collect();
        v.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        v
    }
}

impl AttachingEquations for Stitching {
    fn len(&self) -> usize {
        self.directions.len()
    }
    fn partner(&self, d: usize) -> usize {
        self.partner[d]
    }
    fn apply(&self, d: usize, t: &Quad) -> Quad {
        let v = self.directions[d].vertex;
        self.hom_inv(v, &self.act(self.rep.vmap[v], &self.twist[d], t))
    }
    fn lambda(&self) -> f64 {
        self.lambda.to_f64()
    }
}

/// A point of the blow-up.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlowPoint {
    /// An unlabeled tree vertex.
    Vertex { vertex: GPath },
    /// Interior point of the edge from `far` to its parent, `back` from `far`.
    Edge { far: GPath, back: Quad },
    /// `ι(vertex, t)`.
    Fiber { vertex: GPath, t: Quad },
}

/// A point of the base tree: `back` along the edge from `vertex` toward the
/// base, `back = 0` being the vertex itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BasePos {
    pub vertex: GPath,
    pub back: Quad,
}

/// A piece of a stitched interval, in order from its first endpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Piece {
    Vertex { vertex: GPath },
    Edge { far: GPath, from: Quad, to: Quad },
    Fiber { vertex: GPath, from: Quad, to: Quad },
}

impl Piece {
    fn length(&self) -> Quad {
        match self {
            Piece::Vertex { .. } => Quad::zero(),
            Piece::Edge { from, to, .. } | Piece::Fiber { from, to, .. } => (to - from).abs(),
        }
    }
}

fn is_prefix(a: &GPath, b: &GPath) -> bool {
    let k = a.steps.len();
    k <= b.steps.len() && a.steps[..] == b.steps[..k] && a.elems[..k] == b.elems[..k]
}

fn common_prefix(a: &GPath, b: &GPath) -> GPath {
    let mut k = 0;
    while k < a.steps.len()
        && k < b.steps.len()
        && a.steps[k] == b.steps[k]
        && a.elems[k] == b.elems[k]
    {
        k += 1;
    }
    let mut elems = a.elems[..k].to_vec();
    elems.push(Word::empty());
    GPath {
        start: a.start,
        steps: a.steps[..k].to_vec(),
        elems,
    }
}

fn parent(v: &GPath) -> GPath {
    let mut p = near_end(v);
    *p.elems.last_mut().unwrap() = Word::empty();
    p
}

/// `v` without its last step, keeping the element before that step.
fn near_end(v: &GPath) -> GPath {
    let mut p = v.clone();
    p.steps.pop();
    p.elems.pop();
    p
}

fn strip(mut p: GPath) -> (GPath, Word) {
    let h = std::mem::take(p.elems.last_mut().unwrap());
    (p, h)
}

/// `#steps + Σ|elements|` of a vertex path.
pub fn path_size(v: &GPath) -> usize {
    v.steps.len() + v.elems.iter().map(|h| h.len()).sum::<usize>()
}

fn half() -> Quad {
    Quad::ratio(1, 2)
}

fn anc(x: &BasePos, y: &BasePos) -> bool {
    if x.vertex == y.vertex {
        x.back >= y.back
    } else {
        is_prefix(&x.vertex, &y.vertex)
    }
}

fn lca(x: &BasePos, y: &BasePos) -> BasePos {
    if anc(x, y) {
        x.clone()
    } else if anc(y, x) {
        y.clone()
    } else {
        BasePos {
            vertex: common_prefix(&x.vertex, &y.vertex),
            back: Quad::zero(),
        }
    }
}

/// `r ∈ [p, q]` in the base tree.
pub fn base_between(p: &BasePos, q: &BasePos, r: &BasePos) -> bool {
    (anc(r, p) || anc(r, q)) && anc(&lca(p, q), r)
}

#[derive(Clone, Debug)]
enum Token {
    Vertex(GPath),
    Edge { far: GPath, from: Quad, to: Quad },
}

/// Base tokens from `x` up to its ancestor `l`.
fn up_tokens(x: &BasePos, l: &BasePos) -> Vec<Token> {
    let mut out = Vec::new();
    let (mut g, mut b) = (x.vertex.clone(), x.back.clone());
    if b.is_zero() {
        out.push(Token::Vertex(g.clone()));
    }
    loop {
        if g == l.vertex {
            if l.back > b {
                out.push(Token::Edge {
                    far: g,
                    from: b,
                    to: l.back.clone(),
                });
            }
            break;
        }
        out.push(Token::Edge {
            far: g.clone(),
            from: b,
            to: Quad::one(),
        });
        g = parent(&g);
        b = Quad::zero();
        out.push(Token::Vertex(g.clone()));
    }
    out
}

fn base_tokens(p: &BasePos, q: &BasePos) -> Vec<Token> {
    let l = lca(p, q);
    let mut up = up_tokens(p, &l);
    let mut down = up_tokens(q, &l);
    if let (Some(Token::Vertex(a)), Some(Token::Vertex(b))) = (up.last(), down.last()) {
        if a == b {
            down.pop();
        }
    }
    down.reverse();
    for t in down {
        up.push(match t {
            Token::Edge { far, from, to } => Token::Edge {
                far,
                from: to,
                to: from,
            },
            v => v,
        });
    }
    up
}

/// A finite ball of the blow-up with its sample points.
#[derive(Clone, Debug)]
pub struct BlowupBall {
    pub stitching: Stitching,
    pub choice: Vec<Quad>,
    pub depth: usize,
    /// Tree vertices of size at most `depth`, parents before children.
    pub vertices: Vec<GPath>,
    pub points: Vec<BlowPoint>,
}

/// Materializes the ball of radius `depth` (vertex-path size) with sample
/// points: every attaching point in the ball, fiber points around them and
/// edge midpoints.
pub fn build_blowup_ball(
    stitching: Stitching,
    choice: Vec<Quad>,
    depth: usize,
) -> Result<BlowupBall> {
    if depth > MAX_DEPTH {
        return Err(Error::DepthExceeded(format!(
            "ball radius {depth} exceeds {MAX_DEPTH}"
        )));
    }
    if choice.len() != stitching.directions.len() {
        return Err(Error::Invalid(
            "one attaching point per direction required".into(),
        ));
    }
    let g = stitching.splitting().clone();
    let root = GPath::trivial(g.base[0]);
    let mut ball = BlowupBall {
        stitching,
        choice,
        depth,
        vertices: Vec::new(),
        points: Vec::new(),
    };
    let mut children: Vec<Vec<GPath>> = Vec::new();
    let mut queue = VecDeque::from([root]);
    let mut cache: HashMap<(usize, usize), Vec<Word>> = HashMap::new();
    while let Some(v) = queue.pop_front() {
        let size = path_size(&v);
        let w = v.end(&g);
        let mut kids = Vec::new();
        if size < depth {
            let hs = cache
                .entry((w, depth - size - 1))
                .or_insert_with(|| ball.stitching.group_elements(w, depth - size - 1))
                .clone();
            for s in g.germs_at(w) {
                for h in &hs {
                    if h.is_empty() && v.steps.last() == Some(&-s) {
                        continue;
                    }
                    let mut c = v.clone();
                    c.right_mul(h);
                    c.append(&GPath::step(&g, s));
                    kids.push(c.clone());
                    queue.push_back(c);
                }
            }
        }
        ball.vertices.push(v);
        children.push(kids);
    }
    let mut points = Vec::new();
    for (v, kids) in ball.vertices.iter().zip(&children) {
        let w = v.end(&g);
        if !ball.stitching.is_labeled(w) {
            points.push(BlowPoint::Vertex { vertex: v.clone() });
        } else if ball.stitching.forests[w] == VertexForest::Degenerate {
            points.push(BlowPoint::Fiber {
                vertex: v.clone(),
                t: Quad::zero(),
            });
        } else {
            let mut ts: Vec<Quad> = kids.iter().map(|k| ball.attach_via_edge(v, k)).collect();
            if !v.steps.is_empty() {
                ts.push(ball.attach_via_edge(v, v));
            }
            ts.push(Quad::zero());
            ts.sort();
            ts.dedup();
            let mut extra = vec![
                ts[0].clone() - Quad::one(),
                ts[ts.len() - 1].clone() + Quad::one(),
            ];
            for pair in ts.windows(2) {
                extra.push((&pair[0] + &pair[1]) * half());
            }
            ts.extend(extra);
            ts.sort();
            ts.dedup();
            points.extend(ts.into_iter().map(|t| BlowPoint::Fiber {
                vertex: v.clone(),
                t,
            }));
        }
        if !v.steps.is_empty() {
            points.push(BlowPoint::Edge {
                far: v.clone(),
                back: half(),
            });
        }
    }
    ball.points = points;
    Ok(ball)
}

impl BlowupBall {
    fn graph(&self) -> &FreeSplitting {
        self.stitching.splitting()
    }

    pub fn root(&self) -> BlowPoint {
        let g = self.graph();
        let root = GPath::trivial(g.base[0]);
        self.at_vertex(root, Quad::zero())
    }

    pub fn base_pos(&self, p: &BlowPoint) -> BasePos {
        match p {
            BlowPoint::Vertex { vertex } | BlowPoint::Fiber { vertex, .. } => BasePos {
                vertex: vertex.clone(),
                back: Quad::zero(),
            },
            BlowPoint::Edge { far, back } => BasePos {
                vertex: far.clone(),
                back: back.clone(),
            },
        }
    }

    /// Attaching coordinate at `v` of the edge between `v` and `far`, where
    /// `far` is `v` itself (the edge to the parent) or a child of `v`.
    fn attach_via_edge(&self, v: &GPath, far: &GPath) -> Quad {
        let g = self.graph();
        let w = v.end(g);
        if far == v {
            let s = -*v.steps.last().expect("the base has no parent edge");
            self.choice[self.stitching.direction(w, s)].clone()
        } else {
            let k = far.steps.len();
            let s = far.steps[k - 1];
            let h = &far.elems[k - 1];
            self.stitching
                .act(w, h, &self.choice[self.stitching.direction(w, s)])
        }
    }

    /// Attaching coordinate at `v` of the direction containing `x ≠ v`.
    fn attach_toward(&self, v: &GPath, x: &BasePos) -> Quad {
        if x.vertex != *v && is_prefix(v, &x.vertex) {
            let k = v.steps.len();
            let g = self.graph();
            let w = v.end(g);
            let s = x.vertex.steps[k];
            let h = &x.vertex.elems[k];
            self.stitching
                .act(w, h, &self.choice[self.stitching.direction(w, s)])
        } else {
            self.attach_via_edge(v, v)
        }
    }

    fn fiber_coord(&self, x: &BlowPoint, bx: &BasePos, v: &GPath) -> Quad {
        match x {
            BlowPoint::Fiber { vertex, t } if vertex == v => t.clone(),
            _ => self.attach_toward(v, bx),
        }
    }

    /// Normal form of `ι(path, t)` for a tight path from the base whose
    /// trailing element is moved into the fiber coordinate.
    fn at_vertex(&self, path: GPath, t: Quad) -> BlowPoint {
        let w = path.end(self.graph());
        let (vertex, h) = strip(path);
        if self.stitching.is_labeled(w) {
            let t = self.stitching.act(w, &h, &t);
            BlowPoint::Fiber { vertex, t }
        } else {
            BlowPoint::Vertex { vertex }
        }
    }

    fn make_base(&self, far: GPath, back: Quad) -> BlowPoint {
        if back.is_zero() {
            let t = if self.stitching.is_labeled(far.end(self.graph())) {
                self.attach_via_edge(&far, &far)
            } else {
                Quad::zero()
            };
            self.at_vertex(far, t)
        } else if back == Quad::one() {
            let p = parent(&far);
            let t = if self.stitching.is_labeled(p.end(self.graph())) {
                self.attach_via_edge(&p, &far)
            } else {
                Quad::zero()
            };
            self.at_vertex(p, t)
        } else {
            BlowPoint::Edge { far, back }
        }
    }

    /// The point at distance `d ∈ [0, 1]` from the end of `a` along the edge
    /// leaving it by the step `s`; `a` is tight and may carry a trailing element.
    fn edge_point(&self, a: &GPath, s: i32, d: Quad) -> BlowPoint {
        let mut full = a.clone();
        full.append(&GPath::step(self.graph(), s));
        if full.steps.len() > a.steps.len() {
            self.make_base(full, Quad::one() - d)
        } else {
            self.make_base(full_end(a), d)
        }
    }

    /// `r ∈ [p, q]`, decided through the base tree and, over a labeled
    /// vertex, the fiber segment between the entry and exit coordinates.
    pub fn between(&self, p: &BlowPoint, q: &BlowPoint, r: &BlowPoint) -> bool {
        let (bp, bq, br) = (self.base_pos(p), self.base_pos(q), self.base_pos(r));
        if !base_between(&bp, &bq, &br) {
            return false;
        }
        match r {
            BlowPoint::Fiber { vertex, t } => {
                let a = self.fiber_coord(p, &bp, vertex);
                let b = self.fiber_coord(q, &bq, vertex);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                lo <= *t && *t <= hi
            }
            _ => true,
        }
    }

    /// The interval `[p, q]` as ordered pieces.
    pub fn pieces(&self, p: &BlowPoint, q: &BlowPoint) -> Vec<Piece> {
        let (bp, bq) = (self.base_pos(p), self.base_pos(q));
        let tokens = base_tokens(&bp, &bq);
        let mut out = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            match tok {
                Token::Edge { far, from, to } => out.push(Piece::Edge {
                    far: far.clone(),
                    from: from.clone(),
                    to: to.clone(),
                }),
                Token::Vertex(v) => {
                    if !self.stitching.is_labeled(v.end(self.graph())) {
                        out.push(Piece::Vertex { vertex: v.clone() });
                        continue;
                    }
                    let from = match i.checked_sub(1).map(|j| &tokens[j]) {
                        Some(Token::Edge { far, .. }) => self.attach_via_edge(v, far),
                        _ => self.fiber_coord(p, &bp, v),
                    };
                    let to = match tokens.get(i + 1) {
                        Some(Token::Edge { far, .. }) => self.attach_via_edge(v, far),
                        _ => self.fiber_coord(q, &bq, v),
                    };
                    out.push(Piece::Fiber {
                        vertex: v.clone(),
                        from,
                        to,
                    });
                }
            }
        }
        out
    }

    pub fn dist(&self, p: &BlowPoint, q: &BlowPoint) -> Quad {
        self.pieces(p, q)
            .iter()
            .fold(Quad::zero(), |acc, x| acc + x.length())
    }

    /// Distance in the tree obtained by collapsing every base edge.
    pub fn collapsed_dist(&self, p: &BlowPoint, q: &BlowPoint) -> Quad {
        self.pieces(p, q)
            .iter()
            .filter(|x| matches!(x, Piece::Fiber { .. }))
            .fold(Quad::zero(), |acc, x| acc + x.length())
    }

    /// The point of `[p, q]` at distance `t` from `p`, clamped.
    pub fn point_at(&self, p: &BlowPoint, q: &BlowPoint, t: &Quad) -> BlowPoint {
        if t.signum() <= 0 {
            return p.clone();
        }
        let mut left = t.clone();
        for piece in self.pieces(p, q) {
            let len = piece.length();
            if left <= len {
                return match piece {
                    Piece::Vertex { vertex } => self.at_vertex(vertex, Quad::zero()),
                    Piece::Fiber { vertex, from, to } => {
                        let t = if to >= from { from + left } else { from - left };
                        BlowPoint::Fiber { vertex, t }
                    }
                    Piece::Edge { far, from, to } => {
                        let b = if to >= from { from + left } else { from - left };
                        self.make_base(far, b)
                    }
                };
            }
            left = left - len;
        }
        q.clone()
    }

    pub fn median(&self, p: &BlowPoint, q: &BlowPoint, r: &BlowPoint) -> BlowPoint {
        let t = (self.dist(p, q) + self.dist(p, r) - self.dist(q, r)) * half();
        self.point_at(p, q, &t)
    }

    /// `x · p` for `x` in the (single) component.
    pub fn act(&self, x: &Word, p: &BlowPoint) -> BlowPoint {
        let g = self.graph();
        let mut path = g.loop_path(&self.stitching.marking, 0, x);
        match p {
            BlowPoint::Vertex { vertex } => {
                path.append(vertex);
                self.at_vertex(path, Quad::zero())
            }
            BlowPoint::Fiber { vertex, t } => {
                path.append(vertex);
                self.at_vertex(path, t.clone())
            }
            BlowPoint::Edge { far, back } => {
                path.append(&near_end(far));
                self.edge_point(&path, *far.steps.last().unwrap(), Quad::one() - back)
            }
        }
    }

    /// The lift of the representative to the base tree on a vertex path,
    /// keeping the trailing element.
    fn tree_image(&self, v: &GPath) -> GPath {
        let mut p = self.stitching.lift.clone();
        p.append(&self.stitching.rep.image_path(v));
        p.tighten();
        p
    }

    /// The induced map `f*`: the representative on base points and the fiber
    /// homotheties on fiber points.
    pub fn induced(&self, p: &BlowPoint) -> BlowPoint {
        match p {
            BlowPoint::Vertex { vertex } => self.at_vertex(self.tree_image(vertex), Quad::zero()),
            BlowPoint::Fiber { vertex, t } => {
                let w = vertex.end(self.graph());
                self.at_vertex(self.tree_image(vertex), self.stitching.hom(w, t))
            }
            BlowPoint::Edge { far, back } => {
                let s = *far.steps.last().unwrap();
                let mut a = self.tree_image(&near_end(far));
                let img = self.stitching.rep.step_image(s);
                a.right_mul(&img.elems[0]);
                self.edge_point(&a, img.steps[0], Quad::one() - back)
            }
        }
    }

    /// The piecewise-linear map stretching each half-edge over the fiber
    /// segment `[h(p_d), s_{∂d}·p_{∂d}]` followed by half of its image edge.
    /// It agrees with `induced` exactly when the choice is ideal.
    pub fn pl_image(&self, p: &BlowPoint) -> BlowPoint {
        let BlowPoint::Edge { far, back } = p else {
            return self.induced(p);
        };
        let mid = self.induced(&BlowPoint::Edge {
            far: far.clone(),
            back: half(),
        });
        let (end, u) = if *back <= half() {
            (self.make_base(far.clone(), Quad::zero()), back.clone())
        } else {
            (self.make_base(far.clone(), Quad::one()), Quad::one() - back)
        };
        let start = self.induced(&end);
        let len = self.dist(&start, &mid);
        self.point_at(&start, &mid, &(Quad::int(2) * u * len))
    }

    /// Pairs of distinct points with the same PL image: for every direction
    /// in the ball whose stitching equation fails, an edge point near the
    /// attaching point and the fiber point mapped onto the same spot.
    pub fn pl_injectivity_witnesses(&self) -> Vec<(BlowPoint, BlowPoint)> {
        let g = self.graph();
        let mut out = Vec::new();
        for v in &self.vertices {
            let w = v.end(g);
            if !self.stitching.is_labeled(w)
                || !matches!(self.stitching.forests[w], VertexForest::Line { .. })
            {
                continue;
            }
            // edges at v inside the ball: to the parent and to children
            let mut fars: Vec<GPath> = self
                .vertices
                .iter()
                .filter(|c| c.steps.len() == v.steps.len() + 1 && is_prefix(v, c))
                .cloned()
                .collect();
            if !v.steps.is_empty() {
                fars.push(v.clone());
            }
            for far in fars {
                let a = BlowPoint::Fiber {
                    vertex: v.clone(),
                    t: self.attach_via_edge(v, &far),
                };
                let edge_mid = BlowPoint::Edge {
                    far: far.clone(),
                    back: half(),
                };
                let fa = self.induced(&a);
                let fm = self.induced(&edge_mid);
                let total = self.dist(&fa, &fm);
                let fiber_len = &total - &half();
                if fiber_len.signum() <= 0 {
                    continue;
                }
                // edge parameter u with 2u·total = fiber_len/2
                let u = &fiber_len / &(Quad::int(4) * total);
                let e = if far == *v {
                    self.make_base(far.clone(), u)
                } else {
                    self.make_base(far.clone(), Quad::one() - u)
                };
                let y = self.pl_image(&e);
                let BlowPoint::Fiber { t: ty, .. } = &y else {
                    continue;
                };
                let BlowPoint::Fiber { t: t0, .. } = self.induced(&BlowPoint::Fiber {
                    vertex: v.clone(),
                    t: Quad::zero(),
                }) else {
                    continue;
                };
                let z = BlowPoint::Fiber {
                    vertex: v.clone(),
                    t: (ty - &t0) / &self.stitching.lambda,
                };
                if self.pl_image(&z) == y && z != e {
                    out.push((e, z));
                }
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let g = self.graph();
        let mut ids = HashMap::new();
        let mut out = String::from("graph blowup {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            ids.insert(v.clone(), i);
            let fiber: Vec<&Quad> = self
                .points
                .iter()
                .filter_map(|p| match p {
                    BlowPoint::Fiber { vertex, t } if vertex == v => Some(t),
                    _ => None,
                })
                .collect();
            let label = v.label(g).display_with(&g.system.names[0]);
            let label = if label.is_empty() {
                "1".to_string()
            } else {
                label
            };
            if fiber.is_empty() {
                out.push_str(&format!("  n{i} [label=\"{label}\"];\n"));
            } else {
                let lo = fiber
                    .iter()
                    .map(|t| t.to_f64())
                    .fold(f64::INFINITY, f64::min);
                let hi = fiber
                    .iter()
                    .map(|t| t.to_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                out.push_str(&format!(
                    "  n{i} [shape=box,label=\"{label}\\nfiber {} pts, span {:.3}\"];\n",
                    fiber.len(),
                    hi - lo
                ));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.steps.is_empty() {
                if let Some(p) = ids.get(&parent(v)) {
                    out.push_str(&format!("  n{p} -- n{i};\n"));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn full_end(a: &GPath) -> GPath {
    strip(a.clone()).0
}

impl IntervalOracle for BlowupBall {
    type Point = BlowPoint;

    fn between(&self, p: &BlowPoint, q: &BlowPoint, r: &BlowPoint) -> bool {
        BlowupBall::between(self, p, q, r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseReport {
    pub pairs: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<(BlowPoint, BlowPoint)>,
}

/// Compares `π([p, q]*)` with `[π p, π q]` computed in an independent
/// finite-tree model of the base ball, on random pairs of sample points.
pub fn collapse_check(ball: &BlowupBall, pairs: usize, seed: u64) -> Result<CollapseReport> {
    let index: HashMap<&GPath, usize> = ball
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let mut edges = Vec::new();
    let mut edge_of = HashMap::new();
    for (i, v) in ball.vertices.iter().enumerate().skip(1) {
        edge_of.insert(v.clone(), edges.len());
        edges.push(TreeEdge {
            a: index[&parent(v)],
            b: i,
            length: Ratio::from_integer(1),
        });
    }
    let tree = FiniteRealPretree::new(ball.vertices.len(), edges)?;
    let loc = |b: &BasePos| -> Option<Location> {
        if b.back.is_zero() {
            return index.get(&b.vertex).map(|&i| Location::Vertex(i));
        }
        let e = *edge_of.get(&b.vertex)?;
        let off = Quad::one() - b.back.clone();
        let (n, d) = (off.a.numer().to_i128()?, off.a.denom().to_i128()?);
        tree.at(e, Ratio::new(n, d)).ok()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CollapseReport {
        pairs: 0,
        mismatches: 0,
        first_mismatch: None,
    };
    for _ in 0..pairs {
        let p = ball.points.choose(&mut rng).expect("ball has points");
        let q = ball.points.choose(&mut rng).expect("ball has points");
        let (bp, bq) = (ball.base_pos(p), ball.base_pos(q));
        let (Some(lp), Some(lq)) = (loc(&bp), loc(&bq)) else {
            return Err(Error::DepthExceeded("sample point outside the ball".into()));
        };
        let pieces = ball.pieces(p, q);
        let mut visited: Vec<usize> = Vec::new();
        let mut base_len = Quad::zero();
        for piece in &pieces {
            match piece {
                Piece::Vertex { vertex } | Piece::Fiber { vertex, .. } => {
                    visited.push(index[vertex])
                }
                Piece::Edge { from, to, .. } => base_len = base_len + (to - from).abs(),
            }
        }
        let seg = tree.interval(&lp, &lq);
        let mut want: Vec<usize> = Vec::new();
        if let Location::Vertex(i) = lp {
            want.push(i);
        }
        want.extend(seg.vertices.iter().copied());
        if let Location::Vertex(i) = lq {
            if lp != lq {
                want.push(i);
            }
        }
        let len_ok = Quad::new(
            num_rational::BigRational::new(
                (*seg.length.numer()).into(),
                (*seg.length.denom()).into(),
            ),
            Default::default(),
        ) == base_len;
        report.pairs += 1;
        if visited != want || !len_ok {
            report.mismatches += 1;
            report.first_mismatch.get_or_insert((p.clone(), q.clone()));
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StitchViolation {
    pub vertex: usize,
    pub germ: i32,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedMapReport {
    /// Every stitching equation holds within tolerance.
    pub verdict: bool,
    pub violations: Vec<StitchViolation>,
    /// Sampled triples `(p, q, r)` with `r ∈ [p,q] ⟺ f*r ∈ [f*p, f*q]` tested.
    pub checks: usize,
    pub failures: usize,
}

/// Evaluates the ideal-stitching criterion per direction and samples
/// interval preservation under `f*`.
pub fn induced_map(ball: &BlowupBall, checks: usize, tol: f64, seed: u64) -> InducedMapReport {
    let st = &ball.stitching;
    let mut violations = Vec::new();
    for d in 0..st.directions.len() {
        let defect = st.defect(&ball.choice, d).to_f64();
        if defect > tol {
            violations.push(StitchViolation {
                vertex: st.directions[d].vertex,
                germ: st.directions[d].germ,
                defect,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: HashMap<&BlowPoint, BlowPoint> =
        ball.points.iter().map(|p| (p, ball.induced(p))).collect();
    let mut failures = 0;
    for _ in 0..checks {
        let p = ball.points.choose(&mut rng).unwrap();
        let q = ball.points.choose(&mut rng).unwrap();
        // bias r toward the interval so both outcomes are exercised
        let r = if rng.gen_bool(0.5) {
            let pieces = ball
                .points
                .iter()
                .filter(|r| ball.between(p, q, r))
                .collect::<Vec<_>>();
            *pieces.choose(&mut rng).unwrap_or(&p)
        } else {
            ball.points.choose(&mut rng).unwrap()
        };
        if ball.between(p, q, r) != ball.between(&images[p], &images[q], &images[r]) {
            failures += 1;
        }
    }
    InducedMapReport {
        verdict: violations.is_empty(),
        violations,
        checks,
        failures,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loxodromy {
    Elliptic {
        fixed: BlowPoint,
    },
    Loxodromic {
        translation: Quad,
        axis: (BlowPoint, BlowPoint),
    },
}

impl Loxodromy {
    pub fn is_loxodromic(&self) -> bool {
        matches!(self, Loxodromy::Loxodromic { .. })
    }
}

/// Classifies `x` by its translation length `d(p, x²p) − d(p, xp)` in the
/// blow-up; the witness is a fixed point or a fundamental segment of the axis.
pub fn classify_loxodromic(ball: &BlowupBall, x: &Word, budget: usize) -> Result<Loxodromy> {
    if x.len() > budget {
        return Err(Error::DepthExceeded(format!(
            "word of length {} exceeds the budget {budget}",
            x.len()
        )));
    }
    let p0 = ball.root();
    let p1 = ball.act(x, &p0);
    let p2 = ball.act(x, &p1);
    let ell = ball.dist(&p0, &p2) - ball.dist(&p0, &p1);
    if ell.signum() > 0 {
        let a = ball.median(&p0, &p1, &p2);
        let xa = ball.act(x, &a);
        Ok(Loxodromy::Loxodromic {
            translation: ell,
            axis: (a, xa),
        })
    } else {
        let mid = ball.point_at(&p0, &p1, &(ball.dist(&p0, &p1) * half()));
        Ok(Loxodromy::Elliptic { fixed: mid })
    }
}

/// Loxodromic in the base splitting or, when elliptic there, in the line over
/// the vertex whose group contains a conjugate.
pub fn loxodromic_by_parts(st: &Stitching, x: &Word) -> bool {
    let g = st.splitting();
    let path = g.loop_path(&st.marking, 0, x);
    match cyclic_form(g, &path) {
        CyclicForm::Loxodromic(_) => true,
        CyclicForm::Elliptic { vertex, elem } => !st.rho(vertex, &elem).is_zero(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExpansionOutcome {
    Expanding { fixed: BlowPoint, rate: Quad },
    NotExpanding { fixed: BlowPoint },
    NoFixedPointInBall,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionRow {
    pub word: Word,
    pub power: usize,
    pub fixed_points: usize,
    pub outcome: ExpansionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub rows: Vec<ExpansionRow>,
    pub expanding: usize,
    pub without_fixed_point: usize,
    /// Rows with several fixed points or a fixed point that does not repel.
    pub failures: usize,
}

/// For `γ = x ∘ f*ⁿ` with `|x| ≤ max_len`, `1 ≤ n ≤ n_max`: finds the fixed
/// points of `γ` over the ball's vertices and checks that a fixed point is
/// unique and repels at rate `λⁿ`. Fixed points are counted in the tree with
/// base edges collapsed: `f*` is isometric on edges, so a fixed edge joins
/// two fixed fiber points that collapse to one.
pub fn expanding_check(ball: &BlowupBall, max_len: usize, n_max: usize) -> Result<ExpansionReport> {
    let st = &ball.stitching;
    let g = st.splitting();
    let rank = g.system.ranks[0];
    let mut rows = Vec::new();
    let (mut expanding, mut without, mut failures) = (0, 0, 0);
    for x in enumerate_words(rank, max_len) {
        for n in 1..=n_max {
            let gamma = |p: &BlowPoint| {
                let mut q = p.clone();
                for _ in 0..n {
                    q = ball.induced(&q);
                }
                ball.act(&x, &q)
            };
            let mut fixed = Vec::new();
            let mut outcome = ExpansionOutcome::NoFixedPointInBall;
            for v in &ball.vertices {
                let w = v.end(g);
                if st.is_labeled(w) {
                    let y0 = gamma(&BlowPoint::Fiber {
                        vertex: v.clone(),
                        t: Quad::zero(),
                    });
                    let BlowPoint::Fiber { vertex: img, t: c } = &y0 else {
                        continue;
                    };
                    if img != v {
                        continue;
                    }
                    let BlowPoint::Fiber { t: c1, .. } = gamma(&BlowPoint::Fiber {
                        vertex: v.clone(),
                        t: Quad::one(),
                    }) else {
                        continue;
                    };
                    let slope = &c1 - c;
                    if slope == Quad::one() {
                        // the fiber is fixed pointwise or translated
                        if c.is_zero() {
                            fixed.push(y0.clone());
                            outcome = ExpansionOutcome::NotExpanding { fixed: y0 };
                        }
                        continue;
                    }
                    let q = c / &(Quad::one() - &slope);
                    let fp = BlowPoint::Fiber {
                        vertex: v.clone(),
                        t: q.clone(),
                    };
                    if gamma(&fp) != fp {
                        failures += 1;
                        continue;
                    }
                    let repels = [&q - &Quad::one(), &q + &Quad::one()].into_iter().all(|y| {
                        let yp = BlowPoint::Fiber {
                            vertex: v.clone(),
                            t: y,
                        };
                        let gy = gamma(&yp);
                        ball.dist(&fp, &gy) == &slope * &ball.dist(&fp, &yp)
                            && !ball.between(&yp, &gy, &fp)
                    });
                    fixed.push(fp.clone());
                    outcome = if repels && slope > Quad::one() {
                        ExpansionOutcome::Expanding {
                            fixed: fp,
                            rate: slope,
                        }
                    } else {
                        ExpansionOutcome::NotExpanding { fixed: fp }
                    };
                } else {
                    let p = BlowPoint::Vertex { vertex: v.clone() };
                    if gamma(&p) == p {
                        fixed.push(p.clone());
                        outcome = ExpansionOutcome::NotExpanding { fixed: p };
                    }
                }
            }
            match &outcome {
                ExpansionOutcome::Expanding { .. } => expanding += 1,
                ExpansionOutcome::NoFixedPointInBall => without += 1,
                ExpansionOutcome::NotExpanding { .. } => failures += 1,
            }
            let mut distinct: Vec<&BlowPoint> = Vec::new();
            for p in &fixed {
                if distinct
                    .iter()
                    .all(|d| !ball.collapsed_dist(d, p).is_zero())
                {
                    distinct.push(p);
                }
            }
            if distinct.len() > 1 {
                failures += 1;
            }
            rows.push(ExpansionRow {
                word: x.clone(),
                power: n,
                fixed_points: distinct.len(),
                outcome,
            });
        }
    }
    Ok(ExpansionReport {
        rows,
        expanding,
        without_fixed_point: without,
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Patchwork {
    pub choice: AttachingChoice,
    pub exact: Vec<Quad>,
    /// Largest `|numeric − exact|` over the directions.
    pub solver_error: f64,
    pub injectivity_witnesses: usize,
    pub homothety_pairs: usize,
    pub homothety_failures: usize,
}

/// Solves for the ideal attaching points, checks the solver against the
/// exact solution, builds the ball, checks the PL map is injective there, and
/// checks that after collapsing the simplicial edges `f*` is a `λ`-homothety.
pub fn simple_patchwork(
    st: &Stitching,
    depth: usize,
    tol: f64,
    pairs: usize,
    seed: u64,
) -> Result<(Patchwork, BlowupBall)> {
    if st.rep.emap.iter().any(|p| p.steps.len() != 1) {
        return Err(Error::NotSimplicial);
    }
    let choice = solve_attaching_points(st, vec![Quad::zero(); st.len()], tol, 200)?;
    let exact = exact_attaching_points(st)?;
    let solver_error = choice
        .points
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs().to_f64())
        .fold(0.0, f64::max);
    let ball = build_blowup_ball(st.clone(), exact.clone(), depth)?;
    let injectivity_witnesses = ball.pl_injectivity_witnesses().len();
    let fibers: Vec<&BlowPoint> = ball
        .points
        .iter()
        .filter(|p| matches!(p, BlowPoint::Fiber { .. }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut homothety_failures = 0;
    let mut homothety_pairs = 0;
    if !fibers.is_empty() {
        for _ in 0..pairs {
            let p = fibers.choose(&mut rng).unwrap();
            let q = fibers.choose(&mut rng).unwrap();
            homothety_pairs += 1;
            let d = ball.collapsed_dist(p, q);
            let dd = ball.collapsed_dist(&ball.induced(p), &ball.induced(q));
            if dd != &st.lambda * &d {
                homothety_failures += 1;
            }
        }
    }
    Ok((
        Patchwork {
            choice,
            exact,
            solver_error,
            injectivity_witnesses,
            homothety_pairs,
            homothety_failures,
        },
        ball,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexSpec {
    #[serde(default)]
    pub group: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub label: String,
}

/// A blow-up job: automorphism text, a splitting whose vertex 0 is the base,
/// one forest per vertex and a ball radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    pub automorphism: String,
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
    pub fibers: Vec<VertexForest>,
    #[serde(default)]
    pub depth: Option<usize>,
}

const CONFIG_LIMIT: usize = 64;

impl BlowupConfig {
    pub fn parse(text: &str) -> Result<BlowupConfig> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn stitching(&self) -> Result<Stitching> {
        let phi = parse_automorphism(&self.automorphism)?;
        if phi.system.len() != 1 {
            return Err(Error::Invalid(
                "blow-ups are built for a single component".into(),
            ));
        }
        if self.vertices.is_empty()
            || self.vertices.len() > CONFIG_LIMIT
            || self.edges.len() > CONFIG_LIMIT
        {
            return Err(Error::Invalid(format!(
                "splittings need 1..={CONFIG_LIMIT} vertices and at most {CONFIG_LIMIT} edges"
            )));
        }
        let word = |s: &str| -> Result<Word> {
            if s.trim().is_empty() || s.trim() == "1" {
                return Ok(Word::empty());
            }
            let w = parse_word(&phi.system, s)?.1;
            if w.len() > CONFIG_LIMIT {
                return Err(Error::Invalid("word too long".into()));
            }
            Ok(w)
        };
        let mut vertices = Vec::new();
        for v in &self.vertices {
            let group = v
                .group
                .iter()
                .map(|s| word(s))
                .collect::<Result<Vec<_>>>()?;
            if group.iter().any(|w| w.is_empty()) {
                return Err(Error::Invalid(
                    "vertex-group generators must be nontrivial".into(),
                ));
            }
            vertices.push(Vertex { comp: 0, group });
        }
        let mut edges = Vec::new();
        for e in &self.edges {
            edges.push(Edge {
                from: e.from,
                to: e.to,
                label: word(&e.label)?,
            });
        }
        for f in &self.fibers {
            if let VertexForest::Line {
                lambda,
                weights,
                offset,
            } = f
            {
                if std::iter::once(lambda)
                    .chain(weights)
                    .chain(std::iter::once(offset))
                    .any(|q| q.bits() > 128)
                {
                    return Err(Error::Invalid("fiber numbers too large".into()));
                }
            }
        }
        let g = FreeSplitting {
            system: phi.system.clone(),
            vertices,
            edges,
            base: vec![0],
        };
        g.validate()?;
        let rep = TopRep::new(&phi, &g)?;
        Stitching::new(rep, self.fibers.clone())
    }
}

/// The worked example: `F₃ = ⟨a, b, c⟩` split as one vertex with group
/// `⟨a, b⟩` and a loop labeled `c`; `a ↦ ab, b ↦ a, c ↦ bca`; the line over
/// the vertex has `ρ(a) = φ`, `ρ(b) = 1`, `h(t) = φt`.
pub fn golden_example() -> Stitching {
    golden_config()
        .stitching()
        .expect("built-in example is valid")
}

pub fn golden_config() -> BlowupConfig {
    BlowupConfig {
        automorphism: "a -> a b\nb -> a\nc -> b c a\n".into(),
        vertices: vec![VertexSpec {
            group: vec!["a".into(), "b".into()],
        }],
        edges: vec![EdgeSpec {
            from: 0,
            to: 0,
            label: "c".into(),
        }],
        fibers: vec![VertexForest::Line {
            lambda: Quad::phi(),
            weights: vec![Quad::phi(), Quad::one()],
            offset: Quad::zero(),
        }],
        depth: Some(3),
    }
}

/// Two labeled vertices `⟨a, b⟩` and `⟨c, d⟩` joined by an edge, with
/// `a ↦ ab, b ↦ a, c ↦ a·cd·a⁻¹, d ↦ a·c·a⁻¹` and golden line fibers.
pub fn two_vertex_config() -> BlowupConfig {
    BlowupConfig {
        automorphism: "a -> a b\nb -> a\nc -> a c d a'\nd -> a c a'\n".into(),
        vertices: vec![
            VertexSpec {
                group: vec!["a".into(), "b".into()],
            },
            VertexSpec {
                group: vec!["c".into(), "d".into()],
            },
        ],
        edges: vec![EdgeSpec {
            from: 0,
            to: 1,
            label: String::new(),
        }],
        fibers: vec![
            VertexForest::Line {
                lambda: Quad::phi(),
                weights: vec![Quad::phi(), Quad::one()],
                offset: Quad::zero(),
            },
            VertexForest::Line {
                lambda: Quad::phi(),
                weights: vec![Quad::phi(), Quad::one()],
                offset: Quad::zero(),
            },
        ],
        depth: Some(2),
    }
}

/// The golden example with every fiber a point.
pub fn degenerate_config() -> BlowupConfig {
    BlowupConfig {
        fibers: vec![VertexForest::Degenerate],
        ..golden_config()
    }
}

/// Automorphisms of the worked examples, for callers that need `φ` itself.
pub fn automorphism_of(config: &BlowupConfig) -> Result<Automorphism> {
    parse_automorphism(&config.automorphism)
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::pretree::{check_axioms, Sampling};

    fn golden_ball(depth: usize) -> BlowupBall {
        let st = golden_example();
        let exact = exact_attaching_points(&st).unwrap();
        build_blowup_ball(st, exact, depth).unwrap()
    }

    fn two_vertex_ball(depth: usize) -> BlowupBall {
        let st = two_vertex_config().stitching().unwrap();
        let exact = exact_attaching_points(&st).unwrap();
        build_blowup_ball(st, exact, depth).unwrap()
    }

    fn q(s: &str) -> Quad {
        s.parse().unwrap()
    }

    #[test]
    fn golden_attaching_points_closed_form() {
        let st = golden_example();
        let exact = exact_attaching_points(&st).unwrap();
        for (d, dir) in st.directions.iter().enumerate() {
            // out-going germ: p = (p + 1)/φ; in-coming: p = (p − φ)/φ
            let want = if dir.germ > 0 {
                Quad::phi()
            } else {
                -(Quad::phi() * Quad::phi())
            };
            assert_eq!(exact[d], want, "germ {}", dir.germ);
            assert!(st.defect(&exact, d).is_zero());
        }
    }

    #[test]
    fn single_equation_solver_rate() {
        let eq = LineEquations {
            lambda: Quad::int(2),
            shift: vec![Quad::one()],
            partner: vec![0],
        };
        assert_eq!(exact_attaching_points(&eq).unwrap(), vec![Quad::one()]);
        for init in [0i64, 1000] {
            let sol = solve_attaching_points(&eq, vec![Quad::int(init)], 1e-9, 200).unwrap();
            let r0 = sol.history[0];
            if r0 > 0.0 {
                let bound = (r0 / 1e-9).log2().ceil() as usize + 5;
                assert!(sol.iterations <= bound, "{} > {bound}", sol.iterations);
            }
            for w in sol.history.windows(2) {
                assert!(w[1] <= w[0] / 2.0 * (1.0 + 1e-12));
            }
            assert!((sol.points[0].to_f64() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn coupled_equations_match_closed_form() {
        // p1 = (p2 + s)/λ, p2 = (p1 + s')/λ  ⇒  p1 = (s' + sλ)/(λ² − 1)
        let (l, s, s2) = (Quad::int(2), q("3/7"), q("-5"));
        let eq = LineEquations {
            lambda: l.clone(),
            shift: vec![s.clone(), s2.clone()],
            partner: vec![1, 0],
        };
        let exact = exact_attaching_points(&eq).unwrap();
        let p1 = (&s2 + &(&s * &l)) / (&l * &l - Quad::one());
        let p2 = (&p1 + &s2) / &l;
        assert_eq!(exact, vec![p1, p2]);
        let a = solve_attaching_points(&eq, vec![Quad::zero(); 2], 1e-9, 200).unwrap();
        let b = solve_attaching_points(&eq, vec![Quad::int(50), Quad::int(-9)], 1e-9, 200).unwrap();
        for i in 0..2 {
            assert!((&a.points[i] - &b.points[i]).abs().to_f64() < 1e-8);
        }
    }

    #[test]
    fn non_expanding_equations_do_not_converge() {
        let eq = LineEquations {
            lambda: Quad::one(),
            shift: vec![Quad::one()],
            partner: vec![0],
        };
        assert!(matches!(
            solve_attaching_points(&eq, vec![Quad::zero()], 1e-9, 50),
            Err(Error::NoConvergence(_))
        ));
        assert!(matches!(
            exact_attaching_points(&eq),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn stitching_rejects_bad_fibers() {
        let mut cfg = golden_config();
        cfg.fibers = vec![VertexForest::Line {
            lambda: Quad::phi(),
            weights: vec![Quad::one(), Quad::one()],
            offset: Quad::zero(),
        }];
        assert!(matches!(cfg.stitching(), Err(Error::NotInvariant(_))));
        cfg.fibers = vec![VertexForest::Line {
            lambda: Quad::one(),
            weights: vec![Quad::one(), Quad::one()],
            offset: Quad::zero(),
        }];
        assert!(matches!(cfg.stitching(), Err(Error::Invalid(_))));
        assert!(matches!(BlowupConfig::parse("{"), Err(Error::Parse { .. })));
        let text = serde_json::to_string(&golden_config()).unwrap();
        assert!(BlowupConfig::parse(&text).unwrap().stitching().is_ok());
    }

    #[test]
    fn ball_satisfies_pretree_axioms() {
        for ball in [golden_ball(2), two_vertex_ball(2)] {
            let rng = RefCell::new(ChaCha8Rng::seed_from_u64(3));
            let sample: Vec<BlowPoint> = ball.points.iter().step_by(3).cloned().collect();
            let report = check_axioms(
                &ball,
                &sample,
                Sampling::Random {
                    triples: 300,
                    rng: &rng,
                },
            );
            assert!(report.passed(), "{:?}", report.counterexample);
        }
    }

    #[test]
    fn metric_is_a_tree_metric() {
        let ball = golden_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p: Vec<&BlowPoint> = (0..4)
                .map(|_| ball.points.choose(&mut rng).unwrap())
                .collect();
            let d = |i: usize, j: usize| ball.dist(p[i], p[j]);
            assert_eq!(d(0, 1), d(1, 0));
            let mut s = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
            s.sort();
            assert_eq!(s[1], s[2], "four-point condition");
            let m = ball.median(p[0], p[1], p[2]);
            assert!(
                ball.between(p[0], p[1], &m)
                    && ball.between(p[1], p[2], &m)
                    && ball.between(p[0], p[2], &m)
            );
            let mid = ball.point_at(p[0], p[1], &(d(0, 1) * half()));
            assert_eq!(ball.dist(p[0], &mid) * Quad::int(2), d(0, 1));
        }
    }

    #[test]
    fn action_is_an_isometric_action() {
        let ball = two_vertex_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let words = enumerate_words(4, 2);
        for _ in 0..150 {
            let p = ball.points.choose(&mut rng).unwrap();
            let r = ball.points.choose(&mut rng).unwrap();
            let x = words.choose(&mut rng).unwrap();
            let y = words.choose(&mut rng).unwrap();
            assert_eq!(ball.act(x, &ball.act(y, p)), ball.act(&x.mul(y), p));
            assert_eq!(ball.dist(&ball.act(x, p), &ball.act(x, r)), ball.dist(p, r));
            assert_eq!(&ball.act(&Word::empty(), p), p);
        }
    }

    #[test]
    fn induced_map_is_equivariant() {
        for (ball, cfg) in [
            (golden_ball(2), golden_config()),
            (two_vertex_ball(2), two_vertex_config()),
        ] {
            let phi = automorphism_of(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let words = enumerate_words(phi.rank(), 2);
            for _ in 0..100 {
                let p = ball.points.choose(&mut rng).unwrap();
                let x = words.choose(&mut rng).unwrap();
                assert_eq!(
                    ball.induced(&ball.act(x, p)),
                    ball.act(&phi.on(x), &ball.induced(p))
                );
            }
        }
    }

    #[test]
    fn ideal_choice_preserves_intervals_and_perturbation_is_caught() {
        for mut ball in [golden_ball(2), two_vertex_ball(2)] {
            let report = induced_map(&ball, 400, 1e-9, 1);
            assert!(report.verdict && report.failures == 0, "{report:?}");
            assert!(ball
                .points
                .iter()
                .all(|p| ball.pl_image(p) == ball.induced(p)));
            ball.choice[0] = &ball.choice[0] + &q("1/1000");
            let report = induced_map(&ball, 400, 1e-9, 1);
            assert!(!report.verdict);
            let d0 = &ball.stitching.directions[0];
            assert!(report
                .violations
                .iter()
                .any(|v| v.vertex == d0.vertex && v.germ == d0.germ));
            assert!(!ball.pl_injectivity_witnesses().is_empty());
        }
    }

    #[test]
    fn collapse_matches_base_tree() {
        for ball in [golden_ball(2), two_vertex_ball(2)] {
            let r = collapse_check(&ball, 300, 2).unwrap();
            assert_eq!(r.mismatches, 0, "{:?}", r.first_mismatch);
        }
    }

    #[test]
    fn loxodromic_classification_agrees_with_parts() {
        for ball in [golden_ball(1), two_vertex_ball(1)] {
            let rank = ball.stitching.splitting().system.ranks[0];
            for x in enumerate_words(rank, 3) {
                let c = classify_loxodromic(&ball, &x, 3).unwrap();
                assert_eq!(
                    c.is_loxodromic(),
                    loxodromic_by_parts(&ball.stitching, &x),
                    "{x:?}"
                );
                match c {
                    Loxodromy::Elliptic { fixed } => assert_eq!(ball.act(&x, &fixed), fixed),
                    Loxodromy::Loxodromic {
                        translation,
                        axis: (a, xa),
                    } => {
                        assert_eq!(ball.dist(&a, &xa), translation);
                        let x2a = ball.act(&x, &xa);
                        assert_eq!(ball.dist(&a, &x2a), &translation * &Quad::int(2));
                    }
                }
            }
            assert!(matches!(
                classify_loxodromic(&ball, &Word::from_letters([1, 2, 1, 2]), 3),
                Err(Error::DepthExceeded(_))
            ));
        }
    }

    #[test]
    fn patchwork_is_injective_and_homothetic() {
        let (pw, ball) = simple_patchwork(&golden_example(), 2, 1e-9, 200, 4).unwrap();
        assert!(pw.choice.residual < 1e-9 && pw.solver_error < 1e-8);
        assert_eq!(pw.injectivity_witnesses, 0);
        assert_eq!(pw.homothety_failures, 0);
        assert!(!ball.points.is_empty());
    }

    #[test]
    fn fixed_points_repel() {
        let ball = golden_ball(2);
        let r = expanding_check(&ball, 2, 2).unwrap();
        assert_eq!(
            r.failures,
            0,
            "{:?}",
            r.rows
                .iter()
                .filter(|x| !matches!(
                    x.outcome,
                    ExpansionOutcome::Expanding { .. } | ExpansionOutcome::NoFixedPointInBall
                ))
                .collect::<Vec<_>>()
        );
        assert!(r.expanding > 0);
        let id = &r.rows[0];
        assert!(id.word.is_empty());
        // f* fixes the base vertex fiber and stretches it about 0 by φ
        assert_eq!(
            id.outcome,
            ExpansionOutcome::Expanding {
                fixed: ball.root(),
                rate: Quad::phi()
            }
        );
    }

    #[test]
    fn degenerate_fibers_give_the_base() {
        let st = degenerate_config().stitching().unwrap();
        let exact = exact_attaching_points(&st).unwrap();
        assert!(exact.iter().all(|p| p.is_zero()));
        let ball = build_blowup_ball(st, exact, 2).unwrap();
        let fibers = ball
            .points
            .iter()
            .filter(|p| matches!(p, BlowPoint::Fiber { .. }))
            .count();
        assert_eq!(fibers, ball.vertices.len());
        assert!(induced_map(&ball, 200, 1e-9, 3).verdict);
        let p = &ball.points[0];
        let r = ball.points.last().unwrap();
        assert_eq!(ball.collapsed_dist(p, r), Quad::zero());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn every_perturbation_is_detected(d in 0usize..2, n in -50i64..50, den in 1i64..1000) {
            proptest::prop_assume!(n != 0);
            let mut ball = golden_ball(1);
            ball.choice[d] = &ball.choice[d] + &Quad::ratio(n, den);
            let report = induced_map(&ball, 0, 1e-12, 0);
            proptest::prop_assert!(!report.verdict);
            proptest::prop_assert!(!ball.pl_injectivity_witnesses().is_empty());
        }
    }
}
