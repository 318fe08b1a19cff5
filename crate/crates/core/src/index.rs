//! Index of free splittings and of the pretrees associated to rigid systems
//! of partial pretree-isomorphisms: the associated pretree ball, the action
//! condition, orbit graphs and the valence/Euler index count.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FreeSplitting;
use crate::pretree::{
    is_bounded, parse_location, parse_pretree, parse_rational, Direction, FiniteRealPretree,
    IntervalOracle, Location, PartialPretreeIso, Subtree, Q,
};
use crate::word::{enumerate_words, Word};

/// Complexity `c(G) = 2·rank − 1`.
pub fn complexity(rank: usize) -> i64 {
    2 * rank as i64 - 1
}

/// `i[p] = c(G_p) − 1 + #dir[p]`.
pub fn local_index(stab_rank: usize, dir_orbits: usize) -> i64 {
    complexity(stab_rank) - 1 + dir_orbits as i64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitIndex {
    pub name: String,
    pub stabilizer_rank: usize,
    pub complexity: i64,
    /// Orbits of directions; for rigid systems, those with trivial stabilizer.
    pub directions: usize,
    pub index: i64,
    /// The valence-formula count, for rigid systems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valence_index: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EulerAudit {
    pub name: String,
    pub value: i64,
    pub expected: i64,
}

impl EulerAudit {
    pub fn holds(&self) -> bool {
        self.value == self.expected
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub orbits: Vec<OrbitIndex>,
    pub total: i64,
    /// `c(F)` of the acting group.
    pub complexity: i64,
    /// `total < c(F)`.
    pub below_bound: bool,
    pub audits: Vec<EulerAudit>,
}

impl IndexReport {
    fn new(orbits: Vec<OrbitIndex>, complexity: i64, audits: Vec<EulerAudit>) -> Self {
        let total = orbits.iter().map(|o| o.index).sum();
        IndexReport {
            orbits,
            total,
            complexity,
            below_bound: total < complexity,
            audits,
        }
    }

    pub fn audits_hold(&self) -> bool {
        self.audits.iter().all(EulerAudit::holds)
    }
}

/// Index of the Bass–Serre tree of a free splitting: one point orbit per
/// vertex, with `G_v`-orbits of directions in bijection with the germs at `v`;
/// edge points have trivial stabilizer and two directions, hence index 0.
pub fn splitting_index(g: &FreeSplitting) -> Result<IndexReport> {
    if g.edges.is_empty() {
        return Err(Error::Degenerate(
            "a splitting without edges has a point as tree".into(),
        ));
    }
    let mut orbits = Vec::new();
    for (v, vert) in g.vertices.iter().enumerate() {
        let val = g.valence(v);
        if !g.is_labeled(v) && val < 2 {
            return Err(Error::Degenerate(format!(
                "vertex {v} is an unlabeled leaf; the splitting is not minimal"
            )));
        }
        let rank = vert.group.len();
        orbits.push(OrbitIndex {
            name: format!("v{v}"),
            stabilizer_rank: rank,
            complexity: complexity(rank),
            directions: val,
            index: local_index(rank, val),
            valence_index: None,
        });
    }
    let ranks = &g.system.ranks;
    let c: i64 = ranks.iter().map(|&n| complexity(n)).sum();
    let (nv, ne) = (g.vertices.len() as i64, g.edges.len() as i64);
    let rank_sum: i64 = g.vertices.iter().map(|v| v.group.len() as i64).sum();
    let graph_rank: i64 = ranks.iter().map(|&n| n as i64).sum::<i64>() - rank_sum;
    let audits = vec![
        // 1 − rank π₁ = #V − #E, summed over components
        EulerAudit {
            name: "euler".into(),
            value: nv - ne,
            expected: ranks.len() as i64 - graph_rank,
        },
        EulerAudit {
            name: "valence".into(),
            value: (0..g.vertices.len()).map(|v| g.valence(v) as i64 - 2).sum(),
            expected: 2 * ne - 2 * nv,
        },
        EulerAudit {
            name: "total".into(),
            value: orbits.iter().map(|o| o.index).sum(),
            expected: ranks.iter().map(|&n| complexity(n) - 1).sum(),
        },
    ];
    Ok(IndexReport::new(orbits, c, audits))
}

/// A finite real pretree `K` with partial pretree-isomorphisms `x_i: A_i → B_i`.
#[derive(Clone, Debug, Serialize)]
pub struct RigidSystem {
    pub tree: FiniteRealPretree,
    pub maps: Vec<PartialPretreeIso>,
    #[serde(skip)]
    inverses: Vec<PartialPretreeIso>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSpec {
    pub domain: Vec<String>,
    pub image: Vec<String>,
    #[serde(default)]
    pub scale: Option<String>,
}

/// JSON form: the tree in the pretree text format and the maps by listed
/// domain and image points, e.g. `{"tree": "vertices 2\nedge 0 1 1",
/// "maps": [{"domain": ["v0", "e0:1/2"], "image": ["e0:1/2", "v1"]}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidSystemSpec {
    pub tree: String,
    pub maps: Vec<MapSpec>,
}

const SYSTEM_LIMIT: usize = 16;

/// Parses the JSON form of a rigid system.
pub fn parse_rigid_system(text: &str) -> Result<RigidSystem> {
    let input: RigidSystemSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let tree = parse_pretree(&input.tree)?;
    if tree.num_vertices > 64 || input.maps.is_empty() || input.maps.len() > SYSTEM_LIMIT {
        return Err(Error::Invalid(format!(
            "systems need at most 64 tree vertices and 1..={SYSTEM_LIMIT} maps"
        )));
    }
    let mut maps = Vec::new();
    for m in &input.maps {
        if m.domain.len() > SYSTEM_LIMIT {
            return Err(Error::Invalid("too many listed points".into()));
        }
        let dom = m
            .domain
            .iter()
            .map(|s| parse_location(&tree, s))
            .collect::<Result<Vec<_>>>()?;
        let img = m
            .image
            .iter()
            .map(|s| parse_location(&tree, s))
            .collect::<Result<Vec<_>>>()?;
        let scale = match &m.scale {
            Some(s) => parse_rational(s)
                .filter(|q| is_bounded(q) && q.numer() > &0)
                .ok_or_else(|| Error::Invalid(format!("bad scale {s:?}")))?,
            None => Q::from_integer(1),
        };
        maps.push(PartialPretreeIso::new(&tree, dom, img, scale)?);
    }
    RigidSystem::new(tree, maps)
}

impl RigidSystem {
    /// Rejects empty domains (trivial systems) and maps whose listed points
    /// are not the vertices of a convex subtree mapped consistently.
    pub fn new(tree: FiniteRealPretree, maps: Vec<PartialPretreeIso>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Invalid("a system needs at least one map".into()));
        }
        let mut inverses = Vec::new();
        for m in &maps {
            if m.domain.is_empty() {
                return Err(Error::EmptyDomain);
            }
            let inv = PartialPretreeIso::new(
                &tree,
                m.image.clone(),
                m.domain.clone(),
                Q::from_integer(1) / m.scale,
            )?;
            // the listed points must span the hulls isometrically up to scale
            for p in tree.vertices() {
                if let Some(q) = m.apply(&tree, &p) {
                    if inv.apply(&tree, &q) != Some(p.clone()) {
                        return Err(Error::Invalid(
                            "a map is not injective on its domain".into(),
                        ));
                    }
                }
            }
            inverses.push(inv);
        }
        Ok(RigidSystem {
            tree,
            maps,
            inverses,
        })
    }

    pub fn rank(&self) -> usize {
        self.maps.len()
    }

    /// The map of a signed 1-based letter.
    pub fn letter(&self, z: i32) -> &PartialPretreeIso {
        let i = z.unsigned_abs() as usize - 1;
        if z > 0 {
            &self.maps[i]
        } else {
            &self.inverses[i]
        }
    }

    pub fn domain(&self, z: i32) -> Subtree {
        self.letter(z).domain_subtree()
    }

    /// `y(a)` for `y = y_m ⋯ y_1`, applying `y_1` first.
    pub fn apply_word(&self, y: &Word, a: &Location) -> Option<Location> {
        let mut cur = a.clone();
        for &z in y.letters().iter().rev() {
            cur = self.letter(z).apply(&self.tree, &cur)?;
        }
        Some(cur)
    }

    /// `g ∘ f`, with domain `f⁻¹(im f ∩ dom g)`; `None` when that is empty.
    pub fn compose(
        &self,
        g: &PartialPretreeIso,
        f: &PartialPretreeIso,
    ) -> Option<PartialPretreeIso> {
        let t = &self.tree;
        let dom_g = g.domain_subtree();
        let im_f = f.image_subtree();
        // the intersection of convex sets is the hull of the projections
        let first = t.project(&f.image[0], &dom_g).ok()?;
        if !t.in_subtree(&im_f, &first) {
            return None;
        }
        let mut meet: Vec<Location> = f
            .image
            .iter()
            .map(|b| t.project(b, &dom_g).expect("nonempty"))
            .collect();
        meet.sort();
        meet.dedup();
        let f_inv = PartialPretreeIso::new(
            t,
            f.image.clone(),
            f.domain.clone(),
            Q::from_integer(1) / f.scale,
        )
        .ok()?;
        let domain: Vec<Location> = meet
            .iter()
            .map(|p| f_inv.apply(t, p).expect("inside the image"))
            .collect();
        let image: Vec<Location> = meet
            .iter()
            .map(|p| g.apply(t, p).expect("inside the domain"))
            .collect();
        PartialPretreeIso::new(t, domain, image, f.scale * g.scale).ok()
    }

    /// The partial map of a nonempty reduced word; `None` when its domain is empty.
    pub fn word_map(&self, y: &Word) -> Option<PartialPretreeIso> {
        let mut letters = y.letters().iter().rev();
        let mut cur = self.letter(*letters.next()?).clone();
        for &z in letters {
            cur = self.compose(self.letter(z), &cur)?;
        }
        Some(cur)
    }

    /// Nonempty reduced words of length at most `budget` whose partial map
    /// is not rigid.
    pub fn rigidity_violations(&self, budget: usize) -> Vec<Word> {
        enumerate_words(self.rank(), budget)
            .into_iter()
            .filter(|y| !y.is_empty())
            .filter(|y| {
                self.word_map(y)
                    .map(|m| !m.is_rigid(&self.tree))
                    .unwrap_or(false)
            })
            .collect()
    }

    /// Directions at `b` meeting the subtree in more than `b`.
    fn directions_into(&self, b: &Location, listed: &[Location]) -> Vec<Direction> {
        self.tree
            .directions_at(b)
            .into_iter()
            .filter(|d| listed.iter().any(|p| self.tree.in_direction(d, p)))
            .collect()
    }

    /// `ν_{A_i}(b)` for `b ∈ A_i`.
    pub fn domain_valence(&self, i: usize, b: &Location) -> usize {
        self.directions_into(b, &self.maps[i].domain).len()
    }

    pub fn in_domain(&self, i: usize, b: &Location) -> bool {
        self.tree.in_subtree(&self.maps[i].domain_subtree(), b)
    }

    /// Vertices of `K`, `A_i` and `B_i`: tree vertices and listed points.
    pub fn special_points(&self) -> Vec<Location> {
        let mut out: BTreeSet<Location> = self.tree.vertices().collect();
        for m in &self.maps {
            out.extend(m.domain.iter().cloned());
            out.extend(m.image.iter().cloned());
        }
        out.into_iter().collect()
    }

    /// Special points plus the midpoints between consecutive special points
    /// along each edge.
    pub fn sample_locations(&self) -> Vec<Location> {
        let special = self.special_points();
        let mut out: BTreeSet<Location> = special.iter().cloned().collect();
        for (e, edge) in self.tree.edges.iter().enumerate() {
            let mut offs = vec![Q::from_integer(0), edge.length];
            for p in &special {
                if let Location::Edge { edge: pe, offset } = p {
                    if *pe == e {
                        offs.push(*offset);
                    }
                }
            }
            offs.sort();
            offs.dedup();
            for w in offs.windows(2) {
                out.insert(
                    self.tree
                        .at(e, (w[0] + w[1]) / Q::from_integer(2))
                        .expect("inside the edge"),
                );
            }
        }
        out.into_iter().collect()
    }

    /// `Σ_b (ν_K(b) − 2)` and, per domain, `Σ_b (ν_{A_i}(b) − 2)`: each is −2.
    pub fn valence_audits(&self) -> Vec<EulerAudit> {
        let t = &self.tree;
        let mut out = vec![EulerAudit {
            name: "K".into(),
            value: t.vertices().map(|v| t.valence(&v) as i64 - 2).sum(),
            expected: -2,
        }];
        for (i, m) in self.maps.iter().enumerate() {
            let hull = m.domain_subtree();
            let mut pts: BTreeSet<Location> = m.domain.iter().cloned().collect();
            pts.extend(t.vertices().filter(|v| t.in_subtree(&hull, v)));
            let value = pts
                .iter()
                .map(|b| self.domain_valence(i, b) as i64 - 2)
                .sum();
            out.push(EulerAudit {
                name: format!("A{}", i + 1),
                value,
                expected: -2,
            });
        }
        out
    }

    /// The segment `[0, 1]` with `x₁: [0, 1/2] → [1/2, 1]`, `t ↦ t + 1/2`.
    pub fn segment_example() -> RigidSystem {
        parse_rigid_system(SEGMENT_SYSTEM).expect("built-in system")
    }

    /// The tripod with centre `v0` and `x₁: [v1, v0] → [v0, v2]`,
    /// `x₂: [v1, v0] → [v0, v3]`.
    pub fn tripod_example() -> RigidSystem {
        parse_rigid_system(TRIPOD_SYSTEM).expect("built-in system")
    }

    /// The segment `[0, 2]` with the shift `x₁: t ↦ t + 1` and the flip
    /// `x₂: t ↦ 2 − t`, both from `[0, 1]` onto `[1, 2]`.
    pub fn interval_pair_example() -> RigidSystem {
        parse_rigid_system(INTERVAL_PAIR_SYSTEM).expect("built-in system")
    }
}

pub const SEGMENT_SYSTEM: &str = r#"{"tree": "vertices 2\nedge 0 1 1", "maps": [{"domain": ["v0", "e0:1/2"], "image": ["e0:1/2", "v1"]}]}"#;
pub const TRIPOD_SYSTEM: &str = r#"{"tree": "vertices 4\nedge 0 1 1\nedge 0 2 1\nedge 0 3 1", "maps": [{"domain": ["v1", "v0"], "image": ["v0", "v2"]}, {"domain": ["v1", "v0"], "image": ["v0", "v3"]}]}"#;
pub const INTERVAL_PAIR_SYSTEM: &str = r#"{"tree": "vertices 2\nedge 0 1 2", "maps": [{"domain": ["v0", "e0:1"], "image": ["e0:1", "v1"]}, {"domain": ["v0", "e0:1"], "image": ["v1", "e0:1"]}]}"#;

/// A point of the associated pretree in normal form: the class of
/// `(word, loc)` where `loc` is outside the domain of the word's last letter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct KPoint {
    pub word: Word,
    pub loc: Location,
}

type Piece = (Word, Location, Location);

/// The associated pretree `T_K`, materialized on the classes of `(x, a)` with
/// `|x| ≤ depth` and `a` a sample location; interval queries are exact for
/// any pair of points.
#[derive(Clone, Debug)]
pub struct AssociatedPretreeBall {
    pub system: RigidSystem,
    pub depth: usize,
    pub points: Vec<KPoint>,
    cache: RefCell<HashMap<(KPoint, KPoint), Rc<Vec<Piece>>>>,
}

pub fn build_associated_pretree(
    system: RigidSystem,
    depth: usize,
) -> Result<AssociatedPretreeBall> {
    if depth > 6 {
        return Err(Error::DepthExceeded(format!(
            "ball depth {depth} exceeds 6"
        )));
    }
    let mut ball = AssociatedPretreeBall {
        system,
        depth,
        points: Vec::new(),
        cache: RefCell::new(HashMap::new()),
    };
    let locs = ball.system.sample_locations();
    let mut pts = BTreeSet::new();
    for x in enumerate_words(ball.system.rank(), depth) {
        for a in &locs {
            pts.insert(ball.normalize(x.clone(), a.clone()));
        }
    }
    ball.points = pts.into_iter().collect();
    Ok(ball)
}

impl AssociatedPretreeBall {
    /// The shortest representative: peel the last letter while the location
    /// lies in its domain.
    pub fn normalize(&self, mut word: Word, mut loc: Location) -> KPoint {
        while let Some(&z) = word.letters().last() {
            match self.system.letter(z).apply(&self.system.tree, &loc) {
                Some(b) => {
                    word.0.pop();
                    loc = b;
                }
                None => break,
            }
        }
        KPoint { word, loc }
    }

    pub fn iota(&self, a: &Location) -> KPoint {
        KPoint {
            word: Word::empty(),
            loc: a.clone(),
        }
    }

    pub fn act(&self, y: &Word, p: &KPoint) -> KPoint {
        self.normalize(y.mul(&p.word), p.loc.clone())
    }

    /// `[p, q]` as pieces `π(w, [s, t]_K)`: one piece when the words agree,
    /// otherwise the chain through the projections `c_j`.
    pub fn pieces(&self, p: &KPoint, q: &KPoint) -> Rc<Vec<Piece>> {
        if let Some(hit) = self.cache.borrow().get(&(p.clone(), q.clone())) {
            return hit.clone();
        }
        let t = &self.system.tree;
        let (x, a) = (&p.word, &p.loc);
        let (y, b) = (&q.word, &q.loc);
        let mut out = Vec::new();
        if x == y {
            out.push((x.clone(), a.clone(), b.clone()));
        } else {
            let u = y.inverse().mul(x);
            let letters: Vec<i32> = u.letters().iter().rev().copied().collect(); // y_1, ..., y_m
            let mut w = x.clone();
            let mut from = a.clone();
            for &z in &letters {
                let c = t
                    .project(&from, &self.system.domain(z))
                    .expect("domains are nonempty");
                out.push((w.clone(), from, c.clone()));
                from = self
                    .system
                    .letter(z)
                    .apply(t, &c)
                    .expect("projection lies in the domain");
                w = w.mul(&Word::gen(-z));
            }
            debug_assert_eq!(&w, y);
            out.push((y.clone(), from, b.clone()));
        }
        let rc = Rc::new(out);
        self.cache
            .borrow_mut()
            .insert((p.clone(), q.clone()), rc.clone());
        rc
    }

    /// `r ∈ [p, q]`: some piece `π(w, [s, t])` contains `r = π(z, c)`, that
    /// is `(w⁻¹z)(c) ∈ [s, t]_K`.
    pub fn between(&self, p: &KPoint, q: &KPoint, r: &KPoint) -> bool {
        let t = &self.system.tree;
        self.pieces(p, q).iter().any(|(w, s, e)| {
            let u = w.inverse().mul(&r.word);
            self.system
                .apply_word(&u, &r.loc)
                .map(|x| t.between(s, e, &x))
                .unwrap_or(false)
        })
    }

    /// Classes of ball points other than `p` under "`p ∉ [s, t]`".
    pub fn direction_classes(&self, p: &KPoint) -> Vec<Vec<KPoint>> {
        let mut classes: Vec<Vec<KPoint>> = Vec::new();
        for s in self.points.iter().filter(|s| *s != p) {
            match classes.iter_mut().find(|c| !self.between(&c[0], s, p)) {
                Some(c) => c.push(s.clone()),
                None => classes.push(vec![s.clone()]),
            }
        }
        classes
    }

    /// Number of direction classes at `p` up to the stabilizer elements
    /// `stab` (each fixing `p`), computed from the ball's betweenness alone.
    pub fn direction_orbits(&self, p: &KPoint, stab: &[Word]) -> usize {
        let classes = self.direction_classes(p);
        let mut parent: Vec<usize> = (0..classes.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for g in stab {
            for (i, c) in classes.iter().enumerate() {
                let img = self.act(g, &c[0]);
                if let Some(j) = classes.iter().position(|d| !self.between(&d[0], &img, p)) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        (0..classes.len())
            .filter(|&i| find(&mut parent, i) == i)
            .count()
    }
}

impl IntervalOracle for AssociatedPretreeBall {
    type Point = KPoint;

    fn between(&self, p: &KPoint, q: &KPoint, r: &KPoint) -> bool {
        AssociatedPretreeBall::between(self, p, q, r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionConditionReport {
    pub checked: usize,
    /// `(y, a, b)` where `y·ι(a) = ι(b)` and `y(a) = b` disagree.
    pub violations: Vec<(Word, Location, Location)>,
}

/// Brute-force check of `y·ι(a) = ι(b) ⟺ y(a) = b` over reduced `|y| ≤ m`
/// and sample locations. The left side is decided by closing the generating
/// identifications `(w, a) ~ (w·z, z⁻¹(a))` with union-find over words of
/// length at most `m`, independently of normal forms.
pub fn check_action_condition(system: &RigidSystem, m: usize) -> ActionConditionReport {
    let locs = system.sample_locations();
    let mut ids: HashMap<(Word, Location), usize> = HashMap::new();
    let mut parent: Vec<usize> = Vec::new();
    let mut stack: Vec<(Word, Location)> = Vec::new();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut j = i;
        while parent[j] != r {
            let n = parent[j];
            parent[j] = r;
            j = n;
        }
        r
    }
    let mut node = |key: (Word, Location),
                    parent: &mut Vec<usize>,
                    stack: &mut Vec<(Word, Location)>|
     -> usize {
        if let Some(&i) = ids.get(&key) {
            return i;
        }
        let i = parent.len();
        parent.push(i);
        ids.insert(key.clone(), i);
        stack.push(key);
        i
    };
    let words = enumerate_words(system.rank(), m);
    for y in &words {
        for a in &locs {
            node((y.clone(), a.clone()), &mut parent, &mut stack);
        }
    }
    while let Some((w, a)) = stack.pop() {
        let i = node((w.clone(), a.clone()), &mut parent, &mut stack);
        for g in 1..=system.rank() as i32 {
            for z in [g, -g] {
                let wz = w.mul(&Word::gen(z));
                if wz.len() > m {
                    continue;
                }
                if let Some(b) = system.letter(-z).apply(&system.tree, &a) {
                    let j = node((wz, b), &mut parent, &mut stack);
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut report = ActionConditionReport {
        checked: 0,
        violations: Vec::new(),
    };
    for y in &words {
        for a in &locs {
            let ya = find(&mut parent, ids[&(y.clone(), a.clone())]);
            let image = system.apply_word(y, a);
            for b in &locs {
                let lhs = ya == find(&mut parent, ids[&(Word::empty(), b.clone())]);
                let rhs = image.as_ref() == Some(b);
                report.checked += 1;
                if lhs != rhs {
                    report.violations.push((y.clone(), a.clone(), b.clone()));
                }
            }
        }
    }
    report
}

/// The orbit graph `𝒪_p` on `V_p ⊂ K` and its blow-up `𝒪′_p` on the
/// directions at the points of `V_p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitGraph {
    pub vertices: Vec<Location>,
    /// `(b, c, i, weight)` for `x_i(b) = c`, with `i` 1-based.
    pub edges: Vec<(usize, usize, usize, usize)>,
    /// `(b, direction)` pairs.
    pub blown_vertices: Vec<(usize, Direction)>,
    /// `(from, to, i)` between blown vertices.
    pub blown_edges: Vec<(usize, usize, usize)>,
    /// Component index of each blown vertex.
    pub components: Vec<usize>,
    /// First Betti number of each component of the blow-up.
    pub component_ranks: Vec<usize>,
}

impl OrbitGraph {
    pub fn rank(&self) -> usize {
        self.edges.len() + 1 - self.vertices.len()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph orbit {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            out.push_str(&format!("  b{i} [label=\"{v}\"];\n"));
        }
        for (b, c, i, w) in &self.edges {
            out.push_str(&format!("  b{b} -> b{c} [label=\"x{i} w={w}\"];\n"));
        }
        out.push_str("  subgraph cluster_blowup {\n    label=\"blow-up\";\n");
        for (k, (b, d)) in self.blown_vertices.iter().enumerate() {
            out.push_str(&format!(
                "    d{k} [label=\"{} -> {}\"];\n",
                self.vertices[*b], d.representative
            ));
        }
        for (f, t, i) in &self.blown_edges {
            out.push_str(&format!("    d{f} -> d{t} [label=\"x{i}\"];\n"));
        }
        out.push_str("  }\n}\n");
        out
    }
}

fn components(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut comp = vec![0; n];
    for (i, c) in comp.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        let k = label.len();
        *c = *label.entry(r).or_insert(k);
    }
    let mut verts = vec![0usize; label.len()];
    let mut edge_count = vec![0usize; label.len()];
    for &c in &comp {
        verts[c] += 1;
    }
    for &(a, _) in edges {
        edge_count[comp[a]] += 1;
    }
    let ranks = (0..label.len())
        .map(|c| edge_count[c] + 1 - verts[c])
        .collect();
    (comp, ranks)
}

/// Builds `𝒪_p` for `p = ι(a)` by breadth-first orbit enumeration under the
/// `x_i^±`; complete once a layer adds no vertex. Fails with `DepthExceeded`
/// when the orbit is still growing after `max_depth` layers.
pub fn orbit_graphs(system: &RigidSystem, a: &Location, max_depth: usize) -> Result<OrbitGraph> {
    let t = &system.tree;
    let mut index: BTreeMap<Location, usize> = BTreeMap::new();
    let mut vertices = vec![a.clone()];
    index.insert(a.clone(), 0);
    let mut frontier = vec![a.clone()];
    let mut depth = 0;
    while !frontier.is_empty() {
        if depth == max_depth {
            return Err(Error::DepthExceeded(format!(
                "orbit still growing after {max_depth} layers"
            )));
        }
        depth += 1;
        let mut next = Vec::new();
        for b in &frontier {
            for g in 1..=system.rank() as i32 {
                for z in [g, -g] {
                    if let Some(c) = system.letter(z).apply(t, b) {
                        if !index.contains_key(&c) {
                            index.insert(c.clone(), vertices.len());
                            vertices.push(c.clone());
                            next.push(c);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    let mut edges = Vec::new();
    let mut blown_vertices = Vec::new();
    let mut blown_index: HashMap<(usize, usize), usize> = HashMap::new();
    let dirs: Vec<Vec<Direction>> = vertices.iter().map(|b| t.directions_at(b)).collect();
    for (bi, ds) in dirs.iter().enumerate() {
        for (k, d) in ds.iter().enumerate() {
            blown_index.insert((bi, k), blown_vertices.len());
            blown_vertices.push((bi, d.clone()));
        }
    }
    let mut blown_edges = Vec::new();
    for (bi, b) in vertices.iter().enumerate() {
        for (i, m) in system.maps.iter().enumerate() {
            let Some(c) = m.apply(t, b) else { continue };
            let ci = index[&c];
            let mut weight = 0;
            for (k, d) in dirs[bi].iter().enumerate() {
                // a listed domain point inside d carries d into A_i
                let Some(s) = m.domain.iter().find(|s| t.in_direction(d, s)) else {
                    continue;
                };
                weight += 1;
                let img = m.apply(t, s).expect("listed point in the domain");
                let kc = dirs[ci]
                    .iter()
                    .position(|e| t.in_direction(e, &img))
                    .expect("image lies in a direction at c");
                blown_edges.push((blown_index[&(bi, k)], blown_index[&(ci, kc)], i + 1));
            }
            edges.push((bi, ci, i + 1, weight));
        }
    }
    let pairs: Vec<(usize, usize)> = blown_edges.iter().map(|&(f, t, _)| (f, t)).collect();
    let (components, component_ranks) = components(blown_vertices.len(), &pairs);
    Ok(OrbitGraph {
        vertices,
        edges,
        blown_vertices,
        blown_edges,
        components,
        component_ranks,
    })
}

/// The index of the associated pretree computed per orbit of special points
/// in two ways: `c(G_p) − 1 + #dir₁[p]` from the orbit graphs, and the
/// valence formula `Σ_{V_p}(ν_K − 2) − Σ_i Σ_{V_p ∩ A_i}(ν_{A_i} − 2)`.
pub fn index_via_orbit_graphs(system: &RigidSystem, max_depth: usize) -> Result<IndexReport> {
    let t = &system.tree;
    let mut seen: BTreeSet<Location> = BTreeSet::new();
    let mut orbits = Vec::new();
    for s in system.special_points() {
        if seen.contains(&s) {
            continue;
        }
        let og = orbit_graphs(system, &s, max_depth).map_err(|e| match e {
            Error::DepthExceeded(_) => Error::NotStabilized(max_depth),
            e => e,
        })?;
        seen.extend(og.vertices.iter().cloned());
        let rank = og.rank();
        let dir1 = og.component_ranks.iter().filter(|&&r| r == 0).count();
        let index = local_index(rank, dir1);
        let mut valence = 0i64;
        for b in &og.vertices {
            valence += t.valence(b) as i64 - 2;
            for i in 0..system.rank() {
                if system.in_domain(i, b) {
                    valence -= system.domain_valence(i, b) as i64 - 2;
                }
            }
        }
        orbits.push(OrbitIndex {
            name: format!("[{s}]"),
            stabilizer_rank: rank,
            complexity: complexity(rank),
            directions: dir1,
            index,
            valence_index: Some(valence),
        });
    }
    let n = system.rank();
    let mut audits = system.valence_audits();
    audits.push(EulerAudit {
        name: "total".into(),
        value: orbits.iter().map(|o| o.index).sum(),
        expected: complexity(n) - 1,
    });
    audits.push(EulerAudit {
        name: "two-counts".into(),
        value: orbits
            .iter()
            .filter(|o| o.valence_index != Some(o.index))
            .count() as i64,
        expected: 0,
    });
    Ok(IndexReport::new(orbits, complexity(n), audits))
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::automorphism::FreeGroupSystem;
    use crate::graph::{Edge, Vertex};
    use crate::pretree::{check_axioms, Sampling};

    fn q(n: i128, d: i128) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn local_index_formula() {
        assert_eq!(local_index(0, 3), 1);
        assert_eq!(local_index(1, 1), 1);
        assert_eq!(local_index(0, 2), 0);
    }

    #[test]
    fn rose_index_is_two_n_minus_two() {
        for n in 1..=5 {
            let r = splitting_index(&FreeSplitting::rose(&FreeGroupSystem::single(n))).unwrap();
            assert_eq!(r.total, 2 * n as i64 - 2);
            assert!(r.below_bound && r.audits_hold(), "{r:?}");
        }
    }

    #[test]
    fn free_product_index() {
        let g = FreeSplitting {
            system: FreeGroupSystem::single(2),
            vertices: vec![
                Vertex {
                    comp: 0,
                    group: vec![Word::gen(1)],
                },
                Vertex {
                    comp: 0,
                    group: vec![Word::gen(2)],
                },
            ],
            edges: vec![Edge {
                from: 0,
                to: 1,
                label: Word::empty(),
            }],
            base: vec![0],
        };
        let r = splitting_index(&g).unwrap();
        assert_eq!(
            r.orbits.iter().map(|o| o.index).collect::<Vec<_>>(),
            vec![1, 1]
        );
        assert_eq!(r.total, 2);
        assert!(r.audits_hold());
        let point = FreeSplitting {
            edges: vec![],
            vertices: vec![Vertex {
                comp: 0,
                group: vec![Word::gen(1), Word::gen(2)],
            }],
            ..g
        };
        assert!(matches!(splitting_index(&point), Err(Error::Degenerate(_))));
    }

    #[test]
    fn composition_matches_stepwise_application() {
        for sys in [
            RigidSystem::segment_example(),
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let locs = sys.sample_locations();
            for y in enumerate_words(sys.rank(), 3)
                .into_iter()
                .filter(|y| !y.is_empty())
            {
                let m = sys.word_map(&y);
                for a in &locs {
                    let direct = sys.apply_word(&y, a);
                    let via = m.as_ref().and_then(|m| m.apply(&sys.tree, a));
                    assert_eq!(direct, via, "{y:?} at {a}");
                }
            }
        }
    }

    #[test]
    fn example_systems_are_rigid() {
        for sys in [
            RigidSystem::segment_example(),
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            assert!(sys.rigidity_violations(4).is_empty());
        }
    }

    #[test]
    fn segment_ball_is_a_line() {
        // (x₁^k, t) sits at t + k/2 on the line
        let ball = build_associated_pretree(RigidSystem::segment_example(), 5).unwrap();
        let coord = |p: &KPoint| -> Q {
            let Location::Edge { offset, .. } = p.loc else {
                return match p.loc {
                    Location::Vertex(0) => Q::from_integer(0),
                    _ => Q::from_integer(1),
                } + Q::new(
                    p.word.letters().iter().map(|&l| l.signum() as i128).sum(),
                    2,
                );
            };
            offset
                + Q::new(
                    p.word.letters().iter().map(|&l| l.signum() as i128).sum(),
                    2,
                )
        };
        let pts = &ball.points;
        for p in pts {
            for s in pts {
                for r in pts.iter().step_by(3) {
                    let (a, b, c) = (coord(p), coord(s), coord(r));
                    assert_eq!(ball.between(p, s, r), a.min(b) <= c && c <= a.max(b));
                }
            }
        }
        let distinct: BTreeSet<Q> = pts.iter().map(coord).collect();
        assert_eq!(distinct.len(), pts.len());
        assert_eq!(
            *distinct.iter().next_back().unwrap() - *distinct.iter().next().unwrap(),
            Q::from_integer(6)
        );
        assert!(pts.iter().all(|p| ball.direction_classes(p).len() <= 2));
    }

    #[test]
    fn depth_zero_ball_is_k() {
        let sys = RigidSystem::tripod_example();
        let ball = build_associated_pretree(sys.clone(), 0).unwrap();
        assert_eq!(ball.points.len(), sys.sample_locations().len());
        assert!(ball.points.iter().all(|p| p.word.is_empty()));
    }

    #[test]
    fn iota_is_an_embedding() {
        for sys in [
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let ball = build_associated_pretree(sys.clone(), 1).unwrap();
            let locs = sys.sample_locations();
            for a in &locs {
                for b in &locs {
                    for c in &locs {
                        assert_eq!(
                            ball.between(&ball.iota(a), &ball.iota(b), &ball.iota(c)),
                            sys.tree.between(a, b, c)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn balls_satisfy_pretree_axioms() {
        for sys in [
            RigidSystem::segment_example(),
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let ball = build_associated_pretree(sys, 3).unwrap();
            let rng = RefCell::new(ChaCha8Rng::seed_from_u64(9));
            let report = check_axioms(
                &ball,
                &ball.points,
                Sampling::Random {
                    triples: 300,
                    rng: &rng,
                },
            );
            assert!(report.passed(), "{:?}", report.counterexample);
        }
    }

    #[test]
    fn action_condition_holds() {
        for sys in [
            RigidSystem::segment_example(),
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let r = check_action_condition(&sys, 4);
            assert!(
                r.checked > 0 && r.violations.is_empty(),
                "{:?}",
                r.violations.first()
            );
            // the normal forms agree with the union-find closure
            let ball = build_associated_pretree(sys.clone(), 0).unwrap();
            let locs = sys.sample_locations();
            for y in enumerate_words(sys.rank(), 3) {
                for a in &locs {
                    let p = ball.act(&y, &ball.iota(a));
                    assert_eq!(p.word.is_empty(), sys.apply_word(&y, a).is_some());
                }
            }
        }
    }

    #[test]
    fn orbit_graph_of_segment_interior_point() {
        let sys = RigidSystem::segment_example();
        let og = orbit_graphs(&sys, &sys.tree.at(0, q(1, 4)).unwrap(), 10).unwrap();
        assert_eq!(og.vertices.len(), 2);
        assert_eq!(og.rank(), 0);
        assert_eq!(og.edges, vec![(0, 1, 1, 2)]);
    }

    #[test]
    fn fixed_point_gives_a_loop() {
        let sys = RigidSystem::interval_pair_example();
        let mid = sys.tree.at(0, q(1, 1)).unwrap();
        let og = orbit_graphs(&sys, &mid, 10).unwrap();
        assert!(og.edges.iter().any(|&(b, c, i, _)| b == c && i == 2));
        assert!(og.rank() >= 1);
    }

    #[test]
    fn index_counts_agree() {
        for (sys, total) in [
            (RigidSystem::segment_example(), 0),
            (RigidSystem::tripod_example(), 2),
            (RigidSystem::interval_pair_example(), 2),
        ] {
            let r = index_via_orbit_graphs(&sys, 20).unwrap();
            assert_eq!(r.total, total, "{r:?}");
            assert!(r.audits_hold(), "{r:?}");
            assert!(r.orbits.iter().all(|o| o.index >= 0));
        }
    }

    #[test]
    fn blown_components_match_ball_directions() {
        let sys = RigidSystem::tripod_example();
        let og = orbit_graphs(&sys, &Location::Vertex(0), 10).unwrap();
        let n_components = og.component_ranks.len();
        let ball = build_associated_pretree(sys.clone(), 3).unwrap();
        let p = ball.iota(&Location::Vertex(0));
        let stab: Vec<Word> = enumerate_words(2, 2)
            .into_iter()
            .filter(|y| !y.is_empty() && ball.act(y, &p) == p)
            .collect();
        assert!(!stab.is_empty());
        assert_eq!(ball.direction_orbits(&p, &stab), n_components);
        assert_eq!(n_components, 2);
    }

    #[test]
    fn non_stabilizing_orbit_is_reported() {
        // an irrational-free but long orbit: a shift by 1/64 on [0, 1]
        let text = r#"{"tree": "vertices 2\nedge 0 1 1", "maps": [{"domain": ["v0", "e0:63/64"], "image": ["e0:1/64", "v1"]}]}"#;
        let sys = parse_rigid_system(text).unwrap();
        assert!(matches!(
            index_via_orbit_graphs(&sys, 8),
            Err(Error::NotStabilized(8))
        ));
        assert!(index_via_orbit_graphs(&sys, 200).is_ok());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_rigid_system("{"), Err(Error::Parse { .. })));
        let bad = r#"{"tree": "vertices 2\nedge 0 1 1", "maps": [{"domain": ["v0", "v1"], "image": ["v0", "e0:1/2"]}]}"#;
        assert!(parse_rigid_system(bad).is_err());
    }

    fn fixed_points(ball: &AssociatedPretreeBall, y: &Word) -> Vec<KPoint> {
        ball.points
            .iter()
            .filter(|p| ball.act(y, p) == **p)
            .cloned()
            .collect()
    }

    #[test]
    fn fixed_sets_lie_in_one_translate_of_k() {
        for sys in [
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let ball = build_associated_pretree(sys.clone(), 3).unwrap();
            for y in enumerate_words(sys.rank(), 3)
                .into_iter()
                .filter(|y| !y.is_empty() && y.is_cyclically_reduced())
            {
                let fix = fixed_points(&ball, &y);
                if fix.is_empty() {
                    continue;
                }
                let in_translate = |x: &Word, p: &KPoint| {
                    sys.apply_word(&x.inverse().mul(&p.word), &p.loc).is_some()
                };
                assert!(
                    fix.iter()
                        .any(|c| fix.iter().all(|p| in_translate(&c.word, p))),
                    "{y}"
                );
            }
        }
    }

    #[test]
    fn ball_actions_are_rigid() {
        let sys = RigidSystem::tripod_example();
        let ball = build_associated_pretree(sys.clone(), 2).unwrap();
        for y in enumerate_words(sys.rank(), 2)
            .into_iter()
            .filter(|y| !y.is_empty())
        {
            let fix = fixed_points(&ball, &y);
            for p in &fix {
                for s in ball.points.iter().filter(|s| !fix.contains(s)) {
                    // s lies in a direction at p that misses the fixed set
                    if fix.iter().any(|q| q != p && ball.between(p, s, q)) {
                        continue;
                    }
                    assert!(
                        ball.between(s, &ball.act(&y, s), p),
                        "{y} maps a direction at {p:?} into itself"
                    );
                }
            }
        }
    }

    #[test]
    fn branch_orbits_meet_special_points() {
        for sys in [
            RigidSystem::tripod_example(),
            RigidSystem::interval_pair_example(),
        ] {
            let ball = build_associated_pretree(sys.clone(), 2).unwrap();
            let special: BTreeSet<Location> = sys.special_points().into_iter().collect();
            let mut branch = 0;
            for p in &ball.points {
                if ball.direction_classes(p).len() >= 3 {
                    branch += 1;
                    let orbit = orbit_graphs(&sys, &p.loc, 50).unwrap();
                    assert!(orbit.vertices.iter().any(|b| special.contains(b)), "{p:?}");
                }
            }
            assert!(branch > 0);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn shift_systems_have_index_zero(k in 1i128..12, d in 2i128..13) {
            proptest::prop_assume!(k < d);
            let text = format!(
                r#"{{"tree": "vertices 2\nedge 0 1 1", "maps": [{{"domain": ["v0", "e0:{}/{}"], "image": ["e0:{}/{}", "v1"]}}]}}"#,
                d - k, d, k, d
            );
            let sys = parse_rigid_system(&text).unwrap();
            let r = index_via_orbit_graphs(&sys, 64).unwrap();
            proptest::prop_assert_eq!(r.total, 0);
            proptest::prop_assert!(r.audits_hold());
            proptest::prop_assert!(check_action_condition(&sys, 2).violations.is_empty());
        }
    }
}
