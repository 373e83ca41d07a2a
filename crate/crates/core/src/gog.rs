//! Graphs of groups, fundamental-group presentations and elementary moves.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A group word: `k + 1` stands for generator `k`, `-(k + 1)` for its inverse.
pub type GWord = Vec<i32>;

fn gen(k: usize, sign: i32) -> i32 {
    sign * (k as i32 + 1)
}

pub fn reduce_gword(w: &[i32]) -> GWord {
    let mut out: GWord = Vec::with_capacity(w.len());
    for &x in w {
        if out.last() == Some(&-x) {
            out.pop();
        } else {
            out.push(x);
        }
    }
    out
}

pub fn inverse_gword(w: &[i32]) -> GWord {
    w.iter().rev().map(|x| -x).collect()
}

fn cyclic_reduce_gword(w: &[i32]) -> GWord {
    let mut w = reduce_gword(w);
    while w.len() >= 2 && w[0] == -w[w.len() - 1] {
        w.pop();
        w.remove(0);
    }
    w
}

/// Replaces each generator `k` by `images[k]`.
pub fn substitute_gword(w: &[i32], images: &[GWord]) -> Result<GWord> {
    let mut out = Vec::new();
    for &x in w {
        let k = x.unsigned_abs() as usize - 1;
        let img = images.get(k).ok_or_else(|| Error::Invalid(format!("generator {} has no image", k + 1)))?;
        if x > 0 {
            out.extend_from_slice(img);
        } else {
            out.extend(inverse_gword(img));
        }
    }
    Ok(reduce_gword(&out))
}

fn shift_gword(w: &[i32], by: usize) -> GWord {
    w.iter().map(|&x| x.signum() * (x.abs() + by as i32)).collect()
}

fn check_gword(w: &[i32], ngens: usize) -> bool {
    w.iter().all(|&x| x != 0 && (x.unsigned_abs() as usize) <= ngens)
}

/// Parses `a b^-1 c^3`; the empty string is the identity.
pub fn parse_gword(s: &str, gens: &[String]) -> Result<GWord> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        if tok == "1" {
            continue;
        }
        let (name, exp) = match tok.split_once('^') {
            Some((n, e)) => (n, e.parse::<i32>().map_err(|_| Error::Invalid(format!("bad exponent in {tok}")))?),
            None => (tok, 1),
        };
        let k = gens.iter().position(|g| g == name).ok_or_else(|| Error::Invalid(format!("unknown generator {name}")))?;
        for _ in 0..exp.unsigned_abs() {
            out.push(gen(k, exp.signum()));
        }
    }
    Ok(out)
}

pub fn format_gword(w: &[i32], gens: &[String]) -> String {
    if w.is_empty() {
        return "1".into();
    }
    let mut parts = Vec::new();
    let mut i = 0;
    while i < w.len() {
        let mut j = i;
        while j < w.len() && w[j] == w[i] {
            j += 1;
        }
        let name = &gens[w[i].unsigned_abs() as usize - 1];
        let e = (j - i) as i32 * w[i].signum();
        parts.push(if e == 1 { name.clone() } else { format!("{name}^{e}") });
        i = j;
    }
    parts.join(" ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Presentation {
    pub generators: Vec<String>,
    pub relators: Vec<GWord>,
}

impl Presentation {
    pub fn new(generators: &[&str], relators: Vec<GWord>) -> Self {
        Presentation { generators: generators.iter().map(|s| s.to_string()).collect(), relators }
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.relators {
            if !check_gword(r, self.generators.len()) {
                return Err(Error::Invalid("relator over undeclared generators".into()));
            }
        }
        Ok(())
    }

    /// Tietze elimination of generators occurring once in some relator,
    /// latest generators first; drops trivial and duplicate relators.
    pub fn simplify(&self) -> Presentation {
        let mut gens: Vec<Option<String>> = self.generators.iter().cloned().map(Some).collect();
        let mut rels: Vec<GWord> = self.relators.iter().map(|r| cyclic_reduce_gword(r)).collect();
        'outer: loop {
            rels.retain(|r| !r.is_empty());
            for k in (0..gens.len()).rev() {
                if gens[k].is_none() {
                    continue;
                }
                let g = k as i32 + 1;
                let Some((ri, pos)) = rels.iter().enumerate().find_map(|(ri, r)| {
                    let occ: Vec<usize> = (0..r.len()).filter(|&i| r[i].abs() == g).collect();
                    (occ.len() == 1).then(|| (ri, occ[0]))
                }) else {
                    continue;
                };
                let r = rels.remove(ri);
                // r = u g^s v  =>  g = (u⁻¹ v⁻¹)^s
                let mut val = inverse_gword(&r[..pos]);
                val.extend(inverse_gword(&r[pos + 1..]));
                if r[pos] < 0 {
                    val = inverse_gword(&val);
                }
                let images: Vec<GWord> =
                    (0..gens.len()).map(|j| if j == k { val.clone() } else { vec![j as i32 + 1] }).collect();
                rels = rels.iter().map(|r| cyclic_reduce_gword(&substitute_gword(r, &images).expect("images"))).collect();
                gens[k] = None;
                continue 'outer;
            }
            break;
        }
        // renumber surviving generators
        let mut map = BTreeMap::new();
        let mut names = Vec::new();
        for (k, g) in gens.iter().enumerate() {
            if let Some(n) = g {
                map.insert(k as i32 + 1, names.len() as i32 + 1);
                names.push(n.clone());
            }
        }
        let mut out: Vec<GWord> = Vec::new();
        for r in rels {
            let r: GWord = r.iter().map(|x| x.signum() * map[&x.abs()]).collect();
            if !out.iter().any(|s| same_relator(s, &r)) {
                out.push(r);
            }
        }
        Presentation { generators: names, relators: out }
    }
}

/// Equal up to cyclic permutation and inversion.
fn same_relator(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let bi = inverse_gword(b);
    (0..a.len().max(1)).any(|s| {
        let rot: GWord = a[s..].iter().chain(&a[..s]).copied().collect();
        rot == b || rot == bi
    })
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rels: Vec<String> = self.relators.iter().map(|r| format_gword(r, &self.generators)).collect();
        write!(f, "< {} | {} >", self.generators.join(", "), rels.join(", "))
    }
}

/// Free rank and torsion invariant factors of the abelianization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbelianInvariants {
    pub rank: usize,
    pub torsion: Vec<u64>,
}

fn relation_matrix(p: &Presentation) -> Vec<Vec<i128>> {
    p.relators
        .iter()
        .map(|r| {
            let mut row = vec![0i128; p.generators.len()];
            for &x in r {
                row[x.unsigned_abs() as usize - 1] += x.signum() as i128;
            }
            row
        })
        .collect()
}

/// Diagonal of the Smith normal form (nonzero entries, each dividing the next).
pub fn smith_diagonal(mut m: Vec<Vec<i128>>) -> Vec<i128> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut diag = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        // pivot: smallest nonzero absolute value in the remaining block
        let Some((pi, pj)) = (t..rows)
            .flat_map(|i| (t..cols).map(move |j| (i, j)))
            .filter(|&(i, j)| m[i][j] != 0)
            .min_by_key(|&(i, j)| m[i][j].abs())
        else {
            break;
        };
        m.swap(t, pi);
        for row in m.iter_mut() {
            row.swap(t, pj);
        }
        let mut done = true;
        for i in t + 1..rows {
            let q = m[i][t] / m[t][t];
            if q != 0 {
                for j in t..cols {
                    m[i][j] -= q * m[t][j];
                }
            }
            done &= m[i][t] == 0;
        }
        for j in t + 1..cols {
            let q = m[t][j] / m[t][t];
            if q != 0 {
                for row in m.iter_mut().skip(t) {
                    row[j] -= q * row[t];
                }
            }
            done &= m[t][j] == 0;
        }
        if !done {
            continue;
        }
        // the pivot must divide the rest of the block
        if let Some(i) = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| m[i][j] % m[t][t] != 0)) {
            for j in t..cols {
                let v = m[i][j];
                m[t][j] += v;
            }
            continue;
        }
        diag.push(m[t][t].abs());
        t += 1;
    }
    diag
}

pub fn abelianization_invariants(p: &Presentation) -> AbelianInvariants {
    let d = smith_diagonal(relation_matrix(p));
    AbelianInvariants {
        rank: p.generators.len() - d.len(),
        torsion: d.into_iter().filter(|&x| x > 1).map(|x| x as u64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub name: String,
    pub group: Presentation,
}

/// A geometric edge `e` from `from` to `to`; its reverse `ē` swaps the maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub group: Presentation,
    /// Images of the edge generators in the origin group.
    pub sigma: Vec<GWord>,
    /// Images in the terminus group.
    pub tau: Vec<GWord>,
}

/// An oriented edge: `rev` selects `ē`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Oriented {
    pub edge: usize,
    pub rev: bool,
}

impl Oriented {
    pub fn bar(self) -> Self {
        Oriented { edge: self.edge, rev: !self.rev }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphOfGroups {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl GraphOfGroups {
    pub fn origin(&self, o: Oriented) -> usize {
        let e = &self.edges[o.edge];
        if o.rev { e.to } else { e.from }
    }

    pub fn terminus(&self, o: Oriented) -> usize {
        self.origin(o.bar())
    }

    pub fn sigma(&self, o: Oriented) -> &[GWord] {
        let e = &self.edges[o.edge];
        if o.rev { &e.tau } else { &e.sigma }
    }

    pub fn tau(&self, o: Oriented) -> &[GWord] {
        self.sigma(o.bar())
    }

    fn set_sigma(&mut self, o: Oriented, origin: usize, maps: Vec<GWord>) {
        let e = &mut self.edges[o.edge];
        if o.rev {
            e.to = origin;
            e.tau = maps;
        } else {
            e.from = origin;
            e.sigma = maps;
        }
    }

    pub fn oriented_edges(&self) -> impl Iterator<Item = Oriented> + '_ {
        (0..self.edges.len()).flat_map(|k| [Oriented { edge: k, rev: false }, Oriented { edge: k, rev: true }])
    }

    /// Number of oriented edges starting at `v`.
    pub fn valency(&self, v: usize) -> usize {
        self.oriented_edges().filter(|&o| self.origin(o) == v).count()
    }

    /// Structural checks: endpoints, map arities, words over the right generators, connectivity.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::Invalid("no vertices".into()));
        }
        for v in &self.vertices {
            v.group.validate()?;
        }
        for (k, e) in self.edges.iter().enumerate() {
            e.group.validate()?;
            if e.from >= self.vertices.len() || e.to >= self.vertices.len() {
                return Err(Error::Invalid(format!("edge {k} has a missing endpoint")));
            }
            let n = e.group.generators.len();
            if e.sigma.len() != n || e.tau.len() != n {
                return Err(Error::Invalid(format!("edge {k}: boundary maps must cover all {n} generators")));
            }
            let (a, b) = (self.vertices[e.from].group.generators.len(), self.vertices[e.to].group.generators.len());
            if !e.sigma.iter().all(|w| check_gword(w, a)) || !e.tau.iter().all(|w| check_gword(w, b)) {
                return Err(Error::Invalid(format!("edge {k}: image outside the vertex group")));
            }
        }
        if self.components() != 1 {
            return Err(Error::Invalid("graph is not connected".into()));
        }
        Ok(())
    }

    fn components(&self) -> usize {
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(self.vertices.len());
        let mut n = self.vertices.len();
        for e in &self.edges {
            if uf.union(e.from, e.to) {
                n -= 1;
            }
        }
        n
    }

    /// A spanning tree found by breadth-first search from vertex 0.
    pub fn default_tree(&self) -> BTreeSet<usize> {
        let mut seen = vec![false; self.vertices.len()];
        let mut tree = BTreeSet::new();
        let mut q = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = q.pop_front() {
            for (k, e) in self.edges.iter().enumerate() {
                for (a, b) in [(e.from, e.to), (e.to, e.from)] {
                    if a == v && !seen[b] {
                        seen[b] = true;
                        tree.insert(k);
                        q.push_back(b);
                    }
                }
            }
        }
        tree
    }

    pub fn check_tree(&self, tree: &BTreeSet<usize>) -> Result<()> {
        if tree.iter().any(|&k| k >= self.edges.len()) {
            return Err(Error::NotATree("unknown edge".into()));
        }
        if tree.len() + 1 != self.vertices.len() {
            return Err(Error::NotATree(format!("{} edges for {} vertices", tree.len(), self.vertices.len())));
        }
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(self.vertices.len());
        for &k in tree {
            if !uf.union(self.edges[k].from, self.edges[k].to) {
                return Err(Error::NotATree(format!("edge {k} closes a cycle")));
            }
        }
        Ok(())
    }

    fn qualified_names(&self) -> Vec<Vec<String>> {
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &self.vertices {
            for g in &v.group.generators {
                *count.entry(g).or_default() += 1;
            }
        }
        self.vertices
            .iter()
            .map(|v| {
                v.group
                    .generators
                    .iter()
                    .map(|g| if count[g.as_str()] > 1 { format!("{}.{g}", v.name) } else { g.clone() })
                    .collect()
            })
            .collect()
    }

    /// The presentation of `π(𝒢(X), T)` with one stable letter per oriented edge.
    pub fn fundamental_presentation(&self, tree: &BTreeSet<usize>) -> Result<Presentation> {
        self.validate()?;
        self.check_tree(tree)?;
        let names = self.qualified_names();
        let mut offset = Vec::new();
        let mut generators = Vec::new();
        let mut relators = Vec::new();
        for (v, ns) in self.vertices.iter().zip(&names) {
            offset.push(generators.len());
            relators.extend(v.group.relators.iter().map(|r| shift_gword(r, generators.len())));
            generators.extend(ns.iter().cloned());
        }
        let base = generators.len();
        let stable = |o: Oriented| gen(base + 2 * o.edge + usize::from(o.rev), 1);
        for e in &self.edges {
            generators.push(format!("t_{}", e.name));
            generators.push(format!("t_{}'", e.name));
        }
        for &k in tree {
            for rev in [false, true] {
                relators.push(vec![stable(Oriented { edge: k, rev })]);
            }
        }
        for o in self.oriented_edges() {
            let (so, to) = (offset[self.origin(o)], offset[self.terminus(o)]);
            let t = stable(o);
            for (s, tw) in self.sigma(o).iter().zip(self.tau(o)) {
                let mut r = vec![-t];
                r.extend(shift_gword(s, so));
                r.push(t);
                r.extend(inverse_gword(&shift_gword(tw, to)));
                relators.push(r);
            }
        }
        for k in 0..self.edges.len() {
            relators.push(vec![stable(Oriented { edge: k, rev: false }), stable(Oriented { edge: k, rev: true })]);
        }
        Ok(Presentation { generators, relators })
    }

    pub fn invariants(&self) -> Result<AbelianInvariants> {
        Ok(abelianization_invariants(&self.fundamental_presentation(&self.default_tree())?))
    }

    /// Free reduction of every map and relator, for comparisons.
    pub fn normalized(&self) -> GraphOfGroups {
        let mut g = self.clone();
        for v in &mut g.vertices {
            v.group.relators = v.group.relators.iter().map(|r| reduce_gword(r)).collect();
        }
        for e in &mut g.edges {
            e.sigma = e.sigma.iter().map(|w| reduce_gword(w)).collect();
            e.tau = e.tau.iter().map(|w| reduce_gword(w)).collect();
            e.group.relators = e.group.relators.iter().map(|r| reduce_gword(r)).collect();
        }
        g
    }

    pub fn iso_eq(&self, other: &GraphOfGroups) -> bool {
        self.normalized() == other.normalized()
    }
}

/// Slides `e₁` along `e₂`; `witness[c]` writes `τ_{e₁}(c)` as a word in the generators of `C₂`.
pub fn slide(g: &GraphOfGroups, e1: Oriented, e2: Oriented, witness: &[GWord]) -> Result<GraphOfGroups> {
    g.validate()?;
    if e1.edge >= g.edges.len() || e2.edge >= g.edges.len() {
        return Err(Error::Invalid("unknown edge".into()));
    }
    if e1.edge == e2.edge {
        return Err(Error::PreconditionFailed("cannot slide an edge along itself".into()));
    }
    if g.terminus(e1) != g.origin(e2) {
        return Err(Error::PreconditionFailed("edges are not adjacent".into()));
    }
    let c2 = g.edges[e2.edge].group.generators.len();
    if witness.len() != g.edges[e1.edge].group.generators.len() || !witness.iter().all(|w| check_gword(w, c2)) {
        return Err(Error::ContainmentNotWitnessed("witness arity or alphabet mismatch".into()));
    }
    for (c, w) in witness.iter().enumerate() {
        let lhs = reduce_gword(&g.tau(e1)[c]);
        let rhs = substitute_gword(w, g.sigma(e2))?;
        if lhs != rhs {
            return Err(Error::ContainmentNotWitnessed(format!("generator {} of the sliding edge", c + 1)));
        }
    }
    let new_tau: Vec<GWord> = witness.iter().map(|w| substitute_gword(w, g.tau(e2))).collect::<Result<_>>()?;
    let mut out = g.clone();
    out.set_sigma(e1.bar(), g.terminus(e2), new_tau);
    Ok(out)
}

/// Replaces `σ_e` by `g ↦ h⁻¹ σ_e(g) h`.
pub fn conjugate_boundary(g: &GraphOfGroups, e: Oriented, h: &[i32]) -> Result<GraphOfGroups> {
    g.validate()?;
    if e.edge >= g.edges.len() {
        return Err(Error::Invalid("unknown edge".into()));
    }
    let v = g.origin(e);
    if !check_gword(h, g.vertices[v].group.generators.len()) {
        return Err(Error::BadWitness("conjugator outside the origin group".into()));
    }
    let maps = g
        .sigma(e)
        .iter()
        .map(|s| {
            let mut w = inverse_gword(h);
            w.extend_from_slice(s);
            w.extend_from_slice(h);
            reduce_gword(&w)
        })
        .collect();
    let mut out = g.clone();
    out.set_sigma(e, v, maps);
    Ok(out)
}

/// A subgroup `C₁` of the origin group that properly contains `σ_e(C)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldData {
    pub generators: Vec<String>,
    #[serde(default)]
    pub relators: Vec<GWord>,
    /// Images of the `C₁` generators in the origin group.
    pub images: Vec<GWord>,
    /// Each generator of `C` as a word in the `C₁` generators.
    pub witness: Vec<GWord>,
}

/// `A *_C B  →  A *_{C₁} (C₁ *_C B)` along `e` (origin side `A`).
pub fn fold(g: &GraphOfGroups, e: Oriented, data: &FoldData) -> Result<GraphOfGroups> {
    g.validate()?;
    if e.edge >= g.edges.len() {
        return Err(Error::Invalid("unknown edge".into()));
    }
    let (u, v) = (g.origin(e), g.terminus(e));
    if u == v {
        return Err(Error::PreconditionFailed("cannot fold a loop".into()));
    }
    let n1 = data.generators.len();
    let na = g.vertices[u].group.generators.len();
    let ce = &g.edges[e.edge].group;
    if data.images.len() != n1
        || data.witness.len() != ce.generators.len()
        || !data.images.iter().all(|w| check_gword(w, na))
        || !data.witness.iter().all(|w| check_gword(w, n1))
        || !data.relators.iter().all(|w| check_gword(w, n1))
    {
        return Err(Error::BadWitness("fold data arity or alphabet mismatch".into()));
    }
    for (c, w) in data.witness.iter().enumerate() {
        if substitute_gword(w, &data.images)? != reduce_gword(&g.sigma(e)[c]) {
            return Err(Error::BadWitness(format!("generator {} of the edge group is not witnessed", c + 1)));
        }
    }
    // the new terminus group: B's generators, then a copy of C₁
    let mut out = g.clone();
    let b = &mut out.vertices[v].group;
    let nb = b.generators.len();
    for name in &data.generators {
        b.generators.push(format!("{}.{}", g.edges[e.edge].name, name));
    }
    b.relators.extend(data.relators.iter().map(|r| shift_gword(r, nb)));
    for (c, w) in data.witness.iter().enumerate() {
        let mut r = shift_gword(w, nb);
        r.extend(inverse_gword(&g.tau(e)[c]));
        b.relators.push(r);
    }
    out.edges[e.edge].group = Presentation { generators: data.generators.clone(), relators: data.relators.clone() };
    out.set_sigma(e, u, data.images.clone());
    out.set_sigma(e.bar(), v, (0..n1).map(|k| vec![gen(nb + k, 1)]).collect());
    Ok(out)
}

/// The inverse of [`fold`]: `witness[c]` writes each generator of the restored `C` in `C₁`.
pub fn unfold(g: &GraphOfGroups, e: Oriented, c_generators: &[String], witness: &[GWord]) -> Result<GraphOfGroups> {
    g.validate()?;
    if e.edge >= g.edges.len() {
        return Err(Error::Invalid("unknown edge".into()));
    }
    let (u, v) = (g.origin(e), g.terminus(e));
    if u == v {
        return Err(Error::PreconditionFailed("cannot unfold a loop".into()));
    }
    let c1 = g.edges[e.edge].group.clone();
    let n1 = c1.generators.len();
    let b1 = &g.vertices[v].group;
    let nb1 = b1.generators.len();
    if n1 > nb1 || witness.len() != c_generators.len() || !witness.iter().all(|w| check_gword(w, n1)) {
        return Err(Error::BadWitness("unfold data arity or alphabet mismatch".into()));
    }
    // C₁ must sit in B₁ as its last generators, literally
    let nb = nb1 - n1;
    let literal = g.tau(e).iter().enumerate().all(|(k, w)| *w == vec![gen(nb + k, 1)]);
    if !literal {
        return Err(Error::BadWitness("edge group is not a free factor of the terminus group".into()));
    }
    let uses_c1 = |w: &[i32]| w.iter().any(|x| x.unsigned_abs() as usize > nb);
    for o in g.oriented_edges().filter(|&o| o.edge != e.edge && g.origin(o) == v) {
        if g.sigma(o).iter().any(|w| uses_c1(w)) {
            return Err(Error::BadWitness("another edge maps into the folded part".into()));
        }
    }
    let mut rest: Vec<GWord> = Vec::new();
    let mut own: Vec<GWord> = c1.relators.iter().map(|r| shift_gword(r, nb)).collect();
    let mut tau_b: Vec<Option<GWord>> = vec![None; witness.len()];
    for r in &b1.relators {
        if !uses_c1(r) {
            rest.push(r.clone());
            continue;
        }
        if let Some(i) = own.iter().position(|o| o == r) {
            own.remove(i);
            continue;
        }
        let hit = witness.iter().enumerate().find(|(c, w)| {
            let p = shift_gword(w, nb);
            tau_b[*c].is_none() && r.starts_with(&p) && !uses_c1(&r[p.len()..])
        });
        match hit {
            Some((c, w)) => tau_b[c] = Some(inverse_gword(&r[w.len()..])),
            None => return Err(Error::BadWitness("terminus relator mixes the two factors".into())),
        }
    }
    let tau_b: Vec<GWord> = tau_b
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::BadWitness("some generator of C has no defining relator".into()))?;
    let sigma_new: Vec<GWord> = witness.iter().map(|w| substitute_gword(w, g.sigma(e))).collect::<Result<_>>()?;
    let mut out = g.clone();
    let b = &mut out.vertices[v].group;
    b.generators.truncate(nb);
    b.relators = rest;
    out.edges[e.edge].group = Presentation { generators: c_generators.to_vec(), relators: Vec::new() };
    out.set_sigma(e, u, sigma_new);
    out.set_sigma(e.bar(), v, tau_b);
    Ok(out)
}

/// Removes edge `k`, merging its endpoint groups through the edge relations
/// (an HNN vertex when `k` is a loop).
pub fn collapse(g: &GraphOfGroups, k: usize) -> Result<GraphOfGroups> {
    g.validate()?;
    let e = g.edges.get(k).ok_or_else(|| Error::Invalid("unknown edge".into()))?.clone();
    let mut out = g.clone();
    out.edges.remove(k);
    let (u, v) = (e.from, e.to);
    if u == v {
        let a = &mut out.vertices[u].group;
        let t = a.generators.len();
        a.generators.push(format!("t_{}", e.name));
        let tg = gen(t, 1);
        for (s, tw) in e.sigma.iter().zip(&e.tau) {
            let mut r = vec![-tg];
            r.extend_from_slice(s);
            r.push(tg);
            r.extend(inverse_gword(tw));
            a.relators.push(r);
        }
        return Ok(out);
    }
    let na = g.vertices[u].group.generators.len();
    let bgroup = g.vertices[v].group.clone();
    {
        let a = &mut out.vertices[u];
        a.name = format!("{}+{}", g.vertices[u].name, g.vertices[v].name);
        let clash: BTreeSet<&String> = a.group.generators.iter().collect();
        let bnames: Vec<String> = bgroup
            .generators
            .iter()
            .map(|n| if clash.contains(n) { format!("{}.{n}", g.vertices[v].name) } else { n.clone() })
            .collect();
        a.group.generators.extend(bnames);
        a.group.relators.extend(bgroup.relators.iter().map(|r| shift_gword(r, na)));
        for (s, tw) in e.sigma.iter().zip(&e.tau) {
            let mut r = s.clone();
            r.extend(inverse_gword(&shift_gword(tw, na)));
            a.group.relators.push(r);
        }
    }
    // edges at v now land in the merged group; vertex indices above v shift down
    for ed in &mut out.edges {
        if ed.from == v {
            ed.from = u;
            ed.sigma = ed.sigma.iter().map(|w| shift_gword(w, na)).collect();
        }
        if ed.to == v {
            ed.to = u;
            ed.tau = ed.tau.iter().map(|w| shift_gword(w, na)).collect();
        }
    }
    out.vertices.remove(v);
    for ed in &mut out.edges {
        if ed.from > v {
            ed.from -= 1;
        }
        if ed.to > v {
            ed.to -= 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reducedness {
    Reduced,
    NotReduced,
    Undetermined,
}

fn rank_q(rows: &[Vec<i128>], cols: usize) -> usize {
    // rank over Q equals the number of nonzero Smith diagonal entries
    if rows.is_empty() || cols == 0 {
        return 0;
    }
    smith_diagonal(rows.to_vec()).len()
}

/// Valency-one and -two vertices must properly contain each adjacent edge image.
pub fn is_reduced(g: &GraphOfGroups) -> Result<Reducedness> {
    g.validate()?;
    let mut undetermined = false;
    for v in 0..g.vertices.len() {
        let val = g.valency(v);
        if val == 0 || val > 2 {
            continue;
        }
        let grp = &g.vertices[v].group;
        let n = grp.generators.len();
        let rel = relation_matrix(grp);
        for o in g.oriented_edges().filter(|&o| g.origin(o) == v) {
            let images: Vec<GWord> = g.sigma(o).iter().map(|w| reduce_gword(w)).collect();
            let whole = (0..n).all(|k| images.iter().any(|w| *w == vec![gen(k, 1)] || *w == vec![gen(k, -1)]));
            if whole {
                return Ok(Reducedness::NotReduced);
            }
            let mut rows = rel.clone();
            for w in &images {
                let mut row = vec![0i128; n];
                for &x in w {
                    row[x.unsigned_abs() as usize - 1] += x.signum() as i128;
                }
                rows.push(row);
            }
            if rank_q(&rows, n) < n {
                continue;
            }
            undetermined = true;
        }
    }
    Ok(if undetermined { Reducedness::Undetermined } else { Reducedness::Reduced })
}

// ---- JSON ----

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupJson {
    pub generators: Vec<String>,
    #[serde(default)]
    pub relators: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexJson {
    pub name: String,
    pub group: GroupJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub group: GroupJson,
    pub sigma: Vec<String>,
    pub tau: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GogJson {
    pub vertices: Vec<VertexJson>,
    pub edges: Vec<EdgeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<usize>>,
}

fn group_from_json(j: &GroupJson) -> Result<Presentation> {
    let relators = j.relators.iter().map(|r| parse_gword(r, &j.generators)).collect::<Result<_>>()?;
    Ok(Presentation { generators: j.generators.clone(), relators })
}

fn group_to_json(p: &Presentation) -> GroupJson {
    GroupJson {
        generators: p.generators.clone(),
        relators: p.relators.iter().map(|r| format_gword(r, &p.generators)).collect(),
    }
}

impl GraphOfGroups {
    pub fn from_json(j: &GogJson) -> Result<GraphOfGroups> {
        let vertices: Vec<Vertex> = j
            .vertices
            .iter()
            .map(|v| Ok(Vertex { name: v.name.clone(), group: group_from_json(&v.group)? }))
            .collect::<Result<_>>()?;
        let mut edges = Vec::new();
        for e in &j.edges {
            let vg = |i: usize| {
                vertices.get(i).map(|v| &v.group.generators).ok_or_else(|| Error::Invalid(format!("edge {} has a missing endpoint", e.name)))
            };
            let sigma = e.sigma.iter().map(|w| parse_gword(w, vg(e.from)?)).collect::<Result<_>>()?;
            let tau = e.tau.iter().map(|w| parse_gword(w, vg(e.to)?)).collect::<Result<_>>()?;
            edges.push(Edge { name: e.name.clone(), from: e.from, to: e.to, group: group_from_json(&e.group)?, sigma, tau });
        }
        let g = GraphOfGroups { vertices, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self, tree: Option<&BTreeSet<usize>>) -> GogJson {
        let vg = |i: usize| &self.vertices[i].group.generators;
        GogJson {
            vertices: self.vertices.iter().map(|v| VertexJson { name: v.name.clone(), group: group_to_json(&v.group) }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    name: e.name.clone(),
                    from: e.from,
                    to: e.to,
                    group: group_to_json(&e.group),
                    sigma: e.sigma.iter().map(|w| format_gword(w, vg(e.from))).collect(),
                    tau: e.tau.iter().map(|w| format_gword(w, vg(e.to))).collect(),
                })
                .collect(),
            tree: tree.map(|t| t.iter().copied().collect()),
        }
    }
}

// ---- random instances ----

fn random_gword<R: Rng>(rng: &mut R, ngens: usize, max_len: usize) -> GWord {
    let len = rng.gen_range(1..=max_len);
    let w: GWord = (0..len).map(|_| gen(rng.gen_range(0..ngens), if rng.gen() { 1 } else { -1 })).collect();
    let w = reduce_gword(&w);
    if w.is_empty() {
        vec![1]
    } else {
        w
    }
}

/// A connected graph of groups with cyclic edge groups.
pub fn random_gog<R: Rng>(rng: &mut R) -> GraphOfGroups {
    let nv = rng.gen_range(1..=4);
    let vertices: Vec<Vertex> = (0..nv)
        .map(|i| {
            let n = rng.gen_range(1..=3);
            let gens: Vec<String> = (0..n).map(|k| format!("{}{i}", (b'a' + k as u8) as char)).collect();
            let rels = (0..rng.gen_range(0..=1)).map(|_| random_gword(rng, n, 4)).collect();
            Vertex { name: format!("v{i}"), group: Presentation { generators: gens, relators: rels } }
        })
        .collect();
    let mut g = GraphOfGroups { vertices, edges: Vec::new() };
    let mut pairs = Vec::new();
    for v in 1..nv {
        pairs.push((rng.gen_range(0..v), v));
    }
    for _ in 0..rng.gen_range(0..=2) {
        pairs.push((rng.gen_range(0..nv), rng.gen_range(0..nv)));
    }
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        let (na, nb) = (g.vertices[a].group.generators.len(), g.vertices[b].group.generators.len());
        let (s, t) = (random_gword(rng, na, 3), random_gword(rng, nb, 3));
        g.edges.push(Edge {
            name: format!("e{k}"),
            from: a,
            to: b,
            group: Presentation::new(&["c"], Vec::new()),
            sigma: vec![s],
            tau: vec![t],
        });
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inv(rank: usize, torsion: &[u64]) -> AbelianInvariants {
        AbelianInvariants { rank, torsion: torsion.to_vec() }
    }

    fn cyclic(name: &str, g: &str) -> Vertex {
        Vertex { name: name.into(), group: Presentation::new(&[g], Vec::new()) }
    }

    fn amalgam() -> GraphOfGroups {
        GraphOfGroups {
            vertices: vec![cyclic("A", "a"), cyclic("B", "b")],
            edges: vec![Edge {
                name: "e".into(),
                from: 0,
                to: 1,
                group: Presentation::new(&["c"], Vec::new()),
                sigma: vec![vec![1, 1]],
                tau: vec![vec![1, 1, 1]],
            }],
        }
    }

    #[test]
    fn abelian_invariants() {
        assert_eq!(abelianization_invariants(&Presentation::new(&["a", "b"], vec![vec![-1, -2, 1, 2]])), inv(2, &[]));
        assert_eq!(abelianization_invariants(&Presentation::new(&["a"], vec![vec![1, 1]])), inv(0, &[2]));
        assert_eq!(abelianization_invariants(&Presentation::new(&["a", "b"], vec![vec![1, 1, -2, -2, -2]])), inv(1, &[]));
        // Z/2 x Z/3 = Z/6; Z/4 + Z/6 -> (2, 12)
        let p = Presentation::new(&["a", "b"], vec![vec![1, 1, 1, 1], vec![2, 2, 2, 2, 2, 2], vec![-1, -2, 1, 2]]);
        assert_eq!(abelianization_invariants(&p), inv(0, &[2, 12]));
    }

    #[test]
    fn presentations() {
        let g = amalgam();
        let p = g.fundamental_presentation(&BTreeSet::from([0])).unwrap();
        assert_eq!(p.generators.len(), 2 + 2);
        assert_eq!(p.relators.len(), 2 + 2 + 1);
        let s = p.simplify();
        assert_eq!(s.to_string(), "< a, b | a^2 b^-3 >");
        assert_eq!(abelianization_invariants(&p), inv(1, &[]));

        let hnn = GraphOfGroups {
            vertices: vec![cyclic("A", "a")],
            edges: vec![Edge {
                name: "e".into(),
                from: 0,
                to: 0,
                group: Presentation::default(),
                sigma: vec![],
                tau: vec![],
            }],
        };
        let p = hnn.fundamental_presentation(&BTreeSet::new()).unwrap().simplify();
        assert_eq!(p.to_string(), "< a, t_e |  >");
        assert!(matches!(hnn.fundamental_presentation(&BTreeSet::from([0])), Err(Error::NotATree(_))));
        assert!(matches!(g.fundamental_presentation(&BTreeSet::new()), Err(Error::NotATree(_))));
    }

    #[test]
    fn slide_moves_an_edge() {
        // v1 -e1- v2 -e2- v3 with τ_{e1}(c) = b² = σ_{e2}(d)²
        let mut g = GraphOfGroups {
            vertices: vec![cyclic("A1", "a"), cyclic("A2", "b"), cyclic("A3", "x")],
            edges: vec![
                Edge { name: "e1".into(), from: 0, to: 1, group: Presentation::new(&["c"], vec![]), sigma: vec![vec![1]], tau: vec![vec![1, 1]] },
                Edge { name: "e2".into(), from: 1, to: 2, group: Presentation::new(&["d"], vec![]), sigma: vec![vec![1]], tau: vec![vec![1, 1, 1]] },
            ],
        };
        let before = g.invariants().unwrap();
        let e1 = Oriented { edge: 0, rev: false };
        let e2 = Oriented { edge: 1, rev: false };
        let s = slide(&g, e1, e2, &[vec![1, 1]]).unwrap();
        assert_eq!((s.edges[0].from, s.edges[0].to), (0, 2));
        assert_eq!(s.edges[0].tau, vec![vec![1; 6]]);
        assert_eq!(s.invariants().unwrap(), before);
        let back = slide(&s, e1, e2.bar(), &[vec![1, 1]]).unwrap();
        assert!(back.iso_eq(&g));
        assert!(matches!(slide(&g, e1, e2, &[vec![1]]), Err(Error::ContainmentNotWitnessed(_))));
        g.edges[0].tau = vec![vec![1, 1, 1]];
        assert!(slide(&g, e1, e2, &[vec![1, 1]]).is_err());
    }

    #[test]
    fn conjugation_and_collapse() {
        let g = amalgam();
        let e = Oriented { edge: 0, rev: false };
        assert!(conjugate_boundary(&g, e, &[]).unwrap().iso_eq(&g));
        let h = vec![1, 1, 1];
        let c = conjugate_boundary(&g, e, &h).unwrap();
        assert!(conjugate_boundary(&c, e, &inverse_gword(&h)).unwrap().iso_eq(&g));
        assert!(matches!(conjugate_boundary(&g, e, &[2]), Err(Error::BadWitness(_))));
        let k = collapse(&g, 0).unwrap();
        assert_eq!(k.vertices.len(), 1);
        assert_eq!(k.invariants().unwrap(), g.invariants().unwrap());
    }

    #[test]
    fn fold_round_trip() {
        // A = <a, a'>, C = <c> -> a, C₁ = <x, y> -> a, a'
        let g = GraphOfGroups {
            vertices: vec![
                Vertex { name: "A".into(), group: Presentation::new(&["a", "p"], vec![]) },
                cyclic("B", "b"),
            ],
            edges: vec![Edge { name: "e".into(), from: 0, to: 1, group: Presentation::new(&["c"], vec![]), sigma: vec![vec![1]], tau: vec![vec![1, 1]] }],
        };
        let data = FoldData { generators: vec!["x".into(), "y".into()], relators: vec![], images: vec![vec![1], vec![2]], witness: vec![vec![1]] };
        let e = Oriented { edge: 0, rev: false };
        let f = fold(&g, e, &data).unwrap();
        assert_eq!(f.vertices[1].group.generators.len(), 3);
        assert_eq!(f.invariants().unwrap(), g.invariants().unwrap());
        let u = unfold(&f, e, &["c".to_string()], &[vec![1]]).unwrap();
        assert!(u.iso_eq(&g), "{u:?}");
        let bad = FoldData { witness: vec![vec![2]], ..data };
        assert!(matches!(fold(&g, e, &bad), Err(Error::BadWitness(_))));
    }

    #[test]
    fn reducedness() {
        // valency one, image is the whole group
        let g = GraphOfGroups {
            vertices: vec![cyclic("A", "a"), Vertex { name: "B".into(), group: Presentation::new(&["b", "q"], vec![]) }],
            edges: vec![Edge { name: "e".into(), from: 0, to: 1, group: Presentation::new(&["c"], vec![]), sigma: vec![vec![1]], tau: vec![vec![1]] }],
        };
        assert_eq!(is_reduced(&g).unwrap(), Reducedness::NotReduced);
        let mut h = g.clone();
        h.vertices[0].group = Presentation::new(&["a", "z"], vec![]);
        assert_eq!(is_reduced(&h).unwrap(), Reducedness::Reduced);
        // <a | a^3> with image a^2: rank gives no gap
        let mut o = g.clone();
        o.vertices[0].group = Presentation::new(&["a"], vec![vec![1, 1, 1]]);
        o.edges[0].sigma = vec![vec![1, 1]];
        assert_eq!(is_reduced(&o).unwrap(), Reducedness::Undetermined);
    }

    /// Invariant factors through gcds of k×k minors.
    fn minors_oracle(p: &Presentation) -> AbelianInvariants {
        fn det(m: &[Vec<i128>]) -> i128 {
            let n = m.len();
            if n == 0 {
                return 1;
            }
            (0..n)
                .map(|j| {
                    let sub: Vec<Vec<i128>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &x)| x).collect()).collect();
                    let s = if j % 2 == 0 { 1 } else { -1 };
                    s * m[0][j] * det(&sub)
                })
                .sum()
        }
        fn gcd(a: i128, b: i128) -> i128 {
            if b == 0 { a.abs() } else { gcd(b, a % b) }
        }
        fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            if n < k {
                return vec![];
            }
            let mut out = subsets(n - 1, k);
            for mut s in subsets(n - 1, k - 1) {
                s.push(n - 1);
                out.push(s);
            }
            out
        }
        let m = relation_matrix(p);
        let (r, c) = (m.len(), p.generators.len());
        let mut d = vec![1i128];
        for k in 1..=r.min(c) {
            let mut gk = 0;
            for rs in subsets(r, k) {
                for cs in subsets(c, k) {
                    let sub: Vec<Vec<i128>> = rs.iter().map(|&i| cs.iter().map(|&j| m[i][j]).collect()).collect();
                    gk = gcd(gk, det(&sub));
                }
            }
            if gk == 0 {
                break;
            }
            d.push(gk);
        }
        let factors: Vec<i128> = d.windows(2).map(|w| w[1] / w[0]).collect();
        AbelianInvariants { rank: c - factors.len(), torsion: factors.into_iter().filter(|&x| x > 1).map(|x| x as u64).collect() }
    }

    #[test]
    fn smith_matches_minors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..=3);
            let rels = (0..rng.gen_range(0..=3)).map(|_| random_gword(&mut rng, n, 5)).collect();
            let names: Vec<String> = (0..n).map(|k| format!("g{k}")).collect();
            let p = Presentation { generators: names, relators: rels };
            assert_eq!(abelianization_invariants(&p), minors_oracle(&p), "{p}");
        }
    }

    #[test]
    fn random_graphs_present() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = random_gog(&mut rng);
            g.validate().unwrap();
            let t = g.default_tree();
            let p = g.fundamental_presentation(&t).unwrap();
            let nv: usize = g.vertices.iter().map(|v| v.group.generators.len()).sum();
            let rv: usize = g.vertices.iter().map(|v| v.group.relators.len()).sum();
            let ne: usize = g.edges.iter().map(|e| e.group.generators.len()).sum();
            assert_eq!(p.generators.len(), nv + 2 * g.edges.len());
            assert_eq!(p.relators.len(), rv + 2 * t.len() + 2 * ne + g.edges.len());
            let j = g.to_json(Some(&t));
            assert!(GraphOfGroups::from_json(&j).unwrap().iso_eq(&g));
        }
    }
}
