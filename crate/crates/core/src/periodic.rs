//! Periodic words, periodic solutions, periodic structures and their graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geq::{eval_items, item, GeneralizedEquation, Section, SectionKind};
use crate::word::{is_period, reduce, Letter, Word};

/// `w = A^r A₁` with `A` a cyclic permutation of `P^{±1}` and `A₁` a proper prefix of `A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub a: Word,
    pub r: usize,
    pub a1: Word,
    /// `+1` when `A` is a cyclic permutation of `P`, `-1` for `P⁻¹`.
    pub chi: i8,
    /// `A = rotate(P^chi, shift)`.
    pub shift: usize,
}

fn rotation_of(a: &Word, p: &Word) -> Option<usize> {
    (0..p.len()).find(|&s| p.rotate(s) == *a)
}

fn check_period(p: &Word) -> Result<()> {
    if is_period(p) {
        Ok(())
    } else {
        Err(Error::PreconditionFailed(format!("not a period (length {})", p.len())))
    }
}

/// Splits a `P`-periodic word; `Ok(None)` when `w` is not `P`-periodic.
pub fn periodic_decompose(w: &Word, p: &Word) -> Result<Option<Decomposition>> {
    check_period(p)?;
    let n = p.len();
    if w.len() < n {
        return Err(Error::ShorterThanPeriod);
    }
    let a = w.subword(0, n);
    if (n..w.len()).any(|i| w.0[i] != w.0[i - n]) {
        return Ok(None);
    }
    let (chi, shift) = match rotation_of(&a, p) {
        Some(s) => (1, s),
        None => match rotation_of(&a, &p.inverse()) {
            Some(s) => (-1, s),
            None => return Ok(None),
        },
    };
    let r = w.len() / n;
    let a1 = w.subword(r * n, w.len());
    Ok(Some(Decomposition { a, r, a1, chi, shift }))
}

/// Maximal exponent of a `P`-periodic subword of `u` (0 when there is none).
pub fn exponent(u: &Word, p: &Word) -> Result<usize> {
    check_period(p)?;
    let n = p.len();
    let q = p.inverse();
    let mut best = 0;
    let mut i = 0;
    while i + n <= u.len() {
        let a = u.subword(i, i + n);
        if rotation_of(&a, p).is_none() && rotation_of(&a, &q).is_none() {
            i += 1;
            continue;
        }
        let mut j = i + n;
        while j < u.len() && u.0[j] == u.0[j - n] {
            j += 1;
        }
        best = best.max((j - i) / n);
        // any periodic subword starting inside the run ends at j too
        i = j + 1 - n;
    }
    Ok(best)
}

fn is_variable_section(s: &Section) -> bool {
    matches!(s.kind, SectionKind::Active | SectionKind::NonActive)
}

fn section_word(s: &Section, h: &[Word]) -> Word {
    let mut v = Vec::new();
    for i in s.start..s.end {
        v.extend_from_slice(h[i - 1].letters());
    }
    Word(v)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionVerdict {
    pub start: usize,
    pub end: usize,
    pub length: usize,
    /// First of the three conditions that holds, if any.
    pub condition: Option<u8>,
    pub exponent: usize,
    /// The period `A` witnessing condition 3.
    pub witness: Option<Vec<Letter>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicVerdict {
    pub periodic: bool,
    pub sections: Vec<SectionVerdict>,
}

/// Smallest period `A` with `|A| ≤ max` such that `w` is `A`-periodic.
fn short_period(w: &Word, max: usize) -> Option<Word> {
    (1..=max.min(w.len())).find_map(|d| {
        if (d..w.len()).any(|i| w.0[i] != w.0[i - d]) {
            return None;
        }
        let a = w.subword(0, d);
        is_period(&a).then_some(a)
    })
}

/// Checks every variable section against the three periodicity conditions.
pub fn is_periodic_solution(g: &GeneralizedEquation, h: &[Word], p: &Word) -> Result<PeriodicVerdict> {
    check_period(p)?;
    if !g.is_solution(h) {
        return Err(Error::NotASolution("not a solution of the generalized equation".into()));
    }
    let mut sections = Vec::new();
    for s in g.sections().iter().filter(|s| is_variable_section(s)) {
        let w = section_word(s, h);
        let dec = if w.len() >= p.len() { periodic_decompose(&w, p)? } else { None };
        let exp = dec.as_ref().map_or(0, |d| d.r);
        let mut witness = None;
        let condition = if exp >= 2 {
            Some(1)
        } else if w.len() <= p.len() {
            Some(2)
        } else if let Some(a) = short_period(&w, p.len()) {
            witness = Some(a.0);
            Some(3)
        } else {
            None
        };
        sections.push(SectionVerdict { start: s.start, end: s.end, length: w.len(), condition, exponent: exp, witness });
    }
    let periodic = sections.iter().all(|v| v.condition.is_some()) && sections.iter().any(|v| v.condition == Some(1));
    Ok(PeriodicVerdict { periodic, sections })
}

/// Which formal copy of a boundary shared by two sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Only,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bnd {
    pub pos: usize,
    pub side: Side,
}

impl Bnd {
    fn only(pos: usize) -> Self {
        Bnd { pos, side: Side::Only }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeriodicStructure {
    pub items: BTreeSet<usize>,
    pub bases: BTreeSet<usize>,
    pub sections: BTreeSet<(usize, usize)>,
    pub chi: BTreeMap<(usize, usize), i8>,
    /// The relation `R`, as a class label per boundary copy.
    pub classes: BTreeMap<Bnd, usize>,
}

impl PeriodicStructure {
    fn shared(&self, pos: usize) -> bool {
        self.sections.iter().any(|s| s.1 == pos) && self.sections.iter().any(|s| s.0 == pos)
    }

    /// `α(μ)` under the copy convention.
    pub fn alpha_copy(&self, pos: usize) -> Bnd {
        Bnd { pos, side: if self.shared(pos) { Side::Right } else { Side::Only } }
    }

    /// `β(μ)` under the copy convention.
    pub fn beta_copy(&self, pos: usize) -> Bnd {
        Bnd { pos, side: if self.shared(pos) { Side::Left } else { Side::Only } }
    }

    /// The set of boundary copies the relation must be defined on.
    pub fn boundary_set(&self) -> BTreeSet<Bnd> {
        let mut out = BTreeSet::new();
        for &(i, j) in &self.sections {
            for l in i..=j {
                let side = if l == i && self.shared(l) {
                    Side::Right
                } else if l == j && self.shared(l) {
                    Side::Left
                } else {
                    Side::Only
                };
                out.insert(Bnd { pos: l, side });
            }
        }
        out
    }

    pub fn section_of(&self, i: usize) -> Option<(usize, usize)> {
        self.sections.iter().copied().find(|&(a, b)| a <= i && i < b)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "items": self.items,
            "bases": self.bases,
            "sections": self.sections.iter().map(|&(a, b)| json!({
                "start": a, "end": b, "chi": self.chi.get(&(a, b)),
            })).collect::<Vec<_>>(),
            "classes": self.classes.iter().map(|(b, c)| json!({
                "boundary": b.pos, "side": b.side, "class": c,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Position of each boundary copy of a periodic section in the phase of `P`:
/// `k` means the subdivision `P = P[..k] P[k..]`.
fn section_phases(s: (usize, usize), h: &[Word], p: &Word, ps: &PeriodicStructure) -> Result<BTreeMap<Bnd, usize>> {
    let sec = Section { start: s.0, end: s.1, kind: SectionKind::Active };
    let w = section_word(&sec, h);
    let n = p.len();
    let dec = if w.len() >= n { periodic_decompose(&w, p)? } else { None };
    let dec = dec.ok_or_else(|| Error::Violation(format!("section [{}, {}] is not periodic", s.0, s.1)))?;
    let mut out = BTreeMap::new();
    let mut off = 0;
    for l in s.0..=s.1 {
        let t = (dec.shift + off) % n;
        let k = if dec.chi > 0 { t } else { (n - t) % n };
        let b = if l == s.0 {
            ps.alpha_copy(l)
        } else if l == s.1 {
            ps.beta_copy(l)
        } else {
            Bnd::only(l)
        };
        out.insert(b, k);
        if l < s.1 {
            off += h[l - 1].len();
        }
    }
    Ok(out)
}

/// The structure carried by a periodic solution.
pub fn extract_structure(g: &GeneralizedEquation, h: &[Word], p: &Word) -> Result<PeriodicStructure> {
    let verdict = is_periodic_solution(g, h, p)?;
    if !verdict.periodic {
        return Err(Error::PreconditionFailed("solution is not periodic".into()));
    }
    let mut ps = PeriodicStructure::default();
    for v in verdict.sections.iter().filter(|v| v.condition == Some(1)) {
        ps.sections.insert((v.start, v.end));
    }
    for &(a, b) in &ps.sections {
        for i in a..b {
            if h[i - 1].len() >= 2 * p.len() {
                ps.items.insert(i);
            }
        }
    }
    for mu in g.variable_bases() {
        let d = g.dual(mu.id);
        let in_v = |b: &crate::geq::Base| matches!(g.item_kind(b.alpha), SectionKind::Active | SectionKind::NonActive);
        if !in_v(mu) || !in_v(d) {
            continue;
        }
        let carries = |b: &crate::geq::Base| ps.items.iter().any(|&i| b.contains_item(i));
        if carries(mu) || carries(d) {
            ps.bases.insert(mu.id);
        }
    }
    let secs: Vec<(usize, usize)> = ps.sections.iter().copied().collect();
    let mut classes = BTreeMap::new();
    for s in secs {
        let sec = Section { start: s.0, end: s.1, kind: SectionKind::Active };
        let w = section_word(&sec, h);
        let dec = periodic_decompose(&w, p)?.expect("periodic section");
        ps.chi.insert(s, dec.chi);
        classes.extend(section_phases(s, h, p, &ps)?);
    }
    ps.classes = classes;
    Ok(ps)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureViolation {
    pub condition: char,
    pub detail: String,
}

fn push(out: &mut Vec<StructureViolation>, condition: char, detail: String) {
    out.push(StructureViolation { condition, detail });
}

/// Checks conditions a)–f); an empty list means the structure is valid.
pub fn validate_structure(g: &GeneralizedEquation, ps: &PeriodicStructure) -> Vec<StructureViolation> {
    let mut out = Vec::new();
    let secs = g.sections();
    let var_section = |a: usize, b: usize| secs.iter().any(|s| s.start == a && s.end == b && is_variable_section(s));
    let in_v = |i: usize| i >= 1 && i <= g.rho && matches!(g.item_kind(i), SectionKind::Active | SectionKind::NonActive);
    for &(a, b) in &ps.sections {
        if !var_section(a, b) {
            push(&mut out, '1', format!("[{a}, {b}] is not a closed variable section"));
        }
    }
    for &i in &ps.items {
        if ps.section_of(i).is_none() {
            push(&mut out, '1', format!("item {i} lies outside the structure's sections"));
        }
    }
    for &m in &ps.bases {
        match g.base(m) {
            Some(b) if b.is_variable() => {}
            _ => push(&mut out, '1', format!("{m} is not a variable base")),
        }
    }
    if !out.is_empty() {
        return out;
    }
    // a)
    for &i in &ps.items {
        for mu in g.variable_bases().filter(|b| b.contains_item(i)) {
            if in_v(g.dual(mu.id).alpha) && !ps.bases.contains(&mu.id) {
                push(&mut out, 'a', format!("item {i} lies under base {} outside the structure", mu.id));
            }
        }
    }
    // b), c)
    for &m in &ps.bases {
        let d = g.b(m).dual.expect("variable base");
        if !ps.bases.contains(&d) {
            push(&mut out, 'b', format!("base {m} without its dual {d}"));
        }
        let b = g.b(m);
        match ps.section_of(b.alpha) {
            Some(s) if b.beta <= s.1 => {}
            _ => push(&mut out, 'c', format!("section of base {m} is not in the structure")),
        }
    }
    if !out.is_empty() {
        return out;
    }
    // d): parity union-find over sections
    let idx: BTreeMap<(usize, usize), usize> = ps.sections.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let n = idx.len();
    let mut uf = UnionFind::<usize>::new(2 * n);
    for &m in &ps.bases {
        let (b, d) = (g.b(m), g.dual(m));
        let s1 = idx[&ps.section_of(b.alpha).expect("checked")];
        let s2 = idx[&ps.section_of(d.alpha).expect("checked")];
        if b.eps * d.eps > 0 {
            uf.union(2 * s1, 2 * s2);
            uf.union(2 * s1 + 1, 2 * s2 + 1);
        } else {
            uf.union(2 * s1, 2 * s2 + 1);
            uf.union(2 * s1 + 1, 2 * s2);
        }
        if let (Some(&c1), Some(&c2)) = (ps.chi.get(&ps.section_of(b.alpha).unwrap()), ps.chi.get(&ps.section_of(d.alpha).unwrap())) {
            if b.eps * d.eps != c1 * c2 {
                push(&mut out, 'd', format!("base {m}: sign product differs from the section colouring"));
            }
        }
    }
    if (0..n).any(|k| uf.equiv(2 * k, 2 * k + 1)) {
        push(&mut out, 'd', "no colouring of the sections satisfies the sign constraints".into());
    }
    for s in &ps.sections {
        if !matches!(ps.chi.get(s), Some(1) | Some(-1)) {
            push(&mut out, 'd', format!("colouring undefined on [{}, {}]", s.0, s.1));
        }
    }
    // e)
    let want = ps.boundary_set();
    let have: BTreeSet<Bnd> = ps.classes.keys().copied().collect();
    for b in want.difference(&have) {
        push(&mut out, 'e', format!("relation undefined on boundary {} ({:?})", b.pos, b.side));
    }
    for b in have.difference(&want) {
        push(&mut out, 'e', format!("relation defined on foreign boundary {} ({:?})", b.pos, b.side));
    }
    // f)
    for &m in &ps.bases {
        let (b, d) = (g.b(m), g.dual(m));
        let pairs = if b.eps == d.eps {
            [(ps.alpha_copy(b.alpha), ps.alpha_copy(d.alpha)), (ps.beta_copy(b.beta), ps.beta_copy(d.beta))]
        } else {
            [(ps.alpha_copy(b.alpha), ps.beta_copy(d.beta)), (ps.beta_copy(b.beta), ps.alpha_copy(d.alpha))]
        };
        for (x, y) in pairs {
            if !ps.classes.contains_key(&x) || ps.classes.get(&x) != ps.classes.get(&y) {
                push(&mut out, 'f', format!("base {m}: boundaries {} and {} not related", x.pos, y.pos));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PEdge {
    pub item: usize,
    pub from: usize,
    pub to: usize,
    /// The label belongs to the structure.
    pub in_p: bool,
}

/// A closed path: `(edge index, ±1)` steps starting at `base`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub edge: usize,
    pub base: usize,
    pub path: Vec<(usize, i8)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGraph {
    /// Boundary copies per vertex.
    pub vertices: Vec<Vec<Bnd>>,
    pub edges: Vec<PEdge>,
    pub t0: BTreeSet<usize>,
    pub tree: BTreeSet<usize>,
    pub components: usize,
    pub cycles: Vec<Cycle>,
}

impl PeriodicGraph {
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }

    pub fn label(&self, path: &[(usize, i8)]) -> Word {
        Word(path.iter().map(|&(e, s)| item(self.edges[e].item).with_sign(s)).collect())
    }

    pub fn cycle_label(&self, c: &Cycle) -> Word {
        self.label(&c.path)
    }

    pub fn vertex_of(&self, b: Bnd) -> Option<usize> {
        self.vertices.iter().position(|v| v.contains(&b))
    }
}

/// Builds `Γ`, the forests `T₀ ⊆ T` and the cycle basis.
pub fn build_graphs(ps: &PeriodicStructure) -> PeriodicGraph {
    let labels: BTreeSet<usize> = ps.classes.values().copied().collect();
    let vid: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let mut vertices = vec![Vec::new(); vid.len()];
    for (b, c) in &ps.classes {
        vertices[vid[c]].push(*b);
    }
    let vertex = |b: Bnd| ps.classes.get(&b).map(|c| vid[c]);
    let mut edges = Vec::new();
    for &(a, b) in &ps.sections {
        for k in a..b {
            let from = if k == a { ps.alpha_copy(k) } else { Bnd::only(k) };
            let to = if k + 1 == b { ps.beta_copy(k + 1) } else { Bnd::only(k + 1) };
            if let (Some(f), Some(t)) = (vertex(from), vertex(to)) {
                edges.push(PEdge { item: k, from: f, to: t, in_p: ps.items.contains(&k) });
            }
        }
    }
    let nv = vertices.len();
    let mut uf = UnionFind::<usize>::new(nv);
    let mut t0 = BTreeSet::new();
    for (k, e) in edges.iter().enumerate().filter(|(_, e)| !e.in_p) {
        if uf.union(e.from, e.to) {
            t0.insert(k);
        }
    }
    let mut tree = t0.clone();
    for (k, e) in edges.iter().enumerate().filter(|(_, e)| e.in_p) {
        if uf.union(e.from, e.to) {
            tree.insert(k);
        }
    }
    // tree paths from the smallest vertex of each component
    let mut adj = vec![Vec::new(); nv];
    for &k in &tree {
        let e = &edges[k];
        adj[e.from].push((k, 1i8, e.to));
        adj[e.to].push((k, -1i8, e.from));
    }
    let mut root = vec![usize::MAX; nv];
    let mut path: Vec<Vec<(usize, i8)>> = vec![Vec::new(); nv];
    let mut components = 0;
    for v0 in 0..nv {
        if root[v0] != usize::MAX {
            continue;
        }
        components += 1;
        root[v0] = v0;
        let mut q = VecDeque::from([v0]);
        while let Some(v) = q.pop_front() {
            for &(k, s, w) in &adj[v] {
                if root[w] == usize::MAX {
                    root[w] = v0;
                    let mut p = path[v].clone();
                    p.push((k, s));
                    path[w] = p;
                    q.push_back(w);
                }
            }
        }
    }
    let cycles = edges
        .iter()
        .enumerate()
        .filter(|(k, _)| !tree.contains(k))
        .map(|(k, e)| {
            let mut p = path[e.from].clone();
            p.push((k, 1));
            p.extend(path[e.to].iter().rev().map(|&(x, s)| (x, -s)));
            Cycle { edge: k, base: root[e.from], path: p }
        })
        .collect();
    PeriodicGraph { vertices, edges, t0, tree, components, cycles }
}

/// `H(c) = (P₂P₁)^n` for a cycle at a vertex with subdivision `P₁P₂`; returns `n`.
pub fn cycle_value_check(
    ps: &PeriodicStructure,
    graph: &PeriodicGraph,
    h: &[Word],
    p: &Word,
    c: &Cycle,
) -> Result<i64> {
    check_period(p)?;
    let mut phases = BTreeMap::new();
    for &s in &ps.sections {
        phases.extend(section_phases(s, h, p, ps)?);
    }
    let members = &graph.vertices[c.base];
    let ks: BTreeSet<usize> = members.iter().filter_map(|b| phases.get(b).copied()).collect();
    if ks.len() != 1 {
        return Err(Error::Violation(format!("vertex {} has no single subdivision: {ks:?}", c.base)));
    }
    let k = *ks.iter().next().expect("one");
    let q = p.rotate(k);
    let value = reduce(&eval_items(&graph.cycle_label(c), h));
    let n = (value.len() / q.len()) as i64;
    if value.len().is_multiple_of(q.len()) {
        for cand in [n, -n] {
            if q.power(cand) == value {
                return Ok(cand);
            }
        }
    }
    Err(Error::Violation(format!("cycle value of length {} is not a power of the period", value.len())))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum Periodized {
    ConsistentWithPeriodized,
    Refuted { c1: usize, c2: usize, solution: usize },
}

/// Tests `[H(c₁), H(c₂)] = 1` for basis cycles sharing a base vertex, on each solution.
pub fn is_periodized_on_solutions(g: &GeneralizedEquation, graph: &PeriodicGraph, solutions: &[Vec<Word>]) -> Result<Periodized> {
    for (si, h) in solutions.iter().enumerate() {
        if !g.is_solution(h) {
            return Err(Error::NotASolution(format!("solution {si}")));
        }
        let vals: Vec<Word> = graph.cycles.iter().map(|c| reduce(&eval_items(&graph.cycle_label(c), h))).collect();
        for i in 0..graph.cycles.len() {
            for j in i + 1..graph.cycles.len() {
                if graph.cycles[i].base != graph.cycles[j].base {
                    continue;
                }
                if vals[i].mul(&vals[j]) != vals[j].mul(&vals[i]) {
                    return Ok(Periodized::Refuted { c1: i, c2: j, solution: si });
                }
            }
        }
    }
    Ok(Periodized::ConsistentWithPeriodized)
}

/// A random period over `gens` with length in `[1, max_len]`.
pub fn random_period<R: Rng>(rng: &mut R, gens: &[Letter], max_len: usize) -> Word {
    loop {
        let n = rng.gen_range(1..=max_len);
        let mut v: Vec<Letter> = Vec::with_capacity(n);
        while v.len() < n {
            let l = gens.choose(rng).expect("generators").with_sign(if rng.gen() { 1 } else { -1 });
            if v.last().is_some_and(|x| x.is_inverse_of(l)) {
                continue;
            }
            v.push(l);
        }
        let w = Word(v);
        if is_period(&w) {
            return w;
        }
    }
}

/// A random generalized equation with a periodic solution: `(Ω, H, P)`.
///
/// Sections are cut from powers of `P^{±1}`; bases pair graphically equal
/// subintervals, so the returned assignment always solves the equation.
pub fn random_periodic_instance<R: Rng>(rng: &mut R, gens: &[Letter]) -> (GeneralizedEquation, Vec<Word>, Word) {
    loop {
        let p = random_period(rng, gens, 3);
        let n = p.len();
        let mut items: Vec<Word> = Vec::new();
        let mut spans = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let q = if rng.gen() { p.clone() } else { p.inverse() }.rotate(rng.gen_range(0..n));
            let len = rng.gen_range(2 * n..=4 * n + 2);
            let w = Word((0..len).map(|i| q.0[i % n]).collect());
            let start = items.len() + 1;
            let mut i = 0;
            while i < len {
                let l = rng.gen_range(1..=(2 * n + 2)).min(len - i);
                items.push(w.subword(i, i + l));
                i += l;
            }
            spans.push((start, items.len() + 1));
        }
        let rho = items.len();
        let mut g = GeneralizedEquation::new(rho);
        // candidate intervals inside the generated spans
        let mut cands: Vec<(usize, usize, Word)> = Vec::new();
        for &(a, b) in &spans {
            for x in a..b {
                for y in x + 1..=b {
                    let w = Word(items[x - 1..y - 1].iter().flat_map(|w| w.0.clone()).collect());
                    cands.push((x, y, w));
                }
            }
        }
        let mut matches = Vec::new();
        for i in 0..cands.len() {
            for j in i + 1..cands.len() {
                let (u, v) = (&cands[i].2, &cands[j].2);
                if u == v {
                    matches.push((i, j, 1i8));
                } else if *u == v.inverse() {
                    matches.push((i, j, -1i8));
                }
            }
        }
        if matches.is_empty() {
            continue;
        }
        matches.shuffle(rng);
        // prefer matches that keep boundaries open so sections stay long
        for &(i, j, s) in matches.iter().take(rng.gen_range(1..=4)) {
            let (a1, b1) = (cands[i].0, cands[i].1);
            let (a2, b2) = (cands[j].0, cands[j].1);
            let e1 = if rng.gen() { 1 } else { -1 };
            g.add_pair((a1, b1, e1), (a2, b2, e1 * s));
        }
        debug_assert!(g.is_solution(&items));
        match is_periodic_solution(&g, &items, &p) {
            Ok(v) if v.periodic => return (g, items, p),
            _ => continue,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::Alphabet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alpha() -> Alphabet {
        Alphabet::new(&["a", "b"], &[])
    }

    fn w(s: &str) -> Word {
        alpha().parse_word(s).unwrap()
    }

    #[test]
    fn decompositions() {
        let d = periodic_decompose(&w("ababab"), &w("ab")).unwrap().unwrap();
        assert_eq!((d.a.clone(), d.r, d.a1.clone()), (w("ab"), 3, Word::empty()));
        // exhaustive enumeration of A^r A₁ presentations with r >= 2
        let p = w("ab");
        let target = w("ababab");
        let mut found = Vec::new();
        for q in [p.clone(), p.inverse()] {
            for s in 0..2 {
                let a = q.rotate(s);
                for r in 1..=4 {
                    for k in 0..a.len() {
                        let a1 = a.subword(0, k);
                        if a.power(r as i64).concat(&a1) == target {
                            found.push((a.clone(), r, a1));
                        }
                    }
                }
            }
        }
        let big: Vec<_> = found.iter().filter(|f| f.1 >= 2).collect();
        assert_eq!(big.len(), 1);
        assert_eq!(*big[0], (w("ab"), 3, Word::empty()));

        let d = periodic_decompose(&w("ab"), &w("ab")).unwrap().unwrap();
        assert_eq!((d.r, d.a1.len()), (1, 0));
        let d = periodic_decompose(&w("BABAB"), &w("ab")).unwrap().unwrap();
        assert_eq!((d.chi, d.r, d.a1), (-1, 2, w("B")));
        assert!(periodic_decompose(&w("aab"), &w("ab")).unwrap().is_none());
        assert_eq!(periodic_decompose(&w("a"), &w("ab")), Err(Error::ShorterThanPeriod));
        assert!(periodic_decompose(&w("abab"), &w("abab")).is_err());
    }

    #[test]
    fn exponents() {
        assert_eq!(exponent(&w("aaaaaaaaaa"), &w("a")).unwrap(), 10);
        assert_eq!(exponent(&w("bbabababb"), &w("ab")).unwrap(), 3);
        assert_eq!(exponent(&w("bbb"), &w("a")).unwrap(), 0);
        assert_eq!(exponent(&w("BABAbab"), &w("ab")).unwrap(), 2);
    }

    fn one_section() -> (GeneralizedEquation, Vec<Word>) {
        // h1 h2 h3 h4 with (1,3) ~ (3,5): abab ab ab a, values ab.ab | ab.a
        let mut g = GeneralizedEquation::new(4);
        g.add_pair((1, 3, 1), (2, 4, 1));
        let h = vec![w("ab"), w("ab"), w("ab"), w("a")];
        assert!(g.is_solution(&h));
        (g, h)
    }

    #[test]
    fn periodic_verdicts() {
        let (g, h) = one_section();
        let v = is_periodic_solution(&g, &h, &w("ab")).unwrap();
        assert!(v.periodic, "{v:?}");
        assert_eq!(v.sections[0].condition, Some(1));
        let g2 = GeneralizedEquation::new(1);
        let v = is_periodic_solution(&g2, &[w("a")], &w("ab")).unwrap();
        assert!(!v.periodic);
        assert_eq!(v.sections[0].condition, Some(2));
        assert!(is_periodic_solution(&g, &[w("a"), w("b"), w("b"), w("b")], &w("ab")).is_err());
    }

    fn long_section() -> (GeneralizedEquation, Vec<Word>, (usize, usize)) {
        // abab|abab|abab|a with (1,3) ~ (2,4)
        let mut g = GeneralizedEquation::new(4);
        let ids = g.add_pair((1, 3, 1), (2, 4, 1));
        let h = vec![w("abab"), w("abab"), w("abab"), w("a")];
        assert!(g.is_solution(&h));
        (g, h, ids)
    }

    #[test]
    fn extraction_and_graph() {
        let p = w("ab");
        let (g, h, ids) = long_section();
        let ps = extract_structure(&g, &h, &p).unwrap();
        assert_eq!(ps.sections, BTreeSet::from([(1, 4)]));
        assert_eq!(ps.items, BTreeSet::from([1, 2, 3]));
        assert_eq!(ps.bases, BTreeSet::from([ids.0, ids.1]));
        assert!(validate_structure(&g, &ps).is_empty());
        let gr = build_graphs(&ps);
        // boundaries 1..4 share phase 0: three loops at one vertex
        assert_eq!((gr.vertices.len(), gr.edges.len()), (1, 3));
        assert!(gr.is_connected());
        assert!(gr.tree.is_empty());
        assert_eq!(gr.cycles.len(), gr.edges.len() + gr.components - gr.vertices.len());
        for c in &gr.cycles {
            assert_eq!(cycle_value_check(&ps, &gr, &h, &p, c).unwrap(), 2);
        }
        assert_eq!(is_periodized_on_solutions(&g, &gr, std::slice::from_ref(&h)).unwrap(), Periodized::ConsistentWithPeriodized);

        let mut broken = ps.clone();
        broken.bases.remove(&ids.1);
        assert!(validate_structure(&g, &broken).iter().any(|v| v.condition == 'b'));
        let mut unrelated = ps.clone();
        unrelated.classes.insert(Bnd::only(2), 99);
        assert!(validate_structure(&g, &unrelated).iter().any(|v| v.condition == 'f'));

        let mut g3 = GeneralizedEquation::new(4);
        g3.add_pair((1, 2, 1), (3, 4, 1));
        let h3 = vec![w("abab"), w("a"), w("abab"), w("a")];
        let ps3 = extract_structure(&g3, &h3, &p).unwrap();
        assert_eq!(ps3.sections.len(), 2);
        assert!(validate_structure(&g3, &ps3).is_empty());
        let mut f3 = ps3.clone();
        *f3.chi.values_mut().next().unwrap() = -1;
        assert!(validate_structure(&g3, &f3).iter().any(|v| v.condition == 'd'));
    }

    #[test]
    fn path_graph_and_threshold() {
        let p = w("abb");
        let g = GeneralizedEquation::new(1);
        let h = vec![w("abbabba")];
        let ps = extract_structure(&g, &h, &p).unwrap();
        assert_eq!(ps.items.len(), 1);
        let gr = build_graphs(&ps);
        assert_eq!((gr.vertices.len(), gr.edges.len(), gr.cycles.len()), (2, 1, 0));
        // items of length 2|P| - 1 stay out
        let p = w("ab");
        let mut g = GeneralizedEquation::new(4);
        g.add_pair((1, 3, 1), (2, 4, 1));
        let h = vec![w("abab"), w("aba"), w("baba"), w("b")];
        assert!(g.is_solution(&h));
        let ps = extract_structure(&g, &h, &p).unwrap();
        assert_eq!(ps.items, BTreeSet::from([1, 3]));
        assert!(validate_structure(&g, &ps).is_empty());
    }

    /// Rank of the incidence matrix over the rationals.
    fn incidence_rank(nv: usize, edges: &[PEdge]) -> usize {
        let mut rows: Vec<Vec<f64>> = edges
            .iter()
            .map(|e| {
                let mut r = vec![0.0; nv];
                r[e.from] -= 1.0;
                r[e.to] += 1.0;
                r
            })
            .collect();
        let mut rank = 0;
        for col in 0..nv {
            let Some(piv) = (rank..rows.len()).find(|&i| rows[i][col].abs() > 1e-9) else { continue };
            rows.swap(rank, piv);
            for i in 0..rows.len() {
                if i != rank && rows[i][col].abs() > 1e-9 {
                    let f = rows[i][col] / rows[rank][col];
                    for k in 0..nv {
                        rows[i][k] -= f * rows[rank][k];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn two_components() {
        let p = w("ab");
        let g = GeneralizedEquation::new(2);
        let h = vec![w("abab"), w("baba")];
        let ps = extract_structure(&g, &h, &p).unwrap();
        assert!(ps.classes.contains_key(&Bnd { pos: 2, side: Side::Left }));
        assert!(ps.classes.contains_key(&Bnd { pos: 2, side: Side::Right }));
        let gr = build_graphs(&ps);
        assert_eq!(gr.components, 2);
        assert!(!gr.is_connected());
        assert_eq!(gr.cycles.len(), gr.edges.len() - incidence_rank(gr.vertices.len(), &gr.edges));
        for c in &gr.cycles {
            assert_eq!(cycle_value_check(&ps, &gr, &h, &p, c).unwrap(), 2);
        }
    }

    #[test]
    fn refuted_periodized() {
        let p = w("ab");
        let (g, h, _) = long_section();
        let gr = build_graphs(&extract_structure(&g, &h, &p).unwrap());
        // the loops h1, h2 evaluated on a non-commuting assignment
        let free = GeneralizedEquation::new(4);
        let other = vec![w("ab"), w("ba"), w("ab"), w("a")];
        assert_eq!(
            is_periodized_on_solutions(&free, &gr, &[other]).unwrap(),
            Periodized::Refuted { c1: 0, c2: 1, solution: 0 }
        );
    }

    #[test]
    fn fuzzed_instances_validate() {
        let gens = [Letter::c(0), Letter::c(1)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let (g, h, p) = random_periodic_instance(&mut rng, &gens);
            let ps = extract_structure(&g, &h, &p).unwrap();
            assert!(validate_structure(&g, &ps).is_empty());
            let gr = build_graphs(&ps);
            assert_eq!(gr.cycles.len(), gr.edges.len() - incidence_rank(gr.vertices.len(), &gr.edges));
            for c in &gr.cycles {
                cycle_value_check(&ps, &gr, &h, &p, c).unwrap();
            }
        }
    }
}
