//! Generalized equations: bases, boundaries, connections, sections.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::word::{Kind, Letter, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseKind {
    Constant(Letter),
    Variable,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Base {
    pub id: usize,
    pub kind: BaseKind,
    pub alpha: usize,
    pub beta: usize,
    pub eps: i8,
    pub dual: Option<usize>,
}

impl Base {
    pub fn is_variable(&self) -> bool {
        self.kind == BaseKind::Variable
    }

    pub fn label(&self) -> Option<Letter> {
        match self.kind {
            BaseKind::Constant(l) => Some(l),
            BaseKind::Variable => None,
        }
    }

    /// Item `i` (1-based) lies under the base.
    pub fn contains_item(&self, i: usize) -> bool {
        self.alpha <= i && i < self.beta
    }

    /// Boundary `p` lies strictly inside.
    pub fn crosses(&self, p: usize) -> bool {
        self.alpha < p && p < self.beta
    }

    pub fn touches(&self, p: usize) -> bool {
        self.alpha == p || self.beta == p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionKind {
    Active,
    NonActive,
    Parametric,
    Constant,
}

impl SectionKind {
    pub fn rank(self) -> usize {
        match self {
            SectionKind::Active => 0,
            SectionKind::NonActive => 1,
            SectionKind::Parametric => 2,
            SectionKind::Constant => 3,
        }
    }
}

/// A boundary connection `(p, base, q)`.
pub type Connection = (usize, usize, usize);

/// Combinatorial generalized equation. Boundaries are `1..=rho+1`; item `h_i`
/// spans `[i, i+1)`. Section kinds are stored per item.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GeneralizedEquation {
    pub rho: usize,
    pub bases: Vec<Base>,
    pub connections: BTreeSet<Connection>,
    pub item_kinds: Vec<SectionKind>,
}

/// A closed section `[start, end]` with its kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Section {
    pub start: usize,
    pub end: usize,
    pub kind: SectionKind,
}

impl Section {
    pub fn contains_base(&self, b: &Base) -> bool {
        self.start <= b.alpha && b.beta <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    Basic,
    Coefficient,
    Boundary,
}

/// One induced word equation. Words use `Kind::Variable` letters whose `sym`
/// is the 1-based item index, plus constants on coefficient right sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeEquation {
    pub kind: EquationKind,
    pub base: usize,
    pub lhs: Word,
    pub rhs: Word,
}

pub fn item(i: usize) -> Letter {
    Letter::v(i as u16)
}

/// `h_from ... h_{to-1}` as an item word.
pub fn item_range(from: usize, to: usize) -> Word {
    Word::from_letters((from..to).map(item))
}

/// Interval, kind, label, sign, dual interval and sign, connections.
type BaseKey = (usize, usize, u8, Option<Letter>, i8, (usize, usize, i8), Vec<(usize, usize)>);

impl GeneralizedEquation {
    pub fn new(rho: usize) -> Self {
        GeneralizedEquation {
            rho,
            bases: Vec::new(),
            connections: BTreeSet::new(),
            item_kinds: vec![SectionKind::Active; rho],
        }
    }

    pub fn base(&self, id: usize) -> Option<&Base> {
        self.bases.iter().find(|b| b.id == id)
    }

    pub fn base_mut(&mut self, id: usize) -> Option<&mut Base> {
        self.bases.iter_mut().find(|b| b.id == id)
    }

    pub fn b(&self, id: usize) -> &Base {
        self.base(id).unwrap_or_else(|| panic!("no base {id}"))
    }

    pub fn dual(&self, id: usize) -> &Base {
        self.b(self.b(id).dual.expect("constant base has no dual"))
    }

    pub fn next_id(&self) -> usize {
        self.bases.iter().map(|b| b.id + 1).max().unwrap_or(0)
    }

    pub fn variable_bases(&self) -> impl Iterator<Item = &Base> {
        self.bases.iter().filter(|b| b.is_variable())
    }

    pub fn constant_bases(&self) -> impl Iterator<Item = &Base> {
        self.bases.iter().filter(|b| !b.is_variable())
    }

    /// Adds a dual pair; returns the two new ids.
    pub fn add_pair(&mut self, (a1, b1, e1): (usize, usize, i8), (a2, b2, e2): (usize, usize, i8)) -> (usize, usize) {
        let i = self.next_id();
        let j = i + 1;
        self.bases.push(Base { id: i, kind: BaseKind::Variable, alpha: a1, beta: b1, eps: e1, dual: Some(j) });
        self.bases.push(Base { id: j, kind: BaseKind::Variable, alpha: a2, beta: b2, eps: e2, dual: Some(i) });
        (i, j)
    }

    pub fn add_constant(&mut self, alpha: usize, label: Letter) -> usize {
        let i = self.next_id();
        self.bases.push(Base { id: i, kind: BaseKind::Constant(label), alpha, beta: alpha + 1, eps: 1, dual: None });
        i
    }

    /// Adds `(p, id, q)` together with its mirror.
    pub fn connect(&mut self, p: usize, id: usize, q: usize) {
        let d = self.b(id).dual.expect("variable base");
        self.connections.insert((p, id, q));
        self.connections.insert((q, d, p));
    }

    /// Removes a base (and its dual when `with_dual`) together with their connections.
    pub fn remove_pair(&mut self, id: usize) {
        let d = self.b(id).dual;
        self.bases.retain(|b| b.id != id && Some(b.id) != d);
        self.connections.retain(|&(_, m, _)| m != id && Some(m) != d);
    }

    pub fn remove_base(&mut self, id: usize) {
        self.bases.retain(|b| b.id != id);
        self.connections.retain(|&(_, m, _)| m != id);
    }

    pub fn connections_of(&self, id: usize) -> Vec<(usize, usize)> {
        self.connections
            .iter()
            .filter(|&&(_, m, _)| m == id)
            .map(|&(p, _, q)| (p, q))
            .collect()
    }

    pub fn is_tied_by(&self, p: usize, id: usize) -> bool {
        let d = self.b(id).dual;
        self.connections
            .iter()
            .any(|&(pp, m, qq)| (m == id && pp == p) || (Some(m) == d && qq == p))
    }

    /// Image of `p` under a `(p, id, q)` connection.
    pub fn tie_image(&self, p: usize, id: usize) -> Option<usize> {
        self.connections
            .iter()
            .find(|&&(pp, m, _)| m == id && pp == p)
            .map(|&(_, _, q)| q)
    }

    /// Structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.item_kinds.len() != self.rho {
            return Err(Error::Invalid("item kind count differs from rho".into()));
        }
        let mut ids = BTreeSet::new();
        for b in &self.bases {
            if !ids.insert(b.id) {
                return Err(Error::Invalid(format!("duplicate base id {}", b.id)));
            }
            if !(1 <= b.alpha && b.alpha < b.beta && b.beta <= self.rho + 1) {
                return Err(Error::Invalid(format!("base {} has bad endpoints", b.id)));
            }
            if b.eps != 1 && b.eps != -1 {
                return Err(Error::Invalid(format!("base {} has bad sign", b.id)));
            }
            match b.kind {
                BaseKind::Constant(l) => {
                    if b.beta != b.alpha + 1 || b.dual.is_some() || l.kind != Kind::Constant {
                        return Err(Error::Invalid(format!("constant base {} malformed", b.id)));
                    }
                }
                BaseKind::Variable => {
                    let d = b.dual.ok_or_else(|| Error::Invalid(format!("base {} lacks a dual", b.id)))?;
                    let db = self.base(d).ok_or_else(|| Error::Invalid(format!("dual {d} missing")))?;
                    if d == b.id || db.dual != Some(b.id) || !db.is_variable() {
                        return Err(Error::Invalid(format!("duality broken at base {}", b.id)));
                    }
                }
            }
        }
        for &(p, m, q) in &self.connections {
            let b = self.base(m).ok_or_else(|| Error::Invalid(format!("connection on missing base {m}")))?;
            if !b.is_variable() {
                return Err(Error::Invalid(format!("connection on constant base {m}")));
            }
            let d = self.dual(m);
            if !b.crosses(p) || !d.crosses(q) {
                return Err(Error::Invalid(format!("connection ({p},{m},{q}) out of range")));
            }
            if !self.connections.contains(&(q, d.id, p)) {
                return Err(Error::Invalid(format!("connection ({p},{m},{q}) lacks its mirror")));
            }
        }
        Ok(())
    }

    // ---- induced equations and solutions ----

    pub fn derive_equations(&self) -> Vec<GeEquation> {
        let mut out = Vec::new();
        for b in &self.bases {
            match b.kind {
                BaseKind::Variable => {
                    let d = self.dual(b.id);
                    if b.id < d.id {
                        out.push(GeEquation {
                            kind: EquationKind::Basic,
                            base: b.id,
                            lhs: item_range(b.alpha, b.beta).pow_sign(b.eps),
                            rhs: item_range(d.alpha, d.beta).pow_sign(d.eps),
                        });
                    }
                }
                BaseKind::Constant(l) => out.push(GeEquation {
                    kind: EquationKind::Coefficient,
                    base: b.id,
                    lhs: Word::letter(item(b.alpha)),
                    rhs: Word::letter(l),
                }),
            }
        }
        for &(p, m, q) in &self.connections {
            let b = self.b(m);
            let d = self.dual(m);
            if b.id > d.id {
                continue;
            }
            let rhs = if b.eps == d.eps {
                item_range(d.alpha, q)
            } else {
                item_range(q, d.beta).inverse()
            };
            out.push(GeEquation { kind: EquationKind::Boundary, base: m, lhs: item_range(b.alpha, p), rhs });
        }
        out
    }

    pub fn check_solution(&self, u: &[Word]) -> SolutionReport {
        let mut diags = Vec::new();
        if u.len() != self.rho {
            diags.push(Diagnostic::WrongArity { expected: self.rho, got: u.len() });
            return SolutionReport { diagnostics: diags };
        }
        for (i, w) in u.iter().enumerate() {
            if w.is_empty() {
                diags.push(Diagnostic::EmptyItem(i + 1));
            } else if !w.is_reduced() {
                diags.push(Diagnostic::ItemNotReduced(i + 1));
            } else if w.has_variables() {
                diags.push(Diagnostic::ItemNotConstant(i + 1));
            }
        }
        if !diags.is_empty() {
            return SolutionReport { diagnostics: diags };
        }
        for (k, e) in self.derive_equations().iter().enumerate() {
            let l = eval_items(&e.lhs, u);
            let r = eval_items(&e.rhs, u);
            if !l.is_reduced() || !r.is_reduced() {
                diags.push(Diagnostic::NotReducedAsWritten(k));
            } else if l != r {
                diags.push(Diagnostic::Mismatch(k));
            }
        }
        SolutionReport { diagnostics: diags }
    }

    pub fn is_solution(&self, u: &[Word]) -> bool {
        self.check_solution(u).ok()
    }

    // ---- formal consistency ----

    pub fn check_formally_consistent(&self) -> Vec<ConsistencyViolation> {
        let mut out = Vec::new();
        for b in self.variable_bases() {
            let d = self.dual(b.id);
            if b.id < d.id && b.eps == -d.eps && b.alpha < d.beta && d.alpha < b.beta {
                out.push(ConsistencyViolation { condition: 1, detail: format!("bases {} and {} intersect", b.id, d.id) });
            }
        }
        let conns: Vec<Connection> = self.connections.iter().copied().collect();
        for (i, &(p, m, q)) in conns.iter().enumerate() {
            let b = self.b(m);
            let d = self.dual(m);
            let s = b.eps * d.eps;
            for &(p1, m1, q1) in &conns[i + 1..] {
                if m1 != m {
                    continue;
                }
                let bad = if p == p1 {
                    q != q1
                } else {
                    let (lo, hi) = if p < p1 { (q, q1) } else { (q1, q) };
                    if s == 1 {
                        lo > hi
                    } else {
                        lo < hi
                    }
                };
                if bad {
                    out.push(ConsistencyViolation {
                        condition: 2,
                        detail: format!("connections ({p},{m},{q}) and ({p1},{m},{q1}) not monotone"),
                    });
                }
            }
            if b.alpha == d.alpha && p != q {
                out.push(ConsistencyViolation { condition: 3, detail: format!("matched base {m} has connection ({p},{q})") });
            }
        }
        let mut labels: BTreeMap<usize, Letter> = BTreeMap::new();
        for c in self.constant_bases() {
            let l = c.label().expect("constant");
            if let Some(&o) = labels.get(&c.alpha) {
                if o != l {
                    out.push(ConsistencyViolation { condition: 4, detail: format!("item {} has two labels", c.alpha) });
                }
            } else {
                labels.insert(c.alpha, l);
            }
        }
        for &i in labels.keys() {
            for &(p, m, q1) in &conns {
                if p != i {
                    continue;
                }
                if let Some(q2) = self.tie_image(i + 1, m) {
                    if q1.abs_diff(q2) != 1 {
                        out.push(ConsistencyViolation {
                            condition: 5,
                            detail: format!("constant item {i} stretched by base {m}: {q1}, {q2}"),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_formally_consistent(&self) -> bool {
        self.check_formally_consistent().is_empty()
    }

    // ---- classification ----

    pub fn gamma(&self, i: usize) -> usize {
        self.bases.iter().filter(|b| b.contains_item(i)).count()
    }

    pub fn gammas(&self) -> Vec<usize> {
        let mut g = vec![0; self.rho];
        for b in &self.bases {
            for i in b.alpha..b.beta {
                g[i - 1] += 1;
            }
        }
        g
    }

    pub fn is_open(&self, p: usize) -> bool {
        self.bases.iter().any(|b| b.crosses(p))
    }

    pub fn is_closed(&self, p: usize) -> bool {
        !self.is_open(p)
    }

    pub fn is_tied(&self, p: usize) -> bool {
        self.connections.iter().any(|&(pp, _, _)| pp == p)
    }

    pub fn is_free_boundary(&self, p: usize) -> bool {
        !self.bases.iter().any(|b| b.touches(p)) && !self.is_tied(p)
    }

    pub fn classify(&self) -> Classification {
        let gammas = self.gammas();
        let items = (1..=self.rho)
            .map(|i| ItemClass {
                gamma: gammas[i - 1],
                free: gammas[i - 1] == 0,
                constant: self.constant_bases().any(|c| c.alpha == i),
            })
            .collect();
        let boundaries = (1..=self.rho + 1)
            .map(|p| BoundaryClass {
                open: self.is_open(p),
                free: self.is_free_boundary(p),
                tied_by: self
                    .connections
                    .iter()
                    .filter(|&&(pp, _, _)| pp == p)
                    .map(|&(_, m, _)| m)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            })
            .collect();
        Classification { items, boundaries }
    }

    /// Closed sections in left-to-right order. Zero-length runs never occur.
    pub fn sections(&self) -> Vec<Section> {
        let mut cuts = vec![1];
        for p in 2..=self.rho {
            if self.is_closed(p) {
                cuts.push(p);
            }
        }
        if self.rho > 0 {
            cuts.push(self.rho + 1);
        }
        cuts.windows(2)
            .map(|w| Section { start: w[0], end: w[1], kind: self.item_kinds[w[0] - 1] })
            .collect()
    }

    pub fn section_of_item(&self, i: usize) -> Section {
        *self
            .sections()
            .iter()
            .find(|s| s.start <= i && i < s.end)
            .expect("item in range")
    }

    pub fn section_of_base(&self, id: usize) -> Section {
        self.section_of_item(self.b(id).alpha)
    }

    pub fn item_kind(&self, i: usize) -> SectionKind {
        self.item_kinds[i - 1]
    }

    pub fn is_active_item(&self, i: usize) -> bool {
        self.item_kind(i) == SectionKind::Active
    }

    pub fn is_active_base(&self, id: usize) -> bool {
        self.is_active_item(self.b(id).alpha)
    }

    pub fn set_section_kind(&mut self, start: usize, end: usize, kind: SectionKind) {
        for i in start..end {
            self.item_kinds[i - 1] = kind;
        }
    }

    pub fn measures(&self) -> Measures {
        let mut m = Measures::default();
        let sections = self.sections();
        for s in sections.iter().filter(|s| s.kind == SectionKind::Active) {
            let n = self.bases.iter().filter(|b| s.contains_base(b)).count();
            m.rho_a += s.len();
            m.n_a += n;
            m.nu_prime += (s.start + 1..s.end).filter(|&p| self.is_open(p)).count();
            match n {
                0 => m.t_a0 += 1,
                1 => m.t_a1 += 1,
                _ => m.t_a2 += 1,
            }
            m.tau += n.saturating_sub(2);
        }
        // closed boundaries lying in the active part
        let mut closed = BTreeSet::new();
        for s in sections.iter().filter(|s| s.kind == SectionKind::Active) {
            closed.insert(s.start);
            closed.insert(s.end);
        }
        m.sigma_prime = closed.len();
        m
    }

    pub fn is_standard_form(&self) -> bool {
        let secs = self.sections();
        if secs.windows(2).any(|w| w[0].kind.rank() > w[1].kind.rank()) {
            return false;
        }
        let mut seen = BTreeSet::new();
        for c in self.constant_bases() {
            let l = c.label().expect("constant").positive();
            if !seen.insert(l) || self.item_kind(c.alpha) != SectionKind::Constant {
                return false;
            }
        }
        let g = self.gammas();
        (1..=self.rho).all(|i| g[i - 1] > 0 || self.item_kind(i) == SectionKind::Constant)
    }

    // ---- canonical forms ----

    /// Serialization invariant under renaming of base ids.
    pub fn canonical_form(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "r{};k", self.rho);
        for k in &self.item_kinds {
            s.push(match k {
                SectionKind::Active => 'A',
                SectionKind::NonActive => 'N',
                SectionKind::Parametric => 'P',
                SectionKind::Constant => 'C',
            });
        }
        s.push(';');
        // bases with equal keys are interchangeable, so each one is written
        // through its key alone: dual interval and connections, never an id
        for id in self.canonical_base_order() {
            let b = self.b(id);
            match b.kind {
                BaseKind::Constant(l) => {
                    let _ = write!(s, "c{}{}:{};", if l.neg { "-" } else { "" }, l.sym, b.alpha);
                }
                BaseKind::Variable => {
                    let d = self.dual(id);
                    let sign = |e: i8| if e < 0 { "-" } else { "+" };
                    let _ = write!(s, "v{}-{}{}d{}-{}{}", b.alpha, b.beta, sign(b.eps), d.alpha, d.beta, sign(d.eps));
                    for (p, q) in self.connections_of(id) {
                        let _ = write!(s, "t{p},{q}");
                    }
                    s.push(';');
                }
            }
        }
        s
    }

    fn base_key(&self, b: &Base) -> BaseKey {
        let dual = b.dual.map(|d| {
            let d = self.b(d);
            (d.alpha, d.beta, d.eps)
        });
        (
            b.alpha,
            b.beta,
            if b.is_variable() { 1 } else { 0 },
            b.label(),
            b.eps,
            dual.unwrap_or((0, 0, 0)),
            self.connections_of(b.id),
        )
    }

    fn canonical_base_order(&self) -> Vec<usize> {
        let mut v: Vec<(_, usize)> = self.bases.iter().map(|b| (self.base_key(b), b.id)).collect();
        v.sort();
        v.into_iter().map(|(_, id)| id).collect()
    }

    pub fn iso_eq(&self, other: &GeneralizedEquation) -> bool {
        self.canonical_form() == other.canonical_form()
    }

    /// Canonical form that ignores the order of closed sections.
    pub fn repeat_key(&self) -> String {
        let secs = self.sections();
        // group sections by a local signature, then resolve ties by trying
        // permutations inside tie groups (bounded)
        let sigs: Vec<String> = secs.iter().map(|s| self.local_signature(s)).collect();
        let mut idx: Vec<usize> = (0..secs.len()).collect();
        idx.sort_by(|&a, &b| sigs[a].cmp(&sigs[b]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &idx {
            match groups.last_mut() {
                Some(g) if sigs[g[0]] == sigs[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        let total: usize = groups.iter().map(|g| factorial(g.len())).product();
        let mut best: Option<String> = None;
        if total <= 720 {
            let mut perms: Vec<Vec<usize>> = vec![Vec::new()];
            for g in &groups {
                let gp = permutations(g);
                let mut next = Vec::new();
                for p in &perms {
                    for q in &gp {
                        let mut r = p.clone();
                        r.extend(q);
                        next.push(r);
                    }
                }
                perms = next;
            }
            for p in perms {
                let c = self.reorder_sections(&secs, &p).canonical_form();
                if best.as_ref().is_none_or(|b| c < *b) {
                    best = Some(c);
                }
            }
        } else {
            best = Some(self.reorder_sections(&secs, &idx).canonical_form());
        }
        best.unwrap_or_default()
    }

    fn local_signature(&self, s: &Section) -> String {
        let mut parts: Vec<String> = self
            .bases
            .iter()
            .filter(|b| s.contains_base(b))
            .map(|b| {
                let inner = b.dual.map(|d| s.contains_base(self.b(d))).unwrap_or(false);
                format!(
                    "{}-{}{:?}{}{}{}",
                    b.alpha - s.start,
                    b.beta - s.start,
                    b.label(),
                    b.eps,
                    inner,
                    self.connections_of(b.id).len()
                )
            })
            .collect();
        parts.sort();
        format!("{}{:?}{}", s.len(), s.kind, parts.join(","))
    }

    /// Rearranges closed sections into the given order (indices into `secs`).
    pub fn reorder_sections(&self, secs: &[Section], order: &[usize]) -> GeneralizedEquation {
        let mut start_of = vec![0; secs.len()];
        let mut cur = 1;
        for &k in order {
            start_of[k] = cur;
            cur += secs[k].len();
        }
        let map_in = |sec: usize, p: usize| p - secs[sec].start + start_of[sec];
        let sec_of_item = |i: usize| secs.iter().position(|s| s.start <= i && i < s.end).expect("item");
        let mut out = GeneralizedEquation::new(self.rho);
        for (k, s) in secs.iter().enumerate() {
            for i in s.start..s.end {
                out.item_kinds[map_in(k, i) - 1] = self.item_kind(i);
            }
        }
        for b in &self.bases {
            let k = sec_of_item(b.alpha);
            let mut nb = b.clone();
            nb.alpha = map_in(k, b.alpha);
            nb.beta = map_in(k, b.beta);
            out.bases.push(nb);
        }
        for &(p, m, q) in &self.connections {
            let km = sec_of_item(self.b(m).alpha);
            let kd = sec_of_item(self.dual(m).alpha);
            out.connections.insert((map_in(km, p), m, map_in(kd, q)));
        }
        out
    }

    // ---- boundary surgery ----

    /// Inserts a new boundary right after `q` (it becomes `q+1`); item `h_q`
    /// splits into `h_q h_{q+1}`.
    pub fn insert_boundary_after(&mut self, q: usize) {
        let shift = |x: usize| if x > q { x + 1 } else { x };
        for b in &mut self.bases {
            b.alpha = shift(b.alpha);
            b.beta = shift(b.beta);
        }
        self.connections = self.connections.iter().map(|&(p, m, r)| (shift(p), m, shift(r))).collect();
        let k = self.item_kinds[q - 1];
        self.item_kinds.insert(q, k);
        self.rho += 1;
    }

    /// Deletes items `a..b-1`, merging boundaries `a` and `b`. Bases must not
    /// have endpoints strictly inside `(a, b)`.
    pub fn delete_items(&mut self, a: usize, b: usize) {
        let w = b - a;
        let shift = |x: usize| if x >= b { x - w } else { x };
        for base in &mut self.bases {
            base.alpha = shift(base.alpha);
            base.beta = shift(base.beta);
        }
        self.connections = self.connections.iter().map(|&(p, m, r)| (shift(p), m, shift(r))).collect();
        self.item_kinds.drain(a - 1..b - 1);
        self.rho -= w;
    }

    /// Renumbers base ids to `0..n` in canonical order.
    pub fn compact_ids(&self) -> GeneralizedEquation {
        let order = self.canonical_base_order();
        let map: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut out = self.clone();
        out.bases = order
            .iter()
            .map(|id| {
                let b = self.b(*id);
                Base { id: map[id], dual: b.dual.map(|d| map[&d]), ..b.clone() }
            })
            .collect();
        out.connections = self.connections.iter().map(|&(p, m, q)| (p, map[&m], q)).collect();
        out
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product::<usize>().max(1)
}

fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Evaluates an item word on a solution, graphically (no reduction).
pub fn eval_items(w: &Word, u: &[Word]) -> Word {
    let mut out = Vec::new();
    for &l in w.letters() {
        match l.kind {
            Kind::Constant => out.push(l),
            Kind::Variable => {
                let v = &u[l.sym as usize - 1];
                if l.neg {
                    out.extend(v.inverse().0);
                } else {
                    out.extend_from_slice(v.letters());
                }
            }
        }
    }
    Word(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    WrongArity { expected: usize, got: usize },
    EmptyItem(usize),
    ItemNotReduced(usize),
    ItemNotConstant(usize),
    NotReducedAsWritten(usize),
    Mismatch(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl SolutionReport {
    pub fn ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub condition: u8,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemClass {
    pub gamma: usize,
    pub free: bool,
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryClass {
    pub open: bool,
    pub free: bool,
    pub tied_by: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub items: Vec<ItemClass>,
    pub boundaries: Vec<BoundaryClass>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measures {
    pub rho_a: usize,
    pub n_a: usize,
    pub nu_prime: usize,
    pub sigma_prime: usize,
    pub t_a0: usize,
    pub t_a1: usize,
    pub t_a2: usize,
    pub tau: usize,
}

// ---- JSON ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseJson {
    pub id: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub alpha: usize,
    pub beta: usize,
    pub eps: i8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dual: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionsJson {
    #[serde(default)]
    pub active: Vec<[usize; 2]>,
    #[serde(default, rename = "non-active")]
    pub non_active: Vec<[usize; 2]>,
    #[serde(default)]
    pub parametric: Vec<[usize; 2]>,
    #[serde(default)]
    pub constant: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeJson {
    pub rho: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constants: Vec<String>,
    pub bases: Vec<BaseJson>,
    pub connections: Vec<[usize; 3]>,
    #[serde(default)]
    pub sections: SectionsJson,
}

fn label_name(constants: &[String], l: Letter) -> String {
    let n = constants.get(l.sym as usize).cloned().unwrap_or_else(|| format!("c{}", l.sym));
    if l.neg {
        format!("{n}^-1")
    } else {
        n
    }
}

fn parse_label(constants: &[String], s: &str) -> Result<Letter> {
    let (name, neg) = match s.strip_suffix("^-1") {
        Some(n) => (n, true),
        None => (s, false),
    };
    let sym = constants
        .iter()
        .position(|c| c == name)
        .or_else(|| name.strip_prefix('c').and_then(|d| d.parse().ok()))
        .ok_or_else(|| Error::Invalid(format!("unknown label `{s}`")))?;
    Ok(Letter::c(sym as u16).with_sign(if neg { -1 } else { 1 }))
}

impl GeneralizedEquation {
    pub fn to_json(&self, constants: &[String]) -> GeJson {
        let mut sections = SectionsJson::default();
        for s in self.sections() {
            let slot = match s.kind {
                SectionKind::Active => &mut sections.active,
                SectionKind::NonActive => &mut sections.non_active,
                SectionKind::Parametric => &mut sections.parametric,
                SectionKind::Constant => &mut sections.constant,
            };
            slot.push([s.start, s.end]);
        }
        let mut bases: Vec<&Base> = self.bases.iter().collect();
        bases.sort_by_key(|b| b.id);
        GeJson {
            rho: self.rho,
            constants: constants.to_vec(),
            bases: bases
                .into_iter()
                .map(|b| BaseJson {
                    id: b.id,
                    kind: if b.is_variable() { "variable" } else { "constant" }.into(),
                    label: b.label().map(|l| label_name(constants, l)),
                    alpha: b.alpha,
                    beta: b.beta,
                    eps: b.eps,
                    dual: b.dual,
                })
                .collect(),
            connections: self.connections.iter().map(|&(p, m, q)| [p, m, q]).collect(),
            sections,
        }
    }

    pub fn from_json(j: &GeJson) -> Result<GeneralizedEquation> {
        let mut g = GeneralizedEquation::new(j.rho);
        for b in &j.bases {
            let kind = match b.kind.as_str() {
                "variable" => BaseKind::Variable,
                "constant" => {
                    let l = b.label.as_deref().ok_or_else(|| Error::Invalid(format!("base {} has no label", b.id)))?;
                    BaseKind::Constant(parse_label(&j.constants, l)?)
                }
                k => return Err(Error::Invalid(format!("unknown base kind `{k}`"))),
            };
            g.bases.push(Base { id: b.id, kind, alpha: b.alpha, beta: b.beta, eps: b.eps, dual: b.dual });
        }
        for c in &j.connections {
            g.connections.insert((c[0], c[1], c[2]));
        }
        let tag = |g: &mut GeneralizedEquation, v: &[[usize; 2]], k: SectionKind| -> Result<()> {
            for &[a, b] in v {
                if !(1 <= a && a < b && b <= g.rho + 1) {
                    return Err(Error::Invalid(format!("bad section [{a},{b}]")));
                }
                g.set_section_kind(a, b, k);
            }
            Ok(())
        };
        tag(&mut g, &j.sections.non_active, SectionKind::NonActive)?;
        tag(&mut g, &j.sections.parametric, SectionKind::Parametric)?;
        tag(&mut g, &j.sections.constant, SectionKind::Constant)?;
        g.validate()?;
        // restore mirrors that a hand-written file may omit
        let conns: Vec<Connection> = g.connections.iter().copied().collect();
        for (p, m, q) in conns {
            g.connect(p, m, q);
        }
        g.validate()?;
        Ok(g)
    }

    /// Human-readable equations, `h1h2 = h3` style.
    pub fn describe_equations(&self, constants: &[String]) -> Vec<String> {
        self.derive_equations().iter().map(|e| format!("{} = {}", fmt_items(&e.lhs, constants), fmt_items(&e.rhs, constants))).collect()
    }
}

pub fn fmt_items(w: &Word, constants: &[String]) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.letters()
        .iter()
        .map(|&l| match l.kind {
            Kind::Variable => format!("h{}{}", l.sym, if l.neg { "^-1" } else { "" }),
            Kind::Constant => label_name(constants, l),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
