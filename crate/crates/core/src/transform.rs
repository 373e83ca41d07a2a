//! Elementary and derived transformations of generalized equations, each with
//! a rule that transports solutions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geq::{eval_items, fmt_items, item, item_range, Base, BaseKind, Connection, GeneralizedEquation, SectionKind};
use crate::word::{Kind, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    Isomorphic,
    Quotient,
    Identity,
}

impl TransportKind {
    pub fn then(self, next: TransportKind) -> TransportKind {
        use TransportKind::*;
        match (self, next) {
            (Quotient, _) | (_, Quotient) => Quotient,
            (Identity, Identity) => Identity,
            _ => Isomorphic,
        }
    }
}

/// One transformation step `Ω → Ω′`.
#[derive(Clone, Debug)]
pub struct TransportStep {
    pub name: String,
    pub kind: TransportKind,
    /// Old item `h_i` (index `i-1`) as a word in the new items.
    pub pi: Vec<Word>,
    /// New items not reached by `pi`, defined as words in the old items.
    pub defs: Vec<(usize, Word)>,
    /// Old boundary `p` (index `p-1`) to its new position, if it survives.
    pub bmap: Vec<Option<usize>>,
    /// Relation added by a quotient step, over the new items.
    pub relation: Option<(Word, Word)>,
    pub source: GeneralizedEquation,
    pub target: GeneralizedEquation,
}

impl TransportStep {
    fn new(name: &str, kind: TransportKind, source: &GeneralizedEquation, target: GeneralizedEquation) -> Self {
        TransportStep {
            name: name.into(),
            kind,
            pi: (1..=source.rho).map(|i| Word::letter(item(i))).collect(),
            defs: Vec::new(),
            bmap: (1..=source.rho + 1).map(Some).collect(),
            relation: None,
            source: source.clone(),
            target,
        }
    }

    fn is_identity_map(&self) -> bool {
        self.defs.is_empty()
            && self.source.rho == self.target.rho
            && self.pi.iter().enumerate().all(|(k, w)| w.len() == 1 && w.letters()[0] == item(k + 1))
    }

    /// Pushes a solution of the source through the step.
    pub fn forward(&self, u: &[Word]) -> Option<Vec<Word>> {
        if u.len() != self.source.rho {
            return None;
        }
        if self.is_identity_map() {
            return self.target.is_solution(u).then(|| u.to_vec());
        }
        let mut nu: Vec<Option<Word>> = vec![None; self.target.rho];
        for (j, w) in &self.defs {
            nu[j - 1] = Some(eval_items(w, u));
        }
        let mut found = None;
        split(self, u, 0, 0, 0, &mut nu, &mut found);
        found
    }

    pub fn backward(&self, v: &[Word]) -> Vec<Word> {
        self.pi.iter().map(|w| eval_items(w, v)).collect()
    }
}

/// Backtracking split of old items into new-item pieces.
fn split(
    st: &TransportStep,
    u: &[Word],
    i: usize,
    k: usize,
    off: usize,
    nu: &mut Vec<Option<Word>>,
    found: &mut Option<Vec<Word>>,
) {
    if found.is_some() {
        return;
    }
    if i == u.len() {
        if nu.iter().all(|w| w.as_ref().is_some_and(|w| !w.is_empty())) {
            let cand: Vec<Word> = nu.iter().map(|w| w.clone().expect("assigned")).collect();
            if st.target.is_solution(&cand) {
                *found = Some(cand);
            }
        }
        return;
    }
    let word = &st.pi[i];
    let target = u[i].letters();
    if k == word.len() {
        if off == target.len() {
            split(st, u, i + 1, 0, 0, nu, found);
        }
        return;
    }
    let l = word.letters()[k];
    let j = l.sym as usize - 1;
    let remaining_letters = word.len() - k - 1;
    match nu[j].clone() {
        Some(v) => {
            let piece = if l.neg { v.inverse() } else { v };
            let n = piece.len();
            if off + n <= target.len() && target[off..off + n] == *piece.letters() {
                split(st, u, i, k + 1, off + n, nu, found);
            }
        }
        None => {
            let max = target.len().saturating_sub(off + remaining_letters);
            for n in 1..=max {
                let piece = Word(target[off..off + n].to_vec());
                nu[j] = Some(if l.neg { piece.inverse() } else { piece });
                split(st, u, i, k + 1, off + n, nu, found);
                if found.is_some() {
                    return;
                }
            }
            nu[j] = None;
        }
    }
}

/// A chain of steps; the empty chain is the identity.
#[derive(Clone, Debug, Default)]
pub struct TransportRule {
    pub steps: Vec<TransportStep>,
}

impl TransportRule {
    pub fn identity() -> Self {
        TransportRule { steps: Vec::new() }
    }

    fn single(step: TransportStep) -> Self {
        TransportRule { steps: vec![step] }
    }

    pub fn kind(&self) -> TransportKind {
        self.steps.iter().fold(TransportKind::Identity, |k, s| k.then(s.kind))
    }

    pub fn then(mut self, other: TransportRule) -> TransportRule {
        self.steps.extend(other.steps);
        self
    }

    pub fn forward(&self, u: &[Word]) -> Option<Vec<Word>> {
        let mut cur = u.to_vec();
        for s in &self.steps {
            cur = s.forward(&cur)?;
        }
        Some(cur)
    }

    pub fn backward(&self, v: &[Word]) -> Vec<Word> {
        let mut cur = v.to_vec();
        for s in self.steps.iter().rev() {
            cur = s.backward(&cur);
        }
        cur
    }

    pub fn map_boundary(&self, p: usize) -> Option<usize> {
        let mut cur = p;
        for s in &self.steps {
            cur = (*s.bmap.get(cur - 1)?)?;
        }
        Some(cur)
    }

    /// Old items as words in the final items, ignoring `defs`.
    pub fn pi_flat(&self, rho: usize) -> Vec<Word> {
        let mut cur: Vec<Word> = (1..=rho).map(|i| Word::letter(item(i))).collect();
        for s in &self.steps {
            cur = cur.iter().map(|w| substitute_items(w, &s.pi)).collect();
        }
        cur
    }

    pub fn to_record(&self, rho: usize, constants: &[String]) -> RuleRecord {
        RuleRecord {
            kind: self.kind(),
            steps: self
                .steps
                .iter()
                .map(|s| StepRecord {
                    name: s.name.clone(),
                    kind: s.kind,
                    relation: s.relation.as_ref().map(|(l, r)| {
                        format!("{} = {}", fmt_items(l, constants), fmt_items(r, constants))
                    }),
                })
                .collect(),
            pi: self
                .pi_flat(rho)
                .iter()
                .enumerate()
                .map(|(k, w)| format!("h{} -> {}", k + 1, fmt_items(w, constants)))
                .collect(),
        }
    }
}

/// Machine-readable summary of a rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub kind: TransportKind,
    pub steps: Vec<StepRecord>,
    pub pi: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub name: String,
    pub kind: TransportKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
}

fn substitute_items(w: &Word, pi: &[Word]) -> Word {
    let mut out = Vec::new();
    for &l in w.letters() {
        debug_assert_eq!(l.kind, Kind::Variable);
        let img = &pi[l.sym as usize - 1];
        if l.neg {
            out.extend(img.inverse().0);
        } else {
            out.extend_from_slice(img.letters());
        }
    }
    Word(out)
}

fn consistency_error(g: &GeneralizedEquation) -> Result<()> {
    g.validate().map_err(|e| Error::PreconditionFailed(format!("result is malformed: {e}")))
}

fn variable(g: &GeneralizedEquation, id: usize) -> Result<&Base> {
    match g.base(id) {
        Some(b) if b.is_variable() => Ok(b),
        Some(_) => Err(Error::PreconditionFailed(format!("base {id} is a constant base"))),
        None => Err(Error::PreconditionFailed(format!("no base {id}"))),
    }
}

/// `b(α(λ))`, `b(β(λ))` and the sign product `ε(λ)ε(Δλ)`.
fn end_images(g: &GeneralizedEquation, lam: usize) -> (usize, usize, i8) {
    let b = g.b(lam);
    let d = g.dual(lam);
    let s = b.eps * d.eps;
    if s == 1 {
        (d.alpha, d.beta, s)
    } else {
        (d.beta, d.alpha, s)
    }
}

/// Image of boundary `p` of `λ` on `Δλ`, endpoints included.
fn image(g: &GeneralizedEquation, lam: usize, p: usize) -> Option<usize> {
    let b = g.b(lam);
    let (ba, bb, _) = end_images(g, lam);
    if p == b.alpha {
        Some(ba)
    } else if p == b.beta {
        Some(bb)
    } else {
        g.tie_image(p, lam)
    }
}

// ---- ET1 ----

/// Ids produced by a cut: `(λ₁, λ₂, Δλ₁, Δλ₂)`.
pub type CutIds = (usize, usize, usize, usize);

pub fn et1_cut(g: &GeneralizedEquation, conn: Connection) -> Result<(GeneralizedEquation, TransportRule)> {
    et1_cut_ids(g, conn).map(|(o, r, _)| (o, r))
}

pub fn et1_cut_ids(g: &GeneralizedEquation, conn: Connection) -> Result<(GeneralizedEquation, TransportRule, CutIds)> {
    let (p, l, q) = conn;
    if !g.connections.contains(&conn) {
        return Err(Error::NoSuchConnection(p, l, q));
    }
    let lb = g.b(l).clone();
    let d = g.dual(l).clone();
    let mut out = g.clone();
    let (dl1, dl2) = if lb.eps == d.eps { ((d.alpha, q), (q, d.beta)) } else { ((q, d.beta), (d.alpha, q)) };
    let (l1, m1) = out.add_pair((lb.alpha, p, lb.eps), (dl1.0, dl1.1, d.eps));
    let (l2, m2) = out.add_pair((p, lb.beta, lb.eps), (dl2.0, dl2.1, d.eps));
    let others: Vec<(usize, usize)> = g.connections_of(l).into_iter().filter(|&c| c != (p, q)).collect();
    out.remove_pair(l);
    for (p2, q2) in others {
        if p2 < p {
            out.connect(p2, l1, q2);
        } else {
            out.connect(p2, l2, q2);
        }
    }
    consistency_error(&out)?;
    let step = TransportStep::new("ET1", TransportKind::Isomorphic, g, out.clone());
    Ok((out, TransportRule::single(step), (l1, l2, m1, m2)))
}

// ---- ET2 ----

pub fn et2_transfer(g: &GeneralizedEquation, mu: usize, lam: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let m = variable(g, mu)?.clone();
    let l = variable(g, lam)?.clone();
    if mu == lam || m.dual == Some(lam) {
        return Err(Error::PreconditionFailed(format!("cannot transfer base {mu} along {lam}")));
    }
    if !(l.alpha <= m.alpha && m.beta <= l.beta) {
        return Err(Error::PreconditionFailed(format!("base {mu} is not contained in {lam}")));
    }
    let img = |p: usize| {
        image(g, lam, p).ok_or_else(|| Error::PreconditionFailed(format!("boundary {p} is not {lam}-tied")))
    };
    let g1 = img(m.alpha)?;
    let g2 = img(m.beta)?;
    let (_, _, s) = end_images(g, lam);
    let conns = g.connections_of(mu);
    let mut moved = Vec::new();
    for &(p, q) in &conns {
        moved.push((img(p)?, q));
    }
    let mut out = g.clone();
    let d = m.dual.expect("variable");
    out.connections.retain(|&(_, b, _)| b != mu && b != d);
    {
        let nb = out.base_mut(mu).expect("present");
        nb.alpha = g1.min(g2);
        nb.beta = g1.max(g2);
        nb.eps = m.eps * s;
    }
    for (p, q) in moved {
        out.connect(p, mu, q);
    }
    consistency_error(&out)?;
    let step = TransportStep::new("ET2", TransportKind::Isomorphic, g, out.clone());
    Ok((out, TransportRule::single(step)))
}

// ---- ET3 ----

pub fn et3_remove_matched(g: &GeneralizedEquation, lam: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let l = variable(g, lam)?;
    let d = g.dual(lam);
    if l.alpha != d.alpha || l.beta != d.beta {
        return Err(Error::NotMatched(lam));
    }
    let mut out = g.clone();
    out.remove_pair(lam);
    let step = TransportStep::new("ET3", TransportKind::Isomorphic, g, out.clone());
    Ok((out, TransportRule::single(step)))
}

// ---- ET4 ----

/// Removes a lonely base with its dual and deletes the items under it.
pub fn et4_remove_lonely(g: &GeneralizedEquation, lam: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let l = variable(g, lam)?.clone();
    let d = g.dual(lam).clone();
    if g.variable_bases().any(|b| b.id != lam && b.alpha < l.beta && l.alpha < b.beta) {
        return Err(Error::NotLonely(lam));
    }
    let mut bimg = BTreeMap::new();
    for p in l.alpha..=l.beta {
        let q = image(g, lam, p).ok_or(Error::UntiedBoundary(p))?;
        bimg.insert(p, q);
    }
    let (_, _, s) = end_images(g, lam);
    let w = l.beta - l.alpha;
    let shift = |x: usize| if x >= l.beta { x - w } else { x };
    let mut out = g.clone();
    // re-seat constant bases under λ
    let inside: Vec<Base> = g.constant_bases().filter(|c| l.alpha <= c.alpha && c.alpha < l.beta).cloned().collect();
    for c in &inside {
        out.remove_base(c.id);
    }
    let mut reseated = Vec::new();
    for c in &inside {
        let (x, y) = (bimg[&c.alpha], bimg[&(c.alpha + 1)]);
        let (lo, hi) = (x.min(y), x.max(y));
        if hi != lo + 1 {
            return Err(Error::PreconditionFailed(format!("constant base {} does not land on one item", c.id)));
        }
        let lab = c.label().expect("constant");
        reseated.push((c.id, lo, if s == 1 { lab } else { lab.inv() }));
    }
    out.remove_pair(lam);
    for (id, pos, lab) in reseated {
        if !out.constant_bases().any(|c| c.alpha == pos && c.label() == Some(lab)) {
            out.bases.push(Base { id, kind: BaseKind::Constant(lab), alpha: pos, beta: pos + 1, eps: 1, dual: None });
        }
    }
    out.delete_items(l.alpha, l.beta);
    consistency_error(&out)?;
    let mut step = TransportStep::new("ET4", TransportKind::Isomorphic, g, out.clone());
    step.pi = (1..=g.rho)
        .map(|j| {
            if j < l.alpha || j >= l.beta {
                Word::letter(item(shift(j)))
            } else {
                let (x, y) = (bimg[&j], bimg[&(j + 1)]);
                if s == 1 {
                    item_range(shift(x), shift(y))
                } else {
                    item_range(shift(y), shift(x)).inverse()
                }
            }
        })
        .collect();
    step.bmap = (1..=g.rho + 1)
        .map(|x| if x <= l.alpha || x >= l.beta { Some(shift(x)) } else { None })
        .collect();
    let _ = d;
    Ok((out, TransportRule::single(step)))
}

// ---- ET5 ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Et5Variant {
    /// Connection to an existing boundary `q`.
    Existing(usize),
    /// Fresh boundary inserted inside item `h_q`.
    Fresh(usize),
}

#[derive(Clone, Debug)]
pub struct Et5Outcome {
    pub geq: GeneralizedEquation,
    pub rule: TransportRule,
    pub variant: Et5Variant,
}

/// `λ`-ties boundary `p` in every consistent way.
pub fn et5_introduce_boundary(g: &GeneralizedEquation, p: usize, lam: usize) -> Result<Vec<Et5Outcome>> {
    let l = variable(g, lam)?.clone();
    if !l.crosses(p) {
        return Err(Error::PreconditionFailed(format!("boundary {p} is not inside base {lam}")));
    }
    if g.tie_image(p, lam).is_some() {
        return Err(Error::PreconditionFailed(format!("boundary {p} is already {lam}-tied")));
    }
    let d = g.dual(lam).clone();
    let mut res = Vec::new();
    for q in d.alpha + 1..d.beta {
        let mut out = g.clone();
        out.connect(p, lam, q);
        if out.is_formally_consistent() {
            let mut step = TransportStep::new("ET5a", TransportKind::Quotient, g, out.clone());
            step.relation = Some(boundary_relation(&out, p, lam, q));
            res.push(Et5Outcome { geq: out, rule: TransportRule::single(step), variant: Et5Variant::Existing(q) });
        }
    }
    for q in d.alpha..d.beta {
        let mut out = g.clone();
        out.insert_boundary_after(q);
        let p2 = if p > q { p + 1 } else { p };
        out.connect(p2, lam, q + 1);
        if !out.is_formally_consistent() {
            continue;
        }
        let mut step = TransportStep::new("ET5b", TransportKind::Isomorphic, g, out.clone());
        step.pi = (1..=g.rho)
            .map(|j| match j.cmp(&q) {
                std::cmp::Ordering::Less => Word::letter(item(j)),
                std::cmp::Ordering::Equal => item_range(q, q + 2),
                std::cmp::Ordering::Greater => Word::letter(item(j + 1)),
            })
            .collect();
        step.bmap = (1..=g.rho + 1).map(|x| Some(if x > q { x + 1 } else { x })).collect();
        res.push(Et5Outcome { geq: out, rule: TransportRule::single(step), variant: Et5Variant::Fresh(q) });
    }
    Ok(res)
}

/// The boundary equation contributed by `(p, λ, q)`.
pub fn boundary_relation(g: &GeneralizedEquation, p: usize, lam: usize, q: usize) -> (Word, Word) {
    let b = g.b(lam);
    let d = g.dual(lam);
    if b.eps == d.eps {
        (item_range(b.alpha, p), item_range(d.alpha, q))
    } else {
        (item_range(b.alpha, p), item_range(q, d.beta).inverse())
    }
}

/// Work item for branching pipelines.
#[derive(Clone, Debug)]
struct State {
    geq: GeneralizedEquation,
    rule: TransportRule,
}

impl State {
    fn start(g: &GeneralizedEquation) -> Self {
        State { geq: g.clone(), rule: TransportRule::identity() }
    }

    fn push(&self, g: GeneralizedEquation, r: TransportRule) -> State {
        State { geq: g, rule: self.rule.clone().then(r) }
    }
}

/// Ties `p` by `lam` in every way, or returns the state unchanged when tied.
fn tie(st: &State, p: usize, lam: usize) -> Result<Vec<State>> {
    if st.geq.tie_image(p, lam).is_some() || !st.geq.b(lam).crosses(p) {
        return Ok(vec![st.clone()]);
    }
    Ok(et5_introduce_boundary(&st.geq, p, lam)?.into_iter().map(|o| st.push(o.geq, o.rule)).collect())
}

/// Upper bound on branches produced by one derived transformation.
pub const MAX_BRANCHES: usize = 4096;

fn check_branches(n: usize) -> Result<()> {
    if n > MAX_BRANCHES {
        return Err(Error::BudgetExceeded { cap: MAX_BRANCHES, count: n });
    }
    Ok(())
}

// ---- D1 ----

/// Closes the section `[start, end]`: every base crossing an endpoint is tied
/// there (branching) and cut.
pub fn d1_close_section(g: &GeneralizedEquation, start: usize, end: usize) -> Result<Vec<(GeneralizedEquation, TransportRule)>> {
    if !(1 <= start && start < end && end <= g.rho + 1) {
        return Err(Error::PreconditionFailed(format!("[{start}, {end}] is not a section")));
    }
    let mut done = Vec::new();
    let mut work = vec![(State::start(g), start, end)];
    while let Some((st, s, e)) = work.pop() {
        let crossing = [s, e].into_iter().find_map(|p| {
            st.geq.variable_bases().filter(|b| b.crosses(p)).map(|b| b.id).min().map(|id| (p, id))
        });
        let Some((p, id)) = crossing else {
            done.push((st.geq, st.rule));
            continue;
        };
        match st.geq.tie_image(p, id) {
            Some(q) => {
                let (g2, r) = et1_cut(&st.geq, (p, id, q))?;
                work.push((st.push(g2, r), s, e));
            }
            None => {
                for o in et5_introduce_boundary(&st.geq, p, id)? {
                    let ns = o.rule.map_boundary(s).expect("kept");
                    let ne = o.rule.map_boundary(e).expect("kept");
                    work.push((st.push(o.geq, o.rule), ns, ne));
                }
            }
        }
        check_branches(work.len() + done.len())?;
    }
    done.reverse();
    Ok(done)
}

// ---- D2 ----

/// Moves the closed section `[start, end]` so that it becomes section number
/// `target` (0-based) of the result.
pub fn d2_transport(g: &GeneralizedEquation, start: usize, end: usize, target: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let secs = g.sections();
    let k = secs
        .iter()
        .position(|s| s.start == start && s.end == end)
        .ok_or(Error::SectionNotClosed(start, end))?;
    let mut order: Vec<usize> = (0..secs.len()).filter(|&x| x != k).collect();
    order.insert(target.min(order.len()), k);
    Ok(reorder(g, &order))
}

/// Applies a section permutation (`order` lists old section indices).
pub fn reorder(g: &GeneralizedEquation, order: &[usize]) -> (GeneralizedEquation, TransportRule) {
    let secs = g.sections();
    let out = g.reorder_sections(&secs, order);
    let mut new_pos = vec![0; g.rho + 1];
    let mut cur = 1;
    for &k in order {
        for i in secs[k].start..secs[k].end {
            new_pos[i] = cur;
            cur += 1;
        }
    }
    let mut step = TransportStep::new("D2", TransportKind::Isomorphic, g, out.clone());
    step.pi = (1..=g.rho).map(|i| Word::letter(item(new_pos[i]))).collect();
    step.bmap = (1..=g.rho + 1).map(|p| Some(if p <= g.rho { new_pos[p] } else { g.rho + 1 })).collect();
    (out, TransportRule::single(step))
}

// ---- D3 ----

/// Cuts along every boundary connection. `rng` randomizes the order.
pub fn d3_complete_cut<R: Rng>(g: &GeneralizedEquation, rng: Option<&mut R>) -> Result<(GeneralizedEquation, TransportRule)> {
    d3_traced(g, rng).map(|(o, r, _)| (o, r))
}

/// As [`d3_complete_cut`], also returning the final pieces of every original base.
pub fn d3_traced<R: Rng>(
    g: &GeneralizedEquation,
    mut rng: Option<&mut R>,
) -> Result<(GeneralizedEquation, TransportRule, BTreeMap<usize, BTreeSet<usize>>)> {
    let mut lineage: BTreeMap<usize, BTreeSet<usize>> = g.bases.iter().map(|b| (b.id, BTreeSet::from([b.id]))).collect();
    let mut st = State::start(g);
    while !st.geq.connections.is_empty() {
        let conns: Vec<Connection> = st.geq.connections.iter().copied().collect();
        let c = match rng.as_deref_mut() {
            Some(r) => *conns.choose(r).expect("nonempty"),
            None => conns[0],
        };
        let d = st.geq.b(c.1).dual.expect("variable");
        let (g2, r, (l1, l2, m1, m2)) = et1_cut_ids(&st.geq, c)?;
        for set in lineage.values_mut() {
            if set.remove(&c.1) {
                set.insert(l1);
                set.insert(l2);
            }
            if set.remove(&d) {
                set.insert(m1);
                set.insert(m2);
            }
        }
        st = st.push(g2, r);
    }
    Ok((st.geq, st.rule, lineage))
}

// ---- D4 ----

/// Eliminable active variable bases, in id order.
pub fn eliminable(g: &GeneralizedEquation) -> Vec<usize> {
    let gam = g.gammas();
    g.variable_bases()
        .filter(|b| g.is_active_base(b.id))
        .filter(|b| {
            let a = (b.alpha..b.beta).any(|i| gam[i - 1] == 1);
            let touch = |p: usize| g.bases.iter().any(|o| o.id != b.id && o.touches(p));
            let bnd = [b.alpha, b.beta].into_iter().any(|p| p != 1 && p != g.rho + 1 && !touch(p));
            a || bnd
        })
        .map(|b| b.id)
        .collect()
}

/// `Ker(Ω)` and the removed base ids in removal order.
pub fn d4_kernel(g: &GeneralizedEquation) -> Result<(GeneralizedEquation, Vec<usize>)> {
    d4_kernel_with::<rand::rngs::ThreadRng>(g, None)
}

/// Kernel with a random cleaning order.
pub fn d4_kernel_with<R: Rng>(g: &GeneralizedEquation, mut rng: Option<&mut R>) -> Result<(GeneralizedEquation, Vec<usize>)> {
    if !g.connections.is_empty() {
        return Err(Error::HasConnections);
    }
    let mut out = g.clone();
    let mut log = Vec::new();
    loop {
        let el = eliminable(&out);
        let Some(&id) = (match rng.as_deref_mut() {
            Some(r) => el.choose(r),
            None => el.first(),
        }) else {
            break;
        };
        let d = out.b(id).dual.expect("variable");
        out.remove_pair(id);
        log.push(id);
        log.push(d);
    }
    Ok((out, log))
}

/// `Ω̄`: deletes every item covered by no base.
pub fn strip_free(g: &GeneralizedEquation) -> GeneralizedEquation {
    let mut out = g.clone();
    let gam = g.gammas();
    for i in (1..=g.rho).rev() {
        if gam[i - 1] == 0 {
            out.delete_items(i, i + 1);
        }
    }
    out
}

// ---- D5 ----

#[derive(Clone, Debug)]
pub struct D5Outcome {
    pub geq: GeneralizedEquation,
    pub rule: TransportRule,
    pub carrier: Base,
    pub transfers: Vec<Base>,
}

/// Leading variable base with the largest right end, smallest id on ties.
pub fn carrier(g: &GeneralizedEquation) -> Option<usize> {
    g.variable_bases()
        .filter(|b| b.alpha == 1 && g.is_active_base(b.id))
        .max_by(|a, b| a.beta.cmp(&b.beta).then(b.id.cmp(&a.id)))
        .map(|b| b.id)
}

pub fn transfer_bases(g: &GeneralizedEquation, mu: usize) -> Vec<usize> {
    let m = g.b(mu);
    g.variable_bases()
        .filter(|b| b.id != mu && Some(b.id) != m.dual && g.is_active_base(b.id) && b.beta <= m.beta)
        .map(|b| b.id)
        .collect()
}

/// Every branch of the entire transformation.
pub fn d5_entire_all(g: &GeneralizedEquation, carrier_override: Option<usize>) -> Result<Vec<D5Outcome>> {
    let low: Vec<usize> = (1..=g.rho).filter(|&i| g.is_active_item(i) && g.gamma(i) < 2).collect();
    if !low.is_empty() {
        return Err(Error::PreconditionFailed(format!("items with gamma < 2: {low:?}")));
    }
    let mu = match carrier_override {
        Some(m) => m,
        None => carrier(g).ok_or_else(|| Error::PreconditionFailed("no leading base".into()))?,
    };
    let carrier_base = g.b(mu).clone();
    let transfers = transfer_bases(g, mu);
    let transfer_bases_v: Vec<Base> = transfers.iter().map(|&t| g.b(t).clone()).collect();
    // μ-tie every boundary of every transfer base; boundaries created on the
    // way are not targets themselves
    let targets: BTreeSet<usize> = transfers.iter().flat_map(|&t| g.b(t).alpha..=g.b(t).beta).collect();
    let mut tied = Vec::new();
    let mut work = vec![State::start(g)];
    while let Some(st) = work.pop() {
        let m = st.geq.b(mu).clone();
        let next = targets.iter().find_map(|&p0| {
            let p = st.rule.map_boundary(p0)?;
            (m.crosses(p) && st.geq.tie_image(p, mu).is_none()).then_some(p)
        });
        match next {
            None => tied.push(st),
            Some(p) => work.extend(tie(&st, p, mu)?),
        }
        check_branches(work.len() + tied.len())?;
    }
    tied.reverse();
    let mut out = Vec::new();
    for st in tied {
        let mut st = st;
        let mut ok = true;
        for &t in &transfers {
            match et2_transfer(&st.geq, t, mu) {
                Ok((g2, r)) => st = st.push(g2, r),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        for fin in cut_and_drop(&st, mu)? {
            out.push(D5Outcome {
                geq: fin.geq,
                rule: fin.rule,
                carrier: carrier_base.clone(),
                transfers: transfer_bases_v.clone(),
            });
        }
    }
    Ok(out)
}

/// Cuts the carrier after its lonely prefix and deletes that prefix.
fn cut_and_drop(st: &State, mu: usize) -> Result<Vec<State>> {
    let mut out = Vec::new();
    let mut work = vec![st.clone()];
    while let Some(st) = work.pop() {
        let g = &st.geq;
        let gam = g.gammas();
        let m = g.b(mu).clone();
        let i = (1..m.beta).take_while(|&j| gam[j - 1] == 1).count();
        if i == 0 {
            return Err(Error::PreconditionFailed("carrier has no lonely prefix".into()));
        }
        if i + 1 == m.beta {
            let (g2, r) = et4_remove_lonely(g, mu)?;
            out.push(st.push(g2, r));
            continue;
        }
        let p = i + 1;
        match g.tie_image(p, mu) {
            None => work.extend(tie(&st, p, mu)?),
            Some(q) => {
                let (g2, r, (l1, ..)) = et1_cut_ids(g, (p, mu, q))?;
                let st2 = st.push(g2, r);
                match et4_remove_lonely(&st2.geq, l1) {
                    Ok((g3, r3)) => out.push(st2.push(g3, r3)),
                    Err(_) => continue,
                }
            }
        }
        check_branches(work.len() + out.len())?;
    }
    out.reverse();
    Ok(out)
}

/// Single-output entire transformation: the branch accepting `hint`, else the first.
pub fn d5_entire(g: &GeneralizedEquation, hint: Option<&[Word]>) -> Result<D5Outcome> {
    let all = d5_entire_all(g, None)?;
    let pick = match hint {
        Some(u) => all.iter().position(|o| o.rule.forward(u).is_some()),
        None => None,
    };
    let k = pick.unwrap_or(0);
    all.into_iter().nth(k).ok_or_else(|| Error::PreconditionFailed("no consistent branch".into()))
}

// ---- D6 ----

/// Identifies the closed constant sections of `lam` and `mu` (same letter);
/// the item of `lam` disappears.
pub fn d6_identify_constants(g: &GeneralizedEquation, lam: usize, mu: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let (l, m) = match (g.base(lam), g.base(mu)) {
        (Some(l), Some(m)) if !l.is_variable() && !m.is_variable() => (l.clone(), m.clone()),
        _ => return Err(Error::PreconditionFailed("both bases must be constant".into())),
    };
    let (la, ma) = (l.label().expect("constant"), m.label().expect("constant"));
    if la.positive() != ma.positive() || l.alpha == m.alpha {
        return Err(Error::PreconditionFailed("labels are over different letters".into()));
    }
    let (i, j) = (l.alpha, m.alpha);
    for (x, id) in [(i, lam), (j, mu)] {
        let s = g.section_of_item(x);
        if s.start != x || s.end != x + 1 {
            let _ = id;
            return Err(Error::SectionNotClosed(s.start, s.end));
        }
    }
    let s = la.sign() * ma.sign();
    let mut out = g.clone();
    let on_i: Vec<Base> = g.bases.iter().filter(|b| b.alpha == i).cloned().collect();
    for b in &on_i {
        match b.kind {
            BaseKind::Constant(lab) => {
                let nl = if s == 1 { lab } else { lab.inv() };
                out.remove_base(b.id);
                if !out.constant_bases().any(|c| c.alpha == j && c.label() == Some(nl)) {
                    out.bases.push(Base { kind: BaseKind::Constant(nl), alpha: j, beta: j + 1, ..b.clone() });
                }
            }
            BaseKind::Variable => {
                let nb = out.base_mut(b.id).expect("present");
                nb.alpha = j;
                nb.beta = j + 1;
                nb.eps *= s;
            }
        }
    }
    out.delete_items(i, i + 1);
    consistency_error(&out)?;
    let jn = if j < i { j } else { j - 1 };
    let mut step = TransportStep::new("D6", TransportKind::Isomorphic, g, out.clone());
    step.pi = (1..=g.rho)
        .map(|k| match k.cmp(&i) {
            std::cmp::Ordering::Less => Word::letter(item(k)),
            std::cmp::Ordering::Equal => Word::letter(item(jn)).pow_sign(s),
            std::cmp::Ordering::Greater => Word::letter(item(k - 1)),
        })
        .collect();
    step.bmap = (1..=g.rho + 1).map(|x| Some(if x > i { x - 1 } else { x })).collect();
    Ok((out, TransportRule::single(step)))
}

// ---- auxiliary equation ----

/// Adds a constant section `[ρ+1, ρ+2]` and a pair `λ = [1, β(Δμ))`, `Δλ` on the
/// new section. Returns the equation, the rule and the id of `λ`.
pub fn auxiliary_equation(g: &GeneralizedEquation, mu: usize) -> Result<(GeneralizedEquation, TransportRule, usize)> {
    let d = g.dual(mu).clone();
    let mut out = g.clone();
    out.rho += 1;
    out.item_kinds.push(SectionKind::Constant);
    let (lam, _) = out.add_pair((1, d.beta, 1), (g.rho + 1, g.rho + 2, 1));
    consistency_error(&out)?;
    let mut step = TransportStep::new("AUX", TransportKind::Isomorphic, g, out.clone());
    step.defs = vec![(g.rho + 1, item_range(1, d.beta))];
    Ok((out, TransportRule::single(step), lam))
}

/// Ties `p` by `lam` in every way (public wrapper used by the tree builder).
pub fn tie_all(g: &GeneralizedEquation, p: usize, lam: usize) -> Result<Vec<(GeneralizedEquation, TransportRule)>> {
    Ok(tie(&State::start(g), p, lam)?.into_iter().map(|s| (s.geq, s.rule)).collect())
}

/// Runs `f` on every state, concatenating the branches.
pub fn then_each<F>(input: Vec<(GeneralizedEquation, TransportRule)>, mut f: F) -> Result<Vec<(GeneralizedEquation, TransportRule)>>
where
    F: FnMut(&GeneralizedEquation, &TransportRule) -> Result<Vec<(GeneralizedEquation, TransportRule)>>,
{
    let mut out = Vec::new();
    for (g, r) in input {
        for (g2, r2) in f(&g, &r)? {
            out.push((g2, r.clone().then(r2)));
        }
        check_branches(out.len())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{solve_geq, Strategy};
    use crate::word::Letter;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(s: &str) -> Word {
        Word::from_letters(s.chars().map(|c| match c {
            'a' => Letter::c(0),
            'b' => Letter::c(1),
            'A' => Letter::c(0).inv(),
            'B' => Letter::c(1).inv(),
            _ => panic!(),
        }))
    }

    /// h1 h2 = h3 h4 with a connection (2, λ, 4): U = (a, b, a, b).
    fn simple() -> (GeneralizedEquation, usize) {
        let mut g = GeneralizedEquation::new(4);
        let (l, _) = g.add_pair((1, 3, 1), (3, 5, 1));
        g.connect(2, l, 4);
        (g, l)
    }

    #[test]
    fn et1_consumes_connection() {
        let (g, l) = simple();
        let (o, r) = et1_cut(&g, (2, l, 4)).unwrap();
        assert!(o.connections.is_empty());
        assert_eq!(o.variable_bases().count(), 4);
        let u = vec![w("a"), w("b"), w("a"), w("b")];
        assert_eq!(r.forward(&u).unwrap(), u);
        assert!(matches!(et1_cut(&g, (3, l, 4)), Err(Error::NoSuchConnection(..))));
    }

    #[test]
    fn et1_reversed_orientation() {
        let mut g = GeneralizedEquation::new(4);
        let (l, _) = g.add_pair((1, 3, 1), (3, 5, -1));
        g.connect(2, l, 4);
        let (o, _) = et1_cut(&g, (2, l, 4)).unwrap();
        let ends: BTreeSet<(usize, usize)> = o.variable_bases().map(|b| (b.alpha, b.beta)).collect();
        assert!(ends.contains(&(4, 5)) && ends.contains(&(3, 4)));
        // Δλ₁ = (q, β(Δλ))
        let l1 = o.variable_bases().find(|b| (b.alpha, b.beta) == (1, 2)).unwrap();
        let d1 = o.dual(l1.id);
        assert_eq!((d1.alpha, d1.beta), (4, 5));
        let u = vec![w("a"), w("b"), w("B"), w("A")];
        assert!(g.is_solution(&u) && o.is_solution(&u));
    }

    #[test]
    fn et3_and_et4() {
        let mut g = GeneralizedEquation::new(2);
        let (l, _) = g.add_pair((1, 3, 1), (1, 3, 1));
        let (o, _) = et3_remove_matched(&g, l).unwrap();
        assert!(o.bases.is_empty());
        // lonely λ covering h2,h3, Δλ on h4,h5, fully tied
        let mut g = GeneralizedEquation::new(5);
        g.add_pair((1, 2, 1), (1, 2, 1));
        let (l, _) = g.add_pair((2, 4, 1), (4, 6, 1));
        g.connect(3, l, 5);
        let (o, r) = et4_remove_lonely(&g, l).unwrap();
        assert_eq!(o.rho, 3);
        let u = vec![w("b"), w("a"), w("b"), w("a"), w("b")];
        let v = r.forward(&u).unwrap();
        assert_eq!(v, vec![w("b"), w("a"), w("b")]);
        assert_eq!(r.backward(&v), u);
    }

    #[test]
    fn et4_reversed_uses_inverse_pieces() {
        let mut g = GeneralizedEquation::new(4);
        let (l, _) = g.add_pair((1, 3, 1), (3, 5, -1));
        g.connect(2, l, 4);
        let (o, r) = et4_remove_lonely(&g, l).unwrap();
        assert_eq!(o.rho, 2);
        let u = vec![w("a"), w("b"), w("B"), w("A")];
        let v = r.forward(&u).unwrap();
        assert_eq!(r.backward(&v), u);
    }

    #[test]
    fn et4_preconditions() {
        let mut g = GeneralizedEquation::new(4);
        let (l, _) = g.add_pair((1, 3, 1), (3, 5, 1));
        assert!(matches!(et4_remove_lonely(&g, l), Err(Error::UntiedBoundary(2))));
        g.add_pair((2, 3, 1), (2, 3, 1));
        g.connect(2, l, 4);
        assert!(matches!(et4_remove_lonely(&g, l), Err(Error::NotLonely(_))));
    }

    #[test]
    fn et5_variants_partition_solutions() {
        let mut g = GeneralizedEquation::new(4);
        let (l, _) = g.add_pair((1, 3, 1), (3, 5, 1));
        let vs = et5_introduce_boundary(&g, 2, l).unwrap();
        // one existing interior boundary, two items
        assert_eq!(vs.len(), 3);
        for u in solve_geq(&g, 2, 2, Strategy::Propagate).unwrap() {
            let hits = vs.iter().filter(|o| o.rule.forward(&u).is_some()).count();
            assert_eq!(hits, 1, "{u:?}");
        }
    }

    #[test]
    fn et2_moves_connections() {
        // λ = [1,4) ~ Δλ = [4,7); μ = [2,3) ~ Δμ = [7,8)
        let mut g = GeneralizedEquation::new(7);
        let (l, _) = g.add_pair((1, 4, 1), (4, 7, 1));
        let (m, _) = g.add_pair((2, 3, 1), (7, 8, 1));
        g.connect(2, l, 5);
        g.connect(3, l, 6);
        let (o, _) = et2_transfer(&g, m, l).unwrap();
        assert_eq!((o.b(m).alpha, o.b(m).beta), (5, 6));
        let mut g2 = GeneralizedEquation::new(7);
        let (l, _) = g2.add_pair((1, 4, 1), (4, 7, 1));
        let (m, _) = g2.add_pair((2, 3, 1), (7, 8, 1));
        assert!(matches!(et2_transfer(&g2, m, l), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn d2_round_trip() {
        let mut g = GeneralizedEquation::new(3);
        g.add_pair((1, 2, 1), (3, 4, 1));
        g.add_constant(2, Letter::c(0));
        let (o, r) = d2_transport(&g, 1, 2, 2).unwrap();
        let back = d2_transport(&o, 3, 4, 0).unwrap().0;
        assert!(back.iso_eq(&g));
        let u = vec![w("b"), w("a"), w("b")];
        assert_eq!(r.backward(&r.forward(&u).unwrap()), u);
        assert!(matches!(d2_transport(&g, 1, 3, 0), Err(Error::SectionNotClosed(1, 3))));
    }

    #[test]
    fn d3_order_independent() {
        let mut g = GeneralizedEquation::new(6);
        let (l, _) = g.add_pair((1, 4, 1), (4, 7, 1));
        g.connect(2, l, 5);
        g.connect(3, l, 6);
        let (a, _) = d3_complete_cut::<ChaCha8Rng>(&g, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (b, _) = d3_complete_cut(&g, Some(&mut rng)).unwrap();
        assert!(a.iso_eq(&b));
        assert_eq!(a.variable_bases().count(), 6);
    }

    #[test]
    fn kernel_cases() {
        let mut g = GeneralizedEquation::new(2);
        g.add_pair((1, 2, 1), (2, 3, 1));
        g.add_pair((1, 2, 1), (2, 3, 1));
        let (k, log) = d4_kernel(&g).unwrap();
        assert!(log.is_empty());
        assert!(k.iso_eq(&g));
        let mut g = GeneralizedEquation::new(3);
        g.add_pair((1, 2, 1), (2, 3, 1));
        g.add_pair((2, 3, 1), (3, 4, 1));
        let (k, _) = d4_kernel(&g).unwrap();
        assert!(k.bases.is_empty());
        let (s, _) = simple();
        assert!(matches!(d4_kernel(&s), Err(Error::HasConnections)));
    }

    #[test]
    fn d6_identifies() {
        let mut g = GeneralizedEquation::new(3);
        g.add_pair((2, 3, 1), (2, 3, 1));
        let a = g.add_constant(1, Letter::c(0));
        let b = g.add_constant(3, Letter::c(0).inv());
        let (o, r) = d6_identify_constants(&g, a, b).unwrap();
        assert_eq!(o.rho, 2);
        assert_eq!(o.constant_bases().count(), 1);
        let u = vec![w("a"), w("b"), w("A")];
        let v = r.forward(&u).unwrap();
        assert_eq!(r.backward(&v), u);
    }
}
