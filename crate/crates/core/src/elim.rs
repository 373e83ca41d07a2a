//! Case analysis and the bounded elimination tree.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geq::{GeneralizedEquation, Measures, SectionKind};
use crate::oracle::{find_violation, Search};
use crate::transform::{
    auxiliary_equation, carrier, d1_close_section, d2_transport, d3_traced, d4_kernel, d5_entire_all,
    d6_identify_constants, et1_cut_ids, et2_transfer, et3_remove_matched, et4_remove_lonely, et5_introduce_boundary,
    reorder, tie_all, then_each, RuleRecord, TransportKind, TransportRule, MAX_BRANCHES,
};

/// Case number with the 15.1 flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseId {
    pub case: u8,
    pub sub: bool,
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.sub {
            write!(f, "15.1")
        } else {
            write!(f, "{}", self.case)
        }
    }
}

/// What the applicable case acts on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Plan {
    Sort,
    Quotient,
    NoActive,
    CloseConstant { base: usize },
    MoveConstant { base: usize },
    MoveFree { item: usize },
    Matched { base: usize },
    Lonely { base: usize },
    LinearOpen { item: usize, base: usize },
    LinearTransfer { mu1: usize, mu2: usize },
    LinearClose { item: usize },
    TieFree { p: usize, base: usize },
    Quadratic,
    ClosedBase { base: usize },
    TieTouching { p: usize, base: usize },
    General { carrier: usize, sub: bool },
}

impl Plan {
    pub fn case(&self) -> CaseId {
        let c = match self {
            Plan::Sort => 0,
            Plan::Quotient => 1,
            Plan::NoActive => 2,
            Plan::CloseConstant { .. } => 3,
            Plan::MoveConstant { .. } => 4,
            Plan::MoveFree { .. } => 5,
            Plan::Matched { .. } => 6,
            Plan::Lonely { .. } => 7,
            Plan::LinearOpen { .. } => 8,
            Plan::LinearTransfer { .. } => 9,
            Plan::LinearClose { .. } => 10,
            Plan::TieFree { .. } => 11,
            Plan::Quadratic => 12,
            Plan::ClosedBase { .. } => 13,
            Plan::TieTouching { .. } => 14,
            Plan::General { .. } => 15,
        };
        CaseId { case: c, sub: matches!(self, Plan::General { sub: true, .. }) }
    }
}

fn active_items(g: &GeneralizedEquation) -> Vec<usize> {
    (1..=g.rho).filter(|&i| g.is_active_item(i)).collect()
}

/// Boundaries with an active item on at least one side.
fn active_boundaries(g: &GeneralizedEquation) -> Vec<usize> {
    (1..=g.rho + 1)
        .filter(|&p| (p > 1 && g.is_active_item(p - 1)) || (p <= g.rho && g.is_active_item(p)))
        .collect()
}

fn sections_sorted(g: &GeneralizedEquation) -> bool {
    g.sections().windows(2).all(|w| w[0].kind.rank() <= w[1].kind.rank())
}

fn single_item_section(g: &GeneralizedEquation, i: usize) -> bool {
    let s = g.section_of_item(i);
    s.start == i && s.end == i + 1
}

/// Pair of bases spanning a closed active section alone, whose D3 pieces all
/// leave the kernel.
fn case9_pair(g: &GeneralizedEquation) -> Option<(usize, usize)> {
    let cands: Vec<(usize, usize)> = g
        .sections()
        .into_iter()
        .filter(|s| s.kind == SectionKind::Active)
        .filter_map(|s| {
            let inside: Vec<_> = g.bases.iter().filter(|b| s.contains_base(b)).collect();
            match inside.as_slice() {
                [a, b]
                    if a.is_variable()
                        && b.is_variable()
                        && a.dual != Some(b.id)
                        && (a.alpha, a.beta) == (s.start, s.end)
                        && (b.alpha, b.beta) == (s.start, s.end) =>
                {
                    Some((a.id.min(b.id), a.id.max(b.id)))
                }
                _ => None,
            }
        })
        .collect();
    if cands.is_empty() {
        return None;
    }
    let (cut, _, lineage) = d3_traced::<rand::rngs::ThreadRng>(g, None).ok()?;
    let (ker, _) = d4_kernel(&cut).ok()?;
    let kept: BTreeSet<usize> = ker.bases.iter().map(|b| b.id).collect();
    cands.into_iter().find(|(a, b)| {
        lineage[a].iter().chain(lineage[b].iter()).all(|id| !kept.contains(id))
    })
}

/// The least applicable case. `quotient` marks an incoming edge whose rule is
/// not known to be an isomorphism.
pub fn classify(g: &GeneralizedEquation, quotient: bool) -> Plan {
    if !sections_sorted(g) {
        return Plan::Sort;
    }
    if quotient {
        return Plan::Quotient;
    }
    let act = active_items(g);
    if act.is_empty() {
        return Plan::NoActive;
    }
    let mut consts: Vec<_> = g.constant_bases().filter(|b| g.is_active_base(b.id)).collect();
    consts.sort_by_key(|b| (b.alpha, b.id));
    if let Some(d) = consts.iter().find(|d| !single_item_section(g, d.alpha)) {
        return Plan::CloseConstant { base: d.id };
    }
    if let Some(d) = consts.first() {
        return Plan::MoveConstant { base: d.id };
    }
    let gam = g.gammas();
    if let Some(&q) = act.iter().find(|&&i| gam[i - 1] == 0) {
        return Plan::MoveFree { item: q };
    }
    let mut vars: Vec<_> = g.variable_bases().filter(|b| g.is_active_base(b.id)).collect();
    vars.sort_by_key(|b| b.id);
    if let Some(l) = vars.iter().find(|l| {
        let d = g.dual(l.id);
        (l.alpha, l.beta) == (d.alpha, d.beta)
    }) {
        return Plan::Matched { base: l.id };
    }
    let linear: Vec<usize> = act.iter().copied().filter(|&i| gam[i - 1] == 1).collect();
    let cover = |i: usize| g.bases.iter().find(|b| b.contains_item(i)).expect("gamma 1").id;
    if let Some(&i) = linear.iter().find(|&&i| g.is_closed(i) && g.is_closed(i + 1)) {
        return Plan::Lonely { base: cover(i) };
    }
    if let Some(&i) = linear.iter().find(|&&i| g.is_closed(i) != g.is_closed(i + 1)) {
        return Plan::LinearOpen { item: i, base: cover(i) };
    }
    if let Some(&i) = linear.first() {
        return match case9_pair(g) {
            Some((mu1, mu2)) => Plan::LinearTransfer { mu1, mu2 },
            None => Plan::LinearClose { item: i },
        };
    }
    let bnd = active_boundaries(g);
    for &p in &bnd {
        if g.is_free_boundary(p) {
            if let Some(m) = g.variable_bases().filter(|b| b.crosses(p)).map(|b| b.id).min() {
                return Plan::TieFree { p, base: m };
            }
        }
    }
    if act.iter().all(|&i| gam[i - 1] == 2) {
        return Plan::Quadratic;
    }
    let mut closed: Vec<_> = vars.iter().filter(|b| g.is_closed(b.alpha) && g.is_closed(b.beta)).collect();
    closed.sort_by_key(|b| (b.alpha, b.id));
    if let Some(m) = closed.first() {
        return Plan::ClosedBase { base: m.id };
    }
    if let Some((p, m)) = touching_untied(g, &bnd) {
        return Plan::TieTouching { p, base: m };
    }
    match carrier(g) {
        Some(c) => {
            let m = g.b(c);
            let d = g.dual(c);
            let sub = d.alpha < m.beta && m.alpha < d.beta;
            Plan::General { carrier: c, sub }
        }
        // no leading base: only possible for malformed input
        None => Plan::NoActive,
    }
}

/// First active boundary touching a base, crossed by a base that does not tie it.
fn touching_untied(g: &GeneralizedEquation, bnd: &[usize]) -> Option<(usize, usize)> {
    for &p in bnd {
        if !g.bases.iter().any(|b| b.touches(p)) {
            continue;
        }
        let mut ms: Vec<usize> = g
            .variable_bases()
            .filter(|b| b.crosses(p) && g.tie_image(p, b.id).is_none())
            .map(|b| b.id)
            .collect();
        ms.sort();
        if let Some(&m) = ms.first() {
            return Some((p, m));
        }
    }
    None
}

pub fn classify_case(g: &GeneralizedEquation, quotient: bool) -> CaseId {
    classify(g, quotient).case()
}

/// One outgoing edge before it is attached to the tree.
#[derive(Clone, Debug)]
pub struct Child {
    pub geq: GeneralizedEquation,
    pub rule: TransportRule,
    pub auxiliary: bool,
}

type Branches = Vec<(GeneralizedEquation, TransportRule)>;

fn one(r: Result<(GeneralizedEquation, TransportRule)>) -> Result<Branches> {
    r.map(|x| vec![x])
}

/// Ties every boundary strictly inside `base` by `base`.
fn tie_inside(input: Branches, base: usize) -> Result<Branches> {
    let mut done = Vec::new();
    let mut work = input;
    while let Some((g, r)) = work.pop() {
        let b = g.b(base).clone();
        match (b.alpha + 1..b.beta).find(|&p| g.tie_image(p, base).is_none()) {
            None => done.push((g, r)),
            Some(p) => {
                for (g2, r2) in tie_all(&g, p, base)? {
                    work.push((g2, r.clone().then(r2)));
                }
            }
        }
        if work.len() + done.len() > MAX_BRANCHES {
            return Err(Error::BudgetExceeded { cap: MAX_BRANCHES, count: work.len() + done.len() });
        }
    }
    done.reverse();
    Ok(done)
}

/// Ties every active boundary that touches a base by every base crossing it.
fn tie_closure(input: Branches) -> Result<Branches> {
    let mut done = Vec::new();
    let mut work = input;
    while let Some((g, r)) = work.pop() {
        match touching_untied(&g, &active_boundaries(&g)) {
            None => done.push((g, r)),
            Some((p, m)) => {
                for (g2, r2) in tie_all(&g, p, m)? {
                    work.push((g2, r.clone().then(r2)));
                }
            }
        }
        if work.len() + done.len() > MAX_BRANCHES {
            return Err(Error::BudgetExceeded { cap: MAX_BRANCHES, count: work.len() + done.len() });
        }
    }
    done.reverse();
    Ok(done)
}

/// Ties `p` by `base`, cuts there and removes the piece on `[item, item+1)`.
fn cut_off_item(g: &GeneralizedEquation, item: usize, base: usize) -> Result<Branches> {
    let b = g.b(base).clone();
    let p = if b.beta > item + 1 { item + 1 } else { item };
    then_each(tie_all(g, p, base)?, |g2, r| {
        let p2 = r.map_boundary(p).expect("kept");
        let i2 = r.map_boundary(item).expect("kept");
        let q = g2.tie_image(p2, base).expect("tied");
        let (g3, r3, (l1, l2, ..)) = et1_cut_ids(g2, (p2, base, q))?;
        let piece = if g3.b(l1).contains_item(i2) { l1 } else { l2 };
        // the other endpoint may still be open
        let pb = g3.b(piece).clone();
        if pb.beta - pb.alpha > 1 {
            let more = cut_off_item(&g3, i2, piece)?;
            return Ok(more.into_iter().map(|(g4, r4)| (g4, r3.clone().then(r4))).collect());
        }
        let (g4, r4) = et4_remove_lonely(&g3, piece)?;
        Ok(vec![(g4, r3.then(r4))])
    })
}

/// Children of a node; errors make the node terminal.
pub fn expand(g: &GeneralizedEquation, plan: &Plan) -> Result<Vec<Child>> {
    let principal = |v: Branches| v.into_iter().map(|(geq, rule)| Child { geq, rule, auxiliary: false }).collect();
    let start = vec![(g.clone(), TransportRule::identity())];
    Ok(match *plan {
        Plan::Quotient | Plan::NoActive => return Err(Error::TerminalNode),
        Plan::Sort => {
            let secs = g.sections();
            let mut order: Vec<usize> = (0..secs.len()).collect();
            order.sort_by_key(|&k| secs[k].kind.rank());
            principal(vec![reorder(g, &order)])
        }
        Plan::CloseConstant { base } => {
            let a = g.b(base).alpha;
            principal(d1_close_section(g, a, a + 1)?)
        }
        Plan::MoveConstant { base } => principal(one(move_constant(g, base))?),
        Plan::MoveFree { item } => principal(then_each(d1_close_section(g, item, item + 1)?, |g2, r| {
            let q = r.map_boundary(item).expect("kept");
            let last = g2.sections().len() - 1;
            let (mut g3, r3) = d2_transport(g2, q, q + 1, last)?;
            let q3 = r3.map_boundary(q).expect("kept");
            g3.set_section_kind(q3, q3 + 1, SectionKind::Constant);
            Ok(vec![(g3, r3)])
        })?),
        Plan::Matched { base } => principal(one(et3_remove_matched(g, base))?),
        Plan::Lonely { base } => principal(one(et4_remove_lonely(g, base))?),
        Plan::LinearOpen { item, base } => principal(cut_off_item(g, item, base)?),
        Plan::LinearTransfer { mu1, mu2 } => principal(then_each(tie_inside(start, mu1)?, |g2, _| {
            let (g3, r3) = et2_transfer(g2, mu2, mu1)?;
            let (g4, r4) = et4_remove_lonely(&g3, mu1)?;
            Ok(vec![(g4, r3.then(r4))])
        })?),
        Plan::LinearClose { item } => principal(then_each(d1_close_section(g, item, item + 1)?, |g2, r| {
            let i2 = r.map_boundary(item).expect("kept");
            let b = g2.bases.iter().find(|b| b.contains_item(i2)).expect("covered").id;
            one(et4_remove_lonely(g2, b))
        })?),
        Plan::TieFree { p, base } | Plan::TieTouching { p, base } => principal(
            et5_introduce_boundary(g, p, base)?.into_iter().map(|o| (o.geq, o.rule)).collect(),
        ),
        Plan::Quadratic => principal(d5_entire_all(g, None)?.into_iter().map(|o| (o.geq, o.rule)).collect()),
        Plan::ClosedBase { base } => principal(then_each(tie_inside(start, base)?, |g2, _| {
            let m = g2.b(base).clone();
            let inner: Vec<usize> = g2
                .variable_bases()
                .filter(|b| b.id != base && Some(b.id) != m.dual && m.alpha <= b.alpha && b.beta <= m.beta)
                .map(|b| b.id)
                .collect();
            let mut cur = g2.clone();
            let mut rule = TransportRule::identity();
            for t in inner {
                let (n, r) = et2_transfer(&cur, t, base)?;
                cur = n;
                rule = rule.then(r);
            }
            let (n, r) = et4_remove_lonely(&cur, base)?;
            Ok(vec![(n, rule.then(r))])
        })?),
        Plan::General { carrier: _, sub } => {
            let main: Branches = d5_entire_all(g, None)?.into_iter().map(|o| (o.geq, o.rule)).collect();
            let mut out: Vec<Child> = principal(tie_closure(main)?);
            if sub {
                let mu = carrier(g).expect("carrier");
                let (aux, ra, lam) = auxiliary_equation(g, mu)?;
                let branches: Branches = d5_entire_all(&aux, Some(lam))?
                    .into_iter()
                    .map(|o| (o.geq, ra.clone().then(o.rule)))
                    .collect();
                out.extend(tie_closure(branches)?.into_iter().map(|(geq, rule)| Child { geq, rule, auxiliary: true }));
            }
            out
        }
    })
}

/// Case 4: moves the section of `base` behind the variable part, identifies
/// the single-item sections carrying the same letter with it and marks it constant.
fn move_constant(g: &GeneralizedEquation, base: usize) -> Result<(GeneralizedEquation, TransportRule)> {
    let a = g.b(base).alpha;
    let secs = g.sections();
    let target = secs.iter().filter(|s| s.kind != SectionKind::Constant).count() - 1;
    let (mut cur, mut rule) = d2_transport(g, a, a + 1, target)?;
    let letter = g.b(base).label().expect("constant").positive();
    loop {
        let pos = cur.b(base).alpha;
        let other = cur
            .constant_bases()
            .filter(|c| c.id != base && c.alpha != pos && c.label().map(|l| l.positive()) == Some(letter))
            .filter(|c| single_item_section(&cur, c.alpha))
            .map(|c| (c.alpha, c.id))
            .min();
        let Some((_, id)) = other else { break };
        let (n, r) = d6_identify_constants(&cur, id, base)?;
        cur = n;
        rule = rule.then(r);
    }
    let pos = cur.b(base).alpha;
    cur.set_section_kind(pos, pos + 1, SectionKind::Constant);
    Ok((cur, rule))
}

// ---- the tree ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Expanded,
    Repeat,
    /// Reached by a quotient edge with no witness either way.
    Case1Unresolved,
    /// Reached by a quotient edge with a witnessed proper quotient.
    Case1Leaf,
    Case2Leaf,
    Budget,
    /// The case's transformation failed; the message is on the node.
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Principal,
    Auxiliary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConfirmedProper,
    Unresolved,
}

#[derive(Clone, Debug)]
pub struct ElimNode {
    pub id: usize,
    pub equation: GeneralizedEquation,
    pub case: CaseId,
    pub depth: usize,
    pub hash: String,
    pub status: NodeStatus,
    pub parent: Option<usize>,
    pub error: Option<String>,
    key: String,
    plan: Plan,
}

#[derive(Clone, Debug)]
pub struct ElimEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub rule: TransportRule,
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug)]
pub struct ElimTree {
    pub nodes: Vec<ElimNode>,
    pub edges: Vec<ElimEdge>,
    pub root: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub depth: usize,
    pub nodes: usize,
    /// Alphabet size used by witness searches.
    pub constants: usize,
    pub witness_len: usize,
    pub witness_budget: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { depth: 16, nodes: 10_000, constants: 2, witness_len: 2, witness_budget: 20_000 }
    }
}

/// FNV-1a, printed as hex; stable across runs and platforms.
fn stable_hash(s: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Verdict for a rule with quotient steps: a witness solution of the step's
/// source violating the added relation confirms a proper quotient.
pub fn quotient_verdict(rule: &TransportRule, limits: &Limits) -> Verdict {
    for s in &rule.steps {
        if let (TransportKind::Quotient, Some(rel)) = (s.kind, &s.relation) {
            if let Ok(Search::Found(_)) =
                find_violation(&s.source, limits.constants, limits.witness_len, limits.witness_budget, rel)
            {
                return Verdict::ConfirmedProper;
            }
        }
    }
    Verdict::Unresolved
}

struct Prepared {
    child: Child,
    key: String,
    canon: String,
    plan: Plan,
    verdict: Option<Verdict>,
}

fn prepare(child: Child, limits: &Limits) -> Prepared {
    let quotient = child.rule.kind() == TransportKind::Quotient;
    let verdict = quotient.then(|| quotient_verdict(&child.rule, limits));
    let plan = classify(&child.geq, quotient);
    Prepared { key: child.geq.repeat_key(), canon: child.geq.canonical_form(), plan, verdict, child }
}

impl ElimTree {
    fn is_repeat(&self, parent: usize, key: &str) -> bool {
        let mut cur = Some(parent);
        while let Some(v) = cur {
            if self.nodes[v].key == key {
                return true;
            }
            cur = self.nodes[v].parent;
        }
        false
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = &ElimEdge> {
        self.edges.iter().filter(move |e| e.from == v)
    }

    pub fn incoming(&self, v: usize) -> Option<&ElimEdge> {
        self.edges.iter().find(|e| e.to == v)
    }

    /// Case numbers along the path from the root to `v` (excluding `v`).
    pub fn path_cases(&self, v: usize) -> Vec<CaseId> {
        let mut out = Vec::new();
        let mut cur = self.nodes[v].parent;
        while let Some(u) = cur {
            out.push(self.nodes[u].case);
            cur = self.nodes[u].parent;
        }
        out.reverse();
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph elim {\n  node [shape=box];\n");
        for n in &self.nodes {
            let extra = match n.status {
                NodeStatus::Repeat => ", style=dashed, color=blue",
                NodeStatus::Case1Leaf | NodeStatus::Case1Unresolved | NodeStatus::Case2Leaf => ", style=rounded",
                NodeStatus::Budget | NodeStatus::Error => ", color=gray",
                NodeStatus::Expanded => "",
            };
            let _ = writeln!(s, "  v{} [label=\"v{}: case {}\\n{}\"{}];", n.id, n.id, n.case, status_name(n.status), extra);
        }
        for e in &self.edges {
            let style = if e.kind == EdgeKind::Auxiliary { " [style=dashed]" } else { "" };
            let _ = writeln!(s, "  v{} -> v{}{};", e.from, e.to, style);
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self, constants: &[String]) -> TreeJson {
        TreeJson {
            root: self.root,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    case: n.case.to_string(),
                    depth: n.depth,
                    hash: n.hash.clone(),
                    status: n.status,
                    parent: n.parent,
                    error: n.error.clone(),
                    equation: n.equation.to_json(constants),
                    measures: n.equation.measures(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    from: e.from,
                    to: e.to,
                    kind: e.kind,
                    verdict: e.verdict,
                    rule: e.rule.to_record(self.nodes[e.from].equation.rho, constants),
                })
                .collect(),
        }
    }
}

pub fn status_name(s: NodeStatus) -> &'static str {
    match s {
        NodeStatus::Expanded => "expanded",
        NodeStatus::Repeat => "repeat",
        NodeStatus::Case1Unresolved => "case1-unresolved",
        NodeStatus::Case1Leaf => "case1-leaf",
        NodeStatus::Case2Leaf => "case2-leaf",
        NodeStatus::Budget => "budget",
        NodeStatus::Error => "error",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeJson {
    pub root: usize,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub case: String,
    pub depth: usize,
    pub hash: String,
    pub status: NodeStatus,
    pub parent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub equation: crate::geq::GeJson,
    pub measures: Measures,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeJson {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<Verdict>,
    pub rule: RuleRecord,
}

/// Breadth-first construction of the elimination tree within `limits`.
pub fn build_tree(g: &GeneralizedEquation, limits: &Limits) -> ElimTree {
    let plan = classify(g, false);
    let key = g.repeat_key();
    let mut tree = ElimTree {
        nodes: vec![ElimNode {
            id: 0,
            equation: g.clone(),
            case: plan.case(),
            depth: 0,
            hash: stable_hash(&key),
            status: NodeStatus::Budget,
            parent: None,
            error: None,
            key,
            plan,
        }],
        edges: Vec::new(),
        root: 0,
    };
    let mut frontier = vec![0];
    tree.nodes[0].status = initial_status(&tree.nodes[0], limits, false);
    if tree.nodes[0].status != NodeStatus::Expanded {
        frontier.clear();
    }
    while !frontier.is_empty() {
        let results: Vec<(usize, Result<Vec<Prepared>>)> = frontier
            .par_iter()
            .map(|&v| {
                let n = &tree.nodes[v];
                let r = expand(&n.equation, &n.plan).map(|cs| {
                    let mut ps: Vec<Prepared> = cs.into_par_iter().map(|c| prepare(c, limits)).collect();
                    ps.sort_by(|a, b| (a.child.auxiliary, &a.canon).cmp(&(b.child.auxiliary, &b.canon)));
                    ps
                });
                (v, r)
            })
            .collect();
        let mut next = Vec::new();
        for (v, r) in results {
            match r {
                Err(e) => {
                    tree.nodes[v].status = NodeStatus::Error;
                    tree.nodes[v].error = Some(e.to_string());
                }
                Ok(children) => {
                    for p in children {
                        if tree.nodes.len() >= limits.nodes {
                            tree.nodes[v].status = NodeStatus::Budget;
                            break;
                        }
                        let id = tree.nodes.len();
                        let repeat = tree.is_repeat(v, &p.key);
                        let mut node = ElimNode {
                            id,
                            equation: p.child.geq,
                            case: p.plan.case(),
                            depth: tree.nodes[v].depth + 1,
                            hash: stable_hash(&p.key),
                            status: NodeStatus::Expanded,
                            parent: Some(v),
                            error: None,
                            key: p.key,
                            plan: p.plan,
                        };
                        node.status = if repeat { NodeStatus::Repeat } else { initial_status(&node, limits, false) };
                        if let (Some(Verdict::ConfirmedProper), NodeStatus::Case1Unresolved) = (p.verdict, node.status) {
                            node.status = NodeStatus::Case1Leaf;
                        }
                        if node.status == NodeStatus::Expanded {
                            next.push(id);
                        }
                        tree.nodes.push(node);
                        tree.edges.push(ElimEdge {
                            from: v,
                            to: id,
                            kind: if p.child.auxiliary { EdgeKind::Auxiliary } else { EdgeKind::Principal },
                            rule: p.child.rule,
                            verdict: p.verdict,
                        });
                    }
                }
            }
        }
        frontier = next;
    }
    tree
}

fn initial_status(n: &ElimNode, limits: &Limits, _repeat: bool) -> NodeStatus {
    match n.plan {
        Plan::Quotient => NodeStatus::Case1Unresolved,
        Plan::NoActive => NodeStatus::Case2Leaf,
        _ if n.depth >= limits.depth => NodeStatus::Budget,
        _ => NodeStatus::Expanded,
    }
}

// ---- monotonicity and branch types ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub from: usize,
    pub to: usize,
    pub case: u8,
    pub before: Measures,
    pub after: Measures,
    pub violations: Vec<String>,
}

/// Measures both ends of an edge and lists failed inequalities.
pub fn monotonicity_report(tree: &ElimTree, edge: &ElimEdge) -> MonotonicityReport {
    let u = &tree.nodes[edge.from];
    let v = &tree.nodes[edge.to];
    let (a, b) = (u.equation.measures(), v.equation.measures());
    let tp = u.case.case;
    let mut bad = Vec::new();
    match edge.kind {
        EdgeKind::Principal => {
            if tp != 3 && tp != 10 {
                if b.n_a > a.n_a {
                    bad.push(format!("n_A grew {} -> {}", a.n_a, b.n_a));
                }
                if matches!(tp, 6 | 7 | 9 | 13) && b.n_a >= a.n_a {
                    bad.push(format!("n_A did not drop ({} -> {})", a.n_a, b.n_a));
                }
            }
            if tp == 10 && b.n_a > a.n_a + 2 {
                bad.push(format!("n_A grew by more than 2: {} -> {}", a.n_a, b.n_a));
            }
            if tp <= 13 && tp != 3 && tp != 11 && b.nu_prime > a.nu_prime {
                bad.push(format!("nu' grew {} -> {}", a.nu_prime, b.nu_prime));
            }
            if tp != 3 && b.tau > a.tau {
                bad.push(format!("tau grew {} -> {}", a.tau, b.tau));
            }
        }
        EdgeKind::Auxiliary => {
            if b.tau >= a.tau {
                bad.push(format!("tau did not drop across auxiliary edge: {} -> {}", a.tau, b.tau));
            }
        }
    }
    MonotonicityReport { from: u.id, to: v.id, case: tp, before: a, after: b, violations: bad }
}

pub fn check_monotonicity(tree: &ElimTree, edge: &ElimEdge) -> Result<MonotonicityReport> {
    let r = monotonicity_report(tree, edge);
    if r.violations.is_empty() {
        Ok(r)
    } else {
        Err(Error::Violation(format!("edge v{} -> v{} (case {}): {}", r.from, r.to, r.case, r.violations.join("; "))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchType {
    Linear,
    Quadratic,
    GeneralJsj,
    Mixed,
}

/// Type of the tail of a path: the maximal suffix inside one of the
/// recurring case families.
pub fn branch_type(cases: &[u8]) -> BranchType {
    let recurring = |c: u8| matches!(c, 7..=10 | 12 | 13 | 14 | 15);
    let start = cases.iter().rposition(|&c| !recurring(c)).map_or(0, |k| k + 1);
    let tail = &cases[start..];
    if tail.is_empty() {
        return BranchType::Mixed;
    }
    if tail.iter().all(|c| (7..=10).contains(c)) {
        BranchType::Linear
    } else if tail.iter().all(|&c| c == 12) {
        BranchType::Quadratic
    } else if tail.iter().all(|c| (13..=15).contains(c)) && tail.last() == Some(&15) {
        BranchType::GeneralJsj
    } else {
        BranchType::Mixed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::Letter;

    #[test]
    fn no_active_sections() {
        let mut g = GeneralizedEquation::new(2);
        g.add_pair((1, 2, 1), (2, 3, 1));
        g.set_section_kind(1, 3, SectionKind::NonActive);
        let t = build_tree(&g, &Limits::default());
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].case.case, 2);
        assert_eq!(t.nodes[0].status, NodeStatus::Case2Leaf);
    }

    #[test]
    fn constant_in_open_section_is_case3() {
        let mut g = GeneralizedEquation::new(3);
        g.add_pair((1, 3, 1), (3, 4, 1));
        g.add_pair((3, 4, 1), (1, 3, 1));
        g.add_constant(2, Letter::c(0));
        assert_eq!(classify_case(&g, false).case, 3);
    }

    #[test]
    fn matched_pair_is_case6() {
        let mut g = GeneralizedEquation::new(2);
        g.add_pair((1, 3, 1), (1, 3, 1));
        g.add_pair((1, 2, 1), (2, 3, 1));
        assert_eq!(classify_case(&g, false).case, 6);
        let ch = expand(&g, &classify(&g, false)).unwrap();
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].geq.bases.len(), 2);
    }

    #[test]
    fn unsorted_sections_are_case0() {
        let mut g = GeneralizedEquation::new(2);
        g.add_pair((1, 2, 1), (1, 2, 1));
        g.add_pair((2, 3, 1), (2, 3, 1));
        g.set_section_kind(1, 2, SectionKind::Constant);
        assert_eq!(classify_case(&g, false).case, 0);
        let ch = expand(&g, &Plan::Sort).unwrap();
        assert_eq!(ch[0].geq.item_kinds, vec![SectionKind::Active, SectionKind::Constant]);
    }

    #[test]
    fn branch_types() {
        assert_eq!(branch_type(&[3, 4, 11, 12, 12, 12]), BranchType::Quadratic);
        assert_eq!(branch_type(&[0, 8, 7, 9, 10]), BranchType::Linear);
        assert_eq!(branch_type(&[5, 14, 15, 13, 15]), BranchType::GeneralJsj);
        assert_eq!(branch_type(&[12, 15]), BranchType::Mixed);
        assert_eq!(branch_type(&[11]), BranchType::Mixed);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(stable_hash(""), "cbf29ce484222325");
    }
}
