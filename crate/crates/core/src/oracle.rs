//! Brute-force ground truth for systems and generalized equations.

use rayon::prelude::*;

use std::collections::BTreeSet;

use crate::eqsys::{generalized_equations, solution_to_table, EquationSystem, TableOptions};
use crate::error::{Error, Result};
use crate::geq::{GeneralizedEquation, GeEquation};
use crate::word::{reduced_words, shortlex, Kind, Letter, Word};

/// Hard limits that keep enumeration at desk scale.
pub const MAX_CONSTANTS: usize = 4;
pub const MAX_VARIABLES: usize = 3;
pub const MAX_LEN: usize = 4;
/// Upper bound on the raw search space of [`solve_system`].
pub const MAX_ASSIGNMENTS: u128 = 50_000_000;
pub const MAX_ITEMS: usize = 16;

fn generators(n: usize) -> Vec<Letter> {
    (0..n as u16).map(Letter::c).collect()
}

/// All assignments with `|W_x| ≤ max_len` (empty words included) solving `s`,
/// ordered by shortlex on the value tuple.
pub fn solve_system(s: &EquationSystem, max_len: usize) -> Result<Vec<Vec<Word>>> {
    let nc = s.alphabet.constants.len();
    let nv = s.num_variables();
    if nc > MAX_CONSTANTS || nv > MAX_VARIABLES || max_len > MAX_LEN {
        return Err(Error::TooLarge(format!("|A|={nc}, |X|={nv}, max_len={max_len}")));
    }
    let values = reduced_words(&generators(nc), 0, max_len);
    let total = (values.len() as u128).pow(nv as u32);
    if total > MAX_ASSIGNMENTS {
        return Err(Error::TooLarge(format!("{total} assignments")));
    }
    let n = values.len();
    let mut out: Vec<Vec<Word>> = (0..total as usize)
        .into_par_iter()
        .filter_map(|mut k| {
            let mut w = Vec::with_capacity(nv);
            for _ in 0..nv {
                w.push(values[k % n].clone());
                k /= n;
            }
            s.is_solution(&w).then_some(w)
        })
        .collect();
    out.sort_by(|a, b| cmp_tuple(a, b));
    Ok(out)
}

/// [`solve_system`] restricted to assignments with every occurring variable nontrivial.
pub fn solve_system_nonempty(s: &EquationSystem, max_len: usize) -> Result<Vec<Vec<Word>>> {
    let occ = s.occurring_variables();
    Ok(solve_system(s, max_len)?
        .into_iter()
        .filter(|w| occ.iter().all(|&x| !w[x as usize].is_empty()))
        .collect())
}

pub fn cmp_tuple(a: &[Word], b: &[Word]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = shortlex(x, y);
        if c.is_ne() {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Items assigned left to right, pruning on partially evaluated equations.
    Propagate,
    /// Every assignment checked with `check_solution`.
    Exhaustive,
}

/// Signed item occurrences of one side of an equation, or a constant letter.
#[derive(Clone, Debug)]
enum Side {
    Items(Vec<(usize, bool)>),
    Const(Letter),
}

struct Compiled {
    eqs: Vec<(Side, Side)>,
    by_item: Vec<Vec<usize>>,
}

fn side_of(w: &Word) -> Side {
    if w.len() == 1 && w.letters()[0].kind == Kind::Constant {
        return Side::Const(w.letters()[0]);
    }
    Side::Items(w.letters().iter().map(|l| (l.sym as usize, l.neg)).collect())
}

fn compile(g: &GeneralizedEquation) -> Compiled {
    let eqs: Vec<(Side, Side)> =
        g.derive_equations().iter().map(|e: &GeEquation| (side_of(&e.lhs), side_of(&e.rhs))).collect();
    let mut by_item = vec![Vec::new(); g.rho + 1];
    for (k, (l, r)) in eqs.iter().enumerate() {
        for s in [l, r] {
            if let Side::Items(v) = s {
                for &(i, _) in v {
                    if by_item[i].last() != Some(&k) {
                        by_item[i].push(k);
                    }
                }
            }
        }
    }
    Compiled { eqs, by_item }
}

/// Letters of a side up to the first unassigned item; `true` when complete.
fn prefix(side: &Side, u: &[Option<Word>], out: &mut Vec<Letter>) -> bool {
    out.clear();
    match side {
        Side::Const(l) => {
            out.push(*l);
            true
        }
        Side::Items(v) => {
            for &(i, neg) in v {
                match &u[i - 1] {
                    None => return false,
                    Some(w) => {
                        if neg {
                            out.extend(w.letters().iter().rev().map(|l| l.inv()));
                        } else {
                            out.extend_from_slice(w.letters());
                        }
                    }
                }
            }
            true
        }
    }
}

fn reduced(v: &[Letter]) -> bool {
    v.windows(2).all(|p| !p[0].is_inverse_of(p[1]))
}

fn consistent(c: &Compiled, k: usize, u: &[Option<Word>], a: &mut Vec<Letter>, b: &mut Vec<Letter>) -> bool {
    let (l, r) = &c.eqs[k];
    let fl = prefix(l, u, a);
    let fr = prefix(r, u, b);
    if !reduced(a) || !reduced(b) {
        return false;
    }
    let m = a.len().min(b.len());
    if a[..m] != b[..m] {
        return false;
    }
    match (fl, fr) {
        (true, true) => a.len() == b.len(),
        (true, false) => a.len() >= b.len(),
        (false, true) => b.len() >= a.len(),
        (false, false) => true,
    }
}

/// All solutions of `g` with items over `constants` letters and lengths in `[1, max_len]`.
pub fn solve_geq(g: &GeneralizedEquation, constants: usize, max_len: usize, strategy: Strategy) -> Result<Vec<Vec<Word>>> {
    solve_geq_capped(g, constants, max_len, strategy, usize::MAX)
}

/// Like [`solve_geq`] but stops after `cap` solutions (order preserved).
pub fn solve_geq_capped(
    g: &GeneralizedEquation,
    constants: usize,
    max_len: usize,
    strategy: Strategy,
    cap: usize,
) -> Result<Vec<Vec<Word>>> {
    if constants > MAX_CONSTANTS || max_len > MAX_LEN || g.rho > MAX_ITEMS {
        return Err(Error::TooLarge(format!("|A|={constants}, max_len={max_len}, rho={}", g.rho)));
    }
    if g.rho == 0 {
        return Ok(vec![Vec::new()]);
    }
    let values = reduced_words(&generators(constants), 1, max_len);
    let mut out = match strategy {
        Strategy::Propagate => propagate(g, &values, cap),
        Strategy::Exhaustive => {
            let total = (values.len() as u128).pow(g.rho as u32);
            if total > MAX_ASSIGNMENTS {
                return Err(Error::TooLarge(format!("{total} assignments")));
            }
            let n = values.len();
            let mut v: Vec<Vec<Word>> = (0..total as usize)
                .into_par_iter()
                .filter_map(|mut k| {
                    let mut u = Vec::with_capacity(g.rho);
                    for _ in 0..g.rho {
                        u.push(values[k % n].clone());
                        k /= n;
                    }
                    g.is_solution(&u).then_some(u)
                })
                .collect();
            v.sort_by(|a, b| cmp_tuple(a, b));
            v.truncate(cap);
            v
        }
    };
    out.sort_by(|a, b| cmp_tuple(a, b));
    out.truncate(cap);
    Ok(out)
}

fn propagate(g: &GeneralizedEquation, values: &[Word], cap: usize) -> Vec<Vec<Word>> {
    let c = compile(g);
    // constant items are pinned by their coefficient equations
    let mut fixed: Vec<Option<Word>> = vec![None; g.rho];
    for b in g.constant_bases() {
        let l = b.label().expect("constant");
        match &fixed[b.alpha - 1] {
            Some(w) if *w != Word::letter(l) => return Vec::new(),
            _ => fixed[b.alpha - 1] = Some(Word::letter(l)),
        }
    }
    let first: Vec<Word> = match &fixed[0] {
        Some(w) => vec![w.clone()],
        None => values.to_vec(),
    };
    let mut shards: Vec<Vec<Vec<Word>>> = first
        .par_iter()
        .map(|w0| {
            let mut u = fixed.clone();
            u[0] = Some(w0.clone());
            let mut out = Vec::new();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            if c.by_item[1].iter().all(|&k| consistent(&c, k, &u, &mut a, &mut b)) {
                search(&c, &fixed, values, 2, &mut u, &mut out, cap, &mut a, &mut b);
            }
            out
        })
        .collect();
    let mut out = Vec::new();
    for s in shards.iter_mut() {
        out.append(s);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn search(
    c: &Compiled,
    fixed: &[Option<Word>],
    values: &[Word],
    i: usize,
    u: &mut Vec<Option<Word>>,
    out: &mut Vec<Vec<Word>>,
    cap: usize,
    a: &mut Vec<Letter>,
    b: &mut Vec<Letter>,
) {
    if out.len() >= cap {
        return;
    }
    if i > u.len() {
        out.push(u.iter().map(|w| w.clone().expect("assigned")).collect());
        return;
    }
    let choices: &[Word] = match &fixed[i - 1] {
        Some(w) => std::slice::from_ref(w),
        None => values,
    };
    for w in choices {
        u[i - 1] = Some(w.clone());
        if c.by_item[i].iter().all(|&k| consistent(c, k, u, a, b)) {
            search(c, fixed, values, i + 1, u, out, cap, a, b);
        }
    }
    u[i - 1] = fixed[i - 1].clone();
}

/// Outcome of a bounded search for a solution with some property.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Search {
    Found(Vec<Word>),
    /// Every assignment within the length bound was examined.
    Exhausted,
    /// The step budget ran out first.
    OutOfBudget,
}

/// Sequential depth-first search for a solution of `g` satisfying `pred`,
/// visiting at most `budget` partial assignments.
pub fn find_solution_where(
    g: &GeneralizedEquation,
    constants: usize,
    max_len: usize,
    budget: usize,
    pred: impl Fn(&[Word]) -> bool,
) -> Result<Search> {
    if constants > MAX_CONSTANTS || max_len > MAX_LEN || g.rho > MAX_ITEMS {
        return Err(Error::TooLarge(format!("|A|={constants}, max_len={max_len}, rho={}", g.rho)));
    }
    let values = reduced_words(&generators(constants), 1, max_len);
    let c = compile(g);
    let mut fixed: Vec<Option<Word>> = vec![None; g.rho];
    for b in g.constant_bases() {
        let l = b.label().expect("constant");
        match &fixed[b.alpha - 1] {
            Some(w) if *w != Word::letter(l) => return Ok(Search::Exhausted),
            _ => fixed[b.alpha - 1] = Some(Word::letter(l)),
        }
    }
    let mut st = FirstSearch { c: &c, fixed: &fixed, values: &values, steps: budget, pred: &pred };
    let mut u = fixed.clone();
    Ok(match st.run(1, &mut u) {
        Some(w) => Search::Found(w),
        None if st.steps == 0 => Search::OutOfBudget,
        None => Search::Exhausted,
    })
}

struct FirstSearch<'a, P: Fn(&[Word]) -> bool> {
    c: &'a Compiled,
    fixed: &'a [Option<Word>],
    values: &'a [Word],
    steps: usize,
    pred: &'a P,
}

impl<P: Fn(&[Word]) -> bool> FirstSearch<'_, P> {
    fn run(&mut self, i: usize, u: &mut Vec<Option<Word>>) -> Option<Vec<Word>> {
        if i > u.len() {
            let w: Vec<Word> = u.iter().map(|w| w.clone().expect("assigned")).collect();
            return (self.pred)(&w).then_some(w);
        }
        let choices: Vec<Word> = match &self.fixed[i - 1] {
            Some(w) => vec![w.clone()],
            None => self.values.to_vec(),
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for w in choices {
            if self.steps == 0 {
                break;
            }
            self.steps -= 1;
            u[i - 1] = Some(w);
            if self.c.by_item[i].iter().all(|&k| consistent(self.c, k, u, &mut a, &mut b)) {
                if let Some(found) = self.run(i + 1, u) {
                    return Some(found);
                }
            }
        }
        u[i - 1] = self.fixed[i - 1].clone();
        None
    }
}

/// Looks for a solution of `g` (items ≤ `max_len`) violating the item-word
/// equation `extra`.
pub fn find_violation(
    g: &GeneralizedEquation,
    constants: usize,
    max_len: usize,
    budget: usize,
    extra: &(Word, Word),
) -> Result<Search> {
    find_solution_where(g, constants, max_len, budget, |u| {
        crate::word::reduce(&crate::geq::eval_items(&extra.0, u)) != crate::word::reduce(&crate::geq::eval_items(&extra.1, u))
    })
}

/// Tallies of a two-way check between `Sol(S)` and the solutions of `GE(S)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct RoundTrip {
    /// Oracle solutions with every value of length at most `value_len`.
    pub solutions: usize,
    /// Solutions with a trivial occurring variable, checked on the quotient system.
    pub degenerate: usize,
    /// `None` when `PT(S)` exceeded the table budget and the reverse pass was skipped.
    pub members: Option<usize>,
    /// Member solutions (items up to `item_len`) pushed back through `P`.
    pub member_solutions: usize,
    pub failures: Vec<String>,
}

impl RoundTrip {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RoundTripOptions {
    pub value_len: usize,
    pub item_len: usize,
    /// Solutions checked per member.
    pub per_member: usize,
    /// Reverse pass only runs when `|PT(S)|` stays within this.
    pub table_budget: usize,
}

impl Default for RoundTripOptions {
    fn default() -> Self {
        RoundTripOptions { value_len: 3, item_len: 2, per_member: 8, table_budget: 2_000 }
    }
}

/// Forward: each short solution `W` is traced to a table `T`, which must satisfy
/// the table conditions (so `Ω_T ∈ GE(S)`), with `U` solving `Ω_T` and
/// `W = P(U)` graphically. Reverse: short solutions of each member map into `Sol(S)`.
pub fn round_trip(s: &EquationSystem, o: RoundTripOptions) -> Result<RoundTrip> {
    let nv = s.num_variables();
    let nc = s.alphabet.constants.len();
    let mut rt = RoundTrip::default();
    let occ = s.occurring_variables();
    let fmt = |w: &[Word]| w.iter().map(|v| s.alphabet.format(v)).collect::<Vec<_>>().join(", ");
    for w in solve_system(s, o.value_len)? {
        rt.solutions += 1;
        let killed: BTreeSet<u16> = occ.iter().copied().filter(|&x| w[x as usize].is_empty()).collect();
        if !killed.is_empty() {
            rt.degenerate += 1;
        }
        let q = s.without_variables(&killed);
        if q.equations.is_empty() {
            continue;
        }
        let t = match solution_to_table(&q, &w) {
            Ok(t) => t,
            Err(e) => {
                rt.failures.push(format!("({}) not traced: {e}", fmt(&w)));
                continue;
            }
        };
        let back: Vec<Word> = t
            .built
            .apply_graphical(&t.solution, nv)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.unwrap_or_else(|| w[i].clone()))
            .collect();
        if let Err(e) = t.table.check(&q) {
            rt.failures.push(format!("({}) traced table invalid: {e}", fmt(&w)));
        } else if !t.table.variable_entries_nonempty(&q) || !t.built.geq.is_solution(&t.solution) || back != w {
            rt.failures.push(format!("({}) not realized", fmt(&w)));
        }
    }
    let opts = TableOptions { cap: o.table_budget, ..TableOptions::default() };
    let members = match generalized_equations(s, opts) {
        Ok(m) => m,
        Err(Error::BudgetExceeded { .. }) => return Ok(rt),
        Err(e) => return Err(e),
    };
    rt.members = Some(members.len());
    for (k, m) in members.iter().enumerate() {
        for u in solve_geq_capped(&m.built.geq, nc, o.item_len, Strategy::Propagate, o.per_member)? {
            rt.member_solutions += 1;
            let w: Vec<Word> = m.built.apply(&u, nv).into_iter().map(|v| v.unwrap_or_default()).collect();
            if !s.is_solution(&w) {
                rt.failures.push(format!("member {} maps ({}) outside Sol(S)", k + 1, fmt(&w)));
            }
        }
    }
    Ok(rt)
}

/// Letter codes for [`small_systems`]: `x X y Y a A b B`.
const SMALL: [&str; 8] = ["x", "x^-1", "y", "y^-1", "a", "a^-1", "b", "b^-1"];

/// Images of a letter code under one of the 64 relabellings (signed permutations
/// of `{x, y}` times signed permutations of `{a, b}`).
fn relabel(code: u8, t: u8) -> u8 {
    let (group, sym, neg) = (code / 4, (code / 2) % 2, code % 2);
    let bits = if group == 0 { t & 7 } else { t >> 3 };
    let sym = sym ^ (bits & 1);
    let neg = neg ^ ((bits >> (1 + sym)) & 1);
    group * 4 + sym * 2 + neg
}

fn small_words(max_len: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::new();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for c in 0..8u8 {
                if w.last().is_some_and(|&l| l ^ 1 == c) {
                    continue;
                }
                let mut v = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Systems over `F(a, b)` in at most the variables `x, y` with total letter count
/// at most `max_letters`, every equation a nonempty reduced word and no equation
/// repeated. One representative per orbit of relabellings and equation order.
pub fn small_systems(max_letters: usize) -> Vec<EquationSystem> {
    let words = small_words(max_letters);
    let key = |sys: &[&Vec<u8>], t: u8| {
        let mut v: Vec<Vec<u8>> = sys.iter().map(|w| w.iter().map(|&c| relabel(c, t)).collect()).collect();
        v.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        v
    };
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn walk(
        words: &[Vec<u8>],
        from: usize,
        budget: usize,
        stack: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        for i in from..words.len() {
            if words[i].len() > budget {
                break;
            }
            stack.push(i);
            visit(stack);
            walk(words, i + 1, budget - words[i].len(), stack, visit);
            stack.pop();
        }
    }
    let mut visit = |idx: &[usize]| {
        let sys: Vec<&Vec<u8>> = idx.iter().map(|&i| &words[i]).collect();
        let own = key(&sys, 0);
        if (1..64).all(|t| key(&sys, t) >= own) {
            out.push(own);
        }
    };
    walk(&words, 0, max_letters, &mut stack, &mut visit);
    out.into_iter()
        .map(|eqs| {
            let ys = eqs.iter().flatten().any(|&c| c / 2 == 1);
            let mut text = String::from("constants: a b\nvariables: x");
            if ys {
                text.push_str(" y");
            }
            for e in &eqs {
                text.push('\n');
                text.push_str(&e.iter().map(|&c| SMALL[c as usize]).collect::<Vec<_>>().join(" "));
            }
            EquationSystem::parse(&text).expect("generated system parses")
        })
        .collect()
}

/// Shape of the equations produced by [`random_solved_geq`].
#[derive(Clone, Copy, Debug)]
pub struct FuzzShape {
    pub min_items: usize,
    pub max_items: usize,
    pub max_pairs: usize,
    pub connections: bool,
    pub constants: bool,
}

impl Default for FuzzShape {
    fn default() -> Self {
        FuzzShape { min_items: 3, max_items: 7, max_pairs: 4, connections: true, constants: true }
    }
}

/// A random formally consistent equation over `F(a, b)` with a solution whose
/// items have length at most 2. Bases are laid on graphically equal (or mutually
/// inverse) intervals of a random reduced word.
pub fn random_solved_geq<R: rand::Rng>(rng: &mut R, shape: FuzzShape) -> (GeneralizedEquation, Vec<Word>) {
    let gens = generators(2);
    loop {
        let rho = rng.gen_range(shape.min_items..=shape.max_items);
        // low-entropy reduced word so that equal intervals are common
        let total = rng.gen_range(rho..=2 * rho);
        let mut letters: Vec<Letter> = Vec::with_capacity(total);
        while letters.len() < total {
            let l = match letters.last() {
                Some(&p) if rng.gen_bool(0.4) => p,
                _ => gens[rng.gen_range(0..2)].with_sign(if rng.gen_bool(0.5) { 1 } else { -1 }),
            };
            if letters.last().is_some_and(|&p| p.is_inverse_of(l)) {
                continue;
            }
            letters.push(l);
        }
        // cut into rho pieces of length 1 or 2
        let mut lens = vec![1usize; rho];
        let mut extra = total - rho;
        while extra > 0 {
            let k = rng.gen_range(0..rho);
            if lens[k] < 2 {
                lens[k] += 1;
                extra -= 1;
            }
        }
        let mut u = Vec::with_capacity(rho);
        let mut at = 0;
        for &n in &lens {
            u.push(Word(letters[at..at + n].to_vec()));
            at += n;
        }
        let value = |a: usize, b: usize| crate::geq::eval_items(&crate::geq::item_range(a, b), &u);
        let intervals: Vec<(usize, usize)> =
            (1..=rho).flat_map(|a| (a + 1..=(a + 3).min(rho + 1)).map(move |b| (a, b))).collect();
        let mut g = GeneralizedEquation::new(rho);
        let pairs = rng.gen_range(1..=shape.max_pairs);
        for _ in 0..pairs * 8 {
            if g.variable_bases().count() >= 2 * pairs {
                break;
            }
            let (a, b) = intervals[rng.gen_range(0..intervals.len())];
            let v = value(a, b);
            let partners: Vec<(usize, usize, i8)> = intervals
                .iter()
                .filter_map(|&(c, d)| {
                    let w = value(c, d);
                    if w == v && ((c, d) != (a, b) || rng.gen_bool(0.1)) {
                        Some((c, d, 1))
                    } else if w == v.inverse() && (c >= b || d <= a) {
                        Some((c, d, -1))
                    } else {
                        None
                    }
                })
                .collect();
            if partners.is_empty() {
                continue;
            }
            let (c, d, s) = partners[rng.gen_range(0..partners.len())];
            let e = if rng.gen_bool(0.5) { 1 } else { -1 };
            let (id, dual) = g.add_pair((a, b, e), (c, d, e * s));
            if shape.connections {
                for p in a + 1..b {
                    let pre = value(a, p);
                    let qs: Vec<usize> = (c + 1..d)
                        .filter(|&q| if s == 1 { value(c, q) == pre } else { value(q, d).inverse() == pre })
                        .collect();
                    if let Some(&q) = qs.first() {
                        if rng.gen_bool(0.6) {
                            g.connect(p, id, q);
                        }
                    }
                }
            }
            let _ = dual;
        }
        if g.variable_bases().count() == 0 {
            continue;
        }
        if shape.constants {
            for (i, w) in u.iter().enumerate() {
                if w.len() == 1 && rng.gen_bool(0.3) {
                    g.add_constant(i + 1, w.letters()[0]);
                }
            }
        }
        if g.validate().is_ok() && g.is_formally_consistent() && g.is_solution(&u) {
            return (g, u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eqsys::{table_to_geq, PartitionTable};

    fn sys(t: &str) -> EquationSystem {
        EquationSystem::parse(t).unwrap()
    }

    #[test]
    fn xyz_over_a() {
        let s = sys("constants: a\nx*y*z");
        let all = solve_system(&s, 1).unwrap();
        // independent nested loops
        let vals = reduced_words(&[Letter::c(0)], 0, 1);
        let mut n = 0;
        for x in &vals {
            for y in &vals {
                for z in &vals {
                    if x.mul(y).mul(z).is_empty() {
                        n += 1;
                    }
                }
            }
        }
        assert_eq!(all.len(), n);
        let a = Word::letter(Letter::c(0));
        assert!(all.contains(&vec![a.clone(), a.inverse(), Word::empty()]));
        let ne = solve_system_nonempty(&s, 1).unwrap();
        assert!(ne.iter().all(|w| w.iter().all(|v| !v.is_empty())));
        assert!(!ne.contains(&vec![a.clone(), a.inverse(), Word::empty()]));
    }

    #[test]
    fn commuting_powers() {
        let s = sys("constants: a\n[x,y]");
        let all = solve_system(&s, 2).unwrap();
        assert_eq!(all.len(), 25);
    }

    #[test]
    fn unsatisfiable() {
        let s = sys("x a X b");
        assert!(solve_system(&s, 3).unwrap().is_empty());
    }

    #[test]
    fn guard_rails() {
        let s = sys("x y z x1");
        assert!(matches!(solve_system(&s, 2), Err(Error::TooLarge(_))));
    }

    #[test]
    fn three_pair_strategies_agree() {
        let s = sys("constants: a b\nx*y*z");
        let z = |i: u16| Letter::v(i);
        let t = PartitionTable {
            entries: vec![vec![
                Word(vec![z(0), z(1)]),
                Word(vec![z(1).inv(), z(2)]),
                Word(vec![z(2).inv(), z(0).inv()]),
            ]],
            z_count: 3,
        };
        let built = table_to_geq(&s, &t).unwrap();
        let p = solve_geq(&built.geq, 2, 2, Strategy::Propagate).unwrap();
        assert!(!p.is_empty());
        let p1 = solve_geq(&built.geq, 2, 1, Strategy::Propagate).unwrap();
        let e1 = solve_geq(&built.geq, 2, 1, Strategy::Exhaustive).unwrap();
        assert!(!p1.is_empty());
        assert_eq!(p1, e1);
        for u in &p {
            let w: Vec<Word> = built.apply(u, 3).into_iter().map(|x| x.unwrap()).collect();
            assert!(s.is_solution(&w));
        }
    }

    #[test]
    fn contradictory_constants() {
        let mut g = GeneralizedEquation::new(2);
        g.add_pair((1, 2, 1), (2, 3, 1));
        g.add_constant(1, Letter::c(0));
        g.add_constant(2, Letter::c(1));
        assert!(solve_geq(&g, 2, 2, Strategy::Propagate).unwrap().is_empty());
    }

    #[test]
    fn violations() {
        let mut g = GeneralizedEquation::new(3);
        g.add_pair((1, 2, 1), (3, 4, 1));
        let h = |i| Word::letter(crate::geq::item(i));
        assert!(matches!(find_violation(&g, 2, 2, 10_000, &(h(1), h(3))).unwrap(), Search::Exhausted));
        assert!(matches!(find_violation(&g, 2, 2, 10_000, &(h(1), h(2))).unwrap(), Search::Found(_)));
        assert_eq!(find_violation(&g, 2, 2, 1, &(h(1), h(3))).unwrap(), Search::OutOfBudget);
    }

    fn codes(s: &EquationSystem) -> Vec<Vec<u8>> {
        s.equations
            .iter()
            .map(|e| {
                e.letters()
                    .iter()
                    .map(|l| (u8::from(l.kind == Kind::Constant) * 4) + l.sym as u8 * 2 + u8::from(l.neg))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn relabellings_form_a_group() {
        let perms: BTreeSet<Vec<u8>> = (0..64).map(|t| (0..8).map(|c| relabel(c, t)).collect()).collect();
        assert_eq!(perms.len(), 64);
        for p in &perms {
            // inverse pairs stay paired, kinds stay put
            assert!((0..8).all(|c: u8| p[(c ^ 1) as usize] == p[c as usize] ^ 1 && p[c as usize] / 4 == c / 4));
            for q in &perms {
                let pq: Vec<u8> = (0..8).map(|c| p[q[c] as usize]).collect();
                assert!(perms.contains(&pq));
            }
        }
    }

    #[test]
    fn small_system_orbits_cover_everything() {
        // 456 single words, 28 + 448 two-equation and 56 three-equation systems
        let raw = 988;
        let mut total = 0;
        let mut seen = BTreeSet::new();
        for s in small_systems(3) {
            let c = codes(&s);
            let orbit: BTreeSet<Vec<Vec<u8>>> = (0..64)
                .map(|t| {
                    let mut v: Vec<Vec<u8>> = c.iter().map(|w| w.iter().map(|&x| relabel(x, t)).collect()).collect();
                    v.sort();
                    v
                })
                .collect();
            for o in &orbit {
                assert!(seen.insert(o.clone()), "orbits overlap");
            }
            total += orbit.len();
        }
        assert_eq!(total, raw);
    }

    #[test]
    fn round_trips() {
        for t in ["constants: a b\nx y", "constants: a b\nx a x^-1 a^-1", "constants: a b\nx y x^-1", "constants: a b\nx y\nx a"] {
            let r = round_trip(&sys(t), RoundTripOptions::default()).unwrap();
            assert!(r.ok(), "{t}: {:?}", r.failures);
            assert!(r.solutions > 0 && r.members.is_some());
        }
        let r = round_trip(&sys("constants: a b\nx y x y"), RoundTripOptions::default()).unwrap();
        assert_eq!(r.members, None);
        // trivial x quotients out to y = 1
        let r = round_trip(&sys("constants: a b\nx y"), RoundTripOptions::default()).unwrap();
        assert_eq!(r.degenerate, 1);
    }

    #[test]
    fn fuzzed_equations_are_solved() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut with_conn = 0;
        for _ in 0..300 {
            let (g, u) = random_solved_geq(&mut rng, FuzzShape::default());
            assert!(g.is_solution(&u) && g.is_formally_consistent());
            assert!(u.iter().all(|w| (1..=2).contains(&w.len())));
            with_conn += usize::from(!g.connections.is_empty());
        }
        assert!(with_conn > 30, "{with_conn}");
        let shape = FuzzShape { connections: false, ..FuzzShape::default() };
        for _ in 0..50 {
            assert!(random_solved_geq(&mut rng, shape).0.connections.is_empty());
        }
    }
}
