#![allow(dead_code)]

use fgeq::eqsys::{solution_to_table, EquationSystem, Traced};
use fgeq::geq::{eval_items, Connection, GeneralizedEquation};
use fgeq::oracle::{solve_geq_capped, Strategy};
use fgeq::transform::*;
use fgeq::word::{reduce, Word};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// `[x,y][b,a] = 1` with `x = babba`, `y = bab`.
pub fn commutator_example() -> (EquationSystem, Traced) {
    let s = EquationSystem::parse("constants: a b\n[x,y][b,a]").unwrap();
    let w = vec![s.alphabet.parse_word("babba").unwrap(), s.alphabet.parse_word("bab").unwrap()];
    let t = solution_to_table(&s, &w).unwrap();
    (s, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Move {
    Et1(Connection),
    Et2(usize, usize),
    Et3(usize),
    Et4(usize),
    Et5(usize, usize),
    D1(usize, usize),
    D2(usize, usize, usize),
    D3,
    D5,
    D6(usize, usize),
    Aux(usize),
}

impl Move {
    pub fn name(&self) -> &'static str {
        match self {
            Move::Et1(_) => "ET1",
            Move::Et2(..) => "ET2",
            Move::Et3(_) => "ET3",
            Move::Et4(_) => "ET4",
            Move::Et5(..) => "ET5",
            Move::D1(..) => "D1",
            Move::D2(..) => "D2",
            Move::D3 => "D3",
            Move::D5 => "D5",
            Move::D6(..) => "D6",
            Move::Aux(_) => "AUX",
        }
    }

    /// Moves whose rule is a bijection of solution sets.
    pub fn is_bijective(&self) -> bool {
        matches!(self, Move::Et1(_) | Move::Et2(..) | Move::Et3(_) | Move::Et4(_) | Move::D2(..) | Move::D3 | Move::D6(..))
    }
}

pub fn candidates(g: &GeneralizedEquation) -> Vec<Move> {
    let mut out: Vec<Move> = g.connections.iter().map(|&c| Move::Et1(c)).collect();
    let vars: Vec<_> = g.variable_bases().cloned().collect();
    for m in &vars {
        for l in &vars {
            if m.id != l.id && m.dual != Some(l.id) && l.alpha <= m.alpha && m.beta <= l.beta {
                out.push(Move::Et2(m.id, l.id));
            }
        }
        let d = g.dual(m.id);
        if (m.alpha, m.beta) == (d.alpha, d.beta) {
            out.push(Move::Et3(m.id));
        }
        out.push(Move::Et4(m.id));
        out.push(Move::Aux(m.id));
        for p in m.alpha + 1..m.beta {
            if g.tie_image(p, m.id).is_none() {
                out.push(Move::Et5(p, m.id));
            }
        }
    }
    for s in 1..=g.rho {
        for e in s + 1..=g.rho + 1 {
            out.push(Move::D1(s, e));
        }
    }
    let secs = g.sections();
    for s in &secs {
        for t in 0..secs.len() {
            out.push(Move::D2(s.start, s.end, t));
        }
    }
    if !g.connections.is_empty() {
        out.push(Move::D3);
    }
    out.push(Move::D5);
    let consts: Vec<_> = g.constant_bases().cloned().collect();
    for a in &consts {
        for b in &consts {
            if a.id != b.id && a.alpha != b.alpha && a.label().unwrap().positive() == b.label().unwrap().positive() {
                out.push(Move::D6(a.id, b.id));
            }
        }
    }
    out
}

/// All outcomes of a move, or `None` when its preconditions fail.
pub fn apply<R: Rng>(g: &GeneralizedEquation, m: Move, rng: &mut R) -> Option<Vec<(GeneralizedEquation, TransportRule)>> {
    let one = |r: fgeq::Result<(GeneralizedEquation, TransportRule)>| r.ok().map(|x| vec![x]);
    match m {
        Move::Et1(c) => one(et1_cut(g, c)),
        Move::Et2(mu, l) => one(et2_transfer(g, mu, l)),
        Move::Et3(l) => one(et3_remove_matched(g, l)),
        Move::Et4(l) => one(et4_remove_lonely(g, l)),
        Move::Et5(p, l) => et5_introduce_boundary(g, p, l).ok().map(|v| v.into_iter().map(|o| (o.geq, o.rule)).collect()),
        Move::D1(s, e) => d1_close_section(g, s, e).ok(),
        Move::D2(s, e, t) => one(d2_transport(g, s, e, t)),
        Move::D3 => one(d3_complete_cut(g, Some(rng))),
        Move::D5 => d5_entire_all(g, None).ok().map(|v| v.into_iter().map(|o| (o.geq, o.rule)).collect()),
        Move::D6(a, b) => one(d6_identify_constants(g, a, b)),
        Move::Aux(mu) => auxiliary_equation(g, mu).ok().map(|(o, r, _)| vec![(o, r)]),
    }
}

/// Picks a random applicable move.
pub fn random_move<R: Rng>(g: &GeneralizedEquation, rng: &mut R) -> Option<(Move, Vec<(GeneralizedEquation, TransportRule)>)> {
    // uniform over move kinds first, so that cheap-to-list kinds do not dominate
    let mut kinds: BTreeMap<&str, Vec<Move>> = BTreeMap::new();
    for m in candidates(g) {
        kinds.entry(m.name()).or_default().push(m);
    }
    let mut kinds: Vec<Vec<Move>> = kinds.into_values().collect();
    kinds.shuffle(rng);
    for mut ms in kinds {
        ms.shuffle(rng);
        for m in ms {
            if let Some(v) = apply(g, m, rng).filter(|v| !v.is_empty()) {
                return Some((m, v));
            }
        }
    }
    None
}

/// Forward transport of `u` through the outcomes of `m`.
pub fn check_transport(m: Move, outcomes: &[(GeneralizedEquation, TransportRule)], u: &[Word]) -> Result<(), String> {
    let mut hits = 0;
    for (o, r) in outcomes {
        if let Some(v) = r.forward(u) {
            if !o.is_solution(&v) {
                return Err(format!("{}: forward image is not a solution", m.name()));
            }
            if r.kind() != TransportKind::Quotient && r.backward(&v) != u {
                return Err(format!("{}: backward does not invert forward", m.name()));
            }
            hits += 1;
        }
    }
    match (m, hits) {
        (_, 0) => Err(format!("{:?}: no outcome accepts the solution", m)),
        (Move::Et5(..), n) if n > 1 => Err(format!("{:?}: {n} variants accept one solution", m)),
        _ => Ok(()),
    }
}

/// Every equation holds after free reduction (items may be unreduced or empty).
pub fn solves_in_group(g: &GeneralizedEquation, u: &[Word]) -> bool {
    u.len() == g.rho
        && g.derive_equations().iter().all(|e| {
            reduce(&eval_items(&e.lhs, u)) == reduce(&eval_items(&e.rhs, u))
        })
}

/// Transport on the solutions with items of length at most 2 on both sides:
/// forward is injective with `backward` as left inverse, and every target
/// solution pulls back to a solution in the group sense, which is a genuine
/// solution mapping forward to itself whenever it is reduced as written.
pub fn check_bijection(g: &GeneralizedEquation, o: &GeneralizedEquation, r: &TransportRule, cap: usize) -> Result<usize, String> {
    let src = solve_geq_capped(g, 2, 2, Strategy::Propagate, cap).map_err(|e| e.to_string())?;
    let dst = solve_geq_capped(o, 2, 2, Strategy::Propagate, cap).map_err(|e| e.to_string())?;
    let mut images = std::collections::BTreeSet::new();
    for u in &src {
        let v = r.forward(u).ok_or("forward failed on a bounded solution")?;
        if !o.is_solution(&v) || r.backward(&v) != *u {
            return Err("forward/backward mismatch on the source side".into());
        }
        if !images.insert(v) {
            return Err("forward is not injective".into());
        }
    }
    for v in &dst {
        let u = r.backward(v);
        if !solves_in_group(g, &u) {
            return Err("backward image fails an equation in the group".into());
        }
        if g.is_solution(&u) && r.forward(&u).as_ref() != Some(v) {
            return Err("forward does not invert backward".into());
        }
    }
    Ok(src.len() + dst.len())
}
