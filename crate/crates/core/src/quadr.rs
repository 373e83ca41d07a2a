//! Quadratic and standard quadratic equations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eqsys::EquationSystem;
use crate::error::{Error, Result};
use crate::word::{reduce, Kind, Letter, Word};

/// Occurrences of each variable (either sign) across the reduced equations.
pub fn occurrence_counts(s: &EquationSystem) -> BTreeMap<u16, usize> {
    let mut m = BTreeMap::new();
    for e in &s.equations {
        for l in reduce(e).letters() {
            if l.kind == Kind::Variable {
                *m.entry(l.sym).or_insert(0) += 1;
            }
        }
    }
    m
}

pub fn is_quadratic(s: &EquationSystem) -> bool {
    occurrence_counts(s).values().all(|&c| c <= 2)
}

pub fn is_strictly_quadratic(s: &EquationSystem) -> bool {
    occurrence_counts(s).values().all(|&c| c == 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Shape {
    Orientable { n: usize, m: usize },
    NonOrientable { n: usize, m: usize },
}

/// One atom of a standard quadratic word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Atom {
    /// `[x, y] = x⁻¹y⁻¹xy`
    Commutator(u16, u16),
    Square(u16),
    /// `z⁻¹ c z`
    Conjugate(u16, Word),
}

impl Atom {
    pub fn word(&self) -> Word {
        let v = |s: u16| Letter::v(s);
        match self {
            Atom::Commutator(x, y) => Word(vec![v(*x).inv(), v(*y).inv(), v(*x), v(*y)]),
            Atom::Square(x) => Word(vec![v(*x), v(*x)]),
            Atom::Conjugate(z, c) => {
                let mut w = vec![v(*z).inv()];
                w.extend_from_slice(c.letters());
                w.push(v(*z));
                Word(w)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticClass {
    pub shape: Shape,
    pub has_coefficient_d: bool,
    pub genus: usize,
    pub atomic_rank: usize,
    pub kappa: usize,
    #[serde(skip)]
    pub atoms: Vec<Atom>,
    #[serde(skip)]
    pub d: Word,
}

fn not_standard(position: usize, msg: impl Into<String>) -> Error {
    Error::NotStandard { position, msg: msg.into() }
}

/// Matches `r₁⋯r_k d` against the four standard shapes.
pub fn parse_standard_quadratic(s: &EquationSystem) -> Result<QuadraticClass> {
    if s.equations.len() != 1 {
        return Err(not_standard(0, "expected a single equation"));
    }
    let w = reduce(&s.equations[0]);
    let ls = w.letters();
    let mut atoms = Vec::new();
    let mut k = 0;
    let mut d = Word::empty();
    while k < ls.len() {
        let pos = atoms.len();
        let l = ls[k];
        if l.kind == Kind::Constant {
            // trailing coefficient
            if ls[k..].iter().any(|x| x.kind == Kind::Variable) {
                return Err(not_standard(pos, "constant letters outside a conjugate atom"));
            }
            d = Word(ls[k..].to_vec());
            break;
        }
        let x = l.sym;
        let var = |i: usize| ls.get(i).filter(|m| m.kind == Kind::Variable).copied();
        if l.neg {
            let y = var(k + 1);
            match (y, var(k + 2), var(k + 3)) {
                (Some(y), Some(a), Some(b)) if y.neg && y.sym != x && a == l.inv() && b == y.inv() => {
                    atoms.push(Atom::Commutator(x, y.sym));
                    k += 4;
                    continue;
                }
                _ => {}
            }
            let run = ls[k + 1..].iter().take_while(|m| m.kind == Kind::Constant).count();
            if run > 0 && ls.get(k + 1 + run) == Some(&l.inv()) {
                atoms.push(Atom::Conjugate(x, Word(ls[k + 1..k + 1 + run].to_vec())));
                k += run + 2;
                continue;
            }
            return Err(not_standard(pos, "expected a commutator or a conjugate"));
        }
        if ls.get(k + 1) == Some(&l) {
            atoms.push(Atom::Square(x));
            k += 2;
            continue;
        }
        return Err(not_standard(pos, "expected a square"));
    }
    // shape checks
    let mut seen = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        let vs: Vec<u16> = match a {
            Atom::Commutator(x, y) => vec![*x, *y],
            Atom::Square(x) | Atom::Conjugate(x, _) => vec![*x],
        };
        for v in vs {
            if seen.insert(v, i).is_some() {
                return Err(not_standard(i, "variable reused across atoms"));
            }
        }
    }
    let n_comm = atoms.iter().filter(|a| matches!(a, Atom::Commutator(..))).count();
    let n_sq = atoms.iter().filter(|a| matches!(a, Atom::Square(_))).count();
    let m = atoms.iter().filter(|a| matches!(a, Atom::Conjugate(..))).count();
    if n_comm > 0 && n_sq > 0 {
        let i = atoms.iter().position(|a| matches!(a, Atom::Square(_))).expect("square");
        return Err(not_standard(i, "commutators and squares mixed"));
    }
    if let Some(i) = atoms.windows(2).position(|p| matches!(p[0], Atom::Conjugate(..)) && !matches!(p[1], Atom::Conjugate(..))) {
        return Err(not_standard(i + 1, "conjugates must follow the genus part"));
    }
    let n = n_comm + n_sq;
    if n + m == 0 {
        return Err(not_standard(0, "no atoms"));
    }
    let shape = if n_sq > 0 { Shape::NonOrientable { n, m } } else { Shape::Orientable { n, m } };
    let has_d = !d.is_empty();
    Ok(QuadraticClass {
        shape,
        has_coefficient_d: has_d,
        genus: n,
        atomic_rank: atoms.len(),
        kappa: seen.len() + usize::from(has_d),
        atoms,
        d,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    Regular,
    NotRegular,
    Unknown,
}

fn commute(a: &Word, b: &Word) -> bool {
    reduce(&a.concat(b)) == reduce(&b.concat(a))
}

/// Regularity of a standard quadratic equation, using an optional solution
/// as the witness for consistency and non-commutativity.
pub fn regularity(s: &EquationSystem, witness: Option<&[Word]>) -> Result<Regularity> {
    let q = parse_standard_quadratic(s)?;
    if q.shape == (Shape::Orientable { n: 1, m: 0 }) && q.has_coefficient_d {
        return Ok(Regularity::Regular);
    }
    if q.kappa < 4 {
        return Ok(Regularity::NotRegular);
    }
    let Some(w) = witness else { return Ok(Regularity::Unknown) };
    if !s.is_solution(w) {
        return Err(Error::NotASolution("witness does not solve the equation".into()));
    }
    let vals: Vec<Word> = q
        .atoms
        .iter()
        .map(|a| crate::word::substitute(&a.word(), |x| w.get(x as usize).cloned()))
        .collect::<Result<_>>()?;
    if vals.windows(2).any(|p| !commute(&p[0], &p[1])) {
        return Ok(Regularity::Regular);
    }
    // a consistent equation of this kind always has a non-commutative solution
    let forced = match q.shape {
        Shape::Orientable { n, .. } => n > 0,
        Shape::NonOrientable { n, .. } => n > 2,
    };
    Ok(if forced { Regularity::Regular } else { Regularity::Unknown })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(t: &str) -> EquationSystem {
        EquationSystem::parse(t).unwrap()
    }

    #[test]
    fn quadratic_predicates() {
        let s = sys("constants: a b\n[x,y][b,a]");
        assert!(is_strictly_quadratic(&s));
        let s = sys("constants: a\nx a x x^-1");
        assert!(is_quadratic(&s) && !is_strictly_quadratic(&s));
        assert!(!is_quadratic(&sys("x x x")));
    }

    #[test]
    fn shapes() {
        let q = parse_standard_quadratic(&sys("[x1,y1][x2,y2]")).unwrap();
        assert_eq!(q.shape, Shape::Orientable { n: 2, m: 0 });
        assert_eq!((q.kappa, q.atomic_rank), (4, 2));
        let q = parse_standard_quadratic(&sys("constants: c d\n[x,y] z^-1 c z d")).unwrap();
        assert_eq!(q.shape, Shape::Orientable { n: 1, m: 1 });
        assert!(q.has_coefficient_d);
        assert_eq!(q.kappa, 4);
        let q = parse_standard_quadratic(&sys("x1 x1 x2 x2 x3 x3")).unwrap();
        assert_eq!(q.shape, Shape::NonOrientable { n: 3, m: 0 });
        assert_eq!(q.kappa, 3);
    }

    #[test]
    fn non_standard_positions() {
        let e = parse_standard_quadratic(&sys("[x,y] z z [u,v]")).unwrap_err();
        assert!(matches!(e, Error::NotStandard { position: 1, .. }), "{e:?}");
        let e = parse_standard_quadratic(&sys("x y")).unwrap_err();
        assert!(matches!(e, Error::NotStandard { position: 0, .. }));
    }

    #[test]
    fn regular_cases() {
        let s = sys("constants: a b\n[x,y][b,a]");
        assert_eq!(regularity(&s, None).unwrap(), Regularity::Regular);
        assert_eq!(regularity(&sys("[x,y]"), None).unwrap(), Regularity::NotRegular);
        // [x,y] = [a^-1, z] solves it; the atom values do not commute
        let s = sys("constants: a b\n[x,y] z^-1 a z a^-1");
        let p = |t: &str| s.alphabet.parse_word(t).unwrap();
        let w = vec![p("a^-1"), p("b"), p("b")];
        assert!(s.is_solution(&w));
        assert_eq!(regularity(&s, Some(&w)).unwrap(), Regularity::Regular);
        assert!(regularity(&s, Some(&[p("a"), p("b"), Word::empty()])).is_err());
        let s = sys("constants: a b\n[x1,y1][x2,y2][x3,y3] a");
        assert_eq!(regularity(&s, None).unwrap(), Regularity::Unknown);
    }
}
