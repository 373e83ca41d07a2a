//! Free monoid and free group words over constants and variables.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    Constant,
    Variable,
}

/// A signed symbol. Symbols are indices into an [`Alphabet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub kind: Kind,
    pub sym: u16,
    pub neg: bool,
}

impl Letter {
    pub const fn c(sym: u16) -> Self {
        Letter { kind: Kind::Constant, sym, neg: false }
    }

    pub const fn v(sym: u16) -> Self {
        Letter { kind: Kind::Variable, sym, neg: false }
    }

    pub fn with_sign(self, sign: i8) -> Self {
        if sign < 0 {
            self.inv()
        } else {
            self
        }
    }

    pub fn inv(self) -> Self {
        Letter { neg: !self.neg, ..self }
    }

    pub fn sign(self) -> i8 {
        if self.neg {
            -1
        } else {
            1
        }
    }

    pub fn is_inverse_of(self, other: Letter) -> bool {
        self.kind == other.kind && self.sym == other.sym && self.neg != other.neg
    }

    pub fn positive(self) -> Self {
        Letter { neg: false, ..self }
    }

    pub fn is_constant(self) -> bool {
        self.kind == Kind::Constant
    }
}

/// A finite sequence of letters. Nothing is reduced implicitly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_letters(letters: impl IntoIterator<Item = Letter>) -> Self {
        Word(letters.into_iter().collect())
    }

    pub fn letter(l: Letter) -> Self {
        Word(vec![l])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inv()).collect())
    }

    /// `self` if `sign > 0`, otherwise its inverse.
    pub fn pow_sign(&self, sign: i8) -> Word {
        if sign < 0 {
            self.inverse()
        } else {
            self.clone()
        }
    }

    /// Graphical concatenation.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Reduced product in the free group.
    pub fn mul(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        for &l in &other.0 {
            push_reduced(&mut v, l);
        }
        Word(v)
    }

    /// Graphical power; negative exponents invert first.
    pub fn power(&self, n: i64) -> Word {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut v = Vec::with_capacity(base.len() * n.unsigned_abs() as usize);
        for _ in 0..n.unsigned_abs() {
            v.extend_from_slice(&base.0);
        }
        Word(v)
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| !p[0].is_inverse_of(p[1]))
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced()
            && (self.len() < 2 || !self.0[0].is_inverse_of(self.0[self.len() - 1]))
    }

    pub fn has_variables(&self) -> bool {
        self.0.iter().any(|l| l.kind == Kind::Variable)
    }

    pub fn subword(&self, from: usize, to: usize) -> Word {
        Word(self.0[from..to].to_vec())
    }

    /// Cyclic shift moving the first `k` letters to the end.
    pub fn rotate(&self, k: usize) -> Word {
        if self.is_empty() {
            return Word::empty();
        }
        let k = k % self.len();
        let mut v = self.0[k..].to_vec();
        v.extend_from_slice(&self.0[..k]);
        Word(v)
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

/// Length first, then lexicographic.
pub fn shortlex(u: &Word, v: &Word) -> Ordering {
    u.len().cmp(&v.len()).then_with(|| u.0.cmp(&v.0))
}

fn push_reduced(stack: &mut Vec<Letter>, l: Letter) {
    if stack.last().is_some_and(|&t| t.is_inverse_of(l)) {
        stack.pop();
    } else {
        stack.push(l);
    }
}

/// The reduced form of `w`.
pub fn reduce(w: &Word) -> Word {
    let mut v = Vec::with_capacity(w.len());
    for &l in &w.0 {
        push_reduced(&mut v, l);
    }
    Word(v)
}

/// Equality of letter sequences, no reduction.
pub fn graphical_eq(u: &Word, v: &Word) -> bool {
    u.0 == v.0
}

/// Splits reduced `u`, `v` as `u = r s`, `v = s^-1 t` with `s` maximal.
pub fn cancellation_triple(u: &Word, v: &Word) -> (Word, Word, Word) {
    let n = u.len();
    let mut k = 0;
    while k < n && k < v.len() && u.0[n - 1 - k].is_inverse_of(v.0[k]) {
        k += 1;
    }
    (
        Word(u.0[..n - k].to_vec()),
        Word(u.0[n - k..].to_vec()),
        Word(v.0[k..].to_vec()),
    )
}

/// Substitutes every variable by a word, keeps constants, reduces.
pub fn substitute(w: &Word, image: impl Fn(u16) -> Option<Word>) -> Result<Word> {
    let mut out = Vec::new();
    for &l in &w.0 {
        match l.kind {
            Kind::Constant => push_reduced(&mut out, l),
            Kind::Variable => {
                let img = image(l.sym).ok_or_else(|| Error::MissingVariable(format!("#{}", l.sym)))?;
                let img = img.pow_sign(l.sign());
                for &m in &img.0 {
                    push_reduced(&mut out, m);
                }
            }
        }
    }
    Ok(Word(out))
}

/// Componentwise substitution followed by reduction.
pub fn apply_word_map(ws: &[Word], assignment: &BTreeMap<u16, Word>) -> Result<Vec<Word>> {
    ws.iter().map(|w| substitute(w, |s| assignment.get(&s).cloned())).collect()
}

/// `w = conjugator * core * conjugator^-1` with `core` cyclically reduced.
pub fn cyclic_reduce(w: &Word) -> (Word, Word) {
    let w = reduce(w);
    let n = w.len();
    let mut k = 0;
    while 2 * k + 1 < n && w.0[k].is_inverse_of(w.0[n - 1 - k]) {
        k += 1;
    }
    (Word(w.0[..k].to_vec()), Word(w.0[k..n - k].to_vec()))
}

/// The primitive root length of a nonempty word (smallest `d` with `w = u^(n/d)`).
pub fn root_len(w: &Word) -> usize {
    let n = w.len();
    (1..=n)
        .find(|&d| n.is_multiple_of(d) && (d..n).all(|i| w.0[i] == w.0[i - d]))
        .unwrap_or(n)
}

/// A period: nonempty, cyclically reduced and not a proper power.
pub fn is_period(w: &Word) -> bool {
    !w.is_empty() && w.is_cyclically_reduced() && root_len(w) == w.len()
}

/// All reduced words over `gens^{±1}` with length in `[min, max]`, shortlex order.
pub fn reduced_words(gens: &[Letter], min: usize, max: usize) -> Vec<Word> {
    let mut alphabet: Vec<Letter> = gens
        .iter()
        .flat_map(|&g| [g.positive(), g.positive().inv()])
        .collect();
    alphabet.sort();
    alphabet.dedup();
    let mut out = Vec::new();
    let mut layer = vec![Word::empty()];
    for len in 0..=max {
        if len >= min {
            out.extend(layer.iter().cloned());
        }
        if len == max {
            break;
        }
        let mut next = Vec::new();
        for w in &layer {
            for &l in &alphabet {
                if w.0.last().is_some_and(|&t| t.is_inverse_of(l)) {
                    continue;
                }
                let mut v = w.0.clone();
                v.push(l);
                next.push(Word(v));
            }
        }
        layer = next;
    }
    out
}

/// Ordered symbol tables for constants and variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub constants: Vec<String>,
    pub variables: Vec<String>,
}

impl Alphabet {
    pub fn new(constants: &[&str], variables: &[&str]) -> Self {
        Alphabet {
            constants: constants.iter().map(|s| s.to_string()).collect(),
            variables: variables.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn constant(&self, name: &str) -> Option<Letter> {
        self.constants.iter().position(|c| c == name).map(|i| Letter::c(i as u16))
    }

    pub fn variable(&self, name: &str) -> Option<Letter> {
        self.variables.iter().position(|c| c == name).map(|i| Letter::v(i as u16))
    }

    pub fn lookup(&self, name: &str) -> Option<Letter> {
        self.variable(name).or_else(|| self.constant(name))
    }

    pub fn name(&self, l: Letter) -> String {
        let table = match l.kind {
            Kind::Constant => &self.constants,
            Kind::Variable => &self.variables,
        };
        table
            .get(l.sym as usize)
            .cloned()
            .unwrap_or_else(|| match l.kind {
                Kind::Constant => format!("c{}", l.sym),
                Kind::Variable => format!("v{}", l.sym),
            })
    }

    fn short_names(&self) -> bool {
        self.constants.iter().chain(&self.variables).all(|s| s.len() == 1)
    }

    pub fn format_letter(&self, l: Letter) -> String {
        let name = self.name(l);
        if !l.neg {
            name
        } else if name.len() == 1 {
            name.to_ascii_uppercase()
        } else {
            format!("{name}^-1")
        }
    }

    pub fn format(&self, w: &Word) -> String {
        if w.is_empty() {
            return "1".to_string();
        }
        let parts: Vec<String> = w.0.iter().map(|&l| self.format_letter(l)).collect();
        if self.short_names() {
            parts.concat()
        } else {
            parts.join("*")
        }
    }

    /// Parses a word; every identifier must already be declared.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        let ast = parse_expr(s, &self.all_names())?;
        let mut out = Vec::new();
        ast.emit(&mut out, &|name: &str, pos: usize| {
            self.lookup(name).ok_or_else(|| Error::Parse {
                pos,
                msg: format!("undeclared symbol `{name}`"),
            })
        })?;
        Ok(Word(out))
    }

    fn all_names(&self) -> Vec<String> {
        self.constants.iter().chain(&self.variables).cloned().collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "1");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            let p = match l.kind {
                Kind::Constant => 'c',
                Kind::Variable => 'v',
            };
            write!(f, "{p}{}", l.sym)?;
            if l.neg {
                write!(f, "^-1")?;
            }
        }
        Ok(())
    }
}

// ---- text grammar ----

#[derive(Debug, Clone)]
pub(crate) enum Ast {
    Sym { name: String, neg: bool, pos: usize },
    Seq(Vec<Ast>),
    Comm(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, i64),
}

impl Ast {
    pub(crate) fn names(&self, out: &mut Vec<String>) {
        match self {
            Ast::Sym { name, .. } => out.push(name.clone()),
            Ast::Seq(v) => v.iter().for_each(|a| a.names(out)),
            Ast::Comm(a, b) => {
                a.names(out);
                b.names(out);
            }
            Ast::Pow(a, _) => a.names(out),
        }
    }

    pub(crate) fn emit(
        &self,
        out: &mut Vec<Letter>,
        resolve: &dyn Fn(&str, usize) -> Result<Letter>,
    ) -> Result<()> {
        match self {
            Ast::Sym { name, neg, pos } => {
                let l = resolve(name, *pos)?;
                out.push(if *neg { l.inv() } else { l });
            }
            Ast::Seq(v) => {
                for a in v {
                    a.emit(out, resolve)?;
                }
            }
            Ast::Comm(a, b) => {
                let mut u = Vec::new();
                a.emit(&mut u, resolve)?;
                let mut v = Vec::new();
                b.emit(&mut v, resolve)?;
                let (u, v) = (Word(u), Word(v));
                out.extend(u.inverse().0);
                out.extend(v.inverse().0);
                out.extend(u.0);
                out.extend(v.0);
            }
            Ast::Pow(a, n) => {
                let mut u = Vec::new();
                a.emit(&mut u, resolve)?;
                out.extend(Word(u).power(*n).0);
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    names: &'a [String],
}

/// Parses the textual word grammar into an AST. `names` lists multi-character
/// identifiers that should be matched greedily.
pub(crate) fn parse_expr(s: &str, names: &[String]) -> Result<Ast> {
    let mut p = Parser { s: s.as_bytes(), pos: 0, names };
    let a = p.seq()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected character"));
    }
    Ok(a)
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn seq(&mut self) -> Result<Ast> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                }
                Some(c) if c.is_ascii_alphabetic() || c == b'[' || c == b'(' => {
                    items.push(self.factor()?);
                }
                Some(b'1') if items.is_empty() => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        Ok(Ast::Seq(items))
    }

    fn factor(&mut self) -> Result<Ast> {
        let atom = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.ws();
            let start = self.pos;
            if self.s.get(self.pos) == Some(&b'-') {
                self.pos += 1;
            }
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            let n: i64 = txt.parse().map_err(|_| self.err("bad exponent"))?;
            return Ok(Ast::Pow(Box::new(atom), n));
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Ast> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let a = self.seq()?;
                if self.peek() != Some(b',') {
                    return Err(self.err("expected `,` in commutator"));
                }
                self.pos += 1;
                let b = self.seq()?;
                if self.peek() != Some(b']') {
                    return Err(self.err("expected `]`"));
                }
                self.pos += 1;
                Ok(Ast::Comm(Box::new(a), Box::new(b)))
            }
            Some(b'(') => {
                self.pos += 1;
                let a = self.seq()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(a)
            }
            Some(c) if c.is_ascii_alphabetic() => Ok(self.ident()),
            _ => Err(self.err("expected a symbol")),
        }
    }

    fn ident(&mut self) -> Ast {
        let start = self.pos;
        let rest = &self.s[start..];
        // declared names first, longest match, case-insensitive for inverses
        let mut best: Option<&String> = None;
        for n in self.names {
            let nb = n.as_bytes();
            if nb.len() > 1
                && rest.len() >= nb.len()
                && rest[..nb.len()].eq_ignore_ascii_case(nb)
                && (rest[..nb.len()] == *nb || rest[..nb.len()].iter().all(|c| !c.is_ascii_lowercase()))
                && rest.get(nb.len()).is_none_or(|c| !c.is_ascii_digit())
                && best.is_none_or(|b| b.len() < nb.len())
            {
                best = Some(n);
            }
        }
        if let Some(n) = best {
            let neg = self.s[start..start + n.len()] != *n.as_bytes();
            self.pos += n.len();
            return Ast::Sym { name: n.clone(), neg, pos: start };
        }
        let c = self.s[self.pos];
        self.pos += 1;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.s[start + 1..self.pos]).unwrap_or("");
        let neg = c.is_ascii_uppercase();
        let name = format!("{}{}", (c as char).to_ascii_lowercase(), digits);
        Ast::Sym { name, neg, pos: start }
    }
}

/// Default classification of undeclared identifiers: `x`, `y`, `z` with optional
/// index are variables, everything else a constant.
pub fn looks_like_variable(name: &str) -> bool {
    let mut cs = name.chars();
    matches!(cs.next(), Some('x' | 'y' | 'z')) && cs.all(|c| c.is_ascii_digit())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Alphabet {
        Alphabet::new(&["a", "b", "c", "d"], &["x", "y", "z"])
    }

    #[test]
    fn reduce_examples() {
        let al = Alphabet::new(&["a1", "a2"], &[]);
        let w = al.parse_word("a1*a2*a2^-1").unwrap();
        assert_eq!(reduce(&w), al.parse_word("a1").unwrap());
        assert_eq!(reduce(&Word::empty()), Word::empty());
        assert!(!graphical_eq(&w, &al.parse_word("a1").unwrap()));
    }

    #[test]
    fn graphical_examples() {
        let al = ab();
        let w = al.parse_word("abB b").unwrap();
        assert!(graphical_eq(&w, &w));
        assert!(graphical_eq(&al.parse_word("ab").unwrap(), &reduce(&w)));
    }

    #[test]
    fn triple_examples() {
        let al = ab();
        let p = |s| al.parse_word(s).unwrap();
        assert_eq!(cancellation_triple(&p("ab"), &p("Bc")), (p("a"), p("b"), p("c")));
        assert_eq!(cancellation_triple(&p("ab"), &p("cd")), (p("ab"), Word::empty(), p("cd")));
    }

    #[test]
    fn word_map_examples() {
        let al = ab();
        let p = |s| al.parse_word(s).unwrap();
        let x = al.variable("x").unwrap().sym;
        let mut u = BTreeMap::new();
        u.insert(x, p("ab"));
        assert_eq!(apply_word_map(&[p("x")], &u).unwrap(), vec![p("ab")]);
        assert_eq!(apply_word_map(&[p("xX")], &u).unwrap(), vec![Word::empty()]);
        assert!(matches!(apply_word_map(&[p("y")], &u), Err(Error::MissingVariable(_))));
    }

    #[test]
    fn cyclic_examples() {
        let al = ab();
        let p = |s| al.parse_word(s).unwrap();
        assert_eq!(cyclic_reduce(&p("abA")), (p("a"), p("b")));
        assert!(!is_period(&p("abA")));
        assert!(!is_period(&p("abab")));
        assert!(is_period(&p("ab")));
        assert!(is_period(&p("a")));
    }

    #[test]
    fn parser_sugar() {
        let al = ab();
        let w = al.parse_word("[x,y]*[b,a]").unwrap();
        assert_eq!(al.format(&w), "XYxyBAba");
        assert_eq!(al.parse_word("x^-1").unwrap(), al.parse_word("X").unwrap());
        assert_eq!(al.parse_word("(ab)^2").unwrap(), al.parse_word("abab").unwrap());
        assert_eq!(al.parse_word("1").unwrap(), Word::empty());
        assert!(al.parse_word("q").is_err());
    }

    #[test]
    fn long_names() {
        let al = Alphabet::new(&["a"], &["x1", "x2", "x10"]);
        let w = al.parse_word("x10*X2*x1^-1 a").unwrap();
        assert_eq!(al.format(&w), "x10*x2^-1*x1^-1*a");
    }

    #[test]
    fn reduced_word_counts() {
        let g = [Letter::c(0), Letter::c(1)];
        let ws = reduced_words(&g, 0, 3);
        assert_eq!(ws.len(), 1 + 4 + 12 + 36);
        assert!(ws.iter().all(|w| w.is_reduced()));
    }
}
