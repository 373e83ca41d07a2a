//! Systems of equations, partition tables and the passage to generalized equations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geq::{item_range, GeneralizedEquation};
use crate::word::{looks_like_variable, parse_expr, reduce, Alphabet, Ast, Kind, Letter, Word};

/// Equations `r_i1 ... r_il = 1`, letters kept exactly as written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationSystem {
    pub alphabet: Alphabet,
    pub equations: Vec<Word>,
}

impl EquationSystem {
    pub fn new(alphabet: Alphabet, equations: Vec<Word>) -> Result<Self> {
        let s = EquationSystem { alphabet, equations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.equations.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::Invalid(format!("equation {} is empty", i + 1)));
            }
            for l in e.letters() {
                let n = match l.kind {
                    Kind::Constant => self.alphabet.constants.len(),
                    Kind::Variable => self.alphabet.variables.len(),
                };
                if l.sym as usize >= n {
                    return Err(Error::Invalid(format!("equation {} uses an undeclared symbol", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Parses the text format: optional `constants:` / `variables:` lines,
    /// `#` comments, one equation per line as `w` or `u = v`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut constants: Vec<String> = Vec::new();
        let mut variables: Vec<String> = Vec::new();
        let mut eqs: Vec<(Ast, Option<Ast>)> = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let body = line.split('#').next().unwrap_or("").trim();
            let line_off = offset;
            offset += line.len() + 1;
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix("constants:") {
                constants.extend(split_names(rest));
                continue;
            }
            if let Some(rest) = body.strip_prefix("variables:") {
                variables.extend(split_names(rest));
                continue;
            }
            let declared: Vec<String> = constants.iter().chain(&variables).cloned().collect();
            let shift = |e: Error| match e {
                Error::Parse { pos, msg } => Error::Parse { pos: pos + line_off, msg },
                e => e,
            };
            let mut parts = body.splitn(2, '=');
            let lhs = parse_expr(parts.next().unwrap_or(""), &declared).map_err(shift)?;
            let rhs = match parts.next() {
                Some(r) => Some(parse_expr(r, &declared).map_err(shift)?),
                None => None,
            };
            eqs.push((lhs, rhs));
        }
        if eqs.is_empty() {
            return Err(Error::Parse { pos: 0, msg: "no equations".into() });
        }
        let mut seen = Vec::new();
        for (l, r) in &eqs {
            l.names(&mut seen);
            if let Some(r) = r {
                r.names(&mut seen);
            }
        }
        let mut extra_c: BTreeSet<String> = BTreeSet::new();
        let mut extra_v: BTreeSet<String> = BTreeSet::new();
        for n in seen {
            if constants.contains(&n) || variables.contains(&n) {
                continue;
            }
            if looks_like_variable(&n) {
                extra_v.insert(n);
            } else {
                extra_c.insert(n);
            }
        }
        constants.extend(extra_c);
        variables.extend(extra_v);
        let alphabet = Alphabet { constants, variables };
        let resolve = |name: &str, pos: usize| {
            alphabet.lookup(name).ok_or_else(|| Error::Parse { pos, msg: format!("unknown `{name}`") })
        };
        let mut equations = Vec::new();
        for (l, r) in &eqs {
            let mut out = Vec::new();
            l.emit(&mut out, &resolve)?;
            if let Some(r) = r {
                let mut rr = Vec::new();
                r.emit(&mut rr, &resolve)?;
                out.extend(Word(rr).inverse().0);
            }
            equations.push(Word(out));
        }
        EquationSystem::new(alphabet, equations)
    }

    pub fn num_variables(&self) -> usize {
        self.alphabet.variables.len()
    }

    pub fn constant_letters(&self) -> Vec<Letter> {
        (0..self.alphabet.constants.len()).map(|i| Letter::c(i as u16)).collect()
    }

    /// Variables that actually occur, in alphabet order.
    pub fn occurring_variables(&self) -> BTreeSet<u16> {
        self.equations
            .iter()
            .flat_map(|e| e.letters().iter())
            .filter(|l| l.kind == Kind::Variable)
            .map(|l| l.sym)
            .collect()
    }

    /// Reduced value of each equation under `w` (indexed by variable).
    pub fn evaluate(&self, w: &[Word]) -> Result<Vec<Word>> {
        self.equations
            .iter()
            .map(|e| crate::word::substitute(e, |s| w.get(s as usize).cloned()))
            .collect()
    }

    pub fn is_solution(&self, w: &[Word]) -> bool {
        self.evaluate(w).map(|v| v.iter().all(|x| x.is_empty())).unwrap_or(false)
    }

    pub fn format(&self) -> Vec<String> {
        self.equations.iter().map(|e| format!("{} = 1", self.alphabet.format(e))).collect()
    }

    /// Substitutes `1` for the given variables. Equations left empty are dropped;
    /// the alphabet is kept so value vectors stay indexed the same way.
    pub fn without_variables(&self, killed: &BTreeSet<u16>) -> EquationSystem {
        let equations = self
            .equations
            .iter()
            .map(|e| Word(e.letters().iter().copied().filter(|l| !(l.kind == Kind::Variable && killed.contains(&l.sym))).collect()))
            .filter(|e: &Word| !e.is_empty())
            .collect();
        EquationSystem { alphabet: self.alphabet.clone(), equations }
    }
}

/// A system file with an optional `solution: x = w, y = v` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub system: EquationSystem,
    pub solution: Option<Vec<Word>>,
}

pub fn parse_document(text: &str) -> Result<Document> {
    let mut body = String::new();
    let mut sol_line = None;
    for line in text.lines() {
        let t = line.split('#').next().unwrap_or("").trim();
        match t.strip_prefix("solution:") {
            Some(rest) => sol_line = Some(rest.to_string()),
            // keep offsets stable for error positions
            None => body.push_str(line),
        }
        body.push('\n');
    }
    let system = EquationSystem::parse(&body)?;
    let solution = match sol_line {
        None => None,
        Some(rest) => {
            let mut vals: Vec<Option<Word>> = vec![None; system.num_variables()];
            for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (name, value) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { pos: 0, msg: format!("expected `name = word` in `{part}`") })?;
                let name = name.trim();
                let k = system
                    .alphabet
                    .variables
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| Error::Parse { pos: 0, msg: format!("unknown variable `{name}`") })?;
                let w = system.alphabet.parse_word(value.trim())?;
                if w.has_variables() {
                    return Err(Error::Parse { pos: 0, msg: format!("value of `{name}` uses variables") });
                }
                vals[k] = Some(w);
            }
            let out = vals
                .into_iter()
                .enumerate()
                .map(|(k, v)| v.ok_or_else(|| Error::MissingVariable(system.alphabet.variables[k].clone())))
                .collect::<Result<Vec<_>>>()?;
            Some(out)
        }
    };
    Ok(Document { system, solution })
}

fn split_names(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(String::from).collect()
}

/// Entries `V_ij` over `A ∪ Z`; `Z` letters are `Kind::Variable` with `sym` the z index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionTable {
    pub entries: Vec<Vec<Word>>,
    pub z_count: usize,
}

impl PartitionTable {
    /// Renames `Z` by first appearance and makes every first appearance positive.
    pub fn canonical(&self) -> PartitionTable {
        let mut map: BTreeMap<u16, (u16, bool)> = BTreeMap::new();
        for row in &self.entries {
            for w in row {
                for l in w.letters() {
                    if l.kind == Kind::Variable && !map.contains_key(&l.sym) {
                        let n = map.len() as u16;
                        map.insert(l.sym, (n, l.neg));
                    }
                }
            }
        }
        let entries = self
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|w| {
                        Word::from_letters(w.letters().iter().map(|&l| {
                            if l.kind == Kind::Variable {
                                let (n, flip) = map[&l.sym];
                                Letter { kind: Kind::Variable, sym: n, neg: l.neg != flip }
                            } else {
                                l
                            }
                        }))
                    })
                    .collect()
            })
            .collect();
        PartitionTable { entries, z_count: map.len() }
    }

    /// Checks the three table conditions against `s`.
    pub fn check(&self, s: &EquationSystem) -> std::result::Result<(), String> {
        if self.entries.len() != s.equations.len() {
            return Err("row count differs from equation count".into());
        }
        for (i, (row, eq)) in self.entries.iter().zip(&s.equations).enumerate() {
            let l = eq.len();
            if row.len() != l {
                return Err(format!("row {} has wrong length", i + 1));
            }
            let mut prod = Word::empty();
            for (j, (v, r)) in row.iter().zip(eq.letters()).enumerate() {
                if !v.is_reduced() {
                    return Err(format!("V{}{} not reduced", i + 1, j + 1));
                }
                if v.len() > l - 1 && r.kind == Kind::Variable {
                    return Err(format!("V{}{} too long", i + 1, j + 1));
                }
                if r.kind == Kind::Constant && *v != Word::letter(*r) {
                    return Err(format!("V{}{} must equal its constant", i + 1, j + 1));
                }
                prod = prod.mul(v);
            }
            if !prod.is_empty() {
                return Err(format!("row {} does not reduce to 1", i + 1));
            }
        }
        Ok(())
    }

    pub fn variable_entries_nonempty(&self, s: &EquationSystem) -> bool {
        self.entries.iter().zip(&s.equations).all(|(row, eq)| {
            row.iter().zip(eq.letters()).all(|(v, r)| r.kind == Kind::Constant || !v.is_empty())
        })
    }

    pub fn format(&self, s: &EquationSystem) -> Vec<Vec<String>> {
        let al = Alphabet {
            constants: s.alphabet.constants.clone(),
            variables: (1..=self.z_count).map(|i| format!("z{i}")).collect(),
        };
        self.entries.iter().map(|row| row.iter().map(|w| al.format(w)).collect()).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TableOptions {
    /// Maximum number of tables before `budget-exceeded`.
    pub cap: usize,
    /// Optional extra cap on the length of variable entries.
    pub entry_cap: Option<usize>,
    /// Skip tables with an empty variable entry.
    pub nonempty_variables: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { cap: 1_000_000, entry_cap: None, nonempty_variables: false }
    }
}

struct Enumerator<'a> {
    s: &'a EquationSystem,
    opts: TableOptions,
    consts: Vec<Letter>,
    rows: Vec<Vec<Word>>,
    out: Vec<PartitionTable>,
    count: usize,
}

/// Enumerates `PT(S)` up to renaming and inversion of the `Z` letters.
pub fn enumerate_partition_tables(s: &EquationSystem, opts: TableOptions) -> Result<Vec<PartitionTable>> {
    let mut consts = Vec::new();
    for c in s.constant_letters() {
        consts.push(c);
        consts.push(c.inv());
    }
    let mut e = Enumerator { s, opts, consts, rows: Vec::new(), out: Vec::new(), count: 0 };
    e.row(0, 0)?;
    Ok(e.out)
}

impl Enumerator<'_> {
    fn cap_of(&self, i: usize) -> usize {
        let l = self.s.equations[i].len();
        let base = l - 1;
        self.opts.entry_cap.map_or(base, |c| c.min(base))
    }

    fn row(&mut self, i: usize, z: usize) -> Result<()> {
        if i == self.s.equations.len() {
            self.count += 1;
            if self.count > self.opts.cap {
                return Err(Error::BudgetExceeded { cap: self.opts.cap, count: self.count });
            }
            self.out.push(PartitionTable { entries: self.rows.clone(), z_count: z });
            return Ok(());
        }
        self.rows.push(Vec::new());
        let mut stack = Vec::new();
        self.position(i, 0, z, &mut stack)?;
        self.rows.pop();
        Ok(())
    }

    /// Remaining letter capacity from position `j` on in row `i`.
    fn capacity(&self, i: usize, j: usize) -> usize {
        let cap = self.cap_of(i);
        self.s.equations[i].letters()[j..]
            .iter()
            .map(|l| if l.kind == Kind::Constant { 1 } else { cap })
            .sum()
    }

    fn position(&mut self, i: usize, j: usize, z: usize, stack: &mut Vec<Letter>) -> Result<()> {
        let eq = &self.s.equations[i];
        if j == eq.len() {
            if stack.is_empty() {
                return self.row(i + 1, z);
            }
            return Ok(());
        }
        let r = eq.letters()[j];
        if r.kind == Kind::Constant {
            let saved = stack.clone();
            push(stack, r);
            if stack.len() <= self.capacity(i, j + 1) {
                self.rows[i].push(Word::letter(r));
                self.position(i, j + 1, z, stack)?;
                self.rows[i].pop();
            }
            *stack = saved;
            return Ok(());
        }
        let cap = self.cap_of(i);
        let min = if self.opts.nonempty_variables { 1 } else { 0 };
        for len in min..=cap {
            let mut entry = Vec::new();
            self.entry(i, j, len, z, &mut entry, stack)?;
        }
        Ok(())
    }

    fn entry(
        &mut self,
        i: usize,
        j: usize,
        len: usize,
        z: usize,
        entry: &mut Vec<Letter>,
        stack: &mut Vec<Letter>,
    ) -> Result<()> {
        let rest_after = self.capacity(i, j + 1);
        if entry.len() == len {
            self.rows[i].push(Word(entry.clone()));
            self.position(i, j + 1, z, stack)?;
            self.rows[i].pop();
            return Ok(());
        }
        let mut letters: Vec<Letter> = self.consts.clone();
        for k in 0..z {
            letters.push(Letter::v(k as u16));
            letters.push(Letter::v(k as u16).inv());
        }
        letters.push(Letter::v(z as u16));
        for l in letters {
            if entry.last().is_some_and(|&t| t.is_inverse_of(l)) {
                continue;
            }
            let nz = if l.kind == Kind::Variable && l.sym as usize == z { z + 1 } else { z };
            let saved = stack.len();
            let popped = if stack.last().is_some_and(|&t| t.is_inverse_of(l)) { stack.pop() } else { None };
            if popped.is_none() {
                stack.push(l);
            }
            let remaining = len - entry.len() - 1 + rest_after;
            if stack.len() <= remaining {
                entry.push(l);
                self.entry(i, j, len, nz, entry, stack)?;
                entry.pop();
            }
            match popped {
                Some(t) => stack.push(t),
                None => {
                    stack.pop();
                }
            }
            debug_assert_eq!(stack.len(), saved);
        }
        Ok(())
    }
}

fn push(stack: &mut Vec<Letter>, l: Letter) {
    if stack.last().is_some_and(|&t| t.is_inverse_of(l)) {
        stack.pop();
    } else {
        stack.push(l);
    }
}

/// Where one variable occurrence landed in `Ω_T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub equation: usize,
    pub position: usize,
    pub variable: u16,
    pub sign: i8,
    pub alpha: usize,
    pub beta: usize,
}

/// `Ω_T` plus the bookkeeping needed for the coordinate map.
#[derive(Clone, Debug)]
pub struct TableGeq {
    pub geq: GeneralizedEquation,
    pub occurrences: Vec<Occurrence>,
    /// For each table letter `(i, j, k)`: the item carrying it, or `None` when
    /// a constant entry was merged into its cancelling partner.
    pub letter_items: BTreeMap<(usize, usize, usize), usize>,
}

/// Builds `Ω_T`.
///
/// Layout: a variable entry `V_ij` for `x^ε` is written as `V_ij^ε`, so the
/// items under an `x`-base spell the value of `x` and every `x`-base has sign
/// `+1`. A constant entry whose letter cancels (in the free reduction of its
/// row) against a constant letter inside another entry shares that letter's
/// item instead of getting its own. Every remaining constant letter carries a
/// constant base. Dual pairs of `z`-bases are normalized so the first base has
/// sign `+1`.
pub fn table_to_geq(s: &EquationSystem, t: &PartitionTable) -> Result<TableGeq> {
    t.check(s).map_err(Error::Invalid)?;
    if !t.variable_entries_nonempty(s) {
        return Err(Error::Invalid("a variable entry is empty".into()));
    }
    // partner of every table letter under stack reduction of its row
    let mut partner: BTreeMap<(usize, usize, usize), (usize, usize, usize)> = BTreeMap::new();
    for (i, row) in t.entries.iter().enumerate() {
        let mut stack: Vec<((usize, usize, usize), Letter)> = Vec::new();
        for (j, v) in row.iter().enumerate() {
            for (k, &l) in v.letters().iter().enumerate() {
                if stack.last().is_some_and(|(_, m)| m.is_inverse_of(l)) {
                    let (pos, _) = stack.pop().expect("nonempty");
                    partner.insert(pos, (i, j, k));
                    partner.insert((i, j, k), pos);
                } else {
                    stack.push(((i, j, k), l));
                }
            }
        }
    }
    let is_const_entry = |i: usize, j: usize| s.equations[i].letters()[j].kind == Kind::Constant;
    // a constant entry merges into its partner when the partner lies inside a
    // variable entry, or into an earlier constant entry
    let merged = |i: usize, j: usize| -> bool {
        if !is_const_entry(i, j) {
            return false;
        }
        match partner.get(&(i, j, 0)) {
            Some(&(pi, pj, _)) => !is_const_entry(pi, pj) || (pi, pj) < (i, j),
            None => false,
        }
    };
    let mut letter_items: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    // item letters as laid out, with the table position they came from
    let mut items: Vec<(Letter, (usize, usize, usize))> = Vec::new();
    let mut occurrences = Vec::new();
    for (i, row) in t.entries.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let r = s.equations[i].letters()[j];
            if r.kind == Kind::Constant {
                if merged(i, j) {
                    continue;
                }
                items.push((r, (i, j, 0)));
                letter_items.insert((i, j, 0), items.len());
                continue;
            }
            let alpha = items.len() + 1;
            let n = v.len();
            let order: Vec<usize> = if r.neg { (0..n).rev().collect() } else { (0..n).collect() };
            for k in order {
                let l = v.letters()[k];
                let l = if r.neg { l.inv() } else { l };
                items.push((l, (i, j, k)));
                letter_items.insert((i, j, k), items.len());
            }
            occurrences.push(Occurrence {
                equation: i,
                position: j,
                variable: r.sym,
                sign: r.sign(),
                alpha,
                beta: items.len() + 1,
            });
        }
    }
    // merged constant entries point at their partner's item
    for (i, row) in t.entries.iter().enumerate() {
        for j in 0..row.len() {
            if merged(i, j) {
                let p = partner[&(i, j, 0)];
                let it = letter_items[&p];
                letter_items.insert((i, j, 0), it);
            }
        }
    }
    let mut g = GeneralizedEquation::new(items.len());
    // z pairs, ordered by the first item of each z
    let mut z_items: BTreeMap<u16, Vec<(usize, i8)>> = BTreeMap::new();
    for (idx, (l, _)) in items.iter().enumerate() {
        if l.kind == Kind::Variable {
            z_items.entry(l.sym).or_default().push((idx + 1, l.sign()));
        }
    }
    let mut zs: Vec<&Vec<(usize, i8)>> = z_items.values().collect();
    zs.sort_by_key(|v| v[0].0);
    for occ in zs {
        for a in 0..occ.len() {
            for b in a + 1..occ.len() {
                let (ia, mut sa) = occ[a];
                let (ib, mut sb) = occ[b];
                if sa < 0 {
                    sa = -sa;
                    sb = -sb;
                }
                g.add_pair((ia, ia + 1, sa), (ib, ib + 1, sb));
            }
        }
    }
    // variable pairs: every unordered pair of occurrences, left-lexicographic
    for x in 0..s.num_variables() as u16 {
        let occ: Vec<&Occurrence> = occurrences.iter().filter(|o| o.variable == x).collect();
        for a in 0..occ.len() {
            for b in a + 1..occ.len() {
                g.add_pair((occ[a].alpha, occ[a].beta, 1), (occ[b].alpha, occ[b].beta, 1));
            }
        }
    }
    for (idx, (l, _)) in items.iter().enumerate() {
        if l.kind == Kind::Constant {
            g.add_constant(idx + 1, *l);
        }
    }
    Ok(TableGeq { geq: g, occurrences, letter_items })
}

impl TableGeq {
    /// `P_x = h[α(μ), β(μ))` for the first occurrence of each occurring variable.
    pub fn coordinate_map(&self) -> BTreeMap<u16, Word> {
        let mut out = BTreeMap::new();
        for o in &self.occurrences {
            out.entry(o.variable).or_insert_with(|| item_range(o.alpha, o.beta));
        }
        out
    }

    /// Applies the coordinate map to a solution, reducing the result.
    pub fn apply(&self, u: &[Word], num_vars: usize) -> Vec<Option<Word>> {
        let p = self.coordinate_map();
        (0..num_vars as u16)
            .map(|x| p.get(&x).map(|w| reduce(&crate::geq::eval_items(w, u))))
            .collect()
    }

    /// Same as [`TableGeq::apply`] without reduction.
    pub fn apply_graphical(&self, u: &[Word], num_vars: usize) -> Vec<Option<Word>> {
        let p = self.coordinate_map();
        (0..num_vars as u16).map(|x| p.get(&x).map(|w| crate::geq::eval_items(w, u))).collect()
    }
}

/// One `GE(S)` member together with the table it came from.
#[derive(Clone, Debug)]
pub struct GeMember {
    pub table: PartitionTable,
    pub built: TableGeq,
}

/// `GE(S)` de-duplicated by canonical form. Tables with an empty variable entry
/// are skipped.
pub fn generalized_equations(s: &EquationSystem, opts: TableOptions) -> Result<Vec<GeMember>> {
    let tables = enumerate_partition_tables(s, TableOptions { nonempty_variables: true, ..opts })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in tables {
        let built = table_to_geq(s, &t)?;
        if seen.insert(built.geq.canonical_form()) {
            out.push(GeMember { table: t, built });
        }
    }
    Ok(out)
}

/// Result of tracing a solution through leftmost free reduction.
#[derive(Clone, Debug)]
pub struct Traced {
    pub table: PartitionTable,
    pub built: TableGeq,
    pub solution: Vec<Word>,
}

/// From a solution `W` of `S` to a table `T` and a solution of `Ω_T` with
/// `W = P(U)` graphically. Cancellation follows the leftmost (stack) order.
pub fn solution_to_table(s: &EquationSystem, w: &[Word]) -> Result<Traced> {
    for x in s.occurring_variables() {
        match w.get(x as usize) {
            None => return Err(Error::MissingVariable(s.alphabet.variables[x as usize].clone())),
            Some(v) if v.is_empty() => {
                return Err(Error::NotASolution(format!(
                    "variable {} is trivial; quotient it out first",
                    s.alphabet.variables[x as usize]
                )))
            }
            Some(v) if !v.is_reduced() => {
                return Err(Error::NotASolution(format!("value of {} is not reduced", s.alphabet.variables[x as usize])))
            }
            _ => {}
        }
    }
    if !s.is_solution(w) {
        return Err(Error::NotASolution("equations do not reduce to 1".into()));
    }
    // z values by (equation, position, block start)
    let mut entries: Vec<Vec<Word>> = Vec::new();
    let mut z_values: Vec<Word> = Vec::new();
    for eq in &s.equations {
        // letters of R_i tagged with (position, offset)
        let mut letters: Vec<(Letter, usize, usize)> = Vec::new();
        for (j, &r) in eq.letters().iter().enumerate() {
            let val = match r.kind {
                Kind::Constant => Word::letter(r),
                Kind::Variable => w[r.sym as usize].pow_sign(r.sign()),
            };
            for (k, &l) in val.letters().iter().enumerate() {
                letters.push((l, j, k));
            }
        }
        let mut partner = vec![usize::MAX; letters.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (idx, &(l, _, _)) in letters.iter().enumerate() {
            if stack.last().is_some_and(|&t| letters[t].0.is_inverse_of(l)) {
                let t = stack.pop().expect("nonempty");
                partner[t] = idx;
                partner[idx] = t;
            } else {
                stack.push(idx);
            }
        }
        debug_assert!(stack.is_empty());
        // blocks: maximal runs within a position whose partners lie in one position
        let mut row: Vec<Word> = vec![Word::empty(); eq.len()];
        let mut z_of: Vec<Option<u16>> = vec![None; letters.len()];
        let mut idx = 0;
        while idx < letters.len() {
            let (_, j, _) = letters[idx];
            let pj = letters[partner[idx]].1;
            let mut end = idx + 1;
            while end < letters.len() && letters[end].1 == j && letters[partner[end]].1 == pj {
                end += 1;
            }
            let r = eq.letters()[j];
            let pr = eq.letters()[pj];
            let entry = &mut row[j];
            if r.kind == Kind::Constant || pr.kind == Kind::Constant {
                // single letters against a constant entry stay literal
                for t in idx..end {
                    entry.0.push(letters[t].0);
                }
            } else if j < pj {
                let z = z_values.len() as u16;
                z_values.push(Word::from_letters(letters[idx..end].iter().map(|t| t.0)));
                for slot in &mut z_of[idx..end] {
                    *slot = Some(z);
                }
                entry.0.push(Letter::v(z));
            } else {
                // partner block came first and owns the z
                let z = z_of[partner[idx]].expect("partner block registered");
                entry.0.push(Letter::v(z).inv());
            }
            idx = end;
        }
        entries.push(row);
    }
    let table = PartitionTable { entries, z_count: z_values.len() };
    let canon_map = canonical_renaming(&table);
    let table_c = table.canonical();
    let mut z_vals_c = vec![Word::empty(); table_c.z_count];
    for (old, (new, flip)) in canon_map {
        z_vals_c[new as usize] = z_values[old as usize].pow_sign(if flip { -1 } else { 1 });
    }
    let built = table_to_geq(s, &table_c)?;
    let mut u = vec![Word::empty(); built.geq.rho];
    // variable entries first so merged constant entries never overwrite them
    for pass_constants in [false, true] {
        for (i, row) in table_c.entries.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let r = s.equations[i].letters()[j];
                if (r.kind == Kind::Constant) != pass_constants {
                    continue;
                }
                for (k, &l) in v.letters().iter().enumerate() {
                    let it = built.letter_items[&(i, j, k)];
                    if !u[it - 1].is_empty() {
                        continue;
                    }
                    let l = if r.neg && r.kind == Kind::Variable { l.inv() } else { l };
                    u[it - 1] = match l.kind {
                        Kind::Constant => Word::letter(l),
                        Kind::Variable => z_vals_c[l.sym as usize].pow_sign(l.sign()),
                    };
                }
            }
        }
    }
    Ok(Traced { table: table_c, built, solution: u })
}

fn canonical_renaming(t: &PartitionTable) -> BTreeMap<u16, (u16, bool)> {
    let mut map: BTreeMap<u16, (u16, bool)> = BTreeMap::new();
    for row in &t.entries {
        for w in row {
            for l in w.letters() {
                if l.kind == Kind::Variable && !map.contains_key(&l.sym) {
                    let n = map.len() as u16;
                    map.insert(l.sym, (n, l.neg));
                }
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(t: &str) -> EquationSystem {
        EquationSystem::parse(t).unwrap()
    }

    #[test]
    fn documents_with_solutions() {
        let d = parse_document("constants: a b\n[x,y][b,a]\nsolution: x = babba, y = bab\n").unwrap();
        let sol = d.solution.unwrap();
        assert_eq!(d.system.alphabet.format(&sol[0]), d.system.alphabet.format(&d.system.alphabet.parse_word("babba").unwrap()));
        assert!(d.system.is_solution(&sol));
        assert!(parse_document("x y z").unwrap().solution.is_none());
        assert!(matches!(parse_document("x a y\nsolution: x = a"), Err(Error::MissingVariable(_))));
        assert!(parse_document("x y\nsolution: q = a, x = 1, y = 1").is_err());
    }

    #[test]
    fn parse_defaults() {
        let s = sys("[x,y][b,a]");
        assert_eq!(s.alphabet.constants, vec!["a", "b"]);
        assert_eq!(s.alphabet.variables, vec!["x", "y"]);
        assert_eq!(s.equations[0].len(), 8);
        let s = sys("constants: a\nvariables: u\nu a = a u");
        assert_eq!(s.format(), vec!["uaUA = 1"]);
    }

    #[test]
    fn xyz_contains_three_pair_table() {
        let s = sys("x*y*z");
        let ts = enumerate_partition_tables(&s, TableOptions::default()).unwrap();
        let z = |i: u16| Letter::v(i);
        let want = PartitionTable {
            entries: vec![vec![
                Word(vec![z(0), z(1)]),
                Word(vec![z(1).inv(), z(2)]),
                Word(vec![z(2).inv(), z(0).inv()]),
            ]],
            z_count: 3,
        };
        assert!(ts.contains(&want));
        assert!(ts.iter().all(|t| t.check(&s).is_ok()));
    }

    #[test]
    fn single_letter_equation() {
        let s = sys("x");
        let ts = enumerate_partition_tables(&s, TableOptions::default()).unwrap();
        assert_eq!(ts, vec![PartitionTable { entries: vec![vec![Word::empty()]], z_count: 0 }]);
    }

    #[test]
    fn constant_only_equation() {
        let s = sys("a = a");
        let ts = enumerate_partition_tables(&s, TableOptions::default()).unwrap();
        assert_eq!(ts.len(), 1);
        let g = table_to_geq(&s, &ts[0]).unwrap().geq;
        assert_eq!(g.constant_bases().count(), 1);
        assert_eq!(g.variable_bases().count(), 0);
    }

    #[test]
    fn budget_is_reported() {
        let s = sys("x*y*z");
        let r = enumerate_partition_tables(&s, TableOptions { cap: 3, ..Default::default() });
        assert!(matches!(r, Err(Error::BudgetExceeded { cap: 3, .. })));
    }

    #[test]
    fn trace_xyz() {
        let s = sys("constants: a b\nx*y*z");
        let a = s.alphabet.parse_word("a").unwrap();
        let w = vec![a.clone(), s.alphabet.parse_word("Ab").unwrap(), s.alphabet.parse_word("B").unwrap()];
        let tr = solution_to_table(&s, &w).unwrap();
        assert!(tr.built.geq.is_solution(&tr.solution));
        let img = tr.built.apply_graphical(&tr.solution, 3);
        assert_eq!(img, w.into_iter().map(Some).collect::<Vec<_>>());
        assert_eq!(tr.built.geq.rho, 4);
    }

    #[test]
    fn trace_rejects_trivial_component() {
        let s = sys("x");
        assert!(matches!(solution_to_table(&s, &[Word::empty()]), Err(Error::NotASolution(_))));
    }

    #[test]
    fn commutator_layout() {
        let s = sys("[x,y][b,a]");
        let w = vec![s.alphabet.parse_word("babba").unwrap(), s.alphabet.parse_word("bab").unwrap()];
        assert!(s.is_solution(&w));
        let tr = solution_to_table(&s, &w).unwrap();
        let g = &tr.built.geq;
        assert_eq!(g.rho, 10);
        let got: BTreeSet<String> = g.describe_equations(&s.alphabet.constants).into_iter().collect();
        let want: BTreeSet<String> = [
            "h1 = h7",
            "h2 = h8",
            "h5 = h6",
            "h1 h2 h3 h4 = h6 h7",
            "h5 = h8 h9 h10",
            "h3 = b",
            "h4 = a",
            "h9 = a",
            "h10 = b",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(got, want);
        assert!(g.is_solution(&tr.solution));
        assert!(g.is_formally_consistent());
    }
}
