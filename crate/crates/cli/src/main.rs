use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use fgeq::elim::{build_tree, Limits};
use fgeq::eqsys::{
    enumerate_partition_tables, generalized_equations, parse_document, solution_to_table, Document, TableOptions,
};
use fgeq::geq::{GeJson, GeneralizedEquation};
use fgeq::gog::{
    abelianization_invariants, collapse, conjugate_boundary, fold, is_reduced, parse_gword, slide, FoldData, GogJson,
    GraphOfGroups, Oriented,
};
use fgeq::oracle::{solve_geq, solve_system, Strategy};
use fgeq::periodic::{build_graphs, cycle_value_check, extract_structure, is_periodic_solution, validate_structure};
use fgeq::quadr::{is_quadratic, is_strictly_quadratic, parse_standard_quadratic, regularity};
use fgeq::transform::{self as tf, TransportRule};
use fgeq::word::{Alphabet, Word};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] fgeq::Error),
}

type Out = Result<String, CliError>;

#[derive(Parser)]
#[command(name = "fgeq", version, about = "Equations over free groups: partition tables, generalized equations, elimination")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a system file and print it as JSON.
    Parse { file: PathBuf },
    /// Enumerate partition tables.
    Tables {
        file: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
    },
    /// Emit the generalized equations of a system as a JSON array.
    Geqs {
        file: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
    },
    /// Classify a quadratic equation; the file's solution line is used as witness.
    Quad { file: PathBuf },
    /// Apply one transformation to a generalized equation.
    Transform(TransformArgs),
    /// Build the elimination tree.
    Elim(ElimArgs),
    /// Periodic structure of a solution.
    Periodic {
        geq: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        period: String,
    },
    /// Graph-of-groups moves and invariants.
    Gog {
        #[command(subcommand)]
        cmd: GogCmd,
    },
    /// Brute-force solutions.
    Oracle {
        #[command(subcommand)]
        cmd: OracleCmd,
    },
    /// Convert between text, JSON and DOT.
    Export {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Args)]
struct TransformArgs {
    geq: PathBuf,
    #[arg(value_enum)]
    op: Op,
    /// Numeric arguments of the move (boundaries and base ids).
    args: Vec<usize>,
    /// Solution (JSON array of item words) to push through the rule.
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    /// p λ q
    Et1,
    /// μ λ
    Et2,
    /// λ
    Et3,
    /// λ
    Et4,
    /// p λ
    Et5,
    /// start end
    D1,
    /// start end target
    D2,
    D3,
    D4,
    /// [carrier]
    D5,
    /// λ μ
    D6,
    /// μ
    Aux,
}

#[derive(Args)]
struct ElimArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 16)]
    depth: usize,
    #[arg(long, default_value_t = 10_000)]
    nodes: usize,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Member of GE(S) to start from when the file has no solution line.
    #[arg(long, default_value_t = 0)]
    geq_index: usize,
}

#[derive(Subcommand)]
enum GogCmd {
    /// Fundamental-group presentation.
    Present {
        file: PathBuf,
        #[arg(long)]
        simplify: bool,
    },
    /// Slide `edge` along `along`; `~name` is the reversed edge.
    Slide {
        file: PathBuf,
        #[arg(long)]
        edge: String,
        #[arg(long)]
        along: String,
        /// `;`-separated words in the generators of the edge group of `along`.
        #[arg(long, allow_hyphen_values = true)]
        witness: String,
    },
    /// Fold along an edge with a JSON description of the bigger subgroup.
    Fold {
        file: PathBuf,
        #[arg(long)]
        edge: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Conjugate the boundary monomorphism of an edge.
    Conjugate {
        file: PathBuf,
        #[arg(long)]
        edge: String,
        #[arg(long, allow_hyphen_values = true)]
        by: String,
    },
    /// Collapse an edge.
    Collapse {
        file: PathBuf,
        #[arg(long)]
        edge: String,
    },
    /// Abelianization invariants and reducedness.
    Abel { file: PathBuf },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Solutions of a system with values up to `--maxlen`.
    System {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        maxlen: usize,
    },
    /// Solutions of a generalized equation with items up to `--maxlen`.
    Geq {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        maxlen: usize,
        /// Alphabet size when the file names no constants.
        #[arg(long, default_value_t = 2)]
        constants: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(&cli) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(e)) => {
            eprintln!("{}", json!({ "code": e.code(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| fgeq::Error::Invalid(format!("{}: {e}", path.display())).into())
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn document(path: &Path) -> Result<Document, CliError> {
    Ok(parse_document(&read(path)?)?)
}

fn load_geq(path: &Path) -> Result<(GeneralizedEquation, Vec<String>), CliError> {
    let j: GeJson = from_json(path)?;
    Ok((GeneralizedEquation::from_json(&j)?, j.constants))
}

fn item_alphabet(constants: &[String]) -> Alphabet {
    Alphabet { constants: constants.to_vec(), variables: Vec::new() }
}

fn parse_words(path: &Path, al: &Alphabet) -> Result<Vec<Word>, CliError> {
    let raw: Vec<String> = from_json(path)?;
    Ok(raw.iter().map(|w| al.parse_word(w)).collect::<fgeq::Result<_>>()?)
}

fn run(cli: &Cli) -> Out {
    match &cli.cmd {
        Cmd::Parse { file } => {
            let d = document(file)?;
            let al = &d.system.alphabet;
            Ok(pretty(&json!({
                "constants": al.constants,
                "variables": al.variables,
                "equations": d.system.format(),
                "solution": d.solution.map(|w| w.iter().map(|v| al.format(v)).collect::<Vec<_>>()),
            })))
        }
        Cmd::Tables { file, cap } => {
            let s = document(file)?.system;
            let ts = enumerate_partition_tables(&s, TableOptions { cap: *cap, ..TableOptions::default() })?;
            let mut out = format!("{} tables\n", ts.len());
            for (k, t) in ts.iter().enumerate() {
                let _ = writeln!(out, "T{}:", k + 1);
                for row in t.format(&s) {
                    let _ = writeln!(out, "  {}", row.iter().map(|e| if e.is_empty() { "1".into() } else { e.clone() }).collect::<Vec<_>>().join(" | "));
                }
            }
            Ok(out)
        }
        Cmd::Geqs { file, cap } => {
            let s = document(file)?.system;
            let ms = generalized_equations(&s, TableOptions { cap: *cap, ..TableOptions::default() })?;
            let v: Vec<GeJson> = ms.iter().map(|m| m.built.geq.to_json(&s.alphabet.constants)).collect();
            Ok(pretty(&v))
        }
        Cmd::Quad { file } => {
            let d = document(file)?;
            let q = parse_standard_quadratic(&d.system)?;
            let r = regularity(&d.system, d.solution.as_deref())?;
            let mut v = serde_json::to_value(&q).expect("serializable");
            v["quadratic"] = json!(is_quadratic(&d.system));
            v["strictly_quadratic"] = json!(is_strictly_quadratic(&d.system));
            v["regularity"] = json!(r);
            Ok(pretty(&v))
        }
        Cmd::Transform(a) => transform(a, cli.seed),
        Cmd::Elim(a) => elim(a),
        Cmd::Periodic { geq, solution, period } => {
            let (g, constants) = load_geq(geq)?;
            let al = item_alphabet(&constants);
            let h = parse_words(solution, &al)?;
            let p = al.parse_word(period)?;
            let verdict = is_periodic_solution(&g, &h, &p)?;
            let ps = extract_structure(&g, &h, &p)?;
            let violations = validate_structure(&g, &ps);
            let graph = build_graphs(&ps);
            let cycles: Vec<Value> = graph
                .cycles
                .iter()
                .map(|c| match cycle_value_check(&ps, &graph, &h, &p, c) {
                    Ok(n) => json!({ "edge": c.edge, "base": c.base, "path": c.path, "exponent": n }),
                    Err(e) => json!({ "edge": c.edge, "base": c.base, "path": c.path, "error": e.to_string() }),
                })
                .collect();
            let adjacency: Vec<Value> =
                graph.edges.iter().map(|e| json!({ "item": e.item, "from": e.from, "to": e.to, "in_p": e.in_p })).collect();
            Ok(pretty(&json!({
                "verdict": verdict,
                "structure": ps.to_json(),
                "violations": violations,
                "graph": {
                    "vertices": graph.vertices,
                    "edges": adjacency,
                    "t0": graph.t0,
                    "tree": graph.tree,
                    "components": graph.components,
                    "connected": graph.is_connected(),
                },
                "cycles": cycles,
            })))
        }
        Cmd::Gog { cmd } => gog(cmd),
        Cmd::Oracle { cmd } => match cmd {
            OracleCmd::System { file, maxlen } => {
                let s = document(file)?.system;
                let sols = solve_system(&s, *maxlen)?;
                let al = &s.alphabet;
                let rows: Vec<Value> = sols
                    .iter()
                    .map(|w| {
                        let m: serde_json::Map<String, Value> =
                            al.variables.iter().zip(w).map(|(x, v)| (x.clone(), json!(al.format(v)))).collect();
                        Value::Object(m)
                    })
                    .collect();
                Ok(pretty(&json!({ "count": sols.len(), "maxlen": maxlen, "solutions": rows })))
            }
            OracleCmd::Geq { file, maxlen, constants } => {
                let (g, names) = load_geq(file)?;
                let n = if names.is_empty() { *constants } else { names.len() };
                let names: Vec<String> = if names.is_empty() { (0..n).map(|i| format!("c{i}")).collect() } else { names };
                let al = item_alphabet(&names);
                let sols = solve_geq(&g, n, *maxlen, Strategy::Propagate)?;
                let rows: Vec<Vec<String>> = sols.iter().map(|u| u.iter().map(|w| al.format(w)).collect()).collect();
                Ok(pretty(&json!({ "count": sols.len(), "maxlen": maxlen, "solutions": rows })))
            }
        },
        Cmd::Export { file, to } => export(file, *to),
    }
}

fn outcome(g: &GeneralizedEquation, r: &TransportRule, rho: usize, constants: &[String], sol: Option<&[Word]>) -> Value {
    let al = item_alphabet(constants);
    let mut v = json!({ "geq": g.to_json(constants), "rule": r.to_record(rho, constants) });
    if let Some(u) = sol {
        v["solution"] = match r.forward(u) {
            Some(w) => json!(w.iter().map(|x| al.format(x)).collect::<Vec<_>>()),
            None => Value::Null,
        };
    }
    v
}

fn transform(a: &TransformArgs, seed: u64) -> Out {
    let (g, constants) = load_geq(&a.geq)?;
    let sol = match &a.solution {
        Some(p) => Some(parse_words(p, &item_alphabet(&constants))?),
        None => None,
    };
    let need = |n: usize| -> Result<&[usize], CliError> {
        if a.args.len() == n {
            Ok(&a.args)
        } else {
            Err(CliError::Usage(format!("this move takes {n} numeric arguments, got {}", a.args.len())))
        }
    };
    let one = |r: fgeq::Result<(GeneralizedEquation, TransportRule)>| r.map(|x| vec![x]);
    let outs: Vec<(GeneralizedEquation, TransportRule)> = match a.op {
        Op::Et1 => {
            let x = need(3)?;
            one(tf::et1_cut(&g, (x[0], x[1], x[2])))?
        }
        Op::Et2 => {
            let x = need(2)?;
            one(tf::et2_transfer(&g, x[0], x[1]))?
        }
        Op::Et3 => one(tf::et3_remove_matched(&g, need(1)?[0]))?,
        Op::Et4 => one(tf::et4_remove_lonely(&g, need(1)?[0]))?,
        Op::Et5 => {
            let x = need(2)?;
            tf::et5_introduce_boundary(&g, x[0], x[1])?.into_iter().map(|o| (o.geq, o.rule)).collect()
        }
        Op::D1 => {
            let x = need(2)?;
            tf::d1_close_section(&g, x[0], x[1])?
        }
        Op::D2 => {
            let x = need(3)?;
            one(tf::d2_transport(&g, x[0], x[1], x[2]))?
        }
        Op::D3 => {
            need(0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            one(tf::d3_complete_cut(&g, Some(&mut rng)))?
        }
        Op::D4 => {
            need(0)?;
            let (k, removed) = tf::d4_kernel(&g)?;
            return Ok(pretty(&json!({ "kernel": k.to_json(&constants), "removed": removed })));
        }
        Op::D5 => {
            let carrier = match a.args.as_slice() {
                [] => None,
                [c] => Some(*c),
                _ => return Err(CliError::Usage("d5 takes at most one argument".into())),
            };
            tf::d5_entire_all(&g, carrier)?.into_iter().map(|o| (o.geq, o.rule)).collect()
        }
        Op::D6 => {
            let x = need(2)?;
            one(tf::d6_identify_constants(&g, x[0], x[1]))?
        }
        Op::Aux => one(tf::auxiliary_equation(&g, need(1)?[0]).map(|(o, r, _)| (o, r)))?,
    };
    let v: Vec<Value> = outs.iter().map(|(o, r)| outcome(o, r, g.rho, &constants, sol.as_deref())).collect();
    Ok(pretty(&json!({ "outcomes": v })))
}

fn elim(a: &ElimArgs) -> Out {
    let (g, constants) = if a.file.extension().is_some_and(|e| e == "json") {
        load_geq(&a.file)?
    } else {
        let d = document(&a.file)?;
        let s = &d.system;
        let g = match &d.solution {
            Some(w) => solution_to_table(s, w)?.built.geq,
            None => {
                let ms = generalized_equations(s, TableOptions::default())?;
                let n = ms.len();
                ms.into_iter()
                    .nth(a.geq_index)
                    .ok_or_else(|| CliError::Usage(format!("--geq-index {} out of range (|GE(S)| = {n})", a.geq_index)))?
                    .built
                    .geq
            }
        };
        (g, s.alphabet.constants.clone())
    };
    let limits = Limits { depth: a.depth, nodes: a.nodes, ..Limits::default() };
    let t = build_tree(&g, &limits);
    if let Some(p) = &a.dot {
        write(p, &t.to_dot())?;
    }
    if let Some(p) = &a.json {
        write(p, &pretty(&t.to_json(&constants)))?;
    }
    let mut by_status = std::collections::BTreeMap::new();
    for n in &t.nodes {
        *by_status.entry(fgeq::elim::status_name(n.status)).or_insert(0usize) += 1;
    }
    Ok(pretty(&json!({ "nodes": t.nodes.len(), "edges": t.edges.len(), "status": by_status })))
}

fn oriented(g: &GraphOfGroups, name: &str) -> Result<Oriented, CliError> {
    let (rev, n) = match name.strip_prefix('~') {
        Some(n) => (true, n),
        None => (false, name),
    };
    let edge = g
        .edges
        .iter()
        .position(|e| e.name == n)
        .ok_or_else(|| fgeq::Error::Invalid(format!("no edge named `{n}`")))?;
    Ok(Oriented { edge, rev })
}

fn gog_out(g: &GraphOfGroups) -> Out {
    Ok(pretty(&g.to_json(None)))
}

fn gog(cmd: &GogCmd) -> Out {
    let load = |p: &Path| -> Result<(GraphOfGroups, Option<BTreeSet<usize>>), CliError> {
        let j: GogJson = from_json(p)?;
        let tree = j.tree.as_ref().map(|t| t.iter().copied().collect());
        Ok((GraphOfGroups::from_json(&j)?, tree))
    };
    match cmd {
        GogCmd::Present { file, simplify } => {
            let (g, tree) = load(file)?;
            let tree = tree.unwrap_or_else(|| g.default_tree());
            let p = g.fundamental_presentation(&tree)?;
            let p = if *simplify { p.simplify() } else { p };
            Ok(format!("{p}\n"))
        }
        GogCmd::Slide { file, edge, along, witness } => {
            let (g, _) = load(file)?;
            let e1 = oriented(&g, edge)?;
            let e2 = oriented(&g, along)?;
            let gens = &g.edges[e2.edge].group.generators;
            let ws = witness.split(';').map(|w| parse_gword(w.trim(), gens)).collect::<fgeq::Result<Vec<_>>>()?;
            gog_out(&slide(&g, e1, e2, &ws)?)
        }
        GogCmd::Fold { file, edge, data } => {
            let (g, _) = load(file)?;
            let e = oriented(&g, edge)?;
            let d: FoldData = from_json(data)?;
            gog_out(&fold(&g, e, &d)?)
        }
        GogCmd::Conjugate { file, edge, by } => {
            let (g, _) = load(file)?;
            let e = oriented(&g, edge)?;
            let h = parse_gword(by, &g.vertices[g.origin(e)].group.generators)?;
            gog_out(&conjugate_boundary(&g, e, &h)?)
        }
        GogCmd::Collapse { file, edge } => {
            let (g, _) = load(file)?;
            let e = oriented(&g, edge)?;
            gog_out(&collapse(&g, e.edge)?)
        }
        GogCmd::Abel { file } => {
            let (g, tree) = load(file)?;
            let tree = tree.unwrap_or_else(|| g.default_tree());
            let p = g.fundamental_presentation(&tree)?;
            let inv = abelianization_invariants(&p);
            Ok(pretty(&json!({ "rank": inv.rank, "torsion": inv.torsion, "reducedness": is_reduced(&g)? })))
        }
    }
}

fn geq_dot(g: &GeneralizedEquation, constants: &[String]) -> String {
    let mut s = String::from("digraph geq {\n  rankdir=LR;\n  node [shape=circle];\n");
    for p in 1..=g.rho + 1 {
        let _ = writeln!(s, "  b{p} [label=\"{p}\"];");
    }
    for i in 1..=g.rho {
        let _ = writeln!(s, "  b{} -> b{} [label=\"h{}\", weight=10];", i, i + 1, i);
    }
    let mut bases: Vec<_> = g.bases.iter().collect();
    bases.sort_by_key(|b| b.id);
    for b in bases {
        let label = match b.label() {
            Some(l) => item_alphabet(constants).format(&Word::letter(l)),
            None => format!("{}{}", b.id, if b.eps < 0 { "-" } else { "+" }),
        };
        let _ = writeln!(s, "  b{} -> b{} [label=\"{}\", style=dashed, constraint=false];", b.alpha, b.beta, label);
    }
    s.push_str("}\n");
    s
}

fn export(file: &Path, to: Format) -> Out {
    if file.extension().is_some_and(|e| e == "json") {
        let (g, constants) = load_geq(file)?;
        return Ok(match to {
            Format::Json => pretty(&g.to_json(&constants)),
            Format::Text => g.describe_equations(&constants).join("\n") + "\n",
            Format::Dot => geq_dot(&g, &constants),
        });
    }
    let d = document(file)?;
    let s = &d.system;
    match to {
        Format::Text => {
            let mut out = format!("constants: {}\nvariables: {}\n", s.alphabet.constants.join(" "), s.alphabet.variables.join(" "));
            for e in &s.equations {
                let _ = writeln!(out, "{}", s.alphabet.format(e));
            }
            if let Some(w) = &d.solution {
                let parts: Vec<String> =
                    s.alphabet.variables.iter().zip(w).map(|(x, v)| format!("{x} = {}", s.alphabet.format(v))).collect();
                let _ = writeln!(out, "solution: {}", parts.join(", "));
            }
            Ok(out)
        }
        Format::Json => Ok(pretty(s)),
        Format::Dot => Err(CliError::Usage("DOT export needs a generalized equation (.json)".into())),
    }
}
