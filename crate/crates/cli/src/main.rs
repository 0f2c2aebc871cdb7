//! Batch front door for the workbench: generate structures, run the
//! checkers, and emit deterministic reports.
//!
//! Every subcommand is a thin shell over exactly one library operation.
//! Exit codes: 0 success, 1 usage or input data error, 2 internal
//! inconsistency (a mathematically impossible failure, i.e. a library
//! bug), 3 checker counterexample (reserved; unreachable for finite
//! inputs).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use corrlab::autgroup;
use corrlab::cofinite::{self, Loc};
use corrlab::corrcalc::{self, CorrError, CorrFile, Correspondence};
use corrlab::finstruct::{self, Structure};
use corrlab::repair;
use corrlab::unimodlab::{self, UnimodError};

#[derive(Parser)]
#[command(
    name = "corrlab",
    version,
    about = "Exact correspondence calculus over finite and symbolic structures"
)]
struct Cli {
    /// Emit a machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an example structure and print its canonical file.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Compute automorphism generators of a structure.
    Aut {
        file: PathBuf,
        /// Elements fixed pointwise, comma separated.
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
    },
    /// Compute element orbits (or ordered pair orbits with --pairs).
    Orbits {
        file: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
        /// Partition ordered pairs instead of elements.
        #[arg(long)]
        pairs: bool,
    },
    /// Correspondence calculus over .corr files.
    Corr {
        #[command(subcommand)]
        op: CorrOp,
    },
    /// Measurability, commensurability and unimodularity checkers.
    Unimod {
        #[command(subcommand)]
        op: UnimodOp,
    },
    /// Symbolic infinite sets and eventually-uniform maps.
    Sym {
        #[command(subcommand)]
        op: SymOp,
    },
    /// Constructive fibre repair and its verifier.
    Repair {
        #[command(subcommand)]
        op: RepairOp,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    /// Binary tree of the given depth with the successor relation S.
    Tree {
        #[arg(long)]
        depth: usize,
    },
    /// Level tower on 2^{<n} with predicates R1..Rn and the parent map f.
    Levels {
        #[arg(long)]
        n: usize,
    },
    /// Shift torus Z_m x {0,1}^d with relations E_k and F.
    Shift {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: usize,
    },
}

#[derive(Subcommand)]
enum CorrOp {
    /// Per-element fibre counts on both sides.
    Fibres { file: PathBuf },
    /// Report (k, l) when all fibres are constant and positive.
    Uniform { file: PathBuf },
    /// The exact ratio k/l of a uniform correspondence.
    Ratio { file: PathBuf },
    /// Relational composition of two correspondence files.
    Compose { first: PathBuf, second: PathBuf },
    /// Split an invariant correspondence into complete components.
    Decompose {
        file: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
    },
    /// The product correspondence of two uniform correspondences.
    Product { first: PathBuf, second: PathBuf },
    /// Check |C| = |X|*k = |Y|*l exactly.
    Doublecount { file: PathBuf },
}

#[derive(Subcommand)]
enum UnimodOp {
    /// Check balance of every pair orbit over all parameter sets up to a
    /// size bound.
    Check {
        file: PathBuf,
        #[arg(long)]
        max_params: usize,
    },
    /// Check measurability of the orbit containing an element.
    Measurable {
        file: PathBuf,
        #[arg(long)]
        orbit_of: usize,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
    },
    /// The common ratio between the orbits of two elements.
    Commensurable {
        file: PathBuf,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
    },
    /// The block ledger of a uniform invariant correspondence.
    Ledger {
        structure: PathBuf,
        corr: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<usize>,
    },
}

#[derive(Subcommand)]
enum SymOp {
    /// Evaluate the sets and maps of a symbolic spec on a finite slice.
    Materialize {
        spec: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// Eventual fibre sizes and exceptional fibres of every map in a
    /// spec, cross-checked against slice counting at the given depth.
    Fibres {
        spec: PathBuf,
        #[arg(long)]
        depth: usize,
    },
}

#[derive(Subcommand)]
enum RepairOp {
    /// Build a repair certificate from two eventually-uniform maps.
    Run {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a certificate by brute-force counting on a slice.
    Verify {
        cert: PathBuf,
        #[arg(long)]
        depth: usize,
    },
}

enum CliError {
    Data(String),
    Internal(String),
    Counterexample(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Counterexample(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Internal(m) | CliError::Counterexample(m) => m,
        }
    }
}

impl From<CorrError> for CliError {
    fn from(e: CorrError) -> CliError {
        match e {
            CorrError::Internal(_) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<UnimodError> for CliError {
    fn from(e: UnimodError) -> CliError {
        match e {
            UnimodError::Internal(_) | UnimodError::Corr(CorrError::Internal(_)) => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<repair::RepairError> for CliError {
    fn from(e: repair::RepairError) -> CliError {
        match e {
            repair::RepairError::Internal(_) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    schema: &'static str,
    command: String,
    payload: T,
}

fn emit<T: Serialize>(json: bool, command: &str, payload: T, text: String) {
    if json {
        let report = Report { schema: "corrlab.report/1", command: command.to_string(), payload };
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    } else {
        print!("{text}");
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_structure(path: &Path) -> Result<Structure, CliError> {
    finstruct::parse_structure(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_corr(path: &Path) -> Result<CorrFile, CliError> {
    corrcalc::parse_corr_file(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn fix_set(fix: &[usize], universe: usize) -> Result<BTreeSet<usize>, CliError> {
    let set: BTreeSet<usize> = fix.iter().copied().collect();
    if let Some(&bad) = set.iter().find(|&&e| e >= universe) {
        return Err(CliError::Data(format!(
            "fixed element {bad} is outside the universe 0..{universe}"
        )));
    }
    Ok(set)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen { family } => {
            let s = match family {
                GenFamily::Tree { depth } => {
                    if *depth == 0 {
                        return Err(CliError::Data("tree depth must be at least 1".into()));
                    }
                    finstruct::gen_tree(*depth)
                }
                GenFamily::Levels { n } => {
                    if *n == 0 {
                        return Err(CliError::Data("level count must be at least 1".into()));
                    }
                    finstruct::gen_levels(*n)
                }
                GenFamily::Shift { m, d } => {
                    if *d == 0 {
                        return Err(CliError::Data("word length must be at least 1".into()));
                    }
                    finstruct::gen_shift(*m, *d).map_err(data_err)?
                }
            };
            let text = finstruct::render_structure(&s);
            emit(cli.json, "gen", &s, text);
            Ok(())
        }
        Command::Aut { file, fix } => {
            let s = load_structure(file)?;
            let fixed = fix_set(fix, s.universe())?;
            let gens = autgroup::automorphisms(&s, &fixed);
            let mut text = format!(
                "automorphism generators of {} fixing {:?}\ndegree {}\ngenerators {}\n",
                s.name(),
                fixed,
                gens.degree(),
                gens.generators().len()
            );
            for g in gens.generators() {
                let images: Vec<String> = g.iter().map(|x| x.to_string()).collect();
                writeln!(text, "  {}", images.join(" ")).unwrap();
            }
            emit(cli.json, "aut", &gens, text);
            Ok(())
        }
        Command::Orbits { file, fix, pairs } => {
            let s = load_structure(file)?;
            let n = s.universe();
            let fixed = fix_set(fix, n)?;
            if *pairs {
                let orbits = autgroup::pair_orbits(&s, &fixed);
                let decoded: Vec<Vec<(usize, usize)>> = orbits
                    .blocks()
                    .iter()
                    .map(|b| b.iter().map(|&id| autgroup::pair_of_id(n, id)).collect())
                    .collect();
                let mut text = format!(
                    "pair orbits of {} fixing {:?}: {} blocks\n",
                    s.name(),
                    fixed,
                    decoded.len()
                );
                for (i, block) in decoded.iter().enumerate() {
                    let elems: Vec<String> =
                        block.iter().map(|(x, y)| format!("({x},{y})")).collect();
                    writeln!(text, "  block {i:<4} size {:<5} {}", block.len(), elems.join(" "))
                        .unwrap();
                }
                emit(cli.json, "orbits", &decoded, text);
            } else {
                let orbits = autgroup::element_orbits(&s, &fixed);
                let mut text = format!(
                    "element orbits of {} fixing {:?}: {} blocks\n",
                    s.name(),
                    fixed,
                    orbits.block_count()
                );
                for (i, block) in orbits.blocks().iter().enumerate() {
                    let elems: Vec<String> = block.iter().map(|x| x.to_string()).collect();
                    writeln!(text, "  block {i:<4} size {:<5} {}", block.len(), elems.join(" "))
                        .unwrap();
                }
                emit(cli.json, "orbits", &orbits, text);
            }
            Ok(())
        }
        Command::Corr { op } => run_corr(cli, op),
        Command::Unimod { op } => run_unimod(cli, op),
        Command::Sym { op } => run_sym(cli, op),
        Command::Repair { op } => run_repair(cli, op),
    }
}

fn corr_summary(name: &str, c: &Correspondence) -> String {
    format!(
        "{name}: |dom| {} |cod| {} pairs {}\n",
        c.domain().len(),
        c.codomain().len(),
        c.pairs().len()
    )
}

fn run_corr(cli: &Cli, op: &CorrOp) -> Result<(), CliError> {
    match op {
        CorrOp::Fibres { file } => {
            let cf = load_corr(file)?;
            let f = corrcalc::fibres(&cf.corr);
            let mut text = corr_summary(&cf.name, &cf.corr);
            writeln!(text, "{:<12} {:<8} {:<8}", "elem", "left", "right").unwrap();
            for (e, v) in &f.left {
                let right = f
                    .right
                    .get(e)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "-".to_string());
                writeln!(text, "{:<12} {:<8} {:<8}", e.to_string(), v, right).unwrap();
            }
            for (e, v) in &f.right {
                if !f.left.contains_key(e) {
                    writeln!(text, "{:<12} {:<8} {:<8}", e.to_string(), "-", v).unwrap();
                }
            }
            let hist: Vec<String> = f.left_hist.iter().map(|(s, c)| format!("{s}x{c}")).collect();
            writeln!(text, "left histogram  {}", hist.join(" ")).unwrap();
            let hist: Vec<String> = f.right_hist.iter().map(|(s, c)| format!("{s}x{c}")).collect();
            writeln!(text, "right histogram {}", hist.join(" ")).unwrap();
            emit(cli.json, "corr fibres", &f, text);
            Ok(())
        }
        CorrOp::Uniform { file } => {
            let cf = load_corr(file)?;
            let u = corrcalc::is_uniform(&cf.corr);
            let text = match u {
                Some((k, l)) => format!("{}: uniform ({k}, {l})\n", cf.name),
                None => format!("{}: not uniform\n", cf.name),
            };
            emit(cli.json, "corr uniform", &u, text);
            Ok(())
        }
        CorrOp::Ratio { file } => {
            let cf = load_corr(file)?;
            let r = corrcalc::ratio(&cf.corr)?;
            let text = format!("{}: ratio {r}\n", cf.name);
            emit(cli.json, "corr ratio", &r, text);
            Ok(())
        }
        CorrOp::Compose { first, second } => {
            let a = load_corr(first)?;
            let b = load_corr(second)?;
            let composite = corrcalc::compose(&a.corr, &b.corr)?;
            let out = CorrFile {
                name: format!("{}_{}", a.name, b.name),
                structure: a.structure.clone(),
                corr: composite,
            };
            let rendered = corrcalc::render_corr_file(&out);
            emit(
                cli.json,
                "corr compose",
                serde_json::json!({
                    "uniform": corrcalc::is_uniform(&out.corr),
                    "corr_file": rendered,
                }),
                rendered.clone(),
            );
            Ok(())
        }
        CorrOp::Decompose { file, structure, fix } => {
            let cf = load_corr(file)?;
            let s = load_structure(structure)?;
            let fixed = fix_set(fix, s.universe())?;
            let comps = corrcalc::decompose_complete(&s, &fixed, &cf.corr)?;
            let mut text = format!("{}: {} complete components\n", cf.name, comps.len());
            let mut payload = Vec::new();
            for (i, comp) in comps.iter().enumerate() {
                writeln!(
                    text,
                    "  component {i:<4} pairs {:<6} k {:<4} l {:<4}",
                    comp.corr.pairs().len(),
                    comp.k,
                    comp.l
                )
                .unwrap();
                payload.push(serde_json::json!({
                    "pairs": comp.corr.pairs().len(),
                    "k": comp.k,
                    "l": comp.l,
                }));
            }
            emit(cli.json, "corr decompose", payload, text);
            Ok(())
        }
        CorrOp::Product { first, second } => {
            let a = load_corr(first)?;
            let b = load_corr(second)?;
            let p = corrcalc::product(&a.corr, &b.corr)?;
            let (k, l) = corrcalc::is_uniform(&p).ok_or_else(|| {
                CliError::Internal("product of uniform factors must be uniform".into())
            })?;
            let mut text = corr_summary(&format!("{}x{}", a.name, b.name), &p);
            writeln!(text, "uniform ({k}, {l})").unwrap();
            for (x, y) in p.pairs() {
                writeln!(text, "pair {x} {y}").unwrap();
            }
            emit(
                cli.json,
                "corr product",
                serde_json::json!({
                    "k": k,
                    "l": l,
                    "pairs": p.pairs().len(),
                }),
                text,
            );
            Ok(())
        }
        CorrOp::Doublecount { file } => {
            let cf = load_corr(file)?;
            let dc = corrcalc::double_count_check(&cf.corr)?;
            let text = format!(
                "{}: |C| {} = |X|*k {}*{} = |Y|*l {}*{}\n",
                cf.name, dc.pairs, dc.domain_size, dc.k, dc.codomain_size, dc.l
            );
            emit(cli.json, "corr doublecount", &dc, text);
            Ok(())
        }
    }
}

fn run_unimod(cli: &Cli, op: &UnimodOp) -> Result<(), CliError> {
    match op {
        UnimodOp::Check { file, max_params } => {
            let s = load_structure(file)?;
            let report = unimodlab::check_unimodular(&s, *max_params);
            let mut text = format!(
                "unimodularity of {} over all parameter sets up to size {}\n",
                report.structure, report.max_params
            );
            writeln!(text, "checked pair orbits {}", report.entries.len()).unwrap();
            writeln!(text, "verdict {}", if report.verdict { "true" } else { "false" }).unwrap();
            if let Some(ce) = &report.counterexample {
                writeln!(
                    text,
                    "counterexample: a {} b {} over {:?}: m(a/Ab) {} != m(b/Aa) {}",
                    ce.a, ce.b, ce.params, ce.m_a_over_b, ce.m_b_over_a
                )
                .unwrap();
            }
            let verdict = report.verdict;
            emit(cli.json, "unimod check", &report, text);
            if !verdict {
                return Err(CliError::Counterexample(
                    "unimodularity counterexample found (impossible on finite structures)".into(),
                ));
            }
            Ok(())
        }
        UnimodOp::Measurable { file, orbit_of, fix } => {
            let s = load_structure(file)?;
            let fixed = fix_set(fix, s.universe())?;
            if *orbit_of >= s.universe() {
                return Err(CliError::Data(format!("element {orbit_of} outside the universe")));
            }
            let report = unimodlab::measurable(&s, &fixed, *orbit_of);
            let mut text = format!(
                "measurability of the orbit of {} over {:?} (orbit size {})\n",
                orbit_of,
                fixed,
                report.orbit.len()
            );
            for e in &report.entries {
                writeln!(
                    text,
                    "  orbit at ({},{}) k {:<4} l {:<4} {}",
                    e.orbit_repr.0,
                    e.orbit_repr.1,
                    e.k,
                    e.l,
                    if e.balanced { "balanced" } else { "unbalanced" }
                )
                .unwrap();
            }
            writeln!(text, "verdict {}", if report.verdict { "true" } else { "false" }).unwrap();
            let verdict = report.verdict;
            emit(cli.json, "unimod measurable", &report, text);
            if !verdict {
                return Err(CliError::Counterexample(
                    "measurability counterexample found (impossible on finite structures)".into(),
                ));
            }
            Ok(())
        }
        UnimodOp::Commensurable { file, p, q, fix } => {
            let s = load_structure(file)?;
            let fixed = fix_set(fix, s.universe())?;
            if *p >= s.universe() || *q >= s.universe() {
                return Err(CliError::Data("orbit selector outside the universe".into()));
            }
            let m = unimodlab::commensurability(&s, &fixed, *p, *q)?;
            let text = format!("m between the orbits of {p} and {q} over {fixed:?}: {m}\n");
            emit(cli.json, "unimod commensurable", &m, text);
            Ok(())
        }
        UnimodOp::Ledger { structure, corr, fix } => {
            let s = load_structure(structure)?;
            let cf = load_corr(corr)?;
            let fixed = fix_set(fix, s.universe())?;
            let ledger = unimodlab::block_ledger(&s, &fixed, &cf.corr)?;
            let mut text = format!(
                "block ledger of {} on {}: k_C {} = l_C {}\n",
                cf.name,
                s.name(),
                ledger.k_c,
                ledger.l_c
            );
            writeln!(text, "orbits {:?} sizes {:?}", ledger.orbit_reprs, ledger.orbit_sizes)
                .unwrap();
            let ms: Vec<String> = ledger.m.iter().map(|m| m.to_string()).collect();
            writeln!(text, "m {} mu {}", ms.join(" "), ledger.mu).unwrap();
            for (&(i, j), b) in &ledger.blocks {
                writeln!(text, "  block ({i},{j}) k {:<4} l {:<4} pairs {}", b.k, b.l, b.pairs)
                    .unwrap();
            }
            emit(cli.json, "unimod ledger", &ledger, text);
            Ok(())
        }
    }
}

fn run_sym(cli: &Cli, op: &SymOp) -> Result<(), CliError> {
    match op {
        SymOp::Materialize { spec, depth } => {
            let parsed = cofinite::parse_symspec(&read(spec)?).map_err(data_err)?;
            let mut text = String::new();
            let mut payload = serde_json::Map::new();
            for (name, set) in &parsed.sets {
                let slice = cofinite::materialize_set(set, *depth);
                writeln!(text, "symset {name}: {} elements at depth {depth}", slice.len())
                    .unwrap();
                let rendered: Vec<String> = slice.iter().map(|l| l.to_string()).collect();
                for chunk in rendered.chunks(8) {
                    writeln!(text, "  {}", chunk.join(" ")).unwrap();
                }
                payload.insert(
                    format!("set:{name}"),
                    serde_json::to_value(&slice).expect("serializable"),
                );
            }
            for (name, map) in &parsed.maps {
                let m = cofinite::materialize_map(map, *depth);
                writeln!(text, "symmap {name}: {} entries at depth {depth}", m.entries.len())
                    .unwrap();
                for (x, y, inside) in &m.entries {
                    let mark = if *inside { "" } else { "  (beyond slice)" };
                    writeln!(text, "  {x} -> {y}{mark}").unwrap();
                }
                payload
                    .insert(format!("map:{name}"), serde_json::to_value(&m).expect("serializable"));
            }
            emit(cli.json, "sym materialize", payload, text);
            Ok(())
        }
        SymOp::Fibres { spec, depth } => {
            let parsed = cofinite::parse_symspec(&read(spec)?).map_err(data_err)?;
            if parsed.maps.is_empty() {
                return Err(CliError::Data("spec contains no symmap".into()));
            }
            let mut text = String::new();
            let mut payload = serde_json::Map::new();
            for (name, map) in &parsed.maps {
                let ef = cofinite::eventual_fibres(map);
                writeln!(text, "symmap {name}:").unwrap();
                for (ray, k) in &ef.per_ray {
                    writeln!(text, "  eventual fibre on ray {ray}: {k}").unwrap();
                }
                match ef.uniform {
                    Some(k) => writeln!(text, "  eventually uniform: {k}").unwrap(),
                    None => writeln!(text, "  eventually uniform: no").unwrap(),
                }
                if ef.exceptional.is_empty() {
                    writeln!(text, "  exceptional fibres: none").unwrap();
                } else {
                    for (loc, size) in &ef.exceptional {
                        writeln!(text, "  exceptional fibre at {loc}: size {size}").unwrap();
                    }
                }
                // Exceptional fibres whose index fits in the slice must
                // count back exactly from the materialized table.
                let mut counts = std::collections::BTreeMap::new();
                for (_, img, _) in cofinite::materialize_map(map, *depth).entries {
                    *counts.entry(img).or_insert(0usize) += 1;
                }
                let mut agree = true;
                for (loc, size) in &ef.exceptional {
                    if let Loc::Ray(_, i) = loc {
                        if *i >= *depth {
                            continue;
                        }
                    }
                    if counts.get(loc).copied().unwrap_or(0) > *size {
                        agree = false;
                    }
                }
                writeln!(
                    text,
                    "  slice cross-check at depth {depth}: {}",
                    if agree { "consistent" } else { "inconsistent" }
                )
                .unwrap();
                if !agree {
                    return Err(CliError::Internal(
                        "symbolic fibres disagree with slice counting".into(),
                    ));
                }
                payload.insert(name.clone(), serde_json::to_value(&ef).expect("serializable"));
            }
            emit(cli.json, "sym fibres", payload, text);
            Ok(())
        }
    }
}

fn load_map(path: &Path) -> Result<cofinite::SymbolicMap, CliError> {
    let parsed = cofinite::parse_symspec(&read(path)?).map_err(data_err)?;
    match parsed.maps.len() {
        0 => Err(CliError::Data(format!("{}: spec contains no symmap", path.display()))),
        1 => Ok(parsed.maps.into_iter().next().expect("one map").1),
        n => Err(CliError::Data(format!(
            "{}: spec contains {n} maps; repair expects exactly one per file",
            path.display()
        ))),
    }
}

fn run_repair(cli: &Cli, op: &RepairOp) -> Result<(), CliError> {
    match op {
        RepairOp::Run { f, g, out } => {
            let fmap = load_map(f)?;
            let gmap = load_map(g)?;
            let cert = repair::repair(&fmap, &gmap)?;
            let rendered = repair::render_certificate(&cert);
            std::fs::write(out, &rendered)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", out.display())))?;
            let text = format!(
                "repair certificate written to {}\ncase {} (internal {}{}) k {} l {} n {} n' {} |P| {} |Q| {}\n",
                out.display(),
                cert.case,
                cert.internal_case,
                if cert.swapped { ", roles swapped" } else { "" },
                cert.k,
                cert.l,
                cert.n,
                cert.n_prime,
                cert.p_members.len(),
                cert.q_members.len()
            );
            emit(
                cli.json,
                "repair run",
                serde_json::json!({
                    "out": out.display().to_string(),
                    "case": cert.case,
                    "internal_case": cert.internal_case,
                    "swapped": cert.swapped,
                    "k": cert.k,
                    "l": cert.l,
                    "n": cert.n,
                    "n_prime": cert.n_prime,
                    "p_size": cert.p_members.len(),
                    "q_size": cert.q_members.len(),
                }),
                text,
            );
            Ok(())
        }
        RepairOp::Verify { cert, depth } => {
            let parsed = repair::parse_certificate(&read(cert)?).map_err(data_err)?;
            let report = repair::verify(&parsed, *depth).map_err(data_err)?;
            let text = format!(
                "certificate accepted at depth {}\nsources checked {}\ncomplete fibres: f' {} g' {}\n",
                report.depth,
                report.sources_checked,
                report.complete_fibres_f,
                report.complete_fibres_g
            );
            emit(cli.json, "repair verify", &report, text);
            Ok(())
        }
    }
}
