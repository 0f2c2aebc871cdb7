//! Finite relational/functional structures: parsing, canonical rendering,
//! and the generated example families.
//!
//! Elements of a structure are the integers `0..n-1`. Relation symbols are
//! interpreted as sets of tuples, function symbols as total tables. All
//! string identities (tree nodes, torus coordinates) are resolved to
//! integer indices at generation time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

/// Interpretation of one relation symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub name: String,
    pub arity: usize,
    pub tuples: BTreeSet<Vec<usize>>,
}

/// Interpretation of one function symbol; the table is total on
/// `universe^arity`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Function {
    pub name: String,
    pub arity: usize,
    pub table: BTreeMap<Vec<usize>, usize>,
}

/// A finite structure with named interpretation tables.
///
/// Symbols keep their declaration order; canonical rendering preserves it
/// and sorts tuples lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Structure {
    name: String,
    universe: usize,
    relations: Vec<Relation>,
    functions: Vec<Function>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StructureError {
    #[error("duplicate symbol name `{0}`")]
    DuplicateSymbol(String),
    #[error("arity of `{0}` must be at least 1")]
    ZeroArity(String),
    #[error("`{symbol}`: expected {expected} entries, got {got}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        got: usize,
    },
    #[error("`{symbol}`: element {element} out of range for universe {universe}")]
    ElementOutOfRange {
        symbol: String,
        element: usize,
        universe: usize,
    },
    #[error("`{symbol}`: function table is partial ({got} of {expected} entries)")]
    PartialFunction {
        symbol: String,
        expected: u128,
        got: usize,
    },
    #[error("shift torus size {0} is not a power of two at least 2")]
    NotAPowerOfTwo(usize),
}

/// A structure-file parse failure, with its 1-based line number.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl Structure {
    pub fn new(name: impl Into<String>, universe: usize) -> Structure {
        Structure {
            name: name.into(),
            universe,
            relations: Vec::new(),
            functions: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    fn check_fresh(&self, name: &str) -> Result<(), StructureError> {
        if self.relations.iter().any(|r| r.name == name)
            || self.functions.iter().any(|f| f.name == name)
        {
            return Err(StructureError::DuplicateSymbol(name.to_string()));
        }
        Ok(())
    }

    pub fn add_relation(
        &mut self,
        name: impl Into<String>,
        arity: usize,
        tuples: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<(), StructureError> {
        let name = name.into();
        self.check_fresh(&name)?;
        if arity == 0 {
            return Err(StructureError::ZeroArity(name));
        }
        let mut set = BTreeSet::new();
        for t in tuples {
            if t.len() != arity {
                return Err(StructureError::ArityMismatch {
                    symbol: name,
                    expected: arity,
                    got: t.len(),
                });
            }
            if let Some(&e) = t.iter().find(|&&e| e >= self.universe) {
                return Err(StructureError::ElementOutOfRange {
                    symbol: name,
                    element: e,
                    universe: self.universe,
                });
            }
            set.insert(t);
        }
        self.relations.push(Relation { name, arity, tuples: set });
        Ok(())
    }

    pub fn add_function(
        &mut self,
        name: impl Into<String>,
        arity: usize,
        table: impl IntoIterator<Item = (Vec<usize>, usize)>,
    ) -> Result<(), StructureError> {
        let name = name.into();
        self.check_fresh(&name)?;
        if arity == 0 {
            return Err(StructureError::ZeroArity(name));
        }
        let mut map = BTreeMap::new();
        for (args, value) in table {
            if args.len() != arity {
                return Err(StructureError::ArityMismatch {
                    symbol: name,
                    expected: arity,
                    got: args.len(),
                });
            }
            if let Some(&e) = args.iter().chain(std::iter::once(&value)).find(|&&e| e >= self.universe) {
                return Err(StructureError::ElementOutOfRange {
                    symbol: name,
                    element: e,
                    universe: self.universe,
                });
            }
            map.insert(args, value);
        }
        let expected = (self.universe as u128).pow(arity as u32);
        if (map.len() as u128) != expected {
            return Err(StructureError::PartialFunction {
                symbol: name,
                expected,
                got: map.len(),
            });
        }
        self.functions.push(Function { name, arity, table: map });
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, ParseError> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("expected a non-negative integer, got `{tok}`")))
}

/// Parse a structure file. The grammar is line-based; `#` begins a comment
/// line and blank lines are ignored.
///
/// ```text
/// structure <name>
/// universe <n>
/// rel <name> <arity>
/// <e1> ... <e_arity>
/// end
/// fun <name> <arity>
/// <a1> ... <a_arity> -> <value>
/// end
/// ```
pub fn parse_structure(text: &str) -> Result<Structure, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file; expected `structure <name>`"))?;
    let name = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["structure", name] => name.to_string(),
        _ => return Err(parse_err(line, "expected `structure <name>`")),
    };

    let (line, uline) = lines
        .next()
        .ok_or_else(|| parse_err(line, "expected `universe <n>`"))?;
    let universe = match uline.split_whitespace().collect::<Vec<_>>()[..] {
        ["universe", n] => parse_usize(line, n)?,
        _ => return Err(parse_err(line, "expected `universe <n>`")),
    };

    let mut s = Structure::new(name, universe);
    while let Some((line, l)) = lines.next() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[..] {
            ["rel", rname, arity] => {
                let arity = parse_usize(line, arity)?;
                let mut tuples: Vec<Vec<usize>> = Vec::new();
                let mut closed = false;
                let mut last_line = line;
                for (tline, tl) in lines.by_ref() {
                    last_line = tline;
                    if tl == "end" {
                        closed = true;
                        break;
                    }
                    let mut tuple = Vec::new();
                    for tok in tl.split_whitespace() {
                        tuple.push(parse_usize(tline, tok)?);
                    }
                    s_check_tuple(tline, rname, arity, &tuple, universe)?;
                    tuples.push(tuple);
                }
                if !closed {
                    return Err(parse_err(last_line, format!("relation `{rname}` not closed by `end`")));
                }
                s.add_relation(rname, arity, tuples)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
            ["fun", fname, arity] => {
                let arity = parse_usize(line, arity)?;
                let mut entries: Vec<(Vec<usize>, usize)> = Vec::new();
                let mut closed = false;
                let mut last_line = line;
                for (tline, tl) in lines.by_ref() {
                    last_line = tline;
                    if tl == "end" {
                        closed = true;
                        break;
                    }
                    let parts: Vec<&str> = tl.split("->").collect();
                    if parts.len() != 2 {
                        return Err(parse_err(tline, "expected `<args> -> <value>`"));
                    }
                    let mut args = Vec::new();
                    for tok in parts[0].split_whitespace() {
                        args.push(parse_usize(tline, tok)?);
                    }
                    let vtoks: Vec<&str> = parts[1].split_whitespace().collect();
                    if vtoks.len() != 1 {
                        return Err(parse_err(tline, "expected a single value after `->`"));
                    }
                    let value = parse_usize(tline, vtoks[0])?;
                    s_check_tuple(tline, fname, arity, &args, universe)?;
                    if value >= universe {
                        return Err(parse_err(
                            tline,
                            format!("`{fname}`: element {value} out of range for universe {universe}"),
                        ));
                    }
                    entries.push((args, value));
                }
                if !closed {
                    return Err(parse_err(last_line, format!("function `{fname}` not closed by `end`")));
                }
                s.add_function(fname, arity, entries)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
            _ => return Err(parse_err(line, format!("unrecognized directive `{l}`"))),
        }
    }
    Ok(s)
}

fn s_check_tuple(
    line: usize,
    symbol: &str,
    arity: usize,
    tuple: &[usize],
    universe: usize,
) -> Result<(), ParseError> {
    if tuple.len() != arity {
        return Err(parse_err(
            line,
            format!("`{symbol}`: expected {arity} entries, got {}", tuple.len()),
        ));
    }
    if let Some(&e) = tuple.iter().find(|&&e| e >= universe) {
        return Err(parse_err(
            line,
            format!("`{symbol}`: element {e} out of range for universe {universe}"),
        ));
    }
    Ok(())
}

/// Render a structure in canonical form: symbols in declaration order,
/// tuples sorted lexicographically. `parse_structure` inverts this
/// bit-exactly.
pub fn render_structure(s: &Structure) -> String {
    let mut out = String::new();
    writeln!(out, "structure {}", s.name).unwrap();
    writeln!(out, "universe {}", s.universe).unwrap();
    for r in &s.relations {
        writeln!(out, "rel {} {}", r.name, r.arity).unwrap();
        for t in &r.tuples {
            let toks: Vec<String> = t.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{}", toks.join(" ")).unwrap();
        }
        writeln!(out, "end").unwrap();
    }
    for f in &s.functions {
        writeln!(out, "fun {} {}", f.name, f.arity).unwrap();
        for (args, value) in &f.table {
            let toks: Vec<String> = args.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{} -> {}", toks.join(" "), value).unwrap();
        }
        writeln!(out, "end").unwrap();
    }
    out
}

/// The binary tree of depth `d`: all binary strings of length `< d` in BFS
/// index order (index 0 is the empty string, the children of `i` are
/// `2i+1` and `2i+2`), with the successor relation
/// `S = {(a, a0), (a, a1)}`.
pub fn gen_tree(depth: usize) -> Structure {
    assert!(depth >= 1, "tree depth must be at least 1");
    let n = (1usize << depth) - 1;
    let mut s = Structure::new(format!("tree{depth}"), n);
    let mut tuples = Vec::new();
    for i in 0..n {
        for child in [2 * i + 1, 2 * i + 2] {
            if child < n {
                tuples.push(vec![i, child]);
            }
        }
    }
    s.add_relation("S", 2, tuples).expect("tree successor relation");
    s
}

/// The level tower on `2^{<n}` in BFS order: unary predicates `R1..Rn`
/// where `Ri` holds of the strings of length `n-i`, and the unary parent
/// function `f` with `f(root) = root`.
pub fn gen_levels(n: usize) -> Structure {
    assert!(n >= 1, "level count must be at least 1");
    let size = (1usize << n) - 1;
    let mut s = Structure::new(format!("levels{n}"), size);
    // BFS index i has length floor(log2(i+1)); level L occupies
    // indices 2^L - 1 .. 2^{L+1} - 2.
    for i in 1..=n {
        let level = n - i;
        let lo = (1usize << level) - 1;
        let hi = (1usize << (level + 1)) - 1;
        let tuples: Vec<Vec<usize>> = (lo..hi.min(size)).map(|e| vec![e]).collect();
        s.add_relation(format!("R{i}"), 1, tuples).expect("level predicate");
    }
    let table: Vec<(Vec<usize>, usize)> = (0..size)
        .map(|i| (vec![i], if i == 0 { 0 } else { (i - 1) / 2 }))
        .collect();
    s.add_function("f", 1, table).expect("parent function");
    s
}

/// The shift torus `Z_m x {0,1}^d` for `m` a power of two.
///
/// `E_k` (for every `2^k` dividing `m`, `k >= 1`) relates elements whose
/// torus coordinates agree mod `2^k`. `F` relates `(z, b_0..b_{d-1})` to
/// `(z+1 mod m, b_1..b_{d-1}c)` for both `c`.
///
/// This is a finite adaptation of the shift map on `Z x 2^omega`: no
/// finite total function can be surjective with fibres of size two, so the
/// two-sided shift is kept as the relation `F`, which has exactly two
/// successors and two predecessors at every element while preserving the
/// `E_k` geometry.
pub fn gen_shift(m: usize, d: usize) -> Result<Structure, StructureError> {
    if m < 2 || !m.is_power_of_two() {
        return Err(StructureError::NotAPowerOfTwo(m));
    }
    assert!(d >= 1, "word length must be at least 1");
    let words = 1usize << d;
    let n = m * words;
    let index = |z: usize, w: usize| z * words + w;
    let mut s = Structure::new(format!("shift{m}x{d}"), n);

    let log2m = m.trailing_zeros() as usize;
    for k in 1..=log2m {
        let modulus = 1usize << k;
        let mut tuples = Vec::new();
        for z in 0..m {
            for z2 in 0..m {
                if z % modulus == z2 % modulus {
                    for w in 0..words {
                        for w2 in 0..words {
                            tuples.push(vec![index(z, w), index(z2, w2)]);
                        }
                    }
                }
            }
        }
        s.add_relation(format!("E{k}"), 2, tuples)?;
    }

    // Word bits are little-endian: bit j of w is b_j. Shifting drops b_0
    // and appends c as the new top bit.
    let mut tuples = Vec::new();
    for z in 0..m {
        for w in 0..words {
            for c in 0..2usize {
                let w2 = (w >> 1) | (c << (d - 1));
                tuples.push(vec![index(z, w), index((z + 1) % m, w2)]);
            }
        }
    }
    s.add_relation("F", 2, tuples)?;
    Ok(s)
}
