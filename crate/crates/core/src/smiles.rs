//! SMILES subset parser.
//!
//! Supported: organic-subset atoms (aromatic lowercase included), bracket
//! atoms carrying an element, an optional hydrogen count and a charge,
//! bond symbols `- = # :` (plus `/ \` read as plain single bonds), ring
//! closures `1`–`9` and `%nn`, and branches. Hydrogens stay implicit.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::graph::MolGraph;
use crate::tensor::Tensor;

/// Length of a node feature vector.
pub const FEATURE_LEN: usize = 24;

const DEGREE_OFFSET: usize = 10;
const AROMATIC_SLOT: usize = 16;
const CHARGE_OFFSET: usize = 17;
const OUT_DEGREE_SLOT: usize = 22;
const IN_DEGREE_SLOT: usize = 23;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    EmptyInput,
    #[error("unknown character at byte {0}")]
    UnknownCharacter(usize),
    #[error("unmatched branch at byte {0}")]
    UnmatchedBranch(usize),
    #[error("ring closure {0} never closed")]
    UnclosedRing(u32),
    #[error("unsupported bracket atom at byte {0}")]
    ValenceUnsupported(usize),
    #[error("unexpected token at byte {0}")]
    UnexpectedToken(usize),
    #[error("duplicate or self bond at byte {0}")]
    InvalidBond(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    /// Slot in the one-hot element block.
    pub fn slot(self) -> usize {
        self as usize
    }

    fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i32,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    OrganicAtom,
    BracketAtom,
    Bond,
    BranchOpen,
    BranchClose,
    RingClosure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesToken<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub position: usize,
}

/// Splits `smiles` into tokens whose texts concatenate back to the input.
pub fn tokenize(smiles: &str) -> Result<Vec<SmilesToken<'_>>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let kind = match bytes[i] {
            b'B' | b'C' => {
                i += 1;
                if i < bytes.len() && matches!((bytes[start], bytes[i]), (b'B', b'r') | (b'C', b'l')) {
                    i += 1;
                }
                TokenKind::OrganicAtom
            }
            b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                i += 1;
                TokenKind::OrganicAtom
            }
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&c| c == b']')
                    .ok_or(SmilesError::UnknownCharacter(i))?;
                if let Some(bad) = bytes[i + 1..i + close]
                    .iter()
                    .position(|c| !c.is_ascii_alphanumeric() && !b"+-@:".contains(c))
                {
                    return Err(SmilesError::UnknownCharacter(i + 1 + bad));
                }
                i += close + 1;
                TokenKind::BracketAtom
            }
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                i += 1;
                TokenKind::Bond
            }
            b'(' => {
                i += 1;
                TokenKind::BranchOpen
            }
            b')' => {
                i += 1;
                TokenKind::BranchClose
            }
            b'0'..=b'9' => {
                i += 1;
                TokenKind::RingClosure
            }
            b'%' => {
                if i + 2 < bytes.len() && bytes[i + 1].is_ascii_digit() && bytes[i + 2].is_ascii_digit() {
                    i += 3;
                    TokenKind::RingClosure
                } else {
                    return Err(SmilesError::UnknownCharacter(i));
                }
            }
            _ => return Err(SmilesError::UnknownCharacter(i)),
        };
        tokens.push(SmilesToken {
            kind,
            text: &smiles[start..i],
            position: start,
        });
    }
    Ok(tokens)
}

fn organic_atom(text: &str) -> Atom {
    let aromatic = text.starts_with(|c: char| c.is_ascii_lowercase());
    let symbol = if aromatic {
        text.to_ascii_uppercase()
    } else {
        text.to_string()
    };
    Atom {
        element: Element::from_symbol(&symbol).expect("tokenizer only emits supported symbols"),
        aromatic,
        formal_charge: 0,
        index: 0,
    }
}

/// Parses `[El]`, `[ElH2+]`, `[nH]`, `[O-]`, `[N+2]`, `[Fe]` (rejected).
/// Chirality marks are accepted and dropped; isotopes and atom classes
/// are rejected.
fn bracket_atom(text: &str, position: usize) -> Result<Atom, SmilesError> {
    let unsupported = || SmilesError::ValenceUnsupported(position);
    let inner = &text[1..text.len() - 1];
    let b = inner.as_bytes();
    if b.is_empty() || b[0].is_ascii_digit() || inner.contains(':') {
        return Err(unsupported());
    }
    let two_letter = b.len() >= 2 && b[0].is_ascii_uppercase() && b[1].is_ascii_lowercase();
    let sym_len = if two_letter { 2 } else { 1 };
    let sym = &inner[..sym_len];
    let aromatic = b[0].is_ascii_lowercase();
    let element = Element::from_symbol(&sym.to_ascii_uppercase())
        .filter(|_| aromatic)
        .or_else(|| Element::from_symbol(sym))
        .ok_or_else(unsupported)?;
    if aromatic && !element.can_be_aromatic() {
        return Err(unsupported());
    }
    let mut i = sym_len;
    while i < b.len() && b[i] == b'@' {
        i += 1;
    }
    if i < b.len() && b[i] == b'H' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    let mut charge = 0i32;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        let c = b[i];
        i += 1;
        let mut count = 1;
        while i < b.len() && b[i] == c {
            count += 1;
            i += 1;
        }
        if count == 1 && i < b.len() && b[i].is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            count = inner[start..i].parse::<i32>().map_err(|_| unsupported())?;
        }
        charge = sign * count;
    }
    if i != b.len() {
        return Err(unsupported());
    }
    Ok(Atom {
        element,
        aromatic,
        formal_charge: charge,
        index: 0,
    })
}

fn bond_from_symbol(text: &str) -> BondOrder {
    match text {
        "=" => BondOrder::Double,
        "#" => BondOrder::Triple,
        ":" => BondOrder::Aromatic,
        _ => BondOrder::Single,
    }
}

fn ring_number(text: &str) -> u32 {
    text.trim_start_matches('%').parse().expect("tokenizer emits digits")
}

/// Atoms and bonds of a parsed SMILES string, before graph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMolecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

pub fn parse_atoms_and_bonds(smiles: &str) -> Result<ParsedMolecule, SmilesError> {
    let tokens = tokenize(smiles)?;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut branch_stack: Vec<(usize, usize)> = Vec::new();
    let mut open_rings: HashMap<u32, (usize, Option<BondOrder>, usize)> = HashMap::new();
    let mut current: Option<usize> = None;
    let mut pending_bond: Option<(BondOrder, usize)> = None;

    let default_order = |atoms: &[Atom], a: usize, b: usize| {
        if atoms[a].aromatic && atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    };
    let add_bond = |bonds: &mut Vec<Bond>, a: usize, b: usize, order: BondOrder, pos: usize| {
        let duplicate = bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a));
        if a == b || duplicate {
            return Err(SmilesError::InvalidBond(pos));
        }
        bonds.push(Bond { a, b, order });
        Ok(())
    };

    for tok in &tokens {
        match tok.kind {
            TokenKind::OrganicAtom | TokenKind::BracketAtom => {
                let mut atom = if tok.kind == TokenKind::OrganicAtom {
                    organic_atom(tok.text)
                } else {
                    bracket_atom(tok.text, tok.position)?
                };
                let idx = atoms.len();
                atom.index = idx;
                atoms.push(atom);
                if let Some(prev) = current {
                    let order = match pending_bond.take() {
                        Some((o, _)) => o,
                        None => default_order(&atoms, prev, idx),
                    };
                    add_bond(&mut bonds, prev, idx, order, tok.position)?;
                } else if let Some((_, pos)) = pending_bond {
                    return Err(SmilesError::UnexpectedToken(pos));
                }
                current = Some(idx);
            }
            TokenKind::Bond => {
                if current.is_none() || pending_bond.is_some() {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                pending_bond = Some((bond_from_symbol(tok.text), tok.position));
            }
            TokenKind::BranchOpen => {
                let Some(c) = current else {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                };
                if pending_bond.is_some() {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                branch_stack.push((c, tok.position));
            }
            TokenKind::BranchClose => {
                let Some((c, _)) = branch_stack.pop() else {
                    return Err(SmilesError::UnmatchedBranch(tok.position));
                };
                if pending_bond.is_some() {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                current = Some(c);
            }
            TokenKind::RingClosure => {
                let Some(c) = current else {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                };
                let n = ring_number(tok.text);
                let this_order = pending_bond.take().map(|(o, _)| o);
                match open_rings.remove(&n) {
                    Some((other, other_order, _)) => {
                        let order = match (this_order, other_order) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(SmilesError::InvalidBond(tok.position))
                            }
                            (Some(o), _) | (None, Some(o)) => o,
                            (None, None) => default_order(&atoms, other, c),
                        };
                        add_bond(&mut bonds, other, c, order, tok.position)?;
                    }
                    None => {
                        open_rings.insert(n, (c, this_order, tok.position));
                    }
                }
            }
        }
    }

    if let Some((_, pos)) = pending_bond {
        return Err(SmilesError::UnexpectedToken(pos));
    }
    if let Some(&(_, pos)) = branch_stack.last() {
        return Err(SmilesError::UnmatchedBranch(pos));
    }
    if let Some(&n) = open_rings.keys().min() {
        return Err(SmilesError::UnclosedRing(n));
    }
    if atoms.is_empty() {
        return Err(SmilesError::UnexpectedToken(0));
    }
    Ok(ParsedMolecule { atoms, bonds })
}

/// Parses `smiles` into a heavy-atom graph with every bond stored as two
/// opposing directed edges.
pub fn parse_smiles(smiles: &str) -> Result<MolGraph, SmilesError> {
    let parsed = parse_atoms_and_bonds(smiles)?;
    Ok(MolGraph::from_molecule(parsed.atoms, parsed.bonds))
}

/// Feature row for one atom.
///
/// Layout (24 slots): element one-hot `[0,10)`, heavy-neighbor count
/// one-hot 0..=5 `[10,16)`, aromatic flag `16`, formal charge clamped to
/// −2..=2 one-hot `[17,22)`, out-degree `22`, in-degree `23`.
pub fn atom_features(atom: &Atom, bond_degree: usize, out_degree: usize, in_degree: usize) -> [f64; FEATURE_LEN] {
    let mut f = [0.0; FEATURE_LEN];
    f[atom.element.slot()] = 1.0;
    f[DEGREE_OFFSET + bond_degree.min(5)] = 1.0;
    if atom.aromatic {
        f[AROMATIC_SLOT] = 1.0;
    }
    let charge = atom.formal_charge.clamp(-2, 2);
    f[CHARGE_OFFSET + (charge + 2) as usize] = 1.0;
    f[OUT_DEGREE_SLOT] = out_degree as f64;
    f[IN_DEGREE_SLOT] = in_degree as f64;
    f
}

/// Deterministic encoding of a molecule's ring-and-linker skeleton.
/// Acyclic molecules map to the empty key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaffoldKey(pub String);

impl ScaffoldKey {
    pub fn empty() -> Self {
        ScaffoldKey(String::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ScaffoldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Atoms surviving iterative removal of non-ring atoms with at most one
/// heavy neighbor. Ring atoms always keep two neighbors, so this is the
/// 2-core of the bond graph.
pub fn scaffold_atoms(n_atoms: usize, bonds: &[Bond]) -> Vec<bool> {
    let mut alive = vec![true; n_atoms];
    let mut degree = vec![0usize; n_atoms];
    for b in bonds {
        degree[b.a] += 1;
        degree[b.b] += 1;
    }
    let mut stack: Vec<usize> = (0..n_atoms).filter(|&i| degree[i] <= 1).collect();
    while let Some(i) = stack.pop() {
        if !alive[i] {
            continue;
        }
        alive[i] = false;
        for b in bonds {
            let other = if b.a == i {
                b.b
            } else if b.b == i {
                b.a
            } else {
                continue;
            };
            if alive[other] {
                degree[other] -= 1;
                if degree[other] <= 1 {
                    stack.push(other);
                }
            }
        }
    }
    alive
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Scaffold key of a parsed molecule.
///
/// The pruned skeleton is labelled by iterated neighborhood refinement:
/// each atom starts from (element, aromatic, sorted bond orders) and then
/// absorbs the sorted multiset of (bond order, neighbor label) pairs for
/// as many rounds as there are atoms. The key is the sorted multiset of
/// final labels, prefixed with a readable atom/bond summary.
pub fn extract_scaffold(graph: &MolGraph) -> ScaffoldKey {
    scaffold_key(graph.atoms(), graph.bonds())
}

pub fn scaffold_key(atoms: &[Atom], bonds: &[Bond]) -> ScaffoldKey {
    let alive = scaffold_atoms(atoms.len(), bonds);
    let kept: Vec<usize> = (0..atoms.len()).filter(|&i| alive[i]).collect();
    if kept.is_empty() {
        return ScaffoldKey::empty();
    }
    let kept_bonds: Vec<&Bond> = bonds.iter().filter(|b| alive[b.a] && alive[b.b]).collect();
    let mut neighbors: HashMap<usize, Vec<(BondOrder, usize)>> = HashMap::new();
    for b in &kept_bonds {
        neighbors.entry(b.a).or_default().push((b.order, b.b));
        neighbors.entry(b.b).or_default().push((b.order, b.a));
    }

    let mut labels: HashMap<usize, u64> = kept
        .iter()
        .map(|&i| {
            let a = &atoms[i];
            let mut orders: Vec<char> = neighbors
                .get(&i)
                .map(|ns| ns.iter().map(|(o, _)| o.symbol()).collect())
                .unwrap_or_default();
            orders.sort_unstable();
            let s = format!(
                "{}{}{}|{}",
                a.element,
                if a.aromatic { "a" } else { "" },
                a.formal_charge,
                orders.iter().collect::<String>()
            );
            (i, fnv1a(s.as_bytes()))
        })
        .collect();

    for _ in 0..kept.len() {
        let next: HashMap<usize, u64> = kept
            .iter()
            .map(|&i| {
                let mut nbr: Vec<(char, u64)> = neighbors
                    .get(&i)
                    .map(|ns| ns.iter().map(|&(o, j)| (o.symbol(), labels[&j])).collect())
                    .unwrap_or_default();
                nbr.sort_unstable();
                let mut s = format!("{:016x}", labels[&i]);
                for (o, l) in nbr {
                    s.push(o);
                    s.push_str(&format!("{l:016x}"));
                }
                (i, fnv1a(s.as_bytes()))
            })
            .collect();
        labels = next;
    }

    let mut final_labels: Vec<u64> = labels.into_values().collect();
    final_labels.sort_unstable();
    let mut element_counts: Vec<(Element, bool, usize)> = Vec::new();
    for &i in &kept {
        let a = &atoms[i];
        match element_counts
            .iter_mut()
            .find(|(e, ar, _)| *e == a.element && *ar == a.aromatic)
        {
            Some(entry) => entry.2 += 1,
            None => element_counts.push((a.element, a.aromatic, 1)),
        }
    }
    element_counts.sort_unstable();
    let mut key = String::new();
    for (e, ar, n) in element_counts {
        let sym = if ar {
            e.symbol().to_ascii_lowercase()
        } else {
            e.symbol().to_string()
        };
        key.push_str(&format!("{sym}{n}"));
    }
    key.push_str(&format!("/{}/", kept_bonds.len()));
    let digest = final_labels
        .iter()
        .fold(String::new(), |acc, l| acc + &format!("{l:016x}"));
    key.push_str(&format!("{:016x}", fnv1a(digest.as_bytes())));
    ScaffoldKey(key)
}

/// Feature matrix for a set of atoms given bond and directed degrees.
pub(crate) fn feature_matrix(atoms: &[Atom], bond_degree: &[usize], out_deg: &[usize], in_deg: &[usize]) -> Tensor {
    let mut x = Tensor::zeros(atoms.len(), FEATURE_LEN);
    for (i, atom) in atoms.iter().enumerate() {
        x.row_mut(i)
            .copy_from_slice(&atom_features(atom, bond_degree[i], out_deg[i], in_deg[i]));
    }
    x
}
