//! Seeded generator of small drug-like SMILES for tests and demos.
//!
//! Molecules are built from ring cores (one, or two joined by a linker)
//! decorated with acyclic substituents, plus a share of purely acyclic
//! chains. Oxygen occurs in some substituents, linkers and cores, which
//! makes "contains oxygen" a convenient toy label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ring cores as atom tokens. `{a}`/`{b}` are ring-closure labels filled
/// in at generation time so two cores never share a label.
const CORES: &[&[&str]] = &[
    &["c{a}", "c", "c", "c", "c", "c{a}"],
    &["c{a}", "c", "c", "n", "c", "c{a}"],
    &["c{a}", "c", "n", "c", "n", "c{a}"],
    &["C{a}", "C", "C", "C", "C", "C{a}"],
    &["C{a}", "C", "C", "N", "C", "C{a}"],
    &["C{a}", "C", "C", "C", "C{a}"],
    &["C{a}", "C", "C{a}"],
    &["c{a}", "c", "c", "s", "c{a}"],
    &["c{a}", "c", "c", "o", "c{a}"],
    &["C{a}", "C", "C", "O", "C", "C{a}"],
    &["c{a}", "c", "c", "c{b}", "c", "c", "c", "c", "c{b}", "c{a}"],
    &["c{a}", "c", "c", "c{b}", "n", "c", "c", "c", "c{b}", "c{a}"],
    &["C{a}", "C", "N", "C", "C", "N{a}"],
];

/// Acyclic decorations.
const SUBSTITUENTS: &[&str] = &[
    "C", "CC", "CCC", "C(C)C", "N", "CN", "Cl", "F", "Br", "C#N", "C=C", "CCN", "C(F)(F)F", "O", "OC", "CO", "C(=O)O",
    "C=O", "OCC", "C(=O)N", "CCO", "S", "CS",
];

const LINKERS: &[&str] = &["", "C", "CC", "N", "O", "C(=O)N", "CO", "NC"];

const CHAINS: &[&str] = &["CCCC", "CCCCC", "CC(C)CC", "CCN(C)C", "CCOCC", "CCCO", "NCCN", "CC(=O)OC", "CC(C)(C)C", "ClCCCl"];

fn core_tokens(core: &[&str], labels: (u32, u32)) -> Vec<String> {
    core.iter()
        .map(|t| t.replace("{a}", &labels.0.to_string()).replace("{b}", &labels.1.to_string()))
        .collect()
}

/// Adds up to `max_subs` branches after non-terminal core atoms.
fn decorate<R: Rng + ?Sized>(tokens: &mut [String], max_subs: usize, rng: &mut R) {
    if tokens.len() < 3 {
        return;
    }
    let subs = rng.gen_range(0..=max_subs);
    let mut slots: Vec<usize> = (1..tokens.len() - 1).collect();
    slots.shuffle(rng);
    for &slot in slots.iter().take(subs) {
        // Aromatic n with a substituent would need an explicit charge or H.
        if tokens[slot].starts_with('n') || tokens[slot].starts_with('o') || tokens[slot].starts_with('s') {
            continue;
        }
        let s = SUBSTITUENTS.choose(rng).expect("non-empty");
        tokens[slot].push_str(&format!("({s})"));
    }
}

/// One random molecule.
pub fn random_smiles<R: Rng + ?Sized>(rng: &mut R) -> String {
    let roll: f64 = rng.gen();
    if roll < 0.12 {
        let chain = CHAINS.choose(rng).expect("non-empty");
        let tail = if rng.gen_bool(0.5) {
            SUBSTITUENTS.choose(rng).expect("non-empty").to_string()
        } else {
            String::new()
        };
        return format!("{chain}{tail}");
    }
    let mut out = String::new();
    if rng.gen_bool(0.6) {
        out.push_str(SUBSTITUENTS.choose(rng).expect("non-empty"));
    }
    let mut first = core_tokens(CORES.choose(rng).expect("non-empty"), (1, 2));
    decorate(&mut first, 2, rng);
    out.push_str(&first.concat());
    if roll < 0.4 {
        out.push_str(LINKERS.choose(rng).expect("non-empty"));
        let mut second = core_tokens(CORES.choose(rng).expect("non-empty"), (3, 4));
        decorate(&mut second, 1, rng);
        out.push_str(&second.concat());
    } else if rng.gen_bool(0.5) {
        out.push_str(SUBSTITUENTS.choose(rng).expect("non-empty"));
    }
    out
}

/// `n` molecules from `seed`.
pub fn corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_smiles(&mut rng)).collect()
}

/// `n` molecules with roughly equal counts with and without oxygen.
pub fn balanced_oxygen_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut with, mut without) = (Vec::new(), Vec::new());
    let half = n / 2;
    while with.len() < n - half || without.len() < half {
        let s = random_smiles(&mut rng);
        if contains_oxygen(&s) {
            if with.len() < n - half {
                with.push(s);
            }
        } else if without.len() < half {
            without.push(s);
        }
    }
    let mut all: Vec<String> = with.into_iter().chain(without).collect();
    all.shuffle(&mut rng);
    all
}

/// True if the SMILES has an oxygen atom (`O` or aromatic `o`).
pub fn contains_oxygen(smiles: &str) -> bool {
    smiles.contains('O') || smiles.contains('o')
}
