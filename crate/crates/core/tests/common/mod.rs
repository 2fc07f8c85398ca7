#![allow(dead_code)]

use plkb::data::{Dataset, Instance};
use plkb::kb::{parse_kb, Atom, Clause, KnowledgeBase, Literal, WeightedClause};
use plkb::oracle::WorldDistribution;
use rand::seq::index::sample;
use rand::Rng;

pub const EXAMPLE_ROWS: [(&str, bool); 8] = [
    ("0000", true),
    ("1111", true),
    ("1010", true),
    ("1100", true),
    ("0010", false),
    ("0100", false),
    ("1110", false),
    ("1000", false),
];

pub fn example_strings() -> Dataset {
    Dataset::from_strings(&EXAMPLE_ROWS).unwrap()
}

/// Leaf rules of the ID3 tree over the eight example strings.
pub const TABLE_1: &str = "\
0.0 pos | !a1=0 | !a2=0 | !a3=1 | !a4=0
1.0 pos | !a1=0 | !a2=0 | !a3=0 | !a4=0
0.0 pos | !a1=0 | !a2=1 | !a4=0
1.0 pos | !a1=1 | !a2=0 | !a3=1 | !a4=0
0.0 pos | !a1=1 | !a2=0 | !a3=0 | !a4=0
0.0 pos | !a1=1 | !a2=1 | !a3=1 | !a4=0
1.0 pos | !a1=1 | !a2=1 | !a3=0 | !a4=0
1.0 pos | !a4=1
";

pub fn table_1() -> KnowledgeBase {
    parse_kb(TABLE_1).unwrap()
}

pub const MODUS_PONENS: &str = "0.6 !alpha | beta\n0.8 alpha\n";

pub const EXAMPLE_5: &str = "\
1.0 alpha | beta
1.0 alpha | gamma
1.0 beta | gamma
1.0 alpha | beta | gamma
";

pub fn props(n: usize) -> Vec<Atom> {
    (0..n).map(|i| Atom::proposition(format!("p{i}")).unwrap()).collect()
}

/// Distinct clauses [`random_clause`] can draw over `n` atoms.
pub fn clause_space(n: usize) -> usize {
    (1..=n.min(4)).map(|l| binomial(n, l) << l).sum()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn random_clause(atoms: &[Atom], rng: &mut impl Rng) -> Clause {
    let len = rng.random_range(1..=atoms.len().min(4));
    let lits: Vec<Literal> = sample(rng, atoms.len(), len)
        .into_iter()
        .map(|i| Literal {
            atom: atoms[i].clone(),
            negated: rng.random_bool(0.5),
        })
        .collect();
    Clause::new(lits).unwrap()
}

/// A knowledge base whose probabilities are read off a random distribution
/// over worlds, so it is consistent by construction.
pub fn world_kb(n_atoms: usize, n_clauses: usize, rng: &mut impl Rng) -> KnowledgeBase {
    let atoms = props(n_atoms);
    let n_clauses = n_clauses.min(clause_space(n_atoms));
    let raw: Vec<f64> = (0..1usize << n_atoms).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let dist = WorldDistribution {
        atoms: atoms.clone(),
        probabilities: raw.iter().map(|p| p / total).collect(),
    };
    let mut kb = KnowledgeBase::new();
    while kb.len() < n_clauses {
        let c = random_clause(&atoms, rng);
        if !kb.contains(&c) {
            let p = dist.clause_probability(&c).clamp(0.0, 1.0);
            kb.insert(WeightedClause::new(p, c).unwrap()).unwrap();
        }
    }
    kb
}

/// Random clauses over `p0..` with independent uniform probabilities.
pub fn loose_kb(n_atoms: usize, n_clauses: usize, rng: &mut impl Rng) -> KnowledgeBase {
    let atoms = props(n_atoms);
    let n_clauses = n_clauses.min(clause_space(n_atoms));
    let mut kb = KnowledgeBase::new();
    while kb.len() < n_clauses {
        let c = random_clause(&atoms, rng);
        if !kb.contains(&c) {
            kb.insert(WeightedClause::new(rng.random::<f64>(), c).unwrap()).unwrap();
        }
    }
    kb
}

/// Up to 6 features with up to 3 values each and up to 40 rows.
pub fn random_dataset(rng: &mut impl Rng) -> Dataset {
    let n_features = rng.random_range(1..=6);
    let arity: Vec<u8> = (0..n_features).map(|_| rng.random_range(1..=3)).collect();
    let n_rows = rng.random_range(1..=40);
    let rows = (0..n_rows)
        .map(|_| Instance {
            values: arity.iter().map(|&a| rng.random_range(0..a).to_string()).collect(),
            label: rng.random_bool(0.5),
        })
        .collect();
    Dataset::new((1..=n_features).map(|i| format!("f{i}")).collect(), rows).unwrap()
}
