//! Named coefficient sets shipped with the library.

use std::collections::BTreeMap;

use crate::coeff_file::parse_coefficient_text;
use crate::coefficients::{
    complete_symmetric, ruth_coefficients, Provenance, SchemeTag, SplittingCoefficients,
};

/// Published 77-digit sets, in table order.
pub const TABLE4_FILES: [(&str, &str); 10] = [
    ("ABAs5o6H A", include_str!("../data/table4/ABAs5o6H_A.coef")),
    ("ABAs5o6H B", include_str!("../data/table4/ABAs5o6H_B.coef")),
    ("ABAs5o6H C", include_str!("../data/table4/ABAs5o6H_C.coef")),
    ("BABs6o7H", include_str!("../data/table4/BABs6o7H.coef")),
    ("BABs6o5H", include_str!("../data/table4/BABs6o5H.coef")),
    ("BAB's6o5H", include_str!("../data/table4/BABps6o5H.coef")),
    ("BABs7o7H", include_str!("../data/table4/BABs7o7H.coef")),
    ("BAB's7o6H", include_str!("../data/table4/BABps7o6H.coef")),
    ("BAB's8o7H", include_str!("../data/table4/BABps8o7H.coef")),
    ("BAB's9o7H", include_str!("../data/table4/BABps9o7H.coef")),
];

/// Reference methods from the literature.
pub const LITERATURE_FILES: [(&str, &str); 5] = [
    ("s5odr4", include_str!("../data/literature/s5odr4.coef")),
    ("ABA104", include_str!("../data/literature/aba104.coef")),
    ("ABA864", include_str!("../data/literature/aba864.coef")),
    ("ABA1064", include_str!("../data/literature/aba1064.coef")),
    ("Yosh s7o6 A", include_str!("../data/literature/yosh_s7o6_a.coef")),
];

/// The ten methods compared in the benchmarks.
pub const BENCHMARK_METHODS: [&str; 10] = [
    "Ruth",
    "s5odr4",
    "ABA104",
    "ABA864",
    "ABA1064",
    "Yosh s7o6 A",
    "ABAs5o6H A",
    "BABs7o7H",
    "BAB's8o7H",
    "BAB's9o7H",
];

/// Lookup key: case-insensitive, ignoring spaces, `_` and `-`; `'` and `p`
/// are interchangeable so that `BABps8o7H` finds `BAB's8o7H`.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .map(|c| if c == '\'' { 'p' } else { c.to_ascii_lowercase() })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MethodCatalog {
    precision: usize,
    entries: Vec<SplittingCoefficients>,
    index: BTreeMap<String, usize>,
}

impl MethodCatalog {
    /// Every bundled set at the given working precision.
    pub fn standard(precision: usize) -> Self {
        let mut entries = Vec::new();
        for (name, text) in TABLE4_FILES.iter().chain(LITERATURE_FILES.iter()) {
            let set = parse_coefficient_text(text, precision)
                .unwrap_or_else(|e| panic!("bundled set {name} is malformed: {e}"));
            debug_assert_eq!(&set.name, name);
            entries.push(set);
        }
        entries.push(ruth_coefficients(precision));
        entries.push(
            complete_symmetric(&[], &[], SchemeTag::Aba, 1, precision)
                .expect("leapfrog has no free parameters")
                .named("Leapfrog")
                .with_provenance(Provenance::LiteratureReference)
                .with_general_order(2),
        );
        let mut cat = Self {
            precision,
            entries: Vec::new(),
            index: BTreeMap::new(),
        };
        for e in entries {
            cat.insert(e);
        }
        cat
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    /// Adds or replaces a set.
    pub fn insert(&mut self, set: SplittingCoefficients) {
        let key = normalize_name(&set.name);
        match self.index.get(&key) {
            Some(&i) => self.entries[i] = set,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(set);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&SplittingCoefficients> {
        self.index.get(&normalize_name(name)).map(|&i| &self.entries[i])
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SplittingCoefficients> {
        self.entries.iter()
    }

    pub fn table4(&self) -> impl Iterator<Item = &SplittingCoefficients> {
        self.entries
            .iter()
            .filter(|e| e.provenance == Provenance::PaperTable4)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
