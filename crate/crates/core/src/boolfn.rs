//! Boolean functions `f: S ⊆ {0,1}^n → T` with an explicitly enumerated domain.
//!
//! Inputs are stored as [`BitString`]s whose first character is bit `x_1`
//! (the most significant bit of the binary value). The domain is kept in
//! ascending binary order and output labels are canonicalized to
//! `0..|T|` in ascending order of the original label, so every downstream
//! matrix has a reproducible row/column order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest input length accepted for the built-in total families.
pub const MAX_FAMILY_BITS: usize = 24;
/// Largest input length representable by [`BitString`].
pub const MAX_BITS: usize = 63;

/// A fixed-length bitstring `x_1 x_2 … x_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    value: u64,
    len: usize,
}

impl BitString {
    pub fn new(value: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_BITS {
            return Err(Error::Parameter(format!(
                "bitstring length must be in 1..={MAX_BITS}, got {len}"
            )));
        }
        if value >> len != 0 {
            return Err(Error::Parameter(format!(
                "value {value} does not fit in {len} bits"
            )));
        }
        Ok(Self { value, len })
    }

    /// Binary value with `x_1` as the most significant bit.
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit `x_i` for `1 <= i <= n`; `x_0` is the constant 0.
    pub fn bit(&self, i: usize) -> bool {
        if i == 0 || i > self.len {
            return false;
        }
        (self.value >> (self.len - i)) & 1 == 1
    }

    pub fn weight(&self) -> usize {
        self.value.count_ones() as usize
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 1..=self.len {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_BITS {
            return Err(Error::Parameter(format!(
                "bitstring {s:?} must have length 1..={MAX_BITS}"
            )));
        }
        let mut value = 0u64;
        for c in s.chars() {
            value <<= 1;
            match c {
                '0' => {}
                '1' => value |= 1,
                _ => return Err(Error::Parameter(format!("bitstring {s:?} contains {c:?}"))),
            }
        }
        Self::new(value, s.len())
    }
}

/// Serializable description of a function, as found in run configs and records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    /// Hamming weight modulo `m`.
    Mod { n: usize, m: usize },
    /// 1 iff the Hamming weight is `k` or `l`.
    Exact { n: usize, k: usize, l: usize },
    /// Arbitrary, possibly partial, truth table.
    Table { n: usize, entries: Vec<(String, i64)> },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<BooleanFunction> {
        match self {
            FunctionSpec::Mod { n, m } => make_mod(*n, *m),
            FunctionSpec::Exact { n, k, l } => make_exact(*n, *k, *l),
            FunctionSpec::Table { n, entries } => BooleanFunction::from_table(*n, entries),
        }
    }

    pub fn is_mod(&self) -> bool {
        matches!(self, FunctionSpec::Mod { .. })
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Mod { n, m } => write!(f, "MOD_{m}^{n}"),
            FunctionSpec::Exact { n, k, l } => write!(f, "EXACT_{{{k},{l}}}^{n}"),
            FunctionSpec::Table { n, entries } => write!(f, "TABLE^{n}[{}]", entries.len()),
        }
    }
}

/// An evaluable Boolean function on an enumerated domain.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanFunction {
    n: usize,
    spec: FunctionSpec,
    domain: Vec<BitString>,
    outputs: Vec<i64>,
    /// Canonical class index for each domain position.
    classes: Vec<usize>,
}

impl BooleanFunction {
    /// Builds a function from `(bitstring, label)` pairs. Entries may come in
    /// any order; duplicates with conflicting labels are rejected.
    pub fn from_table(n: usize, entries: &[(String, i64)]) -> Result<Self> {
        if n == 0 || n > MAX_BITS {
            return Err(Error::Parameter(format!("n must be in 1..={MAX_BITS}, got {n}")));
        }
        let mut table = BTreeMap::new();
        for (s, label) in entries {
            let x: BitString = s.parse()?;
            if x.len() != n {
                return Err(Error::Parameter(format!(
                    "entry {s:?} has length {} but n = {n}",
                    x.len()
                )));
            }
            if let Some(prev) = table.insert(x, *label) {
                if prev != *label {
                    return Err(Error::Parameter(format!(
                        "entry {s:?} is listed with labels {prev} and {label}"
                    )));
                }
            }
        }
        let spec = FunctionSpec::Table { n, entries: entries.to_vec() };
        Self::from_map(n, spec, table)
    }

    fn from_map(n: usize, spec: FunctionSpec, table: BTreeMap<BitString, i64>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Parameter(format!(
                "domain must contain at least 2 inputs, got {}",
                table.len()
            )));
        }
        let mut outputs: Vec<i64> = table.values().copied().collect();
        outputs.sort_unstable();
        outputs.dedup();
        if outputs.len() < 2 {
            return Err(Error::Parameter(
                "function must take at least 2 distinct output values".into(),
            ));
        }
        let (domain, classes) = table
            .into_iter()
            .map(|(x, label)| (x, outputs.binary_search(&label).expect("label present")))
            .unzip();
        Ok(Self { n, spec, domain, outputs, classes })
    }

    /// Total function on `{0,1}^n` given by a label for each input value.
    fn total(n: usize, spec: FunctionSpec, label: impl Fn(BitString) -> i64) -> Result<Self> {
        if n == 0 || n > MAX_FAMILY_BITS {
            return Err(Error::Parameter(format!(
                "n must be in 1..={MAX_FAMILY_BITS} for total families, got {n}"
            )));
        }
        let table = (0..1u64 << n)
            .map(|v| {
                let x = BitString { value: v, len: n };
                (x, label(x))
            })
            .collect();
        Self::from_map(n, spec, table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    /// Inputs in ascending binary order.
    pub fn domain(&self) -> &[BitString] {
        &self.domain
    }

    /// Original output labels in ascending order; position = canonical class.
    pub fn outputs(&self) -> &[i64] {
        &self.outputs
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn domain_size(&self) -> usize {
        self.domain.len()
    }

    pub fn is_total(&self) -> bool {
        self.n < 64 && self.domain.len() as u128 == 1u128 << self.n
    }

    /// Canonical class of each domain position.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// Position of `x` in the domain.
    pub fn position(&self, x: &BitString) -> Result<usize> {
        if x.len() != self.n {
            return Err(Error::Domain(x.to_string()));
        }
        self.domain
            .binary_search(x)
            .map_err(|_| Error::Domain(x.to_string()))
    }

    /// `f(x)` as the original output label.
    pub fn evaluate(&self, x: &BitString) -> Result<i64> {
        self.position(x).map(|p| self.outputs[self.classes[p]])
    }

    pub fn evaluate_str(&self, x: &str) -> Result<i64> {
        let x: BitString = x.parse().map_err(|_| Error::Domain(x.to_string()))?;
        self.evaluate(&x)
    }

    /// Number of domain inputs in each canonical class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.outputs.len()];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }

    /// Domain positions sorted by class, ties kept in ascending binary order.
    pub fn class_sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.domain.len()).collect();
        order.sort_by_key(|&p| self.classes[p]);
        order
    }
}

/// `MOD_m^n(x) = |x| mod m`.
pub fn make_mod(n: usize, m: usize) -> Result<BooleanFunction> {
    if m <= 1 || m > n {
        return Err(Error::Parameter(format!("MOD requires 1 < m <= n, got n={n}, m={m}")));
    }
    BooleanFunction::total(n, FunctionSpec::Mod { n, m }, |x| (x.weight() % m) as i64)
}

/// `EXACT_{k,l}^n(x) = 1` iff `|x| ∈ {k, l}`.
pub fn make_exact(n: usize, k: usize, l: usize) -> Result<BooleanFunction> {
    if k >= l || l > n {
        return Err(Error::Parameter(format!(
            "EXACT requires 0 <= k < l <= n, got n={n}, k={k}, l={l}"
        )));
    }
    BooleanFunction::total(n, FunctionSpec::Exact { n, k, l }, |x| {
        let w = x.weight();
        i64::from(w == k || w == l)
    })
}
