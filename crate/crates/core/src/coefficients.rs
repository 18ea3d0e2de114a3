//! Splitting-coefficient sets for symmetric ABA / BAB compositions.
//!
//! Storage convention: `c` always weighs the drift `∂T/∂p` and `d` the kick
//! `∂V/∂q`. Both arrays have length `k = stages + 1`; the structural zero
//! (`d_k` for ABA, `c_k` for BAB) is stored explicitly.
//!
//! The *outer* array is the one applied first and last (`c` for ABA, `d` for
//! BAB) and is a palindrome of length `k`. The *inner* array is a palindrome of
//! length `k − 1` followed by the structural zero.

use std::fmt;

use crate::precision::{normalize_precision, sum, BigScalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeTag {
    /// Drift first (position update leads).
    Aba,
    /// Kick first (momentum update leads).
    Bab,
}

impl SchemeTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ABA" => Some(Self::Aba),
            "BAB" => Some(Self::Bab),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::Aba => Self::Bab,
            Self::Bab => Self::Aba,
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aba => "ABA",
            Self::Bab => "BAB",
        })
    }
}

/// How a coefficient set is unrolled when decomposing the harmonic-oscillator step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecompositionMode {
    /// Outer array applied as drifts, drift first.
    AbaNative,
    /// Outer array applied as kicks, kick first.
    BabNative,
    /// Drift-first recurrence over the kick-first sequence padded with zero
    /// outer drifts `c_0 = c_{s+1} = 0`.
    BabPrime,
}

impl DecompositionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aba" | "aba-native" => Some(Self::AbaNative),
            "bab" | "bab-native" => Some(Self::BabNative),
            "bab-prime" | "bab'" | "babprime" => Some(Self::BabPrime),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::AbaNative => "aba",
            Self::BabNative => "bab",
            Self::BabPrime => "bab-prime",
        }
    }
}

impl fmt::Display for DecompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    PaperTable4,
    RuthEq15,
    LiteratureReference,
    OptimizerOutput,
    UserFile,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Self::PaperTable4 => "paper-table-4",
            Self::RuthEq15 => "ruth-eq-15",
            Self::LiteratureReference => "literature-reference",
            Self::OptimizerOutput => "optimizer-output",
            Self::UserFile => "user-file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::PaperTable4,
            Self::RuthEq15,
            Self::LiteratureReference,
            Self::OptimizerOutput,
            Self::UserFile,
        ]
        .into_iter()
        .find(|p| p.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoefficientError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("checksum mismatch: file says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("coefficient set {name:?} failed validation: {report}")]
    Invalid {
        name: String,
        report: ValidationReport,
    },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// A named symmetric splitting method.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingCoefficients {
    pub name: String,
    pub scheme: SchemeTag,
    pub stages: usize,
    pub c: Vec<BigScalar>,
    pub d: Vec<BigScalar>,
    pub provenance: Provenance,
    /// Decomposition under which the set's harmonic order is defined.
    pub native_mode: DecompositionMode,
    /// Order for general separable systems.
    pub general_order: u32,
    /// Significant digits carried by the source literals.
    pub digits: usize,
}

/// Number of free parameters of a palindrome of length `len` whose sum is 1.
pub fn palindrome_free_count(len: usize) -> usize {
    len.saturating_sub(1) / 2
}

/// Free-parameter counts `(d, c)` for a symmetric scheme with `stages` stages.
pub fn free_counts(scheme: SchemeTag, stages: usize) -> (usize, usize) {
    let k = stages + 1;
    let outer = palindrome_free_count(k);
    let inner = palindrome_free_count(k - 1);
    match scheme {
        SchemeTag::Aba => (inner, outer),
        SchemeTag::Bab => (outer, inner),
    }
}

/// Completes a palindrome of length `len` summing to one from its leading free
/// entries. Even lengths close with the pair `1/2 − Σfree`, odd lengths with the
/// single middle entry `1 − 2Σfree`.
fn complete_palindrome(free: &[BigScalar], len: usize, precision: usize) -> Vec<BigScalar> {
    debug_assert_eq!(free.len(), palindrome_free_count(len));
    let s = sum(free, precision);
    let mut out: Vec<BigScalar> = free.to_vec();
    if len % 2 == 0 {
        let mid = &BigScalar::from_ratio(1, 2, precision) - &s;
        out.push(mid.clone());
        out.push(mid);
    } else {
        let two = BigScalar::from_i64(2, precision);
        out.push(&BigScalar::one(precision) - &(&two * &s));
    }
    out.extend(free.iter().rev().cloned());
    out
}

/// Builds the full symmetric arrays from free parameters, eliminating the middle
/// entries so that both sums equal one by construction.
pub fn complete_symmetric(
    free_d: &[BigScalar],
    free_c: &[BigScalar],
    scheme: SchemeTag,
    stages: usize,
    precision: usize,
) -> Result<SplittingCoefficients, CoefficientError> {
    if stages == 0 {
        return Err(CoefficientError::Contract("stages must be at least 1".into()));
    }
    let precision = normalize_precision(precision);
    let (nd, nc) = free_counts(scheme, stages);
    if free_d.len() != nd || free_c.len() != nc {
        return Err(CoefficientError::Contract(format!(
            "{scheme} with {stages} stages takes {nd} free d and {nc} free c, got {} and {}",
            free_d.len(),
            free_c.len()
        )));
    }
    let lift = |v: &[BigScalar]| -> Vec<BigScalar> {
        v.iter().map(|x| x.with_precision(precision)).collect()
    };
    let (free_d, free_c) = (lift(free_d), lift(free_c));
    let k = stages + 1;
    let zero = BigScalar::zero(precision);
    let (c, d) = match scheme {
        SchemeTag::Aba => {
            let c = complete_palindrome(&free_c, k, precision);
            let mut d = complete_palindrome(&free_d, k - 1, precision);
            d.push(zero);
            (c, d)
        }
        SchemeTag::Bab => {
            let d = complete_palindrome(&free_d, k, precision);
            let mut c = complete_palindrome(&free_c, k - 1, precision);
            c.push(zero);
            (c, d)
        }
    };
    Ok(SplittingCoefficients {
        name: format!("{scheme}s{stages}"),
        scheme,
        stages,
        c,
        d,
        provenance: Provenance::UserFile,
        native_mode: match scheme {
            SchemeTag::Aba => DecompositionMode::AbaNative,
            SchemeTag::Bab => DecompositionMode::BabNative,
        },
        general_order: 0,
        digits: crate::precision::decimal_digits_for(precision),
    })
}

impl SplittingCoefficients {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_native_mode(mut self, mode: DecompositionMode) -> Self {
        self.native_mode = mode;
        self
    }

    pub fn with_general_order(mut self, order: u32) -> Self {
        self.general_order = order;
        self
    }

    pub fn with_digits(mut self, digits: usize) -> Self {
        self.digits = digits;
        self
    }

    pub fn k(&self) -> usize {
        self.stages + 1
    }

    pub fn precision(&self) -> usize {
        self.c[0].precision()
    }

    /// Array applied first and last.
    pub fn outer(&self) -> &[BigScalar] {
        match self.scheme {
            SchemeTag::Aba => &self.c,
            SchemeTag::Bab => &self.d,
        }
    }

    /// Array applied in between, without its structural zero.
    pub fn inner(&self) -> &[BigScalar] {
        let k = self.k();
        match self.scheme {
            SchemeTag::Aba => &self.d[..k - 1],
            SchemeTag::Bab => &self.c[..k - 1],
        }
    }

    /// Leading free parameters `(d, c)` in the layout accepted by
    /// [`complete_symmetric`].
    pub fn free_parameters(&self) -> (Vec<BigScalar>, Vec<BigScalar>) {
        let (nd, nc) = free_counts(self.scheme, self.stages);
        (self.d[..nd].to_vec(), self.c[..nc].to_vec())
    }

    /// SHO order encoded in a `…o<N>H` name.
    pub fn declared_sho_order(&self) -> Option<u32> {
        let name = self.name.split_whitespace().next()?;
        let start = name.rfind('o')?;
        let rest = name[start + 1..].strip_suffix('H')?;
        rest.parse().ok()
    }

    /// `Σ|c_i| + Σ|d_i|`.
    pub fn abs_sum(&self) -> BigScalar {
        let p = self.precision();
        self.c
            .iter()
            .chain(&self.d)
            .fold(BigScalar::zero(p), |acc, x| &acc + &x.abs())
    }

    /// Coefficients rounded to binary64.
    pub fn to_f64(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.c.iter().map(BigScalar::to_f64).collect(),
            self.d.iter().map(BigScalar::to_f64).collect(),
        )
    }

    /// Same set at another working precision.
    pub fn with_precision(&self, precision: usize) -> Self {
        let mut out = self.clone();
        out.c = self.c.iter().map(|x| x.with_precision(precision)).collect();
        out.d = self.d.iter().map(|x| x.with_precision(precision)).collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub sum_c_residual: BigScalar,
    pub sum_d_residual: BigScalar,
    pub symmetry_residual: BigScalar,
    pub structural_zero_residual: BigScalar,
    pub length_ok: bool,
    pub tolerance: BigScalar,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.length_ok
            && self.sum_c_residual <= self.tolerance
            && self.sum_d_residual <= self.tolerance
            && self.symmetry_residual <= self.tolerance
            && self.structural_zero_residual <= self.tolerance
    }

    pub fn max_residual(&self) -> BigScalar {
        self.sum_c_residual
            .max(&self.sum_d_residual)
            .max(&self.symmetry_residual)
            .max(&self.structural_zero_residual)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|Σc−1| = {:.6}, |Σd−1| = {:.6}, symmetry = {:.6}, structural zero = {:.6}, lengths {} (tol {:.3}) → {}",
            self.sum_c_residual,
            self.sum_d_residual,
            self.symmetry_residual,
            self.structural_zero_residual,
            if self.length_ok { "ok" } else { "wrong" },
            self.tolerance,
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Default validation tolerance `2^(8 − precision)`.
pub fn default_tolerance(precision: usize) -> BigScalar {
    BigScalar::pow2(8 - precision as i64, precision)
}

fn palindrome_residual(v: &[BigScalar], precision: usize) -> BigScalar {
    let n = v.len();
    (0..n / 2).fold(BigScalar::zero(precision), |acc, i| {
        acc.max(&(&v[i] - &v[n - 1 - i]).abs())
    })
}

/// Sum and symmetry residuals of a coefficient set.
pub fn validate(coeffs: &SplittingCoefficients, tol: &BigScalar) -> ValidationReport {
    let p = coeffs.precision();
    let k = coeffs.k();
    let one = BigScalar::one(p);
    let length_ok = coeffs.c.len() == k && coeffs.d.len() == k && coeffs.stages >= 1;
    if !length_ok {
        let big = BigScalar::from_i64(1, p);
        return ValidationReport {
            sum_c_residual: big.clone(),
            sum_d_residual: big.clone(),
            symmetry_residual: big.clone(),
            structural_zero_residual: big,
            length_ok,
            tolerance: tol.clone(),
        };
    }
    let sum_c_residual = (&sum(&coeffs.c, p) - &one).abs();
    let sum_d_residual = (&sum(&coeffs.d, p) - &one).abs();
    let symmetry_residual = palindrome_residual(coeffs.outer(), p)
        .max(&palindrome_residual(coeffs.inner(), p));
    let structural_zero_residual = match coeffs.scheme {
        SchemeTag::Aba => coeffs.d[k - 1].abs(),
        SchemeTag::Bab => coeffs.c[k - 1].abs(),
    };
    ValidationReport {
        sum_c_residual,
        sum_d_residual,
        symmetry_residual,
        structural_zero_residual,
        length_ok,
        tolerance: tol.clone(),
    }
}

/// `1 / (2 − 2^{1/3})`, the long step of the 3-stage fourth-order composition.
fn ruth_long_step(precision: usize) -> BigScalar {
    let two = BigScalar::from_i64(2, precision);
    &BigScalar::one(precision) / &(&two - &two.cbrt())
}

/// Three-stage fourth-order method, drift first:
/// c = (w/2, 1/2 − w/2, 1/2 − w/2, w/2), d = (w, 1 − 2w, w, 0) with w = 1/(2 − 2^{1/3}).
pub fn ruth_coefficients(precision: usize) -> SplittingCoefficients {
    let w = ruth_long_step(precision);
    let half_w = &w / &BigScalar::from_i64(2, precision);
    complete_symmetric(&[w], &[half_w], SchemeTag::Aba, 3, precision)
        .expect("3-stage counts are fixed")
        .named("Ruth")
        .with_provenance(Provenance::RuthEq15)
        .with_general_order(4)
}

/// The same three-stage solution written kick first:
/// d1 = d4 = 1/(2(2 − 2^{1/3})), c1 = c3 = 1/(2 − 2^{1/3}).
pub fn ruth_coefficients_bab(precision: usize) -> SplittingCoefficients {
    let w = ruth_long_step(precision);
    let half_w = &w / &BigScalar::from_i64(2, precision);
    complete_symmetric(&[half_w], &[w], SchemeTag::Bab, 3, precision)
        .expect("3-stage counts are fixed")
        .named("Ruth BAB")
        .with_provenance(Provenance::RuthEq15)
        .with_general_order(4)
}

/// Residuals of the three fourth-order identities for a symmetric 3-stage
/// kick-first set, in kick-first labels (d1, d2 kicks; c1, c2 drifts):
/// `1 = 2(d1+d2)(2c1+c2)`, `1 = 12 c1 d2 (c1+c2)/(2c1+c2)`,
/// `1 = 24 c1 d2 (2 c1 d1 + 2 c2 d1 + c2 d2)`.
pub fn three_stage_identity_residuals(
    c1: &BigScalar,
    c2: &BigScalar,
    d1: &BigScalar,
    d2: &BigScalar,
) -> [BigScalar; 3] {
    let p = c1.precision();
    let n = |v: i64| BigScalar::from_i64(v, p);
    let one = n(1);
    let two_c1_c2 = &(&n(2) * c1) + c2;
    let r1 = &one - &(&(&n(2) * &(d1 + d2)) * &two_c1_c2);
    let r2 = &one - &(&(&(&(&n(12) * c1) * d2) * &(c1 + c2)) / &two_c1_c2);
    let inner = &(&(&(&n(2) * c1) * d1) + &(&(&n(2) * c2) * d1)) + &(c2 * d2);
    let r3 = &one - &(&(&(&n(24) * c1) * d2) * &inner);
    [r1.abs(), r2.abs(), r3.abs()]
}

/// Same identities in binary64.
pub fn three_stage_identity_residuals_f64(c1: f64, c2: f64, d1: f64, d2: f64) -> [f64; 3] {
    let two_c1_c2 = 2.0 * c1 + c2;
    [
        (1.0 - 2.0 * (d1 + d2) * two_c1_c2).abs(),
        (1.0 - 12.0 * c1 * d2 * (c1 + c2) / two_c1_c2).abs(),
        (1.0 - 24.0 * c1 * d2 * (2.0 * c1 * d1 + 2.0 * c2 * d1 + c2 * d2)).abs(),
    ]
}
