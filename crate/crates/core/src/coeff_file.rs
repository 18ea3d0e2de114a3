//! Line-oriented coefficient files.
//!
//! ```text
//! # comment
//! name BAB's8o7H
//! scheme BAB
//! stages 8
//! digits 76
//! d 1 0.0538184115480034769403763798524605188562842390760879592632218376015166638395
//! c 1 0.1486140577445185629163082471176700173109512976367237631150576219945233462284
//! symmetry table4
//! ```
//!
//! With `symmetry table4` only the leading free parameters are listed and the
//! middle entries are recomputed on load. With `symmetry full` every entry is
//! listed (structural zero excluded) and the set is validated instead.
//!
//! Optional headers: `provenance`, `order` (general order), `native`
//! (decomposition mode) and `checksum` (first 16 hex digits of the SHA-256 of
//! the normalized `d`/`c` lines).

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::coefficients::{
    complete_symmetric, default_tolerance, free_counts, validate, CoefficientError,
    DecompositionMode, Provenance, SchemeTag, SplittingCoefficients,
};
use crate::precision::{decimal_digits_for, normalize_precision, BigScalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    Table4,
    Full,
}

fn syntax(line: usize, message: impl Into<String>) -> CoefficientError {
    CoefficientError::Syntax {
        line,
        message: message.into(),
    }
}

fn checksum_of(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Parses coefficient-file text at the given working precision.
pub fn parse_coefficient_text(
    text: &str,
    precision: usize,
) -> Result<SplittingCoefficients, CoefficientError> {
    let precision = normalize_precision(precision);
    let mut name = None;
    let mut scheme = None;
    let mut stages: Option<usize> = None;
    let mut digits: Option<usize> = None;
    let mut provenance = Provenance::UserFile;
    let mut order = 0u32;
    let mut native = None;
    let mut checksum = None;
    let mut symmetry = None;
    let mut entries: Vec<(char, usize, BigScalar, usize)> = Vec::new();
    let mut payload = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if symmetry.is_some() {
            return Err(syntax(ln, "content after the symmetry footer"));
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let need = |what: &str| {
            if rest.is_empty() {
                Err(syntax(ln, format!("{key} needs {what}")))
            } else {
                Ok(rest)
            }
        };
        match key {
            "name" => name = Some(need("a value")?.to_string()),
            "scheme" => {
                scheme = Some(
                    SchemeTag::parse(need("ABA or BAB")?)
                        .ok_or_else(|| syntax(ln, format!("unknown scheme {rest:?}")))?,
                )
            }
            "stages" | "digits" | "order" => {
                let v: usize = need("an integer")?
                    .parse()
                    .map_err(|_| syntax(ln, format!("{key} is not an integer: {rest:?}")))?;
                match key {
                    "stages" => stages = Some(v),
                    "digits" => digits = Some(v),
                    _ => order = v as u32,
                }
            }
            "provenance" => {
                provenance = Provenance::parse(need("a value")?)
                    .ok_or_else(|| syntax(ln, format!("unknown provenance {rest:?}")))?
            }
            "native" => {
                native = Some(
                    DecompositionMode::parse(need("a mode")?)
                        .ok_or_else(|| syntax(ln, format!("unknown decomposition {rest:?}")))?,
                )
            }
            "checksum" => checksum = Some(need("a hex digest")?.to_ascii_lowercase()),
            "symmetry" => {
                symmetry = Some(match rest {
                    "table4" => Symmetry::Table4,
                    "full" => Symmetry::Full,
                    _ => return Err(syntax(ln, format!("unknown symmetry {rest:?}"))),
                })
            }
            "d" | "c" => {
                let mut parts = rest.split_whitespace();
                let (Some(i), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(syntax(ln, format!("expected `{key} <index> <decimal>`")));
                };
                let i: usize = i
                    .parse()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| syntax(ln, format!("bad index {i:?}")))?;
                let value = BigScalar::parse(v, precision).map_err(|e| syntax(ln, e.to_string()))?;
                payload.push(format!("{key} {i} {v}"));
                entries.push((key.chars().next().unwrap(), i, value, ln));
            }
            _ => return Err(syntax(ln, format!("unknown key {key:?}"))),
        }
    }

    let last = text.lines().count().max(1);
    let name = name.ok_or_else(|| syntax(last, "missing name header"))?;
    let scheme = scheme.ok_or_else(|| syntax(last, "missing scheme header"))?;
    let stages = stages.ok_or_else(|| syntax(last, "missing stages header"))?;
    let digits = digits.ok_or_else(|| syntax(last, "missing digits header"))?;
    let symmetry = symmetry.ok_or_else(|| syntax(last, "missing symmetry footer"))?;
    if stages == 0 {
        return Err(syntax(last, "stages must be at least 1"));
    }

    if let Some(expected) = checksum {
        let actual = checksum_of(&payload);
        if expected != actual {
            return Err(CoefficientError::Checksum { expected, actual });
        }
    }

    let k = stages + 1;
    let (nd, nc) = match symmetry {
        Symmetry::Table4 => free_counts(scheme, stages),
        Symmetry::Full => match scheme {
            SchemeTag::Aba => (k - 1, k),
            SchemeTag::Bab => (k, k - 1),
        },
    };
    let mut d: Vec<Option<BigScalar>> = vec![None; nd];
    let mut c: Vec<Option<BigScalar>> = vec![None; nc];
    for (kind, i, v, ln) in entries {
        let slot = if kind == 'd' { &mut d } else { &mut c };
        let n = slot.len();
        let cell = slot
            .get_mut(i - 1)
            .ok_or_else(|| syntax(ln, format!("{kind}({i}) out of range, expected 1..={n}")))?;
        if cell.replace(v).is_some() {
            return Err(syntax(ln, format!("{kind}({i}) given twice")));
        }
    }
    let collect = |v: Vec<Option<BigScalar>>, kind: char| -> Result<Vec<BigScalar>, CoefficientError> {
        v.into_iter()
            .enumerate()
            .map(|(i, x)| x.ok_or_else(|| syntax(last, format!("missing {kind}({})", i + 1))))
            .collect()
    };
    let (d, c) = (collect(d, 'd')?, collect(c, 'c')?);

    let default_native = match scheme {
        SchemeTag::Aba => DecompositionMode::AbaNative,
        SchemeTag::Bab => DecompositionMode::BabNative,
    };
    let coeffs = match symmetry {
        Symmetry::Table4 => complete_symmetric(&d, &c, scheme, stages, precision)?,
        Symmetry::Full => {
            let zero = BigScalar::zero(precision);
            let (mut c, mut d) = (c, d);
            match scheme {
                SchemeTag::Aba => d.push(zero),
                SchemeTag::Bab => c.push(zero),
            }
            let set = SplittingCoefficients {
                name: name.clone(),
                scheme,
                stages,
                c,
                d,
                provenance,
                native_mode: default_native,
                general_order: order,
                digits,
            };
            // literals with fewer digits than the working precision carry
            // their own rounding into the sums
            let literal_tol = BigScalar::parse(&format!("1e-{}", digits.saturating_sub(1)), precision)
                .expect("well-formed literal");
            let tol = default_tolerance(precision).max(&literal_tol);
            let report = validate(&set, &tol);
            if !report.passed() {
                return Err(CoefficientError::Invalid { name, report });
            }
            set
        }
    };
    Ok(coeffs
        .named(name)
        .with_provenance(provenance)
        .with_native_mode(native.unwrap_or(default_native))
        .with_general_order(order)
        .with_digits(digits))
}

pub fn load_coefficient_file(
    path: impl AsRef<Path>,
    precision: usize,
) -> Result<SplittingCoefficients, CoefficientError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CoefficientError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_coefficient_text(&text, precision)
}

/// Serializes a set. Free-parameter form is used whenever completing the free
/// parameters reproduces the stored arrays bit for bit, otherwise every entry
/// is written out.
pub fn format_coefficient_text(coeffs: &SplittingCoefficients) -> String {
    let p = coeffs.precision();
    let (free_d, free_c) = coeffs.free_parameters();
    let completes = complete_symmetric(&free_d, &free_c, coeffs.scheme, coeffs.stages, p)
        .map(|s| s.c == coeffs.c && s.d == coeffs.d)
        .unwrap_or(false);
    let (d, c, symmetry): (&[BigScalar], &[BigScalar], &str) = if completes {
        (&coeffs.d[..free_d.len()], &coeffs.c[..free_c.len()], "table4")
    } else {
        let k = coeffs.k();
        match coeffs.scheme {
            SchemeTag::Aba => (&coeffs.d[..k - 1], &coeffs.c[..], "full"),
            SchemeTag::Bab => (&coeffs.d[..], &coeffs.c[..k - 1], "full"),
        }
    };
    let payload: Vec<String> = d
        .iter()
        .enumerate()
        .map(|(i, v)| format!("d {} {}", i + 1, v.to_decimal()))
        .chain(
            c.iter()
                .enumerate()
                .map(|(i, v)| format!("c {} {}", i + 1, v.to_decimal())),
        )
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "name {}", coeffs.name);
    let _ = writeln!(out, "scheme {}", coeffs.scheme);
    let _ = writeln!(out, "stages {}", coeffs.stages);
    let _ = writeln!(out, "digits {}", decimal_digits_for(p));
    let _ = writeln!(out, "provenance {}", coeffs.provenance.label());
    let _ = writeln!(out, "order {}", coeffs.general_order);
    let _ = writeln!(out, "native {}", coeffs.native_mode.label());
    let _ = writeln!(out, "checksum {}", checksum_of(&payload));
    for l in &payload {
        out.push_str(l);
        out.push('\n');
    }
    let _ = writeln!(out, "symmetry {symmetry}");
    out
}

pub fn save_coefficient_file(
    coeffs: &SplittingCoefficients,
    path: impl AsRef<Path>,
) -> Result<(), CoefficientError> {
    let path = path.as_ref();
    std::fs::write(path, format_coefficient_text(coeffs)).map_err(|e| CoefficientError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
