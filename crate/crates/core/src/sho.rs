//! One composition step applied to the harmonic oscillator `H = p²/2 + q²/2`
//! from `q_a = 1, p_a = −1`, expanded as a polynomial in τ.
//!
//! The step is linear in `(q, p)`, so propagating `q` and `p` as truncated
//! τ-series through the substeps gives the exact coefficients `ζ_λ` of the
//! final position. Comparing with the exact flow `q(t) = cos t − sin t` gives
//! the defects `κ_λ = |q^{(λ)}(0) − λ! ζ_λ|`.

use std::fmt::Write as _;

use crate::coefficients::{DecompositionMode, SplittingCoefficients};
use crate::precision::{BigScalar, TauSeries, DEFAULT_PRECISION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompositionSetting {
    pub mode: DecompositionMode,
    pub lambda_max: usize,
}

impl DecompositionSetting {
    pub fn new(mode: DecompositionMode, lambda_max: usize) -> Self {
        Self { mode, lambda_max }
    }

    /// Native mode of the set with `λ_max = 2s + 2`, enough to hold every term
    /// the step produces.
    pub fn native(coeffs: &SplittingCoefficients) -> Self {
        Self::new(coeffs.native_mode, default_lambda_max(coeffs))
    }
}

pub fn default_lambda_max(coeffs: &SplittingCoefficients) -> usize {
    2 * coeffs.stages + 2
}

/// Zero threshold for κ: `1e-70` at 256 bits, scaled by `2^(256 − bits)`.
pub fn order_tolerance(precision: usize) -> BigScalar {
    let p = precision.max(64);
    let base = BigScalar::parse("1e-70", p).expect("literal");
    &base * &BigScalar::pow2(256 - p as i64, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaSpectrum {
    /// Position coefficients ζ_λ, λ = 0..=λ_max.
    pub zeta: Vec<BigScalar>,
    /// Momentum coefficients of the final state.
    pub momentum_zeta: Vec<BigScalar>,
}

impl ZetaSpectrum {
    pub fn lambda_max(&self) -> usize {
        self.zeta.len() - 1
    }

    /// `Σ ζ_λ τ^λ`.
    pub fn position_at(&self, tau: &BigScalar) -> BigScalar {
        TauSeries::from_coeffs(self.zeta.clone()).eval(tau)
    }

    pub fn momentum_at(&self, tau: &BigScalar) -> BigScalar {
        TauSeries::from_coeffs(self.momentum_zeta.clone()).eval(tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaSpectrum {
    /// κ_λ for λ = 0..=λ_H; κ_0 is kept so that indices match λ.
    pub kappa: Vec<BigScalar>,
}

impl KappaSpectrum {
    pub fn lambda_h(&self) -> usize {
        self.kappa.len() - 1
    }

    /// `max κ_λ` over `lo..=hi`.
    pub fn max_over(&self, lo: usize, hi: usize) -> BigScalar {
        let p = self.kappa[0].precision();
        self.kappa[lo..=hi.min(self.lambda_h())]
            .iter()
            .fold(BigScalar::zero(p), |m, k| m.max(k))
    }
}

/// One drift or kick with its coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Drift,
    Kick,
}

/// Substep sequence the setting prescribes for a coefficient set.
fn op_sequence(coeffs: &SplittingCoefficients, mode: DecompositionMode) -> Vec<(Op, BigScalar)> {
    let outer = coeffs.outer();
    let inner = coeffs.inner();
    let p = coeffs.precision();
    let mut ops = Vec::with_capacity(2 * outer.len() + 1);
    match mode {
        DecompositionMode::AbaNative => {
            for (i, a) in outer.iter().enumerate() {
                ops.push((Op::Drift, a.clone()));
                if let Some(b) = inner.get(i) {
                    ops.push((Op::Kick, b.clone()));
                }
            }
        }
        DecompositionMode::BabNative => {
            for (i, b) in outer.iter().enumerate() {
                ops.push((Op::Kick, b.clone()));
                if let Some(a) = inner.get(i) {
                    ops.push((Op::Drift, a.clone()));
                }
            }
        }
        DecompositionMode::BabPrime => {
            // drift-first loop over c_0 = 0, c_1..c_s, c_{s+1} = 0
            let mut drifts = vec![BigScalar::zero(p)];
            drifts.extend(inner.iter().cloned());
            drifts.push(BigScalar::zero(p));
            for (i, a) in drifts.iter().enumerate() {
                ops.push((Op::Drift, a.clone()));
                if let Some(b) = outer.get(i) {
                    ops.push((Op::Kick, b.clone()));
                }
            }
        }
    }
    ops
}

/// Series route: ζ_λ for λ = 0..=λ_max under the given setting.
pub fn decompose(coeffs: &SplittingCoefficients, setting: &DecompositionSetting) -> ZetaSpectrum {
    let p = coeffs.precision();
    let lm = setting.lambda_max;
    let mut q = TauSeries::constant(BigScalar::one(p), lm);
    let mut mom = TauSeries::constant(-BigScalar::one(p), lm);
    for (op, a) in op_sequence(coeffs, setting.mode) {
        if a.is_zero() {
            continue;
        }
        match op {
            // q += τ a p/m, m = 1
            Op::Drift => q.add_scaled(&mom, &a, 1),
            // p −= τ a k q, k = 1
            Op::Kick => mom.add_scaled(&q, &-a, 1),
        }
    }
    ZetaSpectrum {
        zeta: q.into_coeffs(),
        momentum_zeta: mom.into_coeffs(),
    }
}

/// `q^{(λ)}(0)` of `cos t − sin t`: 1, −1, −1, 1, repeating.
pub fn exact_derivative(lambda: usize) -> i64 {
    match lambda % 4 {
        0 | 3 => 1,
        _ => -1,
    }
}

/// κ_λ for λ = 0..=λ_H from a ζ spectrum.
pub fn kappa_from_zeta(zeta: &ZetaSpectrum, lambda_h: usize) -> KappaSpectrum {
    let p = zeta.zeta[0].precision();
    let kappa = (0..=lambda_h)
        .map(|l| {
            let z = zeta
                .zeta
                .get(l)
                .cloned()
                .unwrap_or_else(|| BigScalar::zero(p));
            (&BigScalar::from_i64(exact_derivative(l), p) - &(&BigScalar::factorial(l as u32, p) * &z))
                .abs()
        })
        .collect();
    KappaSpectrum { kappa }
}

/// κ_λ = |q^{(λ)}(0) − λ! ζ_λ| for λ ≤ λ_H (λ_H may exceed λ_max; the higher
/// ζ are then zero).
pub fn kappa_spectrum(
    coeffs: &SplittingCoefficients,
    setting: &DecompositionSetting,
    lambda_h: usize,
) -> KappaSpectrum {
    kappa_from_zeta(&decompose(coeffs, setting), lambda_h)
}

/// `(sho_order, general_order)`: the largest N with κ_λ below the zero
/// threshold for all λ ≤ N, and `min(N, 4)`.
pub fn verify_order(coeffs: &SplittingCoefficients, setting: &DecompositionSetting) -> (u32, u32) {
    let tol = order_tolerance(coeffs.precision());
    let kap = kappa_spectrum(coeffs, setting, setting.lambda_max);
    let n = kap.kappa.iter().skip(1).take_while(|k| **k < tol).count() as u32;
    (n, n.min(4))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecurrenceError {
    #[error("drift coefficient {index} is zero; the ratio recurrence is undefined")]
    ZeroDrift { index: usize },
}

/// Position rows of the eliminated-momentum recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceTable {
    /// `Q_h` for h = 0..=n; row 0 is `q_a`.
    pub rows: Vec<TauSeries>,
    /// Drift coefficients `c_h` in application order.
    pub drifts: Vec<BigScalar>,
    /// `C_h = c_h / c_{h−1}`, h ≥ 2 (entry 0 and 1 unused, set to zero).
    pub ratios: Vec<BigScalar>,
    /// `D_h = −c_h K_h`, with `K_h` the kick applied just before drift h.
    pub products: Vec<BigScalar>,
}

impl RecurrenceTable {
    pub fn final_row(&self) -> &TauSeries {
        self.rows.last().expect("row 0 always present")
    }
}

/// Table route: with momentum eliminated, consecutive positions satisfy
/// `Q_h = (1 + C_h) Q_{h−1} − C_h Q_{h−2} + τ² D_h Q_{h−1}` (k = m = 1) and
/// `Q_1 = q_a + τ c_1 p_a + τ² D_1 q_a`.
pub fn decompose_recurrence(
    coeffs: &SplittingCoefficients,
    setting: &DecompositionSetting,
) -> Result<RecurrenceTable, RecurrenceError> {
    let p = coeffs.precision();
    let lm = setting.lambda_max;
    // fold the sequence into drifts, each preceded by its accumulated kick
    let mut drifts: Vec<BigScalar> = Vec::new();
    let mut kicks: Vec<BigScalar> = Vec::new();
    let mut pending = BigScalar::zero(p);
    let ops = op_sequence(coeffs, setting.mode);
    let first_drift = ops.iter().position(|(o, a)| *o == Op::Drift && !a.is_zero());
    let last_drift = ops.iter().rposition(|(o, a)| *o == Op::Drift && !a.is_zero());
    for (idx, (op, a)) in ops.iter().enumerate() {
        match op {
            Op::Kick => pending = &pending + a,
            Op::Drift => {
                let outer_pad = a.is_zero()
                    && (first_drift.is_none_or(|f| idx < f) || last_drift.is_none_or(|l| idx > l));
                if outer_pad {
                    continue;
                }
                if a.is_zero() {
                    return Err(RecurrenceError::ZeroDrift {
                        index: drifts.len() + 1,
                    });
                }
                drifts.push(a.clone());
                kicks.push(std::mem::replace(&mut pending, BigScalar::zero(p)));
            }
        }
    }
    let n = drifts.len();
    let zero = BigScalar::zero(p);
    let mut ratios = vec![zero.clone(); n + 1];
    let mut products = vec![zero.clone(); n + 1];
    for h in 1..=n {
        products[h] = -(&drifts[h - 1] * &kicks[h - 1]);
        if h >= 2 {
            ratios[h] = &drifts[h - 1] / &drifts[h - 2];
        }
    }
    let one = BigScalar::one(p);
    let mut rows = vec![TauSeries::constant(one.clone(), lm)];
    if n >= 1 {
        let mut r1 = TauSeries::constant(one.clone(), lm);
        r1.add_scaled(&TauSeries::constant(-one.clone(), lm), &drifts[0], 1);
        r1.add_scaled(&rows[0], &products[1], 2);
        rows.push(r1);
    }
    for h in 2..=n {
        let (prev, prev2) = (&rows[h - 1], &rows[h - 2]);
        let mut r = prev.scale(&(&one + &ratios[h]), 0);
        r.add_scaled(prev2, &-ratios[h].clone(), 0);
        r.add_scaled(prev, &products[h], 2);
        rows.push(r);
    }
    let mut d = vec![zero.clone()];
    d.extend(drifts);
    Ok(RecurrenceTable {
        rows,
        drifts: d,
        ratios,
        products,
    })
}

/// ζ by the recurrence where defined, otherwise by the series route. The flag
/// reports whether the fallback was taken.
pub fn decompose_via_recurrence(
    coeffs: &SplittingCoefficients,
    setting: &DecompositionSetting,
) -> (Vec<BigScalar>, bool) {
    match decompose_recurrence(coeffs, setting) {
        Ok(t) => (t.final_row().coeffs().to_vec(), false),
        Err(_) => (decompose(coeffs, setting).zeta, true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub method: String,
    pub mode: DecompositionMode,
    pub lambda: usize,
    pub kappa: BigScalar,
}

/// κ spectra under the drift-first and kick-first decompositions, plus the
/// padded variant when it is the set's native mode.
pub fn spectrum_report(coeffs: &SplittingCoefficients, lambda_max: Option<usize>) -> Vec<SpectrumRow> {
    let lm = lambda_max.unwrap_or_else(|| default_lambda_max(coeffs));
    let mut modes = vec![DecompositionMode::AbaNative, DecompositionMode::BabNative];
    if coeffs.native_mode == DecompositionMode::BabPrime {
        modes.push(DecompositionMode::BabPrime);
    }
    spectrum_rows(coeffs, &modes, lm)
}

pub fn spectrum_rows(
    coeffs: &SplittingCoefficients,
    modes: &[DecompositionMode],
    lambda_max: usize,
) -> Vec<SpectrumRow> {
    let mut out = Vec::new();
    for &mode in modes {
        let k = kappa_spectrum(coeffs, &DecompositionSetting::new(mode, lambda_max), lambda_max);
        for (lambda, kappa) in k.kappa.into_iter().enumerate() {
            out.push(SpectrumRow {
                method: coeffs.name.clone(),
                mode,
                lambda,
                kappa,
            });
        }
    }
    out
}

/// `method,mode,lambda,kappa` with κ in full-precision decimal.
pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("method,mode,lambda,kappa\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            crate::csv_field(&r.method),
            r.mode.label(),
            r.lambda,
            r.kappa.to_decimal()
        );
    }
    s
}

/// Convenience: native-mode order of a set at the default precision.
pub fn native_order(coeffs: &SplittingCoefficients) -> u32 {
    let c = if coeffs.precision() < DEFAULT_PRECISION {
        coeffs.with_precision(DEFAULT_PRECISION)
    } else {
        coeffs.clone()
    };
    verify_order(&c, &DecompositionSetting::native(&c)).0
}
