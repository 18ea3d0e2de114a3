//! Derivative-free search for coefficient sets with a prescribed harmonic
//! order, by adaptive Nelder–Mead on `κ_max = max(κ_2, …, κ_λH)`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::coeff_file::save_coefficient_file;
use crate::coefficients::{
    complete_symmetric, free_counts, CoefficientError, DecompositionMode, Provenance, SchemeTag,
    SplittingCoefficients,
};
use crate::precision::{normalize_precision, BigScalar, DEFAULT_PRECISION};
use crate::sho::{decompose, kappa_from_zeta, DecompositionSetting};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub scheme: SchemeTag,
    /// Decomposition the order constraint is imposed under.
    pub mode: DecompositionMode,
    pub stages: usize,
    pub lambda_h: usize,
    pub precision: usize,
    pub kappa_tol: BigScalar,
    pub restarts: usize,
    pub rng_seed: u64,
    pub max_iterations: usize,
    /// Re-run at doubled precision from a converged point.
    pub polish: bool,
}

impl SearchSpec {
    pub fn new(scheme: SchemeTag, stages: usize, lambda_h: usize) -> Self {
        let precision = DEFAULT_PRECISION;
        Self {
            scheme,
            mode: match scheme {
                SchemeTag::Aba => DecompositionMode::AbaNative,
                SchemeTag::Bab => DecompositionMode::BabNative,
            },
            stages,
            lambda_h,
            precision,
            kappa_tol: BigScalar::parse("1e-60", precision).expect("literal"),
            restarts: 64,
            rng_seed: 0,
            max_iterations: 4_000,
            polish: true,
        }
    }

    pub fn with_mode(mut self, mode: DecompositionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_precision(mut self, bits: usize) -> Self {
        self.precision = normalize_precision(bits);
        self.kappa_tol = self.kappa_tol.with_precision(self.precision);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.restarts = n;
        self
    }

    pub fn with_kappa_tol(mut self, tol: BigScalar) -> Self {
        self.kappa_tol = tol.with_precision(self.precision);
        self
    }

    /// `(free d, free c)` counts.
    pub fn free_counts(&self) -> (usize, usize) {
        free_counts(self.scheme, self.stages)
    }

    pub fn dimension(&self) -> usize {
        let (a, b) = self.free_counts();
        a + b
    }

    /// Default constraint: `stages + 1` for five or more stages, capped at 7.
    pub fn default_lambda_h(stages: usize) -> usize {
        if stages >= 5 {
            (stages + 1).min(7)
        } else {
            stages + 1
        }
    }

    fn name(&self) -> String {
        let prefix = match (self.scheme, self.mode) {
            (SchemeTag::Bab, DecompositionMode::BabPrime) => "BAB'".to_string(),
            (s, _) => s.to_string(),
        };
        format!("{prefix}s{}o{}H", self.stages, self.lambda_h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub coeffs: SplittingCoefficients,
    /// Free parameters, d first then c.
    pub free: Vec<BigScalar>,
    pub kappa_max: BigScalar,
    pub coeff_abs_sum: BigScalar,
    /// κ_{λH+1}, κ_{λH+2}.
    pub higher_order_kappas: Vec<BigScalar>,
    pub iterations: usize,
    /// Simplex transformations performed (reflect, expand, contract, shrink).
    pub simplex_moves: usize,
    pub converged: bool,
    pub start_index: Option<usize>,
}

impl SearchResult {
    pub fn kappa_next(&self) -> &BigScalar {
        &self.higher_order_kappas[0]
    }
}

fn split_free(free: &[BigScalar], spec: &SearchSpec) -> (Vec<BigScalar>, Vec<BigScalar>) {
    let (nd, _) = spec.free_counts();
    (free[..nd].to_vec(), free[nd..].to_vec())
}

/// Completed coefficient set for a free-parameter vector.
pub fn complete(free: &[BigScalar], spec: &SearchSpec) -> Result<SplittingCoefficients, CoefficientError> {
    let (d, c) = split_free(free, spec);
    Ok(complete_symmetric(&d, &c, spec.scheme, spec.stages, spec.precision)?
        .named(spec.name())
        .with_native_mode(spec.mode)
        .with_provenance(Provenance::OptimizerOutput)
        .with_general_order(spec.lambda_h.min(4) as u32))
}

fn sentinel(precision: usize) -> BigScalar {
    BigScalar::parse("1e30", precision).expect("literal")
}

fn kappas(free: &[BigScalar], spec: &SearchSpec, upto: usize) -> Option<Vec<BigScalar>> {
    let coeffs = complete(free, spec).ok()?;
    let z = decompose(&coeffs, &DecompositionSetting::new(spec.mode, upto));
    let k = kappa_from_zeta(&z, upto).kappa;
    k.iter().all(BigScalar::is_finite).then_some(k)
}

/// `max κ_λ` over `λ = 2..=λ_H`; a large sentinel if anything is non-finite.
pub fn objective(free: &[BigScalar], spec: &SearchSpec) -> BigScalar {
    assert_eq!(free.len(), spec.dimension(), "free-parameter count does not match the search");
    match kappas(free, spec, spec.lambda_h) {
        Some(k) => k[2..].iter().fold(BigScalar::zero(spec.precision), |m, x| m.max(x)),
        None => sentinel(spec.precision),
    }
}

/// Uniform start in `[−1, 1]^n` for restart `index`.
pub fn random_start(spec: &SearchSpec, index: usize) -> Vec<BigScalar> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.rng_seed.wrapping_add(index as u64));
    (0..spec.dimension())
        .map(|_| BigScalar::from_f64(rng.gen_range(-1.0..=1.0), spec.precision))
        .collect()
}

struct Simplex {
    x: Vec<Vec<BigScalar>>,
    f: Vec<BigScalar>,
}

fn affine(a: &[BigScalar], b: &[BigScalar], t: &BigScalar) -> Vec<BigScalar> {
    // a + t (b − a)
    a.iter().zip(b).map(|(u, v)| u + &(t * &(v - u))).collect()
}

impl Simplex {
    fn new(center: &[BigScalar], edge: &BigScalar, spec: &SearchSpec) -> Self {
        let mut x = vec![center.to_vec()];
        for i in 0..center.len() {
            let mut v = center.to_vec();
            v[i] = &v[i] + edge;
            x.push(v);
        }
        let f = x.iter().map(|v| objective(v, spec)).collect();
        let mut s = Self { x, f };
        s.sort();
        s
    }

    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.x.len()).collect();
        idx.sort_by(|&a, &b| self.f[a].partial_cmp(&self.f[b]).unwrap_or(Ordering::Equal));
        self.x = idx.iter().map(|&i| self.x[i].clone()).collect();
        self.f = idx.iter().map(|&i| self.f[i].clone()).collect();
    }

    fn diameter(&self) -> BigScalar {
        let p = self.f[0].precision();
        let mut d = BigScalar::zero(p);
        for v in &self.x[1..] {
            for (a, b) in v.iter().zip(&self.x[0]) {
                d = d.max(&(a - b).abs());
            }
        }
        d
    }
}

/// Gao–Han dimension-dependent coefficients (reflect, expand, contract, shrink).
fn adaptive_parameters(n: usize, p: usize) -> [BigScalar; 4] {
    let nf = n as i64;
    let alpha = BigScalar::one(p);
    let beta = &alpha + &BigScalar::from_ratio(2, nf, p);
    let gamma = &BigScalar::from_ratio(3, 4, p) - &BigScalar::from_ratio(1, 2 * nf, p);
    let delta = if n == 1 {
        BigScalar::from_ratio(1, 2, p)
    } else {
        &alpha - &BigScalar::from_ratio(1, nf, p)
    };
    [alpha, beta, gamma, delta]
}

struct RunOutcome {
    best: Vec<BigScalar>,
    f: BigScalar,
    iterations: usize,
    moves: usize,
    converged: bool,
}

/// Nelder–Mead down to `target`, restarting the simplex around the best point
/// whenever it collapses or stalls.
fn nelder_mead(
    start: &[BigScalar],
    spec: &SearchSpec,
    target: &BigScalar,
    edge0: &BigScalar,
    max_iterations: usize,
) -> RunOutcome {
    let n = start.len();
    let p = spec.precision;
    let f_start = objective(start, spec);
    if f_start < *target {
        return RunOutcome {
            best: start.to_vec(),
            f: f_start,
            iterations: 0,
            moves: 0,
            converged: true,
        };
    }
    let [alpha, beta, gamma, delta] = adaptive_parameters(n, p);
    let bound = BigScalar::from_i64(20, p);
    let mut simplex = Simplex::new(start, edge0, spec);
    let mut moves = 0usize;
    let mut it = 0usize;
    let stall_window = 40 * (n + 1);
    let mut checkpoint = (0usize, simplex.f[0].clone());
    let tenth = BigScalar::from_ratio(1, 10, p);
    while it < max_iterations {
        it += 1;
        if simplex.f[0] < *target {
            break;
        }
        if simplex.x[0].iter().any(|v| v.abs() > bound) {
            break;
        }
        // stall or collapse: rebuild around the best vertex
        let diam = simplex.diameter();
        if it - checkpoint.0 >= stall_window {
            let improved = simplex.f[0] < &checkpoint.1 * &tenth;
            let collapsed = diam.is_zero() || (&diam / &simplex.f[0].max(&diam)) < BigScalar::pow2(-40, p);
            if !improved || collapsed {
                let edge = diam
                    .max(&BigScalar::pow2(-(p as i64) + 16, p))
                    .max(&simplex.f[0].abs())
                    * BigScalar::from_i64(4, p);
                let edge = if edge > *edge0 { edge0.clone() } else { edge };
                let best = simplex.x[0].clone();
                simplex = Simplex::new(&best, &edge, spec);
            }
            checkpoint = (it, simplex.f[0].clone());
        }
        let worst = n;
        let centroid: Vec<BigScalar> = (0..n)
            .map(|j| {
                let s = simplex.x[..n]
                    .iter()
                    .fold(BigScalar::zero(p), |a, v| &a + &v[j]);
                &s / &BigScalar::from_i64(n as i64, p)
            })
            .collect();
        let xr = affine(&centroid, &simplex.x[worst], &-alpha.clone());
        let fr = objective(&xr, spec);
        moves += 1;
        if fr < simplex.f[0] {
            let xe = affine(&centroid, &simplex.x[worst], &-beta.clone());
            let fe = objective(&xe, spec);
            if fe < fr {
                simplex.x[worst] = xe;
                simplex.f[worst] = fe;
            } else {
                simplex.x[worst] = xr;
                simplex.f[worst] = fr;
            }
        } else if fr < simplex.f[n - 1] {
            simplex.x[worst] = xr;
            simplex.f[worst] = fr;
        } else {
            let (xc, fc) = if fr < simplex.f[worst] {
                let xc = affine(&centroid, &simplex.x[worst], &-gamma.clone());
                let fc = objective(&xc, spec);
                (xc, fc)
            } else {
                let xc = affine(&centroid, &simplex.x[worst], &gamma);
                let fc = objective(&xc, spec);
                (xc, fc)
            };
            let accept = if fr < simplex.f[worst] { fc < fr } else { fc < simplex.f[worst] };
            if accept {
                simplex.x[worst] = xc;
                simplex.f[worst] = fc;
            } else {
                for i in 1..=n {
                    simplex.x[i] = affine(&simplex.x[0], &simplex.x[i], &delta);
                    simplex.f[i] = objective(&simplex.x[i], spec);
                }
            }
        }
        simplex.sort();
    }
    let converged = simplex.f[0] < *target;
    RunOutcome {
        best: simplex.x[0].clone(),
        f: simplex.f[0].clone(),
        iterations: it,
        moves,
        converged,
    }
}

fn finish(free: Vec<BigScalar>, spec: &SearchSpec, run: &RunOutcome, start_index: Option<usize>) -> SearchResult {
    let coeffs = complete(&free, spec).expect("dimension checked by objective");
    let k = kappas(&free, spec, spec.lambda_h + 2).unwrap_or_else(|| {
        vec![sentinel(spec.precision); spec.lambda_h + 3]
    });
    let kappa_max = k[2..=spec.lambda_h]
        .iter()
        .fold(BigScalar::zero(spec.precision), |m, x| m.max(x));
    SearchResult {
        coeff_abs_sum: coeffs.abs_sum(),
        coeffs,
        free,
        converged: kappa_max < spec.kappa_tol,
        kappa_max,
        higher_order_kappas: k[spec.lambda_h + 1..].to_vec(),
        iterations: run.iterations,
        simplex_moves: run.moves,
        start_index,
    }
}

/// Minimizes from `start`, or from `random_start(spec, 0)` when `None`.
pub fn minimize(spec: &SearchSpec, start: Option<&[BigScalar]>) -> SearchResult {
    match start {
        Some(s) => minimize_indexed(spec, s, None),
        None => minimize_indexed(spec, &random_start(spec, 0), Some(0)),
    }
}

/// Signed defects `q^{(λ)}(0) − λ! ζ_λ` for `λ = 2..=λ_H`.
fn residuals(free: &[BigScalar], spec: &SearchSpec) -> Option<Vec<BigScalar>> {
    let p = spec.precision;
    let coeffs = complete(free, spec).ok()?;
    let z = decompose(&coeffs, &DecompositionSetting::new(spec.mode, spec.lambda_h));
    let r: Vec<BigScalar> = (2..=spec.lambda_h)
        .map(|l| {
            &BigScalar::from_i64(crate::sho::exact_derivative(l), p)
                - &(&BigScalar::factorial(l as u32, p) * &z.zeta[l])
        })
        .collect();
    r.iter().all(BigScalar::is_finite).then_some(r)
}

fn max_abs(v: &[BigScalar], p: usize) -> BigScalar {
    v.iter().fold(BigScalar::zero(p), |m, x| m.max(&x.abs()))
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. `None` if singular.
fn solve(mut a: Vec<Vec<BigScalar>>, mut b: Vec<BigScalar>) -> Option<Vec<BigScalar>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(Ordering::Equal)
        })?;
        if a[piv][col].is_zero() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = &a[row][col] / &a[col][col];
            if f.is_zero() {
                continue;
            }
            for k in col..n {
                a[row][k] = &a[row][k] - &(&f * &a[col][k]);
            }
            b[row] = &b[row] - &(&f * &b[col]);
        }
    }
    let mut x = vec![BigScalar::zero(b[0].precision()); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = &acc - &(&a[row][k] * &x[k]);
        }
        x[row] = &acc / &a[row][row];
    }
    Some(x)
}

/// Levenberg–Marquardt on the signed defects with a central-difference
/// Jacobian, stopping once `max |r| < target`.
fn levenberg_marquardt(
    start: &[BigScalar],
    spec: &SearchSpec,
    target: &BigScalar,
    max_iterations: usize,
) -> RunOutcome {
    let p = spec.precision;
    let n = start.len();
    let mut x = start.to_vec();
    let Some(mut r) = residuals(&x, spec) else {
        return RunOutcome {
            f: sentinel(p),
            best: x,
            iterations: 0,
            moves: 0,
            converged: false,
        };
    };
    let norm2 = |r: &[BigScalar]| r.iter().fold(BigScalar::zero(p), |a, v| &a + &(v * v));
    let mut cost = norm2(&r);
    let h = BigScalar::pow2(-(p as i64) / 3, p);
    let two_h = &h + &h;
    let mut mu = BigScalar::parse("1e-3", p).expect("literal");
    let (up, down) = (BigScalar::from_i64(4, p), BigScalar::from_ratio(1, 3, p));
    let mu_cap = BigScalar::parse("1e30", p).expect("literal");
    let bound = BigScalar::from_i64(20, p);
    let mut it = 0;
    while it < max_iterations && max_abs(&r, p) >= *target && mu < mu_cap {
        it += 1;
        // J[i][j] = ∂r_i/∂x_j
        let mut jac = vec![vec![BigScalar::zero(p); n]; r.len()];
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] = &xp[j] + &h;
            xm[j] = &xm[j] - &h;
            let (Some(rp), Some(rm)) = (residuals(&xp, spec), residuals(&xm, spec)) else {
                mu = mu_cap.clone();
                break;
            };
            for i in 0..r.len() {
                jac[i][j] = &(&rp[i] - &rm[i]) / &two_h;
            }
        }
        let jtj: Vec<Vec<BigScalar>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| jac.iter().fold(BigScalar::zero(p), |s, row| &s + &(&row[a] * &row[b])))
                    .collect()
            })
            .collect();
        let jtr: Vec<BigScalar> = (0..n)
            .map(|a| jac.iter().zip(&r).fold(BigScalar::zero(p), |s, (row, ri)| &s - &(&row[a] * ri)))
            .collect();
        loop {
            let mut m = jtj.clone();
            for (i, row) in m.iter_mut().enumerate() {
                let damp = &mu * &jtj[i][i].max(&BigScalar::pow2(-(p as i64) / 2, p));
                row[i] = &row[i] + &damp;
            }
            let accepted = solve(m, jtr.clone()).and_then(|step| {
                let xn: Vec<BigScalar> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                if xn.iter().any(|v| v.abs() > bound) {
                    return None;
                }
                let rn = residuals(&xn, spec)?;
                let cn = norm2(&rn);
                (cn < cost).then_some((xn, rn, cn))
            });
            match accepted {
                Some((xn, rn, cn)) => {
                    x = xn;
                    r = rn;
                    cost = cn;
                    mu = &mu * &down;
                    break;
                }
                None => {
                    mu = &mu * &up;
                    if mu >= mu_cap {
                        break;
                    }
                }
            }
        }
    }
    let f = objective(&x, spec);
    RunOutcome {
        converged: f < *target,
        best: x,
        f,
        iterations: it,
        moves: 0,
    }
}

fn combine(a: &RunOutcome, b: RunOutcome) -> RunOutcome {
    RunOutcome {
        iterations: a.iterations + b.iterations,
        moves: a.moves + b.moves,
        ..b
    }
}

/// Simplex descent on `κ_max` until it stalls or reaches `1e-8`, then
/// Levenberg–Marquardt on the signed defects down to `kappa_tol`, then the
/// same at doubled precision three decades below the order threshold.
fn minimize_indexed(spec: &SearchSpec, start: &[BigScalar], index: Option<usize>) -> SearchResult {
    let p = spec.precision;
    let start: Vec<BigScalar> = start.iter().map(|x| x.with_precision(p)).collect();
    let edge = BigScalar::from_ratio(1, 20, p);
    let f0 = objective(&start, spec);
    if f0 < spec.kappa_tol {
        let run = RunOutcome {
            best: start,
            f: f0,
            iterations: 0,
            moves: 0,
            converged: true,
        };
        return finish(run.best.clone(), spec, &run, index);
    }
    // local refinement first; the simplex only runs when that fails
    let direct = levenberg_marquardt(&start, spec, &spec.kappa_tol, 60);
    let run = if direct.converged {
        direct
    } else {
        let switch = BigScalar::parse("1e-8", p).expect("literal").max(&spec.kappa_tol);
        let nm = combine(&direct, nelder_mead(&start, spec, &switch, &edge, spec.max_iterations));
        let lm = levenberg_marquardt(&nm.best, spec, &spec.kappa_tol, 200);
        if lm.f <= nm.f {
            combine(&nm, lm)
        } else {
            combine(&lm, nm)
        }
    };
    let polish_target = &crate::sho::order_tolerance(p) / &BigScalar::from_i64(1000, p);
    if !(run.converged && spec.polish && run.f >= polish_target) {
        return finish(run.best.clone(), spec, &run, index);
    }
    let hi = SearchSpec {
        precision: 2 * p,
        kappa_tol: polish_target.with_precision(2 * p),
        ..spec.clone()
    };
    let hi_start: Vec<BigScalar> = run.best.iter().map(|x| x.with_precision(2 * p)).collect();
    let hi_run = levenberg_marquardt(&hi_start, &hi, &hi.kappa_tol, 50);
    let polished: Vec<BigScalar> = hi_run.best.iter().map(|x| x.with_precision(p)).collect();
    let total = combine(&run, hi_run);
    if objective(&polished, spec) <= run.f {
        finish(polished, spec, &total, index)
    } else {
        finish(run.best.clone(), spec, &total, index)
    }
}

fn canonical_text(free: &[BigScalar]) -> String {
    free.iter().map(BigScalar::to_decimal).collect::<Vec<_>>().join(" ")
}

fn rank_key_cmp(a: &SearchResult, b: &SearchResult) -> Ordering {
    a.coeff_abs_sum
        .partial_cmp(&b.coeff_abs_sum)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            a.kappa_next()
                .partial_cmp(b.kappa_next())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| {
            Sha256::digest(canonical_text(&a.free)).cmp(&Sha256::digest(canonical_text(&b.free)))
        })
}

/// Threshold on the free-parameter distance below which two converged
/// results count as the same solution.
pub fn dedup_distance(precision: usize) -> BigScalar {
    BigScalar::parse("1e-20", precision).expect("literal")
}

/// Converged results from `n_starts` random restarts, deduplicated and ranked by
/// `(Σ|coeff|, κ_{λH+1}, hash)`.
pub fn campaign(spec: &SearchSpec, n_starts: usize) -> Vec<SearchResult> {
    let mut all: Vec<SearchResult> = (0..n_starts)
        .into_par_iter()
        .map(|i| minimize_indexed(spec, &random_start(spec, i), Some(i)))
        .filter(|r| r.converged)
        .collect();
    all.sort_by(rank_key_cmp);
    let eps = dedup_distance(spec.precision);
    let mut out: Vec<SearchResult> = Vec::new();
    for r in all {
        let dup = out.iter().any(|o| {
            o.free
                .iter()
                .zip(&r.free)
                .all(|(a, b)| (a - b).abs() < eps)
        });
        if !dup {
            out.push(r);
        }
    }
    out
}

/// Writes one coefficient file per solution and `ranking.csv`.
pub fn write_campaign(
    results: &[SearchResult],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, CoefficientError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| CoefficientError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut csv = String::from("rank,kappa_max,coeff_abs_sum,kappa_next,file\n");
    let mut files = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let rank = i + 1;
        let stem = crate::catalog::normalize_name(&r.coeffs.name);
        let file = format!("{stem}_{rank:03}.coef");
        let mut set = r.coeffs.clone();
        set.name = format!("{} #{rank}", r.coeffs.name);
        let path = dir.join(&file);
        save_coefficient_file(&set, &path)?;
        let _ = writeln!(
            csv,
            "{rank},{},{},{},{file}",
            r.kappa_max.to_scientific(6),
            r.coeff_abs_sum.to_scientific(20),
            r.kappa_next().to_scientific(6)
        );
        files.push(path);
    }
    let path = dir.join("ranking.csv");
    std::fs::write(&path, csv).map_err(|e| CoefficientError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    files.push(path);
    Ok(files)
}
