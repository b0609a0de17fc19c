//! Ordinary least squares with Student-t inference.
//!
//! `β` comes from a Householder QR of the design; `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ` gives
//! the standard errors. P-values use the regularised incomplete beta
//! function evaluated by a modified-Lentz continued fraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use num_traits::Float;

use crate::ensemble::VotingScheme;
use crate::metrics::EvaluationRecord;
use crate::trainer::{ScenarioKind, ScenarioLabel};
use crate::{Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = core::f64::consts::PI;
        return Float::ln(pi / Float::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * Float::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * Float::ln(t) - t + Float::ln(a)
}

const CF_ITERATIONS: usize = 200;

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if Float::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_ITERATIONS {
        let m = m as f64;
        let m2 = 2.0 * m;
        for aa in [m * (b - m) * x / ((qam + m2) * (a + m2)), -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))] {
            d = 1.0 + aa * d;
            if Float::abs(d) < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if Float::abs(c) < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if Float::abs(d * c - 1.0) < 1e-16 {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * Float::ln(x) + b * Float::ln(1.0 - x);
    let front = Float::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided P-value `P(|T| ≥ |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Quantile of the Student-t distribution by bisection on [`t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Half-width of the two-sided 95% confidence interval of a sample mean.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    (mean, t_quantile(0.975, df) * Float::sqrt(var / n as f64))
}

/// Regressors plus response, row-major with an intercept in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a design from regressor columns; the intercept is added.
    pub fn with_intercept(columns: Vec<(String, Vec<f64>)>, y: Vec<f64>) -> Result<Self> {
        let rows = y.len();
        let mut names = vec!["const".to_string()];
        for (name, col) in &columns {
            if col.len() != rows {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} rows in `{}`", rows, name),
                    actual: format!("{}", col.len()),
                });
            }
            names.push(name.clone());
        }
        let mut x = Vec::with_capacity(rows * names.len());
        for r in 0..rows {
            x.push(1.0);
            x.extend(columns.iter().map(|(_, c)| c[r]));
        }
        let d = Self { names, x, y };
        d.check()?;
        Ok(d)
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    fn check(&self) -> Result<()> {
        if self.rows() < self.cols() + 2 {
            return Err(Error::DegreesOfFreedom {
                rows: self.rows(),
                columns: self.cols(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_err: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub rss: f64,
    pub sigma2: f64,
    pub r2: f64,
    /// Observations.
    pub n: usize,
    /// Explanatory variables (intercept excluded).
    pub k: usize,
}

impl RegressionResult {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn df(&self) -> usize {
        self.n - self.k - 1
    }

    /// Fixed-width table with the usual `coef / std err / t / P>|t| / CI`
    /// columns.
    pub fn table(&self) -> String {
        let w = self.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<w$} {:>10} {:>10} {:>9} {:>8} {:>10} {:>10}",
            "",
            "coef",
            "std err",
            "t",
            "P>|t|",
            "[0.025",
            "0.975]",
            w = w
        );
        for c in &self.coefficients {
            let _ = writeln!(
                s,
                "{:<w$} {:>10.4} {:>10.4} {:>9.3} {:>8.3} {:>10.4} {:>10.4}",
                c.name,
                c.estimate,
                c.std_err,
                c.t,
                c.p,
                c.ci_low,
                c.ci_high,
                w = w
            );
        }
        let _ = writeln!(
            s,
            "n = {}, k = {}, R² = {:.4}, RSS = {:.6}, σ̂² = {:.6}",
            self.n, self.k, self.r2, self.rss, self.sigma2
        );
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("name,coef,std_err,t,p,ci_low,ci_high\n");
        for c in &self.coefficients {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                c.name, c.estimate, c.std_err, c.t, c.p, c.ci_low, c.ci_high
            );
        }
        let _ = writeln!(s, "#n,{}\n#k,{}\n#rss,{:e}\n#sigma2,{:e}\n#r2,{:e}", self.n, self.k, self.rss, self.sigma2, self.r2);
        s
    }
}

/// Householder QR of the `rows x cols` matrix `a` (row-major, overwritten).
/// Returns `R` (`cols x cols`, row-major) and applies `Qᵀ` to `y`.
fn householder(a: &mut [f64], rows: usize, cols: usize, y: &mut [f64]) -> Vec<f64> {
    for j in 0..cols {
        let norm = Float::sqrt((j..rows).map(|i| a[i * cols + j] * a[i * cols + j]).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[j * cols + j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..rows).map(|i| a[i * cols + j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..cols {
            let dot: f64 = (j..rows).map(|i| v[i - j] * a[i * cols + c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                a[i * cols + c] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..rows).map(|i| v[i - j] * y[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..rows {
            y[i] -= f * v[i - j];
        }
    }
    let mut r = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in i..cols {
            r[i * cols + j] = a[i * cols + j];
        }
    }
    r
}

/// Relative size below which a diagonal entry of `R` counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fits `Y = Xβ + ε` by least squares.
pub fn ols(design: &DesignMatrix) -> Result<RegressionResult> {
    design.check()?;
    let (n, p) = (design.rows(), design.cols());
    let mut a = design.x.clone();
    let mut qty = design.y.clone();
    let r = householder(&mut a, n, p, &mut qty);
    let scale = (0..p).map(|i| Float::abs(r[i * p + i])).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|i| Float::abs(r[i * p + i]) <= RANK_TOLERANCE * scale) {
        return Err(Error::RankDeficient);
    }
    // β = R⁻¹ Qᵀy by back substitution
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r[i * p + j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i * p + i];
    }
    // R⁻¹, upper triangular
    let mut rinv = vec![0.0; p * p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = ((i + 1)..=c).map(|j| r[i * p + j] * rinv[j * p + c]).sum();
            rinv[i * p + c] = (rhs - s) / r[i * p + i];
        }
    }
    let fitted: Vec<f64> = (0..n)
        .map(|row| (0..p).map(|j| design.x[row * p + j] * beta[j]).sum())
        .collect();
    let rss: f64 = design.y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let k = p - 1;
    let df = (n - k - 1) as f64;
    let sigma2 = rss / df;
    let mean = design.y.iter().sum::<f64>() / n as f64;
    let tss: f64 = design.y.iter().map(|y| (y - mean) * (y - mean)).sum();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    let tcrit = t_quantile(0.975, df);
    let coefficients = (0..p)
        .map(|i| {
            let diag: f64 = (i..p).map(|j| rinv[i * p + j] * rinv[i * p + j]).sum();
            let se = Float::sqrt(sigma2 * diag);
            let t = if se > 0.0 {
                beta[i] / se
            } else if beta[i] == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(beta[i])
            };
            Coefficient {
                name: design.names[i].clone(),
                estimate: beta[i],
                std_err: se,
                t,
                p: t_two_sided_p(t, df),
                ci_low: beta[i] - tcrit * se,
                ci_high: beta[i] + tcrit * se,
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        rss,
        sigma2,
        r2,
        n,
        k,
    })
}

/// Explanatory variables available to [`build_design`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    /// Node count, numeric.
    N,
    /// 1 for every per-node-tuned scenario (IT and all `D_*`).
    It,
    /// 1 when the optimizer is diversified.
    DO,
    /// 1 when the architecture is diversified.
    DA,
    /// 1 when the scheduler is diversified.
    DS,
    Hard,
    Weighted,
    /// 1 for Dirichlet-partitioned scenarios.
    Dirichlet,
}

impl Column {
    /// The full column set with ENS as baseline.
    pub const COMPLETE: [Column; 7] = [
        Column::N,
        Column::It,
        Column::DO,
        Column::DA,
        Column::DS,
        Column::Hard,
        Column::Weighted,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Column::N => "N",
            Column::It => "IT",
            Column::DO => "D_O",
            Column::DA => "D_A",
            Column::DS => "D_S",
            Column::Hard => "Hard",
            Column::Weighted => "Weighted",
            Column::Dirichlet => "Dirichlet",
        }
    }

    fn value(&self, label: &ScenarioLabel, nodes: usize, voting: VotingScheme) -> f64 {
        let d = label.kind.diverse_set();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Column::N => nodes as f64,
            Column::It => flag(label.kind.is_tuned()),
            Column::DO => flag(d.opt),
            Column::DA => flag(d.arch),
            Column::DS => flag(d.sched),
            Column::Hard => flag(voting == VotingScheme::Hard),
            Column::Weighted => flag(voting == VotingScheme::Weighted),
            Column::Dirichlet => flag(label.dirichlet),
        }
    }
}

/// How attack rows collapse into responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    /// One row per (scenario, N, seed, voting): RA averaged over attacks.
    MeanOverAttacks,
    /// One row per attack record.
    PerAttack,
}

/// Indicator-codes attack records into a design whose intercept is the
/// `baseline` scenario. Clean records are ignored. Records whose scenario
/// is neither the baseline nor in `include` are dropped, as are
/// `+dir` records unless [`Column::Dirichlet`] is requested.
pub fn build_design(
    records: &[EvaluationRecord],
    baseline: ScenarioKind,
    include: &[ScenarioKind],
    columns: &[Column],
    response: Response,
) -> Result<DesignMatrix> {
    let want_dir = columns.contains(&Column::Dirichlet);
    let mut groups: BTreeMap<(ScenarioLabel, usize, u64, VotingScheme, usize), Vec<f64>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.attack.is_none() {
            continue;
        }
        let label: ScenarioLabel = r.scenario.parse()?;
        if label.dirichlet && !want_dir {
            continue;
        }
        if label.kind != baseline && !include.contains(&label.kind) {
            continue;
        }
        let slot = match response {
            Response::MeanOverAttacks => 0,
            Response::PerAttack => i,
        };
        groups.entry((label, r.nodes, r.seed, r.voting, slot)).or_default().push(r.ra);
    }
    let mut cols: Vec<(String, Vec<f64>)> = columns.iter().map(|c| (c.name().to_string(), Vec::new())).collect();
    let mut y = Vec::with_capacity(groups.len());
    for ((label, nodes, _, voting, _), ras) in &groups {
        y.push(ras.iter().sum::<f64>() / ras.len() as f64);
        for (c, (_, v)) in columns.iter().zip(cols.iter_mut()) {
            v.push(c.value(label, *nodes, *voting));
        }
    }
    for (name, v) in &cols {
        if v.iter().all(|&x| x == v[0]) {
            return Err(Error::DegenerateColumn(name.clone()));
        }
    }
    DesignMatrix::with_intercept(cols, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::rng::{normal, rng_for};
    use crate::trainer::DiverseSet;
    use rand::Rng;

    /// Simpson integration of the t density, independent of the
    /// incomplete-beta route.
    fn t_cdf_numeric(t: f64, df: f64) -> f64 {
        let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * core::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 20_000;
        let h = t.abs() / n as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
        }
        let half = s * h / 3.0;
        if t >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - core::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn t_cdf_matches_quadrature() {
        for df in [1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0] {
            for t in [-4.0, -2.228, -1.0, -0.3, 0.0, 0.7, 1.5, 2.5, 6.0] {
                let a = t_cdf(t, df);
                let b = t_cdf_numeric(t, df);
                assert!((a - b).abs() < 1e-8, "df {} t {}: {} vs {}", df, t, a, b);
            }
        }
    }

    #[test]
    fn t_cdf_reference_points() {
        assert_eq!(t_cdf(0.0, 7.0), 0.5);
        assert!((t_two_sided_p(2.228, 10.0) - 0.05).abs() < 5e-4);
        assert!((t_two_sided_p(1.96, 1e6) - 0.05).abs() < 1e-3);
        // Cauchy closed form
        assert!((t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for df in [1.0, 4.0, 10.0, 60.0] {
            let q = t_quantile(0.975, df);
            assert!((t_cdf(q, df) - 0.975).abs() < 1e-12);
        }
        assert!((t_quantile(0.975, 10.0) - 2.228_138_85).abs() < 1e-6);
    }

    #[test]
    fn p_value_decreases_in_t() {
        let mut prev = 1.0 + 1e-12;
        for i in 0..100 {
            let p = t_two_sided_p(i as f64 * 0.1, 8.0);
            assert!(p < prev);
            prev = p;
        }
    }

    fn line_design() -> DesignMatrix {
        let xs: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let y = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        DesignMatrix::with_intercept(vec![("X".into(), xs)], y).unwrap()
    }

    #[test]
    fn exact_line() {
        let r = ols(&line_design()).unwrap();
        assert!((r.coefficients[0].estimate - 2.0).abs() < 1e-12);
        assert!((r.coefficients[1].estimate - 3.0).abs() < 1e-12);
        assert!(r.rss < 1e-20);
        assert_eq!(r.r2, 1.0);
    }

    /// `(XᵀX)⁻¹XᵀY` by Gauss–Jordan elimination.
    fn normal_equations(d: &DesignMatrix) -> Vec<f64> {
        let (n, p) = (d.rows(), d.cols());
        let mut m = vec![0.0; p * (p + 1)];
        for i in 0..p {
            for j in 0..p {
                m[i * (p + 1) + j] = (0..n).map(|r| d.x[r * p + i] * d.x[r * p + j]).sum();
            }
            m[i * (p + 1) + p] = (0..n).map(|r| d.x[r * p + i] * d.y[r]).sum();
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a * (p + 1) + c].abs().total_cmp(&m[b * (p + 1) + c].abs())).unwrap();
            for k in 0..=p {
                m.swap(c * (p + 1) + k, piv * (p + 1) + k);
            }
            let d0 = m[c * (p + 1) + c];
            for k in 0..=p {
                m[c * (p + 1) + k] /= d0;
            }
            for r in 0..p {
                if r != c {
                    let f = m[r * (p + 1) + c];
                    for k in 0..=p {
                        m[r * (p + 1) + k] -= f * m[c * (p + 1) + k];
                    }
                }
            }
        }
        (0..p).map(|i| m[i * (p + 1) + p]).collect()
    }

    fn random_design(seed: u64, rows: usize, cols: usize) -> DesignMatrix {
        let mut rng = rng_for(seed, &[]);
        let columns = (0..cols)
            .map(|c| (format!("x{}", c), (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect()))
            .collect();
        let y = (0..rows).map(|_| normal(&mut rng)).collect();
        DesignMatrix::with_intercept(columns, y).unwrap()
    }

    #[test]
    fn beta_matches_normal_equations() {
        for seed in 0..20 {
            let d = random_design(seed, 30, 4);
            let r = ols(&d).unwrap();
            let want = normal_equations(&d);
            for (c, w) in r.coefficients.iter().zip(&want) {
                assert!((c.estimate - w).abs() < 1e-10, "{} vs {}", c.estimate, w);
            }
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let d = random_design(3, 40, 5);
        let r = ols(&d).unwrap();
        let (n, p) = (d.rows(), d.cols());
        for j in 0..p {
            let dot: f64 = (0..n)
                .map(|i| {
                    let fit: f64 = (0..p).map(|k| d.x[i * p + k] * r.coefficients[k].estimate).sum();
                    d.x[i * p + j] * (d.y[i] - fit)
                })
                .sum();
            assert!(dot.abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let a: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let b = a.iter().map(|v| 2.0 * v).collect();
        let d = DesignMatrix::with_intercept(vec![("a".into(), a.clone()), ("b".into(), b)], a).unwrap();
        assert_eq!(ols(&d), Err(Error::RankDeficient));
    }

    #[test]
    fn too_few_rows_rejected() {
        let r = DesignMatrix::with_intercept(vec![("a".into(), vec![1.0, 2.0, 3.0])], vec![1.0, 2.0, 3.0]);
        assert!(matches!(r, Err(Error::DegreesOfFreedom { .. })));
    }

    #[test]
    fn duplicated_perturbed_row_is_stable() {
        let d = random_design(8, 30, 3);
        let base = ols(&d).unwrap();
        let mut e = d.clone();
        let p = d.cols();
        e.x.extend_from_slice(&d.x[..p]);
        e.y.push(d.y[0] + 1e-6);
        let perturbed = ols(&e).unwrap();
        for (a, b) in base.coefficients.iter().zip(&perturbed.coefficients) {
            assert!((a.estimate - b.estimate).abs() < 0.2 * a.std_err.max(1e-3));
        }
    }

    fn record(scenario: &str, nodes: usize, seed: u64, voting: VotingScheme, ra: f64) -> EvaluationRecord {
        EvaluationRecord::from_counts(scenario.into(), nodes, seed, voting, Some(AttackKind::Cw), 100, 90, ((1.0 - ra) * 100.0).round() as usize)
            .unwrap()
    }

    #[test]
    fn complete_design_row_names() {
        let mut recs = Vec::new();
        let kinds = ["ENS", "IT", "D_O", "D_A", "D_S", "D_AOS"];
        let mut rng = rng_for(1, &[]);
        for (k, kind) in kinds.iter().enumerate() {
            for nodes in [3, 5, 7] {
                for v in VotingScheme::ALL {
                    recs.push(record(kind, nodes, k as u64, v, rng.gen_range(0.2..0.9)));
                }
            }
        }
        let include: Vec<ScenarioKind> = kinds[1..].iter().map(|k| k.parse().unwrap()).collect();
        let d = build_design(&recs, ScenarioKind::Ens, &include, &Column::COMPLETE, Response::MeanOverAttacks).unwrap();
        assert_eq!(d.names, ["const", "N", "IT", "D_O", "D_A", "D_S", "Hard", "Weighted"]);
        let r = ols(&d).unwrap();
        assert_eq!(r.k, 7);
    }

    #[test]
    fn all_ens_leaves_only_n() {
        let recs: Vec<_> = [3, 5, 7, 3, 5, 7].iter().enumerate().map(|(i, &n)| record("ENS", n, i as u64, VotingScheme::Average, 0.3)).collect();
        assert_eq!(
            build_design(&recs, ScenarioKind::Ens, &[], &[Column::N, Column::It], Response::MeanOverAttacks),
            Err(Error::DegenerateColumn("IT".into()))
        );
        let d = build_design(&recs, ScenarioKind::Ens, &[], &[Column::N], Response::MeanOverAttacks).unwrap();
        assert_eq!(d.names, ["const", "N"]);
    }

    #[test]
    fn mean_over_attacks_collapses_rows() {
        let mut recs = Vec::new();
        for (seed, nodes) in [(0, 3), (1, 5), (2, 7), (3, 3), (4, 5)] {
            for (a, ra) in [(AttackKind::Sam, 0.4), (AttackKind::Cw, 0.6)] {
                let mut r = record("IT", nodes, seed, VotingScheme::Average, ra);
                r.attack = Some(a);
                recs.push(r);
            }
        }
        let d = build_design(&recs, ScenarioKind::It, &[], &[Column::N], Response::MeanOverAttacks).unwrap();
        assert_eq!(d.rows(), 5);
        assert!(d.y.iter().all(|&y| (y - 0.5).abs() < 1e-12));
        let d = build_design(&recs, ScenarioKind::It, &[], &[Column::N], Response::PerAttack).unwrap();
        assert_eq!(d.rows(), 10);
    }

    #[test]
    fn planted_coefficients_recovered() {
        let _ = DiverseSet::ALL;
        let mut rng = rng_for(42, &[]);
        let mut recs = Vec::new();
        for seed in 0..5u64 {
            for nodes in [3usize, 5, 7] {
                for kind in ["ENS", "IT"] {
                    let it = if kind == "IT" { 1.0 } else { 0.0 };
                    let ra = 0.2 + 0.03 * nodes as f64 + 0.35 * it + 0.02 * normal(&mut rng);
                    let mut r = record(kind, nodes, seed, VotingScheme::Average, 0.5);
                    r.ra = ra;
                    r.asr = 1.0 - ra;
                    recs.push(r);
                }
            }
        }
        let d = build_design(&recs, ScenarioKind::Ens, &[ScenarioKind::It], &[Column::N, Column::It], Response::MeanOverAttacks)
            .unwrap();
        let r = ols(&d).unwrap();
        for (c, want) in r.coefficients.iter().zip([0.2, 0.03, 0.35]) {
            assert!((c.estimate - want).abs() < 0.05, "{}: {}", c.name, c.estimate);
        }
    }

    #[test]
    fn mean_ci_half_width() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        // t_{0.975,4} = 2.776445, s = sqrt(2.5)
        assert!((h - 2.776_445_105 * (2.5f64 / 5.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn table_lists_every_coefficient() {
        let r = ols(&line_design()).unwrap();
        let t = r.table();
        assert!(t.contains("const") && t.contains("P>|t|"));
        assert_eq!(r.csv().lines().filter(|l| !l.starts_with('#')).count(), 3);
    }
}
