//! Lag histograms, shifted log-normal line-shape fits, summary statistics and
//! Welch tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 2.0;
pub const DEFAULT_SUBSAMPLE_SIZE: usize = 300;
pub const DEFAULT_SUBSAMPLE_REPS: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Histogram with bins `[(k - 1/2) w, (k + 1/2) w)` indexed by `k`, so bin 0
/// is centred on zero. Every index between the lowest and highest occupied
/// bin is present unless explicitly removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagHistogram {
    bin_width: f64,
    bins: BTreeMap<i64, u64>,
    removed: BTreeSet<i64>,
}

impl LagHistogram {
    /// Builds from explicit `(index, count)` pairs, filling gaps with zeros.
    pub fn from_counts(bin_width: f64, counts: impl IntoIterator<Item = (i64, u64)>) -> Self {
        let mut bins: BTreeMap<i64, u64> = counts.into_iter().collect();
        if let (Some(&lo), Some(&hi)) = (bins.keys().next(), bins.keys().next_back()) {
            for k in lo..=hi {
                bins.entry(k).or_insert(0);
            }
        }
        LagHistogram {
            bin_width,
            bins,
            removed: BTreeSet::new(),
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn index_of(&self, lag: f64) -> i64 {
        bin_index(lag, self.bin_width)
    }

    pub fn center(&self, k: i64) -> f64 {
        k as f64 * self.bin_width
    }

    /// Lower and upper edge of bin `k`.
    pub fn edges(&self, k: i64) -> (f64, f64) {
        let c = self.center(k);
        (c - self.bin_width / 2.0, c + self.bin_width / 2.0)
    }

    pub fn count(&self, k: i64) -> Option<u64> {
        self.bins.get(&k).copied()
    }

    /// `(index, count)` in ascending index order, removed bins skipped.
    pub fn bins(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.bins.iter().map(|(&k, &c)| (k, c))
    }

    pub fn removed(&self) -> &BTreeSet<i64> {
        &self.removed
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn nonzero_bins(&self) -> usize {
        self.bins.values().filter(|&&c| c > 0).count()
    }

    /// Centre of the highest bin, lowest centre on ties.
    pub fn mode_center(&self) -> Option<f64> {
        let mut best: Option<(i64, u64)> = None;
        for (k, c) in self.bins() {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        best.filter(|&(_, c)| c > 0).map(|(k, _)| self.center(k))
    }

    /// CSV `bin_center,count,probability`.
    pub fn to_csv(&self) -> String {
        let total = self.total().max(1) as f64;
        let mut s = String::from("bin_center,count,probability\n");
        for (k, c) in self.bins() {
            let _ = writeln!(s, "{},{},{}", self.center(k), c, c as f64 / total);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn bin_index(lag: f64, bin_width: f64) -> i64 {
    (lag / bin_width + 0.5).floor() as i64
}

pub fn histogram(lags: &[f64], bin_width: f64) -> Result<LagHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin width must be positive, got {bin_width}")));
    }
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &x in lags {
        *counts.entry(bin_index(x, bin_width)).or_insert(0) += 1;
    }
    Ok(LagHistogram::from_counts(bin_width, counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode_se: Option<f64>,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mean of the raw lags, median of the lags rounded to whole months and the
/// centre of the modal bin.
pub fn raw_summary(lags: &[f64], bin_width: f64) -> Result<SummaryStats> {
    if lags.is_empty() {
        return Err(Error::EmptySample);
    }
    let mean = lags.iter().sum::<f64>() / lags.len() as f64;
    let mut rounded: Vec<f64> = lags.iter().map(|x| x.round()).collect();
    rounded.sort_by(f64::total_cmp);
    let mode = histogram(lags, bin_width)?
        .mode_center()
        .expect("nonempty histogram has a mode");
    Ok(SummaryStats {
        mean,
        median: median_sorted(&rounded),
        mode,
        mean_se: None,
        median_se: None,
        mode_se: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged once the relative drop in residual sum of squares is below this.
    pub tolerance: f64,
    /// Drop the zero-centred bin before fitting.
    pub exclude_zero_bin: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            tolerance: 1e-10,
            exclude_zero_bin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub shift: f64,
    pub mu: f64,
    pub sigma: f64,
    pub shift_se: f64,
    pub mu_se: f64,
    pub sigma_se: f64,
    /// Sum of squared residuals of bin probabilities.
    pub ssr: f64,
    pub bins_fitted: usize,
    pub iterations: usize,
    pub excluded_bins: Vec<i64>,
    pub derived: SummaryStats,
}

impl LogNormalFit {
    pub fn mean(&self) -> f64 {
        self.shift + (self.mu + self.sigma * self.sigma / 2.0).exp()
    }

    pub fn median(&self) -> f64 {
        self.shift + self.mu.exp()
    }

    pub fn mode(&self) -> f64 {
        self.shift + (self.mu - self.sigma * self.sigma).exp()
    }
}

/// Parameters are `(shift, mu, ln sigma)`.
struct BinModel<'a> {
    edges: Vec<(f64, f64)>,
    observed: Vec<f64>,
    removed_edges: Vec<(f64, f64)>,
    normal: &'a Normal,
}

impl BinModel<'_> {
    /// CDF and its gradient at `x`.
    fn cdf(&self, x: f64, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let (gamma, mu, sigma) = (p[0], p[1], p[2].exp());
        if x <= gamma {
            return (0.0, Vector3::zeros());
        }
        let z = ((x - gamma).ln() - mu) / sigma;
        let phi = self.normal.pdf(z);
        let grad = Vector3::new(-phi / ((x - gamma) * sigma), -phi / sigma, -phi * z);
        (self.normal.cdf(z), grad)
    }

    fn bin(&self, (a, b): (f64, f64), p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let (fa, ga) = self.cdf(a, p);
        let (fb, gb) = self.cdf(b, p);
        (fb - fa, gb - ga)
    }

    /// Residuals and Jacobian rows, conditioned on the removed bins.
    fn evaluate(&self, p: &Vector3<f64>) -> (Vec<f64>, Vec<Vector3<f64>>) {
        let (mut r, mut dr) = (0.0, Vector3::zeros());
        for &e in &self.removed_edges {
            let (q, g) = self.bin(e, p);
            r += q;
            dr += g;
        }
        let keep = 1.0 - r;
        let mut res = Vec::with_capacity(self.edges.len());
        let mut jac = Vec::with_capacity(self.edges.len());
        for (&e, &obs) in self.edges.iter().zip(&self.observed) {
            let (q, g) = self.bin(e, p);
            res.push(q / keep - obs);
            jac.push(g / keep + dr * (q / (keep * keep)));
        }
        (res, jac)
    }

    fn ssr(&self, p: &Vector3<f64>) -> f64 {
        self.evaluate(p).0.iter().map(|r| r * r).sum()
    }
}

fn normal_equations(res: &[f64], jac: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for (r, g) in res.iter().zip(jac) {
        jtj += g * g.transpose();
        jtr += g * *r;
    }
    (jtj, jtr)
}

/// Least-squares fit of the exact per-bin probabilities of a shifted
/// log-normal to the observed bin frequencies, by Levenberg–Marquardt.
pub fn fit_lognormal(hist: &LagHistogram, options: &FitOptions) -> Result<LogNormalFit> {
    let mut hist = hist.clone();
    if options.exclude_zero_bin && hist.count(0).is_some() {
        hist = adjust_zero_peak(&hist, ZeroPeak::Remove)?;
    }
    let nonzero = hist.nonzero_bins();
    if nonzero < 6 {
        return Err(Error::InsufficientData(format!(
            "{nonzero} nonzero bins, need at least 6"
        )));
    }
    let total = hist.total() as f64;
    let bins: Vec<(i64, u64)> = hist.bins().collect();
    let normal = Normal::standard();
    let model = BinModel {
        edges: bins.iter().map(|&(k, _)| hist.edges(k)).collect(),
        observed: bins.iter().map(|&(_, c)| c as f64 / total).collect(),
        removed_edges: hist.removed().iter().map(|&k| hist.edges(k)).collect(),
        normal: &normal,
    };

    let first_edge = bins
        .iter()
        .find(|&&(_, c)| c > 0)
        .map(|&(k, _)| hist.edges(k).0)
        .expect("nonzero bins exist");
    let gamma0 = first_edge - 1.0;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &(k, c) in &bins {
        let y = (hist.center(k) - gamma0).ln();
        s1 += c as f64 * y;
        s2 += c as f64 * y * y;
    }
    let mu0 = s1 / total;
    let var0 = (s2 / total - mu0 * mu0).max(1e-6);
    let mut p = Vector3::new(gamma0, mu0, 0.5 * var0.ln());

    // Keep the shift below every occupied bin's upper edge.
    let last_valid_gamma = bins
        .iter()
        .find(|&&(_, c)| c > 0)
        .map(|&(k, _)| hist.edges(k).1)
        .expect("nonzero bins exist");

    let mut ssr = model.ssr(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let (res, jac) = model.evaluate(&p);
        let (jtj, jtr) = normal_equations(&res, &jac);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_ssr = if trial[0] < last_valid_gamma && trial.iter().all(|v| v.is_finite()) {
                model.ssr(&trial)
            } else {
                f64::INFINITY
            };
            if trial_ssr <= ssr {
                let rel = (ssr - trial_ssr) / ssr.max(f64::MIN_POSITIVE);
                p = trial;
                ssr = trial_ssr;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = rel < options.tolerance;
                break;
            }
            lambda *= 10.0;
        }
        // No downhill step exists at any damping: at a minimum.
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitDiverged(options.max_iterations));
    }

    let (res, jac) = model.evaluate(&p);
    let (jtj, _) = normal_equations(&res, &jac);
    // Leverage-corrected sandwich covariance; bin residual variances differ
    // with bin height.
    let bread = jtj
        .try_inverse()
        .ok_or_else(|| Error::InsufficientData("singular fit covariance".into()))?;
    let mut meat = Matrix3::zeros();
    for (r, g) in res.iter().zip(&jac) {
        let leverage = (g.transpose() * bread * g)[(0, 0)].min(0.99);
        meat += g * g.transpose() * (r * r / (1.0 - leverage).powi(2));
    }
    let cov = bread * meat * bread;
    let se = |g: Vector3<f64>| (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt();

    let (gamma, mu, sigma) = (p[0], p[1], p[2].exp());
    let s2 = sigma * sigma;
    let em = (mu + s2 / 2.0).exp();
    let emed = mu.exp();
    let emode = (mu - s2).exp();
    let fit = LogNormalFit {
        shift: gamma,
        mu,
        sigma,
        shift_se: se(Vector3::new(1.0, 0.0, 0.0)),
        mu_se: se(Vector3::new(0.0, 1.0, 0.0)),
        sigma_se: sigma * se(Vector3::new(0.0, 0.0, 1.0)),
        ssr,
        bins_fitted: res.len(),
        iterations,
        excluded_bins: hist.removed().iter().copied().collect(),
        derived: SummaryStats {
            mean: gamma + em,
            median: gamma + emed,
            mode: gamma + emode,
            mean_se: Some(se(Vector3::new(1.0, em, em * s2))),
            median_se: Some(se(Vector3::new(1.0, emed, 0.0))),
            mode_se: Some(se(Vector3::new(1.0, emode, -2.0 * s2 * emode))),
        },
    };
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Constant added before the log transform, when one was applied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shift: Option<f64>,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    (m, ss / (n - 1.0))
}

/// Two-sided Welch t-test of `mean(a) - mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall { need: 2, have: s.len() });
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (va / na, vb / nb);
    if qa + qb == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InsufficientData(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(WelchResult {
        t,
        degrees_of_freedom: df,
        p_value,
        mean_a: ma,
        mean_b: mb,
        n_a: a.len(),
        n_b: b.len(),
        shift: None,
    })
}

/// Welch test on `ln(x + c)` with `c = 1 - min(a ∪ b)`.
pub fn log_shift_welch(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    let min = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::EmptySample);
    }
    let c = 1.0 - min;
    let tr = |x: &[f64]| x.iter().map(|v| (v + c).ln()).collect::<Vec<_>>();
    let mut r = welch_t(&tr(a), &tr(b))?;
    r.shift = Some(c);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleResult {
    pub mean_t: f64,
    pub fraction_significant: f64,
    pub k: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Repeats the Welch test on `k`-element subsamples drawn without replacement
/// from each sample. Repetition `r` uses a generator seeded with `seed + r`.
pub fn subsample_welch(a: &[f64], b: &[f64], k: usize, reps: usize, alpha: f64, seed: u64) -> Result<SubsampleResult> {
    let have = a.len().min(b.len());
    if have < k {
        return Err(Error::SampleTooSmall { need: k, have });
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("subsample repetitions must be positive".into()));
    }
    let draw = |x: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        index::sample(rng, x.len(), k).into_iter().map(|i| x[i]).collect()
    };
    let results: Vec<WelchResult> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            let sa = draw(a, &mut rng);
            let sb = draw(b, &mut rng);
            welch_t(&sa, &sb)
        })
        .collect::<Result<_>>()?;
    let mean_t = results.iter().map(|r| r.t).sum::<f64>() / reps as f64;
    let significant = results.iter().filter(|r| r.p_value < alpha).count();
    Ok(SubsampleResult {
        mean_t,
        fraction_significant: significant as f64 / reps as f64,
        k,
        reps,
        alpha,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPeak {
    /// Replace the zero bin by the rounded mean of its two neighbours.
    Interpolate,
    /// Drop the zero bin.
    Remove,
}

pub fn adjust_zero_peak(hist: &LagHistogram, mode: ZeroPeak) -> Result<LagHistogram> {
    let (Some(left), Some(_), Some(right)) = (hist.count(-1), hist.count(0), hist.count(1)) else {
        return Err(Error::MissingBins);
    };
    let mut out = hist.clone();
    match mode {
        ZeroPeak::Interpolate => {
            out.bins.insert(0, ((left + right) as f64 / 2.0).round() as u64);
        }
        ZeroPeak::Remove => {
            out.bins.remove(&0);
            out.removed.insert(0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, LogNormal};

    fn naive_counts(lags: &[f64], w: f64) -> BTreeMap<i64, u64> {
        let mut m = BTreeMap::new();
        for &x in lags {
            let mut k = (x / w).round() as i64 - 2;
            while !((k as f64 - 0.5) * w <= x && x < (k as f64 + 0.5) * w) {
                k += 1;
            }
            *m.entry(k).or_insert(0) += 1;
        }
        m
    }

    fn lognormal_draws(n: usize, shift: f64, mu: f64, sigma: f64, seed: u64) -> Vec<f64> {
        let d = LogNormal::new(mu, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| shift + d.sample(&mut rng)).collect()
    }

    #[test]
    fn bin_edges() {
        let h = histogram(&[0.0, 0.5, -0.5], 2.0).unwrap();
        assert_eq!(h.bins().collect::<Vec<_>>(), vec![(0, 3)]);
        let h = histogram(&[1.0], 2.0).unwrap();
        assert_eq!(h.mode_center(), Some(2.0));
        let h = histogram(&[-1.0, 0.999], 2.0).unwrap();
        assert_eq!(h.bins().collect::<Vec<_>>(), vec![(0, 2)]);
        assert!(histogram(&[1.0], 0.0).is_err());
    }

    #[test]
    fn histogram_matches_naive_binning() {
        let lags = lognormal_draws(1000, -6.0, 25f64.ln(), 0.55, 7);
        let h = histogram(&lags, 2.0).unwrap();
        let naive = naive_counts(&lags, 2.0);
        for (k, c) in h.bins() {
            assert_eq!(c, naive.get(&k).copied().unwrap_or(0), "bin {k}");
        }
        assert_eq!(h.total(), 1000);
    }

    #[test]
    fn raw_summary_single_lag() {
        let s = raw_summary(&[7.0], 2.0).unwrap();
        assert_eq!((s.mean, s.median), (7.0, 7.0));
        // 7 falls in [7, 9), centred at 8
        assert_eq!(s.mode, 8.0);
        assert!(matches!(raw_summary(&[], 2.0), Err(Error::EmptySample)));
    }

    #[test]
    fn raw_summary_rounds_median_and_breaks_mode_ties_low() {
        let s = raw_summary(&[0.4, 1.6, 2.2, 9.0], 2.0).unwrap();
        assert_eq!(s.median, 2.0); // rounded 0,2,2,9
        // bins: 0 -> 1, 2 -> 2, 10 -> 1
        assert_eq!(s.mode, 2.0);
        let s = raw_summary(&[0.0, 4.0], 2.0).unwrap();
        assert_eq!(s.mode, 0.0);
    }

    #[test]
    fn welch_hand_values() {
        // means 2 and 3, variances 1 and 1: t = -1 / sqrt(2/3), df = 4
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.t - (-1.0 / (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 4.0).abs() < 1e-12);
        // two-sided p for |t| = 1.2247 with 4 df
        assert!((r.p_value - 0.287_864_5).abs() < 1e-6);
    }

    #[test]
    fn welch_unequal_variances() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0];
        let r = welch_t(&a, &b).unwrap();
        let (va, vb): (f64, f64) = (5.0 / 3.0, 50.0);
        let se2 = va / 4.0 + vb / 2.0;
        assert!((r.t - (2.5 - 15.0) / se2.sqrt()).abs() < 1e-12);
        let df = se2 * se2 / ((va / 4.0f64).powi(2) / 3.0 + (vb / 2.0f64).powi(2));
        assert!((r.degrees_of_freedom - df).abs() < 1e-12);
    }

    #[test]
    fn welch_identical_and_degenerate() {
        let a = [1.0, 5.0, 2.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!((r.t, r.p_value), (0.0, 1.0));
        assert!(matches!(welch_t(&[2.0, 2.0], &[3.0, 3.0]), Err(Error::DegenerateSample)));
        assert!(matches!(
            welch_t(&[1.0], &[1.0, 2.0]),
            Err(Error::SampleTooSmall { need: 2, have: 1 })
        ));
    }

    #[test]
    fn student_t_critical_values() {
        for (df, crit) in [(1.0, 12.706), (10.0, 2.228), (100.0, 1.984)] {
            let d = StudentsT::new(0.0, 1.0, df).unwrap();
            assert!((d.inverse_cdf(0.975) - crit).abs() < 1e-3, "df {df}");
            assert!((2.0 * d.sf(crit) - 0.05).abs() < 1e-4);
        }
    }

    #[test]
    fn log_shift_constant() {
        let r = log_shift_welch(&[1.0, 2.0, 4.0], &[3.0, 5.0]).unwrap();
        assert_eq!(r.shift, Some(0.0));
        let direct = welch_t(&[0.0, 2f64.ln(), 4f64.ln()], &[3f64.ln(), 5f64.ln()]).unwrap();
        assert!((r.t - direct.t).abs() < 1e-12);
        let r = log_shift_welch(&[-6.0, 0.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.shift, Some(7.0));
        assert!(r.t.is_finite());
    }

    #[test]
    fn subsample_exhaustive_equals_full() {
        let a: Vec<f64> = (0..40).map(|i| (i * 7 % 13) as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| (i * 5 % 11) as f64 + 1.5).collect();
        let full = welch_t(&a, &b).unwrap();
        let s = subsample_welch(&a, &b, 40, 20, 0.05, 9).unwrap();
        assert!((s.mean_t - full.t).abs() < 1e-10);
        assert!(s.fraction_significant == 0.0 || s.fraction_significant == 1.0);
        assert!(matches!(
            subsample_welch(&a, &b, 41, 1, 0.05, 0),
            Err(Error::SampleTooSmall { need: 41, have: 40 })
        ));
    }

    #[test]
    fn subsample_is_deterministic() {
        let a = lognormal_draws(800, -6.0, 3.0, 0.5, 1);
        let b = lognormal_draws(800, -6.0, 3.1, 0.5, 2);
        let x = subsample_welch(&a, &b, 300, 50, 0.05, 4).unwrap();
        let y = subsample_welch(&a, &b, 300, 50, 0.05, 4).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn zero_peak() {
        let h = LagHistogram::from_counts(2.0, [(-1, 4), (0, 30), (1, 7), (2, 9)]);
        let i = adjust_zero_peak(&h, ZeroPeak::Interpolate).unwrap();
        assert_eq!(i.count(0), Some(6)); // 5.5 rounds up
        assert_eq!(i.total(), 4 + 6 + 7 + 9);
        let r = adjust_zero_peak(&h, ZeroPeak::Remove).unwrap();
        assert_eq!(r.count(0), None);
        assert_eq!(r.total(), h.total() - 30);
        let flat = LagHistogram::from_counts(2.0, [(-1, 5), (0, 5), (1, 5)]);
        assert_eq!(adjust_zero_peak(&flat, ZeroPeak::Interpolate).unwrap(), flat);
        let no_left = LagHistogram::from_counts(2.0, [(0, 5), (1, 5)]);
        assert!(matches!(adjust_zero_peak(&no_left, ZeroPeak::Remove), Err(Error::MissingBins)));
    }

    #[test]
    fn fit_recovers_exact_bin_probabilities() {
        // Expected counts rounded from the model itself.
        let (gamma, mu, sigma) = (-6.0, 25f64.ln(), 0.55);
        let normal = Normal::standard();
        let cdf = |x: f64| {
            if x <= gamma {
                0.0
            } else {
                normal.cdf(((x - gamma).ln() - mu) / sigma)
            }
        };
        let counts = (-3..120).map(|k| {
            let (a, b) = (2.0 * k as f64 - 1.0, 2.0 * k as f64 + 1.0);
            (k, ((cdf(b) - cdf(a)) * 1e9).round() as u64)
        });
        let h = LagHistogram::from_counts(2.0, counts);
        let fit = fit_lognormal(&h, &FitOptions::default()).unwrap();
        assert!((fit.shift - gamma).abs() < 1e-3, "{fit:?}");
        assert!((fit.mu - mu).abs() < 1e-4);
        assert!((fit.sigma - sigma).abs() < 1e-4);
    }

    #[test]
    fn fit_with_removed_zero_bin() {
        let mut lags = lognormal_draws(20_000, -6.0, 25f64.ln(), 0.55, 3);
        lags.extend(std::iter::repeat_n(0.0, 3000));
        let h = histogram(&lags, 2.0).unwrap();
        let opts = FitOptions {
            exclude_zero_bin: true,
            ..FitOptions::default()
        };
        let fit = fit_lognormal(&h, &opts).unwrap();
        assert_eq!(fit.excluded_bins, vec![0]);
        assert!((fit.mu - 25f64.ln()).abs() < 5.0 * fit.mu_se.max(0.01), "{fit:?}");
        let d = fit.derived;
        assert!(d.mode <= d.median && d.median <= d.mean);
    }

    #[test]
    fn fit_needs_six_bins() {
        let h = histogram(&[1.0, 3.0, 5.0, 7.0, 9.0], 2.0).unwrap();
        assert!(matches!(
            fit_lognormal(&h, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let h = LagHistogram::from_counts(2.0, [(0, 1), (2, 3)]);
        assert_eq!(h.to_csv(), "bin_center,count,probability\n0,1,0.25\n2,0,0\n4,3,0.75\n");
    }

    proptest! {
        #[test]
        fn histogram_conserves_count(lags in prop::collection::vec(-100.0f64..300.0, 0..200), w in 0.5f64..5.0) {
            let h = histogram(&lags, w).unwrap();
            prop_assert_eq!(h.total() as usize, lags.len());
            let naive = naive_counts(&lags, w);
            for (k, c) in h.bins() {
                prop_assert_eq!(c, naive.get(&k).copied().unwrap_or(0));
            }
        }

        #[test]
        fn welch_symmetries(
            a in prop::collection::vec(-50.0f64..50.0, 2..30),
            b in prop::collection::vec(-50.0f64..50.0, 2..30),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let Ok(base) = welch_t(&a, &b) else { return Ok(()); };
            let rev = welch_t(&b, &a).unwrap();
            prop_assert!((base.t + rev.t).abs() < 1e-10);
            prop_assert!((base.p_value - rev.p_value).abs() < 1e-12);
            let tr = |x: &[f64]| x.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
            let moved = welch_t(&tr(&a), &tr(&b)).unwrap();
            prop_assert!((base.t - moved.t).abs() < 1e-8 * base.t.abs().max(1.0));
            prop_assert!((0.0..=1.0).contains(&base.p_value));
        }

        #[test]
        fn remove_drops_zero_count(counts in prop::collection::vec(0u64..50, 3..12)) {
            let h = LagHistogram::from_counts(2.0, counts.iter().enumerate().map(|(i, &c)| (i as i64 - 1, c)));
            let r = adjust_zero_peak(&h, ZeroPeak::Remove).unwrap();
            prop_assert_eq!(r.total(), h.total() - h.count(0).unwrap());
        }
    }
}
