//! Scoring: per-trial pressure σ, score histograms, scale linear fits and the
//! Gaussian dominance comparison between two score distributions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ScaleSample, Termination, TrialLog};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trial {trial} ended with {termination:?} and cannot be scored")]
    Unscorable { trial: usize, termination: Termination },
    #[error("only {got} samples after the transient cut, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("linear fit is degenerate: all timestamps are equal")]
    Degenerate,
    #[error("standard deviations must be positive (got {sd_a}, {sd_b})")]
    NonPositiveSd { sd_a: f64, sd_b: f64 },
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 25.0;
pub const HISTOGRAM_CAP: f64 = 400.0;

/// Sample (N−1) mean and standard deviation. `None` for fewer than 2 values.
pub fn mean_and_std(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1) as f64).sqrt()))
}

/// Standard deviation of the pressure trace after `transient_cut` seconds of
/// control, in Pa.
pub fn trial_score(log: &TrialLog, transient_cut: f64) -> Result<f64, EvalError> {
    if !log.termination.is_complete() {
        return Err(EvalError::Unscorable { trial: log.trial_index, termination: log.termination });
    }
    let kept: Vec<f64> = log.records.iter().filter(|r| r.t >= transient_cut).map(|r| r.pressure).collect();
    mean_and_std(&kept)
        .map(|(_, sd)| sd)
        .ok_or(EvalError::TooFewSamples { got: kept.len(), need: 2 })
}

/// Score histogram with left-closed bins `[k·w, (k+1)·w)` up to `cap`, plus
/// a final overflow bin `[cap, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub cap: f64,
    /// Regular bins followed by the overflow bin.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn overflow(&self) -> usize {
        *self.counts.last().unwrap_or(&0)
    }

    /// `(lower, upper)` edges of bin `i`; the overflow bin has an infinite upper edge.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let lo = i as f64 * self.bin_width;
        if i + 1 == self.counts.len() {
            (self.cap, f64::INFINITY)
        } else {
            (lo, lo + self.bin_width)
        }
    }
}

pub fn histogram(scores: &[f64], bin_width: f64, cap: f64) -> Histogram {
    let regular = (cap / bin_width).ceil() as usize;
    let mut counts = vec![0; regular + 1];
    for &s in scores {
        let idx = if s >= cap { regular } else { ((s.max(0.0) / bin_width).floor() as usize).min(regular - 1) };
        counts[idx] += 1;
    }
    Histogram { bin_width, cap, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// g/s
    pub slope: f64,
    pub intercept: f64,
    /// g
    pub rmse: f64,
}

/// Ordinary least squares of weight against time.
pub fn linear_fit(samples: &[ScaleSample]) -> Result<LinearFit, EvalError> {
    let n = samples.len();
    if n < 3 {
        return Err(EvalError::TooFewSamples { got: n, need: 3 });
    }
    let nf = n as f64;
    let mt = samples.iter().map(|s| s.t).sum::<f64>() / nf;
    let mw = samples.iter().map(|s| s.weight).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|s| (s.t - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EvalError::Degenerate);
    }
    let sxy: f64 = samples.iter().map(|s| (s.t - mt) * (s.weight - mw)).sum();
    let slope = sxy / sxx;
    let intercept = mw - slope * mt;
    let sse: f64 = samples.iter().map(|s| (s.weight - (intercept + slope * s.t)).powi(2)).sum();
    Ok(LinearFit { slope, intercept, rmse: (sse / nf).sqrt() })
}

/// Fit over the scale samples taken at or after `transient_cut`.
pub fn scale_fit(log: &TrialLog, transient_cut: f64) -> Result<LinearFit, EvalError> {
    let kept: Vec<ScaleSample> = log.scale_samples.iter().copied().filter(|s| s.t >= transient_cut).collect();
    linear_fit(&kept)
}

// Highest degree first.
const CDF_NUM: [f64; 7] = [
    3.526_249_659_989_11e-2,
    0.700_383_064_443_688,
    6.373_962_203_531_65,
    33.912_866_078_383,
    112.079_291_497_871,
    221.213_596_169_931,
    220.206_867_912_376,
];
const CDF_DEN: [f64; 8] = [
    8.838_834_764_831_84e-2,
    1.755_667_163_182_64,
    16.064_177_579_207,
    86.780_732_202_946_1,
    296.564_248_779_674,
    637.333_633_378_831,
    793.826_512_519_948,
    440.413_735_824_752,
];

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Standard normal CDF.
///
/// Hart's double-precision rational approximation (as laid out by West),
/// with a continued fraction in the far tail. Absolute error is on the order
/// of 1e-14.
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs();
    let tail = if z > 37.0 {
        0.0
    } else {
        let e = (-0.5 * z * z).exp();
        if z < 7.071_067_811_865_47 {
            horner(&CDF_NUM, z) * e / horner(&CDF_DEN, z)
        } else {
            let mut b = z + 0.65;
            b = z + 4.0 / b;
            b = z + 3.0 / b;
            b = z + 2.0 / b;
            b = z + 1.0 / b;
            e / b / 2.506_628_274_631
        }
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Distribution of `X_B − X_A` for independent Gaussian scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// P[X_A < X_B]: how often A scores lower (better) than B.
    pub probability: f64,
}

pub fn dominance_detail(mu_a: f64, sd_a: f64, mu_b: f64, sd_b: f64) -> Result<Dominance, EvalError> {
    if !(sd_a > 0.0 && sd_b > 0.0) {
        return Err(EvalError::NonPositiveSd { sd_a, sd_b });
    }
    let mean_diff = mu_b - mu_a;
    let sd_diff = sd_a.hypot(sd_b);
    Ok(Dominance { mean_diff, sd_diff, probability: normal_cdf(mean_diff / sd_diff) })
}

/// Probability that a draw from A has a lower σ than a draw from B.
pub fn dominance(mu_a: f64, sd_a: f64, mu_b: f64, sd_b: f64) -> Result<f64, EvalError> {
    dominance_detail(mu_a, sd_a, mu_b, sd_b).map(|d| d.probability)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub per_trial_sigma: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl ScoreSummary {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self, EvalError> {
        let (mean, std) = mean_and_std(&scores).ok_or(EvalError::TooFewSamples { got: scores.len(), need: 2 })?;
        Ok(Self { n: scores.len(), per_trial_sigma: scores, mean, std })
    }
}

/// Scores every trial; any unscorable trial is an error.
pub fn summarize(logs: &[TrialLog], transient_cut: f64) -> Result<ScoreSummary, EvalError> {
    let scores = logs.iter().map(|l| trial_score(l, transient_cut)).collect::<Result<Vec<_>, _>>()?;
    ScoreSummary::from_scores(scores)
}

/// Scores only the completed trials, skipping safety stops and aborts.
pub fn summarize_scorable(logs: &[TrialLog], transient_cut: f64) -> Result<ScoreSummary, EvalError> {
    let scores = logs
        .iter()
        .filter(|l| l.termination.is_complete())
        .map(|l| trial_score(l, transient_cut))
        .collect::<Result<Vec<_>, _>>()?;
    ScoreSummary::from_scores(scores)
}

/// Per-trial CSV: `trial_id,sigma_pa,slope_gps,rmse_g,termination`. Fields
/// that cannot be computed for a trial are left empty.
pub fn scores_csv(logs: &[TrialLog], transient_cut: f64) -> String {
    let mut out = String::from("trial_id,sigma_pa,slope_gps,rmse_g,termination\n");
    for log in logs {
        let sigma = trial_score(log, transient_cut).map(|s| format!("{s:.6}")).unwrap_or_default();
        let (slope, rmse) = match scale_fit(log, transient_cut) {
            Ok(f) => (format!("{:.6}", f.slope), format!("{:.6}", f.rmse)),
            Err(_) => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{sigma},{slope},{rmse},{}", log.trial_index, log.termination.as_str());
    }
    out
}

/// Side-by-side histogram counts: `bin_lo,bin_hi,<label_a>,<label_b>`.
pub fn histogram_csv(label_a: &str, a: &Histogram, label_b: &str, b: &Histogram) -> String {
    let mut out = format!("bin_lo,bin_hi,{label_a},{label_b}\n");
    for i in 0..a.counts.len().max(b.counts.len()) {
        let (lo, hi) = a.edges(i);
        let hi = if hi.is_finite() { format!("{hi}") } else { "inf".into() };
        let ca = a.counts.get(i).copied().unwrap_or(0);
        let cb = b.counts.get(i).copied().unwrap_or(0);
        let _ = writeln!(out, "{lo},{hi},{ca},{cb}");
    }
    out
}

/// Two summaries and the dominance of A over B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub a_mean: f64,
    pub a_std: f64,
    pub b_mean: f64,
    pub b_std: f64,
    pub dominance: Dominance,
}

impl Comparison {
    pub fn new(label_a: &str, a: (f64, f64), label_b: &str, b: (f64, f64)) -> Result<Self, EvalError> {
        Ok(Self {
            label_a: label_a.into(),
            label_b: label_b.into(),
            a_mean: a.0,
            a_std: a.1,
            b_mean: b.0,
            b_std: b.1,
            dominance: dominance_detail(a.0, a.1, b.0, b.1)?,
        })
    }

    pub fn from_summaries(label_a: &str, a: &ScoreSummary, label_b: &str, b: &ScoreSummary) -> Result<Self, EvalError> {
        Self::new(label_a, (a.mean, a.std), label_b, (b.mean, b.std))
    }

    pub fn report(&self) -> String {
        let d = &self.dominance;
        format!(
            "{a}: sigma = {am:.2} ± {asd:.2} Pa\n\
             {b}: sigma = {bm:.2} ± {bsd:.2} Pa\n\
             X_{b} - X_{a} ~ N({md:.2}, {sd:.2})\n\
             P[X_{a} < X_{b}] = {p:.4}\n",
            a = self.label_a,
            b = self.label_b,
            am = self.a_mean,
            asd = self.a_std,
            bm = self.b_mean,
            bsd = self.b_std,
            md = d.mean_diff,
            sd = d.sd_diff,
            p = d.probability,
        )
    }

    pub fn csv(&self) -> String {
        let d = &self.dominance;
        format!(
            "label_a,a_mean,a_std,label_b,b_mean,b_std,mean_diff,sd_diff,p_a_better\n{},{},{},{},{},{},{},{},{}\n",
            self.label_a, self.a_mean, self.a_std, self.label_b, self.b_mean, self.b_std, d.mean_diff, d.sd_diff, d.probability
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(points: &[(f64, f64)]) -> Vec<ScaleSample> {
        points.iter().map(|&(t, weight)| ScaleSample { t, weight }).collect()
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[10.0, 30.0, 1200.0], HISTOGRAM_BIN_WIDTH, HISTOGRAM_CAP);
        assert_eq!(h.counts.len(), 17);
        assert_eq!((h.counts[0], h.counts[1], h.overflow()), (1, 1, 1));
        assert_eq!(histogram(&[400.0], 25.0, 400.0).overflow(), 1);
        assert_eq!(histogram(&[399.999], 25.0, 400.0).counts[15], 1);
        assert_eq!(histogram(&[25.0], 25.0, 400.0).counts[1], 1);
        assert_eq!(histogram(&[], 25.0, 400.0).total(), 0);
    }

    #[test]
    fn exact_line_fits() {
        let f = linear_fit(&ss(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (3.0, 7.0)])).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.rmse < 1e-12);
        assert_eq!(linear_fit(&ss(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])), Err(EvalError::Degenerate));
        assert!(linear_fit(&ss(&[(0.0, 0.0), (1.0, 1.0)])).is_err());
    }

    #[test]
    fn dominance_symmetry() {
        assert!((dominance(50.0, 10.0, 50.0, 10.0).unwrap() - 0.5).abs() < 1e-15);
        let p = dominance(93.0, 30.0, 144.0, 56.0).unwrap();
        let q = dominance(144.0, 56.0, 93.0, 30.0).unwrap();
        assert!((p + q - 1.0).abs() < 1e-12);
        assert!(dominance(1.0, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn summary_hand_values() {
        let s = ScoreSummary::from_scores(vec![20.0, 40.0]).unwrap();
        assert_eq!(s.mean, 30.0);
        assert!((s.std - 200f64.sqrt()).abs() < 1e-12);
        assert!(ScoreSummary::from_scores(vec![3.0]).is_err());
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }
}
