//! Histogram entropy estimation, transfer entropy and motif causality.
//!
//! All logarithms are base 2 and `0 * log 0` is taken as 0. Joint
//! distributions are estimated by binning every axis with the same
//! [`HistogramSpec`] and counting bin tuples.
//!
//! Estimates from short series are biased upwards for joint entropies: every
//! extra conditioning axis multiplies the number of cells by `num_bins`, so
//! with a handful of samples per cell conditional entropies collapse toward
//! zero. Motif causality uses at most three axes for that reason, and the bin
//! count is the main knob to trade resolution for bias.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSpec {
    pub num_bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            num_bins: 10,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl HistogramSpec {
    pub fn new(num_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        let s = Self { num_bins, lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bins < 2 {
            return Err(Error::InvalidConfig(format!("num_bins must be >= 2, got {}", self.num_bins)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidConfig(format!(
                "histogram range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Equal-width bin of `v`; out-of-range values clamp to the edge bins.
    pub fn bin(&self, v: f64) -> usize {
        let width = (self.hi - self.lo) / self.num_bins as f64;
        let b = ((v - self.lo) / width).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.num_bins - 1)
        }
    }
}

/// A discrete probability distribution over histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("probabilities must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EntropyKind {
    Shannon,
    Renyi { alpha: f64 },
}

impl Default for EntropyKind {
    fn default() -> Self {
        EntropyKind::Shannon
    }
}

impl EntropyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntropyKind::Shannon => Ok(()),
            EntropyKind::Renyi { alpha } if alpha > 0.0 && alpha != 1.0 && alpha.is_finite() => Ok(()),
            EntropyKind::Renyi { alpha } => Err(Error::InvalidConfig(format!(
                "renyi alpha must be > 0 and != 1, got {alpha}"
            ))),
        }
    }

    fn of_probs(&self, probs: impl Iterator<Item = f64>) -> f64 {
        match *self {
            EntropyKind::Shannon => -probs.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>(),
            EntropyKind::Renyi { alpha } => {
                let s: f64 = probs.filter(|&p| p > 0.0).map(|p| p.powf(alpha)).sum();
                // ln_1p keeps precision when alpha is close to 1 and s close to 1.
                (s - 1.0).ln_1p() / std::f64::consts::LN_2 / (1.0 - alpha)
            }
        }
    }
}

pub fn histogram(values: &[f64], spec: &HistogramSpec) -> Result<ProbDist> {
    spec.validate()?;
    if values.is_empty() {
        return Err(Error::Degenerate("histogram of an empty series".into()));
    }
    let mut counts = vec![0usize; spec.num_bins];
    for &v in values {
        counts[spec.bin(v)] += 1;
    }
    let n = values.len() as f64;
    Ok(ProbDist(counts.into_iter().map(|c| c as f64 / n).collect()))
}

pub fn entropy(dist: &ProbDist, kind: EntropyKind) -> Result<f64> {
    kind.validate()?;
    Ok(kind.of_probs(dist.0.iter().copied()).max(0.0))
}

/// Entropy of the joint histogram over `axes` (all the same length).
pub fn joint_entropy(axes: &[&[f64]], spec: &HistogramSpec, kind: EntropyKind) -> Result<f64> {
    spec.validate()?;
    kind.validate()?;
    let Some(first) = axes.first() else {
        return Ok(0.0);
    };
    let n = first.len();
    if axes.iter().any(|a| a.len() != n) {
        return Err(Error::Shape("joint entropy axes differ in length".into()));
    }
    if n == 0 {
        return Err(Error::Degenerate("joint entropy of empty series".into()));
    }
    let radix = spec.num_bins as u64;
    radix
        .checked_pow(axes.len() as u32)
        .ok_or_else(|| Error::InvalidConfig(format!("{} axes of {} bins overflow", axes.len(), radix)))?;
    let mut keys: Vec<u64> = (0..n)
        .map(|t| axes.iter().fold(0u64, |acc, a| acc * radix + spec.bin(a[t]) as u64))
        .collect();
    keys.sort_unstable();
    // Summing over sorted cell counts makes the result a function of the
    // count multiset alone, so relabelled joints give bit-identical entropies.
    let mut counts: Vec<usize> = keys.chunk_by(|a, b| a == b).map(<[u64]>::len).collect();
    counts.sort_unstable();
    let total = n as f64;
    Ok(kind.of_probs(counts.into_iter().map(|c| c as f64 / total)).max(0.0))
}

/// `H(T | C) = H(T, C) - H(C)`, one histogram axis per conditioner.
pub fn conditional_entropy(
    target: &[f64],
    conditioners: &[&[f64]],
    spec: &HistogramSpec,
    kind: EntropyKind,
) -> Result<f64> {
    if conditioners.iter().any(|c| c.len() != target.len()) {
        return Err(Error::Shape(format!(
            "conditioner length differs from target length {}",
            target.len()
        )));
    }
    let mut joint: Vec<&[f64]> = Vec::with_capacity(conditioners.len() + 1);
    joint.push(target);
    joint.extend_from_slice(conditioners);
    let h_joint = joint_entropy(&joint, spec, kind)?;
    let h_cond = joint_entropy(conditioners, spec, kind)?;
    Ok(h_joint - h_cond)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagMode {
    Fixed,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagConfig {
    /// Depth of the target (or conditioning-set) history.
    pub f: usize,
    /// Depth of the source history.
    pub g: usize,
    pub lag_mode: LagMode,
    /// Largest source shift searched in variable mode.
    pub max_lag: usize,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self {
            f: 1,
            g: 1,
            lag_mode: LagMode::Fixed,
            max_lag: 0,
        }
    }
}

impl LagConfig {
    pub fn validate(&self, tau: Option<usize>) -> Result<()> {
        if self.f == 0 || self.g == 0 {
            return Err(Error::InvalidConfig("lags f and g must be >= 1".into()));
        }
        if let Some(tau) = tau {
            if self.f > tau || self.g > tau {
                return Err(Error::InvalidConfig(format!(
                    "lags f={} g={} exceed motif length {tau}",
                    self.f, self.g
                )));
            }
        }
        Ok(())
    }
}

/// Shift `d` in `0..=max_lag` maximizing `|corr(x_{t-d}, y_t)|` over the
/// overlapping samples; ties go to the smaller shift.
pub fn select_lag(x: &[f64], y: &[f64], max_lag: usize) -> usize {
    let n = x.len().min(y.len());
    let mut best = (0usize, f64::NEG_INFINITY);
    for d in 0..=max_lag.min(n.saturating_sub(2)) {
        let r = pearson(&x[..n - d], &y[d..n]).abs();
        if r > best.1 {
            best = (d, r);
        }
    }
    best.0
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Lagged copies of `series`: column `l - 1` holds `series[t - l - shift]`
/// for every target time `t` in `start..end`.
fn lagged(series: &[f64], depth: usize, shift: usize, start: usize, end: usize) -> Vec<Vec<f64>> {
    (1..=depth)
        .map(|l| (start..end).map(|t| series[t - l - shift]).collect())
        .collect()
}

/// Transfer entropy from `x` to `y`:
/// `H(y_t | y history) - H(y_t | y history, x history)`.
pub fn transfer_entropy(
    x: &[f64],
    y: &[f64],
    lag: &LagConfig,
    spec: &HistogramSpec,
    kind: EntropyKind,
) -> Result<f64> {
    lag.validate(None)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series lengths {} and {} differ", x.len(), y.len())));
    }
    let shift = match lag.lag_mode {
        LagMode::Fixed => 0,
        LagMode::Variable => select_lag(x, y, lag.max_lag.min(x.len().saturating_sub(1))).max(1) - 1,
    };
    let start = lag.f.max(lag.g + shift);
    let n = y.len();
    if n < lag.f + lag.g + 1 || start >= n {
        return Err(Error::Degenerate(format!(
            "series of length {n} too short for lags f={} g={} shift={shift}",
            lag.f, lag.g
        )));
    }
    let target = &y[start..n];
    let y_hist = lagged(y, lag.f, 0, start, n);
    let x_hist = lagged(x, lag.g, shift, start, n);
    let own: Vec<&[f64]> = y_hist.iter().map(Vec::as_slice).collect();
    let mut both = own.clone();
    both.extend(x_hist.iter().map(Vec::as_slice));
    let h_own = conditional_entropy(target, &own, spec, kind)?;
    let h_both = conditional_entropy(target, &both, spec, kind)?;
    Ok(h_own - h_both)
}

/// Settings for motif causality evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    pub histogram: HistogramSpec,
    pub lag: LagConfig,
    pub kind: EntropyKind,
}

impl EntropyConfig {
    pub fn validate(&self, tau: Option<usize>) -> Result<()> {
        self.histogram.validate()?;
        self.lag.validate(tau)?;
        self.kind.validate()
    }
}

/// Pointwise mean of the conditioning motifs, used as a single history axis.
pub fn pool_conditioning_set(k: &[&[f64]], tau: usize) -> Result<Option<Vec<f64>>> {
    if k.is_empty() {
        return Ok(None);
    }
    let mut pooled = vec![0.0; tau];
    for m in k {
        if m.len() != tau {
            return Err(Error::TauMismatch {
                expected: tau,
                found: m.len(),
            });
        }
        for (p, v) in pooled.iter_mut().zip(m.iter()) {
            *p += v;
        }
    }
    let n = k.len() as f64;
    pooled.iter_mut().for_each(|p| *p /= n);
    Ok(Some(pooled))
}

/// Motif causality of `source` on `target` given the conditioning set `k`,
/// as the fraction of the target's conditional uncertainty removed by the
/// source history:
///
/// `MC = clamp((H(T | K) - H(T | K, S)) / H(T | K), 0, 1)`, and 0 when
/// `H(T | K) = 0`.
///
/// Motif values are read as within-motif series. `K` is pooled into one axis
/// (its pointwise mean) lagged by `f`; the source is lagged by `g`, or from the
/// source lag chosen by [`select_lag`] in variable mode (never below 1).
pub fn motif_causality(
    source: &[f64],
    target: &[f64],
    k: &[&[f64]],
    cfg: &EntropyConfig,
) -> Result<f64> {
    let tau = target.len();
    if source.len() != tau {
        return Err(Error::TauMismatch {
            expected: tau,
            found: source.len(),
        });
    }
    cfg.validate(Some(tau))?;
    let pooled = pool_conditioning_set(k, tau)?;
    mc_with_pooled(source, target, pooled.as_deref(), cfg)
}

pub(crate) fn mc_with_pooled(
    source: &[f64],
    target: &[f64],
    pooled: Option<&[f64]>,
    cfg: &EntropyConfig,
) -> Result<f64> {
    let tau = target.len();
    let lag = &cfg.lag;
    let shift = match lag.lag_mode {
        LagMode::Fixed => 0,
        LagMode::Variable => select_lag(source, target, lag.max_lag.min(tau.saturating_sub(1))).max(1) - 1,
    };
    let k_depth = if pooled.is_some() { lag.f } else { 0 };
    let start = k_depth.max(lag.g + shift);
    if start >= tau {
        return Err(Error::Degenerate(format!(
            "motif length {tau} too short for lags f={} g={} shift={shift}",
            lag.f, lag.g
        )));
    }
    let y = &target[start..];
    let k_hist = pooled.map(|p| lagged(p, lag.f, 0, start, tau)).unwrap_or_default();
    let s_hist = lagged(source, lag.g, shift, start, tau);
    let base: Vec<&[f64]> = k_hist.iter().map(Vec::as_slice).collect();
    let mut with_source = base.clone();
    with_source.extend(s_hist.iter().map(Vec::as_slice));
    let h_base = conditional_entropy(y, &base, &cfg.histogram, cfg.kind)?;
    if h_base <= 1e-12 {
        return Ok(0.0);
    }
    let h_with = conditional_entropy(y, &with_source, &cfg.histogram, cfg.kind)?;
    let mc = ((h_base - h_with) / h_base).clamp(0.0, 1.0);
    if mc.is_finite() {
        Ok(mc)
    } else {
        Err(Error::NonFinite("motif causality".into()))
    }
}
