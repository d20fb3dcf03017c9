//! Classification and clustering quality measures. Values that are undefined
//! for the given input are `None` rather than 0.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Positive class = `true` (anomalous).
    pub fn count(pred: &[bool], truth: &[bool]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn metrics(&self) -> ClassificationMetrics {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let n = self.tp + self.fp + self.fn_ + self.tn;
        ClassificationMetrics {
            accuracy: ratio(self.tp + self.tn, n),
            f1: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            sensitivity: ratio(self.tp, self.tp + self.fn_),
            specificity: ratio(self.tn, self.tn + self.fp),
        }
    }
}

pub fn classification_metrics(pred: &[bool], truth: &[bool]) -> Result<ClassificationMetrics> {
    Ok(Confusion::count(pred, truth)?.metrics())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    pub c_index: Option<f64>,
    pub sse: f64,
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<f64>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    sq_euclid(a, b).sqrt()
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        n += 1;
    }
    m.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    m
}

/// Internal indices in Euclidean space. `sse` is measured against the given
/// centroids; the other indices use the points only.
pub fn clustering_metrics(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> Result<ClusteringMetrics> {
    let n = points.len();
    if n == 0 {
        return Err(Error::NoTraces);
    }
    if assignments.len() != n {
        return Err(Error::Shape(format!("{} assignments for {n} points", assignments.len())));
    }
    let dim = points[0].len();
    if points.iter().chain(centroids).any(|p| p.len() != dim) {
        return Err(Error::Shape("points and centroids must share one length".into()));
    }
    if let Some(&a) = assignments.iter().find(|&&a| a >= centroids.len()) {
        return Err(Error::Shape(format!("assignment {a} with {} centroids", centroids.len())));
    }
    let sse = points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_euclid(p, &centroids[a]))
        .sum();

    let mut labels: Vec<usize> = assignments.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let k = labels.len();
    let members = |c: usize| (0..n).filter(move |&i| assignments[i] == c);

    let dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| euclid(&points[i], &points[j])).collect()).collect();

    let silhouette = (k >= 2 && k < n).then(|| {
        let s: f64 = (0..n)
            .map(|i| {
                let own = assignments[i];
                let size = members(own).count();
                if size == 1 {
                    return 0.0;
                }
                let a = members(own).filter(|&j| j != i).map(|j| dist[i][j]).sum::<f64>() / (size - 1) as f64;
                let b = labels
                    .iter()
                    .filter(|&&c| c != own)
                    .map(|&c| {
                        let m: Vec<usize> = members(c).collect();
                        m.iter().map(|&j| dist[i][j]).sum::<f64>() / m.len() as f64
                    })
                    .fold(f64::INFINITY, f64::min);
                let den = a.max(b);
                if den > 0.0 {
                    (b - a) / den
                } else {
                    0.0
                }
            })
            .sum();
        s / n as f64
    });

    let calinski_harabasz = if k >= 2 && n > k {
        let overall = mean_of(points.iter(), dim);
        let (mut between, mut within) = (0.0, 0.0);
        for &c in &labels {
            let m: Vec<usize> = members(c).collect();
            let cm = mean_of(m.iter().map(|&i| &points[i]), dim);
            between += m.len() as f64 * sq_euclid(&cm, &overall);
            within += m.iter().map(|&i| sq_euclid(&points[i], &cm)).sum::<f64>();
        }
        let scale: f64 = points.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>()).sum();
        (within > 1e-12 * scale.max(f64::MIN_POSITIVE)).then(|| (between / (k - 1) as f64) / (within / (n - k) as f64))
    } else {
        None
    };

    let c_index = if k >= 2 {
        let mut all = Vec::with_capacity(n * (n - 1) / 2);
        let mut within_sum = 0.0;
        let mut nw = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                all.push(dist[i][j]);
                if assignments[i] == assignments[j] {
                    within_sum += dist[i][j];
                    nw += 1;
                }
            }
        }
        all.sort_by(f64::total_cmp);
        let smin: f64 = all[..nw].iter().sum();
        let smax: f64 = all[all.len() - nw..].iter().sum();
        (nw > 0 && smax > smin).then(|| (within_sum - smin) / (smax - smin))
    } else {
        None
    };

    Ok(ClusteringMetrics {
        c_index,
        sse,
        silhouette,
        calinski_harabasz,
    })
}
