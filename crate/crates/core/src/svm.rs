//! Linear soft-margin SVM trained with the Pegasos stochastic subgradient
//! method.
//!
//! Minimizes `λ/2·‖w‖² + (1/n)·Σ max(0, 1 − y·(w·x + b))` with step size
//! `η_t = 1/(λ·t)`, labels mapped `{0, 1} → {−1, +1}`. The bias is not
//! regularized. Two classes need a single binary machine; a one-versus-one
//! scheme over more classes would train one of these per class pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::routing::AssembledFeatures;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmTrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, epochs: 50, seed: 0 }
    }
}

impl SvmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("svm lambda must be > 0, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("svm epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

/// A trained model and, when requested, the mean objective over the steps of
/// each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub model: SvmModel,
    pub epoch_objective: Vec<f64>,
}

fn signed(label: usize) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized mean hinge loss of `(weights, bias)` on the given data.
pub fn objective<V: AsRef<[f64]>>(weights: &[f64], bias: f64, vectors: &[V], labels: &[usize], lambda: f64) -> f64 {
    let hinge: f64 =
        vectors.iter().zip(labels).map(|(x, &y)| (1.0 - signed(y) * (dot(weights, x.as_ref()) + bias)).max(0.0)).sum();
    0.5 * lambda * dot(weights, weights) + hinge / vectors.len() as f64
}

/// A subgradient of [`objective`]: `(∂/∂w, ∂/∂b)`. Exact wherever no
/// sample sits at margin 1.
pub fn objective_subgradient<V: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    vectors: &[V],
    labels: &[usize],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = vectors.len() as f64;
    let mut gw: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let mut gb = 0.0;
    for (x, &y) in vectors.iter().zip(labels) {
        let x = x.as_ref();
        let y = signed(y);
        if y * (dot(weights, x) + bias) < 1.0 {
            for (g, v) in gw.iter_mut().zip(x) {
                *g -= y * v / n;
            }
            gb -= y / n;
        }
    }
    (gw, gb)
}

fn check_data<V: AsRef<[f64]>>(vectors: &[V], labels: &[usize]) -> Result<usize> {
    if vectors.len() != labels.len() {
        return Err(Error::Input(format!("{} vectors with {} labels", vectors.len(), labels.len())));
    }
    let dim = vectors.first().map(|v| v.as_ref().len()).ok_or_else(|| Error::Input("no training vectors".into()))?;
    if dim == 0 {
        return Err(Error::Input("zero-length feature vectors".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::Input(format!("feature length {} differs from {dim}", v.as_ref().len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {l} outside {{0, 1}}")));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::Training("need at least one sample of each class".into()));
    }
    Ok(dim)
}

/// Pegasos over raw vectors. Each epoch visits every sample once in a seeded
/// random order.
pub fn fit<V: AsRef<[f64]>>(
    vectors: &[V],
    labels: &[usize],
    cfg: &SvmTrainConfig,
    track_objective: bool,
) -> Result<SvmFit> {
    cfg.validate()?;
    let dim = check_data(vectors, labels)?;
    let lambda = cfg.lambda;
    let mut rng = Rng::new(cfg.seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut epoch_objective = Vec::new();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut acc = 0.0;
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = vectors[i].as_ref();
            let y = signed(labels[i]);
            let violated = y * (dot(&w, x) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj *= shrink;
                if violated {
                    *wj += eta * y * xj;
                }
            }
            if violated {
                b += eta * y;
            }
            if track_objective {
                acc += objective(&w, b, vectors, labels, lambda);
            }
        }
        if track_objective {
            epoch_objective.push(acc / order.len() as f64);
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Training("svm weights became non-finite".into()));
    }
    Ok(SvmFit { model: SvmModel { weights: w, bias: b, lambda }, epoch_objective })
}

pub fn svm_train(features: &[AssembledFeatures], cfg: &SvmTrainConfig) -> Result<SvmModel> {
    let vectors: Vec<&[f64]> = features.iter().map(|f| f.vector.as_slice()).collect();
    let labels: Vec<usize> = features.iter().map(|f| f.label).collect();
    fit(&vectors, &labels, cfg, false).map(|f| f.model)
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Input(format!(
                "feature length {} for a model of length {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// `w·x + b ≥ 0 → 1`, otherwise 0; an exact zero goes to class 1.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(usize::from(self.decision(x)? >= 0.0))
    }
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

/// Fraction of correctly classified samples.
pub fn accuracy(model: &SvmModel, test: &[AssembledFeatures]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let mut correct = 0usize;
    for f in test {
        if model.predict(&f.vector)? == f.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Percent with two decimals, e.g. `0.9438 → "94.38"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", 100.0 * fraction)
}

/// Per-dimension z-scoring fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        let dim = vectors
            .first()
            .map(|v| v.as_ref().len())
            .ok_or_else(|| Error::Input("no vectors to standardize".into()))?;
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.as_ref()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
                *s += (x - m).powi(2) / n;
            }
        }
        // constant dimensions are centred but not scaled
        let inv_std = var.iter().map(|&s| if s > 1e-24 { 1.0 / s.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.inv_std).map(|((v, m), s)| (v - m) * s).collect()
    }

    /// An equivalent model on raw inputs for one trained on standardized
    /// inputs.
    pub fn fold(&self, model: &SvmModel) -> SvmModel {
        let weights: Vec<f64> = model.weights.iter().zip(&self.inv_std).map(|(w, s)| w * s).collect();
        let shift: f64 = weights.iter().zip(&self.mean).map(|(w, m)| w * m).sum();
        SvmModel { weights, bias: model.bias - shift, lambda: model.lambda }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64) -> SvmTrainConfig {
        SvmTrainConfig { lambda, epochs: 50, seed: 3 }
    }

    #[test]
    fn separable_pair() {
        let x = [vec![-1.0], vec![1.0]];
        let fit = fit(&x, &[0, 1], &cfg(0.01), false).unwrap();
        assert_eq!(fit.model.predict(&[-1.0]).unwrap(), 0);
        assert_eq!(fit.model.predict(&[1.0]).unwrap(), 1);
    }

    #[test]
    fn predict_cases() {
        let m = SvmModel { weights: vec![1.0], bias: 0.0, lambda: 1.0 };
        assert_eq!(svm_predict(&m, &[3.0]).unwrap(), 1);
        assert_eq!(svm_predict(&m, &[-2.0]).unwrap(), 0);
        assert_eq!(svm_predict(&m, &[0.0]).unwrap(), 1);
        assert!(matches!(svm_predict(&m, &[1.0, 2.0]), Err(Error::Input(_))));
    }

    #[test]
    fn data_errors() {
        let x = [vec![1.0], vec![2.0]];
        assert!(matches!(fit(&x, &[1, 1], &cfg(0.1), false), Err(Error::Training(_))));
        let ragged = [vec![1.0], vec![2.0, 3.0]];
        assert!(matches!(fit(&ragged, &[0, 1], &cfg(0.1), false), Err(Error::Input(_))));
    }

    #[test]
    fn folded_standardizer_matches() {
        let x = [vec![1.0, 10.0], vec![3.0, -2.0], vec![2.0, 4.0]];
        let z = Standardizer::fit(&x).unwrap();
        let m = SvmModel { weights: vec![0.3, -1.2], bias: 0.1, lambda: 1.0 };
        let folded = z.fold(&m);
        for v in [vec![0.5, 0.5], vec![-3.0, 7.0]] {
            let a = m.decision(&z.apply(&v)).unwrap();
            assert!((a - folded.decision(&v).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        assert_eq!(fit(&x, &y, &cfg(0.01), false).unwrap(), fit(&x, &y, &cfg(0.01), false).unwrap());
    }

    #[test]
    fn accuracy_and_formatting() {
        let m = SvmModel { weights: vec![1.0], bias: 0.0, lambda: 1.0 };
        let sample = |x: f64, label| AssembledFeatures { vector: vec![x], source: String::new(), label };
        let all = [sample(1.0, 1), sample(-1.0, 0)];
        assert_eq!(accuracy(&m, &all).unwrap(), 1.0);
        let half = [sample(1.0, 1), sample(1.0, 0), sample(-1.0, 0), sample(-1.0, 1)];
        assert_eq!(accuracy(&m, &half).unwrap(), 0.5);
        assert!(accuracy(&m, &[]).is_err());
        assert_eq!(format_percent(0.9438), "94.38");
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let b = 0.3;
        let lambda = 0.1;
        let (gw, gb) = objective_subgradient(&w, b, &x, &y, lambda);
        let h = 1e-6;
        for j in 0..4 {
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let num = (objective(&wp, b, &x, &y, lambda) - objective(&wm, b, &x, &y, lambda)) / (2.0 * h);
            assert!((num - gw[j]).abs() / num.abs().max(1e-8) < 1e-6, "{j}: {num} vs {}", gw[j]);
        }
        let num = (objective(&w, b + h, &x, &y, lambda) - objective(&w, b - h, &x, &y, lambda)) / (2.0 * h);
        assert!((num - gb).abs() / num.abs().max(1e-8) < 1e-6);
    }

    #[test]
    fn standardizer_centres() {
        let x = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
    }
}
