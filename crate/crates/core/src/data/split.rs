//! Pair-level, class-stratified train/test splits.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::routing::StereoSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { train_fraction: 0.6, seed: 0 }
    }
}

/// Source pairs on the training side.
pub fn train_sources(samples: &[StereoSample], plan: &SplitPlan) -> Result<HashSet<String>> {
    if !(plan.train_fraction > 0.0 && plan.train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {} is not in (0, 1)", plan.train_fraction)));
    }
    // sources per class in first-appearance order
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut class_of: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        match class_of.get(s.source.as_str()) {
            Some(&c) if c != s.label => {
                return Err(Error::Split(format!("source `{}` appears with labels {c} and {}", s.source, s.label)));
            }
            Some(_) => {}
            None => {
                class_of.insert(&s.source, s.label);
                by_class.entry(s.label).or_default().push(&s.source);
            }
        }
    }
    if by_class.len() < 2 {
        return Err(Error::Split("need pairs of both classes".into()));
    }
    let mut train = HashSet::new();
    for (class, mut sources) in by_class {
        let n = sources.len();
        let k = (plan.train_fraction * n as f64).round() as usize;
        if k == 0 || k == n {
            return Err(Error::Split(format!(
                "class {class} has {n} pair(s); a {:.2} split leaves one side empty",
                plan.train_fraction
            )));
        }
        Rng::derived(plan.seed, class as u64).shuffle(&mut sources);
        train.extend(sources[..k].iter().map(|s| s.to_string()));
    }
    Ok(train)
}

/// Partition samples into `(train, test)` by source pair, so augmented
/// variants always land on the same side as their original. Input order is
/// preserved on both sides.
pub fn split(samples: &[StereoSample], plan: &SplitPlan) -> Result<(Vec<StereoSample>, Vec<StereoSample>)> {
    let train = train_sources(samples, plan)?;
    Ok(samples.iter().cloned().partition(|s| train.contains(&s.source)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn dataset(per_class: usize) -> Vec<StereoSample> {
        let t = Tensor::zeros(Shape::new(1, 2, 2, 3).unwrap()).unwrap();
        (0..2 * per_class)
            .map(|i| StereoSample::new(format!("p{i}"), t.clone(), t.clone(), usize::from(i >= per_class)).unwrap())
            .collect()
    }

    #[test]
    fn ten_pairs_six_four() {
        let (train, test) = split(&dataset(5), &SplitPlan::default()).unwrap();
        assert_eq!((train.len(), test.len()), (6, 4));
    }

    #[test]
    fn same_seed_same_assignment() {
        let d = dataset(20);
        let plan = SplitPlan { seed: 3, ..Default::default() };
        assert_eq!(split(&d, &plan).unwrap(), split(&d, &plan).unwrap());
        let other = SplitPlan { seed: 4, ..Default::default() };
        assert_ne!(split(&d, &plan).unwrap().0, split(&d, &other).unwrap().0);
    }

    #[test]
    fn too_small() {
        assert!(matches!(split(&dataset(1), &SplitPlan::default()), Err(Error::Split(_))));
        let bad = SplitPlan { train_fraction: 1.0, seed: 0 };
        assert!(matches!(split(&dataset(5), &bad), Err(Error::Split(_))));
    }
}
