//! Group-wise accuracy metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{predict, LayerStack};
use crate::synth::{Group, GroupedDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    #[serde(with = "group_map")]
    pub group_accuracy: BTreeMap<Group, f64>,
    #[serde(with = "group_map")]
    pub group_counts: BTreeMap<Group, usize>,
    pub class_accuracy: Vec<f64>,
    pub wga: f64,
    pub avg: f64,
}

/// JSON object keys must be strings, so groups serialize as `"y,s"`.
mod group_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::synth::Group;

    pub fn serialize<S: Serializer, V: Serialize>(map: &BTreeMap<Group, V>, ser: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &V> = map.iter().map(|(g, v)| (format!("{},{}", g.0, g.1), v)).collect();
        keyed.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(de: D) -> Result<BTreeMap<Group, V>, D::Error> {
        let keyed = BTreeMap::<String, V>::deserialize(de)?;
        keyed
            .into_iter()
            .map(|(k, v)| {
                let (y, s) = k
                    .split_once(',')
                    .ok_or_else(|| D::Error::custom(format!("bad group key {k:?}")))?;
                let y = y.parse().map_err(D::Error::custom)?;
                let s = s.parse().map_err(D::Error::custom)?;
                Ok((Group(y, s), v))
            })
            .collect()
    }
}

/// Group with the lowest accuracy, ignoring groups without samples.
pub fn worst_group(acc: &BTreeMap<Group, f64>, counts: &BTreeMap<Group, usize>) -> Option<(Group, f64)> {
    acc.iter()
        .filter(|(g, _)| counts.get(g).copied().unwrap_or(0) > 0)
        .map(|(&g, &a)| (g, a))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Evaluates every sample once. Groups declared by the dataset's spec but
/// absent from `dataset` appear with count 0 and are excluded from WGA.
pub fn evaluate(model: &LayerStack<f32>, dataset: &GroupedDataset) -> Result<GroupReport> {
    if dataset.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let k = dataset.spec.num_classes;
    let mut correct: BTreeMap<Group, usize> = BTreeMap::new();
    let mut counts: BTreeMap<Group, usize> = BTreeMap::new();
    for y in 0..k {
        for s in 0..2 {
            counts.insert(Group(y, s), 0);
            correct.insert(Group(y, s), 0);
        }
    }
    let mut class_hits = vec![(0usize, 0usize); k];
    for sample in &dataset.samples {
        let g = sample.group();
        let hit = predict(model, &sample.image)? == sample.y;
        *counts.entry(g).or_default() += 1;
        *correct.entry(g).or_default() += usize::from(hit);
        class_hits[sample.y].0 += usize::from(hit);
        class_hits[sample.y].1 += 1;
    }
    let group_accuracy: BTreeMap<Group, f64> = counts
        .iter()
        .map(|(&g, &n)| {
            let acc = if n == 0 { 0.0 } else { correct[&g] as f64 / n as f64 };
            (g, acc)
        })
        .collect();
    let total_correct: usize = correct.values().sum();
    let (_, wga) = worst_group(&group_accuracy, &counts).expect("non-empty dataset has a group");
    Ok(GroupReport {
        class_accuracy: class_hits
            .iter()
            .map(|&(c, n)| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect(),
        wga,
        avg: total_correct as f64 / dataset.len() as f64,
        group_accuracy,
        group_counts: counts,
    })
}

/// Worst-group accuracy; requires every declared group to be present.
pub fn wga(model: &LayerStack<f32>, dataset: &GroupedDataset) -> Result<f64> {
    let report = evaluate(model, dataset)?;
    if let Some((g, _)) = report.group_counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::EmptyGroup { y: g.0, s: g.1 });
    }
    Ok(report.wga)
}

pub fn avg_acc(model: &LayerStack<f32>, dataset: &GroupedDataset) -> Result<f64> {
    Ok(evaluate(model, dataset)?.avg)
}
