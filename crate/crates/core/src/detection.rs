//! Finding spurious-positive samples.
//!
//! The most confidently predicted samples of a class are ranked, an input
//! heatmap is computed for each, and a subset whose evidence sits on the
//! shortcut is selected, either by a person (selection file / service) or
//! by an oracle that checks heatmap mass against the ground-truth masks.
//! Selected samples are paired with masked inputs that keep only their
//! most relevant pixels.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::lrp::{input_heatmap, lrp_backward, Heatmap, DEFAULT_EPS};
use crate::network::LayerStack;
use crate::render;
use crate::synth::{GroupedDataset, SIDE};
use crate::tensor::{io, Tensor};

pub const DEFAULT_N_REF: usize = 100;
pub const DEFAULT_MASK_QUANTILE: f64 = 0.1;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_T_MAX: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub sample_id: usize,
    pub rank: usize,
    pub logit: f32,
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun {
    pub run_id: String,
    pub class_id: usize,
    pub n_ref: usize,
    pub mask_quantile: f64,
    pub eps: f64,
    /// Sorted by logit, descending.
    pub entries: Vec<RankedEntry>,
}

impl DetectionRun {
    pub fn entry(&self, sample_id: usize) -> Option<&RankedEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    Human,
    Oracle,
    File,
}

/// Positive sample set `I` with its masked inputs `M`, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousPositiveSet {
    pub class_id: usize,
    pub sample_ids: Vec<usize>,
    pub masked: Vec<Tensor<f32>>,
    pub masks: Vec<Vec<u8>>,
    pub source: SelectionSource,
    pub mask_quantile: f64,
}

impl SpuriousPositiveSet {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Same samples, but masked by their ground-truth spurious masks.
    pub fn with_gt_masks(&self, dataset: &GroupedDataset) -> Result<SpuriousPositiveSet> {
        let mut masked = Vec::with_capacity(self.len());
        let mut masks = Vec::with_capacity(self.len());
        for &id in &self.sample_ids {
            let sample = dataset.by_id(id).ok_or(Error::UnknownIds(vec![id]))?;
            if sample.gt_mask.iter().all(|&m| m == 0) {
                return Err(Error::Config(format!("sample {id} has an empty ground-truth mask")));
            }
            masked.push(apply_mask(&sample.image, &sample.gt_mask, 0.0)?);
            masks.push(sample.gt_mask.clone());
        }
        Ok(SpuriousPositiveSet {
            masked,
            masks,
            ..self.clone()
        })
    }
}

/// Orders `(sample_id, logit)` pairs by logit descending, ties by id
/// ascending, and keeps the first `n_ref`.
pub fn rank_by_logit(mut scored: Vec<(usize, f32)>, n_ref: usize) -> Vec<(usize, f32)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n_ref);
    scored
}

/// Class-`class_id` samples with the highest `class_id` logit.
pub fn top_activated(
    model: &LayerStack<f32>,
    dataset: &GroupedDataset,
    class_id: usize,
    n_ref: usize,
) -> Result<Vec<(usize, f32)>> {
    let mut scored = Vec::new();
    for s in dataset.samples.iter().filter(|s| s.y == class_id) {
        let logits = model.logits(&s.image)?;
        let logit = *logits.data().get(class_id).ok_or(Error::Index {
            what: "class id",
            index: class_id,
            len: logits.len(),
        })?;
        scored.push((s.id, logit));
    }
    if scored.is_empty() {
        return Err(Error::Config(format!("dataset has no samples of class {class_id}")));
    }
    Ok(rank_by_logit(scored, n_ref))
}

pub fn sample_heatmap(model: &LayerStack<f32>, image: &Tensor<f32>, class_id: usize, eps: f64) -> Result<Heatmap> {
    let trace = model.forward(image)?;
    input_heatmap(&lrp_backward(model, &trace, class_id, eps)?)
}

/// Ranks the top `n_ref` samples of `class_id` and computes their heatmaps.
pub fn detect(
    model: &LayerStack<f32>,
    dataset: &GroupedDataset,
    class_id: usize,
    n_ref: usize,
    mask_quantile: f64,
    run_id: impl Into<String>,
) -> Result<DetectionRun> {
    check_quantile(mask_quantile)?;
    let ranked = top_activated(model, dataset, class_id, n_ref)?;
    let mut entries = Vec::with_capacity(ranked.len());
    for (rank, (sample_id, logit)) in ranked.into_iter().enumerate() {
        let sample = dataset.by_id(sample_id).expect("ranked ids come from the dataset");
        entries.push(RankedEntry {
            sample_id,
            rank,
            logit,
            heatmap: sample_heatmap(model, &sample.image, class_id, DEFAULT_EPS)?,
        });
    }
    Ok(DetectionRun {
        run_id: run_id.into(),
        class_id,
        n_ref,
        mask_quantile,
        eps: DEFAULT_EPS,
        entries,
    })
}

fn check_quantile(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("mask quantile must lie in (0, 1], got {q}")))
    }
}

/// Binary mask keeping the top-`q` fraction of positively relevant pixels.
pub fn quantile_mask(heatmap: &Heatmap, q: f64) -> Result<Vec<u8>> {
    check_quantile(q)?;
    let mut positive: Vec<f32> = heatmap.values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::NoPositiveRelevance);
    }
    positive.sort_by(|a, b| b.total_cmp(a));
    let keep = ((q * positive.len() as f64).ceil() as usize).clamp(1, positive.len());
    let threshold = positive[keep - 1];
    Ok(heatmap
        .values
        .iter()
        .map(|&v| u8::from(v > 0.0 && v >= threshold))
        .collect())
}

/// `image ⊙ mask` over every channel; suppressed pixels take `fill`.
pub fn apply_mask(image: &Tensor<f32>, mask: &[u8], fill: f32) -> Result<Tensor<f32>> {
    let shape = image.shape();
    let plane: usize = shape[1..].iter().product();
    if mask.len() != plane {
        return Err(Error::dim("apply_mask", shape, &[mask.len()]));
    }
    let mut out = image.clone();
    for chunk in out.data_mut().chunks_mut(plane) {
        for (v, &m) in chunk.iter_mut().zip(mask) {
            if m == 0 {
                *v = fill;
            }
        }
    }
    Ok(out)
}

/// Masked input `m_i` and the mask it was built with.
pub fn build_masked_input(image: &Tensor<f32>, heatmap: &Heatmap, q: f64) -> Result<(Tensor<f32>, Vec<u8>)> {
    let mask = quantile_mask(heatmap, q)?;
    Ok((apply_mask(image, &mask, 0.0)?, mask))
}

fn positive_set(
    run: &DetectionRun,
    dataset: &GroupedDataset,
    ids: Vec<usize>,
    source: SelectionSource,
) -> Result<SpuriousPositiveSet> {
    let mut masked = Vec::with_capacity(ids.len());
    let mut masks = Vec::with_capacity(ids.len());
    for &id in &ids {
        let entry = run.entry(id).ok_or(Error::UnknownIds(vec![id]))?;
        let sample = dataset.by_id(id).ok_or(Error::UnknownIds(vec![id]))?;
        let (m, mask) = build_masked_input(&sample.image, &entry.heatmap, run.mask_quantile)?;
        masked.push(m);
        masks.push(mask);
    }
    Ok(SpuriousPositiveSet {
        class_id: run.class_id,
        sample_ids: ids,
        masked,
        masks,
        source,
        mask_quantile: run.mask_quantile,
    })
}

/// Ranked samples whose positive heatmap mass inside the ground-truth mask is
/// at least `tau`, in rank order, at most `t_max`.
pub fn oracle_select(
    run: &DetectionRun,
    dataset: &GroupedDataset,
    tau: f64,
    t_max: usize,
) -> Result<SpuriousPositiveSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    let mut ids = Vec::new();
    for entry in &run.entries {
        if ids.len() >= t_max {
            break;
        }
        let sample = dataset
            .by_id(entry.sample_id)
            .ok_or(Error::UnknownIds(vec![entry.sample_id]))?;
        if entry.heatmap.positive_mass_fraction(&sample.gt_mask) >= tau {
            ids.push(entry.sample_id);
        }
    }
    if ids.is_empty() {
        return Err(Error::NoCandidates(tau));
    }
    positive_set(run, dataset, ids, SelectionSource::Oracle)
}

/// On-disk / wire selection document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub run_id: String,
    pub class_id: usize,
    pub sample_ids: Vec<usize>,
    pub source: SelectionSource,
}

/// Checks a selection against the run's entries without building inputs.
pub fn validate_selection(run_ids: &BTreeSet<usize>, sample_ids: &[usize]) -> Result<()> {
    if sample_ids.is_empty() {
        return Err(Error::EmptySelection);
    }
    let unknown: Vec<usize> = sample_ids.iter().copied().filter(|id| !run_ids.contains(id)).collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownIds(unknown))
    }
}

pub fn ingest_selection(
    run: &DetectionRun,
    dataset: &GroupedDataset,
    selection: &Selection,
) -> Result<SpuriousPositiveSet> {
    if selection.run_id != run.run_id || selection.class_id != run.class_id {
        return Err(Error::Config(format!(
            "selection targets run {:?} class {}, not run {:?} class {}",
            selection.run_id, selection.class_id, run.run_id, run.class_id
        )));
    }
    let ids: BTreeSet<usize> = run.entries.iter().map(|e| e.sample_id).collect();
    validate_selection(&ids, &selection.sample_ids)?;
    // duplicates collapse, order follows the selection
    let mut seen = BTreeSet::new();
    let unique: Vec<usize> = selection
        .sample_ids
        .iter()
        .copied()
        .filter(|id| seen.insert(*id))
        .collect();
    positive_set(run, dataset, unique, selection.source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: usize,
    pub rank: usize,
    pub logit: f32,
    pub original: String,
    pub heatmap: String,
    pub overlay: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub class_id: usize,
    pub n_ref: usize,
    pub mask_quantile: f64,
    pub entries: Vec<ManifestEntry>,
}

pub const IMAGES_DIR: &str = "images";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes originals, heatmaps and overlays under `dir/images/` plus
/// `dir/manifest.json`. File names in the manifest are relative to
/// `dir/images/`.
pub fn export_review_bundle(run: &DetectionRun, dataset: &GroupedDataset, dir: &Path) -> Result<Manifest> {
    let images = dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut entries = Vec::with_capacity(run.entries.len());
    for e in &run.entries {
        let sample = dataset.by_id(e.sample_id).ok_or(Error::UnknownIds(vec![e.sample_id]))?;
        let names = [
            format!("{:05}_original.ppm", e.sample_id),
            format!("{:05}_heatmap.pgm", e.sample_id),
            format!("{:05}_overlay.ppm", e.sample_id),
        ];
        fsutil::write_atomic(&images.join(&names[0]), &render::ppm_rgb(&sample.image)?)?;
        fsutil::write_atomic(&images.join(&names[1]), &render::pgm_heatmap(&e.heatmap))?;
        fsutil::write_atomic(
            &images.join(&names[2]),
            &render::ppm_overlay(&sample.image, &e.heatmap)?,
        )?;
        let [original, heatmap, overlay] = names;
        entries.push(ManifestEntry {
            sample_id: e.sample_id,
            rank: e.rank,
            logit: e.logit,
            original,
            heatmap,
            overlay,
        });
    }
    let manifest = Manifest {
        run_id: run.run_id.clone(),
        class_id: run.class_id,
        n_ref: run.n_ref,
        mask_quantile: run.mask_quantile,
        entries,
    };
    fsutil::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    run_id: String,
    class_id: usize,
    n_ref: usize,
    mask_quantile: f64,
    eps: f64,
    entries: Vec<(usize, usize, f32)>,
}

pub const RUN_FILE: &str = "run.json";
pub const HEATMAPS_FILE: &str = "heatmaps.scr1";

/// Persists the run (ranking + raw heatmaps) so selections can be ingested
/// later without recomputing relevance.
pub fn save_run(run: &DetectionRun, dir: &Path) -> Result<()> {
    let record = RunRecord {
        run_id: run.run_id.clone(),
        class_id: run.class_id,
        n_ref: run.n_ref,
        mask_quantile: run.mask_quantile,
        eps: run.eps,
        entries: run.entries.iter().map(|e| (e.sample_id, e.rank, e.logit)).collect(),
    };
    fsutil::write_json(&dir.join(RUN_FILE), &record)?;
    if !run.entries.is_empty() {
        let mut data = Vec::with_capacity(run.entries.len() * SIDE * SIDE);
        let (h, w) = (run.entries[0].heatmap.height, run.entries[0].heatmap.width);
        for e in &run.entries {
            data.extend_from_slice(&e.heatmap.values);
        }
        io::save(
            &Tensor::new(vec![run.entries.len(), h, w], data)?,
            &dir.join(HEATMAPS_FILE),
        )?;
    }
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<DetectionRun> {
    let record: RunRecord = fsutil::read_json(&dir.join(RUN_FILE))?;
    let mut entries = Vec::with_capacity(record.entries.len());
    if !record.entries.is_empty() {
        let maps: Tensor<f32> = io::load(&dir.join(HEATMAPS_FILE))?;
        let shape = maps.shape().to_vec();
        if shape.len() != 3 || shape[0] != record.entries.len() {
            return Err(Error::Format(format!("heatmap tensor shape {shape:?}")));
        }
        let plane = shape[1] * shape[2];
        for (i, &(sample_id, rank, logit)) in record.entries.iter().enumerate() {
            entries.push(RankedEntry {
                sample_id,
                rank,
                logit,
                heatmap: Heatmap::from_values(shape[1], shape[2], maps.data()[i * plane..(i + 1) * plane].to_vec())?,
            });
        }
    }
    Ok(DetectionRun {
        run_id: record.run_id,
        class_id: record.class_id,
        n_ref: record.n_ref,
        mask_quantile: record.mask_quantile,
        eps: record.eps,
        entries,
    })
}

pub fn image_path(dir: &Path, file: &str) -> PathBuf {
    dir.join(IMAGES_DIR).join(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_split, preset, Preset, Split};

    fn hm(values: &[f32], h: usize, w: usize) -> Heatmap {
        Heatmap::from_values(h, w, values.to_vec()).unwrap()
    }

    #[test]
    fn ranking_examples() {
        let r = rank_by_logit(vec![(0, 2.0), (1, 0.5), (2, 1.0)], 100);
        assert_eq!(r.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 2, 1]);
        let r = rank_by_logit(vec![(5, 1.0), (3, 1.0), (4, 2.0)], 2);
        assert_eq!(r.iter().map(|e| e.0).collect::<Vec<_>>(), vec![4, 3]);
    }

    #[test]
    fn masked_input_examples() {
        let image = Tensor::<f32>::from_f64(&[1, 2, 2], &[10., 20., 30., 40.]).unwrap();
        let (m, mask) = build_masked_input(&image, &hm(&[0., 0., 5., 1.], 2, 2), 0.25).unwrap();
        assert_eq!(m.data(), &[0., 0., 30., 0.]);
        assert_eq!(mask, vec![0, 0, 1, 0]);
        let (m, _) = build_masked_input(&image, &hm(&[1., 2., 3., 4.], 2, 2), 1.0).unwrap();
        assert_eq!(m, image);
        assert!(matches!(
            build_masked_input(&image, &hm(&[0., -1., 0., 0.], 2, 2), 0.5),
            Err(Error::NoPositiveRelevance)
        ));
        assert!(build_masked_input(&image, &hm(&[1., 1., 1., 1.], 2, 2), 0.0).is_err());
    }

    fn fake_run(ds: &GroupedDataset, ids: &[usize], inside: bool) -> DetectionRun {
        let entries = ids
            .iter()
            .enumerate()
            .map(|(rank, &id)| {
                let s = ds.by_id(id).unwrap();
                let values = s
                    .gt_mask
                    .iter()
                    .map(|&m| if (m == 1) == inside { 1.0 } else { 0.0 })
                    .collect();
                RankedEntry {
                    sample_id: id,
                    rank,
                    logit: 10.0 - rank as f32,
                    heatmap: Heatmap::from_values(SIDE, SIDE, values).unwrap(),
                }
            })
            .collect();
        DetectionRun {
            run_id: "r".into(),
            class_id: 0,
            n_ref: 100,
            mask_quantile: 0.1,
            eps: 0.0,
            entries,
        }
    }

    fn small() -> GroupedDataset {
        let mut spec = preset(Preset::KneeLike, 2);
        spec.train.size = 40;
        generate_split(&spec, Split::Train).unwrap()
    }

    #[test]
    fn oracle_selects_patch_focused_samples_only() {
        let ds = small();
        let patched: Vec<usize> = ds
            .samples
            .iter()
            .filter(|s| s.y == 0 && s.s == 1)
            .map(|s| s.id)
            .collect();
        let clean: Vec<usize> = ds
            .samples
            .iter()
            .filter(|s| s.y == 0 && s.s == 0)
            .map(|s| s.id)
            .collect();
        let mut ids = patched.clone();
        ids.extend(&clean);
        let run = fake_run(&ds, &ids, true);
        let set = oracle_select(&run, &ds, 0.5, 100).unwrap();
        assert_eq!(set.sample_ids, patched);
        assert_eq!(set.source, SelectionSource::Oracle);
        // masks are regenerable from (heatmap, q)
        for (id, m) in set.sample_ids.iter().zip(&set.masked) {
            let s = ds.by_id(*id).unwrap();
            let (again, _) = build_masked_input(&s.image, &run.entry(*id).unwrap().heatmap, 0.1).unwrap();
            assert_eq!(&again, m);
        }
        let capped = oracle_select(&run, &ds, 0.5, 2).unwrap();
        assert_eq!(capped.sample_ids, patched[..2].to_vec());

        let outside = fake_run(&ds, &patched, false);
        assert!(matches!(
            oracle_select(&outside, &ds, 0.5, 10),
            Err(Error::NoCandidates(_))
        ));
    }

    #[test]
    fn ingest_validates_ids() {
        let ds = small();
        let ids: Vec<usize> = ds.class_ids(0);
        let run = fake_run(&ds, &ids, false);
        let sel = Selection {
            run_id: "r".into(),
            class_id: 0,
            sample_ids: vec![ids[0], ids[1]],
            source: SelectionSource::File,
        };
        let set = ingest_selection(&run, &ds, &sel).unwrap();
        assert_eq!(set.len(), 2);
        let bad = Selection {
            sample_ids: vec![ids[0], 999],
            ..sel.clone()
        };
        match ingest_selection(&run, &ds, &bad) {
            Err(Error::UnknownIds(v)) => assert_eq!(v, vec![999]),
            other => panic!("{other:?}"),
        }
        let empty = Selection {
            sample_ids: vec![],
            ..sel
        };
        assert!(matches!(
            ingest_selection(&run, &ds, &empty),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn gt_mask_positive_set_rejects_unpatched() {
        let ds = small();
        let clean = ds.samples.iter().find(|s| s.s == 0).unwrap().id;
        let set = SpuriousPositiveSet {
            class_id: 0,
            sample_ids: vec![clean],
            masked: vec![Tensor::zeros(&[3, SIDE, SIDE])],
            masks: vec![vec![0; SIDE * SIDE]],
            source: SelectionSource::Oracle,
            mask_quantile: 0.1,
        };
        assert!(set.with_gt_masks(&ds).is_err());
    }

    #[test]
    fn bundle_and_run_roundtrip() {
        let ds = small();
        let ids: Vec<usize> = ds.class_ids(0).into_iter().take(2).collect();
        let run = fake_run(&ds, &ids, true);
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_review_bundle(&run, &ds, dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 2);
        for e in &manifest.entries {
            for f in [&e.original, &e.heatmap, &e.overlay] {
                assert!(image_path(dir.path(), f).is_file());
            }
        }
        let first = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        let overlay = std::fs::read(image_path(dir.path(), &manifest.entries[0].overlay)).unwrap();
        export_review_bundle(&run, &ds, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap(), first);
        assert_eq!(
            std::fs::read(image_path(dir.path(), &manifest.entries[0].overlay)).unwrap(),
            overlay
        );

        save_run(&run, dir.path()).unwrap();
        assert_eq!(load_run(dir.path()).unwrap(), run);
    }
}
