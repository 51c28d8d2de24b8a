//! Evaluation protocol: greedy one-to-one matching, average precision and
//! the component decomposition (I, V, T, IV, IT, IVT) in segmentation,
//! detection and recognition modes.
//!
//! Matching rule: predictions are visited in descending score order (input
//! order breaks ties); each takes the unmatched ground truth of the same class
//! with the highest IoU at or above the threshold (lowest index breaks ties).
//! Ground truth is matched at most once and unmatched predictions are false
//! positives.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::dataset::{DetectionRecord, FrameKey, FrameRecord, Predictions, RecognitionRecord};
use crate::error::{Error, Result};
use crate::mask::{box_iou, mask_iou, mask_to_bbox, BBox, RleMask};
use crate::schema::{ClassKey, Component, ComponentIndex, TripletSchema, NUM_TRIPLETS};

pub const MATCHING_RULE: &str = "greedy-by-score, one-to-one, highest IoU >= threshold";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Seg,
    Det,
    Rec,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Seg => "seg",
            Mode::Det => "det",
            Mode::Rec => "rec",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seg" => Ok(Mode::Seg),
            "det" => Ok(Mode::Det),
            "rec" => Ok(Mode::Rec),
            _ => Err(Error::InvalidInput(format!(
                "unknown mode {s:?} (expected seg, det or rec)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// One precision/recall curve per class over all frames.
    Pooled,
    /// Per-class AP computed inside each video, then averaged over videos.
    PerVideo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Precision replaced by its running maximum from the right.
    Envelope,
    /// Raw precision at every recall step.
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub mode: Mode,
    pub iou_threshold: f64,
    pub components: Vec<Component>,
    pub averaging: Averaging,
    /// `None` picks envelope for seg/det and step for rec.
    pub ap_method: Option<ApMethod>,
}

impl EvalConfig {
    pub fn new(mode: Mode) -> Self {
        EvalConfig {
            mode,
            iou_threshold: 0.5,
            components: Component::ALL.to_vec(),
            averaging: Averaging::Pooled,
            ap_method: None,
        }
    }

    pub fn resolved_ap_method(&self) -> ApMethod {
        self.ap_method.unwrap_or(match self.mode {
            Mode::Seg | Mode::Det => ApMethod::Envelope,
            Mode::Rec => ApMethod::Step,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "IoU threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidInput("no components requested".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentResult {
    /// Mean of `per_class`, ×100. `None` when no class has ground truth.
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    /// AP ×100 for every class with at least one ground-truth item.
    #[serde(serialize_with = "serialize_per_class")]
    pub per_class: BTreeMap<ClassKey, f64>,
    pub gt_count: u64,
    pub pred_count: u64,
}

fn serialize_per_class<S: Serializer>(
    m: &BTreeMap<ClassKey, f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), v)?;
    }
    map.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub iou_threshold: f64,
    pub averaging: Averaging,
    pub ap_method: ApMethod,
    pub matching: &'static str,
    pub frame_count: u64,
    pub components: BTreeMap<Component, ComponentResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn map(&self, component: Component) -> Option<f64> {
        self.components.get(&component).and_then(|c| c.map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Table row in the fixed column order mAP_I … mAP_IVT.
    pub fn render_table(&self, label: &str) -> String {
        let mut out = String::new();
        let width = label.len().max(8);
        let _ = write!(out, "{:<width$}", "method");
        for c in Component::ALL {
            let _ = write!(out, "{:>10}", format!("mAP_{c}"));
        }
        let _ = write!(out, "\n{label:<width$}");
        for c in Component::ALL {
            match self.map(c) {
                Some(v) => {
                    let _ = write!(out, "{v:>10.2}");
                }
                None => {
                    let _ = write!(out, "{:>10}", "-");
                }
            }
        }
        let _ = writeln!(
            out,
            "\n({} mode, IoU {}, {} averaging, {} frames)",
            self.mode,
            self.iou_threshold,
            match self.averaging {
                Averaging::Pooled => "pooled",
                Averaging::PerVideo => "per-video",
            },
            self.frame_count
        );
        out
    }
}

// ---------------------------------------------------------------------------
// matching and AP

/// Greedy matching over an implicit IoU matrix. Returns one TP flag per
/// prediction; prediction indices must already be in descending-score order.
fn greedy_match(
    n_preds: usize,
    n_gts: usize,
    threshold: f64,
    mut iou: impl FnMut(usize, usize) -> f64,
) -> Vec<bool> {
    let mut taken = vec![false; n_gts];
    (0..n_preds)
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, used) in taken.iter().enumerate() {
                if *used {
                    continue;
                }
                let v = iou(p, g);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Matches score-sorted predictions against ground truth in one frame.
/// `preds` must be sorted by descending score.
pub fn match_frame<P, G>(
    preds: &[P],
    gts: &[G],
    iou_threshold: f64,
    mut iou_fn: impl FnMut(&P, &G) -> f64,
) -> Vec<bool> {
    greedy_match(preds.len(), gts.len(), iou_threshold, |p, g| {
        iou_fn(&preds[p], &gts[g])
    })
}

/// Average precision in [0, 1] of scored TP/FP flags against `gt_count`
/// ground-truth items.
pub fn average_precision(items: &[(f64, bool)], gt_count: u64, method: ApMethod) -> Result<f64> {
    if gt_count == 0 {
        return Err(Error::InvalidInput(
            "average precision needs at least one ground-truth item".into(),
        ));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].0.total_cmp(&items[a].0));

    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0u64;
    for (rank, &i) in order.iter().enumerate() {
        tp += u64::from(items[i].1);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    if tp > gt_count {
        return Err(Error::InvalidInput(format!(
            "{tp} true positives for {gt_count} ground-truth items"
        )));
    }
    if method == ApMethod::Envelope {
        for k in (0..precision.len().saturating_sub(1)).rev() {
            precision[k] = precision[k].max(precision[k + 1]);
        }
    }
    // every true positive adds 1/gt_count of recall
    let sum: f64 = order
        .iter()
        .zip(&precision)
        .filter(|(&i, _)| items[i].1)
        .map(|(_, &p)| p)
        .sum();
    Ok(sum / gt_count as f64)
}

/// A detection relabelled into one component space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedDetection<'a> {
    pub class: ClassKey,
    pub record: &'a DetectionRecord,
}

pub fn project_detections<'a>(
    dets: &'a [DetectionRecord],
    component: Component,
    schema: &TripletSchema,
) -> Result<Vec<ProjectedDetection<'a>>> {
    dets.iter()
        .map(|d| {
            Ok(ProjectedDetection {
                class: schema.project(d.triplet_id, component)?.key,
                record: d,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// grounded (seg / det) evaluation

enum Geometry<'a> {
    Mask(&'a RleMask),
    Box(BBox),
}

/// Per-frame data shared by every component pass.
struct FramePass {
    video: usize,
    /// Triplet of each prediction, in descending-score order.
    pred_triplets: Vec<u8>,
    pred_scores: Vec<f64>,
    gt_triplets: Vec<u8>,
    /// Row-major `preds × gts`.
    iou: Vec<f64>,
}

fn geometry_of_detection<'a>(
    d: &'a DetectionRecord,
    mode: Mode,
    locus: &dyn Fn() -> String,
) -> Result<Geometry<'a>> {
    match mode {
        Mode::Seg => d.mask.as_ref().map(Geometry::Mask).ok_or_else(|| {
            Error::validation(
                locus(),
                "segmentation mode needs a mask on every prediction",
            )
        }),
        Mode::Det => match (&d.bbox, &d.mask) {
            (Some(b), _) => Ok(Geometry::Box(*b)),
            (None, Some(m)) => mask_to_bbox(m)
                .map(Geometry::Box)
                .map_err(|_| Error::validation(locus(), "cannot derive a box from an empty mask")),
            (None, None) => Err(Error::validation(locus(), "prediction has no geometry")),
        },
        Mode::Rec => unreachable!("grounded evaluation only"),
    }
}

fn iou(a: &Geometry<'_>, b: &Geometry<'_>) -> Result<f64> {
    match (a, b) {
        (Geometry::Mask(a), Geometry::Mask(b)) => mask_iou(a, b),
        (Geometry::Box(a), Geometry::Box(b)) => Ok(box_iou(a, b)),
        _ => unreachable!("mixed geometry"),
    }
}

/// A frame's ground truth (if annotated) and the indices of its predictions.
type FrameSlot<'a> = (Option<&'a FrameRecord>, Vec<usize>);

/// Evaluates mask (seg) or box (det) grounded predictions.
///
/// Predictions in frames absent from the ground truth are kept as false
/// positives and reported in `warnings`.
pub fn evaluate_grounded(
    gt: &[FrameRecord],
    preds: &[DetectionRecord],
    config: &EvalConfig,
    schema: &TripletSchema,
) -> Result<EvalReport> {
    config.validate()?;
    if config.mode == Mode::Rec {
        return Err(Error::InvalidInput(
            "grounded evaluation needs seg or det mode".into(),
        ));
    }
    let mode = config.mode;

    // frame universe: ground truth plus any frame only named by predictions
    let mut frame_slots: BTreeMap<(&str, u32), FrameSlot> = BTreeMap::new();
    for f in gt {
        let slot = frame_slots
            .entry((f.video_id.as_str(), f.frame_id))
            .or_default();
        if slot.0.is_some() {
            return Err(Error::validation(
                format!("video {} frame {}", f.video_id, f.frame_id),
                "duplicate ground-truth frame",
            ));
        }
        slot.0 = Some(f);
    }
    for (i, d) in preds.iter().enumerate() {
        schema.parts(d.triplet_id)?;
        frame_slots
            .entry((d.video_id.as_str(), d.frame_id))
            .or_default()
            .1
            .push(i);
    }
    let mut warnings = Vec::new();
    let mut videos: BTreeMap<&str, usize> = BTreeMap::new();
    for (&(vid, fid), (frame, dets)) in &frame_slots {
        if frame.is_none() {
            warnings.push(format!(
                "{} prediction(s) for video {vid} frame {fid}, which has no ground truth; scored as false positives",
                dets.len()
            ));
        }
        let n = videos.len();
        videos.entry(vid).or_insert(n);
    }
    // video numbering follows sorted video id
    for (i, v) in videos.values_mut().enumerate() {
        *v = i;
    }

    let slots: Vec<_> = frame_slots.into_iter().collect();
    let passes: Vec<FramePass> = slots
        .par_iter()
        .map(|((vid, fid), (frame, det_idx))| -> Result<FramePass> {
            let (vid, fid) = (*vid, *fid);
            let mut det_idx = det_idx.clone();
            // stable: equal scores keep input order
            det_idx.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
            let pred_geo = det_idx
                .iter()
                .map(|&i| {
                    let d = &preds[i];
                    let locus = || format!("prediction {i} (video {vid} frame {fid})");
                    let g = geometry_of_detection(d, mode, &locus)?;
                    if let Some(f) = frame {
                        let fits = match &g {
                            Geometry::Mask(m) => m.size() == (f.height, f.width),
                            Geometry::Box(b) => b.within(f.width, f.height),
                        };
                        if !fits {
                            return Err(Error::validation(
                                locus(),
                                format!("geometry does not fit the {}x{} frame", f.height, f.width),
                            ));
                        }
                    }
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            let (gt_geo, gt_triplets): (Vec<Geometry<'_>>, Vec<u8>) = match frame {
                Some(f) => f
                    .grounded()
                    .map(|(g, t)| {
                        let geo = match mode {
                            Mode::Seg => Geometry::Mask(&g.mask),
                            _ => Geometry::Box(mask_to_bbox(&g.mask)?),
                        };
                        Ok((geo, t))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip(),
                None => (Vec::new(), Vec::new()),
            };
            let mut ious = Vec::with_capacity(pred_geo.len() * gt_geo.len());
            for p in &pred_geo {
                for g in &gt_geo {
                    ious.push(iou(p, g)?);
                }
            }
            Ok(FramePass {
                video: videos[vid],
                pred_triplets: det_idx.iter().map(|&i| preds[i].triplet_id).collect(),
                pred_scores: det_idx.iter().map(|&i| preds[i].score).collect(),
                gt_triplets,
                iou: ious,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let method = config.resolved_ap_method();
    let components: BTreeSet<Component> = config.components.iter().copied().collect();
    let results: Vec<(Component, ComponentResult)> = components
        .par_iter()
        .map(|&c| {
            let index = schema.component_index(c);
            let r = grounded_component(&passes, &index, config, method, videos.len())?;
            Ok((c, r))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        mode,
        iou_threshold: config.iou_threshold,
        averaging: config.averaging,
        ap_method: method,
        matching: MATCHING_RULE,
        frame_count: gt.len() as u64,
        components: results.into_iter().collect(),
        warnings,
    })
}

#[derive(Default, Clone)]
struct ClassAccumulator {
    items: Vec<(f64, bool)>,
    gt: u64,
}

fn grounded_component(
    passes: &[FramePass],
    index: &ComponentIndex,
    config: &EvalConfig,
    method: ApMethod,
    n_videos: usize,
) -> Result<ComponentResult> {
    let n_classes = index.len();
    let buckets = match config.averaging {
        Averaging::Pooled => 1,
        Averaging::PerVideo => n_videos.max(1),
    };
    // acc[bucket * n_classes + class]
    let mut acc = vec![ClassAccumulator::default(); buckets * n_classes];
    let mut gt_total = 0u64;
    let mut pred_total = 0u64;

    for pass in passes {
        let bucket = match config.averaging {
            Averaging::Pooled => 0,
            Averaging::PerVideo => pass.video,
        };
        let n_gt = pass.gt_triplets.len();
        let gt_class: Vec<usize> = pass
            .gt_triplets
            .iter()
            .map(|&t| index.class_of(t))
            .collect();
        let pred_class: Vec<usize> = pass
            .pred_triplets
            .iter()
            .map(|&t| index.class_of(t))
            .collect();
        gt_total += n_gt as u64;
        pred_total += pred_class.len() as u64;
        let mut classes: Vec<usize> = gt_class.iter().chain(&pred_class).copied().collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let p_idx: Vec<usize> = (0..pred_class.len())
                .filter(|&p| pred_class[p] == class)
                .collect();
            let g_idx: Vec<usize> = (0..n_gt).filter(|&g| gt_class[g] == class).collect();
            let flags = greedy_match(p_idx.len(), g_idx.len(), config.iou_threshold, |p, g| {
                pass.iou[p_idx[p] * n_gt + g_idx[g]]
            });
            let a = &mut acc[bucket * n_classes + class];
            a.gt += g_idx.len() as u64;
            a.items.extend(
                p_idx
                    .iter()
                    .zip(flags)
                    .map(|(&p, tp)| (pass.pred_scores[p], tp)),
            );
        }
    }
    finish_component(
        &acc, index, n_classes, buckets, method, gt_total, pred_total,
    )
}

fn finish_component(
    acc: &[ClassAccumulator],
    index: &ComponentIndex,
    n_classes: usize,
    buckets: usize,
    method: ApMethod,
    gt_total: u64,
    pred_total: u64,
) -> Result<ComponentResult> {
    let mut per_class = BTreeMap::new();
    for class in 0..n_classes {
        let aps = (0..buckets)
            .map(|b| &acc[b * n_classes + class])
            .filter(|a| a.gt > 0)
            .map(|a| average_precision(&a.items, a.gt, method))
            .collect::<Result<Vec<_>>>()?;
        if !aps.is_empty() {
            let mean = aps.iter().sum::<f64>() / aps.len() as f64;
            per_class.insert(index.classes[class], 100.0 * mean);
        }
    }
    let map =
        (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64);
    Ok(ComponentResult {
        map,
        per_class,
        gt_count: gt_total,
        pred_count: pred_total,
    })
}

// ---------------------------------------------------------------------------
// recognition

/// Frame-level recognition AP. A class score is the maximum score over the
/// triplets that project onto it; a class is positive in a frame when any
/// frame-level triplet projects onto it. Frames without a record score zero.
pub fn evaluate_recognition(
    gt: &[FrameRecord],
    preds: &[RecognitionRecord],
    config: &EvalConfig,
    schema: &TripletSchema,
) -> Result<EvalReport> {
    config.validate()?;
    if config.mode != Mode::Rec {
        return Err(Error::InvalidInput(
            "recognition evaluation needs rec mode".into(),
        ));
    }
    let mut by_key: HashMap<(&str, u32), &RecognitionRecord> = HashMap::new();
    for r in preds {
        if r.scores.len() != NUM_TRIPLETS {
            return Err(Error::validation(
                format!("video {} frame {}", r.video_id, r.frame_id),
                format!("expected {NUM_TRIPLETS} scores, found {}", r.scores.len()),
            ));
        }
        if by_key
            .insert((r.video_id.as_str(), r.frame_id), r)
            .is_some()
        {
            return Err(Error::validation(
                format!("video {} frame {}", r.video_id, r.frame_id),
                "duplicate recognition record",
            ));
        }
    }
    let mut order: Vec<&FrameRecord> = gt.iter().collect();
    order.sort_by(|a, b| (&a.video_id, a.frame_id).cmp(&(&b.video_id, b.frame_id)));
    let mut warnings = Vec::new();
    {
        let known: std::collections::HashSet<(&str, u32)> = order
            .iter()
            .map(|f| (f.video_id.as_str(), f.frame_id))
            .collect();
        let mut unknown: Vec<_> = by_key.keys().filter(|k| !known.contains(*k)).collect();
        unknown.sort();
        for (vid, fid) in unknown {
            warnings.push(format!(
                "recognition record for video {vid} frame {fid} has no ground truth; ignored"
            ));
        }
    }
    let mut videos: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &order {
        let n = videos.len();
        videos.entry(f.video_id.as_str()).or_insert(n);
    }
    let zeros = vec![0.0; NUM_TRIPLETS];
    let rows: Vec<(usize, &[f64], &[u8], bool)> = order
        .iter()
        .map(|f| {
            let rec = by_key.get(&(f.video_id.as_str(), f.frame_id));
            let scores = rec.map_or(zeros.as_slice(), |r| r.scores.as_slice());
            (
                videos[f.video_id.as_str()],
                scores,
                f.frame_triplets.as_slice(),
                rec.is_some(),
            )
        })
        .collect();
    for &t in rows.iter().flat_map(|r| r.2) {
        schema.parts(t)?;
    }

    let method = config.resolved_ap_method();
    let components: BTreeSet<Component> = config.components.iter().copied().collect();
    let results = components
        .par_iter()
        .map(|&c| {
            let index = schema.component_index(c);
            let n_classes = index.len();
            let buckets = match config.averaging {
                Averaging::Pooled => 1,
                Averaging::PerVideo => videos.len().max(1),
            };
            let mut acc = vec![ClassAccumulator::default(); buckets * n_classes];
            let mut gt_total = 0;
            let mut class_score = vec![0.0f64; n_classes];
            let mut positive = vec![false; n_classes];
            for &(video, scores, triplets, _) in &rows {
                let bucket = if buckets == 1 { 0 } else { video };
                class_score.fill(f64::NEG_INFINITY);
                positive.fill(false);
                for (t, &s) in scores.iter().enumerate() {
                    let k = index.class_of(t as u8);
                    class_score[k] = class_score[k].max(s);
                }
                for &t in triplets {
                    positive[index.class_of(t)] = true;
                }
                for k in 0..n_classes {
                    let a = &mut acc[bucket * n_classes + k];
                    a.items.push((class_score[k], positive[k]));
                    a.gt += u64::from(positive[k]);
                    gt_total += u64::from(positive[k]);
                }
            }
            let pred_total = rows.iter().filter(|r| r.3).count() as u64;
            finish_component(
                &acc, &index, n_classes, buckets, method, gt_total, pred_total,
            )
            .map(|r| (c, r))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        mode: Mode::Rec,
        iou_threshold: config.iou_threshold,
        averaging: config.averaging,
        ap_method: method,
        matching: "none (frame-level)",
        frame_count: gt.len() as u64,
        components: results.into_iter().collect(),
        warnings,
    })
}

/// Dispatches on the prediction kind; the kind must agree with `config.mode`.
pub fn evaluate(
    gt: &[FrameRecord],
    preds: &Predictions,
    config: &EvalConfig,
    schema: &TripletSchema,
) -> Result<EvalReport> {
    match (preds, config.mode) {
        (Predictions::Grounded(d), Mode::Seg | Mode::Det) => {
            evaluate_grounded(gt, d, config, schema)
        }
        (Predictions::Recognition(r), Mode::Rec) => evaluate_recognition(gt, r, config, schema),
        (Predictions::Grounded(_), Mode::Rec) => Err(Error::InvalidInput(
            "rec mode needs recognition predictions".into(),
        )),
        (Predictions::Recognition(_), _) => Err(Error::InvalidInput(format!(
            "{} mode needs detection predictions",
            config.mode
        ))),
    }
}

/// Evaluation restricted to a set of ground-truth frames and the predictions
/// that fall inside it.
pub fn evaluate_subset(
    gt: &[FrameRecord],
    preds: &Predictions,
    subset: &BTreeSet<FrameKey>,
    config: &EvalConfig,
    schema: &TripletSchema,
) -> Result<EvalReport> {
    let known: BTreeSet<(&str, u32)> = gt
        .iter()
        .map(|f| (f.video_id.as_str(), f.frame_id))
        .collect();
    if let Some((v, f)) = subset
        .iter()
        .find(|(v, f)| !known.contains(&(v.as_str(), *f)))
    {
        return Err(Error::InvalidInput(format!(
            "subset frame (video {v}, frame {f}) is not in the ground truth"
        )));
    }
    let inside = |v: &str, f: u32| subset.contains(&(v.to_owned(), f));
    let gt_sub: Vec<FrameRecord> = gt
        .iter()
        .filter(|f| inside(&f.video_id, f.frame_id))
        .cloned()
        .collect();
    let preds_sub = match preds {
        Predictions::Grounded(d) => Predictions::Grounded(
            d.iter()
                .filter(|r| inside(&r.video_id, r.frame_id))
                .cloned()
                .collect(),
        ),
        Predictions::Recognition(r) => Predictions::Recognition(
            r.iter()
                .filter(|r| inside(&r.video_id, r.frame_id))
                .cloned()
                .collect(),
        ),
    };
    evaluate(&gt_sub, &preds_sub, config, schema)
}
