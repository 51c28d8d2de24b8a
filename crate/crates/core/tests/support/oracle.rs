//! Brute-force evaluation oracle written straight from the definitions:
//! decoded-bitmap IoU, exhaustive greedy matching, and AP as a sum over
//! recall increments. Shares nothing with the library beyond data types and
//! the schema projection table.

#![allow(dead_code, clippy::too_many_arguments, clippy::type_complexity)]

use std::collections::BTreeMap;

use tripseg_core::dataset::{DetectionRecord, FrameRecord, RecognitionRecord};
use tripseg_core::mask::{rle_decode, RleMask};
use tripseg_core::schema::{ClassKey, Component, TripletSchema};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Geo {
    Mask,
    Box,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Integration {
    Envelope,
    Step,
}

fn pixels(m: &RleMask) -> Vec<bool> {
    let bm = rle_decode(m);
    let mut out = Vec::new();
    for col in 0..bm.width() {
        for row in 0..bm.height() {
            out.push(bm.get(row, col));
        }
    }
    out
}

pub fn pixel_iou(a: &RleMask, b: &RleMask) -> f64 {
    let (pa, pb) = (pixels(a), pixels(b));
    let inter = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count();
    let union = pa.iter().zip(&pb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Tight box [x, y, w, h] by scanning every pixel.
pub fn scan_box(m: &RleMask) -> [f64; 4] {
    let bm = rle_decode(m);
    let (mut r0, mut r1, mut c0, mut c1) = (u32::MAX, 0, u32::MAX, 0);
    for row in 0..bm.height() {
        for col in 0..bm.width() {
            if bm.get(row, col) {
                r0 = r0.min(row);
                r1 = r1.max(row);
                c0 = c0.min(col);
                c1 = c1.max(col);
            }
        }
    }
    [
        c0 as f64,
        r0 as f64,
        (c1 - c0 + 1) as f64,
        (r1 - r0 + 1) as f64,
    ]
}

pub fn rect_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let ih = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

fn pred_iou(p: &DetectionRecord, g: &RleMask, geo: Geo) -> f64 {
    match geo {
        Geo::Mask => pixel_iou(p.mask.as_ref().unwrap(), g),
        Geo::Box => {
            let pb = match &p.bbox {
                Some(b) => [b.x, b.y, b.w, b.h],
                None => scan_box(p.mask.as_ref().unwrap()),
            };
            rect_iou(pb, scan_box(g))
        }
    }
}

/// AP in [0, 1] from ranked TP flags.
pub fn ap(flags: &[bool], gt: usize, how: Integration) -> f64 {
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    let mut tp = 0;
    for (k, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        recall.push(tp as f64 / gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    let mut sum = 0.0;
    for i in 0..flags.len() {
        let prev = if i == 0 { 0.0 } else { recall[i - 1] };
        let p = match how {
            Integration::Step => precision[i],
            Integration::Envelope => precision[i..].iter().cloned().fold(0.0, f64::max),
        };
        sum += (recall[i] - prev) * p;
    }
    sum
}

/// Per-class AP ×100 for one component, pooled or averaged per video.
pub fn grounded(
    gt: &[FrameRecord],
    preds: &[DetectionRecord],
    component: Component,
    schema: &TripletSchema,
    tau: f64,
    geo: Geo,
    how: Integration,
    per_video: bool,
) -> BTreeMap<ClassKey, f64> {
    let class = |t: u8| schema.project(t, component).unwrap().key;
    // (bucket, class) -> (gt count, [(score, frame key, input index, tp)])
    let mut acc: BTreeMap<(String, ClassKey), (usize, Vec<(f64, (String, u32), usize, bool)>)> =
        BTreeMap::new();
    let mut keys: Vec<(String, u32)> = gt
        .iter()
        .map(|f| (f.video_id.clone(), f.frame_id))
        .collect();
    for p in preds {
        keys.push((p.video_id.clone(), p.frame_id));
    }
    keys.sort();
    keys.dedup();
    for key in keys {
        let bucket = if per_video {
            key.0.clone()
        } else {
            String::new()
        };
        let frame = gt
            .iter()
            .find(|f| f.video_id == key.0 && f.frame_id == key.1);
        let gts: Vec<(&RleMask, ClassKey)> = frame
            .map(|f| {
                f.instances
                    .iter()
                    .filter_map(|g| g.triplet_id.map(|t| (&g.mask, class(t))))
                    .collect()
            })
            .unwrap_or_default();
        let mut fp: Vec<usize> = (0..preds.len())
            .filter(|&i| (preds[i].video_id.as_str(), preds[i].frame_id) == (key.0.as_str(), key.1))
            .collect();
        // descending score, input order on ties
        fp.sort_by(|&a, &b| {
            preds[b]
                .score
                .partial_cmp(&preds[a].score)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut classes: Vec<ClassKey> = gts
            .iter()
            .map(|g| g.1)
            .chain(fp.iter().map(|&i| class(preds[i].triplet_id)))
            .collect();
        classes.sort();
        classes.dedup();
        for c in classes {
            let entry = acc.entry((bucket.clone(), c)).or_default();
            let g_idx: Vec<usize> = (0..gts.len()).filter(|&g| gts[g].1 == c).collect();
            entry.0 += g_idx.len();
            let mut taken = vec![false; g_idx.len()];
            for &i in fp.iter().filter(|&&i| class(preds[i].triplet_id) == c) {
                let mut best: Option<(usize, f64)> = None;
                for (slot, &g) in g_idx.iter().enumerate() {
                    if taken[slot] {
                        continue;
                    }
                    let v = pred_iou(&preds[i], gts[g].0, geo);
                    if v >= tau && best.is_none_or(|(_, b)| v > b) {
                        best = Some((slot, v));
                    }
                }
                if let Some((slot, _)) = best {
                    taken[slot] = true;
                }
                entry
                    .1
                    .push((preds[i].score, key.clone(), i, best.is_some()));
            }
        }
    }
    let mut per_class: BTreeMap<ClassKey, Vec<f64>> = BTreeMap::new();
    for ((_, c), (n_gt, mut items)) in acc {
        if n_gt == 0 {
            continue;
        }
        items.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let flags: Vec<bool> = items.iter().map(|x| x.3).collect();
        per_class
            .entry(c)
            .or_default()
            .push(100.0 * ap(&flags, n_gt, how));
    }
    per_class
        .into_iter()
        .map(|(c, v)| (c, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Recognition AP ×100 per class by enumerating every triplet for every class.
pub fn recognition(
    gt: &[FrameRecord],
    preds: &[RecognitionRecord],
    component: Component,
    schema: &TripletSchema,
) -> BTreeMap<ClassKey, f64> {
    let class = |t: u8| schema.project(t, component).unwrap().key;
    let mut all: Vec<ClassKey> = (0..100u8).map(class).collect();
    all.sort();
    all.dedup();
    let mut out = BTreeMap::new();
    for c in all {
        let mut items = Vec::new();
        for (k, f) in gt.iter().enumerate() {
            let rec = preds
                .iter()
                .find(|r| r.video_id == f.video_id && r.frame_id == f.frame_id);
            let mut score = 0.0f64;
            if let Some(r) = rec {
                for t in 0..100u8 {
                    if class(t) == c && r.scores[usize::from(t)] > score {
                        score = r.scores[usize::from(t)];
                    }
                }
            }
            let positive = f.frame_triplets.iter().any(|&t| class(t) == c);
            items.push((score, k, positive));
        }
        let n_pos = items.iter().filter(|x| x.2).count();
        if n_pos == 0 {
            continue;
        }
        items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let flags: Vec<bool> = items.iter().map(|x| x.2).collect();
        out.insert(c, 100.0 * ap(&flags, n_pos, Integration::Step));
    }
    out
}
