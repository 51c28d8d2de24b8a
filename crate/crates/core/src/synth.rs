//! Seeded synthetic datasets for tests, benchmarks and the acceptance suite.
//!
//! Everything here is deterministic in its seed. Masks are built straight
//! from column intervals so large frames stay cheap to generate.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::alignment::{InstanceMaskFrame, MaskInstance, TripletLabelFrame};
use crate::dataset::{
    DetectionRecord, FrameRecord, GroundedInstance, Predictions, RecognitionRecord, FLAG_UNMATCHED,
};
use crate::error::Result;
use crate::eval::Mode;
use crate::mask::{mask_to_bbox, rle_decode, rle_encode, BBox, Bitmap, RleMask};
use crate::schema::{TripletSchema, NUM_INSTRUMENTS, NUM_TRIPLETS};
use crate::stats::seeded_rng;

/// Pixels whose centres fall strictly inside the ellipse centred at
/// (`cy`, `cx`) with radii (`ry`, `rx`). May be empty.
pub fn ellipse_mask(
    height: u32,
    width: u32,
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
) -> Result<RleMask> {
    let h = u64::from(height);
    let mut intervals = Vec::new();
    for col in 0..width {
        let dx = (f64::from(col) + 0.5 - cx) / rx;
        if dx.abs() >= 1.0 {
            continue;
        }
        let half = ry * (1.0 - dx * dx).sqrt();
        // rows r with |r + 0.5 - cy| < half
        let r0 = ((cy - half - 0.5).floor() + 1.0).clamp(0.0, f64::from(height)) as u64;
        let r1 = (cy + half - 0.5).ceil().clamp(0.0, f64::from(height)) as u64;
        if r1 > r0 {
            let base = u64::from(col) * h;
            intervals.push((base + r0, base + r1));
        }
    }
    merge_adjacent(&mut intervals);
    RleMask::from_intervals(height, width, intervals)
}

fn merge_adjacent(intervals: &mut Vec<(u64, u64)>) {
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(intervals.len());
    for &(s, e) in intervals.iter() {
        match out.last_mut() {
            Some(last) if last.1 == s => last.1 = e,
            _ => out.push((s, e)),
        }
    }
    *intervals = out;
}

fn random_ellipse(height: u32, width: u32, rng: &mut impl Rng) -> Result<RleMask> {
    loop {
        let cy = rng.gen_range(0.0..f64::from(height));
        let cx = rng.gen_range(0.0..f64::from(width));
        let ry = rng.gen_range(0.5..(f64::from(height) / 2.0).max(1.0));
        let rx = rng.gen_range(0.5..(f64::from(width) / 2.0).max(1.0));
        let m = ellipse_mask(height, width, cy, cx, ry, rx)?;
        if !m.is_empty() {
            return Ok(m);
        }
    }
}

/// Random non-empty mask: an ellipse with scattered extra pixels.
fn random_mask(height: u32, width: u32, rng: &mut impl Rng) -> Result<RleMask> {
    let base = rle_decode(&random_ellipse(height, width, rng)?);
    let noise = rng.gen_range(0.0..0.15);
    let bm = Bitmap::from_fn(height, width, |r, c| base.get(r, c) || rng.gen_bool(noise));
    Ok(rle_encode(&bm))
}

/// Flips a random fraction of pixels, keeping the mask non-empty.
fn perturb_mask(mask: &RleMask, rng: &mut impl Rng) -> RleMask {
    let bm = rle_decode(mask);
    let p = rng.gen_range(0.0..0.4);
    loop {
        let out = Bitmap::from_fn(bm.height(), bm.width(), |r, c| {
            bm.get(r, c) ^ rng.gen_bool(p)
        });
        if out.count_ones() > 0 {
            return rle_encode(&out);
        }
    }
}

fn jitter_box(b: BBox, width: u32, height: u32, rng: &mut impl Rng) -> Result<BBox> {
    let x = (b.x + rng.gen_range(-2.0..=2.0)).clamp(0.0, f64::from(width) - 1.0);
    let y = (b.y + rng.gen_range(-2.0..=2.0)).clamp(0.0, f64::from(height) - 1.0);
    let w = (b.w + rng.gen_range(-2.0..=2.0)).clamp(1.0, f64::from(width) - x);
    let h = (b.h + rng.gen_range(-2.0..=2.0)).clamp(1.0, f64::from(height) - y);
    BBox::new(x, y, w, h)
}

// ---------------------------------------------------------------------------
// micro instances

/// A small random evaluation problem.
#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub gt: Vec<FrameRecord>,
    pub preds: Vec<DetectionRecord>,
    /// Triplet classes in use.
    pub classes: Vec<u8>,
}

/// At most 5 frames over 1 or 2 videos, at most 4 triplet classes, at most 3
/// instances per frame, masks at most 32×32. About half of the instances use
/// a coarse score grid so that ties occur.
pub fn micro_instance(seed: u64, schema: &TripletSchema) -> Result<MicroInstance> {
    let mut rng = seeded_rng(seed);
    let n_classes = rng.gen_range(1..=4);
    let all: Vec<u8> = (0..NUM_TRIPLETS as u8).collect();
    let classes: Vec<u8> = all.choose_multiple(&mut rng, n_classes).copied().collect();
    let coarse_scores = rng.gen_bool(0.5);
    let score = |rng: &mut rand_xoshiro::Xoshiro256StarStar| {
        if coarse_scores {
            f64::from(rng.gen_range(1..=4u8)) / 4.0
        } else {
            rng.gen_range(0.0..=1.0)
        }
    };

    let n_frames = rng.gen_range(1..=5);
    let mut keys = BTreeSet::new();
    while keys.len() < n_frames {
        keys.insert((format!("v{}", rng.gen_range(0..2)), rng.gen_range(0..8u32)));
    }
    let mut gt = Vec::new();
    let mut preds = Vec::new();
    for (video_id, frame_id) in keys {
        let height = rng.gen_range(1..=32);
        let width = rng.gen_range(1..=32);
        let n_inst = rng.gen_range(0..=3);
        let mut instances = Vec::new();
        for i in 0..n_inst {
            let t = *classes.choose(&mut rng).expect("non-empty");
            let unmatched = rng.gen_bool(0.1);
            instances.push(GroundedInstance {
                instance_id: i,
                instrument_id: schema.parts(t)?.instrument,
                triplet_id: (!unmatched).then_some(t),
                flags: if unmatched {
                    BTreeSet::from([FLAG_UNMATCHED.to_string()])
                } else {
                    BTreeSet::new()
                },
                mask: random_mask(height, width, &mut rng)?,
            });
        }
        let mut frame_triplets: Vec<u8> = instances.iter().filter_map(|g| g.triplet_id).collect();
        frame_triplets.sort_unstable();

        let n_pred = rng.gen_range(0..=4);
        for _ in 0..n_pred {
            let triplet_id = *classes.choose(&mut rng).expect("non-empty");
            let mask = match instances.choose(&mut rng) {
                Some(g) if rng.gen_bool(0.7) => perturb_mask(&g.mask, &mut rng),
                _ => random_mask(height, width, &mut rng)?,
            };
            let bbox = if rng.gen_bool(0.7) {
                Some(jitter_box(mask_to_bbox(&mask)?, width, height, &mut rng)?)
            } else {
                None
            };
            preds.push(DetectionRecord {
                video_id: video_id.clone(),
                frame_id,
                triplet_id,
                score: score(&mut rng),
                mask: Some(mask),
                bbox,
            });
        }
        gt.push(FrameRecord {
            video_id,
            frame_id,
            width,
            height,
            instances,
            frame_triplets,
        });
    }
    preds.shuffle(&mut rng);
    Ok(MicroInstance { gt, preds, classes })
}

/// Predictions equal to the ground truth with score 1.0.
pub fn perfect_predictions(gt: &[FrameRecord], mode: Mode) -> Result<Predictions> {
    Ok(match mode {
        Mode::Rec => Predictions::Recognition(
            gt.iter()
                .map(|f| {
                    let mut scores = vec![0.0; NUM_TRIPLETS];
                    for &t in &f.frame_triplets {
                        scores[usize::from(t)] = 1.0;
                    }
                    RecognitionRecord {
                        video_id: f.video_id.clone(),
                        frame_id: f.frame_id,
                        scores,
                    }
                })
                .collect(),
        ),
        Mode::Seg | Mode::Det => {
            let mut out = Vec::new();
            for f in gt {
                for (g, t) in f.grounded() {
                    out.push(DetectionRecord {
                        video_id: f.video_id.clone(),
                        frame_id: f.frame_id,
                        triplet_id: t,
                        score: 1.0,
                        mask: Some(g.mask.clone()),
                        bbox: if mode == Mode::Det {
                            Some(mask_to_bbox(&g.mask)?)
                        } else {
                            None
                        },
                    });
                }
            }
            Predictions::Grounded(out)
        }
    })
}

// ---------------------------------------------------------------------------
// larger datasets

/// Ground truth of `frames` frames at `height × width`, each with
/// `per_frame` elliptical instances, split over videos of 100 frames.
pub fn throughput_ground_truth(
    seed: u64,
    frames: usize,
    per_frame: usize,
    height: u32,
    width: u32,
    schema: &TripletSchema,
) -> Result<Vec<FrameRecord>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let mut instances = Vec::with_capacity(per_frame);
        for k in 0..per_frame {
            let t = rng.gen_range(0..NUM_TRIPLETS as u8);
            let mask = blob(height, width, &mut rng)?;
            instances.push(GroundedInstance {
                instance_id: k as u32,
                instrument_id: schema.parts(t)?.instrument,
                triplet_id: Some(t),
                flags: BTreeSet::new(),
                mask,
            });
        }
        let mut frame_triplets: Vec<u8> = instances.iter().filter_map(|g| g.triplet_id).collect();
        frame_triplets.sort_unstable();
        out.push(FrameRecord {
            video_id: format!("video{:03}", i / 100),
            frame_id: (i % 100) as u32,
            width,
            height,
            instances,
            frame_triplets,
        });
    }
    Ok(out)
}

fn blob(height: u32, width: u32, rng: &mut impl Rng) -> Result<RleMask> {
    let (h, w) = (f64::from(height), f64::from(width));
    loop {
        let m = ellipse_mask(
            height,
            width,
            rng.gen_range(0.1 * h..0.9 * h),
            rng.gen_range(0.1 * w..0.9 * w),
            rng.gen_range(0.05 * h..0.25 * h),
            rng.gen_range(0.05 * w..0.25 * w),
        )?;
        if !m.is_empty() {
            return Ok(m);
        }
    }
}

/// Noisy predictions for grounded ground truth: one shifted copy of each
/// instance, sometimes with a wrong triplet, plus one spurious blob per
/// frame.
pub fn noisy_predictions(seed: u64, gt: &[FrameRecord]) -> Result<Vec<DetectionRecord>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    for f in gt {
        for (g, t) in f.grounded() {
            let shift = rng.gen_range(0..=f.width / 16 + 1) as u64 * u64::from(f.height);
            let total = u64::from(f.height) * u64::from(f.width);
            let intervals: Vec<(u64, u64)> = g
                .mask
                .intervals()
                .filter_map(|(s, e)| {
                    let (s, e) = ((s + shift).min(total), (e + shift).min(total));
                    (e > s).then_some((s, e))
                })
                .collect();
            let mask = RleMask::from_intervals(f.height, f.width, intervals)?;
            let mask = if mask.is_empty() {
                g.mask.clone()
            } else {
                mask
            };
            let triplet_id = if rng.gen_bool(0.8) {
                t
            } else {
                rng.gen_range(0..NUM_TRIPLETS as u8)
            };
            out.push(DetectionRecord {
                video_id: f.video_id.clone(),
                frame_id: f.frame_id,
                triplet_id,
                score: rng.gen_range(0.3..1.0),
                mask: Some(mask),
                bbox: None,
            });
        }
        out.push(DetectionRecord {
            video_id: f.video_id.clone(),
            frame_id: f.frame_id,
            triplet_id: rng.gen_range(0..NUM_TRIPLETS as u8),
            score: rng.gen_range(0.0..0.7),
            mask: Some(blob(f.height, f.width, &mut rng)?),
            bbox: None,
        });
    }
    Ok(out)
}

/// Recognition scores: ground-truth triplets score high, the rest low, with
/// noise of amplitude `noise`.
pub fn noisy_recognition(seed: u64, gt: &[FrameRecord], noise: f64) -> Vec<RecognitionRecord> {
    let mut rng = seeded_rng(seed);
    gt.iter()
        .map(|f| {
            let mut scores: Vec<f64> = (0..NUM_TRIPLETS)
                .map(|_| rng.gen_range(0.0..noise.max(1e-9)))
                .collect();
            for &t in &f.frame_triplets {
                scores[usize::from(t)] =
                    (1.0 - rng.gen_range(0.0..noise.max(1e-9))).clamp(0.0, 1.0);
            }
            RecognitionRecord {
                video_id: f.video_id.clone(),
                frame_id: f.frame_id,
                scores,
            }
        })
        .collect()
}

/// Totals of the published release: 50 videos (15 fully annotated, 35
/// sampled every 30th frame) with 30,955 frames and 49,866 grounded
/// triplets.
pub const RELEASE_VIDEOS_FULL: usize = 15;
pub const RELEASE_VIDEOS_SPARSE: usize = 35;
pub const RELEASE_FRAMES: usize = 30_955;
pub const RELEASE_GROUNDED: usize = 49_866;

/// A dataset with the release's aggregate shape. Masks are small blobs on
/// 480×854 frames; a few extra instances are left unmatched so instance and
/// grounded counts differ.
pub fn release_shaped_dataset(seed: u64, schema: &TripletSchema) -> Result<Vec<FrameRecord>> {
    let mut rng = seeded_rng(seed);
    let n_videos = RELEASE_VIDEOS_FULL + RELEASE_VIDEOS_SPARSE;
    let weights: Vec<f64> = (0..n_videos)
        .map(|v| {
            if v < RELEASE_VIDEOS_FULL {
                rng.gen_range(1200.0..1800.0)
            } else {
                rng.gen_range(150.0..300.0)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| (w / total * RELEASE_FRAMES as f64).floor() as usize)
        .collect();
    let short = RELEASE_FRAMES - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut().take(short) {
        *s += 1;
    }

    // one grounded triplet per frame, a second one on a random subset
    let mut second = vec![false; RELEASE_FRAMES];
    second[..RELEASE_GROUNDED - RELEASE_FRAMES].fill(true);
    second.shuffle(&mut rng);

    let (height, width) = (480u32, 854u32);
    let mut frames = Vec::with_capacity(RELEASE_FRAMES);
    let mut g = 0;
    for (v, &n) in sizes.iter().enumerate() {
        let video_id = format!("VID{:02}", v + 1);
        let stride = if v < RELEASE_VIDEOS_FULL { 1 } else { 30 };
        for k in 0..n {
            let n_grounded = 1 + usize::from(second[g]);
            g += 1;
            let mut instances = Vec::new();
            for i in 0..n_grounded {
                let t = rng.gen_range(0..NUM_TRIPLETS as u8);
                instances.push(tiny_instance(
                    i as u32,
                    schema.parts(t)?.instrument,
                    Some(t),
                    height,
                    width,
                    &mut rng,
                )?);
            }
            if rng.gen_bool(0.02) {
                let instrument = rng.gen_range(0..NUM_INSTRUMENTS as u8);
                instances.push(tiny_instance(
                    instances.len() as u32,
                    instrument,
                    None,
                    height,
                    width,
                    &mut rng,
                )?);
            }
            let mut frame_triplets: Vec<u8> =
                instances.iter().filter_map(|g| g.triplet_id).collect();
            frame_triplets.sort_unstable();
            frames.push(FrameRecord {
                video_id: video_id.clone(),
                frame_id: (k * stride) as u32,
                width,
                height,
                instances,
                frame_triplets,
            });
        }
    }
    Ok(frames)
}

fn tiny_instance(
    id: u32,
    instrument: u8,
    triplet: Option<u8>,
    height: u32,
    width: u32,
    rng: &mut impl Rng,
) -> Result<GroundedInstance> {
    let col = rng.gen_range(0..u64::from(width));
    let row = rng.gen_range(0..u64::from(height) - 8);
    let start = col * u64::from(height) + row;
    Ok(GroundedInstance {
        instance_id: id,
        instrument_id: instrument,
        triplet_id: triplet,
        flags: if triplet.is_none() {
            BTreeSet::from([FLAG_UNMATCHED.to_string()])
        } else {
            BTreeSet::new()
        },
        mask: RleMask::from_intervals(height, width, [(start, start + 8)])?,
    })
}

// ---------------------------------------------------------------------------
// alignment streams

/// Label and mask streams over `videos` videos of `frames` frames each.
/// Per frame and instrument class the instance and triplet counts are drawn
/// from {0, 1, 2}, biased towards the unambiguous (1, 1) case, and about 10%
/// of frames are dropped from one of the two streams.
pub fn alignment_streams(
    seed: u64,
    videos: usize,
    frames: usize,
    schema: &TripletSchema,
) -> Result<(Vec<TripletLabelFrame>, Vec<InstanceMaskFrame>)> {
    let mut rng = seeded_rng(seed);
    let by_instrument: Vec<Vec<u8>> = (0..NUM_INSTRUMENTS as u8)
        .map(|i| {
            (0..NUM_TRIPLETS as u8)
                .filter(|&t| schema.parts(t).is_ok_and(|p| p.instrument == i))
                .collect()
        })
        .collect();
    let (height, width) = (24u32, 32u32);
    let mut labels = Vec::new();
    let mut masks = Vec::new();
    for v in 0..videos {
        let video_id = format!("vid{v:02}");
        for frame_id in 0..frames as u32 {
            let mut triplets = Vec::new();
            let mut instances = Vec::new();
            for (instrument, options) in by_instrument.iter().enumerate() {
                if options.is_empty() || !rng.gen_bool(0.4) {
                    continue;
                }
                let (n_inst, n_trip) = if rng.gen_bool(0.6) {
                    (1, 1)
                } else {
                    (rng.gen_range(0..=2), rng.gen_range(0..=2))
                };
                for _ in 0..n_trip {
                    triplets.push(*options.choose(&mut rng).expect("non-empty"));
                }
                for _ in 0..n_inst {
                    instances.push(MaskInstance {
                        instance_id: instances.len() as u32,
                        instrument_id: instrument as u8,
                        mask: random_ellipse(height, width, &mut rng)?,
                        flags: BTreeSet::new(),
                    });
                }
            }
            triplets.sort_unstable();
            let drop = rng.gen_range(0..20);
            if drop != 0 {
                masks.push(InstanceMaskFrame {
                    video_id: video_id.clone(),
                    frame_id,
                    width,
                    height,
                    instances,
                });
            }
            if drop != 1 {
                labels.push(TripletLabelFrame {
                    video_id: video_id.clone(),
                    frame_id,
                    triplets,
                });
            }
        }
    }
    Ok((labels, masks))
}
