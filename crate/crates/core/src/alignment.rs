//! Fuses a frame-level triplet label stream with an instrument instance mask
//! stream into grounded instances.
//!
//! Frames are joined on exact `(video_id, frame_id)`. Inside a joined frame a
//! triplet is attached to an instance only when the instrument class has
//! exactly one instance and exactly one triplet; every other situation is left
//! unassigned and written to the [`AmbiguityReport`] for manual review.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    convert_video, json_files, read_json, video_files, write_json, FrameRecord, GroundedInstance,
    VideoFile, FLAG_AMBIGUOUS, FLAG_UNMATCHED,
};
use crate::error::{Error, Result};
use crate::mask::RleMask;
use crate::schema::{TripletSchema, NUM_INSTRUMENTS, NUM_TRIPLETS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletLabelFrame {
    pub video_id: String,
    pub frame_id: u32,
    /// Multiset of triplet ids.
    pub triplets: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskInstance {
    pub instance_id: u32,
    pub instrument_id: u8,
    pub mask: RleMask,
    pub flags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMaskFrame {
    pub video_id: String,
    pub frame_id: u32,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<MaskInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AmbiguityKind {
    /// Several instances of the instrument class compete for the triplet.
    MultiInstanceOneTriplet,
    /// One instance, several triplets of its instrument class.
    MultiTripletOneInstance,
    TripletWithoutInstance,
    InstanceWithoutTriplet,
    FrameMissingInOneSource,
}

impl AmbiguityKind {
    pub const ALL: [AmbiguityKind; 5] = [
        AmbiguityKind::MultiInstanceOneTriplet,
        AmbiguityKind::MultiTripletOneInstance,
        AmbiguityKind::TripletWithoutInstance,
        AmbiguityKind::InstanceWithoutTriplet,
        AmbiguityKind::FrameMissingInOneSource,
    ];
}

impl fmt::Display for AmbiguityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityEntry {
    pub video_id: String,
    pub frame_id: u32,
    pub kind: AmbiguityKind,
    pub detail: String,
}

/// Entries are ordered by `(video_id, frame_id)`.
///
/// Triplet-side kinds get one entry per blocked triplet occurrence,
/// `InstanceWithoutTriplet` one per instance and `FrameMissingInOneSource`
/// one per frame.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmbiguityReport {
    pub entries: Vec<AmbiguityEntry>,
}

impl AmbiguityReport {
    pub fn count(&self, kind: AmbiguityKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }
}

fn check_stream_order<'a>(keys: impl Iterator<Item = (&'a str, u32)>, stream: &str) -> Result<()> {
    let mut prev: Option<(&str, u32)> = None;
    for key in keys {
        if let Some(p) = prev {
            if key == p {
                return Err(Error::InvalidInput(format!(
                    "{stream} stream: duplicate frame (video {}, frame {})",
                    key.0, key.1
                )));
            }
            if key < p {
                return Err(Error::InvalidInput(format!(
                    "{stream} stream is not sorted: (video {}, frame {}) follows (video {}, frame {})",
                    key.0, key.1, p.0, p.1
                )));
            }
        }
        prev = Some(key);
    }
    Ok(())
}

fn validate_inputs(labels: &[TripletLabelFrame], masks: &[InstanceMaskFrame]) -> Result<()> {
    check_stream_order(
        labels.iter().map(|l| (l.video_id.as_str(), l.frame_id)),
        "label",
    )?;
    check_stream_order(
        masks.iter().map(|m| (m.video_id.as_str(), m.frame_id)),
        "mask",
    )?;
    for l in labels {
        if let Some(t) = l.triplets.iter().find(|&&t| t as usize >= NUM_TRIPLETS) {
            return Err(Error::validation(
                format!("labels video {} frame {}", l.video_id, l.frame_id),
                format!("triplet_id {t} out of range"),
            ));
        }
    }
    for m in masks {
        let locus = format!("masks video {} frame {}", m.video_id, m.frame_id);
        let mut ids = BTreeSet::new();
        for inst in &m.instances {
            if !ids.insert(inst.instance_id) {
                return Err(Error::validation(
                    &locus,
                    format!("duplicate instance_id {}", inst.instance_id),
                ));
            }
            if inst.instrument_id as usize >= NUM_INSTRUMENTS {
                return Err(Error::validation(
                    &locus,
                    format!("instrument_id {} out of range", inst.instrument_id),
                ));
            }
            if inst.mask.is_empty() || inst.mask.size() != (m.height, m.width) {
                return Err(Error::validation(
                    &locus,
                    format!(
                        "instance {} mask is empty or does not match the frame size",
                        inst.instance_id
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Aligns the two streams. Both must be sorted by `(video_id, frame_id)`
/// without duplicates. Only frames present in both streams are returned.
pub fn align_frames(
    labels: &[TripletLabelFrame],
    masks: &[InstanceMaskFrame],
    schema: &TripletSchema,
) -> Result<(Vec<FrameRecord>, AmbiguityReport)> {
    validate_inputs(labels, masks)?;

    let mut by_video: BTreeMap<&str, (Vec<&TripletLabelFrame>, Vec<&InstanceMaskFrame>)> =
        BTreeMap::new();
    for l in labels {
        by_video.entry(&l.video_id).or_default().0.push(l);
    }
    for m in masks {
        by_video.entry(&m.video_id).or_default().1.push(m);
    }
    let videos: Vec<_> = by_video.into_iter().collect();
    let per_video: Vec<(Vec<FrameRecord>, Vec<AmbiguityEntry>)> = videos
        .par_iter()
        .map(|(_, (l, m))| align_video(l, m, schema))
        .collect();

    let mut frames = Vec::new();
    let mut entries = Vec::new();
    for (f, e) in per_video {
        frames.extend(f);
        entries.extend(e);
    }
    Ok((frames, AmbiguityReport { entries }))
}

fn align_video(
    labels: &[&TripletLabelFrame],
    masks: &[&InstanceMaskFrame],
    schema: &TripletSchema,
) -> (Vec<FrameRecord>, Vec<AmbiguityEntry>) {
    let mut frames = Vec::new();
    let mut entries = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < labels.len() || j < masks.len() {
        let lf = labels.get(i).map(|l| l.frame_id);
        let mf = masks.get(j).map(|m| m.frame_id);
        match (lf, mf) {
            (Some(a), Some(b)) if a == b => {
                align_frame(labels[i], masks[j], schema, &mut frames, &mut entries);
                i += 1;
                j += 1;
            }
            (Some(a), mf) if mf.is_none_or(|b| a < b) => {
                let l = labels[i];
                entries.push(AmbiguityEntry {
                    video_id: l.video_id.clone(),
                    frame_id: l.frame_id,
                    kind: AmbiguityKind::FrameMissingInOneSource,
                    detail: format!(
                        "{} triplet label(s) but no instance masks",
                        l.triplets.len()
                    ),
                });
                i += 1;
            }
            _ => {
                let m = masks[j];
                entries.push(AmbiguityEntry {
                    video_id: m.video_id.clone(),
                    frame_id: m.frame_id,
                    kind: AmbiguityKind::FrameMissingInOneSource,
                    detail: format!(
                        "{} instance mask(s) but no triplet labels",
                        m.instances.len()
                    ),
                });
                j += 1;
            }
        }
    }
    (frames, entries)
}

fn align_frame(
    label: &TripletLabelFrame,
    masks: &InstanceMaskFrame,
    schema: &TripletSchema,
    frames: &mut Vec<FrameRecord>,
    entries: &mut Vec<AmbiguityEntry>,
) {
    let mut instances: Vec<GroundedInstance> = masks
        .instances
        .iter()
        .map(|m| GroundedInstance {
            instance_id: m.instance_id,
            instrument_id: m.instrument_id,
            triplet_id: None,
            flags: m.flags.clone(),
            mask: m.mask.clone(),
        })
        .collect();
    let mut frame_triplets = label.triplets.clone();
    frame_triplets.sort_unstable();

    let mut triplets_of: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
    for &t in &frame_triplets {
        let instrument = schema.parts(t).expect("validated").instrument;
        triplets_of.entry(instrument).or_default().push(t);
    }
    let mut instances_of: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (k, g) in instances.iter().enumerate() {
        instances_of.entry(g.instrument_id).or_default().push(k);
    }
    let classes: BTreeSet<u8> = triplets_of
        .keys()
        .chain(instances_of.keys())
        .copied()
        .collect();

    let mut entry = |kind, detail: String| {
        entries.push(AmbiguityEntry {
            video_id: label.video_id.clone(),
            frame_id: label.frame_id,
            kind,
            detail,
        })
    };
    let name = |c: u8| &schema.instrument_names()[c as usize];

    for c in classes {
        let ts = triplets_of.get(&c).map(Vec::as_slice).unwrap_or_default();
        let ks = instances_of.get(&c).map(Vec::as_slice).unwrap_or_default();
        let ids = |ks: &[usize]| {
            ks.iter()
                .map(|&k| instances[k].instance_id.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        match (ks.len(), ts.len()) {
            (1, 1) => {
                let g = &mut instances[ks[0]];
                g.triplet_id = Some(ts[0]);
                g.flags.remove(FLAG_UNMATCHED);
            }
            (_, 0) => {
                for &k in ks {
                    entry(
                        AmbiguityKind::InstanceWithoutTriplet,
                        format!(
                            "instance {} ({}) has no {} triplet",
                            instances[k].instance_id,
                            name(c),
                            name(c)
                        ),
                    );
                    instances[k].flags.insert(FLAG_UNMATCHED.to_owned());
                }
            }
            (0, _) => {
                for &t in ts {
                    entry(
                        AmbiguityKind::TripletWithoutInstance,
                        format!("triplet {t} has no {} instance", name(c)),
                    );
                }
            }
            (1, _) => {
                let id = ids(ks);
                for &t in ts {
                    entry(
                        AmbiguityKind::MultiTripletOneInstance,
                        format!(
                            "triplet {t} competes with {} other {} triplet(s) for instance {id}",
                            ts.len() - 1,
                            name(c)
                        ),
                    );
                }
                flag_ambiguous(&mut instances[ks[0]]);
            }
            (_, _) => {
                let id = ids(ks);
                for &t in ts {
                    entry(
                        AmbiguityKind::MultiInstanceOneTriplet,
                        format!("triplet {t} could belong to any of {} instances [{id}] ({} {} triplet(s) in frame)", ks.len(), ts.len(), name(c)),
                    );
                }
                for &k in ks {
                    flag_ambiguous(&mut instances[k]);
                }
            }
        }
    }

    frames.push(FrameRecord {
        video_id: label.video_id.clone(),
        frame_id: label.frame_id,
        width: masks.width,
        height: masks.height,
        instances,
        frame_triplets,
    });
}

fn flag_ambiguous(g: &mut GroundedInstance) {
    g.flags.insert(FLAG_AMBIGUOUS.to_owned());
    g.flags.insert(FLAG_UNMATCHED.to_owned());
}

// ---------------------------------------------------------------------------
// summary

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VideoAlignment {
    pub frames: u64,
    pub triplets: u64,
    pub assigned: u64,
    pub entries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentSummary {
    pub matched_frames: u64,
    /// Triplet labels over matched frames.
    pub triplets: u64,
    pub assigned: u64,
    /// `assigned / triplets`; `None` without triplets.
    pub assignment_rate: Option<f64>,
    pub per_kind: BTreeMap<AmbiguityKind, u64>,
    pub per_video: BTreeMap<String, VideoAlignment>,
}

pub fn alignment_stats(report: &AmbiguityReport, frames: &[FrameRecord]) -> AlignmentSummary {
    let mut per_video: BTreeMap<String, VideoAlignment> = BTreeMap::new();
    let mut triplets = 0;
    let mut assigned = 0;
    for f in frames {
        let v = per_video.entry(f.video_id.clone()).or_default();
        let a = f.grounded().count() as u64;
        v.frames += 1;
        v.triplets += f.frame_triplets.len() as u64;
        v.assigned += a;
        triplets += f.frame_triplets.len() as u64;
        assigned += a;
    }
    let mut per_kind: BTreeMap<AmbiguityKind, u64> =
        AmbiguityKind::ALL.iter().map(|&k| (k, 0)).collect();
    for e in &report.entries {
        *per_kind.get_mut(&e.kind).expect("all kinds present") += 1;
        per_video.entry(e.video_id.clone()).or_default().entries += 1;
    }
    AlignmentSummary {
        matched_frames: frames.len() as u64,
        triplets,
        assigned,
        assignment_rate: (triplets > 0).then(|| assigned as f64 / triplets as f64),
        per_kind,
        per_video,
    }
}

impl AlignmentSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "matched frames      {}", self.matched_frames);
        let _ = writeln!(out, "triplet labels      {}", self.triplets);
        let _ = writeln!(out, "assigned            {}", self.assigned);
        match self.assignment_rate {
            Some(r) => {
                let _ = writeln!(out, "assignment rate     {r:.4}");
            }
            None => {
                let _ = writeln!(out, "assignment rate     n/a");
            }
        }
        let _ = writeln!(out, "\nreport entries");
        for (k, n) in &self.per_kind {
            let _ = writeln!(out, "  {:<26}{n:>8}", k.to_string());
        }
        let _ = writeln!(
            out,
            "\nper video{:>20}{:>10}{:>10}{:>10}",
            "frames", "triplets", "assigned", "entries"
        );
        for (vid, v) in &self.per_video {
            let _ = writeln!(
                out,
                "  {vid:<25}{:>10}{:>10}{:>10}{:>10}",
                v.frames, v.triplets, v.assigned, v.entries
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// stream I/O

#[derive(Debug, Deserialize)]
struct LabelRow {
    video_id: String,
    frame_id: u32,
    triplet_id: Option<i64>,
}

/// Reads a `video_id,frame_id,triplet_id` CSV. Consecutive rows with the same
/// frame form one multiset; an empty `triplet_id` marks a labelled frame
/// without triplets.
pub fn read_label_stream(path: impl AsRef<Path>) -> Result<Vec<TripletLabelFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_label_stream(file, &path.display().to_string())
}

pub fn parse_label_stream(reader: impl Read, source: &str) -> Result<Vec<TripletLabelFrame>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(source, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["video_id", "frame_id", "triplet_id"] {
        return Err(Error::parse(
            source,
            format!("unexpected header {:?}", header.join(",")),
        ));
    }
    let mut frames: Vec<TripletLabelFrame> = Vec::new();
    for (i, row) in rdr.deserialize::<LabelRow>().enumerate() {
        let locus = format!("{source}: row {}", i + 2);
        let row = row.map_err(|e| Error::parse(&locus, e))?;
        let triplet = row
            .triplet_id
            .map(|t| {
                u8::try_from(t)
                    .ok()
                    .filter(|&t| (t as usize) < NUM_TRIPLETS)
                    .ok_or_else(|| {
                        Error::validation(&locus, format!("triplet_id {t} out of range"))
                    })
            })
            .transpose()?;
        match frames.last_mut() {
            Some(last) if last.video_id == row.video_id && last.frame_id == row.frame_id => {
                last.triplets.extend(triplet);
            }
            _ => frames.push(TripletLabelFrame {
                video_id: row.video_id,
                frame_id: row.frame_id,
                triplets: triplet.into_iter().collect(),
            }),
        }
    }
    Ok(frames)
}

/// Reads a directory of mask-stream files (ground-truth layout without
/// triplet assignments).
pub fn read_mask_stream(
    dir: impl AsRef<Path>,
    schema: &TripletSchema,
) -> Result<Vec<InstanceMaskFrame>> {
    let files = json_files(dir.as_ref())?;
    let per_file: Vec<Result<Vec<FrameRecord>>> = files
        .par_iter()
        .map(|path| {
            let file: VideoFile = read_json(path)?;
            convert_video(file, schema, &path.display().to_string(), false)
                .map_err(|mut e| e.swap_remove(0))
        })
        .collect();
    let mut out = Vec::new();
    for frames in per_file {
        out.extend(frames?.into_iter().map(|f| {
            InstanceMaskFrame {
                video_id: f.video_id,
                frame_id: f.frame_id,
                width: f.width,
                height: f.height,
                instances: f
                    .instances
                    .into_iter()
                    .map(|g| MaskInstance {
                        instance_id: g.instance_id,
                        instrument_id: g.instrument_id,
                        mask: g.mask,
                        flags: g.flags,
                    })
                    .collect(),
            }
        }));
    }
    out.sort_by(|a, b| (&a.video_id, a.frame_id).cmp(&(&b.video_id, b.frame_id)));
    Ok(out)
}

/// Writes a mask stream in the ground-truth layout with `triplet_id` omitted.
pub fn write_mask_stream(dir: impl AsRef<Path>, frames: &[InstanceMaskFrame]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<FrameRecord> = frames
        .iter()
        .map(|m| FrameRecord {
            video_id: m.video_id.clone(),
            frame_id: m.frame_id,
            width: m.width,
            height: m.height,
            instances: m
                .instances
                .iter()
                .map(|i| GroundedInstance {
                    instance_id: i.instance_id,
                    instrument_id: i.instrument_id,
                    triplet_id: None,
                    flags: i.flags.clone(),
                    mask: i.mask.clone(),
                })
                .collect(),
            frame_triplets: Vec::new(),
        })
        .collect();
    for file in video_files(&records, false)? {
        let value = mask_stream_value(&file);
        write_json(&dir.join(format!("{}.json", file.video_id)), &value)?;
    }
    Ok(())
}

/// Mask-stream JSON omits `triplet_id` and `frame_triplets` entirely.
fn mask_stream_value(file: &VideoFile) -> serde_json::Value {
    let mut v = serde_json::to_value(file).expect("serializable");
    for frame in v["frames"].as_array_mut().expect("frames array") {
        let obj = frame.as_object_mut().expect("frame object");
        obj.remove("frame_triplets");
        for inst in obj["instances"].as_array_mut().expect("instances array") {
            inst.as_object_mut()
                .expect("instance object")
                .remove("triplet_id");
        }
    }
    v
}

pub fn write_label_stream(path: impl AsRef<Path>, labels: &[TripletLabelFrame]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("video_id,frame_id,triplet_id\n");
    for l in labels {
        if l.triplets.is_empty() {
            let _ = writeln!(out, "{},{},", l.video_id, l.frame_id);
        }
        for t in &l.triplets {
            let _ = writeln!(out, "{},{},{t}", l.video_id, l.frame_id);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
