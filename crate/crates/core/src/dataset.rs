//! Ground-truth and prediction files.
//!
//! Ground truth is stored as one JSON file per video (`<video_id>.json`);
//! predictions are a single JSON array whose record shape depends on the
//! evaluation mode.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Mode;
use crate::mask::{BBox, RleJson, RleMask};
use crate::schema::{TripletSchema, NUM_INSTRUMENTS, NUM_TARGETS, NUM_TRIPLETS, NUM_VERBS};

pub const FLAG_UNMATCHED: &str = "unmatched";
pub const FLAG_AMBIGUOUS: &str = "ambiguous";

/// Frame key shared by all streams: `(video_id, frame_id)`.
pub type FrameKey = (String, u32);

/// One instrument instance mask, optionally linked to a triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedInstance {
    pub instance_id: u32,
    pub instrument_id: u8,
    pub triplet_id: Option<u8>,
    pub flags: BTreeSet<String>,
    pub mask: RleMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_id: u32,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<GroundedInstance>,
    /// Frame-level triplet labels, sorted; may repeat a triplet.
    pub frame_triplets: Vec<u8>,
}

impl FrameRecord {
    pub fn key(&self) -> FrameKey {
        (self.video_id.clone(), self.frame_id)
    }

    /// Instances carrying a triplet label.
    pub fn grounded(&self) -> impl Iterator<Item = (&GroundedInstance, u8)> {
        self.instances
            .iter()
            .filter_map(|g| g.triplet_id.map(|t| (g, t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame_id: u32,
    pub triplet_id: u8,
    pub score: f64,
    pub mask: Option<RleMask>,
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionRecord {
    pub video_id: String,
    pub frame_id: u32,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Grounded(Vec<DetectionRecord>),
    Recognition(Vec<RecognitionRecord>),
}

// ---------------------------------------------------------------------------
// wire formats

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct VideoFile {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FrameJson {
    pub frame_id: u32,
    #[serde(default)]
    pub frame_triplets: Vec<i64>,
    pub instances: Vec<InstanceJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct InstanceJson {
    pub instance_id: u32,
    pub instrument_id: i64,
    #[serde(default)]
    pub triplet_id: Option<i64>,
    #[serde(default)]
    pub flags: Vec<String>,
    pub mask: RleJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionJson {
    video_id: String,
    frame_id: u32,
    triplet_id: i64,
    score: f64,
    #[serde(default)]
    mask: Option<RleJson>,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecognitionJson {
    video_id: String,
    frame_id: u32,
    scores: Vec<f64>,
}

// ---------------------------------------------------------------------------
// ground truth

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// `*.json` files in a directory, sorted by name.
pub(crate) fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Checks one decoded video file. Returns the frames when no problem was found,
/// and every problem otherwise.
pub(crate) fn convert_video(
    file: VideoFile,
    schema: &TripletSchema,
    source: &str,
    allow_triplets: bool,
) -> std::result::Result<Vec<FrameRecord>, Vec<Error>> {
    let mut errors = Vec::new();
    let mut frames = Vec::with_capacity(file.frames.len());
    let vid = &file.video_id;
    if file.width == 0 || file.height == 0 {
        errors.push(Error::validation(
            source,
            format!("frame size {}x{} is empty", file.width, file.height),
        ));
    }
    let mut seen_frames = HashSet::new();

    for fr in file.frames {
        let locus = format!("{source}: video {vid} frame {}", fr.frame_id);
        if !seen_frames.insert(fr.frame_id) {
            errors.push(Error::validation(&locus, "duplicate frame_id"));
            continue;
        }
        let mut frame_triplets = Vec::with_capacity(fr.frame_triplets.len());
        for &t in &fr.frame_triplets {
            match u8::try_from(t)
                .ok()
                .filter(|&t| (t as usize) < NUM_TRIPLETS)
            {
                Some(t) => frame_triplets.push(t),
                None => errors.push(Error::validation(
                    &locus,
                    format!("frame triplet {t} out of range"),
                )),
            }
        }
        frame_triplets.sort_unstable();

        let mut ids = HashSet::new();
        let mut instances = Vec::with_capacity(fr.instances.len());
        for inst in fr.instances {
            let iloc = format!("{locus} instance {}", inst.instance_id);
            let before = errors.len();
            if !ids.insert(inst.instance_id) {
                errors.push(Error::validation(&iloc, "duplicate instance_id"));
            }
            let instrument = u8::try_from(inst.instrument_id)
                .ok()
                .filter(|&i| (i as usize) < NUM_INSTRUMENTS);
            if instrument.is_none() {
                errors.push(Error::validation(
                    &iloc,
                    format!("instrument_id {} out of range", inst.instrument_id),
                ));
            }
            let triplet = match inst.triplet_id {
                None => None,
                Some(t) => match u8::try_from(t)
                    .ok()
                    .filter(|&t| (t as usize) < NUM_TRIPLETS)
                {
                    Some(t) => Some(t),
                    None => {
                        errors.push(Error::validation(
                            &iloc,
                            format!("triplet_id {t} out of range"),
                        ));
                        None
                    }
                },
            };
            if !allow_triplets && inst.triplet_id.is_some() {
                errors.push(Error::validation(
                    &iloc,
                    "mask stream instances must not carry triplet_id",
                ));
            }
            if let (Some(t), Some(i)) = (triplet, instrument) {
                let parts = schema.parts(t).expect("range checked");
                if parts.instrument != i {
                    errors.push(Error::validation(
                        &iloc,
                        format!(
                            "triplet {t} has instrument {} but instance instrument_id is {i}",
                            parts.instrument
                        ),
                    ));
                }
            }
            let mask = match RleMask::try_from(inst.mask) {
                Ok(m) => Some(m),
                Err(e) => {
                    errors.push(Error::validation(&iloc, e.to_string()));
                    None
                }
            };
            if let Some(m) = &mask {
                if m.size() != (file.height, file.width) {
                    errors.push(Error::validation(
                        &iloc,
                        format!(
                            "mask size {}x{} differs from frame size {}x{}",
                            m.height(),
                            m.width(),
                            file.height,
                            file.width
                        ),
                    ));
                } else if m.is_empty() {
                    errors.push(Error::validation(&iloc, "mask is empty"));
                }
            }
            if errors.len() == before {
                instances.push(GroundedInstance {
                    instance_id: inst.instance_id,
                    instrument_id: instrument.expect("checked"),
                    triplet_id: triplet,
                    flags: inst.flags.into_iter().collect(),
                    mask: mask.expect("checked"),
                });
            }
        }

        let mut available: HashMap<u8, usize> = HashMap::new();
        for &t in &frame_triplets {
            *available.entry(t).or_default() += 1;
        }
        for (g, t) in instances
            .iter()
            .filter_map(|g| g.triplet_id.map(|t| (g, t)))
        {
            match available.get_mut(&t) {
                Some(n) if *n > 0 => *n -= 1,
                _ => errors.push(Error::validation(
                    format!("{locus} instance {}", g.instance_id),
                    format!("triplet {t} missing from frame_triplets"),
                )),
            }
        }

        frames.push(FrameRecord {
            video_id: vid.clone(),
            frame_id: fr.frame_id,
            width: file.width,
            height: file.height,
            instances,
            frame_triplets,
        });
    }
    if errors.is_empty() {
        frames.sort_by_key(|f| f.frame_id);
        Ok(frames)
    } else {
        Err(errors)
    }
}

fn load_video(
    path: &Path,
    schema: &TripletSchema,
) -> std::result::Result<Vec<FrameRecord>, Vec<Error>> {
    let file: VideoFile = read_json(path).map_err(|e| vec![e])?;
    let source = path.display().to_string();
    if path.file_stem().and_then(|s| s.to_str()) != Some(file.video_id.as_str()) {
        return Err(vec![Error::validation(
            &source,
            format!("file name does not match video_id {:?}", file.video_id),
        )]);
    }
    convert_video(file, schema, &source, true)
}

/// Diagnostics for one ground-truth file.
#[derive(Debug)]
pub struct FileDiagnostics {
    pub path: PathBuf,
    pub frames: usize,
    pub errors: Vec<Error>,
}

/// Validates every file in a ground-truth directory, collecting all problems
/// instead of stopping at the first one. Fails only when the directory itself
/// cannot be listed.
pub fn validate_ground_truth(
    dir: impl AsRef<Path>,
    schema: &TripletSchema,
) -> Result<Vec<FileDiagnostics>> {
    let files = json_files(dir.as_ref())?;
    let mut diags: Vec<FileDiagnostics> = files
        .par_iter()
        .map(|path| match load_video(path, schema) {
            Ok(frames) => FileDiagnostics {
                path: path.clone(),
                frames: frames.len(),
                errors: Vec::new(),
            },
            Err(errors) => FileDiagnostics {
                path: path.clone(),
                frames: 0,
                errors,
            },
        })
        .collect();
    let mut owners: HashMap<String, PathBuf> = HashMap::new();
    for d in &mut diags {
        if let Some(stem) = d.path.file_stem().and_then(|s| s.to_str()) {
            if let Some(prev) = owners.insert(stem.to_owned(), d.path.clone()) {
                d.errors.push(Error::validation(
                    d.path.display().to_string(),
                    format!("video {stem} also defined in {}", prev.display()),
                ));
            }
        }
    }
    Ok(diags)
}

/// Reads and validates a ground-truth directory. Frames come back sorted by
/// `(video_id, frame_id)`.
pub fn read_ground_truth(
    dir: impl AsRef<Path>,
    schema: &TripletSchema,
) -> Result<Vec<FrameRecord>> {
    let files = json_files(dir.as_ref())?;
    let per_file: Vec<_> = files.par_iter().map(|p| load_video(p, schema)).collect();
    let mut frames = Vec::new();
    for res in per_file {
        match res {
            Ok(f) => frames.extend(f),
            Err(mut errs) => return Err(errs.swap_remove(0)),
        }
    }
    frames.sort_by(|a, b| (&a.video_id, a.frame_id).cmp(&(&b.video_id, b.frame_id)));
    if let Some(w) = frames
        .windows(2)
        .find(|w| w[0].video_id == w[1].video_id && w[0].frame_id == w[1].frame_id)
    {
        return Err(Error::validation(
            format!("video {} frame {}", w[0].video_id, w[0].frame_id),
            "frame defined more than once",
        ));
    }
    Ok(frames)
}

pub(crate) fn video_files(frames: &[FrameRecord], with_triplets: bool) -> Result<Vec<VideoFile>> {
    let mut by_video: BTreeMap<&str, Vec<&FrameRecord>> = BTreeMap::new();
    for f in frames {
        by_video.entry(&f.video_id).or_default().push(f);
    }
    by_video
        .into_iter()
        .map(|(vid, mut fs)| {
            fs.sort_by_key(|f| f.frame_id);
            let (width, height) = (fs[0].width, fs[0].height);
            if let Some(f) = fs.iter().find(|f| (f.width, f.height) != (width, height)) {
                return Err(Error::validation(
                    format!("video {vid} frame {}", f.frame_id),
                    "frame size differs from the rest of the video",
                ));
            }
            Ok(VideoFile {
                video_id: vid.to_owned(),
                width,
                height,
                frames: fs
                    .into_iter()
                    .map(|f| FrameJson {
                        frame_id: f.frame_id,
                        frame_triplets: f.frame_triplets.iter().map(|&t| i64::from(t)).collect(),
                        instances: f
                            .instances
                            .iter()
                            .map(|g| InstanceJson {
                                instance_id: g.instance_id,
                                instrument_id: i64::from(g.instrument_id),
                                triplet_id: if with_triplets {
                                    g.triplet_id.map(i64::from)
                                } else {
                                    None
                                },
                                flags: g.flags.iter().cloned().collect(),
                                mask: g.mask.clone().into(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes =
        serde_json::to_vec(value).map_err(|e| Error::parse(path.display().to_string(), e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes one `<video_id>.json` per video into `dir` (created if needed).
pub fn write_ground_truth(dir: impl AsRef<Path>, frames: &[FrameRecord]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for file in video_files(frames, true)? {
        write_json(&dir.join(format!("{}.json", file.video_id)), &file)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predictions

pub fn read_predictions(path: impl AsRef<Path>, mode: Mode) -> Result<Predictions> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let raw: Vec<serde_json::Map<String, serde_json::Value>> = read_json(path)?;
    let expected = match mode {
        Mode::Rec => "recognition",
        Mode::Seg | Mode::Det => "detection",
    };
    for rec in &raw {
        let found = if rec.contains_key("scores") {
            "recognition"
        } else if rec.contains_key("triplet_id") {
            "detection"
        } else {
            continue;
        };
        if found != expected {
            return Err(Error::FormatMismatch {
                path: source,
                expected,
                found,
            });
        }
    }

    match mode {
        Mode::Seg | Mode::Det => {
            let mut out = Vec::with_capacity(raw.len());
            for (i, rec) in raw.into_iter().enumerate() {
                let locus = format!("{source}: record {i}");
                let d: DetectionJson = serde_json::from_value(serde_json::Value::Object(rec))
                    .map_err(|e| Error::parse(&locus, e))?;
                out.push(convert_detection(d, &locus)?);
            }
            Ok(Predictions::Grounded(out))
        }
        Mode::Rec => {
            let mut out = Vec::with_capacity(raw.len());
            let mut seen = HashSet::new();
            for (i, rec) in raw.into_iter().enumerate() {
                let locus = format!("{source}: record {i}");
                let r: RecognitionJson = serde_json::from_value(serde_json::Value::Object(rec))
                    .map_err(|e| Error::parse(&locus, e))?;
                if r.scores.len() != NUM_TRIPLETS {
                    return Err(Error::validation(
                        &locus,
                        format!("expected {NUM_TRIPLETS} scores, found {}", r.scores.len()),
                    ));
                }
                if let Some(s) = r.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                    return Err(Error::validation(
                        &locus,
                        format!("score {s} out of range [0, 1]"),
                    ));
                }
                if !seen.insert((r.video_id.clone(), r.frame_id)) {
                    return Err(Error::validation(
                        &locus,
                        format!(
                            "duplicate recognition record for video {} frame {}",
                            r.video_id, r.frame_id
                        ),
                    ));
                }
                out.push(RecognitionRecord {
                    video_id: r.video_id,
                    frame_id: r.frame_id,
                    scores: r.scores,
                });
            }
            Ok(Predictions::Recognition(out))
        }
    }
}

fn convert_detection(d: DetectionJson, locus: &str) -> Result<DetectionRecord> {
    let triplet_id = u8::try_from(d.triplet_id)
        .ok()
        .filter(|&t| (t as usize) < NUM_TRIPLETS)
        .ok_or_else(|| {
            Error::validation(locus, format!("triplet_id {} out of range", d.triplet_id))
        })?;
    if !(0.0..=1.0).contains(&d.score) {
        return Err(Error::validation(
            locus,
            format!("score {} out of range [0, 1]", d.score),
        ));
    }
    let mask = d
        .mask
        .map(RleMask::try_from)
        .transpose()
        .map_err(|e| Error::validation(locus, e.to_string()))?;
    let bbox = d
        .bbox
        .map(|[x, y, w, h]| BBox::new(x, y, w, h))
        .transpose()
        .map_err(|e| Error::validation(locus, e.to_string()))?;
    if mask.is_none() && bbox.is_none() {
        return Err(Error::validation(locus, "record has neither mask nor bbox"));
    }
    Ok(DetectionRecord {
        video_id: d.video_id,
        frame_id: d.frame_id,
        triplet_id,
        score: d.score,
        mask,
        bbox,
    })
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &Predictions) -> Result<()> {
    let path = path.as_ref();
    match preds {
        Predictions::Grounded(dets) => {
            let raw: Vec<DetectionJson> = dets
                .iter()
                .map(|d| DetectionJson {
                    video_id: d.video_id.clone(),
                    frame_id: d.frame_id,
                    triplet_id: i64::from(d.triplet_id),
                    score: d.score,
                    mask: d.mask.clone().map(Into::into),
                    bbox: d.bbox.map(BBox::to_array),
                })
                .collect();
            write_json(path, &raw)
        }
        Predictions::Recognition(recs) => {
            let raw: Vec<RecognitionJson> = recs
                .iter()
                .map(|r| RecognitionJson {
                    video_id: r.video_id.clone(),
                    frame_id: r.frame_id,
                    scores: r.scores.clone(),
                })
                .collect();
            write_json(path, &raw)
        }
    }
}

// ---------------------------------------------------------------------------
// statistics

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VideoStats {
    pub frames: u64,
    pub instances: u64,
    pub grounded_triplets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsSummary {
    pub videos: u64,
    pub frames: u64,
    pub instances: u64,
    pub grounded_triplets: u64,
    pub frame_level_triplets: u64,
    /// All instances by instrument id.
    pub instrument_histogram: Vec<u64>,
    /// Grounded instances by verb id.
    pub verb_histogram: Vec<u64>,
    /// Grounded instances by target id.
    pub target_histogram: Vec<u64>,
    /// Grounded instances by triplet id.
    pub triplet_histogram: Vec<u64>,
    pub per_video: BTreeMap<String, VideoStats>,
}

pub fn dataset_stats(frames: &[FrameRecord], schema: &TripletSchema) -> StatsSummary {
    let mut s = StatsSummary {
        videos: 0,
        frames: frames.len() as u64,
        instances: 0,
        grounded_triplets: 0,
        frame_level_triplets: 0,
        instrument_histogram: vec![0; NUM_INSTRUMENTS],
        verb_histogram: vec![0; NUM_VERBS],
        target_histogram: vec![0; NUM_TARGETS],
        triplet_histogram: vec![0; NUM_TRIPLETS],
        per_video: BTreeMap::new(),
    };
    for f in frames {
        let v = s.per_video.entry(f.video_id.clone()).or_default();
        v.frames += 1;
        v.instances += f.instances.len() as u64;
        s.instances += f.instances.len() as u64;
        s.frame_level_triplets += f.frame_triplets.len() as u64;
        for g in &f.instances {
            s.instrument_histogram[g.instrument_id as usize] += 1;
        }
        for (_, t) in f.grounded() {
            v.grounded_triplets += 1;
            s.grounded_triplets += 1;
            let p = schema.parts(t).expect("validated triplet");
            s.verb_histogram[p.verb as usize] += 1;
            s.target_histogram[p.target as usize] += 1;
            s.triplet_histogram[t as usize] += 1;
        }
    }
    s.videos = s.per_video.len() as u64;
    s
}

/// `12345` → `"12,345"`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl StatsSummary {
    /// One-line summary, e.g. "30,955 annotated frames and 49,866 spatially
    /// grounded triplets".
    pub fn headline(&self) -> String {
        format!(
            "{} annotated frames and {} spatially grounded triplets",
            thousands(self.frames),
            thousands(self.grounded_triplets)
        )
    }

    pub fn render(&self, schema: &TripletSchema) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}\n", self.headline());
        let rows = [
            ("videos", self.videos),
            ("annotated frames", self.frames),
            ("instrument instances", self.instances),
            ("grounded triplets", self.grounded_triplets),
            ("frame-level triplet labels", self.frame_level_triplets),
        ];
        for (name, n) in rows {
            let _ = writeln!(out, "{name:<28}{:>12}", thousands(n));
        }
        let hist = |out: &mut String, title: &str, names: &[String], counts: &[u64]| {
            let _ = writeln!(out, "\n{title}");
            for (name, &n) in names.iter().zip(counts) {
                let _ = writeln!(out, "  {name:<26}{:>12}", thousands(n));
            }
        };
        hist(
            &mut out,
            "instruments (all instances)",
            schema.instrument_names(),
            &self.instrument_histogram,
        );
        hist(
            &mut out,
            "verbs (grounded)",
            schema.verb_names(),
            &self.verb_histogram,
        );
        hist(
            &mut out,
            "targets (grounded)",
            schema.target_names(),
            &self.target_histogram,
        );
        let _ = writeln!(
            out,
            "\nper video{:>28}{:>12}{:>12}",
            "frames", "instances", "grounded"
        );
        for (vid, v) in &self.per_video {
            let _ = writeln!(
                out,
                "  {vid:<24}{:>13}{:>12}{:>12}",
                thousands(v.frames),
                thousands(v.instances),
                thousands(v.grounded_triplets)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_encode, Bitmap};

    fn square(h: u32, w: u32, r: u32, c: u32, side: u32) -> RleMask {
        rle_encode(&Bitmap::from_fn(h, w, |y, x| {
            y >= r && y < r + side && x >= c && x < c + side
        }))
    }

    fn inst(id: u32, instrument: u8, triplet: Option<u8>, mask: RleMask) -> GroundedInstance {
        GroundedInstance {
            instance_id: id,
            instrument_id: instrument,
            triplet_id: triplet,
            flags: if triplet.is_none() {
                [FLAG_UNMATCHED.to_owned()].into()
            } else {
                BTreeSet::new()
            },
            mask,
        }
    }

    /// 2 videos, 3 frames, 5 instances, 4 of them grounded.
    fn fixture() -> Vec<FrameRecord> {
        let schema = TripletSchema::bundled();
        let grasper_triplet = (0..100u8)
            .find(|&t| schema.parts(t).unwrap().instrument == 0)
            .unwrap();
        vec![
            FrameRecord {
                video_id: "VID01".into(),
                frame_id: 0,
                width: 8,
                height: 6,
                instances: vec![
                    inst(1, 2, Some(5), square(6, 8, 0, 0, 2)),
                    inst(2, 0, Some(grasper_triplet), square(6, 8, 3, 3, 3)),
                ],
                frame_triplets: vec![grasper_triplet, 5],
            },
            FrameRecord {
                video_id: "VID01".into(),
                frame_id: 30,
                width: 8,
                height: 6,
                instances: vec![
                    inst(1, 2, Some(5), square(6, 8, 1, 1, 2)),
                    inst(2, 3, None, square(6, 8, 4, 5, 2)),
                ],
                frame_triplets: vec![5],
            },
            FrameRecord {
                video_id: "VID02".into(),
                frame_id: 7,
                width: 8,
                height: 6,
                instances: vec![inst(4, 2, Some(5), square(6, 8, 2, 2, 3))],
                frame_triplets: vec![5, 5],
            },
        ]
    }

    #[test]
    fn ground_truth_round_trip_is_byte_stable() {
        let schema = TripletSchema::bundled();
        let dir = tempfile::tempdir().unwrap();
        let frames = fixture();
        write_ground_truth(dir.path(), &frames).unwrap();
        let back = read_ground_truth(dir.path(), &schema).unwrap();
        assert_eq!(back, frames);
        let first = fs::read(dir.path().join("VID01.json")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_ground_truth(dir2.path(), &back).unwrap();
        assert_eq!(fs::read(dir2.path().join("VID01.json")).unwrap(), first);
    }

    #[test]
    fn frames_come_back_sorted() {
        let schema = TripletSchema::bundled();
        let dir = tempfile::tempdir().unwrap();
        let mut frames = fixture();
        frames.reverse();
        write_ground_truth(dir.path(), &frames).unwrap();
        let keys: Vec<_> = read_ground_truth(dir.path(), &schema)
            .unwrap()
            .iter()
            .map(FrameRecord::key)
            .collect();
        assert_eq!(
            keys,
            vec![
                ("VID01".into(), 0),
                ("VID01".into(), 30),
                ("VID02".into(), 7)
            ]
        );
    }

    fn rewrite(dir: &Path, file: &str, f: impl FnOnce(&mut serde_json::Value)) {
        let path = dir.join(file);
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        f(&mut v);
        fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    }

    #[test]
    fn instrument_mismatch_is_reported_with_locus() {
        let schema = TripletSchema::bundled();
        let dir = tempfile::tempdir().unwrap();
        write_ground_truth(dir.path(), &fixture()).unwrap();
        rewrite(dir.path(), "VID02.json", |v| {
            v["frames"][0]["instances"][0]["instrument_id"] = 1.into()
        });
        let err = read_ground_truth(dir.path(), &schema)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("VID02") && err.contains("frame 7") && err.contains("instance 4"),
            "{err}"
        );
        assert!(err.contains("triplet 5 has instrument 2"), "{err}");
    }

    #[test]
    fn bad_run_sum_names_instance() {
        let schema = TripletSchema::bundled();
        let dir = tempfile::tempdir().unwrap();
        write_ground_truth(dir.path(), &fixture()).unwrap();
        rewrite(dir.path(), "VID01.json", |v| {
            v["frames"][1]["instances"][1]["mask"]["counts"] = serde_json::json!([1, 2])
        });
        let err = read_ground_truth(dir.path(), &schema)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("frame 30 instance 2") && err.contains("sum"),
            "{err}"
        );
    }

    #[test]
    fn validate_collects_every_problem() {
        let schema = TripletSchema::bundled();
        let dir = tempfile::tempdir().unwrap();
        write_ground_truth(dir.path(), &fixture()).unwrap();
        rewrite(dir.path(), "VID01.json", |v| {
            v["frames"][0]["instances"][1]["instance_id"] = 1.into();
            v["frames"][1]["frame_triplets"] = serde_json::json!([]);
        });
        let diags = validate_ground_truth(dir.path(), &schema).unwrap();
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].errors.len(), 2, "{:?}", diags[0].errors);
        assert!(diags[1].errors.is_empty());
        assert_eq!(diags[1].frames, 1);
    }

    #[test]
    fn stats_counts() {
        let schema = TripletSchema::bundled();
        let s = dataset_stats(&fixture(), &schema);
        assert_eq!((s.frames, s.instances, s.grounded_triplets), (3, 5, 4));
        assert_eq!(s.videos, 2);
        assert_eq!(s.triplet_histogram[5], 3);
        assert_eq!(s.per_video["VID01"].grounded_triplets, 3);
        let mut rev = fixture();
        rev.reverse();
        assert_eq!(dataset_stats(&rev, &schema), s);
        let empty = dataset_stats(&[], &schema);
        assert_eq!(
            (
                empty.frames,
                empty.instances,
                empty.grounded_triplets,
                empty.videos
            ),
            (0, 0, 0, 0)
        );
        assert!(s.render(&schema).contains("grounded triplets"));
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(30955), "30,955");
        assert_eq!(thousands(1234567), "1,234,567");
    }

    fn write_str(dir: &Path, name: &str, s: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, s).unwrap();
        p
    }

    #[test]
    fn read_seg_and_det_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_str(
            dir.path(),
            "seg.json",
            r#"[{"video_id":"V","frame_id":0,"triplet_id":5,"score":0.9,"mask":{"size":[2,2],"counts":[1,2,1]},"bbox":null},
                {"video_id":"V","frame_id":1,"triplet_id":7,"score":0.1,"mask":{"size":[2,2],"counts":[0,4]}}]"#,
        );
        let Predictions::Grounded(d) = read_predictions(&p, Mode::Seg).unwrap() else {
            panic!()
        };
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|r| r.mask.is_some()));

        let p = write_str(
            dir.path(),
            "det.json",
            r#"[{"video_id":"V","frame_id":0,"triplet_id":5,"score":0.5,"mask":null,"bbox":[1,2,3,4]}]"#,
        );
        let Predictions::Grounded(d) = read_predictions(&p, Mode::Det).unwrap() else {
            panic!()
        };
        assert_eq!(
            d[0].bbox,
            Some(BBox {
                x: 1.0,
                y: 2.0,
                w: 3.0,
                h: 4.0
            })
        );
        assert!(d[0].mask.is_none());
    }

    #[test]
    fn prediction_errors() {
        let dir = tempfile::tempdir().unwrap();
        let scores = format!("[{}]", vec!["0.0"; 100].join(","));
        let rec = format!(
            r#"[{{"video_id":"V","frame_id":0,"scores":{scores}}},{{"video_id":"V","frame_id":0,"scores":{scores}}}]"#
        );
        let p = write_str(dir.path(), "rec.json", &rec);
        let err = read_predictions(&p, Mode::Rec).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        assert!(matches!(
            read_predictions(&p, Mode::Seg).unwrap_err(),
            Error::FormatMismatch { .. }
        ));

        let p = write_str(
            dir.path(),
            "bad.json",
            r#"[{"video_id":"V","frame_id":0,"triplet_id":5,"score":1.5,"bbox":[0,0,1,1]}]"#,
        );
        assert!(read_predictions(&p, Mode::Det)
            .unwrap_err()
            .to_string()
            .contains("out of range"));
        let p = write_str(
            dir.path(),
            "nogeom.json",
            r#"[{"video_id":"V","frame_id":0,"triplet_id":5,"score":0.5}]"#,
        );
        assert!(read_predictions(&p, Mode::Det)
            .unwrap_err()
            .to_string()
            .contains("neither"));
        let p = write_str(
            dir.path(),
            "short.json",
            r#"[{"video_id":"V","frame_id":0,"scores":[0.5]}]"#,
        );
        assert!(read_predictions(&p, Mode::Rec)
            .unwrap_err()
            .to_string()
            .contains("expected 100"));
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let preds = Predictions::Grounded(vec![DetectionRecord {
            video_id: "V".into(),
            frame_id: 3,
            triplet_id: 9,
            score: 0.25,
            mask: Some(square(4, 4, 1, 1, 2)),
            bbox: Some(BBox {
                x: 1.0,
                y: 1.0,
                w: 2.0,
                h: 2.0,
            }),
        }]);
        let p = dir.path().join("p.json");
        write_predictions(&p, &preds).unwrap();
        assert_eq!(read_predictions(&p, Mode::Seg).unwrap(), preds);
    }
}
