//! Run-length encoded binary masks and the IoU / box kernels built on them.
//!
//! Runs are column-major and start with a background run, so pixel
//! `(row, col)` of an `h × w` mask has linear index `col * h + row`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form: `{"size":[H,W],"counts":[...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleJson {
    pub size: [u32; 2],
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl TryFrom<RleJson> for RleMask {
    type Error = Error;

    fn try_from(raw: RleJson) -> Result<Self> {
        let [h, w] = raw.size;
        let counts = raw
            .counts
            .iter()
            .map(|&c| {
                u32::try_from(c).map_err(|_| Error::Codec(format!("run length {c} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        RleMask::from_runs(h, w, counts)
    }
}

impl From<RleMask> for RleJson {
    fn from(m: RleMask) -> Self {
        RleJson {
            size: [m.height, m.width],
            counts: m.counts.into_iter().map(u64::from).collect(),
        }
    }
}

impl RleMask {
    /// Strict constructor: `counts` must already be canonical.
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        check_sum(height, width, &counts)?;
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Codec(format!(
                "zero-length run at position {} is not canonical",
                pos + 1
            )));
        }
        if counts.is_empty() && u64::from(height) * u64::from(width) > 0 {
            return Err(Error::Codec("empty run list".into()));
        }
        if counts.len() == 1 && counts[0] == 0 {
            return Err(Error::Codec("single zero run is not canonical".into()));
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// Accepts any run list with the right total and rewrites it in
    /// canonical form (interior zero runs merged away).
    pub fn from_runs(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        check_sum(height, width, &counts)?;
        let mut out: Vec<u32> = Vec::with_capacity(counts.len());
        // parity of the next run in the output (false = background)
        let mut out_fg = false;
        for (i, &c) in counts.iter().enumerate() {
            let fg = i % 2 == 1;
            if c == 0 {
                continue;
            }
            if out.is_empty() && fg {
                out.push(0);
                out_fg = true;
            }
            if fg == out_fg {
                out.push(c);
                out_fg = !out_fg;
            } else {
                *out.last_mut().expect("non-empty") += c;
            }
        }
        if out.is_empty() {
            // zero-pixel mask
            out.push(0);
        }
        Ok(RleMask {
            height,
            width,
            counts: out,
        })
    }

    /// Builds a mask from sorted, non-overlapping foreground intervals
    /// `[start, end)` over column-major linear indices.
    pub fn from_intervals(
        height: u32,
        width: u32,
        intervals: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self> {
        let total = u64::from(height) * u64::from(width);
        let mut counts = Vec::new();
        let mut pos = 0u64;
        for (start, end) in intervals {
            if start < pos || end < start || end > total {
                return Err(Error::Codec(format!(
                    "invalid interval [{start}, {end}) after position {pos}"
                )));
            }
            counts.push(to_run(start - pos)?);
            counts.push(to_run(end - start)?);
            pos = end;
        }
        counts.push(to_run(total - pos)?);
        RleMask::from_runs(height, width, counts)
    }

    pub fn empty(height: u32, width: u32) -> Result<Self> {
        RleMask::from_intervals(height, width, std::iter::empty())
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn size(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| u64::from(c))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.len() < 2
    }

    /// Foreground intervals `[start, end)` in column-major linear index.
    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += u64::from(c);
            (i % 2 == 1).then_some((start, pos))
        })
    }
}

fn to_run(n: u64) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Codec(format!("run length {n} too large")))
}

fn check_sum(height: u32, width: u32, counts: &[u32]) -> Result<()> {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    let expected = u64::from(height) * u64::from(width);
    if total != expected {
        return Err(Error::Codec(format!(
            "run lengths sum to {total}, expected {height}x{width} = {expected}"
        )));
    }
    Ok(())
}

/// Dense binary image, stored column-major to match the run order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: u32, width: u32) -> Self {
        Bitmap {
            height,
            width,
            data: vec![false; height as usize * width as usize],
        }
    }

    /// `f(row, col)` gives the pixel value.
    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut b = Bitmap::new(height, width);
        for col in 0..width {
            for row in 0..height {
                b.set(row, col, f(row, col));
            }
        }
        b
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[self.index(row, col)]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let i = self.index(row, col);
        self.data[i] = value;
    }

    /// Pixels in column-major order.
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    fn index(&self, row: u32, col: u32) -> usize {
        assert!(
            row < self.height && col < self.width,
            "pixel ({row}, {col}) outside {}x{}",
            self.height,
            self.width
        );
        col as usize * self.height as usize + row as usize
    }
}

pub fn rle_decode(mask: &RleMask) -> Bitmap {
    let mut bitmap = Bitmap::new(mask.height, mask.width);
    for (start, end) in mask.intervals() {
        bitmap.data[start as usize..end as usize].fill(true);
    }
    bitmap
}

pub fn rle_encode(bitmap: &Bitmap) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &px in &bitmap.data {
        if px != current {
            counts.push(run);
            run = 0;
            current = px;
        }
        run += 1;
    }
    counts.push(run);
    RleMask::from_runs(bitmap.height, bitmap.width, counts).expect("encoder preserves pixel count")
}

/// Exact `(|a ∩ b|, |a ∪ b|)` pixel counts, walking both run lists.
pub fn mask_intersection_union(a: &RleMask, b: &RleMask) -> Result<(u64, u64)> {
    if a.size() != b.size() {
        return Err(Error::Dimension(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let mut ia = a.intervals().peekable();
    let mut ib = b.intervals().peekable();
    let mut inter = 0u64;
    while let (Some(&(sa, ea)), Some(&(sb, eb))) = (ia.peek(), ib.peek()) {
        let lo = sa.max(sb);
        let hi = ea.min(eb);
        if hi > lo {
            inter += hi - lo;
        }
        if ea <= eb {
            ia.next();
        } else {
            ib.next();
        }
    }
    Ok((inter, a.area() + b.area() - inter))
}

/// Mask IoU. A single empty operand gives 0; two empty operands are an error.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let (inter, union) = mask_intersection_union(a, b)?;
    if union == 0 {
        return Err(Error::InvalidInput(
            "IoU of two empty masks is undefined".into(),
        ));
    }
    Ok(inter as f64 / union as f64)
}

/// Axis-aligned box in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        if ![x, y, w, h].iter().all(|v| v.is_finite()) || x < 0.0 || y < 0.0 || w < 1.0 || h < 1.0 {
            return Err(Error::InvalidInput(format!(
                "invalid box [{x}, {y}, {w}, {h}]"
            )));
        }
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x + self.w <= f64::from(width) && self.y + self.h <= f64::from(height)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Tight box around the foreground. Errors on an empty mask.
pub fn mask_to_bbox(mask: &RleMask) -> Result<BBox> {
    let h = u64::from(mask.height);
    let mut rows = (u64::MAX, 0u64);
    let mut cols = (u64::MAX, 0u64);
    for (start, end) in mask.intervals() {
        let last = end - 1;
        let (c0, r0) = (start / h, start % h);
        let (c1, r1) = (last / h, last % h);
        cols = (cols.0.min(c0), cols.1.max(c1));
        if c0 == c1 {
            rows = (rows.0.min(r0), rows.1.max(r1));
        } else {
            // crossing a column boundary covers the bottom row of one
            // column and the top row of the next
            rows = (0, h - 1);
        }
    }
    if cols.0 == u64::MAX {
        return Err(Error::InvalidInput("bounding box of an empty mask".into()));
    }
    Ok(BBox {
        x: cols.0 as f64,
        y: rows.0 as f64,
        w: (cols.1 - cols.0 + 1) as f64,
        h: (rows.1 - rows.0 + 1) as f64,
    })
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pixel-by-pixel decoder used as the reference for the run-based one.
    fn naive_decode(h: u32, w: u32, counts: &[u32]) -> Vec<(u32, u32)> {
        let mut fg = Vec::new();
        let mut idx = 0u32;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                if i % 2 == 1 {
                    fg.push((idx % h, idx / h));
                }
                idx += 1;
            }
        }
        assert_eq!(idx, h * w);
        fg.sort();
        fg
    }

    /// Independent run scanner over a row-major pixel grid.
    fn naive_runs(grid: &[Vec<bool>]) -> Vec<u32> {
        let h = grid.len();
        let w = grid[0].len();
        let mut runs = vec![0u32];
        let mut value = false;
        for c in 0..w {
            for row in grid.iter().take(h) {
                if row[c] != value {
                    runs.push(0);
                    value = row[c];
                }
                *runs.last_mut().unwrap() += 1;
            }
        }
        runs
    }

    fn ones(b: &Bitmap) -> Vec<(u32, u32)> {
        let mut v = Vec::new();
        for c in 0..b.width() {
            for r in 0..b.height() {
                if b.get(r, c) {
                    v.push((r, c));
                }
            }
        }
        v.sort();
        v
    }

    #[test]
    fn decode_examples() {
        let m = RleMask::new(2, 2, vec![1, 2, 1]).unwrap();
        let d = rle_decode(&m);
        assert_eq!(ones(&d), naive_decode(2, 2, &[1, 2, 1]));
        assert_eq!(ones(&d), vec![(0, 1), (1, 0)]);
        assert_eq!(
            rle_decode(&RleMask::new(2, 2, vec![4]).unwrap()).count_ones(),
            0
        );
        assert_eq!(
            rle_decode(&RleMask::new(2, 2, vec![0, 4]).unwrap()).count_ones(),
            4
        );
    }

    #[test]
    fn strict_constructor_rejects_bad_runs() {
        assert!(RleMask::new(2, 2, vec![1, 2]).is_err());
        assert!(RleMask::new(2, 2, vec![1, 0, 3]).is_err());
        assert!(RleMask::new(2, 2, vec![4, 0]).is_err());
        assert_eq!(
            RleMask::from_runs(2, 2, vec![1, 0, 3, 0]).unwrap().counts(),
            &[4]
        );
        assert_eq!(
            RleMask::from_runs(2, 2, vec![0, 1, 0, 3]).unwrap().counts(),
            &[0, 4]
        );
    }

    #[test]
    fn encode_all_background() {
        assert_eq!(rle_encode(&Bitmap::new(3, 3)).counts(), &[9]);
    }

    #[test]
    fn json_shape() {
        let m = RleMask::new(2, 2, vec![1, 2, 1]).unwrap();
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"size":[2,2],"counts":[1,2,1]}"#
        );
        let back: RleMask = serde_json::from_str(r#"{"size":[2,2],"counts":[1,2,1]}"#).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<RleMask>(r#"{"size":[2,2],"counts":[1,2]}"#).is_err());
    }

    fn square(h: u32, w: u32, r: u32, c: u32, side: u32) -> RleMask {
        rle_encode(&Bitmap::from_fn(h, w, |y, x| {
            y >= r && y < r + side && x >= c && x < c + side
        }))
    }

    #[test]
    fn iou_examples() {
        let a = square(6, 6, 0, 0, 2);
        let b = square(6, 6, 0, 1, 2);
        assert_eq!(mask_intersection_union(&a, &b).unwrap(), (2, 6));
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &square(6, 6, 4, 4, 2)).unwrap(), 0.0);
        let empty = RleMask::empty(6, 6).unwrap();
        assert_eq!(mask_iou(&a, &empty).unwrap(), 0.0);
        assert!(mask_iou(&empty, &empty).is_err());
        assert!(mask_iou(&a, &square(6, 5, 0, 0, 2)).is_err());
    }

    #[test]
    fn bbox_examples() {
        let m = rle_encode(&Bitmap::from_fn(8, 8, |r, c| r == 3 && c == 5));
        assert_eq!(
            mask_to_bbox(&m).unwrap(),
            BBox {
                x: 5.0,
                y: 3.0,
                w: 1.0,
                h: 1.0
            }
        );
        let full = RleMask::new(4, 7, vec![0, 28]).unwrap();
        assert_eq!(
            mask_to_bbox(&full).unwrap(),
            BBox {
                x: 0.0,
                y: 0.0,
                w: 7.0,
                h: 4.0
            }
        );
        assert!(mask_to_bbox(&RleMask::empty(4, 4).unwrap()).is_err());
    }

    #[test]
    fn box_iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = BBox::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!((box_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &BBox::new(5.0, 5.0, 1.0, 1.0).unwrap()), 0.0);
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn filled_boxes_iou_matches_box_iou() {
        let a = square(10, 10, 1, 1, 4);
        let b = square(10, 10, 3, 2, 4);
        let mi = mask_iou(&a, &b).unwrap();
        let bi = box_iou(&mask_to_bbox(&a).unwrap(), &mask_to_bbox(&b).unwrap());
        assert!(mi >= bi - 1e-15);
    }

    fn grid_strategy(max: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
        (1..=max, 1..=max).prop_flat_map(|(h, w)| {
            (0.0f64..1.0).prop_flat_map(move |density| {
                prop::collection::vec(
                    prop::collection::vec(prop::bool::weighted(density.clamp(0.01, 0.99)), w),
                    h,
                )
            })
        })
    }

    fn to_bitmap(grid: &[Vec<bool>]) -> Bitmap {
        Bitmap::from_fn(grid.len() as u32, grid[0].len() as u32, |r, c| {
            grid[r as usize][c as usize]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_matches_run_scanner(grid in grid_strategy(16)) {
            let bm = to_bitmap(&grid);
            let rle = rle_encode(&bm);
            let expected = RleMask::from_runs(bm.height(), bm.width(), naive_runs(&grid)).unwrap();
            prop_assert_eq!(&rle, &expected);
            prop_assert_eq!(rle_decode(&rle), bm.clone());
            prop_assert_eq!(rle.area(), bm.count_ones());
            let back = rle_encode(&rle_decode(&rle));
            prop_assert_eq!(back.counts(), rle.counts());
        }

        #[test]
        fn iou_matches_pixel_count(a in grid_strategy(12), seed in any::<u64>()) {
            let (h, w) = (a.len(), a[0].len());
            let mut s = seed;
            let b: Vec<Vec<bool>> = (0..h).map(|_| (0..w).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) % 3 == 0
            }).collect()).collect();
            let (ra, rb) = (rle_encode(&to_bitmap(&a)), rle_encode(&to_bitmap(&b)));
            let mut inter = 0u64;
            let mut union = 0u64;
            for r in 0..h {
                for c in 0..w {
                    inter += u64::from(a[r][c] && b[r][c]);
                    union += u64::from(a[r][c] || b[r][c]);
                }
            }
            prop_assert_eq!(mask_intersection_union(&ra, &rb).unwrap(), (inter, union));
            prop_assert_eq!(mask_intersection_union(&rb, &ra).unwrap(), (inter, union));
            if union > 0 {
                prop_assert_eq!(mask_iou(&ra, &rb).unwrap(), mask_iou(&rb, &ra).unwrap());
            }
            if inter > 0 {
                prop_assert_eq!(mask_iou(&ra, &ra).unwrap(), 1.0);
            }
        }

        #[test]
        fn bbox_matches_scan(grid in grid_strategy(16)) {
            let bm = to_bitmap(&grid);
            let rle = rle_encode(&bm);
            let px = ones(&bm);
            if px.is_empty() {
                prop_assert!(mask_to_bbox(&rle).is_err());
            } else {
                let rmin = px.iter().map(|p| p.0).min().unwrap();
                let rmax = px.iter().map(|p| p.0).max().unwrap();
                let cmin = px.iter().map(|p| p.1).min().unwrap();
                let cmax = px.iter().map(|p| p.1).max().unwrap();
                let b = mask_to_bbox(&rle).unwrap();
                prop_assert_eq!(b, BBox { x: cmin as f64, y: rmin as f64, w: (cmax - cmin + 1) as f64, h: (rmax - rmin + 1) as f64 });
            }
        }
    }
}
