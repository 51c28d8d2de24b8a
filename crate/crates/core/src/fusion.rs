//! Double-precision reference of the target-aware fusion block: anatomy
//! logits are embedded pixel-wise and average-pooled into a feature pyramid,
//! instance queries cross-attend to the flattened pyramid, and the attention
//! output is added back through a sigmoid gate:
//!
//! ```text
//! A  = softmax((Q W_q)(T W_k)ᵀ / √d) (T W_v)
//! Q' = Q + σ(A W_g + b_g) ⊙ A
//! ```
//!
//! Analytic gradients of `‖Q'‖²` are provided for every parameter block and
//! checked against central differences by [`grad_check`].

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::seeded_rng;

/// Number of tissue classes in the anatomy logits.
pub const ANATOMY_CLASSES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array1<f64>,
    /// Pixel-wise anatomy embedding, `classes × d`.
    pub proj: Array2<f64>,
}

impl FusionParams {
    pub fn dim(&self) -> usize {
        self.w_q.nrows()
    }

    /// Identity projections, zero gate, and the given embedding.
    pub fn identity(d: usize, proj: Array2<f64>) -> Self {
        FusionParams {
            w_q: Array2::eye(d),
            w_k: Array2::eye(d),
            w_v: Array2::eye(d),
            w_g: Array2::zeros((d, d)),
            b_g: Array1::zeros(d),
            proj,
        }
    }

    pub fn random(d: usize, classes: usize, rng: &mut impl Rng) -> Self {
        FusionParams {
            w_q: uniform((d, d), rng),
            w_k: uniform((d, d), rng),
            w_v: uniform((d, d), rng),
            w_g: uniform((d, d), rng),
            b_g: Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0)),
            proj: uniform((classes, d), rng),
        }
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        for (name, m) in [
            ("W_q", &self.w_q),
            ("W_k", &self.w_k),
            ("W_v", &self.w_v),
            ("W_g", &self.w_g),
        ] {
            if m.dim() != (d, d) {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected ({d}, {d})",
                    m.dim()
                )));
            }
        }
        if self.b_g.len() != d {
            return Err(Error::Dimension(format!(
                "b_g has {} entries, expected {d}",
                self.b_g.len()
            )));
        }
        if self.proj.ncols() != d {
            return Err(Error::Dimension(format!(
                "P has {} columns, expected {d}",
                self.proj.ncols()
            )));
        }
        Ok(())
    }
}

pub fn uniform(shape: (usize, usize), rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Multi-scale anatomy features: level 0 is the pixel-wise embedding of the
/// logits (`h × w × classes` → `h × w × d`), each further level a 2×2 average
/// pool of the previous one (odd trailing rows/columns dropped).
pub fn encode_anatomy(
    logits: &Array3<f64>,
    proj: &Array2<f64>,
    levels: usize,
) -> Result<Vec<Array3<f64>>> {
    let (h, w, c) = logits.dim();
    if levels == 0 {
        return Err(Error::InvalidInput(
            "at least one feature level required".into(),
        ));
    }
    if proj.nrows() != c {
        return Err(Error::Dimension(format!(
            "logits have {c} channels, P has {} rows",
            proj.nrows()
        )));
    }
    let min = 1usize << (levels - 1);
    if h < min || w < min {
        return Err(Error::InvalidInput(format!(
            "{h}x{w} logits too small for {levels} levels"
        )));
    }
    let d = proj.ncols();
    let flat = logits
        .view()
        .into_shape_with_order((h * w, c))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let level0 = flat
        .dot(proj)
        .into_shape_with_order((h, w, d))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let mut feats = vec![level0];
    for _ in 1..levels {
        let prev = feats.last().expect("non-empty");
        feats.push(avg_pool2(prev));
    }
    Ok(feats)
}

fn avg_pool2(x: &Array3<f64>) -> Array3<f64> {
    let (h, w, d) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array3::zeros((ho, wo, d));
    for i in 0..ho {
        for j in 0..wo {
            let block = x.slice(s![2 * i..2 * i + 2, 2 * j..2 * j + 2, ..]);
            for k in 0..d {
                out[[i, j, k]] =
                    (block[[0, 0, k]] + block[[0, 1, k]] + block[[1, 0, k]] + block[[1, 1, k]])
                        / 4.0;
            }
        }
    }
    out
}

/// Flattens every level row-major and stacks them into `tokens × d`.
pub fn tokens(feats: &[Array3<f64>]) -> Array2<f64> {
    let d = feats.first().map_or(0, |f| f.dim().2);
    let n: usize = feats.iter().map(|f| f.dim().0 * f.dim().1).sum();
    let mut t = Array2::zeros((n, d));
    let mut row = 0;
    for f in feats {
        let (h, w, _) = f.dim();
        for i in 0..h {
            for j in 0..w {
                t.row_mut(row).assign(&f.slice(s![i, j, ..]));
                row += 1;
            }
        }
    }
    t
}

/// Intermediate values of one cross-attention pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub tokens: Array2<f64>,
    pub queries: Array2<f64>,
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
    /// Softmax weights, `queries × tokens`.
    pub weights: Array2<f64>,
    pub output: Array2<f64>,
}

pub fn attention_trace(
    q: &Array2<f64>,
    feats: &[Array3<f64>],
    params: &FusionParams,
) -> Result<AttentionTrace> {
    params.check()?;
    let d = params.dim();
    if q.ncols() != d || q.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "queries are {:?}, expected (N, {d})",
            q.dim()
        )));
    }
    if feats.is_empty() || feats.iter().any(|f| f.dim().2 != d) {
        return Err(Error::Dimension(format!(
            "feature levels must all have {d} channels"
        )));
    }
    let t = tokens(feats);
    if t.nrows() == 0 {
        return Err(Error::Dimension("no feature tokens".into()));
    }
    let qp = q.dot(&params.w_q);
    let kp = t.dot(&params.w_k);
    let v = t.dot(&params.w_v);
    let scores = qp.dot(&kp.t()) / (d as f64).sqrt();
    let weights = softmax_rows(&scores);
    let output = weights.dot(&v);
    Ok(AttentionTrace {
        tokens: t,
        queries: qp,
        keys: kp,
        values: v,
        weights,
        output,
    })
}

pub fn attention(
    q: &Array2<f64>,
    feats: &[Array3<f64>],
    params: &FusionParams,
) -> Result<Array2<f64>> {
    attention_trace(q, feats, params).map(|t| t.output)
}

pub fn gate(a: &Array2<f64>, w_g: &Array2<f64>, b_g: &Array1<f64>) -> Array2<f64> {
    (a.dot(w_g) + b_g).mapv(sigmoid)
}

/// `Q + σ(A W_g + b_g) ⊙ A`.
pub fn gated_fusion(
    q: &Array2<f64>,
    a: &Array2<f64>,
    w_g: &Array2<f64>,
    b_g: &Array1<f64>,
) -> Result<Array2<f64>> {
    let d = q.ncols();
    if a.dim() != q.dim() || w_g.dim() != (d, d) || b_g.len() != d {
        return Err(Error::Dimension(format!(
            "Q {:?}, A {:?}, W_g {:?}, b_g {}",
            q.dim(),
            a.dim(),
            w_g.dim(),
            b_g.len()
        )));
    }
    Ok(q + &(gate(a, w_g, b_g) * a))
}

pub fn fusion_forward(
    q: &Array2<f64>,
    logits: &Array3<f64>,
    params: &FusionParams,
    levels: usize,
) -> Result<Array2<f64>> {
    let feats = encode_anatomy(logits, &params.proj, levels)?;
    let a = attention(q, &feats, params)?;
    gated_fusion(q, &a, &params.w_g, &params.b_g)
}

// ---------------------------------------------------------------------------
// gradients

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamBlock {
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "W_g")]
    Wg,
    #[serde(rename = "b_g")]
    Bg,
    #[serde(rename = "W_q")]
    Wq,
    #[serde(rename = "W_k")]
    Wk,
    #[serde(rename = "W_v")]
    Wv,
    #[serde(rename = "P")]
    Proj,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 7] = [
        ParamBlock::Q,
        ParamBlock::Wg,
        ParamBlock::Bg,
        ParamBlock::Wq,
        ParamBlock::Wk,
        ParamBlock::Wv,
        ParamBlock::Proj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::Q => "Q",
            ParamBlock::Wg => "W_g",
            ParamBlock::Bg => "b_g",
            ParamBlock::Wq => "W_q",
            ParamBlock::Wk => "W_k",
            ParamBlock::Wv => "W_v",
            ParamBlock::Proj => "P",
        }
    }
}

/// Gradients of `‖Q'‖²`, one array per block (b_g stored as a 1 × d row).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub q: Array2<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub proj: Array2<f64>,
}

impl Gradients {
    pub fn block(&self, b: ParamBlock) -> &Array2<f64> {
        match b {
            ParamBlock::Q => &self.q,
            ParamBlock::Wg => &self.w_g,
            ParamBlock::Bg => &self.b_g,
            ParamBlock::Wq => &self.w_q,
            ParamBlock::Wk => &self.w_k,
            ParamBlock::Wv => &self.w_v,
            ParamBlock::Proj => &self.proj,
        }
    }

    fn block_mut(&mut self, b: ParamBlock) -> &mut Array2<f64> {
        match b {
            ParamBlock::Q => &mut self.q,
            ParamBlock::Wg => &mut self.w_g,
            ParamBlock::Bg => &mut self.b_g,
            ParamBlock::Wq => &mut self.w_q,
            ParamBlock::Wk => &mut self.w_k,
            ParamBlock::Wv => &mut self.w_v,
            ParamBlock::Proj => &mut self.proj,
        }
    }
}

pub fn fusion_loss(
    q: &Array2<f64>,
    logits: &Array3<f64>,
    params: &FusionParams,
    levels: usize,
) -> Result<f64> {
    Ok(fusion_forward(q, logits, params, levels)?
        .mapv(|v| v * v)
        .sum())
}

/// Reverse-mode gradients of `‖Q'‖²`.
pub fn fusion_gradients(
    q: &Array2<f64>,
    logits: &Array3<f64>,
    params: &FusionParams,
    levels: usize,
) -> Result<Gradients> {
    let feats = encode_anatomy(logits, &params.proj, levels)?;
    let tr = attention_trace(q, &feats, params)?;
    let d = params.dim();
    let a = &tr.output;
    let g = gate(a, &params.w_g, &params.b_g);
    let out = q + &(&g * a);
    let loss = out.mapv(|v| v * v).sum();

    let d_out = out.mapv(|v| 2.0 * v);
    let mut d_q = d_out.clone();
    let d_gate = &d_out * a;
    let mut d_a = &d_out * &g;
    let d_z = &d_gate * &g.mapv(|v| v * (1.0 - v));
    let d_wg = a.t().dot(&d_z);
    let d_bg = d_z.sum_axis(Axis(0)).insert_axis(Axis(0));
    d_a += &d_z.dot(&params.w_g.t());

    let d_weights = d_a.dot(&tr.values.t());
    let d_values = tr.weights.t().dot(&d_a);
    let row_dot = (&d_weights * &tr.weights)
        .sum_axis(Axis(1))
        .insert_axis(Axis(1));
    let d_scores = &tr.weights * &(&d_weights - &row_dot);
    let scale = (d as f64).sqrt();
    let d_qp = d_scores.dot(&tr.keys) / scale;
    let d_kp = d_scores.t().dot(&tr.queries) / scale;

    let d_wq = q.t().dot(&d_qp);
    d_q += &d_qp.dot(&params.w_q.t());
    let d_wk = tr.tokens.t().dot(&d_kp);
    let d_wv = tr.tokens.t().dot(&d_values);
    let d_tokens = d_kp.dot(&params.w_k.t()) + d_values.dot(&params.w_v.t());

    // split token gradient back into levels, then undo pooling from the top
    let mut d_levels: Vec<Array3<f64>> = Vec::with_capacity(feats.len());
    let mut row = 0;
    for f in &feats {
        let (h, w, _) = f.dim();
        let block = d_tokens.slice(s![row..row + h * w, ..]).to_owned();
        d_levels.push(block.into_shape_with_order((h, w, d)).expect("contiguous"));
        row += h * w;
    }
    for l in (1..d_levels.len()).rev() {
        let upper = d_levels[l].clone();
        let lower = &mut d_levels[l - 1];
        let (ho, wo, _) = upper.dim();
        for i in 0..ho {
            for j in 0..wo {
                let gsrc = upper.slice(s![i, j, ..]).mapv(|v| v / 4.0);
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let mut dst = lower.slice_mut(s![2 * i + di, 2 * j + dj, ..]);
                    dst += &gsrc;
                }
            }
        }
    }
    let (h, w, c) = logits.dim();
    let flat_logits = logits
        .view()
        .into_shape_with_order((h * w, c))
        .expect("contiguous");
    let d_level0 = d_levels
        .swap_remove(0)
        .into_shape_with_order((h * w, d))
        .expect("contiguous");
    let d_proj = flat_logits.t().dot(&d_level0);

    Ok(Gradients {
        loss,
        q: d_q,
        w_g: d_wg,
        b_g: d_bg,
        w_q: d_wq,
        w_k: d_wk,
        w_v: d_wv,
        proj: d_proj,
    })
}

// ---------------------------------------------------------------------------
// finite-difference check

/// Denominator floor for the relative error, so that entries whose true
/// gradient is numerically zero compare by absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub block: ParamBlock,
    pub entries: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub blocks: Vec<BlockError>,
    pub passed: bool,
}

fn perturbed_loss(
    block: ParamBlock,
    index: (usize, usize),
    delta: f64,
    q: &Array2<f64>,
    logits: &Array3<f64>,
    params: &FusionParams,
    levels: usize,
) -> Result<f64> {
    let mut q = q.clone();
    let mut p = params.clone();
    let (i, j) = index;
    match block {
        ParamBlock::Q => q[[i, j]] += delta,
        ParamBlock::Wg => p.w_g[[i, j]] += delta,
        ParamBlock::Bg => p.b_g[j] += delta,
        ParamBlock::Wq => p.w_q[[i, j]] += delta,
        ParamBlock::Wk => p.w_k[[i, j]] += delta,
        ParamBlock::Wv => p.w_v[[i, j]] += delta,
        ParamBlock::Proj => p.proj[[i, j]] += delta,
    }
    fusion_loss(&q, logits, &p, levels)
}

/// Compares analytic gradients with central differences of step `step`.
pub fn grad_check(
    params: &FusionParams,
    q: &Array2<f64>,
    logits: &Array3<f64>,
    levels: usize,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_with(params, q, logits, levels, step, tolerance, None)
}

/// As [`grad_check`], optionally flipping the sign of one analytic block
/// first (a negative control that must be reported as a failure).
pub fn grad_check_with(
    params: &FusionParams,
    q: &Array2<f64>,
    logits: &Array3<f64>,
    levels: usize,
    step: f64,
    tolerance: f64,
    corrupt: Option<ParamBlock>,
) -> Result<GradCheckReport> {
    let mut analytic = fusion_gradients(q, logits, params, levels)?;
    if let Some(b) = corrupt {
        analytic.block_mut(b).mapv_inplace(|v| -v);
    }
    let mut blocks = Vec::new();
    for block in ParamBlock::ALL {
        let grad: ArrayView2<f64> = analytic.block(block).view();
        let (rows, cols) = grad.dim();
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for i in 0..rows {
            for j in 0..cols {
                let plus = perturbed_loss(block, (i, j), step, q, logits, params, levels)?;
                let minus = perturbed_loss(block, (i, j), -step, q, logits, params, levels)?;
                let numeric = (plus - minus) / (2.0 * step);
                let a = grad[[i, j]];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
                max_abs = max_abs.max(abs);
                max_rel = max_rel.max(rel);
            }
        }
        blocks.push(BlockError {
            block,
            entries: rows * cols,
            max_relative_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= tolerance,
        });
    }
    let passed = blocks.iter().all(|b| b.passed);
    Ok(GradCheckReport {
        step,
        tolerance,
        blocks,
        passed,
    })
}

// ---------------------------------------------------------------------------
// self-check suite

/// Seeded random problem instance.
#[derive(Debug, Clone)]
pub struct FusionInstance {
    pub q: Array2<f64>,
    pub logits: Array3<f64>,
    pub params: FusionParams,
    pub levels: usize,
}

impl FusionInstance {
    pub fn random(
        seed: u64,
        queries: usize,
        d: usize,
        height: usize,
        width: usize,
        levels: usize,
    ) -> Self {
        let mut rng = seeded_rng(seed);
        let params = FusionParams::random(d, ANATOMY_CLASSES, &mut rng);
        let q = uniform((queries, d), &mut rng);
        let logits = Array3::from_shape_fn((height, width, ANATOMY_CLASSES), |_| {
            rng.gen_range(-1.0..1.0)
        });
        FusionInstance {
            q,
            logits,
            params,
            levels,
        }
    }

    /// d = 8, 4 queries, 4×4×6 logits, two pyramid levels.
    pub fn standard(seed: u64) -> Self {
        Self::random(seed, 4, 8, 4, 4, 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionCheckReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub gradients: GradCheckReport,
    pub negative_control: GradCheckReport,
    pub passed: bool,
}

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn max_abs(a: &Array2<f64>) -> f64 {
    a.fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Runs the invariant and gradient checks on a seeded standard instance.
pub fn run_fusion_checks(seed: u64) -> Result<FusionCheckReport> {
    let inst = FusionInstance::standard(seed);
    let FusionInstance {
        q,
        logits,
        params,
        levels,
    } = &inst;
    let levels = *levels;
    let feats = encode_anatomy(logits, &params.proj, levels)?;
    let tr = attention_trace(q, &feats, params)?;
    let a = &tr.output;
    let mut checks = Vec::new();

    let worst_row = tr
        .weights
        .rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0f64, f64::max);
    checks.push(CheckOutcome {
        name: "softmax rows sum to 1",
        passed: worst_row <= 1e-12,
        detail: format!("max |row sum - 1| = {worst_row:.3e} (limit 1e-12)"),
    });

    let g = gate(a, &params.w_g, &params.b_g);
    let (gmin, gmax) = g.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    checks.push(CheckOutcome {
        name: "gate strictly inside (0, 1)",
        passed: gmin > 0.0 && gmax < 1.0,
        detail: format!("gate range [{gmin:.6}, {gmax:.6}]"),
    });

    let zero = Array2::zeros(q.dim());
    let same = gated_fusion(q, &zero, &params.w_g, &params.b_g)?;
    let bitwise = same
        .iter()
        .zip(q.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    checks.push(CheckOutcome {
        name: "A = 0 leaves Q unchanged (bitwise)",
        passed: bitwise,
        detail: String::from(if bitwise {
            "identical bits"
        } else {
            "bits differ"
        }),
    });

    let d = params.dim();
    let half = gated_fusion(q, a, &Array2::zeros((d, d)), &Array1::zeros(d))?;
    let half_err = max_abs(&(&half - &(q + &(a * 0.5))));
    checks.push(CheckOutcome {
        name: "zero gate parameters give Q + A/2",
        passed: half_err <= 1e-15,
        detail: format!("max error {half_err:.3e} (limit 1e-15)"),
    });

    let beta = 20.0;
    let closed = gated_fusion(q, a, &Array2::zeros((d, d)), &Array1::from_elem(d, -beta))?;
    let shift = max_abs(&(&closed - q));
    let bound = sigmoid(-beta) * max_abs(a) + 4.0 * f64::EPSILON * max_abs(q);
    checks.push(CheckOutcome {
        name: "saturated gate bounds the update",
        passed: shift <= bound,
        detail: format!(
            "max |Q' - Q| = {shift:.3e}, bound sigmoid(-{beta}) * max|A| = {bound:.3e}"
        ),
    });

    let out = gated_fusion(q, a, &params.w_g, &params.b_g)?;
    let perm: Vec<usize> = (0..q.nrows()).rev().collect();
    let q_perm = q.select(Axis(0), &perm);
    let out_perm = fusion_forward(&q_perm, logits, params, levels)?;
    let perm_err = max_abs(&(&out_perm - &out.select(Axis(0), &perm)));
    checks.push(CheckOutcome {
        name: "permuting queries permutes outputs",
        passed: perm_err <= 1e-12,
        detail: format!("max error {perm_err:.3e}"),
    });

    let gradients = grad_check(params, q, logits, levels, GRAD_STEP, GRAD_TOLERANCE)?;
    let negative_control = grad_check_with(
        params,
        q,
        logits,
        levels,
        GRAD_STEP,
        GRAD_TOLERANCE,
        Some(ParamBlock::Wg),
    )?;
    checks.push(CheckOutcome {
        name: "analytic gradients match central differences",
        passed: gradients.passed,
        detail: gradients
            .blocks
            .iter()
            .map(|b| format!("{} {:.2e}", b.block.name(), b.max_relative_error))
            .collect::<Vec<_>>()
            .join(", "),
    });
    checks.push(CheckOutcome {
        name: "sign-flipped W_g gradient is flagged",
        passed: !negative_control.passed,
        detail: format!(
            "W_g max relative error {:.2e}",
            negative_control
                .blocks
                .iter()
                .find(|b| b.block == ParamBlock::Wg)
                .map_or(0.0, |b| b.max_relative_error)
        ),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(FusionCheckReport {
        seed,
        checks,
        gradients,
        negative_control,
        passed,
    })
}

impl FusionCheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out.push_str(&format!(
            "{} ({} of {} checks passed, seed {})\n",
            if self.passed {
                "all checks passed"
            } else {
                "FAILED"
            },
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
            self.seed
        ));
        out
    }
}
