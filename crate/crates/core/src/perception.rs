//! A small grid-cell object detector with hand-rolled forward and reverse
//! passes. This is the cloud's detector and the white-box attack target.
//!
//! Architecture: two 3x3 stride-2 ReLU convolutions, a space-to-depth
//! rearrangement of the feature map into S x S grid cells (keeping sub-cell
//! spatial structure so the head can place box centers within a cell), and a
//! shared per-cell linear head emitting 4 box activations, an objectness
//! logit, and one logit per class. All arithmetic is f64 so gradient checks
//! against central finite differences hold to tight tolerances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bbox::{iou, BBox};
use crate::math;
use crate::render::{Frame, ImageTensor, LabelSet};
use crate::rng::{self, stream_rng};
use crate::scene::ObjectKind;

pub const N_CLASSES: usize = 4;
/// Box (4) + objectness (1) + class logits.
pub const HEAD_OUT: usize = 5 + N_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub enum PerceptionError {
    ShapeMismatch(String),
    DegenerateBox,
    BadConfig(String),
}

impl core::fmt::Display for PerceptionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PerceptionError::ShapeMismatch(why) => write!(f, "shape mismatch: {why}"),
            PerceptionError::DegenerateBox => write!(f, "degenerate (zero-area) box"),
            PerceptionError::BadConfig(why) => write!(f, "bad detector config: {why}"),
        }
    }
}

impl core::error::Error for PerceptionError {}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    EmptyDataset,
    Diverged { epoch: usize, batch: usize },
    Perception(PerceptionError),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::EmptyDataset => write!(f, "training dataset is empty"),
            TrainError::Diverged { epoch, batch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, batch {batch}")
            }
            TrainError::Perception(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<PerceptionError> for TrainError {
    fn from(e: PerceptionError) -> Self {
        TrainError::Perception(e)
    }
}

/// Fixed detector shape. The two conv layers halve resolution each, so the
/// feature map is `image_size / 4` on a side; it must tile evenly into the
/// `grid x grid` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorConfig {
    pub image_size: usize,
    pub grid: usize,
    pub conv1_out: usize,
    pub conv2_out: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            image_size: 64,
            grid: 4,
            conv1_out: 8,
            conv2_out: 16,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return Err(PerceptionError::BadConfig(format!(
                "image_size {} must be a multiple of 4 and at least 8",
                self.image_size
            )));
        }
        if self.grid == 0 || self.feat_size() % self.grid != 0 {
            return Err(PerceptionError::BadConfig(format!(
                "feature map {} does not tile into grid {}",
                self.feat_size(),
                self.grid
            )));
        }
        if self.conv1_out == 0 || self.conv2_out == 0 {
            return Err(PerceptionError::BadConfig(String::from("zero channels")));
        }
        Ok(())
    }

    pub fn feat_size(&self) -> usize {
        self.image_size / 4
    }

    /// Feature-map pixels per grid cell along one axis.
    pub fn block(&self) -> usize {
        self.feat_size() / self.grid
    }

    /// Per-cell head input width: the flattened block of conv2 activations.
    pub fn head_in(&self) -> usize {
        self.conv2_out * self.block() * self.block()
    }

    pub fn n_cells(&self) -> usize {
        self.grid * self.grid
    }
}

/// All detector weights; the white-box attacker's knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: DetectorConfig,
    /// `[conv1_out][3][3][3]`, row-major `(out, in, ky, kx)`.
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    /// `[conv2_out][conv1_out][3][3]`.
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    /// `[HEAD_OUT][head_in]`.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: DetectorConfig) -> Result<Self, PerceptionError> {
        config.validate()?;
        Ok(ModelParams {
            config,
            conv1_w: vec![0.0; config.conv1_out * 3 * 3 * 3],
            conv1_b: vec![0.0; config.conv1_out],
            conv2_w: vec![0.0; config.conv2_out * config.conv1_out * 3 * 3],
            conv2_b: vec![0.0; config.conv2_out],
            head_w: vec![0.0; HEAD_OUT * config.head_in()],
            head_b: vec![0.0; HEAD_OUT],
        })
    }

    /// Seeded init: every tensor uniform in `±1/sqrt(fan_in)` of its layer,
    /// drawn in canonical tensor order.
    pub fn init(config: DetectorConfig, seed: u64) -> Result<Self, PerceptionError> {
        let mut p = ModelParams::zeros(config)?;
        let mut r = stream_rng(seed, rng::stream::TRAIN_INIT, 0);
        let fans = [
            27.0, // conv1: 3 * 3 * 3
            27.0,
            (config.conv1_out * 9) as f64,
            (config.conv1_out * 9) as f64,
            config.head_in() as f64,
            config.head_in() as f64,
        ];
        for (tensor, fan) in p.tensors_mut().into_iter().zip(fans) {
            let lim = 1.0 / math::sqrt(fan);
            for v in tensor.iter_mut() {
                *v = r.gen_range(-lim..lim);
            }
        }
        Ok(p)
    }

    /// Canonical tensor order used by serialization, flattening and SGD.
    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            flat.extend_from_slice(t);
        }
        flat
    }

    pub fn from_flat(config: DetectorConfig, flat: &[f64]) -> Result<Self, PerceptionError> {
        let mut p = ModelParams::zeros(config)?;
        let expected = p.param_count();
        if flat.len() != expected {
            return Err(PerceptionError::ShapeMismatch(format!(
                "flat parameter vector has {} values, expected {expected}",
                flat.len()
            )));
        }
        let mut off = 0;
        for t in p.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(p)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Pre-decode network output: one prediction per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPred {
    /// Sigmoid-mapped box activations: center offsets within the cell and
    /// width/height as fractions of the image.
    pub box_s: [f64; 4],
    pub obj_logit: f64,
    pub cls_logits: [f64; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub grid: usize,
    pub cells: Vec<CellPred>,
}

impl RawPrediction {
    fn from_logits(grid: usize, logits: &[f64]) -> Self {
        let cells = (0..grid * grid)
            .map(|cell| {
                let l = &logits[cell * HEAD_OUT..(cell + 1) * HEAD_OUT];
                let mut cls = [0.0; N_CLASSES];
                cls.copy_from_slice(&l[5..5 + N_CLASSES]);
                CellPred {
                    box_s: [
                        math::sigmoid(l[0]),
                        math::sigmoid(l[1]),
                        math::sigmoid(l[2]),
                        math::sigmoid(l[3]),
                    ],
                    obj_logit: l[4],
                    cls_logits: cls,
                }
            })
            .collect();
        RawPrediction { grid, cells }
    }

    /// Normalized predicted box for a cell.
    pub fn box_at(&self, cell: usize) -> BBox {
        let gy = cell / self.grid;
        let gx = cell % self.grid;
        let c = &self.cells[cell];
        BBox::new(
            (gx as f64 + c.box_s[0]) / self.grid as f64,
            (gy as f64 + c.box_s[1]) / self.grid as f64,
            c.box_s[2],
            c.box_s[3],
        )
    }
}

/// Decoded detection at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class: ObjectKind,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_box: f64,
    pub lambda_cls: f64,
    pub lambda_dfl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_box: 7.5,
            lambda_cls: 0.5,
            // the toy head regresses boxes directly, so the distribution
            // focal term is carried with weight zero
            lambda_dfl: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_ciou: f64,
    pub l_bce: f64,
    pub l_dfl: f64,
    pub total: f64,
}

// ---------------------------------------------------------------------------
// forward pass
// ---------------------------------------------------------------------------

struct Trace {
    planes: Vec<f64>, // input as channel-major planes [3][H][W]
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    pooled: Vec<f64>, // [n_cells][head_in]
    logits: Vec<f64>, // [n_cells][HEAD_OUT]
}

/// 3x3 convolution, stride 2, zero padding 1.
fn conv_s2(
    inp: &[f64],
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    w: &[f64],
    b: &[f64],
    out_ch: usize,
) -> Vec<f64> {
    let oh = in_h / 2;
    let ow = in_w / 2;
    let mut out = vec![0.0; out_ch * oh * ow];
    for o in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o];
                for i in 0..in_ch {
                    let wbase = ((o * in_ch + i) * 3) * 3;
                    let ibase = i * in_h;
                    for ky in 0..3usize {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        let irow = (ibase + iy as usize) * in_w;
                        for kx in 0..3usize {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            acc += w[wbase + ky * 3 + kx] * inp[irow + ix as usize];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Backward of [`conv_s2`]: accumulates weight/bias grads and optionally the
/// input grad.
#[allow(clippy::too_many_arguments)]
fn conv_s2_backward(
    dout: &[f64],
    inp: &[f64],
    w: &[f64],
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    dw: &mut [f64],
    db: &mut [f64],
    mut dinp: Option<&mut [f64]>,
) {
    let oh = in_h / 2;
    let ow = in_w / 2;
    for o in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dout[(o * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for i in 0..in_ch {
                    let wbase = ((o * in_ch + i) * 3) * 3;
                    let ibase = i * in_h;
                    for ky in 0..3usize {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        let irow = (ibase + iy as usize) * in_w;
                        for kx in 0..3usize {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            let ii = irow + ix as usize;
                            dw[wbase + ky * 3 + kx] += g * inp[ii];
                            if let Some(di) = dinp.as_deref_mut() {
                                di[ii] += g * w[wbase + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// ReLU subgradient at exactly 0 is defined as 0.
fn relu_mask_backward(dz: &mut [f64], z: &[f64]) {
    for (d, &zv) in dz.iter_mut().zip(z) {
        if zv <= 0.0 {
            *d = 0.0;
        }
    }
}

fn forward_trace(theta: &ModelParams, image: &ImageTensor) -> Result<Trace, PerceptionError> {
    let cfg = &theta.config;
    if image.height != cfg.image_size || image.width != cfg.image_size {
        return Err(PerceptionError::ShapeMismatch(format!(
            "image {}x{} does not match configured {}",
            image.height, image.width, cfg.image_size
        )));
    }
    let n = cfg.image_size;
    // channel-last image -> channel-major planes
    let mut planes = vec![0.0; 3 * n * n];
    for row in 0..n {
        for col in 0..n {
            let i = (row * n + col) * 3;
            for c in 0..3 {
                planes[(c * n + row) * n + col] = image.data[i + c];
            }
        }
    }

    let z1 = conv_s2(&planes, 3, n, n, &theta.conv1_w, &theta.conv1_b, cfg.conv1_out);
    let a1 = relu(&z1);
    let r1 = n / 2;
    let z2 = conv_s2(&a1, cfg.conv1_out, r1, r1, &theta.conv2_w, &theta.conv2_b, cfg.conv2_out);
    let a2 = relu(&z2);

    // space-to-depth: each grid cell's block of conv2 activations becomes
    // that cell's feature vector
    let r2 = cfg.feat_size();
    let block = cfg.block();
    let head_in = cfg.head_in();
    let mut pooled = vec![0.0; cfg.n_cells() * head_in];
    for gy in 0..cfg.grid {
        for gx in 0..cfg.grid {
            let cell = gy * cfg.grid + gx;
            for c in 0..cfg.conv2_out {
                for by in 0..block {
                    for bx in 0..block {
                        let src = (c * r2 + gy * block + by) * r2 + gx * block + bx;
                        let k = (c * block + by) * block + bx;
                        pooled[cell * head_in + k] = a2[src];
                    }
                }
            }
        }
    }

    let mut logits = vec![0.0; cfg.n_cells() * HEAD_OUT];
    for cell in 0..cfg.n_cells() {
        let f = &pooled[cell * head_in..(cell + 1) * head_in];
        for j in 0..HEAD_OUT {
            let wrow = &theta.head_w[j * head_in..(j + 1) * head_in];
            let mut acc = theta.head_b[j];
            for (wv, fv) in wrow.iter().zip(f) {
                acc += wv * fv;
            }
            logits[cell * HEAD_OUT + j] = acc;
        }
    }

    Ok(Trace {
        planes,
        z1,
        a1,
        z2,
        pooled,
        logits,
    })
}

/// Deterministic forward pass.
pub fn forward(theta: &ModelParams, image: &ImageTensor) -> Result<RawPrediction, PerceptionError> {
    let trace = forward_trace(theta, image)?;
    Ok(RawPrediction::from_logits(theta.config.grid, &trace.logits))
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

/// Numerically stable binary cross-entropy from a logit.
fn bce(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + math::ln_1p_exp(-logit.abs())
}

/// Assigns each ground-truth box to the grid cell containing its center
/// (half-open cell intervals; centers at 1.0 clamp into the last cell).
/// When two boxes land in one cell the lower label index wins.
fn assign_targets(labels: &LabelSet, grid: usize) -> Vec<Option<usize>> {
    let mut assigned = vec![None; grid * grid];
    for (i, b) in labels.boxes.iter().enumerate() {
        let gx = ((b.cx * grid as f64) as usize).min(grid - 1);
        let gy = ((b.cy * grid as f64) as usize).min(grid - 1);
        let cell = gy * grid + gx;
        if assigned[cell].is_none() {
            assigned[cell] = Some(i);
        }
    }
    assigned
}

/// Complete IoU and its gradient with respect to the first box's
/// `(cx, cy, w, h)`. The alpha coupling term is differentiated exactly as
/// computed in the forward expression.
fn ciou_with_grad(p: &BBox, g: &BBox) -> (f64, [f64; 4]) {
    let (pl, pt, pr, pb) = p.corners();
    let (gl, gt_, gr, gb) = g.corners();

    // intersection, with min/max selections recorded for the subgradient
    let sel_r = pr <= gr; // right intersection edge follows p
    let sel_l = pl >= gl;
    let sel_b = pb <= gb;
    let sel_t = pt >= gt_;
    let iw = (if sel_r { pr } else { gr }) - (if sel_l { pl } else { gl });
    let ih = (if sel_b { pb } else { gb }) - (if sel_t { pt } else { gt_ });
    let (iw, ih) = (iw.max(0.0), ih.max(0.0));
    let inter = iw * ih;
    let area_p = (pr - pl) * (pb - pt);
    let area_g = (gr - gl) * (gb - gt_);
    let union = area_p + area_g - inter;
    let iou_v = if union > 0.0 { inter / union } else { 0.0 };

    // d inter / d (px, py, pw, ph)
    let (mut d_inter, mut d_union) = ([0.0f64; 4], [0.0f64; 4]);
    if inter > 0.0 {
        let diw_dpx = (sel_r as i32 as f64) - (sel_l as i32 as f64) * 1.0;
        let diw_dpw = 0.5 * (sel_r as i32 as f64) + 0.5 * (sel_l as i32 as f64);
        let dih_dpy = (sel_b as i32 as f64) - (sel_t as i32 as f64) * 1.0;
        let dih_dph = 0.5 * (sel_b as i32 as f64) + 0.5 * (sel_t as i32 as f64);
        d_inter = [ih * diw_dpx, iw * dih_dpy, ih * diw_dpw, iw * dih_dph];
    }
    let d_area = [0.0, 0.0, pb - pt, pr - pl];
    for k in 0..4 {
        d_union[k] = d_area[k] - d_inter[k];
    }
    let mut d_iou = [0.0f64; 4];
    if union > 0.0 {
        for k in 0..4 {
            d_iou[k] = (d_inter[k] * union - inter * d_union[k]) / (union * union);
        }
    }

    // center distance over enclosing diagonal
    let rho2 = (p.cx - g.cx) * (p.cx - g.cx) + (p.cy - g.cy) * (p.cy - g.cy);
    let enc_r = pr >= gr;
    let enc_l = pl <= gl;
    let enc_b = pb >= gb;
    let enc_t = pt <= gt_;
    let cw = (if enc_r { pr } else { gr }) - (if enc_l { pl } else { gl });
    let ch = (if enc_b { pb } else { gb }) - (if enc_t { pt } else { gt_ });
    let c2 = cw * cw + ch * ch;
    let dist = if c2 > 1e-24 { rho2 / c2 } else { 0.0 };
    let mut d_dist = [0.0f64; 4];
    if c2 > 1e-24 {
        let d_rho2 = [2.0 * (p.cx - g.cx), 2.0 * (p.cy - g.cy), 0.0, 0.0];
        let dcw_dpx = (enc_r as i32 as f64) - (enc_l as i32 as f64);
        let dcw_dpw = 0.5 * (enc_r as i32 as f64) + 0.5 * (enc_l as i32 as f64);
        let dch_dpy = (enc_b as i32 as f64) - (enc_t as i32 as f64);
        let dch_dph = 0.5 * (enc_b as i32 as f64) + 0.5 * (enc_t as i32 as f64);
        let d_c2 = [
            2.0 * cw * dcw_dpx,
            2.0 * ch * dch_dpy,
            2.0 * cw * dcw_dpw,
            2.0 * ch * dch_dph,
        ];
        for k in 0..4 {
            d_dist[k] = (d_rho2[k] * c2 - rho2 * d_c2[k]) / (c2 * c2);
        }
    }

    // aspect-consistency term: alpha * v with alpha = v / ((1 - IoU) + v)
    let four_over_pi2 = 4.0 / (core::f64::consts::PI * core::f64::consts::PI);
    let diff = math::atan(p.w / p.h) - math::atan(g.w / g.h);
    let v = four_over_pi2 * diff * diff;
    let denom = (1.0 - iou_v) + v;
    let (asp, mut d_asp) = if denom > 1e-12 {
        let asp = v * v / denom;
        let dv_dpw = 2.0 * four_over_pi2 * diff * (p.h / (p.w * p.w + p.h * p.h));
        let dv_dph = 2.0 * four_over_pi2 * diff * (-p.w / (p.w * p.w + p.h * p.h));
        let dasp_dv = (2.0 * v * denom - v * v) / (denom * denom);
        let dasp_diou = v * v / (denom * denom);
        let mut d = [0.0f64; 4];
        d[2] = dasp_dv * dv_dpw;
        d[3] = dasp_dv * dv_dph;
        for k in 0..4 {
            d[k] += dasp_diou * d_iou[k];
        }
        (asp, d)
    } else {
        (0.0, [0.0; 4])
    };

    let value = iou_v - dist - asp;
    let mut grad = [0.0f64; 4];
    for k in 0..4 {
        grad[k] = d_iou[k] - d_dist[k] - d_asp[k];
        d_asp[k] = d_asp[k]; // keep binding used
    }
    (value, grad)
}

/// Complete IoU of two boxes: IoU minus the center-distance and
/// aspect-consistency penalties. Exactly 1 for identical boxes.
pub fn ciou(a: &BBox, b: &BBox) -> Result<f64, PerceptionError> {
    if !(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0) {
        return Err(PerceptionError::DegenerateBox);
    }
    Ok(ciou_with_grad(a, b).0)
}

struct LossGrad {
    breakdown: LossBreakdown,
    /// d total / d logits, `[n_cells * HEAD_OUT]`.
    dlogits: Vec<f64>,
}

fn loss_with_grad(raw: &RawPrediction, labels: &LabelSet, weights: &LossWeights) -> LossGrad {
    let grid = raw.grid;
    let n_cells = grid * grid;
    let assigned = assign_targets(labels, grid);
    let n_assigned = assigned.iter().filter(|a| a.is_some()).count();

    let mut l_ciou = 0.0;
    let mut obj_sum = 0.0;
    let mut cls_sum = 0.0;
    let mut dlogits = vec![0.0; n_cells * HEAD_OUT];

    for cell in 0..n_cells {
        let pred = &raw.cells[cell];
        let target = assigned[cell];
        let t_obj = if target.is_some() { 1.0 } else { 0.0 };
        obj_sum += bce(pred.obj_logit, t_obj);
        // d obj_mean / d logit, scaled later by lambda_cls
        dlogits[cell * HEAD_OUT + 4] = (math::sigmoid(pred.obj_logit) - t_obj) / n_cells as f64;

        if let Some(gt_idx) = target {
            let gt_box = labels.boxes[gt_idx];
            let pred_box = raw.box_at(cell);
            let (ciou_v, ciou_g) = ciou_with_grad(&pred_box, &gt_box);
            l_ciou += 1.0 - ciou_v;

            // chain: d(1 - ciou)/d box_s, then d box_s/d logit = s(1-s);
            // centers are offsets within the cell so d cx/d s0 = 1/grid
            let scale = [1.0 / grid as f64, 1.0 / grid as f64, 1.0, 1.0];
            for k in 0..4 {
                let s = pred.box_s[k];
                dlogits[cell * HEAD_OUT + k] =
                    -ciou_g[k] * scale[k] * s * (1.0 - s) / n_assigned as f64;
            }

            let class_id = labels.classes[gt_idx].class_id();
            for k in 0..N_CLASSES {
                let t = if k == class_id { 1.0 } else { 0.0 };
                cls_sum += bce(pred.cls_logits[k], t);
                dlogits[cell * HEAD_OUT + 5 + k] = (math::sigmoid(pred.cls_logits[k]) - t)
                    / (n_assigned * N_CLASSES) as f64;
            }
        }
    }

    let l_ciou = if n_assigned > 0 {
        l_ciou / n_assigned as f64
    } else {
        0.0
    };
    let obj_mean = obj_sum / n_cells as f64;
    let cls_mean = if n_assigned > 0 {
        cls_sum / (n_assigned * N_CLASSES) as f64
    } else {
        0.0
    };
    let l_bce = obj_mean + cls_mean;
    let l_dfl = 0.0;
    let total = weights.lambda_box * l_ciou + weights.lambda_cls * l_bce + weights.lambda_dfl * l_dfl;

    // fold the weights into the logit gradient
    for cell in 0..n_cells {
        for k in 0..4 {
            dlogits[cell * HEAD_OUT + k] *= weights.lambda_box;
        }
        dlogits[cell * HEAD_OUT + 4] *= weights.lambda_cls;
        for k in 0..N_CLASSES {
            dlogits[cell * HEAD_OUT + 5 + k] *= weights.lambda_cls;
        }
    }

    LossGrad {
        breakdown: LossBreakdown {
            l_ciou,
            l_bce,
            l_dfl,
            total,
        },
        dlogits,
    }
}

/// Composite detection loss: CIoU over assigned cells, BCE over objectness
/// (all cells) and class logits (assigned cells), plus the zero-weighted
/// distribution-focal placeholder.
pub fn loss(raw: &RawPrediction, labels: &LabelSet, weights: &LossWeights) -> LossBreakdown {
    loss_with_grad(raw, labels, weights).breakdown
}

// ---------------------------------------------------------------------------
// backward pass
// ---------------------------------------------------------------------------

struct Gradients {
    input: Option<Vec<f64>>, // channel-last, same layout as ImageTensor.data
    params: Option<ModelParams>,
}

fn backward(
    theta: &ModelParams,
    trace: &Trace,
    dlogits: &[f64],
    want_input: bool,
    want_params: bool,
) -> Gradients {
    let cfg = &theta.config;
    let n = cfg.image_size;
    let r1 = n / 2;
    let r2 = cfg.feat_size();
    let block = cfg.block();
    let head_in = cfg.head_in();

    let mut grads = if want_params {
        Some(ModelParams::zeros(*cfg).expect("config already validated"))
    } else {
        None
    };

    // head backward
    let mut dpooled = vec![0.0; cfg.n_cells() * head_in];
    for cell in 0..cfg.n_cells() {
        let f = &trace.pooled[cell * head_in..(cell + 1) * head_in];
        for j in 0..HEAD_OUT {
            let g = dlogits[cell * HEAD_OUT + j];
            if g == 0.0 {
                continue;
            }
            let wrow = &theta.head_w[j * head_in..(j + 1) * head_in];
            for k in 0..head_in {
                dpooled[cell * head_in + k] += g * wrow[k];
            }
            if let Some(gr) = grads.as_mut() {
                gr.head_b[j] += g;
                let dwrow = &mut gr.head_w[j * head_in..(j + 1) * head_in];
                for k in 0..head_in {
                    dwrow[k] += g * f[k];
                }
            }
        }
    }

    // undo space-to-depth
    let mut da2 = vec![0.0; cfg.conv2_out * r2 * r2];
    for gy in 0..cfg.grid {
        for gx in 0..cfg.grid {
            let cell = gy * cfg.grid + gx;
            for c in 0..cfg.conv2_out {
                for by in 0..block {
                    for bx in 0..block {
                        let dst = (c * r2 + gy * block + by) * r2 + gx * block + bx;
                        let k = (c * block + by) * block + bx;
                        da2[dst] = dpooled[cell * head_in + k];
                    }
                }
            }
        }
    }

    relu_mask_backward(&mut da2, &trace.z2);
    let mut da1 = vec![0.0; cfg.conv1_out * r1 * r1];
    {
        let (dw2, db2) = if let Some(gr) = grads.as_mut() {
            (Some(&mut gr.conv2_w), Some(&mut gr.conv2_b))
        } else {
            (None, None)
        };
        let mut dw_scratch;
        let mut db_scratch;
        let (dw, db): (&mut [f64], &mut [f64]) = match (dw2, db2) {
            (Some(w), Some(b)) => (w, b),
            _ => {
                dw_scratch = vec![0.0; theta.conv2_w.len()];
                db_scratch = vec![0.0; theta.conv2_b.len()];
                (&mut dw_scratch, &mut db_scratch)
            }
        };
        conv_s2_backward(
            &da2,
            &trace.a1,
            &theta.conv2_w,
            cfg.conv1_out,
            r1,
            r1,
            cfg.conv2_out,
            dw,
            db,
            Some(&mut da1),
        );
    }

    relu_mask_backward(&mut da1, &trace.z1);
    let mut dplanes = if want_input {
        Some(vec![0.0; 3 * n * n])
    } else {
        None
    };
    {
        let (dw1, db1) = if let Some(gr) = grads.as_mut() {
            (Some(&mut gr.conv1_w), Some(&mut gr.conv1_b))
        } else {
            (None, None)
        };
        let mut dw_scratch;
        let mut db_scratch;
        let (dw, db): (&mut [f64], &mut [f64]) = match (dw1, db1) {
            (Some(w), Some(b)) => (w, b),
            _ => {
                dw_scratch = vec![0.0; theta.conv1_w.len()];
                db_scratch = vec![0.0; theta.conv1_b.len()];
                (&mut dw_scratch, &mut db_scratch)
            }
        };
        conv_s2_backward(
            &da1,
            &trace.planes,
            &theta.conv1_w,
            3,
            n,
            n,
            cfg.conv1_out,
            dw,
            db,
            dplanes.as_deref_mut(),
        );
    }

    // channel-major planes back to the image's channel-last layout
    let input = dplanes.map(|dp| {
        let mut di = vec![0.0; n * n * 3];
        for row in 0..n {
            for col in 0..n {
                for c in 0..3 {
                    di[(row * n + col) * 3 + c] = dp[(c * n + row) * n + col];
                }
            }
        }
        di
    });

    Gradients {
        input,
        params: grads,
    }
}

/// Exact reverse-mode gradient of the total loss with respect to every
/// pixel. The returned vector uses the image's channel-last layout.
pub fn input_gradient(
    theta: &ModelParams,
    image: &ImageTensor,
    labels: &LabelSet,
    weights: &LossWeights,
) -> Result<Vec<f64>, PerceptionError> {
    let trace = forward_trace(theta, image)?;
    let raw = RawPrediction::from_logits(theta.config.grid, &trace.logits);
    let lg = loss_with_grad(&raw, labels, weights);
    let grads = backward(theta, &trace, &lg.dlogits, true, false);
    Ok(grads.input.expect("input grad requested"))
}

/// Gradient of the mean loss over a batch with respect to the parameters,
/// returned in a `ModelParams`-shaped container. Also reports the mean loss.
pub fn param_gradient_with_loss(
    theta: &ModelParams,
    batch: &[Frame],
    weights: &LossWeights,
) -> Result<(ModelParams, LossBreakdown), PerceptionError> {
    let mut acc = ModelParams::zeros(theta.config)?;
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    for frame in batch {
        let trace = forward_trace(theta, &frame.image)?;
        let raw = RawPrediction::from_logits(theta.config.grid, &trace.logits);
        let lg = loss_with_grad(&raw, &frame.labels, weights);
        let g = backward(theta, &trace, &lg.dlogits, false, true);
        let g = g.params.expect("param grad requested");
        for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
            for (av, bv) in a.iter_mut().zip(b) {
                *av += bv;
            }
        }
        sums.0 += lg.breakdown.l_ciou;
        sums.1 += lg.breakdown.l_bce;
        sums.2 += lg.breakdown.l_dfl;
        sums.3 += lg.breakdown.total;
    }
    let m = batch.len().max(1) as f64;
    for t in acc.tensors_mut() {
        for v in t.iter_mut() {
            *v /= m;
        }
    }
    Ok((
        acc,
        LossBreakdown {
            l_ciou: sums.0 / m,
            l_bce: sums.1 / m,
            l_dfl: sums.2 / m,
            total: sums.3 / m,
        },
    ))
}

/// Gradient of the mean loss over `batch` with respect to `theta`.
pub fn param_gradient(
    theta: &ModelParams,
    batch: &[Frame],
    weights: &LossWeights,
) -> Result<ModelParams, PerceptionError> {
    Ok(param_gradient_with_loss(theta, batch, weights)?.0)
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.02,
            batch_size: 32,
            momentum: 0.9,
            seed: 7,
        }
    }
}

/// Seeded mini-batch SGD with momentum. The configured learning rate is the
/// starting value and anneals linearly to zero over the epochs, so late
/// training settles instead of bouncing around the plateau. Deterministic
/// end to end for a fixed seed; single-threaded by contract. Returns the
/// trained parameters and the per-epoch mean training loss.
pub fn train(
    config: DetectorConfig,
    dataset: &[Frame],
    tc: &TrainConfig,
    weights: &LossWeights,
) -> Result<(ModelParams, Vec<f64>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut theta = ModelParams::init(config, tc.seed)?;
    let mut velocity = ModelParams::zeros(config)?;
    let mut curve = Vec::with_capacity(tc.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..tc.epochs {
        let mut rng = stream_rng(tc.seed, rng::stream::TRAIN_SHUFFLE, epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let lr = tc.learning_rate * (1.0 - epoch as f64 / tc.epochs as f64);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(tc.batch_size.max(1)).enumerate() {
            let batch: Vec<Frame> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (grad, mean_loss) = param_gradient_with_loss(&theta, &batch, weights)?;
            if !mean_loss.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            for ((p, v), g) in theta
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for ((pv, vv), gv) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vv = tc.momentum * *vv + gv;
                    *pv -= lr * *vv;
                }
            }
            epoch_loss += mean_loss.total;
            batches += 1;
        }
        if !theta.all_finite() {
            return Err(TrainError::Diverged { epoch, batch: 0 });
        }
        curve.push(epoch_loss / batches.max(1) as f64);
    }
    Ok((theta, curve))
}

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

/// Decodes raw predictions into detections: per-cell confidence is
/// `sigmoid(objectness) * max softmax(class logits)`; cells at or above the
/// confidence threshold go through greedy class-agnostic NMS (higher
/// confidence wins, ties broken by lower cell index).
pub fn decode(raw: &RawPrediction, conf_threshold: f64, nms_iou: f64) -> Vec<Detection> {
    let mut candidates: Vec<(usize, Detection)> = Vec::new();
    for (cell, pred) in raw.cells.iter().enumerate() {
        let obj = math::sigmoid(pred.obj_logit);
        // softmax over class logits
        let m = pred
            .cls_logits
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = pred.cls_logits.iter().map(|&z| math::exp(z - m)).collect();
        let z: f64 = exps.iter().sum();
        let (mut best_k, mut best_p) = (0usize, exps[0] / z);
        for (k, &e) in exps.iter().enumerate().skip(1) {
            let p = e / z;
            if p > best_p {
                best_p = p;
                best_k = k;
            }
        }
        let confidence = obj * best_p;
        if confidence < conf_threshold {
            continue;
        }
        let b = raw.box_at(cell);
        candidates.push((
            cell,
            Detection {
                bbox: BBox::new(
                    b.cx.clamp(0.0, 1.0),
                    b.cy.clamp(0.0, 1.0),
                    b.w.clamp(0.0, 1.0),
                    b.h.clamp(0.0, 1.0),
                ),
                class: ObjectKind::from_class_id(best_k).expect("class id in range"),
                confidence,
            },
        ));
    }
    candidates.sort_by(|a, b| {
        b.1.confidence
            .partial_cmp(&a.1.confidence)
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for (_, det) in candidates {
        if kept.iter().all(|k| iou(&k.bbox, &det.bbox) < nms_iou) {
            kept.push(det);
        }
    }
    kept
}
