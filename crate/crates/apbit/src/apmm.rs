//! Arbitrary-precision tiled matrix multiplication.
//!
//! `apmm` multiplies a p-bit weight matrix `W` (M x K) by a q-bit feature
//! matrix `X` stored pre-transposed (N x K), producing the 32-bit output
//! `Y[i][j] = sum_k W[i][k] * X[j][k]`.
//!
//! The p weight planes and q feature planes are batched virtually into a
//! pM x K by qN x K binary product. The virtual pM x qN output grid is
//! tiled into `b_m x b_n` blocks; each block stages a `b_m x b_k` weight
//! tile and a `b_n x b_k` feature tile per K step (the modeled
//! shared-memory traffic), keeps its accumulators live for the whole K
//! loop (the modeled fragment), and computes 8x8x128 mma tiles over the
//! staged data. Block results are folded into `Y` with the `2^(s+t)` bit
//! combination weights, so `Y` never depends on the tile configuration.
//!
//! An optional element-wise routine (BN -> ReLU -> quantize) turns the
//! 32-bit result into a packed low-bit tensor before it is written out;
//! only the packed form counts as main-buffer traffic in that case.

use crate::bitplane::{self, BitPlaneTensor, Encoding, IntTensor};
use crate::bmma::{self, select_operator, CaseKind, TileOp};
use crate::counters::KernelProbe;
use crate::error::{Error, Result};

/// Block tiling sizes and the derived per-warp split.
///
/// `b_m`/`b_n` come from the `{16, 32, 64, 128}` grid, `b_k` is a
/// multiple of 128. The derived warp tiles split a block across 8 warps
/// (`w_m = b_m/4`, `w_n = b_n/2`, `w_k = b_k`); execution walks 8x8x128
/// primitive tiles inside the block either way, so the warp split is
/// bookkeeping, not a numeric knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    b_m: usize,
    b_n: usize,
    b_k: usize,
}

pub const BLOCK_SIZES: [usize; 4] = [16, 32, 64, 128];

impl TileConfig {
    pub fn new(b_m: usize, b_n: usize, b_k: usize) -> Result<Self> {
        if !BLOCK_SIZES.contains(&b_m) || !BLOCK_SIZES.contains(&b_n) {
            return Err(Error::BadTileConfig(format!(
                "b_m and b_n must be one of {BLOCK_SIZES:?}, got {b_m} x {b_n}"
            )));
        }
        if b_k == 0 || b_k % 128 != 0 {
            return Err(Error::BadTileConfig(format!(
                "b_k must be a positive multiple of 128, got {b_k}"
            )));
        }
        Ok(Self { b_m, b_n, b_k })
    }

    pub fn b_m(&self) -> usize {
        self.b_m
    }

    pub fn b_n(&self) -> usize {
        self.b_n
    }

    pub fn b_k(&self) -> usize {
        self.b_k
    }

    pub fn w_m(&self) -> usize {
        self.b_m / 4
    }

    pub fn w_n(&self) -> usize {
        self.b_n / 2
    }

    pub fn w_k(&self) -> usize {
        self.b_k
    }

    /// The full legal `(b_m, b_n)` grid at the default `b_k = 128`.
    pub fn grid() -> Vec<TileConfig> {
        let mut v = Vec::with_capacity(16);
        for &b_m in &BLOCK_SIZES {
            for &b_n in &BLOCK_SIZES {
                v.push(TileConfig { b_m, b_n, b_k: 128 });
            }
        }
        v
    }
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            b_m: 64,
            b_n: 64,
            b_k: 128,
        }
    }
}

/// Per-output-column batch-norm parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

/// Floor quantization `q = floor((v - zero_point) / scale)` clamped to
/// `[0, 2^out_bits - 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub zero_point: i32,
    pub scale: f64,
    pub out_bits: u8,
}

/// Element-wise post-processing chain applied to 32-bit accumulator
/// outputs, in the fixed order BN -> ReLU -> quantize.
///
/// Real-valued intermediates stay in double precision; the single floor
/// happens at quantization (or at the end, if BN is present without
/// quantization). Out-of-range quantized values are clamped, not wrapped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElementRoutine {
    pub bn: Option<BnParams>,
    pub relu: bool,
    pub quant: Option<QuantParams>,
}

impl ElementRoutine {
    pub fn validate(&self, cols: usize) -> Result<()> {
        if let Some(bn) = &self.bn {
            for (name, v) in [
                ("mean", &bn.mean),
                ("var", &bn.var),
                ("gamma", &bn.gamma),
                ("beta", &bn.beta),
            ] {
                if v.len() != cols {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{cols} bn.{name} entries"),
                        got: format!("{}", v.len()),
                    });
                }
            }
        }
        if let Some(q) = &self.quant {
            if q.scale <= 0.0 {
                return Err(Error::Format(format!(
                    "quantization scale must be > 0, got {}",
                    q.scale
                )));
            }
            if !(1..=8).contains(&q.out_bits) {
                return Err(Error::Format(format!(
                    "quantization bits must be in [1, 8], got {}",
                    q.out_bits
                )));
            }
        }
        Ok(())
    }

    /// Apply the chain to one accumulator value in column `col`.
    pub fn apply(&self, x: i32, col: usize) -> i32 {
        let mut v = x as f64;
        if let Some(bn) = &self.bn {
            v = (v - bn.mean[col]) / (bn.var[col] + bn.eps).sqrt() * bn.gamma[col] + bn.beta[col];
        }
        if self.relu {
            v = v.max(0.0);
        }
        match &self.quant {
            Some(q) => quantize_scalar(v, q),
            None => v.floor() as i32,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bn.is_none() && !self.relu && self.quant.is_none()
    }
}

pub fn quantize_scalar(v: f64, q: &QuantParams) -> i32 {
    let raw = ((v - q.zero_point as f64) / q.scale).floor();
    let max = (1i32 << q.out_bits) - 1;
    (raw as i32).clamp(0, max)
}

/// Result of [`apmm`]: raw 32-bit, or packed low-bit when the routine
/// quantizes.
#[derive(Debug, Clone, PartialEq)]
pub enum ApmmOutput {
    Int32(IntTensor),
    Packed(BitPlaneTensor),
}

impl ApmmOutput {
    pub fn int32(self) -> Result<IntTensor> {
        match self {
            ApmmOutput::Int32(t) => Ok(t),
            ApmmOutput::Packed(_) => Err(Error::Format("expected 32-bit output".into())),
        }
    }

    pub fn packed(self) -> Result<BitPlaneTensor> {
        match self {
            ApmmOutput::Packed(t) => Ok(t),
            ApmmOutput::Int32(_) => Err(Error::Format("expected packed output".into())),
        }
    }
}

/// Check an encoding pair for the dot-product rules, rejecting +-1 claims
/// on multi-bit operands.
pub fn legal_case(w_enc: Encoding, p: u8, x_enc: Encoding, q: u8) -> Result<CaseKind> {
    if (w_enc == Encoding::PlusMinusOne && p != 1) || (x_enc == Encoding::PlusMinusOne && q != 1) {
        return Err(Error::IllegalEncodingPair {
            weights: w_enc,
            features: x_enc,
        });
    }
    Ok(select_operator(w_enc, x_enc))
}

/// Predicted staging traffic of one [`apmm`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficPlan {
    /// Bytes staged per block per full-width K step: `(b_m*b_k + b_n*b_k) / 8`.
    pub bytes_per_block_step: u64,
    /// Blocks in the virtual pM x qN output grid.
    pub blocks: u64,
    /// K steps per block.
    pub steps: u64,
    /// Total staged bytes over the whole call.
    pub total_bytes: u64,
}

/// Evaluate the staging-traffic model for a pM x K by qN x K product.
///
/// Every block stages its full `b_m x b_k` weight tile and `b_n x b_k`
/// feature tile per K step (edge blocks stage zero fill), so the total is
/// exact, not an estimate; [`apmm_traced`] must reproduce it to the byte.
pub fn plan_traffic(m: usize, n: usize, k: usize, p: u8, q: u8, cfg: &TileConfig) -> TrafficPlan {
    let vm = p as u64 * m as u64;
    let vn = q as u64 * n as u64;
    let blocks = vm.div_ceil(cfg.b_m as u64) * vn.div_ceil(cfg.b_n as u64);
    let per_row_bytes = (cfg.b_m as u64 + cfg.b_n as u64) / 8;
    let mut step_bytes_total = 0u64;
    let mut steps = 0u64;
    let mut k0 = 0usize;
    while k0 < k {
        let kw = cfg.b_k.min(k - k0) as u64;
        step_bytes_total += per_row_bytes * kw;
        steps += 1;
        k0 += cfg.b_k;
    }
    TrafficPlan {
        bytes_per_block_step: per_row_bytes * cfg.b_k as u64,
        blocks,
        steps,
        total_bytes: blocks * step_bytes_total,
    }
}

/// Arbitrary-precision matrix multiply. See module docs.
pub fn apmm(
    w: &BitPlaneTensor,
    x: &BitPlaneTensor,
    cfg: &TileConfig,
    routine: Option<&ElementRoutine>,
) -> Result<ApmmOutput> {
    apmm_traced(w, x, cfg, routine, &KernelProbe::new())
}

/// [`apmm`] recording staged bytes, main-buffer writes, tile and combine
/// op counts into `probe`.
pub fn apmm_traced(
    w: &BitPlaneTensor,
    x: &BitPlaneTensor,
    cfg: &TileConfig,
    routine: Option<&ElementRoutine>,
    probe: &KernelProbe,
) -> Result<ApmmOutput> {
    let (m, k) = mat_dims(w)?;
    let (n, k2) = mat_dims(x)?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            expected: format!("matching inner dims, weights K={k}"),
            got: format!("features K={k2}"),
        });
    }
    if k % 128 != 0 {
        return Err(Error::ShapeMismatch {
            expected: "K a multiple of 128 (zero-pad with bitplane::zero_pad_inner)".into(),
            got: format!("K={k}"),
        });
    }
    let case = legal_case(w.encoding(), w.bits(), x.encoding(), x.bits())?;
    if let Some(r) = routine {
        r.validate(n)?;
    }
    let op = TileOp::for_case(case, w.encoding() == Encoding::PlusMinusOne);

    let y = gemm_blocks(w, x, m, n, k, cfg, op, probe);

    finish_output(y, routine, probe)
}

/// Reference plane-by-plane route: one 1-bit product per `(s, t)` plane
/// pair, then an explicit bit combination. Numerically identical to the
/// virtually batched path; kept unblocked and unstaged as a second route
/// for equivalence tests.
pub fn apmm_planewise(w: &BitPlaneTensor, x: &BitPlaneTensor) -> Result<IntTensor> {
    let (m, k) = mat_dims(w)?;
    let (n, k2) = mat_dims(x)?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            expected: format!("matching inner dims, weights K={k}"),
            got: format!("features K={k2}"),
        });
    }
    let case = legal_case(w.encoding(), w.bits(), x.encoding(), x.bits())?;
    let swap = case == CaseKind::CaseIII && w.encoding() != Encoding::PlusMinusOne;
    let mut parts = Vec::with_capacity(w.bits() as usize * x.bits() as usize);
    for s in 0..w.bits() as usize {
        for t in 0..x.bits() as usize {
            let mut part = vec![0i32; m * n];
            for i in 0..m {
                let wrow = w.run(s, i);
                for j in 0..n {
                    let xrow = x.run(t, j);
                    part[i * n + j] = if swap {
                        bmma::dot1(xrow, wrow, k, case)?
                    } else {
                        bmma::dot1(wrow, xrow, k, case)?
                    };
                }
            }
            parts.push(IntTensor::new(vec![m, n], part)?);
        }
    }
    bitplane::combine(&parts, w.bits(), x.bits())
}

/// Quantize-and-pack: apply `routine` (which must quantize) to every
/// element of `y` and split the results into packed zero-one planes.
/// Equals `decompose(routine(y), out_bits, ZeroOne)` by construction.
pub fn pack_output(y: &IntTensor, routine: &ElementRoutine) -> Result<BitPlaneTensor> {
    let quant = routine
        .quant
        .as_ref()
        .ok_or_else(|| Error::Format("pack_output requires a quantization step".into()))?;
    let cols = *y.dims().last().ok_or_else(|| Error::ShapeMismatch {
        expected: "rank >= 1".into(),
        got: "rank 0".into(),
    })?;
    routine.validate(cols)?;
    let quantized: Vec<i32> = y
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &v)| routine.apply(v, idx % cols))
        .collect();
    let qt = IntTensor::new(y.dims().to_vec(), quantized)?;
    bitplane::decompose(&qt, quant.out_bits, Encoding::ZeroOne)
}

fn finish_output(
    y: IntTensor,
    routine: Option<&ElementRoutine>,
    probe: &KernelProbe,
) -> Result<ApmmOutput> {
    match routine {
        Some(r) if r.quant.is_some() => {
            let packed = pack_output(&y, r)?;
            let bits = packed.bits() as u64 * packed.num_elements() as u64;
            probe.traffic.add_written_main(bits.div_ceil(8));
            Ok(ApmmOutput::Packed(packed))
        }
        Some(r) if !r.is_empty() => {
            let cols = *y.dims().last().unwrap();
            let vals: Vec<i32> = y
                .values()
                .iter()
                .enumerate()
                .map(|(idx, &v)| r.apply(v, idx % cols))
                .collect();
            let out = IntTensor::new(y.dims().to_vec(), vals)?;
            probe.traffic.add_written_main(4 * out.len() as u64);
            Ok(ApmmOutput::Int32(out))
        }
        _ => {
            probe.traffic.add_written_main(4 * y.len() as u64);
            Ok(ApmmOutput::Int32(y))
        }
    }
}

fn mat_dims(t: &BitPlaneTensor) -> Result<(usize, usize)> {
    match t.dims() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::ShapeMismatch {
            expected: "rank-2 bit-plane matrix".into(),
            got: format!("{other:?}"),
        }),
    }
}

/// Blocked virtual-batch GEMM core shared by [`apmm_traced`].
#[allow(clippy::too_many_arguments)]
fn gemm_blocks(
    w: &BitPlaneTensor,
    x: &BitPlaneTensor,
    m: usize,
    n: usize,
    k: usize,
    cfg: &TileConfig,
    op: TileOp,
    probe: &KernelProbe,
) -> IntTensor {
    let (p, q) = (w.bits() as usize, x.bits() as usize);
    let (vm, vn) = (p * m, q * n);
    let (b_m, b_n, b_k) = (cfg.b_m, cfg.b_n, cfg.b_k);
    let stride = b_k / 64;
    let use_popcnt = popcnt_available();

    let mut y = vec![0i32; m * n];
    let mut a_stage = vec![0u64; b_m * stride];
    let mut b_stage = vec![0u64; b_n * stride];
    let mut acc = vec![0i32; b_m * b_n];

    let mut staged = 0u64;
    let mut tiles = 0u64;

    for bi in 0..vm.div_ceil(b_m) {
        let row0 = bi * b_m;
        let rows = b_m.min(vm - row0);
        for bj in 0..vn.div_ceil(b_n) {
            let col0 = bj * b_n;
            let cols = b_n.min(vn - col0);
            acc.fill(0);

            let mut k0 = 0usize;
            while k0 < k {
                let kw = b_k.min(k - k0); // multiple of 128
                let kwords = kw / 64;
                stage_tile(&mut a_stage, stride, w, m, row0, rows, k0 / 64, kwords);
                stage_tile(&mut b_stage, stride, x, n, col0, cols, k0 / 64, kwords);
                staged += ((b_m + b_n) * kw) as u64 / 8;

                let groups_r = rows.div_ceil(8);
                let groups_c = cols.div_ceil(8);
                let chunks = kw / 128;
                compute_block(
                    use_popcnt, &a_stage, &b_stage, stride, groups_r, groups_c, chunks, op,
                    &mut acc, b_n,
                );
                tiles += (groups_r * groups_c * chunks) as u64;
                k0 += b_k;
            }

            // Fold the block into Y with the bit-combination weights.
            for r in 0..rows {
                let vr = row0 + r;
                let (s, i) = (vr / m, vr % m);
                for c in 0..cols {
                    let vc = col0 + c;
                    let (t, j) = (vc / n, vc % n);
                    y[i * n + j] += acc[r * b_n + c] << (s + t);
                }
            }
            probe.work.add_combine_ops((rows * cols) as u64);
        }
    }
    probe.traffic.add_staged(staged);
    probe.work.add_bmma_tiles(tiles);
    IntTensor::new(vec![m, n], y).expect("internal shape")
}

/// Copy `rows` virtual rows starting at `row0` into the staging buffer,
/// zero-filling rows beyond the virtual extent and words beyond `kwords`.
/// Virtual row `v` maps to plane `v / logical_rows`, row `v % logical_rows`.
fn stage_tile(
    stage: &mut [u64],
    stride: usize,
    t: &BitPlaneTensor,
    logical_rows: usize,
    row0: usize,
    rows: usize,
    word0: usize,
    kwords: usize,
) {
    stage.fill(0);
    let run_words = t.run_words();
    for r in 0..rows {
        let v = row0 + r;
        let (plane, row) = (v / logical_rows, v % logical_rows);
        let src = &t.plane(plane)[row * run_words + word0..row * run_words + word0 + kwords];
        stage[r * stride..r * stride + kwords].copy_from_slice(src);
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn compute_block_generic(
    a: &[u64],
    b: &[u64],
    stride: usize,
    groups_r: usize,
    groups_c: usize,
    chunks: usize,
    op: TileOp,
    acc: &mut [i32],
    acc_stride: usize,
) {
    for gi in 0..groups_r {
        for gj in 0..groups_c {
            let c0 = gi * 8 * acc_stride + gj * 8;
            for ch in 0..chunks {
                bmma::tile_8x8(
                    &a[gi * 8 * stride + ch * 2..],
                    stride,
                    &b[gj * 8 * stride + ch * 2..],
                    stride,
                    128,
                    op,
                    &mut acc[c0..],
                    acc_stride,
                );
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
#[allow(clippy::too_many_arguments)]
unsafe fn compute_block_popcnt(
    a: &[u64],
    b: &[u64],
    stride: usize,
    groups_r: usize,
    groups_c: usize,
    chunks: usize,
    op: TileOp,
    acc: &mut [i32],
    acc_stride: usize,
) {
    compute_block_generic(a, b, stride, groups_r, groups_c, chunks, op, acc, acc_stride);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn compute_block(
    use_popcnt: bool,
    a: &[u64],
    b: &[u64],
    stride: usize,
    groups_r: usize,
    groups_c: usize,
    chunks: usize,
    op: TileOp,
    acc: &mut [i32],
    acc_stride: usize,
) {
    #[cfg(target_arch = "x86_64")]
    if use_popcnt {
        // Safety: gated on runtime popcnt detection.
        unsafe {
            compute_block_popcnt(a, b, stride, groups_r, groups_c, chunks, op, acc, acc_stride);
        }
        return;
    }
    let _ = use_popcnt;
    compute_block_generic(a, b, stride, groups_r, groups_c, chunks, op, acc, acc_stride);
}

pub(crate) fn popcnt_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("popcnt")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}
