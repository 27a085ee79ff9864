//! Binary matrix-multiply-accumulate primitive.
//!
//! The compute quantum everywhere in this crate is an 8x8x128 tile: two
//! 8x128-bit operand tiles reduced with a bitwise op plus population count
//! into an 8x8 block of 32-bit accumulators. Three dot-product rules cover
//! the legal operand encodings:
//!
//! * Case I  (0/1 x 0/1):    `popc(w AND x)`
//! * Case II (+-1 x +-1):    `n - 2*popc(w XOR x)` with -1 stored as bit 0
//! * Case III (+-1 x 0/1):   `2*popc(w_hat AND x) - popc(x)` where `w_hat`
//!   is the stored 0/1 plane of the +-1 weights; this is the linear
//!   transform `WX = 2*W_hat*X - J*X` with the rank-1 term `J*X = popc(x)`
//!
//! Case II depends on the *logical* vector length `n`; padding bits must be
//! zero in both operands so the XOR contributes nothing to the count.

use crate::bitplane::Encoding;
use crate::error::{Error, Result};

/// Bit-level reduction operator of the mma primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmmaOp {
    And,
    Xor,
}

impl BmmaOp {
    #[inline(always)]
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            BmmaOp::And => a & b,
            BmmaOp::Xor => a ^ b,
        }
    }
}

/// Which dot-product rule a pair of operand encodings needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// Both operands encode 0/1.
    CaseI,
    /// Both operands encode -1/+1.
    CaseII,
    /// Weights encode -1/+1, features encode 0/1.
    CaseIII,
}

impl CaseKind {
    pub fn bmma_op(self) -> BmmaOp {
        match self {
            CaseKind::CaseII => BmmaOp::Xor,
            _ => BmmaOp::And,
        }
    }
}

/// Pick the dot-product rule for an encoding pair.
///
/// The (0/1 weights, +-1 features) orientation also maps to `CaseIII`;
/// the scalar product is symmetric, so callers pass the +-1 operand as
/// the first argument of [`dot1`].
pub fn select_operator(w_enc: Encoding, x_enc: Encoding) -> CaseKind {
    use Encoding::*;
    match (w_enc, x_enc) {
        (ZeroOne, ZeroOne) => CaseKind::CaseI,
        (PlusMinusOne, PlusMinusOne) => CaseKind::CaseII,
        (PlusMinusOne, ZeroOne) | (ZeroOne, PlusMinusOne) => CaseKind::CaseIII,
    }
}

/// Dot product of two packed 1-bit vectors of logical length `n`.
///
/// For `CaseIII` the first operand must be the +-1-encoded one. Both
/// slices must have equal word counts covering `n` bits, with padding
/// bits zero.
pub fn dot1(w: &[u64], x: &[u64], n: usize, case: CaseKind) -> Result<i32> {
    if w.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: x.len(),
        });
    }
    if w.len() * 64 < n {
        return Err(Error::LengthMismatch {
            left: w.len() * 64,
            right: n,
        });
    }
    let op = case.bmma_op();
    let mut pop = 0u32;
    for (&a, &b) in w.iter().zip(x) {
        pop += op.apply(a, b).count_ones();
    }
    Ok(match case {
        CaseKind::CaseI => pop as i32,
        CaseKind::CaseII => n as i32 - 2 * pop as i32,
        CaseKind::CaseIII => {
            let xpop: u32 = x.iter().map(|v| v.count_ones()).sum();
            2 * pop as i32 - xpop as i32
        }
    })
}

/// Tile operand: 8 rows x 128 bits as 16 words, row-major, 2 words per row.
pub const TILE_WORDS: usize = 16;
/// Tile accumulator: 8x8 row-major i32.
pub const TILE_ACC: usize = 64;

/// One 8x8x128 mma step: `C[i][j] += dot1(A_i, B_j, k_len, case)`.
///
/// `k_len` is the logical reduction length of this tile (<= 128); bits at
/// and beyond `k_len` must be zero in both operands.
pub fn bmma_tile(
    a: &[u64],
    b: &[u64],
    c: &mut [i32],
    case: CaseKind,
    k_len: usize,
) -> Result<()> {
    if a.len() != TILE_WORDS || b.len() != TILE_WORDS {
        return Err(Error::ShapeMismatch {
            expected: format!("{TILE_WORDS} words per operand tile"),
            got: format!("{} and {}", a.len(), b.len()),
        });
    }
    if c.len() != TILE_ACC {
        return Err(Error::ShapeMismatch {
            expected: format!("{TILE_ACC} accumulators"),
            got: format!("{}", c.len()),
        });
    }
    if k_len > 128 {
        return Err(Error::ShapeMismatch {
            expected: "k_len <= 128".into(),
            got: format!("{k_len}"),
        });
    }
    let op = match case {
        CaseKind::CaseI => TileOp::And,
        CaseKind::CaseII => TileOp::XorBalanced,
        CaseKind::CaseIII => TileOp::AndSignedA,
    };
    tile_8x8(a, 2, b, 2, k_len as i32, op, c, 8);
    Ok(())
}

/// Tile-level reduction flavor. `AndSignedA`/`AndSignedB` mark which side
/// carries the +-1 encoding (the rank-1 popc correction applies to the
/// other side).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TileOp {
    And,
    XorBalanced,
    AndSignedA,
    AndSignedB,
}

impl TileOp {
    pub(crate) fn for_case(case: CaseKind, pm_is_a: bool) -> TileOp {
        match case {
            CaseKind::CaseI => TileOp::And,
            CaseKind::CaseII => TileOp::XorBalanced,
            CaseKind::CaseIII => {
                if pm_is_a {
                    TileOp::AndSignedA
                } else {
                    TileOp::AndSignedB
                }
            }
        }
    }
}

/// 8x8 accumulation over one 128-bit k-chunk (`k_bits` logical bits).
///
/// `a` and `b` point at the chunk's two words of each tile's row 0;
/// `a_stride`/`b_stride` are the word strides between rows. `c` is the
/// 8x8 accumulator with row stride `c_stride`. Kept `inline(always)` so
/// the popcnt-enabled wrappers in the gemm driver clone it.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
pub(crate) fn tile_8x8(
    a: &[u64],
    a_stride: usize,
    b: &[u64],
    b_stride: usize,
    k_bits: i32,
    op: TileOp,
    c: &mut [i32],
    c_stride: usize,
) {
    // Shared per-row popcounts for the signed cases; one pass per tile
    // instead of one per output element.
    let mut bpop = [0i32; 8];
    if op == TileOp::AndSignedA {
        for (j, p) in bpop.iter_mut().enumerate() {
            let o = j * b_stride;
            *p = (b[o].count_ones() + b[o + 1].count_ones()) as i32;
        }
    }
    let mut apop = [0i32; 8];
    if op == TileOp::AndSignedB {
        for (i, p) in apop.iter_mut().enumerate() {
            let o = i * a_stride;
            *p = (a[o].count_ones() + a[o + 1].count_ones()) as i32;
        }
    }
    for i in 0..8 {
        let a0 = a[i * a_stride];
        let a1 = a[i * a_stride + 1];
        for j in 0..8 {
            let b0 = b[j * b_stride];
            let b1 = b[j * b_stride + 1];
            let pop = match op {
                TileOp::XorBalanced => (a0 ^ b0).count_ones() + (a1 ^ b1).count_ones(),
                _ => (a0 & b0).count_ones() + (a1 & b1).count_ones(),
            };
            c[i * c_stride + j] += match op {
                TileOp::And => pop as i32,
                TileOp::XorBalanced => k_bits - 2 * pop as i32,
                TileOp::AndSignedA => 2 * pop as i32 - bpop[j],
                TileOp::AndSignedB => 2 * pop as i32 - apop[i],
            };
        }
    }
}
