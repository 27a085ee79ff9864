//! Bit-plane tensor representation.
//!
//! A `p`-bit integer tensor is stored as `p` separate 1-bit planes: plane
//! `t` holds bit `t` of every element. Planes are packed into 64-bit words,
//! little-endian bit order within a word (bit index `i` of a run lives in
//! word `i / 64`, bit `i % 64`). The innermost dimension of `dims` is the
//! "run": each run starts on a word boundary and is padded with zero bits
//! up to a whole number of words. For a matrix that means rows padded to
//! word boundaries; for a channel-major feature map it is the channel run.
//!
//! Tensors are immutable once built and safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::counters::WorkCounter;
use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

/// Interpretation of stored bits.
///
/// `ZeroOne` stores the value of the bit itself; `PlusMinusOne` stores
/// bit 0 for value -1 and bit 1 for value +1 and is only legal for 1-bit
/// tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Encoding {
    ZeroOne,
    PlusMinusOne,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::ZeroOne => "zero-one",
            Encoding::PlusMinusOne => "plus-minus-one",
        }
    }
}

/// Dense 32-bit signed integer tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    dims: Vec<usize>,
    values: Vec<i32>,
}

impl IntTensor {
    pub fn new(dims: Vec<usize>, values: Vec<i32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} values for dims {dims:?}"),
                got: format!("{} values", values.len()),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            values: vec![0; n],
        }
    }

    /// Row-major 2-D constructor, mostly for tests and small examples.
    pub fn from_rows(rows: &[Vec<i32>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            dims: vec![r, c],
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i32] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reinterpret the same values under new dims of equal volume.
    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("volume {}", self.values.len()),
                got: format!("dims {dims:?} (volume {n})"),
            });
        }
        self.dims = dims;
        Ok(self)
    }
}

/// A `bits`-plane packed tensor. See module docs for the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlaneTensor {
    dims: Vec<usize>,
    bits: u8,
    encoding: Encoding,
    planes: Vec<Vec<u64>>,
}

impl BitPlaneTensor {
    pub fn new_zeroed(dims: Vec<usize>, bits: u8, encoding: Encoding) -> Result<Self> {
        check_bits(bits, encoding)?;
        if dims.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: "rank >= 1".into(),
                got: "rank 0".into(),
            });
        }
        let run_len = *dims.last().unwrap();
        let runs: usize = dims[..dims.len() - 1].iter().product();
        let words = runs * run_len.div_ceil(WORD_BITS);
        Ok(Self {
            dims,
            bits,
            encoding,
            planes: vec![vec![0u64; words]; bits as usize],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    /// Length of the innermost (packed) dimension.
    pub fn run_len(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Number of runs (= product of all outer dimensions).
    pub fn num_runs(&self) -> usize {
        self.dims[..self.dims.len() - 1].iter().product()
    }

    /// Words each run occupies, including padding.
    pub fn run_words(&self) -> usize {
        self.run_len().div_ceil(WORD_BITS)
    }

    pub fn num_elements(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn plane(&self, t: usize) -> &[u64] {
        &self.planes[t]
    }

    pub(crate) fn plane_mut(&mut self, t: usize) -> &mut [u64] {
        &mut self.planes[t]
    }

    /// Build from raw plane words; the result must pass [`Self::validate`].
    pub(crate) fn from_raw_planes(
        dims: Vec<usize>,
        bits: u8,
        encoding: Encoding,
        planes: Vec<Vec<u64>>,
    ) -> Result<Self> {
        let t = Self {
            dims,
            bits,
            encoding,
            planes,
        };
        t.validate()?;
        Ok(t)
    }

    /// Packed words of one run in one plane.
    pub fn run(&self, t: usize, run: usize) -> &[u64] {
        let w = self.run_words();
        &self.planes[t][run * w..(run + 1) * w]
    }

    pub(crate) fn set_bit(&mut self, t: usize, run: usize, pos: usize, bit: bool) {
        debug_assert!(pos < self.run_len());
        let w = self.run_words();
        let word = run * w + pos / WORD_BITS;
        let mask = 1u64 << (pos % WORD_BITS);
        if bit {
            self.planes[t][word] |= mask;
        } else {
            self.planes[t][word] &= !mask;
        }
    }

    pub fn get_bit(&self, t: usize, run: usize, pos: usize) -> bool {
        debug_assert!(pos < self.run_len());
        let w = self.run_words();
        (self.planes[t][run * w + pos / WORD_BITS] >> (pos % WORD_BITS)) & 1 == 1
    }

    /// Decoded integer value of one element.
    pub fn get_element(&self, run: usize, pos: usize) -> i32 {
        match self.encoding {
            Encoding::ZeroOne => {
                let mut v = 0i32;
                for t in 0..self.bits as usize {
                    v |= (self.get_bit(t, run, pos) as i32) << t;
                }
                v
            }
            Encoding::PlusMinusOne => 2 * self.get_bit(0, run, pos) as i32 - 1,
        }
    }

    /// Check structural invariants: plane count, plane sizes, and that every
    /// padding bit beyond the logical run length is zero.
    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits, self.encoding)?;
        if self.planes.len() != self.bits as usize {
            return Err(Error::Format(format!(
                "expected {} planes, found {}",
                self.bits,
                self.planes.len()
            )));
        }
        let words = self.num_runs() * self.run_words();
        let tail = self.run_len() % WORD_BITS;
        for (t, plane) in self.planes.iter().enumerate() {
            if plane.len() != words {
                return Err(Error::Format(format!(
                    "plane {t}: expected {words} words, found {}",
                    plane.len()
                )));
            }
            if tail != 0 {
                let mask = !0u64 << tail;
                for run in 0..self.num_runs() {
                    let last = plane[run * self.run_words() + self.run_words() - 1];
                    if last & mask != 0 {
                        return Err(Error::Format(format!(
                            "plane {t}, run {run}: nonzero padding bits"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_bits(bits: u8, encoding: Encoding) -> Result<()> {
    if !(1..=8).contains(&bits) {
        return Err(Error::Format(format!("bits must be in [1, 8], got {bits}")));
    }
    if encoding == Encoding::PlusMinusOne && bits != 1 {
        return Err(Error::BadEncoding { bits });
    }
    Ok(())
}

/// Split an integer tensor into `bits` packed 1-bit planes.
///
/// `ZeroOne` requires every value in `[0, 2^bits - 1]`; plane `t` gets
/// `(v >> t) & 1`. `PlusMinusOne` requires `bits == 1` and values in
/// `{-1, +1}`, stored as -1 -> bit 0, +1 -> bit 1.
pub fn decompose(x: &IntTensor, bits: u8, encoding: Encoding) -> Result<BitPlaneTensor> {
    decompose_inner(x, bits, encoding, None)
}

/// Same as [`decompose`] but ticks `work.decompose_ops` once per
/// (element, plane) extraction.
pub fn decompose_traced(
    x: &IntTensor,
    bits: u8,
    encoding: Encoding,
    work: &WorkCounter,
) -> Result<BitPlaneTensor> {
    decompose_inner(x, bits, encoding, Some(work))
}

fn decompose_inner(
    x: &IntTensor,
    bits: u8,
    encoding: Encoding,
    work: Option<&WorkCounter>,
) -> Result<BitPlaneTensor> {
    check_bits(bits, encoding)?;
    let max = (1i32 << bits) - 1;
    let mut out = BitPlaneTensor::new_zeroed(x.dims().to_vec(), bits, encoding)?;
    let run_len = out.run_len();
    let run_words = out.run_words();

    for (idx, &v) in x.values().iter().enumerate() {
        let stored: u32 = match encoding {
            Encoding::ZeroOne => {
                if v < 0 || v > max {
                    return Err(Error::ValueOutOfRange {
                        value: v,
                        bits,
                        encoding: encoding.name(),
                    });
                }
                v as u32
            }
            Encoding::PlusMinusOne => match v {
                -1 => 0,
                1 => 1,
                _ => {
                    return Err(Error::ValueOutOfRange {
                        value: v,
                        bits,
                        encoding: encoding.name(),
                    })
                }
            },
        };
        let run = idx / run_len;
        let pos = idx % run_len;
        let word = run * run_words + pos / WORD_BITS;
        let mask = 1u64 << (pos % WORD_BITS);
        for t in 0..bits as usize {
            if (stored >> t) & 1 == 1 {
                out.plane_mut(t)[word] |= mask;
            }
        }
    }
    if let Some(w) = work {
        w.add_decompose_ops(bits as u64 * x.len() as u64);
    }
    Ok(out)
}

/// Reassemble the 32-bit output `Y = sum_{s,t} parts[s*q + t] * 2^(s+t)`.
///
/// `parts` must hold exactly `p*q` tensors of identical dims, indexed by
/// weight plane `s` (major) and feature plane `t` (minor). Arithmetic is
/// signed 32-bit; overflow is a caller error (panics in debug builds).
pub fn combine(parts: &[IntTensor], p: u8, q: u8) -> Result<IntTensor> {
    combine_inner(parts, p, q, None)
}

/// Same as [`combine`] but ticks `work.combine_ops` once per weighted add.
pub fn combine_traced(parts: &[IntTensor], p: u8, q: u8, work: &WorkCounter) -> Result<IntTensor> {
    combine_inner(parts, p, q, Some(work))
}

fn combine_inner(
    parts: &[IntTensor],
    p: u8,
    q: u8,
    work: Option<&WorkCounter>,
) -> Result<IntTensor> {
    let expected = p as usize * q as usize;
    if parts.len() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("{expected} component tensors (p={p}, q={q})"),
            got: format!("{}", parts.len()),
        });
    }
    let dims = parts[0].dims().to_vec();
    for part in parts {
        if part.dims() != dims.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: format!("{dims:?}"),
                got: format!("{:?}", part.dims()),
            });
        }
    }
    let mut acc = vec![0i32; parts[0].len()];
    for s in 0..p as usize {
        for t in 0..q as usize {
            let weight = 1i32 << (s + t);
            let part = &parts[s * q as usize + t];
            for (a, &v) in acc.iter_mut().zip(part.values()) {
                *a += v * weight;
            }
        }
    }
    if let Some(w) = work {
        w.add_combine_ops(expected as u64 * parts[0].len() as u64);
    }
    IntTensor::new(dims, acc)
}

/// Inverse of [`decompose`]: decode every element back to an integer.
pub fn reconstruct(t: &BitPlaneTensor) -> IntTensor {
    let run_len = t.run_len();
    let n = t.num_elements();
    let mut values = Vec::with_capacity(n);
    for idx in 0..n {
        values.push(t.get_element(idx / run_len, idx % run_len));
    }
    IntTensor {
        dims: t.dims().to_vec(),
        values,
    }
}

/// Zero-pad the innermost dimension up to a multiple of `multiple`.
///
/// Operates in the value domain, so it is only meaningful for data whose
/// value 0 is a no-op under the dot-product rules (zero-one encodings).
/// Plus/minus-one data cannot represent value 0 and will be rejected by
/// [`decompose`] afterwards.
pub fn zero_pad_inner(x: &IntTensor, multiple: usize) -> IntTensor {
    assert!(multiple > 0);
    let old = *x.dims().last().expect("rank >= 1");
    let new = old.div_ceil(multiple) * multiple;
    if new == old {
        return x.clone();
    }
    let runs: usize = x.dims()[..x.dims().len() - 1].iter().product();
    let mut values = vec![0i32; runs * new];
    for r in 0..runs {
        values[r * new..r * new + old].copy_from_slice(&x.values()[r * old..(r + 1) * old]);
    }
    let mut dims = x.dims().to_vec();
    *dims.last_mut().unwrap() = new;
    IntTensor { dims, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits2d(t: &BitPlaneTensor, plane: usize) -> Vec<Vec<i32>> {
        let (rows, cols) = (t.dims()[0], t.dims()[1]);
        (0..rows)
            .map(|r| (0..cols).map(|c| t.get_bit(plane, r, c) as i32).collect())
            .collect()
    }

    #[test]
    fn decompose_two_bit_scalar() {
        let x = IntTensor::from_rows(&[vec![2]]);
        let t = decompose(&x, 2, Encoding::ZeroOne).unwrap();
        assert_eq!(bits2d(&t, 0), vec![vec![0]]);
        assert_eq!(bits2d(&t, 1), vec![vec![1]]);
    }

    #[test]
    fn decompose_two_bit_matrix() {
        let x = IntTensor::from_rows(&[vec![0, 1], vec![3, 2]]);
        let t = decompose(&x, 2, Encoding::ZeroOne).unwrap();
        assert_eq!(bits2d(&t, 0), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(bits2d(&t, 1), vec![vec![0, 0], vec![1, 1]]);
    }

    #[test]
    fn decompose_plus_minus_one_maps_minus_one_to_zero() {
        let x = IntTensor::from_rows(&[vec![-1, 1]]);
        let t = decompose(&x, 1, Encoding::PlusMinusOne).unwrap();
        assert_eq!(bits2d(&t, 0), vec![vec![0, 1]]);
    }

    #[test]
    fn decompose_rejects_out_of_range() {
        let x = IntTensor::from_rows(&[vec![4]]);
        assert!(matches!(
            decompose(&x, 2, Encoding::ZeroOne),
            Err(Error::ValueOutOfRange { value: 4, .. })
        ));
        let neg = IntTensor::from_rows(&[vec![-1]]);
        assert!(decompose(&neg, 3, Encoding::ZeroOne).is_err());
        let zero = IntTensor::from_rows(&[vec![0]]);
        assert!(decompose(&zero, 1, Encoding::PlusMinusOne).is_err());
    }

    #[test]
    fn decompose_rejects_multibit_plus_minus_one() {
        let x = IntTensor::from_rows(&[vec![1]]);
        assert!(matches!(
            decompose(&x, 2, Encoding::PlusMinusOne),
            Err(Error::BadEncoding { bits: 2 })
        ));
    }

    #[test]
    fn combine_one_by_two() {
        let parts = [
            IntTensor::from_rows(&[vec![1]]),
            IntTensor::from_rows(&[vec![3]]),
        ];
        let y = combine(&parts, 1, 2).unwrap();
        assert_eq!(y.values(), &[7]);
    }

    #[test]
    fn combine_identity() {
        let parts = [IntTensor::from_rows(&[vec![5]])];
        assert_eq!(combine(&parts, 1, 1).unwrap().values(), &[5]);
    }

    #[test]
    fn combine_two_by_two_matches_weight_sum() {
        // Brute-force oracle: all-ones components sum the weights 2^(s+t).
        let mut expected = 0i32;
        for s in 0..2 {
            for t in 0..2 {
                expected += 1 << (s + t);
            }
        }
        assert_eq!(expected, 9);
        let parts = vec![IntTensor::from_rows(&[vec![1]]); 4];
        assert_eq!(combine(&parts, 2, 2).unwrap().values(), &[expected]);
    }

    #[test]
    fn combine_rejects_shape_mismatch() {
        let parts = [
            IntTensor::from_rows(&[vec![1]]),
            IntTensor::from_rows(&[vec![1, 2]]),
        ];
        assert!(combine(&parts, 1, 2).is_err());
        assert!(combine(&parts[..1], 1, 2).is_err());
    }

    #[test]
    fn combine_is_linear() {
        let mut rng = oorandom();
        for _ in 0..20 {
            let a: Vec<i32> = (0..12).map(|_| (rng() % 100) as i32 - 50).collect();
            let b: Vec<i32> = (0..12).map(|_| (rng() % 100) as i32 - 50).collect();
            let mk = |v: &[i32]| {
                (0..4)
                    .map(|k| IntTensor::new(vec![3, 4], v.iter().map(|x| x + k).collect()).unwrap())
                    .collect::<Vec<_>>()
            };
            let pa = mk(&a);
            let pb = mk(&b);
            let sum: Vec<IntTensor> = pa
                .iter()
                .zip(&pb)
                .map(|(x, y)| {
                    IntTensor::new(
                        vec![3, 4],
                        x.values().iter().zip(y.values()).map(|(u, v)| u + v).collect(),
                    )
                    .unwrap()
                })
                .collect();
            let lhs = combine(&sum, 2, 2).unwrap();
            let ca = combine(&pa, 2, 2).unwrap();
            let cb = combine(&pb, 2, 2).unwrap();
            let rhs: Vec<i32> = ca.values().iter().zip(cb.values()).map(|(u, v)| u + v).collect();
            assert_eq!(lhs.values(), rhs.as_slice());
        }
    }

    #[test]
    fn reconstruct_known_planes() {
        let t = decompose(&IntTensor::from_rows(&[vec![3]]), 2, Encoding::ZeroOne).unwrap();
        assert_eq!(reconstruct(&t).values(), &[3]);
        let m = decompose(&IntTensor::from_rows(&[vec![-1]]), 1, Encoding::PlusMinusOne).unwrap();
        assert_eq!(reconstruct(&m).values(), &[-1]);
    }

    #[test]
    fn corrupted_padding_fails_validation() {
        let x = IntTensor::from_rows(&[vec![1, 0, 1]]);
        let mut t = decompose(&x, 1, Encoding::ZeroOne).unwrap();
        t.validate().unwrap();
        // Flip a bit beyond the logical row length.
        t.plane_mut(0)[0] |= 1 << 10;
        assert!(t.validate().is_err());
    }

    #[test]
    fn op_counters_follow_cost_formulas() {
        // decompose of a p-bit and a q-bit n x n pair costs (p+q) n^2 plane
        // extractions; combine of their p*q outputs costs p*q n^2 adds.
        let (p, q) = (2u8, 3u8);
        for n in [16usize, 32, 64] {
            let work = WorkCounter::new();
            let w = IntTensor::new(vec![n, n], vec![1; n * n]).unwrap();
            let x = IntTensor::new(vec![n, n], vec![1; n * n]).unwrap();
            decompose_traced(&w, p, Encoding::ZeroOne, &work).unwrap();
            decompose_traced(&x, q, Encoding::ZeroOne, &work).unwrap();
            assert_eq!(work.decompose_ops(), (p + q) as u64 * (n * n) as u64);

            let parts: Vec<IntTensor> =
                (0..p as usize * q as usize).map(|_| IntTensor::zeros(vec![n, n])).collect();
            combine_traced(&parts, p, q, &work).unwrap();
            assert_eq!(work.combine_ops(), (p * q) as u64 * (n * n) as u64);
        }
    }

    #[test]
    fn zero_pad_inner_extends_rows() {
        let x = IntTensor::from_rows(&[vec![1, 2], vec![3, 4]]);
        let padded = zero_pad_inner(&x, 4);
        assert_eq!(padded.dims(), &[2, 4]);
        assert_eq!(padded.values(), &[1, 2, 0, 0, 3, 4, 0, 0]);
        assert_eq!(zero_pad_inner(&x, 2), x);
    }

    // Tiny deterministic generator so unit tests stay dependency-light.
    fn oorandom() -> impl FnMut() -> u64 {
        let mut state = 0x9e3779b97f4a7c15u64;
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        }
    }

    proptest! {
        #[test]
        fn roundtrip_zero_one(
            rows in 1usize..6,
            cols in 1usize..90,
            bits in 1u8..=8,
            seed in any::<u64>(),
        ) {
            let mut s = seed | 1;
            let max = (1i64 << bits) as i64;
            let values: Vec<i32> = (0..rows * cols)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((s >> 33) as i64 % max) as i32
                })
                .collect();
            let x = IntTensor::new(vec![rows, cols], values).unwrap();
            let t = decompose(&x, bits, Encoding::ZeroOne).unwrap();
            t.validate().unwrap();
            prop_assert_eq!(reconstruct(&t), x);
        }

        #[test]
        fn roundtrip_plus_minus_one(cols in 1usize..130, seed in any::<u64>()) {
            let mut s = seed | 1;
            let values: Vec<i32> = (0..cols)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if (s >> 40) & 1 == 1 { 1 } else { -1 }
                })
                .collect();
            let x = IntTensor::new(vec![1, cols], values).unwrap();
            let t = decompose(&x, 1, Encoding::PlusMinusOne).unwrap();
            t.validate().unwrap();
            prop_assert_eq!(reconstruct(&t), x);
        }
    }
}
