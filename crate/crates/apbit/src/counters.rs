//! Instrumentation counters for simulated memory traffic and bit-op work.
//!
//! The compute kernels model the memory hierarchy of a blocked kernel: a
//! "main" buffer (tensor storage that crosses kernel boundaries) and a
//! per-block staging buffer that tiles are copied into before compute.
//! Counters are atomic so concurrently executing output blocks can share
//! one probe.

use std::sync::atomic::{AtomicU64, Ordering};

/// Monotone byte counters for simulated memory traffic.
///
/// `bytes_staged` counts tile fills of the per-block staging buffer,
/// `bytes_read_main` / `bytes_written_main` count tensor payload moved in
/// and out of main storage. Counters only grow; call [`TrafficCounter::reset`]
/// to zero them.
#[derive(Debug, Default)]
pub struct TrafficCounter {
    bytes_read_main: AtomicU64,
    bytes_written_main: AtomicU64,
    bytes_staged: AtomicU64,
}

impl TrafficCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_read_main(&self, bytes: u64) {
        self.bytes_read_main.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_written_main(&self, bytes: u64) {
        self.bytes_written_main.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_staged(&self, bytes: u64) {
        self.bytes_staged.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn bytes_read_main(&self) -> u64 {
        self.bytes_read_main.load(Ordering::Relaxed)
    }

    pub fn bytes_written_main(&self) -> u64 {
        self.bytes_written_main.load(Ordering::Relaxed)
    }

    pub fn bytes_staged(&self) -> u64 {
        self.bytes_staged.load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.bytes_read_main() + self.bytes_written_main() + self.bytes_staged()
    }

    pub fn reset(&self) {
        self.bytes_read_main.store(0, Ordering::Relaxed);
        self.bytes_written_main.store(0, Ordering::Relaxed);
        self.bytes_staged.store(0, Ordering::Relaxed);
    }
}

/// Work counters: one tick per elementary operation.
///
/// `decompose_ops` ticks once per (element, plane) visited while splitting
/// integers into bit planes; `combine_ops` once per weighted add while
/// reassembling 32-bit outputs; `bmma_tiles` once per 8x8x128 tile
/// invocation (each tile is 8*8*128 bit-level multiply-accumulates).
#[derive(Debug, Default)]
pub struct WorkCounter {
    decompose_ops: AtomicU64,
    combine_ops: AtomicU64,
    bmma_tiles: AtomicU64,
}

impl WorkCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_decompose_ops(&self, n: u64) {
        self.decompose_ops.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_combine_ops(&self, n: u64) {
        self.combine_ops.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_bmma_tiles(&self, n: u64) {
        self.bmma_tiles.fetch_add(n, Ordering::Relaxed);
    }

    pub fn decompose_ops(&self) -> u64 {
        self.decompose_ops.load(Ordering::Relaxed)
    }

    pub fn combine_ops(&self) -> u64 {
        self.combine_ops.load(Ordering::Relaxed)
    }

    pub fn bmma_tiles(&self) -> u64 {
        self.bmma_tiles.load(Ordering::Relaxed)
    }

    /// Bit-level multiply-accumulate count implied by the tile count.
    pub fn mac_ops(&self) -> u64 {
        self.bmma_tiles() * 8 * 8 * 128
    }

    pub fn reset(&self) {
        self.decompose_ops.store(0, Ordering::Relaxed);
        self.combine_ops.store(0, Ordering::Relaxed);
        self.bmma_tiles.store(0, Ordering::Relaxed);
    }
}

/// Bundle of traffic and work counters threaded through the kernels.
#[derive(Debug, Default)]
pub struct KernelProbe {
    pub traffic: TrafficCounter,
    pub work: WorkCounter,
}

impl KernelProbe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&self) {
        self.traffic.reset();
        self.work.reset();
    }
}
