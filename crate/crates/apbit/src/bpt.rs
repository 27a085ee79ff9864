//! `.bpt` binary tensor files.
//!
//! Layout, all multi-byte fields little-endian:
//!
//! ```text
//! magic    4 bytes   "APBT"
//! version  u16       currently 1
//! encoding u8        0 = zero-one, 1 = plus-minus-one
//! bits     u8        plane count p, 1..=8
//! rank     u8        number of dims
//! dims     rank*u32  extents, innermost last
//! planes   p blobs   raw u64 words, runs padded to word boundaries
//! ```
//!
//! Each plane blob is `num_runs * run_words * 8` bytes where a run is the
//! innermost dimension and `run_words = ceil(run_len / 64)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::bitplane::{BitPlaneTensor, Encoding};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"APBT";
const VERSION: u16 = 1;

pub fn write_bpt<W: Write>(t: &BitPlaneTensor, mut w: W) -> Result<()> {
    t.validate()?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let enc = match t.encoding() {
        Encoding::ZeroOne => 0u8,
        Encoding::PlusMinusOne => 1u8,
    };
    w.write_all(&[enc, t.bits(), t.dims().len() as u8])?;
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dim {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for p in 0..t.bits() as usize {
        for &word in t.plane(p) {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_bpt<R: Read>(mut r: R) -> Result<BitPlaneTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut hdr = [0u8; 2];
    r.read_exact(&mut hdr)?;
    let version = u16::from_le_bytes(hdr);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut meta = [0u8; 3];
    r.read_exact(&mut meta)?;
    let encoding = match meta[0] {
        0 => Encoding::ZeroOne,
        1 => Encoding::PlusMinusOne,
        e => return Err(Error::Format(format!("unknown encoding byte {e}"))),
    };
    let bits = meta[1];
    let rank = meta[2] as usize;
    if rank == 0 {
        return Err(Error::Format("rank 0 tensor".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let mut t = BitPlaneTensor::new_zeroed(dims, bits, encoding)?;
    let words = t.num_runs() * t.run_words();
    let mut buf = vec![0u8; words * 8];
    for p in 0..bits as usize {
        r.read_exact(&mut buf)?;
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            t.plane_mut(p)[i] = u64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    t.validate()?;
    Ok(t)
}

pub fn save_bpt(t: &BitPlaneTensor, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_bpt(t, &mut f)
}

pub fn load_bpt(path: &Path) -> Result<BitPlaneTensor> {
    let f = std::fs::File::open(path)?;
    read_bpt(std::io::BufReader::new(f))
}
