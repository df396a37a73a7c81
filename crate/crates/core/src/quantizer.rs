//! Component-wise grid quantizer with a shrinking radius.
//!
//! A grid with `2^b` points per dimension covers the hypercube of radius
//! `r` around `center`; adjacent points are `2*delta` apart with
//! `delta = r / (2^b - 1)`. Quantization projects a point onto the
//! nearest grid point (ties resolved toward the larger point), so any
//! point inside the grid is reproduced to within `delta` per component.
//! Indices are packed big-endian into `ceil(d*b/8)` bytes for the wire.

use crate::error::{Error, Result};

/// State of one node's quantization grid: where it sits, how wide it is,
/// and how many bits index each dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    center: Vec<f64>,
    radius: f64,
    bits: u32,
}

/// Relative slack on the containment check, so accumulated rounding in a
/// long run cannot produce a spurious overflow for a point that is inside
/// the grid in exact arithmetic.
const CONTAINMENT_SLACK: f64 = 1e-12;

impl GridSpec {
    pub fn new(center: Vec<f64>, radius: f64, bits: u32) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidGrid("center must have at least one entry".into()));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("center entries must be finite".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if !(1..=64).contains(&bits) {
            return Err(Error::InvalidGrid(format!("bits must be in 1..=64, got {bits}")));
        }
        Ok(GridSpec { center, radius, bits })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Half the distance between adjacent grid points: `r / (2^b - 1)`.
    pub fn step(&self) -> f64 {
        grid_step(self.radius, self.bits)
    }

    /// Largest representable index, `2^b - 1`.
    pub fn max_index(&self) -> u64 {
        max_index(self.bits)
    }

    /// The grid point at `index` in dimension `j`.
    fn point(&self, j: usize, index: u64) -> f64 {
        self.center[j] - self.radius + 2.0 * self.step() * index as f64
    }
}

pub fn max_index(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Grid step `delta(r, b) = r / (2^b - 1)`.
pub fn grid_step(radius: f64, bits: u32) -> f64 {
    radius / max_index(bits) as f64
}

/// A quantized vector: per-dimension grid indices plus the decoded grid
/// point they stand for. The payload costs exactly `dim * bits` bits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMessage {
    pub indices: Vec<u64>,
    pub value: Vec<f64>,
}

impl QuantizedMessage {
    pub fn payload_bits(&self, bits: u32) -> u64 {
        self.indices.len() as u64 * bits as u64
    }
}

/// Projects `c` onto the nearest grid point, component-wise, ties toward
/// the larger point. Requires `|c[j] - center[j]| <= r` for every `j`;
/// a violation is a `GridOverflow`, the signal that the radius schedule
/// shrank faster than the iterates move.
pub fn quantize(c: &[f64], grid: &GridSpec) -> Result<QuantizedMessage> {
    if c.len() != grid.dim() {
        return Err(Error::InvalidGrid(format!(
            "input has {} entries, grid has dim {}",
            c.len(),
            grid.dim()
        )));
    }
    let r = grid.radius();
    let delta = grid.step();
    let max = grid.max_index();
    let mut indices = Vec::with_capacity(c.len());
    let mut value = Vec::with_capacity(c.len());
    for (j, (&cj, &qj)) in c.iter().zip(grid.center()).enumerate() {
        let deviation = (cj - qj).abs();
        if deviation.is_nan() || deviation > r * (1.0 + CONTAINMENT_SLACK) {
            return Err(Error::GridOverflow {
                component: j,
                deviation,
                radius: r,
            });
        }
        // Nearest of the points center - r + 2*delta*i; floor(u + 1/2)
        // rounds exact midpoints toward the larger index.
        let u = (cj - qj + r) / (2.0 * delta);
        let idx_f = (u + 0.5).floor();
        let idx = if idx_f <= 0.0 {
            0
        } else if idx_f >= max as f64 {
            max
        } else {
            idx_f as u64
        };
        indices.push(idx);
        value.push(grid.point(j, idx));
    }
    Ok(QuantizedMessage { indices, value })
}

/// Receiver-side reconstruction of a grid point from indices.
pub fn decode(indices: &[u64], grid: &GridSpec) -> Result<Vec<f64>> {
    if indices.len() != grid.dim() {
        return Err(Error::InvalidGrid(format!(
            "got {} indices, grid has dim {}",
            indices.len(),
            grid.dim()
        )));
    }
    let max = grid.max_index();
    indices
        .iter()
        .enumerate()
        .map(|(j, &idx)| {
            if idx > max {
                Err(Error::IndexOutOfRange { index: idx, max })
            } else {
                Ok(grid.point(j, idx))
            }
        })
        .collect()
}

/// Packs indices into a bitstring, `bits` per index, most-significant
/// dimension first, big-endian within bytes, zero-padded to a whole byte.
pub fn pack_bits(indices: &[u64], bits: u32) -> Result<Vec<u8>> {
    if !(1..=64).contains(&bits) {
        return Err(Error::InvalidGrid(format!("bits must be in 1..=64, got {bits}")));
    }
    let max = max_index(bits);
    let total_bits = indices.len() * bits as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut cursor = 0usize;
    for &idx in indices {
        if idx > max {
            return Err(Error::IndexOutOfRange { index: idx, max });
        }
        for shift in (0..bits).rev() {
            let bit = (idx >> shift) & 1;
            if bit == 1 {
                out[cursor / 8] |= 1 << (7 - cursor % 8);
            }
            cursor += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`pack_bits`]. The input must be exactly `ceil(dim*bits/8)`
/// bytes.
pub fn unpack_bits(bytes: &[u8], dim: usize, bits: u32) -> Result<Vec<u64>> {
    if !(1..=64).contains(&bits) {
        return Err(Error::InvalidGrid(format!("bits must be in 1..=64, got {bits}")));
    }
    let expected = (dim * bits as usize).div_ceil(8);
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: bytes.len(),
        });
    }
    let mut indices = Vec::with_capacity(dim);
    let mut cursor = 0usize;
    for _ in 0..dim {
        let mut idx = 0u64;
        for _ in 0..bits {
            let bit = (bytes[cursor / 8] >> (7 - cursor % 8)) & 1;
            idx = (idx << 1) | bit as u64;
            cursor += 1;
        }
        indices.push(idx);
    }
    Ok(indices)
}
