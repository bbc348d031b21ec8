//! Sobol' low-discrepancy points and Saltelli sample layouts.
//!
//! Direction numbers come from the Joe–Kuo `new-joe-kuo-6.1000` table,
//! vendored under `data/` and verified against a SHA-256 digest when first
//! loaded. Points are produced in Gray-code order, so prefixes of the
//! sequence are stable and any index can be reached directly.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const BITS: u32 = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

static VENDORED_TABLE: &str = include_str!("../data/new-joe-kuo-6.1000.txt");
/// SHA-256 of the vendored direction-number file.
pub const VENDORED_TABLE_SHA256: &str = "fb4e84a77d09427d1d469f854db6832b5341b3da6df0926f44242af89b777657";

/// One line of a Joe–Kuo table: dimension index, primitive polynomial degree
/// `s`, its coefficient bits `a`, and the initial direction integers `m_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionEntry {
    pub dim: usize,
    pub degree: u32,
    pub coeffs: u32,
    pub m: Vec<u32>,
}

/// Parsed direction-number table. Dimension 1 (van der Corput) is implicit,
/// so a table with `k` entries serves `k + 1` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionTable {
    entries: Vec<DirectionEntry>,
}

impl DirectionTable {
    /// Parses the plain-text format: an optional header line, then one
    /// dimension per line as `d s a m_1 … m_s`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('d') || line.starts_with('#') {
                continue;
            }
            let nums: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::DirectionTable(format!("line {}: {e}", lineno + 1)))?;
            if nums.len() < 4 {
                return Err(Error::DirectionTable(format!("line {}: too few fields", lineno + 1)));
            }
            let degree = nums[1] as u32;
            let m: Vec<u32> = nums[3..].iter().map(|&v| v as u32).collect();
            if m.len() != degree as usize || degree == 0 || degree >= BITS {
                return Err(Error::DirectionTable(format!(
                    "line {}: expected {degree} direction integers, found {}",
                    lineno + 1,
                    m.len()
                )));
            }
            for (k, &mk) in m.iter().enumerate() {
                if mk % 2 == 0 || mk >= (1 << (k + 1)) {
                    return Err(Error::DirectionTable(format!(
                        "line {}: m_{} = {mk} must be odd and below 2^{}",
                        lineno + 1,
                        k + 1,
                        k + 1
                    )));
                }
            }
            let dim = nums[0] as usize;
            if dim != entries.len() + 2 {
                return Err(Error::DirectionTable(format!(
                    "line {}: dimension {dim} out of sequence",
                    lineno + 1
                )));
            }
            entries.push(DirectionEntry { dim, degree, coeffs: nums[2] as u32, m });
        }
        Ok(Self { entries })
    }

    /// The vendored 1000-dimension table, checksum-verified once per process.
    pub fn vendored() -> Result<&'static DirectionTable> {
        static TABLE: OnceLock<std::result::Result<DirectionTable, Error>> = OnceLock::new();
        TABLE
            .get_or_init(|| {
                let digest = hex::encode(Sha256::digest(VENDORED_TABLE.as_bytes()));
                if digest != VENDORED_TABLE_SHA256 {
                    return Err(Error::DirectionTable(format!("checksum mismatch: {digest}")));
                }
                DirectionTable::parse(VENDORED_TABLE)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn max_dim(&self) -> usize {
        self.entries.len() + 1
    }

    /// Direction integers `v_1 … v_32` (left-aligned) for each dimension.
    fn directions(&self, dim: usize) -> Result<Vec<[u32; BITS as usize]>> {
        if dim == 0 || dim > self.max_dim() {
            return Err(Error::DirectionTable(format!(
                "dimension {dim} outside 1..={}",
                self.max_dim()
            )));
        }
        let mut out = Vec::with_capacity(dim);
        let mut first = [0u32; BITS as usize];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k as u32);
        }
        out.push(first);
        for e in &self.entries[..dim - 1] {
            let s = e.degree as usize;
            let mut v = [0u32; BITS as usize];
            for k in 0..BITS as usize {
                if k < s {
                    v[k] = e.m[k] << (BITS - 1 - k as u32);
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for i in 1..s {
                        if (e.coeffs >> (s - 1 - i)) & 1 == 1 {
                            x ^= v[k - i];
                        }
                    }
                    v[k] = x;
                }
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Stateful Sobol' cursor over a fixed dimension.
#[derive(Debug, Clone)]
pub struct SobolStream {
    directions: Vec<[u32; BITS as usize]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolStream {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_table(DirectionTable::vendored()?, dim)
    }

    pub fn with_table(table: &DirectionTable, dim: usize) -> Result<Self> {
        let directions = table.directions(dim)?;
        Ok(Self { state: vec![0; dim], directions, index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Index of the next point to be produced.
    pub fn position(&self) -> u64 {
        self.index
    }

    /// Jumps directly to point `index`.
    pub fn seek(&mut self, index: u64) {
        let gray = index ^ (index >> 1);
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            let mut x = 0u32;
            for k in 0..BITS as usize {
                if (gray >> k) & 1 == 1 {
                    x ^= v[k];
                }
            }
            *s = x;
        }
        self.index = index;
    }

    /// Writes the current point into `out` and advances the cursor.
    pub fn next_into(&mut self, out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(&self.state) {
            *o = s as f64 * SCALE;
        }
        // Gray-code step: flip the direction at the lowest zero bit of index
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS as usize {
            for (s, v) in self.state.iter_mut().zip(&self.directions) {
                *s ^= v[c];
            }
        }
        self.index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.next_into(&mut p);
        p
    }
}

/// `count` Sobol' points in `[0,1)^dim`, starting at sequence index `skip`.
pub fn sobol_points(dim: usize, count: usize, skip: u64) -> Result<Matrix> {
    let mut stream = SobolStream::new(dim)?;
    stream.seek(skip);
    let mut m = Matrix::zeros(count, dim);
    for i in 0..count {
        stream.next_into(m.row_mut(i));
    }
    Ok(m)
}

/// Saltelli layout: blocks `A`, `B`, then `AB_1 … AB_D`, each `n_base` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    n_base: usize,
    dim: usize,
    rows: Matrix,
}

impl SaltelliDesign {
    pub fn n_base(&self) -> usize {
        self.n_base
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    /// Row offset of block `A`.
    pub fn a_offset(&self) -> usize {
        0
    }

    pub fn b_offset(&self) -> usize {
        self.n_base
    }

    /// Row offset of block `AB_i` (0-based `i`).
    pub fn ab_offset(&self, i: usize) -> usize {
        (2 + i) * self.n_base
    }
}

/// Builds the `N_g (D + 2)`-row Saltelli design from a `2D`-dimensional
/// Sobol' stream. Powers of two keep the base samples balanced; other sizes
/// are accepted.
pub fn saltelli_design(dim: usize, n_base: usize) -> Result<SaltelliDesign> {
    saltelli_design_with_skip(dim, n_base, 0)
}

pub fn saltelli_design_with_skip(dim: usize, n_base: usize, skip: u64) -> Result<SaltelliDesign> {
    if n_base < 4 {
        return Err(Error::InvalidInput("Saltelli designs need N_g >= 4".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let base = sobol_points(2 * dim, n_base, skip)?;
    let mut rows = Matrix::zeros(n_base * (dim + 2), dim);
    for j in 0..n_base {
        let p = base.row(j);
        let (a, b) = p.split_at(dim);
        rows.row_mut(j).copy_from_slice(a);
        rows.row_mut(n_base + j).copy_from_slice(b);
        for i in 0..dim {
            let r = rows.row_mut((2 + i) * n_base + j);
            r.copy_from_slice(a);
            r[i] = b[i];
        }
    }
    Ok(SaltelliDesign { n_base, dim, rows })
}
