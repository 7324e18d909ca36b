//! Real orthogonal space-time block codes and the differential mapping.
//!
//! A [`CodeBlock`] is `M x M`: row `m` is Tag antenna `m`, column `j` is the
//! reflection vector sent in symbol period `j` of the block.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::check_tag_antennas;

// Real orthogonal designs, one row per symbol period and one column per Tag
// antenna. Entry `+k` stands for `u_k`, `-k` for `-u_k`.
const DESIGN_1: [[i8; 1]; 1] = [[1]];

const DESIGN_2: [[i8; 2]; 2] = [[1, 2], [-2, 1]];

const DESIGN_4: [[i8; 4]; 4] = [[1, 2, 3, 4], [-2, 1, -4, 3], [-3, 4, 1, -2], [-4, -3, 2, 1]];

const DESIGN_8: [[i8; 8]; 8] = [
    [1, 2, 3, 4, 5, 6, 7, 8],
    [-2, 1, 4, -3, 6, -5, -8, 7],
    [-3, -4, 1, 2, 7, 8, -5, -6],
    [-4, 3, -2, 1, 8, -7, 6, -5],
    [-5, -6, -7, -8, 1, 2, 3, 4],
    [-6, 5, -8, 7, -2, 1, -4, 3],
    [-7, 8, 5, -6, -3, 4, 1, -2],
    [-8, -7, 6, 5, -4, -3, 2, 1],
];

/// Square real orthogonal design of order 1, 2, 4 or 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrthogonalDesign {
    order: usize,
}

impl OrthogonalDesign {
    pub fn new(order: usize) -> Result<Self> {
        check_tag_antennas(order)?;
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `(sign, symbol index)` of the entry sent by `antenna` in `period`.
    pub fn entry(&self, antenna: usize, period: usize) -> (f64, usize) {
        let code = match self.order {
            1 => DESIGN_1[period][antenna],
            2 => DESIGN_2[period][antenna],
            4 => DESIGN_4[period][antenna],
            8 => DESIGN_8[period][antenna],
            _ => unreachable!("order validated at construction"),
        };
        (f64::from(code.signum()), code.unsigned_abs() as usize - 1)
    }

    /// Places `symbols` into an `M x M` block.
    pub fn encode(&self, symbols: &[f64]) -> Result<CodeBlock> {
        if symbols.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: format!("{} symbols", self.order),
                actual: format!("{} symbols", symbols.len()),
            });
        }
        if let Some((k, &u)) = symbols.iter().enumerate().find(|(_, u)| u.abs() > 1.0) {
            return Err(Error::PassivityViolation {
                antenna: k,
                magnitude: u.abs(),
            });
        }
        let x = DMatrix::from_fn(self.order, self.order, |m, j| {
            let (sign, k) = self.entry(m, j);
            sign * symbols[k]
        });
        Ok(CodeBlock { x })
    }
}

/// Tag reflection pattern for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBlock {
    x: DMatrix<f64>,
}

impl CodeBlock {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.x
    }

    pub fn antennas(&self) -> usize {
        self.x.nrows()
    }

    pub fn periods(&self) -> usize {
        self.x.ncols()
    }

    /// Transmit vector of symbol period `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }
}

/// BPSK: bit 0 maps to +1, bit 1 to -1.
pub fn bpsk(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

/// Encodes `M` BPSK symbols with the canonical design of order `M`.
pub fn encode_coherent_block(u: &[f64]) -> Result<CodeBlock> {
    OrthogonalDesign::new(u.len())?.encode(u)
}

/// Concatenates blocks along the time axis.
pub fn concat_blocks(blocks: &[CodeBlock]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, CodeBlock::antennas);
    let cols: usize = blocks.iter().map(CodeBlock::periods).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.columns_mut(offset, b.periods()).copy_from(b.matrix());
        offset += b.periods();
    }
    out
}

/// The four differential transition vectors in detector enumeration order.
pub const DIFF_ALPHABET: [[i8; 2]; 4] = [[1, 0], [0, -1], [0, 1], [-1, 0]];

/// Maps two bits to a transition vector `[B1, B2]`.
pub fn diff_map(b1: bool, b2: bool) -> [i8; 2] {
    match (b1, b2) {
        (false, false) => [1, 0],
        (false, true) => [0, -1],
        (true, false) => [0, 1],
        (true, true) => [-1, 0],
    }
}

/// Inverse of [`diff_map`]; `None` outside the alphabet.
pub fn diff_unmap(b: [i8; 2]) -> Option<(bool, bool)> {
    match b {
        [1, 0] => Some((false, false)),
        [0, -1] => Some((false, true)),
        [0, 1] => Some((true, false)),
        [-1, 0] => Some((true, true)),
        _ => None,
    }
}

/// Last symbol pair sent by a differential encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffState {
    u: [i8; 2],
}

impl Default for DiffState {
    fn default() -> Self {
        Self { u: [1, 1] }
    }
}

impl DiffState {
    pub fn new(u1: i8, u2: i8) -> Result<Self> {
        if u1.abs() != 1 || u2.abs() != 1 {
            return Err(Error::invalid(
                "diff_init",
                format!("symbols must be +-1, got ({u1}, {u2})"),
            ));
        }
        Ok(Self { u: [u1, u2] })
    }

    pub fn symbols(&self) -> [i8; 2] {
        self.u
    }

    fn block(&self) -> CodeBlock {
        let u = [f64::from(self.u[0]), f64::from(self.u[1])];
        OrthogonalDesign { order: 2 }
            .encode(&u)
            .expect("unit symbols always encode")
    }

    /// `[u'; u''] = B1 [u1; u2] + B2 [-u2; u1]`.
    fn advance(&self, b: [i8; 2]) -> Self {
        let [u1, u2] = self.u;
        Self {
            u: [b[0] * u1 - b[1] * u2, b[0] * u2 + b[1] * u1],
        }
    }
}

/// Advances the differential encoder by one block carrying `(b1, b2)`.
pub fn diff_next_block(state: DiffState, b1: bool, b2: bool) -> (CodeBlock, DiffState) {
    let next = state.advance(diff_map(b1, b2));
    (next.block(), next)
}

/// Encodes a bit stream, emitting the reference block for `init` first and
/// then one block per bit pair.
pub fn encode_diff_stream(bits: &[bool], init: DiffState) -> Result<Vec<CodeBlock>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    let mut blocks = Vec::with_capacity(1 + bits.len() / 2);
    blocks.push(init.block());
    let mut state = init;
    for pair in bits.chunks_exact(2) {
        let (block, next) = diff_next_block(state, pair[0], pair[1]);
        blocks.push(block);
        state = next;
    }
    Ok(blocks)
}
