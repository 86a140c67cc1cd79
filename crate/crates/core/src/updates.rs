//! Model-update containers and the vector ↔ matrix reshaping used by every
//! slice-based compressor.
//!
//! A flat update `g ∈ R^d` becomes an `m × n` update matrix by filling
//! columns with consecutive blocks of `m` entries, zero-padding the tail when
//! `m·n > d`. Column `i` is the `i`-th *model update slice*.
//!
//! Convolution kernels can instead be mapped axis-wise: the tensor is
//! traversed in `(O, I, H, W)` order, outer to inner, and each axis is sent
//! to either the row index or the column index of the matrix.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, ensure_shape, Result};
use crate::numerics::{Matrix, Vector};

/// A flat vector of model parameters or a model update.
pub type ParamVector = Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConvAxis {
    O,
    I,
    H,
    W,
}

impl ConvAxis {
    pub const ALL: [ConvAxis; 4] = [ConvAxis::O, ConvAxis::I, ConvAxis::H, ConvAxis::W];

    fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for ConvAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "O" | "o" => Ok(ConvAxis::O),
            "I" | "i" => Ok(ConvAxis::I),
            "H" | "h" => Ok(ConvAxis::H),
            "W" | "w" => Ok(ConvAxis::W),
            other => Err(crate::Error::InvalidInput(format!("unknown conv axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Column-fill of a flat vector of length `len`.
    Flat { len: usize },
    /// Axis partition of an `[O, I, H, W]` kernel.
    Conv {
        shape: [usize; 4],
        row_axes: Vec<ConvAxis>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshapeSpec {
    pub m: usize,
    pub n: usize,
    pub layout: Layout,
}

impl ReshapeSpec {
    /// Column-fill layout with `n = ceil(d / m)`.
    pub fn flat(d: usize, m: usize) -> Result<Self> {
        ensure_input!(d >= 1, "update dimension must be at least 1");
        ensure_input!(m >= 1, "row count must be at least 1");
        Self::flat_with(d, m, d.div_ceil(m))
    }

    pub fn flat_with(d: usize, m: usize, n: usize) -> Result<Self> {
        ensure_input!(d >= 1 && m >= 1 && n >= 1, "dimensions must be positive");
        ensure_shape!(
            m.checked_mul(n).is_some_and(|mn| mn >= d),
            "{m}x{n} matrix cannot hold {d} entries"
        );
        Ok(ReshapeSpec {
            m,
            n,
            layout: Layout::Flat { len: d },
        })
    }

    /// Number of real (unpadded) entries.
    pub fn len(&self) -> usize {
        match &self.layout {
            Layout::Flat { len } => *len,
            Layout::Conv { shape, .. } => shape.iter().product(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pad_count(&self) -> usize {
        self.m * self.n - self.len()
    }

    pub fn col_axes(&self) -> Vec<ConvAxis> {
        match &self.layout {
            Layout::Flat { .. } => Vec::new(),
            Layout::Conv { row_axes, .. } => ConvAxis::ALL
                .into_iter()
                .filter(|a| !row_axes.contains(a))
                .collect(),
        }
    }

    /// Column-major matrix position of flat element `k`.
    fn position_fn(&self) -> Box<dyn Fn(usize) -> usize + '_> {
        match &self.layout {
            Layout::Flat { .. } => Box::new(|k| k),
            Layout::Conv { shape, row_axes } => {
                let m = self.m;
                let in_rows: [bool; 4] = std::array::from_fn(|a| row_axes.contains(&ConvAxis::ALL[a]));
                Box::new(move |k| {
                    let mut rem = k;
                    let mut idx = [0usize; 4];
                    for a in (0..4).rev() {
                        idx[a] = rem % shape[a];
                        rem /= shape[a];
                    }
                    let (mut row, mut col) = (0, 0);
                    for a in 0..4 {
                        if in_rows[a] {
                            row = row * shape[a] + idx[a];
                        } else {
                            col = col * shape[a] + idx[a];
                        }
                    }
                    row + col * m
                })
            }
        }
    }
}

/// Maps an `[O, I, H, W]` kernel to a matrix whose rows are indexed by
/// `row_axes` and whose columns are indexed by the remaining axes.
pub fn conv_axis_spec(o: usize, i: usize, h: usize, w: usize, row_axes: &[ConvAxis]) -> Result<ReshapeSpec> {
    let shape = [o, i, h, w];
    ensure_input!(shape.iter().all(|&x| x >= 1), "axis lengths must be positive");
    let mut axes: Vec<ConvAxis> = row_axes.to_vec();
    axes.sort();
    axes.dedup();
    ensure_input!(axes.len() == row_axes.len(), "row axes contain duplicates");
    ensure_input!(
        !axes.is_empty() && axes.len() < 4,
        "row axes must be a non-empty proper subset of {{O, I, H, W}}"
    );
    let m: usize = axes.iter().map(|a| shape[a.index()]).product();
    let n: usize = shape.iter().product::<usize>() / m;
    Ok(ReshapeSpec {
        m,
        n,
        layout: Layout::Conv { shape, row_axes: axes },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrix {
    pub g_mat: Matrix,
    pub spec: ReshapeSpec,
    pub pad_count: usize,
}

impl UpdateMatrix {
    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Slice `i` (column `i`) as a contiguous slice.
    pub fn slice(&self, i: usize) -> &[f64] {
        let m = self.spec.m;
        &self.g_mat.as_slice()[i * m..(i + 1) * m]
    }

    pub fn slices(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.g_mat.as_slice().chunks_exact(self.spec.m)
    }
}

pub fn reshape_to_matrix(g: &ParamVector, spec: &ReshapeSpec) -> Result<UpdateMatrix> {
    let d = spec.len();
    ensure_shape!(g.len() == d, "update has length {}, spec expects {d}", g.len());
    ensure_shape!(spec.m * spec.n >= d, "{}x{} matrix cannot hold {d} entries", spec.m, spec.n);
    let mut data = vec![0.0; spec.m * spec.n];
    match spec.layout {
        Layout::Flat { .. } => data[..d].copy_from_slice(g.as_slice()),
        Layout::Conv { .. } => {
            let pos = spec.position_fn();
            for (k, &x) in g.iter().enumerate() {
                data[pos(k)] = x;
            }
        }
    }
    Ok(UpdateMatrix {
        g_mat: Matrix::from_vec(spec.m, spec.n, data),
        spec: spec.clone(),
        pad_count: spec.pad_count(),
    })
}

pub fn flatten_from_matrix(gm: &UpdateMatrix) -> ParamVector {
    let d = gm.spec.len();
    let data = gm.g_mat.as_slice();
    match gm.spec.layout {
        Layout::Flat { .. } => ParamVector::from_column_slice(&data[..d]),
        Layout::Conv { .. } => {
            let pos = gm.spec.position_fn();
            ParamVector::from_iterator(d, (0..d).map(|k| data[pos(k)]))
        }
    }
}
