//! Weight quantization onto linear `b`-bit grids.
//!
//! Two quantizers are provided: round-to-nearest ([`rtn_quantize`]) and a
//! sequential Hessian-compensated scheme ([`compensated_quantize`]) that
//! quantizes columns left to right and pushes each column's rounding error
//! onto the columns not yet quantized.

use crate::error::{QepError, Result};
use crate::numerics::{Cholesky, HessianMatrix, Matrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// One grid per output row.
    #[default]
    PerChannel,
    /// One grid per contiguous run of `size` columns within a row.
    Group(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantizerKind {
    #[default]
    Rtn,
    Compensated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantConfig {
    bits: u8,
    granularity: Granularity,
    symmetric: bool,
    kind: QuantizerKind,
}

impl QuantConfig {
    pub fn new(bits: u8, granularity: Granularity, symmetric: bool, kind: QuantizerKind) -> Result<Self> {
        if !(2..=8).contains(&bits) {
            return Err(QepError::InvalidConfig(format!("bits must be in [2, 8], got {bits}")));
        }
        if granularity == Granularity::Group(0) {
            return Err(QepError::InvalidConfig("group size must be positive".into()));
        }
        Ok(Self {
            bits,
            granularity,
            symmetric,
            kind,
        })
    }

    /// Asymmetric per-channel round-to-nearest.
    pub fn rtn(bits: u8) -> Result<Self> {
        Self::new(bits, Granularity::PerChannel, false, QuantizerKind::Rtn)
    }

    pub fn with_kind(mut self, kind: QuantizerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_granularity(self, granularity: Granularity) -> Result<Self> {
        Self::new(self.bits, granularity, self.symmetric, self.kind)
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    /// Column span of one grid for a matrix with `cols` columns.
    pub fn group_size(&self, cols: usize) -> Result<usize> {
        match self.granularity {
            Granularity::PerChannel => Ok(cols),
            Granularity::Group(g) if cols % g == 0 => Ok(g),
            Granularity::Group(g) => Err(QepError::InvalidConfig(format!(
                "group size {g} does not divide column count {cols}"
            ))),
        }
    }
}

/// Linear grid `scale·(q − zero_point)` for integer `q ∈ [0, 2^bits − 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantGrid {
    pub scale: f64,
    pub zero_point: f64,
    pub bits: u8,
}

impl QuantGrid {
    pub fn max_code(&self) -> u8 {
        ((1u16 << self.bits) - 1) as u8
    }

    pub fn level_count(&self) -> usize {
        1 << self.bits
    }

    /// Nearest code, clamped to the grid range.
    #[inline]
    pub fn quantize(&self, v: f64) -> u8 {
        let q = (v / self.scale + self.zero_point).round();
        q.clamp(0.0, self.max_code() as f64) as u8
    }

    #[inline]
    pub fn dequantize(&self, code: u8) -> f64 {
        self.scale * (code as f64 - self.zero_point)
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.max_code()).map(move |q| self.dequantize(q))
    }
}

/// Power-of-two step used for degenerate (constant) slices, so that the
/// constant is reproduced exactly.
fn degenerate_scale(magnitude: f64) -> f64 {
    let exp = magnitude.max(1.0).log2().floor() as i32;
    2f64.powi(exp - 24)
}

/// Min-max grid for a row or group slice.
///
/// Asymmetric: `scale = (max − min)/(2^b − 1)`, `zero_point = −min/scale`.
/// Symmetric: `scale = max|v|/(2^(b−1) − 1)`, `zero_point = 2^(b−1)`.
pub fn fit_grid(values: &[f64], bits: u8, symmetric: bool) -> QuantGrid {
    assert!(!values.is_empty(), "fit_grid on an empty slice");
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let top = ((1u32 << bits) - 1) as f64;
    if symmetric {
        let half = (1u32 << (bits - 1)) as f64;
        let amax = lo.abs().max(hi.abs());
        let mut scale = amax / (half - 1.0);
        if !(scale.is_normal()) {
            scale = degenerate_scale(amax);
        }
        QuantGrid {
            scale,
            zero_point: half,
            bits,
        }
    } else {
        let mut scale = (hi - lo) / top;
        if !(scale.is_normal()) {
            scale = degenerate_scale(lo.abs().max(hi.abs()));
        }
        QuantGrid {
            scale,
            zero_point: -lo / scale,
            bits,
        }
    }
}

/// Integer codes, their grids, and the cached dequantized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    codes: Vec<u8>,
    grids: Vec<QuantGrid>,
    group_size: usize,
    dequantized: Matrix,
}

impl QuantizedMatrix {
    fn from_rows(rows: Vec<(Vec<u8>, Vec<QuantGrid>)>, cols: usize, group_size: usize) -> Self {
        let n = rows.len();
        let mut codes = Vec::with_capacity(n * cols);
        let mut grids = Vec::with_capacity(n * cols / group_size);
        for (c, g) in rows {
            codes.extend(c);
            grids.extend(g);
        }
        let per_row = cols / group_size;
        let data = codes
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                let (i, j) = (idx / cols, idx % cols);
                grids[i * per_row + j / group_size].dequantize(c)
            })
            .collect();
        Self {
            codes,
            grids,
            group_size,
            dequantized: Matrix::from_raw(n, cols, data),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.dequantized.shape()
    }

    pub fn code(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.dequantized.cols() + j]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// Grids in row-major `(row, group)` order.
    pub fn grids(&self) -> &[QuantGrid] {
        &self.grids
    }

    pub fn grid_for(&self, i: usize, j: usize) -> &QuantGrid {
        let per_row = self.dequantized.cols() / self.group_size;
        &self.grids[i * per_row + j / self.group_size]
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn dequantized(&self) -> &Matrix {
        &self.dequantized
    }

    pub fn into_dequantized(self) -> Matrix {
        self.dequantized
    }
}

fn row_grids(row: &[f64], group: usize, cfg: &QuantConfig) -> Vec<QuantGrid> {
    row.chunks(group)
        .map(|g| fit_grid(g, cfg.bits, cfg.symmetric))
        .collect()
}

/// Round-to-nearest on per-row or per-group min-max grids.
pub fn rtn_quantize(w: &Matrix, cfg: &QuantConfig) -> Result<QuantizedMatrix> {
    let cols = w.cols();
    let group = cfg.group_size(cols)?;
    let rows = par::map_indices(w.rows(), |i| {
        let row = w.row(i);
        let grids = row_grids(row, group, cfg);
        let codes = row
            .iter()
            .enumerate()
            .map(|(j, &v)| grids[j / group].quantize(v))
            .collect();
        (codes, grids)
    });
    Ok(QuantizedMatrix::from_rows(rows, cols, group))
}

/// Quantizes one row left to right. `upper` is the upper Cholesky factor of
/// `H⁻¹`; after column `j` is rounded, `(w_j − ŵ_j)/U_jj · U_jk` is
/// subtracted from every later column `k`.
pub(crate) fn compensate_row(row: &[f64], grids: &[QuantGrid], group: usize, upper: &Matrix) -> Vec<u8> {
    let n = row.len();
    let mut work = row.to_vec();
    let mut codes = Vec::with_capacity(n);
    for j in 0..n {
        let grid = &grids[j / group];
        let code = grid.quantize(work[j]);
        codes.push(code);
        let err = (work[j] - grid.dequantize(code)) / upper.get(j, j);
        let u_row = upper.row(j);
        for k in j + 1..n {
            work[k] -= err * u_row[k];
        }
    }
    codes
}

/// Sequential column-wise quantization with inverse-Hessian error
/// compensation. Grids are fitted on the uncompensated weights; compensated
/// values falling outside a grid are clamped to its endpoints.
pub fn compensated_quantize(w: &Matrix, h: &HessianMatrix, cfg: &QuantConfig) -> Result<QuantizedMatrix> {
    let cols = w.cols();
    if h.dim() != cols {
        return Err(QepError::dim("compensated_quantize", format!("Hessian dim = {cols}"), h.dim()));
    }
    let group = cfg.group_size(cols)?;
    let h_inv = h.cholesky()?.inverse();
    let upper = Cholesky::factor(&h_inv)?.upper();
    let rows = par::map_indices(w.rows(), |i| {
        let row = w.row(i);
        let grids = row_grids(row, group, cfg);
        let codes = compensate_row(row, &grids, group, &upper);
        (codes, grids)
    });
    Ok(QuantizedMatrix::from_rows(rows, cols, group))
}

/// Dispatches on `cfg.kind()`. The Hessian is required for the compensated
/// quantizer and ignored by RTN.
pub fn quantize(w: &Matrix, h: Option<&HessianMatrix>, cfg: &QuantConfig) -> Result<QuantizedMatrix> {
    match cfg.kind {
        QuantizerKind::Rtn => rtn_quantize(w, cfg),
        QuantizerKind::Compensated => {
            let h = h.ok_or_else(|| QepError::InvalidConfig("compensated quantizer needs a Hessian".into()))?;
            compensated_quantize(w, h, cfg)
        }
    }
}

/// `‖(W − Ŵ)·X‖_F²`.
pub fn layer_objective(w: &Matrix, w_hat: &Matrix, x: &Matrix) -> Result<f64> {
    Ok(w.sub(w_hat)?.matmul(x)?.frobenius_norm_sq())
}
