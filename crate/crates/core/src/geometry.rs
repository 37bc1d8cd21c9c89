//! Mask competition, blur-suppression compositing, mask resizing and the
//! masked pooling prefix used to build component-aware features.
//!
//! All grids are row-major. Everything here is a pure function.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no candidate masks")]
    EmptyCandidates,
    #[error("mask mass {0} is too small to pool")]
    ZeroMaskMass(f64),
    #[error("mask value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid blur specification: {0}")]
    InvalidBlur(String),
}

/// What a mask represents in the component pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Class foreground mask.
    Foreground,
    /// Raw per-component activation before competition.
    Candidate,
    /// Per-component mask after competition.
    Competed,
    /// Competed mask resized to the patch-token grid.
    TokenResized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    kind: MaskKind,
}

impl MaskGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, kind: MaskKind) -> Result<Self, GeometryError> {
        if rows * cols != values.len() || rows == 0 || cols == 0 {
            return Err(GeometryError::ShapeMismatch(format!(
                "{rows}x{cols} grid with {} values",
                values.len()
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeometryError::OutOfRange(bad));
        }
        Ok(MaskGrid {
            rows,
            cols,
            values,
            kind,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64, kind: MaskKind) -> Result<Self, GeometryError> {
        Self::new(rows, cols, vec![value; rows * cols], kind)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn crop(&self, window: &CropWindow) -> MaskGrid {
        let mut values = Vec::with_capacity(window.height * window.width);
        for r in window.top..window.top + window.height {
            let start = r * self.cols + window.left;
            values.extend_from_slice(&self.values[start..start + window.width]);
        }
        MaskGrid {
            rows: window.height,
            cols: window.width,
            values,
            kind: self.kind,
        }
    }
}

/// A dense `rows x cols x channels` real grid (an image or feature map).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        if rows * cols * channels != data.len() || rows == 0 || cols == 0 || channels == 0 {
            return Err(GeometryError::ShapeMismatch(format!(
                "{rows}x{cols}x{channels} grid with {} values",
                data.len()
            )));
        }
        Ok(ImageGrid {
            rows,
            cols,
            channels,
            data,
        })
    }

    fn at(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.cols + c) * self.channels + ch]
    }

    pub fn crop(&self, window: &CropWindow) -> ImageGrid {
        let mut data = Vec::with_capacity(window.height * window.width * self.channels);
        for r in window.top..window.top + window.height {
            let start = (r * self.cols + window.left) * self.channels;
            data.extend_from_slice(&self.data[start..start + window.width * self.channels]);
        }
        ImageGrid {
            rows: window.height,
            cols: window.width,
            channels: self.channels,
            data,
        }
    }
}

/// Competes candidate component masks against each other and a background
/// term: `m_p = exp(m'_p) / (exp(1 - m_fg) + sum_q exp(m'_q))`, per pixel.
pub fn compete_masks(candidates: &[MaskGrid], foreground: &MaskGrid) -> Result<Vec<MaskGrid>, GeometryError> {
    if candidates.is_empty() {
        return Err(GeometryError::EmptyCandidates);
    }
    let shape = foreground.shape();
    if let Some(c) = candidates.iter().find(|c| c.shape() != shape) {
        return Err(GeometryError::ShapeMismatch(format!(
            "candidate {:?} vs foreground {shape:?}",
            c.shape()
        )));
    }
    let n = foreground.values.len();
    let mut outputs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); candidates.len()];
    for px in 0..n {
        let background = (1.0 - foreground.values[px]).exp();
        let exps: Vec<f64> = candidates.iter().map(|c| c.values[px].exp()).collect();
        let denom = background + exps.iter().sum::<f64>();
        for (out, e) in outputs.iter_mut().zip(&exps) {
            out.push(e / denom);
        }
    }
    Ok(outputs
        .into_iter()
        .map(|values| MaskGrid {
            rows: shape.0,
            cols: shape.1,
            values,
            kind: MaskKind::Competed,
        })
        .collect())
}

/// Background share `exp(1 - m_fg) / denominator` of [`compete_masks`].
pub fn background_share(candidates: &[MaskGrid], foreground: &MaskGrid) -> Result<Vec<f64>, GeometryError> {
    let competed = compete_masks(candidates, foreground)?;
    Ok((0..foreground.values.len())
        .map(|px| 1.0 - competed.iter().map(|m| m.values[px]).sum::<f64>())
        .collect())
}

/// Gaussian blur parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlurSpec {
    /// Gaussian sigma as a fraction of `min(rows, cols)`.
    pub sigma_fraction: f64,
    /// Kernel half-width in sigmas.
    pub radius_sigmas: f64,
}

impl Default for BlurSpec {
    fn default() -> Self {
        BlurSpec {
            sigma_fraction: 0.02,
            radius_sigmas: 3.0,
        }
    }
}

impl BlurSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.sigma_fraction > 0.0 && self.sigma_fraction.is_finite()) {
            return Err(GeometryError::InvalidBlur(format!(
                "sigma_fraction must be positive, got {}",
                self.sigma_fraction
            )));
        }
        if !(self.radius_sigmas >= 1.0 && self.radius_sigmas.is_finite()) {
            return Err(GeometryError::InvalidBlur(format!(
                "radius_sigmas must be at least 1, got {}",
                self.radius_sigmas
            )));
        }
        Ok(())
    }

    fn kernel(&self, rows: usize, cols: usize) -> Vec<f64> {
        let sigma = self.sigma_fraction * rows.min(cols) as f64;
        let radius = (self.radius_sigmas * sigma).ceil() as isize;
        let weights: Vec<f64> = (-radius..=radius)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with reflected boundaries.
pub fn gaussian_blur(grid: &ImageGrid, blur: &BlurSpec) -> Result<ImageGrid, GeometryError> {
    blur.validate()?;
    let kernel = blur.kernel(grid.rows, grid.cols);
    let radius = (kernel.len() / 2) as isize;
    let (rows, cols, chans) = (grid.rows, grid.cols, grid.channels);
    let mut horizontal = vec![0.0; grid.data.len()];
    for r in 0..rows {
        for c in 0..cols {
            for ch in 0..chans {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let cc = reflect(c as isize + k as isize - radius, cols);
                    acc += w * grid.at(r, cc, ch);
                }
                horizontal[(r * cols + c) * chans + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0; grid.data.len()];
    for r in 0..rows {
        for c in 0..cols {
            for ch in 0..chans {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let rr = reflect(r as isize + k as isize - radius, rows);
                    acc += w * horizontal[(rr * cols + c) * chans + ch];
                }
                out[(r * cols + c) * chans + ch] = acc;
            }
        }
    }
    ImageGrid::new(rows, cols, chans, out)
}

/// `x * m + blur(x) * (1 - m)`, channel-wise.
pub fn suppress_composite(grid: &ImageGrid, mask: &MaskGrid, blur: &BlurSpec) -> Result<ImageGrid, GeometryError> {
    if mask.shape() != (grid.rows, grid.cols) {
        return Err(GeometryError::ShapeMismatch(format!(
            "mask {:?} vs grid {:?}",
            mask.shape(),
            (grid.rows, grid.cols)
        )));
    }
    let blurred = gaussian_blur(grid, blur)?;
    let chans = grid.channels;
    let data = grid
        .data
        .iter()
        .zip(&blurred.data)
        .enumerate()
        .map(|(i, (&x, &b))| {
            let m = mask.values[i / chans];
            if m == 1.0 {
                x
            } else if m == 0.0 {
                b
            } else {
                x * m + b * (1.0 - m)
            }
        })
        .collect();
    ImageGrid::new(grid.rows, grid.cols, chans, data)
}

/// A rectangular crop region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Zoom-in window: bounding box of `{m_fg > threshold}`, grown by
/// `margin_fraction` of the grid size on every side and clamped.
/// `None` when no pixel exceeds the threshold.
pub fn foreground_window(foreground: &MaskGrid, threshold: f64, margin_fraction: f64) -> Option<CropWindow> {
    let (rows, cols) = foreground.shape();
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for r in 0..rows {
        for c in 0..cols {
            if foreground.get(r, c) > threshold {
                let b = bounds.get_or_insert((r, r, c, c));
                b.0 = b.0.min(r);
                b.1 = b.1.max(r);
                b.2 = b.2.min(c);
                b.3 = b.3.max(c);
            }
        }
    }
    let (r0, r1, c0, c1) = bounds?;
    let mr = (margin_fraction * rows as f64).ceil() as usize;
    let mc = (margin_fraction * cols as f64).ceil() as usize;
    let top = r0.saturating_sub(mr);
    let left = c0.saturating_sub(mc);
    let bottom = (r1 + mr).min(rows - 1);
    let right = (c1 + mc).min(cols - 1);
    Some(CropWindow {
        top,
        left,
        height: bottom - top + 1,
        width: right - left + 1,
    })
}

/// Overlap weights of an area-average downsample from `src` to `dst` cells:
/// `weights[o][s]` is the fraction of output cell `o` covered by source `s`.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged downsample of a mask onto the token grid.
pub fn resize_mask_to_grid(mask: &MaskGrid, grid_shape: (usize, usize)) -> Result<MaskGrid, GeometryError> {
    let (rows, cols) = mask.shape();
    let (gr, gc) = grid_shape;
    if gr == 0 || gc == 0 || gr > rows || gc > cols {
        return Err(GeometryError::ShapeMismatch(format!(
            "cannot area-resize {rows}x{cols} to {gr}x{gc}"
        )));
    }
    let wr = area_weights(rows, gr);
    let wc = area_weights(cols, gc);
    let mut values = Vec::with_capacity(gr * gc);
    for row_weights in &wr {
        for col_weights in &wc {
            let mut acc = 0.0;
            for &(r, a) in row_weights {
                for &(c, b) in col_weights {
                    acc += a * b * mask.get(r, c);
                }
            }
            values.push(acc.clamp(0.0, 1.0));
        }
    }
    Ok(MaskGrid {
        rows: gr,
        cols: gc,
        values,
        kind: MaskKind::TokenResized,
    })
}

/// Mask-weighted averages of token and position rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPrefix {
    pub token_prefix: Vec<f64>,
    pub position_prefix: Vec<f64>,
}

/// Smallest mask mass accepted by [`pooled_prefix`].
pub const MIN_MASK_MASS: f64 = 1e-12;

fn weighted_mean<R, T>(rows: &[R], mask: &[f64], mass: f64) -> Result<Vec<f64>, GeometryError>
where
    R: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let width = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let mut acc = vec![0.0; width];
    for (row, &w) in rows.iter().zip(mask) {
        let row = row.as_ref();
        if row.len() != width {
            return Err(GeometryError::ShapeMismatch("ragged rows".into()));
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += w * v.into();
        }
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// `(m^T tokens) / (1^T m)` and `(m^T positions) / (1^T m)`.
pub fn pooled_prefix<R, T, Q, U>(tokens: &[R], positions: &[Q], mask: &[f64]) -> Result<PooledPrefix, GeometryError>
where
    R: AsRef<[T]>,
    T: Copy + Into<f64>,
    Q: AsRef<[U]>,
    U: Copy + Into<f64>,
{
    if tokens.len() != mask.len() || positions.len() != mask.len() {
        return Err(GeometryError::ShapeMismatch(format!(
            "{} tokens, {} positions, mask of {}",
            tokens.len(),
            positions.len(),
            mask.len()
        )));
    }
    let mass: f64 = mask.iter().sum();
    if mass <= MIN_MASK_MASS {
        return Err(GeometryError::ZeroMaskMass(mass));
    }
    Ok(PooledPrefix {
        token_prefix: weighted_mean(tokens, mask, mass)?,
        position_prefix: weighted_mean(positions, mask, mass)?,
    })
}

/// Indices `{i : mask[i] > tau}` in ascending order.
pub fn binarize_mask<T: Copy + Into<f64>>(mask: &[T], tau: f64) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &v)| v.into() > tau)
        .map(|(i, _)| i)
        .collect()
}
