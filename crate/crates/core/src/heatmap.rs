//! Per-point confidence maps, their negative-log cost form, and the
//! sampling and smoothing routines the trackers use on them.

use nalgebra::{Point2, Vector2};
use thiserror::Error;

/// Default Gaussian label width in heatmap pixels.
pub const DEFAULT_LABEL_SIGMA: f64 = 5.0;
/// Floor added to every heatmap value before normalisation.
pub const DEFAULT_COST_EPS: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum HeatmapError {
    #[error("channel {channel} out of range (stack has {channels})")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("expected {expected} values for the stack geometry, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("heatmap value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("heatmap dimensions must be positive")]
    EmptyGrid,
}

/// One confidence map per model point, stored channel-major and row-major
/// within a channel. Values are finite and lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapStack {
    channels: usize,
    height: usize,
    width: usize,
    scale: f32,
    data: Vec<f32>,
}

impl HeatmapStack {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        scale: f32,
        data: Vec<f32>,
    ) -> Result<Self, HeatmapError> {
        if height == 0 || width == 0 {
            return Err(HeatmapError::EmptyGrid);
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(HeatmapError::SizeMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(HeatmapError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            channels,
            height,
            width,
            scale,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, scale: f32) -> Self {
        assert!(height > 0 && width > 0, "heatmap dimensions must be positive");
        Self {
            channels,
            height,
            width,
            scale,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The label scale `s` the stack was produced with.
    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> Result<&[f32], HeatmapError> {
        self.check(c)?;
        let n = self.plane();
        Ok(&self.data[c * n..(c + 1) * n])
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    fn check(&self, c: usize) -> Result<(), HeatmapError> {
        if c >= self.channels {
            Err(HeatmapError::ChannelOutOfRange {
                channel: c,
                channels: self.channels,
            })
        } else {
            Ok(())
        }
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.plane() + y * self.width + x]
    }

    /// Location `(x, y)` and value of the channel maximum. Ties resolve to
    /// the first cell in row-major order.
    pub fn argmax(&self, c: usize) -> Result<(usize, usize, f32), HeatmapError> {
        let ch = self.channel(c)?;
        let (i, v) = ch
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        Ok((i % self.width, i / self.width, v))
    }

    pub fn max(&self, c: usize) -> Result<f32, HeatmapError> {
        Ok(self.argmax(c)?.2)
    }

    /// Bilinear sample of channel `c`; `0.0` outside `[0, W-1] x [0, H-1]`.
    pub fn sample(&self, c: usize, p: &Point2<f64>) -> Result<f64, HeatmapError> {
        let ch = self.channel(c)?;
        Ok(bilinear(ch, self.width, self.height, p.x, p.y).map_or(0.0, |s| s.value))
    }

    pub(crate) fn sample_unchecked(&self, c: usize, p: &Point2<f64>) -> f64 {
        let n = self.plane();
        bilinear(&self.data[c * n..(c + 1) * n], self.width, self.height, p.x, p.y)
            .map_or(0.0, |s| s.value)
    }

    /// Adds a Gaussian blob of peak `amplitude` to channel `c`, saturating
    /// at 1. The blob is cut off beyond [`GAUSSIAN_CUTOFF`] standard
    /// deviations per axis.
    pub fn add_gaussian(&mut self, c: usize, centre: &Point2<f64>, sigma: f64, amplitude: f64) {
        let w = self.width;
        let Some((x0, gx)) = gaussian_profile(self.width, centre.x, sigma) else {
            return;
        };
        let Some((y0, gy)) = gaussian_profile(self.height, centre.y, sigma) else {
            return;
        };
        let ch = self.channel_mut(c);
        for (y, &wy) in (y0..).zip(&gy) {
            let a = amplitude * wy;
            let row = &mut ch[y * w + x0..y * w + x0 + gx.len()];
            for (v, &wx) in row.iter_mut().zip(&gx) {
                *v = (*v as f64 + a * wx).min(1.0) as f32;
            }
        }
    }

    /// Per-channel Gaussian blur; see [`smooth`].
    pub fn smoothed(&self, blur_sigma: f64) -> HeatmapStack {
        smooth(self, blur_sigma)
    }
}

/// Label blobs are zero further than this many standard deviations from
/// their centre along either axis (the cut-off value is `exp(-32)`).
pub const GAUSSIAN_CUTOFF: f64 = 8.0;

/// `exp(-(i - mu)^2 / (2 sigma^2))` for the indices `i` in `0..n` within
/// the cut-off, as `(first index, values)`.
fn gaussian_profile(n: usize, mu: f64, sigma: f64) -> Option<(usize, Vec<f64>)> {
    let reach = GAUSSIAN_CUTOFF * sigma;
    let lo = (mu - reach).ceil().max(0.0);
    let hi = (mu + reach).floor().min(n as f64 - 1.0);
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return None;
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let (lo, hi) = (lo as usize, hi as usize);
    let values = (lo..=hi)
        .map(|i| {
            let d = i as f64 - mu;
            (-d * d * inv).exp()
        })
        .collect();
    Some((lo, values))
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BilinearSample {
    pub value: f64,
    pub grad: Vector2<f64>,
}

/// Bilinear interpolation on a row-major grid. Returns `None` outside
/// `[0, w-1] x [0, h-1]`. The gradient is the exact derivative of the
/// bilinear patch of the cell containing the point (cells are half-open
/// towards the upper index, the last row/column belongs to the cell below).
pub(crate) fn bilinear(data: &[f32], w: usize, h: usize, x: f64, y: f64) -> Option<BilinearSample> {
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    if !(x >= 0.0 && x <= xmax && y >= 0.0 && y <= ymax) {
        return None;
    }
    let (x0, fx) = cell(x, w);
    let (y0, fy) = cell(y, h);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let v00 = data[y0 * w + x0] as f64;
    let v10 = data[y0 * w + x1] as f64;
    let v01 = data[y1 * w + x0] as f64;
    let v11 = data[y1 * w + x1] as f64;
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    let value = top + fy * (bottom - top);
    let dx = if x1 == x0 {
        0.0
    } else {
        (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
    };
    let dy = if y1 == y0 { 0.0 } else { bottom - top };
    Some(BilinearSample {
        value,
        grad: Vector2::new(dx, dy),
    })
}

fn cell(x: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (x.floor() as usize).min(n - 2);
    (i, x - i as f64)
}

/// Renders one Gaussian label channel per heatmap-space point, with unit
/// peak amplitude at the point.
pub fn render_labels(
    points: &[Point2<f64>],
    sigma: f64,
    dims: (usize, usize),
    scale: f32,
) -> HeatmapStack {
    assert!(sigma > 0.0, "label sigma must be positive");
    let (w, h) = dims;
    let mut stack = HeatmapStack::zeros(points.len(), h, w, scale);
    for (c, p) in points.iter().enumerate() {
        stack.add_gaussian(c, p, sigma, 1.0);
    }
    stack
}

/// Negative-log cost maps derived from a heatmap stack.
#[derive(Clone, Debug, PartialEq)]
pub struct CostStack {
    channels: usize,
    height: usize,
    width: usize,
    scale: f32,
    data: Vec<f32>,
    oob_cost: Vec<f64>,
}

impl CostStack {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    /// Cost assigned to samples outside the grid of channel `c`.
    pub fn oob_cost(&self, c: usize) -> f64 {
        self.oob_cost[c]
    }

    pub fn channel(&self, c: usize) -> Result<&[f32], HeatmapError> {
        if c >= self.channels {
            return Err(HeatmapError::ChannelOutOfRange {
                channel: c,
                channels: self.channels,
            });
        }
        let n = self.height * self.width;
        Ok(&self.data[c * n..(c + 1) * n])
    }

    /// Builds a cost stack directly from cost values, e.g. for synthetic
    /// landscapes. `oob_cost` is raised to at least each channel's maximum.
    pub fn from_costs(
        channels: usize,
        height: usize,
        width: usize,
        scale: f32,
        data: Vec<f32>,
        oob_cost: Vec<f64>,
    ) -> Result<Self, HeatmapError> {
        if height == 0 || width == 0 {
            return Err(HeatmapError::EmptyGrid);
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(HeatmapError::SizeMismatch {
                expected,
                got: data.len(),
            });
        }
        if oob_cost.len() != channels {
            return Err(HeatmapError::SizeMismatch {
                expected: channels,
                got: oob_cost.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(HeatmapError::ValueOutOfRange { index, value });
        }
        let n = height * width;
        let oob_cost = oob_cost
            .iter()
            .enumerate()
            .map(|(c, &o)| {
                let max = data[c * n..(c + 1) * n]
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(v as f64));
                o.max(max)
            })
            .collect();
        Ok(Self {
            channels,
            height,
            width,
            scale,
            data,
            oob_cost,
        })
    }

    /// Bilinear cost sample; `oob_cost` outside the grid.
    pub fn sample(&self, c: usize, p: &Point2<f64>) -> f64 {
        self.sample_with_gradient(c, p).0
    }

    /// Cost and its image-plane gradient at `p`. Outside the grid the
    /// gradient is zero.
    pub fn sample_with_gradient(&self, c: usize, p: &Point2<f64>) -> (f64, Vector2<f64>) {
        let n = self.height * self.width;
        match bilinear(&self.data[c * n..(c + 1) * n], self.width, self.height, p.x, p.y) {
            Some(s) => (s.value, s.grad),
            None => (self.oob_cost[c], Vector2::zeros()),
        }
    }

    /// Location and value of the minimum of channel `c`.
    pub fn argmin(&self, c: usize) -> Result<(usize, usize, f32), HeatmapError> {
        let ch = self.channel(c)?;
        let (i, v) = ch
            .iter()
            .enumerate()
            .fold((0, f32::INFINITY), |best, (i, &v)| {
                if v < best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        Ok((i % self.width, i / self.width, v))
    }
}

/// Normalises each channel to sum to one (after adding `eps` to every
/// cell) and takes the negative log.
pub fn to_cost(stack: &HeatmapStack, eps: f64) -> CostStack {
    assert!(eps > 0.0, "cost eps must be positive");
    let n = stack.plane();
    let mut data = vec![0.0f32; stack.data.len()];
    let mut oob_cost = Vec::with_capacity(stack.channels);
    for (ch, out) in stack.data.chunks_exact(n).zip(data.chunks_exact_mut(n)) {
        let total: f64 = ch.iter().map(|&v| v as f64).sum::<f64>() + eps * n as f64;
        let log_total = total.ln();
        let empty = (log_total - eps.ln()) as f32;
        let mut max = empty as f64;
        for (o, &v) in out.iter_mut().zip(ch) {
            *o = if v == 0.0 {
                empty
            } else {
                let cost = (log_total - (v as f64 + eps).ln()) as f32;
                max = max.max(cost as f64);
                cost
            };
        }
        oob_cost.push((log_total - eps.ln()).max(max));
    }
    CostStack {
        channels: stack.channels,
        height: stack.height,
        width: stack.width,
        scale: stack.scale,
        data,
        oob_cost,
    }
}

/// Normalised 1D Gaussian kernel with radius `ceil(4 sigma)`.
fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Mirror index into `0..n` with the edge sample repeated
/// (`... c b a | a b c ... x y z | z y x ...`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Smallest `(x0, x1, y0, y1)` box holding every nonzero value of a plane.
fn support(plane: &[f32], w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (y, row) in plane.chunks_exact(w).enumerate() {
        let Some(first) = row.iter().position(|&v| v != 0.0) else {
            continue;
        };
        let last = row.iter().rposition(|&v| v != 0.0).unwrap_or(first);
        bbox = Some(match bbox {
            None => (first, last, y, y),
            Some((x0, x1, y0, _)) => (x0.min(first), x1.max(last), y0, y),
        });
    }
    bbox
}

/// Per-channel Gaussian convolution with reflective boundaries.
/// `blur_sigma == 0` returns an identical copy.
///
/// Only the support of each channel, grown by the kernel radius, is
/// convolved; everything further away stays exactly zero.
pub fn smooth(stack: &HeatmapStack, blur_sigma: f64) -> HeatmapStack {
    assert!(blur_sigma >= 0.0, "blur sigma must be non-negative");
    if blur_sigma == 0.0 {
        return stack.clone();
    }
    let kernel = gaussian_kernel(blur_sigma);
    let radius = kernel.len() / 2;
    let (w, h) = (stack.width, stack.height);
    let mut out = HeatmapStack::zeros(stack.channels, h, w, stack.scale);
    let mut tmp = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * radius];
    for c in 0..stack.channels {
        let src = &stack.data[c * w * h..(c + 1) * w * h];
        let Some((x0, x1, y0, y1)) = support(src, w) else {
            continue;
        };
        let (ox0, ox1) = (x0.saturating_sub(radius), (x1 + radius).min(w - 1));
        let (oy0, oy1) = (y0.saturating_sub(radius), (y1 + radius).min(h - 1));
        // horizontal pass over the live rows
        for y in y0..=y1 {
            let row = &src[y * w..(y + 1) * w];
            for (j, slot) in padded.iter_mut().enumerate() {
                *slot = row[reflect(j as isize - radius as isize, w)];
            }
            let dst = &mut tmp[y * w..(y + 1) * w];
            for x in ox0..=ox1 {
                let window = &padded[x..x + kernel.len()];
                dst[x] = window.iter().zip(&kernel).map(|(a, b)| a * b).sum();
            }
        }
        // vertical pass, accumulated row by row
        let dst = out.channel_mut(c);
        for y in oy0..=oy1 {
            let out_row = &mut dst[y * w + ox0..y * w + ox1 + 1];
            for (k, &wk) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - radius as isize, h);
                if sy < y0 || sy > y1 {
                    continue;
                }
                let in_row = &tmp[sy * w + ox0..sy * w + ox1 + 1];
                for (o, &v) in out_row.iter_mut().zip(in_row) {
                    *o += wk * v;
                }
            }
            for v in out_row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn label_peak_at_point() {
        let st = render_labels(&[Point2::new(10.0, 10.0)], 5.0, (32, 32), 1.0);
        assert_eq!(st.argmax(0).unwrap(), (10, 10, 1.0));
    }

    #[test]
    fn far_label_is_empty() {
        let st = render_labels(&[Point2::new(-50.0, -50.0)], 5.0, (64, 64), 1.0);
        assert!((st.max(0).unwrap() as f64) < 1e-10);
    }

    #[test]
    fn label_value_matches_formula() {
        let p = Point2::new(12.3, 7.8);
        let st = render_labels(&[p], 3.0, (24, 20), 1.0);
        let (x, y) = (15usize, 4usize);
        let d2 = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
        assert_abs_diff_eq!(st.get(0, x, y) as f64, (-d2 / 18.0).exp(), epsilon = 1e-7);
    }

    #[test]
    fn sample_nodes_constants_and_bounds() {
        let st = render_labels(&[Point2::new(4.3, 2.1)], 2.0, (8, 6), 1.0);
        assert_abs_diff_eq!(
            st.sample(0, &Point2::new(3.0, 2.0)).unwrap(),
            st.get(0, 3, 2) as f64,
            epsilon = 0.0
        );
        let c = HeatmapStack::new(1, 3, 3, 1.0, vec![0.25; 9]).unwrap();
        for p in [(0.0, 0.0), (1.3, 0.7), (2.0, 2.0), (0.5, 1.999)] {
            assert_abs_diff_eq!(c.sample(0, &Point2::new(p.0, p.1)).unwrap(), 0.25, epsilon = 1e-12);
        }
        assert_eq!(c.sample(0, &Point2::new(-1.0, -1.0)).unwrap(), 0.0);
        assert_eq!(c.sample(0, &Point2::new(2.0001, 1.0)).unwrap(), 0.0);
        assert_eq!(
            c.sample(1, &Point2::new(0.0, 0.0)),
            Err(HeatmapError::ChannelOutOfRange { channel: 1, channels: 1 })
        );
    }

    #[test]
    fn uniform_cost() {
        let st = HeatmapStack::new(1, 2, 2, 1.0, vec![0.5; 4]).unwrap();
        let cost = to_cost(&st, 1e-8);
        for &v in cost.channel(0).unwrap() {
            assert_abs_diff_eq!(v as f64, 4f64.ln(), epsilon = 1e-6);
        }
    }

    #[test]
    fn single_hot_cost() {
        let mut vals = vec![0.0; 16];
        vals[5] = 1.0;
        let st = HeatmapStack::new(1, 4, 4, 1.0, vals).unwrap();
        let cost = to_cost(&st, 1e-12);
        let ch = cost.channel(0).unwrap();
        assert!(ch[5] < 1e-6);
        assert!(ch.iter().enumerate().all(|(i, &v)| i == 5 || v > 20.0));
        assert!(cost.oob_cost(0) >= ch.iter().cloned().fold(0.0, f32::max) as f64);
    }

    #[test]
    fn cost_monotone_and_normalised() {
        let st = render_labels(&[Point2::new(9.2, 14.7)], 4.0, (32, 24), 1.0);
        let cost = to_cost(&st, DEFAULT_COST_EPS);
        let h = st.channel(0).unwrap();
        let c = cost.channel(0).unwrap();
        for i in 0..h.len() {
            for j in 0..h.len() {
                if h[i] > h[j] {
                    assert!(c[i] <= c[j]);
                }
            }
        }
        let mass: f64 = c.iter().map(|&v| (-(v as f64)).exp()).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-5);
        let (ax, ay, _) = st.argmax(0).unwrap();
        let (mx, my, _) = cost.argmin(0).unwrap();
        assert_eq!((ax, ay), (mx, my));
    }

    #[test]
    fn smooth_zero_is_identity() {
        let st = render_labels(&[Point2::new(3.0, 5.0)], 2.0, (16, 16), 0.5);
        assert_eq!(smooth(&st, 0.0), st);
    }

    #[test]
    fn smooth_delta_gives_gaussian() {
        let mut vals = vec![0.0; 41 * 41];
        vals[20 * 41 + 20] = 1.0;
        let st = HeatmapStack::new(1, 41, 41, 1.0, vals).unwrap();
        let out = smooth(&st, 2.0);
        assert_eq!(out.argmax(0).unwrap().0, 20);
        assert_eq!(out.argmax(0).unwrap().1, 20);
        // separable: value ratio one pixel off-centre = exp(-1/8)
        let r = out.get(0, 21, 20) / out.get(0, 20, 20);
        assert_abs_diff_eq!(r as f64, (-1.0f64 / 8.0).exp(), epsilon = 1e-4);
        assert_abs_diff_eq!(out.get(0, 19, 20), out.get(0, 21, 20), epsilon = 1e-9);
    }

    #[test]
    fn smooth_preserves_mass() {
        let st = render_labels(&[Point2::new(32.0, 32.0)], 4.0, (64, 64), 1.0);
        let before: f64 = st.values().iter().map(|&v| v as f64).sum();
        let after: f64 = smooth(&st, 3.0).values().iter().map(|&v| v as f64).sum();
        assert!(((after - before) / before).abs() < 1e-4);
        // edge-touching blob: reflection keeps mass too
        let edge = render_labels(&[Point2::new(1.0, 60.0)], 3.0, (64, 64), 1.0);
        let b: f64 = edge.values().iter().map(|&v| v as f64).sum();
        let a: f64 = smooth(&edge, 5.0).values().iter().map(|&v| v as f64).sum();
        assert!(((a - b) / b).abs() < 1e-4);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(12, 5), 2);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(matches!(
            HeatmapStack::new(1, 1, 2, 1.0, vec![0.0, 1.5]),
            Err(HeatmapError::ValueOutOfRange { index: 1, .. })
        ));
        assert!(HeatmapStack::new(1, 1, 2, 1.0, vec![0.0, f32::NAN]).is_err());
        assert!(matches!(
            HeatmapStack::new(2, 2, 2, 1.0, vec![0.0; 4]),
            Err(HeatmapError::SizeMismatch { .. })
        ));
    }
}
