//! Image containers, the 4×4 ME-CFA pattern model, sub-mosaicking, sparse
//! bilinear interpolation, forward differences and flip/transpose transforms.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Dense `H × W × C` image, channels interleaved, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape {
                op: "Plane::from_vec",
                expected: format!("{height}x{width}x{channels}"),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a plane by evaluating `f(y, x, c)` at every entry.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = self.index(y, x, 0);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = self.index(y, x, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &Plane, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                op,
                expected: format!("{:?}", self.dims()),
                got: format!("{:?}", other.dims()),
            });
        }
        Ok(())
    }

    /// Single channel `c` as a one-channel plane.
    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < self.channels, "channel {c} out of range");
        Plane {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    /// Channels `start..start + count`.
    pub fn channel_range(&self, start: usize, count: usize) -> Plane {
        assert!(start + count <= self.channels, "channel range out of bounds");
        let mut data = Vec::with_capacity(self.height * self.width * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Plane {
            height: self.height,
            width: self.width,
            channels: count,
            data,
        }
    }

    /// Concatenates planes along the channel axis.
    pub fn concat(parts: &[&Plane]) -> Result<Plane> {
        let first = parts.first().ok_or_else(|| invalid("concat of zero planes"))?;
        for p in parts {
            if (p.height, p.width) != (first.height, first.width) {
                return Err(Error::Shape {
                    op: "Plane::concat",
                    expected: format!("{}x{}", first.height, first.width),
                    got: format!("{}x{}", p.height, p.width),
                });
            }
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.height * first.width * channels);
        for i in 0..first.height * first.width {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Ok(Plane {
            height: first.height,
            width: first.width,
            channels,
            data,
        })
    }

    /// Window of `height × width` pixels with top-left corner `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Plane> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(invalid(format!(
                "crop {height}x{width} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for y in y0..y0 + height {
            let i = self.index(y, x0, 0);
            data.extend_from_slice(&self.data[i..i + width * c]);
        }
        Ok(Plane {
            height,
            width,
            channels: c,
            data,
        })
    }

    /// Extends the plane to `height × width` by mirroring about the last
    /// row and column (`... a b c | b a ...`).
    pub fn mirror_pad(&self, height: usize, width: usize) -> Result<Plane> {
        if height < self.height || width < self.width {
            return Err(invalid("mirror_pad target smaller than source"));
        }
        if height >= 2 * self.height || width >= 2 * self.width {
            return Err(invalid("mirror_pad extends by more than one reflection"));
        }
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * n - 2 - i };
        Ok(Plane::from_fn(height, width, self.channels, |y, x, c| {
            self.get(reflect(y, self.height), reflect(x, self.width), c)
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        match self {
            Color::R => 0,
            Color::G => 1,
            Color::B => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::R => 'R',
            Color::G => 'G',
            Color::B => 'B',
        }
    }
}

/// One pattern site: a color filter plus an exposure level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Site {
    pub color: Color,
    pub exposure: usize,
}

pub const PERIOD: usize = 4;
pub const SITES: usize = PERIOD * PERIOD;

/// Bayer-derived layout: each 2×2 `G R / B G` cell carries one exposure,
/// with exposure 1 on the anti-diagonal cells.
pub const DEFAULT_PATTERN: &str = "G0 R0 G1 R1 B0 G0 B1 G1 G1 R1 G2 R2 B1 G1 B2 G2";

/// A 4×4 ME-CFA tile, repeated with period 4 in both axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MosaicPattern {
    cells: [Site; SITES],
}

impl Default for MosaicPattern {
    fn default() -> Self {
        parse_pattern(DEFAULT_PATTERN).expect("default pattern is valid")
    }
}

impl fmt::Display for MosaicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.cells.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", s.color.letter(), s.exposure)?;
        }
        Ok(())
    }
}

/// Parses 16 whitespace-separated tokens, row-major, each a color letter
/// followed by an exposure digit 0–2. The literal `default` selects
/// [`DEFAULT_PATTERN`].
pub fn parse_pattern(spec: &str) -> Result<MosaicPattern> {
    let spec = if spec.trim() == "default" { DEFAULT_PATTERN } else { spec };
    let tokens: Vec<&str> = spec.split_whitespace().collect();
    if tokens.len() != SITES {
        return Err(Error::Pattern(format!("expected 16 entries, got {}", tokens.len())));
    }
    let mut cells = [Site {
        color: Color::G,
        exposure: 0,
    }; SITES];
    for (cell, tok) in cells.iter_mut().zip(&tokens) {
        let mut chars = tok.chars();
        let (Some(c), Some(e), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(Error::Pattern(format!("malformed token {tok:?}")));
        };
        let color = match c.to_ascii_uppercase() {
            'R' => Color::R,
            'G' => Color::G,
            'B' => Color::B,
            _ => return Err(Error::Pattern(format!("malformed token {tok:?}"))),
        };
        let exposure = match e.to_digit(10) {
            Some(d) if d <= 2 => d as usize,
            _ => return Err(Error::Pattern(format!("malformed token {tok:?}"))),
        };
        *cell = Site { color, exposure };
    }
    for color in Color::ALL {
        if !cells.iter().any(|s| s.color == color) {
            return Err(Error::Pattern(format!("missing color {}", color.letter())));
        }
    }
    let levels = cells.iter().map(|s| s.exposure).max().unwrap_or(0) + 1;
    for e in 0..levels {
        if !cells.iter().any(|s| s.exposure == e) {
            return Err(Error::Pattern(format!("exposure {e} unused while {} is present", levels - 1)));
        }
    }
    Ok(MosaicPattern { cells })
}

impl MosaicPattern {
    /// Site at grid position `index` (row-major within the tile).
    pub fn cell(&self, index: usize) -> Site {
        self.cells[index]
    }

    pub fn cells(&self) -> &[Site; SITES] {
        &self.cells
    }

    /// Sub-mosaic channel of image pixel `(y, x)`.
    #[inline]
    pub fn channel_at(y: usize, x: usize) -> usize {
        (y % PERIOD) * PERIOD + x % PERIOD
    }

    pub fn site_at(&self, y: usize, x: usize) -> Site {
        self.cells[Self::channel_at(y, x)]
    }

    /// Number of exposure levels used by the tile.
    pub fn exposures(&self) -> usize {
        self.cells.iter().map(|s| s.exposure).max().unwrap_or(0) + 1
    }

    /// Channels carrying `(color, exposure)`, ascending.
    pub fn class_channels(&self, color: Color, exposure: usize) -> Vec<usize> {
        (0..SITES)
            .filter(|&i| self.cells[i] == Site { color, exposure })
            .collect()
    }
}

/// Attenuation factors ρ_k and exposure time Δt.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSpec {
    pub rho: Vec<f64>,
    pub delta_t: f64,
}

impl ExposureSpec {
    pub fn new(rho: Vec<f64>, delta_t: f64) -> Result<Self> {
        let spec = Self { rho, delta_t };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.is_empty() {
            return Err(invalid("no exposure levels"));
        }
        if !self.rho.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(invalid("attenuation factors must be positive"));
        }
        if self.rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("attenuation factors must be strictly increasing"));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(invalid("exposure time must be positive"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.rho.len()
    }
}

impl Default for ExposureSpec {
    fn default() -> Self {
        Self {
            rho: vec![1.0, 4.0, 16.0],
            delta_t: 1.0,
        }
    }
}

/// Sub-mosaicked RAW data: one channel per tile position.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseStack {
    pub planes: Plane,
    pub mask: Plane,
}

impl SparseStack {
    pub fn height(&self) -> usize {
        self.planes.height()
    }

    pub fn width(&self) -> usize {
        self.planes.width()
    }

    /// Checks the one-hot mask and zero-off-mask invariants.
    pub fn is_consistent(&self) -> bool {
        self.planes.dims() == self.mask.dims()
            && self.mask.data().chunks_exact(self.mask.channels()).all(|m| {
                m.iter().filter(|&&v| v == 1.0).count() == 1 && m.iter().all(|&v| v == 0.0 || v == 1.0)
            })
            && self
                .planes
                .data()
                .iter()
                .zip(self.mask.data())
                .all(|(v, m)| *m == 1.0 || *v == 0.0)
    }
}

/// Mask of the 16 sub-mosaic channels for an image of the given size.
pub fn submosaic_mask(height: usize, width: usize) -> Plane {
    Plane::from_fn(height, width, SITES, |y, x, c| {
        if MosaicPattern::channel_at(y, x) == c {
            1.0
        } else {
            0.0
        }
    })
}

/// Splits a single-channel mosaic into its 16 sparse channels.
///
/// Channel identity depends only on the grid position, so `_pattern` is
/// accepted for symmetry with the rest of the pipeline.
pub fn submosaic(raw: &Plane, _pattern: &MosaicPattern) -> Result<SparseStack> {
    let (h, w, c) = raw.dims();
    if c != 1 {
        return Err(invalid(format!("submosaic expects one channel, got {c}")));
    }
    if h < PERIOD || w < PERIOD {
        return Err(invalid(format!("raw {h}x{w} is smaller than one 4x4 tile")));
    }
    let mask = submosaic_mask(h, w);
    let planes = Plane::from_fn(h, w, SITES, |y, x, ch| {
        if MosaicPattern::channel_at(y, x) == ch {
            raw.get(y, x, 0)
        } else {
            0.0
        }
    });
    Ok(SparseStack { planes, mask })
}

/// Sums the sparse channels back into a mosaic.
pub fn flatten(stack: &SparseStack) -> Plane {
    debug_assert!(stack.is_consistent(), "sparse stack violates the one-hot mask");
    let p = &stack.planes;
    let data = p.data().chunks_exact(p.channels()).map(|px| px.iter().sum()).collect();
    Plane::from_vec(p.height(), p.width(), 1, data).expect("one value per pixel")
}

/// Linear interpolation coordinates of every output index along one axis:
/// `(i0, i1, t)` with value `(1 - t)·s[i0] + t·s[i1]`.
fn axis_weights(samples: &[usize], n: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        while k + 1 < samples.len() && samples[k + 1] <= i {
            k += 1;
        }
        let s0 = samples[k];
        if i <= s0 || k + 1 == samples.len() {
            out.push((s0, s0, 0.0));
        } else {
            let s1 = samples[k + 1];
            out.push((s0, s1, (i - s0) as f64 / (s1 - s0) as f64));
        }
    }
    out
}

/// Per-channel separable bilinear interpolation of sparse samples.
///
/// The sampled sites of each channel must form a product lattice (a set of
/// rows × a set of columns), as any periodic CFA sub-mosaic does. Sampled
/// sites keep their values exactly; beyond the outermost samples the
/// nearest sample is replicated.
pub fn interp_sparse(data: &Plane, mask: &Plane) -> Result<Plane> {
    data.same_dims(mask, "interp_sparse")?;
    let (h, w, ch) = data.dims();
    let mut out = Plane::zeros(h, w, ch);
    for c in 0..ch {
        let rows: Vec<usize> = (0..h).filter(|&y| (0..w).any(|x| mask.get(y, x, c) != 0.0)).collect();
        let cols: Vec<usize> = (0..w).filter(|&x| (0..h).any(|y| mask.get(y, x, c) != 0.0)).collect();
        if rows.is_empty() {
            return Err(Error::EmptyMask { channel: c });
        }
        for y in 0..h {
            for x in 0..w {
                let sampled = mask.get(y, x, c) != 0.0;
                let on_lattice = rows.binary_search(&y).is_ok() && cols.binary_search(&x).is_ok();
                if sampled != on_lattice {
                    return Err(invalid(format!("channel {c}: sampled sites are not a product lattice")));
                }
            }
        }
        let wy = axis_weights(&rows, h);
        let wx = axis_weights(&cols, w);
        for (y, &(y0, y1, ty)) in wy.iter().enumerate() {
            for (x, &(x0, x1, tx)) in wx.iter().enumerate() {
                let v = if ty == 0.0 && tx == 0.0 {
                    data.get(y0, x0, c)
                } else if ty == 0.0 {
                    (1.0 - tx) * data.get(y0, x0, c) + tx * data.get(y0, x1, c)
                } else if tx == 0.0 {
                    (1.0 - ty) * data.get(y0, x0, c) + ty * data.get(y1, x0, c)
                } else {
                    let top = (1.0 - tx) * data.get(y0, x0, c) + tx * data.get(y0, x1, c);
                    let bottom = (1.0 - tx) * data.get(y1, x0, c) + tx * data.get(y1, x1, c);
                    (1.0 - ty) * top + ty * bottom
                };
                out.set(y, x, c, v);
            }
        }
    }
    Ok(out)
}

/// Forward differences per channel; the last column of `dx` and the last
/// row of `dy` are zero.
pub fn gradient(img: &Plane) -> (Plane, Plane) {
    let (h, w, c) = img.dims();
    let dx = Plane::from_fn(h, w, c, |y, x, ch| {
        if x + 1 < w {
            img.get(y, x + 1, ch) - img.get(y, x, ch)
        } else {
            0.0
        }
    });
    let dy = Plane::from_fn(h, w, c, |y, x, ch| {
        if y + 1 < h {
            img.get(y + 1, x, ch) - img.get(y, x, ch)
        } else {
            0.0
        }
    });
    (dx, dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    FlipH,
    FlipV,
    Transpose,
}

/// Applies a single flip or transpose as an index permutation.
pub fn augment(img: &Plane, t: Transform) -> Plane {
    let (h, w, c) = img.dims();
    match t {
        Transform::FlipH => Plane::from_fn(h, w, c, |y, x, ch| img.get(y, w - 1 - x, ch)),
        Transform::FlipV => Plane::from_fn(h, w, c, |y, x, ch| img.get(h - 1 - y, x, ch)),
        Transform::Transpose => Plane::from_fn(w, h, c, |y, x, ch| img.get(x, y, ch)),
    }
}

/// A member of the 8-element flip/transpose group, applied as
/// transpose, then horizontal flip, then vertical flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augment {
    pub flip_h: bool,
    pub flip_v: bool,
    pub transpose: bool,
}

impl Augment {
    pub const IDENTITY: Augment = Augment {
        flip_h: false,
        flip_v: false,
        transpose: false,
    };

    pub fn all() -> [Augment; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, a) in out.iter_mut().enumerate() {
            *a = Augment {
                flip_h: i & 1 != 0,
                flip_v: i & 2 != 0,
                transpose: i & 4 != 0,
            };
        }
        out
    }

    pub fn apply(&self, img: &Plane) -> Plane {
        let (h, w, c) = img.dims();
        let (oh, ow) = if self.transpose { (w, h) } else { (h, w) };
        let mut out = Plane::zeros(oh, ow, c);
        for y in 0..oh {
            for x in 0..ow {
                let (ty, tx) = (if self.flip_v { oh - 1 - y } else { y }, if self.flip_h { ow - 1 - x } else { x });
                let (sy, sx) = if self.transpose { (tx, ty) } else { (ty, tx) };
                out.pixel_mut(y, x).copy_from_slice(img.pixel(sy, sx));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Plane {
        Plane::from_fn(h, w, 1, |y, x, _| (y * w + x) as f64)
    }

    #[test]
    fn plane_rejects_bad_length() {
        assert!(Plane::from_vec(2, 2, 3, vec![0.0; 11]).is_err());
    }

    #[test]
    fn default_pattern_layout() {
        let p = MosaicPattern::default();
        assert_eq!(p.to_string(), DEFAULT_PATTERN);
        assert_eq!(p.exposures(), 3);
        for e in 0..3 {
            for c in Color::ALL {
                assert!(!p.class_channels(c, e).is_empty(), "{c:?}{e}");
            }
        }
        // every 2x2 Bayer cell carries a single exposure
        for cy in [0, 2] {
            for cx in [0, 2] {
                let e = p.site_at(cy, cx).exposure;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    assert_eq!(p.site_at(cy + dy, cx + dx).exposure, e);
                }
            }
        }
        assert_eq!(p.site_at(5, 6), p.site_at(1, 2));
    }

    #[test]
    fn parse_errors() {
        let err = parse_pattern("G0 R0 G1 R1 G0 G0 G1 G1 G1 R1 G2 R2 R1 G1 R2 G2").unwrap_err();
        assert!(err.to_string().contains("missing color B"), "{err}");
        let err = parse_pattern("G0 R0 G1 R1 B0 G0 B1 G1 G1 R1 G2 R2 B1 G1 B2").unwrap_err();
        assert!(err.to_string().contains("expected 16 entries"), "{err}");
        assert!(parse_pattern("G0 R0 G1 R1 B0 G0 B1 G1 G1 R1 G2 R2 B1 G1 B2 G3").is_err());
        assert!(parse_pattern("G0 R0 G1 R1 B0 G0 B1 G1 G1 R1 G2 R2 B1 G1 B2 GG").is_err());
        assert!(parse_pattern("G0 R0 G2 R2 B0 G0 B2 G2 G2 R2 G2 R2 B2 G2 B2 G2").is_err());
        assert_eq!(parse_pattern("default").unwrap(), MosaicPattern::default());
    }

    #[test]
    fn submosaic_of_ones() {
        let raw = Plane::filled(4, 4, 1, 1.0);
        let s = submosaic(&raw, &MosaicPattern::default()).unwrap();
        for c in 0..SITES {
            let ch = s.planes.channel(c);
            assert_eq!(ch.data().iter().sum::<f64>(), 1.0);
            assert_eq!(ch.get(c / 4, c % 4, 0), 1.0);
        }
        assert!(s.is_consistent());
    }

    #[test]
    fn submosaic_tiles_with_period_four() {
        let s = submosaic(&ramp(8, 8), &MosaicPattern::default()).unwrap();
        for c in 0..SITES {
            let n = s.mask.channel(c).data().iter().filter(|&&m| m == 1.0).count();
            assert_eq!(n, 4);
        }
    }

    #[test]
    fn submosaic_rejects_small_or_multichannel() {
        let p = MosaicPattern::default();
        assert!(submosaic(&Plane::zeros(3, 8, 1), &p).is_err());
        assert!(submosaic(&Plane::zeros(8, 8, 3), &p).is_err());
    }

    #[test]
    fn flatten_of_zero_stack() {
        let s = submosaic(&Plane::zeros(8, 8, 1), &MosaicPattern::default()).unwrap();
        assert!(flatten(&s).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interp_constant_and_single_site() {
        let mask = submosaic_mask(9, 11);
        let data = Plane::from_fn(9, 11, SITES, |y, x, c| if mask.get(y, x, c) == 1.0 { 2.5 } else { 0.0 });
        let out = interp_sparse(&data, &mask).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.5));

        let mut m = Plane::zeros(5, 5, 1);
        let mut d = Plane::zeros(5, 5, 1);
        m.set(2, 3, 0, 1.0);
        d.set(2, 3, 0, 7.0);
        assert!(interp_sparse(&d, &m).unwrap().data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn interp_affine_interior() {
        let (h, w) = (16, 20);
        let mask = submosaic_mask(h, w);
        let f = |y: usize, x: usize, c: usize| 0.3 + 0.7 * x as f64 - 1.1 * y as f64 + c as f64;
        let data = Plane::from_fn(h, w, SITES, |y, x, c| if mask.get(y, x, c) == 1.0 { f(y, x, c) } else { 0.0 });
        let out = interp_sparse(&data, &mask).unwrap();
        for c in 0..SITES {
            let (r0, c0) = (c / 4, c % 4);
            // interior: inside the hull of the channel's own samples
            for y in r0..=r0 + 4 * ((h - 1 - r0) / 4) {
                for x in c0..=c0 + 4 * ((w - 1 - c0) / 4) {
                    assert!((out.get(y, x, c) - f(y, x, c)).abs() < 1e-12);
                }
            }
            // edge clamp above/left of the first sample row/column
            for y in 0..r0 {
                assert_eq!(out.get(y, c0, c), f(r0, c0, c));
            }
        }
    }

    #[test]
    fn interp_errors() {
        let mask = Plane::zeros(4, 4, 2);
        assert!(matches!(interp_sparse(&Plane::zeros(4, 4, 2), &mask), Err(Error::EmptyMask { channel: 0 })));
        let mut m = Plane::zeros(4, 4, 1);
        m.set(0, 0, 0, 1.0);
        m.set(1, 1, 0, 1.0);
        assert!(interp_sparse(&Plane::zeros(4, 4, 1), &m).is_err());
    }

    #[test]
    fn gradient_cases() {
        let (dx, dy) = gradient(&Plane::filled(3, 4, 2, 5.0));
        assert!(dx.data().iter().chain(dy.data()).all(|&v| v == 0.0));
        let img = Plane::from_fn(3, 4, 1, |_, x, _| x as f64);
        let (dx, dy) = gradient(&img);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(dx.get(y, x, 0), if x < 3 { 1.0 } else { 0.0 });
            }
        }
        assert!(dy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn augment_cases() {
        let row = Plane::from_vec(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(augment(&row, Transform::FlipH).data(), &[3.0, 2.0, 1.0]);
        let img = Plane::from_fn(2, 5, 3, |y, x, c| (y * 100 + x * 10 + c) as f64);
        let t = augment(&img, Transform::Transpose);
        assert_eq!(t.dims(), (5, 2, 3));
        assert_eq!(t.get(4, 1, 2), img.get(1, 4, 2));
        for tr in [Transform::FlipH, Transform::FlipV, Transform::Transpose] {
            assert_eq!(augment(&augment(&img, tr), tr), img);
        }
    }

    #[test]
    fn augment_composite_matches_single_steps() {
        let img = Plane::from_fn(3, 5, 2, |y, x, c| (y * 100 + x * 10 + c) as f64);
        for a in Augment::all() {
            let mut expect = img.clone();
            if a.transpose {
                expect = augment(&expect, Transform::Transpose);
            }
            if a.flip_h {
                expect = augment(&expect, Transform::FlipH);
            }
            if a.flip_v {
                expect = augment(&expect, Transform::FlipV);
            }
            assert_eq!(a.apply(&img), expect, "{a:?}");
        }
    }

    #[test]
    fn mirror_pad_reflects() {
        let img = Plane::from_vec(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = img.mirror_pad(3, 5).unwrap();
        assert_eq!(&p.data()[..5], &[1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(&p.data()[10..], &[1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(p.crop(0, 0, 2, 3).unwrap(), img);
        assert!(img.mirror_pad(4, 3).is_err());
    }
}
