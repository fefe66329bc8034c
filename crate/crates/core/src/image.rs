//! In-memory frames: 8-bit RGB images and single-channel float images.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BadLength { width: usize, height: usize, expected: usize, actual: usize },
    #[error("image is empty")]
    Empty,
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

/// Row-major RGB image, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BadLength { width, height, expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the sub-rectangle starting at `(x0, y0)`; the caller keeps it in bounds.
    pub fn sub_image(&self, x0: usize, y0: usize, w: usize, h: usize) -> RawImage {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RawImage { width: w, height: h, data }
    }

    /// ITU-R 601 luma, rounded to the nearest integer level.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32).round())
            .collect();
        GrayImage { width: self.width, height: self.height, data }
    }
}

/// Row-major single-channel image with float intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "gray buffer length");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Value at integer coordinates clamped to the border.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear interpolation at array coordinates (pixel `i` sits at `i`),
    /// with border clamping.
    #[inline]
    pub fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at_clamped(xi, yi);
        let b = self.at_clamped(xi + 1, yi);
        let c = self.at_clamped(xi, yi + 1);
        let d = self.at_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// Box-average downscale by an integer factor; trailing partial blocks are dropped.
    pub fn downscale(&self, factor: usize) -> GrayImage {
        if factor <= 1 {
            return self.clone();
        }
        let w = self.width / factor;
        let h = self.height / factor;
        let norm = 1.0 / (factor * factor) as f32;
        GrayImage::from_fn(w, h, |x, y| {
            let mut s = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    s += self.at(x * factor + dx, y * factor + dy);
                }
            }
            s * norm
        })
    }

    /// Half-resolution image after 5-tap binomial smoothing.
    pub fn pyr_down(&self) -> GrayImage {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let horiz = GrayImage::from_fn(self.width, self.height, |x, y| {
            (0..5)
                .map(|k| K[k] * self.at_clamped(x as isize + k as isize - 2, y as isize))
                .sum()
        });
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        GrayImage::from_fn(w, h, |x, y| {
            (0..5)
                .map(|k| K[k] * horiz.at_clamped(2 * x as isize, 2 * y as isize + k as isize - 2))
                .sum()
        })
    }

    /// Pyramid with `levels` images, finest first.
    pub fn pyramid(&self, levels: usize) -> Vec<GrayImage> {
        let mut out = vec![self.clone()];
        while out.len() < levels.max(1) {
            let next = out.last().expect("non-empty").pyr_down();
            if next.width < 8 || next.height < 8 {
                break;
            }
            out.push(next);
        }
        out
    }
}
