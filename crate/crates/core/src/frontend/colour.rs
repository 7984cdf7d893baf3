use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An H×W×3 image with channel values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pixels: Array3<f64>,
}

impl RgbImage {
    /// Wraps an H×W×3 array. H and W must be even and at least 4; every value
    /// must be finite and inside [0, 1].
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if c != 3 {
            return Err(Error::InvalidInput(format!("expected 3 channels, got {c}")));
        }
        if h < 4 || w < 4 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be even and >= 4, got {h}x{w}"
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pixel value {v}")));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Decodes planar 8-bit data (all R, then all G, then all B; row-major),
    /// the layout used by the CIFAR binary files.
    pub fn from_planar_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let plane = height * width;
        if bytes.len() != 3 * plane {
            return Err(Error::InvalidInput(format!(
                "expected {} bytes for a {height}x{width} image, got {}",
                3 * plane,
                bytes.len()
            )));
        }
        let pixels = Array3::from_shape_fn((height, width, 3), |(y, x, c)| {
            f64::from(bytes[c * plane + y * width + x]) / 255.0
        });
        Self::new(pixels)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }
}

/// RGB to LMS cone-space mapping used before the opponent recoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColourTransform {
    pub matrix: [[f64; 3]; 3],
    /// Undo the sRGB transfer curve before applying `matrix`.
    pub linearise_srgb: bool,
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_LMS_HPE: [[f64; 3]; 3] = [
    [0.38971, 0.68898, -0.07868],
    [-0.22981, 1.18340, 0.04641],
    [0.0, 0.0, 1.0],
];

fn mat_mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

impl ColourTransform {
    pub fn new(matrix: [[f64; 3]; 3], linearise_srgb: bool) -> Result<Self> {
        let det = det3(&matrix);
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::Config(format!(
                "colour mapping must be invertible (det = {det})"
            )));
        }
        Ok(Self {
            matrix,
            linearise_srgb,
        })
    }

    /// Treat (R, G, B) directly as (L, M, S).
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            linearise_srgb: false,
        }
    }

    /// Hunt-Pointer-Estevez cone fundamentals applied to linearised sRGB (D65).
    pub fn hunt_pointer_estevez() -> Self {
        Self {
            matrix: mat_mul3(&XYZ_TO_LMS_HPE, &SRGB_TO_XYZ),
            linearise_srgb: true,
        }
    }

    pub fn to_lms(&self, rgb: [f64; 3]) -> [f64; 3] {
        let rgb = if self.linearise_srgb {
            rgb.map(srgb_to_linear)
        } else {
            rgb
        };
        let m = &self.matrix;
        [
            m[0][0] * rgb[0] + m[0][1] * rgb[1] + m[0][2] * rgb[2],
            m[1][0] * rgb[0] + m[1][1] * rgb[1] + m[1][2] * rgb[2],
            m[2][0] * rgb[0] + m[2][1] * rgb[1] + m[2][2] * rgb[2],
        ]
    }
}

/// Opponent-colour image: channel 0 is L+M, 1 is L−M, 2 is S−(L+M).
#[derive(Clone, Debug, PartialEq)]
pub struct OpponentImage {
    pub channels: Array3<f64>,
}

impl OpponentImage {
    pub fn height(&self) -> usize {
        self.channels.dim().0
    }

    pub fn width(&self) -> usize {
        self.channels.dim().1
    }

    pub fn luminance(&self) -> Array2<f64> {
        self.channels.index_axis(Axis(2), 0).to_owned()
    }

    pub fn channel(&self, c: usize) -> Array2<f64> {
        self.channels.index_axis(Axis(2), c).to_owned()
    }
}

pub fn opponent_transform(img: &RgbImage, mapping: &ColourTransform) -> Result<OpponentImage> {
    let (h, w, _) = img.pixels.dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let p = img.pixels.slice(ndarray::s![y, x, ..]);
            let [l, m, s] = mapping.to_lms([p[0], p[1], p[2]]);
            out[[y, x, 0]] = l + m;
            out[[y, x, 1]] = l - m;
            out[[y, x, 2]] = s - (l + m);
        }
    }
    if out.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "opponent transform produced a non-finite value".into(),
        ));
    }
    Ok(OpponentImage { channels: out })
}
