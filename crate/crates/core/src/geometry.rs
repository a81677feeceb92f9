//! Axis-aligned box arithmetic and crop-space transforms.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner,
//! x growing rightward and y downward. No ±1 pixel conventions are applied.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned box `[x_min, y_min, x_max, y_max]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box from corner coordinates, rejecting inverted or non-finite input.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(coords));
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::Inverted(coords));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Builds a box from GOT-10k style `(x, y, w, h)`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() <= 0.0
    }

    /// Geometric mean of width and height, `sqrt(w * h)`.
    pub fn geometric_size(&self) -> f64 {
        self.area().sqrt()
    }

    /// Rounds every coordinate to the nearest integer.
    pub fn rounded(&self) -> [i64; 4] {
        self.to_array().map(|c| c.round() as i64)
    }

    fn max_abs_diff(&self, other: &BBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Chebyshev distance between corner vectors.
    pub fn linf_distance(&self, other: &BBox) -> f64 {
        self.max_abs_diff(other)
    }
}

/// Mapping between frame pixels and a square crop resized to `output_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub crop_side: f64,
    pub output_size: u32,
}

impl CropTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        crop_side: f64,
        output_size: u32,
    ) -> Result<Self, GeometryError> {
        if !(crop_side.is_finite() && crop_side > 0.0) || output_size == 0 {
            return Err(GeometryError::InvalidCrop {
                crop_side,
                output_size,
            });
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(GeometryError::NonFinite([origin_x, origin_y, crop_side, 0.0]));
        }
        Ok(Self {
            origin_x,
            origin_y,
            crop_side,
            output_size,
        })
    }

    /// Square window of side `crop_side` centered on `center`.
    pub fn centered(
        center: (f64, f64),
        crop_side: f64,
        output_size: u32,
    ) -> Result<Self, GeometryError> {
        Self::new(
            center.0 - 0.5 * crop_side,
            center.1 - 0.5 * crop_side,
            crop_side,
            output_size,
        )
    }

    /// Output pixels per frame pixel.
    pub fn scale(&self) -> f64 {
        self.output_size as f64 / self.crop_side
    }

    /// The crop window expressed in frame coordinates.
    pub fn window(&self) -> BBox {
        BBox {
            x_min: self.origin_x,
            y_min: self.origin_y,
            x_max: self.origin_x + self.crop_side,
            y_max: self.origin_y + self.crop_side,
        }
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x_max - b.x_min).max(0.0) * (b.y_max - b.y_min).max(0.0)
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    w * h
}

/// Intersection over union. Two degenerate boxes have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|`, `C` the smallest enclosing box.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64, GeometryError> {
    let area_a = area(a);
    let area_b = area(b);
    if area_a <= 0.0 && area_b <= 0.0 {
        return Err(GeometryError::UndefinedOverlap);
    }
    let inter = intersection_area(a, b);
    let union = area_a + area_b - inter;
    let enclosing = BBox {
        x_min: a.x_min.min(b.x_min),
        y_min: a.y_min.min(b.y_min),
        x_max: a.x_max.max(b.x_max),
        y_max: a.y_max.max(b.y_max),
    };
    let c = area(&enclosing);
    Ok(inter / union - (c - union) / c)
}

pub fn to_crop_coords(b: &BBox, t: &CropTransform) -> BBox {
    let s = t.scale();
    BBox {
        x_min: (b.x_min - t.origin_x) * s,
        y_min: (b.y_min - t.origin_y) * s,
        x_max: (b.x_max - t.origin_x) * s,
        y_max: (b.y_max - t.origin_y) * s,
    }
}

pub fn to_frame_coords(b: &BBox, t: &CropTransform) -> BBox {
    let inv = t.crop_side / t.output_size as f64;
    BBox {
        x_min: b.x_min * inv + t.origin_x,
        y_min: b.y_min * inv + t.origin_y,
        x_max: b.x_max * inv + t.origin_x,
        y_max: b.y_max * inv + t.origin_y,
    }
}

/// Clamps every coordinate into `[0, width] x [0, height]`.
pub fn clamp_to(b: &BBox, width: f64, height: f64) -> BBox {
    BBox {
        x_min: b.x_min.clamp(0.0, width),
        y_min: b.y_min.clamp(0.0, height),
        x_max: b.x_max.clamp(0.0, width),
        y_max: b.y_max.clamp(0.0, height),
    }
}
