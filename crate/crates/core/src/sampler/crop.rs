use image::{Rgb, RgbImage};

use crate::error::GeometryError;
use crate::geometry::CropTransform;

/// Per-channel mean color of the frame, used to pad out-of-frame regions.
pub fn mean_color(image: &RgbImage) -> Rgb<u8> {
    let n = (image.width() as u64 * image.height() as u64).max(1);
    let mut sum = [0u64; 3];
    for p in image.pixels() {
        for c in 0..3 {
            sum[c] += p[c] as u64;
        }
    }
    Rgb(sum.map(|s| ((s as f64 / n as f64).round()) as u8))
}

/// Crops the square of side `crop_side` centered at `center` and resizes it to
/// `output_size x output_size` with bilinear sampling. Regions outside the frame
/// take the frame's mean color.
pub fn crop_and_resize(
    image: &RgbImage,
    center: (f64, f64),
    crop_side: f64,
    output_size: u32,
) -> Result<(RgbImage, CropTransform), GeometryError> {
    let t = CropTransform::centered(center, crop_side, output_size)?;
    Ok((render_crop(image, &t), t))
}

/// Renders the crop described by `t`.
pub fn render_crop(image: &RgbImage, t: &CropTransform) -> RgbImage {
    let pad = mean_color(image);
    let (w, h) = (image.width() as i64, image.height() as i64);
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        let p = if x >= 0 && y >= 0 && x < w && y < h {
            image.get_pixel(x as u32, y as u32)
        } else {
            &pad
        };
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let step = t.crop_side / t.output_size as f64;
    RgbImage::from_fn(t.output_size, t.output_size, |u, v| {
        // pixel centers map to pixel centers
        let sx = t.origin_x + (u as f64 + 0.5) * step - 0.5;
        let sy = t.origin_y + (v as f64 + 0.5) * step - 0.5;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = fetch(x0, y0);
        let p10 = fetch(x0 + 1, y0);
        let p01 = fetch(x0, y0 + 1);
        let p11 = fetch(x0 + 1, y0 + 1);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - fx) + p10[c] * fx;
            let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
            out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    })
}
