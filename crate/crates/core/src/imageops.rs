//! Pixel-level helpers on `h×w×c` float images in `[0,1]`.

use std::io::Cursor;

use image::{ImageBuffer, ImageFormat, Rgb};

use crate::error::Result;

/// Bilinear resize with half-pixel centres; a same-size resize is the identity.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<f32> {
    assert_eq!(src.len(), h * w * c, "resize: buffer does not match geometry");
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    let mut out = vec![0.0f32; oh * ow * c];
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = (fy - y0 as f64) as f32;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = (fx - x0 as f64) as f32;
            for ch in 0..c {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                out[(y * ow + x) * c + ch] = (top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Extract the `ch×cw` window whose top-left corner is `(top, left)`.
pub fn crop(src: &[f32], w: usize, c: usize, top: usize, left: usize, ch: usize, cw: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(ch * cw * c);
    for y in top..top + ch {
        out.extend_from_slice(&src[(y * w + left) * c..(y * w + left + cw) * c]);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PadFill {
    Constant([f32; 3]),
    EdgeReplicate,
}

/// Pad `pad` pixels on every side.
pub fn pad(src: &[f32], h: usize, w: usize, c: usize, pad: usize, fill: PadFill) -> Vec<f32> {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0f32; ph * pw * c];
    for y in 0..ph {
        for x in 0..pw {
            let o = (y * pw + x) * c;
            let inside = y >= pad && y < pad + h && x >= pad && x < pad + w;
            match (inside, fill) {
                (true, _) | (false, PadFill::EdgeReplicate) => {
                    let sy = y.saturating_sub(pad).min(h - 1);
                    let sx = x.saturating_sub(pad).min(w - 1);
                    out[o..o + c].copy_from_slice(&src[(sy * w + sx) * c..(sy * w + sx + 1) * c]);
                }
                (false, PadFill::Constant(rgb)) => {
                    for ch in 0..c {
                        out[o + ch] = rgb[ch.min(2)];
                    }
                }
            }
        }
    }
    out
}

/// Inclusive bounding box `(x0, y0, x1, y1)` of pixels whose maximum channel
/// exceeds `threshold`.
pub fn foreground_bbox(
    img: &[f32],
    h: usize,
    w: usize,
    c: usize,
    threshold: f32,
) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            let px = &img[(y * w + x) * c..(y * w + x + 1) * c];
            if px.iter().copied().fold(f32::MIN, f32::max) > threshold {
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bbox
}

/// Bounding-box area as a fraction of the image; 0 when nothing is lit.
pub fn foreground_bbox_fraction(img: &[f32], h: usize, w: usize, c: usize, threshold: f32) -> f64 {
    foreground_bbox(img, h, w, c, threshold)
        .map(|(x0, y0, x1, y1)| ((x1 + 1 - x0) * (y1 + 1 - y0)) as f64 / (h * w) as f64)
        .unwrap_or(0.0)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode as an 8-bit RGB PNG (grayscale input is replicated to 3 channels).
pub fn encode_png(img: &[f32], h: usize, w: usize, c: usize) -> Result<Vec<u8>> {
    let mut buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(w as u32, h as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        let s = &img[i * c..(i + 1) * c];
        *px = if c >= 3 { Rgb([to_u8(s[0]), to_u8(s[1]), to_u8(s[2])]) } else { Rgb([to_u8(s[0]); 3]) };
    }
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Tile equally sized images row-major into a grid with white gutters.
///
/// Returns the grid pixels and its `(height, width)`.
pub fn tile(images: &[Vec<f32>], h: usize, w: usize, c: usize, cols: usize, gutter: usize) -> (Vec<f32>, usize, usize) {
    let cols = cols.max(1).min(images.len().max(1));
    let rows = images.len().div_ceil(cols).max(1);
    let gh = rows * h + (rows + 1) * gutter;
    let gw = cols * w + (cols + 1) * gutter;
    let mut out = vec![1.0f32; gh * gw * c];
    for (i, img) in images.iter().enumerate() {
        let (r, col) = (i / cols, i % cols);
        let top = gutter + r * (h + gutter);
        let left = gutter + col * (w + gutter);
        for y in 0..h {
            let dst = ((top + y) * gw + left) * c;
            out[dst..dst + w * c].copy_from_slice(&img[y * w * c..(y + 1) * w * c]);
        }
    }
    (out, gh, gw)
}
