//! Anti-aliased procedural glyphs on a black background.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
    Star,
    /// Disc with `n` small dimmed spots, a subtle surface defect.
    Spotted(u8),
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Cross, Shape::Star];

    /// Shape for class index `c`; cycles when there are more classes than shapes.
    pub fn for_class(c: usize) -> Shape {
        Self::ALL[c % Self::ALL.len()]
    }

    /// Lowercase name used for class labels.
    pub fn name(self) -> String {
        match self {
            Shape::Spotted(n) => format!("spotted_{n}"),
            other => format!("{other:?}").to_lowercase(),
        }
    }

    /// Relative brightness at an inside point.
    fn intensity(self, u: f64, v: f64) -> f64 {
        match self {
            Shape::Spotted(n) if spot_contains(n, u, v) => SPOT_INTENSITY,
            _ => 1.0,
        }
    }

    /// Inside test in glyph coordinates, `u, v ∈ [-1, 1]`, `v` pointing down.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            Shape::Circle => u * u + v * v <= 1.0,
            Shape::Square => u.abs() <= 1.0 && v.abs() <= 1.0,
            Shape::Triangle => {
                // apex at (0,-1), base from (-1,1) to (1,1)
                (-1.0..=1.0).contains(&v) && u.abs() <= (v + 1.0) / 2.0
            }
            Shape::Cross => (u.abs() <= 0.34 && v.abs() <= 1.0) || (v.abs() <= 0.34 && u.abs() <= 1.0),
            Shape::Star => star_contains(u, v),
            Shape::Spotted(_) => u * u + v * v <= 1.0,
        }
    }
}

/// Spots of radius 0.2 evenly spaced on the circle of radius 0.45, the first
/// one up and to the right of centre.
fn spot_contains(n: u8, u: f64, v: f64) -> bool {
    (0..n).any(|i| {
        let a = -std::f64::consts::FRAC_PI_4 + i as f64 * std::f64::consts::TAU / n as f64;
        let (du, dv) = (u - 0.45 * a.cos(), v - 0.45 * a.sin());
        du * du + dv * dv <= 0.04
    })
}

fn star_contains(u: f64, v: f64) -> bool {
    // Five-pointed star, outer radius 1, inner radius 0.45, top point up.
    let vertices: Vec<(f64, f64)> = (0..10)
        .map(|i| {
            let r = if i % 2 == 0 { 1.0 } else { 0.45 };
            let a = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
            (r * a.cos(), r * a.sin())
        })
        .collect();
    // even-odd ray casting
    let mut inside = false;
    let mut j = vertices.len() - 1;
    for i in 0..vertices.len() {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Brightness of a spot relative to the rest of a spotted disc.
pub const SPOT_INTENSITY: f64 = 0.8;

const SUPERSAMPLE: usize = 4;

/// Draw `shape` into an `size×size×3` RGB buffer (black background).
///
/// The glyph's bounding box has side `scale·size`, centred at `(cx, cy)` in
/// pixel units. Coverage is estimated with a 4×4 supersampling grid.
pub fn render_glyph(size: usize, shape: Shape, scale: f64, cx: f64, cy: f64, color: [f32; 3]) -> Vec<f32> {
    let mut out = vec![0.0f32; size * size * 3];
    let half = scale * size as f64 / 2.0;
    let step = 1.0 / SUPERSAMPLE as f64;
    for py in 0..size {
        for px in 0..size {
            let mut hits = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) * step;
                    let y = py as f64 + (sy as f64 + 0.5) * step;
                    let (u, v) = ((x - cx) / half, (y - cy) / half);
                    if shape.contains(u, v) {
                        hits += shape.intensity(u, v);
                    }
                }
            }
            if hits > 0.0 {
                let cov = (hits / (SUPERSAMPLE * SUPERSAMPLE) as f64) as f32;
                let o = (py * size + px) * 3;
                for ch in 0..3 {
                    out[o + ch] = (color[ch] * cov).clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coverage(img: &[f32]) -> f32 {
        img.chunks(3).map(|p| p[0]).sum()
    }

    #[test]
    fn square_fills_its_bounding_box() {
        let img = render_glyph(32, Shape::Square, 0.5, 16.0, 16.0, [1.0, 1.0, 1.0]);
        assert!((coverage(&img) - 256.0).abs() < 1e-3);
    }

    #[test]
    fn circle_area_is_pi_r_squared() {
        let img = render_glyph(64, Shape::Circle, 0.8, 32.0, 32.0, [1.0, 0.0, 0.0]);
        let r = 0.8 * 32.0;
        let expected = std::f32::consts::PI * r * r;
        assert!((coverage(&img) - expected).abs() / expected < 0.01);
    }

    #[test]
    fn spots_dim_part_of_the_disc() {
        let plain = render_glyph(64, Shape::Circle, 0.8, 32.0, 32.0, [1.0; 3]);
        let spotted = render_glyph(64, Shape::Spotted(1), 0.8, 32.0, 32.0, [1.0; 3]);
        // One spot of radius 0.2 (relative) loses 1 − SPOT_INTENSITY of its area.
        let r = 0.2 * 0.8 * 32.0;
        let lost = (1.0 - SPOT_INTENSITY) * std::f64::consts::PI * r * r;
        let diff = (coverage(&plain) - coverage(&spotted)) as f64;
        assert!((diff - lost).abs() / lost < 0.05, "{diff} vs {lost}");
        assert_eq!(Shape::Spotted(2).name(), "spotted_2");
    }

    #[test]
    fn shapes_are_distinct() {
        let imgs: Vec<_> = Shape::ALL.iter().map(|s| render_glyph(24, *s, 0.8, 12.0, 12.0, [1.0; 3])).collect();
        for i in 0..imgs.len() {
            for j in i + 1..imgs.len() {
                let diff: f32 = imgs[i].iter().zip(&imgs[j]).map(|(a, b)| (a - b).abs()).sum();
                assert!(diff > 20.0, "{:?} vs {:?}", Shape::ALL[i], Shape::ALL[j]);
            }
        }
    }

    #[test]
    fn star_has_points_and_notches() {
        assert!(star_contains(0.0, -0.95)); // top point
        assert!(!star_contains(0.0, 0.9)); // notch direction below
        assert!(star_contains(0.0, 0.0));
    }
}
