//! Minimal PNG rendering for loss curves, confusion matrices and 2-D
//! scatter plots. No text is drawn; file names carry the labels.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::evaluation::Curve;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 30;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([60, 60, 60]);
const RAW: Rgb<u8> = Rgb([190, 205, 230]);
const SMOOTH: Rgb<u8> = Rgb([20, 70, 170]);

const PALETTE: [Rgb<u8>; 10] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([127, 127, 127]),
    Rgb([188, 189, 34]),
    Rgb([23, 190, 207]),
];

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn frame() -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    let (l, b) = (MARGIN as i64, (HEIGHT - MARGIN) as i64);
    line(&mut img, (l, MARGIN as i64 / 2), (l, b), AXIS);
    line(&mut img, (l, b), ((WIDTH - MARGIN / 2) as i64, b), AXIS);
    img
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn polyline(img: &mut RgbImage, ys: &[f64], (lo, hi): (f64, f64), color: Rgb<u8>) {
    let w = (WIDTH - MARGIN - MARGIN / 2) as f64;
    let h = (HEIGHT - MARGIN - MARGIN / 2) as f64;
    let n = ys.len().max(2) - 1;
    let pt = |i: usize, v: f64| {
        let x = MARGIN as f64 + w * i as f64 / n as f64;
        let y = (HEIGHT - MARGIN) as f64 - h * (v - lo) / (hi - lo);
        (x.round() as i64, y.round() as i64)
    };
    for i in 1..ys.len() {
        if ys[i - 1].is_finite() && ys[i].is_finite() {
            line(img, pt(i - 1, ys[i - 1]), pt(i, ys[i]), color);
        }
    }
}

/// Raw series in a light colour with the smoothed series over it.
pub fn render_curve(curve: &Curve) -> RgbImage {
    let mut img = frame();
    let r = range(curve.raw.iter().chain(&curve.smoothed).copied());
    polyline(&mut img, &curve.raw, r, RAW);
    polyline(&mut img, &curve.smoothed, r, SMOOTH);
    img
}

/// Row-normalized confusion matrix, white (0) to dark blue (1), drawn as
/// square cells.
pub fn render_confusion(matrix: &[Vec<usize>]) -> Result<RgbImage> {
    let c = matrix.len();
    if c == 0 || matrix.iter().any(|r| r.len() != c) {
        return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
    }
    let cell = (480 / c as u32).max(4);
    let mut img = RgbImage::from_pixel(cell * c as u32, cell * c as u32, BACKGROUND);
    for (i, row) in matrix.iter().enumerate() {
        let total: usize = row.iter().sum();
        for (j, &n) in row.iter().enumerate() {
            let f = if total > 0 { n as f64 / total as f64 } else { 0.0 };
            let shade = |full: f64, empty: f64| (empty + (full - empty) * f).round() as u8;
            let color = Rgb([shade(8.0, 255.0), shade(48.0, 255.0), shade(107.0, 255.0)]);
            for y in 0..cell - 1 {
                for x in 0..cell - 1 {
                    img.put_pixel(j as u32 * cell + x, i as u32 * cell + y, color);
                }
            }
        }
    }
    Ok(img)
}

/// Points coloured by group (e.g. class label).
pub fn render_scatter(points: &[[f64; 2]], groups: &[u32]) -> Result<RgbImage> {
    if points.len() != groups.len() {
        return Err(Error::Shape(format!("{} points for {} groups", points.len(), groups.len())));
    }
    let mut img = frame();
    let (x_lo, x_hi) = range(points.iter().map(|p| p[0]));
    let (y_lo, y_hi) = range(points.iter().map(|p| p[1]));
    let w = (WIDTH - MARGIN - MARGIN / 2) as f64;
    let h = (HEIGHT - MARGIN - MARGIN / 2) as f64;
    for (p, &g) in points.iter().zip(groups) {
        let x = (MARGIN as f64 + w * (p[0] - x_lo) / (x_hi - x_lo)).round() as i64;
        let y = ((HEIGHT - MARGIN) as f64 - h * (p[1] - y_lo) / (y_hi - y_lo)).round() as i64;
        let color = PALETTE[g as usize % PALETTE.len()];
        for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            line(&mut img, (x + dx, y + dy), (x + dx, y + dy), color);
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_touches_pixels() {
        let c = Curve {
            key: "l_rec".into(),
            raw: vec![3.0, 2.0, 2.5, 1.0],
            smoothed: vec![3.0, 2.5, 2.5, 2.1],
        };
        let img = render_curve(&c);
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        assert!(img.pixels().any(|p| *p == SMOOTH));
        assert_eq!(render_curve(&c), img);
    }

    #[test]
    fn confusion_diagonal_is_darkest() {
        let img = render_confusion(&[vec![5, 0], vec![1, 4]]).unwrap();
        let cell = img.width() / 2;
        assert!(img.get_pixel(1, 1)[0] < img.get_pixel(cell + 1, 1)[0]);
        assert!(render_confusion(&[vec![1, 2]]).is_err());
    }

    #[test]
    fn constant_series_do_not_divide_by_zero() {
        let c = Curve {
            key: "k".into(),
            raw: vec![1.0; 5],
            smoothed: vec![1.0; 5],
        };
        render_curve(&c);
        render_scatter(&[[0.0, 0.0], [0.0, 0.0]], &[1, 2]).unwrap();
    }
}
