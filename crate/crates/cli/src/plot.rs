//! Minimal PNG line plot of per-node validation loss curves.

use std::path::Path;

use image::{Rgb, RgbImage};

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const MARGIN: i64 = 40;

const PALETTE: &[[u8; 3]] = &[
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
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

/// Renders `curves` (one `(round, loss)` series per node) on shared axes.
/// The y axis spans zero to the largest finite loss.
pub fn render(curves: &[Vec<(usize, f64)>]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    let axis = Rgb([0, 0, 0]);
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), axis);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), axis);

    let points = curves.iter().flatten().filter(|p| p.1.is_finite());
    let max_round = points.clone().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let max_loss = points.map(|p| p.1).fold(0.0, f64::max);
    let max_loss = if max_loss > 0.0 { max_loss } else { 1.0 };
    let to_px = |(t, l): (usize, f64)| {
        let x = MARGIN as f64 + t as f64 / max_round * (w - 2 * MARGIN) as f64;
        let y = (h - MARGIN) as f64 - l / max_loss * (h - 2 * MARGIN) as f64;
        (x.round() as i64, y.round() as i64)
    };
    for tick in 1..=4 {
        let y = h - MARGIN - tick * (h - 2 * MARGIN) / 4;
        line(&mut img, (MARGIN - 4, y), (MARGIN, y), axis);
    }
    for (i, curve) in curves.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        let pts: Vec<(i64, i64)> = curve.iter().filter(|p| p.1.is_finite()).map(|&p| to_px(p)).collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], color);
        }
        if let [only] = pts.as_slice() {
            line(&mut img, *only, *only, color);
        }
    }
    img
}

pub fn save(path: impl AsRef<Path>, curves: &[Vec<(usize, f64)>]) -> flsim::Result<()> {
    render(curves)
        .save(path.as_ref())
        .map_err(|e| flsim::Error::Io(std::io::Error::other(e.to_string())))
}
