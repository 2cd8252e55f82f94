//! Bare-bones raster charts. The CSVs next to each image carry the numbers.

use euv_ilt::Field2D;
use image::{Rgb, RgbImage};

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub const GREY: Rgb<u8> = Rgb([150, 150, 150]);
pub const BLUE: Rgb<u8> = Rgb([40, 90, 200]);
pub const RED: Rgb<u8> = Rgb([210, 50, 40]);
pub const GREEN: Rgb<u8> = Rgb([30, 150, 60]);

/// Pixel rectangle on a canvas.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

pub fn canvas(w: u32, h: u32) -> RgbImage {
    RgbImage::from_pixel(w, h, WHITE)
}

pub fn fill(img: &mut RgbImage, r: Rect, color: Rgb<u8>) {
    for y in r.y..(r.y + r.h).min(img.height()) {
        for x in r.x..(r.x + r.w).min(img.width()) {
            img.put_pixel(x, y, color);
        }
    }
}

pub fn frame(img: &mut RgbImage, r: Rect, color: Rgb<u8>) {
    fill(img, Rect { h: 1, ..r }, color);
    fill(
        img,
        Rect {
            y: r.y + r.h.saturating_sub(1),
            h: 1,
            ..r
        },
        color,
    );
    fill(img, Rect { w: 1, ..r }, color);
    fill(
        img,
        Rect {
            x: r.x + r.w.saturating_sub(1),
            w: 1,
            ..r
        },
        color,
    );
}

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

/// Field drawn as greyscale, values clamped to `[0, 1]`, nearest-neighbour
/// scaled to the rectangle.
pub fn field(img: &mut RgbImage, r: Rect, f: &Field2D) {
    for y in 0..r.h {
        for x in 0..r.w {
            let row = (y as usize * f.height()) / r.h as usize;
            let col = (x as usize * f.width()) / r.w as usize;
            let v = (f.get(row, col).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(r.x + x, r.y + y, Rgb([v, v, v]));
        }
    }
    frame(img, r, GREY);
}

fn y_of(r: Rect, v: f64, y_max: f64) -> i64 {
    let t = (v / y_max).clamp(0.0, 1.0);
    (r.y + r.h - 1) as i64 - (t * (r.h - 1) as f64).round() as i64
}

/// Polylines sharing one y range `[0, y_max]`.
pub fn lines(img: &mut RgbImage, r: Rect, series: &[(&[f64], Rgb<u8>)], y_max: f64) {
    frame(img, r, GREY);
    for (values, color) in series {
        if values.len() < 2 {
            continue;
        }
        let step = (r.w - 1) as f64 / (values.len() - 1) as f64;
        for (i, pair) in values.windows(2).enumerate() {
            let x0 = r.x as i64 + (i as f64 * step).round() as i64;
            let x1 = r.x as i64 + ((i + 1) as f64 * step).round() as i64;
            line(
                img,
                (x0, y_of(r, pair[0], y_max)),
                (x1, y_of(r, pair[1], y_max)),
                *color,
            );
        }
    }
}

/// Vertical bars from zero, one per value, with horizontal reference lines.
pub fn bars(
    img: &mut RgbImage,
    r: Rect,
    values: &[f64],
    color: Rgb<u8>,
    y_max: f64,
    refs: &[(f64, Rgb<u8>)],
) {
    frame(img, r, GREY);
    if !values.is_empty() {
        let slot = r.w as f64 / values.len() as f64;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let top = y_of(r, v, y_max) as u32;
            let x = r.x + (i as f64 * slot + slot * 0.15).round() as u32;
            let w = ((slot * 0.7).round() as u32).max(1);
            fill(
                img,
                Rect {
                    x,
                    y: top,
                    w,
                    h: r.y + r.h - top,
                },
                color,
            );
        }
    }
    for &(level, c) in refs {
        let y = y_of(r, level, y_max) as u32;
        fill(
            img,
            Rect {
                x: r.x,
                y,
                w: r.w,
                h: 1,
            },
            c,
        );
    }
}
