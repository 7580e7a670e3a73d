//! Clipped drawing primitives on RGB images.

use image::{Rgb, RgbImage};

use super::font::{glyph, GLYPH};

pub type Color = [u8; 3];

fn mix(dst: u8, src: u8, alpha: f64) -> u8 {
    (src as f64 * alpha + dst as f64 * (1.0 - alpha)).round() as u8
}

fn clip(img: &RgbImage, x: i64, y: i64, w: i64, h: i64) -> Option<(u32, u32, u32, u32)> {
    let x0 = x.max(0);
    let y0 = y.max(0);
    let x1 = (x + w).min(img.width() as i64);
    let y1 = (y + h).min(img.height() as i64);
    (x0 < x1 && y0 < y1).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

pub fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Color) {
    blend_rect(img, x, y, w, h, color, 1.0);
}

pub fn blend_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Color, alpha: f64) {
    if alpha <= 0.0 {
        return;
    }
    let Some((x0, y0, x1, y1)) = clip(img, x, y, w, h) else {
        return;
    };
    for py in y0..y1 {
        for px in x0..x1 {
            let p = img.get_pixel_mut(px, py);
            if alpha >= 1.0 {
                *p = Rgb(color);
            } else {
                for (v, c) in p.0.iter_mut().zip(color) {
                    *v = mix(*v, c, alpha);
                }
            }
        }
    }
}

/// Blends the whole image toward `color`.
pub fn fade_to(img: &mut RgbImage, color: Color, amount: f64) {
    if amount <= 0.0 {
        return;
    }
    for p in img.pixels_mut() {
        for (v, c) in p.0.iter_mut().zip(color) {
            *v = mix(*v, c, amount);
        }
    }
}

/// Draws one glyph whose font pixels are `cell` device pixels wide.
pub fn draw_char(img: &mut RgbImage, x: f64, y: f64, cell: f64, c: char, color: Color, alpha: f64) {
    if c == ' ' || alpha <= 0.0 || cell <= 0.0 {
        return;
    }
    let rows = glyph(c);
    let size = GLYPH as f64 * cell;
    let px0 = x.floor() as i64;
    let py0 = y.floor() as i64;
    let px1 = (x + size).floor() as i64;
    let py1 = (y + size).floor() as i64;
    let Some((cx0, cy0, cx1, cy1)) = clip(img, px0, py0, px1 - px0, py1 - py0) else {
        return;
    };
    for py in cy0..cy1 {
        let gy = (((py as f64 + 0.5 - y) / cell) as i64).clamp(0, 7) as usize;
        let row = rows[gy];
        if row == 0 {
            continue;
        }
        for px in cx0..cx1 {
            let gx = (((px as f64 + 0.5 - x) / cell) as i64).clamp(0, 7) as u32;
            if row >> gx & 1 == 1 {
                let p = img.get_pixel_mut(px, py);
                if alpha >= 1.0 {
                    *p = Rgb(color);
                } else {
                    for (v, c) in p.0.iter_mut().zip(color) {
                        *v = mix(*v, c, alpha);
                    }
                }
            }
        }
    }
}

pub fn draw_text(
    img: &mut RgbImage,
    x: f64,
    y: f64,
    cell: f64,
    text: &str,
    color: Color,
    alpha: f64,
) {
    let advance = GLYPH as f64 * cell;
    for (i, c) in text.chars().enumerate() {
        draw_char(img, x + i as f64 * advance, y, cell, c, color, alpha);
    }
}

/// Copies `src` onto `dst` with its left edge at `dx`.
pub fn blit_shifted(dst: &mut RgbImage, src: &RgbImage, dx: i64) {
    let w = dst.width() as i64;
    let x0 = dx.max(0);
    let x1 = (dx + src.width() as i64).min(w);
    if x0 >= x1 {
        return;
    }
    let h = dst.height().min(src.height());
    for y in 0..h {
        for x in x0..x1 {
            let p = *src.get_pixel((x - dx) as u32, y);
            dst.put_pixel(x as u32, y, p);
        }
    }
}

/// Pastes `src` at (x, y), clipped.
pub fn blit(dst: &mut RgbImage, src: &RgbImage, x: i64, y: i64) {
    let Some((x0, y0, x1, y1)) = clip(dst, x, y, src.width() as i64, src.height() as i64) else {
        return;
    };
    for py in y0..y1 {
        for px in x0..x1 {
            let p = *src.get_pixel((px as i64 - x) as u32, (py as i64 - y) as u32);
            dst.put_pixel(px, py, p);
        }
    }
}
