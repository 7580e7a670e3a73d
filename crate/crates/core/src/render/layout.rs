//! Static per-scene layout: where code, outputs, annotations and captions go,
//! plus a pre-drawn backdrop that frames start from.

use std::collections::BTreeMap;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage, RgbaImage};

use super::font::{normalize, wrap, GLYPH};
use super::raster::{blend_rect, blit, draw_char, draw_text, fill_rect, Color};
use super::RenderError;
use crate::logicflow::names::is_builtin;
use crate::notebook::{extract_output_assets, Cell, OutputKind, Payload};
use crate::pylex::{tokenize_lossy, TokenKind};
use crate::script::{Resolution, Scene, Span};

pub const BG: Color = [24, 26, 33];
pub const PANEL: Color = [33, 36, 45];
const TEXT: Color = [220, 223, 228];
const KEYWORD: Color = [198, 120, 221];
const STRING: Color = [152, 195, 121];
const NUMBER: Color = [209, 154, 102];
const COMMENT: Color = [106, 115, 125];
const OP: Color = [171, 178, 191];
const BUILTIN: Color = [97, 175, 239];
const TITLE: Color = [240, 240, 240];
const OUTPUT_TEXT: Color = [170, 176, 186];
pub const EMPHASIS_BOX: Color = [52, 58, 76];
pub const BULLET: Color = [255, 196, 0];
pub const ANNOTATION: Color = [250, 250, 250];
pub const CAPTION: Color = [255, 255, 255];

const MAX_CAPTION_LINES: usize = 2;
const MAX_OUTPUT_TEXT_LINES: usize = 8;

pub struct EmphasisLayout {
    pub span: Span,
    pub scale_factor: f64,
    pub annotation: Vec<String>,
    pub annotation_y: f64,
}

pub struct SceneLayout {
    pub base: RgbImage,
    pub cell: f64,
    pub code_x: f64,
    pub code_y: f64,
    pub line_h: f64,
    pub visible_lines: usize,
    /// Display lines: each character with its colour.
    pub lines: Vec<Vec<(char, Color)>>,
    /// (line, column) of every source character, plus one past the end.
    pub positions: Vec<(usize, usize)>,
    pub emphases: BTreeMap<String, EmphasisLayout>,
    pub annotation_x: f64,
    pub captions: BTreeMap<String, Vec<String>>,
    pub caption_cell: f64,
    pub band_y: f64,
    pub band_h: f64,
}

impl SceneLayout {
    pub fn char_w(&self) -> f64 {
        GLYPH as f64 * self.cell
    }

    /// Per-line column runs covered by a span.
    pub fn runs(&self, span: Span) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        let end = span.end.min(self.positions.len().saturating_sub(1));
        for i in span.start..end {
            let (line, col) = self.positions[i];
            let width = self.lines.get(line).map_or(0, |l| l.len());
            if col >= width {
                continue;
            }
            match out.last_mut() {
                Some((l, _, c1)) if *l == line && *c1 == col => *c1 = col + 1,
                _ => out.push((line, col, col + 1)),
            }
        }
        // Tab expansion leaves runs with gaps of spaces; merge per line.
        let mut merged: Vec<(usize, usize, usize)> = Vec::new();
        for r in out {
            match merged.last_mut() {
                Some(m) if m.0 == r.0 => m.2 = r.2,
                _ => merged.push(r),
            }
        }
        merged
    }
}

fn token_color(kind: TokenKind, text: &str) -> Color {
    match kind {
        TokenKind::Keyword => KEYWORD,
        TokenKind::String => STRING,
        TokenKind::Number => NUMBER,
        TokenKind::Comment => COMMENT,
        TokenKind::Op => OP,
        TokenKind::Name if is_builtin(text) => BUILTIN,
        _ => TEXT,
    }
}

type ColouredLine = Vec<(char, Color)>;

/// Splits source into coloured display lines with tabs expanded.
fn colour_source(source: &str) -> (Vec<ColouredLine>, Vec<(usize, usize)>) {
    let (tokens, _) = tokenize_lossy(source);
    let mut byte_color = vec![TEXT; source.len()];
    for t in &tokens {
        let c = token_color(t.kind, &t.text);
        for slot in &mut byte_color[t.start..t.end.min(source.len())] {
            *slot = c;
        }
    }
    let mut lines = vec![Vec::new()];
    let mut positions = Vec::with_capacity(source.len() + 1);
    for (b, ch) in source.char_indices() {
        let line = lines.len() - 1;
        let col = lines[line].len();
        positions.push((line, col));
        match ch {
            '\n' => lines.push(Vec::new()),
            '\t' => {
                let pad = 4 - col % 4;
                lines[line].extend(std::iter::repeat_n((' ', TEXT), pad));
            }
            '\r' => {}
            _ => {
                let shown = normalize(&ch.to_string()).chars().next().unwrap_or('?');
                lines[line].push((shown, byte_color[b]));
            }
        }
    }
    let last = lines.len() - 1;
    positions.push((last, lines[last].len()));
    (lines, positions)
}

enum OutputBlock {
    Text(Vec<String>),
    Image(RgbaImage),
}

fn output_blocks(cell: &Cell) -> Result<Vec<OutputBlock>, RenderError> {
    let assets = extract_output_assets(cell).map_err(|e| RenderError::Asset(e.to_string()))?;
    let mut out = Vec::new();
    for a in assets {
        match (a.kind, a.payload) {
            (OutputKind::ImagePng, Payload::Binary(bytes)) => {
                let img = image::load_from_memory(&bytes)
                    .map_err(|e| RenderError::Asset(e.to_string()))?;
                out.push(OutputBlock::Image(img.to_rgba8()));
            }
            (_, Payload::Text(text)) => {
                let lines: Vec<String> = normalize(&text)
                    .lines()
                    .take(MAX_OUTPUT_TEXT_LINES)
                    .map(str::to_string)
                    .collect();
                if !lines.is_empty() {
                    out.push(OutputBlock::Text(lines));
                }
            }
            (_, Payload::Binary(_)) => {}
        }
    }
    Ok(out)
}

fn flatten_on(img: &RgbaImage, bg: Color) -> RgbImage {
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y).0;
        let a = p[3] as f64 / 255.0;
        Rgb([0, 1, 2].map(|c| (p[c] as f64 * a + bg[c] as f64 * (1.0 - a)).round() as u8))
    })
}

pub struct LayoutInput<'a> {
    pub scene: &'a Scene,
    pub cell: &'a Cell,
    pub title: String,
}

pub fn layout_scene(input: &LayoutInput<'_>, res: Resolution) -> Result<SceneLayout, RenderError> {
    let (w, h) = (res.width as f64, res.height as f64);
    let margin = (w / 32.0).floor();
    let base_cell = (res.height / 360).max(1) as f64;

    let title_y = (margin / 2.0).floor();
    let title_h = GLYPH as f64 * base_cell * 1.5;
    let panel_x = margin;
    let panel_y = (title_y + title_h + margin / 2.0).floor();
    let panel_w = (w * 0.62).floor() - margin;
    let band_h = (h * 0.16).floor();
    let band_y = h - band_h;
    let panel_h = band_y - panel_y - margin / 2.0;
    let pad = (margin / 3.0).floor();

    let (lines, positions) = colour_source(&input.cell.source);
    let max_cols = lines.iter().map(Vec::len).max().unwrap_or(0).max(1) as f64;
    let outputs = if input.scene.include_outputs {
        output_blocks(input.cell)?
    } else {
        Vec::new()
    };
    let text_output_lines: usize = outputs
        .iter()
        .map(|o| match o {
            OutputBlock::Text(l) => l.len(),
            OutputBlock::Image(_) => 0,
        })
        .sum();

    let mut cell = base_cell;
    let fits = |c: f64| {
        let rows = lines.len() + text_output_lines;
        max_cols * GLYPH as f64 * c <= panel_w - 2.0 * pad
            && rows as f64 * 10.0 * c <= panel_h - 2.0 * pad
    };
    while cell > 1.0 && !fits(cell) {
        cell -= 1.0;
    }
    let line_h = 10.0 * cell;
    let code_x = panel_x + pad;
    let code_y = panel_y + pad;
    let visible_lines = (((panel_h - 2.0 * pad) / line_h).floor() as usize).min(lines.len());

    let mut base = RgbImage::from_pixel(res.width, res.height, Rgb(BG));
    draw_text(
        &mut base,
        margin,
        title_y,
        base_cell * 1.5,
        &normalize(&input.title),
        TITLE,
        1.0,
    );
    fill_rect(
        &mut base,
        panel_x as i64,
        panel_y as i64,
        panel_w as i64,
        panel_h as i64,
        PANEL,
    );
    for (li, line) in lines.iter().take(visible_lines).enumerate() {
        for (ci, &(ch, color)) in line.iter().enumerate() {
            let x = code_x + ci as f64 * GLYPH as f64 * cell;
            if x + GLYPH as f64 * cell > panel_x + panel_w {
                break;
            }
            draw_char(
                &mut base,
                x,
                code_y + li as f64 * line_h,
                cell,
                ch,
                color,
                1.0,
            );
        }
    }

    // Outputs follow the code inside the panel.
    let mut y = code_y + visible_lines as f64 * line_h + line_h / 2.0;
    let bottom = panel_y + panel_h - pad;
    for block in &outputs {
        match block {
            OutputBlock::Text(text) => {
                for l in text {
                    if y + line_h > bottom {
                        break;
                    }
                    draw_text(&mut base, code_x, y, cell, l, OUTPUT_TEXT, 1.0);
                    y += line_h;
                }
            }
            OutputBlock::Image(img) => {
                let avail_w = panel_w - 2.0 * pad;
                let avail_h = bottom - y;
                if avail_h < 8.0 || img.width() == 0 || img.height() == 0 {
                    continue;
                }
                let k = (avail_w / img.width() as f64)
                    .min(avail_h / img.height() as f64)
                    .min(1.0);
                let tw = ((img.width() as f64 * k).floor() as u32).max(1);
                let th = ((img.height() as f64 * k).floor() as u32).max(1);
                let resized = imageops::resize(img, tw, th, FilterType::Nearest);
                let flat = flatten_on(&resized, [255, 255, 255]);
                blit(&mut base, &flat, code_x as i64, y as i64);
                y += th as f64 + line_h / 2.0;
            }
        }
    }

    // Annotation bullets sit right of the panel, level with their span's
    // first line, pushed down when they would collide.
    let annotation_x = panel_x + panel_w + margin / 2.0;
    let ann_cols = ((w - annotation_x - margin) / (GLYPH as f64 * cell)).floor() as usize;
    let mut sorted: Vec<_> = input.scene.emphases.iter().collect();
    sorted.sort_by_key(|e| e.span);
    let mut emphases = BTreeMap::new();
    let mut next_free = f64::MIN;
    for e in sorted {
        let first_line = positions.get(e.span.start).map_or(0, |p| p.0);
        let wrapped = wrap(&normalize(&e.annotation), ann_cols.saturating_sub(2).max(1));
        let y = (code_y + first_line as f64 * line_h).max(next_free);
        next_free = y + wrapped.len().max(1) as f64 * line_h + line_h / 2.0;
        emphases.insert(
            e.id.clone(),
            EmphasisLayout {
                span: e.span,
                scale_factor: e.scale_factor,
                annotation: wrapped,
                annotation_y: y,
            },
        );
    }

    let caption_cell = base_cell;
    let cap_cols = ((w - 2.0 * margin) / (GLYPH as f64 * caption_cell)).floor() as usize;
    let captions = input
        .scene
        .segments
        .iter()
        .map(|s| {
            let mut lines = wrap(&normalize(&s.text), cap_cols.max(1));
            if lines.len() > MAX_CAPTION_LINES {
                lines.truncate(MAX_CAPTION_LINES);
                let last = &mut lines[MAX_CAPTION_LINES - 1];
                let keep = last.chars().count().min(cap_cols.saturating_sub(3));
                *last = last.chars().take(keep).collect::<String>() + "...";
            }
            (s.id.clone(), lines)
        })
        .collect();

    Ok(SceneLayout {
        base,
        cell,
        code_x,
        code_y,
        line_h,
        visible_lines,
        lines,
        positions,
        emphases,
        annotation_x,
        captions,
        caption_cell,
        band_y,
        band_h,
    })
}

/// Draws the zoomed overlay for one emphasis at progress `p` and scale `s`.
pub fn draw_emphasis(img: &mut RgbImage, layout: &SceneLayout, span: Span, s: f64, p: f64) {
    if p <= 0.0 {
        return;
    }
    let cw = layout.char_w();
    let gh = GLYPH as f64 * layout.cell;
    let pad = layout.cell;
    for (line, c0, c1) in layout.runs(span) {
        if line >= layout.visible_lines {
            continue;
        }
        let x = layout.code_x + c0 as f64 * cw;
        let y = layout.code_y + line as f64 * layout.line_h;
        let w = (c1 - c0) as f64 * cw;
        blend_rect(
            img,
            (x - pad) as i64,
            (y - pad) as i64,
            (w + 2.0 * pad) as i64,
            (gh + 2.0 * pad) as i64,
            PANEL,
            0.7 * p,
        );
        let zw = w * s;
        let zh = gh * s;
        let zx = x + w / 2.0 - zw / 2.0;
        let zy = y + gh / 2.0 - zh / 2.0;
        let d = 2.0 * layout.cell * p;
        let (bx, by) = ((zx - pad).floor(), (zy - pad).floor());
        let (bw, bh) = ((zw + 2.0 * pad).ceil(), (zh + 2.0 * pad).ceil());
        blend_rect(
            img,
            (bx + d) as i64,
            (by + d) as i64,
            bw as i64,
            bh as i64,
            [0, 0, 0],
            0.5 * p,
        );
        blend_rect(
            img,
            bx as i64,
            by as i64,
            bw as i64,
            bh as i64,
            EMPHASIS_BOX,
            p,
        );
        for (k, col) in (c0..c1).enumerate() {
            let (ch, color) = layout.lines[line][col];
            draw_char(
                img,
                zx + k as f64 * cw * s,
                zy,
                layout.cell * s,
                ch,
                color,
                1.0,
            );
        }
    }
}

pub fn draw_annotation(img: &mut RgbImage, layout: &SceneLayout, e: &EmphasisLayout, opacity: f64) {
    if opacity <= 0.0 {
        return;
    }
    let c = layout.cell;
    let x = layout.annotation_x;
    let y = e.annotation_y;
    blend_rect(
        img,
        x as i64,
        (y + 2.0 * c) as i64,
        (4.0 * c) as i64,
        (4.0 * c) as i64,
        BULLET,
        opacity,
    );
    for (i, line) in e.annotation.iter().enumerate() {
        draw_text(
            img,
            x + 8.0 * c * 1.5,
            y + i as f64 * layout.line_h,
            c,
            line,
            ANNOTATION,
            opacity,
        );
    }
}

pub fn draw_caption(
    img: &mut RgbImage,
    layout: &SceneLayout,
    lines: &[String],
    opacity: f64,
    offset: f64,
) {
    if opacity <= 0.0 || lines.is_empty() {
        return;
    }
    let w = img.width() as f64;
    blend_rect(
        img,
        0,
        layout.band_y as i64,
        w as i64,
        layout.band_h as i64,
        [0, 0, 0],
        0.75 * opacity,
    );
    let cc = layout.caption_cell;
    let lh = 10.0 * cc;
    let block_h = lines.len() as f64 * lh - 2.0 * cc;
    let y0 = layout.band_y + ((layout.band_h - block_h) / 2.0).floor();
    for (i, line) in lines.iter().enumerate() {
        let tw = line.chars().count() as f64 * GLYPH as f64 * cc;
        let x = ((w - tw) / 2.0).floor() + (offset * w).round();
        draw_text(img, x, y0 + i as f64 * lh, cc, line, CAPTION, opacity);
    }
}
