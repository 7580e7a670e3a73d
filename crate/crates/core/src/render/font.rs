//! The bundled 8×8 bitmap font. Row bytes have the leftmost pixel in bit 0.

use font8x8::legacy::{BASIC_LEGACY, LATIN_LEGACY};

pub const GLYPH: u32 = 8;

pub fn glyph(c: char) -> [u8; 8] {
    let n = c as u32;
    match n {
        0x20..=0x7e => BASIC_LEGACY[n as usize],
        0xa0..=0xff => LATIN_LEGACY[(n - 0xa0) as usize],
        _ => BASIC_LEGACY['?' as usize],
    }
}

/// Maps typographic characters onto ones the font has and expands tabs.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\t' => out.push_str("    "),
            '‘' | '’' => out.push('\''),
            '“' | '”' => out.push('"'),
            '–' | '—' => out.push('-'),
            '…' => out.push_str("..."),
            '\r' => {}
            _ => out.push(c),
        }
    }
    out
}

/// Greedy word wrap to `cols` columns; words longer than a line are cut.
pub fn wrap(text: &str, cols: usize) -> Vec<String> {
    let cols = cols.max(1);
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        loop {
            let used = line.chars().count();
            let need = if used == 0 {
                word.len()
            } else {
                used + 1 + word.len()
            };
            if need <= cols {
                if used > 0 {
                    line.push(' ');
                }
                line.extend(word.iter());
                break;
            }
            if used > 0 {
                lines.push(std::mem::take(&mut line));
                continue;
            }
            let rest = word.split_off(cols);
            lines.push(word.iter().collect());
            word = rest;
            if word.is_empty() {
                break;
            }
        }
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs() {
        assert_eq!(glyph(' '), [0; 8]);
        assert_ne!(glyph('A'), [0; 8]);
        assert_eq!(glyph('\u{4e00}'), glyph('?'));
        assert_ne!(glyph('é'), glyph('?'));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap("aa bb cc", 5), vec!["aa bb", "cc"]);
        assert_eq!(wrap("abcdefgh", 3), vec!["abc", "def", "gh"]);
        assert!(wrap("   ", 4).is_empty());
    }

    #[test]
    fn normalizing() {
        assert_eq!(normalize("\t‘x’ — “y”…"), "    'x' - \"y\"...");
    }
}
