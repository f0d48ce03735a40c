//! Colors and palettes. Channels are stored as floats in `[0, 1]`.

use crate::error::{RenderError, Result};

pub type Color = [f32; 3];

pub const WHITE: Color = [1.0, 1.0, 1.0];
pub const BLACK: Color = [0.0, 0.0, 0.0];

/// The ten-color categorical palette used when none is given.
pub const TAB10: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn default_palette() -> Vec<Color> {
    TAB10.iter().map(|s| parse_color(s).expect("valid built-in color")).collect()
}

/// Parses `#RRGGBB`.
pub fn parse_color(s: &str) -> std::result::Result<Color, String> {
    let hex = s
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| format!("expected #RRGGBB, got '{s}'"))?;
    if hex.len() != 6 || !hex.is_ascii() {
        return Err(format!("expected #RRGGBB, got '{s}'"));
    }
    let mut c = [0.0; 3];
    for (k, ch) in c.iter_mut().enumerate() {
        let v = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
            .map_err(|_| format!("bad hex digits in '{s}'"))?;
        *ch = v as f32 / 255.0;
    }
    Ok(c)
}

/// One `#RRGGBB` per line; blank lines are skipped.
pub fn parse_palette(text: &str) -> Result<Vec<Color>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_color(line).map_err(|msg| RenderError::Palette { line: i + 1, msg })?);
    }
    if out.is_empty() {
        return Err(RenderError::Palette {
            line: 0,
            msg: "no colors".into(),
        });
    }
    Ok(out)
}

pub fn load_palette(path: impl AsRef<std::path::Path>) -> Result<Vec<Color>> {
    parse_palette(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_colors() {
        assert_eq!(parse_color("#ff0000").unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(parse_color("#FFFFFF").unwrap(), WHITE);
        assert!(parse_color("ff0000").is_err());
        assert!(parse_color("#ff00").is_err());
        assert!(parse_color("#gg0000").is_err());
    }

    #[test]
    fn palette_file() {
        let p = parse_palette("#000000\n\n#ffffff\n").unwrap();
        assert_eq!(p, vec![BLACK, WHITE]);
        match parse_palette("#000000\nnope\n") {
            Err(RenderError::Palette { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_palette("\n").is_err());
    }

    #[test]
    fn default_has_ten_distinct_colors() {
        let p = default_palette();
        assert_eq!(p.len(), 10);
        for i in 0..10 {
            for j in 0..i {
                assert_ne!(p[i], p[j]);
            }
        }
    }
}
