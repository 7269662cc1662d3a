//! Plain-text point-set files.
//!
//! ```text
//! # unit-vectors d=3 n=2
//! 0 0 1
//! 0.6 0.8 0
//! ```
//!
//! One point per line, three decimal floats separated by single spaces. The
//! writer uses the shortest representation that round-trips exactly.

use std::io::{self, Write};
use std::path::Path;

use crate::error::ParseError;
use crate::sphere::UnitVector3;

const HEADER_PREFIX: &str = "# unit-vectors d=3 n=";

pub fn format_points(points: &[UnitVector3]) -> String {
    let mut out = String::with_capacity(points.len() * 64 + 32);
    out.push_str(HEADER_PREFIX);
    out.push_str(&points.len().to_string());
    out.push('\n');
    for p in points {
        let [a, b, c] = p.coords();
        out.push_str(&format!("{a} {b} {c}\n"));
    }
    out
}

pub fn write_points(path: &Path, points: &[UnitVector3]) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(format_points(points).as_bytes())?;
    f.flush()
}

fn parse_coord(tok: &str, line: usize) -> Result<f64, ParseError> {
    // decimal only: reject inf/nan spellings and hex
    if tok.is_empty()
        || !tok
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'))
    {
        return Err(ParseError::line(line, format!("`{tok}` is not a decimal float")));
    }
    let v: f64 = tok
        .parse()
        .map_err(|_| ParseError::line(line, format!("`{tok}` is not a decimal float")))?;
    if !v.is_finite() {
        return Err(ParseError::line(line, "coordinate overflows f64"));
    }
    Ok(v)
}

pub fn parse_points(text: &str) -> Result<Vec<UnitVector3>, ParseError> {
    let (header, rest) = text
        .split_once('\n')
        .ok_or_else(|| ParseError::line(1, "missing final line terminator"))?;
    let count: usize = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| ParseError::line(1, format!("expected header `{HEADER_PREFIX}<count>`")))?
        .parse()
        .map_err(|_| ParseError::line(1, "point count is not a non-negative integer"))?;
    if rest.is_empty() {
        return if count == 0 {
            Ok(Vec::new())
        } else {
            Err(ParseError::line(2, format!("declared {count} points, found 0")))
        };
    }
    let body = rest
        .strip_suffix('\n')
        .ok_or_else(|| ParseError::line(rest.split('\n').count() + 1, "missing final line terminator"))?;
    let mut points = Vec::with_capacity(count.min(1 << 20));
    for (i, line) in body.split('\n').enumerate() {
        let lineno = i + 2;
        if points.len() == count {
            return Err(ParseError::line(lineno, format!("more than the declared {count} points")));
        }
        if line.is_empty() {
            return Err(ParseError::line(lineno, "empty line"));
        }
        let toks: Vec<&str> = line.split(' ').collect();
        if toks.len() != 3 {
            return Err(ParseError::line(
                lineno,
                "expected three floats separated by single spaces",
            ));
        }
        let v = [
            parse_coord(toks[0], lineno)?,
            parse_coord(toks[1], lineno)?,
            parse_coord(toks[2], lineno)?,
        ];
        let p = UnitVector3::new(v).map_err(|e| ParseError::line(lineno, e.to_string()))?;
        points.push(p);
    }
    if points.len() != count {
        return Err(ParseError::line(
            points.len() + 2,
            format!("declared {count} points, found {}", points.len()),
        ));
    }
    Ok(points)
}

pub fn read_points(path: &Path) -> Result<Vec<UnitVector3>, crate::error::ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_points(&text)?)
}
