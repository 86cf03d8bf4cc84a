//! Text formats: set literals `p=7; {0,1,3}`, matrix literals
//! `p=5; [[2,1,0],[1,0,1]]`, and grid files:
//!
//! ```text
//! # comment
//! p = 7
//! A1 = {0,1,3}
//! A2 = {2,6}
//! ```
//!
//! Errors carry a 1-based line and column.

use crate::error::{Error, Result};
use crate::fp::{PrimeModulus, ResidueSet};
use crate::image::GridFamily;
use crate::linmap::MatrixFp;

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    /// Column of `src[0]` in the original line, 1-based.
    base_column: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self::at(src, 1, 1)
    }

    fn at(src: &'a str, line: usize, base_column: usize) -> Self {
        Cursor {
            src,
            pos: 0,
            line,
            base_column,
        }
    }

    fn column(&self) -> usize {
        self.base_column + self.src[..self.pos].chars().count()
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.column(), message)
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(match self.peek() {
                Some(found) => format!("expected '{c}', found '{found}'"),
                None => format!("expected '{c}', found end of input"),
            }))
        }
    }

    fn number(&mut self) -> Result<u64> {
        self.skip_ws();
        let start = self.pos;
        let digits = self.src[start..]
            .chars()
            .take_while(char::is_ascii_digit)
            .count();
        if digits == 0 {
            return Err(self.error("expected a number"));
        }
        self.pos += digits;
        self.src[start..self.pos].parse().map_err(|_| {
            self.pos = start;
            self.error("number too large")
        })
    }

    fn finish(&mut self) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => Err(self.error(format!("unexpected trailing '{c}'"))),
        }
    }

    fn modulus_header(&mut self) -> Result<PrimeModulus> {
        self.expect('p')?;
        self.expect('=')?;
        self.skip_ws();
        let column = self.column();
        let p = self.number()?;
        let p =
            u32::try_from(p).map_err(|_| Error::parse(self.line, column, "modulus too large"))?;
        PrimeModulus::new(p).map_err(|e| Error::parse(self.line, column, e.to_string()))
    }

    fn residue(&mut self, p: PrimeModulus) -> Result<u32> {
        self.skip_ws();
        let column = self.column();
        let v = self.number()?;
        if v >= p.get() as u64 {
            return Err(Error::parse(
                self.line,
                column,
                format!("residue {v} is not in 0..{p}"),
            ));
        }
        Ok(v as u32)
    }

    /// `{a,b,...}`
    fn members(&mut self, p: PrimeModulus) -> Result<ResidueSet> {
        self.expect('{')?;
        let mut out = Vec::new();
        if !self.eat('}') {
            loop {
                out.push(self.residue(p)?);
                if self.eat('}') {
                    break;
                }
                self.expect(',')?;
            }
        }
        ResidueSet::new(p, out)
    }

    /// `[[..],[..]]`
    fn rows(&mut self, p: PrimeModulus) -> Result<Vec<Vec<u32>>> {
        self.expect('[')?;
        let mut rows = Vec::new();
        loop {
            let column = self.column();
            self.expect('[')?;
            let mut row = Vec::new();
            loop {
                row.push(self.residue(p)?);
                if self.eat(']') {
                    break;
                }
                self.expect(',')?;
            }
            if let Some(first) = rows.first().map(Vec::len) {
                if first != row.len() {
                    return Err(Error::parse(
                        self.line,
                        column,
                        format!("row has {} entries, expected {first}", row.len()),
                    ));
                }
            }
            rows.push(row);
            if self.eat(']') {
                return Ok(rows);
            }
            self.expect(',')?;
        }
    }
}

pub fn parse_set_literal(s: &str) -> Result<ResidueSet> {
    let mut c = Cursor::new(s);
    let p = c.modulus_header()?;
    c.expect(';')?;
    let set = c.members(p)?;
    c.finish()?;
    Ok(set)
}

/// A bare `{0,1,3}` for a known modulus.
pub fn parse_members(s: &str, p: PrimeModulus) -> Result<ResidueSet> {
    let mut c = Cursor::new(s);
    let set = c.members(p)?;
    c.finish()?;
    Ok(set)
}

pub fn parse_matrix_literal(s: &str) -> Result<MatrixFp> {
    let mut c = Cursor::new(s);
    let p = c.modulus_header()?;
    c.expect(';')?;
    let rows = c.rows(p)?;
    c.finish()?;
    MatrixFp::from_rows(p, rows)
}

/// Sets separated by `;`, e.g. `{0,1}; {0,2}`.
pub fn parse_inline_grid(s: &str, p: PrimeModulus) -> Result<GridFamily> {
    let mut c = Cursor::new(s);
    let mut sets = vec![c.members(p)?];
    while c.eat(';') {
        sets.push(c.members(p)?);
    }
    c.finish()?;
    GridFamily::new(p, sets)
}

pub fn parse_grid_file(text: &str) -> Result<GridFamily> {
    let mut modulus = None;
    let mut sets = Vec::new();
    let mut last_line = 0;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let mut c = Cursor::at(content, line, 1);
        let Some(p) = modulus else {
            modulus = Some(c.modulus_header()?);
            c.finish()?;
            continue;
        };
        c.expect('A')?;
        c.skip_ws();
        let column = c.column();
        let label = c.number()?;
        if label != sets.len() as u64 + 1 {
            return Err(Error::parse(
                line,
                column,
                format!("expected A{}, found A{label}", sets.len() + 1),
            ));
        }
        c.expect('=')?;
        sets.push(c.members(p)?);
        c.finish()?;
    }
    let Some(p) = modulus else {
        return Err(Error::parse(
            last_line.max(1),
            1,
            "missing 'p = <prime>' header",
        ));
    };
    if sets.is_empty() {
        return Err(Error::parse(last_line, 1, "grid has no sets"));
    }
    GridFamily::new(p, sets)
}

/// Comma-separated sizes, `2,2,2`.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let mut c = Cursor::new(s);
    let mut out = vec![c.number()? as usize];
    while c.eat(',') {
        out.push(c.number()? as usize);
    }
    c.finish()?;
    Ok(out)
}

/// Renders `error` under the offending input with a caret, for single-line inputs.
pub fn annotate(input: &str, error: &Error) -> String {
    match error {
        Error::Parse { line, column, .. } => {
            let text = input.lines().nth(line - 1).unwrap_or("");
            format!(
                "{error}\n  {text}\n  {}^",
                " ".repeat(column.saturating_sub(1))
            )
        }
        _ => error.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32) -> PrimeModulus {
        PrimeModulus::new(n).unwrap()
    }

    fn column_of(e: Error) -> (usize, usize) {
        match e {
            Error::Parse { line, column, .. } => (line, column),
            other => panic!("not a parse error: {other}"),
        }
    }

    #[test]
    fn set_literals() {
        let s = parse_set_literal("p=7; {0,1,3}").unwrap();
        assert_eq!(s, ResidueSet::new(p(7), [0, 1, 3]).unwrap());
        assert_eq!(parse_set_literal(" p = 7 ; { 3 , 0 } ").unwrap().len(), 2);
        assert!(parse_set_literal("p=7; {}").unwrap().is_empty());
        assert_eq!(
            column_of(parse_set_literal("p=7; {0,9}").unwrap_err()),
            (1, 9)
        );
        assert_eq!(
            column_of(parse_set_literal("p=8; {0}").unwrap_err()),
            (1, 3)
        );
        assert_eq!(
            column_of(parse_set_literal("p=7; {0,1").unwrap_err()),
            (1, 10)
        );
        assert_eq!(
            column_of(parse_set_literal("p=7; {0} x").unwrap_err()),
            (1, 10)
        );
    }

    #[test]
    fn matrix_literals() {
        let m = parse_matrix_literal("p=5; [[2,1,0],[1,0,1]]").unwrap();
        assert_eq!((m.rows(), m.cols(), m.get(0, 0)), (2, 3, 2));
        assert_eq!(
            column_of(parse_matrix_literal("p=5; [[1,2],[3]]").unwrap_err()),
            (1, 13)
        );
        assert_eq!(
            column_of(parse_matrix_literal("p=5; [[1,5]]").unwrap_err()),
            (1, 10)
        );
        assert!(parse_matrix_literal("p=5; []").is_err());
    }

    #[test]
    fn grid_files() {
        let text = "# a grid\np = 7\n\nA1 = {0,1,3}  # first\nA2 = {2, 6}\n";
        let g = parse_grid_file(text).unwrap();
        assert_eq!(g.sizes(), vec![3, 2]);
        assert_eq!(parse_grid_file(&g.to_string()).unwrap(), g);
        let bad = "p = 7\nA1 = {0}\nA3 = {1}\n";
        assert_eq!(column_of(parse_grid_file(bad).unwrap_err()), (3, 2));
        let bad = "p = 7\nA1 = {0, 7}\n";
        assert_eq!(column_of(parse_grid_file(bad).unwrap_err()), (2, 10));
        assert!(parse_grid_file("# nothing\n").is_err());
        assert!(parse_grid_file("p = 7\n").is_err());
    }

    #[test]
    fn inline_grids_and_sizes() {
        let g = parse_inline_grid("{0,1}; {0,2}", p(5)).unwrap();
        assert_eq!(g.arity(), 2);
        assert_eq!(parse_sizes("2, 2,4").unwrap(), vec![2, 2, 4]);
        assert!(parse_sizes("2,,2").is_err());
    }

    #[test]
    fn caret_annotation() {
        let input = "p=7; {0,9}";
        let msg = annotate(input, &parse_set_literal(input).unwrap_err());
        assert!(msg.ends_with("\n  p=7; {0,9}\n          ^"), "{msg}");
    }
}
