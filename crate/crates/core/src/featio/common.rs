//! Line-oriented parsing and writing helpers shared by all formats.
//!
//! Every format in this crate is plain text: one record per line, fields
//! separated by single spaces, `#` lines and blank lines ignored. Reals are
//! written with 18 significant digits so that write→read reproduces the
//! exact same bits, which keeps artifact files diffable and lets tests
//! compare files byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Formats a real for serialization. Round-trips bit-exactly through
/// [`parse_real`].
pub fn fmt_real(x: f64) -> String {
    format!("{x:.17e}")
}

/// Reads non-comment lines from a text file, tracking line numbers for
/// error messages.
pub struct LineReader {
    path: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl LineReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            Error::parse(&path.display().to_string(), 0, format!("cannot open: {e}"))
        })?;
        Ok(LineReader {
            path: path.display().to_string(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
        })
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn line_no(&self) -> usize {
        self.line_no
    }

    /// Next significant line, skipping blanks and `#` comments. `None` at EOF.
    pub fn next_line(&mut self) -> Result<Option<String>> {
        loop {
            match self.lines.next() {
                None => return Ok(None),
                Some(Err(e)) => return Err(Error::parse(&self.path, self.line_no + 1, e.to_string())),
                Some(Ok(line)) => {
                    self.line_no += 1;
                    let trimmed = line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    return Ok(Some(trimmed.to_string()));
                }
            }
        }
    }

    /// Like [`next_line`](Self::next_line) but EOF is an error.
    pub fn expect_line(&mut self, what: &str) -> Result<String> {
        self.next_line()?
            .ok_or_else(|| Error::parse(&self.path, self.line_no + 1, format!("unexpected end of file, expected {what}")))
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line_no, message.into())
    }
}

/// One whitespace-split line with typed field accessors.
pub struct Fields<'a> {
    reader: &'a LineReader,
    tokens: Vec<&'a str>,
    next: usize,
}

impl<'a> Fields<'a> {
    pub fn new(reader: &'a LineReader, line: &'a str) -> Self {
        Fields {
            reader,
            tokens: line.split_whitespace().collect(),
            next: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.tokens.len() - self.next
    }

    pub fn token(&mut self, what: &str) -> Result<&'a str> {
        let t = self
            .tokens
            .get(self.next)
            .ok_or_else(|| self.reader.err(format!("missing field: {what}")))?;
        self.next += 1;
        Ok(t)
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.token(what)?;
        t.parse()
            .map_err(|_| self.reader.err(format!("bad {what}: {t:?} is not a non-negative integer")))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let t = self.token(what)?;
        t.parse()
            .map_err(|_| self.reader.err(format!("bad {what}: {t:?} is not a non-negative integer")))
    }

    pub fn real(&mut self, what: &str) -> Result<f64> {
        let t = self.token(what)?;
        let v: f64 = t
            .parse()
            .map_err(|_| self.reader.err(format!("bad {what}: {t:?} is not a real")))?;
        Ok(v)
    }

    /// A real that must be finite (most score and feature fields).
    pub fn finite_real(&mut self, what: &str) -> Result<f64> {
        let v = self.real(what)?;
        if !v.is_finite() {
            return Err(self.reader.err(format!("non-finite {what}")));
        }
        Ok(v)
    }

    pub fn expect_tag(&mut self, tag: &str) -> Result<()> {
        let t = self.token(tag)?;
        if t != tag {
            return Err(self.reader.err(format!("expected {tag:?}, found {t:?}")));
        }
        Ok(())
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() > 0 {
            return Err(self
                .reader
                .err(format!("trailing fields: {:?}", &self.tokens[self.next..])));
        }
        Ok(())
    }
}

/// Writes a file through a temporary sibling and renames it into place, so
/// a failed run never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
