//! Textual weight file shared by the forward model and the classifier.
//!
//! ```text
//! mirrorself-weights 1
//! kind <name>
//! dims <usize>...
//! meta <key> <value>          (zero or more)
//! tensor <name> <rows> <cols>
//! <cols values>               (rows lines)
//! ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &str = "mirrorself-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightFile {
    pub kind: String,
    pub dims: Vec<usize>,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl WeightFile {
    pub fn new(kind: &str, dims: Vec<usize>) -> Self {
        Self {
            kind: kind.to_string(),
            dims,
            ..Default::default()
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_tensor(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) {
        assert_eq!(rows * cols, data.len(), "tensor {name} shape");
        self.tensors.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            data: data.to_vec(),
        });
    }

    /// Tensor by name with an expected shape.
    pub fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<&[f64]> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
        if t.rows != rows || t.cols != cols {
            return Err(Error::Format(format!(
                "tensor `{name}` is {}x{}, expected {rows}x{cols}",
                t.rows, t.cols
            )));
        }
        Ok(&t.data)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "kind {}", self.kind);
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dims {}", dims.join(" "));
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for t in &self.tensors {
            let _ = writeln!(s, "tensor {} {} {}", t.name, t.rows, t.cols);
            for row in t.data.chunks(t.cols.max(1)) {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty weight file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format("not a mirrorself weight file".into()));
        }
        let version: u32 = parse_field(parts.next(), "version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        let mut out = WeightFile::default();
        while let Some(line) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("kind") => out.kind = parts.next().unwrap_or_default().to_string(),
                Some("dims") => {
                    out.dims = parts.map(|p| parse_field(Some(p), "dims")).collect::<Result<_>>()?;
                }
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| Error::Format("meta without key".into()))?;
                    let value: Vec<&str> = parts.collect();
                    out.meta.push((key.to_string(), value.join(" ")));
                }
                Some("tensor") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| Error::Format("tensor without name".into()))?
                        .to_string();
                    let rows: usize = parse_field(parts.next(), "tensor rows")?;
                    let cols: usize = parse_field(parts.next(), "tensor cols")?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let row = lines
                            .next()
                            .ok_or_else(|| Error::Format(format!("tensor `{name}` truncated at row {r}")))?;
                        let before = data.len();
                        for v in row.split_whitespace() {
                            let x: f64 = parse_field(Some(v), "tensor value")?;
                            if !x.is_finite() {
                                return Err(Error::Format(format!("non-finite value in tensor `{name}`")));
                            }
                            data.push(x);
                        }
                        if data.len() - before != cols {
                            return Err(Error::Format(format!("tensor `{name}` row {r} has wrong width")));
                        }
                    }
                    out.tensors.push(Tensor { name, rows, cols, data });
                }
                Some(other) => return Err(Error::Format(format!("unexpected record `{other}`"))),
                None => {}
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    s.and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad or missing {what}")))
}
