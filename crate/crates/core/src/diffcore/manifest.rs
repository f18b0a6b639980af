use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::Vector;

/// Text header preceding binary parameter blocks in checkpoints.
///
/// Layout: a `<kind> <version>` line, `key value...` lines, and a closing
/// `end` line. Binary `SVGP` blocks follow immediately.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, Vec<String>)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, key: &str, values: impl IntoIterator<Item = impl ToString>) {
        self.entries
            .push((key.to_string(), values.into_iter().map(|v| v.to_string()).collect()));
    }

    pub fn push_vector(&mut self, key: &str, v: &Vector) {
        self.push(key, v.iter().map(|x| format!("{x:e}")));
    }

    pub fn write_to<W: Write>(&self, w: &mut W, kind: &str, version: u32) -> Result<()> {
        writeln!(w, "{kind} {version}")?;
        for (key, values) in &self.entries {
            write!(w, "{key}")?;
            for v in values {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R, kind: &str, version: u32) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let expected = format!("{kind} {version}");
        if line.trim_end() != expected {
            return Err(Error::Format(format!(
                "expected header `{expected}`, found `{}`",
                line.trim_end()
            )));
        }
        let mut out = Manifest::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format(format!("{kind} manifest is missing `end`")));
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                None => continue,
                Some("end") => return Ok(out),
                Some(key) => out
                    .entries
                    .push((key.to_string(), parts.map(str::to_string).collect())),
            }
        }
    }

    fn raw(&self, key: &str) -> Result<&[String]> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("manifest has no `{key}` entry")))
    }

    pub fn usizes(&self, key: &str) -> Result<Vec<usize>> {
        self.raw(key)?
            .iter()
            .map(|v| v.parse().map_err(|_| Error::Format(format!("bad integer `{v}` in `{key}`"))))
            .collect()
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        match self.usizes(key)?.as_slice() {
            [v] => Ok(*v),
            other => Err(Error::Format(format!("`{key}` should hold one integer, got {other:?}"))),
        }
    }

    pub fn vector(&self, key: &str) -> Result<Vector> {
        let values: Result<Vec<f64>> = self
            .raw(key)?
            .iter()
            .map(|v| v.parse().map_err(|_| Error::Format(format!("bad number `{v}` in `{key}`"))))
            .collect();
        Ok(Vector::from_vec(values?))
    }

    pub fn string(&self, key: &str) -> Result<String> {
        Ok(self.raw(key)?.join(" "))
    }
}
