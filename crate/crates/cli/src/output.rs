use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// Tab-separated table with a `# key=value` preamble.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: String, columns: &[&str]) -> Self {
        let mut text = header;
        text.push_str(&columns.join("\t"));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: ToString>(&mut self, cells: &[S]) {
        let cells: Vec<String> = cells.iter().map(ToString::to_string).collect();
        self.text.push_str(&cells.join("\t"));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).with_context(|| format!("writing {}", path.display()))
    }

    /// To `path`, or stdout when it is `None`.
    pub fn emit(&self, path: Option<&str>) -> Result<()> {
        match path {
            Some(p) => self.write(Path::new(p)),
            None => {
                print!("{}", self.text);
                Ok(())
            }
        }
    }
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    if x == 0.0 || (1e-4..1e9).contains(&x.abs()) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}
