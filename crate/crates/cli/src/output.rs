use serde::Serialize;

use crate::args::OutputFormat;

/// Writes reports to stdout as aligned tables or as JSON lines.
pub struct Out {
    pub format: OutputFormat,
}

impl Out {
    pub fn human(&self) -> bool {
        self.format == OutputFormat::Human
    }

    /// One JSON line in jsonl mode; ignored in human mode.
    pub fn record<T: Serialize>(&self, value: &T) {
        if !self.human() {
            println!("{}", serde_json::to_string(value).expect("report serializes"));
        }
    }

    pub fn line(&self, text: impl AsRef<str>) {
        if self.human() {
            println!("{}", text.as_ref());
        }
    }

    pub fn table(&self, header: &[&str], rows: &[Vec<String>]) {
        if !self.human() {
            return;
        }
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for r in rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let fmt_row = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_owned()
        };
        println!("{}", fmt_row(header.to_vec()));
        for r in rows {
            println!("{}", fmt_row(r.iter().map(String::as_str).collect()));
        }
    }
}

/// Shortens long text for table cells.
pub fn clip(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_owned()
    } else {
        let mut out: String = s.chars().take(max.saturating_sub(1)).collect();
        out.push('…');
        out
    }
}
