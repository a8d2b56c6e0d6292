//! Artifact emission: CSV tables, the JSON summary, and the plain-text
//! report, all written by the single orchestrator thread. Tracks what has
//! been written so an aborted run can flag its partial output.

use std::path::{Path, PathBuf};

use serde::Serialize;

/// Writer rooted at the output directory.
pub struct Emitter {
    dir: PathBuf,
    written: Vec<String>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Emitter, String> {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("cannot create output dir {}: {e}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// RFC-4180 table: CRLF separators, quoting as needed.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(&path)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        w.write_record(header).map_err(|e| e.to_string())?;
        for row in rows {
            w.write_record(row).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| format!("cannot serialize {name}: {e}"))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// A completed run leaves no stale marker from an earlier aborted one.
    pub fn clear_partial(&self) {
        let _ = std::fs::remove_file(self.dir.join("partial.json"));
    }

    /// Mark an aborted run: records which artifacts were completed before
    /// the failing stage.
    pub fn flag_partial(&mut self, stage: &str, error: &str) {
        #[derive(Serialize)]
        struct Partial<'a> {
            partial: bool,
            failed_stage: &'a str,
            error: &'a str,
            completed: &'a [String],
        }
        let marker = Partial {
            partial: true,
            failed_stage: stage,
            error,
            completed: &self.written.clone(),
        };
        let _ = self.json("partial.json", &marker);
    }
}

/// Shortest-roundtrip decimal form; stable across runs and platforms.
pub fn num(x: f64) -> String {
    format!("{x}")
}
