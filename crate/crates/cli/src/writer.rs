//! Artifact serialization: CSV and JSON-lines per table, plus a run summary.

use crate::experiments::RunArtifacts;
use kloosterlab_core::report::Table;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn write_artifacts(out_dir: &Path, run: &RunArtifacts) -> std::io::Result<Vec<PathBuf>> {
    let dir = out_dir.join(&run.name);
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for (name, table) in &run.tables {
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::File::create(&csv_path)?.write_all(table.to_csv().as_bytes())?;
        let jsonl_path = dir.join(format!("{name}.jsonl"));
        std::fs::File::create(&jsonl_path)?.write_all(table.to_jsonl().as_bytes())?;
        written.push(csv_path);
        written.push(jsonl_path);
    }
    let summary_path = dir.join("summary.json");
    std::fs::File::create(&summary_path)?.write_all(summary_json(run).as_bytes())?;
    written.push(summary_path);
    Ok(written)
}

pub fn summary_json(run: &RunArtifacts) -> String {
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"experiment\": \"{}\",\n", run.name));
    out.push_str(&format!(
        "  \"hard_failures\": {},\n",
        run.hard_failures.len()
    ));
    for (i, (k, v)) in run.summary.iter().enumerate() {
        let comma = if i + 1 == run.summary.len() { "" } else { "," };
        out.push_str(&format!("  \"{}\": \"{}\"{}\n", k, v, comma));
    }
    out.push_str("}\n");
    out
}

/// Re-serialize an existing CSV artifact in the other format.
pub fn reexport(input: &Path, format: &str, out_dir: &Path) -> Result<PathBuf, String> {
    let text = std::fs::read_to_string(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let mut lines = text.lines();
    let schema = lines.next().ok_or("empty artifact")?;
    if !schema.starts_with('#') {
        return Err("missing schema line".into());
    }
    let header = lines.next().ok_or("missing header")?;
    let mut table = Table::new(&header.split(',').collect::<Vec<_>>());
    for line in lines {
        if line.is_empty() {
            continue;
        }
        table.push(line.split(',').map(|s| s.to_string()).collect());
    }
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or("bad file name")?;
    std::fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let (path, body) = match format {
        "jsonl" => (out_dir.join(format!("{stem}.jsonl")), table.to_jsonl()),
        "csv" => (out_dir.join(format!("{stem}.csv")), table.to_csv()),
        other => return Err(format!("unknown format {other}; use csv or jsonl")),
    };
    std::fs::write(&path, body).map_err(|e| e.to_string())?;
    Ok(path)
}
