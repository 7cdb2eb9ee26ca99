use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use whitney_core::verifier::InequalityReport;

use crate::commands::CorpusEntry;
use crate::config::Format;
use crate::error::CliResult;

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, bytes)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// Depth-first `path,value` rows of a JSON document.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(map) => map.iter().for_each(|(k, v)| walk(&join(k), v, out)),
            Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn csv_finish(w: csv::Writer<Vec<u8>>) -> CliResult<Vec<u8>> {
    w.into_inner().map_err(|e| crate::error::CliError::Output(e.to_string()))
}

pub fn key_value_csv(value: &Value) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in flatten(value) {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    csv_finish(w)
}

fn csv_err(e: csv::Error) -> crate::error::CliError {
    crate::error::CliError::Output(e.to_string())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn reports_csv(reports: &[InequalityReport]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "check",
        "function",
        "kind",
        "r",
        "k",
        "p",
        "axis",
        "subset",
        "left",
        "right",
        "bound_constant",
        "inflation",
        "empirical_constant",
        "status",
        "note",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let kind = serde_json::to_value(r.kind).expect("kind serializes");
        w.write_record([
            r.id.clone(),
            r.check.clone(),
            r.function.clone(),
            kind.as_str().unwrap_or_default().to_string(),
            opt(&r.params.r),
            opt(&r.params.k),
            opt(&r.params.p),
            opt(&r.params.axis),
            opt(&r.params.subset),
            r.left.to_string(),
            r.right.to_string(),
            opt(&r.bound_constant),
            r.inflation.to_string(),
            opt(&r.empirical_constant),
            r.status.to_string(),
            r.note.clone(),
        ])
        .map_err(csv_err)?;
    }
    csv_finish(w)
}

pub fn corpus_csv(entries: &[CorpusEntry]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "dim", "tag", "derivatives", "description"]).map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.name.clone(),
            e.dim.to_string(),
            e.tag.as_str().to_string(),
            e.derivatives.to_string(),
            e.description.clone(),
        ])
        .map_err(csv_err)?;
    }
    csv_finish(w)
}

pub fn corpus_text(entries: &[CorpusEntry]) -> Vec<u8> {
    let mut s = format!("{:<24} {:>3}  {:<16} {:<11} {}\n", "name", "dim", "tag", "derivatives", "description");
    for e in entries {
        s.push_str(&format!(
            "{:<24} {:>3}  {:<16} {:<11} {}\n",
            e.name,
            e.dim,
            e.tag.as_str(),
            if e.derivatives { "yes" } else { "no" },
            e.description
        ));
    }
    s.into_bytes()
}

pub fn write_value(format: Format, path: Option<&Path>, value: &Value) -> CliResult<()> {
    let bytes = match format {
        Format::Json => json_bytes(value),
        Format::Csv => key_value_csv(value)?,
    };
    emit(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flatten_paths() {
        let v = json!({ "a": { "b": [1, 2] }, "c": "x", "d": null });
        let rows = flatten(&v);
        assert_eq!(
            rows,
            vec![
                ("a.b.0".into(), "1".into()),
                ("a.b.1".into(), "2".into()),
                ("c".into(), "x".into()),
                ("d".into(), "null".into()),
            ]
        );
    }
}
