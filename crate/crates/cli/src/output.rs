use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use iiae::io::atomic_write;

/// Reproducibility record attached to every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub invocation: Vec<String>,
    pub config: Value,
    pub seeds: Value,
}

impl Header {
    pub fn new(argv: &[String], config: Value, seeds: Value) -> Self {
        Self {
            tool: "iiae",
            version: env!("CARGO_PKG_VERSION"),
            invocation: argv.to_vec(),
            config,
            seeds,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// `{"header": .., <body fields>}` for object bodies, `{"header", "result"}` otherwise.
pub fn with_header<B: Serialize>(header: &Header, body: &B) -> iiae::Result<Value> {
    let body = serde_json::to_value(body)?;
    Ok(match body {
        Value::Object(mut map) => {
            map.insert("header".into(), header.to_value());
            Value::Object(map)
        }
        other => json!({ "header": header.to_value(), "result": other }),
    })
}

/// Pretty JSON to `path` (atomically) or to stdout.
pub fn emit_json(path: Option<&Path>, value: &Value) -> iiae::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => atomic_write(p, |w| {
            writeln!(w, "{text}").map_err(|e| iiae::Error::io(p, e))
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// One compact JSON value per line, written atomically.
pub fn emit_lines(path: &Path, lines: &[Value]) -> iiae::Result<()> {
    atomic_write(path, |w| {
        for l in lines {
            serde_json::to_writer(&mut *w, l)?;
            writeln!(w).map_err(|e| iiae::Error::io(path, e))?;
        }
        Ok(())
    })
}
