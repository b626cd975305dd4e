use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{io_err, IoError};

/// Flat `key=value` text, one pair per line, `#` comments. Keys are kept
/// sorted so that output is canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues(pub BTreeMap<String, String>);

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn set_float(&mut self, key: &str, value: f64) {
        self.set(key, super::format_float(value));
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError>
    where
        T::Err: Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| IoError::Manifest {
                    key: key.to_string(),
                    message: format!("cannot parse {v:?}: {e}"),
                })
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, IoError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| IoError::Manifest {
            key: key.to_string(),
            message: "missing".into(),
        })
    }
}

pub fn write_kv<W: Write>(out: &mut W, kv: &KeyValues) -> std::io::Result<()> {
    for (k, v) in &kv.0 {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

pub fn read_kv<R: Read>(input: R, context: &str) -> Result<KeyValues, IoError> {
    let mut map = BTreeMap::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| IoError::Parse {
            context: context.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Parse {
            context: context.to_string(),
            line: n + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(KeyValues(map))
}

pub fn write_kv_file(path: &Path, kv: &KeyValues) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_kv(&mut buf, kv).expect("writing to memory");
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_kv_file(path: &Path) -> Result<KeyValues, IoError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_kv(f, &path.display().to_string())
}
