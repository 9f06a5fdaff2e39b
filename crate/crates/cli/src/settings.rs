use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Overlays the flags that were given on top of a JSON config file.
///
/// Unset options, `false` switches and empty lists count as not given.
/// Keys the flags do not know are rejected.
pub fn merge<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = config else {
        return Ok(flags);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(map) = &mut base else {
        return Err(Failure::Usage(format!("config {} must hold a JSON object", path.display())));
    };
    let Value::Object(over) = serde_json::to_value(&flags)? else {
        unreachable!("argument structs serialize to objects");
    };
    if let Some(key) = map.keys().find(|k| !over.contains_key(*k)) {
        return Err(Failure::Usage(format!("config {}: unknown option `{key}`", path.display())));
    }
    for (key, v) in over {
        let unset = match &v {
            Value::Null | Value::Bool(false) => true,
            Value::Array(a) => a.is_empty(),
            _ => false,
        };
        if !unset {
            map.insert(key, v);
        }
    }
    serde_json::from_value(base).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

/// Resolves a relative output path against the output directory and
/// creates its parent directories.
pub fn output_path(path: Option<&Path>, out_dir: Option<&Path>) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::Usage("an output path is required (-o)".into()))?;
    let full = match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = full.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(full)
}

/// `run.csv` becomes `run_seed3.csv`; a `{seed}` placeholder is substituted
/// instead when present.
pub fn per_seed(path: &Path, seed: u64) -> PathBuf {
    let text = path.to_string_lossy();
    if text.contains("{seed}") {
        return PathBuf::from(text.replace("{seed}", &seed.to_string()));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

/// `"0-8"`, `"1,4,7"` or a mix such as `"0-2,9"`; seeds must be distinct.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Usage(format!("malformed seed list `{spec}`"));
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Failure::Usage(format!("seed list `{spec}` repeats a seed")));
    }
    Ok(seeds)
}
