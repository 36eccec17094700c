//! File formats. Every JSON document carries a `schema_version`; infinite
//! bounds are written as the strings `"inf"` and `"-inf"`. Writes go to a
//! temporary file that is then renamed over the target.

use crate::dsl::{DslError, Program};
use crate::milp::{validate_instance, Instance, MilpError, Sense, Triplet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const INSTANCE_SCHEMA: u32 = 1;
pub const PROGRAM_HEADER: &str = "# dhevo-dsl v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid JSON: {msg}")]
    Json { path: PathBuf, msg: String },
    #[error("schema mismatch: expected version {expected}, found {found}")]
    SchemaMismatch { expected: u32, found: String },
    #[error("{path}: {source}")]
    Instance { path: PathBuf, source: MilpError },
    #[error("{path}: {source}")]
    Program { path: PathBuf, source: DslError },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, to_json_pretty(value).as_bytes())
}

fn parse_json(path: &Path, text: &str) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Json { path: path.to_path_buf(), msg: e.to_string() })
}

fn check_version(v: &Value, expected: u32) -> Result<(), IoError> {
    match v.get("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(expected as u64) => Ok(()),
        Some(other) => Err(IoError::SchemaMismatch { expected, found: other.to_string() }),
        None => Err(IoError::SchemaMismatch { expected, found: "none".into() }),
    }
}

/// Loads a JSON document whose `schema_version` must equal `expected`.
pub fn load_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T, IoError> {
    let text = read_text(path)?;
    from_versioned_str(path, &text, expected)
}

pub fn from_versioned_str<T: DeserializeOwned>(
    path: &Path,
    text: &str,
    expected: u32,
) -> Result<T, IoError> {
    let v = parse_json(path, text)?;
    check_version(&v, expected)?;
    serde_json::from_value(v).map_err(|e| IoError::Json { path: path.to_path_buf(), msg: e.to_string() })
}

/// Best-known objective of an instance and whether it is proven optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub objective: f64,
    pub proven: bool,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    schema_version: u32,
    name: String,
    num_vars: usize,
    num_cons: usize,
    obj: Vec<f64>,
    /// `[row, col, coef]` triplets.
    cons: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
    sense: Vec<Sense>,
    lb: Vec<Value>,
    ub: Vec<Value>,
    is_int: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_ref: Option<Reference>,
}

fn bound_to_json(v: f64) -> Value {
    if v == f64::INFINITY {
        Value::String("inf".into())
    } else if v == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        Value::from(v)
    }
}

fn bound_from_json(v: &Value) -> Result<f64, IoError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| IoError::Invalid(format!("bad bound {n}"))),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(IoError::Invalid(format!("bad bound {other}"))),
    }
}

pub fn instance_to_json(inst: &Instance, z_ref: Option<Reference>) -> String {
    let file = InstanceFile {
        schema_version: INSTANCE_SCHEMA,
        name: inst.name.clone(),
        num_vars: inst.num_vars,
        num_cons: inst.num_cons,
        obj: inst.obj.clone(),
        cons: inst.cons.iter().map(|t| (t.row, t.col, t.coef)).collect(),
        rhs: inst.rhs.clone(),
        sense: inst.sense.clone(),
        lb: inst.lb.iter().map(|&v| bound_to_json(v)).collect(),
        ub: inst.ub.iter().map(|&v| bound_to_json(v)).collect(),
        is_int: inst.is_int.clone(),
        z_ref,
    };
    to_json_pretty(&file)
}

pub fn instance_from_json(
    path: &Path,
    text: &str,
) -> Result<(Instance, Option<Reference>), IoError> {
    let file: InstanceFile = from_versioned_str(path, text, INSTANCE_SCHEMA)?;
    let mut inst = Instance {
        name: file.name,
        num_vars: file.num_vars,
        num_cons: file.num_cons,
        obj: file.obj,
        cons: file.cons.into_iter().map(|(row, col, coef)| Triplet { row, col, coef }).collect(),
        rhs: file.rhs,
        sense: file.sense,
        lb: file.lb.iter().map(bound_from_json).collect::<Result<_, _>>()?,
        ub: file.ub.iter().map(bound_from_json).collect::<Result<_, _>>()?,
        is_int: file.is_int,
    };
    validate_instance(&mut inst)
        .map_err(|source| IoError::Instance { path: path.to_path_buf(), source })?;
    if let Some(r) = file.z_ref {
        if !r.objective.is_finite() {
            return Err(IoError::Invalid("non-finite z_ref".into()));
        }
    }
    Ok((inst, file.z_ref))
}

pub fn save_instance(path: &Path, inst: &Instance, z_ref: Option<Reference>) -> Result<(), IoError> {
    write_atomic(path, instance_to_json(inst, z_ref).as_bytes())
}

pub fn load_instance(path: &Path) -> Result<(Instance, Option<Reference>), IoError> {
    instance_from_json(path, &read_text(path)?)
}

/// An instance loaded from disk along with its file hash.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub path: PathBuf,
    pub instance: Instance,
    pub z_ref: Option<Reference>,
    pub hash: String,
}

/// Loads every `*.json` instance in `dir` except `manifest.json`, sorted by
/// file name.
pub fn load_instance_dir(dir: &Path) -> Result<Vec<LoadedInstance>, IoError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_name().is_some_and(|n| n != "manifest.json")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IoError::Invalid(format!("no instance files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|path| {
            let text = read_text(&path)?;
            let (instance, z_ref) = instance_from_json(&path, &text)?;
            Ok(LoadedInstance { hash: content_hash(text.as_bytes()), path, instance, z_ref })
        })
        .collect()
}

pub fn program_to_text(p: &Program) -> String {
    format!("{PROGRAM_HEADER}\n{}\n", p.render())
}

pub fn program_from_text(path: &Path, text: &str) -> Result<Program, IoError> {
    if let Some(first) = text.lines().next() {
        if let Some(ver) = first.trim().strip_prefix("# dhevo-dsl v") {
            if ver != "1" {
                return Err(IoError::SchemaMismatch { expected: 1, found: ver.to_string() });
            }
        }
    }
    Program::parse(text).map_err(|source| IoError::Program { path: path.to_path_buf(), source })
}

pub fn save_program(path: &Path, p: &Program) -> Result<(), IoError> {
    write_atomic(path, program_to_text(p).as_bytes())
}

pub fn load_program(path: &Path) -> Result<Program, IoError> {
    program_from_text(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{Family, FamilyParams, GenSpec};

    #[test]
    fn instance_roundtrip_all_families() {
        let dir = tempfile::tempdir().unwrap();
        for (i, family) in Family::ALL.iter().enumerate() {
            for seed in 0..25u64 {
                let inst = GenSpec::new(FamilyParams::preset(*family, "tiny").unwrap(), seed)
                    .generate()
                    .unwrap();
                let path = dir.path().join(format!("{i}_{seed}.json"));
                let r = Some(Reference { objective: -3.25, proven: seed % 2 == 0 });
                save_instance(&path, &inst, r).unwrap();
                let (back, back_r) = load_instance(&path).unwrap();
                assert_eq!(back, inst);
                assert_eq!(back_r, r);
            }
        }
    }

    #[test]
    fn infinite_bounds_and_schema() {
        let mut inst = Instance::new("free", 2);
        inst.lb[0] = f64::NEG_INFINITY;
        inst.add_row(&[(0, 1.0), (1, 2.0)], Sense::Ge, -1.0);
        let text = instance_to_json(&inst, None);
        assert!(text.contains("\"-inf\"") && text.contains("\"inf\""));
        let (back, _) = instance_from_json(Path::new("x"), &text).unwrap();
        assert_eq!(back, inst);

        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 7");
        match instance_from_json(Path::new("x"), &bumped) {
            Err(IoError::SchemaMismatch { expected: 1, found }) => assert_eq!(found, "7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let inst = Instance::new("a", 1);
        let text = instance_to_json(&inst, None);
        let nan = text.replace("\"obj\": [\n    0.0\n  ]", "\"obj\": [NaN]");
        assert_ne!(nan, text);
        assert!(instance_from_json(Path::new("x"), &nan).is_err());
        let huge = text.replace("\"obj\": [\n    0.0\n  ]", "\"obj\": [1e999]");
        assert!(instance_from_json(Path::new("x"), &huge).is_err());
        let bad_bound = text.replace("\"inf\"", "\"nan\"");
        assert!(instance_from_json(Path::new("x"), &bad_bound).is_err());
    }

    #[test]
    fn program_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.dh");
        let p = Program::parse("score: max(pscostup, 1) roundup: candsfrac > 0.5").unwrap();
        save_program(&path, &p).unwrap();
        assert_eq!(load_program(&path).unwrap(), p);
        fs::write(&path, "# dhevo-dsl v2\nscore: 1 roundup: true").unwrap();
        assert!(matches!(load_program(&path), Err(IoError::SchemaMismatch { .. })));
        fs::write(&path, "score: 1 +\nroundup: true").unwrap();
        assert!(matches!(
            load_program(&path),
            Err(IoError::Program { source: DslError::Parse { line: 2, .. }, .. })
        ));
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.json");
        write_atomic(&path, b"{}").unwrap();
        write_atomic(&path, b"{\"x\":1}").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "{\"x\":1}");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
        assert_eq!(content_hash(b"abc").len(), 64);
    }
}
