//! Versioned JSON documents and CSV exports.
//!
//! Documents are `{schema_version, kind, provenance, data}` with sorted keys
//! and shortest round-trip floats, so identical inputs give identical bytes.

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::beta::BetaProfile;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::extend::IsometryField;
use crate::flow::{BaseGrid, ParamMap};
use crate::geom::{AffinePlane, Matrix, Vector};
use crate::nets::{Ccbp, MultiscaleNet, NetLevel};

pub const SCHEMA_VERSION: u64 = 1;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pretty JSON with sorted keys and a trailing newline.
pub fn canonical_json(value: &Value) -> String {
    // `Value` keeps objects in a BTreeMap, so keys serialize sorted.
    let mut out = serde_json::to_string_pretty(value).expect("JSON values serialize");
    out.push('\n');
    out
}

/// Hex SHA-256 of the canonical form of `config`.
pub fn config_hash(config: &Value) -> String {
    Sha256::digest(canonical_json(config).as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance block: library version, config echo and its hash.
pub fn provenance(config: &Value) -> Value {
    json!({
        "library_version": LIBRARY_VERSION,
        "config_hash": config_hash(config),
        "config": config,
    })
}

/// Wraps `data` in a versioned document.
pub fn document(kind: &str, config: &Value, data: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "provenance": provenance(config),
        "data": data,
    })
}

pub fn to_value(value: &impl Serialize) -> Value {
    serde_json::to_value(value).expect("report types serialize")
}

fn schema(path: &str, reason: impl Into<String>) -> Error {
    Error::Schema { path: path.to_string(), reason: reason.into() }
}

/// Parses JSON text, reporting the line and column of syntax errors.
pub fn parse(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| schema(&format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

/// Deserializes a typed value from `value`, naming `path` on failure.
pub fn from_value<T: serde::de::DeserializeOwned>(value: &Value, path: &str) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| schema(path, e.to_string()))
}

/// Checks version and kind; returns the `data` member.
pub fn open_document<'a>(doc: &'a Value, kind: &str) -> Result<&'a Value> {
    let version =
        doc.get("schema_version").and_then(Value::as_u64).ok_or_else(|| schema("$.schema_version", "missing"))?;
    if version != SCHEMA_VERSION {
        return Err(schema("$.schema_version", format!("unsupported version {version}")));
    }
    let found = doc.get("kind").and_then(Value::as_str).ok_or_else(|| schema("$.kind", "missing"))?;
    if found != kind {
        return Err(schema("$.kind", format!("expected {kind}, found {found}")));
    }
    doc.get("data").ok_or_else(|| schema("$.data", "missing"))
}

fn vector_json(v: &Vector) -> Value {
    Value::from(v.iter().cloned().collect::<Vec<f64>>())
}

/// Matrices serialize as lists of columns.
fn matrix_json(m: &Matrix) -> Value {
    Value::from(m.column_iter().map(|c| c.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

fn vector_from(v: &Value, path: &str) -> Result<Vector> {
    let list = v.as_array().ok_or_else(|| schema(path, "expected an array of numbers"))?;
    list.iter()
        .enumerate()
        .map(|(i, c)| c.as_f64().ok_or_else(|| schema(&format!("{path}[{i}]"), "expected a number")))
        .collect::<Result<Vec<f64>>>()
        .map(Vector::from_vec)
}

fn matrix_from(v: &Value, path: &str) -> Result<Matrix> {
    let cols = v.as_array().ok_or_else(|| schema(path, "expected a list of columns"))?;
    let cols =
        cols.iter().enumerate().map(|(i, c)| vector_from(c, &format!("{path}[{i}]"))).collect::<Result<Vec<_>>>()?;
    let rows = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != rows) {
        return Err(schema(path, "columns differ in length"));
    }
    Ok(Matrix::from_columns(&cols))
}

fn vectors_from(v: &Value, path: &str) -> Result<Vec<Vector>> {
    let list = v.as_array().ok_or_else(|| schema(path, "expected an array"))?;
    list.iter().enumerate().map(|(i, p)| vector_from(p, &format!("{path}[{i}]"))).collect()
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| schema(&format!("{path}.{key}"), "missing"))
}

fn usize_field(v: &Value, key: &str, path: &str) -> Result<usize> {
    field(v, key, path)?
        .as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a nonnegative integer"))
}

fn f64_field(v: &Value, key: &str, path: &str) -> Result<f64> {
    field(v, key, path)?.as_f64().ok_or_else(|| schema(&format!("{path}.{key}"), "expected a number"))
}

pub fn plane_to_json(p: &AffinePlane) -> Value {
    json!({ "base": vector_json(p.base()), "frame": matrix_json(p.frame()) })
}

pub fn plane_from_json(v: &Value, path: &str) -> Result<AffinePlane> {
    let base = vector_from(field(v, "base", path)?, &format!("{path}.base"))?;
    let frame = matrix_from(field(v, "frame", path)?, &format!("{path}.frame"))?;
    AffinePlane::from_frame(base, frame)
}

pub fn cloud_to_json(cloud: &PointCloud) -> Value {
    let mut m = Map::new();
    m.insert("intrinsic_dim".into(), cloud.intrinsic_dim().into());
    m.insert("ambient_dim".into(), cloud.ambient_dim().into());
    m.insert("points".into(), Value::from(cloud.points().iter().map(vector_json).collect::<Vec<_>>()));
    if let Some(w) = cloud.weights() {
        m.insert("weights".into(), Value::from(w.to_vec()));
    }
    if let Some(n) = cloud.normals() {
        m.insert("normals".into(), Value::from(n.iter().map(vector_json).collect::<Vec<_>>()));
    }
    if let Some(t) = cloud.tangents() {
        m.insert("tangents".into(), Value::from(t.iter().map(matrix_json).collect::<Vec<_>>()));
    }
    Value::Object(m)
}

pub fn cloud_from_json(v: &Value) -> Result<PointCloud> {
    let path = "$.data";
    let d = usize_field(v, "intrinsic_dim", path)?;
    let points = vectors_from(field(v, "points", path)?, "$.data.points")?;
    let weights = match v.get("weights") {
        Some(w) => Some(vector_from(w, "$.data.weights")?.iter().cloned().collect()),
        None => None,
    };
    let normals = v.get("normals").map(|n| vectors_from(n, "$.data.normals")).transpose()?;
    let tangents = match v.get("tangents") {
        Some(t) => {
            let list = t.as_array().ok_or_else(|| schema("$.data.tangents", "expected an array"))?;
            Some(
                list.iter()
                    .enumerate()
                    .map(|(i, m)| matrix_from(m, &format!("$.data.tangents[{i}]")))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    if let Some(n) = v.get("ambient_dim").and_then(Value::as_u64) {
        if points.first().is_some_and(|p| p.len() as u64 != n) {
            return Err(schema("$.data.ambient_dim", "disagrees with the points"));
        }
    }
    PointCloud::build(points, weights, normals, tangents, d)
}

pub fn ccbp_to_json(ccbp: &Ccbp) -> Value {
    let levels: Vec<Value> = (0..ccbp.levels())
        .map(|k| {
            let level = ccbp.net().level(k);
            json!({
                "centers": level.centers.iter().map(vector_json).collect::<Vec<_>>(),
                "sources": level.sources,
                "planes": ccbp.planes(k).iter().map(plane_to_json).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "ambient_dim": ccbp.ambient_dim(),
        "eps": ccbp.eps(),
        "sigma0": plane_to_json(ccbp.sigma0()),
        "levels": levels,
    })
}

pub fn ccbp_from_json(v: &Value) -> Result<Ccbp> {
    let path = "$.data";
    let n = usize_field(v, "ambient_dim", path)?;
    let eps = f64_field(v, "eps", path)?;
    let sigma0 = plane_from_json(field(v, "sigma0", path)?, "$.data.sigma0")?;
    let list = field(v, "levels", path)?.as_array().ok_or_else(|| schema("$.data.levels", "expected an array"))?;
    let mut levels = Vec::with_capacity(list.len());
    let mut planes = Vec::with_capacity(list.len());
    for (k, level) in list.iter().enumerate() {
        let lp = format!("$.data.levels[{k}]");
        let centers = vectors_from(field(level, "centers", &lp)?, &format!("{lp}.centers"))?;
        let sources: Vec<Option<usize>> = from_value(field(level, "sources", &lp)?, &format!("{lp}.sources"))?;
        let ps = field(level, "planes", &lp)?
            .as_array()
            .ok_or_else(|| schema(&format!("{lp}.planes"), "expected an array"))?
            .iter()
            .enumerate()
            .map(|(j, p)| plane_from_json(p, &format!("{lp}.planes[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        if sources.len() != centers.len() {
            return Err(schema(&format!("{lp}.sources"), "length differs from centers"));
        }
        levels.push(NetLevel { centers, sources });
        planes.push(ps);
    }
    Ccbp::new(MultiscaleNet::new(n, levels)?, planes, sigma0, eps)
}

/// Map document data: depth, audit multiple and the CCBP.
pub fn map_to_json(pm: &ParamMap, c_audit: f64) -> Value {
    json!({"depth": pm.depth(), "c_audit": c_audit, "ccbp": ccbp_to_json(pm.ccbp())})
}

/// Inverse of [`map_to_json`].
pub fn map_from_json(v: &Value) -> Result<(ParamMap, f64)> {
    let depth = usize_field(v, "depth", "$.data")?;
    let c_audit = f64_field(v, "c_audit", "$.data")?;
    let ccbp = ccbp_from_json(field(v, "ccbp", "$.data")?)?;
    Ok((ParamMap::new(ccbp, depth)?, c_audit))
}

pub fn field_to_json(f: &IsometryField) -> Value {
    json!({
        "grid": to_value(&f.grid),
        "rotations": f.rotations.iter().map(|r| r.iter().map(matrix_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "frames": f.frames.iter().map(|r| r.iter().map(matrix_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

pub fn field_from_json(v: &Value) -> Result<IsometryField> {
    let grid: BaseGrid = from_value(field(v, "grid", "$.data")?, "$.data.grid")?;
    let nested = |key: &str| -> Result<Vec<Vec<Matrix>>> {
        let p = format!("$.data.{key}");
        field(v, key, "$.data")?
            .as_array()
            .ok_or_else(|| schema(&p, "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, node)| {
                node.as_array()
                    .ok_or_else(|| schema(&format!("{p}[{i}]"), "expected an array"))?
                    .iter()
                    .enumerate()
                    .map(|(k, m)| matrix_from(m, &format!("{p}[{i}][{k}]")))
                    .collect()
            })
            .collect()
    };
    let rotations = nested("rotations")?;
    let frames = nested("frames")?;
    if rotations.len() != grid.len() || frames.len() != grid.len() {
        return Err(schema("$.data.rotations", "node count differs from the grid"));
    }
    Ok(IsometryField { grid, rotations, frames })
}

fn csv_number(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per base point and scale:
/// `point_id,k,beta_inf,beta_1,eps_k,eps_prime_k` (empty cells for absent values).
pub fn profile_csv(profile: &BetaProfile) -> String {
    let mut out = String::from("point_id,k,beta_inf,beta_1,eps_k,eps_prime_k\n");
    for p in &profile.points {
        for s in &p.scales {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.point_id,
                s.k,
                s.beta_inf,
                csv_number(s.beta_q),
                csv_number(s.eps_k),
                csv_number(s.eps_prime_k)
            ));
        }
    }
    out
}

pub fn points_to_json(points: &[Vector]) -> Value {
    Value::from(points.iter().map(vector_json).collect::<Vec<_>>())
}

pub fn points_from_json(v: &Value, path: &str) -> Result<Vec<Vector>> {
    vectors_from(v, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;
    use crate::nets::{build_net, fit_ccbp, FitConfig, FitMode};
    use crate::sets::{mobius, StripSpec};

    #[test]
    fn canonical_output_sorts_keys_and_round_trips_floats() {
        let v = json!({"b": 0.1, "a": [1e-300, 2.0 / 3.0]});
        let text = canonical_json(&v);
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert_eq!(parse(&text).unwrap(), v);
        assert_eq!(config_hash(&v), config_hash(&parse(&text).unwrap()));
        assert_eq!(config_hash(&v).len(), 64);
    }

    #[test]
    fn cloud_and_ccbp_round_trip() {
        let band = mobius(&StripSpec { half_width: 1e-3, angular_samples: 40, transverse_samples: 2 }).unwrap();
        let back = cloud_from_json(&cloud_to_json(&band)).unwrap();
        assert_eq!(back.points(), band.points());
        assert_eq!(back.tangents(), band.tangents());
        assert_eq!(back.normals(), band.normals());

        let pts: Vec<Vector> = (0..200).map(|i| vector(&[i as f64 / 200.0, 0.0])).collect();
        let cloud = PointCloud::new(pts, 1).unwrap();
        let net = build_net(&cloud, 2, |_, _| true);
        let ccbp =
            fit_ccbp(&cloud, &net, &AffinePlane::coordinate(2, 1).unwrap(), &FitConfig::new(FitMode::L2, 0.1)).unwrap();
        let doc = document("ccbp", &json!({"eps": 0.1}), ccbp_to_json(&ccbp));
        let back = ccbp_from_json(open_document(&parse(&canonical_json(&doc)).unwrap(), "ccbp").unwrap()).unwrap();
        assert_eq!(ccbp_to_json(&back), ccbp_to_json(&ccbp));
        assert!(matches!(open_document(&doc, "cloud"), Err(Error::Schema { .. })));
    }

    #[test]
    fn schema_errors_name_the_path() {
        let err = cloud_from_json(&json!({"intrinsic_dim": 1, "points": [[0.0, 1.0], [0.0, "x"]]})).unwrap_err();
        assert_eq!(err.to_string(), "schema error at $.data.points[1][1]: expected a number");
        assert!(matches!(parse("{oops"), Err(Error::Schema { .. })));
    }
}
