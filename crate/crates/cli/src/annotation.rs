//! Keypoint annotation import.
//!
//! The input is a JSON array of records in the KeypointNet layout:
//!
//! ```json
//! [
//!   {
//!     "class_id": "03001627",
//!     "model_id": "1a6f615e8b1b5ae4dbbc9440457e303e",
//!     "keypoints": [
//!       {"xyz": [0.1, -0.2, 0.3], "semantic_id": 0, "rgb": [1, 2, 3], "pcd_info_id": 7, "mesh_info": {}}
//!     ]
//!   }
//! ]
//! ```
//!
//! `category` may be given instead of `class_id`. Per keypoint, `xyz` is
//! required and `semantic_id` optional (a record must label all or none of
//! its keypoints); `rgb`, `pcd_info_id` and `mesh_info` are accepted and
//! ignored. Any other field is an error. Each record is validated on its
//! own, so one bad record does not block the rest.

use implicit_keypoints::{KeypointSet, Point3};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::layout::valid_model_id;

/// Coordinates must fall in this box when normalization is off.
pub const COORD_LIMIT: f64 = 1.1;

const RECORD_KEYS: [&str; 4] = ["model_id", "class_id", "category", "keypoints"];
const KEYPOINT_KEYS: [&str; 5] = ["xyz", "semantic_id", "rgb", "pcd_info_id", "mesh_info"];

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub model_id: String,
    pub category: String,
    pub keypoints: KeypointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub index: usize,
    pub model_id: Option<String>,
    pub errors: Vec<String>,
}

/// Parse an annotation file into accepted records and per-record errors.
/// Fails outright only when the file is not a JSON array.
pub fn parse_annotations(
    text: &str,
    normalize: bool,
    radius: f64,
) -> Result<(Vec<AnnotationRecord>, Vec<RecordError>), String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("annotation file is not valid JSON: {e}"))?;
    let Value::Array(items) = value else {
        return Err("annotation file must hold a JSON array of records".into());
    };
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (index, item) in items.iter().enumerate() {
        let model_id = item.get("model_id").and_then(Value::as_str).map(str::to_string);
        match parse_record(item, normalize, radius) {
            Ok(rec) if !seen.insert(rec.model_id.clone()) => bad.push(RecordError {
                index,
                model_id,
                errors: vec!["duplicate model_id".into()],
            }),
            Ok(rec) => ok.push(rec),
            Err(errors) => bad.push(RecordError {
                index,
                model_id,
                errors,
            }),
        }
    }
    Ok((ok, bad))
}

fn parse_record(item: &Value, normalize: bool, radius: f64) -> Result<AnnotationRecord, Vec<String>> {
    let mut errors = Vec::new();
    let Some(obj) = item.as_object() else {
        return Err(vec!["record is not an object".into()]);
    };
    unknown_keys(obj, &RECORD_KEYS, "record", &mut errors);
    let model_id = match obj.get("model_id") {
        Some(Value::String(s)) if valid_model_id(s) => s.clone(),
        Some(Value::String(s)) => {
            errors.push(format!(
                "model_id {s:?} must use only letters, digits, '_', '-' and '.'"
            ));
            String::new()
        }
        _ => {
            errors.push("missing string field model_id".into());
            String::new()
        }
    };
    let category = match (obj.get("category"), obj.get("class_id")) {
        (Some(_), Some(_)) => {
            errors.push("give either category or class_id, not both".into());
            String::new()
        }
        (Some(Value::String(s)), None) | (None, Some(Value::String(s))) => s.clone(),
        (None, None) => String::new(),
        _ => {
            errors.push("category must be a string".into());
            String::new()
        }
    };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    match obj.get("keypoints") {
        Some(Value::Array(kps)) if !kps.is_empty() => {
            for (k, kp) in kps.iter().enumerate() {
                match parse_keypoint(kp) {
                    Ok((p, l)) => {
                        points.push(p);
                        labels.push(l);
                    }
                    Err(e) => errors.push(format!("keypoint {k}: {e}")),
                }
            }
        }
        Some(Value::Array(_)) => errors.push("keypoints is empty".into()),
        _ => errors.push("missing array field keypoints".into()),
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled != 0 && labeled != labels.len() {
        return Err(vec!["some keypoints have a semantic_id and some do not".into()]);
    }
    if normalize {
        normalize_points(&mut points, radius);
    } else if let Some(i) = points
        .iter()
        .position(|p| p.to_array().iter().any(|c| c.abs() > COORD_LIMIT))
    {
        return Err(vec![format!(
            "keypoint {i} at {:?} lies outside [-{COORD_LIMIT}, {COORD_LIMIT}]^3",
            points[i].to_array()
        )]);
    }
    let keypoints = if labeled == 0 {
        KeypointSet::new(points)
    } else {
        let labels: Vec<usize> = labels.into_iter().map(Option::unwrap).collect();
        let count = labels.iter().max().unwrap() + 1;
        KeypointSet::with_labels(points, labels, count).map_err(|e| vec![e.to_string()])?
    };
    Ok(AnnotationRecord {
        model_id,
        category,
        keypoints,
    })
}

fn unknown_keys(obj: &Map<String, Value>, allowed: &[&str], what: &str, errors: &mut Vec<String>) {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            errors.push(format!("unknown {what} field {key:?}"));
        }
    }
}

fn parse_keypoint(kp: &Value) -> Result<(Point3, Option<usize>), String> {
    let obj = kp.as_object().ok_or("not an object")?;
    let mut errors = Vec::new();
    unknown_keys(obj, &KEYPOINT_KEYS, "keypoint", &mut errors);
    if let Some(e) = errors.pop() {
        return Err(e);
    }
    let xyz = obj
        .get("xyz")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 3)
        .ok_or("xyz must be an array of three numbers")?;
    let mut c = [0.0; 3];
    for (slot, v) in c.iter_mut().zip(xyz) {
        *slot = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or("xyz must be an array of three numbers")?;
    }
    let label = match obj.get("semantic_id") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or("semantic_id must be a nonnegative integer")? as usize),
    };
    Ok((Point3::from_array(c), label))
}

/// Center the keypoints' bounding box at the origin and scale uniformly so
/// it fits in `[-(1 - radius), 1 - radius]^3`, keeping every sphere inside
/// the unit box.
pub fn normalize_points(points: &mut [Point3], radius: f64) {
    let Some(bbox) = implicit_keypoints::Aabb::from_points(points) else {
        return;
    };
    let center = bbox.center();
    let half = bbox.extent() * 0.5;
    let largest = half.x.max(half.y).max(half.z);
    let target = 1.0 - radius;
    let scale = if largest > 0.0 { target / largest } else { 1.0 };
    for p in points {
        *p = (*p - center) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"[
        {"class_id": "chair", "model_id": "m1", "keypoints": [
            {"xyz": [0.1, 0.2, 0.3], "semantic_id": 2, "rgb": [0, 0, 0], "pcd_info_id": 4, "mesh_info": {"face_index": 1}},
            {"xyz": [-0.5, 0.0, 0.4], "semantic_id": 0}]},
        {"category": "table", "model_id": "m2", "keypoints": [{"xyz": [0.0, 0.0, 0.0]}]}
    ]"#;

    #[test]
    fn well_formed_file() {
        let (ok, bad) = parse_annotations(TWO, false, 0.08).unwrap();
        assert!(bad.is_empty());
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0].category, "chair");
        assert_eq!(ok[0].keypoints.labels, Some(vec![2, 0]));
        assert_eq!(ok[0].keypoints.label_count, 3);
        assert!(!ok[1].keypoints.is_labeled());
    }

    #[test]
    fn out_of_range_rejected_without_normalization() {
        let text = r#"[{"model_id": "far", "keypoints": [{"xyz": [5, 0, 0]}]}]"#;
        let (ok, bad) = parse_annotations(text, false, 0.08).unwrap();
        assert!(ok.is_empty());
        assert_eq!(bad[0].model_id.as_deref(), Some("far"));
        let (ok, bad) = parse_annotations(text, true, 0.08).unwrap();
        assert!(bad.is_empty());
        assert_eq!(ok[0].keypoints.points[0], Point3::default());
    }

    #[test]
    fn normalization_fits_the_box() {
        let mut pts = vec![Point3::new(3.0, 1.0, 0.0), Point3::new(7.0, 2.0, 1.0)];
        normalize_points(&mut pts, 0.08);
        assert!((pts[0].x + 0.92).abs() < 1e-15 && (pts[1].x - 0.92).abs() < 1e-15);
        assert!((pts[0].y + 0.23).abs() < 1e-15);
    }

    #[test]
    fn schema_violations_are_listed_per_record() {
        let text = r#"[
            {"model_id": "a", "keypoints": [{"xyz": [0, 0]}], "extra": 1},
            {"model_id": "b/c", "keypoints": []},
            {"model_id": "d", "keypoints": [{"xyz": [0, 0, 0], "semantic_id": -1}]},
            {"model_id": "e", "keypoints": [{"xyz": [0, 0, 0], "semantic_id": 1}, {"xyz": [0.5, 0, 0]}]},
            {"model_id": "ok", "keypoints": [{"xyz": [0, 0, 0]}]},
            {"model_id": "ok", "keypoints": [{"xyz": [0, 0, 0]}]}
        ]"#;
        let (ok, bad) = parse_annotations(text, false, 0.08).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(bad.iter().map(|b| b.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 5]);
        assert_eq!(bad[0].errors.len(), 2);
        assert!(parse_annotations("{}", false, 0.08).is_err());
    }
}
