//! Per-language feature values rendered as zone colors.
//!
//! Overlay files are JSON objects keyed by feature id:
//!
//! ```json
//! {
//!   "dh_retroflex": {
//!     "kind": "binary",
//!     "values": {"hindi": 1, "tamil": 0},
//!     "scale": ["#dd2225", "#63c2d8"]
//!   }
//! }
//! ```
//!
//! `scale` is the `[zero, one]` color pair and may be omitted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::color::Rgb;

/// Color for a value of 0 ("No" / 0%).
pub const DEFAULT_COLOR_ZERO: Rgb = Rgb::from_u32(0xdd2225);
/// Color for a value of 1 ("Yes" / 100%).
pub const DEFAULT_COLOR_ONE: Rgb = Rgb::from_u32(0x63c2d8);
/// Fill for languages with no value for the active feature.
pub const NO_DATA_COLOR: Rgb = Rgb::from_u32(0xcccccc);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorScale {
    pub color_zero: Rgb,
    pub color_one: Rgb,
}

impl Default for ColorScale {
    fn default() -> Self {
        ColorScale {
            color_zero: DEFAULT_COLOR_ZERO,
            color_one: DEFAULT_COLOR_ONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOverlay {
    pub feature_id: String,
    pub kind: OverlayKind,
    pub values: BTreeMap<String, f64>,
    pub scale: ColorScale,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OverlayError {
    #[error("overlay file is not valid JSON: {0}")]
    Json(String),
    #[error("overlay file must be a JSON object keyed by feature id")]
    NotAnObject,
    #[error("feature `{feature}`: field `{field}`: {message}")]
    Field {
        feature: String,
        field: String,
        message: String,
    },
}

impl FeatureOverlay {
    /// Builds an overlay, clamping continuous values into `[0, 1]`.
    pub fn new(
        feature_id: impl Into<String>,
        kind: OverlayKind,
        values: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        let values = values
            .into_iter()
            .map(|(k, v)| (k, v.clamp(0.0, 1.0)))
            .collect();
        FeatureOverlay {
            feature_id: feature_id.into(),
            kind,
            values,
            scale: ColorScale::default(),
        }
    }

    pub fn value(&self, language_id: &str) -> Option<f64> {
        self.values.get(language_id).copied()
    }
}

/// Parses an overlay file into overlays keyed by feature id.
pub fn parse_overlays(text: &str) -> Result<BTreeMap<String, FeatureOverlay>, OverlayError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| OverlayError::Json(e.to_string()))?;
    let Value::Object(map) = doc else {
        return Err(OverlayError::NotAnObject);
    };
    let mut out = BTreeMap::new();
    for (feature_id, body) in map {
        let overlay = parse_one(&feature_id, &body)?;
        out.insert(feature_id, overlay);
    }
    Ok(out)
}

fn parse_one(feature: &str, body: &Value) -> Result<FeatureOverlay, OverlayError> {
    let err = |field: &str, message: String| OverlayError::Field {
        feature: feature.to_string(),
        field: field.to_string(),
        message,
    };
    let kind = match body.get("kind").and_then(Value::as_str) {
        Some("binary") => OverlayKind::Binary,
        Some("continuous") => OverlayKind::Continuous,
        Some(other) => return Err(err("kind", format!("unknown kind `{other}`"))),
        None => return Err(err("kind", "missing or not a string".into())),
    };
    let Some(Value::Object(raw_values)) = body.get("values") else {
        return Err(err("values", "missing or not an object".into()));
    };
    let mut values = BTreeMap::new();
    for (lang, v) in raw_values {
        let x = match v {
            Value::Bool(b) => f64::from(u8::from(*b)),
            Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
            _ => return Err(err("values", format!("`{lang}`: expected a number"))),
        };
        if !x.is_finite() {
            return Err(err("values", format!("`{lang}`: not a finite number")));
        }
        let x = match kind {
            OverlayKind::Binary if x == 0.0 || x == 1.0 => x,
            OverlayKind::Binary => {
                return Err(err("values", format!("`{lang}`: binary value must be 0 or 1, got {x}")))
            }
            OverlayKind::Continuous => x.clamp(0.0, 1.0),
        };
        values.insert(lang.clone(), x);
    }
    let scale = match body.get("scale") {
        None | Some(Value::Null) => ColorScale::default(),
        Some(Value::Array(pair)) if pair.len() == 2 => {
            let color = |v: &Value| -> Result<Rgb, OverlayError> {
                v.as_str()
                    .ok_or_else(|| err("scale", "colors must be hex strings".into()))?
                    .parse()
                    .map_err(|e: crate::color::ColorParseError| err("scale", e.to_string()))
            };
            ColorScale {
                color_zero: color(&pair[0])?,
                color_one: color(&pair[1])?,
            }
        }
        Some(_) => return Err(err("scale", "expected a [zero, one] pair of hex colors".into())),
    };
    Ok(FeatureOverlay {
        feature_id: feature.to_string(),
        kind,
        values,
        scale,
    })
}

/// Serializes overlays to the overlay file format with stable key order.
pub fn overlays_to_json<'a>(overlays: impl IntoIterator<Item = &'a FeatureOverlay>) -> String {
    let mut map = serde_json::Map::new();
    for o in overlays {
        let kind = match o.kind {
            OverlayKind::Binary => "binary",
            OverlayKind::Continuous => "continuous",
        };
        let values: serde_json::Map<String, Value> = o
            .values
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        map.insert(
            o.feature_id.clone(),
            serde_json::json!({
                "kind": kind,
                "values": values,
                "scale": [o.scale.color_zero.hex(), o.scale.color_one.hex()],
            }),
        );
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("json values serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_binary_and_continuous() {
        let text = r##"{
            "dh": {"kind": "binary", "values": {"hindi": 1, "tamil": false}},
            "ks": {"kind": "continuous", "values": {"hindi": 0.5, "odia": 1.7},
                   "scale": ["#000000", "#ffffff"]}
        }"##;
        let o = parse_overlays(text).unwrap();
        assert_eq!(o["dh"].value("hindi"), Some(1.0));
        assert_eq!(o["dh"].value("tamil"), Some(0.0));
        assert_eq!(o["dh"].scale, ColorScale::default());
        assert_eq!(o["ks"].value("odia"), Some(1.0));
        assert_eq!(o["ks"].scale.color_one, Rgb::new(255, 255, 255));
        let again = parse_overlays(&overlays_to_json(o.values())).unwrap();
        assert_eq!(again, o);
    }

    #[test]
    fn rejects_non_binary_values() {
        let text = r#"{"dh": {"kind": "binary", "values": {"hindi": 0.5}}}"#;
        assert!(matches!(
            parse_overlays(text),
            Err(OverlayError::Field { ref field, .. }) if field == "values"
        ));
    }

    #[test]
    fn reports_missing_kind_and_bad_scale() {
        let text = r#"{"dh": {"values": {}}}"#;
        assert!(matches!(parse_overlays(text), Err(OverlayError::Field { ref field, .. }) if field == "kind"));
        let text = r##"{"dh": {"kind": "binary", "values": {}, "scale": ["#fff"]}}"##;
        assert!(matches!(parse_overlays(text), Err(OverlayError::Field { ref field, .. }) if field == "scale"));
        assert_eq!(parse_overlays("[]"), Err(OverlayError::NotAnObject));
    }
}
