//! Extracts a box from a grounding answer such as
//! `{"bbox_2d": [x1, y1, x2, y2]}` or `[{"bbox_2d": [...], "label": "car"}]`,
//! optionally wrapped in a fenced code block or surrounded by prose.

use serde_json::Value;

use crate::geometry::BBox;

fn box_from_array(v: &Value) -> Option<BBox> {
    let arr = v.as_array()?;
    if arr.len() != 4 {
        return None;
    }
    let mut c = [0.0; 4];
    for (slot, x) in c.iter_mut().zip(arr) {
        *slot = x.as_f64()?;
    }
    BBox::from_array(c).ok()
}

fn box_from_value(v: &Value) -> Option<BBox> {
    match v {
        Value::Object(map) => map
            .get("bbox_2d")
            .or_else(|| map.get("bbox"))
            .and_then(box_from_array),
        Value::Array(items) => items.first().filter(|f| f.is_object()).and_then(box_from_value),
        _ => None,
    }
}

/// Returns the first box found in any JSON value embedded in `text`.
pub fn parse_grounding(text: &str) -> Option<BBox> {
    for (i, ch) in text.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if let Some(b) = box_from_value(&v) {
                return Some(b);
            }
        }
    }
    None
}
