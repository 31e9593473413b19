//! `--set key=value` overrides applied to the parsed scenario document.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

/// Parses `a.b.0.c=value`. The value is read as JSON when it parses as
/// JSON and taken as a plain string otherwise, so `name=patrol2` works
/// without quoting.
pub fn parse(spec: &str) -> Result<Override, String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(format!("override `{spec}` has an empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(Override {
        path: key.split('.').map(str::to_string).collect(),
        value,
    })
}

/// Replaces the value at `ov.path`. Objects gain missing keys; array
/// segments must be in-range indices.
pub fn apply(doc: &mut Value, ov: &Override) -> Result<(), String> {
    let dotted = ov.path.join(".");
    let mut cur = doc;
    for (depth, seg) in ov.path.iter().enumerate() {
        let last = depth + 1 == ov.path.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), ov.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let len = items.len();
                let i: usize = seg
                    .parse()
                    .map_err(|_| format!("--set {dotted}: `{seg}` is not an array index"))?;
                let slot = items
                    .get_mut(i)
                    .ok_or_else(|| format!("--set {dotted}: index {i} out of range (len {len})"))?;
                if last {
                    *slot = ov.value.clone();
                    return Ok(());
                }
                slot
            }
            _ => {
                let parent = ov.path[..depth].join(".");
                return Err(format!("--set {dotted}: `{parent}` is not an object or array"));
            }
        };
    }
    unreachable!("override path is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_numbers_and_bare_strings() {
        let o = parse("sim.dt=0.005").unwrap();
        assert_eq!(o.path, vec!["sim", "dt"]);
        assert_eq!(o.value, json!(0.005));
        assert_eq!(parse("name=run2").unwrap().value, json!("run2"));
        assert_eq!(parse("initial_state=[1,2]").unwrap().value, json!([1, 2]));
        assert!(parse("sim.dt").is_err());
        assert!(parse("sim..dt=1").is_err());
    }

    #[test]
    fn applies_into_objects_and_arrays() {
        let mut doc = json!({"sim": {"dt": 0.01}, "initial_state": [0.0, 1.0]});
        apply(&mut doc, &parse("sim.dt=0.02").unwrap()).unwrap();
        apply(&mut doc, &parse("initial_state.1=3").unwrap()).unwrap();
        apply(&mut doc, &parse("solver.tol=1e-8").unwrap()).unwrap();
        assert_eq!(doc, json!({"sim": {"dt": 0.02}, "initial_state": [0.0, 3], "solver": {"tol": 1e-8}}));
    }

    #[test]
    fn rejects_bad_paths() {
        let mut doc = json!({"initial_state": [0.0], "name": "x"});
        assert!(apply(&mut doc, &parse("initial_state.4=1").unwrap()).is_err());
        assert!(apply(&mut doc, &parse("initial_state.a=1").unwrap()).is_err());
        assert!(apply(&mut doc, &parse("name.x=1").unwrap()).is_err());
    }
}
