use crate::error::{Error, Result};

use super::SceneDescription;

/// Parses and validates a scene document. Unknown keys are rejected.
pub fn parse_scene(document: &str) -> Result<SceneDescription> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let scene: SceneDescription = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    scene.validate()?;
    Ok(scene)
}

/// Serializes a scene back to the document dialect `parse_scene` accepts.
pub fn scene_to_json(scene: &SceneDescription) -> String {
    serde_json::to_string_pretty(scene).expect("scene serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::corridor_fixture;

    #[test]
    fn corridor_round_trips() {
        let s = parse_scene(corridor_fixture()).unwrap();
        let again = parse_scene(&scene_to_json(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn malformed_json_is_schema_error() {
        assert!(matches!(parse_scene("{"), Err(Error::Schema { .. })));
    }
}
