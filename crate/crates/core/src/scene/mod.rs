//! Parametric scene descriptions and the θ ↦ scene binding.
//!
//! A scene is a set of Lambertian surfaces (boxes, spheres, rectangles),
//! one-sided rectangular emitters, a pinhole camera and a background
//! radiance returned by escaping rays. Parameter bindings map components of
//! a parameter vector θ onto scalar scene attributes through an affine map.

mod parse;
mod path;
mod space;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

pub use parse::{parse_scene, scene_to_json};
pub use path::AttributePath;
pub use space::{ParameterPoint, ParameterSpace};

/// Number of color channels carried through the whole pipeline.
pub const CHANNELS: usize = 3;

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Axis-aligned box spanning `min..max`.
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    /// Parallelogram `corner + s·edge_u + t·edge_v`, s,t ∈ [0,1]. Its normal is
    /// `edge_u × edge_v`; emitters radiate only on that side.
    Rect {
        corner: [f64; 3],
        edge_u: [f64; 3],
        edge_v: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub shape: Shape,
    /// Per-channel reflectance; the BRDF value is albedo/π.
    pub albedo: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emitter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Must be a `rect`.
    pub shape: Shape,
    /// Emitted radiance, W·sr⁻¹·m⁻², uniform over the front hemisphere.
    pub radiance: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Affine map `attribute = scale·θ[index] + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterBinding {
    pub target: String,
    pub index: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub camera: CameraModel,
    #[serde(default)]
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub emitters: Vec<Emitter>,
    #[serde(default)]
    pub background: Rgb,
    #[serde(default)]
    pub bindings: Vec<ParameterBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_space: Option<ParameterSpace>,
}

/// The shipped L-corridor scene document.
pub fn corridor_fixture() -> &'static str {
    include_str!("../../fixtures/corridor.json")
}

impl SceneDescription {
    /// Checks every scene invariant, naming the offending path and rule.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        self.validate_bindings()
    }

    fn validate_geometry(&self) -> Result<()> {
        let cam = &self.camera;
        let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        if !(finite3(&cam.position) && finite3(&cam.look_at) && finite3(&cam.up)) {
            return Err(Error::Invariant("camera: geometry must be finite".into()));
        }
        if !(cam.vfov_deg > 0.0 && cam.vfov_deg < 180.0) {
            return Err(Error::Invariant(format!(
                "camera.vfov_deg: field of view {} outside (0, 180)",
                cam.vfov_deg
            )));
        }
        if cam.width == 0 || cam.height == 0 {
            return Err(Error::Invariant(
                "camera: resolution must be at least 1×1".into(),
            ));
        }
        let forward = Vec3::from_array(cam.look_at) - Vec3::from_array(cam.position);
        if forward.length() == 0.0 {
            return Err(Error::Invariant(
                "camera: look_at must differ from position".into(),
            ));
        }
        if forward.cross(Vec3::from_array(cam.up)).length() == 0.0 {
            return Err(Error::Invariant(
                "camera: up must not be parallel to the view direction".into(),
            ));
        }

        for (i, s) in self.surfaces.iter().enumerate() {
            let at = format!("surfaces[{i}]");
            validate_shape(&s.shape, &at)?;
            if s.albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Invariant(format!(
                    "{at}.albedo: albedo out of [0,1] ({:?})",
                    s.albedo
                )));
            }
        }
        for (i, e) in self.emitters.iter().enumerate() {
            let at = format!("emitters[{i}]");
            if !matches!(e.shape, Shape::Rect { .. }) {
                return Err(Error::Invariant(format!(
                    "{at}.shape: emitter shape must be a rect"
                )));
            }
            validate_shape(&e.shape, &at)?;
            if e.radiance.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::Invariant(format!(
                    "{at}.radiance: radiance must be finite and ≥ 0 ({:?})",
                    e.radiance
                )));
            }
        }
        if self.background.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Invariant(
                "background: radiance must be finite and ≥ 0".into(),
            ));
        }
        if self.emitters.is_empty() && self.background.iter().all(|r| *r == 0.0) {
            return Err(Error::Invariant(
                "scene needs at least one emitter or a nonzero background".into(),
            ));
        }
        let eye = Vec3::from_array(cam.position);
        for (i, s) in self.surfaces.iter().enumerate() {
            if shape_contains(&s.shape, eye) {
                return Err(Error::Invariant(format!(
                    "camera: position lies inside solid surfaces[{i}]"
                )));
            }
        }
        Ok(())
    }

    fn validate_bindings(&self) -> Result<()> {
        let mut probe = self.clone();
        for (i, b) in self.bindings.iter().enumerate() {
            if !(b.scale.is_finite() && b.offset.is_finite()) {
                return Err(Error::Invariant(format!(
                    "bindings[{i}]: scale and offset must be finite"
                )));
            }
            AttributePath::parse(&b.target)?.resolve_mut(&mut probe)?;
        }
        if let Some(space) = &self.parameter_space {
            space.validate()?;
            let dim = space.dim();
            for (i, b) in self.bindings.iter().enumerate() {
                if b.index >= dim {
                    return Err(Error::Invariant(format!(
                        "bindings[{i}].index: {} ≥ parameter dimension {dim}",
                        b.index
                    )));
                }
            }
            for j in 0..dim {
                if !self.bindings.iter().any(|b| b.index == j) {
                    return Err(Error::Invariant(format!(
                        "parameter_space: component {j} binds no target"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parameter space declared by the document.
    pub fn space(&self) -> Result<&ParameterSpace> {
        self.parameter_space
            .as_ref()
            .ok_or_else(|| Error::Invariant("scene declares no parameter_space".into()))
    }

    /// A scene copy with every bound attribute set to `scale·θ_j + offset`.
    pub fn apply_parameters(&self, theta: &ParameterPoint) -> Result<SceneDescription> {
        theta.check_bounds()?;
        if let Some(space) = &self.parameter_space {
            if space.dim() != theta.dim() {
                return Err(Error::InvalidArgument(format!(
                    "θ has {} components, scene parameter space has {}",
                    theta.dim(),
                    space.dim()
                )));
            }
        }
        let mut out = self.clone();
        for b in &self.bindings {
            let value = theta.values().get(b.index).copied().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "binding `{}` reads θ[{}] but θ has {} components",
                    b.target,
                    b.index,
                    theta.dim()
                ))
            })?;
            *AttributePath::parse(&b.target)?.resolve_mut(&mut out)? = b.scale * value + b.offset;
        }
        out.validate_geometry()?;
        Ok(out)
    }
}

/// Free-function form of [`SceneDescription::apply_parameters`].
pub fn apply_parameters(scene: &SceneDescription, theta: &ParameterPoint) -> Result<SceneDescription> {
    scene.apply_parameters(theta)
}

fn validate_shape(shape: &Shape, at: &str) -> Result<()> {
    let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
    match shape {
        Shape::Box { min, max } => {
            if !(finite3(min) && finite3(max)) {
                return Err(Error::Invariant(format!("{at}.shape: box must be finite")));
            }
            if (0..3).any(|k| max[k] <= min[k]) {
                return Err(Error::Invariant(format!(
                    "{at}.shape: box extents must be > 0"
                )));
            }
        }
        Shape::Sphere { center, radius } => {
            if !(finite3(center) && radius.is_finite()) {
                return Err(Error::Invariant(format!("{at}.shape: sphere must be finite")));
            }
            if *radius <= 0.0 {
                return Err(Error::Invariant(format!(
                    "{at}.shape.radius: sphere radius must be > 0"
                )));
            }
        }
        Shape::Rect {
            corner,
            edge_u,
            edge_v,
        } => {
            if !(finite3(corner) && finite3(edge_u) && finite3(edge_v)) {
                return Err(Error::Invariant(format!("{at}.shape: rect must be finite")));
            }
            let n = Vec3::from_array(*edge_u).cross(Vec3::from_array(*edge_v));
            if n.length() == 0.0 {
                return Err(Error::Invariant(format!(
                    "{at}.shape: rect extents must be > 0 and edges non-parallel"
                )));
            }
        }
    }
    Ok(())
}

fn shape_contains(shape: &Shape, p: Vec3) -> bool {
    match shape {
        Shape::Box { min, max } => (0..3).all(|k| p.axis(k) > min[k] && p.axis(k) < max[k]),
        Shape::Sphere { center, radius } => (p - Vec3::from_array(*center)).length() < *radius,
        Shape::Rect { .. } => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "camera": {"position": [0,0,0], "look_at": [0,0,1], "vfov_deg": 60, "width": 4, "height": 3},
        "emitters": [{"shape": {"rect": {"corner": [-1,-1,2], "edge_u": [0,2,0], "edge_v": [2,0,0]}}, "radiance": [1,1,1]}]
    }"#;

    #[test]
    fn minimal_document_parses() {
        let s = parse_scene(MINIMAL).unwrap();
        assert_eq!(s.surfaces.len(), 0);
        assert_eq!(s.emitters.len(), 1);
        assert_eq!(s.camera.up, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn albedo_out_of_range_rejected() {
        let doc = MINIMAL.replace(
            "\"emitters\"",
            r#""surfaces": [{"shape": {"sphere": {"center": [0,0,5], "radius": 1}}, "albedo": [1.2, 0.5, 0.5]}], "emitters""#,
        );
        let err = parse_scene(&doc).unwrap_err().to_string();
        assert!(err.contains("albedo out of [0,1]"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let doc = MINIMAL.replace("\"vfov_deg\"", "\"fov\": 1, \"vfov_deg\"");
        let err = parse_scene(&doc).unwrap_err();
        match err {
            Error::Schema { path, message } => {
                assert_eq!(path, "camera.fov");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        let doc = MINIMAL.replace("\"radiance\"", "\"glow\": 2, \"radiance\"");
        assert!(matches!(parse_scene(&doc), Err(Error::Schema { .. })));
    }

    #[test]
    fn nested_unknown_key_in_shape_rejected() {
        let doc = MINIMAL.replace("\"edge_v\"", "\"edge_w\": [0,0,1], \"edge_v\"");
        assert!(matches!(parse_scene(&doc), Err(Error::Schema { .. })));
    }

    #[test]
    fn needs_light() {
        let doc = r#"{"camera": {"position": [0,0,0], "look_at": [0,0,1], "vfov_deg": 60, "width": 4, "height": 3}}"#;
        assert!(parse_scene(doc).unwrap_err().to_string().contains("emitter"));
        let doc = r#"{"camera": {"position": [0,0,0], "look_at": [0,0,1], "vfov_deg": 60, "width": 4, "height": 3}, "background": [0.1, 0, 0]}"#;
        assert!(parse_scene(doc).is_ok());
    }

    #[test]
    fn camera_inside_solid_rejected() {
        let doc = MINIMAL.replace(
            "\"emitters\"",
            r#""surfaces": [{"shape": {"box": {"min": [-1,-1,-1], "max": [1,1,1]}}, "albedo": [0.5,0.5,0.5]}], "emitters""#,
        );
        assert!(parse_scene(&doc).unwrap_err().to_string().contains("inside"));
    }

    #[test]
    fn corridor_fixture_counts() {
        let s = parse_scene(corridor_fixture()).unwrap();
        let boxes = s.surfaces.iter().filter(|s| matches!(s.shape, Shape::Box { .. })).count();
        let spheres = s.surfaces.iter().filter(|s| matches!(s.shape, Shape::Sphere { .. })).count();
        assert_eq!((boxes, spheres, s.emitters.len()), (8, 1, 2));
        assert_eq!((s.camera.width, s.camera.height), (64, 48));
    }

    fn sphere_scene(binding: &str, lower: f64) -> SceneDescription {
        let doc = MINIMAL.replace(
            "\"emitters\"",
            &format!(
                r#""surfaces": [{{"shape": {{"sphere": {{"center": [0,0,5], "radius": 0.5}}}}, "albedo": [0.5,0.5,0.5]}}],
                   "bindings": [{binding}],
                   "parameter_space": {{"lower": [{lower}], "upper": [20], "step": [0.01]}},
                   "emitters""#
            ),
        );
        parse_scene(&doc).unwrap()
    }

    #[test]
    fn identity_binding_moves_center() {
        let s = sphere_scene(r#"{"target": "surfaces[0].shape.center.x", "index": 0}"#, -1.0);
        let theta = ParameterPoint::new(vec![0.5], s.space().unwrap().clone()).unwrap();
        let moved = s.apply_parameters(&theta).unwrap();
        match moved.surfaces[0].shape {
            Shape::Sphere { center, radius } => {
                assert_eq!(center, [0.5, 0.0, 5.0]);
                assert_eq!(radius, 0.5);
            }
            _ => unreachable!(),
        }
        assert_eq!(moved.emitters, s.emitters);
        assert_eq!(moved.camera, s.camera);
    }

    #[test]
    fn scaled_binding_sets_radius() {
        let s = sphere_scene(
            r#"{"target": "surfaces[0].shape.radius", "index": 0, "scale": 0.01, "offset": 0}"#,
            0.0,
        );
        let theta = ParameterPoint::new(vec![10.0], s.space().unwrap().clone()).unwrap();
        let moved = s.apply_parameters(&theta).unwrap();
        match moved.surfaces[0].shape {
            Shape::Sphere { radius, .. } => assert!((radius - 0.10).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn out_of_bounds_theta_rejected() {
        let s = sphere_scene(r#"{"target": "surfaces[0].shape.radius", "index": 0, "scale": 0.01}"#, 0.0);
        let space = s.space().unwrap().clone();
        assert!(matches!(
            ParameterPoint::new(vec![-1.0], space.clone()),
            Err(Error::OutOfBounds { .. })
        ));
        let theta = ParameterPoint::new_unchecked(vec![-1.0], space);
        assert!(matches!(s.apply_parameters(&theta), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn unresolvable_target_rejected() {
        let doc = MINIMAL.replace(
            "\"emitters\"",
            r#""bindings": [{"target": "surfaces[3].shape.radius", "index": 0}], "emitters""#,
        );
        assert!(matches!(parse_scene(&doc), Err(Error::UnresolvedTarget(_))));
    }
}
