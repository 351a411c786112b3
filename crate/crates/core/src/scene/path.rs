use crate::error::{Error, Result};

use super::{SceneDescription, Shape};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Field(String),
    Index(usize),
}

/// A parsed binding target such as `surfaces[2].shape.center.x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePath {
    raw: String,
    tokens: Vec<Token>,
}

impl AttributePath {
    pub fn parse(raw: &str) -> Result<Self> {
        let bad = || Error::UnresolvedTarget(raw.to_string());
        let mut tokens = Vec::new();
        for part in raw.split('.') {
            let (name, mut rest) = match part.find('[') {
                Some(i) => (&part[..i], &part[i..]),
                None => (part, ""),
            };
            if name.is_empty() {
                return Err(bad());
            }
            tokens.push(Token::Field(name.to_string()));
            while !rest.is_empty() {
                let close = rest.find(']').ok_or_else(bad)?;
                if !rest.starts_with('[') {
                    return Err(bad());
                }
                let idx: usize = rest[1..close].parse().map_err(|_| bad())?;
                tokens.push(Token::Index(idx));
                rest = &rest[close + 1..];
            }
        }
        Ok(AttributePath {
            raw: raw.to_string(),
            tokens,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Mutable reference to the scalar attribute this path names.
    pub fn resolve_mut<'a>(&self, scene: &'a mut SceneDescription) -> Result<&'a mut f64> {
        self.try_resolve(scene)
            .ok_or_else(|| Error::UnresolvedTarget(self.raw.clone()))
    }

    fn try_resolve<'a>(&self, scene: &'a mut SceneDescription) -> Option<&'a mut f64> {
        use Token::*;
        fn field(t: &Token) -> Option<&str> {
            match t {
                Token::Field(s) => Some(s.as_str()),
                Token::Index(_) => None,
            }
        }
        let t = &self.tokens;
        match field(t.first()?)? {
            "surfaces" => {
                let Index(i) = t.get(1)? else { return None };
                let s = scene.surfaces.get_mut(*i)?;
                match field(t.get(2)?)? {
                    "shape" => shape_attr(&mut s.shape, &t[3..]),
                    "albedo" => component(&mut s.albedo, &t[3..]),
                    _ => None,
                }
            }
            "emitters" => {
                let Index(i) = t.get(1)? else { return None };
                let e = scene.emitters.get_mut(*i)?;
                match field(t.get(2)?)? {
                    "shape" => shape_attr(&mut e.shape, &t[3..]),
                    "radiance" => component(&mut e.radiance, &t[3..]),
                    _ => None,
                }
            }
            "camera" => {
                let c = &mut scene.camera;
                match field(t.get(1)?)? {
                    "position" => component(&mut c.position, &t[2..]),
                    "look_at" => component(&mut c.look_at, &t[2..]),
                    "up" => component(&mut c.up, &t[2..]),
                    "vfov_deg" if t.len() == 2 => Some(&mut c.vfov_deg),
                    _ => None,
                }
            }
            "background" => component(&mut scene.background, &t[1..]),
            _ => None,
        }
    }
}

fn shape_attr<'a>(shape: &'a mut Shape, t: &[Token]) -> Option<&'a mut f64> {
    let Token::Field(name) = t.first()? else {
        return None;
    };
    let rest = &t[1..];
    match (shape, name.as_str()) {
        (Shape::Box { min, .. }, "min") => component(min, rest),
        (Shape::Box { max, .. }, "max") => component(max, rest),
        (Shape::Sphere { center, .. }, "center") => component(center, rest),
        (Shape::Sphere { radius, .. }, "radius") if rest.is_empty() => Some(radius),
        (Shape::Rect { corner, .. }, "corner") => component(corner, rest),
        (Shape::Rect { edge_u, .. }, "edge_u") => component(edge_u, rest),
        (Shape::Rect { edge_v, .. }, "edge_v") => component(edge_v, rest),
        _ => None,
    }
}

fn component<'a>(v: &'a mut [f64; 3], t: &[Token]) -> Option<&'a mut f64> {
    if t.len() != 1 {
        return None;
    }
    let k = match &t[0] {
        Token::Index(k) => *k,
        Token::Field(f) => match f.as_str() {
            "x" | "r" => 0,
            "y" | "g" => 1,
            "z" | "b" => 2,
            _ => return None,
        },
    };
    v.get_mut(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{corridor_fixture, parse_scene};

    #[test]
    fn resolves_common_targets() {
        let mut s = parse_scene(corridor_fixture()).unwrap();
        for target in [
            "surfaces[8].shape.center.x",
            "surfaces[8].shape.radius",
            "surfaces[0].shape.min.y",
            "surfaces[8].albedo[0]",
            "emitters[1].radiance.g",
            "emitters[0].shape.corner.z",
            "camera.position.x",
            "camera.vfov_deg",
            "background[2]",
        ] {
            AttributePath::parse(target)
                .unwrap()
                .resolve_mut(&mut s)
                .unwrap_or_else(|e| panic!("{target}: {e}"));
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let mut s = parse_scene(corridor_fixture()).unwrap();
        for target in [
            "surfaces[99].shape.radius",
            "surfaces[0].shape.radius",
            "surfaces[8].shape.center.w",
            "surfaces[8].shape.center",
            "camera.position",
            "lights[0].radiance.x",
            "surfaces.shape",
            "",
            "surfaces[x].albedo[0]",
        ] {
            let r = AttributePath::parse(target).and_then(|p| p.resolve_mut(&mut s).map(|_| ()));
            assert!(r.is_err(), "{target} should not resolve");
        }
    }
}
