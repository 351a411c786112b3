//! Flattened scene geometry and ray queries.

use crate::math::Vec3;
use crate::scene::{CameraModel, SceneDescription, Shape};

pub const RAY_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Owner {
    Surface(usize),
    Emitter(usize),
}

#[derive(Debug, Clone, Copy)]
enum Prim {
    Box {
        min: Vec3,
        max: Vec3,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Rect {
        corner: Vec3,
        normal: Vec3,
        // (w × v)·n / |n|² and (u × w)·n / |n|² expressed through these
        u_dual: Vec3,
        v_dual: Vec3,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Unit geometric normal (outward for solids, edge_u × edge_v for rects).
    pub normal: Vec3,
    pub owner: Owner,
}

#[derive(Debug, Clone)]
pub struct EmitterPatch {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub radiance: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Geometry {
    prims: Vec<(Prim, Owner)>,
    pub albedo: Vec<[f64; 3]>,
    pub emitters: Vec<EmitterPatch>,
}

fn rect_prim(corner: Vec3, u: Vec3, v: Vec3) -> (Prim, Vec3, f64) {
    let n = u.cross(v);
    let nn = n.dot(n);
    // p − corner = s·u + t·v  ⇒  s = (w × v)·n / |n|² = w·(v × n) / |n|²
    let u_dual = v.cross(n) / nn;
    let v_dual = n.cross(u) / nn;
    let area = nn.sqrt();
    (
        Prim::Rect {
            corner,
            normal: n / area,
            u_dual,
            v_dual,
        },
        n / area,
        area,
    )
}

impl Geometry {
    pub fn build(scene: &SceneDescription) -> Geometry {
        let mut prims = Vec::new();
        let mut albedo = Vec::new();
        for (i, s) in scene.surfaces.iter().enumerate() {
            let prim = match s.shape {
                Shape::Box { min, max } => Prim::Box {
                    min: Vec3::from_array(min),
                    max: Vec3::from_array(max),
                },
                Shape::Sphere { center, radius } => Prim::Sphere {
                    center: Vec3::from_array(center),
                    radius,
                },
                Shape::Rect {
                    corner,
                    edge_u,
                    edge_v,
                } => {
                    rect_prim(
                        Vec3::from_array(corner),
                        Vec3::from_array(edge_u),
                        Vec3::from_array(edge_v),
                    )
                    .0
                }
            };
            prims.push((prim, Owner::Surface(i)));
            albedo.push(s.albedo);
        }
        let mut emitters = Vec::new();
        for (i, e) in scene.emitters.iter().enumerate() {
            if let Shape::Rect {
                corner,
                edge_u,
                edge_v,
            } = e.shape
            {
                let (c, u, v) = (
                    Vec3::from_array(corner),
                    Vec3::from_array(edge_u),
                    Vec3::from_array(edge_v),
                );
                let (prim, normal, area) = rect_prim(c, u, v);
                prims.push((prim, Owner::Emitter(i)));
                emitters.push(EmitterPatch {
                    corner: c,
                    edge_u: u,
                    edge_v: v,
                    normal,
                    area,
                    radiance: e.radiance,
                });
            }
        }
        Geometry {
            prims,
            albedo,
            emitters,
        }
    }

    /// Closest hit with t in (RAY_EPSILON, t_max).
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<Hit> {
        let mut best_t = t_max;
        let mut best: Option<(usize, Vec3)> = None;
        for (k, (prim, _)) in self.prims.iter().enumerate() {
            if let Some((t, n)) = intersect_prim(prim, ray, best_t) {
                best_t = t;
                best = Some((k, n));
            }
        }
        best.map(|(k, normal)| Hit {
            t: best_t,
            point: ray.origin + ray.dir * best_t,
            normal,
            owner: self.prims[k].1,
        })
    }

    /// True if anything blocks the open segment (RAY_EPSILON, t_max).
    pub fn occluded(&self, ray: &Ray, t_max: f64) -> bool {
        self.prims
            .iter()
            .any(|(prim, _)| intersect_prim(prim, ray, t_max).is_some())
    }
}

#[inline]
fn intersect_prim(prim: &Prim, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
    match *prim {
        Prim::Sphere { center, radius } => {
            let oc = ray.origin - center;
            let b = oc.dot(ray.dir);
            let c = oc.dot(oc) - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let mut t = -b - sq;
            if t <= RAY_EPSILON {
                t = -b + sq;
            }
            if t <= RAY_EPSILON || t >= t_max {
                return None;
            }
            let p = ray.origin + ray.dir * t;
            Some((t, (p - center) / radius))
        }
        Prim::Box { min, max } => {
            let mut t0 = f64::NEG_INFINITY;
            let mut t1 = f64::INFINITY;
            let mut axis0 = 0;
            let mut sign0 = 0.0;
            for a in 0..3 {
                let o = ray.origin.axis(a);
                let d = ray.dir.axis(a);
                let (lo, hi) = (min.axis(a), max.axis(a));
                if d == 0.0 {
                    if o < lo || o > hi {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d;
                let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
                let mut s = -1.0;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                    s = 1.0;
                }
                if ta > t0 {
                    t0 = ta;
                    axis0 = a;
                    sign0 = s;
                }
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
            // origins inside a solid never see its interior
            if t0 <= RAY_EPSILON || t0 >= t_max {
                return None;
            }
            let n = match axis0 {
                0 => Vec3::new(sign0, 0.0, 0.0),
                1 => Vec3::new(0.0, sign0, 0.0),
                _ => Vec3::new(0.0, 0.0, sign0),
            };
            Some((t0, n))
        }
        Prim::Rect {
            corner,
            normal,
            u_dual,
            v_dual,
        } => {
            let denom = normal.dot(ray.dir);
            if denom == 0.0 {
                return None;
            }
            let t = normal.dot(corner - ray.origin) / denom;
            if t <= RAY_EPSILON || t >= t_max {
                return None;
            }
            let w = ray.origin + ray.dir * t - corner;
            let s = w.dot(u_dual);
            let r = w.dot(v_dual);
            if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&r) {
                return None;
            }
            Some((t, normal))
        }
    }
}

/// Pinhole camera basis.
#[derive(Debug, Clone)]
pub struct Camera {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    half_h: f64,
    half_w: f64,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn new(c: &CameraModel) -> Camera {
        let origin = Vec3::from_array(c.position);
        let forward = (Vec3::from_array(c.look_at) - origin).normalized();
        let right = forward.cross(Vec3::from_array(c.up)).normalized();
        let up = right.cross(forward);
        let half_h = (c.vfov_deg.to_radians() * 0.5).tan();
        let half_w = half_h * c.width as f64 / c.height as f64;
        Camera {
            origin,
            forward,
            right,
            up,
            half_h,
            half_w,
            width: c.width,
            height: c.height,
        }
    }

    /// Ray through image position (px + jx, py + jy); row 0 is the top row.
    pub fn ray(&self, px: usize, py: usize, jx: f64, jy: f64) -> Ray {
        let sx = (2.0 * (px as f64 + jx) / self.width as f64 - 1.0) * self.half_w;
        let sy = (1.0 - 2.0 * (py as f64 + jy) / self.height as f64) * self.half_h;
        Ray {
            origin: self.origin,
            dir: (self.forward + self.right * sx + self.up * sy).normalized(),
        }
    }
}
