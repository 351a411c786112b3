use plenoptic_bounds::render::{render, RenderConfig};
use plenoptic_bounds::scene::{corridor_fixture, parse_scene, ParameterPoint};
use std::time::Instant;

fn main() {
    let scene = parse_scene(corridor_fixture()).unwrap();
    let space = scene.space().unwrap().clone();
    for theta in [0.0, 0.2, 0.4, 1.5] {
        let s = scene
            .apply_parameters(&ParameterPoint::new(vec![theta], space.clone()).unwrap())
            .unwrap();
        let t = Instant::now();
        let img = render(&s, &RenderConfig::new(64, 1)).unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!("θ={theta} sum={:.3} {:.2} Mpath/s", img.sum(), 64.0 * 3072.0 / dt / 1e6);
    }
}
