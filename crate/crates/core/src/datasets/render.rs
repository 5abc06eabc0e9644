use libm::{cbrt, exp, fabs, sqrt};

/// Edge width of a rendered sprite in world units.
const EDGE: f64 = 0.06;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Template {
    Heart,
    Square,
    Ellipse,
}

impl Template {
    pub(crate) const ALL: [Template; 3] = [Template::Heart, Template::Square, Template::Ellipse];

    /// Implicit shape in units of the sprite radius: negative inside, zero on
    /// the outline, growing roughly like distance outside.
    fn implicit(self, a: f64, b: f64) -> f64 {
        match self {
            Template::Square => fabs(a).max(fabs(b)) / 0.85 - 1.0,
            Template::Ellipse => sqrt(a * a + (b / 0.55) * (b / 0.55)) - 1.0,
            Template::Heart => {
                let (a, b) = (a / 1.1, b / 1.1 + 0.15);
                let r = a * a + b * b - 1.0;
                cbrt(r * r * r - a * a * b * b * b)
            }
        }
    }
}

/// Soft occupancy of `template` at `center` with `radius` on a `res×res`
/// grid spanning `[-1, 1]²`, written row-major into `out`.
pub(crate) fn render_sprite(out: &mut [f64], res: usize, template: Template, center: [f64; 2], radius: f64) {
    debug_assert_eq!(out.len(), res * res);
    let step = 2.0 / res as f64;
    for row in 0..res {
        let v = 1.0 - (row as f64 + 0.5) * step;
        for col in 0..res {
            let u = -1.0 + (col as f64 + 0.5) * step;
            let f = template.implicit((u - center[0]) / radius, (v - center[1]) / radius);
            out[row * res + col] = sigmoid(-f * radius / EDGE);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn center_inside_far_corner_outside() {
        for t in Template::ALL {
            assert!(t.implicit(0.0, 0.0) < 0.0, "{t:?}");
            assert!(t.implicit(3.0, 3.0) > 0.0, "{t:?}");
            let mut img = vec![0.0; 256];
            render_sprite(&mut img, 16, t, [0.0, 0.0], 0.4);
            assert!(img[8 * 16 + 8] > 0.9);
            assert!(img[0] < 0.01);
        }
    }

    #[test]
    fn templates_render_differently() {
        let mut imgs = [[0.0; 256]; 3];
        for (img, t) in imgs.iter_mut().zip(Template::ALL) {
            render_sprite(img, 16, t, [0.0, 0.0], 0.4);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let d: f64 = imgs[i].iter().zip(&imgs[j]).map(|(a, b)| (a - b).abs()).sum();
                assert!(d > 3.0, "templates {i} and {j} too similar: {d}");
            }
        }
    }
}
