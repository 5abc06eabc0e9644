use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
use rand::{Rng, SeedableRng};

use super::{DataRng, Generator, GeneratorId, SceneState};
use crate::liegroup::{self, Factor, GroupSpec};

pub const NUM_POINTS: usize = 32;

/// Geometry knobs of one procedural chair.
struct ChairShape {
    seat_w: f64,
    seat_d: f64,
    leg_h: f64,
    back_h: f64,
    /// Armrest on the `+x` side, which breaks the mirror symmetry.
    arm: f64,
}

const SHAPES: [ChairShape; 3] = [
    ChairShape { seat_w: 0.5, seat_d: 0.5, leg_h: 0.45, back_h: 0.5, arm: 0.0 },
    ChairShape { seat_w: 0.7, seat_d: 0.45, leg_h: 0.3, back_h: 0.25, arm: 0.2 },
    ChairShape { seat_w: 0.4, seat_d: 0.6, leg_h: 0.6, back_h: 0.8, arm: 0.1 },
];

fn chair_cloud(k: usize) -> [[f64; 3]; NUM_POINTS] {
    let c = &SHAPES[k];
    let (w, d) = (c.seat_w / 2.0, c.seat_d / 2.0);
    let mut pts = Vec::with_capacity(NUM_POINTS);
    // seat: 3×3 grid
    for i in 0..3 {
        for j in 0..3 {
            pts.push([-w + w * i as f64, 0.0, -d + d * j as f64]);
        }
    }
    // legs: 2 points each
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        for t in [0.5, 1.0] {
            pts.push([sx * w, -c.leg_h * t, sz * d]);
        }
    }
    // back: 3 columns × 3 rows at the rear edge
    for i in 0..3 {
        for j in 1..=3 {
            pts.push([-w + w * i as f64, c.back_h * j as f64 / 3.0, -d]);
        }
    }
    // armrest: 3 points on the +x side, raised above the seat
    for j in 0..3 {
        pts.push([w, 0.1 + c.arm, -d + d * j as f64]);
    }
    // 32 - 9 - 8 - 9 - 3 = 3 marker points: a short tilted stub breaks any
    // residual symmetry
    for t in 1..=3 {
        pts.push([-w * 0.5, -c.leg_h * 0.2 * t as f64, d * 0.3 * t as f64]);
    }
    debug_assert_eq!(pts.len(), NUM_POINTS);
    // deterministic jitter, then centre
    let mut rng = DataRng::seed_from_u64(0xc4a1 + k as u64);
    for p in &mut pts {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.02..0.02);
        }
    }
    let mean: [f64; 3] =
        core::array::from_fn(|a| pts.iter().map(|p| p[a]).sum::<f64>() / NUM_POINTS as f64);
    let mut out = [[0.0; 3]; NUM_POINTS];
    for (o, p) in out.iter_mut().zip(&pts) {
        *o = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
    }
    out
}

/// Three labelled point-cloud chairs rotated by `SO(3)`. States keep the
/// rotation angle at most `max_angle` from the identity; the default is
/// `π/2`, which keeps every pose away from the log cut locus.
#[derive(Debug, Clone)]
pub struct Chairs {
    clouds: [[[f64; 3]; NUM_POINTS]; 3],
    max_angle: f64,
}

impl Default for Chairs {
    fn default() -> Self {
        Self::new()
    }
}

impl Chairs {
    pub fn new() -> Self {
        Self { clouds: [chair_cloud(0), chair_cloud(1), chair_cloud(2)], max_angle: 0.5 * PI }
    }

    pub fn with_max_angle(max_angle: f64) -> Self {
        Self { max_angle, ..Self::new() }
    }

    pub fn template(&self, k: usize) -> &[[f64; 3]; NUM_POINTS] {
        &self.clouds[k]
    }

    fn rotation(state: &SceneState) -> [f64; 9] {
        match state.pose.factor(0) {
            Factor::Rotation3(r) => *r,
            _ => unreachable!("chairs pose is a single SO(3) factor"),
        }
    }
}

/// Rotation angle of `r`, from its trace.
fn angle_of(r: &[f64; 9]) -> f64 {
    libm::acos(((r[0] + r[4] + r[8] - 1.0) / 2.0).clamp(-1.0, 1.0))
}

impl Generator for Chairs {
    fn id(&self) -> GeneratorId {
        GeneratorId::Chairs
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::rotation3()
    }

    fn obs_dim(&self) -> usize {
        3 * NUM_POINTS
    }

    fn num_orbits(&self) -> u32 {
        3
    }

    fn default_move_scale(&self) -> Vec<f64> {
        vec![0.25]
    }

    fn resolution_floor(&self) -> f64 {
        1e-6
    }

    fn sample_state(&self, rng: &mut DataRng) -> SceneState {
        let orbit = rng.random_range(0..3);
        loop {
            let pose = liegroup::sample_uniform(&self.group(), rng, &[self.max_angle / PI]).expect("valid scale");
            let s = SceneState { orbit, pose };
            if self.is_valid(&s) {
                return s;
            }
        }
    }

    fn is_valid(&self, state: &SceneState) -> bool {
        state.orbit < 3 && state.pose.matches(&self.group()) && angle_of(&Self::rotation(state)) <= self.max_angle
    }

    fn observe(&self, state: &SceneState) -> Vec<f64> {
        let r = Self::rotation(state);
        self.clouds[state.orbit as usize].iter().flat_map(|p| liegroup::mat3_vec(&r, *p)).collect()
    }
}
