use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::{PI, TAU};
use libm::{cos, sin};
use rand::Rng;

use super::{DataRng, Generator, GeneratorId, SceneState};
use crate::liegroup::{Factor, FactorKind, GroupElement, GroupSpec};

const PROFILE_LEN: usize = 12;
const NUM_TEMPLATES: usize = 4;
/// Hue states live in `[0, HUE_WINDOW]`; moves that would leave it are
/// rejected, so the circle never wraps within a dataset.
const HUE_WINDOW: f64 = 0.6;
const TEMPLATE_HUE_OFFSET: [f64; NUM_TEMPLATES] = [0.0, 0.1, 0.2, 0.3];
const WALL_PATTERN: [f64; 4] = [1.0, 0.8, 0.6, 0.4];
const FLOOR_PATTERN: [f64; 4] = [0.3, 0.6, 0.9, 0.6];

fn template_profile(k: usize) -> [f64; PROFILE_LEN] {
    core::array::from_fn(|j| 0.5 + 0.5 * cos(PI * (j * (k + 1)) as f64 / 6.0 + k as f64))
}

fn push_colored(out: &mut Vec<f64>, pattern: &[f64], hue: f64) {
    let (c, s) = (cos(TAU * hue), sin(TAU * hue));
    for p in pattern {
        out.push(p * c);
        out.push(p * s);
    }
}

/// A scene vector of one of four object templates in front of a wall and
/// on a floor. `ℝ³` shifts the object, wall and floor hues (mod 1).
#[derive(Debug, Clone, Default)]
pub struct Shapes;

impl Shapes {
    pub fn new() -> Self {
        Self
    }
}

impl Generator for Shapes {
    fn id(&self) -> GeneratorId {
        GeneratorId::Shapes
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::new(vec![FactorKind::Translation(1); 3]).expect("valid spec")
    }

    fn obs_dim(&self) -> usize {
        2 * (PROFILE_LEN + WALL_PATTERN.len() + FLOOR_PATTERN.len())
    }

    fn num_orbits(&self) -> u32 {
        NUM_TEMPLATES as u32
    }

    fn default_move_scale(&self) -> Vec<f64> {
        vec![0.3; 3]
    }

    fn resolution_floor(&self) -> f64 {
        1e-6
    }

    fn sample_state(&self, rng: &mut DataRng) -> SceneState {
        let orbit = rng.random_range(0..self.num_orbits());
        let factors = (0..3).map(|_| Factor::Translation(vec![rng.random_range(0.0..=HUE_WINDOW)])).collect();
        SceneState { orbit, pose: GroupElement::from_factors(factors).expect("valid pose") }
    }

    fn is_valid(&self, state: &SceneState) -> bool {
        state.orbit < self.num_orbits()
            && state.pose.matches(&self.group())
            && state.pose.factors().iter().all(|f| (0.0..=HUE_WINDOW).contains(&f.payload()[0]))
    }

    fn observe(&self, state: &SceneState) -> Vec<f64> {
        let k = state.orbit as usize;
        let hue = |i: usize| state.pose.factor(i).payload()[0];
        let mut out = Vec::with_capacity(self.obs_dim());
        push_colored(&mut out, &template_profile(k), hue(0) + TEMPLATE_HUE_OFFSET[k]);
        push_colored(&mut out, &WALL_PATTERN, hue(1));
        push_colored(&mut out, &FLOOR_PATTERN, hue(2));
        out
    }
}
