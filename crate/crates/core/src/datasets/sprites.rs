use alloc::vec;
use alloc::vec::Vec;

use libm::exp;
use rand::Rng;

use super::render::{render_sprite, Template};
use super::{DataRng, Generator, GeneratorId, SceneState};
use crate::liegroup::{Factor, FactorKind, GroupElement, GroupSpec};

const SPRITE_RES: usize = 16;
const SPRITE_RADIUS: f64 = 0.45;
const POS_RANGE: f64 = 0.3;
const LOG_SCALE_RANGE: f64 = 0.5;

const MULTI_RES: usize = 12;
const MULTI_RADIUS: f64 = 0.4;

fn sample_position(rng: &mut DataRng) -> [f64; 2] {
    [rng.random_range(-POS_RANGE..=POS_RANGE), rng.random_range(-POS_RANGE..=POS_RANGE)]
}

fn translation(t: &[f64]) -> Factor {
    Factor::Translation(t.to_vec())
}

fn in_box(t: &[f64], half: f64) -> bool {
    t.iter().all(|v| v.abs() <= half)
}

/// One sprite translated in the plane and dilated, `G = ℝ² × ℝ` with the
/// dilation factor acting on the log-scale. States keep the position in
/// `[-0.3, 0.3]²` and the log-scale in `[-0.5, 0.5]`.
#[derive(Debug, Clone, Default)]
pub struct Sprites;

impl Sprites {
    pub fn new() -> Self {
        Self
    }
}

impl Generator for Sprites {
    fn id(&self) -> GeneratorId {
        GeneratorId::Sprites
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Translation(1)]).expect("valid spec")
    }

    fn obs_dim(&self) -> usize {
        SPRITE_RES * SPRITE_RES
    }

    fn num_orbits(&self) -> u32 {
        Template::ALL.len() as u32
    }

    fn default_move_scale(&self) -> Vec<f64> {
        vec![0.5, 0.5]
    }

    fn resolution_floor(&self) -> f64 {
        1e-6
    }

    fn sample_state(&self, rng: &mut DataRng) -> SceneState {
        let orbit = rng.random_range(0..self.num_orbits());
        let p = sample_position(rng);
        let s = rng.random_range(-LOG_SCALE_RANGE..=LOG_SCALE_RANGE);
        let pose = GroupElement::from_factors(vec![translation(&p), translation(&[s])]).expect("valid pose");
        SceneState { orbit, pose }
    }

    fn is_valid(&self, state: &SceneState) -> bool {
        state.orbit < self.num_orbits()
            && state.pose.matches(&self.group())
            && in_box(state.pose.factor(0).payload(), POS_RANGE)
            && in_box(state.pose.factor(1).payload(), LOG_SCALE_RANGE)
    }

    fn observe(&self, state: &SceneState) -> Vec<f64> {
        let p = state.pose.factor(0).payload();
        let s = state.pose.factor(1).payload()[0];
        let mut out = vec![0.0; self.obs_dim()];
        let template = Template::ALL[state.orbit as usize];
        render_sprite(&mut out, SPRITE_RES, template, [p[0], p[1]], SPRITE_RADIUS * exp(s));
        out
    }
}

/// Three sprites, one per colour channel, each translated by its own `ℝ²`
/// factor. The orbit is the base-3 code of the three shapes.
#[derive(Debug, Clone, Default)]
pub struct MultiSprites;

impl MultiSprites {
    pub fn new() -> Self {
        Self
    }

    pub fn orbit_code(shapes: [usize; 3]) -> u32 {
        (shapes[0] + 3 * shapes[1] + 9 * shapes[2]) as u32
    }

    pub fn shapes_of(orbit: u32) -> [usize; 3] {
        let o = orbit as usize;
        [o % 3, (o / 3) % 3, o / 9]
    }
}

impl Generator for MultiSprites {
    fn id(&self) -> GeneratorId {
        GeneratorId::MultiSprites
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::new(vec![FactorKind::Translation(2); 3]).expect("valid spec")
    }

    fn obs_dim(&self) -> usize {
        3 * MULTI_RES * MULTI_RES
    }

    fn num_orbits(&self) -> u32 {
        27
    }

    fn default_move_scale(&self) -> Vec<f64> {
        vec![0.5; 3]
    }

    fn resolution_floor(&self) -> f64 {
        1e-6
    }

    fn sample_state(&self, rng: &mut DataRng) -> SceneState {
        let orbit = rng.random_range(0..27);
        let factors = (0..3).map(|_| translation(&sample_position(rng))).collect();
        SceneState { orbit, pose: GroupElement::from_factors(factors).expect("valid pose") }
    }

    fn is_valid(&self, state: &SceneState) -> bool {
        state.orbit < 27
            && state.pose.matches(&self.group())
            && state.pose.factors().iter().all(|f| in_box(f.payload(), POS_RANGE))
    }

    fn observe(&self, state: &SceneState) -> Vec<f64> {
        let shapes = Self::shapes_of(state.orbit);
        let n = MULTI_RES * MULTI_RES;
        let mut out = vec![0.0; self.obs_dim()];
        for (k, chunk) in out.chunks_mut(n).enumerate() {
            let p = state.pose.factor(k).payload();
            render_sprite(chunk, MULTI_RES, Template::ALL[shapes[k]], [p[0], p[1]], MULTI_RADIUS);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup;
    use rand::SeedableRng;

    #[test]
    fn translate_and_back() {
        let gen = Sprites::new();
        let mut rng = DataRng::seed_from_u64(0);
        let mut s = gen.sample_state(&mut rng);
        s.pose = GroupElement::from_factors(vec![translation(&[0.0, 0.0]), translation(&[0.0])]).unwrap();
        let there = GroupElement::from_factors(vec![translation(&[0.2, 0.0]), translation(&[0.0])]).unwrap();
        let moved = gen.act(&there, &s).unwrap();
        assert_ne!(gen.observe(&moved), gen.observe(&s));
        let back = gen.act(&liegroup::inverse(&there), &moved).unwrap();
        assert_eq!(gen.observe(&back), gen.observe(&s));
    }

    #[test]
    fn leaving_the_box_is_rejected() {
        let gen = Sprites::new();
        let s = SceneState { orbit: 0, pose: liegroup::identity(&gen.group()) };
        let far = GroupElement::from_factors(vec![translation(&[0.6, 0.0]), translation(&[0.0])]).unwrap();
        assert!(gen.act(&far, &s).is_none());
        let shrink = GroupElement::from_factors(vec![translation(&[0.0, 0.0]), translation(&[-0.6])]).unwrap();
        assert!(gen.act(&shrink, &s).is_none());
    }

    #[test]
    fn factor_one_moves_only_channel_one() {
        let gen = MultiSprites::new();
        let mut rng = DataRng::seed_from_u64(1);
        let s = gen.sample_state(&mut rng);
        let mut f = vec![translation(&[0.0, 0.0]); 3];
        f[1] = translation(&[0.01, -0.01]);
        let g = GroupElement::from_factors(f).unwrap();
        let (x, y) = (gen.observe(&s), gen.observe(&gen.act(&g, &s).unwrap()));
        let n = MULTI_RES * MULTI_RES;
        assert_eq!(x[..n], y[..n]);
        assert_ne!(x[n..2 * n], y[n..2 * n]);
        assert_eq!(x[2 * n..], y[2 * n..]);
    }

    #[test]
    fn base3_codes_roundtrip() {
        for o in 0..27 {
            assert_eq!(MultiSprites::orbit_code(MultiSprites::shapes_of(o)), o);
        }
    }
}
