//! Synthetic generators for the five symmetry families.
//!
//! Every generator keeps its ground truth as a [`SceneState`]: an orbit id and
//! a group element. The group acts on states by left multiplication, possibly
//! partially (bounded regions, obstacles), and observations are rendered from
//! states. Each orbit is therefore a copy of `G`, and the ground-truth
//! encoder `x ↦ (orbit, pose)` is exactly equivariant.

mod apartments;
mod chairs;
mod render;
mod shapes;
mod sprites;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::liegroup::{self, GroupElement, GroupSpec};

pub use apartments::{Apartments, FloorPlan, GRID};
pub use chairs::Chairs;
pub use shapes::Shapes;
pub use sprites::{MultiSprites, Sprites};

/// Random source used by every generator.
pub type DataRng = ChaCha8Rng;

/// Attempts at drawing a valid move before a new start state is drawn.
const MAX_MOVE_ATTEMPTS: usize = 200;

/// Supervision sample `(x, g, y = g·x)` plus the held-out orbit label.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub x: Vec<f64>,
    pub g: GroupElement,
    pub y: Vec<f64>,
    pub orbit_label: u32,
}

/// A generator's hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub orbit: u32,
    pub pose: GroupElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GeneratorId {
    Sprites,
    Shapes,
    MultiSprites,
    Chairs,
    Apartments,
}

impl GeneratorId {
    pub const ALL: [GeneratorId; 5] = [
        GeneratorId::Sprites,
        GeneratorId::Shapes,
        GeneratorId::MultiSprites,
        GeneratorId::Chairs,
        GeneratorId::Apartments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorId::Sprites => "sprites",
            GeneratorId::Shapes => "shapes",
            GeneratorId::MultiSprites => "multi_sprites",
            GeneratorId::Chairs => "chairs",
            GeneratorId::Apartments => "apartments",
        }
    }

    pub fn build(self) -> Box<dyn Generator + Send + Sync> {
        match self {
            GeneratorId::Sprites => Box::new(Sprites::new()),
            GeneratorId::Shapes => Box::new(Shapes::new()),
            GeneratorId::MultiSprites => Box::new(MultiSprites::new()),
            GeneratorId::Chairs => Box::new(Chairs::new()),
            GeneratorId::Apartments => Box::new(Apartments::new()),
        }
    }
}

impl fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorId::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown generator `{s}`")))
    }
}

/// A group acting (possibly partially) on rendered scenes.
pub trait Generator {
    fn id(&self) -> GeneratorId;
    fn group(&self) -> GroupSpec;
    fn obs_dim(&self) -> usize;
    fn num_orbits(&self) -> u32;
    /// Per-factor magnitude passed to [`liegroup::sample_uniform`] for moves.
    fn default_move_scale(&self) -> Vec<f64>;
    /// Smallest move magnitude for which observations are guaranteed to change.
    fn resolution_floor(&self) -> f64;
    fn sample_state(&self, rng: &mut DataRng) -> SceneState;
    fn is_valid(&self, state: &SceneState) -> bool;
    fn observe(&self, state: &SceneState) -> Vec<f64>;

    /// Partial action on states; `None` when `g·s` is not reachable.
    fn act(&self, g: &GroupElement, state: &SceneState) -> Option<SceneState> {
        let pose = liegroup::compose(g, &state.pose).ok()?;
        let next = SceneState { orbit: state.orbit, pose };
        self.is_valid(&next).then_some(next)
    }

    /// Observation-level action: renders `g·s`.
    fn act_observation(&self, g: &GroupElement, state: &SceneState) -> Option<Vec<f64>> {
        self.act(g, state).map(|s| self.observe(&s))
    }
}

/// An in-memory dataset. `states[i]` holds the ground truth of triple `i`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub generator: GeneratorId,
    pub group: GroupSpec,
    pub obs_dim: usize,
    pub seed: u64,
    pub triples: Vec<Triple>,
    pub states: Vec<(SceneState, SceneState)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Rng for record `index`: one ChaCha stream per record, so any index range
/// can be generated independently.
pub fn record_rng(seed: u64, index: u64) -> DataRng {
    let mut rng = DataRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_scale(generator: &dyn Generator, scale: Option<&[f64]>) -> Result<Vec<f64>> {
    let scale = scale.map(<[f64]>::to_vec).unwrap_or_else(|| generator.default_move_scale());
    let n = generator.group().num_factors();
    if scale.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: scale.len() });
    }
    if let Some(s) = scale.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::NegativeScale(*s));
    }
    Ok(scale)
}

/// Draws a move valid from `state`, restricted to one factor when `factor`
/// is given.
fn sample_move(
    generator: &dyn Generator,
    state: &SceneState,
    scale: &[f64],
    factor: Option<usize>,
    rng: &mut DataRng,
) -> Option<(GroupElement, SceneState)> {
    let group = generator.group();
    for _ in 0..MAX_MOVE_ATTEMPTS {
        let mut g = liegroup::sample_uniform(&group, rng, scale).ok()?;
        if let Some(i) = factor {
            g = g.restrict_to_factor(i);
        }
        if let Some(next) = generator.act(&g, state) {
            return Some((g, next));
        }
    }
    None
}

/// One record: a valid start state, a valid move and the rendered pair.
pub fn sample_triple(
    generator: &dyn Generator,
    scale: &[f64],
    factor: Option<usize>,
    rng: &mut DataRng,
) -> (Triple, (SceneState, SceneState)) {
    loop {
        let start = generator.sample_state(rng);
        if let Some((g, end)) = sample_move(generator, &start, scale, factor, rng) {
            let triple = Triple {
                x: generator.observe(&start),
                g,
                y: generator.observe(&end),
                orbit_label: start.orbit,
            };
            return (triple, (start, end));
        }
    }
}

/// Generates `size` triples from `seed`. `scale` overrides the generator's
/// default per-factor move magnitude.
pub fn generate(generator: &dyn Generator, seed: u64, size: usize, scale: Option<&[f64]>) -> Result<Dataset> {
    generate_range(generator, seed, 0..size, scale)
}

/// Records `range` of the dataset defined by `seed`; concatenating ranges
/// reproduces [`generate`] exactly.
pub fn generate_range(
    generator: &dyn Generator,
    seed: u64,
    range: core::ops::Range<usize>,
    scale: Option<&[f64]>,
) -> Result<Dataset> {
    if range.is_empty() && range.start == 0 {
        return Err(Error::Empty("dataset size must be >= 1"));
    }
    let scale = check_scale(generator, scale)?;
    let mut triples = Vec::with_capacity(range.len());
    let mut states = Vec::with_capacity(range.len());
    for i in range {
        let mut rng = record_rng(seed, i as u64);
        let (t, s) = sample_triple(generator, &scale, None, &mut rng);
        triples.push(t);
        states.push(s);
    }
    Ok(Dataset {
        generator: generator.id(),
        group: generator.group(),
        obs_dim: generator.obs_dim(),
        seed,
        triples,
        states,
    })
}

/// Triples whose moves vary only factor `factor`.
pub fn generate_factor_moves(
    generator: &dyn Generator,
    seed: u64,
    size: usize,
    factor: usize,
    scale: Option<&[f64]>,
) -> Result<Vec<(Triple, (SceneState, SceneState))>> {
    let scale = check_scale(generator, scale)?;
    if factor >= scale.len() {
        return Err(Error::DimensionMismatch { expected: scale.len(), got: factor + 1 });
    }
    Ok((0..size)
        .map(|i| {
            let mut rng = record_rng(seed ^ 0x5eed_f00d, (factor * size + i) as u64);
            sample_triple(generator, &scale, Some(factor), &mut rng)
        })
        .collect())
}

/// A test trajectory. `moves[0]` is applied first, so
/// `y = moves[T-1] ⋯ moves[0] · x`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub moves: Vec<GroupElement>,
    pub y: Vec<f64>,
    pub orbit_label: u32,
    pub start: SceneState,
    pub end: SceneState,
}

impl Trajectory {
    /// The single element equivalent to the whole trajectory.
    pub fn composed(&self) -> Result<GroupElement> {
        let mut acc = liegroup::identity(&self.start.pose.spec());
        for g in &self.moves {
            acc = liegroup::compose(g, &acc)?;
        }
        Ok(acc)
    }
}

/// `size` trajectories of `steps` moves, each intermediate state valid.
pub fn gen_trajectory_testset(
    generator: &dyn Generator,
    size: usize,
    steps: usize,
    seed: u64,
    scale: Option<&[f64]>,
) -> Result<Vec<Trajectory>> {
    if steps < 1 {
        return Err(Error::Config("trajectories need at least one step".into()));
    }
    let scale = check_scale(generator, scale)?;
    let mut out = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = record_rng(seed ^ 0x7a11_7e57, i as u64);
        'retry: loop {
            let start = generator.sample_state(&mut rng);
            let mut state = start.clone();
            let mut moves = Vec::with_capacity(steps);
            for _ in 0..steps {
                match sample_move(generator, &state, &scale, None, &mut rng) {
                    Some((g, next)) => {
                        moves.push(g);
                        state = next;
                    }
                    None => continue 'retry,
                }
            }
            out.push(Trajectory {
                x: generator.observe(&start),
                moves,
                y: generator.observe(&state),
                orbit_label: start.orbit,
                start,
                end: state,
            });
            break;
        }
    }
    Ok(out)
}

/// Turns a dataset into single-step trajectories.
pub fn trajectories_from_dataset(dataset: &Dataset) -> Vec<Trajectory> {
    dataset
        .triples
        .iter()
        .zip(&dataset.states)
        .map(|(t, (s, e))| Trajectory {
            x: t.x.clone(),
            moves: alloc::vec![t.g.clone()],
            y: t.y.clone(),
            orbit_label: t.orbit_label,
            start: s.clone(),
            end: e.clone(),
        })
        .collect()
}
