//! Evaluation: trajectory hit-rate, orbit purity, factor leakage, and latent
//! density maps for mapping and localization.

use alloc::vec;
use alloc::vec::Vec;

use libm::{atan2, cos, floor, sin, sqrt};
use rand::seq::SliceRandom;

use crate::datasets::{record_rng, Trajectory, Triple};
use crate::error::{Error, Result};
use crate::latent;
use crate::liegroup::{self, Factor, FactorKind};
use crate::model::{ClassPoseEncoder, LatentModel};

/// Number of random distractor encodings per query.
pub const DEFAULT_DISTRACTORS: usize = 32;
/// Trajectory lengths reported in hit-rate tables.
pub const DEFAULT_STEPS: [usize; 3] = [1, 10, 20];
/// Seeds of the repeated runs behind a mean/std.
pub const RUN_SEEDS: [u64; 3] = [0, 1, 2];
pub const CANDIDATE_CONVENTION: &str = "target plus distractors, shuffled, ties to lowest index";

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Acts on `z` by `moves` in order.
pub fn act_sequence<M: LatentModel>(model: &M, moves: &[liegroup::GroupElement], z: &M::Code) -> Result<M::Code> {
    let mut z = z.clone();
    for g in moves {
        z = model.act(g, &z)?;
    }
    Ok(z)
}

/// Fraction of trajectories whose acted encoding `g_T ⋯ g_1 · φ(x)` has
/// `φ(y)` as nearest neighbour among `φ(y)` and `distractors` encodings of
/// random pool observations. Candidates are shuffled before ties are broken
/// toward the lowest index, so a constant encoder scores `1/(distractors+1)`
/// in expectation.
pub fn hit_rate<M: LatentModel>(
    model: &M,
    trajectories: &[Trajectory],
    pool: &[Vec<f64>],
    distractors: usize,
    seed: u64,
) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Empty("hit-rate test set"));
    }
    if pool.len() < distractors {
        return Err(Error::PoolTooSmall { requested: distractors, available: pool.len() });
    }
    let pool_codes = pool.iter().map(|x| model.encode(x)).collect::<Result<Vec<_>>>()?;
    let mut hits = 0usize;
    for (i, t) in trajectories.iter().enumerate() {
        let mut rng = record_rng(seed, i as u64);
        let query = act_sequence(model, &t.moves, &model.encode(&t.x)?)?;
        let target = model.encode(&t.y)?;
        // candidate 0 is the target, 1.. are distractors
        let chosen = rand::seq::index::sample(&mut rng, pool.len(), distractors);
        let mut slots: Vec<Option<usize>> = core::iter::once(None).chain(chosen.iter().map(Some)).collect();
        slots.shuffle(&mut rng);
        let dists = slots
            .iter()
            .map(|s| match s {
                None => model.distance(&query, &target),
                Some(j) => model.distance(&query, &pool_codes[*j]),
            })
            .collect::<Result<Vec<_>>>()?;
        if slots[argmin(&dists)].is_none() {
            hits += 1;
        }
    }
    Ok(hits as f64 / trajectories.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HitRateRow {
    pub steps: usize,
    pub runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HitRateReport {
    pub rows: Vec<HitRateRow>,
    pub distractors: usize,
    pub test_size: usize,
    pub candidate_convention: alloc::string::String,
}

impl HitRateReport {
    /// `runs[k]` lists the per-run hit-rates at `steps[k]`.
    pub fn new(steps: &[usize], runs: Vec<Vec<f64>>, distractors: usize, test_size: usize) -> Self {
        let rows = steps
            .iter()
            .zip(runs)
            .map(|(&steps, runs)| {
                let (mean, std) = mean_std(&runs);
                HitRateRow { steps, runs, mean, std }
            })
            .collect();
        Self { rows, distractors, test_size, candidate_convention: CANDIDATE_CONVENTION.into() }
    }

    pub fn at(&self, steps: usize) -> Option<&HitRateRow> {
        self.rows.iter().find(|r| r.steps == steps)
    }
}

/// Distance between sequential application of a trajectory and a single
/// application of its composed element, measured as
/// `sqrt(d(seq, once) − d(once, once))`.
pub fn associativity_gap<M: LatentModel>(model: &M, trajectory: &Trajectory) -> Result<f64> {
    let z = model.encode(&trajectory.x)?;
    let seq = act_sequence(model, &trajectory.moves, &z)?;
    let once = model.act(&trajectory.composed()?, &z)?;
    let gap = model.distance(&seq, &once)? - model.distance(&once, &once)?;
    Ok(sqrt(gap.max(0.0)))
}

/// Nearest spherical centroid classifier over class points.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitClassifier {
    pub centroids: Vec<(u32, Vec<f64>)>,
}

impl OrbitClassifier {
    /// Per-label normalized means of `class_points`.
    pub fn fit(class_points: &[Vec<f64>], labels: &[u32]) -> Result<Self> {
        if class_points.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: class_points.len() });
        }
        let Some(first) = class_points.first() else { return Err(Error::Empty("classifier fit set")) };
        let mut ids: Vec<u32> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut centroids = Vec::with_capacity(ids.len());
        for id in ids {
            let mut sum = vec![0.0; first.len()];
            for (c, _) in class_points.iter().zip(labels).filter(|(_, l)| **l == id) {
                sum.iter_mut().zip(c).for_each(|(s, v)| *s += v);
            }
            let n = latent::norm(&sum);
            // antipodal clouds have no spherical mean; keep the raw sum
            if n > 1e-12 {
                sum.iter_mut().for_each(|s| *s /= n);
            }
            centroids.push((id, sum));
        }
        Ok(Self { centroids })
    }

    /// Label of the centroid with the largest inner product; ties go to the
    /// smallest label.
    pub fn predict(&self, class_point: &[f64]) -> u32 {
        let scores: Vec<f64> = self.centroids.iter().map(|(_, c)| -latent::dot(c, class_point)).collect();
        self.centroids[argmin(&scores)].0
    }
}

/// Nearest-centroid accuracy of orbit labels from class points. Centroids
/// are fit on even indices and scored on odd indices.
pub fn orbit_separation<E: ClassPoseEncoder>(encoder: &E, observations: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
    if observations.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: observations.len() });
    }
    if observations.len() < 2 {
        return Err(Error::Empty("orbit separation needs a fit and a scoring split"));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::SingleOrbit);
    }
    let codes = observations
        .iter()
        .map(|x| encoder.encode_latent(x).map(|z| z.class_point))
        .collect::<Result<Vec<_>>>()?;
    let (fit_c, fit_l): (Vec<_>, Vec<_>) = codes.iter().zip(labels).step_by(2).map(|(c, l)| (c.clone(), *l)).unzip();
    let clf = OrbitClassifier::fit(&fit_c, &fit_l)?;
    let scored: Vec<_> = codes.iter().zip(labels).skip(1).step_by(2).collect();
    let correct = scored.iter().filter(|(c, l)| clf.predict(c) == **l).count();
    Ok(correct as f64 / scored.len() as f64)
}

/// `leakage[i][j]`: mean over moves that vary only factor `i` of the
/// displacement `sqrt(d_j)` between the pose slices `j` of `φ(x)` and `φ(y)`.
pub fn disentanglement_check<E: ClassPoseEncoder>(encoder: &E, per_factor: &[Vec<Triple>]) -> Result<Vec<Vec<f64>>> {
    let k = encoder.latent_spec().group.num_factors();
    if k < 2 {
        return Err(Error::InvalidSpec("disentanglement needs a product group"));
    }
    if per_factor.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: per_factor.len() });
    }
    let mut out = vec![vec![0.0; k]; k];
    for (i, triples) in per_factor.iter().enumerate() {
        if triples.is_empty() {
            continue;
        }
        for t in triples {
            let zx = encoder.encode_latent(&t.x)?;
            let zy = encoder.encode_latent(&t.y)?;
            for (j, d) in liegroup::factor_distances_sq(&zx.pose, &zy.pose)?.into_iter().enumerate() {
                out[i][j] += sqrt(d);
            }
        }
        out[i].iter_mut().for_each(|v| *v /= triples.len() as f64);
    }
    Ok(out)
}

/// Whether every diagonal entry is at least `ratio` times each off-diagonal
/// entry in its row.
pub fn is_diagonally_dominant(m: &[Vec<f64>], ratio: f64) -> bool {
    m.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, v)| i == j || row[i] >= ratio * v))
}

/// Planar rigid motion `p ↦ R(angle) p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rigid2 {
    pub angle: f64,
    pub translation: [f64; 2],
}

impl Rigid2 {
    pub const IDENTITY: Rigid2 = Rigid2 { angle: 0.0, translation: [0.0, 0.0] };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (c, s) = (cos(self.angle), sin(self.angle));
        [c * p[0] - s * p[1] + self.translation[0], s * p[0] + c * p[1] + self.translation[1]]
    }

    /// Least-squares rigid registration taking `src` onto `dst`.
    pub fn fit(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::DimensionMismatch { expected: dst.len(), got: src.len() });
        }
        if src.is_empty() {
            return Ok(Self::IDENTITY);
        }
        let n = src.len() as f64;
        let mean = |ps: &[[f64; 2]]| {
            let s = ps.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
            [s[0] / n, s[1] / n]
        };
        let (ms, md) = (mean(src), mean(dst));
        let (mut cross, mut dotp) = (0.0, 0.0);
        for (a, b) in src.iter().zip(dst) {
            let (ax, ay) = (a[0] - ms[0], a[1] - ms[1]);
            let (bx, by) = (b[0] - md[0], b[1] - md[1]);
            cross += ax * by - ay * bx;
            dotp += ax * bx + ay * by;
        }
        let angle = atan2(cross, dotp);
        let r = Rigid2 { angle, translation: [0.0, 0.0] }.apply(ms);
        Ok(Self { angle, translation: [md[0] - r[0], md[1] - r[1]] })
    }
}

/// Histogram of (aligned) latent translations for one predicted orbit over
/// a square world `[origin, origin + extent]²`. Row index is `y`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityMap {
    pub orbit: u32,
    pub resolution: usize,
    pub origin: [f64; 2],
    pub extent: f64,
    pub alignment: Rigid2,
    pub counts: Vec<u32>,
}

/// Grid cell of `p` and whether it had to be clamped into the map.
pub fn cell_of(p: [f64; 2], origin: [f64; 2], extent: f64, resolution: usize) -> ((usize, usize), bool) {
    let size = extent / resolution as f64;
    let idx = |v: f64, o: f64| -> (usize, bool) {
        let i = floor((v - o) / size);
        if !(i >= 0.0) {
            (0, true)
        } else if i >= resolution as f64 {
            (resolution - 1, true)
        } else {
            (i as usize, false)
        }
    };
    let (col, cx) = idx(p[0], origin[0]);
    let (row, cy) = idx(p[1], origin[1]);
    ((row, col), cx || cy)
}

impl DensityMap {
    pub fn cell_size(&self) -> f64 {
        self.extent / self.resolution as f64
    }

    pub fn occupied(&self) -> Vec<bool> {
        self.counts.iter().map(|c| *c > 0).collect()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Options for [`build_density_maps`].
#[derive(Debug, Clone)]
pub struct MapConfig {
    pub num_orbits: u32,
    pub resolution: usize,
    pub origin: [f64; 2],
    pub extent: f64,
}

fn translation_slice(pose: &liegroup::GroupElement) -> Result<[f64; 2]> {
    pose.factors()
        .iter()
        .find_map(|f| match f {
            Factor::Translation(t) if t.len() == 2 => Some([t[0], t[1]]),
            _ => None,
        })
        .ok_or(Error::InvalidSpec("density maps need an ℝ² translation factor"))
}

/// One density map per orbit id `0..num_orbits`, filled with the encoded
/// `ℝ²` pose slices grouped by predicted orbit. With `world_positions`, each
/// map's alignment is the rigid registration from latent to world of the
/// points assigned to it; otherwise it is the identity.
pub fn build_density_maps<E: ClassPoseEncoder>(
    encoder: &E,
    classifier: &OrbitClassifier,
    observations: &[Vec<f64>],
    world_positions: Option<&[[f64; 2]]>,
    config: &MapConfig,
) -> Result<Vec<DensityMap>> {
    if !encoder.latent_spec().group.factors().contains(&FactorKind::Translation(2)) {
        return Err(Error::InvalidSpec("density maps need an ℝ² translation factor"));
    }
    if config.resolution == 0 || !(config.extent > 0.0) {
        return Err(Error::Config("map resolution and extent must be positive".into()));
    }
    if let Some(w) = world_positions {
        if w.len() != observations.len() {
            return Err(Error::DimensionMismatch { expected: observations.len(), got: w.len() });
        }
    }
    let mut points: Vec<Vec<([f64; 2], usize)>> = vec![Vec::new(); config.num_orbits as usize];
    for (i, x) in observations.iter().enumerate() {
        let z = encoder.encode_latent(x)?;
        let orbit = classifier.predict(&z.class_point) as usize;
        if let Some(bucket) = points.get_mut(orbit) {
            bucket.push((translation_slice(&z.pose)?, i));
        }
    }
    let mut maps = Vec::with_capacity(points.len());
    for (orbit, pts) in points.into_iter().enumerate() {
        let alignment = match world_positions {
            Some(w) => {
                let src: Vec<_> = pts.iter().map(|(p, _)| *p).collect();
                let dst: Vec<_> = pts.iter().map(|(_, i)| w[*i]).collect();
                Rigid2::fit(&src, &dst)?
            }
            None => Rigid2::IDENTITY,
        };
        let mut counts = vec![0u32; config.resolution * config.resolution];
        for (p, _) in &pts {
            let ((r, c), clamped) = cell_of(alignment.apply(*p), config.origin, config.extent, config.resolution);
            if !clamped {
                counts[r * config.resolution + c] += 1;
            }
        }
        maps.push(DensityMap {
            orbit: orbit as u32,
            resolution: config.resolution,
            origin: config.origin,
            extent: config.extent,
            alignment,
            counts,
        });
    }
    Ok(maps)
}

/// Intersection over union of occupied map cells and reference cells.
pub fn cell_overlap(map: &DensityMap, reference: &[bool]) -> Result<f64> {
    if reference.len() != map.counts.len() {
        return Err(Error::DimensionMismatch { expected: map.counts.len(), got: reference.len() });
    }
    let occ = map.occupied();
    let inter = occ.iter().zip(reference).filter(|(a, b)| **a && **b).count();
    let union = occ.iter().zip(reference).filter(|(a, b)| **a || **b).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Localization {
    pub orbit: u32,
    pub row: usize,
    pub col: usize,
    /// Set when the aligned pose fell outside the map and was clamped.
    pub clamped: bool,
}

/// Encodes `x`, routes it to the nearest orbit's map and returns the cell of
/// its aligned translation.
pub fn localize<E: ClassPoseEncoder>(
    encoder: &E,
    classifier: &OrbitClassifier,
    maps: &[DensityMap],
    x: &[f64],
) -> Result<Localization> {
    let z = encoder.encode_latent(x)?;
    let orbit = classifier.predict(&z.class_point);
    let map = maps.iter().find(|m| m.orbit == orbit).ok_or(Error::Empty("no map for predicted orbit"))?;
    let p = map.alignment.apply(translation_slice(&z.pose)?);
    let ((row, col), clamped) = cell_of(p, map.origin, map.extent, map.resolution);
    Ok(Localization { orbit, row, col, clamped })
}
