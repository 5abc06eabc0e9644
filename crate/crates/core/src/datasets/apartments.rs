use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::{PI, TAU};
use libm::{atan2, cos, floor, sin, sqrt};
use rand::Rng;

use super::{DataRng, Generator, GeneratorId, SceneState};
use crate::liegroup::{self, Factor, FactorKind, GroupElement, GroupSpec};

/// Cells per side of each floor plan.
pub const GRID: usize = 32;
const CELL: f64 = 0.25;
const NUM_RAYS: usize = 16;
const MAX_RANGE: f64 = 8.0;
const RAY_SCALE: f64 = 0.25;
const NUM_BEACONS: usize = 3;
const BEACON_SCALE: f64 = 0.25;

/// A static occupancy grid with beacons. Row index is `y`, column is `x`.
#[derive(Debug, Clone)]
pub struct FloorPlan {
    occupied: Vec<bool>,
    beacons: [[f64; 2]; NUM_BEACONS],
}

impl FloorPlan {
    fn walled() -> Self {
        let mut occupied = vec![false; GRID * GRID];
        for i in 0..GRID {
            for (r, c) in [(0, i), (GRID - 1, i), (i, 0), (i, GRID - 1)] {
                occupied[r * GRID + c] = true;
            }
        }
        Self { occupied, beacons: [[0.0; 2]; NUM_BEACONS] }
    }

    fn fill(&mut self, rows: core::ops::RangeInclusive<usize>, cols: core::ops::RangeInclusive<usize>, v: bool) {
        for r in rows {
            for c in cols.clone() {
                self.occupied[r * GRID + c] = v;
            }
        }
    }

    /// Two rooms split by a wall with one door, two furniture blocks.
    fn two_rooms() -> Self {
        let mut p = Self::walled();
        p.fill(0..=GRID - 1, 15..=15, true);
        p.fill(13..=17, 15..=15, false);
        p.fill(5..=8, 5..=8, true);
        p.fill(20..=23, 22..=25, true);
        p.beacons = [[2.0, 6.5], [6.5, 2.0], [1.0, 1.0]];
        p
    }

    /// An L-shaped corridor wrapping a room, with two doors.
    fn corridor() -> Self {
        let mut p = Self::walled();
        p.fill(12..=12, 0..=21, true);
        p.fill(12..=12, 4..=7, false);
        p.fill(12..=GRID - 1, 22..=22, true);
        p.fill(24..=27, 22..=22, false);
        p.fill(20..=23, 10..=13, true);
        p.fill(3..=5, 25..=28, true);
        p.beacons = [[6.8, 6.8], [1.5, 1.5], [4.0, 1.0]];
        p
    }

    /// Whether cell `(row, col)` is blocked; outside the grid counts as blocked.
    pub fn is_occupied(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row >= GRID as isize || col >= GRID as isize {
            return true;
        }
        self.occupied[row as usize * GRID + col as usize]
    }

    pub fn cell_of(p: [f64; 2]) -> (isize, isize) {
        (floor(p[1] / CELL) as isize, floor(p[0] / CELL) as isize)
    }

    pub fn is_free_point(&self, p: [f64; 2]) -> bool {
        let (r, c) = Self::cell_of(p);
        p.iter().all(|v| v.is_finite()) && !self.is_occupied(r, c)
    }

    /// Free cells reachable from the first free cell (4-connectivity).
    pub fn reachable_cells(&self) -> Vec<bool> {
        let mut seen = vec![false; GRID * GRID];
        let Some(start) = self.occupied.iter().position(|o| !o) else { return seen };
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / GRID) as isize, (i % GRID) as isize);
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r + dr, c + dc);
                if !self.is_occupied(nr, nc) {
                    let j = nr as usize * GRID + nc as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        seen
    }

    pub fn free_cells(&self) -> Vec<bool> {
        self.occupied.iter().map(|o| !o).collect()
    }

    /// Distance along unit direction `d` from `p` to the first occupied cell,
    /// or `None` if none is met within `max_t`.
    pub fn cast(&self, p: [f64; 2], d: [f64; 2], max_t: f64) -> Option<f64> {
        let (mut row, mut col) = Self::cell_of(p);
        if self.is_occupied(row, col) {
            return Some(0.0);
        }
        let axis = |pos: f64, dir: f64, cell: isize| -> (isize, f64, f64) {
            if dir > 0.0 {
                (1, ((cell + 1) as f64 * CELL - pos) / dir, CELL / dir)
            } else if dir < 0.0 {
                (-1, (cell as f64 * CELL - pos) / dir, -CELL / dir)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, mut tx, dx) = axis(p[0], d[0], col);
        let (sy, mut ty, dy) = axis(p[1], d[1], row);
        loop {
            let t = if tx < ty {
                col += sx;
                let t = tx;
                tx += dx;
                t
            } else {
                row += sy;
                let t = ty;
                ty += dy;
                t
            };
            if t > max_t {
                return None;
            }
            if self.is_occupied(row, col) {
                return Some(t);
            }
        }
    }

    /// Whether the straight segment `a → b` stays in free cells.
    pub fn segment_free(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = sqrt(dx * dx + dy * dy);
        if len == 0.0 {
            return self.is_free_point(a);
        }
        self.is_free_point(a) && self.cast(a, [dx / len, dy / len], len).is_none()
    }
}

/// A point agent in one of two floor plans, moved by `ℝ² × SO(2)`. The
/// translation is applied in the world frame and the heading rotates
/// independently. Moves whose straight path crosses an occupied cell, or
/// that turn the heading outside `[-max_heading, max_heading]`, are
/// undefined. The default window is `±3π/4`.
#[derive(Debug, Clone)]
pub struct Apartments {
    plans: [FloorPlan; 2],
    max_heading: f64,
}

impl Default for Apartments {
    fn default() -> Self {
        Self::new()
    }
}

impl Apartments {
    pub fn new() -> Self {
        Self { plans: [FloorPlan::two_rooms(), FloorPlan::corridor()], max_heading: 0.75 * PI }
    }

    pub fn with_max_heading(max_heading: f64) -> Self {
        Self { max_heading, ..Self::new() }
    }

    pub fn plan(&self, orbit: u32) -> &FloorPlan {
        &self.plans[orbit as usize]
    }

    /// Side length of the square world.
    pub fn extent(&self) -> f64 {
        GRID as f64 * CELL
    }

    pub fn position(state: &SceneState) -> [f64; 2] {
        let t = state.pose.factor(0).payload();
        [t[0], t[1]]
    }

    pub fn heading(state: &SceneState) -> f64 {
        let r = state.pose.factor(1).payload();
        atan2(r[2], r[0])
    }

    pub fn state(orbit: u32, position: [f64; 2], heading: f64) -> SceneState {
        let pose = GroupElement::from_factors(vec![
            Factor::Translation(position.to_vec()),
            Factor::Rotation2(liegroup::rot2_matrix(heading)),
        ])
        .expect("valid pose");
        SceneState { orbit, pose }
    }
}

impl Generator for Apartments {
    fn id(&self) -> GeneratorId {
        GeneratorId::Apartments
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation2]).expect("valid spec")
    }

    fn obs_dim(&self) -> usize {
        NUM_RAYS + 2 * NUM_BEACONS
    }

    fn num_orbits(&self) -> u32 {
        2
    }

    fn default_move_scale(&self) -> Vec<f64> {
        vec![3.0, 0.5]
    }

    fn resolution_floor(&self) -> f64 {
        1e-6
    }

    fn sample_state(&self, rng: &mut DataRng) -> SceneState {
        let orbit = rng.random_range(0..2);
        let free: Vec<usize> = (0..GRID * GRID).filter(|i| !self.plans[orbit as usize].occupied[*i]).collect();
        let cell = free[rng.random_range(0..free.len())];
        let (r, c) = ((cell / GRID) as f64, (cell % GRID) as f64);
        let p = [(c + rng.random::<f64>()) * CELL, (r + rng.random::<f64>()) * CELL];
        let heading = rng.random_range(-self.max_heading..=self.max_heading);
        Self::state(orbit, p, heading)
    }

    fn is_valid(&self, state: &SceneState) -> bool {
        state.orbit < 2
            && state.pose.matches(&self.group())
            && Self::heading(state).abs() <= self.max_heading
            && self.plan(state.orbit).is_free_point(Self::position(state))
    }

    fn act(&self, g: &GroupElement, state: &SceneState) -> Option<SceneState> {
        if !self.is_valid(state) {
            return None;
        }
        let pose = liegroup::compose(g, &state.pose).ok()?;
        let next = SceneState { orbit: state.orbit, pose };
        let plan = self.plan(state.orbit);
        (self.is_valid(&next) && plan.segment_free(Self::position(state), Self::position(&next))).then_some(next)
    }

    fn observe(&self, state: &SceneState) -> Vec<f64> {
        let plan = self.plan(state.orbit);
        let p = Self::position(state);
        let theta = Self::heading(state);
        let mut out = Vec::with_capacity(self.obs_dim());
        for k in 0..NUM_RAYS {
            let a = theta + TAU * k as f64 / NUM_RAYS as f64;
            let d = plan.cast(p, [cos(a), sin(a)], MAX_RANGE).unwrap_or(MAX_RANGE);
            out.push(d * RAY_SCALE);
        }
        // beacon offsets in the agent frame
        let (c, sn) = (cos(theta), sin(theta));
        for b in &plan.beacons {
            let (dx, dy) = (b[0] - p[0], b[1] - p[1]);
            out.push((c * dx + sn * dy) * BEACON_SCALE);
            out.push((-sn * dx + c * dy) * BEACON_SCALE);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn free_space_is_connected() {
        let gen = Apartments::new();
        for plan in &gen.plans {
            assert_eq!(plan.reachable_cells(), plan.free_cells());
        }
    }

    #[test]
    fn ray_hits_the_wall_at_the_expected_distance() {
        let plan = FloorPlan::walled();
        // from x = 4.1 heading +x, the border cell starts at x = 7.75
        let d = plan.cast([4.1, 4.1], [1.0, 0.0], 10.0).unwrap();
        assert!((d - 3.65).abs() < 1e-12);
        let d = plan.cast([4.1, 4.1], [0.0, -1.0], 10.0).unwrap();
        assert!((d - 3.85).abs() < 1e-12);
        assert!(plan.cast([4.1, 4.1], [1.0, 0.0], 1.0).is_none());
    }

    #[test]
    fn blocked_paths_are_rejected() {
        let gen = Apartments::new();
        // through the dividing wall of the two-room plan away from the door
        let s = Apartments::state(0, [3.5, 1.5], 0.0);
        let g = GroupElement::from_factors(vec![
            Factor::Translation(vec![1.0, 0.0]),
            Factor::Rotation2(liegroup::rot2_matrix(0.0)),
        ])
        .unwrap();
        assert!(gen.act(&g, &s).is_none());
        // through the door
        let s = Apartments::state(0, [3.5, 3.8], 0.0);
        assert!(gen.act(&g, &s).is_some());
    }

    #[test]
    fn pure_rotation_keeps_position() {
        let gen = Apartments::new();
        let s = Apartments::state(1, [5.0, 5.0], 0.1);
        let g = turn(0.7);
        let t = gen.act(&g, &s).unwrap();
        assert_eq!(Apartments::position(&t), Apartments::position(&s));
        assert_ne!(gen.observe(&t), gen.observe(&s));
    }

    fn turn(angle: f64) -> GroupElement {
        GroupElement::from_factors(vec![
            Factor::Translation(vec![0.0, 0.0]),
            Factor::Rotation2(liegroup::rot2_matrix(angle)),
        ])
        .unwrap()
    }

    #[test]
    fn turning_past_the_heading_window_is_rejected() {
        let gen = Apartments::new();
        let s = Apartments::state(0, [1.0, 4.0], 2.0);
        assert!(gen.act(&turn(0.3), &s).is_some());
        assert!(gen.act(&turn(0.5), &s).is_none());
        let mut rng = DataRng::seed_from_u64(4);
        for _ in 0..200 {
            assert!(Apartments::heading(&gen.sample_state(&mut rng)).abs() <= 0.75 * PI);
        }
    }

    #[test]
    fn beacons_are_read_in_the_agent_frame() {
        let gen = Apartments::new();
        // the first two-room beacon sits at (2, 6.5)
        let east = gen.observe(&Apartments::state(0, [2.0, 4.5], 0.0));
        let north = gen.observe(&Apartments::state(0, [2.0, 4.5], PI / 2.0));
        let b = NUM_RAYS;
        assert!((east[b] - 0.0).abs() < 1e-12 && (east[b + 1] - 2.0 * BEACON_SCALE).abs() < 1e-12);
        assert!((north[b] - 2.0 * BEACON_SCALE).abs() < 1e-12 && north[b + 1].abs() < 1e-12);
    }

    #[test]
    fn emitted_endpoints_are_free() {
        let gen = Apartments::new();
        let data = super::super::generate(&gen, 3, 200, None).unwrap();
        for (_, end) in &data.states {
            assert!(gen.is_valid(end));
        }
    }
}
