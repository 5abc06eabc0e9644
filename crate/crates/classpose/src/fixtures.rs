//! Finite group actions used by the `oracle` command, and the checks run on
//! each of them.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use classpose_core::oracle::{self, FiniteAction};

use crate::invalid;

/// Fixtures compiled into the binary, all free.
pub const BUILTIN: &[(&str, &str)] = &[
    ("z3_regular", include_str!("../fixtures/z3_regular.txt")),
    ("z5_regular", include_str!("../fixtures/z5_regular.txt")),
    ("z2xz2_regular", include_str!("../fixtures/z2xz2_regular.txt")),
    ("z2xz3_regular", include_str!("../fixtures/z2xz3_regular.txt")),
    ("z2_three_swaps", include_str!("../fixtures/z2_three_swaps.txt")),
    ("z3_two_orbits", include_str!("../fixtures/z3_two_orbits.txt")),
    ("z2xz2_three_orbits", include_str!("../fixtures/z2xz2_three_orbits.txt")),
];

/// The census enumerates every equivariant self-map; stop above this many.
pub const MAX_CENSUS_MAPS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub action: FiniteAction,
}

pub fn builtin() -> anyhow::Result<Vec<Fixture>> {
    BUILTIN.iter().map(|(name, text)| parse(name, text)).collect()
}

pub fn parse(name: &str, text: &str) -> anyhow::Result<Fixture> {
    match FiniteAction::from_fixture(text) {
        Ok(action) => Ok(Fixture { name: name.to_string(), action }),
        Err(e) => invalid(format!("fixture {name}: {e}")),
    }
}

/// Every `*.txt` file in `dir`, sorted by name.
pub fn load_dir(dir: &Path) -> anyhow::Result<Vec<Fixture>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse(&p.file_stem().unwrap_or_default().to_string_lossy(), &text)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Census {
    Matched { count: u128 },
    Mismatch { found: u128, expected: u128 },
    /// Too many maps to enumerate.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureReport {
    pub name: String,
    pub group_order: usize,
    pub set_size: usize,
    pub orbit_count: usize,
    pub free: bool,
    /// `None` when the action is not free and the decomposition was skipped.
    pub decomposition: Option<Result<(), String>>,
    pub census: Option<Census>,
}

impl FixtureReport {
    /// Non-free actions are reported, not failed.
    pub fn passed(&self) -> bool {
        let decomposition_ok = !matches!(self.decomposition, Some(Err(_)));
        let census_ok = !matches!(self.census, Some(Census::Mismatch { .. }));
        decomposition_ok && census_ok
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: |G|={} |X|={} orbits={} free={}",
            self.name, self.group_order, self.set_size, self.orbit_count, self.free
        )?;
        match &self.decomposition {
            None => write!(f, " decomposition=skipped")?,
            Some(Ok(())) => write!(f, " decomposition=ok")?,
            Some(Err(e)) => write!(f, " decomposition=FAILED ({e})")?,
        }
        match &self.census {
            None => {}
            Some(Census::Matched { count }) => write!(f, " census={count} (matches closed form)")?,
            Some(Census::Mismatch { found, expected }) => write!(f, " census=FAILED found {found}, expected {expected}")?,
            Some(Census::Skipped) => write!(f, " census=skipped (too large)")?,
        }
        Ok(())
    }
}

/// Freeness, the decomposition into orbits times group, and the census of
/// equivariant self-maps of that decomposition.
pub fn check(fixture: &Fixture) -> FixtureReport {
    let action = &fixture.action;
    let n = action.group().order();
    let orbit_count = oracle::orbits(action).len();
    let free = oracle::is_free(action);
    let (decomposition, census) = if free {
        let decomposition = oracle::verify_decomposition(action).map(|_| ()).map_err(|e| e.to_string());
        (Some(decomposition), Some(census(action, orbit_count)))
    } else {
        (None, None)
    };
    FixtureReport {
        name: fixture.name.clone(),
        group_order: n,
        set_size: action.set_size(),
        orbit_count,
        free,
        decomposition,
        census,
    }
}

fn census(action: &FiniteAction, k: usize) -> Census {
    let n = action.group().order();
    let expected = match oracle::equivariant_map_count(k, n) {
        Some(c) if c <= MAX_CENSUS_MAPS as u128 && k * n <= oracle::CENSUS_BOUND => c,
        _ => return Census::Skipped,
    };
    match oracle::enumerate_equivariant_maps(action.group(), k, MAX_CENSUS_MAPS) {
        Ok(maps) if maps.len() as u128 == expected => Census::Matched { count: expected },
        Ok(maps) => Census::Mismatch { found: maps.len() as u128, expected },
        Err(_) => Census::Mismatch { found: 0, expected },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_fixtures_parse_and_pass() {
        let reports: Vec<_> = builtin().unwrap().iter().map(check).collect();
        assert_eq!(reports.len(), BUILTIN.len());
        for r in &reports {
            assert!(r.free && r.passed(), "{r}");
        }
        let swaps = reports.iter().find(|r| r.name == "z2_three_swaps").unwrap();
        assert_eq!(swaps.orbit_count, 3);
        assert_eq!(swaps.census, Some(Census::Matched { count: 27 * 8 }));
        let klein = reports.iter().find(|r| r.name == "z2xz2_regular").unwrap();
        assert_eq!(klein.census, Some(Census::Matched { count: 4 }));
    }

    #[test]
    fn two_orbits_of_z2_give_sixteen_maps() {
        let f = Fixture { name: "pairs".into(), action: FiniteAction::swaps(2).unwrap() };
        assert_eq!(check(&f).census, Some(Census::Matched { count: 16 }));
    }

    #[test]
    fn non_free_fixture_skips_decomposition() {
        let f = parse("quotient", &FiniteAction::cyclic_quotient(4, 2).unwrap().to_fixture()).unwrap();
        let r = check(&f);
        assert!(!r.free);
        assert_eq!(r.decomposition, None);
        assert!(r.passed());
        assert!(r.to_string().contains("free=false decomposition=skipped"));
    }

    #[test]
    fn malformed_fixture_is_a_validation_error() {
        let err = parse("bad", "group 2\n0 1\n1 1\naction 0\n").unwrap_err();
        assert!(err.is::<crate::ValidationError>());
    }
}
