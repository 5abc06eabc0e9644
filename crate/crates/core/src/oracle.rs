//! Exhaustive checks of the class-pose decomposition on finite groups acting
//! on finite sets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};

/// Feasibility bound on `|𝒳/G| · |G|` for the equivariant-map census.
pub const CENSUS_BOUND: usize = 10_000;

/// A group given by its composition table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    n: usize,
    table: Vec<usize>,
    inverse: Vec<usize>,
    identity: usize,
}

impl FiniteGroup {
    /// Validates a row-major `n×n` table `table[a·n + b] = ab` against the
    /// group axioms.
    pub fn from_table(n: usize, table: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTable("a group has at least one element".into()));
        }
        if table.len() != n * n || table.iter().any(|v| *v >= n) {
            return Err(Error::InvalidTable(format!("expected {n}×{n} entries in 0..{n}")));
        }
        let mul = |a: usize, b: usize| table[a * n + b];
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mul(e, a) == a && mul(a, e) == a))
            .ok_or_else(|| Error::InvalidTable("no identity element".into()))?;
        let mut inverse = vec![0; n];
        for (a, inv) in inverse.iter_mut().enumerate() {
            *inv = (0..n)
                .find(|&b| mul(a, b) == identity && mul(b, a) == identity)
                .ok_or_else(|| Error::InvalidTable(format!("element {a} has no inverse")))?;
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mul(mul(a, b), c) != mul(a, mul(b, c)) {
                        return Err(Error::InvalidTable(format!("({a}·{b})·{c} ≠ {a}·({b}·{c})")));
                    }
                }
            }
        }
        Ok(Self { n, table, inverse, identity })
    }

    /// `ℤ/n` under addition.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTable("ℤ/0 is not finite".into()));
        }
        Self::from_table(n, (0..n * n).map(|i| (i / n + i % n) % n).collect())
    }

    /// Direct product; `(a, b)` has index `a·|B| + b`.
    pub fn product(a: &FiniteGroup, b: &FiniteGroup) -> Result<Self> {
        let n = a.n * b.n;
        let mut table = vec![0; n * n];
        for x in 0..n {
            for y in 0..n {
                let (xa, xb) = (x / b.n, x % b.n);
                let (ya, yb) = (y / b.n, y % b.n);
                table[x * n + y] = a.mul(xa, ya) * b.n + b.mul(xb, yb);
            }
        }
        Self::from_table(n, table)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a * self.n + b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }
}

/// An action `G × 𝒳 → 𝒳` on `𝒳 = {0, …, m−1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteAction {
    group: FiniteGroup,
    m: usize,
    table: Vec<usize>,
}

impl FiniteAction {
    /// Validates a row-major `|G|×m` table `table[g·m + x] = g·x` against the
    /// action axioms.
    pub fn new(group: FiniteGroup, m: usize, table: Vec<usize>) -> Result<Self> {
        let n = group.order();
        if table.len() != n * m || table.iter().any(|v| *v >= m) {
            return Err(Error::InvalidTable(format!("expected {n}×{m} entries in 0..{m}")));
        }
        let act = |g: usize, x: usize| table[g * m + x];
        for x in 0..m {
            if act(group.identity(), x) != x {
                return Err(Error::InvalidTable(format!("identity moves {x}")));
            }
            for g in 0..n {
                for h in 0..n {
                    if act(g, act(h, x)) != act(group.mul(g, h), x) {
                        return Err(Error::InvalidTable(format!("{g}·({h}·{x}) ≠ ({g}{h})·{x}")));
                    }
                }
            }
        }
        Ok(Self { group, m, table })
    }

    /// Every element fixes every point.
    pub fn trivial(group: FiniteGroup, m: usize) -> Result<Self> {
        let n = group.order();
        Self::new(group, m, (0..n * m).map(|i| i % m).collect())
    }

    /// The group acting on itself by left multiplication.
    pub fn regular(group: FiniteGroup) -> Result<Self> {
        let table = group.table().to_vec();
        let n = group.order();
        Self::new(group, n, table)
    }

    /// `ℤ/n` acting on `ℤ/k` through the quotient map, for `k | n`.
    pub fn cyclic_quotient(n: usize, k: usize) -> Result<Self> {
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::InvalidTable(format!("{k} does not divide {n}")));
        }
        Self::new(FiniteGroup::cyclic(n)?, k, (0..n * k).map(|i| (i / k + i % k) % k).collect())
    }

    /// `ℤ/2` swapping `pairs` disjoint pairs `{2i, 2i+1}`.
    pub fn swaps(pairs: usize) -> Result<Self> {
        let m = 2 * pairs;
        Self::new(FiniteGroup::cyclic(2)?, m, (0..2 * m).map(|i| if i < m { i } else { (i - m) ^ 1 }).collect())
    }

    /// `G` acting on `(𝒳/G) × G` by `g·(O, h) = (O, gh)`, with `(O, h)` at
    /// index `O·|G| + h`.
    pub fn orbit_product(group: FiniteGroup, num_orbits: usize) -> Result<Self> {
        let n = group.order();
        let m = num_orbits * n;
        let table = (0..n * m)
            .map(|i| {
                let (g, x) = (i / m, i % m);
                (x / n) * n + group.mul(g, x % n)
            })
            .collect();
        Self::new(group, m, table)
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn set_size(&self) -> usize {
        self.m
    }

    pub fn act(&self, g: usize, x: usize) -> usize {
        self.table[g * self.m + x]
    }

    /// Text form: `group n`, `n` rows of the composition table, `action m`,
    /// `n` rows of the action table. Tokens are whitespace separated; `#`
    /// starts a comment.
    pub fn to_fixture(&self) -> String {
        let n = self.group.order();
        let mut s = String::new();
        let _ = writeln!(s, "group {n}");
        for row in self.group.table().chunks(n) {
            let _ = writeln!(s, "{}", join(row));
        }
        let _ = writeln!(s, "action {}", self.m);
        for row in self.table.chunks(self.m.max(1)) {
            let _ = writeln!(s, "{}", join(row));
        }
        s
    }

    /// Parses [`FiniteAction::to_fixture`] output and validates both tables.
    pub fn from_fixture(text: &str) -> Result<Self> {
        let mut tokens = Tokens(text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace));
        tokens.keyword("group")?;
        let n = tokens.number("group order")?;
        let table = (0..n * n).map(|_| tokens.number("group entry")).collect::<Result<Vec<_>>>()?;
        let group = FiniteGroup::from_table(n, table)?;
        tokens.keyword("action")?;
        let m = tokens.number("set size")?;
        let table = (0..n * m).map(|_| tokens.number("action entry")).collect::<Result<Vec<_>>>()?;
        if let Some(extra) = tokens.0.next() {
            return Err(Error::InvalidTable(format!("trailing token `{extra}`")));
        }
        Self::new(group, m, table)
    }
}

struct Tokens<'a, I: Iterator<Item = &'a str>>(I);

impl<'a, I: Iterator<Item = &'a str>> Tokens<'a, I> {
    fn keyword(&mut self, word: &str) -> Result<()> {
        match self.0.next() {
            Some(w) if w == word => Ok(()),
            other => Err(Error::InvalidTable(format!("expected `{word}`, found {other:?}"))),
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.0
            .next()
            .ok_or_else(|| Error::InvalidTable(format!("missing {what}")))?
            .parse()
            .map_err(|_| Error::InvalidTable(format!("bad {what}")))
    }
}

fn join(row: &[usize]) -> String {
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

/// No non-identity element fixes a point.
pub fn is_free(action: &FiniteAction) -> bool {
    let e = action.group.identity();
    (0..action.group.order()).filter(|&g| g != e).all(|g| (0..action.m).all(|x| action.act(g, x) != x))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Orbits as sorted point lists, ordered by their smallest point.
pub fn orbits(action: &FiniteAction) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..action.m).collect();
    for g in 0..action.group.order() {
        for x in 0..action.m {
            let (a, b) = (find(&mut parent, x), find(&mut parent, action.act(g, x)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; action.m];
    for x in 0..action.m {
        let r = find(&mut parent, x);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(x);
    }
    out
}

/// The isomorphism `(𝒳/G) × G → 𝒳`, `(O, g) ↦ g·s_O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Lowest point of each orbit.
    pub representatives: Vec<usize>,
    /// `forward[O·|G| + g] = g·s_O`.
    pub forward: Vec<usize>,
    /// `backward[x] = (O, g)` with `x = g·s_O`.
    pub backward: Vec<(usize, usize)>,
}

/// Builds the decomposition from lowest-index representatives and checks
/// bijectivity and equivariance over every `(h, (O, g))`.
pub fn verify_decomposition(action: &FiniteAction) -> Result<Decomposition> {
    if !is_free(action) {
        return Err(Error::NotFree);
    }
    let n = action.group.order();
    let representatives: Vec<usize> = orbits(action).iter().map(|o| o[0]).collect();
    let k = representatives.len();
    let forward: Vec<usize> = (0..k * n).map(|i| action.act(i % n, representatives[i / n])).collect();
    let mut backward = vec![(usize::MAX, usize::MAX); action.m];
    for (i, &x) in forward.iter().enumerate() {
        if backward[x].0 != usize::MAX {
            return Err(Error::InvalidTable(format!("point {x} is hit twice")));
        }
        backward[x] = (i / n, i % n);
    }
    if backward.iter().any(|b| b.0 == usize::MAX) {
        return Err(Error::InvalidTable("decomposition is not onto".into()));
    }
    for o in 0..k {
        for g in 0..n {
            for h in 0..n {
                if forward[o * n + action.group.mul(h, g)] != action.act(h, forward[o * n + g]) {
                    return Err(Error::InvalidTable(format!("equivariance fails at h={h}, O={o}, g={g}")));
                }
            }
        }
    }
    Ok(Decomposition { representatives, forward, backward })
}

/// Closed-form count of equivariant self-maps of `(𝒳/G) × G`:
/// `k^k · |G|^k` for `k` orbits.
pub fn equivariant_map_count(num_orbits: usize, group_order: usize) -> Option<u128> {
    let k = u32::try_from(num_orbits).ok()?;
    (num_orbits as u128).checked_pow(k)?.checked_mul((group_order as u128).checked_pow(k)?)
}

/// Enumerates every equivariant self-map of `(𝒳/G) × G` by backtracking
/// over point images, pruning assignments that contradict equivariance, and
/// checks each map has the form `(O, g) ↦ (σ(O), g·h_O)`. Fails when
/// `k·|G|` exceeds [`CENSUS_BOUND`] or more than `max_maps` maps exist.
pub fn enumerate_equivariant_maps(group: &FiniteGroup, num_orbits: usize, max_maps: usize) -> Result<Vec<Vec<usize>>> {
    let n = group.order();
    let m = num_orbits * n;
    if m > CENSUS_BOUND {
        return Err(Error::SizeBoundExceeded { size: m, bound: CENSUS_BOUND });
    }
    let action = FiniteAction::orbit_product(group.clone(), num_orbits)?;
    let mut found = Vec::new();
    let mut f = vec![usize::MAX; m];
    search(&action, 0, &mut f, &mut found, max_maps)?;
    for map in &found {
        for o in 0..num_orbits {
            let (sigma, h) = (map[o * n] / n, map[o * n] % n);
            for g in 0..n {
                if map[o * n + g] != sigma * n + group.mul(g, h) {
                    return Err(Error::InvalidTable(format!("map is not a right multiplication on orbit {o}")));
                }
            }
        }
    }
    Ok(found)
}

fn search(action: &FiniteAction, x: usize, f: &mut Vec<usize>, found: &mut Vec<Vec<usize>>, max: usize) -> Result<()> {
    if x == f.len() {
        if found.len() >= max {
            return Err(Error::SizeBoundExceeded { size: found.len() + 1, bound: max });
        }
        found.push(f.clone());
        return Ok(());
    }
    if f[x] != usize::MAX {
        return search(action, x + 1, f, found, max);
    }
    for y in 0..f.len() {
        // f(x) = y forces f(g·x) = g·y for every g
        let mut assigned = Vec::new();
        let mut ok = true;
        for g in 0..action.group.order() {
            let (gx, gy) = (action.act(g, x), action.act(g, y));
            if f[gx] == usize::MAX {
                f[gx] = gy;
                assigned.push(gx);
            } else if f[gx] != gy {
                ok = false;
                break;
            }
        }
        if ok {
            search(action, x + 1, f, found, max)?;
        }
        for a in assigned {
            f[a] = usize::MAX;
        }
    }
    Ok(())
}

/// Whether `map` permutes the points.
pub fn is_bijective(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    map.iter().all(|&y| y < seen.len() && !core::mem::replace(&mut seen[y], true))
}
