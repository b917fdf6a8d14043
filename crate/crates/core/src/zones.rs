//! Difference-bound matrices over integer clock constants, finite unions of
//! them (federations), and the timed-predecessor operator used by the game
//! solver.
//!
//! Index 0 of every matrix is the reference clock; entry `(i, j)` bounds
//! `x_i - x_j`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound on a clock difference: `< n`, `<= n` or `< inf`.
///
/// Encoded as `2n + 1` for `<= n` and `2n` for `< n` so that the natural
/// integer order is the tightness order.
#[derive(Copy, Clone, PartialEq, Eq, Hash)]
pub struct Bound(i64);

impl Bound {
    pub const INF: Bound = Bound(i64::MAX);
    pub const LE_ZERO: Bound = Bound(1);
    pub const LT_ZERO: Bound = Bound(0);

    pub fn le(n: i64) -> Bound {
        Bound(2 * n + 1)
    }

    pub fn lt(n: i64) -> Bound {
        Bound(2 * n)
    }

    pub fn new(n: i64, strict: bool) -> Bound {
        if strict {
            Bound::lt(n)
        } else {
            Bound::le(n)
        }
    }

    pub fn is_inf(self) -> bool {
        self == Bound::INF
    }

    pub fn is_strict(self) -> bool {
        !self.is_inf() && self.0 & 1 == 0
    }

    /// Constant of a finite bound.
    pub fn value(self) -> i64 {
        debug_assert!(!self.is_inf());
        self.0 >> 1
    }

    /// Saturating sum of two bounds.
    pub fn add(self, other: Bound) -> Bound {
        if self.is_inf() || other.is_inf() {
            Bound::INF
        } else {
            Bound(self.0 + other.0 - ((self.0 | other.0) & 1))
        }
    }

    /// Bound of the complementary half-space: `!(x - y <= n)` is `y - x < -n`.
    pub fn complement(self) -> Bound {
        debug_assert!(!self.is_inf());
        Bound(1 - self.0)
    }

    /// Whether a real value `v` satisfies `v ≺ bound`.
    pub fn admits(self, v: f64) -> bool {
        if self.is_inf() {
            return true;
        }
        let n = self.value() as f64;
        if self.is_strict() {
            v < n
        } else {
            v <= n
        }
    }

    /// Whether `num / den` satisfies the bound, exactly (`den > 0`).
    pub fn admits_ratio(self, num: i128, den: i128) -> bool {
        if self.is_inf() {
            return true;
        }
        let rhs = self.value() as i128 * den;
        if self.is_strict() {
            num < rhs
        } else {
            num <= rhs
        }
    }

    fn raw(self) -> i64 {
        self.0
    }
}

impl fmt::Debug for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "<inf")
        } else if self.is_strict() {
            write!(f, "<{}", self.value())
        } else {
            write!(f, "<={}", self.value())
        }
    }
}

impl std::str::FromStr for Bound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "<inf" {
            return Ok(Bound::INF);
        }
        let (strict, rest) = if let Some(r) = s.strip_prefix("<=") {
            (false, r)
        } else if let Some(r) = s.strip_prefix('<') {
            (true, r)
        } else {
            return Err(format!("bad bound `{s}`"));
        };
        let n: i64 = rest
            .trim()
            .parse()
            .map_err(|_| format!("bad bound `{s}`"))?;
        Ok(Bound::new(n, strict))
    }
}

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A convex set of clock valuations in canonical DBM form.
///
/// Values of this type are always canonical and nonempty; operations that can
/// produce the empty set return `Option<Zone>`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "ZoneRepr", try_from = "ZoneRepr")]
pub struct Zone {
    dim: usize,
    m: Vec<Bound>,
}

impl Zone {
    /// All nonnegative valuations of `clocks` clocks.
    pub fn universe(clocks: usize) -> Zone {
        let dim = clocks + 1;
        let mut m = vec![Bound::INF; dim * dim];
        for j in 0..dim {
            m[j] = Bound::LE_ZERO;
            m[j * dim + j] = Bound::LE_ZERO;
        }
        Zone { dim, m }
    }

    /// The single valuation with every clock at zero.
    pub fn origin(clocks: usize) -> Zone {
        let dim = clocks + 1;
        Zone {
            dim,
            m: vec![Bound::LE_ZERO; dim * dim],
        }
    }

    /// Builds a zone from raw (possibly non-canonical) constraints `x_i - x_j ≺ b`
    /// on top of the nonnegative orthant.
    pub fn from_constraints(clocks: usize, constraints: &[(usize, usize, Bound)]) -> Option<Zone> {
        let mut raw = RawDbm::universe(clocks + 1);
        for &(i, j, b) in constraints {
            raw.tighten(i, j, b);
        }
        raw.close()
    }

    /// Number of clocks, excluding the reference clock.
    pub fn clocks(&self) -> usize {
        self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Bound {
        self.m[i * self.dim + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, b: Bound) {
        self.m[i * self.dim + j] = b;
    }

    /// Intersection with a single constraint `x_i - x_j ≺ b`.
    pub fn constrain(&self, i: usize, j: usize, b: Bound) -> Option<Zone> {
        if b >= self.get(i, j) {
            return Some(self.clone());
        }
        // Infeasible if the opposite bound plus b is negative.
        if b.add(self.get(j, i)) < Bound::LE_ZERO {
            return None;
        }
        let mut z = self.clone();
        z.set(i, j, b);
        let dim = self.dim;
        // Incremental closure through the tightened edge.
        for k in 0..dim {
            for l in 0..dim {
                let via = z.get(k, i).add(b).add(z.get(j, l));
                if via < z.get(k, l) {
                    z.set(k, l, via);
                }
            }
        }
        Some(z)
    }

    pub fn intersect(&self, other: &Zone) -> Option<Zone> {
        assert_eq!(self.dim, other.dim, "zone dimension mismatch");
        let raw = RawDbm {
            dim: self.dim,
            m: self
                .m
                .iter()
                .zip(&other.m)
                .map(|(a, b)| (*a).min(*b))
                .collect(),
        };
        if raw.m == self.m {
            return Some(self.clone());
        }
        if raw.m == other.m {
            return Some(other.clone());
        }
        raw.dirty_close()
    }

    pub fn intersects(&self, other: &Zone) -> bool {
        // Quick reject on a violated pair before the cubic check.
        for i in 0..self.dim {
            for j in 0..self.dim {
                if self.get(i, j).add(other.get(j, i)) < Bound::LE_ZERO {
                    return false;
                }
            }
        }
        self.intersect(other).is_some()
    }

    /// Image under resetting every clock in `clocks` (1-based indices) to zero.
    pub fn reset(&self, clocks: &[usize]) -> Zone {
        let mut z = self.clone();
        let dim = self.dim;
        for &x in clocks {
            for j in 0..dim {
                let b0j = z.get(0, j);
                let bj0 = z.get(j, 0);
                z.set(x, j, b0j);
                z.set(j, x, bj0);
            }
            z.set(x, x, Bound::LE_ZERO);
        }
        z
    }

    /// Removes all constraints on `clocks` (existential projection), keeping
    /// them nonnegative.
    pub fn free(&self, clocks: &[usize]) -> Zone {
        let mut z = self.clone();
        let dim = self.dim;
        for &x in clocks {
            for j in 0..dim {
                if j != x {
                    z.set(x, j, Bound::INF);
                    let bj0 = z.get(j, 0);
                    z.set(j, x, bj0);
                }
            }
        }
        z
    }

    /// Delay successors.
    pub fn up(&self) -> Zone {
        let mut z = self.clone();
        for i in 1..self.dim {
            z.set(i, 0, Bound::INF);
        }
        z
    }

    /// Delay predecessors, staying in the nonnegative orthant.
    pub fn down(&self) -> Zone {
        let mut z = self.clone();
        for j in 1..self.dim {
            let mut b = Bound::LE_ZERO;
            for i in 1..self.dim {
                b = b.min(self.get(i, j));
            }
            z.set(0, j, b);
        }
        z
    }

    /// Inclusion test `self ⊆ other`.
    pub fn is_subset(&self, other: &Zone) -> bool {
        self.m.iter().zip(&other.m).all(|(a, b)| a <= b)
    }

    /// `self ∖ other` as a list of pairwise-disjoint zones.
    pub fn subtract(&self, other: &Zone) -> Vec<Zone> {
        if !self.intersects(other) {
            return vec![self.clone()];
        }
        if self.is_subset(other) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut rest = self.clone();
        for (i, j, b) in other.split_constraints() {
            if b >= rest.get(i, j) {
                continue;
            }
            if let Some(piece) = rest.constrain(j, i, b.complement()) {
                out.push(piece);
            }
            match rest.constrain(i, j, b) {
                Some(r) => rest = r,
                None => return out,
            }
        }
        out
    }

    /// Non-redundant constraints including nonnegativity, tightest first
    /// eliminated greedily; their conjunction is this zone.
    fn split_constraints(&self) -> Vec<(usize, usize, Bound)> {
        let d = self.dim;
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j && !self.get(i, j).is_inf() {
                    kept.push((i, j));
                }
            }
        }
        let mut k = 0;
        let mut g = vec![Bound::INF; d * d];
        while k < kept.len() {
            g.iter_mut().for_each(|b| *b = Bound::INF);
            for i in 0..d {
                g[i * d + i] = Bound::LE_ZERO;
            }
            for (n, &(i, j)) in kept.iter().enumerate() {
                if n != k {
                    g[i * d + j] = self.get(i, j);
                }
            }
            let (ti, tj) = kept[k];
            for via in 0..d {
                for i in 0..d {
                    let ik = g[i * d + via];
                    if ik.is_inf() {
                        continue;
                    }
                    for j in 0..d {
                        let c = ik.add(g[via * d + j]);
                        if c < g[i * d + j] {
                            g[i * d + j] = c;
                        }
                    }
                }
            }
            if g[ti * d + tj] <= self.get(ti, tj) {
                kept.remove(k);
            } else {
                k += 1;
            }
        }
        kept.into_iter()
            .map(|(i, j)| (i, j, self.get(i, j)))
            .collect()
    }

    /// Smallest zone containing both.
    pub fn hull(&self, other: &Zone) -> Zone {
        Zone {
            dim: self.dim,
            m: self
                .m
                .iter()
                .zip(&other.m)
                .map(|(a, b)| *a.max(b))
                .collect(),
        }
    }

    /// Whether the closures of the two zones can meet (a cheap necessary
    /// condition for a convex union).
    fn may_touch(&self, other: &Zone) -> bool {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                let a = self.get(i, j);
                let b = other.get(j, i);
                if !a.is_inf() && !b.is_inf() && a.value() + b.value() < 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Membership of a real valuation (one entry per clock).
    pub fn contains(&self, v: &[f64]) -> bool {
        debug_assert_eq!(v.len() + 1, self.dim);
        let val = |k: usize| if k == 0 { 0.0 } else { v[k - 1] };
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j && !self.get(i, j).admits(val(i) - val(j)) {
                    return false;
                }
            }
        }
        true
    }

    /// Exact membership of the rational valuation `num[k] / den`.
    pub fn contains_ratio(&self, num: &[i64], den: i64) -> bool {
        debug_assert_eq!(num.len() + 1, self.dim);
        let val = |k: usize| if k == 0 { 0i128 } else { num[k - 1] as i128 };
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j && !self.get(i, j).admits_ratio(val(i) - val(j), den as i128) {
                    return false;
                }
            }
        }
        true
    }

    /// Largest finite constant in absolute value.
    pub fn max_constant(&self) -> i64 {
        self.m
            .iter()
            .filter(|b| !b.is_inf())
            .map(|b| b.value().abs())
            .max()
            .unwrap_or(0)
    }

    /// Whether the time-elapse ray from `point` stays inside forever.
    pub fn is_unbounded(&self) -> bool {
        (1..self.dim).all(|i| self.get(i, 0).is_inf())
    }

    /// Non-redundant-looking constraints other than the implicit nonnegativity,
    /// as `(i, j, bound)` triples.
    pub fn constraints(&self) -> Vec<(usize, usize, Bound)> {
        let mut out = Vec::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                let b = self.get(i, j);
                if b.is_inf() || (i == 0 && b == Bound::LE_ZERO) {
                    continue;
                }
                out.push((i, j, b));
            }
        }
        out
    }

    /// A minimal subset of [`Zone::constraints`] whose closure is this zone.
    /// Greedy removal in row-major order, so the result is deterministic.
    pub fn minimal_constraints(&self) -> Vec<(usize, usize, Bound)> {
        let mut kept = self.constraints();
        let mut k = 0;
        while k < kept.len() {
            let mut trial = kept.clone();
            trial.remove(k);
            match Zone::from_constraints(self.clocks(), &trial) {
                Some(z) if z == *self => kept = trial,
                _ => k += 1,
            }
        }
        kept
    }

    /// Delays `d >= 0` with `v + d` in the zone, as `(lo, lo_strict, hi, hi_strict)`;
    /// `hi` is `f64::INFINITY` when unbounded.
    pub fn delay_interval(&self, v: &[f64]) -> Option<(f64, bool, f64, bool)> {
        let (mut lo, mut lo_strict) = (0.0f64, false);
        let (mut hi, mut hi_strict) = (f64::INFINITY, false);
        for i in 1..self.dim {
            let up = self.get(i, 0);
            if !up.is_inf() {
                let h = up.value() as f64 - v[i - 1];
                if h < hi || (h == hi && up.is_strict()) {
                    hi = h;
                    hi_strict = up.is_strict();
                }
            }
            let low = self.get(0, i);
            let l = -(low.value() as f64) - v[i - 1];
            if l > lo || (l == lo && low.is_strict()) {
                lo = l;
                lo_strict = low.is_strict();
            }
            for j in 1..self.dim {
                if i != j && !self.get(i, j).admits(v[i - 1] - v[j - 1]) {
                    return None;
                }
            }
        }
        let empty = lo > hi || (lo == hi && (lo_strict || hi_strict));
        (!empty).then_some((lo, lo_strict, hi, hi_strict))
    }

    /// Integer delays `d >= 0` with `v + d` in the zone, where valuations
    /// count units of `1 / den` and zone constants are whole units.
    /// Returns an inclusive range; `i64::MAX` stands for unbounded.
    pub fn delay_range_int(&self, v: &[i64], den: i64) -> Option<(i64, i64)> {
        let (mut lo, mut hi) = (0i64, i64::MAX);
        for i in 1..self.dim {
            let up = self.get(i, 0);
            if !up.is_inf() {
                let h = up.value() * den - v[i - 1] - i64::from(up.is_strict());
                hi = hi.min(h);
            }
            let low = self.get(0, i);
            let l = -low.value() * den - v[i - 1] + i64::from(low.is_strict());
            lo = lo.max(l);
            for j in 1..self.dim {
                if i != j
                    && !self
                        .get(i, j)
                        .admits_ratio((v[i - 1] - v[j - 1]) as i128, den as i128)
                {
                    return None;
                }
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Renders the zone as a conjunction using the given clock names.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ZoneDisplay<'a> {
        ZoneDisplay { zone: self, names }
    }
}

impl fmt::Debug for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..self.dim).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.display(&names))
    }
}

pub struct ZoneDisplay<'a> {
    zone: &'a Zone,
    names: &'a [String],
}

impl fmt::Display for ZoneDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.zone;
        let name = |k: usize| self.names[k - 1].as_str();
        let mut parts = Vec::new();
        for (i, j, b) in z.minimal_constraints() {
            let op = if b.is_strict() { "<" } else { "<=" };
            let n = b.value();
            match (i, j) {
                (0, 0) => {}
                (0, j) => {
                    if n == 0 && !b.is_strict() {
                        continue;
                    }
                    // -x_j ≺ n  <=>  -n ≺ x_j
                    parts.push(format!("{}{}{}", -n, op, name(j)));
                }
                (i, 0) => parts.push(format!("{}{}{}", name(i), op, n)),
                (i, j) => parts.push(format!("{}-{}{}{}", name(i), name(j), op, n)),
            }
        }
        if parts.is_empty() {
            write!(f, "true")
        } else {
            write!(f, "{}", parts.join(" && "))
        }
    }
}

/// Working matrix that may be non-canonical or empty.
struct RawDbm {
    dim: usize,
    m: Vec<Bound>,
}

impl RawDbm {
    fn universe(dim: usize) -> RawDbm {
        let z = Zone::universe(dim - 1);
        RawDbm { dim, m: z.m }
    }

    fn tighten(&mut self, i: usize, j: usize, b: Bound) {
        let k = i * self.dim + j;
        if b < self.m[k] {
            self.m[k] = b;
        }
    }

    /// Floyd–Warshall closure; `None` when a negative cycle exists.
    fn close(mut self) -> Option<Zone> {
        let dim = self.dim;
        for k in 0..dim {
            for i in 0..dim {
                let ik = self.m[i * dim + k];
                if ik.is_inf() {
                    continue;
                }
                for j in 0..dim {
                    let via = ik.add(self.m[k * dim + j]);
                    if via < self.m[i * dim + j] {
                        self.m[i * dim + j] = via;
                    }
                }
            }
            if self.m[k * dim + k] < Bound::LE_ZERO {
                return None;
            }
        }
        for i in 0..dim {
            if self.m[i * dim + i] < Bound::LE_ZERO {
                return None;
            }
        }
        Some(Zone { dim, m: self.m })
    }

    fn dirty_close(self) -> Option<Zone> {
        self.close()
    }
}

/// Canonical form of an arbitrary raw matrix given row-major; `None` if empty.
///
/// The matrix must have `dim * dim` entries. Non-negativity of clocks is not
/// added implicitly.
pub fn canonicalize(dim: usize, raw: &[Bound]) -> Option<Zone> {
    assert_eq!(raw.len(), dim * dim);
    let mut m = raw.to_vec();
    for i in 0..dim {
        m[i * dim + i] = m[i * dim + i].min(Bound::LE_ZERO);
    }
    RawDbm { dim, m }.close()
}

/// Finite union of zones over a common clock set.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FederationRepr", try_from = "FederationRepr")]
pub struct Federation {
    clocks: usize,
    zones: Vec<Zone>,
}

impl Federation {
    pub fn empty(clocks: usize) -> Federation {
        Federation {
            clocks,
            zones: Vec::new(),
        }
    }

    pub fn universe(clocks: usize) -> Federation {
        Federation::from_zone(Zone::universe(clocks))
    }

    pub fn from_zone(z: Zone) -> Federation {
        Federation {
            clocks: z.clocks(),
            zones: vec![z],
        }
    }

    pub fn from_zones(clocks: usize, zones: Vec<Zone>) -> Federation {
        let mut f = Federation { clocks, zones };
        f.reduce();
        f
    }

    pub fn from_option(clocks: usize, z: Option<Zone>) -> Federation {
        Federation {
            clocks,
            zones: z.into_iter().collect(),
        }
    }

    pub fn clocks(&self) -> usize {
        self.clocks
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn into_zones(self) -> Vec<Zone> {
        self.zones
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    /// Drops members included in another member.
    pub fn reduce(&mut self) {
        let n = self.zones.len();
        if n < 2 {
            return;
        }
        let mut keep = vec![true; n];
        for i in 0..n {
            if !keep[i] {
                continue;
            }
            for j in 0..n {
                if i != j && keep[j] && self.zones[i].is_subset(&self.zones[j]) {
                    keep[i] = false;
                    break;
                }
            }
        }
        let mut k = 0;
        self.zones.retain(|_| {
            let r = keep[k];
            k += 1;
            r
        });
    }

    /// [`Federation::reduce`] plus replacing pairs of zones by their hull
    /// whenever the hull adds no points.
    pub fn compact(&mut self) {
        self.reduce();
        let mut i = 0;
        while i < self.zones.len() {
            let mut merged = false;
            for j in (i + 1)..self.zones.len() {
                let (a, b) = (&self.zones[i], &self.zones[j]);
                if !a.may_touch(b) {
                    continue;
                }
                let h = a.hull(b);
                let exact = h.subtract(a).iter().all(|piece| piece.is_subset(b));
                if exact {
                    self.zones.retain(|z| !z.is_subset(&h));
                    self.zones.push(h);
                    merged = true;
                    break;
                }
            }
            if merged {
                i = 0;
            } else {
                i += 1;
            }
        }
    }

    pub fn push(&mut self, z: Zone) {
        debug_assert_eq!(z.clocks(), self.clocks);
        if self.zones.iter().any(|y| z.is_subset(y)) {
            return;
        }
        self.zones.retain(|y| !y.is_subset(&z));
        self.zones.push(z);
    }

    pub fn union(&self, other: &Federation) -> Federation {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn union_with(&mut self, other: &Federation) {
        assert_eq!(self.clocks, other.clocks, "federation dimension mismatch");
        for z in &other.zones {
            self.push(z.clone());
        }
    }

    pub fn intersect(&self, other: &Federation) -> Federation {
        assert_eq!(self.clocks, other.clocks, "federation dimension mismatch");
        let mut out = Federation::empty(self.clocks);
        for a in &self.zones {
            for b in &other.zones {
                if let Some(z) = a.intersect(b) {
                    out.push(z);
                }
            }
        }
        out
    }

    pub fn intersect_zone(&self, z: &Zone) -> Federation {
        let mut out = Federation::empty(self.clocks);
        for a in &self.zones {
            if let Some(c) = a.intersect(z) {
                out.push(c);
            }
        }
        out
    }

    pub fn subtract_zone(&self, z: &Zone) -> Federation {
        let mut out = Federation::empty(self.clocks);
        for a in &self.zones {
            for piece in a.subtract(z) {
                out.push(piece);
            }
        }
        out
    }

    /// Exact set difference.
    pub fn subtract(&self, other: &Federation) -> Federation {
        assert_eq!(self.clocks, other.clocks, "federation dimension mismatch");
        let mut cur = self.clone();
        for z in &other.zones {
            if cur.is_empty() {
                break;
            }
            cur = cur.subtract_zone(z);
        }
        cur.compact();
        cur
    }

    /// `self ⊆ other` as point sets.
    pub fn is_subset(&self, other: &Federation) -> bool {
        assert_eq!(self.clocks, other.clocks, "federation dimension mismatch");
        self.zones.iter().all(|a| {
            other.zones.iter().any(|b| a.is_subset(b))
                || Federation::from_zone(a.clone()).subtract(other).is_empty()
        })
    }

    pub fn set_eq(&self, other: &Federation) -> bool {
        self.is_subset(other) && other.is_subset(self)
    }

    pub fn up(&self) -> Federation {
        Federation::from_zones(self.clocks, self.zones.iter().map(Zone::up).collect())
    }

    pub fn down(&self) -> Federation {
        Federation::from_zones(self.clocks, self.zones.iter().map(Zone::down).collect())
    }

    pub fn reset(&self, clocks: &[usize]) -> Federation {
        Federation::from_zones(
            self.clocks,
            self.zones.iter().map(|z| z.reset(clocks)).collect(),
        )
    }

    pub fn free(&self, clocks: &[usize]) -> Federation {
        Federation::from_zones(
            self.clocks,
            self.zones.iter().map(|z| z.free(clocks)).collect(),
        )
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.zones.iter().any(|z| z.contains(v))
    }

    pub fn contains_ratio(&self, num: &[i64], den: i64) -> bool {
        self.zones.iter().any(|z| z.contains_ratio(num, den))
    }

    /// Timed predecessors of `goal` avoiding `avoid`:
    /// `{u | ∃d ≥ 0. u+d ∈ goal ∧ ∀d' ∈ [0, d]. u+d' ∉ avoid}`.
    pub fn pred_t(goal: &Federation, avoid: &Federation) -> Federation {
        assert_eq!(goal.clocks, avoid.clocks, "federation dimension mismatch");
        if goal.is_empty() {
            return Federation::empty(goal.clocks);
        }
        let mut acc: Option<Federation> = None;
        for b in &avoid.zones {
            let part = pred_t_convex(goal, b);
            acc = Some(match acc {
                None => part,
                Some(prev) => prev.intersect(&part),
            });
            if acc.as_ref().is_some_and(Federation::is_empty) {
                break;
            }
        }
        acc.unwrap_or_else(|| goal.down())
    }
}

/// `pred_t` against a single convex avoid set: along any delay line a convex
/// set is met in one interval, so points of `↓B ∖ B` on the line are exactly
/// those before the entry into `B`.
fn pred_t_convex(goal: &Federation, avoid: &Zone) -> Federation {
    let avoid_down = avoid.down();
    let mut out = Federation::empty(goal.clocks);
    for g in &goal.zones {
        for piece in g.down().subtract(&avoid_down) {
            out.push(piece);
        }
        if let Some(gb) = g.intersect(&avoid_down) {
            for piece in gb.subtract(avoid) {
                out.push(piece.down());
            }
        }
    }
    out
}

impl fmt::Debug for Federation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.zones.is_empty() {
            return write!(f, "false");
        }
        let parts: Vec<String> = self.zones.iter().map(|z| format!("({z:?})")).collect();
        write!(f, "{}", parts.join(" || "))
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.raw().cmp(&other.raw())
    }
}

#[derive(Serialize, Deserialize)]
struct ZoneRepr {
    clocks: usize,
    constraints: Vec<(usize, usize, Bound)>,
}

impl From<Zone> for ZoneRepr {
    fn from(z: Zone) -> ZoneRepr {
        ZoneRepr {
            clocks: z.clocks(),
            constraints: z.minimal_constraints(),
        }
    }
}

impl TryFrom<ZoneRepr> for Zone {
    type Error = String;

    fn try_from(r: ZoneRepr) -> Result<Zone, String> {
        if let Some(&(i, j, _)) = r
            .constraints
            .iter()
            .find(|(i, j, _)| *i > r.clocks || *j > r.clocks || i == j)
        {
            return Err(format!("constraint index ({i}, {j}) out of range"));
        }
        Zone::from_constraints(r.clocks, &r.constraints).ok_or_else(|| "empty zone".to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct FederationRepr {
    clocks: usize,
    zones: Vec<Zone>,
}

impl From<Federation> for FederationRepr {
    fn from(f: Federation) -> FederationRepr {
        FederationRepr {
            clocks: f.clocks,
            zones: f.zones,
        }
    }
}

impl TryFrom<FederationRepr> for Federation {
    type Error = String;

    fn try_from(r: FederationRepr) -> Result<Federation, String> {
        if r.zones.iter().any(|z| z.clocks() != r.clocks) {
            return Err("zone dimension mismatch".into());
        }
        Ok(Federation::from_zones(r.clocks, r.zones))
    }
}
