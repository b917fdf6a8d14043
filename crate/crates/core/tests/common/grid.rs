//! Brute-force point-set semantics for zones and federations.
//!
//! Sets are kept as lists of raw constraints and evaluated directly on
//! rational points, so nothing here goes through DBM closure. With at most
//! three clocks and integer constants, every region contains a point whose
//! coordinates are multiples of 1/4, so `DEN = 4` grids are exhaustive.
//! Delays are scanned at 1/8 steps, which visits every region a delay line
//! from a 1/4 point passes through. Clocks beyond the grid extent all fall
//! in classes that already occur inside it.

use rand::Rng;
use tgasched::zones::{Bound, Federation, Zone};

pub const DEN: i64 = 4;
pub const FINE: i64 = 8;

/// `x_i - x_j < n` (strict) or `<= n`; index 0 is the constant zero.
#[derive(Clone, Copy, Debug)]
pub struct Con {
    pub i: usize,
    pub j: usize,
    pub n: i64,
    pub strict: bool,
}

#[derive(Clone, Debug)]
pub struct RawZone {
    pub clocks: usize,
    pub cons: Vec<Con>,
}

#[derive(Clone, Debug)]
pub struct RawFed {
    pub clocks: usize,
    pub zones: Vec<RawZone>,
}

impl RawZone {
    /// Membership of `num / den`.
    pub fn holds(&self, num: &[i64], den: i64) -> bool {
        let v = |k: usize| if k == 0 { 0 } else { num[k - 1] };
        num.iter().all(|&x| x >= 0)
            && self.cons.iter().all(|c| {
                let lhs = v(c.i) - v(c.j);
                let rhs = c.n * den;
                if c.strict {
                    lhs < rhs
                } else {
                    lhs <= rhs
                }
            })
    }

    pub fn zone(&self) -> Option<Zone> {
        let cons: Vec<_> = self
            .cons
            .iter()
            .map(|c| (c.i, c.j, Bound::new(c.n, c.strict)))
            .collect();
        Zone::from_constraints(self.clocks, &cons)
    }
}

impl RawFed {
    pub fn holds(&self, num: &[i64], den: i64) -> bool {
        self.zones.iter().any(|z| z.holds(num, den))
    }

    pub fn federation(&self) -> Federation {
        Federation::from_zones(
            self.clocks,
            self.zones.iter().filter_map(RawZone::zone).collect(),
        )
    }
}

pub fn random_con(rng: &mut impl Rng, clocks: usize, maxc: i64) -> Con {
    let strict = rng.gen_bool(0.5);
    let x = rng.gen_range(1..=clocks);
    match rng.gen_range(0..3) {
        0 => Con {
            i: x,
            j: 0,
            n: rng.gen_range(0..=maxc),
            strict,
        },
        1 => Con {
            i: 0,
            j: x,
            n: -rng.gen_range(0..=maxc),
            strict,
        },
        _ if clocks > 1 => {
            let mut y = rng.gen_range(1..=clocks);
            while y == x {
                y = rng.gen_range(1..=clocks);
            }
            Con {
                i: x,
                j: y,
                n: rng.gen_range(-maxc..=maxc),
                strict,
            }
        }
        _ => Con {
            i: x,
            j: 0,
            n: rng.gen_range(0..=maxc),
            strict,
        },
    }
}

/// A random zone, possibly empty.
pub fn random_zone(rng: &mut impl Rng, clocks: usize, maxc: i64) -> RawZone {
    let k = rng.gen_range(1..=2 * clocks + 1);
    RawZone {
        clocks,
        cons: (0..k).map(|_| random_con(rng, clocks, maxc)).collect(),
    }
}

/// A random zone that is not empty.
pub fn random_nonempty_zone(rng: &mut impl Rng, clocks: usize, maxc: i64) -> RawZone {
    loop {
        let z = random_zone(rng, clocks, maxc);
        if z.zone().is_some() {
            return z;
        }
    }
}

pub fn random_fed(rng: &mut impl Rng, clocks: usize, maxc: i64, max_zones: usize) -> RawFed {
    let n = rng.gen_range(0..=max_zones);
    RawFed {
        clocks,
        zones: (0..n).map(|_| random_zone(rng, clocks, maxc)).collect(),
    }
}

/// Largest grid coordinate, in whole units. Classes that involve diagonal
/// constraints can need coordinates up to about twice the constant.
pub fn extent(maxc: i64) -> i64 {
    2 * maxc + 2
}

/// Every point of the `1/DEN` grid in `[0, extent]^clocks`, as numerators,
/// with a dense index.
pub struct Grid {
    pub clocks: usize,
    pub maxc: i64,
    pub top: i64,
    pub points: Vec<Vec<i64>>,
}

impl Grid {
    pub fn new(clocks: usize, maxc: i64) -> Grid {
        let top = extent(maxc) * DEN;
        let mut points = vec![vec![]];
        for _ in 0..clocks {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..=top).map(move |x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        Grid {
            clocks,
            maxc,
            top,
            points,
        }
    }

    /// Position of a grid point in `points`.
    pub fn index(&self, p: &[i64]) -> usize {
        p.iter()
            .fold(0, |acc, &x| acc * (self.top as usize + 1) + x as usize)
    }
}

/// Truth value per grid point, in `Grid::points` order.
pub type Table = Vec<bool>;

/// Walks every delay line through the grid at `1/FINE` steps. `step` gets
/// the previous value in walking order and the fine point, and returns the
/// value at that point. Walks run until every clock is past the extent, where
/// the region no longer changes.
fn scan_lines(g: &Grid, backward: bool, step: impl Fn(Option<bool>, &[i64]) -> bool) -> Table {
    let ratio = FINE / DEN;
    let last = (extent(g.maxc) + 1) * FINE;
    let mut table = vec![false; g.points.len()];
    let mut q = vec![0; g.clocks];
    let mut coarse = vec![0; g.clocks];
    for start in &g.points {
        if start.iter().all(|&x| x != 0) {
            continue;
        }
        let mut prev = None;
        for i in 0..=last {
            let k = if backward { last - i } else { i };
            for (d, &x) in start.iter().enumerate() {
                q[d] = x * ratio + k;
            }
            let v = step(prev, &q);
            prev = Some(v);
            if k % ratio == 0 && q.iter().all(|&x| x <= g.top * ratio) {
                for d in 0..g.clocks {
                    coarse[d] = q[d] / ratio;
                }
                table[g.index(&coarse)] = v;
            }
        }
    }
    table
}

/// `z↑`: some earlier point on the delay line lies in `z`.
pub fn up_table(z: &RawFed, g: &Grid) -> Table {
    scan_lines(g, false, |prev, q| prev == Some(true) || z.holds(q, FINE))
}

/// `z↓`: some later point on the delay line lies in `z`.
pub fn down_table(z: &RawFed, g: &Grid) -> Table {
    scan_lines(g, true, |prev, q| prev == Some(true) || z.holds(q, FINE))
}

/// `pred_t(goal, avoid)`: the delay line reaches `goal` before touching `avoid`.
pub fn pred_t_table(goal: &RawFed, avoid: &RawFed, g: &Grid) -> Table {
    scan_lines(g, true, |prev, q| {
        !avoid.holds(q, FINE) && (goal.holds(q, FINE) || prev == Some(true))
    })
}

/// `p ∈ z[r := 0]`.
pub fn in_reset(z: &RawFed, resets: &[usize], p: &[i64], maxc: i64) -> bool {
    if resets.iter().any(|&r| p[r] != 0) {
        return false;
    }
    // A witness may sit a constant beyond the other clocks.
    let top = (extent(maxc) + maxc + 1) * FINE;
    let mut q: Vec<i64> = p.iter().map(|x| x * (FINE / DEN)).collect();
    fn search(z: &RawFed, resets: &[usize], q: &mut Vec<i64>, top: i64) -> bool {
        match resets.split_first() {
            None => z.holds(q, FINE),
            Some((&r, rest)) => (0..=top).any(|v| {
                q[r] = v;
                search(z, rest, q, top)
            }),
        }
    }
    search(z, resets, &mut q, top)
}
