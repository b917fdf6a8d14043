//! Symbolic safety games on the explicit product: the greatest fixed point
//! of the controllable-predecessor operator, memoryless strategy
//! extraction, an inductiveness checker and runtime advice.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{ConcreteState, EdgeTag, ProductTga};
use crate::zones::{Bound, Federation, Zone};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Upper bound on per-state updates before giving up.
    pub max_updates: usize,
    /// Record every change of a state's set.
    pub record_history: bool,
    /// Only solve over discrete states reachable from the initial one.
    pub reachable_only: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_updates: 5_000_000,
            record_history: false,
            reachable_only: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("no fixed point after {updates} updates; still changing: {unstable:?}")]
    NoConvergence {
        updates: usize,
        unstable: Vec<String>,
    },
    #[error("bad-state mask has {got} entries, product has {want} states")]
    MaskSize { got: usize, want: usize },
}

/// Winning clock valuations per discrete state of the product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinningSet {
    pub sets: Vec<Federation>,
}

impl WinningSet {
    pub fn contains(&self, s: &ConcreteState) -> bool {
        self.sets[s.state].contains(&s.clocks)
    }

    pub fn is_subset(&self, other: &WinningSet) -> bool {
        self.sets.len() == other.sets.len()
            && self
                .sets
                .iter()
                .zip(&other.sets)
                .all(|(a, b)| a.is_subset(b))
    }

    pub fn set_eq(&self, other: &WinningSet) -> bool {
        self.is_subset(other) && other.is_subset(self)
    }

    pub fn winning_states(&self) -> usize {
        self.sets.iter().filter(|f| !f.is_empty()).count()
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub winning: WinningSet,
    pub updates: usize,
    /// `(state, new set)` for each change, in order, when requested.
    pub history: Vec<(usize, Federation)>,
    pub reachable: Vec<bool>,
}

impl Solution {
    pub fn initial_winning(&self, p: &ProductTga) -> bool {
        self.winning.contains(&p.initial_state())
    }
}

/// Precomputed, state-independent pieces of the operator.
struct Arena<'a> {
    p: &'a ProductTga,
    n: usize,
}

impl<'a> Arena<'a> {
    fn new(p: &'a ProductTga) -> Self {
        Arena {
            p,
            n: p.clock_count(),
        }
    }

    fn empty(&self) -> Federation {
        Federation::empty(self.n)
    }

    fn inv(&self, s: usize) -> Federation {
        Federation::from_option(self.n, self.p.invariant(s).cloned())
    }

    /// Valuations in the source from which edge `e` is enabled and lands in
    /// `target` (a subset of the target invariant).
    fn pre(&self, e: usize, target: &Federation) -> Federation {
        let edge = &self.p.edges[e];
        let (Some(g), Some(inv)) = (edge.guard.as_ref(), self.p.invariant(edge.src)) else {
            return self.empty();
        };
        if target.is_empty() {
            return self.empty();
        }
        let mut f = target.clone();
        if !edge.resets.is_empty() {
            let zero: Vec<(usize, usize, Bound)> = edge
                .resets
                .iter()
                .map(|&r| (r, 0, Bound::LE_ZERO))
                .collect();
            let Some(z) = Zone::from_constraints(self.n, &zero) else {
                return self.empty();
            };
            f = f.intersect_zone(&z).free(&edge.resets);
        }
        match g.intersect(inv) {
            Some(gi) => f.intersect_zone(&gi),
            None => self.empty(),
        }
    }

    /// Points of the invariant where time cannot advance.
    fn boundary(&self, s: usize) -> Federation {
        let mut out = self.empty();
        let Some(inv) = self.p.invariant(s) else {
            return out;
        };
        for x in 1..=self.n {
            let b = inv.get(x, 0);
            if !b.is_inf() && !b.is_strict() {
                if let Some(z) = inv.constrain(0, x, Bound::le(-b.value())) {
                    out.push(z);
                }
            }
        }
        out
    }

    fn uncontrollable_into_losing(&self, s: usize, w: &[Federation]) -> Federation {
        let mut out = self.empty();
        for &e in self.p.out_edges(s) {
            let edge = &self.p.edges[e];
            if !edge.controllable {
                let losing = self.inv(edge.dst).subtract(&w[edge.dst]);
                out.union_with(&self.pre(e, &losing));
            }
        }
        out
    }

    fn env_enabled(&self, s: usize) -> Federation {
        let mut out = self.empty();
        for &e in self.p.out_edges(s) {
            let edge = &self.p.edges[e];
            if !edge.controllable {
                out.union_with(&self.pre(e, &self.inv(edge.dst)));
            }
        }
        out
    }

    fn controllable_into(&self, s: usize, w: &[Federation]) -> Federation {
        let mut out = self.empty();
        for &e in self.p.out_edges(s) {
            let edge = &self.p.edges[e];
            if edge.controllable {
                out.union_with(&self.pre(e, &w[edge.dst]));
            }
        }
        out
    }

    /// One application of the safety operator at `s`.
    fn step(&self, s: usize, w: &[Federation]) -> Federation {
        let x = &w[s];
        if x.is_empty() {
            return x.clone();
        }
        let inv = self.inv(s);
        let u = self.uncontrollable_into_losing(s, w);
        let c = self.controllable_into(s, w);
        let e = self.env_enabled(s);
        let stuck = self.boundary(s).subtract(&c.union(&e));
        let lose = inv.subtract(x).union(&u).union(&stuck);
        let escape = c.intersect(x).subtract(&u);
        let mut next = x.subtract(&Federation::pred_t(&lose, &escape));
        next.compact();
        next
    }
}

/// Discrete states reachable from the initial one through edges with a
/// satisfiable guard.
pub fn reachable_states(p: &ProductTga) -> Vec<bool> {
    let mut seen = vec![false; p.state_count()];
    let mut queue = VecDeque::from([p.initial]);
    seen[p.initial] = true;
    while let Some(s) = queue.pop_front() {
        for &e in p.out_edges(s) {
            let edge = &p.edges[e];
            let ok = edge.guard.as_ref().is_some_and(|g| {
                p.invariant(s).is_some_and(|i| g.intersects(i)) && p.invariant(edge.dst).is_some()
            });
            if ok && !seen[edge.dst] {
                seen[edge.dst] = true;
                queue.push_back(edge.dst);
            }
        }
    }
    seen
}

/// Greatest fixed point of the safety operator: the controller must keep the
/// play out of `bad` states, may not block time, and loses any race with an
/// enabled uncontrollable edge.
pub fn solve_safety(
    p: &ProductTga,
    bad: &[bool],
    opts: &SolveOptions,
) -> Result<Solution, GameError> {
    if bad.len() != p.state_count() {
        return Err(GameError::MaskSize {
            got: bad.len(),
            want: p.state_count(),
        });
    }
    let arena = Arena::new(p);
    let reachable = if opts.reachable_only {
        reachable_states(p)
    } else {
        vec![true; p.state_count()]
    };
    let mut w: Vec<Federation> = (0..p.state_count())
        .map(|s| {
            if bad[s] || !reachable[s] {
                arena.empty()
            } else {
                arena.inv(s)
            }
        })
        .collect();

    let mut queued = vec![false; p.state_count()];
    let mut queue = VecDeque::new();
    for s in 0..p.state_count() {
        if !w[s].is_empty() {
            queued[s] = true;
            queue.push_back(s);
        }
    }

    let mut updates = 0;
    let mut history = Vec::new();
    while let Some(s) = queue.pop_front() {
        queued[s] = false;
        let next = arena.step(s, &w);
        if next.set_eq(&w[s]) {
            continue;
        }
        updates += 1;
        if updates > opts.max_updates {
            let mut unstable: Vec<String> =
                queue.iter().take(10).map(|&q| p.state_label(q)).collect();
            unstable.insert(0, p.state_label(s));
            return Err(GameError::NoConvergence { updates, unstable });
        }
        if opts.record_history {
            history.push((s, next.clone()));
        }
        w[s] = next;
        let preds = p.in_edges(s).iter().map(|&e| p.edges[e].src);
        for q in std::iter::once(s).chain(preds) {
            if !queued[q] && !w[q].is_empty() {
                queued[q] = true;
                queue.push_back(q);
            }
        }
    }
    log::debug!("safety fixed point after {updates} updates");
    Ok(Solution {
        winning: WinningSet { sets: w },
        updates,
        history,
        reachable,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Fire { edge: usize },
    Delay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub zone: Zone,
    pub decision: Decision,
}

/// Memoryless strategy: per discrete state an ordered list of rows, the
/// first row containing the current valuation decides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub rows: Vec<Vec<StrategyRow>>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Advice {
    Fire(usize),
    Delay,
    NotWinning,
}

impl Strategy {
    pub fn advise(&self, s: &ConcreteState) -> Advice {
        self.rows[s.state]
            .iter()
            .find(|r| r.zone.contains(&s.clocks))
            .map_or(Advice::NotWinning, |r| r.decision.into())
    }

    /// Exact variant for valuations `num / den`.
    pub fn advise_ratio(&self, state: usize, num: &[i64], den: i64) -> Advice {
        self.rows[state]
            .iter()
            .find(|r| r.zone.contains_ratio(num, den))
            .map_or(Advice::NotWinning, |r| r.decision.into())
    }

    pub fn row_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

impl From<Decision> for Advice {
    fn from(d: Decision) -> Advice {
        match d {
            Decision::Fire { edge } => Advice::Fire(edge),
            Decision::Delay => Advice::Delay,
        }
    }
}

/// Order in which controllable edges are offered: releasing the network,
/// then regular coefficient choices, then early updates; lower regions and
/// coefficients first.
fn preference(p: &ProductTga, e: usize) -> (u8, usize, usize, usize, usize) {
    match p.edge_tag(e) {
        Some((c, EdgeTag::NetRelease)) => (0, 0, 0, c, e),
        Some((c, EdgeTag::ChooseCoefficient { region, coeff })) => (1, region, coeff, c, e),
        Some((c, EdgeTag::EarlyRequest { region, coeff })) => (2, region, coeff, c, e),
        Some((c, _)) => (3, 0, 0, c, e),
        None => (3, 0, 0, usize::MAX, e),
    }
}

/// Extracts a strategy from a winning set: states where waiting is safe
/// forever delay, otherwise the preferred safe controllable edge fires, and
/// the remaining points wait for one to become available.
pub fn extract_strategy(p: &ProductTga, w: &WinningSet) -> Strategy {
    let arena = Arena::new(p);
    let rows = (0..p.state_count())
        .map(|s| {
            let ws = &w.sets[s];
            if ws.is_empty() {
                return Vec::new();
            }
            let inv = arena.inv(s);
            let env = arena.env_enabled(s);
            let u = arena.uncontrollable_into_losing(s, &w.sets);
            let stuck = arena.boundary(s).subtract(&env);
            let unsafe_wait = inv.subtract(ws).union(&stuck);
            let forever = ws.subtract(&unsafe_wait.down());

            let mut rows = Vec::new();
            let mut covered = forever.clone();
            for z in forever.zones() {
                rows.push(StrategyRow {
                    zone: z.clone(),
                    decision: Decision::Delay,
                });
            }
            let mut ctrl: Vec<usize> = p
                .out_edges(s)
                .iter()
                .copied()
                .filter(|&e| p.edges[e].controllable)
                .collect();
            ctrl.sort_by_key(|&e| preference(p, e));
            for e in ctrl {
                let dst = p.edges[e].dst;
                let fire = arena
                    .pre(e, &w.sets[dst])
                    .intersect(ws)
                    .subtract(&u)
                    .subtract(&covered);
                for z in fire.zones() {
                    rows.push(StrategyRow {
                        zone: z.clone(),
                        decision: Decision::Fire { edge: e },
                    });
                }
                covered.union_with(&fire);
            }
            for z in ws.subtract(&covered).zones() {
                rows.push(StrategyRow {
                    zone: z.clone(),
                    decision: Decision::Delay,
                });
            }
            rows
        })
        .collect();
    Strategy { rows }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    BadStateWinning,
    UncontrollableEscape,
    RowOutsideWinning,
    RowNotEnabled,
    RowLeavesWinning,
    DelayUnsafe,
    Uncovered,
}

#[derive(Clone, Debug)]
pub struct InductiveViolation {
    pub state: String,
    pub kind: ViolationKind,
    pub witness: String,
}

#[derive(Clone, Debug, Default)]
pub struct InductivenessReport {
    pub violations: Vec<InductiveViolation>,
}

impl InductivenessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Independently checks that `w` is a controlled invariant witnessed by
/// `strategy`: it avoids `bad`, is closed under uncontrollable edges, every
/// fire row stays inside it and every delay row reaches a fire row or waits
/// safely forever.
pub fn check_inductive(
    p: &ProductTga,
    bad: &[bool],
    w: &WinningSet,
    strategy: &Strategy,
) -> InductivenessReport {
    let arena = Arena::new(p);
    let n = p.clock_count();
    let mut report = InductivenessReport::default();
    let mut flag = |s: usize, kind: ViolationKind, f: &Federation| {
        if let Some(z) = f.zones().first() {
            report.violations.push(InductiveViolation {
                state: p.state_label(s),
                kind,
                witness: z.display(&p.clock_names).to_string(),
            });
        }
    };

    for s in 0..p.state_count() {
        let ws = &w.sets[s];
        if bad[s] {
            flag(s, ViolationKind::BadStateWinning, ws);
        }
        if ws.is_empty() {
            if let Some(r) = strategy.rows[s].first() {
                flag(
                    s,
                    ViolationKind::RowOutsideWinning,
                    &Federation::from_zone(r.zone.clone()),
                );
            }
            continue;
        }
        let inv = arena.inv(s);
        let outside = |f: &Federation, dst: usize| {
            let inv_dst = arena.inv(dst);
            let mut lands = Federation::empty(n);
            for z in f.zones() {
                let e_zone = Federation::from_zone(z.clone());
                lands.union_with(&e_zone.intersect(&inv_dst));
            }
            lands.subtract(&w.sets[dst])
        };

        for &e in p.out_edges(s) {
            let edge = &p.edges[e];
            if edge.controllable {
                continue;
            }
            let Some(g) = &edge.guard else { continue };
            let post = ws.intersect_zone(g).reset(&edge.resets);
            let escaped = outside(&post, edge.dst);
            flag(s, ViolationKind::UncontrollableEscape, &escaped);
        }

        let mut covered = Federation::empty(n);
        let mut fire_eff = Federation::empty(n);
        for row in &strategy.rows[s] {
            let rz = Federation::from_zone(row.zone.clone());
            flag(s, ViolationKind::RowOutsideWinning, &rz.subtract(ws));
            if let Decision::Fire { edge: e } = row.decision {
                let edge = &p.edges[e];
                let guard = Federation::from_option(n, edge.guard.clone()).intersect(&inv);
                if edge.src != s {
                    flag(s, ViolationKind::RowNotEnabled, &rz);
                    continue;
                }
                flag(s, ViolationKind::RowNotEnabled, &rz.subtract(&guard));
                let post = rz.intersect(&guard).reset(&edge.resets);
                let inv_dst = arena.inv(edge.dst);
                flag(s, ViolationKind::RowLeavesWinning, &post.subtract(&inv_dst));
                flag(
                    s,
                    ViolationKind::RowLeavesWinning,
                    &outside(&post, edge.dst),
                );
                fire_eff.union_with(&rz.subtract(&covered));
            }
            covered.union_with(&rz);
        }
        flag(s, ViolationKind::Uncovered, &ws.subtract(&covered));

        let delay_eff = ws.subtract(&fire_eff);
        let stuck = arena
            .boundary(s)
            .subtract(&arena.env_enabled(s))
            .subtract(&fire_eff);
        let lose = inv.subtract(ws).union(&stuck);
        let doomed = Federation::pred_t(&lose, &fire_eff).intersect(&delay_eff);
        flag(s, ViolationKind::DelayUnsafe, &doomed);
    }
    report
}

/// One move of an environment play that leaves the winning set.
#[derive(Clone, Debug)]
pub struct LosingStep {
    pub state: String,
    pub clocks: Vec<f64>,
    pub delay: f64,
    pub action: String,
}

/// Builds an environment play from a losing state: wait until the losing
/// region is entered, then take an uncontrollable edge out of the winning
/// set, until a bad state or time lock is reached.
pub fn explain_losing(
    p: &ProductTga,
    bad: &[bool],
    w: &WinningSet,
    start: &ConcreteState,
    max_steps: usize,
) -> Vec<LosingStep> {
    let arena = Arena::new(p);
    let mut trace = Vec::new();
    let mut cur = start.clone();
    for _ in 0..max_steps {
        let s = cur.state;
        if bad[s] {
            trace.push(LosingStep {
                state: p.state_label(s),
                clocks: cur.clocks.clone(),
                delay: 0.0,
                action: "bad state reached".into(),
            });
            break;
        }
        let u = arena.uncontrollable_into_losing(s, &w.sets);
        let stuck = arena.boundary(s).subtract(
            &arena
                .controllable_into(s, &w.sets)
                .union(&arena.env_enabled(s)),
        );
        let first_hit = |f: &Federation| {
            f.zones()
                .iter()
                .filter_map(|z| z.delay_interval(&cur.clocks))
                .map(|(lo, strict, _, _)| if strict { lo + 1e-9 } else { lo })
                .fold(f64::INFINITY, f64::min)
        };
        let du = first_hit(&u);
        let ds = first_hit(&stuck);
        if ds < du {
            // Time cannot pass and every controllable move loses: follow one.
            let at: Vec<f64> = cur.clocks.iter().map(|x| x + ds).collect();
            let forced = p.out_edges(s).iter().copied().find_map(|e| {
                if !p.edges[e].controllable {
                    return None;
                }
                p.discrete_step(
                    &ConcreteState {
                        state: s,
                        clocks: at.clone(),
                    },
                    e,
                )
                .ok()
                .map(|n| (e, n))
            });
            let Some((e, n)) = forced else {
                trace.push(LosingStep {
                    state: p.state_label(s),
                    clocks: cur.clocks.clone(),
                    delay: ds,
                    action: "time blocked, no safe move".into(),
                });
                break;
            };
            trace.push(LosingStep {
                state: p.state_label(s),
                clocks: cur.clocks.clone(),
                delay: ds,
                action: format!("forced {}", p.edge_label(e)),
            });
            cur = n;
            continue;
        }
        if !du.is_finite() {
            trace.push(LosingStep {
                state: p.state_label(s),
                clocks: cur.clocks.clone(),
                delay: 0.0,
                action: "no winning move".into(),
            });
            break;
        }
        let at: Vec<f64> = cur.clocks.iter().map(|x| x + du).collect();
        let next = p.out_edges(s).iter().copied().find_map(|e| {
            let edge = &p.edges[e];
            if edge.controllable {
                return None;
            }
            let losing = arena.inv(edge.dst).subtract(&w.sets[edge.dst]);
            if !arena.pre(e, &losing).contains(&at) {
                return None;
            }
            p.discrete_step(
                &ConcreteState {
                    state: s,
                    clocks: at.clone(),
                },
                e,
            )
            .ok()
            .map(|n| (e, n))
        });
        let Some((e, n)) = next else { break };
        trace.push(LosingStep {
            state: p.state_label(s),
            clocks: cur.clocks.clone(),
            delay: du,
            action: p.edge_label(e),
        });
        cur = n;
    }
    trace
}

/// Prints fire rows as
/// `When you are in (zone) || (zone), take transition a.X->a.Y`.
pub fn format_strategy(p: &ProductTga, strategy: &Strategy) -> String {
    let mut out = String::new();
    for (s, rows) in strategy.rows.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "State: {}", p.state_label(s));
        let mut i = 0;
        while i < rows.len() {
            let d = rows[i].decision;
            let mut zones = vec![format!("({})", rows[i].zone.display(&p.clock_names))];
            while i + 1 < rows.len() && rows[i + 1].decision == d {
                i += 1;
                zones.push(format!("({})", rows[i].zone.display(&p.clock_names)));
            }
            match d {
                Decision::Fire { edge } => {
                    let _ = writeln!(
                        out,
                        "When you are in {}, take transition {}",
                        zones.join(" || "),
                        p.edge_label(edge)
                    );
                }
                Decision::Delay => {
                    let _ = writeln!(out, "While you are in {}, wait.", zones.join(" || "));
                }
            }
            i += 1;
        }
        out.push('\n');
    }
    out
}
