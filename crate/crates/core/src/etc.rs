//! Event-triggered planar LTI loops: inter-sample times, conic
//! abstraction into timing bounds and region transitions, and the
//! automata built from them.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{Matrix2, Matrix4, RowVector2, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{
    Action, ClockConstraint, Edge, EdgeTag, Guard, IntConstraint, IntExpr, IntVar, Location,
    LocationRole, Rel, Tga, Update,
};

#[derive(Debug, Error)]
pub enum EtcError {
    #[error("closed loop of `{0}` is not Hurwitz")]
    NotHurwitz(String),
    #[error("region count {0} must be even and at least 2")]
    BadRegionCount(usize),
    #[error("triggering coefficient {sigma} outside (0, {sigma_bar})")]
    BadSigma { sigma: f64, sigma_bar: f64 },
    #[error("tau_cap must be positive")]
    BadCap,
    #[error("integration diverged from direction [{x}, {y}]")]
    Integration { x: f64, y: f64 },
    #[error("need at least 2 samples per region")]
    TooFewSamples,
    #[error("region {region} has no early-update window within any coefficient's lower bound")]
    EarlyWindow { region: usize },
    #[error("region {region} has an empty successor set")]
    NoSuccessor { region: usize },
    #[error("table sizes do not match the partition")]
    Shape,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `ξ' = Aξ + Bυ`, `υ = Kξ(t_k)` between samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiLoop {
    pub name: String,
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub k: [f64; 2],
}

impl LtiLoop {
    pub fn a(&self) -> Matrix2<f64> {
        Matrix2::new(self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1])
    }

    pub fn b(&self) -> Vector2<f64> {
        Vector2::new(self.b[0], self.b[1])
    }

    pub fn k(&self) -> RowVector2<f64> {
        RowVector2::new(self.k[0], self.k[1])
    }

    pub fn closed_loop(&self) -> Matrix2<f64> {
        self.a() + self.b() * self.k()
    }

    pub fn is_hurwitz(&self) -> bool {
        let m = self.closed_loop();
        let tr = m.trace();
        let det = m.determinant();
        tr < 0.0 && det > 0.0
    }

    pub fn check(&self) -> Result<(), EtcError> {
        if self.is_hurwitz() {
            Ok(())
        } else {
            Err(EtcError::NotHurwitz(self.name.clone()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub sigmas: Vec<f64>,
    pub sigma_bar: f64,
    pub tau_cap: f64,
}

impl TriggerConfig {
    pub fn check(&self) -> Result<(), EtcError> {
        for &sigma in &self.sigmas {
            if !(sigma > 0.0 && sigma < self.sigma_bar) {
                return Err(EtcError::BadSigma {
                    sigma,
                    sigma_bar: self.sigma_bar,
                });
            }
        }
        if self.tau_cap > 0.0 {
            Ok(())
        } else {
            Err(EtcError::BadCap)
        }
    }
}

/// `q` equal sectors starting at angle 0; sector `s` holds angles in
/// `[2πs/q, 2π(s+1)/q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConicPartition {
    pub q: usize,
}

pub fn partition_plane(q: usize) -> Result<ConicPartition, EtcError> {
    if q < 2 || q % 2 == 1 {
        return Err(EtcError::BadRegionCount(q));
    }
    Ok(ConicPartition { q })
}

impl ConicPartition {
    pub fn boundary(&self, s: usize) -> f64 {
        TAU * s as f64 / self.q as f64
    }

    pub fn boundaries(&self) -> Vec<f64> {
        (0..self.q).map(|s| self.boundary(s)).collect()
    }

    pub fn region_of(&self, x: [f64; 2]) -> usize {
        let mut angle = x[1].atan2(x[0]);
        if angle < 0.0 {
            angle += TAU;
        }
        ((angle / TAU * self.q as f64).floor() as usize).min(self.q - 1)
    }

    /// `n` unit directions spread evenly over the closed sector.
    pub fn sample_directions(&self, s: usize, n: usize) -> Vec<[f64; 2]> {
        let lo = self.boundary(s);
        let width = TAU / self.q as f64;
        (0..n)
            .map(|i| {
                let a = lo + width * i as f64 / (n - 1) as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    }
}

/// Fixed-step fourth-order integrator of the sample-and-hold loop in the
/// augmented state `[ξ; ξ(t_k)]`.
#[derive(Clone, Debug)]
pub struct Integrator {
    m: Matrix4<f64>,
    phi: Matrix4<f64>,
    pub step: f64,
    pub tolerance: f64,
}

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

impl Integrator {
    pub fn new(l: &LtiLoop) -> Integrator {
        Integrator::with_step(l, DEFAULT_STEP, DEFAULT_TOLERANCE)
    }

    pub fn with_step(l: &LtiLoop, step: f64, tolerance: f64) -> Integrator {
        let a = l.a();
        let bk = l.b() * l.k();
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&bk);
        let phi = rk4_matrix(&m, step);
        Integrator {
            m,
            phi,
            step,
            tolerance,
        }
    }

    /// One step of length `h` (for linear systems a classic RK4 step is the
    /// fourth-order Taylor polynomial of the exponential).
    pub fn advance(&self, z: &Vector4<f64>, h: f64) -> Vector4<f64> {
        if h == self.step {
            self.phi * z
        } else {
            rk4_matrix(&self.m, h) * z
        }
    }

    /// Plant state at time `t` after sampling `x`, held input `K x`.
    pub fn flow(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let mut z = Vector4::new(x[0], x[1], x[0], x[1]);
        let n = (t / self.step).floor() as usize;
        for _ in 0..n {
            z = self.phi * z;
        }
        let rest = t - n as f64 * self.step;
        if rest > 0.0 {
            z = self.advance(&z, rest);
        }
        [z[0], z[1]]
    }

    /// Plant states at every integration step in `[t0, t1]`, both ends included.
    pub fn flow_window(&self, x: [f64; 2], t0: f64, t1: f64) -> Vec<[f64; 2]> {
        let mut z = Vector4::new(x[0], x[1], x[0], x[1]);
        let n0 = (t0 / self.step).floor() as usize;
        for _ in 0..n0 {
            z = self.phi * z;
        }
        let mut t = n0 as f64 * self.step;
        let mut out = Vec::new();
        let at = |z: &Vector4<f64>, dt: f64| {
            let w = if dt > 0.0 { self.advance(z, dt) } else { *z };
            [w[0], w[1]]
        };
        out.push(at(&z, t0 - t));
        while t + self.step < t1 {
            z = self.phi * z;
            t += self.step;
            if t > t0 {
                out.push([z[0], z[1]]);
            }
        }
        out.push(at(&z, t1 - t));
        out
    }
}

fn rk4_matrix(m: &Matrix4<f64>, h: f64) -> Matrix4<f64> {
    let mh = m * h;
    let mh2 = mh * mh;
    let mh3 = mh2 * mh;
    let mh4 = mh3 * mh;
    Matrix4::identity() + mh + mh2 / 2.0 + mh3 / 6.0 + mh4 / 24.0
}

fn trigger(z: &Vector4<f64>, sigma: f64) -> f64 {
    let ex = z[2] - z[0];
    let ey = z[3] - z[1];
    ex * ex + ey * ey - sigma * (z[0] * z[0] + z[1] * z[1])
}

/// Time from a sample at `x` until `|e|² ≥ σ|ξ|²`, capped at `tau_cap`.
pub fn inter_sample_time(
    integ: &Integrator,
    x: [f64; 2],
    sigma: f64,
    tau_cap: f64,
) -> Result<f64, EtcError> {
    if x == [0.0, 0.0] {
        return Ok(tau_cap);
    }
    let mut z = Vector4::new(x[0], x[1], x[0], x[1]);
    let mut t = 0.0;
    let steps = (tau_cap / integ.step).ceil() as usize;
    for _ in 0..steps {
        let next = integ.phi * z;
        let f = trigger(&next, sigma);
        if !f.is_finite() {
            return Err(EtcError::Integration { x: x[0], y: x[1] });
        }
        if f >= 0.0 {
            let (mut lo, mut hi) = (0.0, integ.step);
            while hi - lo > integ.tolerance {
                let mid = 0.5 * (lo + hi);
                if trigger(&integ.advance(&z, mid), sigma) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((t + hi).min(tau_cap));
        }
        z = next;
        t += integ.step;
    }
    Ok(tau_cap)
}

/// Per region and coefficient inter-sample intervals in integer ticks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingBounds {
    pub scale: i64,
    /// `lower[s][j]`
    pub lower: Vec<Vec<i64>>,
    pub upper: Vec<Vec<i64>>,
}

impl TimingBounds {
    pub fn regions(&self) -> usize {
        self.lower.len()
    }

    pub fn coefficients(&self) -> usize {
        self.lower.first().map_or(0, Vec::len)
    }

    pub fn contains(&self, s: usize, j: usize, time: f64) -> bool {
        let ticks = time * self.scale as f64;
        self.lower[s][j] as f64 <= ticks && ticks <= self.upper[s][j] as f64
    }
}

/// Measured extremes of inter-sample times over the sampled directions.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredTimes {
    pub min: Vec<Vec<f64>>,
    pub max: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct BoundsSettings {
    pub scale: i64,
    pub samples_per_region: usize,
    pub margin_ticks: i64,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        BoundsSettings {
            scale: 1000,
            samples_per_region: 101,
            margin_ticks: 1,
        }
    }
}

pub fn measure_times(
    l: &LtiLoop,
    partition: &ConicPartition,
    trig: &TriggerConfig,
    samples_per_region: usize,
) -> Result<MeasuredTimes, EtcError> {
    if samples_per_region < 2 {
        return Err(EtcError::TooFewSamples);
    }
    let integ = Integrator::new(l);
    let per_region: Vec<Result<(Vec<f64>, Vec<f64>), EtcError>> = (0..partition.q)
        .into_par_iter()
        .map(|s| {
            let dirs = partition.sample_directions(s, samples_per_region);
            let mut mins = Vec::new();
            let mut maxs = Vec::new();
            for &sigma in &trig.sigmas {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &d in &dirs {
                    let t = inter_sample_time(&integ, d, sigma, trig.tau_cap)?;
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
                mins.push(lo);
                maxs.push(hi);
            }
            Ok((mins, maxs))
        })
        .collect();
    let mut min = Vec::new();
    let mut max = Vec::new();
    for r in per_region {
        let (a, b) = r?;
        min.push(a);
        max.push(b);
    }
    Ok(MeasuredTimes { min, max })
}

pub fn compute_bounds(
    l: &LtiLoop,
    partition: &ConicPartition,
    trig: &TriggerConfig,
    settings: &BoundsSettings,
) -> Result<(TimingBounds, MeasuredTimes), EtcError> {
    trig.check()?;
    let measured = measure_times(l, partition, trig, settings.samples_per_region)?;
    let scale = settings.scale as f64;
    let cap = (trig.tau_cap * scale).ceil() as i64;
    let lower = measured
        .min
        .iter()
        .map(|row| {
            row.iter()
                .map(|t| ((t * scale).floor() as i64 - settings.margin_ticks).clamp(1, cap))
                .collect()
        })
        .collect();
    let upper = measured
        .max
        .iter()
        .map(|row| {
            row.iter()
                .map(|t| ((t * scale).ceil() as i64 + settings.margin_ticks).clamp(1, cap))
                .collect()
        })
        .collect();
    Ok((
        TimingBounds {
            scale: settings.scale,
            lower,
            upper,
        },
        measured,
    ))
}

/// Early-update windows `[d̲ₛ, d̄ₛ]` in ticks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyParams {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
}

impl EarlyParams {
    /// `d̄ₛ = τ̲ₛ^σ₁` and `d̲ₛ = τ̲ₛ^σ₁ − offset`, clamped at zero.
    pub fn from_offset(bounds: &TimingBounds, offset: i64) -> EarlyParams {
        let upper: Vec<i64> = bounds.lower.iter().map(|row| row[0]).collect();
        let lower = upper.iter().map(|u| (u - offset).max(0)).collect();
        EarlyParams { lower, upper }
    }

    pub fn check(&self, bounds: &TimingBounds) -> Result<(), EtcError> {
        if self.lower.len() != bounds.regions() || self.upper.len() != bounds.regions() {
            return Err(EtcError::Shape);
        }
        for s in 0..bounds.regions() {
            let fits = bounds.lower[s].iter().any(|&t| self.upper[s] <= t);
            if !fits || self.lower[s] > self.upper[s] || self.lower[s] < 0 {
                return Err(EtcError::EarlyWindow { region: s });
            }
        }
        Ok(())
    }
}

/// Region successors: `etc[s][j]` under event triggering, `early[s]` after
/// an early update.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMap {
    pub etc: Vec<Vec<BTreeSet<usize>>>,
    pub early: Vec<BTreeSet<usize>>,
}

#[derive(Clone, Debug)]
pub struct TransitionSettings {
    pub directions: usize,
    /// Integration step used for the flow pipe; each step is a time sample.
    pub step: f64,
    pub inflate: bool,
}

impl Default for TransitionSettings {
    fn default() -> Self {
        TransitionSettings {
            directions: 41,
            step: DEFAULT_STEP,
            inflate: true,
        }
    }
}

fn pipe_regions(
    integ: &Integrator,
    partition: &ConicPartition,
    s: usize,
    t0: f64,
    t1: f64,
    settings: &TransitionSettings,
) -> BTreeSet<usize> {
    let q = partition.q;
    let mut hit = BTreeSet::new();
    for d in partition.sample_directions(s, settings.directions) {
        for x in integ.flow_window(d, t0, t1) {
            hit.insert(partition.region_of(x));
        }
    }
    if settings.inflate {
        let core: Vec<usize> = hit.iter().copied().collect();
        for r in core {
            hit.insert((r + 1) % q);
            hit.insert((r + q - 1) % q);
        }
    }
    hit
}

pub fn compute_transitions(
    l: &LtiLoop,
    partition: &ConicPartition,
    bounds: &TimingBounds,
    early: Option<&EarlyParams>,
    settings: &TransitionSettings,
) -> Result<TransitionMap, EtcError> {
    if bounds.regions() != partition.q {
        return Err(EtcError::Shape);
    }
    let integ = Integrator::with_step(l, settings.step, DEFAULT_TOLERANCE);
    let scale = bounds.scale as f64;
    let rows: Vec<(Vec<BTreeSet<usize>>, BTreeSet<usize>)> = (0..partition.q)
        .into_par_iter()
        .map(|s| {
            let etc = (0..bounds.coefficients())
                .map(|j| {
                    pipe_regions(
                        &integ,
                        partition,
                        s,
                        bounds.lower[s][j] as f64 / scale,
                        bounds.upper[s][j] as f64 / scale,
                        settings,
                    )
                })
                .collect();
            let early = early.map_or_else(BTreeSet::new, |e| {
                pipe_regions(
                    &integ,
                    partition,
                    s,
                    e.lower[s] as f64 / scale,
                    e.upper[s] as f64 / scale,
                    settings,
                )
            });
            (etc, early)
        })
        .collect();
    let mut map = TransitionMap {
        etc: Vec::new(),
        early: Vec::new(),
    };
    for (s, (etc, e)) in rows.into_iter().enumerate() {
        if etc.iter().any(BTreeSet::is_empty) || (early.is_some() && e.is_empty()) {
            return Err(EtcError::NoSuccessor { region: s });
        }
        map.etc.push(etc);
        map.early.push(e);
    }
    Ok(map)
}

/// Everything the automaton builders need about one loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopAbstraction {
    pub name: String,
    pub partition: ConicPartition,
    pub sigmas: Vec<f64>,
    pub tau_cap: f64,
    pub bounds: TimingBounds,
    pub transitions: TransitionMap,
    pub early: Option<EarlyParams>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialRegions {
    Single(usize),
    Set(Vec<usize>),
}

pub const CHANNEL: &str = "up";
pub const EAR_NUM: &str = "earNum";

fn le(n: i64) -> ClockConstraint {
    ClockConstraint::single("c", Rel::Le, n)
}

fn ge(n: i64) -> ClockConstraint {
    ClockConstraint::single("c", Rel::Ge, n)
}

fn eq(n: i64) -> ClockConstraint {
    ClockConstraint::single("c", Rel::Eq, n)
}

fn edge(src: usize, dst: usize, guard: Guard, action: Action, reset: bool, tag: EdgeTag) -> Edge {
    Edge {
        src,
        dst,
        guard,
        action,
        resets: if reset { vec!["c".into()] } else { vec![] },
        updates: vec![],
        tag: Some(tag),
    }
}

/// Timed automaton of the triggering times for coefficient `j`.
pub fn build_ta_sigma(
    name: &str,
    bounds: &TimingBounds,
    transitions: &TransitionMap,
    j: usize,
    initial: usize,
) -> Tga {
    let q = bounds.regions();
    let locations = (0..q)
        .map(|s| {
            Location::new(format!("R{}", s + 1), vec![le(bounds.upper[s][j])]).with_role(
                LocationRole::Armed {
                    region: s,
                    coeff: j,
                },
            )
        })
        .collect();
    let mut edges = Vec::new();
    for s in 0..q {
        for &t in &transitions.etc[s][j] {
            edges.push(edge(
                s,
                t,
                Guard::clocks(vec![ge(bounds.lower[s][j]), le(bounds.upper[s][j])]),
                Action::internal("*", false),
                true,
                EdgeTag::EtcUpdate {
                    region: s,
                    coeff: j,
                    dest: t,
                },
            ));
        }
    }
    Tga {
        name: name.to_string(),
        clocks: vec!["c".into()],
        locations,
        initial,
        edges,
        vars: vec![],
    }
}

/// Shared network with occupancy time `delta` ticks.
pub fn build_tga_net(delta: i64) -> Tga {
    let up = || Action::receive(CHANNEL, false);
    Tga {
        name: "net".into(),
        clocks: vec!["c".into()],
        locations: vec![
            Location::new("Idle", vec![]).with_role(LocationRole::NetIdle),
            Location::new("InUse", vec![le(delta)]).with_role(LocationRole::NetInUse),
            Location::new("Bad", vec![]).with_role(LocationRole::NetBad),
        ],
        initial: 0,
        edges: vec![
            edge(0, 1, Guard::always(), up(), true, EdgeTag::NetAcquire),
            edge(1, 2, Guard::always(), up(), false, EdgeTag::NetConflict),
            edge(2, 2, Guard::always(), up(), false, EdgeTag::NetConflict),
            edge(
                1,
                0,
                Guard::clocks(vec![eq(delta)]),
                Action::internal("release", true),
                false,
                EdgeTag::NetRelease,
            ),
        ],
        vars: vec![],
    }
}

/// Loop automaton with coefficient choice and optional early updates.
/// Locations per region: `R{s}`, `R{s}a{j}` per coefficient, `Ear{s}`
/// when early updates are enabled.
pub fn build_tga_cl(abs: &LoopAbstraction, initial: &InitialRegions) -> Result<Tga, EtcError> {
    build_loop(abs, initial, None)
}

/// As [`build_tga_cl`], with consecutive early updates counted in the
/// global `earNum` and limited to `ear_max`.
pub fn build_tga_clim(
    abs: &LoopAbstraction,
    initial: &InitialRegions,
    ear_max: i64,
) -> Result<Tga, EtcError> {
    build_loop(abs, initial, Some(ear_max))
}

fn build_loop(
    abs: &LoopAbstraction,
    initial: &InitialRegions,
    ear_max: Option<i64>,
) -> Result<Tga, EtcError> {
    let b = &abs.bounds;
    let q = b.regions();
    let p = b.coefficients();
    if q != abs.partition.q || abs.transitions.etc.len() != q {
        return Err(EtcError::Shape);
    }
    if let Some(e) = &abs.early {
        e.check(b)?;
    }
    let early = abs.early.as_ref();
    let per = p + 1 + usize::from(early.is_some());
    let choose = |s: usize| s * per;
    let armed = |s: usize, j: usize| s * per + 1 + j;
    let ear = |s: usize| s * per + p + 1;

    let mut locations = Vec::new();
    for s in 0..q {
        locations.push(
            Location::new(format!("R{}", s + 1), vec![le(0)])
                .with_role(LocationRole::Choose { region: s }),
        );
        for j in 0..p {
            locations.push(
                Location::new(format!("R{}a{}", s + 1, j + 1), vec![le(b.upper[s][j])]).with_role(
                    LocationRole::Armed {
                        region: s,
                        coeff: j,
                    },
                ),
            );
        }
        if early.is_some() {
            locations.push(
                Location::new(format!("Ear{}", s + 1), vec![le(0)])
                    .with_role(LocationRole::Early { region: s }),
            );
        }
    }

    let mut edges = Vec::new();
    for s in 0..q {
        for j in 0..p {
            edges.push(edge(
                choose(s),
                armed(s, j),
                Guard::clocks(vec![eq(0)]),
                Action::internal(&format!("a{}", j + 1), true),
                false,
                EdgeTag::ChooseCoefficient {
                    region: s,
                    coeff: j,
                },
            ));
            for &t in &abs.transitions.etc[s][j] {
                let mut e = edge(
                    armed(s, j),
                    choose(t),
                    Guard::clocks(vec![ge(b.lower[s][j]), le(b.upper[s][j])]),
                    Action::send(CHANNEL, false),
                    true,
                    EdgeTag::EtcUpdate {
                        region: s,
                        coeff: j,
                        dest: t,
                    },
                );
                if ear_max.is_some() {
                    e.updates.push(Update {
                        var: EAR_NUM.into(),
                        expr: IntExpr::Const(0),
                    });
                }
                edges.push(e);
            }
            if let Some(ep) = early {
                let mut e = edge(
                    armed(s, j),
                    ear(s),
                    Guard::clocks(vec![ge(ep.lower[s]), le(ep.upper[s])]),
                    Action::internal("early", true),
                    true,
                    EdgeTag::EarlyRequest {
                        region: s,
                        coeff: j,
                    },
                );
                if let Some(max) = ear_max {
                    e.guard.ints.push(IntConstraint {
                        var: EAR_NUM.into(),
                        rel: Rel::Lt,
                        rhs: IntExpr::Const(max),
                    });
                    e.updates.push(Update {
                        var: EAR_NUM.into(),
                        expr: IntExpr::var(EAR_NUM).plus(1),
                    });
                }
                edges.push(e);
            }
        }
        if early.is_some() {
            for &t in &abs.transitions.early[s] {
                edges.push(edge(
                    ear(s),
                    choose(t),
                    Guard::clocks(vec![eq(0)]),
                    Action::send(CHANNEL, false),
                    false,
                    EdgeTag::EarlyUpdate { region: s, dest: t },
                ));
            }
        }
    }

    let initial_loc = match initial {
        InitialRegions::Single(s) => choose(*s),
        InitialRegions::Set(set) => {
            let r0 = locations.len();
            locations.push(Location::new("R0", vec![le(0)]).with_role(LocationRole::Start));
            for &s in set {
                edges.push(edge(
                    r0,
                    choose(s),
                    Guard::clocks(vec![eq(0)]),
                    Action::internal("init", false),
                    false,
                    EdgeTag::InitialRegion { region: s },
                ));
            }
            r0
        }
    };

    let vars = ear_max
        .map(|max| {
            vec![IntVar {
                name: EAR_NUM.into(),
                min: 0,
                max,
                initial: 0,
                global: true,
            }]
        })
        .unwrap_or_default();
    Ok(Tga {
        name: abs.name.clone(),
        clocks: vec!["c".into()],
        locations,
        initial: initial_loc,
        edges,
        vars,
    })
}

/// Per-region bounds and successor sets as CSV.
pub fn write_diagnostics<W: Write>(
    abs: &LoopAbstraction,
    measured: Option<&MeasuredTimes>,
    out: W,
) -> Result<(), EtcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region",
        "coeff",
        "sigma",
        "tau_lo_ticks",
        "tau_hi_ticks",
        "min_time",
        "max_time",
        "successors",
        "early_window",
        "early_successors",
    ])?;
    let join = |set: &BTreeSet<usize>| {
        set.iter()
            .map(|r| (r + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    for s in 0..abs.bounds.regions() {
        for (j, sigma) in abs.sigmas.iter().enumerate() {
            let (mn, mx) = measured.map_or((String::new(), String::new()), |m| {
                (format!("{:.9}", m.min[s][j]), format!("{:.9}", m.max[s][j]))
            });
            let (window, early) = match &abs.early {
                Some(e) => (
                    format!("{}..{}", e.lower[s], e.upper[s]),
                    join(&abs.transitions.early[s]),
                ),
                None => (String::new(), String::new()),
            };
            w.write_record([
                (s + 1).to_string(),
                (j + 1).to_string(),
                sigma.to_string(),
                abs.bounds.lower[s][j].to_string(),
                abs.bounds.upper[s][j].to_string(),
                mn,
                mx,
                join(&abs.transitions.etc[s][j]),
                window,
                early,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
