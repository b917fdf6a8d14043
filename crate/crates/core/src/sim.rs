//! Co-simulation of the plants, the event-triggering mechanism and the
//! synthesized scheduler. Time is kept in integer subticks so that zone
//! membership is decided exactly.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{EdgeTag, LocationRole, ProductTga, StepError};
use crate::etc::{inter_sample_time, Integrator, LoopAbstraction, LtiLoop};
use crate::game::{Advice, Strategy};

/// Subticks per tick.
pub const SUBTICKS: i64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated time in time units.
    pub horizon: f64,
    pub seed: u64,
    /// Randomly move each initial state within its region (keeping the
    /// region), otherwise start exactly at the configured states.
    pub perturb_initial: bool,
    /// Spacing of recorded plant samples; `None` records update instants only.
    pub record_step: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 10.0,
            seed: 0,
            perturb_initial: false,
            record_step: Some(0.01),
        }
    }
}

/// One control loop as seen by the simulator.
#[derive(Clone, Debug)]
pub struct LoopRuntime<'a> {
    pub plant: &'a LtiLoop,
    pub abs: &'a LoopAbstraction,
    /// Index of the loop's automaton in the product.
    pub component: usize,
    pub initial: [f64; 2],
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    Etc,
    Early,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub subtick: i64,
    pub time: f64,
    pub loop_index: usize,
    pub mechanism: Mechanism,
    /// Coefficient in force before the update.
    pub coeff: usize,
    pub from_region: usize,
    pub to_region: usize,
    /// Subticks since the previous sample of the same loop.
    pub since_sample: i64,
    pub state: [f64; 2],
    pub lyapunov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkUse {
    pub start: f64,
    pub end: f64,
    pub loop_index: usize,
    pub mechanism: Mechanism,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    pub time: f64,
    pub state: [f64; 2],
    pub input: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub loop_names: Vec<String>,
    pub ticks_per_unit: i64,
    pub initial_states: Vec<[f64; 2]>,
    pub initial_lyapunov: Vec<f64>,
    pub events: Vec<UpdateEvent>,
    pub network: Vec<NetworkUse>,
    /// `(time, value)` whenever the early-update counter changes.
    pub ear_num: Vec<(f64, i64)>,
    pub samples: Vec<Vec<PlantSample>>,
    /// Uses of each coefficient per loop.
    pub coefficient_use: Vec<Vec<usize>>,
    pub conflicts: usize,
    pub end_time: f64,
}

impl SimTrace {
    pub fn updates(&self, loop_index: usize) -> impl Iterator<Item = &UpdateEvent> {
        self.events
            .iter()
            .filter(move |e| e.loop_index == loop_index)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        for (i, name) in self.loop_names.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("loop_{name}.csv")))?;
            w.write_record(["t", "xi1", "xi2", "u"])?;
            for s in &self.samples[i] {
                w.write_record([
                    s.time.to_string(),
                    s.state[0].to_string(),
                    s.state[1].to_string(),
                    s.input.to_string(),
                ])?;
            }
            w.flush()?;
        }
        let mut w = csv::Writer::from_path(dir.join("network.csv"))?;
        w.write_record(["start", "end", "loop", "mechanism"])?;
        for n in &self.network {
            w.write_record([
                n.start.to_string(),
                n.end.to_string(),
                self.loop_names[n.loop_index].clone(),
                format!("{:?}", n.mechanism).to_lowercase(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("events.csv"))?;
        w.write_record([
            "t",
            "loop",
            "mechanism",
            "coeff",
            "from_region",
            "to_region",
            "interval",
            "xi1",
            "xi2",
            "lyapunov",
        ])?;
        for e in &self.events {
            w.write_record([
                e.time.to_string(),
                self.loop_names[e.loop_index].clone(),
                format!("{:?}", e.mechanism).to_lowercase(),
                (e.coeff + 1).to_string(),
                (e.from_region + 1).to_string(),
                (e.to_region + 1).to_string(),
                (e.since_sample as f64 / (self.ticks_per_unit * SUBTICKS) as f64).to_string(),
                e.state[0].to_string(),
                e.state[1].to_string(),
                e.lyapunov.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("earnum.csv"))?;
        w.write_record(["t", "earNum"])?;
        for (t, v) in &self.ear_num {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimAbort {
    #[error("state outside the winning set: {0}")]
    NotWinning(String),
    #[error("network conflict at t = {0}")]
    Conflict(f64),
    #[error("abstraction violated by loop {loop_name}: {detail}")]
    AbstractionViolation { loop_name: String, detail: String },
    #[error("strategy waits where time cannot pass: {0}")]
    TimeLock(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation aborted: {reason}")]
    Aborted {
        reason: SimAbort,
        trace: Box<SimTrace>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Quadratic Lyapunov function `V(x) = xᵀPx` of the continuous closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCert {
    pub p: [[f64; 2]; 2],
}

impl LyapunovCert {
    /// Solves `(A+BK)ᵀP + P(A+BK) = −I`.
    pub fn for_loop(l: &LtiLoop) -> Option<LyapunovCert> {
        let m: Matrix2<f64> = l.closed_loop();
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        // Unknowns p11, p12, p22 of the symmetric P.
        let lhs = Matrix3::new(
            2.0 * a,
            2.0 * c,
            0.0, //
            b,
            a + d,
            c, //
            0.0,
            2.0 * b,
            2.0 * d,
        );
        let sol = lhs.lu().solve(&Vector3::new(-1.0, 0.0, -1.0))?;
        let cert = LyapunovCert {
            p: [[sol[0], sol[1]], [sol[1], sol[2]]],
        };
        let positive =
            cert.p[0][0] > 0.0 && cert.p[0][0] * cert.p[1][1] - cert.p[0][1] * cert.p[0][1] > 0.0;
        positive.then_some(cert)
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let p = &self.p;
        p[0][0] * x[0] * x[0] + 2.0 * p[0][1] * x[0] * x[1] + p[1][1] * x[1] * x[1]
    }
}

struct LoopState {
    integ: Integrator,
    cert: Option<LyapunovCert>,
    sample: [f64; 2],
    sample_at: i64,
    region: usize,
    coeff: Option<usize>,
    trigger_at: Option<i64>,
    early_pending: bool,
    started: bool,
}

/// Moves `x` to a random point of its own sector with a random norm factor
/// in `[0.5, 2]`.
pub fn perturb(x: [f64; 2], q: usize, rng: &mut impl Rng) -> [f64; 2] {
    let part = crate::etc::ConicPartition { q };
    let s = part.region_of(x);
    let width = std::f64::consts::TAU / q as f64;
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt() * rng.gen_range(0.5..2.0);
    loop {
        let a = part.boundary(s) + width * rng.gen::<f64>();
        let y = [r * a.cos(), r * a.sin()];
        if part.region_of(y) == s {
            return y;
        }
    }
}

/// Runs the closed loops under the strategy. Uncontrollable choices are
/// resolved by the plants: triggers fire when the triggering law says so
/// and the destination region is where the new sample lies.
pub fn simulate(
    p: &ProductTga,
    strategy: &Strategy,
    loops: &[LoopRuntime],
    cfg: &SimConfig,
) -> Result<SimTrace, SimError> {
    let mut sim = Sim::new(p, strategy, loops, cfg)?;
    match sim.run() {
        Ok(()) => Ok(sim.trace),
        Err(reason) => Err(SimError::Aborted {
            reason,
            trace: Box::new(sim.trace),
        }),
    }
}

struct Sim<'a> {
    p: &'a ProductTga,
    strategy: &'a Strategy,
    loops: &'a [LoopRuntime<'a>],
    cfg: &'a SimConfig,
    den: i64,
    state: usize,
    clocks: Vec<i64>,
    now: i64,
    ls: Vec<LoopState>,
    ear_var: Option<usize>,
    net: Option<usize>,
    next_record: i64,
    trace: SimTrace,
}

impl<'a> Sim<'a> {
    fn new(
        p: &'a ProductTga,
        strategy: &'a Strategy,
        loops: &'a [LoopRuntime<'a>],
        cfg: &'a SimConfig,
    ) -> Result<Self, SimError> {
        let setup = |m: &str| SimError::Aborted {
            reason: SimAbort::Setup(m.to_string()),
            trace: Box::default(),
        };
        let scale = loops
            .first()
            .ok_or_else(|| setup("no loops"))?
            .abs
            .bounds
            .scale;
        if loops.iter().any(|l| l.abs.bounds.scale != scale) {
            return Err(setup("loops use different time scales"));
        }
        let den = scale * SUBTICKS;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ls: Vec<LoopState> = loops
            .iter()
            .map(|l| {
                let x0 = if cfg.perturb_initial {
                    perturb(l.initial, l.abs.partition.q, &mut rng)
                } else {
                    l.initial
                };
                LoopState {
                    integ: Integrator::new(l.plant),
                    cert: LyapunovCert::for_loop(l.plant),
                    sample: x0,
                    sample_at: 0,
                    region: l.abs.partition.region_of(x0),
                    coeff: None,
                    trigger_at: None,
                    early_pending: false,
                    started: false,
                }
            })
            .collect();
        let trace = SimTrace {
            loop_names: loops.iter().map(|l| l.abs.name.clone()).collect(),
            ticks_per_unit: scale,
            initial_states: ls.iter().map(|l| l.sample).collect(),
            initial_lyapunov: ls
                .iter()
                .map(|l| l.cert.as_ref().map_or(f64::NAN, |c| c.value(l.sample)))
                .collect(),
            samples: vec![Vec::new(); loops.len()],
            coefficient_use: loops.iter().map(|l| vec![0; l.abs.sigmas.len()]).collect(),
            ..SimTrace::default()
        };
        let ear_var = (0..p.vars.len()).find(|&v| p.vars[v].name == crate::etc::EAR_NUM);
        let net = (0..p.components.len()).find(|&c| {
            p.components[c]
                .locations
                .iter()
                .any(|l| l.role == Some(LocationRole::NetIdle))
        });
        let mut sim = Sim {
            p,
            strategy,
            loops,
            cfg,
            den,
            state: p.initial,
            clocks: vec![0; p.clock_count()],
            now: 0,
            ls,
            ear_var,
            net,
            next_record: 0,
            trace,
        };
        for i in 0..loops.len() {
            let role = p.location_role(sim.state, loops[i].component);
            sim.ls[i].started = !matches!(role, Some(LocationRole::Start));
            if sim.ls[i].started {
                let expect = match role {
                    Some(LocationRole::Choose { region }) => region,
                    _ => return Err(setup("loop automaton does not start in a region")),
                };
                if expect != sim.ls[i].region {
                    return Err(setup(
                        "initial state lies outside the automaton's initial region",
                    ));
                }
            }
        }
        if let Some(v) = ear_var {
            sim.trace.ear_num.push((0.0, p.states[sim.state].vals[v]));
        }
        Ok(sim)
    }

    fn seconds(&self, sub: i64) -> f64 {
        sub as f64 / self.den as f64
    }

    fn plant_at(&self, i: usize, t: i64) -> [f64; 2] {
        let l = &self.ls[i];
        l.integ.flow(l.sample, self.seconds(t - l.sample_at))
    }

    fn input(&self, i: usize) -> f64 {
        let k = self.loops[i].plant.k;
        k[0] * self.ls[i].sample[0] + k[1] * self.ls[i].sample[1]
    }

    fn record_until(&mut self, t: i64) {
        let Some(step) = self.cfg.record_step else {
            return;
        };
        let step = ((step * self.den as f64).round() as i64).max(1);
        while self.next_record <= t {
            let at = self.next_record;
            for i in 0..self.ls.len() {
                let sample = PlantSample {
                    time: self.seconds(at),
                    state: self.plant_at(i, at),
                    input: self.input(i),
                };
                self.trace.samples[i].push(sample);
            }
            self.next_record += step;
        }
    }

    fn label(&self) -> String {
        let clocks: Vec<String> = self
            .clocks
            .iter()
            .zip(&self.p.clock_names)
            .map(|(c, n)| format!("{n}={}", *c as f64 / SUBTICKS as f64))
            .collect();
        format!(
            "{} {} at t = {}",
            self.p.state_label(self.state),
            clocks.join(" "),
            self.seconds(self.now)
        )
    }

    /// Takes edge `e` from the current state, checking the guard exactly.
    fn take(&mut self, e: usize) -> Result<(), SimAbort> {
        let edge = &self.p.edges[e];
        if edge.src != self.state {
            return Err(SimAbort::Step(StepError::WrongSource));
        }
        let ok = edge
            .guard
            .as_ref()
            .is_some_and(|g| g.contains_ratio(&self.clocks, SUBTICKS));
        if !ok {
            return Err(SimAbort::Step(StepError::GuardUnsatisfied(
                self.p.edge_label(e),
            )));
        }
        for &r in &edge.resets {
            self.clocks[r - 1] = 0;
        }
        self.state = edge.dst;
        let inv_ok = self
            .p
            .invariant(self.state)
            .is_some_and(|z| z.contains_ratio(&self.clocks, SUBTICKS));
        if !inv_ok {
            return Err(SimAbort::Step(StepError::InvariantViolated(
                self.p.state_label(self.state),
            )));
        }
        if let Some(v) = self.ear_var {
            let val = self.p.states[self.state].vals[v];
            if self.trace.ear_num.last().map(|x| x.1) != Some(val) {
                self.trace.ear_num.push((self.seconds(self.now), val));
            }
        }
        if let Some(net) = self.net {
            match self.p.part_tag(e, net) {
                Some(EdgeTag::NetRelease) => {
                    let end = self.seconds(self.now);
                    if let Some(last) = self.trace.network.last_mut() {
                        last.end = end;
                    }
                }
                Some(EdgeTag::NetConflict) => {
                    self.trace.conflicts += 1;
                    return Err(SimAbort::Conflict(self.seconds(self.now)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn find_edge(&self, component: usize, want: impl Fn(EdgeTag) -> bool) -> Option<usize> {
        self.p
            .out_edges(self.state)
            .iter()
            .copied()
            .find(|&e| self.p.part_tag(e, component).is_some_and(&want))
    }

    /// Fires the loop's update at the current instant.
    fn update(&mut self, i: usize, mechanism: Mechanism) -> Result<(), SimAbort> {
        let comp = self.loops[i].component;
        let x = self.plant_at(i, self.now);
        let dest = self.loops[i].abs.partition.region_of(x);
        let from = self.ls[i].region;
        let coeff = self.ls[i].coeff.unwrap_or(0);
        let name = self.loops[i].abs.name.clone();
        let edge = match mechanism {
            Mechanism::Etc => self.find_edge(
                comp,
                |t| matches!(t, EdgeTag::EtcUpdate { dest: d, .. } if d == dest),
            ),
            Mechanism::Early => self.find_edge(
                comp,
                |t| matches!(t, EdgeTag::EarlyUpdate { dest: d, .. } if d == dest),
            ),
        };
        let Some(e) = edge else {
            return Err(SimAbort::AbstractionViolation {
                loop_name: name,
                detail: format!(
                    "no {mechanism:?} edge from region {} to region {}",
                    from + 1,
                    dest + 1
                ),
            });
        };
        if mechanism == Mechanism::Etc {
            let enabled = self.p.edges[e]
                .guard
                .as_ref()
                .is_some_and(|g| g.contains_ratio(&self.clocks, SUBTICKS));
            if !enabled {
                return Err(SimAbort::AbstractionViolation {
                    loop_name: name,
                    detail: format!(
                        "trigger after {} outside the stored window of region {}",
                        self.seconds(self.now - self.ls[i].sample_at),
                        from + 1
                    ),
                });
            }
        }
        let since = self.now - self.ls[i].sample_at;
        self.take(e)?;
        let lyapunov = self.ls[i].cert.as_ref().map_or(f64::NAN, |c| c.value(x));
        self.trace.events.push(UpdateEvent {
            subtick: self.now,
            time: self.seconds(self.now),
            loop_index: i,
            mechanism,
            coeff,
            from_region: from,
            to_region: dest,
            since_sample: since,
            state: x,
            lyapunov,
        });
        let delta_end = self.seconds(self.now);
        self.trace.network.push(NetworkUse {
            start: delta_end,
            end: delta_end,
            loop_index: i,
            mechanism,
        });
        let l = &mut self.ls[i];
        l.sample = x;
        l.sample_at = self.now;
        l.region = dest;
        l.coeff = None;
        l.trigger_at = None;
        l.early_pending = false;
        if self.cfg.record_step.is_some() {
            let sample = PlantSample {
                time: self.seconds(self.now),
                state: x,
                input: self.input(i),
            };
            self.trace.samples[i].push(sample);
        }
        Ok(())
    }

    /// Environment moves due at the current instant, lowest loop first.
    fn environment(&mut self) -> Result<bool, SimAbort> {
        for i in 0..self.ls.len() {
            let comp = self.loops[i].component;
            if !self.ls[i].started {
                let region = self.ls[i].region;
                let Some(e) = self.find_edge(comp, |t| t == EdgeTag::InitialRegion { region })
                else {
                    return Err(SimAbort::AbstractionViolation {
                        loop_name: self.loops[i].abs.name.clone(),
                        detail: format!("initial region {} not offered", region + 1),
                    });
                };
                self.take(e)?;
                self.ls[i].started = true;
                return Ok(true);
            }
            if self.ls[i].early_pending {
                self.update(i, Mechanism::Early)?;
                return Ok(true);
            }
            if self.ls[i].trigger_at == Some(self.now) {
                self.update(i, Mechanism::Etc)?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn fire(&mut self, e: usize) -> Result<(), SimAbort> {
        let tags: Vec<(usize, EdgeTag)> = (0..self.loops.len())
            .filter_map(|i| self.p.part_tag(e, self.loops[i].component).map(|t| (i, t)))
            .collect();
        self.take(e)?;
        for (i, tag) in tags {
            match tag {
                EdgeTag::ChooseCoefficient { coeff, .. } => {
                    let sigma = self.loops[i].abs.sigmas[coeff];
                    let cap = self.loops[i].abs.tau_cap;
                    let tau = inter_sample_time(&self.ls[i].integ, self.ls[i].sample, sigma, cap)
                        .map_err(|e| SimAbort::Setup(e.to_string()))?;
                    let delay = ((tau * self.den as f64).round() as i64).max(1);
                    let l = &mut self.ls[i];
                    l.coeff = Some(coeff);
                    l.trigger_at = Some(l.sample_at + delay);
                    self.trace.coefficient_use[i][coeff] += 1;
                }
                EdgeTag::EarlyRequest { .. } => {
                    self.ls[i].early_pending = true;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Smallest positive delay after which the strategy no longer says
    /// wait, if any.
    fn next_decision_change(&self) -> Option<i64> {
        let rows = &self.strategy.rows[self.state];
        let ranges: Vec<Option<(i64, i64)>> = rows
            .iter()
            .map(|r| r.zone.delay_range_int(&self.clocks, SUBTICKS))
            .collect();
        let mut candidates: Vec<i64> = ranges
            .iter()
            .flatten()
            .flat_map(|&(lo, hi)| [lo, hi.saturating_add(1)])
            .filter(|&d| d > 0 && d < i64::MAX)
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates.into_iter().find(|&d| {
            let first = rows
                .iter()
                .zip(&ranges)
                .find(|(_, r)| r.is_some_and(|(lo, hi)| lo <= d && d <= hi));
            !matches!(first, Some((row, _)) if row.decision == crate::game::Decision::Delay)
        })
    }

    fn run(&mut self) -> Result<(), SimAbort> {
        let horizon = (self.cfg.horizon * self.den as f64).round() as i64;
        let mut guard = 0usize;
        loop {
            self.record_until(self.now);
            if self.environment()? {
                continue;
            }
            if self.now >= horizon {
                break;
            }
            match self
                .strategy
                .advise_ratio(self.state, &self.clocks, SUBTICKS)
            {
                Advice::NotWinning => return Err(SimAbort::NotWinning(self.label())),
                Advice::Fire(e) => {
                    guard += 1;
                    if guard > 10_000 {
                        return Err(SimAbort::TimeLock(self.label()));
                    }
                    self.fire(e)?;
                }
                Advice::Delay => {
                    guard = 0;
                    let trigger = self
                        .ls
                        .iter()
                        .filter_map(|l| l.trigger_at)
                        .filter(|&t| t > self.now)
                        .min();
                    let mut next = horizon;
                    if let Some(t) = trigger {
                        next = next.min(t);
                    }
                    if let Some(d) = self.next_decision_change() {
                        next = next.min(self.now + d);
                    }
                    if next <= self.now {
                        return Err(SimAbort::TimeLock(self.label()));
                    }
                    let d = next - self.now;
                    let can_wait = self.p.invariant(self.state).is_some_and(|z| {
                        let shifted: Vec<i64> = self.clocks.iter().map(|c| c + d).collect();
                        z.contains_ratio(&shifted, SUBTICKS)
                    });
                    if !can_wait {
                        return Err(SimAbort::TimeLock(self.label()));
                    }
                    self.record_until(next - 1);
                    for c in &mut self.clocks {
                        *c += d;
                    }
                    self.now = next;
                }
            }
        }
        self.trace.end_time = self.seconds(self.now);
        if let Some(last) = self.trace.network.last_mut() {
            if last.end < last.start {
                last.end = self.trace.end_time;
            }
        }
        Ok(())
    }
}

/// What a trace is checked against.
#[derive(Clone, Debug)]
pub struct VerifySpec<'a> {
    pub delta_ticks: i64,
    pub ear_max: Option<i64>,
    pub loops: Vec<&'a LoopAbstraction>,
    pub certs: Vec<Option<LyapunovCert>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    pub updates: usize,
    pub conflicts: usize,
    pub max_ear_num: i64,
    pub ear_violations: usize,
    pub etc_window_violations: usize,
    pub early_window_violations: usize,
    pub lyapunov_violations: usize,
    pub messages: Vec<String>,
}

impl VerificationReport {
    pub fn ok(&self) -> bool {
        self.conflicts == 0
            && self.ear_violations == 0
            && self.etc_window_violations == 0
            && self.early_window_violations == 0
            && self.lyapunov_violations == 0
    }
}

/// Checks a trace for network conflicts, the early-update counter bound,
/// inter-update times against the abstraction and Lyapunov decrease at
/// update instants.
pub fn verify_trace(trace: &SimTrace, spec: &VerifySpec) -> VerificationReport {
    let mut r = VerificationReport {
        updates: trace.events.len(),
        ..Default::default()
    };
    let delta = spec.delta_ticks * SUBTICKS;
    for w in trace.events.windows(2) {
        if w[1].subtick - w[0].subtick < delta {
            r.conflicts += 1;
            r.messages.push(format!(
                "updates at {} and {} closer than the occupancy time",
                w[0].time, w[1].time
            ));
        }
    }
    r.conflicts = r.conflicts.max(trace.conflicts);

    let mut expect = 0;
    for &(t, v) in &trace.ear_num {
        r.max_ear_num = r.max_ear_num.max(v);
        if spec.ear_max.is_some_and(|m| v > m) || v < 0 {
            r.ear_violations += 1;
            r.messages.push(format!("earNum = {v} at {t}"));
        }
    }
    if spec.ear_max.is_some() {
        for e in &trace.events {
            expect = match e.mechanism {
                Mechanism::Etc => 0,
                Mechanism::Early => expect + 1,
            };
            r.max_ear_num = r.max_ear_num.max(expect);
            if spec.ear_max.is_some_and(|m| expect > m) {
                r.ear_violations += 1;
                r.messages
                    .push(format!("{expect} consecutive early updates at {}", e.time));
            }
        }
    }

    let mut last_v: Vec<f64> = trace.initial_lyapunov.clone();
    for e in &trace.events {
        let abs = spec.loops[e.loop_index];
        let ticks_num = e.since_sample as i128;
        let den = SUBTICKS as i128;
        let within =
            |lo: i64, hi: i64| (lo as i128) * den <= ticks_num && ticks_num <= (hi as i128) * den;
        match e.mechanism {
            Mechanism::Etc => {
                let (lo, hi) = (
                    abs.bounds.lower[e.from_region][e.coeff],
                    abs.bounds.upper[e.from_region][e.coeff],
                );
                if !within(lo, hi) {
                    r.etc_window_violations += 1;
                    r.messages.push(format!(
                        "{} event-triggered interval {} outside [{lo}, {hi}] ticks",
                        trace.loop_names[e.loop_index],
                        e.since_sample as f64 / SUBTICKS as f64
                    ));
                }
            }
            Mechanism::Early => {
                let ok = abs
                    .early
                    .as_ref()
                    .is_some_and(|p| within(p.lower[e.from_region], p.upper[e.from_region]));
                if !ok {
                    r.early_window_violations += 1;
                    r.messages.push(format!(
                        "{} early interval out of window at {}",
                        trace.loop_names[e.loop_index], e.time
                    ));
                }
            }
        }
        if spec.certs.get(e.loop_index).is_some_and(Option::is_some) {
            let prev = last_v[e.loop_index];
            if !(e.lyapunov < prev) {
                r.lyapunov_violations += 1;
                r.messages.push(format!(
                    "{} Lyapunov value {} not below previous {} at {}",
                    trace.loop_names[e.loop_index], e.lyapunov, prev, e.time
                ));
            }
            last_v[e.loop_index] = e.lyapunov;
        }
    }
    r
}
