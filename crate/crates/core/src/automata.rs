//! Timed game automata with handshake channels and bounded integer
//! variables, their explicit parallel composition, and the concrete
//! delay/discrete step semantics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::zones::{Bound, Zone};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rel {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Rel {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Rel::Le => lhs <= rhs,
            Rel::Lt => lhs < rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "==",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }
}

/// `clock ⋈ n` or `clock - other ⋈ n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockConstraint {
    pub clock: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus: Option<String>,
    pub rel: Rel,
    pub n: i64,
}

impl ClockConstraint {
    pub fn single(clock: &str, rel: Rel, n: i64) -> ClockConstraint {
        ClockConstraint {
            clock: clock.to_string(),
            minus: None,
            rel,
            n,
        }
    }

    pub fn diff(clock: &str, minus: &str, rel: Rel, n: i64) -> ClockConstraint {
        ClockConstraint {
            clock: clock.to_string(),
            minus: Some(minus.to_string()),
            rel,
            n,
        }
    }

    /// Whether this is a downward-closed invariant conjunct (`c <= n` or `c < n`).
    pub fn is_downward_closed(&self) -> bool {
        self.minus.is_none() && matches!(self.rel, Rel::Le | Rel::Lt)
    }

    /// DBM entries `(i, j, bound)` given a clock-name resolver returning
    /// 1-based zone indices.
    fn lower(&self, index: impl Fn(&str) -> usize) -> Vec<(usize, usize, Bound)> {
        let i = index(&self.clock);
        let j = self.minus.as_deref().map_or(0, &index);
        let n = self.n;
        match self.rel {
            Rel::Le => vec![(i, j, Bound::le(n))],
            Rel::Lt => vec![(i, j, Bound::lt(n))],
            Rel::Ge => vec![(j, i, Bound::le(-n))],
            Rel::Gt => vec![(j, i, Bound::lt(-n))],
            Rel::Eq => vec![(i, j, Bound::le(n)), (j, i, Bound::le(-n))],
        }
    }
}

impl fmt::Display for ClockConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.minus {
            None => write!(f, "{} {} {}", self.clock, self.rel.symbol(), self.n),
            Some(m) => write!(f, "{} - {} {} {}", self.clock, m, self.rel.symbol(), self.n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntExpr {
    Const(i64),
    Var(String),
    Add(Box<IntExpr>, Box<IntExpr>),
}

impl IntExpr {
    pub fn var(name: &str) -> IntExpr {
        IntExpr::Var(name.to_string())
    }

    pub fn plus(self, k: i64) -> IntExpr {
        IntExpr::Add(Box::new(self), Box::new(IntExpr::Const(k)))
    }

    pub fn eval(&self, lookup: &impl Fn(&str) -> i64) -> i64 {
        match self {
            IntExpr::Const(k) => *k,
            IntExpr::Var(v) => lookup(v),
            IntExpr::Add(a, b) => a.eval(lookup) + b.eval(lookup),
        }
    }

    fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            IntExpr::Const(_) => {}
            IntExpr::Var(v) => out.push(v),
            IntExpr::Add(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

impl fmt::Display for IntExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntExpr::Const(k) => write!(f, "{k}"),
            IntExpr::Var(v) => write!(f, "{v}"),
            IntExpr::Add(a, b) => write!(f, "{a} + {b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntConstraint {
    pub var: String,
    pub rel: Rel,
    pub rhs: IntExpr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    #[serde(default)]
    pub clocks: Vec<ClockConstraint>,
    #[serde(default)]
    pub ints: Vec<IntConstraint>,
}

impl Guard {
    pub fn always() -> Guard {
        Guard::default()
    }

    pub fn clocks(clocks: Vec<ClockConstraint>) -> Guard {
        Guard {
            clocks,
            ints: Vec::new(),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.clocks.iter().map(ToString::to_string).collect();
        parts.extend(
            self.ints
                .iter()
                .map(|c| format!("{} {} {}", c.var, c.rel.symbol(), c.rhs)),
        );
        if parts.is_empty() {
            write!(f, "true")
        } else {
            write!(f, "{}", parts.join(" && "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Internal(String),
    Send(String),
    Receive(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub controllable: bool,
}

impl Action {
    pub fn internal(name: &str, controllable: bool) -> Action {
        Action {
            kind: ActionKind::Internal(name.to_string()),
            controllable,
        }
    }

    pub fn send(channel: &str, controllable: bool) -> Action {
        Action {
            kind: ActionKind::Send(channel.to_string()),
            controllable,
        }
    }

    pub fn receive(channel: &str, controllable: bool) -> Action {
        Action {
            kind: ActionKind::Receive(channel.to_string()),
            controllable,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ActionKind::Internal(n) => write!(f, "{n}"),
            ActionKind::Send(c) => write!(f, "{c}!"),
            ActionKind::Receive(c) => write!(f, "{c}?"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Update {
    pub var: String,
    pub expr: IntExpr,
}

/// What an edge means for the scheduling layer. Regions and coefficients are
/// 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeTag {
    ChooseCoefficient {
        region: usize,
        coeff: usize,
    },
    EarlyRequest {
        region: usize,
        coeff: usize,
    },
    EarlyUpdate {
        region: usize,
        dest: usize,
    },
    EtcUpdate {
        region: usize,
        coeff: usize,
        dest: usize,
    },
    InitialRegion {
        region: usize,
    },
    NetAcquire,
    NetRelease,
    NetConflict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    #[serde(default)]
    pub guard: Guard,
    pub action: Action,
    #[serde(default)]
    pub resets: Vec<String>,
    #[serde(default)]
    pub updates: Vec<Update>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<EdgeTag>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocationRole {
    /// Sampled state in the region, coefficient not chosen yet.
    Choose {
        region: usize,
    },
    /// Waiting for the trigger with the chosen coefficient.
    Armed {
        region: usize,
        coeff: usize,
    },
    /// Early update requested, region of the new sample pending.
    Early {
        region: usize,
    },
    /// Before the environment has picked the initial region.
    Start,
    NetIdle,
    NetInUse,
    NetBad,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    #[serde(default)]
    pub invariant: Vec<ClockConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<LocationRole>,
}

impl Location {
    pub fn new(name: impl Into<String>, invariant: Vec<ClockConstraint>) -> Location {
        Location {
            name: name.into(),
            invariant,
            role: None,
        }
    }

    pub fn with_role(mut self, role: LocationRole) -> Location {
        self.role = Some(role);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntVar {
    pub name: String,
    pub min: i64,
    pub max: i64,
    pub initial: i64,
    pub global: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tga {
    pub name: String,
    pub clocks: Vec<String>,
    pub locations: Vec<Location>,
    pub initial: usize,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub vars: Vec<IntVar>,
}

impl Tga {
    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// `location <name>`, `edge <index>`, `var <name>` or `automaton`.
    pub site: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.site, self.message)
    }
}

/// Checks the structural invariants of a single automaton.
pub fn validate(t: &Tga) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |site: String, message: String| out.push(Violation { site, message });
    let has_clock = |c: &str| t.clocks.iter().any(|k| k == c);
    let has_var = |v: &str| t.vars.iter().any(|k| k.name == v);

    if t.initial >= t.locations.len() {
        push(
            "automaton".into(),
            format!("initial location {} does not exist", t.initial),
        );
    }
    for v in &t.vars {
        if !(v.min <= v.initial && v.initial <= v.max) {
            push(
                format!("var {}", v.name),
                format!("initial value {} outside [{}, {}]", v.initial, v.min, v.max),
            );
        }
    }
    let check_clock_constraint =
        |c: &ClockConstraint, site: &str, push: &mut dyn FnMut(String, String)| {
            if !has_clock(&c.clock) {
                push(site.to_string(), format!("undeclared clock `{}`", c.clock));
            }
            if let Some(m) = &c.minus {
                if !has_clock(m) {
                    push(site.to_string(), format!("undeclared clock `{m}`"));
                }
            }
            if c.n < 0 {
                push(site.to_string(), format!("negative constant in `{c}`"));
            }
        };
    for l in &t.locations {
        let site = format!("location {}", l.name);
        for c in &l.invariant {
            check_clock_constraint(c, &site, &mut push);
            if !c.is_downward_closed() {
                push(
                    site.clone(),
                    format!("invariant not downward closed: `{c}`"),
                );
            }
        }
    }
    for (k, e) in t.edges.iter().enumerate() {
        let site = format!("edge {k}");
        if e.src >= t.locations.len() || e.dst >= t.locations.len() {
            push(site.clone(), "endpoint does not exist".into());
        }
        for c in &e.guard.clocks {
            check_clock_constraint(c, &site, &mut push);
        }
        for c in &e.guard.ints {
            let mut vs = vec![c.var.as_str()];
            c.rhs.vars(&mut vs);
            for v in vs {
                if !has_var(v) {
                    push(site.clone(), format!("undeclared variable `{v}`"));
                }
            }
        }
        for r in &e.resets {
            if !has_clock(r) {
                push(site.clone(), format!("reset of undeclared clock `{r}`"));
            }
        }
        for u in &e.updates {
            let mut vs = vec![u.var.as_str()];
            u.expr.vars(&mut vs);
            for v in vs {
                if !has_var(v) {
                    push(site.clone(), format!("undeclared variable `{v}`"));
                }
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("component `{component}` is invalid: {violations}")]
    Invalid {
        component: String,
        violations: String,
    },
    #[error("channel `{0}` has senders but no receiver in another component")]
    UnpairedChannel(String),
    #[error("global variable `{0}` declared inconsistently")]
    InconsistentGlobal(String),
    #[error("product has {size} discrete states, over the budget of {budget}")]
    TooLarge { size: u128, budget: usize },
}

/// One syntactic move of the network: a single internal edge, or a
/// sender/receiver pair synchronizing on a channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    /// `(component, edge)`; for synchronizations the sender comes first.
    pub parts: Vec<(usize, usize)>,
    pub channel: Option<String>,
    pub controllable: bool,
}

/// A discrete state of the product: one location per component plus the
/// values of all integer variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteState {
    pub locs: Vec<usize>,
    pub vals: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct ProductEdge {
    pub src: usize,
    pub dst: usize,
    pub transition: usize,
    /// Clock guard; `None` if unsatisfiable.
    pub guard: Option<Zone>,
    /// 1-based product clock indices.
    pub resets: Vec<usize>,
    pub controllable: bool,
}

/// Explicit product of a network of TGAs with integer variables expanded
/// into the discrete state space.
#[derive(Clone, Debug)]
pub struct ProductTga {
    pub components: Vec<Tga>,
    pub clock_names: Vec<String>,
    clock_index: Vec<HashMap<String, usize>>,
    pub vars: Vec<IntVar>,
    var_index: Vec<HashMap<String, usize>>,
    pub transitions: Vec<Transition>,
    pub states: Vec<DiscreteState>,
    state_index: HashMap<DiscreteState, usize>,
    pub edges: Vec<ProductEdge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    invariants: Vec<Option<Zone>>,
    pub initial: usize,
}

pub const DEFAULT_LOCATION_BUDGET: usize = 2_000_000;

impl ProductTga {
    pub fn clock_count(&self) -> usize {
        self.clock_names.len()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn out_edges(&self, s: usize) -> &[usize] {
        &self.out_edges[s]
    }

    pub fn in_edges(&self, s: usize) -> &[usize] {
        &self.in_edges[s]
    }

    /// Product invariant of a discrete state; `None` if it is unsatisfiable.
    pub fn invariant(&self, s: usize) -> Option<&Zone> {
        self.invariants[s].as_ref()
    }

    pub fn state_of(&self, d: &DiscreteState) -> Option<usize> {
        self.state_index.get(d).copied()
    }

    /// Product clock index (1-based) of a component-local clock.
    pub fn clock(&self, component: usize, name: &str) -> Option<usize> {
        self.clock_index[component].get(name).copied()
    }

    /// Index into `vars` of a variable as seen from `component`.
    pub fn var(&self, component: usize, name: &str) -> Option<usize> {
        self.var_index[component].get(name).copied()
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn location_name(&self, s: usize, component: usize) -> String {
        let c = &self.components[component];
        format!(
            "{}.{}",
            c.name, c.locations[self.states[s].locs[component]].name
        )
    }

    pub fn location_role(&self, s: usize, component: usize) -> Option<LocationRole> {
        self.components[component].locations[self.states[s].locs[component]].role
    }

    /// `(net.Idle tgaT.R1a1 ...)` followed by integer values.
    pub fn state_label(&self, s: usize) -> String {
        let locs: Vec<String> = (0..self.components.len())
            .map(|c| self.location_name(s, c))
            .collect();
        let mut label = format!("( {} )", locs.join(" "));
        for (v, val) in self.vars.iter().zip(&self.states[s].vals) {
            label.push_str(&format!(" {}={}", v.name, val));
        }
        label
    }

    /// `tgaH.R1a1->tgaH.Ear1` plus the synchronizing partner.
    pub fn edge_label(&self, e: usize) -> String {
        let t = &self.transitions[self.edges[e].transition];
        let parts: Vec<String> = t
            .parts
            .iter()
            .map(|&(c, k)| {
                let comp = &self.components[c];
                let edge = &comp.edges[k];
                format!(
                    "{n}.{}->{n}.{}",
                    comp.locations[edge.src].name,
                    comp.locations[edge.dst].name,
                    n = comp.name
                )
            })
            .collect();
        parts.join(" | ")
    }

    /// Tag of the first part of the transition that carries one.
    pub fn edge_tag(&self, e: usize) -> Option<(usize, EdgeTag)> {
        let t = &self.transitions[self.edges[e].transition];
        t.parts
            .iter()
            .find_map(|&(c, k)| self.components[c].edges[k].tag.map(|tag| (c, tag)))
    }

    /// Tag of the part of edge `e` contributed by `component`.
    pub fn part_tag(&self, e: usize, component: usize) -> Option<EdgeTag> {
        let t = &self.transitions[self.edges[e].transition];
        t.parts
            .iter()
            .find(|&&(c, _)| c == component)
            .and_then(|&(c, k)| self.components[c].edges[k].tag)
    }

    pub fn initial_state(&self) -> ConcreteState {
        ConcreteState {
            state: self.initial,
            clocks: vec![0.0; self.clock_count()],
        }
    }

    fn component_invariant_conjuncts(&self, s: usize) -> Vec<(usize, &ClockConstraint)> {
        let mut out = Vec::new();
        for (c, comp) in self.components.iter().enumerate() {
            for cc in &comp.locations[self.states[s].locs[c]].invariant {
                out.push((c, cc));
            }
        }
        out
    }

    fn constraint_holds(&self, c: usize, cc: &ClockConstraint, clocks: &[f64]) -> bool {
        let mut v = vec![0.0];
        v.extend_from_slice(clocks);
        cc.lower(|n| self.clock_index[c][n])
            .into_iter()
            .all(|(i, j, b)| b.admits(v[i] - v[j]))
    }

    fn violated_invariant(&self, s: usize, clocks: &[f64]) -> Option<String> {
        self.component_invariant_conjuncts(s)
            .into_iter()
            .find(|(c, cc)| !self.constraint_holds(*c, cc, clocks))
            .map(|(c, cc)| format!("{}.{}", self.components[c].name, cc))
    }

    /// Delay transition `(l, u) -d-> (l, u+d)`.
    pub fn delay_step(&self, s: &ConcreteState, d: f64) -> Result<ConcreteState, StepError> {
        if d < 0.0 {
            return Err(StepError::NegativeDelay);
        }
        if let Some(c) = self.violated_invariant(s.state, &s.clocks) {
            return Err(StepError::InvariantViolated(c));
        }
        let next: Vec<f64> = s.clocks.iter().map(|x| x + d).collect();
        if let Some(c) = self.violated_invariant(s.state, &next) {
            return Err(StepError::InvariantViolated(c));
        }
        Ok(ConcreteState {
            state: s.state,
            clocks: next,
        })
    }

    /// Discrete transition along an expanded product edge.
    pub fn discrete_step(&self, s: &ConcreteState, e: usize) -> Result<ConcreteState, StepError> {
        let edge = self.edges.get(e).ok_or(StepError::NoSuchEdge(e))?;
        if edge.src != s.state {
            return Err(StepError::WrongSource);
        }
        let enabled = edge.guard.as_ref().is_some_and(|g| g.contains(&s.clocks));
        if !enabled {
            return Err(StepError::GuardUnsatisfied(self.edge_label(e)));
        }
        let mut clocks = s.clocks.clone();
        for &r in &edge.resets {
            clocks[r - 1] = 0.0;
        }
        if let Some(c) = self.violated_invariant(edge.dst, &clocks) {
            return Err(StepError::InvariantViolated(c));
        }
        Ok(ConcreteState {
            state: edge.dst,
            clocks,
        })
    }

    /// Fires a syntactic transition from a concrete state, reporting integer
    /// guard and update failures that the expanded edge set hides.
    pub fn fire_transition(
        &self,
        s: &ConcreteState,
        transition: usize,
    ) -> Result<ConcreteState, StepError> {
        let t = self
            .transitions
            .get(transition)
            .ok_or(StepError::NoSuchEdge(transition))?;
        let ds = &self.states[s.state];
        for &(c, k) in &t.parts {
            if ds.locs[c] != self.components[c].edges[k].src {
                return Err(StepError::WrongSource);
            }
        }
        match self.apply_ints(t, &ds.vals) {
            Ok(_) => {}
            Err(e) => return Err(e),
        }
        let e = self.out_edges[s.state]
            .iter()
            .copied()
            .find(|&e| self.edges[e].transition == transition)
            .ok_or(StepError::WrongSource)?;
        self.discrete_step(s, e)
    }

    fn apply_ints(&self, t: &Transition, vals: &[i64]) -> Result<Vec<i64>, StepError> {
        for &(c, k) in &t.parts {
            let edge = &self.components[c].edges[k];
            let lookup = |n: &str| vals[self.var_index[c][n]];
            for ic in &edge.guard.ints {
                let lhs = lookup(&ic.var);
                let rhs = ic.rhs.eval(&lookup);
                if !ic.rel.holds(lhs, rhs) {
                    return Err(StepError::GuardUnsatisfied(format!(
                        "{} {} {}",
                        ic.var,
                        ic.rel.symbol(),
                        ic.rhs
                    )));
                }
            }
        }
        let mut next = vals.to_vec();
        for &(c, k) in &t.parts {
            let edge = &self.components[c].edges[k];
            for u in &edge.updates {
                let snapshot = next.clone();
                let lookup = |n: &str| snapshot[self.var_index[c][n]];
                let v = u.expr.eval(&lookup);
                let idx = self.var_index[c][&u.var];
                let decl = &self.vars[idx];
                if v < decl.min || v > decl.max {
                    return Err(StepError::UpdateOutOfBounds {
                        var: decl.name.clone(),
                        value: v,
                    });
                }
                next[idx] = v;
            }
        }
        Ok(next)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteState {
    pub state: usize,
    pub clocks: Vec<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StepError {
    #[error("negative delay")]
    NegativeDelay,
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("guard unsatisfied: {0}")]
    GuardUnsatisfied(String),
    #[error("edge does not leave the current state")]
    WrongSource,
    #[error("no edge {0}")]
    NoSuchEdge(usize),
    #[error("update sets {var} to {value}, outside its declared range")]
    UpdateOutOfBounds { var: String, value: i64 },
}

/// Explicit parallel composition.
pub fn compose(components: &[Tga]) -> Result<ProductTga, ComposeError> {
    compose_with_budget(components, DEFAULT_LOCATION_BUDGET)
}

pub fn compose_with_budget(components: &[Tga], budget: usize) -> Result<ProductTga, ComposeError> {
    for c in components {
        let v = validate(c);
        if !v.is_empty() {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(ComposeError::Invalid {
                component: c.name.clone(),
                violations: list.join("; "),
            });
        }
    }

    // Clocks are local to their component.
    let mut clock_names = Vec::new();
    let mut clock_index = Vec::new();
    for c in components {
        let mut map = HashMap::new();
        for k in &c.clocks {
            clock_names.push(format!("{}.{}", c.name, k));
            map.insert(k.clone(), clock_names.len());
        }
        clock_index.push(map);
    }

    // Globals are shared by name; locals are private.
    let mut vars: Vec<IntVar> = Vec::new();
    let mut globals: BTreeMap<String, usize> = BTreeMap::new();
    let mut var_index = Vec::new();
    for c in components {
        let mut map = HashMap::new();
        for v in &c.vars {
            if v.global {
                if let Some(&idx) = globals.get(&v.name) {
                    let d = &vars[idx];
                    if d.min != v.min || d.max != v.max || d.initial != v.initial || !d.global {
                        return Err(ComposeError::InconsistentGlobal(v.name.clone()));
                    }
                    map.insert(v.name.clone(), idx);
                } else {
                    vars.push(v.clone());
                    globals.insert(v.name.clone(), vars.len() - 1);
                    map.insert(v.name.clone(), vars.len() - 1);
                }
            } else {
                let mut local = v.clone();
                local.name = format!("{}.{}", c.name, v.name);
                vars.push(local);
                map.insert(v.name.clone(), vars.len() - 1);
            }
        }
        var_index.push(map);
    }

    // Channel pairing.
    let mut senders: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut receivers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (ci, c) in components.iter().enumerate() {
        for e in &c.edges {
            match &e.action.kind {
                ActionKind::Send(ch) => senders.entry(ch).or_default().push(ci),
                ActionKind::Receive(ch) => receivers.entry(ch).or_default().push(ci),
                ActionKind::Internal(_) => {}
            }
        }
    }
    for (ch, snd) in &senders {
        let ok = receivers
            .get(ch)
            .is_some_and(|rcv| snd.iter().all(|s| rcv.iter().any(|r| r != s)));
        if !ok {
            return Err(ComposeError::UnpairedChannel(ch.to_string()));
        }
    }

    let mut size: u128 = 1;
    for c in components {
        size = size.saturating_mul(c.locations.len() as u128);
    }
    for v in &vars {
        size = size.saturating_mul((v.max - v.min + 1).max(0) as u128);
    }
    if size > budget as u128 {
        return Err(ComposeError::TooLarge { size, budget });
    }

    // Syntactic transitions.
    let mut transitions = Vec::new();
    for (ci, c) in components.iter().enumerate() {
        for (k, e) in c.edges.iter().enumerate() {
            if let ActionKind::Internal(_) = e.action.kind {
                transitions.push(Transition {
                    parts: vec![(ci, k)],
                    channel: None,
                    controllable: e.action.controllable,
                });
            }
        }
    }
    for (ci, c) in components.iter().enumerate() {
        for (k, e) in c.edges.iter().enumerate() {
            let ActionKind::Send(ch) = &e.action.kind else {
                continue;
            };
            for (cj, d) in components.iter().enumerate() {
                if cj == ci {
                    continue;
                }
                for (l, f) in d.edges.iter().enumerate() {
                    if f.action.kind == ActionKind::Receive(ch.clone()) {
                        transitions.push(Transition {
                            parts: vec![(ci, k), (cj, l)],
                            channel: Some(ch.clone()),
                            controllable: e.action.controllable && f.action.controllable,
                        });
                    }
                }
            }
        }
    }

    let mut product = ProductTga {
        components: components.to_vec(),
        clock_names,
        clock_index,
        vars,
        var_index,
        transitions,
        states: Vec::new(),
        state_index: HashMap::new(),
        edges: Vec::new(),
        out_edges: Vec::new(),
        in_edges: Vec::new(),
        invariants: Vec::new(),
        initial: 0,
    };

    // Enumerate every discrete state in mixed-radix order.
    let radices: Vec<i64> = components
        .iter()
        .map(|c| c.locations.len() as i64)
        .chain(product.vars.iter().map(|v| v.max - v.min + 1))
        .collect();
    let n_locs = components.len();
    for mut idx in 0..size as usize {
        let mut digits = vec![0i64; radices.len()];
        for k in (0..radices.len()).rev() {
            digits[k] = idx as i64 % radices[k];
            idx /= radices[k] as usize;
        }
        let ds = DiscreteState {
            locs: digits[..n_locs].iter().map(|&d| d as usize).collect(),
            vals: digits[n_locs..]
                .iter()
                .zip(&product.vars)
                .map(|(&d, v)| v.min + d)
                .collect(),
        };
        product.state_index.insert(ds.clone(), product.states.len());
        product.states.push(ds);
    }

    let initial = DiscreteState {
        locs: components.iter().map(|c| c.initial).collect(),
        vals: product.vars.iter().map(|v| v.initial).collect(),
    };
    product.initial = product.state_index[&initial];

    let nclocks = product.clock_count();
    product.invariants = (0..product.states.len())
        .map(|s| {
            let mut cons = Vec::new();
            for (c, cc) in product.component_invariant_conjuncts(s) {
                cons.extend(cc.lower(|n| product.clock_index[c][n]));
            }
            Zone::from_constraints(nclocks, &cons)
        })
        .collect();

    // Guards and resets per transition are state independent.
    let lowered: Vec<(Option<Zone>, Vec<usize>)> = product
        .transitions
        .iter()
        .map(|t| {
            let mut cons = Vec::new();
            let mut resets = Vec::new();
            for &(c, k) in &t.parts {
                let e = &product.components[c].edges[k];
                for cc in &e.guard.clocks {
                    cons.extend(cc.lower(|n| product.clock_index[c][n]));
                }
                for r in &e.resets {
                    let idx = product.clock_index[c][r];
                    if !resets.contains(&idx) {
                        resets.push(idx);
                    }
                }
            }
            resets.sort_unstable();
            (Zone::from_constraints(nclocks, &cons), resets)
        })
        .collect();

    // Transitions grouped by the source location of each participant.
    let mut by_first: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (ti, t) in product.transitions.iter().enumerate() {
        let (c, k) = t.parts[0];
        by_first
            .entry((c, product.components[c].edges[k].src))
            .or_default()
            .push(ti);
    }

    let n_states = product.states.len();
    product.out_edges = vec![Vec::new(); n_states];
    product.in_edges = vec![Vec::new(); n_states];
    for s in 0..n_states {
        let ds = product.states[s].clone();
        for c in 0..n_locs {
            let Some(ts) = by_first.get(&(c, ds.locs[c])) else {
                continue;
            };
            for &ti in ts {
                let t = &product.transitions[ti];
                let matches = t
                    .parts
                    .iter()
                    .all(|&(pc, k)| product.components[pc].edges[k].src == ds.locs[pc]);
                if !matches {
                    continue;
                }
                let Ok(vals) = product.apply_ints(t, &ds.vals) else {
                    continue;
                };
                let mut locs = ds.locs.clone();
                for &(pc, k) in &t.parts {
                    locs[pc] = product.components[pc].edges[k].dst;
                }
                let dst = product.state_index[&DiscreteState { locs, vals }];
                let (guard, resets) = lowered[ti].clone();
                let id = product.edges.len();
                product.edges.push(ProductEdge {
                    src: s,
                    dst,
                    transition: ti,
                    guard,
                    resets,
                    controllable: t.controllable,
                });
                product.out_edges[s].push(id);
                product.in_edges[dst].push(id);
            }
        }
    }
    Ok(product)
}

impl fmt::Display for Tga {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "automaton {} (clocks: {})",
            self.name,
            self.clocks.join(", ")
        )?;
        for v in &self.vars {
            writeln!(
                f,
                "  {} int[{},{}] {} = {}",
                if v.global { "global" } else { "local" },
                v.min,
                v.max,
                v.name,
                v.initial
            )?;
        }
        for (i, l) in self.locations.iter().enumerate() {
            let inv: Vec<String> = l.invariant.iter().map(ToString::to_string).collect();
            let mark = if i == self.initial { " (initial)" } else { "" };
            if inv.is_empty() {
                writeln!(f, "  location {}{}", l.name, mark)?;
            } else {
                writeln!(f, "  location {}{} inv {}", l.name, mark, inv.join(" && "))?;
            }
        }
        for e in &self.edges {
            let mut effects: Vec<String> = e.resets.iter().map(|r| format!("{r} := 0")).collect();
            effects.extend(e.updates.iter().map(|u| format!("{} := {}", u.var, u.expr)));
            writeln!(
                f,
                "  {} -> {} {{ {}, {}{}, {} }}",
                self.locations[e.src].name,
                self.locations[e.dst].name,
                e.guard,
                e.action,
                if e.action.controllable {
                    ""
                } else {
                    " (uncontrollable)"
                },
                if effects.is_empty() {
                    "1".to_string()
                } else {
                    effects.join(", ")
                }
            )?;
        }
        Ok(())
    }
}
