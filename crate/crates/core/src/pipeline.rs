//! Stages from configuration to verified simulation, and the JSON
//! artifacts passed between them. Every artifact records the hash of what
//! it was built from, so a stage refuses stale inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::automata::{compose_with_budget, ComposeError, ProductTga, Tga};
use crate::config::{ConfigError, EarlyRule, ProjectConfig};
use crate::etc::{
    build_tga_cl, build_tga_clim, build_tga_net, compute_bounds, compute_transitions,
    partition_plane, write_diagnostics, BoundsSettings, EarlyParams, EtcError, InitialRegions,
    LoopAbstraction, TransitionSettings,
};
use crate::game::{
    check_inductive, explain_losing, extract_strategy, format_strategy, solve_safety, Decision,
    GameError, InductivenessReport, SolveOptions, Strategy, StrategyRow, WinningSet,
};
use crate::sim::{
    simulate, verify_trace, LoopRuntime, LyapunovCert, SimConfig, SimError, SimTrace,
    VerificationReport, VerifySpec,
};
use crate::zones::{Federation, Zone};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Etc(#[from] EtcError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed artifact {path}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{artifact} was built from different inputs; rerun the earlier stages")]
    Stale { artifact: String },
    #[error("{artifact} has schema version {found}, expected {SCHEMA_VERSION}")]
    Schema { artifact: String, found: u32 },
    #[error("initial state is not winning:\n{0}")]
    NotWinning(String),
    #[error("synthesized strategy failed the inductiveness check: {0}")]
    NotInductive(String),
    #[error("{0}")]
    Invalid(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_hash(cfg: &ProjectConfig) -> String {
    sha256_hex(&serde_json::to_vec(&cfg.model_part()).expect("configuration serializes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionArtifact {
    pub schema_version: u32,
    pub config_hash: String,
    pub loops: Vec<LoopAbstraction>,
    /// Network automaton first, then one automaton per loop.
    pub automata: Vec<Tga>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub abstraction_hash: String,
    pub components: Vec<Tga>,
    pub location_budget: usize,
}

impl ModelArtifact {
    pub fn product(&self) -> Result<ProductTga, PipelineError> {
        Ok(compose_with_budget(&self.components, self.location_budget)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub state: String,
    pub set: Federation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinningArtifact {
    pub schema_version: u32,
    pub model_hash: String,
    pub clocks: usize,
    pub initial_winning: bool,
    /// Only states with a nonempty set are listed.
    pub states: Vec<(usize, LabeledSet)>,
}

impl WinningArtifact {
    pub fn to_winning_set(&self, state_count: usize) -> WinningSet {
        let mut sets = vec![Federation::empty(self.clocks); state_count];
        for (s, l) in &self.states {
            sets[*s] = l.set.clone();
        }
        WinningSet { sets }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub zone: Zone,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyArtifact {
    pub schema_version: u32,
    pub model_hash: String,
    pub states: Vec<(usize, String, Vec<StrategyEntry>)>,
}

impl StrategyArtifact {
    pub fn to_strategy(&self, state_count: usize) -> Strategy {
        let mut rows = vec![Vec::new(); state_count];
        for (s, _, entries) in &self.states {
            rows[*s] = entries
                .iter()
                .map(|e| StrategyRow {
                    zone: e.zone.clone(),
                    decision: e.decision,
                })
                .collect();
        }
        Strategy { rows }
    }
}

/// Results of the abstraction stage.
pub fn abstract_loops(
    cfg: &ProjectConfig,
) -> Result<(AbstractionArtifact, Vec<String>), PipelineError> {
    cfg.validate()?;
    let partition = partition_plane(cfg.q)?;
    let trig = cfg.trigger();
    let settings = BoundsSettings {
        scale: cfg.scale,
        samples_per_region: cfg.sampling.bounds_directions,
        margin_ticks: cfg.sampling.margin_ticks,
    };
    let tsettings = TransitionSettings {
        directions: cfg.sampling.transition_directions,
        step: cfg.sampling.transition_step,
        inflate: cfg.sampling.inflate,
    };
    let mut loops = Vec::new();
    let mut diagnostics = Vec::new();
    let mut automata = vec![build_tga_net(cfg.delta_ticks())];
    for l in &cfg.loops {
        let plant = l.plant();
        let (bounds, measured) = compute_bounds(&plant, &partition, &trig, &settings)?;
        let early = match &cfg.early {
            EarlyRule::None => None,
            EarlyRule::Offset { offset } => Some(EarlyParams::from_offset(
                &bounds,
                (offset * cfg.scale as f64).round() as i64,
            )),
            EarlyRule::Table { lower, upper } => Some(EarlyParams {
                lower: lower.clone(),
                upper: upper.clone(),
            }),
        };
        if let Some(e) = &early {
            e.check(&bounds)?;
        }
        let transitions =
            compute_transitions(&plant, &partition, &bounds, early.as_ref(), &tsettings)?;
        let abs = LoopAbstraction {
            name: l.name.clone(),
            partition,
            sigmas: cfg.sigmas.clone(),
            tau_cap: cfg.tau_cap,
            bounds,
            transitions,
            early,
        };
        let initial = match &cfg.initial_regions {
            Some(set) => InitialRegions::Set(set.iter().map(|s| s - 1).collect()),
            None => InitialRegions::Single(partition.region_of(l.initial)),
        };
        let tga = match cfg.ear_max {
            Some(m) => build_tga_clim(&abs, &initial, m)?,
            None => build_tga_cl(&abs, &initial)?,
        };
        let mut csv = Vec::new();
        write_diagnostics(&abs, Some(&measured), &mut csv)?;
        diagnostics.push(String::from_utf8(csv).expect("csv output is utf-8"));
        automata.push(tga);
        loops.push(abs);
    }
    Ok((
        AbstractionArtifact {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash(cfg),
            loops,
            automata,
        },
        diagnostics,
    ))
}

pub fn compose_model(
    cfg: &ProjectConfig,
    abs: &AbstractionArtifact,
    abs_hash: &str,
) -> Result<(ModelArtifact, ProductTga), PipelineError> {
    if abs.config_hash != config_hash(cfg) {
        return Err(PipelineError::Stale {
            artifact: "abstraction".into(),
        });
    }
    let model = ModelArtifact {
        schema_version: SCHEMA_VERSION,
        abstraction_hash: abs_hash.to_string(),
        components: abs.automata.clone(),
        location_budget: cfg.solver.location_budget,
    };
    let product = model.product()?;
    Ok((model, product))
}

/// States whose network location is `Bad`.
pub fn bad_states(p: &ProductTga) -> Vec<bool> {
    let net = p.component_index("net");
    (0..p.state_count())
        .map(|s| {
            net.is_some_and(|c| {
                p.location_role(s, c) == Some(crate::automata::LocationRole::NetBad)
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub winning: WinningSet,
    pub strategy: Strategy,
    pub inductive: InductivenessReport,
    pub initial_winning: bool,
    pub counterexample: Vec<String>,
    pub updates: usize,
}

pub fn synthesize(cfg: &ProjectConfig, p: &ProductTga) -> Result<Synthesis, PipelineError> {
    let bad = bad_states(p);
    let opts = SolveOptions {
        max_updates: cfg.solver.max_updates,
        record_history: false,
        reachable_only: cfg.solver.reachable_only,
    };
    let sol = solve_safety(p, &bad, &opts)?;
    let initial_winning = sol.initial_winning(p);
    let strategy = extract_strategy(p, &sol.winning);
    let inductive = check_inductive(p, &bad, &sol.winning, &strategy);
    let counterexample = if initial_winning {
        Vec::new()
    } else {
        explain_losing(p, &bad, &sol.winning, &p.initial_state(), 50)
            .into_iter()
            .map(|s| {
                format!(
                    "{} clocks {:?} wait {} then {}",
                    s.state, s.clocks, s.delay, s.action
                )
            })
            .collect()
    };
    Ok(Synthesis {
        winning: sol.winning,
        strategy,
        inductive,
        initial_winning,
        counterexample,
        updates: sol.updates,
    })
}

pub fn winning_artifact(p: &ProductTga, syn: &Synthesis, model_hash: &str) -> WinningArtifact {
    WinningArtifact {
        schema_version: SCHEMA_VERSION,
        model_hash: model_hash.to_string(),
        clocks: p.clock_count(),
        initial_winning: syn.initial_winning,
        states: syn
            .winning
            .sets
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_empty())
            .map(|(s, f)| {
                (
                    s,
                    LabeledSet {
                        state: p.state_label(s),
                        set: f.clone(),
                    },
                )
            })
            .collect(),
    }
}

pub fn strategy_artifact(
    p: &ProductTga,
    strategy: &Strategy,
    model_hash: &str,
) -> StrategyArtifact {
    StrategyArtifact {
        schema_version: SCHEMA_VERSION,
        model_hash: model_hash.to_string(),
        states: strategy
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_empty())
            .map(|(s, rows)| {
                let entries = rows
                    .iter()
                    .map(|r| StrategyEntry {
                        zone: r.zone.clone(),
                        decision: r.decision,
                        transition: match r.decision {
                            Decision::Fire { edge } => Some(p.edge_label(edge)),
                            Decision::Delay => None,
                        },
                    })
                    .collect();
                (s, p.state_label(s), entries)
            })
            .collect(),
    }
}

/// One simulation run per seed, each verified.
pub fn simulate_runs(
    cfg: &ProjectConfig,
    abs: &AbstractionArtifact,
    p: &ProductTga,
    strategy: &Strategy,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<Vec<(SimTrace, VerificationReport)>, PipelineError> {
    let plants: Vec<_> = cfg.loops.iter().map(|l| l.plant()).collect();
    let runtimes: Vec<LoopRuntime> = abs
        .loops
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let component = p.component_index(&a.name).ok_or_else(|| {
                PipelineError::Invalid(format!("loop `{}` missing from the model", a.name))
            })?;
            Ok(LoopRuntime {
                plant: &plants[i],
                abs: a,
                component,
                initial: cfg.loops[i].initial,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    let spec = VerifySpec {
        delta_ticks: cfg.delta_ticks(),
        ear_max: cfg.ear_max,
        loops: abs.loops.iter().collect(),
        certs: plants.iter().map(LyapunovCert::for_loop).collect(),
    };
    let mut out = Vec::new();
    for seed in seeds {
        let sc = SimConfig {
            horizon: cfg.sim.horizon,
            seed,
            perturb_initial: cfg.sim.perturb_initial,
            record_step: cfg.sim.record_step,
        };
        let trace = simulate(p, strategy, &runtimes, &sc)?;
        let report = verify_trace(&trace, &spec);
        out.push((trace, report));
    }
    Ok(out)
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated artifact under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, PipelineError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })?;
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, String), PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value = serde_json::from_slice(&bytes).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })?;
    Ok((value, sha256_hex(&bytes)))
}

fn check_schema(artifact: &str, found: u32) -> Result<(), PipelineError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(PipelineError::Schema {
            artifact: artifact.into(),
            found,
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Abstract,
    Compose,
    Synthesize,
    Simulate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Abstract,
        Stage::Compose,
        Stage::Synthesize,
        Stage::Simulate,
    ];
}

/// File-based stages working in one output directory.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub cfg: ProjectConfig,
    pub out: PathBuf,
    pub print_strategy: bool,
}

#[derive(Clone, Debug, Default)]
pub struct StageSummary {
    pub lines: Vec<String>,
}

impl Workspace {
    pub fn new(cfg: ProjectConfig, out: impl Into<PathBuf>) -> Workspace {
        Workspace {
            cfg,
            out: out.into(),
            print_strategy: false,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        match stage {
            Stage::Abstract => self.run_abstract(),
            Stage::Compose => self.run_compose(),
            Stage::Synthesize => self.run_synthesize(),
            Stage::Simulate => self.run_simulate(),
        }
    }

    fn run_abstract(&self) -> Result<StageSummary, PipelineError> {
        let (abs, diagnostics) = abstract_loops(&self.cfg)?;
        for (l, csv) in abs.loops.iter().zip(&diagnostics) {
            write_atomic(
                &self.path(&format!("bounds_{}.csv", l.name)),
                csv.as_bytes(),
            )?;
        }
        let text: String = abs
            .automata
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("\n");
        write_atomic(&self.path("automata.txt"), text.as_bytes())?;
        write_json(&self.path("abstraction.json"), &abs)?;
        let mut s = StageSummary::default();
        for (l, tga) in abs.loops.iter().zip(&abs.automata[1..]) {
            s.lines.push(format!(
                "{}: {} locations, {} edges",
                l.name,
                tga.locations.len(),
                tga.edges.len()
            ));
        }
        Ok(s)
    }

    fn load_abstraction(&self) -> Result<(AbstractionArtifact, String), PipelineError> {
        let (abs, hash): (AbstractionArtifact, String) = read_json(&self.path("abstraction.json"))?;
        check_schema("abstraction.json", abs.schema_version)?;
        if abs.config_hash != config_hash(&self.cfg) {
            return Err(PipelineError::Stale {
                artifact: "abstraction.json".into(),
            });
        }
        Ok((abs, hash))
    }

    fn load_model(&self) -> Result<(ModelArtifact, ProductTga, String), PipelineError> {
        let (_, abs_hash) = self.load_abstraction()?;
        let (model, hash): (ModelArtifact, String) = read_json(&self.path("model.json"))?;
        check_schema("model.json", model.schema_version)?;
        if model.abstraction_hash != abs_hash {
            return Err(PipelineError::Stale {
                artifact: "model.json".into(),
            });
        }
        let product = model.product()?;
        Ok((model, product, hash))
    }

    fn run_compose(&self) -> Result<StageSummary, PipelineError> {
        let (abs, abs_hash) = self.load_abstraction()?;
        let (model, product) = compose_model(&self.cfg, &abs, &abs_hash)?;
        write_json(&self.path("model.json"), &model)?;
        Ok(StageSummary {
            lines: vec![format!(
                "product: {} discrete states, {} edges, {} clocks",
                product.state_count(),
                product.edges.len(),
                product.clock_count()
            )],
        })
    }

    fn run_synthesize(&self) -> Result<StageSummary, PipelineError> {
        let (_, product, model_hash) = self.load_model()?;
        let syn = synthesize(&self.cfg, &product)?;
        write_json(
            &self.path("winning.json"),
            &winning_artifact(&product, &syn, &model_hash),
        )?;
        let mut lines = vec![format!(
            "fixed point after {} updates; {} of {} discrete states winning",
            syn.updates,
            syn.winning.winning_states(),
            product.state_count()
        )];
        if !syn.initial_winning {
            let report = format!("{}\n{}", lines[0], syn.counterexample.join("\n"));
            write_atomic(&self.path("counterexample.txt"), report.as_bytes())?;
            return Err(PipelineError::NotWinning(report));
        }
        if !syn.inductive.ok() {
            let v: Vec<String> = syn
                .inductive
                .violations
                .iter()
                .take(5)
                .map(|v| format!("{:?} in {}: {}", v.kind, v.state, v.witness))
                .collect();
            return Err(PipelineError::NotInductive(v.join("; ")));
        }
        write_json(
            &self.path("strategy.json"),
            &strategy_artifact(&product, &syn.strategy, &model_hash),
        )?;
        let printed = format_strategy(&product, &syn.strategy);
        write_atomic(&self.path("strategy.txt"), printed.as_bytes())?;
        if self.print_strategy {
            lines.push(printed);
        }
        lines.push(format!(
            "strategy: {} rows, inductive",
            syn.strategy.row_count()
        ));
        Ok(StageSummary { lines })
    }

    fn run_simulate(&self) -> Result<StageSummary, PipelineError> {
        let (abs, _) = self.load_abstraction()?;
        let (_, product, model_hash) = self.load_model()?;
        let (art, _): (StrategyArtifact, String) = read_json(&self.path("strategy.json"))?;
        check_schema("strategy.json", art.schema_version)?;
        if art.model_hash != model_hash {
            return Err(PipelineError::Stale {
                artifact: "strategy.json".into(),
            });
        }
        let strategy = art.to_strategy(product.state_count());
        let first = self.cfg.sim.seed;
        let runs = simulate_runs(
            &self.cfg,
            &abs,
            &product,
            &strategy,
            first..first + self.cfg.sim.runs as u64,
        )?;
        let mut lines = Vec::new();
        let mut failed = 0;
        for (k, (trace, report)) in runs.iter().enumerate() {
            if k == 0 {
                trace.write_csv(&self.path("sim"))?;
            }
            if !report.ok() {
                failed += 1;
                lines.extend(report.messages.iter().take(5).cloned());
            }
        }
        let (trace, report) = &runs[0];
        for (i, name) in trace.loop_names.iter().enumerate() {
            let early = trace
                .updates(i)
                .filter(|e| e.mechanism == crate::sim::Mechanism::Early)
                .count();
            lines.push(format!(
                "{name}: {} updates ({early} early), coefficient use {:?}",
                trace.updates(i).count(),
                trace.coefficient_use[i]
            ));
        }
        lines.push(format!(
            "verification: {} run(s), {failed} failed; first run max earNum {}, conflicts {}",
            runs.len(),
            report.max_ear_num,
            report.conflicts
        ));
        write_atomic(&self.path("verification.txt"), lines.join("\n").as_bytes())?;
        if failed > 0 {
            return Err(PipelineError::Invalid(format!(
                "{failed} simulation run(s) failed verification"
            )));
        }
        Ok(StageSummary { lines })
    }
}

/// Validates `cfg` and runs the requested stages in order. An empty stage
/// list only validates.
pub fn run_pipeline(
    cfg: &ProjectConfig,
    stages: &[Stage],
    out: &Path,
    print_strategy: bool,
) -> Result<StageSummary, PipelineError> {
    cfg.validate()?;
    let ws = Workspace {
        cfg: cfg.clone(),
        out: out.to_path_buf(),
        print_strategy,
    };
    let mut all = StageSummary::default();
    for &stage in stages {
        all.lines.extend(ws.run(stage)?.lines);
    }
    Ok(all)
}
