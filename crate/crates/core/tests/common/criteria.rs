//! The acceptance criteria as functions returning a one-line summary on
//! success and a reason on failure.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgasched::automata::ProductTga;
use tgasched::config::ProjectConfig;
use tgasched::etc::{
    build_tga_cl, build_tga_net, compute_bounds, inter_sample_time, partition_plane,
    BoundsSettings, InitialRegions, Integrator, TriggerConfig,
};
use tgasched::game::{
    check_inductive, extract_strategy, solve_safety, Advice, Decision, SolveOptions, Strategy,
    StrategyRow, WinningSet,
};
use tgasched::pipeline::{
    abstract_loops, compose_model, sha256_hex, simulate_runs, strategy_artifact, synthesize,
    winning_artifact, ModelArtifact, StrategyArtifact, Synthesis, WinningArtifact,
};
use tgasched::sim::Mechanism;
use tgasched::zones::Federation;

use super::grid::{self, Grid, RawFed};
use super::instances::{solver_suite, tiny_loop, Instance};
use super::regions::{self, RegionSpace};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const CASES: usize = 1000;
const MAXC: i64 = 8;

/// Clock count and constant bound of case `k`; three-clock cases use
/// smaller constants to keep the exhaustive grid small.
fn shape(k: usize) -> (usize, i64) {
    match k % 3 {
        0 => (1, MAXC),
        1 => (2, MAXC),
        _ => (3, 4),
    }
}

/// Compares a federation against a point predicate on the whole grid.
fn agree(f: &Federation, g: &Grid, pred: impl Fn(usize, &[i64]) -> bool) -> Option<Vec<i64>> {
    g.points
        .iter()
        .enumerate()
        .find(|(i, p)| f.contains_ratio(p, grid::DEN) != pred(*i, p))
        .map(|(_, p)| p.clone())
}

pub fn t1_zone_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grids = [Grid::new(1, MAXC), Grid::new(2, MAXC), Grid::new(3, 4)];
    let mut checked = 0usize;
    let fail = |op: &str, case: usize, p: Vec<i64>| {
        Err(format!("{op} case {case} disagrees at {p:?}/{}", grid::DEN))
    };

    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let a = RawFed {
            clocks: n,
            zones: vec![grid::random_zone(&mut rng, n, c)],
        };
        let b = RawFed {
            clocks: n,
            zones: vec![grid::random_zone(&mut rng, n, c)],
        };
        let got = a.federation().intersect(&b.federation());
        if let Some(p) = agree(&got, g, |_, p| {
            a.holds(p, grid::DEN) && b.holds(p, grid::DEN)
        }) {
            return fail("intersect", k, p);
        }
        checked += 1;
    }
    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let a = grid::random_fed(&mut rng, n, c, 2);
        let resets: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        let got = a
            .federation()
            .reset(&resets.iter().map(|r| r + 1).collect::<Vec<_>>());
        if let Some(p) = agree(&got, g, |_, p| grid::in_reset(&a, &resets, p, c)) {
            return fail("reset", k, p);
        }
        checked += 1;
    }
    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let a = grid::random_fed(&mut rng, n, c, 2);
        let f = a.federation();
        let up = grid::up_table(&a, g);
        if let Some(p) = agree(&f.up(), g, |i, _| up[i]) {
            return fail("elapse future", k, p);
        }
        let down = grid::down_table(&a, g);
        if let Some(p) = agree(&f.down(), g, |i, _| down[i]) {
            return fail("elapse past", k, p);
        }
        checked += 1;
    }
    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let a = grid::random_fed(&mut rng, n, c, 3);
        let b = grid::random_fed(&mut rng, n, c, 3);
        let diff = a.federation().subtract(&b.federation());
        if let Some(p) = agree(&diff, g, |_, p| {
            a.holds(p, grid::DEN) && !b.holds(p, grid::DEN)
        }) {
            return fail("subtract", k, p);
        }
        checked += 1;
    }
    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let a = grid::random_fed(&mut rng, n, c, 2);
        // Half the cases compare against a superset so both answers occur.
        let b = if k % 2 == 0 {
            let mut b = a.clone();
            b.zones.extend(grid::random_fed(&mut rng, n, c, 2).zones);
            b
        } else {
            grid::random_fed(&mut rng, n, c, 3)
        };
        let expected = g
            .points
            .iter()
            .all(|p| !a.holds(p, grid::DEN) || b.holds(p, grid::DEN));
        if a.federation().is_subset(&b.federation()) != expected {
            return Err(format!("fed_leq case {k} returned {}", !expected));
        }
        checked += 1;
    }
    for k in 0..CASES {
        let (n, c) = shape(k);
        let g = &grids[n - 1];
        let goal = grid::random_fed(&mut rng, n, c, 2);
        let avoid = grid::random_fed(&mut rng, n, c, 2);
        let got = Federation::pred_t(&goal.federation(), &avoid.federation());
        let table = grid::pred_t_table(&goal, &avoid, g);
        if let Some(p) = agree(&got, g, |i, _| table[i]) {
            return fail("pred_t", k, p);
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} cases over 6 operations, up to 3 clocks, constants <= {MAXC}"
    ))
}

/// Region-level comparison of one instance; returns the synthesized
/// strategy when the initial state is winning.
pub fn compare_with_regions(inst: &Instance) -> Result<(WinningSet, Strategy), String> {
    let p = &inst.product;
    let opts = SolveOptions {
        reachable_only: false,
        ..SolveOptions::default()
    };
    let sol = solve_safety(p, &inst.bad, &opts).map_err(|e| format!("{}: {e}", inst.name))?;
    let space = RegionSpace::new(p.clock_count(), inst.maxc);
    let oracle = regions::solve(p, &inst.bad, &space);
    for s in 0..p.state_count() {
        for (r, rep) in space.reps.iter().enumerate() {
            let zone = sol.winning.sets[s].contains_ratio(rep, space.den);
            if zone != oracle[s][r] {
                return Err(format!(
                    "{}: state {} at {:?}/{}: solver {zone}, oracle {}",
                    inst.name,
                    p.state_label(s),
                    rep,
                    space.den,
                    oracle[s][r]
                ));
            }
        }
    }
    let strategy = extract_strategy(p, &sol.winning);
    for s in 0..p.state_count() {
        for (r, rep) in space.reps.iter().enumerate() {
            if !oracle[s][r] {
                continue;
            }
            match strategy.advise_ratio(s, rep, space.den) {
                Advice::Fire(e) => {
                    let pe = &p.edges[e];
                    let ok = pe.controllable
                        && pe.src == s
                        && pe
                            .guard
                            .as_ref()
                            .is_some_and(|g| g.contains_ratio(rep, space.den))
                        && oracle[pe.dst][space.reset(r, &pe.resets)];
                    ensure(ok, || {
                        format!(
                            "{}: unsafe advice {} at {rep:?}",
                            inst.name,
                            p.edge_label(e)
                        )
                    })?;
                }
                Advice::Delay => {}
                Advice::NotWinning => {
                    return Err(format!("{}: no advice at winning {rep:?}", inst.name))
                }
            }
        }
    }
    Ok((sol.winning, strategy))
}

pub fn t2_solver_oracle() -> Outcome {
    let suite = solver_suite(16, 2);
    let mut winning_initial = 0;
    for inst in &suite {
        ensure(inst.product.state_count() <= 12, || {
            format!("{} is too large", inst.name)
        })?;
        let (w, _) = compare_with_regions(inst)?;
        if !w.sets[inst.product.initial].is_empty() {
            winning_initial += 1;
        }
    }
    Ok(format!(
        "{} instances agree on every region ({} with a winning initial location)",
        suite.len(),
        winning_initial
    ))
}

/// Mutations of a synthesized result that must each be caught.
fn mutants(
    p: &ProductTga,
    bad: &[bool],
    w: &WinningSet,
    s: &Strategy,
) -> Vec<(String, WinningSet, Strategy)> {
    let mut out = Vec::new();
    let winning: Vec<usize> = (0..p.state_count())
        .filter(|&k| !w.sets[k].is_empty())
        .collect();
    // Bad location declared winning.
    if let Some(b) = (0..p.state_count()).find(|&k| bad[k]) {
        let mut m = w.clone();
        m.sets[b] = Federation::from_option(p.clock_count(), p.invariant(b).cloned());
        out.push(("bad state winning".into(), m, s.clone()));
    }
    // Grow a winning set to its full invariant.
    for &k in &winning {
        if let Some(inv) = p.invariant(k) {
            let full = Federation::from_zone(inv.clone());
            if !full.is_subset(&w.sets[k]) {
                let mut m = w.clone();
                m.sets[k] = full;
                out.push((format!("grown {}", p.state_label(k)), m, s.clone()));
            }
        }
    }
    // Fire rows redirected to an edge leaving the winning set.
    for &k in &winning {
        for (i, row) in s.rows[k].iter().enumerate() {
            for &e in p.out_edges(k) {
                let pe = &p.edges[e];
                let lands_bad = bad[pe.dst] || w.sets[pe.dst].is_empty();
                if pe.controllable
                    && lands_bad
                    && matches!(row.decision, Decision::Fire { .. } | Decision::Delay)
                {
                    let mut m = s.clone();
                    m.rows[k][i] = StrategyRow {
                        zone: row.zone.clone(),
                        decision: Decision::Fire { edge: e },
                    };
                    out.push((
                        format!("row {i} of {} fires {}", p.state_label(k), p.edge_label(e)),
                        w.clone(),
                        m,
                    ));
                    break;
                }
            }
        }
    }
    // Rows dropped, leaving part of the winning set uncovered.
    for &k in &winning {
        if !s.rows[k].is_empty() {
            let mut m = s.clone();
            m.rows[k].clear();
            out.push((
                format!("rows of {} removed", p.state_label(k)),
                w.clone(),
                m,
            ));
        }
    }
    // Delay rows turned into fire rows of edges disabled there.
    for &k in &winning {
        for (i, row) in s.rows[k].iter().enumerate() {
            if row.decision != Decision::Delay {
                continue;
            }
            if let Some(&e) = p.out_edges(k).iter().find(|&&e| {
                let pe = &p.edges[e];
                pe.controllable
                    && pe
                        .guard
                        .as_ref()
                        .is_none_or(|g| g.intersect(&row.zone).is_none())
            }) {
                let mut m = s.clone();
                m.rows[k][i].decision = Decision::Fire { edge: e };
                out.push((
                    format!("disabled edge in {}", p.state_label(k)),
                    w.clone(),
                    m,
                ));
                break;
            }
        }
    }
    out
}

fn single_loop_instance() -> Instance {
    let l = tiny_loop("l", &[3, 2], &[4, 3], &[&[0, 1], &[0]], None);
    Instance::new(
        "net with one loop",
        vec![
            build_tga_net(2),
            build_tga_cl(&l, &InitialRegions::Single(0)).unwrap(),
        ],
        4,
    )
}

pub fn t3_inductiveness(
    extra: &[(String, ProductTga, Vec<bool>, WinningSet, Strategy)],
) -> Outcome {
    let mut synthesized: Vec<(String, ProductTga, Vec<bool>, WinningSet, Strategy)> = Vec::new();
    for inst in solver_suite(16, 2)
        .into_iter()
        .chain([single_loop_instance()])
    {
        let (w, s) = compare_with_regions(&inst)?;
        synthesized.push((inst.name.clone(), inst.product, inst.bad, w, s));
    }
    let mut strategies = 0;
    for (name, p, bad, w, s) in synthesized.iter().chain(extra) {
        let report = check_inductive(p, bad, w, s);
        ensure(report.ok(), || {
            format!("{name}: {:?}", report.violations.first())
        })?;
        strategies += 1;
    }
    let (mut total, mut caught) = (0, 0);
    let mut missed = Vec::new();
    for (name, p, bad, w, s) in synthesized.iter().chain(extra) {
        if w.sets[p.initial].is_empty() {
            continue;
        }
        for (what, mw, ms) in mutants(p, bad, w, s) {
            total += 1;
            if check_inductive(p, bad, &mw, &ms).ok() {
                missed.push(format!("{name}: {what}"));
            } else {
                caught += 1;
            }
        }
    }
    ensure(total >= 10, || format!("only {total} mutants generated"))?;
    ensure(missed.is_empty(), || {
        format!(
            "{} of {total} mutants undetected: {:?}",
            missed.len(),
            &missed[..missed.len().min(3)]
        )
    })?;
    Ok(format!(
        "{strategies} strategies inductive; {caught}/{total} mutants detected"
    ))
}

/// Synthesis plus seeded simulations of a configuration.
pub struct Experiment {
    pub synthesis: Synthesis,
    pub product: ProductTga,
    pub summary: String,
}

pub fn run_experiment(
    cfg: &ProjectConfig,
    runs: u64,
    check: impl Fn(&tgasched::sim::SimTrace) -> Result<(), String>,
) -> Result<Experiment, String> {
    let (abs, _) = abstract_loops(cfg).map_err(|e| e.to_string())?;
    let abs_hash = sha256_hex(&serde_json::to_vec(&abs).unwrap());
    let (_, p) = compose_model(cfg, &abs, &abs_hash).map_err(|e| e.to_string())?;
    let syn = synthesize(cfg, &p).map_err(|e| e.to_string())?;
    if !syn.initial_winning {
        return Err(format!(
            "initial state losing: {} of {} discrete states winning (q = {})",
            syn.winning.winning_states(),
            p.state_count(),
            cfg.q
        ));
    }
    ensure(syn.inductive.ok(), || {
        format!(
            "strategy not inductive: {:?}",
            syn.inductive.violations.first()
        )
    })?;
    let results =
        simulate_runs(cfg, &abs, &p, &syn.strategy, 0..runs).map_err(|e| e.to_string())?;
    let mut updates = 0;
    for (seed, (trace, report)) in results.iter().enumerate() {
        ensure(report.ok(), || {
            format!("seed {seed}: {:?}", report.messages.first())
        })?;
        check(trace).map_err(|e| format!("seed {seed}: {e}"))?;
        updates += trace.events.len();
    }
    Ok(Experiment {
        summary: format!("{runs} runs verified, {updates} updates"),
        synthesis: syn,
        product: p,
    })
}

pub fn t4_experiment1() -> Outcome {
    let cfg = super::exp1_config();
    ensure(
        cfg.q == 16 && cfg.delta_ticks() == 5 && cfg.ear_max == Some(4),
        || "config drifted".into(),
    )?;
    let start = Instant::now();
    let exp = run_experiment(&cfg, 500, |_| Ok(()))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("{} in {secs:.0} s", exp.summary))
}

pub fn t5_abstraction_soundness() -> Outcome {
    let mut cfgs = vec![super::exp1_config(), super::exp2_config()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for cfg in &mut cfgs {
        let part = partition_plane(cfg.q).unwrap();
        let trig = TriggerConfig {
            sigmas: cfg.sigmas.clone(),
            sigma_bar: cfg.sigma_bar,
            tau_cap: cfg.tau_cap,
        };
        let settings = BoundsSettings {
            scale: cfg.scale,
            samples_per_region: cfg.sampling.bounds_directions,
            margin_ticks: cfg.sampling.margin_ticks,
        };
        for l in &cfg.loops {
            let plant = l.plant();
            let (bounds, _) =
                compute_bounds(&plant, &part, &trig, &settings).map_err(|e| e.to_string())?;
            let integ = Integrator::new(&plant);
            for s in 0..cfg.q {
                let lo = part.boundary(s);
                let hi = part.boundary(s + 1);
                for _ in 0..1000 {
                    let th = rng.gen_range(lo..hi);
                    let r = 10f64.powf(rng.gen_range(-2.0..3.0));
                    let x = [r * th.cos(), r * th.sin()];
                    for (j, &sigma) in cfg.sigmas.iter().enumerate() {
                        let t = inter_sample_time(&integ, x, sigma, cfg.tau_cap)
                            .map_err(|e| e.to_string())?;
                        ensure(bounds.contains(s, j, t), || {
                            format!(
                                "{} region {} sigma {sigma}: tau {t} outside [{}, {}] ticks",
                                l.name,
                                s + 1,
                                bounds.lower[s][j],
                                bounds.upper[s][j]
                            )
                        })?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} fresh samples inside their intervals"))
}

pub fn t6_experiment2() -> Outcome {
    let cfg = super::exp2_config();
    ensure(cfg.sigmas == [0.01, 0.03, 0.09], || "config drifted".into())?;
    let exp = run_experiment(&cfg, 100, |trace| {
        let used: BTreeSet<usize> = trace
            .events
            .iter()
            .filter(|e| e.mechanism == Mechanism::Etc)
            .map(|e| e.coeff)
            .collect();
        ensure(used.len() >= 2, || {
            format!("only coefficients {used:?} used")
        })
    })?;
    Ok(exp.summary)
}

pub fn t7_replay() -> Outcome {
    super::replay::run()
}

pub fn t8_roundtrip() -> Outcome {
    let cfg = super::single_loop_config();
    let build = || -> Result<(String, String, String, Vec<u8>), String> {
        let (abs, _) = abstract_loops(&cfg).map_err(|e| e.to_string())?;
        let abs_json = serde_json::to_vec(&abs).unwrap();
        let (model, p) =
            compose_model(&cfg, &abs, &sha256_hex(&abs_json)).map_err(|e| e.to_string())?;
        let model_json = serde_json::to_string(&model).unwrap();
        let model_back: ModelArtifact =
            serde_json::from_str(&model_json).map_err(|e| e.to_string())?;
        ensure(model_back == model, || "model round trip differs".into())?;
        let syn = synthesize(&cfg, &p).map_err(|e| e.to_string())?;
        ensure(syn.initial_winning, || "single loop not winning".into())?;
        let mh = sha256_hex(model_json.as_bytes());
        let wa = winning_artifact(&p, &syn, &mh);
        let w_json = serde_json::to_string(&wa).unwrap();
        let w_back: WinningArtifact = serde_json::from_str(&w_json).map_err(|e| e.to_string())?;
        let w2 = w_back.to_winning_set(p.state_count());
        ensure(w2.set_eq(&syn.winning), || {
            "winning set round trip differs".into()
        })?;
        let sa = strategy_artifact(&p, &syn.strategy, &mh);
        let s_json = serde_json::to_string(&sa).unwrap();
        let s_back: StrategyArtifact = serde_json::from_str(&s_json).map_err(|e| e.to_string())?;
        ensure(
            s_back == sa && s_back.to_strategy(p.state_count()) == syn.strategy,
            || "strategy round trip differs".into(),
        )?;
        let runs = simulate_runs(&cfg, &abs, &p, &syn.strategy, [7]).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        runs[0].0.write_csv(dir.path()).map_err(|e| e.to_string())?;
        let mut trace = Vec::new();
        for name in ["events.csv", "network.csv", "earnum.csv", "loop_tgaT.csv"] {
            trace.extend(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
        }
        Ok((model_json, w_json, s_json, trace))
    };
    let a = build()?;
    let b = build()?;
    ensure(a.0 == b.0 && a.1 == b.1, || {
        "model or winning set not reproducible".into()
    })?;
    ensure(a.2 == b.2, || "strategy not reproducible".into())?;
    ensure(a.3 == b.3, || "trace not reproducible".into())?;
    Ok(format!(
        "model, winning set and strategy round-trip; strategy and {}-byte trace reproduce bit for bit",
        a.3.len()
    ))
}
