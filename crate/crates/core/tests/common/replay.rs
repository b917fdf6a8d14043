//! Step-by-step replay of a short scheduling run on a hand-built two-loop
//! network with two coefficients and early updates.

use std::collections::BTreeSet;

use tgasched::automata::{compose, ConcreteState, EdgeTag, ProductTga, StepError};
use tgasched::etc::{
    build_tga_cl, build_tga_net, partition_plane, EarlyParams, InitialRegions, LoopAbstraction,
    TimingBounds, TransitionMap,
};

pub const DELTA: i64 = 2;
/// Lower end of the early window in region 1.
pub const D1: i64 = 3;

fn hand_loop(name: &str) -> LoopAbstraction {
    let q = 4;
    let all: BTreeSet<usize> = (0..q).collect();
    LoopAbstraction {
        name: name.into(),
        partition: partition_plane(q).unwrap(),
        sigmas: vec![0.02, 0.05],
        tau_cap: 1.0,
        bounds: TimingBounds {
            scale: 1,
            lower: vec![vec![5, 7]; q],
            upper: vec![vec![6, 9]; q],
        },
        transitions: TransitionMap {
            etc: vec![vec![all.clone(); 2]; q],
            early: vec![all; q],
        },
        early: Some(EarlyParams {
            lower: vec![D1; q],
            upper: vec![5; q],
        }),
    }
}

pub fn model() -> ProductTga {
    let cl1 = build_tga_cl(&hand_loop("cl1"), &InitialRegions::Single(0)).unwrap();
    let cl2 = build_tga_cl(&hand_loop("cl2"), &InitialRegions::Single(1)).unwrap();
    compose(&[build_tga_net(DELTA), cl1, cl2]).unwrap()
}

fn tuple(p: &ProductTga, s: &ConcreteState) -> (Vec<String>, Vec<f64>) {
    (
        (0..3).map(|c| p.location_name(s.state, c)).collect(),
        s.clocks.clone(),
    )
}

fn expect(
    p: &ProductTga,
    step: &str,
    s: &ConcreteState,
    locs: [&str; 3],
    clocks: [i64; 3],
) -> Result<(), String> {
    let want = (
        locs.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        clocks.iter().map(|&c| c as f64).collect::<Vec<_>>(),
    );
    let got = tuple(p, s);
    if got == want {
        Ok(())
    } else {
        Err(format!("{step}: expected {want:?}, got {got:?}"))
    }
}

/// The unique edge out of `s` whose parts carry the given tags.
fn find(p: &ProductTga, s: &ConcreteState, parts: &[(usize, EdgeTag)]) -> Result<usize, String> {
    let hits: Vec<usize> = p
        .out_edges(s.state)
        .iter()
        .copied()
        .filter(|&e| {
            parts
                .iter()
                .all(|(c, t)| p.part_tag(e, *c).as_ref() == Some(t))
        })
        .collect();
    match hits[..] {
        [e] => Ok(e),
        _ => Err(format!("{} matching edges for {parts:?}", hits.len())),
    }
}

fn fire(
    p: &ProductTga,
    s: &ConcreteState,
    parts: &[(usize, EdgeTag)],
) -> Result<ConcreteState, String> {
    let e = find(p, s, parts)?;
    p.discrete_step(s, e)
        .map_err(|err| format!("{}: {err}", p.edge_label(e)))
}

fn delay(p: &ProductTga, s: &ConcreteState, d: i64) -> Result<ConcreteState, String> {
    p.delay_step(s, d as f64).map_err(|e| e.to_string())
}

pub fn run() -> Result<String, String> {
    let p = model();
    let r0 = p.initial_state();
    expect(&p, "rho0", &r0, ["net.Idle", "cl1.R1", "cl2.R2"], [0, 0, 0])?;

    let r1 = fire(
        &p,
        &r0,
        &[(
            1,
            EdgeTag::ChooseCoefficient {
                region: 0,
                coeff: 1,
            },
        )],
    )?;
    expect(
        &p,
        "rho1",
        &r1,
        ["net.Idle", "cl1.R1a2", "cl2.R2"],
        [0, 0, 0],
    )?;

    let r2 = delay(&p, &r1, 0)?;
    let r2 = fire(
        &p,
        &r2,
        &[(
            2,
            EdgeTag::ChooseCoefficient {
                region: 1,
                coeff: 0,
            },
        )],
    )?;
    expect(
        &p,
        "rho2",
        &r2,
        ["net.Idle", "cl1.R1a2", "cl2.R2a1"],
        [0, 0, 0],
    )?;

    let r3 = delay(&p, &r2, D1)?;
    expect(
        &p,
        "rho3",
        &r3,
        ["net.Idle", "cl1.R1a2", "cl2.R2a1"],
        [D1, D1, D1],
    )?;

    let r4 = fire(
        &p,
        &r3,
        &[(
            1,
            EdgeTag::EarlyRequest {
                region: 0,
                coeff: 1,
            },
        )],
    )?;
    expect(
        &p,
        "rho4",
        &r4,
        ["net.Idle", "cl1.Ear1", "cl2.R2a1"],
        [D1, 0, D1],
    )?;
    // Time may not pass in the early location.
    if !matches!(p.delay_step(&r4, 0.5), Err(StepError::InvariantViolated(_))) {
        return Err("rho4: delay allowed in Ear1".into());
    }

    let r5 = delay(&p, &r4, 0)?;
    let r5 = fire(
        &p,
        &r5,
        &[
            (0, EdgeTag::NetAcquire),
            (1, EdgeTag::EarlyUpdate { region: 0, dest: 2 }),
        ],
    )?;
    expect(
        &p,
        "rho5",
        &r5,
        ["net.InUse", "cl1.R3", "cl2.R2a1"],
        [0, 0, D1],
    )?;

    let r6 = delay(&p, &r5, 0)?;
    let r6 = fire(
        &p,
        &r6,
        &[(
            1,
            EdgeTag::ChooseCoefficient {
                region: 2,
                coeff: 0,
            },
        )],
    )?;
    expect(
        &p,
        "rho6 (choice)",
        &r6,
        ["net.InUse", "cl1.R3a1", "cl2.R2a1"],
        [0, 0, D1],
    )?;
    let r6 = delay(&p, &r6, DELTA)?;
    expect(
        &p,
        "rho6",
        &r6,
        ["net.InUse", "cl1.R3a1", "cl2.R2a1"],
        [DELTA, DELTA, D1 + DELTA],
    )?;

    let r7 = fire(&p, &r6, &[(0, EdgeTag::NetRelease)])?;
    expect(
        &p,
        "rho7",
        &r7,
        ["net.Idle", "cl1.R3a1", "cl2.R2a1"],
        [DELTA, DELTA, D1 + DELTA],
    )?;

    Ok("8 states reproduced through delay and discrete steps".into())
}
