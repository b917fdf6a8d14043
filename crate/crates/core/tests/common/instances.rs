//! Small timed games for solver cross-checks.

use rand::Rng;
use tgasched::automata::{
    compose, Action, ClockConstraint, Edge, Guard, Location, ProductTga, Rel, Tga,
};
use tgasched::etc::{
    build_tga_cl, build_tga_net, partition_plane, EarlyParams, InitialRegions, LoopAbstraction,
    TimingBounds, TransitionMap,
};

pub struct Instance {
    pub name: String,
    pub product: ProductTga,
    pub bad: Vec<bool>,
    pub maxc: i64,
}

impl Instance {
    pub fn new(name: &str, components: Vec<Tga>, maxc: i64) -> Instance {
        let product = compose(&components).expect("instance composes");
        let bad = (0..product.state_count())
            .map(|s| (0..components.len()).any(|c| product.location_name(s, c).ends_with(".Bad")))
            .collect();
        Instance {
            name: name.into(),
            product,
            bad,
            maxc,
        }
    }
}

pub fn edge(
    src: usize,
    dst: usize,
    guard: Vec<ClockConstraint>,
    name: &str,
    ctrl: bool,
    resets: &[&str],
) -> Edge {
    Edge {
        src,
        dst,
        guard: Guard::clocks(guard),
        action: Action::internal(name, ctrl),
        resets: resets.iter().map(|r| r.to_string()).collect(),
        updates: vec![],
        tag: None,
    }
}

fn c(clock: &str, rel: Rel, n: i64) -> ClockConstraint {
    ClockConstraint::single(clock, rel, n)
}

/// Controller escape from `ctrl_lo` versus environment failure from `env_lo`.
pub fn race(inv: i64, ctrl_lo: i64, env_lo: i64) -> Tga {
    Tga {
        name: "g".into(),
        clocks: vec!["x".into()],
        locations: vec![
            Location::new("A", vec![c("x", Rel::Le, inv)]),
            Location::new("Safe", vec![]),
            Location::new("Bad", vec![]),
        ],
        initial: 0,
        edges: vec![
            edge(0, 1, vec![c("x", Rel::Ge, ctrl_lo)], "go", true, &[]),
            edge(0, 2, vec![c("x", Rel::Ge, env_lo)], "fail", false, &[]),
        ],
        vars: vec![],
    }
}

/// A periodic sender whose period the controller may shorten, next to an
/// environment ticker with a fixed window. A tick within one time unit of a
/// send is a clash.
pub fn two_clock_cycle(period: i64, early: i64, env_lo: i64, env_hi: i64) -> Tga {
    Tga {
        name: "g".into(),
        clocks: vec!["x".into(), "y".into()],
        locations: vec![
            Location::new(
                "Run",
                vec![c("x", Rel::Le, period), c("y", Rel::Le, env_hi)],
            ),
            Location::new("Bad", vec![]),
        ],
        initial: 0,
        edges: vec![
            edge(0, 0, vec![c("x", Rel::Ge, early)], "send", true, &["x"]),
            edge(0, 0, vec![c("y", Rel::Ge, env_lo)], "tick", false, &["y"]),
            edge(0, 1, vec![c("x", Rel::Eq, period)], "late", false, &[]),
            edge(
                0,
                1,
                vec![c("x", Rel::Lt, 1), c("y", Rel::Ge, env_lo)],
                "clash",
                false,
                &[],
            ),
        ],
        vars: vec![],
    }
}

/// Hand-built abstraction with one coefficient per region and fixed windows.
pub fn tiny_loop(
    name: &str,
    lower: &[i64],
    upper: &[i64],
    succ: &[&[usize]],
    early: Option<(Vec<i64>, Vec<i64>)>,
) -> LoopAbstraction {
    let q = lower.len();
    let part = partition_plane(q).unwrap();
    let etc: Vec<_> = succ
        .iter()
        .map(|s| vec![s.iter().copied().collect()])
        .collect();
    LoopAbstraction {
        name: name.into(),
        partition: part,
        sigmas: vec![0.05],
        tau_cap: 1.0,
        bounds: TimingBounds {
            scale: 1,
            lower: lower.iter().map(|&l| vec![l]).collect(),
            upper: upper.iter().map(|&u| vec![u]).collect(),
        },
        transitions: TransitionMap {
            early: succ.iter().map(|s| s.iter().copied().collect()).collect(),
            etc,
        },
        early: early.map(|(lower, upper)| EarlyParams { lower, upper }),
    }
}

pub fn random_tga(rng: &mut impl Rng, maxc: i64) -> Tga {
    let clocks: Vec<String> = (0..rng.gen_range(1..=2))
        .map(|k| ["x", "y"][k].to_string())
        .collect();
    let nloc = rng.gen_range(3..=6);
    let mut locations = Vec::new();
    for k in 0..nloc - 1 {
        let mut inv = Vec::new();
        if rng.gen_bool(0.5) {
            let cl = &clocks[rng.gen_range(0..clocks.len())];
            inv.push(c(cl, Rel::Le, rng.gen_range(1..=maxc)));
        }
        locations.push(Location::new(format!("L{k}"), inv));
    }
    locations.push(Location::new("Bad", vec![]));
    let rels = [Rel::Lt, Rel::Le, Rel::Eq, Rel::Ge, Rel::Gt];
    let mut edges = Vec::new();
    for k in 0..rng.gen_range(nloc..=2 * nloc + 2) {
        let src = rng.gen_range(0..nloc - 1);
        let dst = rng.gen_range(0..nloc);
        let guard = (0..rng.gen_range(0..=2))
            .map(|_| {
                let cl = &clocks[rng.gen_range(0..clocks.len())];
                c(
                    cl,
                    rels[rng.gen_range(0..rels.len())],
                    rng.gen_range(0..=maxc),
                )
            })
            .collect();
        let resets: Vec<&str> = clocks
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .map(String::as_str)
            .collect();
        edges.push(edge(
            src,
            dst,
            guard,
            &format!("e{k}"),
            rng.gen_bool(0.5),
            &resets,
        ));
    }
    Tga {
        name: "g".into(),
        clocks,
        locations,
        initial: 0,
        edges,
        vars: vec![],
    }
}

/// The fixed collection used by the solver cross-check: hand-built cases
/// followed by seeded random ones.
pub fn solver_suite(random: usize, seed: u64) -> Vec<Instance> {
    use rand::SeedableRng;
    let mut out = vec![
        Instance::new("race wins", vec![race(6, 2, 4)], 6),
        Instance::new("race tie", vec![race(6, 4, 4)], 6),
        Instance::new("race time lock", vec![race(3, 4, 8)], 8),
        Instance::new("race late env", vec![race(8, 8, 8)], 8),
        Instance::new("two clock cycle", vec![two_clock_cycle(4, 2, 3, 5)], 5),
        Instance::new(
            "two clock cycle tight",
            vec![two_clock_cycle(3, 3, 3, 3)],
            3,
        ),
        Instance::new("network alone", vec![build_tga_net(2)], 2),
    ];
    let one = tiny_loop("l", &[3, 2], &[4, 3], &[&[0, 1], &[0]], None);
    let cl = build_tga_cl(&one, &InitialRegions::Single(0)).unwrap();
    out.push(Instance::new(
        "net with slow loop",
        vec![build_tga_net(2), cl],
        4,
    ));
    let fast = tiny_loop("l", &[1, 1], &[2, 2], &[&[0, 1], &[1]], None);
    let cl = build_tga_cl(&fast, &InitialRegions::Single(1)).unwrap();
    out.push(Instance::new(
        "net with fast loop",
        vec![build_tga_net(2), cl],
        2,
    ));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random {
        let maxc = rng.gen_range(2..=8);
        out.push(Instance::new(
            &format!("random {k}"),
            vec![random_tga(&mut rng, maxc)],
            maxc,
        ));
    }
    out
}
