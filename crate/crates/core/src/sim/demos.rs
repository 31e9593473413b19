//! Built-in scenarios. `scenarios/*.json` in the repository are generated
//! from these builders.
//!
//! The patrolling geometry is a reconstruction: two L-shaped regions, each a
//! 4 x 4 square with one 2 x 2 corner removed, on either side of a gap the
//! agents are driven across by sinusoidal reference trajectories.

use crate::logic::LogicTree;
use crate::primitives::{ClassKappa, Shape};

use super::scenario::*;

pub const DEMO_NAMES: [&str; 6] = ["surveillance", "patrol", "corner", "rectangle", "cross", "lshape"];

pub fn demo(name: &str) -> Option<ScenarioConfig> {
    match name {
        "surveillance" => Some(surveillance()),
        "patrol" => Some(patrol()),
        "corner" => Some(corner()),
        "rectangle" => Some(rectangle()),
        "cross" => Some(cross()),
        "lshape" => Some(lshape()),
        _ => None,
    }
}

/// File name used for a shipped demo.
pub fn demo_file_name(name: &str) -> String {
    format!("demo-{name}.json")
}

fn hs(a: [f64; 2], b: f64) -> Shape {
    Shape::Halfspace { a: a.to_vec(), b }
}

fn base(name: &str, description: &str, agents: usize, primitives: Vec<PrimitiveSpec>, logic: LogicTree) -> ScenarioConfig {
    ScenarioConfig {
        version: SCENARIO_VERSION,
        name: name.into(),
        description: Some(description.into()),
        system: SystemSpec::SingleIntegrator { agents, dim: 2 },
        primitives,
        logic,
        alpha: ClassKappa::Linear { gamma: 1.0 },
        margin: 0.0,
        desired: DesiredSpec::ZeroHold,
        initial_state: vec![0.0; 2 * agents],
        sim: SimSettings {
            dt: 0.01,
            horizon: 10.0,
            integrator: Integrator::Euler,
            safety_tol: 1e-4,
        },
        regions: Vec::new(),
        solver: SolverSettings::default(),
        on_infeasible: InfeasiblePolicy::Halt,
        output: OutputOptions::default(),
    }
}

/// Box `[-1, 1]^2` as four half spaces: x <= 1, x >= -1, y <= 1, y >= -1.
fn unit_box(agent: usize) -> Vec<PrimitiveSpec> {
    [
        ("x<=1", hs([-1.0, 0.0], 1.0)),
        ("x>=-1", hs([1.0, 0.0], 1.0)),
        ("y<=1", hs([0.0, -1.0], 1.0)),
        ("y>=-1", hs([0.0, 1.0], 1.0)),
    ]
    .into_iter()
    .map(|(l, s)| PrimitiveSpec::on_agent(s, agent).labeled(l))
    .collect()
}

/// Union of two half planes: x <= 0 or y <= 0.
pub fn corner() -> ScenarioConfig {
    let prims = vec![
        PrimitiveSpec::on_agent(hs([-1.0, 0.0], 0.0), 0).labeled("x<=0"),
        PrimitiveSpec::on_agent(hs([0.0, -1.0], 0.0), 0).labeled("y<=0"),
    ];
    let mut c = base(
        "corner",
        "Single agent, safe set x <= 0 or y <= 0, driven towards the excluded quadrant.",
        1,
        prims,
        LogicTree::choose_leaves(1, 0..2),
    );
    c.initial_state = vec![-1.0, 1.0];
    c.desired = DesiredSpec::Constant(vec![1.0, -0.3]);
    c
}

/// Intersection of four half planes.
pub fn rectangle() -> ScenarioConfig {
    let mut c = base(
        "rectangle",
        "Single agent kept in the square [-1, 1]^2 (4-choose-4).",
        1,
        unit_box(0),
        LogicTree::choose_leaves(4, 0..4),
    );
    c.desired = DesiredSpec::Constant(vec![1.0, 0.5]);
    c
}

/// At least three of the four box half planes: a plus-shaped region.
pub fn cross() -> ScenarioConfig {
    let mut c = base(
        "cross",
        "Single agent in the plus-shaped set where at least 3 of the 4 box half planes hold.",
        1,
        unit_box(0),
        LogicTree::choose_leaves(3, 0..4),
    );
    c.initial_state = vec![0.0, 0.0];
    c.desired = DesiredSpec::Constant(vec![1.0, 1.0]);
    c
}

/// Square minus its upper right quadrant.
pub fn lshape() -> ScenarioConfig {
    let mut prims = unit_box(0);
    prims.push(PrimitiveSpec::on_agent(hs([-1.0, 0.0], 0.0), 0).labeled("x<=0"));
    prims.push(PrimitiveSpec::on_agent(hs([0.0, -1.0], 0.0), 0).labeled("y<=0"));
    let mut c = base(
        "lshape",
        "Single agent in an L-shaped set: inside [-1, 1]^2 and (x <= 0 or y <= 0).",
        1,
        prims,
        l_tree(0),
    );
    c.initial_state = vec![-0.5, 0.5];
    c.desired = DesiredSpec::Constant(vec![1.0, 0.2]);
    c
}

/// `Choose{2, [Choose{4, box}, Choose{1, corner}]}` over six consecutive
/// primitives starting at `base`.
fn l_tree(base: usize) -> LogicTree {
    LogicTree::all(vec![
        LogicTree::choose_leaves(4, base..base + 4),
        LogicTree::choose_leaves(1, base + 4..base + 6),
    ])
}

/// Three agents that must keep at least two of themselves inside the unit
/// disc while every desired controller pushes radially outward.
pub fn surveillance() -> ScenarioConfig {
    let radii = [0.2, 0.4, 0.6];
    let speed = 0.5;
    let prims = (0..3)
        .map(|j| {
            PrimitiveSpec::on_agent(
                Shape::Ball {
                    c: vec![0.0, 0.0],
                    radius: 1.0,
                },
                j,
            )
            .labeled(format!("disc@agent{j}"))
        })
        .collect();
    let mut c = base(
        "surveillance",
        "Three planar agents, at least two inside the unit disc, outward desired velocities.",
        3,
        prims,
        LogicTree::choose_leaves(2, 0..3),
    );
    let mut x0 = Vec::new();
    let mut kd = Vec::new();
    for (j, r) in radii.iter().enumerate() {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 3.0;
        let (s, co) = th.sin_cos();
        x0.extend([r * co, r * s]);
        kd.extend([speed * co, speed * s]);
    }
    c.initial_state = x0;
    c.desired = DesiredSpec::Constant(kd);
    c.margin = 0.01;
    c.sim.horizon = 20.0;
    c.regions = vec![RegionSpec {
        name: "disc".into(),
        per_agent: (0..3).map(LogicTree::leaf).collect(),
    }];
    c
}

pub const PATROL_AGENTS: usize = 11;

/// Half spaces for one L-shaped region on one agent, in the order
/// `[4 box sides, 2 corner half planes]`. `left` selects the region at
/// `x in [-5, -1]` with its upper right corner removed; otherwise the mirror
/// region at `x in [1, 5]` with its lower left corner removed.
fn l_region(left: bool, agent: usize) -> Vec<PrimitiveSpec> {
    let tag = if left { "L1" } else { "L2" };
    let sides = if left {
        [
            ("x>=-5", hs([1.0, 0.0], 5.0)),
            ("x<=-1", hs([-1.0, 0.0], -1.0)),
            ("y>=0", hs([0.0, 1.0], 0.0)),
            ("y<=4", hs([0.0, -1.0], 4.0)),
            ("x<=-3", hs([-1.0, 0.0], -3.0)),
            ("y<=2", hs([0.0, -1.0], 2.0)),
        ]
    } else {
        [
            ("x>=1", hs([1.0, 0.0], -1.0)),
            ("x<=5", hs([-1.0, 0.0], 5.0)),
            ("y>=0", hs([0.0, 1.0], 0.0)),
            ("y<=4", hs([0.0, -1.0], 4.0)),
            ("x>=3", hs([1.0, 0.0], -3.0)),
            ("y>=2", hs([0.0, 1.0], -2.0)),
        ]
    };
    sides
        .into_iter()
        .map(|(l, s)| PrimitiveSpec::on_agent(s, agent).labeled(format!("{tag}:{l}@agent{agent}")))
        .collect()
}

/// Eleven planar agents patrolling between two L-shaped regions; at least
/// four must be inside each region at all times. 132 primitives.
pub fn patrol() -> ScenarioConfig {
    let n = PATROL_AGENTS;
    let mut prims = Vec::with_capacity(12 * n);
    for left in [true, false] {
        for j in 0..n {
            prims.extend(l_region(left, j));
        }
    }
    let l1: Vec<LogicTree> = (0..n).map(|j| l_tree(6 * j)).collect();
    let l2: Vec<LogicTree> = (0..n).map(|j| l_tree(6 * (n + j))).collect();
    let logic = LogicTree::all(vec![
        LogicTree::choose(4, l1.clone()),
        LogicTree::choose(4, l2.clone()),
    ]);

    let mut c = base(
        "patrol",
        "Eleven agents, two L-shaped regions, at least four agents in each region \
         (reconstructed geometry and gains).",
        n,
        prims,
        logic,
    );
    let mut x0 = Vec::with_capacity(2 * n);
    let mut desired = Vec::with_capacity(n);
    for j in 0..n {
        let x = if j < 6 { -4.0 } else { 4.0 };
        x0.extend([x, 0.2 + 0.35 * j as f64]);
        desired.push(AgentDesired::Sinusoidal {
            kappa: 1.0,
            amplitude: 3.5 + 0.15 * j as f64,
            omega: 0.2 + 0.05 * j as f64,
            offset: 0.0,
        });
    }
    c.initial_state = x0;
    c.desired = DesiredSpec::PerAgent(desired);
    c.sim.horizon = 50.0;
    c.output.levels = false;
    c.regions = vec![
        RegionSpec {
            name: "L1".into(),
            per_agent: l1,
        },
        RegionSpec {
            name: "L2".into(),
            per_agent: l2,
        },
    ];
    c
}

/// Four agents on a line, each with the upper bound `x_j <= 1`, at least two
/// required, all pushed upward. Used to exercise the order-statistic bounds.
pub fn four_choose_two() -> ScenarioConfig {
    let prims = (0..4)
        .map(|j| PrimitiveSpec::on_agent(Shape::Halfspace { a: vec![-1.0], b: 1.0 }, j))
        .collect();
    ScenarioConfig {
        version: SCENARIO_VERSION,
        name: "four-choose-two".into(),
        description: Some("Four 1-D agents, x_j <= 1 for at least two, all pushed upward.".into()),
        system: SystemSpec::SingleIntegrator { agents: 4, dim: 1 },
        primitives: prims,
        logic: LogicTree::choose_leaves(2, 0..4),
        alpha: ClassKappa::Linear { gamma: 1.0 },
        margin: 0.0,
        desired: DesiredSpec::Constant(vec![1.0, 0.8, 0.6, 0.4]),
        initial_state: vec![0.6, 0.4, 0.2, 0.0],
        sim: SimSettings {
            dt: 0.01,
            horizon: 5.0,
            integrator: Integrator::Euler,
            safety_tol: 1e-4,
        },
        regions: Vec::new(),
        solver: SolverSettings::default(),
        on_infeasible: InfeasiblePolicy::Halt,
        output: OutputOptions::default(),
    }
}
