//! Small hand-built instances used by unit, integration and acceptance tests.
use crate::instance::{
    parse_instance, CostSegment, Dg, InitialState, Line, SystemInstance, TimeGrid,
};

/// The bundled 14-bus case used for the end-to-end comparison.
pub const IEEE14_FRP_JSON: &str = include_str!("../data/ieee14_frp.json");

pub fn ieee14_frp() -> SystemInstance {
    parse_instance(IEEE14_FRP_JSON).expect("bundled instance is valid")
}

fn base_dg(id: &str, node: usize) -> Dg {
    Dg {
        id: id.into(),
        node,
        p_max: 200.0,
        p_min: 10.0,
        segments: vec![
            CostSegment { upper_mw: 100.0, marginal_cost: 20.0 },
            CostSegment { upper_mw: 200.0, marginal_cost: 30.0 },
        ],
        no_load_cost: 100.0,
        startup_cost: 500.0,
        ramp_up: 400.0,
        ramp_down: 400.0,
        startup_rate: 200.0,
        shutdown_rate: 200.0,
        min_up: 1,
        min_down: 1,
        initial: InitialState {
            committed: true,
            power_above_min: 90.0,
            hours_on: 8,
            hours_off: 0,
        },
    }
}

fn instance(
    name: &str,
    k: usize,
    hours: usize,
    nodes: &[&str],
    lines: Vec<Line>,
    dgs: Vec<Dg>,
    mean_per_node: &[f64],
) -> SystemInstance {
    let grid = TimeGrid::new(hours, k).expect("valid grid");
    SystemInstance {
        name: name.into(),
        time_grid: grid,
        nodes: nodes.iter().map(|s| s.to_string()).collect(),
        lines,
        dgs,
        mean_net_load: mean_per_node
            .iter()
            .map(|m| vec![*m; grid.subperiods()])
            .collect(),
        sigma_fraction: 0.01,
        curtailment_penalty: 1000.0,
        frp_shortfall_penalty: 500.0,
        reference_node: 0,
    }
}

fn line(id: &str, from: usize, to: usize, reactance: f64) -> Line {
    Line {
        id: id.into(),
        from,
        to,
        reactance,
        flow_min: f64::NEG_INFINITY,
        flow_max: f64::INFINITY,
    }
}

/// One node, one large generator initially online, constant 100 MW load.
pub fn single_node(k: usize, hours: usize) -> SystemInstance {
    instance(
        "single-node",
        k,
        hours,
        &["n1"],
        vec![],
        vec![base_dg("g1", 0)],
        &[100.0],
    )
}

/// Two nodes joined by one line; generator at node 1, 60 MW load at node 2.
pub fn two_node_line(k: usize, hours: usize) -> SystemInstance {
    instance(
        "two-node",
        k,
        hours,
        &["n1", "n2"],
        vec![line("l12", 0, 1, 0.1)],
        vec![base_dg("g1", 0)],
        &[0.0, 60.0],
    )
}

/// Three-node ring with equal reactances, generator at node 1, loads at
/// nodes 2 and 3.
pub fn three_node_ring(k: usize, hours: usize) -> SystemInstance {
    instance(
        "three-node-ring",
        k,
        hours,
        &["n1", "n2", "n3"],
        vec![
            line("l12", 0, 1, 0.1),
            line("l23", 1, 2, 0.1),
            line("l31", 2, 0, 0.1),
        ],
        vec![base_dg("g1", 0)],
        &[0.0, 60.0, 40.0],
    )
}

/// IEEE 14-bus branch reactances (p.u.) and bus loads (MW).
pub const IEEE14_BRANCHES: [(usize, usize, f64); 20] = [
    (1, 2, 0.05917),
    (1, 5, 0.22304),
    (2, 3, 0.19797),
    (2, 4, 0.17632),
    (2, 5, 0.17388),
    (3, 4, 0.17103),
    (4, 5, 0.04211),
    (4, 7, 0.20912),
    (4, 9, 0.55618),
    (5, 6, 0.25202),
    (6, 11, 0.19890),
    (6, 12, 0.25581),
    (6, 13, 0.13027),
    (7, 8, 0.17615),
    (7, 9, 0.11001),
    (9, 10, 0.08450),
    (9, 14, 0.27038),
    (10, 11, 0.19207),
    (12, 13, 0.19988),
    (13, 14, 0.34802),
];

pub const IEEE14_LOADS: [f64; 14] = [
    0.0, 21.7, 94.2, 47.8, 7.6, 11.2, 0.0, 0.0, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9,
];

/// Plain 14-bus network with one generator at bus 1 and flat loads.
pub fn ieee14_topology() -> SystemInstance {
    let names: Vec<String> = (1..=14).map(|i| format!("b{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let lines = IEEE14_BRANCHES
        .iter()
        .map(|&(f, t, x)| line(&format!("l{f}-{t}"), f - 1, t - 1, x))
        .collect();
    let mut g = base_dg("g1", 0);
    g.p_max = 400.0;
    g.segments = vec![CostSegment { upper_mw: 400.0, marginal_cost: 20.0 }];
    instance("ieee14", 1, 1, &refs, lines, vec![g], &IEEE14_LOADS)
}

/// Two generators at one node over three hours with K = 2: a cheap baseload
/// unit that is initially online and a flexible peaker that starts offline.
/// The load shape forces a choice between committing the peaker and curtailing.
pub fn oracle_two_dg() -> SystemInstance {
    let base = Dg {
        id: "base".into(),
        node: 0,
        p_max: 60.0,
        p_min: 20.0,
        segments: vec![
            CostSegment { upper_mw: 40.0, marginal_cost: 15.0 },
            CostSegment { upper_mw: 60.0, marginal_cost: 25.0 },
        ],
        no_load_cost: 200.0,
        startup_cost: 1000.0,
        ramp_up: 40.0,
        ramp_down: 40.0,
        startup_rate: 30.0,
        shutdown_rate: 30.0,
        min_up: 2,
        min_down: 2,
        initial: InitialState {
            committed: true,
            power_above_min: 20.0,
            hours_on: 3,
            hours_off: 0,
        },
    };
    let peaker = Dg {
        id: "peaker".into(),
        node: 0,
        p_max: 40.0,
        p_min: 5.0,
        segments: vec![CostSegment { upper_mw: 40.0, marginal_cost: 60.0 }],
        no_load_cost: 150.0,
        startup_cost: 300.0,
        ramp_up: 80.0,
        ramp_down: 80.0,
        startup_rate: 20.0,
        shutdown_rate: 20.0,
        min_up: 2,
        min_down: 1,
        initial: InitialState {
            committed: false,
            power_above_min: 0.0,
            hours_on: 0,
            hours_off: 2,
        },
    };
    let mut inst = instance(
        "oracle-two-dg",
        2,
        3,
        &["n1"],
        vec![],
        vec![base, peaker],
        &[0.0],
    );
    inst.mean_net_load[0] = vec![42.0, 50.0, 58.0, 66.0, 61.0, 52.0];
    inst.curtailment_penalty = 500.0;
    inst.sigma_fraction = 0.03;
    inst
}

/// Three-node ring where only one line is limited so that the two
/// generators set different nodal prices.
pub fn congested_ring(hours: usize) -> SystemInstance {
    let mut cheap = base_dg("cheap", 0);
    cheap.p_max = 150.0;
    cheap.p_min = 10.0;
    cheap.segments = vec![
        CostSegment { upper_mw: 80.0, marginal_cost: 18.0 },
        CostSegment { upper_mw: 150.0, marginal_cost: 24.0 },
    ];
    let mut dear = base_dg("dear", 2);
    dear.p_max = 120.0;
    dear.p_min = 5.0;
    dear.segments = vec![
        CostSegment { upper_mw: 60.0, marginal_cost: 40.0 },
        CostSegment { upper_mw: 120.0, marginal_cost: 55.0 },
    ];
    dear.initial.power_above_min = 20.0;
    cheap.initial.power_above_min = 60.0;
    let mut lines = vec![
        line("l12", 0, 1, 0.1),
        line("l23", 1, 2, 0.1),
        line("l31", 2, 0, 0.1),
    ];
    lines[0].flow_min = -50.0;
    lines[0].flow_max = 50.0;
    let mut inst = instance(
        "congested-ring",
        1,
        hours,
        &["n1", "n2", "n3"],
        lines,
        vec![cheap, dear],
        &[20.0, 90.0, 30.0],
    );
    // distinct hourly levels keep every hour's dual basis unique
    for (h, x) in inst.mean_net_load[1].iter_mut().enumerate() {
        *x += 3.1 * h as f64;
    }
    inst
}

/// Three-node ring at four subperiods per hour with a slow cheap unit and a
/// fast expensive one. Net load rises through the first half of the horizon
/// and falls back, with a ramp inside every hour.
pub fn ramping_ring(hours: usize) -> SystemInstance {
    let mut slow = base_dg("slow", 0);
    slow.p_max = 120.0;
    slow.p_min = 30.0;
    slow.segments = vec![
        CostSegment { upper_mw: 90.0, marginal_cost: 18.0 },
        CostSegment { upper_mw: 120.0, marginal_cost: 22.0 },
    ];
    slow.no_load_cost = 30.0 * 18.0 + 100.0;
    slow.startup_cost = 3000.0;
    slow.ramp_up = 60.0;
    slow.ramp_down = 60.0;
    slow.startup_rate = 60.0;
    slow.shutdown_rate = 60.0;
    slow.min_up = 4;
    slow.min_down = 4;
    slow.initial.power_above_min = 40.0;
    let mut fast = base_dg("fast", 2);
    fast.p_max = 60.0;
    fast.p_min = 5.0;
    fast.segments = vec![CostSegment { upper_mw: 60.0, marginal_cost: 45.0 }];
    fast.no_load_cost = 5.0 * 45.0 + 20.0;
    fast.startup_cost = 150.0;
    fast.ramp_up = 120.0;
    fast.ramp_down = 120.0;
    fast.startup_rate = 40.0;
    fast.shutdown_rate = 40.0;
    fast.initial = InitialState {
        committed: false,
        power_above_min: 0.0,
        hours_on: 0,
        hours_off: 3,
    };
    let mut lines = vec![
        line("l12", 0, 1, 0.1),
        line("l23", 1, 2, 0.1),
        line("l31", 2, 0, 0.1),
    ];
    lines[2].flow_min = -70.0;
    lines[2].flow_max = 70.0;
    let mut inst = instance(
        "ramping-ring",
        4,
        hours,
        &["n1", "n2", "n3"],
        lines,
        vec![slow, fast],
        &[0.0, 0.0, 0.0],
    );
    let k = inst.time_grid.subperiods_per_hour;
    let steps = inst.time_grid.subperiods();
    let level = |t: usize| {
        let x = (t as f64 + 0.5) / steps as f64;
        70.0 + 60.0 * (std::f64::consts::PI * x).sin() + 4.0 * ((t % k) as f64 - 1.5)
    };
    inst.mean_net_load[1] = (0..steps).map(|t| 0.6 * level(t)).collect();
    inst.mean_net_load[2] = (0..steps).map(|t| 0.4 * level(t)).collect();
    inst.sigma_fraction = 0.04;
    inst
}
