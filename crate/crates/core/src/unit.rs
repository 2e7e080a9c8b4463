//! Constraint blocks shared by the stochastic commitment, the day-ahead
//! clearing and the fifteen-minute dispatch models.
//!
//! Every block is written for a grid of `steps_per_hour` steps per hour, so
//! the same code produces the intra-hourly commitment model (K steps), the
//! hourly market (1 step) and the real-time dispatch (4 steps). Commitment
//! status enters the dispatch blocks as linear expressions so that it can be a
//! decision variable or a fixed constant.
use crate::instance::{Dg, SystemInstance};
use crate::milp::{LinExpr, ModelBuilder, RowId, Sense, VarId};
use crate::network::IsfMatrix;
use crate::suc::RampMode;

/// Commitment, startup and shutdown status per DG per step.
#[derive(Debug, Clone)]
pub(crate) struct Commitment {
    pub u: Vec<Vec<LinExpr>>,
    pub v: Vec<Vec<LinExpr>>,
    pub w: Vec<Vec<LinExpr>>,
}

#[derive(Debug, Clone)]
pub(crate) struct CommitmentVars {
    pub u: Vec<Vec<VarId>>,
    pub v: Vec<Vec<VarId>>,
    pub w: Vec<Vec<VarId>>,
}

impl CommitmentVars {
    pub fn exprs(&self) -> Commitment {
        let map = |x: &Vec<Vec<VarId>>| {
            x.iter()
                .map(|row| row.iter().map(|&v| LinExpr::from(v)).collect())
                .collect()
        };
        Commitment {
            u: map(&self.u),
            v: map(&self.v),
            w: map(&self.w),
        }
    }
}

/// Startup-window lengths in hours that the initial state still imposes:
/// (hours the unit must stay on, hours it must stay off).
pub(crate) fn initial_lock_hours(dg: &Dg) -> (usize, usize) {
    let init = &dg.initial;
    if init.committed {
        (dg.min_up.saturating_sub(init.hours_on), 0)
    } else {
        (0, dg.min_down.saturating_sub(init.hours_off))
    }
}

/// Binary commitment variables with transition logic, minimum up/down
/// windows, initial-state windows and optional hour blocking.
///
/// Costs: no-load at `no_load_cost * step_hours` per committed step, startup
/// cost once per startup.
pub(crate) fn add_commitment_vars(
    model: &mut ModelBuilder,
    instance: &SystemInstance,
    steps_per_hour: usize,
    hours: usize,
    hour_blocking: bool,
) -> CommitmentVars {
    let steps = steps_per_hour * hours;
    let step_hours = 1.0 / steps_per_hour as f64;
    let mut out = CommitmentVars {
        u: Vec::new(),
        v: Vec::new(),
        w: Vec::new(),
    };
    for dg in &instance.dgs {
        let u: Vec<VarId> = (0..steps)
            .map(|_| model.add_binary(dg.no_load_cost * step_hours))
            .collect();
        let v: Vec<VarId> = (0..steps).map(|_| model.add_binary(dg.startup_cost)).collect();
        let w: Vec<VarId> = (0..steps).map(|_| model.add_binary(0.0)).collect();

        let u0 = if dg.initial.committed { 1.0 } else { 0.0 };
        for t in 0..steps {
            let mut e = LinExpr::from(u[t]) - v[t] + w[t];
            if t == 0 {
                model.add_constraint(e, Sense::Eq, u0);
            } else {
                e -= u[t - 1];
                model.add_constraint(e, Sense::Eq, 0.0);
            }
        }

        let up_len = dg.min_up * steps_per_hour;
        if up_len > 0 {
            for t in up_len - 1..steps {
                let mut e = LinExpr::new();
                for &x in &v[t + 1 - up_len..=t] {
                    e += x;
                }
                e -= u[t];
                model.add_constraint(e, Sense::Le, 0.0);
            }
        }
        let down_len = dg.min_down * steps_per_hour;
        if down_len > 0 {
            for t in down_len - 1..steps {
                let mut e = LinExpr::from(u[t]);
                for &x in &w[t + 1 - down_len..=t] {
                    e += x;
                }
                model.add_constraint(e, Sense::Le, 1.0);
            }
        }

        let (stay_on, stay_off) = initial_lock_hours(dg);
        let on_len = (stay_on * steps_per_hour).min(steps);
        if on_len > 0 {
            let e = w[..on_len].iter().fold(LinExpr::new(), |acc, &x| acc + x);
            model.add_constraint(e, Sense::Eq, 0.0);
        }
        let off_len = (stay_off * steps_per_hour).min(steps);
        if off_len > 0 {
            let e = v[..off_len].iter().fold(LinExpr::new(), |acc, &x| acc + x);
            model.add_constraint(e, Sense::Eq, 0.0);
        }

        if hour_blocking && steps_per_hour > 1 {
            for h in 0..hours {
                let last = (h + 1) * steps_per_hour - 1;
                for t in h * steps_per_hour..last {
                    model.add_constraint(LinExpr::from(u[t]) - u[last], Sense::Eq, 0.0);
                }
            }
        }
        out.u.push(u);
        out.v.push(v);
        out.w.push(w);
    }
    out
}

/// Fixed commitment from a status sequence per DG; startups and shutdowns are
/// the positive and negative status changes, the first one relative to
/// `initial`.
pub(crate) fn fixed_commitment(status: &[Vec<bool>], initial: &[bool]) -> Commitment {
    let mut c = Commitment {
        u: Vec::new(),
        v: Vec::new(),
        w: Vec::new(),
    };
    for (row, &init) in status.iter().zip(initial) {
        let mut prev = init;
        let (mut u, mut v, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for &on in row {
            u.push(LinExpr::constant(f64::from(u8::from(on))));
            v.push(LinExpr::constant(f64::from(u8::from(on && !prev))));
            w.push(LinExpr::constant(f64::from(u8::from(!on && prev))));
            prev = on;
        }
        c.u.push(u);
        c.v.push(v);
        c.w.push(w);
    }
    c
}

/// Output above minimum and per-segment output for every DG and step.
#[derive(Debug, Clone)]
pub(crate) struct DispatchVars {
    pub p: Vec<Vec<VarId>>,
    pub seg: Vec<Vec<Vec<VarId>>>,
}

/// State of one DG just before the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct UnitState {
    pub committed: bool,
    pub above_min: f64,
}

impl UnitState {
    pub fn initial(dg: &Dg) -> Self {
        Self {
            committed: dg.initial.committed,
            above_min: if dg.initial.committed {
                dg.initial.power_above_min
            } else {
                0.0
            },
        }
    }
}

/// Coefficient of the shutdown indicator in the ramp-down rows.
pub(crate) fn shutdown_ramp_coef(dg: &Dg, steps_per_hour: usize, mode: RampMode) -> f64 {
    let k = steps_per_hour as f64;
    match mode {
        RampMode::Corrected => dg.shutdown_rate - dg.ramp_down / k - dg.p_min,
        RampMode::Verbatim => dg.startup_rate - dg.ramp_up / k - dg.p_min,
    }
}

/// Dispatch variables with capacity, ramping and segment linking.
/// Segment costs are charged at `cost_weight` times their marginal cost.
pub(crate) fn add_dispatch(
    model: &mut ModelBuilder,
    instance: &SystemInstance,
    commitment: &Commitment,
    steps_per_hour: usize,
    initial: &[UnitState],
    ramp_mode: RampMode,
    cost_weight: f64,
) -> DispatchVars {
    let k = steps_per_hour as f64;
    let mut out = DispatchVars {
        p: Vec::new(),
        seg: Vec::new(),
    };
    for (g, dg) in instance.dgs.iter().enumerate() {
        let (u, v, w) = (&commitment.u[g], &commitment.v[g], &commitment.w[g]);
        let steps = u.len();
        let widths = dg.segment_widths();
        let up = dg.ramp_up / k;
        let down = dg.ramp_down / k;
        let start_coef = dg.startup_rate - dg.p_min;
        let stop_coef = shutdown_ramp_coef(dg, steps_per_hour, ramp_mode);
        let init = initial[g];
        let u0 = if init.committed { 1.0 } else { 0.0 };

        // a single segment is the output itself
        let single = widths.len() == 1;
        let p: Vec<VarId> = (0..steps)
            .map(|_| {
                if single {
                    model.add_var(0.0, widths[0], cost_weight * dg.segments[0].marginal_cost)
                } else {
                    model.add_var(0.0, f64::INFINITY, 0.0)
                }
            })
            .collect();
        let seg: Vec<Vec<VarId>> = if single {
            vec![p.clone()]
        } else {
            widths
                .iter()
                .zip(&dg.segments)
                .map(|(&width, s)| {
                    (0..steps)
                        .map(|_| model.add_var(0.0, width, cost_weight * s.marginal_cost))
                        .collect()
                })
                .collect()
        };

        for t in 0..steps {
            model.add_constraint(
                LinExpr::from(p[t]) - &u[t] * (dg.p_max - dg.p_min),
                Sense::Le,
                0.0,
            );
            let (prev_p, prev_u) = if t == 0 {
                (LinExpr::constant(init.above_min), LinExpr::constant(u0))
            } else {
                (LinExpr::from(p[t - 1]), u[t - 1].clone())
            };
            let ramp_up = LinExpr::from(p[t]) - prev_p.clone() - &prev_u * up - &v[t] * start_coef;
            model.add_constraint(ramp_up, Sense::Le, 0.0);
            let ramp_down = LinExpr::from(p[t]) - prev_p + &prev_u * down + &w[t] * stop_coef;
            model.add_constraint(ramp_down, Sense::Ge, 0.0);

            if !single {
                let mut link = LinExpr::from(p[t]);
                for s in &seg {
                    link -= s[t];
                }
                model.add_constraint(link, Sense::Eq, 0.0);
            }
        }
        out.p.push(p);
        out.seg.push(seg);
    }
    out
}

/// Total generation (minimum output plus output above minimum) per node at
/// step `t`.
pub(crate) fn nodal_generation(
    instance: &SystemInstance,
    commitment: &Commitment,
    dispatch: &DispatchVars,
    t: usize,
) -> Vec<LinExpr> {
    let mut gen = vec![LinExpr::new(); instance.num_nodes()];
    for (g, dg) in instance.dgs.iter().enumerate() {
        gen[dg.node].add_scaled(&commitment.u[g][t], dg.p_min);
        gen[dg.node].add_term(dispatch.p[g][t], 1.0);
    }
    gen
}

/// How nodal net load enters the balance.
pub(crate) enum Demand<'a> {
    /// Net load is a constant of the model.
    Constant(&'a [f64]),
    /// Net load is a free variable pinned by one row per node, whose dual is
    /// the nodal price.
    Priced(&'a [f64]),
}

#[derive(Debug, Clone)]
pub(crate) struct NodalBalance {
    pub curtail: Vec<VarId>,
    pub spill: Option<Vec<VarId>>,
    pub demand_rows: Option<Vec<RowId>>,
    /// Net injection per node.
    pub injection: Vec<LinExpr>,
}

/// Curtailment (bounded by the positive part of the load), optional spill,
/// nodal injections and the system balance row for one step.
pub(crate) fn add_nodal_balance(
    model: &mut ModelBuilder,
    generation: Vec<LinExpr>,
    demand: Demand<'_>,
    curtail_cost: f64,
    spill_cost: Option<f64>,
) -> NodalBalance {
    let load = match demand {
        Demand::Constant(x) | Demand::Priced(x) => x,
    };
    let mut injection = generation;
    let curtail: Vec<VarId> = load
        .iter()
        .map(|&xi| model.add_var(0.0, xi.max(0.0), curtail_cost))
        .collect();
    for (inj, &c) in injection.iter_mut().zip(&curtail) {
        inj.add_term(c, 1.0);
    }
    let spill = spill_cost.map(|cost| {
        injection
            .iter_mut()
            .map(|inj| {
                let s = model.add_var(0.0, f64::INFINITY, cost);
                inj.add_term(s, -1.0);
                s
            })
            .collect::<Vec<_>>()
    });
    let demand_rows = match demand {
        Demand::Constant(x) => {
            for (inj, &xi) in injection.iter_mut().zip(x) {
                inj.constant -= xi;
            }
            None
        }
        Demand::Priced(x) => Some(
            injection
                .iter_mut()
                .zip(x)
                .map(|(inj, &xi)| {
                    let d = model.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
                    inj.add_term(d, -1.0);
                    model.add_constraint(d, Sense::Eq, xi)
                })
                .collect(),
        ),
    };
    let total = injection.iter().fold(LinExpr::new(), |acc, e| acc + e.clone());
    model.add_constraint(total, Sense::Eq, 0.0);
    NodalBalance {
        curtail,
        spill,
        demand_rows,
        injection,
    }
}

/// Flow on `line` as a linear expression of the nodal injections.
pub(crate) fn flow_expr(isf: &IsfMatrix, line: usize, injection: &[LinExpr]) -> LinExpr {
    let mut e = LinExpr::new();
    for (n, inj) in injection.iter().enumerate() {
        let psi = isf.get(line, n);
        if psi.abs() > 1e-12 {
            e.add_scaled(inj, psi);
        }
    }
    e
}

/// Lower and upper flow-limit rows for one line; infinite sides are skipped.
pub(crate) fn add_flow_limit(
    model: &mut ModelBuilder,
    instance: &SystemInstance,
    isf: &IsfMatrix,
    line: usize,
    injection: &[LinExpr],
) {
    let l = &instance.lines[line];
    let e = flow_expr(isf, line, injection);
    if l.flow_max.is_finite() {
        model.add_constraint(e.clone(), Sense::Le, l.flow_max);
    }
    if l.flow_min.is_finite() {
        model.add_constraint(e, Sense::Ge, l.flow_min);
    }
}

/// Indices of lines with at least one finite flow limit.
pub(crate) fn limited_lines(instance: &SystemInstance) -> Vec<usize> {
    (0..instance.lines.len())
        .filter(|&l| instance.lines[l].is_limited())
        .collect()
}
