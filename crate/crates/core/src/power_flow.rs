//! AC (Newton-Raphson, polar) and DC power flow.
//!
//! Both solvers are pure functions of `(case, removed_lines)`. The slack bus
//! absorbs any imbalance; there is no distributed slack.

use std::collections::HashMap;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusKind, GridCase};
use crate::topology::is_islanding;

type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("network is islanded")]
    Islanded,
    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular power-flow Jacobian")]
    Singular,
}

/// Solved operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// |P_from| in MW per in-service branch; 0 for removed branches.
    pub p_line: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute mismatch of the solved equations, pu.
    pub max_mismatch: f64,
    /// Bus voltage magnitudes (pu) and angles (rad) by bus position.
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub enforce_q_limits: bool,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            tolerance: 1e-8,
            max_iterations: 20,
            enforce_q_limits: false,
        }
    }
}

/// Which flow model to use where a choice exists (replay, enumeration).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FlowModel {
    #[default]
    Ac,
    Dc,
}

impl FlowModel {
    pub fn solve(self, case: &GridCase, removed: &[usize]) -> Result<FlowState, FlowError> {
        match self {
            FlowModel::Ac => solve_ac(case, removed),
            FlowModel::Dc => solve_dc(case, removed),
        }
    }
}

pub fn solve_ac(case: &GridCase, removed: &[usize]) -> Result<FlowState, FlowError> {
    solve_ac_with(case, removed, &AcOptions::default(), None)
}

pub(crate) fn build_ybus(case: &GridCase, removed: &[usize], pos: &HashMap<i64, usize>) -> DMatrix<C64> {
    let nb = case.n_buses();
    let mut y = DMatrix::from_element(nb, nb, C64::new(0.0, 0.0));
    for br in &case.branches {
        if removed.contains(&br.index) {
            continue;
        }
        let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let tap = C64::from_polar(br.tap_ratio(), br.shift);
        let ytt = ys + C64::new(0.0, br.b_charging / 2.0);
        let yff = ytt / (tap * tap.conj());
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        y[(f, f)] += yff;
        y[(f, t)] += yft;
        y[(t, f)] += ytf;
        y[(t, t)] += ytt;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += C64::new(bus.gs, bus.bs) / case.base_mva;
    }
    y
}

struct GenAtBus {
    p: f64,
    q: f64,
    q_min: f64,
    q_max: f64,
    v_set: f64,
}

fn generators_by_bus(case: &GridCase, pos: &HashMap<i64, usize>) -> HashMap<usize, GenAtBus> {
    let mut out: HashMap<usize, GenAtBus> = HashMap::new();
    for g in &case.gens {
        let e = out.entry(pos[&g.bus]).or_insert(GenAtBus {
            p: 0.0,
            q: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            v_set: g.v_setpoint,
        });
        e.p += g.p_out;
        e.q += g.q_out;
        e.q_min += g.q_min;
        e.q_max += g.q_max;
    }
    out
}

/// Newton-Raphson AC power flow with optional warm start.
///
/// With `enforce_q_limits`, PV buses whose reactive output leaves its limits
/// are switched to PQ at the violated limit and the case is re-solved.
pub fn solve_ac_with(
    case: &GridCase,
    removed: &[usize],
    opts: &AcOptions,
    warm: Option<&FlowState>,
) -> Result<FlowState, FlowError> {
    if is_islanding(case, removed) {
        return Err(FlowError::Islanded);
    }
    let nb = case.n_buses();
    let base = case.base_mva;
    let pos = case.bus_positions();
    let ybus = build_ybus(case, removed, &pos);
    let gens = generators_by_bus(case, &pos);
    let slack = case.slack_position();

    let mut is_pv = vec![false; nb];
    let mut s_bus = vec![C64::new(0.0, 0.0); nb];
    for (i, bus) in case.buses.iter().enumerate() {
        let (pg, qg) = gens.get(&i).map_or((0.0, 0.0), |g| (g.p, g.q));
        s_bus[i] = C64::new(pg - bus.p_demand, qg - bus.q_demand) / base;
        is_pv[i] = i != slack && bus.kind == BusKind::PV && gens.contains_key(&i);
    }

    let mut v_mag: Vec<f64> = (0..nb)
        .map(|i| match gens.get(&i) {
            Some(g) if is_pv[i] || i == slack => g.v_set,
            _ => 1.0,
        })
        .collect();
    let mut v_ang = vec![0.0; nb];
    v_ang[slack] = case.buses[slack].v_ang;
    if let Some(w) = warm.filter(|w| w.v_mag.len() == nb) {
        for i in 0..nb {
            if !(is_pv[i] || i == slack) {
                v_mag[i] = w.v_mag[i];
            }
            if i != slack {
                v_ang[i] = w.v_ang[i];
            }
        }
    }

    let mut total_iterations = 0;
    let mut mismatch;
    // Each round is one NR solve; PV→PQ switches trigger another round.
    for _round in 0..=nb {
        let (its, mis) = newton(&ybus, &s_bus, &is_pv, slack, &mut v_mag, &mut v_ang, opts)?;
        total_iterations += its;
        mismatch = mis;
        if !opts.enforce_q_limits {
            return Ok(finish(case, removed, &pos, v_mag, v_ang, total_iterations, mismatch));
        }
        let v = voltages(&v_mag, &v_ang);
        let s_calc = injections(&ybus, &v);
        let mut switched = false;
        for i in 0..nb {
            if !is_pv[i] {
                continue;
            }
            let g = &gens[&i];
            let qd = case.buses[i].q_demand;
            let qg = s_calc[i].im * base + qd;
            let limit = if qg > g.q_max + 1e-9 {
                Some(g.q_max)
            } else if qg < g.q_min - 1e-9 {
                Some(g.q_min)
            } else {
                None
            };
            if let Some(q) = limit {
                is_pv[i] = false;
                s_bus[i].im = (q - qd) / base;
                switched = true;
            }
        }
        if !switched {
            return Ok(finish(case, removed, &pos, v_mag, v_ang, total_iterations, mismatch));
        }
    }
    Err(FlowError::NonConvergence {
        iterations: total_iterations,
        mismatch: f64::NAN,
    })
}

fn voltages(v_mag: &[f64], v_ang: &[f64]) -> Vec<C64> {
    v_mag.iter().zip(v_ang).map(|(&m, &a)| C64::from_polar(m, a)).collect()
}

fn currents(ybus: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let nb = v.len();
    (0..nb).map(|i| (0..nb).map(|k| ybus[(i, k)] * v[k]).sum()).collect()
}

fn injections(ybus: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    currents(ybus, v).iter().zip(v).map(|(i, v)| v * i.conj()).collect()
}

fn newton(
    ybus: &DMatrix<C64>,
    s_bus: &[C64],
    is_pv: &[bool],
    slack: usize,
    v_mag: &mut [f64],
    v_ang: &mut [f64],
    opts: &AcOptions,
) -> Result<(usize, f64), FlowError> {
    let nb = s_bus.len();
    let pv: Vec<usize> = (0..nb).filter(|&i| is_pv[i]).collect();
    let pq: Vec<usize> = (0..nb).filter(|&i| i != slack && !is_pv[i]).collect();
    let pvpq: Vec<usize> = pv.iter().chain(&pq).copied().collect();
    let (na, nm) = (pvpq.len(), pq.len());
    let dim = na + nm;

    let mut it = 0;
    loop {
        let v = voltages(v_mag, v_ang);
        let ibus = currents(ybus, &v);
        let mis: Vec<C64> = (0..nb).map(|i| v[i] * ibus[i].conj() - s_bus[i]).collect();
        let f = DVector::from_iterator(
            dim,
            pvpq.iter().map(|&i| mis[i].re).chain(pq.iter().map(|&i| mis[i].im)),
        );
        let norm = f.amax();
        if !norm.is_finite() {
            return Err(FlowError::NonConvergence {
                iterations: it,
                mismatch: norm,
            });
        }
        if norm <= opts.tolerance {
            return Ok((it, norm));
        }
        if it >= opts.max_iterations {
            return Err(FlowError::NonConvergence {
                iterations: it,
                mismatch: norm,
            });
        }

        let vn: Vec<C64> = v.iter().map(|x| x / x.norm()).collect();
        let j = C64::new(0.0, 1.0);
        let ds_dva = |i: usize, k: usize| -> C64 {
            let diag = if i == k { ibus[i] } else { C64::new(0.0, 0.0) };
            j * v[i] * (diag - ybus[(i, k)] * v[k]).conj()
        };
        let ds_dvm = |i: usize, k: usize| -> C64 {
            let mut out = v[i] * (ybus[(i, k)] * vn[k]).conj();
            if i == k {
                out += ibus[i].conj() * vn[i];
            }
            out
        };
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva(i, k).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dvm(i, k).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(na + r, c)] = ds_dva(i, k).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dvm(i, k).im;
            }
        }
        let dx = jac.lu().solve(&f).ok_or(FlowError::Singular)?;
        for (r, &i) in pvpq.iter().enumerate() {
            v_ang[i] -= dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            v_mag[i] -= dx[na + r];
        }
        it += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    case: &GridCase,
    removed: &[usize],
    pos: &HashMap<i64, usize>,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    iterations: usize,
    max_mismatch: f64,
) -> FlowState {
    let v = voltages(&v_mag, &v_ang);
    let p_line = case
        .branches
        .iter()
        .map(|br| {
            if removed.contains(&br.index) {
                return 0.0;
            }
            let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
            let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
            let tap = C64::from_polar(br.tap_ratio(), br.shift);
            let yff = (ys + C64::new(0.0, br.b_charging / 2.0)) / (tap * tap.conj());
            let yft = -ys / tap.conj();
            let i_f = yff * v[f] + yft * v[t];
            (v[f] * i_f.conj()).re.abs() * case.base_mva
        })
        .collect();
    FlowState {
        p_line,
        converged: true,
        iterations,
        max_mismatch,
        v_mag,
        v_ang,
    }
}

/// Bus power mismatch of a solved AC state, recomputed from its voltages:
/// max over |ΔP| at non-slack buses and |ΔQ| at buses without generation.
pub fn ac_residual(case: &GridCase, removed: &[usize], state: &FlowState) -> f64 {
    let pos = case.bus_positions();
    let ybus = build_ybus(case, removed, &pos);
    let gens = generators_by_bus(case, &pos);
    let slack = case.slack_position();
    let v = voltages(&state.v_mag, &state.v_ang);
    let s = injections(&ybus, &v);
    let mut worst = 0.0f64;
    for (i, bus) in case.buses.iter().enumerate() {
        if i == slack {
            continue;
        }
        let (pg, qg) = gens.get(&i).map_or((0.0, 0.0), |g| (g.p, g.q));
        worst = worst.max((s[i].re - (pg - bus.p_demand) / case.base_mva).abs());
        if !gens.contains_key(&i) {
            worst = worst.max((s[i].im - (qg - bus.q_demand) / case.base_mva).abs());
        }
    }
    worst
}

/// Linear B-theta power flow. Always converges on a connected network.
pub fn solve_dc(case: &GridCase, removed: &[usize]) -> Result<FlowState, FlowError> {
    if is_islanding(case, removed) {
        return Err(FlowError::Islanded);
    }
    let nb = case.n_buses();
    let pos = case.bus_positions();
    let slack = case.slack_position();
    let base = case.base_mva;
    let (bbus, p_inj) = dc_system(case, removed, &pos);

    let others: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let theta_slack = case.buses[slack].v_ang;
    let m = others.len();
    let mut theta = vec![0.0; nb];
    theta[slack] = theta_slack;
    if m > 0 {
        let a = DMatrix::from_fn(m, m, |r, c| bbus[(others[r], others[c])]);
        let rhs = DVector::from_fn(m, |r, _| p_inj[others[r]] - bbus[(others[r], slack)] * theta_slack);
        let sol = a.lu().solve(&rhs).ok_or(FlowError::Singular)?;
        for (r, &i) in others.iter().enumerate() {
            theta[i] = sol[r];
        }
    }
    let p_line = case
        .branches
        .iter()
        .map(|br| {
            if removed.contains(&br.index) {
                return 0.0;
            }
            (dc_branch_flow(br, &theta, &pos) * base).abs()
        })
        .collect();
    Ok(FlowState {
        p_line,
        converged: true,
        iterations: 1,
        max_mismatch: 0.0,
        v_mag: vec![1.0; nb],
        v_ang: theta,
    })
}

fn dc_susceptance(br: &crate::grid::Branch) -> f64 {
    1.0 / (br.x * br.tap_ratio())
}

/// Signed DC flow from → to in pu.
pub(crate) fn dc_branch_flow(br: &crate::grid::Branch, theta: &[f64], pos: &HashMap<i64, usize>) -> f64 {
    let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
    dc_susceptance(br) * (theta[f] - theta[t] - br.shift)
}

/// DC bus susceptance matrix and net injections (pu, phase-shift terms folded in).
pub(crate) fn dc_system(case: &GridCase, removed: &[usize], pos: &HashMap<i64, usize>) -> (DMatrix<f64>, Vec<f64>) {
    let nb = case.n_buses();
    let mut bbus = DMatrix::<f64>::zeros(nb, nb);
    let mut p_inj = vec![0.0; nb];
    for br in &case.branches {
        if removed.contains(&br.index) {
            continue;
        }
        let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
        let b = dc_susceptance(br);
        bbus[(f, f)] += b;
        bbus[(t, t)] += b;
        bbus[(f, t)] -= b;
        bbus[(t, f)] -= b;
        let shift_inj = -b * br.shift;
        p_inj[f] -= shift_inj;
        p_inj[t] += shift_inj;
    }
    for g in &case.gens {
        p_inj[pos[&g.bus]] += g.p_out / case.base_mva;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        p_inj[i] -= (bus.p_demand + bus.gs) / case.base_mva;
    }
    (bbus, p_inj)
}

/// Largest nodal active-power imbalance (MW) of a DC solution over non-slack
/// buses, together with the system-wide imbalance (slack generation must
/// cover total demand in a lossless model).
pub fn dc_residual(case: &GridCase, removed: &[usize], state: &FlowState) -> f64 {
    let pos = case.bus_positions();
    let slack = case.slack_position();
    let nb = case.n_buses();
    let mut net_out = vec![0.0; nb];
    for br in &case.branches {
        if removed.contains(&br.index) {
            continue;
        }
        let flow = dc_branch_flow(br, &state.v_ang, &pos);
        net_out[pos[&br.from_bus]] += flow;
        net_out[pos[&br.to_bus]] -= flow;
    }
    let mut injection = vec![0.0; nb];
    for g in &case.gens {
        injection[pos[&g.bus]] += g.p_out / case.base_mva;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        injection[i] -= (bus.p_demand + bus.gs) / case.base_mva;
    }
    let nodal = (0..nb)
        .filter(|&i| i != slack)
        .map(|i| (net_out[i] - injection[i]).abs())
        .fold(0.0, f64::max);
    let system: f64 = net_out.iter().sum();
    nodal.max(system.abs()) * case.base_mva
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;

    const TWO_BUS: &str = r#"
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0   0  0 0 1 1.0 0 0 1 1.1 0.9;
    2  1  50  0  0 0 1 1.0 0 0 1 1.1 0.9;
];
mpc.gen = [ 1  0  0  100 -100 1.0 100 1 200 0; ];
mpc.branch = [ 1  2  0  0.1  0  0  0 0 0 0 1 -360 360; ];
"#;

    const RING3: &str = r#"
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 1 30 0 0 0 1 1 0 0 1 1.1 0.9;
 3 1 0 0 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [ 1 30 0 100 -100 1 100 1 100 0; ];
mpc.branch = [
 1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
 2 3 0 0.1 0 0 0 0 0 0 1 -360 360;
 3 1 0 0.1 0 0 0 0 0 0 1 -360 360;
];
"#;

    #[test]
    fn two_bus_lossless_ac() {
        let case = parse_case(TWO_BUS).unwrap();
        let st = solve_ac(&case, &[]).unwrap();
        assert!(st.converged);
        assert!(st.max_mismatch <= 1e-8);
        assert!((st.p_line[0] - 50.0).abs() < 1e-6, "{:?}", st.p_line);
        // closed form: P = V1 V2 sin(d) / x with V1 = 1, Q2 = 0
        let d = -st.v_ang[1];
        let p = st.v_mag[1] * d.sin() / 0.1;
        assert!((p - 0.5).abs() < 1e-8);
        assert!(ac_residual(&case, &[], &st) <= 1e-8);
    }

    #[test]
    fn single_line_dc() {
        let text = TWO_BUS.replace("2  1  50", "2  1  30");
        let case = parse_case(&text).unwrap();
        let st = solve_dc(&case, &[]).unwrap();
        assert!((st.p_line[0] - 30.0).abs() < 1e-10);
    }

    #[test]
    fn ring_splits_by_susceptance() {
        let case = parse_case(RING3).unwrap();
        let st = solve_dc(&case, &[]).unwrap();
        assert!((st.p_line[0] - 20.0).abs() < 1e-9);
        assert!((st.p_line[1] - 10.0).abs() < 1e-9);
        assert!((st.p_line[2] - 10.0).abs() < 1e-9);
        assert!(dc_residual(&case, &[], &st) <= 1e-10 * 30.0);
    }

    #[test]
    fn removed_lines_report_zero_and_reroute() {
        let case = parse_case(RING3).unwrap();
        let st = solve_dc(&case, &[0]).unwrap();
        assert_eq!(st.p_line[0], 0.0);
        assert!((st.p_line[1] - 30.0).abs() < 1e-9);
        let ac = solve_ac(&case, &[0]).unwrap();
        assert_eq!(ac.p_line[0], 0.0);
        assert!(ac.max_mismatch <= 1e-8);
    }

    #[test]
    fn bridge_removal_islands() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(solve_dc(&case, &[0]), Err(FlowError::Islanded));
        assert_eq!(solve_ac(&case, &[0]), Err(FlowError::Islanded));
    }

    #[test]
    fn overload_beyond_capacity_fails_to_converge() {
        // 2-bus transfer limit at x = 0.1 is 5 pu; ask for 20 pu.
        let text = TWO_BUS.replace("2  1  50", "2  1  2000");
        let case = parse_case(&text).unwrap();
        assert!(matches!(solve_ac(&case, &[]), Err(FlowError::NonConvergence { .. })));
    }

    #[test]
    fn q_limit_switches_pv_bus() {
        let text = r#"
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 2 0 80 0 0 1 1.05 0 0 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 300 -300 1.0 100 1 300 0;
 2 0 0 10 -10 1.05 100 1 100 0;
];
mpc.branch = [ 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360; ];
"#;
        let case = parse_case(text).unwrap();
        let no_lim = solve_ac(&case, &[]).unwrap();
        assert!((no_lim.v_mag[1] - 1.05).abs() < 1e-12);
        let lim = solve_ac_with(
            &case,
            &[],
            &AcOptions {
                enforce_q_limits: true,
                ..AcOptions::default()
            },
            None,
        )
        .unwrap();
        assert!(lim.v_mag[1] < 1.05 - 1e-3);
        // bus 2 now injects exactly q_max
        let pos = case.bus_positions();
        let y = build_ybus(&case, &[], &pos);
        let s = injections(&y, &voltages(&lim.v_mag, &lim.v_ang));
        assert!((s[1].im * 100.0 + 80.0 - 10.0).abs() < 1e-5);
    }

    #[test]
    fn warm_start_takes_fewer_iterations() {
        let case = parse_case(RING3).unwrap();
        let cold = solve_ac(&case, &[]).unwrap();
        let warm = solve_ac_with(&case, &[], &AcOptions::default(), Some(&cold)).unwrap();
        assert!(warm.iterations <= 1);
        for (a, b) in cold.p_line.iter().zip(&warm.p_line) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
