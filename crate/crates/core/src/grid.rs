//! Grid case model, MATPOWER / JSON case parsing and per-line flow limits.
//!
//! Line indices (`Branch::index`) are assigned in file order over in-service
//! branches only; out-of-service branches and generators are dropped at load
//! time.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power_flow::FlowState;

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("{what} references unknown bus {bus}")]
    DanglingReference { what: String, bus: i64 },
    #[error("case has no slack (reference) bus")]
    NoSlackBus,
    #[error("base-case power flow did not converge; cannot assign limits")]
    NonConvergedBase,
    #[error("invalid limit rule: {0}")]
    InvalidLimitRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    #[serde(rename = "pv")]
    PV,
    #[serde(rename = "pq")]
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    /// MW
    pub p_demand: f64,
    /// MVAr
    pub q_demand: f64,
    /// Shunt conductance, MW demanded at V = 1 pu.
    #[serde(default)]
    pub gs: f64,
    /// Shunt susceptance, MVAr injected at V = 1 pu.
    #[serde(default)]
    pub bs: f64,
    pub v_mag: f64,
    /// radians
    pub v_ang: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub index: usize,
    pub from_bus: i64,
    pub to_bus: i64,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// MW; 0 means unspecified.
    pub rate_a: f64,
    /// Off-nominal tap ratio; 0 means a plain line (ratio 1).
    #[serde(default)]
    pub tap: f64,
    /// Phase shift in radians.
    #[serde(default)]
    pub shift: f64,
    pub status: u8,
}

impl Branch {
    pub fn tap_ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: i64,
    pub p_out: f64,
    pub q_out: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_setpoint: f64,
}

/// Parsed, validated network. Immutable once built; load variations produce
/// new cases via [`GridCase::with_load_scale`] / [`GridCase::with_bus_load_scales`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Generator>,
}

impl GridCase {
    /// Build a case from parts and check every invariant.
    pub fn new(base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>, gens: Vec<Generator>) -> Result<Self, CaseError> {
        let case = GridCase {
            base_mva,
            buses,
            branches,
            gens,
        };
        case.validate()?;
        Ok(case)
    }

    fn validate(&self) -> Result<(), CaseError> {
        use CaseError::*;
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(MalformedCase(format!("baseMVA = {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(MalformedCase("no buses".into()));
        }
        let mut seen = HashMap::new();
        for (pos, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, pos).is_some() {
                return Err(MalformedCase(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.p_demand.is_finite() && bus.q_demand.is_finite()) {
                return Err(MalformedCase(format!("bus {} has non-finite demand", bus.id)));
            }
            if !(bus.v_mag > 0.0) {
                return Err(MalformedCase(format!("bus {} has v_mag <= 0", bus.id)));
            }
        }
        match self.buses.iter().filter(|b| b.kind == BusKind::Slack).count() {
            0 => return Err(NoSlackBus),
            1 => {}
            n => return Err(MalformedCase(format!("{n} slack buses; exactly one required"))),
        }
        if self.branches.is_empty() {
            return Err(MalformedCase("no in-service branches".into()));
        }
        for (i, br) in self.branches.iter().enumerate() {
            if br.index != i {
                return Err(MalformedCase(format!("branch index {} at position {i}", br.index)));
            }
            for bus in [br.from_bus, br.to_bus] {
                if !seen.contains_key(&bus) {
                    return Err(DanglingReference {
                        what: format!("branch {}", i + 1),
                        bus,
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(MalformedCase(format!("branch {} is a self-loop", i + 1)));
            }
            if br.x == 0.0 || !br.x.is_finite() {
                return Err(MalformedCase(format!("branch {} has x = {}", i + 1, br.x)));
            }
            if br.status != 1 {
                return Err(MalformedCase(format!("branch {} is out of service", i + 1)));
            }
        }
        for g in &self.gens {
            if !seen.contains_key(&g.bus) {
                return Err(DanglingReference {
                    what: "generator".into(),
                    bus: g.bus,
                });
            }
            if g.q_min > g.q_max {
                return Err(MalformedCase(format!("generator at bus {} has q_min > q_max", g.bus)));
            }
        }
        Ok(())
    }

    /// Number of in-service branches (N_total).
    pub fn n_lines(&self) -> usize {
        self.branches.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of every bus id in `buses`.
    pub fn bus_positions(&self) -> HashMap<i64, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_demand).sum()
    }

    /// Positions of buses that carry load (nonzero P or Q demand).
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.p_demand != 0.0 || b.q_demand != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Uniformly scaled demand, constant power factor.
    pub fn with_load_scale(&self, scale: f64) -> GridCase {
        let mut out = self.clone();
        for bus in &mut out.buses {
            bus.p_demand *= scale;
            bus.q_demand *= scale;
        }
        out
    }

    /// Per-bus demand scales, indexed by bus position; constant power factor.
    pub fn with_bus_load_scales(&self, scales: &[f64]) -> GridCase {
        assert_eq!(scales.len(), self.buses.len(), "one scale per bus");
        let mut out = self.clone();
        for (bus, s) in out.buses.iter_mut().zip(scales) {
            bus.p_demand *= s;
            bus.q_demand *= s;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("GridCase serializes")
    }
}

/// Parse a MATPOWER `.m` case or its JSON mirror (detected by a leading `{`).
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    if text.trim_start().starts_with('{') {
        let case: GridCase = serde_json::from_str(text).map_err(|e| CaseError::MalformedCase(format!("json: {e}")))?;
        case.validate()?;
        return Ok(case);
    }
    parse_matpower(text)
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| match l.find('%') {
            Some(p) => &l[..p],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn scalar_field(text: &str, name: &str) -> Option<Result<f64, CaseError>> {
    let key = format!("mpc.{name}");
    let start = text.find(&key)? + key.len();
    let rest = text[start..].trim_start().strip_prefix('=')?;
    let end = rest.find(';').unwrap_or(rest.len());
    let raw = rest[..end].trim();
    Some(
        raw.parse::<f64>()
            .map_err(|_| CaseError::MalformedCase(format!("{key} = {raw:?}"))),
    )
}

fn matrix_field(text: &str, name: &str) -> Result<Vec<Vec<f64>>, CaseError> {
    let key = format!("mpc.{name}");
    let start = text
        .match_indices(&key)
        .map(|(i, _)| i + key.len())
        // `mpc.gen` must not match `mpc.gencost`
        .find(|&i| text[i..].chars().next().is_some_and(|c| c.is_whitespace() || c == '='))
        .ok_or_else(|| CaseError::MalformedCase(format!("missing {key} matrix")))?;
    let rest = &text[start..];
    let open = rest
        .find('[')
        .ok_or_else(|| CaseError::MalformedCase(format!("{key}: expected '['")))?;
    let close = rest[open..]
        .find(']')
        .ok_or_else(|| CaseError::MalformedCase(format!("{key}: unterminated matrix")))?;
    let body = &rest[open + 1..open + close];
    let mut rows = Vec::new();
    for raw in body.split([';', '\n']) {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let row = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| CaseError::MalformedCase(format!("{key}: bad number {t:?} in row {raw:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn need(row: &[f64], cols: usize, what: &str) -> Result<(), CaseError> {
    if row.len() < cols {
        Err(CaseError::MalformedCase(format!(
            "{what} row has {} columns, need at least {cols}",
            row.len()
        )))
    } else {
        Ok(())
    }
}

fn parse_matpower(text: &str) -> Result<GridCase, CaseError> {
    let text = strip_comments(text);
    let base_mva =
        scalar_field(&text, "baseMVA").ok_or_else(|| CaseError::MalformedCase("missing mpc.baseMVA".into()))??;

    let buses = matrix_field(&text, "bus")?
        .into_iter()
        .map(|row| {
            need(&row, 9, "bus")?;
            let kind = match row[1] as i64 {
                1 => BusKind::PQ,
                2 => BusKind::PV,
                3 => BusKind::Slack,
                t => {
                    return Err(CaseError::MalformedCase(format!(
                        "bus {} has unsupported type {t}",
                        row[0]
                    )))
                }
            };
            Ok(Bus {
                id: row[0] as i64,
                kind,
                p_demand: row[2],
                q_demand: row[3],
                gs: row[4],
                bs: row[5],
                v_mag: row[7],
                v_ang: row[8].to_radians(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut gens = Vec::new();
    for row in matrix_field(&text, "gen")? {
        need(&row, 8, "gen")?;
        if row[7] <= 0.0 {
            continue;
        }
        gens.push(Generator {
            bus: row[0] as i64,
            p_out: row[1],
            q_out: row[2],
            q_max: row[3],
            q_min: row[4],
            v_setpoint: row[5],
        });
    }

    let mut branches = Vec::new();
    for row in matrix_field(&text, "branch")? {
        need(&row, 11, "branch")?;
        if row[10] <= 0.0 {
            continue;
        }
        branches.push(Branch {
            index: branches.len(),
            from_bus: row[0] as i64,
            to_bus: row[1] as i64,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            rate_a: row[5],
            tap: row[8],
            shift: row[9].to_radians(),
            status: 1,
        });
    }

    GridCase::new(base_mva, buses, branches, gens)
}

/// Rule for lines without a rating: `p_max = max(alpha * |base flow|, floor_mw)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRule {
    pub alpha: f64,
    pub floor_mw: f64,
}

impl Default for LimitRule {
    fn default() -> Self {
        LimitRule {
            alpha: 1.3,
            floor_mw: 1.0,
        }
    }
}

/// Per-line maximum active flow in MW, indexed like `GridCase::branches`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineLimits {
    pub p_max: Vec<f64>,
}

impl LineLimits {
    pub fn len(&self) -> usize {
        self.p_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_max.is_empty()
    }

    /// Every limit multiplied by `c`.
    pub fn scaled(&self, c: f64) -> LineLimits {
        LineLimits {
            p_max: self.p_max.iter().map(|p| p * c).collect(),
        }
    }
}

pub fn assign_limits(case: &GridCase, base_flows: &FlowState, rule: LimitRule) -> Result<LineLimits, CaseError> {
    if !(rule.alpha > 1.0 && rule.alpha.is_finite()) {
        return Err(CaseError::InvalidLimitRule(format!(
            "alpha = {} (must be > 1)",
            rule.alpha
        )));
    }
    if !(rule.floor_mw > 0.0) {
        return Err(CaseError::InvalidLimitRule(format!(
            "floor = {} (must be > 0)",
            rule.floor_mw
        )));
    }
    if !base_flows.converged {
        return Err(CaseError::NonConvergedBase);
    }
    if base_flows.p_line.len() != case.n_lines() {
        return Err(CaseError::MalformedCase(format!(
            "{} base flows for {} lines",
            base_flows.p_line.len(),
            case.n_lines()
        )));
    }
    let p_max = case
        .branches
        .iter()
        .zip(&base_flows.p_line)
        .map(|(br, flow)| {
            if br.rate_a > 0.0 {
                br.rate_a
            } else {
                (rule.alpha * flow.abs()).max(rule.floor_mw)
            }
        })
        .collect();
    Ok(LineLimits { p_max })
}
