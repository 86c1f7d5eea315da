mod common;

use cascade_core::power_flow::{ac_residual, dc_residual, solve_ac, solve_ac_with, solve_dc, AcOptions, FlowError};
use cascade_core::topology::{is_islanding, LineSpace};

use common::load;

// |P_from| in MW from an independent Newton-Raphson solve (PYPOWER, Q limits off).
const CASE14_REF: [f64; 20] = [
    156.882890532,
    75.510381826,
    73.237579238,
    56.131495939,
    41.516215018,
    23.285690096,
    61.158230445,
    28.074175916,
    16.079757583,
    44.087320860,
    7.353276983,
    7.786067015,
    17.747976862,
    0.000000000,
    28.074175916,
    5.227552470,
    9.426381030,
    3.785322381,
    1.614257771,
    5.643850980,
];
const CASE39_REF_HEAD: [f64; 6] = [
    173.699968353,
    76.099968353,
    319.914587166,
    244.592266659,
    250.000000000,
    37.339617644,
];
const CASE118_REF_HEAD: [f64; 6] = [
    12.352812506,
    38.647187494,
    103.229745086,
    68.110507838,
    88.470416475,
    35.539931483,
];

fn no_q_limits() -> AcOptions {
    AcOptions {
        enforce_q_limits: false,
        ..AcOptions::default()
    }
}

#[test]
fn case_dimensions() {
    let c14 = load("case14");
    assert_eq!((c14.n_buses(), c14.n_lines(), c14.gens.len()), (14, 20, 5));
    let c39 = load("case39");
    assert_eq!((c39.n_buses(), c39.n_lines(), c39.gens.len()), (39, 46, 10));
    let c118 = load("case118");
    assert_eq!((c118.n_buses(), c118.n_lines(), c118.gens.len()), (118, 186, 54));
}

#[test]
fn viable_line_counts() {
    assert_eq!(LineSpace::viable(&load("case14")).len(), 19);
    assert_eq!(LineSpace::viable(&load("case39")).len(), 35);
    assert_eq!(LineSpace::viable(&load("case118")).len(), 177);
}

#[test]
fn bus8_radial_in_case14() {
    let case = load("case14");
    // branch 14 joins buses 7 and 8
    let br = &case.branches[13];
    assert_eq!((br.from_bus, br.to_bus), (7, 8));
    assert!(is_islanding(&case, &[13]));
    assert!(!is_islanding(&case, &[]));
    assert_eq!(solve_ac(&case, &[13]), Err(FlowError::Islanded));
}

#[test]
fn ac_matches_reference_solver() {
    let c14 = load("case14");
    let st = solve_ac_with(&c14, &[], &no_q_limits(), None).unwrap();
    for (i, (a, b)) in st.p_line.iter().zip(CASE14_REF).enumerate() {
        assert!((a - b).abs() < 1e-5, "case14 line {}: {a} vs {b}", i + 1);
    }
    for (name, reference) in [("case39", CASE39_REF_HEAD), ("case118", CASE118_REF_HEAD)] {
        let case = load(name);
        let st = solve_ac_with(&case, &[], &no_q_limits(), None).unwrap();
        for (i, (a, b)) in st.p_line.iter().zip(reference).enumerate() {
            assert!((a - b).abs() < 1e-5, "{name} line {}: {a} vs {b}", i + 1);
        }
    }
}

#[test]
fn ac_contingencies_satisfy_mismatch() {
    for name in ["case14", "case39"] {
        let case = load(name);
        let space = LineSpace::viable(&case);
        for &b in space.branches() {
            match solve_ac(&case, &[b]) {
                Ok(st) => {
                    assert!(st.max_mismatch <= 1e-8);
                    assert!(ac_residual(&case, &[b], &st) <= 1e-8, "{name} outage {}", b + 1);
                }
                Err(FlowError::NonConvergence { .. }) => {}
                Err(e) => panic!("{name} outage {}: {e}", b + 1),
            }
        }
    }
}

#[test]
fn dc_nodal_balance() {
    for name in ["case14", "case39", "case118"] {
        let case = load(name);
        let load_mw = case.total_load_mw();
        let st = solve_dc(&case, &[]).unwrap();
        assert!(dc_residual(&case, &[], &st) <= 1e-10 * load_mw, "{name}");
    }
}

#[test]
fn light_load_ac_close_to_dc() {
    let case = load("case14").with_load_scale(0.5);
    let ac = solve_ac(&case, &[]).unwrap();
    let dc = solve_dc(&case, &[]).unwrap();
    let base = solve_ac(&load("case14"), &[]).unwrap();
    let limits = cascade_core::grid::assign_limits(&load("case14"), &base, Default::default()).unwrap();
    for i in 0..case.n_lines() {
        assert!(
            (ac.p_line[i] - dc.p_line[i]).abs() <= 0.1 * limits.p_max[i],
            "line {}: ac {} dc {} pmax {}",
            i + 1,
            ac.p_line[i],
            dc.p_line[i],
            limits.p_max[i]
        );
    }
}
