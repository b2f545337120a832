//! Acceptance criteria 1-13 at full scale with the default seed. Each test
//! prints one PASS/FAIL line.

use sojourn_core::stats::DEFAULT_SEED;
use sojourn_core::validate::{run_criterion, ValidateOptions};

fn criterion(id: u32) {
    let r = run_criterion(id, &ValidateOptions::new(DEFAULT_SEED, false));
    println!("{}", r.line());
    for v in &r.values {
        match v.stderr {
            Some(se) => println!("    {:<28} {:.6} ± {:.6}", v.name, v.value, se),
            None => println!("    {:<28} {:.6}", v.name, v.value),
        }
    }
    assert!(r.passed, "{}", r.line());
}

#[test]
fn criterion_01_known_pickands_values() {
    criterion(1);
}

#[test]
fn criterion_02_occupation_mean() {
    criterion(2);
}

#[test]
fn criterion_03_lower_bound() {
    criterion(3);
}

#[test]
fn criterion_04_bound_dominance() {
    criterion(4);
}

#[test]
fn criterion_05_duplication_identity() {
    criterion(5);
}

#[test]
fn criterion_06_tilt_identity() {
    criterion(6);
}

#[test]
fn criterion_07_t_closed_form() {
    criterion(7);
}

#[test]
fn criterion_08_consistency_web() {
    criterion(8);
}

#[test]
fn criterion_09_scaling_identity() {
    criterion(9);
}

#[test]
fn criterion_10_berman_btilde() {
    criterion(10);
}

#[test]
fn criterion_11_piterbarg() {
    criterion(11);
}

#[test]
fn criterion_12_sojourn_tails() {
    criterion(12);
}

#[test]
fn criterion_13_determinism() {
    criterion(13);
}
