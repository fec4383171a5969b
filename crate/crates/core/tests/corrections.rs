//! Which phase-flip corrections carry weight.

use ghz_purify::analytics::phase_round;
use ghz_purify::engine::{run_phaseflip_with, EngineOptions, PhaseFlipCorrections};
use ghz_purify::ensemble::PhaseEnsemble;
use ghz_purify::scalar::{ratio, Rational};

fn run(
    n: usize,
    corrections: PhaseFlipCorrections,
) -> ghz_purify::engine::ProtocolReport<Rational> {
    let opts = EngineOptions {
        phase_corrections: Some(corrections),
        ..Default::default()
    };
    run_phaseflip_with(&PhaseEnsemble::new(ratio(4, 5)).unwrap(), n, &opts).unwrap()
}

#[test]
fn standard_table_reproduces_the_round() {
    for n in [2, 3, 4, 5] {
        let (expect, _) = phase_round(&PhaseEnsemble::new(ratio(4, 5)).unwrap()).unwrap();
        let rep = run(n, PhaseFlipCorrections::standard(n));
        assert_eq!(rep.output, expect.to_ghz(n).unwrap());
        assert!(rep.classification_total());
    }
}

#[test]
fn copy_two_flips_are_absorbed_by_the_x_readout() {
    for n in [3, 4] {
        let standard = PhaseFlipCorrections::standard(n);
        let reference = run(n, standard.clone()).output;
        for (pattern, flips) in &standard.sigma_x {
            for (skip, flip) in flips.iter().enumerate() {
                let mut mutant = standard.clone();
                mutant.sigma_x.get_mut(pattern).unwrap().remove(skip);
                let rep = run(n, mutant);
                assert_eq!(
                    rep.output, reference,
                    "n={n}: dropping {flip:?} on {pattern}"
                );
                assert!(rep.classification_total());
            }
        }
    }
}

#[test]
fn sign_fix_is_required() {
    for n in [3, 4] {
        let standard = PhaseFlipCorrections::standard(n);
        let reference = run(n, standard.clone()).output;
        let no_z = PhaseFlipCorrections {
            sigma_z: false,
            ..standard
        };
        let rep = run(n, no_z);
        assert_ne!(rep.output, reference);
        assert!(rep.output.fidelity() < reference.fidelity());
    }
}

#[test]
fn literal_alice_entries_need_copy_two() {
    let standard = run(3, PhaseFlipCorrections::standard(3)).output;
    let literal = run(3, PhaseFlipCorrections::literal_table()).output;
    assert_ne!(literal, standard);
}
