//! Parity-check detectors.
//!
//! The cross-Kerr QND is modelled as an ideal two-photon parity projector:
//! the probe picks up `+θ` for HH, `−θ` for VV and nothing for HV/VH, and an
//! X-quadrature readout cannot tell `±θ` apart, so only even/odd survives.
//! A CNOT-plus-Z-measurement detector gives the same statistics and serves
//! as an oracle for the projector.

use std::fmt;

use crate::error::{Error, Result};
use crate::register::{Branch, PhotonTag, PolarizationLabel, PureState};
use crate::scalar::Amplitude;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParityOutcome {
    Even,
    Odd,
}

impl ParityOutcome {
    pub fn from_bits(a: bool, b: bool) -> Self {
        if a == b {
            ParityOutcome::Even
        } else {
            ParityOutcome::Odd
        }
    }

    pub fn is_odd(self) -> bool {
        self == ParityOutcome::Odd
    }

    pub fn letter(self) -> char {
        match self {
            ParityOutcome::Even => 'E',
            ParityOutcome::Odd => 'O',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'E' | 'e' => Some(ParityOutcome::Even),
            'O' | 'o' => Some(ParityOutcome::Odd),
            _ => None,
        }
    }
}

impl fmt::Display for ParityOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Writes a pattern as letters, e.g. `EEO`.
pub fn pattern_string(pattern: &[ParityOutcome]) -> String {
    pattern.iter().map(|p| p.letter()).collect()
}

pub fn parse_pattern(text: &str) -> Option<Vec<ParityOutcome>> {
    text.trim()
        .chars()
        .map(ParityOutcome::from_letter)
        .collect()
}

/// Phase picked up by the coherent probe, in units of the opaque `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbePhase {
    PlusTheta,
    MinusTheta,
    Zero,
}

impl ProbePhase {
    /// What the homodyne readout reports; the sign of `θ` is invisible.
    pub fn readout(self) -> ParityOutcome {
        match self {
            ProbePhase::PlusTheta | ProbePhase::MinusTheta => ParityOutcome::Even,
            ProbePhase::Zero => ParityOutcome::Odd,
        }
    }
}

/// Probe phase for a two-photon basis pair routed through the detector.
pub fn probe_phase(pair: PolarizationLabel) -> Result<ProbePhase> {
    if pair.len() != 2 {
        return Err(Error::PhotonCount {
            count: pair.len(),
            reason: "the probe couples exactly two photons",
        });
    }
    Ok(match (pair.get(0), pair.get(1)) {
        (false, false) => ProbePhase::PlusTheta,
        (true, true) => ProbePhase::MinusTheta,
        _ => ProbePhase::Zero,
    })
}

fn positions<A: Amplitude>(
    state: &PureState<A>,
    a: PhotonTag,
    b: PhotonTag,
) -> Result<(usize, usize)> {
    if a == b {
        return Err(Error::SamePhoton(a));
    }
    Ok((state.position(a)?, state.position(b)?))
}

/// Projects onto the even span {HH, VV} and the odd span {HV, VH} of two
/// photons. Coherence inside each span is kept and no photon is removed.
pub fn parity_project<A: Amplitude>(
    state: &PureState<A>,
    a: PhotonTag,
    b: PhotonTag,
) -> Result<Vec<Branch<ParityOutcome, A>>> {
    let (pa, pb) = positions(state, a, b)?;
    state.split_by(
        |bits| ParityOutcome::from_bits(bits >> pa & 1 == 1, bits >> pb & 1 == 1),
        |r| r.clone(),
        |bits| bits,
    )
}

/// Parity read out with a CNOT from `control` onto `target` followed by a
/// Z measurement of the target. On Odd the target is flipped back so it is
/// left in |H⟩ on both branches; applying σx (Odd only) and the CNOT again
/// recovers the projector's post-state.
pub fn parity_via_cnot<A: Amplitude>(
    state: &PureState<A>,
    control: PhotonTag,
    target: PhotonTag,
) -> Result<Vec<Branch<ParityOutcome, A>>> {
    positions(state, control, target)?;
    let encoded = state.cnot(control, target)?;
    let pt = encoded.position(target)?;
    let branches = encoded.split_by(
        |bits| {
            if bits >> pt & 1 == 1 {
                ParityOutcome::Odd
            } else {
                ParityOutcome::Even
            }
        },
        |r| r.clone(),
        |bits| bits & !(1 << pt),
    )?;
    Ok(branches)
}

/// Ideal parity detector. The readout error rate is a placeholder for
/// imperfect homodyne discrimination and must stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QndDetector {
    pub readout_error: f64,
}

impl QndDetector {
    pub fn measure<A: Amplitude>(
        &self,
        state: &PureState<A>,
        a: PhotonTag,
        b: PhotonTag,
    ) -> Result<Vec<Branch<ParityOutcome, A>>> {
        if self.readout_error != 0.0 {
            return Err(Error::OutOfRange {
                what: "readout error",
                value: self.readout_error.to_string(),
                range: "0 (noisy readout is not modelled)",
            });
        }
        parity_project(state, a, b)
    }
}
