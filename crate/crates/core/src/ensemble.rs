//! GHZ-diagonal, Bell-diagonal and phase ensembles, the noisy-channel
//! ingestion model, and the plain-text ensemble format.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::register::{parse_parties, party_string, BellLabel, GhzLabel, Party, Sign};
use crate::scalar::{parse_rational, Rational, Weight};

/// Label of entry `i` of a fidelity vector on `n` photons.
///
/// Three-photon vectors follow the single-flip naming (Φ₁ = VHH, Φ₂ = HVH,
/// Φ₃ = HHV); every other size uses binary indexing over photons 2..n
/// (two photons: φ, ψ; four photons: Φ₁ = HHHV, ..., Φ₇ = HVVV).
pub fn fidelity_label(n: usize, i: usize) -> Result<GhzLabel> {
    if n == 3 {
        if i > 3 {
            return Err(Error::OutOfRange {
                what: "fidelity index",
                value: i.to_string(),
                range: "0..4",
            });
        }
        GhzLabel::single_flip(3, i)
    } else {
        GhzLabel::from_index(n, i as u64, Sign::Plus)
    }
}

/// Mixture of GHZ basis states on an ordered list of parties.
///
/// Only nonzero weights are stored. `normalized` records whether the weights
/// are a probability distribution; unnormalized ensembles carry their total
/// weight implicitly as the sum.
#[derive(Clone, Debug, PartialEq)]
pub struct GhzDiagonalEnsemble<W> {
    parties: Vec<Party>,
    weights: BTreeMap<GhzLabel, W>,
    normalized: bool,
}

impl<W: Weight> GhzDiagonalEnsemble<W> {
    /// Unnormalized ensemble; weights must be nonnegative.
    pub fn unnormalized(
        parties: Vec<Party>,
        weights: impl IntoIterator<Item = (GhzLabel, W)>,
    ) -> Result<Self> {
        let n = parties.len();
        if n < 2 {
            return Err(Error::PhotonCount {
                count: n,
                reason: "GHZ ensembles need at least two parties",
            });
        }
        for (i, p) in parties.iter().enumerate() {
            if parties[..i].contains(p) {
                return Err(Error::Junction(format!("party {p} listed twice")));
            }
        }
        let mut map = BTreeMap::new();
        for (label, w) in weights {
            if label.n() != n {
                return Err(Error::PhotonCount {
                    count: label.n(),
                    reason: "label size differs from ensemble size",
                });
            }
            if w < W::zero() {
                return Err(Error::NegativeWeight(w.to_string()));
            }
            let slot = map.entry(label).or_insert_with(W::zero);
            *slot = slot.clone() + w;
        }
        map.retain(|_, w: &mut W| !w.is_zero());
        Ok(GhzDiagonalEnsemble {
            parties,
            weights: map,
            normalized: false,
        })
    }

    /// Probability distribution over GHZ labels; weights must sum to one.
    pub fn normalized(
        parties: Vec<Party>,
        weights: impl IntoIterator<Item = (GhzLabel, W)>,
    ) -> Result<Self> {
        let mut e = Self::unnormalized(parties, weights)?;
        let total = e.total();
        if !total.approx_eq(&W::one()) {
            return Err(Error::NotNormalized {
                total: total.to_string(),
            });
        }
        e.normalized = true;
        Ok(e)
    }

    /// Normalized ensemble on the first `n` parties from a fidelity vector
    /// indexed as in [`fidelity_label`].
    pub fn from_fidelities(n: usize, f: &[W]) -> Result<Self> {
        if !(2..=20).contains(&n) || f.len() > 1 << (n - 1) {
            return Err(Error::PhotonCount {
                count: f.len(),
                reason: "fidelity vector longer than the number of GHZ labels",
            });
        }
        let labels = (0..f.len())
            .map(|i| fidelity_label(n, i))
            .collect::<Result<Vec<_>>>()?;
        Self::normalized(Party::first(n), labels.into_iter().zip(f.iter().cloned()))
    }

    /// Target weight `f0`, the rest spread evenly over the other `+` labels.
    pub fn symmetric(n: usize, f0: &W) -> Result<Self> {
        check_unit(f0, "F0")?;
        if !(2..=20).contains(&n) {
            return Err(Error::PhotonCount {
                count: n,
                reason: "symmetric noise supports 2..=20 photons",
            });
        }
        let others = (1u64 << (n - 1)) - 1;
        let rest = (W::one() - f0.clone()) / W::from_u64(others).expect("label count");
        let labels = GhzLabel::all(n, Sign::Plus)?;
        let weights = labels.into_iter().map(|l| {
            (
                l,
                if l.mask() == 0 {
                    f0.clone()
                } else {
                    rest.clone()
                },
            )
        });
        Self::normalized(Party::first(n), weights)
    }

    /// Pure `Φ₀⁺` on the first `n` parties.
    pub fn pure(n: usize) -> Result<Self> {
        Self::normalized(Party::first(n), [(GhzLabel::target(n)?, W::one())])
    }

    pub fn n(&self) -> usize {
        self.parties.len()
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn weight(&self, label: &GhzLabel) -> W {
        self.weights.get(label).cloned().unwrap_or_else(W::zero)
    }

    /// Weight of the `i`-th entry of a fidelity vector.
    pub fn fidelity_at(&self, i: usize) -> Result<W> {
        Ok(self.weight(&fidelity_label(self.n(), i)?))
    }

    /// Nonzero entries in label order.
    pub fn iter(&self) -> impl Iterator<Item = (&GhzLabel, &W)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> W {
        self.weights
            .values()
            .fold(W::zero(), |acc, w| acc + w.clone())
    }

    /// Target-label fidelity, relative to the total weight.
    pub fn fidelity(&self) -> W {
        let total = self.total();
        if total.is_zero() {
            return W::zero();
        }
        self.weight(&GhzLabel::target(self.n()).expect("n >= 2")) / total
    }

    /// Rescales to total weight one.
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total();
        if total.is_zero() {
            return Err(Error::EmptyEnsemble);
        }
        Ok(GhzDiagonalEnsemble {
            parties: self.parties.clone(),
            weights: self
                .weights
                .iter()
                .map(|(l, w)| (*l, w.clone() / total.clone()))
                .collect(),
            normalized: true,
        })
    }

    pub fn scale(&self, factor: &W) -> Result<Self> {
        Self::unnormalized(
            self.parties.clone(),
            self.weights
                .iter()
                .map(|(l, w)| (*l, w.clone() * factor.clone())),
        )
    }

    /// Adds another ensemble on the same parties; the result is unnormalized.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.parties != other.parties {
            return Err(Error::Junction(format!(
                "cannot add ensembles over {} and {}",
                party_string(&self.parties),
                party_string(&other.parties)
            )));
        }
        Self::unnormalized(
            self.parties.clone(),
            self.iter()
                .chain(other.iter())
                .map(|(l, w)| (*l, w.clone())),
        )
    }

    /// Empty unnormalized ensemble on the given parties.
    pub fn zero(parties: Vec<Party>) -> Result<Self> {
        Self::unnormalized(parties, [])
    }

    pub fn require_normalized(&self) -> Result<()> {
        let total = self.total();
        if !self.normalized || !total.approx_eq(&W::one()) {
            return Err(Error::NotNormalized {
                total: total.to_string(),
            });
        }
        Ok(())
    }

    /// Same weights with parties renamed position by position.
    pub fn with_parties(&self, parties: Vec<Party>) -> Result<Self> {
        if parties.len() != self.n() {
            return Err(Error::PhotonCount {
                count: parties.len(),
                reason: "need one party per photon",
            });
        }
        let mut e = Self::unnormalized(parties, self.weights.clone())?;
        e.normalized = self.normalized;
        Ok(e)
    }

    /// Exact-equality check for rationals, tolerance check for floats.
    pub fn approx_eq(&self, other: &Self) -> bool {
        if self.parties != other.parties {
            return false;
        }
        let labels: std::collections::BTreeSet<_> =
            self.weights.keys().chain(other.weights.keys()).collect();
        labels
            .into_iter()
            .all(|l| self.weight(l).approx_eq(&other.weight(l)))
    }

    /// Converts weights to another field through `f64` (floats) or exactly
    /// (same type).
    pub fn map_weights<V: Weight>(&self, f: impl Fn(&W) -> V) -> GhzDiagonalEnsemble<V> {
        GhzDiagonalEnsemble {
            parties: self.parties.clone(),
            weights: self
                .weights
                .iter()
                .map(|(l, w)| (*l, f(w)))
                .filter(|(_, w)| !w.is_zero())
                .collect(),
            normalized: self.normalized,
        }
    }
}

impl<W: Weight> fmt::Display for GhzDiagonalEnsemble<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", party_string(&self.parties))?;
        for (i, (l, w)) in self.weights.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}: {w}")?;
        }
        write!(f, "}}")
    }
}

fn check_unit<W: Weight>(x: &W, what: &'static str) -> Result<()> {
    if *x < W::zero() || *x > W::one() {
        return Err(Error::OutOfRange {
            what,
            value: x.to_string(),
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Two-photon ensemble over a party pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BellDiagonalEnsemble<W> {
    pub pair: (Party, Party),
    weights: BTreeMap<BellLabel, W>,
}

impl<W: Weight> BellDiagonalEnsemble<W> {
    pub fn new(
        pair: (Party, Party),
        weights: impl IntoIterator<Item = (BellLabel, W)>,
    ) -> Result<Self> {
        let ghz = GhzDiagonalEnsemble::unnormalized(
            vec![pair.0, pair.1],
            weights.into_iter().map(|(b, w)| (b.to_ghz(), w)),
        )?;
        Ok(Self::from_ghz(&ghz).expect("two-party ensemble"))
    }

    /// Werner-like pair ensemble `F φ⁺ + (1 − F) ψ⁺`.
    pub fn phi_psi(pair: (Party, Party), phi: W) -> Result<Self> {
        check_unit(&phi, "pair fidelity")?;
        let psi = W::one() - phi.clone();
        Self::new(
            pair,
            [(BellLabel::PHI_PLUS, phi), (BellLabel::PSI_PLUS, psi)],
        )
    }

    pub fn from_ghz(e: &GhzDiagonalEnsemble<W>) -> Option<Self> {
        if e.n() != 2 {
            return None;
        }
        Some(BellDiagonalEnsemble {
            pair: (e.parties()[0], e.parties()[1]),
            weights: e
                .iter()
                .map(|(l, w)| (BellLabel::from_ghz(*l).expect("two photons"), w.clone()))
                .collect(),
        })
    }

    /// The same ensemble as a two-photon GHZ-diagonal one; normalized when
    /// the weights sum to one.
    pub fn to_ghz(&self) -> GhzDiagonalEnsemble<W> {
        let e = GhzDiagonalEnsemble::unnormalized(
            vec![self.pair.0, self.pair.1],
            self.weights.iter().map(|(b, w)| (b.to_ghz(), w.clone())),
        )
        .expect("valid pair ensemble");
        if e.total().approx_eq(&W::one()) {
            e.normalize().expect("nonzero total")
        } else {
            e
        }
    }

    pub fn weight(&self, label: BellLabel) -> W {
        self.weights.get(&label).cloned().unwrap_or_else(W::zero)
    }

    pub fn total(&self) -> W {
        self.weights
            .values()
            .fold(W::zero(), |acc, w| acc + w.clone())
    }

    /// `φ⁺` weight relative to the total.
    pub fn fidelity(&self) -> W {
        let t = self.total();
        if t.is_zero() {
            W::zero()
        } else {
            self.weight(BellLabel::PHI_PLUS) / t
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BellLabel, &W)> {
        self.weights.iter()
    }
}

/// Populations of the two phase-flip classes, `Φ₀⁺` (p0) and `Φ₀⁻` (p1).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseEnsemble<W> {
    pub p0: W,
    pub p1: W,
}

impl<W: Weight> PhaseEnsemble<W> {
    pub fn new(p0: W) -> Result<Self> {
        check_unit(&p0, "p0")?;
        let p1 = W::one() - p0.clone();
        Ok(PhaseEnsemble { p0, p1 })
    }

    pub fn from_pair(p0: W, p1: W) -> Result<Self> {
        check_unit(&p0, "p0")?;
        check_unit(&p1, "p1")?;
        let total = p0.clone() + p1.clone();
        if !total.approx_eq(&W::one()) {
            return Err(Error::NotNormalized {
                total: total.to_string(),
            });
        }
        Ok(PhaseEnsemble { p0, p1 })
    }

    /// As an `n`-photon GHZ-diagonal ensemble over `Φ₀±`.
    pub fn to_ghz(&self, n: usize) -> Result<GhzDiagonalEnsemble<W>> {
        let t = GhzLabel::target(n)?;
        GhzDiagonalEnsemble::normalized(
            Party::first(n),
            [
                (t, self.p0.clone()),
                (t.with_sign(Sign::Minus), self.p1.clone()),
            ],
        )
    }
}

/// Symmetric bit-flip noise: `F₁ = F₂ = F₃ = (1 − F₀)/3` on three photons.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricNoiseParams<W> {
    f0: W,
}

impl<W: Weight> SymmetricNoiseParams<W> {
    pub fn new(f0: W) -> Result<Self> {
        check_unit(&f0, "F0")?;
        Ok(SymmetricNoiseParams { f0 })
    }

    pub fn f0(&self) -> &W {
        &self.f0
    }

    pub fn f_other(&self) -> W {
        (W::one() - self.f0.clone()) / W::from_u8(3).expect("3")
    }

    pub fn ensemble(&self) -> GhzDiagonalEnsemble<W> {
        GhzDiagonalEnsemble::symmetric(3, &self.f0).expect("F0 checked")
    }
}

/// Independent per-photon bit flips (rate `p_bitflip`) and phase flips
/// (rate `q_phaseflip`) applied to `Φ₀⁺`.
pub fn channel_to_ensemble<W: Weight>(
    n: usize,
    p_bitflip: &W,
    q_phaseflip: &W,
) -> Result<(GhzDiagonalEnsemble<W>, PhaseEnsemble<W>)> {
    let half = W::from_ratio(1, 2);
    for (x, what) in [
        (p_bitflip, "bit-flip rate"),
        (q_phaseflip, "phase-flip rate"),
    ] {
        if *x < W::zero() || *x > half {
            return Err(Error::OutOfRange {
                what,
                value: x.to_string(),
                range: "[0, 1/2]",
            });
        }
    }
    if !(2..=20).contains(&n) {
        return Err(Error::PhotonCount {
            count: n,
            reason: "channel model supports 2..=20 photons",
        });
    }
    let p = p_bitflip.clone();
    let keep = W::one() - p.clone();
    let mut weights = Vec::with_capacity(1 << n);
    for flips in 0..1u64 << n {
        let k = flips.count_ones();
        let w = p.powi(k) * keep.powi(n as u32 - k);
        weights.push((GhzLabel::canonical(n, flips, Sign::Plus)?, w));
    }
    let bits = GhzDiagonalEnsemble::normalized(Party::first(n), weights)?;
    let two = W::from_u8(2).expect("2");
    let odd = (W::one() - (W::one() - two.clone() * q_phaseflip.clone()).powi(n as u32)) / two;
    let phase = PhaseEnsemble::from_pair(W::one() - odd.clone(), odd)?;
    Ok((bits, phase))
}

impl GhzDiagonalEnsemble<Rational> {
    /// Plain-text form: a header line `n=<count> normalized=<bool>` (plus
    /// `parties=<letters>` when the parties are not A, B, C, ...), then one
    /// `label=<mask>:<sign> weight=<p/q>` line per nonzero entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} normalized={}", self.n(), self.normalized);
        if self.parties != Party::first(self.n()) {
            write!(out, " parties={}", party_string(&self.parties)).unwrap();
        }
        out.push('\n');
        for (l, w) in &self.weights {
            writeln!(out, "label={l} weight={w}").unwrap();
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, bool, Vec<Party>)> = None;
        let mut weights = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: BTreeMap<&str, &str> = line
                .split_whitespace()
                .map(|kv| {
                    kv.split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, got {kv:?}")))
                })
                .collect::<Result<_>>()?;
            match &header {
                None => {
                    let n: usize = fields
                        .get("n")
                        .ok_or_else(|| err("header must start with n=<count>".into()))?
                        .parse()
                        .map_err(|_| err("n must be an integer".into()))?;
                    let normalized = match fields.get("normalized").copied() {
                        Some("true") | None => true,
                        Some("false") => false,
                        Some(other) => {
                            return Err(err(format!(
                                "normalized must be true or false, got {other:?}"
                            )))
                        }
                    };
                    let parties = match fields.get("parties") {
                        Some(p) => {
                            parse_parties(p).ok_or_else(|| err(format!("bad party list {p:?}")))?
                        }
                        None => Party::first(n),
                    };
                    if parties.len() != n {
                        return Err(err(format!("{} parties listed for n={n}", parties.len())));
                    }
                    header = Some((n, normalized, parties));
                }
                Some((n, _, _)) => {
                    let label: GhzLabel = fields
                        .get("label")
                        .ok_or_else(|| err("missing label=".into()))?
                        .parse()
                        .map_err(|e: Error| err(e.to_string()))?;
                    if label.n() != *n {
                        return Err(err(format!(
                            "label {label} has {} photons, expected {n}",
                            label.n()
                        )));
                    }
                    let w_text = fields
                        .get("weight")
                        .ok_or_else(|| err("missing weight=".into()))?;
                    let w = parse_rational(w_text)
                        .ok_or_else(|| err(format!("bad weight {w_text:?}")))?;
                    weights.push((label, w));
                }
            }
        }
        let (_, normalized, parties) = header.ok_or(Error::Parse {
            line: 0,
            message: "empty ensemble file".into(),
        })?;
        if normalized {
            Self::normalized(parties, weights)
        } else {
            Self::unnormalized(parties, weights)
        }
    }
}
