//! Branch-by-branch execution of the purification protocols on products of
//! pure GHZ states.
//!
//! Each protocol is written once as a transformation of a frontier of
//! [`Path`]s. A [`Brancher`] decides which measurement branches to follow:
//! [`Exhaustive`] keeps all of them (the enumeration engine) and [`Sampler`]
//! draws one (the Monte Carlo engine).

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::analytics::{recycling_subset, LinkPlan, PairTables};
use crate::ensemble::BellDiagonalEnsemble;
use crate::ensemble::{GhzDiagonalEnsemble, PhaseEnsemble, SymmetricNoiseParams};
use crate::error::{Error, Result};
use crate::qnd::{parity_project, pattern_string, ParityOutcome};
use crate::register::{
    party_string, Basis, Branch, GhzLabel, Party, Pauli, PhotonRegister, PhotonTag, PureState,
    Sign, SingleOutcome,
};
use crate::scalar::{Amplitude, Weight};

/// Largest photon count per copy for the bit-flip round.
pub const BITFLIP_MAX_N: usize = 6;
/// Largest photon count per copy for the phase-flip round.
pub const PHASEFLIP_MAX_N: usize = 5;
/// Largest photon count per copy for recycling.
pub const RECYCLING_MAX_N: usize = 6;
/// Largest party count of either linked subsystem.
pub const LINK_MAX_N: usize = 6;

/// Chooses which branches of a measurement to follow.
pub trait Brancher<A: Amplitude> {
    fn choose<O>(&mut self, branches: Vec<Branch<O, A>>) -> Vec<Branch<O, A>>;
}

/// Follows every branch.
#[derive(Clone, Copy, Debug, Default)]
pub struct Exhaustive;

impl<A: Amplitude> Brancher<A> for Exhaustive {
    fn choose<O>(&mut self, branches: Vec<Branch<O, A>>) -> Vec<Branch<O, A>> {
        branches
    }
}

/// Follows one branch drawn with its probability.
pub struct Sampler<'r, R> {
    rng: &'r mut R,
}

impl<'r, R: Rng> Sampler<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Sampler { rng }
    }
}

impl<A: Amplitude, R: Rng> Brancher<A> for Sampler<'_, R> {
    fn choose<O>(&mut self, mut branches: Vec<Branch<O, A>>) -> Vec<Branch<O, A>> {
        if branches.len() <= 1 {
            return branches;
        }
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let last = branches.len() - 1;
        for i in 0..last {
            acc += branches[i].1.to_f64();
            if u < acc {
                return vec![branches.swap_remove(i)];
            }
        }
        vec![branches.swap_remove(last)]
    }
}

/// Order in which destructive single-photon measurements are made.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MeasurementOrder {
    /// Parties alphabetically, copy 2 before copy 1.
    #[default]
    Canonical,
    Reversed,
}

impl MeasurementOrder {
    fn arrange(self, mut tags: Vec<PhotonTag>) -> Vec<PhotonTag> {
        if self == MeasurementOrder::Reversed {
            tags.reverse();
        }
        tags
    }
}

/// Where a branch ended up.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fate {
    Kept {
        parties: Vec<Party>,
        label: GhzLabel,
    },
    Discarded,
    /// Kept by the protocol rules but not a GHZ basis state.
    Unentangled,
}

impl fmt::Display for Fate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fate::Kept { parties, label } => write!(f, "{}:{label}", party_string(parties)),
            Fate::Discarded => write!(f, "discarded"),
            Fate::Unentangled => write!(f, "unentangled"),
        }
    }
}

/// One complete measurement history.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchRecord<W> {
    /// Labels of the two input copies.
    pub inputs: (GhzLabel, GhzLabel),
    pub pattern: Vec<ParityOutcome>,
    pub outcomes: Vec<(PhotonTag, SingleOutcome)>,
    pub corrections: Vec<(PhotonTag, Pauli)>,
    /// Joint probability of drawing the inputs and following this branch.
    pub probability: W,
    pub fate: Fate,
}

impl<W: Weight> fmt::Display for BranchRecord<W> {
    /// `input=000:+|010:+ pattern=OEO outcomes=B2:+,B1:-,A2:+,C2:- p=1/8 corrections=A1:Z final=AC:00:+`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |items: Vec<String>| {
            if items.is_empty() {
                "-".to_string()
            } else {
                items.join(",")
            }
        };
        let outcomes = join(
            self.outcomes
                .iter()
                .map(|(t, o)| format!("{t}:{o}"))
                .collect(),
        );
        let corrections = join(
            self.corrections
                .iter()
                .map(|(t, p)| format!("{t}:{p}"))
                .collect(),
        );
        write!(
            f,
            "input={}|{} pattern={} outcomes={} p={} corrections={} final={}",
            self.inputs.0,
            self.inputs.1,
            pattern_string(&self.pattern),
            outcomes,
            self.probability,
            corrections,
            self.fate
        )
    }
}

/// Partial measurement history carried through a protocol.
#[derive(Clone, Debug)]
pub struct Path<A: Amplitude> {
    pub state: PureState<A>,
    pub probability: A::Weight,
    pub pattern: Vec<ParityOutcome>,
    pub outcomes: Vec<(PhotonTag, SingleOutcome)>,
    pub corrections: Vec<(PhotonTag, Pauli)>,
}

impl<A: Amplitude> Path<A> {
    pub fn new(state: PureState<A>, probability: A::Weight) -> Self {
        Path {
            state,
            probability,
            pattern: Vec::new(),
            outcomes: Vec::new(),
            corrections: Vec::new(),
        }
    }

    fn fork(&self, state: PureState<A>, p: A::Weight) -> Self {
        Path {
            state,
            probability: self.probability.clone() * p,
            pattern: self.pattern.clone(),
            outcomes: self.outcomes.clone(),
            corrections: self.corrections.clone(),
        }
    }

    fn parity(self, a: PhotonTag, b: PhotonTag, br: &mut impl Brancher<A>) -> Result<Vec<Self>> {
        let branches = br.choose(parity_project(&self.state, a, b)?);
        Ok(branches
            .into_iter()
            .map(|(o, p, s)| {
                let mut next = self.fork(s, p);
                next.pattern.push(o);
                next
            })
            .collect())
    }

    fn measure(self, tag: PhotonTag, basis: Basis, br: &mut impl Brancher<A>) -> Result<Vec<Self>> {
        let branches = br.choose(self.state.measure(tag, basis)?);
        Ok(branches
            .into_iter()
            .map(|(o, p, s)| {
                let mut next = self.fork(s, p);
                next.outcomes.push((tag, o));
                next
            })
            .collect())
    }

    fn correct(&mut self, tag: PhotonTag, which: Pauli) -> Result<()> {
        self.state = self.state.apply_pauli(tag, which)?;
        self.corrections.push((tag, which));
        Ok(())
    }

    /// Number of `−` (or V) results among the single-photon measurements.
    fn odd_outcomes(&self) -> usize {
        self.outcomes.iter().filter(|(_, o)| o.is_odd()).count()
    }

    fn finish(self, inputs: (GhzLabel, GhzLabel), fate: Fate) -> BranchRecord<A::Weight> {
        BranchRecord {
            inputs,
            pattern: self.pattern,
            outcomes: self.outcomes,
            corrections: self.corrections,
            probability: self.probability,
            fate,
        }
    }

    /// Classifies the remaining photons, given in the output party order.
    fn classify(&self, order: &[PhotonTag]) -> Result<Fate> {
        let state = self.state.reorder(order)?;
        Ok(match state.classify_ghz() {
            Some(label) => Fate::Kept {
                parties: order.iter().map(|t| t.party).collect(),
                label,
            },
            None => Fate::Unentangled,
        })
    }
}

fn measure_all<A: Amplitude>(
    paths: Vec<Path<A>>,
    tags: &[PhotonTag],
    basis: Basis,
    br: &mut impl Brancher<A>,
) -> Result<Vec<Path<A>>> {
    let mut frontier = paths;
    for &t in tags {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for p in frontier {
            next.extend(p.measure(t, basis, br)?);
        }
        frontier = next;
    }
    Ok(frontier)
}

fn parity_all<A: Amplitude>(
    paths: Vec<Path<A>>,
    pairs: &[(PhotonTag, PhotonTag)],
    br: &mut impl Brancher<A>,
) -> Result<Vec<Path<A>>> {
    let mut frontier = paths;
    for &(a, b) in pairs {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for p in frontier {
            next.extend(p.parity(a, b, br)?);
        }
        frontier = next;
    }
    Ok(frontier)
}

fn copy_tags(parties: &[Party], copy: u8) -> Vec<PhotonTag> {
    parties.iter().map(|&p| PhotonTag::new(p, copy)).collect()
}

fn two_copies<A: Amplitude>(
    a_parties: &[Party],
    la: GhzLabel,
    b_parties: &[Party],
    lb: GhzLabel,
) -> Result<PureState<A>> {
    let a = PureState::ghz(PhotonRegister::copy_of(a_parties, 1)?, la)?;
    let b = PureState::ghz(PhotonRegister::copy_of(b_parties, 2)?, lb)?;
    a.tensor(&b)
}

fn check_budget(n: usize, max: usize) -> Result<()> {
    if n > max {
        return Err(Error::Budget { n, max });
    }
    Ok(())
}

/// Engine knobs that tests vary; the defaults are the protocol as specified.
#[derive(Clone, Debug, Default)]
pub struct EngineOptions {
    pub order: MeasurementOrder,
    /// Phase-flip correction table; `None` means [`PhaseFlipCorrections::standard`].
    pub phase_corrections: Option<PhaseFlipCorrections>,
}

/// What to do with mixed parity patterns in a bit-flip round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossHandling {
    Discard,
    Recycle,
}

/// One bit-flip round on `Φ(l1) ⊗ Φ(l2)` over `parties`, starting from
/// path probability `prior`.
///
/// Identity patterns (all Even or all Odd) go through the conventional
/// round: σx on every copy-2 photon when all parities are Odd, X
/// measurement of copy 2, and σz on the first copy-1 photon when an odd
/// number of `−` results occurred. Mixed patterns are discarded or
/// recycled: the parties of [`recycling_subset`] keep their copy-1 photons,
/// every other photon is X-measured, and the same σz rule fixes the sign.
pub fn bitflip_paths<A: Amplitude>(
    parties: &[Party],
    l1: GhzLabel,
    l2: GhzLabel,
    prior: A::Weight,
    cross: CrossHandling,
    opts: &EngineOptions,
    br: &mut impl Brancher<A>,
) -> Result<Vec<BranchRecord<A::Weight>>> {
    let state = two_copies::<A>(parties, l1, parties, l2)?;
    let pairs: Vec<_> = parties
        .iter()
        .map(|&p| (PhotonTag::new(p, 1), PhotonTag::new(p, 2)))
        .collect();
    let after_parity = parity_all(vec![Path::new(state, prior)], &pairs, br)?;
    let mut records = Vec::new();
    for path in after_parity {
        let odd = path.pattern.iter().filter(|p| p.is_odd()).count();
        if odd == 0 || odd == parties.len() {
            let mut path = path;
            if odd > 0 {
                for t in copy_tags(parties, 2) {
                    path.correct(t, Pauli::X)?;
                }
            }
            let order = opts.order.arrange(copy_tags(parties, 2));
            for mut done in measure_all(vec![path], &order, Basis::X, br)? {
                if done.odd_outcomes() % 2 == 1 {
                    done.correct(PhotonTag::new(parties[0], 1), Pauli::Z)?;
                }
                let fate = done.classify(&copy_tags(parties, 1))?;
                records.push(done.finish((l1, l2), fate));
            }
        } else if cross == CrossHandling::Discard {
            records.push(path.finish((l1, l2), Fate::Discarded));
        } else {
            let keep = recycling_subset(&path.pattern)?;
            let kept: Vec<Party> = keep.iter().map(|&i| parties[i]).collect();
            let mut order = Vec::new();
            for &p in parties {
                order.push(PhotonTag::new(p, 2));
                if !kept.contains(&p) {
                    order.push(PhotonTag::new(p, 1));
                }
            }
            let order = opts.order.arrange(order);
            for mut done in measure_all(vec![path], &order, Basis::X, br)? {
                if done.odd_outcomes() % 2 == 1 {
                    done.correct(PhotonTag::new(kept[0], 1), Pauli::Z)?;
                }
                let fate = done.classify(&copy_tags(&kept, 1))?;
                records.push(done.finish((l1, l2), fate));
            }
        }
    }
    Ok(records)
}

/// Link of `Φ(la)` on `plan.a_parties` (copy 1) with `Φ(lb)` on
/// `plan.b_parties` (copy 2).
///
/// Parity checks run at every junction. Odd parity at the first junction
/// is fixed by σx on all of `b`'s photons; a later junction whose parity
/// differs from the first discards the pair. `b`'s junction photons are
/// X-measured and σz on `a`'s first junction photon fixes an odd number of
/// `−` results.
pub fn link_paths<A: Amplitude>(
    plan: &LinkPlan,
    la: GhzLabel,
    lb: GhzLabel,
    prior: A::Weight,
    opts: &EngineOptions,
    br: &mut impl Brancher<A>,
) -> Result<Vec<BranchRecord<A::Weight>>> {
    let state = two_copies::<A>(&plan.a_parties, la, &plan.b_parties, lb)?;
    let pairs: Vec<_> = plan
        .junctions
        .iter()
        .map(|&j| (PhotonTag::new(j, 1), PhotonTag::new(j, 2)))
        .collect();
    let j1 = plan.junctions[0];
    let output: Vec<PhotonTag> = plan
        .output
        .iter()
        .map(|&p| PhotonTag::new(p, if plan.a_parties.contains(&p) { 1 } else { 2 }))
        .collect();
    let mut records = Vec::new();
    for mut path in parity_all(vec![Path::new(state, prior)], &pairs, br)? {
        let frame = path.pattern[0];
        if path.pattern.iter().any(|&p| p != frame) {
            records.push(path.finish((la, lb), Fate::Discarded));
            continue;
        }
        if frame.is_odd() {
            for t in copy_tags(&plan.b_parties, 2) {
                path.correct(t, Pauli::X)?;
            }
        }
        let order = opts.order.arrange(copy_tags(&plan.junctions, 2));
        for mut done in measure_all(vec![path], &order, Basis::X, br)? {
            if done.odd_outcomes() % 2 == 1 {
                done.correct(PhotonTag::new(j1, 1), Pauli::Z)?;
            }
            let fate = done.classify(&output)?;
            records.push(done.finish((la, lb), fate));
        }
    }
    Ok(records)
}

/// Local corrections of the phase-flip round.
///
/// `sigma_x` maps a parity pattern (e.g. `"OEO"`) to the photons flipped
/// before copy 2 is measured; `sigma_z` enables the sign fix after the X
/// measurements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseFlipCorrections {
    pub sigma_x: BTreeMap<String, Vec<PhotonTag>>,
    pub sigma_z: bool,
}

impl PhaseFlipCorrections {
    /// σx on the copy-2 photon of every Odd party, for every kept pattern.
    pub fn standard(n: usize) -> Self {
        let parties = Party::first(n);
        let mut sigma_x = BTreeMap::new();
        for bits in 0..1u64 << n {
            if bits.count_ones() % 2 == 1 {
                continue;
            }
            let pattern: Vec<ParityOutcome> = (0..n)
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        ParityOutcome::Odd
                    } else {
                        ParityOutcome::Even
                    }
                })
                .collect();
            let flips = (0..n)
                .filter(|&i| bits >> i & 1 == 1)
                .map(|i| PhotonTag::new(parties[i], 2))
                .collect();
            sigma_x.insert(pattern_string(&pattern), flips);
        }
        PhaseFlipCorrections {
            sigma_x,
            sigma_z: true,
        }
    }

    /// The three-photon table exactly as printed in the original
    /// presentation, where the Alice entries name her copy-1 photon.
    pub fn literal_table() -> Self {
        let t = |p: u8, c: u8| PhotonTag::new(Party(p), c);
        let sigma_x = BTreeMap::from([
            ("EEE".to_string(), vec![]),
            ("EOO".to_string(), vec![t(1, 2), t(2, 2)]),
            ("OEO".to_string(), vec![t(0, 1), t(2, 2)]),
            ("OOE".to_string(), vec![t(0, 1), t(1, 2)]),
        ]);
        PhaseFlipCorrections {
            sigma_x,
            sigma_z: true,
        }
    }
}

/// One phase-flip round on `Ψ(s1) ⊗ Ψ(s2)` with `Ψ± = H^{⊗n} Φ₀±`.
///
/// Patterns with an odd number of Odd parities are discarded. Kept
/// branches get the σx table, an X measurement of copy 2, σz on the
/// copy-1 photons of whichever of the `−` set and its complement is
/// smaller (the `−` set on ties), and a final Hadamard on every copy-1
/// photon.
pub fn phaseflip_paths<A: Amplitude>(
    n: usize,
    s1: Sign,
    s2: Sign,
    prior: A::Weight,
    corrections: &PhaseFlipCorrections,
    opts: &EngineOptions,
    br: &mut impl Brancher<A>,
) -> Result<Vec<BranchRecord<A::Weight>>> {
    let parties = Party::first(n);
    let target = GhzLabel::target(n)?;
    let (l1, l2) = (target.with_sign(s1), target.with_sign(s2));
    let mut state = two_copies::<A>(&parties, l1, &parties, l2)?;
    for &p in &parties {
        state = state.hadamard(PhotonTag::new(p, 1))?;
        state = state.hadamard(PhotonTag::new(p, 2))?;
    }
    let pairs: Vec<_> = parties
        .iter()
        .map(|&p| (PhotonTag::new(p, 1), PhotonTag::new(p, 2)))
        .collect();
    let mut records = Vec::new();
    for mut path in parity_all(vec![Path::new(state, prior)], &pairs, br)? {
        let odd = path.pattern.iter().filter(|p| p.is_odd()).count();
        if odd % 2 == 1 {
            records.push(path.finish((l1, l2), Fate::Discarded));
            continue;
        }
        let key = pattern_string(&path.pattern);
        for &t in corrections
            .sigma_x
            .get(&key)
            .map(Vec::as_slice)
            .unwrap_or(&[])
        {
            path.correct(t, Pauli::X)?;
        }
        let order = opts.order.arrange(copy_tags(&parties, 2));
        for mut done in measure_all(vec![path], &order, Basis::X, br)? {
            if corrections.sigma_z {
                let minus: Vec<Party> = done
                    .outcomes
                    .iter()
                    .filter(|(_, o)| o.is_odd())
                    .map(|(t, _)| t.party)
                    .collect();
                let plus: Vec<Party> = parties
                    .iter()
                    .copied()
                    .filter(|p| !minus.contains(p))
                    .collect();
                let mut flip = if plus.len() < minus.len() {
                    plus
                } else {
                    minus
                };
                flip.sort();
                for p in flip {
                    done.correct(PhotonTag::new(p, 1), Pauli::Z)?;
                }
            }
            for &p in &parties {
                done.state = done.state.hadamard(PhotonTag::new(p, 1))?;
            }
            let fate = done.classify(&copy_tags(&parties, 1))?;
            records.push(done.finish((l1, l2), fate));
        }
    }
    Ok(records)
}

/// Outcome of one protocol run under the enumeration engine.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolReport<W> {
    /// Probability that a pair of inputs yields a kept output.
    pub kept: W,
    pub discarded: W,
    /// Normalized distribution of kept outputs.
    pub output: GhzDiagonalEnsemble<W>,
    pub branches: Vec<BranchRecord<W>>,
}

impl<W: Weight> ProtocolReport<W> {
    fn from_records(parties: Vec<Party>, branches: Vec<BranchRecord<W>>) -> Result<Self> {
        let mut kept = W::zero();
        let mut discarded = W::zero();
        let mut weights = Vec::new();
        for b in &branches {
            match &b.fate {
                Fate::Kept { parties: ps, label } => {
                    if *ps != parties {
                        return Err(Error::Junction(format!(
                            "branch kept {} where {} was expected",
                            party_string(ps),
                            party_string(&parties)
                        )));
                    }
                    kept = kept + b.probability.clone();
                    weights.push((*label, b.probability.clone()));
                }
                Fate::Discarded => discarded = discarded + b.probability.clone(),
                Fate::Unentangled => kept = kept + b.probability.clone(),
            }
        }
        let raw = GhzDiagonalEnsemble::unnormalized(parties, weights)?;
        let output = if raw.is_empty() {
            raw
        } else {
            raw.normalize()?
        };
        Ok(ProtocolReport {
            kept,
            discarded,
            output,
            branches,
        })
    }

    /// Sum of all branch probabilities (one for a complete run).
    pub fn total_probability(&self) -> W {
        self.branches
            .iter()
            .fold(W::zero(), |acc, b| acc + b.probability.clone())
    }

    /// True when no kept branch failed to classify.
    pub fn classification_total(&self) -> bool {
        self.branches.iter().all(|b| b.fate != Fate::Unentangled)
    }
}

/// Weighted products `(l1, l2, w1·w2)` of an ensemble with itself.
fn products<W: Weight>(e: &GhzDiagonalEnsemble<W>) -> Vec<(GhzLabel, GhzLabel, W)> {
    let mut out = Vec::new();
    for (l1, w1) in e.iter() {
        for (l2, w2) in e.iter() {
            out.push((*l1, *l2, w1.clone() * w2.clone()));
        }
    }
    out
}

fn enumerate<W, F>(jobs: Vec<(GhzLabel, GhzLabel, W)>, run: F) -> Result<Vec<BranchRecord<W>>>
where
    W: Weight,
    F: Fn(GhzLabel, GhzLabel, W) -> Result<Vec<BranchRecord<W>>> + Sync,
{
    let chunks: Vec<Result<Vec<BranchRecord<W>>>> = jobs
        .into_par_iter()
        .map(|(l1, l2, w)| run(l1, l2, w))
        .collect();
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Conventional bit-flip round, every branch of every input product.
pub fn run_conventional_bitflip<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
) -> Result<ProtocolReport<W>> {
    run_conventional_bitflip_with(e, &EngineOptions::default())
}

pub fn run_conventional_bitflip_with<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
    opts: &EngineOptions,
) -> Result<ProtocolReport<W>> {
    e.require_normalized()?;
    check_budget(e.n(), BITFLIP_MAX_N)?;
    let parties = e.parties().to_vec();
    let records = enumerate(products(e), |l1, l2, w| {
        bitflip_paths::<W::Amp>(
            &parties,
            l1,
            l2,
            w,
            CrossHandling::Discard,
            opts,
            &mut Exhaustive,
        )
    })?;
    ProtocolReport::from_records(parties, records)
}

/// A full bit-flip round with recycling of every cross-combination.
#[derive(Clone, Debug, PartialEq)]
pub struct RecyclingReport<W> {
    /// Conventional outputs from identity combinations (unnormalized; the
    /// total is the identity probability).
    pub identity: GhzDiagonalEnsemble<W>,
    /// Recycled outputs per exact parity pattern (unnormalized).
    pub by_pattern: BTreeMap<String, GhzDiagonalEnsemble<W>>,
    /// Recycled outputs merged by surviving party subset (unnormalized).
    pub by_subset: BTreeMap<Vec<Party>, GhzDiagonalEnsemble<W>>,
    pub branches: Vec<BranchRecord<W>>,
}

impl<W: Weight> RecyclingReport<W> {
    pub fn recycled_weight(&self) -> W {
        self.by_subset
            .values()
            .fold(W::zero(), |acc, e| acc + e.total())
    }

    pub fn classification_total(&self) -> bool {
        self.branches.iter().all(|b| b.fate != Fate::Unentangled)
    }

    pub fn total_probability(&self) -> W {
        self.branches
            .iter()
            .fold(W::zero(), |acc, b| acc + b.probability.clone())
    }

    /// Pair ensembles of a three-party run.
    pub fn pair_tables(&self) -> Result<PairTables<W>> {
        let parties = self.identity.parties();
        if parties.len() != 3 {
            return Err(Error::PhotonCount {
                count: parties.len(),
                reason: "pair tables need a three-party run",
            });
        }
        let pair = |a: usize, b: usize| -> Result<BellDiagonalEnsemble<W>> {
            let key = vec![parties[a], parties[b]];
            let g = match self.by_subset.get(&key) {
                Some(g) => g.clone(),
                None => GhzDiagonalEnsemble::zero(key)?,
            };
            Ok(BellDiagonalEnsemble::from_ghz(&g).expect("pair"))
        };
        Ok(PairTables {
            ab: pair(0, 1)?,
            ac: pair(0, 2)?,
            bc: pair(1, 2)?,
        })
    }
}

pub fn run_recycling<W: Weight>(e: &GhzDiagonalEnsemble<W>) -> Result<RecyclingReport<W>> {
    run_recycling_with(e, &EngineOptions::default())
}

pub fn run_recycling_with<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
    opts: &EngineOptions,
) -> Result<RecyclingReport<W>> {
    e.require_normalized()?;
    if e.n() < 3 {
        return Err(Error::PhotonCount {
            count: e.n(),
            reason: "recycling needs at least three parties",
        });
    }
    check_budget(e.n(), RECYCLING_MAX_N)?;
    let parties = e.parties().to_vec();
    let records = enumerate(products(e), |l1, l2, w| {
        bitflip_paths::<W::Amp>(
            &parties,
            l1,
            l2,
            w,
            CrossHandling::Recycle,
            opts,
            &mut Exhaustive,
        )
    })?;
    let mut identity = Vec::new();
    let mut by_pattern: BTreeMap<String, Vec<(GhzLabel, W)>> = BTreeMap::new();
    let mut subsets: BTreeMap<String, Vec<Party>> = BTreeMap::new();
    let mut by_subset: BTreeMap<Vec<Party>, Vec<(GhzLabel, W)>> = BTreeMap::new();
    for r in &records {
        let Fate::Kept { parties: ps, label } = &r.fate else {
            continue;
        };
        let entry = (*label, r.probability.clone());
        if *ps == parties {
            identity.push(entry);
        } else {
            let key = pattern_string(&r.pattern);
            subsets.insert(key.clone(), ps.clone());
            by_pattern.entry(key).or_default().push(entry.clone());
            by_subset.entry(ps.clone()).or_default().push(entry);
        }
    }
    Ok(RecyclingReport {
        identity: GhzDiagonalEnsemble::unnormalized(parties, identity)?,
        by_pattern: by_pattern
            .into_iter()
            .map(|(k, v)| {
                let ps = subsets[&k].clone();
                Ok((k, GhzDiagonalEnsemble::unnormalized(ps, v)?))
            })
            .collect::<Result<_>>()?,
        by_subset: by_subset
            .into_iter()
            .map(|(ps, v)| Ok((ps.clone(), GhzDiagonalEnsemble::unnormalized(ps, v)?)))
            .collect::<Result<_>>()?,
        branches: records,
    })
}

/// Entanglement link of two ensembles through the listed junction parties.
pub fn run_link<W: Weight>(
    a: &GhzDiagonalEnsemble<W>,
    b: &GhzDiagonalEnsemble<W>,
    junctions: &[Party],
) -> Result<ProtocolReport<W>> {
    run_link_with(a, b, junctions, &EngineOptions::default())
}

pub fn run_link_with<W: Weight>(
    a: &GhzDiagonalEnsemble<W>,
    b: &GhzDiagonalEnsemble<W>,
    junctions: &[Party],
    opts: &EngineOptions,
) -> Result<ProtocolReport<W>> {
    a.require_normalized()?;
    b.require_normalized()?;
    check_budget(a.n().max(b.n()), LINK_MAX_N)?;
    let plan = LinkPlan::new(a.parties(), b.parties(), junctions)?;
    let mut jobs = Vec::new();
    for (la, wa) in a.iter() {
        for (lb, wb) in b.iter() {
            jobs.push((*la, *lb, wa.clone() * wb.clone()));
        }
    }
    let records = enumerate(jobs, |la, lb, w| {
        link_paths::<W::Amp>(&plan, la, lb, w, opts, &mut Exhaustive)
    })?;
    ProtocolReport::from_records(plan.output.clone(), records)
}

/// Phase-flip round on an `n`-photon phase ensemble.
pub fn run_phaseflip<W: Weight>(p: &PhaseEnsemble<W>, n: usize) -> Result<ProtocolReport<W>> {
    run_phaseflip_with(p, n, &EngineOptions::default())
}

pub fn run_phaseflip_with<W: Weight>(
    p: &PhaseEnsemble<W>,
    n: usize,
    opts: &EngineOptions,
) -> Result<ProtocolReport<W>> {
    if n < 2 {
        return Err(Error::PhotonCount {
            count: n,
            reason: "GHZ states need at least two photons",
        });
    }
    check_budget(n, PHASEFLIP_MAX_N)?;
    let standard;
    let corrections = match &opts.phase_corrections {
        Some(c) => c,
        None => {
            standard = PhaseFlipCorrections::standard(n);
            &standard
        }
    };
    let target = GhzLabel::target(n)?;
    let mut jobs = Vec::new();
    for (s1, w1) in [(Sign::Plus, &p.p0), (Sign::Minus, &p.p1)] {
        for (s2, w2) in [(Sign::Plus, &p.p0), (Sign::Minus, &p.p1)] {
            let w = w1.clone() * w2.clone();
            if !w.is_zero() {
                jobs.push((target.with_sign(s1), target.with_sign(s2), w));
            }
        }
    }
    let records = enumerate(jobs, |l1, l2, w| {
        phaseflip_paths::<W::Amp>(
            n,
            l1.sign(),
            l2.sign(),
            w,
            corrections,
            opts,
            &mut Exhaustive,
        )
    })?;
    ProtocolReport::from_records(Party::first(n), records)
}

/// Curve quantities of the three-photon scheme rebuilt from enumeration
/// runs. Pair fidelities are `None` when nothing is recycled.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedCurve<W> {
    pub y_c: W,
    pub p_3to2: W,
    pub y_2to3: W,
    pub y_e: W,
    pub f_c: W,
    pub f_2: Option<W>,
    pub f_2to3: Option<W>,
    pub f_e: W,
}

/// Runs the conventional round, recycling, and the link of two recycled
/// pairs (AB and AC at A) on symmetric noise.
pub fn enumerate_curve<W: Weight>(params: &SymmetricNoiseParams<W>) -> Result<EnumeratedCurve<W>> {
    let e = params.ensemble();
    let conv = run_conventional_bitflip(&e)?;
    let rec = run_recycling(&e)?;
    let p_3to2 = rec.recycled_weight();
    let y_2to3 = p_3to2.clone() / W::from_u8(2).expect("2");
    let y_c = conv.kept.clone();
    let y_e = y_c.clone() + y_2to3.clone();
    let f_c = conv.output.fidelity();
    let (f_2, f_2to3) = if p_3to2.is_zero() {
        (None, None)
    } else {
        let target = GhzLabel::target(2)?;
        let good = rec
            .by_subset
            .values()
            .fold(W::zero(), |acc, sub| acc + sub.weight(&target));
        let tables = rec.pair_tables()?;
        let ab = tables.ab.to_ghz().normalize()?;
        let ac = tables.ac.to_ghz().normalize()?;
        let linked = run_link(&ab, &ac, &[Party(0)])?;
        (Some(good / p_3to2.clone()), Some(linked.output.fidelity()))
    };
    let linked_part = match &f_2to3 {
        Some(f) => f.clone() * y_2to3.clone(),
        None => W::zero(),
    };
    let f_e = (f_c.clone() * y_c.clone() + linked_part) / y_e.clone();
    Ok(EnumeratedCurve {
        y_c,
        p_3to2,
        y_2to3,
        y_e,
        f_c,
        f_2,
        f_2to3,
        f_e,
    })
}

/// Branch log of `Φ(l1) ⊗ Φ(l2)` drawn with probability `prior`, through a
/// full bit-flip round (with recycling from three photons up).
pub fn explain_product<W: Weight>(
    l1: GhzLabel,
    l2: GhzLabel,
    prior: W,
) -> Result<Vec<BranchRecord<W>>> {
    if l1.n() != l2.n() {
        return Err(Error::PhotonCount {
            count: l2.n(),
            reason: "both copies need the same photon count",
        });
    }
    check_budget(l1.n(), RECYCLING_MAX_N)?;
    let cross = if l1.n() >= 3 {
        CrossHandling::Recycle
    } else {
        CrossHandling::Discard
    };
    bitflip_paths::<W::Amp>(
        &Party::first(l1.n()),
        l1,
        l2,
        prior,
        cross,
        &EngineOptions::default(),
        &mut Exhaustive,
    )
}

/// Branch log of a cross-combination: `Φ(a) ⊗ Φ(b)` and `Φ(b) ⊗ Φ(a)`,
/// each with probability 1/2 (a single product when `a == b`).
pub fn explain_cross<W: Weight>(a: GhzLabel, b: GhzLabel) -> Result<Vec<BranchRecord<W>>> {
    if a == b {
        return explain_product(a, a, W::one());
    }
    let half = W::from_ratio(1, 2);
    let mut log = explain_product(a, b, half.clone())?;
    log.extend(explain_product(b, a, half)?);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{
        conventional_round, entanglement_link, phase_round, recycle_pair_tables, recycle_tables,
    };
    use crate::scalar::{ratio, Rational};

    fn r(n: i64, d: i64) -> Rational {
        ratio(n, d)
    }

    fn f3(v: [(i64, i64); 4]) -> GhzDiagonalEnsemble<Rational> {
        let f: Vec<_> = v.iter().map(|&(n, d)| r(n, d)).collect();
        GhzDiagonalEnsemble::from_fidelities(3, &f).unwrap()
    }

    #[test]
    fn conventional_matches_formula() {
        let e = f3([(7, 10), (1, 10), (1, 10), (1, 10)]);
        let rep = run_conventional_bitflip(&e).unwrap();
        let (expect, y) = conventional_round(&e).unwrap();
        assert_eq!(rep.kept, y);
        assert_eq!(rep.kept, r(52, 100));
        assert_eq!(rep.output, expect);
        assert_eq!(rep.total_probability(), r(1, 1));
        assert!(rep.classification_total());
    }

    #[test]
    fn conventional_pure_and_uniform() {
        let rep =
            run_conventional_bitflip(&GhzDiagonalEnsemble::<Rational>::pure(3).unwrap()).unwrap();
        assert_eq!(rep.kept, r(1, 1));
        assert!(rep
            .branches
            .iter()
            .all(|b| matches!(&b.fate, Fate::Kept { label, .. } if label.mask() == 0 && label.sign() == Sign::Plus)));

        let uniform = GhzDiagonalEnsemble::symmetric(4, &r(1, 8)).unwrap();
        let rep = run_conventional_bitflip(&uniform).unwrap();
        assert_eq!(rep.kept, r(1, 8));
        assert_eq!(rep.output, uniform);
    }

    #[test]
    fn budget_enforced() {
        let e = GhzDiagonalEnsemble::<Rational>::pure(7).unwrap();
        assert!(matches!(
            run_conventional_bitflip(&e),
            Err(Error::Budget { n: 7, max: 6 })
        ));
        let p = PhaseEnsemble::new(r(1, 2)).unwrap();
        assert!(matches!(run_phaseflip(&p, 6), Err(Error::Budget { .. })));
    }

    #[test]
    fn recycling_matches_tables() {
        let e = GhzDiagonalEnsemble::symmetric(3, &r(7, 10)).unwrap();
        let rep = run_recycling(&e).unwrap();
        let tables = rep.pair_tables().unwrap();
        assert_eq!(tables, recycle_pair_tables(&e).unwrap());
        assert_eq!(rep.recycled_weight(), r(48, 100));
        assert_eq!(tables.ab.fidelity(), r(875, 1000));
        assert!(rep.classification_total());
        assert_eq!(rep.total_probability(), r(1, 1));

        let only_ac = f3([(1, 2), (0, 1), (1, 2), (0, 1)]);
        let t = run_recycling(&only_ac).unwrap().pair_tables().unwrap();
        assert_eq!(t.ac.total(), r(1, 2));
        assert_eq!(t.ac.fidelity(), r(1, 1));
        assert_eq!(t.ab.total() + t.bc.total(), r(0, 1));
    }

    #[test]
    fn recycling_patterns_match_analytics() {
        let f: Vec<Rational> = (1..=8).map(|k| r(k, 36)).collect();
        let e = GhzDiagonalEnsemble::from_fidelities(4, &f).unwrap();
        let rep = run_recycling(&e).unwrap();
        let tables = recycle_tables(&e).unwrap();
        assert_eq!(rep.by_subset, tables.by_subset);
        assert_eq!(rep.identity.total(), tables.identity_weight);
        assert!(rep.classification_total());
    }

    #[test]
    fn link_matches_formula() {
        let ab = BellDiagonalEnsemble::phi_psi((Party(0), Party(1)), r(7, 8))
            .unwrap()
            .to_ghz();
        let ac = BellDiagonalEnsemble::phi_psi((Party(0), Party(2)), r(7, 8))
            .unwrap()
            .to_ghz();
        let rep = run_link(&ab, &ac, &[Party(0)]).unwrap();
        let (expect, y) = entanglement_link(&ab, &ac, &[Party(0)]).unwrap();
        assert_eq!(rep.kept, y);
        assert_eq!(rep.output, expect);
        assert_eq!(rep.output.fidelity(), r(49, 64));
        assert!(rep.classification_total());
    }

    #[test]
    fn phaseflip_matches_formula() {
        for n in [2, 3, 4] {
            let p = PhaseEnsemble::new(r(8, 10)).unwrap();
            let rep = run_phaseflip(&p, n).unwrap();
            let (expect, y) = phase_round(&p).unwrap();
            assert_eq!(rep.kept, y);
            assert_eq!(rep.output, expect.to_ghz(n).unwrap());
            assert!(rep.classification_total());
        }
    }

    #[test]
    fn reversed_order_same_aggregate() {
        let opts = EngineOptions {
            order: MeasurementOrder::Reversed,
            ..Default::default()
        };
        let e = f3([(4, 10), (3, 10), (2, 10), (1, 10)]);
        assert_eq!(
            run_recycling_with(&e, &opts).unwrap().by_subset,
            run_recycling(&e).unwrap().by_subset
        );
    }

    #[test]
    fn explain_cross_combination() {
        let l0 = GhzLabel::target(3).unwrap();
        let l2 = GhzLabel::single_flip(3, 2).unwrap();
        let log = explain_cross::<Rational>(l0, l2).unwrap();
        let total = log
            .iter()
            .fold(r(0, 1), |acc, b| acc + b.probability.clone());
        assert_eq!(total, r(1, 1));
        // The Ω₁ path: first copy Φ₀⁺, parities odd/even/odd.
        let omega1: Rational = log
            .iter()
            .filter(|b| b.inputs.0 == l0 && pattern_string(&b.pattern) == "OEO")
            .map(|b| b.probability.clone())
            .sum();
        assert_eq!(omega1, r(1, 4));
        assert!(log
            .iter()
            .filter(|b| b.inputs.0 == l0 && pattern_string(&b.pattern) == "OEO")
            .all(|b| b.fate.to_string() == "AC:00:+"));
        let line = log[0].to_string();
        assert!(line.starts_with("input=000:+|010:+ pattern="), "{line}");
    }

    #[test]
    fn float_engine_agrees() {
        let e = GhzDiagonalEnsemble::symmetric(3, &0.7f64).unwrap();
        let rep = run_recycling(&e).unwrap();
        let t = rep.pair_tables().unwrap();
        assert!((t.total() - 0.48).abs() < 1e-12);
        let f32rep =
            run_conventional_bitflip(&GhzDiagonalEnsemble::symmetric(3, &0.7f32).unwrap()).unwrap();
        assert!((f32rep.kept - 0.52).abs() < 1e-5);
    }
}
