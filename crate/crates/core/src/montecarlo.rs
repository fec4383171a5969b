//! Seeded Monte Carlo runs of the protocol pipelines.
//!
//! Trials are split into fixed chunks of [`CHUNK_TRIALS`]; chunk `c` draws
//! from ChaCha8 seeded with the run seed on stream `c`, so results do not
//! depend on how many worker threads process the chunks. All tallies are
//! integers and merge by addition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytics::{
    conventional_round, entanglement_link, phase_round, recycle_tables, yields_and_fidelities,
    LinkPlan,
};
use crate::engine::{
    bitflip_paths, enumerate_curve, link_paths, phaseflip_paths, run_conventional_bitflip,
    run_link, run_phaseflip, run_recycling, BranchRecord, CrossHandling, EngineOptions, Exhaustive,
    Fate, PhaseFlipCorrections, Sampler,
};
use crate::ensemble::{
    BellDiagonalEnsemble, GhzDiagonalEnsemble, PhaseEnsemble, SymmetricNoiseParams,
};
use crate::error::{Error, Result};
use crate::register::{party_string, GhzLabel, Party, Sign};
use crate::scalar::{QSqrt2, Rational, Weight};

/// Identifier of the random generator, recorded in every estimate.
pub const RNG_ALGORITHM: &str = "chacha8";
/// Trials per independent random stream.
pub const CHUNK_TRIALS: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PipelineKind {
    Conventional,
    Recycling,
    Link,
    PhaseFlip,
    FullMepp,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Conventional,
        PipelineKind::Recycling,
        PipelineKind::Link,
        PipelineKind::PhaseFlip,
        PipelineKind::FullMepp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Conventional => "conventional",
            PipelineKind::Recycling => "recycling",
            PipelineKind::Link => "link",
            PipelineKind::PhaseFlip => "phaseflip",
            PipelineKind::FullMepp => "full-mepp",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::MonteCarlo(format!("unknown pipeline {s:?}")))
    }
}

/// Input of a Monte Carlo run; exact so the reference values are exact.
#[derive(Clone, Debug, PartialEq)]
pub enum McInput {
    Conventional(GhzDiagonalEnsemble<Rational>),
    Recycling(GhzDiagonalEnsemble<Rational>),
    Link {
        a: GhzDiagonalEnsemble<Rational>,
        b: GhzDiagonalEnsemble<Rational>,
        junctions: Vec<Party>,
    },
    PhaseFlip {
        phase: PhaseEnsemble<Rational>,
        n: usize,
    },
    /// Three-photon symmetric noise through conventional round, recycling
    /// into pairs, and linking of the recycled pairs.
    FullMepp(SymmetricNoiseParams<Rational>),
}

impl McInput {
    pub fn kind(&self) -> PipelineKind {
        match self {
            McInput::Conventional(_) => PipelineKind::Conventional,
            McInput::Recycling(_) => PipelineKind::Recycling,
            McInput::Link { .. } => PipelineKind::Link,
            McInput::PhaseFlip { .. } => PipelineKind::PhaseFlip,
            McInput::FullMepp(_) => PipelineKind::FullMepp,
        }
    }

    /// Input for one point of an `F₀` sweep. Bit-flip pipelines use
    /// symmetric noise on `n` photons, link joins `AB` and `AC` pairs of
    /// `φ⁺` weight `f0` at A, and the phase-flip pipeline uses `p0 = f0`.
    pub fn at_grid_point(kind: PipelineKind, f0: &Rational, n: usize) -> Result<Self> {
        Ok(match kind {
            PipelineKind::Conventional => {
                McInput::Conventional(GhzDiagonalEnsemble::symmetric(n, f0)?)
            }
            PipelineKind::Recycling => McInput::Recycling(GhzDiagonalEnsemble::symmetric(n, f0)?),
            PipelineKind::Link => McInput::Link {
                a: BellDiagonalEnsemble::phi_psi((Party(0), Party(1)), f0.clone())?.to_ghz(),
                b: BellDiagonalEnsemble::phi_psi((Party(0), Party(2)), f0.clone())?.to_ghz(),
                junctions: vec![Party(0)],
            },
            PipelineKind::PhaseFlip => McInput::PhaseFlip {
                phase: PhaseEnsemble::new(f0.clone())?,
                n,
            },
            PipelineKind::FullMepp => McInput::FullMepp(SymmetricNoiseParams::new(f0.clone())?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub input: McInput,
}

/// One estimated quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct McStat {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    /// Number of samples behind the estimate (trials or conditional events).
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub pipeline: PipelineKind,
    pub trials: u64,
    pub seed: u64,
    pub rng: &'static str,
    pub stats: Vec<McStat>,
}

/// Distance of one estimate from its exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub stderr: f64,
    /// `|value − expected| / stderr`. Zero-variance estimates use the
    /// binomial spread of the exact value, and give 0 when exact and
    /// infinity otherwise if that is zero too.
    pub sigmas: f64,
}

impl McEstimate {
    pub fn stat(&self, name: &str) -> Option<&McStat> {
        self.stats.iter().find(|s| s.name == name)
    }

    /// Compares against exact values by name; statistics without samples
    /// are skipped.
    pub fn compare(&self, expected: &[(String, Rational)]) -> Vec<Deviation> {
        let mut out = Vec::new();
        for (name, exact) in expected {
            let Some(s) = self.stat(name) else { continue };
            if s.count == 0 {
                continue;
            }
            let e = exact.to_f64();
            let diff = (s.value - e).abs();
            // A sample at the boundary reports zero spread; fall back to the
            // binomial spread implied by the exact value.
            let null = (e * (1.0 - e) / s.count as f64).max(0.0).sqrt();
            let scale = if s.stderr > 0.0 { s.stderr } else { null };
            let sigmas = if scale > 0.0 {
                diff / scale
            } else if diff <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            out.push(Deviation {
                name: name.clone(),
                value: s.value,
                expected: e,
                stderr: s.stderr,
                sigmas,
            });
        }
        out
    }
}

fn binomial(name: impl Into<String>, hits: u64, count: u64) -> McStat {
    let (value, stderr) = if count == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let p = hits as f64 / count as f64;
        (p, (p * (1.0 - p) / count as f64).sqrt())
    };
    McStat {
        name: name.into(),
        value,
        stderr,
        count,
    }
}

/// Name of the weight statistic of a recycled subset, e.g. `w_AB`.
pub fn subset_weight_name(parties: &[Party]) -> String {
    format!("w_{}", party_string(parties))
}

/// Name of the fidelity statistic of a recycled subset, e.g. `F_AB`.
pub fn subset_fidelity_name(parties: &[Party]) -> String {
    format!("F_{}", party_string(parties))
}

/// Exact value of every statistic the pipeline reports, from the
/// closed-form maps. Conditional statistics with nothing to condition on are
/// left out.
pub fn analytic_stats(input: &McInput) -> Result<Vec<(String, Rational)>> {
    let mut out = Vec::new();
    match input {
        McInput::Conventional(e) => {
            let (o, y) = conventional_round(e)?;
            out.push(("yield".into(), y));
            out.push(("fidelity".into(), o.fidelity()));
            out.extend(label_stats(&o));
        }
        McInput::Recycling(e) => {
            let t = recycle_tables(e)?;
            out.push(("identity".into(), t.identity_weight.clone()));
            out.extend(subset_stats(&t.by_subset));
        }
        McInput::Link { a, b, junctions } => {
            let (o, y) = entanglement_link(a, b, junctions)?;
            out.push(("yield".into(), y));
            out.extend(label_stats(&o));
        }
        McInput::PhaseFlip { phase, .. } => {
            let (o, y) = phase_round(phase)?;
            out.push(("yield".into(), y));
            out.push(("p0'".into(), o.p0));
        }
        McInput::FullMepp(params) => {
            let c = yields_and_fidelities(params);
            let recycled = !c.p_3to2.is_zero();
            for (name, v) in c.columns() {
                if recycled || !matches!(name, "F_2" | "F_2to3") {
                    out.push((name.to_string(), v.clone()));
                }
            }
        }
    }
    Ok(out)
}

/// The statistics of [`analytic_stats`] computed by exhaustive branch
/// enumeration instead.
pub fn enumerated_stats(input: &McInput) -> Result<Vec<(String, Rational)>> {
    let mut out = Vec::new();
    match input {
        McInput::Conventional(e) => {
            let rep = run_conventional_bitflip(e)?;
            out.push(("yield".into(), rep.kept));
            out.push(("fidelity".into(), rep.output.fidelity()));
            out.extend(label_stats(&rep.output));
        }
        McInput::Recycling(e) => {
            let rep = run_recycling(e)?;
            out.push(("identity".into(), rep.identity.total()));
            out.extend(subset_stats(&rep.by_subset));
        }
        McInput::Link { a, b, junctions } => {
            let rep = run_link(a, b, junctions)?;
            out.push(("yield".into(), rep.kept));
            out.extend(label_stats(&rep.output));
        }
        McInput::PhaseFlip { phase, n } => {
            let rep = run_phaseflip(phase, *n)?;
            out.push(("yield".into(), rep.kept));
            out.push(("p0'".into(), rep.output.fidelity()));
        }
        McInput::FullMepp(params) => {
            let c = enumerate_curve(params)?;
            out.push(("Y_c".into(), c.y_c));
            out.push(("Y_2to3".into(), c.y_2to3));
            out.push(("Y_e".into(), c.y_e));
            out.push(("F_c".into(), c.f_c));
            if let (Some(f_2), Some(f_2to3)) = (c.f_2, c.f_2to3) {
                out.push(("F_2".into(), f_2));
                out.push(("F_2to3".into(), f_2to3));
            }
            out.push(("F_e".into(), c.f_e));
        }
    }
    Ok(out)
}

fn label_stats(e: &GhzDiagonalEnsemble<Rational>) -> Vec<(String, Rational)> {
    e.iter()
        .map(|(l, w)| (format!("p_{l}"), w.clone()))
        .collect()
}

fn subset_stats(
    by_subset: &BTreeMap<Vec<Party>, GhzDiagonalEnsemble<Rational>>,
) -> Vec<(String, Rational)> {
    let mut out = Vec::new();
    for (parties, sub) in by_subset {
        if sub.total().is_zero() {
            continue;
        }
        out.push((subset_weight_name(parties), sub.total()));
        out.push((subset_fidelity_name(parties), sub.fidelity()));
    }
    out
}

/// Integer tallies of one chunk, merged by addition.
#[derive(Clone, Debug, Default, PartialEq)]
struct Tally(BTreeMap<String, u64>);

impl Tally {
    fn add(&mut self, key: &str, by: u64) {
        *self.0.entry(key.to_string()).or_insert(0) += by;
    }

    fn get(&self, key: &str) -> u64 {
        self.0.get(key).copied().unwrap_or(0)
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in other.0 {
            *self.0.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Cumulative table for drawing GHZ labels.
struct LabelSampler {
    labels: Vec<(GhzLabel, f64)>,
}

impl LabelSampler {
    fn new(e: &GhzDiagonalEnsemble<Rational>) -> Self {
        let mut acc = 0.0;
        let labels = e
            .iter()
            .map(|(l, w)| {
                acc += w.to_f64();
                (*l, acc)
            })
            .collect();
        LabelSampler { labels }
    }

    fn draw(&self, rng: &mut impl Rng) -> GhzLabel {
        let u: f64 = rng.gen();
        self.labels
            .iter()
            .find(|(_, c)| u < *c)
            .unwrap_or_else(|| self.labels.last().expect("nonempty ensemble"))
            .0
    }
}

fn single(mut records: Vec<BranchRecord<f64>>) -> Result<BranchRecord<f64>> {
    if records.len() != 1 {
        return Err(Error::MonteCarlo(format!(
            "sampled {} branches instead of one",
            records.len()
        )));
    }
    Ok(records.remove(0))
}

fn is_target(fate: &Fate) -> bool {
    matches!(fate, Fate::Kept { label, .. } if label.mask() == 0 && label.sign() == Sign::Plus)
}

fn tally_label(tally: &mut Tally, prefix: &str, label: &GhzLabel) {
    tally.add(&format!("{prefix}{label}"), 1);
}

/// Sampler state shared by all chunks of a run.
struct Prepared {
    input: McInput,
    parties: Vec<Party>,
    first: LabelSampler,
    second: Option<LabelSampler>,
    plan: Option<LinkPlan>,
    phase_fix: Option<PhaseFlipCorrections>,
    opts: EngineOptions,
}

impl Prepared {
    fn new(input: &McInput) -> Result<Self> {
        let opts = EngineOptions::default();
        let (parties, first, second, plan, phase_fix) = match input {
            McInput::Conventional(e) | McInput::Recycling(e) => {
                e.require_normalized()?;
                if matches!(input, McInput::Recycling(_)) && e.n() < 3 {
                    return Err(Error::PhotonCount {
                        count: e.n(),
                        reason: "recycling needs at least three parties",
                    });
                }
                (e.parties().to_vec(), LabelSampler::new(e), None, None, None)
            }
            McInput::Link { a, b, junctions } => {
                a.require_normalized()?;
                b.require_normalized()?;
                let plan = LinkPlan::new(a.parties(), b.parties(), junctions)?;
                (
                    plan.output.clone(),
                    LabelSampler::new(a),
                    Some(LabelSampler::new(b)),
                    Some(plan),
                    None,
                )
            }
            McInput::PhaseFlip { phase, n } => {
                let e = phase.to_ghz(*n)?;
                let fix = PhaseFlipCorrections::standard(*n);
                (
                    e.parties().to_vec(),
                    LabelSampler::new(&e),
                    None,
                    None,
                    Some(fix),
                )
            }
            McInput::FullMepp(params) => (
                Party::first(3),
                LabelSampler::new(&params.ensemble()),
                None,
                None,
                None,
            ),
        };
        Ok(Prepared {
            input: input.clone(),
            parties,
            first,
            second,
            plan,
            phase_fix,
            opts,
        })
    }

    fn bitflip(&self, rng: &mut ChaCha8Rng, cross: CrossHandling) -> Result<BranchRecord<f64>> {
        let l1 = self.first.draw(rng);
        let l2 = self.first.draw(rng);
        single(bitflip_paths::<f64>(
            &self.parties,
            l1,
            l2,
            1.0,
            cross,
            &self.opts,
            &mut Sampler::new(rng),
        )?)
    }

    fn run_chunk(&self, seed: u64, chunk: u64, trials: u64) -> Result<Tally> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let mut tally = Tally::default();
        let mut waiting: Vec<(Vec<Party>, GhzLabel)> = Vec::new();
        for _ in 0..trials {
            match &self.input {
                McInput::Conventional(_) => {
                    let rec = self.bitflip(&mut rng, CrossHandling::Discard)?;
                    if let Fate::Kept { label, .. } = &rec.fate {
                        tally.add("kept", 1);
                        tally.add("kept_target", is_target(&rec.fate) as u64);
                        tally_label(&mut tally, "p_", label);
                    }
                }
                McInput::Recycling(_) => {
                    let rec = self.bitflip(&mut rng, CrossHandling::Recycle)?;
                    match &rec.fate {
                        Fate::Kept { parties, .. } if *parties == self.parties => {
                            tally.add("identity", 1)
                        }
                        Fate::Kept { parties, .. } => {
                            tally.add(&subset_weight_name(parties), 1);
                            if is_target(&rec.fate) {
                                tally.add(&subset_fidelity_name(parties), 1);
                            }
                        }
                        other => {
                            return Err(Error::MonteCarlo(format!(
                                "recycling branch ended {other}"
                            )))
                        }
                    }
                }
                McInput::Link { .. } => {
                    let plan = self.plan.as_ref().expect("link plan");
                    let la = self.first.draw(&mut rng);
                    let lb = self.second.as_ref().expect("second sampler").draw(&mut rng);
                    let rec = single(link_paths::<f64>(
                        plan,
                        la,
                        lb,
                        1.0,
                        &self.opts,
                        &mut Sampler::new(&mut rng),
                    )?)?;
                    if let Fate::Kept { label, .. } = &rec.fate {
                        tally.add("kept", 1);
                        tally_label(&mut tally, "p_", label);
                    }
                }
                McInput::PhaseFlip { n, .. } => {
                    let fix = self.phase_fix.as_ref().expect("phase corrections");
                    let s1 = self.first.draw(&mut rng).sign();
                    let s2 = self.first.draw(&mut rng).sign();
                    let rec = single(phaseflip_paths::<f64>(
                        *n,
                        s1,
                        s2,
                        1.0,
                        fix,
                        &self.opts,
                        &mut Sampler::new(&mut rng),
                    )?)?;
                    if let Fate::Kept { .. } = rec.fate {
                        tally.add("kept", 1);
                        tally.add("kept_target", is_target(&rec.fate) as u64);
                    }
                }
                McInput::FullMepp(_) => {
                    let rec = self.bitflip(&mut rng, CrossHandling::Recycle)?;
                    let Fate::Kept { parties, label } = &rec.fate else {
                        return Err(Error::MonteCarlo(format!(
                            "recycling branch ended {}",
                            rec.fate
                        )));
                    };
                    let good = is_target(&rec.fate) as u64;
                    if *parties == self.parties {
                        tally.add("conv", 1);
                        tally.add("conv_good", good);
                        continue;
                    }
                    tally.add("pairs", 1);
                    tally.add("pair_good", good);
                    match waiting.iter().position(|(ps, _)| ps != parties) {
                        Some(i) => {
                            let (other, la) = waiting.swap_remove(i);
                            let junction: Vec<Party> = other
                                .iter()
                                .copied()
                                .filter(|p| parties.contains(p))
                                .collect();
                            let plan = LinkPlan::new(&other, parties, &junction)?;
                            let linked = single(link_paths::<f64>(
                                &plan,
                                la,
                                *label,
                                1.0,
                                &self.opts,
                                &mut Sampler::new(&mut rng),
                            )?)?;
                            if let Fate::Kept { .. } = linked.fate {
                                tally.add("linked", 1);
                                tally.add("linked_good", is_target(&linked.fate) as u64);
                            }
                        }
                        None => waiting.push((parties.clone(), *label)),
                    }
                }
            }
        }
        Ok(tally)
    }

    fn estimate(&self, tally: &Tally, trials: u64) -> Vec<McStat> {
        let t = trials;
        match &self.input {
            McInput::Conventional(_) => {
                let kept = tally.get("kept");
                let mut stats = vec![
                    binomial("yield", kept, t),
                    binomial("fidelity", tally.get("kept_target"), kept),
                ];
                stats.extend(label_shares(tally, kept));
                stats
            }
            McInput::PhaseFlip { .. } => {
                let kept = tally.get("kept");
                vec![
                    binomial("yield", kept, t),
                    binomial("p0'", tally.get("kept_target"), kept),
                ]
            }
            McInput::Recycling(_) => {
                let mut stats = vec![binomial("identity", tally.get("identity"), t)];
                for (key, &count) in &tally.0 {
                    if let Some(subset) = key.strip_prefix("w_") {
                        stats.push(binomial(key.clone(), count, t));
                        let f = format!("F_{subset}");
                        stats.push(binomial(f.clone(), tally.get(&f), count));
                    }
                }
                stats
            }
            McInput::Link { .. } => {
                let kept = tally.get("kept");
                let mut stats = vec![binomial("yield", kept, t)];
                stats.extend(label_shares(tally, kept));
                stats
            }
            McInput::FullMepp(_) => full_mepp_stats(tally, t),
        }
    }
}

fn label_shares(tally: &Tally, kept: u64) -> Vec<McStat> {
    tally
        .0
        .iter()
        .filter(|(key, _)| key.starts_with("p_"))
        .map(|(key, &count)| binomial(key.clone(), count, kept))
        .collect()
}

fn full_mepp_stats(tally: &Tally, t: u64) -> Vec<McStat> {
    let tf = t as f64;
    let conv = tally.get("conv");
    let pairs = tally.get("pairs");
    let linked = tally.get("linked");
    let b = conv as f64 / tf;
    let pi = pairs as f64 / tf;
    let a = tally.get("conv_good") as f64 / tf;
    let y_c = binomial("Y_c", conv, t);
    let y_2to3 = McStat {
        name: "Y_2to3".into(),
        value: pi / 2.0,
        stderr: 0.5 * (pi * (1.0 - pi) / tf).sqrt(),
        count: t,
    };
    let y_e = McStat {
        name: "Y_e".into(),
        value: b + pi / 2.0,
        stderr: 0.5 * (b * (1.0 - b) / tf).sqrt(),
        count: t,
    };
    let f_c = binomial("F_c", tally.get("conv_good"), conv);
    let f_2 = binomial("F_2", tally.get("pair_good"), pairs);
    let f_2to3 = binomial("F_2to3", tally.get("linked_good"), linked);
    let f = f_2to3.value;
    let f_e = if linked == 0 {
        // Without linked triples only the conventional part is observed.
        if pairs == 0 {
            McStat {
                name: "F_e".into(),
                value: f_c.value,
                stderr: f_c.stderr,
                count: conv,
            }
        } else {
            McStat {
                name: "F_e".into(),
                value: f64::NAN,
                stderr: f64::NAN,
                count: 0,
            }
        }
    } else {
        let value = (2.0 * a + f * (1.0 - b)) / (1.0 + b);
        let da = 2.0 / (1.0 + b);
        let db = -2.0 * (a + f) / ((1.0 + b) * (1.0 + b));
        let df = (1.0 - b) / (1.0 + b);
        let var_a = a * (1.0 - a) / tf;
        let var_b = b * (1.0 - b) / tf;
        let cov_ab = a * (1.0 - b) / tf;
        let var_f = f * (1.0 - f) / linked as f64;
        let var = da * da * var_a + db * db * var_b + 2.0 * da * db * cov_ab + df * df * var_f;
        McStat {
            name: "F_e".into(),
            value,
            stderr: var.max(0.0).sqrt(),
            count: t,
        }
    };
    vec![y_c, y_2to3, y_e, f_c, f_2, f_2to3, f_e]
}

/// Checks that the floating kernel reproduces the exact branch
/// probabilities within `1e-12` on a representative input product.
pub fn spot_check(input: &McInput) -> Result<()> {
    let opts = EngineOptions::default();
    let compare =
        |exact: Vec<BranchRecord<Rational>>, float: Vec<BranchRecord<f64>>| -> Result<()> {
            if exact.len() != float.len() {
                return Err(Error::MonteCarlo(format!(
                    "floating kernel produced {} branches, exact kernel {}",
                    float.len(),
                    exact.len()
                )));
            }
            for (e, f) in exact.iter().zip(&float) {
                if e.fate != f.fate || (e.probability.to_f64() - f.probability).abs() > 1e-12 {
                    return Err(Error::MonteCarlo(format!(
                        "floating branch {f} differs from exact {e}"
                    )));
                }
            }
            Ok(())
        };
    let extremes = |e: &GhzDiagonalEnsemble<Rational>| {
        let first = *e.iter().next().expect("nonempty").0;
        let last = *e.iter().last().expect("nonempty").0;
        (first, last)
    };
    let bitflip = |parties: &[Party], e: &GhzDiagonalEnsemble<Rational>, cross| -> Result<()> {
        let (l1, l2) = extremes(e);
        compare(
            bitflip_paths::<QSqrt2>(
                parties,
                l1,
                l2,
                Rational::one(),
                cross,
                &opts,
                &mut Exhaustive,
            )?,
            bitflip_paths::<f64>(parties, l1, l2, 1.0, cross, &opts, &mut Exhaustive)?,
        )
    };
    match input {
        McInput::Conventional(e) if e.n() <= crate::engine::BITFLIP_MAX_N => {
            bitflip(e.parties(), e, CrossHandling::Discard)
        }
        McInput::Recycling(e) if e.n() <= crate::engine::RECYCLING_MAX_N => {
            bitflip(e.parties(), e, CrossHandling::Recycle)
        }
        McInput::FullMepp(p) => bitflip(&Party::first(3), &p.ensemble(), CrossHandling::Recycle),
        McInput::Link { a, b, junctions } if a.n().max(b.n()) <= crate::engine::LINK_MAX_N => {
            let plan = LinkPlan::new(a.parties(), b.parties(), junctions)?;
            let la = extremes(a).1;
            let lb = extremes(b).1;
            compare(
                link_paths::<QSqrt2>(&plan, la, lb, Rational::one(), &opts, &mut Exhaustive)?,
                link_paths::<f64>(&plan, la, lb, 1.0, &opts, &mut Exhaustive)?,
            )
        }
        McInput::PhaseFlip { n, .. } if *n <= crate::engine::PHASEFLIP_MAX_N => {
            let fix = PhaseFlipCorrections::standard(*n);
            compare(
                phaseflip_paths::<QSqrt2>(
                    *n,
                    Sign::Plus,
                    Sign::Minus,
                    Rational::one(),
                    &fix,
                    &opts,
                    &mut Exhaustive,
                )?,
                phaseflip_paths::<f64>(
                    *n,
                    Sign::Plus,
                    Sign::Minus,
                    1.0,
                    &fix,
                    &opts,
                    &mut Exhaustive,
                )?,
            )
        }
        // Past the enumeration budget there is no exact kernel to compare with.
        _ => Ok(()),
    }
}

/// Samples `cfg.trials` independent rounds of the configured pipeline.
pub fn mc_run(cfg: &McConfig) -> Result<McEstimate> {
    if cfg.trials == 0 {
        return Err(Error::MonteCarlo("trials must be at least 1".into()));
    }
    spot_check(&cfg.input)?;
    let prepared = Prepared::new(&cfg.input)?;
    let chunks = cfg.trials.div_ceil(CHUNK_TRIALS);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK_TRIALS.min(cfg.trials - c * CHUNK_TRIALS);
            prepared.run_chunk(cfg.seed, c, n)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    Ok(McEstimate {
        pipeline: cfg.input.kind(),
        trials: cfg.trials,
        seed: cfg.seed,
        rng: RNG_ALGORITHM,
        stats: prepared.estimate(&tally, cfg.trials),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of grid point `index`: the master seed itself for the first point,
/// then a splitmix64 walk from it.
pub fn point_seed(master: u64, index: usize) -> u64 {
    if index == 0 {
        return master;
    }
    splitmix64(master.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// One estimate per `F₀` grid point.
pub fn mc_sweep(
    grid: &[Rational],
    kind: PipelineKind,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if grid.is_empty() {
        return Err(Error::MonteCarlo("empty F0 grid".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(i, f0)| {
            mc_run(&McConfig {
                trials,
                seed: point_seed(seed, i),
                input: McInput::at_grid_point(kind, f0, n)?,
            })
        })
        .collect()
}
