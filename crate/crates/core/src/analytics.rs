//! Closed-form ensemble calculus: conventional rounds, the yield/fidelity
//! curves, recycling of cross-combinations and entanglement link.

use std::collections::BTreeMap;

use crate::ensemble::{
    BellDiagonalEnsemble, GhzDiagonalEnsemble, PhaseEnsemble, SymmetricNoiseParams,
};
use crate::error::{Error, Result};
use crate::qnd::{pattern_string, ParityOutcome};
use crate::register::{low_mask, GhzLabel, Party, Sign};
use crate::scalar::Weight;

/// One bit-flip round on two copies: only identity combinations (equal
/// masks) pass, and the output sign is the product of the input signs.
///
/// For `+`-only ensembles the output weight of `L` is `w(L)² / Σ w²`.
/// Returns the normalized output and the success probability.
pub fn conventional_round<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
) -> Result<(GhzDiagonalEnsemble<W>, W)> {
    e.require_normalized()?;
    let mut by_mask: BTreeMap<u64, (W, W)> = BTreeMap::new();
    for (l, w) in e.iter() {
        let slot = by_mask.entry(l.mask()).or_insert((W::zero(), W::zero()));
        match l.sign() {
            Sign::Plus => slot.0 = slot.0.clone() + w.clone(),
            Sign::Minus => slot.1 = slot.1.clone() + w.clone(),
        }
    }
    let n = e.n();
    let two = W::from_u8(2).expect("2");
    let mut out = Vec::new();
    let mut kept = W::zero();
    for (mask, (plus, minus)) in by_mask {
        let same = plus.clone() * plus.clone() + minus.clone() * minus.clone();
        let mixed = two.clone() * plus * minus;
        kept = kept + same.clone() + mixed.clone();
        out.push((GhzLabel::new(n, mask, Sign::Plus)?, same));
        out.push((GhzLabel::new(n, mask, Sign::Minus)?, mixed));
    }
    let ens = GhzDiagonalEnsemble::unnormalized(e.parties().to_vec(), out)?.normalize()?;
    Ok((ens, kept))
}

/// One phase-flip round: `p0' = p0² / (p0² + p1²)`, yield `p0² + p1²`.
pub fn phase_round<W: Weight>(p: &PhaseEnsemble<W>) -> Result<(PhaseEnsemble<W>, W)> {
    let a = p.p0.clone() * p.p0.clone();
    let b = p.p1.clone() * p.p1.clone();
    let y = a.clone() + b;
    if y.is_zero() {
        return Err(Error::EmptyEnsemble);
    }
    Ok((PhaseEnsemble::new(a / y.clone())?, y))
}

/// Yields and fidelities of the three-photon scheme under symmetric noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRecord<W> {
    pub f0: W,
    /// Conventional yield (identity combinations kept).
    pub y_c: W,
    /// Probability that a pair of triples is recycled into two-photon pairs.
    pub p_3to2: W,
    /// Three-photon yield recovered by linking recycled pairs.
    pub y_2to3: W,
    /// Total yield.
    pub y_e: W,
    pub f_c: W,
    /// Fidelity of a recycled pair.
    pub f_2: W,
    /// Fidelity of a linked triple.
    pub f_2to3: W,
    /// Yield-weighted average fidelity.
    pub f_e: W,
}

impl<W: Weight> CurveRecord<W> {
    /// Curve columns in CSV order: `Y_c, Y_2to3, Y_e, F_c, F_2, F_2to3, F_e`.
    pub fn columns(&self) -> [(&'static str, &W); 7] {
        [
            ("Y_c", &self.y_c),
            ("Y_2to3", &self.y_2to3),
            ("Y_e", &self.y_e),
            ("F_c", &self.f_c),
            ("F_2", &self.f_2),
            ("F_2to3", &self.f_2to3),
            ("F_e", &self.f_e),
        ]
    }
}

pub fn yields_and_fidelities<W: Weight>(params: &SymmetricNoiseParams<W>) -> CurveRecord<W> {
    let f0 = params.f0().clone();
    let w = |k: i64| W::from_i64(k).expect("small integer");
    let three = w(3);
    let f0sq = f0.clone() * f0.clone();
    let quality = w(1) - w(2) * f0.clone() + w(4) * f0sq.clone();
    let y_c = quality.clone() / three.clone();
    let p_3to2 = (w(2) + w(2) * f0.clone() - w(4) * f0sq.clone()) / three.clone();
    let y_2to3 = p_3to2.clone() / w(2);
    let y_e = y_c.clone() + y_2to3.clone();
    let f_c = three.clone() * f0sq.clone() / quality;
    let f_2 = three * f0.clone() / (w(1) + w(2) * f0.clone());
    let f_2to3 = f_2.clone() * f_2.clone();
    let f_e = (f_c.clone() * y_c.clone() + f_2to3.clone() * y_2to3.clone()) / y_e.clone();
    CurveRecord {
        f0,
        y_c,
        p_3to2,
        y_2to3,
        y_e,
        f_c,
        f_2,
        f_2to3,
        f_e,
    }
}

/// Positions kept after a mixed parity pattern: the larger of the Even and
/// Odd sides, or the side holding photon 1 on a tie. Needs at least one Even
/// and one Odd outcome.
pub fn recycling_subset(pattern: &[ParityOutcome]) -> Result<Vec<usize>> {
    let odd: Vec<usize> = (0..pattern.len())
        .filter(|&i| pattern[i].is_odd())
        .collect();
    let even: Vec<usize> = (0..pattern.len())
        .filter(|&i| !pattern[i].is_odd())
        .collect();
    if odd.is_empty() || even.is_empty() {
        return Err(Error::Pattern(format!(
            "{} has no disagreeing parties to recycle",
            pattern_string(pattern)
        )));
    }
    let keep = if odd.len() > even.len() || (odd.len() == even.len() && odd[0] == 0) {
        odd
    } else {
        even
    };
    Ok(keep)
}

fn pattern_of(n: usize, mask: u64) -> Vec<ParityOutcome> {
    (0..n)
        .map(|i| {
            if mask >> i & 1 == 1 {
                ParityOutcome::Odd
            } else {
                ParityOutcome::Even
            }
        })
        .collect()
}

fn restrict(mask: u64, positions: &[usize]) -> u64 {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &p)| acc | (mask >> p & 1) << j)
}

/// Sub-ensemble extracted from cross-combinations that produce exactly the
/// given parity pattern, over the parties of [`recycling_subset`]. Each
/// ordered product of labels whose masks differ by the pattern shows it with
/// probability 1/2 (the complement pattern takes the other half). Weights
/// are probabilities per pair of input copies, so the result is unnormalized.
pub fn recycle_by_pattern<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
    pattern: &[ParityOutcome],
) -> Result<GhzDiagonalEnsemble<W>> {
    let half = W::from_ratio(1, 2);
    recycle_classes(e, pattern)?.scale(&half)
}

/// Pattern plus complement: the total sub-ensemble for one flip class.
fn recycle_classes<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
    pattern: &[ParityOutcome],
) -> Result<GhzDiagonalEnsemble<W>> {
    e.require_normalized()?;
    let n = e.n();
    if n < 3 {
        return Err(Error::PhotonCount {
            count: n,
            reason: "recycling needs at least three parties",
        });
    }
    if pattern.len() != n {
        return Err(Error::Pattern(format!(
            "{} has {} entries for {n} parties",
            pattern_string(pattern),
            pattern.len()
        )));
    }
    let keep = recycling_subset(pattern)?;
    let d = pattern.iter().enumerate().fold(
        0u64,
        |acc, (i, p)| if p.is_odd() { acc | 1 << i } else { acc },
    );
    let d = if d & 1 == 1 { !d & low_mask(n) } else { d };
    let parties: Vec<Party> = keep.iter().map(|&i| e.parties()[i]).collect();
    let mut out = Vec::new();
    for (l1, w1) in e.iter() {
        let partner = l1.mask() ^ d;
        for sign in [Sign::Plus, Sign::Minus] {
            let l2 = GhzLabel::new(n, partner, sign)?;
            let w2 = e.weight(&l2);
            if w2.is_zero() {
                continue;
            }
            let label =
                GhzLabel::canonical(keep.len(), restrict(l1.mask(), &keep), l1.sign() * sign)?;
            out.push((label, w1.clone() * w2));
        }
    }
    GhzDiagonalEnsemble::unnormalized(parties, out)
}

/// Everything a round of recycling produces, grouped by the flip class
/// (pattern up to complement) of the cross-combination.
#[derive(Clone, Debug, PartialEq)]
pub struct RecycleTables<W> {
    /// Keyed by the canonical pattern string (first party Even).
    pub by_class: BTreeMap<String, GhzDiagonalEnsemble<W>>,
    /// Classes merged by kept party subset.
    pub by_subset: BTreeMap<Vec<Party>, GhzDiagonalEnsemble<W>>,
    /// Probability of an identity combination (all-Even or all-Odd).
    pub identity_weight: W,
}

impl<W: Weight> RecycleTables<W> {
    pub fn recycled_weight(&self) -> W {
        self.by_subset
            .values()
            .fold(W::zero(), |acc, e| acc + e.total())
    }
}

pub fn recycle_tables<W: Weight>(e: &GhzDiagonalEnsemble<W>) -> Result<RecycleTables<W>> {
    e.require_normalized()?;
    let n = e.n();
    let mut by_class = BTreeMap::new();
    let mut by_subset: BTreeMap<Vec<Party>, GhzDiagonalEnsemble<W>> = BTreeMap::new();
    for d in (2..1u64 << n).step_by(2) {
        let pattern = pattern_of(n, d);
        let sub = recycle_classes(e, &pattern)?;
        let key = sub.parties().to_vec();
        let merged = match by_subset.get(&key) {
            Some(prev) => prev.add(&sub)?,
            None => sub.clone(),
        };
        by_subset.insert(key, merged);
        by_class.insert(pattern_string(&pattern), sub);
    }
    let (_, identity_weight) = conventional_round(e)?;
    Ok(RecycleTables {
        by_class,
        by_subset,
        identity_weight,
    })
}

/// Pair ensembles recycled from a three-photon ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTables<W> {
    pub ab: BellDiagonalEnsemble<W>,
    pub ac: BellDiagonalEnsemble<W>,
    pub bc: BellDiagonalEnsemble<W>,
}

impl<W: Weight> PairTables<W> {
    pub fn total(&self) -> W {
        self.ab.total() + self.ac.total() + self.bc.total()
    }
}

/// For `+`-only input: `AB = 2F₀F₃ φ⁺ + 2F₁F₂ ψ⁺`,
/// `AC = 2F₀F₂ φ⁺ + 2F₁F₃ ψ⁺`, `BC = 2F₀F₁ φ⁺ + 2F₂F₃ ψ⁺`.
pub fn recycle_pair_tables<W: Weight>(e: &GhzDiagonalEnsemble<W>) -> Result<PairTables<W>> {
    if e.n() != 3 {
        return Err(Error::PhotonCount {
            count: e.n(),
            reason: "pair tables need a three-party ensemble",
        });
    }
    let t = recycle_tables(e)?;
    let p = e.parties();
    let pair = |a: usize, b: usize| -> Result<BellDiagonalEnsemble<W>> {
        let key = vec![p[a], p[b]];
        let g = match t.by_subset.get(&key) {
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

/// Four-photon recycling for one exact parity pattern. A single Odd party
/// leaves a three-photon ensemble on the others with weights
/// `f₀f₁, f₂f₃, f₄f₅, f₆f₇` (for Odd at D; inputs and outputs both
/// binary-indexed, see [`GhzLabel::from_index`]), two Odd parties leave a pair
/// on the Even side with `φ⁺ = f₀f₃ + f₁f₂`, `ψ⁺ = f₄f₇ + f₅f₆` (Odd at C, D).
/// Three Odd entries are the complement of a single Odd entry.
pub fn four_photon_recycle<W: Weight>(
    e: &GhzDiagonalEnsemble<W>,
    pattern: &[ParityOutcome],
) -> Result<GhzDiagonalEnsemble<W>> {
    if e.n() != 4 {
        return Err(Error::PhotonCount {
            count: e.n(),
            reason: "four-photon recycling needs four parties",
        });
    }
    let odd = pattern.iter().filter(|p| p.is_odd()).count();
    if odd == 0 || odd == 4 {
        return Err(Error::Pattern(format!(
            "{} is an identity combination, handled by the conventional round",
            pattern_string(pattern)
        )));
    }
    recycle_by_pattern(e, pattern)
}

/// Fuses `a` (parties S₁) and `b` (parties S₂) through parity checks at the
/// shared `junctions`. Every shared party must be listed. The first
/// junction fixes the bit-flip frame of `b`; a later junction whose parity
/// disagrees with the first discards the pair. Returns the normalized fused
/// ensemble over the sorted union of parties and the probability of keeping.
pub fn entanglement_link<W: Weight>(
    a: &GhzDiagonalEnsemble<W>,
    b: &GhzDiagonalEnsemble<W>,
    junctions: &[Party],
) -> Result<(GhzDiagonalEnsemble<W>, W)> {
    a.require_normalized()?;
    b.require_normalized()?;
    let plan = LinkPlan::new(a.parties(), b.parties(), junctions)?;
    let mut out = Vec::new();
    let mut kept = W::zero();
    for (la, wa) in a.iter() {
        for (lb, wb) in b.iter() {
            if let Some(label) = plan.fuse(*la, *lb)? {
                let w = wa.clone() * wb.clone();
                kept = kept + w.clone();
                out.push((label, w));
            }
        }
    }
    let fused = GhzDiagonalEnsemble::unnormalized(plan.output.clone(), out)?;
    if kept.is_zero() {
        return Err(Error::EmptyEnsemble);
    }
    Ok((fused.normalize()?, kept))
}

/// Party bookkeeping for a link: junction positions in both inputs and
/// where each output party comes from.
#[derive(Clone, Debug)]
pub struct LinkPlan {
    pub a_parties: Vec<Party>,
    pub b_parties: Vec<Party>,
    pub junctions: Vec<Party>,
    /// Sorted union of both party sets.
    pub output: Vec<Party>,
}

impl LinkPlan {
    pub fn new(a: &[Party], b: &[Party], junctions: &[Party]) -> Result<Self> {
        if junctions.is_empty() {
            return Err(Error::Junction("no junction party given".into()));
        }
        for (i, j) in junctions.iter().enumerate() {
            if junctions[..i].contains(j) {
                return Err(Error::Junction(format!("junction {j} listed twice")));
            }
            if !a.contains(j) || !b.contains(j) {
                return Err(Error::Junction(format!(
                    "junction {j} is not held by both subsystems"
                )));
            }
        }
        for p in a {
            if b.contains(p) && !junctions.contains(p) {
                return Err(Error::Junction(format!(
                    "party {p} is shared but not a junction"
                )));
            }
        }
        let mut output: Vec<Party> = a.iter().chain(b).copied().collect();
        output.sort();
        output.dedup();
        Ok(LinkPlan {
            a_parties: a.to_vec(),
            b_parties: b.to_vec(),
            junctions: junctions.to_vec(),
            output,
        })
    }

    fn pos(list: &[Party], p: Party) -> usize {
        list.iter().position(|&q| q == p).expect("checked party")
    }

    /// Output label for one pair of input labels, or `None` if a secondary
    /// junction disagrees with the first.
    pub fn fuse(&self, la: GhzLabel, lb: GhzLabel) -> Result<Option<GhzLabel>> {
        let xa = |p: Party| la.flipped(Self::pos(&self.a_parties, p));
        let yb = |p: Party| lb.flipped(Self::pos(&self.b_parties, p));
        let j1 = self.junctions[0];
        let frame = xa(j1) ^ yb(j1);
        for &j in &self.junctions[1..] {
            if xa(j) ^ yb(j) != frame {
                return Ok(None);
            }
        }
        let mut mask = 0u64;
        for (i, &p) in self.output.iter().enumerate() {
            let bit = if self.a_parties.contains(&p) {
                xa(p)
            } else {
                yb(p) ^ frame
            };
            if bit {
                mask |= 1 << i;
            }
        }
        Ok(Some(GhzLabel::canonical(
            self.output.len(),
            mask,
            la.sign() * lb.sign(),
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnd::parse_pattern;
    use crate::scalar::{ratio, Rational};

    fn r(n: i64, d: i64) -> Rational {
        ratio(n, d)
    }

    fn f3(v: [(i64, i64); 4]) -> GhzDiagonalEnsemble<Rational> {
        let f: Vec<_> = v.iter().map(|&(n, d)| r(n, d)).collect();
        GhzDiagonalEnsemble::from_fidelities(3, &f).unwrap()
    }

    fn fvec(e: &GhzDiagonalEnsemble<Rational>) -> Vec<Rational> {
        (0..1 << (e.n() - 1))
            .map(|i| e.fidelity_at(i).unwrap())
            .collect()
    }

    #[test]
    fn conventional_examples() {
        let (out, y) = conventional_round(&f3([(7, 10), (1, 10), (1, 10), (1, 10)])).unwrap();
        assert_eq!(fvec(&out), vec![r(49, 52), r(1, 52), r(1, 52), r(1, 52)]);
        assert_eq!(y, r(52, 100));
        let (out, y) = conventional_round(&f3([(1, 1), (0, 1), (0, 1), (0, 1)])).unwrap();
        assert_eq!(out.fidelity(), r(1, 1));
        assert_eq!(y, r(1, 1));
        let (out, _) =
            conventional_round(&GhzDiagonalEnsemble::symmetric(3, &r(1, 4)).unwrap()).unwrap();
        assert_eq!(out.fidelity(), r(1, 4));
        let (out, _) = conventional_round(&f3([(4, 10), (3, 10), (2, 10), (1, 10)])).unwrap();
        assert_eq!(out.fidelity(), r(8, 15));
    }

    #[test]
    fn conventional_rejects_unnormalized() {
        let e = GhzDiagonalEnsemble::unnormalized(
            Party::first(3),
            [(GhzLabel::target(3).unwrap(), r(1, 2))],
        )
        .unwrap();
        assert!(matches!(
            conventional_round(&e),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn conventional_signs_multiply() {
        let t = GhzLabel::target(3).unwrap();
        let e = GhzDiagonalEnsemble::normalized(
            Party::first(3),
            [(t, r(3, 4)), (t.with_sign(Sign::Minus), r(1, 4))],
        )
        .unwrap();
        let (out, y) = conventional_round(&e).unwrap();
        assert_eq!(y, r(1, 1));
        assert_eq!(out.weight(&t), r(10, 16));
        assert_eq!(out.weight(&t.with_sign(Sign::Minus)), r(6, 16));
    }

    #[test]
    fn phase_examples() {
        let (p, y) = phase_round(&PhaseEnsemble::new(r(8, 10)).unwrap()).unwrap();
        assert_eq!((p.p0, y), (r(16, 17), r(68, 100)));
        let (p, _) = phase_round(&PhaseEnsemble::new(r(1, 2)).unwrap()).unwrap();
        assert_eq!(p.p0, r(1, 2));
        let (p, y) = phase_round(&PhaseEnsemble::new(r(1, 1)).unwrap()).unwrap();
        assert_eq!((p.p0, y), (r(1, 1), r(1, 1)));
    }

    #[test]
    fn curve_examples() {
        let c = yields_and_fidelities(&SymmetricNoiseParams::new(r(1, 2)).unwrap());
        assert_eq!(
            (c.y_c, c.y_2to3, c.y_e, c.f_c, c.f_2, c.f_2to3, c.f_e),
            (
                r(1, 3),
                r(1, 3),
                r(2, 3),
                r(3, 4),
                r(3, 4),
                r(9, 16),
                r(21, 32)
            )
        );
        let c = yields_and_fidelities(&SymmetricNoiseParams::new(r(1, 1)).unwrap());
        assert_eq!((c.y_c, c.y_2to3, c.y_e), (r(1, 1), r(0, 1), r(1, 1)));
        assert_eq!(
            (c.f_c, c.f_2, c.f_2to3, c.f_e),
            (r(1, 1), r(1, 1), r(1, 1), r(1, 1))
        );
        let c = yields_and_fidelities(&SymmetricNoiseParams::new(r(7, 10)).unwrap());
        assert_eq!(
            (c.y_c, c.y_e, c.f_2, c.f_2to3),
            (r(52, 100), r(76, 100), r(875, 1000), r(765625, 1000000))
        );
    }

    #[test]
    fn pair_table_examples() {
        let t = recycle_pair_tables(&f3([(4, 10), (3, 10), (2, 10), (1, 10)])).unwrap();
        use crate::register::BellLabel as B;
        assert_eq!(
            (t.ab.weight(B::PHI_PLUS), t.ab.weight(B::PSI_PLUS)),
            (r(8, 100), r(12, 100))
        );
        assert_eq!(
            (t.ac.weight(B::PHI_PLUS), t.ac.weight(B::PSI_PLUS)),
            (r(16, 100), r(6, 100))
        );
        assert_eq!(
            (t.bc.weight(B::PHI_PLUS), t.bc.weight(B::PSI_PLUS)),
            (r(24, 100), r(4, 100))
        );
        assert_eq!(t.total(), r(70, 100));

        let t = recycle_pair_tables(&f3([(1, 1), (0, 1), (0, 1), (0, 1)])).unwrap();
        assert_eq!(t.total(), r(0, 1));

        let t =
            recycle_pair_tables(&GhzDiagonalEnsemble::symmetric(3, &r(7, 10)).unwrap()).unwrap();
        for pair in [&t.ab, &t.ac, &t.bc] {
            assert_eq!(pair.fidelity(), r(875, 1000));
        }
        assert_eq!(t.total(), r(48, 100));
    }

    #[test]
    fn subset_rule() {
        let k = |s: &str| recycling_subset(&parse_pattern(s).unwrap()).unwrap();
        assert_eq!(k("OEO"), vec![0, 2]);
        assert_eq!(k("EEO"), vec![0, 1]);
        assert_eq!(k("EEEO"), vec![0, 1, 2]);
        assert_eq!(k("EEOO"), vec![0, 1]);
        assert_eq!(k("EOEO"), vec![0, 2]);
        assert_eq!(k("OOEE"), vec![0, 1]);
        assert_eq!(k("EOOO"), vec![1, 2, 3]);
        assert!(recycling_subset(&parse_pattern("EEE").unwrap()).is_err());
    }

    #[test]
    fn four_photon_formulas() {
        let f: Vec<Rational> = (1..=8).map(|k| r(k, 36)).collect();
        let e = GhzDiagonalEnsemble::from_fidelities(4, &f).unwrap();
        let eeeo = four_photon_recycle(&e, &parse_pattern("EEEO").unwrap()).unwrap();
        assert_eq!(eeeo.parties(), &Party::first(3));
        let expect = |i: usize, j: usize| f[i].clone() * f[j].clone();
        let binary: Vec<_> = (0..4)
            .map(|i| eeeo.weight(&GhzLabel::from_index(3, i, Sign::Plus).unwrap()))
            .collect();
        assert_eq!(
            binary,
            vec![expect(0, 1), expect(2, 3), expect(4, 5), expect(6, 7)]
        );
        let eeoo = four_photon_recycle(&e, &parse_pattern("EEOO").unwrap()).unwrap();
        assert_eq!(eeoo.parties(), &Party::first(2));
        assert_eq!(
            fvec(&eeoo),
            vec![expect(0, 3) + expect(1, 2), expect(4, 7) + expect(5, 6)]
        );
        // three Odd entries fold onto the single-Odd complement
        let oooe = four_photon_recycle(&e, &parse_pattern("OOOE").unwrap()).unwrap();
        assert_eq!(oooe.parties(), &[Party(0), Party(1), Party(2)]);
        assert!(four_photon_recycle(&e, &parse_pattern("EEEE").unwrap()).is_err());
        assert!(four_photon_recycle(&e, &parse_pattern("OOOO").unwrap()).is_err());
    }

    #[test]
    fn four_photon_examples() {
        let uniform = GhzDiagonalEnsemble::symmetric(4, &r(1, 8)).unwrap();
        let t = four_photon_recycle(&uniform, &parse_pattern("EEEO").unwrap()).unwrap();
        assert_eq!(fvec(&t), vec![r(1, 64); 4]);
        let pure = GhzDiagonalEnsemble::<Rational>::pure(4).unwrap();
        assert!(four_photon_recycle(&pure, &parse_pattern("EOEO").unwrap())
            .unwrap()
            .is_empty());
        let two =
            GhzDiagonalEnsemble::from_fidelities(4, &[r(1, 2), r(0, 1), r(0, 1), r(1, 2)]).unwrap();
        let p = four_photon_recycle(&two, &parse_pattern("EEOO").unwrap()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.fidelity(), r(1, 1));
        assert_eq!(p.total(), r(1, 4));
    }

    #[test]
    fn link_two_pairs() {
        let ab = BellDiagonalEnsemble::phi_psi((Party(0), Party(1)), r(7, 8))
            .unwrap()
            .to_ghz();
        let ac = BellDiagonalEnsemble::phi_psi((Party(0), Party(2)), r(7, 8))
            .unwrap()
            .to_ghz();
        let (out, y) = entanglement_link(&ab, &ac, &[Party(0)]).unwrap();
        assert_eq!(y, r(1, 1));
        assert_eq!(fvec(&out), vec![r(49, 64), r(1, 64), r(7, 64), r(7, 64)]);

        let phi = BellDiagonalEnsemble::phi_psi((Party(0), Party(1)), r(1, 1))
            .unwrap()
            .to_ghz();
        let phi2 = BellDiagonalEnsemble::phi_psi((Party(1), Party(2)), r(1, 1))
            .unwrap()
            .to_ghz();
        let (out, _) = entanglement_link(&phi, &phi2, &[Party(1)]).unwrap();
        assert_eq!(out.fidelity(), r(1, 1));
    }

    #[test]
    fn link_rejects_bad_junctions() {
        let ab = GhzDiagonalEnsemble::<Rational>::pure(2).unwrap();
        let cd = ab.with_parties(vec![Party(2), Party(3)]).unwrap();
        assert!(matches!(
            entanglement_link(&ab, &cd, &[Party(0)]),
            Err(Error::Junction(_))
        ));
        assert!(matches!(
            entanglement_link(&ab, &ab, &[Party(0)]),
            Err(Error::Junction(_))
        ));
        assert!(matches!(
            entanglement_link(&ab, &cd, &[]),
            Err(Error::Junction(_))
        ));
    }
}
