//! Polarization registers, sparse real pure states and GHZ/Bell labels.
//!
//! Basis terms are stored as bit patterns: bit `i` of a pattern is the
//! polarization of the photon at register position `i` (0 = H, 1 = V).
//! States never hold zero amplitudes and keep their terms sorted, so two
//! states with equal registers compare equal iff they are the same vector.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Amplitude, Weight};

/// Highest photon count a register may hold (terms are `u64` patterns).
pub const MAX_PHOTONS: usize = 64;

/// A party of the protocol: 0 is Alice, 1 Bob, 2 Charlie, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Party(pub u8);

impl Party {
    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }

    pub fn from_letter(c: char) -> Option<Party> {
        c.is_ascii_uppercase().then(|| Party(c as u8 - b'A'))
    }

    /// The first `n` parties, A, B, C, ...
    pub fn first(n: usize) -> Vec<Party> {
        (0..n as u8).map(Party).collect()
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Writes a party list as letters, e.g. `ABD`.
pub fn party_string(parties: &[Party]) -> String {
    parties.iter().map(|p| p.letter()).collect()
}

/// Parses `ABD` into parties.
pub fn parse_parties(text: &str) -> Option<Vec<Party>> {
    text.trim().chars().map(Party::from_letter).collect()
}

/// Names one photon: the party holding it and which copy it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhotonTag {
    pub party: Party,
    pub copy: u8,
}

impl PhotonTag {
    pub fn new(party: Party, copy: u8) -> Self {
        PhotonTag { party, copy }
    }
}

impl fmt::Display for PhotonTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.party, self.copy)
    }
}

/// Ordered list of distinct photons.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PhotonRegister {
    photons: Vec<PhotonTag>,
}

impl PhotonRegister {
    pub fn new(photons: Vec<PhotonTag>) -> Result<Self> {
        if photons.len() > MAX_PHOTONS {
            return Err(Error::PhotonCount {
                count: photons.len(),
                reason: "registers hold at most 64 photons",
            });
        }
        for (i, t) in photons.iter().enumerate() {
            if photons[..i].contains(t) {
                return Err(Error::DuplicatePhoton(*t));
            }
        }
        Ok(PhotonRegister { photons })
    }

    /// One photon per party, all with the same copy index.
    pub fn copy_of(parties: &[Party], copy: u8) -> Result<Self> {
        Self::new(parties.iter().map(|&p| PhotonTag::new(p, copy)).collect())
    }

    pub fn len(&self) -> usize {
        self.photons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.photons.is_empty()
    }

    pub fn photons(&self) -> &[PhotonTag] {
        &self.photons
    }

    pub fn position(&self, tag: PhotonTag) -> Result<usize> {
        self.photons
            .iter()
            .position(|&t| t == tag)
            .ok_or(Error::UnknownPhoton(tag))
    }

    pub fn contains(&self, tag: PhotonTag) -> bool {
        self.photons.contains(&tag)
    }

    pub fn parties(&self) -> Vec<Party> {
        self.photons.iter().map(|t| t.party).collect()
    }

    fn without(&self, pos: usize) -> PhotonRegister {
        let mut photons = self.photons.clone();
        photons.remove(pos);
        PhotonRegister { photons }
    }
}

impl fmt::Display for PhotonRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.photons {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Computational basis label of a register: one polarization per photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolarizationLabel {
    len: u8,
    bits: u64,
}

impl PolarizationLabel {
    pub fn new(len: usize, bits: u64) -> Self {
        assert!(len <= MAX_PHOTONS);
        let mask = low_mask(len);
        PolarizationLabel {
            len: len as u8,
            bits: bits & mask,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Polarization of photon `i`: false = H, true = V.
    pub fn get(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }
}

impl fmt::Display for PolarizationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", if self.get(i) { 'V' } else { 'H' })?;
        }
        Ok(())
    }
}

impl FromStr for PolarizationLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() > MAX_PHOTONS {
            return Err(Error::PhotonCount {
                count: chars.len(),
                reason: "labels hold at most 64 photons",
            });
        }
        for (i, c) in chars.iter().enumerate() {
            match c {
                'H' | '0' => {}
                'V' | '1' => bits |= 1 << i,
                _ => {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("bad polarization {c:?} in {s:?}"),
                    })
                }
            }
        }
        Ok(PolarizationLabel::new(chars.len(), bits))
    }
}

pub(crate) fn low_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// GHZ basis state `(|m⟩ ± |m̄⟩)/√2` of `n` photons.
///
/// `mask` marks the photons flipped relative to photon 1; only the
/// representative with photon 1 unflipped (bit 0 clear) is storable, which
/// folds `m` and its complement together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GhzLabel {
    n: u8,
    mask: u64,
    sign: Sign,
}

impl GhzLabel {
    pub fn new(n: usize, mask: u64, sign: Sign) -> Result<Self> {
        check_ghz_size(n)?;
        if mask & !low_mask(n) != 0 {
            return Err(Error::NonCanonicalLabel(format!(
                "mask {mask:#b} wider than {n} photons"
            )));
        }
        if mask & 1 == 1 {
            return Err(Error::NonCanonicalLabel(mask_string(n, mask)));
        }
        Ok(GhzLabel {
            n: n as u8,
            mask,
            sign,
        })
    }

    /// Folds any flip pattern into its canonical representative.
    pub fn canonical(n: usize, mask: u64, sign: Sign) -> Result<Self> {
        check_ghz_size(n)?;
        let mask = mask & low_mask(n);
        let mask = if mask & 1 == 1 {
            !mask & low_mask(n)
        } else {
            mask
        };
        GhzLabel::new(n, mask, sign)
    }

    /// `Φ₀⁺` on `n` photons.
    pub fn target(n: usize) -> Result<Self> {
        GhzLabel::new(n, 0, Sign::Plus)
    }

    /// Label reached from `Φ₀⁺` by a bit flip on photon `photon` (1-based);
    /// photon 0 means no flip. This is the `Φᵢ` indexing used for
    /// three-photon ensembles (Φ₁ = VHH, Φ₂ = HVH, Φ₃ = HHV).
    pub fn single_flip(n: usize, photon: usize) -> Result<Self> {
        if photon > n {
            return Err(Error::OutOfRange {
                what: "photon",
                value: photon.to_string(),
                range: "0..=n",
            });
        }
        let mask = if photon == 0 { 0 } else { 1 << (photon - 1) };
        GhzLabel::canonical(n, mask, Sign::Plus)
    }

    /// Binary indexing: `index` read as bits of photons 2..n, most
    /// significant bit on photon 2 (four photons: Φ₁ = HHHV, Φ₄ = HVHH).
    pub fn from_index(n: usize, index: u64, sign: Sign) -> Result<Self> {
        check_ghz_size(n)?;
        if index >> (n - 1) != 0 {
            return Err(Error::OutOfRange {
                what: "GHZ index",
                value: index.to_string(),
                range: "0..2^(n-1)",
            });
        }
        let mut mask = 0;
        for pos in 1..n {
            if index >> (n - 1 - pos) & 1 == 1 {
                mask |= 1 << pos;
            }
        }
        GhzLabel::new(n, mask, sign)
    }

    pub fn index(&self) -> u64 {
        let n = self.n();
        (1..n).fold(0, |acc, pos| acc << 1 | (self.mask >> pos & 1))
    }

    /// Every canonical label with the given sign, by increasing index.
    pub fn all(n: usize, sign: Sign) -> Result<Vec<Self>> {
        check_ghz_size(n)?;
        (0..1u64 << (n - 1))
            .map(|i| GhzLabel::from_index(n, i, sign))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn with_sign(self, sign: Sign) -> Self {
        GhzLabel { sign, ..self }
    }

    /// Polarization of photon `pos` in the `|m⟩` branch.
    pub fn flipped(&self, pos: usize) -> bool {
        self.mask >> pos & 1 == 1
    }

    pub fn mask_string(&self) -> String {
        mask_string(self.n(), self.mask)
    }
}

impl PartialOrd for GhzLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GhzLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.n, self.index(), self.sign).cmp(&(other.n, other.index(), other.sign))
    }
}

fn check_ghz_size(n: usize) -> Result<()> {
    if !(2..=MAX_PHOTONS).contains(&n) {
        return Err(Error::PhotonCount {
            count: n,
            reason: "GHZ states need 2..=64 photons",
        });
    }
    Ok(())
}

fn mask_string(n: usize, mask: u64) -> String {
    (0..n)
        .map(|i| if mask >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

impl fmt::Display for GhzLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.mask_string(), self.sign.symbol())
    }
}

impl FromStr for GhzLabel {
    type Err = Error;

    /// Parses `0011:-`: one 0/1 per photon, then the sign.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            line: 0,
            message: format!("bad GHZ label {s:?}, expected e.g. 010:+"),
        };
        let (mask_text, sign_text) = s.trim().split_once(':').ok_or_else(bad)?;
        let sign = match sign_text {
            "+" => Sign::Plus,
            "-" => Sign::Minus,
            _ => return Err(bad()),
        };
        let mut mask = 0u64;
        for (i, c) in mask_text.chars().enumerate() {
            match c {
                '0' => {}
                '1' => mask |= 1 << i,
                _ => return Err(bad()),
            }
        }
        GhzLabel::new(mask_text.chars().count(), mask, sign)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BellKind {
    Phi,
    Psi,
}

/// One of the four Bell states φ±, ψ±.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BellLabel {
    pub kind: BellKind,
    pub sign: Sign,
}

impl BellLabel {
    pub const PHI_PLUS: BellLabel = BellLabel {
        kind: BellKind::Phi,
        sign: Sign::Plus,
    };
    pub const PHI_MINUS: BellLabel = BellLabel {
        kind: BellKind::Phi,
        sign: Sign::Minus,
    };
    pub const PSI_PLUS: BellLabel = BellLabel {
        kind: BellKind::Psi,
        sign: Sign::Plus,
    };
    pub const PSI_MINUS: BellLabel = BellLabel {
        kind: BellKind::Psi,
        sign: Sign::Minus,
    };

    pub const ALL: [BellLabel; 4] = [
        BellLabel::PHI_PLUS,
        BellLabel::PHI_MINUS,
        BellLabel::PSI_PLUS,
        BellLabel::PSI_MINUS,
    ];

    pub fn to_ghz(self) -> GhzLabel {
        let mask = match self.kind {
            BellKind::Phi => 0,
            BellKind::Psi => 0b10,
        };
        GhzLabel {
            n: 2,
            mask,
            sign: self.sign,
        }
    }

    pub fn from_ghz(label: GhzLabel) -> Option<BellLabel> {
        if label.n() != 2 {
            return None;
        }
        let kind = if label.mask == 0 {
            BellKind::Phi
        } else {
            BellKind::Psi
        };
        Some(BellLabel {
            kind,
            sign: label.sign,
        })
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            BellKind::Phi => "phi",
            BellKind::Psi => "psi",
        };
        write!(f, "{k}{}", self.sign.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    X,
    Z,
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            match self {
                Pauli::X => 'X',
                Pauli::Z => 'Z',
            }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Basis {
    Z,
    X,
}

/// Result of a destructive single-photon measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SingleOutcome {
    H,
    V,
    Plus,
    Minus,
}

impl SingleOutcome {
    /// True for the outcomes that carry a relative minus sign (V and −).
    pub fn is_odd(self) -> bool {
        matches!(self, SingleOutcome::V | SingleOutcome::Minus)
    }
}

impl fmt::Display for SingleOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SingleOutcome::H => "H",
            SingleOutcome::V => "V",
            SingleOutcome::Plus => "+",
            SingleOutcome::Minus => "-",
        };
        f.write_str(s)
    }
}

/// Sparse real superposition over the computational basis of a register.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<A> {
    register: PhotonRegister,
    terms: Vec<(u64, A)>,
}

/// A measurement branch: outcome, its probability, and the post-state.
pub type Branch<O, A> = (O, <A as Amplitude>::Weight, PureState<A>);

impl<A: Amplitude> PureState<A> {
    /// Builds a state from raw terms; duplicate patterns are summed and
    /// zero amplitudes dropped. No normalization is applied.
    pub fn from_terms(register: PhotonRegister, terms: impl IntoIterator<Item = (u64, A)>) -> Self {
        let mask = low_mask(register.len());
        let terms = merge_terms(terms.into_iter().map(|(b, a)| (b & mask, a)).collect());
        PureState { register, terms }
    }

    pub fn basis(register: PhotonRegister, label: PolarizationLabel) -> Result<Self> {
        if label.len() != register.len() {
            return Err(Error::PhotonCount {
                count: label.len(),
                reason: "label length differs from register size",
            });
        }
        Ok(PureState {
            register,
            terms: vec![(label.bits(), A::one())],
        })
    }

    /// `(|m⟩ ± |m̄⟩)/√2` on the given register.
    pub fn ghz(register: PhotonRegister, label: GhzLabel) -> Result<Self> {
        let n = register.len();
        if n != label.n() {
            return Err(Error::PhotonCount {
                count: n,
                reason: "register size differs from GHZ label size",
            });
        }
        let h = A::frac_1_sqrt_2();
        let other = match label.sign {
            Sign::Plus => h.clone(),
            Sign::Minus => -h.clone(),
        };
        let m = label.mask;
        Ok(Self::from_terms(
            register,
            [(m, h), (!m & low_mask(n), other)],
        ))
    }

    pub fn register(&self) -> &PhotonRegister {
        &self.register
    }

    pub fn len(&self) -> usize {
        self.register.len()
    }

    pub fn is_empty(&self) -> bool {
        self.register.is_empty()
    }

    /// Nonzero terms, sorted by pattern.
    pub fn terms(&self) -> &[(u64, A)] {
        &self.terms
    }

    pub fn amplitude(&self, label: PolarizationLabel) -> A {
        self.terms
            .binary_search_by_key(&label.bits(), |t| t.0)
            .map(|i| self.terms[i].1.clone())
            .unwrap_or_else(|_| A::zero())
    }

    /// Sum of squared amplitudes.
    pub fn norm_sqr(&self) -> Result<A::Weight> {
        sum_sqr(self.terms.iter().map(|t| &t.1))
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_sqr()
            .map(|w| w.approx_eq(&A::Weight::one()))
            .unwrap_or(false)
    }

    pub fn position(&self, tag: PhotonTag) -> Result<usize> {
        self.register.position(tag)
    }

    pub fn pauli_x(&self, tag: PhotonTag) -> Result<Self> {
        let bit = 1u64 << self.position(tag)?;
        Ok(Self::from_terms(
            self.register.clone(),
            self.terms.iter().map(|(b, a)| (b ^ bit, a.clone())),
        ))
    }

    pub fn pauli_z(&self, tag: PhotonTag) -> Result<Self> {
        let bit = 1u64 << self.position(tag)?;
        Ok(PureState {
            register: self.register.clone(),
            terms: self
                .terms
                .iter()
                .map(|(b, a)| (*b, if b & bit != 0 { -a.clone() } else { a.clone() }))
                .collect(),
        })
    }

    pub fn apply_pauli(&self, tag: PhotonTag, which: Pauli) -> Result<Self> {
        match which {
            Pauli::X => self.pauli_x(tag),
            Pauli::Z => self.pauli_z(tag),
        }
    }

    /// H → (H+V)/√2, V → (H−V)/√2 on one photon.
    pub fn hadamard(&self, tag: PhotonTag) -> Result<Self> {
        let bit = 1u64 << self.position(tag)?;
        let h = A::frac_1_sqrt_2();
        let mut out = Vec::with_capacity(self.terms.len() * 2);
        for (b, a) in &self.terms {
            let s = a.clone() * h.clone();
            if b & bit == 0 {
                out.push((*b, s.clone()));
                out.push((b | bit, s));
            } else {
                out.push((b & !bit, s.clone()));
                out.push((*b, -s));
            }
        }
        Ok(PureState {
            register: self.register.clone(),
            terms: merge_terms(out),
        })
    }

    /// Flips `target` on every term where `control` is V.
    pub fn cnot(&self, control: PhotonTag, target: PhotonTag) -> Result<Self> {
        if control == target {
            return Err(Error::SamePhoton(control));
        }
        let c = 1u64 << self.position(control)?;
        let t = 1u64 << self.position(target)?;
        Ok(Self::from_terms(
            self.register.clone(),
            self.terms
                .iter()
                .map(|(b, a)| (if b & c != 0 { b ^ t } else { *b }, a.clone())),
        ))
    }

    /// Splits the state by a predicate on basis patterns and renormalizes
    /// each nonempty part. Returns `(key, probability, post-state)` for each
    /// key with nonzero weight, in key order.
    pub(crate) fn split_by<K: Ord + Copy>(
        &self,
        key: impl Fn(u64) -> K,
        register_after: impl Fn(&PhotonRegister) -> PhotonRegister,
        pattern_after: impl Fn(u64) -> u64,
    ) -> Result<Vec<(K, A::Weight, Self)>> {
        let mut groups: Vec<(K, Vec<(u64, A)>)> = Vec::new();
        for (b, a) in &self.terms {
            let k = key(*b);
            match groups.iter_mut().find(|g| g.0 == k) {
                Some(g) => g.1.push((*b, a.clone())),
                None => groups.push((k, vec![(*b, a.clone())])),
            }
        }
        groups.sort_by_key(|g| g.0);
        let reg = register_after(&self.register);
        let mut out = Vec::with_capacity(groups.len());
        for (k, terms) in groups {
            let p = sum_sqr(terms.iter().map(|t| &t.1))?;
            if p.is_zero() {
                continue;
            }
            let scale = rescale_factor::<A>(&p)?;
            let post = PureState::from_terms(
                reg.clone(),
                terms
                    .into_iter()
                    .map(|(b, a)| (pattern_after(b), a * scale.clone())),
            );
            out.push((k, p, post));
        }
        Ok(out)
    }

    /// Destructive measurement of one photon. X is Hadamard followed by Z;
    /// H maps to `+` and V to `−`. Only nonzero-probability branches are
    /// returned; the measured photon leaves the register.
    pub fn measure(&self, tag: PhotonTag, basis: Basis) -> Result<Vec<Branch<SingleOutcome, A>>> {
        let rotated;
        let state = match basis {
            Basis::Z => self,
            Basis::X => {
                rotated = self.hadamard(tag)?;
                &rotated
            }
        };
        let pos = state.position(tag)?;
        let bit = 1u64 << pos;
        let branches =
            state.split_by(|b| b & bit != 0, |r| r.without(pos), |b| remove_bit(b, pos))?;
        Ok(branches
            .into_iter()
            .map(|(v, p, s)| {
                let o = match (basis, v) {
                    (Basis::Z, false) => SingleOutcome::H,
                    (Basis::Z, true) => SingleOutcome::V,
                    (Basis::X, false) => SingleOutcome::Plus,
                    (Basis::X, true) => SingleOutcome::Minus,
                };
                (o, p, s)
            })
            .collect())
    }

    /// Product state; `other`'s photons follow this state's photons.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let mut tags = self.register.photons.clone();
        tags.extend_from_slice(&other.register.photons);
        let register = PhotonRegister::new(tags)?;
        let shift = self.len();
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (b1, a1) in &self.terms {
            for (b2, a2) in &other.terms {
                terms.push((b1 | b2 << shift, a1.clone() * a2.clone()));
            }
        }
        Ok(PureState {
            register,
            terms: merge_terms(terms),
        })
    }

    /// Reorders the register to `order` (a permutation of its photons).
    pub fn reorder(&self, order: &[PhotonTag]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::PhotonCount {
                count: order.len(),
                reason: "reorder needs a permutation of the register",
            });
        }
        let src: Vec<usize> = order
            .iter()
            .map(|&t| self.position(t))
            .collect::<Result<_>>()?;
        let register = PhotonRegister::new(order.to_vec())?;
        Ok(Self::from_terms(
            register,
            self.terms.iter().map(|(b, a)| {
                let nb = src
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (dst, &s)| acc | (b >> s & 1) << dst);
                (nb, a.clone())
            }),
        ))
    }

    /// Replaces photon tags position by position.
    pub fn relabel(&self, tags: Vec<PhotonTag>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(Error::PhotonCount {
                count: tags.len(),
                reason: "relabel needs one tag per photon",
            });
        }
        Ok(PureState {
            register: PhotonRegister::new(tags)?,
            terms: self.terms.clone(),
        })
    }

    /// GHZ label of the state, if it is (up to global sign) a GHZ basis
    /// state of its register in register order.
    pub fn classify_ghz(&self) -> Option<GhzLabel> {
        let n = self.len();
        if n < 2 || self.terms.len() != 2 {
            return None;
        }
        let (b0, a0) = &self.terms[0];
        let (b1, a1) = &self.terms[1];
        if b0 ^ b1 != low_mask(n) {
            return None;
        }
        let half = A::Weight::from_ratio(1, 2);
        let sq = (a0.clone() * a0.clone()).to_weight()?;
        if !sq.approx_eq(&half) {
            return None;
        }
        // Terms are sorted, so b0 has photon 1 = H whenever b0 < b1 and the
        // pattern with bit 0 clear is the canonical one.
        let (m, am, an) = if b0 & 1 == 0 {
            (*b0, a0, a1)
        } else {
            (*b1, a1, a0)
        };
        let sign = if an.close_to(am) {
            Sign::Plus
        } else if an.close_to(&-am.clone()) {
            Sign::Minus
        } else {
            return None;
        };
        GhzLabel::new(n, m, sign).ok()
    }

    pub fn classify_bell(&self) -> Option<BellLabel> {
        if self.len() != 2 {
            return None;
        }
        self.classify_ghz().and_then(BellLabel::from_ghz)
    }
}

/// `Φ` state of the first `n` parties' copy-1 photons.
pub fn make_ghz<A: Amplitude>(n: usize, label: GhzLabel) -> Result<PureState<A>> {
    if n != label.n() {
        return Err(Error::PhotonCount {
            count: n,
            reason: "photon count differs from label size",
        });
    }
    PureState::ghz(PhotonRegister::copy_of(&Party::first(n), 1)?, label)
}

pub fn apply_pauli<A: Amplitude>(
    state: &PureState<A>,
    photon: PhotonTag,
    which: Pauli,
) -> Result<PureState<A>> {
    state.apply_pauli(photon, which)
}

pub fn apply_hadamard<A: Amplitude>(
    state: &PureState<A>,
    photon: PhotonTag,
) -> Result<PureState<A>> {
    state.hadamard(photon)
}

pub fn measure_single<A: Amplitude>(
    state: &PureState<A>,
    photon: PhotonTag,
    basis: Basis,
) -> Result<Vec<Branch<SingleOutcome, A>>> {
    state.measure(photon, basis)
}

pub fn classify_ghz<A: Amplitude>(state: &PureState<A>) -> Option<GhzLabel> {
    state.classify_ghz()
}

pub fn classify_bell<A: Amplitude>(state: &PureState<A>) -> Option<BellLabel> {
    state.classify_bell()
}

pub fn tensor<A: Amplitude>(a: &PureState<A>, b: &PureState<A>) -> Result<PureState<A>> {
    a.tensor(b)
}

fn remove_bit(b: u64, pos: usize) -> u64 {
    let low = b & low_mask(pos);
    let high = if pos + 1 >= 64 { 0 } else { b >> (pos + 1) };
    low | high << pos
}

fn merge_terms<A: Amplitude>(mut terms: Vec<(u64, A)>) -> Vec<(u64, A)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(u64, A)> = Vec::with_capacity(terms.len());
    for (b, a) in terms {
        match out.last_mut() {
            Some(last) if last.0 == b => last.1 = last.1.clone() + a,
            _ => out.push((b, a)),
        }
    }
    out.retain(|t| !t.1.negligible());
    out
}

fn sum_sqr<'a, A: Amplitude>(amps: impl Iterator<Item = &'a A>) -> Result<A::Weight> {
    let s = amps.fold(A::zero(), |acc, a| acc + a.clone() * a.clone());
    s.to_weight().ok_or(Error::IrrationalProbability)
}

fn rescale_factor<A: Amplitude>(p: &A::Weight) -> Result<A> {
    let inv = A::Weight::one() / p.clone();
    A::sqrt_weight(&inv).ok_or_else(|| Error::NotDyadic(p.to_string()))
}

impl<A: Amplitude + fmt::Display> fmt::Display for PureState<A> {
    /// Ket notation, e.g. `1/√2 (|HHH⟩+|VVV⟩)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.len();
        let ket = |b: u64| PolarizationLabel::new(n, b).to_string();
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Kets read left to right as photon 1..n, so sort on the reversed bits.
        let mut terms: Vec<&(u64, A)> = self.terms.iter().collect();
        terms.sort_by_key(|t| t.0.reverse_bits());
        let abs = |a: &A| {
            if a.to_f64() < 0.0 {
                -a.clone()
            } else {
                a.clone()
            }
        };
        let common = abs(&terms[0].1);
        let uniform = terms.iter().all(|t| abs(&t.1).close_to(&common));
        if uniform {
            let mut body = String::new();
            for (i, (b, a)) in terms.iter().enumerate() {
                let neg = a.to_f64() < 0.0;
                if i > 0 || neg {
                    body.push(if neg { '−' } else { '+' });
                }
                body.push_str(&format!("|{}⟩", ket(*b)));
            }
            if common.close_to(&A::one()) {
                write!(f, "{body}")
            } else if terms.len() == 1 {
                write!(f, "{common} {body}")
            } else {
                write!(f, "{common} ({body})")
            }
        } else {
            for (i, (b, a)) in terms.iter().enumerate() {
                if i > 0 {
                    write!(f, " + ")?;
                }
                write!(f, "({a})|{}⟩", ket(*b))?;
            }
            Ok(())
        }
    }
}
