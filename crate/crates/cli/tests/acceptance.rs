//! Acceptance gate. Prints one PASS/FAIL line per criterion, with the time
//! it took against its budget, and exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ghz_purify::analytics::{
    conventional_round, entanglement_link, phase_round, recycle_pair_tables, yields_and_fidelities,
};
use ghz_purify::engine::{
    enumerate_curve, phaseflip_paths, run_conventional_bitflip, run_link, run_phaseflip,
    run_recycling, EngineOptions, Exhaustive, PhaseFlipCorrections,
};
use ghz_purify::ensemble::{
    BellDiagonalEnsemble, GhzDiagonalEnsemble, PhaseEnsemble, SymmetricNoiseParams,
};
use ghz_purify::montecarlo::{analytic_stats, mc_sweep, McEstimate, McInput, PipelineKind};
use ghz_purify::qnd::{parity_project, parity_via_cnot};
use ghz_purify::register::{
    BellLabel, GhzLabel, Party, PhotonRegister, PhotonTag, PureState, Sign,
};
use ghz_purify::scalar::{format_significant, ratio, QSqrt2, Rational};
use ghz_purify_cli::{cmd_curves, Engine, ScenarioConfig, Sweep};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn sq(x: &Rational) -> Rational {
    x.clone() * x.clone()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `F₀ ∈ {1/4, 3/10, …, 1}`.
fn curve_grid() -> Vec<Rational> {
    (5..=20).map(|k| ratio(k, 20)).collect()
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<Rational> {
    loop {
        let raw: Vec<i64> = (0..len).map(|_| rng.gen_range(0..12)).collect();
        let total: i64 = raw.iter().sum();
        if total > 0 {
            return raw.into_iter().map(|k| ratio(k, total)).collect();
        }
    }
}

/// Symmetric and asymmetric three-photon ensembles.
fn ensemble_grid() -> Vec<GhzDiagonalEnsemble<Rational>> {
    let mut out: Vec<_> = (0..=8)
        .map(|k| GhzDiagonalEnsemble::symmetric(3, &ratio(k, 8)).unwrap())
        .collect();
    let fixed = [
        [4, 3, 2, 1],
        [1, 2, 3, 4],
        [5, 0, 5, 0],
        [7, 1, 1, 1],
        [1, 0, 0, 0],
        [0, 1, 0, 0],
    ];
    for f in fixed {
        let total: i64 = f.iter().sum();
        let f: Vec<Rational> = f.iter().map(|&k| ratio(k, total)).collect();
        out.push(GhzDiagonalEnsemble::from_fidelities(3, &f).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        out.push(GhzDiagonalEnsemble::from_fidelities(3, &random_vector(&mut rng, 4)).unwrap());
    }
    out
}

fn yield_curves() -> Check {
    let cfg = ScenarioConfig {
        sweep: Some(Sweep::default()),
        engines: vec![Engine::Analytic],
        ..Default::default()
    };
    let mut csv = Vec::new();
    cmd_curves(&cfg, &mut csv).map_err(err)?;
    let text = String::from_utf8(csv).map_err(err)?;
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let grid = curve_grid();
    ensure(rows.len() == grid.len(), || format!("{} rows", rows.len()))?;
    let (one, two, three, four) = (Rational::one(), ratio(2, 1), ratio(3, 1), ratio(4, 1));
    for (f0, row) in grid.iter().zip(&rows) {
        let c = yields_and_fidelities(&SymmetricNoiseParams::new(f0.clone()).map_err(err)?);
        let y_c = (one.clone() - two.clone() * f0.clone() + four.clone() * sq(f0)) / three.clone();
        let y_23 = (one.clone() + f0.clone() - two.clone() * sq(f0)) / three.clone();
        let y_e = (two.clone() - f0.clone() + two.clone() * sq(f0)) / three.clone();
        ensure(c.y_c == y_c && c.y_2to3 == y_23 && c.y_e == y_e, || {
            format!("yields at F0={f0}")
        })?;
        let cells: Vec<&str> = row.split(',').collect();
        let expect = [f0, &y_c, &y_23, &y_e].map(|v| format_significant(v, 12));
        ensure(
            cells[..4] == expect.iter().map(String::as_str).collect::<Vec<_>>()[..],
            || format!("CSV row {row} does not render {expect:?}"),
        )?;
    }
    let at = |f0: Rational| yields_and_fidelities(&SymmetricNoiseParams::new(f0).unwrap());
    ensure(at(ratio(1, 2)).y_c == ratio(1, 3), || "Y_c(0.5)".into())?;
    ensure(at(ratio(1, 2)).y_e == ratio(2, 3), || "Y_e(0.5)".into())?;
    ensure(at(one).y_e.is_one(), || "Y_e(1)".into())
}

fn fidelity_curves() -> Check {
    let c = yields_and_fidelities(&SymmetricNoiseParams::new(ratio(1, 2)).map_err(err)?);
    ensure(c.f_c == ratio(3, 4), || format!("F_c(0.5) = {}", c.f_c))?;
    ensure(c.f_2 == ratio(3, 4), || format!("F_2(0.5) = {}", c.f_2))?;
    ensure(c.f_2to3 == ratio(9, 16), || {
        format!("F_2to3(0.5) = {}", c.f_2to3)
    })?;
    ensure(c.f_e == ratio(21, 32), || format!("F_e(0.5) = {}", c.f_e))?;
    let half = ratio(1, 2);
    let quarter = ratio(1, 4);
    for f0 in curve_grid() {
        let c = yields_and_fidelities(&SymmetricNoiseParams::new(f0.clone()).map_err(err)?);
        if f0 < half {
            ensure(c.f_2 > c.f_c, || format!("F_2 > F_c fails at {f0}"))?;
        }
        if f0 > half && f0 < Rational::one() {
            ensure(c.f_2 < c.f_c, || format!("F_2 < F_c fails at {f0}"))?;
        }
        if f0 > quarter && f0 < Rational::one() {
            ensure(c.f_2to3 < c.f_c, || format!("F_2to3 < F_c fails at {f0}"))?;
            ensure(c.f_2to3 > f0 && c.f_c > f0, || {
                format!("improvement fails at {f0}")
            })?;
        }
        if f0 > quarter {
            let e = enumerate_curve(&SymmetricNoiseParams::new(f0.clone()).map_err(err)?)
                .map_err(err)?;
            ensure(e.f_c == c.f_c && e.f_e == c.f_e && e.y_e == c.y_e, || {
                format!("enumerated curve differs at {f0}")
            })?;
        }
    }
    Ok(())
}

fn conventional_oracle() -> Check {
    let grid = ensemble_grid();
    ensure(grid.len() >= 20, || "grid too small".into())?;
    for e in &grid {
        let rep = run_conventional_bitflip(e).map_err(err)?;
        let (out, y) = conventional_round(e).map_err(err)?;
        ensure(rep.kept == y, || {
            format!("yield differs for {}", e.to_text())
        })?;
        if !y.is_zero() {
            ensure(rep.output == out, || {
                format!("output differs for {}", e.to_text())
            })?;
        }
    }
    let f = [ratio(2, 5), ratio(3, 10), ratio(1, 5), ratio(1, 10)];
    let e = GhzDiagonalEnsemble::from_fidelities(3, &f).map_err(err)?;
    let f0 = run_conventional_bitflip(&e).map_err(err)?.output.fidelity();
    ensure(f0 == ratio(8, 15), || format!("F0' = {f0}"))
}

fn thresholds() -> Check {
    let quarter = ratio(1, 4);
    for k in 2..=15 {
        let f0 = ratio(k, 16);
        let e = GhzDiagonalEnsemble::symmetric(3, &f0).map_err(err)?;
        let conv = run_conventional_bitflip(&e).map_err(err)?.output.fidelity();
        let (analytic, _) = conventional_round(&e).map_err(err)?;
        ensure(analytic.fidelity() == conv, || {
            format!("F0' engines differ at {f0}")
        })?;
        let link = enumerate_curve(&SymmetricNoiseParams::new(f0.clone()).map_err(err)?)
            .map_err(err)?
            .f_2to3
            .ok_or("no recycled pairs")?;
        let ft = yields_and_fidelities(&SymmetricNoiseParams::new(f0.clone()).map_err(err)?).f_2to3;
        ensure(link == ft, || format!("Ft0 engines differ at {f0}"))?;
        let ord = f0.cmp(&quarter);
        ensure(conv.cmp(&f0) == ord, || {
            format!("F0' = {conv} vs F0 = {f0}")
        })?;
        ensure(ft.cmp(&f0) == ord, || format!("Ft0 = {ft} vs F0 = {f0}"))?;

        let p0 = ratio(k, 16);
        let rep = run_phaseflip(&PhaseEnsemble::new(p0.clone()).map_err(err)?, 3).map_err(err)?;
        let (p, _) = phase_round(&PhaseEnsemble::new(p0.clone()).map_err(err)?).map_err(err)?;
        ensure(rep.output.fidelity() == p.p0, || {
            format!("p0' engines differ at {p0}")
        })?;
        ensure(p.p0.cmp(&p0) == p0.cmp(&ratio(1, 2)), || {
            format!("p0' = {} vs p0 = {p0}", p.p0)
        })?;
    }
    Ok(())
}

fn recycling_balance() -> Check {
    for e in ensemble_grid() {
        let rep = run_recycling(&e).map_err(err)?;
        let tables = recycle_pair_tables(&e).map_err(err)?;
        let enumerated = rep.pair_tables().map_err(err)?;
        ensure(enumerated == tables, || {
            format!("pair tables differ for {}", e.to_text())
        })?;
        let sum_sq: Rational = e.iter().map(|(_, w)| sq(w)).sum();
        ensure(tables.total() == Rational::one() - sum_sq, || {
            format!("mass balance for {}", e.to_text())
        })?;
        ensure(rep.total_probability().is_one(), || {
            "branch probabilities".into()
        })?;
    }
    let f = [ratio(2, 5), ratio(3, 10), ratio(1, 5), ratio(1, 10)];
    let t = recycle_pair_tables(&GhzDiagonalEnsemble::from_fidelities(3, &f).map_err(err)?)
        .map_err(err)?;
    let w = |b: &BellDiagonalEnsemble<Rational>, l| b.weight(l);
    let got = [
        w(&t.ab, BellLabel::PHI_PLUS),
        w(&t.ab, BellLabel::PSI_PLUS),
        w(&t.ac, BellLabel::PHI_PLUS),
        w(&t.ac, BellLabel::PSI_PLUS),
        w(&t.bc, BellLabel::PHI_PLUS),
        w(&t.bc, BellLabel::PSI_PLUS),
    ];
    let want = [(2, 25), (3, 25), (4, 25), (3, 50), (6, 25), (1, 25)].map(|(p, q)| ratio(p, q));
    ensure(got == want, || {
        format!("table for (0.4, 0.3, 0.2, 0.1): {got:?}")
    })
}

fn link_case(
    a: &GhzDiagonalEnsemble<Rational>,
    b: &GhzDiagonalEnsemble<Rational>,
    j: &[Party],
) -> Result<GhzDiagonalEnsemble<Rational>, String> {
    let rep = run_link(a, b, j).map_err(err)?;
    let (out, y) = entanglement_link(a, b, j).map_err(err)?;
    ensure(rep.kept == y, || format!("link yield {} vs {y}", rep.kept))?;
    ensure(rep.output == out, || {
        "link output differs from enumeration".into()
    })?;
    ensure(rep.total_probability().is_one(), || {
        "link branch probabilities".into()
    })?;
    ensure(out.is_normalized(), || "link output not normalized".into())?;
    Ok(out)
}

fn relabel(e: &GhzDiagonalEnsemble<Rational>, parties: &[u8]) -> GhzDiagonalEnsemble<Rational> {
    e.with_parties(parties.iter().map(|&p| Party(p)).collect())
        .unwrap()
}

fn link_formulas() -> Check {
    let pair = |x: u8, y: u8, f: Rational| {
        BellDiagonalEnsemble::phi_psi((Party(x), Party(y)), f)
            .unwrap()
            .to_ghz()
    };
    let out = link_case(
        &pair(0, 1, ratio(7, 8)),
        &pair(0, 2, ratio(7, 8)),
        &[Party(0)],
    )?;
    let f: Vec<Rational> = (0..4).map(|i| out.fidelity_at(i).unwrap()).collect();
    let want = [(49, 64), (1, 64), (7, 64), (7, 64)].map(|(p, q)| ratio(p, q));
    ensure(f == want, || format!("pair link gives {f:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let j = |p: u8| vec![Party(p)];
    for _ in 0..4 {
        let three =
            GhzDiagonalEnsemble::from_fidelities(3, &random_vector(&mut rng, 4)).map_err(err)?;
        let other =
            GhzDiagonalEnsemble::from_fidelities(3, &random_vector(&mut rng, 4)).map_err(err)?;
        let two = |rng: &mut ChaCha8Rng, x, y| pair(x, y, ratio(rng.gen_range(0..=8), 8));

        // three-photon ABC with a pair AD
        let out = link_case(&three, &two(&mut rng, 0, 3), &j(0))?;
        ensure(out.n() == 4, || "3+2 output size".into())?;

        // three-photon ABC with three-photon ABD, junctions in both orders
        let abd = relabel(&other, &[0, 1, 3]);
        let ab = link_case(&three, &abd, &[Party(0), Party(1)])?;
        let ba = link_case(&three, &abd, &[Party(1), Party(0)])?;
        ensure(ab.n() == 4 && ab == ba, || {
            "3+3 junction order changes the output".into()
        })?;

        // three pairs as a chain AB-BC-CD and as a star AB, AC, AD
        let (p1, p2, p3) = (
            two(&mut rng, 0, 1),
            two(&mut rng, 1, 2),
            two(&mut rng, 2, 3),
        );
        let abc = link_case(&p1, &p2, &j(1))?;
        let chain = link_case(&abc, &p3, &j(2))?;
        let (q2, q3) = (relabel(&p2, &[0, 2]), relabel(&p3, &[0, 3]));
        let abc = link_case(&p1, &q2, &j(0))?;
        let star = link_case(&abc, &q3, &j(0))?;
        ensure(chain.n() == 4 && star.n() == 4, || {
            "2+2+2 output size".into()
        })?;
    }
    Ok(())
}

fn phase_flip() -> Check {
    for n in [3, 4] {
        for k in 0..=10 {
            let p0 = ratio(k, 10);
            let p1 = Rational::one() - p0.clone();
            let rep =
                run_phaseflip(&PhaseEnsemble::new(p0.clone()).map_err(err)?, n).map_err(err)?;
            let y = sq(&p0) + sq(&p1);
            ensure(rep.kept == y, || format!("yield at n={n}, p0={p0}"))?;
            ensure(rep.output.fidelity() == sq(&p0) / y, || {
                format!("p0' at n={n}, p0={p0}")
            })?;
        }
        let corrections = PhaseFlipCorrections::standard(n);
        for (s1, s2) in [(Sign::Plus, Sign::Minus), (Sign::Minus, Sign::Plus)] {
            let log = phaseflip_paths::<QSqrt2>(
                n,
                s1,
                s2,
                Rational::one(),
                &corrections,
                &EngineOptions::default(),
                &mut Exhaustive,
            )
            .map_err(err)?;
            ensure(!log.is_empty(), || "no cross-term branches".into())?;
            for b in &log {
                let odd = b.pattern.iter().filter(|p| p.is_odd()).count();
                ensure(odd % 2 == 1, || {
                    format!("cross-term branch with {odd} odd parities: {b}")
                })?;
            }
        }
    }
    Ok(())
}

fn four_photon_patterns() -> Check {
    let mut vectors = vec![vec![ratio(1, 8); 8]];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    vectors.extend((0..10).map(|_| random_vector(&mut rng, 8)));
    for f in vectors {
        let e = GhzDiagonalEnsemble::from_fidelities(4, &f).map_err(err)?;
        let rep = run_recycling(&e).map_err(err)?;
        let prod = |i: usize, j: usize| f[i].clone() * f[j].clone();
        let triple = rep.by_pattern.get("EEEO").ok_or("no EEEO sub-ensemble")?;
        ensure(triple.parties() == Party::first(3), || {
            "EEEO parties".into()
        })?;
        for i in 0..4 {
            let label = GhzLabel::from_index(3, i as u64, Sign::Plus).map_err(err)?;
            ensure(triple.weight(&label) == prod(2 * i, 2 * i + 1), || {
                format!("EEEO weight {i}")
            })?;
        }
        let pair = rep.by_pattern.get("EEOO").ok_or("no EEOO sub-ensemble")?;
        ensure(pair.parties() == Party::first(2), || "EEOO parties".into())?;
        ensure(
            pair.fidelity_at(0).map_err(err)? == prod(0, 3) + prod(1, 2),
            || "EEOO f0".into(),
        )?;
        ensure(
            pair.fidelity_at(1).map_err(err)? == prod(4, 7) + prod(5, 6),
            || "EEOO f1".into(),
        )?;
    }
    Ok(())
}

fn qnd_matches_cnot() -> Check {
    let parties = Party::first(3);
    for i in 0..4 {
        for j in 0..4 {
            let li = GhzLabel::from_index(3, i, Sign::Plus).map_err(err)?;
            let lj = GhzLabel::from_index(3, j, Sign::Plus).map_err(err)?;
            let a =
                PureState::<QSqrt2>::ghz(PhotonRegister::copy_of(&parties, 1).map_err(err)?, li)
                    .map_err(err)?;
            let b =
                PureState::<QSqrt2>::ghz(PhotonRegister::copy_of(&parties, 2).map_err(err)?, lj)
                    .map_err(err)?;
            let s = a.tensor(&b).map_err(err)?;
            for &p in &parties {
                let (t1, t2) = (PhotonTag::new(p, 1), PhotonTag::new(p, 2));
                let dist = |branches: Vec<(_, Rational, _)>| {
                    let mut m: BTreeMap<String, Rational> = BTreeMap::new();
                    for (o, w, _) in branches {
                        *m.entry(format!("{o:?}")).or_insert_with(Rational::zero) += w;
                    }
                    m
                };
                let q = dist(parity_project(&s, t1, t2).map_err(err)?);
                let c = dist(parity_via_cnot(&s, t1, t2).map_err(err)?);
                ensure(q == c, || {
                    format!("Φ{i}⊗Φ{j} at {}: {q:?} vs {c:?}", p.letter())
                })?;
            }
        }
    }
    Ok(())
}

fn bits(estimates: &[McEstimate]) -> Vec<(String, u64, u64, u64)> {
    estimates
        .iter()
        .flat_map(|e| {
            e.stats.iter().map(|s| {
                (
                    s.name.clone(),
                    s.value.to_bits(),
                    s.stderr.to_bits(),
                    s.count,
                )
            })
        })
        .collect()
}

fn monte_carlo() -> Check {
    let grid: Vec<Rational> = [3, 9, 12, 15, 18].iter().map(|&k| ratio(k, 20)).collect();
    let (trials, seed) = (100_000, 2011);
    let mut total = 0usize;
    let mut beyond = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for kind in PipelineKind::ALL {
        let estimates = mc_sweep(&grid, kind, 3, trials, seed).map_err(err)?;
        for (f0, est) in grid.iter().zip(&estimates) {
            let exact =
                analytic_stats(&McInput::at_grid_point(kind, f0, 3).map_err(err)?).map_err(err)?;
            for d in est.compare(&exact) {
                total += 1;
                if d.sigmas > 3.0 {
                    beyond.push(format!("{kind} F0={f0} {} {:.2}σ", d.name, d.sigmas));
                }
            }
        }
        first.extend(bits(&estimates));
        second.extend(bits(&mc_sweep(&grid, kind, 3, trials, seed).map_err(err)?));
    }
    ensure(first == second, || {
        "rerun with the same seed differs".into()
    })?;
    let limit = total / 100;
    println!(
        "      {} of {total} statistics beyond 3σ (limit {limit}) {beyond:?}",
        beyond.len()
    );
    ensure(beyond.len() <= limit, || {
        format!("{} of {total} beyond 3σ: {beyond:?}", beyond.len())
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("yield curves", Duration::from_secs(1), yield_curves),
        ("fidelity curves", Duration::from_secs(1), fidelity_curves),
        (
            "conventional round oracle",
            Duration::from_secs(10),
            conventional_oracle,
        ),
        (
            "thresholds and fixed points",
            Duration::from_secs(1),
            thresholds,
        ),
        (
            "recycling mass balance",
            Duration::from_secs(10),
            recycling_balance,
        ),
        (
            "link formulas and topologies",
            Duration::from_secs(30),
            link_formulas,
        ),
        ("phase-flip round", Duration::from_secs(10), phase_flip),
        (
            "four-photon recycling",
            Duration::from_secs(30),
            four_photon_patterns,
        ),
        (
            "parity check vs CNOT",
            Duration::from_secs(5),
            qnd_matches_cnot,
        ),
        (
            "Monte Carlo consistency",
            Duration::from_secs(120),
            monte_carlo,
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let outcome = match result {
            Ok(()) if took <= budget => Ok(()),
            Ok(()) => Err(format!("took longer than {budget:?}")),
            Err(e) => Err(e),
        };
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({took:.2?} of {budget:?})", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({took:.2?} of {budget:?}): {e}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
