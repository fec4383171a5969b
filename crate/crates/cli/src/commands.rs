use std::collections::BTreeMap;
use std::io::Write;

use ghz_purify::analytics::yields_and_fidelities;
use ghz_purify::engine::{
    explain_cross, run_conventional_bitflip, run_link, run_phaseflip, run_recycling, BranchRecord,
    Fate,
};
use ghz_purify::ensemble::{
    channel_to_ensemble, fidelity_label, BellDiagonalEnsemble, GhzDiagonalEnsemble, PhaseEnsemble,
    SymmetricNoiseParams,
};
use ghz_purify::montecarlo::{
    analytic_stats, enumerated_stats, mc_run, point_seed, McConfig, McEstimate, McInput, McStat,
    PipelineKind,
};
use ghz_purify::register::{BellLabel, GhzLabel, Party};
use ghz_purify::scalar::{format_significant, Rational};
use num_traits::{FromPrimitive, One, Zero};

use crate::config::{Engine, InputSpec, ScenarioConfig};
use crate::error::CliError;

/// Header of the curve CSV.
pub const CURVE_HEADER: [&str; 8] = ["F0", "Y_c", "Y_2to3", "Y_e", "F_c", "F_2", "F_2to3", "F_e"];
/// Significant digits of every CSV value.
pub const CSV_DIGITS: usize = 12;
/// Monte Carlo estimates further than this many standard errors from the
/// exact value fail `run` and `mc`.
pub const MC_SIGMA_GATE: f64 = 4.0;

/// Whether the engines agreed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Agree,
    Disagree(Vec<String>),
}

impl Verdict {
    fn from_problems(problems: Vec<String>) -> Self {
        if problems.is_empty() {
            Verdict::Agree
        } else {
            Verdict::Disagree(problems)
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Verdict::Agree => 0,
            Verdict::Disagree(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Short decimal form: 12 significant digits with trailing zeros removed.
pub fn decimal(v: &Rational) -> String {
    let s = format_significant(v, CSV_DIGITS);
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

fn float_cell(v: f64) -> String {
    match Rational::from_f64(v) {
        Some(r) if v.is_finite() => format_significant(&r, CSV_DIGITS),
        _ => "nan".to_string(),
    }
}

/// Bit-flip ensemble described by `noise` on `n` photons.
pub fn bitflip_ensemble(
    n: usize,
    noise: &InputSpec,
) -> Result<GhzDiagonalEnsemble<Rational>, CliError> {
    Ok(match noise {
        InputSpec::Symmetric(f0) => GhzDiagonalEnsemble::symmetric(n, f0)?,
        InputSpec::Fidelities(f) => GhzDiagonalEnsemble::from_fidelities(n, f)?,
        InputSpec::Channel { p, q } => channel_to_ensemble(n, p, q)?.0,
        InputSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            GhzDiagonalEnsemble::parse_text(&text)?
        }
        InputSpec::Phase(_) => {
            return Err(usage(
                "p0 describes phase noise; bit-flip protocols need f0, f, p or ensemble",
            ))
        }
    })
}

fn phase_ensemble(n: usize, noise: &InputSpec) -> Result<PhaseEnsemble<Rational>, CliError> {
    Ok(match noise {
        InputSpec::Phase(p0) | InputSpec::Symmetric(p0) => PhaseEnsemble::new(p0.clone())?,
        InputSpec::Channel { p, q } => channel_to_ensemble(n, p, q)?.1,
        InputSpec::Fidelities(f) if f.len() == 2 => {
            PhaseEnsemble::from_pair(f[0].clone(), f[1].clone())?
        }
        _ => return Err(usage("phase-flip input needs p0, f0, q or a two-entry f")),
    })
}

/// Two inputs and the junction of a link scenario. A symmetric `f0` or a
/// two-entry `f` describes Bell pairs joined as AB and AC at A; any other
/// ensemble is linked with a copy of itself at A.
pub fn link_input(n: usize, noise: &InputSpec) -> Result<McInput, CliError> {
    let junctions = vec![Party(0)];
    let pair = |phi: &Rational, psi: &Rational| -> Result<McInput, CliError> {
        let make = |other: u8| -> Result<GhzDiagonalEnsemble<Rational>, CliError> {
            let weights = [
                (BellLabel::PHI_PLUS, phi.clone()),
                (BellLabel::PSI_PLUS, psi.clone()),
            ];
            let e = BellDiagonalEnsemble::new((Party(0), Party(other)), weights)?.to_ghz();
            e.require_normalized()?;
            Ok(e)
        };
        Ok(McInput::Link {
            a: make(1)?,
            b: make(2)?,
            junctions: vec![Party(0)],
        })
    };
    match noise {
        InputSpec::Symmetric(f0) => pair(f0, &(Rational::one() - f0.clone())),
        InputSpec::Fidelities(f) if f.len() == 2 => pair(&f[0], &f[1]),
        other => {
            let a = bitflip_ensemble(n, other)?;
            let k = a.n() as u8;
            let parties: Vec<Party> = std::iter::once(Party(0))
                .chain((k..2 * k - 1).map(Party))
                .collect();
            let b = a.with_parties(parties)?;
            Ok(McInput::Link { a, b, junctions })
        }
    }
}

/// The pipeline input of a scenario, optionally at a sweep point.
pub fn resolve_input(cfg: &ScenarioConfig, noise: Option<&InputSpec>) -> Result<McInput, CliError> {
    let noise = noise.ok_or_else(|| usage("no input given (set f0, f, p/q, p0 or ensemble)"))?;
    Ok(match cfg.protocol {
        PipelineKind::Conventional => McInput::Conventional(bitflip_ensemble(cfg.n, noise)?),
        PipelineKind::Recycling => McInput::Recycling(bitflip_ensemble(cfg.n, noise)?),
        PipelineKind::Link => link_input(cfg.n, noise)?,
        PipelineKind::PhaseFlip => McInput::PhaseFlip {
            phase: phase_ensemble(cfg.n, noise)?,
            n: cfg.n,
        },
        PipelineKind::FullMepp => match noise {
            InputSpec::Symmetric(f0) => McInput::FullMepp(SymmetricNoiseParams::new(f0.clone())?),
            _ => return Err(usage("the full scheme takes symmetric noise (f0)")),
        },
    })
}

/// Scenario points: the sweep grid, or the single configured input.
fn points(cfg: &ScenarioConfig) -> Vec<Option<InputSpec>> {
    match &cfg.sweep {
        Some(s) => s
            .grid()
            .into_iter()
            .map(|f| Some(InputSpec::Symmetric(f)))
            .collect(),
        None => vec![cfg.input.clone()],
    }
}

fn f0_of(noise: Option<&InputSpec>) -> Option<&Rational> {
    match noise {
        Some(InputSpec::Symmetric(f0)) => Some(f0),
        _ => None,
    }
}

/// Names whose exact values differ between two stat lists; absent names
/// count as zero.
fn exact_mismatches(a: &[(String, Rational)], b: &[(String, Rational)]) -> Vec<String> {
    let left: BTreeMap<_, _> = a.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let right: BTreeMap<_, _> = b.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let zero = Rational::zero();
    let mut names: Vec<&str> = left.keys().chain(right.keys()).copied().collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter_map(|k| {
            let x = left.get(k).copied().unwrap_or(&zero);
            let y = right.get(k).copied().unwrap_or(&zero);
            (x != y).then(|| format!("{k}: analytic {x}, enumerate {y}"))
        })
        .collect()
}

fn mc_outliers(est: &McEstimate, exact: &[(String, Rational)]) -> Vec<String> {
    est.compare(exact)
        .into_iter()
        .filter(|d| d.sigmas > MC_SIGMA_GATE)
        .map(|d| {
            format!(
                "{}: montecarlo {} ± {} vs exact {} ({:.1}σ)",
                d.name, d.value, d.stderr, d.expected, d.sigmas
            )
        })
        .collect()
}

/// Fidelity vector `(F₀, F₁, …)` over the `+` labels of `p_<label>` stats.
fn fidelity_vector(stats: &[(String, Rational)]) -> Option<Vec<Rational>> {
    let labels: Vec<(GhzLabel, &Rational)> = stats
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix("p_")?.parse().ok()?, v)))
        .collect();
    let n = labels.first()?.0.n();
    let vector = (0..1usize << (n - 1))
        .map(|i| {
            let want = fidelity_label(n, i).expect("label index in range");
            labels
                .iter()
                .find(|(l, _)| *l == want)
                .map(|(_, v)| (*v).clone())
                .unwrap_or_else(Rational::zero)
        })
        .collect();
    Some(vector)
}

fn describe(noise: Option<&InputSpec>) -> String {
    match noise {
        None => "none".into(),
        Some(InputSpec::Symmetric(f0)) => format!("f0={f0}"),
        Some(InputSpec::Fidelities(f)) => format!(
            "f=({})",
            f.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Some(InputSpec::Channel { p, q }) => format!("p={p} q={q}"),
        Some(InputSpec::File(path)) => format!("ensemble={}", path.display()),
        Some(InputSpec::Phase(p0)) => format!("p0={p0}"),
    }
}

fn write_exact(
    out: &mut dyn Write,
    engine: Engine,
    stats: &[(String, Rational)],
) -> Result<(), CliError> {
    for (name, v) in stats {
        writeln!(out, "  {:<10} {name} = {v} ({})", engine.name(), decimal(v))?;
    }
    if let Some(f) = fidelity_vector(stats) {
        let text: Vec<String> = f.iter().map(decimal).collect();
        writeln!(
            out,
            "  {:<10} fidelities = ({})",
            engine.name(),
            text.join(", ")
        )?;
    }
    Ok(())
}

/// Runs every requested engine at every scenario point and cross-checks
/// them: analytic and enumeration must agree exactly, Monte Carlo within
/// [`MC_SIGMA_GATE`] standard errors.
pub fn cmd_run(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<Verdict, CliError> {
    cfg.validate()?;
    let mut problems = Vec::new();
    for (i, noise) in points(cfg).iter().enumerate() {
        let input = resolve_input(cfg, noise.as_ref())?;
        writeln!(
            out,
            "{} n={} {}",
            cfg.protocol,
            cfg.n,
            describe(noise.as_ref())
        )?;
        let exact = analytic_stats(&input)?;
        let mut point_problems = Vec::new();
        if cfg.engines.contains(&Engine::Analytic) {
            write_exact(out, Engine::Analytic, &exact)?;
        }
        if cfg.engines.contains(&Engine::Enumerate) {
            let enumerated = enumerated_stats(&input)?;
            write_exact(out, Engine::Enumerate, &enumerated)?;
            point_problems.extend(exact_mismatches(&exact, &enumerated));
        }
        if cfg.engines.contains(&Engine::MonteCarlo) {
            let est = mc_run(&McConfig {
                trials: cfg.trials,
                seed: point_seed(cfg.seed, i),
                input,
            })?;
            for s in &est.stats {
                writeln!(
                    out,
                    "  {:<10} {} = {:.6} ± {:.6} (n={})",
                    Engine::MonteCarlo,
                    s.name,
                    s.value,
                    s.stderr,
                    s.count
                )?;
            }
            writeln!(
                out,
                "  {:<10} trials={} seed={} rng={}",
                Engine::MonteCarlo,
                est.trials,
                est.seed,
                est.rng
            )?;
            point_problems.extend(mc_outliers(&est, &exact));
        }
        if point_problems.is_empty() {
            writeln!(out, "  agreement: ok")?;
        } else {
            for p in &point_problems {
                writeln!(out, "  MISMATCH {p}")?;
            }
        }
        problems.extend(point_problems);
    }
    Ok(Verdict::from_problems(problems))
}

/// Writes the yield and fidelity curves of the three-photon scheme over
/// the sweep grid. With the enumeration engine selected every row is also
/// rebuilt from branch enumeration and compared exactly; with Monte Carlo
/// selected the sampled estimates follow as `mc_*` and `stderr_*` columns.
pub fn cmd_curves(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<Verdict, CliError> {
    cfg.validate()?;
    let grid = cfg.sweep.clone().unwrap_or_default().grid();
    let with_mc = cfg.engines.contains(&Engine::MonteCarlo);
    let mut csv = csv::Writer::from_writer(out);
    let mut header: Vec<String> = CURVE_HEADER.iter().map(|s| s.to_string()).collect();
    if with_mc {
        header.extend(CURVE_HEADER[1..].iter().map(|k| format!("mc_{k}")));
        header.extend(CURVE_HEADER[1..].iter().map(|k| format!("stderr_{k}")));
    }
    csv.write_record(&header)?;
    let mut problems = Vec::new();
    for (i, f0) in grid.iter().enumerate() {
        let params = SymmetricNoiseParams::new(f0.clone())?;
        let c = yields_and_fidelities(&params);
        let mut row = vec![format_significant(f0, CSV_DIGITS)];
        row.extend(
            c.columns()
                .iter()
                .map(|(_, v)| format_significant(v, CSV_DIGITS)),
        );
        if with_mc {
            let input = McInput::FullMepp(params.clone());
            let exact = analytic_stats(&input)?;
            let est = mc_run(&McConfig {
                trials: cfg.trials,
                seed: point_seed(cfg.seed, i),
                input,
            })?;
            problems.extend(
                mc_outliers(&est, &exact)
                    .into_iter()
                    .map(|p| format!("F0={f0}: {p}")),
            );
            for pick in [|s: &McStat| s.value, |s: &McStat| s.stderr] {
                row.extend(CURVE_HEADER[1..].iter().map(|k| {
                    est.stat(k)
                        .map(|s| float_cell(pick(s)))
                        .unwrap_or_else(|| "nan".into())
                }));
            }
        }
        csv.write_record(&row)?;
        if cfg.engines.contains(&Engine::Enumerate) {
            let input = McInput::FullMepp(params);
            problems.extend(
                exact_mismatches(&analytic_stats(&input)?, &enumerated_stats(&input)?)
                    .into_iter()
                    .map(|p| format!("F0={f0}: {p}")),
            );
        }
    }
    csv.flush()?;
    Ok(Verdict::from_problems(problems))
}

/// Branch records of the scenario, all with exact probabilities.
pub fn branch_log(cfg: &ScenarioConfig) -> Result<Vec<BranchRecord<Rational>>, CliError> {
    if let Some((a, b)) = cfg.pair {
        return Ok(explain_cross(a, b)?);
    }
    let input = resolve_input(cfg, cfg.input.as_ref())?;
    Ok(match &input {
        McInput::Conventional(e) => run_conventional_bitflip(e)?.branches,
        McInput::Recycling(e) => run_recycling(e)?.branches,
        McInput::Link { a, b, junctions } => run_link(a, b, junctions)?.branches,
        McInput::PhaseFlip { phase, n } => run_phaseflip(phase, *n)?.branches,
        McInput::FullMepp(_) => {
            return Err(usage(
                "explain works on one round: use conventional, recycling, link or phaseflip, or give a pair",
            ))
        }
    })
}

/// Dumps every enumerated branch, then per-pattern subtotals and totals.
pub fn cmd_explain(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<Verdict, CliError> {
    cfg.validate()?;
    if !cfg.engines.contains(&Engine::Enumerate) {
        return Err(usage("explain needs the enumerate engine"));
    }
    let log = branch_log(cfg)?;
    for r in &log {
        writeln!(out, "{r}")?;
    }
    let mut by_pattern: BTreeMap<(String, String, String), Rational> = BTreeMap::new();
    let mut kept = Rational::zero();
    let mut discarded = Rational::zero();
    for r in &log {
        let key = (
            format!("{}|{}", r.inputs.0, r.inputs.1),
            ghz_purify::qnd::pattern_string(&r.pattern),
            match &r.fate {
                Fate::Kept { parties, .. } => ghz_purify::register::party_string(parties),
                other => other.to_string(),
            },
        );
        *by_pattern.entry(key).or_insert_with(Rational::zero) += r.probability.clone();
        match r.fate {
            Fate::Discarded => discarded += r.probability.clone(),
            _ => kept += r.probability.clone(),
        }
    }
    for ((inputs, pattern, parties), p) in &by_pattern {
        writeln!(
            out,
            "pattern input={inputs} pattern={pattern} p={p} kept={parties}"
        )?;
    }
    let total = kept.clone() + discarded.clone();
    writeln!(out, "total={total} kept={kept} discarded={discarded}")?;
    let mut problems = Vec::new();
    if !total.is_one() {
        problems.push(format!("branch probabilities sum to {total}"));
    }
    if log.iter().any(|r| r.fate == Fate::Unentangled) {
        problems.push("a kept branch is not a GHZ basis state".into());
    }
    Ok(Verdict::from_problems(problems))
}

/// Monte Carlo estimates per scenario point as CSV: the statistic columns,
/// their `stderr_*` columns, and the trial count, seed and generator.
pub fn cmd_mc(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<Verdict, CliError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut problems = Vec::new();
    for (i, noise) in points(cfg).iter().enumerate() {
        let input = resolve_input(cfg, noise.as_ref())?;
        let exact = analytic_stats(&input)?;
        let est = mc_run(&McConfig {
            trials: cfg.trials,
            seed: point_seed(cfg.seed, i),
            input,
        })?;
        problems.extend(mc_outliers(&est, &exact));
        let known: Vec<String> = if cfg.protocol == PipelineKind::FullMepp {
            CURVE_HEADER[1..].iter().map(|s| s.to_string()).collect()
        } else {
            exact
                .iter()
                .map(|(k, _)| k.clone())
                .chain(est.stats.iter().map(|s| s.name.clone()))
                .collect()
        };
        for k in known {
            if !names.contains(&k) {
                names.push(k);
            }
        }
        rows.push((f0_of(noise.as_ref()).cloned(), est));
    }
    let mut csv = csv::Writer::from_writer(out);
    let mut header = vec!["F0".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|k| format!("stderr_{k}")));
    header.extend(["trials", "seed", "rng"].map(String::from));
    csv.write_record(&header)?;
    for (f0, est) in &rows {
        let mut row = vec![f0
            .as_ref()
            .map(|f| format_significant(f, CSV_DIGITS))
            .unwrap_or_default()];
        let cell = |k: &String, pick: fn(&McStat) -> f64| {
            est.stat(k)
                .map(|s| float_cell(pick(s)))
                .unwrap_or_else(|| "nan".into())
        };
        row.extend(names.iter().map(|k| cell(k, |s| s.value)));
        row.extend(names.iter().map(|k| cell(k, |s| s.stderr)));
        row.extend([
            est.trials.to_string(),
            est.seed.to_string(),
            est.rng.to_string(),
        ]);
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(Verdict::from_problems(problems))
}
