//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! ```text
//! protocol = conventional
//! n = 3
//! f = 0.7, 0.1, 0.1, 0.1
//! engines = analytic, enumerate, montecarlo
//! trials = 100000
//! seed = 2011
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ghz_purify::montecarlo::PipelineKind;
use ghz_purify::register::GhzLabel;
use ghz_purify::scalar::{parse_rational, Rational};
use num_traits::{One, Zero};

use crate::error::{CliError, ConfigError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Engine {
    Analytic,
    Enumerate,
    MonteCarlo,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Enumerate => "enumerate",
            Engine::MonteCarlo => "montecarlo",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "analytic" => Ok(Engine::Analytic),
            "enumerate" => Ok(Engine::Enumerate),
            "montecarlo" | "mc" => Ok(Engine::MonteCarlo),
            other => Err(format!(
                "unknown engine {other:?} (expected analytic, enumerate or montecarlo)"
            )),
        }
    }
}

/// Parses a comma-separated engine list; duplicates collapse.
pub fn parse_engines(text: &str) -> Result<Vec<Engine>, String> {
    let mut out: Vec<Engine> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("at least one engine is required".into());
    }
    Ok(out)
}

/// Noise description feeding the protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSpec {
    /// Symmetric noise: `F₀` on the target, the rest shared equally.
    Symmetric(Rational),
    /// Explicit fidelity vector in label-index order.
    Fidelities(Vec<Rational>),
    /// Independent per-photon bit-flip rate `p` and phase-flip rate `q`.
    Channel { p: Rational, q: Rational },
    /// Ensemble file in the plain-text ensemble format.
    File(PathBuf),
    /// Phase-flip weight `p0` of `Φ₀⁺`.
    Phase(Rational),
}

impl InputSpec {
    fn kind(&self) -> &'static str {
        match self {
            InputSpec::Symmetric(_) => "f0",
            InputSpec::Fidelities(_) => "f",
            InputSpec::Channel { .. } => "p/q",
            InputSpec::File(_) => "ensemble",
            InputSpec::Phase(_) => "p0",
        }
    }
}

/// `F₀` grid from `start` to `stop` in `steps` equal intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub start: Rational,
    pub stop: Rational,
    pub steps: u32,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            start: Rational::new(1.into(), 4.into()),
            stop: Rational::one(),
            steps: 15,
        }
    }
}

impl Sweep {
    pub fn grid(&self) -> Vec<Rational> {
        let width =
            (self.stop.clone() - self.start.clone()) / Rational::from_integer(self.steps.into());
        (0..=self.steps)
            .map(|k| self.start.clone() + width.clone() * Rational::from_integer(k.into()))
            .collect()
    }
}

impl FromStr for Sweep {
    type Err = String;
    /// `start, stop, steps`
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [start, stop, steps] = parts.as_slice() else {
            return Err("expected `start, stop, steps`".into());
        };
        let start = number(start)?;
        let stop = number(stop)?;
        let steps: u32 = steps
            .parse()
            .map_err(|_| format!("steps {steps:?} is not a positive integer"))?;
        if steps == 0 {
            return Err("steps must be at least 1".into());
        }
        let zero = Rational::zero();
        let one = Rational::one();
        if start < zero || stop > one || start > stop {
            return Err("need 0 <= start <= stop <= 1".into());
        }
        Ok(Sweep { start, stop, steps })
    }
}

fn number(text: &str) -> Result<Rational, String> {
    parse_rational(text).ok_or_else(|| format!("{text:?} is not a decimal or p/q number"))
}

fn numbers(text: &str) -> Result<Vec<Rational>, String> {
    text.split(',').map(|t| number(t.trim())).collect()
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: PipelineKind,
    pub n: usize,
    pub input: Option<InputSpec>,
    pub engines: Vec<Engine>,
    pub sweep: Option<Sweep>,
    pub trials: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Two input labels for `explain`, e.g. `000:+, 010:+`.
    pub pair: Option<(GhzLabel, GhzLabel)>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: PipelineKind::Conventional,
            n: 3,
            input: None,
            engines: vec![Engine::Analytic, Engine::Enumerate],
            sweep: None,
            trials: 100_000,
            seed: 2011,
            out: None,
            pair: None,
        }
    }
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub f0: Option<Rational>,
    pub n: Option<usize>,
    pub protocol: Option<PipelineKind>,
    pub engines: Option<Vec<Engine>>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Parses scenario text. Relative `ensemble` paths resolve against
    /// `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut p: Option<Rational> = None;
        let mut q: Option<Rational> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(line, None, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            let fail = |msg: String| ConfigError::at(line, Some(key), msg);
            if seen.iter().any(|k| k == key) {
                return Err(fail("given twice".into()));
            }
            seen.push(key.to_string());
            let set_input =
                |cfg: &mut ScenarioConfig, noise: InputSpec| -> Result<(), ConfigError> {
                    if let Some(prev) = &cfg.input {
                        if prev.kind() != noise.kind() {
                            return Err(fail(format!(
                                "conflicts with the earlier `{}` input",
                                prev.kind()
                            )));
                        }
                    }
                    cfg.input = Some(noise);
                    Ok(())
                };
            match key {
                "protocol" => {
                    cfg.protocol = value
                        .parse()
                        .map_err(|e: ghz_purify::Error| fail(e.to_string()))?
                }
                "n" => {
                    cfg.n = value
                        .parse()
                        .map_err(|_| fail(format!("{value:?} is not a photon count")))?
                }
                "f0" => set_input(&mut cfg, InputSpec::Symmetric(number(value).map_err(fail)?))?,
                "f" => set_input(
                    &mut cfg,
                    InputSpec::Fidelities(numbers(value).map_err(fail)?),
                )?,
                "p0" => set_input(&mut cfg, InputSpec::Phase(number(value).map_err(fail)?))?,
                "p" | "q" => {
                    let v = number(value).map_err(fail)?;
                    if key == "p" {
                        p = Some(v);
                    } else {
                        q = Some(v);
                    }
                    let noise = InputSpec::Channel {
                        p: p.clone().unwrap_or_else(Rational::zero),
                        q: q.clone().unwrap_or_else(Rational::zero),
                    };
                    set_input(&mut cfg, noise)?;
                }
                "ensemble" => {
                    let path = PathBuf::from(value);
                    let path = match base {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path,
                    };
                    set_input(&mut cfg, InputSpec::File(path))?;
                }
                "engines" => cfg.engines = parse_engines(value).map_err(fail)?,
                "sweep" => cfg.sweep = Some(value.parse().map_err(fail)?),
                "trials" => {
                    cfg.trials = value
                        .replace('_', "")
                        .parse()
                        .map_err(|_| fail(format!("{value:?} is not a trial count")))?
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| fail(format!("{value:?} is not a 64-bit seed")))?
                }
                "out" => cfg.out = Some(PathBuf::from(value)),
                "pair" => {
                    let labels: Vec<&str> = value.split(',').map(str::trim).collect();
                    let [a, b] = labels.as_slice() else {
                        return Err(fail("expected two labels such as `000:+, 010:+`".into()));
                    };
                    let parse = |t: &str| t.parse::<GhzLabel>().map_err(|e| fail(e.to_string()));
                    cfg.pair = Some((parse(a)?, parse(b)?));
                }
                other => return Err(ConfigError::at(line, Some(other), "unknown key")),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&text, path.parent())?)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(f0) = o.f0 {
            self.input = Some(InputSpec::Symmetric(f0));
        }
        if let Some(n) = o.n {
            self.n = n;
        }
        if let Some(p) = o.protocol {
            self.protocol = p;
        }
        if let Some(e) = o.engines {
            self.engines = e;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = o.out {
            self.out = Some(out);
        }
    }

    /// Checks the cross-field rules.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.engines.is_empty() {
            return Err(ConfigError::field(
                "engines",
                "at least one engine is required",
            ));
        }
        if !(2..=16).contains(&self.n) {
            return Err(ConfigError::field(
                "n",
                format!("{} photons is outside 2..=16", self.n),
            ));
        }
        if self.protocol == PipelineKind::FullMepp && self.n != 3 {
            return Err(ConfigError::field(
                "n",
                "the full scheme is defined on three photons",
            ));
        }
        if self.sweep.is_some() && !matches!(self.input, None | Some(InputSpec::Symmetric(_))) {
            return Err(ConfigError::field(
                "sweep",
                "a sweep needs symmetric-noise input (f0) or none",
            ));
        }
        if self.trials == 0 {
            return Err(ConfigError::field("trials", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ghz_purify::scalar::ratio;

    #[test]
    fn parses_full_file() {
        let text = "# conventional check\nprotocol = recycling\nn = 4  # four photons\nf = 1/2, 1/4, 1/8, 1/8, 0, 0, 0, 0\nengines = enumerate, analytic\ntrials = 10_000\nseed = 7\n";
        let cfg = ScenarioConfig::parse(text, None).unwrap();
        assert_eq!(cfg.protocol, PipelineKind::Recycling);
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.engines, vec![Engine::Analytic, Engine::Enumerate]);
        assert_eq!(cfg.trials, 10_000);
        assert_eq!(cfg.seed, 7);
        let Some(InputSpec::Fidelities(f)) = cfg.input else {
            panic!()
        };
        assert_eq!(f[1], ratio(1, 4));
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let err = ScenarioConfig::parse("n = 3\nf = 0.7, x\n", None).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert_eq!(err.field.as_deref(), Some("f"));
        let err = ScenarioConfig::parse("\n\ncolour = red\n", None).unwrap_err();
        assert_eq!(err.to_string(), "line 3, field `colour`: unknown key");
        let err = ScenarioConfig::parse("f0 = 0.5\nf = 1, 0, 0, 0\n", None).unwrap_err();
        assert!(err.message.contains("conflicts"));
        assert!(ScenarioConfig::parse("n = 3\nn = 4\n", None).is_err());
        assert!(ScenarioConfig::parse("just words\n", None).is_err());
        assert!(ScenarioConfig::parse("engines = \n", None).is_err());
    }

    #[test]
    fn channel_and_sweep() {
        let cfg = ScenarioConfig::parse(
            "p = 0.1\nq = 1/20\nsweep = 0, 1, 4\n",
            Some(Path::new("/tmp")),
        )
        .unwrap();
        assert_eq!(
            cfg.input,
            Some(InputSpec::Channel {
                p: ratio(1, 10),
                q: ratio(1, 20)
            })
        );
        assert_eq!(cfg.sweep.as_ref().unwrap().grid().len(), 5);
        assert!(cfg.validate().is_err());
        assert_eq!(Sweep::default().grid()[5], ratio(1, 2));
        assert!("1, 0, 3".parse::<Sweep>().is_err());
        assert!("0, 1, 0".parse::<Sweep>().is_err());
    }

    #[test]
    fn relative_ensemble_paths() {
        let cfg = ScenarioConfig::parse("ensemble = e.txt\n", Some(Path::new("/data"))).unwrap();
        assert_eq!(
            cfg.input,
            Some(InputSpec::File(PathBuf::from("/data/e.txt")))
        );
    }

    #[test]
    fn overrides_and_validation() {
        let mut cfg =
            ScenarioConfig::parse("protocol = full-mepp\nf = 1, 0, 0, 0\n", None).unwrap();
        cfg.apply(Overrides {
            f0: Some(ratio(1, 2)),
            n: Some(4),
            ..Default::default()
        });
        assert_eq!(cfg.input, Some(InputSpec::Symmetric(ratio(1, 2))));
        assert_eq!(cfg.validate().unwrap_err().field.as_deref(), Some("n"));
        cfg.n = 3;
        assert!(cfg.validate().is_ok());
    }
}
