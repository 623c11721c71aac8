//! Experiment configuration: a flat, line-oriented `key = value` format with
//! `[section]` headers and `#` comments, parsed into typed per-experiment
//! configs with defaults applied, plus an exact-round-trip serializer.

use crate::error::{Error, Result};
use crate::hawking::{HawkingConfig, WhichModel};
use crate::lensing::LensingConfig;

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Hawking,
    Lens,
    Sweep,
    Validate,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Hawking => "hawking",
            Command::Lens => "lens",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "spectrum" => Command::Spectrum,
            "hawking" => Command::Hawking,
            "lens" => Command::Lens,
            "sweep" => Command::Sweep,
            "validate" => Command::Validate,
            _ => return None,
        })
    }
}

/// Band-structure scan parameters: lattice shape, uniform tilt, and samples
/// per path leg.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub nx: usize,
    pub ny: usize,
    pub vx: f64,
    pub vy: f64,
    pub n_k: usize,
}

impl SpectrumConfig {
    pub fn new() -> Self {
        SpectrumConfig {
            nx: 16,
            ny: 16,
            vx: 0.0,
            vy: 0.0,
            n_k: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 1 {
            return Err(Error::param("nx/ny", "lattice must be at least 2x1"));
        }
        if self.n_k < 2 {
            return Err(Error::param("n_k", "need at least 2 samples per leg"));
        }
        if !(self.vx.is_finite() && self.vy.is_finite()) {
            return Err(Error::param("vx/vy", "tilt must be finite"));
        }
        Ok(())
    }
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig::new()
    }
}

/// One fully parsed experiment: the command plus every section's parameters
/// with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub spectrum: SpectrumConfig,
    pub hawking: HawkingConfig<f64>,
    pub lensing: LensingConfig<f64>,
    /// Frequency offsets for the `sweep` command.
    pub sweep_omegas: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            spectrum: SpectrumConfig::new(),
            hawking: HawkingConfig::new(),
            lensing: LensingConfig::new(),
            sweep_omegas: vec![0.02, 0.035, 0.05, 0.065, 0.08],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        self.hawking.validate()?;
        self.lensing.validate()?;
        if self.sweep_omegas.is_empty() {
            return Err(Error::param("omegas", "sweep needs at least one offset"));
        }
        for &w in &self.sweep_omegas {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::param("omegas", "offsets must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Run,
    Spectrum,
    Hawking,
    Lens,
    Sweep,
}

fn bad<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        line,
        message: message.into(),
    })
}

fn parse_f64(line: usize, key: &str, text: &str) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => bad(line, format!("key `{key}`: `{text}` is not a finite number")),
    }
}

fn parse_usize(line: usize, key: &str, text: &str) -> Result<usize> {
    text.parse::<usize>()
        .or_else(|_| bad(line, format!("key `{key}`: `{text}` is not a non-negative integer")))
}

fn parse_bool(line: usize, key: &str, text: &str) -> Result<bool> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bad(line, format!("key `{key}`: expected true or false, got `{text}`")),
    }
}

fn parse_list(line: usize, key: &str, text: &str) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|piece| parse_f64(line, key, piece.trim()))
        .collect()
}

/// Parses config text into a validated [`ExperimentConfig`]; unset keys keep
/// their defaults, and every parse error names the offending line and key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut command: Option<Command> = None;
    let mut config = ExperimentConfig::new(Command::Validate);
    let mut section = Section::None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return bad(line, format!("unterminated section header `{content}`"));
            };
            section = match name.trim() {
                "run" => Section::Run,
                "spectrum" => Section::Spectrum,
                "hawking" => Section::Hawking,
                "lens" => Section::Lens,
                "sweep" => Section::Sweep,
                other => return bad(line, format!("unknown section `[{other}]`")),
            };
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return bad(line, format!("expected `key = value`, got `{content}`"));
        };
        let key = key.trim();
        let value = value.trim();
        let unknown = || -> Result<()> {
            bad(line, format!("unknown key `{key}` in this section"))
        };
        match section {
            Section::None => return bad(line, format!("key `{key}` appears before any [section]")),
            Section::Run => match key {
                "command" => match Command::parse(value) {
                    Some(c) => command = Some(c),
                    None => {
                        return bad(
                            line,
                            format!(
                                "key `command`: `{value}` is not one of \
                                 spectrum|hawking|lens|sweep|validate"
                            ),
                        )
                    }
                },
                _ => unknown()?,
            },
            Section::Spectrum => {
                let s = &mut config.spectrum;
                match key {
                    "nx" => s.nx = parse_usize(line, key, value)?,
                    "ny" => s.ny = parse_usize(line, key, value)?,
                    "vx" => s.vx = parse_f64(line, key, value)?,
                    "vy" => s.vy = parse_f64(line, key, value)?,
                    "n_k" => s.n_k = parse_usize(line, key, value)?,
                    _ => unknown()?,
                }
            }
            Section::Hawking => {
                let h = &mut config.hawking;
                match key {
                    "n_left" => h.n_left = parse_usize(line, key, value)?,
                    "n_mid" => h.n_mid = parse_usize(line, key, value)?,
                    "n_right" => h.n_right = parse_usize(line, key, value)?,
                    "gamma_t" => h.gamma_t = parse_f64(line, key, value)?,
                    "x_0" => h.x_0 = parse_f64(line, key, value)?,
                    "k0" => h.k0 = parse_f64(line, key, value)?,
                    "sigma" => h.sigma = parse_f64(line, key, value)?,
                    "dt" => h.dt = parse_f64(line, key, value)?,
                    "t_end" => h.t_end = parse_f64(line, key, value)?,
                    "which" => {
                        h.which = match value {
                            "classical" => WhichModel::Classical,
                            "quantum" => WhichModel::Quantum,
                            "both" => WhichModel::Both,
                            _ => {
                                return bad(
                                    line,
                                    format!(
                                        "key `which`: `{value}` is not one of \
                                         classical|quantum|both"
                                    ),
                                )
                            }
                        }
                    }
                    "snapshot_times" => h.snapshot_times = parse_list(line, key, value)?,
                    _ => unknown()?,
                }
            }
            Section::Lens => {
                let l = &mut config.lensing;
                match key {
                    "nx" => l.nx = parse_usize(line, key, value)?,
                    "ny" => l.ny = parse_usize(line, key, value)?,
                    "gamma" => l.gamma = parse_f64(line, key, value)?,
                    "center_x" => l.center.0 = parse_f64(line, key, value)?,
                    "center_y" => l.center.1 = parse_f64(line, key, value)?,
                    "launch_x" => l.launch_x = parse_f64(line, key, value)?,
                    "b" => l.b = parse_f64(line, key, value)?,
                    "k0" => l.k0_mag = parse_f64(line, key, value)?,
                    "sigma" => l.sigma = parse_f64(line, key, value)?,
                    "v_max" => l.v_max = parse_f64(line, key, value)?,
                    "dt" => l.dt = parse_f64(line, key, value)?,
                    "t_end" => l.t_end = parse_f64(line, key, value)?,
                    "snapshot_times" => l.snapshot_times = parse_list(line, key, value)?,
                    "mirrored" => l.mirrored = parse_bool(line, key, value)?,
                    _ => unknown()?,
                }
            }
            Section::Sweep => match key {
                "omegas" => config.sweep_omegas = parse_list(line, key, value)?,
                _ => unknown()?,
            },
        }
    }

    let Some(command) = command else {
        return Err(Error::param(
            "command",
            "missing; add `command = ...` under [run]",
        ));
    };
    config.command = command;
    config.validate()?;
    Ok(config)
}

use crate::output::fmt_f64;

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ")
}

/// Renders a config with every key explicit; `parse_config` returns an equal
/// config on the result.
pub fn serialize_config(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut push = |line: &str| {
        out.push_str(line);
        out.push('\n');
    };

    push("[run]");
    push(&format!("command = {}", config.command.label()));
    push("");

    let s = &config.spectrum;
    push("[spectrum]");
    push(&format!("nx = {}", s.nx));
    push(&format!("ny = {}", s.ny));
    push(&format!("vx = {}", fmt_f64(s.vx)));
    push(&format!("vy = {}", fmt_f64(s.vy)));
    push(&format!("n_k = {}", s.n_k));
    push("");

    let h = &config.hawking;
    push("[hawking]");
    push(&format!("n_left = {}", h.n_left));
    push(&format!("n_mid = {}", h.n_mid));
    push(&format!("n_right = {}", h.n_right));
    push(&format!("gamma_t = {}", fmt_f64(h.gamma_t)));
    push(&format!("x_0 = {}", fmt_f64(h.x_0)));
    push(&format!("k0 = {}", fmt_f64(h.k0)));
    push(&format!("sigma = {}", fmt_f64(h.sigma)));
    push(&format!("dt = {}", fmt_f64(h.dt)));
    push(&format!("t_end = {}", fmt_f64(h.t_end)));
    let which = match h.which {
        WhichModel::Classical => "classical",
        WhichModel::Quantum => "quantum",
        WhichModel::Both => "both",
    };
    push(&format!("which = {which}"));
    push(&format!("snapshot_times = {}", fmt_list(&h.snapshot_times)));
    push("");

    let l = &config.lensing;
    push("[lens]");
    push(&format!("nx = {}", l.nx));
    push(&format!("ny = {}", l.ny));
    push(&format!("gamma = {}", fmt_f64(l.gamma)));
    push(&format!("center_x = {}", fmt_f64(l.center.0)));
    push(&format!("center_y = {}", fmt_f64(l.center.1)));
    push(&format!("launch_x = {}", fmt_f64(l.launch_x)));
    push(&format!("b = {}", fmt_f64(l.b)));
    push(&format!("k0 = {}", fmt_f64(l.k0_mag)));
    push(&format!("sigma = {}", fmt_f64(l.sigma)));
    push(&format!("v_max = {}", fmt_f64(l.v_max)));
    push(&format!("dt = {}", fmt_f64(l.dt)));
    push(&format!("t_end = {}", fmt_f64(l.t_end)));
    push(&format!("snapshot_times = {}", fmt_list(&l.snapshot_times)));
    push(&format!("mirrored = {}", l.mirrored));
    push("");

    push("[sweep]");
    push(&format!("omegas = {}", fmt_list(&config.sweep_omegas)));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_hawking_section_keeps_the_chain_defaults() {
        let config = parse_config("[run]\ncommand = hawking\n\n[hawking]\n").unwrap();
        assert_eq!(config.command, Command::Hawking);
        assert_eq!(config.hawking, HawkingConfig::new());
        assert_eq!(config.hawking.n_mid, 400);
        assert_eq!(config.hawking.n_left, 800);
        assert_eq!(config.hawking.n_right, 800);
        assert_eq!(config.hawking.gamma_t, 0.1);
        assert_eq!(config.hawking.x_0, 1600.0);
    }

    #[test]
    fn negative_gamma_t_is_a_range_error_naming_the_key() {
        let err = parse_config("[run]\ncommand = hawking\n[hawking]\ngamma_t = -0.1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("gamma_t"), "got: {err}");
    }

    #[test]
    fn parse_errors_name_line_and_key() {
        let err = parse_config("[run]\ncommand = lens\n[lens]\nwat = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4") && err.contains("wat"), "got: {err}");

        let err = parse_config("[run]\ncommand = lens\n[lens]\nsigma = soft\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4") && err.contains("sigma"), "got: {err}");

        let err = parse_config("[nope]\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("nope"), "got: {err}");

        let err = parse_config("command = lens\n").unwrap_err().to_string();
        assert!(err.contains("before any"), "got: {err}");
    }

    #[test]
    fn missing_command_is_rejected() {
        let err = parse_config("[hawking]\nsigma = 50\n").unwrap_err().to_string();
        assert!(err.contains("command"), "got: {err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# leading comment\n[run]\ncommand = lens   # trailing\n\n[lens]\n\
                    gamma = 15.0\n  # indented comment\nb = 40.0\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.lensing.gamma, 15.0);
        assert_eq!(config.lensing.b, 40.0);
    }

    #[test]
    fn every_command_name_parses() {
        for (name, want) in [
            ("spectrum", Command::Spectrum),
            ("hawking", Command::Hawking),
            ("lens", Command::Lens),
            ("sweep", Command::Sweep),
            ("validate", Command::Validate),
        ] {
            let config = parse_config(&format!("[run]\ncommand = {name}\n")).unwrap();
            assert_eq!(config.command, want);
        }
    }

    #[test]
    fn snapshot_lists_parse_and_may_be_empty() {
        let text = "[run]\ncommand = hawking\n[hawking]\nsnapshot_times = 0, 198.5, 1845\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.hawking.snapshot_times, vec![0.0, 198.5, 1845.0]);

        let text = "[run]\ncommand = lens\n[lens]\nsnapshot_times =\n";
        let config = parse_config(text).unwrap();
        assert!(config.lensing.snapshot_times.is_empty());
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn serialized_configs_reparse_identically() {
        let mut seed = 0x5eed_c0de_u64;
        let commands = [
            Command::Spectrum,
            Command::Hawking,
            Command::Lens,
            Command::Sweep,
            Command::Validate,
        ];
        for trial in 0..50 {
            let mut r = |lo: f64, hi: f64| lo + (hi - lo) * lcg(&mut seed);
            let mut config = ExperimentConfig::new(commands[trial % commands.len()]);
            config.spectrum.nx = 2 + (r(0.0, 30.0) as usize);
            config.spectrum.vx = r(-2.5, 2.5);
            config.spectrum.vy = r(-2.5, 2.5);
            config.hawking.n_left = 100 + (r(0.0, 900.0) as usize);
            config.hawking.n_mid = 50 + (r(0.0, 400.0) as usize);
            config.hawking.n_right = 400 + (r(0.0, 600.0) as usize);
            config.hawking.gamma_t = r(0.01, 1.0);
            config.hawking.x_0 = (config.hawking.n_left + config.hawking.n_mid) as f64
                + r(1.0, config.hawking.n_right as f64 - 2.0);
            config.hawking.k0 = r(1.8, 2.6);
            config.hawking.sigma = r(20.0, 80.0);
            config.hawking.dt = r(0.01, 0.05);
            config.hawking.t_end = r(100.0, 3000.0);
            config.hawking.snapshot_times = (0..trial % 4).map(|_| r(0.0, 2000.0)).collect();
            config.lensing.gamma = r(5.0, 25.0);
            config.lensing.b = r(26.0, 90.0);
            config.lensing.k0_mag = r(0.1, 0.6);
            config.lensing.sigma = r(4.0, 12.0);
            config.lensing.dt = r(0.005, 0.04);
            config.lensing.mirrored = r(0.0, 1.0) < 0.5;
            config.sweep_omegas = (0..1 + trial % 5).map(|_| r(0.01, 0.1)).collect();
            config.validate().expect("generated config should be valid");

            let text = serialize_config(&config);
            let reparsed = parse_config(&text).expect("serialized config should parse");
            assert_eq!(reparsed, config, "round trip changed the config:\n{text}");
        }
    }
}
