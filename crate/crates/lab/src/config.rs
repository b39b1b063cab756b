//! Scenario files.
//!
//! A file holds one or more `[[scenario]]` tables:
//!
//! ```toml
//! [[scenario]]
//! name = "static-b0.2"
//! duration = 20.0
//! num_streams = 1
//! sender_mode = "static"      # or "adaptive"
//! sack_enabled = false
//! seeds = [1, 2, 3]
//! fwd = { alpha = 2.5, beta = 0.002, drop_rate = 0.0 }
//! rev = { alpha = 2.5 }
//! srpic = { enabled = true, block_size = 32, ringbuffer_size = 512 }
//! coalescing = { t_intr_us = 30.0, r_sn = 1.2e6 }
//! sender = { link_rate_mbps = 2000.0, max_cwnd = 256 }
//! ```
//!
//! Every table except `fwd` is optional. Errors carry the line and column of
//! the offending value.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use srpic_core::tcp::{DupthreshMode, SenderParams, SrpicSettings, TransferConfig};
use srpic_core::{CoalescingParams, PathConfig};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// Simulated seconds.
    pub duration: f64,
    pub num_streams: usize,
    pub fwd: PathConfig,
    pub rev: PathConfig,
    pub sender_mode: DupthreshMode,
    pub sack_enabled: bool,
    /// `enabled = false` runs only the baseline arm.
    pub srpic: SrpicSettings,
    pub coalescing: CoalescingParams,
    pub sender: SenderParams,
    pub seeds: Vec<u64>,
}

impl ScenarioConfig {
    /// The transfer for one seed and one arm.
    pub fn transfer(&self, seed: u64, srpic_on: bool) -> TransferConfig {
        let mut coalescing = self.coalescing;
        coalescing.ringbuffer_size = self.srpic.ringbuffer_size;
        TransferConfig {
            duration_s: self.duration,
            num_streams: self.num_streams,
            forward: self.fwd,
            reverse: self.rev,
            sender_mode: self.sender_mode,
            sack_enabled: self.sack_enabled,
            srpic: SrpicSettings { enabled: srpic_on, ..self.srpic },
            coalescing,
            sender: self.sender,
            seed,
        }
    }

    /// Arms to run, baseline first.
    pub fn arms(&self) -> &'static [bool] {
        if self.srpic.enabled {
            &[false, true]
        } else {
            &[false]
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        self.transfer(self.seeds[0], true).validate().map_err(|e| e.to_string())
    }

    /// Overrides one parameter by name. Used by `sweep`.
    pub fn set_param(&mut self, param: &str, value: f64) -> Result<(), String> {
        let count = |v: f64| -> Result<usize, String> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(format!("{param} needs a whole number, got {value}"))
            }
        };
        match param {
            "alpha" => self.fwd.alpha = value,
            "beta" => self.fwd.beta = value,
            "drop_rate" | "delta" => self.fwd.drop_rate = value,
            "rev_alpha" => self.rev.alpha = value,
            "rev_beta" => self.rev.beta = value,
            "rev_drop_rate" => self.rev.drop_rate = value,
            "duration" => self.duration = value,
            "num_streams" => self.num_streams = count(value)?,
            "block_size" => self.srpic.block_size = count(value)?,
            "ringbuffer_size" => self.srpic.ringbuffer_size = count(value)?,
            "t_intr_us" => self.coalescing.t_intr_us = value,
            "r_sn" => self.coalescing.r_sn = value,
            "link_rate_mbps" => self.sender.link_rate_mbps = value,
            "max_cwnd" => self.sender.max_cwnd = value,
            _ => return Err(format!("unknown sweep parameter `{param}`")),
        }
        Ok(())
    }
}

pub const SWEEP_PARAMS: &[&str] = &[
    "alpha",
    "beta",
    "drop_rate",
    "delta",
    "rev_alpha",
    "rev_beta",
    "rev_drop_rate",
    "duration",
    "num_streams",
    "block_size",
    "ringbuffer_size",
    "t_intr_us",
    "r_sn",
    "link_rate_mbps",
    "max_cwnd",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub source_name: String,
    /// 1-based; `None` when the error is not tied to one spot in the file.
    pub location: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some((line, col)) => write!(f, "{}:{}:{}: {}", self.source_name, line, col, self.message),
            None => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    scenario: Vec<Spanned<RawScenario>>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    Static,
    Adaptive,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Spanned<String>,
    duration: Spanned<f64>,
    num_streams: Option<Spanned<i64>>,
    fwd: Spanned<RawPath>,
    rev: Option<Spanned<RawPath>>,
    sender_mode: Option<RawMode>,
    sack_enabled: Option<bool>,
    srpic: Option<RawSrpic>,
    coalescing: Option<RawCoalescing>,
    sender: Option<RawSender>,
    seeds: Spanned<Vec<u64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    alpha: Option<Spanned<f64>>,
    beta: Option<Spanned<f64>>,
    drop_rate: Option<Spanned<f64>>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSrpic {
    enabled: Option<bool>,
    block_size: Option<Spanned<i64>>,
    ringbuffer_size: Option<Spanned<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoalescing {
    t_intr_us: Option<Spanned<f64>>,
    r_sn: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSender {
    mss: Option<Spanned<i64>>,
    initial_cwnd: Option<Spanned<f64>>,
    max_cwnd: Option<Spanned<f64>>,
    link_rate_mbps: Option<Spanned<f64>>,
    min_rto_ms: Option<Spanned<f64>>,
}

struct Ctx<'a> {
    text: &'a str,
    source_name: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source_name: self.source_name.to_string(),
            location: Some(line_col(self.text, span.start)),
            message: message.into(),
        }
    }

    fn float(
        &self,
        v: &Option<Spanned<f64>>,
        default: f64,
        key: &str,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Result<f64, ConfigError> {
        match v {
            None => Ok(default),
            Some(s) if s.get_ref().is_finite() && ok(*s.get_ref()) => Ok(*s.get_ref()),
            Some(s) => Err(self.err(s.span(), format!("{key} {rule}, got {}", s.get_ref()))),
        }
    }

    fn count(&self, v: &Option<Spanned<i64>>, default: usize, key: &str, min: i64) -> Result<usize, ConfigError> {
        match v {
            None => Ok(default),
            Some(s) if *s.get_ref() >= min && *s.get_ref() <= u32::MAX as i64 => Ok(*s.get_ref() as usize),
            Some(s) => Err(self.err(s.span(), format!("{key} must be at least {min}, got {}", s.get_ref()))),
        }
    }

    fn path(&self, raw: &Spanned<RawPath>, key: &str) -> Result<PathConfig, ConfigError> {
        let r = raw.get_ref();
        let d = PathConfig::default();
        Ok(PathConfig {
            alpha: self.float(&r.alpha, d.alpha, &format!("{key}.alpha"), |x| x >= 0.0, "must be non-negative")?,
            beta: self.float(&r.beta, d.beta, &format!("{key}.beta"), |x| x >= 0.0, "must be non-negative")?,
            drop_rate: self.float(
                &r.drop_rate,
                d.drop_rate,
                &format!("{key}.drop_rate"),
                |x| (0.0..=1.0).contains(&x),
                "must lie in [0, 1]",
            )?,
            seed: r.seed.unwrap_or(0),
        })
    }

    fn scenario(&self, raw: &Spanned<RawScenario>) -> Result<ScenarioConfig, ConfigError> {
        let r = raw.get_ref();
        let name = r.name.get_ref().trim().to_string();
        if name.is_empty() {
            return Err(self.err(r.name.span(), "name must not be empty"));
        }
        if name.contains(',') || name.contains('"') || name.contains('\n') {
            return Err(self.err(r.name.span(), "name must not contain commas, quotes or newlines"));
        }
        let duration = *r.duration.get_ref();
        if !(duration.is_finite() && duration > 0.0) {
            return Err(self.err(r.duration.span(), format!("duration must be positive, got {duration}")));
        }
        if r.seeds.get_ref().is_empty() {
            return Err(self.err(r.seeds.span(), "seeds must not be empty"));
        }
        let fwd = self.path(&r.fwd, "fwd")?;
        let rev = match &r.rev {
            Some(p) => self.path(p, "rev")?,
            None => PathConfig { seed: 0, ..PathConfig::default() },
        };

        let sd = SrpicSettings::default();
        let srpic = match &r.srpic {
            None => SrpicSettings { enabled: true, ..sd },
            Some(s) => SrpicSettings {
                enabled: s.enabled.unwrap_or(true),
                block_size: self.count(&s.block_size, sd.block_size, "srpic.block_size", 1)?,
                ringbuffer_size: self.count(&s.ringbuffer_size, sd.ringbuffer_size, "srpic.ringbuffer_size", 1)?,
            },
        };

        let cd = CoalescingParams::default();
        let (t_intr_us, r_sn, r_sn_span) = match &r.coalescing {
            None => (cd.t_intr_us, cd.r_sn, None),
            Some(c) => (
                self.float(&c.t_intr_us, cd.t_intr_us, "coalescing.t_intr_us", |x| x >= 0.0, "must be non-negative")?,
                self.float(&c.r_sn, cd.r_sn, "coalescing.r_sn", |x| x > 0.0, "must be positive")?,
                c.r_sn.as_ref().map(|s| s.span()),
            ),
        };
        let coalescing = CoalescingParams { t_intr_us, r_sn, ringbuffer_size: srpic.ringbuffer_size };

        let pd = SenderParams::default();
        let (sender, link_span) = match &r.sender {
            None => (pd, None),
            Some(s) => {
                let initial_cwnd = self.float(
                    &s.initial_cwnd,
                    pd.initial_cwnd,
                    "sender.initial_cwnd",
                    |x| x >= 1.0,
                    "must be at least 1",
                )?;
                let max_cwnd = self.float(
                    &s.max_cwnd,
                    pd.max_cwnd.max(initial_cwnd),
                    "sender.max_cwnd",
                    |x| x >= initial_cwnd,
                    "must be at least initial_cwnd",
                )?;
                let p = SenderParams {
                    mss: self.count(&s.mss, pd.mss as usize, "sender.mss", 1)? as u32,
                    initial_cwnd,
                    max_cwnd,
                    link_rate_mbps: self.float(
                        &s.link_rate_mbps,
                        pd.link_rate_mbps,
                        "sender.link_rate_mbps",
                        |x| x > 0.0,
                        "must be positive",
                    )?,
                    min_rto_ms: self.float(
                        &s.min_rto_ms,
                        pd.min_rto_ms,
                        "sender.min_rto_ms",
                        |x| x > 0.0,
                        "must be positive",
                    )?,
                    ..pd
                };
                (p, s.link_rate_mbps.as_ref().map(|s| s.span()))
            }
        };

        let p_rate = sender.link_pps();
        if p_rate >= coalescing.r_sn {
            let span = r_sn_span.or(link_span).unwrap_or(raw.span());
            return Err(self.err(
                span,
                format!(
                    "sender link emits {p_rate:.0} pps, at or above the receiver service rate r_sn = {} pps; the ring would never drain",
                    coalescing.r_sn
                ),
            ));
        }

        let cfg = ScenarioConfig {
            name,
            duration,
            num_streams: self.count(&r.num_streams, 1, "num_streams", 1)?,
            fwd,
            rev,
            sender_mode: match r.sender_mode.unwrap_or(RawMode::Static) {
                RawMode::Static => DupthreshMode::Static,
                RawMode::Adaptive => DupthreshMode::Adaptive,
            },
            sack_enabled: r.sack_enabled.unwrap_or(false),
            srpic,
            coalescing,
            sender,
            seeds: r.seeds.get_ref().clone(),
        };
        cfg.validate().map_err(|m| self.err(raw.span(), m))?;
        Ok(cfg)
    }
}

/// Parses a scenario file's text. `source_name` labels error messages.
pub fn parse_scenarios(text: &str, source_name: &str) -> Result<Vec<ScenarioConfig>, ConfigError> {
    let ctx = Ctx { text, source_name };
    let file: RawFile = toml::from_str(text).map_err(|e| ConfigError {
        source_name: source_name.to_string(),
        location: e.span().map(|s| line_col(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    if file.scenario.is_empty() {
        return Err(ConfigError {
            source_name: source_name.to_string(),
            location: None,
            message: "no [[scenario]] tables found".into(),
        });
    }
    let mut out: Vec<ScenarioConfig> = Vec::with_capacity(file.scenario.len());
    for raw in &file.scenario {
        let cfg = ctx.scenario(raw)?;
        if out.iter().any(|c| c.name == cfg.name) {
            return Err(ctx.err(raw.get_ref().name.span(), format!("duplicate scenario name `{}`", cfg.name)));
        }
        out.push(cfg);
    }
    Ok(out)
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Config(ConfigError),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "{e}"),
            LoadError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LoadError {}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_scenarios(&text, &path.display().to_string()).map_err(LoadError::Config)
}
