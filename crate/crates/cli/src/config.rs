use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use occupronoun::oracle::{default_rules, BackendKind, OracleBackendConfig};
use occupronoun::Lexicon;
use serde::{Deserialize, Serialize};

/// Inclusive year range written `1965-1980`, `1981-` or `-1980`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub from: Option<i32>,
    pub to: Option<i32>,
}

impl YearRange {
    pub fn range(&self) -> RangeInclusive<i32> {
        self.from.unwrap_or(i32::MIN)..=self.to.unwrap_or(i32::MAX)
    }
}

impl FromStr for YearRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |p: &str| -> Result<Option<i32>, String> {
            let p = p.trim();
            if p.is_empty() {
                Ok(None)
            } else {
                p.parse().map(Some).map_err(|_| format!("bad year {p:?}"))
            }
        };
        let (from, to) = match s.split_once('-') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let y = parse(s)?;
                (y, y)
            }
        };
        if let (Some(a), Some(b)) = (from, to) {
            if a > b {
                return Err(format!("year range {s:?} is reversed"));
            }
        }
        Ok(YearRange { from, to })
    }
}

/// File-level configuration; every field can be overridden by a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pronoun_lexicon: Option<PathBuf>,
    pub occupation_lexicon: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub year_from: Option<i32>,
    pub year_to: Option<i32>,
    pub seed: u64,
    pub verb_agreement: bool,
    pub gender_guard: bool,
    pub strict_match: bool,
    pub backend: OracleBackendConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pronoun_lexicon: None,
            occupation_lexicon: None,
            background: None,
            rules: None,
            year_from: None,
            year_to: None,
            seed: 0,
            verb_agreement: true,
            gender_guard: false,
            strict_match: false,
            backend: OracleBackendConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn years(&self) -> Option<YearRange> {
        if self.year_from.is_none() && self.year_to.is_none() {
            None
        } else {
            Some(YearRange { from: self.year_from, to: self.year_to })
        }
    }

    /// Every path the config refers to must exist.
    pub fn check_paths(&self) -> Result<()> {
        let b = &self.backend;
        let named = [
            ("pronoun lexicon", &self.pronoun_lexicon),
            ("occupation lexicon", &self.occupation_lexicon),
            ("background text", &self.background),
            ("rules text", &self.rules),
            ("mock script", &b.mock_script),
        ];
        for (what, p) in named {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{what} {} does not exist", p.display());
                }
            }
        }
        if b.kind == BackendKind::Replay {
            if let Some(p) = &b.transcript {
                if !p.is_file() {
                    bail!("transcript {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }
}

/// Config plus the resources it points at.
pub struct Loaded {
    pub cfg: PipelineConfig,
    pub pronouns: Lexicon,
    pub occupations: Lexicon,
    pub background: String,
    pub rules: String,
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

impl Loaded {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.check_paths()?;
        let pronouns = match &cfg.pronoun_lexicon {
            Some(p) => Lexicon::load_file(p).with_context(|| format!("pronoun lexicon {}", p.display()))?,
            None => Lexicon::default_pronouns(),
        };
        let occupations = match &cfg.occupation_lexicon {
            Some(p) => Lexicon::load_file(p).with_context(|| format!("occupation lexicon {}", p.display()))?,
            None => Lexicon::default_occupations(),
        };
        let background = match &cfg.background {
            Some(p) => read_text(p)?.trim_end().to_string(),
            None => String::new(),
        };
        let rules = match &cfg.rules {
            Some(p) => read_text(p)?.trim_end().to_string(),
            None => default_rules().to_string(),
        };
        Ok(Loaded { cfg, pronouns, occupations, background, rules })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_ranges() {
        assert_eq!("1965-1980".parse::<YearRange>().unwrap().range(), 1965..=1980);
        assert_eq!("1981-".parse::<YearRange>().unwrap().range(), 1981..=i32::MAX);
        assert_eq!("-1980".parse::<YearRange>().unwrap().range(), i32::MIN..=1980);
        assert_eq!("1977".parse::<YearRange>().unwrap().range(), 1977..=1977);
        assert!("1980-1965".parse::<YearRange>().is_err());
        assert!("abc".parse::<YearRange>().is_err());
    }

    #[test]
    fn toml_config() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 9
            year_from = 1965
            year_to = 1980
            verb_agreement = false
            [backend]
            kind = "replay"
            transcript = "t.jsonl"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.years().unwrap().range(), 1965..=1980);
        assert!(!cfg.verb_agreement);
        assert_eq!(cfg.backend.kind, BackendKind::Replay);
        assert_eq!(cfg.backend.max_retries, 3);
        assert!(toml::from_str::<PipelineConfig>("api_key = \"x\"").is_err());
    }
}
