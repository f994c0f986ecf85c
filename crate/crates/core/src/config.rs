//! TOML configuration shared by the CLI and embedding applications.
//!
//! Every field is optional: an empty file (or no file) yields the library
//! defaults, and command-line flags override file values. Example:
//!
//! ```toml
//! [retrieve]
//! k = 3
//! scorer = "bm25"     # or "tfidf"
//! k1 = 1.2
//! b = 0.75
//! tokenizer = "word"  # or "char:3"
//!
//! [ground]
//! threshold = 0.6
//! strategy = "composite"  # or "fuzzy"
//!
//! [lint]
//! gazetteer = ["acme", "atlantis"]
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::bank::Gazetteer;
use crate::ground::Strategy;
use crate::retrieve::{Scorer, Tokenizer};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub retrieve: RetrieveSection,
    #[serde(default)]
    pub ground: GroundSection,
    #[serde(default)]
    pub lint: LintSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveSection {
    /// Retrieval depth (top-k). Default 3.
    pub k: Option<usize>,
    /// `"bm25"` or `"tfidf"`. Default `"bm25"`.
    pub scorer: Option<String>,
    /// BM25 term-saturation parameter. Default 1.2; ignored under tfidf.
    pub k1: Option<f64>,
    /// BM25 length-normalization parameter. Default 0.75; ignored under tfidf.
    pub b: Option<f64>,
    /// `"word"` or `"char:N"`. Default `"word"`.
    pub tokenizer: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSection {
    /// Confidence threshold H in `[0, 1]`. Default 0.6.
    pub threshold: Option<f64>,
    /// `"composite"` or `"fuzzy"`. Default `"composite"`.
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LintSection {
    /// Replaces the built-in country/company gazetteer wholesale.
    pub gazetteer: Option<Vec<String>>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Retrieval depth; `override_k` (a CLI flag) wins over the file.
    pub fn k(&self, override_k: Option<usize>) -> Result<usize, ConfigError> {
        let k = override_k.or(self.retrieve.k).unwrap_or(3);
        if k == 0 {
            return Err(invalid("retrieve.k", "must be at least 1"));
        }
        Ok(k)
    }

    pub fn scorer(&self, override_scorer: Option<&str>) -> Result<Scorer, ConfigError> {
        let name = override_scorer
            .or(self.retrieve.scorer.as_deref())
            .unwrap_or("bm25");
        match name.to_lowercase().as_str() {
            "bm25" => {
                let Scorer::Bm25 { k1: dk1, b: db } = Scorer::default() else {
                    unreachable!()
                };
                let k1 = self.retrieve.k1.unwrap_or(dk1);
                let b = self.retrieve.b.unwrap_or(db);
                if k1 < 0.0 {
                    return Err(invalid("retrieve.k1", "must be non-negative"));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(invalid("retrieve.b", "must lie in [0, 1]"));
                }
                Ok(Scorer::Bm25 { k1, b })
            }
            "tfidf" => Ok(Scorer::TfIdfCosine),
            other => Err(invalid(
                "retrieve.scorer",
                format!("unknown scorer `{other}`"),
            )),
        }
    }

    pub fn tokenizer(&self) -> Result<Tokenizer, ConfigError> {
        let Some(spec) = self.retrieve.tokenizer.as_deref() else {
            return Ok(Tokenizer::Word);
        };
        if spec.eq_ignore_ascii_case("word") {
            return Ok(Tokenizer::Word);
        }
        if let Some(n) = spec.strip_prefix("char:") {
            let n: usize = n
                .parse()
                .map_err(|_| invalid("retrieve.tokenizer", format!("bad n-gram size `{n}`")))?;
            if n == 0 {
                return Err(invalid(
                    "retrieve.tokenizer",
                    "n-gram size must be at least 1",
                ));
            }
            return Ok(Tokenizer::CharNgram(n));
        }
        Err(invalid(
            "retrieve.tokenizer",
            format!("expected `word` or `char:N`, got `{spec}`"),
        ))
    }

    pub fn threshold(&self, override_threshold: Option<f64>) -> Result<f64, ConfigError> {
        let h = override_threshold.or(self.ground.threshold).unwrap_or(0.6);
        if !(0.0..=1.0).contains(&h) {
            return Err(invalid("ground.threshold", "must lie in [0, 1]"));
        }
        Ok(h)
    }

    pub fn strategy(&self, override_strategy: Option<&str>) -> Result<Strategy, ConfigError> {
        let Some(name) = override_strategy.or(self.ground.strategy.as_deref()) else {
            return Ok(Strategy::default());
        };
        name.parse().map_err(|message| ConfigError::Invalid {
            field: "ground.strategy",
            message,
        })
    }

    pub fn gazetteer(&self) -> Gazetteer {
        match &self.lint.gazetteer {
            Some(words) => Gazetteer::from_words(words),
            None => Gazetteer::default(),
        }
    }
}
