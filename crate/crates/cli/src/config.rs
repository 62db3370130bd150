//! TOML config files with one section per subcommand. Values given on the
//! command line win over the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config {path}, section [{section}]: {message}")]
    Section {
        path: String,
        section: String,
        message: String,
    },
}

/// Parsed config file; an absent file behaves as an empty one.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    path: String,
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: path.to_string(),
            message: describe(text, &e),
        })?;
        Ok(ConfigFile {
            path: path.to_string(),
            table,
        })
    }

    /// Deserializes `[name]` (missing section → `T::default()`).
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, ConfigError> {
        let Some(value) = self.table.get(name) else {
            return Ok(T::default());
        };
        let err = |message: String| ConfigError::Section {
            path: self.path.clone(),
            section: name.to_string(),
            message,
        };
        let text = toml::to_string(value).map_err(|e| err(e.to_string()))?;
        let table = value.as_table().ok_or_else(|| err("expected a table".into()))?;
        toml::from_str::<T>(&text).map_err(|e| {
            // locate the offending key in the original file for the message
            let key = table.keys().find(|k| e.message().contains(k.as_str()));
            match key {
                Some(k) => err(format!("key `{k}`: {}", e.message())),
                None => err(e.message().to_string()),
            }
        })
    }
}

fn describe(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}
