//! Service configuration: one TOML file, with `PMDSS_*` environment overrides.
//!
//! ```toml
//! data_dir = "/var/lib/pmdss"
//! listen = "127.0.0.1:8080"
//! rules_file = "rules.toml"
//!
//! [thresholds]
//! warn_ratio = 0.05
//! critical_ratio = 0.10
//! typicality_cv = 0.10
//!
//! [roles]
//! bid_no_bid = ["business-manager"]
//! ```

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use pmdss_core::{RuleTable, Thresholds};
use serde::Deserialize;
use thiserror::Error;

use crate::roles::RoleMap;

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigInvalid(pub String);

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data_dir: Option<PathBuf>,
    listen: Option<String>,
    rules_file: Option<PathBuf>,
    thresholds: Option<Thresholds>,
    roles: Option<RoleMap>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub listen: SocketAddr,
    pub thresholds: Thresholds,
    pub roles: RoleMap,
    pub rules: RuleTable,
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

impl ServiceConfig {
    /// Defaults with the given data directory.
    pub fn with_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            listen: DEFAULT_LISTEN.parse().expect("valid default address"),
            thresholds: Thresholds::default(),
            roles: RoleMap::default(),
            rules: RuleTable::default(),
        }
    }

    /// Reads `path` (if any), applies overrides from the process environment
    /// and validates the result.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigInvalid> {
        let env: HashMap<String, String> = std::env::vars()
            .filter(|(k, _)| k.starts_with("PMDSS_"))
            .collect();
        Self::load_with_env(path, &env)
    }

    pub fn load_with_env(
        path: Option<&Path>,
        env: &HashMap<String, String>,
    ) -> Result<Self, ConfigInvalid> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigInvalid(format!("{}: {e}", p.display())))?;
                let file: ConfigFile = toml::from_str(&text)
                    .map_err(|e| ConfigInvalid(format!("{}: {e}", p.display())))?;
                (file, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };

        let data_dir = env
            .get("PMDSS_DATA_DIR")
            .map(PathBuf::from)
            .or(file.data_dir.map(|d| base.join(d)))
            .unwrap_or_else(|| PathBuf::from("pmdss-data"));
        let listen_text = env
            .get("PMDSS_LISTEN")
            .cloned()
            .or(file.listen)
            .unwrap_or_else(|| DEFAULT_LISTEN.to_owned());
        let listen = listen_text.parse().map_err(|_| {
            ConfigInvalid(format!("listen address `{listen_text}` is not host:port"))
        })?;

        let mut thresholds = file.thresholds.unwrap_or_default();
        for (key, slot) in [
            ("PMDSS_WARN_RATIO", &mut thresholds.warn_ratio),
            ("PMDSS_CRITICAL_RATIO", &mut thresholds.critical_ratio),
            ("PMDSS_TYPICALITY_CV", &mut thresholds.typicality_cv),
        ] {
            if let Some(v) = env.get(key) {
                *slot = v
                    .parse()
                    .map_err(|_| ConfigInvalid(format!("{key}=`{v}` is not a number")))?;
            }
        }
        thresholds
            .validate()
            .map_err(|e| ConfigInvalid(e.to_string()))?;

        let rules_file = env
            .get("PMDSS_RULES_FILE")
            .map(PathBuf::from)
            .or(file.rules_file.map(|r| base.join(r)));
        let rules = match rules_file {
            Some(p) => load_rules(&p)?,
            None => RuleTable::default(),
        };

        let roles = file.roles.unwrap_or_default();
        let unknown = roles.unknown_keys();
        if !unknown.is_empty() {
            return Err(ConfigInvalid(format!(
                "[roles] names unknown events: {}",
                unknown.join(", ")
            )));
        }

        Ok(Self {
            data_dir,
            listen,
            thresholds,
            roles,
            rules,
        })
    }
}

/// Loads a corrective-action rules table (`[[rule]]` records).
pub fn load_rules(path: &Path) -> Result<RuleTable, ConfigInvalid> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigInvalid(format!("{}: {e}", path.display())))?;
    let table: RuleTable =
        toml::from_str(&text).map_err(|e| ConfigInvalid(format!("{}: {e}", path.display())))?;
    let mut ids = std::collections::HashSet::new();
    for r in &table.rules {
        if !ids.insert(&r.id) {
            return Err(ConfigInvalid(format!(
                "{}: duplicate rule id `{}`",
                path.display(),
                r.id
            )));
        }
    }
    Ok(table)
}
