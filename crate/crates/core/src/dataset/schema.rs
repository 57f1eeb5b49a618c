use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Role of a CSV column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Outcome,
    X1,
    X2,
    Z,
    W,
    Ignore,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome" => Ok(Role::Outcome),
            "x1" => Ok(Role::X1),
            "x2" => Ok(Role::X2),
            "z" => Ok(Role::Z),
            "w" => Ok(Role::W),
            "ignore" => Ok(Role::Ignore),
            other => Err(Error::Schema(format!("unknown role `{other}`"))),
        }
    }
}

/// Column-role map for CSV ingestion.
///
/// Grammar (TOML):
///
/// ```toml
/// missing_token = "NA"      # optional, case-sensitive
/// [columns]
/// stay   = "outcome"
/// visits = "x1"
/// city   = "x2"
/// spend  = "z"
/// travel = "w"
/// note   = "ignore"
/// ```
///
/// Within a block, columns keep the order in which they appear in the CSV header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub missing_token: String,
    pub roles: BTreeMap<String, Role>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    missing_token: Option<String>,
    columns: BTreeMap<String, Role>,
}

pub const DEFAULT_MISSING_TOKEN: &str = "NA";

impl Schema {
    pub fn new<I, S>(roles: I) -> Self
    where
        I: IntoIterator<Item = (S, Role)>,
        S: Into<String>,
    {
        Schema {
            missing_token: DEFAULT_MISSING_TOKEN.to_string(),
            roles: roles.into_iter().map(|(k, r)| (k.into(), r)).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSchema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let schema = Schema {
            missing_token: raw
                .missing_token
                .unwrap_or_else(|| DEFAULT_MISSING_TOKEN.to_string()),
            roles: raw.columns,
        };
        let outcomes = schema
            .roles
            .values()
            .filter(|r| **r == Role::Outcome)
            .count();
        if outcomes != 1 {
            return Err(Error::Schema(format!(
                "exactly one outcome column required, found {outcomes}"
            )));
        }
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn role(&self, column: &str) -> Option<Role> {
        self.roles.get(column).copied()
    }
}
