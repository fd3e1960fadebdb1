use std::fs;
use std::path::Path;
use std::sync::Mutex;

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug)]
struct Usage {
    used: u32,
    day: Option<NaiveDate>,
}

/// An API key with a daily request quota. The check and the increment happen
/// under one lock, so concurrent callers can never push usage past the quota.
#[derive(Debug)]
pub struct ApiKey {
    id: String,
    quota: u32,
    usage: Mutex<Usage>,
}

impl ApiKey {
    pub fn new(id: impl Into<String>, quota: u32) -> Self {
        ApiKey {
            id: id.into(),
            quota,
            usage: Mutex::new(Usage { used: 0, day: None }),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    /// Requests spent on the current day stamp.
    pub fn used(&self) -> u32 {
        self.usage.lock().unwrap().used
    }

    /// Reserves one request for `today`, resetting the counter on a new day.
    pub fn try_acquire(&self, today: NaiveDate) -> bool {
        let mut u = self.usage.lock().unwrap();
        if u.day != Some(today) {
            u.day = Some(today);
            u.used = 0;
        }
        if u.used < self.quota {
            u.used += 1;
            true
        } else {
            false
        }
    }
}

/// `key<TAB>quota` lines; blank lines and `#` comments are skipped.
pub fn parse_keys(text: &str) -> std::result::Result<Vec<ApiKey>, String> {
    let mut keys = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, quota) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected key<TAB>quota", i + 1))?;
        let quota = quota
            .trim()
            .parse()
            .map_err(|_| format!("line {}: invalid quota `{quota}`", i + 1))?;
        keys.push(ApiKey::new(id.trim(), quota));
    }
    Ok(keys)
}

pub fn load_keys(path: &Path) -> Result<Vec<ApiKey>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_keys(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
