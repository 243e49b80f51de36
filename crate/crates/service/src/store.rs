//! JSON files under a data directory: `scenarios/<id>.json` and
//! `sessions/<id>.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::warn;
use serde::de::DeserializeOwned;
use serde::Serialize;

use ferry_core::planner::LiveSession;
use ferry_core::scenario::Scenario;

#[derive(Debug, Clone)]
pub struct Store {
    root: Option<PathBuf>,
}

/// Ids become file names, so they are restricted to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    /// Nothing is written; state lives only in memory.
    pub fn memory() -> Self {
        Store { root: None }
    }

    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("scenarios"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root: Some(root) })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn load_scenarios(&self) -> io::Result<Vec<Scenario>> {
        self.load_all("scenarios")
    }

    pub fn load_sessions(&self) -> io::Result<Vec<LiveSession>> {
        self.load_all("sessions")
    }

    pub fn save_scenario(&self, id: &str, scenario: &Scenario) -> io::Result<()> {
        self.save("scenarios", id, scenario)
    }

    pub fn save_session(&self, session: &LiveSession) -> io::Result<()> {
        self.save("sessions", &session.id, session)
    }

    fn load_all<T: DeserializeOwned>(&self, kind: &str) -> io::Result<Vec<T>> {
        let Some(root) = &self.root else { return Ok(Vec::new()) };
        let mut paths: Vec<PathBuf> = fs::read_dir(root.join(kind))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            match fs::read_to_string(&p).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
                Ok(v) => out.push(v),
                Err(e) => warn!("skipping {}: {e}", p.display()),
            }
        }
        Ok(out)
    }

    fn save<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> io::Result<()> {
        let Some(root) = &self.root else { return Ok(()) };
        let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        let path = root.join(kind).join(format!("{id}.json"));
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)
    }
}
