use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

/// Record of one artifact-producing invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Wall-clock milliseconds per phase; the only non-reproducible field.
    pub timings_ms: BTreeMap<String, u128>,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Self {
        RunManifest {
            command: command.to_string(),
            version: concat!("ircut ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            clock: None,
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Closes the running phase, if any, and starts `name`.
    pub fn phase(&mut self, name: &str) {
        self.stop();
        self.clock = Some((name.to_string(), Instant::now()));
    }

    fn stop(&mut self) {
        if let Some((name, t)) = self.clock.take() {
            self.timings_ms.insert(name, t.elapsed().as_millis());
        }
    }

    pub fn write(mut self, path: &Path) -> ircut::Result<()> {
        self.stop();
        ircut::data::write_json(path, &self)
    }
}
