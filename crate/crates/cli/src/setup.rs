//! Config and backend resolution shared by every command.

use std::path::Path;
use std::sync::Arc;

use bonsai_core::backends::{BackendRegistry, Backends, MockBackend, MockScript};
use bonsai_core::{ConfigFile, Result, RunConfig};

/// A validated run config and the registry its backend names resolve in.
#[derive(Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub registry: BackendRegistry,
}

impl Setup {
    /// Reads `config` (defaults when absent). `backend_script` replaces the
    /// script of the backend named `mock`; an unscripted `mock` is always
    /// registered so the defaults resolve.
    pub fn load(config: Option<&Path>, backend_script: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        file.run.validate()?;
        let mut registry = BackendRegistry::from_specs(&file.backends)?;
        if let Some(path) = backend_script {
            registry.register_mock("mock", Arc::new(MockBackend::new(MockScript::load(path)?)));
        } else if !file.backends.contains_key("mock") {
            registry.register_mock("mock", Arc::new(MockBackend::new(MockScript::default())));
        }
        Ok(Setup {
            config: file.run,
            registry,
        })
    }

    pub fn backends(&self) -> Result<Backends> {
        self.registry.resolve(&self.config)
    }

    pub fn backends_for(&self, config: &RunConfig) -> Result<Backends> {
        self.registry.resolve(config)
    }
}
