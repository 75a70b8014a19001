//! Name-keyed registry of strategy factories.
//!
//! Every interchangeable algorithm family in the engine (extrapolators,
//! Eulerian backends, advection schemes, shipped cases) is selected at runtime
//! by a string from the run configuration or the command line. A `Registry`
//! maps those names to factories producing boxed trait objects.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::ConfigError;

type Factory<T> = Box<dyn Fn() -> T + Send + Sync>;

pub struct Registry<T> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn() -> T + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str) -> Result<T, ConfigError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| ConfigError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }
}

impl<T> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}
