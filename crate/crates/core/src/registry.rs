//! Name → factory tables for the interchangeable strategies of the pipeline.
//!
//! Each family (neighbor-radius policies, voxel side policies, correspondence
//! gates, scan patterns, scene presets, ablation variants) registers its
//! members here and is looked up by name from configuration or the CLI.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown {family} `{name}`; available: {}", available.join(", "))]
pub struct UnknownName {
    pub family: &'static str,
    pub name: String,
    pub available: Vec<String>,
}

/// Ordered table of named factories. Registration order is the listing order.
pub struct Registry<F> {
    family: &'static str,
    entries: Vec<(&'static str, F)>,
}

impl<F> Registry<F> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &'static str, factory: F) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
        self
    }

    pub fn with(mut self, name: &'static str, factory: F) -> Self {
        self.register(name, factory);
        self
    }

    pub fn get(&self, name: &str) -> Result<&F, UnknownName> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| UnknownName {
                family: self.family,
                name: name.to_string(),
                available: self.names().iter().map(|s| s.to_string()).collect(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &F)> {
        self.entries.iter().map(|(n, f)| (*n, f))
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

impl<F> fmt::Debug for Registry<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("entries", &self.names())
            .finish()
    }
}
