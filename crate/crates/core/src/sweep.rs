//! Order-preserving parallel execution of independent work items.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "DICKE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    #[default]
    Auto,
    Count(usize),
}

impl Serialize for Workers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Workers::Auto => s.serialize_str("auto"),
            Workers::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Workers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) if n > 0 => Ok(Workers::Count(n)),
            Raw::Count(_) => Err(serde::de::Error::custom("worker count must be >= 1")),
            Raw::Name(s) if s == "auto" => Ok(Workers::Auto),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a count, got {s:?}"
            ))),
        }
    }
}

impl std::str::FromStr for Workers {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Workers::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Workers::Count(n)),
            _ => Err(format!("expected \"auto\" or a positive count, got {s:?}")),
        }
    }
}

impl Workers {
    /// Resolved thread count; `Auto` honours [`WORKERS_ENV`] before falling
    /// back to the number of available cores.
    pub fn resolve(self) -> usize {
        match self {
            Workers::Count(n) => n.max(1),
            Workers::Auto => std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

/// Runs `job(index, item)` for every item and returns the results in item
/// order, identical to a sequential run for any worker count.
///
/// After the first failure no new items are started; the reported error is
/// the lowest-index failure among the items that ran, wrapped in [`Error::WorkItem`]
/// together with the number of items that completed.
pub fn schedule<I, T, F>(items: &[I], workers: Workers, job: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(usize, &I) -> Result<T> + Sync,
{
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let n = workers.resolve();
    let cancel = AtomicBool::new(false);
    let run = || {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                if cancel.load(Ordering::Relaxed) {
                    return None;
                }
                let r = job(i, item);
                if r.is_err() {
                    cancel.store(true, Ordering::Relaxed);
                }
                Some(r)
            })
            .collect::<Vec<Option<Result<T>>>>()
    };
    let slots = if n == 1 {
        // Plain sequential loop; no pool needed.
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let r = job(i, item);
            let failed = r.is_err();
            out.push(Some(r));
            if failed {
                break;
            }
        }
        out
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?
            .install(run)
    };

    let completed = slots.iter().filter(|s| matches!(s, Some(Ok(_)))).count();
    let mut out = Vec::with_capacity(items.len());
    for (index, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => {
                return Err(Error::WorkItem {
                    index,
                    completed,
                    source: Box::new(e),
                })
            }
            None => {}
        }
    }
    Ok(out)
}
