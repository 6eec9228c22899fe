use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};

use super::{EmbeddingCache, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for every further one.
    pub backoff: Duration,
    /// Maximum number of batches in flight.
    pub parallelism: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            batch_size: 64,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            parallelism: 4,
        }
    }
}

/// Embeds `texts`, serving hits from `cache` and sending misses to `provider`
/// in bounded batches. Results are in input order and every new vector is
/// persisted before this returns.
pub fn embed_batch(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    options: &BatchOptions,
) -> Result<Vec<EmbeddingVector>> {
    if provider.dim() != cache.dim() {
        return Err(Error::DimensionMismatch {
            expected: cache.dim(),
            actual: provider.dim(),
        });
    }
    let batch_size = options.batch_size.max(1);

    let mut seen = HashSet::new();
    let mut misses = Vec::new();
    for text in texts {
        if cache.get(text)?.is_none() && seen.insert(text.as_str()) {
            misses.push(text.clone());
        }
    }
    debug!(
        "embedding {} texts: {} cache misses in {} batches",
        texts.len(),
        misses.len(),
        misses.len().div_ceil(batch_size)
    );

    let batches: Vec<&[String]> = misses.chunks(batch_size).collect();
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let workers = options.parallelism.max(1).min(batches.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(idx) else {
                    return;
                };
                let result = run_batch(idx, batch, provider, cache.dim(), options)
                    .and_then(|vectors| {
                        let items: Vec<(String, Vec<f32>)> =
                            batch.iter().cloned().zip(vectors).collect();
                        cache.insert_many(&items)
                    });
                if let Err(e) = result {
                    let mut slot = failure.lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    return;
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    texts
        .iter()
        .map(|t| {
            let v = cache.get(t)?.ok_or_else(|| {
                Error::InvalidInput(format!("no embedding produced for text `{t}`"))
            })?;
            EmbeddingVector::from_f32(&v)
        })
        .collect()
}

fn run_batch(
    index: usize,
    batch: &[String],
    provider: &dyn EmbeddingProvider,
    dim: usize,
    options: &BatchOptions,
) -> Result<Vec<Vec<f32>>> {
    let attempts = options.max_attempts.max(1);
    let mut delay = options.backoff;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match provider.embed(batch) {
            Ok(vectors) => {
                if vectors.len() != batch.len() {
                    last = format!("expected {} vectors, got {}", batch.len(), vectors.len());
                } else {
                    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: bad.len(),
                        });
                    }
                    return Ok(vectors);
                }
            }
            Err(e) => last = e.0,
        }
        if attempt < attempts {
            warn!("embedding batch {index} attempt {attempt} failed: {last}; retrying");
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
    Err(Error::Provider {
        batch: index,
        attempts,
        message: last,
    })
}
