//! Thread-level parallelism for independent work items. Results always come
//! back in input order, so the output does not depend on the thread count.

use std::thread;

use smc_core::metrics::EmptyTruthPolicy;
use smc_core::pipeline::{tune_with, TuneGrid, TuneReport};
use smc_core::refine::RefineConfig;
use smc_core::sharing::{share_tags_with, SharingConfig};
use smc_core::subspace::ClusterAssignment;
use smc_core::tagmat::{FeatureMatrix, Rectification, SimilarityGraph, TagMatrix};

/// Maps `f` over `items` on up to `threads` scoped threads. Item `i` goes to
/// worker `i % threads`.
pub fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(threads)
                        .map(|(i, item)| (i, f(item)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub fn share_tags(
    tags: &TagMatrix,
    clusters: &ClusterAssignment,
    image_sims: &SimilarityGraph,
    config: &SharingConfig,
    threads: usize,
) -> smc_core::Result<TagMatrix> {
    share_tags_with(tags, clusters, image_sims, config, |members, propose| {
        par_map(members, threads, propose)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn tune(
    tags: &TagMatrix,
    image_features: &FeatureMatrix,
    tag_features: &FeatureMatrix,
    truth: &TagMatrix,
    grid: &TuneGrid,
    base: &RefineConfig,
    rectification: Rectification,
    policy: EmptyTruthPolicy,
    threads: usize,
) -> smc_core::Result<TuneReport> {
    tune_with(
        tags,
        image_features,
        tag_features,
        truth,
        grid,
        base,
        rectification,
        policy,
        |configs, score| par_map(configs, threads, score),
    )
}
