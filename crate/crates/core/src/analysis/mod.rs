//! Diagnostics: spectrum of the composed map, paraphrase-cluster distances
//! and visualization prep with exact t-SNE.

mod clusters;
mod tsne;
mod viz;
mod weights;

pub use clusters::{
    clusters_by_id_prefix, cosine_cluster_stats, pairwise_cosine_distances, parse_sentence_clusters,
    quantile_sorted, read_sentence_clusters, ClusterDistanceEntry, ClusterDistanceReport, FiveNumber,
};
pub use tsne::{
    conditional_affinities, kl_divergence, symmetrize, tsne, TsneConfig, TsneMetadata, TsneOutput, MAX_POINTS,
};
pub use viz::{vizprep, VizPoint, VizPrepConfig, VizPrepMetadata, VizPrepOutput};
pub use weights::{
    analyze_model, eff_rank_entropy, eff_rank_threshold, effective_map, orth_deviation, singular_values,
    spectrum_report, WeightReport, DEFAULT_TAU,
};
