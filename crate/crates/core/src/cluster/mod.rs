//! Clustering substrate: DBSCAN for pseudo labels, two-way K-means for part splits,
//! and silhouette scoring for cluster quality.

mod dbscan;
mod kmeans;
mod silhouette;

pub use dbscan::{
    dbscan, dbscan_precomputed, eps_heuristic, eps_heuristic_precomputed, DbscanParams,
    DEFAULT_EPS_PERCENTILE, DEFAULT_MIN_PTS,
};
pub use kmeans::{
    kmeans2, kmeans2_restarts, kmeans2_single, within_cluster_ss, KMeans2, DEFAULT_N_INIT,
    DEGENERATE_VARIANCE, MAX_LLOYD_ITERATIONS,
};
pub use silhouette::{
    mean_silhouette_per_cluster, silhouette_precomputed, silhouette_samples, ClusterQuality,
};
