//! Station graph construction.
//!
//! Stations become nodes; edge weights fall off with great-circle distance so
//! that nearby gauges, whose rainfall is correlated, exchange more signal
//! during graph convolution. The normalized adjacency produced here is the
//! operator applied at every model layer.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Station;
use crate::matrix::Matrix;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("EmptyStations: a graph needs at least one station")]
    EmptyStations,
    #[error("DuplicateCoordinates: stations {a} and {b} coincide and epsilon_km is 0")]
    DuplicateCoordinates { a: String, b: String },
    #[error("IsolatedNode: node {node} has zero degree and cannot be normalized")]
    IsolatedNode { node: usize },
    #[error("NotSquare: adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("NotSymmetric: adjacency differs at ({i},{j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("NegativeWeight: adjacency entry ({i},{j}) is negative")]
    NegativeWeight { i: usize, j: usize },
}

/// Great-circle distance between two (latitude, longitude) points in degrees,
/// on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(lat1_deg: f64, lon1_deg: f64, lat2_deg: f64, lon2_deg: f64) -> f64 {
    const RAD: f64 = core::f64::consts::PI / 180.0;
    let (phi1, phi2) = (lat1_deg * RAD, lat2_deg * RAD);
    let half_dphi = (phi2 - phi1) / 2.0;
    let half_dlambda = (lon2_deg - lon1_deg) * RAD / 2.0;
    let a = libm::sin(half_dphi) * libm::sin(half_dphi)
        + libm::cos(phi1) * libm::cos(phi2) * libm::sin(half_dlambda) * libm::sin(half_dlambda);
    // Clamp against rounding pushing `a` a hair outside [0, 1].
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(a.clamp(0.0, 1.0)))
}

/// How station pairs become weighted edges.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjacencyScheme {
    /// Every pair is connected with weight `1 / (distance_km + epsilon_km)`.
    InverseDistance { epsilon_km: f64, self_loop_weight: f64 },
    /// Each station connects to its `k` nearest neighbours (union of both
    /// directions, so the result stays symmetric), with the same
    /// inverse-distance weights.
    Knn { k: usize, epsilon_km: f64, self_loop_weight: f64 },
}

impl Default for AdjacencyScheme {
    fn default() -> Self {
        AdjacencyScheme::InverseDistance {
            epsilon_km: 1.0,
            self_loop_weight: 1.0,
        }
    }
}

/// All pairwise great-circle distances, in station order.
pub fn pairwise_distances_km(stations: &[Station]) -> Matrix {
    Matrix::from_fn(stations.len(), stations.len(), |i, j| {
        haversine_km(
            stations[i].latitude_deg,
            stations[i].longitude_deg,
            stations[j].latitude_deg,
            stations[j].longitude_deg,
        )
    })
}

/// Builds the weighted adjacency matrix for `stations` under `scheme`.
/// Node order follows input order; the result is symmetric with non-negative
/// entries and `self_loop_weight` on the diagonal.
pub fn build_adjacency(stations: &[Station], scheme: &AdjacencyScheme) -> Result<Matrix, GraphError> {
    if stations.is_empty() {
        return Err(GraphError::EmptyStations);
    }
    let n = stations.len();
    let dist = pairwise_distances_km(stations);
    let (epsilon_km, self_loop_weight) = match *scheme {
        AdjacencyScheme::InverseDistance { epsilon_km, self_loop_weight }
        | AdjacencyScheme::Knn { epsilon_km, self_loop_weight, .. } => (epsilon_km, self_loop_weight),
    };

    if epsilon_km == 0.0 {
        for i in 0..n {
            for j in i + 1..n {
                if dist[(i, j)] == 0.0 {
                    return Err(GraphError::DuplicateCoordinates {
                        a: stations[i].station_id.clone(),
                        b: stations[j].station_id.clone(),
                    });
                }
            }
        }
    }

    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        adj[(i, i)] = self_loop_weight;
    }
    match *scheme {
        AdjacencyScheme::InverseDistance { .. } => {
            for i in 0..n {
                for j in i + 1..n {
                    let w = 1.0 / (dist[(i, j)] + epsilon_km);
                    adj[(i, j)] = w;
                    adj[(j, i)] = w;
                }
            }
        }
        AdjacencyScheme::Knn { k, .. } => {
            for i in 0..n {
                let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                // Ties break on index so the graph does not depend on sort
                // internals.
                order.sort_by(|&a, &b| {
                    dist[(i, a)]
                        .partial_cmp(&dist[(i, b)])
                        .expect("distances are finite")
                        .then(a.cmp(&b))
                });
                for &j in order.iter().take(k) {
                    let w = 1.0 / (dist[(i, j)] + epsilon_km);
                    adj[(i, j)] = w;
                    adj[(j, i)] = w;
                }
            }
        }
    }
    Ok(adj)
}

/// Symmetrically normalizes an adjacency matrix:
/// `out[i][j] = a[i][j] / sqrt(degree(i) * degree(j))`, with degrees the row
/// sums of `a`. The result's eigenvalues lie in [-1, 1], which keeps
/// repeated graph convolutions from amplifying node features.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix, GraphError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    for i in 0..rows {
        for j in 0..cols {
            if a[(i, j)] < 0.0 {
                return Err(GraphError::NegativeWeight { i, j });
            }
            if j > i && a[(i, j)] != a[(j, i)] {
                return Err(GraphError::NotSymmetric { i, j });
            }
        }
    }
    let degrees: Vec<f64> = (0..rows).map(|i| a.row(i).iter().sum()).collect();
    if let Some(node) = degrees.iter().position(|&d| d == 0.0) {
        return Err(GraphError::IsolatedNode { node });
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        a[(i, j)] / libm::sqrt(degrees[i] * degrees[j])
    }))
}

/// A station graph with both raw and normalized adjacency, keeping the node
/// order that ties matrix rows back to station ids.
#[derive(Debug, Clone, PartialEq)]
pub struct StationGraph {
    pub node_order: Vec<String>,
    pub distances_km: Matrix,
    pub adjacency: Matrix,
    pub normalized_adjacency: Matrix,
}

impl StationGraph {
    pub fn build(stations: &[Station], scheme: &AdjacencyScheme) -> Result<Self, GraphError> {
        let adjacency = build_adjacency(stations, scheme)?;
        let normalized_adjacency = normalize_adjacency(&adjacency)?;
        Ok(StationGraph {
            node_order: stations.iter().map(|s| s.station_id.clone()).collect(),
            distances_km: pairwise_distances_km(stations),
            adjacency,
            normalized_adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.node_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_order.is_empty()
    }
}
