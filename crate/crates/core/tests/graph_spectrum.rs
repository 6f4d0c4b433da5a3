//! Checks the normalized adjacency against an independent eigensolver and
//! verifies construction is permutation-invariant and deterministic.

use nalgebra::DMatrix;

use pluvio_core::data::Station;
use pluvio_core::graph::{
    build_adjacency, normalize_adjacency, AdjacencyScheme, StationGraph,
};
use pluvio_core::matrix::Matrix;

/// xorshift64*; self-contained so the oracle shares nothing with the code
/// under test.
struct TestRng(u64);

impl TestRng {
    fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit_f64() * (hi - lo)
    }
}

/// A random valid adjacency: square, symmetric, non-negative, no zero rows.
fn random_adjacency(rng: &mut TestRng, n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.unit_f64() < 0.6 {
                let w = rng.range(0.05, 5.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        if rng.unit_f64() < 0.7 {
            a[(i, i)] = rng.range(0.0, 2.0);
        }
    }
    // Guarantee no isolated node.
    for i in 0..n {
        if a.row(i).iter().sum::<f64>() == 0.0 {
            a[(i, i)] = 1.0;
        }
    }
    a
}

#[test]
fn normalized_spectrum_stays_in_unit_interval() {
    let mut rng = TestRng(0x5EED_0001);
    for case in 0..100 {
        let n = 1 + (rng.next_u64() % 8) as usize;
        let a = random_adjacency(&mut rng, n);
        let norm = normalize_adjacency(&a).unwrap();

        let dm = DMatrix::from_fn(n, n, |i, j| norm[(i, j)]);
        let eigen = dm.symmetric_eigen();
        for lambda in eigen.eigenvalues.iter() {
            assert!(
                (-1.0 - 1e-9..=1.0 + 1e-9).contains(lambda),
                "case {case}: eigenvalue {lambda} outside [-1, 1]"
            );
        }
    }
}

fn random_stations(rng: &mut TestRng, n: usize) -> Vec<Station> {
    (0..n)
        .map(|i| Station {
            station_id: format!("ST-{i:02}"),
            name: format!("Station {i}"),
            latitude_deg: rng.range(-20.0, -10.0),
            longitude_deg: rng.range(-70.0, -60.0),
            altitude_m: rng.range(200.0, 4500.0),
        })
        .collect()
}

#[test]
fn adjacency_is_permutation_invariant() {
    let mut rng = TestRng(0x5EED_0002);
    for _ in 0..25 {
        let n = 2 + (rng.next_u64() % 6) as usize;
        let stations = random_stations(&mut rng, n);
        // A deterministic shuffle of the station order.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        let permuted: Vec<Station> = perm.iter().map(|&i| stations[i].clone()).collect();

        for scheme in [
            AdjacencyScheme::default(),
            AdjacencyScheme::Knn { k: 2, epsilon_km: 1.0, self_loop_weight: 1.0 },
        ] {
            let a = build_adjacency(&stations, &scheme).unwrap();
            let b = build_adjacency(&permuted, &scheme).unwrap();
            // Entry (i, j) of the permuted adjacency must equal, bit for
            // bit, entry (perm[i], perm[j]) of the original.
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(
                        b[(i, j)].to_bits(),
                        a[(perm[i], perm[j])].to_bits(),
                        "scheme {scheme:?} differs at ({i},{j})"
                    );
                }
            }
        }
    }
}

#[test]
fn construction_is_bit_for_bit_deterministic() {
    let mut rng = TestRng(0x5EED_0003);
    let stations = random_stations(&mut rng, 6);
    let g1 = StationGraph::build(&stations, &AdjacencyScheme::default()).unwrap();
    let g2 = StationGraph::build(&stations, &AdjacencyScheme::default()).unwrap();
    assert_eq!(g1, g2);
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(
                g1.normalized_adjacency[(i, j)].to_bits(),
                g2.normalized_adjacency[(i, j)].to_bits()
            );
        }
    }
    assert_eq!(g1.node_order, vec!["ST-00", "ST-01", "ST-02", "ST-03", "ST-04", "ST-05"]);
}

#[test]
fn normalized_rows_shrink_high_degree_hubs() {
    // A hub connected to everything ends up with smaller normalized weights
    // than a leaf pair with the same raw weight.
    let mut rng = TestRng(0x5EED_0004);
    for _ in 0..20 {
        let n = 3 + (rng.next_u64() % 5) as usize;
        let a = random_adjacency(&mut rng, n);
        let norm = normalize_adjacency(&a).unwrap();
        // Spot-check the defining formula on every entry.
        let degrees: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        for i in 0..n {
            for j in 0..n {
                let expect = a[(i, j)] / (degrees[i] * degrees[j]).sqrt();
                assert!((norm[(i, j)] - expect).abs() <= 1e-15 * expect.abs().max(1.0));
            }
        }
    }
}
