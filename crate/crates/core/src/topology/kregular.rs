use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Topology;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

const CONNECT_TRIES: u64 = 100;
const PAIRING_RESTARTS: usize = 1000;

/// One configuration-model draw: stubs are paired at random, a pair that
/// would create a self-loop or a multi-edge is rejected and redrawn, and the
/// whole pairing restarts if only bad pairs remain.
fn pair_stubs(k: usize, degree: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<usize>>> {
    'restart: for _ in 0..PAIRING_RESTARTS {
        let mut stubs: Vec<usize> = (0..k).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(degree); k];
        while !stubs.is_empty() {
            let mut attempts = 0;
            loop {
                let a = rng.random_range(0..stubs.len());
                let b = rng.random_range(0..stubs.len());
                let (u, v) = (stubs[a], stubs[b]);
                if a != b && u != v && !adj[u].contains(&v) {
                    adj[u].push(v);
                    adj[v].push(u);
                    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                    stubs.swap_remove(hi);
                    stubs.swap_remove(lo);
                    break;
                }
                attempts += 1;
                if attempts > 50 * stubs.len() {
                    continue 'restart;
                }
            }
        }
        return Some(adj);
    }
    None
}

/// Random connected `degree`-regular graph on `k` nodes. Disconnected draws
/// are discarded and retried with a fresh sub-seed, up to 100 times.
pub fn k_regular(k: usize, degree: usize, seed: u64) -> Result<Topology> {
    if degree < 2 {
        return Err(Error::Topology(format!("k-regular degree must be >= 2, got {degree}")));
    }
    if degree >= k {
        return Err(Error::Topology(format!("degree {degree} must be below K = {k}")));
    }
    if (k * degree) % 2 == 1 {
        return Err(Error::Topology(format!(
            "K * degree = {k} * {degree} is odd; no {degree}-regular graph exists"
        )));
    }
    for attempt in 0..CONNECT_TRIES {
        let mut rng = seed::rng(seed, Stream::Topology, &[k as u64, degree as u64, attempt]);
        let Some(adj) = pair_stubs(k, degree, &mut rng) else {
            continue;
        };
        let topo = Topology::new(adj, true)?;
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(Error::Topology(format!(
        "no connected {degree}-regular graph on {k} nodes after {CONNECT_TRIES} tries"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_regular(t: &Topology, degree: usize) {
        for k in 0..t.len() {
            assert_eq!(t.degree(k), degree, "node {k}");
        }
        assert!(t.is_symmetric());
        assert!(t.is_connected());
    }

    #[test]
    fn degree_two_is_a_single_cycle() {
        let t = k_regular(80, 2, 1).unwrap();
        check_regular(&t, 2);
        // Walk the cycle: a connected 2-regular graph visits all 80 nodes before returning.
        let (mut prev, mut cur, mut steps) = (0usize, t.neighbors(0)[0], 1);
        while cur != 0 {
            let next = if t.neighbors(cur)[0] == prev { t.neighbors(cur)[1] } else { t.neighbors(cur)[0] };
            prev = cur;
            cur = next;
            steps += 1;
        }
        assert_eq!(steps, 80);
    }

    #[test]
    fn dense_cases() {
        for d in [4, 6, 10] {
            check_regular(&k_regular(80, d, 7).unwrap(), d);
        }
        check_regular(&k_regular(30, 4, 2).unwrap(), 4);
    }

    #[test]
    fn parity_and_range_errors() {
        assert!(k_regular(5, 3, 0).is_err());
        assert!(k_regular(5, 5, 0).is_err());
        assert!(k_regular(5, 1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(k_regular(40, 4, 3).unwrap(), k_regular(40, 4, 3).unwrap());
    }
}
