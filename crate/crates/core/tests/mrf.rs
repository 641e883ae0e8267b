use hlf_core::mrf::{
    alpha_expansion, grid_edges, max_flow, BinaryEnergy, ExpansionParams, FlowNetwork, MrfProblem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force_min_cut(net: &FlowNetwork) -> f64 {
    let others: Vec<usize> = (0..net.nodes)
        .filter(|v| *v != net.source && *v != net.sink)
        .collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << others.len()) {
        let mut side = vec![false; net.nodes];
        side[net.source] = true;
        for (k, v) in others.iter().enumerate() {
            side[*v] = mask & (1 << k) != 0;
        }
        let cut: f64 = net
            .arcs
            .iter()
            .filter(|(u, v, _)| side[*u] && !side[*v])
            .map(|a| a.2)
            .sum();
        best = best.min(cut);
    }
    best
}

fn cut_capacity(net: &FlowNetwork, side: &[bool]) -> f64 {
    net.arcs
        .iter()
        .filter(|(u, v, _)| side[*u] && !side[*v])
        .map(|a| a.2)
        .sum()
}

fn random_network(seed: u64) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=10);
    let mut net = FlowNetwork::new(n, 0, n - 1).unwrap();
    let density: f64 = rng.gen_range(0.2..0.9);
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < density {
                let c = if rng.gen::<f64>() < 0.5 {
                    rng.gen_range(0..6) as f64
                } else {
                    rng.gen_range(0.0..5.0)
                };
                net.add_arc(u, v, c).unwrap();
            }
        }
    }
    net
}

#[test]
fn max_flow_equals_exhaustive_min_cut_on_100_graphs() {
    for seed in 0..100 {
        let net = random_network(seed);
        let cut = max_flow(&net);
        let oracle = brute_force_min_cut(&net);
        assert!(
            (cut.flow - oracle).abs() < 1e-9,
            "seed {seed}: flow {} vs cut {oracle}",
            cut.flow
        );
        assert!(cut.source_side[net.source] && !cut.source_side[net.sink]);
        assert!((cut_capacity(&net, &cut.source_side) - oracle).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn max_flow_matches_min_cut_property(seed in any::<u64>()) {
        let net = random_network(seed);
        let cut = max_flow(&net);
        prop_assert!((cut.flow - brute_force_min_cut(&net)).abs() < 1e-9);
    }

    #[test]
    fn binary_energy_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=8);
        let mut e = BinaryEnergy::new(n);
        for x in 0..n {
            e.add_unary(x, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        }
        for _ in 0..2 * n {
            let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if x == y { continue; }
            let (a, d) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b: f64 = rng.gen_range(-1.0..1.0);
            let c = a + d - b + rng.gen_range(0.0..1.0);
            e.add_pairwise(x, y, [a, b, c, d]).unwrap();
        }
        let (labels, energy) = e.minimize();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let l: Vec<bool> = (0..n).map(|k| mask & (1 << k) != 0).collect();
            best = best.min(e.evaluate(&l));
        }
        prop_assert!((energy - best).abs() < 1e-9, "{} vs {}", energy, best);
        prop_assert!((e.evaluate(&labels) - energy).abs() < 1e-12);
    }
}

fn random_grid_problem(rng: &mut ChaCha8Rng, w: usize, h: usize, labels: usize) -> MrfProblem {
    let unary = (0..w * h * labels)
        .map(|_| rng.gen_range(0.0..4.0))
        .collect();
    let mut p = MrfProblem::new(w * h, labels, unary, 2.0).unwrap();
    let weights: Vec<f64> = (0..2 * w * h).map(|_| rng.gen_range(0.0..2.0)).collect();
    let mut k = 0;
    for (a, b, wt) in grid_edges(w, h, |_, _| {
        k += 1;
        weights[k - 1]
    }) {
        p.add_edge(a, b, wt).unwrap();
    }
    p
}

#[test]
fn two_labels_on_3x3_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let p = random_grid_problem(&mut rng, 3, 3, 2);
        let mut best = f64::INFINITY;
        for mask in 0u32..512 {
            let l: Vec<usize> = (0..9).map(|k| ((mask >> k) & 1) as usize).collect();
            best = best.min(p.energy(&l));
        }
        let r = alpha_expansion(&p, &[0; 9], &ExpansionParams::default()).unwrap();
        assert!((r.energy - best).abs() < 1e-9, "{} vs {best}", r.energy);
    }
}

#[test]
fn expansion_energy_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let p = random_grid_problem(&mut rng, 8, 7, 6);
        let init: Vec<usize> = (0..56).map(|_| rng.gen_range(0..6)).collect();
        let r = alpha_expansion(&p, &init, &ExpansionParams::default()).unwrap();
        for w in r.sweep_energies.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.energy <= p.energy(&init));
        assert!(r.energy <= p.energy(&p.unary_argmin()) + 1e-9);
        assert!((p.energy(&r.labels) - r.energy).abs() < 1e-9);
    }
}

fn edmonds_karp(net: &FlowNetwork) -> f64 {
    let n = net.nodes;
    let mut cap = vec![vec![0.0f64; n]; n];
    for &(u, v, c) in &net.arcs {
        cap[u][v] += c;
    }
    let mut flow = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[net.source] = net.source;
        let mut queue = std::collections::VecDeque::from([net.source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 1e-12 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[net.sink] == usize::MAX {
            return flow;
        }
        let mut b = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            b = b.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = net.sink;
        while v != net.source {
            cap[prev[v]][v] -= b;
            cap[v][prev[v]] += b;
            v = prev[v];
        }
        flow += b;
    }
}

#[test]
fn max_flow_agrees_with_edmonds_karp_on_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let (w, h) = (rng.gen_range(3..9), rng.gen_range(3..9));
        let n = w * h + 2;
        let (s, t) = (w * h, w * h + 1);
        let mut net = FlowNetwork::new(n, s, t).unwrap();
        for (a, b, _) in grid_edges(w, h, |_, _| 0.0) {
            net.add_arc(a, b, rng.gen_range(0.0..3.0)).unwrap();
            net.add_arc(b, a, rng.gen_range(0.0..3.0)).unwrap();
        }
        for p in 0..w * h {
            if rng.gen::<f64>() < 0.4 {
                net.add_arc(s, p, rng.gen_range(0.0..4.0)).unwrap();
            }
            if rng.gen::<f64>() < 0.4 {
                net.add_arc(p, t, rng.gen_range(0.0..4.0)).unwrap();
            }
        }
        let cut = max_flow(&net);
        let oracle = edmonds_karp(&net);
        assert!((cut.flow - oracle).abs() < 1e-8, "{} vs {oracle}", cut.flow);
        assert!((cut_capacity(&net, &cut.source_side) - oracle).abs() < 1e-8);
    }
}
