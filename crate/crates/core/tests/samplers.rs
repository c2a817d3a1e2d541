mod common;

use std::collections::{BTreeMap, VecDeque};

use ultratree::model::{sample_gaussian, suff_stats, SufficientStats};
use ultratree::posterior::PosteriorArchive;
use ultratree::priors::{PriorSpec, TopologyPrior};
use ultratree::rng::RngStream;
use ultratree::samplers::{
    default_init, hmc_leapfrog, length_log_ratio, run_chain, HmcConfig, HmcState, MhConfig, MhMode, Potential,
    PosteriorPotential, SamplerConfig, ScriptedChooser,
};
use ultratree::stats::{batch_means_se, exp_cdf, ks_statistic, mean};
use ultratree::treespace::{Coord, Split, Tree};
use ultratree::ultrametric::{validate_ultrametric, DEFAULT_TOL};
use ultratree::tree_to_matrix;

fn sp(leaves: &[usize], p: usize) -> Split {
    Split::from_leaves(leaves, p).unwrap()
}

fn four_leaf_truth() -> Tree {
    Tree::new(4, [(sp(&[1, 2], 4), 0.6), (sp(&[3, 4], 4), 0.4)], vec![0.5, 0.7, 0.6, 0.8], 0.3).unwrap()
}

fn stats_for(t: &Tree, n: usize, seed: u64) -> SufficientStats {
    let d = sample_gaussian(tree_to_matrix(t).matrix(), n, &mut RngStream::new(seed, 0)).unwrap();
    suff_stats(&d).unwrap()
}

fn archive_bytes(a: &PosteriorArchive) -> Vec<u8> {
    let mut buf = Vec::new();
    a.write_jsonl(&mut buf).unwrap();
    a.write_trace_csv(&mut buf).unwrap();
    buf
}

fn short_mh(seed: u64) -> SamplerConfig {
    SamplerConfig::Mh(MhConfig {
        iterations: 400,
        burn_in: 100,
        seed,
        ..MhConfig::default()
    })
}

fn short_hmc(seed: u64) -> SamplerConfig {
    SamplerConfig::Hmc(HmcConfig {
        iterations: 60,
        burn_in: 20,
        step_size: 0.01,
        leapfrog_steps: 30,
        seed,
        ..HmcConfig::default()
    })
}

#[test]
fn runs_are_deterministic() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 100, 1);
    for cfg in [short_mh(5), short_hmc(5)] {
        let init = default_init(4, 5, 0).unwrap();
        let a = run_chain(&stats, init.clone(), &cfg, 0).unwrap();
        let b = run_chain(&stats, init.clone(), &cfg, 0).unwrap();
        assert_eq!(archive_bytes(&a), archive_bytes(&b));
        assert_eq!(a.acceptance, b.acceptance);
        let c = run_chain(&stats, init, &cfg, 1).unwrap();
        assert_ne!(archive_bytes(&a), archive_bytes(&c));
    }
    let wrong = default_init(5, 5, 0).unwrap();
    assert!(run_chain(&stats, wrong, &short_mh(5), 0).is_err());
}

#[test]
fn archived_states_are_valid() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 50, 2);
    let mh = run_chain(&stats, default_init(4, 1, 0).unwrap(), &short_mh(1), 0).unwrap();
    let multi = SamplerConfig::Mh(MhConfig {
        iterations: 400,
        burn_in: 0,
        mode: MhMode::Multifurcating,
        prior: PriorSpec { topology: TopologyPrior::default_pd(), edge_mean: 1.0 },
        ..MhConfig::default()
    });
    let mf = run_chain(&stats, default_init(4, 1, 0).unwrap(), &multi, 0).unwrap();
    let hmc = run_chain(&stats, default_init(4, 1, 0).unwrap(), &short_hmc(1), 0).unwrap();
    for a in [&mh, &mf, &hmc] {
        a.check().unwrap();
        for t in a.trees() {
            t.check_invariants().unwrap();
            assert!(validate_ultrametric(tree_to_matrix(t).matrix(), DEFAULT_TOL).unwrap().is_valid());
        }
    }
    assert!(mh.trees().all(|t| t.is_resolved()));
    assert!(mf.trees().any(|t| !t.is_resolved()));
    assert_eq!(mh.trace.len(), 400);
    assert_eq!(mh.len(), 300);
    assert_eq!(mh.records[0].iter, 100);
}

#[test]
fn length_ratio_detailed_balance() {
    let mut rng = RngStream::new(3, 0);
    for _ in 0..1000 {
        let (x, y) = (3.0 * rng.uniform() + 1e-3, 3.0 * rng.uniform() + 1e-3);
        let dll = 4.0 * rng.uniform() - 2.0;
        let (a, s) = (0.5 + rng.uniform(), 0.05 + rng.uniform());
        let fwd = length_log_ratio(x, y, dll, a, s);
        let bwd = length_log_ratio(y, x, -dll, a, s);
        assert!((fwd + bwd).abs() < 1e-12);
        assert_eq!(length_log_ratio(x, x, 0.0, a, s), 0.0);
    }
}

// Number of coordinates whose value changed from `prev` to `cur`, pairing a
// swapped-in split with the split it replaced.
fn changed_lengths(prev: &Tree, cur: &Tree) -> usize {
    let removed: Vec<Split> = prev.splits().filter(|s| !cur.has_split(s)).copied().collect();
    let added: Vec<Split> = cur.splits().filter(|s| !prev.has_split(s)).copied().collect();
    let mut count = 0;
    for c in cur.coords() {
        let before = match c {
            Coord::Internal(s) if added.contains(&s) => prev.get(Coord::Internal(removed[0])),
            _ => prev.get(c),
        };
        if cur.get(c) != before {
            count += 1;
        }
    }
    count
}

#[test]
fn acceptance_counters_replay_from_archive() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 40, 3);
    let init = default_init(4, 9, 0).unwrap();
    let cfg = SamplerConfig::Mh(MhConfig {
        iterations: 2000,
        burn_in: 0,
        seed: 9,
        ..MhConfig::default()
    });
    let a = run_chain(&stats, init.clone(), &cfg, 0).unwrap();
    let mut prev = init.clone();
    let (mut topo, mut lengths) = (0u64, 0u64);
    for t in a.trees() {
        if t.topology() != prev.topology() {
            topo += 1;
        }
        lengths += changed_lengths(&prev, t) as u64;
        prev = t.clone();
    }
    assert!(a.acceptance.topology_accepted > 0);
    assert_eq!(a.acceptance.topology_accepted, topo);
    assert_eq!(a.acceptance.length_accepted, lengths);
    assert_eq!(a.acceptance.topology_proposed, 2000);
    assert_eq!(a.acceptance.length_proposed, 2000 * 7);

    let cfg = SamplerConfig::Hmc(HmcConfig {
        iterations: 100,
        burn_in: 0,
        step_size: 0.02,
        leapfrog_steps: 20,
        seed: 9,
        ..HmcConfig::default()
    });
    let a = run_chain(&stats, init.clone(), &cfg, 0).unwrap();
    let mut prev = init;
    let (mut moves, mut topo) = (0u64, 0u64);
    for t in a.trees() {
        if *t != prev {
            moves += 1;
        }
        if t.topology() != prev.topology() {
            topo += 1;
        }
        prev = t.clone();
    }
    assert_eq!(a.acceptance.length_accepted, moves);
    assert_eq!(a.acceptance.topology_accepted, topo);
}

fn unit_state(t: &Tree, momentum: &[f64]) -> HmcState {
    let coords = t.coords();
    let m: BTreeMap<Coord, f64> = coords.iter().zip(momentum).map(|(c, v)| (*c, *v)).collect();
    let mass = coords.iter().map(|c| (*c, 1.0)).collect();
    HmcState::new(t, m, mass).unwrap()
}

#[test]
fn leapfrog_is_reversible_away_from_boundaries() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 100, 4);
    let pot = PosteriorPotential { stats: &stats, prior: PriorSpec::default() };
    let start = Tree::new(4, [(sp(&[1, 2], 4), 2.0), (sp(&[3, 4], 4), 2.5)], vec![3.0; 4], 2.0).unwrap();
    let mut st = unit_state(&start, &[0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6]);
    let init = st.clone();
    let mut none = ScriptedChooser(VecDeque::new());
    for _ in 0..50 {
        assert_eq!(hmc_leapfrog(&mut st, &pot, 0.001, 0.003, &mut none).unwrap(), 0);
    }
    for a in st.momentum.values_mut() {
        *a = -*a;
    }
    for _ in 0..50 {
        hmc_leapfrog(&mut st, &pot, 0.001, 0.003, &mut none).unwrap();
    }
    for (c, x) in &init.position {
        assert!((st.position[c] - x).abs() < 1e-9);
        assert!((st.momentum[c] + init.momentum[c]).abs() < 1e-9);
    }
}

#[test]
fn zero_threshold_surrogate_is_the_true_gradient() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 100, 5);
    let pot = PosteriorPotential { stats: &stats, prior: PriorSpec::default() };
    let mut rng = RngStream::new(5, 5);
    for _ in 0..20 {
        let t = common::random_any(4, &mut rng);
        let st = unit_state(&t, &vec![0.0; t.num_coords()]);
        assert_eq!(st.surrogate_gradient(&pot, 0.0).unwrap(), pot.gradient(&t).unwrap());
    }
}

#[test]
fn energy_error_scales_with_step_squared() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 60, 6);
    let pot = PosteriorPotential { stats: &stats, prior: PriorSpec::default() };
    let start = Tree::new(4, [(sp(&[1, 2], 4), 1.0), (sp(&[3, 4], 4), 1.2)], vec![1.5; 4], 1.0).unwrap();
    let momentum = [0.4, -0.3, 0.2, 0.5, -0.1, 0.3, -0.2];
    let drift = |eps: f64, steps: usize| {
        let mut st = unit_state(&start, &momentum);
        let h0 = pot.value(&start) + st.kinetic();
        let mut none = ScriptedChooser(VecDeque::new());
        for _ in 0..steps {
            assert_eq!(hmc_leapfrog(&mut st, &pot, eps, 0.003, &mut none).unwrap(), 0);
        }
        (pot.value(&st.tree()) + st.kinetic() - h0).abs()
    };
    let coarse = drift(0.004, 25);
    let fine = drift(0.002, 50);
    let ratio = coarse / fine;
    assert!((ratio - 4.0).abs() <= 1.0, "ratio {ratio} ({coarse} vs {fine})");
}

#[test]
fn three_leaf_posterior_concentrates_on_truth() {
    let truth = Tree::new(3, [(sp(&[1, 2], 3), 0.5)], vec![0.6, 0.8, 0.7], 0.4).unwrap();
    let s = sp(&[1, 2], 3);
    for seed in 0..20 {
        let stats = stats_for(&truth, 1000, 100 + seed);
        let cfg = SamplerConfig::Mh(MhConfig { seed, ..MhConfig::default() });
        let a = run_chain(&stats, default_init(3, seed, 0).unwrap(), &cfg, 0).unwrap();
        let f = a.trees().filter(|t| t.has_split(&s)).count() as f64 / a.len() as f64;
        assert!(f > 0.95, "seed {seed}: {f}");
    }
}

#[test]
fn hmc_and_mh_agree_on_four_leaves() {
    let truth = four_leaf_truth();
    let stats = stats_for(&truth, 200, 7);
    let init = default_init(4, 7, 0).unwrap();
    let mh = run_chain(&stats, init.clone(), &SamplerConfig::Mh(MhConfig { seed: 7, ..MhConfig::default() }), 0).unwrap();
    let hmc_cfg = HmcConfig {
        iterations: 1200,
        burn_in: 200,
        step_size: 0.005,
        leapfrog_steps: 60,
        seed: 7,
        ..HmcConfig::default()
    };
    let hmc = run_chain(&stats, init, &SamplerConfig::Hmc(hmc_cfg), 0).unwrap();
    let ll = |a: &PosteriorArchive| a.records.iter().map(|r| r.log_lik).collect::<Vec<_>>();
    let (x, y) = (ll(&mh), ll(&hmc));
    let se = batch_means_se(&x).hypot(batch_means_se(&y));
    let diff = (mean(&x) - mean(&y)).abs();
    assert!(diff < 3.0 * se, "mh {} hmc {} se {se}", mean(&x), mean(&y));
}

#[test]
fn single_leaf_prior_recovery() {
    let stats = SufficientStats::empty(1);
    let cfg = MhConfig {
        iterations: 20_200_000,
        burn_in: 200_000,
        thin: 200,
        prior: PriorSpec { edge_mean: 1.5, ..PriorSpec::default() },
        seed: 11,
        ..MhConfig::default()
    };
    let init = Tree::star(vec![1.0], 1.0).unwrap();
    let a = run_chain(&stats, init, &SamplerConfig::Mh(cfg), 0).unwrap();
    assert_eq!(a.len(), 100_000);
    let leaf: Vec<f64> = a.trees().map(|t| t.leaf_lengths()[0]).collect();
    let root: Vec<f64> = a.trees().map(|t| t.root_length()).collect();
    for xs in [leaf, root] {
        let ks = ks_statistic(&xs, exp_cdf(1.5));
        assert!(ks < 0.01, "KS {ks}");
    }
}
