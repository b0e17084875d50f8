use pidaudit_core::infotheory::{mutual_information, JointPmf};
use pidaudit_core::oracle::{exact_i_wedge, exact_pid_bounds, DiscreteSystem};
use proptest::prelude::*;

/// Every pair `f1: [k1] → [q]`, `f2: [k2] → [q]` taken literally, without
/// quotienting by relabelings of `Q`.
fn brute_force_i_wedge(sys: &DiscreteSystem, q: usize) -> f64 {
    let (k1, k2, ky) = sys.alphabet_sizes();
    let pmf = sys.pmf();
    let maps = |k: usize| -> Vec<Vec<usize>> {
        (0..q.pow(k as u32))
            .map(|mut code| {
                (0..k)
                    .map(|_| {
                        let v = code % q;
                        code /= q;
                        v
                    })
                    .collect()
            })
            .collect()
    };
    let mut best = 0.0f64;
    for f1 in maps(k1) {
        for f2 in maps(k2) {
            let consistent = pmf
                .cells()
                .all(|(ix, p)| p == 0.0 || f1[ix[0]] == f2[ix[1]]);
            if !consistent {
                continue;
            }
            let joint = JointPmf::from_fn(vec![q, ky], |ix| {
                pmf.cells()
                    .filter(|(c, _)| f1[c[0]] == ix[0] && c[2] == ix[1])
                    .map(|(_, p)| p)
                    .sum()
            })
            .unwrap();
            best = best.max(mutual_information(&joint, &[0], &[1]).unwrap());
        }
    }
    best
}

/// `I(Y; C)` where `C` labels connected components of the bipartite support
/// graph on `X1 ⊔ X2`: the finest common function of both sources.
fn component_i_wedge(sys: &DiscreteSystem) -> f64 {
    let (k1, k2, ky) = sys.alphabet_sizes();
    let mut parent: Vec<usize> = (0..k1 + k2).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for (ix, p) in sys.pmf().cells() {
        if p > 0.0 {
            let (a, b) = (find(&mut parent, ix[0]), find(&mut parent, k1 + ix[1]));
            parent[a] = b;
        }
    }
    let comp: Vec<usize> = (0..k1).map(|x| find(&mut parent, x)).collect();
    let joint = JointPmf::from_fn(vec![k1 + k2, ky], |ix| {
        sys.pmf()
            .cells()
            .filter(|(c, _)| comp[c[0]] == ix[0] && c[2] == ix[1])
            .map(|(_, p)| p)
            .sum()
    })
    .unwrap();
    mutual_information(&joint, &[0], &[1]).unwrap()
}

/// Random system with a sparse support so nontrivial common functions exist.
fn sparse_system(max_k: usize) -> impl Strategy<Value = DiscreteSystem> {
    (1..=max_k, 1..=max_k, 1..=3usize).prop_flat_map(|(k1, k2, ky)| {
        prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => 0.05..1.0f64], k1 * k2 * ky)
            .prop_filter("nonzero mass", |w| w.iter().sum::<f64>() > 0.0)
            .prop_map(move |w| {
                let total: f64 = w.iter().sum();
                DiscreteSystem::from_table(k1, k2, ky, w.iter().map(|x| x / total).collect()).unwrap()
            })
    })
}

fn permuted(sys: &DiscreteSystem, perm1: &[usize], perm2: &[usize]) -> DiscreteSystem {
    let (k1, k2, ky) = sys.alphabet_sizes();
    let pmf = JointPmf::from_fn(vec![k1, k2, ky], |ix| {
        sys.pmf().get(&[perm1[ix[0]], perm2[ix[1]], ix[2]])
    })
    .unwrap();
    DiscreteSystem::new(pmf).unwrap()
}

#[test]
fn gate_examples_match_exhaustive_enumeration() {
    for (sys, want) in [
        (DiscreteSystem::and(), 0.0),
        (DiscreteSystem::xor(), 0.0),
        (DiscreteSystem::copy(), 1.0),
        (DiscreteSystem::unique1(), 0.0),
    ] {
        let fast = exact_i_wedge(&sys, 4).unwrap().i_wedge_bits;
        let literal = brute_force_i_wedge(&sys, 4);
        assert!((fast - want).abs() < 1e-9);
        assert!((literal - want).abs() < 1e-9);
    }
}

#[test]
fn copy_bounds_have_no_unique_or_synergy() {
    let b = exact_pid_bounds(&DiscreteSystem::copy(), 4).unwrap();
    assert!((b.i_wedge - 1.0).abs() < 1e-12);
    assert!(b.uniq1.abs() < 1e-12 && b.uniq2.abs() < 1e-12 && b.syn.abs() < 1e-12);
}

#[test]
fn witness_realizes_the_value() {
    // Y = X1 mod 2 with X2 = X1 div 2 on a 4-symbol X1: common functions see only X2.
    let sys = DiscreteSystem::from_table(4, 2, 2, {
        let mut t = vec![0.0; 16];
        for x1 in 0..4 {
            t[(x1 * 2 + x1 / 2) * 2 + x1 % 2] = 0.25;
        }
        t
    })
    .unwrap();
    let r = exact_i_wedge(&sys, 4).unwrap();
    assert!(r.i_wedge_bits.abs() < 1e-12);
    assert_eq!(r.f1[0], r.f1[1]);
    let copyish = exact_i_wedge(&DiscreteSystem::copy(), 2).unwrap();
    assert_ne!(copyish.f1[0], copyish.f1[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_literal_enumeration(sys in sparse_system(3)) {
        let (k1, k2, _) = sys.alphabet_sizes();
        let q = k1.max(k2);
        let fast = exact_i_wedge(&sys, q).unwrap().i_wedge_bits;
        prop_assert!((fast - brute_force_i_wedge(&sys, q)).abs() < 1e-9);
    }

    #[test]
    fn matches_component_closed_form(sys in sparse_system(6)) {
        let fast = exact_i_wedge(&sys, 8).unwrap().i_wedge_bits;
        prop_assert!((fast - component_i_wedge(&sys)).abs() < 1e-9);
    }

    #[test]
    fn bounded_by_single_source_information(sys in sparse_system(5)) {
        let b = exact_pid_bounds(&sys, 8).unwrap();
        prop_assert!(b.i_wedge >= 0.0);
        prop_assert!(b.i_wedge <= b.i1.min(b.i2) + 1e-12);
        prop_assert!((b.uniq1 + b.uniq2 + b.i_wedge + b.syn - b.i12).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_relabeling(sys in sparse_system(4), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (k1, k2, _) = sys.alphabet_sizes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p1: Vec<usize> = (0..k1).collect();
        let mut p2: Vec<usize> = (0..k2).collect();
        p1.shuffle(&mut rng);
        p2.shuffle(&mut rng);
        let a = exact_i_wedge(&sys, 8).unwrap().i_wedge_bits;
        let b = exact_i_wedge(&permuted(&sys, &p1, &p2), 8).unwrap().i_wedge_bits;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn product_sources_share_nothing(
        m1 in prop::collection::vec(0.05..1.0f64, 1..5),
        m2 in prop::collection::vec(0.05..1.0f64, 1..5),
        channel in prop::collection::vec(0.05..1.0f64, 32),
    ) {
        let (k1, k2) = (m1.len(), m2.len());
        let pmf = JointPmf::from_fn(vec![k1, k2, 2], |ix| {
            let c = channel[ix[0] * 4 + ix[1]];
            m1[ix[0]] * m2[ix[1]] * if ix[2] == 1 { c } else { 1.0 - c + 0.05 }
        })
        .unwrap();
        let sys = DiscreteSystem::new(pmf).unwrap();
        prop_assert!(exact_i_wedge(&sys, 8).unwrap().i_wedge_bits.abs() < 1e-12);
    }
}
