/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

mod common;

use admm_prune::admm::{hard_prune, init_admm, project_cardinality, retrain_masked, run_admm_with, u_update, z_update, AdmmConfig, AdmmState};
use admm_prune::data::batches;
use admm_prune::model::{Layer, Model};
use admm_prune::trainer::TrainConfig;
use admm_prune::Tensor;
use common::{brute_force_projection, synthetic_dataset};
use proptest::prelude::*;

fn small_vec() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(prop_oneof![4 => -10.0f32..10.0, 1 => Just(0.0f32)], 1..=8)
}

fn any_vec() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-100.0f32..100.0, 1..=200)
}

fn tensor(v: &[f32]) -> Tensor {
    Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn projection_matches_enumeration(v in small_vec(), pick in 0usize..8) {
        let l = 1 + pick % v.len();
        let z = project_cardinality(&tensor(&v), l).unwrap();
        prop_assert_eq!(z.data(), &brute_force_projection(&v, l)[..]);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(v in any_vec(), pick in 0usize..200) {
        let l = 1 + pick % v.len();
        let once = project_cardinality(&tensor(&v), l).unwrap();
        prop_assert!(once.count_nonzero() <= l);
        prop_assert_eq!(project_cardinality(&once, l).unwrap(), once.clone());
        for (&a, &b) in v.iter().zip(once.data()) {
            prop_assert!(b == 0.0 || a == b);
        }
    }

    #[test]
    fn projection_distance_is_smallest_squares(v in any_vec(), pick in 0usize..200) {
        let l = 1 + pick % v.len();
        let z = project_cardinality(&tensor(&v), l).unwrap();
        let dist: f64 = v.iter().zip(z.data()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
        let mut sq: Vec<f64> = v.iter().map(|&a| (a as f64).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let smallest: f64 = sq[..v.len() - l].iter().sum();
        prop_assert!((dist - smallest).abs() <= 1e-9 * smallest.max(1.0));
    }

    #[test]
    fn projection_commutes_with_positive_scaling(v in any_vec(), pick in 0usize..200, e in -8i32..8) {
        let l = 1 + pick % v.len();
        let c = 2f32.powi(e);
        let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
        let lhs = project_cardinality(&tensor(&scaled), l).unwrap();
        let rhs: Vec<f32> = project_cardinality(&tensor(&v), l).unwrap().data().iter().map(|x| x * c).collect();
        prop_assert_eq!(lhs.data(), &rhs[..]);
    }

    #[test]
    fn z_stays_feasible_and_u_tracks_gap(
        w in prop::collection::vec(-1.0f32..1.0, 30),
        w2 in prop::collection::vec(-1.0f32..1.0, 30),
        l in 1usize..30,
    ) {
        let w = tensor(&w);
        let w2 = tensor(&w2);
        let cfg = AdmmConfig::with_defaults(&[30], vec![l], TrainConfig::default());
        let mut s = init_admm(&[&w], &cfg).unwrap();
        prop_assert!(s.z()[0].count_nonzero() <= l);
        for weights in [&w2, &w, &w2] {
            z_update(&mut s, &[weights], &cfg).unwrap();
            prop_assert!(s.z()[0].count_nonzero() <= l);
            let before = s.u()[0].clone();
            u_update(&mut s, &[weights]).unwrap();
            for i in 0..30 {
                let expected = before.data()[i] + (weights.data()[i] - s.z()[0].data()[i]);
                prop_assert_eq!(s.u()[0].data()[i].to_bits(), expected.to_bits());
            }
        }
    }

    #[test]
    fn batches_cover_every_sample_once(n in 1usize..60, size in 1usize..20, seed in any::<u64>(), shuffle in any::<bool>()) {
        let data = synthetic_dataset(n, 0);
        let mut seen: Vec<usize> = batches(&data, size, seed, shuffle).unwrap().flat_map(|b| b.indices).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn masked_retraining_keeps_budget_at_every_step(seed in any::<u64>(), l1 in 1usize..500, l2 in 1usize..60) {
        let mut m = Model::new(
            &[1, 28, 28],
            vec![Layer::Flatten, Layer::dense("h", 784, 6), Layer::Relu, Layer::dense("out", 6, 10)],
        )
        .unwrap();
        m.init_weights(seed);
        let data = synthetic_dataset(24, seed);
        let mask = hard_prune(&mut m, &[l1, l2]).unwrap();
        let cfg = TrainConfig { steps: 15, batch_size: 8, seed, ..TrainConfig::default() };
        let mut ok = true;
        retrain_masked(&mut m, &mask, &data, &cfg, &mut |_, model| {
            let counts: Vec<usize> = model.prunable().iter().map(|w| w.count_nonzero()).collect();
            ok &= counts == vec![l1, l2];
            Ok(())
        })
        .unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn toy_admm_reaches_tolerance(seed in any::<u64>(), rho_pick in 0usize..3) {
        let rho = [0.1, 1.0, 10.0][rho_pick];
        let mut problem = common::near_sparse_problem(&[(64, 8), (40, 12)], 1e-3, seed);
        let cfg = AdmmConfig {
            rho: vec![rho; 2],
            epsilon: vec![1e-6; 2],
            max_iters: 50,
            ..AdmmConfig::with_defaults(&[64, 40], vec![8, 12], TrainConfig::default())
        };
        let mut state: AdmmState = init_admm(&[&problem.weights[0], &problem.weights[1]], &cfg).unwrap();
        let converged = run_admm_with(&mut problem, &mut state, &cfg, &mut |_| Ok(())).unwrap();
        prop_assert!(converged, "rho {} stopped at k = {}", rho, state.k());
    }
}
