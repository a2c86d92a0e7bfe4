use dbq_bsde::gradient::{backprop_gradient, clip_gradient};
use dbq_bsde::*;
use dbq_core::sde::simulate;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_is_never_negative(seed in 0u64..10_000, d in 1usize..4, n in 1usize..6, u0 in -5.0f64..5.0) {
        let p = make_hjb(d, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, n, &Architecture::default_for(d), seed).unwrap();
        m.u0 = u0;
        let b = simulate(&p.sde, &m.grid, 6, seed, 1).unwrap();
        prop_assert!(loss_batch(&m, &p, &b).unwrap() >= 0.0);
    }

    #[test]
    fn clipping_preserves_signs(g in prop::collection::vec(-1e6f64..1e6, 1..64), c in 1e-3f64..1e3) {
        let mut clipped = g.clone();
        clip_gradient(&mut clipped, c);
        for (a, b) in g.iter().zip(&clipped) {
            prop_assert_eq!(a.signum(), b.signum());
            prop_assert!(b.abs() <= c);
        }
    }

    #[test]
    fn backprop_loss_equals_forward_loss(seed in 0u64..10_000, d in 1usize..3) {
        let p = make_allen_cahn(d, 0.5).unwrap();
        let m = BsdeModel::classical(&p, 4, &Architecture::default_for(d), seed).unwrap();
        let b = simulate(&p.sde, &m.grid, 5, seed, 0).unwrap();
        let (l, g) = backprop_gradient(&m, &p, &b).unwrap();
        prop_assert_eq!(l.to_bits(), loss_batch(&m, &p, &b).unwrap().to_bits());
        prop_assert_eq!(g.len(), m.n_params());
    }

    #[test]
    fn checkpoint_round_trip(seed in 0u64..10_000, n in 1usize..5) {
        let p = make_hjb(2, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, n, &Architecture::default_for(2), seed).unwrap();
        m.u0 = seed as f64 / 7.0;
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back: BsdeModel = BsdeModel::load(dir.path()).unwrap();
        prop_assert_eq!(back.params(), m.params());
    }
}
