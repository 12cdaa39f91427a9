//! Central finite-difference checks of every backward pass.

mod common;

use common::{random_tensor, rel_err, STEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvrecon::model::{mse_loss, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_forward_matches_naive_loops(seed in any::<u64>()) {
        let e = common::conv_forward_error(seed);
        prop_assert!(e <= 1e-12, "max deviation {}", e);
    }

    #[test]
    fn conv_backward_matches_finite_differences(seed in any::<u64>()) {
        common::conv_gradcheck(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn dense_backward_matches_finite_differences(seed in any::<u64>()) {
        common::dense_gradcheck(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn relu_backward_matches_finite_differences(seed in any::<u64>()) {
        common::relu_gradcheck(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn full_tiny_model_matches_finite_differences(seed in any::<u64>()) {
        common::model_gradcheck(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn mse_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.gen_range(1..12);
        let p = random_tensor(vec![n], &mut r);
        let t = random_tensor(vec![n], &mut r);
        let (_, g) = mse_loss(p.data(), t.data()).unwrap();
        let g = Tensor::vector(g);
        for i in 0..n {
            let mut a = p.clone();
            a.data_mut()[i] += STEP;
            let mut b = p.clone();
            b.data_mut()[i] -= STEP;
            let num = (mse_loss(a.data(), t.data()).unwrap().0 - mse_loss(b.data(), t.data()).unwrap().0) / (2.0 * STEP);
            prop_assert!(rel_err(g.data()[i], num) <= 1e-6);
        }
    }
}
