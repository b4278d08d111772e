use gosafeopt::gp::GpModel;
use gosafeopt::kernel::{KernelFamily, KernelSpec};
use proptest::prelude::*;

fn kernel_strategy(dim: usize) -> impl Strategy<Value = KernelSpec> {
    (
        prop_oneof![Just(KernelFamily::SquaredExponential), Just(KernelFamily::Matern32)],
        proptest::collection::vec(0.2f64..3.0, dim),
        0.1f64..4.0,
    )
        .prop_map(|(f, ls, s)| KernelSpec::new(f, ls, s).unwrap())
}

fn data(dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..20).prop_flat_map(move |n| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, dim), n),
            proptest::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factor_reproduces_system_matrix(
        kernel in kernel_strategy(2),
        (xs, ys) in data(2),
        noise in 0.01f64..1.0,
    ) {
        let m = GpModel::fit(kernel, noise, &xs, &ys).unwrap();
        let l = m.factor();
        let a = m.system_matrix();
        let n = l.len();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| l[i][k] * l[j][k]).sum();
                prop_assert!((v - a[i][j]).abs() < 1e-9 * (1.0 + a[i][j].abs()));
            }
        }
    }

    #[test]
    fn variance_within_prior(
        kernel in kernel_strategy(1),
        (xs, ys) in data(1),
        noise in 0.0f64..0.5,
        probe in -4.0f64..4.0,
    ) {
        let m = GpModel::fit(kernel.clone(), noise, &xs, &ys).unwrap();
        let p = m.predict(&[probe]).unwrap();
        prop_assert!(p.variance >= 0.0);
        prop_assert!(p.variance <= kernel.output_scale);
        prop_assert!(p.mean.is_finite());
    }

    #[test]
    fn incremental_matches_batch(
        kernel in kernel_strategy(2),
        (xs, ys) in data(2),
        noise in 0.05f64..1.0,
        probe in proptest::collection::vec(-3.0f64..3.0, 2),
    ) {
        let batch = GpModel::fit(kernel.clone(), noise, &xs, &ys).unwrap();
        let mut inc = GpModel::prior(kernel, noise).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            inc.push(x, *y).unwrap();
        }
        let (a, b) = (batch.predict(&probe).unwrap(), inc.predict(&probe).unwrap());
        prop_assert!((a.mean - b.mean).abs() < 1e-8);
        prop_assert!((a.variance - b.variance).abs() < 1e-8);
    }

    #[test]
    fn more_data_never_raises_variance(
        kernel in kernel_strategy(1),
        (xs, ys) in data(1),
        noise in 0.05f64..0.5,
        probe in -4.0f64..4.0,
    ) {
        let full = GpModel::fit(kernel.clone(), noise, &xs, &ys).unwrap();
        let fewer = GpModel::fit(kernel, noise, &xs[..xs.len() - 1], &ys[..ys.len() - 1]).unwrap();
        let (v_full, v_fewer) = (full.predict(&[probe]).unwrap().variance, fewer.predict(&[probe]).unwrap().variance);
        prop_assert!(v_full <= v_fewer + 1e-10);
    }
}
