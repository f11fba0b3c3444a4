use proptest::prelude::*;

use mrf_pinn::cliio::{Resolution, RunConfig};
use mrf_pinn::diffcore::conv::{self, ConvShape};
use mrf_pinn::fieldgrid::{correlation, relative_l2_error, Axis, Field, Grid2D};
use mrf_pinn::model::{dilation_for, receptive_field, BRANCH_RATIOS};
use mrf_pinn::problems::Task;
use mrf_pinn::stencil::{DerivativeOperator, PaddingSpec};
use mrf_pinn::weighting::{dynamic_weight_update, GradNorms, LossWeights, Scheme};

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

fn grid_6x7() -> Grid2D {
    Grid2D::cartesian(6, 7, 1.0, 1.5).unwrap()
}

fn field(data: &[f64]) -> Field {
    Field::from_data(grid_6x7(), 1, data.to_vec()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn correlation_ignores_scale_and_sign(a in values(42), b in values(42), k in 0.1f64..50.0, flip in any::<bool>()) {
        prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
        let (fa, fb) = (field(&a), field(&b));
        let s = if flip { -k } else { k };
        let r0 = correlation(&fa, &fb, 0).unwrap();
        let r1 = correlation(&fa.map(|v| v * s), &fb, 0).unwrap();
        prop_assert!((0.0..=1.0).contains(&r0));
        prop_assert!((r0 - r1).abs() < 1e-12);
        prop_assert!((correlation(&fa, &fa, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_triangle_bound(a in values(42), b in values(42), c in values(42)) {
        prop_assume!(norm(&b) > 1e-3 && norm(&c) > 1e-3);
        let (fa, fb, fc) = (field(&a), field(&b), field(&c));
        let ac = relative_l2_error(&fa, &fc, 0).unwrap();
        let ab = relative_l2_error(&fa, &fb, 0).unwrap();
        let bc = relative_l2_error(&fb, &fc, 0).unwrap();
        prop_assert!(ac <= ab * norm(&b) / norm(&c) + bc + 1e-12);
        prop_assert_eq!(relative_l2_error(&fc, &fc, 0).unwrap(), 0.0);
    }

    #[test]
    fn conv_preserves_shape_and_is_linear(
        h in 3usize..9,
        w in 3usize..9,
        dilation in 1usize..5,
        seed in values(2 * 9 * 2 + 2 * 81 * 2),
        alpha in -3.0f64..3.0,
    ) {
        let s = ConvShape { c_in: 2, c_out: 2, h, w, dilation };
        let n = 2 * h * w;
        let weight = &seed[..36];
        let x: Vec<f64> = (0..n).map(|k| seed[36 + k % 162]).collect();
        let y: Vec<f64> = (0..n).map(|k| seed[36 + (k * 7 + 3) % 162]).collect();
        let zero = [0.0; 2];
        let run = |input: &[f64]| {
            let mut out = vec![f64::NAN; n];
            conv::forward(s, input, weight, &zero, &mut out);
            out
        };
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + alpha * q).collect();
        let (fx, fy, fc) = (run(&x), run(&y), run(&combo));
        prop_assert_eq!(fc.len(), n);
        for k in 0..n {
            prop_assert!((fc[k] - (fx[k] + alpha * fy[k])).abs() <= 1e-9 * (1.0 + fc[k].abs()));
        }
    }

    #[test]
    fn dilation_shrinks_with_ratio(h in 3usize..2000, w in 3usize..2000) {
        let mut last = usize::MAX;
        for k in BRANCH_RATIOS {
            let d = dilation_for(h, w, k);
            prop_assert!(d >= 1 && d <= last);
            prop_assert_eq!(receptive_field(d), 2 * d + 1);
            last = d;
        }
    }

    #[test]
    fn derivative_transpose_is_adjoint(
        x in values(6 * 7 * 2),
        y in values(6 * 7 * 2),
        acc in prop::sample::select(vec![2usize, 4]),
        d in 1usize..=2,
        second in any::<bool>(),
    ) {
        let axis = if second { Axis::Second } else { Axis::First };
        let op = DerivativeOperator::new(&grid_6x7(), axis, d, acc, &PaddingSpec::for_accuracy(acc)).unwrap();
        let mut dx = vec![0.0; x.len()];
        op.apply(&x, &mut dx, 2);
        let mut dty = vec![0.0; y.len()];
        op.apply_transpose_add(&y, &mut dty, 2);
        let (l, r) = (dot(&dx, &y), dot(&x, &dty));
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
    }

    #[test]
    fn dynamic_weights_fixed_point(pde in 0.01f64..100.0, bc in 0.01f64..100.0, alpha in 0.01f64..1.0) {
        let norms = GradNorms { pde, bc: Some(bc), ic: None, data: None };
        let mut fixed = LossWeights::ones(Scheme::Dynamic { alpha, cadence: 1 });
        fixed.bc = pde / bc;
        let next = dynamic_weight_update(&norms, &fixed, alpha);
        prop_assert!((next.bc - fixed.bc).abs() <= 1e-12 * fixed.bc);
        prop_assert_eq!(next.ic, fixed.ic);
        prop_assert_eq!(next.pde, 1.0);
    }

    #[test]
    fn run_config_round_trips(
        nh in 3usize..200,
        nw in 3usize..200,
        acc in prop::sample::select(vec![2usize, 4, 6, 8]),
        channels in 1usize..16,
        adam in 0usize..10_000,
        lbfgs in 0usize..500,
        lr in 1e-6f64..1e-1,
        seed in any::<u64>(),
        problem in prop::sample::select(vec!["elliptic", "parabolic", "hyperbolic", "mms:ns-swirl"]),
    ) {
        let mut cfg = RunConfig::new(problem).unwrap();
        cfg.resolution = Resolution { nh, nw };
        cfg.acc_order = acc;
        cfg.channels = channels;
        cfg.epochs_adam = adam;
        cfg.epochs_lbfgs = lbfgs;
        cfg.lr = lr;
        cfg.seed = seed;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn linear_residual_superposes(a in values(8 * 9), b in values(8 * 9), alpha in -2.0f64..2.0) {
        let task = Task::with_default_padding("elliptic", 8, 9, 4).unwrap();
        let g = *task.grid();
        let f = |v: Vec<f64>| Field::from_data(g, 1, v).unwrap();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + alpha * y).collect();
        let ra = task.residual(&f(a)).unwrap();
        let rb = task.residual(&f(b)).unwrap();
        let r0 = task.residual(&Field::zeros(g, 1)).unwrap();
        let rc = task.residual(&f(combo)).unwrap();
        let scale = ra.max_abs().max(rb.max_abs()).max(1.0);
        for k in 0..g.len() {
            let want = ra.data()[k] + alpha * (rb.data()[k] - r0.data()[k]);
            prop_assert!((rc.data()[k] - want).abs() <= 1e-10 * scale);
        }
    }
}
