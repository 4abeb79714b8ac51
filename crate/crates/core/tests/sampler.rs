use lpcfm::experiment::ExactField;
use lpcfm::linalg::{dot, norm, sub};
use lpcfm::sampler::FnField;
use lpcfm::signal::{scaling_line_from, shifting_line_from};
use lpcfm::{
    calibrate_blocks, euler_sample, vcs_calibrate, LineBlocks, PathParams, SamplerConfig,
    VariantLine,
};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=32)
        .prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(-5.0f64..5.0, d),
            )
        })
        .prop_filter("nonzero direction", |(a, _)| norm(a) > 1e-3)
}

proptest! {
    #[test]
    fn calibration_preserves_norm_and_is_orthogonal((a, v) in case()) {
        let line = VariantLine::new(a.clone(), vec![0.0; a.len()]).unwrap();
        let c = vcs_calibrate(&v, &line, 1e-6).unwrap();
        prop_assume!(!c.degenerate && norm(&v) > 0.0);
        prop_assert!((norm(&c.vector) - norm(&v)).abs() <= 1e-10 * norm(&v));
        prop_assert!(dot(&a, &c.vector).abs() <= 1e-10 * norm(&a) * norm(&v));
        let twice = vcs_calibrate(&c.vector, &line, 1e-6).unwrap();
        prop_assert!(norm(&sub(&twice.vector, &c.vector)) <= 1e-10 * norm(&v));
    }

    #[test]
    fn calibration_commutes_with_positive_scaling((a, v) in case(), s in 1e-3f64..1e3) {
        let line = VariantLine::new(a.clone(), vec![0.0; a.len()]).unwrap();
        let c = vcs_calibrate(&v, &line, 1e-6).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
        let cs = vcs_calibrate(&scaled, &line, 1e-6).unwrap();
        let expect: Vec<f64> = c.vector.iter().map(|x| s * x).collect();
        prop_assert!(norm(&sub(&cs.vector, &expect)) <= 1e-12 * norm(&expect).max(1e-300));
    }

    #[test]
    fn parallel_vectors_trip_the_guard((a, _v) in case(), s in prop_oneof![-4.0f64..-0.1, 0.1f64..4.0]) {
        let line = VariantLine::new(a.clone(), vec![0.0; a.len()]).unwrap();
        let v: Vec<f64> = a.iter().map(|x| s * x).collect();
        let c = vcs_calibrate(&v, &line, 1e-6).unwrap();
        prop_assert!(c.degenerate);
        prop_assert_eq!(c.vector, v);
    }

    #[test]
    fn single_block_equals_plain_calibration((a, v) in case()) {
        let line = VariantLine::new(a.clone(), vec![1.0; a.len()]).unwrap();
        let plain = vcs_calibrate(&v, &line, 1e-6).unwrap();
        let blocks = calibrate_blocks(&v, &LineBlocks::single(line), 1e-6).unwrap();
        prop_assert_eq!(plain, blocks);
    }

    #[test]
    fn mag_phase_blocks_keep_their_norms(
        log_mag in prop::collection::vec(-8.0f64..2.0, 18),
        phase in prop::collection::vec(-3.1f64..3.1, 18),
        v in prop::collection::vec(-3.0f64..3.0, 36),
    ) {
        // two frames of a 16-point STFT: 9 bins each
        let mag = scaling_line_from(&log_mag).unwrap();
        let pha = shifting_line_from(&phase, 16, 9).unwrap();
        let blocks = LineBlocks::new(vec![mag.clone(), pha.clone()]).unwrap();
        let c = calibrate_blocks(&v, &blocks, 1e-6).unwrap();
        prop_assume!(!c.degenerate);
        let (m, p) = c.vector.split_at(18);
        prop_assert!((norm(m) - norm(&v[..18])).abs() <= 1e-10 * norm(&v[..18]));
        prop_assert!((norm(p) - norm(&v[18..])).abs() <= 1e-10 * norm(&v[18..]));
        prop_assert!(dot(m, mag.direction()).abs() <= 1e-10 * norm(mag.direction()) * norm(&v[..18]));
        prop_assert!(dot(p, pha.direction()).abs() <= 1e-10 * norm(pha.direction()) * norm(&v[18..]));
    }
}

#[test]
fn calibration_examples() {
    let line = VariantLine::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
    let c = vcs_calibrate(&[3.0, 4.0], &line, 1e-6).unwrap();
    assert!((c.vector[0]).abs() < 1e-15 && (c.vector[1] - 5.0).abs() < 1e-12);
    let c = vcs_calibrate(&[0.0, 2.5], &line, 1e-6).unwrap();
    assert_eq!(c.vector, vec![0.0, 2.5]);
    let c = vcs_calibrate(&[0.0, 0.0], &line, 1e-6).unwrap();
    assert_eq!((c.vector, c.degenerate), (vec![0.0, 0.0], false));
    assert!(vcs_calibrate(
        &[1.0, 1.0],
        &VariantLine::point(vec![0.0, 0.0]).unwrap(),
        1e-6
    )
    .is_err());
}

#[test]
fn second_block_without_line_is_untouched() {
    let l1 = VariantLine::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
    let l2 = VariantLine::point(vec![0.0, 0.0, 0.0]).unwrap();
    let blocks = LineBlocks::new(vec![l1, l2]).unwrap();
    let c = calibrate_blocks(&[3.0, 4.0, 1.0, 2.0, 3.0], &blocks, 1e-6).unwrap();
    assert_eq!(&c.vector[2..], &[1.0, 2.0, 3.0]);
    assert!((c.vector[1] - 5.0).abs() < 1e-12);
    assert!(calibrate_blocks(&[1.0], &blocks, 1e-6).is_err());
}

#[test]
fn euler_closed_forms() {
    let x0 = [0.7, -1.2, 2.0];
    let zero = FnField::new(3, |_: &[f64], _, _: &[f64]| vec![0.0; 3]);
    let tr = euler_sample(&zero, &x0, &[], None, &SamplerConfig::new(5, false)).unwrap();
    assert_eq!(tr.endpoint(), &x0);
    assert_eq!(tr.states.len(), 6);

    let c = [1.0, 2.0, -3.0];
    let constant = FnField::new(3, move |_: &[f64], _, _: &[f64]| c.to_vec());
    let tr = euler_sample(&constant, &x0, &[], None, &SamplerConfig::new(6, false)).unwrap();
    for i in 0..3 {
        assert!((tr.endpoint()[i] - (x0[i] + c[i])).abs() < 1e-12);
    }

    let decay = FnField::new(3, |x: &[f64], _, _: &[f64]| x.iter().map(|v| -v).collect());
    for n in [1usize, 4, 50, 5000] {
        let tr = euler_sample(&decay, &x0, &[], None, &SamplerConfig::new(n, false)).unwrap();
        let f = (1.0 - 1.0 / n as f64).powi(n as i32);
        for i in 0..3 {
            assert!((tr.endpoint()[i] - f * x0[i]).abs() < 1e-12);
        }
    }
    let tr = euler_sample(&decay, &x0, &[], None, &SamplerConfig::new(100_000, false)).unwrap();
    assert!((tr.endpoint()[0] - (-1.0f64).exp() * x0[0]).abs() < 1e-5);
}

#[test]
fn time_grid_is_left_endpoint() {
    let seen = std::sync::Mutex::new(Vec::new());
    let f = FnField::new(1, |_: &[f64], t: f64, _: &[f64]| {
        seen.lock().unwrap().push(t);
        vec![0.0]
    });
    euler_sample(&f, &[0.0], &[], None, &SamplerConfig::new(4, false)).unwrap();
    assert_eq!(*seen.lock().unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
}

#[test]
fn exact_conditional_field_lands_on_target_in_one_step() {
    let line = VariantLine::new(vec![0.6, -0.8, 0.3], vec![1.0, 2.0, -0.5]).unwrap();
    let x0 = [0.2, -0.9, 1.4];
    let u = line.conditional_velocity(0.1, &x0).unwrap();
    let target = line.sample_target(0.1, &x0).unwrap();
    let f = FnField::new(3, move |_: &[f64], _, _: &[f64]| u.clone());
    let tr = euler_sample(&f, &x0, &[], None, &SamplerConfig::new(1, false)).unwrap();
    assert!(norm(&sub(tr.endpoint(), &target)) < 1e-14);

    // the marginal field of the single target is exact at every budget
    let field = ExactField::new(LineBlocks::single(line), PathParams::lp(0.1).unwrap());
    for n in [1usize, 3, 17] {
        let tr = euler_sample(&field, &x0, &[], None, &SamplerConfig::new(n, false)).unwrap();
        assert!(norm(&sub(tr.endpoint(), &target)) < 1e-12);
    }
}

#[test]
fn vcs_without_lines_is_a_config_error() {
    let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![1.0, 0.0]);
    assert!(euler_sample(&f, &[0.0, 0.0], &[], None, &SamplerConfig::new(2, true)).is_err());
    let bad = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![f64::NAN, 0.0]);
    assert!(euler_sample(&bad, &[0.0, 0.0], &[], None, &SamplerConfig::new(2, false)).is_err());
}

#[test]
fn trajectory_csv_layout() {
    let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![1.0, -1.0]);
    let tr = euler_sample(&f, &[0.0, 0.0], &[], None, &SamplerConfig::new(2, false)).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,t,x0,x1");
    assert_eq!(lines[2], "1,0.5,0.5,-0.5");
    assert_eq!(lines.len(), 4);
}
