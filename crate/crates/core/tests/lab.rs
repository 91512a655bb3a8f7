use eigeninfer::inference::{sphericity_test, test_statistic};
use eigeninfer::lab::{
    haar_rotation, sample_data, sample_rotation, sample_scm, scm, simulate_traces, split_scm, trace_powers, trial_rng,
    FieldMatrix, Rotation, SampleSpec, TraceStats,
};
use eigeninfer::moments::PopulationModel;
use eigeninfer::Field;

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let tail: f64 = (1..=100).map(|k| (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum();
    (2.0 * tail).clamp(0.0, 1.0)
}

#[test]
fn same_spec_same_bits() {
    let theta = PopulationModel::two_block(3.0, 1.0, 0.25).unwrap();
    for field in [Field::Real, Field::Complex] {
        let spec = SampleSpec::new(30, 20, field, 11).with_rotation(Rotation::Haar);
        let a = simulate_traces(&theta, &spec, 20, 4);
        let b = simulate_traces(&theta, &spec, 20, 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trace_powers, y.trace_powers);
            assert_eq!(x.eigenvalues, y.eigenvalues);
        }
        assert_eq!(sample_data(&theta, &spec, 3), sample_data(&theta, &spec, 3));
        assert_ne!(sample_data(&theta, &spec, 3), sample_data(&theta, &spec, 4));
    }
}

#[test]
fn sampled_scm_is_psd_with_rank_n() {
    let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
    for field in [Field::Real, Field::Complex] {
        for (p, n) in [(30, 12), (12, 30), (20, 20)] {
            let s = sample_scm(&theta, &SampleSpec::new(p, n, field, 5));
            let eig = s.hermitian_eigenvalues().unwrap();
            let max = eig.iter().cloned().fold(0.0f64, f64::max);
            assert!(eig.iter().all(|&e| e >= -1e-10 * max));
            let zeros = eig.iter().filter(|&&e| e <= 1e-8 * max).count();
            assert_eq!(zeros, p.saturating_sub(n), "p={p} n={n}");
        }
    }
}

#[test]
fn large_n_scm_approaches_identity() {
    let n = 4000;
    let s = sample_scm(&PopulationModel::identity(), &SampleSpec::new(6, n, Field::Real, 1));
    let FieldMatrix::Real(m) = s else { panic!("real field") };
    let mut off = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                off += m[(i, j)].abs();
            }
        }
    }
    assert!(off / 30.0 < 3.0 / (n as f64).sqrt());
    assert!(m.diagonal().iter().all(|d| (d - 1.0).abs() < 0.1));
}

#[test]
fn trace_is_unbiased_for_full_and_split_samples() {
    let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
    let (p, n) = (20, 9);
    let spec = SampleSpec::new(p, n, Field::Complex, 2);
    let (full, split): (Vec<f64>, Vec<f64>) = (0..1000)
        .map(|t| {
            let x = sample_data(&theta, &spec, t);
            let tr = |s: FieldMatrix| s.diagonal().iter().sum::<f64>();
            (tr(scm(&x).unwrap()), tr(split_scm(&x).unwrap()))
        })
        .unzip();
    let expect = p as f64 * 1.5;
    for xs in [full, split] {
        let (mean, sd) = mean_sd(&xs);
        assert!((mean - expect).abs() < 4.0 * sd / (xs.len() as f64).sqrt(), "{mean} vs {expect}");
    }
}

#[test]
fn haar_rotations() {
    let mut rng = trial_rng(0, 0);
    for _ in 0..20 {
        let FieldMatrix::Real(u) = haar_rotation(1, Field::Real, &mut rng) else { panic!("real field") };
        assert_eq!(u[(0, 0)].abs(), 1.0);
    }
    for field in [Field::Real, Field::Complex] {
        assert!(haar_rotation(40, field, &mut rng).unitarity_defect() < 1e-10);
    }
}

#[test]
fn rotation_does_not_change_trace_law() {
    let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
    let plain = SampleSpec::new(20, 20, Field::Real, 3);
    let rotated = SampleSpec::new(20, 20, Field::Real, 4).with_rotation(Rotation::Haar);
    let tr = |spec: &SampleSpec| simulate_traces(&theta, spec, 600, 2).iter().map(|s| s.trace(2)).collect::<Vec<_>>();
    let p = ks_p_value(&tr(&plain), &tr(&rotated));
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn statistic_is_invariant_under_conjugation() {
    let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
    for field in [Field::Real, Field::Complex] {
        let spec = SampleSpec::new(24, 40, field, 8);
        let s = sample_scm(&theta, &spec);
        let u = haar_rotation(24, field, &mut trial_rng(9, 0));
        let a = trace_powers(&s, 40, 2).unwrap();
        let b = trace_powers(&s.conjugate_by(&u), 40, 2).unwrap();
        let ha = test_statistic(&theta, &a, 2).unwrap().statistic;
        let hb = test_statistic(&theta, &b, 2).unwrap().statistic;
        assert!((ha - hb).abs() <= 1e-8 * ha.abs().max(1.0), "{ha} vs {hb}");
    }
}

#[test]
fn recorded_rotation_matches_sample() {
    let spec = SampleSpec::new(10, 5, Field::Complex, 4).with_rotation(Rotation::Haar);
    let u = sample_rotation(&spec, 2).unwrap();
    assert!(u.unitarity_defect() < 1e-10);
    assert!(sample_rotation(&SampleSpec::new(10, 5, Field::Complex, 4), 2).is_none());
    // Undoing the rotation leaves data whose rows have the population scales.
    let theta = PopulationModel::spiked(&[100.0], 1.0, 10).unwrap();
    let big = SampleSpec::new(10, 4000, Field::Complex, 4).with_rotation(Rotation::Haar);
    let s = scm(&sample_data(&theta, &big, 1)).unwrap();
    let u = sample_rotation(&big, 1).unwrap();
    let back = s.conjugate_by(&u);
    let d = back.diagonal();
    assert!((d[0] - 100.0).abs() < 10.0, "{d:?}");
    assert!(d[1..].iter().all(|x| (x - 1.0).abs() < 0.2), "{d:?}");
}

#[test]
fn null_statistic_quantile() {
    let spec = SampleSpec::new(40, 40, Field::Complex, 12);
    let mut h: Vec<f64> = simulate_traces(&PopulationModel::identity(), &spec, 1500, 2)
        .iter()
        .map(|s| sphericity_test(s).unwrap().statistic)
        .collect();
    h.sort_by(f64::total_cmp);
    let q95 = h[(0.95 * h.len() as f64) as usize];
    assert!((5.0..=7.2).contains(&q95), "95th percentile {q95}");
}

#[test]
fn standardized_trace_is_gaussian() {
    let (p, n) = (160, 160);
    let spec = SampleSpec::new(p, n, Field::Complex, 13);
    let tr: Vec<f64> =
        simulate_traces(&PopulationModel::identity(), &spec, 2000, 1).iter().map(|s| s.trace(1)).collect();
    let (mean, sd) = mean_sd(&tr);
    let m = tr.len() as f64;
    let z: Vec<f64> = tr.iter().map(|x| (x - mean) / sd).collect();
    let skew = z.iter().map(|x| x.powi(3)).sum::<f64>() / m;
    let kurt = z.iter().map(|x| x.powi(4)).sum::<f64>() / m - 3.0;
    // Jarque-Bera is chi-square with 2 degrees of freedom; 9.21 is its 99% point.
    let jb = m / 6.0 * (skew * skew + kurt * kurt / 4.0);
    assert!(jb < 9.21, "Jarque-Bera {jb}");
}

#[test]
fn trace_stats_from_data_uses_leading_columns() {
    let spec = SampleSpec::new(8, 10, Field::Real, 14);
    let x = sample_data(&PopulationModel::identity(), &spec, 0);
    let split = TraceStats::from_data(&x, 5, 3).unwrap();
    let direct = trace_powers(&split_scm(&x).unwrap(), 5, 3).unwrap();
    assert_eq!(split.n, 5);
    for (a, b) in split.trace_powers.iter().zip(&direct.trace_powers) {
        assert!((a - b).abs() <= 1e-10 * b.abs());
    }
}
