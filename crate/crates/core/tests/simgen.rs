use covfdr::simgen::{generate, generate_weak_dep, Dependence, Family, GenSpec};

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max)
}

fn null_p(spec: &GenSpec, weak: bool) -> Vec<f64> {
    let d = if weak { generate_weak_dep(spec) } else { generate(spec) }.unwrap();
    d.records()
        .iter()
        .filter(|r| r.truth == Some(false))
        .map(|r| r.p_value)
        .collect()
}

#[test]
fn pure_null_is_uniform_and_unlabelled() {
    let d = generate(&GenSpec::new(Family::PureNull, 10_000, 3)).unwrap();
    assert!(d.records().iter().all(|r| r.truth == Some(false)));
    let ks = ks_uniform(d.p_values());
    assert!(ks <= 1.63 / 100.0, "KS {ks}");
}

#[test]
fn slope_1d_alternative_fraction() {
    let n = 100_000;
    let d = generate(&GenSpec::new(Family::Slope1d, n, 8)).unwrap();
    let frac = d.records().iter().filter(|r| r.truth == Some(true)).count() as f64 / n as f64;
    let tol = 3.0 * (0.175f64 * 0.825 / n as f64).sqrt();
    assert!((frac - 0.175).abs() <= tol, "{frac}");
}

#[test]
fn nulls_stay_uniform_in_every_family() {
    for family in Family::ALL {
        let spec = GenSpec::new(family, 20_000, 5);
        let p = null_p(&spec, false);
        let ks = ks_uniform(p.clone());
        assert!(ks <= 1.63 / (p.len() as f64).sqrt(), "{family}: KS {ks}");
    }
}

#[test]
fn independent_blocks_match_plain_generation_in_law() {
    let mut spec = GenSpec::new(Family::IhwLike, 20_000, 2);
    spec.dependence = Some(Dependence { block: 10, rho: 0.0 });
    let p = null_p(&spec, true);
    let ks = ks_uniform(p.clone());
    assert!(ks <= 1.63 / (p.len() as f64).sqrt(), "KS {ks}");
}

#[test]
fn dependent_null_marginals_are_uniform() {
    // Blocks make the KS statistic overdispersed, so average over replicates
    // of a pure-null design with rho = 0.5.
    let mut spec = GenSpec::new(Family::WeakDep, 20_000, 0);
    spec.prior = covfdr::simgen::Prior::Constant { value: 0.0 };
    let mut all = Vec::new();
    for seed in 0..10 {
        spec.seed = seed;
        all.extend(null_p(&spec, true));
    }
    let ks = ks_uniform(all.clone());
    // effective sample size is at worst n / block
    let n_eff = all.len() as f64 / 10.0;
    assert!(ks <= 1.63 / n_eff.sqrt(), "KS {ks}");
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn strong_blocks_correlate_within_block() {
    let mut spec = GenSpec::new(Family::WeakDep, 40_000, 1);
    spec.prior = covfdr::simgen::Prior::Constant { value: 0.0 };
    spec.dependence = Some(Dependence { block: 100, rho: 0.99 });
    let p = generate(&spec).unwrap().p_values();
    // pair neighbours inside the same block
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in (0..p.len()).step_by(2) {
        if i % 100 != 99 {
            a.push(p[i]);
            b.push(p[i + 1]);
        }
    }
    let rho = pearson(&ranks(&a), &ranks(&b));
    assert!(rho > 0.9, "rank correlation {rho}");
}

#[test]
fn blocks_do_not_leak_across_boundaries() {
    let mut spec = GenSpec::new(Family::WeakDep, 40_000, 1);
    spec.prior = covfdr::simgen::Prior::Constant { value: 0.0 };
    spec.dependence = Some(Dependence { block: 100, rho: 0.99 });
    let p = generate(&spec).unwrap().p_values();
    let a: Vec<f64> = (99..p.len() - 1).step_by(100).map(|i| p[i]).collect();
    let b: Vec<f64> = (99..p.len() - 1).step_by(100).map(|i| p[i + 1]).collect();
    let rho = pearson(&ranks(&a), &ranks(&b));
    assert!(rho.abs() < 0.2, "{rho}");
}

#[test]
fn feature_dimensions_follow_family() {
    for (family, dim) in [(Family::Gm1d, 1), (Family::Gm2d, 2), (Family::Gm5d, 5), (Family::Slope2d, 2)] {
        let d = generate(&GenSpec::new(family, 100, 0)).unwrap();
        assert_eq!(d.dim(), dim);
        assert!(d.records().iter().all(|r| r.features.iter().all(|&x| (0.0..1.0).contains(&x))));
    }
}
