use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::trainer::EpochSource;

fn small_spec(n: usize, seed: u64) -> GenSpec {
    GenSpec {
        n,
        seed,
        ..GenSpec::default()
    }
}

fn centroids(m: &Matrix<f32>, labels: &[u32], k: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; m.cols()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in m.iter_rows().zip(labels) {
        counts[l as usize] += 1;
        for (a, &v) in c[l as usize].iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    for (row, n) in c.iter_mut().zip(counts) {
        row.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    c
}

fn nearest(c: &[Vec<f64>], row: &[f32]) -> u32 {
    let d = |cc: &Vec<f64>| cc.iter().zip(row).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>();
    (0..c.len()).min_by(|&a, &b| d(&c[a]).total_cmp(&d(&c[b]))).unwrap() as u32
}

#[test]
fn generation_is_deterministic_and_bounded() {
    let a = gen_synthetic(&small_spec(300, 5)).unwrap();
    let b = gen_synthetic(&small_spec(300, 5)).unwrap();
    let c = gen_synthetic(&small_spec(300, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.x, c.x);
    assert!(a.x.as_slice().iter().chain(a.y.as_slice()).all(|v| (-1.0..=1.0).contains(v)));
    let noiseless = GenSpec { noise_std: 0.0, ..small_spec(50, 1) };
    assert_eq!(gen_synthetic(&noiseless).unwrap(), gen_synthetic(&noiseless).unwrap());
}

#[test]
fn invalid_specs_are_rejected() {
    for s in [
        GenSpec { classes: 1, ..GenSpec::default() },
        GenSpec { excl_x_dim: 0, ..GenSpec::default() },
        GenSpec { noise_std: -0.1, ..GenSpec::default() },
    ] {
        assert!(matches!(gen_synthetic(&s), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn classes_are_recoverable_in_each_domain_and_across() {
    let ds = gen_synthetic(&small_spec(4096, 2)).unwrap();
    let labels = ds.labels().unwrap();
    let (fit, held) = (0..2048, 2048..4096);
    let fit_idx: Vec<usize> = fit.collect();
    let cx = centroids(&ds.x.select_rows(&fit_idx), &labels[..2048], 8);
    let cy = centroids(&ds.y.select_rows(&fit_idx), &labels[..2048], 8);
    let mut hit_x = 0;
    let mut agree = 0;
    for i in held.clone() {
        let px = nearest(&cx, ds.x.row(i));
        let py = nearest(&cy, ds.y.row(i));
        hit_x += (px == labels[i]) as usize;
        agree += (px == py) as usize;
    }
    let acc = hit_x as f64 / held.len() as f64;
    let agreement = agree as f64 / held.len() as f64;
    assert!(acc > 0.5, "nearest-centroid accuracy {acc}");
    assert!(agreement > 0.5, "cross-domain agreement {agreement}");
}

#[test]
fn exclusive_factors_are_uncorrelated() {
    let ds = gen_synthetic(&GenSpec { n: 10_000, ..GenSpec::default() }).unwrap();
    let (ex, ey) = (ds.excl_x.unwrap(), ds.excl_y.unwrap());
    for j in 0..2 {
        let a: Vec<f64> = (0..ex.rows()).map(|i| ex.get(i, j) as f64).collect();
        let b: Vec<f64> = (0..ey.rows()).map(|i| ey.get(i, j) as f64).collect();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n).sqrt();
        let r = cov / (sa * sb);
        assert!(r.abs() < 4.0 / n.sqrt(), "corr {r}");
    }
}

#[test]
fn iipd_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.iipd");
    let mut ds = gen_synthetic(&small_spec(33, 3)).unwrap();
    ds.x.as_mut_slice()[0] = -0.0;
    ds.x.as_mut_slice()[1] = f32::MIN_POSITIVE / 4.0;
    ds.split = Some("train".into());
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    let bits = |m: &Matrix<f32>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ds.x), bits(&back.x));
    assert_eq!(bits(&ds.y), bits(&back.y));
    assert_eq!(ds, back);
}

#[test]
fn iipd_rejects_inconsistent_files() {
    let ds = gen_synthetic(&small_spec(10, 3)).unwrap();
    let bytes = encode_dataset(&ds).unwrap();
    // edited header, original payload
    let nl = bytes[5..].iter().position(|&b| b == b'\n').unwrap();
    let mut edited = bytes[..5].to_vec();
    edited.extend_from_slice(String::from_utf8_lossy(&bytes[5..5 + nl]).replacen("\"n\":10", "\"n\":11", 1).as_bytes());
    edited.extend_from_slice(&bytes[5 + nl..]);
    assert!(matches!(decode_dataset(&edited), Err(Error::Format(_))));

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode_dataset(&bad_magic), Err(Error::Format(_))));
    assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn file_without_labels_loads_without_them() {
    let mut ds = gen_synthetic(&small_spec(7, 1)).unwrap();
    ds.shared_class = None;
    ds.excl_y = None;
    let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
    assert!(back.shared_class.is_none() && back.excl_y.is_none() && back.excl_x.is_some());
}

#[test]
fn one_item_per_class_pairs_bijectively() {
    let x = Matrix::from_fn(3, 1, |i, _| i as f32);
    let y = Matrix::from_fn(3, 1, |i, _| 10.0 + i as f32);
    let p = pair_by_class(x, &[2, 0, 1], y, &[0, 1, 2], 9).unwrap();
    for i in 0..p.len() {
        let c = p.shared_class.as_ref().unwrap()[i];
        let xr = p.x.get(i, 0) as usize;
        let yr = p.y.get(i, 0) as usize - 10;
        assert_eq!([2, 0, 1][xr], c);
        assert_eq!(yr as u32, c);
    }
}

#[test]
fn disjoint_classes_are_an_error_and_partial_overlap_is_counted() {
    let m = Matrix::<f32>::zeros(2, 1);
    assert!(matches!(
        ClassPairer::new(m.clone(), &[0, 1], m.clone(), &[2, 3]),
        Err(Error::Empty(_))
    ));
    let p = ClassPairer::new(m.clone(), &[0, 1], Matrix::zeros(3, 1), &[1, 2, 3]).unwrap();
    assert_eq!((p.skipped_x_only, p.skipped_y_only, p.class_count()), (1, 2, 1));
}

#[test]
fn pairing_frequencies_are_uniform_within_class() {
    // class 0 has 2 x-items, class 1 has 3; y mirrors with 3 and 2
    let lx = [0, 0, 1, 1, 1];
    let ly = [0, 0, 0, 1, 1];
    let x = Matrix::from_fn(5, 1, |i, _| i as f32);
    let y = Matrix::from_fn(5, 1, |i, _| i as f32);
    let p = ClassPairer::new(x, &lx, y, &ly).unwrap().with_rounds(10_000);
    let d = p.sample(&mut ChaCha8Rng::seed_from_u64(4));
    let labels = d.shared_class.as_ref().unwrap();
    let mut cx = [0f64; 5];
    let mut cy = [0f64; 5];
    for i in 0..d.len() {
        let (a, b) = (d.x.get(i, 0) as usize, d.y.get(i, 0) as usize);
        assert_eq!(lx[a], labels[i]);
        assert_eq!(ly[b], labels[i]);
        cx[a] += 1.0;
        cy[b] += 1.0;
    }
    let draws = 10_000.0;
    for (counts, labels) in [(cx, lx), (cy, ly)] {
        for (i, &c) in counts.iter().enumerate() {
            let size = labels.iter().filter(|&&l| l == labels[i]).count() as f64;
            let p = 1.0 / size;
            let se = (p * (1.0 - p) / draws).sqrt();
            assert!((c / draws - p).abs() < 4.0 * se, "item {i}: {}", c / draws);
        }
    }
}

#[test]
fn fixed_pairing_is_reused_across_epochs() {
    let ds = gen_synthetic(&small_spec(64, 1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut fixed = ClassPairer::from_dataset(&ds).unwrap().per_epoch(false);
    let a = fixed.epoch(0, &mut rng).unwrap().into_owned();
    let b = fixed.epoch(1, &mut rng).unwrap().into_owned();
    assert_eq!(a, b);
    let mut fresh = ClassPairer::from_dataset(&ds).unwrap();
    let a = fresh.epoch(0, &mut rng).unwrap().into_owned();
    let b = fresh.epoch(1, &mut rng).unwrap().into_owned();
    assert_ne!(a.x, b.x);
}

#[test]
fn splits() {
    let ds = gen_synthetic(&small_spec(400, 1)).unwrap();
    let (tr, te) = split(&ds, [0.75, 0.25], SplitMode::ClassDisjoint, 3).unwrap();
    let classes = |d: &PairedDataset| {
        let mut c = d.labels().unwrap().to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    assert_eq!(classes(&tr).len(), 6);
    assert_eq!(classes(&te).len(), 2);
    assert!(classes(&tr).iter().all(|c| !classes(&te).contains(c)));
    assert_eq!(tr.len() + te.len(), 400);
    assert_eq!(split(&ds, [0.75, 0.25], SplitMode::ClassDisjoint, 3).unwrap().0, tr);

    let hundred = ds.select_rows(&(0..100).collect::<Vec<_>>());
    let (a, b) = split(&hundred, [0.5, 0.5], SplitMode::Rows, 0).unwrap();
    assert_eq!((a.len(), b.len()), (50, 50));
    assert!(split(&ds, [0.5, 0.6], SplitMode::Rows, 0).is_err());
    assert!(matches!(split(&ds, [1.0, 0.0], SplitMode::Rows, 0), Err(Error::Empty(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn iipd_round_trips_arbitrary_floats(
        n in 0usize..6, xd in 1usize..4, yd in 0usize..3,
        vals in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 30),
        labels in prop::collection::vec(0u32..1000, 6),
    ) {
        let x = Matrix::from_fn(n, xd, |i, j| vals[(i * xd + j) % vals.len()]);
        let y = Matrix::from_fn(n, yd, |i, j| vals[(i * 7 + j + 3) % vals.len()]);
        let mut ds = PairedDataset::new(x, y).unwrap();
        ds.shared_class = Some(labels[..n].to_vec());
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        prop_assert_eq!(back, ds);
    }
}
