use geomtensor::geometry::{
    decompose_transform, merge_horizontal, merge_vertical, raster_execute, raster_execute_validated, RasterOp, Region,
    Transform, View,
};
use geomtensor::tensor::{default_strides, linear_offset, nc4hw4_pack, nc4hw4_unpack, Layout};
use geomtensor::{Error, Tensor};
use geomtensor_oracle::gen::{random_tensor, random_transform, TRANSFORM_KINDS};
use geomtensor_oracle::interp::{self, Nd};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn iota(shape: &[usize]) -> Tensor {
    let n = shape.iter().product::<usize>();
    Tensor::new(shape.to_vec(), (0..n).map(|i| i as f32).collect()).unwrap()
}

#[test]
fn strides_examples() {
    assert_eq!(default_strides(&[2, 4]).unwrap(), vec![4, 1]);
    assert_eq!(default_strides(&[5]).unwrap(), vec![1]);
    assert_eq!(default_strides(&[2, 3, 4]).unwrap(), vec![12, 4, 1]);
    assert!(matches!(default_strides(&[]), Err(Error::InvalidShape(_))));
}

#[test]
fn offset_examples() {
    assert_eq!(linear_offset(&[4, 1], 4, &[0, 2]).unwrap(), 6);
    assert_eq!(linear_offset(&[4, 1], 0, &[0, 0]).unwrap(), 0);
    assert_eq!(linear_offset(&[12, 4, 1], 0, &[1, 2, 3]).unwrap(), 23);
    assert!(matches!(linear_offset(&[4, 1], 0, &[1]), Err(Error::InvalidCoordinate(_))));
}

#[test]
fn pack_padding_and_index_remap() {
    let p = nc4hw4_pack(&iota(&[1, 5, 2, 2])).unwrap();
    assert_eq!(p.data().len(), 32);
    assert_eq!(p.layout(), Layout::Nc4hw4 { channels: 5 });
    assert_eq!(p.data().iter().filter(|&&v| v == 0.0).count(), 12 + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[2, 7, 3, 3]);
    let p = nc4hw4_pack(&x).unwrap();
    assert_eq!(p.shape(), &[2, 2, 3, 3, 4]);
    for n in 0..2 {
        for c in 0..7 {
            for h in 0..3 {
                for w in 0..3 {
                    let src = ((n * 7 + c) * 3 + h) * 3 + w;
                    let dst = (((n * 2 + c / 4) * 3 + h) * 3 + w) * 4 + c % 4;
                    assert_eq!(p.data()[dst].to_bits(), x.data()[src].to_bits());
                }
            }
        }
    }
    assert!(nc4hw4_pack(&iota(&[2, 3])).is_err());
    assert_eq!(nc4hw4_unpack(&nc4hw4_pack(&iota(&[3, 4, 2, 1])).unwrap()).unwrap(), iota(&[3, 4, 2, 1]));
}

#[test]
fn raster_examples() {
    let a = t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let id = RasterOp::identity(&[2, 4]).unwrap();
    assert_eq!(raster_execute(&id, &[&a]).unwrap(), a);

    let row =
        RasterOp::new(vec![Region::new(0, vec![1, 4], View::new(4, vec![4, 1]), View::new(0, vec![4, 1]))], vec![1, 4]);
    assert_eq!(raster_execute(&row, &[&a]).unwrap().data(), &[5.0, 6.0, 7.0, 8.0]);

    let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let tr =
        RasterOp::new(vec![Region::new(0, vec![3, 2], View::new(0, vec![1, 3]), View::new(0, vec![2, 1]))], vec![3, 2]);
    assert_eq!(raster_execute(&tr, &[&m]).unwrap().data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
}

#[test]
fn raster_errors() {
    let a = iota(&[4]);
    let oob = RasterOp::new(vec![Region::new(0, vec![4], View::new(1, vec![1]), View::new(0, vec![1]))], vec![4]);
    assert!(matches!(raster_execute(&oob, &[&a]), Err(Error::RegionBounds(_))));
    let overlap = RasterOp::new(
        vec![
            Region::new(0, vec![2], View::new(0, vec![1]), View::new(0, vec![1])),
            Region::new(0, vec![2], View::new(2, vec![1]), View::new(1, vec![1])),
        ],
        vec![4],
    );
    assert!(matches!(raster_execute_validated(&overlap, &[&a]), Err(Error::Overlap(_))));
    let partial = RasterOp::new(vec![Region::new(0, vec![2], View::new(0, vec![1]), View::new(1, vec![1]))], vec![4]);
    assert_eq!(raster_execute(&partial, &[&a]).unwrap().data(), &[0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn decompose_examples() {
    let s = decompose_transform(&Transform::Slice { begin: vec![1, 0], size: vec![1, 4] }, &[vec![2, 4]]).unwrap();
    assert_eq!(s.regions.len(), 1);
    assert_eq!(s.regions[0].src_view, View::new(4, vec![4, 1]));

    let tr = decompose_transform(&Transform::Transpose { perm: vec![1, 0] }, &[vec![2, 3]]).unwrap();
    assert_eq!(tr.regions.len(), 1);
    assert_eq!(tr.regions[0].src_view.strides, vec![1, 3]);
    assert_eq!(tr.regions[0].dst_view.strides, vec![2, 1]);

    let c = decompose_transform(&Transform::Concat { axis: 0 }, &[vec![1, 2], vec![1, 2]]).unwrap();
    let offs: Vec<isize> = c.regions.iter().map(|r| r.dst_view.offset).collect();
    assert_eq!(offs, vec![0, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a, b) = (random_tensor(&mut rng, &[1, 2]), random_tensor(&mut rng, &[1, 2]));
    let got = raster_execute(&c, &[&a, &b]).unwrap();
    let want =
        interp::transform(&Transform::Concat { axis: 0 }, &[&Nd::from_tensor(&a), &Nd::from_tensor(&b)]).unwrap();
    assert_eq!(got, want.to_tensor());
}

#[test]
fn decompose_errors() {
    let bad = [
        (Transform::Transpose { perm: vec![0, 0] }, vec![vec![2, 2]]),
        (Transform::Slice { begin: vec![1, 0], size: vec![2, 4] }, vec![vec![2, 4]]),
        (Transform::Concat { axis: 0 }, vec![vec![1, 2], vec![1, 3]]),
        (Transform::Reverse { axes: vec![2] }, vec![vec![2, 2]]),
        (Transform::Reshape { shape: vec![3] }, vec![vec![2, 2]]),
        (Transform::Broadcast { shape: vec![3, 3] }, vec![vec![2, 3]]),
    ];
    for (tr, shapes) in bad {
        assert!(matches!(decompose_transform(&tr, &shapes), Err(Error::InvalidTransform(_))), "{tr:?}");
    }
}

fn run_transform(tr: &Transform, xs: &[Tensor]) -> (Tensor, Tensor) {
    let shapes: Vec<Vec<usize>> = xs.iter().map(|x| x.shape().to_vec()).collect();
    let r = decompose_transform(tr, &shapes).unwrap();
    let lens: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
    r.validate(&lens).expect("write-disjoint");
    let refs: Vec<&Tensor> = xs.iter().collect();
    let got = raster_execute(&r, &refs).unwrap();
    let nds: Vec<Nd> = xs.iter().map(Nd::from_tensor).collect();
    let want = interp::transform(tr, &nds.iter().collect::<Vec<_>>()).unwrap().to_tensor();
    (got, want)
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offset_is_bijection(shape in prop::collection::vec(1usize..5, 1..5)) {
        let strides = default_strides(&shape).unwrap();
        let n: usize = shape.iter().product();
        let mut seen = vec![false; n];
        let mut coord = vec![0usize; shape.len()];
        for _ in 0..n {
            let off = linear_offset(&strides, 0, &coord).unwrap();
            prop_assert!(off >= 0 && (off as usize) < n && !seen[off as usize]);
            seen[off as usize] = true;
            for k in (0..shape.len()).rev() {
                coord[k] += 1;
                if coord[k] < shape[k] { break; }
                coord[k] = 0;
            }
        }
    }

    #[test]
    fn pack_round_trip(seed in any::<u64>(), n in 1usize..3, c in 1usize..10, h in 1usize..4, w in 1usize..4) {
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &[n, c, h, w]);
        prop_assert_eq!(bits(&nc4hw4_unpack(&nc4hw4_pack(&x).unwrap()).unwrap()), bits(&x));
    }

    #[test]
    fn decomposition_matches_reference(seed in any::<u64>(), kind in 0usize..TRANSFORM_KINDS.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tr, shapes) = random_transform(&mut rng, TRANSFORM_KINDS[kind]);
        let xs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
        let (got, want) = run_transform(&tr, &xs);
        prop_assert_eq!(got.shape(), want.shape());
        prop_assert_eq!(bits(&got), bits(&want));
    }

    #[test]
    fn vertical_merge_is_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kinds = ["transpose", "slice", "reverse", "reshape"];
        let (p, shapes) = random_transform(&mut rng, kinds[(seed % 4) as usize]);
        let pr = decompose_transform(&p, &shapes).unwrap();
        let mid = pr.out_shape.clone();
        // Consumer: a second random transform applied to the producer's output.
        let (c, _) = loop {
            let (c, _) = random_transform(&mut rng, ["transpose", "slice", "reverse", "broadcast"][(seed / 4 % 4) as usize]);
            let rank = match &c {
                Transform::Transpose { perm } => perm.len(),
                Transform::Slice { begin, .. } => begin.len(),
                Transform::Reverse { .. } | Transform::Broadcast { .. } => mid.len(),
                _ => unreachable!(),
            };
            if rank == mid.len() { break (c, ()); }
        };
        let c = fit_to(&c, &mid, &mut rng);
        let cr = decompose_transform(&c, std::slice::from_ref(&mid)).unwrap();
        let x = random_tensor(&mut rng, &shapes[0]);
        let two_step = raster_execute(&cr, &[&raster_execute(&pr, &[&x]).unwrap()]).unwrap();
        if let Some(m) = merge_vertical(&pr, &cr) {
            prop_assert_eq!(m.regions.len(), 1);
            prop_assert_eq!(bits(&raster_execute(&m, &[&x]).unwrap()), bits(&two_step));
        }
    }
}

/// Re-parameterises a consumer transform so it is valid on `shape`.
fn fit_to(c: &Transform, shape: &[usize], rng: &mut ChaCha8Rng) -> Transform {
    use rand::Rng;
    match c {
        Transform::Transpose { perm } => Transform::Transpose { perm: perm.clone() },
        Transform::Slice { .. } => {
            let begin: Vec<usize> = shape.iter().map(|&d| rng.gen_range(0..d)).collect();
            let size = shape.iter().zip(&begin).map(|(&d, &b)| rng.gen_range(1..=d - b)).collect();
            Transform::Slice { begin, size }
        }
        Transform::Reverse { .. } => {
            Transform::Reverse { axes: (0..shape.len()).filter(|_| rng.gen_bool(0.5)).collect() }
        }
        Transform::Broadcast { .. } => {
            let mut out: Vec<usize> = shape.iter().map(|&d| if d == 1 { rng.gen_range(1..=3) } else { d }).collect();
            if rng.gen_bool(0.5) {
                out.insert(0, 2);
            }
            Transform::Broadcast { shape: out }
        }
        other => other.clone(),
    }
}

#[test]
fn every_kind_decomposes_200_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in TRANSFORM_KINDS {
        for _ in 0..200 {
            let (tr, shapes) = random_transform(&mut rng, kind);
            let xs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
            let (got, want) = run_transform(&tr, &xs);
            assert_eq!(bits(&got), bits(&want), "{tr:?} on {shapes:?}");
        }
    }
}

#[test]
fn vertical_merge_examples() {
    let id = RasterOp::identity(&[3, 4]).unwrap();
    assert_eq!(merge_vertical(&id, &id), Some(id.clone()));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tt = decompose_transform(&Transform::Transpose { perm: vec![1, 0] }, &[vec![4, 4]]).unwrap();
    let m = merge_vertical(&tt, &tt).expect("transposes compose");
    let x = random_tensor(&mut rng, &[4, 4]);
    assert_eq!(raster_execute(&m, &[&x]).unwrap(), x);

    let sl = decompose_transform(&Transform::Slice { begin: vec![1, 1], size: vec![2, 3] }, &[vec![3, 5]]).unwrap();
    let tr = decompose_transform(&Transform::Transpose { perm: vec![1, 0] }, &[vec![2, 3]]).unwrap();
    let m = merge_vertical(&sl, &tr).expect("slice then transpose composes");
    let x = random_tensor(&mut rng, &[3, 5]);
    let two = raster_execute(&tr, &[&raster_execute(&sl, &[&x]).unwrap()]).unwrap();
    assert_eq!(raster_execute(&m, &[&x]).unwrap(), two);

    // A two-region producer is never merged.
    let cat = decompose_transform(&Transform::Concat { axis: 0 }, &[vec![1, 2], vec![1, 2]]).unwrap();
    assert_eq!(merge_vertical(&cat, &RasterOp::identity(&[2, 2]).unwrap()), None);
}

#[test]
fn horizontal_merge_examples() {
    let a = decompose_transform(&Transform::Slice { begin: vec![0, 1], size: vec![2, 2] }, &[vec![2, 4]]).unwrap();
    assert_eq!(merge_horizontal(&a, &a.clone()), Some(a.clone()));
    let mut b = a.clone();
    b.regions[0].src_view.offset = 0;
    assert_eq!(merge_horizontal(&a, &b), None);
}

#[test]
fn mergeable_pipelines_100_each() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut merged = 0;
    while merged < 100 {
        let (p, shapes) = random_transform(&mut rng, ["transpose", "reverse", "slice", "reshape"][merged % 4]);
        let pr = decompose_transform(&p, &shapes).unwrap();
        let mut perm: Vec<usize> = (0..pr.out_shape.len()).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let cr = decompose_transform(&Transform::Transpose { perm }, std::slice::from_ref(&pr.out_shape)).unwrap();
        let x = random_tensor(&mut rng, &shapes[0]);
        // Single-region full-cover producers always compose with a permutation.
        let m = merge_vertical(&pr, &cr).unwrap_or_else(|| panic!("{p:?} then transpose did not merge"));
        let two = raster_execute(&cr, &[&raster_execute(&pr, &[&x]).unwrap()]).unwrap();
        assert_eq!(bits(&raster_execute(&m, &[&x]).unwrap()), bits(&two));
        merged += 1;
    }
}
