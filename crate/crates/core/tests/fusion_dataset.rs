use std::collections::{BTreeMap, BTreeSet};

use lesionseg::dataset::augment::{build_training_set, AugmentTransform};
use lesionseg::dataset::layout::load_manifest;
use lesionseg::dataset::synthetic::{synthesize, write_dataset};
use lesionseg::dataset::{split, LesionClass, SplitManifest, SplitRatios};
use lesionseg::fusion::{fuse, render_overlay, ColorMap, CompositeMask};
use lesionseg::imaging::io::read_mask;
use lesionseg::imaging::{ColorSpace, RasterImage};

fn overlapping() -> BTreeMap<LesionClass, RasterImage> {
    let mut m = BTreeMap::new();
    m.insert(LesionClass::EX, RasterImage::from_fn_gray(2, 2, |y, _| u8::from(y == 0)));
    m.insert(LesionClass::MA, RasterImage::from_fn_gray(2, 2, |_, x| u8::from(x == 0)));
    m
}

#[test]
fn overlay_respects_alpha_and_priority() {
    let comp = fuse(&overlapping()).unwrap();
    let base = RasterImage::filled(2, 2, ColorSpace::Rgb, 100);
    let cmap = ColorMap::default();

    assert_eq!(render_overlay(&base, &comp, &cmap, 0.0).unwrap(), base);
    let full = render_overlay(&base, &comp, &cmap, 1.0).unwrap();
    // (0,0) holds EX and MA; MA outranks EX by default
    assert_eq!(full.pixel(0, 0), cmap.color(LesionClass::MA));
    assert_eq!(full.pixel(0, 1), cmap.color(LesionClass::EX));
    assert_eq!(full.pixel(1, 1), [100, 100, 100]);

    let ex_first = ColorMap { priority: [LesionClass::EX, LesionClass::HE, LesionClass::MA, LesionClass::SE], ..cmap };
    assert_eq!(render_overlay(&base, &comp, &ex_first, 1.0).unwrap().pixel(0, 0), cmap.color(LesionClass::EX));

    let half = render_overlay(&base, &comp, &cmap, 0.5).unwrap();
    let c = cmap.color(LesionClass::EX);
    let want: Vec<u8> = c.iter().map(|&v| ((100.0 + v as f64) / 2.0).round() as u8).collect();
    assert_eq!(half.pixel(0, 1), want.as_slice());

    assert!(render_overlay(&base, &comp, &cmap, 1.5).is_err());
    assert!(render_overlay(&RasterImage::filled(3, 2, ColorSpace::Rgb, 0), &comp, &cmap, 0.5).is_err());
}

#[test]
fn composite_png_and_planes_round_trip() {
    let comp = fuse(&overlapping()).unwrap();
    assert_eq!(comp.labels(), &[0b0101, 0b0001, 0b0100, 0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.png");
    comp.write_png(&path).unwrap();
    assert_eq!(CompositeMask::read_png(&path).unwrap(), comp);
    let planes = comp.write_planes(dir.path(), "eye").unwrap();
    assert_eq!(planes.len(), 4);
    for (l, p) in LesionClass::ALL.into_iter().zip(&planes) {
        assert!(p.ends_with(format!("eye_{l}.png")));
        let plane = read_mask(p).unwrap();
        assert_eq!(plane, comp.extract(l), "{l}");
    }
    assert!(CompositeMask::from_labels(1, 1, vec![16]).is_err());
}

#[test]
fn fuse_rejects_contract_violations() {
    assert!(fuse(&BTreeMap::new()).is_err());
    let mut m = overlapping();
    m.insert(LesionClass::HE, RasterImage::filled(3, 3, ColorSpace::Gray, 0));
    assert!(fuse(&m).is_err());
    let mut m = overlapping();
    m.insert(LesionClass::SE, RasterImage::filled(2, 2, ColorSpace::Gray, 255));
    assert!(fuse(&m).is_err());
}

#[test]
fn flips_and_zero_rotation_keep_masks_binary_and_aligned() {
    let syn = synthesize(48, 4);
    let mask = &syn.masks[LesionClass::HE.index()];
    let (img, m) = AugmentTransform::IDENTITY.apply(&syn.image, mask).unwrap();
    assert_eq!((&img, &m), (&syn.image, mask));
    for seed in 0..20 {
        let t = AugmentTransform::sample(seed);
        assert!(t.angle_deg.abs() <= 10.0);
        let (img, m) = t.apply(&syn.image, mask).unwrap();
        assert_eq!(img.dims(), m.dims());
        assert!(m.data().iter().all(|&v| v <= 1));
    }
    let flip = AugmentTransform { angle_deg: 0.0, flip: true };
    let twice = flip.apply_mask(&flip.apply_mask(mask));
    assert_eq!(&twice, mask);
}

#[test]
fn augmentation_only_touches_the_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    write_dataset(&root, 10, 32, 3).unwrap();
    let records = load_manifest(&root, LesionClass::SE).unwrap().records;
    let m = split(&records, SplitRatios::default(), 1).unwrap();
    let out = build_training_set(&m, 2, &dir.path().join("aug")).unwrap();
    assert_eq!(out.train.len(), m.train.len() * 3);
    assert_eq!(out.augmented_count(), m.train.len() * 2);
    let held_out: BTreeSet<&str> = m.validation.iter().chain(&m.test).map(|r| r.id.as_str()).collect();
    assert!(out.train.iter().all(|r| !held_out.contains(r.source_id())));
    out.validate().unwrap();

    let path = dir.path().join("m.tsv");
    out.write(&path).unwrap();
    assert_eq!(SplitManifest::read(&path).unwrap(), out);
}

#[test]
fn splits_are_disjoint_and_seeded() {
    let records: Vec<_> = (0..30)
        .map(|i| {
            lesionseg::dataset::SampleRecord::original(format!("r{i}"), format!("i{i}.png").into(), format!("m{i}.png").into(), LesionClass::HE)
        })
        .collect();
    let a = split(&records, SplitRatios::default(), 4).unwrap();
    let b = split(&records, SplitRatios::default(), 4).unwrap();
    let c = split(&records, SplitRatios::default(), 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let ids: BTreeSet<&str> = a.train.iter().chain(&a.validation).chain(&a.test).map(|r| r.id.as_str()).collect();
    assert_eq!(ids.len(), 30);
}
