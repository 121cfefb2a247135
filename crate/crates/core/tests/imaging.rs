mod support;

use lesionseg::dataset::synthetic::synthesize;
use lesionseg::imaging::io::{read_mask, read_rgb, write_image, write_mask};
use lesionseg::imaging::{clahe_channel, crop_fundus, enhance_contrast_lab, ClaheParams, ColorSpace, CropParams, RasterImage};
use proptest::prelude::*;

fn gray(h: usize, w: usize, data: Vec<u8>) -> RasterImage {
    RasterImage::new(h, w, ColorSpace::Gray, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clahe_matches_reference(
        tr in 1usize..=4,
        tc in 1usize..=4,
        th in 4usize..=12,
        tw in 4usize..=12,
        clip in 1.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let (h, w) = (tr * th, tc * tw);
        let mut state = seed | 1;
        let data: Vec<u8> = (0..h * w)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 256) as u8
            })
            .collect();
        let img = gray(h, w, data);
        let out = clahe_channel(&img, &ClaheParams::new(clip, tr, tc)).unwrap();
        let reference = support::reference_clahe(img.data(), h, w, clip, (tr, tc));
        for (i, (&a, &b)) in out.data().iter().zip(&reference).enumerate() {
            prop_assert!((a as i32 - b as i32).abs() <= 2, "pixel {i}: {a} vs {b}");
        }
    }

    #[test]
    fn clahe_is_monotone_within_a_single_tile(data in proptest::collection::vec(any::<u8>(), 64)) {
        let img = gray(8, 8, data);
        let out = clahe_channel(&img, &ClaheParams::new(2.0, 1, 1)).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                if img.data()[i] < img.data()[j] {
                    prop_assert!(out.data()[i] <= out.data()[j]);
                }
            }
        }
    }
}

#[test]
fn clahe_rejects_bad_parameters() {
    let img = gray(8, 8, vec![10; 64]);
    assert!(clahe_channel(&img, &ClaheParams::new(0.0, 2, 2)).is_err());
    assert!(clahe_channel(&img, &ClaheParams::new(2.0, 0, 2)).is_err());
    assert!(clahe_channel(&img, &ClaheParams::new(2.0, 16, 16)).is_err());
}

#[test]
fn lab_enhancement_keeps_shape_and_spreads_a_dim_fundus() {
    let syn = synthesize(96, 5);
    let out = enhance_contrast_lab(&syn.image, &ClaheParams::default()).unwrap();
    assert_eq!(out.dims(), syn.image.dims());
    assert_eq!(out.color_space(), ColorSpace::Rgb);
    let spread = |img: &RasterImage| {
        let g: Vec<u8> = img.data().chunks(3).map(|p| p[1]).collect();
        g.iter().max().unwrap() - g.iter().min().unwrap()
    };
    assert!(spread(&out) >= spread(&syn.image));
}

#[test]
fn crop_increases_fundus_occupancy() {
    let syn = synthesize(128, 9);
    let occupancy = |img: &RasterImage| {
        let lit = img.data().chunks(3).filter(|p| p.iter().any(|&v| v > 15)).count();
        lit as f64 / (img.height() * img.width()) as f64
    };
    let out = crop_fundus(&syn.image, &CropParams::default());
    assert!(out.rect.fits_within(128, 128));
    assert!(occupancy(&out.image) >= occupancy(&syn.image));
}

#[test]
fn crop_of_an_all_dark_image_keeps_everything() {
    let img = RasterImage::filled(20, 30, ColorSpace::Rgb, 3);
    let out = crop_fundus(&img, &CropParams::default());
    assert_eq!(out.image.dims(), (20, 30));
}

#[test]
fn crop_margin_grows_the_box_within_bounds() {
    let img = RasterImage::from_fn_rgb(50, 50, |y, x| if (10..20).contains(&y) && (5..40).contains(&x) { [200; 3] } else { [0; 3] });
    let tight = crop_fundus(&img, &CropParams::default()).rect;
    assert_eq!((tight.top, tight.left, tight.height, tight.width), (10, 5, 10, 35));
    let loose = crop_fundus(&img, &CropParams { margin: 8, ..CropParams::default() }).rect;
    assert_eq!((loose.top, loose.left), (2, 0));
    assert!(loose.fits_within(50, 50));
}

#[test]
fn png_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let syn = synthesize(40, 2);
    let img_path = dir.path().join("a.png");
    write_image(&img_path, &syn.image).unwrap();
    assert_eq!(read_rgb(&img_path).unwrap(), syn.image);
    let mask = &syn.masks[0];
    let mask_path = dir.path().join("m.png");
    write_mask(&mask_path, mask).unwrap();
    assert_eq!(&read_mask(&mask_path).unwrap(), mask);
}
