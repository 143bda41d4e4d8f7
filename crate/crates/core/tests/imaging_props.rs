use hazerender_core::{apply_density, render_haze, Airlight, ImageTensor, TransmissionMap};
use proptest::prelude::*;

fn image(data: Vec<f32>, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_vec(data, 3, h, w).unwrap()
}

proptest! {
    #[test]
    fn rendering_stays_between_scene_and_airlight(
        (h, w, x, t) in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| (
            Just(h),
            Just(w),
            prop::collection::vec(0.0f32..=1.0, 3 * h * w),
            prop::collection::vec(1e-6f32..=1.0, h * w),
        )),
        a in prop::array::uniform3(0.0f32..=1.0),
        alpha in 0.0f64..=1.0,
    ) {
        let x = image(x, h, w);
        let t = apply_density(&TransmissionMap::from_vec(t, h, w).unwrap(), alpha).unwrap();
        let z = render_haze(&x, &t, &Airlight::new(a).unwrap()).unwrap();
        for c in 0..3 {
            for y in 0..h {
                for col in 0..w {
                    let (xv, zv) = (x.get(c, y, col), z.get(c, y, col));
                    let (lo, hi) = (xv.min(a[c]), xv.max(a[c]));
                    prop_assert!(zv >= lo - 1e-6 && zv <= hi + 1e-6, "{zv} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn zero_density_is_the_identity(
        x in prop::collection::vec(0.0f32..=1.0, 3 * 4 * 5),
        t in prop::collection::vec(1e-6f32..=1.0, 4 * 5),
        a in prop::array::uniform3(0.0f32..=1.0),
    ) {
        let x = image(x, 4, 5);
        let t = apply_density(&TransmissionMap::from_vec(t, 4, 5).unwrap(), 0.0).unwrap();
        let z = render_haze(&x, &t, &Airlight::new(a).unwrap()).unwrap();
        prop_assert_eq!(z.to_vec(), x.to_vec());
    }

    #[test]
    fn denser_haze_moves_closer_to_the_airlight(
        x in prop::collection::vec(0.0f32..=1.0, 3 * 3 * 3),
        t in prop::collection::vec(0.05f32..=0.95, 3 * 3),
        a in prop::array::uniform3(0.0f32..=1.0),
    ) {
        let x = image(x, 3, 3);
        let airlight = Airlight::new(a).unwrap();
        let t = TransmissionMap::from_vec(t, 3, 3).unwrap();
        let gap = |alpha: f64| {
            let z = render_haze(&x, &apply_density(&t, alpha).unwrap(), &airlight).unwrap();
            let (zv, n) = (z.to_vec(), 9);
            zv.iter().enumerate().map(|(i, v)| (v - a[i / n]).abs() as f64).sum::<f64>()
        };
        let gaps: Vec<f64> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&al| gap(al)).collect();
        for pair in gaps.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-6, "{gaps:?}");
        }
    }
}
