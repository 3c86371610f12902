use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sonoflow::environment::Environment;
use sonoflow::io::pgm::encode_pgm;
use sonoflow::io::wfrf::{write_wfrf, WfrfReader};
use sonoflow::model::{BmodeImage, ImageGrid, RfFrame, Stage};
use sonoflow::presets::Preset;

fn frames<T: sonoflow::Real>(n: usize, shape: (usize, usize, usize), seed: u64) -> Vec<RfFrame<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            RfFrame::new(Array3::from_shape_simple_fn(shape, || {
                T::of_f64(rng.sample::<f64, _>(StandardNormal) * 1e3)
            }))
            .unwrap()
        })
        .collect()
}

fn same_bits<T: sonoflow::Real>(a: &RfFrame<T>, b: &RfFrame<T>) -> bool {
    a.shape() == b.shape()
        && a.data().iter().zip(b.data()).all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
}

#[test]
fn wfrf_roundtrip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let preset = Preset::by_name("sta-small").unwrap();
    let shape = (preset.ctx.n_tx(), 8, 64);
    let f64s = frames::<f64>(3, shape, 1);
    let f32s = frames::<f32>(2, shape, 2);
    let p64 = dir.path().join("a.wfrf");
    let p32 = dir.path().join("b.wfrf");
    write_wfrf(&p64, &f64s, &preset.ctx).unwrap();
    write_wfrf(&p32, &f32s, &preset.ctx).unwrap();

    let mut r = WfrfReader::open(&p64).unwrap();
    assert_eq!(r.frame_count(), 3);
    assert_eq!(**r.context(), *preset.ctx);
    for (i, f) in f64s.iter().enumerate() {
        assert!(same_bits(&r.read_frame::<f64>(i).unwrap().unwrap(), f));
    }
    assert!(r.read_frame::<f64>(3).unwrap().is_none());

    let mut env = Environment::<f32>::open_dataset(&p32).unwrap();
    for f in &f32s {
        let obs = env.next_observation().unwrap().unwrap();
        assert!(same_bits(&obs.frame, f));
    }
    assert!(env.next_observation().unwrap().is_none());
}

#[test]
fn pgm_gray_levels() {
    let grid = ImageGrid::new(vec![0.0, 1.0, 2.0], vec![0.0]).unwrap();
    let img = BmodeImage::new(Array2::from_shape_vec((1, 3), vec![0.0, 0.5, 1.0]).unwrap(), Stage::Display, grid).unwrap();
    let bytes = encode_pgm(&img).unwrap();
    let header = b"P5\n3 1\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(&bytes[header.len()..], [0, 128, 255]);
}
