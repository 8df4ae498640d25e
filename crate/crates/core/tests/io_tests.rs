use std::path::Path;

use polarcube::analysis::*;
use polarcube::camera::{default_qwp_angles, simulate_hyperspectral, simulate_trichromatic, MosaicLayout, NoiseModel};
use polarcube::codecs::inr::{inr_init, InrConfig};
use polarcube::codecs::pca::{extract_patches, pca_fit};
use polarcube::image::StokesImage;
use polarcube::io::export::*;
use polarcube::io::labels::*;
use polarcube::io::spsi::*;
use polarcube::stokes::StokesVector;
use polarcube::synth::{smooth_scene, SceneSpec};
use polarcube::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cube(w: usize, h: usize, c: usize, seed: u64) -> StokesImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = StokesImage::from_fn(w, h, c, |_, _, _| {
        let s0: f64 = rng.random_range(0.1..2.0);
        StokesVector::new(
            s0,
            s0 * rng.random_range(-0.5..0.5),
            s0 * rng.random_range(-0.5..0.5),
            s0 * rng.random_range(-0.5..0.5),
        )
    });
    for v in img.mask.iter_mut() {
        *v = rng.random_bool(0.9);
    }
    img
}

fn bits_equal(a: &StokesImage, b: &StokesImage) -> bool {
    a.same_shape(b)
        && a.mask == b.mask
        && a.wavelengths == b.wavelengths
        && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cube_round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, c in 1usize..6, seed in any::<u64>(), wl in any::<bool>()) {
        let mut img = random_cube(w, h, c, seed);
        if wl {
            img = img.with_wavelengths((0..c).map(|i| 450.0 + 10.0 * i as f32).collect()).unwrap();
        }
        let bytes = encode(&SpsiObject::Cube(img.clone()), Dtype::F32).unwrap();
        let back = match decode(&bytes, Path::new("mem")).unwrap() {
            SpsiObject::Cube(b) => b,
            other => panic!("wrong kind {:?}", other.kind()),
        };
        prop_assert!(bits_equal(&img, &back));
        prop_assert_eq!(&bytes, &encode(&SpsiObject::Cube(back), Dtype::F32).unwrap());
        let hdr = parse_header(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(bytes.len() as u64, hdr.byte_len() as u64 + hdr.image_payload_len());
    }

    #[test]
    fn every_truncation_is_rejected(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let img = random_cube(5, 4, 3, seed);
        let bytes = encode(&SpsiObject::Cube(img), Dtype::F32).unwrap();
        let cut = ((bytes.len() as f64) * frac) as usize;
        let err = decode(&bytes[..cut], Path::new("mem")).unwrap_err();
        let ok = matches!(err, Error::Truncated { .. } | Error::BadMagic { .. });
        prop_assert!(ok, "{err}");
    }
}

#[test]
fn file_round_trip_and_deterministic_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_cube(17, 9, 4, 3);
    let a = dir.path().join("a.spsi");
    let b = dir.path().join("b.spsi");
    write_spsi(&a, &SpsiObject::Cube(img.clone())).unwrap();
    write_spsi(&b, &SpsiObject::Cube(img.clone())).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(bits_equal(&read_cube(&a).unwrap(), &img));
    assert!(matches!(
        read_raw(&a),
        Err(Error::Schema(_)) | Err(Error::InvalidArgument(_)) | Err(Error::Corrupt(_))
    ));
    // No stray temporaries next to the outputs.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    assert!(matches!(
        read_spsi(dir.path().join("missing.spsi")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn header_errors() {
    let img = random_cube(3, 3, 2, 1);
    let mut bytes = encode(&SpsiObject::Cube(img), Dtype::F32).unwrap();
    let p = Path::new("x.spsi");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad, p), Err(Error::BadMagic { .. })));
    let mut ver = bytes.clone();
    ver[4] = 9;
    assert!(matches!(decode(&ver, p), Err(Error::Version { found: 9, expected: 1 })));
    let mut kind = bytes.clone();
    kind[6] = 200;
    assert!(decode(&kind, p).is_err());
    bytes.push(0);
    assert!(matches!(decode(&bytes, p), Err(Error::Corrupt(_))));
    assert!(matches!(decode(b"SP", p), Err(Error::BadMagic { .. })));
}

#[test]
fn inconsistent_payloads_are_rejected_on_load() {
    let img = StokesImage::from_fn(2, 2, 1, |_, _, _| StokesVector::UNPOLARIZED);
    let bytes = encode(&SpsiObject::Cube(img), Dtype::F32).unwrap();
    // Four mask bits leave four padding bits that must be zero.
    let mut pad = bytes.clone();
    *pad.last_mut().unwrap() |= 0x80;
    assert!(matches!(decode(&pad, Path::new("m")), Err(Error::Corrupt(_))));
    // Header claims a wider image than the payload holds.
    let mut wide = bytes.clone();
    wide[7] = 3;
    assert!(matches!(decode(&wide, Path::new("m")), Err(Error::Truncated { .. })));
    let mut narrow = bytes;
    narrow[7] = 1;
    assert!(decode(&narrow, Path::new("m")).is_err());
}

#[test]
fn full_size_payload_arithmetic() {
    let h = SpsiHeader {
        version: VERSION,
        kind: Kind::StokesCube,
        width: 612,
        height: 512,
        channels: 21,
        components: 4,
        dtype: Dtype::F32,
        wavelengths: vec![0.0; 21],
    };
    let cells = 612u64 * 512 * 21;
    assert_eq!(h.image_payload_len(), cells * 4 * 4 + cells.div_ceil(8));
    assert_eq!(h.byte_len(), 20 + 21 * 4);
}

#[test]
fn header_layout_is_little_endian() {
    let img = random_cube(3, 2, 2, 0).with_wavelengths(vec![450.0, 460.0]).unwrap();
    let b = encode(&SpsiObject::Cube(img.clone()), Dtype::F32).unwrap();
    assert_eq!(&b[..4], b"SPSI");
    assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
    assert_eq!(b[6], 0);
    assert_eq!(u32::from_le_bytes(b[7..11].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(b[11..15].try_into().unwrap()), 2);
    assert_eq!(u16::from_le_bytes([b[15], b[16]]), 2);
    assert_eq!(u16::from_le_bytes([b[17], b[18]]), 4);
    assert_eq!(b[19], 0);
    assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), 450.0);
    // Data is channel-major, then component, then row-major.
    let first = f32::from_le_bytes(b[28..32].try_into().unwrap());
    assert_eq!(first, img.get(0, 0, 0).s0 as f32);
    let second = f32::from_le_bytes(b[32..36].try_into().unwrap());
    assert_eq!(second, img.get(1, 0, 0).s0 as f32);
}

#[test]
fn raw_capture_round_trips() {
    let scene = smooth_scene(
        &SceneSpec {
            width: 8,
            height: 8,
            channels: 3,
            ..SceneSpec::default()
        },
        1,
    );
    let noise = NoiseModel::gaussian(0.02, 4);
    let seq = simulate_hyperspectral(&scene, &default_qwp_angles(), 0.0, &noise).unwrap();
    let mosaic = simulate_trichromatic(&scene, &MosaicLayout::default(), &noise).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, raw) in [seq, mosaic].into_iter().enumerate() {
        let p = dir.path().join(format!("raw{i}.spsi"));
        write_spsi(&p, &SpsiObject::Raw(raw.clone())).unwrap();
        let back = read_raw(&p).unwrap();
        assert_eq!(back, raw);
        for (a, b) in raw.frames.iter().zip(&back.frames) {
            assert!(a
                .frame
                .data
                .iter()
                .zip(&b.frame.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn codec_artifacts_round_trip() {
    let img = random_cube(12, 10, 2, 5);
    let cb = pca_fit(&extract_patches(&img, 2).unwrap(), 6).unwrap();
    let bytes = encode(&SpsiObject::Codebook(cb.clone()), Dtype::F32).unwrap();
    match decode(&bytes, Path::new("cb")).unwrap() {
        SpsiObject::Codebook(b) => assert_eq!(b, cb),
        _ => panic!("wrong kind"),
    }

    let model = inr_init(InrConfig::new(3, 16), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p64 = dir.path().join("m64.spsi");
    write_spsi_with(&p64, &SpsiObject::Inr(model.clone()), Dtype::F64).unwrap();
    assert_eq!(read_inr(&p64).unwrap(), model);
    let p32 = dir.path().join("m32.spsi");
    write_spsi(&p32, &SpsiObject::Inr(model.clone())).unwrap();
    let m32 = read_inr(&p32).unwrap();
    assert_eq!(m32.config, model.config);
    assert!(m32
        .params
        .iter()
        .zip(&model.params)
        .all(|(a, b)| *a == *b as f32 as f64));
    assert!(std::fs::metadata(&p32).unwrap().len() < std::fs::metadata(&p64).unwrap().len());
}

#[test]
fn normal_stack_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut stack = NormalMapStack::from_fn(7, 5, 3, |_, _, _| {
        let a: f64 = rng.random_range(-3.0..3.0);
        let e: f64 = rng.random_range(0.0..1.5);
        [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()]
    })
    .unwrap();
    stack.mask[4] = false;
    let bytes = encode(&SpsiObject::Normals(stack.clone()), Dtype::F32).unwrap();
    match decode(&bytes, Path::new("n")).unwrap() {
        SpsiObject::Normals(b) => assert_eq!(b, stack),
        _ => panic!("wrong kind"),
    }
}

#[test]
fn label_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("scene.toml");
    let mut side = LabelSidecar::new(LabelSet {
        environment: Environment::Outdoor,
        illumination: Illumination::Sunlight,
        capture_time: "2023-06-01T10:00:00".into(),
        scene_type: SceneType::Scene,
    });
    side.notes = "facade, east side".into();
    side.rig = "lctf-rig-a".into();
    write_labels(&p, &side).unwrap();
    assert_eq!(read_labels(&p).unwrap(), side);

    let text = labels_to_string(&side).unwrap().replace("sunlight", "laser");
    assert!(matches!(labels_from_str(&text), Err(Error::Schema(_))));
    let text = "environment = \"indoor\"\nillumination = \"white\"\ncapture_time = \"2023-06-01T10:00:00\"\n";
    match labels_from_str(text) {
        Err(Error::Schema(m)) => assert!(m.contains("scene_type"), "{m}"),
        other => panic!("{other:?}"),
    }
}

fn parse_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn histogram_csv_reparses() {
    let mut h = Histogram::uniform(-1.0, 1.0, 3).unwrap();
    h.extend([-0.9, -0.5, 0.1, 0.2, 0.9, 0.95, 0.99]);
    let bytes = histogram_table(&h, "1").to_csv().unwrap();
    assert_eq!(String::from_utf8(bytes.clone()).unwrap().lines().count(), 4);
    let (header, rows) = parse_csv(&bytes);
    assert_eq!(header[3], "count [samples]");
    let counts: Vec<u64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(counts, h.counts);
    let lo: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(lo, h.edges[..3].to_vec());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    export_histogram(&p, &h, "1").unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
}

#[test]
fn density_csv_is_row_major() {
    let img = StokesImage::from_fn(4, 4, 1, |x, _, _| StokesVector::new(1.0, 0.2 * x as f64, 0.1, 0.0));
    let g = poincare_density(&[Item::new(&img)], PoincarePlane::S1S2, 5, &LabelFilter::any()).unwrap();
    let (header, rows) = parse_csv(&density_table(&g).to_csv().unwrap());
    assert_eq!(header[2], "n1_center [1]");
    assert_eq!(header[3], "n2_center [1]");
    assert_eq!(rows.len(), 25);
    let c = g.centers();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), i / 5);
        assert_eq!(r[1].parse::<usize>().unwrap(), i % 5);
        assert_eq!(r[2].parse::<f64>().unwrap(), c[i % 5]);
        assert_eq!(r[3].parse::<f64>().unwrap(), c[i / 5]);
        assert_eq!(r[4].parse::<u64>().unwrap(), g.counts[i]);
    }
}

#[test]
fn curve_csv_keeps_full_precision() {
    let v = vec![0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300];
    let t = curve_table(&[("k", "1", vec![1.0, 2.0, 3.0, 4.0]), ("mse", "intensity^2", v.clone())]).unwrap();
    let (header, rows) = parse_csv(&t.to_csv().unwrap());
    assert_eq!(header, vec!["k [1]", "mse [intensity^2]"]);
    let back: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(back, v);
    assert!(curve_table(&[("a", "1", vec![1.0]), ("b", "1", vec![])]).is_err());
}
