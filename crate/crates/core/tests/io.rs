use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfpn_core::io::embeddings::{decode_embeddings, encode_embeddings};
use sfpn_core::io::image::{encode_png, encode_ppm};
use sfpn_core::io::{
    decode_image, decode_weights, encode_weights, load_manifest, load_weights, preprocess_test, read_embeddings,
    save_weights, write_embeddings, RawImage, RowEmbedding,
};
use sfpn_core::verification::PoseLabel;
use sfpn_core::{Embedding, Error, Init, Network, NetworkConfig, Shape, Variant, WeightError};

fn bits(net: &Network) -> Vec<(String, Vec<u32>)> {
    net.params()
        .iter()
        .map(|p| (p.name.clone(), p.data.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn weight_round_trip_is_bitwise_for_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let config = NetworkConfig::new(variant, 7);
        let net: Network = Network::build(config.clone(), Init::Random { seed: 9 }).unwrap();
        let path = dir.path().join(format!("{}.sfpn", variant.as_str()));
        save_weights(&net, &path).unwrap();
        let back = load_weights(&path, config).unwrap();
        assert_eq!(bits(&back), bits(&net), "{variant:?}");
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(encode_weights(&back.to_store()), bytes);
    }
}

#[test]
fn single_byte_corruption_is_caught() {
    let net: Network = Network::build(NetworkConfig::tiny(Variant::DwcGdc), Init::Random { seed: 2 }).unwrap();
    let good = encode_weights(&net.to_store());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let mut bad = good.clone();
        let pos = rng.gen_range(8..bad.len());
        bad[pos] ^= rng.gen_range(1..=255u8);
        assert!(matches!(decode_weights(&bad), Err(WeightError::CrcMismatch { .. })), "byte {pos}");
    }
}

#[test]
fn incompatible_files_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dwc.sfpn");
    let dwc: Network = Network::build(NetworkConfig::new(Variant::Dwc, 5), Init::Random { seed: 1 }).unwrap();
    save_weights(&dwc, &path).unwrap();

    let err = load_weights(&path, NetworkConfig::new(Variant::Base, 5)).unwrap_err();
    assert!(matches!(err, Error::Weights(WeightError::FlagMismatch { file_dwc: true, want_dwc: false, .. })));
    let err = load_weights(&path, NetworkConfig::new(Variant::Dwc, 6)).unwrap_err();
    assert!(matches!(err, Error::Weights(WeightError::ClassMismatch { file: 5, want: 6 })));

    let mut store = dwc.to_store();
    store.arrays.retain(|a| a.name != "fire5.squeeze.bias");
    let err = Network::<f32>::build(NetworkConfig::new(Variant::Dwc, 5), Init::Weights(store)).unwrap_err();
    assert!(matches!(err, Error::Weights(WeightError::MissingEntry(ref n)) if n == "fire5.squeeze.bias"));

    let mut store = dwc.to_store();
    let conv10 = store.arrays.iter_mut().find(|a| a.name == "conv10.weight").unwrap();
    conv10.dims.reverse();
    let err = Network::<f32>::build(NetworkConfig::new(Variant::Dwc, 5), Init::Weights(store)).unwrap_err();
    assert!(matches!(err, Error::Weights(WeightError::ShapeMismatch { ref name, .. }) if name == "conv10.weight"));

    std::fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(load_weights(&path, NetworkConfig::new(Variant::Dwc, 5)), Err(Error::Weights(WeightError::BadMagic(_)))));
    assert!(matches!(load_weights(&dir.path().join("absent"), NetworkConfig::new(Variant::Dwc, 5)), Err(Error::Io { .. })));
}

#[test]
fn entry_names_follow_layer_naming() {
    let net: Network = Network::build(NetworkConfig::new(Variant::DwcGdc, 3), Init::Random { seed: 0 }).unwrap();
    let store = net.to_store();
    let names: Vec<&str> = store.arrays.iter().map(|a| a.name.as_str()).collect();
    for want in [
        "conv1.depthwise.weight",
        "fire2.squeeze.weight",
        "fire9.expand3x3.pointwise.bias",
        "conv10.bias",
        "gdc10.weight",
        "bn10.gamma",
        "fc.weight",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
}

#[test]
fn full_manifest_is_protocol_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("subject_id,pose,path\n");
    for s in 0..368 {
        for pose in PoseLabel::ALL {
            for i in 0..10 {
                text.push_str(&format!("n{s:06},{pose},n{s:06}/{pose}/{i:02}.png\n"));
            }
        }
    }
    let path = dir.path().join("manifest.csv");
    std::fs::write(&path, &text).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.len(), 11_040);
    assert_eq!(m.subjects().len(), 368);
    assert!(m.is_protocol_complete());
    assert_eq!(m.resolve(0, dir.path()), dir.path().join("n000000/frontal/00.png"));
    assert_eq!(load_manifest(&path).unwrap(), m);

    std::fs::write(&path, "").unwrap();
    let empty = load_manifest(&path).unwrap();
    assert!(empty.is_empty() && !empty.is_protocol_complete());
}

#[test]
fn image_files_decode_and_preprocess() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = RawImage::new(140, 180, (0..140 * 180 * 3).map(|_| rng.gen()).collect()).unwrap();
    let ppm = dir.path().join("a.ppm");
    let png = dir.path().join("a.png");
    std::fs::write(&ppm, encode_ppm(&img)).unwrap();
    std::fs::write(&png, encode_png(&img).unwrap()).unwrap();
    let from_ppm = decode_image(&ppm).unwrap();
    assert_eq!(from_ppm, img);
    assert_eq!(decode_image(&png).unwrap(), img);

    let t = preprocess_test(&from_ppm).unwrap();
    assert_eq!(t.shape(), Shape::new(1, 3, 113, 113));
    assert_eq!(t, preprocess_test(&img).unwrap());

    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, &encode_png(&img).unwrap()[..100]).unwrap();
    assert!(matches!(decode_image(&bad), Err(Error::Decode { .. })));
}

#[test]
fn embeddings_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<RowEmbedding> = (0..4)
        .map(|r| RowEmbedding {
            row: r * 3,
            embedding: Embedding::new((0..1000).map(|i| (i * (r + 1)) as f32 * 0.25).collect()).unwrap(),
        })
        .collect();
    let path = dir.path().join("e.sfpe");
    write_embeddings(&path, &rows).unwrap();
    assert_eq!(read_embeddings(&path).unwrap(), rows);

    let bytes = encode_embeddings(&rows).unwrap();
    assert!(matches!(decode_embeddings(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
    let short = RowEmbedding {
        row: 0,
        embedding: Embedding::new(vec![1.0; 10]).unwrap(),
    };
    assert!(encode_embeddings(&[short]).is_err());
}
