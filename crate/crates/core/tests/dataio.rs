use std::path::Path;

use tissuesplat_core::dataio::{
    load_checkpoint, read_pfm, synth_generate, write_pfm, Dataset, DatasetManifest, Split, SynthParams,
};
use tissuesplat_core::priors::{make_depth_provider, DepthRequest, ProviderSpec};
use tissuesplat_core::raster::project;
use tissuesplat_core::scene::{CameraView, GaussianCloud, Intrinsics};
use tissuesplat_core::{Error, Image};

fn small() -> SynthParams {
    SynthParams {
        seed: 2,
        n_gaussians: 100,
        n_views: 4,
        held_out: 2,
        width: 24,
        height: 20,
        ..SynthParams::default()
    }
}

fn written(dir: &Path) -> Dataset {
    synth_generate(&small()).unwrap().write(dir).unwrap();
    Dataset::load(dir).unwrap()
}

#[test]
fn oracle_depth_is_the_stored_depth_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_generate(&small()).unwrap();
    scene.write(dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let mut provider = make_depth_provider(&ProviderSpec::Oracle, || ds.depth_maps()).unwrap();
    for (v, original) in ds.views.iter().zip(&scene.views) {
        let d = provider
            .predict(&DepthRequest {
                view_id: &v.id,
                image: v.gt_image.as_ref().unwrap(),
            })
            .unwrap();
        let stored = read_pfm(&dir.path().join("depth").join(format!("{}.pfm", v.id))).unwrap();
        let bits = |i: &Image<f32>| i.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&d), bits(&stored));
        assert_eq!(bits(&d), bits(original.gt_depth.as_ref().unwrap()));
        assert_eq!(v.gt_image, original.gt_image);
        assert_eq!(v.mask, original.mask);
    }
}

#[test]
fn dataset_cameras_roundtrip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_generate(&small()).unwrap();
    scene.write(dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.views.len(), scene.views.len());
    for (a, b) in ds.views.iter().zip(&scene.views) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.rotation, b.rotation);
        assert_eq!(a.translation, b.translation);
        assert_eq!(a.intrinsics, b.intrinsics);
        assert_eq!(a.time.to_bits(), b.time.to_bits());
    }
    assert_eq!(ds.split_views(Split::Test).len(), 2);
    assert_eq!(ds.split_views(Split::Train).len(), 4);
}

/// Camera at the origin looking along +z: +x world is image right, +y world
/// is image down.
#[test]
fn camera_convention_fixture() {
    let k = Intrinsics {
        fx: 100.0,
        fy: 100.0,
        cx: 32.0,
        cy: 24.0,
    };
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let view = CameraView::new("c", k, identity, [0.0; 3], 64, 48, 0.0);
    let mut cloud = GaussianCloud::<f64>::new(0);
    cloud.push_activated([0.2, -0.1, 2.0], [0.05; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
    let p = &project(&cloud, &view)[0];
    assert!((p.mean2d[0] - (32.0 + 100.0 * 0.1)).abs() < 1e-12);
    assert!((p.mean2d[1] - (24.0 - 100.0 * 0.05)).abs() < 1e-12);
    assert_eq!(p.depth, 2.0);

    // look_at from -z toward the origin with world -y up reproduces the
    // identity orientation.
    let la = CameraView::look_at("l", k, 64, 48, [0.0, 0.0, -3.0], [0.0; 3], [0.0, -1.0, 0.0], 0.0);
    for i in 0..3 {
        for j in 0..3 {
            assert!((la.rotation[i][j] - identity[i][j]).abs() < 1e-12);
        }
    }
    assert!((la.translation[2] - 3.0).abs() < 1e-12);
    assert_eq!(la.center(), [0.0, 0.0, -3.0]);
}

#[test]
fn ground_truth_checkpoint_reproduces_the_images() {
    let dir = tempfile::tempdir().unwrap();
    let ds = written(dir.path());
    let gt = load_checkpoint(&dir.path().join("ground_truth.esck")).unwrap().to_model().unwrap();
    let v = &ds.views[0];
    let out = gt.render(v).unwrap();
    let target = v.gt_image.as_ref().unwrap();
    let mask = v.mask.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for pix in 0..v.width * v.height {
        if mask.data[pix] {
            continue;
        }
        for ch in 0..3 {
            worst = worst.max((out.color.data[pix * 3 + ch] as f64 - target.data[pix * 3 + ch] as f64).abs());
        }
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn pfm_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_vec(3, 2, 3, (0..18).map(|i| i as f32 * 0.37 - 2.0).collect()).unwrap();
    let path = dir.path().join("x.pfm");
    write_pfm(&path, &img).unwrap();
    assert_eq!(read_pfm(&path).unwrap(), img);
}

#[test]
fn manifest_version_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    written(dir.path());
    let path = dir.path().join("manifest.json");
    let mut value: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    value["version"] = serde_json::json!(99);
    std::fs::write(&path, serde_json::to_vec(&value).unwrap()).unwrap();
    assert!(matches!(DatasetManifest::read(&path), Err(Error::VersionMismatch { .. })));
}

#[test]
fn missing_view_image_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    written(dir.path());
    std::fs::remove_file(dir.path().join("images").join("view001.pfm")).unwrap();
    let err = Dataset::load(dir.path()).unwrap_err();
    assert!(err.to_string().contains("view001"), "{err}");
}
