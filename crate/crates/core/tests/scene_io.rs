use curbside::scene::{load_scene, load_scene_unvalidated, save_scene, SceneError};
use curbside::synth;

#[test]
fn bundled_scenes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (name, recipe) in synth::bundled() {
        let mut scene = recipe.build();
        let path = dir.path().join(format!("{name}.scn"));
        save_scene(&scene, &path).unwrap();
        let loaded = load_scene(&path).unwrap();
        scene.intersect_shadow_with_ground();
        assert_eq!(loaded, scene, "{name}");
    }
}

#[test]
fn missing_sidecar_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corridor.scn");
    save_scene(&synth::corridor().build(), &path).unwrap();
    std::fs::remove_file(dir.path().join("corridor.depth.svr")).unwrap();
    let err = load_scene_unvalidated(&path).unwrap_err();
    assert!(err.is_io(), "{err}");
}

#[test]
fn dimension_mismatch_names_raster() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plaza.scn");
    let mut scene = synth::plaza().build();
    scene.depth = curbside::raster::Raster::filled(10, 10, 5.0);
    save_scene(&scene, &path).unwrap();
    match load_scene(&path) {
        Err(SceneError::Invalid { field, .. }) => assert_eq!(field, "depth"),
        other => panic!("unexpected {other:?}"),
    }
}
