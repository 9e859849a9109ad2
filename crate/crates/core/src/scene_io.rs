//! Scene and camera files: versioned JSON documents with lossless numeric
//! round-trips (shortest-representation float formatting).

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::deform::ControlPointSet;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{Camera, Gaussian4D, Scene};

pub const SCENE_FILE_VERSION: u32 = 1;

/// On-disk scene document. The neighbor table is not stored; it is rebuilt
/// deterministically from `knn_k` on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    pub time_range: [f64; 2],
    pub background: Vec3,
    pub knn_k: usize,
    pub fps_seed: usize,
    pub gaussians: Vec<Gaussian4D>,
    pub controls: ControlPointSet,
}

impl SceneFile {
    pub fn from_scene(scene: &Scene) -> SceneFile {
        SceneFile {
            version: SCENE_FILE_VERSION,
            time_range: scene.time_range,
            background: scene.background,
            knn_k: scene.knn_k,
            fps_seed: scene.fps_seed,
            gaussians: scene.gaussians.clone(),
            controls: scene.controls.clone(),
        }
    }

    pub fn into_scene(self) -> Result<Scene> {
        if self.version != SCENE_FILE_VERSION {
            return Err(Error::Malformed {
                what: "scene file".into(),
                detail: format!("unsupported version {}", self.version),
            });
        }
        let scene = Scene::new(
            self.gaussians,
            self.controls,
            self.background,
            self.time_range,
            self.knn_k,
            self.fps_seed,
        )?;
        scene.validate()?;
        Ok(scene)
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    scene.validate()?;
    save_json(&SceneFile::from_scene(scene), path)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let file: SceneFile = load_json(path)?;
    file.into_scene()
}

pub fn save_camera(cam: &Camera, path: &Path) -> Result<()> {
    cam.validate()?;
    save_json(cam, path)
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let cam: Camera = load_json(path)?;
    cam.validate()?;
    Ok(cam)
}
