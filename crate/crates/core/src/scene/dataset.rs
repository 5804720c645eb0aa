use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, Section, Writer};
use crate::linalg::{Mat3, Vec3};
use crate::render::{Camera, Frame};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST: &str = "dataset.txt";
pub const TRAJECTORIES: &str = "trajectories.tsv";

/// Ground-truth positions of one mover at every dataset timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vec3>,
}

/// Multi-view frames with cameras, timestamps and oracle trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    /// Cameras reserved for evaluation.
    pub held_out: Vec<bool>,
    pub times: Vec<f64>,
    pub domain: (f64, f64),
    pub background: Vec3,
    /// Axis-aligned box containing the scene content.
    pub bounds: (Vec3, Vec3),
    /// `frames[c * times.len() + k]` is camera `c` at time `k`.
    pub frames: Vec<Frame>,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn frame(&self, camera: usize, time_index: usize) -> &Frame {
        &self.frames[camera * self.times.len() + time_index]
    }

    pub fn train_cameras(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&c| !self.held_out[c]).collect()
    }

    pub fn test_cameras(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&c| self.held_out[c]).collect()
    }

    /// Diagonal length of the scene bounds.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounds;
        (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() || self.times.is_empty() {
            return Err(Error::config("dataset needs at least one camera and one timestamp"));
        }
        if self.held_out.len() != self.cameras.len() {
            return Err(Error::config("held-out flags do not match the camera count"));
        }
        if self.frames.len() != self.cameras.len() * self.times.len() {
            return Err(Error::config(format!(
                "{} frames for {} cameras × {} timestamps",
                self.frames.len(),
                self.cameras.len(),
                self.times.len()
            )));
        }
        for (c, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            for k in 0..self.times.len() {
                let f = self.frame(c, k);
                if f.width != cam.width || f.height != cam.height {
                    return Err(Error::config(format!("frame ({c}, {k}) does not match its camera size")));
                }
            }
        }
        if self.trajectories.iter().any(|t| t.positions.len() != self.times.len()) {
            return Err(Error::config("trajectory length differs from the timestamp count"));
        }
        Ok(())
    }

    pub fn frame_path(dir: &Path, camera: usize, time_index: usize) -> std::path::PathBuf {
        dir.join("frames").join(format!("c{camera:02}_t{time_index:03}.ppm"))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let mut w = Writer::new();
        w.section("dataset")
            .value("version", DATASET_VERSION)
            .floats("times", &self.times)
            .floats("domain", &[self.domain.0, self.domain.1])
            .floats("background", &self.background)
            .floats("bounds_min", &self.bounds.0)
            .floats("bounds_max", &self.bounds.1);
        for (cam, held) in self.cameras.iter().zip(&self.held_out) {
            write_camera(&mut w, cam);
            w.value("held_out", held);
        }
        let manifest = dir.join(MANIFEST);
        std::fs::write(&manifest, w.finish()).map_err(|e| Error::io(&manifest, e))?;
        for c in 0..self.cameras.len() {
            for k in 0..self.times.len() {
                self.frame(c, k).write_ppm(Self::frame_path(dir, c, k))?;
            }
        }
        let mut tsv = String::from("mover\tindex\tt\tx\ty\tz\n");
        for (m, tr) in self.trajectories.iter().enumerate() {
            for (k, p) in tr.positions.iter().enumerate() {
                tsv.push_str(&format!("{m}\t{k}\t{:?}\t{:?}\t{:?}\t{:?}\n", self.times[k], p[0], p[1], p[2]));
            }
        }
        let path = dir.join(TRAJECTORIES);
        std::fs::write(&path, tsv).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let sections = kv::parse(&text)?;
        let head = sections
            .first()
            .filter(|s| s.name == "dataset")
            .ok_or_else(|| Error::parse(0, "dataset manifest must start with [dataset]"))?;
        let version: u32 = head.require("version")?;
        if version != DATASET_VERSION {
            return Err(Error::parse(head.offset, format!("unsupported dataset version {version}")));
        }
        let times: Vec<f64> = head.require_list("times")?;
        let domain: Vec<f64> = head.require_list("domain")?;
        if domain.len() != 2 {
            return Err(Error::parse(head.offset, "domain needs two values"));
        }
        let background = head.array3("background")?.unwrap_or([0.0; 3]);
        let lo = head.array3("bounds_min")?.ok_or_else(|| Error::parse(head.offset, "missing bounds_min"))?;
        let hi = head.array3("bounds_max")?.ok_or_else(|| Error::parse(head.offset, "missing bounds_max"))?;
        head.finish()?;
        let mut cameras = Vec::new();
        let mut held_out = Vec::new();
        for s in &sections[1..] {
            if s.name != "camera" {
                return Err(Error::parse(s.offset, format!("unexpected section [{}]", s.name)));
            }
            cameras.push(read_camera(s)?);
            held_out.push(s.get_or("held_out", false)?);
            s.finish()?;
        }
        let mut frames = Vec::with_capacity(cameras.len() * times.len());
        for c in 0..cameras.len() {
            for k in 0..times.len() {
                frames.push(Frame::read_ppm(Self::frame_path(dir, c, k))?);
            }
        }
        let trajectories = read_trajectories(&dir.join(TRAJECTORIES), times.len())?;
        let data = Self {
            cameras,
            held_out,
            times,
            domain: (domain[0], domain[1]),
            background,
            bounds: (lo, hi),
            frames,
            trajectories,
        };
        data.validate()?;
        Ok(data)
    }
}

fn write_camera(w: &mut Writer, cam: &Camera) {
    let rot: Vec<f64> = cam.rotation.0.iter().flatten().copied().collect();
    w.section("camera")
        .float("fx", cam.fx)
        .float("fy", cam.fy)
        .float("cx", cam.cx)
        .float("cy", cam.cy)
        .value("width", cam.width)
        .value("height", cam.height)
        .floats("rotation", &rot)
        .floats("translation", &cam.translation)
        .float("near", cam.near);
}

fn read_camera(s: &Section) -> Result<Camera> {
    let rot: Vec<f64> = s.require_list("rotation")?;
    if rot.len() != 9 {
        return Err(Error::parse(s.offset, "camera rotation needs 9 values"));
    }
    let cam = Camera {
        fx: s.require("fx")?,
        fy: s.require("fy")?,
        cx: s.require("cx")?,
        cy: s.require("cy")?,
        width: s.require("width")?,
        height: s.require("height")?,
        rotation: Mat3(std::array::from_fn(|i| std::array::from_fn(|j| rot[3 * i + j]))),
        translation: s
            .array3("translation")?
            .ok_or_else(|| Error::parse(s.offset, "camera is missing translation"))?,
        near: s.require("near")?,
    };
    cam.validate()?;
    Ok(cam)
}

fn read_trajectories(path: &Path, count: usize) -> Result<Vec<Trajectory>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out: Vec<Trajectory> = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let line_offset = offset;
        offset += line.len();
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split('\t').collect();
        let bad = || Error::parse(line_offset, format!("malformed trajectory row {:?}", line.trim()));
        if cols.len() != 6 {
            return Err(bad());
        }
        let m: usize = cols[0].parse().map_err(|_| bad())?;
        let k: usize = cols[1].parse().map_err(|_| bad())?;
        let p: Vec<f64> = cols[3..].iter().map(|c| c.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        if m > out.len() || k >= count {
            return Err(bad());
        }
        if m == out.len() {
            out.push(Trajectory {
                positions: Vec::with_capacity(count),
            });
        }
        if out[m].positions.len() != k {
            return Err(bad());
        }
        out[m].positions.push([p[0], p[1], p[2]]);
    }
    Ok(out)
}
