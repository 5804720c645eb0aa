use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::kv::{self, Section, Writer};
use crate::linalg::{quat_to_rot3, Mat3, Quat, Vec3};
use crate::render::Camera;

/// Ground-truth motion of a mover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    /// `p₀ + v t`.
    Constant { velocity: Vec3 },
    /// `p₀ + v t + ½ a t²`.
    Quadratic { velocity: Vec3, acceleration: Vec3 },
    /// `p₀ᵢ + Aᵢ sin(2π fᵢ t + φᵢ)` per axis.
    Sinusoidal { amplitude: Vec3, frequency: Vec3, phase: Vec3 },
}

impl Motion {
    pub fn offset(&self, t: f64) -> Vec3 {
        match *self {
            Motion::Constant { velocity } => velocity.map(|v| v * t),
            Motion::Quadratic { velocity, acceleration } => {
                std::array::from_fn(|i| velocity[i] * t + 0.5 * acceleration[i] * t * t)
            }
            Motion::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => std::array::from_fn(|i| amplitude[i] * (TAU * frequency[i] * t + phase[i]).sin()),
        }
    }
}

/// One analytically posed ground-truth Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mover {
    pub position: Vec3,
    pub motion: Motion,
    pub scales: Vec3,
    pub rotation: Quat,
    /// Angular speed (radians per time unit) of an extra spin about the rotation's z axis.
    pub spin: f64,
    pub rgb: Vec3,
    pub opacity: f64,
    /// Temporal visibility window `exp(−½ ((t − center) / extent)²)`; `None` means always visible.
    pub time_window: Option<(f64, f64)>,
}

impl Mover {
    pub fn position_at(&self, t: f64) -> Vec3 {
        let o = self.motion.offset(t);
        std::array::from_fn(|i| self.position[i] + o[i])
    }

    pub fn covariance_at(&self, t: f64) -> Result<Mat3> {
        let spin = Quat::from_axis_angle([0.0, 0.0, 1.0], self.spin * t);
        let r = quat_to_rot3(self.rotation * spin)?;
        let d = Mat3::diag(self.scales.map(|s| s * s));
        Ok(r.matmul(&d).matmul(&r.transpose()))
    }

    pub fn opacity_at(&self, t: f64) -> f64 {
        match self.time_window {
            None => self.opacity,
            Some((c, e)) => self.opacity * (-0.5 * ((t - c) / e).powi(2)).exp(),
        }
    }
}

/// Cameras evenly spaced on a horizontal circle, all looking at `target` with +z up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitRig {
    pub count: usize,
    pub radius: f64,
    pub height: f64,
    pub focal: f64,
    pub target: Vec3,
    /// Angle of the first camera, radians.
    pub phase: f64,
}

impl OrbitRig {
    pub fn cameras(&self, width: usize, height: usize) -> Result<Vec<Camera>> {
        (0..self.count)
            .map(|k| {
                let a = self.phase + TAU * k as f64 / self.count as f64;
                let eye = [
                    self.target[0] + self.radius * a.cos(),
                    self.target[1] + self.radius * a.sin(),
                    self.target[2] + self.height,
                ];
                Camera::look_at(eye, self.target, [0.0, 0.0, 1.0], self.focal, width, height)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub time_count: usize,
    pub domain: (f64, f64),
    pub background: Vec3,
    pub rig: OrbitRig,
    /// Cameras reserved for evaluation.
    pub held_out: Vec<usize>,
    pub movers: Vec<Mover>,
    pub seed: u64,
}

impl SceneSpec {
    /// `time_count` evenly spaced samples covering the domain, endpoints included.
    pub fn times(&self) -> Vec<f64> {
        let (t0, t1) = self.domain;
        if self.time_count == 1 {
            return vec![0.5 * (t0 + t1)];
        }
        (0..self.time_count)
            .map(|k| t0 + (t1 - t0) * k as f64 / (self.time_count - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::config(format!("scene field {field}: {why}")));
        if self.width == 0 || self.height == 0 {
            return bad("width/height", "image must be non-empty".into());
        }
        if self.time_count == 0 {
            return bad("times", "need at least one timestamp".into());
        }
        if !(self.domain.1 > self.domain.0) {
            return bad("domain", format!("end {} must exceed start {}", self.domain.1, self.domain.0));
        }
        if self.rig.count == 0 {
            return bad("rig.count", "need at least one camera".into());
        }
        if let Some(c) = self.held_out.iter().find(|&&c| c >= self.rig.count) {
            return bad("held_out", format!("camera {c} does not exist"));
        }
        if self.movers.is_empty() {
            return bad("mover", "need at least one mover".into());
        }
        for (i, m) in self.movers.iter().enumerate() {
            if m.scales.iter().any(|s| !(*s > 0.0)) {
                return bad(&format!("mover[{i}].scales"), "must be positive".into());
            }
            if !(m.opacity > 0.0 && m.opacity <= 1.0) {
                return bad(&format!("mover[{i}].opacity"), "must lie in (0, 1]".into());
            }
            if m.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return bad(&format!("mover[{i}].rgb"), "must lie in [0, 1]".into());
            }
            if let Some((_, e)) = m.time_window {
                if !(e > 0.0) {
                    return bad(&format!("mover[{i}].time_extent"), "must be positive".into());
                }
            }
            m.rotation.normalized()?;
        }
        self.rig.cameras(self.width, self.height)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = kv::parse(text)?;
        let mut scene = None;
        let mut rig = None;
        let mut movers = Vec::new();
        for s in &sections {
            match s.name.as_str() {
                "scene" => scene = Some(s),
                "rig" => rig = Some(s),
                "mover" => movers.push(parse_mover(s)?),
                other => return Err(Error::parse(s.offset, format!("unknown section [{other}]"))),
            }
        }
        let s = scene.ok_or_else(|| Error::parse(0, "missing [scene] section"))?;
        let r = rig.ok_or_else(|| Error::parse(0, "missing [rig] section"))?;
        let domain: Vec<f64> = s.list("domain")?.unwrap_or(vec![0.0, 1.0]);
        if domain.len() != 2 {
            return Err(Error::parse(s.offset, "domain needs two values"));
        }
        let count: usize = r.require("count")?;
        let spec = Self {
            width: s.require("width")?,
            height: s.require("height")?,
            time_count: s.require("times")?,
            domain: (domain[0], domain[1]),
            background: s.array3("background")?.unwrap_or([0.0; 3]),
            held_out: s.list("held_out")?.unwrap_or_else(|| vec![count.saturating_sub(1)]),
            seed: s.get_or("seed", 0)?,
            rig: OrbitRig {
                count,
                radius: r.require("radius")?,
                height: r.get_or("height", 0.0)?,
                focal: r.require("focal")?,
                target: r.array3("target")?.unwrap_or([0.0; 3]),
                phase: r.get_or("phase", 0.0)?,
            },
            movers,
        };
        s.finish()?;
        r.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        let held: Vec<String> = self.held_out.iter().map(|c| c.to_string()).collect();
        w.section("scene")
            .value("width", self.width)
            .value("height", self.height)
            .value("times", self.time_count)
            .floats("domain", &[self.domain.0, self.domain.1])
            .floats("background", &self.background)
            .value("held_out", held.join(", "))
            .value("seed", self.seed);
        w.section("rig")
            .value("count", self.rig.count)
            .float("radius", self.rig.radius)
            .float("height", self.rig.height)
            .float("focal", self.rig.focal)
            .floats("target", &self.rig.target)
            .float("phase", self.rig.phase);
        for m in &self.movers {
            w.section("mover").floats("position", &m.position);
            match m.motion {
                Motion::Constant { velocity } => {
                    w.value("motion", "constant").floats("velocity", &velocity);
                }
                Motion::Quadratic { velocity, acceleration } => {
                    w.value("motion", "quadratic")
                        .floats("velocity", &velocity)
                        .floats("acceleration", &acceleration);
                }
                Motion::Sinusoidal {
                    amplitude,
                    frequency,
                    phase,
                } => {
                    w.value("motion", "sinusoidal")
                        .floats("amplitude", &amplitude)
                        .floats("frequency", &frequency)
                        .floats("phase", &phase);
                }
            }
            w.floats("scales", &m.scales)
                .floats("rotation", &m.rotation.to_array())
                .float("spin", m.spin)
                .floats("rgb", &m.rgb)
                .float("opacity", m.opacity);
            if let Some((c, e)) = m.time_window {
                w.float("time_center", c).float("time_extent", e);
            }
        }
        w.finish()
    }
}

fn parse_mover(s: &Section) -> Result<Mover> {
    let zero = [0.0; 3];
    let kind: String = s.get_or("motion", "constant".to_string())?;
    let motion = match kind.as_str() {
        "constant" => Motion::Constant {
            velocity: s.array3("velocity")?.unwrap_or(zero),
        },
        "quadratic" => Motion::Quadratic {
            velocity: s.array3("velocity")?.unwrap_or(zero),
            acceleration: s.array3("acceleration")?.unwrap_or(zero),
        },
        "sinusoidal" => Motion::Sinusoidal {
            amplitude: s.array3("amplitude")?.unwrap_or(zero),
            frequency: s.array3("frequency")?.unwrap_or(zero),
            phase: s.array3("phase")?.unwrap_or(zero),
        },
        other => return Err(Error::parse(s.offset, format!("unknown motion kind {other:?}"))),
    };
    let rot: Vec<f64> = s.list("rotation")?.unwrap_or(vec![1.0, 0.0, 0.0, 0.0]);
    if rot.len() != 4 {
        return Err(Error::parse(s.offset, "rotation needs 4 quaternion values"));
    }
    let center: Option<f64> = s.get("time_center")?;
    let extent: Option<f64> = s.get("time_extent")?;
    let time_window = match (center, extent) {
        (Some(c), Some(e)) => Some((c, e)),
        (None, None) => None,
        _ => return Err(Error::parse(s.offset, "time_center and time_extent must be given together")),
    };
    let m = Mover {
        position: s.array3("position")?.unwrap_or(zero),
        motion,
        scales: s.array3("scales")?.ok_or_else(|| Error::parse(s.offset, "mover is missing scales"))?,
        rotation: Quat::new(rot[0], rot[1], rot[2], rot[3]),
        spin: s.get_or("spin", 0.0)?,
        rgb: s.array3("rgb")?.unwrap_or([1.0; 3]),
        opacity: s.get_or("opacity", 1.0)?,
        time_window,
    };
    s.finish()?;
    Ok(m)
}
