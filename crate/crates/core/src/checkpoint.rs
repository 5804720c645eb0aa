//! Binary checkpoints: run configuration, training state and the camera rig.
//!
//! Layout: the 8-byte magic, a little-endian `u32` version, then length-prefixed fields.
//! Every `f64` is stored as its IEEE bits, so a round trip is bit-exact.

use std::path::Path;

use crate::config::RunConfig;
use crate::deform::{DeformNetParams, EncodingConfig, NetArch};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian4D, GaussianGrad};
use crate::model::{ModelFlags, SceneModel, Tracks};
use crate::motion::VelocityTrack;
use crate::render::{Camera, OpacityMode};
use crate::linalg::Mat3;
use crate::training::{DensifyStats, Moments, OptimState, TrainState};

pub const MAGIC: &[u8; 8] = b"SHSPLAT\0";
pub const VERSION: u32 = 1;

/// Cameras and timestamps of the dataset a model was fitted to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rig {
    pub cameras: Vec<Camera>,
    pub held_out: Vec<bool>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: TrainState,
    pub rig: Rig,
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        for x in v {
            self.f64(*x);
        }
    }
    fn bytes(&mut self, v: &[u8]) {
        self.len(v.len());
        self.0.extend_from_slice(v);
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                self.pos,
                format!("checkpoint truncated while reading {what} ({n} bytes needed)"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let n = self.u64(what)?;
        // every element takes at least one byte, so longer lengths are corrupt
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::parse(at, format!("implausible length {n} for {what}")));
        }
        Ok(n as usize)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }
    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.len(what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }
    fn bool(&mut self, what: &str) -> Result<bool> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::parse(at, format!("invalid flag byte {b} for {what}"))),
        }
    }
    fn fail<T>(&self, at: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::parse(at, msg))
    }
}

fn write_model(o: &mut Out, m: &SceneModel) {
    o.u8(m.flags.velocity as u8);
    o.u8(m.flags.deform as u8);
    o.u8(match m.flags.opacity_mode {
        OpacityMode::Modulated => 0,
        OpacityMode::Filter => 1,
    });
    for c in m.background {
        o.f64(c);
    }
    o.len(m.gaussians.len());
    for g in &m.gaussians {
        for v in g.to_params() {
            o.f64(v);
        }
    }
    let tracks: &[VelocityTrack] = match &m.tracks {
        Tracks::Shared(t) => {
            o.u8(0);
            std::slice::from_ref(t)
        }
        Tracks::PerGaussian(ts) => {
            o.u8(1);
            ts
        }
    };
    o.len(tracks.len());
    for t in tracks {
        let (a, b) = t.domain();
        o.f64(a);
        o.f64(b);
        o.f64s(&t.flat_anchors());
    }
    let arch = m.net.arch();
    let enc = m.net.encoding();
    for v in [
        arch.hidden_layers,
        arch.hidden_width,
        enc.bands_mean,
        enc.bands_mu_t,
        enc.bands_time,
        enc.bands_velocity,
        m.net.anchor_count(),
    ] {
        o.len(v);
    }
    o.f64s(m.net.params());
}

fn read_model(r: &mut In<'_>) -> Result<SceneModel> {
    let flags = ModelFlags {
        velocity: r.bool("velocity flag")?,
        deform: r.bool("deform flag")?,
        opacity_mode: {
            let at = r.pos;
            match r.u8("opacity mode")? {
                0 => OpacityMode::Modulated,
                1 => OpacityMode::Filter,
                b => return r.fail(at, format!("invalid opacity mode {b}")),
            }
        },
    };
    let background = [r.f64("background")?, r.f64("background")?, r.f64("background")?];
    let n = r.len("gaussian count")?;
    let mut gaussians = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = [0.0; GaussianGrad::PARAM_COUNT];
        for v in &mut p {
            *v = r.f64("gaussian")?;
        }
        gaussians.push(Gaussian4D::from_params(&p));
    }
    let mode_at = r.pos;
    let mode = r.u8("track mode")?;
    let count = r.len("track count")?;
    let mut tracks = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let a = r.f64("track domain")?;
        let b = r.f64("track domain")?;
        let flat = r.f64s("anchors")?;
        if flat.len() % 3 != 0 {
            return r.fail(at, "anchor values are not a multiple of 3");
        }
        let anchors = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        tracks.push(VelocityTrack::new(anchors, a, b).map_err(|e| Error::parse(at, e.to_string()))?);
    }
    let tracks = match (mode, count) {
        (0, 1) => Tracks::Shared(tracks.pop().unwrap()),
        (1, _) => Tracks::PerGaussian(tracks),
        _ => return r.fail(mode_at, format!("invalid track layout (mode {mode}, {count} tracks)")),
    };
    let at = r.pos;
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.len("network shape")?;
    }
    let theta = r.f64s("network parameters")?;
    let net = DeformNetParams::from_parts(
        NetArch {
            hidden_layers: dims[0],
            hidden_width: dims[1],
        },
        EncodingConfig {
            bands_mean: dims[2],
            bands_mu_t: dims[3],
            bands_time: dims[4],
            bands_velocity: dims[5],
        },
        dims[6],
        theta,
    )
    .map_err(|e| Error::parse(at, e.to_string()))?;
    SceneModel::new(gaussians, tracks, net, flags, background).map_err(|e| Error::parse(at, e.to_string()))
}

fn write_moments(o: &mut Out, m: &Moments) {
    o.f64s(&m.m);
    o.f64s(&m.v);
}

fn read_moments(r: &mut In<'_>) -> Result<Moments> {
    Ok(Moments {
        m: r.f64s("moments")?,
        v: r.f64s("moments")?,
    })
}

fn write_camera(o: &mut Out, c: &Camera) {
    for v in [c.fx, c.fy, c.cx, c.cy] {
        o.f64(v);
    }
    o.len(c.width);
    o.len(c.height);
    for v in c.rotation.0.iter().flatten() {
        o.f64(*v);
    }
    for v in c.translation {
        o.f64(v);
    }
    o.f64(c.near);
}

fn read_camera(r: &mut In<'_>) -> Result<Camera> {
    let at = r.pos;
    let mut v = [0.0; 4];
    for x in &mut v {
        *x = r.f64("camera")?;
    }
    let width = r.u64("camera width")? as usize;
    let height = r.u64("camera height")? as usize;
    let mut rot = [[0.0; 3]; 3];
    for x in rot.iter_mut().flatten() {
        *x = r.f64("camera rotation")?;
    }
    let translation = [r.f64("camera")?, r.f64("camera")?, r.f64("camera")?];
    let cam = Camera {
        fx: v[0],
        fy: v[1],
        cx: v[2],
        cy: v[3],
        width,
        height,
        rotation: Mat3(rot),
        translation,
        near: r.f64("camera near")?,
    };
    cam.validate().map_err(|e| Error::parse(at, e.to_string()))?;
    Ok(cam)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut o = Out(Vec::new());
        o.0.extend_from_slice(MAGIC);
        o.u32(VERSION);
        o.bytes(self.config.to_text().as_bytes());
        let s = &self.state;
        o.len(s.iteration);
        write_model(&mut o, &s.model);
        o.u64(s.optim.step);
        write_moments(&mut o, &s.optim.gaussians);
        write_moments(&mut o, &s.optim.anchors);
        write_moments(&mut o, &s.optim.net);
        o.f64s(&s.stats.grad_sum);
        o.len(s.stats.visible.len());
        for v in &s.stats.visible {
            o.u32(*v);
        }
        o.f64(s.loss_sum);
        o.len(s.loss_count);
        o.len(self.rig.cameras.len());
        for (c, h) in self.rig.cameras.iter().zip(&self.rig.held_out) {
            write_camera(&mut o, c);
            o.u8(*h as u8);
        }
        o.f64s(&self.rig.times);
        o.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = In { buf, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return r.fail(0, "not a checkpoint (bad magic)");
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return r.fail(8, format!("unsupported checkpoint version {version} (expected {VERSION})"));
        }
        let at = r.pos;
        let n = r.len("config")?;
        let text = std::str::from_utf8(r.take(n, "config")?)
            .map_err(|_| Error::parse(at, "configuration is not UTF-8"))?;
        let config = RunConfig::parse(text).map_err(|e| Error::parse(at, format!("embedded config: {e}")))?;
        let iteration = r.len("iteration")?;
        let model = read_model(&mut r)?;
        let optim_at = r.pos;
        let optim = OptimState {
            step: r.u64("optimizer step")?,
            gaussians: read_moments(&mut r)?,
            anchors: read_moments(&mut r)?,
            net: read_moments(&mut r)?,
        };
        if !optim.matches(&model) {
            return r.fail(optim_at, "optimizer state does not match the model");
        }
        let stats_at = r.pos;
        let grad_sum = r.f64s("densify statistics")?;
        let nv = r.len("densify statistics")?;
        let visible = (0..nv).map(|_| r.u32("densify statistics")).collect::<Result<Vec<_>>>()?;
        if grad_sum.len() != model.gaussians.len() || visible.len() != model.gaussians.len() {
            return r.fail(stats_at, "densify statistics do not match the model");
        }
        let loss_sum = r.f64("loss accumulator")?;
        let loss_count = r.len("loss accumulator")?;
        let nc = r.len("camera count")?;
        let mut cameras = Vec::with_capacity(nc);
        let mut held_out = Vec::with_capacity(nc);
        for _ in 0..nc {
            cameras.push(read_camera(&mut r)?);
            held_out.push(r.bool("held-out flag")?);
        }
        let times = r.f64s("times")?;
        if r.pos != buf.len() {
            return r.fail(r.pos, format!("{} trailing bytes", buf.len() - r.pos));
        }
        Ok(Self {
            config,
            state: TrainState {
                model,
                optim,
                iteration,
                stats: DensifyStats { grad_sum, visible },
                loss_sum,
                loss_count,
            },
            rig: Rig {
                cameras,
                held_out,
                times,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
