//! Seeded synthetic multispectral forest plots with exact wood/foliage labels.
//!
//! Trees are built from three primitives. Trunks are tapered vertical
//! cylinder shells, branches are thin oblique shells leaving the trunk in
//! the crown region, and crowns are ellipsoids (broadleaf) or cones
//! (conifer) whose outer layer holds the foliage returns, since airborne
//! pulses rarely reach the crown interior. Reflectance is drawn per class and channel from normals.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcdata::{Tile, CHANNELS, FOLIAGE, MISSING, WOOD};

/// Normal distribution parameters of one reflectance channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDist {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectancePreset {
    /// Class means three standard deviations apart on every channel.
    Easy,
    /// Class means half a standard deviation apart.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceModel {
    pub wood: [ChannelDist; CHANNELS],
    pub foliage: [ChannelDist; CHANNELS],
}

impl ReflectanceModel {
    pub fn preset(p: ReflectancePreset) -> Self {
        let sep = match p {
            ReflectancePreset::Easy => 3.0,
            ReflectancePreset::Hard => 0.5,
        };
        let std = 0.05;
        // foliage is brighter at 905 nm, darker at 1550 and 532 nm
        let foliage = [0.30, 0.55, 0.15];
        let sign = [1.0, -1.0, 1.0];
        let mk = |m: f64| ChannelDist { mean: m, std };
        ReflectanceModel {
            foliage: foliage.map(mk),
            wood: [0, 1, 2].map(|c| mk(foliage[c] + sign[c] * sep * std)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub plot_radius: f64,
    pub tree_count: usize,
    /// Minimum horizontal distance between stems.
    pub min_tree_spacing: f64,
    pub trunk_height: [f64; 2],
    pub trunk_radius: [f64; 2],
    pub branch_count: [usize; 2],
    pub branch_length: [f64; 2],
    pub branch_radius: [f64; 2],
    /// Crown half-width and half-height as fractions of tree height.
    pub crown_width: [f64; 2],
    pub crown_depth: [f64; 2],
    /// Share of trees with conical crowns; the rest are ellipsoids.
    pub conifer_fraction: f64,
    /// Thickness of the foliage layer as a fraction of the crown radius.
    pub crown_shell: f64,
    /// Foliage returns per cubic meter of the foliage layer.
    pub foliage_density: f64,
    /// Wood returns per square meter of bark surface.
    pub wood_density: f64,
    pub reflectance: ReflectanceModel,
    pub missing_rate: [f64; CHANNELS],
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            plot_radius: 12.0,
            tree_count: 40,
            min_tree_spacing: 3.0,
            trunk_height: [10.0, 18.0],
            trunk_radius: [0.04, 0.10],
            branch_count: [3, 7],
            branch_length: [1.0, 2.2],
            branch_radius: [0.015, 0.03],
            crown_width: [0.10, 0.16],
            crown_depth: [0.18, 0.28],
            conifer_fraction: 0.3,
            crown_shell: 0.4,
            foliage_density: 420.0,
            wood_density: 130.0,
            reflectance: ReflectanceModel::preset(ReflectancePreset::Easy),
            missing_rate: [0.02, 0.05, 0.2],
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_preset(mut self, p: ReflectancePreset) -> Self {
        self.reflectance = ReflectanceModel::preset(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidArgument("tree_count must be at least 1".into()));
        }
        let ranges = [
            self.trunk_height,
            self.trunk_radius,
            self.branch_length,
            self.branch_radius,
            self.crown_width,
            self.crown_depth,
        ];
        if ranges.iter().any(|r| !(r[0] > 0.0 && r[1] >= r[0])) || self.branch_count[1] < self.branch_count[0] {
            return Err(Error::InvalidArgument("ranges must be positive and ordered".into()));
        }
        if !(self.plot_radius > 0.0) || self.foliage_density < 0.0 || !(self.wood_density > 0.0) || self.noise_std < 0.0 {
            return Err(Error::InvalidArgument("plot radius, densities and noise must be valid".into()));
        }
        if !(self.crown_shell > 0.0 && self.crown_shell <= 1.0) || !(0.0..=1.0).contains(&self.conifer_fraction) {
            return Err(Error::InvalidArgument("crown_shell must lie in (0, 1], conifer_fraction in [0, 1]".into()));
        }
        if self.missing_rate.iter().any(|m| !(0.0..1.0).contains(m)) {
            return Err(Error::InvalidArgument("missing rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    points: Vec<[f64; 3]>,
    labels: Vec<u8>,
}

impl Sampler {
    fn count(&mut self, expected: f64) -> usize {
        let base = expected.floor();
        base as usize + usize::from(self.rng.gen::<f64>() < expected - base)
    }

    /// Shell of a (possibly tapered) cylinder from `a` along unit `dir`.
    fn shell(&mut self, a: [f64; 3], dir: [f64; 3], len: f64, r0: f64, r1: f64, density: f64, label: u8) {
        let (u, v) = orthonormal(dir);
        let n = self.count(density * PI * (r0 + r1) * len);
        for _ in 0..n {
            let t: f64 = self.rng.gen();
            let phi: f64 = self.rng.gen_range(0.0..TAU);
            let r = r0 + (r1 - r0) * t;
            let (s, c) = phi.sin_cos();
            let p = [0, 1, 2].map(|k| a[k] + dir[k] * t * len + r * (c * u[k] + s * v[k]));
            self.points.push(p);
            self.labels.push(label);
        }
    }

    /// Foliage in the outer layer of a crown whose base is at `base_z`.
    fn crown(&mut self, shape: CrownShape, stem: [f64; 2], base_z: f64, width: f64, depth: f64, shell: f64, density: f64) {
        let inner = 1.0 - shell;
        // layer volume: full crown minus the scaled-down core
        let (volume, core) = match shape {
            CrownShape::Ellipsoid => (4.0 / 3.0 * PI * width * width * depth, inner.powi(3)),
            CrownShape::Cone => (PI * width * width * 2.0 * depth / 3.0, inner.powi(2)),
        };
        let n = self.count(density * volume * (1.0 - core));
        let mut made = 0;
        while made < n {
            let q = [0, 1, 2].map(|_| self.rng.gen_range(-1.0..1.0f64));
            // q[2] in [-1, 1] spans the crown height
            let radial = match shape {
                CrownShape::Ellipsoid => (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt(),
                CrownShape::Cone => {
                    let allowed = 1.0 - (q[2] + 1.0) / 2.0;
                    q[0].hypot(q[1]) / allowed.max(1e-12)
                }
            };
            if radial <= 1.0 && radial >= inner {
                let p = [stem[0] + width * q[0], stem[1] + width * q[1], base_z + depth * (q[2] + 1.0)];
                if p[2] >= 0.0 {
                    self.points.push(p);
                    self.labels.push(FOLIAGE);
                }
                made += 1;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum CrownShape {
    Ellipsoid,
    Cone,
}

fn orthonormal(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if d[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let norm = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        a.map(|x| x / n)
    };
    let u = norm(cross(d, helper));
    let v = norm(cross(d, u));
    (u, v)
}

/// Generates one labeled plot centered at the origin, ground at z = 0.
pub fn generate_plot(params: &ForestParams) -> Result<Tile> {
    params.validate()?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        points: Vec::new(),
        labels: Vec::new(),
    };
    let mut stems: Vec<[f64; 2]> = Vec::with_capacity(params.tree_count);
    let mut attempts = 0;
    while stems.len() < params.tree_count {
        let r = params.plot_radius * s.rng.gen::<f64>().sqrt();
        let a = s.rng.gen_range(0.0..TAU);
        let p = [r * a.cos(), r * a.sin()];
        attempts += 1;
        let spaced = stems
            .iter()
            .all(|q| (q[0] - p[0]).hypot(q[1] - p[1]) >= params.min_tree_spacing);
        if spaced || attempts > 1000 * params.tree_count {
            stems.push(p);
        }
    }
    for stem in stems {
        let rng = &mut s.rng;
        let h = rng.gen_range(params.trunk_height[0]..=params.trunk_height[1]);
        let r0 = rng.gen_range(params.trunk_radius[0]..=params.trunk_radius[1]);
        let r1 = 0.3 * r0;
        let cw = h * rng.gen_range(params.crown_width[0]..=params.crown_width[1]);
        let cd = h * rng.gen_range(params.crown_depth[0]..=params.crown_depth[1]);
        let crown_z = h - cd;
        let branches = rng.gen_range(params.branch_count[0]..=params.branch_count[1]);
        let shape = if rng.gen::<f64>() < params.conifer_fraction { CrownShape::Cone } else { CrownShape::Ellipsoid };
        s.shell([stem[0], stem[1], 0.0], [0.0, 0.0, 1.0], h, r0, r1, params.wood_density, WOOD);
        for _ in 0..branches {
            let rng = &mut s.rng;
            let z = rng.gen_range((crown_z - 0.6 * cd).max(0.3 * h)..crown_z + 0.4 * cd);
            let az: f64 = rng.gen_range(0.0..TAU);
            let el: f64 = rng.gen_range(20f64.to_radians()..60f64.to_radians());
            let len = rng.gen_range(params.branch_length[0]..=params.branch_length[1]).min(cw);
            let br = rng.gen_range(params.branch_radius[0]..=params.branch_radius[1]);
            let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            s.shell([stem[0], stem[1], z], dir, len, br, 0.5 * br, params.wood_density, WOOD);
        }
        s.crown(shape, stem, crown_z - cd, cw, cd, params.crown_shell, params.foliage_density);
    }

    let Sampler { mut rng, mut points, labels } = s;
    if params.noise_std > 0.0 {
        let noise = Normal::new(0.0, params.noise_std).unwrap();
        for p in &mut points {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
        for p in &mut points {
            p[2] = p[2].max(0.0);
        }
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("parameters produce no points".into()));
    }
    let mut refl: [Vec<f32>; CHANNELS] = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for &l in &labels {
        let dists = if l == WOOD { &params.reflectance.wood } else { &params.reflectance.foliage };
        for c in 0..CHANNELS {
            let d = dists[c];
            let v = d.mean + d.std * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let v = if rng.gen::<f64>() < params.missing_rate[c] { MISSING } else { v as f32 };
            refl[c].push(v);
        }
    }
    let radius = points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    Tile::new(format!("synth-{}", params.seed), [0.0, 0.0], radius, points, refl)?.with_labels(labels)
}

/// Share of wood points in a labeled tile.
pub fn wood_fraction(tile: &Tile) -> f64 {
    let l = tile.labels.as_deref().unwrap_or(&[]);
    l.iter().filter(|&&x| x == WOOD).count() as f64 / l.len().max(1) as f64
}
