//! Desk-scale curtain world: a planar base with heading, a three-axis arm, and a
//! particle chain hanging from a straight rail.
//!
//! The rail runs along world +x through the geometry origin. The robot starts on
//! the negative-y side facing the rail. Particle 0 is pinned to the rail; the last
//! particle is the handle. Particles not held by the gripper stay on the rail line.

use super::{mix, Environment};
use crate::action::ActionId;
use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::math::{atan2, cos, quantize, sin, sqrt, wrap_angle};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;
use core::str::FromStr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Intrinsic observation length: bias, base pose (4), arm (3), gripper, particles, color (2).
pub const fn intrinsic_dim(particles: usize) -> usize {
    1 + 4 + 3 + 1 + 3 * particles + 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Task {
    CurtainOpen,
    GapCover,
}

impl Task {
    pub fn tag(self) -> &'static str {
        match self {
            Task::CurtainOpen => "curtain_open",
            Task::GapCover => "gap_cover",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curtain_open" | "curtain-open" => Ok(Task::CurtainOpen),
            "gap_cover" | "gap-cover" => Ok(Task::GapCover),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EnvConfig {
    pub task: Task,
    /// Initial perpendicular distance from the rail, in meters.
    pub distance: [f64; 2],
    /// Largest initial |x| offset from the opening center.
    pub lateral: f64,
    /// Largest initial heading deviation from facing the rail, in degrees.
    pub heading_deg: f64,
    pub particles: usize,
    pub curtain_width: f64,
    /// Gap width for gap-cover; the doorway equals the curtain width for curtain-open.
    pub gap_width: f64,
    pub max_strain: f64,
    pub min_spacing: f64,
    /// Draw strain and color per episode instead of the nominal material.
    pub randomize_material: bool,
    pub strain_range: [f64; 2],
    pub body_step: f64,
    pub turn_step_deg: f64,
    pub hand_step: f64,
    pub grasp_radius: f64,
    pub base_radius: f64,
    pub clear_radius: f64,
    pub fov_deg: f64,
    pub view_range: f64,
    pub solver_iterations: usize,
    pub feature_dim: usize,
    pub lift_seed: u64,
    pub noise_scale: f64,
    /// Weight of the gripper flag in the intrinsic vector.
    pub gripper_signal: f64,
    pub jitter_period: u32,
}

impl EnvConfig {
    pub fn curtain_open() -> Self {
        Self {
            task: Task::CurtainOpen,
            distance: [1.0, 3.0],
            lateral: 2.0,
            heading_deg: 15.0,
            particles: 16,
            curtain_width: 1.1,
            gap_width: 1.0,
            max_strain: 0.1,
            min_spacing: 0.01,
            randomize_material: false,
            strain_range: [0.05, 0.25],
            body_step: 0.1,
            turn_step_deg: 10.0,
            hand_step: 0.05,
            grasp_radius: 0.08,
            base_radius: 0.2,
            clear_radius: 0.3,
            fov_deg: 60.0,
            view_range: 4.0,
            solver_iterations: 8,
            feature_dim: 64,
            lift_seed: 0x5eed,
            noise_scale: 0.001,
            gripper_signal: 0.2,
            jitter_period: 25,
        }
    }

    pub fn gap_cover() -> Self {
        Self {
            task: Task::GapCover,
            distance: [1.0, 2.0],
            lateral: 0.8,
            heading_deg: 0.0,
            curtain_width: 1.2,
            ..Self::curtain_open()
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::CurtainOpen => Self::curtain_open(),
            Task::GapCover => Self::gap_cover(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.particles < 3 {
            return bad(format!("need at least 3 particles, got {}", self.particles));
        }
        if !(self.distance[0] > self.base_radius && self.distance[0] <= self.distance[1]) {
            return bad(format!("distance range {:?} invalid", self.distance));
        }
        if self.lateral < 0.0 || self.heading_deg < 0.0 || self.heading_deg >= 90.0 {
            return bad("lateral and heading ranges must be non-negative, heading below 90".into());
        }
        if !(self.curtain_width > 0.0 && self.max_strain >= 0.0 && self.min_spacing > 0.0) {
            return bad("curtain width, strain and spacing must be positive".into());
        }
        if self.min_spacing > self.rest_length() {
            return bad("min spacing exceeds rest length".into());
        }
        if self.randomize_material && !(0.0 <= self.strain_range[0] && self.strain_range[0] <= self.strain_range[1]) {
            return bad(format!("strain range {:?} invalid", self.strain_range));
        }
        if self.feature_dim < intrinsic_dim(self.particles) {
            return bad(format!(
                "feature_dim {} below intrinsic dimension {}",
                self.feature_dim,
                intrinsic_dim(self.particles)
            ));
        }
        if self.noise_scale < 0.0 || self.solver_iterations == 0 || self.jitter_period == 0 {
            return bad("noise, solver iterations and jitter period out of range".into());
        }
        if self.task == Task::GapCover {
            let geo = self.geometry([0.0, 0.0]);
            let reach = geo.anchor_x + (self.particles - 1) as f64 * geo.max_link(self.max_strain);
            if geo.opening[1] + DRAG_MARGIN > reach {
                return bad(format!(
                    "gap of width {} cannot be covered by a curtain reaching x = {reach:.3}",
                    self.gap_width
                ));
            }
        } else if (self.particles - 1) as f64 * self.min_spacing
            + 2.0 * self.base_radius
            + self.body_step
            + 2.0 * BODY_TOL
            >= self.curtain_width
        {
            return bad("doorway too narrow for the base once the curtain is drawn".into());
        }
        Ok(())
    }

    pub fn rest_length(&self) -> f64 {
        self.curtain_width / (self.particles - 1) as f64
    }

    fn geometry(&self, origin: [f64; 2]) -> Geometry {
        let (opening, anchor_x) = match self.task {
            Task::CurtainOpen => {
                let h = self.curtain_width / 2.0;
                ([-h, h], h)
            }
            Task::GapCover => {
                let h = self.gap_width / 2.0;
                ([-h, h], -h - 0.05)
            }
        };
        Geometry {
            origin,
            rail_z: RAIL_Z,
            anchor_x,
            opening,
            rest_length: self.rest_length(),
            min_spacing: self.min_spacing,
        }
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::curtain_open()
    }
}

const RAIL_Z: f64 = 0.5;
const SHOULDER_Z: f64 = 0.5;
const ARM_MIN: [f64; 3] = [0.2, -0.5, -0.4];
const ARM_MAX: [f64; 3] = [1.0, 0.5, 0.4];
const ARM_HOME: [f64; 3] = [0.3, 0.0, 0.0];
const ARENA: [f64; 4] = [-4.0, 4.0, -4.0, 3.0];
const STAND_REACH: f64 = 0.5;
const DRAG_MARGIN: f64 = 0.15;
const BODY_TOL: f64 = 0.05;
const HAND_TOL: f64 = 0.025;
const RAIL_TOL: f64 = 0.03;
const SLACK: f64 = 1e-7;
/// Initial gap-cover spacing as a fraction of the rest length.
const BUNCHED: f64 = 0.25;

/// Static scene layout, in world coordinates relative to `origin` where noted.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Geometry {
    pub origin: [f64; 2],
    pub rail_z: f64,
    /// Pinned particle x, relative to the origin.
    pub anchor_x: f64,
    /// Doorway (curtain-open) or gap (gap-cover) x-extent, relative to the origin.
    pub opening: [f64; 2],
    pub rest_length: f64,
    pub min_spacing: f64,
}

impl Geometry {
    pub fn max_link(&self, strain: f64) -> f64 {
        self.rest_length * (1.0 + strain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Material {
    pub max_strain: f64,
    pub color: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldState {
    pub task: Task,
    /// `(x, y, heading)`, heading in radians from world +x.
    pub base: [f64; 3],
    /// Arm tip offset in the base frame: forward, left, up from the shoulder.
    pub arm: [f64; 3],
    pub gripper_closed: bool,
    pub curtain: Vec<[f64; 3]>,
    pub grasped: Option<usize>,
    pub geometry: Geometry,
    pub material: Material,
    pub step_count: u32,
    pub episode_seed: u64,
}

impl WorldState {
    pub fn handle(&self) -> usize {
        self.curtain.len() - 1
    }

    pub fn tip(&self) -> [f64; 3] {
        let [x, y, h] = self.base;
        let (s, c) = (sin(h), cos(h));
        [
            x + c * self.arm[0] - s * self.arm[1],
            y + s * self.arm[0] + c * self.arm[1],
            SHOULDER_Z + self.arm[2],
        ]
    }

    fn world_x(&self, rel: f64) -> f64 {
        self.geometry.origin[0] + rel
    }

    /// Direction along the rail from the anchor toward the handle.
    fn chain_sign(&self) -> f64 {
        if self.geometry.anchor_x > self.geometry.opening[0] && self.task == Task::CurtainOpen {
            -1.0
        } else {
            1.0
        }
    }

    fn max_link(&self) -> f64 {
        self.geometry.max_link(self.material.max_strain)
    }

    fn quantize(&mut self) {
        for v in self.base.iter_mut().chain(self.arm.iter_mut()) {
            *v = quantize(*v);
        }
        for p in &mut self.curtain {
            for v in p.iter_mut() {
                *v = quantize(*v);
            }
        }
    }

    /// Rigidly shifts the whole scene, robot included.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut s = self.clone();
        s.base[0] += dx;
        s.base[1] += dy;
        s.geometry.origin[0] += dx;
        s.geometry.origin[1] += dy;
        for p in &mut s.curtain {
            p[0] += dx;
            p[1] += dy;
        }
        s
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]))
}

/// Violations of the chain, rail and grasp constraints; empty when consistent.
pub fn constraint_violations(s: &WorldState) -> Vec<String> {
    let mut out = Vec::new();
    let g = &s.geometry;
    let oy = g.origin[1];
    let max = s.max_link();
    let sign = s.chain_sign();
    let anchor = [s.world_x(g.anchor_x), oy, g.rail_z];
    if dist3(s.curtain[0], anchor) > SLACK {
        out.push("anchor moved".into());
    }
    for (i, p) in s.curtain.iter().enumerate() {
        if s.grasped == Some(i) {
            if dist3(*p, s.tip()) > SLACK {
                out.push(format!("grasped particle {i} is off the arm tip"));
            }
        } else if (p[1] - oy).abs() > SLACK || (p[2] - g.rail_z).abs() > SLACK {
            out.push(format!("particle {i} left the rail"));
        }
    }
    for i in 0..s.curtain.len() - 1 {
        let (a, b) = (s.curtain[i], s.curtain[i + 1]);
        let d = dist3(a, b);
        if d > max + SLACK {
            out.push(format!("link {i} stretched to {d:.6} > {max:.6}"));
        }
        if sign * (b[0] - a[0]) < g.min_spacing - SLACK {
            out.push(format!("link {i} folded below min spacing"));
        }
    }
    if s.grasped.is_some() != s.gripper_closed {
        out.push("gripper flag disagrees with grasp".into());
    }
    let [x0, x1, y0, y1] = ARENA;
    let (bx, by) = (s.base[0] - g.origin[0], s.base[1] - oy);
    if !(x0..=x1).contains(&bx) || !(y0..=y1).contains(&by) {
        out.push("base outside the arena".into());
    }
    out
}

/// Projects rail particles onto the spacing constraints with a fixed number of
/// alternating sweeps, keeping the anchor and any grasped particle pinned.
fn relax(s: &mut WorldState, iterations: usize) {
    let n = s.curtain.len();
    let sign = s.chain_sign();
    let min = s.geometry.min_spacing;
    let max = s.max_link();
    let oy = s.geometry.origin[1];
    let rz = s.geometry.rail_z;
    let pinned = |i: usize| i == 0 || s.grasped == Some(i);
    // longest x-extent a link may have given how far its ends sit off the rail
    let reach = |p: [f64; 3], q: [f64; 3]| {
        let (dy, dz) = (p[1] - q[1], p[2] - q[2]);
        let off = sqrt(dy * dy + dz * dz);
        if off > max {
            min
        } else {
            sqrt(max * max - off * off).max(min)
        }
    };
    let mut c = s.curtain.clone();
    for _ in 0..iterations {
        for i in 1..n {
            if pinned(i) {
                continue;
            }
            let r = reach(c[i - 1], [c[i][0], oy, rz]);
            let d = (sign * (c[i][0] - c[i - 1][0])).clamp(min, r);
            c[i][0] = c[i - 1][0] + sign * d;
        }
        for i in (1..n - 1).rev() {
            if pinned(i) {
                continue;
            }
            let r = reach(c[i + 1], [c[i][0], oy, rz]);
            let d = (sign * (c[i + 1][0] - c[i][0])).clamp(min, r);
            c[i][0] = c[i + 1][0] - sign * d;
        }
    }
    s.curtain = c;
}

/// Linear feature lift plus bounded seeded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub matrix: Vec<f64>,
    pub noise_scale: f64,
}

impl ObservationModel {
    pub fn new(seed: u64, rows: usize, cols: usize, noise_scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / sqrt(cols as f64);
        let matrix = (0..rows * cols)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            seed,
            rows,
            cols,
            matrix,
            noise_scale,
        }
    }

    /// `matrix * v` plus uniform noise in `±noise_scale` drawn from `noise_seed`.
    pub fn lift(&self, v: &[f64], noise_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        self.matrix
            .chunks_exact(self.cols)
            .map(|row| {
                let x: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                if self.noise_scale > 0.0 {
                    x + rng.gen_range(-self.noise_scale..=self.noise_scale)
                } else {
                    x
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEnv {
    config: EnvConfig,
    model: ObservationModel,
}

impl SurrogateEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let model = ObservationModel::new(
            config.lift_seed,
            config.feature_dim,
            intrinsic_dim(config.particles),
            config.noise_scale,
        );
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    /// Initial state from an explicit pose, material and episode seed.
    pub fn initial_state(&self, base: [f64; 3], material: Material, episode_seed: u64) -> WorldState {
        let cfg = &self.config;
        let geometry = cfg.geometry([0.0, 0.0]);
        let n = cfg.particles;
        let spacing = match cfg.task {
            Task::CurtainOpen => -geometry.rest_length,
            Task::GapCover => BUNCHED * geometry.rest_length,
        };
        let curtain = (0..n)
            .map(|i| [geometry.anchor_x + spacing * i as f64, 0.0, geometry.rail_z])
            .collect();
        let mut s = WorldState {
            task: cfg.task,
            base,
            arm: ARM_HOME,
            gripper_closed: false,
            curtain,
            grasped: None,
            geometry,
            material,
            step_count: 0,
            episode_seed,
        };
        s.quantize();
        s
    }

    pub fn default_material(&self) -> Material {
        Material {
            max_strain: self.config.max_strain,
            color: [0.5, 0.0],
        }
    }

    pub fn intrinsic(&self, s: &WorldState) -> Vec<f64> {
        let g = &s.geometry;
        let [bx, by, h] = s.base;
        let (sh, ch) = (sin(h), cos(h));
        let mut v = Vec::with_capacity(intrinsic_dim(s.curtain.len()));
        v.push(1.0);
        v.extend([bx - g.origin[0], by - g.origin[1], ch, sh]);
        v.extend(s.arm);
        v.push(if s.gripper_closed {
            self.config.gripper_signal
        } else {
            0.0
        });
        let fov = self.config.fov_deg.to_radians();
        for p in &s.curtain {
            let (rx, ry) = (p[0] - bx, p[1] - by);
            let fwd = ch * rx + sh * ry;
            let left = -sh * rx + ch * ry;
            let up = p[2] - SHOULDER_Z;
            let range = sqrt(rx * rx + ry * ry);
            if atan2(left, fwd).abs() <= fov && range <= self.config.view_range {
                v.extend([fwd, left, up]);
            } else {
                v.extend([0.0, 0.0, 0.0]);
            }
        }
        v.extend(s.material.color);
        v
    }

    fn blocked(&self, s: &WorldState, x: f64, y: f64) -> bool {
        let g = &s.geometry;
        let r = self.config.base_radius;
        let dy = y - g.origin[1];
        let [x0, x1, y0, y1] = ARENA;
        let rel = x - g.origin[0];
        if rel < x0 || rel > x1 || dy < y0 || dy > y1 {
            return true;
        }
        if dy.abs() >= r {
            return false;
        }
        if s.task == Task::GapCover {
            return true;
        }
        let half = sqrt(r * r - dy * dy);
        let (lo, hi) = (rel - half, rel + half);
        if lo < g.opening[0] || hi > g.opening[1] {
            return true;
        }
        let (cmin, cmax) = curtain_extent(s);
        hi > cmin - g.origin[0] && lo < cmax - g.origin[0]
    }

    fn clear_x_target(&self, s: &WorldState) -> f64 {
        let g = &s.geometry;
        let r = self.config.base_radius;
        let (cmin, _) = curtain_extent(s);
        let lo = s.world_x(g.opening[0]) + r;
        let hi = cmin - r;
        0.5 * (lo + hi)
    }

    fn drag_target(&self, s: &WorldState) -> f64 {
        let g = &s.geometry;
        match s.task {
            Task::CurtainOpen => {
                s.world_x(g.anchor_x) - (s.curtain.len() - 1) as f64 * g.min_spacing - self.config.body_step
            }
            Task::GapCover => s.world_x(g.opening[1]) + DRAG_MARGIN,
        }
    }

    fn dragged(&self, s: &WorldState) -> bool {
        s.curtain[s.handle()][0] >= self.drag_target(s) - SLACK
    }

    /// Applies `action` to a copy of `s` and reports whether the result is admissible.
    fn try_step(&self, s: &WorldState, action: ActionId) -> Option<WorldState> {
        use ActionId::*;
        let cfg = &self.config;
        let mut n = s.clone();
        let h = s.base[2];
        let body = |f: f64, l: f64| {
            let d = cfg.body_step;
            [d * (f * cos(h) - l * sin(h)), d * (f * sin(h) + l * cos(h))]
        };
        match action {
            BodyForward | BodyLeft | BodyRight | BodyBackward => {
                let [dx, dy] = match action {
                    BodyForward => body(1.0, 0.0),
                    BodyBackward => body(-1.0, 0.0),
                    BodyLeft => body(0.0, 1.0),
                    _ => body(0.0, -1.0),
                };
                n.base[0] += dx;
                n.base[1] += dy;
                if self.blocked(s, n.base[0], n.base[1]) {
                    return None;
                }
            }
            BodyTurnLeft | BodyTurnRight => {
                let d = cfg.turn_step_deg.to_radians();
                n.base[2] = wrap_angle(h + if action == BodyTurnLeft { d } else { -d });
            }
            HandForward | HandBackward | HandLeft | HandRight | HandUp | HandDown => {
                let (axis, dir) = match action {
                    HandForward => (0, 1.0),
                    HandBackward => (0, -1.0),
                    HandLeft => (1, 1.0),
                    HandRight => (1, -1.0),
                    HandUp => (2, 1.0),
                    _ => (2, -1.0),
                };
                n.arm[axis] += dir * cfg.hand_step;
                if n.arm[axis] < ARM_MIN[axis] - SLACK || n.arm[axis] > ARM_MAX[axis] + SLACK {
                    return None;
                }
            }
            HandGrasp => {
                if s.grasped.is_some() || dist3(s.tip(), s.curtain[s.handle()]) > cfg.grasp_radius {
                    return None;
                }
                n.grasped = Some(s.handle());
                n.gripper_closed = true;
            }
            HandRelease => {
                let i = s.grasped?;
                n.grasped = None;
                n.gripper_closed = false;
                n.curtain[i][1] = s.geometry.origin[1];
                n.curtain[i][2] = s.geometry.rail_z;
            }
        }
        if let Some(i) = n.grasped {
            n.curtain[i] = n.tip();
        }
        relax(&mut n, cfg.solver_iterations);
        n.quantize();
        constraint_violations(&n).is_empty().then_some(n)
    }

    fn approach(&self, s: &WorldState) -> ActionId {
        use ActionId::*;
        let heading_err = wrap_angle(s.base[2] - FRAC_PI_2);
        let half_turn = 0.5 * self.config.turn_step_deg.to_radians();
        if heading_err.abs() > half_turn + 1e-9 {
            return if heading_err > 0.0 { BodyTurnRight } else { BodyTurnLeft };
        }
        let handle = s.curtain[s.handle()];
        let h = s.base[2];
        let (sh, ch) = (sin(h), cos(h));
        // stand so the tip lands on the handle with the arm at its nominal reach
        let stand = [handle[0] - ch * STAND_REACH, handle[1] - sh * STAND_REACH];
        let (ex, ey) = (stand[0] - s.base[0], stand[1] - s.base[1]);
        let fwd = ch * ex + sh * ey;
        let left = -sh * ex + ch * ey;
        if fwd.abs().max(left.abs()) > BODY_TOL {
            if let Some(a) = self.jitter(s) {
                return a;
            }
            return if left.abs() > BODY_TOL {
                if left > 0.0 {
                    BodyLeft
                } else {
                    BodyRight
                }
            } else if fwd > 0.0 {
                BodyForward
            } else {
                BodyBackward
            };
        }
        let tip = s.tip();
        let (tx, ty) = (handle[0] - tip[0], handle[1] - tip[1]);
        let err = [ch * tx + sh * ty, -sh * tx + ch * ty, handle[2] - tip[2]];
        let axis = [1, 2, 0].into_iter().find(|&i| err[i].abs() > HAND_TOL);
        if let Some(axis) = axis {
            let e = err[axis];
            return match (axis, e > 0.0) {
                (0, true) => HandForward,
                (0, false) => HandBackward,
                (1, true) => HandLeft,
                (1, false) => HandRight,
                (_, true) => HandUp,
                (_, false) => HandDown,
            };
        }
        HandGrasp
    }

    fn drag(&self, s: &WorldState) -> ActionId {
        use ActionId::*;
        if self.dragged(s) {
            return HandRelease;
        }
        let tip = s.tip();
        let g = &s.geometry;
        let (sh, ch) = (sin(s.base[2]), cos(s.base[2]));
        let off_y = tip[1] - g.origin[1];
        let off_z = tip[2] - g.rail_z;
        if off_z.abs() > RAIL_TOL {
            return if off_z > 0.0 { HandDown } else { HandUp };
        }
        if off_y.abs() > RAIL_TOL {
            // move the tip back toward the rail along whichever arm axis is more aligned with y
            return if sh.abs() >= ch.abs() {
                if (off_y > 0.0) == (sh > 0.0) {
                    HandBackward
                } else {
                    HandForward
                }
            } else if (off_y > 0.0) == (ch > 0.0) {
                HandRight
            } else {
                HandLeft
            };
        }
        // +x in the base frame is (cos h, -sin h): forward component cos h, left component -sin h
        if ch.abs() > sh.abs() {
            if ch > 0.0 {
                BodyForward
            } else {
                BodyBackward
            }
        } else if sh > 0.0 {
            BodyRight
        } else {
            BodyLeft
        }
    }

    fn traverse(&self, s: &WorldState) -> ActionId {
        use ActionId::*;
        let target_x = self.clear_x_target(s);
        let ex = target_x - s.base[0];
        let sh = sin(s.base[2]);
        if ex.abs() > BODY_TOL && s.base[1] < s.geometry.origin[1] {
            // left in the base frame points along (-sin h, cos h)
            return if (ex > 0.0) == (-sh > 0.0) { BodyLeft } else { BodyRight };
        }
        BodyForward
    }

    fn jitter(&self, s: &WorldState) -> Option<ActionId> {
        let period = self.config.jitter_period;
        let window = s.step_count / period;
        let r = mix(s.episode_seed ^ 0x6a09_e667_f3bc_c908, window as u64);
        if s.step_count % period != (r % period as u64) as u32 {
            return None;
        }
        Some(if (r >> 32) & 1 == 0 {
            ActionId::BodyLeft
        } else {
            ActionId::BodyRight
        })
    }

    fn in_range(&self, s: &WorldState) -> bool {
        let g = &s.geometry;
        let dy = g.origin[1] - s.base[1];
        let dx = (s.base[0] - g.origin[0]).abs();
        let margin = 0.5;
        dy >= self.config.base_radius
            && dy <= self.config.distance[1].max(self.config.distance[0]) + margin
            && dx <= self.config.lateral + 1.0 + margin
            && wrap_angle(s.base[2] - FRAC_PI_2).abs() <= self.config.heading_deg.to_radians() + 0.1 + PI / 6.0
    }
}

/// World x-extent of the curtain particles.
pub fn curtain_extent(s: &WorldState) -> (f64, f64) {
    s.curtain.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p[0]), b.max(p[0]))
    })
}

impl Environment for SurrogateEnv {
    type State = WorldState;

    fn task_tag(&self) -> &str {
        self.config.task.tag()
    }

    fn reset(&self, seed: u64) -> Result<WorldState> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: f64, hi: f64| if hi <= lo { lo } else { rng.gen_range(lo..=hi) };
        let d = uniform(cfg.distance[0], cfg.distance[1]);
        let x = uniform(-cfg.lateral, cfg.lateral);
        let dev = uniform(-cfg.heading_deg, cfg.heading_deg).to_radians();
        let material = if cfg.randomize_material {
            let strain = uniform(cfg.strain_range[0], cfg.strain_range[1]);
            let angle = uniform(-PI, PI);
            Material {
                max_strain: strain,
                color: [0.5 * cos(angle), 0.5 * sin(angle)],
            }
        } else {
            self.default_material()
        };
        let s = self.initial_state([x, -d, FRAC_PI_2 + dev], material, seed);
        let v = constraint_violations(&s);
        if !v.is_empty() {
            return Err(Error::Config(format!("initial state infeasible: {}", v.join("; "))));
        }
        Ok(s)
    }

    fn step(&self, state: &WorldState, action: ActionId) -> WorldState {
        let mut next = self.try_step(state, action).unwrap_or_else(|| state.clone());
        next.step_count = state.step_count + 1;
        next
    }

    fn observe(&self, state: &WorldState) -> FeatureVector {
        let v = self.intrinsic(state);
        let noise_seed = mix(mix(self.model.seed, state.episode_seed), state.step_count as u64);
        FeatureVector::new(self.model.lift(&v, noise_seed)).expect("lifted observation is finite and non-zero")
    }

    fn success(&self, s: &WorldState) -> bool {
        let g = &s.geometry;
        match s.task {
            Task::CurtainOpen => {
                let crossed = s.base[1] - g.origin[1] > self.config.base_radius;
                let clear = s.curtain.iter().all(|p| {
                    let (dx, dy) = (p[0] - s.base[0], p[1] - s.base[1]);
                    sqrt(dx * dx + dy * dy) > self.config.clear_radius
                });
                crossed && clear
            }
            Task::GapCover => {
                let (lo, hi) = curtain_extent(s);
                s.grasped.is_none() && lo <= s.world_x(g.opening[0]) && hi >= s.world_x(g.opening[1])
            }
        }
    }

    fn expert(&self, s: &WorldState) -> Result<Option<ActionId>> {
        if self.success(s) {
            return Ok(None);
        }
        if s.grasped.is_some() {
            return Ok(Some(self.drag(s)));
        }
        let dragged = self.dragged(s);
        if !dragged && !self.in_range(s) {
            return Err(Error::ExpertRefused(format!(
                "base {:?} outside the expert's operating range",
                s.base
            )));
        }
        Ok(Some(match (s.task, dragged) {
            (Task::CurtainOpen, true) => self.traverse(s),
            _ => self.approach(s),
        }))
    }

    fn dataset_meta(&self) -> Vec<(String, String)> {
        vec![
            ("lift_seed".into(), format!("{}", self.model.seed)),
            ("noise_scale".into(), format!("{}", self.model.noise_scale)),
            ("intrinsic_dim".into(), format!("{}", self.model.cols)),
        ]
    }
}

impl SurrogateEnv {
    /// Applies `action` and reports whether it was admissible (not clamped).
    pub fn step_checked(&self, state: &WorldState, action: ActionId) -> (WorldState, bool) {
        match self.try_step(state, action) {
            Some(mut n) => {
                n.step_count = state.step_count + 1;
                (n, true)
            }
            None => (self.step(state, action), false),
        }
    }

    pub fn in_fov(&self, s: &WorldState, point: [f64; 2]) -> bool {
        let (rx, ry) = (point[0] - s.base[0], point[1] - s.base[1]);
        let h = s.base[2];
        let fwd = cos(h) * rx + sin(h) * ry;
        let left = -sin(h) * rx + cos(h) * ry;
        atan2(left, fwd).abs() <= self.config.fov_deg.to_radians() && sqrt(rx * rx + ry * ry) <= self.config.view_range
    }

    pub fn rail_distance(&self, s: &WorldState) -> f64 {
        s.geometry.origin[1] - s.base[1]
    }
}
