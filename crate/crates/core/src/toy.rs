//! Synthetic "toy walker" silhouettes: a stick figure with a head, torso,
//! swinging legs and arms. Each identity has its own body proportions and
//! gait amplitudes; every sequence is exactly periodic.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{save_sequence, DatasetManifest, Role};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyWalkerSpec {
    pub identities: usize,
    /// Frames per gait cycle.
    pub period: usize,
    pub cycles: usize,
    pub sequences_per_identity: usize,
    /// The first this-many sequences of each identity are gallery, the rest probe.
    pub gallery_per_identity: usize,
    pub height: usize,
    pub width: usize,
    /// Relative per-sequence jitter of the body parameters.
    pub sequence_variation: f64,
    /// Occluded and clean frames each, written as detector-train entries.
    pub detector_frames_per_class: usize,
    pub seed: u64,
}

impl Default for ToyWalkerSpec {
    fn default() -> Self {
        Self {
            identities: 20,
            period: 8,
            cycles: 3,
            sequences_per_identity: 6,
            gallery_per_identity: 4,
            height: 32,
            width: 32,
            sequence_variation: 0.04,
            detector_frames_per_class: 100,
            seed: 0,
        }
    }
}

/// Body proportions, as fractions of the frame height unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerShape {
    pub head_radius: f64,
    /// Fraction of the frame width.
    pub torso_width: f64,
    pub hip_height: f64,
    pub leg_amplitude: f64,
    pub arm_amplitude: f64,
    pub limb_thickness: f64,
    /// Phase offset of the arm swing relative to the legs, radians.
    pub arm_phase: f64,
    /// Forward lean: horizontal head offset as a fraction of the frame width.
    pub lean: f64,
}

impl ToyWalkerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config("toy walker period must be at least 2".into()));
        }
        if self.identities == 0 || self.cycles == 0 || self.sequences_per_identity == 0 {
            return Err(Error::Config("toy walker counts must be positive".into()));
        }
        if self.gallery_per_identity > self.sequences_per_identity {
            return Err(Error::Config("more gallery sequences than sequences".into()));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::Config(format!(
                "toy walker frames must be at least 16x16, got {}x{}",
                self.height, self.width
            )));
        }
        if !(0.0..0.2).contains(&self.sequence_variation) {
            return Err(Error::Config("sequence_variation must lie in [0, 0.2)".into()));
        }
        Ok(())
    }

    /// Identity shapes spread over a stratified grid so that every pair
    /// differs in at least one body proportion.
    pub fn shapes(&self) -> Vec<WalkerShape> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0001);
        let n = self.identities;
        let strata = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect();
            for i in (1..n).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            v
        };
        let [a, b, c, d, e, f, g] = std::array::from_fn(|_| strata(&mut rng));
        (0..n)
            .map(|i| WalkerShape {
                head_radius: 0.05 + 0.06 * a[i],
                torso_width: 0.08 + 0.22 * b[i],
                hip_height: 0.46 + 0.14 * c[i],
                leg_amplitude: 0.12 + 0.48 * d[i],
                arm_amplitude: 0.10 + 0.55 * e[i],
                limb_thickness: 0.06 + 0.05 * f[i],
                arm_phase: PI * (0.7 + 0.6 * rng.random::<f64>()),
                lean: 0.16 * (g[i] - 0.5),
            })
            .collect()
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders one frame at gait phase `phase` (radians).
pub fn render_walker(shape: &WalkerShape, phase: f64, height: usize, width: usize) -> SilhouetteFrame {
    let h = height as f64;
    let w = width as f64;
    let cx = w / 2.0;
    let head = (cx + shape.lean * w, 0.04 * h + shape.head_radius * h);
    let shoulder_y = head.1 + shape.head_radius * h + 0.02 * h;
    let hip_y = shape.hip_height * h;
    let half_torso = shape.torso_width * w / 2.0;
    let leg_len = 0.95 * h - hip_y;
    let arm_len = 0.30 * h;
    let thick = shape.limb_thickness * h / 2.0;
    let leg_angle = shape.leg_amplitude * phase.sin();
    let arm_angle = shape.arm_amplitude * (phase + shape.arm_phase).sin();
    let hip = (cx, hip_y);
    let shoulder = (cx + 0.5 * shape.lean * w, shoulder_y);
    let limb = |origin: (f64, f64), len: f64, angle: f64| (origin.0 + len * angle.sin(), origin.1 + len * angle.cos());
    let limbs = [
        (hip, limb(hip, leg_len, leg_angle)),
        (hip, limb(hip, leg_len, -leg_angle)),
        (shoulder, limb(shoulder, arm_len, arm_angle)),
        (shoulder, limb(shoulder, arm_len, -arm_angle)),
    ];
    SilhouetteFrame::from_fn(height, width, |y, x| {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        let in_head = ((p.0 - head.0).powi(2) + (p.1 - head.1).powi(2)).sqrt() <= shape.head_radius * h;
        let along = ((p.1 - shoulder_y) / (hip_y - shoulder_y)).clamp(0.0, 1.0);
        let torso_cx = shoulder.0 + (cx - shoulder.0) * along;
        let in_torso = (p.0 - torso_cx).abs() <= half_torso && p.1 >= shoulder_y && p.1 <= hip_y;
        let in_limb = limbs.iter().any(|&(a, b)| segment_distance(p, a, b) <= thick);
        f32::from(u8::from(in_head || in_torso || in_limb))
    })
}

fn jitter(shape: &WalkerShape, amount: f64, rng: &mut ChaCha8Rng) -> WalkerShape {
    let mut j = |v: f64| v * (1.0 + amount * rng.random_range(-1.0..=1.0));
    WalkerShape {
        head_radius: j(shape.head_radius),
        torso_width: j(shape.torso_width),
        hip_height: j(shape.hip_height),
        leg_amplitude: j(shape.leg_amplitude),
        arm_amplitude: j(shape.arm_amplitude),
        limb_thickness: j(shape.limb_thickness),
        arm_phase: shape.arm_phase,
        lean: shape.lean,
    }
}

/// Labelled frames for detector training: blank or speckle-noise frames
/// (label 1) and clean walker frames (label 0).
pub fn detector_frames(spec: &ToyWalkerSpec, per_class: usize, seed: u64) -> Vec<(SilhouetteFrame, u8)> {
    let shapes = spec.shapes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        let occluded = if i % 2 == 0 {
            SilhouetteFrame::blank(spec.height, spec.width)
        } else {
            let density = rng.random_range(0.02..0.15);
            SilhouetteFrame::from_fn(spec.height, spec.width, |_, _| f32::from(u8::from(rng.random::<f64>() < density)))
        };
        out.push((occluded, 1));
        let shape = shapes[rng.random_range(0..shapes.len())];
        let phase = rng.random_range(0.0..2.0 * PI);
        out.push((render_walker(&shape, phase, spec.height, spec.width), 0));
    }
    out
}

/// All toy sequences with their manifest roles, in deterministic order.
pub fn generate_sequences(spec: &ToyWalkerSpec) -> Result<Vec<(SilhouetteSequence, Role)>> {
    spec.validate()?;
    let shapes = spec.shapes();
    let mut out = Vec::new();
    for (id, base) in shapes.iter().enumerate() {
        for s in 0..spec.sequences_per_identity {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003) ^ ((id as u64) << 16) ^ s as u64);
            let shape = jitter(base, spec.sequence_variation, &mut rng);
            let offset = rng.random_range(0..spec.period);
            let cycle: Vec<SilhouetteFrame> = (0..spec.period)
                .map(|t| {
                    let phase = 2.0 * PI * ((t + offset) % spec.period) as f64 / spec.period as f64;
                    render_walker(&shape, phase, spec.height, spec.width)
                })
                .collect();
            let frames = (0..spec.period * spec.cycles)
                .map(|t| cycle[t % spec.period].clone())
                .collect();
            let role = if s < spec.gallery_per_identity { Role::Gallery } else { Role::Probe };
            let seq = SilhouetteSequence::new(frames, format!("{id:03}"), format!("nm-{:02}", s + 1))?;
            out.push((seq, role));
        }
    }
    Ok(out)
}

/// Writes the toy corpus as PNG frames plus `manifest.jsonl` under `dir`.
pub fn generate_toy_dataset(spec: &ToyWalkerSpec, dir: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (seq, role) in generate_sequences(spec)? {
        entries.push(save_sequence(&seq, dir, role)?);
    }
    if spec.detector_frames_per_class > 0 {
        let labelled = detector_frames(spec, spec.detector_frames_per_class, spec.seed ^ 0xde7e_c7);
        let (frames, mask): (Vec<_>, Vec<_>) = labelled.into_iter().map(|(f, y)| (f, y == 1)).unzip();
        let seq = SilhouetteSequence::new(frames, "detector", "train")?.with_mask(mask)?;
        entries.push(save_sequence(&seq, dir, Role::DetectorTrain)?);
    }
    let manifest = DatasetManifest::new(entries, dir)?;
    manifest.save(dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
