use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_lighting, box_blur, render_background, render_motif, ClassTaxonomy, MotifPlacement};
use crate::error::{Error, Result};
use crate::imageops::{ImageTensor, MODEL_INPUT_HEIGHT, MODEL_INPUT_WIDTH};
use crate::seed;

/// Patches must cover at least this fraction of their disc inside the
/// camera footprint to count as the frame's subject.
pub const MIN_VISIBLE_FRACTION: f64 = 0.5;
/// Ground footprint across the row per metre of camera height.
pub const FOOTPRINT_PER_HEIGHT: f64 = 0.25 / 0.3;
pub const EXPOSURE_S: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lighting {
    pub brightness: f64,
    pub shadow: f64,
}

impl Default for Lighting {
    fn default() -> Self {
        Self {
            brightness: 1.0,
            shadow: 0.2,
        }
    }
}

/// A weed patch centred on the row at `pos_m` metres from the start.
#[derive(Debug, Clone, PartialEq)]
pub struct WeedPatch {
    pub pos_m: f64,
    pub class_id: usize,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub row_spacing_m: f64,
    pub length_m: f64,
    pub patches: Vec<WeedPatch>,
    pub lighting: Lighting,
    pub speed_mps: f64,
    pub taxonomy: ClassTaxonomy,
}

#[derive(Serialize, Deserialize)]
struct PatchFile {
    pos_m: f64,
    class: String,
    radius_m: f64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    row_spacing_m: f64,
    length_m: f64,
    patches: Vec<PatchFile>,
    #[serde(default)]
    lighting: Lighting,
    #[serde(default = "default_speed")]
    speed_mps: f64,
}

fn default_speed() -> f64 {
    0.25
}

impl FieldMap {
    pub fn new(
        row_spacing_m: f64,
        length_m: f64,
        mut patches: Vec<WeedPatch>,
        lighting: Lighting,
        speed_mps: f64,
        taxonomy: ClassTaxonomy,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.2..=0.3).contains(&row_spacing_m) {
            return bad(format!("row spacing {row_spacing_m} m outside [0.2, 0.3]"));
        }
        if !(length_m > 0.0 && length_m.is_finite()) {
            return bad(format!("field length {length_m} m must be positive"));
        }
        if !(speed_mps >= 0.0 && speed_mps.is_finite()) {
            return bad(format!("speed {speed_mps} m/s must be non-negative"));
        }
        if !(lighting.brightness > 0.0 && (0.0..1.0).contains(&lighting.shadow)) {
            return bad(format!("bad lighting {lighting:?}"));
        }
        for p in &patches {
            if !taxonomy.is_weed(p.class_id) {
                return bad(format!("patch at {} m has non-weed class {}", p.pos_m, p.class_id));
            }
            if !(0.0..=length_m).contains(&p.pos_m) {
                return bad(format!("patch at {} m outside the {length_m} m field", p.pos_m));
            }
            if !(p.radius_m > 0.0 && p.radius_m <= row_spacing_m) {
                return bad(format!("patch radius {} m outside (0, row spacing]", p.radius_m));
            }
        }
        patches.sort_by(|a, b| a.pos_m.total_cmp(&b.pos_m));
        Ok(Self {
            row_spacing_m,
            length_m,
            patches,
            lighting,
            speed_mps,
            taxonomy,
        })
    }

    pub fn from_json(text: &str, taxonomy: ClassTaxonomy) -> Result<Self> {
        let f: ScenarioFile = serde_json::from_str(text)?;
        let patches = f
            .patches
            .into_iter()
            .map(|p| {
                Ok(WeedPatch {
                    pos_m: p.pos_m,
                    class_id: taxonomy.resolve(&p.class)?,
                    radius_m: p.radius_m,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(f.row_spacing_m, f.length_m, patches, f.lighting, f.speed_mps, taxonomy)
    }

    pub fn to_json(&self) -> Result<String> {
        let f = ScenarioFile {
            row_spacing_m: self.row_spacing_m,
            length_m: self.length_m,
            patches: self
                .patches
                .iter()
                .map(|p| PatchFile {
                    pos_m: p.pos_m,
                    class: self.taxonomy.short_name(p.class_id).to_string(),
                    radius_m: p.radius_m,
                })
                .collect(),
            lighting: self.lighting,
            speed_mps: self.speed_mps,
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    /// A run along `length_m` with VM. and CT. patches every 0.6 to 1.2 m.
    pub fn medium_density(length_m: f64, seed_value: u64) -> Result<Self> {
        let taxonomy = ClassTaxonomy::aiweeds();
        let classes = [taxonomy.resolve("VM.")?, taxonomy.resolve("CT.")?];
        let mut rng = seed::rng(seed_value);
        let mut patches = Vec::new();
        let mut pos = rng.gen_range(0.5..1.0);
        while pos < length_m - 0.3 {
            patches.push(WeedPatch {
                pos_m: pos,
                class_id: classes[rng.gen_range(0..classes.len())],
                radius_m: rng.gen_range(0.075..0.11),
            });
            pos += rng.gen_range(0.6..1.2);
        }
        Self::new(0.25, length_m, patches, Lighting::default(), 0.25, taxonomy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position_m: f64,
    pub speed_mps: f64,
    pub camera_height_m: f64,
    pub gimbal_yaw_deg: f64,
    pub tank_remaining_ml: f64,
    pub sprayer_on: bool,
}

impl RobotState {
    pub fn new(position_m: f64, speed_mps: f64, camera_height_m: f64, tank_ml: f64) -> Result<Self> {
        if !(0.2..=0.4).contains(&camera_height_m) {
            return Err(Error::InvalidArgument(format!("camera height {camera_height_m} m outside [0.2, 0.4]")));
        }
        Ok(Self {
            position_m,
            speed_mps,
            camera_height_m,
            gimbal_yaw_deg: 75.0,
            tank_remaining_ml: tank_ml.max(0.0),
            sprayer_on: false,
        })
    }

    pub fn set_yaw(&mut self, deg: f64) {
        self.gimbal_yaw_deg = deg.clamp(0.0, 150.0);
    }

    /// Length of row (along travel) and width seen by the camera, metres.
    pub fn footprint_m(&self) -> (f64, f64) {
        let across = self.camera_height_m * FOOTPRINT_PER_HEIGHT;
        (across * MODEL_INPUT_WIDTH as f64 / MODEL_INPUT_HEIGHT as f64, across)
    }
}

/// Fraction of a patch disc lying inside the footprint along the row.
fn visible_fraction(patch: &WeedPatch, center_m: f64, along_m: f64) -> f64 {
    let (lo, hi) = (center_m - along_m / 2.0, center_m + along_m / 2.0);
    let r = patch.radius_m;
    // area of a disc between two vertical chords, relative to the disc
    let seg = |x: f64| {
        let u = ((x - patch.pos_m) / r).clamp(-1.0, 1.0);
        (u * (1.0 - u * u).sqrt() + u.asin()) / std::f64::consts::PI + 0.5
    };
    (seg(hi) - seg(lo)).max(0.0)
}

/// The patch a frame at `robot` is about, if any: the one with the
/// largest visible fraction, provided it reaches [`MIN_VISIBLE_FRACTION`].
pub fn dominant_patch(field: &FieldMap, robot: &RobotState) -> Option<usize> {
    let (along, _) = robot.footprint_m();
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in field.patches.iter().enumerate() {
        let f = visible_fraction(p, robot.position_m, along);
        if f >= MIN_VISIBLE_FRACTION && best.is_none_or(|(_, b)| f > b) {
            best = Some((i, f));
        }
    }
    best.map(|(i, _)| i)
}

/// Ground-truth class of a frame: the dominant patch's class or negative.
pub fn frame_truth(field: &FieldMap, robot: &RobotState) -> usize {
    dominant_patch(field, robot)
        .map(|i| field.patches[i].class_id)
        .unwrap_or(field.taxonomy.negative_class_id())
}

/// Motion blur radius in pixels for the robot speed.
pub fn motion_blur_px(robot: &RobotState) -> usize {
    let (_, across) = robot.footprint_m();
    let px_per_m = MODEL_INPUT_HEIGHT as f64 / across;
    (robot.speed_mps.abs() * EXPOSURE_S * px_per_m / 2.0).round() as usize
}

/// Camera frame at the robot's position and its ground-truth class.
pub fn render_frame(field: &FieldMap, robot: &RobotState, seed_value: u64) -> Result<(ImageTensor, usize)> {
    if !(0.0..=field.length_m).contains(&robot.position_m) {
        return Err(Error::InvalidArgument(format!(
            "robot at {} m is outside the {} m field",
            robot.position_m, field.length_m
        )));
    }
    let (w, h) = (MODEL_INPUT_WIDTH, MODEL_INPUT_HEIGHT);
    let (along, across) = robot.footprint_m();
    let px_per_m = h as f64 / across;
    let mut rng = seed::derived_rng(seed_value, &[(robot.position_m * 1e4).round() as u64]);
    let mut img = render_background(w, h, &mut rng);
    let truth = match dominant_patch(field, robot) {
        Some(i) => {
            let p = &field.patches[i];
            let mut prng = seed::derived_rng(seed_value, &[u64::MAX, i as u64]);
            let placement = MotifPlacement {
                cx: w as f64 / 2.0 + (p.pos_m - robot.position_m) / along * w as f64,
                cy: h as f64 / 2.0 + prng.gen_range(-0.1..=0.1) * h as f64,
                radius_px: p.radius_m * px_per_m,
                rotation_deg: prng.gen_range(-180.0..180.0),
                tint: [
                    prng.gen_range(-15.0..=15.0),
                    prng.gen_range(-15.0..=15.0),
                    prng.gen_range(-15.0..=15.0),
                ],
            };
            render_motif(&mut img, p.class_id, &placement);
            p.class_id
        }
        None => field.taxonomy.negative_class_id(),
    };
    let shadow_dir = rng.gen_range(0.0..std::f64::consts::TAU);
    apply_lighting(&mut img, field.lighting.brightness, field.lighting.shadow, shadow_dir);
    box_blur(&mut img, motion_blur_px(robot), 0);
    Ok((img, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> FieldMap {
        let t = ClassTaxonomy::aiweeds();
        let vm = t.resolve("VM.").unwrap();
        FieldMap::new(
            0.25,
            5.0,
            vec![WeedPatch {
                pos_m: 2.0,
                class_id: vm,
                radius_m: 0.1,
            }],
            Lighting::default(),
            0.25,
            t,
        )
        .unwrap()
    }

    #[test]
    fn bare_ground_is_negative() {
        let f = field();
        let r = RobotState::new(0.5, 0.25, 0.3, 1000.0).unwrap();
        let (_, truth) = render_frame(&f, &r, 1).unwrap();
        assert_eq!(truth, f.taxonomy.negative_class_id());
        let over = RobotState { position_m: 2.0, ..r };
        assert_eq!(render_frame(&f, &over, 1).unwrap().1, f.taxonomy.resolve("VM.").unwrap());
    }

    #[test]
    fn zero_speed_has_no_blur_and_frames_repeat() {
        let f = field();
        let r = RobotState::new(2.0, 0.0, 0.3, 1000.0).unwrap();
        assert_eq!(motion_blur_px(&r), 0);
        assert!(motion_blur_px(&RobotState { speed_mps: 1.0, ..r }) > 0);
        assert_eq!(render_frame(&f, &r, 3).unwrap(), render_frame(&f, &r, 3).unwrap());
    }

    #[test]
    fn visible_fraction_geometry() {
        let p = WeedPatch {
            pos_m: 1.0,
            class_id: 13,
            radius_m: 0.1,
        };
        assert!((visible_fraction(&p, 1.0, 1.0) - 1.0).abs() < 1e-12);
        // footprint edge through the centre → half the disc
        assert!((visible_fraction(&p, 1.5, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(visible_fraction(&p, 3.0, 1.0), 0.0);
    }

    #[test]
    fn scenario_json_round_trip_and_validation() {
        let f = field();
        let back = FieldMap::from_json(&f.to_json().unwrap(), ClassTaxonomy::aiweeds()).unwrap();
        assert_eq!(back, f);
        let crop = r#"{"row_spacing_m":0.25,"length_m":3,"patches":[{"pos_m":1,"class":"Flax","radius_m":0.1}]}"#;
        assert!(FieldMap::from_json(crop, ClassTaxonomy::aiweeds()).is_err());
        let wide = r#"{"row_spacing_m":0.5,"length_m":3,"patches":[]}"#;
        assert!(FieldMap::from_json(wide, ClassTaxonomy::aiweeds()).is_err());
        let m = FieldMap::medium_density(15.0, 2).unwrap();
        assert!(m.patches.len() >= 10);
        assert!(RobotState::new(0.0, 0.0, 0.5, 0.0).is_err());
    }
}
