//! Dataset ingestion and synthetic action clips.
//!
//! On-disk layout: one directory per video holding zero-padded PNG frames,
//! plus a single `manifest.json` at the dataset root. Synthetic videos are
//! rigid-motion programs over simple shapes so that the class label fully
//! determines the motion and a classifier oracle is trainable.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::{imageops, ImageReader, RgbImage};
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::F;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("manifest parse error: {0}")]
    ManifestParse(#[from] serde_json::Error),
    #[error("manifest schema {found} unsupported (expected {MANIFEST_SCHEMA})")]
    ManifestSchema { found: u32 },
    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error("entry {index} out of range ({len} entries)")]
    EntryOutOfRange { index: usize, len: usize },
    #[error("clip length {clip_len} exceeds video frames {num_frames}")]
    ClipTooLong { clip_len: usize, num_frames: usize },
    #[error("position encoding needs 0 <= start < total, got start={start}, total={total}")]
    BadPosition { start: usize, total: usize },
    #[error("frame {path} missing or unreadable")]
    MissingFrame { path: PathBuf },
}

/// Relative temporal position of a clip inside its source video, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEncoding {
    pub value: f64,
}

/// Exact ratio `start_frame / total_frames`.
pub fn compute_position_encoding(start_frame: usize, total_frames: usize) -> Result<PositionEncoding, DataError> {
    if total_frames == 0 || start_frame >= total_frames {
        return Err(DataError::BadPosition { start: start_frame, total: total_frames });
    }
    Ok(PositionEncoding { value: start_frame as f64 / total_frames as f64 })
}

/// A sampled clip: `frames` is `[T, H, W, C]` with values in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub frames: ArrayD<F>,
    pub start_frame: usize,
    pub total_frames: usize,
    pub class_id: usize,
    pub class_name: String,
}

impl VideoClip {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Check the value-range/shape contract this type promises.
    pub fn validate(&self, expected_len: usize) -> Result<(), DataError> {
        let s = self.frames.shape();
        if s.len() != 4 {
            return Err(DataError::ManifestInvalid(format!("clip must be [T,H,W,C], got {s:?}")));
        }
        if s[0] != expected_len {
            return Err(DataError::ClipTooLong { clip_len: expected_len, num_frames: s[0] });
        }
        if self.start_frame + s[0] > self.total_frames {
            return Err(DataError::ManifestInvalid("start_frame + T exceeds total_frames".into()));
        }
        if self.frames.iter().any(|v| !v.is_finite() || *v < -1.0 || *v > 1.0) {
            return Err(DataError::ManifestInvalid("pixel values must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_dir: String,
    pub class_name: String,
    pub class_id: usize,
    pub num_frames: usize,
    pub frame_size: usize,
}

/// Dataset index: class vocabulary plus one entry per video directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: u32,
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(root: &Path) -> Result<Self, DataError> {
        let path = root.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(DataError::ManifestSchema { found: m.schema });
        }
        m.root = root.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<(), DataError> {
        let path = root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        let mut f = fs::File::create(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
        f.write_all(text.as_bytes()).map_err(|source| DataError::Io { path, source })?;
        Ok(())
    }

    /// Class ids must form a contiguous 0-based range over the vocabulary.
    pub fn validate(&self) -> Result<(), DataError> {
        for e in &self.entries {
            if e.class_id >= self.classes.len() {
                return Err(DataError::ManifestInvalid(format!(
                    "class_id {} out of range for {} classes",
                    e.class_id,
                    self.classes.len()
                )));
            }
            if self.classes[e.class_id] != e.class_name {
                return Err(DataError::ManifestInvalid(format!(
                    "entry class_name {:?} disagrees with vocabulary slot {}",
                    e.class_name, e.class_id
                )));
            }
        }
        let mut seen = vec![false; self.classes.len()];
        for e in &self.entries {
            seen[e.class_id] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(DataError::ManifestInvalid("vocabulary class with no entries".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pixel normalization
// ---------------------------------------------------------------------------

/// `u8` pixel to `[-1, 1]`.
#[inline]
pub fn normalize_px(p: u8) -> F {
    p as F / 255.0 * 2.0 - 1.0
}

/// `[-1, 1]` back to `u8`. Rounds half away from zero, so 0.0 maps to 128.
#[inline]
pub fn denormalize_px(v: F) -> u8 {
    (((v + 1.0) / 2.0) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Map a whole `[-1,1]` tensor to 8-bit pixels.
pub fn denormalize(frames: &ArrayD<F>) -> Vec<u8> {
    frames.iter().map(|v| denormalize_px(*v)).collect()
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Rigid-motion program; one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionProgram {
    TranslateRight,
    TranslateUp,
    Diagonal,
    Grow,
    Shrink,
    OscillateHorizontal,
    RotateAroundCenter,
    WaveArm,
}

impl MotionProgram {
    pub const ALL: [MotionProgram; 8] = [
        MotionProgram::TranslateRight,
        MotionProgram::TranslateUp,
        MotionProgram::Diagonal,
        MotionProgram::Grow,
        MotionProgram::Shrink,
        MotionProgram::OscillateHorizontal,
        MotionProgram::RotateAroundCenter,
        MotionProgram::WaveArm,
    ];

    /// Word-like class name, friendly to word-vector lookups.
    pub fn class_name(&self) -> &'static str {
        match self {
            MotionProgram::TranslateRight => "slide right",
            MotionProgram::TranslateUp => "slide up",
            MotionProgram::Diagonal => "slide diagonal",
            MotionProgram::Grow => "grow",
            MotionProgram::Shrink => "shrink",
            MotionProgram::OscillateHorizontal => "sway sideways",
            MotionProgram::RotateAroundCenter => "orbit center",
            MotionProgram::WaveArm => "wave arm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 8,
            videos_per_class: 50,
            frames_per_video: 32,
            frame_size: 56,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes == 0 || self.videos_per_class == 0 || self.frames_per_video == 0 {
            return Err(DataError::SpecInvalid("counts must be positive".into()));
        }
        if self.frame_size < 16 {
            return Err(DataError::SpecInvalid("frame_size must be at least 16".into()));
        }
        Ok(())
    }

    pub fn program_for_class(&self, class_id: usize) -> MotionProgram {
        MotionProgram::ALL[class_id % MotionProgram::ALL.len()]
    }
}

/// Pose of the rendered shape at one instant.
#[derive(Debug, Clone, Copy)]
struct Pose {
    cx: f64,
    cy: f64,
    radius: f64,
    angle: f64,
    /// Waving-limb angle relative to vertical, when the program has a limb.
    arm_angle: Option<f64>,
}

/// Static per-video draw parameters, sampled once from the video seed.
#[derive(Debug, Clone, Copy)]
struct VideoStyle {
    shape: ShapeKind,
    color: [u8; 3],
    base: Pose,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over a composite key
    let mut z = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn sample_style(rng: &mut ChaCha8Rng, size: f64, program: MotionProgram) -> VideoStyle {
    let shape = match rng.gen_range(0..3) {
        0 => ShapeKind::Square,
        1 => ShapeKind::Circle,
        _ => ShapeKind::Triangle,
    };
    let color = [
        rng.gen_range(120..=255) as u8,
        rng.gen_range(120..=255) as u8,
        rng.gen_range(120..=255) as u8,
    ];
    let radius = size * rng.gen_range(0.10..0.16);
    // Start away from the travel direction so motion stays in frame.
    let m = radius + size * 0.06;
    let span = |lo: f64, hi: f64, r: &mut ChaCha8Rng| r.gen_range(lo..hi);
    let (cx, cy) = match program {
        MotionProgram::TranslateRight => (span(m, m + size * 0.15, rng), span(m, size - m, rng)),
        MotionProgram::TranslateUp => (span(m, size - m, rng), span(size - m - size * 0.15, size - m, rng)),
        MotionProgram::Diagonal => (span(m, m + size * 0.12, rng), span(size - m - size * 0.12, size - m, rng)),
        MotionProgram::OscillateHorizontal => (size * 0.5 + span(-size * 0.05, size * 0.05, rng), span(m, size - m, rng)),
        MotionProgram::RotateAroundCenter => (size * 0.5, size * 0.5),
        _ => (span(m + size * 0.08, size - m - size * 0.08, rng), span(m + size * 0.08, size - m - size * 0.08, rng)),
    };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    VideoStyle {
        shape,
        color,
        base: Pose { cx, cy, radius, angle, arm_angle: None },
    }
}

/// Pose at normalized time `t01` in `[0, 1)`.
fn pose_at(program: MotionProgram, style: &VideoStyle, size: f64, t01: f64) -> Pose {
    use std::f64::consts::TAU;
    let mut p = style.base;
    let travel = size * 0.45;
    match program {
        MotionProgram::TranslateRight => p.cx += travel * t01,
        MotionProgram::TranslateUp => p.cy -= travel * t01,
        MotionProgram::Diagonal => {
            p.cx += travel * 0.8 * t01;
            p.cy -= travel * 0.8 * t01;
        }
        MotionProgram::Grow => p.radius *= 0.7 + 0.9 * t01,
        MotionProgram::Shrink => p.radius *= 1.6 - 0.9 * t01,
        MotionProgram::OscillateHorizontal => p.cx += size * 0.22 * (TAU * 2.0 * t01).sin(),
        MotionProgram::RotateAroundCenter => {
            let orbit = size * 0.26;
            let theta = style.base.angle + TAU * t01;
            p.cx = size * 0.5 + orbit * theta.cos();
            p.cy = size * 0.5 + orbit * theta.sin();
        }
        MotionProgram::WaveArm => {
            p.arm_angle = Some(0.9 * (TAU * 2.0 * t01).sin());
        }
    }
    p
}

fn point_in_shape(shape: ShapeKind, pose: &Pose, x: f64, y: f64) -> bool {
    // into shape frame
    let (dx, dy) = (x - pose.cx, y - pose.cy);
    let (s, c) = pose.angle.sin_cos();
    let (ux, uy) = (c * dx + s * dy, -s * dx + c * dy);
    let (nx, ny) = (ux / pose.radius, uy / pose.radius);
    let inside_main = match shape {
        ShapeKind::Square => nx.abs() <= 1.0 && ny.abs() <= 1.0,
        ShapeKind::Circle => nx * nx + ny * ny <= 1.0,
        ShapeKind::Triangle => {
            // upright triangle with apex at (0,-1)
            ny <= 1.0 && ny >= -1.0 && nx.abs() <= (ny + 1.0) / 2.0 * 0.9
        }
    };
    if inside_main {
        return true;
    }
    if let Some(arm) = pose.arm_angle {
        // limb anchored at the shape's top edge, swinging around the anchor
        let (ax, ay) = (pose.cx, pose.cy - pose.radius);
        let (dx, dy) = (x - ax, y - ay);
        let (s, c) = arm.sin_cos();
        let (ux, uy) = (c * dx + s * dy, -s * dx + c * dy);
        let len = pose.radius * 1.6;
        let half_w = pose.radius * 0.28;
        return uy <= 0.0 && uy >= -len && ux.abs() <= half_w;
    }
    false
}

/// Render one frame with 2x2 supersampling.
fn render_frame(shape: ShapeKind, color: [u8; 3], pose: &Pose, size: usize) -> RgbImage {
    let mut img = RgbImage::new(size as u32, size as u32);
    for py in 0..size {
        for px in 0..size {
            let mut hits = 0u32;
            for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                if point_in_shape(shape, pose, px as f64 + ox, py as f64 + oy) {
                    hits += 1;
                }
            }
            if hits > 0 {
                let a = hits as f64 / 4.0;
                let p = img.get_pixel_mut(px as u32, py as u32);
                for ch in 0..3 {
                    p.0[ch] = (color[ch] as f64 * a).round() as u8;
                }
            }
        }
    }
    img
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect()
}

/// Write a full synthetic dataset under `out_dir` and return its manifest.
/// Identical specs produce byte-identical trees.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| DataError::Io { path: out_dir.to_path_buf(), source })?;

    let classes: Vec<String> = (0..spec.num_classes)
        .map(|c| spec.program_for_class(c).class_name().to_string())
        .collect();
    let mut entries = Vec::with_capacity(spec.num_classes * spec.videos_per_class);

    for class_id in 0..spec.num_classes {
        let program = spec.program_for_class(class_id);
        let class_dir_name = format!("{:02}_{}", class_id, sanitize(&classes[class_id]));
        for vid in 0..spec.videos_per_class {
            let video_dir_rel = format!("{class_dir_name}/vid_{vid:04}");
            let video_dir = out_dir.join(&video_dir_rel);
            fs::create_dir_all(&video_dir).map_err(|source| DataError::Io { path: video_dir.clone(), source })?;

            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, class_id as u64, vid as u64));
            let style = sample_style(&mut rng, spec.frame_size as f64, program);

            for f in 0..spec.frames_per_video {
                let t01 = f as f64 / spec.frames_per_video as f64;
                let pose = pose_at(program, &style, spec.frame_size as f64, t01);
                let img = render_frame(style.shape, style.color, &pose, spec.frame_size);
                let path = video_dir.join(format!("{f:05}.png"));
                img.save(&path).map_err(|source| DataError::Image { path, source })?;
            }
            entries.push(ManifestEntry {
                video_dir: video_dir_rel,
                class_name: classes[class_id].clone(),
                class_id,
                num_frames: spec.frames_per_video,
                frame_size: spec.frame_size,
            });
        }
    }

    let manifest = DatasetManifest {
        schema: MANIFEST_SCHEMA,
        classes,
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Clip loading
// ---------------------------------------------------------------------------

/// Reads clips out of a manifest tree, resizing frames to `target_size` and
/// caching decoded videos in memory. Safe for concurrent read-only use.
pub struct ClipLoader {
    pub manifest: DatasetManifest,
    pub target_size: usize,
    cache: Mutex<HashMap<usize, Arc<Vec<u8>>>>,
}

impl ClipLoader {
    pub fn new(manifest: DatasetManifest, target_size: usize) -> Self {
        ClipLoader { manifest, target_size, cache: Mutex::new(HashMap::new()) }
    }

    pub fn num_entries(&self) -> usize {
        self.manifest.entries.len()
    }

    /// Decoded RGB bytes of every frame of one video, `[num_frames * S * S * 3]`.
    fn video_bytes(&self, index: usize) -> Result<Arc<Vec<u8>>, DataError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&index) {
            return Ok(hit.clone());
        }
        let entry = &self.manifest.entries[index];
        let dir = self.manifest.root.join(&entry.video_dir);
        let s = self.target_size;
        let mut bytes = Vec::with_capacity(entry.num_frames * s * s * 3);
        for f in 0..entry.num_frames {
            let path = dir.join(format!("{f:05}.png"));
            let img = ImageReader::open(&path)
                .map_err(|_| DataError::MissingFrame { path: path.clone() })?
                .decode()
                .map_err(|source| DataError::Image { path: path.clone(), source })?
                .into_rgb8();
            let img = if img.width() as usize != s || img.height() as usize != s {
                imageops::resize(&img, s as u32, s as u32, imageops::FilterType::Triangle)
            } else {
                img
            };
            bytes.extend_from_slice(img.as_raw());
        }
        let arc = Arc::new(bytes);
        self.cache.lock().unwrap().insert(index, arc.clone());
        Ok(arc)
    }

    /// Sample a contiguous clip with a uniformly random valid start.
    pub fn load_clip(
        &self,
        entry_index: usize,
        clip_len: usize,
        rng: &mut impl Rng,
    ) -> Result<(VideoClip, PositionEncoding), DataError> {
        let n = self.manifest.entries.len();
        if entry_index >= n {
            return Err(DataError::EntryOutOfRange { index: entry_index, len: n });
        }
        let num_frames = self.manifest.entries[entry_index].num_frames;
        if clip_len > num_frames {
            return Err(DataError::ClipTooLong { clip_len, num_frames });
        }
        let start = rng.gen_range(0..=num_frames - clip_len);
        self.load_clip_at(entry_index, clip_len, start)
    }

    /// Deterministic variant with an explicit start frame.
    pub fn load_clip_at(
        &self,
        entry_index: usize,
        clip_len: usize,
        start: usize,
    ) -> Result<(VideoClip, PositionEncoding), DataError> {
        let n = self.manifest.entries.len();
        if entry_index >= n {
            return Err(DataError::EntryOutOfRange { index: entry_index, len: n });
        }
        let entry = self.manifest.entries[entry_index].clone();
        if clip_len > entry.num_frames {
            return Err(DataError::ClipTooLong { clip_len, num_frames: entry.num_frames });
        }
        assert!(start + clip_len <= entry.num_frames, "start beyond valid range");
        let bytes = self.video_bytes(entry_index)?;
        let s = self.target_size;
        let frame_len = s * s * 3;
        let mut data = Vec::with_capacity(clip_len * frame_len);
        data.extend(
            bytes[start * frame_len..(start + clip_len) * frame_len]
                .iter()
                .map(|&p| normalize_px(p)),
        );
        let frames = ArrayD::from_shape_vec(IxDyn(&[clip_len, s, s, 3]), data).unwrap();
        let pe = compute_position_encoding(start, entry.num_frames)?;
        Ok((
            VideoClip {
                frames,
                start_frame: start,
                total_frames: entry.num_frames,
                class_id: entry.class_id,
                class_name: entry.class_name,
            },
            pe,
        ))
    }
}

/// Deterministic train/eval split: every `holdout_every`-th entry (per the
/// global entry order) is held out for evaluation.
pub fn is_holdout(entry_index: usize, holdout_every: usize) -> bool {
    holdout_every > 0 && entry_index % holdout_every == holdout_every - 1
}

/// Write a `[T,H,W,C]` clip in `[-1,1]` as numbered PNG frames.
pub fn write_clip_frames(frames: &ArrayD<F>, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io { path: dir.to_path_buf(), source })?;
    let s = frames.shape();
    assert_eq!(s.len(), 4, "expected [T,H,W,C]");
    assert_eq!(s[3], 3, "expected RGB");
    let bytes = denormalize(frames);
    let frame_len = s[1] * s[2] * 3;
    for t in 0..s[0] {
        let buf = bytes[t * frame_len..(t + 1) * frame_len].to_vec();
        let img: RgbImage = RgbImage::from_raw(s[2] as u32, s[1] as u32, buf).expect("buffer size");
        let path = dir.join(format!("{t:05}.png"));
        img.save(&path).map_err(|source| DataError::Image { path, source })?;
    }
    Ok(())
}

/// Tile a clip horizontally into a preview strip image.
pub fn preview_strip(frames: &ArrayD<F>) -> RgbImage {
    let s = frames.shape();
    let (t, h, w) = (s[0], s[1], s[2]);
    let bytes = denormalize(frames);
    let mut strip = RgbImage::new((t * w) as u32, h as u32);
    for ti in 0..t {
        for y in 0..h {
            for x in 0..w {
                let base = ((ti * h + y) * w + x) * 3;
                strip.put_pixel(
                    (ti * w + x) as u32,
                    y as u32,
                    image::Rgb([bytes[base], bytes[base + 1], bytes[base + 2]]),
                );
            }
        }
    }
    strip
}

/// Load one RGB image as a normalized `[1, S, S, 3]` tensor, resizing to `size`.
pub fn load_actor_image(path: &Path, size: usize) -> Result<ArrayD<F>, DataError> {
    let img = ImageReader::open(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?
        .decode()
        .map_err(|source| DataError::Image { path: path.to_path_buf(), source })?
        .into_rgb8();
    let img = if img.width() as usize != size || img.height() as usize != size {
        imageops::resize(&img, size as u32, size as u32, imageops::FilterType::Triangle)
    } else {
        img
    };
    let data: Vec<F> = img.as_raw().iter().map(|&p| normalize_px(p)).collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&[1, size, size, 3]), data).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_encoding_matches_ratio() {
        assert_eq!(compute_position_encoding(0, 100).unwrap().value, 0.0);
        assert_eq!(compute_position_encoding(25, 100).unwrap().value, 0.25);
        assert_eq!(compute_position_encoding(84, 112).unwrap().value, 0.75);
    }

    #[test]
    fn position_encoding_rejects_bad_ranges() {
        assert!(compute_position_encoding(0, 0).is_err());
        assert!(compute_position_encoding(10, 10).is_err());
        assert!(compute_position_encoding(11, 10).is_err());
    }

    #[test]
    fn normalization_round_trip_is_exact_per_byte() {
        for p in 0..=255u8 {
            assert_eq!(denormalize_px(normalize_px(p)), p, "pixel {p}");
        }
        assert_eq!(denormalize_px(-1.0), 0);
        assert_eq!(denormalize_px(1.0), 255);
        // documented midpoint rule: rounds up
        assert_eq!(denormalize_px(0.0), 128);
    }
}
