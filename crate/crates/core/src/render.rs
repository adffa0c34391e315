//! Top-down rasterizer for the track world, plus lossless PNG storage.
//!
//! The camera looks straight down and rotates with the car, so "forward"
//! is always up in the image. Pixels are point-sampled at their centers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ActionCategory, Curve, EgoState, Pose, Track};

const META_KEY: &str = "xdrive-meta";

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("frame format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: String,
    pub sim_time: f64,
    pub action_category: Option<ActionCategory>,
}

/// Row-major 8-bit raster. Intensities are `level / 255`, so they are
/// always in `[0, 1]` and survive PNG storage exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::InvalidConfig(format!("{width}x{height} frame")));
        }
        if channels != 1 && channels != 3 {
            return Err(RenderError::InvalidConfig(format!("{channels} channels")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
            meta: FrameMeta::default(),
        })
    }

    pub fn from_levels(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, RenderError> {
        let mut f = Self::new(width, height, channels)?;
        if data.len() != f.data.len() {
            return Err(RenderError::Format(format!(
                "expected {} samples, got {}",
                f.data.len(),
                data.len()
            )));
        }
        f.data = data;
        Ok(f)
    }

    pub fn intensity(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c] as f32 / 255.0
    }

    /// All samples as `[0, 1]` floats, row-major, channels interleaved.
    pub fn intensities(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32 / 255.0).collect()
    }

    /// Samples laid out channel-first (`[C, H, W]`), as the image encoder expects.
    pub fn planar(&self) -> Vec<f32> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut out = vec![0.0; w * h * c];
        for (i, &v) in self.data.iter().enumerate() {
            let (px, ch) = (i / c, i % c);
            out[ch * w * h + px] = v as f32 / 255.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    /// Car at the image center.
    Centered,
    /// Car near the bottom edge, most of the view ahead of it.
    Chase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub ground: [u8; 3],
    pub road: [u8; 3],
    pub marking: [u8; 3],
    pub obstacle: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            ground: [60, 110, 60],
            road: [90, 90, 96],
            marking: [240, 240, 240],
            obstacle: [170, 70, 50],
        }
    }
}

impl Palette {
    pub fn gray(rgb: [u8; 3]) -> u8 {
        // integer Rec. 601 luma
        ((299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32 + 500) / 1000) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub meters_per_pixel: f64,
    pub view: View,
    pub palette: Palette,
    pub dash_length: f64,
    pub dash_period: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RenderConfig {
    /// 64×64 grayscale, 48 m across.
    pub fn desk() -> Self {
        Self {
            width: 64,
            height: 64,
            channels: 1,
            meters_per_pixel: 0.75,
            view: View::Chase,
            palette: Palette::default(),
            dash_length: 3.0,
            dash_period: 6.0,
        }
    }

    /// 640×480 RGB covering the same ground width as the desk profile.
    pub fn paper_scale() -> Self {
        Self {
            width: 640,
            height: 480,
            channels: 3,
            meters_per_pixel: 0.075,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidConfig(format!(
                "{}x{} output",
                self.width, self.height
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(RenderError::InvalidConfig(format!("{} channels", self.channels)));
        }
        if !(self.meters_per_pixel > 0.0 && self.meters_per_pixel.is_finite()) {
            return Err(RenderError::InvalidConfig("meters_per_pixel must be > 0".into()));
        }
        if !(self.dash_period > 0.0) {
            return Err(RenderError::InvalidConfig("dash_period must be > 0".into()));
        }
        Ok(())
    }

    /// Image row of the car's reference point (fractional).
    fn anchor_row(&self) -> f64 {
        match self.view {
            View::Centered => self.height as f64 / 2.0,
            View::Chase => self.height as f64 * 0.8,
        }
    }

    /// World position of the center of pixel `(col, row)` for a car at `pose`.
    pub fn pixel_to_world(&self, pose: &Pose, col: usize, row: usize) -> (f64, f64) {
        let fwd = (self.anchor_row() - (row as f64 + 0.5)) * self.meters_per_pixel;
        let left = (self.width as f64 / 2.0 - (col as f64 + 0.5)) * self.meters_per_pixel;
        let (c, s) = pose.tangent();
        (pose.x + fwd * c - left * s, pose.y + fwd * s + left * c)
    }
}

fn curve_bounds(curve: &Curve, pad: f64) -> [f64; 4] {
    let n = (curve.length().ceil() as usize).max(1);
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for i in 0..=n {
        let p = curve.pose_at(curve.length() * i as f64 / n as f64);
        b = [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)];
    }
    // chords of a 1 m sampled arc stay well within 1 m of the arc
    [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad]
}

/// Render the scene around `state`. Pure: the same inputs always produce
/// the same pixels.
pub fn render_frame(track: &Track, state: &EgoState, cfg: &RenderConfig) -> Result<Frame, RenderError> {
    cfg.validate()?;
    let pose = state.pose;
    let mut frame = Frame::new(cfg.width, cfg.height, cfg.channels)?;

    // Cull edges whose padded bounds miss the viewport.
    let corners = [
        (0, 0),
        (cfg.width - 1, 0),
        (0, cfg.height - 1),
        (cfg.width - 1, cfg.height - 1),
    ]
    .map(|(c, r)| cfg.pixel_to_world(&pose, c, r));
    let view = corners.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, &(x, y)| [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)],
    );
    let half = track.lane_width() / 2.0;
    let curves: Vec<Curve> = track
        .edges
        .iter()
        .map(|e| e.curve)
        .filter(|c| {
            let b = curve_bounds(c, half + 2.0 * cfg.meters_per_pixel + 1.0);
            b[0] <= view[2] && b[2] >= view[0] && b[1] <= view[3] && b[3] >= view[1]
        })
        .collect();
    let obstacles: Vec<_> = track
        .obstacles()
        .iter()
        .filter(|r| r.min[0] <= view[2] && r.max[0] >= view[0] && r.min[1] <= view[3] && r.max[1] >= view[1])
        .collect();

    let line = (0.3f64).max(cfg.meters_per_pixel);
    let edge_inner = half - 0.2 - line;
    let center_half = line / 2.0;
    let pal = cfg.palette;
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let (x, y) = cfg.pixel_to_world(&pose, col, row);
            let rgb = if obstacles.iter().any(|r| r.contains(x, y)) {
                pal.obstacle
            } else {
                let mut nearest: Option<(f64, f64, f64)> = None;
                for c in &curves {
                    let p = c.project(x, y);
                    if nearest.is_none_or(|n| p.distance < n.0) {
                        nearest = Some((p.distance, p.lateral, p.s));
                    }
                }
                match nearest {
                    Some((dist, lat, s)) if dist <= half => {
                        let edge_line = dist > edge_inner && dist <= half - 0.2;
                        let dash = lat.abs() <= center_half && s.rem_euclid(cfg.dash_period) < cfg.dash_length;
                        if edge_line || dash {
                            pal.marking
                        } else {
                            pal.road
                        }
                    }
                    _ => pal.ground,
                }
            };
            let i = (row * cfg.width + col) * cfg.channels;
            if cfg.channels == 1 {
                frame.data[i] = Palette::gray(rgb);
            } else {
                frame.data[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }
    Ok(frame)
}

/// Store a frame as an 8-bit PNG; the metadata rides in a text chunk.
pub fn write_frame(frame: &Frame, path: &Path) -> Result<(), RenderError> {
    let mut file = BufWriter::new(File::create(path)?);
    encode_png(frame, &mut file)?;
    file.flush()?;
    Ok(())
}

/// The bytes [`write_frame`] would store.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    encode_png(frame, &mut out)?;
    Ok(out)
}

fn encode_png<W: Write>(frame: &Frame, w: W) -> Result<(), RenderError> {
    let mut enc = png::Encoder::new(w, frame.width as u32, frame.height as u32);
    enc.set_color(if frame.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    enc.set_depth(png::BitDepth::Eight);
    let meta = serde_json::to_string(&frame.meta).map_err(|e| RenderError::Format(e.to_string()))?;
    enc.add_text_chunk(META_KEY.to_string(), meta)
        .map_err(|e| RenderError::Format(e.to_string()))?;
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&frame.data).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(())
}

fn png_err(e: impl std::fmt::Display) -> RenderError {
    RenderError::Format(e.to_string())
}

pub fn read_frame(path: &Path) -> Result<Frame, RenderError> {
    let file = BufReader::new(File::open(path)?);
    decode_png(file)
}

/// Decode PNG bytes produced by [`write_frame`].
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, RenderError> {
    decode_png(std::io::Cursor::new(bytes))
}

fn decode_png<R: std::io::BufRead + std::io::Seek>(r: R) -> Result<Frame, RenderError> {
    let mut reader = png::Decoder::new(r).read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(RenderError::Format(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(RenderError::Format(format!("unsupported color type {other:?}"))),
    };
    buf.truncate(info.buffer_size());
    // text chunks after the image data are only seen once the stream is finished
    reader.finish().map_err(png_err)?;
    let meta = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == META_KEY)
        .map(|t| serde_json::from_str(&t.text).map_err(|e| RenderError::Format(e.to_string())))
        .transpose()?
        .unwrap_or_default();
    let mut frame = Frame::from_levels(info.width as usize, info.height as usize, channels, buf)?;
    frame.meta = meta;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sized_output_rejected() {
        let track = crate::sim::TrackSpec::builtin("straight").unwrap().build().unwrap();
        let env_state = crate::sim::Env::builtin("straight", 15, Default::default()).unwrap().reset();
        let cfg = RenderConfig {
            width: 0,
            ..RenderConfig::desk()
        };
        assert!(matches!(
            render_frame(&track, &env_state, &cfg),
            Err(RenderError::InvalidConfig(_))
        ));
    }

    #[test]
    fn forward_is_up() {
        let cfg = RenderConfig::desk();
        let pose = Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let (x, y) = cfg.pixel_to_world(&pose, 32, 0);
        // top row: (0.8 * 64 - 0.5) pixels ahead of the car
        assert!(x.abs() < 1.0 && (y - 50.7 * 0.75).abs() < 1e-9, "({x}, {y})");
        let (x, _) = cfg.pixel_to_world(&pose, 0, 51);
        assert!(x < -20.0, "left of the car is -x when heading north");
    }

    #[test]
    fn planar_layout() {
        let f = Frame::from_levels(2, 1, 3, vec![0, 51, 102, 153, 204, 255]).unwrap();
        let p = f.planar();
        assert_eq!(p, vec![0.0, 0.6, 0.2, 0.8, 0.4, 1.0]);
    }
}
