//! Multi-channel binary segmentation masks.
//!
//! One bit plane per class; planes are independent, so a pixel may be set
//! in any subset of channels. The in-memory layout is the serialized
//! layout: channel-major planes, row-major within a plane, rows padded to
//! whole bytes, most significant bit first.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::{point_segment_distance, Geometry, Point, Polygon};
use crate::ingest::PatchObjects;

pub const MAGIC: &[u8; 4] = b"MCM1";
const HEADER_LEN: usize = 16;

/// Default buffer width for line and point features, in meters.
pub const DEFAULT_LINE_BUFFER_M: f64 = 4.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("bad magic, expected MCM1")]
    BadMagic,
    #[error("stream truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("mask dimensions {width}x{height}x{channels} overflow")]
    DimsOverflow { width: u32, height: u32, channels: u32 },
    #[error("cannot pool {height}x{width} into {out_h}x{out_w} blocks")]
    NotDivisible {
        height: u32,
        width: u32,
        out_h: u32,
        out_w: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiChannelMask {
    width: u32,
    height: u32,
    channels: u32,
    stride: usize,
    bits: Vec<u8>,
}

impl MultiChannelMask {
    pub fn new(width: u32, height: u32, channels: u32) -> Self {
        let stride = (width as usize).div_ceil(8);
        MultiChannelMask {
            width,
            height,
            channels,
            stride,
            bits: vec![0; stride * height as usize * channels as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    fn plane_len(&self) -> usize {
        self.stride * self.height as usize
    }

    #[inline]
    fn locate(&self, channel: u32, row: u32, col: u32) -> (usize, u8) {
        debug_assert!(channel < self.channels && row < self.height && col < self.width);
        let byte = channel as usize * self.plane_len() + row as usize * self.stride + col as usize / 8;
        (byte, 0x80u8 >> (col % 8))
    }

    pub fn get(&self, channel: u32, row: u32, col: u32) -> bool {
        let (byte, bit) = self.locate(channel, row, col);
        self.bits[byte] & bit != 0
    }

    pub fn set(&mut self, channel: u32, row: u32, col: u32, value: bool) {
        let (byte, bit) = self.locate(channel, row, col);
        if value {
            self.bits[byte] |= bit;
        } else {
            self.bits[byte] &= !bit;
        }
    }

    /// Raw packed bytes of one channel plane.
    pub fn plane(&self, channel: u32) -> &[u8] {
        let n = self.plane_len();
        &self.bits[channel as usize * n..(channel as usize + 1) * n]
    }

    pub fn count_ones(&self, channel: u32) -> u64 {
        // Row padding bits are never set.
        self.plane(channel).iter().map(|b| b.count_ones() as u64).sum()
    }

    /// Fills columns `[c0, c1)` of one row.
    fn fill_span(&mut self, channel: u32, row: u32, c0: u32, c1: u32) {
        for col in c0..c1 {
            self.set(channel, row, col, true);
        }
    }
}

/// Rasterizes a patch: one channel per class, `channels` planes of
/// `px × px` pixels. Polygons are filled even-odd at pixel centers; lines
/// and points mark pixels whose center lies within `line_buffer_m / 2`.
///
/// A center exactly on a polygon edge is inside only for the edge's
/// bottom/left side (half-open spans), so abutting polygons neither gap
/// nor overlap.
pub fn rasterize(patch: &PatchObjects, channels: u32, line_buffer_m: f64) -> MultiChannelMask {
    let px = patch.spec.px;
    let res = patch.spec.resolution_m_per_px;
    let mut mask = MultiChannelMask::new(px, px, channels);
    for obj in &patch.objects {
        let channel = obj.class_id.0 as u32;
        if channel >= channels {
            continue;
        }
        match &obj.geometry {
            Geometry::Point(p) => mark_disc(&mut mask, channel, *p, line_buffer_m / 2.0, res),
            Geometry::LineString(_) | Geometry::MultiLineString(_) => {
                for (a, b) in obj.geometry.segments() {
                    mark_capsule(&mut mask, channel, a, b, line_buffer_m / 2.0, res);
                }
            }
            Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
                for poly in obj.geometry.polygons() {
                    fill_polygon(&mut mask, channel, poly, res);
                }
            }
        }
    }
    mask
}

fn fill_polygon(mask: &mut MultiChannelMask, channel: u32, poly: &Polygon, res: f64) {
    let edges: Vec<(Point, Point)> = poly
        .rings()
        .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
        .filter(|(a, b)| a.y != b.y)
        .collect();
    if edges.is_empty() {
        return;
    }
    let (lo, hi) = edges
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a.y).min(b.y), hi.max(a.y).max(b.y))
        });
    let height = mask.height();
    let width = mask.width() as f64;
    // Rows whose center yc satisfies lo < yc <= hi.
    let r0 = ((lo / res - 0.5).floor().max(-1.0) + 1.0) as u32;
    let r1 = ((hi / res - 0.5).floor() + 1.0).clamp(0.0, height as f64) as u32;
    let mut xs = Vec::new();
    for row in r0.min(height)..r1 {
        let yc = (row as f64 + 0.5) * res;
        xs.clear();
        for &(a, b) in &edges {
            let (top, bottom) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
            if top < yc && yc <= bottom {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // Columns whose center xc satisfies x0 <= xc < x1.
            let c0 = (span[0] / res - 0.5).ceil().clamp(0.0, width) as u32;
            let c1 = (span[1] / res - 0.5).ceil().clamp(0.0, width) as u32;
            mask.fill_span(channel, row, c0, c1);
        }
    }
}

fn pixel_window(lo: f64, hi: f64, res: f64, n: u32) -> std::ops::Range<u32> {
    let a = (lo / res - 0.5).floor().clamp(0.0, n as f64) as u32;
    let b = ((hi / res - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as u32;
    a..b
}

fn mark_capsule(mask: &mut MultiChannelMask, channel: u32, a: Point, b: Point, radius: f64, res: f64) {
    let rows = pixel_window(a.y.min(b.y) - radius, a.y.max(b.y) + radius, res, mask.height());
    let cols = pixel_window(a.x.min(b.x) - radius, a.x.max(b.x) + radius, res, mask.width());
    for row in rows {
        let yc = (row as f64 + 0.5) * res;
        for col in cols.clone() {
            let xc = (col as f64 + 0.5) * res;
            if point_segment_distance(Point::new(xc, yc), a, b) <= radius {
                mask.set(channel, row, col, true);
            }
        }
    }
}

fn mark_disc(mask: &mut MultiChannelMask, channel: u32, p: Point, radius: f64, res: f64) {
    mark_capsule(mask, channel, p, p, radius, res);
}

/// Serializes to the MCM1 format.
pub fn write_mask(mask: &MultiChannelMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.bits.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&mask.width.to_le_bytes());
    out.extend_from_slice(&mask.height.to_le_bytes());
    out.extend_from_slice(&mask.channels.to_le_bytes());
    out.extend_from_slice(&mask.bits);
    out
}

pub fn read_mask(bytes: &[u8]) -> Result<MultiChannelMask, MaskError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(MaskError::BadMagic);
        }
        return Err(MaskError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(MaskError::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (width, height, channels) = (word(4), word(8), word(12));
    let stride = (width as usize).div_ceil(8);
    let body = stride
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(MaskError::DimsOverflow {
            width,
            height,
            channels,
        })?;
    if bytes.len() < body {
        return Err(MaskError::Truncated {
            needed: body,
            have: bytes.len(),
        });
    }
    let mut bits = bytes[HEADER_LEN..body].to_vec();
    // Clear any stray padding bits so equality is structural.
    let pad = (stride * 8 - width as usize) as u32;
    if pad > 0 {
        let keep = 0xffu8 << pad;
        for row in bits.chunks_exact_mut(stride) {
            *row.last_mut().unwrap() &= keep;
        }
    }
    Ok(MultiChannelMask {
        width,
        height,
        channels,
        stride,
        bits,
    })
}

/// Plain-text (P2) PGM export of one channel, set pixels at 255.
pub fn write_pgm(mask: &MultiChannelMask, channel: u32) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "P2\n{} {}\n255", mask.width, mask.height);
    for row in 0..mask.height {
        let line: Vec<&str> = (0..mask.width)
            .map(|col| if mask.get(channel, row, col) { "255" } else { "0" })
            .collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Per-channel real-valued grid, `channels × height × width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ChannelGrid {
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let n = self.height * self.width;
        self.data[c * n..(c + 1) * n].iter().sum::<f64>() / n as f64
    }
}

/// Block-average pooling: each output cell is the fraction of set bits in
/// its block.
pub fn downsample_mask(mask: &MultiChannelMask, out_h: u32, out_w: u32) -> Result<ChannelGrid, MaskError> {
    let err = MaskError::NotDivisible {
        height: mask.height,
        width: mask.width,
        out_h,
        out_w,
    };
    if out_h == 0 || out_w == 0 || !mask.height.is_multiple_of(out_h) || !mask.width.is_multiple_of(out_w) {
        return Err(err);
    }
    let bh = mask.height / out_h;
    let bw = mask.width / out_w;
    let (oh, ow) = (out_h as usize, out_w as usize);
    let mut counts = vec![0u64; mask.channels as usize * oh * ow];
    for c in 0..mask.channels {
        for row in 0..mask.height {
            let base = (c as usize * oh + (row / bh) as usize) * ow;
            for col in 0..mask.width {
                if mask.get(c, row, col) {
                    counts[base + (col / bw) as usize] += 1;
                }
            }
        }
    }
    let block = (bh as u64 * bw as u64) as f64;
    Ok(ChannelGrid {
        channels: mask.channels as usize,
        height: oh,
        width: ow,
        data: counts.into_iter().map(|n| n as f64 / block).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::ingest::{GeoObject, PatchSpec};
    use crate::taxonomy::ClassId;

    fn patch(objects: Vec<GeoObject>) -> PatchObjects {
        PatchObjects {
            spec: PatchSpec {
                patch_id: "p".into(),
                row: 0,
                col: 0,
                origin: Point::new(0.0, 200.0),
                side_m: 200.0,
                px: 1000,
                resolution_m_per_px: 0.2,
            },
            objects,
        }
    }

    fn object(class: u8, geometry: Geometry) -> GeoObject {
        GeoObject {
            id: format!("o{class}"),
            class_id: ClassId(class),
            geometry,
            name: None,
        }
    }

    #[test]
    fn axis_aligned_square_fill() {
        let p = patch(vec![object(
            3,
            Geometry::Polygon(Polygon::rect(Rect::new(0.0, 0.0, 20.0, 20.0))),
        )]);
        let m = rasterize(&p, 16, DEFAULT_LINE_BUFFER_M);
        assert_eq!(m.count_ones(3), 100 * 100);
        for (r, c) in [(0, 0), (99, 99), (0, 99), (99, 0)] {
            assert!(m.get(3, r, c));
        }
        assert!(!m.get(3, 100, 0) && !m.get(3, 0, 100));
        for ch in (0..16).filter(|&c| c != 3) {
            assert_eq!(m.count_ones(ch), 0);
        }
    }

    #[test]
    fn empty_patch_is_all_zero() {
        let m = rasterize(&patch(vec![]), 16, DEFAULT_LINE_BUFFER_M);
        assert_eq!(m, MultiChannelMask::new(1000, 1000, 16));
    }

    #[test]
    fn abutting_squares_share_no_pixels() {
        // Shared edge at x = 10.1 m, exactly on a column of pixel centers.
        let a = Polygon::rect(Rect::new(0.0, 0.0, 10.1, 10.0));
        let b = Polygon::rect(Rect::new(10.1, 0.0, 20.0, 10.0));
        let mut ma = rasterize(&patch(vec![object(0, Geometry::Polygon(a))]), 1, 4.0);
        let mb = rasterize(&patch(vec![object(0, Geometry::Polygon(b))]), 1, 4.0);
        let both = rasterize(
            &patch(vec![object(
                0,
                Geometry::Polygon(Polygon::rect(Rect::new(0.0, 0.0, 20.0, 10.0))),
            )]),
            1,
            4.0,
        );
        assert_eq!(ma.count_ones(0) + mb.count_ones(0), both.count_ones(0));
        for r in 0..1000 {
            for c in 0..1000 {
                if mb.get(0, r, c) {
                    assert!(!ma.get(0, r, c));
                    ma.set(0, r, c, true);
                }
            }
        }
        assert_eq!(ma, both);
    }

    #[test]
    fn overlapping_classes_coexist() {
        let sq = Polygon::rect(Rect::new(10.0, 10.0, 30.0, 30.0));
        let p = patch(vec![
            object(0, Geometry::Polygon(sq.clone())),
            object(7, Geometry::Polygon(sq)),
        ]);
        let m = rasterize(&p, 16, 4.0);
        assert_eq!(m.count_ones(0), m.count_ones(7));
        assert!(m.get(0, 100, 100) && m.get(7, 100, 100));
    }

    #[test]
    fn line_buffer_width() {
        let road = Geometry::LineString(vec![Point::new(0.0, 100.0), Point::new(200.0, 100.0)]);
        let m = rasterize(&patch(vec![object(11, road)]), 16, 4.0);
        // Centers within 2 m of y = 100: rows 490..=509.
        assert_eq!(m.count_ones(11), 20 * 1000);
        assert!(m.get(11, 490, 0) && m.get(11, 509, 999));
        assert!(!m.get(11, 489, 0) && !m.get(11, 510, 0));
    }

    #[test]
    fn hole_is_not_filled() {
        let mut poly = Polygon::rect(Rect::new(0.0, 0.0, 40.0, 40.0));
        poly.holes
            .push(Polygon::rect(Rect::new(10.0, 10.0, 30.0, 30.0)).exterior);
        let m = rasterize(&patch(vec![object(0, Geometry::Polygon(poly))]), 1, 4.0);
        assert_eq!(m.count_ones(0), 200 * 200 - 100 * 100);
        assert!(!m.get(0, 100, 100));
    }

    #[test]
    fn bit_layout_golden() {
        let mut m = MultiChannelMask::new(8, 1, 1);
        m.set(0, 0, 0, true);
        m.set(0, 0, 7, true);
        let bytes = write_mask(&m);
        assert_eq!(&bytes[..4], b"MCM1");
        assert_eq!(&bytes[4..16], &[8, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(bytes[16], 0x81);
        assert_eq!(bytes.len(), 17);
    }

    #[test]
    fn full_size_stream_length() {
        let m = MultiChannelMask::new(1000, 1000, 16);
        assert_eq!(write_mask(&m).len(), 2_000_016);
    }

    #[test]
    fn read_errors() {
        assert_eq!(read_mask(b"MCM2\0\0\0\0\0\0\0\0\0\0\0\0"), Err(MaskError::BadMagic));
        assert!(matches!(read_mask(b"MCM1\x08"), Err(MaskError::Truncated { .. })));
        let mut bytes = write_mask(&MultiChannelMask::new(9, 2, 2));
        bytes.pop();
        assert!(matches!(read_mask(&bytes), Err(MaskError::Truncated { .. })));
        let huge = [
            b"MCM1".as_slice(),
            &u32::MAX.to_le_bytes(),
            &u32::MAX.to_le_bytes(),
            &u32::MAX.to_le_bytes(),
        ]
        .concat();
        assert!(matches!(
            read_mask(&huge),
            Err(MaskError::DimsOverflow { .. } | MaskError::Truncated { .. })
        ));
    }

    #[test]
    fn downsample_cases() {
        let mut m = MultiChannelMask::new(4, 4, 2);
        for r in 0..4 {
            for c in 0..4 {
                m.set(0, r, c, true);
            }
        }
        m.set(1, 0, 1, true);
        let g = downsample_mask(&m, 2, 2).unwrap();
        assert!(g.data[..4].iter().all(|&v| v == 1.0));
        assert_eq!(g.get(1, 0, 0), 0.25);
        assert_eq!(g.get(1, 1, 1), 0.0);
        assert!(matches!(downsample_mask(&m, 3, 2), Err(MaskError::NotDivisible { .. })));
        assert!(matches!(downsample_mask(&m, 0, 2), Err(MaskError::NotDivisible { .. })));
    }

    #[test]
    fn pgm_header() {
        let mut m = MultiChannelMask::new(3, 2, 1);
        m.set(0, 1, 2, true);
        assert_eq!(write_pgm(&m, 0), "P2\n3 2\n255\n0 0 0\n0 0 255\n");
    }
}
