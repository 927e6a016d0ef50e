//! MOTChallenge-format text IO, the binary embedding sidecar, and the
//! occlusion-map text format.
//!
//! Detection rows: `frame,id,left,top,width,height,conf[,x,y,z[,score]]`
//! with `id = -1`; the optional 11th column carries the occlusion score.
//! Ground-truth rows: `frame,id,left,top,width,height,conf,class,visibility`.
//! Result rows: `frame,id,left,top,width,height,1,-1,-1,-1`, boxes printed
//! with two decimals so output files are byte-stable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::{EvalFrame, GtBox, HypBox};
use crate::occlusion::OcclusionMap;
use crate::types::{BoundingBox, Detection, FrameObservations};

/// Ingestion knobs for detection files.
#[derive(Debug, Clone)]
pub struct DetectionParseOptions {
    /// Rows below this confidence are dropped.
    pub min_confidence: f64,
    /// Embedding dimension used when no sidecar supplies real embeddings.
    pub default_embedding_dim: usize,
}

impl Default for DetectionParseOptions {
    fn default() -> Self {
        Self {
            min_confidence: 0.4,
            default_embedding_dim: 128,
        }
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(line, format!("{what}: not a number: '{}'", raw.trim())))
}

/// Parses a MOT detection file. Rows group by frame in ascending order; rows
/// under the confidence floor are dropped; embeddings come from the sidecar
/// keyed by (frame, row ordinal within the frame) or default to a fixed unit
/// vector when no sidecar is given.
pub fn parse_detections(
    text: &str,
    sidecar: Option<&EmbeddingSidecar>,
    opts: &DetectionParseOptions,
) -> Result<Vec<FrameObservations>> {
    let mut per_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    let mut ordinals: BTreeMap<u64, u32> = BTreeMap::new();
    let mut row_keys: Vec<(u32, u32)> = Vec::new();
    let mut has_score_column = false;
    let sidecar_index: Option<BTreeMap<(u32, u32), &SidecarRecord>> =
        sidecar.map(|sc| sc.records.iter().map(|r| ((r.frame, r.ordinal), r)).collect());

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 || fields.len() > 11 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 to 11 comma-separated fields, got {}", fields.len()),
            ));
        }
        let frame: u64 = parse_field(fields[0], line_no, "frame")?;
        if frame == 0 {
            return Err(Error::parse(line_no, "frame indices start at 1"));
        }
        let _id: i64 = parse_field(fields[1], line_no, "id")?;
        let left: f64 = parse_field(fields[2], line_no, "bb_left")?;
        let top: f64 = parse_field(fields[3], line_no, "bb_top")?;
        let width: f64 = parse_field(fields[4], line_no, "bb_width")?;
        let height: f64 = parse_field(fields[5], line_no, "bb_height")?;
        let conf: f64 = parse_field(fields[6], line_no, "conf")?;
        for (i, name) in [(7, "x"), (8, "y"), (9, "z")] {
            if fields.len() > i {
                let _: f64 = parse_field(fields[i], line_no, name)?;
            }
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::parse(
                line_no,
                format!("box size must be positive, got {width}x{height}"),
            ));
        }
        let score = if fields.len() == 11 {
            has_score_column = true;
            let s: f64 = parse_field(fields[10], line_no, "occlusion score")?;
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::parse(line_no, format!("occlusion score {s} outside [0,1]")));
            }
            s
        } else {
            1.0
        };

        let ordinal = ordinals.entry(frame).or_insert(0);
        let this_ordinal = *ordinal;
        *ordinal += 1;
        if frame > u32::MAX as u64 {
            return Err(Error::parse(line_no, "frame index exceeds sidecar range"));
        }
        row_keys.push((frame as u32, this_ordinal));

        if conf < opts.min_confidence {
            continue;
        }
        let bbox = BoundingBox::from_ltwh(left, top, width, height)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        let embedding = match &sidecar_index {
            Some(index) => index
                .get(&(frame as u32, this_ordinal))
                .ok_or_else(|| {
                    Error::parse(
                        line_no,
                        format!("sidecar has no embedding for frame {frame} ordinal {this_ordinal}"),
                    )
                })?
                .values
                .iter()
                .map(|v| *v as f64)
                .collect(),
            None => default_embedding(opts.default_embedding_dim),
        };
        let det = Detection::new(frame, bbox, conf.clamp(0.0, 1.0), embedding, score)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        per_frame.entry(frame).or_default().push(det);
    }

    // A sidecar and a score column both describe the same detection set;
    // their row coverage must agree.
    if let (Some(sc), true) = (sidecar, has_score_column) {
        let mut expected = row_keys;
        expected.sort_unstable();
        let mut present: Vec<(u32, u32)> = sc.records.iter().map(|r| (r.frame, r.ordinal)).collect();
        present.sort_unstable();
        if expected != present {
            return Err(Error::invalid(
                "sidecar records disagree with the detection rows",
            ));
        }
    }

    per_frame
        .into_iter()
        .map(|(frame, detections)| FrameObservations::new(frame, detections))
        .collect()
}

fn default_embedding(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim.max(1)];
    v[0] = 1.0;
    v
}

/// One frame's ground-truth boxes.
#[derive(Debug, Clone)]
pub struct GtFrame {
    pub frame: u64,
    pub boxes: Vec<GtBox>,
}

/// Parses a MOT ground-truth file. Rows with zero confidence or a
/// non-pedestrian class are excluded; the visibility column is mandatory.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GtFrame>> {
    let mut per_frame: BTreeMap<u64, Vec<GtBox>> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 9 {
            return Err(Error::parse(
                line_no,
                "ground truth requires 9 columns (missing visibility)",
            ));
        }
        let frame: u64 = parse_field(fields[0], line_no, "frame")?;
        let identity: u64 = parse_field(fields[1], line_no, "id")?;
        let left: f64 = parse_field(fields[2], line_no, "bb_left")?;
        let top: f64 = parse_field(fields[3], line_no, "bb_top")?;
        let width: f64 = parse_field(fields[4], line_no, "bb_width")?;
        let height: f64 = parse_field(fields[5], line_no, "bb_height")?;
        let conf: f64 = parse_field(fields[6], line_no, "conf")?;
        let class: i64 = parse_field(fields[7], line_no, "class")?;
        let visibility: f64 = parse_field(fields[8], line_no, "visibility")?;
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::parse(
                line_no,
                format!("visibility {visibility} outside [0,1]"),
            ));
        }
        if conf == 0.0 || class != 1 {
            continue;
        }
        let bbox = BoundingBox::from_ltwh(left, top, width, height)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        per_frame.entry(frame).or_default().push(GtBox {
            identity,
            bbox,
            visibility,
        });
    }
    Ok(per_frame
        .into_iter()
        .map(|(frame, boxes)| GtFrame { frame, boxes })
        .collect())
}

/// Parses a results file (same row shape as detections but with real ids).
pub fn parse_results(text: &str) -> Result<Vec<(u64, Vec<HypBox>)>> {
    let mut per_frame: BTreeMap<u64, Vec<HypBox>> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(Error::parse(line_no, "expected at least 6 fields"));
        }
        let frame: u64 = parse_field(fields[0], line_no, "frame")?;
        let id: u64 = parse_field(fields[1], line_no, "id")?;
        let left: f64 = parse_field(fields[2], line_no, "bb_left")?;
        let top: f64 = parse_field(fields[3], line_no, "bb_top")?;
        let width: f64 = parse_field(fields[4], line_no, "bb_width")?;
        let height: f64 = parse_field(fields[5], line_no, "bb_height")?;
        let bbox = BoundingBox::from_ltwh(left, top, width, height)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        per_frame.entry(frame).or_default().push(HypBox { id, bbox });
    }
    Ok(per_frame.into_iter().collect())
}

/// Serializes tracker output in submission format: frame-major, id-ascending,
/// trailing `1,-1,-1,-1`, boxes at two decimals.
pub fn write_results(histories: &[(u64, Vec<(u64, BoundingBox)>)]) -> String {
    let mut rows: Vec<(u64, u64, BoundingBox)> = Vec::new();
    for (id, history) in histories {
        for (frame, bbox) in history {
            rows.push((*frame, *id, *bbox));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (frame, id, b) in rows {
        out.push_str(&format!(
            "{frame},{id},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1\n",
            b.left,
            b.top,
            b.width(),
            b.height()
        ));
    }
    out
}

/// Serializes observations as a detection file (id -1, confidence and the
/// occlusion score included).
pub fn write_detections(frames: &[FrameObservations]) -> String {
    let mut out = String::new();
    for fo in frames {
        for d in &fo.detections {
            out.push_str(&format!(
                "{},-1,{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1,{:.4}\n",
                fo.frame,
                d.bbox.left,
                d.bbox.top,
                d.bbox.width(),
                d.bbox.height(),
                d.confidence,
                d.occlusion_score
            ));
        }
    }
    out
}

/// Serializes ground truth in MOT gt format (conf 1, pedestrian class).
pub fn write_ground_truth(frames: &[EvalFrame]) -> String {
    let mut out = String::new();
    for ef in frames {
        for g in &ef.gt {
            out.push_str(&format!(
                "{},{},{:.2},{:.2},{:.2},{:.2},1,1,{:.4}\n",
                ef.frame,
                g.identity,
                g.bbox.left,
                g.bbox.top,
                g.bbox.width(),
                g.bbox.height(),
                g.visibility
            ));
        }
    }
    out
}

const SIDECAR_MAGIC: &[u8; 4] = b"OAEM";
const SIDECAR_VERSION: u32 = 1;

/// One embedding record keyed by frame and detection ordinal within it.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarRecord {
    pub frame: u32,
    pub ordinal: u32,
    pub values: Vec<f32>,
}

/// Binary embedding sidecar: magic "OAEM", version, embedding dimension,
/// record count, then fixed-size little-endian records.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSidecar {
    pub dim: u32,
    pub records: Vec<SidecarRecord>,
}

impl EmbeddingSidecar {
    pub fn new(dim: u32) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    /// Builds a sidecar from in-memory observations.
    pub fn from_observations(frames: &[FrameObservations]) -> Result<Self> {
        let dim = frames
            .iter()
            .flat_map(|f| f.detections.first())
            .map(|d| d.embedding.len())
            .next()
            .unwrap_or(0) as u32;
        let mut sc = Self::new(dim);
        for fo in frames {
            if fo.frame > u32::MAX as u64 {
                return Err(Error::invalid("frame index exceeds sidecar range"));
            }
            for (ordinal, det) in fo.detections.iter().enumerate() {
                if det.embedding.len() as u32 != dim {
                    return Err(Error::invalid("embedding dimension not uniform"));
                }
                sc.records.push(SidecarRecord {
                    frame: fo.frame as u32,
                    ordinal: ordinal as u32,
                    values: det.embedding.iter().map(|v| *v as f32).collect(),
                });
            }
        }
        Ok(sc)
    }

    pub fn lookup(&self, frame: u32, ordinal: u32) -> Option<Vec<f64>> {
        self.records
            .iter()
            .find(|r| r.frame == frame && r.ordinal == ordinal)
            .map(|r| r.values.iter().map(|v| *v as f64).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.records.len() * (8 + 4 * self.dim as usize));
        out.extend_from_slice(SIDECAR_MAGIC);
        out.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.frame.to_le_bytes());
            out.extend_from_slice(&r.ordinal.to_le_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::parse(0, "sidecar truncated"));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let magic = take(&mut pos, 4)?;
        if magic != SIDECAR_MAGIC {
            return Err(Error::parse(0, "bad sidecar magic"));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != SIDECAR_VERSION {
            return Err(Error::parse(0, format!("unsupported sidecar version {version}")));
        }
        let dim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if dim == 0 {
            return Err(Error::parse(0, "sidecar embedding dimension is zero"));
        }
        let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let frame = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
            let ordinal = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
            let mut values = Vec::with_capacity(dim as usize);
            for _ in 0..dim {
                values.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
            }
            records.push(SidecarRecord {
                frame,
                ordinal,
                values,
            });
        }
        if pos != bytes.len() {
            return Err(Error::parse(0, "trailing bytes after sidecar records"));
        }
        Ok(Self { dim, records })
    }
}

/// Writes an occlusion map as text: a `height width` header line, then one
/// row of responses per line.
pub fn write_occlusion_map(map: &OcclusionMap) -> String {
    let mut out = format!("{} {}\n", map.height(), map.width());
    for y in 0..map.height() {
        let row: Vec<String> = (0..map.width()).map(|x| format!("{}", map.get(x, y))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_occlusion_map(text: &str) -> Result<OcclusionMap> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty occlusion map"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::parse(1, "header must be 'height width'"));
    }
    let height: usize = parse_field(dims[0], 1, "height")?;
    let width: usize = parse_field(dims[1], 1, "width")?;
    let mut map = OcclusionMap::zeros(height, width)
        .map_err(|e| Error::parse(1, e.to_string()))?;
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if rows >= height {
            return Err(Error::parse(line_no, "more rows than the header declares"));
        }
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != width {
            return Err(Error::parse(
                line_no,
                format!("expected {width} values, got {}", cells.len()),
            ));
        }
        for (x, cell) in cells.iter().enumerate() {
            let v: f64 = parse_field(cell, line_no, "response")?;
            map.set(x, rows, v).map_err(|e| Error::parse(line_no, e.to_string()))?;
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::parse(0, format!("expected {height} rows, got {rows}")));
    }
    Ok(map)
}

/// Ground-truth frames joined with hypothesis frames into evaluation input.
/// Frames present on either side only still count (their absences become
/// misses or false positives).
pub fn join_eval_frames(gt: &[GtFrame], hyp: &[(u64, Vec<HypBox>)]) -> Result<Vec<EvalFrame>> {
    let mut frames: BTreeMap<u64, (Vec<GtBox>, Vec<HypBox>)> = BTreeMap::new();
    for g in gt {
        frames.entry(g.frame).or_default().0 = g.boxes.clone();
    }
    for (f, boxes) in hyp {
        frames.entry(*f).or_default().1 = boxes.clone();
    }
    frames
        .into_iter()
        .map(|(frame, (g, h))| EvalFrame::new(frame, g, h))
        .collect()
}
