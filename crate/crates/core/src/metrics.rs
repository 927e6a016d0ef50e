//! Tracking evaluation: FP / FN / ID switches / MOTA with the CLEAR-MOT
//! continuity convention, IDF1 through a global identity matching, and
//! visibility-stratified error breakdowns.

use std::collections::BTreeMap;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::types::{iou, BoundingBox};

/// Ground-truth box for one frame.
#[derive(Debug, Clone)]
pub struct GtBox {
    pub identity: u64,
    pub bbox: BoundingBox,
    pub visibility: f64,
}

/// Tracker output box for one frame.
#[derive(Debug, Clone)]
pub struct HypBox {
    pub id: u64,
    pub bbox: BoundingBox,
}

/// One frame of evaluation input.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub frame: u64,
    pub gt: Vec<GtBox>,
    pub hyp: Vec<HypBox>,
}

impl EvalFrame {
    pub fn new(frame: u64, gt: Vec<GtBox>, hyp: Vec<HypBox>) -> Result<Self> {
        let mut ids: Vec<u64> = gt.iter().map(|g| g.identity).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != gt.len() {
            return Err(Error::invalid(format!(
                "duplicate ground-truth identity in frame {frame}"
            )));
        }
        let mut hids: Vec<u64> = hyp.iter().map(|h| h.id).collect();
        hids.sort_unstable();
        hids.dedup();
        if hids.len() != hyp.len() {
            return Err(Error::invalid(format!(
                "duplicate hypothesis id in frame {frame}"
            )));
        }
        Ok(Self { frame, gt, hyp })
    }
}

/// Aggregate evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub gt_total: u64,
    pub hyp_total: u64,
    pub idtp: u64,
    pub mota: f64,
    pub idf1: f64,
}

/// Half-open visibility interval; the final band of a partition also includes
/// its upper bound so 1.0 is covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityBand {
    pub lo: f64,
    pub hi: f64,
}

/// Errors attributed to one visibility band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub band: VisibilityBand,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub gt_boxes: u64,
}

/// Matches one frame's ground truth against hypotheses: correspondences from
/// the previous frame are kept whenever both boxes are still present and
/// overlap at or above the threshold, and the remainder is solved as a
/// maximum-IOU assignment. Returns (gt index, hyp index) pairs.
pub fn match_frame(
    gt: &[GtBox],
    hyp: &[HypBox],
    prev: &BTreeMap<u64, u64>,
    iou_threshold: f64,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut gt_taken = vec![false; gt.len()];
    let mut hyp_taken = vec![false; hyp.len()];

    // Continuity first.
    for (gi, g) in gt.iter().enumerate() {
        if let Some(&hid) = prev.get(&g.identity) {
            if let Some(hi) = hyp.iter().position(|h| h.id == hid) {
                if !hyp_taken[hi] && iou(&g.bbox, &hyp[hi].bbox) >= iou_threshold {
                    pairs.push((gi, hi));
                    gt_taken[gi] = true;
                    hyp_taken[hi] = true;
                }
            }
        }
    }

    // Optimal assignment on what is left.
    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_taken[i]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&i| !hyp_taken[i]).collect();
    let mut matrix = CostMatrix::new(free_gt.len(), free_hyp.len());
    for (r, &gi) in free_gt.iter().enumerate() {
        for (c, &hi) in free_hyp.iter().enumerate() {
            let v = iou(&gt[gi].bbox, &hyp[hi].bbox);
            if v >= iou_threshold {
                matrix.set(r, c, 1.0 - v);
            }
        }
    }
    let matching = solve_assignment(&matrix, 1.0 - iou_threshold);
    for (r, c) in matching.pairs {
        pairs.push((free_gt[r], free_hyp[c]));
    }
    pairs.sort_unstable();
    pairs
}

enum ErrorKind {
    Miss,
    Switch,
}

struct ErrorEvent {
    kind: ErrorKind,
    visibility: f64,
}

fn run_eval(frames: &[EvalFrame], iou_threshold: f64) -> Result<(EvalReport, Vec<ErrorEvent>)> {
    if !(0.0..=1.0).contains(&iou_threshold) || iou_threshold <= 0.0 {
        return Err(Error::invalid(format!(
            "iou threshold {iou_threshold} outside (0,1]"
        )));
    }
    let mut order: Vec<&EvalFrame> = frames.iter().collect();
    order.sort_by_key(|f| f.frame);
    for w in order.windows(2) {
        if w[0].frame == w[1].frame {
            return Err(Error::invalid(format!(
                "duplicate evaluation frame {}",
                w[0].frame
            )));
        }
    }

    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut switches = 0u64;
    let mut gt_total = 0u64;
    let mut hyp_total = 0u64;
    let mut events: Vec<ErrorEvent> = Vec::new();
    // Previous frame's correspondence (continuity) and last known match per
    // identity (switch counting survives gaps).
    let mut prev: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    // Frames where a (gt identity, hyp id) pair overlaps enough, for IDF1.
    let mut overlap: BTreeMap<(u64, u64), u64> = BTreeMap::new();

    for ef in &order {
        gt_total += ef.gt.len() as u64;
        hyp_total += ef.hyp.len() as u64;
        for g in &ef.gt {
            for h in &ef.hyp {
                if iou(&g.bbox, &h.bbox) >= iou_threshold {
                    *overlap.entry((g.identity, h.id)).or_insert(0) += 1;
                }
            }
        }

        let pairs = match_frame(&ef.gt, &ef.hyp, &prev, iou_threshold);
        fp += (ef.hyp.len() - pairs.len()) as u64;
        fn_ += (ef.gt.len() - pairs.len()) as u64;

        let mut matched_gt = vec![false; ef.gt.len()];
        prev.clear();
        for &(gi, hi) in &pairs {
            matched_gt[gi] = true;
            let g = &ef.gt[gi];
            let hid = ef.hyp[hi].id;
            if let Some(&prev_hid) = last_match.get(&g.identity) {
                if prev_hid != hid {
                    switches += 1;
                    events.push(ErrorEvent {
                        kind: ErrorKind::Switch,
                        visibility: g.visibility,
                    });
                }
            }
            last_match.insert(g.identity, hid);
            prev.insert(g.identity, hid);
        }
        for (gi, g) in ef.gt.iter().enumerate() {
            if !matched_gt[gi] {
                events.push(ErrorEvent {
                    kind: ErrorKind::Miss,
                    visibility: g.visibility,
                });
            }
        }
    }

    let idtp = idf1_true_positives(&overlap);
    let denom = (gt_total + hyp_total) as f64;
    let idf1 = if denom == 0.0 {
        1.0
    } else {
        2.0 * idtp as f64 / denom
    };
    let mota = 1.0 - (fp + fn_ + switches) as f64 / gt_total.max(1) as f64;

    Ok((
        EvalReport {
            false_positives: fp,
            false_negatives: fn_,
            id_switches: switches,
            gt_total,
            hyp_total,
            idtp,
            mota,
            idf1,
        },
        events,
    ))
}

/// Maximum total overlap over all one-to-one identity pairings.
fn idf1_true_positives(overlap: &BTreeMap<(u64, u64), u64>) -> u64 {
    if overlap.is_empty() {
        return 0;
    }
    let mut gt_ids: Vec<u64> = overlap.keys().map(|k| k.0).collect();
    gt_ids.sort_unstable();
    gt_ids.dedup();
    let mut hyp_ids: Vec<u64> = overlap.keys().map(|k| k.1).collect();
    hyp_ids.sort_unstable();
    hyp_ids.dedup();
    let maxw = *overlap.values().max().unwrap() as f64;
    let mut matrix = CostMatrix::new(gt_ids.len(), hyp_ids.len());
    for (r, g) in gt_ids.iter().enumerate() {
        for (c, h) in hyp_ids.iter().enumerate() {
            let w = overlap.get(&(*g, *h)).copied().unwrap_or(0);
            matrix.set(r, c, maxw - w as f64);
        }
    }
    let matching = solve_assignment(&matrix, f64::INFINITY);
    matching
        .pairs
        .iter()
        .map(|&(r, c)| overlap.get(&(gt_ids[r], hyp_ids[c])).copied().unwrap_or(0))
        .sum()
}

/// Evaluates a sequence and produces the aggregate report.
pub fn accumulate(frames: &[EvalFrame], iou_threshold: f64) -> Result<EvalReport> {
    run_eval(frames, iou_threshold).map(|(report, _)| report)
}

/// Splits misses and switches by the visibility of the ground-truth box at
/// the error frame. Bands must partition [0,1].
pub fn stratify_by_visibility(
    frames: &[EvalFrame],
    bands: &[VisibilityBand],
    iou_threshold: f64,
) -> Result<Vec<BandReport>> {
    validate_bands(bands)?;
    let (_, events) = run_eval(frames, iou_threshold)?;
    let mut reports: Vec<BandReport> = bands
        .iter()
        .map(|b| BandReport {
            band: *b,
            false_negatives: 0,
            id_switches: 0,
            gt_boxes: 0,
        })
        .collect();
    let band_of = |v: f64| -> usize {
        for (i, b) in bands.iter().enumerate() {
            let last = i == bands.len() - 1;
            if v >= b.lo && (v < b.hi || (last && v <= b.hi)) {
                return i;
            }
        }
        unreachable!("bands partition [0,1]")
    };
    for ef in frames {
        for g in &ef.gt {
            reports[band_of(g.visibility)].gt_boxes += 1;
        }
    }
    for ev in events {
        let slot = &mut reports[band_of(ev.visibility)];
        match ev.kind {
            ErrorKind::Miss => slot.false_negatives += 1,
            ErrorKind::Switch => slot.id_switches += 1,
        }
    }
    Ok(reports)
}

fn validate_bands(bands: &[VisibilityBand]) -> Result<()> {
    if bands.is_empty() {
        return Err(Error::invalid("at least one visibility band required"));
    }
    for b in bands {
        if b.lo >= b.hi || b.lo < 0.0 || b.hi > 1.0 {
            return Err(Error::invalid(format!(
                "malformed band [{}, {})",
                b.lo, b.hi
            )));
        }
    }
    for w in bands.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(Error::invalid(format!(
                "overlapping bands [{}, {}) and [{}, {})",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
        if w[1].lo > w[0].hi {
            return Err(Error::invalid("bands leave a gap; must partition [0,1]"));
        }
    }
    if bands[0].lo != 0.0 || bands[bands.len() - 1].hi != 1.0 {
        return Err(Error::invalid("bands must cover [0,1]"));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bb(cx: f64, cy: f64) -> BoundingBox {
        BoundingBox::new(cx - 10.0, cy - 20.0, cx + 10.0, cy + 20.0).unwrap()
    }

    fn gt(identity: u64, cx: f64, cy: f64, v: f64) -> GtBox {
        GtBox {
            identity,
            bbox: bb(cx, cy),
            visibility: v,
        }
    }

    fn hyp(id: u64, cx: f64, cy: f64) -> HypBox {
        HypBox {
            id,
            bbox: bb(cx, cy),
        }
    }

    #[test]
    fn match_frame_identical_boxes() {
        let g = vec![gt(1, 50.0, 50.0, 1.0), gt(2, 150.0, 50.0, 1.0)];
        let h = vec![hyp(7, 50.0, 50.0), hyp(8, 150.0, 50.0)];
        let pairs = match_frame(&g, &h, &BTreeMap::new(), 0.5);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn match_frame_empty_hyp_all_missed() {
        let g = vec![gt(1, 50.0, 50.0, 1.0)];
        let pairs = match_frame(&g, &[], &BTreeMap::new(), 0.5);
        assert!(pairs.is_empty());
    }

    #[test]
    fn match_frame_two_hyps_one_gt_leaves_one_fp() {
        let g = vec![gt(1, 50.0, 50.0, 1.0)];
        let h = vec![hyp(7, 50.0, 50.0), hyp(8, 52.0, 50.0)];
        let pairs = match_frame(&g, &h, &BTreeMap::new(), 0.5);
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn continuity_beats_marginally_better_iou() {
        // Hyp 8 overlaps slightly better, but hyp 7 carried over from the
        // previous frame and still clears the threshold, so it keeps the gt.
        let g = vec![gt(1, 50.0, 50.0, 1.0)];
        let h = vec![hyp(7, 53.0, 50.0), hyp(8, 51.0, 50.0)];
        let mut prev = BTreeMap::new();
        prev.insert(1u64, 7u64);
        let pairs = match_frame(&g, &h, &prev, 0.5);
        assert_eq!(pairs, vec![(0, 0)]);
    }

    fn seq_frames(n: u64) -> Vec<EvalFrame> {
        (1..=n)
            .map(|f| {
                EvalFrame::new(
                    f,
                    vec![gt(1, 50.0 + f as f64, 50.0, 1.0)],
                    vec![hyp(9, 50.0 + f as f64, 50.0)],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn perfect_tracking_scores_perfectly() {
        let frames = seq_frames(10);
        let r = accumulate(&frames, 0.5).unwrap();
        assert_eq!(r.false_positives, 0);
        assert_eq!(r.false_negatives, 0);
        assert_eq!(r.id_switches, 0);
        assert_eq!(r.mota, 1.0);
        assert_eq!(r.idf1, 1.0);
    }

    #[test]
    fn identity_split_yields_idf1_point_six() {
        // One object over 10 frames; the tracker reports id 9 for frames
        // 1..=6 and id 10 for frames 7..=10.
        let frames: Vec<EvalFrame> = (1..=10u64)
            .map(|f| {
                let h_id = if f <= 6 { 9 } else { 10 };
                EvalFrame::new(
                    f,
                    vec![gt(1, 50.0 + f as f64, 50.0, 1.0)],
                    vec![hyp(h_id, 50.0 + f as f64, 50.0)],
                )
                .unwrap()
            })
            .collect();
        let r = accumulate(&frames, 0.5).unwrap();
        assert_eq!(r.id_switches, 1);
        assert_eq!(r.idtp, 6);
        assert!((r.idf1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_tracker_output_scores_zero() {
        let frames: Vec<EvalFrame> = (1..=10u64)
            .map(|f| {
                EvalFrame::new(f, vec![gt(1, 50.0 + f as f64, 50.0, 1.0)], vec![]).unwrap()
            })
            .collect();
        let r = accumulate(&frames, 0.5).unwrap();
        assert_eq!(r.false_negatives, 10);
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.idf1, 0.0);
    }

    #[test]
    fn mota_identity_recomputes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let frames: Vec<EvalFrame> = (1..=8u64)
                .map(|f| {
                    let gts: Vec<GtBox> = (0..rng.random_range(0..3u64))
                        .map(|i| {
                            gt(
                                i + 1,
                                rng.random_range(0.0..200.0),
                                rng.random_range(0.0..200.0),
                                rng.random_range(0.0..=1.0),
                            )
                        })
                        .collect();
                    let hyps: Vec<HypBox> = (0..rng.random_range(0..3u64))
                        .map(|i| {
                            hyp(
                                i + 40,
                                rng.random_range(0.0..200.0),
                                rng.random_range(0.0..200.0),
                            )
                        })
                        .collect();
                    EvalFrame::new(f, gts, hyps).unwrap()
                })
                .collect();
            let r = accumulate(&frames, 0.5).unwrap();
            let recomputed = 1.0
                - (r.false_positives + r.false_negatives + r.id_switches) as f64
                    / r.gt_total.max(1) as f64;
            assert_eq!(r.mota, recomputed);
        }
    }

    #[test]
    fn metrics_invariant_under_hyp_id_renaming() {
        let frames: Vec<EvalFrame> = (1..=10u64)
            .map(|f| {
                let h_id = if f <= 6 { 9 } else { 10 };
                EvalFrame::new(
                    f,
                    vec![gt(1, 50.0 + f as f64, 50.0, 1.0)],
                    vec![hyp(h_id, 50.0 + f as f64, 50.0)],
                )
                .unwrap()
            })
            .collect();
        let renamed: Vec<EvalFrame> = frames
            .iter()
            .map(|ef| {
                let hyps = ef
                    .hyp
                    .iter()
                    .map(|h| HypBox {
                        id: h.id * 1000 + 3,
                        bbox: h.bbox,
                    })
                    .collect();
                EvalFrame::new(ef.frame, ef.gt.clone(), hyps).unwrap()
            })
            .collect();
        let a = accumulate(&frames, 0.5).unwrap();
        let b = accumulate(&renamed, 0.5).unwrap();
        assert_eq!(a.mota, b.mota);
        assert_eq!(a.idf1, b.idf1);
        assert_eq!(a.id_switches, b.id_switches);
    }

    #[test]
    fn matches_reference_on_small_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let n_ids = rng.random_range(1..=3u64);
            let n_hyp = rng.random_range(0..=3u64);
            let n_frames = rng.random_range(1..=10u64);
            let mut frames: Vec<EvalFrame> = Vec::new();
            for f in 1..=n_frames {
                let mut gts: Vec<GtBox> = Vec::new();
                for i in 1..=n_ids {
                    if rng.random_bool(0.8) {
                        gts.push(gt(
                            i,
                            i as f64 * 60.0 + rng.random_range(-4.0..4.0),
                            50.0 + rng.random_range(-4.0..4.0),
                            rng.random_range(0.0..=1.0),
                        ));
                    }
                }
                let mut hyps: Vec<HypBox> = Vec::new();
                for i in 1..=n_hyp {
                    if rng.random_bool(0.8) {
                        hyps.push(hyp(
                            i + 100,
                            i as f64 * 60.0 + rng.random_range(-4.0..4.0),
                            50.0 + rng.random_range(-4.0..4.0),
                        ));
                    }
                }
                frames.push(EvalFrame::new(f, gts, hyps).unwrap());
            }
            let got = accumulate(&frames, 0.5).unwrap();
            let want = reference::evaluate(&frames, 0.5);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn stratify_single_band_equals_global() {
        let frames: Vec<EvalFrame> = (1..=10u64)
            .map(|f| {
                let hyps = if f % 3 == 0 {
                    vec![]
                } else {
                    vec![hyp(9, 50.0 + f as f64, 50.0)]
                };
                EvalFrame::new(f, vec![gt(1, 50.0 + f as f64, 50.0, 0.8)], hyps).unwrap()
            })
            .collect();
        let global = accumulate(&frames, 0.5).unwrap();
        let bands = stratify_by_visibility(
            &frames,
            &[VisibilityBand { lo: 0.0, hi: 1.0 }],
            0.5,
        )
        .unwrap();
        assert_eq!(bands[0].false_negatives, global.false_negatives);
        assert_eq!(bands[0].id_switches, global.id_switches);
    }

    #[test]
    fn stratify_fully_visible_leaves_low_band_empty() {
        let frames = seq_frames(10);
        let bands = stratify_by_visibility(
            &frames,
            &[
                VisibilityBand { lo: 0.0, hi: 0.5 },
                VisibilityBand { lo: 0.5, hi: 1.0 },
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(bands[0].gt_boxes, 0);
        assert_eq!(bands[0].false_negatives, 0);
        assert_eq!(bands[1].gt_boxes, 10);
    }

    #[test]
    fn stratify_attributes_errors_to_low_visibility() {
        // Misses happen exactly while the object is barely visible.
        let frames: Vec<EvalFrame> = (1..=10u64)
            .map(|f| {
                let occluded = (4..=6).contains(&f);
                let v = if occluded { 0.2 } else { 0.9 };
                let hyps = if occluded {
                    vec![]
                } else {
                    vec![hyp(9, 50.0 + f as f64, 50.0)]
                };
                EvalFrame::new(f, vec![gt(1, 50.0 + f as f64, 50.0, v)], hyps).unwrap()
            })
            .collect();
        let bands = stratify_by_visibility(
            &frames,
            &[
                VisibilityBand { lo: 0.0, hi: 0.5 },
                VisibilityBand { lo: 0.5, hi: 1.0 },
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(bands[0].false_negatives, 3);
        assert_eq!(bands[1].false_negatives, 0);
    }

    #[test]
    fn stratify_rejects_bad_bands() {
        let frames = seq_frames(2);
        for bands in [
            vec![],
            vec![VisibilityBand { lo: 0.0, hi: 0.6 }, VisibilityBand { lo: 0.5, hi: 1.0 }],
            vec![VisibilityBand { lo: 0.0, hi: 0.4 }, VisibilityBand { lo: 0.6, hi: 1.0 }],
            vec![VisibilityBand { lo: 0.1, hi: 1.0 }],
            vec![VisibilityBand { lo: 0.0, hi: 0.9 }],
        ] {
            assert!(stratify_by_visibility(&frames, &bands, 0.5).is_err());
        }
    }

    #[test]
    fn surplus_frames_count_as_misses_or_false_positives() {
        // GT covers frames 1..=5, hypotheses cover 4..=8.
        let mut frames: Vec<EvalFrame> = Vec::new();
        for f in 1..=8u64 {
            let gts = if f <= 5 {
                vec![gt(1, 50.0 + f as f64, 50.0, 1.0)]
            } else {
                vec![]
            };
            let hyps = if f >= 4 {
                vec![hyp(9, 50.0 + f as f64, 50.0)]
            } else {
                vec![]
            };
            frames.push(EvalFrame::new(f, gts, hyps).unwrap());
        }
        let r = accumulate(&frames, 0.5).unwrap();
        assert_eq!(r.false_negatives, 3);
        assert_eq!(r.false_positives, 3);
    }
}
