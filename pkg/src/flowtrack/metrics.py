"""CLEAR-MOT accuracy and IDF1 against ground truth, with IoU >= 0.5 box matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .association import iou
from .core import BoundingBox
from .motio import MotRow

MATCH_IOU = 0.5
_INADMISSIBLE = 1e6

# one frame: list of (identity, box)
Frame = Sequence[tuple[int, BoundingBox]]


def frames_from_rows(rows: Sequence[MotRow], n_frames: int) -> list[list[tuple[int, BoundingBox]]]:
    out: list[list[tuple[int, BoundingBox]]] = [[] for _ in range(n_frames)]
    for r in rows:
        out[r.frame].append((r.id, r.box))
    return out


def frames_from_store(store) -> list[list[tuple[int, BoundingBox]]]:
    return [[(g.track_id, g.box) for g in f] for f in store.frames]


def frame_match(gt: Frame, pred: Frame, prior: dict[int, int] | None = None) -> dict[int, int]:
    """Pair GT ids with predicted ids for one frame.

    Pairs carried over from ``prior`` survive while still overlapping enough;
    the rest are solved as a maximum-size, minimum-(1 - IoU) assignment.
    """
    prior = prior or {}
    gt_boxes = dict(gt)
    pred_boxes = dict(pred)
    pairs: dict[int, int] = {}
    used = set()
    for g in sorted(gt_boxes):
        p = prior.get(g)
        if p is not None and p in pred_boxes and p not in used:
            if iou(gt_boxes[g], pred_boxes[p]) >= MATCH_IOU:
                pairs[g] = p
                used.add(p)
    g_left = [g for g in sorted(gt_boxes) if g not in pairs]
    p_left = [p for p in sorted(pred_boxes) if p not in used]
    if not g_left or not p_left:
        return pairs
    cost = np.full((len(g_left), len(p_left)), _INADMISSIBLE)
    for i, g in enumerate(g_left):
        for j, p in enumerate(p_left):
            v = iou(gt_boxes[g], pred_boxes[p])
            if v >= MATCH_IOU:
                cost[i, j] = 1.0 - v
    rows, cols = linear_sum_assignment(cost)
    for i, j in zip(rows, cols):
        if cost[i, j] < _INADMISSIBLE:
            pairs[g_left[i]] = p_left[j]
    return pairs


@dataclass
class EvalReport:
    mota: float
    idf1: float
    fp: int
    fn: int
    idsw: int
    gt_count: int
    idtp: int
    idfp: int
    idfn: int
    pred_count: int = 0
    sequences: dict[str, EvalReport] = field(default_factory=dict)

    def as_text(self, name: str | None = None) -> str:
        items = [("MOTA", f"{self.mota:.4f}"), ("IDF1", f"{self.idf1:.4f}"),
                 ("FP", self.fp), ("FN", self.fn), ("IDSW", self.idsw), ("GT", self.gt_count),
                 ("IDTP", self.idtp), ("IDFP", self.idfp), ("IDFN", self.idfn)]
        width = max(len(k) for k, _ in items)
        head = f"[{name}]\n" if name else ""
        return head + "".join(f"{k:<{width}} : {v}\n" for k, v in items)

    CSV_HEADER = "sequence,MOTA,IDF1,FP,FN,IDSW,GT,IDTP,IDFP,IDFN\n"

    def csv_row(self, name: str) -> str:
        return (f"{name},{self.mota:.4f},{self.idf1:.4f},{self.fp},{self.fn},{self.idsw},"
                f"{self.gt_count},{self.idtp},{self.idfp},{self.idfn}\n")


def _mota_value(fp: int, fn: int, idsw: int, gt_count: int) -> float:
    # an empty ground truth scores 1 minus the raw error count
    return 1.0 - (fn + fp + idsw) / max(gt_count, 1)


def _idf1_value(idtp: int, idfp: int, idfn: int) -> float:
    denom = 2 * idtp + idfp + idfn
    return 2 * idtp / denom if denom else 1.0


def mota(gt_frames: Sequence[Frame], pred_frames: Sequence[Frame]) -> dict[str, float]:
    if len(gt_frames) != len(pred_frames):
        raise ValueError("ground truth and predictions cover different frame counts")
    fp = fn = idsw = gt_count = 0
    last: dict[int, int] = {}
    for gt, pred in zip(gt_frames, pred_frames):
        pairs = frame_match(gt, pred, last)
        for g, p in pairs.items():
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
        gt_count += len(gt)
        fn += len(gt) - len(pairs)
        fp += len(pred) - len(pairs)
    return {"FP": fp, "FN": fn, "IDSW": idsw, "GT": gt_count,
            "MOTA": _mota_value(fp, fn, idsw, gt_count)}


def colocation_counts(gt_frames: Sequence[Frame], pred_frames: Sequence[Frame]):
    gt_ids = sorted({g for f in gt_frames for g, _ in f})
    pred_ids = sorted({p for f in pred_frames for p, _ in f})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    for gt, pred in zip(gt_frames, pred_frames):
        for g, gb in gt:
            for p, pb in pred:
                if iou(gb, pb) >= MATCH_IOU:
                    counts[gi[g], pi[p]] += 1
    return gt_ids, pred_ids, counts


def idf1(gt_frames: Sequence[Frame], pred_frames: Sequence[Frame]) -> dict[str, float]:
    """Global one-to-one identity matching that maximises co-located frames."""
    if len(gt_frames) != len(pred_frames):
        raise ValueError("ground truth and predictions cover different frame counts")
    _, _, counts = colocation_counts(gt_frames, pred_frames)
    idtp = 0
    if counts.size:
        rows, cols = linear_sum_assignment(counts, maximize=True)
        idtp = int(counts[rows, cols].sum())
    n_gt = sum(len(f) for f in gt_frames)
    n_pred = sum(len(f) for f in pred_frames)
    idfp, idfn = n_pred - idtp, n_gt - idtp
    return {"IDTP": idtp, "IDFP": idfp, "IDFN": idfn, "IDF1": _idf1_value(idtp, idfp, idfn)}


def evaluate(gt_frames: Sequence[Frame], pred_frames: Sequence[Frame]) -> EvalReport:
    a = mota(gt_frames, pred_frames)
    b = idf1(gt_frames, pred_frames)
    return EvalReport(mota=a["MOTA"], idf1=b["IDF1"], fp=a["FP"], fn=a["FN"], idsw=a["IDSW"],
                      gt_count=a["GT"], idtp=b["IDTP"], idfp=b["IDFP"], idfn=b["IDFN"],
                      pred_count=sum(len(f) for f in pred_frames))


def combine(reports: dict[str, EvalReport]) -> EvalReport:
    """Pool counts over sequences; per-sequence reports are kept in ``sequences``."""
    fp = sum(r.fp for r in reports.values())
    fn = sum(r.fn for r in reports.values())
    idsw = sum(r.idsw for r in reports.values())
    gt = sum(r.gt_count for r in reports.values())
    idtp = sum(r.idtp for r in reports.values())
    idfp = sum(r.idfp for r in reports.values())
    idfn = sum(r.idfn for r in reports.values())
    return EvalReport(mota=_mota_value(fp, fn, idsw, gt), idf1=_idf1_value(idtp, idfp, idfn),
                      fp=fp, fn=fn, idsw=idsw, gt_count=gt, idtp=idtp, idfp=idfp, idfn=idfn,
                      pred_count=sum(r.pred_count for r in reports.values()),
                      sequences=dict(reports))


class FrameRangeError(ValueError):
    pass


def evaluate_files(gt_path, result_path) -> EvalReport:
    from .detector.gt import GroundTruthStore
    from .motio import read_mot_file

    store = GroundTruthStore.load(gt_path)
    rows = read_mot_file(result_path)
    n = store.n_frames
    if rows:
        lo = min(r.frame for r in rows)
        hi = max(r.frame for r in rows)
        if hi >= n:
            raise FrameRangeError(
                f"result frames {lo + 1}..{hi + 1} exceed ground-truth frames 1..{n}")
    return evaluate(frames_from_store(store), frames_from_rows(rows, n))
