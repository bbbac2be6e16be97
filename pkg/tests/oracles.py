"""Slow, obviously-correct reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


def box_iou(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def gray_pixel(r, g, b):
    return math.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5 + 1e-9)


def reduce_level(a: np.ndarray) -> np.ndarray:
    """Binomial 5-tap blur with mirror borders, then keep even rows/cols, loop by loop."""
    h, w = a.shape
    k = [1, 4, 6, 4, 1]

    def mirror(i, n):
        if n < 3:
            return min(max(i, 0), n - 1)
        if i < 0:
            return -i
        if i >= n:
            return 2 * (n - 1) - i
        return i

    oh, ow = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((oh, ow), dtype=np.uint8)
    for oy in range(oh):
        for ox in range(ow):
            acc = 0
            for dy in range(5):
                for dx in range(5):
                    yy = mirror(2 * oy + dy - 2, h)
                    xx = mirror(2 * ox + dx - 2, w)
                    acc += k[dy] * k[dx] * int(a[yy, xx])
            out[oy, ox] = (acc + 128) >> 8
    return out


def greedy_match(scores: dict[tuple[int, int], float]):
    """Repeatedly take the best remaining admissible pair (ties: lower id, lower index)."""
    pairs = []
    remaining = dict(scores)
    while remaining:
        best = min(remaining, key=lambda k: (-remaining[k], k[0], k[1]))
        pairs.append(best)
        remaining = {k: v for k, v in remaining.items() if k[0] != best[0] and k[1] != best[1]}
    return sorted(pairs)


def _frame_pairs_brute(gt, pred, prior):
    gt_boxes, pred_boxes = dict(gt), dict(pred)
    kept = {}
    for g in sorted(gt_boxes):
        p = prior.get(g)
        if p is not None and p in pred_boxes and p not in kept.values():
            if box_iou(gt_boxes[g], pred_boxes[p]) >= 0.5:
                kept[g] = p
    gl = [g for g in sorted(gt_boxes) if g not in kept]
    pl = [p for p in sorted(pred_boxes) if p not in kept.values()]
    best, best_key = {}, (0, 0.0)
    # enumerate every partial injection from gl to pl
    options = [None] + pl
    for choice in itertools.product(options, repeat=len(gl)):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        ok, cost = True, 0.0
        for g, p in zip(gl, choice):
            if p is None:
                continue
            v = box_iou(gt_boxes[g], pred_boxes[p])
            if v < 0.5:
                ok = False
                break
            cost += 1 - v
        if not ok:
            continue
        key = (len(used), -cost)
        if key > best_key or (key == best_key and not best):
            best_key = key
            best = {g: p for g, p in zip(gl, choice) if p is not None}
    out = dict(kept)
    out.update(best)
    return out


def brute_mota(gt_frames, pred_frames):
    fp = fn = sw = n = 0
    last = {}
    for gt, pred in zip(gt_frames, pred_frames):
        pairs = _frame_pairs_brute(gt, pred, last)
        for g, p in pairs.items():
            if g in last and last[g] != p:
                sw += 1
            last[g] = p
        n += len(gt)
        fn += len(gt) - len(pairs)
        fp += len(pred) - len(pairs)
    return fp, fn, sw, 1 - (fp + fn + sw) / max(n, 1)


def brute_idf1(gt_frames, pred_frames):
    gids = sorted({g for f in gt_frames for g, _ in f})
    pids = sorted({p for f in pred_frames for p, _ in f})

    def coloc(g, p):
        c = 0
        for gt, pred in zip(gt_frames, pred_frames):
            gb, pb = dict(gt).get(g), dict(pred).get(p)
            if gb is not None and pb is not None and box_iou(gb, pb) >= 0.5:
                c += 1
        return c

    best = 0
    for choice in itertools.product([None] + pids, repeat=len(gids)):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        best = max(best, sum(coloc(g, p) for g, p in zip(gids, choice) if p is not None))
    n_gt = sum(len(f) for f in gt_frames)
    n_pr = sum(len(f) for f in pred_frames)
    idfp, idfn = n_pr - best, n_gt - best
    d = 2 * best + idfp + idfn
    return best, idfp, idfn, (2 * best / d if d else 1.0)
