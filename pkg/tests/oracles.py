"""Independent brute-force references used by the unit and acceptance tests."""
from __future__ import annotations

import math


def best_recall_threshold(history):
    """Exhaustive search for the Some threshold of one pixel.

    ``history`` is a list of (level, wet) pairs. A pixel is predicted wet
    when level >= T. Among candidate T (observed levels and +inf), keep
    those with the best recall and return the one with the fewest false
    alarms, then the largest T.
    """
    wet_levels = [lv for lv, w in history if w]
    if not wet_levels:
        return math.inf
    candidates = sorted({lv for lv, _ in history} | {math.inf})
    best = None
    for t in candidates:
        hits = sum(1 for lv, w in history if w and lv >= t)
        false = sum(1 for lv, w in history if not w and lv >= t)
        key = (hits, -false, t)
        if best is None or key > best[0]:
            best = (key, t)
    return best[1]


def best_precision_threshold(history):
    """Exhaustive search for the Highest threshold (strict ``level > T``).

    Among candidates (observed levels and +/-inf) keep those with no false
    alarms, then the best recall, then the smallest T.
    """
    candidates = sorted({lv for lv, _ in history} | {math.inf, -math.inf})
    best = None
    for t in candidates:
        hits = sum(1 for lv, w in history if w and lv > t)
        false = sum(1 for lv, w in history if not w and lv > t)
        key = (-false, hits, -t)
        if best is None or key > best[0]:
            best = (key, t)
    return best[1]


def set_fuse(sim_some, sim_higher, sim_highest, model_some, model_highest):
    """Fusion on Python sets of cell ids."""
    some = sim_some | model_some
    highest = sim_highest & model_highest
    higher = (sim_higher | highest) & some
    return some, higher, highest
