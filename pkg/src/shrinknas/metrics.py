"""Classification metrics for the path filter.

Positive class = weak path, everywhere.  Undefined ratios (0/0) are
reported as None, never silently coerced to 0 or 1.
"""

from __future__ import annotations

import numpy as np


def confusion(y_true_weak, y_pred_weak):
    t = np.asarray(y_true_weak, dtype=bool)
    p = np.asarray(y_pred_weak, dtype=bool)
    return {
        "tp": int(np.sum(t & p)),
        "fp": int(np.sum(~t & p)),
        "fn": int(np.sum(t & ~p)),
        "tn": int(np.sum(~t & ~p)),
    }


def precision_recall(y_true_weak, y_pred_weak):
    c = confusion(y_true_weak, y_pred_weak)
    precision = c["tp"] / (c["tp"] + c["fp"]) if c["tp"] + c["fp"] else None
    recall = c["tp"] / (c["tp"] + c["fn"]) if c["tp"] + c["fn"] else None
    if precision and recall:
        f1 = 2 * precision * recall / (precision + recall)
    elif precision is not None and recall is not None:
        f1 = 0.0
    else:
        f1 = None
    return {"precision": precision, "recall": recall, "f1": f1, **c}
