"""Diagram-subtraction sample filtering.

A sample is treated as noisy when the unweighted and weighted cluster
diagrams disagree about its cell, i.e. it falls in the region swept out when
the weighted boundaries shift away from the unweighted ones. Filtering only
controls which samples contribute to the adaptation loss; predictions are
still made for every sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ClusterSiteSet, InfluenceConfig, cipd_influences

Array = np.ndarray


@dataclass(frozen=True)
class FilterReport:
    """Per-sample keep decisions plus the disagreeing cell pairs.

    ``disagreement_pairs`` holds one (unweighted_cell, weighted_cell) entry
    per excluded sample, in sample order.
    """

    keep_mask: Array  # (n,) bool
    kept_fraction: float
    disagreement_pairs: tuple[tuple[int, int], ...]


def filter_batch(
    features, c: ClusterSiteSet, cfg: InfluenceConfig, margin: float = 0.0
) -> FilterReport:
    """Mark samples whose unweighted and weighted assignments differ.

    ``margin`` reserves room for a wider exclusion band: samples whose two
    assignments agree but whose weighted top-two influence gap is below the
    margin are excluded as well. The default 0 keeps the strict disagreement
    region only.
    """
    if c.weight_sq is None:
        raise ValueError("cluster set has no weights")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    z = np.atleast_2d(np.asarray(features, dtype=float))
    zeros = np.zeros(c.n_cells)
    unweighted = cipd_influences(z, c, cfg, weight_sq=zeros)
    weighted = cipd_influences(z, c, cfg)
    cell_u = np.argmax(unweighted, axis=-1)
    cell_w = np.argmax(weighted, axis=-1)
    keep = cell_u == cell_w
    if margin > 0 and c.n_cells > 1:
        top2 = np.partition(weighted, -2, axis=-1)[:, -2:]
        keep &= (top2[:, 1] - top2[:, 0]) >= margin
    pairs = tuple(
        (int(cell_u[i]), int(cell_w[i])) for i in np.flatnonzero(~keep)
    )
    return FilterReport(
        keep_mask=keep,
        kept_fraction=float(np.mean(keep)) if len(keep) else 1.0,
        disagreement_pairs=pairs,
    )
