"""Network geometry on a wrap-around square deployment area.

APs and UEs are dropped uniformly at random on a square of side ``side``
metres. Distances are measured on the torus obtained by identifying opposite
edges, which removes boundary effects without replicating the layout into
mirror copies: per axis the separation is min(|dx|, side - |dx|).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass
class Topology:
    """AP/UE drop on one square. Positions are (n, 2) arrays in metres."""

    side: float
    ap_positions: np.ndarray
    ue_positions: np.ndarray
    ap_height: float = 10.0  # m above UE plane

    @property
    def n_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def n_ues(self) -> int:
        return self.ue_positions.shape[0]


def place_network(n_aps, n_ues, side=1000.0, ap_height=10.0, seed=None):
    """Drop ``n_aps`` APs and ``n_ues`` UEs i.i.d. uniformly on the square."""
    if side <= 0:
        raise ConfigError(f"side must be positive, got {side}")
    if n_aps < 1 or n_ues < 1:
        raise ConfigError(f"need at least one AP and one UE, got L={n_aps}, U={n_ues}")
    if ap_height < 0:
        raise ConfigError(f"ap_height must be non-negative, got {ap_height}")
    rng = np.random.default_rng(seed)
    ap = rng.uniform(0.0, side, size=(int(n_aps), 2))
    ue = rng.uniform(0.0, side, size=(int(n_ues), 2))
    return Topology(side=float(side), ap_positions=ap, ue_positions=ue,
                    ap_height=float(ap_height))


def wrap_distance(a, b, side):
    """Toroidal distance between points (last axis = x, y). Broadcasts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    delta = np.abs(a - b) % side
    delta = np.minimum(delta, side - delta)
    return np.sqrt((delta ** 2).sum(axis=-1))


def wrap_distance_matrix(points_a, points_b, side):
    """All-pairs toroidal distances, shape (len(a), len(b))."""
    pa = np.asarray(points_a, dtype=float)[:, None, :]
    pb = np.asarray(points_b, dtype=float)[None, :, :]
    return wrap_distance(pa, pb, side)


def distance_3d(ap, ue, topo: Topology):
    """AP-to-UE distance including the AP mounting height."""
    horizontal = wrap_distance(ap, ue, topo.side)
    return np.sqrt(horizontal ** 2 + topo.ap_height ** 2)


def ap_ue_horizontal(topo: Topology):
    """(L, U) matrix of horizontal (2-D) wrap distances."""
    return wrap_distance_matrix(topo.ap_positions, topo.ue_positions, topo.side)


def ap_ue_3d(topo: Topology):
    """(L, U) matrix of 3-D distances (height folded in)."""
    return np.sqrt(ap_ue_horizontal(topo) ** 2 + topo.ap_height ** 2)
