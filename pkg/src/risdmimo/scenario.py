"""Deployment geometry and associations for one Monte Carlo drop.

APs sit on a regular grid, UEs and RIS panels are dropped uniformly at
random, each active UE is served by its two strongest APs (subject to a
per-AP scheduling capacity) and assisted by the RIS with the strongest
cascaded large-scale gain.
"""

from dataclasses import dataclass, field, asdict
import json

import numpy as np

from .seeding import rng_for, UE_POSITIONS, RIS_POSITIONS, ACTIVE_SELECT


class InfeasibleScenarioError(ValueError):
    """Raised when UE clustering cannot satisfy the per-AP capacity."""


@dataclass(frozen=True)
class AreaSpec:
    """Rectangular indoor deployment area with per-node mounting heights."""

    width_m: float = 300.0
    depth_m: float = 150.0
    ap_height_m: float = 3.0
    ue_height_m: float = 1.0
    ris_height_m: float = 2.0

    def __post_init__(self):
        for name in ("width_m", "depth_m", "ap_height_m", "ue_height_m", "ris_height_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"AreaSpec.{name} must be strictly positive")


def grid_shape(n_aps, aspect_ratio):
    """Pick the factor pair (nx, ny) of n_aps closest to the area aspect ratio.

    Closeness is measured in log space; ties go to the smaller nx.
    """
    if n_aps < 1:
        raise ValueError("grid needs at least one AP")
    best = None
    for nx in range(1, n_aps + 1):
        if n_aps % nx:
            continue
        ny = n_aps // nx
        score = abs(np.log(nx / ny) - np.log(aspect_ratio))
        if best is None or score < best[0] - 1e-12:
            best = (score, nx, ny)
    return best[1], best[2]


def place_aps(area, n_aps, grid=None):
    """AP grid positions: spacing (Dx, Dy), first point offset (Dx/2, Dy/2).

    ``grid`` optionally forces an (nx, ny) layout; it must factor n_aps.
    Returns an (n_aps, 3) array ordered row-major (y outer, x inner).
    """
    if n_aps < 1:
        raise ValueError("n_aps must be >= 1")
    if grid is None:
        nx, ny = grid_shape(n_aps, area.width_m / area.depth_m)
    else:
        nx, ny = grid
        if nx * ny != n_aps:
            raise ValueError(
                f"requested grid {nx}x{ny} does not hold {n_aps} APs")
    dx = area.width_m / nx
    dy = area.depth_m / ny
    xs = dx / 2 + dx * np.arange(nx)
    ys = dy / 2 + dy * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    pos = np.column_stack([gx.ravel(), gy.ravel(),
                           np.full(n_aps, area.ap_height_m)])
    return pos


def _uniform_points(area, count, height, rng):
    xy = rng.uniform([0.0, 0.0], [area.width_m, area.depth_m], size=(count, 2))
    return np.column_stack([xy, np.full(count, height)])


def place_ues(area, n_ues, seed):
    """Binomial point process: exactly n_ues i.i.d. uniform points."""
    if n_ues < 1:
        raise ValueError("n_ues must be >= 1")
    rng = rng_for(seed, UE_POSITIONS)
    return _uniform_points(area, n_ues, area.ue_height_m, rng)


def place_ris(area, n_ris_panels, seed):
    """RIS panels dropped uniformly, independent of the AP grid."""
    rng = rng_for(seed, RIS_POSITIONS)
    return _uniform_points(area, n_ris_panels, area.ris_height_m, rng)


def select_active(n_ues, fraction, seed):
    """Uniformly sample ceil(fraction * n_ues) distinct UE indices (sorted)."""
    if not 0 < fraction <= 1:
        raise ValueError("active fraction must lie in (0, 1]")
    count = int(np.ceil(fraction * n_ues))
    rng = rng_for(seed, ACTIVE_SELECT)
    return np.sort(rng.choice(n_ues, size=count, replace=False))


def cluster_aps(large_scale_gains, n_slot):
    """Assign each UE its two strongest APs under per-AP capacity n_slot.

    ``large_scale_gains`` is (n_ue, n_ap).  UEs are processed in descending
    order of their best-AP gain; a saturated AP is skipped in favour of the
    next-strongest one.  Ties break toward the lower index.
    """
    gains = np.asarray(large_scale_gains, dtype=float)
    if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
        raise ValueError("large-scale gains must be finite and positive")
    n_ue, n_ap = gains.shape
    if 2 * n_ue > n_ap * n_slot:
        raise InfeasibleScenarioError(
            f"clustering infeasible: {n_ue} UEs need {2 * n_ue} AP slots, "
            f"capacity is {n_ap} APs x {n_slot} slots = {n_ap * n_slot}")

    order = sorted(range(n_ue), key=lambda k: (-gains[k].max(), k))
    remaining = np.full(n_ap, n_slot, dtype=int)
    clusters = {}
    for k in order:
        ranked = sorted(range(n_ap), key=lambda n: (-gains[k, n], n))
        picked = [n for n in ranked if remaining[n] > 0][:2]
        if len(picked) < 2:
            raise InfeasibleScenarioError(
                f"clustering infeasible: UE {k} cannot find two APs with "
                "free slots")
        n1, n2 = picked
        remaining[n1] -= 1
        remaining[n2] -= 1
        clusters[k] = (n1, n2)
    return clusters


def associate_ris(cascade_gains):
    """Per-UE argmax over the cascaded AP-RIS-UE large-scale metric."""
    gains = np.asarray(cascade_gains, dtype=float)
    if not np.all(np.isfinite(gains)) or np.any(gains < 0):
        raise ValueError("cascade gains must be finite and nonnegative")
    # np.argmax returns the first maximum -> ties break to the lowest index
    return {k: int(np.argmax(gains[k])) for k in range(gains.shape[0])}


@dataclass
class ScenarioInstance:
    """Placed nodes plus all per-drop associations."""

    area: AreaSpec
    ap_positions: np.ndarray          # (L, 3)
    ue_positions: np.ndarray          # (K, 3)
    ris_positions: np.ndarray         # (M, 3)
    active_ues: np.ndarray            # sorted global UE indices, len K_act
    clusters: list = field(default_factory=list)   # per active UE: (n1, n2)
    ris_assoc: list = field(default_factory=list)  # per active UE: RIS index
    n_slot: int = 4
    rng_seed: int = 0

    @property
    def n_aps(self):
        return self.ap_positions.shape[0]

    @property
    def n_ris_panels(self):
        return self.ris_positions.shape[0]

    @property
    def n_active(self):
        return len(self.active_ues)

    def active_positions(self):
        return self.ue_positions[self.active_ues]

    def serving_aps(self):
        """Sorted union of APs that serve at least one active UE."""
        return sorted({n for pair in self.clusters for n in pair})

    def ues_per_ap(self):
        """Map AP index -> list of active-local UE indices it serves."""
        served = {}
        for k, (n1, n2) in enumerate(self.clusters):
            served.setdefault(n1, []).append(k)
            served.setdefault(n2, []).append(k)
        return served

    def validate(self):
        for k, (n1, n2) in enumerate(self.clusters):
            if n1 == n2:
                raise ValueError(f"UE {k} cluster has duplicate AP {n1}")
        load = np.zeros(self.n_aps, dtype=int)
        for n1, n2 in self.clusters:
            load[n1] += 1
            load[n2] += 1
        if np.any(load > self.n_slot):
            raise ValueError("per-AP load exceeds n_slot")
        if self.n_ris_panels > 0:
            if len(self.ris_assoc) != self.n_active:
                raise ValueError("ris_assoc must cover every active UE")
            for m in self.ris_assoc:
                if not 0 <= m < self.n_ris_panels:
                    raise ValueError(f"RIS index {m} out of range")
        for pos in (self.ap_positions, self.ue_positions, self.ris_positions):
            if pos.size and (np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > self.area.width_m)
                             or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > self.area.depth_m)):
                raise ValueError("positions outside the deployment area")

    def to_dict(self):
        return {
            "area": asdict(self.area),
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "ris_positions": self.ris_positions.tolist(),
            "active_ues": [int(k) for k in self.active_ues],
            "clusters": [[int(n1), int(n2)] for n1, n2 in self.clusters],
            "ris_assoc": [int(m) for m in self.ris_assoc],
            "n_slot": int(self.n_slot),
            "rng_seed": int(self.rng_seed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            area=AreaSpec(**d["area"]),
            ap_positions=np.asarray(d["ap_positions"], dtype=float),
            ue_positions=np.asarray(d["ue_positions"], dtype=float),
            ris_positions=np.asarray(d["ris_positions"], dtype=float),
            active_ues=np.asarray(d["active_ues"], dtype=int),
            clusters=[tuple(pair) for pair in d["clusters"]],
            ris_assoc=list(d["ris_assoc"]),
            n_slot=d["n_slot"],
            rng_seed=d["rng_seed"],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))
