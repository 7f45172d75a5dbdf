"""Indoor-hotspot channel generation.

Large-scale gains follow the 3GPP indoor-office pathloss, LoS-probability
and shadowing curves; small-scale fading is Rician with geometry-derived
ULA steering for the line-of-sight component.  The LoS outer product uses
unit-modulus entries so that beta is the per-entry mean power gain.
"""

from dataclasses import dataclass
import logging

import numpy as np


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# large-scale model
# ---------------------------------------------------------------------------

def pathloss_db(d3d_m, fc_ghz, los):
    """InH-office pathloss in dB; distances below 1 m are clamped (logged)."""
    d = np.asarray(d3d_m, dtype=float)
    if np.any(d < 1.0):
        logger.debug("pathloss_db: clamping %d distance(s) below 1 m",
                     int(np.sum(d < 1.0)))
        d = np.maximum(d, 1.0)
    pl_los = 32.4 + 17.3 * np.log10(d) + 20.0 * np.log10(fc_ghz)
    if np.all(los):
        return pl_los if pl_los.shape else float(pl_los)
    pl_nlos = 17.3 + 38.3 * np.log10(d) + 24.9 * np.log10(fc_ghz)
    out = np.where(los, pl_los, np.maximum(pl_los, pl_nlos))
    return out if out.shape else float(out)


def los_probability(d2d_m):
    """InH LoS probability: certain up to 5 m, then two exponential tails."""
    d = np.asarray(d2d_m, dtype=float)
    if np.any(d < 0):
        raise ValueError("2D distance must be nonnegative")
    p = np.where(
        d <= 5.0, 1.0,
        np.where(d <= 49.0,
                 np.exp(-(d - 5.0) / 70.8),
                 0.54 * np.exp(-(d - 49.0) / 211.7)))
    return p if p.shape else float(p)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


@dataclass
class LinkLargeScale:
    """Large-scale state of a single link (linear beta includes shadowing)."""

    beta: float
    kappa: float
    is_los: bool
    pathloss_db: float
    shadowing_db: float


def draw_large_scale(d3d_m, d2d_m, fc_ghz, g_tx_db, g_rx_db, kappa_los_db,
                     shadow_los_db, shadow_nlos_db, rng, force_nlos=False):
    """Draw LoS flags, shadowing and composite gains for an array of links.

    All distance inputs share one shape; returns dict of same-shape arrays
    (beta, kappa, is_los, pl_db, sh_db).  Draw order: LoS flags first, then
    shadowing, so shapes alone fix the stream layout.  ``force_nlos``
    models blocked links; the LoS uniforms are still consumed so the
    stream layout does not depend on the flag.
    """
    d3d = np.asarray(d3d_m, dtype=float)
    d2d = np.asarray(d2d_m, dtype=float)
    p_los = 0.0 if force_nlos else los_probability(d2d)
    is_los = rng.uniform(size=d3d.shape) < p_los
    sh_sigma = np.where(is_los, shadow_los_db, shadow_nlos_db)
    sh_db = rng.standard_normal(size=d3d.shape) * sh_sigma
    pl_db = pathloss_db(d3d, fc_ghz, is_los)
    beta = db_to_linear(g_tx_db + g_rx_db - (pl_db + sh_db))
    kappa = np.where(is_los, db_to_linear(kappa_los_db), 0.0)
    return {"beta": beta, "kappa": kappa, "is_los": is_los,
            "pl_db": pl_db + sh_db, "sh_db": sh_db}


def link_large_scale(d3d_m, d2d_m, fc_ghz, g_tx_db, g_rx_db, kappa_los_db,
                     shadow_los_db, shadow_nlos_db, rng):
    """Single-link convenience wrapper returning a LinkLargeScale."""
    d = draw_large_scale(np.asarray([d3d_m]), np.asarray([d2d_m]), fc_ghz,
                         g_tx_db, g_rx_db, kappa_los_db, shadow_los_db,
                         shadow_nlos_db, rng)
    return LinkLargeScale(beta=float(d["beta"][0]), kappa=float(d["kappa"][0]),
                          is_los=bool(d["is_los"][0]),
                          pathloss_db=float(d["pl_db"][0]),
                          shadowing_db=float(d["sh_db"][0]))


# ---------------------------------------------------------------------------
# small-scale model
# ---------------------------------------------------------------------------

def steering_vector(theta, n_elements):
    """Unit-norm ULA steering vector, half-wavelength spacing."""
    if n_elements < 1:
        raise ValueError("steering vector needs at least one element")
    idx = np.arange(n_elements)
    return np.exp(1j * np.pi * idx * np.sin(theta)) / np.sqrt(n_elements)


def _unit_steering(theta, n_elements):
    # unit-modulus entries (no 1/sqrt(N)); theta may be an array
    idx = np.arange(n_elements)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(theta), idx))


def complex_gaussian(shape, rng):
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rician_channel(ls, theta_r, theta_t, n_r, n_t, seed):
    """Draw one Nr x Nt Rician channel matrix.

    The LoS component is the outer product of unit-modulus steering
    responses so every entry has mean power ls.beta.  ``seed`` may be an
    int or a numpy Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a_r = _unit_steering(theta_r, n_r).reshape(n_r)
    a_t = _unit_steering(theta_t, n_t).reshape(n_t)
    los = np.outer(a_r, np.conj(a_t))
    w = complex_gaussian((n_r, n_t), rng)
    k = ls.kappa
    return np.sqrt(ls.beta) * (np.sqrt(k / (k + 1.0)) * los
                               + np.sqrt(1.0 / (k + 1.0)) * w)


# ---------------------------------------------------------------------------
# per-drop channel state
# ---------------------------------------------------------------------------

@dataclass
class ChannelParams:
    """Carrier, Rician, shadowing and antenna-gain configuration.

    ``direct_los`` sets how AP-UE links get their LoS state: "blocked"
    treats every direct link as NLoS (high-blockage deployment, the
    regime RIS panels are deployed for), "tr38901" applies the indoor
    LoS-probability curve instead.  RIS hops always use the curve.
    """

    fc_ghz: float = 4.0
    n_ap_antennas: int = 4
    n_ris_elements: int = 256
    kappa_los_db: float = 5.0
    shadow_los_db: float = 3.0
    shadow_nlos_db: float = 8.03
    g_tx_db: float = 5.0
    g_rx_db: float = 2.0
    g_ris_db: float = 4.0
    direct_los: str = "blocked"

    def __post_init__(self):
        if self.direct_los not in ("blocked", "tr38901"):
            raise ValueError("direct_los must be 'blocked' or 'tr38901'")


@dataclass
class RisConfig:
    """Per-element phase state of one RIS panel."""

    phases: np.ndarray  # (N_RIS,), radians

    def __post_init__(self):
        self.phases = np.mod(np.asarray(self.phases, dtype=float), 2.0 * np.pi)

    def coefficients(self):
        return np.exp(1j * self.phases)


def zero_phase_configs(n_panels, n_elements):
    return [RisConfig(np.zeros(n_elements)) for _ in range(n_panels)]


def random_phase_configs(n_panels, n_elements, rng):
    return [RisConfig(rng.uniform(0.0, 2.0 * np.pi, size=n_elements))
            for _ in range(n_panels)]


@dataclass
class PhaseOffsets:
    """Per-(AP, UE) oscillator offsets; all zero under coherent reception."""

    delta: np.ndarray  # (L, K_act), radians

    @classmethod
    def zeros(cls, n_aps, n_active):
        return cls(np.zeros((n_aps, n_active)))

    @classmethod
    def random(cls, n_aps, n_active, rng):
        return cls(rng.uniform(0.0, 2.0 * np.pi, size=(n_aps, n_active)))


def _azimuth(src, dst):
    """Horizontal-plane angle of the src->dst direction; arrays broadcast."""
    d = dst[..., :2] - src[..., :2]
    return np.arctan2(d[..., 1], d[..., 0])


def _dist(src, dst):
    d3 = np.linalg.norm(dst - src, axis=-1)
    d2 = np.linalg.norm(dst[..., :2] - src[..., :2], axis=-1)
    return d3, d2


@dataclass
class ChannelSet:
    """All channel matrices and large-scale state for one realization.

    Shapes: r_ap_ue (L, Ka, N_AP) rows; h_ap_ris (L, M, N_RIS, N_AP);
    g_ris_ue (M, Ka, N_RIS) columns, used as g^H in the reflected path.
    """

    r_ap_ue: np.ndarray
    h_ap_ris: np.ndarray
    g_ris_ue: np.ndarray
    ls_ap_ue: dict
    ls_ap_ris: dict
    ls_ris_ue: dict
    n_ap_antennas: int
    n_ris_elements: int

    def save_npz(self, path):
        np.savez_compressed(
            path, r_ap_ue=self.r_ap_ue, h_ap_ris=self.h_ap_ris,
            g_ris_ue=self.g_ris_ue,
            beta_ap_ue=self.ls_ap_ue["beta"], beta_ap_ris=self.ls_ap_ris["beta"],
            beta_ris_ue=self.ls_ris_ue["beta"],
            n_ap_antennas=self.n_ap_antennas,
            n_ris_elements=self.n_ris_elements)

    @classmethod
    def load_npz(cls, path):
        z = np.load(path)
        return cls(
            r_ap_ue=z["r_ap_ue"], h_ap_ris=z["h_ap_ris"], g_ris_ue=z["g_ris_ue"],
            ls_ap_ue={"beta": z["beta_ap_ue"]},
            ls_ap_ris={"beta": z["beta_ap_ris"]},
            ls_ris_ue={"beta": z["beta_ris_ue"]},
            n_ap_antennas=int(z["n_ap_antennas"]),
            n_ris_elements=int(z["n_ris_elements"]))


def large_scale_ap_ue(ap_pos, ue_pos, params, rng):
    """Large-scale state for every (AP, UE) pair; arrays shaped (L, K)."""
    d3, d2 = _dist(ap_pos[:, None, :], ue_pos[None, :, :])
    return draw_large_scale(d3, d2, params.fc_ghz, params.g_tx_db,
                            params.g_rx_db, params.kappa_los_db,
                            params.shadow_los_db, params.shadow_nlos_db, rng,
                            force_nlos=params.direct_los == "blocked")


def large_scale_ap_ris(ap_pos, ris_pos, params, rng):
    d3, d2 = _dist(ap_pos[:, None, :], ris_pos[None, :, :])
    return draw_large_scale(d3, d2, params.fc_ghz, params.g_tx_db,
                            params.g_ris_db, params.kappa_los_db,
                            params.shadow_los_db, params.shadow_nlos_db, rng)


def large_scale_ris_ue(ris_pos, ue_pos, params, rng):
    d3, d2 = _dist(ris_pos[:, None, :], ue_pos[None, :, :])
    return draw_large_scale(d3, d2, params.fc_ghz, params.g_ris_db,
                            params.g_rx_db, params.kappa_los_db,
                            params.shadow_los_db, params.shadow_nlos_db, rng)


def cascade_gains(ls_ap_ris, ls_ris_ue, clusters):
    """Per-(UE, RIS) association metric beta_AP1->RIS * beta_RIS->UE."""
    beta_ar = ls_ap_ris["beta"]            # (L, M)
    beta_ru = ls_ris_ue["beta"]            # (M, Ka)
    n_act = beta_ru.shape[1]
    out = np.empty((n_act, beta_ar.shape[1]))
    for k in range(n_act):
        n1 = clusters[k][0]                # UE's strongest AP
        out[k] = beta_ar[n1] * beta_ru[:, k]
    return out


def _rician_family(beta, kappa, los, w):
    """Compose sqrt(beta) (sqrt(k/(k+1)) LoS + sqrt(1/(k+1)) W) elementwise."""
    b = np.sqrt(beta)[..., None, None] if w.ndim == beta.ndim + 2 \
        else np.sqrt(beta)[..., None]
    k = kappa[..., None, None] if w.ndim == beta.ndim + 2 else kappa[..., None]
    return b * (np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * w)


def generate_channels(scenario, params, ls_ap_ue, ls_ap_ris, ls_ris_ue, rng):
    """Small-scale realization for every link family of one drop."""
    ap = scenario.ap_positions
    ue = scenario.active_positions()
    ris = scenario.ris_positions
    n_ap, n_el = params.n_ap_antennas, params.n_ris_elements
    L, ka, m = ap.shape[0], ue.shape[0], ris.shape[0]

    # direct AP->UE rows: LoS part conj(steering at the AP toward the UE)
    theta_au = _azimuth(ap[:, None, :], ue[None, :, :])        # (L, Ka)
    los_r = np.conj(_unit_steering(theta_au, n_ap))            # (L, Ka, N_AP)
    w_r = complex_gaussian((L, ka, n_ap), rng)
    r_ap_ue = _rician_family(ls_ap_ue["beta"], ls_ap_ue["kappa"], los_r, w_r)

    if m > 0:
        theta_ar_tx = _azimuth(ap[:, None, :], ris[None, :, :])    # AoD at AP
        theta_ar_rx = _azimuth(ris[None, :, :], ap[:, None, :])    # AoA at RIS
        a_rx = _unit_steering(theta_ar_rx, n_el)                   # (L, M, N_RIS)
        a_tx = _unit_steering(theta_ar_tx, n_ap)                   # (L, M, N_AP)
        los_h = a_rx[..., :, None] * np.conj(a_tx)[..., None, :]   # (L, M, N_RIS, N_AP)
        w_h = complex_gaussian((L, m, n_el, n_ap), rng)
        h_ap_ris = _rician_family(ls_ap_ris["beta"], ls_ap_ris["kappa"], los_h, w_h)

        theta_ru = _azimuth(ris[:, None, :], ue[None, :, :])       # (M, Ka)
        los_g = _unit_steering(theta_ru, n_el)                     # (M, Ka, N_RIS)
        w_g = complex_gaussian((m, ka, n_el), rng)
        g_ris_ue = _rician_family(ls_ris_ue["beta"], ls_ris_ue["kappa"], los_g, w_g)
    else:
        h_ap_ris = np.zeros((L, 0, n_el, n_ap), dtype=complex)
        g_ris_ue = np.zeros((0, ka, n_el), dtype=complex)

    return ChannelSet(r_ap_ue=r_ap_ue, h_ap_ris=h_ap_ris, g_ris_ue=g_ris_ue,
                      ls_ap_ue=ls_ap_ue, ls_ap_ris=ls_ap_ris,
                      ls_ris_ue=ls_ris_ue, n_ap_antennas=n_ap,
                      n_ris_elements=n_el)


def effective_channel(k, n, m, channels, ris, offsets, mode):
    """Composite AP->UE row: RIS-reflected path plus direct path.

    ``m`` is the serving RIS index (None for a RIS-free link); ``ris`` its
    phase config.  In non-coherent mode the row is rotated by the (AP, UE)
    oscillator offset.
    """
    row = channels.r_ap_ue[n, k]
    if m is not None:
        g = channels.g_ris_ue[m, k]
        h = channels.h_ap_ris[n, m]
        if g.shape[0] != h.shape[0]:
            raise ValueError("RIS-UE vector and AP-RIS matrix disagree on N_RIS")
        row = (np.conj(g) * ris.coefficients()) @ h + row
    if mode == "NC":
        row = row * np.exp(1j * offsets.delta[n, k])
    elif mode != "C":
        raise ValueError(f"unknown reception mode {mode!r}")
    return row


def effective_rows(k, aps, m, channels, ris):
    """Offset-free effective rows for UE k across several APs at once."""
    rows = channels.r_ap_ue[aps, k].copy()
    if m is not None:
        w = np.conj(channels.g_ris_ue[m, k]) * ris.coefficients()
        rows += np.einsum("i,nij->nj", w, channels.h_ap_ris[aps, m])
    return rows
