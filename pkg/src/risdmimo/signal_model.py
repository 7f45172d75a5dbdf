"""Precoding, effective-channel constants and SINR/SE evaluation.

The per-UE desired power and the per-pair interference power are quadratic
forms in the square roots of the transmit powers; the complex effective
scalars behind them are kept so tests can cross-check both formulations.
"""

from dataclasses import dataclass

import numpy as np

from .channel import effective_channel, effective_rows


def mrt_precoder(h_eff):
    """Matched filter: conjugate transpose of the effective row, unit norm."""
    h = np.asarray(h_eff, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(h)
    if nrm == 0.0:
        raise ValueError("cannot build an MRT precoder for a zero channel")
    return np.conj(h) / nrm


@dataclass
class PrecoderSet:
    """Unit-norm precoders per (active UE, serving-AP slot)."""

    q: np.ndarray  # (K_act, 2, N_AP) complex


def build_precoders(scenario, channels, ris_configs):
    """MRT matched to the current offset-free effective channels.

    Oscillator offsets are excluded on purpose: they are unknown to the
    network, so precoding cannot adapt to them.
    """
    n_act = scenario.n_active
    q = np.zeros((n_act, 2, channels.n_ap_antennas), dtype=complex)
    for k in range(n_act):
        m = scenario.ris_assoc[k] if scenario.ris_assoc else None
        ris = ris_configs[m] if m is not None else None
        rows = effective_rows(k, list(scenario.clusters[k]), m, channels, ris)
        for t in range(2):
            q[k, t] = mrt_precoder(rows[t])
    return PrecoderSet(q=q)


def effective_scalar(k, t, scenario, channels, ris_configs, offsets,
                     precoders, mode):
    """Scalar channel seen by UE k from its t-th serving AP after precoding."""
    if t not in (0, 1):
        raise ValueError("t indexes the UE's two-AP cluster (0 or 1)")
    n = scenario.clusters[k][t]
    m = scenario.ris_assoc[k] if scenario.ris_assoc else None
    ris = ris_configs[m] if m is not None else None
    row = effective_channel(k, n, m, channels, ris, offsets, mode)
    return complex(row @ precoders.q[k, t])


@dataclass
class EffectiveConstants:
    """Desired / interference quadratic-form constants for all active UEs.

    c1, c2 are the complex per-UE desired scalars; d1[j, k], d2[j, k] the
    scalars of interferer j's two APs seen at UE k (diagonal zero).
    """

    c1: np.ndarray          # (Ka,) complex
    c2: np.ndarray          # (Ka,) complex
    d1: np.ndarray          # (Ka, Ka) complex
    d2: np.ndarray          # (Ka, Ka) complex
    noise_var: np.ndarray   # (Ka,) W

    def __post_init__(self):
        self.cdes1 = np.abs(self.c1) ** 2
        self.cdes2 = np.abs(self.c2) ** 2
        self.cdes3 = 2.0 * np.real(self.c1 * np.conj(self.c2))
        self.cint1 = np.abs(self.d1) ** 2
        self.cint2 = np.abs(self.d2) ** 2
        self.cint3 = 2.0 * np.real(self.d1 * np.conj(self.d2))

    @property
    def n_active(self):
        return self.c1.shape[0]


def build_constants(scenario, channels, ris_configs, offsets, precoders,
                    mode, noise_var_w, interference_ris="victim"):
    """Assemble the effective constants for the current RIS/precoder state.

    ``interference_ris`` selects which panel reflects an interfering AP's
    signal toward UE k: the victim's own panel ("victim", default) or the
    interferer's panel ("interferer").
    """
    n_act = scenario.n_active
    c1 = np.zeros(n_act, dtype=complex)
    c2 = np.zeros(n_act, dtype=complex)
    d1 = np.zeros((n_act, n_act), dtype=complex)
    d2 = np.zeros((n_act, n_act), dtype=complex)
    nc = mode == "NC"
    if interference_ris not in ("victim", "interferer"):
        raise ValueError(f"unknown interference_ris {interference_ris!r}")

    cluster_arr = np.asarray(scenario.clusters, dtype=int).reshape(n_act, 2)

    if interference_ris == "victim":
        # every path toward UE k reflects off m_k, so one row batch per UE
        serving = scenario.serving_aps()
        slot = {n: i for i, n in enumerate(serving)}
        sel = np.vectorize(slot.get)(cluster_arr)          # (Ka, 2)
        for k in range(n_act):
            m_k = scenario.ris_assoc[k] if scenario.ris_assoc else None
            ris = ris_configs[m_k] if m_k is not None else None
            rows = effective_rows(k, serving, m_k, channels, ris)
            if nc:
                rows = rows * np.exp(1j * offsets.delta[serving, k])[:, None]
            scal = np.sum(rows[sel] * precoders.q, axis=-1)  # (Ka, 2)
            c1[k], c2[k] = scal[k]
            d1[:, k], d2[:, k] = scal[:, 0], scal[:, 1]
        d1[np.diag_indices(n_act)] = 0.0
        d2[np.diag_indices(n_act)] = 0.0
    else:
        for k in range(n_act):
            m_k = scenario.ris_assoc[k] if scenario.ris_assoc else None
            for j in range(n_act):
                m = m_k if j == k else (
                    scenario.ris_assoc[j] if scenario.ris_assoc else None)
                ris = ris_configs[m] if m is not None else None
                aps = list(scenario.clusters[j])
                rows = effective_rows(k, aps, m, channels, ris)
                if nc:
                    rows = rows * np.exp(1j * offsets.delta[aps, k])[:, None]
                s1 = rows[0] @ precoders.q[j, 0]
                s2 = rows[1] @ precoders.q[j, 1]
                if j == k:
                    c1[k], c2[k] = s1, s2
                else:
                    d1[j, k], d2[j, k] = s1, s2

    nv = np.broadcast_to(np.asarray(noise_var_w, dtype=float), (n_act,)).copy()
    return EffectiveConstants(c1=c1, c2=c2, d1=d1, d2=d2, noise_var=nv)


@dataclass
class PowerAllocation:
    """Transmit powers per (active UE, serving-AP slot), watts.

    ``ap_index[k, t]`` is the AP that radiates ``p[k, t]``, so per-AP totals
    follow from a bincount.
    """

    p: np.ndarray         # (Ka, 2) nonnegative
    ap_index: np.ndarray  # (Ka, 2) int

    @classmethod
    def from_scenario(cls, scenario, p):
        ap_index = np.asarray(scenario.clusters, dtype=int).reshape(-1, 2)
        return cls(p=np.asarray(p, dtype=float), ap_index=ap_index)

    @classmethod
    def equal_power(cls, scenario, p_max_per_ap):
        """Each AP splits its budget equally among the UEs it serves."""
        ap_index = np.asarray(scenario.clusters, dtype=int).reshape(-1, 2)
        n_aps = scenario.n_aps
        p_max = np.broadcast_to(np.asarray(p_max_per_ap, dtype=float), (n_aps,))
        load = np.bincount(ap_index.ravel(), minlength=n_aps)
        p = np.zeros_like(ap_index, dtype=float)
        for t in range(2):
            idx = ap_index[:, t]
            p[:, t] = p_max[idx] / load[idx]
        return cls(p=p, ap_index=ap_index)

    def total(self):
        return float(np.sum(self.p))

    def per_ap_totals(self, n_aps):
        return np.bincount(self.ap_index.ravel(), weights=self.p.ravel(),
                           minlength=n_aps)

    def check_feasible(self, n_aps, p_max_per_ap, atol=1e-9):
        if np.any(self.p < -atol):
            raise ValueError("negative transmit power")
        totals = self.per_ap_totals(n_aps)
        caps = np.broadcast_to(np.asarray(p_max_per_ap, dtype=float), (n_aps,))
        if np.any(totals > caps + atol):
            raise ValueError("per-AP power cap violated")

    def copy(self):
        return PowerAllocation(p=self.p.copy(), ap_index=self.ap_index)


def desired_power(p1, p2, constants):
    """A_k for every UE; equals |sqrt(p1) c1 + sqrt(p2) c2|^2 elementwise."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    return (p1 * constants.cdes1 + p2 * constants.cdes2
            + np.sqrt(p1 * p2) * constants.cdes3)


def interference_power(allocation, constants):
    """B_k: interference from every other UE's cluster plus noise."""
    p1 = allocation.p[:, 0]
    p2 = allocation.p[:, 1]
    cross = np.sqrt(p1 * p2)
    return (p1 @ constants.cint1 + p2 @ constants.cint2
            + cross @ constants.cint3 + constants.noise_var)


def sinr(allocation, constants):
    """Per-UE SINR gamma_k = A_k / B_k."""
    a = desired_power(allocation.p[:, 0], allocation.p[:, 1], constants)
    b = interference_power(allocation, constants)
    return a / b


def per_ue_se(allocation, constants):
    return np.log2(1.0 + sinr(allocation, constants))


def sum_se(allocation, constants):
    """Network sum spectral efficiency in bps/Hz."""
    return float(np.sum(per_ue_se(allocation, constants)))
