"""Network power-consumption model and the global energy-efficiency metric."""

from dataclasses import dataclass

import numpy as np


@dataclass
class PowerModelParams:
    """Hardware power figures (defaults follow the simulation parameter set).

    ``eta_ap_c`` is the signal-processing computational efficiency in
    flops per joule (750 Gflops/W); bandwidth is needed because the
    baseband load scales with the sample rate.
    """

    eta_pa: float = 0.4
    p_fix_w: float = 0.875          # per AP
    p_lo_w: float = 0.1             # per AP
    p_ap_ant_w: float = 0.2         # per AP antenna
    p_ue_ant_w: float = 0.1         # per UE antenna
    p_bias_w: float = 0.997e-3      # per RIS element
    p_ris_ctrl_w: float = 4.8       # per controller
    eta_ap_c: float = 750e9         # flops/J
    controller_mode: str = "centralized"
    bandwidth_hz: float = 20e6

    def __post_init__(self):
        if not 0 < self.eta_pa <= 1:
            raise ValueError("eta_pa must lie in (0, 1]")
        for name in ("p_fix_w", "p_lo_w", "p_ap_ant_w", "p_ue_ant_w",
                     "p_bias_w", "p_ris_ctrl_w", "eta_ap_c", "bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"PowerModelParams.{name} must be positive")
        if self.controller_mode not in ("centralized", "per_ris"):
            raise ValueError("controller_mode must be 'centralized' or 'per_ris'")


@dataclass
class PowerBreakdown:
    """Additive decomposition of the network power draw, watts."""

    p_pa: float = 0.0
    p_trxc: float = 0.0
    p_fix_total: float = 0.0
    p_sp: float = 0.0
    p_ris: float = 0.0

    @property
    def p_static(self):
        return self.p_trxc + self.p_fix_total + self.p_sp + self.p_ris

    @property
    def p_total(self):
        return self.p_pa + self.p_static

    def to_dict(self):
        return {"p_pa": self.p_pa, "p_trxc": self.p_trxc,
                "p_fix_total": self.p_fix_total, "p_sp": self.p_sp,
                "p_ris": self.p_ris, "p_total": self.p_total}


def pa_power(allocation, eta_pa):
    """Total PA draw: allocated transmit power divided by the PA efficiency."""
    total = allocation.total() if hasattr(allocation, "total") \
        else float(np.sum(allocation))
    if total < 0:
        raise ValueError("allocated power must be nonnegative")
    return total / eta_pa


def ris_power(n_panels, n_elements, params, controller_mode=None,
              p_ris_ctrl_w=None):
    """Element biasing plus controller draw; one controller if centralized."""
    mode = controller_mode or params.controller_mode
    ctrl = params.p_ris_ctrl_w if p_ris_ctrl_w is None else p_ris_ctrl_w
    if n_panels == 0:
        return 0.0
    bias = n_panels * n_elements * params.p_bias_w
    return bias + (n_panels * ctrl if mode == "per_ris" else ctrl)


def static_power(n_aps, n_ap_antennas, n_active_ues, n_panels, n_elements,
                 params):
    """Static breakdown (PA excluded) for the given network size."""
    p_trxc = (n_aps * params.p_lo_w
              + n_aps * n_ap_antennas * params.p_ap_ant_w
              + n_active_ues * params.p_ue_ant_w)
    p_fix = n_aps * params.p_fix_w
    # 3 flops per complex MAC, one MAC per (AP antenna, served UE) per sample
    p_sp = (params.bandwidth_hz * 3.0 * n_aps * n_ap_antennas
            * n_active_ues / params.eta_ap_c)
    p_ris = ris_power(n_panels, n_elements, params)
    return PowerBreakdown(p_pa=0.0, p_trxc=p_trxc, p_fix_total=p_fix,
                          p_sp=p_sp, p_ris=p_ris)


def global_ee(sum_se_bps_hz, bandwidth_hz, p_total_w):
    """Global energy efficiency in bits per joule."""
    if p_total_w <= 0:
        raise ValueError("total power must be strictly positive")
    return bandwidth_hz * sum_se_bps_hz / p_total_w
