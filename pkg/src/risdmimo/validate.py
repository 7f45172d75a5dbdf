"""Fast built-in invariant suite behind the ``validate`` CLI subcommand.

Each check is a small self-contained probe of a core contract; the full
regression suite lives in the pytest tree.
"""

import numpy as np

from . import harness, power
from .channel import los_probability, pathloss_db, steering_vector


def _check_power_model():
    params = power.PowerModelParams()
    br = power.static_power(9, 4, 10, 10, 256, params)
    ok = (abs(br.p_trxc - 9.1) < 1e-6 and abs(br.p_fix_total - 7.875) < 1e-6
          and abs(br.p_ris - 7.35232) < 1e-6)
    per = power.ris_power(10, 256, params, "per_ris", 4.8)
    ok = ok and abs(per - 50.55232) < 1e-6
    return ok, f"trxc={br.p_trxc:.6f} fix={br.p_fix_total:.6f} ris={br.p_ris:.6f}"


def _check_pathloss():
    v1 = pathloss_db(10.0, 4.0, True)
    v2 = pathloss_db(50.0, 4.0, False)
    ok = abs(v1 - 61.7412) < 5e-3 and abs(v2 - 97.3618) < 5e-3
    ok = ok and abs(los_probability(20.0) - np.exp(-15.0 / 70.8)) < 1e-12
    return ok, f"LOS(10m)={v1:.4f} dB, NLOS(50m)={v2:.4f} dB"


def _check_steering():
    a = steering_vector(0.7, 16)
    return abs(np.linalg.norm(a) - 1.0) < 1e-12, "unit norm"


def _check_mm_tightness():
    rng = np.random.default_rng(7)
    a = rng.uniform(0.01, 10.0, size=1000)
    b = rng.uniform(0.01, 10.0, size=1000)
    y = np.sqrt(a) / b
    lhs = 2.0 * y * np.sqrt(a) - y * y * b
    err = np.max(np.abs(lhs - a / b))
    return err < 1e-12, f"max tightness error {err:.2e}"


def _check_minorization():
    rng = np.random.default_rng(8)
    a = rng.uniform(0.01, 10.0, size=1000)
    b = rng.uniform(0.01, 10.0, size=1000)
    y = rng.uniform(0.0, 5.0, size=1000)
    gap = a / b - (2.0 * y * np.sqrt(a) - y * y * b)
    return np.min(gap) > -1e-12, f"min gap {np.min(gap):.2e}"


def _check_ris_alignment():
    rng = np.random.default_rng(9)
    n = 16
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    direct = complex(rng.standard_normal() + 1j * rng.standard_normal())
    phases = -np.angle(np.conj(g) * h) + np.angle(direct)
    total = direct + np.sum(np.conj(g) * np.exp(1j * phases) * h)
    bound = np.abs(direct) + np.sum(np.abs(g) * np.abs(h))
    err = abs(abs(total) - bound)
    return err < 1e-9, f"triangle equality error {err:.2e}"


def _check_nris_scaling():
    powers = []
    for n in (4, 16, 64):
        g = np.ones(n, dtype=complex)
        h = 1j * np.ones(n, dtype=complex)
        phases = -np.angle(np.conj(g) * h)
        powers.append(abs(np.sum(np.conj(g) * np.exp(1j * phases) * h)) ** 2)
    r1 = powers[1] / powers[0]
    r2 = powers[2] / powers[0]
    ok = abs(r1 - 16.0) < 1e-6 and abs(r2 - 256.0) < 1e-6
    return ok, f"ratios {r1:.6f}, {r2:.6f}"


def _small_config():
    cfg = harness.ExperimentConfig.from_dict({
        "n_aps": 4, "n_ues": 12, "n_ris_panels": 3, "active_fraction": 0.25,
        "drops": 2, "master_seed": 99,
        "channel": {"n_ris_elements": 16},
        "sweep": {"p_t_dbm": [20.0]},
    })
    return cfg


def _check_drop_determinism():
    cfg = _small_config()
    spec = harness.build_drop_specs(cfg)[0]
    r1 = harness.run_drop(spec)
    r2 = harness.run_drop(spec)
    return r1 == r2, "two runs identical" if r1 == r2 else "rows differ"


def _check_monotone_trace():
    cfg = _small_config()
    worst = 0.0
    for spec in harness.build_drop_specs(cfg):
        row = harness.run_drop(spec)
        trace = np.asarray(row["ee_trace"])
        if len(trace) > 1:
            rel = np.min(np.diff(trace) / np.maximum(trace[:-1], 1e-30))
            worst = min(worst, rel)
    return worst >= -1e-9, f"worst relative step {worst:.2e}"


CHECKS = [
    ("power-model arithmetic", _check_power_model),
    ("pathloss / LoS probability", _check_pathloss),
    ("steering normalization", _check_steering),
    ("MM tightness", _check_mm_tightness),
    ("MM minorization", _check_minorization),
    ("RIS phase alignment", _check_ris_alignment),
    ("N_RIS^2 scaling", _check_nris_scaling),
    ("drop determinism", _check_drop_determinism),
    ("monotone EE trace", _check_monotone_trace),
]


def run_all(verbose=True):
    """Run every check; returns (n_failed, list of result tuples)."""
    results = []
    failed = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as err:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        results.append((name, ok, detail))
        failed += 0 if ok else 1
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return failed, results
