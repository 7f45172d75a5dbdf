"""Batch Monte Carlo harness.

Resolves a sweep configuration into per-drop runs, executes the full
scenario -> channel -> optimize -> evaluate pipeline with counter-based
seeding (axis points share drops, enabling paired comparisons), and
aggregates results into CSV/JSON tables plus plot-ready curve files.
"""

from dataclasses import dataclass, field, asdict
import concurrent.futures
import csv
import hashlib
import json
import math
import os

import numpy as np

from .scenario import (AreaSpec, ScenarioInstance, InfeasibleScenarioError,
                       place_aps, place_ues, place_ris, select_active,
                       cluster_aps, associate_ris)
from .channel import (ChannelParams, PhaseOffsets, cascade_gains,
                      generate_channels, large_scale_ap_ue, large_scale_ap_ris,
                      large_scale_ris_ue, random_phase_configs,
                      zero_phase_configs)
from .power import PowerModelParams, pa_power, ris_power, static_power, global_ee
from .optimizer import (EvalContext, InfeasibleConstraintsError,
                        SolverSettings, alternate)
from .seeding import rng_for, SMALL_SCALE, LARGE_SCALE, PHASE_OFFSETS, RIS_RANDOM_PHASES


@dataclass
class SweepAxes:
    """Cartesian experiment axes; every list must be nonempty."""

    p_t_dbm: list = field(default_factory=lambda: [30.0])
    modes: list = field(default_factory=lambda: ["C"])
    schemes: list = field(default_factory=lambda: ["OPA"])
    ris_modes: list = field(default_factory=lambda: ["opt"])
    controllers: list = field(default_factory=lambda: [
        {"mode": "centralized", "p_ris_ctrl_w": 4.8}])
    n_ris_list: list = None     # None -> [channel.n_ris_elements]
    l_list: list = None         # None -> [n_aps]

    def __post_init__(self):
        for name in ("p_t_dbm", "modes", "schemes", "ris_modes", "controllers"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} must be nonempty")
        if not all(math.isfinite(p) for p in self.p_t_dbm):
            raise ValueError("p_t_dbm values must be finite")


@dataclass
class ExperimentConfig:
    """Everything one sweep needs; defaults mirror the reference setup."""

    area: AreaSpec = field(default_factory=AreaSpec)
    n_aps: int = 9
    n_ues: int = 100
    n_ris_panels: int = 10
    n_slot: int = 4
    active_fraction: float = 0.1
    channel: ChannelParams = field(default_factory=ChannelParams)
    power: PowerModelParams = field(default_factory=PowerModelParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    sweep: SweepAxes = field(default_factory=SweepAxes)
    n0_dbm_hz: float = -174.0
    bandwidth_hz: float = 20e6
    drops: int = 200
    master_seed: int = 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kwargs = {}
        for key, sub in (("area", AreaSpec), ("channel", ChannelParams),
                         ("power", PowerModelParams), ("solver", SolverSettings),
                         ("sweep", SweepAxes)):
            if key in d:
                kwargs[key] = sub(**d.pop(key))
        kwargs.update(d)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def noise_variance_w(n0_dbm_hz, bandwidth_hz):
    return 10.0 ** ((n0_dbm_hz - 30.0) / 10.0) * bandwidth_hz


def dbm_to_w(p_dbm):
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


@dataclass
class DropSpec:
    """One fully resolved run: an axis point plus the drop identity."""

    config: ExperimentConfig
    n_aps: int
    n_ris_elements: int
    p_t_dbm: float
    mode: str
    scheme: str
    ris_mode: str
    drop_index: int


def make_scenario(spec):
    """Geometry, activity, clustering and RIS association for one drop."""
    cfg = spec.config
    area = cfg.area
    seed = (cfg.master_seed, spec.drop_index)
    ap_pos = place_aps(area, spec.n_aps)
    ue_pos = place_ues(area, cfg.n_ues, seed)
    active = select_active(cfg.n_ues, cfg.active_fraction, seed)
    m_panels = 0 if spec.ris_mode == "absent" else cfg.n_ris_panels
    ris_pos = place_ris(area, m_panels, seed)

    chan = ChannelParams(**{**asdict(cfg.channel),
                            "n_ris_elements": spec.n_ris_elements})
    ls_rng = rng_for(seed, LARGE_SCALE)
    ls_au = large_scale_ap_ue(ap_pos, ue_pos[active], chan, ls_rng)
    clusters_map = cluster_aps(ls_au["beta"].T, cfg.n_slot)
    clusters = [clusters_map[k] for k in range(len(active))]

    if m_panels > 0:
        ls_ar = large_scale_ap_ris(ap_pos, ris_pos, chan, ls_rng)
        ls_ru = large_scale_ris_ue(ris_pos, ue_pos[active], chan, ls_rng)
        assoc_map = associate_ris(cascade_gains(ls_ar, ls_ru, clusters))
        ris_assoc = [assoc_map[k] for k in range(len(active))]
    else:
        empty = {"beta": np.zeros((spec.n_aps, 0)), "kappa": np.zeros((spec.n_aps, 0))}
        ls_ar = empty
        ls_ru = {"beta": np.zeros((0, len(active))), "kappa": np.zeros((0, len(active)))}
        ris_assoc = []

    scenario = ScenarioInstance(
        area=area, ap_positions=ap_pos, ue_positions=ue_pos,
        ris_positions=ris_pos, active_ues=active, clusters=clusters,
        ris_assoc=ris_assoc, n_slot=cfg.n_slot, rng_seed=spec.drop_index)
    scenario.validate()
    return scenario, chan, ls_au, ls_ar, ls_ru


def run_drop(spec):
    """Execute one drop; returns a result row (flagged when infeasible)."""
    cfg = spec.config
    seed = (cfg.master_seed, spec.drop_index)
    row = {
        "drop_index": spec.drop_index,
        "n_aps": spec.n_aps,
        "n_ris": spec.n_ris_elements,
        "p_t_dbm": spec.p_t_dbm,
        "mode": spec.mode,
        "scheme": spec.scheme,
        "ris_mode": spec.ris_mode,
        "flag": None,
    }
    try:
        scenario, chan, ls_au, ls_ar, ls_ru = make_scenario(spec)
    except InfeasibleScenarioError as err:
        row["flag"] = f"infeasible_cluster: {err}"
        return row

    ka = scenario.n_active
    m_panels = scenario.n_ris_panels
    channels = generate_channels(scenario, chan, ls_au, ls_ar, ls_ru,
                                 rng_for(seed, SMALL_SCALE))
    if spec.mode == "NC":
        offsets = PhaseOffsets.random(spec.n_aps, ka, rng_for(seed, PHASE_OFFSETS))
    else:
        offsets = PhaseOffsets.zeros(spec.n_aps, ka)

    if spec.ris_mode == "opt":
        ris_configs = zero_phase_configs(m_panels, spec.n_ris_elements)
    elif spec.ris_mode == "random":
        ris_configs = random_phase_configs(m_panels, spec.n_ris_elements,
                                           rng_for(seed, RIS_RANDOM_PHASES))
    elif spec.ris_mode == "absent":
        ris_configs = []
    else:
        raise ValueError(f"unknown ris_mode {spec.ris_mode!r}")

    settings = SolverSettings(**{**asdict(cfg.solver),
                                 "p_max_w": dbm_to_w(spec.p_t_dbm),
                                 "optimize_powers": spec.scheme == "OPA",
                                 "optimize_ris": spec.ris_mode == "opt"})
    breakdown = static_power(spec.n_aps, chan.n_ap_antennas, ka, m_panels,
                             spec.n_ris_elements, cfg.power)
    ctx = EvalContext(
        bandwidth_hz=cfg.bandwidth_hz, eta_pa=cfg.power.eta_pa,
        p_static_w=breakdown.p_static,
        noise_var_w=noise_variance_w(cfg.n0_dbm_hz, cfg.bandwidth_hz))

    try:
        result = alternate(scenario, channels, offsets, spec.mode, ris_configs,
                           settings, ctx)
    except InfeasibleConstraintsError as err:
        row["flag"] = f"infeasible_sinr_floor: {err}"
        return row

    p_pa = pa_power(result.allocation, cfg.power.eta_pa)
    row.update({
        "n_active": ka,
        "m_panels": m_panels,
        "sum_se": result.sum_se,
        "ee": global_ee(result.sum_se, cfg.bandwidth_hz, breakdown.p_static + p_pa),
        "p_tx_w": result.allocation.total(),
        "p_pa_w": p_pa,
        "p_trxc_w": breakdown.p_trxc,
        "p_fix_w": breakdown.p_fix_total,
        "p_sp_w": breakdown.p_sp,
        "p_ris_w": breakdown.p_ris,
        "p_static_w": breakdown.p_static,
        "p_total_w": breakdown.p_static + p_pa,
        "sinr": [float(x) for x in result.sinr],
        "per_ue_se": [float(x) for x in result.per_ue_se],
        "ee_trace": [float(x) for x in result.ee_trace],
        "outer_iterations": result.outer_iterations,
    })
    return row


def controller_ee(row, controller_mode, p_ris_ctrl_w, power_params,
                  bandwidth_hz):
    """Per-drop EE re-denominated for a controller architecture.

    The numerator (sum SE) and the PA draw are shared with the base run;
    only the RIS controller share of static power changes.
    """
    p_nonris = row["p_trxc_w"] + row["p_fix_w"] + row["p_sp_w"]
    p_ris = ris_power(row["m_panels"], row["n_ris"], power_params,
                      controller_mode, p_ris_ctrl_w)
    return global_ee(row["sum_se"], bandwidth_hz,
                     p_nonris + p_ris + row["p_pa_w"])


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(arr))
    stderr = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, stderr


AXIS_COLUMNS = ("n_aps", "n_ris", "p_t_dbm", "mode", "scheme", "ris_mode")


def aggregate_rows(rows, config):
    """Reduce per-drop rows into one record per (axis point, controller)."""
    groups = {}
    for row in rows:
        key = tuple(row[c] for c in AXIS_COLUMNS)
        groups.setdefault(key, []).append(row)

    out = []
    for key in sorted(groups, key=lambda k: tuple(map(str, k))):
        bucket = groups[key]
        valid = [r for r in bucket if r["flag"] is None]
        for ctrl in config.sweep.controllers:
            rec = dict(zip(AXIS_COLUMNS, key))
            rec["controller_mode"] = ctrl["mode"]
            rec["p_ris_ctrl_w"] = ctrl["p_ris_ctrl_w"]
            rec["n_drops"] = len(valid)
            rec["n_flagged"] = len(bucket) - len(valid)
            if valid:
                ees = [controller_ee(r, ctrl["mode"], ctrl["p_ris_ctrl_w"],
                                     config.power, config.bandwidth_hz)
                       for r in valid]
                ses = [r["sum_se"] for r in valid]
                p_ris = ris_power(valid[0]["m_panels"], valid[0]["n_ris"],
                                  config.power, ctrl["mode"], ctrl["p_ris_ctrl_w"])
                p_totals = [r["p_trxc_w"] + r["p_fix_w"] + r["p_sp_w"]
                            + p_ris + r["p_pa_w"] for r in valid]
                rec["sum_se_mean"], rec["sum_se_stderr"] = _mean_stderr(ses)
                rec["ee_mean"], rec["ee_stderr"] = _mean_stderr(ees)
                rec["ee_ratio_of_means"] = global_ee(
                    float(np.mean(ses)), config.bandwidth_hz, float(np.mean(p_totals)))
                rec["p_total_mean_w"], _ = _mean_stderr(p_totals)
                rec["p_pa_mean_w"], _ = _mean_stderr([r["p_pa_w"] for r in valid])
            else:
                for c in ("sum_se_mean", "sum_se_stderr", "ee_mean", "ee_stderr",
                          "ee_ratio_of_means", "p_total_mean_w", "p_pa_mean_w"):
                    rec[c] = float("nan")
            out.append(rec)
    return out


def build_drop_specs(config):
    sweep = config.sweep
    n_ris_list = sweep.n_ris_list or [config.channel.n_ris_elements]
    l_list = sweep.l_list or [config.n_aps]
    specs = []
    for n_aps in l_list:
        for n_ris in n_ris_list:
            for p_t in sweep.p_t_dbm:
                for mode in sweep.modes:
                    for scheme in sweep.schemes:
                        for ris_mode in sweep.ris_modes:
                            for d in range(config.drops):
                                specs.append(DropSpec(
                                    config=config, n_aps=n_aps,
                                    n_ris_elements=n_ris, p_t_dbm=p_t,
                                    mode=mode, scheme=scheme,
                                    ris_mode=ris_mode, drop_index=d))
    return specs


def run_sweep(config, out_dir=None, workers=1):
    """Run the full Cartesian sweep; returns rows, aggregates and provenance.

    Results are independent of ``workers``: every drop derives its streams
    from (master_seed, drop_index) and rows are merged in spec order.
    """
    specs = build_drop_specs(config)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_drop, specs, chunksize=8))
    else:
        rows = [run_drop(s) for s in specs]

    aggregates = aggregate_rows(rows, config)
    result = {
        "config": config.to_dict(),
        "fingerprint": config.fingerprint(),
        "master_seed": config.master_seed,
        "rows": rows,
        "aggregates": aggregates,
    }
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


AGGREGATE_HEADER = list(AXIS_COLUMNS) + [
    "controller_mode", "p_ris_ctrl_w", "n_drops", "n_flagged",
    "sum_se_mean", "sum_se_stderr", "ee_mean", "ee_stderr",
    "ee_ratio_of_means", "p_total_mean_w", "p_pa_mean_w"]

DROP_HEADER = ["drop_index"] + list(AXIS_COLUMNS) + [
    "flag", "n_active", "m_panels", "sum_se", "ee", "p_tx_w", "p_pa_w",
    "p_static_w", "p_total_w", "outer_iterations"]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_outputs(result, out_dir):
    """Write aggregate.csv, drops.csv and results.json (all deterministic)."""
    os.makedirs(out_dir, exist_ok=True)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_HEADER)
        for rec in result["aggregates"]:
            writer.writerow([_fmt(rec.get(c)) for c in AGGREGATE_HEADER])

    drops_path = os.path.join(out_dir, "drops.csv")
    with open(drops_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DROP_HEADER)
        for row in result["rows"]:
            writer.writerow([_fmt(row.get(c)) for c in DROP_HEADER])

    json_path = os.path.join(out_dir, "results.json")
    with open(json_path, "w") as fh:
        json.dump(result, fh, sort_keys=True, indent=1)
    return [agg_path, drops_path, json_path]


# ---------------------------------------------------------------------------
# plot-ready exports
# ---------------------------------------------------------------------------

def _match(rec, selector):
    return all(rec.get(k) == v for k, v in selector.items())


def _primary_controller(recs, xkey):
    """One record per x: prefer centralized, then the cheapest controller."""
    best = {}
    for r in recs:
        rank = (r.get("controller_mode") != "centralized",
                r.get("p_ris_ctrl_w", 0.0))
        x = r[xkey]
        if x not in best or rank < best[x][0]:
            best[x] = (rank, r)
    return sorted((item[1] for item in best.values()), key=lambda r: r[xkey])


def _series_file(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


_FIG2_CURVES = [
    ("ris-absent_opa_c_L9", {"scheme": "OPA", "mode": "C", "ris_mode": "absent", "n_aps": 9}),
    ("ris-active_opa_c_L9", {"scheme": "OPA", "mode": "C", "ris_mode": "opt", "n_aps": 9}),
    ("ris-absent_opa_c_L18", {"scheme": "OPA", "mode": "C", "ris_mode": "absent", "n_aps": 18}),
    ("ris-active_opa_c_L18", {"scheme": "OPA", "mode": "C", "ris_mode": "opt", "n_aps": 18}),
    ("ris-absent_epa_nc_L9", {"scheme": "EPA", "mode": "NC", "ris_mode": "absent", "n_aps": 9}),
    ("ris-active_epa_nc_L9", {"scheme": "EPA", "mode": "NC", "ris_mode": "opt", "n_aps": 9}),
]

_FIG3_CURVES = [
    ("ris-rand_c", {"scheme": "OPA", "mode": "C", "ris_mode": "random"}),
    ("ris-rand_nc", {"scheme": "OPA", "mode": "NC", "ris_mode": "random"}),
    ("ris-opt_c", {"scheme": "OPA", "mode": "C", "ris_mode": "opt"}),
    ("ris-opt_nc", {"scheme": "OPA", "mode": "NC", "ris_mode": "opt"}),
]


def emit_plot_data(table, figure_id, out_dir):
    """Write per-curve (x, y, stderr) files for the requested figure."""
    if not table:
        raise ValueError("empty aggregate table")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    if figure_id in ("fig2", "fig2_sumse"):
        metric = "sum_se" if figure_id == "fig2_sumse" else "ee"
        for name, sel in _FIG2_CURVES:
            recs = _primary_controller([r for r in table if _match(r, sel)],
                                       "p_t_dbm")
            if not recs:
                continue
            rows = [(r["p_t_dbm"], r[f"{metric}_mean"], r[f"{metric}_stderr"])
                    for r in recs]
            paths.append(_series_file(out_dir, f"{figure_id}__{name}.csv",
                                      ["p_t_dbm", metric, "stderr"], rows))
    elif figure_id == "fig3":
        for name, sel in _FIG3_CURVES:
            recs = _primary_controller([r for r in table if _match(r, sel)],
                                       "p_t_dbm")
            if not recs:
                continue
            rows = [(r["sum_se_mean"], r["ee_mean"], r["ee_stderr"])
                    for r in recs]
            paths.append(_series_file(out_dir, f"fig3__{name}.csv",
                                      ["sum_se", "ee", "stderr"], rows))
    elif figure_id == "fig4":
        p_ts = sorted({r["p_t_dbm"] for r in table})
        p_ref = min(p_ts, key=lambda p: abs(p - 30.0))
        for mode in ("C", "NC"):
            recs = [r for r in table
                    if r["mode"] == mode and r["ris_mode"] == "opt"
                    and r["scheme"] == "OPA" and r["p_t_dbm"] == p_ref]
            recs = sorted(recs, key=lambda r: (r["controller_mode"] != "centralized",
                                               r["p_ris_ctrl_w"]))
            if not recs:
                continue
            rows = [(i + 1, r["ee_mean"], r["ee_stderr"],
                     f"{r['controller_mode']}_{r['p_ris_ctrl_w']}W")
                    for i, r in enumerate(recs)]
            paths.append(_series_file(out_dir, f"fig4__{mode.lower()}.csv",
                                      ["x", "ee", "stderr", "label"], rows))
    elif figure_id == "fig5":
        n_ris_values = sorted({r["n_ris"] for r in table})
        for n_ris in n_ris_values:
            for mode in ("C", "NC"):
                sel = {"n_ris": n_ris, "mode": mode, "ris_mode": "opt",
                       "scheme": "OPA"}
                recs = _primary_controller(
                    [r for r in table if _match(r, sel)], "p_t_dbm")
                if not recs:
                    continue
                rows = [(r["p_t_dbm"], r["ee_mean"], r["ee_stderr"])
                        for r in recs]
                paths.append(_series_file(
                    out_dir, f"fig5__nris{n_ris}_{mode.lower()}.csv",
                    ["p_t_dbm", "ee", "stderr"], rows))
    else:
        raise ValueError(f"unknown figure id {figure_id!r}")

    if not paths:
        raise ValueError(
            f"aggregate table lacks the axes required by {figure_id}")
    return paths
