"""Alternating optimization of transmit powers and RIS phases for global EE.

Power allocation runs a double majorization: a quadratic-transform
auxiliary turns each SINR into a concave surrogate, a second ratio
auxiliary linearizes the rate/power fraction, and the resulting concave
problem is solved in the square-root power variables by projected gradient
ascent.  RIS phases use the closed-form per-element alignment with a
common-phase correction toward the first AP's direct path.

Every accepted step is safeguarded against decreasing the true EE, which
keeps the reported trace nondecreasing even where the surrogate chain
alone would not guarantee it.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import signal_model as sm
from .channel import RisConfig
from .power import pa_power, global_ee
from .signal_model import PowerAllocation, build_constants, build_precoders

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)
_SEQ_FLOOR = 1e-12      # gradient guard near a vanishing surrogate rate


class InfeasibleConstraintsError(ValueError):
    """Raised when the SINR floors cannot be met at the current iterate."""


@dataclass
class SolverSettings:
    """Iteration limits, tolerances and solver switches."""

    inner_iters: int = 5            # max MM iterations per power stage
    outer_iters: int = 5            # max alternating iterations
    epsilon: float = 1e-3           # relative EE improvement stop (outer)
    inner_tol: float = 1e-4         # relative EE improvement stop (inner MM)
    gamma_min: float = 0.0          # linear SINR floor(s), scalar or per UE
    p_max_w: float = 1.0            # per-AP cap(s), scalar or per AP
    # "root_of_sum" applies the scalar quadratic transform to the full
    # rate/power ratio and provably ascends the EE; "sum_of_roots" uses
    # per-UE root terms instead (fairness-tilted fixed points)
    ratio_transform: str = "root_of_sum"
    pga_max_iters: int = 40
    pga_step_tol: float = 1e-7
    pga_obj_tol: float = 1e-7       # relative objective stall exit
    armijo_c: float = 1e-4
    ris_tol: float = 1e-6
    ris_max_sweeps: int = 50
    optimize_powers: bool = True
    optimize_ris: bool = True
    interference_ris: str = "victim"
    # single-UE support restarts counter the transform's inability to
    # revive a silenced UE; combinatorial, so only for small user counts
    solo_restart_limit: int = 4

    def __post_init__(self):
        if self.inner_iters < 1 or self.outer_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.ratio_transform not in ("sum_of_roots", "root_of_sum"):
            raise ValueError("unknown ratio_transform")


@dataclass
class EvalContext:
    """Quantities the EE objective needs besides the SINR constants."""

    bandwidth_hz: float = 20e6
    eta_pa: float = 0.4
    p_static_w: float = 1.0
    noise_var_w: float = 1e-13


@dataclass
class MmState:
    """State of the MM power loop at its current expansion point."""

    iteration: int
    allocation: PowerAllocation
    y: np.ndarray = None
    nu: float = 0.0
    surrogate_value: float = np.nan
    ee_trace: list = field(default_factory=list)


def true_ee(allocation, constants, ctx):
    """Global EE of an allocation under the current effective constants."""
    rate = sm.sum_se(allocation, constants)
    p_tot = ctx.p_static_w + pa_power(allocation, ctx.eta_pa)
    return global_ee(rate, ctx.bandwidth_hz, p_tot)


# ---------------------------------------------------------------------------
# MM auxiliaries
# ---------------------------------------------------------------------------

def mm_auxiliary_y(allocation, constants):
    """Quadratic-transform auxiliary y_k = sqrt(A_k) / B_k.

    This is the value that makes the surrogate touch the true SE at the
    expansion point (2 y sqrt(A) - y^2 B == A/B).
    """
    a = sm.desired_power(allocation.p[:, 0], allocation.p[:, 1], constants)
    b = sm.interference_power(allocation, constants)
    return np.sqrt(a) / b


def surrogate_se(allocation, y, constants):
    """Per-UE concave SE surrogate log2(1 + 2 y sqrt(A) - y^2 B).

    A nonpositive argument means the expansion point was left too far
    behind; it is clamped to the domain boundary and logged.
    """
    a = sm.desired_power(allocation.p[:, 0], allocation.p[:, 1], constants)
    b = sm.interference_power(allocation, constants)
    arg = 1.0 + 2.0 * y * np.sqrt(a) - y * y * b
    bad = arg <= 0.0
    if np.any(bad):
        logger.warning("surrogate_se: clamping %d nonpositive argument(s); "
                       "solver step left the trust region", int(np.sum(bad)))
        arg = np.where(bad, np.finfo(float).tiny, arg)
    return np.log2(arg)


def mm_ratio_nu(surrogate_ses, bandwidth_hz, p_total_w):
    """Ratio auxiliary: sum of per-UE root rates over the total power."""
    if p_total_w <= 0:
        raise ValueError("total power must be positive")
    seq = np.asarray(surrogate_ses, dtype=float)
    if np.any(seq < 0):
        raise ValueError("surrogate SEs must be nonnegative")
    return float(np.sum(np.sqrt(bandwidth_hz * seq)) / p_total_w)


def _numerator(seq, bandwidth_hz, transform):
    if transform == "root_of_sum":
        return np.sqrt(bandwidth_hz * np.sum(seq))
    return np.sum(np.sqrt(bandwidth_hz * seq))


# ---------------------------------------------------------------------------
# concave surrogate subproblem (square-root power variables)
# ---------------------------------------------------------------------------

class _Surrogate:
    """Objective/gradient/projection bundle for one expansion point."""

    def __init__(self, state, constants, settings, ctx):
        alloc = state.allocation
        self.constants = constants
        self.ctx = ctx
        self.settings = settings
        self.y = state.y
        self.nu = state.nu
        self.ap_index = alloc.ap_index
        self.ap_flat = self.ap_index.ravel()
        self.n_aps = int(self.ap_index.max()) + 1
        self.caps = np.broadcast_to(
            np.asarray(settings.p_max_w, dtype=float), (self.n_aps,))
        ka = constants.n_active
        self.gamma_min = np.broadcast_to(
            np.asarray(settings.gamma_min, dtype=float), (ka,))
        self.has_floors = bool(np.any(self.gamma_min > 0))
        self.u0 = np.sqrt(alloc.p)

        # supporting hyperplane of sqrt(A) = |u1 c1 + u2 c2| at u0
        l0 = self.u0[:, 0] * constants.c1 + self.u0[:, 1] * constants.c2
        abs_l0 = np.abs(l0)
        self.active = (self.y > 0) & (abs_l0 > 0)
        safe = np.where(abs_l0 > 0, abs_l0, 1.0)
        self.alpha = np.zeros((ka, 2))
        self.alpha[:, 0] = np.real(np.conj(l0) * constants.c1) / safe
        self.alpha[:, 1] = np.real(np.conj(l0) * constants.c2) / safe
        self.alpha[~self.active] = 0.0

        # hot-loop precomputation
        self.yy = self.y * self.y
        self.ta = 2.0 * self.y[:, None] * self.alpha          # (Ka, 2)
        self.bw = ctx.bandwidth_hz
        self.inv_eta = 1.0 / ctx.eta_pa
        self.nu_sq = self.nu ** 2
        self.root_of_sum = settings.ratio_transform == "root_of_sum"

    # -- pieces -------------------------------------------------------------
    def _g_of(self, u):
        c = self.constants
        u1 = u[:, 0]
        u2 = u[:, 1]
        b = ((u1 * u1) @ c.cint1 + (u2 * u2) @ c.cint2
             + (u1 * u2) @ c.cint3 + c.noise_var)
        return 1.0 + self.ta[:, 0] * u1 + self.ta[:, 1] * u2 - self.yy * b

    def objective(self, u, barrier_mu=0.0):
        g = self._g_of(u)
        con = g - 1.0 - self.gamma_min
        # tolerance absorbs roundoff at g ~ 1 when a UE's power underflows
        if con.min() < -1e-9 * (1.0 + float(np.max(self.gamma_min))):
            return -np.inf
        seq = np.log2(np.maximum(g, 1.0))
        if self.root_of_sum:
            num = np.sqrt(self.bw * seq.sum())
        else:
            num = np.sqrt(self.bw * seq).sum()
        p_tot = self.ctx.p_static_w + np.sum(u * u) * self.inv_eta
        val = 2.0 * self.nu * num - self.nu_sq * p_tot
        if barrier_mu > 0.0 and self.has_floors:
            floor_con = con[self.gamma_min > 0]
            if floor_con.min() <= 0.0:
                return -np.inf
            val += barrier_mu * np.sum(np.log(floor_con))
        return float(val)

    def gradient(self, u, barrier_mu=0.0):
        g = self._g_of(u)
        seq = np.maximum(np.log2(g), _SEQ_FLOOR)
        if self.root_of_sum:
            root = np.sqrt(self.bw * np.sum(np.where(self.active, seq, 0.0)))
            c = self.nu * self.bw / (max(root, _SEQ_FLOOR) * LN2) / g
        else:
            c = self.nu * np.sqrt(self.bw / seq) / (LN2 * g)
        c = np.where(self.active, c, 0.0)
        if barrier_mu > 0.0 and self.has_floors:
            con = g - 1.0 - self.gamma_min
            c = c + np.where(self.gamma_min > 0,
                             barrier_mu / np.maximum(con, 1e-30), 0.0)

        w = c * self.yy
        cc = self.constants
        t1 = cc.cint1 @ w
        t2 = cc.cint2 @ w
        t3 = cc.cint3 @ w
        u1 = u[:, 0]
        u2 = u[:, 1]
        down = 2.0 * self.nu_sq * self.inv_eta
        grad = np.empty_like(u)
        grad[:, 0] = self.ta[:, 0] * c - (2.0 * u1 * t1 + u2 * t3) - down * u1
        grad[:, 1] = self.ta[:, 1] * c - (2.0 * u2 * t2 + u1 * t3) - down * u2
        return grad

    def project(self, u):
        """Exact projection onto {u >= 0, per-AP sum of squares <= cap}."""
        v = np.maximum(u, 0.0)
        totals = np.bincount(self.ap_flat, weights=(v * v).ravel(),
                             minlength=self.n_aps)
        scale = np.sqrt(self.caps / np.maximum(totals, self.caps))
        return v * scale[self.ap_index]

    # -- spectral projected gradient ascent -----------------------------------
    def maximize(self, barrier_mu=0.0):
        """SPG with Barzilai-Borwein steps and a nonmonotone line search."""
        st = self.settings
        u = self.project(self.u0)
        f = self.objective(u, barrier_mu)
        if not np.isfinite(f):
            raise InfeasibleConstraintsError(
                "SINR floors are violated at the expansion point")
        gr = self.gradient(u, barrier_mu)
        gnorm = np.sqrt(np.sum(gr * gr))
        step_bb = (np.sqrt(np.sum(u * u)) + 1e-6) / (gnorm + 1e-12)
        window = [f]
        u_best, f_best = u, f
        for _ in range(st.pga_max_iters):
            d = self.project(u + step_bb * gr) - u
            dnorm = np.sqrt(np.sum(d * d))
            if dnorm < st.pga_step_tol * max(1.0, np.sqrt(np.sum(u * u))):
                break
            gd = np.sum(gr * d)
            if gd <= 0.0:
                break
            f_ref = min(window[-8:])
            t = 1.0
            fn = -np.inf
            for _ in range(30):
                un = u + t * d                  # convex set: stays feasible
                fn = self.objective(un, barrier_mu)
                if np.isfinite(fn) and fn >= f_ref + st.armijo_c * t * gd:
                    break
                t *= 0.5
            else:
                break
            gn = self.gradient(un, barrier_mu)
            s = un - u
            y = gr - gn                         # curvature of the concave objective
            sy = np.sum(s * y)
            step_bb = np.clip(np.sum(s * s) / sy, 1e-10, 1e10) if sy > 0 \
                else step_bb * 2.0
            u, f, gr = un, fn, gn
            window.append(f)
            if f > f_best:
                u_best, f_best = u, f
            if len(window) > 10 and (f_best - window[-11]) <= \
                    st.pga_obj_tol * max(abs(f_best), 1e-30):
                break
        # the nonmonotone search can end below the running best; keep the best
        return u_best, f_best


def solve_surrogate(state, constants, settings, ctx):
    """Maximize the concave EE surrogate around the expansion point.

    Returns a feasible PowerAllocation; ``state.surrogate_value`` is
    updated with the attained surrogate objective.  SINR floors, when
    positive, are handled by a decreasing log-barrier sequence.
    """
    if state.nu <= 0.0:
        # no UE carries surrogate rate: any power only burns PA watts
        alloc = PowerAllocation(p=np.zeros_like(state.allocation.p),
                                ap_index=state.allocation.ap_index)
        state.surrogate_value = 0.0
        return alloc

    prob = _Surrogate(state, constants, settings, ctx)
    if np.any(prob.gamma_min > 0):
        u, f = prob.u0, None
        mu = 1e-2 * max(1.0, abs(prob.objective(prob.u0)))
        for _ in range(3):
            prob.u0 = u
            u, _ = prob.maximize(barrier_mu=mu)
            mu *= 0.1
        f = prob.objective(u)
    else:
        u, f = prob.maximize()
    state.surrogate_value = float(f)
    return PowerAllocation(p=u * u, ap_index=state.allocation.ap_index)


def active_ap_caps(allocation, p_max_w, n_aps, rtol=1e-6):
    """Indices of APs whose power cap is tight at this allocation."""
    totals = allocation.per_ap_totals(n_aps)
    caps = np.broadcast_to(np.asarray(p_max_w, dtype=float), (n_aps,))
    return [int(n) for n in range(n_aps)
            if totals[n] >= caps[n] * (1.0 - rtol)]


# ---------------------------------------------------------------------------
# MM power loop
# ---------------------------------------------------------------------------

def optimize_power(constants, settings, ctx, init):
    """Run the MM power allocation from a feasible starting allocation.

    Each iteration recomputes the auxiliaries at the current point, solves
    the concave surrogate and accepts the step only if the true EE does
    not decrease, so the recorded trace is nondecreasing.
    """
    alloc = init.copy()
    ee = true_ee(alloc, constants, ctx)
    state = MmState(iteration=0, allocation=alloc, ee_trace=[ee])
    for t in range(settings.inner_iters):
        a = sm.desired_power(alloc.p[:, 0], alloc.p[:, 1], constants)
        b = sm.interference_power(alloc, constants)
        state.y = np.sqrt(a) / b
        seq_here = np.log2(1.0 + a / b)        # tight surrogate == true SE
        p_tot = ctx.p_static_w + pa_power(alloc, ctx.eta_pa)
        num = _numerator(seq_here, ctx.bandwidth_hz, settings.ratio_transform)
        state.nu = float(num / p_tot)
        state.allocation = alloc

        candidate = solve_surrogate(state, constants, settings, ctx)
        state.iteration = t + 1
        ee_new = true_ee(candidate, constants, ctx)
        if ee_new < ee:
            break                              # safeguard: keep current point
        gain = (ee_new - ee) / max(ee, np.finfo(float).tiny)
        alloc, ee = candidate, ee_new
        state.allocation = alloc
        state.ee_trace.append(ee)
        if gain < settings.inner_tol:
            break

    # expose the auxiliaries at the returned allocation (fixed-point view)
    state.allocation = alloc
    state.y = mm_auxiliary_y(alloc, constants)
    a = sm.desired_power(alloc.p[:, 0], alloc.p[:, 1], constants)
    b = sm.interference_power(alloc, constants)
    p_tot = ctx.p_static_w + pa_power(alloc, ctx.eta_pa)
    state.nu = float(_numerator(np.log2(1.0 + a / b), ctx.bandwidth_hz,
                                settings.ratio_transform) / p_tot)
    return state


def optimize_power_multistart(constants, settings, ctx, init):
    """MM power loop from the given start plus single-UE support starts.

    The quadratic transform cannot lift a UE off zero power, so the plain
    loop inherits the support of its initialization; trying each solo
    pattern (UE k alone at full per-AP budget) and keeping the best final
    EE escapes wrong on/off basins on small instances.
    """
    best = optimize_power(constants, settings, ctx, init)
    ka = constants.n_active
    floors = np.any(np.asarray(settings.gamma_min, dtype=float) > 0)
    if ka > settings.solo_restart_limit or floors:
        # solo supports silence other UEs, incompatible with SINR floors
        return best
    n_aps = int(init.ap_index.max()) + 1
    caps = np.broadcast_to(np.asarray(settings.p_max_w, dtype=float), (n_aps,))
    for k in range(ka):
        p = np.zeros_like(init.p)
        p[k] = caps[init.ap_index[k]]
        solo = PowerAllocation(p=p, ap_index=init.ap_index)
        state = optimize_power(constants, settings, ctx, solo)
        if state.ee_trace[-1] > best.ee_trace[-1]:
            best = state
    return best


# ---------------------------------------------------------------------------
# RIS phase stage
# ---------------------------------------------------------------------------

def optimize_ris_phases(k, scenario, channels, ris_configs, precoders,
                        allocation, settings):
    """Closed-form per-element phase update for UE k's serving panel.

    Elements co-phase the cascaded contributions of the combined two-AP
    incident signal and rotate onto the first AP's direct path.  The sweep
    repeats until the received-power metric stops changing.
    """
    m = scenario.ris_assoc[k]
    n1, n2 = scenario.clusters[k]
    q1, q2 = precoders.q[k, 0], precoders.q[k, 1]
    g = channels.g_ris_ue[m, k]
    h = channels.h_ap_ris
    r = channels.r_ap_ue
    phases = ris_configs[m].phases.copy()
    p1, p2 = allocation.p[k, 0], allocation.p[k, 1]

    direct1 = r[n1, k] @ q1
    correction = np.angle(direct1) if np.abs(direct1) > 0 else 0.0
    prx_prev = None
    config = RisConfig(phases)
    for _ in range(settings.ris_max_sweeps):
        h_inc = h[n1, m] @ q1 + h[n2, m] @ q2
        cascade = np.conj(g) * h_inc
        config = RisConfig(-np.angle(cascade) + correction)

        w = np.conj(g) * config.coefficients()
        prx = (p1 * (np.abs(r[n1, k] @ q1) ** 2 + np.abs(w @ h[n1, m] @ q1) ** 2)
               + p2 * (np.abs(r[n2, k] @ q2) ** 2 + np.abs(w @ h[n2, m] @ q2) ** 2))
        if prx_prev is not None and abs(prx - prx_prev) <= settings.ris_tol * max(abs(prx_prev), 1e-30):
            break
        prx_prev = prx
    return config


# ---------------------------------------------------------------------------
# outer alternating loop
# ---------------------------------------------------------------------------

@dataclass
class OptimizationResult:
    """Converged state of one alternating-optimization run."""

    allocation: PowerAllocation
    ris_configs: list
    precoders: object
    constants: object
    sinr: np.ndarray
    per_ue_se: np.ndarray
    sum_se: float
    ee: float
    ee_trace: list
    outer_iterations: int
    n_power_stages: int
    n_ris_stages: int
    trace: list


def alternate(scenario, channels, offsets, mode, ris_configs, settings, ctx,
              init_allocation=None):
    """Alternate MM power allocation and per-UE RIS phase updates.

    Stops when the relative EE improvement drops below ``settings.epsilon``
    or the outer iteration budget is exhausted.  A stage that would lower
    the EE is rolled back, so the trace is nondecreasing.
    """
    ka = scenario.n_active
    ris_active = (settings.optimize_ris and ris_configs is not None
                  and len(ris_configs) > 0 and len(scenario.ris_assoc) == ka)

    precoders = build_precoders(scenario, channels, ris_configs or [])
    constants = build_constants(scenario, channels, ris_configs or [], offsets,
                                precoders, mode, ctx.noise_var_w,
                                settings.interference_ris)
    if init_allocation is None:
        alloc = PowerAllocation.equal_power(scenario, settings.p_max_w)
    else:
        alloc = init_allocation.copy()

    gamma_min = np.broadcast_to(np.asarray(settings.gamma_min, dtype=float), (ka,))
    if np.any(gamma_min > 0):
        g0 = sm.sinr(alloc, constants)
        if np.any(g0 < gamma_min * (1.0 - 1e-9)):
            raise InfeasibleConstraintsError(
                "initial allocation violates the SINR floors")

    ee = true_ee(alloc, constants, ctx)
    ee_trace = [ee]
    trace = []
    n_power = n_ris = 0
    outer_done = 0

    for outer in range(1, settings.outer_iters + 1):
        outer_done = outer
        if settings.optimize_powers:
            power_solver = optimize_power_multistart if outer == 1 \
                else optimize_power
            mm = power_solver(constants, settings, ctx, alloc)
            alloc = mm.allocation
            ee_p = mm.ee_trace[-1]
            n_power += 1
            trace.append({"outer": outer, "stage": "power",
                          "inner_iterations": mm.iteration,
                          "surrogate_value": mm.surrogate_value,
                          "true_ee": ee_p,
                          "cap_residual": _cap_residual(alloc, settings, scenario.n_aps)})
        else:
            ee_p = true_ee(alloc, constants, ctx)

        if ris_active:
            # per-UE updates with immediate recalculation; an update that
            # lowers the EE (e.g. on a panel shared by several UEs) is
            # rolled back so the stage is monotone
            ee_stage = ee_p
            accepted = 0
            for k in range(ka):
                m = scenario.ris_assoc[k]
                old_cfg = ris_configs[m]
                ris_configs[m] = optimize_ris_phases(
                    k, scenario, channels, ris_configs, precoders, alloc,
                    settings)
                precoders_new = build_precoders(scenario, channels, ris_configs)
                constants_new = build_constants(
                    scenario, channels, ris_configs, offsets, precoders_new,
                    mode, ctx.noise_var_w, settings.interference_ris)
                ee_k = true_ee(alloc, constants_new, ctx)
                if ee_k >= ee_stage:
                    precoders, constants = precoders_new, constants_new
                    ee_stage = ee_k
                    accepted += 1
                else:
                    ris_configs[m] = old_cfg
            n_ris += 1
            ee_new = ee_stage
            trace.append({"outer": outer, "stage": "ris", "true_ee": ee_new,
                          "accepted_updates": accepted})
        else:
            ee_new = ee_p

        gain = (ee_new - ee) / max(ee, np.finfo(float).tiny)
        ee = ee_new
        ee_trace.append(ee)
        if gain < settings.epsilon:
            break

    gamma = sm.sinr(alloc, constants)
    se = np.log2(1.0 + gamma)
    return OptimizationResult(
        allocation=alloc, ris_configs=ris_configs, precoders=precoders,
        constants=constants, sinr=gamma, per_ue_se=se, sum_se=float(np.sum(se)),
        ee=ee, ee_trace=ee_trace, outer_iterations=outer_done,
        n_power_stages=n_power, n_ris_stages=n_ris, trace=trace)


def _cap_residual(alloc, settings, n_aps):
    totals = alloc.per_ap_totals(n_aps)
    caps = np.broadcast_to(np.asarray(settings.p_max_w, dtype=float), (n_aps,))
    return float(np.max(totals - caps))
