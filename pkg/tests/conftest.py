import numpy as np
import pytest

from risdmimo.harness import ExperimentConfig, build_drop_specs, make_scenario
from risdmimo.channel import PhaseOffsets, generate_channels, zero_phase_configs
from risdmimo.seeding import rng_for, SMALL_SCALE, PHASE_OFFSETS
from risdmimo.signal_model import EffectiveConstants, PowerAllocation


def small_config(**overrides):
    base = {
        "n_aps": 4, "n_ues": 12, "n_ris_panels": 3, "active_fraction": 0.25,
        "drops": 2, "master_seed": 42,
        "channel": {"n_ris_elements": 16},
        "sweep": {"p_t_dbm": [20.0]},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in base:
            base[key].update(val)
        else:
            base[key] = val
    return ExperimentConfig.from_dict(base)


def build_small_drop(config=None, drop_index=0, mode="C"):
    """Scenario + channels + offsets for one small drop."""
    cfg = config or small_config()
    spec = [s for s in build_drop_specs(cfg) if s.drop_index == drop_index][0]
    scenario, chan, ls_au, ls_ar, ls_ru = make_scenario(spec)
    seed = (cfg.master_seed, drop_index)
    channels = generate_channels(scenario, chan, ls_au, ls_ar, ls_ru,
                                 rng_for(seed, SMALL_SCALE))
    ka = scenario.n_active
    if mode == "NC":
        offsets = PhaseOffsets.random(cfg.n_aps, ka, rng_for(seed, PHASE_OFFSETS))
    else:
        offsets = PhaseOffsets.zeros(cfg.n_aps, ka)
    ris_configs = zero_phase_configs(scenario.n_ris_panels,
                                     chan.n_ris_elements)
    return cfg, scenario, channels, offsets, ris_configs


def random_constants(rng, n_active, noise_var=1.0, scale=1.0):
    """Synthetic effective constants with the required structure."""
    def crand(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    d1 = crand(n_active, n_active)
    d2 = crand(n_active, n_active)
    np.fill_diagonal(d1, 0.0)
    np.fill_diagonal(d2, 0.0)
    return EffectiveConstants(
        c1=crand(n_active), c2=crand(n_active), d1=d1, d2=d2,
        noise_var=np.full(n_active, noise_var))


def two_ap_allocation(n_active, p=1.0, rng=None):
    """Allocation on a ring of APs: UE k served by APs (k, k+1)."""
    ap_index = np.column_stack([np.arange(n_active),
                                (np.arange(n_active) + 1) % max(n_active, 2)])
    if n_active == 1:
        ap_index = np.array([[0, 1]])
    if rng is None:
        powers = np.full((n_active, 2), float(p))
    else:
        powers = rng.uniform(0.0, p, size=(n_active, 2))
    return PowerAllocation(p=powers, ap_index=ap_index)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
