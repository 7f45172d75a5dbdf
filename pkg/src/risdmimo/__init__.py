"""RIS-assisted distributed-MIMO energy-efficiency simulator and optimizer."""

from .scenario import (AreaSpec, ScenarioInstance, InfeasibleScenarioError,
                       place_aps, place_ues, place_ris, select_active,
                       cluster_aps, associate_ris)
from .channel import (ChannelParams, ChannelSet, LinkLargeScale, PhaseOffsets,
                      RisConfig, effective_channel, generate_channels,
                      los_probability, pathloss_db, rician_channel,
                      steering_vector)
from .signal_model import (EffectiveConstants, PowerAllocation, PrecoderSet,
                           build_constants, build_precoders, desired_power,
                           effective_scalar, interference_power, mrt_precoder,
                           sinr, sum_se)
from .power import (PowerBreakdown, PowerModelParams, global_ee, pa_power,
                    ris_power, static_power)
from .optimizer import (EvalContext, InfeasibleConstraintsError, MmState,
                        OptimizationResult, SolverSettings, alternate,
                        mm_auxiliary_y, mm_ratio_nu, optimize_power,
                        optimize_power_multistart, optimize_ris_phases,
                        solve_surrogate, surrogate_se)
from .harness import (DropSpec, ExperimentConfig, SweepAxes, emit_plot_data,
                      run_drop, run_sweep)

__version__ = "0.1.0"
