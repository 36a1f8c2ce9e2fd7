"""schedlab: a desk-scale laboratory for delay-constrained scheduling.

Discrete-time simulators (single-hop and multi-hop) of deadline-indexed
queues under a shared resource budget, classical baselines with exact
oracles, a Lagrangian dual loop, and a from-scratch recurrent actor-critic
learner, all reproducible from integer seeds.
"""

from .agent import (AgentConfig, DecomposedAdapter, Episode, EpisodeReplay,
                    JointAdapter, MultihopAdapter, Rsd4Agent, adapt,
                    bellman_targets, noise_log_density, sd3_like_config,
                    softmax_weighted_value, td3_like_config)
from .autodiff import (Adam, Dense, LSTMCell, Tensor, load_checkpoint, nan_guard,
                       no_grad, parameter, save_checkpoint, soft_update)
from .baselines import (StaticProblem, cap_earliest, cap_scale, edf,
                        expected_throughput, expenditure, static_program,
                        uniform)
from .decomposition import (DecomposedEnv, SubSample, decompose_step,
                            sub_obs_dim, sub_observation, unify)
from .dp import (DpConfig, DpSolution, TinyMdp, build_mdp, dp_optimal,
                 enumerate_policies, policy_gain, relative_value_iteration)
from .dual import (DualRecord, DualResult, InnerSolution, dual_gradient,
                   dual_update, solve_constrained)
from .env import (DynamicsPhase, ObservabilityMask, SingleHopEnv, StepOutcome,
                  SwitchSchedule, UserSpec, apply_hidden_period, apply_switch,
                  build_observation)
from .errors import (AllocationError, ConfigError, DivergenceError,
                     StateCapError, TraceFormatError)
from .harness import (PRESETS, ExperimentConfig, build_environment,
                      config_from_dict, ingest_trace, load_config,
                      multihop_preset, run_experiment, fourusers_preset,
                      tiny_preset)
from .multihop import FlowSpec, MultiHopEnv, MultiHopOutcome, NodeBudget
from .service import success_probability
from .sources import (BernoulliArrivals, MarkovChannel, PoissonArrivals,
                      TraceArrivals, TraceChannel, read_trace, write_trace)

__version__ = "0.1.0"
