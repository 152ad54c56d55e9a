"""Call centre routing toolkit: discrete-event simulator, MDP planner,
policy-gradient trainer, and a seed-matched evaluation harness."""

from .config import InquiryType, SimConfig, load_config, save_config
from .domain import (
    EpisodeMetrics,
    ObsState,
    decode_state,
    encode_state,
    n_obs_states,
    staff_mean_service,
)
from .engine import CallCentreEngine, Event, EventQueue
from .env import CallCentreEnv, StepResult
from .errors import (
    CallRouteError,
    ConfigError,
    ConvergenceError,
    EpisodeFinished,
    EpisodeNotFinished,
    InvalidActionError,
    InvalidParameterError,
    InvalidStateError,
    PolicyFileError,
    SchedulingError,
    TrainingDiverged,
)
from .evaluate import AggregateReport, compare, evaluate
from .mdp import (
    MdpModel,
    TheoreticalState,
    build_model,
    event_rates,
    mixed_abandon_rate,
    reward_theoretical,
    shared_penalty,
)
from .policies import (
    Policy,
    RandomPolicy,
    SoftmaxPolicy,
    TabularPolicy,
    entropy,
    load_policy,
    save_policy,
    softmax_probs,
)
from .ppo import PpoConfig, PpoTrainer, compute_gae, curve_summary, train
from .rng import RngStream, derive_stream, exponential_from_uniform
from .solvers import ValueIterationSolver, extract_policy, value_iteration

__version__ = "0.1.0"
