"""uamsim: urban aerial mobility RL simulator.

A deterministic city-flight environment, a self-contained PPO trainer with a
hand-rolled actor-critic MLP, SVG/OBJ visualization emitters, and a TCP
protocol server so external trainers can drive environment batches remotely.
"""

__version__ = "0.1.0"

from .env import (EnvConfig, RewardBreakdown, Termination, UamEnv, UamState,
                  check_termination, compute_reward, observe, obs_dim, reset, step)
from .errors import (ConfigError, EmptyInput, FrameTooLarge, GenerationFailed,
                     NumericalDivergence, ParseError, ProtocolError, ShapeError)
from .geometry import BuildingBox, box_distance, point_in_box, vec3, wrap_angle
from .policy import PolicyParams, forward, init_params, sample_action
from .ppo import PpoHyper, RolloutBuffer, compute_gae, ppo_update, rollout
from .train import (TrainMetrics, TrainingArtifacts, evaluate_policy,
                    load_checkpoint, run_policy_episode, save_checkpoint, train)
from .trajectory import TrajectoryRecord, read_trajectory, write_trajectory
from .viz import export_scene, render_reward_curve, render_topdown
from .world import GenConfig, World, generate_world, load_world, save_world
