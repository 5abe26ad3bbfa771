"""Out-of-synchronisation analysis of ROHC U-mode over a Gilbert-Elliott channel.

Three Markov models (a detailed single-flow chain, a closed-form
simplified chain and a multi-flow extension), a packet-level simulator
and an experiment runner that ties them together.
"""

from .chain import NoConvergence, SparseChain, solve
from .channel import ChannelParams, averaged_matrix, from_eps_lb
from .model_closed import max_irt, min_w, p_oos_approx, p_oos_exact, solve_model2
from .model_full import build_model1, p_oos_model1
from .model_multiflow import MultiflowParams, p_oos_multiflow, pascal_survival
from .sim import ConfigError, HeaderSizeModel, RohcConfig, run_seeds, run_simulation
from .wlsb import WlsbParams, robustness_windows

__version__ = "0.1.0"
