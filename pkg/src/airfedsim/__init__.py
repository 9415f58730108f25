"""airfedsim: deterministic over-the-air federated SGD simulator.

Subpackages cover the feed-forward trainer with per-sample gradients (``nn``),
sample streams (``data``), adaptive sensing control with importance
resampling (``sensing``), the fading multiple-access channel and power
schedules (``aircomp``), latency/energy accounting (``budget``), the round
orchestrator (``loop``), analytic bound diagnostics (``bounds``), metric
series and CSV emission (``metrics``), and the command line (``cli``).
"""

__version__ = "0.1.0"

from .nn import BACKEND  # noqa: F401  (which gradient kernel is active)
