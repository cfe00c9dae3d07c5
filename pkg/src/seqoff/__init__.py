"""Energy-optimal offloading of sequential tasks to an edge server.

Modules:

* ``core``     task/system types and the energy and time primitives
* ``channel``  gain distributions, quadrature and seeded sampling
* ``slow``     exact solver when the gain is constant over the task
* ``fastdp``   offline value tables when the gain changes every block
* ``policy``   online stopping policy, Monte-Carlo evaluation, baselines
* ``ergodic``  water-filling limit for very short blocks
* ``oracle``   brute-force references for testing
* ``cli``      the ``seqoff`` command
"""

from .channel import Discrete, Exponential
from .core import InfeasibleError, SystemParams, TaskProfile

__version__ = "0.1.0"

__all__ = ["Discrete", "Exponential", "InfeasibleError", "SystemParams", "TaskProfile", "__version__"]
