"""Zone-of-influence DQN traffic signal control on a point-queue simulator."""
from ._accel import BACKEND

__version__ = "0.1.0"
