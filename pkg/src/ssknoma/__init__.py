"""SSK-NOMA downlink link-level simulator and closed-form analysis library."""

__version__ = "0.1.0"

from .channel import FadingProfile, SnrConfig, default_profile  # noqa: F401
from .constellation import (  # noqa: F401
    PowerAllocation,
    ScAlphabet,
    UserConstellation,
    enumerate_sc_alphabet,
    make_constellation,
)
from .analytics import OutageTargets  # noqa: F401
from .montecarlo import SimConfig, SweepResult, make_config, run_sweep  # noqa: F401
