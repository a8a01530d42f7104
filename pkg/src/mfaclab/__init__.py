"""mfaclab: model-free adaptive control laboratory."""

from . import analysis, cli, controller, edlm, errors, kinematics, pathgen, plant

__all__ = ["analysis", "cli", "controller", "edlm", "errors", "kinematics", "pathgen", "plant"]
__version__ = "0.1.0"
