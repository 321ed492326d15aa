"""Multi-fidelity physics-informed neural surrogates for reliability analysis.

Train a network against an approximate governing equation, correct it with a
handful of high-fidelity observations by retraining only the last layers, and
push Monte Carlo samples through the result to estimate failure probabilities.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DomainError,
    EvaluationError,
    NumericalError,
)
from .jets import Jet2, JetCoords, jet_elementary, lift  # noqa: F401
from .network import (  # noqa: F401
    AnsatzSpec,
    Architecture,
    ParamSet,
    apply_ansatz,
    forward,
    forward_jet,
    mlp,
    xavier_init,
)
from .tape import GradRecord, Tape, TapedParams, Var, param_gradient  # noqa: F401
