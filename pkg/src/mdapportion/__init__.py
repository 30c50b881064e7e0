"""Multidimensional proportional apportionment for electoral system design."""
from .divisor import dhondt, dhondt_bounded
from .errors import ApportionmentError
from .fairshare import FairShare, fair_share
from .lpcore import build_lp, certify_rounding, solve_lp, verify_kkt
from .methods import Method, MethodConfig, MethodResult, run_method
from .model import (
    Apportionment,
    Candidate,
    ElectionInstance,
    MarginalSpec,
    VoteTensor,
    aggregate,
    load_example,
    load_instance,
)
from .rounding import DeviationPolicy, approximate_apportionment, round_exact, round_guaranteed

__version__ = "0.1.0"

__all__ = [
    "Apportionment", "ApportionmentError", "Candidate", "DeviationPolicy", "ElectionInstance",
    "FairShare", "MarginalSpec", "Method", "MethodConfig", "MethodResult", "VoteTensor",
    "aggregate", "approximate_apportionment", "build_lp", "certify_rounding", "dhondt",
    "dhondt_bounded", "fair_share", "load_example", "load_instance", "round_exact",
    "round_guaranteed", "run_method", "solve_lp", "verify_kkt", "__version__",
]
