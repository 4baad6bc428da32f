from .adversary import build_certified, certify_file, construct_instance, verify_conditions
from .base_algorithms import GPUCB, AlgoConfig, DoublingWrapper, SupKernelUCB, make_base
from .kernels import KernelSpec, matern_eval
from .metrics import Environment, KernelExpansion, estimate_exponent, run_episode, theory_exponents
from .model_selection import RBBE, Corral
from .regression import fit

__all__ = [
    "AlgoConfig",
    "Corral",
    "DoublingWrapper",
    "Environment",
    "GPUCB",
    "KernelExpansion",
    "KernelSpec",
    "RBBE",
    "SupKernelUCB",
    "build_certified",
    "certify_file",
    "construct_instance",
    "estimate_exponent",
    "fit",
    "make_base",
    "matern_eval",
    "run_episode",
    "theory_exponents",
    "verify_conditions",
]
