"""Built-in test problems and their structural constants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ProblemConfig
from .core import JumpDiffusionProblem, LinearTestParams
from .stability import ExactSolutionConstants, NonlinearConstants


def linear_test_problem(p: LinearTestParams, x0: float = 1.0,
                        horizon: float = 1.0) -> JumpDiffusionProblem:
    """``dX = aX dt + bX dW + cX dN`` with the drift split as ``u = ax``, ``v = 0``."""
    a, b, c = p.a, p.b, p.c
    return JumpDiffusionProblem(
        drift_u=lambda x: a * x,
        drift_v=lambda x: np.zeros_like(x),
        diffusion=lambda x: b * x[..., None],
        jump=lambda x: c * x,
        lam=p.lam,
        x0=np.array([x0]),
        horizon=horizon,
        drift_jacobian=lambda x: np.full(x.shape + (1,), a),
        name=f"linear(a={a}, b={b}, c={c}, lambda={p.lam})",
    )


@dataclass(frozen=True)
class Builtin:
    name: str
    config: ProblemConfig
    dts: tuple
    n_paths: int
    linear: Optional[LinearTestParams] = None
    nonlinear: Optional[NonlinearConstants] = None
    exact: Optional[ExactSolutionConstants] = None

    def problem(self) -> JumpDiffusionProblem:
        return self.config.to_problem()


LINEAR_PARAMS = LinearTestParams(a=-1.0, b=2.0, c=-0.9, lam=9.0)

# v(x) = -x^3 has beta = 1/4 (since <x-y, y^3-x^3> <= -|x-y|^4/4) and beta_bar = 1
NONLINEAR_CONSTANTS = NonlinearConstants(
    rho=0.12, K=0.12, beta=0.25, beta_bar=1.0, a_exp=3.0,
    theta=0.1, C=0.1, mu=0.1, lam=1.0,
)

BUILTINS = {
    "linear-test": Builtin(
        name="linear-test",
        config=ProblemConfig(
            lam=9.0, x0=(1.0,), horizon=1.0,
            drift_u="-1.0*x", drift_v="0*x", diffusion="2.0*x", jump="-0.9*x",
            name="linear-test",
        ),
        dts=(0.02, 0.01, 0.005),
        n_paths=5000,
        linear=LINEAR_PARAMS,
    ),
    "cubic-drift": Builtin(
        name="cubic-drift",
        config=ProblemConfig(
            lam=1.0, x0=(1.0,), horizon=2.0,
            drift_u="-0.12*x", drift_v="-x^3", diffusion="0.1*x", jump="-0.1*x",
            name="cubic-drift",
        ),
        dts=(0.04, 0.02, 0.01),
        n_paths=3000,
        nonlinear=NONLINEAR_CONSTANTS,
        exact=ExactSolutionConstants(mu_f=-0.12, sigma=0.01, gamma_h=0.01, lam=1.0),
    ),
}

# legacy selector names kept for command-line compatibility
ALIASES = {"linear-sec4": "linear-test", "nonlinear-sec4": "cubic-drift"}


def builtin_name(selector: str) -> Optional[str]:
    """Canonical builtin name for ``selector``, or None if it is not one."""
    name = ALIASES.get(selector, selector)
    return name if name in BUILTINS else None
