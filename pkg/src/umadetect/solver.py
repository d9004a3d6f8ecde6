"""Three-block splitting solver for the decomposition M = X + Y + Z.

Minimizes ``||X||_* + tau ||Y||_1 - alpha <M, Y> + kappa/2 ||Y||_F^2`` subject
to ``X + Y + Z = P_omega(M)`` and ``||P_omega(Z)||_F <= delta`` by cycling a
noise-ball projection (Z), singular value thresholding (X), entrywise
shrinkage (Y), and a multiplier step, in that order.  The penalty parameter
``beta`` has two advisory upper bounds relative to ``kappa``: one for global
convergence of the iterates and a tighter one for the O(1/t) ergodic rate.
Runs outside those ranges are permitted but flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, NumericalError, ParameterError, StateError
from .matrixops import (
    ObservationMask,
    as_matrix,
    ball_project_z,
    project_omega,
    soft_threshold,
    svt,
    svt_with_values,
)

# beta < 2(sqrt(5) - 2) kappa guarantees convergence of the iterates;
# beta < (sqrt(33) - 5)/2 kappa additionally gives the O(1/t) ergodic rate.
BETA_CONVERGENCE_FACTOR = 2.0 * (math.sqrt(5.0) - 2.0)
BETA_RATE_FACTOR = (math.sqrt(33.0) - 5.0) / 2.0


@dataclass(frozen=True)
class SolverConfig:
    """Scalar parameters of one decomposition run.

    ``tau`` weighs the l1 term, ``alpha`` the rating/attack agreement term,
    ``kappa`` the Frobenius regularizer, ``beta`` the augmented-Lagrangian
    penalty, and ``delta`` the radius of the observed-noise ball.
    """

    tau: float
    alpha: float
    kappa: float
    beta: float
    delta: float
    tol_residual: float = 1e-6
    tol_change: float = 1e-6
    max_iters: int = 1000
    record_ergodic: bool = False

    def __post_init__(self) -> None:
        for name in ("tau", "kappa", "beta", "delta", "tol_residual", "tol_change"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be a positive finite real, got {value}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class BetaCheck:
    convergence_ok: bool
    rate_ok: bool


@dataclass
class SolverState:
    """Iterates after ``iteration`` completed steps (all zeros at start)."""

    low_rank: np.ndarray
    sparse: np.ndarray
    noise: np.ndarray
    multiplier: np.ndarray
    iteration: int = 0
    sparse_prev: np.ndarray | None = None


@dataclass
class Diagnostics:
    """Per-iteration monitors collected during a solve.

    ``residual_history[k]`` is the Frobenius norm of ``X + Y + Z - M`` after
    iteration k+1; ``change_history[k]`` is the squared-change sum
    ``||dY||_F^2 + ||dX||_F^2 + ||dLambda||_F^2``; ``objective_history`` tracks
    the objective value (monitored, not monotone). ``ergodic_residual_history``
    is present only when ergodic recording was enabled.
    """

    residual_history: list[float] = field(default_factory=list)
    change_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    ergodic_residual_history: list[float] | None = None
    beta_convergence_ok: bool = True
    beta_rate_ok: bool = True


@dataclass
class DecompositionResult:
    low_rank: np.ndarray
    sparse: np.ndarray
    noise: np.ndarray
    multiplier: np.ndarray
    diagnostics: Diagnostics
    converged: bool
    iterations_used: int


def default_config(m: int, n: int) -> SolverConfig:
    """Shape-derived defaults: tau = 10/sqrt(m), alpha = 10/m, kappa = tau,
    beta = tau/3, delta = sqrt(m n)/200."""
    if m < 1 or n < 1:
        raise ParameterError(f"matrix shape must be positive, got {m}x{n}")
    tau = 10.0 / math.sqrt(m)
    return SolverConfig(
        tau=tau,
        alpha=10.0 / m,
        kappa=tau,
        beta=tau / 3.0,
        delta=math.sqrt(m * n) / 200.0,
    )


def rpca_preset(m: int, n: int) -> SolverConfig:
    """Degenerate robust-PCA-like baseline: alpha = 0 and kappa shrunk to
    tau * 1e-3 (exactly zero would void the beta ranges and the sparse-step
    scale), with beta capped to stay inside the rate range."""
    base = default_config(m, n)
    kappa = base.tau * 1e-3
    return replace(base, alpha=0.0, kappa=kappa, beta=min(base.beta, 0.37 * kappa))


def validate_beta(config: SolverConfig) -> BetaCheck:
    """Advisory check of beta against both kappa-relative ranges."""
    return BetaCheck(
        convergence_ok=0.0 < config.beta < BETA_CONVERGENCE_FACTOR * config.kappa,
        rate_ok=0.0 < config.beta < BETA_RATE_FACTOR * config.kappa,
    )


def initial_state(m: int, n: int) -> SolverState:
    """All-zero start (Y = X = Lambda = 0; Z = 0 is immaterial, it is
    overwritten first in every iteration)."""
    zeros = np.zeros((m, n))
    return SolverState(
        low_rank=zeros.copy(),
        sparse=zeros.copy(),
        noise=zeros.copy(),
        multiplier=zeros.copy(),
        iteration=0,
        sparse_prev=zeros.copy(),
    )


def _check_finite(arr: np.ndarray, step_name: str, diagnostics=None) -> None:
    if not np.isfinite(arr).all():
        raise DivergenceError(
            f"non-finite values after {step_name}",
            step=step_name,
            diagnostics=diagnostics,
        )


def _step_arrays(x, y, z, lam, m_bar, mask, config, diagnostics=None):
    """One full Z -> X -> Y -> Lambda cycle on raw arrays.

    Returns the new iterates plus the primal residual and the nuclear norm of
    the new low-rank iterate (a byproduct of the thresholding step).
    """
    beta = config.beta
    lam_over_beta = lam / beta

    try:
        z_new = ball_project_z(lam_over_beta + m_bar - x - y, mask, config.delta)
    except NumericalError as exc:
        raise DivergenceError(
            f"noise-projection failed: {exc}", step="noise-projection",
            diagnostics=diagnostics,
        ) from exc
    _check_finite(z_new, "noise-projection", diagnostics)

    try:
        x_new, shrunk = svt_with_values(
            m_bar + lam_over_beta - y - z_new, 1.0 / beta, check=False
        )
    except NumericalError as exc:
        raise DivergenceError(
            f"low-rank-update failed: {exc}", step="low-rank-update",
            diagnostics=diagnostics,
        ) from exc
    _check_finite(x_new, "low-rank-update", diagnostics)
    x_nuclear = float(shrunk.sum())

    pre_shrink = ((config.alpha + beta) / beta) * m_bar + lam_over_beta - z_new - x_new
    y_new = soft_threshold(pre_shrink, config.tau / beta) * (beta / (beta + config.kappa))
    _check_finite(y_new, "sparse-update", diagnostics)

    residual = x_new + y_new + z_new - m_bar
    lam_new = lam - beta * residual
    _check_finite(lam_new, "multiplier-update", diagnostics)

    return z_new, x_new, y_new, lam_new, residual, x_nuclear


def step(
    state: SolverState,
    m_bar,
    mask: ObservationMask,
    config: SolverConfig,
) -> SolverState:
    """Advance one iteration; pure with respect to the input state.

    ``m_bar`` must be the observed matrix with off-mask entries exactly zero.
    """
    m_bar = as_matrix(m_bar, name="observed matrix")
    if state.low_rank.shape != m_bar.shape:
        raise ParameterError(
            f"state shape {state.low_rank.shape} does not match data {m_bar.shape}"
        )
    z_new, x_new, y_new, lam_new, _, _ = _step_arrays(
        state.low_rank, state.sparse, state.noise, state.multiplier, m_bar, mask, config
    )
    return SolverState(
        low_rank=x_new,
        sparse=y_new,
        noise=z_new,
        multiplier=lam_new,
        iteration=state.iteration + 1,
        sparse_prev=state.sparse.copy(),
    )


def solve(
    m_bar,
    mask: ObservationMask,
    config: SolverConfig | None = None,
    *,
    progress: Callable[[int, float], None] | None = None,
) -> DecompositionResult:
    """Run the full decomposition from the all-zero start.

    Stops when the relative primal residual ``||R||_F / (1 + ||M||_F)`` and
    the relative squared-change sum ``change / (1 + ||M||_F^2)`` both fall
    under their tolerances, or at ``max_iters``.  Off-mask entries of the
    input are zeroed defensively before iterating.

    Raises
    ------
    DivergenceError
        If any iterate or history value becomes non-finite; the partial
        diagnostics ride along on the exception.
    """
    m_bar = as_matrix(m_bar, name="observed matrix")
    if m_bar.shape != mask.shape:
        raise ParameterError(f"data shape {m_bar.shape} vs mask {mask.shape}")
    if config is None:
        config = default_config(*m_bar.shape)
    m_bar = project_omega(m_bar, mask)

    check = validate_beta(config)
    diagnostics = Diagnostics(
        ergodic_residual_history=[] if config.record_ergodic else None,
        beta_convergence_ok=check.convergence_ok,
        beta_rate_ok=check.rate_ok,
    )

    norm_m = float(np.linalg.norm(m_bar))
    x = np.zeros_like(m_bar)
    y = np.zeros_like(m_bar)
    z = np.zeros_like(m_bar)
    lam = np.zeros_like(m_bar)
    residual_sum = np.zeros_like(m_bar) if config.record_ergodic else None

    converged = False
    iterations = 0
    for k in range(1, config.max_iters + 1):
        z_new, x_new, y_new, lam_new, residual, x_nuclear = _step_arrays(
            x, y, z, lam, m_bar, mask, config, diagnostics
        )

        res_norm = float(np.linalg.norm(residual))
        change = float(
            np.vdot(y_new - y, y_new - y)
            + np.vdot(x_new - x, x_new - x)
            + np.vdot(lam_new - lam, lam_new - lam)
        )
        objective_value = (
            x_nuclear
            + config.tau * float(np.abs(y_new).sum())
            - config.alpha * float(np.vdot(m_bar, y_new))
            + 0.5 * config.kappa * float(np.vdot(y_new, y_new))
        )
        if not (math.isfinite(res_norm) and math.isfinite(change) and math.isfinite(objective_value)):
            raise DivergenceError(
                f"non-finite history value at iteration {k}",
                step="history",
                diagnostics=diagnostics,
            )
        diagnostics.residual_history.append(res_norm)
        diagnostics.change_history.append(change)
        diagnostics.objective_history.append(objective_value)
        if residual_sum is not None:
            residual_sum += residual
            diagnostics.ergodic_residual_history.append(
                float(np.linalg.norm(residual_sum)) / k
            )

        x, y, z, lam = x_new, y_new, z_new, lam_new
        iterations = k
        if progress is not None:
            progress(k, res_norm)

        if (
            res_norm / (1.0 + norm_m) <= config.tol_residual
            and change / (1.0 + norm_m * norm_m) <= config.tol_change
        ):
            converged = True
            break

    return DecompositionResult(
        low_rank=x,
        sparse=y,
        noise=z,
        multiplier=lam,
        diagnostics=diagnostics,
        converged=converged,
        iterations_used=iterations,
    )


def objective(state, m_bar, config: SolverConfig) -> float:
    """Objective value ``||X||_* + tau ||Y||_1 - alpha <M, Y> + kappa/2 ||Y||_F^2``.

    Accepts anything exposing ``low_rank`` and ``sparse`` arrays (a state or a
    result).  Monitored only; the method is not a descent method.
    """
    x = as_matrix(state.low_rank, name="low-rank part")
    y = as_matrix(state.sparse, name="sparse part")
    m_bar = as_matrix(m_bar, name="observed matrix")
    from .matrixops import nuclear_norm  # local import avoids cycle at module load

    return (
        nuclear_norm(x)
        + config.tau * float(np.abs(y).sum())
        - config.alpha * float(np.vdot(m_bar, y))
        + 0.5 * config.kappa * float(np.vdot(y, y))
    )


def ergodic_averages(result: DecompositionResult) -> Sequence[float]:
    """Per-t residual norms of the running iterate averages.

    Requires the solve to have run with ``record_ergodic`` enabled.
    """
    history = result.diagnostics.ergodic_residual_history
    if history is None:
        raise StateError("solve ran without ergodic recording enabled")
    return list(history)


def kkt_residuals(
    result: DecompositionResult,
    m_bar,
    mask: ObservationMask,
    config: SolverConfig,
) -> dict[str, float]:
    """Fixed-point residuals of the optimality system at the returned iterates.

    ``primal`` is the constraint violation; ``x_fix``, ``y_fix`` and ``z_fix``
    measure how far each block sits from its own proximal update evaluated at
    the final iterates.  All four vanish at an exact saddle point.
    """
    m_bar = project_omega(as_matrix(m_bar, name="observed matrix"), mask)
    x, y, z, lam = result.low_rank, result.sparse, result.noise, result.multiplier
    beta = config.beta
    lam_over_beta = lam / beta

    primal = float(np.linalg.norm(x + y + z - m_bar))
    x_fix = float(
        np.linalg.norm(x - svt(m_bar + lam_over_beta - y - z, 1.0 / beta))
    )
    y_target = soft_threshold(
        ((config.alpha + beta) / beta) * m_bar + lam_over_beta - z - x,
        config.tau / beta,
    ) * (beta / (beta + config.kappa))
    y_fix = float(np.linalg.norm(y - y_target))
    z_fix = float(
        np.linalg.norm(z - ball_project_z(lam_over_beta + m_bar - x - y, mask, config.delta))
    )
    return {"primal": primal, "x_fix": x_fix, "y_fix": y_fix, "z_fix": z_fix}


def diagnostics_summary(diagnostics: Diagnostics) -> dict:
    """Compact JSON-friendly digest of a diagnostics record."""
    summary = {
        "iterations": len(diagnostics.residual_history),
        "final_residual": diagnostics.residual_history[-1]
        if diagnostics.residual_history
        else None,
        "final_change": diagnostics.change_history[-1]
        if diagnostics.change_history
        else None,
        "final_objective": diagnostics.objective_history[-1]
        if diagnostics.objective_history
        else None,
        "beta_convergence_ok": diagnostics.beta_convergence_ok,
        "beta_rate_ok": diagnostics.beta_rate_ok,
    }
    if diagnostics.ergodic_residual_history is not None:
        summary["final_ergodic_residual"] = (
            diagnostics.ergodic_residual_history[-1]
            if diagnostics.ergodic_residual_history
            else None
        )
    return summary
