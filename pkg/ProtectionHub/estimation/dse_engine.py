"""
Windowed weighted-least-squares dynamic state estimation.

    x(v+1) = x(v) - (H'WH)^-1 H'W (h(x(v)) - z),   W = diag(1/sigma^2)

Normal equations are solved by Cholesky factorization after a condition check;
a rank-deficient gain matrix yields a non-converged result, never an exception.
"""
import functools
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.linalg

from ProtectionHub.estimation.chi_square import EstimationError, chi_square_value, confidence
from ProtectionHub.estimation.measurement_model import MeasurementModel, eval_h, jacobian
from ProtectionHub.utils.logging_utils import log_message

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10
RCOND_LIMIT = 1e-12


@dataclass(frozen=True)
class EstimationResult:
    x: np.ndarray
    converged: bool
    iterations: int
    objective: float
    zeta: float
    nu: int
    confidence: float
    residuals: np.ndarray
    normalized: np.ndarray
    row_ids: Tuple[str, ...]
    virtual: np.ndarray
    diagnostic: str = ""
    history: Tuple[float, ...] = field(default_factory=tuple)


def _gain(H, weights):
    """Cholesky factor of H'WH, or None when the matrix is numerically singular."""
    G = H.T @ (H * weights[:, None])
    eigenvalues = np.linalg.eigvalsh(G)
    if eigenvalues[-1] <= 0 or eigenvalues[0] / eigenvalues[-1] < RCOND_LIMIT:
        return None, f"gain matrix rank deficient (rcond {eigenvalues[0] / max(eigenvalues[-1], 1e-300):.2e})"
    try:
        return scipy.linalg.cho_factor(G, check_finite=False), ""
    except np.linalg.LinAlgError as e:
        return None, f"gain matrix not positive definite: {e}"


@functools.lru_cache(maxsize=512)
def _linear_gain(model: MeasurementModel):
    weights = 1.0 / model.sigma[model.active] ** 2
    H = model.H[model.active]
    factor, diagnostic = _gain(H, weights)
    return factor, diagnostic, H, weights


def _result(model, x, z, u, converged, iterations, diagnostic, history):
    sigma = model.sigma[model.active]
    residuals = eval_h(model, x, u) - z
    zeta = chi_square_value(residuals, sigma)
    nu = model.nu
    if not converged:
        c = 0.0
    else:
        c = confidence(zeta, nu)
    return EstimationResult(
        x=x,
        converged=converged,
        iterations=iterations,
        objective=zeta,
        zeta=zeta,
        nu=nu,
        confidence=c,
        residuals=residuals,
        normalized=np.abs(residuals) / sigma,
        row_ids=tuple(model.row_ids[i] for i in model.active),
        virtual=model.virtual[model.active],
        diagnostic=diagnostic,
        history=tuple(history),
    )


def wls_solve(model: MeasurementModel, z, x0=None, u=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    z = np.asarray(z, dtype=float)
    if z.shape != (model.m,):
        raise EstimationError(f"Measurement vector must have length {model.m}, got {z.shape}")
    if model.m < model.n:
        raise EstimationError(f"Underdetermined window: {model.m} rows for {model.n} states")
    if model.nu < 1:
        raise EstimationError("No measurement redundancy (nu = 0)")
    x = np.zeros(model.n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (model.n,):
        raise EstimationError(f"Initial state must have length {model.n}, got {x.shape}")

    sigma = model.sigma[model.active]
    history = [chi_square_value(eval_h(model, x, u) - z, sigma)]

    if model.is_linear:
        factor, diagnostic, H, weights = _linear_gain(model)
        if factor is None:
            log_message(f"DSE not solvable: {diagnostic}", level="DEBUG")
            return _result(model, x, z, u, False, 0, diagnostic, history)
        step = scipy.linalg.cho_solve(factor, H.T @ (weights * (eval_h(model, x, u) - z)), check_finite=False)
        x = x - step
        history.append(chi_square_value(eval_h(model, x, u) - z, sigma))
        return _result(model, x, z, u, True, 1, "", history)

    weights = 1.0 / sigma ** 2
    for iteration in range(1, max_iter + 1):
        H = jacobian(model, x)
        factor, diagnostic = _gain(H, weights)
        if factor is None:
            log_message(f"DSE not solvable at iteration {iteration}: {diagnostic}", level="DEBUG")
            return _result(model, x, z, u, False, iteration, diagnostic, history)
        step = scipy.linalg.cho_solve(factor, H.T @ (weights * (eval_h(model, x, u) - z)), check_finite=False)
        x = x - step
        history.append(chi_square_value(eval_h(model, x, u) - z, sigma))
        if np.max(np.abs(step)) < tol:
            return _result(model, x, z, u, True, iteration, "", history)
    return _result(model, x, z, u, False, max_iter, f"no convergence within {max_iter} iterations", history)


def chi_square_stat(model: MeasurementModel, z, x_hat, u=None):
    residuals = eval_h(model, x_hat, u) - np.asarray(z, dtype=float)
    return chi_square_value(residuals, model.sigma[model.active])


def normalized_residuals(result: EstimationResult):
    """(channel id, |r|/sigma) per measured channel, largest first; both samples fold into their maximum."""
    best = {}
    for row_id, value, is_virtual in zip(result.row_ids, result.normalized, result.virtual):
        if is_virtual:
            continue
        best[row_id] = max(best.get(row_id, 0.0), float(value))
    return sorted(best.items(), key=lambda item: (-item[1], item[0]))
