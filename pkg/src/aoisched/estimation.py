"""Remote-estimation cost model.

Each device observes a linear time-invariant process through a noisy sensor
and pre-filters locally; the destination's estimation error covariance after
``tau`` missed updates is ``f^tau(pbar)`` with ``f(X) = A X A^T + W`` and
``pbar`` the local filter's steady-state error covariance.  The per-device
cost of staleness is the trace of that matrix, a positive non-decreasing
function of the age of information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RiccatiConvergenceError(RuntimeError):
    """Steady-state covariance iteration did not converge within max_iter."""


class ProcessGenerationError(RuntimeError):
    """Random process generation exhausted its retry budget."""


RICCATI_TOL = 1e-9
RICCATI_MAX_ITER = 100_000


def _symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def _check_symmetric_psd(mat: np.ndarray, name: str, strict: bool = False) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(_symmetrize(mat))
    lo = eigs.min()
    if strict and lo <= 0:
        raise ValueError(f"{name} must be positive definite (min eig {lo:g})")
    if not strict and lo < -1e-10:
        raise ValueError(f"{name} must be positive semidefinite (min eig {lo:g})")


@dataclass(frozen=True)
class LtiProcess:
    """One device's process/measurement model (A, C, W, V).

    A is l x l, C is c x l; W (process noise cov) is symmetric PSD, V
    (measurement noise cov) is symmetric PD.  Immutable after construction.
    """

    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        C = np.atleast_2d(np.array(self.C, dtype=float))
        W = np.array(self.W, dtype=float)
        V = np.atleast_2d(np.array(self.V, dtype=float))
        l = A.shape[0]
        if A.shape != (l, l):
            raise ValueError(f"A must be square, got {A.shape}")
        if C.shape[1] != l:
            raise ValueError(f"C has {C.shape[1]} columns, expected {l}")
        c = C.shape[0]
        if W.shape != (l, l):
            raise ValueError(f"W must be {l}x{l}, got {W.shape}")
        if V.shape != (c, c):
            raise ValueError(f"V must be {c}x{c}, got {V.shape}")
        _check_symmetric_psd(W, "W")
        _check_symmetric_psd(V, "V", strict=True)
        for name, arr in (("A", A), ("C", C), ("W", W), ("V", V)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def meas_dim(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "W": self.W.tolist(),
            "V": self.V.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LtiProcess":
        return cls(
            A=np.array(d["A"], dtype=float),
            C=np.array(d["C"], dtype=float),
            W=np.array(d["W"], dtype=float),
            V=np.array(d["V"], dtype=float),
        )


def propagate_cov(proc: LtiProcess, X: np.ndarray) -> np.ndarray:
    """One open-loop covariance step: A X A^T + W (output symmetrized)."""
    X = np.asarray(X, dtype=float)
    l = proc.state_dim
    if X.shape != (l, l):
        raise ValueError(f"X must be {l}x{l}, got {X.shape}")
    if not np.allclose(X, X.T, atol=1e-8):
        raise ValueError("X must be symmetric")
    return _symmetrize(proc.A @ X @ proc.A.T + proc.W)


def steady_state_error_cov(
    proc: LtiProcess,
    tol: float = RICCATI_TOL,
    max_iter: int = RICCATI_MAX_ITER,
) -> np.ndarray:
    """Steady-state posterior error covariance of the device's Kalman filter.

    Iterates the predict-then-update Riccati map from W until the max-abs
    elementwise change drops below tol.  Raises RiccatiConvergenceError if
    the iteration does not settle within max_iter sweeps (callers typically
    regenerate the random system).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    A, C, W, V = proc.A, proc.C, proc.W, proc.V
    P = W.copy()
    for _ in range(max_iter):
        P_pred = _symmetrize(A @ P @ A.T + W)
        S = C @ P_pred @ C.T + V
        # K = P_pred C^T S^{-1}; S and P_pred symmetric
        K = np.linalg.solve(S, C @ P_pred).T
        P_next = _symmetrize(P_pred - K @ C @ P_pred)
        if np.max(np.abs(P_next - P)) < tol:
            return P_next
        P = P_next
    raise RiccatiConvergenceError(
        f"Riccati iteration did not converge in {max_iter} sweeps (tol={tol:g})"
    )


@dataclass(frozen=True)
class CostModel:
    """Tabulated staleness cost g(tau) = trace(f^tau(pbar)) for tau in 1..tau_max.

    The table is built by iterating the open-loop covariance map, so lookups
    agree bit-for-bit with the recursion.  For tau beyond tau_max the cost
    clamps at g(tau_max), which preserves non-decreasingness.
    """

    pbar: np.ndarray
    tau_max: int
    table: np.ndarray

    def __post_init__(self):
        pbar = np.array(self.pbar, dtype=float)
        table = np.array(self.table, dtype=float)
        if self.tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        if table.shape != (self.tau_max,):
            raise ValueError(
                f"cost table must have length tau_max={self.tau_max}, got {table.shape}"
            )
        if not np.all(table > 0):
            raise ValueError("costs must be strictly positive")
        if np.any(np.diff(table) < 0):
            raise ValueError("costs must be non-decreasing in tau")
        pbar.setflags(write=False)
        table.setflags(write=False)
        object.__setattr__(self, "pbar", pbar)
        object.__setattr__(self, "table", table)

    @classmethod
    def from_process(cls, proc: LtiProcess, tau_max: int) -> "CostModel":
        pbar = steady_state_error_cov(proc)
        table = np.empty(tau_max)
        X = pbar
        for t in range(tau_max):
            X = propagate_cov(proc, X)
            table[t] = np.trace(X)
        return cls(pbar=pbar, tau_max=tau_max, table=table)

    @classmethod
    def from_table(cls, table, pbar=None) -> "CostModel":
        """Build directly from an explicit cost table (oracle/test instances)."""
        table = np.asarray(table, dtype=float)
        if pbar is None:
            pbar = np.zeros((1, 1))
        return cls(pbar=np.asarray(pbar, dtype=float), tau_max=len(table), table=table)


def aoi_cost(model: CostModel, tau: int) -> float:
    """Cost of age tau; clamps at g(tau_max) for tau > tau_max."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    return float(model.table[min(tau, model.tau_max) - 1])


def _scaled_rotation(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Matrix with spectral radius exactly `radius`.

    dim 2 uses a random rotation scaled by radius (complex eigenvalue pair of
    modulus radius); other dims rescale a Gaussian matrix by its own radius.
    """
    if dim == 1:
        return np.array([[radius]])
    if dim == 2:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        rot = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        return radius * rot
    raw = rng.normal(size=(dim, dim))
    rho = np.max(np.abs(np.linalg.eigvals(raw)))
    return radius / rho * raw


def sample_process(
    rng: np.random.Generator,
    state_dim: int = 2,
    meas_dim: int = 1,
    spectral_range: tuple[float, float] = (1.0, 1.3),
    max_retries: int = 100,
) -> LtiProcess:
    """Random device process: spectral radius uniform in spectral_range,
    C entries uniform(0,1), W = V = I.

    Regenerates until the steady-state covariance iteration converges.
    """
    lo, hi = spectral_range
    if not (0 < lo <= hi):
        raise ValueError(f"invalid spectral range ({lo}, {hi})")
    for _ in range(max_retries):
        radius = rng.uniform(lo, hi)
        A = _scaled_rotation(rng, state_dim, radius)
        C = rng.uniform(0.0, 1.0, size=(meas_dim, state_dim))
        proc = LtiProcess(A=A, C=C, W=np.eye(state_dim), V=np.eye(meas_dim))
        try:
            steady_state_error_cov(proc)
        except RiccatiConvergenceError:
            continue
        return proc
    raise ProcessGenerationError(
        f"no convergent system found in {max_retries} attempts"
    )
